//! Run configuration: every tunable, read from flat `module.key = value`
//! text. Blank lines and `#` comments are ignored; unknown keys are errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::error::{Error, Result};
use crate::fp_enhance::FilterParams;
use crate::fp_match::ElasticTolerances;
use crate::fp_minutiae::DEFAULT_BORDER_MARGIN;
use crate::fusion::{Bounds, FusionParams, Normalization};
use crate::hwmodel::{ContrastEstimator, ExecMode, HwParams};
use crate::iris_segment::SegmentParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrisCodeParams {
    pub sigma1: f64,
    pub rotations: usize,
}

impl Default for IrisCodeParams {
    fn default() -> Self {
        Self {
            sigma1: 4.0,
            rotations: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnessParams {
    /// Iris images combined by majority vote at enrollment (odd, >= 3).
    pub enroll_iris: usize,
    /// Fingerprint impressions used at enrollment (the first ones).
    pub enroll_fp: usize,
    pub sweep_points: usize,
}

impl Default for HarnessParams {
    fn default() -> Self {
        Self {
            enroll_iris: 3,
            enroll_fp: 1,
            sweep_points: 201,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub backend: Backend,
    pub dataset: Option<PathBuf>,
    pub filter: FilterParams,
    pub border_margin: usize,
    pub tolerances: ElasticTolerances,
    pub segment: SegmentParams,
    pub iris: IrisCodeParams,
    pub fusion: FusionParams,
    pub hw: HwParams,
    pub harness: HarnessParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Reference,
            dataset: None,
            filter: FilterParams::default(),
            border_margin: DEFAULT_BORDER_MARGIN,
            tolerances: ElasticTolerances::default(),
            segment: SegmentParams::default(),
            iris: IrisCodeParams::default(),
            fusion: FusionParams::default(),
            hw: HwParams::default(),
            harness: HarnessParams::default(),
        }
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{value}`")))
}

fn bounds_mut(n: &mut Normalization) -> (&mut Bounds, &mut Bounds) {
    if let Normalization::None = n {
        *n = Normalization::MinMax {
            fingerprint: Bounds::default(),
            iris: Bounds::default(),
        };
    }
    match n {
        Normalization::MinMax { fingerprint, iris } => (fingerprint, iris),
        Normalization::None => unreachable!(),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `module.key = value`", n + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, e.to_string().trim_start_matches("config: "))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Sets one key. Angles in `fp_match` are given in degrees.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let f = &mut self.filter;
        let s = &mut self.segment;
        let t = &mut self.tolerances;
        match key {
            "run.backend" => self.backend = v.parse()?,
            "run.dataset" => self.dataset = Some(PathBuf::from(v)),
            "fp_enhance.sigma_x" => f.sigma_x = num(key, v)?,
            "fp_enhance.sigma_y" => f.sigma_y = num(key, v)?,
            "fp_enhance.window_length" => f.window_length = num(key, v)?,
            "fp_enhance.c" => f.c = num(key, v)?,
            "fp_enhance.sigma_grad" => f.sigma_grad = num(key, v)?,
            "fp_enhance.sigma_cov" => f.sigma_cov = num(key, v)?,
            "fp_enhance.sigma_angle" => f.sigma_angle = num(key, v)?,
            "fp_enhance.stats_sigma" => f.stats_sigma = num(key, v)?,
            "fp_minutiae.border_margin" => self.border_margin = num(key, v)?,
            "fp_match.delta_r" => t.delta_r = num(key, v)?,
            "fp_match.delta_theta_deg" => t.delta_theta = num::<f64>(key, v)?.to_radians(),
            "fp_match.delta_o_deg" => t.delta_o = num::<f64>(key, v)?.to_radians(),
            "fp_match.growth_per_100px" => t.growth_per_100px = num(key, v)?,
            "iris_segment.pupil_sigma" => s.pupil_sigma = num(key, v)?,
            "iris_segment.min_area" => s.min_area = num(key, v)?,
            "iris_segment.max_area_fraction" => s.max_area_fraction = num(key, v)?,
            "iris_segment.max_eccentricity" => s.max_eccentricity = num(key, v)?,
            "iris_segment.radial_samples" => s.radial_samples = num(key, v)?,
            "iris_segment.angular_samples" => s.angular_samples = num(key, v)?,
            "iris_segment.outer_multiple" => s.outer_multiple = num(key, v)?,
            "iris_segment.limbic_smoothing" => s.limbic_smoothing = num(key, v)?,
            "iris_code.sigma1" => self.iris.sigma1 = num(key, v)?,
            "iris_code.rotations" => self.iris.rotations = num(key, v)?,
            "fusion.w_fp" => self.fusion.w_fp = num(key, v)?,
            "fusion.w_iris" => self.fusion.w_iris = num(key, v)?,
            "fusion.threshold" => self.fusion.threshold = num(key, v)?,
            "fusion.normalization" => match v {
                "none" => self.fusion.normalization = Normalization::None,
                "min-max" => {
                    bounds_mut(&mut self.fusion.normalization);
                }
                _ => return Err(Error::Config(format!("{key}: expected none or min-max, got `{v}`"))),
            },
            "fusion.fp_lo" => bounds_mut(&mut self.fusion.normalization).0.lo = num(key, v)?,
            "fusion.fp_hi" => bounds_mut(&mut self.fusion.normalization).0.hi = num(key, v)?,
            "fusion.iris_lo" => bounds_mut(&mut self.fusion.normalization).1.lo = num(key, v)?,
            "fusion.iris_hi" => bounds_mut(&mut self.fusion.normalization).1.hi = num(key, v)?,
            "hwmodel.cordic_iterations" => self.hw.cordic_iterations = num(key, v)?,
            "hwmodel.queue_rows" => self.hw.queue_rows = num(key, v)?,
            "hwmodel.exec" => {
                self.hw.exec = match v {
                    "pipelined" => ExecMode::Pipelined,
                    "sequential" => ExecMode::Sequential,
                    _ => return Err(Error::Config(format!("{key}: expected pipelined or sequential, got `{v}`"))),
                }
            }
            "hwmodel.contrast" => {
                self.hw.contrast = match v {
                    "rms" => ContrastEstimator::Rms,
                    "power-law" => ContrastEstimator::power_law(),
                    _ => return Err(Error::Config(format!("{key}: expected rms or power-law, got `{v}`"))),
                }
            }
            "hwmodel.gamma" | "hwmodel.clip_lo" | "hwmodel.clip_hi" => {
                let ContrastEstimator::PowerLaw { gamma, clip_lo, clip_hi } = &mut self.hw.contrast else {
                    return Err(Error::Config(format!("{key} needs hwmodel.contrast = power-law first")));
                };
                match key {
                    "hwmodel.gamma" => *gamma = num(key, v)?,
                    "hwmodel.clip_lo" => *clip_lo = num(key, v)?,
                    _ => *clip_hi = num(key, v)?,
                }
            }
            "harness.enroll_iris" => self.harness.enroll_iris = num(key, v)?,
            "harness.enroll_fp" => self.harness.enroll_fp = num(key, v)?,
            "harness.sweep_points" => self.harness.sweep_points = num(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.filter.validate().map_err(Error::Config)?;
        self.tolerances.validate().map_err(Error::Config)?;
        self.segment.validate().map_err(Error::Config)?;
        self.fusion.validate()?;
        if !(self.iris.sigma1 > 0.0) {
            return Err(Error::Config("iris_code.sigma1 must be positive".into()));
        }
        if self.iris.rotations >= self.segment.angular_samples {
            return Err(Error::Config("iris_code.rotations must be below the angular sample count".into()));
        }
        let h = &self.harness;
        if h.enroll_iris < 3 || h.enroll_iris.is_multiple_of(2) {
            return Err(Error::Config("harness.enroll_iris must be odd and >= 3".into()));
        }
        if h.enroll_fp == 0 || h.sweep_points < 2 {
            return Err(Error::Config("harness.enroll_fp >= 1 and harness.sweep_points >= 2 required".into()));
        }
        if !(1..=crate::hwmodel::cordic::MAX_ITERATIONS).contains(&self.hw.cordic_iterations) || self.hw.queue_rows == 0 {
            return Err(Error::Config("hwmodel.cordic_iterations or hwmodel.queue_rows out of range".into()));
        }
        if let ContrastEstimator::PowerLaw { gamma, clip_lo, clip_hi } = self.hw.contrast {
            if !(gamma > 0.0) || clip_lo == 0 || clip_lo > clip_hi {
                return Err(Error::Config("power-law contrast needs gamma > 0 and 0 < clip_lo <= clip_hi".into()));
            }
        }
        Ok(())
    }

    /// Canonical text form; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let mut o = String::new();
        let f = &self.filter;
        let t = &self.tolerances;
        let s = &self.segment;
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(o, "{k} = {v}");
        };
        kv("run.backend", &self.backend);
        if let Some(d) = &self.dataset {
            kv("run.dataset", &d.display());
        }
        kv("fp_enhance.sigma_x", &f.sigma_x);
        kv("fp_enhance.sigma_y", &f.sigma_y);
        kv("fp_enhance.window_length", &f.window_length);
        kv("fp_enhance.c", &f.c);
        kv("fp_enhance.sigma_grad", &f.sigma_grad);
        kv("fp_enhance.sigma_cov", &f.sigma_cov);
        kv("fp_enhance.sigma_angle", &f.sigma_angle);
        kv("fp_enhance.stats_sigma", &f.stats_sigma);
        kv("fp_minutiae.border_margin", &self.border_margin);
        kv("fp_match.delta_r", &t.delta_r);
        let deg = |r: f64| (r.to_degrees() * 1e9).round() / 1e9;
        kv("fp_match.delta_theta_deg", &deg(t.delta_theta));
        kv("fp_match.delta_o_deg", &deg(t.delta_o));
        kv("fp_match.growth_per_100px", &t.growth_per_100px);
        kv("iris_segment.pupil_sigma", &s.pupil_sigma);
        kv("iris_segment.min_area", &s.min_area);
        kv("iris_segment.max_area_fraction", &s.max_area_fraction);
        kv("iris_segment.max_eccentricity", &s.max_eccentricity);
        kv("iris_segment.radial_samples", &s.radial_samples);
        kv("iris_segment.angular_samples", &s.angular_samples);
        kv("iris_segment.outer_multiple", &s.outer_multiple);
        kv("iris_segment.limbic_smoothing", &s.limbic_smoothing);
        kv("iris_code.sigma1", &self.iris.sigma1);
        kv("iris_code.rotations", &self.iris.rotations);
        kv("fusion.w_fp", &self.fusion.w_fp);
        kv("fusion.w_iris", &self.fusion.w_iris);
        kv("fusion.threshold", &self.fusion.threshold);
        match self.fusion.normalization {
            Normalization::None => kv("fusion.normalization", &"none"),
            Normalization::MinMax { fingerprint, iris } => {
                kv("fusion.normalization", &"min-max");
                kv("fusion.fp_lo", &fingerprint.lo);
                kv("fusion.fp_hi", &fingerprint.hi);
                kv("fusion.iris_lo", &iris.lo);
                kv("fusion.iris_hi", &iris.hi);
            }
        }
        kv("hwmodel.cordic_iterations", &self.hw.cordic_iterations);
        kv("hwmodel.queue_rows", &self.hw.queue_rows);
        kv(
            "hwmodel.exec",
            &match self.hw.exec {
                ExecMode::Pipelined => "pipelined",
                ExecMode::Sequential => "sequential",
            },
        );
        match self.hw.contrast {
            ContrastEstimator::Rms => kv("hwmodel.contrast", &"rms"),
            ContrastEstimator::PowerLaw { gamma, clip_lo, clip_hi } => {
                kv("hwmodel.contrast", &"power-law");
                kv("hwmodel.gamma", &gamma);
                kv("hwmodel.clip_lo", &clip_lo);
                kv("hwmodel.clip_hi", &clip_hi);
            }
        }
        kv("harness.enroll_iris", &self.harness.enroll_iris);
        kv("harness.enroll_fp", &self.harness.enroll_fp);
        kv("harness.sweep_points", &self.harness.sweep_points);
        o
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let err = RunConfig::parse("fusion.w_fp = 0.4\nfp_enhance.sigmax = 3\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(err.to_string().contains("sigmax"), "{err}");
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.backend = Backend::HardwareModel;
        cfg.hw.contrast = ContrastEstimator::power_law();
        cfg.fusion.normalization = Normalization::MinMax {
            fingerprint: Bounds { lo: 0.1, hi: 0.9 },
            iris: Bounds { lo: 0.4, hi: 0.8 },
        };
        cfg.tolerances.delta_o = 12f64.to_radians();
        let back = RunConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back.to_text(), cfg.to_text());
        assert_eq!(back.backend, Backend::HardwareModel);
        assert!((back.tolerances.delta_o - cfg.tolerances.delta_o).abs() < 1e-12);
    }

    #[test]
    fn comments_and_invalid_values() {
        let cfg = RunConfig::parse("# weights\nfusion.w_fp = 0.5 # even\nfusion.w_iris = 0.5\n").unwrap();
        assert_eq!(cfg.fusion.w_fp, 0.5);
        assert!(RunConfig::parse("fusion.w_fp = 0.7\n").is_err());
        assert!(RunConfig::parse("harness.enroll_iris = 4\n").is_err());
        assert!(RunConfig::parse("fusion.threshold\n").is_err());
    }
}
