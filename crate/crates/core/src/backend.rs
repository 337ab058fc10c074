//! Backend dispatch: the same feature extraction and matching through the
//! floating-point reference or the fixed-point streaming model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fp_enhance::{binarize_real, estimate_orientation, normalize, oriented_filter_real, IntensityMap, OrientationField};
use crate::fp_match::{match_fingerprint_with, FloatPolar};
use crate::fp_minutiae::{extract_minutiae, thin, MinutiaeSet};
use crate::hwmodel::fingerprint::hw_fingerprint;
use crate::hwmodel::iris::hw_iris;
use crate::hwmodel::{CordicPolar, PipelineRun};
use crate::iris_code::{bitplane_slice, enhance, hamming, IrisCode, IrisScore};
use crate::iris_segment::{detect_pupil, find_limbic, unwrap, PupilCircle, UnwrappedIris};
use crate::raster::GrayImage;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    #[default]
    Reference,
    HardwareModel,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Reference => "reference",
            Backend::HardwareModel => "hardware-model",
        })
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reference" | "ref" => Ok(Backend::Reference),
            "hardware-model" | "hw" | "hwmodel" => Ok(Backend::HardwareModel),
            _ => Err(Error::Config(format!("unknown backend `{s}` (reference | hardware-model)"))),
        }
    }
}

/// Intermediate and final fingerprint features, kept for debug dumps.
#[derive(Clone, Debug)]
pub struct FingerprintTrace {
    pub normalized: GrayImage,
    pub field: OrientationField,
    pub filtered: GrayImage,
    pub binary: GrayImage,
    pub skeleton: GrayImage,
    pub minutiae: MinutiaeSet,
    pub run: Option<PipelineRun>,
}

#[derive(Clone, Debug)]
pub struct IrisTrace {
    pub pupil: PupilCircle,
    pub unwrapped: UnwrappedIris,
    /// Enhanced samples over the full unwrap; rows past the limbic row are 0.
    pub enhanced: GrayImage,
    pub code: IrisCode,
    pub run: Option<PipelineRun>,
}

fn padded(rows: usize, cols: usize, values: &[u8]) -> GrayImage {
    let mut px = values.to_vec();
    px.resize(rows * cols, 0);
    GrayImage::new(cols, rows, px).expect("non-empty unwrap")
}

pub fn fingerprint_trace(image: &GrayImage, cfg: &RunConfig, backend: Backend) -> Result<FingerprintTrace> {
    if image.width() < 3 || image.height() < 3 {
        return Err(Error::InvalidImage(format!(
            "fingerprint {}x{} is smaller than 3x3",
            image.width(),
            image.height()
        )));
    }
    match backend {
        Backend::Reference => {
            let p = &cfg.filter;
            let n = normalize(image, p);
            let field = estimate_orientation(&n, p);
            let filtered = oriented_filter_real(&n, &field, p);
            let binary = binarize_real(&filtered);
            let skeleton = thin(&binary);
            let minutiae = extract_minutiae(&skeleton, &field, cfg.border_margin);
            Ok(FingerprintTrace {
                normalized: IntensityMap::of(&n.values).apply_image(&n.values),
                filtered: IntensityMap::of(&filtered).apply_image(&filtered),
                field,
                binary,
                skeleton,
                minutiae,
                run: None,
            })
        }
        Backend::HardwareModel => {
            let hw = hw_fingerprint(image, &cfg.filter, &cfg.hw, cfg.border_margin)?;
            Ok(FingerprintTrace {
                normalized: hw.normalized,
                field: hw.field,
                filtered: hw.filtered,
                binary: hw.binary,
                skeleton: hw.skeleton,
                minutiae: hw.minutiae,
                run: Some(hw.run),
            })
        }
    }
}

pub fn fingerprint_features(image: &GrayImage, cfg: &RunConfig, backend: Backend) -> Result<MinutiaeSet> {
    Ok(fingerprint_trace(image, cfg, backend)
        .map_err(|e| e.in_stage("fingerprint"))?
        .minutiae)
}

pub fn iris_trace(eye: &GrayImage, cfg: &RunConfig, backend: Backend) -> Result<IrisTrace> {
    let p = &cfg.segment;
    match backend {
        Backend::Reference => {
            let pupil = detect_pupil(eye, p).map_err(|e| e.in_stage("pupil"))?;
            let mut u = unwrap(eye, &pupil, p).map_err(|e| e.in_stage("unwrap"))?;
            find_limbic(&mut u, p.limbic_smoothing);
            let e = enhance(&u, cfg.iris.sigma1);
            let code = bitplane_slice(&e);
            Ok(IrisTrace {
                pupil,
                enhanced: padded(u.rows, u.cols, &e.values),
                unwrapped: u,
                code,
                run: None,
            })
        }
        Backend::HardwareModel => {
            let hw = hw_iris(eye, p, cfg.iris.sigma1, &cfg.hw)?;
            Ok(IrisTrace {
                pupil: hw.pupil,
                unwrapped: hw.unwrapped,
                enhanced: hw.enhanced,
                code: hw.code,
                run: Some(hw.run),
            })
        }
    }
}

pub fn iris_features(eye: &GrayImage, cfg: &RunConfig, backend: Backend) -> Result<IrisCode> {
    Ok(iris_trace(eye, cfg, backend).map_err(|e| e.in_stage("iris"))?.code)
}

/// Fingerprint similarity; the hardware model converts to polar with CORDIC.
pub fn match_fingerprints(probe: &MinutiaeSet, template: &MinutiaeSet, cfg: &RunConfig, backend: Backend) -> f64 {
    match backend {
        Backend::Reference => match_fingerprint_with(probe, template, &cfg.tolerances, &FloatPolar),
        Backend::HardwareModel => match_fingerprint_with(
            probe,
            template,
            &cfg.tolerances,
            &CordicPolar::new(cfg.hw.cordic_iterations),
        ),
    }
}

pub fn match_irises(probe: &IrisCode, template: &IrisCode, cfg: &RunConfig) -> Result<IrisScore> {
    hamming(probe, template, cfg.iris.rotations)
}
