//! Fixed-point iris enhancement over streamed rows of the unwrapped iris:
//! `128 + 128 * detail / contrast`, clamped to 8 bits.

use serde::{Deserialize, Serialize};

use super::fixed::{div_round, isqrt, round_shift};
use super::line_buffer::{IntKernel, LineBuffer};
use crate::iris_code::{EnhancedIris, Provenance, CONTRAST_FLOOR};
use crate::iris_segment::UnwrappedIris;
use crate::raster::Border;

/// Fraction bits of the detail and contrast intermediates.
pub const DETAIL_FRAC: u32 = 16;
const KERNEL_FRAC: u32 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
#[derive(Default)]
pub enum ContrastEstimator {
    /// Square root of the local mean of `detail^2`, as in the reference.
    #[default]
    Rms,
    /// Power law of the local mean `|detail|` through a 256-entry table,
    /// clipped to `[clip_lo, clip_hi]`; output uses truncating division.
    PowerLaw { gamma: f64, clip_lo: u8, clip_hi: u8 },
}


impl ContrastEstimator {
    pub fn power_law() -> Self {
        ContrastEstimator::PowerLaw {
            gamma: 0.75,
            clip_lo: 50,
            clip_hi: 255,
        }
    }
}

/// `255 * (i / 255)^gamma`, rounded, then clipped.
pub fn gamma_table(gamma: f64, clip_lo: u8, clip_hi: u8) -> [u8; 256] {
    std::array::from_fn(|i| {
        let v = (255.0 * (i as f64 / 255.0).powf(gamma)).round();
        v.clamp(f64::from(clip_lo), f64::from(clip_hi)) as u8
    })
}

struct InRow {
    x: Vec<i64>,
    h: Vec<i64>,
    valid: Vec<bool>,
}

struct DetailRow {
    d: Vec<i64>,
    e: Vec<i64>,
    valid: Vec<bool>,
}

enum Contrast {
    Rms,
    Table([u8; 256]),
}

struct Core {
    mean_k: IntKernel,
    energy_k: IntKernel,
    contrast: Contrast,
}

impl Core {
    fn detail_row(&self, window: &[&InRow]) -> DetailRow {
        let hs: Vec<&Vec<i64>> = window.iter().map(|r| &r.h).collect();
        let mean = self.mean_k.filter_window(&hs);
        let centre = window[window.len() / 2];
        // x * 2^32 - mean, reduced to DETAIL_FRAC fraction bits
        let d: Vec<i64> = centre
            .x
            .iter()
            .zip(&mean)
            .map(|(&x, &m)| round_shift((x << (2 * KERNEL_FRAC)) - m, 2 * KERNEL_FRAC - DETAIL_FRAC))
            .collect();
        let local: Vec<i64> = match self.contrast {
            Contrast::Rms => d.iter().map(|&v| round_shift(v * v, DETAIL_FRAC)).collect(),
            Contrast::Table(_) => d.iter().map(|&v| v.abs()).collect(),
        };
        let e = self
            .energy_k
            .filter_row(&local, Border::Wrap)
            .into_iter()
            .map(|v| round_shift(v, KERNEL_FRAC))
            .collect();
        DetailRow {
            d,
            e,
            valid: centre.valid.clone(),
        }
    }

    fn output_row(&self, window: &[&DetailRow]) -> (Vec<u8>, Vec<bool>) {
        let es: Vec<&Vec<i64>> = window.iter().map(|r| &r.e).collect();
        let energy = self.energy_k.filter_window_shifted(&es);
        let centre = window[window.len() / 2];
        let values = centre
            .d
            .iter()
            .zip(&energy)
            .map(|(&d, &e)| match &self.contrast {
                Contrast::Rms => rms_pixel(d, e),
                Contrast::Table(lut) => power_law_pixel(d, e, lut),
            })
            .collect();
        (values, centre.valid.clone())
    }
}

/// Output for detail `d` and local mean square `e`, both with
/// `DETAIL_FRAC` fraction bits.
pub fn rms_pixel(d: i64, e: i64) -> u8 {
    let floor = (CONTRAST_FLOOR * f64::from(1u32 << DETAIL_FRAC)) as i64;
    let c = (isqrt((e.max(0) as u64) << DETAIL_FRAC) as i64).max(floor);
    (128 + div_round(128 * d, c)).clamp(0, 255) as u8
}

/// Output for detail `d` and local mean `|d|` `a`, both with `DETAIL_FRAC`
/// fraction bits: contrast from the table, then truncating division.
pub fn power_law_pixel(d: i64, a: i64, lut: &[u8; 256]) -> u8 {
    let avg = round_shift(a, DETAIL_FRAC).clamp(0, 255) as usize;
    let c = i64::from(lut[avg]).max(1);
    (128 + 128 * round_shift(d, DETAIL_FRAC) / c).clamp(0, 255) as u8
}

pub type EnhancedRow = (Vec<u8>, Vec<bool>);

/// Row-streaming enhancement; both line buffers replicate at the top and
/// bottom rows and wrap around the angular axis.
pub struct EnhanceStream {
    core: Core,
    stage1: LineBuffer<InRow>,
    stage2: LineBuffer<DetailRow>,
}

impl EnhanceStream {
    pub fn new(sigma1: f64, estimator: ContrastEstimator) -> Self {
        let mean_k = IntKernel::gaussian(sigma1, KERNEL_FRAC);
        let energy_k = IntKernel::gaussian(sigma1 / 2.0, KERNEL_FRAC);
        let contrast = match estimator {
            ContrastEstimator::Rms => Contrast::Rms,
            ContrastEstimator::PowerLaw { gamma, clip_lo, clip_hi } => {
                Contrast::Table(gamma_table(gamma, clip_lo, clip_hi))
            }
        };
        Self {
            stage1: LineBuffer::new(mean_k.radius()),
            stage2: LineBuffer::new(energy_k.radius()),
            core: Core {
                mean_k,
                energy_k,
                contrast,
            },
        }
    }

    /// Accepts one unwrapped row (8-bit samples and validity) and returns
    /// the enhanced rows completed by it.
    pub fn push(&mut self, values: &[u8], valid: &[bool]) -> Vec<EnhancedRow> {
        let x: Vec<i64> = values.iter().map(|&v| i64::from(v)).collect();
        let h = self.core.mean_k.filter_row(&x, Border::Wrap);
        let core = &self.core;
        let mut ready = Vec::new();
        self.stage1.push(
            InRow {
                x,
                h,
                valid: valid.to_vec(),
            },
            |_, w| ready.push(core.detail_row(w)),
        );
        let mut out = Vec::new();
        for r in ready {
            self.stage2.push(r, |_, w| out.push(core.output_row(w)));
        }
        out
    }

    pub fn finish(&mut self) -> Vec<EnhancedRow> {
        let core = &self.core;
        let mut ready = Vec::new();
        self.stage1.finish(|_, w| ready.push(core.detail_row(w)));
        let mut out = Vec::new();
        for r in ready {
            self.stage2.push(r, |_, w| out.push(core.output_row(w)));
        }
        self.stage2.finish(|_, w| out.push(core.output_row(w)));
        out
    }
}

/// Frame-level form: enhances rows `0..limbic` of an unwrapped iris.
pub fn fixed_enhance(u: &UnwrappedIris, sigma1: f64, estimator: ContrastEstimator) -> EnhancedIris {
    let rows = u.limbic_row.unwrap_or(u.rows).clamp(1, u.rows);
    let cols = u.cols;
    let mut stream = EnhanceStream::new(sigma1, estimator);
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        out.extend(stream.push(&u.values[r * cols..(r + 1) * cols], &u.valid[r * cols..(r + 1) * cols]));
    }
    out.extend(stream.finish());
    EnhancedIris {
        rows,
        cols,
        values: out.iter().flat_map(|(v, _)| v.iter().copied()).collect(),
        valid: out.iter().flat_map(|(_, m)| m.iter().copied()).collect(),
        full_rows: u.rows,
        provenance: Provenance::HardwareModel,
    }
}
