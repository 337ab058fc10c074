//! Iris enhancement, bitplane iris codes, majority-vote enrollment and the
//! masked, rotation-searched Hamming distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iris_segment::UnwrappedIris;
use crate::raster::{gaussian_blur, Border, RealImage};

/// Bitplanes 1..=6 of each 8-bit sample.
pub const PLANES: usize = 6;
const PLANE_MASK: u8 = (1 << PLANES) - 1;

/// Contrast floor, in intensity levels, for the enhancement division.
pub const CONTRAST_FLOOR: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Reference,
    HardwareModel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnhancedIris {
    /// R' = limbic row.
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<u8>,
    pub valid: Vec<bool>,
    /// R of the unwrap this was cut from; codes are padded back to it.
    pub full_rows: usize,
    pub provenance: Provenance,
}

/// `rows * cols` samples, each holding bitplanes 1..=6 in its low six bits,
/// with a per-sample validity mask.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IrisCode {
    pub rows: usize,
    pub cols: usize,
    pub planes: Vec<u8>,
    pub mask: Vec<bool>,
}

impl IrisCode {
    pub fn new(rows: usize, cols: usize, planes: Vec<u8>, mask: Vec<bool>) -> Result<Self> {
        let m = rows * cols;
        if planes.len() != m || mask.len() != m {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} code with {} samples and {} mask bits",
                planes.len(),
                mask.len()
            )));
        }
        if planes.iter().any(|&p| p & !PLANE_MASK != 0) {
            return Err(Error::Dimension("sample uses more than six bitplanes".into()));
        }
        Ok(Self {
            rows,
            cols,
            planes,
            mask,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            planes: vec![0; rows * cols],
            mask: vec![true; rows * cols],
        }
    }

    /// M, the flattened sample count.
    pub fn len(&self) -> usize {
        self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }

    /// Bit of plane `k` (1..=6) at sample `i`.
    #[inline]
    pub fn bit(&self, i: usize, plane: usize) -> u8 {
        debug_assert!((1..=PLANES).contains(&plane));
        (self.planes[i] >> (plane - 1)) & 1
    }

    /// Cyclic shift of every row by `shift` columns: `out[r][c] = self[r][c - shift]`.
    pub fn rotate(&self, shift: isize) -> Self {
        let cols = self.cols as isize;
        let mut planes = vec![0; self.len()];
        let mut mask = vec![false; self.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                let src = r * self.cols + (c as isize - shift).rem_euclid(cols) as usize;
                planes[r * self.cols + c] = self.planes[src];
                mask[r * self.cols + c] = self.mask[src];
            }
        }
        Self {
            rows: self.rows,
            cols: self.cols,
            planes,
            mask,
        }
    }

    pub fn complement(&self) -> Self {
        Self {
            planes: self.planes.iter().map(|p| !p & PLANE_MASK).collect(),
            ..self.clone()
        }
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrisScore {
    pub hd: f64,
    pub compared_bits: usize,
    pub differing_bits: usize,
    /// Column shift of the minimizing alignment.
    pub shift: isize,
}

pub fn enhance(u: &UnwrappedIris, sigma1: f64) -> EnhancedIris {
    let rows = u.limbic_row.unwrap_or(u.rows).clamp(1, u.rows);
    let cols = u.cols;
    let input = RealImage::from_fn(cols, rows, |c, r| f64::from(u.get(r, c)));
    let mean = gaussian_blur(&input, sigma1, Border::Wrap, Border::Replicate);
    let detail = input.zip_map(&mean, |a, b| a - b);
    let energy = gaussian_blur(&detail.map(|d| d * d), sigma1 / 2.0, Border::Wrap, Border::Replicate);
    let values = detail
        .data
        .iter()
        .zip(&energy.data)
        .map(|(&d, &e)| {
            let contrast = e.max(0.0).sqrt().max(CONTRAST_FLOOR);
            (128.0 + 128.0 * d / contrast).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    EnhancedIris {
        rows,
        cols,
        values,
        valid: u.valid[..rows * cols].to_vec(),
        full_rows: u.rows,
        provenance: Provenance::Reference,
    }
}

/// Planes 1..=6 of an 8-bit value packed into six bits.
#[inline]
pub fn slice_value(v: u8) -> u8 {
    (v >> 1) & PLANE_MASK
}

pub fn bitplane_slice(e: &EnhancedIris) -> IrisCode {
    let m = e.full_rows * e.cols;
    let mut planes = vec![0u8; m];
    let mut mask = vec![false; m];
    for i in 0..e.rows * e.cols {
        planes[i] = slice_value(e.values[i]);
        mask[i] = e.valid[i];
    }
    IrisCode {
        rows: e.full_rows,
        cols: e.cols,
        planes,
        mask,
    }
}

pub fn majority_template(codes: &[IrisCode]) -> Result<IrisCode> {
    if codes.len() < 3 || codes.len().is_multiple_of(2) {
        return Err(Error::MajorityCount(codes.len()));
    }
    let first = &codes[0];
    if let Some(c) = codes.iter().find(|c| (c.rows, c.cols) != (first.rows, first.cols)) {
        return Err(Error::Dimension(format!(
            "{}x{} vs {}x{}",
            first.rows, first.cols, c.rows, c.cols
        )));
    }
    let quorum = codes.len() / 2 + 1;
    let m = first.len();
    let mut planes = vec![0u8; m];
    let mut mask = vec![false; m];
    for i in 0..m {
        let mut packed = 0u8;
        for k in 0..PLANES {
            let ones = codes.iter().filter(|c| c.planes[i] >> k & 1 == 1).count();
            if ones >= quorum {
                packed |= 1 << k;
            }
        }
        planes[i] = packed;
        mask[i] = codes.iter().filter(|c| c.mask[i]).count() >= quorum;
    }
    Ok(IrisCode {
        rows: first.rows,
        cols: first.cols,
        planes,
        mask,
    })
}

fn count_at_shift(a: &IrisCode, b: &IrisCode, shift: isize) -> (usize, usize) {
    let cols = a.cols as isize;
    let mut compared = 0usize;
    let mut differing = 0usize;
    for r in 0..a.rows {
        let row = r * a.cols;
        for c in 0..a.cols {
            let i = row + c;
            let j = row + (c as isize + shift).rem_euclid(cols) as usize;
            if a.mask[i] && b.mask[j] {
                compared += PLANES;
                differing += (a.planes[i] ^ b.planes[j]).count_ones() as usize;
            }
        }
    }
    (compared, differing)
}

/// Minimum masked Hamming distance over column shifts in
/// `-rotations..=rotations`; ties keep the smallest `|shift|`.
pub fn hamming(a: &IrisCode, b: &IrisCode, rotations: usize) -> Result<IrisScore> {
    if (a.rows, a.cols) != (b.rows, b.cols) {
        return Err(Error::Dimension(format!(
            "{}x{} vs {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let r = rotations as isize;
    let shifts = std::iter::once(0).chain((1..=r).flat_map(|s| [-s, s]));
    let mut best: Option<IrisScore> = None;
    for shift in shifts {
        let (compared, differing) = count_at_shift(a, b, shift);
        if compared == 0 {
            continue;
        }
        let hd = differing as f64 / compared as f64;
        if best.is_none_or(|b| hd < b.hd) {
            best = Some(IrisScore {
                hd,
                compared_bits: compared,
                differing_bits: differing,
                shift,
            });
        }
    }
    best.ok_or(Error::Incomparable)
}
