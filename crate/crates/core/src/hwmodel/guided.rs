//! 17-tap guided line Gaussian. Each quantized ridge angle selects one
//! pixel per column (hwind, `|tan theta| <= 1`) or one pixel per row
//! (vwind) inside a 17x17 window, weighted by a per-angle Q8.8 table.

use std::f64::consts::PI;

use super::fixed::round_shift;
use super::ANGLE_STEPS;
use crate::fp_enhance::{horizontal_window, line_offsets, line_weights, OrientationField};

pub const TAPS: usize = 17;
pub const RADIUS: usize = TAPS / 2;
/// Fraction bits of the tap weights (Q8.8).
pub const WEIGHT_FRAC: u32 = 8;
/// Signed accumulator width.
pub const ACC_BITS: u32 = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubWindow {
    /// One pixel from each column.
    Horizontal,
    /// One pixel from each row.
    Vertical,
}

/// Angle in [0, pi) to its 8-bit code (256 steps over pi).
#[inline]
pub fn quantize_angle(theta: f64) -> u8 {
    ((theta / PI * ANGLE_STEPS as f64).round() as i64).rem_euclid(ANGLE_STEPS as i64) as u8
}

#[inline]
pub fn angle_of(code: u8) -> f64 {
    f64::from(code) * PI / ANGLE_STEPS as f64
}

pub fn sub_window(code: u8) -> SubWindow {
    if horizontal_window(angle_of(code)) {
        SubWindow::Horizontal
    } else {
        SubWindow::Vertical
    }
}

/// Nearest-neighbour tap offsets `(dx, dy)` of the line at `code`,
/// ordered by the free coordinate from `-8` to `8`.
pub fn offsets(code: u8) -> [(i32, i32); TAPS] {
    let mut out = [(0, 0); TAPS];
    for (o, (dx, dy)) in out.iter_mut().zip(line_offsets(angle_of(code), RADIUS)) {
        *o = (dx as i32, dy as i32);
    }
    out
}

/// Q8.8 weights for the taps of `code`, rounded so they sum to exactly 1.0.
pub fn weights(code: u8, sigma: f64) -> [i32; TAPS] {
    let one = 1i32 << WEIGHT_FRAC;
    let mut w = [0i32; TAPS];
    for (o, r) in w.iter_mut().zip(line_weights(angle_of(code), RADIUS, sigma)) {
        *o = (r * f64::from(one)).round() as i32;
    }
    w[RADIUS] += one - w.iter().sum::<i32>();
    w
}

/// Offset and weight tables for all 256 angle codes.
#[derive(Clone, Debug)]
pub struct GuidedTables {
    pub offsets: Vec<[(i32, i32); TAPS]>,
    pub weights: Vec<[i32; TAPS]>,
}

impl GuidedTables {
    pub fn new(sigma: f64) -> Self {
        let codes = 0..ANGLE_STEPS as u16;
        Self {
            offsets: codes.clone().map(|k| offsets(k as u8)).collect(),
            weights: codes.map(|k| weights(k as u8, sigma)).collect(),
        }
    }

    /// Saturating 24-bit accumulation for one output pixel. `sample(dx, dy)`
    /// returns the signed, border-replicated input around the centre.
    #[inline]
    pub fn accumulate(&self, code: u8, mut sample: impl FnMut(i32, i32) -> i32) -> i64 {
        let lim = (1i64 << (ACC_BITS - 1)) - 1;
        let mut acc = 0i64;
        for (&(dx, dy), &w) in self.offsets[code as usize].iter().zip(&self.weights[code as usize]) {
            acc = (acc + i64::from(w) * i64::from(sample(dx, dy))).clamp(-lim - 1, lim);
        }
        acc
    }

    /// Accumulation rounded back to the input scale.
    #[inline]
    pub fn apply(&self, code: u8, sample: impl FnMut(i32, i32) -> i32) -> i32 {
        round_shift(self.accumulate(code, sample), WEIGHT_FRAC) as i32
    }
}

/// Whole-frame form over 8-bit samples centred at 128, for testing and
/// for the frame-level API. Returns 8-bit output centred at 128.
pub fn guided_line_gaussian(
    width: usize,
    height: usize,
    pixels: &[u8],
    codes: &[u8],
    tables: &GuidedTables,
) -> Vec<u8> {
    let at = |x: i64, y: i64| -> i32 {
        let x = x.clamp(0, width as i64 - 1) as usize;
        let y = y.clamp(0, height as i64 - 1) as usize;
        i32::from(pixels[y * width + x]) - 128
    };
    let mut out = vec![0u8; width * height];
    for y in 0..height {
        for x in 0..width {
            let v = tables.apply(codes[y * width + x], |dx, dy| {
                at(x as i64 + i64::from(dx), y as i64 + i64::from(dy))
            });
            out[y * width + x] = (v + 128).clamp(0, 255) as u8;
        }
    }
    out
}

pub fn quantize_field(field: &OrientationField) -> Vec<u8> {
    field.theta.iter().map(|&t| quantize_angle(t)).collect()
}
