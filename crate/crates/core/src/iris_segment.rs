//! Pupil localization by region properties, single-interpolation polar
//! unwrap about the pupil centre, and limbic boundary search on the
//! unwrapped raster.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{gaussian_blur, Border, GrayImage};
use crate::regions::{label_components, region_properties, Mask, Region};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    pub pupil_sigma: f64,
    pub min_area: usize,
    pub max_area_fraction: f64,
    pub max_eccentricity: f64,
    pub radial_samples: usize,
    pub angular_samples: usize,
    /// Outer sampling radius as a multiple of the pupil radius.
    pub outer_multiple: f64,
    /// Moving-average width along the angle used by the limbic search.
    pub limbic_smoothing: usize,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            pupil_sigma: 5.0,
            min_area: 300,
            max_area_fraction: 0.25,
            max_eccentricity: 0.6,
            radial_samples: 64,
            angular_samples: 360,
            outer_multiple: 2.8,
            limbic_smoothing: 5,
        }
    }
}

impl SegmentParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.radial_samples < 8 || self.angular_samples < 8 {
            return Err("radial and angular samples must be >= 8".into());
        }
        if !(self.pupil_sigma > 0.0) {
            return Err("pupil_sigma must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.max_area_fraction) || !(0.0..=1.0).contains(&self.max_eccentricity) {
            return Err("area fraction and eccentricity bounds must lie in [0, 1]".into());
        }
        if !(self.outer_multiple > 1.0) {
            return Err("outer_multiple must exceed 1".into());
        }
        if self.limbic_smoothing == 0 {
            return Err("limbic_smoothing must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PupilCircle {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnwrappedIris {
    /// R, number of radial rows.
    pub rows: usize,
    /// A, number of angular columns.
    pub cols: usize,
    pub values: Vec<u8>,
    /// False where the sample fell outside the eye image.
    pub valid: Vec<bool>,
    pub radial_scale: f64,
    /// 1-based limbic row once located.
    pub limbic_row: Option<usize>,
    /// Set when no positive radial gradient was found.
    pub limbic_fallback: bool,
}

impl UnwrappedIris {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.values[row * self.cols + col]
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage::new(self.cols, self.rows, self.values.clone()).expect("non-empty unwrap")
    }
}

/// Dark-residual mask: pixels darker than their Gaussian-smoothed
/// surroundings, opened with a 3x3 square and hole-filled.
pub fn dark_residual_mask(eye: &GrayImage, sigma: f64) -> Mask {
    let img = eye.to_real();
    let blurred = gaussian_blur(&img, sigma, Border::Replicate, Border::Replicate);
    let mut mask = Mask::new(eye.width(), eye.height());
    for (i, (&v, &b)) in img.data.iter().zip(&blurred.data).enumerate() {
        // tolerance absorbs kernel-sum rounding on flat regions
        mask.bits[i] = v - b < -1e-9;
    }
    mask.open().fill_holes()
}

/// Picks the pupil among labeled regions: area/eccentricity filter, then
/// the darkest mean intensity.
pub fn select_pupil(regions: &[Region], image_area: usize, params: &SegmentParams) -> Option<PupilCircle> {
    let max_area = params.max_area_fraction * image_area as f64;
    regions
        .iter()
        .filter(|r| r.area >= params.min_area && r.area as f64 <= max_area)
        .filter(|r| r.eccentricity <= params.max_eccentricity)
        .min_by(|a, b| {
            a.mean_intensity
                .partial_cmp(&b.mean_intensity)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.label.cmp(&b.label))
        })
        .map(|r| PupilCircle {
            cx: r.centroid.0,
            cy: r.centroid.1,
            radius: r.equivalent_radius,
        })
}

pub fn pupil_from_mask(eye: &GrayImage, mask: &Mask, params: &SegmentParams) -> Result<PupilCircle> {
    let (labels, count) = label_components(mask);
    let regions = region_properties(&labels, count, eye.width(), eye);
    let p = select_pupil(&regions, eye.width() * eye.height(), params).ok_or(Error::PupilNotFound)?;
    let inside = p.cx - p.radius >= 0.0
        && p.cy - p.radius >= 0.0
        && p.cx + p.radius <= (eye.width() - 1) as f64
        && p.cy + p.radius <= (eye.height() - 1) as f64;
    if !inside {
        return Err(Error::PupilNotFound);
    }
    Ok(p)
}

pub fn detect_pupil(eye: &GrayImage, params: &SegmentParams) -> Result<PupilCircle> {
    if eye.width() < 64 || eye.height() < 64 {
        return Err(Error::InvalidImage(format!(
            "eye image {}x{} is smaller than 64x64",
            eye.width(),
            eye.height()
        )));
    }
    let mask = dark_residual_mask(eye, params.pupil_sigma);
    pupil_from_mask(eye, &mask, params)
}

/// Bilinear sample; `None` outside `[0, w-1] x [0, h-1]`.
pub fn bilinear(img: &GrayImage, x: f64, y: f64) -> Option<f64> {
    let (w, h) = (img.width() as f64, img.height() as f64);
    if !(x >= 0.0 && y >= 0.0 && x <= w - 1.0 && y <= h - 1.0) {
        return None;
    }
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(img.width() - 1);
    let y1 = (y0 + 1).min(img.height() - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let p = |xx, yy| f64::from(img.get(xx, yy));
    let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
    let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
    Some(top * (1.0 - fy) + bottom * fy)
}

/// Radial step so the outermost row reaches `min(multiple * r, edge distance)`.
pub fn radial_scale_for(eye: &GrayImage, pupil: &PupilCircle, rows: usize, outer_multiple: f64) -> Result<f64> {
    let edge = pupil
        .cx
        .min(pupil.cy)
        .min((eye.width() - 1) as f64 - pupil.cx)
        .min((eye.height() - 1) as f64 - pupil.cy);
    let outer = (outer_multiple * pupil.radius).min(edge);
    if outer <= pupil.radius {
        return Err(Error::UnwrapFailed(format!(
            "pupil (r = {:.1}) at ({:.1}, {:.1}) leaves no iris band inside the image",
            pupil.radius, pupil.cx, pupil.cy
        )));
    }
    Ok((outer - pupil.radius) / rows as f64)
}

/// Sample position of 1-based radial row `i` and angular column `j`.
#[inline]
pub fn sample_point(pupil: &PupilCircle, scale: f64, i: usize, j: usize, cols: usize) -> (f64, f64) {
    let rho = pupil.radius + i as f64 * scale;
    let alpha = j as f64 * TAU / cols as f64;
    (pupil.cx + rho * alpha.cos(), pupil.cy + rho * alpha.sin())
}

pub fn unwrap_with_scale(eye: &GrayImage, pupil: &PupilCircle, rows: usize, cols: usize, scale: f64) -> Result<UnwrappedIris> {
    if rows == 0 || cols == 0 || !(scale > 0.0) {
        return Err(Error::UnwrapFailed("empty sampling grid".into()));
    }
    let (x1, y1) = sample_point(pupil, scale, 1, 0, cols);
    let first_ring_inside = (0..cols).all(|j| {
        let (x, y) = sample_point(pupil, scale, 1, j, cols);
        bilinear(eye, x, y).is_some()
    });
    if !first_ring_inside {
        return Err(Error::UnwrapFailed(format!(
            "innermost ring leaves the image near ({x1:.1}, {y1:.1})"
        )));
    }
    let mut values = vec![0u8; rows * cols];
    let mut valid = vec![false; rows * cols];
    for i in 1..=rows {
        for j in 0..cols {
            let (x, y) = sample_point(pupil, scale, i, j, cols);
            if let Some(v) = bilinear(eye, x, y) {
                values[(i - 1) * cols + j] = v.round().clamp(0.0, 255.0) as u8;
                valid[(i - 1) * cols + j] = true;
            }
        }
    }
    Ok(UnwrappedIris {
        rows,
        cols,
        values,
        valid,
        radial_scale: scale,
        limbic_row: None,
        limbic_fallback: false,
    })
}

pub fn unwrap(eye: &GrayImage, pupil: &PupilCircle, params: &SegmentParams) -> Result<UnwrappedIris> {
    let scale = radial_scale_for(eye, pupil, params.radial_samples, params.outer_multiple)?;
    unwrap_with_scale(eye, pupil, params.radial_samples, params.angular_samples, scale)
}

/// Mean radial gradient between 1-based rows `i` and `i + 1`, for
/// `i` in `1..rows`, on an angularly smoothed copy.
pub fn radial_gradient_profile(u: &UnwrappedIris, smoothing: usize) -> Vec<Option<f64>> {
    let (rows, cols) = (u.rows, u.cols);
    let half = smoothing as isize / 2;
    let mut smooth = vec![0.0f64; rows * cols];
    let mut smooth_ok = vec![false; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            let mut n = 0usize;
            for d in -half..=(smoothing as isize - 1 - half) {
                let cc = Border::Wrap.index(c as isize + d, cols);
                if u.valid[r * cols + cc] {
                    acc += f64::from(u.values[r * cols + cc]);
                    n += 1;
                }
            }
            if n > 0 && u.valid[r * cols + c] {
                smooth[r * cols + c] = acc / n as f64;
                smooth_ok[r * cols + c] = true;
            }
        }
    }
    (1..rows)
        .map(|i| {
            let (a, b) = (i - 1, i);
            let mut acc = 0.0;
            let mut n = 0usize;
            for c in 0..cols {
                if smooth_ok[a * cols + c] && smooth_ok[b * cols + c] {
                    acc += smooth[b * cols + c] - smooth[a * cols + c];
                    n += 1;
                }
            }
            (n > 0).then(|| acc / n as f64)
        })
        .collect()
}

/// Locates the iris/sclera boundary as the strongest dark-to-bright radial
/// step in rows `[R/4, R-1]`. Falls back to `R` (flagged) when no
/// positive step exists.
pub fn find_limbic(u: &mut UnwrappedIris, smoothing: usize) -> usize {
    let profile = radial_gradient_profile(u, smoothing);
    let lo = (u.rows / 4).max(1);
    let mut best: Option<(usize, f64)> = None;
    for i in lo..u.rows {
        if let Some(g) = profile[i - 1] {
            if g > 0.0 && best.is_none_or(|(_, b)| g > b) {
                best = Some((i, g));
            }
        }
    }
    let row = match best {
        Some((i, _)) => {
            u.limbic_fallback = false;
            i
        }
        None => {
            log::warn!("no positive radial gradient; using the full unwrap");
            u.limbic_fallback = true;
            u.rows
        }
    };
    u.limbic_row = Some(row);
    row
}
