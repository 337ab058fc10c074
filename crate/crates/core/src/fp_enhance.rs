//! Fingerprint enhancement: local normalization with variance-driven noise
//! suppression, gradient-based orientation estimation, and the decomposed
//! oriented Gaussian ridge filter.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::raster::{filter_cols, filter_rows, gaussian_blur, Border, GrayImage, Kernel1D, RealImage};

/// Variance floor (on [0,1]-scaled intensities) for the normalization division.
pub const VARIANCE_FLOOR: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    /// Along-ridge standard deviation of the oriented Gaussian.
    pub sigma_x: f64,
    /// Across-ridge standard deviation; also the isotropic pre-filter width.
    pub sigma_y: f64,
    /// Taps of the anisotropic line filter (odd).
    pub window_length: usize,
    /// Noise-suppression regulator of the mask factor, in (0, 1].
    pub c: f64,
    pub sigma_grad: f64,
    pub sigma_cov: f64,
    pub sigma_angle: f64,
    /// Gaussian neighbourhood for local mean / variance.
    pub stats_sigma: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            sigma_x: 4.0,
            sigma_y: 1.5,
            window_length: 17,
            c: 0.3,
            sigma_grad: 0.5,
            sigma_cov: 1.0,
            sigma_angle: 7.0,
            stats_sigma: 4.0,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.window_length.is_multiple_of(2) || self.window_length == 0 {
            return Err(format!("window_length must be odd, got {}", self.window_length));
        }
        for (name, v) in [
            ("sigma_x", self.sigma_x),
            ("sigma_y", self.sigma_y),
            ("sigma_grad", self.sigma_grad),
            ("sigma_cov", self.sigma_cov),
            ("sigma_angle", self.sigma_angle),
            ("stats_sigma", self.stats_sigma),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.c > 0.0 && self.c <= 1.0) {
            return Err(format!("c must lie in (0, 1], got {}", self.c));
        }
        if self.sigma_y >= self.sigma_x {
            return Err("sigma_y must be smaller than sigma_x".into());
        }
        Ok(())
    }

    /// Standard deviation of the 1-D line filter: `sqrt(sx^2 - sy^2)`.
    pub fn sigma_theta(&self) -> f64 {
        (self.sigma_x * self.sigma_x - self.sigma_y * self.sigma_y).sqrt()
    }

    /// 7 taps at the default sigma_y = 1.5.
    pub fn iso_kernel(&self) -> Kernel1D {
        Kernel1D::gaussian_with_radius(self.sigma_y, (2.0 * self.sigma_y).ceil() as usize)
    }

}

#[derive(Clone, Debug)]
pub struct LocalStats {
    pub mean: RealImage,
    pub variance: RealImage,
}

#[derive(Clone, Debug)]
pub struct NormalizedImage {
    pub values: RealImage,
    pub mask: RealImage,
}

impl NormalizedImage {
    pub fn width(&self) -> usize {
        self.values.width
    }

    pub fn height(&self) -> usize {
        self.values.height
    }
}

#[derive(Clone, Debug)]
pub struct OrientationField {
    pub width: usize,
    pub height: usize,
    /// Ridge direction, radians in [0, pi), measured from +x towards +y.
    pub theta: Vec<f64>,
    pub coherence: Vec<f64>,
}

impl OrientationField {
    pub fn uniform(width: usize, height: usize, theta: f64) -> Self {
        Self {
            width,
            height,
            theta: vec![wrap_pi(theta); width * height],
            coherence: vec![1.0; width * height],
        }
    }

    #[inline]
    pub fn theta_at(&self, x: usize, y: usize) -> f64 {
        self.theta[y * self.width + x]
    }
}

/// Wraps an angle into [0, pi).
#[inline]
pub fn wrap_pi(a: f64) -> f64 {
    let w = a.rem_euclid(PI);
    if w >= PI {
        0.0
    } else {
        w
    }
}

/// Smallest difference between two pi-periodic orientations, in [0, pi/2].
#[inline]
pub fn orientation_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

/// Noise-suppression factor `M = 1 - exp(-var / (2 C^2))`.
#[inline]
pub fn noise_suppression_factor(variance: f64, c: f64) -> f64 {
    -(-variance / (2.0 * c * c)).exp_m1()
}

pub fn local_stats(image: &GrayImage, sigma: f64) -> LocalStats {
    let scaled = image.to_real().map(|v| v / 255.0);
    let mean = gaussian_blur(&scaled, sigma, Border::Replicate, Border::Replicate);
    let sq = scaled.map(|v| v * v);
    let mean_sq = gaussian_blur(&sq, sigma, Border::Replicate, Border::Replicate);
    let variance = mean_sq.zip_map(&mean, |m2, m| (m2 - m * m).max(0.0));
    LocalStats { mean, variance }
}

pub fn normalize(image: &GrayImage, params: &FilterParams) -> NormalizedImage {
    let stats = local_stats(image, params.stats_sigma);
    let mut values = RealImage::zeros(image.width(), image.height());
    let mut mask = RealImage::zeros(image.width(), image.height());
    for (i, &p) in image.pixels().iter().enumerate() {
        let var = stats.variance.data[i];
        let m = noise_suppression_factor(var, params.c);
        let g = (f64::from(p) / 255.0 - stats.mean.data[i]) / var.max(VARIANCE_FLOOR).sqrt();
        mask.data[i] = m;
        values.data[i] = g * m;
    }
    NormalizedImage { values, mask }
}

pub fn estimate_orientation(image: &NormalizedImage, params: &FilterParams) -> OrientationField {
    let v = &image.values;
    let (w, h) = (v.width, v.height);
    let smooth = Kernel1D::gaussian(params.sigma_grad);
    let deriv = Kernel1D::gaussian_derivative(params.sigma_grad);
    let gx = filter_cols(&filter_rows(v, &deriv, Border::Replicate), &smooth, Border::Replicate);
    let gy = filter_cols(&filter_rows(v, &smooth, Border::Replicate), &deriv, Border::Replicate);

    let blur = |img: &RealImage, s: f64| gaussian_blur(img, s, Border::Replicate, Border::Replicate);
    let gxx = blur(&gx.zip_map(&gx, |a, b| a * b), params.sigma_cov);
    let gxy = blur(&gx.zip_map(&gy, |a, b| a * b), params.sigma_cov);
    let gyy = blur(&gy.zip_map(&gy, |a, b| a * b), params.sigma_cov);

    let cos2 = blur(&gxx.zip_map(&gyy, |a, b| a - b), params.sigma_angle);
    let sin2 = blur(&gxy.map(|a| 2.0 * a), params.sigma_angle);
    let energy = blur(&gxx.zip_map(&gyy, |a, b| a + b), params.sigma_angle);

    let mut theta = vec![0.0; w * h];
    let mut coherence = vec![0.0; w * h];
    for i in 0..w * h {
        let (s, c, e) = (sin2.data[i], cos2.data[i], energy.data[i]);
        let mag = s.hypot(c);
        if e <= 1e-12 || mag <= 1e-12 * e.max(1.0) {
            continue;
        }
        theta[i] = wrap_pi(PI / 2.0 + 0.5 * s.atan2(c));
        coherence[i] = (mag / e).clamp(0.0, 1.0);
    }
    OrientationField {
        width: w,
        height: h,
        theta,
        coherence,
    }
}

/// True when the line at `theta` takes one pixel per column (hwind),
/// false when it takes one per row (vwind).
#[inline]
pub fn horizontal_window(theta: f64) -> bool {
    theta.tan().abs() <= 1.0 + 1e-12
}

/// Nearest-neighbour taps of a line through the origin at `theta`, one per
/// column (hwind) or one per row (vwind), ordered by the free coordinate
/// from `-radius` to `radius`.
pub fn line_offsets(theta: f64, radius: usize) -> impl Iterator<Item = (isize, isize)> {
    let (s, c) = theta.sin_cos();
    let horizontal = horizontal_window(theta);
    let r = radius as isize;
    (-r..=r).map(move |u| {
        let f = u as f64;
        if horizontal {
            (u, (f * s / c).round() as isize)
        } else {
            ((f * c / s).round() as isize, u)
        }
    })
}

/// Gaussian of each tap's distance along the line, normalized to sum 1.
pub fn line_weights(theta: f64, radius: usize, sigma: f64) -> Vec<f64> {
    let (s, c) = theta.sin_cos();
    let raw: Vec<f64> = line_offsets(theta, radius)
        .map(|(dx, dy)| {
            let d = dx as f64 * c + dy as f64 * s;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / sum).collect()
}

/// Decomposed oriented Gaussian, real-valued: isotropic pre-filter followed
/// by a per-pixel 1-D Gaussian along the ridge direction.
pub fn oriented_filter_real(
    image: &NormalizedImage,
    field: &OrientationField,
    params: &FilterParams,
) -> RealImage {
    assert_eq!(
        (field.width, field.height),
        (image.width(), image.height()),
        "orientation field must match image"
    );
    let iso = params.iso_kernel();
    let pass1 = filter_cols(
        &filter_rows(&image.values, &iso, Border::Replicate),
        &iso,
        Border::Replicate,
    );
    line_filter(&pass1, field, params.window_length / 2, params.sigma_theta())
}

fn line_filter(src: &RealImage, field: &OrientationField, radius: usize, sigma: f64) -> RealImage {
    let (w, h) = (src.width, src.height);
    let mut out = RealImage::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let theta = field.theta_at(x, y);
            let acc: f64 = line_offsets(theta, radius)
                .zip(line_weights(theta, radius, sigma))
                .map(|((dx, dy), k)| k * src.get_clamped(x as isize + dx, y as isize + dy))
                .sum();
            out.set(x, y, acc);
        }
    }
    out
}

/// Affine min-max map of a real image onto [0, 255].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntensityMap {
    pub lo: f64,
    pub hi: f64,
}

impl IntensityMap {
    pub fn of(img: &RealImage) -> Self {
        let (lo, hi) = img.min_max();
        Self { lo, hi }
    }

    #[inline]
    pub fn apply(&self, v: f64) -> u8 {
        if self.hi - self.lo <= f64::EPSILON * self.hi.abs().max(1.0) {
            return 128;
        }
        (255.0 * (v - self.lo) / (self.hi - self.lo)).round().clamp(0.0, 255.0) as u8
    }

    pub fn apply_image(&self, img: &RealImage) -> GrayImage {
        GrayImage::new(
            img.width,
            img.height,
            img.data.iter().map(|&v| self.apply(v)).collect(),
        )
        .expect("dimensions preserved")
    }
}

/// Oriented filter output rescaled to 8 bits, together with the gray level
/// that the real-valued zero (ridge/valley boundary) maps to.
pub fn oriented_filter_levels(
    image: &NormalizedImage,
    field: &OrientationField,
    params: &FilterParams,
) -> (GrayImage, u8) {
    let real = oriented_filter_real(image, field, params);
    let map = IntensityMap::of(&real);
    let zero = if map.lo >= 0.0 { 0 } else { map.apply(0.0) };
    (map.apply_image(&real), zero)
}

pub fn oriented_filter(image: &NormalizedImage, field: &OrientationField, params: &FilterParams) -> GrayImage {
    oriented_filter_levels(image, field, params).0
}

/// Ridge pixels (input < threshold) become 0, background becomes 1.
pub fn binarize(image: &GrayImage, threshold: u8) -> GrayImage {
    GrayImage::new(
        image.width(),
        image.height(),
        image
            .pixels()
            .iter()
            .map(|&p| u8::from(p >= threshold))
            .collect(),
    )
    .expect("dimensions preserved")
}

/// Sign test on a real-valued filtered image: negative values are ridge (0).
pub fn binarize_real(image: &RealImage) -> GrayImage {
    GrayImage::new(
        image.width,
        image.height,
        image.data.iter().map(|&v| u8::from(v >= 0.0)).collect(),
    )
    .expect("dimensions preserved")
}
