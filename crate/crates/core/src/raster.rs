//! Raster containers and the separable convolution machinery shared by the
//! float reference backend.

use crate::error::{Error, Result};

/// 8-bit row-major intensity raster.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "zero dimension {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "zero-sized image");
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "zero-sized image");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    /// Replicate-edge access.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> u8 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        self.pixels.chunks_exact(self.width)
    }

    pub fn to_real(&self) -> RealImage {
        RealImage {
            width: self.width,
            height: self.height,
            data: self.pixels.iter().map(|&p| f64::from(p)).collect(),
        }
    }
}

/// Real-valued raster used for intermediate float computations.
#[derive(Clone, Debug, PartialEq)]
pub struct RealImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl RealImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &RealImage, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!((self.width, self.height), (other.width, other.height));
        Self {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Rounds and saturates every value into an 8-bit image.
    pub fn to_gray_clamped(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self
                .data
                .iter()
                .map(|&v| v.round().clamp(0.0, 255.0) as u8)
                .collect(),
        }
    }
}

/// Edge extension rule along one axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Border {
    Replicate,
    /// Cyclic; used for the angular axis of unwrapped iris images.
    Wrap,
}

impl Border {
    #[inline]
    pub fn index(self, i: isize, len: usize) -> usize {
        match self {
            Border::Replicate => i.clamp(0, len as isize - 1) as usize,
            Border::Wrap => i.rem_euclid(len as isize) as usize,
        }
    }
}

/// Odd-length 1-D kernel centred on tap `radius`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel1D {
    pub taps: Vec<f64>,
}

impl Kernel1D {
    pub fn radius(&self) -> usize {
        self.taps.len() / 2
    }

    /// Normalized Gaussian with radius `ceil(3 sigma)`.
    pub fn gaussian(sigma: f64) -> Self {
        Self::gaussian_with_radius(sigma, (3.0 * sigma).ceil().max(1.0) as usize)
    }

    pub fn gaussian_with_radius(sigma: f64, radius: usize) -> Self {
        assert!(sigma > 0.0, "sigma must be positive");
        let r = radius as isize;
        let mut taps: Vec<f64> = (-r..=r)
            .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
            .collect();
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= sum);
        Self { taps }
    }

    /// First derivative of a Gaussian, scaled so a unit ramp yields a unit
    /// response: `sum(k[i] * (-i)) == 1` under correlation.
    pub fn gaussian_derivative(sigma: f64) -> Self {
        assert!(sigma > 0.0, "sigma must be positive");
        let r = (3.0 * sigma).ceil().max(1.0) as isize;
        let mut taps: Vec<f64> = (-r..=r)
            .map(|i| {
                let x = i as f64;
                x * (-(x * x) / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let moment: f64 = (-r..=r).zip(&taps).map(|(i, t)| i as f64 * t).sum();
        taps.iter_mut().for_each(|t| *t /= moment);
        Self { taps }
    }
}

/// Correlates every row with `kernel` (horizontal pass).
pub fn filter_rows(img: &RealImage, kernel: &Kernel1D, border: Border) -> RealImage {
    let r = kernel.radius() as isize;
    let (w, h) = (img.width, img.height);
    let mut out = RealImage::zeros(w, h);
    let mut padded = vec![0.0; w + 2 * r as usize];
    for y in 0..h {
        let row = &img.data[y * w..(y + 1) * w];
        for (i, p) in padded.iter_mut().enumerate() {
            *p = row[border.index(i as isize - r, w)];
        }
        let dst = &mut out.data[y * w..(y + 1) * w];
        for (x, d) in dst.iter_mut().enumerate() {
            *d = kernel
                .taps
                .iter()
                .zip(&padded[x..x + kernel.taps.len()])
                .map(|(k, v)| k * v)
                .sum();
        }
    }
    out
}

/// Correlates every column with `kernel` (vertical pass).
pub fn filter_cols(img: &RealImage, kernel: &Kernel1D, border: Border) -> RealImage {
    let r = kernel.radius() as isize;
    let (w, h) = (img.width, img.height);
    let mut out = RealImage::zeros(w, h);
    for (k, &tap) in kernel.taps.iter().enumerate() {
        let dy = k as isize - r;
        for y in 0..h {
            let sy = border.index(y as isize + dy, h);
            let src = &img.data[sy * w..(sy + 1) * w];
            let dst = &mut out.data[y * w..(y + 1) * w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += tap * s;
            }
        }
    }
    out
}

pub fn separable(
    img: &RealImage,
    kx: &Kernel1D,
    ky: &Kernel1D,
    border_x: Border,
    border_y: Border,
) -> RealImage {
    filter_cols(&filter_rows(img, kx, border_x), ky, border_y)
}

pub fn gaussian_blur(img: &RealImage, sigma: f64, border_x: Border, border_y: Border) -> RealImage {
    let k = Kernel1D::gaussian(sigma);
    separable(img, &k, &k, border_x, border_y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_dimensions() {
        assert!(GrayImage::new(0, 3, vec![]).is_err());
        assert!(GrayImage::new(2, 2, vec![0; 3]).is_err());
        assert!(GrayImage::new(3, 2, vec![0; 6]).is_ok());
    }

    #[test]
    fn gaussian_kernel_is_normalized_and_symmetric() {
        let k = Kernel1D::gaussian(2.0);
        assert_eq!(k.taps.len(), 13);
        assert!((k.taps.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..k.taps.len() {
            assert_eq!(k.taps[i], k.taps[k.taps.len() - 1 - i]);
        }
    }

    #[test]
    fn derivative_kernel_has_unit_ramp_response() {
        let k = Kernel1D::gaussian_derivative(1.0);
        let ramp = RealImage::from_fn(32, 1, |x, _| 3.0 * x as f64);
        let g = filter_rows(&ramp, &k, Border::Replicate);
        // sign: correlation with an odd kernel normalized to sum(i*k) = 1
        // gives +slope for increasing ramps
        assert!((g.get(16, 0) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn wrap_border_is_cyclic() {
        assert_eq!(Border::Wrap.index(-1, 10), 9);
        assert_eq!(Border::Wrap.index(10, 10), 0);
        assert_eq!(Border::Replicate.index(-3, 10), 0);
        assert_eq!(Border::Replicate.index(12, 10), 9);
    }

    #[test]
    fn blur_preserves_constant() {
        let img = RealImage::from_fn(9, 7, |_, _| 42.0);
        let b = gaussian_blur(&img, 1.5, Border::Replicate, Border::Wrap);
        assert!(b.data.iter().all(|v| (v - 42.0).abs() < 1e-9));
    }
}
