//! Synthetic multimodal data with known ground truth: phase-model
//! fingerprints whose minutiae are the spiral points of the phase, and
//! eye images with a dark pupil, textured iris and bright sclera.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::save_gray;
use crate::raster::GrayImage;

/// Phase singularity: one ridge is inserted around it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spiral {
    pub x: f64,
    pub y: f64,
    pub sign: f64,
}

/// Master fingerprint: concentric ridges about a centre outside the frame,
/// plus spiral points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FingerprintModel {
    pub width: usize,
    pub height: usize,
    pub period: f64,
    pub centre: (f64, f64),
    pub spirals: Vec<Spiral>,
}

impl FingerprintModel {
    pub fn random(rng: &mut impl Rng, width: usize, height: usize, minutiae: usize) -> Self {
        let (w, h) = (width as f64, height as f64);
        let dir = rng.gen_range(0.0..TAU);
        let dist = rng.gen_range(0.9..1.6) * w.max(h);
        let centre = (w / 2.0 + dist * dir.cos(), h / 2.0 + dist * dir.sin());
        let margin = 28.0;
        let mut spirals: Vec<Spiral> = Vec::with_capacity(minutiae);
        let mut tries = 0;
        while spirals.len() < minutiae && tries < 10_000 {
            tries += 1;
            let (x, y) = (rng.gen_range(margin..w - margin), rng.gen_range(margin..h - margin));
            if spirals.iter().all(|s| (s.x - x).hypot(s.y - y) >= 24.0) {
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                spirals.push(Spiral { x, y, sign });
            }
        }
        Self {
            width,
            height,
            period: rng.gen_range(8.5..10.0),
            centre,
            spirals,
        }
    }

    pub fn phase(&self, x: f64, y: f64) -> f64 {
        let base = (x - self.centre.0).hypot(y - self.centre.1) * TAU / self.period;
        base + self.spirals.iter().map(|s| s.sign * (y - s.y).atan2(x - s.x)).sum::<f64>()
    }
}

/// Acquisition variation of one impression.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Acquisition {
    pub rotation: f64,
    pub dx: f64,
    pub dy: f64,
    pub noise: f64,
    pub brightness: f64,
}

impl Acquisition {
    pub fn identity() -> Self {
        Self {
            rotation: 0.0,
            dx: 0.0,
            dy: 0.0,
            noise: 0.0,
            brightness: 0.0,
        }
    }

    pub fn random_fingerprint(rng: &mut impl Rng) -> Self {
        Self {
            rotation: rng.gen_range(-8f64..8.0).to_radians(),
            dx: rng.gen_range(-10.0..10.0),
            dy: rng.gen_range(-10.0..10.0),
            noise: 14.0,
            brightness: rng.gen_range(-15.0..15.0),
        }
    }

    pub fn random_eye(rng: &mut impl Rng) -> Self {
        Self {
            rotation: rng.gen_range(-5f64..5.0).to_radians(),
            dx: rng.gen_range(-4.0..4.0),
            dy: rng.gen_range(-4.0..4.0),
            noise: 4.0,
            brightness: rng.gen_range(-10.0..10.0),
        }
    }

    /// Maps an image point back into model coordinates (rotation about `c`).
    fn to_model(&self, x: f64, y: f64, c: (f64, f64)) -> (f64, f64) {
        let (s, co) = (-self.rotation).sin_cos();
        let (u, v) = (x - c.0 - self.dx, y - c.1 - self.dy);
        (c.0 + co * u - s * v, c.1 + s * u + co * v)
    }

    /// Maps a model point into image coordinates.
    pub fn to_image(&self, x: f64, y: f64, c: (f64, f64)) -> (f64, f64) {
        let (s, co) = self.rotation.sin_cos();
        let (u, v) = (x - c.0, y - c.1);
        (c.0 + self.dx + co * u - s * v, c.1 + self.dy + s * u + co * v)
    }
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Renders an impression and its ground-truth minutiae (image coordinates,
/// those inside the frame).
pub fn render_fingerprint(model: &FingerprintModel, acq: &Acquisition, rng: &mut impl Rng) -> (GrayImage, Vec<(f64, f64)>) {
    let c = (model.width as f64 / 2.0, model.height as f64 / 2.0);
    let noise = Normal::new(0.0, acq.noise.max(1e-9)).expect("finite sigma");
    let img = GrayImage::from_fn(model.width, model.height, |x, y| {
        let (u, v) = acq.to_model(x as f64, y as f64, c);
        let ridge = model.phase(u, v).cos();
        to_u8(128.0 + acq.brightness + 90.0 * ridge + noise.sample(rng))
    });
    let truth = model
        .spirals
        .iter()
        .map(|s| acq.to_image(s.x, s.y, c))
        .filter(|&(x, y)| x >= 0.0 && y >= 0.0 && x < model.width as f64 && y < model.height as f64)
        .collect();
    (img, truth)
}

/// Iris texture as a sum of angular-radial waves over the normalized band.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrisModel {
    pub size: usize,
    pub centre: (f64, f64),
    pub pupil_radius: f64,
    /// Iris outer radius over pupil radius.
    pub iris_ratio: f64,
    pub pupil_level: f64,
    pub iris_level: f64,
    pub sclera_level: f64,
    /// `(amplitude, angular frequency, radial frequency, phase)`.
    pub waves: Vec<(f64, f64, f64, f64)>,
}

impl IrisModel {
    pub fn random(rng: &mut impl Rng, size: usize) -> Self {
        let waves = (0..48)
            .map(|_| {
                (
                    rng.gen_range(4.0..12.0),
                    f64::from(rng.gen_range(3..40)),
                    rng.gen_range(0.3..4.0),
                    rng.gen_range(0.0..TAU),
                )
            })
            .collect();
        let s = size as f64;
        Self {
            size,
            centre: (s / 2.0 + rng.gen_range(-6.0..6.0), s / 2.0 + rng.gen_range(-6.0..6.0)),
            pupil_radius: rng.gen_range(26.0..30.0),
            iris_ratio: 2.2,
            pupil_level: rng.gen_range(15.0..30.0),
            iris_level: rng.gen_range(95.0..125.0),
            sclera_level: rng.gen_range(190.0..215.0),
            waves,
        }
    }

    /// Intensity at polar position `(rho, alpha)` about the pupil centre.
    pub fn intensity(&self, rho: f64, alpha: f64) -> f64 {
        let rp = self.pupil_radius;
        let ri = rp * self.iris_ratio;
        let step = |edge: f64, v: f64| 1.0 / (1.0 + (-(v - edge) / 0.8).exp());
        let band = ((rho - rp) / (ri - rp)).clamp(0.0, 1.0);
        let texture: f64 = self
            .waves
            .iter()
            .map(|&(a, ka, kr, ph)| a * (ka * alpha + TAU * kr * band + ph).cos())
            .sum::<f64>()
            * 0.5;
        // brighter, calmer pupillary zone
        let zone = (band / 0.15).min(1.0);
        let iris = self.iris_level + 20.0 * (1.0 - zone) + texture * zone;
        let inner = step(rp, rho);
        let outer = step(ri, rho);
        self.pupil_level * (1.0 - inner) + iris * (inner - outer) + self.sclera_level * outer
    }
}

pub fn render_eye(model: &IrisModel, acq: &Acquisition, rng: &mut impl Rng) -> GrayImage {
    let noise = Normal::new(0.0, acq.noise.max(1e-9)).expect("finite sigma");
    let c = model.centre;
    GrayImage::from_fn(model.size, model.size, |x, y| {
        let (u, v) = acq.to_model(x as f64, y as f64, c);
        let (dx, dy) = (u - c.0, v - c.1);
        let alpha = dy.atan2(dx).rem_euclid(TAU);
        to_u8(model.intensity(dx.hypot(dy), alpha) + acq.brightness + noise.sample(rng))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub subjects: usize,
    pub fingerprints: usize,
    pub irises: usize,
    pub fp_size: usize,
    pub eye_size: usize,
    pub minutiae: usize,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            subjects: 10,
            fingerprints: 3,
            irises: 5,
            fp_size: 256,
            eye_size: 240,
            minutiae: 14,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubjectTruth {
    pub id: String,
    pub fingerprint: FingerprintModel,
    pub iris: IrisModel,
    /// Ground-truth minutiae of each impression.
    pub impressions: Vec<Vec<(f64, f64)>>,
    /// Pupil centre of each eye image.
    pub pupils: Vec<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct SyntheticSubject {
    pub truth: SubjectTruth,
    pub fingerprints: Vec<GrayImage>,
    pub eyes: Vec<GrayImage>,
}

pub fn subject_id(k: usize) -> String {
    format!("s{k:03}")
}

/// Generates all subjects; deterministic in `spec.seed`.
pub fn generate(spec: &DatasetSpec) -> Vec<SyntheticSubject> {
    (0..spec.subjects)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_mul(1_000_003).wrapping_add(k as u64));
            let fp = FingerprintModel::random(&mut rng, spec.fp_size, spec.fp_size, spec.minutiae);
            let iris = IrisModel::random(&mut rng, spec.eye_size);
            let mut fingerprints = Vec::new();
            let mut impressions = Vec::new();
            for i in 0..spec.fingerprints {
                let acq = if i == 0 {
                    Acquisition {
                        noise: 14.0,
                        ..Acquisition::identity()
                    }
                } else {
                    Acquisition::random_fingerprint(&mut rng)
                };
                let (img, truth) = render_fingerprint(&fp, &acq, &mut rng);
                fingerprints.push(img);
                impressions.push(truth);
            }
            let mut eyes = Vec::new();
            let mut pupils = Vec::new();
            for _ in 0..spec.irises {
                let acq = Acquisition::random_eye(&mut rng);
                pupils.push((iris.centre.0 + acq.dx, iris.centre.1 + acq.dy));
                eyes.push(render_eye(&iris, &acq, &mut rng));
            }
            SyntheticSubject {
                truth: SubjectTruth {
                    id: subject_id(k),
                    fingerprint: fp,
                    iris,
                    impressions,
                    pupils,
                },
                fingerprints,
                eyes,
            }
        })
        .collect()
}

/// Writes `<root>/<id>/fp_<k>.pgm`, `<root>/<id>/iris_<k>.pgm` and
/// `<root>/ground_truth.json`.
pub fn write_dataset(root: impl AsRef<Path>, spec: &DatasetSpec) -> Result<Vec<SubjectTruth>> {
    let root = root.as_ref();
    let subjects = generate(spec);
    for s in &subjects {
        let dir = root.join(&s.truth.id);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (k, img) in s.fingerprints.iter().enumerate() {
            save_gray(img, dir.join(format!("fp_{k}.pgm")))?;
        }
        for (k, img) in s.eyes.iter().enumerate() {
            save_gray(img, dir.join(format!("iris_{k}.pgm")))?;
        }
    }
    let truth: Vec<SubjectTruth> = subjects.into_iter().map(|s| s.truth).collect();
    let path = root.join("ground_truth.json");
    let json = serde_json::to_vec_pretty(&truth).map_err(|e| Error::Dataset(e.to_string()))?;
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(truth)
}

/// Straight ridges `128 + a cos(2 pi (x cos t + y sin t) / period)` whose
/// ridge direction is `theta`.
pub fn ridge_pattern(size: usize, theta: f64, period: f64, amplitude: f64) -> GrayImage {
    let (s, c) = (theta + PI / 2.0).sin_cos();
    GrayImage::from_fn(size, size, |x, y| {
        to_u8(128.0 + amplitude * (TAU * (x as f64 * c + y as f64 * s) / period).cos())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let spec = DatasetSpec {
            subjects: 2,
            fingerprints: 2,
            irises: 1,
            fp_size: 96,
            eye_size: 128,
            minutiae: 4,
            seed: 3,
        };
        let a = generate(&spec);
        let b = generate(&spec);
        assert_eq!(a[1].fingerprints[1], b[1].fingerprints[1]);
        assert_eq!(a[0].eyes[0], b[0].eyes[0]);
        assert_ne!(a[0].fingerprints[0], a[1].fingerprints[0]);
    }

    #[test]
    fn acquisition_maps_invert() {
        let acq = Acquisition {
            rotation: 0.3,
            dx: 4.0,
            dy: -2.0,
            noise: 0.0,
            brightness: 0.0,
        };
        let (x, y) = acq.to_image(10.0, 20.0, (50.0, 50.0));
        let (u, v) = acq.to_model(x, y, (50.0, 50.0));
        assert!((u - 10.0).abs() < 1e-9 && (v - 20.0).abs() < 1e-9);
    }

    #[test]
    fn eye_has_dark_pupil_and_bright_sclera() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = IrisModel::random(&mut rng, 200);
        let img = render_eye(&m, &Acquisition::identity(), &mut rng);
        let (cx, cy) = (m.centre.0.round() as usize, m.centre.1.round() as usize);
        assert!(img.get(cx, cy) < 40);
        assert!(img.get(cx + (m.pupil_radius * 2.6) as usize, cy) > 170);
    }
}
