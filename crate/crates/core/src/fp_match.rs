//! Minutiae pre-alignment and adaptive elastic matching in polar form.
//!
//! A reference pair (one input minutia, one template minutia) is chosen by
//! comparing local neighbour constellations. Both sets are then expressed
//! as `(r, theta, o)` triplets relative to their reference minutia, with the
//! input side de-rotated, and paired greedily under radius-dependent
//! tolerances.

use std::cmp::Ordering;
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp_enhance::{orientation_distance, wrap_pi};
use crate::fp_minutiae::{Minutia, MinutiaeSet};

pub const NEIGHBOUR_RADIUS: f64 = 50.0;
pub const SECTORS: usize = 8;
pub const HYPOTHESES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolarMinutia {
    pub r: f64,
    /// Radial angle in (-pi, pi].
    pub theta: f64,
    /// Orientation relative to the reference frame, in [0, pi).
    pub o: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignmentHypothesis {
    pub input_index: usize,
    pub template_index: usize,
    /// Input reference position minus template reference position.
    pub dx: f64,
    pub dy: f64,
    /// Rotation of the input relative to the template, in [0, 2 pi).
    pub dtheta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticTolerances {
    pub delta_r: f64,
    pub delta_theta: f64,
    pub delta_o: f64,
    /// Fractional widening of the r / theta tolerances per 100 px radius.
    pub growth_per_100px: f64,
}

impl Default for ElasticTolerances {
    fn default() -> Self {
        Self {
            delta_r: 8.0,
            delta_theta: 8f64.to_radians(),
            delta_o: 15f64.to_radians(),
            growth_per_100px: 0.5,
        }
    }
}

impl ElasticTolerances {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("delta_r", self.delta_r),
            ("delta_theta", self.delta_theta),
            ("delta_o", self.delta_o),
            ("growth_per_100px", self.growth_per_100px),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be strictly positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// Which side of the comparison a set belongs to; only the input side is
/// de-rotated by the hypothesis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Input,
    Template,
}

/// Polar conversion used by `to_polar`, swappable for the fixed-point CORDIC.
pub trait PolarConverter {
    /// Returns `(hypot(dx, dy), atan2(dy, dx))`.
    fn polar(&self, dx: f64, dy: f64) -> (f64, f64);
}

/// Library transcendentals.
#[derive(Clone, Copy, Debug, Default)]
pub struct FloatPolar;

impl PolarConverter for FloatPolar {
    fn polar(&self, dx: f64, dy: f64) -> (f64, f64) {
        if dx == 0.0 && dy == 0.0 {
            return (0.0, 0.0);
        }
        (dx.hypot(dy), dy.atan2(dx))
    }
}

#[inline]
fn angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

type Histogram = [u32; SECTORS];

fn constellation(set: &[Minutia], centre: usize, rotation: f64) -> Histogram {
    let c = &set[centre];
    let mut h = [0u32; SECTORS];
    for (j, m) in set.iter().enumerate() {
        if j == centre {
            continue;
        }
        let dx = f64::from(m.x) - f64::from(c.x);
        let dy = f64::from(m.y) - f64::from(c.y);
        if dx.hypot(dy) > NEIGHBOUR_RADIUS {
            continue;
        }
        let a = (dy.atan2(dx) - rotation).rem_euclid(TAU);
        let sector = ((a / TAU * SECTORS as f64) as usize).min(SECTORS - 1);
        h[sector] += 1;
    }
    h
}

fn histogram_similarity(a: &Histogram, b: &Histogram) -> i64 {
    let shared: i64 = a.iter().zip(b).map(|(&x, &y)| i64::from(x.min(y))).sum();
    let diff: i64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (i64::from(x) - i64::from(y)).abs())
        .sum();
    2 * shared - diff
}

/// Ranks every same-kind cross pair by constellation similarity and returns
/// the best `count` hypotheses, best first. Ties go to the smallest
/// `(template_index, input_index)`.
pub fn rank_pairs(input: &MinutiaeSet, template: &MinutiaeSet, count: usize) -> Result<Vec<AlignmentHypothesis>> {
    if input.is_empty() {
        return Err(Error::NoAlignment("input"));
    }
    if template.is_empty() {
        return Err(Error::NoAlignment("template"));
    }
    let tmpl_hist: Vec<Histogram> = (0..template.len())
        .map(|j| constellation(&template.minutiae, j, template.minutiae[j].angle))
        .collect();

    // (score, template index, input index, hypothesis)
    let mut scored: Vec<(i64, usize, usize, AlignmentHypothesis)> = Vec::new();
    for (i, mi) in input.minutiae.iter().enumerate() {
        for (j, mt) in template.minutiae.iter().enumerate() {
            if mi.kind != mt.kind {
                continue;
            }
            // orientations are pi-periodic, so both half-turns are candidates
            let base = (mi.angle - mt.angle).rem_euclid(TAU);
            let mut best: Option<(i64, f64)> = None;
            for dtheta in [base, (base + PI).rem_euclid(TAU)] {
                let h = constellation(&input.minutiae, i, mt.angle + dtheta);
                let s = histogram_similarity(&h, &tmpl_hist[j]);
                if best.is_none_or(|(b, _)| s > b) {
                    best = Some((s, dtheta));
                }
            }
            let (score, dtheta) = best.expect("two candidates evaluated");
            scored.push((
                score,
                j,
                i,
                AlignmentHypothesis {
                    input_index: i,
                    template_index: j,
                    dx: f64::from(mi.x) - f64::from(mt.x),
                    dy: f64::from(mi.y) - f64::from(mt.y),
                    dtheta,
                },
            ));
        }
    }
    if scored.is_empty() {
        // no same-kind pair at all; fall back to the first pair of each set
        let (mi, mt) = (&input.minutiae[0], &template.minutiae[0]);
        return Ok(vec![AlignmentHypothesis {
            input_index: 0,
            template_index: 0,
            dx: f64::from(mi.x) - f64::from(mt.x),
            dy: f64::from(mi.y) - f64::from(mt.y),
            dtheta: (mi.angle - mt.angle).rem_euclid(TAU),
        }]);
    }
    scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    Ok(scored.into_iter().take(count).map(|s| s.3).collect())
}

pub fn find_best_pair(input: &MinutiaeSet, template: &MinutiaeSet) -> Result<AlignmentHypothesis> {
    Ok(rank_pairs(input, template, 1)?[0])
}

pub fn to_polar_with(
    set: &MinutiaeSet,
    hyp: &AlignmentHypothesis,
    side: Side,
    conv: &impl PolarConverter,
) -> Vec<PolarMinutia> {
    let (reference, rotation) = match side {
        Side::Input => (&set.minutiae[hyp.input_index], hyp.dtheta),
        Side::Template => (&set.minutiae[hyp.template_index], 0.0),
    };
    let (s, c) = (-rotation).sin_cos();
    let mut out: Vec<PolarMinutia> = set
        .minutiae
        .iter()
        .map(|m| {
            let dx = f64::from(m.x) - f64::from(reference.x);
            let dy = f64::from(m.y) - f64::from(reference.y);
            let (rx, ry) = (dx * c - dy * s, dx * s + dy * c);
            let (r, theta) = conv.polar(rx, ry);
            PolarMinutia {
                r,
                theta,
                o: wrap_pi(m.angle - rotation),
            }
        })
        .collect();
    out.sort_by(|a, b| a.theta.partial_cmp(&b.theta).unwrap_or(Ordering::Equal));
    out
}

pub fn to_polar(set: &MinutiaeSet, hyp: &AlignmentHypothesis, side: Side) -> Vec<PolarMinutia> {
    to_polar_with(set, hyp, side, &FloatPolar)
}

/// Greedy one-to-one pairing under elastic tolerances; returns the number of
/// paired minutiae.
pub fn elastic_pairs(input: &[PolarMinutia], template: &[PolarMinutia], tol: &ElasticTolerances) -> usize {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, a) in input.iter().enumerate() {
        for (j, b) in template.iter().enumerate() {
            let s = 1.0 + tol.growth_per_100px * (0.5 * (a.r + b.r) / 100.0);
            let dr = (a.r - b.r).abs();
            // the radial angle is undefined at the origin
            let dt = if a.r < 1e-9 || b.r < 1e-9 {
                0.0
            } else {
                angle_distance(a.theta, b.theta)
            };
            let dorient = orientation_distance(a.o, b.o);
            if dr <= tol.delta_r * s && dt <= tol.delta_theta * s && dorient <= tol.delta_o {
                let residual = dr / (tol.delta_r * s) + dt / (tol.delta_theta * s) + dorient / tol.delta_o;
                candidates.push((residual, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut used_i = vec![false; input.len()];
    let mut used_j = vec![false; template.len()];
    let mut matched = 0;
    for (_, i, j) in candidates {
        if !used_i[i] && !used_j[j] {
            used_i[i] = true;
            used_j[j] = true;
            matched += 1;
        }
    }
    matched
}

/// Similarity in [0, 1]: matched / max(|input|, |template|).
pub fn elastic_match(input: &[PolarMinutia], template: &[PolarMinutia], tol: &ElasticTolerances) -> f64 {
    let n = input.len().max(template.len());
    if n == 0 || input.is_empty() || template.is_empty() {
        return 0.0;
    }
    (elastic_pairs(input, template, tol) as f64 / n as f64).clamp(0.0, 1.0)
}

pub fn match_fingerprint_with(
    input: &MinutiaeSet,
    template: &MinutiaeSet,
    tol: &ElasticTolerances,
    conv: &impl PolarConverter,
) -> f64 {
    let Ok(hyps) = rank_pairs(input, template, HYPOTHESES) else {
        return 0.0;
    };
    hyps.iter()
        .map(|h| {
            let a = to_polar_with(input, h, Side::Input, conv);
            let b = to_polar_with(template, h, Side::Template, conv);
            elastic_match(&a, &b, tol)
        })
        .fold(0.0, f64::max)
}

pub fn match_fingerprint(input: &MinutiaeSet, template: &MinutiaeSet, tol: &ElasticTolerances) -> f64 {
    match_fingerprint_with(input, template, tol, &FloatPolar)
}
