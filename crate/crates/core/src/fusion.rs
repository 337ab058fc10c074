//! Weighted sum-rule score fusion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    Similarity,
    Dissimilarity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trait {
    Fingerprint,
    Iris,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    pub value: f64,
    pub polarity: Polarity,
    #[serde(rename = "trait")]
    pub trait_: Trait,
}

impl MatchScore {
    pub fn fingerprint(similarity: f64) -> Self {
        Self {
            value: similarity.clamp(0.0, 1.0),
            polarity: Polarity::Similarity,
            trait_: Trait::Fingerprint,
        }
    }

    pub fn iris_hd(hd: f64) -> Self {
        Self {
            value: hd.clamp(0.0, 1.0),
            polarity: Polarity::Dissimilarity,
            trait_: Trait::Iris,
        }
    }

    pub fn to_similarity(&self) -> f64 {
        to_similarity(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Self { lo: 0.0, hi: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    #[default]
    None,
    /// Calibrated min-max on the similarity scale, per trait.
    MinMax { fingerprint: Bounds, iris: Bounds },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    pub w_fp: f64,
    pub w_iris: f64,
    pub threshold: f64,
    pub normalization: Normalization,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            w_fp: 0.4,
            w_iris: 0.6,
            threshold: 0.5,
            normalization: Normalization::None,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<()> {
        if self.w_fp < 0.0 || self.w_iris < 0.0 || (self.w_fp + self.w_iris - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "fusion weights must be non-negative and sum to 1 (got {} + {})",
                self.w_fp, self.w_iris
            )));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if let Normalization::MinMax { fingerprint, iris } = self.normalization {
            for b in [fingerprint, iris] {
                if b.hi <= b.lo {
                    return Err(Error::Calibration { lo: b.lo, hi: b.hi });
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentScores {
    pub fingerprint: f64,
    pub iris: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusedDecision {
    pub fused_score: f64,
    pub accept: bool,
    pub component_scores: ComponentScores,
}

pub fn to_similarity(score: &MatchScore) -> f64 {
    match score.polarity {
        Polarity::Similarity => score.value,
        Polarity::Dissimilarity => 1.0 - score.value,
    }
}

#[inline]
fn min_max(s: f64, b: Bounds) -> f64 {
    ((s - b.lo) / (b.hi - b.lo)).clamp(0.0, 1.0)
}

pub fn min_max_normalize(scores: &[f64], lo: f64, hi: f64) -> Result<Vec<f64>> {
    if !(hi > lo) {
        return Err(Error::Calibration { lo, hi });
    }
    let b = Bounds { lo, hi };
    Ok(scores.iter().map(|&s| min_max(s, b)).collect())
}

/// Similarity of each trait after the configured normalization.
pub fn normalized_similarities(fp: &MatchScore, iris: &MatchScore, params: &FusionParams) -> (f64, f64) {
    let (s_fp, s_iris) = (to_similarity(fp), to_similarity(iris));
    match params.normalization {
        Normalization::None => (s_fp, s_iris),
        Normalization::MinMax { fingerprint, iris } => (min_max(s_fp, fingerprint), min_max(s_iris, iris)),
    }
}

/// Fused score `w_fp * s_fp + w_iris * s_iris`; accepted when it reaches
/// the threshold.
pub fn fuse(fp: &MatchScore, iris: &MatchScore, params: &FusionParams) -> FusedDecision {
    let (s_fp, s_iris) = normalized_similarities(fp, iris, params);
    let fused = (params.w_fp * s_fp + params.w_iris * s_iris).clamp(0.0, 1.0);
    FusedDecision {
        fused_score: fused,
        accept: fused >= params.threshold,
        component_scores: ComponentScores {
            fingerprint: s_fp,
            iris: s_iris,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn similarity_conversion() {
        assert_eq!(to_similarity(&MatchScore::fingerprint(0.8)), 0.8);
        assert_eq!(to_similarity(&MatchScore::iris_hd(0.0)), 1.0);
        assert_eq!(to_similarity(&MatchScore::iris_hd(0.5)), 0.5);
    }

    #[test]
    fn min_max_examples() {
        let out = min_max_normalize(&[0.2, 0.6, 0.4, 0.1, 0.9], 0.2, 0.6).unwrap();
        assert_eq!(out[0], 0.0);
        assert_eq!(out[1], 1.0);
        assert!((out[2] - 0.5).abs() < 1e-12);
        assert_eq!(out[3], 0.0);
        assert_eq!(out[4], 1.0);
        assert!(matches!(
            min_max_normalize(&[0.5], 0.6, 0.6),
            Err(Error::Calibration { .. })
        ));
    }

    #[test]
    fn fuse_examples() {
        let p = FusionParams::default();
        let d = fuse(&MatchScore::fingerprint(1.0), &MatchScore::iris_hd(0.0), &p);
        assert!((d.fused_score - 1.0).abs() < 1e-12 && d.accept);
        let d = fuse(&MatchScore::fingerprint(1.0), &MatchScore::iris_hd(1.0), &p);
        assert!((d.fused_score - 0.4).abs() < 1e-12 && !d.accept);
        let d = fuse(&MatchScore::fingerprint(0.0), &MatchScore::iris_hd(0.5), &p);
        assert!((d.fused_score - 0.3).abs() < 1e-12 && !d.accept);
    }

    #[test]
    fn weights_must_sum_to_one() {
        let p = FusionParams {
            w_fp: 0.5,
            w_iris: 0.6,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }
}
