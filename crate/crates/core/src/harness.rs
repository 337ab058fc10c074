//! Enrollment, verification, the FAR/FRR evaluation protocol and the
//! backend equivalence report.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::backend::{fingerprint_features, fingerprint_trace, iris_features, iris_trace, match_fingerprints, match_irises, Backend};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fp_minutiae::MinutiaeSet;
use crate::fusion::{fuse, FusedDecision, FusionParams, MatchScore};
use crate::hwmodel::fingerprint::fingerprint_stages;
use crate::hwmodel::iris::iris_stages;
use crate::hwmodel::pipeline::{compare_modes, image_rows};
use crate::hwmodel::{ContrastEstimator, StageReport};
use crate::imgio::{load_gray, DatasetIndex, SubjectEntry, TemplateRecord};
use crate::iris_code::{majority_template, IrisCode};
use crate::raster::GrayImage;

fn now_secs() -> Option<u64> {
    SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs())
}

fn load(path: &Path) -> Result<GrayImage> {
    load_gray(path).map_err(|e| e.in_stage("load"))
}

/// Builds a template from a subject's first fingerprint impression and a
/// majority vote over its first `enroll_iris` iris codes.
pub fn enroll(entry: &SubjectEntry, cfg: &RunConfig, backend: Backend) -> Result<TemplateRecord> {
    let need = cfg.harness.enroll_iris;
    if entry.fingerprints.len() < cfg.harness.enroll_fp {
        return Err(Error::Enrollment(format!(
            "subject {}: {} fingerprint image(s), need {}",
            entry.id,
            entry.fingerprints.len(),
            cfg.harness.enroll_fp
        )));
    }
    if entry.irises.len() < need {
        return Err(Error::Enrollment(format!(
            "subject {}: {} iris image(s), need {need}",
            entry.id,
            entry.irises.len()
        )));
    }
    let fingerprint = fingerprint_features(&load(&entry.fingerprints[0])?, cfg, backend)?;
    let codes = entry.irises[..need]
        .iter()
        .map(|p| iris_features(&load(p)?, cfg, backend))
        .collect::<Result<Vec<_>>>()?;
    let iris = majority_template(&codes)?;
    debug!("enrolled {}: {} minutiae, {} valid iris samples", entry.id, fingerprint.len(), iris.valid_count());
    Ok(TemplateRecord {
        subject_id: entry.id.clone(),
        fingerprint,
        iris,
        created_at: now_secs(),
    })
}

/// Enrolls every subject of a dataset.
pub fn enroll_all(index: &DatasetIndex, cfg: &RunConfig, backend: Backend) -> Result<Vec<TemplateRecord>> {
    index.subjects.iter().map(|s| enroll(s, cfg, backend)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraitOutcome {
    /// Similarity on `[0, 1]`; 0 when the trait failed.
    pub similarity: f64,
    /// Iris only: fractional Hamming distance and bits compared.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compared_bits: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed: Option<String>,
}

impl TraitOutcome {
    fn failure(e: &Error) -> Self {
        Self {
            similarity: 0.0,
            hd: None,
            compared_bits: None,
            failed: Some(e.to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub subject_id: String,
    pub backend: Backend,
    pub decision: FusedDecision,
    pub fingerprint: TraitOutcome,
    pub iris: TraitOutcome,
}

impl Verification {
    pub fn any_failed(&self) -> bool {
        self.fingerprint.failed.is_some() || self.iris.failed.is_some()
    }
}

fn score_fingerprint(probe: &Result<MinutiaeSet>, template: &MinutiaeSet, cfg: &RunConfig, backend: Backend) -> TraitOutcome {
    match probe {
        Ok(m) => TraitOutcome {
            similarity: match_fingerprints(m, template, cfg, backend),
            hd: None,
            compared_bits: None,
            failed: None,
        },
        Err(e) => TraitOutcome::failure(e),
    }
}

fn score_iris(probe: &Result<IrisCode>, template: &IrisCode, cfg: &RunConfig) -> TraitOutcome {
    let code = match probe {
        Ok(c) => c,
        Err(e) => return TraitOutcome::failure(e),
    };
    match match_irises(code, template, cfg) {
        Ok(s) => TraitOutcome {
            similarity: 1.0 - s.hd,
            hd: Some(s.hd),
            compared_bits: Some(s.compared_bits),
            failed: None,
        },
        Err(e) => TraitOutcome::failure(&e.in_stage("hamming")),
    }
}

fn decide(fp: &TraitOutcome, iris: &TraitOutcome, fusion: &FusionParams) -> FusedDecision {
    fuse(&MatchScore::fingerprint(fp.similarity), &MatchScore::iris_hd(1.0 - iris.similarity), fusion)
}

/// Scores already extracted probe features against a template. A trait that
/// failed upstream contributes similarity 0 and is flagged.
pub fn verify_features(
    fp: &Result<MinutiaeSet>,
    iris: &Result<IrisCode>,
    template: &TemplateRecord,
    cfg: &RunConfig,
    backend: Backend,
) -> Verification {
    let fingerprint = score_fingerprint(fp, &template.fingerprint, cfg, backend);
    let iris = score_iris(iris, &template.iris, cfg);
    for (name, t) in [("fingerprint", &fingerprint), ("iris", &iris)] {
        if let Some(reason) = &t.failed {
            warn!("{name} trait failed, scored as 0: {reason}");
        }
    }
    Verification {
        subject_id: template.subject_id.clone(),
        backend,
        decision: decide(&fingerprint, &iris, &cfg.fusion),
        fingerprint,
        iris,
    }
}

pub fn verify(fp_probe: &Path, iris_probe: &Path, template: &TemplateRecord, cfg: &RunConfig, backend: Backend) -> Verification {
    let fp = load(fp_probe).and_then(|img| fingerprint_features(&img, cfg, backend));
    let iris = load(iris_probe).and_then(|img| iris_features(&img, cfg, backend));
    verify_features(&fp, &iris, template, cfg, backend)
}

/// Similarities of one comparison, before fusion.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialScores {
    pub fingerprint: TraitOutcome,
    pub iris: TraitOutcome,
}

/// Source of comparison scores for the evaluation protocol.
pub trait Scorer {
    /// Number of probes held by `subject`.
    fn probes(&self, subject: usize) -> usize;
    /// Scores probe `probe` of `subject` against the template of `template`.
    fn score(&self, subject: usize, probe: usize, template: usize) -> TrialScores;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub probe_subject: String,
    pub probe: usize,
    pub template_subject: String,
    pub genuine: bool,
    pub fingerprint: f64,
    pub iris: f64,
    pub fused: f64,
    pub accept: bool,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Roc {
    pub thresholds: Vec<f64>,
    pub far: Vec<f64>,
    pub frr: Vec<f64>,
    pub eer: f64,
    pub eer_threshold: f64,
    /// FAR / FRR at the configured decision threshold.
    pub far_at_threshold: f64,
    pub frr_at_threshold: f64,
}

fn rate(scores: &[f64], f: impl Fn(f64) -> bool) -> f64 {
    scores.iter().filter(|&&s| f(s)).count() as f64 / scores.len() as f64
}

/// Sweeps `points` evenly spaced thresholds over `[0, 1]`. FAR counts
/// impostors at or above the threshold, FRR genuines below it. The EER is
/// interpolated linearly at the first sweep step where FAR drops to FRR.
pub fn roc(genuine: &[f64], impostor: &[f64], points: usize, threshold: f64) -> Result<Roc> {
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::Dataset("ROC needs at least one genuine and one impostor score".into()));
    }
    if points < 2 {
        return Err(Error::Config("sweep needs at least 2 points".into()));
    }
    let thresholds: Vec<f64> = (0..points).map(|k| k as f64 / (points - 1) as f64).collect();
    let far: Vec<f64> = thresholds.iter().map(|&t| rate(impostor, |s| s >= t)).collect();
    let frr: Vec<f64> = thresholds.iter().map(|&t| rate(genuine, |s| s < t)).collect();
    let d = |k: usize| far[k] - frr[k];
    let (eer, eer_threshold) = match (0..points).find(|&k| d(k) <= 0.0) {
        Some(0) => ((far[0] + frr[0]) / 2.0, thresholds[0]),
        Some(k) => {
            let a = d(k - 1) / (d(k - 1) - d(k));
            let lerp = |v: &[f64]| v[k - 1] + a * (v[k] - v[k - 1]);
            (lerp(&far), lerp(&thresholds))
        }
        None => ((far[points - 1] + frr[points - 1]) / 2.0, 1.0),
    };
    Ok(Roc {
        far_at_threshold: rate(impostor, |s| s >= threshold),
        frr_at_threshold: rate(genuine, |s| s < threshold),
        thresholds,
        far,
        frr,
        eer,
        eer_threshold,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub backend: Backend,
    pub subjects: Vec<String>,
    pub genuine_trials: usize,
    pub impostor_trials: usize,
    pub fingerprint: Roc,
    pub iris: Roc,
    pub fused: Roc,
    #[serde(skip)]
    pub trials: Vec<Trial>,
}

/// Every probe of every subject against every template: genuine against its
/// own, impostor against all others.
pub fn run_protocol(
    subjects: &[String],
    scorer: &dyn Scorer,
    fusion: &FusionParams,
    points: usize,
    backend: Backend,
) -> Result<Evaluation> {
    if subjects.len() < 2 {
        return Err(Error::Dataset(format!("evaluation needs at least 2 subjects, found {}", subjects.len())));
    }
    let mut trials = Vec::new();
    for (s, id) in subjects.iter().enumerate() {
        let n = scorer.probes(s);
        if n == 0 {
            return Err(Error::Dataset(format!("subject {id} has no probe images")));
        }
        for probe in 0..n {
            for (t, tid) in subjects.iter().enumerate() {
                let sc = scorer.score(s, probe, t);
                let decision = decide(&sc.fingerprint, &sc.iris, fusion);
                let failures = [sc.fingerprint.failed, sc.iris.failed].into_iter().flatten().collect();
                trials.push(Trial {
                    probe_subject: id.clone(),
                    probe,
                    template_subject: tid.clone(),
                    genuine: s == t,
                    fingerprint: decision.component_scores.fingerprint,
                    iris: decision.component_scores.iris,
                    fused: decision.fused_score,
                    accept: decision.accept,
                    failures,
                });
            }
        }
    }
    let split = |f: fn(&Trial) -> f64, genuine: bool| -> Vec<f64> { trials.iter().filter(|t| t.genuine == genuine).map(f).collect() };
    let curve = |f: fn(&Trial) -> f64| roc(&split(f, true), &split(f, false), points, fusion.threshold);
    let eval = Evaluation {
        backend,
        subjects: subjects.to_vec(),
        genuine_trials: trials.iter().filter(|t| t.genuine).count(),
        impostor_trials: trials.iter().filter(|t| !t.genuine).count(),
        fingerprint: curve(|t| t.fingerprint)?,
        iris: curve(|t| t.iris)?,
        fused: curve(|t| t.fused)?,
        trials,
    };
    info!(
        "EER fingerprint {:.4}, iris {:.4}, fused {:.4}",
        eval.fingerprint.eer, eval.iris.eer, eval.fused.eer
    );
    Ok(eval)
}

/// Probe features of one subject: fingerprint impression `enroll_fp + k`
/// paired with iris image `enroll_iris + k`.
struct SubjectFeatures {
    template: TemplateRecord,
    probes: Vec<(Result<MinutiaeSet>, Result<IrisCode>)>,
}

/// Scores a dataset with features extracted once per image.
pub struct DatasetScorer {
    subjects: Vec<SubjectFeatures>,
    cfg: RunConfig,
    backend: Backend,
}

impl DatasetScorer {
    pub fn build(index: &DatasetIndex, cfg: &RunConfig, backend: Backend) -> Result<Self> {
        let h = &cfg.harness;
        let mut subjects = Vec::with_capacity(index.subjects.len());
        for entry in &index.subjects {
            let template = enroll(entry, cfg, backend).map_err(|e| e.in_stage(format!("enroll {}", entry.id)))?;
            let fps = entry.fingerprints.get(h.enroll_fp..).unwrap_or_default();
            let irises = entry.irises.get(h.enroll_iris..).unwrap_or_default();
            let probes = fps
                .iter()
                .zip(irises)
                .map(|(f, i)| {
                    (
                        load(f).and_then(|img| fingerprint_features(&img, cfg, backend)),
                        load(i).and_then(|img| iris_features(&img, cfg, backend)),
                    )
                })
                .collect();
            subjects.push(SubjectFeatures { template, probes });
        }
        Ok(Self {
            subjects,
            cfg: cfg.clone(),
            backend,
        })
    }

    pub fn templates(&self) -> impl Iterator<Item = &TemplateRecord> {
        self.subjects.iter().map(|s| &s.template)
    }
}

impl Scorer for DatasetScorer {
    fn probes(&self, subject: usize) -> usize {
        self.subjects[subject].probes.len()
    }

    fn score(&self, subject: usize, probe: usize, template: usize) -> TrialScores {
        let (fp, iris) = &self.subjects[subject].probes[probe];
        let t = &self.subjects[template].template;
        TrialScores {
            fingerprint: score_fingerprint(fp, &t.fingerprint, &self.cfg, self.backend),
            iris: score_iris(iris, &t.iris, &self.cfg),
        }
    }
}

pub fn evaluate(index: &DatasetIndex, cfg: &RunConfig, backend: Backend) -> Result<Evaluation> {
    let scorer = DatasetScorer::build(index, cfg, backend)?;
    let ids: Vec<String> = index.subjects.iter().map(|s| s.id.clone()).collect();
    run_protocol(&ids, &scorer, &cfg.fusion, cfg.harness.sweep_points, backend)
}

fn histogram_svg(eval: &Evaluation) -> String {
    const BINS: usize = 50;
    const W: f64 = 600.0;
    const H: f64 = 240.0;
    let count = |genuine: bool| {
        let mut h = [0usize; BINS];
        for t in eval.trials.iter().filter(|t| t.genuine == genuine) {
            h[((t.fused * BINS as f64) as usize).min(BINS - 1)] += 1;
        }
        h
    };
    let (g, i) = (count(true), count(false));
    let norm = |h: &[usize; BINS]| {
        let n = h.iter().sum::<usize>().max(1) as f64;
        h.map(|c| c as f64 / n)
    };
    let (g, i) = (norm(&g), norm(&i));
    let peak = g.iter().chain(&i).cloned().fold(1e-9, f64::max);
    let bw = W / BINS as f64;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"11\">\n",
        H + 40.0
    );
    for (h, colour) in [(&i, "#d62728"), (&g, "#1f77b4")] {
        for (k, v) in h.iter().enumerate() {
            let bh = v / peak * H;
            let _ = writeln!(
                svg,
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{bh:.1}\" fill=\"{colour}\" fill-opacity=\"0.5\"/>",
                k as f64 * bw,
                H - bh,
                bw
            );
        }
    }
    let _ = writeln!(
        svg,
        "<line x1=\"0\" y1=\"{H}\" x2=\"{W}\" y2=\"{H}\" stroke=\"black\"/>\n<text x=\"0\" y=\"{}\">0</text><text x=\"{}\" y=\"{}\">1</text>\n<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">fused score (blue genuine, red impostor, EER {:.3})</text>\n</svg>",
        H + 14.0,
        W - 8.0,
        H + 14.0,
        W / 2.0,
        H + 32.0,
        eval.fused.eer
    );
    svg
}

/// Writes `roc.csv`, `summary.json`, `trials.jsonl` and `scores.svg`.
pub fn write_artifacts(eval: &Evaluation, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(p, e))
    };
    let mut csv = String::from("threshold,far_fp,frr_fp,far_iris,frr_iris,far_fused,frr_fused\n");
    for k in 0..eval.fused.thresholds.len() {
        let _ = writeln!(
            csv,
            "{:.4},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            eval.fused.thresholds[k],
            eval.fingerprint.far[k],
            eval.fingerprint.frr[k],
            eval.iris.far[k],
            eval.iris.frr[k],
            eval.fused.far[k],
            eval.fused.frr[k]
        );
    }
    write("roc.csv", csv)?;
    write("summary.json", serde_json::to_string_pretty(eval).expect("serializable"))?;
    let mut lines = String::new();
    for t in &eval.trials {
        lines.push_str(&serde_json::to_string(t).expect("serializable"));
        lines.push('\n');
    }
    write("trials.jsonl", lines)?;
    write("scores.svg", histogram_svg(eval))
}

/// Symmetric Hausdorff distance between two point sets; 0 when both are
/// empty, infinite when only one is.
pub fn hausdorff(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let directed = |p: &[(f64, f64)], q: &[(f64, f64)]| {
        p.iter()
            .map(|&(x, y)| q.iter().map(|&(u, v)| (x - u).hypot(y - v)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

fn positions(m: &MinutiaeSet) -> Vec<(f64, f64)> {
    m.minutiae.iter().map(|p| (f64::from(p.x), f64::from(p.y))).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FingerprintEquivalence {
    pub image: String,
    pub reference_minutiae: usize,
    pub hw_minutiae: usize,
    pub hausdorff: f64,
    /// Fraction of binarized pixels that differ.
    pub binary_disagreement: f64,
    pub pipelined_identical: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrisEquivalence {
    pub image: String,
    /// Plane bits that differ, over bits valid in both codes.
    pub bit_disagreement: f64,
    pub mask_disagreement: f64,
    /// Enhanced samples within 6 grey levels of the reference.
    pub enhanced_within_6: f64,
    pub power_law_bit_disagreement: f64,
    pub power_law_enhanced_within_6: f64,
    pub pipelined_identical: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub fingerprints: Vec<FingerprintEquivalence>,
    pub irises: Vec<IrisEquivalence>,
    pub max_hausdorff: f64,
    pub fingerprints_within_3px: usize,
    pub max_bit_disagreement: f64,
    pub all_pipelined_identical: bool,
    pub fingerprint_stages: Vec<StageReport>,
    pub iris_stages: Vec<StageReport>,
}

fn fingerprint_equivalence(name: &str, img: &GrayImage, cfg: &RunConfig) -> Result<(FingerprintEquivalence, Vec<StageReport>)> {
    let r = fingerprint_trace(img, cfg, Backend::Reference)?;
    let h = fingerprint_trace(img, cfg, Backend::HardwareModel)?;
    let cmp = compare_modes(|| fingerprint_stages(&cfg.filter, &cfg.hw), &image_rows(img), cfg.hw.queue_rows)?;
    let differ = r.binary.pixels().iter().zip(h.binary.pixels()).filter(|(a, b)| a != b).count();
    Ok((
        FingerprintEquivalence {
            image: name.to_string(),
            reference_minutiae: r.minutiae.len(),
            hw_minutiae: h.minutiae.len(),
            hausdorff: hausdorff(&positions(&r.minutiae), &positions(&h.minutiae)),
            binary_disagreement: differ as f64 / img.pixels().len() as f64,
            pipelined_identical: cmp.bit_identical,
        },
        h.run.map(|r| r.reports).unwrap_or_default(),
    ))
}

/// (plane-bit disagreement, mask disagreement)
pub fn code_disagreement(a: &IrisCode, b: &IrisCode) -> (f64, f64) {
    let (mut bits, mut differ, mut mask) = (0usize, 0usize, 0usize);
    for i in 0..a.len().min(b.len()) {
        if a.mask[i] != b.mask[i] {
            mask += 1;
        }
        if a.mask[i] && b.mask[i] {
            bits += 6;
            differ += ((a.planes[i] ^ b.planes[i]) & 0x3f).count_ones() as usize;
        }
    }
    (differ as f64 / bits.max(1) as f64, mask as f64 / a.len().max(1) as f64)
}

fn within_6(a: &GrayImage, b: &GrayImage, code: &IrisCode) -> f64 {
    let (mut n, mut ok) = (0usize, 0usize);
    for ((&x, &y), &m) in a.pixels().iter().zip(b.pixels()).zip(&code.mask) {
        if m {
            n += 1;
            ok += usize::from((i16::from(x) - i16::from(y)).abs() <= 6);
        }
    }
    ok as f64 / n.max(1) as f64
}

fn iris_equivalence(name: &str, eye: &GrayImage, cfg: &RunConfig) -> Result<(IrisEquivalence, Vec<StageReport>)> {
    let r = iris_trace(eye, cfg, Backend::Reference)?;
    let h = iris_trace(eye, cfg, Backend::HardwareModel)?;
    let mut pl_cfg = cfg.clone();
    pl_cfg.hw.contrast = ContrastEstimator::power_law();
    let pl = iris_trace(eye, &pl_cfg, Backend::HardwareModel)?;
    let cmp = compare_modes(
        || iris_stages(&cfg.segment, cfg.iris.sigma1, &cfg.hw),
        &image_rows(eye),
        cfg.hw.queue_rows,
    )?;
    let (bit, mask) = code_disagreement(&r.code, &h.code);
    Ok((
        IrisEquivalence {
            image: name.to_string(),
            bit_disagreement: bit,
            mask_disagreement: mask,
            enhanced_within_6: within_6(&r.enhanced, &h.enhanced, &r.code),
            power_law_bit_disagreement: code_disagreement(&r.code, &pl.code).0,
            power_law_enhanced_within_6: within_6(&r.enhanced, &pl.enhanced, &r.code),
            pipelined_identical: cmp.bit_identical,
            failed: None,
        },
        h.run.map(|r| r.reports).unwrap_or_default(),
    ))
}

/// Compares both backends on named fingerprint and eye images.
pub fn equivalence(fingerprints: &[(String, GrayImage)], eyes: &[(String, GrayImage)], cfg: &RunConfig) -> Result<EquivalenceReport> {
    let mut fp_rows = Vec::new();
    let mut fp_stages = Vec::new();
    for (name, img) in fingerprints {
        let (row, reports) = fingerprint_equivalence(name, img, cfg).map_err(|e| e.in_stage(name.clone()))?;
        debug!("{name}: hausdorff {:.2}", row.hausdorff);
        fp_rows.push(row);
        if fp_stages.is_empty() {
            fp_stages = reports;
        }
    }
    let mut iris_rows = Vec::new();
    let mut iris_stage_reports = Vec::new();
    for (name, eye) in eyes {
        match iris_equivalence(name, eye, cfg) {
            Ok((row, reports)) => {
                iris_rows.push(row);
                if iris_stage_reports.is_empty() {
                    iris_stage_reports = reports;
                }
            }
            Err(e) => {
                warn!("{name}: {e}");
                iris_rows.push(IrisEquivalence {
                    image: name.clone(),
                    bit_disagreement: 1.0,
                    mask_disagreement: 1.0,
                    enhanced_within_6: 0.0,
                    power_law_bit_disagreement: 1.0,
                    power_law_enhanced_within_6: 0.0,
                    pipelined_identical: false,
                    failed: Some(e.to_string()),
                });
            }
        }
    }
    Ok(EquivalenceReport {
        max_hausdorff: fp_rows.iter().map(|r| r.hausdorff).fold(0.0, f64::max),
        fingerprints_within_3px: fp_rows.iter().filter(|r| r.hausdorff <= 3.0).count(),
        max_bit_disagreement: iris_rows.iter().map(|r| r.bit_disagreement).fold(0.0, f64::max),
        all_pipelined_identical: fp_rows.iter().all(|r| r.pipelined_identical) && iris_rows.iter().all(|r| r.pipelined_identical),
        fingerprints: fp_rows,
        irises: iris_rows,
        fingerprint_stages: fp_stages,
        iris_stages: iris_stage_reports,
    })
}

/// Loads every image of a dataset for [`equivalence`].
pub fn dataset_images(index: &DatasetIndex) -> Result<(Vec<(String, GrayImage)>, Vec<(String, GrayImage)>)> {
    let name = |s: &SubjectEntry, p: &Path| format!("{}/{}", s.id, p.file_name().unwrap_or_default().to_string_lossy());
    let mut fps = Vec::new();
    let mut eyes = Vec::new();
    for s in &index.subjects {
        for p in &s.fingerprints {
            fps.push((name(s, p), load(p)?));
        }
        for p in &s.irises {
            eyes.push((name(s, p), load(p)?));
        }
    }
    Ok((fps, eyes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roc_separable_and_identical() {
        let g = [0.9, 0.8, 0.95];
        let i = [0.1, 0.2, 0.3];
        let r = roc(&g, &i, 201, 0.5).unwrap();
        assert_eq!(r.eer, 0.0);
        assert!(r.eer_threshold > 0.3 && r.eer_threshold <= 0.8);
        let same = [0.2, 0.4, 0.6, 0.8];
        let r = roc(&same, &same, 201, 0.5).unwrap();
        assert!((r.eer - 0.5).abs() < 1e-12, "{}", r.eer);
    }

    #[test]
    fn roc_interpolates_between_steps() {
        // FAR 0.5 -> 0 and FRR 0 -> 0.5 between 0.50 and 0.51.
        let r = roc(&[0.505, 0.9], &[0.1, 0.505], 101, 0.5).unwrap();
        assert!((r.eer - 0.25).abs() < 1e-12, "{}", r.eer);
        assert!((r.eer_threshold - 0.505).abs() < 1e-12);
    }

    #[test]
    fn roc_rejects_empty() {
        assert!(roc(&[], &[0.5], 11, 0.5).is_err());
        assert!(roc(&[0.5], &[0.5], 1, 0.5).is_err());
    }

    #[test]
    fn hausdorff_basics() {
        assert_eq!(hausdorff(&[], &[]), 0.0);
        assert!(hausdorff(&[(0.0, 0.0)], &[]).is_infinite());
        let a = [(0.0, 0.0), (10.0, 0.0)];
        let b = [(0.0, 1.0)];
        assert!((hausdorff(&a, &b) - 101f64.sqrt()).abs() < 1e-12);
        assert_eq!(hausdorff(&a, &b), hausdorff(&b, &a));
    }

    struct Stub;

    impl Scorer for Stub {
        fn probes(&self, _: usize) -> usize {
            2
        }
        fn score(&self, s: usize, _: usize, t: usize) -> TrialScores {
            let ok = |v: f64| TraitOutcome {
                similarity: v,
                hd: None,
                compared_bits: None,
                failed: None,
            };
            if s == t {
                TrialScores {
                    fingerprint: ok(0.9),
                    iris: ok(0.8),
                }
            } else {
                TrialScores {
                    fingerprint: ok(0.1),
                    iris: TraitOutcome::failure(&Error::PupilNotFound),
                }
            }
        }
    }

    #[test]
    fn protocol_counts_and_failure_policy() {
        let ids: Vec<String> = (0..3).map(|k| format!("s{k}")).collect();
        let e = run_protocol(&ids, &Stub, &FusionParams::default(), 201, Backend::Reference).unwrap();
        assert_eq!(e.genuine_trials, 6);
        assert_eq!(e.impostor_trials, 12);
        assert_eq!(e.fused.eer, 0.0);
        let imp = e.trials.iter().find(|t| !t.genuine).unwrap();
        assert_eq!(imp.iris, 0.0);
        assert_eq!(imp.failures.len(), 1);
        assert!((imp.fused - 0.04).abs() < 1e-12);
        assert!(run_protocol(&ids[..1], &Stub, &FusionParams::default(), 201, Backend::Reference).is_err());
    }

    #[test]
    fn failed_iris_scores_zero() {
        let cfg = RunConfig::default();
        let template = TemplateRecord {
            subject_id: "s000".into(),
            fingerprint: MinutiaeSet::default(),
            iris: IrisCode::zeros(4, 8),
            created_at: None,
        };
        let v = verify_features(&Ok(MinutiaeSet::default()), &Err(Error::PupilNotFound), &template, &cfg, Backend::Reference);
        assert!(v.any_failed());
        assert_eq!(v.iris.similarity, 0.0);
        assert!(!v.decision.accept);
    }
}
