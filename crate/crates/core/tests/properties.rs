use std::f64::consts::PI;

use mmbio_core::fp_enhance::{line_offsets, line_weights};
use mmbio_core::fp_match::{elastic_match, elastic_pairs, ElasticTolerances, PolarMinutia};
use mmbio_core::fp_minutiae::thin;
use mmbio_core::fusion::{fuse, FusionParams, MatchScore};
use mmbio_core::hwmodel::guided::{angle_of, guided_line_gaussian, offsets, sub_window, GuidedTables, SubWindow, RADIUS};
use mmbio_core::hwmodel::{cordic_polar, Fixed, Q1_15, Q8_8};
use mmbio_core::imgio::{decode_pgm, decode_template, dequantize_angle, encode_pgm, encode_template};
use mmbio_core::iris_code::{hamming, majority_template};
use mmbio_core::regions::{label_components, Mask};
use mmbio_core::{GrayImage, IrisCode, Minutia, MinutiaKind, MinutiaeSet, TemplateRecord};
use proptest::prelude::*;

fn gray() -> impl Strategy<Value = GrayImage> {
    (1usize..24, 1usize..24).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<u8>(), w * h).prop_map(move |px| GrayImage::new(w, h, px).unwrap())
    })
}

fn binary() -> impl Strategy<Value = GrayImage> {
    (3usize..16, 3usize..16).prop_flat_map(|(w, h)| {
        proptest::collection::vec(prop_oneof![1 => Just(0u8), 1 => Just(1u8)], w * h)
            .prop_map(move |px| GrayImage::new(w, h, px).unwrap())
    })
}

fn code(rows: usize, cols: usize, full: bool) -> impl Strategy<Value = IrisCode> {
    (
        proptest::collection::vec(0u8..64, rows * cols),
        proptest::collection::vec(prop_oneof![3 => Just(true), 1 => Just(full)], rows * cols),
    )
        .prop_map(move |(p, m)| IrisCode::new(rows, cols, p, m).unwrap())
}

fn ridge_components(img: &GrayImage) -> u32 {
    let mut m = Mask::new(img.width(), img.height());
    for (b, &p) in m.bits.iter_mut().zip(img.pixels()) {
        *b = p == 0;
    }
    label_components(&m).1
}

fn polar() -> impl Strategy<Value = PolarMinutia> {
    (0.0f64..120.0, -PI..PI, 0.0f64..PI).prop_map(|(r, theta, o)| PolarMinutia { r, theta, o })
}

/// Largest one-to-one pairing by exhaustive augmenting paths.
fn max_matching(adj: &[Vec<usize>], n_right: usize) -> usize {
    fn augment(u: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                if owner[v].is_none_or(|w| augment(w, adj, seen, owner)) {
                    owner[v] = Some(u);
                    return true;
                }
            }
        }
        false
    }
    let mut owner = vec![None; n_right];
    (0..adj.len())
        .filter(|&u| augment(u, adj, &mut vec![false; n_right], &mut owner))
        .count()
}

fn minutiae() -> impl Strategy<Value = MinutiaeSet> {
    proptest::collection::vec((0u32..300, 0u32..300, 0u16..18_000, any::<bool>()), 0..20).prop_map(|v| {
        let m = v
            .into_iter()
            .map(|(x, y, a, b)| Minutia {
                x,
                y,
                angle: dequantize_angle(a),
                kind: if b { MinutiaKind::Bifurcation } else { MinutiaKind::Termination },
            })
            .collect();
        MinutiaeSet::new(m, 300, 300)
    })
}

proptest! {
    #[test]
    fn pgm_round_trip(img in gray()) {
        prop_assert_eq!(decode_pgm(&encode_pgm(&img)).unwrap(), img);
    }

    #[test]
    fn template_round_trip(fp in minutiae(), iris in code(4, 12, false), id in "[a-z0-9_]{1,12}") {
        let rec = TemplateRecord { subject_id: id, fingerprint: fp, iris, created_at: None };
        let bytes = encode_template(&rec).unwrap();
        let back = decode_template(&bytes).unwrap();
        prop_assert_eq!(encode_template(&back).unwrap(), bytes);
        prop_assert_eq!(back.fingerprint.len(), rec.fingerprint.len());
        for (a, b) in back.fingerprint.minutiae.iter().zip(&rec.fingerprint.minutiae) {
            prop_assert!((a.angle - b.angle).abs() < 1e-9);
        }
        prop_assert_eq!(back.iris, rec.iris);
    }

    #[test]
    fn template_detects_corruption(fp in minutiae(), iris in code(2, 8, false), at in any::<prop::sample::Index>()) {
        let rec = TemplateRecord { subject_id: "s".into(), fingerprint: fp, iris, created_at: None };
        let mut bytes = encode_template(&rec).unwrap();
        let i = at.index(bytes.len());
        bytes[i] ^= 0x5a;
        prop_assert!(decode_template(&bytes).is_err());
    }

    #[test]
    fn thinning_invariants(img in binary()) {
        let s = thin(&img);
        prop_assert_eq!(thin(&s), s.clone());
        for (&a, &b) in s.pixels().iter().zip(img.pixels()) {
            prop_assert!(a != 0 || b == 0, "skeleton pixel outside the input");
        }
        prop_assert_eq!(ridge_components(&s), ridge_components(&img));
    }

    #[test]
    fn hamming_metric_laws(a in code(3, 16, false), b in code(3, 16, false), c in code(3, 16, true)) {
        if let (Ok(ab), Ok(ba)) = (hamming(&a, &b, 4), hamming(&b, &a, 4)) {
            prop_assert_eq!(ab.hd, ba.hd);
            prop_assert!((0.0..=1.0).contains(&ab.hd));
        }
        if a.valid_count() > 0 {
            prop_assert_eq!(hamming(&a, &a, 0).unwrap().hd, 0.0);
        }
        let full = |x: &IrisCode| IrisCode::new(x.rows, x.cols, x.planes.clone(), vec![true; x.len()]).unwrap();
        let (a, b, c) = (full(&a), full(&b), full(&c));
        let d = |x: &IrisCode, y: &IrisCode| hamming(x, y, 0).unwrap().hd;
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
    }

    #[test]
    fn rotation_is_found(a in code(3, 20, true), s in -8isize..=8) {
        let score = hamming(&a, &a.rotate(s), 8).unwrap();
        prop_assert_eq!(score.hd, 0.0);
    }

    #[test]
    fn majority_of_identical_codes(a in code(2, 10, false)) {
        prop_assert_eq!(majority_template(&[a.clone(), a.clone(), a.clone()]).unwrap(), a);
    }

    #[test]
    fn greedy_pairing_is_maximal_and_bounded(
        input in proptest::collection::vec(polar(), 0..7),
        template in proptest::collection::vec(polar(), 0..7),
    ) {
        let tol = ElasticTolerances::default();
        let ok = |a: &PolarMinutia, b: &PolarMinutia| elastic_pairs(&[*a], &[*b], &tol) == 1;
        let adj: Vec<Vec<usize>> = input
            .iter()
            .map(|a| (0..template.len()).filter(|&j| ok(a, &template[j])).collect())
            .collect();
        let best = max_matching(&adj, template.len());
        let greedy = elastic_pairs(&input, &template, &tol);
        prop_assert!(greedy <= best);
        // a maximal matching has at least half the maximum size
        prop_assert!(2 * greedy >= best);
        let s = elastic_match(&input, &template, &tol);
        prop_assert!((0.0..=1.0).contains(&s));
    }

    #[test]
    fn self_match_is_perfect(set in proptest::collection::vec(polar(), 1..12)) {
        prop_assert_eq!(elastic_match(&set, &set, &ElasticTolerances::default()), 1.0);
    }

    #[test]
    fn fusion_is_bounded_and_monotone(fp in 0.0f64..=1.0, hd in 0.0f64..=1.0, bump in 0.0f64..0.5) {
        let p = FusionParams::default();
        let d = fuse(&MatchScore::fingerprint(fp), &MatchScore::iris_hd(hd), &p);
        prop_assert!((0.0..=1.0).contains(&d.fused_score));
        prop_assert_eq!(d.accept, d.fused_score >= p.threshold);
        let up = fuse(&MatchScore::fingerprint((fp + bump).min(1.0)), &MatchScore::iris_hd(hd), &p);
        prop_assert!(up.fused_score >= d.fused_score);
        let worse = fuse(&MatchScore::fingerprint(fp), &MatchScore::iris_hd((hd + bump).min(1.0)), &p);
        prop_assert!(worse.fused_score <= d.fused_score);
    }

    #[test]
    fn cordic_matches_float(x in -32767i64..=32767, y in -32767i64..=32767) {
        prop_assume!(x != 0 || y != 0);
        let (qx, qy) = (Q1_15::from_raw(x), Q1_15::from_raw(y));
        let (r, t) = cordic_polar(qx, qy, 16);
        let (fx, fy) = (qx.to_f64(), qy.to_f64());
        let exact = fx.hypot(fy);
        prop_assert!((r.to_f64() - exact).abs() <= exact * 2f64.powi(-10));
        let d = (t.to_f64() - fy.atan2(fx)).rem_euclid(2.0 * PI);
        prop_assert!(d.min(2.0 * PI - d) <= 2f64.powi(-10));
    }

    #[test]
    fn fixed_arithmetic_saturates(a in any::<i32>(), b in any::<i32>()) {
        let (x, y) = (Q8_8::from_raw(i64::from(a)), Q8_8::from_raw(i64::from(b)));
        for v in [x, y, x.saturating_add(y), x.saturating_sub(y), x.saturating_mul(y)] {
            prop_assert!((Q8_8::MIN_RAW..=Q8_8::MAX_RAW).contains(&v.raw()));
        }
        let exact = x.to_f64() + y.to_f64();
        let sum = x.saturating_add(y).to_f64();
        prop_assert!(sum == exact.clamp(Q8_8::MIN.to_f64(), Q8_8::MAX.to_f64()));
    }

    #[test]
    fn fixed_from_f64_rounds_to_nearest(v in -200.0f64..200.0) {
        let q = Fixed::<8, 8>::from_f64(v);
        prop_assert!((q.to_f64() - v).abs() <= 0.5 / 256.0 + 1e-12);
    }
}

#[test]
fn guided_offsets_match_brute_force_rasterization() {
    for code in 0..=255u8 {
        let (s, c) = angle_of(code).sin_cos();
        let offs = offsets(code);
        for (k, &(dx, dy)) in offs.iter().enumerate() {
            let u = k as i32 - RADIUS as i32;
            // nearest pixel to the line within the free row / column
            let dist = |px: i32, py: i32| (-f64::from(px) * s + f64::from(py) * c).abs();
            let expect = match sub_window(code) {
                SubWindow::Horizontal => (u, (-8..=8).min_by(|&a, &b| dist(u, a).total_cmp(&dist(u, b))).unwrap()),
                SubWindow::Vertical => ((-8..=8).min_by(|&a, &b| dist(a, u).total_cmp(&dist(b, u))).unwrap(), u),
            };
            assert_eq!((dx, dy), expect, "code {code} tap {k}");
        }
    }
}

#[test]
fn guided_filter_at_zero_angle_matches_float() {
    let sigma = 3.7;
    let tables = GuidedTables::new(sigma);
    let (w, h) = (40, 12);
    let px: Vec<u8> = (0..w * h).map(|i| ((i * 37 + i / w * 11) % 256) as u8).collect();
    let out = guided_line_gaussian(w, h, &px, &vec![0u8; w * h], &tables);
    let weights = line_weights(0.0, RADIUS, sigma);
    for y in 0..h {
        for x in 0..w {
            let v: f64 = line_offsets(0.0, RADIUS)
                .zip(&weights)
                .map(|((dx, _), k)| {
                    let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                    k * (f64::from(px[y * w + xx]) - 128.0)
                })
                .sum();
            let expect = (v + 128.0).round().clamp(0.0, 255.0);
            assert!((f64::from(out[y * w + x]) - expect).abs() <= 1.0, "({x}, {y})");
        }
    }
}
