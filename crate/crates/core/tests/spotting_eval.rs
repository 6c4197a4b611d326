use msagsm::eval::{
    event_density, evaluate, extract_peaks, map_at, match_and_ap, pr_curve, read_detections_csv,
    write_detections_csv, Detection, DetectionRecord, EventAnnotation, PeakConfig,
};
use msagsm::{Error, Tensor};
use proptest::prelude::*;

mod common;

use common::*;

// ---------- strategies ----------

#[derive(Debug, Clone)]
struct Instance {
    dets: Vec<Detection>,
    gts: Vec<EventAnnotation>,
}

fn instance() -> impl Strategy<Value = Instance> {
    let t = 8usize..=64;
    t.prop_flat_map(|t| {
        let d = prop::collection::vec(
            (0usize..2, 0..t, 1usize..=3, prop_oneof![(0u32..6).prop_map(|c| c as f64 / 5.0), 0.0f64..1.0]),
            0..=8,
        );
        let g = prop::collection::vec((0usize..2, 0..t, 1usize..=3), 0..=5);
        (d, g).prop_map(|(d, g)| Instance {
            dets: d.into_iter().map(|(v, f, c, s)| det(v, f, c, s)).collect(),
            gts: g.into_iter().map(|(v, f, c)| gt(v, f, c)).collect(),
        })
    })
}

fn score_matrix() -> impl Strategy<Value = (Tensor, usize)> {
    (1usize..=64, 2usize..=4, 0usize..=3).prop_flat_map(|(t, k, r)| {
        prop::collection::vec(0u32..6, t * k).prop_map(move |raw| {
            // Coarse values make plateaus and ties common.
            let mut data: Vec<f64> = raw.iter().map(|&v| v as f64 + 0.5).collect();
            for row in data.chunks_mut(k) {
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= s);
            }
            (Tensor::new(vec![t, k], data).unwrap(), 2 * r + 1)
        })
    })
}

// ---------- fixtures ----------

#[test]
fn hand_case_tp_fp_tp_is_five_sixths() {
    let gts = [gt(0, 10, 1), gt(0, 30, 1)];
    let dets = [det(0, 10, 1, 0.9), det(0, 50, 1, 0.8), det(0, 30, 1, 0.7)];
    let ap = match_and_ap(&dets, &gts, 1)[0].ap.unwrap();
    assert!((ap - 5.0 / 6.0).abs() < 1e-15);
    let area = curve_area(&pr_curve(&dets, &gts, 1, 1));
    assert!((area - ap).abs() < 1e-12);
}

#[test]
fn exact_hits_give_unit_ap_at_every_tolerance() {
    let gts = [gt(0, 3, 1), gt(0, 9, 2), gt(1, 4, 1)];
    let dets: Vec<Detection> = gts.iter().map(|g| det(g.video, g.frame, g.class_id, 0.5)).collect();
    for tol in 0..4 {
        assert_eq!(map_at(&dets, &gts, tol).unwrap(), 1.0);
    }
}

#[test]
fn outside_tolerance_is_zero() {
    let ap = match_and_ap(&[det(0, 12, 1, 0.9)], &[gt(0, 10, 1)], 1)[0].ap.unwrap();
    assert_eq!(ap, 0.0);
}

#[test]
fn map_averages_and_excludes_classes_without_ground_truth() {
    let gts = [gt(0, 5, 1), gt(0, 20, 2)];
    let dets = [det(0, 5, 1, 0.9), det(0, 40, 2, 0.9), det(0, 7, 3, 0.9)];
    assert_eq!(map_at(&dets, &gts, 0).unwrap(), 0.5);
    assert!(matches!(map_at(&dets, &[], 0), Err(Error::InvalidArgument { .. })));
}

#[test]
fn large_tolerance_saturates() {
    let gts = [gt(0, 2, 1), gt(0, 40, 1)];
    let dets = [det(0, 60, 1, 0.9), det(0, 0, 1, 0.8)];
    assert_eq!(map_at(&dets, &gts, 64).unwrap(), 1.0);
}

#[test]
fn perfect_and_all_fp_curves() {
    let gts = [gt(0, 2, 1), gt(0, 9, 1)];
    let perfect = pr_curve(&[det(0, 2, 1, 0.9), det(0, 9, 1, 0.3)], &gts, 1, 0);
    assert_eq!(perfect.len(), 1);
    assert_eq!((perfect[0].recall, perfect[0].precision), (1.0, 1.0));
    let miss = [det(0, 30, 1, 0.9)];
    assert!(pr_curve(&miss, &gts, 1, 0).is_empty());
    assert_eq!(match_and_ap(&miss, &gts, 0)[0].ap, Some(0.0));
}

#[test]
fn duplicates_on_one_ground_truth() {
    let gts = [gt(0, 5, 1)];
    let dets = [det(0, 5, 1, 0.9), det(0, 5, 1, 0.8), det(0, 6, 1, 0.7)];
    let (flags, _) = msagsm::eval::match_detections(&dets, &gts, 1, 2);
    assert_eq!(flags, vec![true, false, false]);
}

#[test]
fn density_fixture() {
    let d = event_density(&[0, 50, 120], 100, 200).unwrap();
    assert_eq!(d, oracle_density(&[0, 50, 120], 100, 200));
    assert!(event_density(&[0], 201, 200).is_err());
}

#[test]
fn evaluate_report_json() {
    let gts = [gt(0, 10, 1), gt(0, 30, 1)];
    let dets = [det(0, 10, 1, 0.9), det(0, 50, 1, 0.8), det(0, 30, 1, 0.7)];
    let report = evaluate(&dets, &gts, &[0, 1, 2]).unwrap();
    let json = report.to_json(&["hit".into(), "none".into()]);
    assert!((json["mAP@1"].as_f64().unwrap() - 5.0 / 6.0).abs() < 1e-15);
    assert!(json["per_class"]["none"]["AP@1"].is_null());
    assert_eq!(report.map_at(2), report.map_at(1));
}

#[test]
fn detections_csv_round_trip() {
    let rows = vec![
        DetectionRecord {
            video_id: "v0".into(),
            frame: 3,
            class: "bounce".into(),
            confidence: 0.123456789012345,
        },
        DetectionRecord {
            video_id: "v1".into(),
            frame: 0,
            class: "serve".into(),
            confidence: 1.0,
        },
    ];
    let mut buf = Vec::new();
    write_detections_csv(&mut buf, &rows).unwrap();
    assert!(String::from_utf8_lossy(&buf).starts_with("video_id,frame,class,confidence"));
    assert_eq!(read_detections_csv(buf.as_slice()).unwrap(), rows);
    let mut empty = Vec::new();
    write_detections_csv(&mut empty, &[]).unwrap();
    assert!(read_detections_csv(empty.as_slice()).unwrap().is_empty());
    assert!(read_detections_csv("video_id,frame,class,confidence\nv,x,c,0.1\n".as_bytes()).is_err());
}

// ---------- randomized agreement with the oracles ----------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn ap_and_map_match_exhaustive_reevaluation(inst in instance(), tol in 0usize..=3) {
        for c in match_and_ap(&inst.dets, &inst.gts, tol) {
            let (f, n) = oracle_flags(&inst.dets, &inst.gts, c.class_id, tol);
            prop_assert_eq!(c.num_gt, n);
            prop_assert_eq!(c.num_det, f.len());
            match (c.ap, oracle_ap(&f, n)) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}"),
                (a, b) => prop_assert_eq!(a, b),
            }
            if let Some(ap) = c.ap {
                prop_assert!((0.0..=1.0).contains(&ap));
                let area = curve_area(&pr_curve(&inst.dets, &inst.gts, c.class_id, tol));
                prop_assert!((area - ap).abs() < 1e-12);
            }
        }
        match (map_at(&inst.dets, &inst.gts, tol).ok(), oracle_map(&inst.dets, &inst.gts, tol)) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
            (a, b) => prop_assert_eq!(a, b),
        }
    }

    #[test]
    fn pr_curves_are_monotone(inst in instance(), tol in 0usize..=3) {
        for c in 1..=3 {
            let pts = pr_curve(&inst.dets, &inst.gts, c, tol);
            for w in pts.windows(2) {
                prop_assert!(w[0].recall < w[1].recall);
                prop_assert!(w[0].precision >= w[1].precision);
            }
        }
    }

    #[test]
    fn map_is_monotone_in_tolerance(inst in instance()) {
        if let Ok(m0) = map_at(&inst.dets, &inst.gts, 0) {
            let m1 = map_at(&inst.dets, &inst.gts, 1).unwrap();
            let m2 = map_at(&inst.dets, &inst.gts, 2).unwrap();
            prop_assert!(m0 <= m1 + 1e-12 && m1 <= m2 + 1e-12, "{m0} {m1} {m2}");
        }
    }

    #[test]
    fn ap_depends_only_on_rank(inst in instance(), tol in 0usize..=2) {
        let squashed: Vec<Detection> = inst
            .dets
            .iter()
            .map(|d| det(d.video, d.frame, d.class_id, (3.0 * d.confidence).exp() / 30.0))
            .collect();
        prop_assert_eq!(match_and_ap(&inst.dets, &inst.gts, tol), match_and_ap(&squashed, &inst.gts, tol));
    }

    #[test]
    fn peaks_match_exhaustive_scan((scores, window) in score_matrix(), thr in 0usize..3) {
        let cfg = PeakConfig { threshold: thr as f64 * 0.15, window };
        let got: Vec<(usize, usize)> = extract_peaks(&scores, &cfg, 0)
            .unwrap()
            .iter()
            .map(|d| {
                assert_eq!(d.confidence, scores.at(&[d.frame, d.class_id]));
                (d.class_id, d.frame)
            })
            .collect();
        prop_assert_eq!(got, oracle_peaks(&scores, &cfg));
    }

    #[test]
    fn density_matches_window_scan(
        t in 1usize..=64,
        raw in prop::collection::vec(0usize..64, 0..8),
        w_frac in 0.0f64..1.0,
    ) {
        let events: Vec<usize> = raw.into_iter().map(|e| e % t).collect();
        let w = 1 + ((t - 1) as f64 * w_frac) as usize;
        let got = event_density(&events, w, t).unwrap();
        prop_assert!((got - oracle_density(&events, w, t)).abs() < 1e-12);
    }

    #[test]
    fn density_is_additive_over_disjoint_sets(
        a in prop::collection::vec(0usize..50, 0..6),
        b in prop::collection::vec(0usize..50, 0..6),
        w in 1usize..=50,
    ) {
        let both: Vec<usize> = a.iter().chain(&b).copied().collect();
        let sum = event_density(&a, w, 50).unwrap() + event_density(&b, w, 50).unwrap();
        prop_assert!((event_density(&both, w, 50).unwrap() - sum).abs() < 1e-12);
    }
}
