#[path = "support/checks.rs"]
mod checks;

use checks::*;
use proptest::prelude::*;
use rodforge_core::confmap::{average_overlapped, confmap_frame, l_nms, NmsParams, ANNOTATION_GATE};
use rodforge_core::eval::{average_precision, evaluate, evaluate_at, match_detections, ols_thresholds};
use rodforge_core::geometry::{bev_distance, cam_to_range_azimuth, ols, ols_score, Grid, KappaTable};
use rodforge_core::signal::RadarConfig;
use rodforge_core::{CameraBev, ObjectClass, ObjectRecord, RangeAzimuth, Source};

fn grid() -> Grid {
    Grid::new(&RadarConfig::desk())
}

fn record(frame_id: u32, class: usize, range: f64, azimuth: f64, confidence: f64) -> ObjectRecord {
    ObjectRecord {
        frame_id,
        class: ObjectClass::ALL[class],
        location: RangeAzimuth::new(range, azimuth),
        confidence,
        source: Source::Human,
    }
}

fn arb_record() -> impl Strategy<Value = ObjectRecord> {
    (0u32..4, 0usize..3, 3.0..22.0f64, -0.8..0.8f64, 0.01..1.0f64)
        .prop_map(|(f, k, r, a, c)| record(f, k, r, a, c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn ols_is_symmetric_bounded_and_monotone(
        a in (0.5..25.0f64, -1.2..1.2f64),
        b in (0.5..25.0f64, -1.2..1.2f64),
        s in 0.5..25.0f64,
        kappa in 0.01..0.5f64,
    ) {
        let (a, b) = (RangeAzimuth::new(a.0, a.1), RangeAzimuth::new(b.0, b.1));
        let d = bev_distance(a, b);
        prop_assert!((d - bev_distance(b, a)).abs() < 1e-12);
        prop_assert!((d - polar_distance(a, b)).abs() < 1e-9);
        let o = ols_score(d, s, kappa);
        prop_assert!((0.0..=1.0).contains(&o));
        prop_assert_eq!(ols_score(0.0, s, kappa), 1.0);
        prop_assert!(ols_score(d + 0.1, s, kappa) <= o);
        prop_assert!(ols_score(d, s * 1.5, kappa) >= o);
    }

    #[test]
    fn ols_between_records_is_symmetric_for_equal_scale(a in arb_record(), mut b in arb_record()) {
        let k = KappaTable::default();
        b.class = a.class;
        b.location.range = a.location.range;
        prop_assert!((ols(&a, &b, &k) - ols(&b, &a, &k)).abs() < 1e-12);
    }

    #[test]
    fn camera_range_is_bev_norm(x in -20.0..20.0f64, z in 0.1..25.0f64, ox in -1.0..1.0f64, oz in -1.0..0.0f64) {
        let ra = cam_to_range_azimuth(CameraBev { x, z }, CameraBev { x: ox, z: oz }).unwrap();
        prop_assert!((ra.range - (x - ox).hypot(z - oz)).abs() < 1e-12);
        let (bx, bz) = ra.to_xz();
        prop_assert!((bx - (x - ox)).abs() < 1e-9 && (bz - (z - oz)).abs() < 1e-9);
    }

    #[test]
    fn grid_round_trip_stays_within_half_a_cell(r in 0.0..24.5f64, u in -0.95..0.95f64) {
        let g = grid();
        let ra = RangeAzimuth::new(r, u.asin());
        if let Ok((row, col)) = g.map(ra) {
            let back = g.unmap(row, col);
            prop_assert!((back.range - r).abs() <= g.range_resolution / 2.0 + 1e-9);
            prop_assert!((back.azimuth.sin() - u).abs() <= g.sin_step / 2.0 + 1e-9);
            prop_assert_eq!(g.map(back).unwrap(), (row, col));
        }
    }

    #[test]
    fn averaged_predictions_stay_in_unit_interval(
        slices in prop::collection::vec(prop::collection::vec(0.0..=1.0f64, 12), 1..6),
    ) {
        let refs: Vec<&[f64]> = slices.iter().map(Vec::as_slice).collect();
        let avg = average_overlapped(&refs).unwrap();
        for (i, v) in avg.iter().enumerate() {
            prop_assert!((0.0..=1.0).contains(v));
            let lo = slices.iter().map(|s| s[i]).fold(f64::INFINITY, f64::min);
            let hi = slices.iter().map(|s| s[i]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
        }
    }

    #[test]
    fn confmap_values_are_bounded_with_unit_centres(anns in prop::collection::vec(arb_record(), 0..6)) {
        let g = grid();
        let (slice, dropped) = confmap_frame(&anns, &KappaTable::default(), &g);
        prop_assert_eq!(dropped, 0);
        prop_assert!(slice.iter().all(|v| (0.0..=1.0).contains(v)));
        for a in anns.iter().filter(|a| a.confidence >= ANNOTATION_GATE) {
            let (r, c) = g.map(a.location).unwrap();
            prop_assert_eq!(slice[(a.class.index() * g.range_bins + r) * g.azimuth_bins + c], 1.0);
        }
    }

    #[test]
    fn ap_does_not_rise_when_a_weakest_false_positive_is_added(
        hits in prop::collection::vec(any::<bool>(), 0..20),
        extra in 0usize..10,
    ) {
        let gt = hits.iter().filter(|h| **h).count() + extra;
        prop_assume!(gt > 0);
        let base = average_precision(&hits, gt);
        let mut more = hits.clone();
        more.push(false);
        prop_assert!(average_precision(&more, gt) <= base + 1e-12);
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn evaluation_ignores_input_order(
        dets in prop::collection::vec(arb_record(), 0..10),
        gts in prop::collection::vec(arb_record(), 0..8),
        seed in any::<u64>(),
    ) {
        let k = KappaTable::default();
        let mut shuffled = dets.clone();
        let mut gshuf = gts.clone();
        use rand::seq::SliceRandom;
        let mut r = rng(seed);
        shuffled.shuffle(&mut r);
        gshuf.shuffle(&mut r);
        let a = evaluate(&dets, &gts, &k);
        let b = evaluate(&shuffled, &gshuf, &k);
        prop_assert_eq!(a.ap, b.ap);
        prop_assert_eq!(a.ar, b.ar);
        for t in ols_thresholds() {
            let (x, y) = (evaluate_at(&dets, &gts, t, &k), evaluate_at(&shuffled, &gshuf, t, &k));
            prop_assert_eq!((x.tp, x.fp, x.fn_), (y.tp, y.fp, y.fn_));
        }
    }

    #[test]
    fn recall_does_not_rise_with_threshold(
        dets in prop::collection::vec(arb_record(), 0..10),
        gts in prop::collection::vec(arb_record(), 1..8),
    ) {
        let k = KappaTable::default();
        let tps: Vec<usize> = ols_thresholds().iter().map(|&t| match_detections(&dets, &gts, t, &k).tp).collect();
        prop_assert!(tps.windows(2).all(|w| w[1] <= w[0]), "{:?}", tps);
    }
}

#[test]
fn confmap_peaks_survive_nms_at_their_cells() {
    // Well-separated annotations rendered into a target map come back from
    // L-NMS at the same cells and classes.
    let g = grid();
    let k = KappaTable::default();
    let anns = vec![
        record(0, 0, 6.0, -0.5, 0.9),
        record(0, 1, 12.0, 0.0, 0.8),
        record(0, 2, 18.0, 0.55, 0.7),
    ];
    let (slice, _) = confmap_frame(&anns, &k, &g);
    let mut got: Vec<_> = l_nms(&slice, &k, &g, &NmsParams::default(), 0)
        .iter()
        .map(|d| (d.class, g.map(d.location).unwrap(), d.confidence))
        .collect();
    got.sort_by_key(|x| x.0);
    assert_eq!(got.len(), 3, "{got:?}");
    for (a, (class, cell, conf)) in anns.iter().zip(got) {
        assert_eq!(class, a.class);
        assert_eq!(cell, g.map(a.location).unwrap());
        assert_eq!(conf, 1.0);
    }
}

#[test]
fn perfect_detections_score_one_at_every_threshold() {
    let gts: Vec<_> = (0..30).map(|i| record(i / 3, (i % 3) as usize, 5.0 + 0.5 * i as f64, 0.02 * i as f64 - 0.3, 1.0)).collect();
    let r = evaluate(&gts, &gts, &KappaTable::default());
    assert_eq!(r.ap, Some(1.0));
    assert_eq!(r.ar, Some(1.0));
}
