//! OLS-based matching and AP/AR over a sweep of OLS thresholds.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::geometry::{ols, KappaTable};
use crate::types::{ObjectClass, ObjectRecord};

/// OLS thresholds 0.50, 0.55, …, 0.90.
pub fn ols_thresholds() -> Vec<f64> {
    (0..9).map(|i| 0.5 + 0.05 * i as f64).collect()
}

/// Confidence descending, then frame, range, azimuth and class ascending.
fn detection_order(a: &ObjectRecord, b: &ObjectRecord) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then(a.frame_id.cmp(&b.frame_id))
        .then(a.location.range.total_cmp(&b.location.range))
        .then(a.location.azimuth.total_cmp(&b.location.azimuth))
        .then(a.class.cmp(&b.class))
}

fn gt_order(a: &ObjectRecord, b: &ObjectRecord) -> Ordering {
    a.frame_id
        .cmp(&b.frame_id)
        .then(a.class.cmp(&b.class))
        .then(a.location.range.total_cmp(&b.location.range))
        .then(a.location.azimuth.total_cmp(&b.location.azimuth))
}

/// Outcome of greedy matching. Indices refer to the caller's slices.
#[derive(Clone, Debug, PartialEq)]
pub struct Matching {
    /// Matched ground truth per detection.
    pub det_to_gt: Vec<Option<usize>>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Greedy one-to-one matching within each frame: detections in confidence
/// order each take the unmatched same-class ground truth of highest OLS, if
/// that OLS reaches `threshold`.
pub fn match_detections(dets: &[ObjectRecord], gts: &[ObjectRecord], threshold: f64, kappa: &KappaTable) -> Matching {
    let mut det_idx: Vec<usize> = (0..dets.len()).collect();
    det_idx.sort_by(|&a, &b| detection_order(&dets[a], &dets[b]));
    let mut gt_idx: Vec<usize> = (0..gts.len()).collect();
    gt_idx.sort_by(|&a, &b| gt_order(&gts[a], &gts[b]));
    let mut by_frame: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for g in gt_idx {
        by_frame.entry(gts[g].frame_id).or_default().push(g);
    }
    let mut used = vec![false; gts.len()];
    let mut det_to_gt = vec![None; dets.len()];
    for d in det_idx {
        let det = &dets[d];
        let Some(cands) = by_frame.get(&det.frame_id) else {
            continue;
        };
        let mut best: Option<(f64, usize)> = None;
        for &g in cands {
            if used[g] || gts[g].class != det.class {
                continue;
            }
            let s = ols(det, &gts[g], kappa);
            if s >= threshold && best.is_none_or(|(b, _)| s > b) {
                best = Some((s, g));
            }
        }
        if let Some((_, g)) = best {
            used[g] = true;
            det_to_gt[d] = Some(g);
        }
    }
    let tp = det_to_gt.iter().filter(|m| m.is_some()).count();
    Matching {
        det_to_gt,
        tp,
        fp: dets.len() - tp,
        fn_: gts.len() - tp,
    }
}

/// 101-point interpolated area under the precision-recall curve of
/// detections given in confidence order.
pub fn average_precision(tp_in_order: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let mut recall = Vec::with_capacity(tp_in_order.len());
    let mut precision = Vec::with_capacity(tp_in_order.len());
    let mut tp = 0usize;
    for (i, &hit) in tp_in_order.iter().enumerate() {
        tp += hit as usize;
        recall.push(tp as f64 / num_gt as f64);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    // Precision envelope: best precision at this or any higher recall.
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut sum = 0.0;
    for k in 0..=100 {
        let r = k as f64 / 100.0;
        let pos = recall.partition_point(|&x| x < r - 1e-12);
        if pos < precision.len() {
            sum += precision[pos];
        }
    }
    sum / 101.0
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ClassScore {
    /// `None` when the class has no ground truth.
    pub ap: Option<f64>,
    pub ar: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub gt: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdScore {
    pub threshold: f64,
    pub ap: Option<f64>,
    pub ar: Option<f64>,
    pub per_class: [ClassScore; 3],
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub thresholds: Vec<ThresholdScore>,
    /// Means over thresholds; `None` without any ground truth.
    pub ap: Option<f64>,
    pub ar: Option<f64>,
    pub class_ap: [Option<f64>; 3],
    pub class_ar: [Option<f64>; 3],
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn evaluate_at(dets: &[ObjectRecord], gts: &[ObjectRecord], threshold: f64, kappa: &KappaTable) -> ThresholdScore {
    let mut per_class = [ClassScore::default(); 3];
    for class in ObjectClass::ALL {
        let mut d: Vec<ObjectRecord> = dets.iter().filter(|r| r.class == class).copied().collect();
        let g: Vec<ObjectRecord> = gts.iter().filter(|r| r.class == class).copied().collect();
        d.sort_by(detection_order);
        let m = match_detections(&d, &g, threshold, kappa);
        let hits: Vec<bool> = m.det_to_gt.iter().map(Option::is_some).collect();
        per_class[class.index()] = ClassScore {
            ap: (!g.is_empty()).then(|| average_precision(&hits, g.len())),
            ar: (!g.is_empty()).then(|| m.tp as f64 / g.len() as f64),
            tp: m.tp,
            fp: m.fp,
            fn_: m.fn_,
            gt: g.len(),
        };
    }
    ThresholdScore {
        threshold,
        ap: mean(per_class.iter().map(|c| c.ap)),
        ar: mean(per_class.iter().map(|c| c.ar)),
        tp: per_class.iter().map(|c| c.tp).sum(),
        fp: per_class.iter().map(|c| c.fp).sum(),
        fn_: per_class.iter().map(|c| c.fn_).sum(),
        per_class,
    }
}

/// AP and AR at each OLS threshold, macro-averaged over classes that have
/// ground truth, then averaged over thresholds.
pub fn evaluate(dets: &[ObjectRecord], gts: &[ObjectRecord], kappa: &KappaTable) -> EvalResult {
    let thresholds: Vec<ThresholdScore> = ols_thresholds()
        .into_iter()
        .map(|t| evaluate_at(dets, gts, t, kappa))
        .collect();
    let class_mean = |f: fn(&ClassScore) -> Option<f64>| {
        let mut out = [None; 3];
        for (i, o) in out.iter_mut().enumerate() {
            *o = mean(thresholds.iter().map(|t| f(&t.per_class[i])));
        }
        out
    };
    EvalResult {
        ap: mean(thresholds.iter().map(|t| t.ap)),
        ar: mean(thresholds.iter().map(|t| t.ar)),
        class_ap: class_mean(|c| c.ap),
        class_ar: class_mean(|c| c.ar),
        thresholds,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

impl EvalResult {
    pub fn at(&self, threshold: f64) -> Option<&ThresholdScore> {
        self.thresholds.iter().find(|t| (t.threshold - threshold).abs() < 1e-9)
    }

    /// Tab-separated per-threshold table.
    pub fn table(&self) -> String {
        let mut s = String::from("ols\tAP\tAR\tTP\tFP\tFN");
        for c in ObjectClass::ALL {
            let _ = write!(s, "\tAP_{c}\tAR_{c}");
        }
        s.push('\n');
        for t in &self.thresholds {
            let _ = write!(s, "{:.2}\t{}\t{}\t{}\t{}\t{}", t.threshold, fmt_opt(t.ap), fmt_opt(t.ar), t.tp, t.fp, t.fn_);
            for c in &t.per_class {
                let _ = write!(s, "\t{}\t{}", fmt_opt(c.ap), fmt_opt(c.ar));
            }
            s.push('\n');
        }
        let _ = write!(s, "mean\t{}\t{}\t\t\t", fmt_opt(self.ap), fmt_opt(self.ar));
        for i in 0..3 {
            let _ = write!(s, "\t{}\t{}", fmt_opt(self.class_ap[i]), fmt_opt(self.class_ar[i]));
        }
        s.push('\n');
        s
    }

    /// Machine-readable `key=value` lines.
    pub fn key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ap={}", fmt_opt(self.ap));
        let _ = writeln!(s, "ar={}", fmt_opt(self.ar));
        for c in ObjectClass::ALL {
            let _ = writeln!(s, "ap.{c}={}", fmt_opt(self.class_ap[c.index()]));
            let _ = writeln!(s, "ar.{c}={}", fmt_opt(self.class_ar[c.index()]));
        }
        for t in &self.thresholds {
            let _ = writeln!(s, "ap@{:.2}={}", t.threshold, fmt_opt(t.ap));
            let _ = writeln!(s, "ar@{:.2}={}", t.threshold, fmt_opt(t.ar));
            let _ = writeln!(s, "tp@{:.2}={}", t.threshold, t.tp);
            let _ = writeln!(s, "fp@{:.2}={}", t.threshold, t.fp);
            let _ = writeln!(s, "fn@{:.2}={}", t.threshold, t.fn_);
        }
        s
    }
}
