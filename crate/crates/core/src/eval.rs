//! Evaluation of label maps against ground truth on the patch grid.

use std::fmt::Write as _;

use image::{Rgb, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridmap::{threshold, Label, LabelMap, ProbabilityMap, TissueMask};
use crate::Ratio;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            fn_: self.fn_ + o.fn_,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    TruePositive,
    FalsePositive,
    TrueNegative,
    FalseNegative,
}

impl Outcome {
    /// Render color: TP green, FN red, FP yellow, TN blue.
    pub fn color(self) -> [u8; 3] {
        match self {
            Outcome::TruePositive => [0, 255, 0],
            Outcome::FalseNegative => [255, 0, 0],
            Outcome::FalsePositive => [255, 255, 0],
            Outcome::TrueNegative => [0, 0, 255],
        }
    }
}

/// Color of cells outside the evaluation region in confusion renders.
pub const OUTSIDE_COLOR: [u8; 3] = [0, 0, 0];

/// Per-cell outcomes; `None` outside the evaluation region. Uncovered
/// predictions count as negative.
fn outcomes(pred: &LabelMap, truth: &LabelMap, eval_mask: Option<&TissueMask>) -> Result<Vec<Option<Outcome>>> {
    pred.geometry().check_same(truth.geometry())?;
    if let Some(m) = eval_mask {
        pred.geometry().check_same(m.geometry())?;
    }
    let cols = pred.geometry().cols;
    pred.labels()
        .iter()
        .zip(truth.labels())
        .enumerate()
        .map(|(k, (&p, &t))| {
            if eval_mask.is_some_and(|m| !m.tissue()[k]) {
                return Ok(None);
            }
            let predicted = p == Label::Positive;
            let actual = match t {
                Label::Positive => true,
                Label::Negative => false,
                Label::Uncovered => {
                    return Err(Error::invalid(format!(
                        "ground truth has no label at cell (row {}, col {}) inside the evaluation region",
                        k / cols,
                        k % cols
                    )))
                }
            };
            Ok(Some(match (predicted, actual) {
                (true, true) => Outcome::TruePositive,
                (true, false) => Outcome::FalsePositive,
                (false, false) => Outcome::TrueNegative,
                (false, true) => Outcome::FalseNegative,
            }))
        })
        .collect()
}

pub fn confusion(pred: &LabelMap, truth: &LabelMap, eval_mask: Option<&TissueMask>) -> Result<ConfusionCounts> {
    let mut c = ConfusionCounts::default();
    for o in outcomes(pred, truth, eval_mask)?.into_iter().flatten() {
        match o {
            Outcome::TruePositive => c.tp += 1,
            Outcome::FalsePositive => c.fp += 1,
            Outcome::TrueNegative => c.tn += 1,
            Outcome::FalseNegative => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub f1: Ratio,
    pub ppv: Ratio,
    pub npv: Ratio,
    pub tpr: Ratio,
    pub tnr: Ratio,
    pub fpr: Ratio,
    pub fnr: Ratio,
    pub accuracy: Ratio,
}

/// The metric suite. F1 is defined when both precision and recall are; it is
/// computed as `2tp / (2tp + fp + fn)`, which equals the harmonic mean of
/// precision and recall (and is 0 when both are 0).
pub fn metrics(c: &ConfusionCounts) -> MetricsReport {
    let r = Ratio::from_counts;
    let ppv = r(c.tp, c.tp + c.fp);
    let tpr = r(c.tp, c.tp + c.fn_);
    let f1 = if ppv.is_defined() && tpr.is_defined() {
        r(2 * c.tp, 2 * c.tp + c.fp + c.fn_)
    } else {
        Ratio::Undefined
    };
    MetricsReport {
        f1,
        ppv,
        npv: r(c.tn, c.tn + c.fn_),
        tpr,
        tnr: r(c.tn, c.tn + c.fp),
        fpr: r(c.fp, c.fp + c.tn),
        fnr: r(c.fn_, c.fn_ + c.tp),
        accuracy: r(c.tp + c.tn, c.total()),
    }
}

/// One image for a threshold sweep.
#[derive(Debug, Clone)]
pub struct SweepInput<'a> {
    pub map: &'a ProbabilityMap,
    pub truth: &'a LabelMap,
    pub eval_mask: Option<&'a TissueMask>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub mean_f1: Ratio,
    pub std_f1: Ratio,
    /// Images whose F1 was defined at this threshold.
    pub n_defined: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub best_threshold: Option<f64>,
    pub best_reports: Vec<MetricsReport>,
}

pub const SWEEP_STEPS: usize = 100;

/// Thresholds 0.00, 0.01, ..., 1.00.
pub fn sweep_thresholds() -> impl Iterator<Item = f64> {
    (0..=SWEEP_STEPS).map(|k| k as f64 / SWEEP_STEPS as f64)
}

/// Mean and population standard deviation of the defined entries.
fn mean_std(values: &[Ratio]) -> (Ratio, Ratio, usize) {
    let defined: Vec<f64> = values.iter().filter_map(|r| r.value()).collect();
    let n = defined.len();
    if n == 0 {
        return (Ratio::Undefined, Ratio::Undefined, 0);
    }
    let mean = defined.iter().sum::<f64>() / n as f64;
    let var = defined.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    (Ratio::Defined(mean), Ratio::Defined(var.sqrt()), n)
}

/// Per-image F1 averaged over images for each threshold in
/// [`sweep_thresholds`]. The best threshold maximizes mean F1, taking the
/// lowest threshold among ties.
pub fn threshold_sweep(inputs: &[SweepInput<'_>]) -> Result<SweepResult> {
    if inputs.is_empty() {
        return Err(Error::invalid("threshold sweep needs at least one image"));
    }
    for inp in inputs {
        inp.map.geometry().check_same(inp.truth.geometry())?;
    }
    let thresholds: Vec<f64> = sweep_thresholds().collect();

    // reports[image][threshold]
    let reports: Vec<Vec<MetricsReport>> = inputs
        .par_iter()
        .map(|inp| {
            thresholds
                .iter()
                .map(|&t| {
                    let labels = threshold(inp.map, t)?;
                    Ok(metrics(&confusion(&labels, inp.truth, inp.eval_mask)?))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut points = Vec::with_capacity(thresholds.len());
    let mut best: Option<(usize, f64)> = None;
    for (k, &t) in thresholds.iter().enumerate() {
        let f1s: Vec<Ratio> = reports.iter().map(|r| r[k].f1).collect();
        let (mean_f1, std_f1, n_defined) = mean_std(&f1s);
        if let Some(m) = mean_f1.value() {
            if best.is_none_or(|(_, b)| m > b) {
                best = Some((k, m));
            }
        }
        points.push(SweepPoint {
            threshold: t,
            mean_f1,
            std_f1,
            n_defined,
        });
    }
    Ok(SweepResult {
        points,
        best_threshold: best.map(|(k, _)| thresholds[k]),
        best_reports: best
            .map(|(k, _)| reports.iter().map(|r| r[k]).collect())
            .unwrap_or_default(),
    })
}

impl SweepResult {
    /// CSV with columns `threshold,mean_f1,std_f1,n_defined`; undefined
    /// values are empty fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,mean_f1,std_f1,n_defined\n");
        let fmt = |r: Ratio| r.value().map(|v| format!("{v:.6}")).unwrap_or_default();
        for p in &self.points {
            let _ = writeln!(
                out,
                "{:.2},{},{},{}",
                p.threshold,
                fmt(p.mean_f1),
                fmt(p.std_f1),
                p.n_defined
            );
        }
        out
    }
}

/// Area under the ROC curve as the Mann–Whitney statistic
/// `P(s_pos > s_neg) + 0.5 P(s_pos = s_neg)`, via midranks.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of midranks (1-based) of the positives, doubled to stay integral.
    let mut twice_rank_sum: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let twice_midrank = (start + 1 + end) as u64;
        let pos_in_group = order[start..end].iter().filter(|&&k| labels[k]).count() as u64;
        twice_rank_sum += twice_midrank * pos_in_group;
        start = end;
    }
    let (np, nn) = (n_pos as u64, n_neg as u64);
    let twice_u = twice_rank_sum - np * (np + 1);
    Ok(twice_u as f64 / (2 * np * nn) as f64)
}

/// One pixel per patch: TP green, FN red, FP yellow, TN blue; cells outside
/// the evaluation region are black.
pub fn render_confusion(pred: &LabelMap, truth: &LabelMap, eval_mask: Option<&TissueMask>) -> Result<RgbImage> {
    let g = *pred.geometry();
    let out = outcomes(pred, truth, eval_mask)?;
    Ok(RgbImage::from_fn(g.cols as u32, g.rows as u32, |x, y| {
        let o = out[y as usize * g.cols + x as usize];
        Rgb(o.map_or(OUTSIDE_COLOR, Outcome::color))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridmap::{GridGeometry, LabelKind};

    fn grid(cols: u32, rows: u32) -> GridGeometry {
        GridGeometry::from_slide(cols, rows, 1).unwrap()
    }

    #[test]
    fn perfect_and_degenerate() {
        let g = grid(4, 4);
        let all = LabelMap::from_bools(g, &[true; 16]).unwrap();
        let c = confusion(&all, &all, None).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 16, ..Default::default() });

        let none = LabelMap::from_bools(g, &[false; 16]).unwrap();
        let truth: Vec<bool> = (0..16).map(|k| k < 5).collect();
        let truth = LabelMap::from_bools(g, &truth).unwrap();
        let c = confusion(&none, &truth, None).unwrap();
        assert_eq!((c.fn_, c.tn, c.tp, c.fp), (5, 11, 0, 0));
    }

    #[test]
    fn hand_built_three_by_three() {
        let g = grid(3, 3);
        let pred = [true, true, true, true, true, false, false, false, false];
        let truth = [true, true, true, true, false, true, true, false, false];
        let c = confusion(
            &LabelMap::from_bools(g, &pred).unwrap(),
            &LabelMap::from_bools(g, &truth).unwrap(),
            None,
        )
        .unwrap();
        assert_eq!(c, ConfusionCounts { tp: 4, fp: 1, tn: 2, fn_: 2 });
    }

    #[test]
    fn uncovered_prediction_counts_negative_and_mask_restricts() {
        let g = grid(3, 1);
        let pred = LabelMap::from_labels(g, vec![Label::Uncovered, Label::Positive, Label::Positive]).unwrap();
        let truth = LabelMap::from_bools(g, &[true, true, false]).unwrap();
        let c = confusion(&pred, &truth, None).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 1, fp: 1, tn: 0, fn_: 1 });
        let mask = TissueMask::new(g, vec![true, true, false]).unwrap();
        let c = confusion(&pred, &truth, Some(&mask)).unwrap();
        assert_eq!(c.total(), 2);

        let bad_truth = LabelMap::from_labels(g, vec![Label::Uncovered, Label::Positive, Label::Negative]).unwrap();
        assert!(confusion(&pred, &bad_truth, None).is_err());
    }

    #[test]
    fn metric_examples() {
        let m = metrics(&ConfusionCounts { tp: 1, fp: 1, fn_: 1, tn: 0 });
        assert_eq!((m.ppv, m.tpr, m.f1), (Ratio::Defined(0.5), Ratio::Defined(0.5), Ratio::Defined(0.5)));

        let m = metrics(&ConfusionCounts { tp: 8, fp: 2, fn_: 4, tn: 6 });
        assert!((m.ppv.value().unwrap() - 0.8).abs() < 1e-15);
        assert!((m.tpr.value().unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.f1.value().unwrap() - 8.0 / 11.0).abs() < 1e-15);
        assert!((m.accuracy.value().unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn empty_denominators_are_undefined() {
        let m = metrics(&ConfusionCounts { tp: 0, fp: 0, fn_: 0, tn: 5 });
        assert_eq!(m.ppv, Ratio::Undefined);
        assert_eq!(m.tpr, Ratio::Undefined);
        assert_eq!(m.f1, Ratio::Undefined);
        assert_eq!(m.tnr, Ratio::Defined(1.0));
        let m = metrics(&ConfusionCounts::default());
        assert_eq!(m.accuracy, Ratio::Undefined);
        let json = serde_json::to_value(m).unwrap();
        assert!(json["f1"].is_null());
    }

    #[test]
    fn zero_precision_and_recall_gives_zero_f1() {
        let m = metrics(&ConfusionCounts { tp: 0, fp: 3, fn_: 2, tn: 1 });
        assert_eq!(m.f1, Ratio::Defined(0.0));
    }

    #[test]
    fn sweep_realizable_truth() {
        let g = grid(4, 1);
        let vals = [0.1, 0.5, 0.7, 0.3];
        let map = ProbabilityMap::from_values(g, &vals, LabelKind::Cancer, "t").unwrap();
        let truth = LabelMap::from_bools(g, &vals.map(|v| v >= 0.5)).unwrap();
        let r = threshold_sweep(&[SweepInput {
            map: &map,
            truth: &truth,
            eval_mask: None,
        }])
        .unwrap();
        assert_eq!(r.points.len(), 101);
        assert_eq!(r.points[50].mean_f1, Ratio::Defined(1.0));
        // 0.31..=0.50 all separate perfectly; ties go to the lowest.
        assert_eq!(r.best_threshold, Some(0.31));
    }

    #[test]
    fn sweep_rejects_empty() {
        assert!(threshold_sweep(&[]).is_err());
    }

    #[test]
    fn sweep_csv_shape() {
        let g = grid(1, 1);
        let map = ProbabilityMap::from_values(g, &[0.4], LabelKind::Cancer, "t").unwrap();
        let truth = LabelMap::from_bools(g, &[false]).unwrap();
        let r = threshold_sweep(&[SweepInput {
            map: &map,
            truth: &truth,
            eval_mask: None,
        }])
        .unwrap();
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 102);
        // No positives anywhere: F1 undefined at every threshold.
        assert_eq!(csv.lines().nth(1).unwrap(), "0.00,,,0");
        assert_eq!(r.best_threshold, None);
    }

    #[test]
    fn auc_basic() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert_eq!(auc(&[0.9, 0.1], &[false, true]).unwrap(), 0.0);
        assert_eq!(auc(&[0.1, 0.2], &[true, true]).unwrap_err(), Error::UndefinedAuc);
    }

    #[test]
    fn render_hand_two_by_two() {
        let g = grid(2, 2);
        let pred = LabelMap::from_bools(g, &[true, false, true, false]).unwrap();
        let truth = LabelMap::from_bools(g, &[true, true, false, false]).unwrap();
        let img = render_confusion(&pred, &truth, None).unwrap();
        assert_eq!(img.get_pixel(0, 0).0, [0, 255, 0]);
        assert_eq!(img.get_pixel(1, 0).0, [255, 0, 0]);
        assert_eq!(img.get_pixel(0, 1).0, [255, 255, 0]);
        assert_eq!(img.get_pixel(1, 1).0, [0, 0, 255]);
    }
}
