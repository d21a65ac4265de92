//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fail.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tower::ServiceExt;

use tilmap_atlas::catalog::Catalog;
use tilmap_atlas::config::Config;
use tilmap_atlas::format::PredictionFile;
use tilmap_atlas::render::{
    encode_png, render_combined_display, render_map, render_map_par, Colormap, PairParams, RenderParams, GREY, RED,
    WHITE, YELLOW,
};
use tilmap_atlas::service::{router, AppState};
use tilmap_core::concord::{bivariate_normal_cdf, polychoric, polyserial, super_patch_scores, ContingencyTable};
use tilmap_core::eval::{auc, confusion, metrics, render_confusion, threshold_sweep, ConfusionCounts, SweepInput};
use tilmap_core::gridmap::{
    aggregate, aggregate_par, combine, decode_combined, quantize, threshold, AggregationConfig, AggregationFunc,
    CombinedMap, GridGeometry, LabelKind, LabelMap, ProbabilityMap, TissueMask,
};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn grid(cols: usize, rows: usize) -> GridGeometry {
    GridGeometry::from_slide(cols as u32, rows as u32, 1).unwrap()
}

fn random_map(rng: &mut ChaCha8Rng, cols: usize, rows: usize, coverage: f64, kind: LabelKind) -> ProbabilityMap {
    let cells = (0..cols * rows)
        .map(|_| rng.random_bool(coverage).then(|| rng.random_range(0.0..=1.0)))
        .collect();
    ProbabilityMap::from_cells(grid(cols, rows), cells, kind, "acceptance").unwrap()
}

// ---------------------------------------------------------------------------
// 1. Aggregation oracle

fn block_value(values: &mut Vec<f64>, f: AggregationFunc) -> f64 {
    match f {
        AggregationFunc::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        AggregationFunc::Average => values.iter().sum::<f64>() / values.len() as f64,
        AggregationFunc::Median => {
            values.sort_by(f64::total_cmp);
            let n = values.len();
            if n % 2 == 1 {
                values[n / 2]
            } else {
                (values[n / 2 - 1] + values[n / 2]) / 2.0
            }
        }
    }
}

/// A(i, j) = f{ H(k, l) : floor(k/w) = floor(i/w), floor(l/w) = floor(j/w), H covered }.
fn aggregation_oracle(map: &ProbabilityMap, w: usize, f: AggregationFunc) -> Vec<Option<f64>> {
    let g = map.geometry();
    let mut out = vec![None; g.len()];
    for i in 0..g.rows {
        for j in 0..g.cols {
            let mut vals = Vec::new();
            for k in 0..g.rows {
                for l in 0..g.cols {
                    if k / w == i / w && l / w == j / w {
                        if let Some(v) = map.get(k, l) {
                            vals.push(v);
                        }
                    }
                }
            }
            if !vals.is_empty() {
                out[i * g.cols + j] = Some(block_value(&mut vals, f));
            }
        }
    }
    out
}

fn criterion_1() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let maps: Vec<ProbabilityMap> = (0..100)
        .map(|_| {
            let (c, r) = (rng.random_range(1..=64), rng.random_range(1..=64));
            let cov = rng.random_range(0.0..=1.0);
            random_map(&mut rng, c, r, cov, LabelKind::Cancer)
        })
        .collect();
    let funcs = [AggregationFunc::Max, AggregationFunc::Median, AggregationFunc::Average];
    let oracles: Vec<Vec<Vec<Option<f64>>>> = maps
        .iter()
        .map(|m| {
            (1..=8usize)
                .flat_map(|w| funcs.iter().map(move |&f| (w, f)))
                .map(|(w, f)| aggregation_oracle(m, w, f))
                .collect()
        })
        .collect();
    let start = Instant::now();
    let mut outputs = Vec::new();
    for m in &maps {
        for w in 1..=8usize {
            for &f in &funcs {
                outputs.push(aggregate(m, AggregationConfig::new(w, f).unwrap()));
            }
        }
    }
    let elapsed = start.elapsed();
    let mut k = 0;
    for (mi, m) in maps.iter().enumerate() {
        for (oi, oracle) in oracles[mi].iter().enumerate() {
            ensure!(outputs[k].cells() == oracle.as_slice(), "map {mi} config {oi} differs from oracle");
            k += 1;
        }
        let id = aggregate(m, AggregationConfig::new(1, AggregationFunc::Max).unwrap());
        ensure!(id.cells() == m.cells(), "w=1 is not the identity on map {mi}");
    }
    ensure!(elapsed < Duration::from_secs(5), "aggregation took {elapsed:?}");
    Ok(format!("2400 aggregations exact, {:.3}s", elapsed.as_secs_f64()))
}

// ---------------------------------------------------------------------------
// 2. Metric identities and sweep oracle

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked_f1 = 0;
    for _ in 0..1000 {
        let c = ConfusionCounts {
            tp: rng.random_range(0..1000),
            fp: rng.random_range(0..1000),
            tn: rng.random_range(0..1000),
            fn_: rng.random_range(0..1000),
        };
        let m = metrics(&c);
        if let (Some(ppv), Some(tpr), Some(f1)) = (m.ppv.value(), m.tpr.value(), m.f1.value()) {
            if ppv + tpr > 0.0 {
                let h = 2.0 * ppv * tpr / (ppv + tpr);
                ensure!((f1 - h).abs() <= 1e-12, "F1 {f1} vs harmonic mean {h} for {c:?}");
                checked_f1 += 1;
            }
        }
        if let (Some(tpr), Some(fnr)) = (m.tpr.value(), m.fnr.value()) {
            ensure!((tpr + fnr - 1.0).abs() <= 1e-12, "TPR+FNR for {c:?}");
        }
        if let (Some(tnr), Some(fpr)) = (m.tnr.value(), m.fpr.value()) {
            ensure!((tnr + fpr - 1.0).abs() <= 1e-12, "TNR+FPR for {c:?}");
        }
    }

    // Hand-built 2x2 images.
    let g = grid(2, 2);
    let maps = [
        ProbabilityMap::from_values(g, &[0.9, 0.2, 0.55, 0.1], LabelKind::Cancer, "a").unwrap(),
        ProbabilityMap::from_values(g, &[0.3, 0.7, 0.35, 0.95], LabelKind::Cancer, "b").unwrap(),
        ProbabilityMap::from_values(g, &[0.5, 0.5, 0.05, 0.8], LabelKind::Cancer, "c").unwrap(),
    ];
    let truths = [
        LabelMap::from_bools(g, &[true, false, true, false]).unwrap(),
        LabelMap::from_bools(g, &[false, true, false, true]).unwrap(),
        LabelMap::from_bools(g, &[true, false, false, false]).unwrap(),
    ];
    let inputs: Vec<SweepInput> = maps
        .iter()
        .zip(&truths)
        .map(|(m, t)| SweepInput {
            map: m,
            truth: t,
            eval_mask: None,
        })
        .collect();
    let result = threshold_sweep(&inputs).map_err(|e| e.to_string())?;
    ensure!(result.points.len() == 101, "{} thresholds", result.points.len());
    let mut best: Option<(f64, f64)> = None;
    for (k, p) in result.points.iter().enumerate() {
        let t = k as f64 / 100.0;
        ensure!((p.threshold - k as f64 * 0.01).abs() < 1e-12, "threshold {k} is {}", p.threshold);
        // Brute force: per-image F1 = 2TP / (2TP + FP + FN), defined when
        // TP+FP > 0 and TP+FN > 0.
        let mut f1s = Vec::new();
        for (m, truth) in maps.iter().zip(&truths) {
            let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
            for (i, v) in m.cells().iter().enumerate() {
                let pred = v.unwrap() >= t;
                let actual = truth.labels()[i] == tilmap_core::gridmap::Label::Positive;
                match (pred, actual) {
                    (true, true) => tp += 1.0,
                    (true, false) => fp += 1.0,
                    (false, true) => fn_ += 1.0,
                    _ => {}
                }
            }
            if tp + fp > 0.0 && tp + fn_ > 0.0 {
                f1s.push(2.0 * tp / (2.0 * tp + fp + fn_));
            }
        }
        ensure!(p.n_defined == f1s.len(), "t={t}: n_defined {} vs {}", p.n_defined, f1s.len());
        if f1s.is_empty() {
            ensure!(p.mean_f1.value().is_none(), "t={t}: mean should be undefined");
            continue;
        }
        let mean = f1s.iter().sum::<f64>() / f1s.len() as f64;
        let std = (f1s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / f1s.len() as f64).sqrt();
        ensure!((p.mean_f1.value().unwrap() - mean).abs() < 1e-12, "t={t}: mean");
        ensure!((p.std_f1.value().unwrap() - std).abs() < 1e-12, "t={t}: std");
        if best.is_none_or(|(_, b)| mean > b) {
            best = Some((t, mean));
        }
    }
    ensure!(
        result.best_threshold == best.map(|b| b.0),
        "best threshold {:?} vs oracle {:?}",
        result.best_threshold,
        best
    );
    Ok(format!(
        "{checked_f1} F1 identities checked, 101-point sweep matches brute force (best t = {:.2})",
        best.unwrap().0
    ))
}

// ---------------------------------------------------------------------------
// 3. AUC

fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                num += 1.0;
            } else if si == sj {
                num += 0.5;
            }
        }
    }
    num / pairs
}

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for d in 0..50 {
        let n = rng.random_range(2..=1000);
        let ties = rng.random_bool(0.5);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = labels
            .iter()
            .map(|&l| {
                let s: f64 = rng.random::<f64>() + if l { 0.3 } else { 0.0 };
                if ties {
                    (s * 20.0).round() / 20.0
                } else {
                    s
                }
            })
            .collect();
        let got = auc(&scores, &labels).map_err(|e| e.to_string())?;
        let want = pairwise_auc(&scores, &labels);
        ensure!((got - want).abs() <= 1e-12, "dataset {d}: {got} vs {want}");
        let moved: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        let again = auc(&moved, &labels).map_err(|e| e.to_string())?;
        ensure!(again == got, "dataset {d}: monotone transform changed AUC {got} -> {again}");
    }
    Ok("50 datasets within 1e-12 of the pairwise statistic, transform-invariant".into())
}

// ---------------------------------------------------------------------------
// 4. Polychoric / polyserial

const TERTILE: f64 = 0.430_727_299_295_457_5;

fn tertile(v: f64) -> usize {
    (v >= -TERTILE) as usize + (v >= TERTILE) as usize
}

fn latent(rho: f64, n: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = (1.0 - rho * rho).sqrt();
    (0..n)
        .map(|_| {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            (a, rho * a + s * b)
        })
        .collect()
}

fn criterion_4() -> Check {
    let start = Instant::now();
    let mut worst = (0.0f64, "", 0.0);
    for rho in [-0.7, -0.3, 0.0, 0.3, 0.7, 0.9] {
        let (mut e_pc, mut e_ps) = (0.0, 0.0);
        for seed in 0..20u64 {
            let pairs = latent(rho, 5000, 1000 * seed + 17);
            let cells: Vec<(usize, usize)> = pairs.iter().map(|&(x, y)| (tertile(x), tertile(y))).collect();
            let table = ContingencyTable::from_pairs(&cells, 3, 3).map_err(|e| e.to_string())?;
            e_pc += (polychoric(&table).map_err(|e| e.to_string())?.rho - rho).abs();
            let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<u32> = pairs.iter().map(|p| tertile(p.1) as u32).collect();
            e_ps += (polyserial(&x, &y).map_err(|e| e.to_string())?.rho - rho).abs();
        }
        for (name, e) in [("polychoric", e_pc / 20.0), ("polyserial", e_ps / 20.0)] {
            ensure!(e <= 0.05, "{name} rho={rho}: mean abs error {e:.4}");
            if e > worst.0 {
                worst = (e, name, rho);
            }
        }
    }
    let perfect = ContingencyTable::from_rows(&[vec![40, 0, 0], vec![0, 35, 0], vec![0, 0, 25]]).unwrap();
    let r = polychoric(&perfect).map_err(|e| e.to_string())?.rho;
    ensure!(r >= 0.99, "perfect agreement gives {r}");
    let phi2 = bivariate_normal_cdf(0.0, 0.0, 0.5);
    let closed = 0.25 + 0.5f64.asin() / (2.0 * std::f64::consts::PI);
    ensure!((phi2 - closed).abs() <= 1e-7, "Φ2(0,0,0.5) = {phi2}, closed form {closed}");
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!(
        "worst mean error {:.4} ({} rho={}), perfect table rho={r:.4}, {:.1}s",
        worst.0,
        worst.1,
        worst.2,
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------
// 5. Combined map

fn criterion_5() -> Check {
    let one = grid(1, 1);
    for v in 0..=255u8 {
        // Every probability in the quantization bucket of v.
        let lo = ((v as f64 - 0.5) / 255.0).max(0.0);
        let hi = ((v as f64 + 0.5) / 255.0).min(1.0);
        for k in 0..=50 {
            let p = (lo + (hi - lo) * k as f64 / 50.0).min(if v < 255 { hi - 1e-12 } else { 1.0 });
            for tissue in [false, true] {
                let til = ProbabilityMap::from_values(one, &[p], LabelKind::Til, "t").unwrap();
                let tum = ProbabilityMap::from_values(one, &[1.0 - p], LabelKind::Cancer, "t").unwrap();
                let mask = TissueMask::new(one, vec![tissue]).unwrap();
                let cm = combine(&til, &tum, &mask).map_err(|e| e.to_string())?;
                ensure!(cm.r[0] == v, "p={p} encodes to {} not {v}", cm.r[0]);
                let (t2, c2, m2) = decode_combined(&cm).map_err(|e| e.to_string())?;
                ensure!((t2.cells()[0].unwrap() - p).abs() <= 1.0 / 510.0 + 1e-15, "til p={p}");
                ensure!((c2.cells()[0].unwrap() - (1.0 - p)).abs() <= 1.0 / 510.0 + 1e-15, "tumor p={}", 1.0 - p);
                ensure!(m2.tissue()[0] == tissue, "tissue flag");
            }
        }
        let cm = CombinedMap::from_channels(one, vec![v], vec![255 - v], vec![255]).unwrap();
        let (t, c, _) = decode_combined(&cm).map_err(|e| e.to_string())?;
        ensure!(quantize(t.cells()[0].unwrap()) == v, "decode/encode of {v}");
        ensure!(quantize(c.cells()[0].unwrap()) == 255 - v, "decode/encode of {}", 255 - v);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let (c, r) = (rng.random_range(1..30), rng.random_range(1..30));
        let til = random_map(&mut rng, c, r, 1.0, LabelKind::Til);
        let tum = random_map(&mut rng, c, r, 1.0, LabelKind::Cancer);
        let tissue: Vec<bool> = (0..c * r).map(|_| rng.random_bool(0.7)).collect();
        let mask = TissueMask::new(grid(c, r), tissue.clone()).unwrap();
        let (t2, c2, m2) = decode_combined(&combine(&til, &tum, &mask).unwrap()).unwrap();
        for k in 0..c * r {
            ensure!((t2.cells()[k].unwrap() - til.cells()[k].unwrap()).abs() <= 1.0 / 510.0 + 1e-15, "til cell");
            ensure!((c2.cells()[k].unwrap() - tum.cells()[k].unwrap()).abs() <= 1.0 / 510.0 + 1e-15, "tumor cell");
        }
        ensure!(m2.tissue() == tissue.as_slice(), "tissue flags");
    }

    // Golden 4x4. L = TIL-positive, C = cancer-positive, T = tissue.
    let g = grid(4, 4);
    #[rustfmt::skip]
    let til = [
        0.9, 0.9, 0.1, 0.1,
        0.9, 0.1, 0.1, 0.1,
        0.6, 0.2, 0.4, 0.0,
        0.1, 0.1, 0.5, 0.1,
    ];
    #[rustfmt::skip]
    let cancer = [
        0.9, 0.1, 0.9, 0.1,
        0.1, 0.9, 0.1, 0.1,
        0.9, 0.6, 0.59, 0.0,
        0.1, 0.1, 0.1, 0.2,
    ];
    #[rustfmt::skip]
    let tissue = [
        true, true, true, true,
        false, false, true, false,
        true, true, true, false,
        true, false, true, true,
    ];
    #[rustfmt::skip]
    let expected = [
        RED, RED, YELLOW, GREY,
        RED, YELLOW, GREY, WHITE,
        RED, YELLOW, GREY, WHITE,
        GREY, WHITE, RED, GREY,
    ];
    let til = ProbabilityMap::from_values(g, &til, LabelKind::Til, "t").unwrap();
    let cancer = ProbabilityMap::from_values(g, &cancer, LabelKind::Cancer, "c").unwrap();
    let mask = TissueMask::new(g, tissue.to_vec()).unwrap();
    let params = PairParams {
        til_threshold: 0.5,
        cancer_threshold: 0.6,
        cancer_aggregation: None,
    };
    let img = render_combined_display(&til, &cancer, &mask, &params).map_err(|e| e.to_string())?;
    let got: Vec<[u8; 3]> = img.pixels().map(|p| p.0).collect();
    ensure!(got == expected, "golden 4x4 mismatch: {got:?}");
    Ok("256 channel values and 200 random maps within 1/510, golden 4x4 overlay exact".into())
}

// ---------------------------------------------------------------------------
// 6. Confusion render

fn criterion_6() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..100 {
        let (c, r) = (rng.random_range(1..40), rng.random_range(1..40));
        let g = grid(c, r);
        let pred: Vec<bool> = (0..c * r).map(|_| rng.random_bool(0.4)).collect();
        let truth: Vec<bool> = (0..c * r).map(|_| rng.random_bool(0.4)).collect();
        let pred = LabelMap::from_bools(g, &pred).unwrap();
        let truth = LabelMap::from_bools(g, &truth).unwrap();
        let mask = (case % 2 == 0).then(|| TissueMask::new(g, (0..c * r).map(|_| rng.random_bool(0.8)).collect()).unwrap());
        let counts = confusion(&pred, &truth, mask.as_ref()).map_err(|e| e.to_string())?;
        let img = render_confusion(&pred, &truth, mask.as_ref()).map_err(|e| e.to_string())?;
        let mut hist: HashMap<[u8; 3], u64> = HashMap::new();
        for p in img.pixels() {
            *hist.entry(p.0).or_default() += 1;
        }
        let h = |c: [u8; 3]| hist.get(&c).copied().unwrap_or(0);
        let outside = mask.as_ref().map_or(0, |m| (c * r - m.tissue_count()) as u64);
        ensure!(h([0, 255, 0]) == counts.tp, "case {case}: green {} vs tp {}", h([0, 255, 0]), counts.tp);
        ensure!(h([255, 0, 0]) == counts.fn_, "case {case}: red vs fn");
        ensure!(h([255, 255, 0]) == counts.fp, "case {case}: yellow vs fp");
        ensure!(h([0, 0, 255]) == counts.tn, "case {case}: blue vs tn");
        ensure!(h([0, 0, 0]) == outside, "case {case}: black vs outside");
        ensure!(hist.len() <= 5, "case {case}: unexpected colors");
    }
    Ok("100 random pairs, histogram equals counts".into())
}

// ---------------------------------------------------------------------------
// 7. Super-patches

fn criterion_7() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let (c, r) = (rng.random_range(1..70), rng.random_range(1..70));
        let p = rng.random_range(0.0..=1.0);
        let pos: Vec<bool> = (0..c * r).map(|_| rng.random_bool(p)).collect();
        let labels = LabelMap::from_bools(grid(c, r), &pos).unwrap();
        let scores = super_patch_scores(&labels, 8).map_err(|e| e.to_string())?;
        ensure!(scores.iter().all(|s| s.machine_count <= 64), "count above 64");
        let total: u64 = scores.iter().map(|s| s.machine_count as u64).sum();
        ensure!(total == labels.positive_count() as u64, "block sum {total} vs {}", labels.positive_count());
    }
    // 17 positives inside block (1, 2) of a 24x24 grid, 3 more elsewhere.
    let g = grid(24, 24);
    let mut pos = vec![false; g.len()];
    let mut placed = 0;
    'outer: for i in 8..16 {
        for j in 16..24 {
            if (i + j) % 3 == 0 {
                pos[i * 24 + j] = true;
                placed += 1;
                if placed == 17 {
                    break 'outer;
                }
            }
        }
    }
    for k in [0, 100, 575] {
        pos[k] = true;
    }
    let labels = LabelMap::from_bools(g, &pos).unwrap();
    let scores = super_patch_scores(&labels, 8).map_err(|e| e.to_string())?;
    let block = scores.iter().find(|s| (s.row, s.col) == (1, 2)).ok_or("missing block (1,2)")?;
    ensure!(block.machine_count == 17, "block (1,2) scored {}", block.machine_count);
    Ok("100 random grids conserve counts, hand-built block scores 17".into())
}

// ---------------------------------------------------------------------------
// 8. Formats, service and end-to-end CLI

async fn get(app: &axum::Router, uri: &str) -> (StatusCode, Vec<u8>) {
    let resp = app
        .clone()
        .oneshot(Request::builder().uri(uri).body(Body::empty()).unwrap())
        .await
        .unwrap();
    let s = resp.status();
    (s, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

fn service_checks() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let catalog = Arc::new(Catalog::open(dir.path()).map_err(|e| e.to_string())?);
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    // Ingest -> export byte identity, and idempotent re-ingest.
    for k in 0..20 {
        let (c, r) = (rng.random_range(1..80), rng.random_range(1..80));
        let g = GridGeometry::from_slide(c as u32 * 100, r as u32 * 100, 100).unwrap();
        let cells = (0..g.len())
            .map(|_| rng.random_bool(0.7).then(|| rng.random_range(0..=1_000_000u32) as f64 / 1e6))
            .collect();
        let map = ProbabilityMap::from_cells(g, cells, LabelKind::Til, "m").unwrap();
        let bytes = PredictionFile::from_map(format!("slide-{k}"), map).to_bytes();
        let a = catalog.ingest(&bytes, None).map_err(|e| e.to_string())?;
        let exported = catalog.export(&a.record.map_id).map_err(|e| e.to_string())?;
        ensure!(exported == bytes, "export of map {k} differs from ingested bytes");
        let n_before = catalog.maps().len();
        let b = catalog.ingest(&exported, None).map_err(|e| e.to_string())?;
        ensure!(!b.created && b.record == a.record, "re-ingest of map {k} created a new record");
        ensure!(catalog.maps().len() == n_before, "re-ingest changed the catalog size");
    }

    // Stitched z=0 tiles equal the full render, over HTTP.
    let (c, r) = (613usize, 389usize);
    let g = GridGeometry::from_slide(c as u32 * 10, r as u32 * 10, 10).unwrap();
    let cells = (0..g.len())
        .map(|_| rng.random_bool(0.85).then(|| rng.random_range(0..=1000u32) as f64 / 1000.0))
        .collect();
    let big = ProbabilityMap::from_cells(g, cells, LabelKind::Cancer, "big").unwrap();
    let id = catalog
        .ingest(&PredictionFile::from_map("big", big).to_bytes(), None)
        .map_err(|e| e.to_string())?
        .record
        .map_id;
    let app = router(AppState {
        catalog: catalog.clone(),
        config: Arc::new(Config::default()),
    });
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let (tiles_x, tiles_y) = (c.div_ceil(256), r.div_ceil(256));
    rt.block_on(async {
        let (s, full) = get(&app, &format!("/maps/{id}/png")).await;
        ensure!(s == StatusCode::OK, "png status {s}");
        let full = image::load_from_memory(&full).unwrap().to_rgba8();
        ensure!(full.dimensions() == (c as u32, r as u32), "render size {:?}", full.dimensions());
        for ty in 0..tiles_y as u32 {
            for tx in 0..tiles_x as u32 {
                let (s, bytes) = get(&app, &format!("/maps/{id}/tiles/0/{tx}/{ty}.png")).await;
                ensure!(s == StatusCode::OK, "tile {tx},{ty} status {s}");
                let tile = image::load_from_memory(&bytes).unwrap().to_rgba8();
                ensure!(tile.dimensions() == (256, 256), "tile size");
                for (x, y, p) in tile.enumerate_pixels() {
                    let (gx, gy) = (tx * 256 + x, ty * 256 + y);
                    let want = if gx < c as u32 && gy < r as u32 {
                        *full.get_pixel(gx, gy)
                    } else {
                        image::Rgba([0, 0, 0, 0])
                    };
                    ensure!(*p == want, "tile {tx},{ty} pixel {x},{y}");
                }
            }
        }
        let (s, _) = get(&app, &format!("/maps/{id}/tiles/0/{tiles_x}/0.png")).await;
        ensure!(s == StatusCode::NOT_FOUND, "out-of-range tile gave {s}");
        let (s, top) = get(&app, &format!("/maps/{id}/tiles/2/0/0.png")).await;
        ensure!(s == StatusCode::OK && !top.is_empty(), "top level tile");
        let (s, _) = get(&app, &format!("/maps/{id}/tiles/3/0/0.png")).await;
        ensure!(s == StatusCode::NOT_FOUND, "level above the top gave {s}");
        Ok(())
    })?;
    Ok(format!("20 files byte-identical and idempotent, {} tiles stitched", tiles_x * tiles_y))
}

fn tilmap(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_tilmap"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("tilmap {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn cli_checks() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let start = Instant::now();
    tilmap(d, &["synth", "--out", "."])?;
    tilmap(d, &["score", "--slide", "slide.png", "--kind", "til", "--out", "til.pred"])?;
    tilmap(d, &["score", "--slide", "slide.png", "--kind", "cancer", "--out", "cancer.pred"])?;
    let ingested = tilmap(d, &["ingest", "--data-dir", "db", "til.pred", "cancer.pred"])?;
    tilmap(d, &["aggregate", "cancer.pred", "--out", "cancer_agg.pred"])?;
    tilmap(d, &["combine", "--til", "til.pred", "--cancer", "cancer.pred", "--out", "combined.png"])?;
    tilmap(d, &["eval", "sweep", "cancer_agg.pred=annotation.json", "--out", "sweep.csv"])?;
    let stats = tilmap(d, &["stats", "--til", "til.pred", "--cancer", "cancer.pred"])?;
    let elapsed = start.elapsed();

    ensure!(ingested.matches("\"created\": true").count() == 2, "ingest output: {ingested}");
    let again = tilmap(d, &["ingest", "--data-dir", "db", "til.pred"])?;
    ensure!(again.contains("\"created\": false"), "second ingest: {again}");
    let stats: serde_json::Value = serde_json::from_str(&stats).map_err(|e| e.to_string())?;
    let frac = stats["til_in_tumor_fraction"].as_f64().ok_or("fraction undefined")?;
    ensure!(frac > 0.0 && frac < 1.0, "til_in_tumor_fraction {frac}");
    let tumor = stats["tumor_patch_count"].as_u64().unwrap_or(0);
    let tissue = stats["tissue_patch_count"].as_u64().unwrap_or(0);
    ensure!(tumor > 0 && tumor < tissue && tissue < 35 * 35, "counts {stats}");
    let csv = std::fs::read_to_string(d.join("sweep.csv")).map_err(|e| e.to_string())?;
    ensure!(csv.lines().count() == 102, "sweep has {} lines", csv.lines().count());
    let combined = image::open(d.join("combined.png")).map_err(|e| e.to_string())?.to_rgb8();
    ensure!(combined.dimensions() == (35, 35), "combined size");
    ensure!(elapsed < Duration::from_secs(10), "pipeline took {elapsed:?}");
    Ok(format!("CLI pipeline {:.2}s, TIL-in-tumor {frac:.3}", elapsed.as_secs_f64()))
}

fn criterion_8() -> Check {
    let a = service_checks()?;
    let b = cli_checks()?;
    Ok(format!("{a}; {b}"))
}

// ---------------------------------------------------------------------------
// 9. Throughput

fn criterion_9() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let map = random_map(&mut rng, 400, 250, 0.9, LabelKind::Cancer);
    let params = RenderParams {
        colormap: Colormap::Heat,
        threshold: None,
        aggregation: Some(AggregationConfig::new(4, AggregationFunc::Max).unwrap()),
    };
    let start = Instant::now();
    let img = render_map(&map, &params, 0.6).map_err(|e| e.to_string())?;
    let png = encode_png(&img).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(2), "sequential aggregate+render took {elapsed:?}");

    let par = render_map_par(&map, &params, 0.6).map_err(|e| e.to_string())?;
    ensure!(par == img, "parallel render differs");
    ensure!(encode_png(&par).map_err(|e| e.to_string())? == png, "parallel PNG bytes differ");
    for f in [AggregationFunc::Max, AggregationFunc::Median, AggregationFunc::Average] {
        let cfg = AggregationConfig::new(4, f).unwrap();
        let (s, p) = (aggregate(&map, cfg), aggregate_par(&map, cfg));
        let same = s.cells().iter().zip(p.cells()).all(|(a, b)| a.map(f64::to_bits) == b.map(f64::to_bits));
        ensure!(same, "{} aggregation not bit-identical", f.as_str());
    }
    let labels_match = threshold(&map, 0.5).unwrap() == threshold(&map, 0.5).unwrap();
    ensure!(labels_match, "thresholding is not deterministic");
    Ok(format!("100000 patches in {:.3}s, parallel bit-identical", elapsed.as_secs_f64()))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Check); 9] = [
        (1, "aggregation oracle", criterion_1),
        (2, "metric identities and sweep", criterion_2),
        (3, "AUC pairwise oracle", criterion_3),
        (4, "polychoric/polyserial recovery", criterion_4),
        (5, "combined-map round trip and overlay", criterion_5),
        (6, "confusion render histogram", criterion_6),
        (7, "super-patch scores", criterion_7),
        (8, "formats, service and CLI", criterion_8),
        (9, "throughput", criterion_9),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("PASS criterion {n}: {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {n}: {name}: {why}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
