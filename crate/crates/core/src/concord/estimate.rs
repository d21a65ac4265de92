//! Two-step maximum-likelihood polychoric and polyserial correlations.
//!
//! Thresholds come from the cumulative marginal proportions through the
//! normal quantile; the correlation then maximizes the likelihood with the
//! thresholds held fixed.

use serde::{Deserialize, Serialize};

use super::normal::{bivariate_normal_cdf, norm_interval, norm_quantile};
use crate::error::{Error, Result};

/// Floor for cell probabilities inside the log-likelihood.
pub const PROB_FLOOR: f64 = 1e-12;
/// Search interval for the correlation is `[-RHO_BOUND, RHO_BOUND]`.
pub const RHO_BOUND: f64 = 1.0 - 1e-7;
const RHO_TOL: f64 = 1e-9;
const GRID_POINTS: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Polychoric,
    Polyserial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceEstimate {
    pub rho: f64,
    pub row_thresholds: Vec<f64>,
    /// Empty for polyserial, where the column variable is continuous.
    pub col_thresholds: Vec<f64>,
    pub ci: Option<Interval>,
    pub method: Method,
    pub n_resamples: usize,
    pub n: u64,
}

/// Row-major `rows x cols` table of counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    rows: usize,
    cols: usize,
    counts: Vec<u64>,
}

impl ContingencyTable {
    pub fn new(rows: usize, cols: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != rows * cols {
            return Err(Error::invalid(format!("{} counts for a {rows}x{cols} table", counts.len())));
        }
        Ok(Self { rows, cols, counts })
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged contingency table"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Cross-tabulate paired 0-based category codes.
    pub fn from_pairs(pairs: &[(usize, usize)], rows: usize, cols: usize) -> Result<Self> {
        let mut counts = vec![0; rows * cols];
        for &(r, c) in pairs {
            if r >= rows || c >= cols {
                return Err(Error::invalid(format!("category ({r}, {c}) outside {rows}x{cols} table")));
            }
            counts[r * cols + c] += 1;
        }
        Self::new(rows, cols, counts)
    }

    pub fn get(&self, r: usize, c: usize) -> u64 {
        self.counts[r * self.cols + c]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn transpose(&self) -> Self {
        let mut counts = Vec::with_capacity(self.counts.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                counts.push(self.get(r, c));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            counts,
        }
    }

    fn row_sums(&self) -> Vec<u64> {
        (0..self.rows).map(|r| (0..self.cols).map(|c| self.get(r, c)).sum()).collect()
    }

    fn col_sums(&self) -> Vec<u64> {
        (0..self.cols).map(|c| (0..self.rows).map(|r| self.get(r, c)).sum()).collect()
    }

    /// Drop empty rows and columns, keeping order.
    fn compacted(&self) -> Self {
        let keep_r: Vec<usize> = self.row_sums().iter().enumerate().filter(|(_, &s)| s > 0).map(|(k, _)| k).collect();
        let keep_c: Vec<usize> = self.col_sums().iter().enumerate().filter(|(_, &s)| s > 0).map(|(k, _)| k).collect();
        let counts = keep_r
            .iter()
            .flat_map(|&r| keep_c.iter().map(move |&c| (r, c)))
            .map(|(r, c)| self.get(r, c))
            .collect();
        Self {
            rows: keep_r.len(),
            cols: keep_c.len(),
            counts,
        }
    }
}

/// Interior thresholds from category counts: `Φ⁻¹(cumulative share)`.
fn thresholds_from_counts(counts: &[u64]) -> Vec<f64> {
    let n: u64 = counts.iter().sum();
    let mut cum = 0;
    counts[..counts.len() - 1]
        .iter()
        .map(|&c| {
            cum += c;
            norm_quantile(cum as f64 / n as f64)
        })
        .collect()
}

fn with_infinities(inner: &[f64]) -> Vec<f64> {
    let mut t = Vec::with_capacity(inner.len() + 2);
    t.push(f64::NEG_INFINITY);
    t.extend_from_slice(inner);
    t.push(f64::INFINITY);
    t
}

/// Brent's method for a minimum of `f` on `[a, b]`.
fn brent_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const GOLDEN: f64 = 0.381_966_011_250_105;
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let tol1 = tol + 1e-12 * x.abs();
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if m >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            (v, fv, w, fw, x, fx) = (w, fw, x, fx, u, fu);
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                (v, fv, w, fw) = (w, fw, u, fu);
            } else if fu <= fv || v == x || v == w {
                (v, fv) = (u, fu);
            }
        }
    }
    (x, fx)
}

/// Maximize a log-likelihood in `rho` over `[-RHO_BOUND, RHO_BOUND]`.
///
/// A coarse grid locates the best bracket, then Brent refines inside it. The
/// grid endpoints are candidates too, so a likelihood increasing toward ±1
/// resolves to the bound.
fn maximize_rho(loglik: impl Fn(f64) -> f64) -> f64 {
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|k| -RHO_BOUND + 2.0 * RHO_BOUND * k as f64 / (GRID_POINTS - 1) as f64)
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&r| loglik(r)).collect();
    let best = vals
        .iter()
        .enumerate()
        .fold(0, |bi, (k, &v)| if v > vals[bi] { k } else { bi });
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(GRID_POINTS - 1)];
    let (x, fx) = brent_min(|r| -loglik(r), lo, hi, RHO_TOL);
    // Brent never evaluates the bracket ends; keep the bound if it wins.
    let mut out = (x, -fx);
    for end in [lo, hi] {
        let v = loglik(end);
        if v > out.1 {
            out = (end, v);
        }
    }
    out.0
}

/// Polychoric correlation of an ordinal-by-ordinal table.
pub fn polychoric(table: &ContingencyTable) -> Result<ConcordanceEstimate> {
    let t = table.compacted();
    if t.rows < 2 || t.cols < 2 {
        return Err(Error::UndefinedEstimate(format!(
            "polychoric needs at least two non-empty rows and columns, got {}x{}",
            t.rows, t.cols
        )));
    }
    let row_thresholds = thresholds_from_counts(&t.row_sums());
    let col_thresholds = thresholds_from_counts(&t.col_sums());
    let tr = with_infinities(&row_thresholds);
    let tc = with_infinities(&col_thresholds);

    let loglik = |rho: f64| {
        // cdf[i][j] = Φ₂(tr[i], tc[j]; ρ)
        let cdf: Vec<Vec<f64>> = tr
            .iter()
            .map(|&a| tc.iter().map(|&b| bivariate_normal_cdf(a, b, rho)).collect())
            .collect();
        let mut ll = 0.0;
        for i in 0..t.rows {
            for j in 0..t.cols {
                let n = t.get(i, j);
                if n == 0 {
                    continue;
                }
                let p = cdf[i + 1][j + 1] - cdf[i][j + 1] - cdf[i + 1][j] + cdf[i][j];
                ll += n as f64 * p.max(PROB_FLOOR).ln();
            }
        }
        ll
    };
    Ok(ConcordanceEstimate {
        rho: maximize_rho(loglik),
        row_thresholds,
        col_thresholds,
        ci: None,
        method: Method::Polychoric,
        n_resamples: 0,
        n: t.total(),
    })
}

/// Polyserial correlation between continuous `x` and ordinal codes `y`.
/// Codes only need to be ordered; unused levels are ignored.
pub fn polyserial(x: &[f64], y: &[u32]) -> Result<ConcordanceEstimate> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("{} scores for {} ratings", x.len(), y.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite continuous score"));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if x.is_empty() || !(sd > 1e-12 * mean.abs().max(1.0)) {
        return Err(Error::UndefinedEstimate("continuous variable is constant".into()));
    }
    let z: Vec<f64> = x.iter().map(|v| (v - mean) / sd).collect();

    let mut levels: Vec<u32> = y.to_vec();
    levels.sort_unstable();
    levels.dedup();
    if levels.len() < 2 {
        return Err(Error::UndefinedEstimate("ordinal variable has a single level".into()));
    }
    let codes: Vec<usize> = y.iter().map(|v| levels.binary_search(v).expect("present")).collect();
    let mut counts = vec![0u64; levels.len()];
    for &c in &codes {
        counts[c] += 1;
    }
    let row_thresholds = thresholds_from_counts(&counts);
    let tau = with_infinities(&row_thresholds);

    let loglik = |rho: f64| {
        let s = (1.0 - rho * rho).sqrt();
        z.iter()
            .zip(&codes)
            .map(|(&zi, &c)| {
                let lo = (tau[c] - rho * zi) / s;
                let hi = (tau[c + 1] - rho * zi) / s;
                norm_interval(lo, hi).max(PROB_FLOOR).ln()
            })
            .sum::<f64>()
    };
    Ok(ConcordanceEstimate {
        rho: maximize_rho(loglik),
        row_thresholds,
        col_thresholds: Vec::new(),
        ci: None,
        method: Method::Polyserial,
        n_resamples: 0,
        n: x.len() as u64,
    })
}
