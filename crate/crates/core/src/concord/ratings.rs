//! Rating tables and the pairwise concordance report built from them.

use std::io::Read;

use serde::Serialize;

use super::bootstrap::{bootstrap_ci, BootstrapConfig};
use super::estimate::{polychoric, polyserial, ConcordanceEstimate, ContingencyTable, Interval};
use super::{median_rating, Level};
use crate::error::{Error, Result};

/// Super-patch ratings by human raters and machine counts by model.
///
/// CSV layout: a `super_patch_id` column, one `rater_<name>` column per
/// rater holding `low|medium|high`, and one integer column per model. Empty
/// cells are missing values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RatingTable {
    pub ids: Vec<String>,
    pub raters: Vec<(String, Vec<Option<Level>>)>,
    pub models: Vec<(String, Vec<Option<f64>>)>,
}

impl RatingTable {
    pub fn from_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
            .clone();
        if headers.get(0) != Some("super_patch_id") {
            return Err(Error::Parse {
                line: 1,
                message: "first column must be super_patch_id".into(),
            });
        }
        let mut table = RatingTable::default();
        let mut rater_cols = Vec::new();
        let mut model_cols = Vec::new();
        for (k, h) in headers.iter().enumerate().skip(1) {
            if let Some(name) = h.strip_prefix("rater_") {
                rater_cols.push(k);
                table.raters.push((name.to_string(), Vec::new()));
            } else {
                model_cols.push(k);
                table.models.push((h.to_string(), Vec::new()));
            }
        }
        for (row, rec) in rdr.records().enumerate() {
            let line = row + 2;
            let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
            table.ids.push(rec.get(0).unwrap_or_default().to_string());
            for (slot, &k) in rater_cols.iter().enumerate() {
                let cell = rec.get(k).unwrap_or_default();
                let v = if cell.is_empty() {
                    None
                } else {
                    Some(cell.parse::<Level>().map_err(|e| Error::Parse { line, message: e.to_string() })?)
                };
                table.raters[slot].1.push(v);
            }
            for (slot, &k) in model_cols.iter().enumerate() {
                let cell = rec.get(k).unwrap_or_default();
                let v = if cell.is_empty() {
                    None
                } else {
                    Some(cell.parse::<f64>().map_err(|e| Error::Parse {
                        line,
                        message: format!("model {:?}: {e}", table.models[slot].0),
                    })?)
                };
                table.models[slot].1.push(v);
            }
        }
        Ok(table)
    }

    pub fn rater(&self, name: &str) -> Result<&[Option<Level>]> {
        self.raters
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::invalid(format!("no rater named {name:?}")))
    }

    pub fn model(&self, name: &str) -> Result<&[Option<f64>]> {
        self.models
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::invalid(format!("no model column named {name:?}")))
    }

    /// Per-row median across all raters.
    pub fn median_ratings(&self) -> Result<(Vec<Option<Level>>, usize)> {
        let rows: Vec<Vec<Option<Level>>> = (0..self.ids.len())
            .map(|k| self.raters.iter().map(|(_, v)| v[k]).collect())
            .collect();
        let m = median_rating(&rows)?;
        Ok((m.medians, m.excluded))
    }

    /// 3x3 low/medium/high table over super-patches rated by both.
    pub fn contingency(&self, a: &str, b: &str) -> Result<ContingencyTable> {
        ContingencyTable::from_pairs(&level_pairs(self.rater(a)?, self.rater(b)?), 3, 3)
    }
}

fn level_pairs(a: &[Option<Level>], b: &[Option<Level>]) -> Vec<(usize, usize)> {
    a.iter()
        .zip(b)
        .filter_map(|(x, y)| Some((x.as_ref()?.code() as usize - 1, y.as_ref()?.code() as usize - 1)))
        .collect()
}

fn widen_to_include(ci: Interval, rho: f64) -> Interval {
    Interval {
        low: ci.low.min(rho),
        high: ci.high.max(rho),
        level: ci.level,
    }
}

/// Polychoric estimate between two raters with a bootstrap interval.
pub fn polychoric_ci(a: &[Option<Level>], b: &[Option<Level>], cfg: &BootstrapConfig) -> Result<ConcordanceEstimate> {
    let pairs = level_pairs(a, b);
    let mut est = polychoric(&ContingencyTable::from_pairs(&pairs, 3, 3)?)?;
    let ci = bootstrap_ci(
        &pairs,
        |s| Ok(polychoric(&ContingencyTable::from_pairs(s, 3, 3)?)?.rho),
        cfg,
    )?;
    est.ci = Some(widen_to_include(ci, est.rho));
    est.n_resamples = cfg.n_resamples;
    Ok(est)
}

/// Polyserial estimate between machine scores and a rater, with a bootstrap
/// interval.
pub fn polyserial_ci(machine: &[Option<f64>], rater: &[Option<Level>], cfg: &BootstrapConfig) -> Result<ConcordanceEstimate> {
    let pairs: Vec<(f64, u32)> = machine
        .iter()
        .zip(rater)
        .filter_map(|(m, r)| Some(((*m)?, r.as_ref()?.code())))
        .collect();
    let split = |s: &[(f64, u32)]| -> (Vec<f64>, Vec<u32>) { s.iter().copied().unzip() };
    let (x, y) = split(&pairs);
    let mut est = polyserial(&x, &y)?;
    let ci = bootstrap_ci(
        &pairs,
        |s| {
            let (x, y) = split(s);
            Ok(polyserial(&x, &y)?.rho)
        },
        cfg,
    )?;
    est.ci = Some(widen_to_include(ci, est.rho));
    est.n_resamples = cfg.n_resamples;
    Ok(est)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairEstimate {
    pub a: String,
    pub b: String,
    pub estimate: ConcordanceEstimate,
}

/// Human-human, human-machine and median-machine concordance, one entry per
/// pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcordanceReport {
    pub rater_pairs: Vec<PairEstimate>,
    pub rater_vs_model: Vec<PairEstimate>,
    pub median_vs_model: Vec<PairEstimate>,
    pub median_excluded: usize,
}

pub fn concordance_report(table: &RatingTable, cfg: &BootstrapConfig) -> Result<ConcordanceReport> {
    let mut rater_pairs = Vec::new();
    for (i, (a, va)) in table.raters.iter().enumerate() {
        for (b, vb) in &table.raters[i + 1..] {
            rater_pairs.push(PairEstimate {
                a: a.clone(),
                b: b.clone(),
                estimate: polychoric_ci(va, vb, cfg)?,
            });
        }
    }
    let mut rater_vs_model = Vec::new();
    for (r, vr) in &table.raters {
        for (m, vm) in &table.models {
            rater_vs_model.push(PairEstimate {
                a: r.clone(),
                b: m.clone(),
                estimate: polyserial_ci(vm, vr, cfg)?,
            });
        }
    }
    let mut median_vs_model = Vec::new();
    let mut median_excluded = 0;
    if table.raters.len() % 2 == 1 {
        let (medians, excluded) = table.median_ratings()?;
        median_excluded = excluded;
        for (m, vm) in &table.models {
            median_vs_model.push(PairEstimate {
                a: "median".into(),
                b: m.clone(),
                estimate: polyserial_ci(vm, &medians, cfg)?,
            });
        }
    }
    Ok(ConcordanceReport {
        rater_pairs,
        rater_vs_model,
        median_vs_model,
        median_excluded,
    })
}
