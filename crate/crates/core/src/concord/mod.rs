//! Super-patch TIL scoring and human/machine concordance.

mod bootstrap;
mod estimate;
mod normal;
mod ratings;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridmap::{Label, LabelMap};

pub use bootstrap::{bootstrap_ci, BootstrapConfig};
pub use estimate::{
    polychoric, polyserial, ConcordanceEstimate, ContingencyTable, Interval, Method, PROB_FLOOR, RHO_BOUND,
};
pub use normal::{bivariate_normal_cdf, integrate, norm_cdf, norm_interval, norm_quantile};
pub use ratings::{concordance_report, polychoric_ci, polyserial_ci, ConcordanceReport, PairEstimate, RatingTable};

/// Default super-patch side, in patches.
pub const SUPER_PATCH_BLOCK: usize = 8;

/// Ordinal TIL rating, encoded low=1, medium=2, high=3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Low = 1,
    Medium = 2,
    High = 3,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Low, Level::Medium, Level::High];

    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(Level::Low),
            2 => Some(Level::Medium),
            3 => Some(Level::High),
            _ => None,
        }
    }
}

impl std::str::FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" | "1" => Ok(Level::Low),
            "medium" | "2" => Ok(Level::Medium),
            "high" | "3" => Ok(Level::High),
            other => Err(Error::invalid(format!("unknown rating {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuperPatchScore {
    /// Block row and column.
    pub row: usize,
    pub col: usize,
    /// TIL-positive patches in the block.
    pub machine_count: u32,
    /// In-grid patches in the block; below `block²` on the right and bottom edges.
    pub cells: u32,
}

/// Count TIL-positive patches in each `block x block` super-patch, anchored
/// at multiples of `block` like the aggregation windows. Row-major order.
pub fn super_patch_scores(til_labels: &LabelMap, block: usize) -> Result<Vec<SuperPatchScore>> {
    if block == 0 {
        return Err(Error::invalid("super-patch block must be at least 1"));
    }
    let g = til_labels.geometry();
    let (brows, bcols) = (g.rows.div_ceil(block), g.cols.div_ceil(block));
    let mut out = Vec::with_capacity(brows * bcols);
    for bi in 0..brows {
        for bj in 0..bcols {
            let (r0, c0) = (bi * block, bj * block);
            let (r1, c1) = ((r0 + block).min(g.rows), (c0 + block).min(g.cols));
            let mut count = 0;
            for r in r0..r1 {
                for c in c0..c1 {
                    count += (til_labels.get(r, c) == Label::Positive) as u32;
                }
            }
            out.push(SuperPatchScore {
                row: bi,
                col: bj,
                machine_count: count,
                cells: ((r1 - r0) * (c1 - c0)) as u32,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MedianRatings {
    /// `None` where a rater was missing.
    pub medians: Vec<Option<Level>>,
    pub excluded: usize,
}

/// Element-wise median across an odd number of raters. Each inner slice is
/// one super-patch's ratings.
pub fn median_rating(rows: &[Vec<Option<Level>>]) -> Result<MedianRatings> {
    let mut excluded = 0;
    let medians = rows
        .iter()
        .map(|ratings| {
            if ratings.len() % 2 == 0 {
                return Err(Error::invalid(format!(
                    "median rating needs an odd number of raters, got {}",
                    ratings.len()
                )));
            }
            let mut v: Vec<Level> = ratings.iter().flatten().copied().collect();
            if v.len() < ratings.len() {
                excluded += 1;
                return Ok(None);
            }
            v.sort_unstable();
            Ok(Some(v[v.len() / 2]))
        })
        .collect::<Result<_>>()?;
    Ok(MedianRatings { medians, excluded })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinSummary {
    pub level: Level,
    pub n: usize,
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

/// Distribution of machine scores within each ordinal rating bin, i.e. the
/// numbers behind a box plot of machine score by rating.
pub fn ordinal_vs_machine_summary(levels: &[Option<Level>], machine: &[f64]) -> Result<Vec<BinSummary>> {
    if levels.len() != machine.len() {
        return Err(Error::invalid(format!(
            "{} ratings for {} machine scores",
            levels.len(),
            machine.len()
        )));
    }
    Ok(Level::ALL
        .iter()
        .map(|&level| {
            let mut v: Vec<f64> = levels
                .iter()
                .zip(machine)
                .filter(|(l, _)| **l == Some(level))
                .map(|(_, &m)| m)
                .collect();
            v.sort_unstable_by(f64::total_cmp);
            let q = |p| (!v.is_empty()).then(|| bootstrap::quantile_sorted(&v, p));
            BinSummary {
                level,
                n: v.len(),
                median: q(0.5),
                q1: q(0.25),
                q3: q(0.75),
                min: v.first().copied(),
                max: v.last().copied(),
            }
        })
        .collect())
}

/// True when every non-empty bin's median exceeds the previous one.
pub fn medians_strictly_increasing(bins: &[BinSummary]) -> bool {
    let meds: Vec<f64> = bins.iter().filter_map(|b| b.median).collect();
    meds.windows(2).all(|w| w[0] < w[1])
}
