//! Block aggregation of probability maps.
//!
//! The grid is tiled into non-overlapping `w x w` blocks anchored at indices
//! that are multiples of `w`. Every cell of a block gets `f` of the covered
//! values in that block:
//!
//! ```text
//! A(i, j) = f({ H(m, n) : m in [floor(i/w)*w, floor(i/w)*w + w),
//!                         n in [floor(j/w)*w, floor(j/w)*w + w) })
//! ```
//!
//! Edge blocks use only in-grid cells. A block with no covered cells stays
//! uncovered.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ProbabilityMap;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationFunc {
    Max,
    Median,
    Average,
}

impl AggregationFunc {
    pub fn as_str(self) -> &'static str {
        match self {
            AggregationFunc::Max => "max",
            AggregationFunc::Median => "median",
            AggregationFunc::Average => "average",
        }
    }

    /// Apply to a non-empty slice of values. May reorder `values`.
    pub fn apply(self, values: &mut [f64]) -> f64 {
        debug_assert!(!values.is_empty());
        match self {
            AggregationFunc::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            AggregationFunc::Average => values.iter().sum::<f64>() / values.len() as f64,
            AggregationFunc::Median => {
                values.sort_unstable_by(f64::total_cmp);
                let n = values.len();
                if n % 2 == 1 {
                    values[n / 2]
                } else {
                    (values[n / 2 - 1] + values[n / 2]) / 2.0
                }
            }
        }
    }
}

impl std::str::FromStr for AggregationFunc {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(AggregationFunc::Max),
            "median" => Ok(AggregationFunc::Median),
            "average" | "mean" => Ok(AggregationFunc::Average),
            other => Err(Error::invalid(format!("unknown aggregation function {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AggregationConfig {
    pub window_w: usize,
    pub func: AggregationFunc,
}

impl AggregationConfig {
    pub fn new(window_w: usize, func: AggregationFunc) -> Result<Self> {
        if window_w == 0 {
            return Err(Error::invalid("aggregation window must be at least 1"));
        }
        Ok(Self { window_w, func })
    }
}

impl Default for AggregationConfig {
    /// Max over 4x4 blocks.
    fn default() -> Self {
        Self {
            window_w: 4,
            func: AggregationFunc::Max,
        }
    }
}

/// Aggregate block by block on the current thread.
pub fn aggregate(map: &ProbabilityMap, cfg: AggregationConfig) -> ProbabilityMap {
    run(map, cfg, false)
}

/// Same as [`aggregate`], with block rows evaluated on the rayon pool.
/// Output is bit-identical to the sequential path.
pub fn aggregate_par(map: &ProbabilityMap, cfg: AggregationConfig) -> ProbabilityMap {
    run(map, cfg, true)
}

fn run(map: &ProbabilityMap, cfg: AggregationConfig, parallel: bool) -> ProbabilityMap {
    let w = cfg.window_w.max(1);
    if w == 1 {
        return map.clone();
    }
    let g = *map.geometry();
    let block_cols = g.cols.div_ceil(w);
    let block_rows = g.rows.div_ceil(w);

    let block_row = |bi: usize| -> Vec<Option<f64>> {
        let mut buf = Vec::with_capacity(w * w);
        let r0 = bi * w;
        let r1 = (r0 + w).min(g.rows);
        (0..block_cols)
            .map(|bj| {
                let c0 = bj * w;
                let c1 = (c0 + w).min(g.cols);
                buf.clear();
                for r in r0..r1 {
                    buf.extend(map.cells()[r * g.cols + c0..r * g.cols + c1].iter().flatten());
                }
                (!buf.is_empty()).then(|| cfg.func.apply(&mut buf))
            })
            .collect()
    };

    let blocks: Vec<Vec<Option<f64>>> = if parallel {
        (0..block_rows).into_par_iter().map(block_row).collect()
    } else {
        (0..block_rows).map(block_row).collect()
    };

    let mut cells = Vec::with_capacity(g.len());
    for r in 0..g.rows {
        let row_blocks = &blocks[r / w];
        cells.extend((0..g.cols).map(|c| row_blocks[c / w]));
    }
    map.with_cells(cells)
}
