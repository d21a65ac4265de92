//! Analysis engine for patch-level tumor and TIL (tumor-infiltrating
//! lymphocyte) predictions on whole-slide images.
//!
//! - [`gridmap`] – patch grids, probability maps, block aggregation,
//!   thresholding, tissue masks and the combined RGB tumor/TIL encoding.
//! - [`patchprep`] – annotation polygons to labeled patch datasets,
//!   negative sampling, channel normalization, augmentation, and a heuristic
//!   baseline scorer.
//! - [`eval`] – confusion counts, the metric suite, threshold sweeps, AUC and
//!   confusion renders.
//! - [`concord`] – super-patch scoring and polychoric/polyserial
//!   concordance with bootstrap intervals.

pub mod concord;
pub mod error;
pub mod eval;
pub mod gridmap;
pub mod patchprep;
mod ratio;

pub use error::{Error, Result};
pub use ratio::Ratio;
