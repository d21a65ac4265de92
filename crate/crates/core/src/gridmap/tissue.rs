//! Glass/tissue classification of patches.
//!
//! A patch is glass when more than `glass_fraction` of its pixels are
//! near-white, i.e. every channel exceeds `white_level`.

use image::{GenericImageView, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GridGeometry, TissueMask};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TissueConfig {
    pub white_level: u8,
    pub glass_fraction: f64,
}

impl Default for TissueConfig {
    fn default() -> Self {
        Self {
            white_level: 220,
            glass_fraction: 0.90,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchStats {
    pub mean_rgb: [f64; 3],
    pub near_white_fraction: f64,
}

impl PatchStats {
    pub fn measure<'a>(pixels: impl IntoIterator<Item = &'a [u8; 3]>, white_level: u8) -> Option<Self> {
        let mut n = 0usize;
        let mut white = 0usize;
        let mut sum = [0u64; 3];
        for p in pixels {
            n += 1;
            for c in 0..3 {
                sum[c] += p[c] as u64;
            }
            if p.iter().min().copied().unwrap_or(0) > white_level {
                white += 1;
            }
        }
        (n > 0).then(|| PatchStats {
            mean_rgb: sum.map(|s| s as f64 / n as f64),
            near_white_fraction: white as f64 / n as f64,
        })
    }

    pub fn is_glass(&self, cfg: &TissueConfig) -> bool {
        self.near_white_fraction > cfg.glass_fraction
    }
}

/// Build a tissue mask from per-cell stats (row-major). Cells without stats
/// are treated as glass; the second return value counts them.
pub fn tissue_mask_from_patch_stats(
    stats: &[Option<PatchStats>],
    geometry: GridGeometry,
    cfg: &TissueConfig,
) -> Result<(TissueMask, usize)> {
    if stats.len() != geometry.len() {
        return Err(Error::invalid(format!(
            "{} patch stats for a grid of {} cells",
            stats.len(),
            geometry.len()
        )));
    }
    let missing = stats.iter().filter(|s| s.is_none()).count();
    let tissue = stats
        .iter()
        .map(|s| s.is_some_and(|s| !s.is_glass(cfg)))
        .collect();
    Ok((TissueMask::new(geometry, tissue)?, missing))
}

/// Measure every patch of a base-resolution raster.
pub fn patch_stats_from_raster(
    raster: &RgbImage,
    geometry: GridGeometry,
    cfg: &TissueConfig,
) -> Result<Vec<Option<PatchStats>>> {
    if raster.width() != geometry.slide_width_px || raster.height() != geometry.slide_height_px {
        return Err(Error::invalid(format!(
            "raster is {}x{}, slide is {}x{}",
            raster.width(),
            raster.height(),
            geometry.slide_width_px,
            geometry.slide_height_px
        )));
    }
    Ok((0..geometry.len())
        .into_par_iter()
        .map(|k| {
            let rect = geometry.patch_rect(k / geometry.cols, k % geometry.cols)?;
            let view = image::imageops::crop_imm(raster, rect.x, rect.y, rect.width, rect.height);
            let px: Vec<[u8; 3]> = view.pixels().map(|(_, _, p)| p.0).collect();
            PatchStats::measure(&px, cfg.white_level)
        })
        .collect())
}
