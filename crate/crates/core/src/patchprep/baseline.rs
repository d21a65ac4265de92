//! Color heuristics standing in for a trained classifier in demos and
//! end-to-end tests. Not a model of anything clinical.

use image::RgbImage;
use rayon::prelude::*;

use crate::gridmap::{GridGeometry, LabelKind, ProbabilityMap};

const SLOPE: f64 = 10.0;
const MIDPOINT: f64 = 0.3;

fn logistic(fraction: f64) -> f64 {
    1.0 / (1.0 + (-SLOPE * (fraction - MIDPOINT)).exp())
}

fn luma(p: &[u8; 3]) -> f64 {
    0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64
}

fn fraction_where<'a>(pixels: impl Iterator<Item = &'a [u8; 3]>, pred: impl Fn(&[u8; 3]) -> bool) -> f64 {
    let (mut n, mut hit) = (0usize, 0usize);
    for p in pixels {
        n += 1;
        hit += pred(p) as usize;
    }
    if n == 0 {
        0.0
    } else {
        hit as f64 / n as f64
    }
}

/// Dark (luma < 120) and blue-dominant pixels, the look of lymphocyte nuclei.
fn lymphocyte_like(p: &[u8; 3]) -> bool {
    luma(p) < 120.0 && p[2] > p[0]
}

/// Mid-tone hematoxylin-dominant pixels: dense tumor cell nuclei.
fn tumor_like(p: &[u8; 3]) -> bool {
    let l = luma(p);
    (120.0..200.0).contains(&l) && p[2] > p[0]
}

/// Logistic score of the fraction of dark blue-purple pixels.
pub fn baseline_til_score(patch: &RgbImage) -> f64 {
    logistic(fraction_where(patch.pixels().map(|p| &p.0), lymphocyte_like))
}

pub fn baseline_tumor_score(patch: &RgbImage) -> f64 {
    logistic(fraction_where(patch.pixels().map(|p| &p.0), tumor_like))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Til,
    Tumor,
}

/// Score every patch of a base-resolution raster. Cells listed as glass in
/// `tissue` (when given) are left without a prediction.
pub fn score_slide(
    raster: &RgbImage,
    geometry: GridGeometry,
    kind: BaselineKind,
    tissue: Option<&[bool]>,
) -> crate::Result<ProbabilityMap> {
    if raster.width() != geometry.slide_width_px || raster.height() != geometry.slide_height_px {
        return Err(crate::Error::invalid("raster dimensions differ from the slide geometry"));
    }
    let cells: Vec<Option<f64>> = (0..geometry.len())
        .into_par_iter()
        .map(|k| {
            if tissue.is_some_and(|t| !t[k]) {
                return None;
            }
            let rect = geometry.patch_rect(k / geometry.cols, k % geometry.cols)?;
            let view = image::imageops::crop_imm(raster, rect.x, rect.y, rect.width, rect.height).to_image();
            Some(match kind {
                BaselineKind::Til => baseline_til_score(&view),
                BaselineKind::Tumor => baseline_tumor_score(&view),
            })
        })
        .collect();
    let label_kind = match kind {
        BaselineKind::Til => LabelKind::Til,
        BaselineKind::Tumor => LabelKind::Cancer,
    };
    ProbabilityMap::from_cells(geometry, cells, label_kind, "baseline-color-heuristic")
}
