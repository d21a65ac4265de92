//! From pathologist annotations to labeled patch datasets.

mod baseline;
mod polygon;
mod sampling;
mod transform;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridmap::{GridGeometry, Label, LabelMap, PatchRect};

pub use baseline::{baseline_til_score, baseline_tumor_score, score_slide, BaselineKind};
pub use polygon::{point_in_polygon, rect_intersects_polygon};
pub use sampling::{sample_training_set, DatasetManifest, ManifestHeader, SampleOutcome};
pub use transform::{
    apply as apply_augment, augment, normalize_channels, normalize_patch, prepare_patch, sample_params, AugmentParams, Phase,
    TransformConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionLabel {
    CancerRegion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub label: RegionLabel,
    pub points: Vec<[f64; 2]>,
}

/// Annotation file contents: closed polygons in base-magnification pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub slide_id: String,
    pub regions: Vec<Region>,
}

impl AnnotationSet {
    pub fn from_json(s: &str) -> Result<Self> {
        let set: AnnotationSet =
            serde_json::from_str(s).map_err(|e| Error::invalid(format!("annotation file: {e}")))?;
        set.normalized()
    }

    /// Close every polygon and check it has at least three distinct vertices.
    pub fn normalized(mut self) -> Result<Self> {
        for (k, region) in self.regions.iter_mut().enumerate() {
            let pts = &mut region.points;
            if pts.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
                return Err(Error::invalid(format!("region {k}: non-finite coordinate")));
            }
            if pts.len() >= 2 && pts.first() == pts.last() {
                pts.pop();
            }
            pts.dedup();
            if pts.len() < 3 {
                return Err(Error::invalid(format!("region {k}: fewer than 3 distinct points")));
            }
            let first = pts[0];
            pts.push(first);
        }
        Ok(self)
    }

    pub fn check_bounds(&self, width: u32, height: u32) -> Result<()> {
        for (k, region) in self.regions.iter().enumerate() {
            if let Some(p) = region
                .points
                .iter()
                .find(|p| p[0] < 0.0 || p[1] < 0.0 || p[0] > width as f64 || p[1] > height as f64)
            {
                return Err(Error::invalid(format!(
                    "region {k}: point ({}, {}) outside {width}x{height} slide",
                    p[0], p[1]
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatchLabel {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchLabelRecord {
    pub slide_id: String,
    pub row: usize,
    pub col: usize,
    pub rect: PatchRect,
    pub label: PatchLabel,
    pub split: Split,
}

/// Positive iff the patch touches or overlaps any cancer region.
pub fn label_patch(rect: &PatchRect, annotations: &AnnotationSet) -> PatchLabel {
    let r = [
        rect.x as f64,
        rect.y as f64,
        (rect.x + rect.width) as f64,
        (rect.y + rect.height) as f64,
    ];
    let hit = annotations
        .regions
        .iter()
        .filter(|reg| reg.label == RegionLabel::CancerRegion)
        .any(|reg| rect_intersects_polygon(r, &reg.points));
    if hit {
        PatchLabel::Positive
    } else {
        PatchLabel::Negative
    }
}

/// Label every patch of the grid, row-major.
pub fn label_records(geometry: &GridGeometry, annotations: &AnnotationSet, split: Split) -> Vec<PatchLabelRecord> {
    let mut out = Vec::with_capacity(geometry.len());
    for row in 0..geometry.rows {
        for col in 0..geometry.cols {
            let rect = geometry.patch_rect(row, col).expect("in grid");
            out.push(PatchLabelRecord {
                slide_id: annotations.slide_id.clone(),
                row,
                col,
                rect,
                label: label_patch(&rect, annotations),
                split,
            });
        }
    }
    out
}

/// Rasterize annotations to a ground-truth label map on the patch grid.
pub fn truth_label_map(geometry: &GridGeometry, annotations: &AnnotationSet) -> LabelMap {
    let labels = (0..geometry.len())
        .map(|k| {
            let rect = geometry.patch_rect(k / geometry.cols, k % geometry.cols).expect("in grid");
            match label_patch(&rect, annotations) {
                PatchLabel::Positive => Label::Positive,
                PatchLabel::Negative => Label::Negative,
            }
        })
        .collect();
    LabelMap::from_labels(*geometry, labels).expect("grid-sized")
}
