//! Patch grids and per-patch probability maps.
//!
//! A slide at base magnification is partitioned into square patches on an
//! aligned grid. Row index `i` runs down the slide, column index `j` across;
//! patch `(i, j)` covers pixels starting at `(j * patch, i * patch)`, clipped
//! at the right and bottom edges.

mod aggregate;
mod combined;
mod tissue;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use aggregate::{aggregate, aggregate_par, AggregationConfig, AggregationFunc};
pub use combined::{combine, decode_combined, quantize, CombinedMap};
pub use tissue::{patch_stats_from_raster, tissue_mask_from_patch_stats, PatchStats, TissueConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub slide_width_px: u32,
    pub slide_height_px: u32,
    pub patch_size_px: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_mpp: Option<f64>,
    pub cols: usize,
    pub rows: usize,
}

/// Pixel rectangle of one patch at base magnification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchRect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl GridGeometry {
    /// Partition a slide into a ceil-divided grid of square patches.
    pub fn from_slide(slide_width_px: u32, slide_height_px: u32, patch_size_px: u32) -> Result<Self> {
        if slide_width_px == 0 || slide_height_px == 0 || patch_size_px == 0 {
            return Err(Error::invalid(format!(
                "slide {slide_width_px}x{slide_height_px} with patch {patch_size_px}: all dimensions must be positive"
            )));
        }
        Ok(Self {
            slide_width_px,
            slide_height_px,
            patch_size_px,
            base_mpp: None,
            cols: slide_width_px.div_ceil(patch_size_px) as usize,
            rows: slide_height_px.div_ceil(patch_size_px) as usize,
        })
    }

    pub fn with_mpp(mut self, mpp: f64) -> Self {
        self.base_mpp = Some(mpp);
        self
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.rows && col < self.cols);
        row * self.cols + col
    }

    pub fn patch_rect(&self, row: usize, col: usize) -> Option<PatchRect> {
        if row >= self.rows || col >= self.cols {
            return None;
        }
        let x = col as u32 * self.patch_size_px;
        let y = row as u32 * self.patch_size_px;
        Some(PatchRect {
            x,
            y,
            width: self.patch_size_px.min(self.slide_width_px - x),
            height: self.patch_size_px.min(self.slide_height_px - y),
        })
    }

    /// Grid cell containing base pixel `(x, y)`.
    pub fn cell_at(&self, x: u32, y: u32) -> Option<(usize, usize)> {
        if x >= self.slide_width_px || y >= self.slide_height_px {
            return None;
        }
        Some(((y / self.patch_size_px) as usize, (x / self.patch_size_px) as usize))
    }

    /// Same grid, ignoring optional metadata.
    pub fn same_grid(&self, other: &GridGeometry) -> bool {
        self.slide_width_px == other.slide_width_px
            && self.slide_height_px == other.slide_height_px
            && self.patch_size_px == other.patch_size_px
    }

    pub(crate) fn check_same(&self, other: &GridGeometry) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GeometryMismatch {
                left: *self,
                right: *other,
            })
        }
    }
}

impl fmt::Display for GridGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{} px / {} px patches ({} rows x {} cols)",
            self.slide_width_px, self.slide_height_px, self.patch_size_px, self.rows, self.cols
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Cancer,
    Til,
}

impl LabelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelKind::Cancer => "cancer",
            LabelKind::Til => "til",
        }
    }
}

impl std::str::FromStr for LabelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cancer" => Ok(LabelKind::Cancer),
            "til" => Ok(LabelKind::Til),
            other => Err(Error::invalid(format!("unknown label kind {other:?}"))),
        }
    }
}

/// One classifier output: top-left corner of a patch in base pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionRecord {
    pub x: u32,
    pub y: u32,
    pub prob: f64,
}

/// Dense row-major map of per-patch probabilities; `None` marks a patch
/// without a prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    geometry: GridGeometry,
    cells: Vec<Option<f64>>,
    pub label_kind: LabelKind,
    pub provenance: String,
}

impl ProbabilityMap {
    pub fn uncovered(geometry: GridGeometry, label_kind: LabelKind, provenance: impl Into<String>) -> Self {
        Self {
            geometry,
            cells: vec![None; geometry.len()],
            label_kind,
            provenance: provenance.into(),
        }
    }

    pub fn from_cells(
        geometry: GridGeometry,
        cells: Vec<Option<f64>>,
        label_kind: LabelKind,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if cells.len() != geometry.len() {
            return Err(Error::invalid(format!(
                "{} cells for a {}x{} grid",
                cells.len(),
                geometry.rows,
                geometry.cols
            )));
        }
        if let Some((index, prob)) = cells
            .iter()
            .enumerate()
            .find_map(|(k, c)| c.filter(|p| !(0.0..=1.0).contains(p)).map(|p| (k, p)))
        {
            return Err(Error::BadProbability { index, prob });
        }
        Ok(Self {
            geometry,
            cells,
            label_kind,
            provenance: provenance.into(),
        })
    }

    /// Fully covered map from row-major values.
    pub fn from_values(
        geometry: GridGeometry,
        values: &[f64],
        label_kind: LabelKind,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        Self::from_cells(geometry, values.iter().copied().map(Some).collect(), label_kind, provenance)
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn cells(&self) -> &[Option<f64>] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.cells[self.geometry.index(row, col)]
    }

    pub fn covered_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    pub(crate) fn with_cells(&self, cells: Vec<Option<f64>>) -> Self {
        debug_assert_eq!(cells.len(), self.cells.len());
        Self {
            geometry: self.geometry,
            cells,
            label_kind: self.label_kind,
            provenance: self.provenance.clone(),
        }
    }

    /// Prediction records for covered cells in row-major order.
    pub fn records(&self) -> impl Iterator<Item = PredictionRecord> + '_ {
        let g = self.geometry;
        self.cells.iter().enumerate().filter_map(move |(k, c)| {
            c.map(|prob| PredictionRecord {
                x: (k % g.cols) as u32 * g.patch_size_px,
                y: (k / g.cols) as u32 * g.patch_size_px,
                prob,
            })
        })
    }
}

/// Place prediction records on the grid. Records must be patch-aligned,
/// in bounds, unique per cell, and carry a probability in [0, 1].
pub fn map_from_predictions(
    records: &[PredictionRecord],
    geometry: GridGeometry,
    label_kind: LabelKind,
    provenance: impl Into<String>,
) -> Result<ProbabilityMap> {
    let mut cells = vec![None; geometry.len()];
    let patch = geometry.patch_size_px;
    for (index, r) in records.iter().enumerate() {
        let bad = |reason| Error::BadCoordinate {
            index,
            x: r.x,
            y: r.y,
            reason,
        };
        if r.x % patch != 0 || r.y % patch != 0 {
            return Err(bad("is not aligned to the patch grid"));
        }
        let (row, col) = geometry.cell_at(r.x, r.y).ok_or_else(|| bad("is outside the slide"))?;
        if !(0.0..=1.0).contains(&r.prob) {
            return Err(Error::BadProbability { index, prob: r.prob });
        }
        let cell = &mut cells[geometry.index(row, col)];
        if cell.is_some() {
            return Err(Error::DuplicateCell { index, row, col });
        }
        *cell = Some(r.prob);
    }
    Ok(ProbabilityMap {
        geometry,
        cells,
        label_kind,
        provenance: provenance.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
    Uncovered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    geometry: GridGeometry,
    labels: Vec<Label>,
    /// Threshold that produced the labels; `None` for ground truth.
    pub threshold_used: Option<f64>,
}

impl LabelMap {
    pub fn from_labels(geometry: GridGeometry, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != geometry.len() {
            return Err(Error::invalid(format!(
                "{} labels for a {}x{} grid",
                labels.len(),
                geometry.rows,
                geometry.cols
            )));
        }
        Ok(Self {
            geometry,
            labels,
            threshold_used: None,
        })
    }

    pub fn from_bools(geometry: GridGeometry, positive: &[bool]) -> Result<Self> {
        Self::from_labels(
            geometry,
            positive
                .iter()
                .map(|&p| if p { Label::Positive } else { Label::Negative })
                .collect(),
        )
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> Label {
        self.labels[self.geometry.index(row, col)]
    }

    pub fn positive_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == Label::Positive).count()
    }
}

/// Label covered cells positive iff `value >= t`.
pub fn threshold(map: &ProbabilityMap, t: f64) -> Result<LabelMap> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("threshold {t} outside [0, 1]")));
    }
    let labels = map
        .cells
        .iter()
        .map(|c| match c {
            Some(v) if *v >= t => Label::Positive,
            Some(_) => Label::Negative,
            None => Label::Uncovered,
        })
        .collect();
    Ok(LabelMap {
        geometry: map.geometry,
        labels,
        threshold_used: Some(t),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TissueMask {
    geometry: GridGeometry,
    tissue: Vec<bool>,
}

impl TissueMask {
    pub fn new(geometry: GridGeometry, tissue: Vec<bool>) -> Result<Self> {
        if tissue.len() != geometry.len() {
            return Err(Error::invalid(format!(
                "{} tissue flags for a {}x{} grid",
                tissue.len(),
                geometry.rows,
                geometry.cols
            )));
        }
        Ok(Self { geometry, tissue })
    }

    pub fn all_tissue(geometry: GridGeometry) -> Self {
        Self {
            geometry,
            tissue: vec![true; geometry.len()],
        }
    }

    /// Tissue wherever any of the maps has a prediction.
    pub fn from_coverage(maps: &[&ProbabilityMap]) -> Result<Self> {
        let first = maps
            .first()
            .ok_or_else(|| Error::invalid("coverage mask needs at least one map"))?;
        let geometry = first.geometry;
        let mut tissue = vec![false; geometry.len()];
        for m in maps {
            geometry.check_same(&m.geometry)?;
            for (t, c) in tissue.iter_mut().zip(&m.cells) {
                *t |= c.is_some();
            }
        }
        Ok(Self { geometry, tissue })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn tissue(&self) -> &[bool] {
        &self.tissue
    }

    pub fn tissue_count(&self) -> usize {
        self.tissue.iter().filter(|&&t| t).count()
    }
}

/// Share of tumor-positive patches that are also TIL-positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TilInTumor {
    pub fraction: crate::Ratio,
    pub til_and_tumor: usize,
    pub tumor_positive: usize,
    pub til_positive: usize,
}

pub fn til_in_tumor_fraction(til_labels: &LabelMap, tumor_labels: &LabelMap) -> Result<TilInTumor> {
    til_labels.geometry.check_same(&tumor_labels.geometry)?;
    let mut both = 0;
    let mut tumor = 0;
    for (&til, &tum) in til_labels.labels.iter().zip(&tumor_labels.labels) {
        if tum == Label::Positive {
            tumor += 1;
            if til == Label::Positive {
                both += 1;
            }
        }
    }
    Ok(TilInTumor {
        fraction: crate::Ratio::from_counts(both as u64, tumor as u64),
        til_and_tumor: both,
        tumor_positive: tumor,
        til_positive: til_labels.positive_count(),
    })
}
