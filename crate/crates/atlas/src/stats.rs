use serde::Serialize;
use tilmap_core::gridmap::{threshold, til_in_tumor_fraction, ProbabilityMap, TissueMask};

use crate::error::Result;
use crate::render::PairParams;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairStats {
    pub til_in_tumor_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub tumor_patch_count: usize,
    pub til_patch_count: usize,
    pub tissue_patch_count: usize,
    pub til_and_tumor_count: usize,
    pub til_threshold: f64,
    pub cancer_threshold: f64,
}

/// TIL share of tumor-positive patches. The tissue count comes from `mask`.
pub fn pair_stats(til: &ProbabilityMap, tumor: &ProbabilityMap, mask: &TissueMask, params: &PairParams) -> Result<PairStats> {
    let til_labels = threshold(til, params.til_threshold)?;
    let tumor_labels = threshold(&params.cancer_view(tumor), params.cancer_threshold)?;
    let t = til_in_tumor_fraction(&til_labels, &tumor_labels)?;
    let fraction = t.fraction.value();
    Ok(PairStats {
        til_in_tumor_fraction: fraction,
        reason: fraction.is_none().then(|| "no tumor-positive patches".to_string()),
        tumor_patch_count: t.tumor_positive,
        til_patch_count: t.til_positive,
        tissue_patch_count: mask.tissue_count(),
        til_and_tumor_count: t.til_and_tumor,
        til_threshold: params.til_threshold,
        cancer_threshold: params.cancer_threshold,
    })
}
