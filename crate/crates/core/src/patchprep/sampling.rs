use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PatchLabel, PatchLabelRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub slides: Vec<String>,
    pub patches: usize,
    pub positive: usize,
    pub negative: usize,
    pub neg_pos_ratio_target: f64,
    pub seed: u64,
}

/// Header plus records, serialized as JSON lines.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub records: Vec<PatchLabelRecord>,
}

impl DatasetManifest {
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(s: &str) -> Result<Self> {
        let mut lines = s.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "missing manifest header".into(),
        })?;
        let header: ManifestHeader = serde_json::from_str(first).map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        let records = lines
            .map(|(k, l)| {
                serde_json::from_str(l).map_err(|e| Error::Parse {
                    line: k + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<PatchLabelRecord>>>()?;
        let positive = records.iter().filter(|r| r.label == PatchLabel::Positive).count();
        if records.len() != header.patches || positive != header.positive {
            return Err(Error::invalid("manifest header counts disagree with records"));
        }
        Ok(Self { header, records })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutcome {
    pub manifest: DatasetManifest,
    /// Set when there were fewer negatives than the ratio asks for.
    pub warning: Option<String>,
}

/// Keep every positive and draw `round(ratio * positives)` negatives without
/// replacement. Records keep their input order.
pub fn sample_training_set(records: &[PatchLabelRecord], neg_pos_ratio: f64, seed: u64) -> Result<SampleOutcome> {
    if !(neg_pos_ratio > 0.0 && neg_pos_ratio.is_finite()) {
        return Err(Error::invalid(format!("negative:positive ratio {neg_pos_ratio} must be positive")));
    }
    let (pos, neg): (Vec<usize>, Vec<usize>) =
        (0..records.len()).partition(|&k| records[k].label == PatchLabel::Positive);
    if pos.is_empty() {
        return Err(Error::NoPositives);
    }
    let target = (neg_pos_ratio * pos.len() as f64).round() as usize;
    let mut warning = None;
    let mut keep_neg: Vec<usize> = if target >= neg.len() {
        if target > neg.len() {
            warning = Some(format!(
                "only {} negatives available for a target of {target}; keeping all",
                neg.len()
            ));
        }
        neg
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::index::sample(&mut rng, neg.len(), target)
            .into_iter()
            .map(|k| neg[k])
            .collect()
    };
    keep_neg.sort_unstable();

    let mut keep: Vec<usize> = pos.iter().copied().chain(keep_neg.iter().copied()).collect();
    keep.sort_unstable();
    let records: Vec<PatchLabelRecord> = keep.into_iter().map(|k| records[k].clone()).collect();

    let mut slides: Vec<String> = records.iter().map(|r| r.slide_id.clone()).collect();
    slides.sort();
    slides.dedup();
    Ok(SampleOutcome {
        manifest: DatasetManifest {
            header: ManifestHeader {
                slides,
                patches: records.len(),
                positive: pos.len(),
                negative: keep_neg.len(),
                neg_pos_ratio_target: neg_pos_ratio,
                seed,
            },
            records,
        },
        warning,
    })
}
