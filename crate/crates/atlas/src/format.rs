//! Prediction file wire format.
//!
//! ```text
//! {"format_version":1,"slide_id":"s1","patch_size_px":350,"base_width":700,"base_height":350,"label_kind":"cancer","model_id":"m"}
//! 0	0	0.9
//! 350	0	0.1
//! ```
//!
//! One JSON header line, then one `x<TAB>y<TAB>prob` line per patch. UTF-8,
//! LF line endings. The canonical form written by [`PredictionFile::to_bytes`]
//! lists records row-major and prints probabilities with at most six
//! fractional digits and no trailing zeros.

use serde::{Deserialize, Serialize};
use tilmap_core::gridmap::{map_from_predictions, GridGeometry, LabelKind, PredictionRecord, ProbabilityMap};

use crate::error::{AtlasError, Result};

pub const FORMAT_VERSION: u32 = 1;
const MAX_FRACTION_DIGITS: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionHeader {
    pub format_version: u32,
    pub slide_id: String,
    pub patch_size_px: u32,
    pub base_width: u32,
    pub base_height: u32,
    pub label_kind: LabelKind,
    pub model_id: String,
}

impl PredictionHeader {
    pub fn geometry(&self) -> Result<GridGeometry> {
        Ok(GridGeometry::from_slide(self.base_width, self.base_height, self.patch_size_px)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionFile {
    pub header: PredictionHeader,
    pub map: ProbabilityMap,
}

/// Canonical text for a probability: six fractional digits, trailing zeros
/// and a bare point removed.
pub fn format_prob(p: f64) -> String {
    let mut s = format!("{p:.6}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    s
}

fn parse_prob(field: &str, line: usize) -> Result<f64> {
    let (int, frac) = field.split_once('.').unwrap_or((field, ""));
    let digits_ok = !int.is_empty() && int.bytes().all(|b| b.is_ascii_digit()) && frac.bytes().all(|b| b.is_ascii_digit());
    if !digits_ok || (field.contains('.') && frac.is_empty()) {
        return Err(AtlasError::parse(line, format!("probability {field:?} is not a plain decimal")));
    }
    if frac.len() > MAX_FRACTION_DIGITS {
        return Err(AtlasError::parse(
            line,
            format!("probability {field:?} has more than {MAX_FRACTION_DIGITS} fractional digits"),
        ));
    }
    let p: f64 = field
        .parse()
        .map_err(|e| AtlasError::parse(line, format!("probability {field:?}: {e}")))?;
    if p > 1.0 {
        return Err(AtlasError::parse(line, format!("probability {field} outside [0, 1]")));
    }
    Ok(p)
}

fn parse_coord(field: &str, name: &str, line: usize) -> Result<u32> {
    if field.is_empty() || !field.bytes().all(|b| b.is_ascii_digit()) {
        return Err(AtlasError::parse(line, format!("{name} {field:?} is not a non-negative integer")));
    }
    field
        .parse()
        .map_err(|e| AtlasError::parse(line, format!("{name} {field:?}: {e}")))
}

impl PredictionFile {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|e| {
            let line = 1 + bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count();
            AtlasError::parse(line, "not valid UTF-8")
        })?;
        if let Some(pos) = text.find('\r') {
            let line = 1 + text[..pos].matches('\n').count();
            return Err(AtlasError::parse(line, "CR line endings are not allowed"));
        }
        let body = text.strip_suffix('\n').unwrap_or(text);
        let mut lines = body.split('\n');
        let header_line = lines.next().filter(|l| !l.is_empty()).ok_or_else(|| AtlasError::parse(1, "missing header"))?;
        let header: PredictionHeader =
            serde_json::from_str(header_line).map_err(|e| AtlasError::parse(1, format!("header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(AtlasError::parse(
                1,
                format!("unsupported format_version {} (expected {FORMAT_VERSION})", header.format_version),
            ));
        }
        let geometry = header.geometry().map_err(|e| AtlasError::parse(1, e.to_string()))?;

        let mut records = Vec::new();
        for (k, l) in lines.enumerate() {
            let line = k + 2;
            let mut fields = l.split('\t');
            let (Some(x), Some(y), Some(p), None) = (fields.next(), fields.next(), fields.next(), fields.next()) else {
                return Err(AtlasError::parse(line, "expected three tab-separated fields x, y, prob"));
            };
            records.push(PredictionRecord {
                x: parse_coord(x, "x", line)?,
                y: parse_coord(y, "y", line)?,
                prob: parse_prob(p, line)?,
            });
        }
        let map = map_from_predictions(&records, geometry, header.label_kind, header.model_id.clone()).map_err(|e| {
            match &e {
                tilmap_core::Error::BadCoordinate { index, .. }
                | tilmap_core::Error::DuplicateCell { index, .. }
                | tilmap_core::Error::BadProbability { index, .. } => AtlasError::parse(index + 2, e.to_string()),
                _ => AtlasError::Core(e),
            }
        })?;
        Ok(Self { header, map })
    }

    /// Build a file for an in-memory map.
    pub fn from_map(slide_id: impl Into<String>, map: ProbabilityMap) -> Self {
        let g = *map.geometry();
        Self {
            header: PredictionHeader {
                format_version: FORMAT_VERSION,
                slide_id: slide_id.into(),
                patch_size_px: g.patch_size_px,
                base_width: g.slide_width_px,
                base_height: g.slide_height_px,
                label_kind: map.label_kind,
                model_id: map.provenance.clone(),
            },
            map,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for r in self.map.records() {
            out.push_str(&format!("{}\t{}\t{}\n", r.x, r.y, format_prob(r.prob)));
        }
        out.into_bytes()
    }

    pub fn coverage(&self) -> (usize, usize) {
        (self.map.covered_count(), self.map.geometry().len())
    }
}
