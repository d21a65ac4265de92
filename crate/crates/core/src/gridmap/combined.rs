use super::{GridGeometry, LabelKind, ProbabilityMap, TissueMask};
use crate::error::{Error, Result};

/// Per-patch RGB encoding of a TIL/tumor map pair: R is the quantized TIL
/// probability, G the quantized cancer probability, B is 255 on tissue and
/// 0 on glass.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedMap {
    geometry: GridGeometry,
    pub r: Vec<u8>,
    pub g: Vec<u8>,
    pub b: Vec<u8>,
}

impl CombinedMap {
    pub fn from_channels(geometry: GridGeometry, r: Vec<u8>, g: Vec<u8>, b: Vec<u8>) -> Result<Self> {
        let n = geometry.len();
        if r.len() != n || g.len() != n || b.len() != n {
            return Err(Error::MalformedMap(format!(
                "channel lengths {}/{}/{} for {} cells",
                r.len(),
                g.len(),
                b.len(),
                n
            )));
        }
        Ok(Self { geometry, r, g, b })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    /// Interleaved RGB bytes, one pixel per patch, row-major.
    pub fn to_rgb_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.r.len() * 3);
        for k in 0..self.r.len() {
            out.extend_from_slice(&[self.r[k], self.g[k], self.b[k]]);
        }
        out
    }

    pub fn from_rgb_bytes(geometry: GridGeometry, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != geometry.len() * 3 {
            return Err(Error::MalformedMap(format!(
                "{} bytes for {} RGB cells",
                bytes.len(),
                geometry.len()
            )));
        }
        let px = bytes.chunks_exact(3);
        Self::from_channels(
            geometry,
            px.clone().map(|p| p[0]).collect(),
            px.clone().map(|p| p[1]).collect(),
            px.map(|p| p[2]).collect(),
        )
    }
}

/// Probability to 0..=255, rounding halves up.
#[inline]
pub fn quantize(p: f64) -> u8 {
    (p * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn combine(til: &ProbabilityMap, tumor: &ProbabilityMap, mask: &TissueMask) -> Result<CombinedMap> {
    let geometry = *til.geometry();
    geometry.check_same(tumor.geometry())?;
    geometry.check_same(mask.geometry())?;
    let q = |c: &Option<f64>| c.map_or(0, quantize);
    Ok(CombinedMap {
        geometry,
        r: til.cells().iter().map(q).collect(),
        g: tumor.cells().iter().map(q).collect(),
        b: mask.tissue().iter().map(|&t| if t { 255 } else { 0 }).collect(),
    })
}

/// Inverse of [`combine`]. Both maps come back fully covered.
pub fn decode_combined(cm: &CombinedMap) -> Result<(ProbabilityMap, ProbabilityMap, TissueMask)> {
    if let Some(k) = cm.b.iter().position(|&b| b != 0 && b != 255) {
        return Err(Error::MalformedMap(format!(
            "blue channel at cell {k} is {}, expected 0 or 255",
            cm.b[k]
        )));
    }
    let decode = |ch: &[u8]| ch.iter().map(|&v| Some(v as f64 / 255.0)).collect::<Vec<_>>();
    let til = ProbabilityMap::from_cells(cm.geometry, decode(&cm.r), LabelKind::Til, "combined")?;
    let tumor = ProbabilityMap::from_cells(cm.geometry, decode(&cm.g), LabelKind::Cancer, "combined")?;
    let mask = TissueMask::new(cm.geometry, cm.b.iter().map(|&b| b == 255).collect())?;
    Ok((til, tumor, mask))
}
