//! Heatmap and combined-map rasterization, one pixel per patch.

use std::io::Cursor;
use std::str::FromStr;

use image::{ImageFormat, Rgb, RgbImage, Rgba, RgbaImage};
use serde::{Deserialize, Serialize};
use tilmap_core::gridmap::{
    aggregate, aggregate_par, combine, quantize, AggregationConfig, CombinedMap, LabelKind, ProbabilityMap,
    TissueMask,
};

use crate::config::{Config, RenderConfig};
use crate::error::{AtlasError, Result};

pub const RED: [u8; 3] = [255, 0, 0];
pub const YELLOW: [u8; 3] = [255, 255, 0];
pub const GREY: [u8; 3] = [128, 128, 128];
pub const WHITE: [u8; 3] = [255, 255, 255];
pub const TRANSPARENT: Rgba<u8> = Rgba([0, 0, 0, 0]);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Colormap {
    Grayscale,
    /// Linear blue to red.
    Heat,
    /// Binary: red (TIL) or yellow (cancer) where positive, grey elsewhere.
    Paper,
}

impl FromStr for Colormap {
    type Err = AtlasError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grayscale" | "greyscale" | "gray" => Ok(Colormap::Grayscale),
            "heat" => Ok(Colormap::Heat),
            "paper" => Ok(Colormap::Paper),
            other => Err(AtlasError::BadRequest(format!("unknown colormap {other:?}"))),
        }
    }
}

impl Colormap {
    pub fn color(self, p: f64, kind: LabelKind) -> [u8; 3] {
        let q = quantize(p);
        match self {
            Colormap::Grayscale => [q, q, q],
            Colormap::Heat => [q, 0, 255 - q],
            Colormap::Paper => match kind {
                LabelKind::Til => RED,
                LabelKind::Cancer => YELLOW,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderParams {
    pub colormap: Colormap,
    pub threshold: Option<f64>,
    pub aggregation: Option<AggregationConfig>,
}

impl RenderParams {
    /// Cancer maps are aggregated and thresholded by default; TIL maps are
    /// shown raw unless the colormap is binary.
    pub fn defaults_for(kind: LabelKind, cfg: &Config) -> Result<Self> {
        let r = &cfg.render;
        Ok(match kind {
            LabelKind::Cancer => Self {
                colormap: r.colormap,
                threshold: Some(r.cancer_threshold),
                aggregation: r.aggregate_cancer.then(|| cfg.aggregation.get()).transpose()?,
            },
            LabelKind::Til => Self {
                colormap: r.colormap,
                threshold: (r.colormap == Colormap::Paper).then_some(r.til_threshold),
                aggregation: None,
            },
        })
    }

    pub fn raw(colormap: Colormap) -> Self {
        Self {
            colormap,
            threshold: None,
            aggregation: None,
        }
    }

    fn check(&self) -> Result<()> {
        if let Some(t) = self.threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(AtlasError::BadRequest(format!("threshold {t} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

fn paint(map: &ProbabilityMap, colormap: Colormap, threshold: Option<f64>, fallback: f64) -> RgbaImage {
    let g = map.geometry();
    let cells = map.cells();
    let binary_t = threshold.unwrap_or(fallback);
    RgbaImage::from_fn(g.cols as u32, g.rows as u32, |x, y| {
        let Some(p) = cells[g.index(y as usize, x as usize)] else {
            return TRANSPARENT;
        };
        let positive = match colormap {
            Colormap::Paper => p >= binary_t,
            _ => threshold.is_none_or(|t| p >= t),
        };
        match (positive, colormap) {
            (true, cm) => {
                let [r, g, b] = cm.color(p, map.label_kind);
                Rgba([r, g, b, 255])
            }
            (false, Colormap::Paper) => Rgba([GREY[0], GREY[1], GREY[2], 255]),
            (false, _) => TRANSPARENT,
        }
    })
}

fn prepare(map: &ProbabilityMap, agg: Option<AggregationConfig>, parallel: bool) -> Option<ProbabilityMap> {
    agg.filter(|a| a.window_w > 1).map(|a| if parallel { aggregate_par(map, a) } else { aggregate(map, a) })
}

/// Aggregate, threshold and colorize. Uncovered patches are transparent, as
/// are covered patches below the threshold except under the paper colormap,
/// which draws them grey. `binary_fallback` is the cut used by the paper
/// colormap when no threshold is given.
pub fn render_map(map: &ProbabilityMap, params: &RenderParams, binary_fallback: f64) -> Result<RgbaImage> {
    params.check()?;
    let agg = prepare(map, params.aggregation, false);
    Ok(paint(agg.as_ref().unwrap_or(map), params.colormap, params.threshold, binary_fallback))
}

/// Same output as [`render_map`], aggregating on the rayon pool.
pub fn render_map_par(map: &ProbabilityMap, params: &RenderParams, binary_fallback: f64) -> Result<RgbaImage> {
    params.check()?;
    let agg = prepare(map, params.aggregation, true);
    Ok(paint(agg.as_ref().unwrap_or(map), params.colormap, params.threshold, binary_fallback))
}

pub fn binary_fallback(kind: LabelKind, cfg: &RenderConfig) -> f64 {
    match kind {
        LabelKind::Til => cfg.til_threshold,
        LabelKind::Cancer => cfg.cancer_threshold,
    }
}

/// Positive/negative calls used for combined displays and stats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairParams {
    pub til_threshold: f64,
    pub cancer_threshold: f64,
    pub cancer_aggregation: Option<AggregationConfig>,
}

impl PairParams {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        Ok(Self {
            til_threshold: cfg.render.til_threshold,
            cancer_threshold: cfg.render.cancer_threshold,
            cancer_aggregation: cfg.render.aggregate_cancer.then(|| cfg.aggregation.get()).transpose()?,
        })
    }

    /// Cancer map after the configured aggregation.
    pub fn cancer_view(&self, tumor: &ProbabilityMap) -> ProbabilityMap {
        prepare(tumor, self.cancer_aggregation, true).unwrap_or_else(|| tumor.clone())
    }
}

fn check_kinds(til: &ProbabilityMap, tumor: &ProbabilityMap) -> Result<()> {
    if til.label_kind != LabelKind::Til || tumor.label_kind != LabelKind::Cancer {
        return Err(AtlasError::BadRequest(format!(
            "expected a til map and a cancer map, got {} and {}",
            til.label_kind.as_str(),
            tumor.label_kind.as_str()
        )));
    }
    Ok(())
}

/// Display colors: TIL-positive red, else cancer-positive yellow, else
/// tissue grey, else white. Fully opaque.
pub fn render_combined_display(
    til: &ProbabilityMap,
    tumor: &ProbabilityMap,
    mask: &TissueMask,
    params: &PairParams,
) -> Result<RgbImage> {
    check_kinds(til, tumor)?;
    let g = *til.geometry();
    if !g.same_grid(tumor.geometry()) {
        return Err(tilmap_core::Error::GeometryMismatch {
            left: g,
            right: *tumor.geometry(),
        }
        .into());
    }
    if !g.same_grid(mask.geometry()) {
        return Err(tilmap_core::Error::GeometryMismatch {
            left: g,
            right: *mask.geometry(),
        }
        .into());
    }
    let tumor = params.cancer_view(tumor);
    let (tc, cc, tissue) = (til.cells(), tumor.cells(), mask.tissue());
    Ok(RgbImage::from_fn(g.cols as u32, g.rows as u32, |x, y| {
        let k = g.index(y as usize, x as usize);
        let color = if tc[k].is_some_and(|p| p >= params.til_threshold) {
            RED
        } else if cc[k].is_some_and(|p| p >= params.cancer_threshold) {
            YELLOW
        } else if tissue[k] {
            GREY
        } else {
            WHITE
        };
        Rgb(color)
    }))
}

/// The lossless R/G/B encoding of the pair as an image.
pub fn combined_rgb_image(til: &ProbabilityMap, tumor: &ProbabilityMap, mask: &TissueMask) -> Result<(CombinedMap, RgbImage)> {
    check_kinds(til, tumor)?;
    let cm = combine(til, tumor, mask)?;
    let g = *cm.geometry();
    let img = RgbImage::from_raw(g.cols as u32, g.rows as u32, cm.to_rgb_bytes())
        .ok_or_else(|| AtlasError::BadRequest("combined map size".into()))?;
    Ok((cm, img))
}

pub fn encode_png(img: &RgbaImage) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn encode_png_rgb(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}
