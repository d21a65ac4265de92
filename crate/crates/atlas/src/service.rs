//! HTTP API.
//!
//! | Method | Path | Body / query |
//! |---|---|---|
//! | GET | `/slides` | |
//! | POST | `/slides` | `SlideRegistration` JSON |
//! | GET | `/slides/{id}` | |
//! | GET | `/slides/{id}/maps` | |
//! | GET | `/maps` | |
//! | POST | `/maps` | PredictionFile; `agg_w`, `agg_f` mark a pre-aggregated map |
//! | GET | `/maps/{id}` | |
//! | GET | `/maps/{id}/prediction` | canonical PredictionFile |
//! | GET | `/maps/{id}/png` | `colormap`, `threshold`, `agg_w`, `agg_f` |
//! | GET | `/maps/{id}/combined/{other}/png` | `encoding=display\|rgb` |
//! | GET | `/maps/{id}/tiles/{z}/{x}/{y}.png` | as for `/png` |
//! | GET | `/maps/{id}/stats` | `tumor` |
//!
//! Errors are JSON `{code, message, detail}`.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tilmap_core::gridmap::{AggregationConfig, AggregationFunc, LabelKind, ProbabilityMap, TissueMask};

use crate::catalog::{Catalog, MapRecord, SlideRegistration};
use crate::config::Config;
use crate::error::{AtlasError, Result};
use crate::render::{
    binary_fallback, combined_rgb_image, encode_png, encode_png_rgb, render_combined_display, render_map_par,
    Colormap, PairParams, RenderParams,
};
use crate::stats::pair_stats;
use crate::tiles::{Pyramid, TILE_SIZE};

#[derive(Clone)]
pub struct AppState {
    pub catalog: Arc<Catalog>,
    pub config: Arc<Config>,
}

impl AtlasError {
    pub fn status(&self) -> StatusCode {
        match self.code() {
            "not_found" => StatusCode::NOT_FOUND,
            "conflict" => StatusCode::CONFLICT,
            "geometry_mismatch" => StatusCode::UNPROCESSABLE_ENTITY,
            "internal" => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        }
    }
}

impl IntoResponse for AtlasError {
    fn into_response(self) -> Response {
        let detail = match &self {
            AtlasError::Parse { line, .. } => json!({ "line": line }),
            _ => serde_json::Value::Null,
        };
        let body = json!({ "code": self.code(), "message": self.to_string(), "detail": detail });
        (self.status(), Json(body)).into_response()
    }
}

async fn blocking<T, F>(f: F) -> Result<T>
where
    F: FnOnce() -> Result<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| AtlasError::Io(std::io::Error::other(e.to_string())))?
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

#[derive(Debug, Default, Deserialize)]
pub struct RenderQuery {
    pub colormap: Option<String>,
    pub threshold: Option<String>,
    pub agg_w: Option<String>,
    pub agg_f: Option<String>,
}

fn parse_aggregation(w: Option<&str>, f: Option<&str>, cfg: &Config) -> Result<Option<Option<AggregationConfig>>> {
    if w.is_none() && f.is_none() {
        return Ok(None);
    }
    if matches!(w, Some("none")) || matches!(f, Some("none")) {
        return Ok(Some(None));
    }
    let base = cfg.aggregation.get()?;
    let window_w = match w {
        Some(s) => s
            .parse::<usize>()
            .map_err(|_| AtlasError::BadRequest(format!("agg_w {s:?} is not a window size")))?,
        None => base.window_w,
    };
    let func = match f {
        Some(s) => s.parse::<AggregationFunc>()?,
        None => base.func,
    };
    Ok(Some(Some(AggregationConfig::new(window_w, func)?)))
}

impl RenderQuery {
    /// Kind defaults from the config, overridden by whatever the query sets.
    /// `threshold=none` and `agg_w=none` switch those steps off.
    pub fn params(&self, kind: LabelKind, cfg: &Config) -> Result<RenderParams> {
        let mut p = RenderParams::defaults_for(kind, cfg)?;
        if let Some(c) = &self.colormap {
            p.colormap = c.parse::<Colormap>()?;
        }
        if let Some(t) = &self.threshold {
            p.threshold = if t == "none" {
                None
            } else {
                Some(
                    t.parse::<f64>()
                        .map_err(|_| AtlasError::BadRequest(format!("threshold {t:?} is not a number")))?,
                )
            };
        }
        if let Some(agg) = parse_aggregation(self.agg_w.as_deref(), self.agg_f.as_deref(), cfg)? {
            p.aggregation = agg;
        }
        Ok(p)
    }
}

#[derive(Debug, Default, Deserialize)]
struct IngestQuery {
    agg_w: Option<String>,
    agg_f: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
struct CombinedQuery {
    encoding: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
struct StatsQuery {
    tumor: Option<String>,
}

#[derive(Serialize)]
struct IngestResponse {
    record: MapRecord,
    created: bool,
    warnings: Vec<String>,
}

async fn list_slides(State(s): State<AppState>) -> Response {
    Json(s.catalog.slides()).into_response()
}

async fn register_slide(State(s): State<AppState>, body: Bytes) -> Result<Response> {
    let reg: SlideRegistration =
        serde_json::from_slice(&body).map_err(|e| AtlasError::BadRequest(format!("slide registration: {e}")))?;
    let catalog = s.catalog.clone();
    let (manifest, created) = blocking(move || catalog.register_slide(reg)).await?;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(manifest)).into_response())
}

async fn get_slide(State(s): State<AppState>, Path(id): Path<String>) -> Result<Response> {
    Ok(Json(s.catalog.slide(&id)?).into_response())
}

async fn slide_maps(State(s): State<AppState>, Path(id): Path<String>) -> Result<Response> {
    Ok(Json(s.catalog.maps_for_slide(&id)?).into_response())
}

async fn list_maps(State(s): State<AppState>) -> Response {
    Json(s.catalog.maps()).into_response()
}

async fn ingest(State(s): State<AppState>, Query(q): Query<IngestQuery>, body: Bytes) -> Result<Response> {
    let agg = parse_aggregation(q.agg_w.as_deref(), q.agg_f.as_deref(), &s.config)?.flatten();
    let catalog = s.catalog.clone();
    let out = blocking(move || catalog.ingest(&body, agg)).await?;
    let status = if out.created { StatusCode::CREATED } else { StatusCode::OK };
    let body = IngestResponse {
        record: out.record,
        created: out.created,
        warnings: out.warnings,
    };
    Ok((status, Json(body)).into_response())
}

async fn get_map(State(s): State<AppState>, Path(id): Path<String>) -> Result<Response> {
    Ok(Json(s.catalog.map_record(&id)?).into_response())
}

async fn export_map(State(s): State<AppState>, Path(id): Path<String>) -> Result<Response> {
    let bytes = s.catalog.export(&id)?;
    Ok(([(header::CONTENT_TYPE, "text/tab-separated-values; charset=utf-8")], bytes).into_response())
}

fn render_for(s: &AppState, id: &str, q: &RenderQuery) -> Result<image::RgbaImage> {
    let map = s.catalog.load_map(id)?;
    let params = q.params(map.label_kind, &s.config)?;
    render_map_par(&map, &params, binary_fallback(map.label_kind, &s.config.render))
}

async fn map_png(State(s): State<AppState>, Path(id): Path<String>, Query(q): Query<RenderQuery>) -> Result<Response> {
    let bytes = blocking(move || encode_png(&render_for(&s, &id, &q)?)).await?;
    Ok(png(bytes))
}

async fn map_tile(
    State(s): State<AppState>,
    Path((id, z, x, tile)): Path<(String, String, String, String)>,
    Query(q): Query<RenderQuery>,
) -> Result<Response> {
    let not_found = || AtlasError::NotFound(format!("tile {z}/{x}/{tile}"));
    let y = tile.strip_suffix(".png").ok_or_else(not_found)?;
    let (z, x, y): (u32, u32, u32) = match (z.parse(), x.parse(), y.parse()) {
        (Ok(z), Ok(x), Ok(y)) => (z, x, y),
        _ => return Err(not_found()),
    };
    let bytes = blocking(move || {
        let full = render_for(&s, &id, &q)?;
        encode_png(&Pyramid::build(full, TILE_SIZE).tile(z, x, y)?)
    })
    .await?;
    Ok(png(bytes))
}

/// Load two maps and order them as (til, cancer).
fn load_pair(s: &AppState, a: &str, b: &str, strict: bool) -> Result<(Arc<ProbabilityMap>, Arc<ProbabilityMap>)> {
    let (ra, rb) = (s.catalog.map_record(a)?, s.catalog.map_record(b)?);
    if ra.slide_id != rb.slide_id {
        return Err(AtlasError::BadRequest(format!(
            "maps {a} and {b} belong to different slides ({} and {})",
            ra.slide_id, rb.slide_id
        )));
    }
    let (ma, mb) = (s.catalog.load_map(a)?, s.catalog.load_map(b)?);
    match (ma.label_kind, mb.label_kind) {
        (LabelKind::Til, LabelKind::Cancer) => Ok((ma, mb)),
        (LabelKind::Cancer, LabelKind::Til) if !strict => Ok((mb, ma)),
        (ka, kb) => Err(AtlasError::BadRequest(format!(
            "expected a til map and a cancer map, got {} and {}",
            ka.as_str(),
            kb.as_str()
        ))),
    }
}

async fn combined_png(
    State(s): State<AppState>,
    Path((id, other)): Path<(String, String)>,
    Query(q): Query<CombinedQuery>,
) -> Result<Response> {
    let rgb = match q.encoding.as_deref() {
        None | Some("display") => false,
        Some("rgb") => true,
        Some(e) => return Err(AtlasError::BadRequest(format!("unknown encoding {e:?}"))),
    };
    let bytes = blocking(move || {
        let (til, tumor) = load_pair(&s, &id, &other, false)?;
        if !til.geometry().same_grid(tumor.geometry()) {
            return Err(tilmap_core::Error::GeometryMismatch {
                left: *til.geometry(),
                right: *tumor.geometry(),
            }
            .into());
        }
        let mask = TissueMask::from_coverage(&[&til, &tumor])?;
        if rgb {
            encode_png_rgb(&combined_rgb_image(&til, &tumor, &mask)?.1)
        } else {
            let params = PairParams::from_config(&s.config)?;
            encode_png_rgb(&render_combined_display(&til, &tumor, &mask, &params)?)
        }
    })
    .await?;
    Ok(png(bytes))
}

async fn stats(State(s): State<AppState>, Path(id): Path<String>, Query(q): Query<StatsQuery>) -> Result<Response> {
    let tumor_id = q
        .tumor
        .ok_or_else(|| AtlasError::BadRequest("missing query parameter tumor".into()))?;
    let out = blocking(move || {
        let (til, tumor) = load_pair(&s, &id, &tumor_id, true)?;
        let mask = TissueMask::from_coverage(&[&til, &tumor])?;
        pair_stats(&til, &tumor, &mask, &PairParams::from_config(&s.config)?)
    })
    .await?;
    Ok(Json(out).into_response())
}

async fn fallback() -> AtlasError {
    AtlasError::NotFound("route".into())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/slides", get(list_slides).post(register_slide))
        .route("/slides/{id}", get(get_slide))
        .route("/slides/{id}/maps", get(slide_maps))
        .route("/maps", get(list_maps).post(ingest))
        .route("/maps/{id}", get(get_map))
        .route("/maps/{id}/prediction", get(export_map))
        .route("/maps/{id}/png", get(map_png))
        .route("/maps/{id}/combined/{other}/png", get(combined_png))
        .route("/maps/{id}/tiles/{z}/{x}/{tile}", get(map_tile))
        .route("/maps/{id}/stats", get(stats))
        .fallback(fallback)
        .with_state(state)
}

pub async fn serve(state: AppState, addr: SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}
