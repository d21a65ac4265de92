//! On-disk catalog of slides and maps.
//!
//! Layout of a data directory:
//!
//! ```text
//! index.json              slides and map records, keyed by id
//! blobs/<sha256>.pred     canonical PredictionFile bytes
//! ```
//!
//! Blobs are written before the index refers to them, and both are replaced
//! by rename, so a reader never sees a partial map.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tilmap_core::gridmap::{AggregationConfig, LabelKind, ProbabilityMap};

use crate::error::{AtlasError, Result};
use crate::format::PredictionFile;
use crate::tiles::{pyramid_levels, LevelDims, TILE_SIZE};

const INDEX_FILE: &str = "index.json";
const BLOB_DIR: &str = "blobs";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PyramidDescriptor {
    pub tile_size: u32,
    pub levels: Vec<LevelDims>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlideManifest {
    pub slide_id: String,
    pub width: u32,
    pub height: u32,
    pub patch_sizes: Vec<u32>,
    pub thumbnail: Option<String>,
    pub pyramid: PyramidDescriptor,
}

/// Request body for registering a slide.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlideRegistration {
    pub slide_id: String,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub patch_sizes: Vec<u32>,
    #[serde(default)]
    pub thumbnail: Option<String>,
}

fn check_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'))
        && !id.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(AtlasError::BadRequest(format!(
            "slide id {id:?} must be 1-128 characters of [A-Za-z0-9._-] and not start with '.'"
        )))
    }
}

impl SlideManifest {
    pub fn new(reg: SlideRegistration) -> Result<Self> {
        check_id(&reg.slide_id)?;
        if reg.width == 0 || reg.height == 0 {
            return Err(AtlasError::BadRequest("slide dimensions must be positive".into()));
        }
        let mut patch_sizes = reg.patch_sizes;
        if patch_sizes.contains(&0) {
            return Err(AtlasError::BadRequest("patch sizes must be positive".into()));
        }
        patch_sizes.sort_unstable();
        patch_sizes.dedup();
        Ok(Self {
            pyramid: PyramidDescriptor {
                tile_size: TILE_SIZE,
                levels: pyramid_levels(reg.width, reg.height, TILE_SIZE),
            },
            slide_id: reg.slide_id,
            width: reg.width,
            height: reg.height,
            patch_sizes,
            thumbnail: reg.thumbnail,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapRecord {
    pub map_id: String,
    pub slide_id: String,
    pub label_kind: LabelKind,
    pub provenance: String,
    pub patch_size_px: u32,
    pub cols: usize,
    pub rows: usize,
    pub covered: usize,
    /// Relative to the data directory.
    pub storage_path: String,
    pub sha256: String,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    /// Aggregation already applied to the stored values, if any.
    pub aggregation: Option<AggregationConfig>,
}

#[derive(Debug, Clone)]
pub struct IngestOutcome {
    pub record: MapRecord,
    /// False when the same content was already stored.
    pub created: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Index {
    slides: BTreeMap<String, SlideManifest>,
    maps: BTreeMap<String, MapRecord>,
}

pub struct Catalog {
    root: PathBuf,
    index: RwLock<Index>,
    writes: Mutex<()>,
    cache: Mutex<HashMap<String, Arc<ProbabilityMap>>>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

impl Catalog {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join(BLOB_DIR))?;
        let index_path = root.join(INDEX_FILE);
        let index = if index_path.exists() {
            serde_json::from_slice(&fs::read(&index_path)?)
                .map_err(|e| AtlasError::BadRequest(format!("corrupt catalog index {}: {e}", index_path.display())))?
        } else {
            Index::default()
        };
        Ok(Self {
            root,
            index: RwLock::new(index),
            writes: Mutex::new(()),
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Index> {
        self.index.read().unwrap_or_else(|e| e.into_inner())
    }

    /// Persist `next` and publish it. Caller holds the write lock.
    fn commit(&self, next: Index) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(&next).expect("index serializes");
        write_atomic(&self.root.join(INDEX_FILE), &bytes)?;
        *self.index.write().unwrap_or_else(|e| e.into_inner()) = next;
        Ok(())
    }

    /// Register a slide. Registering an identical manifest again succeeds and
    /// returns `false`; a different manifest under the same id is a conflict.
    pub fn register_slide(&self, reg: SlideRegistration) -> Result<(SlideManifest, bool)> {
        let manifest = SlideManifest::new(reg)?;
        let _w = self.writes.lock().unwrap_or_else(|e| e.into_inner());
        let mut next = self.read().clone();
        if let Some(existing) = next.slides.get(&manifest.slide_id) {
            return if *existing == manifest {
                Ok((existing.clone(), false))
            } else {
                Err(AtlasError::Conflict(format!(
                    "slide {} is already registered with a different manifest",
                    manifest.slide_id
                )))
            };
        }
        next.slides.insert(manifest.slide_id.clone(), manifest.clone());
        self.commit(next)?;
        Ok((manifest, true))
    }

    pub fn slides(&self) -> Vec<SlideManifest> {
        self.read().slides.values().cloned().collect()
    }

    pub fn slide(&self, id: &str) -> Result<SlideManifest> {
        self.read()
            .slides
            .get(id)
            .cloned()
            .ok_or_else(|| AtlasError::NotFound(format!("slide {id}")))
    }

    pub fn maps(&self) -> Vec<MapRecord> {
        self.read().maps.values().cloned().collect()
    }

    pub fn maps_for_slide(&self, slide_id: &str) -> Result<Vec<MapRecord>> {
        let idx = self.read();
        if !idx.slides.contains_key(slide_id) {
            return Err(AtlasError::NotFound(format!("slide {slide_id}")));
        }
        Ok(idx.maps.values().filter(|m| m.slide_id == slide_id).cloned().collect())
    }

    pub fn map_record(&self, id: &str) -> Result<MapRecord> {
        self.read()
            .maps
            .get(id)
            .cloned()
            .ok_or_else(|| AtlasError::NotFound(format!("map {id}")))
    }

    /// Stored bytes of a map, which are its canonical PredictionFile.
    pub fn export(&self, id: &str) -> Result<Vec<u8>> {
        let rec = self.map_record(id)?;
        Ok(fs::read(self.root.join(&rec.storage_path))?)
    }

    pub fn load_map(&self, id: &str) -> Result<Arc<ProbabilityMap>> {
        if let Some(m) = self.cache.lock().unwrap_or_else(|e| e.into_inner()).get(id) {
            return Ok(m.clone());
        }
        let map = Arc::new(PredictionFile::parse(&self.export(id)?)?.map);
        self.cache
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id.to_string(), map.clone());
        Ok(map)
    }

    /// Parse, store and index a PredictionFile. Unknown slides are
    /// registered from the header; known slides must have the same
    /// dimensions. Content already stored returns the existing record.
    pub fn ingest(&self, bytes: &[u8], aggregation: Option<AggregationConfig>) -> Result<IngestOutcome> {
        let file = PredictionFile::parse(bytes)?;
        let h = &file.header;
        check_id(&h.slide_id)?;
        let canonical = file.to_bytes();
        let sha = hex::encode(Sha256::digest(&canonical));
        let map_id = format!("map-{}", &sha[..16]);
        let mut warnings = Vec::new();
        if file.map.covered_count() == 0 {
            warnings.push("prediction file has no records; map has zero coverage".to_string());
        }

        let _w = self.writes.lock().unwrap_or_else(|e| e.into_inner());
        let mut next = self.read().clone();
        if let Some(existing) = next.maps.get(&map_id) {
            return Ok(IngestOutcome {
                record: existing.clone(),
                created: false,
                warnings,
            });
        }
        match next.slides.get_mut(&h.slide_id) {
            Some(s) if (s.width, s.height) != (h.base_width, h.base_height) => {
                return Err(AtlasError::Conflict(format!(
                    "slide {} is registered as {}x{}, file header says {}x{}",
                    h.slide_id, s.width, s.height, h.base_width, h.base_height
                )));
            }
            Some(s) => {
                if !s.patch_sizes.contains(&h.patch_size_px) {
                    s.patch_sizes.push(h.patch_size_px);
                    s.patch_sizes.sort_unstable();
                }
            }
            None => {
                let m = SlideManifest::new(SlideRegistration {
                    slide_id: h.slide_id.clone(),
                    width: h.base_width,
                    height: h.base_height,
                    patch_sizes: vec![h.patch_size_px],
                    thumbnail: None,
                })?;
                next.slides.insert(m.slide_id.clone(), m);
            }
        }

        let storage_path = format!("{BLOB_DIR}/{sha}.pred");
        let blob = self.root.join(&storage_path);
        if !blob.exists() {
            write_atomic(&blob, &canonical)?;
        }
        let g = file.map.geometry();
        let record = MapRecord {
            map_id: map_id.clone(),
            slide_id: h.slide_id.clone(),
            label_kind: h.label_kind,
            provenance: h.model_id.clone(),
            patch_size_px: h.patch_size_px,
            cols: g.cols,
            rows: g.rows,
            covered: file.map.covered_count(),
            storage_path,
            sha256: sha,
            created_at: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            aggregation,
        };
        next.maps.insert(map_id, record.clone());
        self.commit(next)?;
        Ok(IngestOutcome {
            record,
            created: true,
            warnings,
        })
    }
}
