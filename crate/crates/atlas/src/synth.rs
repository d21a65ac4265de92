//! Deterministic synthetic H&E-like slide for demos and end-to-end tests.
//!
//! Glass background, an elliptical pink tissue section, a lobed tumor blob
//! dense with mid-purple nuclei, and round clusters of dark lymphocyte
//! nuclei scattered over tumor and stroma. The blob outline is fixed; the
//! seed only moves texture and lymphocyte clusters.

use std::f64::consts::TAU;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tilmap_core::patchprep::AnnotationSet;

use crate::error::Result;

pub const SYNTH_SIZE: u32 = 3500;
pub const SYNTH_SLIDE_ID: &str = "synth-3500";
/// Freehand outline of the tumor blob.
pub const HAND_ANNOTATION: &str = include_str!("../fixtures/synth_tumor_annotation.json");

const GLASS: [u8; 3] = [244, 244, 246];
const STROMA: [u8; 3] = [235, 175, 205];
const TUMOR_NUCLEUS: [u8; 3] = [150, 105, 185];
const LYMPHOCYTE: [u8; 3] = [60, 30, 140];

const TISSUE_CENTER: (f64, f64) = (1750.0, 1750.0);
const TISSUE_RADII: (f64, f64) = (1550.0, 1450.0);
const BLOB_CENTER: (f64, f64) = (1600.0, 1800.0);

const TUMOR_NUCLEUS_DENSITY: f64 = 0.6;
const STROMA_NUCLEUS_DENSITY: f64 = 0.05;
const LYMPHOCYTE_DENSITY: f64 = 0.75;
const CLUSTERS_IN_TUMOR: usize = 28;
const CLUSTERS_IN_STROMA: usize = 12;

fn blob_radius(theta: f64) -> f64 {
    900.0 * (1.0 + 0.15 * (3.0 * theta).sin() + 0.07 * (5.0 * theta + 1.0).cos())
}

pub fn in_tissue(x: f64, y: f64) -> bool {
    let dx = (x - TISSUE_CENTER.0) / TISSUE_RADII.0;
    let dy = (y - TISSUE_CENTER.1) / TISSUE_RADII.1;
    dx * dx + dy * dy <= 1.0
}

/// Membership in the true tumor blob.
pub fn in_tumor(x: f64, y: f64) -> bool {
    let (dx, dy) = (x - BLOB_CENTER.0, y - BLOB_CENTER.1);
    (dx * dx + dy * dy).sqrt() <= blob_radius(dy.atan2(dx))
}

/// SplitMix64 finalizer over the pixel position, mapped to [0, 1).
fn unit_noise(seed: u64, x: u32, y: u32) -> f64 {
    let mut z = seed ^ ((x as u64) << 32 | y as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cluster {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

pub fn lymphocyte_clusters(seed: u64) -> Vec<Cluster> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < CLUSTERS_IN_TUMOR {
        let t = rng.random_range(0.0..TAU);
        let r = blob_radius(t) * rng.random_range(0.0f64..0.85).sqrt();
        let radius = rng.random_range(40.0..110.0);
        out.push(Cluster {
            x: BLOB_CENTER.0 + r * t.cos(),
            y: BLOB_CENTER.1 + r * t.sin(),
            radius,
        });
    }
    while out.len() < CLUSTERS_IN_TUMOR + CLUSTERS_IN_STROMA {
        let x = rng.random_range(0.0..SYNTH_SIZE as f64);
        let y = rng.random_range(0.0..SYNTH_SIZE as f64);
        let radius = rng.random_range(40.0..110.0);
        if in_tissue(x, y) && !in_tumor(x, y) {
            out.push(Cluster { x, y, radius });
        }
    }
    out
}

pub fn synth_slide(seed: u64) -> RgbImage {
    let mut img = RgbImage::from_fn(SYNTH_SIZE, SYNTH_SIZE, |x, y| {
        let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
        let u = unit_noise(seed, x, y);
        let c = if !in_tissue(fx, fy) {
            GLASS
        } else if in_tumor(fx, fy) {
            if u < TUMOR_NUCLEUS_DENSITY {
                TUMOR_NUCLEUS
            } else {
                STROMA
            }
        } else if u < STROMA_NUCLEUS_DENSITY {
            TUMOR_NUCLEUS
        } else {
            STROMA
        };
        Rgb(c)
    });
    for (k, c) in lymphocyte_clusters(seed).iter().enumerate() {
        let x0 = (c.x - c.radius).max(0.0) as u32;
        let y0 = (c.y - c.radius).max(0.0) as u32;
        let x1 = ((c.x + c.radius).ceil() as u32).min(SYNTH_SIZE);
        let y1 = ((c.y + c.radius).ceil() as u32).min(SYNTH_SIZE);
        for y in y0..y1 {
            for x in x0..x1 {
                let (dx, dy) = (x as f64 + 0.5 - c.x, y as f64 + 0.5 - c.y);
                if dx * dx + dy * dy <= c.radius * c.radius
                    && unit_noise(seed.wrapping_add(k as u64 + 1), x, y) < LYMPHOCYTE_DENSITY
                {
                    img.put_pixel(x, y, Rgb(LYMPHOCYTE));
                }
            }
        }
    }
    img
}

pub fn hand_annotation() -> Result<AnnotationSet> {
    Ok(AnnotationSet::from_json(HAND_ANNOTATION)?)
}
