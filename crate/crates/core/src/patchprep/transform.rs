//! Training-time patch transforms: seeded rotation, flips and photometric
//! jitter, plus per-channel standardization.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformConfig {
    /// Rotation angle is drawn uniformly from `[0, max_rotation_deg]`.
    pub max_rotation_deg: f64,
    pub hflip_prob: f64,
    pub vflip_prob: f64,
    /// Multiplicative jitter factors are drawn from `1 ± amplitude`.
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub normalize: bool,
    pub seed: u64,
}

impl Default for TransformConfig {
    fn default() -> Self {
        Self {
            max_rotation_deg: 22.5,
            hflip_prob: 0.5,
            vflip_prob: 0.5,
            brightness: 0.1,
            contrast: 0.1,
            saturation: 0.1,
            normalize: true,
            seed: 0,
        }
    }
}

impl TransformConfig {
    pub fn identity() -> Self {
        Self {
            max_rotation_deg: 0.0,
            hflip_prob: 0.0,
            vflip_prob: 0.0,
            brightness: 0.0,
            contrast: 0.0,
            saturation: 0.0,
            normalize: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let probs_ok = (0.0..=1.0).contains(&self.hflip_prob) && (0.0..=1.0).contains(&self.vflip_prob);
        let amps_ok = [self.brightness, self.contrast, self.saturation]
            .iter()
            .all(|a| (0.0..=1.0).contains(a));
        if !probs_ok || !amps_ok || !(0.0..=360.0).contains(&self.max_rotation_deg) {
            return Err(crate::Error::invalid(format!("invalid transform config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub angle_deg: f64,
    pub hflip: bool,
    pub vflip: bool,
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
}

fn draw_rng(seed: u64, draw_seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw_seed);
    rng
}

/// Parameters for one draw. Always consumes the same number of variates so
/// the stream layout does not depend on the config.
pub fn sample_params(cfg: &TransformConfig, draw_seed: u64) -> AugmentParams {
    let mut rng = draw_rng(cfg.seed, draw_seed);
    let mut u = || rng.random::<f64>();
    let angle_deg = u() * cfg.max_rotation_deg;
    let hflip = u() < cfg.hflip_prob;
    let vflip = u() < cfg.vflip_prob;
    let mut jitter = |amp: f64| 1.0 + amp * (2.0 * u() - 1.0);
    AugmentParams {
        angle_deg,
        hflip,
        vflip,
        brightness: jitter(cfg.brightness),
        contrast: jitter(cfg.contrast),
        saturation: jitter(cfg.saturation),
    }
}

pub fn augment(patch: &RgbImage, cfg: &TransformConfig, draw_seed: u64) -> RgbImage {
    apply(patch, &sample_params(cfg, draw_seed))
}

pub fn apply(patch: &RgbImage, p: &AugmentParams) -> RgbImage {
    let mut img = if p.angle_deg != 0.0 {
        rotate_reflect(patch, p.angle_deg)
    } else {
        patch.clone()
    };
    if p.hflip {
        image::imageops::flip_horizontal_in_place(&mut img);
    }
    if p.vflip {
        image::imageops::flip_vertical_in_place(&mut img);
    }
    if p.brightness != 1.0 || p.contrast != 1.0 || p.saturation != 1.0 {
        jitter(&mut img, p);
    }
    img
}

fn luma(p: [f64; 3]) -> f64 {
    0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
}

fn jitter(img: &mut RgbImage, p: &AugmentParams) {
    let mut px: Vec<[f64; 3]> = img
        .pixels()
        .map(|q| q.0.map(|c| c as f64 * p.brightness))
        .collect();
    if p.contrast != 1.0 && !px.is_empty() {
        let mean = px.iter().map(|&q| luma(q)).sum::<f64>() / px.len() as f64;
        for q in &mut px {
            *q = q.map(|c| (c - mean) * p.contrast + mean);
        }
    }
    if p.saturation != 1.0 {
        for q in &mut px {
            let gray = luma(*q);
            *q = q.map(|c| (c - gray) * p.saturation + gray);
        }
    }
    for (dst, src) in img.pixels_mut().zip(px) {
        *dst = Rgb(src.map(|c| c.round().clamp(0.0, 255.0) as u8));
    }
}

/// Mirror an index into `0..n` without repeating the edge pixel.
fn reflect(mut k: i64, n: i64) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    k = k.rem_euclid(period);
    if k >= n {
        k = period - k;
    }
    k as usize
}

/// Rotate about the patch center, bilinear resampling, reflected borders.
fn rotate_reflect(src: &RgbImage, angle_deg: f64) -> RgbImage {
    let (w, h) = src.dimensions();
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (s, c) = angle_deg.to_radians().sin_cos();
    let fetch = |x: i64, y: i64| src.get_pixel(reflect(x, w as i64) as u32, reflect(y, h as i64) as u32).0;
    RgbImage::from_fn(w, h, |x, y| {
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        // Inverse mapping: sample the source at the point that lands here.
        let sx = c * dx + s * dy + cx;
        let sy = -s * dx + c * dy + cy;
        let (x0, y0) = (sx.floor(), sy.floor());
        let (fx, fy) = (sx - x0, sy - y0);
        let (x0, y0) = (x0 as i64, y0 as i64);
        let p00 = fetch(x0, y0);
        let p10 = fetch(x0 + 1, y0);
        let p01 = fetch(x0, y0 + 1);
        let p11 = fetch(x0 + 1, y0 + 1);
        let mut out = [0u8; 3];
        for ch in 0..3 {
            let top = p00[ch] as f64 * (1.0 - fx) + p10[ch] as f64 * fx;
            let bottom = p01[ch] as f64 * (1.0 - fx) + p11[ch] as f64 * fx;
            out[ch] = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
        }
        Rgb(out)
    })
}

/// Standardize each channel to mean 0 and population standard deviation 1.
/// A constant channel maps to zeros.
pub fn normalize_channels(pixels: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let n = pixels.len() as f64;
    if pixels.is_empty() {
        return Vec::new();
    }
    let mut mean = [0.0; 3];
    let mut std = [0.0; 3];
    for c in 0..3 {
        mean[c] = pixels.iter().map(|p| p[c]).sum::<f64>() / n;
        let var = pixels.iter().map(|p| (p[c] - mean[c]).powi(2)).sum::<f64>() / n;
        std[c] = var.sqrt();
    }
    pixels
        .iter()
        .map(|p| {
            let mut q = [0.0; 3];
            for c in 0..3 {
                q[c] = if std[c] > 1e-12 { (p[c] - mean[c]) / std[c] } else { 0.0 };
            }
            q
        })
        .collect()
}

pub fn normalize_patch(patch: &RgbImage) -> Vec<[f64; 3]> {
    let px: Vec<[f64; 3]> = patch.pixels().map(|p| p.0.map(f64::from)).collect();
    normalize_channels(&px)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Predict,
}

/// Network input for one patch. Augmentation only runs in training;
/// prediction only normalizes.
pub fn prepare_patch(patch: &RgbImage, cfg: &TransformConfig, draw_seed: u64, phase: Phase) -> Vec<[f64; 3]> {
    let img = match phase {
        Phase::Train => augment(patch, cfg, draw_seed),
        Phase::Predict => patch.clone(),
    };
    if cfg.normalize {
        normalize_patch(&img)
    } else {
        img.pixels().map(|p| p.0.map(f64::from)).collect()
    }
}
