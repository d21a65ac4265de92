use image::{Rgba, RgbaImage};
use serde::{Deserialize, Serialize};

use crate::error::{AtlasError, Result};

pub const TILE_SIZE: u32 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelDims {
    pub width: u32,
    pub height: u32,
}

impl LevelDims {
    pub fn tiles(&self, tile: u32) -> (u32, u32) {
        (self.width.div_ceil(tile).max(1), self.height.div_ceil(tile).max(1))
    }
}

/// Level dimensions from full size down to the first level that fits in one
/// tile. Each level halves the previous one, rounding up.
pub fn pyramid_levels(width: u32, height: u32, tile: u32) -> Vec<LevelDims> {
    let mut levels = vec![LevelDims { width, height }];
    let (mut w, mut h) = (width, height);
    while w > tile || h > tile {
        w = w.div_ceil(2);
        h = h.div_ceil(2);
        levels.push(LevelDims { width: w, height: h });
    }
    levels
}

/// 2x2 box filter with premultiplied alpha. Output is `ceil(w/2) x ceil(h/2)`;
/// edge pixels average only the source pixels that exist.
pub fn downsample(img: &RgbaImage) -> RgbaImage {
    let (w, h) = img.dimensions();
    let (ow, oh) = (w.div_ceil(2), h.div_ceil(2));
    RgbaImage::from_fn(ow, oh, |x, y| {
        let mut n = 0u32;
        let mut a_sum = 0u32;
        let mut c_sum = [0u32; 3];
        for sy in 2 * y..(2 * y + 2).min(h) {
            for sx in 2 * x..(2 * x + 2).min(w) {
                let p = img.get_pixel(sx, sy).0;
                let a = p[3] as u32;
                n += 1;
                a_sum += a;
                for c in 0..3 {
                    c_sum[c] += p[c] as u32 * a;
                }
            }
        }
        if a_sum == 0 {
            return Rgba([0, 0, 0, 0]);
        }
        let c = c_sum.map(|s| ((s + a_sum / 2) / a_sum) as u8);
        Rgba([c[0], c[1], c[2], ((a_sum + n / 2) / n) as u8])
    })
}

/// All levels of a rendered image, level 0 first.
#[derive(Debug, Clone)]
pub struct Pyramid {
    levels: Vec<RgbaImage>,
    tile: u32,
}

impl Pyramid {
    pub fn build(full: RgbaImage, tile: u32) -> Self {
        let n = pyramid_levels(full.width(), full.height(), tile).len();
        let mut levels = Vec::with_capacity(n);
        levels.push(full);
        while levels.len() < n {
            let next = downsample(levels.last().expect("non-empty"));
            levels.push(next);
        }
        Self { levels, tile }
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, z: usize) -> Option<&RgbaImage> {
        self.levels.get(z)
    }

    /// Tile `(x, y)` of level `z`, padded with transparent pixels to full size.
    pub fn tile(&self, z: u32, x: u32, y: u32) -> Result<RgbaImage> {
        let level = self
            .levels
            .get(z as usize)
            .ok_or_else(|| AtlasError::NotFound(format!("level {z}")))?;
        let dims = LevelDims {
            width: level.width(),
            height: level.height(),
        };
        let (nx, ny) = dims.tiles(self.tile);
        if x >= nx || y >= ny {
            return Err(AtlasError::NotFound(format!("tile {z}/{x}/{y}")));
        }
        let mut out = RgbaImage::new(self.tile, self.tile);
        let (x0, y0) = (x * self.tile, y * self.tile);
        let w = self.tile.min(dims.width.saturating_sub(x0));
        let h = self.tile.min(dims.height.saturating_sub(y0));
        for ty in 0..h {
            for tx in 0..w {
                out.put_pixel(tx, ty, *level.get_pixel(x0 + tx, y0 + ty));
            }
        }
        Ok(out)
    }
}
