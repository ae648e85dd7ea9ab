use rayon::prelude::*;

use crate::raster::RgbImage;

pub const PATCH: usize = 8;
pub const N_FEATURES: usize = 16;

pub type Feature = [f32; N_FEATURES];

fn luminance(rgb: [u8; 3]) -> f64 {
    (0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64) / 255.0
}

/// Mean of the per-block variances of `lum` over `k×k` blocks.
fn block_variance(lum: &[f64; PATCH * PATCH], k: usize) -> f64 {
    let mut acc = 0.0;
    let blocks = PATCH / k;
    for by in 0..blocks {
        for bx in 0..blocks {
            let (mut s, mut s2) = (0.0, 0.0);
            for y in by * k..(by + 1) * k {
                for x in bx * k..(bx + 1) * k {
                    let l = lum[y * PATCH + x];
                    s += l;
                    s2 += l * l;
                }
            }
            let n = (k * k) as f64;
            acc += (s2 / n - (s / n) * (s / n)).max(0.0);
        }
    }
    acc / (blocks * blocks) as f64
}

/// Raw (unstandardized) features of the 8×8 patch with top-left pixel
/// `(x0, y0)`: channel means and standard deviations, a magnitude-weighted
/// 8-bin histogram of luminance-gradient orientation, and luminance
/// variance over 2×2 and 4×4 blocks.
pub fn patch_feature(img: &RgbImage, x0: usize, y0: usize) -> Feature {
    let mut lum = [0.0; PATCH * PATCH];
    let (mut sum, mut sum2) = ([0.0f64; 3], [0.0f64; 3]);
    for y in 0..PATCH {
        for x in 0..PATCH {
            let px = img.get(x0 + x, y0 + y);
            for c in 0..3 {
                let v = px[c] as f64 / 255.0;
                sum[c] += v;
                sum2[c] += v * v;
            }
            lum[y * PATCH + x] = luminance(px);
        }
    }
    let n = (PATCH * PATCH) as f64;
    let mut f = [0.0f32; N_FEATURES];
    for c in 0..3 {
        let m = sum[c] / n;
        f[c] = m as f32;
        f[3 + c] = (sum2[c] / n - m * m).max(0.0).sqrt() as f32;
    }
    let mut hist = [0.0f64; 8];
    let mut total = 0.0;
    for y in 0..PATCH - 1 {
        for x in 0..PATCH - 1 {
            let gx = lum[y * PATCH + x + 1] - lum[y * PATCH + x];
            let gy = lum[(y + 1) * PATCH + x] - lum[y * PATCH + x];
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let a = gy.atan2(gx).rem_euclid(std::f64::consts::TAU);
            let bin = ((a / std::f64::consts::TAU * 8.0) as usize).min(7);
            hist[bin] += mag;
            total += mag;
        }
    }
    if total > 0.0 {
        for (k, h) in hist.iter().enumerate() {
            f[6 + k] = (h / total) as f32;
        }
    }
    f[14] = block_variance(&lum, 2) as f32;
    f[15] = block_variance(&lum, 4) as f32;
    f
}

/// Features of every full 8×8 patch, row-major over the patch grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub cols: usize,
    pub rows: usize,
    pub feats: Vec<Feature>,
}

impl FeatureMap {
    pub fn of(img: &RgbImage) -> Self {
        let (cols, rows) = (img.width / PATCH, img.height / PATCH);
        let feats = (0..cols * rows)
            .into_par_iter()
            .map(|i| patch_feature(img, (i % cols) * PATCH, (i / cols) * PATCH))
            .collect();
        Self { cols, rows, feats }
    }

    /// Patch holding pixel `(x, y)`; remainder pixels past the last full
    /// patch map to the nearest one.
    pub fn patch_of(&self, x: usize, y: usize) -> usize {
        let c = (x / PATCH).min(self.cols.saturating_sub(1));
        let r = (y / PATCH).min(self.rows.saturating_sub(1));
        r * self.cols + c
    }
}

/// Per-dimension mean and standard deviation used to standardize features.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: [f64; N_FEATURES],
    pub std: [f64; N_FEATURES],
}

impl Standardizer {
    pub fn fit<'a>(feats: impl IntoIterator<Item = &'a Feature>) -> Self {
        let mut n = 0.0;
        let (mut s, mut s2) = ([0.0; N_FEATURES], [0.0; N_FEATURES]);
        for f in feats {
            n += 1.0;
            for k in 0..N_FEATURES {
                s[k] += f[k] as f64;
                s2[k] += (f[k] as f64).powi(2);
            }
        }
        let mut out = Self { mean: [0.0; N_FEATURES], std: [1.0; N_FEATURES] };
        if n > 0.0 {
            for k in 0..N_FEATURES {
                out.mean[k] = s[k] / n;
                let var = (s2[k] / n - out.mean[k].powi(2)).max(0.0);
                // constant dimensions pass through centered
                out.std[k] = if var > 1e-12 { var.sqrt() } else { 1.0 };
            }
        }
        out
    }

    pub fn apply(&self, f: &Feature) -> Feature {
        let mut o = [0.0f32; N_FEATURES];
        for k in 0..N_FEATURES {
            o[k] = ((f[k] as f64 - self.mean[k]) / self.std[k]) as f32;
        }
        o
    }
}
