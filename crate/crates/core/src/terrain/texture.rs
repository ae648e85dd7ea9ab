use super::noise::{hash_key, value_noise};
use super::{TerrainClass, TerrainError, TerrainGrid};
use crate::raster::RgbImage;

/// Color returned for ground points outside the world.
pub const VOID_COLOR: [u8; 3] = [20, 20, 24];

/// Overhead orthographic raster of the terrain appearance.
///
/// Pixel `(col, row)` covers world `[col, col + 1) / px_per_m` in x and
/// `[row, row + 1) / px_per_m` in y; rows grow with world y.
#[derive(Debug, Clone, PartialEq)]
pub struct TerrainTexture {
    pub image: RgbImage,
    pub px_per_m: f64,
}

impl TerrainTexture {
    /// Nearest-pixel lookup at a world position.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> [u8; 3] {
        if !(x >= 0.0 && y >= 0.0) {
            return VOID_COLOR;
        }
        let (col, row) = ((x * self.px_per_m) as usize, (y * self.px_per_m) as usize);
        if col >= self.image.width || row >= self.image.height {
            return VOID_COLOR;
        }
        self.image.get(col, row)
    }
}

/// Appearance of `class` at world `(x, y)`.
///
/// Coarse noise blends the first two palette colors, a finer octave mixes
/// in the third. Depends only on (seed, class, position).
pub fn texture_color(class: &TerrainClass, seed: u64, x: f64, y: f64) -> [u8; 3] {
    let s = class.texture_scale;
    let k0 = hash_key(seed, &[0x7465_7874, class.id as u64, 0]);
    let k1 = hash_key(seed, &[0x7465_7874, class.id as u64, 1]);
    let coarse = value_noise(k0, x * s, y * s);
    let fine = value_noise(k1, x * s * 5.0, y * s * 5.0);
    let [p0, p1, p2] = class.palette;
    let mut out = [0u8; 3];
    for c in 0..3 {
        let base = p0[c] as f64 + (p1[c] as f64 - p0[c] as f64) * coarse;
        let mix = 0.6 * fine;
        out[c] = (base * (1.0 - mix) + p2[c] as f64 * mix).round().clamp(0.0, 255.0) as u8;
    }
    out
}

/// Render the world from straight above at `px_per_m` resolution.
pub fn render_texture(grid: &TerrainGrid, px_per_m: f64, seed: u64) -> Result<TerrainTexture, TerrainError> {
    if !(px_per_m > 0.0 && px_per_m.is_finite()) {
        return Err(TerrainError::Config("resolution must be positive".into()));
    }
    let (w_m, h_m) = grid.extent();
    let (w, h) = ((w_m * px_per_m).round() as usize, (h_m * px_per_m).round() as usize);
    let mut image = RgbImage::new(w, h);
    for row in 0..h {
        let y = (row as f64 + 0.5) / px_per_m;
        for col in 0..w {
            let x = (col as f64 + 0.5) / px_per_m;
            let color = match grid.cell_at(x, y) {
                Ok(cell) => match grid.class(cell.class_id) {
                    Some(class) => texture_color(class, seed, x, y),
                    None => VOID_COLOR,
                },
                Err(_) => VOID_COLOR,
            };
            image.put(col, row, color);
        }
    }
    Ok(TerrainTexture { image, px_per_m })
}
