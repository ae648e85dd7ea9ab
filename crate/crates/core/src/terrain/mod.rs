//! Procedural terrain worlds.
//!
//! A world is a grid of cells, each carrying a visual class and the
//! physical parameters the robot feels there (friction coefficient and a
//! roughness magnitude). Appearance is a function of the class and the world
//! position only, so vision can learn physics only through class statistics.

pub mod noise;
pub mod presets;
mod spec_file;
mod texture;

pub use spec_file::{parse_world_spec, world_spec_to_toml, WorldSpecFile};
pub use texture::{render_texture, texture_color, TerrainTexture, VOID_COLOR};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Friction coefficients are confined to this range everywhere.
pub const MU_MIN: f64 = 0.25;
pub const MU_MAX: f64 = 3.0;

/// Lattice spacing (in cells) of the per-class parameter field. With a
/// smoothstep value-noise field the per-cell change is at most `1.5 / 20`
/// of the class range width.
const PARAM_FIELD_SPACING: f64 = 20.0;

#[derive(Debug, Error)]
pub enum TerrainError {
    #[error("terrain configuration: {0}")]
    Config(String),
    #[error("position ({x}, {y}) is outside the world extent {w} x {h} m")]
    OutOfBounds { x: f64, y: f64, w: f64, h: f64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    fn lerp(&self, t: f64) -> f64 {
        // exact endpoints for degenerate intervals
        if self.lo == self.hi {
            self.lo
        } else {
            self.lo + t * (self.hi - self.lo)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainClass {
    pub id: u16,
    pub name: String,
    pub mu_range: Interval,
    pub rough_range: Interval,
    /// Three base colors blended by the texture noise.
    pub palette: [[u8; 3]; 3],
    /// Noise frequency in cycles per meter.
    pub texture_scale: f64,
}

impl TerrainClass {
    fn validate(&self) -> Result<(), TerrainError> {
        let cfg = |m: String| Err(TerrainError::Config(m));
        let (m, r) = (self.mu_range, self.rough_range);
        if !(m.lo <= m.hi && m.lo >= MU_MIN && m.hi <= MU_MAX) {
            return cfg(format!(
                "class '{}': mu range [{}, {}] must lie within [{MU_MIN}, {MU_MAX}]",
                self.name, m.lo, m.hi
            ));
        }
        if !(r.lo <= r.hi && r.lo >= 0.0 && r.hi <= 1.0) {
            return cfg(format!("class '{}': roughness range [{}, {}] must lie within [0, 1]", self.name, r.lo, r.hi));
        }
        if !(self.texture_scale > 0.0 && self.texture_scale.is_finite()) {
            return cfg(format!("class '{}': texture_scale must be positive", self.name));
        }
        Ok(())
    }
}

/// Area of the world assigned to one class, in world meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Region {
    /// Axis-aligned `[x0, x1) × [y0, y1)`.
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    /// Simple polygon, even-odd rule.
    Polygon(Vec<[f64; 2]>),
}

impl Region {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Region::Rect { x0, y0, x1, y1 } => x >= *x0 && x < *x1 && y >= *y0 && y < *y1,
            Region::Polygon(pts) => {
                let mut inside = false;
                let n = pts.len();
                for i in 0..n {
                    let [xi, yi] = pts[i];
                    let [xj, yj] = pts[(i + n - 1) % n];
                    if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
                        inside = !inside;
                    }
                }
                inside
            }
        }
    }
}

/// Everything needed to generate a world (besides the seed).
#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub width: usize,
    pub height: usize,
    pub cell_size_m: f64,
    pub classes: Vec<TerrainClass>,
    /// `(class id, region)` pairs.
    pub regions: Vec<(u16, Region)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub class_id: u16,
    pub mu: f64,
    pub roughness: f64,
}

/// Physical parameters felt at a location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerrainParams {
    pub mu: f64,
    pub roughness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerrainGrid {
    pub width: usize,
    pub height: usize,
    pub cell_size_m: f64,
    /// Row-major, row index = y cell index.
    pub cells: Vec<Cell>,
    pub classes: Vec<TerrainClass>,
    pub seed: u64,
}

fn unit_field(seed: u64, class_id: u16, channel: u64, cx: usize, cy: usize) -> f64 {
    let key = noise::hash_key(seed, &[0x7465_7272, class_id as u64, channel]);
    noise::value_noise(key, cx as f64 / PARAM_FIELD_SPACING, cy as f64 / PARAM_FIELD_SPACING)
}

/// Rasterize the spec onto its grid and sample per-cell parameters.
///
/// Cells are assigned by their center point. A cell claimed by regions of
/// two different classes, or by none, is a configuration error.
pub fn generate_world(spec: &WorldSpec, seed: u64) -> Result<TerrainGrid, TerrainError> {
    if spec.classes.is_empty() {
        return Err(TerrainError::Config("no terrain classes".into()));
    }
    if spec.width == 0 || spec.height == 0 || !(spec.cell_size_m > 0.0) {
        return Err(TerrainError::Config("grid dimensions must be positive".into()));
    }
    for (i, c) in spec.classes.iter().enumerate() {
        c.validate()?;
        if spec.classes[..i].iter().any(|o| o.id == c.id) {
            return Err(TerrainError::Config(format!("duplicate class id {}", c.id)));
        }
    }
    for (id, _) in &spec.regions {
        if !spec.classes.iter().any(|c| c.id == *id) {
            return Err(TerrainError::Config(format!("region references unknown class id {id}")));
        }
    }
    let cs = spec.cell_size_m;
    let mut cells = Vec::with_capacity(spec.width * spec.height);
    for cy in 0..spec.height {
        for cx in 0..spec.width {
            let (x, y) = ((cx as f64 + 0.5) * cs, (cy as f64 + 0.5) * cs);
            let mut owner: Option<u16> = None;
            for (id, region) in &spec.regions {
                if region.contains(x, y) {
                    match owner {
                        Some(prev) if prev != *id => {
                            return Err(TerrainError::Config(format!(
                                "regions of classes {prev} and {id} overlap at ({x}, {y})"
                            )))
                        }
                        _ => owner = Some(*id),
                    }
                }
            }
            let class_id = owner
                .ok_or_else(|| TerrainError::Config(format!("cell at ({x}, {y}) is not covered by any region")))?;
            let class = spec.classes.iter().find(|c| c.id == class_id).unwrap();
            cells.push(Cell {
                class_id,
                mu: class.mu_range.lerp(unit_field(seed, class_id, 0, cx, cy)),
                roughness: class.rough_range.lerp(unit_field(seed, class_id, 1, cx, cy)),
            });
        }
    }
    Ok(TerrainGrid {
        width: spec.width,
        height: spec.height,
        cell_size_m: cs,
        cells,
        classes: spec.classes.clone(),
        seed,
    })
}

impl TerrainGrid {
    /// Single-class grid with fixed parameters everywhere.
    pub fn uniform(width: usize, height: usize, cell_size_m: f64, mu: f64, roughness: f64) -> Self {
        let class = TerrainClass {
            id: 0,
            name: "uniform".into(),
            mu_range: Interval::point(mu),
            rough_range: Interval::point(roughness),
            palette: [[128, 128, 128]; 3],
            texture_scale: 1.0,
        };
        Self {
            width,
            height,
            cell_size_m,
            cells: vec![Cell { class_id: 0, mu, roughness }; width * height],
            classes: vec![class],
            seed: 0,
        }
    }

    pub fn extent(&self) -> (f64, f64) {
        (self.width as f64 * self.cell_size_m, self.height as f64 * self.cell_size_m)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (w, h) = self.extent();
        x >= 0.0 && y >= 0.0 && x < w && y < h
    }

    /// Cell indices owning `(x, y)`; cells own the half-open `[x, x + size)`.
    pub fn cell_index(&self, x: f64, y: f64) -> Result<(usize, usize), TerrainError> {
        if !self.contains(x, y) {
            let (w, h) = self.extent();
            return Err(TerrainError::OutOfBounds { x, y, w, h });
        }
        let cx = ((x / self.cell_size_m).floor() as usize).min(self.width - 1);
        let cy = ((y / self.cell_size_m).floor() as usize).min(self.height - 1);
        Ok((cx, cy))
    }

    pub fn cell(&self, cx: usize, cy: usize) -> &Cell {
        &self.cells[cy * self.width + cx]
    }

    pub fn cell_mut(&mut self, cx: usize, cy: usize) -> &mut Cell {
        &mut self.cells[cy * self.width + cx]
    }

    pub fn cell_at(&self, x: f64, y: f64) -> Result<&Cell, TerrainError> {
        let (cx, cy) = self.cell_index(x, y)?;
        Ok(self.cell(cx, cy))
    }

    /// Nearest-cell lookup of the physical parameters at a world position.
    pub fn query_params(&self, x: f64, y: f64) -> Result<TerrainParams, TerrainError> {
        let c = self.cell_at(x, y)?;
        Ok(TerrainParams { mu: c.mu, roughness: c.roughness })
    }

    pub fn class(&self, id: u16) -> Option<&TerrainClass> {
        self.classes.iter().find(|c| c.id == id)
    }

    /// Distinct friction values are needed to learn anything about friction.
    pub fn distinct_mu_count(grids: &[TerrainGrid]) -> usize {
        let mut v: Vec<u64> = grids.iter().flat_map(|g| g.cells.iter().map(|c| c.mu.to_bits())).collect();
        v.sort_unstable();
        v.dedup();
        v.len()
    }
}
