//! World spec files (TOML).
//!
//! ```toml
//! [world]
//! width_m = 20.0
//! height_m = 20.0
//! cell_size_m = 0.25      # optional, default 0.25
//!
//! [[class]]
//! id = 0
//! name = "grass"
//! mu = [1.75, 2.05]          # closed interval
//! roughness = [0.3, 0.5]
//! palette = [[104, 133, 92], [70, 112, 58], [150, 172, 88]]
//! texture_scale = 2.0        # noise cycles per meter
//!
//! [[region]]
//! class = "grass"            # class name
//! rect = [0.0, 0.0, 10.0, 20.0]     # x0, y0, x1, y1 in meters
//!
//! [[region]]
//! class = "grass"
//! polygon = [[10.0, 0.0], [20.0, 0.0], [20.0, 5.0]]
//! ```

use serde::Deserialize;

use super::presets::CELL_SIZE_M;
use super::{Interval, Region, TerrainClass, TerrainError, WorldSpec};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpecFile {
    pub world: WorldSection,
    #[serde(rename = "class")]
    pub classes: Vec<ClassSection>,
    #[serde(rename = "region")]
    pub regions: Vec<RegionSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSection {
    pub width_m: f64,
    pub height_m: f64,
    #[serde(default = "default_cell")]
    pub cell_size_m: f64,
}

fn default_cell() -> f64 {
    CELL_SIZE_M
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSection {
    pub id: u16,
    pub name: String,
    pub mu: [f64; 2],
    pub roughness: [f64; 2],
    pub palette: [[u8; 3]; 3],
    pub texture_scale: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSection {
    pub class: String,
    pub rect: Option<[f64; 4]>,
    pub polygon: Option<Vec<[f64; 2]>>,
}

impl WorldSpecFile {
    pub fn into_spec(self) -> Result<WorldSpec, TerrainError> {
        let cs = self.world.cell_size_m;
        if !(cs > 0.0) {
            return Err(TerrainError::Config("cell_size_m must be positive".into()));
        }
        let classes: Vec<TerrainClass> = self
            .classes
            .into_iter()
            .map(|c| TerrainClass {
                id: c.id,
                name: c.name,
                mu_range: Interval::new(c.mu[0], c.mu[1]),
                rough_range: Interval::new(c.roughness[0], c.roughness[1]),
                palette: c.palette,
                texture_scale: c.texture_scale,
            })
            .collect();
        let mut regions = Vec::with_capacity(self.regions.len());
        for r in self.regions {
            let id = classes
                .iter()
                .find(|c| c.name == r.class)
                .map(|c| c.id)
                .ok_or_else(|| TerrainError::Config(format!("region names unknown class '{}'", r.class)))?;
            let region = match (r.rect, r.polygon) {
                (Some([x0, y0, x1, y1]), None) => Region::Rect { x0, y0, x1, y1 },
                (None, Some(pts)) if pts.len() >= 3 => Region::Polygon(pts),
                _ => {
                    return Err(TerrainError::Config(
                        "each region needs exactly one of `rect` or `polygon` (>= 3 points)".into(),
                    ))
                }
            };
            regions.push((id, region));
        }
        Ok(WorldSpec {
            width: (self.world.width_m / cs).round() as usize,
            height: (self.world.height_m / cs).round() as usize,
            cell_size_m: cs,
            classes,
            regions,
        })
    }
}

pub fn parse_world_spec(text: &str) -> Result<WorldSpec, TerrainError> {
    let file: WorldSpecFile = toml::from_str(text).map_err(|e| TerrainError::Config(format!("world spec: {e}")))?;
    file.into_spec()
}

/// Serialize a spec back to the file format.
pub fn world_spec_to_toml(spec: &WorldSpec) -> String {
    let mut s = String::new();
    s.push_str("[world]\n");
    s.push_str(&format!(
        "width_m = {:?}\nheight_m = {:?}\ncell_size_m = {:?}\n",
        spec.width as f64 * spec.cell_size_m,
        spec.height as f64 * spec.cell_size_m,
        spec.cell_size_m
    ));
    for c in &spec.classes {
        s.push_str(&format!(
            "\n[[class]]\nid = {}\nname = {:?}\nmu = [{:?}, {:?}]\nroughness = [{:?}, {:?}]\npalette = {:?}\ntexture_scale = {:?}\n",
            c.id, c.name, c.mu_range.lo, c.mu_range.hi, c.rough_range.lo, c.rough_range.hi, c.palette, c.texture_scale
        ));
    }
    for (id, r) in &spec.regions {
        let name = &spec.classes.iter().find(|c| c.id == *id).unwrap().name;
        s.push_str(&format!("\n[[region]]\nclass = {name:?}\n"));
        match r {
            Region::Rect { x0, y0, x1, y1 } => s.push_str(&format!("rect = [{x0:?}, {y0:?}, {x1:?}, {y1:?}]\n")),
            Region::Polygon(pts) => s.push_str(&format!("polygon = {pts:?}\n")),
        }
    }
    s
}
