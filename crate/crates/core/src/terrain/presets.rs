//! Built-in terrain classes and worlds used by the demos and tests.
//!
//! The four default classes loosely follow the friction ordering measured
//! on real grass, pavement, dirt and gravel; the numbers are illustrative,
//! not calibrated.

use super::{Interval, Region, TerrainClass, WorldSpec};

pub const CELL_SIZE_M: f64 = 0.25;

pub fn grass() -> TerrainClass {
    TerrainClass {
        id: 0,
        name: "grass".into(),
        mu_range: Interval::new(1.75, 2.05),
        rough_range: Interval::new(0.3, 0.5),
        palette: [[104, 133, 92], [70, 112, 58], [150, 172, 88]],
        texture_scale: 2.0,
    }
}

pub fn pavement() -> TerrainClass {
    TerrainClass {
        id: 1,
        name: "pavement".into(),
        mu_range: Interval::new(1.2, 1.5),
        rough_range: Interval::new(0.0, 0.1),
        palette: [[112, 112, 112], [132, 131, 128], [92, 92, 96]],
        texture_scale: 0.6,
    }
}

pub fn dirt() -> TerrainClass {
    TerrainClass {
        id: 2,
        name: "dirt".into(),
        mu_range: Interval::new(0.75, 1.05),
        rough_range: Interval::new(0.2, 0.4),
        palette: [[139, 111, 87], [118, 90, 68], [162, 132, 100]],
        texture_scale: 1.0,
    }
}

pub fn gravel() -> TerrainClass {
    TerrainClass {
        id: 3,
        name: "gravel".into(),
        mu_range: Interval::new(0.75, 1.05),
        rough_range: Interval::new(0.6, 0.8),
        palette: [[138, 130, 117], [100, 96, 90], [196, 190, 178]],
        texture_scale: 4.0,
    }
}

pub fn default_classes() -> Vec<TerrainClass> {
    vec![grass(), pavement(), dirt(), gravel()]
}

fn cells(m: f64) -> usize {
    (m / CELL_SIZE_M).round() as usize
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Region {
    Region::Rect { x0, y0, x1, y1 }
}

/// Regions for a 2×2 layout: ids in order (low-x low-y, high-x low-y,
/// low-x high-y, high-x high-y).
fn quadrants(w: f64, h: f64, ids: [u16; 4]) -> Vec<(u16, Region)> {
    let (mx, my) = (w / 2.0, h / 2.0);
    vec![
        (ids[0], rect(0.0, 0.0, mx, my)),
        (ids[1], rect(mx, 0.0, w, my)),
        (ids[2], rect(0.0, my, mx, h)),
        (ids[3], rect(mx, my, w, h)),
    ]
}

/// The four default classes in quadrants.
pub fn default_world_spec(width_m: f64, height_m: f64) -> WorldSpec {
    WorldSpec {
        width: cells(width_m),
        height: cells(height_m),
        cell_size_m: CELL_SIZE_M,
        classes: default_classes(),
        regions: quadrants(width_m, height_m, [0, 1, 2, 3]),
    }
}

/// Two visually distinct classes with friction 0.5 and 2.5 and identical
/// roughness statistics, laid out as a checkerboard of `block_m` squares.
pub fn two_class_world_spec(size_m: f64, block_m: f64) -> WorldSpec {
    let slick = TerrainClass {
        id: 0,
        name: "slick".into(),
        mu_range: Interval::point(0.5),
        rough_range: Interval::new(0.1, 0.3),
        palette: [[150, 170, 190], [120, 140, 165], [205, 215, 225]],
        texture_scale: 0.8,
    };
    let grippy = TerrainClass {
        id: 1,
        name: "grippy".into(),
        mu_range: Interval::point(2.5),
        rough_range: Interval::new(0.1, 0.3),
        palette: [[120, 96, 70], [96, 120, 62], [70, 60, 50]],
        texture_scale: 3.0,
    };
    let n = (size_m / block_m).round().max(1.0) as usize;
    let mut regions = Vec::new();
    for by in 0..n {
        for bx in 0..n {
            let (x0, y0) = (bx as f64 * block_m, by as f64 * block_m);
            regions.push((((bx + by) % 2) as u16, rect(x0, y0, x0 + block_m, y0 + block_m)));
        }
    }
    WorldSpec {
        width: cells(size_m),
        height: cells(size_m),
        cell_size_m: CELL_SIZE_M,
        classes: vec![slick, grippy],
        regions,
    }
}

/// Ice, gravel, brick and grass quadrants with friction fixed to
/// 0.25, 1.17, 2.08 and 3.0.
pub fn quadrant_world_spec(size_m: f64) -> WorldSpec {
    let class = |id: u16, name: &str, mu: f64, rough: (f64, f64), palette, scale| TerrainClass {
        id,
        name: name.into(),
        mu_range: Interval::point(mu),
        rough_range: Interval::new(rough.0, rough.1),
        palette,
        texture_scale: scale,
    };
    WorldSpec {
        width: cells(size_m),
        height: cells(size_m),
        cell_size_m: CELL_SIZE_M,
        classes: vec![
            class(0, "ice", 0.25, (0.0, 0.1), [[196, 222, 236], [170, 200, 222], [236, 244, 250]], 0.5),
            class(1, "gravel", 1.17, (0.1, 0.3), gravel().palette, 4.0),
            class(2, "brick", 2.08, (0.1, 0.3), [[150, 70, 52], [122, 54, 40], [176, 120, 96]], 1.5),
            class(3, "grass", 3.0, (0.1, 0.3), grass().palette, 2.0),
        ],
        regions: quadrants(size_m, size_m, [0, 1, 2, 3]),
    }
}

/// Lawn crossed by a bent sidewalk. The straight line between the two
/// sidewalk ends runs over the lawn; following the sidewalk is longer.
///
/// Returns the spec and the (start, goal) points in world meters.
pub fn planning_world_spec() -> (WorldSpec, [f64; 2], [f64; 2]) {
    let (w, h) = (24.0, 10.0);
    let lawn = TerrainClass {
        id: 0,
        name: "lawn".into(),
        mu_range: Interval::new(2.7, 3.0),
        rough_range: Interval::new(0.1, 0.3),
        ..grass()
    };
    let sidewalk = TerrainClass {
        id: 1,
        name: "sidewalk".into(),
        mu_range: Interval::new(1.1, 1.3),
        rough_range: Interval::new(0.0, 0.1),
        ..pavement()
    };
    let (start, goal) = ([2.0, 3.0], [22.0, 3.0]);
    let apex = [12.0, 5.0];
    let half = 0.75;
    // sidewalk band: two slanted strips meeting at the apex plus end pads
    let band = |a: [f64; 2], b: [f64; 2]| {
        Region::Polygon(vec![[a[0], a[1] - half], [b[0], b[1] - half], [b[0], b[1] + half], [a[0], a[1] + half]])
    };
    // lawn is everything not claimed by the sidewalk; build it as the
    // complement polygon above and below the band
    let left = [start[0] - 1.5, start[1]];
    let right = [goal[0] + 1.5, goal[1]];
    let path = [left, apex, right];
    let upper: Vec<[f64; 2]> = {
        let mut v = vec![[0.0, h], [0.0, left[1] + half]];
        v.extend(path.iter().map(|p| [p[0], p[1] + half]));
        v.push([w, right[1] + half]);
        v.push([w, h]);
        v
    };
    let lower: Vec<[f64; 2]> = {
        let mut v = vec![[0.0, 0.0], [0.0, left[1] - half]];
        v.extend(path.iter().map(|p| [p[0], p[1] - half]));
        v.push([w, right[1] - half]);
        v.push([w, 0.0]);
        v
    };
    let spec = WorldSpec {
        width: cells(w),
        height: cells(h),
        cell_size_m: CELL_SIZE_M,
        classes: vec![lawn, sidewalk],
        regions: vec![
            (1, rect(0.0, left[1] - half, left[0], left[1] + half)),
            (1, band(left, apex)),
            (1, band(apex, right)),
            (1, rect(right[0], right[1] - half, w, right[1] + half)),
            (0, Region::Polygon(upper)),
            (0, Region::Polygon(lower)),
        ],
    };
    (spec, start, goal)
}
