//! Minimum-cost paths over cost maps (8-connected A*).

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use thiserror::Error;

use crate::costmap::CostMap;
use crate::raster::RgbImage;

pub type CellIdx = (usize, usize);

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("cell ({0}, {1}) is outside the map")]
    OutOfBounds(usize, usize),
    #[error("cell ({0}, {1}) has no finite cost")]
    Untraversable(usize, usize),
    #[error("cost map holds a negative or NaN cost")]
    BadCost,
}

/// A start-to-goal sequence of 8-adjacent cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub cells: Vec<CellIdx>,
    pub total: f64,
    /// Cost of each move; `segments[i]` leads from `cells[i]` to `cells[i + 1]`.
    pub segments: Vec<f64>,
}

impl Path {
    /// Cost accumulated at every cell.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = vec![0.0];
        for s in &self.segments {
            acc += s;
            out.push(acc);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanOutcome {
    Found(Path),
    NoPath,
}

impl PlanOutcome {
    pub fn path(&self) -> Option<&Path> {
        match self {
            PlanOutcome::Found(p) => Some(p),
            PlanOutcome::NoPath => None,
        }
    }
}

pub const NEIGHBORS: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

/// Cost of moving between two adjacent cells: mean of the endpoint costs,
/// times √2 on diagonals.
#[inline]
pub fn edge_cost(map: &CostMap, a: CellIdx, b: CellIdx) -> f64 {
    let avg = 0.5 * (map.at(a.0, a.1) + map.at(b.0, b.1));
    if a.0 != b.0 && a.1 != b.1 {
        avg * std::f64::consts::SQRT_2
    } else {
        avg
    }
}

/// In-bounds neighbors of `c` with finite cost.
pub fn neighbors(map: &CostMap, c: CellIdx) -> impl Iterator<Item = CellIdx> + '_ {
    NEIGHBORS.iter().filter_map(move |&(dr, dc)| {
        let r = c.0.checked_add_signed(dr)?;
        let k = c.1.checked_add_signed(dc)?;
        (r < map.rows && k < map.cols && map.at(r, k).is_finite()).then_some((r, k))
    })
}

/// Straight-line cell distance times the cheapest finite cell cost.
pub fn heuristic(a: CellIdx, b: CellIdx, min_cost: f64) -> f64 {
    let dr = a.0 as f64 - b.0 as f64;
    let dc = a.1 as f64 - b.1 as f64;
    (dr * dr + dc * dc).sqrt() * min_cost
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    h: f64,
    idx: usize,
}

impl Eq for Open {}

impl Ord for Open {
    // max-heap: reverse so the smallest (f, h, idx) pops first
    fn cmp(&self, o: &Self) -> Ordering {
        o.f.total_cmp(&self.f).then_with(|| o.h.total_cmp(&self.h)).then_with(|| o.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

fn check(map: &CostMap, c: CellIdx) -> Result<(), PlanError> {
    if c.0 >= map.rows || c.1 >= map.cols {
        return Err(PlanError::OutOfBounds(c.0, c.1));
    }
    if !map.at(c.0, c.1).is_finite() {
        return Err(PlanError::Untraversable(c.0, c.1));
    }
    Ok(())
}

/// Cost-minimal path from `start` to `goal` (cells as (row, col)).
///
/// Ties on f are broken by lower heuristic, then by row-major index.
pub fn astar(map: &CostMap, start: CellIdx, goal: CellIdx) -> Result<PlanOutcome, PlanError> {
    if map.cost.iter().any(|c| c.is_nan() || *c < 0.0) {
        return Err(PlanError::BadCost);
    }
    check(map, start)?;
    check(map, goal)?;
    let min_cost = map.cost.iter().copied().filter(|c| c.is_finite()).fold(f64::INFINITY, f64::min);
    let n = map.rows * map.cols;
    let id = |c: CellIdx| c.0 * map.cols + c.1;
    let cell = |i: usize| (i / map.cols, i % map.cols);
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    g[id(start)] = 0.0;
    let h0 = heuristic(start, goal, min_cost);
    open.push(Open { f: h0, h: h0, idx: id(start) });
    while let Some(Open { idx, .. }) = open.pop() {
        if closed[idx] {
            continue;
        }
        closed[idx] = true;
        if idx == id(goal) {
            break;
        }
        let c = cell(idx);
        for nb in neighbors(map, c) {
            let j = id(nb);
            if closed[j] {
                continue;
            }
            let cand = g[idx] + edge_cost(map, c, nb);
            if cand < g[j] {
                g[j] = cand;
                parent[j] = idx;
                let h = heuristic(nb, goal, min_cost);
                open.push(Open { f: cand + h, h, idx: j });
            }
        }
    }
    if !closed[id(goal)] {
        return Ok(PlanOutcome::NoPath);
    }
    let mut cells = vec![goal];
    let mut cur = id(goal);
    while cur != id(start) {
        cur = parent[cur];
        cells.push(cell(cur));
    }
    cells.reverse();
    let segments: Vec<f64> = cells.windows(2).map(|w| edge_cost(map, w[0], w[1])).collect();
    Ok(PlanOutcome::Found(Path { total: g[id(goal)], cells, segments }))
}

/// Path as CSV of (row, col, cumulative_cost).
pub fn write_path_csv<W: Write>(path: &Path, mut w: W) -> std::io::Result<()> {
    writeln!(w, "row,col,cumulative_cost")?;
    for (c, acc) in path.cells.iter().zip(path.cumulative()) {
        writeln!(w, "{},{},{acc:.6}", c.0, c.1)?;
    }
    Ok(())
}

/// Pixel center of a cell in an image that spans the whole map.
fn cell_center_px(map: &CostMap, img_w: usize, img_h: usize, c: CellIdx) -> (f64, f64) {
    ((c.1 as f64 + 0.5) * img_w as f64 / map.cols as f64, (c.0 as f64 + 0.5) * img_h as f64 / map.rows as f64)
}

/// Draw the path onto a copy of `image`, which must span the map.
pub fn overlay_path(image: &RgbImage, map: &CostMap, path: &Path, color: [u8; 3]) -> RgbImage {
    let mut out = image.clone();
    let pts: Vec<(f64, f64)> = path.cells.iter().map(|&c| cell_center_px(map, image.width, image.height, c)).collect();
    let mut dot = |x: f64, y: f64| {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (px, py) = (x as i64 + dx, y as i64 + dy);
                if px >= 0 && py >= 0 && (px as usize) < out.width && (py as usize) < out.height {
                    out.put(px as usize, py as usize, color);
                }
            }
        }
    };
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let n = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
        for k in 0..=n {
            let t = k as f64 / n as f64;
            dot(a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1));
        }
    }
    if let Some(&(x, y)) = pts.first() {
        dot(x, y);
    }
    out
}

/// SVG polyline of the path in the pixel frame of a `img_w × img_h` image
/// spanning the map.
pub fn path_svg(map: &CostMap, path: &Path, img_w: usize, img_h: usize, color: &str) -> String {
    let pts: Vec<String> = path
        .cells
        .iter()
        .map(|&c| {
            let (x, y) = cell_center_px(map, img_w, img_h, c);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{img_w}\" height=\"{img_h}\" viewBox=\"0 0 {img_w} {img_h}\">\n<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n</svg>\n",
        pts.join(" ")
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_line_on_uniform_map() {
        let m = CostMap::uniform(10, 10, 1.0, 1.0);
        let p = astar(&m, (0, 0), (0, 9)).unwrap();
        let p = p.path().unwrap();
        assert_eq!(p.total, 9.0);
        assert_eq!(p.cells.len(), 10);
        assert!(p.cells.iter().all(|c| c.0 == 0));
    }

    #[test]
    fn enclosed_goal_has_no_path() {
        let mut m = CostMap::uniform(7, 7, 1.0, 1.0);
        for r in 2..=4 {
            for c in 2..=4 {
                if (r, c) != (3, 3) {
                    m.cost[r * 7 + c] = f64::INFINITY;
                }
            }
        }
        assert_eq!(astar(&m, (0, 0), (3, 3)).unwrap(), PlanOutcome::NoPath);
    }

    #[test]
    fn bad_endpoints_are_errors() {
        let mut m = CostMap::uniform(3, 3, 1.0, 1.0);
        assert_eq!(astar(&m, (0, 0), (3, 0)), Err(PlanError::OutOfBounds(3, 0)));
        m.cost[8] = f64::INFINITY;
        assert_eq!(astar(&m, (0, 0), (2, 2)), Err(PlanError::Untraversable(2, 2)));
    }

    #[test]
    fn diagonal_move_costs_sqrt2() {
        let m = CostMap::uniform(2, 2, 1.0, 2.0);
        let p = astar(&m, (0, 0), (1, 1)).unwrap();
        assert!((p.path().unwrap().total - 2.0 * std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn svg_has_one_point_per_cell() {
        let m = CostMap::uniform(4, 4, 1.0, 1.0);
        let p = astar(&m, (0, 0), (3, 3)).unwrap();
        let svg = path_svg(&m, p.path().unwrap(), 40, 40, "red");
        assert!(svg.contains("<polyline"));
        assert!(svg.contains("5.00,5.00") && svg.contains("35.00,35.00"));
    }
}
