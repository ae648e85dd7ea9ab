//! Per-mode traversal cost of friction, measured by rollouts, and the
//! conversion of dense friction maps into cost maps.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{evaluate, EvalConfig, PolicyError, TrainedPolicy};
use crate::simcore::{OperatingMode, SimParams};
use crate::terrain::presets::CELL_SIZE_M;
use crate::terrain::{TerrainGrid, MU_MAX, MU_MIN};

/// Cost assigned when agents barely move (s/m).
pub const COST_CAP: f64 = 200.0;
pub const MU_GRID_POINTS: usize = 12;
const FAULT_RETRIES: u64 = 3;

#[derive(Debug, Error)]
pub enum CostError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("cost curve: {0}")]
    Curve(String),
    #[error("simulation kept faulting at mu = {0}")]
    Faults(f64),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Seconds needed to traverse one meter as a function of friction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostCurve {
    pub mode: OperatingMode,
    pub mu_grid: Vec<f64>,
    pub cost: Vec<f64>,
    /// Mean realized speed at each grid point (m/s).
    pub speed: Vec<f64>,
    pub n_agents: usize,
    pub horizon_s: f64,
    pub policy_id: String,
}

/// `n` evenly spaced friction values covering [0.25, 3.0].
pub fn mu_grid(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![MU_MIN];
    }
    (0..n).map(|i| MU_MIN + (MU_MAX - MU_MIN) * i as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostProtocol {
    pub n_agents: usize,
    pub horizon_s: f64,
    pub v_cmd: f64,
    /// Roughness of the uniform test terrain.
    pub roughness: f64,
    pub sim: SimParams,
}

impl Default for CostProtocol {
    fn default() -> Self {
        Self { n_agents: 50, horizon_s: 20.0, v_cmd: 1.0, roughness: 0.0, sim: SimParams::default() }
    }
}

/// Cost from a mean traveled distance over `horizon_s`, capped for
/// agents that barely move.
pub fn cost_from_distance(mean_distance: f64, horizon_s: f64) -> f64 {
    if !(mean_distance > 0.0) {
        return COST_CAP;
    }
    (horizon_s / mean_distance).min(COST_CAP)
}

/// Roll the policy out on uniform terrain at every grid friction and
/// record seconds per meter.
pub fn measure_cost_curve(
    policy: &TrainedPolicy,
    policy_id: &str,
    mode: OperatingMode,
    mu_grid: &[f64],
    protocol: &CostProtocol,
    seed: u64,
) -> Result<CostCurve, CostError> {
    if mu_grid.is_empty() || protocol.n_agents == 0 || !(protocol.horizon_s > 0.0) {
        return Err(CostError::Curve("empty grid, no agents or non-positive horizon".into()));
    }
    let sim = protocol.sim.clone();
    let steps = (protocol.horizon_s / sim.dt).round() as u64;
    // room for the full horizon in every direction
    let half = protocol.v_cmd.abs() * 1.5 * protocol.horizon_s + 2.0;
    let cells = (2.0 * half / CELL_SIZE_M).ceil() as usize;
    let spawn: Vec<([f64; 2], f64)> = (0..protocol.n_agents)
        .map(|i| ([half, half], std::f64::consts::TAU * i as f64 / protocol.n_agents as f64))
        .collect();
    sim.validate().map_err(PolicyError::from)?;
    let (mut cost, mut speed) = (Vec::new(), Vec::new());
    for (k, &mu) in mu_grid.iter().enumerate() {
        let grid = Arc::new(TerrainGrid::uniform(cells, cells, CELL_SIZE_M, mu, protocol.roughness));
        let cfg = EvalConfig {
            n_agents: protocol.n_agents,
            mode,
            sim: sim.clone(),
            v_cmd: [protocol.v_cmd, 0.0],
            spawn: Some(spawn.clone()),
            horizon_steps: Some(steps),
            ..Default::default()
        };
        let mut done = None;
        for attempt in 0..=FAULT_RETRIES {
            let s = crate::terrain::noise::hash_key(seed, &[k as u64, attempt]);
            let stats = evaluate(policy, std::slice::from_ref(&grid), &cfg, s)?;
            if stats.faults == 0 {
                done = Some(stats);
                break;
            }
        }
        let stats = done.ok_or(CostError::Faults(mu))?;
        let mean_d = stats.distances.iter().sum::<f64>() / stats.distances.len() as f64;
        cost.push(cost_from_distance(mean_d, protocol.horizon_s));
        speed.push(mean_d / protocol.horizon_s);
    }
    Ok(CostCurve {
        mode,
        mu_grid: mu_grid.to_vec(),
        cost,
        speed,
        n_agents: protocol.n_agents,
        horizon_s: protocol.horizon_s,
        policy_id: policy_id.to_string(),
    })
}

impl CostCurve {
    pub fn validate(&self) -> Result<(), CostError> {
        if self.mu_grid.is_empty() || self.mu_grid.len() != self.cost.len() {
            return Err(CostError::Curve("grid and cost lengths differ or are empty".into()));
        }
        if self.mu_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CostError::Curve("friction grid must be strictly increasing".into()));
        }
        if self.cost.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(CostError::Curve("costs must be positive and finite".into()));
        }
        Ok(())
    }

    /// Piecewise-linear interpolation, clamped to the end values.
    pub fn cost_at(&self, mu: f64) -> f64 {
        cost_from_mu(mu, self)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "# mode={} n_agents={} horizon_s={} policy={}",
            self.mode.name(),
            self.n_agents,
            self.horizon_s,
            self.policy_id
        )?;
        writeln!(w, "mu,seconds_per_meter")?;
        for (m, c) in self.mu_grid.iter().zip(&self.cost) {
            writeln!(w, "{m:.6},{c:.6}")?;
        }
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<Self, CostError> {
        let bad = |m: &str| CostError::Curve(m.to_string());
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file"))?;
        let meta: std::collections::HashMap<&str, &str> =
            header.trim_start_matches('#').split_whitespace().filter_map(|kv| kv.split_once('=')).collect();
        let mode = match meta.get("mode").copied() {
            Some("locomotion") => OperatingMode::FreeLocomotion,
            Some("dragging") => OperatingMode::dragging(),
            _ => return Err(bad("header lacks a known mode")),
        };
        if lines.next() != Some("mu,seconds_per_meter") {
            return Err(bad("missing column header"));
        }
        let (mut mu_grid, mut cost) = (Vec::new(), Vec::new());
        for l in lines.filter(|l| !l.trim().is_empty()) {
            let (a, b) = l.split_once(',').ok_or_else(|| bad("expected two columns"))?;
            mu_grid.push(a.trim().parse().map_err(|_| bad("bad mu"))?);
            cost.push(b.trim().parse().map_err(|_| bad("bad cost"))?);
        }
        let c = CostCurve {
            mode,
            speed: cost.iter().map(|c: &f64| 1.0 / c).collect(),
            mu_grid,
            cost,
            n_agents: meta.get("n_agents").and_then(|v| v.parse().ok()).unwrap_or(0),
            horizon_s: meta.get("horizon_s").and_then(|v| v.parse().ok()).unwrap_or(0.0),
            policy_id: meta.get("policy").unwrap_or(&"").to_string(),
        };
        c.validate()?;
        Ok(c)
    }
}

pub fn cost_from_mu(mu: f64, curve: &CostCurve) -> f64 {
    let (g, c) = (&curve.mu_grid, &curve.cost);
    if mu <= g[0] || mu.is_nan() {
        return c[0];
    }
    let last = g.len() - 1;
    if mu >= g[last] {
        return c[last];
    }
    let i = g.partition_point(|&x| x <= mu) - 1;
    let t = (mu - g[i]) / (g[i + 1] - g[i]);
    c[i] + t * (c[i + 1] - c[i])
}

/// Grid of per-cell traversal costs (seconds to cross one cell edge).
/// Untraversable cells hold `f64::INFINITY`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMap {
    pub rows: usize,
    pub cols: usize,
    pub cell_m: f64,
    pub cost: Vec<f64>,
    pub provenance: String,
}

impl CostMap {
    pub fn new(rows: usize, cols: usize, cell_m: f64, cost: Vec<f64>) -> Self {
        assert_eq!(cost.len(), rows * cols);
        Self { rows, cols, cell_m, cost, provenance: String::new() }
    }

    pub fn uniform(rows: usize, cols: usize, cell_m: f64, c: f64) -> Self {
        Self::new(rows, cols, cell_m, vec![c; rows * cols])
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.cost[row * self.cols + col]
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in 0..self.rows {
            let line: Vec<String> = (0..self.cols)
                .map(|c| {
                    let v = self.at(r, c);
                    if v.is_finite() {
                        format!("{v:.6}")
                    } else {
                        "inf".into()
                    }
                })
                .collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Average μ̂ over `downsample`² pixel blocks (partial blocks at the
/// right/bottom average the pixels they cover) and convert each block to
/// a cell cost `cost(μ̂) · cell edge`.
pub fn build_cost_map(
    mu: &[f32],
    width: usize,
    height: usize,
    meters_per_pixel: f64,
    curve: &CostCurve,
    downsample: usize,
) -> Result<CostMap, CostError> {
    if mu.len() != width * height || width == 0 || height == 0 {
        return Err(CostError::Curve("μ map size does not match its dimensions".into()));
    }
    if downsample == 0 || !(meters_per_pixel > 0.0) {
        return Err(CostError::Curve("downsample and pixel size must be positive".into()));
    }
    curve.validate()?;
    let (cols, rows) = (width.div_ceil(downsample), height.div_ceil(downsample));
    let cell_m = meters_per_pixel * downsample as f64;
    let mut cost = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let (mut s, mut n) = (0.0, 0usize);
            for y in r * downsample..((r + 1) * downsample).min(height) {
                for x in c * downsample..((c + 1) * downsample).min(width) {
                    s += mu[y * width + x] as f64;
                    n += 1;
                }
            }
            cost.push(cost_from_mu(s / n as f64, curve) * cell_m);
        }
    }
    let mut m = CostMap::new(rows, cols, cell_m, cost);
    m.provenance = format!("mode={} policy={}", curve.mode.name(), curve.policy_id);
    Ok(m)
}
