use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    clean_observation, step, Action, ContactResult, Observation, OperatingMode, RobotState, SimError, SimParams,
};
use crate::terrain::{TerrainGrid, TerrainParams};

/// 20 s at 50 Hz.
pub const HORIZON_STEPS: u64 = 1000;

const SPAWN_MARGIN_M: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Horizon,
    OutOfWorld,
    Fault,
}

#[derive(Debug, Clone, Copy)]
pub struct EnvStep {
    pub obs: Observation,
    pub contact: ContactResult,
    /// Ground truth felt during this step.
    pub terrain: TerrainParams,
    /// Planar displacement of this step, expressed in the body frame at its start.
    pub displacement: [f64; 2],
    pub stop: Option<StopReason>,
}

/// Episodic wrapper around [`step`] with its own random stream.
#[derive(Debug, Clone)]
pub struct Env {
    pub grid: Arc<TerrainGrid>,
    pub mode: OperatingMode,
    /// Commanded body-frame velocity and yaw rate.
    pub v_cmd: [f64; 2],
    pub omega_cmd: f64,
    pub params: SimParams,
    pub horizon: u64,
    state: RobotState,
    rng: ChaCha8Rng,
}

pub fn make_env(
    grid: Arc<TerrainGrid>,
    mode: OperatingMode,
    command: ([f64; 2], f64),
    seed: u64,
) -> Result<Env, SimError> {
    Env::new(grid, mode, command, seed, SimParams::default())
}

impl Env {
    pub fn new(
        grid: Arc<TerrainGrid>,
        mode: OperatingMode,
        command: ([f64; 2], f64),
        seed: u64,
        params: SimParams,
    ) -> Result<Self, SimError> {
        params.validate()?;
        let (w, h) = grid.extent();
        if w < 2.0 * SPAWN_MARGIN_M || h < 2.0 * SPAWN_MARGIN_M {
            return Err(SimError::Config(format!("world {w} x {h} m is smaller than 2 x 2 m")));
        }
        Ok(Self {
            grid,
            mode,
            v_cmd: command.0,
            omega_cmd: command.1,
            params,
            horizon: HORIZON_STEPS,
            state: RobotState::at_rest([w / 2.0, h / 2.0], 0.0),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    /// Spawn at rest, uniformly at least 1 m from the border, random heading.
    pub fn reset(&mut self) -> Observation {
        let (w, h) = self.grid.extent();
        let m = SPAWN_MARGIN_M;
        let x = self.rng.random_range(m..=w - m);
        let y = self.rng.random_range(m..=h - m);
        let psi = self.rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        self.reset_at([x, y], psi)
    }

    pub fn reset_at(&mut self, p: [f64; 2], psi: f64) -> Observation {
        self.state = RobotState::at_rest(p, psi);
        clean_observation(
            &self.state,
            [0.0; 2],
            &Action::default(),
            &ContactResult { stance: super::stance_mask(0.0), ..Default::default() },
        )
    }

    pub fn terrain_here(&self) -> Option<TerrainParams> {
        self.grid.query_params(self.state.p[0], self.state.p[1]).ok()
    }

    pub fn step(&mut self, action: &Action) -> EnvStep {
        let prev = self.state;
        let terrain = self.terrain_here().unwrap_or(TerrainParams { mu: f64::NAN, roughness: f64::NAN });
        match step(&prev, action, &self.grid, self.mode, &self.params, &mut self.rng) {
            Ok((next, obs, contact)) => {
                self.state = next;
                let d = [next.p[0] - prev.p[0], next.p[1] - prev.p[1]];
                let (s, c) = prev.psi.sin_cos();
                let displacement = [c * d[0] + s * d[1], -s * d[0] + c * d[1]];
                let stop = if self.grid.query_params(next.p[0], next.p[1]).is_err() {
                    Some(StopReason::OutOfWorld)
                } else if next.step_count >= self.horizon {
                    Some(StopReason::Horizon)
                } else {
                    None
                };
                EnvStep { obs, contact, terrain, displacement, stop }
            }
            Err(e) => EnvStep {
                obs: Observation::default(),
                contact: ContactResult::default(),
                terrain,
                displacement: [0.0; 2],
                stop: Some(match e {
                    SimError::OutOfWorld { .. } => StopReason::OutOfWorld,
                    _ => StopReason::Fault,
                }),
            },
        }
    }
}
