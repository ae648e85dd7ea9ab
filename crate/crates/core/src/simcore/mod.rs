//! Planar quadruped surrogate.
//!
//! The body is a rigid planar box driven by four feet. Stance feet exert a
//! traction force proportional to the difference between the commanded and
//! the actual foot velocity, projected onto the Coulomb friction cone. When
//! the cone saturates the foot slips, which is the only proprioceptive
//! channel through which friction becomes observable.

mod env;
mod log;

pub use env::{make_env, Env, EnvStep, StopReason, HORIZON_STEPS};
pub use log::{read_log, write_log_csv, LogRecord, TrajectoryLog, LOG_MAGIC, LOG_RECORD_F64S};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::terrain::{TerrainError, TerrainGrid, TerrainParams};

pub const N_FEET: usize = 4;
pub const ACTION_DIM: usize = 2 * N_FEET;
pub const OBS_DIM: usize = 27;

/// Observation layout offsets.
pub mod obs {
    pub const V: usize = 0;
    pub const OMEGA: usize = 2;
    pub const ACCEL: usize = 3;
    pub const PHASE: usize = 5;
    pub const PREV_ACTION: usize = 7;
    pub const SLIP: usize = 15;
    pub const STANCE: usize = 23;
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("simulation fault: non-finite state at step {step}")]
    NonFinite { step: u64 },
    #[error("robot left the world at ({x:.3}, {y:.3})")]
    OutOfWorld { x: f64, y: f64 },
    #[error("configuration: {0}")]
    Config(String),
}

/// Physical constants of the surrogate. One place, no literals at call sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    pub dt: f64,
    pub mass: f64,
    pub gravity: f64,
    /// Traction gain, N·s/m.
    pub k_t: f64,
    /// Linear body drag, N·s/m.
    pub c_d: f64,
    pub yaw_inertia: f64,
    /// Rotational drag, N·m·s.
    pub yaw_damping: f64,
    pub action_limit: f64,
    pub gait_freq: f64,
    /// Foot positions in the body frame: FL, FR, RL, RR.
    pub foot_offsets: [[f64; 2]; N_FEET],
    /// Per-foot disturbance std per unit roughness, N.
    pub rough_force: f64,
    pub obs_noise: f64,
    /// Below this speed the payload sticks.
    pub drag_static_speed: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 0.02,
            mass: 12.0,
            gravity: 9.81,
            k_t: 60.0,
            c_d: 50.0,
            yaw_inertia: 0.3,
            yaw_damping: 2.0,
            action_limit: 1.5,
            gait_freq: 2.0,
            foot_offsets: [[0.19, 0.12], [0.19, -0.12], [-0.19, 0.12], [-0.19, -0.12]],
            rough_force: 20.0,
            obs_noise: 0.05,
            drag_static_speed: 0.01,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let pos = [
            ("dt", self.dt),
            ("mass", self.mass),
            ("gravity", self.gravity),
            ("k_t", self.k_t),
            ("yaw_inertia", self.yaw_inertia),
            ("action_limit", self.action_limit),
            ("gait_freq", self.gait_freq),
        ];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::Config(format!("{name} must be positive")));
            }
        }
        let nonneg = [
            ("c_d", self.c_d),
            ("yaw_damping", self.yaw_damping),
            ("rough_force", self.rough_force),
            ("obs_noise", self.obs_noise),
            ("drag_static_speed", self.drag_static_speed),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::Config(format!("{name} must be non-negative")));
            }
        }
        Ok(())
    }

    /// Normal load on each stance foot (two feet share the weight).
    pub fn normal_load(&self) -> f64 {
        self.mass * self.gravity / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OperatingMode {
    FreeLocomotion,
    PayloadDragging { payload_mass_kg: f64 },
}

impl OperatingMode {
    pub fn dragging() -> Self {
        OperatingMode::PayloadDragging { payload_mass_kg: 1.0 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OperatingMode::FreeLocomotion => "locomotion",
            OperatingMode::PayloadDragging { .. } => "dragging",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    /// World position, m.
    pub p: [f64; 2],
    pub psi: f64,
    /// Body-frame velocity, m/s.
    pub v: [f64; 2],
    pub omega: f64,
    pub gait_phase: f64,
    pub step_count: u64,
}

impl RobotState {
    pub fn at_rest(p: [f64; 2], psi: f64) -> Self {
        Self { p, psi, v: [0.0; 2], omega: 0.0, gait_phase: 0.0, step_count: 0 }
    }

    pub fn is_finite(&self) -> bool {
        [self.p[0], self.p[1], self.psi, self.v[0], self.v[1], self.omega, self.gait_phase]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Per-foot commanded tangential velocity in the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub u: [[f64; 2]; N_FEET],
}

impl Action {
    /// Build from a flat `[u0x, u0y, u1x, ...]` slice, clamping each entry.
    pub fn from_slice(a: &[f64], limit: f64) -> Self {
        let mut u = [[0.0; 2]; N_FEET];
        for i in 0..N_FEET {
            for k in 0..2 {
                let x = a[2 * i + k];
                u[i][k] = if x.is_nan() { 0.0 } else { x.clamp(-limit, limit) };
            }
        }
        Self { u }
    }

    pub fn clamped(&self, limit: f64) -> Self {
        Self::from_slice(&self.flat(), limit)
    }

    pub fn flat(&self) -> [f64; ACTION_DIM] {
        let mut out = [0.0; ACTION_DIM];
        for i in 0..N_FEET {
            out[2 * i] = self.u[i][0];
            out[2 * i + 1] = self.u[i][1];
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ContactResult {
    pub force: [[f64; 2]; N_FEET],
    pub slip: [[f64; 2]; N_FEET],
    pub stance: [bool; N_FEET],
    pub saturated: [bool; N_FEET],
}

impl ContactResult {
    /// Σ|f_i|², the energy analog.
    pub fn force_sq(&self) -> f64 {
        self.force.iter().map(|f| f[0] * f[0] + f[1] * f[1]).sum()
    }

    pub fn slip_sq(&self) -> f64 {
        self.slip.iter().map(|s| s[0] * s[0] + s[1] * s[1]).sum()
    }
}

/// Normalized, noisy proprioceptive vector. Layout in [`obs`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub values: [f64; OBS_DIM],
}

impl Default for Observation {
    fn default() -> Self {
        Self { values: [0.0; OBS_DIM] }
    }
}

/// Fixed per-channel scales applied before the noise.
pub const V_SCALE: f64 = 1.0;
pub const OMEGA_SCALE: f64 = 1.0;
pub const ACCEL_SCALE: f64 = 0.25;
pub const ACTION_SCALE: f64 = 1.0 / 1.5;
pub const SLIP_SCALE: f64 = 4.0;

/// Channels carrying sensor readings; only these receive noise.
const NOISY: [usize; 13] = [0, 1, 2, 3, 4, 15, 16, 17, 18, 19, 20, 21, 22];

/// Feet {0, 3} stand in the first half of the gait cycle, {1, 2} in the second.
pub fn stance_mask(phase: f64) -> [bool; N_FEET] {
    let first = phase < 0.5;
    [first, !first, !first, first]
}

/// Project a desired tangential force onto the friction cone of radius `limit`.
/// Returns (realized force, saturated).
#[inline]
pub fn cone_project(f_des: [f64; 2], limit: f64) -> ([f64; 2], bool) {
    let mag = (f_des[0] * f_des[0] + f_des[1] * f_des[1]).sqrt();
    if mag <= limit {
        (f_des, false)
    } else {
        let s = limit / mag;
        ([f_des[0] * s, f_des[1] * s], true)
    }
}

/// Velocity of foot `r` (body frame) on a body moving with `v`, `omega`.
#[inline]
pub fn foot_velocity(v: [f64; 2], omega: f64, r: [f64; 2]) -> [f64; 2] {
    [v[0] - omega * r[1], v[1] + omega * r[0]]
}

/// Contact forces for one step, before any body update.
pub fn contact(state: &RobotState, action: &Action, mu: f64, params: &SimParams) -> ContactResult {
    let stance = stance_mask(state.gait_phase);
    let limit = mu * params.normal_load();
    let mut out = ContactResult { stance, ..Default::default() };
    for i in 0..N_FEET {
        if !stance[i] {
            continue;
        }
        let vf = foot_velocity(state.v, state.omega, params.foot_offsets[i]);
        let u = action.u[i];
        let f_des = [params.k_t * (u[0] - vf[0]), params.k_t * (u[1] - vf[1])];
        let (f, sat) = cone_project(f_des, limit);
        out.force[i] = f;
        out.saturated[i] = sat;
        if sat {
            out.slip[i] = [(f_des[0] - f[0]) / params.k_t, (f_des[1] - f[1]) / params.k_t];
        }
    }
    out
}

/// Advance one step. Draws a fixed number of normals from `rng` per call.
pub fn step<R: Rng + ?Sized>(
    state: &RobotState,
    action: &Action,
    grid: &TerrainGrid,
    mode: OperatingMode,
    params: &SimParams,
    rng: &mut R,
) -> Result<(RobotState, Observation, ContactResult), SimError> {
    let terrain = grid.query_params(state.p[0], state.p[1]).map_err(|e| match e {
        TerrainError::OutOfBounds { x, y, .. } => SimError::OutOfWorld { x, y },
        other => SimError::Config(other.to_string()),
    })?;
    step_with_terrain(state, action, terrain, mode, params, rng)
}

/// [`step`] with the terrain parameters supplied directly.
pub fn step_with_terrain<R: Rng + ?Sized>(
    state: &RobotState,
    action: &Action,
    terrain: TerrainParams,
    mode: OperatingMode,
    params: &SimParams,
    rng: &mut R,
) -> Result<(RobotState, Observation, ContactResult), SimError> {
    let action = action.clamped(params.action_limit);
    let mut rough = [0.0f64; 2 * N_FEET];
    for r in rough.iter_mut() {
        *r = rng.sample::<f64, _>(StandardNormal);
    }
    let mut noise = [0.0f64; NOISY.len()];
    for n in noise.iter_mut() {
        *n = rng.sample::<f64, _>(StandardNormal);
    }

    let c = contact(state, &action, terrain.mu, params);
    let sigma = params.rough_force * terrain.roughness;
    let mut force = [0.0; 2];
    let mut torque = 0.0;
    for i in 0..N_FEET {
        if !c.stance[i] {
            continue;
        }
        let f = [c.force[i][0] + sigma * rough[2 * i], c.force[i][1] + sigma * rough[2 * i + 1]];
        let r = params.foot_offsets[i];
        force[0] += f[0];
        force[1] += f[1];
        torque += r[0] * f[1] - r[1] * f[0];
    }
    force[0] -= params.c_d * state.v[0];
    force[1] -= params.c_d * state.v[1];
    torque -= params.yaw_damping * state.omega;

    if let OperatingMode::PayloadDragging { payload_mass_kg } = mode {
        let limit = terrain.mu * payload_mass_kg * params.gravity;
        let speed = (state.v[0] * state.v[0] + state.v[1] * state.v[1]).sqrt();
        if speed > params.drag_static_speed {
            force[0] -= limit * state.v[0] / speed;
            force[1] -= limit * state.v[1] / speed;
        } else {
            // static: cancel the applied force up to the friction limit
            let (cancel, _) = cone_project(force, limit);
            force[0] -= cancel[0];
            force[1] -= cancel[1];
        }
    }

    let dt = params.dt;
    let (v, w) = (state.v, state.omega);
    // body-frame translation picks up the rotating-frame term ω × v
    let acc = [force[0] / params.mass + w * v[1], force[1] / params.mass - w * v[0]];
    let v_new = [v[0] + dt * acc[0], v[1] + dt * acc[1]];
    let w_new = w + dt * torque / params.yaw_inertia;
    let psi_new = wrap_angle(state.psi + dt * w_new);
    // integrate position with the heading at mid-step
    let psi_mid = state.psi + 0.5 * dt * w_new;
    let (s, co) = psi_mid.sin_cos();
    let p_new = [state.p[0] + dt * (co * v_new[0] - s * v_new[1]), state.p[1] + dt * (s * v_new[0] + co * v_new[1])];
    let mut phase = state.gait_phase + dt * params.gait_freq;
    phase -= phase.floor();
    let next = RobotState {
        p: p_new,
        psi: psi_new,
        v: v_new,
        omega: w_new,
        gait_phase: phase,
        step_count: state.step_count + 1,
    };
    if !next.is_finite() {
        return Err(SimError::NonFinite { step: state.step_count });
    }
    let accel = [(v_new[0] - v[0]) / dt, (v_new[1] - v[1]) / dt];
    let mut o = clean_observation(&next, accel, &action, &c);
    for (k, &ch) in NOISY.iter().enumerate() {
        o.values[ch] += params.obs_noise * noise[k];
    }
    Ok((next, o, c))
}

/// Observation without sensor noise.
pub fn clean_observation(state: &RobotState, accel: [f64; 2], action: &Action, c: &ContactResult) -> Observation {
    let mut o = [0.0; OBS_DIM];
    o[obs::V] = state.v[0] * V_SCALE;
    o[obs::V + 1] = state.v[1] * V_SCALE;
    o[obs::OMEGA] = state.omega * OMEGA_SCALE;
    o[obs::ACCEL] = accel[0] * ACCEL_SCALE;
    o[obs::ACCEL + 1] = accel[1] * ACCEL_SCALE;
    let th = std::f64::consts::TAU * state.gait_phase;
    o[obs::PHASE] = th.sin();
    o[obs::PHASE + 1] = th.cos();
    for (k, a) in action.flat().iter().enumerate() {
        o[obs::PREV_ACTION + k] = a * ACTION_SCALE;
    }
    for i in 0..N_FEET {
        o[obs::SLIP + 2 * i] = c.slip[i][0] * SLIP_SCALE;
        o[obs::SLIP + 2 * i + 1] = c.slip[i][1] * SLIP_SCALE;
        o[obs::STANCE + i] = if c.stance[i] { 1.0 } else { 0.0 };
    }
    Observation { values: o }
}

pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    if (-PI..PI).contains(&a) {
        return a;
    }
    let r = (a + PI).rem_euclid(TAU) - PI;
    if r < -PI {
        r + TAU
    } else {
        r
    }
}

/// Scripted velocity tracker: every foot is commanded to
/// `v_cmd + kp·(v_cmd − v)`, with no yaw correction.
pub fn pd_tracking_action(state: &RobotState, v_cmd: [f64; 2], kp: f64, limit: f64) -> Action {
    let ux = v_cmd[0] + kp * (v_cmd[0] - state.v[0]);
    let uy = v_cmd[1] + kp * (v_cmd[1] - state.v[1]);
    Action::from_slice(&[ux, uy, ux, uy, ux, uy, ux, uy], limit)
}

/// Every foot commanded to its own current velocity: zero traction.
pub fn perfect_tracking_action(state: &RobotState, params: &SimParams) -> Action {
    let mut u = [[0.0; 2]; N_FEET];
    for (i, ui) in u.iter_mut().enumerate() {
        *ui = foot_velocity(state.v, state.omega, params.foot_offsets[i]);
    }
    Action { u }
}
