use serde::{Deserialize, Serialize};

use crate::simcore::{ContactResult, RobotState, ACTION_DIM, N_FEET};

/// Reward weights and shape parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub w_vel: f64,
    pub sigma_vel: f64,
    pub w_yaw: f64,
    pub sigma_yaw: f64,
    pub w_swing_force: f64,
    pub delta_cf: f64,
    pub w_stance_slip: f64,
    pub delta_cv: f64,
    pub w_force: f64,
    pub w_action_rate: f64,
    pub w_action_curvature: f64,
    /// Weight of `|e − ê|²`; only applied for the active variant.
    pub w_estimation: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            w_vel: 1.0,
            sigma_vel: 0.25,
            w_yaw: 0.5,
            sigma_yaw: 0.25,
            w_swing_force: -4.0,
            delta_cf: 1e-3,
            w_stance_slip: -4.0,
            delta_cv: 1.0,
            w_force: -1e-4,
            w_action_rate: -0.1,
            w_action_curvature: -0.1,
            w_estimation: -0.3,
        }
    }
}

/// Individual weighted reward terms of one step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RewardTerms {
    pub vel: f64,
    pub yaw: f64,
    pub swing_force: f64,
    pub stance_slip: f64,
    pub force: f64,
    pub action_rate: f64,
    pub action_curvature: f64,
    pub estimation: f64,
}

impl RewardTerms {
    /// Everything except the estimation term.
    pub fn task(&self) -> f64 {
        self.vel
            + self.yaw
            + self.swing_force
            + self.stance_slip
            + self.force
            + self.action_rate
            + self.action_curvature
    }

    pub fn total(&self) -> f64 {
        self.task() + self.estimation
    }
}

/// Inputs to the reward of one transition.
pub struct RewardInputs<'a> {
    /// State after the step.
    pub state: &'a RobotState,
    pub v_cmd: [f64; 2],
    pub omega_cmd: f64,
    pub contact: &'a ContactResult,
    /// Normalized actions a_t, a_{t−1}, a_{t−2}.
    pub actions: [&'a [f64; ACTION_DIM]; 3],
    /// `(e, ê)` as (μ, roughness) pairs, when the estimation term applies.
    pub estimate: Option<([f64; 2], [f64; 2])>,
}

pub fn compute_reward(cfg: &RewardConfig, x: &RewardInputs) -> RewardTerms {
    let s = x.state;
    let dv = [s.v[0] - x.v_cmd[0], s.v[1] - x.v_cmd[1]];
    let dw = s.omega - x.omega_cmd;
    let mut swing = 0.0;
    let mut slip = 0.0;
    for i in 0..N_FEET {
        let f = x.contact.force[i];
        let sl = x.contact.slip[i];
        if x.contact.stance[i] {
            slip += 1.0 - (-cfg.delta_cv * (sl[0] * sl[0] + sl[1] * sl[1])).exp();
        } else {
            swing += 1.0 - (-cfg.delta_cf * (f[0] * f[0] + f[1] * f[1])).exp();
        }
    }
    let [a0, a1, a2] = x.actions;
    let mut rate = 0.0;
    let mut curv = 0.0;
    for k in 0..ACTION_DIM {
        rate += (a1[k] - a0[k]).powi(2);
        curv += (a2[k] - 2.0 * a1[k] + a0[k]).powi(2);
    }
    let estimation = match x.estimate {
        Some((e, e_hat)) => cfg.w_estimation * ((e[0] - e_hat[0]).powi(2) + (e[1] - e_hat[1]).powi(2)),
        None => 0.0,
    };
    RewardTerms {
        vel: cfg.w_vel * (-(dv[0] * dv[0] + dv[1] * dv[1]) / cfg.sigma_vel).exp(),
        yaw: cfg.w_yaw * (-(dw * dw) / cfg.sigma_yaw).exp(),
        swing_force: cfg.w_swing_force * swing,
        stance_slip: cfg.w_stance_slip * slip,
        force: cfg.w_force * x.contact.force_sq(),
        action_rate: cfg.w_action_rate * rate,
        action_curvature: cfg.w_action_curvature * curv,
        estimation,
    }
}
