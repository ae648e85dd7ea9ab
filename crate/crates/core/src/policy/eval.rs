use std::sync::Arc;

use super::reward::{compute_reward, RewardConfig, RewardInputs};
use super::runner::{ActMode, VecRunner};
use super::train::{build_envs, noise_seeds, TrainedPolicy};
use super::PolicyError;
use crate::simcore::{OperatingMode, SimParams, StopReason};
use crate::terrain::TerrainGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub n_agents: usize,
    pub mode: OperatingMode,
    pub act: ActMode,
    pub sim: SimParams,
    pub v_cmd: [f64; 2],
    pub omega_cmd: f64,
    /// Fixed spawn poses, one per agent; random spawns when `None`.
    pub spawn: Option<Vec<([f64; 2], f64)>>,
    /// Episode length override.
    pub horizon_steps: Option<u64>,
    pub reward: RewardConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_agents: 50,
            mode: OperatingMode::FreeLocomotion,
            act: ActMode::Mean,
            sim: SimParams::default(),
            v_cmd: [1.0, 0.0],
            omega_cmd: 0.0,
            spawn: None,
            horizon_steps: None,
            reward: RewardConfig::default(),
        }
    }
}

/// Averages over all steps of all agents (one episode each).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalStats {
    pub mu_mse: f64,
    pub rough_mse: f64,
    /// Mean velocity-tracking reward term per step.
    pub vel_reward: f64,
    /// Mean task reward per step (no estimation term).
    pub task_reward: f64,
    /// Mean Σ|f|² per step.
    pub energy: f64,
    pub steps: usize,
    pub faults: usize,
    /// Net planar displacement and elapsed time of each agent's episode.
    pub distances: Vec<f64>,
    pub durations: Vec<f64>,
}

/// Run one episode per agent with the trained policy and its estimator.
pub fn evaluate(
    policy: &TrainedPolicy,
    grids: &[Arc<TerrainGrid>],
    cfg: &EvalConfig,
    seed: u64,
) -> Result<EvalStats, PolicyError> {
    if grids.is_empty() || cfg.n_agents == 0 {
        return Err(PolicyError::Config("evaluation needs terrains and agents".into()));
    }
    let n = cfg.n_agents;
    let mut envs = build_envs(grids, n, &cfg.sim, (cfg.v_cmd, cfg.omega_cmd), 0.0, seed)?;
    for e in envs.iter_mut() {
        e.mode = cfg.mode;
        if let Some(h) = cfg.horizon_steps {
            e.horizon = h;
        }
    }
    let mut runner = VecRunner::new(envs, policy.estimator.history, &noise_seeds(seed, n));
    runner.auto_reset = false;
    match &cfg.spawn {
        Some(poses) => {
            if poses.len() != n {
                return Err(PolicyError::Config("one spawn pose per agent required".into()));
            }
            runner.reset_all_at(poses, &policy.estimator)?
        }
        None => runner.reset_all(&policy.estimator)?,
    }
    let start: Vec<[f64; 2]> = runner.envs.iter().map(|e| e.state().p).collect();
    let mut end = start.clone();
    let mut durations = vec![0.0; n];
    let mut s = EvalStats::default();
    while runner.alive.iter().any(|&a| a) {
        let (_, recs) = runner.step(&policy.ac, &policy.estimator, policy.variant, cfg.act)?;
        for (e, rec) in recs.into_iter().enumerate() {
            let Some(rec) = rec else { continue };
            if rec.step.stop == Some(StopReason::Fault) {
                s.faults += 1;
                continue;
            }
            end[e] = rec.state_after.p;
            durations[e] = rec.state_after.step_count as f64 * cfg.sim.dt;
            let t = rec.step.terrain;
            let est = rec.est_after.clamped();
            let terms = compute_reward(
                &cfg.reward,
                &RewardInputs {
                    state: &rec.state_after,
                    v_cmd: cfg.v_cmd,
                    omega_cmd: cfg.omega_cmd,
                    contact: &rec.step.contact,
                    actions: [&rec.recent_actions[0], &rec.recent_actions[1], &rec.recent_actions[2]],
                    estimate: None,
                },
            );
            s.mu_mse += (est.mu - t.mu).powi(2);
            s.rough_mse += (est.rough - t.roughness).powi(2);
            s.vel_reward += terms.vel;
            s.task_reward += terms.task();
            s.energy += rec.step.contact.force_sq();
            s.steps += 1;
        }
    }
    let k = s.steps.max(1) as f64;
    s.mu_mse /= k;
    s.rough_mse /= k;
    s.vel_reward /= k;
    s.task_reward /= k;
    s.energy /= k;
    s.distances = start.iter().zip(&end).map(|(a, b)| ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()).collect();
    s.durations = durations;
    Ok(s)
}
