use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::estimator::{estimator_update, EstimatorNet, EstimatorTarget};
use super::gae::compute_gae;
use super::normalizer::RewardNormalizer;
use super::ppo::{ppo_update, ActorCritic, PpoBatch, PpoOptim};
use super::reward::{compute_reward, RewardConfig, RewardInputs};
use super::runner::{ActMode, VecRunner};
use super::{PolicyError, PolicyVariant, PpoConfig};
use crate::nn::{AdamConfig, AdamState, Checkpoint, CheckpointEntry, Matrix, NnError};
use crate::simcore::{Env, OperatingMode, SimParams, StopReason, ACTION_DIM};
use crate::terrain::noise::hash_key;
use crate::terrain::TerrainGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub ppo: PpoConfig,
    pub reward: RewardConfig,
    pub sim: SimParams,
    pub policy_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    pub estimator_hidden: Vec<usize>,
    /// Observation history length fed to the estimator.
    pub history: usize,
    pub estimator_lr: f64,
    pub estimator_epochs: usize,
    pub estimator_minibatches: usize,
    pub v_cmd: [f64; 2],
    pub omega_cmd: f64,
    /// Fraction of training environments that drag the payload.
    pub drag_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            ppo: PpoConfig::default(),
            reward: RewardConfig::default(),
            sim: SimParams::default(),
            policy_hidden: vec![256, 256],
            value_hidden: vec![256, 256],
            estimator_hidden: vec![128, 128],
            history: 25,
            estimator_lr: 1e-3,
            estimator_epochs: 1,
            estimator_minibatches: 4,
            v_cmd: [1.0, 0.0],
            omega_cmd: 0.0,
            drag_fraction: 0.0,
        }
    }
}

/// Per-iteration training statistics (rollout averages, before the update).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CurveRow {
    pub iteration: usize,
    pub task_reward: f64,
    /// Mean velocity-tracking term.
    pub vel_reward: f64,
    pub est_mse_mu: f64,
    pub est_mse_rough: f64,
    pub energy: f64,
}

/// A trained policy with its estimator, ready to deploy.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPolicy {
    pub variant: PolicyVariant,
    pub ac: ActorCritic,
    pub estimator: EstimatorNet,
}

pub struct TrainOutput {
    pub policy: TrainedPolicy,
    pub curves: Vec<CurveRow>,
    /// Episodes aborted by a simulation fault.
    pub faults: usize,
}

impl TrainedPolicy {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::default();
        c.push("meta", CheckpointEntry::Vector(vec![self.variant.tag() as f64, self.estimator.history as f64]));
        c.push("policy", CheckpointEntry::Net32(self.ac.policy.clone()));
        c.push("value", CheckpointEntry::Net32(self.ac.value.clone()));
        c.push("log_std", CheckpointEntry::Vector(self.ac.log_std.clone()));
        c.push("estimator", CheckpointEntry::Net32(self.estimator.net.clone()));
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self, PolicyError> {
        let meta = c.vector("meta")?;
        if meta.len() != 2 {
            return Err(NnError::Checkpoint("policy meta must have 2 entries".into()).into());
        }
        let variant = PolicyVariant::from_tag(meta[0] as u8)
            .ok_or_else(|| NnError::Checkpoint(format!("unknown variant tag {}", meta[0])))?;
        let policy = c.net32("policy")?.clone();
        if policy.input_dim() != variant.policy_input_dim() || policy.output_dim() != ACTION_DIM {
            return Err(NnError::Checkpoint("policy network shape does not match variant".into()).into());
        }
        Ok(Self {
            variant,
            ac: ActorCritic { policy, value: c.net32("value")?.clone(), log_std: c.vector("log_std")?.to_vec() },
            estimator: EstimatorNet { net: c.net32("estimator")?.clone(), history: meta[1] as usize },
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        Ok(self.to_checkpoint().save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

pub fn write_curves_csv<W: Write>(rows: &[CurveRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "iteration,task_reward,vel_reward,est_mse_mu,est_mse_rough,energy")?;
    for r in rows {
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6},{:.6},{:.4}",
            r.iteration, r.task_reward, r.vel_reward, r.est_mse_mu, r.est_mse_rough, r.energy
        )?;
    }
    Ok(())
}

pub(crate) fn stream_seed(seed: u64, tag: u64, i: u64) -> u64 {
    hash_key(seed, &[tag, i])
}

pub(crate) fn build_envs(
    grids: &[Arc<TerrainGrid>],
    n: usize,
    sim: &SimParams,
    command: ([f64; 2], f64),
    drag_fraction: f64,
    seed: u64,
) -> Result<Vec<Env>, PolicyError> {
    (0..n)
        .map(|i| {
            let mode = if (i as f64 + 0.5) / n as f64 > 1.0 - drag_fraction {
                OperatingMode::dragging()
            } else {
                OperatingMode::FreeLocomotion
            };
            let g = grids[i % grids.len()].clone();
            Ok(Env::new(g, mode, command, stream_seed(seed, 1, i as u64), sim.clone())?)
        })
        .collect()
}

/// Free-locomotion environments spread over `grids`, seeded as in training.
pub fn build_envs_for(
    grids: &[Arc<TerrainGrid>],
    n: usize,
    sim: &SimParams,
    command: ([f64; 2], f64),
    seed: u64,
) -> Result<Vec<Env>, PolicyError> {
    build_envs(grids, n, sim, command, 0.0, seed)
}

/// Per-environment action-noise seeds.
pub fn noise_seeds(seed: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| stream_seed(seed, 3, i)).collect()
}

pub fn train(
    variant: PolicyVariant,
    grids: &[Arc<TerrainGrid>],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutput, PolicyError> {
    train_with_progress(variant, grids, cfg, seed, &mut |_| {})
}

pub fn train_with_progress(
    variant: PolicyVariant,
    grids: &[Arc<TerrainGrid>],
    cfg: &TrainConfig,
    seed: u64,
    progress: &mut dyn FnMut(&CurveRow),
) -> Result<TrainOutput, PolicyError> {
    cfg.ppo.validate()?;
    cfg.sim.validate()?;
    if grids.is_empty() {
        return Err(PolicyError::Config("no training terrains".into()));
    }
    let mut mus: Vec<f64> = grids.iter().flat_map(|g| g.cells.iter().map(|c| c.mu)).collect();
    mus.sort_by(f64::total_cmp);
    mus.dedup();
    if mus.len() < 2 {
        return Err(PolicyError::Config("training terrains must contain at least two distinct friction values".into()));
    }
    if cfg.history == 0 {
        return Err(PolicyError::Config("history must be positive".into()));
    }
    let p = &cfg.ppo;
    let n = p.n_envs;
    let mut init_rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 0, 0));
    let mut ac = ActorCritic::new(
        variant.policy_input_dim(),
        &cfg.policy_hidden,
        &cfg.value_hidden,
        p.init_log_std,
        &mut init_rng,
    )?;
    let mut est = EstimatorNet::new(cfg.history, &cfg.estimator_hidden, &mut init_rng)?;
    let mut opt = PpoOptim::new(&ac, p.lr);
    let mut est_opt = AdamState::new(est.net.param_count(), AdamConfig { lr: cfg.estimator_lr, ..Default::default() });
    let mut update_rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 2, 0));
    let envs = build_envs(grids, n, &cfg.sim, (cfg.v_cmd, cfg.omega_cmd), cfg.drag_fraction, seed)?;
    let mut runner = VecRunner::new(envs, cfg.history, &noise_seeds(seed, n));
    runner.reset_all(&est)?;
    let mut normalizer = RewardNormalizer::new(n, p.gamma);
    let mut curves = Vec::with_capacity(cfg.iterations);
    let mut faults = 0;
    let t_len = p.steps_per_rollout;
    let in_dim = variant.policy_input_dim();
    let est_dim = est.input_dim();

    runner.capture_history = true;

    for it in 0..cfg.iterations {
        runner.refresh_estimates(&est, None)?;
        let mut inputs = Matrix::<f32>::zeros(t_len * n, in_dim);
        let mut actions = vec![0.0; t_len * n * ACTION_DIM];
        let mut logp = vec![0.0; t_len * n];
        let mut values = vec![vec![0.0; n]; t_len];
        let mut rewards = vec![vec![0.0; n]; t_len];
        let mut dones = vec![vec![false; n]; t_len];
        let mut boot_rows: Vec<(usize, usize, Vec<f32>)> = Vec::new();
        let mut est_x: Vec<f32> = Vec::with_capacity(t_len * n * est_dim);
        let mut est_t = Vec::with_capacity(t_len * n);
        let (mut task_sum, mut vel_sum, mut energy_sum, mut mse_mu, mut mse_r) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let mut n_steps = 0usize;

        for t in 0..t_len {
            let (inp, recs) = runner.step(&ac, &est, variant, ActMode::Sample)?;
            for (e, rec) in recs.into_iter().enumerate() {
                let rec = rec.expect("training runner auto-resets");
                let row = t * n + e;
                inputs.row_mut(row).copy_from_slice(inp.row(e));
                actions[row * ACTION_DIM..(row + 1) * ACTION_DIM].copy_from_slice(&rec.action);
                logp[row] = rec.log_prob;
                values[t][e] = rec.value;
                if rec.step.stop == Some(StopReason::Fault) {
                    faults += 1;
                    dones[t][e] = true;
                    continue;
                }
                let terrain = rec.step.terrain;
                let e_hat = rec.est_after.clamped();
                let terms = compute_reward(
                    &cfg.reward,
                    &RewardInputs {
                        state: &rec.state_after,
                        v_cmd: cfg.v_cmd,
                        omega_cmd: cfg.omega_cmd,
                        contact: &rec.step.contact,
                        actions: [&rec.recent_actions[0], &rec.recent_actions[1], &rec.recent_actions[2]],
                        estimate: variant
                            .estimation_reward()
                            .then_some(([terrain.mu, terrain.roughness], [e_hat.mu, e_hat.rough])),
                    },
                );
                rewards[t][e] = terms.total();
                task_sum += terms.task();
                vel_sum += terms.vel;
                energy_sum += rec.step.contact.force_sq();
                mse_mu += (e_hat.mu - terrain.mu).powi(2);
                mse_r += (e_hat.rough - terrain.roughness).powi(2);
                n_steps += 1;
                if let Some(h) = rec.history_after {
                    est_x.extend_from_slice(&h);
                    est_t.push(EstimatorTarget { mu: terrain.mu, rough: terrain.roughness, dx: rec.step.displacement });
                }
                if rec.step.stop.is_some() {
                    dones[t][e] = true;
                    if let Some(row) = rec.terminal_input {
                        boot_rows.push((t, e, row));
                    }
                }
            }
        }

        if p.normalize_rewards {
            normalizer.normalize(&mut rewards, &dones);
        }
        // truncated episodes: fold γ·V(s_final) into the last reward
        if !boot_rows.is_empty() {
            let mut m = Matrix::<f32>::zeros(boot_rows.len(), in_dim);
            for (r, (_, _, row)) in boot_rows.iter().enumerate() {
                m.row_mut(r).copy_from_slice(row);
            }
            let (_, v) = ac.evaluate(&m)?;
            for ((t, e, _), v) in boot_rows.iter().zip(v) {
                rewards[*t][*e] += p.gamma * v;
            }
        }
        let (_, last_values) = ac.evaluate(&runner.inputs(variant))?;
        let mut advantages = vec![0.0; t_len * n];
        let mut returns = vec![0.0; t_len * n];
        for e in 0..n {
            let r: Vec<f64> = (0..t_len).map(|t| rewards[t][e]).collect();
            let v: Vec<f64> = (0..t_len).map(|t| values[t][e]).collect();
            let d: Vec<bool> = (0..t_len).map(|t| dones[t][e]).collect();
            let (a, ret) = compute_gae(&r, &v, &d, last_values[e], p.gamma, p.lambda)?;
            for t in 0..t_len {
                advantages[t * n + e] = a[t];
                returns[t * n + e] = ret[t];
            }
        }
        let batch = PpoBatch { inputs, actions, old_log_probs: logp, advantages, returns };
        ppo_update(&mut ac, &mut opt, &batch, p, &mut update_rng)?;

        if !est_t.is_empty() {
            let x = Matrix::from_vec(est_t.len(), est_dim, est_x)?;
            estimator_update(
                &mut est,
                &mut est_opt,
                &x,
                &est_t,
                cfg.estimator_epochs,
                cfg.estimator_minibatches,
                p.max_grad_norm,
                &mut update_rng,
            )?;
        }

        let k = n_steps.max(1) as f64;
        let row = CurveRow {
            iteration: it,
            task_reward: task_sum / k,
            vel_reward: vel_sum / k,
            est_mse_mu: mse_mu / k,
            est_mse_rough: mse_r / k,
            energy: energy_sum / k,
        };
        progress(&row);
        curves.push(row);
    }

    Ok(TrainOutput { policy: TrainedPolicy { variant, ac, estimator: est }, curves, faults })
}
