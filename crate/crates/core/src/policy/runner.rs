use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::estimator::{EstimatorNet, EstimatorOutput, History, EST_OUT};
use super::ppo::ActorCritic;
use super::{PolicyError, PolicyVariant};
use crate::nn::Matrix;
use crate::simcore::{Action, Env, EnvStep, Observation, RobotState, StopReason, ACTION_DIM, OBS_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    /// Gaussian sample around the mean (training).
    Sample,
    /// Mean action (deployment).
    Mean,
}

/// Everything produced by one environment in one vectorized step.
#[derive(Debug, Clone)]
pub struct StepRecord {
    /// Sampled action before clamping.
    pub action: [f64; ACTION_DIM],
    pub log_prob: f64,
    pub value: f64,
    pub step: EnvStep,
    /// State right after the step (before any reset).
    pub state_after: RobotState,
    /// Estimate the policy acted on.
    pub est_before: EstimatorOutput,
    /// Raw estimate from the history including this step's observation.
    pub est_after: EstimatorOutput,
    /// Normalized clamped actions a_t, a_{t−1}, a_{t−2}.
    pub recent_actions: [[f64; ACTION_DIM]; 3],
    /// Policy input of the post-step state, kept when the episode stopped so
    /// a truncated episode can be bootstrapped.
    pub terminal_input: Option<Vec<f32>>,
    /// Flattened history including this step's observation, when
    /// [`VecRunner::capture_history`] is set.
    pub history_after: Option<Vec<f32>>,
}

/// A batch of environments driven by one policy, each with its own
/// observation history and action-noise stream.
pub struct VecRunner {
    pub envs: Vec<Env>,
    pub hist: Vec<History>,
    pub obs: Vec<Observation>,
    pub est: Vec<EstimatorOutput>,
    prev: Vec<[[f64; ACTION_DIM]; 2]>,
    rngs: Vec<ChaCha8Rng>,
    /// Re-spawn environments after they stop.
    pub auto_reset: bool,
    pub capture_history: bool,
    pub alive: Vec<bool>,
}

/// Concatenate observation and (optionally) estimator features.
pub fn policy_input(variant: PolicyVariant, obs: &Observation, est: &EstimatorOutput, out: &mut [f32]) {
    for (d, s) in out[..OBS_DIM].iter_mut().zip(&obs.values) {
        *d = *s as f32;
    }
    if variant.observes_estimate() {
        out[OBS_DIM..OBS_DIM + EST_OUT].copy_from_slice(&est.policy_features());
    }
}

impl VecRunner {
    pub fn new(envs: Vec<Env>, history: usize, noise_seeds: &[u64]) -> Self {
        let n = envs.len();
        assert_eq!(noise_seeds.len(), n);
        Self {
            envs,
            hist: vec![History::new(history); n],
            obs: vec![Observation::default(); n],
            est: vec![EstimatorOutput::default(); n],
            prev: vec![[[0.0; ACTION_DIM]; 2]; n],
            rngs: noise_seeds.iter().map(|&s| ChaCha8Rng::seed_from_u64(s)).collect(),
            auto_reset: true,
            capture_history: false,
            alive: vec![true; n],
        }
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    fn start(&mut self, e: usize, obs: Observation) {
        self.hist[e].clear();
        self.hist[e].push(&obs.values);
        self.obs[e] = obs;
        self.prev[e] = [[0.0; ACTION_DIM]; 2];
        self.alive[e] = true;
    }

    /// Random spawn for every environment.
    pub fn reset_all(&mut self, est: &EstimatorNet) -> Result<(), PolicyError> {
        for e in 0..self.len() {
            let o = self.envs[e].reset();
            self.start(e, o);
        }
        self.refresh_estimates(est, None)
    }

    /// Spawn every environment at a given pose.
    pub fn reset_all_at(&mut self, poses: &[([f64; 2], f64)], est: &EstimatorNet) -> Result<(), PolicyError> {
        for (e, &(p, psi)) in poses.iter().enumerate() {
            let o = self.envs[e].reset_at(p, psi);
            self.start(e, o);
        }
        self.refresh_estimates(est, None)
    }

    fn history_matrix(&self, idx: &[usize], est: &EstimatorNet) -> Matrix<f32> {
        let dim = est.input_dim();
        let mut m = Matrix::zeros(idx.len(), dim);
        for (r, &e) in idx.iter().enumerate() {
            m.row_mut(r).copy_from_slice(self.hist[e].as_slice());
        }
        m
    }

    /// Recompute `est` for the listed environments (all when `None`).
    pub fn refresh_estimates(&mut self, est: &EstimatorNet, which: Option<&[usize]>) -> Result<(), PolicyError> {
        let all: Vec<usize> = (0..self.len()).collect();
        let idx = which.unwrap_or(&all);
        if idx.is_empty() {
            return Ok(());
        }
        let out = est.predict(&self.history_matrix(idx, est))?;
        for (&e, o) in idx.iter().zip(out) {
            self.est[e] = o;
        }
        Ok(())
    }

    /// Policy inputs of the current states.
    pub fn inputs(&self, variant: PolicyVariant) -> Matrix<f32> {
        let dim = variant.policy_input_dim();
        let mut m = Matrix::zeros(self.len(), dim);
        for e in 0..self.len() {
            policy_input(variant, &self.obs[e], &self.est[e], m.row_mut(e));
        }
        m
    }

    /// Advance every live environment by one step. Returns the policy
    /// inputs used and one record per environment (`None` for environments
    /// that are stopped and not auto-reset).
    pub fn step(
        &mut self,
        ac: &ActorCritic,
        est: &EstimatorNet,
        variant: PolicyVariant,
        mode: ActMode,
    ) -> Result<(Matrix<f32>, Vec<Option<StepRecord>>), PolicyError> {
        let n = self.len();
        let inputs = self.inputs(variant);
        let (mean, values) = ac.evaluate(&inputs)?;
        let mut sampled = vec![([0.0; ACTION_DIM], 0.0); n];
        for e in 0..n {
            sampled[e] = match mode {
                ActMode::Sample => ac.sample(mean.row(e), &mut self.rngs[e]),
                ActMode::Mean => {
                    let mut a = [0.0; ACTION_DIM];
                    for (k, v) in a.iter_mut().enumerate() {
                        *v = mean.row(e)[k] as f64;
                    }
                    (a, 0.0)
                }
            };
        }
        let alive = self.alive.clone();
        let results: Vec<Option<EnvStep>> = self
            .envs
            .par_iter_mut()
            .zip(sampled.par_iter())
            .zip(alive.par_iter())
            .map(|((env, (a, _)), &live)| {
                if !live {
                    return None;
                }
                let act = Action::from_slice(a, env.params.action_limit);
                Some(env.step(&act))
            })
            .collect();

        let mut records: Vec<Option<StepRecord>> = Vec::with_capacity(n);
        let mut pushed = Vec::new();
        for e in 0..n {
            let Some(step) = results[e] else {
                records.push(None);
                continue;
            };
            if step.stop != Some(StopReason::Fault) {
                self.hist[e].push(&step.obs.values);
                pushed.push(e);
            }
            let limit = self.envs[e].params.action_limit;
            let mut a_now = [0.0; ACTION_DIM];
            for (k, v) in a_now.iter_mut().enumerate() {
                *v = sampled[e].0[k].clamp(-limit, limit) / limit;
            }
            let recent = [a_now, self.prev[e][0], self.prev[e][1]];
            self.prev[e] = [a_now, self.prev[e][0]];
            records.push(Some(StepRecord {
                action: sampled[e].0,
                log_prob: sampled[e].1,
                value: values[e],
                step,
                state_after: *self.envs[e].state(),
                est_before: self.est[e],
                est_after: self.est[e],
                recent_actions: recent,
                terminal_input: None,
                history_after: None,
            }));
        }
        self.refresh_estimates(est, Some(&pushed))?;
        let mut restarted = Vec::new();
        for e in 0..n {
            let Some(rec) = records[e].as_mut() else { continue };
            rec.est_after = self.est[e];
            if self.capture_history && rec.step.stop != Some(StopReason::Fault) {
                rec.history_after = Some(self.hist[e].as_slice().to_vec());
            }
            self.obs[e] = rec.step.obs;
            if rec.step.stop.is_some() {
                if rec.step.stop != Some(StopReason::Fault) {
                    let mut row = vec![0.0f32; variant.policy_input_dim()];
                    policy_input(variant, &rec.step.obs, &self.est[e], &mut row);
                    rec.terminal_input = Some(row);
                }
                if self.auto_reset {
                    let o = self.envs[e].reset();
                    self.start(e, o);
                    restarted.push(e);
                } else {
                    self.alive[e] = false;
                }
            }
        }
        self.refresh_estimates(est, Some(&restarted))?;
        Ok((inputs, records))
    }
}
