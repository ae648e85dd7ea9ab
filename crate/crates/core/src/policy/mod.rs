//! Policy learning: PPO over the planar surrogate with a concurrently
//! trained proprioceptive estimator, in three variants.
//!
//! * `NoSE`: the policy sees observations only; an estimator is still
//!   trained alongside (for evaluation) but never feeds the policy.
//! * `PassiveSE`: the estimator output is appended to the policy input.
//! * `ActiveSE`: as `PassiveSE`, and the reward also penalizes the current
//!   estimation error, so the policy is paid to make terrain observable.

mod estimator;
mod eval;
mod gae;
mod normalizer;
mod ppo;
mod reward;
mod runner;
mod train;

pub use estimator::{
    estimator_update, shuffle, EstimatorLosses, EstimatorNet, EstimatorOutput, EstimatorTarget, History, DX_SCALE,
    EST_OUT,
};
pub use eval::{evaluate, EvalConfig, EvalStats};
pub use gae::{compute_gae, normalize_advantages};
pub use normalizer::{RewardNormalizer, RunningMeanStd};
pub use ppo::{clipped_objective, ppo_loss_and_grad, ppo_update, ActorCritic, PpoBatch, PpoGrads, PpoLosses, PpoOptim};
pub use reward::{compute_reward, RewardConfig, RewardInputs, RewardTerms};
pub use runner::{ActMode, StepRecord, VecRunner};
pub use train::{
    build_envs_for, noise_seeds, train, train_with_progress, write_curves_csv, CurveRow, TrainConfig, TrainOutput,
    TrainedPolicy,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::NnError;
use crate::simcore::SimError;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyVariant {
    NoSE,
    PassiveSE,
    ActiveSE,
}

impl PolicyVariant {
    pub const ALL: [PolicyVariant; 3] = [Self::NoSE, Self::PassiveSE, Self::ActiveSE];

    pub fn observes_estimate(self) -> bool {
        !matches!(self, Self::NoSE)
    }

    pub fn estimation_reward(self) -> bool {
        matches!(self, Self::ActiveSE)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::NoSE => "no-se",
            Self::PassiveSE => "passive-se",
            Self::ActiveSE => "active-se",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Self::NoSE => 0,
            Self::PassiveSE => 1,
            Self::ActiveSE => 2,
        }
    }

    pub fn from_tag(t: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.tag() == t)
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }

    /// Policy input width for this variant.
    pub fn policy_input_dim(self) -> usize {
        crate::simcore::OBS_DIM + if self.observes_estimate() { EST_OUT } else { 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub steps_per_rollout: usize,
    pub epochs: usize,
    pub minibatches: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub clip: f64,
    pub lr: f64,
    pub normalize_rewards: bool,
    pub n_envs: usize,
    /// Global gradient-norm clip.
    pub max_grad_norm: f64,
    pub init_log_std: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            steps_per_rollout: 21,
            epochs: 5,
            minibatches: 4,
            entropy_coef: 0.01,
            value_coef: 1.0,
            clip: 0.2,
            lr: 1e-3,
            normalize_rewards: true,
            n_envs: 256,
            max_grad_norm: 1.0,
            init_log_std: 0.5f64.ln(),
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: &str| Err(PolicyError::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0 && self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad("gamma and lambda must lie in (0, 1]");
        }
        if self.steps_per_rollout == 0 || self.epochs == 0 || self.minibatches == 0 || self.n_envs == 0 {
            return bad("rollout length, epochs, minibatches and env count must be positive");
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("clip must lie in (0, 1)");
        }
        if !(self.lr > 0.0 && self.entropy_coef >= 0.0 && self.value_coef > 0.0 && self.max_grad_norm > 0.0) {
            return bad("lr, value_coef and max_grad_norm must be positive, entropy_coef non-negative");
        }
        Ok(())
    }
}
