use rand::Rng;
use rand_distr::StandardNormal;

use super::estimator::shuffle;
use super::gae::normalize_advantages;
use super::{PolicyError, PpoConfig};
use crate::nn::heads::{gaussian_entropy, gaussian_log_prob};
use crate::nn::{Activation, AdamConfig, AdamState, Matrix, Mlp};
use crate::simcore::ACTION_DIM;

/// Gaussian policy with state-independent log-std, plus a value network.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub policy: Mlp<f32>,
    pub value: Mlp<f32>,
    pub log_std: Vec<f64>,
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        policy_hidden: &[usize],
        value_hidden: &[usize],
        init_log_std: f64,
        rng: &mut R,
    ) -> Result<Self, PolicyError> {
        let sizes = |hidden: &[usize], out: usize| {
            let mut s = vec![input_dim];
            s.extend_from_slice(hidden);
            s.push(out);
            s
        };
        Ok(Self {
            policy: Mlp::new(&sizes(policy_hidden, ACTION_DIM), Activation::Tanh, 0.01, rng)?,
            value: Mlp::new(&sizes(value_hidden, 1), Activation::Tanh, 1.0, rng)?,
            log_std: vec![init_log_std; ACTION_DIM],
        })
    }

    pub fn input_dim(&self) -> usize {
        self.policy.input_dim()
    }

    /// Action means and values for a batch of inputs.
    pub fn evaluate(&self, input: &Matrix<f32>) -> Result<(Matrix<f32>, Vec<f64>), PolicyError> {
        let mean = self.policy.predict(input)?;
        let v = self.value.predict(input)?;
        Ok((mean, v.data.iter().map(|&x| x as f64).collect()))
    }

    /// Draw `mean + σ·ε`; returns the (unclamped) sample and its log-prob.
    pub fn sample<R: Rng + ?Sized>(&self, mean: &[f32], rng: &mut R) -> ([f64; ACTION_DIM], f64) {
        let mut a = [0.0; ACTION_DIM];
        let mut m = [0.0; ACTION_DIM];
        for k in 0..ACTION_DIM {
            m[k] = mean[k] as f64;
            let eps: f64 = rng.sample(StandardNormal);
            a[k] = m[k] + self.log_std[k].exp() * eps;
        }
        let lp = gaussian_log_prob(&m, &self.log_std, &a);
        (a, lp)
    }
}

/// Flat rollout data for one update.
#[derive(Debug, Clone)]
pub struct PpoBatch {
    pub inputs: Matrix<f32>,
    /// Row-major `n × ACTION_DIM` sampled (pre-clamp) actions.
    pub actions: Vec<f64>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl PpoBatch {
    pub fn len(&self) -> usize {
        self.inputs.rows
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows == 0
    }

    fn subset(&self, idx: &[usize]) -> PpoBatch {
        let mut actions = Vec::with_capacity(idx.len() * ACTION_DIM);
        for &i in idx {
            actions.extend_from_slice(&self.actions[i * ACTION_DIM..(i + 1) * ACTION_DIM]);
        }
        PpoBatch {
            inputs: self.inputs.select_rows(idx),
            actions,
            old_log_probs: idx.iter().map(|&i| self.old_log_probs[i]).collect(),
            advantages: idx.iter().map(|&i| self.advantages[i]).collect(),
            returns: idx.iter().map(|&i| self.returns[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PpoLosses {
    /// Negated clipped surrogate (minimized).
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

impl PpoLosses {
    pub fn total(&self, cfg: &PpoConfig) -> f64 {
        self.policy + cfg.value_coef * self.value - cfg.entropy_coef * self.entropy
    }
}

/// `min(ρA, clip(ρ, 1−ε, 1+ε)A)` and its derivative with respect to ρ.
pub fn clipped_objective(ratio: f64, adv: f64, clip: f64) -> (f64, f64) {
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * adv;
    if unclipped <= clipped {
        (unclipped, adv)
    } else {
        (clipped, 0.0)
    }
}

pub struct PpoGrads {
    pub policy: Vec<f32>,
    pub log_std: Vec<f64>,
    pub value: Vec<f32>,
}

/// Losses and exact gradients for one minibatch. Advantages are used as given.
pub fn ppo_loss_and_grad(
    ac: &ActorCritic,
    batch: &PpoBatch,
    cfg: &PpoConfig,
) -> Result<(PpoLosses, PpoGrads), PolicyError> {
    let n = batch.len();
    let nf = n as f64;
    let (mean, pcache) = ac.policy.forward(&batch.inputs)?;
    let (vout, vcache) = ac.value.forward(&batch.inputs)?;
    let inv_var: Vec<f64> = ac.log_std.iter().map(|l| (-2.0 * l).exp()).collect();
    let mut d_mean = Matrix::<f32>::zeros(n, ACTION_DIM);
    let mut d_log_std = vec![0.0; ACTION_DIM];
    let mut d_value = Matrix::<f32>::zeros(n, 1);
    let mut l = PpoLosses::default();
    for i in 0..n {
        let a = &batch.actions[i * ACTION_DIM..(i + 1) * ACTION_DIM];
        let m: Vec<f64> = mean.row(i).iter().map(|&x| x as f64).collect();
        let lp = gaussian_log_prob(&m, &ac.log_std, a);
        let log_ratio = lp - batch.old_log_probs[i];
        let ratio = log_ratio.exp();
        let adv = batch.advantages[i];
        let (obj, d_obj_d_ratio) = clipped_objective(ratio, adv, cfg.clip);
        l.policy -= obj / nf;
        l.approx_kl += ((ratio - 1.0) - log_ratio) / nf;
        if (ratio - 1.0).abs() > cfg.clip {
            l.clip_fraction += 1.0 / nf;
        }
        // dL/dlogp = −(1/n)·dobj/dρ·ρ
        let g = -d_obj_d_ratio * ratio / nf;
        let row = d_mean.row_mut(i);
        for k in 0..ACTION_DIM {
            let diff = a[k] - m[k];
            row[k] = (g * diff * inv_var[k]) as f32;
            d_log_std[k] += g * (diff * diff * inv_var[k] - 1.0);
        }
        let v = vout.data[i] as f64;
        let e = v - batch.returns[i];
        l.value += e * e / nf;
        d_value.data[i] = (cfg.value_coef * 2.0 * e / nf) as f32;
    }
    l.entropy = gaussian_entropy(&ac.log_std);
    for d in d_log_std.iter_mut() {
        *d -= cfg.entropy_coef;
    }
    let gp = ac.policy.backward(&pcache, &d_mean)?;
    let gv = ac.value.backward(&vcache, &d_value)?;
    Ok((l, PpoGrads { policy: gp.params, log_std: d_log_std, value: gv.params }))
}

/// Optimizer state for [`ActorCritic`].
#[derive(Debug, Clone)]
pub struct PpoOptim {
    pub policy: AdamState,
    pub log_std: AdamState,
    pub value: AdamState,
}

impl PpoOptim {
    pub fn new(ac: &ActorCritic, lr: f64) -> Self {
        let cfg = AdamConfig { lr, ..Default::default() };
        Self {
            policy: AdamState::new(ac.policy.param_count(), cfg),
            log_std: AdamState::new(ac.log_std.len(), cfg),
            value: AdamState::new(ac.value.param_count(), cfg),
        }
    }
}

/// Clipped-surrogate PPO epochs over `batch`. Advantages are normalized over
/// the whole batch first. Returns the mean losses of the last epoch.
pub fn ppo_update<R: Rng + ?Sized>(
    ac: &mut ActorCritic,
    opt: &mut PpoOptim,
    batch: &PpoBatch,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<PpoLosses, PolicyError> {
    let mut batch = batch.clone();
    normalize_advantages(&mut batch.advantages);
    let n = batch.len();
    let mb = n.div_ceil(cfg.minibatches.max(1)).max(1);
    let mut idx: Vec<usize> = (0..n).collect();
    let mut last = PpoLosses::default();
    for _ in 0..cfg.epochs {
        shuffle(&mut idx, rng);
        let mut acc = PpoLosses::default();
        for chunk in idx.chunks(mb) {
            let sub = batch.subset(chunk);
            let (l, mut g) = ppo_loss_and_grad(ac, &sub, cfg)?;
            if !(l.policy.is_finite() && l.value.is_finite()) {
                return Err(PolicyError::NonFinite(format!(
                    "ppo loss: policy {} value {} (kl {}, log_std {:?})",
                    l.policy, l.value, l.approx_kl, ac.log_std
                )));
            }
            clip_all(&mut g, cfg.max_grad_norm);
            opt.policy.step(ac.policy.params_mut(), &g.policy);
            opt.log_std.step(&mut ac.log_std, &g.log_std);
            opt.value.step(ac.value.params_mut(), &g.value);
            let w = chunk.len() as f64 / n as f64;
            acc.policy += l.policy * w;
            acc.value += l.value * w;
            acc.entropy += l.entropy * w;
            acc.approx_kl += l.approx_kl * w;
            acc.clip_fraction += l.clip_fraction * w;
        }
        last = acc;
    }
    Ok(last)
}

fn clip_all(g: &mut PpoGrads, max_norm: f64) {
    let sq: f64 = g.policy.iter().map(|&x| (x as f64).powi(2)).sum::<f64>()
        + g.log_std.iter().map(|x| x * x).sum::<f64>()
        + g.value.iter().map(|&x| (x as f64).powi(2)).sum::<f64>();
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        g.policy.iter_mut().for_each(|x| *x *= s as f32);
        g.log_std.iter_mut().for_each(|x| *x *= s);
        g.value.iter_mut().for_each(|x| *x *= s as f32);
    }
}
