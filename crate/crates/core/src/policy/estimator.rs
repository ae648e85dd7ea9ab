use rand::Rng;

use super::PolicyError;
use crate::nn::{clip_grad_norm, Activation, AdamState, Matrix, Mlp};
use crate::simcore::OBS_DIM;
use crate::terrain::{MU_MAX, MU_MIN};

pub const EST_OUT: usize = 5;

/// Rolling window of the last `len` observations, oldest first, zero-padded
/// until it fills.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    len: usize,
    buf: Vec<f32>,
}

impl History {
    pub fn new(len: usize) -> Self {
        Self { len, buf: vec![0.0; len * OBS_DIM] }
    }

    pub fn clear(&mut self) {
        self.buf.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn push(&mut self, obs: &[f64; OBS_DIM]) {
        self.buf.copy_within(OBS_DIM.., 0);
        let n = self.buf.len();
        for (d, s) in self.buf[n - OBS_DIM..].iter_mut().zip(obs) {
            *d = *s as f32;
        }
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.buf
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Estimator readout. `dx` is the per-step displacement in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EstimatorOutput {
    pub mu: f64,
    pub rough: f64,
    pub dx: [f64; 2],
    pub conf: f64,
}

impl EstimatorOutput {
    /// Inference form: friction and roughness clamped to their physical ranges.
    pub fn clamped(&self) -> Self {
        Self { mu: self.mu.clamp(MU_MIN, MU_MAX), rough: self.rough.clamp(0.0, 1.0), ..*self }
    }

    /// Centered features appended to the policy input.
    pub fn policy_features(&self) -> [f32; EST_OUT] {
        let c = self.clamped();
        [
            (c.mu - 1.625) as f32,
            (c.rough - 0.5) as f32,
            c.dx[0] as f32 / DX_SCALE as f32,
            c.dx[1] as f32 / DX_SCALE as f32,
            c.conf as f32,
        ]
    }
}

/// The displacement outputs are trained in units of `DX_SCALE` meters
/// (one step at 1 m/s).
pub const DX_SCALE: f64 = 0.02;

/// MLP from a flattened observation history to (μ̂, r̂, Δx̂, confidence).
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorNet {
    pub net: Mlp<f32>,
    pub history: usize,
}

/// Supervision targets for one history window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorTarget {
    pub mu: f64,
    pub rough: f64,
    pub dx: [f64; 2],
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EstimatorLosses {
    pub mu: f64,
    pub rough: f64,
    pub dx: f64,
    pub conf: f64,
}

impl EstimatorNet {
    pub fn new<R: Rng + ?Sized>(history: usize, hidden: &[usize], rng: &mut R) -> Result<Self, PolicyError> {
        let mut sizes = vec![history * OBS_DIM];
        sizes.extend_from_slice(hidden);
        sizes.push(EST_OUT);
        Ok(Self { net: Mlp::new(&sizes, Activation::Relu, 0.1, rng)?, history })
    }

    pub fn input_dim(&self) -> usize {
        self.history * OBS_DIM
    }

    fn decode(row: &[f32]) -> EstimatorOutput {
        EstimatorOutput {
            mu: row[0] as f64,
            rough: row[1] as f64,
            dx: [row[2] as f64 * DX_SCALE, row[3] as f64 * DX_SCALE],
            conf: row[4] as f64,
        }
    }

    /// Raw outputs for a batch of flattened histories.
    pub fn predict(&self, input: &Matrix<f32>) -> Result<Vec<EstimatorOutput>, PolicyError> {
        let out = self.net.predict(input)?;
        Ok((0..out.rows).map(|r| Self::decode(out.row(r))).collect())
    }

    pub fn predict_one(&self, h: &History) -> Result<EstimatorOutput, PolicyError> {
        let m = Matrix::from_vec(1, self.input_dim(), h.as_slice().to_vec())?;
        Ok(self.predict(&m)?[0])
    }

    /// Mean-squared losses and their gradient for one batch.
    ///
    /// The confidence output regresses the (detached) squared friction
    /// error of the same forward pass.
    pub fn loss_and_grad(
        &self,
        input: &Matrix<f32>,
        targets: &[EstimatorTarget],
    ) -> Result<(EstimatorLosses, Vec<f32>), PolicyError> {
        if targets.len() != input.rows {
            return Err(PolicyError::LengthMismatch(format!(
                "estimator: {} inputs, {} targets",
                input.rows,
                targets.len()
            )));
        }
        let (out, cache) = self.net.forward(input)?;
        let n = input.rows as f64;
        let mut g = Matrix::<f32>::zeros(out.rows, EST_OUT);
        let mut l = EstimatorLosses::default();
        for (r, t) in targets.iter().enumerate() {
            let o = out.row(r);
            let e_mu = o[0] as f64 - t.mu;
            let e_r = o[1] as f64 - t.rough;
            let e_x = o[2] as f64 - t.dx[0] / DX_SCALE;
            let e_y = o[3] as f64 - t.dx[1] / DX_SCALE;
            let e_c = o[4] as f64 - e_mu * e_mu;
            l.mu += e_mu * e_mu;
            l.rough += e_r * e_r;
            l.dx += e_x * e_x + e_y * e_y;
            l.conf += e_c * e_c;
            let gr = g.row_mut(r);
            gr[0] = (2.0 * e_mu / n) as f32;
            gr[1] = (2.0 * e_r / n) as f32;
            gr[2] = (2.0 * e_x / n) as f32;
            gr[3] = (2.0 * e_y / n) as f32;
            gr[4] = (2.0 * e_c / n) as f32;
        }
        l.mu /= n;
        l.rough /= n;
        l.dx /= n;
        l.conf /= n;
        let grads = self.net.backward(&cache, &g)?;
        Ok((l, grads.params))
    }
}

/// Supervised update over a rollout's worth of (history, target) pairs.
///
/// Gradients reach only the estimator parameters; the policy consumed the
/// estimates as plain input values.
#[allow(clippy::too_many_arguments)]
pub fn estimator_update<R: Rng + ?Sized>(
    est: &mut EstimatorNet,
    adam: &mut AdamState,
    inputs: &Matrix<f32>,
    targets: &[EstimatorTarget],
    epochs: usize,
    minibatches: usize,
    max_grad_norm: f64,
    rng: &mut R,
) -> Result<EstimatorLosses, PolicyError> {
    let n = inputs.rows;
    let mut idx: Vec<usize> = (0..n).collect();
    let mb = n.div_ceil(minibatches.max(1)).max(1);
    let mut last = EstimatorLosses::default();
    for _ in 0..epochs {
        shuffle(&mut idx, rng);
        let mut acc = EstimatorLosses::default();
        let mut count = 0.0;
        for chunk in idx.chunks(mb) {
            let x = inputs.select_rows(chunk);
            let t: Vec<EstimatorTarget> = chunk.iter().map(|&i| targets[i]).collect();
            let (l, mut g) = est.loss_and_grad(&x, &t)?;
            if !l.mu.is_finite() || !l.dx.is_finite() {
                return Err(PolicyError::NonFinite(format!("estimator loss {l:?}")));
            }
            clip_grad_norm(&mut g, max_grad_norm);
            adam.step(est.net.params_mut(), &g);
            let w = chunk.len() as f64;
            acc.mu += l.mu * w;
            acc.rough += l.rough * w;
            acc.dx += l.dx * w;
            acc.conf += l.conf * w;
            count += w;
        }
        last = EstimatorLosses {
            mu: acc.mu / count,
            rough: acc.rough / count,
            dx: acc.dx / count,
            conf: acc.conf / count,
        };
    }
    Ok(last)
}

/// Fisher–Yates with the caller's stream.
pub fn shuffle<T, R: Rng + ?Sized>(v: &mut [T], rng: &mut R) {
    for i in (1..v.len()).rev() {
        let j = rng.random_range(0..=i);
        v.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::AdamConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn history_is_zero_padded_and_ordered() {
        let mut h = History::new(3);
        let mut o = [0.0; OBS_DIM];
        o[0] = 1.0;
        h.push(&o);
        assert!(h.as_slice()[..2 * OBS_DIM].iter().all(|&v| v == 0.0));
        assert_eq!(h.as_slice()[2 * OBS_DIM], 1.0);
        o[0] = 2.0;
        h.push(&o);
        assert_eq!(h.as_slice()[OBS_DIM], 1.0);
        assert_eq!(h.as_slice()[2 * OBS_DIM], 2.0);
    }

    #[test]
    fn exact_outputs_give_zero_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut est = EstimatorNet::new(2, &[8], &mut rng).unwrap();
        // zero all weights and set output biases to the target
        est.net.params_mut().iter_mut().for_each(|p| *p = 0.0);
        let np = est.net.param_count();
        let t = EstimatorTarget { mu: 1.25, rough: 0.5, dx: [0.02, -0.01] };
        let b = &mut est.net.params_mut()[np - EST_OUT..];
        b.copy_from_slice(&[1.25, 0.5, 1.0, -0.5, 0.0]);
        let x = Matrix::zeros(3, 2 * OBS_DIM);
        let (l, g) = est.loss_and_grad(&x, &[t; 3]).unwrap();
        assert_eq!(l, EstimatorLosses::default());
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn clamp_only_at_inference() {
        let o = EstimatorOutput { mu: 4.0, rough: -0.2, dx: [0.0; 2], conf: 0.0 };
        let c = o.clamped();
        assert_eq!((c.mu, c.rough), (3.0, 0.0));
        assert_eq!(o.mu, 4.0);
    }

    #[test]
    fn update_reduces_loss_on_fixed_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut est = EstimatorNet::new(2, &[16, 16], &mut rng).unwrap();
        let n = 64;
        let mut data = vec![0f32; n * est.input_dim()];
        let mut targets = vec![];
        for r in 0..n {
            let mu = 0.25 + 2.75 * (r as f64 / n as f64);
            data[r * est.input_dim()] = mu as f32;
            targets.push(EstimatorTarget { mu, rough: 0.3, dx: [0.02, 0.0] });
        }
        let x = Matrix::from_vec(n, est.input_dim(), data).unwrap();
        let before = est.loss_and_grad(&x, &targets).unwrap().0.mu;
        let mut adam = AdamState::new(est.net.param_count(), AdamConfig::default());
        estimator_update(&mut est, &mut adam, &x, &targets, 200, 4, 10.0, &mut rng).unwrap();
        let after = est.loss_and_grad(&x, &targets).unwrap().0.mu;
        assert!(after < 0.1 * before, "{before} -> {after}");
    }
}
