/// Running mean/variance (parallel Welford merge).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunningMeanStd {
    pub mean: f64,
    pub var: f64,
    pub count: f64,
}

impl Default for RunningMeanStd {
    fn default() -> Self {
        Self { mean: 0.0, var: 1.0, count: 0.0 }
    }
}

impl RunningMeanStd {
    pub fn update(&mut self, xs: &[f64]) {
        if xs.is_empty() {
            return;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let total = self.count + n;
        let delta = mean - self.mean;
        let m2 = self.var * self.count + var * n + delta * delta * self.count * n / total;
        self.mean += delta * n / total;
        self.var = m2 / total;
        self.count = total;
    }
}

/// Scales rewards by the running std of the discounted return.
///
/// A rollout is scaled with the statistics gathered before it, then the
/// statistics absorb it; the first rollout is left unscaled.
#[derive(Debug, Clone)]
pub struct RewardNormalizer {
    pub stats: RunningMeanStd,
    gamma: f64,
    returns: Vec<f64>,
}

impl RewardNormalizer {
    pub fn new(n_envs: usize, gamma: f64) -> Self {
        Self { stats: RunningMeanStd::default(), gamma, returns: vec![0.0; n_envs] }
    }

    pub fn scale(&self) -> f64 {
        if self.stats.count < 2.0 {
            1.0
        } else {
            1.0 / (self.stats.var.sqrt() + 1e-8)
        }
    }

    /// `rewards[t][env]`, `dones[t][env]`. Returns the scale that was applied.
    pub fn normalize(&mut self, rewards: &mut [Vec<f64>], dones: &[Vec<bool>]) -> f64 {
        let scale = self.scale();
        let mut seen = Vec::with_capacity(rewards.len() * self.returns.len());
        for (row, done) in rewards.iter_mut().zip(dones) {
            for (e, r) in row.iter_mut().enumerate() {
                self.returns[e] = self.returns[e] * self.gamma + *r;
                seen.push(self.returns[e]);
                if done[e] {
                    self.returns[e] = 0.0;
                }
                *r *= scale;
            }
        }
        self.stats.update(&seen);
        scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merged_stats_equal_batch_stats() {
        let xs: Vec<f64> = (0..100).map(|i| ((i * 37) % 17) as f64 * 0.3 - 1.0).collect();
        let mut rms = RunningMeanStd::default();
        rms.update(&xs[..30]);
        rms.update(&xs[30..]);
        let m = xs.iter().sum::<f64>() / 100.0;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 100.0;
        assert!((rms.mean - m).abs() < 1e-12);
        assert!((rms.var - v).abs() < 1e-12);
    }

    #[test]
    fn normalization_uses_only_past_rollouts() {
        let mut n = RewardNormalizer::new(1, 0.99);
        let mut first = vec![vec![5.0], vec![7.0]];
        let s0 = n.normalize(&mut first, &[vec![false], vec![false]]);
        assert_eq!(s0, 1.0);
        assert_eq!(first, vec![vec![5.0], vec![7.0]]);
        let expected = n.scale();
        let mut second = vec![vec![1000.0]];
        let s1 = n.normalize(&mut second, &[vec![false]]);
        assert_eq!(s1, expected);
        assert_eq!(second[0][0], 1000.0 * expected);
    }
}
