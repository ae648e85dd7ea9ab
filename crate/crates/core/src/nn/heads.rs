//! Output heads: diagonal Gaussian (policy) and softmax categorical (vision).

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Log-density of a diagonal Gaussian with state-independent log-std.
pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, ls), a)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * LN_2PI
        })
        .sum()
}

/// d log p / d mean and d log p / d log_std, written into the given slices.
pub fn gaussian_log_prob_grad(
    mean: &[f64],
    log_std: &[f64],
    action: &[f64],
    d_mean: &mut [f64],
    d_log_std: &mut [f64],
) {
    for i in 0..mean.len() {
        let inv_var = (-2.0 * log_std[i]).exp();
        let diff = action[i] - mean[i];
        d_mean[i] = diff * inv_var;
        d_log_std[i] = diff * diff * inv_var - 1.0;
    }
}

pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| ls + 0.5 * (1.0 + LN_2PI)).sum()
}

/// Numerically stable softmax of one logit row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy `-log p[target]` and its gradient w.r.t. the logits
/// (`p - onehot(target)`).
pub fn cross_entropy(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let mut p = softmax(logits);
    let loss = -p[target].max(1e-300).ln();
    p[target] -= 1.0;
    (loss, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_density_at_zero() {
        let lp = gaussian_log_prob(&[0.0], &[0.0], &[0.0]);
        assert!((lp + 0.5 * LN_2PI).abs() < 1e-15);
    }

    #[test]
    fn log_prob_gradient_matches_finite_differences() {
        let mean = [0.3, -1.2];
        let ls = [(0.5f64).ln(), 0.1];
        let a = [1.0, -0.4];
        let mut dm = [0.0; 2];
        let mut dl = [0.0; 2];
        gaussian_log_prob_grad(&mean, &ls, &a, &mut dm, &mut dl);
        let h = 1e-6;
        for i in 0..2 {
            let mut mp = mean;
            let mut mm = mean;
            mp[i] += h;
            mm[i] -= h;
            let fd = (gaussian_log_prob(&mp, &ls, &a) - gaussian_log_prob(&mm, &ls, &a)) / (2.0 * h);
            assert!((fd - dm[i]).abs() < 1e-6);
            let mut lp = ls;
            let mut lm = ls;
            lp[i] += h;
            lm[i] -= h;
            let fd = (gaussian_log_prob(&mean, &lp, &a) - gaussian_log_prob(&mean, &lm, &a)) / (2.0 * h);
            assert!((fd - dl[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_normalizes_extreme_logits() {
        let p = softmax(&[1000.0, 0.0, -1000.0, 999.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn cross_entropy_gradient_is_p_minus_onehot() {
        let (loss, g) = cross_entropy(&[0.0, 0.0], 1);
        assert!((loss - 2f64.ln()).abs() < 1e-12);
        assert_eq!(g, vec![0.5, -0.5]);
    }
}
