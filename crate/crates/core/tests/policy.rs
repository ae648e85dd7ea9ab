use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use terrasense::nn::Matrix;
use terrasense::policy::*;
use terrasense::simcore::{ContactResult, Observation, RobotState, OBS_DIM};
use terrasense::terrain::{generate_world, presets, TerrainGrid};

/// A_t = Σ_k (γλ)^k δ_{t+k}, the sum cut after the first done.
fn gae_direct(r: &[f64], v: &[f64], d: &[bool], last: f64, g: f64, l: f64) -> Vec<f64> {
    let n = r.len();
    let delta: Vec<f64> = (0..n)
        .map(|t| {
            let next = if t + 1 < n { v[t + 1] } else { last };
            r[t] + if d[t] { 0.0 } else { g * next } - v[t]
        })
        .collect();
    (0..n)
        .map(|t| {
            let mut a = 0.0;
            let mut w = 1.0;
            for k in t..n {
                a += w * delta[k];
                if d[k] {
                    break;
                }
                w *= g * l;
            }
            a
        })
        .collect()
}

#[test]
fn gae_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let n = 50;
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let d: Vec<bool> = (0..n).map(|_| rng.random_bool(0.08)).collect();
        let last = rng.random_range(-1.0..1.0);
        let (adv, ret) = compute_gae(&r, &v, &d, last, 0.99, 0.95).unwrap();
        let oracle = gae_direct(&r, &v, &d, last, 0.99, 0.95);
        for t in 0..n {
            assert!((adv[t] - oracle[t]).abs() < 1e-10, "t={t}: {} vs {}", adv[t], oracle[t]);
            assert!((ret[t] - adv[t] - v[t]).abs() < 1e-12);
        }
    }
}

#[test]
fn gae_single_terminal_and_td0() {
    let (a, _) = compute_gae(&[2.0], &[0.5], &[true], 9.0, 0.99, 0.95).unwrap();
    assert_eq!(a[0], 1.5);
    let r = [1.0, -1.0, 0.5];
    let v = [0.2, 0.4, -0.3];
    let d = [false, false, false];
    let (a, _) = compute_gae(&r, &v, &d, 0.7, 0.9, 0.0).unwrap();
    let next = [0.4, -0.3, 0.7];
    for t in 0..3 {
        assert!((a[t] - (r[t] + 0.9 * next[t] - v[t])).abs() < 1e-15);
    }
    assert!(compute_gae(&r, &v[..2], &d, 0.0, 0.9, 0.9).is_err());
}

#[test]
fn constant_predictor_baseline_is_uniform_variance() {
    let closed = 2.75f64.powi(2) / 12.0;
    assert!((closed - 0.6302).abs() < 1e-4);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 400_000;
    let mse = (0..n).map(|_| (rng.random_range(0.25..3.0) - 1.625f64).powi(2)).sum::<f64>() / n as f64;
    assert!((mse - closed).abs() < 5e-3, "{mse}");
}

#[test]
fn input_dimension_per_variant() {
    assert_eq!(PolicyVariant::NoSE.policy_input_dim(), OBS_DIM);
    assert_eq!(PolicyVariant::PassiveSE.policy_input_dim(), OBS_DIM + EST_OUT);
    assert_eq!(PolicyVariant::ActiveSE.policy_input_dim(), OBS_DIM + EST_OUT);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ac = ActorCritic::new(OBS_DIM, &[8], &[8], -0.7, &mut rng).unwrap();
    assert_eq!(ac.input_dim(), OBS_DIM);
}

#[test]
fn estimator_exact_outputs_give_zero_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let est = EstimatorNet::new(3, &[16], &mut rng).unwrap();
    let x = Matrix::from_vec(
        4,
        est.input_dim(),
        (0..4 * est.input_dim()).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
    )
    .unwrap();
    let out = est.predict(&x).unwrap();
    let t: Vec<EstimatorTarget> = out.iter().map(|o| EstimatorTarget { mu: o.mu, rough: o.rough, dx: o.dx }).collect();
    let (l, _) = est.loss_and_grad(&x, &t).unwrap();
    assert!(l.mu < 1e-12 && l.rough < 1e-12 && l.dx < 1e-12, "{l:?}");
}

fn policy_batch(rows: &[Vec<f32>], rng: &mut ChaCha8Rng) -> PpoBatch {
    let n = rows.len();
    let dim = rows[0].len();
    let mut inputs = Matrix::zeros(n, dim);
    for (i, r) in rows.iter().enumerate() {
        inputs.row_mut(i).copy_from_slice(r);
    }
    PpoBatch {
        inputs,
        actions: (0..n * 8).map(|_| rng.random_range(-1.0..1.0)).collect(),
        old_log_probs: (0..n).map(|_| rng.random_range(-8.0..-6.0)).collect(),
        advantages: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        returns: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    }
}

#[test]
fn estimate_reaches_policy_gradient_only_as_an_input_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let variant = PolicyVariant::PassiveSE;
    let ac = ActorCritic::new(variant.policy_input_dim(), &[16], &[16], -0.7, &mut rng).unwrap();
    let est_a = EstimatorNet::new(2, &[8], &mut rng).unwrap();
    let mut est_b = est_a.clone();
    for p in est_b.net.params_mut() {
        *p += rng.random_range(-0.3f32..0.3);
    }
    let mut hist = History::new(2);
    let mut obs = Observation::default();
    for v in obs.values.iter_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    hist.push(&obs.values);
    let mk = |est: &EstimatorNet| {
        let e = est.predict_one(&hist).unwrap();
        let mut row = vec![0.0f32; variant.policy_input_dim()];
        runner_input(variant, &obs, &e, &mut row);
        row
    };
    let (row_a, row_b) = (mk(&est_a), mk(&est_b));
    assert_ne!(row_a, row_b);
    // the same input values written by hand, with no estimator involved
    let mut manual = row_a.clone();
    manual[OBS_DIM..].copy_from_slice(&est_b.predict_one(&hist).unwrap().policy_features());
    let cfg = PpoConfig::default();
    let mut r1 = ChaCha8Rng::seed_from_u64(2);
    let mut r2 = ChaCha8Rng::seed_from_u64(2);
    let (_, g_est) = ppo_loss_and_grad(&ac, &policy_batch(&vec![row_b.clone(); 6], &mut r1), &cfg).unwrap();
    let (_, g_man) = ppo_loss_and_grad(&ac, &policy_batch(&vec![manual; 6], &mut r2), &cfg).unwrap();
    assert_eq!(g_est.policy, g_man.policy);
    assert_eq!(g_est.log_std, g_man.log_std);
    let mut r3 = ChaCha8Rng::seed_from_u64(2);
    let (_, g_a) = ppo_loss_and_grad(&ac, &policy_batch(&vec![row_a; 6], &mut r3), &cfg).unwrap();
    assert_ne!(g_a.policy, g_est.policy);
}

fn runner_input(v: PolicyVariant, obs: &Observation, e: &EstimatorOutput, out: &mut [f32]) {
    for (d, s) in out[..OBS_DIM].iter_mut().zip(&obs.values) {
        *d = *s as f32;
    }
    if v.observes_estimate() {
        out[OBS_DIM..].copy_from_slice(&e.policy_features());
    }
}

#[test]
fn only_active_variant_pays_for_estimation_error() {
    let cfg = RewardConfig::default();
    let state = RobotState { v: [0.8, 0.1], omega: 0.2, ..RobotState::at_rest([0.0; 2], 0.0) };
    let contact = ContactResult::default();
    let a = [[0.1; 8], [0.2; 8], [0.0; 8]];
    let e = [2.5, 0.3];
    let e_hat = [1.0, 0.5];
    let reward = |v: PolicyVariant| {
        compute_reward(
            &cfg,
            &RewardInputs {
                state: &state,
                v_cmd: [1.0, 0.0],
                omega_cmd: 0.0,
                contact: &contact,
                actions: [&a[0], &a[1], &a[2]],
                estimate: v.estimation_reward().then_some((e, e_hat)),
            },
        )
        .total()
    };
    let (no, pas, act) =
        (reward(PolicyVariant::NoSE), reward(PolicyVariant::PassiveSE), reward(PolicyVariant::ActiveSE));
    assert_eq!(no, pas);
    let expected = -0.3 * ((2.5f64 - 1.0).powi(2) + (0.3f64 - 0.5).powi(2));
    assert!((act - pas - expected).abs() < 1e-12);
}

fn two_class() -> Vec<Arc<TerrainGrid>> {
    vec![Arc::new(generate_world(&presets::two_class_world_spec(10.0, 2.0), 3).unwrap())]
}

fn tiny_config() -> TrainConfig {
    let mut cfg = TrainConfig {
        iterations: 3,
        policy_hidden: vec![16, 16],
        value_hidden: vec![16, 16],
        estimator_hidden: vec![16],
        history: 5,
        ..Default::default()
    };
    cfg.ppo.n_envs = 8;
    cfg.ppo.steps_per_rollout = 8;
    cfg
}

#[test]
fn training_is_deterministic_across_thread_counts() {
    let grids = two_class();
    let cfg = tiny_config();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| train(PolicyVariant::ActiveSE, &grids, &cfg, 17).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.curves, b.curves);
    assert_eq!(a.policy, b.policy);
    assert_eq!(a.curves.len(), 3);
}

#[test]
fn training_needs_two_friction_values() {
    let flat = vec![Arc::new(TerrainGrid::uniform(40, 40, 0.25, 1.0, 0.1))];
    assert!(matches!(train(PolicyVariant::NoSE, &flat, &tiny_config(), 0), Err(PolicyError::Config(_))));
}

#[test]
fn trained_policy_checkpoint_round_trip() {
    let out = train(PolicyVariant::PassiveSE, &two_class(), &tiny_config(), 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.ckpt");
    out.policy.save(&path).unwrap();
    let back = TrainedPolicy::load(&path).unwrap();
    assert_eq!(back, out.policy);
    let mut csv = Vec::new();
    write_curves_csv(&out.curves, &mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 4);
}

#[test]
fn evaluation_runs_one_episode_per_agent() {
    let grids = two_class();
    let out = train(PolicyVariant::NoSE, &grids, &tiny_config(), 2).unwrap();
    let cfg = EvalConfig { n_agents: 4, horizon_steps: Some(50), ..Default::default() };
    let s = evaluate(&out.policy, &grids, &cfg, 1).unwrap();
    assert_eq!(s.distances.len(), 4);
    assert!(s.steps <= 200 && s.steps > 0);
    assert!(s.mu_mse.is_finite() && s.energy >= 0.0);
    assert_eq!(s, evaluate(&out.policy, &grids, &cfg, 1).unwrap());
}
