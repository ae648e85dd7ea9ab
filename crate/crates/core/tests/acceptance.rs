//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails. Lines tagged `derived` report
//! supporting properties and do not affect the exit status.
//!
//! Policy trainings use a desk-scale configuration (128 environments,
//! 64-unit hidden layers, 600 iterations); the whole run takes about an hour
//! on one core.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use terrasense::camera::{
    build_dataset, label_error_vs_truth, render, CameraModel, DatasetConfig, Label, LabeledImage, OrthoOverhead, Pose2,
    LABEL_WINDOW_M,
};
use terrasense::costmap::{
    build_cost_map, cost_from_mu, measure_cost_curve, mu_grid, CostCurve, CostMap, CostProtocol,
};
use terrasense::nn::{Activation, Matrix, Mlp};
use terrasense::pipeline::{self, constant_baseline, final_mean, ExperimentConfig, Store};
use terrasense::planner::{astar, CellIdx, PlanOutcome, NEIGHBORS};
use terrasense::policy::{
    compute_gae, evaluate, train_with_progress, ActMode, EvalConfig, PolicyVariant, TrainConfig, TrainOutput,
};
use terrasense::simcore::{
    contact, perfect_tracking_action, step_with_terrain, Action, OperatingMode, RobotState, SimParams,
};
use terrasense::terrain::noise::hash_key;
use terrasense::terrain::{generate_world, presets, render_texture, Region, TerrainGrid, TerrainParams, WorldSpec};
use terrasense::vision::{class_means, dense_rmse, predict_dense, train_vision, VisionTrainConfig};

const SEEDS: [u64; 3] = [1, 2, 3];
const WORLD_SEED: u64 = 7;
const ITERS: usize = 600;

struct Report {
    lines: Vec<(String, bool, bool, String)>,
    start: Instant,
}

impl Report {
    fn new() -> Self {
        Self { lines: Vec::new(), start: Instant::now() }
    }

    fn record(&mut self, id: &str, gate: bool, pass: bool, detail: String) {
        let tag = if gate { "" } else { " (derived)" };
        println!("{} {id}{tag}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.lines.push((id.to_string(), gate, pass, detail));
    }

    fn criterion(&mut self, id: &str, pass: bool, detail: String) {
        self.record(id, true, pass, detail);
    }

    fn derived(&mut self, id: &str, pass: bool, detail: String) {
        self.record(id, false, pass, detail);
    }

    fn log(&self, msg: &str) {
        eprintln!("[{:7.1}s] {msg}", self.start.elapsed().as_secs_f64());
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
}

// ---- criterion 7: numerical core --------------------------------------

fn mlp_fd_error(sizes: &[usize], act: Activation, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net: Mlp<f64> = Mlp::new(sizes, act, 1.0, &mut rng).unwrap();
    for p in net.params_mut().iter_mut() {
        *p += rng.random_range(-0.05..0.05);
    }
    let rand_mat = |r: usize, c: usize, rng: &mut ChaCha8Rng| {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    };
    let x = rand_mat(4, sizes[0], &mut rng);
    let w = rand_mat(4, *sizes.last().unwrap(), &mut rng);
    let loss = |n: &Mlp<f64>| -> f64 { n.predict(&x).unwrap().data.iter().zip(&w.data).map(|(a, b)| a * b).sum() };
    let (_, cache) = net.forward(&x).unwrap();
    let g = net.backward(&cache, &w).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..net.param_count() {
        let orig = net.params()[i];
        net.params_mut()[i] = orig + h;
        let lp = loss(&net);
        net.params_mut()[i] = orig - h;
        let lm = loss(&net);
        net.params_mut()[i] = orig;
        let fd = (lp - lm) / (2.0 * h);
        worst = worst.max((fd - g.params[i]).abs() / fd.abs().max(g.params[i].abs()).max(1e-3));
    }
    worst
}

fn gae_direct(r: &[f64], v: &[f64], d: &[bool], last: f64, g: f64, l: f64) -> Vec<f64> {
    let n = r.len();
    let delta: Vec<f64> =
        (0..n).map(|t| r[t] + if d[t] { 0.0 } else { g * if t + 1 < n { v[t + 1] } else { last } } - v[t]).collect();
    (0..n)
        .map(|t| {
            let (mut a, mut w) = (0.0, 1.0);
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

/// Array-scan Dijkstra over the planner's 8-connected edge costs.
fn dijkstra(map: &CostMap, src: CellIdx) -> Vec<f64> {
    let n = map.rows * map.cols;
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[src.0 * map.cols + src.1] = 0.0;
    loop {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if !done[i] && dist[i].is_finite() && best.is_none_or(|b| dist[i] < dist[b]) {
                best = Some(i);
            }
        }
        let Some(i) = best else { break };
        done[i] = true;
        let (r, c) = (i / map.cols, i % map.cols);
        for (dr, dc) in NEIGHBORS {
            let (nr, nc) = (r as isize + dr, c as isize + dc);
            if nr < 0 || nc < 0 || nr as usize >= map.rows || nc as usize >= map.cols {
                continue;
            }
            let (nr, nc) = (nr as usize, nc as usize);
            if !map.at(nr, nc).is_finite() {
                continue;
            }
            let len = if dr != 0 && dc != 0 { 2f64.sqrt() } else { 1.0 };
            let d = dist[i] + 0.5 * (map.at(r, c) + map.at(nr, nc)) * len;
            let j = nr * map.cols + nc;
            if d < dist[j] {
                dist[j] = d;
            }
        }
    }
    dist
}

fn random_map(rng: &mut ChaCha8Rng, n: usize, blocked: f64) -> CostMap {
    let cost = (0..n * n)
        .map(|_| if rng.random_bool(blocked) { f64::INFINITY } else { rng.random_range(0.5..10.0) })
        .collect();
    CostMap::new(n, n, 1.0, cost)
}

fn free_cell(map: &CostMap, rng: &mut ChaCha8Rng) -> CellIdx {
    loop {
        let c = (rng.random_range(0..map.rows), rng.random_range(0..map.cols));
        if map.at(c.0, c.1).is_finite() {
            return c;
        }
    }
}

fn criterion_7(rep: &mut Report) {
    let mlp = [
        mlp_fd_error(&[6, 1], Activation::Tanh, 1),
        mlp_fd_error(&[7, 16, 16, 3], Activation::Tanh, 2),
        mlp_fd_error(&[7, 16, 16, 3], Activation::Relu, 3),
    ]
    .into_iter()
    .fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut gae: f64 = 0.0;
    for _ in 0..20 {
        let n = 50;
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let d: Vec<bool> = (0..n).map(|_| rng.random_bool(0.08)).collect();
        let last = rng.random_range(-1.0..1.0);
        let (adv, _) = compute_gae(&r, &v, &d, last, 0.99, 0.95).unwrap();
        for (a, b) in adv.iter().zip(gae_direct(&r, &v, &d, last, 0.99, 0.95)) {
            gae = gae.max((a - b).abs());
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut astar_ok = 0;
    for i in 0..200 {
        let map = random_map(&mut rng, 15, if i % 4 == 0 { 0.45 } else { 0.2 });
        let (s, g) = (free_cell(&map, &mut rng), free_cell(&map, &mut rng));
        let oracle = dijkstra(&map, s)[g.0 * 15 + g.1];
        let ok = match astar(&map, s, g).unwrap() {
            PlanOutcome::Found(p) => p.total == oracle,
            PlanOutcome::NoPath => oracle.is_infinite(),
        };
        astar_ok += ok as usize;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cams = [CameraModel::default(), CameraModel::OrthoOverhead(OrthoOverhead::covering(20.0, 20.0, 20.0))];
    let mut round: f64 = 0.0;
    let mut projected = 0;
    while projected < 20_000 {
        let pose = Pose2::new(rng.random_range(0.0..20.0), rng.random_range(0.0..20.0), rng.random_range(-3.2..3.2));
        let cam = &cams[projected % 2];
        let q = if projected % 2 == 0 {
            let (d, a) = (rng.random_range(0.5..8.0), rng.random_range(-0.7..0.7));
            [pose.p[0] + d * (pose.psi + a).cos(), pose.p[1] + d * (pose.psi + a).sin()]
        } else {
            [rng.random_range(0.0..20.0), rng.random_range(0.0..20.0)]
        };
        let Some(uv) = cam.project(q, &pose) else { continue };
        let back = cam.unproject(uv, &pose).unwrap();
        round = round.max((back[0] - q[0]).hypot(back[1] - q[1]));
        projected += 1;
    }

    let p = SimParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut violations = 0usize;
    for _ in 0..1_000_000 {
        let s = RobotState {
            v: [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)],
            omega: rng.random_range(-5.0..5.0),
            gait_phase: rng.random_range(0.0..1.0),
            ..RobotState::at_rest([0.0; 2], 0.0)
        };
        let a: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mu = rng.random_range(0.25..3.0);
        let c = contact(&s, &Action::from_slice(&a, p.action_limit), mu, &p);
        for f in c.force {
            if f[0].hypot(f[1]) > mu * p.normal_load() + 1e-9 {
                violations += 1;
            }
        }
    }

    let pass = mlp < 1e-4 && gae < 1e-10 && astar_ok == 200 && round < 1e-6 && violations == 0;
    rep.criterion(
        "C7 numerical core",
        pass,
        format!(
            "mlp fd rel err {mlp:.2e} (<1e-4), gae max err {gae:.2e} (<1e-10), a*=dijkstra {astar_ok}/200, \
             projection round trip {round:.2e} m (<1e-6), friction cone violations {violations} over 1e6 contact steps"
        ),
    );
}

// ---- criterion 3: observability ----------------------------------------

fn scripted_slip(mu: f64, swipe: bool) -> f64 {
    let p = SimParams::default();
    let terrain = TerrainParams { mu, roughness: 0.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut s = RobotState::at_rest([0.0, 0.0], 0.0);
    let mut slip = 0.0;
    for _ in 0..200 {
        let mut a = perfect_tracking_action(&s, &p);
        if swipe {
            a.u[0] = [p.action_limit, 0.0];
        }
        let (next, _, c) = step_with_terrain(&s, &a, terrain, OperatingMode::FreeLocomotion, &p, &mut rng).unwrap();
        slip += c.slip.iter().map(|v| v[0].hypot(v[1])).sum::<f64>();
        s = next;
    }
    slip / 200.0
}

fn criterion_3(rep: &mut Report) {
    let mus: Vec<f64> = (1..=6).map(|k| 0.5 * k as f64).collect();
    let swipe = variance(&mus.iter().map(|&m| scripted_slip(m, true)).collect::<Vec<_>>());
    let track = variance(&mus.iter().map(|&m| scripted_slip(m, false)).collect::<Vec<_>>());
    rep.criterion(
        "C3 observability",
        swipe > 0.0 && track < 1e-12,
        format!("across-mu slip variance: swipe {swipe:.3e} (>0), tracking {track:.3e} (<1e-12)"),
    );
}

// ---- criterion 8: determinism ------------------------------------------

fn csv_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn criterion_8(rep: &mut Report) {
    let cfg_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.toml");
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        pipeline::run_all(&Store::new(d.path()), &cfg).unwrap();
    }
    let (a, b) = (csv_files(dirs[0].path()), csv_files(dirs[1].path()));
    let differing =
        a.iter().filter(|(k, v)| b.get(*k) != Some(*v)).count() + b.keys().filter(|k| !a.contains_key(*k)).count();
    rep.criterion(
        "C8 determinism",
        !a.is_empty() && differing == 0,
        format!("run-all twice (smoke config): {} CSV files, {differing} differ", a.len()),
    );
}

// ---- policy training ---------------------------------------------------

fn train_config(iterations: usize) -> TrainConfig {
    let mut c =
        TrainConfig { iterations, policy_hidden: vec![64, 64], value_hidden: vec![64, 64], ..Default::default() };
    c.ppo.n_envs = 128;
    c
}

fn train(rep: &Report, v: PolicyVariant, grid: &Arc<TerrainGrid>, iters: usize, seed: u64, world: &str) -> TrainOutput {
    let t = Instant::now();
    let out = train_with_progress(v, std::slice::from_ref(grid), &train_config(iters), seed, &mut |_| {}).unwrap();
    rep.log(&format!(
        "trained {} seed {seed} on {world} world ({iters} iterations, {:.0}s)",
        v.name(),
        t.elapsed().as_secs_f64()
    ));
    out
}

struct Run {
    variant: PolicyVariant,
    seed: u64,
    out: TrainOutput,
    mu_mse: f64,
    /// μ MSE with actions sampled as in training.
    mu_mse_sampled: f64,
    energy: f64,
}

fn train_and_eval(rep: &Report, grid: &Arc<TerrainGrid>, iters: usize, world: &str) -> Vec<Run> {
    let mut runs = Vec::new();
    for seed in SEEDS {
        for v in PolicyVariant::ALL {
            let out = train(rep, v, grid, iters, seed, world);
            let eval = |act| {
                let cfg = EvalConfig { act, ..Default::default() };
                evaluate(&out.policy, std::slice::from_ref(grid), &cfg, hash_key(seed, &[0x6576_616c])).unwrap()
            };
            let (ev, sampled) = (eval(ActMode::Mean), eval(ActMode::Sample));
            runs.push(Run {
                variant: v,
                seed,
                mu_mse: ev.mu_mse,
                mu_mse_sampled: sampled.mu_mse,
                energy: ev.energy,
                out,
            });
        }
    }
    runs
}

fn per_variant(runs: &[Run], v: PolicyVariant, f: impl Fn(&Run) -> f64) -> Vec<f64> {
    runs.iter().filter(|r| r.variant == v).map(f).collect()
}

fn fmt(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/")
}

// ---- criteria 1, 5, 6 (two-class world) --------------------------------

fn criterion_1(rep: &mut Report, runs: &[Run], grid: &TerrainGrid) {
    let base = constant_baseline(grid);
    let act = per_variant(runs, PolicyVariant::ActiveSE, |r| r.mu_mse);
    let pas = per_variant(runs, PolicyVariant::PassiveSE, |r| r.mu_mse);
    let nose = per_variant(runs, PolicyVariant::NoSE, |r| r.mu_mse);
    let (ma, mp, mn) = (mean(&act), mean(&pas), mean(&nose));
    let reduction = 1.0 - ma / mp;
    rep.criterion(
        "C1 estimator ordering",
        reduction >= 0.30 && ma < base,
        format!(
            "mu MSE mean active {ma:.4} [{}] vs passive {mp:.4} [{}]: {:.1}% lower (>=30%); constant baseline {base:.4}",
            fmt(&act),
            fmt(&pas),
            100.0 * reduction
        ),
    );
    rep.derived(
        "passive below constant baseline",
        pas.iter().all(|&m| m < base),
        format!(
            "passive mu MSE [{}] vs baseline {base:.4}; with sampled actions [{}]",
            fmt(&pas),
            fmt(&per_variant(runs, PolicyVariant::PassiveSE, |r| r.mu_mse_sampled))
        ),
    );
    rep.derived(
        "variant ordering",
        ma < mp && ma < mn,
        format!("mean mu MSE active {ma:.4}, no-se {mn:.4}, passive {mp:.4}"),
    );
    let ea = per_variant(runs, PolicyVariant::ActiveSE, |r| r.energy);
    let ep = per_variant(runs, PolicyVariant::PassiveSE, |r| r.energy);
    rep.derived(
        "active uses more force",
        mean(&ea) > mean(&ep),
        format!("mean sum|f|^2 per step active {:.0} vs passive {:.0}", mean(&ea), mean(&ep)),
    );
}

fn curves(policy: &TrainOutput, seed: u64) -> (CostCurve, CostCurve) {
    let proto = CostProtocol::default();
    let grid = mu_grid(12);
    let m = |mode| measure_cost_curve(&policy.policy, "passive-se", mode, &grid, &proto, seed).unwrap();
    (m(OperatingMode::FreeLocomotion), m(OperatingMode::dragging()))
}

fn criterion_5(rep: &mut Report, loco: &CostCurve, drag: &CostCurve) {
    let band: Vec<f64> =
        loco.mu_grid.iter().zip(&loco.cost).filter(|(m, _)| **m >= 1.0 - 1e-9).map(|(_, c)| *c).collect();
    let (lo, hi) = band.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &c| (a.min(c), b.max(c)));
    let spread = hi / lo - 1.0;
    let at_low = cost_from_mu(0.25, loco);
    let elevated = at_low / mean(&band) - 1.0;
    let d: Vec<f64> = [1.0, 2.0, 3.0].iter().map(|&m| cost_from_mu(m, drag)).collect();
    rep.criterion(
        "C5 cost-curve shape",
        spread <= 0.15 && elevated >= 0.25 && d[0] < d[1] && d[1] < d[2],
        format!(
            "locomotion spread over mu in [1,3] {:.1}% (<=15%), cost at 0.25 {:.1}% above band mean (>=25%), \
             dragging s/m at mu 1/2/3 = {}",
            100.0 * spread,
            100.0 * elevated,
            fmt(&d)
        ),
    );
}

fn cost_curve_reproducibility(rep: &mut Report, policy: &TrainOutput, first: &(CostCurve, CostCurve)) {
    let again = curves(policy, 1);
    let other = curves(policy, 2);
    let identical = again.0 == first.0 && again.1 == first.1;
    let worst = [(&first.0, &other.0), (&first.1, &other.1)]
        .iter()
        .flat_map(|(a, b)| a.cost.iter().zip(&b.cost).map(|(x, y)| (x - y).abs() / x.min(*y)))
        .fold(0.0, f64::max);
    rep.derived(
        "cost curve reproducibility",
        identical && worst < 0.10,
        format!(
            "re-measure bit-identical: {identical}; max per-point change across seed sets {:.2}% (<10%)",
            100.0 * worst
        ),
    );
}

fn criterion_6(rep: &mut Report, loco: &CostCurve, drag: &CostCurve) {
    let (spec, start, goal) = presets::planning_world_spec();
    let grid = generate_world(&spec, 11).unwrap();
    let mu: Vec<f32> = grid.cells.iter().map(|c| c.mu as f32).collect();
    let plans =
        pipeline::plan_modes(&mu, grid.width, grid.height, grid.cell_size_m, 1, &[loco, drag], start, goal).unwrap();
    let mut exact = true;
    let mut integrals = Vec::new();
    for p in &plans {
        let (s, g) = (p.path.cells[0], *p.path.cells.last().unwrap());
        exact &= dijkstra(&p.map, s)[g.0 * p.map.cols + g.1] == p.path.total;
        integrals.push(pipeline::path_mu_integral(&p.map, &p.path, &grid));
    }
    let differ = plans[0].path.cells != plans[1].path.cells;
    rep.criterion(
        "C6 planning mode-dependence",
        differ && integrals[1].1 < integrals[0].1 && exact,
        format!(
            "paths differ: {differ}; integral of mu along path: locomotion {:.2} ({:.1} m), dragging {:.2} ({:.1} m); \
             planned cost equals dijkstra: {exact}",
            integrals[0].1, integrals[0].0, integrals[1].1, integrals[1].0
        ),
    );
}

// ---- criteria 2 and 4 (quadrant world) ---------------------------------

fn criterion_2(rep: &mut Report, runs: &[Run]) {
    let vel = |v| per_variant(runs, v, |r| final_mean(&r.out.curves, |c| c.vel_reward));
    let (p, n) = (vel(PolicyVariant::PassiveSE), vel(PolicyVariant::NoSE));
    rep.criterion(
        "C2 adaptation benefit",
        mean(&p) - mean(&n) >= 0.0,
        format!(
            "final velocity-tracking reward (last 10% of training, quadrant world): passive {:.4} [{}] vs no-se {:.4} [{}]",
            mean(&p),
            fmt(&p),
            mean(&n),
            fmt(&n)
        ),
    );
}

struct VisionRun {
    frames: Vec<LabeledImage>,
    model: terrasense::vision::VisionModel,
    val: Vec<usize>,
    label_err: f64,
}

fn vision_run(
    rep: &Report,
    policy: &TrainOutput,
    grids: &[Arc<TerrainGrid>],
    cam: &CameraModel,
    seed: u64,
) -> VisionRun {
    let frames = build_dataset(&policy.policy, grids, cam, &DatasetConfig::default(), seed).unwrap();
    let label_err = label_error_vs_truth(&frames, grids, cam).unwrap();
    let (model, report) = train_vision(&frames, &VisionTrainConfig::default(), seed).unwrap();
    rep.log(&format!(
        "{} seed {seed}: {} frames, label error {label_err:.3}",
        policy.policy.variant.name(),
        frames.len()
    ));
    VisionRun { frames, model, val: report.val_frames, label_err }
}

/// Largest |x̂ − x| 10 s into each episode, from the frame poses.
fn drift_at_10s(frames: &[LabeledImage]) -> Vec<f64> {
    frames
        .iter()
        .filter(|f| (f.timestamp - 10.0).abs() < 1e-6)
        .map(|f| (f.pose_est.p[0] - f.pose_true.p[0]).hypot(f.pose_est.p[1] - f.pose_true.p[1]))
        .collect()
}

fn criterion_4(rep: &mut Report, runs: &[Run], grid: &Arc<TerrainGrid>) {
    let cam = CameraModel::default();
    let grids = [grid.clone()];
    let (mut ra, mut rp, mut ea, mut ep) = (vec![], vec![], vec![], vec![]);
    let mut drift = Vec::new();
    let mut first_active = None;
    for seed in SEEDS {
        let pick = |v| &runs.iter().find(|r| r.variant == v && r.seed == seed).unwrap().out;
        let a = vision_run(rep, pick(PolicyVariant::ActiveSE), &grids, &cam, seed);
        let p = vision_run(rep, pick(PolicyVariant::PassiveSE), &grids, &cam, seed);
        let mut test: Vec<&LabeledImage> = a.val.iter().map(|&i| &a.frames[i]).collect();
        test.extend(p.val.iter().map(|&i| &p.frames[i]));
        ra.push(dense_rmse(&a.model, &test, &cam, &grids, LABEL_WINDOW_M).unwrap());
        rp.push(dense_rmse(&p.model, &test, &cam, &grids, LABEL_WINDOW_M).unwrap());
        ea.push(a.label_err);
        ep.push(p.label_err);
        drift.extend(drift_at_10s(&a.frames));
        drift.extend(drift_at_10s(&p.frames));
        if first_active.is_none() {
            first_active = Some(a.model);
        }
    }
    rep.criterion(
        "C4 vision active vs passive",
        mean(&ra) < mean(&rp),
        format!(
            "dense mu RMSE on held-out frames (1-5 m): active {:.4} [{}] vs passive {:.4} [{}]",
            mean(&ra),
            fmt(&ra),
            mean(&rp),
            fmt(&rp)
        ),
    );
    rep.derived(
        "label quality",
        mean(&ea) < mean(&ep),
        format!(
            "mean |label - true mu|: active {:.4} [{}] vs passive {:.4} [{}]",
            mean(&ea),
            fmt(&ea),
            mean(&ep),
            fmt(&ep)
        ),
    );
    let mean_drift = mean(&drift);
    rep.derived(
        "odometry drift",
        mean_drift < 0.5,
        format!("mean |x_est - x| 10 s into an episode {mean_drift:.3} m over {} episodes (<0.5 m)", drift.len()),
    );

    let model = first_active.unwrap();
    let (w, h) = grid.extent();
    let top = CameraModel::OrthoOverhead(OrthoOverhead::covering(w, h, 20.0));
    let tex = render_texture(grid, 40.0, grid.seed).unwrap();
    let pose = Pose2::default();
    let pred = predict_dense(&render(&tex, &top, &pose), &model).unwrap();
    let mut means: Vec<(f64, f64, usize)> = class_means(&pred, &top, &pose, grid).into_values().collect();
    means.sort_by(|a, b| a.0.total_cmp(&b.0));
    let ordered = means.windows(2).all(|w| w[0].1 < w[1].1);
    let shown: Vec<String> = means.iter().map(|m| format!("{:.2}->{:.2}", m.0, m.1)).collect();
    rep.derived(
        "viewpoint transfer",
        ordered,
        format!("overhead render, class true mu -> predicted mean: {}", shown.join(", ")),
    );
}

// ---- cost map on a two-class overhead view -----------------------------

/// Pinhole frames labeled with true μ on a 1–5 m ring.
fn oracle_frames(grid: &Arc<TerrainGrid>, cam: &CameraModel, n: usize, seed: u64) -> Vec<LabeledImage> {
    let tex = render_texture(grid, 40.0, grid.seed).unwrap();
    let (w_m, h_m) = grid.extent();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let pose = Pose2::new(
                rng.random_range(1.0..w_m - 1.0),
                rng.random_range(1.0..h_m - 1.0),
                rng.random_range(-3.1..3.1),
            );
            let (w, h) = cam.size();
            let mut labels = Vec::new();
            for v in (4..h).step_by(8) {
                for u in (4..w).step_by(8) {
                    let uv = [u as f64, v as f64];
                    let Some(g) = cam.unproject(uv, &pose) else { continue };
                    let d = (g[0] - pose.p[0]).hypot(g[1] - pose.p[1]);
                    let Ok(t) = grid.query_params(g[0], g[1]) else { continue };
                    if (LABEL_WINDOW_M.0..=LABEL_WINDOW_M.1).contains(&d) {
                        labels.push(Label { u: uv[0], v: uv[1], mu: t.mu, rough: t.roughness, source_step: 0 });
                    }
                }
            }
            LabeledImage {
                rgb: render(&tex, cam, &pose),
                labels,
                pose_true: pose,
                pose_est: pose,
                timestamp: 0.0,
                episode: i,
                step: 0,
                world: 0,
            }
        })
        .collect()
}

fn half_and_half_cost_map(rep: &mut Report, drag: &CostCurve) {
    let (grass, pavement) = (presets::grass(), presets::pavement());
    let spec = WorldSpec {
        width: 64,
        height: 64,
        cell_size_m: 0.25,
        regions: vec![
            (grass.id, Region::Rect { x0: 0.0, y0: 0.0, x1: 8.0, y1: 16.0 }),
            (pavement.id, Region::Rect { x0: 8.0, y0: 0.0, x1: 16.0, y1: 16.0 }),
        ],
        classes: vec![grass.clone(), pavement.clone()],
    };
    let grid = Arc::new(generate_world(&spec, 4).unwrap());
    let cam = CameraModel::default();
    let (model, _) = train_vision(&oracle_frames(&grid, &cam, 120, 9), &VisionTrainConfig::default(), 9).unwrap();
    let px_per_m = 20.0;
    let top = CameraModel::OrthoOverhead(OrthoOverhead::covering(16.0, 16.0, px_per_m));
    let tex = render_texture(&grid, 40.0, grid.seed).unwrap();
    let pred = predict_dense(&render(&tex, &top, &Pose2::default()), &model).unwrap();
    let map = build_cost_map(&pred.mu, pred.width, pred.height, 1.0 / px_per_m, drag, 5).unwrap();
    let (mut g, mut p) = (vec![], vec![]);
    for r in 0..map.rows {
        for c in 0..map.cols {
            let x = (c as f64 + 0.5) * map.cell_m;
            let y = (r as f64 + 0.5) * map.cell_m;
            let class = grid.cell_at(x, y).unwrap().class_id;
            if class == grass.id {
                g.push(map.at(r, c))
            } else {
                p.push(map.at(r, c))
            }
        }
    }
    let applies = cost_from_mu(grass.mu_range.center(), drag) > cost_from_mu(pavement.mu_range.center(), drag);
    let holds = mean(&g) > mean(&p);
    rep.derived(
        "cost map follows terrain",
        !applies || holds,
        format!(
            "dragging cost map from an overhead prediction: grass cell mean {:.4} vs pavement {:.4} (curve ranks grass higher: {applies})",
            mean(&g),
            mean(&p)
        ),
    );
}

fn main() -> ExitCode {
    let mut rep = Report::new();
    criterion_7(&mut rep);
    criterion_3(&mut rep);
    criterion_8(&mut rep);

    let two = Arc::new(generate_world(&presets::two_class_world_spec(20.0, 2.0), WORLD_SEED).unwrap());
    let runs = train_and_eval(&rep, &two, ITERS, "two-class");
    criterion_1(&mut rep, &runs, &two);
    let cost_policy = &runs.iter().find(|r| r.variant == PolicyVariant::PassiveSE && r.seed == 1).unwrap().out;
    let first = curves(cost_policy, 1);
    criterion_5(&mut rep, &first.0, &first.1);
    cost_curve_reproducibility(&mut rep, cost_policy, &first);
    criterion_6(&mut rep, &first.0, &first.1);
    half_and_half_cost_map(&mut rep, &first.1);
    drop(runs);

    let quad = Arc::new(generate_world(&presets::quadrant_world_spec(20.0), WORLD_SEED).unwrap());
    let runs = train_and_eval(&rep, &quad, ITERS, "quadrant");
    criterion_2(&mut rep, &runs);
    criterion_4(&mut rep, &runs, &quad);

    let failed: Vec<&str> = rep.lines.iter().filter(|l| l.1 && !l.2).map(|l| l.0.as_str()).collect();
    let gates = rep.lines.iter().filter(|l| l.1).count();
    println!("{}/{gates} criteria passed in {:.0}s", gates - failed.len(), rep.start.elapsed().as_secs_f64());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
