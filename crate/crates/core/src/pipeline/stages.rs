use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::json;

use super::figures;
use super::{runtime, ExperimentConfig, PipelineError, StageId, Store};
use crate::camera::{
    build_dataset, label_error_vs_truth, read_dataset, render, write_dataset, CameraModel, DatasetConfig, LabeledImage,
    OrthoOverhead, Pose2, LABEL_WINDOW_M,
};
use crate::costmap::{build_cost_map, measure_cost_curve, mu_grid, CostCurve, CostMap, CostProtocol};
use crate::planner::{astar, overlay_path, path_svg, write_path_csv, CellIdx, Path as GridPath, PlanOutcome};
use crate::policy::{evaluate, train_with_progress, write_curves_csv, EvalConfig, PolicyVariant, TrainedPolicy};
use crate::raster::{false_color, RgbImage};
use crate::simcore::OperatingMode;
use crate::terrain::noise::hash_key;
use crate::terrain::{generate_world, presets, render_texture, world_spec_to_toml, TerrainGrid, MU_MAX, MU_MIN};
use crate::vision::{dense_rmse, mu_false_color, predict_dense, train_vision, write_mu_csv, VisionModel};

pub const MODES: [&str; 2] = ["locomotion", "dragging"];

pub fn mode_of(name: &str) -> Result<OperatingMode, PipelineError> {
    match name {
        "locomotion" => Ok(OperatingMode::FreeLocomotion),
        "dragging" => Ok(OperatingMode::dragging()),
        _ => Err(PipelineError::Usage(format!("unknown mode '{name}' (expected locomotion or dragging)"))),
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config serializes")
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    fs::write(path, text)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, PipelineError> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

// ---- stage identities -------------------------------------------------

pub fn world_id(cfg: &ExperimentConfig) -> Result<StageId, PipelineError> {
    let spec = cfg.world_spec()?;
    Ok(StageId::new(
        "world",
        cfg.world.preset.clone(),
        json!({ "spec": world_spec_to_toml(&spec), "seed": cfg.world.seed }),
        &[],
        vec![cfg.world.seed],
    ))
}

pub fn policy_id(cfg: &ExperimentConfig, v: PolicyVariant, seed: u64) -> Result<StageId, PipelineError> {
    let w = world_id(cfg)?;
    Ok(StageId::new(
        "policy",
        format!("{}-s{seed}", v.name()),
        json!({ "variant": v.name(), "train": to_json(&cfg.train) }),
        &[&w],
        vec![seed],
    ))
}

pub fn eval_id(cfg: &ExperimentConfig) -> Result<StageId, PipelineError> {
    let mut ups = Vec::new();
    for v in cfg.policy_variants()? {
        for &s in &cfg.seeds {
            ups.push(policy_id(cfg, v, s)?);
        }
    }
    let refs: Vec<&StageId> = ups.iter().collect();
    Ok(StageId::new("eval", "", to_json(&cfg.eval), &refs, cfg.seeds.clone()))
}

pub fn dataset_id(cfg: &ExperimentConfig, v: PolicyVariant, seed: u64) -> Result<StageId, PipelineError> {
    let p = policy_id(cfg, v, seed)?;
    Ok(StageId::new("dataset", format!("{}-s{seed}", v.name()), to_json(&cfg.dataset_params()), &[&p], vec![seed]))
}

pub fn vision_id(cfg: &ExperimentConfig, v: PolicyVariant, seed: u64) -> Result<StageId, PipelineError> {
    let d = dataset_id(cfg, v, seed)?;
    Ok(StageId::new("vision", format!("{}-s{seed}", v.name()), to_json(&cfg.vision), &[&d], vec![seed]))
}

pub fn predict_id(cfg: &ExperimentConfig, v: PolicyVariant, seed: u64) -> Result<StageId, PipelineError> {
    let m = vision_id(cfg, v, seed)?;
    let (spec, _, _) = presets::planning_world_spec();
    Ok(StageId::new(
        "predict",
        format!("{}-s{seed}", v.name()),
        json!({
            "planning_world": world_spec_to_toml(&spec),
            "planning_seed": cfg.plan.world_seed,
            "px_per_m": cfg.plan.px_per_m,
            "texture_px_per_m": cfg.dataset.texture_px_per_m,
        }),
        &[&m],
        vec![seed],
    ))
}

pub fn cost_id(cfg: &ExperimentConfig, mode: &str) -> Result<StageId, PipelineError> {
    mode_of(mode)?;
    let p = policy_id(cfg, cfg.cost_variant(), cfg.first_seed())?;
    Ok(StageId::new(
        "cost",
        mode.to_string(),
        json!({ "mode": mode, "cost": to_json(&cfg.cost) }),
        &[&p],
        vec![cfg.first_seed()],
    ))
}

pub fn plan_id(cfg: &ExperimentConfig) -> Result<StageId, PipelineError> {
    let pr = predict_id(cfg, cfg.plan_variant(), cfg.first_seed())?;
    let loc = cost_id(cfg, "locomotion")?;
    let drag = cost_id(cfg, "dragging")?;
    Ok(StageId::new("plan", "", to_json(&cfg.plan), &[&pr, &loc, &drag], vec![cfg.first_seed()]))
}

pub fn figures_id(cfg: &ExperimentConfig) -> Result<StageId, PipelineError> {
    let mut ups = vec![eval_id(cfg)?, plan_id(cfg)?];
    for v in cfg.policy_variants()? {
        for &s in &cfg.seeds {
            ups.push(policy_id(cfg, v, s)?);
        }
    }
    for v in cfg.dataset_variants()? {
        for &s in &cfg.seeds {
            ups.push(predict_id(cfg, v, s)?);
        }
    }
    for m in MODES {
        ups.push(cost_id(cfg, m)?);
    }
    let refs: Vec<&StageId> = ups.iter().collect();
    Ok(StageId::new("figures", "", json!({}), &refs, cfg.seeds.clone()))
}

impl ExperimentConfig {
    fn dataset_params(&self) -> serde_json::Value {
        let d = &self.dataset;
        json!({ "minutes": d.minutes, "fps": d.fps, "agents": d.agents, "texture_px_per_m": d.texture_px_per_m })
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            minutes: self.dataset.minutes,
            fps: self.dataset.fps,
            agents: self.dataset.agents,
            sim: self.train.sim.clone(),
            v_cmd: self.train.v_cmd,
            omega_cmd: self.train.omega_cmd,
            texture_px_per_m: self.dataset.texture_px_per_m,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            n_agents: self.eval.n_agents,
            sim: self.train.sim.clone(),
            v_cmd: self.train.v_cmd,
            omega_cmd: self.train.omega_cmd,
            reward: self.train.reward.clone(),
            ..Default::default()
        }
    }

    pub fn cost_protocol(&self) -> CostProtocol {
        CostProtocol {
            n_agents: self.cost.n_agents,
            horizon_s: self.cost.horizon_s,
            v_cmd: self.train.v_cmd[0],
            sim: self.train.sim.clone(),
            ..Default::default()
        }
    }
}

// ---- shared helpers ---------------------------------------------------

pub fn world_grid(cfg: &ExperimentConfig) -> Result<Arc<TerrainGrid>, PipelineError> {
    Ok(Arc::new(generate_world(&cfg.world_spec()?, cfg.world.seed).map_err(runtime)?))
}

/// Planning world with its start and goal points (m).
pub type PlanningWorld = (Arc<TerrainGrid>, [f64; 2], [f64; 2]);

pub fn planning_grid(cfg: &ExperimentConfig) -> Result<PlanningWorld, PipelineError> {
    let (spec, start, goal) = presets::planning_world_spec();
    Ok((Arc::new(generate_world(&spec, cfg.plan.world_seed).map_err(runtime)?), start, goal))
}

/// Per-cell μ as a false-color image, one pixel per cell.
pub fn mu_image(grid: &TerrainGrid) -> RgbImage {
    let mut img = RgbImage::new(grid.width, grid.height);
    for y in 0..grid.height {
        for x in 0..grid.width {
            img.put(x, y, false_color((grid.cell(x, y).mu - MU_MIN) / (MU_MAX - MU_MIN)));
        }
    }
    img
}

/// Overhead view of a whole world at `px_per_m`.
pub fn overhead(
    grid: &TerrainGrid,
    px_per_m: f64,
    texture_px_per_m: f64,
) -> Result<(CameraModel, RgbImage), PipelineError> {
    let (w, h) = grid.extent();
    let cam = CameraModel::OrthoOverhead(OrthoOverhead::covering(w, h, px_per_m));
    let tex = render_texture(grid, texture_px_per_m, grid.seed).map_err(runtime)?;
    let img = render(&tex, &cam, &Pose2::default());
    Ok((cam, img))
}

fn load_policy(
    store: &Store,
    cfg: &ExperimentConfig,
    v: PolicyVariant,
    seed: u64,
) -> Result<(TrainedPolicy, StageId), PipelineError> {
    let id = policy_id(cfg, v, seed)?;
    let dir = store.require(&id, "train-policy")?;
    Ok((TrainedPolicy::load(&dir.join("policy.ckpt")).map_err(runtime)?, id))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len().max(1) as f64).sqrt()
}

/// Population variance of cell μ: the error of always predicting the mean.
pub fn constant_baseline(grid: &TerrainGrid) -> f64 {
    let mu: Vec<f64> = grid.cells.iter().map(|c| c.mu).collect();
    std_dev(&mu).powi(2)
}

// ---- stages -----------------------------------------------------------

pub fn gen_world(store: &Store, cfg: &ExperimentConfig) -> Result<PathBuf, PipelineError> {
    let id = world_id(cfg)?;
    store.build(&id, |dir| {
        let spec = cfg.world_spec()?;
        let grid = world_grid(cfg)?;
        write_text(&dir.join("world.toml"), &world_spec_to_toml(&spec))?;
        mu_image(&grid).write_ppm(&dir.join("mu.ppm")).map_err(runtime)?;
        let (_, img) = overhead(&grid, 10.0, cfg.dataset.texture_px_per_m)?;
        img.write_ppm(&dir.join("texture.ppm")).map_err(runtime)?;
        let mut w = create(&dir.join("classes.csv"))?;
        writeln!(w, "id,name,mu_lo,mu_hi,rough_lo,rough_hi,cells,mean_mu")?;
        for c in &grid.classes {
            let mus: Vec<f64> = grid.cells.iter().filter(|x| x.class_id == c.id).map(|x| x.mu).collect();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{:.6}",
                c.id,
                c.name,
                c.mu_range.lo,
                c.mu_range.hi,
                c.rough_range.lo,
                c.rough_range.hi,
                mus.len(),
                mean(&mus)
            )?;
        }
        w.flush()?;
        Ok(())
    })
}

/// Mean of `f` over the last tenth of the curve.
pub fn final_mean(rows: &[crate::policy::CurveRow], f: impl Fn(&crate::policy::CurveRow) -> f64) -> f64 {
    let k = (rows.len() / 10).max(1).min(rows.len());
    mean(&rows[rows.len() - k..].iter().map(f).collect::<Vec<_>>())
}

pub fn train_policy(
    store: &Store,
    cfg: &ExperimentConfig,
    v: PolicyVariant,
    seed: u64,
) -> Result<PathBuf, PipelineError> {
    let id = policy_id(cfg, v, seed)?;
    store.require(&world_id(cfg)?, "gen-world")?;
    store.build(&id, |dir| {
        let grid = world_grid(cfg)?;
        let total = cfg.train.iterations;
        let mut progress = |r: &crate::policy::CurveRow| {
            if total >= 10 && (r.iteration + 1).is_multiple_of(total / 10) {
                store.note(format!(
                    "  {} s{seed} iter {}/{total} vel {:.3} mu-mse {:.3}",
                    v.name(),
                    r.iteration + 1,
                    r.vel_reward,
                    r.est_mse_mu
                ));
            }
        };
        let out = train_with_progress(v, &[grid], &cfg.train, seed, &mut progress).map_err(runtime)?;
        out.policy.save(&dir.join("policy.ckpt")).map_err(runtime)?;
        write_curves_csv(&out.curves, create(&dir.join("curves.csv"))?)?;
        let c = &out.curves;
        let mut w = create(&dir.join("summary.csv"))?;
        writeln!(w, "variant,seed,final_vel_reward,final_task_reward,final_mu_mse,faults")?;
        writeln!(
            w,
            "{},{seed},{:.6},{:.6},{:.6},{}",
            v.name(),
            final_mean(c, |r| r.vel_reward),
            final_mean(c, |r| r.task_reward),
            final_mean(c, |r| r.est_mse_mu),
            out.faults
        )?;
        w.flush()?;
        Ok(())
    })
}

pub fn eval_estimator(store: &Store, cfg: &ExperimentConfig) -> Result<PathBuf, PipelineError> {
    let id = eval_id(cfg)?;
    let mut policies = Vec::new();
    for v in cfg.policy_variants()? {
        for &s in &cfg.seeds {
            policies.push((v, s, load_policy(store, cfg, v, s)?.0));
        }
    }
    store.build(&id, |dir| {
        let grid = world_grid(cfg)?;
        let ecfg = cfg.eval_config();
        let mut w = create(&dir.join("estimator_mse.csv"))?;
        writeln!(w, "variant,seed,mu_mse,rough_mse,vel_reward,task_reward,energy")?;
        let mut per_variant: Vec<(PolicyVariant, Vec<f64>)> = Vec::new();
        for (v, s, p) in &policies {
            let st = evaluate(p, std::slice::from_ref(&grid), &ecfg, hash_key(*s, &[0x6576_616c])).map_err(runtime)?;
            writeln!(
                w,
                "{},{s},{:.6},{:.6},{:.6},{:.6},{:.4}",
                v.name(),
                st.mu_mse,
                st.rough_mse,
                st.vel_reward,
                st.task_reward,
                st.energy
            )?;
            match per_variant.iter_mut().find(|(x, _)| x == v) {
                Some((_, m)) => m.push(st.mu_mse),
                None => per_variant.push((*v, vec![st.mu_mse])),
            }
        }
        w.flush()?;
        let mut w = create(&dir.join("estimator_mse_summary.csv"))?;
        writeln!(w, "estimator,mean_mu_mse,std_mu_mse,runs")?;
        for (v, m) in &per_variant {
            writeln!(w, "{},{:.6},{:.6},{}", v.name(), mean(m), std_dev(m), m.len())?;
        }
        writeln!(w, "constant,{:.6},0.000000,1", constant_baseline(&grid))?;
        w.flush()?;
        Ok(())
    })
}

pub fn collect_data(
    store: &Store,
    cfg: &ExperimentConfig,
    v: PolicyVariant,
    seed: u64,
) -> Result<PathBuf, PipelineError> {
    let id = dataset_id(cfg, v, seed)?;
    let (policy, _) = load_policy(store, cfg, v, seed)?;
    store.build(&id, |dir| {
        let grid = world_grid(cfg)?;
        let cam = CameraModel::default();
        let frames = build_dataset(
            &policy,
            std::slice::from_ref(&grid),
            &cam,
            &cfg.dataset_config(),
            hash_key(seed, &[0x636f_6c6c]),
        )
        .map_err(runtime)?;
        write_dataset(&dir.join("frames"), &cam, &frames).map_err(runtime)?;
        let labels: usize = frames.iter().map(|f| f.labels.len()).sum();
        let err = label_error_vs_truth(&frames, &[grid], &cam);
        let mut w = create(&dir.join("labels.csv"))?;
        writeln!(w, "frames,labels,mean_abs_label_error")?;
        writeln!(w, "{},{labels},{}", frames.len(), err.map_or("nan".into(), |e| format!("{e:.6}")))?;
        w.flush()?;
        Ok(())
    })
}

fn load_frames(
    store: &Store,
    cfg: &ExperimentConfig,
    v: PolicyVariant,
    seed: u64,
) -> Result<(CameraModel, Vec<LabeledImage>), PipelineError> {
    let dir = store.require(&dataset_id(cfg, v, seed)?, "collect-data")?;
    read_dataset(&dir.join("frames")).map_err(runtime)
}

pub fn train_vision_stage(
    store: &Store,
    cfg: &ExperimentConfig,
    v: PolicyVariant,
    seed: u64,
) -> Result<PathBuf, PipelineError> {
    let id = vision_id(cfg, v, seed)?;
    let (_, frames) = load_frames(store, cfg, v, seed)?;
    store.build(&id, |dir| {
        let (model, rep) = train_vision(&frames, &cfg.vision_train_config(), seed).map_err(runtime)?;
        model.save(&dir.join("vision.ckpt")).map_err(runtime)?;
        let mut w = create(&dir.join("curve.csv"))?;
        writeln!(w, "head,epoch,train_loss,val_loss,val_accuracy")?;
        for (head, curve) in [("mu", &rep.mu_curve), ("rough", &rep.rough_curve)] {
            for e in curve {
                writeln!(w, "{head},{},{:.6},{:.6},{:.6}", e.epoch, e.train_loss, e.val_loss, e.val_accuracy)?;
            }
        }
        w.flush()?;
        let mut w = create(&dir.join("val_frames.csv"))?;
        writeln!(w, "frame")?;
        for i in &rep.val_frames {
            writeln!(w, "{i}")?;
        }
        w.flush()?;
        Ok(())
    })
}

fn read_index_csv(path: &Path) -> Result<Vec<usize>, PipelineError> {
    fs::read_to_string(path)?
        .lines()
        .skip(1)
        .map(|l| l.trim().parse().map_err(|_| runtime(format!("bad index in {}", path.display()))))
        .collect()
}

pub fn predict(store: &Store, cfg: &ExperimentConfig, v: PolicyVariant, seed: u64) -> Result<PathBuf, PipelineError> {
    let id = predict_id(cfg, v, seed)?;
    let vdir = store.require(&vision_id(cfg, v, seed)?, "train-vision")?;
    let (cam, frames) = load_frames(store, cfg, v, seed)?;
    store.build(&id, |dir| {
        let model = VisionModel::load(&vdir.join("vision.ckpt")).map_err(runtime)?;
        let val = read_index_csv(&vdir.join("val_frames.csv"))?;
        let grid = world_grid(cfg)?;
        let held: Vec<&LabeledImage> = val.iter().map(|&i| &frames[i]).collect();
        let grids = [grid];
        let mut w = create(&dir.join("rmse.csv"))?;
        writeln!(w, "variant,seed,frames,rmse_label_window,rmse_all_ground")?;
        let r_win = dense_rmse(&model, &held, &cam, &grids, LABEL_WINDOW_M).map_err(runtime)?;
        let r_all = dense_rmse(&model, &held, &cam, &grids, (0.0, f64::INFINITY)).map_err(runtime)?;
        writeln!(w, "{},{seed},{},{r_win:.6},{r_all:.6}", v.name(), held.len())?;
        w.flush()?;
        for (k, f) in held.iter().take(cfg.vision.preview_frames).enumerate() {
            let pred = predict_dense(&f.rgb, &model).map_err(runtime)?;
            f.rgb.write_ppm(&dir.join(format!("frame_{k:02}_rgb.ppm"))).map_err(runtime)?;
            mu_false_color(&pred).write_ppm(&dir.join(format!("frame_{k:02}_mu.ppm"))).map_err(runtime)?;
        }
        let (pgrid, _, _) = planning_grid(cfg)?;
        let (_, img) = overhead(&pgrid, cfg.plan.px_per_m, cfg.dataset.texture_px_per_m)?;
        let pred = predict_dense(&img, &model).map_err(runtime)?;
        img.write_ppm(&dir.join("planning_rgb.ppm")).map_err(runtime)?;
        mu_false_color(&pred).write_ppm(&dir.join("planning_mu.ppm")).map_err(runtime)?;
        let mut w = create(&dir.join("planning_mu.csv"))?;
        write_mu_csv(&pred, &mut w)?;
        w.flush()?;
        Ok(())
    })
}

pub fn measure_cost(store: &Store, cfg: &ExperimentConfig, mode: &str) -> Result<PathBuf, PipelineError> {
    let id = cost_id(cfg, mode)?;
    let (policy, pid) = load_policy(store, cfg, cfg.cost_variant(), cfg.first_seed())?;
    store.build(&id, |dir| {
        let curve = measure_cost_curve(
            &policy,
            &pid.key,
            mode_of(mode)?,
            &mu_grid(cfg.cost.grid_points),
            &cfg.cost_protocol(),
            hash_key(cfg.first_seed(), &[0x636f_7374]),
        )
        .map_err(runtime)?;
        let mut w = create(&dir.join(format!("cost_{mode}.csv")))?;
        curve.write_csv(&mut w)?;
        w.flush()?;
        let mut w = create(&dir.join("speed.csv"))?;
        writeln!(w, "mu,speed_m_per_s")?;
        for (m, s) in curve.mu_grid.iter().zip(&curve.speed) {
            writeln!(w, "{m:.6},{s:.6}")?;
        }
        w.flush()?;
        Ok(())
    })
}

pub fn read_cost_curve(store: &Store, cfg: &ExperimentConfig, mode: &str) -> Result<CostCurve, PipelineError> {
    let dir = store.require(&cost_id(cfg, mode)?, "measure-cost")?;
    CostCurve::read_csv(&fs::read_to_string(dir.join(format!("cost_{mode}.csv")))?).map_err(runtime)
}

/// Row-major μ values of a dense-prediction CSV, with its width and height.
pub fn read_mu_csv(path: &Path) -> Result<(Vec<f32>, usize, usize), PipelineError> {
    let text = fs::read_to_string(path)?;
    let mut mu = Vec::new();
    let (mut w, mut h) = (0, 0);
    for line in text.lines().filter(|l| !l.is_empty()) {
        let row: Vec<f32> = line
            .split(',')
            .map(|s| s.trim().parse().map_err(|_| runtime(format!("bad value in {}", path.display()))))
            .collect::<Result<_, _>>()?;
        if h > 0 && row.len() != w {
            return Err(runtime(format!("ragged rows in {}", path.display())));
        }
        w = row.len();
        h += 1;
        mu.extend(row);
    }
    Ok((mu, w, h))
}

/// Cell containing a world point.
pub fn cell_of(map: &CostMap, p: [f64; 2]) -> CellIdx {
    let r = ((p[1] / map.cell_m) as usize).min(map.rows - 1);
    let c = ((p[0] / map.cell_m) as usize).min(map.cols - 1);
    (r, c)
}

/// Path length (m) and ∫μ ds of a path under the true terrain.
pub fn path_mu_integral(map: &CostMap, path: &GridPath, grid: &TerrainGrid) -> (f64, f64) {
    let center = |c: CellIdx| [(c.1 as f64 + 0.5) * map.cell_m, (c.0 as f64 + 0.5) * map.cell_m];
    let mu = |c: CellIdx| {
        let p = center(c);
        grid.query_params(p[0], p[1]).map(|t| t.mu).unwrap_or(f64::NAN)
    };
    let (mut len, mut integral) = (0.0, 0.0);
    for w in path.cells.windows(2) {
        let (a, b) = (center(w[0]), center(w[1]));
        let d = (a[0] - b[0]).hypot(a[1] - b[1]);
        len += d;
        integral += d * 0.5 * (mu(w[0]) + mu(w[1]));
    }
    (len, integral)
}

/// One planned route per cost curve over the same μ raster.
pub struct ModePlan {
    pub mode: String,
    pub map: CostMap,
    pub path: GridPath,
}

#[allow(clippy::too_many_arguments)]
pub fn plan_modes(
    mu: &[f32],
    width: usize,
    height: usize,
    meters_per_pixel: f64,
    downsample: usize,
    curves: &[&CostCurve],
    start: [f64; 2],
    goal: [f64; 2],
) -> Result<Vec<ModePlan>, PipelineError> {
    curves
        .iter()
        .map(|curve| {
            let map = build_cost_map(mu, width, height, meters_per_pixel, curve, downsample).map_err(runtime)?;
            let (s, g) = (cell_of(&map, start), cell_of(&map, goal));
            match astar(&map, s, g).map_err(runtime)? {
                PlanOutcome::Found(path) => Ok(ModePlan { mode: curve.mode.name().to_string(), map, path }),
                PlanOutcome::NoPath => Err(runtime(format!("no {} path between start and goal", curve.mode.name()))),
            }
        })
        .collect()
}

pub const PATH_COLORS: [([u8; 3], &str); 2] = [([230, 40, 40], "#e62828"), ([30, 90, 230], "#1e5ae6")];

pub fn plan(store: &Store, cfg: &ExperimentConfig) -> Result<PathBuf, PipelineError> {
    let id = plan_id(cfg)?;
    let pdir = store.require(&predict_id(cfg, cfg.plan_variant(), cfg.first_seed())?, "predict")?;
    let curves = [read_cost_curve(store, cfg, "locomotion")?, read_cost_curve(store, cfg, "dragging")?];
    store.build(&id, |dir| {
        let (mu, w, h) = read_mu_csv(&pdir.join("planning_mu.csv"))?;
        let (grid, start, goal) = planning_grid(cfg)?;
        let plans = plan_modes(
            &mu,
            w,
            h,
            1.0 / cfg.plan.px_per_m,
            cfg.plan.downsample,
            &[&curves[0], &curves[1]],
            start,
            goal,
        )?;
        let base = RgbImage::read_ppm(&pdir.join("planning_rgb.ppm")).map_err(runtime)?;
        let mut overlay = base.clone();
        let mut svgs = Vec::new();
        let mut s = create(&dir.join("plan_summary.csv"))?;
        writeln!(s, "mode,planned_cost,length_m,mu_integral,cells")?;
        for (p, (rgb, hex)) in plans.iter().zip(PATH_COLORS) {
            let mut f = create(&dir.join(format!("costmap_{}.csv", p.mode)))?;
            p.map.write_csv(&mut f)?;
            f.flush()?;
            let mut f = create(&dir.join(format!("path_{}.csv", p.mode)))?;
            write_path_csv(&p.path, &mut f)?;
            f.flush()?;
            overlay = overlay_path(&overlay, &p.map, &p.path, rgb);
            svgs.push(path_svg(&p.map, &p.path, base.width, base.height, hex));
            let (len, integral) = path_mu_integral(&p.map, &p.path, &grid);
            writeln!(s, "{},{:.6},{len:.6},{integral:.6},{}", p.mode, p.path.total, p.path.cells.len())?;
        }
        s.flush()?;
        overlay.write_ppm(&dir.join("paths.ppm")).map_err(runtime)?;
        write_text(&dir.join("paths.svg"), &figures::merge_svgs(&svgs))?;
        Ok(())
    })
}

/// Inputs of `emit-figures`; reports every missing one at once.
pub fn emit_figures(store: &Store, cfg: &ExperimentConfig) -> Result<PathBuf, PipelineError> {
    let id = figures_id(cfg)?;
    let mut missing = Vec::new();
    let mut need = |sid: Result<StageId, PipelineError>, producer: &str| -> Result<Option<PathBuf>, PipelineError> {
        let sid = sid?;
        if store.is_complete(&sid) {
            Ok(Some(store.dir(&sid)))
        } else {
            missing.push(format!("  {} ({}) from `terrasense {producer}`", sid.stage, store.dir(&sid).display()));
            Ok(None)
        }
    };
    let eval = need(eval_id(cfg), "eval-estimator")?;
    let plan_dir = need(plan_id(cfg), "plan")?;
    let mut curves = Vec::new();
    for v in cfg.policy_variants()? {
        for &s in &cfg.seeds {
            curves.push((v, s, need(policy_id(cfg, v, s), "train-policy")?));
        }
    }
    let mut preds = Vec::new();
    for v in cfg.dataset_variants()? {
        for &s in &cfg.seeds {
            preds.push((v, s, need(predict_id(cfg, v, s), "predict")?));
        }
    }
    let mut costs = Vec::new();
    for m in MODES {
        costs.push((m, need(cost_id(cfg, m), "measure-cost")?));
    }
    if !missing.is_empty() {
        return Err(PipelineError::MissingInputs(missing));
    }
    let unwrap = |p: Option<PathBuf>| p.expect("checked above");
    store.build(&id, |dir| {
        // training curves: mean velocity reward over seeds per variant
        let mut series = Vec::new();
        let mut final_rows = String::from("variant,seed,final_vel_reward,final_task_reward,final_mu_mse\n");
        for v in cfg.policy_variants()? {
            let mut acc: Vec<(f64, f64, usize)> = Vec::new();
            for (cv, s, d) in &curves {
                if *cv != v {
                    continue;
                }
                let d = d.as_ref().expect("checked");
                let text = fs::read_to_string(d.join("curves.csv"))?;
                for (i, line) in text.lines().skip(1).enumerate() {
                    let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap_or(f64::NAN)).collect();
                    if acc.len() <= i {
                        acc.push((f[0], 0.0, 0));
                    }
                    acc[i].1 += f[2];
                    acc[i].2 += 1;
                }
                let summary = fs::read_to_string(d.join("summary.csv"))?;
                if let Some(row) = summary.lines().nth(1) {
                    let f: Vec<&str> = row.split(',').collect();
                    let _ = writeln!(final_rows, "{},{s},{},{},{}", v.name(), f[2], f[3], f[4]);
                }
            }
            series.push((v.name().to_string(), acc.iter().map(|a| (a.0, a.1 / a.2 as f64)).collect::<Vec<_>>()));
        }
        write_text(
            &dir.join("training_curves.svg"),
            &figures::line_chart("Velocity-tracking reward", "iteration", "reward", &series),
        )?;
        write_text(&dir.join("final_rewards.csv"), &final_rows)?;

        let eval = unwrap(eval.clone());
        fs::copy(eval.join("estimator_mse.csv"), dir.join("estimator_mse.csv"))?;
        let summary = fs::read_to_string(eval.join("estimator_mse_summary.csv"))?;
        fs::write(dir.join("estimator_mse_summary.csv"), &summary)?;
        let bars: Vec<(String, f64, f64)> = summary
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[0].to_string(), f[1].parse().unwrap_or(f64::NAN), f[2].parse().unwrap_or(0.0))
            })
            .collect();
        write_text(&dir.join("estimator_mse.svg"), &figures::bar_chart("Held-out friction MSE", "MSE", &bars))?;

        let mut cost_series = Vec::new();
        let mut table: Vec<Vec<f64>> = Vec::new();
        for (m, d) in &costs {
            let d = d.as_ref().expect("checked");
            let c = CostCurve::read_csv(&fs::read_to_string(d.join(format!("cost_{m}.csv")))?).map_err(runtime)?;
            if table.is_empty() {
                table = c.mu_grid.iter().map(|&x| vec![x]).collect();
            }
            for (row, v) in table.iter_mut().zip(&c.cost) {
                row.push(*v);
            }
            cost_series
                .push((m.to_string(), c.mu_grid.iter().copied().zip(c.cost.iter().copied()).collect::<Vec<_>>()));
        }
        let mut t = String::from("mu,locomotion_s_per_m,dragging_s_per_m\n");
        for r in &table {
            let _ = writeln!(t, "{}", r.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(","));
        }
        write_text(&dir.join("cost_curves.csv"), &t)?;
        write_text(
            &dir.join("cost_curves.svg"),
            &figures::line_chart("Traversal cost", "friction μ", "seconds per meter", &cost_series),
        )?;

        let mut rm = String::from("variant,seed,frames,rmse_label_window,rmse_all_ground\n");
        for (v, s, d) in &preds {
            let d = d.as_ref().expect("checked");
            let text = fs::read_to_string(d.join("rmse.csv"))?;
            if let Some(row) = text.lines().nth(1) {
                rm.push_str(row);
                rm.push('\n');
            }
            if *s == cfg.first_seed() {
                for k in 0..cfg.vision.preview_frames {
                    for kind in ["rgb", "mu"] {
                        let src = d.join(format!("frame_{k:02}_{kind}.ppm"));
                        if src.exists() {
                            fs::copy(&src, dir.join(format!("prediction_{}_{k:02}_{kind}.ppm", v.name())))?;
                        }
                    }
                }
            }
        }
        write_text(&dir.join("vision_rmse.csv"), &rm)?;

        let plan_dir = unwrap(plan_dir.clone());
        for f in ["plan_summary.csv", "paths.ppm", "paths.svg", "path_locomotion.csv", "path_dragging.csv"] {
            fs::copy(plan_dir.join(f), dir.join(f))?;
        }
        Ok(())
    })
}

/// Every stage in order; returns the figures directory.
pub fn run_all(store: &Store, cfg: &ExperimentConfig) -> Result<PathBuf, PipelineError> {
    cfg.validate()?;
    gen_world(store, cfg)?;
    for v in cfg.policy_variants()? {
        for &s in &cfg.seeds {
            train_policy(store, cfg, v, s)?;
        }
    }
    eval_estimator(store, cfg)?;
    for v in cfg.dataset_variants()? {
        for &s in &cfg.seeds {
            if !cfg.policy_variants()?.contains(&v) {
                train_policy(store, cfg, v, s)?;
            }
            collect_data(store, cfg, v, s)?;
            train_vision_stage(store, cfg, v, s)?;
            predict(store, cfg, v, s)?;
        }
    }
    if !cfg.policy_variants()?.contains(&cfg.cost_variant()) {
        train_policy(store, cfg, cfg.cost_variant(), cfg.first_seed())?;
    }
    for m in MODES {
        measure_cost(store, cfg, m)?;
    }
    plan(store, cfg)?;
    emit_figures(store, cfg)
}
