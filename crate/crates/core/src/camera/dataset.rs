use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{render, CameraError, CameraModel, Pose2};
use crate::policy::{ActMode, TrainedPolicy, VecRunner};
use crate::raster::RgbImage;
use crate::simcore::{obs, OperatingMode, SimParams, StopReason, OMEGA_SCALE};
use crate::terrain::{render_texture, TerrainGrid, TerrainTexture};

/// Planar distance window (m) of trajectory points that become labels.
pub const LABEL_WINDOW_M: (f64, f64) = (1.0, 5.0);

/// One step of a traversal: where the robot was, where it believed it
/// was, and what it believed about the ground there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub step: usize,
    pub truth: Pose2,
    pub est: Pose2,
    pub mu: f64,
    pub rough: f64,
}

/// Dead-reckoned poses from estimated displacements next to the true ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OdometryTrack {
    pub points: Vec<TrackPoint>,
}

impl OdometryTrack {
    pub fn start(pose: Pose2, mu: f64, rough: f64) -> Self {
        Self { points: vec![TrackPoint { step: 0, truth: pose, est: pose, mu, rough }] }
    }

    /// Append the next step given the estimated body-frame displacement of
    /// the step and the measured yaw rate after it.
    pub fn advance(&mut self, truth: Pose2, dx_body: [f64; 2], yaw_rate: f64, dt: f64, mu: f64, rough: f64) {
        let last = *self.points.last().expect("track starts with one point");
        let (s, c) = last.est.psi.sin_cos();
        let est = Pose2 {
            p: [last.est.p[0] + c * dx_body[0] - s * dx_body[1], last.est.p[1] + s * dx_body[0] + c * dx_body[1]],
            psi: last.est.psi + dt * yaw_rate,
        };
        self.points.push(TrackPoint { step: last.step + 1, truth, est, mu, rough });
    }

    /// |x̂_t − x_t| for every point.
    pub fn drift(&self) -> Vec<f64> {
        self.points
            .iter()
            .map(|q| ((q.est.p[0] - q.truth.p[0]).powi(2) + (q.est.p[1] - q.truth.p[1]).powi(2)).sqrt())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub u: f64,
    pub v: f64,
    pub mu: f64,
    pub rough: f64,
    /// Track step whose estimate produced this label.
    pub source_step: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub rgb: RgbImage,
    pub labels: Vec<Label>,
    pub pose_true: Pose2,
    pub pose_est: Pose2,
    pub timestamp: f64,
    pub episode: usize,
    pub step: usize,
    /// Index of the world the frame was captured in.
    pub world: usize,
}

/// Labels for a frame captured at `capture`: every track point whose
/// estimated position lies 1–5 m from the capture position, projected
/// into the camera, past and future alike.
pub fn project_traversal(track: &OdometryTrack, camera: &CameraModel, capture: &Pose2) -> Vec<Label> {
    let (lo, hi) = LABEL_WINDOW_M;
    track
        .points
        .iter()
        .filter_map(|q| {
            let d = ((q.est.p[0] - capture.p[0]).powi(2) + (q.est.p[1] - capture.p[1]).powi(2)).sqrt();
            if !(lo..=hi).contains(&d) {
                return None;
            }
            let [u, v] = camera.project(q.est.p, capture)?;
            Some(Label { u, v, mu: q.mu, rough: q.rough, source_step: q.step })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub minutes: f64,
    pub fps: f64,
    /// Trajectories simulated side by side.
    pub agents: usize,
    pub sim: SimParams,
    pub v_cmd: [f64; 2],
    pub omega_cmd: f64,
    pub texture_px_per_m: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            minutes: 5.0,
            fps: 5.0,
            agents: 8,
            sim: SimParams::default(),
            v_cmd: [1.0, 0.0],
            omega_cmd: 0.0,
            texture_px_per_m: 40.0,
        }
    }
}

impl DatasetConfig {
    pub fn frame_count(&self) -> usize {
        (self.minutes * 60.0 * self.fps).round() as usize
    }

    fn stride(&self) -> usize {
        ((1.0 / (self.fps * self.sim.dt)).round() as usize).max(1)
    }
}

struct Episode {
    world: usize,
    track: OdometryTrack,
}

/// Drive one batch of agents to the end of their episodes.
fn run_batch(
    policy: &TrainedPolicy,
    grids: &[Arc<TerrainGrid>],
    cfg: &DatasetConfig,
    seed: u64,
) -> Result<Vec<Episode>, CameraError> {
    let n = cfg.agents;
    let envs = crate::policy::build_envs_for(grids, n, &cfg.sim, (cfg.v_cmd, cfg.omega_cmd), seed)?;
    let worlds: Vec<usize> = (0..n).map(|i| i % grids.len()).collect();
    let mut runner = VecRunner::new(envs, policy.estimator.history, &crate::policy::noise_seeds(seed, n));
    runner.auto_reset = false;
    runner.reset_all(&policy.estimator)?;
    let mut tracks: Vec<OdometryTrack> = (0..n)
        .map(|e| {
            let s = runner.envs[e].state();
            let est = runner.est[e].clamped();
            OdometryTrack::start(Pose2 { p: s.p, psi: s.psi }, est.mu, est.rough)
        })
        .collect();
    let mut faulted = vec![false; n];
    for e in runner.envs.iter_mut() {
        e.mode = OperatingMode::FreeLocomotion;
    }
    while runner.alive.iter().any(|&a| a) {
        let (_, recs) = runner.step(&policy.ac, &policy.estimator, policy.variant, ActMode::Mean)?;
        for (e, rec) in recs.into_iter().enumerate() {
            let Some(rec) = rec else { continue };
            match rec.step.stop {
                Some(StopReason::Fault) => faulted[e] = true,
                // the last step left the map; nothing to see there
                Some(StopReason::OutOfWorld) => {}
                _ => {
                    let est = rec.est_after.clamped();
                    let s = rec.state_after;
                    tracks[e].advance(
                        Pose2 { p: s.p, psi: s.psi },
                        est.dx,
                        rec.step.obs.values[obs::OMEGA] / OMEGA_SCALE,
                        cfg.sim.dt,
                        est.mu,
                        est.rough,
                    );
                }
            }
        }
    }
    Ok(tracks
        .into_iter()
        .zip(worlds)
        .zip(faulted)
        .filter(|(_, f)| !f)
        .map(|((track, world), _)| Episode { world, track })
        .collect())
}

/// Run the policy, capture frames at `cfg.fps` and label them with the
/// robot's own estimates projected along its estimated trajectory.
pub fn build_dataset(
    policy: &TrainedPolicy,
    grids: &[Arc<TerrainGrid>],
    camera: &CameraModel,
    cfg: &DatasetConfig,
    seed: u64,
) -> Result<Vec<LabeledImage>, CameraError> {
    camera.validate()?;
    if grids.is_empty() || cfg.agents == 0 || !(cfg.fps > 0.0) {
        return Err(CameraError::Config("dataset needs worlds, agents and a positive frame rate".into()));
    }
    let textures: Vec<TerrainTexture> = grids
        .iter()
        .map(|g| render_texture(g, cfg.texture_px_per_m, g.seed))
        .collect::<Result<_, _>>()
        .map_err(|e| CameraError::Config(e.to_string()))?;
    let target = cfg.frame_count();
    let stride = cfg.stride();
    let mut frames = Vec::with_capacity(target);
    let mut episode = 0;
    let mut batch = 0u64;
    while frames.len() < target {
        let eps = run_batch(policy, grids, cfg, crate::terrain::noise::hash_key(seed, &[0x6461_7461, batch]))?;
        batch += 1;
        if eps.is_empty() && batch > 1000 {
            return Err(CameraError::Config("every episode faulted".into()));
        }
        let rendered: Vec<Vec<LabeledImage>> = eps
            .par_iter()
            .enumerate()
            .map(|(i, ep)| {
                ep.track
                    .points
                    .iter()
                    .step_by(stride)
                    .map(|q| LabeledImage {
                        rgb: render(&textures[ep.world], camera, &q.truth),
                        labels: project_traversal(&ep.track, camera, &q.est),
                        pose_true: q.truth,
                        pose_est: q.est,
                        timestamp: q.step as f64 * cfg.sim.dt,
                        episode: episode + i,
                        step: q.step,
                        world: ep.world,
                    })
                    .collect()
            })
            .collect();
        episode += eps.len();
        frames.extend(rendered.into_iter().flatten());
    }
    frames.truncate(target);
    Ok(frames)
}

/// Mean |label μ − true μ| over all labels, the truth read at the ground
/// point seen at the labeled pixel from the true capture pose.
pub fn label_error_vs_truth(frames: &[LabeledImage], grids: &[Arc<TerrainGrid>], camera: &CameraModel) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for f in frames {
        let g = &grids[f.world];
        for l in &f.labels {
            let Some(w) = camera.unproject([l.u, l.v], &f.pose_true) else { continue };
            let Ok(t) = g.query_params(w[0], w[1]) else { continue };
            sum += (l.mu - t.mu).abs();
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

#[derive(Serialize, Deserialize)]
struct FrameMeta {
    file: String,
    pose_true: Pose2,
    pose_est: Pose2,
    timestamp: f64,
    episode: usize,
    step: usize,
    world: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    camera: CameraModel,
    frames: Vec<FrameMeta>,
}

/// Frames as PPM, one label CSV per frame and a JSON manifest.
pub fn write_dataset(dir: &Path, camera: &CameraModel, frames: &[LabeledImage]) -> Result<(), CameraError> {
    fs::create_dir_all(dir)?;
    let mut metas = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        let stem = format!("frame_{i:05}");
        f.rgb.write_ppm(&dir.join(format!("{stem}.ppm")))?;
        let mut w = std::io::BufWriter::new(fs::File::create(dir.join(format!("{stem}.csv")))?);
        writeln!(w, "u,v,mu_hat,rough_hat,source_timestep")?;
        for l in &f.labels {
            writeln!(w, "{},{},{},{},{}", l.u, l.v, l.mu, l.rough, l.source_step)?;
        }
        w.flush()?;
        metas.push(FrameMeta {
            file: stem,
            pose_true: f.pose_true,
            pose_est: f.pose_est,
            timestamp: f.timestamp,
            episode: f.episode,
            step: f.step,
            world: f.world,
        });
    }
    let m = Manifest { camera: camera.clone(), frames: metas };
    let text = serde_json::to_string_pretty(&m).map_err(|e| CameraError::Format(e.to_string()))?;
    fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<(CameraModel, Vec<LabeledImage>), CameraError> {
    let text = fs::read_to_string(dir.join("manifest.json"))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| CameraError::Format(e.to_string()))?;
    let mut frames = Vec::with_capacity(m.frames.len());
    for meta in m.frames {
        let rgb = RgbImage::read_ppm(&dir.join(format!("{}.ppm", meta.file)))?;
        let csv = fs::read_to_string(dir.join(format!("{}.csv", meta.file)))?;
        let mut labels = Vec::new();
        for (ln, line) in csv.lines().enumerate().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || CameraError::Format(format!("{}.csv line {}", meta.file, ln + 1));
            if f.len() != 5 {
                return Err(bad());
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
            labels.push(Label {
                u: num(f[0])?,
                v: num(f[1])?,
                mu: num(f[2])?,
                rough: num(f[3])?,
                source_step: f[4].trim().parse().map_err(|_| bad())?,
            });
        }
        frames.push(LabeledImage {
            rgb,
            labels,
            pose_true: meta.pose_true,
            pose_est: meta.pose_est,
            timestamp: meta.timestamp,
            episode: meta.episode,
            step: meta.step,
            world: meta.world,
        });
    }
    Ok((m.camera, frames))
}
