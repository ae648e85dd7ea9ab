//! Terrain-property prediction from images: frozen patch features and a
//! linear softmax head per property, trained on self-labeled frames.

mod features;

pub use features::{patch_feature, Feature, FeatureMap, Standardizer, N_FEATURES, PATCH};

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::camera::{CameraModel, LabeledImage, Pose2};
use crate::nn::{
    heads::{cross_entropy, softmax},
    Activation, AdamConfig, AdamState, Checkpoint, CheckpointEntry, Matrix, Mlp, NnError,
};
use crate::policy::shuffle;
use crate::raster::{false_color, RgbImage};
use crate::terrain::{TerrainGrid, MU_MAX, MU_MIN};

pub const N_BINS: usize = 20;

#[derive(Debug, Error)]
pub enum VisionError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("training data: {0}")]
    Data(String),
}

/// `n` equal-width bins over `[lo, hi]`; lower edges closed, the top edge
/// belongs to the last bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bins {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

pub const MU_BINS: Bins = Bins { lo: MU_MIN, hi: MU_MAX, n: N_BINS };
pub const ROUGH_BINS: Bins = Bins { lo: 0.0, hi: 1.0, n: N_BINS };

impl Bins {
    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.n as f64
    }

    /// Bin of `v`; values outside the range fall in the end bins.
    pub fn discretize(&self, v: f64) -> usize {
        let k = ((v - self.lo) / self.width()).floor();
        if k.is_nan() || k < 0.0 {
            0
        } else {
            (k as usize).min(self.n - 1)
        }
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.lo + (k as f64 + 0.5) * self.width()).collect()
    }

    /// Probability-weighted mean of bin centers.
    pub fn expectation(&self, probs: &[f64]) -> f64 {
        self.centers().iter().zip(probs).map(|(c, p)| c * p).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisionTrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    /// Fraction of frames held out for validation.
    pub val_fraction: f64,
}

impl Default for VisionTrainConfig {
    fn default() -> Self {
        Self { lr: 1e-3, batch: 64, epochs: 20, val_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

/// One labeled patch: standardized feature and target bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub feature: Feature,
    pub bin: usize,
}

fn logits_row(m: &Matrix<f32>, r: usize) -> Vec<f64> {
    m.row(r).iter().map(|&v| v as f64).collect()
}

fn eval_head(head: &Mlp<f32>, samples: &[Sample]) -> Result<(f64, f64), VisionError> {
    if samples.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let mut x = Matrix::zeros(samples.len(), N_FEATURES);
    for (i, s) in samples.iter().enumerate() {
        x.row_mut(i).copy_from_slice(&s.feature);
    }
    let out = head.predict(&x)?;
    let (mut loss, mut hits) = (0.0, 0usize);
    for (i, s) in samples.iter().enumerate() {
        let l = logits_row(&out, i);
        loss += cross_entropy(&l, s.bin).0;
        let arg = l.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(k, _)| k).unwrap_or(0);
        hits += (arg == s.bin) as usize;
    }
    let n = samples.len() as f64;
    Ok((loss / n, hits as f64 / n))
}

/// Fit a linear softmax head 16 → `n_bins` by minibatch Adam on mean
/// cross-entropy. Returns the head and per-epoch statistics.
pub fn train_head(
    train: &[Sample],
    val: &[Sample],
    n_bins: usize,
    cfg: &VisionTrainConfig,
    seed: u64,
) -> Result<(Mlp<f32>, Vec<EpochStats>), VisionError> {
    let mut bins: Vec<usize> = train.iter().map(|s| s.bin).collect();
    bins.sort_unstable();
    bins.dedup();
    if bins.len() < 2 {
        return Err(VisionError::Data(format!(
            "labels cover {} bin(s); at least 2 distinct bins are needed",
            bins.len()
        )));
    }
    if cfg.batch == 0 || cfg.epochs == 0 || !(cfg.lr > 0.0) {
        return Err(VisionError::Data("batch, epochs and lr must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut head = Mlp::<f32>::new(&[N_FEATURES, n_bins], Activation::Tanh, 0.1, &mut rng)?;
    let mut adam = AdamState::new(head.param_count(), AdamConfig { lr: cfg.lr, ..Default::default() });
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        shuffle(&mut order, &mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let mut x = Matrix::zeros(chunk.len(), N_FEATURES);
            for (r, &i) in chunk.iter().enumerate() {
                x.row_mut(r).copy_from_slice(&train[i].feature);
            }
            let (out, cache) = head.forward(&x)?;
            let mut g = Matrix::<f32>::zeros(chunk.len(), n_bins);
            let scale = 1.0 / chunk.len() as f64;
            for (r, &i) in chunk.iter().enumerate() {
                let (l, d) = cross_entropy(&logits_row(&out, r), train[i].bin);
                total += l;
                for (dst, v) in g.row_mut(r).iter_mut().zip(d) {
                    *dst = (v * scale) as f32;
                }
            }
            let grads = head.backward(&cache, &g)?;
            adam.step(head.params_mut(), &grads.params);
        }
        let (val_loss, val_accuracy) = eval_head(&head, val)?;
        curve.push(EpochStats { epoch, train_loss: total / train.len().max(1) as f64, val_loss, val_accuracy });
    }
    Ok((head, curve))
}

/// Feature standardization plus one head per property.
#[derive(Debug, Clone, PartialEq)]
pub struct VisionModel {
    pub standardizer: Standardizer,
    pub mu_head: Mlp<f32>,
    pub rough_head: Mlp<f32>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VisionReport {
    pub mu_curve: Vec<EpochStats>,
    pub rough_curve: Vec<EpochStats>,
    pub train_frames: Vec<usize>,
    pub val_frames: Vec<usize>,
    pub n_train_labels: usize,
    pub n_val_labels: usize,
}

/// Hold out `fraction` of the frames (at least one when there are two or
/// more), chosen by a seeded shuffle. Returns (train, validation) indices,
/// each sorted.
pub fn split_frames(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    shuffle(&mut idx, &mut ChaCha8Rng::seed_from_u64(seed));
    let mut k = (n as f64 * fraction).round() as usize;
    if n >= 2 {
        k = k.clamp(1, n - 1);
    } else {
        k = 0;
    }
    let (mut val, mut train) = (idx[..k].to_vec(), idx[k..].to_vec());
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

/// Raw features of every label of every frame, as (frame, feature, μ, r).
fn labeled_features(frames: &[LabeledImage]) -> Vec<Vec<(Feature, f64, f64)>> {
    frames
        .par_iter()
        .map(|f| {
            let map = FeatureMap::of(&f.rgb);
            f.labels
                .iter()
                .map(|l| {
                    let p = map.patch_of(l.u as usize, l.v as usize);
                    (map.feats[p], l.mu, l.rough)
                })
                .collect()
        })
        .collect()
}

/// Train both heads on the labels of `frames`, validating on held-out frames.
pub fn train_vision(
    frames: &[LabeledImage],
    cfg: &VisionTrainConfig,
    seed: u64,
) -> Result<(VisionModel, VisionReport), VisionError> {
    if frames.iter().all(|f| f.labels.is_empty()) {
        return Err(VisionError::Data("dataset has no labels".into()));
    }
    if frames.iter().any(|f| f.rgb.width < PATCH || f.rgb.height < PATCH) {
        return Err(VisionError::Data("frames must be at least one patch in size".into()));
    }
    let (train_idx, val_idx) = split_frames(frames.len(), cfg.val_fraction, seed);
    let per_frame = labeled_features(frames);
    let standardizer = Standardizer::fit(train_idx.iter().flat_map(|&i| per_frame[i].iter().map(|(f, _, _)| f)));
    let collect = |idx: &[usize], bins: &Bins, pick: fn(&(Feature, f64, f64)) -> f64| -> Vec<Sample> {
        idx.iter()
            .flat_map(|&i| per_frame[i].iter())
            .map(|s| Sample { feature: standardizer.apply(&s.0), bin: bins.discretize(pick(s)) })
            .collect()
    };
    let mu_train = collect(&train_idx, &MU_BINS, |s| s.1);
    let mu_val = collect(&val_idx, &MU_BINS, |s| s.1);
    let r_train = collect(&train_idx, &ROUGH_BINS, |s| s.2);
    let r_val = collect(&val_idx, &ROUGH_BINS, |s| s.2);
    let (mu_head, mu_curve) = train_head(&mu_train, &mu_val, N_BINS, cfg, seed ^ 0x6d75)?;
    // a roughness head needs two bins too; fall back to a flat head otherwise
    let (rough_head, rough_curve) = match train_head(&r_train, &r_val, N_BINS, cfg, seed ^ 0x7267) {
        Ok(v) => v,
        Err(VisionError::Data(_)) => (Mlp::zeros(&[N_FEATURES, N_BINS], Activation::Tanh)?, Vec::new()),
        Err(e) => return Err(e),
    };
    let report = VisionReport {
        mu_curve,
        rough_curve,
        n_train_labels: mu_train.len(),
        n_val_labels: mu_val.len(),
        train_frames: train_idx,
        val_frames: val_idx,
    };
    Ok((VisionModel { standardizer, mu_head, rough_head }, report))
}

/// Per-pixel estimates over a whole image plus per-patch probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct DensePrediction {
    pub width: usize,
    pub height: usize,
    pub patch_cols: usize,
    pub patch_rows: usize,
    /// Row-major per-pixel expectations.
    pub mu: Vec<f32>,
    pub rough: Vec<f32>,
    /// Row-major per-patch bin probabilities.
    pub mu_probs: Vec<[f32; N_BINS]>,
    pub rough_probs: Vec<[f32; N_BINS]>,
}

impl DensePrediction {
    pub fn mu_at(&self, x: usize, y: usize) -> f32 {
        self.mu[y * self.width + x]
    }
}

fn head_probs(head: &Mlp<f32>, x: &Matrix<f32>) -> Result<Vec<[f32; N_BINS]>, VisionError> {
    let out = head.predict(x)?;
    Ok((0..x.rows)
        .map(|r| {
            let p = softmax(&logits_row(&out, r));
            let mut a = [0.0f32; N_BINS];
            for (d, v) in a.iter_mut().zip(p) {
                *d = v as f32;
            }
            a
        })
        .collect())
}

/// Predict μ̂ and r̂ for every pixel. Each 8×8 patch's prediction covers
/// its pixels; right and bottom remainders take the nearest full patch.
pub fn predict_dense(img: &RgbImage, model: &VisionModel) -> Result<DensePrediction, VisionError> {
    if img.width < PATCH || img.height < PATCH {
        return Err(VisionError::Data("image smaller than one patch".into()));
    }
    let map = FeatureMap::of(img);
    let mut x = Matrix::zeros(map.feats.len(), N_FEATURES);
    for (r, f) in map.feats.iter().enumerate() {
        x.row_mut(r).copy_from_slice(&model.standardizer.apply(f));
    }
    let mu_probs = head_probs(&model.mu_head, &x)?;
    let rough_probs = head_probs(&model.rough_head, &x)?;
    let to_f64 = |p: &[f32; N_BINS]| p.iter().map(|&v| v as f64).collect::<Vec<_>>();
    let mu_patch: Vec<f32> = mu_probs.iter().map(|p| MU_BINS.expectation(&to_f64(p)) as f32).collect();
    let r_patch: Vec<f32> = rough_probs.iter().map(|p| ROUGH_BINS.expectation(&to_f64(p)) as f32).collect();
    let (w, h) = (img.width, img.height);
    let mut mu = vec![0.0; w * h];
    let mut rough = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let p = map.patch_of(x, y);
            mu[y * w + x] = mu_patch[p];
            rough[y * w + x] = r_patch[p];
        }
    }
    Ok(DensePrediction {
        width: w,
        height: h,
        patch_cols: map.cols,
        patch_rows: map.rows,
        mu,
        rough,
        mu_probs,
        rough_probs,
    })
}

impl VisionModel {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::default();
        c.push("feature_mean", CheckpointEntry::Vector(self.standardizer.mean.to_vec()));
        c.push("feature_std", CheckpointEntry::Vector(self.standardizer.std.to_vec()));
        c.push("mu_head", CheckpointEntry::Net32(self.mu_head.clone()));
        c.push("rough_head", CheckpointEntry::Net32(self.rough_head.clone()));
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self, VisionError> {
        let vec16 = |name: &str| -> Result<[f64; N_FEATURES], VisionError> {
            c.vector(name)?.try_into().map_err(|_| VisionError::Data(format!("{name} must have {N_FEATURES} entries")))
        };
        let standardizer = Standardizer { mean: vec16("feature_mean")?, std: vec16("feature_std")? };
        let head = |name: &str| -> Result<Mlp<f32>, VisionError> {
            let h = c.net32(name)?.clone();
            if h.sizes() != [N_FEATURES, N_BINS] {
                return Err(VisionError::Data(format!("{name} must map {N_FEATURES} → {N_BINS}")));
            }
            Ok(h)
        };
        Ok(Self { standardizer, mu_head: head("mu_head")?, rough_head: head("rough_head")? })
    }

    pub fn save(&self, path: &Path) -> Result<(), VisionError> {
        Ok(self.to_checkpoint().save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, VisionError> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Per-pixel μ̂ as CSV, one image row per line.
pub fn write_mu_csv<W: Write>(pred: &DensePrediction, mut w: W) -> std::io::Result<()> {
    for y in 0..pred.height {
        let row = &pred.mu[y * pred.width..(y + 1) * pred.width];
        let line: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// False-color rendering of μ̂ over [0.25, 3.0].
pub fn mu_false_color(pred: &DensePrediction) -> RgbImage {
    let mut img = RgbImage::new(pred.width, pred.height);
    for y in 0..pred.height {
        for x in 0..pred.width {
            let t = (pred.mu_at(x, y) as f64 - MU_MIN) / (MU_MAX - MU_MIN);
            img.put(x, y, false_color(t));
        }
    }
    img
}

/// Squared-error sum and pixel count of `pred` against the true μ of the
/// ground seen at each pixel; sky and off-map pixels are skipped.
pub fn dense_squared_error(
    pred: &DensePrediction,
    camera: &CameraModel,
    pose: &Pose2,
    grid: &TerrainGrid,
    range_m: (f64, f64),
) -> (f64, usize) {
    let (mut sum, mut n) = (0.0, 0);
    for (i, g) in camera.ground_points(pose).into_iter().enumerate() {
        let Some([x, y]) = g else { continue };
        if !(range_m.0..=range_m.1).contains(&(x - pose.p[0]).hypot(y - pose.p[1])) {
            continue;
        }
        let Ok(t) = grid.query_params(x, y) else { continue };
        sum += (pred.mu[i] as f64 - t.mu).powi(2);
        n += 1;
    }
    (sum, n)
}

/// Per-pixel μ RMSE over a set of frames, scoring ground points whose
/// distance from the robot lies in `range_m`.
pub fn dense_rmse(
    model: &VisionModel,
    frames: &[&LabeledImage],
    camera: &CameraModel,
    grids: &[Arc<TerrainGrid>],
    range_m: (f64, f64),
) -> Result<f64, VisionError> {
    let parts: Vec<(f64, usize)> = frames
        .par_iter()
        .map(|f| {
            let pred = predict_dense(&f.rgb, model)?;
            Ok(dense_squared_error(&pred, camera, &f.pose_true, &grids[f.world], range_m))
        })
        .collect::<Result<_, VisionError>>()?;
    let (s, n) = parts.iter().fold((0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if n == 0 {
        return Err(VisionError::Data("no ground pixels to score".into()));
    }
    Ok((s / n as f64).sqrt())
}

/// Mean predicted μ̂ per terrain class over the ground pixels of one view:
/// class id → (true mean μ, predicted mean μ̂, pixel count).
pub fn class_means(
    pred: &DensePrediction,
    camera: &CameraModel,
    pose: &Pose2,
    grid: &TerrainGrid,
) -> BTreeMap<u16, (f64, f64, usize)> {
    let mut acc: BTreeMap<u16, (f64, f64, usize)> = BTreeMap::new();
    for (i, g) in camera.ground_points(pose).into_iter().enumerate() {
        let Some([x, y]) = g else { continue };
        let Ok(cell) = grid.cell_at(x, y) else { continue };
        let e = acc.entry(cell.class_id).or_default();
        e.0 += cell.mu;
        e.1 += pred.mu[i] as f64;
        e.2 += 1;
    }
    for v in acc.values_mut() {
        v.0 /= v.2 as f64;
        v.1 /= v.2 as f64;
    }
    acc
}
