use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::policy::{PolicyVariant, TrainConfig};
use crate::terrain::{parse_world_spec, presets, WorldSpec};
use crate::vision::VisionTrainConfig;

/// One experiment: worlds, seeds and per-stage parameters (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seeds: Vec<u64>,
    /// Variant names (`no-se`, `passive-se`, `active-se`).
    pub variants: Vec<String>,
    pub world: WorldSection,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub dataset: DatasetSection,
    pub vision: VisionSection,
    pub cost: CostSection,
    pub plan: PlanSection,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSection {
    /// `demo`, `two-class`, `quadrant`, or `file` (with `spec`).
    pub preset: String,
    pub spec: Option<PathBuf>,
    pub size_m: f64,
    /// Checkerboard block size of the two-class world.
    pub block_m: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub n_agents: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub minutes: f64,
    pub fps: f64,
    pub agents: usize,
    pub texture_px_per_m: f64,
    /// Variants whose policies collect data.
    pub variants: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisionSection {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub val_fraction: f64,
    /// Held-out frames written as preview images.
    pub preview_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostSection {
    pub n_agents: usize,
    pub horizon_s: f64,
    pub grid_points: usize,
    /// Variant whose first-seed policy is measured.
    pub variant: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSection {
    /// Overhead image resolution of the planning world.
    pub px_per_m: f64,
    /// Image pixels per cost-map cell side.
    pub downsample: usize,
    /// Variant whose first-seed vision model maps the planning world.
    pub vision_variant: String,
    pub world_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            seeds: vec![1, 2, 3],
            variants: PolicyVariant::ALL.iter().map(|v| v.name().to_string()).collect(),
            world: WorldSection::default(),
            train: TrainConfig::default(),
            eval: EvalSection::default(),
            dataset: DatasetSection::default(),
            vision: VisionSection::default(),
            cost: CostSection::default(),
            plan: PlanSection::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl Default for WorldSection {
    fn default() -> Self {
        Self { preset: "demo".into(), spec: None, size_m: 20.0, block_m: 2.0, seed: 7 }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { n_agents: 50 }
    }
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            minutes: 5.0,
            fps: 5.0,
            agents: 8,
            texture_px_per_m: 40.0,
            variants: vec!["active-se".into(), "passive-se".into()],
        }
    }
}

impl Default for VisionSection {
    fn default() -> Self {
        let v = VisionTrainConfig::default();
        Self { lr: v.lr, batch: v.batch, epochs: v.epochs, val_fraction: v.val_fraction, preview_frames: 4 }
    }
}

impl Default for CostSection {
    fn default() -> Self {
        Self {
            n_agents: 50,
            horizon_s: 20.0,
            grid_points: crate::costmap::MU_GRID_POINTS,
            variant: "passive-se".into(),
        }
    }
}

impl Default for PlanSection {
    fn default() -> Self {
        Self { px_per_m: 20.0, downsample: 5, vision_variant: "active-se".into(), world_seed: 11 }
    }
}

fn variant(name: &str) -> Result<PolicyVariant, PipelineError> {
    PolicyVariant::parse(name).ok_or_else(|| {
        PipelineError::Usage(format!("unknown variant '{name}' (expected no-se, passive-se or active-se)"))
    })
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base).map_err(|e| PipelineError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Parse TOML text; relative paths in it resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: PathBuf) -> Result<Self, PipelineError> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Usage(e.to_string()))?;
        cfg.base_dir = base_dir;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.seeds.is_empty() {
            return Err(PipelineError::Usage("config lists no seeds".into()));
        }
        self.policy_variants()?;
        self.dataset_variants()?;
        variant(&self.cost.variant)?;
        variant(&self.plan.vision_variant)?;
        self.train.ppo.validate().map_err(|e| PipelineError::Usage(e.to_string()))?;
        if self.eval.n_agents == 0 || self.cost.n_agents == 0 || self.cost.grid_points < 2 {
            return Err(PipelineError::Usage("eval/cost need agents and at least 2 grid points".into()));
        }
        if self.plan.downsample == 0 || !(self.plan.px_per_m > 0.0) {
            return Err(PipelineError::Usage("plan.downsample and plan.px_per_m must be positive".into()));
        }
        Ok(())
    }

    pub fn policy_variants(&self) -> Result<Vec<PolicyVariant>, PipelineError> {
        self.variants.iter().map(|s| variant(s)).collect()
    }

    pub fn dataset_variants(&self) -> Result<Vec<PolicyVariant>, PipelineError> {
        self.dataset.variants.iter().map(|s| variant(s)).collect()
    }

    pub fn cost_variant(&self) -> PolicyVariant {
        variant(&self.cost.variant).expect("validated")
    }

    pub fn plan_variant(&self) -> PolicyVariant {
        variant(&self.plan.vision_variant).expect("validated")
    }

    pub fn first_seed(&self) -> u64 {
        self.seeds[0]
    }

    /// The experiment world's spec.
    pub fn world_spec(&self) -> Result<WorldSpec, PipelineError> {
        let w = &self.world;
        Ok(match w.preset.as_str() {
            "demo" => presets::default_world_spec(w.size_m, w.size_m),
            "two-class" => presets::two_class_world_spec(w.size_m, w.block_m),
            "quadrant" => presets::quadrant_world_spec(w.size_m),
            "file" => {
                let rel = w
                    .spec
                    .as_ref()
                    .ok_or_else(|| PipelineError::Usage("world.preset = \"file\" needs world.spec".into()))?;
                let path = self.base_dir.join(rel);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| PipelineError::Usage(format!("cannot read world spec {}: {e}", path.display())))?;
                parse_world_spec(&text).map_err(|e| PipelineError::Usage(e.to_string()))?
            }
            other => return Err(PipelineError::Usage(format!("unknown world preset '{other}'"))),
        })
    }

    pub fn vision_train_config(&self) -> VisionTrainConfig {
        let v = &self.vision;
        VisionTrainConfig { lr: v.lr, batch: v.batch, epochs: v.epochs, val_fraction: v.val_fraction }
    }
}
