use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use terrasense::pipeline::{self as pl, ExperimentConfig, PipelineError, Store};
use terrasense::policy::PolicyVariant;

/// Terrain-physics pipeline: train locomotion policies with friction
/// estimation, learn vision from their labels, and plan on the result.
#[derive(Parser, Debug)]
#[command(name = "terrasense", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Experiment config (TOML); the bundled demo config when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output root; stage results go in content-addressed subdirectories.
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, short)]
    jobs: Option<usize>,
    /// Rebuild stages that already have results.
    #[arg(long)]
    force: bool,
    /// Only report errors.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args, Debug, Clone)]
struct Selected {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    select: Select,
}

#[derive(Args, Debug, Clone)]
struct Select {
    /// Restrict to these variants (no-se, passive-se, active-se).
    #[arg(long = "variant")]
    variants: Vec<String>,
    /// Restrict to these seeds.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the experiment world and its images.
    GenWorld(Common),
    /// Train locomotion policies with concurrent state estimation.
    TrainPolicy(Selected),
    /// Evaluate estimator friction error for every trained policy.
    EvalEstimator(Common),
    /// Collect self-labeled camera frames by running trained policies.
    CollectData(Selected),
    /// Train vision models on collected frames.
    TrainVision(Selected),
    /// Score vision models on held-out frames and map the planning world.
    Predict(Selected),
    /// Measure seconds-per-meter cost curves over friction.
    MeasureCost {
        #[command(flatten)]
        common: Common,
        /// locomotion or dragging (default: both).
        #[arg(long = "mode")]
        modes: Vec<String>,
    },
    /// Plan locomotion and dragging routes over the predicted friction map.
    Plan(Common),
    /// Run every stage, then emit figures.
    RunAll(Common),
    /// Collect charts and tables from finished stages.
    EmitFigures(Common),
}

const DEMO_CONFIG: &str = include_str!("../../../configs/demo.toml");

fn load_config(c: &Common) -> Result<ExperimentConfig, PipelineError> {
    match &c.config {
        Some(p) => ExperimentConfig::load(p),
        None => ExperimentConfig::parse(DEMO_CONFIG, PathBuf::from(".")),
    }
}

fn pick<T: Copy + PartialEq + std::fmt::Display>(all: &[T], wanted: &[T], what: &str) -> Result<Vec<T>, PipelineError> {
    if wanted.is_empty() {
        return Ok(all.to_vec());
    }
    for w in wanted {
        if !all.contains(w) {
            return Err(PipelineError::Usage(format!("{what} {w} is not in the config")));
        }
    }
    Ok(wanted.to_vec())
}

fn selection(
    cfg: &ExperimentConfig,
    sel: &Select,
    variants: Vec<PolicyVariant>,
) -> Result<Vec<(PolicyVariant, u64)>, PipelineError> {
    let wanted: Vec<PolicyVariant> = sel
        .variants
        .iter()
        .map(|s| match PolicyVariant::parse(s) {
            None => Err(PipelineError::Usage(format!("unknown variant '{s}'"))),
            Some(v) if !variants.contains(&v) => {
                Err(PipelineError::Usage(format!("variant '{s}' is not in the config")))
            }
            Some(v) => Ok(v),
        })
        .collect::<Result<_, _>>()?;
    let vs = if wanted.is_empty() { variants } else { wanted };
    let seeds = pick(&cfg.seeds, &sel.seeds, "seed")?;
    Ok(vs.iter().flat_map(|&v| seeds.iter().map(move |&s| (v, s))).collect())
}

fn common(cmd: &Command) -> &Common {
    match cmd {
        Command::GenWorld(c)
        | Command::TrainPolicy(Selected { common: c, .. })
        | Command::EvalEstimator(c)
        | Command::CollectData(Selected { common: c, .. })
        | Command::TrainVision(Selected { common: c, .. })
        | Command::Predict(Selected { common: c, .. })
        | Command::Plan(c)
        | Command::RunAll(c)
        | Command::EmitFigures(c) => c,
        Command::MeasureCost { common, .. } => common,
    }
}

fn run(cmd: Command) -> Result<(), PipelineError> {
    let c = common(&cmd).clone();
    if let Some(j) = c.jobs {
        if j == 0 {
            return Err(PipelineError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| PipelineError::Runtime(e.to_string()))?;
    }
    let cfg = load_config(&c)?;
    let store = Store { root: c.out.clone(), force: c.force, verbose: !c.quiet };
    let dirs = match cmd {
        Command::GenWorld(_) => vec![pl::gen_world(&store, &cfg)?],
        Command::TrainPolicy(Selected { select: sel, .. }) => selection(&cfg, &sel, cfg.policy_variants()?)?
            .into_iter()
            .map(|(v, s)| pl::train_policy(&store, &cfg, v, s))
            .collect::<Result<_, _>>()?,
        Command::EvalEstimator(_) => vec![pl::eval_estimator(&store, &cfg)?],
        Command::CollectData(Selected { select: sel, .. }) => selection(&cfg, &sel, cfg.dataset_variants()?)?
            .into_iter()
            .map(|(v, s)| pl::collect_data(&store, &cfg, v, s))
            .collect::<Result<_, _>>()?,
        Command::TrainVision(Selected { select: sel, .. }) => selection(&cfg, &sel, cfg.dataset_variants()?)?
            .into_iter()
            .map(|(v, s)| pl::train_vision_stage(&store, &cfg, v, s))
            .collect::<Result<_, _>>()?,
        Command::Predict(Selected { select: sel, .. }) => selection(&cfg, &sel, cfg.dataset_variants()?)?
            .into_iter()
            .map(|(v, s)| pl::predict(&store, &cfg, v, s))
            .collect::<Result<_, _>>()?,
        Command::MeasureCost { modes, .. } => {
            let all: Vec<&str> = pl::MODES.to_vec();
            let wanted: Vec<&str> = modes.iter().map(String::as_str).collect();
            for m in &wanted {
                pl::mode_of(m)?;
            }
            pick(&all, &wanted, "mode")?
                .into_iter()
                .map(|m| pl::measure_cost(&store, &cfg, m))
                .collect::<Result<_, _>>()?
        }
        Command::Plan(_) => vec![pl::plan(&store, &cfg)?],
        Command::RunAll(_) => vec![pl::run_all(&store, &cfg)?],
        Command::EmitFigures(_) => vec![pl::emit_figures(&store, &cfg)?],
    };
    for d in dirs {
        println!("{}", d.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 1 } else { 2 })
        }
    }
}
