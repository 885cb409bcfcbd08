use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pucl_core::classifier::persist;
use pucl_core::config::{Backend, EarlyStop, ExperimentConfig, Task};
use pucl_core::envs::Demonstrations;
use pucl_core::harness::{
    demonstrations, evaluate, run, shifted_env, sweep_dr, transfer_eval, write_grid_predictions,
    write_trace_csv, Learner, Metrics,
};
use pucl_core::io::{
    env_hash, read_trajectories_binary, read_trajectories_csv, write_trajectories_binary,
    write_trajectories_csv, DemoManifest,
};
use pucl_core::pulearn::{Metric, ThresholdMode};
use pucl_core::{ConstraintNet, MemoryBuffer, Trajectory};

#[derive(Parser)]
#[command(
    name = "pucl",
    version,
    about = "Learn unknown constraints from demonstrations"
)]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate and store expert demonstrations.
    GenDemos {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the learning loop and write trace, metrics, net and grid.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum, default_value = "pucl")]
        learner: LearnerArg,
        /// Directory written by `gen-demos`; demonstrations are generated
        /// from the seed otherwise.
        #[arg(long)]
        demos_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a stored network.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        frozen: FrozenArgs,
        #[arg(long)]
        demos_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sensitivity of PUCL to the absolute distance threshold.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2, 3, 4])]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a stored network on a variant with shifted goal and starts.
    Transfer {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        frozen: FrozenArgs,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        goal_shift: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        start_shift: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum LearnerArg {
    Pucl,
    Bc,
}

#[derive(Args)]
struct FrozenArgs {
    /// Network snapshot (`net.bin`).
    #[arg(long)]
    net: PathBuf,
    /// Memory buffer (`buffer.csv`) for the modulation reference points.
    #[arg(long)]
    buffer: Option<PathBuf>,
    /// Planner penalty weight.
    #[arg(long)]
    weight: Option<f64>,
}

/// Experiment settings: a preset or config file, then field overrides.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// Built-in task: reaching2d, reaching3d, velocity or hetero.
    #[arg(long, default_value = "reaching2d")]
    task: Task,
    /// TOML config file; replaces the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    demos: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Absolute distance threshold.
    #[arg(long, conflicts_with = "percentile")]
    d_r: Option<f64>,
    /// Percentile threshold X in (0, 100).
    #[arg(long)]
    percentile: Option<f64>,
    /// Fix the percentile threshold once, from the unconstrained rollouts.
    #[arg(long, requires = "percentile")]
    calibrated: bool,
    #[arg(long)]
    standardize: Option<bool>,
    /// euclidean, manhattan or chebyshev.
    #[arg(long)]
    metric: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// dsm or planner.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    held_out_episodes: Option<usize>,
    #[arg(long)]
    no_early_stop: bool,
    /// DSM rollouts per demonstration start.
    #[arg(long)]
    rollouts_per_start: Option<usize>,
    /// DSM exploration noise std, as a fraction of the speed cap.
    #[arg(long)]
    exploration_noise: Option<f64>,
}

fn parse_enum<T: serde::de::DeserializeOwned>(s: &str, what: &str) -> anyhow::Result<T> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .with_context(|| format!("unknown {what} `{s}`"))
}

impl ConfigArgs {
    fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => {
                ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?
            }
            None => ExperimentConfig::preset(self.task),
        };
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.demos {
            c.demos = v;
        }
        if let Some(v) = self.iterations {
            c.iterations = v;
        }
        if let Some(v) = self.k {
            c.score.k = v;
        }
        if let Some(d_r) = self.d_r {
            c.score.threshold = ThresholdMode::Absolute { d_r };
        }
        if let Some(x) = self.percentile {
            c.score.threshold = if self.calibrated {
                ThresholdMode::CalibratedPercentile { x }
            } else {
                ThresholdMode::Percentile { x }
            };
        }
        if let Some(v) = self.standardize {
            c.score.standardize = v;
        }
        if let Some(m) = &self.metric {
            c.score.metric = parse_enum::<Metric>(m, "metric")?;
        }
        if let Some(v) = self.delta {
            c.filter.delta = v;
        }
        if let Some(v) = self.gamma {
            c.env.gamma = v;
        }
        if let Some(v) = self.learning_rate {
            c.train.learning_rate = v;
        }
        if let Some(v) = self.epochs {
            c.train.epochs = v;
        }
        if let Some(v) = &self.hidden {
            c.net.hidden = v.clone();
        }
        if let Some(b) = &self.backend {
            c.backend = parse_enum::<Backend>(b, "backend")?;
        }
        if let Some(v) = self.dt {
            c.env.dt = v;
        }
        if let Some(v) = self.horizon {
            c.env.horizon = v;
        }
        if let Some(v) = self.held_out_episodes {
            c.eval.held_out_episodes = v;
        }
        if let Some(v) = self.rollouts_per_start {
            c.exploration.rollouts_per_start = v;
        }
        if let Some(v) = self.exploration_noise {
            c.exploration.noise = v;
        }
        if self.no_early_stop {
            c.early_stop = None;
        } else if c.early_stop.is_none() && self.config.is_none() && self.task != Task::Hetero {
            c.early_stop = Some(EarlyStop::default());
        }
        c.validate()?;
        Ok(c)
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    serde_json::to_writer_pretty(create(path)?, value)?;
    Ok(())
}

fn save_demos(cfg: &ExperimentConfig, demos: &Demonstrations, dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    write_trajectories_csv(&demos.trajectories, create(&dir.join("demos.csv"))?)?;
    write_trajectories_binary(&demos.trajectories, create(&dir.join("demos.bin"))?)?;
    let manifest = DemoManifest {
        env_hash: env_hash(&cfg.env, &cfg.constraint)?,
        seed: cfg.seed,
        count: demos.trajectories.len(),
        attempts: demos.attempts,
        expert: cfg.expert.clone(),
        reference_returns: demos.reference_returns.clone(),
        trajectories_csv: "demos.csv".into(),
        cache: Some("demos.bin".into()),
    };
    manifest.write(create(&dir.join("manifest.json"))?)?;
    cfg.save(&dir.join("config.toml"))?;
    Ok(())
}

fn load_demos(cfg: &ExperimentConfig, dir: &Path) -> anyhow::Result<Vec<Trajectory>> {
    let manifest = DemoManifest::read(open(&dir.join("manifest.json"))?)?;
    manifest.check(&cfg.env, &cfg.constraint)?;
    let trajs = match &manifest.cache {
        Some(c) if dir.join(c).exists() => read_trajectories_binary(open(&dir.join(c))?)?,
        _ => read_trajectories_csv(open(&dir.join(&manifest.trajectories_csv))?, &cfg.env)?,
    };
    if trajs.len() != manifest.count {
        bail!(
            "manifest lists {} demonstrations, found {}",
            manifest.count,
            trajs.len()
        );
    }
    Ok(trajs)
}

fn demos_for(cfg: &ExperimentConfig, dir: Option<&Path>) -> anyhow::Result<Vec<Trajectory>> {
    match dir {
        Some(d) => load_demos(cfg, d),
        None => Ok(demonstrations(cfg)?.trajectories),
    }
}

fn load_frozen(frozen: &FrozenArgs) -> anyhow::Result<(ConstraintNet, MemoryBuffer)> {
    let net = persist::read_binary(open(&frozen.net)?)?;
    let buffer = match &frozen.buffer {
        Some(p) => MemoryBuffer::read_csv(open(p)?)?,
        None => MemoryBuffer::new(),
    };
    Ok((net, buffer))
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    name: &'a str,
    learner: Learner,
    seed: u64,
    iterations_run: usize,
    stopped_early: bool,
    final_loss: Option<f64>,
    final_weight: f64,
    wall_seconds: f64,
    metrics: &'a Metrics,
}

fn report(metrics: &Metrics) -> ExitCode {
    if metrics.complete() {
        ExitCode::SUCCESS
    } else {
        eprintln!("missing metrics: {}", metrics.missing.join(", "));
        ExitCode::from(2)
    }
}

fn execute(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::GenDemos { cfg, out } => {
            let cfg = cfg.resolve()?;
            let demos = demonstrations(&cfg)?;
            save_demos(&cfg, &demos, &out)?;
            println!(
                "{} demonstrations ({} draws) written to {}",
                demos.trajectories.len(),
                demos.attempts,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Train {
            cfg,
            learner,
            demos_dir,
            out,
        } => {
            let cfg = cfg.resolve()?;
            let learner = match learner {
                LearnerArg::Pucl => Learner::Pucl,
                LearnerArg::Bc => Learner::Bc,
            };
            let demos = demos_for(&cfg, demos_dir.as_deref())?;
            fs::create_dir_all(&out)?;
            cfg.save(&out.join("config.toml"))?;
            let result = run(&cfg, learner, &demos)?;
            write_trace_csv(&result.trace, create(&out.join("trace.csv"))?)?;
            persist::write_binary(&result.net, create(&out.join("net.bin"))?)?;
            fs::write(out.join("net.txt"), persist::to_text(&result.net))?;
            result.buffer.write_csv(create(&out.join("buffer.csv"))?)?;
            write_grid_predictions(&cfg, &result.net, create(&out.join("grid.csv"))?)?;
            let metrics = evaluate(
                &cfg,
                &result.net,
                result.buffer.points(),
                &demos,
                result.final_weight,
            )?;
            write_json(
                &out.join("metrics.json"),
                &TrainSummary {
                    name: &cfg.name,
                    learner,
                    seed: cfg.seed,
                    iterations_run: result.trace.len(),
                    stopped_early: result.stopped_early,
                    final_loss: result.trace.last().map(|r| r.loss),
                    final_weight: result.final_weight,
                    wall_seconds: result.wall_seconds,
                    metrics: &metrics,
                },
            )?;
            println!("{}", serde_json::to_string(&metrics)?);
            Ok(report(&metrics))
        }
        Command::Eval {
            cfg,
            frozen,
            demos_dir,
            out,
        } => {
            let cfg = cfg.resolve()?;
            let (net, buffer) = load_frozen(&frozen)?;
            let demos = demos_for(&cfg, demos_dir.as_deref())?;
            fs::create_dir_all(&out)?;
            let weight = frozen.weight.unwrap_or(cfg.planner.initial_weight);
            let metrics = evaluate(&cfg, &net, buffer.points(), &demos, weight)?;
            write_grid_predictions(&cfg, &net, create(&out.join("grid.csv"))?)?;
            write_json(&out.join("metrics.json"), &metrics)?;
            println!("{}", serde_json::to_string(&metrics)?);
            Ok(report(&metrics))
        }
        Command::Sweep {
            cfg,
            values,
            seeds,
            out,
        } => {
            let cfg = cfg.resolve()?;
            let rows = sweep_dr(&cfg, &values, &seeds)?;
            fs::create_dir_all(&out)?;
            write_json(&out.join("sweep.json"), &rows)?;
            let mut csv = String::from("d_r,iou_mean,iou_std,unsafe_mean,unsafe_std,partial\n");
            let f = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
            for r in &rows {
                csv.push_str(&format!(
                    "{:?},{},{},{},{},{}\n",
                    r.d_r,
                    f(r.iou_mean),
                    f(r.iou_std),
                    f(r.unsafe_mean),
                    f(r.unsafe_std),
                    r.partial
                ));
            }
            fs::write(out.join("sweep.csv"), &csv)?;
            print!("{csv}");
            for c in rows
                .iter()
                .flat_map(|r| &r.cells)
                .filter(|c| c.error.is_some())
            {
                eprintln!(
                    "d_r {} seed {}: {}",
                    c.d_r,
                    c.seed,
                    c.error.as_deref().unwrap_or("")
                );
            }
            Ok(if rows.iter().any(|r| r.partial) {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Transfer {
            cfg,
            frozen,
            goal_shift,
            start_shift,
            out,
        } => {
            let cfg = cfg.resolve()?;
            let (net, buffer) = load_frozen(&frozen)?;
            let dim = cfg.env.state_dim();
            let goal_shift = if goal_shift.is_empty() {
                vec![0.0; dim]
            } else {
                goal_shift
            };
            let start_shift = if start_shift.is_empty() {
                vec![0.0; cfg.env.starts.lower.len()]
            } else {
                start_shift
            };
            let variant = shifted_env(&cfg.env, &goal_shift, &start_shift)?;
            let weight = frozen.weight.unwrap_or(cfg.planner.initial_weight);
            let m = transfer_eval(&cfg, &net, buffer.points(), &variant, weight)?;
            fs::create_dir_all(&out)?;
            write_json(&out.join("transfer.json"), &m)?;
            println!("{}", serde_json::to_string(&m)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
