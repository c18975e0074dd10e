//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid input or configuration,
//! 3 failure while running.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::ambiguity::AmbiguityLabel;
use crate::config::{load_config, ExperimentConfig, NUM_WORKERS_VAR};
use crate::dsa::{read_survey_csv, run_survey, train_dsa, write_survey_csv, DsaFitReport, DsaGate, DsaModel};
use crate::error::{Error, Result};
use crate::trainer::{
    compare_runs, downsample, evaluate, read_metrics_csv, run_to_dir, write_metrics_csv, Actor, Algorithm,
    CheckpointBundle, MetricsRow, Trainer,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

pub const SURVEY_FILE: &str = "survey.csv";
pub const DSA_FILE: &str = "dsa.ckpt";
pub const DSA_REPORT_FILE: &str = "dsa_fit.csv";

#[derive(Debug, Parser)]
#[command(name = "erppo", version, about = "Ambiguity-aware multi-UAV search training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the training algorithm.
    #[arg(long, value_parser = parse_algorithm)]
    algorithm: Option<Algorithm>,
    #[arg(long)]
    quiet: bool,
}

fn parse_algorithm(s: &str) -> std::result::Result<Algorithm, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Survey ambiguity labels over the area and weather grid.
    Survey(Common),
    /// Fit the ambiguity learner to a survey.
    DsaTrain {
        #[command(flatten)]
        common: Common,
        /// Survey CSV; defaults to `<out>/survey.csv`.
        #[arg(long)]
        survey: Option<PathBuf>,
    },
    /// Train a policy.
    Train {
        #[command(flatten)]
        common: Common,
        /// Ambiguity model checkpoint; defaults to `<out>/dsa.ckpt`.
        #[arg(long)]
        dsa: Option<PathBuf>,
        /// Continue from a training checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// With --resume, restart every environment from this seed.
        #[arg(long, requires = "resume")]
        reseed: Option<u64>,
    },
    /// Evaluate a checkpoint and print one metrics row.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        /// Act uniformly at random instead of following the policy.
        #[arg(long)]
        random: bool,
    },
    /// Compare the learning curves of two metrics files.
    Compare { a: PathBuf, b: PathBuf },
    /// Downsample a metrics file for plotting.
    PlotData {
        metrics: PathBuf,
        #[arg(long, default_value_t = 200)]
        points: usize,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

fn resolve(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(a) = common.algorithm {
        cfg.train.algorithm = a;
    }
    cfg.apply_worker_override(std::env::var(NUM_WORKERS_VAR).ok().as_deref())?;
    cfg.validate()?;
    Ok(cfg)
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile {
            path: path.to_path_buf(),
        },
        _ => Error::io(format!("reading {}", path.display()), e),
    })
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Survey(common) => survey(&common),
        Command::DsaTrain { common, survey } => dsa_train(&common, survey),
        Command::Train {
            common,
            dsa,
            resume,
            reseed,
        } => train(&common, dsa, resume, reseed),
        Command::Eval {
            common,
            checkpoint,
            episodes,
            random,
        } => eval(&common, &checkpoint, episodes, random),
        Command::Compare { a, b } => {
            let a = read_metrics_csv(open(&a)?)?;
            let b = read_metrics_csv(open(&b)?)?;
            println!("{}", compare_runs(&a, &b)?);
            Ok(())
        }
        Command::PlotData { metrics, points, out } => {
            if points == 0 {
                return Err(Error::config("points", "must be positive"));
            }
            let rows = downsample(&read_metrics_csv(open(&metrics)?)?, points);
            match out {
                Some(p) => write_metrics_csv(&rows, create(&p)?),
                None => write_metrics_csv(&rows, std::io::stdout().lock()),
            }
        }
    }
}

fn survey(common: &Common) -> Result<()> {
    let cfg = resolve(common)?;
    cfg.echo(&cfg.output_dir)?;
    let data = run_survey(
        &cfg.env,
        &cfg.ambiguity,
        cfg.env.survey_resolution,
        &cfg.dsa.weather_grid(),
        &cfg.dsa.time_samples,
        cfg.seed,
    )?;
    let path = cfg.output_dir.join(SURVEY_FILE);
    let mut w = std::io::BufWriter::new(create(&path)?);
    write_survey_csv(&data, &mut w)?;
    w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    if !common.quiet {
        let ambiguous = data.samples.iter().filter(|s| s.label == AmbiguityLabel::Ambiguous).count();
        eprintln!(
            "surveyed {} points ({ambiguous} ambiguous) -> {}",
            data.samples.len(),
            path.display()
        );
    }
    Ok(())
}

fn write_fit_report(path: &Path, r: &DsaFitReport) -> Result<String> {
    let text = format!(
        "train_mse,heldout_mse,train_accuracy,heldout_accuracy,train_samples,heldout_samples\n{},{},{},{},{},{}\n",
        r.train_mse, r.heldout_mse, r.train_accuracy, r.heldout_accuracy, r.train_samples, r.heldout_samples
    );
    fs::write(path, &text).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(text)
}

fn dsa_train(common: &Common, survey: Option<PathBuf>) -> Result<()> {
    let cfg = resolve(common)?;
    cfg.echo(&cfg.output_dir)?;
    let survey = survey.unwrap_or_else(|| cfg.output_dir.join(SURVEY_FILE));
    let data = read_survey_csv(open(&survey)?)?;
    let (model, report) = train_dsa(&data, &cfg.dsa, cfg.env.area_extent, cfg.env.max_steps, cfg.seed)?;
    model.save(&cfg.output_dir.join(DSA_FILE))?;
    let text = write_fit_report(&cfg.output_dir.join(DSA_REPORT_FILE), &report)?;
    if !common.quiet {
        print!("{text}");
    }
    Ok(())
}

fn load_dsa(cfg: &ExperimentConfig, path: Option<PathBuf>) -> Result<Option<DsaModel>> {
    let needed = cfg.train.algorithm == Algorithm::Erppo && cfg.train.dsa_gate == DsaGate::Learned;
    let path = match path {
        Some(p) => p,
        None => {
            let p = cfg.output_dir.join(DSA_FILE);
            if !needed && !p.exists() {
                return Ok(None);
            }
            p
        }
    };
    let model = DsaModel::load(&path)?;
    if model.extent != cfg.env.area_extent || model.max_steps != cfg.env.max_steps {
        return Err(Error::config(
            "dsa",
            format!("{} was fitted for a different area or episode length", path.display()),
        ));
    }
    Ok(Some(model))
}

fn train(common: &Common, dsa: Option<PathBuf>, resume: Option<PathBuf>, reseed: Option<u64>) -> Result<()> {
    let cfg = resolve(common)?;
    cfg.echo(&cfg.output_dir)?;
    let mut trainer = match resume {
        Some(path) => Trainer::resume(
            cfg.env.clone(),
            cfg.ambiguity,
            cfg.train.clone(),
            CheckpointBundle::load(&path)?,
            reseed,
        )?,
        None => Trainer::new(
            cfg.env.clone(),
            cfg.ambiguity,
            cfg.train.clone(),
            load_dsa(&cfg, dsa)?,
            cfg.seed,
        )?,
    };
    let quiet = common.quiet;
    run_to_dir(&mut trainer, &cfg.output_dir, |row| {
        if !quiet {
            eprintln!(
                "iter {:>5}  steps {:>9}  return {:>8.3}  ambiguity {:.3}  L1 {:.2}",
                row.iteration,
                row.env_steps,
                row.mean_episode_return,
                row.expected_ambiguity_mean,
                row.branch_fraction_l1
            );
        }
    })?;
    Ok(())
}

fn eval(common: &Common, checkpoint: &Path, episodes: usize, random: bool) -> Result<()> {
    let cfg = resolve(common)?;
    if episodes == 0 {
        return Err(Error::config("episodes", "must be positive"));
    }
    let bundle = CheckpointBundle::load(checkpoint)?;
    let actor = if random { Actor::Random } else { Actor::Greedy };
    let mut row: MetricsRow = evaluate(
        &bundle.models,
        &cfg.env,
        &cfg.ambiguity,
        cfg.train.dsa_gate,
        actor,
        episodes,
        cfg.seed,
    )?;
    row.iteration = bundle.iteration;
    row.env_steps = bundle.env_steps;
    write_metrics_csv(&[row], std::io::stdout().lock())
}
