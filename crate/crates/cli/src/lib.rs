//! Command-line runner: single training runs, prediction, search sweeps,
//! improvement reports and derivative self-checks.
//!
//! Exit codes are 0 on success, 1 on runtime failure and 2 on a
//! configuration or usage error.

pub mod config;
pub mod error;
pub mod gencheck;
pub mod output;
pub mod predict;
pub mod report;
pub mod sweep;
pub mod train;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use imbaboost::losses::check::Analytic;
use imbaboost::LossKind;

use config::{load_config, ConfigSources, Format};
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "imbaboost", version, about = "Newton boosting with class-balanced losses")]
#[command(after_help = "Any config key can be overridden with a dotted flag, e.g. --booster.learning_rate 0.3")]
pub struct Cli {
    /// JSON config; repeat to layer several files, later ones winning.
    #[arg(long, global = true)]
    pub config: Vec<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Libsvm,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one model with the configured loss and booster settings.
    Train,
    /// Write class probabilities for a data file.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        /// Defaults to predictions.csv in the output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Search and evaluate every (dataset, profile, loss) cell.
    Sweep,
    /// Best baseline against best class-balanced cell per dataset.
    Report {
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
    },
    /// Finite-difference and reduction-identity checks of every loss.
    Gencheck {
        #[arg(long, default_value_t = 1000)]
        draws: usize,
        #[arg(long, hide = true)]
        inject_fault: Option<LossKind>,
    },
}

/// Dotted config keys with their raw values.
pub type Overrides = Vec<(String, String)>;

/// Pulls `--a.b value` and `--a.b=value` pairs out of the arguments.
pub fn split_overrides(args: Vec<String>) -> CliResult<(Vec<String>, Overrides)> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let Some(flag) = a.strip_prefix("--") else {
            rest.push(a);
            continue;
        };
        let (key, inline) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (flag.to_string(), None),
        };
        if !key.contains('.') {
            rest.push(a);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it.next().ok_or_else(|| CliError::Config(format!("--{key} needs a value")))?,
        };
        overrides.push((key, value));
    }
    Ok((rest, overrides))
}

fn execute(cli: &Cli, overrides: &[(String, String)]) -> CliResult<()> {
    let sources = ConfigSources { files: &cli.config, overrides, seed: cli.seed, out: cli.out.as_deref() };
    match &cli.command {
        Command::Train => {
            let cfg = load_config(&sources)?;
            let out = train::train(&cfg)?;
            let m = &out.metrics;
            println!(
                "trained {} rounds (best {}), validation F1 {:.2}",
                m.history.rounds_trained, m.best_iteration, m.valid_f1.value
            );
            println!("model: {}", out.model_path.display());
            println!("metrics: {}", out.metrics_path.display());
        }
        Command::Predict { model, data, format, output } => {
            let cfg = load_config(&sources)?;
            let format = format.map(|f| match f {
                FormatArg::Csv => Format::Csv,
                FormatArg::Libsvm => Format::Libsvm,
            });
            let path = output.clone().unwrap_or_else(|| cfg.out_dir().join("predictions.csv"));
            let n = predict::predict(model, data, format, &path)?;
            println!("wrote {n} rows to {}", path.display());
        }
        Command::Sweep => {
            let cfg = load_config(&sources)?;
            let out = sweep::sweep(&cfg)?;
            let failed = out.rows.iter().filter(|r| r.status != "ok").count();
            println!(
                "{} cells ({} run, {} reused, {failed} failed); summary: {}",
                out.rows.len(),
                out.computed,
                out.rows.len() - out.computed,
                out.summary_path.display()
            );
        }
        Command::Report { summaries } => {
            let cfg = load_config(&sources)?;
            let out = report::report(summaries, &cfg.out_dir())?;
            for d in &out.datasets {
                let i = d.improvement;
                println!(
                    "{:<20} BMP {:>6} CMP {:>6} delta {:>6}",
                    d.dataset,
                    output::pct(i.bmp),
                    output::pct(i.cmp),
                    output::pct(i.delta)
                );
            }
            println!("report: {}", out.improvement_path.display());
            println!("deltas: {}", out.deltas_path.display());
        }
        Command::Gencheck { draws, inject_fault } => {
            let seed = cli.seed.unwrap_or(0);
            let rep = match inject_fault {
                Some(kind) => gencheck::gencheck(*draws, seed, &gencheck::ScaledGradient { kind: *kind, factor: 1.5 }),
                None => gencheck::gencheck(*draws, seed, &Analytic),
            };
            for line in rep.lines() {
                println!("{line}");
            }
            if !rep.passed() {
                return Err(CliError::Runtime(format!("gencheck failed: {}", rep.failing_losses().join(", "))));
            }
        }
    }
    Ok(())
}

/// Runs the command line `args` (program name first) and returns the exit
/// code.
pub fn run(args: Vec<String>) -> i32 {
    let (rest, overrides) = match split_overrides(args) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(rest) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(&cli, &overrides)),
            Err(e) => Err(CliError::Runtime(format!("cannot start {n} threads: {e}"))),
        },
        None => execute(&cli, &overrides),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
