//! `twinsync` command-line driver: identify a twin model, run the twin
//! architectures against the simulated plant, and compare their summaries.

use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use twinsync::config::{Config, ModelFile};
use twinsync::metrics::{comparison_csv, RunSummary};
use twinsync::twin::{run_architecture, RunTrace};
use twinsync::Architecture;

const MODEL_FILE: &str = "model.toml";
const COMPARISON_FILE: &str = "comparison.csv";

#[derive(Parser)]
#[command(name = "twinsync", version, about = "Digital-twin synchronization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collect closed-loop data, fit the ARX twin model and write model.toml.
    Identify(Common),
    /// Run one or all twin architectures and write traces and summaries.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "all")]
        arch: ArchSelector,
        /// Twin model file. Defaults to <out>/model.toml, identified on the
        /// fly when absent.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Tabulate the summaries found in the output directory.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Summary files to compare instead of <out>/summary_arch*.txt.
        summaries: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file; the shipped reference scenario when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override. For `identify` this replaces the identification
    /// record seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Experiment duration override (s).
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchSelector {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    #[value(name = "3")]
    Three,
    All,
}

impl ArchSelector {
    fn architectures(self) -> Vec<Architecture> {
        match self {
            ArchSelector::One => vec![Architecture::ControllerReplay],
            ArchSelector::Two => vec![Architecture::KalmanObserver],
            ArchSelector::Three => vec![Architecture::TrackingPid],
            ArchSelector::All => Architecture::ALL.to_vec(),
        }
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Identify(common) => cmd_identify(&common),
        Command::Run { common, arch, model } => cmd_run(&common, arch, model.as_deref()),
        Command::Compare { common, summaries } => cmd_compare(&common, &summaries),
    }
}

fn load_config(common: &Common) -> Result<Config> {
    let mut cfg = match &common.config {
        Some(path) => Config::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => Config::reference(),
    };
    if let Some(d) = common.duration {
        cfg.experiment.duration = d;
    }
    cfg.validate().context("invalid configuration")?;
    Ok(cfg)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn identify(cfg: &Config, out: &Path) -> Result<ModelFile> {
    let model = cfg.identify().context("system identification failed")?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write(&out.join(MODEL_FILE), &model.to_toml())?;
    Ok(model)
}

fn cmd_identify(common: &Common) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(seed) = common.seed {
        cfg.sysid.seed = seed;
    }
    let model = identify(&cfg, &common.out)?;
    let o = model.identification.orders;
    println!(
        "ARX(na={}, nb={}, nk={}) held-out fit {:.2}% -> {}",
        o.na,
        o.nb,
        o.nk,
        model.identification.fit_percent,
        common.out.join(MODEL_FILE).display()
    );
    Ok(())
}

fn cmd_run(common: &Common, selector: ArchSelector, model_path: Option<&Path>) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(seed) = common.seed {
        cfg.experiment.seed = seed;
    }
    fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    let default_model = common.out.join(MODEL_FILE);
    let model = match model_path {
        Some(p) => ModelFile::load(p).with_context(|| format!("loading model {}", p.display()))?,
        None if default_model.exists() => {
            ModelFile::load(&default_model).with_context(|| format!("loading model {}", default_model.display()))?
        }
        None => identify(&cfg, &common.out)?,
    };
    let scenario = cfg.scenario(model.model);
    let archs = selector.architectures();

    // each architecture owns its physical loop and RNG streams, so parallel
    // runs produce the same bytes as sequential ones
    let traces: Vec<twinsync::Result<RunTrace<f64>>> = thread::scope(|s| {
        let scenario = &scenario;
        let handles: Vec<_> = archs.iter().map(|&a| s.spawn(move || run_architecture(scenario, a))).collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });

    let mut summaries = Vec::new();
    for (arch, trace) in archs.iter().zip(traces) {
        let trace = trace.with_context(|| format!("architecture {} failed", arch.number()))?;
        let summary = RunSummary::from_trace(&trace, scenario.divergence_bound)?;
        write(&common.out.join(format!("trace_arch{}.csv", arch.number())), &trace.to_csv())?;
        write(&common.out.join(format!("summary_arch{}.txt", arch.number())), &summary.to_record())?;
        print_summary(&summary);
        summaries.push(summary);
    }
    if summaries.len() >= 2 {
        write(&common.out.join(COMPARISON_FILE), &comparison_csv(&summaries)?)?;
    }
    Ok(())
}

fn print_summary(s: &RunSummary<f64>) {
    let settling = s.settling_time.map_or_else(|| "never".to_string(), |t| format!("{t:.2} s"));
    let diverged = s.diverged.map_or_else(|| "no".to_string(), |t| format!("at {t:.2} s"));
    println!(
        "arch {}: mean |e| {:.5}, settling {settling}, diverged {diverged}",
        s.architecture.number(),
        s.mean_abs_error_full
    );
}

fn cmd_compare(common: &Common, explicit: &[PathBuf]) -> Result<()> {
    let paths: Vec<PathBuf> = if explicit.is_empty() {
        Architecture::ALL
            .iter()
            .map(|a| common.out.join(format!("summary_arch{}.txt", a.number())))
            .filter(|p| p.exists())
            .collect()
    } else {
        explicit.to_vec()
    };
    if paths.len() < 2 {
        bail!("compare needs at least two summaries, found {} in {}", paths.len(), common.out.display());
    }
    let mut summaries = Vec::new();
    for p in &paths {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        summaries.push(RunSummary::<f64>::from_record(&text).with_context(|| format!("parsing {}", p.display()))?);
    }
    let table = comparison_csv(&summaries)?;
    fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    write(&common.out.join(COMPARISON_FILE), &table)?;
    print!("{table}");
    Ok(())
}
