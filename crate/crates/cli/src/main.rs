//! `ma-chansim`: synthesize, extract, model, select, evaluate and report.
//!
//! Exit codes: 0 success, 1 I/O, 2 configuration, 3 numerical failure.

mod commands;
mod config;
mod error;

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ma_chansim::portselect::{MaConfig, Scheme};
use ma_chansim::rayextract::Window;

use commands::{Context, KindSelection, SchemeSelection};
use config::RunConfig;
use error::CliError;

/// Environment variable that overrides `--out`.
const OUT_ENV: &str = "MA_CHANSIM_OUT";

#[derive(Parser)]
#[command(
    name = "ma-chansim",
    version,
    about = "Movable-antenna channel simulation and evaluation"
)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for random generation (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (MA_CHANSIM_OUT takes precedence).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker thread cap; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    All,
    Los,
    Reflected,
}

#[derive(Clone, Copy, ValueEnum)]
enum WindowArg {
    None,
    Hann,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    All,
    Uniform,
    Greedy,
    Worst,
}

fn parse_ma(s: &str) -> Result<MaConfig, String> {
    let (m, n) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected MxN, got {s:?}"))?;
    let m = m.trim().parse().map_err(|e| format!("{m:?}: {e}"))?;
    let n = n.trim().parse().map_err(|e| format!("{n:?}: {e}"))?;
    Ok(MaConfig::new(m, n))
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the two-ray wideband dataset.
    Synth,
    /// Extract per-port LoS and reflected ray maps.
    Extract {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "all")]
        kind: KindArg,
        #[arg(long, value_enum, default_value = "none")]
        window: WindowArg,
    },
    /// Estimate the row covariance matrices of a narrowband slice.
    Cov {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Also fit the periodic magnitude-covariance model.
        #[arg(long)]
        fit: bool,
    },
    /// Generate correlated channel samples from a covariance file.
    Genchan {
        #[arg(long)]
        cov: Option<PathBuf>,
        /// Read a magnitude model and generate path gains.
        #[arg(long)]
        magnitude: bool,
        #[arg(long)]
        count: Option<usize>,
        /// Source rows for the empirical-rows generator.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Select MA positions in a centered area.
    Select {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// MA shape as MxN.
        #[arg(long, value_parser = parse_ma)]
        ma: Option<MaConfig>,
        #[arg(long)]
        area: Option<usize>,
        #[arg(long, value_enum, default_value = "all")]
        scheme: SchemeArg,
    },
    /// Power sweeps and the improvement table.
    Evaluate {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Run every stage on a freshly synthesized dataset.
    Report,
}

fn run(cli: Cli) -> Result<Vec<String>, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = std::env::var_os(OUT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .or(cli.out)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let ctx = Context::new(cfg, out)?;
    match cli.command {
        Command::Synth => commands::synth(&ctx),
        Command::Extract { dataset, kind, window } => {
            let kinds = match kind {
                KindArg::All => KindSelection::All,
                KindArg::Los => KindSelection::Los,
                KindArg::Reflected => KindSelection::Reflected,
            };
            let window = match window {
                WindowArg::None => Window::None,
                WindowArg::Hann => Window::Hann,
            };
            commands::extract(&ctx, dataset.as_deref(), kinds, window)
        }
        Command::Cov { dataset, fit } => commands::cov(&ctx, dataset.as_deref(), fit),
        Command::Genchan {
            cov,
            magnitude,
            count,
            dataset,
        } => commands::genchan(&ctx, cov.as_deref(), magnitude, count, dataset.as_deref()),
        Command::Select {
            dataset,
            ma,
            area,
            scheme,
        } => {
            let schemes = match scheme {
                SchemeArg::All => SchemeSelection::All,
                SchemeArg::Uniform => SchemeSelection::One(Scheme::UniformRegion),
                SchemeArg::Greedy => SchemeSelection::One(Scheme::Greedy),
                SchemeArg::Worst => SchemeSelection::One(Scheme::WorstRegion),
            };
            commands::select(&ctx, dataset.as_deref(), ma, area, schemes)
        }
        Command::Evaluate { dataset } => commands::evaluate(&ctx, dataset.as_deref()),
        Command::Report => commands::report(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(outputs) => {
            let mut stdout = std::io::stdout().lock();
            for name in outputs {
                if writeln!(stdout, "{name}").is_err() {
                    break;
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
