use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nvscc::config::Config;
use nvscc::pipeline::{export_figure_data, run_pipeline, Figure, PipelineOptions, RunManifest, Stage};
use nvscc::Error;

#[derive(Parser)]
#[command(name = "nv-scc", version, about = "Electrode-confined spin-to-charge readout pipeline")]
struct Cli {
    /// Config file (JSON). The shipped default is used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory for the manifest and outputs.
    #[arg(long, global = true, default_value = "nv-scc-run")]
    out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "NV_SCC_THREADS")]
    threads: Option<usize>,
    /// Stage cache directory (defaults to <out>/cache).
    #[arg(long, global = true)]
    stage_cache: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Electrostatic potential and axial profile.
    Potential,
    /// Valley eigenstates and the merged spectrum.
    Spectrum,
    /// Bulk and confined cross sections, enhancement factor.
    Xsection,
    /// Linewidth channels and the trap/e-p sweeps.
    Broadening,
    /// Contrast and readout fidelity.
    Metrics,
    /// Every stage, then every figure export.
    All,
    /// Copy figure tables from a finished run.
    Export {
        #[arg(long, value_enum, default_value = "all")]
        figure: FigureArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FigureArg {
    Fig2,
    Fig4,
    Fig5,
    Profiles,
    All,
}

impl FigureArg {
    fn figures(self) -> Vec<Figure> {
        match self {
            FigureArg::Fig2 => vec![Figure::Fig2],
            FigureArg::Fig4 => vec![Figure::Fig4],
            FigureArg::Fig5 => vec![Figure::Fig5],
            FigureArg::Profiles => vec![Figure::Profiles],
            FigureArg::All => Figure::ALL.to_vec(),
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => 2,
        Error::Dependency { .. } => 4,
        _ => 3,
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<Config, Error> {
    match path {
        Some(p) => Config::from_path(p).map_err(|e| match e {
            Error::Config { .. } => e,
            other => Error::config("document", other.to_string()),
        }),
        None => Ok(Config::shipped_default()),
    }
}

fn export(cli: &Cli, figures: &[Figure]) -> Result<(), Error> {
    for f in figures {
        for p in export_figure_data(&cli.out, *f)? {
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn summarize(m: &RunManifest) {
    for s in &m.stages {
        let how = if s.cached { "cached" } else { "computed" };
        println!("{:<10} {how:<8} {:>8.1} s  {}", s.stage.name(), s.wall_seconds, s.dir);
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let until = match &cli.command {
        Command::Potential => Stage::Potential,
        Command::Spectrum => Stage::Spectrum,
        Command::Xsection => Stage::Xsection,
        Command::Broadening => Stage::Broadening,
        Command::Metrics | Command::All => Stage::Metrics,
        Command::Export { figure } => return export(cli, &figure.figures()),
    };
    let cfg = load_config(cli.config.as_ref())?;
    let m = run_pipeline(
        &cfg,
        &PipelineOptions {
            out: cli.out.clone(),
            stage_cache: cli.stage_cache.clone(),
            until,
        },
    )?;
    summarize(&m);
    if matches!(cli.command, Command::All) {
        export(cli, &Figure::ALL)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
