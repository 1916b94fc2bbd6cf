use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lakewatch::config::RunConfig;
use lakewatch::Error;

mod commands;

#[derive(Parser, Debug)]
#[command(
    name = "lakewatch",
    version,
    about = "Lake mapping and area forecasting pipeline"
)]
pub struct Cli {
    /// Run configuration (flat `key = JSON` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Log progress to stderr.
    #[arg(long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic world: monthly stacks, vectors, truth and training tiles.
    Synth {
        #[arg(long, default_value_t = 20)]
        lakes: usize,
        #[arg(long, default_value_t = 64)]
        train_tiles: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Occurrence composites from monthly stacks, optionally land-masked.
    Composite {
        /// Directory of stacks (one subdirectory per epoch).
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        land: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a segmentation model on a tile dataset.
    TrainSeg {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Subset::All)]
        subset: Subset,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tiled, routed inference over occurrence rasters.
    Infer {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        rivers: Option<PathBuf>,
        /// Checkpoint used for non-flood tiles (and flood tiles unless --flood-model is given).
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        flood_model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trace lake polygons from epoch masks and drop wide-river features.
    Vectorize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        rivers: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assign reference lake ids to traced polygons.
    Match {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assemble biennial series with climate and fill short gaps.
    Interpolate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        climate: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the LSTM area forecaster on a series CSV.
    TrainForecast {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Next-epoch forecasts, plus hindcasts of held-out lakes when a split is given.
    Predict {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare series with truth and bin results onto 0.5° cells.
    Eval {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        lakes: Option<PathBuf>,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render an SVG chart or map.
    Plot {
        #[arg(long, value_enum)]
        kind: PlotKind,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Subset {
    All,
    Flood,
    Nonflood,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    Loss,
    Metrics,
    Mse,
    Timeline,
    GridCount,
    GridMean,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 2,
        Error::Input(_) | Error::Format(_) | Error::Alignment(_) | Error::Json(_) => 2,
        Error::Config(_) => 3,
        Error::NonFinite { .. } => 4,
        _ => 1,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Dimension { .. } => "dimension",
        Error::Config(_) => "config",
        Error::Contract(_) => "contract",
        Error::Alignment(_) => "alignment",
        Error::Input(_) => "input",
        Error::NonFinite { .. } => "numerical",
        Error::Format(_) => "format",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    }
}

fn load_config(cli: &Cli) -> lakewatch::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) if !p.exists() => {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("config file {} not found", p.display()),
            )))
        }
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

pub fn require(path: &Path) -> lakewatch::Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("input {} not found", path.display()),
        )))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .format_timestamp(None)
        .init();
    let result = load_config(&cli).and_then(|cfg| commands::run(&cli.command, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = serde_json::json!({ "error": error_kind(&e), "message": e.to_string() });
            eprintln!("{msg}");
            ExitCode::from(exit_code(&e))
        }
    }
}
