mod commands;
mod report;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Perceptual consistency for video semantic segmentation.
#[derive(Parser)]
#[command(name = "percon", version)]
struct Cli {
    /// Worker threads for matching (defaults to all cores).
    #[arg(long, global = true, env = "PERCON_THREADS")]
    threads: Option<usize>,

    /// Training-loss weight, recorded in run_config.json only.
    #[arg(long, global = true)]
    lambda: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Input {
    /// Video manifest (JSON).
    #[arg(long)]
    pub manifest: PathBuf,

    /// Video to process; may be omitted when the manifest holds one video.
    #[arg(long)]
    pub video: Option<String>,

    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,

    /// Search window radius in feature pixels (full frame when omitted).
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Consistency between two frames of one video.
    PcPair {
        #[command(flatten)]
        input: Input,
        /// The two 1-based frame indices.
        #[arg(long, num_args = 2, value_names = ["T_A", "T_B"], required = true)]
        frames: Vec<usize>,
    },
    /// Temporal consistency over consecutive frames.
    PcVideo {
        #[command(flatten)]
        input: Input,
        /// Use ground truth on even frames and report the true mIoU of each predicted frame.
        #[arg(long)]
        alternate_gt: bool,
    },
    /// Per-pixel correctness scores for unlabeled frames.
    Predict {
        #[command(flatten)]
        input: Input,
        /// Weight of the consistency term in the fused score.
        #[arg(long, default_value_t = 1.0)]
        fusion_weight: f64,
        /// Treat frames 1, 1+N, 1+2N, ... as labeled; the remaining ground truth is held out for scoring.
        #[arg(long)]
        label_every: Option<usize>,
    },
    /// Optical-flow temporal consistency baseline.
    FlowTc {
        #[command(flatten)]
        input: Input,
        /// Evaluate the ground-truth segmentation instead of the prediction.
        #[arg(long)]
        on_gt: bool,
    },
    /// Correlation between two per-pair CSV columns.
    EvalCorr {
        a: PathBuf,
        b: PathBuf,
        /// Column of the first file (defaults to its last column).
        #[arg(long)]
        col_a: Option<String>,
        /// Column of the second file (defaults to its last column).
        #[arg(long)]
        col_b: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Windowed consistency loss over every video in a manifest.
    Loss {
        #[command(flatten)]
        input: Input,
        /// Temporal window: frames t and t+d are compared for d < SPAN.
        #[arg(long)]
        span: usize,
    },
    /// Class agreement of feature matches between consecutive ground-truth frames.
    Agreement {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = 10)]
        topk: usize,
    },
    /// Line plot of two CSV columns as SVG.
    Plot {
        csv: PathBuf,
        /// Output SVG file.
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the second-to-last column.
        #[arg(long)]
        x_col: Option<String>,
        /// Defaults to the last column.
        #[arg(long)]
        y_col: Option<String>,
    },
}

#[derive(Debug)]
pub enum CliError {
    /// Bad input data or arguments.
    Input(String),
    Internal(String),
}

impl CliError {
    pub fn output(path: &Path, e: std::io::Error) -> Self {
        CliError::Internal(format!("cannot write {}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl From<percon::Error> for CliError {
    fn from(e: percon::Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Internal(e.to_string())
        }
    }
}

pub struct Globals {
    pub threads: Option<usize>,
    pub lambda: Option<f64>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Input("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let g = Globals {
        threads: cli.threads,
        lambda: cli.lambda,
    };
    match cli.command {
        Command::PcPair { input, frames } => commands::pc_pair(&g, &input, frames[0], frames[1]),
        Command::PcVideo {
            input,
            alternate_gt,
        } => commands::pc_video(&g, &input, alternate_gt),
        Command::Predict {
            input,
            fusion_weight,
            label_every,
        } => commands::predict(&g, &input, fusion_weight, label_every),
        Command::FlowTc { input, on_gt } => commands::flow_tc(&g, &input, on_gt),
        Command::EvalCorr {
            a,
            b,
            col_a,
            col_b,
            out,
        } => commands::eval_corr(&a, &b, col_a.as_deref(), col_b.as_deref(), &out),
        Command::Loss { input, span } => commands::loss(&g, &input, span),
        Command::Agreement { input, topk } => commands::agreement(&g, &input, topk),
        Command::Plot {
            csv,
            out,
            x_col,
            y_col,
        } => commands::plot(&csv, &out, x_col.as_deref(), y_col.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("percon: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
