use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data::Normalization;
use crate::experiments::{DataSource, Figure, Scale};
use crate::graphon::{Calibration, DEFAULT_K};
use crate::kernel::{NtkVariant, DEFAULT_GRID};
use crate::net::{Loss, PruneScope};
use crate::prune::Method;

/// Graphon limits of pruning masks and graphon neural tangent kernels.
///
/// Results go to standard output as JSON; diagnostics go to standard error.
/// Exit codes: 2 for argument errors, 3 for data errors, 1 for internal errors.
#[derive(Debug, Parser)]
#[command(name = "gplab", version)]
pub struct Cli {
    /// Cap on worker threads (default: available parallelism).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// TOML file of `key = value` lines naming this subcommand's flags; flags
    /// given on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Prune a freshly initialized network and write its mask (GPMK).
    Prune(PruneArgs),
    /// Estimate SAS step graphons from a mask file.
    GraphonEstimate(EstimateArgs),
    /// Euclidean distance between two step graphons.
    GraphonDistance(DistanceArgs),
    /// Sample a one-layer mask from a step graphon.
    GraphonSample(SampleArgs),
    /// Compute a graphon NTK on a batch and write it (GPKM).
    Ntk(NtkArgs),
    /// Spectral metrics of kernel files.
    Spectra(SpectraArgs),
    /// Train a (pruned) network with Adam and record its loss.
    Train(TrainArgs),
    /// Regenerate the CSVs behind a figure.
    Reproduce(ReproduceArgs),
}

/// Comma-separated layer widths, input first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Widths(pub Vec<usize>);

impl std::str::FromStr for Widths {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let w = s
            .split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|e| format!("bad width '{t}': {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        if w.len() < 2 || w.contains(&0) {
            return Err(format!("need at least two positive widths, got '{s}'"));
        }
        Ok(Widths(w))
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Where batches come from.
    #[arg(long, default_value = "auto", value_name = "auto|mnist|synthetic")]
    pub data: DataSource,
    /// MNIST directory (default: $GPLAB_DATA_DIR).
    #[arg(long, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    /// Leading training samples used.
    #[arg(long, default_value_t = 5000)]
    pub subset: usize,
}

#[derive(Debug, Clone, Args)]
pub struct PruneArgs {
    #[arg(long, value_name = "random|magnitude|snip|grasp|synflow")]
    pub method: Method,
    /// Fraction of prunable weights removed, in [0, 1).
    #[arg(long)]
    pub sparsity: f64,
    /// Layer widths, e.g. 784,256,256,10.
    #[arg(long)]
    pub widths: Widths,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output mask file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "hidden", value_name = "hidden|all")]
    pub scope: PruneScope,
    /// Threshold each prunable layer separately.
    #[arg(long)]
    pub per_layer: bool,
    #[arg(long, default_value = "cross-entropy", value_name = "cross-entropy|squared-error")]
    pub loss: Loss,
    #[arg(long, default_value_t = 100)]
    pub synflow_rounds: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub grasp_fd_scale: f64,
    /// Samples scored by SNIP and GraSP.
    #[arg(long, default_value_t = 128)]
    pub score_batch: usize,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    /// Input mask file.
    #[arg(long)]
    pub mask: PathBuf,
    /// 1-based weight layer; default: every pruned layer.
    #[arg(long)]
    pub layer: Option<usize>,
    /// Histogram resolution.
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    /// Output JSON file with --layer, otherwise a directory of layer_<l>.json files.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DistanceArgs {
    pub a: PathBuf,
    pub b: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    /// Step graphon JSON.
    #[arg(long)]
    pub graphon: PathBuf,
    #[arg(long)]
    pub n_out: usize,
    #[arg(long)]
    pub n_in: usize,
    /// Target sparsity; default: one minus the graphon mean.
    #[arg(long)]
    pub sparsity: Option<f64>,
    #[arg(long, default_value = "rescale", value_name = "rescale|none")]
    pub calibration: Calibration,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output mask file (one layer).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BatchKind {
    Synthetic,
    Mnist,
}

#[derive(Debug, Clone, Args)]
pub struct NtkArgs {
    /// Step graphon JSON; once for every hidden-to-hidden layer, L−1 times
    /// for one each, or L+1 times for the whole stack.
    #[arg(long)]
    pub graphon: Vec<PathBuf>,
    /// Use the constant graphon W ≡ c on every layer (closed form).
    #[arg(long, conflicts_with = "graphon")]
    pub constant: Option<f64>,
    /// Number of hidden layers L.
    #[arg(long, default_value_t = 2)]
    pub hidden_layers: usize,
    #[arg(long, value_enum, default_value = "synthetic")]
    pub batch: BatchKind,
    /// Batch size B.
    #[arg(long = "b", default_value_t = 64)]
    pub b: usize,
    /// Input dimension of synthetic batches.
    #[arg(long, default_value_t = 784)]
    pub dim: usize,
    #[arg(long, default_value = "unit-sphere", value_name = "unit-sphere|scale-255|none")]
    pub normalization: Normalization,
    /// Grid points R per hidden layer.
    #[arg(long, default_value_t = DEFAULT_GRID)]
    pub grid: usize,
    #[arg(long, default_value = "standard", value_name = "standard|masked-params")]
    pub variant: NtkVariant,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    /// Output kernel file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct SpectraArgs {
    /// Kernel files.
    #[arg(required = true)]
    pub kernels: Vec<PathBuf>,
    /// Eigenvalues counted by the energy metric.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// First index (1-based) of the power-law fit; default 2.
    #[arg(long)]
    pub fit_min: Option<usize>,
    /// Last index of the power-law fit; default B/2.
    #[arg(long)]
    pub fit_max: Option<usize>,
    /// Metadata copied into each row.
    #[arg(long, default_value = "")]
    pub method: String,
    #[arg(long, default_value_t = 0.0)]
    pub sparsity: f64,
    #[arg(long, default_value_t = 0)]
    pub width: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "json")]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Layer widths, e.g. 784,256,256,256,256,10.
    #[arg(long)]
    pub widths: Widths,
    /// Pruning method; omitted means dense.
    #[arg(long, conflicts_with = "mask")]
    pub method: Option<Method>,
    /// Mask file to train under instead of pruning.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long, default_value_t = 0.9)]
    pub sparsity: f64,
    #[arg(long, default_value = "hidden", value_name = "hidden|all")]
    pub scope: PruneScope,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 128)]
    pub score_batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-step loss CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Trained network (GPNN).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ReproduceArgs {
    #[arg(long, value_name = "fig1|fig2|fig3|appC|appD")]
    pub figure: Figure,
    #[arg(long, default_value = "desk", value_name = "desk|full")]
    pub scale: Scale,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// MNIST directory (default: $GPLAB_DATA_DIR).
    #[arg(long, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
}
