use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::graphon::{Calibration, DEFAULT_K};
use crate::kernel::{NtkVariant, DEFAULT_GRID};
use crate::numerics::{FitRange, Rng};
use crate::prune::{Method, PruneConfig};

/// Environment variable naming the default MNIST directory.
pub const DATA_DIR_ENV: &str = "GPLAB_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    /// MNIST when the files are found, synthetic otherwise.
    #[default]
    Auto,
    Mnist,
    Synthetic,
}

impl std::str::FromStr for DataSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "mnist" => Ok(Self::Mnist),
            "synthetic" => Ok(Self::Synthetic),
            other => Err(Error::Configuration(format!("unknown data source '{other}' (auto|mnist|synthetic)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    /// MNIST directory; falls back to `$GPLAB_DATA_DIR`.
    pub dir: Option<PathBuf>,
    /// Leading samples kept from the training split; `None` keeps all.
    pub subset: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { source: DataSource::Auto, dir: None, subset: Some(5000) }
    }
}

/// The dataset a study actually ran on.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub dataset: Dataset,
    /// "mnist" or "synthetic".
    pub origin: &'static str,
}

impl DataConfig {
    fn mnist_dir(&self) -> Option<PathBuf> {
        self.dir.clone().or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
    }

    fn load_mnist(&self, dir: &Path) -> Result<LoadedData> {
        let ds = Dataset::load_dir(dir)?;
        let ds = match self.subset {
            Some(n) => ds.subset(n)?,
            None => ds,
        };
        Ok(LoadedData { dataset: ds, origin: "mnist" })
    }

    pub fn load(&self, master_seed: u64) -> Result<LoadedData> {
        match self.source {
            DataSource::Mnist => {
                let dir = self.mnist_dir().ok_or_else(|| {
                    Error::MissingData(format!("MNIST requested but no directory given and ${DATA_DIR_ENV} is unset"))
                })?;
                self.load_mnist(&dir)
            }
            DataSource::Synthetic => self.synthetic(master_seed),
            DataSource::Auto => match self.mnist_dir() {
                None => {
                    log::warn!("${DATA_DIR_ENV} is unset; using synthetic data");
                    self.synthetic(master_seed)
                }
                Some(dir) => match self.load_mnist(&dir) {
                    Err(Error::MissingData(msg)) => {
                        log::warn!("{msg}; using synthetic data");
                        self.synthetic(master_seed)
                    }
                    other => other,
                },
            },
        }
    }

    fn synthetic(&self, master_seed: u64) -> Result<LoadedData> {
        let spec = SyntheticSpec { seed: master_seed, ..SyntheticSpec::mnist_like() };
        let n = self.subset.unwrap_or(5000);
        let mut rng = Rng::new(master_seed).child_named("synthetic-pool");
        Ok(LoadedData { dataset: spec.dataset(n, &mut rng)?, origin: "synthetic" })
    }
}

/// Everything a study needs; unspecified TOML keys take these defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    /// Number of hidden layers `L`.
    pub hidden_layers: usize,
    /// Hidden width of the training and kernel studies.
    pub width: usize,
    pub classes: usize,
    pub sparsities: Vec<f64>,
    pub methods: Vec<Method>,
    /// Adds an unpruned baseline cell per seed to the training study.
    pub include_dense: bool,
    /// Adds a constant-graphon kernel per sparsity and seed to the kernel study.
    pub include_constant: bool,
    /// Hidden widths of the convergence study, ascending.
    pub widths: Vec<usize>,
    pub trials: usize,
    pub seeds: Vec<u64>,
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Samples scored by SNIP and GraSP.
    pub score_batch: usize,
    pub kernel_batch: usize,
    /// Run the kernel half of the training study.
    pub kernels: bool,
    pub grid: usize,
    pub k: usize,
    pub variant: NtkVariant,
    pub calibration: Calibration,
    pub top_k: usize,
    /// Power-law fit window; `None` uses `[2, B/2]`.
    pub fit_range: Option<FitRange>,
    pub prune: PruneConfig,
    pub data: DataConfig,
    pub out_dir: PathBuf,
    /// Prefix of every output file name.
    pub tag: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            hidden_layers: 4,
            width: 256,
            classes: 10,
            sparsities: vec![0.9],
            methods: vec![Method::Random, Method::Snip, Method::Grasp, Method::Synflow],
            include_dense: false,
            include_constant: false,
            widths: vec![100, 250, 500, 1000],
            trials: 20,
            seeds: vec![0, 1, 2],
            steps: 200,
            lr: 1e-3,
            batch_size: 128,
            score_batch: 128,
            kernel_batch: 256,
            kernels: false,
            grid: DEFAULT_GRID,
            k: DEFAULT_K,
            variant: NtkVariant::Standard,
            calibration: Calibration::Rescale,
            top_k: 5,
            fit_range: None,
            prune: PruneConfig::default(),
            data: DataConfig::default(),
            out_dir: PathBuf::from("out"),
            tag: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Configuration(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Network widths `[d, n × L, C]` for hidden width `n`.
    pub fn net_widths(&self, input_dim: usize, hidden: usize) -> Vec<usize> {
        let mut w = vec![input_dim];
        w.extend(std::iter::repeat_n(hidden, self.hidden_layers));
        w.push(self.classes);
        w
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Configuration(msg));
        if self.hidden_layers == 0 {
            return bad("hidden_layers must be at least 1".into());
        }
        if self.sparsities.is_empty() || self.methods.is_empty() || self.seeds.is_empty() || self.widths.is_empty() {
            return bad("sparsities, methods, seeds and widths must be nonempty".into());
        }
        if let Some(p) = self.sparsities.iter().find(|p| !(0.0..1.0).contains(*p)) {
            return bad(format!("sparsity {p} is outside [0, 1)"));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return bad("seeds must be distinct".into());
        }
        if self.widths.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("widths {:?} must be strictly ascending", self.widths));
        }
        if self.trials == 0 || self.batch_size == 0 || self.score_batch == 0 || self.kernel_batch == 0 {
            return bad("trials and batch sizes must be at least 1".into());
        }
        if self.k == 0 || !self.grid.is_multiple_of(self.k) {
            return bad(format!("grid {} must be a positive multiple of k = {}", self.grid, self.k));
        }
        if !(self.lr > 0.0) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        Ok(())
    }
}
