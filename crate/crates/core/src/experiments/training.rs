use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::manifest::{write_atomic, Manifest};
use super::output_name;
use crate::data::{make_batch, Dataset, Normalization, Source};
use crate::error::{Error, Result};
use crate::graphon::{estimate_sas, sample_mask, StepGraphon};
use crate::kernel::{graphon_ntk, GraphonStack, NtkOptions};
use crate::net::{AdamConfig, Loss, Mask, MaskedMlp};
use crate::numerics::{FitRange, Rng};
use crate::prune::{prune_at_init, Method};
use crate::spectra::{compare_methods, reports_to_csv, spectral_report, Comparison, ReportMeta, SpectralReport};

/// Training stops, and the trace is flagged, once a loss exceeds this.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

pub const TRACES_HEADER: &str = "method,sparsity,width,seed,lr,batch_size,step,loss";
pub const SUMMARY_HEADER: &str = "method,sparsity,step,mean_loss,runs";
pub const RUNS_HEADER: &str = "method,sparsity,width,seed,steps_completed,diverged,final_loss";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub method: String,
    pub sparsity: f64,
    pub width: usize,
    pub seed: u64,
    pub lr: f64,
    pub batch_size: usize,
    /// Minibatch loss before each update; shorter than requested only when `diverged`.
    pub losses: Vec<f64>,
    pub diverged: bool,
}

/// Adam on mean cross-entropy over fresh minibatches drawn from `data`.
/// Returns the per-step losses and whether training diverged.
pub fn train(
    net: &mut MaskedMlp,
    data: &Dataset,
    steps: usize,
    batch_size: usize,
    lr: f64,
    rng: &mut Rng,
) -> Result<(Vec<f64>, bool)> {
    let adam = AdamConfig { lr, ..AdamConfig::default() };
    let mut losses = Vec::with_capacity(steps);
    for _ in 0..steps {
        let batch = make_batch(Source::Dataset(data), batch_size, Normalization::Scale255, rng)?;
        let cache = match net.forward(&batch.inputs) {
            Ok(c) => c,
            Err(Error::NumericOverflow { .. }) => return Ok((losses, true)),
            Err(e) => return Err(e),
        };
        let (loss, grad) = Loss::CrossEntropy.eval(cache.output(), &batch.labels)?;
        if !loss.is_finite() || loss > DIVERGENCE_LIMIT {
            return Ok((losses, true));
        }
        losses.push(loss);
        let grads = net.backward(&cache, &grad)?;
        net.adam_step(&grads, &adam)?;
    }
    Ok((losses, false))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum CellKind {
    Dense,
    Pruned(Method),
    /// Kernel of the constant graphon at the cell's density; no training.
    Constant,
}

impl CellKind {
    fn name(self) -> String {
        match self {
            CellKind::Dense => "dense".into(),
            CellKind::Pruned(m) => m.name().into(),
            CellKind::Constant => "constant".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CellOutput {
    trace: Option<TrainTrace>,
    /// Report as a CSV row, which keeps NaN and infinity intact.
    report: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TrainingStudy {
    pub traces: Vec<TrainTrace>,
    pub reports: Vec<SpectralReport>,
    pub comparison: Comparison,
    pub data_origin: &'static str,
    pub files: Vec<PathBuf>,
}

impl TrainingStudy {
    /// Mean over seeds of the loss at 1-based `step`, skipping traces that did not reach it.
    pub fn mean_loss_at(&self, method: &str, sparsity: f64, step: usize) -> Option<f64> {
        let vals: Vec<f64> = self
            .traces
            .iter()
            .filter(|t| t.method == method && t.sparsity == sparsity)
            .filter_map(|t| t.losses.get(step.checked_sub(1)?).copied())
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn reports_for(&self, method: &str, sparsity: f64) -> Vec<&SpectralReport> {
        self.reports.iter().filter(|r| r.meta.method == method && r.meta.sparsity == sparsity).collect()
    }
}

/// Graphon stack for a finite mask: dense layers become `W ≡ 1`; pruned ones
/// are SAS-estimated at `k` (or `K = 1` when a side is narrower than `k`),
/// resampled as finite masks from that estimate, and estimated again.
fn sampled_mask_stack(cfg: &ExperimentConfig, mask: &Mask, rng: &Rng) -> Result<GraphonStack> {
    let layers = mask
        .layers()
        .iter()
        .enumerate()
        .map(|(l, m)| {
            if m.is_dense() {
                return StepGraphon::constant(1.0, 1);
            }
            let k = if m.n_out().min(m.n_in()) >= cfg.k { cfg.k } else { 1 };
            let estimate = estimate_sas(m, k)?;
            let sampled = sample_mask(&estimate, m.n_out(), m.n_in(), m.achieved_sparsity(), cfg.calibration, &mut rng.child(l as u64))?;
            estimate_sas(&sampled, k)
        })
        .collect::<Result<Vec<_>>>()?;
    GraphonStack::new(layers)
}

fn constant_stack(cfg: &ExperimentConfig, sparsity: f64) -> Result<GraphonStack> {
    let prunable = cfg.prune.scope.prunable(cfg.hidden_layers + 1);
    let layers = prunable
        .iter()
        .map(|&p| StepGraphon::constant(if p { 1.0 - sparsity } else { 1.0 }, 1))
        .collect::<Result<Vec<_>>>()?;
    GraphonStack::new(layers)
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    cfg: &ExperimentConfig,
    data: &Dataset,
    kernel_inputs: Option<&Array2<f64>>,
    kind: CellKind,
    sparsity: f64,
    seed: u64,
    root: &Rng,
) -> Result<CellOutput> {
    let widths = cfg.net_widths(data.dim(), cfg.width);
    let meta = ReportMeta { method: kind.name(), sparsity, width: cfg.width, seed };
    let opts = NtkOptions { grid: cfg.grid, variant: cfg.variant };
    let report = |stack: &GraphonStack| -> Result<String> {
        let inputs = kernel_inputs.expect("kernel inputs exist when kernels are on");
        let kernel = graphon_ntk(stack, inputs, &opts)?;
        Ok(spectral_report(&kernel, cfg.top_k, cfg.fit_range)?.with_meta(meta.clone()).csv_row())
    };
    if kind == CellKind::Constant {
        return Ok(CellOutput { trace: None, report: Some(report(&constant_stack(cfg, sparsity)?)?) });
    }

    // Init, scoring batch and minibatch order depend on the seed only, so
    // methods sharing a seed start from the same weights and see the same data.
    let mut net = MaskedMlp::init(&widths, Mask::dense(&widths), 1.0, &mut root.child_named("init").child(seed))?;
    if let CellKind::Pruned(method) = kind {
        let batch = if method.needs_batch() {
            let mut r = root.child_named("score-batch").child(seed);
            Some(make_batch(Source::Dataset(data), cfg.score_batch, Normalization::Scale255, &mut r)?)
        } else {
            None
        };
        let mut r = root.child_named("prune").child(seed);
        let mask = prune_at_init(&net, method, sparsity, batch.as_ref(), &cfg.prune, &mut r)?;
        net.apply_mask(mask)?;
    }
    let report = if cfg.kernels {
        let stack = match kind {
            CellKind::Dense => GraphonStack::dense(cfg.hidden_layers)?,
            _ => sampled_mask_stack(cfg, net.mask(), &root.child_named(&format!("resample/{}/{sparsity}", kind.name())).child(seed))?,
        };
        Some(report(&stack)?)
    } else {
        None
    };
    let mut batch_rng = root.child_named("minibatches").child(seed);
    let (losses, diverged) = train(&mut net, data, cfg.steps, cfg.batch_size, cfg.lr, &mut batch_rng)?;
    if diverged {
        log::warn!("{} p={sparsity} seed={seed} diverged after {} steps", kind.name(), losses.len());
    }
    let trace = TrainTrace {
        method: kind.name(),
        sparsity,
        width: cfg.width,
        seed,
        lr: cfg.lr,
        batch_size: cfg.batch_size,
        losses,
        diverged,
    };
    Ok(CellOutput { trace: Some(trace), report })
}

/// Per method × sparsity × seed: prune a width-`n` net directly and train it
/// with Adam, and (when `kernels` is on) compute the spectral report of the
/// graphon NTK of masks resampled from the pruned mask's estimated graphons.
pub fn run_training_study(cfg: &ExperimentConfig) -> Result<TrainingStudy> {
    cfg.validate()?;
    let loaded = cfg.data.load(cfg.master_seed)?;
    let data = &loaded.dataset;
    if data.classes() > cfg.classes {
        return Err(Error::Configuration(format!("data has {} classes, config {}", data.classes(), cfg.classes)));
    }
    let root = Rng::new(cfg.master_seed);
    let kernel_inputs = if cfg.kernels {
        let mut r = root.child_named("kernel-batch");
        Some(make_batch(Source::Dataset(data), cfg.kernel_batch, Normalization::UnitSphere, &mut r)?.inputs)
    } else {
        None
    };

    let mut cells: Vec<(CellKind, f64, u64)> = Vec::new();
    for &seed in &cfg.seeds {
        if cfg.include_dense {
            cells.push((CellKind::Dense, 0.0, seed));
        }
        for &m in &cfg.methods {
            for &p in &cfg.sparsities {
                cells.push((CellKind::Pruned(m), p, seed));
            }
        }
        if cfg.include_constant && cfg.kernels {
            for &p in &cfg.sparsities {
                cells.push((CellKind::Constant, p, seed));
            }
        }
    }

    let manifest = Manifest::open(&cfg.out_dir)?;
    let outputs: Vec<CellOutput> = cells
        .par_iter()
        .map(|&(kind, p, seed)| {
            let key = format!("training/{}/p={p}/seed={seed}", kind.name());
            if let Some(files) = manifest.completed(&key) {
                return serde_json::from_slice(&files[0]).map_err(Error::from);
            }
            let out = run_cell(cfg, data, kernel_inputs.as_ref(), kind, p, seed, &root)?;
            let rel = PathBuf::from(output_name(cfg, "cells")).join(format!("{}_p{p}_s{seed}.json", kind.name()));
            manifest.complete(&key, &[(rel, serde_json::to_vec(&out)?)])?;
            log::info!("finished {key}");
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let fit = cfg.fit_range.unwrap_or_else(|| FitRange::default_for(cfg.kernel_batch));
    let mut traces = Vec::new();
    let mut reports = Vec::new();
    for out in outputs {
        traces.extend(out.trace);
        if let Some(row) = out.report {
            reports.push(SpectralReport::from_csv_row(&row, cfg.top_k, fit)?);
        }
    }
    let comparison = compare_methods(&reports);
    let mut files = Vec::new();
    let mut emit = |name: &str, text: String| -> Result<()> {
        let path = cfg.out_dir.join(output_name(cfg, name));
        write_atomic(&path, text.as_bytes())?;
        files.push(path);
        Ok(())
    };
    emit("traces.csv", traces_csv(&traces))?;
    emit("traces_summary.csv", summary_csv(&traces))?;
    emit("runs.csv", runs_csv(&traces))?;
    if cfg.kernels {
        emit("spectra.csv", reports_to_csv(&reports))?;
        emit("trends.csv", comparison.to_csv())?;
    }
    Ok(TrainingStudy { traces, reports, comparison, data_origin: loaded.origin, files })
}

fn traces_csv(traces: &[TrainTrace]) -> String {
    let mut out = format!("{TRACES_HEADER}\n");
    for t in traces {
        for (i, loss) in t.losses.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{},{},{},{},{loss}", t.method, t.sparsity, t.width, t.seed, t.lr, t.batch_size, i + 1);
        }
    }
    out
}

fn summary_csv(traces: &[TrainTrace]) -> String {
    let mut groups: BTreeMap<(String, u64), Vec<&TrainTrace>> = BTreeMap::new();
    for t in traces {
        groups.entry((t.method.clone(), t.sparsity.to_bits())).or_default().push(t);
    }
    let mut out = format!("{SUMMARY_HEADER}\n");
    for ((method, p), ts) in groups {
        let longest = ts.iter().map(|t| t.losses.len()).max().unwrap_or(0);
        for step in 0..longest {
            let vals: Vec<f64> = ts.iter().filter_map(|t| t.losses.get(step).copied()).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let _ = writeln!(out, "{method},{},{},{mean},{}", f64::from_bits(p), step + 1, vals.len());
        }
    }
    out
}

fn runs_csv(traces: &[TrainTrace]) -> String {
    let mut out = format!("{RUNS_HEADER}\n");
    for t in traces {
        let last = t.losses.last().map_or(String::new(), |l| l.to_string());
        let _ = writeln!(out, "{},{},{},{},{},{},{last}", t.method, t.sparsity, t.width, t.seed, t.losses.len(), t.diverged);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::{DataConfig, DataSource};

    fn tiny(dir: &std::path::Path) -> ExperimentConfig {
        ExperimentConfig {
            hidden_layers: 2,
            width: 16,
            methods: vec![Method::Random, Method::Snip],
            include_dense: true,
            include_constant: true,
            sparsities: vec![0.5, 0.8],
            seeds: vec![0, 1],
            steps: 5,
            batch_size: 8,
            score_batch: 8,
            kernel_batch: 12,
            kernels: true,
            k: 4,
            grid: 8,
            data: DataConfig { source: DataSource::Synthetic, dir: None, subset: Some(64) },
            out_dir: dir.to_path_buf(),
            ..Default::default()
        }
    }

    #[test]
    fn study_outputs_are_complete_and_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path());
        let study = run_training_study(&cfg).unwrap();
        // 2 seeds × (dense + 2 methods × 2 sparsities).
        assert_eq!(study.traces.len(), 10);
        assert!(study.traces.iter().all(|t| t.losses.len() == 5 && t.losses.iter().all(|l| l.is_finite())));
        // Plus a constant kernel per sparsity and seed.
        assert_eq!(study.reports.len(), 14);
        assert!(study.mean_loss_at("dense", 0.0, 5).is_some());
        let bytes: Vec<Vec<u8>> = study.files.iter().map(|f| std::fs::read(f).unwrap()).collect();

        let fresh = tempfile::tempdir().unwrap();
        let again = run_training_study(&tiny(fresh.path())).unwrap();
        let bytes2: Vec<Vec<u8>> = again.files.iter().map(|f| std::fs::read(f).unwrap()).collect();
        assert_eq!(bytes, bytes2);

        // Resume from the manifest reproduces the same files.
        let resumed = run_training_study(&cfg).unwrap();
        let bytes3: Vec<Vec<u8>> = resumed.files.iter().map(|f| std::fs::read(f).unwrap()).collect();
        assert_eq!(bytes, bytes3);
    }

    #[test]
    fn zero_steps_still_reports() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { steps: 0, include_dense: false, include_constant: false, ..tiny(dir.path()) };
        let study = run_training_study(&cfg).unwrap();
        assert!(study.traces.iter().all(|t| t.losses.is_empty() && !t.diverged));
        assert_eq!(study.reports.len(), study.traces.len());
    }

    #[test]
    fn constant_graphon_report_matches_dense() {
        let dir = tempfile::tempdir().unwrap();
        // Only a constant graphon on every layer is a pure rescaling of the dense kernel.
        let mut cfg = ExperimentConfig { steps: 0, methods: vec![Method::Random], ..tiny(dir.path()) };
        cfg.prune.scope = crate::net::PruneScope::All;
        let study = run_training_study(&cfg).unwrap();
        let dense = study.reports_for("dense", 0.0)[0];
        let constant = study.reports_for("constant", 0.5)[0];
        assert!((dense.energy_topk - constant.energy_topk).abs() < 1e-10);
        assert!((dense.effective_rank - constant.effective_rank).abs() < 1e-9);
    }

    #[test]
    fn divergence_is_flagged() {
        let mut rng = Rng::new(1);
        let spec = crate::data::SyntheticSpec::new(3, 6);
        let data = spec.dataset(32, &mut rng).unwrap();
        let widths = [6, 8, 3];
        let mut net = MaskedMlp::init(&widths, Mask::dense(&widths), 1.0, &mut rng).unwrap();
        let (losses, diverged) = train(&mut net, &data, 50, 8, 1e9, &mut rng).unwrap();
        assert!(diverged && losses.len() < 50);
    }
}
