//! Subcommand bodies. Each returns what `main` prints on standard output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::args::{
    BatchKind, Command, DataArgs, DistanceArgs, EstimateArgs, NtkArgs, OutputFormat, PruneArgs, ReproduceArgs,
    SampleArgs, SpectraArgs, TrainArgs,
};
use super::config::{deep_merge, Overrides};
use super::format::{load_mask, save_mask};
use crate::data::{make_batch, Dataset, Normalization, Source, SyntheticSpec};
use crate::error::{Error, Result};
use crate::experiments::{preset, reproduce, train, DataConfig, ExperimentConfig, LoadedData, DATA_DIR_ENV, TRACES_HEADER};
use crate::graphon::{estimate_sas, euclid_distance, sample_mask, StepGraphon};
use crate::kernel::{constant_ntk, graphon_ntk, GraphonStack, KernelMatrix, NtkOptions};
use crate::net::{save_checkpoint, Mask, MaskedMlp};
use crate::numerics::{FitRange, Rng};
use crate::prune::{prune_at_init, Method, PruneConfig};
use crate::spectra::{reports_to_csv, spectral_report, ReportMeta};

/// What a subcommand prints.
#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Json(Value),
    Text(String),
}

pub fn run(command: Command, overrides: Overrides) -> Result<Output> {
    if !overrides.is_empty() && !matches!(command, Command::Reproduce(_)) {
        return Err(Error::Configuration("experiment overrides only apply to reproduce".into()));
    }
    match command {
        Command::Prune(a) => prune(&a).map(Output::Json),
        Command::GraphonEstimate(a) => graphon_estimate(&a).map(Output::Json),
        Command::GraphonDistance(a) => graphon_distance(&a).map(Output::Json),
        Command::GraphonSample(a) => graphon_sample(&a).map(Output::Json),
        Command::Ntk(a) => ntk(&a).map(Output::Json),
        Command::Spectra(a) => spectra(&a),
        Command::Train(a) => train_cmd(&a).map(Output::Json),
        Command::Reproduce(a) => reproduce_cmd(&a, &overrides).map(Output::Json),
    }
}

/// Creates the directory an output file goes into.
fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Ok(())
}

fn load_data(args: &DataArgs, seed: u64, dim: usize) -> Result<LoadedData> {
    let cfg = DataConfig { source: args.data, dir: args.data_dir.clone(), subset: Some(args.subset) };
    let loaded = cfg.load(seed)?;
    if loaded.dataset.dim() != dim {
        return Err(Error::Configuration(format!(
            "input width {dim} does not match the {} data dimension {}",
            loaded.origin,
            loaded.dataset.dim()
        )));
    }
    Ok(loaded)
}

fn pruned_mask(
    net: &MaskedMlp,
    method: Method,
    sparsity: f64,
    cfg: &PruneConfig,
    data: &DataArgs,
    score_batch: usize,
    rng: &Rng,
) -> Result<Mask> {
    let batch = if method.needs_batch() {
        let loaded = load_data(data, rng.seed(), net.widths()[0])?;
        Some(make_batch(
            Source::Dataset(&loaded.dataset),
            score_batch,
            Normalization::Scale255,
            &mut rng.child_named("score-batch"),
        )?)
    } else {
        None
    };
    prune_at_init(net, method, sparsity, batch.as_ref(), cfg, &mut rng.child_named("prune"))
}

fn layer_summary(mask: &Mask) -> Value {
    Value::Array(
        mask.layers()
            .iter()
            .enumerate()
            .map(|(i, l)| {
                json!({
                    "layer": i + 1,
                    "n_out": l.n_out(),
                    "n_in": l.n_in(),
                    "kept": l.kept(),
                    "sparsity": l.achieved_sparsity(),
                })
            })
            .collect(),
    )
}

fn prune(a: &PruneArgs) -> Result<Value> {
    if !(0.0..1.0).contains(&a.sparsity) {
        return Err(Error::Domain(format!("sparsity {} is outside [0, 1)", a.sparsity)));
    }
    let widths = &a.widths.0;
    let rng = Rng::new(a.seed);
    let net = MaskedMlp::init(widths, Mask::dense(widths), 1.0, &mut rng.child_named("init"))?;
    let cfg = PruneConfig {
        scope: a.scope,
        per_layer: a.per_layer,
        loss: a.loss,
        grasp_fd_scale: a.grasp_fd_scale,
        synflow_rounds: a.synflow_rounds,
    };
    let mask = pruned_mask(&net, a.method, a.sparsity, &cfg, &a.data, a.score_batch, &rng)?;
    ensure_parent(&a.out)?;
    save_mask(&mask, &a.out)?;
    let prunable = a.scope.prunable(mask.len());
    Ok(json!({
        "method": a.method.name(),
        "target_sparsity": a.sparsity,
        "achieved_sparsity": mask.sparsity_over(&prunable),
        "kept": mask.layers().iter().map(|l| l.kept()).sum::<usize>(),
        "layers": layer_summary(&mask),
        "out": a.out,
    }))
}

fn graphon_estimate(a: &EstimateArgs) -> Result<Value> {
    let mask = load_mask(&a.mask)?;
    let chosen: Vec<usize> = match a.layer {
        Some(l) if l == 0 || l > mask.len() => {
            return Err(Error::Configuration(format!("layer {l} is outside 1..={}", mask.len())))
        }
        Some(l) => vec![l],
        None => (1..=mask.len()).filter(|&l| !mask.layer(l - 1).is_dense()).collect(),
    };
    if chosen.is_empty() {
        return Err(Error::InvalidInput(format!("{} has no pruned layer", a.mask.display())));
    }
    let mut out = Vec::new();
    for l in chosen {
        let g = estimate_sas(mask.layer(l - 1), a.k)?;
        let path = if a.layer.is_some() { a.out.clone() } else { a.out.join(format!("layer_{l}.json")) };
        ensure_parent(&path)?;
        g.save(&path)?;
        out.push(json!({
            "layer": l,
            "k": g.k(),
            "mean": g.mean(),
            "cell_variance": g.cell_variance(),
            "out": path,
        }));
    }
    Ok(Value::Array(out))
}

fn graphon_distance(a: &DistanceArgs) -> Result<Value> {
    let d = euclid_distance(&StepGraphon::load(&a.a)?, &StepGraphon::load(&a.b)?)?;
    Ok(json!({ "distance": d }))
}

fn graphon_sample(a: &SampleArgs) -> Result<Value> {
    let g = StepGraphon::load(&a.graphon)?;
    let p = a.sparsity.unwrap_or(1.0 - g.mean());
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Domain(format!("sparsity {p} is outside [0, 1)")));
    }
    let layer = sample_mask(&g, a.n_out, a.n_in, p, a.calibration, &mut Rng::new(a.seed))?;
    let mask = Mask::new(vec![layer.with_recorded_sparsity(p)]);
    ensure_parent(&a.out)?;
    save_mask(&mask, &a.out)?;
    let l = mask.layer(0);
    Ok(json!({
        "n_out": l.n_out(),
        "n_in": l.n_in(),
        "kept": l.kept(),
        "target_sparsity": p,
        "achieved_sparsity": l.achieved_sparsity(),
        "out": a.out,
    }))
}

fn mnist_dir(explicit: &Option<PathBuf>) -> Result<PathBuf> {
    explicit
        .clone()
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .ok_or_else(|| Error::MissingData(format!("--batch mnist needs --data-dir or ${DATA_DIR_ENV}")))
}

fn ntk_stack(a: &NtkArgs) -> Result<GraphonStack> {
    let l = a.hidden_layers;
    let graphons = a.graphon.iter().map(|p| StepGraphon::load(p)).collect::<Result<Vec<_>>>()?;
    match graphons.len() {
        0 => GraphonStack::dense(l),
        n if n == l + 1 => GraphonStack::new(graphons),
        n if n == l.saturating_sub(1) => GraphonStack::with_dense_ends(graphons),
        1 => GraphonStack::with_dense_ends(vec![graphons[0].clone(); l.saturating_sub(1)]),
        n => Err(Error::Configuration(format!(
            "{n} graphons given for {l} hidden layers; expected 1, {} or {}",
            l.saturating_sub(1),
            l + 1
        ))),
    }
}

fn ntk(a: &NtkArgs) -> Result<Value> {
    if a.hidden_layers == 0 {
        return Err(Error::Configuration("--hidden-layers must be at least 1".into()));
    }
    let mut rng = Rng::new(a.seed).child_named("batch");
    let batch = match a.batch {
        BatchKind::Synthetic => {
            let spec = SyntheticSpec { seed: a.seed, ..SyntheticSpec::new(10, a.dim) };
            make_batch(Source::Synthetic(&spec), a.b, a.normalization, &mut rng)?
        }
        BatchKind::Mnist => {
            let ds = Dataset::load_dir(&mnist_dir(&a.data_dir)?)?;
            make_batch(Source::Dataset(&ds), a.b, a.normalization, &mut rng)?
        }
    };
    let kernel = match a.constant {
        Some(c) => constant_ntk(c, a.hidden_layers, &batch.inputs)?,
        None => graphon_ntk(&ntk_stack(a)?, &batch.inputs, &NtkOptions { grid: a.grid, variant: a.variant })?,
    };
    ensure_parent(&a.out)?;
    kernel.save(&a.out)?;
    let spectrum = kernel.checked_spectrum()?;
    Ok(json!({
        "b": kernel.len(),
        "lambda1": spectrum.largest(),
        "trace": kernel.trace(),
        "out": a.out,
    }))
}

fn spectra(a: &SpectraArgs) -> Result<Output> {
    let meta = ReportMeta { method: a.method.clone(), sparsity: a.sparsity, width: a.width, seed: a.seed };
    let mut reports = Vec::with_capacity(a.kernels.len());
    for path in &a.kernels {
        let kernel = KernelMatrix::load(path)?;
        let fit = match (a.fit_min, a.fit_max) {
            (None, None) => None,
            (lo, hi) => Some(FitRange::new(lo.unwrap_or(2), hi.unwrap_or(kernel.len() / 2))),
        };
        reports.push(spectral_report(&kernel, a.k, fit)?.with_meta(meta.clone()));
    }
    Ok(match a.format {
        OutputFormat::Csv => Output::Text(reports_to_csv(&reports)),
        OutputFormat::Json => {
            let rows = a
                .kernels
                .iter()
                .zip(&reports)
                .map(|(path, r)| {
                    json!({
                        "kernel": path,
                        "alpha": r.alpha,
                        "effective_rank": r.effective_rank,
                        "spectral_gap": r.spectral_gap,
                        "gap_infinite": r.gap_infinite,
                        "energy_topk": r.energy_topk,
                        "k": r.k,
                        "fit_range": [r.fit_range.k_min, r.fit_range.k_max],
                        "meta": r.meta,
                    })
                })
                .collect();
            Output::Json(Value::Array(rows))
        }
    })
}

fn write_trace(path: &Path, name: &str, a: &TrainArgs, sparsity: f64, losses: &[f64]) -> Result<()> {
    let mut csv = String::from(TRACES_HEADER);
    csv.push('\n');
    let width = a.widths.0.get(1).copied().unwrap_or(0);
    for (step, loss) in losses.iter().enumerate() {
        let _ = writeln!(csv, "{name},{sparsity},{width},{},{},{},{},{loss}", a.seed, a.lr, a.batch_size, step + 1);
    }
    ensure_parent(path)?;
    std::fs::write(path, csv)?;
    Ok(())
}

fn train_cmd(a: &TrainArgs) -> Result<Value> {
    if !(a.lr > 0.0) {
        return Err(Error::Configuration(format!("learning rate {} must be positive", a.lr)));
    }
    let widths = &a.widths.0;
    let rng = Rng::new(a.seed);
    let loaded = load_data(&a.data, a.seed, widths[0])?;
    let mut net = MaskedMlp::init(widths, Mask::dense(widths), 1.0, &mut rng.child_named("init"))?;
    if *widths.last().expect("two widths") != loaded.dataset.classes() {
        return Err(Error::Configuration(format!(
            "output width {} does not match {} classes",
            widths.last().expect("two widths"),
            loaded.dataset.classes()
        )));
    }
    let (name, mask) = match (&a.mask, a.method) {
        (Some(path), _) => ("mask".to_string(), Some(load_mask(path)?)),
        (None, Some(m)) => {
            if !(0.0..1.0).contains(&a.sparsity) {
                return Err(Error::Domain(format!("sparsity {} is outside [0, 1)", a.sparsity)));
            }
            let cfg = PruneConfig { scope: a.scope, ..PruneConfig::default() };
            (m.name().to_string(), Some(pruned_mask(&net, m, a.sparsity, &cfg, &a.data, a.score_batch, &rng)?))
        }
        (None, None) => ("dense".to_string(), None),
    };
    if let Some(mask) = mask {
        net.apply_mask(mask)?;
    }
    let sparsity = net.mask().sparsity_over(&a.scope.prunable(net.n_layers()));
    let (losses, diverged) =
        train(&mut net, &loaded.dataset, a.steps, a.batch_size, a.lr, &mut rng.child_named("minibatches"))?;
    if let Some(path) = &a.trace {
        write_trace(path, &name, a, sparsity, &losses)?;
    }
    if let Some(path) = &a.checkpoint {
        ensure_parent(path)?;
        save_checkpoint(&net, path)?;
    }
    Ok(json!({
        "method": name,
        "sparsity": sparsity,
        "data": loaded.origin,
        "steps_completed": losses.len(),
        "diverged": diverged,
        "first_loss": losses.first(),
        "final_loss": losses.last(),
    }))
}

fn reproduce_cmd(a: &ReproduceArgs, overrides: &Overrides) -> Result<Value> {
    let mut cfg = preset(a.figure, a.scale, &a.out);
    if let Some(dir) = &a.data_dir {
        cfg.data.dir = Some(dir.clone());
    }
    if !overrides.is_empty() {
        let mut table: toml::Table =
            toml::from_str(&cfg.to_toml()).map_err(|e| Error::Configuration(e.to_string()))?;
        deep_merge(&mut table, overrides);
        let text = toml::to_string(&table).map_err(|e| Error::Configuration(e.to_string()))?;
        cfg = ExperimentConfig::from_toml(&text)?;
    }
    let artifacts = reproduce(a.figure, &cfg)?;
    Ok(json!({
        "figure": artifacts.figure.tag(),
        "data": artifacts.data_origin,
        "files": artifacts.files,
    }))
}
