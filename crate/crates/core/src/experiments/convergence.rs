use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::manifest::{write_atomic, Manifest};
use super::output_name;
use crate::data::{make_batch, Dataset, Normalization, Source};
use crate::error::{Error, Result};
use crate::graphon::{average_layer_histograms, distance_curves, LayerCurve, StepGraphon};
use crate::net::{LayerMask, Mask, MaskedMlp};
use crate::numerics::Rng;
use crate::prune::{prune_at_init, Method};

/// Distance curves for one method at one sparsity.
#[derive(Debug, Clone)]
pub struct MethodCurves {
    pub method: Method,
    pub sparsity: f64,
    /// One curve per hidden-to-hidden layer; `LayerCurve::layer` is the
    /// 1-based weight-layer number.
    pub layers: Vec<LayerCurve>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceStudy {
    pub curves: Vec<MethodCurves>,
    pub data_origin: &'static str,
    pub csv_path: PathBuf,
}

pub const CONVERGENCE_HEADER: &str = "method,sparsity,layer,width,distance";

/// Prunes a fresh net of hidden width `width` and returns its hidden-to-hidden masks.
pub fn hidden_masks(
    cfg: &ExperimentConfig,
    data: &Dataset,
    method: Method,
    sparsity: f64,
    width: usize,
    rng: &Rng,
) -> Result<Vec<LayerMask>> {
    let widths = cfg.net_widths(data.dim(), width);
    let net = MaskedMlp::init(&widths, Mask::dense(&widths), 1.0, &mut rng.child_named("init"))?;
    let batch = if method.needs_batch() {
        Some(make_batch(Source::Dataset(data), cfg.score_batch, Normalization::Scale255, &mut rng.child_named("batch"))?)
    } else {
        None
    };
    let mask = prune_at_init(&net, method, sparsity, batch.as_ref(), &cfg.prune, &mut rng.child_named("prune"))?;
    let layers = mask.into_layers();
    Ok(layers[1..cfg.hidden_layers].to_vec())
}

fn histogram_path(cfg: &ExperimentConfig, method: Method, sparsity: f64, width: usize, layer: usize) -> PathBuf {
    PathBuf::from(output_name(cfg, "histograms")).join(format!("{method}_p{sparsity}_w{width}_l{layer}.json"))
}

/// For every method, sparsity, width and trial: prune, estimate the SAS
/// histogram of each hidden-to-hidden layer, average over trials, and measure
/// the distance to the largest width. Each (method, sparsity, width) cell is
/// flushed to disk and recorded in the manifest as soon as it finishes.
pub fn run_convergence_study(cfg: &ExperimentConfig) -> Result<ConvergenceStudy> {
    cfg.validate()?;
    if cfg.hidden_layers < 2 {
        return Err(Error::Configuration("the convergence study needs at least 2 hidden layers".into()));
    }
    let loaded = cfg.data.load(cfg.master_seed)?;
    let data = &loaded.dataset;
    let manifest = Manifest::open(&cfg.out_dir)?;
    let root = Rng::new(cfg.master_seed);

    let cells: Vec<(Method, f64, usize)> = cfg
        .methods
        .iter()
        .flat_map(|&m| cfg.sparsities.iter().flat_map(move |&p| cfg.widths.iter().map(move |&w| (m, p, w))))
        .collect();
    let averaged: Vec<Vec<StepGraphon>> = cells
        .par_iter()
        .map(|&(method, p, width)| {
            let key = format!("convergence/{method}/p={p}/w={width}");
            if let Some(files) = manifest.completed(&key) {
                return files.iter().map(|b| StepGraphon::from_json(&String::from_utf8_lossy(b))).collect();
            }
            let cell_rng = root.child_named(&key);
            let hist = average_layer_histograms(cfg.trials, cfg.k, |t| {
                hidden_masks(cfg, data, method, p, width, &cell_rng.child(t as u64))
            })?;
            let files: Vec<(PathBuf, Vec<u8>)> = hist
                .iter()
                .enumerate()
                .map(|(i, g)| (histogram_path(cfg, method, p, width, i + 2), g.to_json().into_bytes()))
                .collect();
            manifest.complete(&key, &files)?;
            log::info!("finished {key}");
            Ok(hist)
        })
        .collect::<Result<_>>()?;

    let mut curves = Vec::new();
    let mut csv = String::from(CONVERGENCE_HEADER);
    csv.push('\n');
    for (group, chunk) in averaged.chunks(cfg.widths.len()).enumerate() {
        let (method, sparsity, _) = cells[group * cfg.widths.len()];
        let mut layers = distance_curves(&cfg.widths, chunk)?;
        for curve in &mut layers {
            curve.layer += 2;
            for pt in &curve.points {
                let _ = writeln!(csv, "{method},{sparsity},{},{},{}", curve.layer, pt.width, pt.distance);
            }
        }
        curves.push(MethodCurves { method, sparsity, layers });
    }
    let csv_path = cfg.out_dir.join(output_name(cfg, "convergence.csv"));
    write_atomic(&csv_path, csv.as_bytes())?;
    Ok(ConvergenceStudy { curves, data_origin: loaded.origin, csv_path })
}
