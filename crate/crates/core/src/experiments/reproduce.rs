use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{DataSource, ExperimentConfig};
use super::convergence::run_convergence_study;
use super::manifest::write_atomic;
use super::training::run_training_study;
use crate::error::{Error, Result};
use crate::prune::Method;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3,
    AppC,
    AppD,
}

impl Figure {
    pub const ALL: [Figure; 5] = [Figure::Fig1, Figure::Fig2, Figure::Fig3, Figure::AppC, Figure::AppD];

    pub fn tag(self) -> &'static str {
        match self {
            Figure::Fig1 => "fig1",
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::AppC => "appC",
            Figure::AppD => "appD",
        }
    }
}

impl std::str::FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Figure::ALL
            .into_iter()
            .find(|f| f.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Configuration(format!("unknown figure '{s}' (fig1|fig2|fig3|appC|appD)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub enum Scale {
    #[default]
    Desk,
    Full,
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Self::Desk),
            "full" => Ok(Self::Full),
            other => Err(Error::Configuration(format!("unknown scale '{other}' (desk|full)"))),
        }
    }
}

/// Study parameters for a figure. Desk scale shrinks width, trials and kernel
/// batch so the whole set runs on a laptop; full scale needs MNIST on disk.
pub fn preset(figure: Figure, scale: Scale, out_dir: &Path) -> ExperimentConfig {
    let full = scale == Scale::Full;
    let four = vec![Method::Random, Method::Snip, Method::Grasp, Method::Synflow];
    let mut cfg = ExperimentConfig { out_dir: out_dir.to_path_buf(), tag: Some(figure.tag().into()), ..Default::default() };
    if full {
        cfg.data.source = DataSource::Mnist;
        cfg.data.subset = None;
        cfg.widths = vec![100, 500, 1000, 2000];
        cfg.trials = 100;
        cfg.width = 1024;
        cfg.kernel_batch = 1024;
    }
    match figure {
        Figure::Fig1 => {
            cfg.methods = four;
            cfg.sparsities = vec![0.8];
        }
        Figure::AppC => {
            cfg.methods = Method::ALL.to_vec();
            cfg.sparsities = vec![0.7, 0.8, 0.9];
        }
        Figure::Fig2 => {
            cfg.methods = four;
            cfg.include_dense = true;
            cfg.sparsities = vec![0.9];
        }
        Figure::Fig3 => {
            cfg.methods = vec![Method::Random, Method::Snip, Method::Synflow];
            cfg.include_constant = true;
            cfg.sparsities = vec![0.5, 0.7, 0.8, 0.9];
            cfg.steps = 0;
            cfg.kernels = true;
        }
        Figure::AppD => {
            cfg.methods = four;
            cfg.include_dense = true;
            cfg.sparsities = vec![0.5, 0.7, 0.8, 0.9, 0.95];
            cfg.kernels = true;
        }
    }
    cfg
}

#[derive(Debug, Clone, Serialize)]
pub struct Artifacts {
    pub figure: Figure,
    pub data_origin: &'static str,
    pub files: Vec<PathBuf>,
}

/// Runs the study behind `figure` with `cfg` (usually a [`preset`]) and writes
/// the resolved config next to the CSVs.
pub fn reproduce(figure: Figure, cfg: &ExperimentConfig) -> Result<Artifacts> {
    let mut cfg = cfg.clone();
    cfg.tag.get_or_insert_with(|| figure.tag().into());
    cfg.validate()?;
    let config_path = cfg.out_dir.join(super::output_name(&cfg, "config.toml"));
    write_atomic(&config_path, cfg.to_toml().as_bytes())?;
    let (data_origin, mut files) = match figure {
        Figure::Fig1 | Figure::AppC => {
            let study = run_convergence_study(&cfg)?;
            (study.data_origin, vec![study.csv_path])
        }
        Figure::Fig2 | Figure::Fig3 | Figure::AppD => {
            let study = run_training_study(&cfg)?;
            (study.data_origin, study.files)
        }
    };
    files.insert(0, config_path);
    Ok(Artifacts { figure, data_origin, files })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::DataConfig;

    #[test]
    fn figure_tags_parse() {
        for f in Figure::ALL {
            assert_eq!(f.tag().parse::<Figure>().unwrap(), f);
        }
        assert_eq!("APPC".parse::<Figure>().unwrap(), Figure::AppC);
        assert!("fig9".parse::<Figure>().is_err());
    }

    #[test]
    fn presets_validate_and_match_contract() {
        let out = Path::new("out");
        for f in Figure::ALL {
            for s in [Scale::Desk, Scale::Full] {
                preset(f, s, out).validate().unwrap();
            }
        }
        let fig1 = preset(Figure::Fig1, Scale::Desk, out);
        assert_eq!((fig1.methods.len(), fig1.widths.clone(), fig1.trials), (4, vec![100, 250, 500, 1000], 20));
        let fig3 = preset(Figure::Fig3, Scale::Desk, out);
        assert!(fig3.methods.len() == 3 && fig3.sparsities.len() >= 4 && fig3.kernel_batch <= 256);
    }

    #[test]
    fn full_scale_without_mnist_is_missing_data() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = preset(Figure::Fig2, Scale::Full, dir.path());
        cfg.data = DataConfig { dir: Some(dir.path().join("nothing-here")), ..cfg.data };
        assert!(matches!(reproduce(Figure::Fig2, &cfg), Err(Error::MissingData(_))));
    }

    #[test]
    fn small_fig1_emits_histograms_and_one_curve_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = preset(Figure::Fig1, Scale::Desk, dir.path());
        cfg.widths = vec![16, 24];
        cfg.trials = 2;
        cfg.hidden_layers = 2;
        cfg.k = 4;
        cfg.grid = 4;
        cfg.score_batch = 8;
        cfg.prune.synflow_rounds = 4;
        cfg.data = DataConfig { source: DataSource::Synthetic, dir: None, subset: Some(32) };
        let art = reproduce(Figure::Fig1, &cfg).unwrap();
        assert!(art.files.iter().any(|f| f.ends_with("fig1_convergence.csv")));
        let hist = std::fs::read_dir(dir.path().join("fig1_histograms")).unwrap().count();
        assert_eq!(hist, 4 * 2);
    }
}
