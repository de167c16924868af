use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::idx::{read_idx_file, IdxTensor};
use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Each row scaled to unit Euclidean norm (all-zero rows are left as is).
    UnitSphere,
    /// Pixel values divided by 255.
    Scale255,
    None,
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit-sphere" => Ok(Self::UnitSphere),
            "scale-255" => Ok(Self::Scale255),
            "none" => Ok(Self::None),
            other => Err(Error::Configuration(format!("unknown normalization '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `B × d`, one sample per row.
    pub inputs: Array2<f64>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn fingerprint(&self) -> [u8; 32] {
        fingerprint_inputs(&self.inputs)
    }
}

/// SHA-256 over the shape and the little-endian bytes of every entry.
pub fn fingerprint_inputs(inputs: &Array2<f64>) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((inputs.nrows() as u64).to_le_bytes());
    h.update((inputs.ncols() as u64).to_le_bytes());
    for v in inputs.iter() {
        h.update(v.to_le_bytes());
    }
    h.finalize().into()
}

/// Labelled unsigned-byte images, flattened.
#[derive(Debug, Clone)]
pub struct Dataset {
    pixels: Vec<u8>,
    labels: Vec<usize>,
    dim: usize,
    classes: usize,
}

impl Dataset {
    pub fn from_idx(images: &IdxTensor, labels: &IdxTensor) -> Result<Self> {
        if images.items() != labels.items() || labels.dims.len() != 1 {
            return Err(Error::Shape(format!(
                "images {:?} and labels {:?} disagree",
                images.dims, labels.dims
            )));
        }
        let labels: Vec<usize> = labels.data.iter().map(|&l| l as usize).collect();
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        Ok(Self { pixels: images.data.clone(), labels, dim: images.item_len(), classes })
    }

    /// Loads the MNIST training split from `dir` (plain or gzipped files).
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let images = find_file(dir, &["train-images-idx3-ubyte", "train-images.idx3-ubyte"])?;
        let labels = find_file(dir, &["train-labels-idx1-ubyte", "train-labels.idx1-ubyte"])?;
        Self::from_idx(&read_idx_file(&images)?, &read_idx_file(&labels)?)
    }

    /// First `n` samples.
    pub fn subset(&self, n: usize) -> Result<Self> {
        if n > self.len() {
            return Err(Error::Exhausted { requested: n, available: self.len() });
        }
        Ok(Self {
            pixels: self.pixels[..n * self.dim].to_vec(),
            labels: self.labels[..n].to_vec(),
            dim: self.dim,
            classes: self.classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn pixel_row(&self, i: usize) -> &[u8] {
        &self.pixels[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }
}

fn find_file(dir: &Path, stems: &[&str]) -> Result<PathBuf> {
    for stem in stems {
        for suffix in ["", ".gz"] {
            let p = dir.join(format!("{stem}{suffix}"));
            if p.is_file() {
                return Ok(p);
            }
        }
    }
    Err(Error::MissingData(format!("no {} in {}", stems[0], dir.display())))
}

/// Class-conditional Gaussian blobs on a pixel-like `[0, 255]` scale.
///
/// Class prototypes depend only on `seed`, so batches drawn with different
/// generators share one distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub dim: usize,
    /// Prototype amplitude; larger means better separated classes.
    pub separation: f64,
    /// Per-pixel noise standard deviation (in units of full pixel range).
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(classes: usize, dim: usize) -> Self {
        Self { classes, dim, separation: 1.0, noise: 0.25, seed: 0 }
    }

    /// MNIST-shaped defaults: 10 classes, 784 inputs.
    pub fn mnist_like() -> Self {
        Self::new(10, 784)
    }

    fn prototypes(&self) -> Vec<Vec<f64>> {
        let root = Rng::new(self.seed).child_named("synthetic-prototypes");
        (0..self.classes)
            .map(|c| {
                let mut rng = root.child(c as u64);
                let mut proto: Vec<f64> =
                    (0..self.dim).map(|_| if rng.uniform() < 0.25 { rng.uniform() } else { 0.0 }).collect();
                proto[c % self.dim] = 1.0;
                proto
            })
            .collect()
    }

    /// A finite pool of `n` samples, usable wherever a [`Dataset`] is expected.
    pub fn dataset(&self, n: usize, rng: &mut Rng) -> Result<Dataset> {
        let batch = make_batch(Source::Synthetic(self), n, Normalization::None, rng)?;
        let pixels = batch.inputs.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
        Ok(Dataset { pixels, labels: batch.labels, dim: self.dim, classes: self.classes })
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Source<'a> {
    Dataset(&'a Dataset),
    Synthetic(&'a SyntheticSpec),
}

pub fn make_batch(source: Source<'_>, size: usize, normalization: Normalization, rng: &mut Rng) -> Result<Batch> {
    if size == 0 {
        return Err(Error::InvalidInput("batch size must be at least 1".into()));
    }
    let mut batch = match source {
        Source::Dataset(ds) => {
            if size > ds.len() {
                return Err(Error::Exhausted { requested: size, available: ds.len() });
            }
            let picks = rand::seq::index::sample(rng, ds.len(), size);
            let mut inputs = Array2::zeros((size, ds.dim()));
            let mut labels = Vec::with_capacity(size);
            for (row, i) in picks.iter().enumerate() {
                for (dst, &px) in inputs.row_mut(row).iter_mut().zip(ds.pixel_row(i)) {
                    *dst = px as f64;
                }
                labels.push(ds.label(i));
            }
            Batch { inputs, labels, classes: ds.classes() }
        }
        Source::Synthetic(spec) => {
            if spec.classes == 0 || spec.dim == 0 {
                return Err(Error::InvalidInput("synthetic spec needs classes >= 1 and dim >= 1".into()));
            }
            let protos = spec.prototypes();
            let mut inputs = Array2::zeros((size, spec.dim));
            let labels: Vec<usize> = (0..size).map(|i| i % spec.classes).collect();
            for (row, &c) in labels.iter().enumerate() {
                for (dst, &p) in inputs.row_mut(row).iter_mut().zip(&protos[c]) {
                    *dst = 255.0 * (spec.separation * p + spec.noise * rng.standard_normal());
                }
            }
            Batch { inputs, labels, classes: spec.classes }
        }
    };
    normalize(&mut batch.inputs, normalization);
    Ok(batch)
}

pub fn normalize(inputs: &mut Array2<f64>, normalization: Normalization) {
    match normalization {
        Normalization::None => {}
        Normalization::Scale255 => inputs.mapv_inplace(|v| v / 255.0),
        Normalization::UnitSphere => {
            for mut row in inputs.rows_mut() {
                let norm = row.dot(&row).sqrt();
                if norm > 0.0 {
                    row.mapv_inplace(|v| v / norm);
                }
            }
        }
    }
}
