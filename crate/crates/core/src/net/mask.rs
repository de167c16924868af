use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary biadjacency matrix of one weight layer, `n_out × n_in`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMask {
    n_out: usize,
    n_in: usize,
    bits: Vec<bool>,
    /// Recorded sparsity (fraction removed) this layer was produced for.
    sparsity: f64,
}

impl LayerMask {
    pub fn dense(n_out: usize, n_in: usize) -> Self {
        Self { n_out, n_in, bits: vec![true; n_out * n_in], sparsity: 0.0 }
    }

    pub fn empty(n_out: usize, n_in: usize) -> Self {
        Self { n_out, n_in, bits: vec![false; n_out * n_in], sparsity: 1.0 }
    }

    /// Builds a layer from explicit bits; the recorded sparsity is the achieved one.
    pub fn from_bits(n_out: usize, n_in: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != n_out * n_in {
            return Err(Error::Shape(format!("{n_out}x{n_in} mask needs {} bits, got {}", n_out * n_in, bits.len())));
        }
        let mut m = Self { n_out, n_in, bits, sparsity: 0.0 };
        m.sparsity = m.achieved_sparsity();
        Ok(m)
    }

    pub fn with_recorded_sparsity(mut self, sparsity: f64) -> Self {
        self.sparsity = sparsity;
        self
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_out, self.n_in)
    }

    pub fn entries(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.n_in + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, keep: bool) {
        self.bits[row * self.n_in + col] = keep;
    }

    pub fn kept(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn recorded_sparsity(&self) -> f64 {
        self.sparsity
    }

    pub fn achieved_sparsity(&self) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        1.0 - self.kept() as f64 / self.entries() as f64
    }

    pub fn is_dense(&self) -> bool {
        self.bits.iter().all(|&b| b)
    }

    pub fn row_degrees(&self) -> Vec<usize> {
        self.bits.chunks(self.n_in.max(1)).map(|r| r.iter().filter(|&&b| b).count()).collect()
    }

    pub fn col_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_in];
        for row in self.bits.chunks(self.n_in.max(1)) {
            for (d, &b) in deg.iter_mut().zip(row) {
                *d += b as usize;
            }
        }
        deg
    }

    /// 0/1 matrix.
    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.n_out, self.n_in), |(i, j)| if self.get(i, j) { 1.0 } else { 0.0 })
    }

    /// Applies row and column permutations: `out[i][j] = self[rows[i]][cols[j]]`.
    pub fn permuted(&self, rows: &[usize], cols: &[usize]) -> LayerMask {
        let mut bits = Vec::with_capacity(self.bits.len());
        for &r in rows {
            for &c in cols {
                bits.push(self.get(r, c));
            }
        }
        LayerMask { n_out: self.n_out, n_in: self.n_in, bits, sparsity: self.sparsity }
    }
}

/// Per-layer masks `M^(1) … M^(L+1)` of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    layers: Vec<LayerMask>,
}

impl Mask {
    pub fn new(layers: Vec<LayerMask>) -> Self {
        Self { layers }
    }

    pub fn dense(widths: &[usize]) -> Self {
        Self { layers: widths.windows(2).map(|w| LayerMask::dense(w[1], w[0])).collect() }
    }

    pub fn layers(&self) -> &[LayerMask] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerMask] {
        &mut self.layers
    }

    pub fn layer(&self, l: usize) -> &LayerMask {
        &self.layers[l]
    }

    pub fn into_layers(self) -> Vec<LayerMask> {
        self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Checks that layer shapes chain as `widths` prescribes.
    pub fn check_widths(&self, widths: &[usize]) -> Result<()> {
        if widths.len() != self.layers.len() + 1 {
            return Err(Error::Shape(format!(
                "{} widths need {} mask layers, got {}",
                widths.len(),
                widths.len().saturating_sub(1),
                self.layers.len()
            )));
        }
        for (l, (m, w)) in self.layers.iter().zip(widths.windows(2)).enumerate() {
            if m.shape() != (w[1], w[0]) {
                return Err(Error::Shape(format!(
                    "mask layer {l} is {}x{}, widths need {}x{}",
                    m.n_out, m.n_in, w[1], w[0]
                )));
            }
        }
        Ok(())
    }

    /// Widths implied by the chained layer shapes.
    pub fn widths(&self) -> Vec<usize> {
        let mut w: Vec<usize> = self.layers.iter().map(|m| m.n_in).collect();
        if let Some(last) = self.layers.last() {
            w.push(last.n_out);
        }
        w
    }

    /// Fraction of zeros over the selected layers.
    pub fn sparsity_over(&self, prunable: &[bool]) -> f64 {
        let (mut zeros, mut total) = (0usize, 0usize);
        for (m, &p) in self.layers.iter().zip(prunable) {
            if p {
                zeros += m.entries() - m.kept();
                total += m.entries();
            }
        }
        if total == 0 {
            0.0
        } else {
            zeros as f64 / total as f64
        }
    }

    pub fn kept_over(&self, prunable: &[bool]) -> usize {
        self.layers.iter().zip(prunable).filter(|(_, &p)| p).map(|(m, _)| m.kept()).sum()
    }
}

/// Which layers participate in pruning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PruneScope {
    /// Hidden-to-hidden layers only; input and output layers stay dense.
    #[default]
    Hidden,
    All,
}

impl PruneScope {
    pub fn prunable(self, n_layers: usize) -> Vec<bool> {
        match self {
            PruneScope::All => vec![true; n_layers],
            PruneScope::Hidden => (0..n_layers).map(|l| l > 0 && l + 1 < n_layers).collect(),
        }
    }
}

impl std::str::FromStr for PruneScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hidden" => Ok(Self::Hidden),
            "all" => Ok(Self::All),
            other => Err(Error::Configuration(format!("unknown prune scope '{other}' (hidden|all)"))),
        }
    }
}
