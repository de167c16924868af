use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::graphon::StepGraphon;

/// Graphons `W^(1) … W^(L+1)`, one per weight layer. `W^(1)` relates layer-1
/// positions to input coordinates and `W^(L+1)` the output to layer-L positions.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphonStack {
    layers: Vec<StepGraphon>,
}

impl GraphonStack {
    pub fn new(layers: Vec<StepGraphon>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::InvalidInput(format!("a stack needs at least 2 layers, got {}", layers.len())));
        }
        Ok(Self { layers })
    }

    /// `W ≡ c` on every layer, input and output included.
    pub fn constant(c: f64, hidden_layers: usize) -> Result<Self> {
        let g = StepGraphon::constant(c, 1)?;
        Self::new(vec![g; hidden_layers + 1])
    }

    pub fn dense(hidden_layers: usize) -> Result<Self> {
        Self::constant(1.0, hidden_layers)
    }

    /// Hidden-to-hidden graphons with dense input and output layers.
    pub fn with_dense_ends(hidden: Vec<StepGraphon>) -> Result<Self> {
        let dense = StepGraphon::constant(1.0, 1)?;
        let mut layers = Vec::with_capacity(hidden.len() + 2);
        layers.push(dense.clone());
        layers.extend(hidden);
        layers.push(dense);
        Self::new(layers)
    }

    pub fn layers(&self) -> &[StepGraphon] {
        &self.layers
    }

    /// Number of hidden layers `L`.
    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn check_grid(&self, grid: usize) -> Result<()> {
        if grid == 0 {
            return Err(Error::Resolution("grid size must be at least 1".into()));
        }
        for (l, g) in self.layers.iter().enumerate() {
            if !grid.is_multiple_of(g.k()) {
                return Err(Error::Resolution(format!("grid {grid} is not a multiple of K={} (layer {})", g.k(), l + 1)));
            }
        }
        Ok(())
    }

    /// `W^(1)(u_r, j/d)`, `R × d`.
    pub(crate) fn input_matrix(&self, grid: usize, d: usize) -> Array2<f64> {
        let g = &self.layers[0];
        let k = g.k();
        Array2::from_shape_fn((grid, d), |(r, j)| g.cell(((r * k) / grid).min(k - 1), ((j * k) / d).min(k - 1)))
    }

    /// `W^(l)(u_r, v_s)` for a hidden-to-hidden layer (`1 ≤ index < L`), `R × R`.
    pub(crate) fn hidden_matrix(&self, index: usize, grid: usize) -> Array2<f64> {
        let g = &self.layers[index];
        let k = g.k();
        Array2::from_shape_fn((grid, grid), |(r, s)| g.cell((r * k) / grid, (s * k) / grid))
    }

    /// Output-layer weights over layer-L positions, averaged over the output axis.
    pub(crate) fn output_vector(&self, grid: usize) -> Array1<f64> {
        let g = self.layers.last().expect("at least two layers");
        let k = g.k();
        Array1::from_shape_fn(grid, |s| {
            let b = (s * k) / grid;
            (0..k).map(|a| g.cell(a, b)).sum::<f64>() / k as f64
        })
    }
}
