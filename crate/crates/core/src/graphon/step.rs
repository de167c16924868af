use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Estimated,
    Specified,
    Constant,
}

/// Piecewise-constant bipartite graphon on a `K × K` grid. Cell `(a, b)`
/// covers output positions in interval `a` and input positions in interval `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StepGraphonFile", into = "StepGraphonFile")]
pub struct StepGraphon {
    k: usize,
    grid: Vec<f64>,
    provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct StepGraphonFile {
    k: usize,
    grid: Vec<f64>,
    provenance: Provenance,
}

impl TryFrom<StepGraphonFile> for StepGraphon {
    type Error = Error;

    fn try_from(f: StepGraphonFile) -> Result<Self> {
        StepGraphon::new(f.k, f.grid, f.provenance)
    }
}

impl From<StepGraphon> for StepGraphonFile {
    fn from(g: StepGraphon) -> Self {
        Self { k: g.k, grid: g.grid, provenance: g.provenance }
    }
}

impl StepGraphon {
    pub fn new(k: usize, grid: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if k == 0 {
            return Err(Error::Resolution("graphon resolution must be at least 1".into()));
        }
        if grid.len() != k * k {
            return Err(Error::Shape(format!("K={k} needs {} cells, got {}", k * k, grid.len())));
        }
        if let Some(bad) = grid.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("graphon value {bad} outside [0, 1]")));
        }
        Ok(Self { k, grid, provenance })
    }

    pub fn constant(value: f64, k: usize) -> Result<Self> {
        Self::new(k, vec![value; k * k], Provenance::Constant)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Row-major cells.
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    #[inline]
    pub fn cell(&self, a: usize, b: usize) -> f64 {
        self.grid[a * self.k + b]
    }

    /// Value at `(u, v) ∈ [0,1]²`; the right edge belongs to the last cell.
    pub fn value(&self, u: f64, v: f64) -> f64 {
        let idx = |x: f64| ((x * self.k as f64).floor().max(0.0) as usize).min(self.k - 1);
        self.cell(idx(u), idx(v))
    }

    pub fn mean(&self) -> f64 {
        self.grid.iter().sum::<f64>() / self.grid.len() as f64
    }

    pub fn is_constant(&self) -> bool {
        self.grid.iter().all(|&v| v == self.grid[0])
    }

    /// Population variance of the cells.
    pub fn cell_variance(&self) -> f64 {
        let m = self.mean();
        self.grid.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.grid.len() as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graphon serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Cellwise mean of equally sized grids.
pub fn average_histograms(grids: &[StepGraphon]) -> Result<StepGraphon> {
    let first = grids.first().ok_or_else(|| Error::InvalidInput("no grids to average".into()))?;
    let mut sum = vec![0.0; first.grid.len()];
    for g in grids {
        if g.k != first.k {
            return Err(Error::Shape(format!("cannot average K={} with K={}", first.k, g.k)));
        }
        for (s, v) in sum.iter_mut().zip(&g.grid) {
            *s += v;
        }
    }
    let n = grids.len() as f64;
    let provenance = if grids.iter().all(|g| g.provenance == first.provenance) { first.provenance } else { Provenance::Estimated };
    StepGraphon::new(first.k, sum.into_iter().map(|s| (s / n).clamp(0.0, 1.0)).collect(), provenance)
}

/// Unnormalized Frobenius distance between two grids.
pub fn euclid_distance(a: &StepGraphon, b: &StepGraphon) -> Result<f64> {
    if a.k != b.k {
        return Err(Error::Shape(format!("cannot compare K={} with K={}", a.k, b.k)));
    }
    Ok(a.grid.iter().zip(&b.grid).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}
