use super::step::{Provenance, StepGraphon};
use crate::error::{Error, Result};
use crate::net::LayerMask;
use crate::numerics::Rng;

/// Split of `0..n` into `k` consecutive intervals whose sizes differ by at
/// most one, the larger intervals first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Partition {
    n: usize,
    k: usize,
}

impl Partition {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if k == 0 || n < k {
            return Err(Error::Resolution(format!("cannot split {n} nodes into {k} intervals")));
        }
        Ok(Self { n, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Start index of interval `a`; `start(k) == n`.
    pub fn start(&self, a: usize) -> usize {
        let (q, r) = (self.n / self.k, self.n % self.k);
        a * q + a.min(r)
    }

    pub fn size(&self, a: usize) -> usize {
        self.start(a + 1) - self.start(a)
    }

    /// Interval containing index `i`.
    pub fn interval_of(&self, i: usize) -> usize {
        let (q, r) = (self.n / self.k, self.n % self.k);
        let big = r * (q + 1);
        if i < big {
            i / (q + 1)
        } else {
            r + (i - big) / q
        }
    }
}

/// Row order by out-degree and column order by in-degree, both descending,
/// ties by ascending index. `rows[new] = old`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeOrder {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

impl DegreeOrder {
    pub fn of(mask: &LayerMask) -> Self {
        let sort = |deg: Vec<usize>| {
            let mut idx: Vec<usize> = (0..deg.len()).collect();
            idx.sort_by(|&a, &b| deg[b].cmp(&deg[a]).then(a.cmp(&b)));
            idx
        };
        Self { rows: sort(mask.row_degrees()), cols: sort(mask.col_degrees()) }
    }
}

/// Sort-and-smooth estimate: degree-sort both sides, split each axis into `k`
/// near-equal intervals and average the mask over every block.
pub fn estimate_sas(mask: &LayerMask, k: usize) -> Result<StepGraphon> {
    let rows = Partition::new(mask.n_out(), k)?;
    let cols = Partition::new(mask.n_in(), k)?;
    let order = DegreeOrder::of(mask);
    let col_cell: Vec<usize> = {
        let mut c = vec![0; mask.n_in()];
        for (new, &old) in order.cols.iter().enumerate() {
            c[old] = cols.interval_of(new);
        }
        c
    };
    let mut counts = vec![0usize; k * k];
    for (new, &old) in order.rows.iter().enumerate() {
        let a = rows.interval_of(new);
        let row = &mask.bits()[old * mask.n_in()..(old + 1) * mask.n_in()];
        let cells = &mut counts[a * k..(a + 1) * k];
        for (j, &b) in row.iter().enumerate() {
            if b {
                cells[col_cell[j]] += 1;
            }
        }
    }
    let grid = (0..k * k).map(|c| counts[c] as f64 / (rows.size(c / k) * cols.size(c % k)) as f64).collect();
    StepGraphon::new(k, grid, Provenance::Estimated)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Calibration {
    /// Scale the grid so its mean equals the target density.
    #[default]
    Rescale,
    /// Use the grid values as edge probabilities directly.
    None,
}

impl std::str::FromStr for Calibration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rescale" => Ok(Self::Rescale),
            "none" => Ok(Self::None),
            other => Err(Error::Configuration(format!("unknown calibration '{other}' (rescale|none)"))),
        }
    }
}

/// `min(1, λ·g)` with `λ` chosen so the mean equals `density`. Clamped mass is
/// redistributed over the unclamped cells, at most 10 passes.
pub fn rescale_grid(grid: &StepGraphon, density: f64) -> Result<StepGraphon> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::Domain(format!("density {density} outside [0, 1]")));
    }
    let cells = grid.grid();
    let total = cells.len() as f64;
    let support = cells.iter().filter(|&&v| v > 0.0).count() as f64;
    if density > 0.0 && support == 0.0 {
        return Err(Error::Infeasible("graphon is identically zero; no density can be reached".into()));
    }
    if density * total > support + 1e-12 {
        return Err(Error::Infeasible(format!(
            "density {density} exceeds the graphon's support fraction {}",
            support / total
        )));
    }
    if density == 0.0 {
        return StepGraphon::new(grid.k(), vec![0.0; cells.len()], grid.provenance());
    }
    let mut saturated = vec![false; cells.len()];
    let mut out = cells.to_vec();
    for _ in 0..10 {
        let free_mass: f64 = cells.iter().zip(&saturated).filter(|(_, &s)| !s).map(|(v, _)| v).sum();
        let clamped = saturated.iter().filter(|&&s| s).count() as f64;
        let lambda = (density * total - clamped) / free_mass;
        let mut changed = false;
        for ((o, &v), s) in out.iter_mut().zip(cells).zip(saturated.iter_mut()) {
            if *s {
                *o = 1.0;
                continue;
            }
            let x = lambda * v;
            if x >= 1.0 {
                *o = 1.0;
                *s = true;
                changed = true;
            } else {
                *o = x;
            }
        }
        if !changed {
            break;
        }
    }
    StepGraphon::new(grid.k(), out, grid.provenance())
}

/// Draws a `n_out × n_in` mask with edge `(i, j)` kept with the probability of
/// the grid cell containing `(i, j)` (cells follow [`Partition`] on each axis).
/// With `Calibration::Rescale` the grid is first rescaled to density `1 − sparsity`.
pub fn sample_mask(
    graphon: &StepGraphon,
    n_out: usize,
    n_in: usize,
    sparsity: f64,
    calibration: Calibration,
    rng: &mut Rng,
) -> Result<LayerMask> {
    let k = graphon.k();
    let grid = match calibration {
        Calibration::Rescale => rescale_grid(graphon, 1.0 - sparsity)?,
        Calibration::None => graphon.clone(),
    };
    let rows = Partition::new(n_out, k)?;
    let cols = Partition::new(n_in, k)?;
    let col_cell: Vec<usize> = (0..n_in).map(|j| cols.interval_of(j)).collect();
    let mut bits = Vec::with_capacity(n_out * n_in);
    for i in 0..n_out {
        let a = rows.interval_of(i);
        for &b in &col_cell {
            bits.push(rng.bernoulli_unchecked(grid.cell(a, b)));
        }
    }
    let layer = LayerMask::from_bits(n_out, n_in, bits)?;
    Ok(layer)
}
