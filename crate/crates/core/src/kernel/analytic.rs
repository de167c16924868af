use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::matrix::{KernelKind, KernelMatrix};
use super::moments::{moments_unchecked, relu_gauss_moments};
use super::stack::GraphonStack;
use crate::data::fingerprint_inputs;
use crate::error::{Error, Result};

pub const DEFAULT_GRID: usize = 256;

/// Pairs handled per batched block.
const PAIR_CHUNK: usize = 512;

/// Which parameters a layer's contribution sums over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NtkVariant {
    /// All positions of every layer: `Θ_l = ⟨G^(l)⟩·⟨Σ^(l−1)⟩`.
    #[default]
    Standard,
    /// Only the graphon-weighted positions of layer `l`: `Θ_l = ⟨G^(l)·Σ̃^(l)⟩`,
    /// the limit of the NTK restricted to unpruned weights.
    MaskedParams,
}

impl std::str::FromStr for NtkVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Self::Standard),
            "masked-params" | "masked" => Ok(Self::MaskedParams),
            other => Err(Error::Configuration(format!("unknown NTK variant '{other}' (standard|masked-params)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NtkOptions {
    /// Number of midpoint positions `R` per hidden layer.
    pub grid: usize,
    pub variant: NtkVariant,
}

impl Default for NtkOptions {
    fn default() -> Self {
        Self { grid: DEFAULT_GRID, variant: NtkVariant::Standard }
    }
}

/// Per-position covariances of one hidden layer for an input pair `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovLayer {
    /// `Σ̃(u; x,x)`, `Σ̃(u; x,y)`, `Σ̃(u; y,y)`.
    pub pre_xx: Vec<f64>,
    pub pre_xy: Vec<f64>,
    pub pre_yy: Vec<f64>,
    /// `Σ(u; ·,·)`: activation moments.
    pub act_xx: Vec<f64>,
    pub act_xy: Vec<f64>,
    pub act_yy: Vec<f64>,
    /// `Σ̇(u; x,y)`: derivative moment.
    pub der_xy: Vec<f64>,
}

/// Forward covariance fields of every hidden layer plus the output
/// pre-activation covariance `Σ̃^(L+1)(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovField {
    pub layers: Vec<CovLayer>,
    pub output_xy: f64,
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::Shape(format!("input lengths {} and {}", x.len(), y.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite input".into()));
    }
    Ok(())
}

/// Direct per-pair evaluation of the covariance recursion on a grid of `grid` positions.
pub fn forward_cov(stack: &GraphonStack, x: &[f64], y: &[f64], grid: usize) -> Result<CovField> {
    check_pair(x, y)?;
    stack.check_grid(grid)?;
    let d = x.len();
    let depth = stack.depth();
    let w1 = stack.input_matrix(grid, d);
    let mut layers: Vec<CovLayer> = Vec::with_capacity(depth);
    for l in 0..depth {
        let (pre_xx, pre_xy, pre_yy) = if l == 0 {
            let row = |r: usize, a: &[f64], b: &[f64]| {
                (0..d).map(|j| w1[[r, j]] * a[j] * b[j]).sum::<f64>() / d as f64
            };
            (
                (0..grid).map(|r| row(r, x, x)).collect::<Vec<_>>(),
                (0..grid).map(|r| row(r, x, y)).collect::<Vec<_>>(),
                (0..grid).map(|r| row(r, y, y)).collect::<Vec<_>>(),
            )
        } else {
            let w = stack.hidden_matrix(l, grid);
            let prev = &layers[l - 1];
            let mix = |src: &[f64]| -> Vec<f64> {
                (0..grid).map(|r| (0..grid).map(|s| w[[r, s]] * src[s]).sum::<f64>() / grid as f64).collect()
            };
            (mix(&prev.act_xx), mix(&prev.act_xy), mix(&prev.act_yy))
        };
        let mut layer = CovLayer {
            act_xx: Vec::with_capacity(grid),
            act_xy: Vec::with_capacity(grid),
            act_yy: Vec::with_capacity(grid),
            der_xy: Vec::with_capacity(grid),
            pre_xx: pre_xx.iter().map(|v| v.max(0.0)).collect(),
            pre_xy,
            pre_yy: pre_yy.iter().map(|v| v.max(0.0)).collect(),
        };
        for u in 0..grid {
            let (sxx, sxy, syy) = (layer.pre_xx[u], layer.pre_xy[u], layer.pre_yy[u]);
            if !(sxx.is_finite() && sxy.is_finite() && syy.is_finite()) {
                return Err(Error::NonFinite { layer: l + 1, position: u });
            }
            layer.act_xx.push(relu_gauss_moments(sxx, sxx, sxx)?.0);
            layer.act_yy.push(relu_gauss_moments(syy, syy, syy)?.0);
            let (a, dd) = relu_gauss_moments(sxx, sxy, syy)?;
            layer.act_xy.push(a);
            layer.der_xy.push(dd);
        }
        layers.push(layer);
    }
    let w_out = stack.output_vector(grid);
    let last = &layers[depth - 1];
    let output_xy = (0..grid).map(|s| w_out[s] * last.act_xy[s]).sum::<f64>() / grid as f64;
    Ok(CovField { layers, output_xy })
}

/// `Θ(x, y)` for one pair, evaluated directly from [`forward_cov`].
pub fn graphon_ntk_pair(stack: &GraphonStack, x: &[f64], y: &[f64], opts: &NtkOptions) -> Result<f64> {
    let field = forward_cov(stack, x, y, opts.grid)?;
    let grid = opts.grid;
    let depth = stack.depth();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let w_out = stack.output_vector(grid);
    // G^(L)(u) = Σ̇^(L)(u)·w_out(u), then G^(l)(u) = Σ̇^(l)(u)·(1/R)Σ_v W^(l+1)(v,u)·G^(l+1)(v).
    let mut g: Vec<f64> = (0..grid).map(|u| field.layers[depth - 1].der_xy[u] * w_out[u]).collect();
    let s0 = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / x.len() as f64;
    let mut theta = match opts.variant {
        NtkVariant::Standard => mean(&field.layers[depth - 1].act_xy),
        NtkVariant::MaskedParams => field.output_xy,
    };
    for l in (0..depth).rev() {
        let layer = &field.layers[l];
        theta += match opts.variant {
            NtkVariant::Standard => mean(&g) * if l == 0 { s0 } else { mean(&field.layers[l - 1].act_xy) },
            NtkVariant::MaskedParams => (0..grid).map(|u| g[u] * layer.pre_xy[u]).sum::<f64>() / grid as f64,
        };
        if l > 0 {
            let w = stack.hidden_matrix(l, grid);
            let below = &field.layers[l - 1];
            g = (0..grid)
                .map(|u| below.der_xy[u] * (0..grid).map(|v| w[[v, u]] * g[v]).sum::<f64>() / grid as f64)
                .collect();
        }
    }
    Ok(theta)
}

/// Precomputed layer operators for the batched evaluation.
struct Operators {
    /// `W^(1)` as `d × R` (transposed), pre-divided by `d`.
    input_t: Array2<f64>,
    /// Hidden `W^(l)` transposed (`R × R`, indexed `[v, u]`), pre-divided by `R`; entry `l−1` for layer `l ≥ 2`.
    hidden_t: Vec<Array2<f64>>,
    /// Same matrices untransposed, for the backward pass.
    hidden: Vec<Array2<f64>>,
    output: Array1<f64>,
    grid: usize,
}

impl Operators {
    fn new(stack: &GraphonStack, grid: usize, d: usize) -> Self {
        let input_t = stack.input_matrix(grid, d).reversed_axes().mapv(|v| v / d as f64);
        let hidden: Vec<Array2<f64>> =
            (1..stack.depth()).map(|l| stack.hidden_matrix(l, grid).mapv(|v| v / grid as f64)).collect();
        let hidden_t = hidden.iter().map(|m| m.t().as_standard_layout().into_owned()).collect();
        Self { input_t, hidden_t, hidden, output: stack.output_vector(grid), grid }
    }
}

/// Forward fields of one block of pairs: `pre[l]`, `act[l]`, `der[l]`, each `pairs × R`.
struct BlockFields {
    pre: Vec<Array2<f64>>,
    act: Vec<Array2<f64>>,
    der: Vec<Array2<f64>>,
}

/// Diagonal pre-activation fields `Σ̃^(l)(u; x_a, x_a)` for every sample, `B × R` per layer.
struct Diagonal {
    pre: Vec<Array2<f64>>,
}

fn propagate(
    ops: &Operators,
    inputs: &Array2<f64>,
    pairs: &[(usize, usize)],
    diag: Option<&Diagonal>,
    depth: usize,
) -> Result<BlockFields> {
    let d = inputs.ncols();
    let mut products = Array2::zeros((pairs.len(), d));
    for (p, &(a, b)) in pairs.iter().enumerate() {
        let (xa, xb) = (inputs.row(a), inputs.row(b));
        for ((dst, u), v) in products.row_mut(p).iter_mut().zip(xa.iter()).zip(xb.iter()) {
            *dst = u * v;
        }
    }
    let mut fields = BlockFields { pre: Vec::with_capacity(depth), act: Vec::with_capacity(depth), der: Vec::with_capacity(depth) };
    let mut pre = products.dot(&ops.input_t);
    for l in 0..depth {
        let mut act = Array2::zeros(pre.dim());
        let mut der = Array2::zeros(pre.dim());
        for (p, &(a, b)) in pairs.iter().enumerate() {
            for u in 0..ops.grid {
                let sxy = pre[[p, u]];
                let (sxx, syy) = match diag {
                    Some(dg) => (dg.pre[l][[a, u]], dg.pre[l][[b, u]]),
                    None => (sxy, sxy),
                };
                if !sxy.is_finite() {
                    return Err(Error::NonFinite { layer: l + 1, position: u });
                }
                let (m, dm) = moments_unchecked(sxx.max(0.0), sxy, syy.max(0.0)).map_err(|rho| {
                    Error::Domain(format!("layer {} position {u}: correlation {rho} outside [-1, 1]", l + 1))
                })?;
                act[[p, u]] = m;
                der[[p, u]] = dm;
            }
        }
        let next = if l + 1 < depth { Some(act.dot(&ops.hidden_t[l])) } else { None };
        fields.pre.push(pre);
        fields.act.push(act);
        fields.der.push(der);
        if let Some(n) = next {
            pre = n;
        } else {
            break;
        }
    }
    Ok(fields)
}

fn block_theta(
    ops: &Operators,
    fields: &BlockFields,
    inputs: &Array2<f64>,
    pairs: &[(usize, usize)],
    variant: NtkVariant,
) -> Vec<f64> {
    let depth = fields.act.len();
    let r = ops.grid as f64;
    let row_mean = |m: &Array2<f64>| m.mean_axis(Axis(1)).expect("grid is nonempty");
    let mut theta: Array1<f64> = match variant {
        NtkVariant::Standard => row_mean(&fields.act[depth - 1]),
        NtkVariant::MaskedParams => fields.act[depth - 1].dot(&ops.output) / r,
    };
    let mut g = &fields.der[depth - 1] * &ops.output.view().insert_axis(Axis(0));
    for l in (0..depth).rev() {
        match variant {
            NtkVariant::Standard => {
                let s_prev: Array1<f64> = if l == 0 {
                    pairs.iter().map(|&(a, b)| inputs.row(a).dot(&inputs.row(b)) / inputs.ncols() as f64).collect()
                } else {
                    row_mean(&fields.act[l - 1])
                };
                theta += &(row_mean(&g) * s_prev);
            }
            NtkVariant::MaskedParams => {
                theta += &(&g * &fields.pre[l]).mean_axis(Axis(1)).expect("grid is nonempty");
            }
        }
        if l > 0 {
            // (G·W)[p, u] = (1/R) Σ_v G[p, v]·W(v, u)
            g = g.dot(&ops.hidden[l - 1]) * &fields.der[l - 1];
        }
    }
    theta.to_vec()
}

/// Analytic Graphon NTK on every pair of rows of `inputs` (`B × d`).
/// Diagonal fields are computed first, then off-diagonal pairs in parallel blocks.
pub fn graphon_ntk(stack: &GraphonStack, inputs: &Array2<f64>, opts: &NtkOptions) -> Result<KernelMatrix> {
    stack.check_grid(opts.grid)?;
    let (b, d) = inputs.dim();
    if b == 0 || d == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    if inputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite input".into()));
    }
    let depth = stack.depth();
    let ops = Operators::new(stack, opts.grid, d);

    let diag_pairs: Vec<(usize, usize)> = (0..b).map(|a| (a, a)).collect();
    let diag_blocks: Vec<(Vec<Array2<f64>>, Vec<f64>)> = diag_pairs
        .par_chunks(PAIR_CHUNK)
        .map(|chunk| {
            let f = propagate(&ops, inputs, chunk, None, depth)?;
            let t = block_theta(&ops, &f, inputs, chunk, opts.variant);
            Ok((f.pre, t))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut diag = Diagonal { pre: (0..depth).map(|_| Array2::zeros((b, opts.grid))).collect() };
    let mut values = Array2::zeros((b, b));
    let mut offset = 0;
    for (pre, t) in diag_blocks {
        let n = t.len();
        for l in 0..depth {
            diag.pre[l].slice_mut(s![offset..offset + n, ..]).assign(&pre[l]);
        }
        for (i, v) in t.into_iter().enumerate() {
            values[[offset + i, offset + i]] = v;
        }
        offset += n;
    }

    let pairs: Vec<(usize, usize)> = (0..b).flat_map(|a| ((a + 1)..b).map(move |c| (a, c))).collect();
    let blocks: Vec<Vec<f64>> = pairs
        .par_chunks(PAIR_CHUNK)
        .map(|chunk| {
            let f = propagate(&ops, inputs, chunk, Some(&diag), depth)?;
            Ok(block_theta(&ops, &f, inputs, chunk, opts.variant))
        })
        .collect::<Result<Vec<_>>>()?;
    for (&(a, c), v) in pairs.iter().zip(blocks.into_iter().flatten()) {
        values[[a, c]] = v;
        values[[c, a]] = v;
    }
    KernelMatrix::new(values, fingerprint_inputs(inputs), Some(KernelKind::Analytic))
}

/// `c^L` times the dense-network kernel.
pub fn constant_ntk(c: f64, hidden_layers: usize, inputs: &Array2<f64>) -> Result<KernelMatrix> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::Domain(format!("constant graphon value must lie in (0, 1], got {c}")));
    }
    // Position dependence vanishes for a dense stack, so one grid point is exact.
    let dense = graphon_ntk(&GraphonStack::dense(hidden_layers)?, inputs, &NtkOptions { grid: 1, variant: NtkVariant::Standard })?;
    Ok(dense.scaled(c.powi(hidden_layers as i32)).with_kind(Some(KernelKind::ConstantClosedForm)))
}

/// Closed-form dense one-hidden-layer NTK for a pair: `Σ̇·⟨x,y⟩/d + Σ^(1)`.
pub fn dense_one_layer_ntk(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    let d = x.len() as f64;
    let (sxx, sxy, syy) = (x.dot(&x) / d, x.dot(&y) / d, y.dot(&y) / d);
    let prod = sxx * syy;
    if prod == 0.0 {
        return 0.0;
    }
    let rho = (sxy / prod.sqrt()).clamp(-1.0, 1.0);
    let theta = rho.acos();
    let pi = std::f64::consts::PI;
    let act = prod.sqrt() / (2.0 * pi) * (theta.sin() + (pi - theta) * rho);
    let der = (pi - theta) / (2.0 * pi);
    der * sxy + act
}
