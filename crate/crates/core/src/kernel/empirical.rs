use ndarray::Array2;
use rayon::prelude::*;

use super::matrix::{KernelKind, KernelMatrix};
use super::stack::GraphonStack;
use crate::data::fingerprint_inputs;
use crate::error::{Error, Result};
use crate::graphon::{sample_mask, Calibration};
use crate::net::{LayerMask, Mask, MaskedMlp};
use crate::numerics::Rng;

/// Rows of the masked Jacobian built per block.
const ROW_CHUNK: usize = 64;

/// `Θ[a, b] = Σ_θ ∂f(x_a)/∂θ · ∂f(x_b)/∂θ` for a single-output net. With
/// `include_pruned_params = false` only kept weights count.
pub fn empirical_ntk(net: &MaskedMlp, inputs: &Array2<f64>, include_pruned_params: bool) -> Result<KernelMatrix> {
    let out = *net.widths().last().expect("widths are nonempty");
    if out != 1 {
        return Err(Error::Configuration(format!("empirical NTK needs a single-output head, net has {out}")));
    }
    let cache = net.forward(inputs)?;
    let b = inputs.nrows();
    let deltas = net.backprop_deltas(&cache, &Array2::ones((b, 1)))?;
    let mut theta = Array2::<f64>::zeros((b, b));
    for (l, delta) in deltas.iter().enumerate() {
        let h = &cache.activations[l];
        let n_in = net.widths()[l] as f64;
        let layer = net.mask().layer(l);
        if include_pruned_params || layer.is_dense() {
            let dd = delta.dot(&delta.t());
            let hh = h.dot(&h.t());
            theta += &((dd * hh) / n_in);
        } else {
            theta += &masked_layer_gram(delta, h, layer, n_in);
        }
    }
    KernelMatrix::new(theta, fingerprint_inputs(inputs), Some(KernelKind::Empirical))
}

/// `Σ_{(i,j) kept} Δ[a,i]Δ[b,i]H[a,j]H[b,j]/n_in`, accumulated as `J Jᵀ` over row blocks.
fn masked_layer_gram(delta: &Array2<f64>, h: &Array2<f64>, mask: &LayerMask, n_in: f64) -> Array2<f64> {
    let b = delta.nrows();
    let scale = n_in.sqrt();
    let rows: Vec<usize> = (0..mask.n_out()).collect();
    rows.par_chunks(ROW_CHUNK)
        .map(|chunk| {
            let nnz: usize = chunk.iter().map(|&i| mask.bits()[i * mask.n_in()..(i + 1) * mask.n_in()].iter().filter(|&&k| k).count()).sum();
            let mut jac = Array2::<f64>::zeros((b, nnz));
            let mut col = 0;
            for &i in chunk {
                let row = &mask.bits()[i * mask.n_in()..(i + 1) * mask.n_in()];
                for (j, _) in row.iter().enumerate().filter(|(_, &k)| k) {
                    for a in 0..b {
                        jac[[a, col]] = delta[[a, i]] * h[[a, j]] / scale;
                    }
                    col += 1;
                }
            }
            jac.dot(&jac.t())
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Array2::zeros((b, b)), |acc, g| acc + g)
}

/// Where each initialization's mask comes from.
#[derive(Debug, Clone)]
pub enum MaskSource<'a> {
    Fixed(&'a Mask),
    /// A fresh mask per init, layer `l` sampled from `stack.layers()[l]`.
    Graphon { stack: &'a GraphonStack, calibration: Calibration, sparsity: f64 },
}

/// Mean over initializations plus the entrywise standard error of that mean.
#[derive(Debug, Clone)]
pub struct McKernel {
    pub mean: KernelMatrix,
    pub std_error: Array2<f64>,
    pub n_inits: usize,
}

/// Draws one mask for `widths` from a stack (one graphon per weight layer).
pub fn sample_stack_mask(
    stack: &GraphonStack,
    widths: &[usize],
    calibration: Calibration,
    sparsity: f64,
    rng: &mut Rng,
) -> Result<Mask> {
    if stack.layers().len() + 1 != widths.len() {
        return Err(Error::Shape(format!("{} graphons for {} widths", stack.layers().len(), widths.len())));
    }
    let layers = stack
        .layers()
        .iter()
        .zip(widths.windows(2))
        .map(|(g, w)| {
            if g.is_constant() && g.grid()[0] == 1.0 {
                Ok(LayerMask::dense(w[1], w[0]))
            } else {
                sample_mask(g, w[1], w[0], sparsity, calibration, rng)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Mask::new(layers))
}

/// Monte Carlo average of [`empirical_ntk`] over `n_inits` independent
/// `N(0, 1)` initializations; init `i` uses `rng.child(i)`.
pub fn mc_empirical_ntk(
    widths: &[usize],
    source: MaskSource<'_>,
    inputs: &Array2<f64>,
    n_inits: usize,
    include_pruned_params: bool,
    rng: &Rng,
) -> Result<McKernel> {
    if n_inits == 0 {
        return Err(Error::InvalidInput("n_inits must be at least 1".into()));
    }
    let draws: Vec<Array2<f64>> = (0..n_inits)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.child(i as u64);
            let mask = match &source {
                MaskSource::Fixed(m) => (*m).clone(),
                MaskSource::Graphon { stack, calibration, sparsity } => {
                    sample_stack_mask(stack, widths, *calibration, *sparsity, &mut r.child_named("mask"))?
                }
            };
            let net = MaskedMlp::init(widths, mask, 1.0, &mut r)?;
            Ok(empirical_ntk(&net, inputs, include_pruned_params)?.into_values())
        })
        .collect::<Result<Vec<_>>>()?;
    let n = n_inits as f64;
    let b = inputs.nrows();
    let mut mean = Array2::<f64>::zeros((b, b));
    for d in &draws {
        mean += d;
    }
    mean /= n;
    let mut var = Array2::<f64>::zeros((b, b));
    if n_inits > 1 {
        for d in &draws {
            var += &(d - &mean).mapv(|v| v * v);
        }
        var /= n - 1.0;
    }
    let std_error = var.mapv(|v| (v / n).sqrt());
    Ok(McKernel { mean: KernelMatrix::new(mean, fingerprint_inputs(inputs), Some(KernelKind::Empirical))?, std_error, n_inits })
}
