use ndarray::{Array1, Array2};

use super::select::{check_sparsity, keep_count, top_k};
use crate::error::{Error, Result};
use crate::net::{LayerMask, Mask, MaskedMlp};

/// Path-flow scores `b_i·|W_ij|·a_j` of a linearized network with weights `|W|⊙M`
/// on an all-ones input, divided by the total flow `R` so each layer sums to 1
/// (or is all zero when no path survives). Running products are kept
/// normalized with log-scale accumulators, so depth cannot overflow.
pub fn synflow_scores(weights: &[Array2<f64>], mask: &Mask) -> Vec<Array2<f64>> {
    let abs: Vec<Array2<f64>> = weights
        .iter()
        .zip(mask.layers())
        .map(|(w, m)| {
            let mut a = w.mapv(f64::abs);
            for (x, &keep) in a.iter_mut().zip(m.bits()) {
                if !keep {
                    *x = 0.0;
                }
            }
            a
        })
        .collect();
    let n = abs.len();

    // forward[l] ∝ input to layer l (length n_in), with true value exp(fscale[l])·forward[l].
    let mut forward = Vec::with_capacity(n + 1);
    let mut fscale = Vec::with_capacity(n + 1);
    forward.push(Array1::<f64>::ones(abs[0].ncols()));
    fscale.push(0.0);
    for w in &abs {
        let (v, s) = renormalize(w.dot(forward.last().expect("nonempty")));
        fscale.push(fscale.last().expect("nonempty") + s);
        forward.push(v);
    }
    // backward[l] ∝ ∂R/∂(output of layer l).
    let mut backward = vec![Array1::<f64>::zeros(0); n];
    let mut bscale = vec![0.0; n];
    backward[n - 1] = Array1::ones(abs[n - 1].nrows());
    for l in (0..n - 1).rev() {
        let (v, s) = renormalize(abs[l + 1].t().dot(&backward[l + 1]));
        backward[l] = v;
        bscale[l] = bscale[l + 1] + s;
    }
    let total: f64 = forward[n].sum();
    let log_r = if total > 0.0 { total.ln() + fscale[n] } else { f64::NAN };

    abs.iter()
        .enumerate()
        .map(|(l, w)| {
            if log_r.is_nan() {
                return Array2::zeros(w.dim());
            }
            let factor = (fscale[l] + bscale[l] - log_r).exp();
            let (b, a) = (&backward[l], &forward[l]);
            Array2::from_shape_fn(w.dim(), |(i, j)| b[i] * w[[i, j]] * a[j] * factor)
        })
        .collect()
}

/// Scales a nonnegative vector to max 1; returns it with the log of the factor removed.
fn renormalize(v: Array1<f64>) -> (Array1<f64>, f64) {
    let max = v.iter().copied().fold(0.0, f64::max);
    if max > 0.0 && max.is_finite() {
        (v / max, max.ln())
    } else {
        (v, 0.0)
    }
}

/// Iterative SynFlow: after round `r` keep `⌈(1−p)^{r/rounds}·N⌉` of the
/// prunable weights, chosen by score among those kept in the previous round.
/// Returns the final mask together with the kept count after every round.
pub fn synflow_mask(
    net: &MaskedMlp,
    sparsity: f64,
    rounds: usize,
    prunable: &[bool],
    per_layer: bool,
) -> Result<(Mask, Vec<usize>)> {
    synflow_mask_observed(net, sparsity, rounds, prunable, per_layer, |_, _| {})
}

/// [`synflow_mask`] that hands the mask after each round to `observe`.
pub fn synflow_mask_observed<F: FnMut(usize, &Mask)>(
    net: &MaskedMlp,
    sparsity: f64,
    rounds: usize,
    prunable: &[bool],
    per_layer: bool,
    mut observe: F,
) -> Result<(Mask, Vec<usize>)> {
    check_sparsity(sparsity)?;
    if rounds == 0 {
        return Err(Error::Domain("synflow needs at least one round".into()));
    }
    if prunable.len() != net.n_layers() {
        return Err(Error::Shape(format!("{} prunable flags for {} layers", prunable.len(), net.n_layers())));
    }
    let layers: Vec<usize> = (0..net.n_layers()).filter(|&l| prunable[l]).collect();
    let groups: Vec<Vec<usize>> = if per_layer { layers.iter().map(|&l| vec![l]).collect() } else { vec![layers] };
    let mut mask = Mask::new(
        net.mask()
            .layers()
            .iter()
            .enumerate()
            .map(|(l, m)| if prunable[l] { LayerMask::dense(m.n_out(), m.n_in()) } else { m.clone() })
            .collect(),
    );
    let mut history = Vec::with_capacity(rounds);
    for r in 1..=rounds {
        let scores = synflow_scores(net.weights(), &mask);
        let mut bits: Vec<Vec<bool>> = mask.layers().iter().map(|m| m.bits().to_vec()).collect();
        let mut kept_total = 0;
        for group in &groups {
            for &l in group {
                if mask.layer(l).kept() > 0 && scores[l].iter().all(|&s| s == 0.0) {
                    log::warn!("synflow round {r}: every score in layer {l} is zero; ties decide the cut");
                }
            }
            let size: usize = group.iter().map(|&l| mask.layer(l).entries()).sum();
            let target = keep_count(size, 1.0 - (1.0 - sparsity).powf(r as f64 / rounds as f64));
            let target = if r == rounds { keep_count(size, sparsity) } else { target };
            let candidates: Vec<(u32, u32)> = group
                .iter()
                .flat_map(|&l| {
                    mask.layer(l).bits().iter().enumerate().filter(|(_, &b)| b).map(move |(i, _)| (l as u32, i as u32))
                })
                .collect();
            let keep = top_k(&scores, &candidates, target.min(candidates.len()));
            for &l in group {
                bits[l].iter_mut().for_each(|b| *b = false);
            }
            for (l, i) in keep {
                bits[l as usize][i as usize] = true;
            }
            kept_total += target.min(candidates.len());
        }
        mask = Mask::new(
            mask.layers()
                .iter()
                .zip(bits)
                .map(|(m, b)| LayerMask::from_bits(m.n_out(), m.n_in(), b))
                .collect::<Result<Vec<_>>>()?,
        );
        history.push(kept_total);
        observe(r, &mask);
    }
    Ok((mask, history))
}
