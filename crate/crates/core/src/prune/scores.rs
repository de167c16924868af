use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::net::{Loss, MaskedMlp};
use crate::numerics::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Random,
    Magnitude,
    Snip,
    Grasp,
    Synflow,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Random, Method::Magnitude, Method::Snip, Method::Grasp, Method::Synflow];

    pub fn name(self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::Magnitude => "magnitude",
            Method::Snip => "snip",
            Method::Grasp => "grasp",
            Method::Synflow => "synflow",
        }
    }

    /// Whether scoring needs a labelled batch.
    pub fn needs_batch(self) -> bool {
        matches!(self, Method::Snip | Method::Grasp)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Configuration(format!("unknown pruning method '{s}' (random|magnitude|snip|grasp|synflow)")))
    }
}

/// Per-layer saliency scores shaped like the network's weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub method: Method,
    pub scores: Vec<Array2<f64>>,
}

impl ScoreSet {
    /// `layer,row,col,score` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,row,col,score\n");
        for (l, s) in self.scores.iter().enumerate() {
            for ((i, j), v) in s.indexed_iter() {
                out.push_str(&format!("{l},{i},{j},{v:e}\n"));
            }
        }
        out
    }
}

/// i.i.d. `Uniform(0,1)` scores, drawn for every entry in layer-major, row-major order.
pub fn score_random(net: &MaskedMlp, rng: &mut Rng) -> ScoreSet {
    let scores = net.weights().iter().map(|w| Array2::from_shape_simple_fn(w.dim(), || rng.uniform())).collect();
    ScoreSet { method: Method::Random, scores }
}

pub fn score_magnitude(net: &MaskedMlp) -> ScoreSet {
    ScoreSet { method: Method::Magnitude, scores: net.weights().iter().map(|w| w.mapv(f64::abs)).collect() }
}

/// Loss gradient with respect to every weight on one batch.
pub fn loss_gradient(net: &MaskedMlp, batch: &Batch, loss: Loss) -> Result<Vec<Array2<f64>>> {
    let cache = net.forward(&batch.inputs)?;
    let (_, g_out) = loss.eval(cache.output(), &batch.labels)?;
    net.backward(&cache, &g_out)
}

/// `|∂L/∂W ⊙ W|`.
pub fn score_snip(net: &MaskedMlp, batch: &Batch, loss: Loss) -> Result<ScoreSet> {
    let grads = loss_gradient(net, batch, loss)?;
    let scores = grads.iter().zip(net.weights()).map(|(g, w)| (g * w).mapv(f64::abs)).collect();
    Ok(ScoreSet { method: Method::Snip, scores })
}

/// Hessian-vector product `H g` at `theta` by central differences of the gradient,
/// with `g = ∇L(θ)` and step `ε = fd_scale·(1 + ‖θ‖)/(1 + ‖g‖)`. Returns `(g, Hg)`.
pub fn fd_hessian_grad_product<F>(theta: &[f64], grad_fn: F, fd_scale: f64) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let g = grad_fn(theta)?;
    if g.len() != theta.len() {
        return Err(Error::Shape(format!("gradient has {} entries for {} parameters", g.len(), theta.len())));
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (nt, ng) = (norm(theta), norm(&g));
    if ng == 0.0 {
        return Ok((g, vec![0.0; theta.len()]));
    }
    let eps = fd_scale * (1.0 + nt) / (1.0 + ng);
    if !eps.is_finite() || eps <= f64::MIN_POSITIVE || !ng.is_finite() {
        return Err(Error::Conditioning(format!("finite-difference step {eps:e} unusable (|g| = {ng:e})")));
    }
    let shifted = |sign: f64| -> Vec<f64> { theta.iter().zip(&g).map(|(t, gi)| t + sign * eps * gi).collect() };
    let plus = grad_fn(&shifted(1.0))?;
    let minus = grad_fn(&shifted(-1.0))?;
    let hg = plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * eps)).collect();
    Ok((g, hg))
}

fn flatten(mats: &[Array2<f64>]) -> Vec<f64> {
    mats.iter().flat_map(|m| m.iter().copied()).collect()
}

fn unflatten(flat: &[f64], like: &[Array2<f64>]) -> Vec<Array2<f64>> {
    let mut offset = 0;
    like.iter()
        .map(|m| {
            let n = m.len();
            let out = Array2::from_shape_vec(m.dim(), flat[offset..offset + n].to_vec()).expect("shape matches");
            offset += n;
            out
        })
        .collect()
}

/// `−W ⊙ (H g)`; the Hessian-gradient product is taken by finite differences
/// on a private copy, so `net` is never modified.
pub fn score_grasp(net: &MaskedMlp, batch: &Batch, loss: Loss, fd_scale: f64) -> Result<ScoreSet> {
    let theta = flatten(net.weights());
    let grad_fn = |params: &[f64]| -> Result<Vec<f64>> {
        let mut probe = net.clone();
        probe.set_weights(unflatten(params, net.weights()))?;
        Ok(flatten(&loss_gradient(&probe, batch, loss)?))
    };
    let (_, hg) = fd_hessian_grad_product(&theta, grad_fn, fd_scale)?;
    let hg = unflatten(&hg, net.weights());
    let scores = hg.iter().zip(net.weights()).map(|(h, w)| -(w * h)).collect();
    Ok(ScoreSet { method: Method::Grasp, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_batch, Normalization, Source, SyntheticSpec};
    use crate::net::Mask;
    use ndarray::array;

    #[test]
    fn snip_single_neuron_oracle() {
        let net = MaskedMlp::from_parts(&[1, 1], vec![array![[3.0]]], Mask::dense(&[1, 1]), 1.0).unwrap();
        let batch = Batch { inputs: array![[2.0]], labels: vec![0], classes: 1 };
        let grads = loss_gradient(&net, &batch, Loss::SquaredError).unwrap();
        assert!((grads[0][[0, 0]] - 24.0).abs() < 1e-12);
        let s = score_snip(&net, &batch, Loss::SquaredError).unwrap();
        assert!((s.scores[0][[0, 0]] - 72.0).abs() < 1e-12);
    }

    #[test]
    fn magnitude_ignores_sign_and_zero_weight_scores_zero() {
        let net = MaskedMlp::from_parts(&[2, 1], vec![array![[-1.5, 0.0]]], Mask::dense(&[2, 1]), 1.0).unwrap();
        let s = score_magnitude(&net);
        assert_eq!(s.scores[0], array![[1.5, 0.0]]);
        let batch = Batch { inputs: array![[1.0, 1.0]], labels: vec![1], classes: 1 };
        assert_eq!(score_snip(&net, &batch, Loss::SquaredError).unwrap().scores[0][[0, 1]], 0.0);
    }

    #[test]
    fn hessian_product_on_quadratic() {
        // L = ½ θᵀAθ, A = [[2,1],[1,3]]: g = Aθ, Hg = A g.
        let grad = |t: &[f64]| Ok(vec![2.0 * t[0] + t[1], t[0] + 3.0 * t[1]]);
        let (g, hg) = fd_hessian_grad_product(&[1.0, 1.0], grad, 1e-3).unwrap();
        assert_eq!(g, vec![3.0, 4.0]);
        // The gradient is linear, so central differences are exact up to roundoff.
        assert!((hg[0] - 10.0).abs() < 1e-8 && (hg[1] - 15.0).abs() < 1e-8, "{hg:?}");
        let (_, zero) = fd_hessian_grad_product(&[0.0, 0.0], grad, 1e-3).unwrap();
        assert_eq!(zero, vec![0.0, 0.0]);
    }

    #[test]
    fn hessian_product_on_cubic_is_second_order() {
        // L = Σ θ_i⁴/4: g = θ³, H = diag(3θ²), Hg = 3θ⁵. Error shrinks 4× when ε halves.
        let grad = |t: &[f64]| Ok(t.iter().map(|x| x * x * x).collect());
        let theta = [0.7, -1.1];
        let exact: Vec<f64> = theta.iter().map(|x: &f64| 3.0 * x.powi(5)).collect();
        let err = |scale: f64| {
            let (_, hg) = fd_hessian_grad_product(&theta, grad, scale).unwrap();
            hg.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let (e1, e2) = (err(1e-2), err(5e-3));
        assert!(e1 < 1e-3 && (e1 / e2 - 4.0).abs() < 0.1, "{e1:e} {e2:e}");
    }

    #[test]
    fn grasp_leaves_network_untouched() {
        let widths = [8, 6, 6, 3];
        let mut rng = Rng::new(1);
        let net = MaskedMlp::init(&widths, Mask::dense(&widths), 1.0, &mut rng).unwrap();
        let before = net.clone();
        let spec = SyntheticSpec::new(3, 8);
        let batch = make_batch(Source::Synthetic(&spec), 16, Normalization::UnitSphere, &mut rng).unwrap();
        let s = score_grasp(&net, &batch, Loss::CrossEntropy, 1e-3).unwrap();
        assert_eq!(net, before);
        assert!(s.scores.iter().all(|m| m.iter().all(|v| v.is_finite())));
        assert!(s.scores.iter().any(|m| m.iter().any(|&v| v != 0.0)));
    }

    #[test]
    fn method_parsing() {
        assert_eq!("SynFlow".parse::<Method>().unwrap(), Method::Synflow);
        assert!(matches!("obd".parse::<Method>(), Err(Error::Configuration(_))));
    }
}
