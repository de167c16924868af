use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::mask::{LayerMask, Mask};
use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Relu,
    /// Linear network; used to check the algebra in tests.
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Array2<f64>>,
    pub v: Vec<Array2<f64>>,
    pub step: u64,
}

impl AdamState {
    fn zeros(widths: &[usize]) -> Self {
        let m: Vec<Array2<f64>> = widths.windows(2).map(|w| Array2::zeros((w[1], w[0]))).collect();
        Self { v: m.clone(), m, step: 0 }
    }
}

/// Intermediate tensors of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `h^(0) … h^(L)`: the input followed by each hidden activation, `B × n_l`.
    pub activations: Vec<Array2<f64>>,
    /// `z^(1) … z^(L+1)`; the last one is the network output.
    pub preactivations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.preactivations.last().expect("forward cache holds at least one layer")
    }

    pub fn batch_size(&self) -> usize {
        self.activations[0].nrows()
    }
}

/// Bias-free masked MLP in NTK parameterization: `z^(l) = W^(l) h^(l−1) / √n_{l−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedMlp {
    widths: Vec<usize>,
    weights: Vec<Array2<f64>>,
    mask: Mask,
    sigma_w2: f64,
    activation: Activation,
    adam: AdamState,
}

impl MaskedMlp {
    /// Kept weights are drawn from `N(0, sigma_w2)`. Every entry consumes one
    /// draw, so the values at kept positions do not depend on the mask.
    pub fn init(widths: &[usize], mask: Mask, sigma_w2: f64, rng: &mut Rng) -> Result<Self> {
        validate_widths(widths)?;
        mask.check_widths(widths)?;
        if !(sigma_w2 > 0.0) || !sigma_w2.is_finite() {
            return Err(Error::Domain(format!("sigma_w2 must be positive, got {sigma_w2}")));
        }
        let sd = sigma_w2.sqrt();
        let weights = widths
            .windows(2)
            .zip(mask.layers())
            .map(|(w, m)| {
                let mut layer = Array2::from_shape_simple_fn((w[1], w[0]), || sd * rng.standard_normal());
                zero_pruned(&mut layer, m);
                layer
            })
            .collect();
        Ok(Self {
            widths: widths.to_vec(),
            weights,
            mask,
            sigma_w2,
            activation: Activation::Relu,
            adam: AdamState::zeros(widths),
        })
    }

    /// Wraps explicit weights; entries outside the mask are zeroed.
    pub fn from_parts(widths: &[usize], weights: Vec<Array2<f64>>, mask: Mask, sigma_w2: f64) -> Result<Self> {
        validate_widths(widths)?;
        mask.check_widths(widths)?;
        check_weight_shapes(widths, &weights)?;
        let weights = weights.into_iter().map(standard_layout).collect();
        let mut net = Self {
            widths: widths.to_vec(),
            weights,
            mask: Mask::dense(widths),
            sigma_w2,
            activation: Activation::Relu,
            adam: AdamState::zeros(widths),
        };
        net.apply_mask(mask)?;
        Ok(net)
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Number of weight layers, `L + 1`.
    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn sigma_w2(&self) -> f64 {
        self.sigma_w2
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn adam_state(&self) -> &AdamState {
        &self.adam
    }

    /// Replaces the mask, zeroing newly pruned weights and their Adam moments.
    pub fn apply_mask(&mut self, mask: Mask) -> Result<()> {
        mask.check_widths(&self.widths)?;
        for (l, m) in mask.layers().iter().enumerate() {
            for t in [&mut self.weights[l], &mut self.adam.m[l], &mut self.adam.v[l]] {
                zero_pruned(t, m);
            }
        }
        self.mask = mask;
        Ok(())
    }

    /// Replaces all weights; entries outside the mask are zeroed.
    pub fn set_weights(&mut self, weights: Vec<Array2<f64>>) -> Result<()> {
        check_weight_shapes(&self.widths, &weights)?;
        self.weights = weights.into_iter().map(standard_layout).collect();
        let mask = self.mask.clone();
        self.apply_mask(mask)
    }

    pub fn forward(&self, inputs: &Array2<f64>) -> Result<ForwardCache> {
        if inputs.ncols() != self.widths[0] {
            return Err(Error::Shape(format!("inputs have {} features, net expects {}", inputs.ncols(), self.widths[0])));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite input".into()));
        }
        let n = self.weights.len();
        let mut activations = Vec::with_capacity(n);
        let mut preactivations = Vec::with_capacity(n);
        activations.push(inputs.to_owned());
        for (l, w) in self.weights.iter().enumerate() {
            let root = (self.widths[l] as f64).sqrt();
            let mut z = activations[l].dot(&w.t());
            z.mapv_inplace(|v| v / root);
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericOverflow { layer: l + 1 });
            }
            if l + 1 < n {
                let act = self.activation;
                activations.push(z.mapv(|v| act.apply(v)));
            }
            preactivations.push(z);
        }
        Ok(ForwardCache { activations, preactivations })
    }

    /// Gradients of the loss w.r.t. each pre-activation `z^(1) … z^(L+1)` given
    /// `∂loss/∂output`.
    pub fn backprop_deltas(&self, cache: &ForwardCache, output_grad: &Array2<f64>) -> Result<Vec<Array2<f64>>> {
        self.check_cache(cache, output_grad)?;
        let n = self.weights.len();
        let mut deltas = vec![Array2::zeros((0, 0)); n];
        deltas[n - 1] = output_grad.to_owned();
        for l in (1..n).rev() {
            let root = (self.widths[l] as f64).sqrt();
            let mut d = deltas[l].dot(&self.weights[l]);
            let act = self.activation;
            Zip::from(&mut d)
                .and(&cache.preactivations[l - 1])
                .for_each(|g, &z| *g = *g / root * act.derivative(z));
            deltas[l - 1] = d;
        }
        Ok(deltas)
    }

    /// Weight gradients from a forward cache and `∂loss/∂output` (`B × n_out`).
    /// Entries outside the mask are exactly zero.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &Array2<f64>) -> Result<Vec<Array2<f64>>> {
        let deltas = self.backprop_deltas(cache, output_grad)?;
        Ok(deltas
            .iter()
            .enumerate()
            .map(|(l, d)| {
                let root = (self.widths[l] as f64).sqrt();
                let mut g = d.t().dot(&cache.activations[l]);
                g.mapv_inplace(|v| v / root);
                zero_pruned(&mut g, self.mask.layer(l));
                g
            })
            .collect())
    }

    fn check_cache(&self, cache: &ForwardCache, output_grad: &Array2<f64>) -> Result<()> {
        let n = self.weights.len();
        let consistent = cache.activations.len() == n
            && cache.preactivations.len() == n
            && cache.activations.iter().zip(&self.widths).all(|(a, &w)| a.ncols() == w)
            && cache.preactivations.iter().zip(&self.widths[1..]).all(|(z, &w)| z.ncols() == w);
        if !consistent {
            return Err(Error::Usage("forward cache does not belong to this network".into()));
        }
        if output_grad.dim() != cache.output().dim() {
            return Err(Error::Usage(format!(
                "output gradient is {:?}, forward output is {:?}",
                output_grad.dim(),
                cache.output().dim()
            )));
        }
        Ok(())
    }

    /// One Adam update of the kept weights. Pruned weights and their moments stay zero.
    pub fn adam_step(&mut self, grads: &[Array2<f64>], cfg: &AdamConfig) -> Result<()> {
        check_weight_shapes(&self.widths, grads)?;
        self.adam.step += 1;
        let t = self.adam.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for (l, g) in grads.iter().enumerate() {
            let bits = self.mask.layer(l).bits();
            let w = self.weights[l].as_slice_mut().expect("weights are contiguous");
            let m = self.adam.m[l].as_slice_mut().expect("moments are contiguous");
            let v = self.adam.v[l].as_slice_mut().expect("moments are contiguous");
            for (idx, &gi) in g.iter().enumerate() {
                if !bits[idx] {
                    continue;
                }
                m[idx] = cfg.beta1 * m[idx] + (1.0 - cfg.beta1) * gi;
                v[idx] = cfg.beta2 * v[idx] + (1.0 - cfg.beta2) * gi * gi;
                let mh = m[idx] / bc1;
                let vh = v[idx] / bc2;
                w[idx] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }

    /// Zeroes the Adam moments and step counter.
    pub fn reset_optimizer(&mut self) {
        self.adam = AdamState::zeros(&self.widths);
    }
}

fn standard_layout(w: Array2<f64>) -> Array2<f64> {
    if w.is_standard_layout() {
        w
    } else {
        w.as_standard_layout().into_owned()
    }
}

/// Sets entries outside the mask to `+0.0`.
fn zero_pruned(t: &mut Array2<f64>, mask: &LayerMask) {
    for (x, &keep) in t.iter_mut().zip(mask.bits()) {
        if !keep {
            *x = 0.0;
        }
    }
}

fn validate_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 || widths.contains(&0) {
        return Err(Error::Shape(format!("widths {widths:?} need at least two positive entries")));
    }
    Ok(())
}

fn check_weight_shapes(widths: &[usize], weights: &[Array2<f64>]) -> Result<()> {
    if weights.len() + 1 != widths.len() {
        return Err(Error::Shape(format!("{} weight matrices for widths {widths:?}", weights.len())));
    }
    for (l, (w, pair)) in weights.iter().zip(widths.windows(2)).enumerate() {
        if w.dim() != (pair[1], pair[0]) {
            return Err(Error::Shape(format!("layer {l} is {:?}, expected {:?}", w.dim(), (pair[1], pair[0]))));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::loss::Loss;
    use crate::net::mask::LayerMask;
    use crate::numerics::Rng;
    use ndarray::array;
    use proptest::prelude::*;

    fn random_inputs(b: usize, d: usize, rng: &mut Rng) -> Array2<f64> {
        Array2::from_shape_simple_fn((b, d), || rng.standard_normal())
    }

    fn random_mask(widths: &[usize], keep: f64, rng: &mut Rng) -> Mask {
        Mask::new(
            widths
                .windows(2)
                .map(|w| {
                    let bits = (0..w[0] * w[1]).map(|_| rng.uniform() < keep).collect();
                    LayerMask::from_bits(w[1], w[0], bits).unwrap()
                })
                .collect(),
        )
    }

    #[test]
    fn init_variance_and_masking() {
        let widths = [2, 3, 1];
        let mut rng = Rng::new(0);
        let (mut sum, mut sq, mut count) = (0.0, 0.0, 0usize);
        for _ in 0..10_000 {
            let net = MaskedMlp::init(&widths, Mask::dense(&widths), 1.0, &mut rng).unwrap();
            let nonzero = net.weights().iter().flat_map(|w| w.iter()).filter(|&&x| x != 0.0).count();
            assert_eq!(nonzero, 9);
            for &x in net.weights().iter().flat_map(|w| w.iter()) {
                sum += x;
                sq += x * x;
                count += 1;
            }
        }
        let mean = sum / count as f64;
        let var = sq / count as f64 - mean * mean;
        assert!((var - 1.0).abs() < 0.05, "sample variance {var}");

        let mask = Mask::new(vec![LayerMask::dense(3, 2), LayerMask::empty(1, 3)]);
        let net = MaskedMlp::init(&widths, mask, 1.0, &mut rng).unwrap();
        assert!(net.weights()[1].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn init_is_deterministic_and_validates() {
        let widths = [4, 5, 2];
        let a = MaskedMlp::init(&widths, Mask::dense(&widths), 1.0, &mut Rng::new(3)).unwrap();
        let b = MaskedMlp::init(&widths, Mask::dense(&widths), 1.0, &mut Rng::new(3)).unwrap();
        assert_eq!(a, b);
        assert!(matches!(MaskedMlp::init(&[4, 6, 2], Mask::dense(&widths), 1.0, &mut Rng::new(3)), Err(Error::Shape(_))));
        assert!(matches!(MaskedMlp::init(&widths, Mask::dense(&widths), 0.0, &mut Rng::new(3)), Err(Error::Domain(_))));
    }

    #[test]
    fn linear_single_layer_is_scaled_matmul() {
        let w = array![[1.0, -2.0, 0.5], [0.25, 3.0, -1.0]];
        let net = MaskedMlp::from_parts(&[3, 2], vec![w.clone()], Mask::dense(&[3, 2]), 1.0)
            .unwrap()
            .with_activation(Activation::Identity);
        let x = array![[1.0, 2.0, 3.0], [-1.0, 0.0, 4.0]];
        let out = net.forward(&x).unwrap();
        let expected = x.dot(&w.t()) / 3f64.sqrt();
        assert_eq!(out.output(), &expected);
    }

    #[test]
    fn zero_input_and_homogeneity() {
        let widths = [5, 7, 7, 3];
        let mut rng = Rng::new(1);
        let net = MaskedMlp::init(&widths, Mask::dense(&widths), 1.0, &mut rng).unwrap();
        assert!(net.forward(&Array2::zeros((2, 5))).unwrap().output().iter().all(|&v| v == 0.0));
        let x = random_inputs(4, 5, &mut rng);
        let base = net.forward(&x).unwrap().output().clone();
        for alpha in [0.1, 2.0, 37.5] {
            let scaled = net.forward(&(&x * alpha)).unwrap().output().clone();
            for (s, b) in scaled.iter().zip(base.iter()) {
                assert!((s - alpha * b).abs() <= 1e-12 * (1.0 + (alpha * b).abs()));
            }
        }
    }

    // Straight-line re-implementation of the two layer equations, one sample at a time.
    fn reference_forward(net: &MaskedMlp, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        let n = net.n_layers();
        for (l, w) in net.weights().iter().enumerate() {
            let mut z = vec![0.0; w.nrows()];
            for (i, zi) in z.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (j, hj) in h.iter().enumerate() {
                    acc += w[[i, j]] * hj;
                }
                *zi = acc / (h.len() as f64).sqrt();
            }
            h = if l + 1 < n { z.iter().map(|v| v.max(0.0)).collect() } else { z };
        }
        h
    }

    #[test]
    fn forward_matches_reference() {
        let widths = [6, 9, 4, 2];
        let mut rng = Rng::new(5);
        let mask = random_mask(&widths, 0.6, &mut rng);
        let net = MaskedMlp::init(&widths, mask, 1.0, &mut rng).unwrap();
        let x = random_inputs(8, 6, &mut rng);
        let out = net.forward(&x).unwrap();
        for (row, xi) in x.rows().into_iter().enumerate() {
            let r = reference_forward(&net, xi.as_slice().unwrap());
            for (k, v) in r.iter().enumerate() {
                assert!((out.output()[[row, k]] - v).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn overflow_reports_layer() {
        let w1 = array![[1e200, 1e200]];
        let w2 = array![[1e200]];
        let net = MaskedMlp::from_parts(&[2, 1, 1], vec![w1, w2], Mask::dense(&[2, 1, 1]), 1.0).unwrap();
        let err = net.forward(&array![[1e200, 1e200]]).unwrap_err();
        assert!(matches!(err, Error::NumericOverflow { layer: 1 }), "{err:?}");
    }

    fn loss_of(net: &MaskedMlp, x: &Array2<f64>, labels: &[usize], loss: Loss) -> f64 {
        loss.eval(net.forward(x).unwrap().output(), labels).unwrap().0
    }

    fn pattern(net: &MaskedMlp, x: &Array2<f64>) -> Vec<bool> {
        let cache = net.forward(x).unwrap();
        let hidden = &cache.preactivations[..cache.preactivations.len() - 1];
        hidden.iter().flat_map(|z| z.iter().map(|&v| v > 0.0)).collect()
    }

    /// Largest relative error between backprop and Richardson-extrapolated
    /// central differences (ε = 1e-3, 5e-4).
    fn gradient_check(net: &MaskedMlp, x: &Array2<f64>, labels: &[usize], loss: Loss) -> f64 {
        let cache = net.forward(x).unwrap();
        let (_, g_out) = loss.eval(cache.output(), labels).unwrap();
        let grads = net.backward(&cache, &g_out).unwrap();
        let eps = 1e-3;
        let mut worst: f64 = 0.0;
        for l in 0..net.n_layers() {
            for idx in 0..grads[l].len() {
                let (i, j) = (idx / grads[l].ncols(), idx % grads[l].ncols());
                if !net.mask().layer(l).get(i, j) {
                    assert_eq!(grads[l][[i, j]], 0.0);
                    continue;
                }
                let shifted = |h: f64| {
                    let mut w = net.weights().to_vec();
                    w[l][[i, j]] += h;
                    let mut n = net.clone();
                    n.set_weights(w).unwrap();
                    n
                };
                let nets = [shifted(eps), shifted(-eps), shifted(eps / 2.0), shifted(-eps / 2.0)];
                // A perturbation that flips a ReLU gate makes the difference quotient meaningless.
                let base = pattern(&nets[0], x);
                if nets[1..].iter().any(|n| pattern(n, x) != base) {
                    continue;
                }
                let f: Vec<f64> = nets.iter().map(|n| loss_of(n, x, labels, loss)).collect();
                let d1 = (f[0] - f[1]) / (2.0 * eps);
                let d2 = (f[2] - f[3]) / eps;
                // Richardson extrapolation cancels the O(eps²) term.
                let fd = (4.0 * d2 - d1) / 3.0;
                let a = grads[l][[i, j]];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        let widths = [4, 8, 8, 1];
        let mut rng = Rng::new(7);
        let net = MaskedMlp::init(&widths, random_mask(&widths, 0.7, &mut rng), 1.0, &mut rng).unwrap();
        let x = random_inputs(5, 4, &mut rng);
        let err = gradient_check(&net, &x, &[0, 1, 0, 1, 1], Loss::SquaredError);
        assert!(err <= 1e-5, "relative error {err:e}");
    }

    #[test]
    fn zero_output_grad_and_usage_errors() {
        let widths = [3, 4, 2];
        let mut rng = Rng::new(2);
        let net = MaskedMlp::init(&widths, Mask::dense(&widths), 1.0, &mut rng).unwrap();
        let x = random_inputs(3, 3, &mut rng);
        let cache = net.forward(&x).unwrap();
        let grads = net.backward(&cache, &Array2::zeros((3, 2))).unwrap();
        assert!(grads.iter().all(|g| g.iter().all(|&v| v == 0.0)));
        assert!(matches!(net.backward(&cache, &Array2::zeros((2, 2))), Err(Error::Usage(_))));
        let other = MaskedMlp::init(&[3, 5, 2], Mask::dense(&[3, 5, 2]), 1.0, &mut rng).unwrap();
        assert!(matches!(other.backward(&cache, &Array2::zeros((3, 2))), Err(Error::Usage(_))));
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut net = MaskedMlp::from_parts(&[1, 1], vec![array![[0.5]]], Mask::dense(&[1, 1]), 1.0).unwrap();
        net.adam_step(&[array![[1.0]]], &AdamConfig::default()).unwrap();
        assert!((net.weights()[0][[0, 0]] - (0.5 - 1e-3)).abs() < 1e-10);
        assert_eq!(net.adam_state().step, 1);
        let before = net.weights()[0][[0, 0]];
        net.reset_optimizer();
        net.adam_step(&[array![[0.0]]], &AdamConfig::default()).unwrap();
        assert_eq!(net.weights()[0][[0, 0]], before);
    }

    #[test]
    fn masked_weights_survive_adam() {
        let widths = [6, 10, 10, 3];
        let mut rng = Rng::new(9);
        let mut net = MaskedMlp::init(&widths, random_mask(&widths, 0.5, &mut rng), 1.0, &mut rng).unwrap();
        let cfg = AdamConfig { lr: 0.05, ..AdamConfig::default() };
        for step in 0..1000 {
            let x = random_inputs(4, 6, &mut rng);
            let labels: Vec<usize> = (0..4).map(|i| (i + step) % 3).collect();
            let cache = net.forward(&x).unwrap();
            let (_, g) = Loss::CrossEntropy.eval(cache.output(), &labels).unwrap();
            let mut grads = net.backward(&cache, &g).unwrap();
            // Inject noise everywhere, pruned positions included.
            for gl in grads.iter_mut() {
                gl.mapv_inplace(|v| v + rng.standard_normal());
            }
            net.adam_step(&grads, &cfg).unwrap();
        }
        for (w, m) in net.weights().iter().zip(net.mask().layers()) {
            for (idx, &v) in w.iter().enumerate() {
                if !m.bits()[idx] {
                    assert_eq!(v.to_bits(), 0f64.to_bits());
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn gradient_check_fuzzed(
            widths in prop::collection::vec(2usize..=16, 3..=6),
            keep in 0.3f64..1.0,
            seed in any::<u64>(),
        ) {
            let mut rng = Rng::new(seed);
            let net = MaskedMlp::init(&widths, random_mask(&widths, keep, &mut rng), 1.0, &mut rng).unwrap();
            let x = random_inputs(3, widths[0], &mut rng);
            let c = *widths.last().unwrap();
            let labels: Vec<usize> = (0..3).map(|i| i % c).collect();
            let err = gradient_check(&net, &x, &labels, Loss::CrossEntropy);
            prop_assert!(err <= 1e-5, "relative error {:e}", err);
        }
    }
}
