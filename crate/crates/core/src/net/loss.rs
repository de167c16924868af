use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    /// Mean softmax cross-entropy over the batch.
    #[default]
    CrossEntropy,
    /// `(1/B) Σ_b Σ_c (f_bc − y_bc)²` with one-hot targets, or the raw label
    /// value when there is a single output.
    SquaredError,
}

impl std::str::FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cross-entropy" | "ce" => Ok(Self::CrossEntropy),
            "squared-error" | "mse" => Ok(Self::SquaredError),
            other => Err(Error::Configuration(format!("unknown loss '{other}'"))),
        }
    }
}

impl Loss {
    pub fn eval(self, outputs: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
        match self {
            Loss::CrossEntropy => cross_entropy(outputs, labels),
            Loss::SquaredError => squared_error(outputs, labels),
        }
    }
}

fn check_batch(outputs: &Array2<f64>, labels: &[usize]) -> Result<()> {
    if outputs.nrows() != labels.len() {
        return Err(Error::Shape(format!("{} outputs for {} labels", outputs.nrows(), labels.len())));
    }
    if labels.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    Ok(())
}

/// Mean softmax cross-entropy and its gradient `(softmax − onehot)/B`.
pub fn cross_entropy(outputs: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    check_batch(outputs, labels)?;
    let (b, c) = outputs.dim();
    if c < 2 {
        return Err(Error::Domain(format!("cross-entropy needs at least 2 classes, got {c}")));
    }
    let mut grad = Array2::zeros((b, c));
    let mut total = 0.0;
    for (row, (logits, &y)) in outputs.rows().into_iter().zip(labels).enumerate() {
        if y >= c {
            return Err(Error::Domain(format!("label {y} out of range for {c} classes")));
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
        let log_z = max + sum.ln();
        total += log_z - logits[y];
        for (k, &z) in logits.iter().enumerate() {
            grad[[row, k]] = (z - log_z).exp() / b as f64;
        }
        grad[[row, y]] -= 1.0 / b as f64;
    }
    Ok((total / b as f64, grad))
}

pub fn squared_error(outputs: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    check_batch(outputs, labels)?;
    let (b, c) = outputs.dim();
    let mut grad = Array2::zeros((b, c));
    let mut total = 0.0;
    for (row, &y) in labels.iter().enumerate() {
        if c > 1 && y >= c {
            return Err(Error::Domain(format!("label {y} out of range for {c} outputs")));
        }
        for k in 0..c {
            let target = if c == 1 { y as f64 } else if k == y { 1.0 } else { 0.0 };
            let r = outputs[[row, k]] - target;
            total += r * r;
            grad[[row, k]] = 2.0 * r / b as f64;
        }
    }
    Ok((total / b as f64, grad))
}
