use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inclusive, 1-based index window `[k_min, k_max]` for the power-law fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitRange {
    pub k_min: usize,
    pub k_max: usize,
}

impl FitRange {
    pub fn new(k_min: usize, k_max: usize) -> Self {
        Self { k_min, k_max }
    }

    /// `[2, n/2]`: skips the leading eigenvalue and the noisy tail.
    pub fn default_for(n: usize) -> Self {
        Self { k_min: 2, k_max: (n / 2).max(2) }
    }
}

/// Decay exponent `α` of `λ_k ∝ k^{-α}`: the negated least-squares slope of
/// `ln λ_k` against `ln k` over `k ∈ [k_min, k_max]` (1-based).
pub fn powerlaw_fit(values: &[f64], k_min: usize, k_max: usize) -> Result<f64> {
    if k_min < 1 || k_max > values.len() || k_min > k_max {
        return Err(Error::InsufficientData(format!(
            "fit range [{k_min}, {k_max}] is not inside [1, {}]",
            values.len()
        )));
    }
    let count = k_max - k_min + 1;
    if count < 3 {
        return Err(Error::InsufficientData(format!("need at least 3 points, range holds {count}")));
    }
    let mut xs = Vec::with_capacity(count);
    let mut ys = Vec::with_capacity(count);
    for k in k_min..=k_max {
        let v = values[k - 1];
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!("value at k={k} is {v}; power-law fit needs positive values")));
        }
        xs.push((k as f64).ln());
        ys.push(v.ln());
    }
    let n = count as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    Ok(-sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn exact_power_law_and_flat_spectrum() {
        let v: Vec<f64> = (1..=50).map(|k| (k as f64).powi(-2)).collect();
        assert!((powerlaw_fit(&v, 1, 50).unwrap() - 2.0).abs() < 1e-10);
        let flat = vec![5.0; 50];
        assert!(powerlaw_fit(&flat, 1, 50).unwrap().abs() < 1e-10);
    }

    // Normal-equation OLS written independently of the centred form above.
    fn ols_slope(points: &[(f64, f64)]) -> f64 {
        let n = points.len() as f64;
        let sx: f64 = points.iter().map(|p| p.0).sum();
        let sy: f64 = points.iter().map(|p| p.1).sum();
        let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    }

    #[test]
    fn noisy_power_law_matches_ols_oracle() {
        let mut rng = Rng::new(4);
        let v: Vec<f64> = (1..=200)
            .map(|k| (k as f64).powf(-1.5) * (1.0 + 0.01 * rng.standard_normal()))
            .collect();
        let alpha = powerlaw_fit(&v, 1, 200).unwrap();
        let points: Vec<(f64, f64)> = v.iter().enumerate().map(|(i, y)| (((i + 1) as f64).ln(), y.ln())).collect();
        let oracle = -ols_slope(&points);
        assert!((alpha - oracle).abs() < 1e-9);
        assert!((alpha - 1.5).abs() < 0.05);
    }

    #[test]
    fn error_paths() {
        let v = vec![1.0, 0.5, 0.25, 0.0];
        assert!(matches!(powerlaw_fit(&v, 1, 2), Err(Error::InsufficientData(_))));
        assert!(matches!(powerlaw_fit(&v, 1, 4), Err(Error::Domain(_))));
        assert!(matches!(powerlaw_fit(&v, 0, 3), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn scale_invariant() {
        let v: Vec<f64> = (1..=30).map(|k| 1.0 / (k as f64 + 0.3 * (k as f64).sin())).collect();
        let a = powerlaw_fit(&v, 2, 15).unwrap();
        for c in [1e-6, 0.3, 7.0, 1e8] {
            let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
            assert!((powerlaw_fit(&scaled, 2, 15).unwrap() - a).abs() < 1e-10);
        }
    }
}
