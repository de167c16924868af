use rayon::prelude::*;
use serde::Serialize;

use super::sas::estimate_sas;
use super::step::{average_histograms, euclid_distance, StepGraphon};
use crate::error::{Error, Result};
use crate::net::LayerMask;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub width: usize,
    pub distance: f64,
}

/// Distance of the trial-averaged histogram at each width to the one at the
/// reference (largest) width, for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCurve {
    pub layer: usize,
    pub points: Vec<CurvePoint>,
    /// Trial-averaged histogram per width, aligned with `points`.
    pub histograms: Vec<StepGraphon>,
}

/// Runs `trials` mask draws per width through `sample(width, trial)`, which
/// returns the layers to analyse, and reports per-layer distance curves.
pub fn convergence_curve<F>(widths: &[usize], trials: usize, k: usize, sample: F) -> Result<Vec<LayerCurve>>
where
    F: Fn(usize, usize) -> Result<Vec<LayerMask>> + Sync,
{
    if widths.is_empty() {
        return Err(Error::InvalidInput("need at least one width".into()));
    }
    let averaged = widths
        .iter()
        .map(|&w| average_layer_histograms(trials, k, |t| sample(w, t)))
        .collect::<Result<Vec<_>>>()?;
    distance_curves(widths, &averaged)
}

/// Trial-averaged SAS histogram per returned layer. Trials run in parallel;
/// averaging follows trial order.
pub fn average_layer_histograms<F>(trials: usize, k: usize, sample: F) -> Result<Vec<StepGraphon>>
where
    F: Fn(usize) -> Result<Vec<LayerMask>> + Sync,
{
    if trials == 0 {
        return Err(Error::InvalidInput("need at least one trial".into()));
    }
    let per_trial: Vec<Vec<StepGraphon>> = (0..trials)
        .into_par_iter()
        .map(|t| sample(t)?.iter().map(|m| estimate_sas(m, k)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let layers = per_trial[0].len();
    if per_trial.iter().any(|h| h.len() != layers) {
        return Err(Error::Shape("trials returned different layer counts".into()));
    }
    (0..layers)
        .map(|l| average_histograms(&per_trial.iter().map(|h| h[l].clone()).collect::<Vec<_>>()))
        .collect()
}

/// Per-layer distance of each width's histograms to those at the largest width.
pub fn distance_curves(widths: &[usize], averaged: &[Vec<StepGraphon>]) -> Result<Vec<LayerCurve>> {
    if widths.is_empty() || widths.len() != averaged.len() {
        return Err(Error::Shape(format!("{} widths for {} histogram sets", widths.len(), averaged.len())));
    }
    let reference = *widths.iter().max().expect("nonempty");
    let ref_idx = widths.iter().position(|&w| w == reference).expect("reference is a width");
    let layers = averaged[ref_idx].len();
    if averaged.iter().any(|a| a.len() != layers) {
        return Err(Error::Shape("widths returned different layer counts".into()));
    }
    (0..layers)
        .map(|l| {
            let points = widths
                .iter()
                .zip(averaged)
                .map(|(&width, avg)| Ok(CurvePoint { width, distance: euclid_distance(&avg[l], &averaged[ref_idx][l])? }))
                .collect::<Result<Vec<_>>>()?;
            Ok(LayerCurve { layer: l, points, histograms: averaged.iter().map(|a| a[l].clone()).collect() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn random_masks_converge_and_reference_is_zero() {
        let curves = convergence_curve(&[64, 128, 512], 4, 8, |w, t| {
            let mut rng = Rng::new(11).child(w as u64).child(t as u64);
            let bits = (0..w * w).map(|_| rng.uniform() < 0.2).collect();
            Ok(vec![LayerMask::from_bits(w, w, bits)?])
        })
        .unwrap();
        assert_eq!(curves.len(), 1);
        let d: Vec<f64> = curves[0].points.iter().map(|p| p.distance).collect();
        assert_eq!(d[2], 0.0);
        assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
    }
}
