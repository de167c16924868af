mod convergence;
mod sas;
mod step;

pub use convergence::{average_layer_histograms, convergence_curve, distance_curves, CurvePoint, LayerCurve};
pub use sas::{estimate_sas, rescale_grid, sample_mask, Calibration, DegreeOrder, Partition};
pub use step::{average_histograms, euclid_distance, Provenance, StepGraphon};

/// Grid resolution used when none is configured.
pub const DEFAULT_K: usize = 64;
