mod scores;
mod select;
mod synflow;

pub use scores::{
    fd_hessian_grad_product, loss_gradient, score_grasp, score_magnitude, score_random, score_snip, Method, ScoreSet,
};
pub use select::{global_mask, keep_count, robust_ceil};
pub use synflow::{synflow_mask, synflow_mask_observed, synflow_scores};

use serde::{Deserialize, Serialize};

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::net::{Loss, Mask, MaskedMlp, PruneScope};
use crate::numerics::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PruneConfig {
    pub scope: PruneScope,
    /// Threshold each prunable layer separately instead of jointly.
    pub per_layer: bool,
    pub loss: Loss,
    pub grasp_fd_scale: f64,
    pub synflow_rounds: usize,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self { scope: PruneScope::Hidden, per_layer: false, loss: Loss::CrossEntropy, grasp_fd_scale: 1e-3, synflow_rounds: 100 }
    }
}

/// Scores `net` with `method` and returns the mask at `sparsity`. SNIP and
/// GraSP need `batch`; random scoring draws from `rng`.
pub fn prune_at_init(
    net: &MaskedMlp,
    method: Method,
    sparsity: f64,
    batch: Option<&Batch>,
    cfg: &PruneConfig,
    rng: &mut Rng,
) -> Result<Mask> {
    let prunable = cfg.scope.prunable(net.n_layers());
    let need_batch = || batch.ok_or_else(|| Error::Configuration(format!("{method} scoring needs a batch")));
    let scores = match method {
        Method::Synflow => return Ok(synflow_mask(net, sparsity, cfg.synflow_rounds, &prunable, cfg.per_layer)?.0),
        Method::Random => score_random(net, rng),
        Method::Magnitude => score_magnitude(net),
        Method::Snip => score_snip(net, need_batch()?, cfg.loss)?,
        Method::Grasp => score_grasp(net, need_batch()?, cfg.loss, cfg.grasp_fd_scale)?,
    };
    global_mask(&scores.scores, sparsity, &prunable, cfg.per_layer)
}
