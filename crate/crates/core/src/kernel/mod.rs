mod analytic;
mod empirical;
mod matrix;
mod moments;
mod stack;

pub use analytic::{
    constant_ntk, dense_one_layer_ntk, forward_cov, graphon_ntk, graphon_ntk_pair, CovField, CovLayer, NtkOptions,
    NtkVariant, DEFAULT_GRID,
};
pub use empirical::{empirical_ntk, mc_empirical_ntk, sample_stack_mask, MaskSource, McKernel};
pub use matrix::{KernelKind, KernelMatrix, KERNEL_MAGIC, PSD_TOL_REL};
pub use moments::relu_gauss_moments;
pub use stack::GraphonStack;
