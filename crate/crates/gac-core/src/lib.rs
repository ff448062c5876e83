//! Gradient alignment complexity and friends.
//!
//! The central quantity is the gradient alignment complexity (GAC) of a
//! model: one minus the expected squared cosine similarity between the
//! model's parameter gradients at pairs of inputs. Equivalently, one minus
//! the mean squared off-diagonal entry of the normalized tangent kernel,
//! which also equals the normalized linear entropy of that kernel matrix.
//! The crate computes it from gradients, Jacobians, or kernel matrices, for
//! closed-form kernels (linear, polynomial, Gaussian, Laplace, Matern), for
//! data-dependent smoother kernels (kNN, decision trees, random forests),
//! and for trainable models (kernel ridge regression, random Fourier
//! features, a small MLP, gradient boosting), alongside competing measures
//! (ENP, GENP-V, GENP-RX, von Neumann entropy, parameter norm) and a
//! desk-scale double-descent experiment harness.

pub mod baselines;
pub mod complexity;
pub mod error;
pub mod gp;
pub mod harness;
pub mod kernels;
pub mod models;
pub mod numerics;
pub mod smoothers;

pub use complexity::{
    ensemble_gac, gac_from_gradients, gac_from_jacobians, gac_from_kernel, gac_from_normalized,
    matrix_entropy, total_gac, ComplexityReport, EnsembleStats, EntropyKind, GradientSnapshot,
    Measure, TrainingTrace,
};
pub use error::{Error, Result};
pub use kernels::{kernel_eval, kernel_matrix, normalize, ntk_gram, KernelMatrix, KernelSpec, NormalizedKernelMatrix};
pub use numerics::Matrix;
