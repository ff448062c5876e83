//! Trainable models whose complexity gets measured: kernel ridge regression,
//! random Fourier features, a one-hidden-layer MLP, and gradient boosting.

pub mod gbdt;
pub mod krr;
pub mod mlp;
pub mod rff;

pub use gbdt::{gbdt_train, GbdtConfig, GbdtModel, StageKernel};
pub use krr::{krr_fit, krr_kernel, krr_predict, krr_smoothers, KrrModel};
pub use mlp::{mlp_ntk_features, mlp_train, MlpConfig, MlpInit, MlpModel};
pub use rff::{rff_apply, rff_draw, rff_features, rff_fit, rff_fit_multi, rff_train, RffModel};
