//! Dense linear algebra and special functions.

pub mod eigen;
pub mod matrix;
pub mod solve;
pub mod special;

pub use eigen::{sym_eigen, sym_eigvals, Spectrum};
pub use matrix::Matrix;
pub use solve::{cholesky, solve_spd, solve_spd_vec};
pub use special::{bessel_k, bessel_k_ln, gamma_fn, ln_gamma};
