//! Competing complexity measures: ENP, GENP-V, GENP-RX, and the parameter
//! norm.
//!
//! For a linear smoother with in-sample predictions f = S y and out-of-sample
//! predictions f* = S* y:
//!
//! * ENP is Tr(S), the effective number of parameters;
//! * GENP-V is (n/n*) Tr(S*' S*), tied to the expected out-of-sample error
//!   under isotropic responses;
//! * GENP-RX is an optimism-scaled degrees-of-freedom count. The scaling used
//!   here, n * (mse_out - mse_in) / (2 sigma_hat^2), comes from the classical
//!   covariance-penalty relation E[optimism] = 2 sigma^2 df / n; the noise
//!   level sigma_hat^2 is supplied by the caller. This stand-in scaling makes
//!   GENP-RX comparisons qualitative rather than exact.
//!
//! For kNN, trees, and forests the weight matrices depend on the data, so S
//! is not a fixed linear smoother and these measures should be read as
//! approximations.

use crate::error::{Error, Result};
use crate::kernels::KernelMatrix;
use crate::numerics::Matrix;

/// Training and out-of-sample smoother matrices of a linear smoother.
#[derive(Debug, Clone)]
pub struct SmootherMatrices {
    /// n x n training smoother, f = S y.
    pub s_in: Matrix,
    /// n* x n out-of-sample smoother, f* = S* y. Optional because some
    /// callers only need in-sample quantities.
    pub s_out: Option<Matrix>,
}

impl SmootherMatrices {
    pub fn n(&self) -> usize {
        self.s_in.rows()
    }

    pub fn n_star(&self) -> Result<usize> {
        self.s_out
            .as_ref()
            .map(|s| s.rows())
            .ok_or_else(|| Error::MissingMatrix("out-of-sample smoother not built".into()))
    }
}

/// In/out-of-sample squared errors plus a noise-variance estimate.
#[derive(Debug, Clone, Copy)]
pub struct ErrorSummary {
    pub mse_in: f64,
    pub mse_out: f64,
    pub sigma2_hat: f64,
}

/// Effective number of parameters: Tr(S).
pub fn enp(s: &SmootherMatrices) -> Result<f64> {
    if !s.s_in.is_square() {
        return Err(Error::Shape(format!(
            "ENP needs a square training smoother, got {}x{}",
            s.s_in.rows(),
            s.s_in.cols()
        )));
    }
    Ok(s.s_in.trace())
}

/// Tr(S)/n.
pub fn enp_normalized(s: &SmootherMatrices) -> Result<f64> {
    Ok(enp(s)? / s.n() as f64)
}

/// GENP-V := (n/n*) Tr(S*' S*).
pub fn genp_v(s: &SmootherMatrices) -> Result<f64> {
    let s_out = s
        .s_out
        .as_ref()
        .ok_or_else(|| Error::MissingMatrix("GENP-V needs the out-of-sample smoother".into()))?;
    if s_out.cols() != s.n() {
        return Err(Error::Shape(format!(
            "out-of-sample smoother has {} columns, expected {}",
            s_out.cols(),
            s.n()
        )));
    }
    let mut frob2 = 0.0;
    for i in 0..s_out.rows() {
        for &v in s_out.row(i) {
            frob2 += v * v;
        }
    }
    Ok(s.n() as f64 / s_out.rows() as f64 * frob2)
}

/// GENP-V / n.
pub fn genp_v_normalized(s: &SmootherMatrices) -> Result<f64> {
    Ok(genp_v(s)? / s.n() as f64)
}

/// GENP-RX := n * (mse_out - mse_in) / (2 sigma_hat^2). May be negative;
/// reported as-is.
pub fn genp_rx(e: &ErrorSummary, n: usize) -> Result<f64> {
    if e.sigma2_hat <= 0.0 {
        return Err(Error::Domain(format!(
            "GENP-RX needs sigma2_hat > 0, got {}",
            e.sigma2_hat
        )));
    }
    Ok(n as f64 * (e.mse_out - e.mse_in) / (2.0 * e.sigma2_hat))
}

/// Squared parameter norm of a kernel-expansion model: alpha' K alpha.
pub fn param_norm(alpha: &[f64], k: &KernelMatrix) -> Result<f64> {
    if k.n_rows() != alpha.len() || k.n_cols() != alpha.len() {
        return Err(Error::Shape(format!(
            "param_norm: kernel is {}x{}, alpha has length {}",
            k.n_rows(),
            k.n_cols(),
            alpha.len()
        )));
    }
    let ka = k.values.matvec(alpha)?;
    Ok(alpha.iter().zip(&ka).map(|(a, b)| a * b).sum())
}
