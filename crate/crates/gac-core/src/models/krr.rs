//! Kernel ridge regression with closed-form smoother matrices.
//!
//! Dual coefficients alpha = (K + lambda I)^{-1} y; training and
//! out-of-sample predictions are linear smoothers
//! S = K (K + lambda I)^{-1} and S* = K* (K + lambda I)^{-1}.

use crate::baselines::SmootherMatrices;
use crate::error::{Error, Result};
use crate::kernels::{kernel_matrix, KernelMatrix, KernelSpec};
use crate::numerics::{solve_spd, Matrix};

#[derive(Debug, Clone)]
pub struct KrrModel {
    pub train_x: Matrix,
    pub alpha: Vec<f64>,
    pub spec: KernelSpec,
    pub lambda: f64,
}

/// Fits alpha = (K + lambda I)^{-1} y.
pub fn krr_fit(x: &Matrix, y: &[f64], spec: &KernelSpec, lambda: f64) -> Result<KrrModel> {
    if lambda < 0.0 {
        return Err(Error::Domain(format!("lambda must be >= 0, got {lambda}")));
    }
    if x.rows() != y.len() {
        return Err(Error::Shape(format!(
            "krr_fit: {} points but {} responses",
            x.rows(),
            y.len()
        )));
    }
    let mut k = kernel_matrix(spec, x, x)?.values;
    k.add_diag(lambda);
    let alpha = solve_spd(&k, &Matrix::column(y))
        .map_err(|e| match e {
            Error::Singular(msg) => Error::Singular(format!(
                "{msg}; K + lambda I is numerically singular, increase lambda"
            )),
            other => other,
        })?
        .into_vec();
    Ok(KrrModel {
        train_x: x.clone(),
        alpha,
        spec: spec.clone(),
        lambda,
    })
}

/// Predictions f(q) = K(q, X) alpha.
pub fn krr_predict(model: &KrrModel, query: &Matrix) -> Result<Vec<f64>> {
    let k_star = kernel_matrix(&model.spec, query, &model.train_x)?;
    k_star.values.matvec(&model.alpha)
}

/// Training kernel matrix of the fitted model.
pub fn krr_kernel(model: &KrrModel) -> Result<KernelMatrix> {
    kernel_matrix(&model.spec, &model.train_x, &model.train_x)
}

/// Builds S and S* for the fitted model. Both act on the training responses:
/// f = S y, f* = S* y.
pub fn krr_smoothers(model: &KrrModel, query: &Matrix) -> Result<SmootherMatrices> {
    let k = krr_kernel(model)?.values;
    let mut k_reg = k.clone();
    k_reg.add_diag(model.lambda);
    // (K + lambda I)^{-1} K; symmetric because the factors commute.
    let s_in = solve_spd(&k_reg, &k)?;
    let k_star = kernel_matrix(&model.spec, query, &model.train_x)?.values;
    // S* = K* (K + lambda I)^{-1} = (solve(K + lambda I, K*^T))^T.
    let s_out = solve_spd(&k_reg, &k_star.transpose())?.transpose();
    Ok(SmootherMatrices {
        s_in,
        s_out: Some(s_out),
    })
}
