//! Data-dependent kernels and kernel-smoother predictions for kNN, decision
//! trees, and random forests.
//!
//! All three predict by kernel-weighted averaging of training responses,
//! f(x*) = sum_i k(x*, x_i) y_i / sum_i k(x*, x_i), with binary or
//! count-valued kernels built from neighborhoods, leaf regions, or forests
//! of leaf regions.

pub mod forest;
pub mod knn;
pub mod tree;

pub use forest::{fit_forest, rf_kernel, rf_kernel_train, Forest, ForestConfig};
pub use knn::{knn_gac, knn_kernel, neighbor_sets, NeighborSet};
pub use tree::{fit_tree, fit_tree_opts, tree_kernel, Partition, Region, TreeNode, TreeOptions};

use crate::error::{Error, Result};
use crate::kernels::KernelMatrix;
use crate::numerics::Matrix;

/// Kernel-smoother prediction from one weight row:
/// sum_i w_i y_i / sum_i w_i.
pub fn smoother_predict(weights: &[f64], y: &[f64]) -> Result<f64> {
    if weights.len() != y.len() {
        return Err(Error::Shape(format!(
            "smoother_predict: {} weights for {} responses",
            weights.len(),
            y.len()
        )));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Domain(
            "undefined prediction: weight row sums to zero".into(),
        ));
    }
    Ok(weights.iter().zip(y).map(|(w, v)| w * v).sum::<f64>() / total)
}

/// Row-normalized smoother matrix S with S_ij = k_ij / sum_j k_ij, so that
/// predictions are f = S y. Errors on any all-zero row.
pub fn smoother_matrix(k: &KernelMatrix) -> Result<Matrix> {
    let mut s = Matrix::zeros(k.n_rows(), k.n_cols());
    for i in 0..k.n_rows() {
        let row = k.values.row(i);
        let total: f64 = row.iter().sum();
        if total <= 0.0 {
            return Err(Error::Domain(format!(
                "undefined prediction: weight row {i} sums to zero"
            )));
        }
        for (j, &v) in row.iter().enumerate() {
            s.set(i, j, v / total);
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_weights_average() {
        assert_eq!(smoother_predict(&[1.0, 1.0], &[1.0, 3.0]).unwrap(), 2.0);
    }

    #[test]
    fn one_hot_selects_response() {
        assert_eq!(
            smoother_predict(&[0.0, 1.0, 0.0], &[5.0, 7.0, 9.0]).unwrap(),
            7.0
        );
    }

    #[test]
    fn knn_full_neighborhood_predicts_mean() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let y = [3.0, 6.0, 9.0];
        let k = knn_kernel(&x, &x, 3).unwrap();
        for q in 0..3 {
            let pred = smoother_predict(k.values.row(q), &y).unwrap();
            assert!((pred - 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_row_rejected() {
        assert!(smoother_predict(&[0.0, 0.0], &[1.0, 2.0]).is_err());
    }
}
