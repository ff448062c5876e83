//! Closed-form kernels, kernel matrices, and normalization.
//!
//! Five kernel families: linear, polynomial, Gaussian, Laplace, and Matern.
//! The Matern kernel is the covariance-function form
//!
//! ```text
//! k_M(x, x'; l, nu) = 2^{1-nu}/Gamma(nu) * z^nu * K_nu(z),   z = sqrt(2 nu) ||x - x'|| / l
//! ```
//!
//! with the z -> 0 limit handled analytically (k = 1 at r = 0). nu = 1/2
//! reproduces the Laplace kernel exactly and nu -> infinity approaches the
//! Gaussian kernel.

use crate::complexity::GradientSnapshot;
use crate::error::{Error, Result};
use crate::numerics::special::{bessel_k_ln, ln_gamma};
use crate::numerics::Matrix;
use serde::{Deserialize, Serialize};

/// Kernel family plus its hyperparameters. Parses from JSON as e.g.
/// `{"kind":"matern","l":0.5,"nu":1.5}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    /// c + x . x'
    Linear { c: f64 },
    /// (c + x . x')^p
    Polynomial { p: u32, c: f64 },
    /// exp(-||x - x'||^2 / (2 l^2))
    Gaussian { l: f64 },
    /// exp(-||x - x'|| / l)
    Laplace { l: f64 },
    /// Matern covariance with length scale l and smoothness nu.
    Matern { l: f64, nu: f64 },
}

impl KernelSpec {
    /// Checks hyperparameter constraints. The polynomial (and linear) offset
    /// must be strictly positive: with c = 0 the degree-monotonicity of the
    /// kernel complexity breaks down and the diagonal may vanish.
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear { c } => {
                if c <= 0.0 {
                    return Err(Error::Domain(format!("linear kernel requires c > 0, got {c}")));
                }
            }
            KernelSpec::Polynomial { c, .. } => {
                if c <= 0.0 {
                    return Err(Error::Domain(format!(
                        "polynomial kernel requires c > 0, got {c}"
                    )));
                }
            }
            KernelSpec::Gaussian { l } | KernelSpec::Laplace { l } => {
                if l <= 0.0 {
                    return Err(Error::Domain(format!("length scale must be > 0, got {l}")));
                }
            }
            KernelSpec::Matern { l, nu } => {
                if l <= 0.0 {
                    return Err(Error::Domain(format!("length scale must be > 0, got {l}")));
                }
                if nu <= 0.0 {
                    return Err(Error::Domain(format!("matern requires nu > 0, got {nu}")));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: KernelSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Pairwise kernel values; `symmetric` is set when both point sets coincide.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub values: Matrix,
    pub symmetric: bool,
}

impl KernelMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.rows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.cols()
    }

    /// Wraps an existing symmetric matrix as a kernel matrix.
    pub fn from_symmetric(values: Matrix) -> Result<Self> {
        values.require_symmetric()?;
        Ok(KernelMatrix {
            values,
            symmetric: true,
        })
    }
}

/// Kernel matrix rescaled to unit diagonal: kbar_ij = k_ij / sqrt(k_ii k_jj).
#[derive(Debug, Clone)]
pub struct NormalizedKernelMatrix {
    pub values: Matrix,
}

impl NormalizedKernelMatrix {
    pub fn n(&self) -> usize {
        self.values.rows()
    }
}

fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for (a, b) in x.iter().zip(y) {
        let d = a - b;
        s += d * d;
    }
    // Clamp before the square root elsewhere; roundoff can push this negative
    // only through the subtraction trick, which we do not use, but keep the
    // guard anyway.
    s.max(0.0)
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Scalar kernel evaluation.
pub fn kernel_eval(spec: &KernelSpec, x: &[f64], x2: &[f64]) -> Result<f64> {
    if x.len() != x2.len() {
        return Err(Error::Shape(format!(
            "kernel_eval: dimensions {} vs {}",
            x.len(),
            x2.len()
        )));
    }
    spec.validate()?;
    Ok(match *spec {
        KernelSpec::Linear { c } => c + dot(x, x2),
        KernelSpec::Polynomial { p, c } => (c + dot(x, x2)).powi(p as i32),
        KernelSpec::Gaussian { l } => (-squared_distance(x, x2) / (2.0 * l * l)).exp(),
        KernelSpec::Laplace { l } => (-squared_distance(x, x2).sqrt() / l).exp(),
        KernelSpec::Matern { l, nu } => matern_eval(squared_distance(x, x2).sqrt(), l, nu)?,
    })
}

/// Matern kernel as a function of the distance r.
pub fn matern_eval(r: f64, l: f64, nu: f64) -> Result<f64> {
    if r == 0.0 {
        // Analytic z -> 0 limit; avoids 0 * inf in the Bessel form.
        return Ok(1.0);
    }
    let z = (2.0 * nu).sqrt() * r / l;
    // Half-integer closed forms cover every nu the experiments use.
    if nu == 0.5 {
        return Ok((-z).exp());
    }
    if nu == 1.5 {
        return Ok((1.0 + z) * (-z).exp());
    }
    if nu == 2.5 {
        return Ok((1.0 + z + z * z / 3.0) * (-z).exp());
    }
    // General nu in log space: ln k = (1-nu) ln 2 - ln Gamma(nu) + nu ln z + ln K_nu(z).
    let ln_k = (1.0 - nu) * std::f64::consts::LN_2 - ln_gamma(nu)? + nu * z.ln()
        + bessel_k_ln(nu, z)?;
    Ok(ln_k.exp().min(1.0))
}

/// Full kernel matrix between point sets `a` (rows) and `b` (columns);
/// rows of the inputs are points.
pub fn kernel_matrix(spec: &KernelSpec, a: &Matrix, b: &Matrix) -> Result<KernelMatrix> {
    spec.validate()?;
    if a.rows() == 0 || b.rows() == 0 {
        return Err(Error::EmptyInput("kernel_matrix: empty point set".into()));
    }
    if a.cols() != b.cols() {
        return Err(Error::Shape(format!(
            "kernel_matrix: point dimensions {} vs {}",
            a.cols(),
            b.cols()
        )));
    }
    let symmetric = a == b;
    let mut values = Matrix::zeros(a.rows(), b.rows());
    if symmetric {
        for i in 0..a.rows() {
            for j in i..b.rows() {
                let v = kernel_eval(spec, a.row(i), b.row(j))?;
                values.set(i, j, v);
                values.set(j, i, v);
            }
        }
    } else {
        for i in 0..a.rows() {
            for j in 0..b.rows() {
                values.set(i, j, kernel_eval(spec, a.row(i), b.row(j))?);
            }
        }
    }
    Ok(KernelMatrix { values, symmetric })
}

/// kbar_ij = k_ij / sqrt(k_ii k_jj); the diagonal becomes exactly 1.
/// A nonpositive diagonal entry signals a zero-norm gradient or feature row.
pub fn normalize(k: &KernelMatrix) -> Result<NormalizedKernelMatrix> {
    if !k.symmetric {
        return Err(Error::Shape(
            "normalize requires a symmetric kernel matrix".into(),
        ));
    }
    let n = k.n_rows();
    let mut inv_sqrt = Vec::with_capacity(n);
    for i in 0..n {
        let d = k.values.get(i, i);
        if d <= 0.0 {
            return Err(Error::Normalization { index: i });
        }
        inv_sqrt.push(1.0 / d.sqrt());
    }
    let mut values = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                values.set(i, j, 1.0);
            } else {
                values.set(i, j, k.values.get(i, j) * inv_sqrt[i] * inv_sqrt[j]);
            }
        }
    }
    Ok(NormalizedKernelMatrix { values })
}

/// Gram matrix of gradient/feature rows: G G^T. This is the empirical
/// tangent kernel of the snapshot.
pub fn ntk_gram(features: &GradientSnapshot) -> KernelMatrix {
    let g = features.rows();
    let n = g.rows();
    let mut values = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = dot(g.row(i), g.row(j));
            values.set(i, j, v);
            values.set(j, i, v);
        }
    }
    KernelMatrix {
        values,
        symmetric: true,
    }
}

/// Explicit finite-dimensional feature map for the linear and polynomial
/// kernels: phi(x) . phi(x') reproduces the kernel exactly. Rows of the
/// result are feature vectors. Other kernels have no finite map.
pub fn explicit_features(spec: &KernelSpec, x: &Matrix) -> Result<Matrix> {
    spec.validate()?;
    let (p, c) = match *spec {
        KernelSpec::Linear { c } => (1u32, c),
        KernelSpec::Polynomial { p, c } => (p, c),
        _ => {
            return Err(Error::Domain(
                "explicit feature map exists only for linear and polynomial kernels".into(),
            ))
        }
    };
    let d = x.cols();
    // Multi-indices (k_0, ..., k_d) with sum p over the augmented vector
    // (sqrt(c), x_1, ..., x_d); coefficient sqrt(multinomial * c^{k_0}).
    let exponents = enumerate_multi_indices(d + 1, p as usize);
    let mut features = Matrix::zeros(x.rows(), exponents.len());
    for (col, k) in exponents.iter().enumerate() {
        let mut ln_coef = ln_factorial(p as usize);
        for &ki in k {
            ln_coef -= ln_factorial(ki);
        }
        let coef = (0.5 * (ln_coef + k[0] as f64 * c.ln())).exp();
        for i in 0..x.rows() {
            let row = x.row(i);
            let mut v = coef;
            for (slot, &ki) in k.iter().enumerate().skip(1) {
                v *= row[slot - 1].powi(ki as i32);
            }
            features.set(i, col, v);
        }
    }
    Ok(features)
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

fn enumerate_multi_indices(slots: usize, total: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; slots];
    fill(&mut out, &mut cur, 0, total);
    fn fill(out: &mut Vec<Vec<usize>>, cur: &mut Vec<usize>, slot: usize, remaining: usize) {
        if slot == cur.len() - 1 {
            cur[slot] = remaining;
            out.push(cur.clone());
            return;
        }
        for v in 0..=remaining {
            cur[slot] = v;
            fill(out, cur, slot + 1, remaining - v);
        }
    }
    out
}
