//! Random Fourier features for the Gaussian kernel.
//!
//! z(x) = sqrt(2/D) cos(Omega^T x + b) with Omega entries ~ N(0, 1/l^2) and
//! phases b ~ U[0, 2pi); E[z(x) . z(x')] = exp(-||x - x'||^2 / (2 l^2)).
//! Fitting is minimum-norm least squares, the interpolation protocol the
//! double-descent experiments rely on.

use crate::complexity::GradientSnapshot;
use crate::error::{Error, Result};
use crate::numerics::{sym_eigen, Matrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

#[derive(Debug, Clone)]
pub struct RffModel {
    /// d x D frequency matrix.
    pub frequencies: Matrix,
    /// D phases.
    pub phases: Vec<f64>,
    /// Fitted weights, length D.
    pub weights: Vec<f64>,
    pub length_scale: f64,
}

/// Draws frequencies and phases, then maps every row of x through
/// sqrt(2/D) cos(Omega^T x + b). Rows of the returned snapshot are the
/// feature vectors, which are also the model gradients.
pub fn rff_features(
    x: &Matrix,
    d_features: usize,
    length_scale: f64,
    seed: u64,
) -> Result<GradientSnapshot> {
    let (frequencies, phases) = rff_draw(x.cols(), d_features, length_scale, seed)?;
    rff_apply(x, &frequencies, &phases)
}

/// Frequency/phase draw shared by `rff_features` and the trained model path.
pub fn rff_draw(d_in: usize, d_features: usize, length_scale: f64, seed: u64) -> Result<(Matrix, Vec<f64>)> {
    if d_features == 0 {
        return Err(Error::Domain("need at least one random feature".into()));
    }
    if length_scale <= 0.0 {
        return Err(Error::Domain(format!(
            "length scale must be > 0, got {length_scale}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0 / length_scale).expect("valid std");
    let uniform = Uniform::new(0.0, 2.0 * std::f64::consts::PI).expect("valid range");
    let frequencies = Matrix::from_fn(d_in, d_features, |_, _| normal.sample(&mut rng));
    let phases: Vec<f64> = (0..d_features).map(|_| uniform.sample(&mut rng)).collect();
    Ok((frequencies, phases))
}

/// Applies an existing frequency/phase draw to a point set.
pub fn rff_apply(x: &Matrix, frequencies: &Matrix, phases: &[f64]) -> Result<GradientSnapshot> {
    if x.cols() != frequencies.rows() {
        return Err(Error::Shape(format!(
            "rff_apply: points have dimension {}, frequencies expect {}",
            x.cols(),
            frequencies.rows()
        )));
    }
    let d_features = frequencies.cols();
    let scale = (2.0 / d_features as f64).sqrt();
    let mut z = Matrix::zeros(x.rows(), d_features);
    for i in 0..x.rows() {
        let xi = x.row(i);
        for j in 0..d_features {
            let mut arg = phases[j];
            for (k, &xv) in xi.iter().enumerate() {
                arg += frequencies.get(k, j) * xv;
            }
            z.set(i, j, scale * arg.cos());
        }
    }
    Ok(GradientSnapshot::from_gradients(z))
}

/// Minimum-norm least squares: among minimizers of ||Phi w - y||, the one
/// with smallest ||w||. Rank deficiency is handled by an eigenvalue
/// pseudo-inverse; the dual (n x n) form is used when D > n.
pub fn rff_fit(features: &GradientSnapshot, y: &[f64]) -> Result<Vec<f64>> {
    let phi = features.rows();
    let n = phi.rows();
    let d = phi.cols();
    if y.len() != n {
        return Err(Error::Shape(format!(
            "rff_fit: {} feature rows but {} responses",
            n,
            y.len()
        )));
    }
    if d <= n {
        // w = (Phi^T Phi)^+ Phi^T y
        let phit = phi.transpose();
        let gram = phit.matmul_transpose(&phit)?; // Phi^T Phi
        let rhs = phit.matvec(y)?;
        pinv_solve(&gram, &rhs)
    } else {
        // w = Phi^T (Phi Phi^T)^+ y
        let gram = phi.matmul_transpose(phi)?; // Phi Phi^T
        let dual = pinv_solve(&gram, y)?;
        phi.transpose().matvec(&dual)
    }
}

/// Minimum-norm least squares for a multi-column target, sharing one
/// eigendecomposition across columns. Returns D x c weights.
pub fn rff_fit_multi(features: &GradientSnapshot, y: &Matrix) -> Result<Matrix> {
    let phi = features.rows();
    let n = phi.rows();
    let d = phi.cols();
    if y.rows() != n {
        return Err(Error::Shape(format!(
            "rff_fit_multi: {} feature rows but {} target rows",
            n,
            y.rows()
        )));
    }
    let c = y.cols();
    let mut weights = Matrix::zeros(d, c);
    if d <= n {
        let phit = phi.transpose();
        let gram = phit.matmul_transpose(&phit)?;
        let pinv = PinvApplier::new(&gram)?;
        for col in 0..c {
            let rhs = phit.matvec(&y.col_vec(col))?;
            let w = pinv.apply(&rhs);
            for (i, &v) in w.iter().enumerate() {
                weights.set(i, col, v);
            }
        }
    } else {
        let gram = phi.matmul_transpose(phi)?;
        let pinv = PinvApplier::new(&gram)?;
        let phit = phi.transpose();
        for col in 0..c {
            let dual = pinv.apply(&y.col_vec(col));
            let w = phit.matvec(&dual)?;
            for (i, &v) in w.iter().enumerate() {
                weights.set(i, col, v);
            }
        }
    }
    Ok(weights)
}

/// Reusable eigen pseudo-inverse of a symmetric PSD matrix.
struct PinvApplier {
    vals: Vec<f64>,
    vecs: Matrix,
    cutoff: f64,
}

impl PinvApplier {
    fn new(g: &Matrix) -> Result<Self> {
        let (vals, vecs) = sym_eigen(g)?;
        let cutoff = vals[0].max(0.0) * vals.len() as f64 * f64::EPSILON;
        Ok(PinvApplier { vals, vecs, cutoff })
    }

    fn apply(&self, b: &[f64]) -> Vec<f64> {
        let n = self.vals.len();
        let mut vtb = vec![0.0; n];
        for (j, v) in vtb.iter_mut().enumerate() {
            let mut s = 0.0;
            for i in 0..n {
                s += self.vecs.get(i, j) * b[i];
            }
            *v = if self.vals[j] > self.cutoff {
                s / self.vals[j]
            } else {
                0.0
            };
        }
        let mut x = vec![0.0; n];
        for (i, o) in x.iter_mut().enumerate() {
            let mut s = 0.0;
            for j in 0..n {
                s += self.vecs.get(i, j) * vtb[j];
            }
            *o = s;
        }
        x
    }
}

/// Solves g x = b through the eigen pseudo-inverse of a symmetric PSD g.
fn pinv_solve(g: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let (vals, vecs) = sym_eigen(g)?;
    let n = vals.len();
    let cutoff = vals[0].max(0.0) * n as f64 * f64::EPSILON;
    // x = V diag(1/l where l > cutoff) V^T b
    let mut vtb = vec![0.0; n];
    for j in 0..n {
        let mut s = 0.0;
        for i in 0..n {
            s += vecs.get(i, j) * b[i];
        }
        vtb[j] = s;
    }
    for (j, v) in vtb.iter_mut().enumerate() {
        *v = if vals[j] > cutoff { *v / vals[j] } else { 0.0 };
    }
    let mut x = vec![0.0; n];
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            s += vecs.get(i, j) * vtb[j];
        }
        x[i] = s;
    }
    Ok(x)
}

/// Fits an RFF model end to end on a fresh draw.
pub fn rff_train(
    x: &Matrix,
    y: &[f64],
    d_features: usize,
    length_scale: f64,
    seed: u64,
) -> Result<RffModel> {
    let (frequencies, phases) = rff_draw(x.cols(), d_features, length_scale, seed)?;
    let features = rff_apply(x, &frequencies, &phases)?;
    let weights = rff_fit(&features, y)?;
    Ok(RffModel {
        frequencies,
        phases,
        weights,
        length_scale,
    })
}

impl RffModel {
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        let z = rff_apply(x, &self.frequencies, &self.phases)?;
        z.rows().matvec(&self.weights)
    }
}
