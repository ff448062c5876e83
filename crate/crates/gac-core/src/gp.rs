//! Gaussian-process posterior in both kernel and feature space, exposing the
//! model-vs-function complexity split.
//!
//! Posterior over query points:
//!
//! ```text
//! mean = mu + K_t' K_ttl^{-1} (y - mu_t),    cov = K - K_t' K_ttl^{-1} K_t
//! ```
//!
//! with K_ttl = K_tt + lambda I. The same posterior arises from feature-space
//! regression theta = (Phi_t' Phi_t + lambda I)^{-1} Phi_t' y
//! + (I + Phi_t' Phi_t / lambda)^{-1/2} z with z standard normal, which is
//! what `theta_posterior_sample` draws. The prior covariance and the tangent
//! kernel coincide (both are K); the posterior covariance does not, which is
//! exactly the function/model complexity distinction.

use crate::complexity::gac_from_kernel;
use crate::error::{Error, Result};
use crate::kernels::{kernel_matrix, KernelMatrix, KernelSpec};
use crate::numerics::{solve_spd, sym_eigen, Matrix};

/// Eigenvalue floor guarding roundoff in matrix square roots.
const EIG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct GpProblem {
    pub train_x: Matrix,
    pub y: Vec<f64>,
    pub query_x: Matrix,
    pub spec: KernelSpec,
    /// Noise / regularization; >= 0.
    pub lambda: f64,
    /// Prior mean at training points; zero when absent.
    pub mean_train: Option<Vec<f64>>,
    /// Prior mean at query points; zero when absent.
    pub mean_query: Option<Vec<f64>>,
}

impl GpProblem {
    pub fn new(train_x: Matrix, y: Vec<f64>, query_x: Matrix, spec: KernelSpec, lambda: f64) -> Self {
        GpProblem {
            train_x,
            y,
            query_x,
            spec,
            lambda,
            mean_train: None,
            mean_query: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GpPosterior {
    pub mean: Vec<f64>,
    pub cov: Matrix,
}

/// Closed-form posterior mean and covariance.
pub fn gp_posterior(p: &GpProblem) -> Result<GpPosterior> {
    if p.lambda < 0.0 {
        return Err(Error::Domain(format!(
            "lambda must be >= 0, got {}",
            p.lambda
        )));
    }
    let n_t = p.train_x.rows();
    if p.y.len() != n_t {
        return Err(Error::Shape(format!(
            "gp_posterior: {} training points but {} responses",
            n_t,
            p.y.len()
        )));
    }
    let k_tt = kernel_matrix(&p.spec, &p.train_x, &p.train_x)?.values;
    let k_t = kernel_matrix(&p.spec, &p.train_x, &p.query_x)?.values; // n_t x n
    let k = kernel_matrix(&p.spec, &p.query_x, &p.query_x)?.values;

    let mut k_ttl = k_tt;
    k_ttl.add_diag(p.lambda);

    let centered: Vec<f64> = match &p.mean_train {
        Some(mu) => p.y.iter().zip(mu).map(|(a, b)| a - b).collect(),
        None => p.y.clone(),
    };
    let a = solve_spd(&k_ttl, &Matrix::column(&centered))?.into_vec();
    let mut mean = k_t.transpose().matvec(&a)?;
    if let Some(mu_q) = &p.mean_query {
        if mu_q.len() != mean.len() {
            return Err(Error::Shape("query mean has wrong length".into()));
        }
        for (m, q) in mean.iter_mut().zip(mu_q) {
            *m += q;
        }
    }

    let b = solve_spd(&k_ttl, &k_t)?; // K_ttl^{-1} K_t
    let reduction = k_t.transpose().matmul(&b)?;
    let n = k.rows();
    let mut cov = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            // Symmetrize; the product is symmetric up to roundoff.
            let v = 0.5
                * (k.get(i, j) - reduction.get(i, j) + k.get(j, i) - reduction.get(j, i));
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }
    Ok(GpPosterior { mean, cov })
}

/// One draw of the feature-space posterior parameters:
/// theta = (Phi_t' Phi_t + lambda I)^{-1} Phi_t' y
///       + (I + Phi_t' Phi_t / lambda)^{-1/2} z.
/// At lambda = 0 the deterministic part uses the pseudo-inverse and the
/// stochastic part projects z onto the null space of Phi_t.
pub fn theta_posterior_sample(
    phi_t: &Matrix,
    y: &[f64],
    lambda: f64,
    z: &[f64],
) -> Result<Vec<f64>> {
    if lambda < 0.0 {
        return Err(Error::Domain(format!("lambda must be >= 0, got {lambda}")));
    }
    let n_t = phi_t.rows();
    let p = phi_t.cols();
    if y.len() != n_t {
        return Err(Error::Shape(format!(
            "theta_posterior_sample: {} feature rows but {} responses",
            n_t,
            y.len()
        )));
    }
    if z.len() != p {
        return Err(Error::Shape(format!(
            "theta_posterior_sample: z has length {}, expected {p}",
            z.len()
        )));
    }
    let phit = phi_t.transpose();
    let m = phit.matmul_transpose(&phit)?; // Phi_t' Phi_t
    let rhs = phit.matvec(y)?;
    let (vals, vecs) = sym_eigen(&m)?;
    let vals: Vec<f64> = vals.iter().map(|&l| l.max(0.0)).collect();
    let cutoff = vals[0].max(EIG_FLOOR) * p as f64 * f64::EPSILON;

    let project = |input: &[f64], weight: &dyn Fn(f64) -> f64| -> Vec<f64> {
        let mut coeffs = vec![0.0; p];
        for (j, cj) in coeffs.iter_mut().enumerate() {
            let mut s = 0.0;
            for i in 0..p {
                s += vecs.get(i, j) * input[i];
            }
            *cj = s * weight(vals[j]);
        }
        let mut out = vec![0.0; p];
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for j in 0..p {
                s += vecs.get(i, j) * coeffs[j];
            }
            *o = s;
        }
        out
    };

    let deterministic = if lambda > 0.0 {
        project(&rhs, &|l| 1.0 / (l + lambda))
    } else {
        project(&rhs, &|l| if l > cutoff { 1.0 / l } else { 0.0 })
    };
    let stochastic = if lambda > 0.0 {
        project(z, &|l| 1.0 / (1.0 + l / lambda).sqrt())
    } else {
        // sqrt(I - Phi^+ Phi) is the projector onto the null space.
        project(z, &|l| if l > cutoff { 0.0 } else { 1.0 })
    };
    Ok(deterministic
        .iter()
        .zip(&stochastic)
        .map(|(a, b)| a + b)
        .collect())
}

/// Prior GP kernel, posterior GP kernel, and the tangent kernel over the
/// query points, with the GAC of each. The prior GPK and the NTK are the same
/// matrix; the posterior GPK differs once the data is informative.
#[derive(Debug, Clone)]
pub struct GpkNtkReport {
    pub prior_gpk: KernelMatrix,
    pub posterior_gpk: KernelMatrix,
    pub ntk: KernelMatrix,
    pub gac_prior: f64,
    pub gac_posterior: f64,
    pub gac_ntk: f64,
}

pub fn gpk_ntk_report(p: &GpProblem) -> Result<GpkNtkReport> {
    let prior = kernel_matrix(&p.spec, &p.query_x, &p.query_x)?;
    let posterior = gp_posterior(p)?;
    let posterior_gpk = KernelMatrix {
        values: posterior.cov,
        symmetric: true,
    };
    let ntk = prior.clone();
    let gac_prior = gac_from_kernel(&prior)?.value;
    let gac_posterior = gac_from_kernel(&posterior_gpk)?.value;
    let gac_ntk = gac_from_kernel(&ntk)?.value;
    Ok(GpkNtkReport {
        prior_gpk: prior,
        posterior_gpk,
        ntk,
        gac_prior,
        gac_posterior,
        gac_ntk,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::explicit_features;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(seed: u64, lambda: f64) -> GpProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let train_x = Matrix::from_fn(6, 1, |_, _| rng.random_range(-2.0..2.0));
        let y: Vec<f64> = (0..6)
            .map(|i| (train_x.get(i, 0) * 1.3).sin() + rng.random_range(-0.05..0.05))
            .collect();
        let query_x = Matrix::from_fn(8, 1, |_, _| rng.random_range(-2.0..2.0));
        GpProblem::new(train_x, y, query_x, KernelSpec::Gaussian { l: 1.0 }, lambda)
    }

    #[test]
    fn huge_lambda_reduces_posterior_to_prior() {
        let p = problem(1, 1e12);
        let post = gp_posterior(&p).unwrap();
        let prior = kernel_matrix(&p.spec, &p.query_x, &p.query_x).unwrap().values;
        for m in &post.mean {
            assert!(m.abs() < 1e-6);
        }
        for i in 0..prior.rows() {
            for j in 0..prior.cols() {
                let a = post.cov.get(i, j);
                let b = prior.get(i, j);
                assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn tiny_lambda_interpolates_at_training_points() {
        let mut p = problem(2, 1e-10);
        p.query_x = p.train_x.clone();
        let post = gp_posterior(&p).unwrap();
        for (m, t) in post.mean.iter().zip(&p.y) {
            assert!((m - t).abs() < 1e-4, "{m} vs {t}");
        }
    }

    // Hand-algebra oracle on a 2-point problem with an explicit 2x2 inverse.
    #[test]
    fn two_point_closed_form() {
        let train_x = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let y = vec![1.0, -1.0];
        let query_x = Matrix::from_rows(&[vec![0.5], vec![2.0]]).unwrap();
        let spec = KernelSpec::Gaussian { l: 1.0 };
        let lambda = 0.3;
        let p = GpProblem::new(train_x.clone(), y.clone(), query_x.clone(), spec.clone(), lambda);
        let post = gp_posterior(&p).unwrap();

        let k = |a: f64, b: f64| (-(a - b) * (a - b) / 2.0).exp();
        // K_tt + lambda I and its inverse by hand.
        let a11 = 1.0 + lambda;
        let a12 = k(0.0, 1.0);
        let det = a11 * a11 - a12 * a12;
        let inv = [
            [a11 / det, -a12 / det],
            [-a12 / det, a11 / det],
        ];
        for (qi, &q) in [0.5, 2.0].iter().enumerate() {
            let kt = [k(0.0, q), k(1.0, q)];
            let mut mean = 0.0;
            for r in 0..2 {
                for c in 0..2 {
                    mean += kt[r] * inv[r][c] * y[c];
                }
            }
            assert!((post.mean[qi] - mean).abs() <= 1e-10);
            let mut var = k(q, q);
            for r in 0..2 {
                for c in 0..2 {
                    var -= kt[r] * inv[r][c] * kt[c];
                }
            }
            assert!((post.cov.get(qi, qi) - var).abs() <= 1e-10);
        }
    }

    #[test]
    fn theta_sample_prior_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let phi = Matrix::from_fn(5, 3, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z = vec![0.7, -0.2, 1.1];
        let theta = theta_posterior_sample(&phi, &y, 1e12, &z).unwrap();
        for (t, zv) in theta.iter().zip(&z) {
            assert!((t - zv).abs() < 1e-5, "{t} vs {zv}");
        }
    }

    #[test]
    fn theta_sample_noise_free_full_rank_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let phi = Matrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z1 = vec![1.0, 2.0, 3.0];
        let z2 = vec![-3.0, 0.5, 0.0];
        let a = theta_posterior_sample(&phi, &y, 0.0, &z1).unwrap();
        let b = theta_posterior_sample(&phi, &y, 0.0, &z2).unwrap();
        for (x, w) in a.iter().zip(&b) {
            assert!((x - w).abs() < 1e-9, "z leaked into full-rank solution");
        }
        // And it solves the normal equations.
        let phit = phi.transpose();
        let m = phit.matmul_transpose(&phit).unwrap();
        let rhs = phit.matvec(&y).unwrap();
        let lhs = m.matvec(&a).unwrap();
        for (l, r) in lhs.iter().zip(&rhs) {
            assert!((l - r).abs() < 1e-8);
        }
    }

    #[test]
    fn theta_mean_recovers_ridge_for_linear_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Matrix::from_fn(7, 2, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lambda = 0.4;
        // E[theta] is the z = 0 draw; features are the raw coordinates.
        let theta = theta_posterior_sample(&x, &y, lambda, &[0.0, 0.0]).unwrap();
        // Ridge solution (X'X + lambda I)^{-1} X' y.
        let xt = x.transpose();
        let mut m = xt.matmul_transpose(&xt).unwrap();
        m.add_diag(lambda);
        let ridge = solve_spd(&m, &Matrix::column(&xt.matvec(&y).unwrap()))
            .unwrap()
            .into_vec();
        for (t, r) in theta.iter().zip(&ridge) {
            assert!((t - r).abs() <= 1e-9);
        }
    }

    // Matrix-inversion-lemma identity on random instances.
    #[test]
    fn inversion_lemma_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..5 {
            let phi = Matrix::from_fn(5, 4, |_, _| rng.random_range(-1.0..1.0));
            let lambda = rng.random_range(0.1..2.0);
            let y: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            // Phi' (Phi Phi' + lambda I)^{-1} y
            let mut outer = phi.matmul_transpose(&phi).unwrap();
            outer.add_diag(lambda);
            let left = phi
                .transpose()
                .matvec(&solve_spd(&outer, &Matrix::column(&y)).unwrap().into_vec())
                .unwrap();
            // (Phi' Phi + lambda I)^{-1} Phi' y
            let phit = phi.transpose();
            let mut inner = phit.matmul_transpose(&phit).unwrap();
            inner.add_diag(lambda);
            let right = solve_spd(&inner, &Matrix::column(&phit.matvec(&y).unwrap()))
                .unwrap()
                .into_vec();
            for (l, r) in left.iter().zip(&right) {
                assert!((l - r).abs() <= 1e-9);
            }
        }
    }

    // Feature-space sampling agrees with the closed-form posterior through
    // Phi theta; smoke-scale Monte Carlo (the acceptance suite runs it big).
    #[test]
    fn sampled_predictions_match_posterior_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spec = KernelSpec::Polynomial { p: 2, c: 1.0 };
        let train_x = Matrix::from_fn(5, 2, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let query_x = Matrix::from_fn(4, 2, |_, _| rng.random_range(-1.0..1.0));
        let lambda = 0.5;
        let p = GpProblem::new(train_x.clone(), y.clone(), query_x.clone(), spec.clone(), lambda);
        let post = gp_posterior(&p).unwrap();

        let phi_t = explicit_features(&spec, &train_x).unwrap();
        let phi_q = explicit_features(&spec, &query_x).unwrap();
        let dim = phi_t.cols();
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let draws = 4000;
        let mut mean_acc = vec![0.0; 4];
        for _ in 0..draws {
            let z: Vec<f64> = (0..dim)
                .map(|_| rand_distr::Distribution::sample(&normal, &mut rng))
                .collect();
            let theta = theta_posterior_sample(&phi_t, &y, lambda, &z).unwrap();
            let f = phi_q.matvec(&theta).unwrap();
            for (acc, v) in mean_acc.iter_mut().zip(&f) {
                *acc += v;
            }
        }
        for (acc, want) in mean_acc.iter().zip(&post.mean) {
            let got = acc / draws as f64;
            assert!((got - want).abs() < 0.05, "{got} vs {want}");
        }
    }

    #[test]
    fn report_prior_gac_matches_ntk_bit_for_bit() {
        let p = problem(8, 0.1);
        let report = gpk_ntk_report(&p).unwrap();
        assert_eq!(report.gac_prior.to_bits(), report.gac_ntk.to_bits());
        // Informative data at small lambda: posterior GPK must differ.
        assert!((report.gac_posterior - report.gac_ntk).abs() > 0.01);
        // Non-informative data: posterior back to prior.
        let mut flat = problem(8, 0.1);
        flat.lambda = 1e12;
        let r2 = gpk_ntk_report(&flat).unwrap();
        assert!((r2.gac_posterior - r2.gac_prior).abs() <= 1e-6);
    }

    #[test]
    fn negative_lambda_rejected() {
        let p = problem(9, 0.1);
        assert!(theta_posterior_sample(&p.train_x, &p.y, -1.0, &[0.0]).is_err());
        let mut bad = p;
        bad.lambda = -0.5;
        assert!(gp_posterior(&bad).is_err());
    }
}
