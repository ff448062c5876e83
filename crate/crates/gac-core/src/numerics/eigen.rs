//! Symmetric eigenvalue decomposition by cyclic Jacobi rotations.
//!
//! Each sweep visits every off-diagonal entry and annihilates it with a plane
//! rotation; the off-diagonal mass decreases quadratically between sweeps, so
//! a handful of sweeps reaches machine precision. Deterministic, dependency
//! free, and entirely adequate for the dense matrices this crate works with
//! (a few hundred rows).

use crate::error::Result;
use crate::numerics::matrix::Matrix;

const MAX_SWEEPS: usize = 64;

/// Eigenvalues of a symmetric matrix, sorted descending, together with their
/// trace-normalized form lambda_i / sum_j lambda_j.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub normalized_eigenvalues: Vec<f64>,
}

impl Spectrum {
    fn from_eigenvalues(mut eig: Vec<f64>) -> Self {
        eig.sort_by(|a, b| b.partial_cmp(a).expect("eigenvalues are finite"));
        let total: f64 = eig.iter().sum();
        let normalized = if total > 0.0 {
            eig.iter().map(|l| l / total).collect()
        } else {
            vec![0.0; eig.len()]
        };
        Spectrum {
            eigenvalues: eig,
            normalized_eigenvalues: normalized,
        }
    }
}

/// Eigenvalues of a symmetric matrix. See [`sym_eigen`] when eigenvectors
/// are needed too.
pub fn sym_eigvals(m: &Matrix) -> Result<Spectrum> {
    let (vals, _) = jacobi(m, false)?;
    Ok(Spectrum::from_eigenvalues(vals))
}

/// Full decomposition m = V diag(l) V^T with eigenvalues sorted descending
/// and V's columns the matching eigenvectors.
pub fn sym_eigen(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let (vals, vecs) = jacobi(m, true)?;
    let vecs = vecs.expect("requested eigenvectors");
    let n = vals.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).expect("finite"));
    let sorted_vals: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
    let mut sorted_vecs = Matrix::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..n {
            sorted_vecs.set(r, new_col, vecs.get(r, old_col));
        }
    }
    Ok((sorted_vals, sorted_vecs))
}

fn jacobi(m: &Matrix, want_vectors: bool) -> Result<(Vec<f64>, Option<Matrix>)> {
    m.require_symmetric()?;
    let n = m.rows();
    let mut a = m.clone();
    // Work on a symmetrized copy so roundoff in the input cannot bias rotations.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a.get(i, j) + a.get(j, i));
            a.set(i, j, v);
            a.set(j, i, v);
        }
    }
    let mut v = if want_vectors {
        Some(Matrix::identity(n))
    } else {
        None
    };
    if n == 1 {
        return Ok((vec![a.get(0, 0)], v));
    }

    let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);
    let tol = 1e-15 * scale;

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0_f64;
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                off += a.get(p, q).abs();
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let tau = (aqq - app) / (2.0 * apq);
                // Smaller-angle root of t^2 + 2 tau t - 1 = 0.
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);

                if let Some(vm) = v.as_mut() {
                    for k in 0..n {
                        let vkp = vm.get(k, p);
                        let vkq = vm.get(k, q);
                        vm.set(k, p, c * vkp - s * vkq);
                        vm.set(k, q, s * vkp + c * vkq);
                    }
                }
            }
        }
    }

    let vals = (0..n).map(|i| a.get(i, i)).collect();
    Ok((vals, v))
}

/// Checks that the eigenvalues of a PSD matrix are nonnegative within the
/// roundoff band -1e-9 * lambda_max.
pub fn psd_within_tolerance(spectrum: &Spectrum) -> bool {
    let max = spectrum.eigenvalues.first().copied().unwrap_or(0.0);
    let floor = -1e-9 * max.max(0.0);
    spectrum.eigenvalues.iter().all(|&l| l >= floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_eigenvalues() {
        let s = sym_eigvals(&Matrix::identity(3)).unwrap();
        assert_eq!(s.eigenvalues, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn all_ones_two_by_two() {
        let m = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let s = sym_eigvals(&m).unwrap();
        assert!((s.eigenvalues[0] - 2.0).abs() < 1e-12);
        assert!(s.eigenvalues[1].abs() < 1e-12);
    }

    // Quadratic-formula oracle for random symmetric 2x2 matrices.
    #[test]
    fn two_by_two_matches_characteristic_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let a: f64 = rng.random_range(-3.0..3.0);
            let b: f64 = rng.random_range(-3.0..3.0);
            let d: f64 = rng.random_range(-3.0..3.0);
            let m = Matrix::from_rows(&[vec![a, b], vec![b, d]]).unwrap();
            let s = sym_eigvals(&m).unwrap();
            let mean = 0.5 * (a + d);
            let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            let expect = [mean + disc, mean - disc];
            for (got, want) in s.eigenvalues.iter().zip(expect.iter()) {
                assert!(
                    (got - want).abs() <= 1e-10 * want.abs().max(1.0),
                    "got {got}, want {want}"
                );
            }
        }
    }

    #[test]
    fn trace_and_frobenius_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [3usize, 8, 20] {
            // PSD matrix G G^T.
            let g = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let m = g.matmul_transpose(&g).unwrap();
            let s = sym_eigvals(&m).unwrap();
            let tr = m.trace();
            let sum: f64 = s.eigenvalues.iter().sum();
            assert!((sum - tr).abs() <= 1e-9 * tr.abs().max(1.0));
            let f2 = m.frobenius_norm().powi(2);
            let l2: f64 = s.eigenvalues.iter().map(|l| l * l).sum();
            assert!((f2 - l2).abs() <= 1e-9 * f2.max(1.0));
            assert!(psd_within_tolerance(&s));
            let norm_sum: f64 = s.normalized_eigenvalues.iter().sum();
            assert!((norm_sum - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn eigenvectors_reconstruct_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 12;
        let g = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let m = g.matmul_transpose(&g).unwrap();
        let (vals, vecs) = sym_eigen(&m).unwrap();
        // V diag(l) V^T
        let mut lam = Matrix::zeros(n, n);
        for i in 0..n {
            lam.set(i, i, vals[i]);
        }
        let rec = vecs
            .matmul(&lam)
            .unwrap()
            .matmul(&vecs.transpose())
            .unwrap();
        for i in 0..n {
            for j in 0..n {
                assert!((rec.get(i, j) - m.get(i, j)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_asymmetric() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(sym_eigvals(&m).is_err());
    }

    #[test]
    fn rejects_non_square() {
        let m = Matrix::zeros(2, 3);
        assert!(sym_eigvals(&m).is_err());
    }
}
