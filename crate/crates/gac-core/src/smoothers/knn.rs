//! k-nearest-neighbor kernel and its closed-form GAC.

use crate::error::{Error, Result};
use crate::kernels::KernelMatrix;
use crate::numerics::Matrix;

/// Per query point, the kappa nearest training indices under Euclidean
/// distance. Ties break toward the lower training index, so the ordering is
/// fully deterministic; on distinct training points a training point's own
/// neighbor set always contains itself.
#[derive(Debug, Clone)]
pub struct NeighborSet {
    pub kappa: usize,
    /// One sorted index list per query point.
    pub neighbors: Vec<Vec<usize>>,
}

/// Nearest-neighbor sets of `query` points among `train` points.
pub fn neighbor_sets(train: &Matrix, query: &Matrix, kappa: usize) -> Result<NeighborSet> {
    let n = train.rows();
    if kappa == 0 || kappa > n {
        return Err(Error::Domain(format!(
            "kappa must satisfy 1 <= kappa <= n = {n}, got {kappa}"
        )));
    }
    if train.cols() != query.cols() {
        return Err(Error::Shape(format!(
            "point dimensions differ: {} vs {}",
            train.cols(),
            query.cols()
        )));
    }
    let mut neighbors = Vec::with_capacity(query.rows());
    for q in 0..query.rows() {
        let qp = query.row(q);
        let mut order: Vec<(f64, usize)> = (0..n)
            .map(|i| {
                let d2: f64 = train
                    .row(i)
                    .iter()
                    .zip(qp)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d2, i)
            })
            .collect();
        order.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite distances").then(a.1.cmp(&b.1)));
        let mut chosen: Vec<usize> = order[..kappa].iter().map(|&(_, i)| i).collect();
        chosen.sort_unstable();
        neighbors.push(chosen);
    }
    Ok(NeighborSet { kappa, neighbors })
}

/// Binary kNN kernel: entry (q, i) is 1 when training point i is among the
/// kappa nearest neighbors of query point q. Every row has exactly kappa
/// ones; on train x train with distinct points the diagonal is all ones.
pub fn knn_kernel(train: &Matrix, query: &Matrix, kappa: usize) -> Result<KernelMatrix> {
    let sets = neighbor_sets(train, query, kappa)?;
    let mut values = Matrix::zeros(query.rows(), train.rows());
    for (q, set) in sets.neighbors.iter().enumerate() {
        for &i in set {
            values.set(q, i, 1.0);
        }
    }
    Ok(KernelMatrix {
        values,
        symmetric: train == query,
    })
}

/// Closed-form training-data GAC of the kNN kernel: 1 - (kappa - 1)/(n - 1).
/// Every row of the training kernel holds kappa ones with a unit diagonal,
/// so the average squared off-diagonal entry is exactly (kappa - 1)/(n - 1).
pub fn knn_gac(kappa: usize, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain(format!("knn_gac needs n >= 2, got {n}")));
    }
    if kappa == 0 || kappa > n {
        return Err(Error::Domain(format!(
            "kappa must satisfy 1 <= kappa <= n = {n}, got {kappa}"
        )));
    }
    Ok(1.0 - (kappa - 1) as f64 / (n - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complexity::gac_from_kernel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn points_1d(xs: &[f64]) -> Matrix {
        Matrix::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn kappa_equals_n_gives_all_ones() {
        let x = points_1d(&[0.0, 1.0, 5.0]);
        let k = knn_kernel(&x, &x, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(k.values.get(i, j), 1.0);
            }
        }
    }

    #[test]
    fn kappa_one_is_identity_on_distinct_points() {
        let x = points_1d(&[0.0, 1.0, 2.5, 7.0]);
        let k = knn_kernel(&x, &x, 1).unwrap();
        assert_eq!(k.values, Matrix::identity(4));
    }

    // Brute-force distance oracle for the tie on a 3-point line: the middle
    // point is equidistant from both ends, the lower index wins.
    #[test]
    fn tie_breaks_toward_lower_index() {
        let x = points_1d(&[0.0, 1.0, 2.0]);
        let sets = neighbor_sets(&x, &x, 2).unwrap();
        // Query 1 is at distance 1 from both 0 and 2; index 0 wins.
        assert_eq!(sets.neighbors[1], vec![0, 1]);
        // Exhaustive check against a sort for every query.
        for (q, set) in sets.neighbors.iter().enumerate() {
            let mut dist: Vec<(f64, usize)> = (0..3)
                .map(|i| ((x.get(i, 0) - x.get(q, 0)).abs(), i))
                .collect();
            dist.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let mut expect: Vec<usize> = dist[..2].iter().map(|&(_, i)| i).collect();
            expect.sort_unstable();
            assert_eq!(*set, expect);
        }
    }

    #[test]
    fn row_sums_equal_kappa() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let train = Matrix::from_fn(12, 2, |_, _| rng.random_range(-1.0..1.0));
        let query = Matrix::from_fn(5, 2, |_, _| rng.random_range(-1.0..1.0));
        for kappa in [1, 3, 12] {
            let k = knn_kernel(&train, &query, kappa).unwrap();
            for q in 0..5 {
                let sum: f64 = k.values.row(q).iter().sum();
                assert_eq!(sum, kappa as f64);
            }
        }
    }

    #[test]
    fn closed_form_limits() {
        assert_eq!(knn_gac(1, 20).unwrap(), 1.0);
        assert_eq!(knn_gac(20, 20).unwrap(), 0.0);
        assert_eq!(knn_gac(5, 21).unwrap(), 0.8);
    }

    #[test]
    fn closed_form_matches_kernel_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 20;
        let x = Matrix::from_fn(n, 1, |_, _| rng.random_range(-10.0..10.0));
        for kappa in 1..=n {
            let k = knn_kernel(&x, &x, kappa).unwrap();
            let via_kernel = gac_from_kernel(&k).unwrap().value;
            let closed = knn_gac(kappa, n).unwrap();
            assert_eq!(via_kernel, closed, "kappa={kappa}");
        }
    }

    #[test]
    fn domain_errors() {
        let x = points_1d(&[0.0, 1.0]);
        assert!(knn_kernel(&x, &x, 0).is_err());
        assert!(knn_kernel(&x, &x, 3).is_err());
        assert!(knn_gac(0, 5).is_err());
        assert!(knn_gac(6, 5).is_err());
        assert!(knn_gac(1, 1).is_err());
    }
}
