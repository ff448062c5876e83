//! Random forests as kernel smoothers.
//!
//! Each tree b contributes the occurrence-count kernel
//! k_b(x*, x_i) = #(x_i in R_b(x*)) over its bootstrap multiset, and the
//! forest kernel is the sum of the per-tree kernels normalized by region
//! occupancy, k_RF(x*, x_i) = sum_b k_b(x*, x_i) / |R_b(x*)|. Every row of
//! k_RF sums to exactly B.

use crate::error::{Error, Result};
use crate::kernels::KernelMatrix;
use crate::numerics::Matrix;
use crate::smoothers::tree::{fit_tree_opts, Partition, TreeOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// A fitted forest: per-tree partitions anchored to the original training
/// data plus the bootstrap multiset counts (all ones when bootstrap is off).
#[derive(Debug, Clone)]
pub struct Forest {
    pub trees: Vec<Partition>,
    /// Per tree, how many times each original training index was drawn.
    pub bootstrap_counts: Vec<Vec<usize>>,
    pub b_count: usize,
}

#[derive(Debug, Clone)]
pub struct ForestConfig {
    pub b_count: usize,
    pub max_leaves: usize,
    /// With-replacement resampling of size n per tree.
    pub bootstrap: bool,
    /// Evaluate only ceil(d/3) random features per split.
    pub feature_subsample: bool,
    pub seed: u64,
}

impl ForestConfig {
    pub fn new(b_count: usize, max_leaves: usize, seed: u64) -> Self {
        ForestConfig {
            b_count,
            max_leaves,
            bootstrap: false,
            feature_subsample: false,
            seed,
        }
    }
}

/// Fits `b_count` trees; per-tree RNG streams make the result independent of
/// scheduling.
pub fn fit_forest(x: &Matrix, y: &[f64], config: &ForestConfig) -> Result<Forest> {
    if config.b_count == 0 {
        return Err(Error::Domain("forest needs at least one tree".into()));
    }
    let n = x.rows();
    if n == 0 {
        return Err(Error::EmptyInput("fit_forest: empty data".into()));
    }
    let d = x.cols();
    let mtry = if config.feature_subsample {
        Some(d.div_ceil(3))
    } else {
        None
    };

    let fitted: Result<Vec<(Partition, Vec<usize>)>> = (0..config.b_count)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(b as u64 + 1);
            let counts: Vec<usize> = if config.bootstrap {
                let mut c = vec![0usize; n];
                for _ in 0..n {
                    c[rng.random_range(0..n)] += 1;
                }
                c
            } else {
                vec![1usize; n]
            };
            // Expand the multiset for fitting, then re-anchor to the originals.
            let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
            let mut resp: Vec<f64> = Vec::with_capacity(n);
            for (i, &c) in counts.iter().enumerate() {
                for _ in 0..c {
                    rows.push(x.row(i).to_vec());
                    resp.push(y[i]);
                }
            }
            let xb = Matrix::from_rows(&rows)?;
            let opts = TreeOptions {
                max_leaves: config.max_leaves,
                max_depth: None,
                mtry,
                seed: config.seed ^ (b as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            };
            let fitted = fit_tree_opts(&xb, &resp, &opts)?;
            let anchored = fitted.reanchor(x, y, &counts)?;
            Ok((anchored, counts))
        })
        .collect();
    let fitted = fitted?;
    let (trees, bootstrap_counts): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();
    Ok(Forest {
        trees,
        bootstrap_counts,
        b_count: config.b_count,
    })
}

impl Forest {
    /// Per tree, the region each query point routes to.
    pub fn assign_all(&self, x: &Matrix) -> Vec<Vec<usize>> {
        self.trees.iter().map(|t| t.assign_all(x)).collect()
    }

    /// Region assignments of the training points themselves.
    pub fn train_assignments(&self) -> Vec<Vec<usize>> {
        self.trees.iter().map(|t| t.leaf_of.clone()).collect()
    }
}

/// Forest kernel rows for the given per-tree query assignments:
/// k_RF(q, i) = sum_b count_b(i) [i in R_b(q)] / |R_b(q)| where |R_b(q)| is
/// the bootstrap-counted occupancy of q's region in tree b.
pub fn rf_kernel(f: &Forest, query_assignment: &[Vec<usize>]) -> Result<KernelMatrix> {
    if query_assignment.len() != f.b_count {
        return Err(Error::Shape(format!(
            "need one assignment list per tree: got {}, forest has {}",
            query_assignment.len(),
            f.b_count
        )));
    }
    let n = f.trees[0].leaf_of.len();
    let n_query = query_assignment[0].len();
    let mut values = Matrix::zeros(n_query, n);

    for (b, tree) in f.trees.iter().enumerate() {
        let counts = &f.bootstrap_counts[b];
        // Occupancy per region under the bootstrap multiset.
        let mut occupancy = vec![0.0f64; tree.n_regions()];
        for (i, &r) in tree.leaf_of.iter().enumerate() {
            occupancy[r] += counts[i] as f64;
        }
        let assignments = &query_assignment[b];
        if assignments.len() != n_query {
            return Err(Error::Shape(
                "query assignment lists have inconsistent lengths".into(),
            ));
        }
        for (q, &region) in assignments.iter().enumerate() {
            let denom = occupancy[region];
            if denom <= 0.0 {
                return Err(Error::Internal(format!(
                    "empty region {region} in tree {b}"
                )));
            }
            for &i in &tree.regions[region].members {
                if counts[i] > 0 {
                    let v = values.get(q, i) + counts[i] as f64 / denom;
                    values.set(q, i, v);
                }
            }
        }
    }
    let symmetric = n_query == n && values.symmetry_deviation() <= 1e-12;
    Ok(KernelMatrix { values, symmetric })
}

/// Forest kernel on the training points.
pub fn rf_kernel_train(f: &Forest) -> Result<KernelMatrix> {
    rf_kernel(f, &f.train_assignments())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complexity::gac_from_kernel;
    use crate::smoothers::tree::{fit_tree, tree_kernel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(seed: u64, n: usize, d: usize) -> (Matrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_fn(n, d, |_, _| rng.random_range(-3.0..3.0));
        let y = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        (x, y)
    }

    #[test]
    fn single_tree_without_bootstrap_matches_normalized_tree_kernel() {
        let (x, y) = random_data(1, 14, 2);
        let forest = fit_forest(&x, &y, &ForestConfig::new(1, 4, 7)).unwrap();
        let k_rf = rf_kernel_train(&forest).unwrap();
        let tree = fit_tree(&x, &y, 4, 0).unwrap();
        let k_dt = tree_kernel(&tree, &tree.leaf_of);
        for q in 0..14 {
            let region_size: f64 = k_dt.values.row(q).iter().sum();
            for i in 0..14 {
                let expect = k_dt.values.get(q, i) / region_size;
                assert!((k_rf.values.get(q, i) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn row_sums_equal_tree_count() {
        for (seed, bootstrap) in [(3u64, false), (4, true), (5, true)] {
            let (x, y) = random_data(seed, 20, 2);
            let config = ForestConfig {
                bootstrap,
                ..ForestConfig::new(6, 5, seed)
            };
            let forest = fit_forest(&x, &y, &config).unwrap();
            let k = rf_kernel_train(&forest).unwrap();
            for q in 0..20 {
                let sum: f64 = k.values.row(q).iter().sum();
                assert!(
                    (sum - 6.0).abs() <= 1e-12,
                    "seed {seed} bootstrap {bootstrap}: row {q} sums to {sum}"
                );
            }
            // Query points off the training set obey the same identity.
            let (q, _) = random_data(seed + 100, 7, 2);
            let kq = rf_kernel(&forest, &forest.assign_all(&q)).unwrap();
            for row in 0..7 {
                let sum: f64 = kq.values.row(row).iter().sum();
                assert!((sum - 6.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn duplicate_trees_double_the_kernel() {
        let (x, y) = random_data(6, 12, 1);
        let one = fit_forest(&x, &y, &ForestConfig::new(1, 4, 9)).unwrap();
        let mut two = one.clone();
        two.trees.push(one.trees[0].clone());
        two.bootstrap_counts.push(one.bootstrap_counts[0].clone());
        two.b_count = 2;
        let k1 = rf_kernel_train(&one).unwrap();
        let k2 = rf_kernel_train(&two).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                assert!((k2.values.get(i, j) - 2.0 * k1.values.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_trees_forest_gac_equals_tree_gac() {
        let (x, y) = random_data(8, 16, 1);
        // Bootstrap off: every tree sees the same data and is identical.
        let forest = fit_forest(&x, &y, &ForestConfig::new(5, 6, 11)).unwrap();
        let k_rf = rf_kernel_train(&forest).unwrap();
        assert!(k_rf.symmetric);
        let gac_forest = gac_from_kernel(&k_rf).unwrap().value;
        let tree = &forest.trees[0];
        let gac_tree = gac_from_kernel(&tree_kernel(tree, &tree.leaf_of))
            .unwrap()
            .value;
        assert!(
            (gac_forest - gac_tree).abs() <= 1e-12,
            "{gac_forest} vs {gac_tree}"
        );
    }

    #[test]
    fn deterministic_across_runs() {
        let (x, y) = random_data(12, 18, 2);
        let config = ForestConfig {
            bootstrap: true,
            feature_subsample: true,
            ..ForestConfig::new(4, 5, 33)
        };
        let a = fit_forest(&x, &y, &config).unwrap();
        let b = fit_forest(&x, &y, &config).unwrap();
        assert_eq!(a.bootstrap_counts, b.bootstrap_counts);
        let ka = rf_kernel_train(&a).unwrap();
        let kb = rf_kernel_train(&b).unwrap();
        assert_eq!(ka.values, kb.values);
    }
}
