//! CART regression trees grown best-first by variance reduction.
//!
//! Splits are axis-aligned with midpoint thresholds between consecutive
//! distinct sorted feature values. At every step the leaf/split pair with the
//! greatest reduction in within-leaf squared error is applied; ties break by
//! (feature index, threshold) inside a leaf and by leaf creation order across
//! leaves, so growth is fully deterministic. Growth stops at `max_leaves`, at
//! an optional depth cap, or when no improving split exists.

use crate::error::{Error, Result};
use crate::kernels::KernelMatrix;
use crate::numerics::Matrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Gains below this fraction of the root mean square of y are treated as
/// roundoff, not as improving splits.
const MIN_GAIN_FRACTION: f64 = 1e-12;

/// Binary split rules. Points with x[feature] <= threshold go left.
#[derive(Debug, Clone, Serialize)]
pub enum TreeNode {
    Leaf {
        region: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

/// One leaf region of a fitted tree.
#[derive(Debug, Clone, Serialize)]
pub struct Region {
    pub id: usize,
    pub members: Vec<usize>,
    pub mean: f64,
}

/// Leaf-region assignment of a fitted regression tree.
#[derive(Debug, Clone, Serialize)]
pub struct Partition {
    root: TreeNode,
    /// Training index -> region id.
    pub leaf_of: Vec<usize>,
    /// Regions indexed by id; disjoint and covering all training indices.
    pub regions: Vec<Region>,
}

impl Partition {
    /// Region id the point routes to.
    pub fn assign(&self, point: &[f64]) -> usize {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { region } => return *region,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if point[*feature] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn assign_all(&self, x: &Matrix) -> Vec<usize> {
        (0..x.rows()).map(|i| self.assign(x.row(i))).collect()
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    /// Mean response of the region the point falls in.
    pub fn predict(&self, point: &[f64]) -> f64 {
        self.regions[self.assign(point)].mean
    }

    /// JSON description of split rules and leaf membership, for debugging.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("partition serializes")
    }

    /// Returns a copy re-anchored to a new point set: same split rules, leaf
    /// membership/means recomputed by routing `x` and averaging `y` with the
    /// given per-point weights. Used for bootstrap forests.
    pub(crate) fn reanchor(&self, x: &Matrix, y: &[f64], weights: &[usize]) -> Result<Partition> {
        let leaf_of = self.assign_all(x);
        let n_regions = self.regions.len();
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_regions];
        let mut wsum = vec![0.0; n_regions];
        let mut wy = vec![0.0; n_regions];
        for (i, &r) in leaf_of.iter().enumerate() {
            members[r].push(i);
            wsum[r] += weights[i] as f64;
            wy[r] += weights[i] as f64 * y[i];
        }
        let regions = members
            .into_iter()
            .enumerate()
            .map(|(id, members)| Region {
                id,
                // Weighted mean over the fitted sample; falls back to the
                // original leaf mean when no weight routed here.
                mean: if wsum[id] > 0.0 {
                    wy[id] / wsum[id]
                } else {
                    self.regions[id].mean
                },
                members,
            })
            .collect();
        Ok(Partition {
            root: self.root.clone(),
            leaf_of,
            regions,
        })
    }
}

/// Growth limits and options.
#[derive(Debug, Clone)]
pub struct TreeOptions {
    pub max_leaves: usize,
    pub max_depth: Option<usize>,
    /// Number of candidate features per split; None tries all.
    pub mtry: Option<usize>,
    pub seed: u64,
}

impl TreeOptions {
    pub fn with_max_leaves(max_leaves: usize) -> Self {
        TreeOptions {
            max_leaves,
            max_depth: None,
            mtry: None,
            seed: 0,
        }
    }

    pub fn with_max_depth(max_depth: usize) -> Self {
        TreeOptions {
            max_leaves: usize::MAX,
            max_depth: Some(max_depth),
            mtry: None,
            seed: 0,
        }
    }
}

/// Fits a regression tree best-first up to `max_leaves` leaves.
pub fn fit_tree(x: &Matrix, y: &[f64], max_leaves: usize, seed: u64) -> Result<Partition> {
    fit_tree_opts(
        x,
        y,
        &TreeOptions {
            seed,
            ..TreeOptions::with_max_leaves(max_leaves)
        },
    )
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    reduction: f64,
}

enum ArenaNode {
    Leaf,
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

struct LeafState {
    node: usize,
    indices: Vec<usize>,
    depth: usize,
    best: Option<Candidate>,
}

pub fn fit_tree_opts(x: &Matrix, y: &[f64], opts: &TreeOptions) -> Result<Partition> {
    let n = x.rows();
    if n == 0 || y.is_empty() {
        return Err(Error::EmptyInput("fit_tree: empty data".into()));
    }
    if y.len() != n {
        return Err(Error::Shape(format!(
            "fit_tree: {} points but {} responses",
            n,
            y.len()
        )));
    }
    if opts.max_leaves == 0 {
        return Err(Error::Domain("max_leaves must be >= 1".into()));
    }

    let mean_sq = y.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let min_gain = MIN_GAIN_FRACTION * mean_sq.max(f64::MIN_POSITIVE);

    let mut arena: Vec<ArenaNode> = vec![ArenaNode::Leaf];
    let mut leaves: Vec<LeafState> = vec![LeafState {
        node: 0,
        indices: (0..n).collect(),
        depth: 0,
        best: None,
    }];
    let mut evaluated = vec![false; 1];

    while leaves.len() < opts.max_leaves {
        // Evaluate freshly created leaves.
        for (slot, leaf) in leaves.iter_mut().enumerate() {
            if !evaluated[slot] {
                let depth_ok = opts.max_depth.map_or(true, |d| leaf.depth < d);
                leaf.best = if depth_ok {
                    best_split(x, y, &leaf.indices, opts, leaf.node, min_gain)
                } else {
                    None
                };
                evaluated[slot] = true;
            }
        }
        // Highest reduction wins; earlier leaf slots break ties.
        let chosen = leaves
            .iter()
            .enumerate()
            .filter_map(|(slot, l)| l.best.map(|c| (slot, c)))
            .max_by(|a, b| {
                a.1.reduction
                    .partial_cmp(&b.1.reduction)
                    .expect("finite reductions")
                    .then(b.0.cmp(&a.0))
            });
        let Some((slot, cand)) = chosen else {
            break;
        };

        let parent = &leaves[slot];
        let mut left_idx = Vec::new();
        let mut right_idx = Vec::new();
        for &i in &parent.indices {
            if x.get(i, cand.feature) <= cand.threshold {
                left_idx.push(i);
            } else {
                right_idx.push(i);
            }
        }
        debug_assert!(!left_idx.is_empty() && !right_idx.is_empty());

        let left_node = arena.len();
        arena.push(ArenaNode::Leaf);
        let right_node = arena.len();
        arena.push(ArenaNode::Leaf);
        arena[parent.node] = ArenaNode::Split {
            feature: cand.feature,
            threshold: cand.threshold,
            left: left_node,
            right: right_node,
        };

        let depth = parent.depth + 1;
        leaves[slot] = LeafState {
            node: left_node,
            indices: left_idx,
            depth,
            best: None,
        };
        evaluated[slot] = false;
        leaves.push(LeafState {
            node: right_node,
            indices: right_idx,
            depth,
            best: None,
        });
        evaluated.push(false);
    }

    // Number regions by depth-first (left-first) traversal of the rules.
    let mut region_of_node = vec![usize::MAX; arena.len()];
    let mut next_region = 0usize;
    let mut stack = vec![0usize];
    while let Some(node) = stack.pop() {
        match arena[node] {
            ArenaNode::Leaf => {
                region_of_node[node] = next_region;
                next_region += 1;
            }
            ArenaNode::Split { left, right, .. } => {
                stack.push(right);
                stack.push(left);
            }
        }
    }

    let root = build_tree(&arena, &region_of_node, 0);
    let mut leaf_of = vec![0usize; n];
    let mut regions: Vec<Region> = (0..next_region)
        .map(|id| Region {
            id,
            members: Vec::new(),
            mean: 0.0,
        })
        .collect();
    for leaf in &leaves {
        let region = region_of_node[leaf.node];
        let mut sum = 0.0;
        for &i in &leaf.indices {
            leaf_of[i] = region;
            sum += y[i];
        }
        let mut members = leaf.indices.clone();
        members.sort_unstable();
        regions[region].mean = sum / leaf.indices.len() as f64;
        regions[region].members = members;
    }

    Ok(Partition {
        root,
        leaf_of,
        regions,
    })
}

fn build_tree(arena: &[ArenaNode], region_of_node: &[usize], node: usize) -> TreeNode {
    match arena[node] {
        ArenaNode::Leaf => TreeNode::Leaf {
            region: region_of_node[node],
        },
        ArenaNode::Split {
            feature,
            threshold,
            left,
            right,
        } => TreeNode::Split {
            feature,
            threshold,
            left: Box::new(build_tree(arena, region_of_node, left)),
            right: Box::new(build_tree(arena, region_of_node, right)),
        },
    }
}

/// Best (feature, midpoint threshold) by squared-error reduction over the
/// leaf members; the scan over sorted prefix sums makes each feature O(n log n).
fn best_split(
    x: &Matrix,
    y: &[f64],
    indices: &[usize],
    opts: &TreeOptions,
    node_id: usize,
    min_gain: f64,
) -> Option<Candidate> {
    let m = indices.len();
    if m < 2 {
        return None;
    }
    let d = x.cols();
    let features: Vec<usize> = match opts.mtry {
        Some(k) if k < d => {
            // Deterministic per (seed, node): scheduling cannot change splits.
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (node_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut all: Vec<usize> = (0..d).collect();
            all.shuffle(&mut rng);
            let mut chosen = all[..k].to_vec();
            chosen.sort_unstable();
            chosen
        }
        _ => (0..d).collect(),
    };

    let total_sum: f64 = indices.iter().map(|&i| y[i]).sum();
    let parent_score = total_sum * total_sum / m as f64;

    let mut best: Option<Candidate> = None;
    for &feature in &features {
        let mut order: Vec<usize> = indices.to_vec();
        order.sort_by(|&a, &b| {
            x.get(a, feature)
                .partial_cmp(&x.get(b, feature))
                .expect("finite features")
                .then(a.cmp(&b))
        });
        let mut left_sum = 0.0;
        for (pos, &i) in order.iter().enumerate().take(m - 1) {
            left_sum += y[i];
            let v = x.get(i, feature);
            let v_next = x.get(order[pos + 1], feature);
            if v == v_next {
                continue;
            }
            let threshold = 0.5 * (v + v_next);
            let n_l = (pos + 1) as f64;
            let n_r = (m - pos - 1) as f64;
            let right_sum = total_sum - left_sum;
            let reduction =
                left_sum * left_sum / n_l + right_sum * right_sum / n_r - parent_score;
            if reduction <= min_gain {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => {
                    reduction > b.reduction
                        || (reduction == b.reduction
                            && (feature, threshold) < (b.feature, b.threshold))
                }
            };
            if better {
                best = Some(Candidate {
                    feature,
                    threshold,
                    reduction,
                });
            }
        }
    }
    best
}

/// Binary co-membership kernel: entry (q, i) is 1 when query point q and
/// training point i share a region. On training data this is block-diagonal
/// up to permutation.
pub fn tree_kernel(p: &Partition, query_assignment: &[usize]) -> KernelMatrix {
    let n = p.leaf_of.len();
    let mut values = Matrix::zeros(query_assignment.len(), n);
    for (q, &region) in query_assignment.iter().enumerate() {
        for &i in &p.regions[region].members {
            values.set(q, i, 1.0);
        }
    }
    KernelMatrix {
        values,
        symmetric: *query_assignment == p.leaf_of,
    }
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
    fn single_leaf_holds_everything() {
        let x = points_1d(&[0.0, 1.0, 2.0]);
        let p = fit_tree(&x, &[1.0, 2.0, 3.0], 1, 0).unwrap();
        assert_eq!(p.n_regions(), 1);
        assert_eq!(p.regions[0].members, vec![0, 1, 2]);
        assert!((p.regions[0].mean - 2.0).abs() < 1e-15);
    }

    // Exhaustive split-search oracle for the canonical step function.
    #[test]
    fn step_function_splits_between_one_and_two() {
        let x = points_1d(&[0.0, 1.0, 2.0, 3.0]);
        let y = [0.0, 0.0, 1.0, 1.0];
        let p = fit_tree(&x, &y, 2, 0).unwrap();
        assert_eq!(p.n_regions(), 2);
        match &p.root {
            TreeNode::Split { threshold, .. } => {
                assert!(*threshold > 1.0 && *threshold < 2.0, "threshold {threshold}");
            }
            other => panic!("expected split at root, got {other:?}"),
        }
        assert_eq!(p.regions[p.leaf_of[0]].members, vec![0, 1]);
        assert_eq!(p.regions[p.leaf_of[2]].members, vec![2, 3]);
    }

    #[test]
    fn full_growth_isolates_every_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 12;
        let x = Matrix::from_fn(n, 1, |_, _| rng.random_range(-5.0..5.0));
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = fit_tree(&x, &y, n, 0).unwrap();
        assert_eq!(p.n_regions(), n);
        for r in &p.regions {
            assert_eq!(r.members.len(), 1);
        }
    }

    #[test]
    fn constant_response_never_splits() {
        let x = points_1d(&[0.0, 1.0, 2.0, 3.0]);
        let p = fit_tree(&x, &[2.0, 2.0, 2.0, 2.0], 4, 0).unwrap();
        assert_eq!(p.n_regions(), 1);
    }

    #[test]
    fn empty_data_rejected() {
        let x = Matrix::zeros(0, 0);
        assert!(fit_tree(&x, &[], 3, 0).is_err());
    }

    #[test]
    fn kernel_one_region_is_all_ones() {
        let x = points_1d(&[0.0, 1.0]);
        let p = fit_tree(&x, &[1.0, 1.0], 1, 0).unwrap();
        let k = tree_kernel(&p, &p.leaf_of);
        assert!(k.symmetric);
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(k.values.get(i, j), 1.0);
            }
        }
    }

    #[test]
    fn two_block_kernel_gac() {
        let x = points_1d(&[0.0, 1.0, 10.0, 11.0]);
        let y = [0.0, 0.0, 1.0, 1.0];
        let p = fit_tree(&x, &y, 2, 0).unwrap();
        let k = tree_kernel(&p, &p.leaf_of);
        let gac = gac_from_kernel(&k).unwrap().value;
        assert!((gac - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn singleton_regions_reach_gac_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 10;
        let x = Matrix::from_fn(n, 1, |_, _| rng.random_range(-5.0..5.0));
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = fit_tree(&x, &y, n, 0).unwrap();
        let k = tree_kernel(&p, &p.leaf_of);
        assert_eq!(gac_from_kernel(&k).unwrap().value, 1.0);
    }

    // Greedy growth strictly increases the training-kernel GAC per split.
    #[test]
    fn growth_sequence_strictly_increases_gac() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let n = 20;
        let x = Matrix::from_fn(n, 1, |_, _| rng.random_range(-5.0..5.0));
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut last = -1.0;
        for leaves in 1..=n {
            let p = fit_tree(&x, &y, leaves, 0).unwrap();
            assert_eq!(p.n_regions(), leaves);
            let gac = gac_from_kernel(&tree_kernel(&p, &p.leaf_of)).unwrap().value;
            assert!(gac > last, "leaves={leaves}: {gac} <= {last}");
            last = gac;
        }
        assert_eq!(last, 1.0);
    }

    #[test]
    fn max_depth_caps_growth() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let n = 32;
        let x = Matrix::from_fn(n, 1, |_, _| rng.random_range(-5.0..5.0));
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = fit_tree_opts(&x, &y, &TreeOptions::with_max_depth(2)).unwrap();
        assert!(p.n_regions() <= 4);
    }

    #[test]
    fn assign_routes_new_points() {
        let x = points_1d(&[0.0, 1.0, 2.0, 3.0]);
        let y = [0.0, 0.0, 1.0, 1.0];
        let p = fit_tree(&x, &y, 2, 0).unwrap();
        assert_eq!(p.assign(&[-5.0]), p.leaf_of[0]);
        assert_eq!(p.assign(&[99.0]), p.leaf_of[3]);
        assert!((p.predict(&[99.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn json_export_mentions_rules_and_members() {
        let x = points_1d(&[0.0, 1.0, 2.0, 3.0]);
        let p = fit_tree(&x, &[0.0, 0.0, 1.0, 1.0], 2, 0).unwrap();
        let json = p.to_json();
        assert!(json.contains("threshold"));
        assert!(json.contains("members"));
    }
}
