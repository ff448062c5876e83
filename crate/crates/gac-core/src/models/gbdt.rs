//! Gradient boosting with regression trees on the squared loss.
//!
//! Each stage fits a depth-limited tree to the momentum-smoothed
//! pseudo-residual: v <- momentum * v + (y - F), tree fits v, then
//! F <- F + learning_rate * tree(x). Momentum 0 recovers plain residual
//! boosting. The per-stage GAC hook receives the current stage tree's
//! normalized region kernel by default; a flag switches to the running
//! average of all stage kernels so far.

use crate::complexity::TrainingTrace;
use crate::error::{Error, Result};
use crate::kernels::NormalizedKernelMatrix;
use crate::numerics::Matrix;
use crate::smoothers::tree::{fit_tree_opts, tree_kernel, Partition, TreeOptions};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageKernel {
    /// Kernel of the tree fitted at this stage.
    StageTree,
    /// Entrywise mean of the normalized kernels of all stages so far.
    EnsembleSoFar,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GbdtConfig {
    pub stages: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub max_depth: usize,
    pub seed: u64,
    pub stage_kernel: StageKernel,
}

impl GbdtConfig {
    pub fn new(stages: usize, max_depth: usize, seed: u64) -> Self {
        GbdtConfig {
            stages,
            learning_rate: 0.01,
            momentum: 0.95,
            max_depth,
            seed,
            stage_kernel: StageKernel::StageTree,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GbdtModel {
    pub trees: Vec<Partition>,
    pub learning_rate: f64,
    pub momentum: f64,
}

impl GbdtModel {
    /// Ensemble prediction: sum of learning-rate-scaled stage outputs.
    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        let mut out = vec![0.0; x.rows()];
        for tree in &self.trees {
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.learning_rate * tree.predict(x.row(i));
            }
        }
        out
    }
}

/// Trains the boosted ensemble; the trace holds the training MSE after every
/// stage (L_0 is the MSE of the zero model) and one hook value per stage.
pub fn gbdt_train(
    x: &Matrix,
    y: &[f64],
    config: &GbdtConfig,
    mut gac_hook: impl FnMut(usize, &NormalizedKernelMatrix) -> f64,
) -> Result<(GbdtModel, TrainingTrace)> {
    if config.stages == 0 {
        return Err(Error::Domain("gbdt needs at least one stage".into()));
    }
    let n = x.rows();
    if n == 0 || y.len() != n {
        return Err(Error::Shape(format!(
            "gbdt_train: {} points but {} responses",
            n,
            y.len()
        )));
    }

    let mse = |f: &[f64]| -> f64 {
        y.iter()
            .zip(f)
            .map(|(t, p)| (t - p) * (t - p))
            .sum::<f64>()
            / n as f64
    };

    let mut predictions = vec![0.0; n];
    let mut velocity = vec![0.0; n];
    let mut trees = Vec::with_capacity(config.stages);
    let mut losses = vec![mse(&predictions)];
    let mut gacs = Vec::with_capacity(config.stages);
    let mut kernel_sum: Option<Matrix> = None;

    for stage in 1..=config.stages {
        for i in 0..n {
            velocity[i] = config.momentum * velocity[i] + (y[i] - predictions[i]);
        }
        let opts = TreeOptions {
            max_leaves: usize::MAX,
            max_depth: Some(config.max_depth),
            mtry: None,
            seed: config.seed ^ (stage as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        };
        let tree = fit_tree_opts(x, &velocity, &opts)?;
        for i in 0..n {
            predictions[i] += config.learning_rate * tree.predict(x.row(i));
        }
        losses.push(mse(&predictions));

        // Region co-membership kernels have a unit diagonal already.
        let stage_k = tree_kernel(&tree, &tree.leaf_of).values;
        let hook_kernel = match config.stage_kernel {
            StageKernel::StageTree => NormalizedKernelMatrix { values: stage_k },
            StageKernel::EnsembleSoFar => {
                let sum = match kernel_sum.take() {
                    None => stage_k,
                    Some(mut acc) => {
                        for i in 0..n {
                            for j in 0..n {
                                acc.set(i, j, acc.get(i, j) + stage_k.get(i, j));
                            }
                        }
                        acc
                    }
                };
                let mut avg = sum.clone();
                avg.scale(1.0 / stage as f64);
                kernel_sum = Some(sum);
                NormalizedKernelMatrix { values: avg }
            }
        };
        gacs.push(gac_hook(stage, &hook_kernel));
        trees.push(tree);
    }

    let model = GbdtModel {
        trees,
        learning_rate: config.learning_rate,
        momentum: config.momentum,
    };
    Ok((model, TrainingTrace::new(losses, gacs)?))
}
