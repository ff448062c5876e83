//! One-hidden-layer MLP (ReLU hidden, linear output) trained with momentum
//! SGD on the squared loss, with exact per-example Jacobians for the
//! empirical tangent kernel.
//!
//! Parameters are ordered [W1 row-major, b1, W2 row-major, b2] wherever a
//! flat view appears, so Jacobian columns line up across calls.

use crate::complexity::{GradientSnapshot, TrainingTrace};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
pub struct MlpModel {
    /// h x d first-layer weights.
    pub w1: Matrix,
    pub b1: Vec<f64>,
    /// c x h output weights.
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl MlpModel {
    pub fn width(&self) -> usize {
        self.w1.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.rows()
    }

    pub fn param_count(&self) -> usize {
        let (h, d, c) = (self.width(), self.input_dim(), self.output_dim());
        h * d + h + c * h + c
    }

    fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let h = self.width();
        let c = self.output_dim();
        let mut pre = vec![0.0; h];
        let mut hidden = vec![0.0; h];
        for j in 0..h {
            let mut s = self.b1[j];
            let row = self.w1.row(j);
            for (m, &xv) in x.iter().enumerate() {
                s += row[m] * xv;
            }
            pre[j] = s;
            hidden[j] = s.max(0.0);
        }
        let mut out = vec![0.0; c];
        for k in 0..c {
            let mut s = self.b2[k];
            let row = self.w2.row(k);
            for j in 0..h {
                s += row[j] * hidden[j];
            }
            out[k] = s;
        }
        (pre, hidden, out)
    }

    /// Predictions, one output row per input row.
    pub fn predict(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), self.output_dim());
        for i in 0..x.rows() {
            let (_, _, f) = self.forward(x.row(i));
            out.row_mut(i).copy_from_slice(&f);
        }
        out
    }

    /// Squared loss (1/(2n)) sum_i ||f(x_i) - y_i||^2.
    pub fn loss(&self, x: &Matrix, y: &Matrix) -> f64 {
        let mut total = 0.0;
        for i in 0..x.rows() {
            let (_, _, f) = self.forward(x.row(i));
            for (k, &t) in y.row(i).iter().enumerate() {
                let e = f[k] - t;
                total += e * e;
            }
        }
        total / (2.0 * x.rows() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MlpInit {
    /// He-scaled Gaussian draws for every block.
    Fresh,
    /// Copy a smaller trained model into the leading rows/columns,
    /// He-initialize the rest. Mirrors sequential capacity sweeps.
    Warm,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpConfig {
    pub width: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    /// 1 means full batch.
    pub n_batches: usize,
    pub seed: u64,
    pub init: MlpInit,
    /// Invoke the GAC hook every this many epochs.
    pub gac_every: usize,
    /// Size of the random subsample handed to the hook.
    pub gac_subsample: usize,
}

impl MlpConfig {
    pub fn new(width: usize, seed: u64) -> Self {
        MlpConfig {
            width,
            learning_rate: 0.01,
            momentum: 0.95,
            epochs: 100,
            n_batches: 1,
            seed,
            init: MlpInit::Fresh,
            gac_every: 5,
            gac_subsample: 20,
        }
    }
}

fn he_init(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let normal = Normal::new(0.0, (2.0 / cols as f64).sqrt()).expect("valid std");
    Matrix::from_fn(rows, cols, |_, _| normal.sample(rng))
}

fn init_model(
    config: &MlpConfig,
    d: usize,
    c: usize,
    warm_from: Option<&MlpModel>,
    rng: &mut ChaCha8Rng,
) -> Result<MlpModel> {
    let h = config.width;
    let mut model = MlpModel {
        w1: he_init(rng, h, d),
        b1: vec![0.0; h],
        w2: he_init(rng, c, h),
        b2: vec![0.0; c],
    };
    if config.init == MlpInit::Warm {
        let prev = warm_from.ok_or_else(|| {
            Error::Config("warm init requested but no previous model supplied".into())
        })?;
        if prev.input_dim() != d || prev.output_dim() != c {
            return Err(Error::Shape(
                "warm-start model has incompatible input/output dimensions".into(),
            ));
        }
        let h_prev = prev.width().min(h);
        for j in 0..h_prev {
            model.w1.row_mut(j).copy_from_slice(prev.w1.row(j));
            model.b1[j] = prev.b1[j];
            for k in 0..c {
                model.w2.set(k, j, prev.w2.get(k, j));
            }
        }
        model.b2 = prev.b2.clone();
    }
    Ok(model)
}

/// Trains the network and returns the trace sampled at the GAC cadence:
/// losses [L_0, L_c, L_2c, ..., L_T] and one hook value per checkpoint. The
/// hook receives the epoch and the Jacobian snapshot of a fresh random
/// subsample and returns the complexity value to record.
pub fn mlp_train(
    config: &MlpConfig,
    x: &Matrix,
    y: &Matrix,
    warm_from: Option<&MlpModel>,
    mut gac_hook: impl FnMut(usize, &GradientSnapshot) -> f64,
) -> Result<(MlpModel, TrainingTrace)> {
    let n = x.rows();
    if n == 0 {
        return Err(Error::EmptyInput("mlp_train: empty data".into()));
    }
    if y.rows() != n {
        return Err(Error::Shape(format!(
            "mlp_train: {} inputs but {} target rows",
            n,
            y.rows()
        )));
    }
    if config.width == 0 || config.n_batches == 0 || config.gac_every == 0 {
        return Err(Error::Config(
            "width, n_batches, and gac_every must be positive".into(),
        ));
    }
    let d = x.cols();
    let c = y.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = init_model(config, d, c, warm_from, &mut rng)?;

    let h = config.width;
    let mut v_w1 = Matrix::zeros(h, d);
    let mut v_b1 = vec![0.0; h];
    let mut v_w2 = Matrix::zeros(c, h);
    let mut v_b2 = vec![0.0; c];

    let mut losses = vec![model.loss(x, y)];
    let mut gacs = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(n.div_ceil(config.n_batches)) {
            let scale = 1.0 / batch.len() as f64;
            let mut g_w1 = Matrix::zeros(h, d);
            let mut g_b1 = vec![0.0; h];
            let mut g_w2 = Matrix::zeros(c, h);
            let mut g_b2 = vec![0.0; c];
            for &i in batch {
                let xi = x.row(i);
                let (pre, hidden, out) = model.forward(xi);
                let err: Vec<f64> = out
                    .iter()
                    .zip(y.row(i))
                    .map(|(f, t)| (f - t) * scale)
                    .collect();
                for k in 0..c {
                    g_b2[k] += err[k];
                    let row = g_w2.row_mut(k);
                    for j in 0..h {
                        row[j] += err[k] * hidden[j];
                    }
                }
                for j in 0..h {
                    if pre[j] <= 0.0 {
                        continue;
                    }
                    let mut delta = 0.0;
                    for k in 0..c {
                        delta += model.w2.get(k, j) * err[k];
                    }
                    g_b1[j] += delta;
                    let row = g_w1.row_mut(j);
                    for (m, &xv) in xi.iter().enumerate() {
                        row[m] += delta * xv;
                    }
                }
            }
            // Classical momentum: v <- m v - lr g; theta <- theta + v.
            let lr = config.learning_rate;
            let m = config.momentum;
            for j in 0..h {
                for col in 0..d {
                    let nv = m * v_w1.get(j, col) - lr * g_w1.get(j, col);
                    v_w1.set(j, col, nv);
                    model.w1.set(j, col, model.w1.get(j, col) + nv);
                }
                v_b1[j] = m * v_b1[j] - lr * g_b1[j];
                model.b1[j] += v_b1[j];
            }
            for k in 0..c {
                for j in 0..h {
                    let nv = m * v_w2.get(k, j) - lr * g_w2.get(k, j);
                    v_w2.set(k, j, nv);
                    model.w2.set(k, j, model.w2.get(k, j) + nv);
                }
                v_b2[k] = m * v_b2[k] - lr * g_b2[k];
                model.b2[k] += v_b2[k];
            }
        }

        let epoch_loss = model.loss(x, y);
        if !epoch_loss.is_finite() {
            return Err(Error::TrainingDiverged {
                step: epoch,
                last_losses: losses,
            });
        }
        if epoch % config.gac_every == 0 || epoch == config.epochs {
            let subsample = sample_indices(&mut rng, n, config.gac_subsample);
            let sub_x = Matrix::from_rows(
                &subsample.iter().map(|&i| x.row(i).to_vec()).collect::<Vec<_>>(),
            )?;
            let snapshot = mlp_ntk_features(&model, &sub_x)?;
            gacs.push(gac_hook(epoch, &snapshot));
            losses.push(epoch_loss);
        }
    }

    let trace = TrainingTrace::new(losses, gacs)?;
    Ok((model, trace))
}

fn sample_indices(rng: &mut ChaCha8Rng, n: usize, want: usize) -> Vec<usize> {
    if want >= n {
        return (0..n).collect();
    }
    let mut all: Vec<usize> = (0..n).collect();
    all.shuffle(rng);
    let mut chosen = all[..want].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Exact c x p Jacobians of the outputs with respect to every parameter,
/// one snapshot row per input, flattened [W1, b1, W2, b2] row-wise.
pub fn mlp_ntk_features(model: &MlpModel, x_subset: &Matrix) -> Result<GradientSnapshot> {
    if x_subset.cols() != model.input_dim() {
        return Err(Error::Shape(format!(
            "mlp_ntk_features: inputs have dimension {}, model expects {}",
            x_subset.cols(),
            model.input_dim()
        )));
    }
    let h = model.width();
    let d = model.input_dim();
    let c = model.output_dim();
    let p = model.param_count();
    let w1_len = h * d;
    let b1_off = w1_len;
    let w2_off = w1_len + h;
    let b2_off = w2_off + c * h;

    let mut jacobians = Vec::with_capacity(x_subset.rows());
    for i in 0..x_subset.rows() {
        let xi = x_subset.row(i);
        let (pre, hidden, _) = model.forward(xi);
        let mut jac = Matrix::zeros(c, p);
        for k in 0..c {
            let row = jac.row_mut(k);
            for j in 0..h {
                if pre[j] > 0.0 {
                    let gate = model.w2.get(k, j);
                    for (m, &xv) in xi.iter().enumerate() {
                        row[j * d + m] = gate * xv;
                    }
                    row[b1_off + j] = gate;
                }
                row[w2_off + k * h + j] = hidden[j];
            }
            row[b2_off + k] = 1.0;
        }
        jacobians.push(jac);
    }
    GradientSnapshot::from_jacobians(&jacobians)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy_model(seed: u64, d: usize, h: usize, c: usize) -> MlpModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MlpModel {
            w1: Matrix::from_fn(h, d, |_, _| rng.random_range(-1.0..1.0)),
            b1: (0..h).map(|_| rng.random_range(-0.5..0.5)).collect(),
            w2: Matrix::from_fn(c, h, |_, _| rng.random_range(-1.0..1.0)),
            b2: (0..c).map(|_| rng.random_range(-0.5..0.5)).collect(),
        }
    }

    #[test]
    fn output_bias_columns_are_identity_pattern() {
        let model = toy_model(1, 3, 4, 2);
        let x = Matrix::from_rows(&[vec![0.1, -0.2, 0.4]]).unwrap();
        let snap = mlp_ntk_features(&model, &x).unwrap();
        let p = model.param_count();
        let c = 2;
        let row = snap.rows().row(0);
        // Jacobian row k, flattened: entry at (k, p - c + k') is delta_{k k'}.
        for k in 0..c {
            for k2 in 0..c {
                let v = row[k * p + (p - c + k2)];
                assert_eq!(v, if k == k2 { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn dead_unit_has_zero_first_layer_gradient() {
        let mut model = toy_model(2, 2, 3, 1);
        // Force hidden unit 0 to a negative pre-activation for this input.
        let x = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        model.w1.set(0, 0, -5.0);
        model.w1.set(0, 1, -5.0);
        model.b1[0] = -1.0;
        let snap = mlp_ntk_features(&model, &x).unwrap();
        let d = 2;
        let row = snap.rows().row(0);
        for m in 0..d {
            assert_eq!(row[m], 0.0); // W1 row 0 block
        }
        let b1_off = 3 * d;
        assert_eq!(row[b1_off], 0.0);
    }

    // Central finite-difference oracle over random coordinates of every
    // parameter block.
    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..5 {
            let (d, h, c) = (3, 4, 2);
            let model = toy_model(100 + trial, d, h, c);
            let x = Matrix::from_fn(5, d, |_, _| rng.random_range(-1.0..1.0));
            let snap = mlp_ntk_features(&model, &x).unwrap();
            let p = model.param_count();
            let step = 1e-4;

            let perturb = |idx: usize, eps: f64| -> MlpModel {
                let mut m = model.clone();
                let w1_len = h * d;
                let w2_off = w1_len + h;
                let b2_off = w2_off + c * h;
                if idx < w1_len {
                    let (r, cc) = (idx / d, idx % d);
                    m.w1.set(r, cc, m.w1.get(r, cc) + eps);
                } else if idx < w2_off {
                    m.b1[idx - w1_len] += eps;
                } else if idx < b2_off {
                    let rel = idx - w2_off;
                    let (r, cc) = (rel / h, rel % h);
                    m.w2.set(r, cc, m.w2.get(r, cc) + eps);
                } else {
                    m.b2[idx - b2_off] += eps;
                }
                m
            };

            for i in 0..x.rows() {
                let row = snap.rows().row(i);
                for _ in 0..20 {
                    let idx = rng.random_range(0..p);
                    let k = rng.random_range(0..c);
                    let plus = perturb(idx, step);
                    let minus = perturb(idx, -step);
                    let (_, _, fp) = plus.forward(x.row(i));
                    let (_, _, fm) = minus.forward(x.row(i));
                    let fd = (fp[k] - fm[k]) / (2.0 * step);
                    let analytic = row[k * p + idx];
                    assert!(
                        (fd - analytic).abs() <= 1e-4 * analytic.abs().max(1.0),
                        "trial {trial} input {i} param {idx} output {k}: {analytic} vs {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let mut config = MlpConfig::new(4, 3);
        config.epochs = 0;
        let x = Matrix::from_fn(6, 2, |i, j| (i + j) as f64 * 0.1);
        let y = Matrix::from_fn(6, 1, |i, _| i as f64 * 0.2);
        let (model, trace) = mlp_train(&config, &x, &y, None, |_, _| 0.0).unwrap();
        assert_eq!(trace.losses.len(), 1);
        assert!(trace.gacs.is_empty());
        assert!((trace.losses[0] - model.loss(&x, &y)).abs() < 1e-12);
    }

    // Scalar-descent oracle: a single sample with a small learning rate must
    // descend monotonically.
    #[test]
    fn tiny_problem_descends() {
        let mut config = MlpConfig::new(1, 5);
        config.learning_rate = 0.05;
        config.momentum = 0.0;
        config.epochs = 40;
        config.gac_every = 1;
        config.gac_subsample = 1;
        let x = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let y = Matrix::from_rows(&[vec![2.0]]).unwrap();
        let (_, trace) = mlp_train(&config, &x, &y, None, |_, _| 0.0).unwrap();
        for w in trace.losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "loss increased: {:?}", w);
        }
    }

    #[test]
    fn warm_start_copies_previous_weights() {
        let mut small_cfg = MlpConfig::new(2, 7);
        small_cfg.epochs = 3;
        small_cfg.gac_every = 1;
        let x = Matrix::from_fn(8, 2, |i, j| ((i * 2 + j) % 5) as f64 * 0.3 - 0.6);
        let y = Matrix::from_fn(8, 1, |i, _| (i % 3) as f64 * 0.5);
        let (small, _) = mlp_train(&small_cfg, &x, &y, None, |_, _| 0.0).unwrap();

        let mut big_cfg = MlpConfig::new(5, 8);
        big_cfg.epochs = 0;
        big_cfg.init = MlpInit::Warm;
        let (big, _) = mlp_train(&big_cfg, &x, &y, Some(&small), |_, _| 0.0).unwrap();
        for j in 0..2 {
            assert_eq!(big.w1.row(j), small.w1.row(j));
            assert_eq!(big.b1[j], small.b1[j]);
            assert_eq!(big.w2.get(0, j), small.w2.get(0, j));
        }
        assert_eq!(big.b2, small.b2);

        // Warm init without a donor model is a config error.
        assert!(mlp_train(&big_cfg, &x, &y, None, |_, _| 0.0).is_err());
    }

    #[test]
    fn divergence_carries_finite_prefix() {
        let mut config = MlpConfig::new(4, 9);
        config.learning_rate = 1e6;
        config.epochs = 50;
        config.gac_every = 1;
        let x = Matrix::from_fn(6, 2, |i, j| (i + j) as f64);
        let y = Matrix::from_fn(6, 1, |i, _| i as f64);
        match mlp_train(&config, &x, &y, None, |_, _| 0.0) {
            Err(Error::TrainingDiverged { step, last_losses }) => {
                assert!(step >= 1);
                assert!(last_losses.iter().all(|l| l.is_finite()));
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn hook_sees_cadence_epochs() {
        let mut config = MlpConfig::new(3, 10);
        config.epochs = 7;
        config.gac_every = 3;
        config.gac_subsample = 4;
        let x = Matrix::from_fn(10, 2, |i, j| (i as f64 * 0.1) - (j as f64 * 0.05));
        let y = Matrix::from_fn(10, 1, |i, _| (i % 2) as f64);
        let mut seen = Vec::new();
        let (_, trace) = mlp_train(&config, &x, &y, None, |epoch, snap| {
            seen.push((epoch, snap.n()));
            0.5
        })
        .unwrap();
        assert_eq!(seen.iter().map(|&(e, _)| e).collect::<Vec<_>>(), vec![3, 6, 7]);
        assert!(seen.iter().all(|&(_, n)| n == 4));
        assert_eq!(trace.losses.len(), 4);
        assert_eq!(trace.gacs, vec![0.5, 0.5, 0.5]);
    }
}
