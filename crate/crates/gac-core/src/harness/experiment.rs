//! Experiment orchestration and CSV emission.
//!
//! Eight experiment ids: three hyperparameter studies (fig1: kernel
//! regression across d/p/l/n; fig2: the length-scale vs regularization
//! counter-example; fig3: kNN/tree/forest across their capacity knobs) and
//! five desk-scale double-descent runs (random Fourier features, random
//! forests, MLPs on two image sets, gradient boosting). Sample sizes and
//! grids default to desk scale and are config knobs.
//!
//! Every cell is a pure function of (config, input files, seed); rows are
//! emitted in (seed, sweep, measure) order, so re-running a config
//! reproduces the CSV byte-for-byte except for the runtime_ms column.
//!
//! Emitted ENP, GENP-V, and GENP-RX values are divided by n for direct
//! comparison with the GAC, matching the figure convention.

use crate::baselines::{enp_normalized, genp_rx, genp_v_normalized, param_norm, ErrorSummary, SmootherMatrices};
use crate::complexity::{
    gac_from_kernel, gac_from_normalized, matrix_entropy, total_gac, EntropyKind,
};
use crate::error::{Error, Result};
use crate::gp::{gp_posterior, GpProblem};
use crate::harness::cifar::{load_cifar10, CIFAR_CAT, CIFAR_DOG};
use crate::harness::dataset::{gen_gaussian, gen_smooth, Dataset};
use crate::harness::idx::load_idx;
use crate::kernels::{kernel_matrix, normalize, ntk_gram, KernelMatrix, KernelSpec};
use crate::models::{
    gbdt_train, krr_fit, krr_smoothers, mlp_train, rff_apply, rff_draw,
    rff_fit_multi, GbdtConfig, MlpConfig, MlpInit,
};
use crate::numerics::Matrix;
use crate::smoothers::{
    fit_forest, fit_tree, knn_kernel, rf_kernel, rf_kernel_train, smoother_matrix, tree_kernel, ForestConfig,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    Fig1,
    Fig2,
    Fig3,
    DdRff,
    DdRf,
    DdMlpMnist,
    DdMlpCifar,
    DdGbdt,
}

impl ExperimentId {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentId::Fig1 => "fig1",
            ExperimentId::Fig2 => "fig2",
            ExperimentId::Fig3 => "fig3",
            ExperimentId::DdRff => "dd-rff",
            ExperimentId::DdRf => "dd-rf",
            ExperimentId::DdMlpMnist => "dd-mlp-mnist",
            ExperimentId::DdMlpCifar => "dd-mlp-cifar",
            ExperimentId::DdGbdt => "dd-gbdt",
        }
    }
}

impl std::str::FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "fig1" => ExperimentId::Fig1,
            "fig2" => ExperimentId::Fig2,
            "fig3" => ExperimentId::Fig3,
            "dd-rff" => ExperimentId::DdRff,
            "dd-rf" => ExperimentId::DdRf,
            "dd-mlp-mnist" => ExperimentId::DdMlpMnist,
            "dd-mlp-cifar" => ExperimentId::DdMlpCifar,
            "dd-gbdt" => ExperimentId::DdGbdt,
            other => {
                return Err(Error::Config(format!(
                    "unknown experiment id '{other}' (expected fig1, fig2, fig3, dd-rff, dd-rf, \
                     dd-mlp-mnist, dd-mlp-cifar, or dd-gbdt)"
                )))
            }
        })
    }
}

/// Where the experiment data comes from. Image experiments fall back to the
/// smooth synthetic generator when no files are configured, so everything
/// runs without downloads.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DataSource {
    Synthetic,
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
    Cifar {
        batch: PathBuf,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub data: DataSource,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Overrides the experiment's default sweep grid.
    #[serde(default)]
    pub sweep: Option<Vec<f64>>,
    #[serde(default)]
    pub n_train: Option<usize>,
    #[serde(default)]
    pub n_test: Option<usize>,
    /// Restrict emitted measures (names as they appear in the CSV).
    #[serde(default)]
    pub measures: Option<Vec<String>>,
    /// dd-rf: enable bootstrap resampling (the appendix variant).
    #[serde(default)]
    pub bootstrap: bool,
    /// dd-mlp: epochs per width.
    #[serde(default)]
    pub epochs: Option<usize>,
    /// dd-gbdt: boosting stages.
    #[serde(default)]
    pub stages: Option<usize>,
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentId) -> Self {
        ExperimentConfig {
            experiment,
            seeds: default_seeds(),
            data: DataSource::Synthetic,
            out_dir: None,
            sweep: None,
            n_train: None,
            n_test: None,
            measures: None,
            bootstrap: false,
            epochs: None,
            stages: None,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(s)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list must be nonempty".into()));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.is_empty() {
                return Err(Error::Config("sweep grid must be nonempty".into()));
            }
            if sweep.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                return Err(Error::Config(
                    "sweep values must be positive and finite".into(),
                ));
            }
        }
        Ok(())
    }

    fn wants(&self, measure: &str) -> bool {
        match &self.measures {
            None => true,
            Some(list) => list.iter().any(|m| m == measure),
        }
    }
}

/// One CSV record.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub seed: u64,
    pub sweep_name: String,
    pub sweep_value: f64,
    pub measure: String,
    pub value: f64,
    pub n: usize,
    pub runtime_ms: u64,
}

pub const CSV_HEADER: &str = "experiment,seed,sweep_name,sweep_value,measure,value,n,runtime_ms";

pub fn write_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut out = String::with_capacity(rows.len() * 48 + 64);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.experiment, r.seed, r.sweep_name, r.sweep_value, r.measure, r.value, r.n, r.runtime_ms
        ));
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

pub fn parse_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            if line != CSV_HEADER {
                return Err(Error::Format {
                    offset: 0,
                    message: format!("unexpected CSV header: {line}"),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Format {
                offset: lineno as u64,
                message: format!("expected 8 fields, got {}", fields.len()),
            });
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Format {
                offset: lineno as u64,
                message: format!("bad float '{s}'"),
            })
        };
        let parse_u = |s: &str| -> Result<u64> {
            s.parse().map_err(|_| Error::Format {
                offset: lineno as u64,
                message: format!("bad integer '{s}'"),
            })
        };
        rows.push(ResultRow {
            experiment: fields[0].to_string(),
            seed: parse_u(fields[1])?,
            sweep_name: fields[2].to_string(),
            sweep_value: parse_f(fields[3])?,
            measure: fields[4].to_string(),
            value: parse_f(fields[5])?,
            n: parse_u(fields[6])? as usize,
            runtime_ms: parse_u(fields[7])?,
        });
    }
    Ok(rows)
}

/// Runs the experiment and writes `<out_dir>/<experiment>.csv`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<PathBuf> {
    let rows = run_experiment_rows(config)?;
    let dir = config
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("results"));
    let path = dir.join(format!("{}.csv", config.experiment.as_str()));
    write_csv(&rows, &path)?;
    Ok(path)
}

/// Runs the experiment in memory. Seeds run in parallel; each seed's cells
/// run in a fixed order, so output ordering is deterministic.
pub fn run_experiment_rows(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let per_seed: Result<Vec<Vec<ResultRow>>> = config
        .seeds
        .par_iter()
        .map(|&seed| run_seed(config, seed))
        .collect();
    Ok(per_seed?.into_iter().flatten().collect())
}

fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<Vec<ResultRow>> {
    match config.experiment {
        ExperimentId::Fig1 => fig1_seed(config, seed),
        ExperimentId::Fig2 => fig2_seed(config, seed),
        ExperimentId::Fig3 => fig3_seed(config, seed),
        ExperimentId::DdRff => dd_rff_seed(config, seed),
        ExperimentId::DdRf => dd_rf_seed(config, seed),
        ExperimentId::DdMlpMnist => dd_mlp_seed(config, seed, true),
        ExperimentId::DdMlpCifar => dd_mlp_seed(config, seed, false),
        ExperimentId::DdGbdt => dd_gbdt_seed(config, seed),
    }
}

fn push_row(
    rows: &mut Vec<ResultRow>,
    config: &ExperimentConfig,
    seed: u64,
    sweep_name: &str,
    sweep_value: f64,
    measure: &str,
    value: f64,
    n: usize,
    started: Instant,
) {
    if config.wants(measure) {
        rows.push(ResultRow {
            experiment: config.experiment.as_str().to_string(),
            seed,
            sweep_name: sweep_name.to_string(),
            sweep_value,
            measure: measure.to_string(),
            value,
            n,
            runtime_ms: started.elapsed().as_millis() as u64,
        });
    }
}

/// Mixes a cell index into the base seed; keeps per-cell draws independent.
fn cell_seed(seed: u64, salt: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(salt)
        .rotate_left(17)
}

fn mse(pred: &Matrix, truth: &Matrix) -> f64 {
    let mut total = 0.0;
    for i in 0..pred.rows() {
        for (a, b) in pred.row(i).iter().zip(truth.row(i)) {
            total += (a - b) * (a - b);
        }
    }
    total / pred.rows() as f64
}

fn zero_one(pred: &Matrix, truth: &Matrix) -> f64 {
    let n = pred.rows();
    let mut wrong = 0usize;
    for i in 0..n {
        let mismatch = if pred.cols() == 1 {
            (pred.get(i, 0) >= 0.0) != (truth.get(i, 0) >= 0.0)
        } else {
            argmax(pred.row(i)) != argmax(truth.row(i))
        };
        if mismatch {
            wrong += 1;
        }
    }
    wrong as f64 / n as f64
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// fig1: kernel regression complexity across d, p, l, and n
// ---------------------------------------------------------------------------

struct Fig1Panel {
    sweep_name: &'static str,
    values: Vec<f64>,
    n: usize,
    d: usize,
    spec: fn(f64) -> KernelSpec,
    /// When true the sweep value replaces n (sample-size panels).
    sweep_is_n: bool,
}

fn fig1_seed(config: &ExperimentConfig, seed: u64) -> Result<Vec<ResultRow>> {
    let n_default = config.n_train.unwrap_or(50);
    let n_sweep: Vec<f64> = vec![10.0, 20.0, 35.0, 50.0, 75.0, 100.0];
    let panels = vec![
        Fig1Panel {
            sweep_name: "d",
            values: config
                .sweep
                .clone()
                .unwrap_or_else(|| vec![1.0, 2.0, 3.0, 5.0, 8.0, 12.0, 20.0, 30.0]),
            n: n_default,
            d: 0, // replaced by the sweep value
            spec: |_| KernelSpec::Linear { c: 1.0 },
            sweep_is_n: false,
        },
        Fig1Panel {
            sweep_name: "p",
            values: (0..=10).map(|p| p as f64).collect(),
            n: n_default,
            d: 1,
            spec: |p| KernelSpec::Polynomial { p: p as u32, c: 1.0 },
            sweep_is_n: false,
        },
        Fig1Panel {
            sweep_name: "l",
            values: vec![0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0],
            n: n_default,
            d: 1,
            spec: |l| KernelSpec::Gaussian { l },
            sweep_is_n: false,
        },
        Fig1Panel {
            sweep_name: "n_linear",
            values: n_sweep.clone(),
            n: 0,
            d: 20,
            spec: |_| KernelSpec::Linear { c: 1.0 },
            sweep_is_n: true,
        },
        Fig1Panel {
            sweep_name: "n_poly",
            values: n_sweep.clone(),
            n: 0,
            d: 1,
            spec: |_| KernelSpec::Polynomial { p: 5, c: 1.0 },
            sweep_is_n: true,
        },
        Fig1Panel {
            sweep_name: "n_gauss",
            values: n_sweep,
            n: 0,
            d: 1,
            spec: |_| KernelSpec::Gaussian { l: 1.0 },
            sweep_is_n: true,
        },
    ];

    let lambda = 1e-5;
    let mut rows = Vec::new();
    for (panel_idx, panel) in panels.iter().enumerate() {
        for (value_idx, &v) in panel.values.iter().enumerate() {
            let started = Instant::now();
            let (n, d) = if panel.sweep_is_n {
                (v as usize, panel.d)
            } else if panel.sweep_name == "d" {
                (panel.n, v as usize)
            } else {
                (panel.n, panel.d)
            };
            let spec = (panel.spec)(v);
            let cell = cell_seed(seed, (panel_idx * 1000 + value_idx) as u64);
            let train = gen_gaussian(n, d, 1.0, 1.0, cell)?;
            let test = gen_gaussian(n, d, 1.0, 1.0, cell ^ 0xFFFF)?;
            let y = train.y_vec()?;
            let y_star = test.y_vec()?;

            emit_krr_measures(
                &mut rows, config, seed, panel.sweep_name, v, &spec, lambda, &train.x, &y,
                &test.x, &y_star, started,
            )?;
        }
    }
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn emit_krr_measures(
    rows: &mut Vec<ResultRow>,
    config: &ExperimentConfig,
    seed: u64,
    sweep_name: &str,
    sweep_value: f64,
    spec: &KernelSpec,
    lambda: f64,
    x: &Matrix,
    y: &[f64],
    x_test: &Matrix,
    y_star: &[f64],
    started: Instant,
) -> Result<()> {
    let n = x.rows();
    let k = kernel_matrix(spec, x, x)?;
    if config.wants("gac") {
        let gac = gac_from_kernel(&k)?.value;
        push_row(rows, config, seed, sweep_name, sweep_value, "gac", gac, n, started);
    }
    if config.wants("vne") {
        let vne = matrix_entropy(&normalize(&k)?, EntropyKind::VonNeumann, true)?.value;
        push_row(rows, config, seed, sweep_name, sweep_value, "vne", vne, n, started);
    }

    let model = krr_fit(x, y, spec, lambda)?;
    let smoothers = krr_smoothers(&model, x_test)?;
    if config.wants("enp") {
        let v = enp_normalized(&smoothers)?;
        push_row(rows, config, seed, sweep_name, sweep_value, "enp", v, n, started);
    }
    if config.wants("genp-v") {
        let v = genp_v_normalized(&smoothers)?;
        push_row(rows, config, seed, sweep_name, sweep_value, "genp-v", v, n, started);
    }
    if config.wants("genp-rx") {
        let f_in = smoothers.s_in.matvec(y)?;
        let f_out = smoothers.s_out.as_ref().expect("built above").matvec(y)?;
        let mse_in = f_in
            .iter()
            .zip(y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / y.len() as f64;
        let mse_out = f_out
            .iter()
            .zip(y_star)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / y_star.len() as f64;
        let summary = ErrorSummary {
            mse_in,
            mse_out,
            sigma2_hat: 1.0,
        };
        let v = genp_rx(&summary, n)? / n as f64;
        push_row(rows, config, seed, sweep_name, sweep_value, "genp-rx", v, n, started);
    }
    if config.wants("param-norm") {
        let v = param_norm(&model.alpha, &k)?;
        push_row(rows, config, seed, sweep_name, sweep_value, "param-norm", v, n, started);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// fig2: short length scale + heavy ridge vs long length scale + light ridge
// ---------------------------------------------------------------------------

fn fig2_seed(config: &ExperimentConfig, seed: u64) -> Result<Vec<ResultRow>> {
    let n = config.n_train.unwrap_or(40);
    // Wide input spread keeps the long-length-scale kernel numerically full
    // rank, so its near-interpolating fit carries the larger ENP while the
    // short-length-scale, heavily regularized fit carries the larger GAC.
    let train = gen_gaussian(n, 1, 8.0, 1.0, cell_seed(seed, 2))?;
    let test = gen_gaussian(n, 1, 8.0, 1.0, cell_seed(seed, 3))?;
    let y = train.y_vec()?;
    let mut rows = Vec::new();
    for (l, lambda) in [(0.2, 0.5), (1.0, 1e-5)] {
        let started = Instant::now();
        let spec = KernelSpec::Gaussian { l };
        let k = kernel_matrix(&spec, &train.x, &train.x)?;
        let gac = gac_from_kernel(&k)?.value;
        push_row(&mut rows, config, seed, "l", l, "gac", gac, n, started);
        let model = krr_fit(&train.x, &y, &spec, lambda)?;
        let smoothers = krr_smoothers(&model, &test.x)?;
        let enp = enp_normalized(&smoothers)?;
        push_row(&mut rows, config, seed, "l", l, "enp", enp, n, started);
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// fig3: kNN across kappa, trees across leaves, forests across tree count
// ---------------------------------------------------------------------------

fn fig3_seed(config: &ExperimentConfig, seed: u64) -> Result<Vec<ResultRow>> {
    let n = config.n_train.unwrap_or(20);
    let n_test = config.n_test.unwrap_or(n);
    let train = gen_gaussian(n, 1, 1.0, 1.0, cell_seed(seed, 5))?;
    let test = gen_gaussian(n_test, 1, 1.0, 1.0, cell_seed(seed, 6))?;
    let y = train.y_vec()?;
    let y_star = test.y_vec()?;
    let mut rows = Vec::new();

    // kNN panel.
    for kappa in 1..=n {
        let started = Instant::now();
        let k_train = knn_kernel(&train.x, &train.x, kappa)?;
        let k_test = knn_kernel(&train.x, &test.x, kappa)?;
        emit_smoother_measures(
            &mut rows, config, seed, "kappa", kappa as f64, &k_train, &k_test, &y, &y_star,
            started,
        )?;
    }

    // Decision-tree panel.
    for max_leaves in 1..=n {
        let started = Instant::now();
        let tree = fit_tree(&train.x, &y, max_leaves, cell_seed(seed, 7))?;
        let k_train = tree_kernel(&tree, &tree.leaf_of);
        let k_test = tree_kernel(&tree, &tree.assign_all(&test.x));
        emit_smoother_measures(
            &mut rows, config, seed, "max_leaves", max_leaves as f64, &k_train, &k_test, &y,
            &y_star, started,
        )?;
    }

    // Random-forest panel: full-depth bootstrapped trees.
    for n_trees in 1..=n {
        let started = Instant::now();
        let forest_config = ForestConfig {
            bootstrap: true,
            ..ForestConfig::new(n_trees, n, cell_seed(seed, 8))
        };
        let forest = fit_forest(&train.x, &y, &forest_config)?;
        let k_train = rf_kernel_train(&forest)?;
        let k_test = rf_kernel(&forest, &forest.assign_all(&test.x))?;
        let gac = forest_gac(&k_train)?;
        if config.wants("gac") {
            push_row(&mut rows, config, seed, "n_trees", n_trees as f64, "gac", gac, n, started);
        }
        emit_smoother_tail(
            &mut rows, config, seed, "n_trees", n_trees as f64, &k_train, &k_test, &y, &y_star,
            started,
        )?;
    }
    Ok(rows)
}

/// GAC + the smoother-based measures for a data-dependent kernel.
#[allow(clippy::too_many_arguments)]
fn emit_smoother_measures(
    rows: &mut Vec<ResultRow>,
    config: &ExperimentConfig,
    seed: u64,
    sweep_name: &str,
    sweep_value: f64,
    k_train: &KernelMatrix,
    k_test: &KernelMatrix,
    y: &[f64],
    y_star: &[f64],
    started: Instant,
) -> Result<()> {
    let n = k_train.n_rows();
    if config.wants("gac") {
        let gac = gac_from_kernel(k_train)?.value;
        push_row(rows, config, seed, sweep_name, sweep_value, "gac", gac, n, started);
    }
    emit_smoother_tail(
        rows, config, seed, sweep_name, sweep_value, k_train, k_test, y, y_star, started,
    )
}

#[allow(clippy::too_many_arguments)]
fn emit_smoother_tail(
    rows: &mut Vec<ResultRow>,
    config: &ExperimentConfig,
    seed: u64,
    sweep_name: &str,
    sweep_value: f64,
    k_train: &KernelMatrix,
    k_test: &KernelMatrix,
    y: &[f64],
    y_star: &[f64],
    started: Instant,
) -> Result<()> {
    let n = k_train.n_rows();
    let s_in = smoother_matrix(k_train)?;
    let s_out = smoother_matrix(k_test)?;
    let smoothers = SmootherMatrices {
        s_in,
        s_out: Some(s_out),
    };
    if config.wants("vne") {
        let vne = matrix_entropy(&normalize(k_train)?, EntropyKind::VonNeumann, true)?.value;
        push_row(rows, config, seed, sweep_name, sweep_value, "vne", vne, n, started);
    }
    if config.wants("enp") {
        let v = enp_normalized(&smoothers)?;
        push_row(rows, config, seed, sweep_name, sweep_value, "enp", v, n, started);
    }
    if config.wants("genp-v") {
        let v = genp_v_normalized(&smoothers)?;
        push_row(rows, config, seed, sweep_name, sweep_value, "genp-v", v, n, started);
    }
    if config.wants("genp-rx") {
        let f_in = smoothers.s_in.matvec(y)?;
        let f_out = smoothers.s_out.as_ref().expect("built above").matvec(y)?;
        let mse_in = f_in
            .iter()
            .zip(y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / y.len() as f64;
        let mse_out = f_out
            .iter()
            .zip(y_star)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / y_star.len() as f64;
        let v = genp_rx(
            &ErrorSummary {
                mse_in,
                mse_out,
                sigma2_hat: 1.0,
            },
            n,
        )? / n as f64;
        push_row(rows, config, seed, sweep_name, sweep_value, "genp-rx", v, n, started);
    }
    Ok(())
}

/// GAC of a forest kernel. Bootstrapped kernels can have zero diagonal
/// entries (points out-of-bag in every tree) and mild asymmetry (occurrence
/// counts differ between the pair); restrict to covered points and
/// symmetrize before normalizing.
fn forest_gac(k: &KernelMatrix) -> Result<f64> {
    let n = k.n_rows();
    let covered: Vec<usize> = (0..n).filter(|&i| k.values.get(i, i) > 0.0).collect();
    if covered.len() < 2 {
        return Err(Error::InsufficientSample {
            got: covered.len(),
            need: 2,
        });
    }
    let m = covered.len();
    let sym = Matrix::from_fn(m, m, |a, b| {
        0.5 * (k.values.get(covered[a], covered[b]) + k.values.get(covered[b], covered[a]))
    });
    gac_from_kernel(&KernelMatrix {
        values: sym,
        symmetric: true,
    })
    .map(|r| r.value)
}

// ---------------------------------------------------------------------------
// Double-descent experiments
// ---------------------------------------------------------------------------

/// Train/test split from the configured source. Scalar targets unless the
/// source is IDX (one-hot, 10 classes).
fn dd_data(config: &ExperimentConfig, seed: u64, n_train: usize, n_test: usize) -> Result<(Dataset, Dataset)> {
    match &config.data {
        DataSource::Synthetic => {
            let all = gen_smooth(n_train + n_test, 5, 0.2, cell_seed(seed, 11))?;
            Ok(split_dataset(all, n_train))
        }
        DataSource::Idx { images, labels } => {
            let all = load_idx(images, labels, n_train + n_test, cell_seed(seed, 12))?;
            Ok(split_dataset(all, n_train))
        }
        DataSource::Cifar { batch } => {
            let all = load_cifar10(
                batch,
                &[(CIFAR_CAT, 1.0), (CIFAR_DOG, -1.0)],
                cell_seed(seed, 13),
            )?;
            if all.n() < n_train + n_test {
                return Err(Error::InsufficientSample {
                    got: all.n(),
                    need: n_train + n_test,
                });
            }
            let truncated = take_rows(&all, n_train + n_test);
            Ok(split_dataset(truncated, n_train))
        }
    }
}

fn take_rows(ds: &Dataset, n: usize) -> Dataset {
    Dataset {
        x: Matrix::from_fn(n, ds.x.cols(), |i, j| ds.x.get(i, j)),
        y: Matrix::from_fn(n, ds.y.cols(), |i, j| ds.y.get(i, j)),
        source: ds.source.clone(),
        preprocessing: format!("{}; truncated to {n}", ds.preprocessing),
    }
}

fn split_dataset(all: Dataset, n_train: usize) -> (Dataset, Dataset) {
    let n_test = all.n() - n_train;
    let train = take_rows(&all, n_train);
    let test = Dataset {
        x: Matrix::from_fn(n_test, all.x.cols(), |i, j| all.x.get(n_train + i, j)),
        y: Matrix::from_fn(n_test, all.y.cols(), |i, j| all.y.get(n_train + i, j)),
        source: all.source.clone(),
        preprocessing: format!("{}; held-out tail {n_test}", all.preprocessing),
    };
    (train, test)
}

fn dd_rff_seed(config: &ExperimentConfig, seed: u64) -> Result<Vec<ResultRow>> {
    let n_train = config.n_train.unwrap_or(200);
    let n_test = config.n_test.unwrap_or(200);
    let (train, test) = dd_data(config, seed, n_train, n_test)?;
    let grid: Vec<usize> = match &config.sweep {
        Some(g) => g.iter().map(|&v| v as usize).collect(),
        None => vec![10, 20, 40, 80, 120, 160, 200, 260, 320, 400, 600, 1000, 1500, 2000],
    };
    let length_scale = 4.0; // matched to the 8x8 image scale and the smooth target
    let mut rows = Vec::new();
    for (idx, &d_features) in grid.iter().enumerate() {
        let started = Instant::now();
        let (freqs, phases) = rff_draw(
            train.dim(),
            d_features,
            length_scale,
            cell_seed(seed, 20 + idx as u64),
        )?;
        let z_train = rff_apply(&train.x, &freqs, &phases)?;
        let z_test = rff_apply(&test.x, &freqs, &phases)?;
        let weights = rff_fit_multi(&z_train, &train.y)?;
        let pred_train = z_train.rows().matmul(&weights)?;
        let pred_test = z_test.rows().matmul(&weights)?;

        push_row(
            &mut rows, config, seed, "d_features", d_features as f64, "train_mse",
            mse(&pred_train, &train.y), n_train, started,
        );
        push_row(
            &mut rows, config, seed, "d_features", d_features as f64, "test_mse",
            mse(&pred_test, &test.y), n_train, started,
        );
        if train.y.cols() > 1 {
            push_row(
                &mut rows, config, seed, "d_features", d_features as f64, "zero_one",
                zero_one(&pred_test, &test.y), n_train, started,
            );
        }
        if config.wants("gac") {
            let gac = gac_from_kernel(&ntk_gram(&z_train))?.value;
            push_row(
                &mut rows, config, seed, "d_features", d_features as f64, "gac", gac, n_train,
                started,
            );
        }
    }
    Ok(rows)
}

fn dd_rf_seed(config: &ExperimentConfig, seed: u64) -> Result<Vec<ResultRow>> {
    let n_train = config.n_train.unwrap_or(200);
    let n_test = config.n_test.unwrap_or(200);
    let (train, test) = dd_data(config, seed, n_train, n_test)?;
    if train.y.cols() != 1 {
        return Err(Error::Config(
            "dd-rf needs scalar responses; use a synthetic or CIFAR source".into(),
        ));
    }
    let y = train.y_vec()?;

    // Capacity protocol: grow a single tree to full size, then add trees.
    let leaf_grid: Vec<usize> = vec![2, 5, 10, 20, 50, 100, n_train]
        .into_iter()
        .filter(|&l| l <= n_train)
        .collect();
    let tree_grid: Vec<usize> = vec![2, 3, 5, 7, 10];

    let mut cells: Vec<(usize, usize)> = leaf_grid.iter().map(|&l| (l, 1)).collect();
    cells.extend(tree_grid.iter().map(|&t| (n_train, t)));

    let mut rows = Vec::new();
    for (idx, &(max_leaves, n_trees)) in cells.iter().enumerate() {
        let started = Instant::now();
        let forest_config = ForestConfig {
            bootstrap: config.bootstrap,
            feature_subsample: false,
            ..ForestConfig::new(n_trees, max_leaves, cell_seed(seed, 30 + idx as u64))
        };
        let forest = fit_forest(&train.x, &y, &forest_config)?;
        let capacity = (max_leaves * n_trees) as f64;
        let k_train = rf_kernel_train(&forest)?;
        let k_test = rf_kernel(&forest, &forest.assign_all(&test.x))?;

        let pred_train = forest_predict(&k_train, &y, forest.b_count)?;
        let pred_test = forest_predict(&k_test, &y, forest.b_count)?;
        push_row(
            &mut rows, config, seed, "capacity", capacity, "train_mse",
            vec_mse(&pred_train, &y), n_train, started,
        );
        push_row(
            &mut rows, config, seed, "capacity", capacity, "test_mse",
            vec_mse(&pred_test, &test.y_vec()?), n_train, started,
        );
        if config.wants("gac") {
            push_row(
                &mut rows, config, seed, "capacity", capacity, "gac",
                forest_gac(&k_train)?, n_train, started,
            );
        }
    }
    Ok(rows)
}

/// Forest predictions from kernel rows: rows sum to B, so dividing the
/// weighted response sum by B is the kernel-smoother prediction.
fn forest_predict(k: &KernelMatrix, y: &[f64], b_count: usize) -> Result<Vec<f64>> {
    let f = k.values.matvec(y)?;
    Ok(f.into_iter().map(|v| v / b_count as f64).collect())
}

fn vec_mse(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / pred.len() as f64
}

fn dd_mlp_seed(config: &ExperimentConfig, seed: u64, mnist_defaults: bool) -> Result<Vec<ResultRow>> {
    let n_train = config.n_train.unwrap_or(200);
    let n_test = config.n_test.unwrap_or(200);
    let (train, test) = dd_data(config, seed, n_train, n_test)?;
    let c = train.y.cols();
    let widths: Vec<usize> = match &config.sweep {
        Some(g) => g.iter().map(|&v| v as usize).collect(),
        None => vec![1, 2, 4, 8, 16, 32, 64, 128],
    };
    // Interpolation threshold in parameter count: c outputs per sample.
    let threshold = c * n_train;

    let mut rows = Vec::new();
    let mut previous = None;
    for (idx, &width) in widths.iter().enumerate() {
        let started = Instant::now();
        let mut mlp_config = MlpConfig::new(width, cell_seed(seed, 40 + idx as u64));
        if mnist_defaults {
            mlp_config.learning_rate = 0.01;
            mlp_config.momentum = 0.95;
            mlp_config.n_batches = 1;
            mlp_config.epochs = config.epochs.unwrap_or(200);
        } else {
            mlp_config.learning_rate = 1e-4;
            mlp_config.momentum = 0.99;
            mlp_config.n_batches = 10;
            mlp_config.epochs = config.epochs.unwrap_or(200);
        }
        let params = width * (train.dim() + c) + width + c;
        // Warm-start the under-parameterized regime, fresh draws beyond it.
        mlp_config.init = if params < threshold && previous.is_some() {
            MlpInit::Warm
        } else {
            MlpInit::Fresh
        };
        let (model, trace) = mlp_train(
            &mlp_config,
            &train.x,
            &train.y,
            previous.as_ref(),
            |_, snapshot| {
                gac_from_kernel(&ntk_gram(snapshot))
                    .map(|r| r.value)
                    .unwrap_or(f64::NAN)
            },
        )?;

        let width_f = width as f64;
        push_row(
            &mut rows, config, seed, "width", width_f, "train_mse",
            mse(&model.predict(&train.x), &train.y), n_train, started,
        );
        push_row(
            &mut rows, config, seed, "width", width_f, "test_mse",
            mse(&model.predict(&test.x), &test.y), n_train, started,
        );
        if c > 1 || !mnist_defaults {
            push_row(
                &mut rows, config, seed, "width", width_f, "zero_one",
                zero_one(&model.predict(&test.x), &test.y), n_train, started,
            );
        }
        if config.wants("total_gac") {
            match total_gac(&trace) {
                Ok(report) => push_row(
                    &mut rows, config, seed, "width", width_f, "total_gac", report.value,
                    n_train, started,
                ),
                Err(Error::UndefinedTotal) => {}
                Err(e) => return Err(e),
            }
        }
        if config.wants("gac") {
            if let Some(&last) = trace.gacs.last() {
                push_row(&mut rows, config, seed, "width", width_f, "gac", last, n_train, started);
            }
        }
        previous = Some(model);
    }
    Ok(rows)
}

fn dd_gbdt_seed(config: &ExperimentConfig, seed: u64) -> Result<Vec<ResultRow>> {
    let n_train = config.n_train.unwrap_or(200);
    let n_test = config.n_test.unwrap_or(200);
    let (train, test) = dd_data(config, seed, n_train, n_test)?;
    if train.y.cols() != 1 {
        return Err(Error::Config(
            "dd-gbdt needs scalar responses; use a synthetic or CIFAR source".into(),
        ));
    }
    let y = train.y_vec()?;
    let y_star = test.y_vec()?;
    let depths: Vec<usize> = match &config.sweep {
        Some(g) => g.iter().map(|&v| v as usize).collect(),
        None => (1..=8).collect(),
    };
    let stages = config.stages.unwrap_or(100);

    let mut rows = Vec::new();
    for (idx, &depth) in depths.iter().enumerate() {
        let started = Instant::now();
        let gbdt_config = GbdtConfig {
            learning_rate: 0.01,
            momentum: 0.95,
            ..GbdtConfig::new(stages, depth, cell_seed(seed, 50 + idx as u64))
        };
        let (model, trace) = gbdt_train(&train.x, &y, &gbdt_config, |_, kbar| {
            gac_from_normalized(kbar).map(|r| r.value).unwrap_or(f64::NAN)
        })?;
        let depth_f = depth as f64;
        push_row(
            &mut rows, config, seed, "max_depth", depth_f, "train_mse",
            vec_mse(&model.predict(&train.x), &y), n_train, started,
        );
        push_row(
            &mut rows, config, seed, "max_depth", depth_f, "test_mse",
            vec_mse(&model.predict(&test.x), &y_star), n_train, started,
        );
        if config.wants("total_gac") {
            match total_gac(&trace) {
                Ok(report) => push_row(
                    &mut rows, config, seed, "max_depth", depth_f, "total_gac", report.value,
                    n_train, started,
                ),
                Err(Error::UndefinedTotal) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// One-off measurement entry point (the CLI `measure` subcommand)
// ---------------------------------------------------------------------------

/// Measures requested complexity values for a kernel on a dataset, via KRR
/// smoothers where a smoother is needed. Rows use sweep_name "lambda".
pub fn measure_dataset(
    train: &Dataset,
    test: &Dataset,
    spec: &KernelSpec,
    lambda: f64,
    measures: &[String],
    seed: u64,
) -> Result<Vec<ResultRow>> {
    let mut config = ExperimentConfig::new(ExperimentId::Fig1);
    config.measures = Some(measures.to_vec());
    let mut rows = Vec::new();
    let started = Instant::now();
    emit_krr_measures(
        &mut rows,
        &config,
        seed,
        "lambda",
        lambda,
        spec,
        lambda,
        &train.x,
        &train.y_vec()?,
        &test.x,
        &test.y_vec()?,
        started,
    )?;
    for row in &mut rows {
        row.experiment = "measure".into();
    }
    Ok(rows)
}

/// GAC of the prior and posterior GP kernels on a seeded problem; exposed for
/// the CLI and smoke tests.
pub fn gp_report_rows(spec: &KernelSpec, lambda: f64, seed: u64) -> Result<Vec<ResultRow>> {
    let train = gen_gaussian(12, 1, 1.0, 1.0, cell_seed(seed, 90))?;
    let query = gen_gaussian(16, 1, 1.0, 1.0, cell_seed(seed, 91))?;
    let problem = GpProblem::new(
        train.x.clone(),
        train.y_vec()?,
        query.x.clone(),
        spec.clone(),
        lambda,
    );
    let posterior = gp_posterior(&problem)?;
    let _ = posterior;
    let report = crate::gp::gpk_ntk_report(&problem)?;
    let started = Instant::now();
    let mut rows = Vec::new();
    for (measure, value) in [
        ("gac_prior_gpk", report.gac_prior),
        ("gac_posterior_gpk", report.gac_posterior),
        ("gac_ntk", report.gac_ntk),
    ] {
        rows.push(ResultRow {
            experiment: "gp-report".into(),
            seed,
            sweep_name: "lambda".into(),
            sweep_value: lambda,
            measure: measure.into(),
            value,
            n: 16,
            runtime_ms: started.elapsed().as_millis() as u64,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(experiment: ExperimentId) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(experiment);
        c.seeds = vec![0];
        c.n_train = Some(16);
        c.n_test = Some(16);
        c
    }

    #[test]
    fn experiment_ids_round_trip() {
        for s in ["fig1", "fig2", "fig3", "dd-rff", "dd-rf", "dd-mlp-mnist", "dd-mlp-cifar", "dd-gbdt"] {
            let id: ExperimentId = s.parse().unwrap();
            assert_eq!(id.as_str(), s);
        }
        assert!("fig9".parse::<ExperimentId>().is_err());
    }

    #[test]
    fn fig1_row_count_contract() {
        let mut config = tiny_config(ExperimentId::Fig1);
        config.sweep = Some(vec![1.0, 2.0]); // d panel gets 2 values
        config.measures = Some(vec!["gac".into(), "enp".into()]);
        let rows = run_experiment_rows(&config).unwrap();
        // Panels: d (2 values) + p (11) + l (9) + three n panels (6 each).
        let cells = 2 + 11 + 9 + 18;
        assert_eq!(rows.len(), cells * 2);
    }

    #[test]
    fn fig2_orders_gac_and_enp_oppositely() {
        let mut config = ExperimentConfig::new(ExperimentId::Fig2);
        config.seeds = vec![0];
        let rows = run_experiment_rows(&config).unwrap();
        let find = |measure: &str, l: f64| -> f64 {
            rows.iter()
                .find(|r| r.measure == measure && (r.sweep_value - l).abs() < 1e-12)
                .unwrap()
                .value
        };
        assert!(find("gac", 0.2) > find("gac", 1.0));
        assert!(find("enp", 0.2) < find("enp", 1.0));
    }

    #[test]
    fn csv_round_trip_and_determinism_modulo_runtime() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config(ExperimentId::Fig3);
        config.n_train = Some(8);
        config.n_test = Some(8);
        config.measures = Some(vec!["gac".into(), "enp".into()]);
        config.out_dir = Some(dir.path().to_path_buf());
        let path = run_experiment(&config).unwrap();
        let rows = parse_csv(&path).unwrap();
        assert!(!rows.is_empty());

        let again = run_experiment_rows(&config).unwrap();
        assert_eq!(rows.len(), again.len());
        for (a, b) in rows.iter().zip(&again) {
            assert_eq!(a.experiment, b.experiment);
            assert_eq!(a.seed, b.seed);
            assert_eq!(a.sweep_name, b.sweep_name);
            assert_eq!(a.sweep_value, b.sweep_value);
            assert_eq!(a.measure, b.measure);
            assert_eq!(a.value.to_bits(), b.value.to_bits(), "row {a:?} vs {b:?}");
            assert_eq!(a.n, b.n);
        }
    }

    #[test]
    fn fig3_knn_gac_is_the_closed_form() {
        let mut config = ExperimentConfig::new(ExperimentId::Fig3);
        config.seeds = vec![1];
        config.n_train = Some(12);
        config.measures = Some(vec!["gac".into()]);
        let rows = run_experiment_rows(&config).unwrap();
        for r in rows.iter().filter(|r| r.sweep_name == "kappa") {
            let expect = crate::smoothers::knn_gac(r.sweep_value as usize, 12).unwrap();
            assert_eq!(r.value, expect);
        }
    }

    #[test]
    fn dd_rff_emits_all_measures_per_cell() {
        let mut config = tiny_config(ExperimentId::DdRff);
        config.sweep = Some(vec![4.0, 8.0, 32.0]);
        let rows = run_experiment_rows(&config).unwrap();
        for d in [4.0, 8.0, 32.0] {
            for measure in ["train_mse", "test_mse", "gac"] {
                assert!(
                    rows.iter()
                        .any(|r| r.sweep_value == d && r.measure == measure),
                    "missing {measure} at D={d}"
                );
            }
        }
        // Over-parameterized cells interpolate the training data.
        let train_at_32 = rows
            .iter()
            .find(|r| r.sweep_value == 32.0 && r.measure == "train_mse")
            .unwrap();
        assert!(train_at_32.value < 1e-10, "train mse {}", train_at_32.value);
    }

    #[test]
    fn dd_rf_runs_and_reports_capacity() {
        let mut config = tiny_config(ExperimentId::DdRf);
        config.n_train = Some(12);
        config.n_test = Some(12);
        let rows = run_experiment_rows(&config).unwrap();
        assert!(rows.iter().any(|r| r.measure == "gac"));
        // Capacity strictly grows along the emitted grid per measure.
        let caps: Vec<f64> = rows
            .iter()
            .filter(|r| r.measure == "gac")
            .map(|r| r.sweep_value)
            .collect();
        for w in caps.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn dd_mlp_total_gac_present() {
        let mut config = tiny_config(ExperimentId::DdMlpMnist);
        config.sweep = Some(vec![2.0, 4.0]);
        config.epochs = Some(10);
        let rows = run_experiment_rows(&config).unwrap();
        assert!(rows.iter().any(|r| r.measure == "total_gac"));
        for r in rows.iter().filter(|r| r.measure == "total_gac") {
            assert!((0.0..=1.0).contains(&r.value), "total gac {}", r.value);
        }
    }

    #[test]
    fn dd_gbdt_runs_at_desk_scale() {
        let mut config = tiny_config(ExperimentId::DdGbdt);
        config.sweep = Some(vec![1.0, 2.0]);
        config.stages = Some(8);
        let rows = run_experiment_rows(&config).unwrap();
        assert!(rows.iter().any(|r| r.measure == "total_gac"));
        assert!(rows.iter().any(|r| r.measure == "test_mse"));
    }

    #[test]
    fn missing_data_file_is_io_error() {
        let mut config = tiny_config(ExperimentId::DdRff);
        config.data = DataSource::Idx {
            images: "/nonexistent/images.idx".into(),
            labels: "/nonexistent/labels.idx".into(),
        };
        assert!(matches!(
            run_experiment_rows(&config),
            Err(Error::Io(_))
        ));
    }

    #[test]
    fn config_validation() {
        let mut config = ExperimentConfig::new(ExperimentId::Fig1);
        config.seeds.clear();
        assert!(config.validate().is_err());
        let parsed = ExperimentConfig::from_json(
            r#"{"experiment":"dd-rff","seeds":[0,1],"sweep":[10,20]}"#,
        )
        .unwrap();
        assert_eq!(parsed.experiment, ExperimentId::DdRff);
        assert!(ExperimentConfig::from_json(r#"{"experiment":"dd-rff","sweep":[-1]}"#).is_err());
    }
}
