//! Gradient alignment complexity (GAC) and matrix entropies.
//!
//! The GAC of a model is one minus the expected squared cosine similarity
//! between model gradients at pairs of inputs:
//!
//! ```text
//! GAC = 1 - E[ (phi(x)' phi(x') / (||phi(x)|| ||phi(x')||))^2 ]
//! ```
//!
//! It is 0 when all gradients are parallel (the model is a constant plus a
//! non-learnable part) and 1 when they are mutually orthogonal (the model can
//! fit anything). The empirical form averages over all ordered pairs i != j,
//! divisor n^2 - n. Because the squared cosine is exactly the squared entry
//! of the normalized tangent kernel, the same number can be computed from any
//! symmetric kernel matrix with positive diagonal, and it coincides with the
//! normalized linear entropy of that matrix.
//!
//! For training procedures whose gradients move (networks, boosting), the
//! total GAC weights per-step complexities by loss decrements
//! `max(L_{t-1} - L_t, 0)`.

use crate::error::{Error, Result};
use crate::kernels::{normalize, ntk_gram, KernelMatrix, NormalizedKernelMatrix};
use crate::numerics::{sym_eigvals, Matrix};
use serde::{Deserialize, Serialize};

/// Per-example gradient rows phi(x_i) at a fixed parameter vector, or stacked
/// Jacobians (c outputs by p parameters, flattened row-wise) when the model
/// has multivariate output.
#[derive(Debug, Clone)]
pub struct GradientSnapshot {
    rows: Matrix,
    /// Output count; 1 for scalar models.
    c: usize,
    /// Parameter count per output row.
    p: usize,
}

impl GradientSnapshot {
    /// Gradient rows (c = 1).
    pub fn from_gradients(rows: Matrix) -> Self {
        let p = rows.cols();
        GradientSnapshot { rows, c: 1, p }
    }

    /// One c-by-p Jacobian per example; each is flattened row-wise.
    pub fn from_jacobians(jacobians: &[Matrix]) -> Result<Self> {
        if jacobians.is_empty() {
            return Err(Error::EmptyInput("no jacobians".into()));
        }
        let c = jacobians[0].rows();
        let p = jacobians[0].cols();
        let mut rows = Matrix::zeros(jacobians.len(), c * p);
        for (i, j) in jacobians.iter().enumerate() {
            if j.rows() != c || j.cols() != p {
                return Err(Error::Shape(format!(
                    "jacobian {i} is {}x{}, expected {c}x{p}",
                    j.rows(),
                    j.cols()
                )));
            }
            rows.row_mut(i).copy_from_slice(j.data());
        }
        Ok(GradientSnapshot { rows, c, p })
    }

    pub fn n(&self) -> usize {
        self.rows.rows()
    }

    pub fn output_count(&self) -> usize {
        self.c
    }

    pub fn param_count(&self) -> usize {
        self.p
    }

    pub fn rows(&self) -> &Matrix {
        &self.rows
    }
}

/// Which named measure a report carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Measure {
    Gac,
    LinearEntropy,
    VonNeumannEntropy,
    Enp,
    GenpV,
    GenpRx,
    ParamNorm,
}

impl std::fmt::Display for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Measure::Gac => "gac",
            Measure::LinearEntropy => "le",
            Measure::VonNeumannEntropy => "vne",
            Measure::Enp => "enp",
            Measure::GenpV => "genp-v",
            Measure::GenpRx => "genp-rx",
            Measure::ParamNorm => "param-norm",
        };
        f.write_str(s)
    }
}

/// One named complexity value plus provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub measure: Measure,
    pub value: f64,
    pub n_used: usize,
    pub subsample_seed: Option<u64>,
    pub notes: String,
}

impl ComplexityReport {
    pub fn new(measure: Measure, value: f64, n_used: usize) -> Self {
        ComplexityReport {
            measure,
            value,
            n_used,
            subsample_seed: None,
            notes: String::new(),
        }
    }
}

/// Loss curve plus per-step GAC values; step t's GAC is measured after
/// update t, so there is one more loss than GAC entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub losses: Vec<f64>,
    pub gacs: Vec<f64>,
}

impl TrainingTrace {
    pub fn new(losses: Vec<f64>, gacs: Vec<f64>) -> Result<Self> {
        if losses.len() != gacs.len() + 1 {
            return Err(Error::Shape(format!(
                "training trace needs |losses| = |gacs| + 1, got {} and {}",
                losses.len(),
                gacs.len()
            )));
        }
        Ok(TrainingTrace { losses, gacs })
    }
}

/// Moments entering the ensemble-GAC identity.
#[derive(Debug, Clone, Copy)]
pub struct EnsembleStats {
    /// GAC of a single ensemble member.
    pub gac_single: f64,
    /// Var(kbar_b) over the shared pair population.
    pub var_kbar: f64,
    /// corr(kbar_b, kbar_b') between members.
    pub rho: f64,
    /// Number of averaged members B.
    pub b_count: usize,
    /// Diagonal-ratio factor; 1 when the kernel diagonal is constant.
    pub q: f64,
}

/// Empirical GAC from gradient rows:
/// 1 - (1/(n^2-n)) sum_{i != j} cos^2(phi_i, phi_j).
pub fn gac_from_gradients(g: &GradientSnapshot) -> Result<ComplexityReport> {
    let n = g.n();
    if n < 2 {
        return Err(Error::InsufficientSample { got: n, need: 2 });
    }
    let rows = g.rows();
    let mut norms = Vec::with_capacity(n);
    for i in 0..n {
        let norm2: f64 = rows.row(i).iter().map(|v| v * v).sum();
        if norm2 <= 0.0 {
            return Err(Error::Normalization { index: i });
        }
        norms.push(norm2.sqrt());
    }
    let mut sum_sq = 0.0;
    for i in 0..n {
        let ri = rows.row(i);
        for j in (i + 1)..n {
            let rj = rows.row(j);
            let mut dot = 0.0;
            for k in 0..ri.len() {
                dot += ri[k] * rj[k];
            }
            let cos = dot / (norms[i] * norms[j]);
            sum_sq += 2.0 * cos * cos; // ordered pairs (i,j) and (j,i)
        }
    }
    let value = 1.0 - sum_sq / ((n * n - n) as f64);
    Ok(ComplexityReport::new(Measure::Gac, value, n))
}

/// Empirical GAC of a symmetric kernel matrix: normalize, then average the
/// squared off-diagonal entries.
pub fn gac_from_kernel(k: &KernelMatrix) -> Result<ComplexityReport> {
    let kbar = normalize(k)?;
    gac_from_normalized(&kbar)
}

/// GAC of an already-normalized kernel matrix.
pub fn gac_from_normalized(kbar: &NormalizedKernelMatrix) -> Result<ComplexityReport> {
    let n = kbar.n();
    if n < 2 {
        return Err(Error::InsufficientSample { got: n, need: 2 });
    }
    let mut sum_sq = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let v = kbar.values.get(i, j);
                sum_sq += v * v;
            }
        }
    }
    let value = 1.0 - sum_sq / ((n * n - n) as f64);
    Ok(ComplexityReport::new(Measure::Gac, value, n))
}

/// Jacobian GAC: the dot product becomes the Frobenius inner product, which
/// is exactly the gradient GAC of the row-flattened Jacobians.
pub fn gac_from_jacobians(j: &GradientSnapshot) -> Result<ComplexityReport> {
    gac_from_gradients(j)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyKind {
    Linear,
    VonNeumann,
}

/// Linear or von Neumann entropy of a normalized kernel matrix.
///
/// With normalized eigenvalues lam_i = eig_i / sum eig:
/// linear entropy = sum lam_i (1 - lam_i); von Neumann = -sum lam_i ln lam_i
/// (0 ln 0 := 0). The `normalized` variants rescale by n/(n-1) and 1/ln(n)
/// respectively so both live in [0, 1].
pub fn matrix_entropy(
    kbar: &NormalizedKernelMatrix,
    kind: EntropyKind,
    normalized: bool,
) -> Result<ComplexityReport> {
    let n = kbar.n();
    if normalized && n < 2 {
        return Err(Error::DegenerateSize(format!(
            "normalized entropy undefined at n = {n}"
        )));
    }
    let spectrum = sym_eigvals(&kbar.values)?;
    let mut value = 0.0;
    for &lam in &spectrum.normalized_eigenvalues {
        // PSD inputs can carry tiny negative eigenvalues from roundoff.
        let lam = lam.max(0.0);
        match kind {
            EntropyKind::Linear => value += lam * (1.0 - lam),
            EntropyKind::VonNeumann => {
                if lam > 0.0 {
                    value -= lam * lam.ln();
                }
            }
        }
    }
    if normalized {
        match kind {
            EntropyKind::Linear => value *= n as f64 / (n as f64 - 1.0),
            EntropyKind::VonNeumann => value /= (n as f64).ln(),
        }
    }
    let measure = match kind {
        EntropyKind::Linear => Measure::LinearEntropy,
        EntropyKind::VonNeumann => Measure::VonNeumannEntropy,
    };
    Ok(ComplexityReport::new(measure, value, n))
}

/// Loss-decrement-weighted average of per-step GAC values:
/// sum_t gac_t * dL_t / sum_t dL_t with dL_t = max(L_{t-1} - L_t, 0).
pub fn total_gac(trace: &TrainingTrace) -> Result<ComplexityReport> {
    if trace.losses.len() != trace.gacs.len() + 1 {
        return Err(Error::Shape(format!(
            "training trace needs |losses| = |gacs| + 1, got {} and {}",
            trace.losses.len(),
            trace.gacs.len()
        )));
    }
    // Anchored weighted mean: shifting by the minimum keeps the constant-GAC
    // case exact in floating point.
    let anchor = trace.gacs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, &gac) in trace.gacs.iter().enumerate() {
        let dl = (trace.losses[t] - trace.losses[t + 1]).max(0.0);
        num += (gac - anchor) * dl;
        den += dl;
    }
    if den == 0.0 {
        return Err(Error::UndefinedTotal);
    }
    Ok(ComplexityReport::new(
        Measure::Gac,
        anchor + num / den,
        trace.gacs.len(),
    ))
}

/// Ensemble GAC: 1 - q^2 (1 - (gac_single + (1 - 1/B)(1 - rho) Var(kbar))).
/// With q = 1 this reduces to gac_single + (1 - 1/B)(1 - rho) Var(kbar).
pub fn ensemble_gac(s: &EnsembleStats) -> f64 {
    let b = s.b_count as f64;
    let inner = s.gac_single + (1.0 - 1.0 / b) * (1.0 - s.rho) * s.var_kbar;
    1.0 - s.q * s.q * (1.0 - inner)
}

/// Empirical moments over a shared pair population for B normalized kernels
/// of equal size: pooled mean/second moment over ordered pairs i != j, the
/// average cross moment between members, and the derived Var and rho under
/// the population convention (divide by the pair count). With these moments
/// the q = 1 ensemble identity is exact for the averaged normalized kernel.
pub fn ensemble_stats_from_normalized(kernels: &[NormalizedKernelMatrix]) -> Result<EnsembleStats> {
    if kernels.is_empty() {
        return Err(Error::EmptyInput("no kernels".into()));
    }
    let n = kernels[0].n();
    if n < 2 {
        return Err(Error::InsufficientSample { got: n, need: 2 });
    }
    for k in kernels {
        if k.n() != n {
            return Err(Error::Shape("kernels must share one pair population".into()));
        }
    }
    let b = kernels.len();
    let pairs = (n * n - n) as f64;
    let mut mean = 0.0;
    let mut second = 0.0;
    for k in kernels {
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let v = k.values.get(i, j);
                    mean += v;
                    second += v * v;
                }
            }
        }
    }
    mean /= pairs * b as f64;
    second /= pairs * b as f64;

    let mut cross = 0.0;
    if b > 1 {
        for bi in 0..b {
            for bj in 0..b {
                if bi == bj {
                    continue;
                }
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            cross += kernels[bi].values.get(i, j) * kernels[bj].values.get(i, j);
                        }
                    }
                }
            }
        }
        cross /= pairs * (b * (b - 1)) as f64;
    }

    let var = second - mean * mean;
    let rho = if b > 1 && var > 0.0 {
        (cross - mean * mean) / var
    } else {
        1.0
    };
    Ok(EnsembleStats {
        gac_single: 1.0 - second,
        var_kbar: var,
        rho,
        b_count: b,
        q: 1.0,
    })
}

/// Entrywise average of normalized kernels; stays unit-diagonal.
pub fn average_normalized(kernels: &[NormalizedKernelMatrix]) -> Result<NormalizedKernelMatrix> {
    if kernels.is_empty() {
        return Err(Error::EmptyInput("no kernels".into()));
    }
    let n = kernels[0].n();
    let mut values = Matrix::zeros(n, n);
    for k in kernels {
        if k.n() != n {
            return Err(Error::Shape("kernel sizes differ".into()));
        }
        for i in 0..n {
            for j in 0..n {
                let v = values.get(i, j) + k.values.get(i, j) / kernels.len() as f64;
                values.set(i, j, v);
            }
        }
    }
    Ok(NormalizedKernelMatrix { values })
}

/// Convenience: GAC of a gradient snapshot via its Gram matrix. Equivalent
/// to [`gac_from_gradients`]; exposed for kernel-side callers.
pub fn gac_from_snapshot_kernel(g: &GradientSnapshot) -> Result<ComplexityReport> {
    gac_from_kernel(&ntk_gram(g))
}
