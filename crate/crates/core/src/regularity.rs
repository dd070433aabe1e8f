//! Spectral diagnostics: coefficients of a separated function in the
//! tensorized eigenbasis, weighted norms built from them, and the summable
//! expansion bound that predicts greedy convergence rates.
//!
//! Every quantity is a finite truncation over an index box; nothing here can
//! certify membership of the infinite-dimensional classes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretization::FactorMatrices;
use crate::eigen::{tensor_eigenvalue_of, EigenSystem};
use crate::greedy::SeparatedFunction;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegularityError {
    #[error("box has {got} sizes, system has {expected} factors")]
    BoxArity { expected: usize, got: usize },
    #[error("factor {factor}: box size {size} exceeds the {usable} usable eigenpairs")]
    BoxExceedsResolved { factor: usize, size: usize, usable: usize },
    #[error("box size must be positive (factor {factor})")]
    EmptyBox { factor: usize },
    #[error("factor {factor}: function has {got} coefficients, basis has {expected}")]
    DimensionMismatch { factor: usize, expected: usize, got: usize },
    #[error("weight exponent must be finite and nonnegative, got {0}")]
    InvalidExponent(f64),
}

/// Coefficients `⟨τ, e_n⟩_{L²_M}` over an index box, row-major with the last
/// factor fastest. `index` arguments are 0-based here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    /// `‖τ‖²_{L²_M}` of the expanded function.
    l2_norm_sq: f64,
}

impl CoeffTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>, l2_norm_sq: f64) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "coefficient data does not fill the box");
        Self { shape, data, l2_norm_sq }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.l2_norm_sq
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[flat_index(&self.shape, index)]
    }

    /// `‖τ‖² − Σ coeff²`; nonnegative up to rounding.
    pub fn parseval_defect(&self) -> f64 {
        self.l2_norm_sq - neumaier(self.data.iter().map(|c| c * c))
    }

    /// Iterates `(multi-index, coefficient)` in storage order.
    pub fn iter(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        self.data.iter().enumerate().map(|(k, &c)| (multi_index(&self.shape, k), c))
    }
}

fn flat_index(shape: &[usize], index: &[usize]) -> usize {
    index.iter().zip(shape).fold(0, |acc, (&i, &s)| {
        assert!(i < s, "index {i} outside box size {s}");
        acc * s + i
    })
}

fn multi_index(shape: &[usize], mut k: usize) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for (slot, &s) in idx.iter_mut().zip(shape).rev() {
        *slot = k % s;
        k /= s;
    }
    idx
}

/// Compensated summation.
fn neumaier(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn check_box(sys: &EigenSystem, bx: &[usize]) -> Result<(), RegularityError> {
    if bx.len() != sys.n_factors() {
        return Err(RegularityError::BoxArity { expected: sys.n_factors(), got: bx.len() });
    }
    for (factor, (&size, eig)) in bx.iter().zip(sys.factors()).enumerate() {
        if size == 0 {
            return Err(RegularityError::EmptyBox { factor });
        }
        if size > eig.usable() {
            return Err(RegularityError::BoxExceedsResolved { factor, size, usable: eig.usable() });
        }
    }
    Ok(())
}

/// Coefficients of a separated `τ` over `bx` (sizes per factor). Each term
/// contributes the outer product of its per-factor coefficient vectors.
pub fn fourier_coeffs(
    tau: &SeparatedFunction,
    sys: &EigenSystem,
    mats: &[FactorMatrices],
    bx: &[usize],
) -> Result<CoeffTensor, RegularityError> {
    check_box(sys, bx)?;
    if mats.len() != sys.n_factors() {
        return Err(RegularityError::BoxArity { expected: sys.n_factors(), got: mats.len() });
    }
    let total: usize = bx.iter().product();
    let mut data = vec![0.0; total];
    for (w, term) in tau.terms() {
        let per_factor: Vec<Vec<f64>> = term
            .factors()
            .iter()
            .zip(mats)
            .zip(sys.factors())
            .zip(bx)
            .enumerate()
            .map(|(factor, (((r, m), eig), &size))| {
                if r.len() != m.n_dofs() {
                    return Err(RegularityError::DimensionMismatch { factor, expected: m.n_dofs(), got: r.len() });
                }
                let mr = &m.mass * r;
                Ok((0..size).map(|n| eig.vectors().column(n).dot(&mr)).collect())
            })
            .collect::<Result<_, _>>()?;
        for (k, slot) in data.iter_mut().enumerate() {
            let idx = multi_index(bx, k);
            *slot += w * idx.iter().zip(&per_factor).map(|(&i, c)| c[i]).product::<f64>();
        }
    }
    let mut l2 = 0.0;
    for (wu, u) in tau.terms() {
        for (wv, v) in tau.terms() {
            l2 += wu
                * wv
                * u.factors()
                    .iter()
                    .zip(v.factors())
                    .zip(mats)
                    .map(|((a, b), m)| m.mass_inner(a, b))
                    .product::<f64>();
        }
    }
    Ok(CoeffTensor::new(bx.to_vec(), data, l2))
}

/// Weight families on the tensor index set, both built from factor
/// eigenvalues `λ⁽ⁱ⁾ ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "m", rename_all = "lowercase")]
pub enum WeightFamily {
    /// `∏ᵢ (λ⁽ⁱ⁾)^m`
    Mix(f64),
    /// `(Σᵢ λ⁽ⁱ⁾)^m`
    Unif(f64),
}

impl WeightFamily {
    pub fn exponent(self) -> f64 {
        match self {
            WeightFamily::Mix(m) | WeightFamily::Unif(m) => m,
        }
    }

    /// `ln σ` for the given factor eigenvalues.
    pub fn log_weight(self, factor_values: &[f64]) -> f64 {
        match self {
            WeightFamily::Mix(m) => m * factor_values.iter().map(|l| l.ln()).sum::<f64>(),
            WeightFamily::Unif(m) => m * factor_values.iter().sum::<f64>().ln(),
        }
    }

    pub fn weight(self, factor_values: &[f64]) -> f64 {
        match self {
            WeightFamily::Mix(m) => factor_values.iter().map(|l| l.powf(m)).product(),
            WeightFamily::Unif(m) => factor_values.iter().sum::<f64>().powf(m),
        }
    }

    fn validate(self) -> Result<(), RegularityError> {
        let m = self.exponent();
        if !(m.is_finite() && m >= 0.0) {
            return Err(RegularityError::InvalidExponent(m));
        }
        Ok(())
    }
}

fn factor_values(sys: &EigenSystem, idx: &[usize]) -> Vec<f64> {
    idx.iter().zip(sys.factors()).map(|(&n, eig)| eig.values()[n]).collect()
}

/// `(Σ_n σ_n ⟨τ, e_n⟩²)^{1/2}` over the coefficient box. Falls back to a
/// log-scaled sum when the direct weights overflow.
pub fn sigma_norm(coeffs: &CoeffTensor, sys: &EigenSystem, family: WeightFamily) -> Result<f64, RegularityError> {
    family.validate()?;
    check_box(sys, coeffs.shape())?;
    let direct = neumaier(coeffs.iter().map(|(idx, c)| family.weight(&factor_values(sys, &idx)) * c * c));
    if direct.is_finite() {
        return Ok(direct.sqrt());
    }
    let logs: Vec<f64> = coeffs
        .iter()
        .filter(|&(_, c)| c != 0.0)
        .map(|(idx, c)| family.log_weight(&factor_values(sys, &idx)) + 2.0 * c.abs().ln())
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let scaled = neumaier(logs.iter().map(|l| (l - top).exp()));
    Ok((0.5 * (top + scaled.ln())).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct B1Bound {
    /// `Σ_n √λ_n |⟨τ, e_n⟩|` over the box.
    pub value: f64,
    /// Share of `value` coming from the outermost shell of the box (indices
    /// with at least one component at its maximum).
    pub tail_fraction: f64,
}

fn on_outer_shell(shape: &[usize], idx: &[usize]) -> bool {
    idx.iter().zip(shape).any(|(&i, &s)| i + 1 == s)
}

pub fn b1_bound(coeffs: &CoeffTensor, sys: &EigenSystem) -> Result<B1Bound, RegularityError> {
    check_box(sys, coeffs.shape())?;
    let mut total = Vec::with_capacity(coeffs.data().len());
    let mut shell = Vec::new();
    for (idx, c) in coeffs.iter() {
        let lambda = tensor_eigenvalue_of(factor_values(sys, &idx));
        let t = lambda.sqrt() * c.abs();
        if on_outer_shell(coeffs.shape(), &idx) {
            shell.push(t);
        }
        total.push(t);
    }
    let value = neumaier(total);
    let shell = neumaier(shell);
    let tail_fraction = if value > 0.0 { shell / value } else { 0.0 };
    Ok(B1Bound { value, tail_fraction })
}

/// `Σ_n λ_n / σ_n` over the box spanned by the given factor eigenvalue lists,
/// with `λ_n` the tensor eigenvalue. Finite in the limit exactly when the
/// family embeds into the summable class.
pub fn weight_family_sum(factor_values: &[&[f64]], family: WeightFamily) -> Result<f64, RegularityError> {
    family.validate()?;
    let shape: Vec<usize> = factor_values.iter().map(|v| v.len()).collect();
    let total: usize = shape.iter().product();
    Ok(neumaier((0..total).map(|k| {
        let idx = multi_index(&shape, k);
        let vals: Vec<f64> = idx.iter().zip(factor_values).map(|(&i, v)| v[i]).collect();
        let lambda = tensor_eigenvalue_of(vals.iter().copied());
        (lambda.ln() - family.log_weight(&vals)).exp()
    })))
}

/// Default margin above each sufficiency threshold.
pub const DEFAULT_MARGIN: f64 = 0.25;

/// Largest outer-shell share of a weighted sum for the truncated norm to be
/// read as converging.
pub const SHELL_TOLERANCE: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedNorm {
    pub family: WeightFamily,
    /// Exponent above which the family embeds into the summable class.
    pub threshold: f64,
    pub norm: f64,
    /// Outer-shell share of the squared norm.
    pub tail_fraction: f64,
    /// Truncated norm is finite and its outer shell negligible.
    pub suggests_membership: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateClassReport {
    pub n_factors: usize,
    pub d: u32,
    pub box_sizes: Vec<usize>,
    /// Per-factor count of mesh-resolved eigenvalues, when known.
    pub resolved: Vec<Option<usize>>,
    pub l2_norm: f64,
    pub parseval_defect: f64,
    pub mix: WeightedNorm,
    pub unif: WeightedNorm,
    pub b1: B1Bound,
    pub b1_suggests_membership: bool,
}

fn weighted(coeffs: &CoeffTensor, sys: &EigenSystem, family: WeightFamily, threshold: f64) -> Result<WeightedNorm, RegularityError> {
    let norm = sigma_norm(coeffs, sys, family)?;
    let mut shell = Vec::new();
    let mut all = Vec::new();
    for (idx, c) in coeffs.iter() {
        let t = family.weight(&factor_values(sys, &idx)) * c * c;
        if on_outer_shell(coeffs.shape(), &idx) {
            shell.push(t);
        }
        all.push(t);
    }
    let total = neumaier(all);
    let tail_fraction = if total > 0.0 && total.is_finite() { neumaier(shell) / total } else if total == 0.0 { 0.0 } else { 1.0 };
    Ok(WeightedNorm {
        family,
        threshold,
        norm,
        tail_fraction,
        suggests_membership: norm.is_finite() && tail_fraction <= SHELL_TOLERANCE,
    })
}

/// Weighted norms just above the mixed (`m > d/2 + 1`) and uniform
/// (`m > 1 + N d/2`) sufficiency thresholds, plus the summable-expansion
/// bound. Purely diagnostic.
pub fn rate_class_report(coeffs: &CoeffTensor, sys: &EigenSystem, d: u32, margin: f64) -> Result<RateClassReport, RegularityError> {
    check_box(sys, coeffs.shape())?;
    let n = sys.n_factors();
    let half_d = d as f64 / 2.0;
    let mix_threshold = half_d + 1.0;
    let unif_threshold = 1.0 + n as f64 * half_d;
    let mix = weighted(coeffs, sys, WeightFamily::Mix(mix_threshold + margin), mix_threshold)?;
    let unif = weighted(coeffs, sys, WeightFamily::Unif(unif_threshold + margin), unif_threshold)?;
    let b1 = b1_bound(coeffs, sys)?;
    Ok(RateClassReport {
        n_factors: n,
        d,
        box_sizes: coeffs.shape().to_vec(),
        resolved: sys.factors().iter().map(|f| f.resolved()).collect(),
        l2_norm: coeffs.l2_norm_sq().max(0.0).sqrt(),
        parseval_defect: coeffs.parseval_defect(),
        mix,
        unif,
        b1_suggests_membership: b1.value.is_finite() && b1.tail_fraction <= SHELL_TOLERANCE,
        b1,
    })
}
