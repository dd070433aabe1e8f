//! Generalized eigenpairs of the factor problems and their tensorization.
//!
//! Each factor solves `(K + M) e = λ M e` with the weighted stiffness `K`
//! and mass `M`. Products of factor eigenfunctions are eigenfunctions of the
//! full problem with eigenvalue `1 + Σᵢ (λ⁽ⁱ⁾ − 1)`.

use std::ops::RangeInclusive;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretization::FactorMatrices;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("requested {requested} eigenpairs but the problem has dimension {dim}")]
    TooManyPairs { requested: usize, dim: usize },
    #[error("mass matrix is not positive definite")]
    MassNotPositiveDefinite,
    #[error("matrix dimensions do not agree ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("tensor index has {got} components, system has {expected} factors")]
    IndexArity { expected: usize, got: usize },
    #[error("index {index} of factor {factor} outside the computed range 1..={available}")]
    IndexOutOfRange { factor: usize, index: usize, available: usize },
    #[error("tail {tail:?} is empty or starts at zero")]
    EmptyTail { tail: RangeInclusive<usize> },
    #[error("tail ends at n = {end} but only {resolved} eigenvalues are mesh-resolved")]
    UnresolvedTail { end: usize, resolved: usize },
}

/// Eigenpairs of one factor, ascending, mass-orthonormal.
#[derive(Debug, Clone)]
pub struct FactorEigen {
    values: Vec<f64>,
    /// Columns are coefficient vectors of the eigenfunctions.
    vectors: DMatrix<f64>,
    resolved: Option<usize>,
}

impl FactorEigen {
    /// Pairs from an external solve; `vectors` holds one column per value.
    pub fn new(values: Vec<f64>, vectors: DMatrix<f64>) -> Result<Self, EigenError> {
        if vectors.ncols() != values.len() {
            return Err(EigenError::DimensionMismatch(vectors.ncols(), values.len()));
        }
        Ok(Self { values, vectors, resolved: None })
    }

    /// Eigenvalues paired with the canonical basis (for spectral sums that
    /// only need the values).
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len();
        Self { values, vectors: DMatrix::identity(n, n), resolved: None }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// Coefficients of the `n`-th eigenfunction, 1-based.
    pub fn vector(&self, n: usize) -> DVector<f64> {
        self.vectors.column(n - 1).into_owned()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of leading eigenvalues known to be mesh-converged, if a
    /// refinement comparison has been made.
    pub fn resolved(&self) -> Option<usize> {
        self.resolved
    }

    /// Records how many leading eigenvalues agree with a refined solve.
    pub fn mark_resolved_against(&mut self, refined: &FactorEigen, rel_tol: f64) {
        self.resolved = Some(resolved_count(&self.values, &refined.values, rel_tol));
    }

    /// Usable range: the resolved count when known, else everything computed.
    pub fn usable(&self) -> usize {
        self.resolved.unwrap_or(self.values.len()).min(self.values.len())
    }
}

/// Solves `A e = λ B e` for the `k` smallest eigenpairs, `A` symmetric and
/// `B` symmetric positive definite. Eigenvectors are `B`-orthonormal with
/// their largest-magnitude entry positive.
pub fn solve_generalized(a: &DMatrix<f64>, b: &DMatrix<f64>, k: usize) -> Result<(Vec<f64>, DMatrix<f64>), EigenError> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || b.ncols() != n {
        return Err(EigenError::DimensionMismatch(a.nrows(), b.nrows()));
    }
    if k > n {
        return Err(EigenError::TooManyPairs { requested: k, dim: n });
    }
    // Jacobi scaling first: the weighted mass has entries spanning many
    // orders of magnitude near the degenerate boundary.
    let mut scale = DVector::zeros(n);
    for i in 0..n {
        let d = b[(i, i)];
        if !(d > 0.0) {
            return Err(EigenError::MassNotPositiveDefinite);
        }
        scale[i] = 1.0 / d.sqrt();
    }
    let scaled = |m: &DMatrix<f64>| DMatrix::from_fn(n, n, |i, j| scale[i] * m[(i, j)] * scale[j]);
    let a_s = scaled(a);
    let b_s = scaled(b);

    let chol = b_s.cholesky().ok_or(EigenError::MassNotPositiveDefinite)?;
    let l = chol.l();
    let y = l.solve_lower_triangular(&a_s).ok_or(EigenError::MassNotPositiveDefinite)?;
    let c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or(EigenError::MassNotPositiveDefinite)?;
    let c = (&c + c.transpose()) * 0.5;

    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let lt = l.transpose();
    let mut values = Vec::with_capacity(k);
    let mut vectors = DMatrix::zeros(n, k);
    for (col, &idx) in order.iter().take(k).enumerate() {
        values.push(eig.eigenvalues[idx]);
        let w = lt
            .solve_upper_triangular(&eig.eigenvectors.column(idx).into_owned())
            .ok_or(EigenError::MassNotPositiveDefinite)?;
        let mut v = w.component_mul(&scale);
        let norm = v.dot(&(b * &v)).sqrt();
        v /= norm;
        let pivot = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            v.neg_mut();
        }
        vectors.set_column(col, &v);
    }
    Ok((values, vectors))
}

/// The `k` smallest eigenpairs of `⟨e, φ⟩_{H¹_M} = λ ⟨e, φ⟩_{L²_M}`.
pub fn solve_factor_eigens(mats: &FactorMatrices, k: usize) -> Result<FactorEigen, EigenError> {
    solve_shifted(mats, 1.0, k)
}

/// Eigenpairs of the shifted problem `(K + θ M) e = λ M e`.
pub fn solve_shifted(mats: &FactorMatrices, theta: f64, k: usize) -> Result<FactorEigen, EigenError> {
    let a = &mats.stiffness + &mats.mass * theta;
    let (values, vectors) = solve_generalized(&a, &mats.mass, k)?;
    Ok(FactorEigen { values, vectors, resolved: None })
}

/// How many leading eigenvalues of a coarse solve agree with a refined one to
/// `rel_tol`.
pub fn resolved_count(coarse: &[f64], fine: &[f64], rel_tol: f64) -> usize {
    coarse
        .iter()
        .zip(fine)
        .take_while(|(c, f)| ((*c - *f) / *f).abs() <= rel_tol)
        .count()
}

/// Relative agreement required between two refinements for an eigenvalue to
/// count as resolved.
pub const RESOLUTION_TOL: f64 = 1e-3;

/// Multi-index into the tensorized eigenbasis, 1-based per factor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TensorEigenIndex(pub Vec<usize>);

/// Per-factor eigensystems of an `N`-factor problem.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    factors: Vec<FactorEigen>,
}

impl EigenSystem {
    pub fn new(factors: Vec<FactorEigen>) -> Self {
        Self { factors }
    }

    /// Solves every factor with `k` pairs each (clamped to the factor size).
    pub fn solve(mats: &[FactorMatrices], k: usize) -> Result<Self, EigenError> {
        use rayon::prelude::*;
        let factors = mats
            .par_iter()
            .map(|m| solve_factor_eigens(m, k.min(m.n_dofs())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[FactorEigen] {
        &self.factors
    }

    pub fn factors_mut(&mut self) -> &mut [FactorEigen] {
        &mut self.factors
    }

    pub fn n_factors(&self) -> usize {
        self.factors.len()
    }

    fn check_index(&self, idx: &TensorEigenIndex) -> Result<(), EigenError> {
        if idx.0.len() != self.factors.len() {
            return Err(EigenError::IndexArity { expected: self.factors.len(), got: idx.0.len() });
        }
        for (factor, (&n, eig)) in idx.0.iter().zip(&self.factors).enumerate() {
            if n == 0 || n > eig.usable() {
                return Err(EigenError::IndexOutOfRange { factor, index: n, available: eig.usable() });
            }
        }
        Ok(())
    }

    /// `λ_n = 1 + Σᵢ (λ⁽ⁱ⁾_{nᵢ} − 1)`.
    pub fn tensor_eigenvalue(&self, idx: &TensorEigenIndex) -> Result<f64, EigenError> {
        self.check_index(idx)?;
        Ok(tensor_eigenvalue_of(
            idx.0.iter().zip(&self.factors).map(|(&n, eig)| eig.values[n - 1]),
        ))
    }
}

/// `1 + Σᵢ (λᵢ − 1)` for a list of factor eigenvalues.
pub fn tensor_eigenvalue_of(factor_values: impl IntoIterator<Item = f64>) -> f64 {
    1.0 + factor_values.into_iter().map(|l| l - 1.0).sum::<f64>()
}

/// Two-sided growth constants of `λ_n / n^{2/d}` over a tail of indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeylFit {
    pub c1: f64,
    pub c2: f64,
}

impl WeylFit {
    pub fn ratio(&self) -> f64 {
        self.c2 / self.c1
    }
}

/// `c1 = min λ_n / n^{2/d}`, `c2 = max` over the 1-based index range `tail`.
pub fn weyl_fit(eigs: &[f64], d: u32, tail: RangeInclusive<usize>) -> Result<WeylFit, EigenError> {
    if tail.is_empty() || *tail.start() == 0 {
        return Err(EigenError::EmptyTail { tail });
    }
    if *tail.end() > eigs.len() {
        return Err(EigenError::UnresolvedTail { end: *tail.end(), resolved: eigs.len() });
    }
    let exponent = 2.0 / d as f64;
    let (mut c1, mut c2) = (f64::INFINITY, f64::NEG_INFINITY);
    for n in tail {
        let r = eigs[n - 1] / (n as f64).powf(exponent);
        c1 = c1.min(r);
        c2 = c2.max(r);
    }
    Ok(WeylFit { c1, c2 })
}

/// [`weyl_fit`] restricted to eigenvalues that two refinements agree on.
pub fn weyl_fit_resolved(coarse: &[f64], fine: &[f64], d: u32, tail: RangeInclusive<usize>) -> Result<WeylFit, EigenError> {
    let resolved = resolved_count(coarse, fine, RESOLUTION_TOL);
    if *tail.end() > resolved {
        log::warn!("Weyl tail ends at {} beyond the {} resolved eigenvalues", tail.end(), resolved);
        return Err(EigenError::UnresolvedTail { end: *tail.end(), resolved });
    }
    weyl_fit(fine, d, tail)
}
