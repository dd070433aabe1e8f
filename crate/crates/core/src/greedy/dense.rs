//! Dense tensor-product assembly for tiny grids.

use nalgebra::{DMatrix, DVector};

use super::{EnergyForm, GreedyError, RankOneTerm, SeparatedFunction, SeparatedFunctional};
use crate::discretization::FactorMatrices;

/// Largest total dof count accepted by [`exact_dual_norm`] by default.
pub const DEFAULT_DOF_BUDGET: usize = 10_000;

pub fn total_dofs(mats: &[FactorMatrices]) -> usize {
    mats.iter().map(|m| m.n_dofs()).product()
}

/// Full matrix of `a` on the tensor basis; the index of `(i₁, …, i_N)` is
/// row-major (last factor fastest).
pub fn assemble_full(form: &EnergyForm, mats: &[FactorMatrices]) -> Result<DMatrix<f64>, GreedyError> {
    form.check_factors(mats)?;
    let n = total_dofs(mats);
    let mut k = DMatrix::zeros(n, n);
    for t in form.terms() {
        let mut block = DMatrix::from_element(1, 1, t.coef);
        for (op, m) in t.ops.iter().zip(mats) {
            block = block.kronecker(&op.matrix(m));
        }
        k += block;
    }
    Ok(k)
}

pub fn rank1_to_full(term: &RankOneTerm) -> DVector<f64> {
    term.factors()
        .iter()
        .fold(DVector::from_element(1, 1.0), |acc, v| acc.kronecker(v))
}

pub fn function_to_full(f: &SeparatedFunction, n: usize) -> DVector<f64> {
    f.terms().iter().fold(DVector::zeros(n), |acc, (w, t)| acc + rank1_to_full(t) * *w)
}

pub fn functional_to_full(f: &SeparatedFunctional, n: usize) -> DVector<f64> {
    let mut out = DVector::zeros(n);
    for (w, loads) in f.terms() {
        let v = loads.iter().fold(DVector::from_element(1, 1.0), |acc, g| acc.kronecker(g));
        out.axpy(*w, &v, 1.0);
    }
    out
}

/// `‖f‖_{a'} = ‖ζ‖_a` where `a(ζ, ·) = f`, by a dense solve. Refused when the
/// tensor grid has more than `budget` dof.
pub fn exact_dual_norm(form: &EnergyForm, mats: &[FactorMatrices], f: &SeparatedFunctional, budget: usize) -> Result<f64, GreedyError> {
    let dofs = total_dofs(mats);
    if dofs > budget {
        return Err(GreedyError::ExactDualRefused { dofs, budget });
    }
    let k = assemble_full(form, mats)?;
    let rhs = functional_to_full(f, dofs);
    let chol = k.cholesky().ok_or(GreedyError::DenseNotPositiveDefinite)?;
    let zeta = chol.solve(&rhs);
    Ok(rhs.dot(&zeta).max(0.0).sqrt())
}
