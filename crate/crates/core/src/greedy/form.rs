use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{GreedyError, RankOneTerm};
use crate::discretization::FactorMatrices;

/// One-factor operator appearing in the separated expansion of `a(·,·)`.
///
/// The pairing of `u` (trial) and `v` (test) through an operator is
/// `vᵀ Op u`: `Grad` carries the derivative on the trial function
/// (`∫ M u' v`), `GradT` on the test function (`∫ M u v'`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FactorOp {
    Mass,
    Stiffness,
    Grad,
    GradT,
}

impl FactorOp {
    pub const ALL: [FactorOp; 4] = [FactorOp::Mass, FactorOp::Stiffness, FactorOp::Grad, FactorOp::GradT];

    pub(crate) fn slot(self) -> usize {
        self as usize
    }

    pub fn apply(self, mats: &FactorMatrices, u: &DVector<f64>) -> DVector<f64> {
        match self {
            FactorOp::Mass => &mats.mass * u,
            FactorOp::Stiffness => &mats.stiffness * u,
            FactorOp::Grad => &mats.grad_coupling * u,
            FactorOp::GradT => mats.grad_coupling.tr_mul(u),
        }
    }

    pub fn matrix(self, mats: &FactorMatrices) -> DMatrix<f64> {
        match self {
            FactorOp::Mass => mats.mass.clone(),
            FactorOp::Stiffness => mats.stiffness.clone(),
            FactorOp::Grad => mats.grad_coupling.clone(),
            FactorOp::GradT => mats.grad_coupling.transpose(),
        }
    }

    pub(crate) fn add_scaled_to(self, mats: &FactorMatrices, scale: f64, out: &mut DMatrix<f64>) {
        match self {
            FactorOp::Mass => *out += &mats.mass * scale,
            FactorOp::Stiffness => *out += &mats.stiffness * scale,
            FactorOp::Grad => *out += &mats.grad_coupling * scale,
            FactorOp::GradT => *out += mats.grad_coupling.transpose() * scale,
        }
    }
}

/// `coef · ⊗ₖ ops[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorTerm {
    pub coef: f64,
    pub ops: Vec<FactorOp>,
}

/// The symmetric coercive form
/// `a(u, v) = Σᵢⱼ Aᵢⱼ/(4 Wi) ∫ M ∂ⱼu ∂ᵢv + c ∫ M u v`
/// written in the `u = ψ/M` variable.
#[derive(Debug, Clone)]
pub struct EnergyForm {
    coupling: DMatrix<f64>,
    wi: f64,
    c: f64,
    lambda_min: f64,
    lambda_max: f64,
    terms: Vec<OperatorTerm>,
}

impl EnergyForm {
    pub fn new(coupling: DMatrix<f64>, wi: f64, c: f64) -> Result<Self, GreedyError> {
        let n = coupling.nrows();
        if n == 0 || coupling.ncols() != n {
            return Err(GreedyError::CouplingShape(coupling.nrows(), coupling.ncols()));
        }
        for i in 0..n {
            for j in 0..i {
                if coupling[(i, j)] != coupling[(j, i)] {
                    return Err(GreedyError::CouplingNotSymmetric { row: i, col: j });
                }
            }
        }
        if !(wi.is_finite() && wi > 0.0) {
            return Err(GreedyError::InvalidParameter { name: "wi", value: wi });
        }
        if !(c.is_finite() && c > 0.0) {
            return Err(GreedyError::InvalidParameter { name: "c", value: c });
        }
        let eig = SymmetricEigen::new(coupling.clone());
        let lambda_min = eig.eigenvalues.min();
        let lambda_max = eig.eigenvalues.max();
        if !(lambda_min > 0.0) {
            return Err(GreedyError::CouplingNotPositiveDefinite { eigenvalue: lambda_min });
        }
        let terms = build_terms(&coupling, wi, c);
        Ok(Self { coupling, wi, c, lambda_min, lambda_max, terms })
    }

    pub fn identity(n: usize, wi: f64, c: f64) -> Result<Self, GreedyError> {
        Self::new(DMatrix::identity(n, n), wi, c)
    }

    /// Tridiagonal Rouse-type matrix: 1 on the diagonal, `off_diagonal` on
    /// the first off-diagonals.
    pub fn rouse(n: usize, off_diagonal: f64, wi: f64, c: f64) -> Result<Self, GreedyError> {
        let a = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0
            } else if i.abs_diff(j) == 1 {
                off_diagonal
            } else {
                0.0
            }
        });
        Self::new(a, wi, c)
    }

    pub fn n_factors(&self) -> usize {
        self.coupling.nrows()
    }

    pub fn coupling(&self) -> &DMatrix<f64> {
        &self.coupling
    }

    pub fn wi(&self) -> f64 {
        self.wi
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// `min(λ_min/(4 Wi), c)`: lower bound of `a` relative to the `H¹_M` norm.
    pub fn coercivity(&self) -> f64 {
        (self.lambda_min / (4.0 * self.wi)).min(self.c)
    }

    /// `max(λ_max/(4 Wi), c)`: upper bound of `a` relative to the `H¹_M` norm.
    pub fn continuity(&self) -> f64 {
        (self.lambda_max / (4.0 * self.wi)).max(self.c)
    }

    /// Separated expansion of the form; terms with zero coefficient dropped.
    pub fn terms(&self) -> &[OperatorTerm] {
        &self.terms
    }

    pub(crate) fn check_factors(&self, mats: &[FactorMatrices]) -> Result<(), GreedyError> {
        if mats.len() != self.n_factors() {
            return Err(GreedyError::FactorCount { expected: self.n_factors(), got: mats.len() });
        }
        Ok(())
    }

    /// `a(u, v)` for rank-one `u = ⊗uₖ`, `v = ⊗vₖ`.
    pub fn energy_rank1(&self, mats: &[FactorMatrices], u: &RankOneTerm, v: &RankOneTerm) -> Result<f64, GreedyError> {
        self.check_factors(mats)?;
        u.check_dims(mats)?;
        v.check_dims(mats)?;
        let pairings = pairings(mats, u, v);
        Ok(self.combine(&pairings))
    }

    /// `Σ_t coef_t ∏ₖ pairings[k][op_{t,k}]`.
    pub(crate) fn combine(&self, pairings: &[[f64; 4]]) -> f64 {
        self.terms()
            .iter()
            .map(|t| t.coef * t.ops.iter().zip(pairings).map(|(op, p)| p[op.slot()]).product::<f64>())
            .sum()
    }
}

/// `pairings[k][op] = v_kᵀ Op u_k`.
pub(crate) fn pairings(mats: &[FactorMatrices], u: &RankOneTerm, v: &RankOneTerm) -> Vec<[f64; 4]> {
    mats.iter()
        .zip(u.factors().iter().zip(v.factors()))
        .map(|(m, (uk, vk))| {
            let mut out = [0.0; 4];
            for op in FactorOp::ALL {
                out[op.slot()] = vk.dot(&op.apply(m, uk));
            }
            out
        })
        .collect()
}

fn build_terms(a: &DMatrix<f64>, wi: f64, c: f64) -> Vec<OperatorTerm> {
    let n = a.nrows();
    let mut terms = vec![OperatorTerm { coef: c, ops: vec![FactorOp::Mass; n] }];
    for i in 0..n {
        for j in 0..n {
            let coef = a[(i, j)] / (4.0 * wi);
            if coef == 0.0 {
                continue;
            }
            let mut ops = vec![FactorOp::Mass; n];
            if i == j {
                ops[i] = FactorOp::Stiffness;
            } else {
                // ∂ⱼ acts on the trial function, ∂ᵢ on the test function.
                ops[j] = FactorOp::Grad;
                ops[i] = FactorOp::GradT;
            }
            terms.push(OperatorTerm { coef, ops });
        }
    }
    terms
}
