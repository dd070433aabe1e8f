use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{EnergyForm, FactorOp, GreedyError};
use crate::discretization::FactorMatrices;

/// `⊗ₖ rₖ`, one coefficient vector per factor basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankOneTerm {
    factors: Vec<DVector<f64>>,
}

impl RankOneTerm {
    pub fn new(factors: Vec<DVector<f64>>) -> Self {
        Self { factors }
    }

    pub fn zeros(mats: &[FactorMatrices]) -> Self {
        Self::new(mats.iter().map(|m| DVector::zeros(m.n_dofs())).collect())
    }

    /// The constant function with unit `L²_M` norm (each factor `≡ 1`).
    pub fn constant(mats: &[FactorMatrices]) -> Self {
        Self::new(mats.iter().map(|m| DVector::from_element(m.n_dofs(), 1.0)).collect())
    }

    pub fn factors(&self) -> &[DVector<f64>] {
        &self.factors
    }

    pub fn factors_mut(&mut self) -> &mut [DVector<f64>] {
        &mut self.factors
    }

    pub fn n_factors(&self) -> usize {
        self.factors.len()
    }

    pub(crate) fn check_dims(&self, mats: &[FactorMatrices]) -> Result<(), GreedyError> {
        if self.factors.len() != mats.len() {
            return Err(GreedyError::FactorCount { expected: mats.len(), got: self.factors.len() });
        }
        for (factor, (v, m)) in self.factors.iter().zip(mats).enumerate() {
            if v.len() != m.n_dofs() {
                return Err(GreedyError::DimensionMismatch { factor, expected: m.n_dofs(), got: v.len() });
            }
        }
        Ok(())
    }

    /// Rescales so that factors `0..N-1` have unit mass norm, the last factor
    /// absorbing the product of the scales. Returns `false` (leaving the term
    /// untouched) if a factor has mass norm below `null_tol`.
    pub fn normalize(&mut self, mats: &[FactorMatrices], null_tol: f64) -> bool {
        let norms: Vec<f64> = self.factors.iter().zip(mats).map(|(v, m)| m.mass_norm(v)).collect();
        if norms.iter().any(|&n| !(n >= null_tol)) {
            return false;
        }
        let last = self.factors.len() - 1;
        let mut carried = 1.0;
        for (k, &n) in norms.iter().enumerate().take(last) {
            self.factors[k] /= n;
            carried *= n;
        }
        self.factors[last] *= carried;
        true
    }

    pub fn scaled(mut self, s: f64) -> Self {
        if let Some(last) = self.factors.last_mut() {
            *last *= s;
        }
        self
    }

    /// Product of the factor mass norms, i.e. `‖⊗rₖ‖_{L²_M}`.
    pub fn l2_norm(&self, mats: &[FactorMatrices]) -> f64 {
        self.factors.iter().zip(mats).map(|(v, m)| m.mass_norm(v)).product()
    }
}

/// `Σₖ wₖ ⊗ᵢ rₖ⁽ⁱ⁾`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeparatedFunction {
    terms: Vec<(f64, RankOneTerm)>,
}

impl SeparatedFunction {
    pub fn new(terms: Vec<(f64, RankOneTerm)>) -> Self {
        Self { terms }
    }

    pub fn terms(&self) -> &[(f64, RankOneTerm)] {
        &self.terms
    }

    pub fn push(&mut self, weight: f64, term: RankOneTerm) {
        self.terms.push((weight, term));
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// `Σ |wₖ|`, which bounds the `A₁` norm when every term has unit energy.
    pub fn weight_sum(&self) -> f64 {
        self.terms.iter().map(|(w, _)| w.abs()).sum()
    }

    /// `a(self, other)` by double summation over terms.
    pub fn energy_with(&self, form: &EnergyForm, mats: &[FactorMatrices], other: &SeparatedFunction) -> Result<f64, GreedyError> {
        let mut total = 0.0;
        for (wu, u) in &self.terms {
            for (wv, v) in &other.terms {
                total += wu * wv * form.energy_rank1(mats, u, v)?;
            }
        }
        Ok(total)
    }

    /// `‖self‖_a`, clamped at zero against cancellation.
    pub fn energy_norm(&self, form: &EnergyForm, mats: &[FactorMatrices]) -> Result<f64, GreedyError> {
        Ok(self.energy_with(form, mats, self)?.max(0.0).sqrt())
    }

    /// `self − other` as a concatenated term list.
    pub fn minus(&self, other: &SeparatedFunction) -> SeparatedFunction {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().map(|(w, t)| (-w, t.clone())));
        SeparatedFunction { terms }
    }

    /// `⟨self, g⟩_{L²_M}` for rank-one `g`.
    pub fn l2_inner_rank1(&self, mats: &[FactorMatrices], g: &RankOneTerm) -> f64 {
        self.terms
            .iter()
            .map(|(w, t)| {
                w * t
                    .factors()
                    .iter()
                    .zip(g.factors())
                    .zip(mats)
                    .map(|((a, b), m)| m.mass_inner(a, b))
                    .product::<f64>()
            })
            .sum()
    }
}

/// Linear functional `φ ↦ Σₛ wₛ ∏ₖ gₛₖᵀ φₖ` on rank-one functions, kept in
/// separated form so residuals can be updated exactly.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeparatedFunctional {
    n_factors: usize,
    terms: Vec<(f64, Vec<DVector<f64>>)>,
}

impl SeparatedFunctional {
    pub fn zero(n_factors: usize) -> Self {
        Self { n_factors, terms: Vec::new() }
    }

    pub fn n_factors(&self) -> usize {
        self.n_factors
    }

    pub fn terms(&self) -> &[(f64, Vec<DVector<f64>>)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Adds `weight · ∏ₖ loadsₖᵀ φₖ`.
    pub fn push(&mut self, weight: f64, loads: Vec<DVector<f64>>) -> Result<(), GreedyError> {
        if loads.len() != self.n_factors {
            return Err(GreedyError::FactorCount { expected: self.n_factors, got: loads.len() });
        }
        if weight != 0.0 {
            self.terms.push((weight, loads));
        }
        Ok(())
    }

    /// Adds `weight · a(term, ·)`.
    pub fn push_energy_of(&mut self, form: &EnergyForm, mats: &[FactorMatrices], weight: f64, term: &RankOneTerm) -> Result<(), GreedyError> {
        form.check_factors(mats)?;
        term.check_dims(mats)?;
        let mut cache: Vec<[Option<DVector<f64>>; 4]> = vec![Default::default(); mats.len()];
        for t in form.terms() {
            let loads = t
                .ops
                .iter()
                .enumerate()
                .map(|(k, op)| {
                    cache[k][op.slot()]
                        .get_or_insert_with(|| op.apply(&mats[k], &term.factors()[k]))
                        .clone()
                })
                .collect();
            self.push(weight * t.coef, loads)?;
        }
        Ok(())
    }

    /// `f = a(target, ·)`: the right-hand side whose solution is `target`.
    pub fn energy_of(form: &EnergyForm, mats: &[FactorMatrices], target: &SeparatedFunction) -> Result<Self, GreedyError> {
        let mut f = Self::zero(form.n_factors());
        for (w, t) in target.terms() {
            f.push_energy_of(form, mats, *w, t)?;
        }
        Ok(f)
    }

    /// `f(φ) = ⟨g, φ⟩_{L²_M}` for a separated source `g`.
    pub fn from_l2_source(mats: &[FactorMatrices], source: &SeparatedFunction) -> Result<Self, GreedyError> {
        let mut f = Self::zero(mats.len());
        for (w, t) in source.terms() {
            t.check_dims(mats)?;
            let loads = t.factors().iter().zip(mats).map(|(v, m)| FactorOp::Mass.apply(m, v)).collect();
            f.push(*w, loads)?;
        }
        Ok(f)
    }

    pub fn apply(&self, phi: &RankOneTerm) -> f64 {
        self.terms
            .iter()
            .map(|(w, loads)| w * loads.iter().zip(phi.factors()).map(|(g, p)| g.dot(p)).product::<f64>())
            .sum()
    }

    pub fn apply_separated(&self, phi: &SeparatedFunction) -> f64 {
        phi.terms().iter().map(|(w, t)| w * self.apply(t)).sum()
    }

    /// Concatenation `self + weight · other`.
    pub fn add_scaled(&mut self, weight: f64, other: &SeparatedFunctional) -> Result<(), GreedyError> {
        for (w, loads) in &other.terms {
            self.push(weight * w, loads.clone())?;
        }
        Ok(())
    }
}
