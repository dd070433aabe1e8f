//! Pure and orthogonal greedy drivers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::dense;
use super::als::{als_multistart, AlsConfig, AlsOutcome};
use super::{EnergyForm, GreedyError, RankOneTerm, SeparatedFunction, SeparatedFunctional};
use crate::discretization::FactorMatrices;

/// Gram matrices with a larger condition estimate are solved through an
/// eigen-decomposition (an `a`-orthonormal basis of the captured span).
pub const GRAM_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Pga,
    Oga,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Pga => "pga",
            Algorithm::Oga => "oga",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig {
    /// Stop once `‖⊗r_n‖_a / ‖⊗r_1‖_a` drops below this.
    pub tol_stop: f64,
    pub n_max: usize,
    pub als: AlsConfig,
    /// Also record the dense dual norm `‖f_n‖_{a'}` (tiny tensor grids only).
    pub exact_dual: bool,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        Self { tol_stop: 1e-8, n_max: 20, als: AlsConfig::default(), exact_dual: false }
    }
}

/// Right-hand side plus, for manufactured problems, the known solution.
#[derive(Debug, Clone)]
pub struct GreedyProblem<'a> {
    pub form: &'a EnergyForm,
    pub mats: &'a [FactorMatrices],
    pub rhs: SeparatedFunctional,
    pub target: Option<SeparatedFunction>,
}

impl<'a> GreedyProblem<'a> {
    /// `f = a(target, ·)` with the target kept for error tracking.
    pub fn manufactured(form: &'a EnergyForm, mats: &'a [FactorMatrices], target: SeparatedFunction) -> Result<Self, GreedyError> {
        let rhs = SeparatedFunctional::energy_of(form, mats, &target)?;
        Ok(Self { form, mats, rhs, target: Some(target) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub n: usize,
    /// `‖ψ_n‖_a` when the solution is known.
    pub err_energy: Option<f64>,
    /// `‖⊗r_n‖_a`.
    pub term_norm_a: f64,
    /// `a(ψ_n, ⊗r_n) = f_n(⊗r_n)`; for OGA the largest `|f_n(⊗r_k)|`, k ≤ n.
    pub ortho_defect: f64,
    /// `‖⊗r_n‖_a / ‖⊗r_1‖_a`.
    pub surrogate: f64,
    /// Galerkin coefficients `α⁽ⁿ⁾` (OGA only).
    pub alpha: Option<Vec<f64>>,
    pub gram_condition: Option<f64>,
    /// `‖f_n‖_{a'}` from a dense solve, when requested.
    pub exact_dual: Option<f64>,
    pub j_value: f64,
    pub als_sweeps: usize,
    pub als_converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The stopping surrogate fell below `tol_stop`.
    Converged,
    /// ALS found no rank-one direction on which the residual is nonzero.
    ResidualVanished,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyTrace {
    pub algorithm: Algorithm,
    pub rows: Vec<IterationRecord>,
    /// `‖⊗r‖_a` of the last ALS result that was rejected by the stopping
    /// test (0 when the residual vanished).
    pub rejected_term_norm: Option<f64>,
    pub termination: Termination,
}

impl GreedyTrace {
    pub fn converged(&self) -> bool {
        self.termination != Termination::MaxIterations
    }

    pub fn errors(&self) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r.err_energy).collect()
    }
}

/// `‖⊗r_n‖_a / ‖⊗r_1‖_a` for the most recent ALS result of the run,
/// including a final term rejected by the stopping test.
pub fn stopping_surrogate(trace: &GreedyTrace) -> Result<f64, GreedyError> {
    let first = trace.rows.first().ok_or(GreedyError::EmptyTrace)?;
    let latest = trace.rejected_term_norm.unwrap_or(trace.rows[trace.rows.len() - 1].term_norm_a);
    Ok(latest / first.term_norm_a)
}

/// Running bookkeeping of the captured dictionary and its energy Gram matrix.
struct Dictionary {
    terms: Vec<RankOneTerm>,
    gram: Vec<Vec<f64>>,
    /// `a(target, ⊗r_k)` when the target is known.
    target_inner: Vec<f64>,
    target_energy: Option<f64>,
}

impl Dictionary {
    fn new(problem: &GreedyProblem<'_>) -> Result<Self, GreedyError> {
        let target_energy = match &problem.target {
            Some(t) => Some(t.energy_with(problem.form, problem.mats, t)?),
            None => None,
        };
        Ok(Self { terms: Vec::new(), gram: Vec::new(), target_inner: Vec::new(), target_energy })
    }

    fn push(&mut self, problem: &GreedyProblem<'_>, term: RankOneTerm) -> Result<(), GreedyError> {
        let mut row = Vec::with_capacity(self.terms.len() + 1);
        for t in &self.terms {
            row.push(problem.form.energy_rank1(problem.mats, &term, t)?);
        }
        row.push(problem.form.energy_rank1(problem.mats, &term, &term)?);
        if let Some(target) = &problem.target {
            let inner = target
                .terms()
                .iter()
                .map(|(w, t)| problem.form.energy_rank1(problem.mats, t, &term).map(|e| w * e))
                .sum::<Result<f64, _>>()?;
            self.target_inner.push(inner);
        }
        for (k, r) in self.gram.iter_mut().enumerate() {
            r.push(row[k]);
        }
        self.gram.push(row);
        self.terms.push(term);
        Ok(())
    }

    /// `‖target − Σ βₖ ⊗rₖ‖_a`.
    fn error(&self, beta: &[f64]) -> Option<f64> {
        let te = self.target_energy?;
        let mut e = te;
        for (k, b) in beta.iter().enumerate() {
            e -= 2.0 * b * self.target_inner[k];
            for (l, c) in beta.iter().enumerate() {
                e += b * c * self.gram[k][l];
            }
        }
        Some(e.max(0.0).sqrt())
    }

    fn gram_matrix(&self) -> DMatrix<f64> {
        let n = self.terms.len();
        DMatrix::from_fn(n, n, |i, j| self.gram[i][j])
    }
}

/// Solves the Galerkin system `G α = b`, returning `α` and the condition
/// estimate of `G`.
pub fn solve_gram(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<(DVector<f64>, f64), GreedyError> {
    let eig = SymmetricEigen::new(gram.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &v| a.min(v.abs()));
    if !(max > 0.0) {
        return Err(GreedyError::SingularGram { condition: f64::INFINITY });
    }
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if condition <= GRAM_CONDITION_LIMIT {
        if let Some(chol) = gram.clone().cholesky() {
            return Ok((chol.solve(rhs), condition));
        }
    }
    log::warn!("Gram matrix condition estimate {condition:e}; solving in an a-orthonormal basis of the span");
    // Drop directions the dictionary does not resolve.
    let cutoff = max * f64::EPSILON * gram.nrows() as f64;
    let qtb = eig.eigenvectors.tr_mul(rhs);
    let scaled = DVector::from_fn(qtb.len(), |i, _| {
        let l = eig.eigenvalues[i];
        if l > cutoff {
            qtb[i] / l
        } else {
            0.0
        }
    });
    Ok((&eig.eigenvectors * scaled, condition))
}

fn next_term(problem: &GreedyProblem<'_>, residual: &SeparatedFunctional, cfg: &GreedyConfig, n: usize) -> Result<AlsOutcome, GreedyError> {
    als_multistart(problem.form, problem.mats, residual, &cfg.als, n as u64)
        .map_err(|e| GreedyError::AtIteration { n, source: Box::new(e) })
}

fn exact_dual(problem: &GreedyProblem<'_>, residual: &SeparatedFunctional, cfg: &GreedyConfig, n: usize) -> Result<Option<f64>, GreedyError> {
    if !cfg.exact_dual {
        return Ok(None);
    }
    dense::exact_dual_norm(problem.form, problem.mats, residual, dense::DEFAULT_DOF_BUDGET)
        .map(Some)
        .map_err(|e| GreedyError::AtIteration { n, source: Box::new(e) })
}

enum Step {
    Accept(AlsOutcome, f64, f64),
    Stop(Termination, Option<f64>),
}

fn classify(problem: &GreedyProblem<'_>, outcome: AlsOutcome, first_norm: Option<f64>, tol_stop: f64) -> Result<Step, GreedyError> {
    if outcome.null {
        return Ok(Step::Stop(Termination::ResidualVanished, Some(0.0)));
    }
    let norm = problem.form.energy_rank1(problem.mats, &outcome.term, &outcome.term)?.max(0.0).sqrt();
    let surrogate = first_norm.map_or(1.0, |f| norm / f);
    if first_norm.is_some() && surrogate < tol_stop {
        return Ok(Step::Stop(Termination::Converged, Some(norm)));
    }
    Ok(Step::Accept(outcome, norm, surrogate))
}

/// Pure greedy algorithm: `f_n = f_{n−1} − a(⊗r_n, ·)`.
pub fn run_pga(problem: &GreedyProblem<'_>, cfg: &GreedyConfig) -> Result<(SeparatedFunction, GreedyTrace), GreedyError> {
    problem.form.check_factors(problem.mats)?;
    let mut residual = problem.rhs.clone();
    let mut dict = Dictionary::new(problem)?;
    let mut approx = SeparatedFunction::default();
    let mut rows = Vec::new();
    let mut first_norm = None;
    let mut rejected = None;
    let mut termination = Termination::MaxIterations;

    for n in 1..=cfg.n_max {
        let outcome = next_term(problem, &residual, cfg, n)?;
        let (outcome, norm, surrogate) = match classify(problem, outcome, first_norm, cfg.tol_stop)? {
            Step::Accept(o, norm, s) => (o, norm, s),
            Step::Stop(t, r) => {
                termination = t;
                rejected = r;
                break;
            }
        };
        first_norm.get_or_insert(norm);
        let term = outcome.term.clone();
        residual.push_energy_of(problem.form, problem.mats, -1.0, &term)?;
        let ortho = residual.apply(&term);
        dict.push(problem, term.clone())?;
        approx.push(1.0, term);
        let err = dict.error(&vec![1.0; dict.terms.len()]);
        log::debug!("pga n={n} |r|_a={norm:e} err={err:?}");
        rows.push(IterationRecord {
            n,
            err_energy: err,
            term_norm_a: norm,
            ortho_defect: ortho,
            surrogate,
            alpha: None,
            gram_condition: None,
            exact_dual: exact_dual(problem, &residual, cfg, n)?,
            j_value: outcome.j_value,
            als_sweeps: outcome.sweeps,
            als_converged: outcome.converged,
        });
    }
    Ok((approx, GreedyTrace { algorithm: Algorithm::Pga, rows, rejected_term_norm: rejected, termination }))
}

/// Orthogonal greedy algorithm: after each rank-one capture the coefficients
/// of all captured terms are re-fitted by Galerkin projection of `f`.
pub fn run_oga(problem: &GreedyProblem<'_>, cfg: &GreedyConfig) -> Result<(SeparatedFunction, GreedyTrace), GreedyError> {
    problem.form.check_factors(problem.mats)?;
    let mut residual = problem.rhs.clone();
    let mut dict = Dictionary::new(problem)?;
    let mut loads: Vec<f64> = Vec::new();
    let mut alpha = DVector::zeros(0);
    let mut rows = Vec::new();
    let mut first_norm = None;
    let mut rejected = None;
    let mut termination = Termination::MaxIterations;

    for n in 1..=cfg.n_max {
        let outcome = next_term(problem, &residual, cfg, n)?;
        let (outcome, norm, surrogate) = match classify(problem, outcome, first_norm, cfg.tol_stop)? {
            Step::Accept(o, norm, s) => (o, norm, s),
            Step::Stop(t, r) => {
                termination = t;
                rejected = r;
                break;
            }
        };
        first_norm.get_or_insert(norm);
        loads.push(problem.rhs.apply(&outcome.term));
        dict.push(problem, outcome.term.clone())?;

        let (a, condition) = solve_gram(&dict.gram_matrix(), &DVector::from_column_slice(&loads))
            .map_err(|e| GreedyError::AtIteration { n, source: Box::new(e) })?;
        alpha = a;

        residual = problem.rhs.clone();
        for (k, t) in dict.terms.iter().enumerate() {
            residual.push_energy_of(problem.form, problem.mats, -alpha[k], t)?;
        }
        let ortho = dict.terms.iter().map(|t| residual.apply(t).abs()).fold(0.0, f64::max);
        let err = dict.error(alpha.as_slice());
        log::debug!("oga n={n} |r|_a={norm:e} err={err:?} cond={condition:e}");
        rows.push(IterationRecord {
            n,
            err_energy: err,
            term_norm_a: norm,
            ortho_defect: ortho,
            surrogate,
            alpha: Some(alpha.iter().copied().collect()),
            gram_condition: Some(condition),
            exact_dual: exact_dual(problem, &residual, cfg, n)?,
            j_value: outcome.j_value,
            als_sweeps: outcome.sweeps,
            als_converged: outcome.converged,
        });
    }
    let approx = SeparatedFunction::new(dict.terms.into_iter().zip(alpha.iter()).map(|(t, &a)| (a, t)).collect());
    Ok((approx, GreedyTrace { algorithm: Algorithm::Oga, rows, rejected_term_norm: rejected, termination }))
}

pub fn run(algorithm: Algorithm, problem: &GreedyProblem<'_>, cfg: &GreedyConfig) -> Result<(SeparatedFunction, GreedyTrace), GreedyError> {
    match algorithm {
        Algorithm::Pga => run_pga(problem, cfg),
        Algorithm::Oga => run_oga(problem, cfg),
    }
}
