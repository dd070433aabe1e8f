//! Alternating minimization of `J_f(⊗rₖ) = ½ a(⊗rₖ, ⊗rₖ) − f(⊗rₖ)`.
//!
//! Fixing every factor but one turns `J_f` into a convex quadratic in the
//! free factor; each slot update solves that SPD system exactly, so `J`
//! never increases within a sweep.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::form::pairings;
use super::{EnergyForm, GreedyError, RankOneTerm, SeparatedFunctional};
use crate::discretization::FactorMatrices;

/// Factors with mass norm below this are treated as zero.
pub const NULL_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlsConfig {
    /// Stop when a sweep changes `J` by at most `tol · |J|`.
    pub tol: f64,
    /// ... and no slot update moved its factor by more than this, relative,
    /// in the slot's energy norm.
    pub stationarity: f64,
    pub max_sweeps: usize,
    /// Independent random initializations; the lowest `J` wins.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for AlsConfig {
    fn default() -> Self {
        Self { tol: 1e-10, stationarity: 1e-9, max_sweeps: 500, restarts: 1, seed: 42 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlsOutcome {
    pub term: RankOneTerm,
    pub j_value: f64,
    pub j_init: f64,
    pub sweeps: usize,
    pub converged: bool,
    /// The functional vanished on every rank-one direction tried; `term` is
    /// zero and `j_value` is 0.
    pub null: bool,
}

impl AlsOutcome {
    fn null(mats: &[FactorMatrices], j_init: f64, sweeps: usize) -> Self {
        Self { term: RankOneTerm::zeros(mats), j_value: 0.0, j_init, sweeps, converged: true, null: true }
    }
}

/// `J_f(term) = ½ a(term, term) − f(term)`.
pub fn objective(form: &EnergyForm, mats: &[FactorMatrices], rhs: &SeparatedFunctional, term: &RankOneTerm) -> Result<f64, GreedyError> {
    Ok(0.5 * form.energy_rank1(mats, term, term)? - rhs.apply(term))
}

/// The SPD system `H r_j = b` for slot `j` with the other factors frozen.
pub fn slot_system(
    form: &EnergyForm,
    mats: &[FactorMatrices],
    rhs: &SeparatedFunctional,
    term: &RankOneTerm,
    j: usize,
) -> (DMatrix<f64>, DVector<f64>) {
    let n = mats[j].n_dofs();
    let p = pairings(mats, term, term);
    let mut h = DMatrix::zeros(n, n);
    for t in form.terms() {
        let s: f64 = t.coef
            * t.ops
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(k, op)| p[k][op.slot()])
                .product::<f64>();
        if s != 0.0 {
            t.ops[j].add_scaled_to(&mats[j], s, &mut h);
        }
    }
    let h = (&h + h.transpose()) * 0.5;

    let mut b = DVector::zeros(n);
    for (w, loads) in rhs.terms() {
        let s: f64 = w * loads
            .iter()
            .zip(term.factors())
            .enumerate()
            .filter(|&(k, _)| k != j)
            .map(|(_, (g, r))| g.dot(r))
            .product::<f64>();
        if s != 0.0 {
            b.axpy(s, &loads[j], 1.0);
        }
    }
    (h, b)
}

/// `‖x‖_H / ‖y‖_H`.
fn relative_in(h: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let den = y.dot(&(h * y));
    if den > 0.0 {
        (x.dot(&(h * x)).max(0.0) / den).sqrt()
    } else {
        0.0
    }
}

/// Alternating sweeps from `init` until, within one sweep, the relative
/// change of `J` is at most `cfg.tol` and every slot update is below
/// `cfg.stationarity`; or until `cfg.max_sweeps`. The result is normalized so
/// that factors `0..N-1` have unit mass norm.
pub fn als_rank1(
    form: &EnergyForm,
    mats: &[FactorMatrices],
    rhs: &SeparatedFunctional,
    init: RankOneTerm,
    cfg: &AlsConfig,
) -> Result<AlsOutcome, GreedyError> {
    let (tol, max_sweeps) = (cfg.tol, cfg.max_sweeps);
    form.check_factors(mats)?;
    init.check_dims(mats)?;
    if rhs.n_factors() != mats.len() {
        return Err(GreedyError::FactorCount { expected: mats.len(), got: rhs.n_factors() });
    }
    if rhs.is_empty() {
        return Ok(AlsOutcome::null(mats, 0.0, 0));
    }
    let mut term = init;
    if !term.normalize(mats, NULL_TOL) {
        return Err(GreedyError::DegenerateInit);
    }
    let j_init = objective(form, mats, rhs, &term)?;
    let guard = 1e-10 * j_init.abs().max(f64::MIN_POSITIVE);
    let mut j_prev = j_init;
    let n = mats.len();

    for sweep in 1..=max_sweeps {
        let mut j_cur = j_prev;
        let mut step = 0.0f64;
        for j in 0..n {
            let (h, b) = slot_system(form, mats, rhs, &term, j);
            let chol = h.clone().cholesky().ok_or(GreedyError::SingularSubsystem { slot: j })?;
            let r = chol.solve(&b);
            j_cur = -0.5 * b.dot(&r);
            step = step.max(relative_in(&h, &(&term.factors()[j] - &r), &r));
            let null = mats[j].mass_norm(&r) < NULL_TOL;
            term.factors_mut()[j] = r;
            if null {
                return Ok(AlsOutcome::null(mats, j_init, sweep));
            }
        }
        if !term.normalize(mats, NULL_TOL) {
            return Ok(AlsOutcome::null(mats, j_init, sweep));
        }
        let scale = j_cur.abs().max(j_prev.abs());
        if j_cur > j_prev + guard.max(1e-10 * scale) {
            return Err(GreedyError::NonDecreasing { sweep, before: j_prev, after: j_cur });
        }
        if (j_prev - j_cur).abs() <= tol * j_cur.abs() && step <= cfg.stationarity {
            return Ok(AlsOutcome { term, j_value: j_cur, j_init, sweeps: sweep, converged: true, null: false });
        }
        j_prev = j_cur;
    }
    Ok(AlsOutcome { term, j_value: j_prev, j_init, sweeps: max_sweeps, converged: false, null: false })
}

/// Factor-wise random vectors with entries in `[-1, 1)`, each scaled to
/// unit mass norm.
pub fn random_init<R: Rng>(mats: &[FactorMatrices], rng: &mut R) -> RankOneTerm {
    RankOneTerm::new(
        mats.iter()
            .map(|m| {
                let v = DVector::from_fn(m.n_dofs(), |_, _| rng.gen_range(-1.0..1.0));
                let norm = m.mass_norm(&v);
                v / norm
            })
            .collect(),
    )
}

/// Deterministic generator for restart `restart` of greedy step `stream`.
pub fn restart_rng(seed: u64, stream: u64, restart: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.wrapping_mul(1 << 16).wrapping_add(restart));
    rng
}

/// Runs [`als_rank1`] from `cfg.restarts` random starts and keeps the lowest
/// `J` (ties go to the earliest restart). Restarts that fail are ignored
/// unless all of them fail.
pub fn als_multistart(
    form: &EnergyForm,
    mats: &[FactorMatrices],
    rhs: &SeparatedFunctional,
    cfg: &AlsConfig,
    stream: u64,
) -> Result<AlsOutcome, GreedyError> {
    let restarts = cfg.restarts.max(1);
    let results: Vec<Result<AlsOutcome, GreedyError>> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = restart_rng(cfg.seed, stream, r as u64);
            let init = random_init(mats, &mut rng);
            als_rank1(form, mats, rhs, init, cfg)
        })
        .collect();
    let mut best: Option<AlsOutcome> = None;
    let mut first_err = None;
    for res in results {
        match res {
            Ok(out) => {
                if best.as_ref().is_none_or(|b| out.j_value < b.j_value) {
                    best = Some(out);
                }
            }
            Err(e) => {
                log::debug!("ALS restart failed: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    match (best, first_err) {
        (Some(b), _) => Ok(b),
        (None, Some(e)) => Err(e),
        (None, None) => unreachable!("at least one restart runs"),
    }
}

/// Largest relative slot gradient over all slots, measured in the dual of the
/// slot energy norm: `‖H_j r_j − b_j‖_{H_j⁻¹} / ‖b_j‖_{H_j⁻¹}`, i.e. the
/// supremum of the directional derivative of `J` over unit slot directions,
/// relative to the slot load. Zero exactly at stationary points of `J` on the
/// rank-one manifold.
pub fn euler_lagrange_residual(
    form: &EnergyForm,
    mats: &[FactorMatrices],
    rhs: &SeparatedFunctional,
    term: &RankOneTerm,
) -> Result<f64, GreedyError> {
    form.check_factors(mats)?;
    term.check_dims(mats)?;
    let mut worst = 0.0f64;
    for j in 0..mats.len() {
        let (h, b) = slot_system(form, mats, rhs, term, j);
        let chol = h.clone().cholesky().ok_or(GreedyError::SingularSubsystem { slot: j })?;
        let r = chol.solve(&b);
        worst = worst.max(relative_in(&h, &(&term.factors()[j] - &r), &r));
    }
    Ok(worst)
}
