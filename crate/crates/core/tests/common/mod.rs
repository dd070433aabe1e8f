#![allow(dead_code)]

use greedy_ou::discretization::{assemble, build_mesh, BasisDegree, FactorMatrices};
use greedy_ou::spring::{SpringKind, SpringModel};

pub fn factor(kind: SpringKind, b: f64, n_el: usize, grading: f64, degree: BasisDegree) -> FactorMatrices {
    let model = SpringModel::new(kind, b).unwrap();
    let weight = model.normalize(20).unwrap();
    assemble(&build_mesh(b, n_el, grading).unwrap(), &weight, degree).unwrap()
}

pub fn fene(b: f64, n_el: usize) -> FactorMatrices {
    factor(SpringKind::Fene, b, n_el, 1.0, BasisDegree::Quadratic)
}

pub fn cpail(b: f64, n_el: usize) -> FactorMatrices {
    factor(SpringKind::Cpail, b, n_el, 1.0, BasisDegree::Quadratic)
}

/// Linear elements with `n_el + 1` dof; cheap factors for greedy tests.
pub fn small_fene(b: f64, n_el: usize) -> FactorMatrices {
    factor(SpringKind::Fene, b, n_el, 1.0, BasisDegree::Linear)
}

use greedy_ou::greedy::{EnergyForm, RankOneTerm, SeparatedFunction, SeparatedFunctional};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Full matrix of the energy form for two factors, assembled term by term
/// from the coupling matrix (pairing `vᵀ K u`, index `a·n₂ + b`).
pub fn dense_operator2(form: &EnergyForm, m1: &FactorMatrices, m2: &FactorMatrices) -> DMatrix<f64> {
    let a = form.coupling();
    let s = 1.0 / (4.0 * form.wi());
    let mut k = m1.mass.kronecker(&m2.mass) * form.c();
    k += m1.stiffness.kronecker(&m2.mass) * (a[(0, 0)] * s);
    k += m1.mass.kronecker(&m2.stiffness) * (a[(1, 1)] * s);
    // ∂₂ on the trial, ∂₁ on the test function, and the mirror term.
    k += m1.grad_coupling.transpose().kronecker(&m2.grad_coupling) * (a[(0, 1)] * s);
    k += m1.grad_coupling.kronecker(&m2.grad_coupling.transpose()) * (a[(1, 0)] * s);
    k
}

pub fn full_vector(f: &SeparatedFunction) -> DVector<f64> {
    let mut out: Option<DVector<f64>> = None;
    for (w, t) in f.terms() {
        let v = term_vector(t) * *w;
        out = Some(match out {
            Some(o) => o + v,
            None => v,
        });
    }
    out.expect("nonempty function")
}

pub fn term_vector(t: &RankOneTerm) -> DVector<f64> {
    let mut v = DVector::from_element(1, 1.0);
    for f in t.factors() {
        v = v.kronecker(f);
    }
    v
}

pub fn energy(k: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(k * v))
}

pub fn random_term<R: Rng>(mats: &[FactorMatrices], rng: &mut R) -> RankOneTerm {
    RankOneTerm::new(
        mats.iter()
            .map(|m| DVector::from_fn(m.n_dofs(), |_, _| rng.gen_range(-1.0..1.0)))
            .collect(),
    )
}

/// `Σ c_k w_k` with `‖w_k‖_a = 1` and the given coefficients.
pub fn normalized_target<R: Rng>(form: &EnergyForm, mats: &[FactorMatrices], coefs: &[f64], rng: &mut R) -> SeparatedFunction {
    SeparatedFunction::new(
        coefs
            .iter()
            .map(|&c| {
                let t = random_term(mats, rng);
                let n = form.energy_rank1(mats, &t, &t).unwrap().sqrt();
                (c, t.scaled(1.0 / n))
            })
            .collect(),
    )
}

pub fn random_spd2<R: Rng>(rng: &mut R) -> DMatrix<f64> {
    let l = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
    let a = &l * l.transpose() + DMatrix::identity(2, 2) * 0.5;
    (&a + a.transpose()) * 0.5
}

pub fn random_functional<R: Rng>(mats: &[FactorMatrices], rank: usize, rng: &mut R) -> SeparatedFunctional {
    let mut f = SeparatedFunctional::zero(mats.len());
    for _ in 0..rank {
        let loads = mats.iter().map(|m| DVector::from_fn(m.n_dofs(), |_, _| rng.gen_range(-1.0..1.0))).collect();
        f.push(rng.gen_range(0.5..1.5), loads).unwrap();
    }
    f
}

/// Dense load vector of a separated functional (index `a·n₂ + b`).
pub fn dense_load(f: &SeparatedFunctional) -> DVector<f64> {
    let mut out: Option<DVector<f64>> = None;
    for (w, loads) in f.terms() {
        let mut v = DVector::from_element(1, 1.0);
        for g in loads {
            v = v.kronecker(g);
        }
        let v = v * *w;
        out = Some(match out {
            Some(o) => o + v,
            None => v,
        });
    }
    out.expect("nonempty functional")
}

/// Brute-force minimum of `J(r₁⊗r₂) = ½ RᵀKR − FᵀR` over rank-one `R` by
/// BFGS from `restarts` random starts, with gradients from the dense
/// operator.
pub fn brute_force_rank1<R: Rng>(k: &DMatrix<f64>, f: &DVector<f64>, n1: usize, n2: usize, restarts: usize, rng: &mut R) -> f64 {
    let n = n1 + n2;
    let eval = |x: &DVector<f64>| -> (f64, DVector<f64>) {
        let r1 = x.rows(0, n1).into_owned();
        let r2 = x.rows(n1, n2).into_owned();
        let big = r1.kronecker(&r2);
        let kr = k * &big;
        let j = 0.5 * big.dot(&kr) - f.dot(&big);
        let g = kr - f;
        let gm = DMatrix::from_fn(n1, n2, |a, b| g[a * n2 + b]);
        let mut grad = DVector::zeros(n);
        grad.rows_mut(0, n1).copy_from(&(&gm * &r2));
        grad.rows_mut(n1, n2).copy_from(&(gm.transpose() * &r1));
        (j, grad)
    };
    let mut best = f64::INFINITY;
    for _ in 0..restarts {
        let mut x = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let mut h = DMatrix::<f64>::identity(n, n);
        let (mut j, mut g) = eval(&x);
        for _ in 0..5000 {
            if g.norm() <= 1e-13 * (1.0 + j.abs()) {
                break;
            }
            let mut p = -(&h * &g);
            if p.dot(&g) >= 0.0 {
                h = DMatrix::identity(n, n);
                p = -g.clone();
            }
            let mut step = 1.0;
            let (mut xn, mut jn, mut gn);
            loop {
                xn = &x + &p * step;
                (jn, gn) = eval(&xn);
                if jn <= j + 1e-4 * step * p.dot(&g) || step < 1e-20 {
                    break;
                }
                step *= 0.5;
            }
            let s = &xn - &x;
            let y = &gn - &g;
            let sy = s.dot(&y);
            if sy > 1e-300 {
                let rho = 1.0 / sy;
                let i = DMatrix::<f64>::identity(n, n);
                let left = &i - &s * y.transpose() * rho;
                let right = &i - &y * s.transpose() * rho;
                h = &left * &h * &right + &s * s.transpose() * rho;
            }
            let done = (j - jn).abs() <= 1e-16 * j.abs().max(1e-300) && step < 1e-12;
            x = xn;
            j = jn;
            g = gn;
            if done {
                break;
            }
        }
        best = best.min(j);
    }
    best
}
