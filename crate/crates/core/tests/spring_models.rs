use greedy_ou::spring::{BoundaryBehaviour, SpringKind, SpringModel};
use proptest::prelude::*;

fn fd_q_theta(model: &SpringModel, theta: f64, q: f64, h: f64) -> f64 {
    // Θ − w^{-1/2} (w (w^{-1/2})')' with w = M, from log M only.
    let w = |x: f64| model.log_maxwellian(x).unwrap().exp();
    let g = |x: f64| (-0.5 * model.log_maxwellian(x).unwrap()).exp();
    let flux = |x: f64| w(x) * (g(x + h) - g(x - h)) / (2.0 * h);
    theta - (flux(q + h) - flux(q - h)) / (2.0 * h) / w(q).sqrt()
}

#[test]
fn q_theta_matches_finite_difference_definition() {
    for model in [
        SpringModel::fene(3.0).unwrap(),
        SpringModel::fene(8.0).unwrap(),
        SpringModel::cpail(4.0).unwrap(),
        SpringModel::cpail(9.0).unwrap(),
    ] {
        let a = model.half_width();
        for k in -8..=8 {
            let q = 0.9 * a * k as f64 / 8.0;
            let exact = model.q_theta(1.3, q).unwrap();
            let fd = fd_q_theta(&model, 1.3, q, 1e-4);
            assert!((exact - fd).abs() <= 1e-5 * exact.abs().max(1.0), "{model:?} q={q}: {exact} vs {fd}");
        }
    }
}

#[test]
fn fene_b3_boundary_scaling_converges() {
    let model = SpringModel::fene(3.0).unwrap();
    let target = -3.0 / 16.0;
    assert_eq!(model.boundary_limit(), BoundaryBehaviour::Limit(target));
    let mut errs = Vec::new();
    for dist in [1e-2, 1e-3, 1e-4] {
        let q = model.half_width() - dist;
        let v = dist * dist * model.q_theta(1.0, q).unwrap();
        errs.push(((v - target) / target).abs());
    }
    assert!(errs[2] <= 0.02, "{errs:?}");
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
}

#[test]
fn cpail_boundary_scaling_matches_limit() {
    for b in [4.0, 5.0] {
        let model = SpringModel::cpail(b).unwrap();
        let BoundaryBehaviour::Limit(target) = model.boundary_limit() else { panic!("expected a limit") };
        let dist = 1e-5;
        let v = dist * dist * model.q_theta(1.0, model.half_width() - dist).unwrap();
        assert!(((v - target) / target).abs() < 1e-3, "b={b}: {v} vs {target}");
        assert!(BoundaryBehaviour::Limit(target).is_admissible());
    }
}

#[test]
fn fene_b5_bounded_below() {
    let model = SpringModel::fene(5.0).unwrap();
    assert_eq!(model.boundary_limit(), BoundaryBehaviour::BoundedBelow);
    let a = model.half_width();
    let n = 10_000;
    let min = (0..n)
        .map(|k| -a + 2.0 * a * (k as f64 + 0.5) / n as f64)
        .map(|q| model.q_theta(1.0, q).unwrap())
        .fold(f64::INFINITY, f64::min);
    // Q₁ grows like 𝔡^{-2} at the boundary, so the minimum sits inside.
    assert!(min.is_finite() && min > -10.0, "min = {min}");
    let near = model.q_theta(1.0, a - 1e-6).unwrap();
    assert!(near > 0.0);
}

#[test]
fn normalization_integrates_to_one() {
    use greedy_ou::quadrature::{integrate_adaptive, GaussLegendre};
    let rule = GaussLegendre::new(20).unwrap();
    for model in [
        SpringModel::fene(2.5).unwrap(),
        SpringModel::fene(4.0).unwrap(),
        SpringModel::fene(8.0).unwrap(),
        SpringModel::cpail(3.5).unwrap(),
        SpringModel::cpail(6.0).unwrap(),
    ] {
        let w = model.normalize(20).unwrap();
        let a = model.half_width();
        let total = integrate_adaptive(|q| w.density(q), -a, a, &rule, 1e-14).unwrap();
        assert!((total - 1.0).abs() <= 1e-10, "{model:?}: {total}");
        assert!(w.density(a) <= 1e-12 && w.density(a + 1e-9) == 0.0 && w.density(0.0) > 0.0);
    }
}

#[test]
fn cpail_b3_example_is_accepted_only_unrestricted() {
    assert!(SpringModel::cpail(3.0).is_err());
    let m = SpringModel::unrestricted(SpringKind::Cpail, 3.0).unwrap();
    assert!((m.force(1.0).unwrap() - 4.0 / 3.0).abs() < 1e-15);
    assert_eq!(m.potential(0.0).unwrap(), 0.0);
}

fn any_model() -> impl Strategy<Value = SpringModel> {
    prop_oneof![
        (2.1f64..20.0).prop_map(|b| SpringModel::fene(b).unwrap()),
        (3.1f64..20.0).prop_map(|b| SpringModel::cpail(b).unwrap()),
    ]
}

proptest! {
    #[test]
    fn force_is_odd(model in any_model(), t in -0.999f64..0.999) {
        let q = t * model.half_width();
        prop_assert_eq!(model.force(-q).unwrap(), -model.force(q).unwrap());
    }

    #[test]
    fn force_is_derivative_of_minus_log_maxwellian(model in any_model(), t in -0.9f64..0.9) {
        let q = t * model.half_width();
        let h = 1e-5;
        let fd = -(model.log_maxwellian(q + h).unwrap() - model.log_maxwellian(q - h).unwrap()) / (2.0 * h);
        let f = model.force(q).unwrap();
        prop_assert!((fd - f).abs() <= 1e-6 * f.abs().max(1.0), "{} vs {}", fd, f);
    }

    #[test]
    fn potential_nondecreasing_and_convex(model in any_model(), t in 0.0f64..0.98) {
        let s = t * model.b() / 2.0;
        let h = 1e-3 * model.b() / 2.0;
        let u = |x: f64| model.potential(x).unwrap();
        let lo = (s - h).max(0.0);
        let mid = lo + h;
        prop_assert!(u(mid) >= u(lo));
        prop_assert!(u(mid + h) - 2.0 * u(mid) + u(lo) >= -1e-12 * u(mid + h).abs().max(1.0));
    }
}
