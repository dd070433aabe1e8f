//! Gauss–Legendre rules and an adaptive composite integrator.
//!
//! The Maxwellian weights vanish algebraically at the ends of the factor
//! interval, so the adaptive driver bisects until each panel's two-level
//! estimate agrees; panels next to an endpoint get refined geometrically.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("adaptive quadrature did not reach tolerance on [{a}, {b}] (estimated error {error:e})")]
    NotConverged { a: f64, b: f64, error: f64 },
    #[error("quadrature order must be at least 1")]
    ZeroOrder,
}

/// Gauss–Legendre nodes and weights on the reference interval [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Result<Self, QuadratureError> {
        if order == 0 {
            return Err(QuadratureError::ZeroOrder);
        }
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(Self { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Physical nodes and weights mapped onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p, d)
}

const MAX_DEPTH: usize = 64;

/// Adaptive composite Gauss–Legendre integration of `f` over `[a, b]`.
///
/// A panel is accepted when the one-panel and two-half-panel estimates agree
/// to `rel_tol` times the running magnitude of the integral, scaled by the
/// panel's share of the interval.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rule: &GaussLegendre,
    rel_tol: f64,
) -> Result<f64, QuadratureError> {
    let whole = rule.integrate(&f, a, b);
    let scale = {
        let abs_est: f64 = rule.mapped(a, b).map(|(x, w)| (w * f(x)).abs()).sum();
        abs_est.max(f64::MIN_POSITIVE)
    };
    let total_len = b - a;
    let mut stack = vec![(a, b, whole, 0usize)];
    let mut sum = 0.0;
    let mut comp = 0.0;
    while let Some((lo, hi, est, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = rule.integrate(&f, lo, mid);
        let right = rule.integrate(&f, mid, hi);
        let refined = left + right;
        let err = (refined - est).abs();
        let allowed = rel_tol * scale * ((hi - lo) / total_len).max(1e-3);
        if err <= allowed || (hi - lo) <= f64::EPSILON * total_len {
            // Neumaier summation keeps the accepted panels from losing digits.
            let t = sum + refined;
            if sum.abs() >= refined.abs() {
                comp += (sum - t) + refined;
            } else {
                comp += (refined - t) + sum;
            }
            sum = t;
        } else if depth >= MAX_DEPTH {
            return Err(QuadratureError::NotConverged { a: lo, b: hi, error: err });
        } else {
            stack.push((lo, mid, left, depth + 1));
            stack.push((mid, hi, right, depth + 1));
        }
    }
    Ok(sum + comp)
}

/// Nodes and weights of a composite rule on `[a, b]` whose panels shrink
/// geometrically (ratio 1/2) toward `toward`, which must be `a` or `b`.
pub fn graded_panels(a: f64, b: f64, toward: f64, levels: usize, rule: &GaussLegendre) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(levels * rule.order());
    let len = b - a;
    let toward_right = (toward - b).abs() <= (toward - a).abs();
    for level in 0..levels {
        let outer = len * 0.5f64.powi(level as i32);
        let inner = if level + 1 == levels { 0.0 } else { outer * 0.5 };
        let (lo, hi) = if toward_right {
            (b - outer, b - inner)
        } else {
            (a + inner, a + outer)
        };
        out.extend(rule.mapped(lo, hi));
    }
    out
}
