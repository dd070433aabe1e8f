//! Weighted finite elements on one factor interval `[-√b, √b]`.
//!
//! Functions are represented in the `u = ψ/M` variable, so every integral
//! carries the Maxwellian as a weight and no essential boundary conditions
//! are imposed: the weight vanishes at the ends of the interval.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{graded_panels, GaussLegendre, QuadratureError};
use crate::spring::MaxwellianWeight;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscretizationError {
    #[error("mesh needs at least 4 elements, got {0}")]
    TooFewElements(usize),
    #[error("grading must be finite and >= 1, got {0}")]
    InvalidGrading(f64),
    #[error("extensibility b must be positive, got {0}")]
    InvalidWidth(f64),
    #[error("mesh does not match the weight's interval (mesh half-width {mesh}, weight half-width {weight})")]
    IntervalMismatch { mesh: f64, weight: f64 },
    #[error("element quadrature failed on element {element}: relative mismatch {mismatch:e}")]
    ElementQuadrature { element: usize, mismatch: f64 },
    #[error("coefficient vector has length {got}, basis has {expected} functions")]
    CoefficientLength { expected: usize, got: usize },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorMesh {
    nodes: Vec<f64>,
    grading: f64,
}

impl FactorMesh {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn n_elements(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn grading(&self) -> f64 {
        self.grading
    }

    pub fn half_width(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// Index of the element containing `x` (clamped to the mesh).
    pub fn locate(&self, x: f64) -> usize {
        let n_el = self.n_elements();
        match self.nodes.partition_point(|&node| node <= x) {
            0 => 0,
            i => (i - 1).min(n_el - 1),
        }
    }
}

/// Mesh of `[-√b, √b]` with `n_el` elements. For `grading > 1` the nodes
/// cluster toward both endpoints via `x = √b·sign(ξ)(1 − (1 − |ξ|)^grading)`
/// applied to a uniform `ξ ∈ [-1, 1]`.
pub fn build_mesh(b: f64, n_el: usize, grading: f64) -> Result<FactorMesh, DiscretizationError> {
    if n_el < 4 {
        return Err(DiscretizationError::TooFewElements(n_el));
    }
    if !(grading.is_finite() && grading >= 1.0) {
        return Err(DiscretizationError::InvalidGrading(grading));
    }
    if !(b.is_finite() && b > 0.0) {
        return Err(DiscretizationError::InvalidWidth(b));
    }
    let r = b.sqrt();
    let mut nodes: Vec<f64> = (0..=n_el)
        .map(|i| {
            let xi = -1.0 + 2.0 * i as f64 / n_el as f64;
            let mapped = xi.signum() * (1.0 - (1.0 - xi.abs()).powf(grading));
            r * mapped
        })
        .collect();
    // Exact endpoints and exact mirror symmetry.
    nodes[0] = -r;
    nodes[n_el] = r;
    for i in 0..=n_el / 2 {
        let v = 0.5 * (nodes[n_el - i] - nodes[i]);
        nodes[i] = -v;
        nodes[n_el - i] = v;
    }
    if n_el.is_multiple_of(2) {
        nodes[n_el / 2] = 0.0;
    }
    Ok(FactorMesh { nodes, grading })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisDegree {
    Linear,
    Quadratic,
}

impl BasisDegree {
    pub fn from_order(order: u32) -> Option<Self> {
        match order {
            1 => Some(BasisDegree::Linear),
            2 => Some(BasisDegree::Quadratic),
            _ => None,
        }
    }

    pub fn order(self) -> usize {
        match self {
            BasisDegree::Linear => 1,
            BasisDegree::Quadratic => 2,
        }
    }

    /// Shape values and reference derivatives at `xi ∈ [-1, 1]`, local order
    /// left vertex, (midpoint), right vertex.
    fn shape(self, xi: f64) -> ([f64; 3], [f64; 3]) {
        match self {
            BasisDegree::Linear => ([0.5 * (1.0 - xi), 0.5 * (1.0 + xi), 0.0], [-0.5, 0.5, 0.0]),
            BasisDegree::Quadratic => (
                [0.5 * xi * (xi - 1.0), 1.0 - xi * xi, 0.5 * xi * (xi + 1.0)],
                [xi - 0.5, -2.0 * xi, xi + 0.5],
            ),
        }
    }
}

/// Continuous piecewise-polynomial space on a factor mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSpace {
    mesh: FactorMesh,
    degree: BasisDegree,
}

impl FactorSpace {
    pub fn new(mesh: FactorMesh, degree: BasisDegree) -> Self {
        Self { mesh, degree }
    }

    pub fn mesh(&self) -> &FactorMesh {
        &self.mesh
    }

    pub fn degree(&self) -> BasisDegree {
        self.degree
    }

    pub fn n_dofs(&self) -> usize {
        self.degree.order() * self.mesh.n_elements() + 1
    }

    fn local_len(&self) -> usize {
        self.degree.order() + 1
    }

    /// Global indices of the local basis functions of element `e`, ordered
    /// left to right.
    pub fn element_dofs(&self, e: usize) -> impl Iterator<Item = usize> {
        let p = self.degree.order();
        (0..=p).map(move |k| p * e + k)
    }

    /// Coordinates of the dofs (vertices and, for quadratics, midpoints).
    pub fn dof_coordinates(&self) -> Vec<f64> {
        let nodes = self.mesh.nodes();
        match self.degree {
            BasisDegree::Linear => nodes.to_vec(),
            BasisDegree::Quadratic => {
                let mut out = Vec::with_capacity(self.n_dofs());
                for e in 0..self.mesh.n_elements() {
                    out.push(nodes[e]);
                    out.push(0.5 * (nodes[e] + nodes[e + 1]));
                }
                out.push(nodes[nodes.len() - 1]);
                out
            }
        }
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate<F: Fn(f64) -> f64>(&self, f: F) -> DVector<f64> {
        DVector::from_iterator(self.n_dofs(), self.dof_coordinates().into_iter().map(f))
    }

    fn local_shape(&self, e: usize, x: f64) -> ([f64; 3], [f64; 3]) {
        let nodes = self.mesh.nodes();
        let (lo, hi) = (nodes[e], nodes[e + 1]);
        let h = hi - lo;
        let xi = (2.0 * x - lo - hi) / h;
        let (phi, mut dphi) = self.degree.shape(xi);
        for d in dphi.iter_mut() {
            *d *= 2.0 / h;
        }
        (phi, dphi)
    }

    /// Value and derivative of the finite-element function with coefficients
    /// `coeffs` at `x`.
    pub fn evaluate(&self, coeffs: &DVector<f64>, x: f64) -> Result<(f64, f64), DiscretizationError> {
        if coeffs.len() != self.n_dofs() {
            return Err(DiscretizationError::CoefficientLength { expected: self.n_dofs(), got: coeffs.len() });
        }
        let e = self.mesh.locate(x);
        let (phi, dphi) = self.local_shape(e, x);
        let mut v = 0.0;
        let mut d = 0.0;
        for (k, g) in self.element_dofs(e).enumerate() {
            v += coeffs[g] * phi[k];
            d += coeffs[g] * dphi[k];
        }
        Ok((v, d))
    }
}

/// Weighted matrices of one factor.
///
/// * `mass[k][l] = ∫ M φ_k φ_l`
/// * `stiffness[k][l] = ∫ M φ_k' φ_l'`
/// * `grad_coupling[k][l] = ∫ M φ_l' φ_k`
#[derive(Debug, Clone)]
pub struct FactorMatrices {
    pub space: FactorSpace,
    pub weight: MaxwellianWeight,
    pub mass: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    pub grad_coupling: DMatrix<f64>,
}

impl FactorMatrices {
    pub fn n_dofs(&self) -> usize {
        self.mass.nrows()
    }

    pub fn mass_norm(&self, v: &DVector<f64>) -> f64 {
        self.mass_inner(v, v).max(0.0).sqrt()
    }

    pub fn mass_inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        u.dot(&(&self.mass * v))
    }
}

const INTERIOR_POINTS: usize = 12;
const BOUNDARY_LEVELS: usize = 48;
const ELEMENT_CHECK_TOL: f64 = 1e-9;

/// Assembles the weighted mass, stiffness and gradient-coupling matrices.
///
/// Interior elements use a 12-point Gauss rule. The two elements touching
/// `±√b` use geometrically graded panels toward the endpoint, because the
/// weight behaves like a non-integer power of the distance there; their
/// weight integral is cross-checked against a 16-point variant.
pub fn assemble(
    mesh: &FactorMesh,
    weight: &MaxwellianWeight,
    degree: BasisDegree,
) -> Result<FactorMatrices, DiscretizationError> {
    let r = weight.model().half_width();
    if (mesh.half_width() - r).abs() > 1e-12 * r {
        return Err(DiscretizationError::IntervalMismatch { mesh: mesh.half_width(), weight: r });
    }
    let space = FactorSpace::new(mesh.clone(), degree);
    let n = space.n_dofs();
    let n_el = mesh.n_elements();
    let rule = GaussLegendre::new(INTERIOR_POINTS)?;
    let check_rule = GaussLegendre::new(16)?;

    let mut mass = DMatrix::zeros(n, n);
    let mut stiffness = DMatrix::zeros(n, n);
    let mut grad_coupling = DMatrix::zeros(n, n);
    let nodes = mesh.nodes();
    let nloc = space.local_len();

    for e in 0..n_el {
        let (lo, hi) = (nodes[e], nodes[e + 1]);
        let points: Vec<(f64, f64)> = if e == 0 || e + 1 == n_el {
            let toward = if e == 0 { lo } else { hi };
            let pts = graded_panels(lo, hi, toward, BOUNDARY_LEVELS, &rule);
            let check = graded_panels(lo, hi, toward, BOUNDARY_LEVELS, &check_rule);
            let a: f64 = pts.iter().map(|&(x, w)| w * weight.density(x)).sum();
            let b: f64 = check.iter().map(|&(x, w)| w * weight.density(x)).sum();
            let mismatch = (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
            if !(mismatch <= ELEMENT_CHECK_TOL) {
                return Err(DiscretizationError::ElementQuadrature { element: e, mismatch });
            }
            pts
        } else {
            rule.mapped(lo, hi).collect()
        };

        let mut m_loc = [[0.0; 3]; 3];
        let mut k_loc = [[0.0; 3]; 3];
        let mut c_loc = [[0.0; 3]; 3];
        for (x, w) in points {
            let wm = w * weight.density(x);
            if wm == 0.0 {
                continue;
            }
            let (phi, dphi) = space.local_shape(e, x);
            for a in 0..nloc {
                for b in 0..nloc {
                    m_loc[a][b] += wm * (phi[a] * phi[b]);
                    k_loc[a][b] += wm * (dphi[a] * dphi[b]);
                    c_loc[a][b] += wm * (dphi[b] * phi[a]);
                }
            }
        }
        let dofs: Vec<usize> = space.element_dofs(e).collect();
        for a in 0..nloc {
            for b in 0..nloc {
                mass[(dofs[a], dofs[b])] += m_loc[a][b];
                stiffness[(dofs[a], dofs[b])] += k_loc[a][b];
                grad_coupling[(dofs[a], dofs[b])] += c_loc[a][b];
            }
        }
    }

    Ok(FactorMatrices { space, weight: *weight, mass, stiffness, grad_coupling })
}
