//! FENE and CPAIL spring laws on a one-dimensional factor interval.
//!
//! A spring with extensibility `b` lives on `(-√b, √b)`. Its potential
//! `U(s)` blows up logarithmically as `s → b/2`, so the Maxwellian
//! `M(q) ∝ exp(-U(q²/2))` vanishes like a power of the distance to the
//! boundary.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{integrate_adaptive, GaussLegendre, QuadratureError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpringError {
    #[error("{kind} spring requires b > {min}, got b = {b}")]
    ParameterOutOfRange { kind: SpringKind, b: f64, min: f64 },
    #[error("argument {value} outside the domain {domain}")]
    Domain { value: f64, domain: String },
    #[error("theta must be positive, got {0}")]
    NonPositiveTheta(f64),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpringKind {
    Fene,
    Cpail,
}

impl SpringKind {
    /// Lower bound on `b` under which the weighted-space hypotheses hold.
    pub fn min_extensibility(self) -> f64 {
        match self {
            SpringKind::Fene => 2.0,
            SpringKind::Cpail => 3.0,
        }
    }

    /// Upper end of the weak-degeneracy range where `𝔡²Q₁` has a finite,
    /// nonpositive boundary limit.
    fn weak_degeneracy_max(self) -> f64 {
        match self {
            SpringKind::Fene => 4.0,
            SpringKind::Cpail => 6.0,
        }
    }
}

impl std::fmt::Display for SpringKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpringKind::Fene => f.write_str("FENE"),
            SpringKind::Cpail => f.write_str("CPAIL"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpringModel {
    kind: SpringKind,
    b: f64,
}

/// Behaviour of `𝔡(q)² Q₁(q)` as `|q| → √b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryBehaviour {
    /// `Q₁` is bounded below on the whole interval, so no Hardy-type limit is
    /// needed.
    BoundedBelow,
    /// Finite boundary limit of `𝔡² Q₁`; admissible when it lies in `(-1/4, 0]`.
    Limit(f64),
}

impl BoundaryBehaviour {
    pub fn is_admissible(self) -> bool {
        match self {
            BoundaryBehaviour::BoundedBelow => true,
            BoundaryBehaviour::Limit(v) => v > -0.25 && v <= 0.0,
        }
    }
}

impl SpringModel {
    /// Builds a model in the parameter range where the weighted embedding and
    /// Weyl-growth hypotheses hold (FENE `b > 2`, CPAIL `b > 3`).
    pub fn new(kind: SpringKind, b: f64) -> Result<Self, SpringError> {
        let min = kind.min_extensibility();
        if !(b.is_finite() && b > min) {
            return Err(SpringError::ParameterOutOfRange { kind, b, min });
        }
        Ok(Self { kind, b })
    }

    pub fn fene(b: f64) -> Result<Self, SpringError> {
        Self::new(SpringKind::Fene, b)
    }

    pub fn cpail(b: f64) -> Result<Self, SpringError> {
        Self::new(SpringKind::Cpail, b)
    }

    /// Any `b > 0`. The closed forms are defined there, but outside the range
    /// accepted by [`SpringModel::new`] the analysis built on them does not
    /// apply.
    pub fn unrestricted(kind: SpringKind, b: f64) -> Result<Self, SpringError> {
        if !(b.is_finite() && b > 0.0) {
            return Err(SpringError::ParameterOutOfRange { kind, b, min: 0.0 });
        }
        Ok(Self { kind, b })
    }

    pub fn kind(&self) -> SpringKind {
        self.kind
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// `√b`, the half-width of the factor interval.
    pub fn half_width(&self) -> f64 {
        self.b.sqrt()
    }

    fn check_interior(&self, q: f64) -> Result<(), SpringError> {
        if q.is_finite() && q * q < self.b {
            Ok(())
        } else {
            Err(SpringError::Domain {
                value: q,
                domain: format!("(-{r}, {r})", r = self.half_width()),
            })
        }
    }

    /// Spring potential `U(s)` for `0 ≤ s < b/2`.
    pub fn potential(&self, s: f64) -> Result<f64, SpringError> {
        if !(s.is_finite() && s >= 0.0 && s < 0.5 * self.b) {
            return Err(SpringError::Domain { value: s, domain: format!("[0, {})", 0.5 * self.b) });
        }
        let log_term = (-2.0 * s / self.b).ln_1p();
        Ok(match self.kind {
            SpringKind::Fene => -0.5 * self.b * log_term,
            SpringKind::Cpail => s / 3.0 - self.b / 3.0 * log_term,
        })
    }

    /// Spring force `F(q) = U'(q²/2) q`.
    pub fn force(&self, q: f64) -> Result<f64, SpringError> {
        self.check_interior(q)?;
        let stretch = 1.0 - q * q / self.b;
        Ok(match self.kind {
            SpringKind::Fene => q / stretch,
            SpringKind::Cpail => q * (1.0 - q * q / (3.0 * self.b)) / stretch,
        })
    }

    /// `ln` of the unnormalized Maxwellian, i.e. `-U(q²/2)`.
    pub fn log_maxwellian(&self, q: f64) -> Result<f64, SpringError> {
        self.check_interior(q)?;
        let log_stretch = (-q * q / self.b).ln_1p();
        Ok(match self.kind {
            SpringKind::Fene => 0.5 * self.b * log_stretch,
            SpringKind::Cpail => -q * q / 6.0 + self.b / 3.0 * log_stretch,
        })
    }

    /// Unnormalized Maxwellian: FENE `(1-q²/b)^{b/2}`, CPAIL
    /// `exp(-q²/6)(1-q²/b)^{b/3}`.
    pub fn maxwellian(&self, q: f64) -> Result<f64, SpringError> {
        self.log_maxwellian(q).map(f64::exp)
    }

    /// Unnormalized Maxwellian extended by zero outside the open interval.
    pub(crate) fn maxwellian_or_zero(&self, q: f64) -> f64 {
        self.maxwellian(q).unwrap_or(0.0)
    }

    /// Computes `Z⁻¹` so that the Maxwellian integrates to one.
    ///
    /// `order` is the Gauss–Legendre order of each adaptive panel.
    pub fn normalize(&self, order: usize) -> Result<MaxwellianWeight, SpringError> {
        let rule = GaussLegendre::new(order)?;
        // Symmetric weight: integrate over [0, √b) and double.
        let half = integrate_adaptive(|q| self.maxwellian_or_zero(q), 0.0, self.half_width(), &rule, 1e-13)?;
        Ok(MaxwellianWeight { model: *self, z_inv: 1.0 / (2.0 * half) })
    }

    /// `Q_Θ = Θ − w^{-1/2} (w (w^{-1/2})')'` for the Maxwellian weight `w`,
    /// evaluated from its closed form (factor dimension one).
    pub fn q_theta(&self, theta: f64, q: f64) -> Result<f64, SpringError> {
        if !(theta > 0.0) {
            return Err(SpringError::NonPositiveTheta(theta));
        }
        self.check_interior(q)?;
        let b = self.b;
        let q2 = q * q;
        let inv = 1.0 / (1.0 - q2 / b);
        Ok(match self.kind {
            SpringKind::Fene => theta + (0.25 - 1.0 / b) * q2 * inv * inv - 0.5 * inv,
            SpringKind::Cpail => {
                theta - 1.0 / 6.0 + q2 / 36.0 + (1.0 / 9.0 - 2.0 / (3.0 * b)) * q2 * inv * inv
                    - (1.0 / 3.0 - q2 / 9.0) * inv
            }
        })
    }

    /// Limit of `𝔡(q)² Q₁(q)` at the boundary, `𝔡 = √b − |q|`.
    ///
    /// FENE: `b(b/4 − 1)/4` for `b ≤ 4`; CPAIL: `b(b − 6)/36` for `b ≤ 6`.
    /// Above those values `Q₁` is bounded below instead.
    pub fn boundary_limit(&self) -> BoundaryBehaviour {
        if self.b > self.kind.weak_degeneracy_max() {
            return BoundaryBehaviour::BoundedBelow;
        }
        let b = self.b;
        BoundaryBehaviour::Limit(match self.kind {
            SpringKind::Fene => b * (b / 4.0 - 1.0) / 4.0,
            SpringKind::Cpail => b * (b - 6.0) / 36.0,
        })
    }
}

/// A normalized Maxwellian weight on one factor interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxwellianWeight {
    model: SpringModel,
    z_inv: f64,
}

impl MaxwellianWeight {
    pub fn model(&self) -> &SpringModel {
        &self.model
    }

    pub fn z_inv(&self) -> f64 {
        self.z_inv
    }

    /// `M(q)`; zero on and outside the boundary.
    pub fn density(&self, q: f64) -> f64 {
        self.z_inv * self.model.maxwellian_or_zero(q)
    }

    /// `M'(q) = −F(q) M(q)`; zero on and outside the boundary.
    pub fn derivative(&self, q: f64) -> f64 {
        match self.model.force(q) {
            Ok(force) => -force * self.density(q),
            Err(_) => 0.0,
        }
    }
}
