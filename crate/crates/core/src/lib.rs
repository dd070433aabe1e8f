//! Greedy separated-representation solvers for Ornstein-Uhlenbeck type
//! operators with degenerate Maxwellian weights, plus the factor
//! discretization and spectral diagnostics they rely on.

pub mod discretization;
pub mod eigen;
pub mod greedy;
pub mod quadrature;
pub mod regularity;
pub mod spring;

pub use discretization::{assemble, build_mesh, BasisDegree, FactorMatrices, FactorMesh, FactorSpace};
pub use eigen::{EigenSystem, FactorEigen, TensorEigenIndex, WeylFit};
pub use spring::{MaxwellianWeight, SpringKind, SpringModel};
