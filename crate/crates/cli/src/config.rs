//! Experiment configuration (TOML).
//!
//! ```toml
//! schema_version = 1
//!
//! [model]
//! n_factors = 2
//! springs = [{ kind = "fene", b = 4.0 }]   # one entry is reused for every factor
//! wi = 0.5
//! c = 1.0
//! coupling = { kind = "rouse", off_diagonal = -0.5 }   # identity | rouse | explicit
//!
//! [mesh]
//! n_el = 16
//! grading = 1.0
//! degree = 1
//!
//! [solver]
//! algorithm = "oga"
//! tol_stop = 1e-8
//! n_max = 20
//!
//! [als]
//! restarts = 8
//!
//! [target]
//! kind = "manufactured"
//! coefficients = [0.8, -0.5, 0.4, 0.2, 0.1]
//! ```

use std::path::{Path, PathBuf};

use greedy_ou::discretization::BasisDegree;
use greedy_ou::greedy::{AlsConfig, Algorithm, EnergyForm};
use greedy_ou::spring::{SpringKind, SpringModel};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub model: ModelConfig,
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub als: AlsSection,
    #[serde(default)]
    pub target: Option<TargetConfig>,
    #[serde(default)]
    pub eig: EigConfig,
    #[serde(default)]
    pub regularity: RegularityConfig,
    /// Overrides merged into this config, one run per entry (`sweep` only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<toml::Table>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_factors: usize,
    pub springs: Vec<SpringConfig>,
    pub wi: f64,
    pub c: f64,
    #[serde(default)]
    pub coupling: CouplingConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpringConfig {
    pub kind: SpringKind,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CouplingConfig {
    #[default]
    Identity,
    Rouse { off_diagonal: f64 },
    Explicit { matrix: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    pub n_el: usize,
    pub grading: f64,
    pub degree: u32,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self { n_el: 16, grading: 1.0, degree: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub tol_stop: f64,
    pub n_max: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { algorithm: Algorithm::Oga, tol_stop: 1e-8, n_max: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlsSection {
    pub tol: f64,
    pub stationarity: f64,
    pub max_sweeps: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for AlsSection {
    fn default() -> Self {
        let d = AlsConfig::default();
        Self { tol: d.tol, stationarity: d.stationarity, max_sweeps: d.max_sweeps, restarts: d.restarts, seed: d.seed }
    }
}

impl From<AlsSection> for AlsConfig {
    fn from(s: AlsSection) -> Self {
        AlsConfig { tol: s.tol, stationarity: s.stationarity, max_sweeps: s.max_sweeps, restarts: s.restarts, seed: s.seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenTerm {
    pub weight: f64,
    /// 1-based eigen index per factor.
    pub index: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TargetConfig {
    /// `Σ c_k w_k` with random rank-one `w_k` scaled to `‖w_k‖_a = 1`.
    Manufactured {
        coefficients: Vec<f64>,
        #[serde(default = "default_target_seed")]
        seed: u64,
    },
    /// Weighted products of factor eigenfunctions.
    Eigen { terms: Vec<EigenTerm> },
    /// Eigen-expansion coefficients from a CSV file with rows
    /// `i_1, …, i_N, value` (1-based indices, header required). Relative
    /// paths are resolved against the config file.
    Coefficients { path: PathBuf },
    /// The constant function 1.
    Constant,
}

fn default_target_seed() -> u64 {
    7
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigConfig {
    pub k: usize,
    pub tail_start: usize,
    pub tail_end: usize,
    /// Compare against a solve on a doubled mesh to flag resolved pairs.
    pub refine: bool,
}

impl Default for EigConfig {
    fn default() -> Self {
        Self { k: 40, tail_start: 10, tail_end: 40, refine: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegularityConfig {
    #[serde(rename = "box")]
    pub box_sizes: Vec<usize>,
    pub margin: f64,
    pub refine: bool,
}

impl Default for RegularityConfig {
    fn default() -> Self {
        Self { box_sizes: Vec::new(), margin: greedy_ou::regularity::DEFAULT_MARGIN, refine: true }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file; relative target paths are made
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if let Some(TargetConfig::Coefficients { path }) = &mut self.target {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid("schema_version", format!("expected {SCHEMA_VERSION}, got {}", self.schema_version)));
        }
        let m = &self.model;
        if m.n_factors == 0 {
            return Err(invalid("model.n_factors", "must be at least 1"));
        }
        if m.springs.len() != 1 && m.springs.len() != m.n_factors {
            return Err(invalid("model.springs", format!("need 1 or {} entries, got {}", m.n_factors, m.springs.len())));
        }
        for (i, s) in m.springs.iter().enumerate() {
            SpringModel::new(s.kind, s.b).map_err(|e| invalid(format!("model.springs[{i}].b"), e.to_string()))?;
        }
        self.energy_form()?;

        let mesh = &self.mesh;
        if mesh.n_el < 4 {
            return Err(invalid("mesh.n_el", format!("must be at least 4, got {}", mesh.n_el)));
        }
        if !(mesh.grading >= 1.0 && mesh.grading.is_finite()) {
            return Err(invalid("mesh.grading", format!("must be finite and >= 1, got {}", mesh.grading)));
        }
        if BasisDegree::from_order(mesh.degree).is_none() {
            return Err(invalid("mesh.degree", format!("must be 1 or 2, got {}", mesh.degree)));
        }

        let s = &self.solver;
        if !(s.tol_stop > 0.0 && s.tol_stop < 1.0) {
            return Err(invalid("solver.tol_stop", format!("must lie in (0, 1), got {}", s.tol_stop)));
        }
        if s.n_max == 0 {
            return Err(invalid("solver.n_max", "must be at least 1"));
        }
        let a = &self.als;
        if !(a.tol > 0.0) {
            return Err(invalid("als.tol", format!("must be positive, got {}", a.tol)));
        }
        if !(a.stationarity > 0.0) {
            return Err(invalid("als.stationarity", format!("must be positive, got {}", a.stationarity)));
        }
        if a.max_sweeps == 0 {
            return Err(invalid("als.max_sweeps", "must be at least 1"));
        }
        if a.restarts == 0 {
            return Err(invalid("als.restarts", "must be at least 1"));
        }

        match &self.target {
            Some(TargetConfig::Manufactured { coefficients, .. }) => {
                if coefficients.is_empty() {
                    return Err(invalid("target.coefficients", "empty target"));
                }
                if let Some(i) = coefficients.iter().position(|c| !c.is_finite()) {
                    return Err(invalid(format!("target.coefficients[{i}]"), "must be finite"));
                }
            }
            Some(TargetConfig::Eigen { terms }) => {
                if terms.is_empty() {
                    return Err(invalid("target.terms", "empty target"));
                }
                for (i, t) in terms.iter().enumerate() {
                    if t.index.len() != m.n_factors {
                        return Err(invalid(format!("target.terms[{i}].index"), format!("need {} indices", m.n_factors)));
                    }
                    if t.index.contains(&0) {
                        return Err(invalid(format!("target.terms[{i}].index"), "indices are 1-based"));
                    }
                }
            }
            Some(TargetConfig::Coefficients { .. }) | Some(TargetConfig::Constant) | None => {}
        }

        let e = &self.eig;
        if e.k == 0 {
            return Err(invalid("eig.k", "must be at least 1"));
        }
        if e.tail_start == 0 || e.tail_start > e.tail_end {
            return Err(invalid("eig.tail_start", "tail must be a nonempty 1-based range"));
        }
        let r = &self.regularity;
        if !r.box_sizes.is_empty() && r.box_sizes.len() != m.n_factors {
            return Err(invalid("regularity.box", format!("need {} sizes", m.n_factors)));
        }
        if r.box_sizes.contains(&0) {
            return Err(invalid("regularity.box", "sizes must be positive"));
        }
        if !(r.margin > 0.0) {
            return Err(invalid("regularity.margin", "must be positive"));
        }
        Ok(())
    }

    pub fn spring(&self, factor: usize) -> SpringModel {
        let s = if self.model.springs.len() == 1 { self.model.springs[0] } else { self.model.springs[factor] };
        SpringModel::new(s.kind, s.b).expect("validated")
    }

    pub fn degree(&self) -> BasisDegree {
        BasisDegree::from_order(self.mesh.degree).expect("validated")
    }

    pub fn coupling_matrix(&self) -> Result<DMatrix<f64>, ConfigError> {
        let n = self.model.n_factors;
        Ok(match &self.model.coupling {
            CouplingConfig::Identity => DMatrix::identity(n, n),
            CouplingConfig::Rouse { off_diagonal } => DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    1.0
                } else if i.abs_diff(j) == 1 {
                    *off_diagonal
                } else {
                    0.0
                }
            }),
            CouplingConfig::Explicit { matrix } => {
                if matrix.len() != n || matrix.iter().any(|r| r.len() != n) {
                    return Err(invalid("model.coupling.matrix", format!("must be {n}x{n}")));
                }
                DMatrix::from_fn(n, n, |i, j| matrix[i][j])
            }
        })
    }

    pub fn energy_form(&self) -> Result<EnergyForm, ConfigError> {
        EnergyForm::new(self.coupling_matrix()?, self.model.wi, self.model.c).map_err(|e| {
            use greedy_ou::greedy::GreedyError::*;
            let field = match e {
                InvalidParameter { name: "wi", .. } => "model.wi",
                InvalidParameter { .. } => "model.c",
                _ => "model.coupling",
            };
            invalid(field, e.to_string())
        })
    }

    /// Applies `--seed`.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.als.seed = s;
        }
        self
    }

    /// The config with `overrides` merged in (tables recursively).
    pub fn merged(&self, overrides: &toml::Table) -> Result<Self, ConfigError> {
        let mut base = toml::Table::try_from(Self { sweep: Vec::new(), ..self.clone() })
            .map_err(|e| ConfigError::Parse(e.to_string()))?;
        merge(&mut base, overrides);
        base.remove("name");
        let cfg: Self = base.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn merge(base: &mut toml::Table, over: &toml::Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
[model]
n_factors = 2
springs = [{ kind = "fene", b = 4.0 }]
wi = 0.5
c = 1.0
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.als.seed, 42);
        assert_eq!(cfg.mesh.degree, 2);
        assert_eq!(cfg.solver.algorithm, Algorithm::Oga);
        assert!(cfg.target.is_none());
    }

    #[test]
    fn field_paths_in_errors() {
        let bad = MINIMAL.replace("b = 4.0", "b = 1.5");
        let err = ExperimentConfig::from_toml_str(&bad).unwrap_err();
        assert!(err.to_string().starts_with("model.springs[0].b"), "{err}");
        let bad = MINIMAL.replace("wi = 0.5", "wi = -1.0");
        assert!(ExperimentConfig::from_toml_str(&bad).unwrap_err().to_string().starts_with("model.wi"));
        let bad = format!("{MINIMAL}coupling = {{ kind = \"explicit\", matrix = [[1.0, 2.0], [2.0, 1.0]] }}\n");
        let err = ExperimentConfig::from_toml_str(&bad).unwrap_err().to_string();
        assert!(err.contains("model.coupling") && err.contains("eigenvalue"), "{err}");
        let bad = MINIMAL.replace("schema_version = 1", "schema_version = 9");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn unknown_fields_rejected() {
        let bad = format!("{MINIMAL}bogus = 1\n");
        assert!(matches!(ExperimentConfig::from_toml_str(&bad), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn empty_target_refused() {
        let bad = format!("{MINIMAL}[target]\nkind = \"manufactured\"\ncoefficients = []\n");
        let err = ExperimentConfig::from_toml_str(&bad).unwrap_err().to_string();
        assert!(err.contains("empty target"));
    }

    #[test]
    fn sweep_overrides_merge_recursively() {
        let text = format!("{MINIMAL}[[sweep]]\nname = \"fast\"\nmodel.wi = 2.0\nsolver.algorithm = \"pga\"\n");
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        let entry = cfg.merged(&cfg.sweep[0]).unwrap();
        assert_eq!(entry.model.wi, 2.0);
        assert_eq!(entry.model.c, 1.0);
        assert_eq!(entry.solver.algorithm, Algorithm::Pga);
        assert!(entry.sweep.is_empty());
    }
}
