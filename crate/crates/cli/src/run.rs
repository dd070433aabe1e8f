//! Command implementations shared by the binary and the tests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use greedy_ou::discretization::{assemble, build_mesh, DiscretizationError, FactorMatrices};
use greedy_ou::eigen::{weyl_fit, EigenError, EigenSystem, RESOLUTION_TOL};
use greedy_ou::greedy::dense::{total_dofs, DEFAULT_DOF_BUDGET};
use greedy_ou::greedy::{
    run, Algorithm, EnergyForm, GreedyConfig, GreedyError, GreedyProblem, GreedyTrace, IterationRecord, RankOneTerm,
    SeparatedFunction, Termination,
};
use greedy_ou::regularity::{fourier_coeffs, rate_class_report, RateClassReport, RegularityError};
use greedy_ou::spring::SpringError;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, TargetConfig, SCHEMA_VERSION};
use crate::output;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Spring(#[from] SpringError),
    #[error(transparent)]
    Discretization(#[from] DiscretizationError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Greedy(#[from] GreedyError),
    #[error(transparent)]
    Regularity(#[from] RegularityError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    CoefficientFile { path: PathBuf, message: String },
    #[error("command needs a [target] section")]
    MissingTarget,
    #[error("--exact-dual needs at most {budget} total dof, config has {dofs}")]
    ExactDualTooLarge { dofs: usize, budget: usize },
    #[error("sweep entry {index}: {source}")]
    SweepEntry {
        index: usize,
        #[source]
        source: Box<RunError>,
    },
    #[error("config has no [[sweep]] entries")]
    EmptySweep,
    #[error("cannot create thread pool: {0}")]
    ThreadPool(String),
}

impl RunError {
    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
        move |source| RunError::Io { path: path.to_owned(), source }
    }
}

/// How a command finished; maps onto the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    MaxIterations,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::MaxIterations => 2,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: PathBuf,
    pub exact_dual: bool,
    pub jobs: Option<usize>,
}

/// Hex SHA-256 of the canonical JSON form of the config.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn build_factors(cfg: &ExperimentConfig, n_el: usize) -> Result<Vec<FactorMatrices>, RunError> {
    (0..cfg.model.n_factors)
        .into_par_iter()
        .map(|i| {
            let model = cfg.spring(i);
            let weight = model.normalize(20)?;
            let mesh = build_mesh(model.b(), n_el, cfg.mesh.grading)?;
            Ok(assemble(&mesh, &weight, cfg.degree())?)
        })
        .collect()
}

/// Eigensystem with `k` pairs per factor (clamped to the factor size), with
/// resolved counts from a doubled mesh when `refine` is set.
pub fn eigensystem(cfg: &ExperimentConfig, mats: &[FactorMatrices], k: usize, refine: bool) -> Result<EigenSystem, RunError> {
    for (i, m) in mats.iter().enumerate() {
        if k > m.n_dofs() {
            log::warn!("factor {i}: {k} eigenpairs requested, clamped to {} dof", m.n_dofs());
        }
    }
    let mut sys = EigenSystem::solve(mats, k)?;
    if refine {
        let fine_mats = build_factors(cfg, 2 * cfg.mesh.n_el)?;
        let fine = EigenSystem::solve(&fine_mats, k)?;
        for (f, r) in sys.factors_mut().iter_mut().zip(fine.factors()) {
            f.mark_resolved_against(r, RESOLUTION_TOL);
        }
    }
    Ok(sys)
}

/// A target together with `M = Σ |c_k| ‖w_k‖_a`, which bounds its
/// summable-expansion norm.
#[derive(Debug, Clone)]
pub struct Target {
    pub function: SeparatedFunction,
    pub expansion_bound: f64,
}

fn eigen_function(sys: &EigenSystem, terms: &[(f64, Vec<usize>)]) -> Result<SeparatedFunction, RunError> {
    let mut f = SeparatedFunction::default();
    for (w, idx) in terms {
        let factors = idx
            .iter()
            .zip(sys.factors())
            .enumerate()
            .map(|(factor, (&n, eig))| {
                if n == 0 || n > eig.len() {
                    Err(EigenError::IndexOutOfRange { factor, index: n, available: eig.len() })
                } else {
                    Ok(eig.vector(n))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        f.push(*w, RankOneTerm::new(factors));
    }
    Ok(f)
}

pub fn read_coefficient_file(path: &Path, n_factors: usize) -> Result<Vec<(f64, Vec<usize>)>, RunError> {
    let bad = |message: String| RunError::CoefficientFile { path: path.to_owned(), message };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| bad(e.to_string()))?;
    let mut out = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != n_factors + 1 {
            return Err(bad(format!("row {}: expected {} fields, got {}", line + 1, n_factors + 1, rec.len())));
        }
        let idx = rec
            .iter()
            .take(n_factors)
            .map(|s| s.parse::<usize>().ok().filter(|&n| n > 0))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad(format!("row {}: indices must be positive integers", line + 1)))?;
        let value: f64 = rec[n_factors].parse().map_err(|_| bad(format!("row {}: bad value", line + 1)))?;
        out.push((value, idx));
    }
    if out.is_empty() {
        return Err(bad("empty target".into()));
    }
    Ok(out)
}

/// Largest 1-based eigen index the target refers to (0 if none).
pub fn target_eigen_range(cfg: &ExperimentConfig) -> Result<usize, RunError> {
    Ok(match &cfg.target {
        Some(TargetConfig::Eigen { terms }) => terms.iter().flat_map(|t| t.index.iter().copied()).max().unwrap_or(0),
        Some(TargetConfig::Coefficients { path }) => read_coefficient_file(path, cfg.model.n_factors)?
            .iter()
            .flat_map(|(_, i)| i.iter().copied())
            .max()
            .unwrap_or(0),
        _ => 0,
    })
}

pub fn build_target(
    cfg: &ExperimentConfig,
    form: &EnergyForm,
    mats: &[FactorMatrices],
    sys: Option<&EigenSystem>,
) -> Result<Target, RunError> {
    let function = match cfg.target.as_ref().ok_or(RunError::MissingTarget)? {
        TargetConfig::Manufactured { coefficients, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut f = SeparatedFunction::default();
            for &c in coefficients {
                let t = RankOneTerm::new(
                    mats.iter()
                        .map(|m| DVector::from_fn(m.n_dofs(), |_, _| rng.gen_range(-1.0..1.0)))
                        .collect(),
                );
                let norm = form.energy_rank1(mats, &t, &t)?.sqrt();
                f.push(c, t.scaled(1.0 / norm));
            }
            f
        }
        TargetConfig::Eigen { terms } => {
            let sys = sys.expect("eigen targets need an eigensystem");
            eigen_function(sys, &terms.iter().map(|t| (t.weight, t.index.clone())).collect::<Vec<_>>())?
        }
        TargetConfig::Coefficients { path } => {
            let sys = sys.expect("coefficient targets need an eigensystem");
            eigen_function(sys, &read_coefficient_file(path, cfg.model.n_factors)?)?
        }
        TargetConfig::Constant => SeparatedFunction::new(vec![(1.0, RankOneTerm::constant(mats))]),
    };
    let mut bound = 0.0;
    for (c, t) in function.terms() {
        bound += c.abs() * form.energy_rank1(mats, t, t)?.sqrt();
    }
    Ok(Target { function, expansion_bound: bound })
}

/// Factors, form, eigensystem (when the target needs one) and target.
pub struct Problem {
    pub mats: Vec<FactorMatrices>,
    pub form: EnergyForm,
    pub target: Target,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Problem, RunError> {
    cfg.validate()?;
    let form = cfg.energy_form()?;
    let mats = build_factors(cfg, cfg.mesh.n_el)?;
    let k = target_eigen_range(cfg)?;
    let sys = if k > 0 { Some(EigenSystem::solve(&mats, k)?) } else { None };
    let target = build_target(cfg, &form, &mats, sys.as_ref())?;
    Ok(Problem { mats, form, target })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalNorms {
    pub rank: usize,
    pub target_norm_a: f64,
    pub err_energy: Option<f64>,
    pub surrogate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub factor_dofs: Vec<usize>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub coercivity: f64,
    pub continuity: f64,
    pub expansion_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub termination: Termination,
    pub rows: Vec<IterationRecord>,
    pub final_norms: FinalNorms,
    pub diagnostics: Diagnostics,
    pub wall_clock_s: f64,
}

impl RunRecord {
    pub fn outcome(&self) -> Outcome {
        match self.termination {
            Termination::MaxIterations => Outcome::MaxIterations,
            _ => Outcome::Success,
        }
    }
}

fn greedy_config(cfg: &ExperimentConfig, exact_dual: bool) -> GreedyConfig {
    GreedyConfig { tol_stop: cfg.solver.tol_stop, n_max: cfg.solver.n_max, als: cfg.als.into(), exact_dual }
}

fn trace_record(command: &str, cfg: &ExperimentConfig, problem: &Problem, trace: GreedyTrace, started: Instant) -> Result<RunRecord, RunError> {
    let surrogate = greedy_ou::greedy::stopping_surrogate(&trace).ok();
    let form = &problem.form;
    Ok(RunRecord {
        schema_version: SCHEMA_VERSION,
        command: command.into(),
        config_hash: config_hash(cfg),
        seed: cfg.als.seed,
        algorithm: trace.algorithm,
        termination: trace.termination,
        final_norms: FinalNorms {
            rank: trace.rows.len(),
            target_norm_a: problem.target.function.energy_norm(form, &problem.mats)?,
            err_energy: trace.rows.last().and_then(|r| r.err_energy),
            surrogate,
        },
        rows: trace.rows,
        diagnostics: Diagnostics {
            factor_dofs: problem.mats.iter().map(|m| m.n_dofs()).collect(),
            lambda_min: form.lambda_min(),
            lambda_max: form.lambda_max(),
            coercivity: form.coercivity(),
            continuity: form.continuity(),
            expansion_bound: problem.target.expansion_bound,
        },
        wall_clock_s: started.elapsed().as_secs_f64(),
    })
}

fn run_algorithm(cfg: &ExperimentConfig, problem: &Problem, algorithm: Algorithm, exact_dual: bool) -> Result<GreedyTrace, RunError> {
    let gp = GreedyProblem::manufactured(&problem.form, &problem.mats, problem.target.function.clone())?;
    let (_, trace) = run(algorithm, &gp, &greedy_config(cfg, exact_dual))?;
    Ok(trace)
}

fn create_dir(dir: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(dir).map_err(RunError::io(dir))
}

/// `solve`: one greedy run; writes `trace.csv` and `run.json`.
pub fn cmd_solve(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunRecord, RunError> {
    let started = Instant::now();
    let problem = prepare(cfg)?;
    if opts.exact_dual {
        let dofs = total_dofs(&problem.mats);
        if dofs > DEFAULT_DOF_BUDGET {
            return Err(RunError::ExactDualTooLarge { dofs, budget: DEFAULT_DOF_BUDGET });
        }
    }
    let trace = run_algorithm(cfg, &problem, cfg.solver.algorithm, opts.exact_dual)?;
    let record = trace_record("solve", cfg, &problem, trace, started)?;
    create_dir(&opts.out)?;
    output::write_trace_csv(&opts.out.join("trace.csv"), &record.rows)?;
    output::write_json(&opts.out.join("run.json"), &record)?;
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeylSummary {
    pub factor: usize,
    pub tail_start: usize,
    pub tail_end: usize,
    pub resolved: Option<usize>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub ratio: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigReport {
    pub k: usize,
    pub factors: Vec<Vec<f64>>,
    pub weyl: Vec<WeylSummary>,
}

/// `eig`: factor eigenvalues to `eig.csv`, Weyl summary to `weyl.json`.
pub fn cmd_eig(cfg: &ExperimentConfig, k: Option<usize>, opts: &RunOptions) -> Result<EigReport, RunError> {
    cfg.validate()?;
    let mats = build_factors(cfg, cfg.mesh.n_el)?;
    let k = k.unwrap_or(cfg.eig.k);
    let sys = eigensystem(cfg, &mats, k, cfg.eig.refine)?;
    let (s, e) = (cfg.eig.tail_start, cfg.eig.tail_end);
    let weyl = sys
        .factors()
        .iter()
        .enumerate()
        .map(|(factor, f)| {
            let usable = f.usable();
            let mut summary = WeylSummary { factor, tail_start: s, tail_end: e, resolved: f.resolved(), c1: None, c2: None, ratio: None, note: None };
            if e > usable {
                log::warn!("factor {factor}: Weyl tail ends at {e} beyond the {usable} usable eigenvalues");
                summary.note = Some(format!("tail exceeds the {usable} resolved eigenvalues"));
                return summary;
            }
            match weyl_fit(f.values(), 1, s..=e) {
                Ok(fit) => {
                    summary.c1 = Some(fit.c1);
                    summary.c2 = Some(fit.c2);
                    summary.ratio = Some(fit.ratio());
                }
                Err(err) => summary.note = Some(err.to_string()),
            }
            summary
        })
        .collect();
    let report = EigReport { k, factors: sys.factors().iter().map(|f| f.values().to_vec()).collect(), weyl };
    create_dir(&opts.out)?;
    output::write_eig_csv(&opts.out.join("eig.csv"), &sys)?;
    output::write_json(&opts.out.join("weyl.json"), &report.weyl)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub algorithm: Algorithm,
    pub n: usize,
    pub err_energy: f64,
    pub envelope_pga: f64,
    pub envelope_oga: f64,
    /// The envelope that applies to this algorithm was exceeded.
    pub exceeded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatesReport {
    pub expansion_bound: f64,
    pub rows: Vec<RateRow>,
    pub violations: usize,
    /// Least-squares slope of log error against log n, per algorithm.
    pub observed_slope: BTreeMap<String, Option<f64>>,
    pub termination: BTreeMap<String, Termination>,
}

/// Least-squares slope of `log y` against `log n` (`None` with < 2 points).
pub fn log_log_slope(ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = ys
        .iter()
        .enumerate()
        .filter(|(_, &y)| y > 0.0)
        .map(|(i, &y)| (((i + 1) as f64).ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// `rates`: PGA and OGA traces against `M n^{-1/6}` and `M n^{-1/2}`.
pub fn cmd_rates(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RatesReport, RunError> {
    let problem = prepare(cfg)?;
    let m = problem.target.expansion_bound;
    let mut rows = Vec::new();
    let mut slopes = BTreeMap::new();
    let mut termination = BTreeMap::new();
    for algorithm in [Algorithm::Pga, Algorithm::Oga] {
        let trace = run_algorithm(cfg, &problem, algorithm, false)?;
        let errs: Vec<f64> = trace.rows.iter().map(|r| r.err_energy.expect("target known")).collect();
        for (row, &err) in trace.rows.iter().zip(&errs) {
            let n = row.n as f64;
            let (env_pga, env_oga) = (m * n.powf(-1.0 / 6.0), m * n.powf(-0.5));
            let bound = if algorithm == Algorithm::Pga { env_pga } else { env_oga };
            rows.push(RateRow { algorithm, n: row.n, err_energy: err, envelope_pga: env_pga, envelope_oga: env_oga, exceeded: err > bound });
        }
        slopes.insert(algorithm.to_string(), log_log_slope(&errs));
        termination.insert(algorithm.to_string(), trace.termination);
    }
    let violations = rows.iter().filter(|r| r.exceeded).count();
    if violations > 0 {
        log::warn!("{violations} rate-envelope violations (local ALS minima?)");
    }
    let report = RatesReport { expansion_bound: m, rows, violations, observed_slope: slopes, termination };
    create_dir(&opts.out)?;
    output::write_rates_csv(&opts.out.join("rates.csv"), &report.rows)?;
    output::write_json(&opts.out.join("rates.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityOutput {
    pub config_hash: String,
    pub report: RateClassReport,
}

/// `regularity`: eigen-coefficient diagnostics of the target, to
/// `regularity.json`.
pub fn cmd_regularity(cfg: &ExperimentConfig, box_sizes: Option<Vec<usize>>, opts: &RunOptions) -> Result<RegularityOutput, RunError> {
    cfg.validate()?;
    let n = cfg.model.n_factors;
    let bx = box_sizes
        .or_else(|| (!cfg.regularity.box_sizes.is_empty()).then(|| cfg.regularity.box_sizes.clone()))
        .unwrap_or_else(|| vec![20; n]);
    if bx.len() != n || bx.contains(&0) {
        return Err(ConfigError::Invalid { field: "regularity.box".into(), message: format!("need {n} positive sizes") }.into());
    }
    let form = cfg.energy_form()?;
    let mats = build_factors(cfg, cfg.mesh.n_el)?;
    let k = bx.iter().copied().max().unwrap_or(1).max(target_eigen_range(cfg)?);
    let sys = eigensystem(cfg, &mats, k, cfg.regularity.refine)?;
    let target = build_target(cfg, &form, &mats, Some(&sys))?;
    let coeffs = fourier_coeffs(&target.function, &sys, &mats, &bx)?;
    let report = rate_class_report(&coeffs, &sys, 1, cfg.regularity.margin)?;
    let out = RegularityOutput { config_hash: config_hash(cfg), report };
    create_dir(&opts.out)?;
    output::write_json(&opts.out.join("regularity.json"), &out)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub name: String,
    pub algorithm: Algorithm,
    pub rank: usize,
    pub err_energy: Option<f64>,
    pub surrogate: Option<f64>,
    pub termination: Termination,
}

fn entry_name(index: usize, entry: &toml::Table) -> String {
    let raw = entry.get("name").and_then(|v| v.as_str()).map(str::to_owned).unwrap_or_else(|| format!("entry{index}"));
    raw.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// `sweep`: one `solve` per `[[sweep]]` entry, run in parallel on `--jobs`
/// threads; per-entry output under `sweep/<name>/` plus `sweep.csv`.
pub fn cmd_sweep(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<(Vec<SweepRow>, Outcome), RunError> {
    if cfg.sweep.is_empty() {
        return Err(RunError::EmptySweep);
    }
    let entries = cfg
        .sweep
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let merged = cfg.merged(e).map_err(|err| RunError::SweepEntry { index: i, source: Box::new(err.into()) })?;
            Ok((i, entry_name(i, e), merged))
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = opts.jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().map_err(|e| RunError::ThreadPool(e.to_string()))?;
    let results: Vec<Result<SweepRow, RunError>> = pool.install(|| {
        entries
            .par_iter()
            .map(|(i, name, entry)| {
                let sub = RunOptions { out: opts.out.join("sweep").join(name), exact_dual: opts.exact_dual, jobs: None };
                let rec = cmd_solve(entry, &sub).map_err(|e| RunError::SweepEntry { index: *i, source: Box::new(e) })?;
                Ok(SweepRow {
                    index: *i,
                    name: name.clone(),
                    algorithm: rec.algorithm,
                    rank: rec.final_norms.rank,
                    err_energy: rec.final_norms.err_energy,
                    surrogate: rec.final_norms.surrogate,
                    termination: rec.termination,
                })
            })
            .collect()
    });
    let rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    output::write_sweep_csv(&opts.out.join("sweep.csv"), &rows)?;
    let outcome = if rows.iter().any(|r| r.termination == Termination::MaxIterations) { Outcome::MaxIterations } else { Outcome::Success };
    Ok((rows, outcome))
}
