//! CSV and JSON writers. CSV uses `,` separators, `.` decimals, `\n` line
//! endings and a header row; floats are written in shortest round-trip
//! exponent form so identical runs give identical bytes.

use std::path::Path;

use greedy_ou::eigen::EigenSystem;
use greedy_ou::greedy::IterationRecord;
use serde::Serialize;

use crate::run::{RateRow, RunError, SweepRow};

pub fn float(x: f64) -> String {
    format!("{x:e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(float).unwrap_or_default()
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>, RunError> {
    let file = std::fs::File::create(path).map_err(RunError::io(path))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), RunError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = writer(path)?;
    let csv_err = |e: csv::Error| RunError::Io { path: path.to_owned(), source: std::io::Error::other(e) };
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush().map_err(RunError::io(path))
}

pub const TRACE_HEADER: [&str; 11] = [
    "n",
    "err_energy",
    "term_norm_a",
    "ortho_defect",
    "surrogate",
    "alpha_json",
    "gram_condition",
    "exact_dual",
    "j_value",
    "als_sweeps",
    "als_converged",
];

pub fn write_trace_csv(path: &Path, rows: &[IterationRecord]) -> Result<(), RunError> {
    write_rows(
        path,
        &TRACE_HEADER,
        rows.iter().map(|r| {
            let alpha = r
                .alpha
                .as_ref()
                .map(|a| format!("[{}]", a.iter().map(|x| float(*x)).collect::<Vec<_>>().join(",")))
                .unwrap_or_default();
            vec![
                r.n.to_string(),
                opt(r.err_energy),
                float(r.term_norm_a),
                float(r.ortho_defect),
                float(r.surrogate),
                alpha,
                opt(r.gram_condition),
                opt(r.exact_dual),
                float(r.j_value),
                r.als_sweeps.to_string(),
                r.als_converged.to_string(),
            ]
        }),
    )
}

pub fn write_eig_csv(path: &Path, sys: &EigenSystem) -> Result<(), RunError> {
    let mut rows = Vec::new();
    for (i, f) in sys.factors().iter().enumerate() {
        for (n, &l) in f.values().iter().enumerate() {
            let resolved = f.resolved().map(|r| (n < r).to_string()).unwrap_or_default();
            rows.push(vec![i.to_string(), (n + 1).to_string(), float(l), resolved]);
        }
    }
    write_rows(path, &["factor", "n", "lambda", "resolved"], rows)
}

pub fn write_rates_csv(path: &Path, rows: &[RateRow]) -> Result<(), RunError> {
    write_rows(
        path,
        &["algorithm", "n", "err_energy", "envelope_pga", "envelope_oga", "exceeded"],
        rows.iter().map(|r| {
            vec![
                r.algorithm.to_string(),
                r.n.to_string(),
                float(r.err_energy),
                float(r.envelope_pga),
                float(r.envelope_oga),
                r.exceeded.to_string(),
            ]
        }),
    )
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), RunError> {
    write_rows(
        path,
        &["index", "name", "algorithm", "rank", "err_energy", "surrogate", "termination"],
        rows.iter().map(|r| {
            vec![
                r.index.to_string(),
                r.name.clone(),
                r.algorithm.to_string(),
                r.rank.to_string(),
                opt(r.err_energy),
                opt(r.surrogate),
                serde_json::to_value(r.termination).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default(),
            ]
        }),
    )
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, text + "\n").map_err(RunError::io(path))
}
