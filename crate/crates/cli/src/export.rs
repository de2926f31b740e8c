//! CSV artifacts. Every file opens with a `#` comment header holding the
//! tool version, the command and the full resolved configuration, which
//! [`RunConfig::from_header`] reads back.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use habit_core::annuity::{AewResult, AnnuitizeResult};
use habit_core::convergence::ConvergenceReport;
use habit_core::montecarlo::{DepletionStats, SimPaths};
use habit_core::pension::ValuePolicySolution;
use habit_core::scaled::ScaledSolution;
use habit_core::wdt::WdtSolution;
use thiserror::Error;

use crate::config::RunConfig;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("cannot write {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Comment lines describing the run that produced a file.
pub fn header(command: &str, cfg: &RunConfig, extra: &[(String, String)]) -> Vec<String> {
    let mut out = vec![format!("habit-cli {VERSION}"), format!("command: {command}")];
    out.extend(extra.iter().map(|(k, v)| format!("{k}: {v}")));
    out.extend(cfg.resolved().to_lines());
    out
}

/// Writes the header and then CSV records.
pub struct CsvFile {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvFile {
    pub fn create(path: &Path, header: &[String], columns: &[&str]) -> Result<Self, ExportError> {
        let io = |source| ExportError::Io { path: path.to_path_buf(), source };
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let mut file = BufWriter::new(File::create(path).map_err(io)?);
        for line in header {
            writeln!(file, "# {line}").map_err(io)?;
        }
        let mut writer = csv::Writer::from_writer(file);
        writer
            .write_record(columns)
            .map_err(|source| ExportError::Csv { path: path.to_path_buf(), source })?;
        Ok(Self { path: path.to_path_buf(), writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), ExportError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer
            .write_record(fields)
            .map_err(|source| ExportError::Csv { path: self.path.clone(), source })
    }

    pub fn finish(mut self) -> Result<PathBuf, ExportError> {
        self.writer
            .flush()
            .map_err(|source| ExportError::Io { path: self.path.clone(), source })?;
        Ok(self.path)
    }
}

fn f(x: f64) -> String {
    x.to_string()
}

fn opt(x: Option<f64>) -> String {
    x.map(f).unwrap_or_default()
}

/// `t,w,cbar,V,c_star` for every retained slice.
pub fn write_surface(path: &Path, header: &[String], sol: &ValuePolicySolution) -> Result<PathBuf, ExportError> {
    let mut out = CsvFile::create(path, header, &["t", "w", "cbar", "V", "c_star"])?;
    let g = &sol.grid;
    for s in sol.snapshots.iter().rev() {
        for (k, &c) in g.c_axis.nodes().iter().enumerate() {
            for (j, &w) in g.w_axis.nodes().iter().enumerate() {
                let i = g.idx(j, k);
                out.row([f(s.t), f(w), f(c), f(s.value[i]), f(s.policy[i])])?;
            }
        }
    }
    out.finish()
}

/// `t,xs,nu,q_star,theta_star`; the share column is empty in fixed mode.
pub fn write_scaled(path: &Path, header: &[String], sol: &ScaledSolution) -> Result<PathBuf, ExportError> {
    let mut out = CsvFile::create(path, header, &["t", "xs", "nu", "q_star", "theta_star"])?;
    for s in sol.snapshots.iter().rev() {
        for (i, &xs) in sol.grid.xs_axis.nodes().iter().enumerate() {
            let theta = s.theta_star.as_ref().map(|v| v[i]);
            out.row([f(s.t), f(xs), f(s.nu[i]), f(s.q_star[i]), opt(theta)])?;
        }
    }
    out.finish()
}

/// `t,w,cbar,Td` for every retained slice.
pub fn write_wdt(path: &Path, header: &[String], sol: &WdtSolution) -> Result<PathBuf, ExportError> {
    let mut out = CsvFile::create(path, header, &["t", "w", "cbar", "Td"])?;
    let g = &sol.grid;
    for s in sol.snapshots.iter().rev() {
        for (k, &c) in g.c_axis.nodes().iter().enumerate() {
            for (j, &w) in g.w_axis.nodes().iter().enumerate() {
                out.row([f(s.t), f(w), f(c), f(s.td[g.idx(j, k)])])?;
            }
        }
    }
    out.finish()
}

/// One row per starting point of a depletion-age table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepletionRow {
    pub w0: f64,
    pub cbar0: f64,
    pub eta: f64,
    pub age: f64,
}

pub fn write_depletion_ages(path: &Path, header: &[String], rows: &[DepletionRow]) -> Result<PathBuf, ExportError> {
    let mut out = CsvFile::create(path, header, &["w0", "cbar0", "eta", "depletion_age"])?;
    for r in rows {
        out.row([f(r.w0), f(r.cbar0), f(r.eta), f(r.age)])?;
    }
    out.finish()
}

/// `w0,cbar0,eta,mean_age,std_age,censored_frac`.
pub fn write_sim_stats(
    path: &Path,
    header: &[String],
    w0: f64,
    cbar0: f64,
    eta: f64,
    stats: &DepletionStats,
) -> Result<PathBuf, ExportError> {
    let mut out = CsvFile::create(path, header, &["w0", "cbar0", "eta", "mean_age", "std_age", "censored_frac"])?;
    out.row([f(w0), f(cbar0), f(eta), f(stats.mean_age), f(stats.std_age), f(stats.censored_fraction)])?;
    out.finish()
}

/// `path,t,w,c,cbar` for the kept trajectories.
pub fn write_trajectories(path: &Path, header: &[String], paths: &SimPaths) -> Result<PathBuf, ExportError> {
    let mut out = CsvFile::create(path, header, &["path", "t", "w", "c", "cbar"])?;
    for (i, traj) in paths.trajectories.iter().enumerate() {
        for s in traj {
            out.row([i.to_string(), f(s.t), f(s.w), f(s.c), f(s.cbar)])?;
        }
    }
    out.finish()
}

/// `w,deltaV` of one curve.
pub fn write_delta_v(path: &Path, header: &[String], r: &AnnuitizeResult) -> Result<PathBuf, ExportError> {
    let mut out = CsvFile::create(path, header, &["w", "deltaV"])?;
    for &(w, dv) in &r.curve {
        out.row([f(w), f(dv)])?;
    }
    out.finish()
}

/// `log_xs,deltaV` of one curve, with `xs = w / cbar`; `w = 0` is left out.
pub fn write_delta_v_scaled(path: &Path, header: &[String], r: &AnnuitizeResult) -> Result<PathBuf, ExportError> {
    let mut out = CsvFile::create(path, header, &["log_xs", "deltaV"])?;
    for &(w, dv) in r.curve.iter().filter(|(w, _)| *w > 0.0) {
        out.row([f((w / r.cbar).ln()), f(dv)])?;
    }
    out.finish()
}

/// Annuitization threshold of one model at one habit level.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRow {
    pub theta: f64,
    pub eta: f64,
    pub cbar_request: f64,
    pub result: AnnuitizeResult,
}

/// Long format: one row per `(theta, eta, cbar)`.
pub fn write_thresholds(path: &Path, header: &[String], rows: &[ThresholdRow]) -> Result<PathBuf, ExportError> {
    let cols = ["theta", "eta", "cbar_request", "cbar_node", "rule", "crossing", "multiple_crossings"];
    let mut out = CsvFile::create(path, header, &cols)?;
    for r in rows {
        out.row([
            f(r.theta),
            f(r.eta),
            f(r.cbar_request),
            f(r.result.cbar),
            r.result.rule.label(),
            opt(r.result.crossing),
            r.result.multiple_crossings.to_string(),
        ])?;
    }
    out.finish()
}

/// Wide format: a row per risky share, a column per `(cbar, eta)` pair,
/// `*` where the difference keeps one sign.
pub fn write_threshold_table(path: &Path, header: &[String], rows: &[ThresholdRow]) -> Result<PathBuf, ExportError> {
    let mut thetas: Vec<f64> = rows.iter().map(|r| r.theta).collect();
    thetas.sort_by(f64::total_cmp);
    thetas.dedup();
    let mut cols: Vec<(f64, f64)> = rows.iter().map(|r| (r.cbar_request, r.eta)).collect();
    cols.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    cols.dedup();
    let names: Vec<String> = std::iter::once("theta".to_string())
        .chain(cols.iter().map(|(c, e)| format!("cbar={c} eta={e}")))
        .collect();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut out = CsvFile::create(path, header, &names)?;
    for &theta in &thetas {
        let mut row = vec![f(theta)];
        for &(c, e) in &cols {
            let cell = rows
                .iter()
                .find(|r| r.theta == theta && r.cbar_request == c && r.eta == e)
                .map(|r| r.result.crossing.map_or("*".to_string(), |x| format!("{x:.2}")))
                .unwrap_or_default();
            row.push(cell);
        }
        out.row(row)?;
    }
    out.finish()
}

/// `w,w_hat,target,mismatch`.
pub fn write_aew(path: &Path, header: &[String], rows: &[AewResult]) -> Result<PathBuf, ExportError> {
    let mut out = CsvFile::create(path, header, &["w", "w_hat", "target", "mismatch"])?;
    for r in rows {
        out.row([f(r.w), opt(r.w_hat), f(r.target), f(r.mismatch)])?;
    }
    out.finish()
}

/// `nodes_coarse,nodes_fine,L2,ER`; the first row has no ratio.
pub fn write_convergence(path: &Path, header: &[String], rep: &ConvergenceReport) -> Result<PathBuf, ExportError> {
    let mut out = CsvFile::create(path, header, &["nodes_coarse", "nodes_fine", "L2", "ER"])?;
    for (i, l2) in rep.l2.iter().enumerate() {
        let er = if i == 0 { None } else { rep.er[i - 1] };
        out.row([rep.intervals[i].to_string(), rep.intervals[i + 1].to_string(), f(*l2), opt(er)])?;
    }
    out.finish()
}

/// Generic numeric table for sweep curves.
pub fn write_table(path: &Path, header: &[String], columns: &[&str], rows: &[Vec<f64>]) -> Result<PathBuf, ExportError> {
    let mut out = CsvFile::create(path, header, columns)?;
    for r in rows {
        out.row(r.iter().map(|x| f(*x)))?;
    }
    out.finish()
}
