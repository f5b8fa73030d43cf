use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

use super::gaussianity::GaussianityReport;
use super::simulate::RunResult;
use super::sweep::SweepRow;
use super::theory_run::TheoryResult;

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// Column table written as CSV: `k` followed by one column per series.
fn write_columns(path: &Path, headers: &[String], columns: &[&[f64]]) -> Result<()> {
    let rows = columns.iter().map(|c| c.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["k".to_string()];
    header.extend(headers.iter().cloned());
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for k in 0..rows {
        let mut rec = vec![k.to_string()];
        rec.extend(columns.iter().map(|c| c.get(k).map(|v| v.to_string()).unwrap_or_default()));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

#[derive(Serialize)]
struct CurveSummary<'a> {
    name: &'a str,
    steady_msd_db: f64,
    steady_stderr_db: f64,
    ops: crate::adaptive::OpCount,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_beta: Option<f64>,
}

#[derive(Serialize)]
struct SimulationSummary<'a> {
    frames: usize,
    curves: Vec<CurveSummary<'a>>,
    manifest: &'a super::simulate::Manifest,
}

/// Writes `msd.csv`, `beta.csv` (adaptive filters only) and `summary.json`.
pub fn emit_simulation(result: &RunResult, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    if !result.curves.is_empty() {
        let path = dir.join("msd.csv");
        let headers: Vec<String> = result.curves.iter().map(|c| c.name.clone()).collect();
        let cols: Vec<&[f64]> = result.curves.iter().map(|c| c.msd_db.as_slice()).collect();
        write_columns(&path, &headers, &cols)?;
        written.push(path);
    }
    let adaptive: Vec<_> = result.curves.iter().filter(|c| c.beta_traj.is_some()).collect();
    if !adaptive.is_empty() {
        let path = dir.join("beta.csv");
        let headers: Vec<String> = adaptive.iter().map(|c| c.name.clone()).collect();
        let cols: Vec<&[f64]> = adaptive.iter().map(|c| c.beta_traj.as_deref().unwrap_or(&[])).collect();
        write_columns(&path, &headers, &cols)?;
        written.push(path);
    }
    let summary = SimulationSummary {
        frames: result.frames,
        curves: result
            .curves
            .iter()
            .map(|c| CurveSummary {
                name: &c.name,
                steady_msd_db: c.steady_msd_db,
                steady_stderr_db: c.steady_stderr_db,
                ops: c.ops,
                final_beta: c.beta_traj.as_ref().and_then(|b| b.last().copied()),
            })
            .collect(),
        manifest: &result.manifest,
    };
    let path = dir.join("summary.json");
    write_json(&path, &summary)?;
    written.push(path);
    Ok(written)
}

/// Writes one `theory_<name>.csv` (`k,msd_db_theory`) per modelled algorithm
/// and `theory.json` with the steady-state reports.
pub fn emit_theory(result: &TheoryResult, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    for c in result.curves.iter().filter(|c| !c.msd_db.is_empty()) {
        let path = dir.join(format!("theory_{}.csv", c.name));
        write_columns(&path, &["msd_db_theory".to_string()], &[&c.msd_db])?;
        written.push(path);
    }
    let path = dir.join("theory.json");
    write_json(&path, result)?;
    written.push(path);
    Ok(written)
}

/// Writes `sweep.csv`.
pub fn emit_sweep(rows: &[SweepRow], dir: &Path) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `hist_<algorithm>_m<index>_k<frame>.csv` per checkpoint and `hist.json`.
pub fn emit_gaussianity(report: &GaussianityReport, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    for c in &report.checkpoints {
        let path = dir.join(format!("hist_{}_m{}_k{}.csv", c.algorithm, c.coefficient, c.frame));
        write_text(&path, &c.histogram.to_csv())?;
        written.push(path);
    }
    let path = dir.join("hist.json");
    write_json(&path, report)?;
    written.push(path);
    Ok(written)
}

/// One column of a curve CSV, indexed by `k`.
pub fn read_column(path: &Path, column: &str) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let idx = headers.iter().position(|h| h == column).ok_or_else(|| Error::Format {
        path: path.to_path_buf(),
        reason: format!("no column {column:?} (have {})", headers.iter().collect::<Vec<_>>().join(", ")),
    })?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let v = rec.get(idx).unwrap_or("");
        out.push(v.parse::<f64>().map_err(|_| Error::Format {
            path: path.to_path_buf(),
            reason: format!("bad number {v:?} in column {column:?}"),
        })?);
    }
    Ok(out)
}

/// Frame-by-frame difference between a simulated and a theoretical curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub frames: usize,
    /// Largest `|sim - theory|` over frames from `skip` on.
    pub max_abs_diff_db: f64,
    pub mean_abs_diff_db: f64,
    pub skip: usize,
}

/// Joins two curves on `k` and writes `compare.csv` (`k,simulation,theory,diff`).
pub fn compare_curves(simulation: &[f64], theory: &[f64], skip: usize, out: Option<&Path>) -> Result<Comparison> {
    let frames = simulation.len().min(theory.len());
    if skip >= frames {
        return Err(Error::invalid("skip", format!("{skip} leaves nothing of {frames} frames to compare")));
    }
    let diff: Vec<f64> = simulation.iter().zip(theory).map(|(s, t)| s - t).collect();
    if let Some(dir) = out {
        ensure_dir(dir)?;
        let path = dir.join("compare.csv");
        write_columns(
            &path,
            &["simulation".into(), "theory".into(), "diff".into()],
            &[&simulation[..frames], &theory[..frames], &diff],
        )?;
    }
    let tail = &diff[skip..];
    Ok(Comparison {
        frames,
        max_abs_diff_db: tail.iter().fold(0.0, |a: f64, d| a.max(d.abs())),
        mean_abs_diff_db: tail.iter().map(|d| d.abs()).sum::<f64>() / tail.len() as f64,
        skip,
    })
}
