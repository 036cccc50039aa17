//! Re-emitting the reports of a finished run.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use driftlab::report::EstimateReport;

use crate::error::CliError;
use crate::output::{write_json, write_plot_data, write_summary};
use crate::run::RunManifest;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// All reports as one JSON array.
    Json,
    /// The summary table.
    Csv,
    /// One (x, y) CSV per report.
    PlotData,
}

pub fn read_manifest(path: &Path) -> Result<RunManifest, CliError> {
    let bad = |message: String| CliError::Manifest {
        path: path.to_path_buf(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| bad(e.to_string()))
}

/// Reports of a manifest that ran to completion, in manifest order.
pub fn load_reports(manifest: &Path) -> Result<Vec<(String, EstimateReport)>, CliError> {
    let m = read_manifest(manifest)?;
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for e in m.reports.iter().filter(|e| e.error.is_none()) {
        let path = dir.join(&e.report);
        let text = std::fs::read_to_string(&path).map_err(|err| CliError::io(&path, err))?;
        let r = serde_json::from_str(&text).map_err(|err| CliError::Manifest {
            path: path.clone(),
            message: err.to_string(),
        })?;
        out.push((e.check.clone(), r));
    }
    Ok(out)
}

/// Writes into `out`, or next to the manifest. Returns the files written.
pub fn report(
    manifest: &Path,
    format: Format,
    out: Option<&Path>,
) -> Result<Vec<PathBuf>, CliError> {
    let reports = load_reports(manifest)?;
    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| manifest.parent().unwrap_or(Path::new(".")).to_path_buf());
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    match format {
        Format::Json => {
            let path = dir.join("reports.json");
            let all: Vec<_> = reports.iter().map(|(_, r)| r).collect();
            write_json(&path, &all)?;
            Ok(vec![path])
        }
        Format::Csv => {
            let path = dir.join("summary.csv");
            write_summary(&path, reports.iter().map(|(id, r)| (id.as_str(), r)))?;
            Ok(vec![path])
        }
        Format::PlotData => {
            let plots = dir.join("plot-data");
            std::fs::create_dir_all(&plots).map_err(|e| CliError::io(&plots, e))?;
            let mut written = Vec::new();
            for (id, r) in &reports {
                let path = plots.join(format!("{id}.csv"));
                write_plot_data(&path, r)?;
                written.push(path);
            }
            Ok(written)
        }
    }
}
