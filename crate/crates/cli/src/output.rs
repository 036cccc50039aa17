//! File writers shared by `run` and `report`.

use std::io::Write;
use std::path::Path;

use driftlab::report::{EstimateReport, Verdict};
use serde::Serialize;

use crate::error::CliError;

pub const SUMMARY_HEADER: [&str; 6] =
    ["check_id", "seed", "h", "constant_name", "value", "verdict"];

pub fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
        Verdict::HypothesisUnmet => "hypothesis_unmet",
    }
}

/// Pretty JSON with a trailing newline. No timings go through here for
/// reports, so equal inputs give equal bytes.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        what: path.display().to_string(),
        source,
    })?;
    text.push('\n');
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// One row per measurement.
pub fn write_summary<'a>(
    path: &Path,
    reports: impl IntoIterator<Item = (&'a str, &'a EstimateReport)>,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for (id, r) in reports {
        for m in &r.measurements {
            w.write_record([
                id.to_string(),
                r.seed.to_string(),
                m.h.map(|h| h.to_string()).unwrap_or_default(),
                m.name.clone(),
                m.value.to_string(),
                verdict_name(r.verdict).to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Every series of a report, plus each per-resolution measurement as a
/// series over `h`. Columns: series, x_label, y_label, x, y.
pub fn write_plot_data(path: &Path, report: &EstimateReport) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["series", "x_label", "y_label", "x", "y"])?;
    for s in &report.series {
        for (x, y) in &s.points {
            w.write_record([
                s.name.as_str(),
                s.x_label.as_str(),
                s.y_label.as_str(),
                &x.to_string(),
                &y.to_string(),
            ])?;
        }
    }
    for m in &report.measurements {
        if let Some(h) = m.h {
            w.write_record([
                m.name.as_str(),
                "h",
                m.name.as_str(),
                &h.to_string(),
                &m.value.to_string(),
            ])?;
        }
    }
    let mut inner = w
        .into_inner()
        .map_err(|e| CliError::io(path, e.into_error()))?;
    inner.flush().map_err(|e| CliError::io(path, e))
}
