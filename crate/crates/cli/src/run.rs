//! Executing an experiment and writing its reports, summary and manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use driftlab::report::EstimateReport;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::Stage;
use crate::config::Experiment;
use crate::error::CliError;
use crate::output::{verdict_name, write_json, write_summary};

/// Fallback output directory when neither `--out` nor the config names one.
pub const OUT_ENV: &str = "DRIFTLAB_OUT";
pub const DEFAULT_OUT: &str = "driftlab-out";

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub check: String,
    pub stage: Stage,
    /// Relative to the manifest's directory.
    pub report: PathBuf,
    /// `pass`, `fail`, `hypothesis_unmet`, or `error`.
    pub verdict: String,
    pub expect_fail: bool,
    pub acceptable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config: PathBuf,
    pub config_sha256: String,
    pub version: String,
    pub seed: u64,
    pub jobs: usize,
    pub summary: PathBuf,
    pub reports: Vec<ManifestEntry>,
    pub seconds: f64,
}

impl RunManifest {
    pub fn failing(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.reports.iter().filter(|e| !e.acceptable)
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub dir: PathBuf,
    pub manifest_path: PathBuf,
}

impl RunOutcome {
    pub fn success(&self) -> bool {
        self.manifest.failing().next().is_none()
    }

    pub fn failing_paths(&self) -> Vec<PathBuf> {
        self.manifest
            .failing()
            .map(|e| self.dir.join(&e.report))
            .collect()
    }
}

/// `--out`, then the config's `out`, then the environment, then the default.
pub fn output_dir(cli: Option<&Path>, config: Option<&Path>) -> PathBuf {
    cli.or(config)
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    check: &'a str,
    seed: u64,
    options: &'a serde_json::Value,
    error: String,
}

pub fn run(config: &Path, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let exp = Experiment::load(config)?;
    run_experiment(&exp, opts)
}

pub fn run_experiment(exp: &Experiment, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let started = Instant::now();
    let dir = output_dir(opts.out.as_deref(), exp.config.out.as_deref());
    let reports_dir = dir.join("reports");
    std::fs::create_dir_all(&reports_dir).map_err(|e| CliError::io(&reports_dir, e))?;
    let jobs = opts
        .jobs
        .or(exp.config.jobs)
        .unwrap_or_else(rayon::current_num_threads)
        .max(1);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let seed = exp.config.seed;

    let mut entries = Vec::new();
    let mut finished: Vec<(&str, EstimateReport)> = Vec::new();
    let mut start = 0;
    while start < exp.checks.len() {
        let stage = exp.checks[start].stage;
        let end = exp.checks[start..]
            .iter()
            .position(|c| c.stage != stage)
            .map_or(exp.checks.len(), |k| start + k);
        let batch = &exp.checks[start..end];
        let results: Vec<_> = pool.install(|| {
            batch
                .par_iter()
                .map(|c| {
                    let t = Instant::now();
                    let r = c.run(seed);
                    (r, t.elapsed().as_secs_f64())
                })
                .collect()
        });
        // Serial writes, in plan order.
        for (check, (result, seconds)) in batch.iter().zip(results) {
            let entry = match result {
                Ok(report) => {
                    let rel = PathBuf::from("reports").join(format!("{}.json", check.id));
                    write_json(&dir.join(&rel), &report)?;
                    let entry = ManifestEntry {
                        check: check.id.to_string(),
                        stage: check.stage,
                        report: rel,
                        verdict: verdict_name(report.verdict).to_string(),
                        expect_fail: report.expect_fail,
                        acceptable: report.acceptable(),
                        error: None,
                        seconds,
                    };
                    finished.push((check.id, report));
                    entry
                }
                Err(e) => {
                    let rel = PathBuf::from("reports").join(format!("{}.error.json", check.id));
                    let body = ErrorReport {
                        check: check.id,
                        seed,
                        options: &check.options,
                        error: e.to_string(),
                    };
                    write_json(&dir.join(&rel), &body)?;
                    ManifestEntry {
                        check: check.id.to_string(),
                        stage: check.stage,
                        report: rel,
                        verdict: "error".to_string(),
                        expect_fail: false,
                        acceptable: false,
                        error: Some(e.to_string()),
                        seconds,
                    }
                }
            };
            entries.push(entry);
        }
        start = end;
    }

    let summary = PathBuf::from("summary.csv");
    write_summary(&dir.join(&summary), finished.iter().map(|(id, r)| (*id, r)))?;
    let manifest = RunManifest {
        experiment: exp.config.experiment.clone(),
        config: exp.path.clone(),
        config_sha256: exp.hash.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        jobs,
        summary,
        reports: entries,
        seconds: started.elapsed().as_secs_f64(),
    };
    let manifest_path = dir.join("manifest.json");
    write_json(&manifest_path, &manifest)?;
    Ok(RunOutcome {
        manifest,
        dir,
        manifest_path,
    })
}
