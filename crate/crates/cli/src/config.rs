//! Experiment files: one TOML document per experiment.
//!
//! ```toml
//! experiment = "clean-harnack"
//! seed = 7
//! suites = ["elliptic-core"]
//! checks = ["liouville"]
//!
//! [options.harnack]
//! trials = 200
//!
//! [swirl]
//! background = { kind = "rigid_swirl", omega = 1.0 }
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::{self, PlannedCheck, SwirlSection};
use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub seed: u64,
    #[serde(default)]
    pub suites: Vec<String>,
    #[serde(default)]
    pub checks: Vec<String>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub swirl: SwirlSection,
    /// Per-check option tables, keyed by check id.
    #[serde(default)]
    pub options: BTreeMap<String, toml::Table>,
}

/// A parsed config whose checks are all resolved and validated.
#[derive(Debug)]
pub struct Experiment {
    pub path: PathBuf,
    pub config: ExperimentConfig,
    /// sha256 of the file bytes, hex.
    pub hash: String,
    /// In execution order.
    pub checks: Vec<PlannedCheck>,
}

impl Experiment {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_text(path, &text)
    }

    /// Everything that can be rejected is rejected here, before any check runs.
    pub fn from_text(path: &Path, text: &str) -> Result<Self, CliError> {
        let err = |line: Option<usize>, field: Option<String>, message: String| CliError::Config {
            path: path.to_path_buf(),
            line,
            field,
            message,
        };
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start));
            err(line, None, e.message().trim().to_string())
        })?;
        if config.jobs == Some(0) {
            return Err(err(
                find_key(text, None, "jobs"),
                Some("jobs".into()),
                "must be at least 1".into(),
            ));
        }

        let mut ids: Vec<&'static str> = Vec::new();
        let push = |id: &str, ids: &mut Vec<&'static str>| {
            if let Some(known) = catalog::check_ids().find(|k| *k == id) {
                if !ids.contains(&known) {
                    ids.push(known);
                }
            }
        };
        for name in &config.suites {
            if !catalog::is_suite(name) {
                return Err(err(
                    find_quoted(text, name),
                    Some("suites".into()),
                    format!("unknown suite `{name}`"),
                ));
            }
            match catalog::suite(name) {
                Some(members) => members.iter().for_each(|id| push(id, &mut ids)),
                None => catalog::check_ids().for_each(|id| push(id, &mut ids)),
            }
        }
        for id in &config.checks {
            if !catalog::is_check(id) {
                return Err(err(
                    find_quoted(text, id),
                    Some("checks".into()),
                    format!("unknown check `{id}`"),
                ));
            }
            push(id, &mut ids);
        }
        if ids.is_empty() {
            return Err(CliError::NoChecks);
        }
        for key in config.options.keys() {
            if !ids.contains(&key.as_str()) {
                return Err(err(
                    find_header(text, &format!("options.{key}")),
                    None,
                    format!("options for `{key}`, which is not requested"),
                ));
            }
        }
        ids.sort_by_key(|id| catalog::order_key(id));

        let mut checks = Vec::with_capacity(ids.len());
        for id in ids {
            let user = match config.options.get(id) {
                Some(table) => serde_json::to_value(table).map_err(|e| {
                    err(
                        find_header(text, &format!("options.{id}")),
                        None,
                        e.to_string(),
                    )
                })?,
                None => serde_json::Value::Object(Default::default()),
            };
            let planned = catalog::plan(id, &user, &config.swirl).map_err(|e| {
                let line = match e.field.as_deref() {
                    Some("epsilon") => find_key(text, Some("swirl"), "epsilon"),
                    Some(f) => find_key(text, Some(&format!("options.{id}")), f),
                    None => None,
                }
                .or_else(|| find_header(text, &format!("options.{id}")))
                .or_else(|| find_quoted(text, id));
                err(line, e.field, format!("{id}: {}", e.message))
            })?;
            checks.push(planned);
        }

        Ok(Experiment {
            path: path.to_path_buf(),
            config,
            hash: hex::encode(Sha256::digest(text.as_bytes())),
            checks,
        })
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

fn find_header(text: &str, header: &str) -> Option<usize> {
    let want = format!("[{header}]");
    text.lines()
        .position(|l| strip_comment(l).replace(' ', "") == want)
        .map(|i| i + 1)
}

/// Line of `key = ...` inside `[table]`, or at top level when `table` is `None`.
fn find_key(text: &str, table: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    for (i, line) in text.lines().enumerate() {
        let l = strip_comment(line);
        if l.starts_with('[') {
            current = Some(l.trim_matches(|c| c == '[' || c == ']').replace(' ', ""));
            continue;
        }
        let here = current.as_deref() == table;
        if here && l.split('=').next().map(str::trim) == Some(key) && l.contains('=') {
            return Some(i + 1);
        }
    }
    None
}

fn find_quoted(text: &str, word: &str) -> Option<usize> {
    let q = format!("\"{word}\"");
    text.lines().position(|l| l.contains(&q)).map(|i| i + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<Experiment, CliError> {
        Experiment::from_text(Path::new("exp.toml"), text)
    }

    fn line_and_field(e: CliError) -> (Option<usize>, Option<String>) {
        match e {
            CliError::Config { line, field, .. } => (line, field),
            other => panic!("not a config error: {other}"),
        }
    }

    #[test]
    fn suite_expands_in_execution_order() {
        let x = load("experiment = \"a\"\nseed = 1\nsuites = [\"elliptic-core\"]\n").unwrap();
        let ids: Vec<_> = x.checks.iter().map(|c| c.id).collect();
        assert_eq!(
            ids,
            [
                "max-principle",
                "local-max",
                "growth",
                "oscillation-decay",
                "harnack"
            ]
        );
    }

    #[test]
    fn duplicates_collapse() {
        let x = load(
            "experiment = \"a\"\nseed = 1\nsuites = [\"chains\"]\nchecks = [\"chain\", \"chain\"]\n",
        )
        .unwrap();
        assert_eq!(x.checks.len(), 3);
    }

    #[test]
    fn seed_is_mandatory() {
        let (_, _) =
            line_and_field(load("experiment = \"a\"\nchecks = [\"chain\"]\n").unwrap_err());
    }

    #[test]
    fn empty_request_is_its_own_error() {
        let e = load("experiment = \"a\"\nseed = 1\n").unwrap_err();
        assert!(matches!(e, CliError::NoChecks));
        assert_eq!(e.exit_code(), 2);
        assert_eq!(e.to_string(), "no checks requested");
    }

    #[test]
    fn diagnostics_point_at_the_offending_line() {
        let text = "experiment = \"a\"\nseed = 1\nchecks = [\"harnack\"]\n\n[options.harnack]\nradius = 0.5\ntrials = 0\n";
        let (line, field) = line_and_field(load(text).unwrap_err());
        assert_eq!((line, field.as_deref()), (Some(7), Some("trials")));

        let text = "experiment = \"a\"\nseed = 1\nchecks = [\"harnack\",\n  \"harnak\"]\n";
        let (line, field) = line_and_field(load(text).unwrap_err());
        assert_eq!((line, field.as_deref()), (Some(4), Some("checks")));

        let text = "experiment = \"a\"\nseed = \"x\"\n";
        let (line, _) = line_and_field(load(text).unwrap_err());
        assert_eq!(line, Some(2));
    }

    #[test]
    fn inadmissible_exponent_rejected_before_running() {
        let text = "experiment = \"a\"\nseed = 1\nchecks = [\"oscillation-decay\"]\n[options.oscillation-decay]\nq = 1.0\n";
        let (line, field) = line_and_field(load(text).unwrap_err());
        assert_eq!(line, Some(5));
        assert_eq!(field.as_deref(), Some("q"));
    }

    #[test]
    fn stray_option_tables_are_rejected() {
        let text =
            "experiment = \"a\"\nseed = 1\nchecks = [\"chain\"]\n[options.harnack]\ntrials = 3\n";
        let (line, _) = line_and_field(load(text).unwrap_err());
        assert_eq!(line, Some(4));
    }

    #[test]
    fn hash_tracks_the_file_bytes() {
        let a = load("experiment = \"a\"\nseed = 1\nchecks = [\"chain\"]\n").unwrap();
        let b = load("experiment = \"a\"\nseed = 2\nchecks = [\"chain\"]\n").unwrap();
        assert_eq!(a.hash.len(), 64);
        assert_ne!(a.hash, b.hash);
    }
}
