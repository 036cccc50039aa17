//! Estimates turned into measurable checks over seeded families of solved
//! instances.
//!
//! Every check takes an options struct (serde, with defaults) and a seed and
//! returns an [`EstimateReport`]. Trials run concurrently; trial `i` draws
//! its coefficients and data from stream `i` of the seed, so results do not
//! depend on scheduling. Infima and suprema over a region are taken over the
//! interior grid nodes inside it.

mod data;
mod elliptic;
mod parabolic;

use rayon::prelude::*;

pub use data::{scale_family, trial_rng, Coefficients, DataKind, RandomCoefficients, TrialData};
pub use elliptic::*;
pub use parabolic::*;

use crate::error::{invalid, Result};
use crate::quadrature::linear_fit;
use crate::report::{EstimateReport, Extremum, Real, TrialRecord};

/// Denominators below this are treated as zero.
pub const TINY: f64 = 1e-14;

/// One trial's measured values, or the reason it was skipped.
#[derive(Clone, Debug, Default)]
pub(crate) struct Outcome {
    pub values: Vec<(&'static str, f64)>,
    pub skipped: Option<String>,
}

impl Outcome {
    pub fn skip(reason: impl Into<String>) -> Outcome {
        Outcome {
            values: Vec::new(),
            skipped: Some(reason.into()),
        }
    }

    pub fn with(values: Vec<(&'static str, f64)>) -> Outcome {
        Outcome {
            values,
            skipped: None,
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(n, _)| *n == name).map(|v| v.1)
    }
}

/// Run `n` independent trials concurrently, keeping trial order.
pub(crate) fn run_trials<T: Send>(
    n: usize,
    f: impl Fn(usize) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    (0..n).into_par_iter().map(&f).collect()
}

pub(crate) fn record(report: &mut EstimateReport, h: f64, outcomes: &[Outcome]) {
    for (i, o) in outcomes.iter().enumerate() {
        report.trials.push(TrialRecord {
            trial: i,
            h,
            values: o
                .values
                .iter()
                .map(|(n, v)| (n.to_string(), Real(*v)))
                .collect(),
            skipped: o.skipped.clone(),
        });
    }
}

/// Aggregate a max- or min-type constant over the non-skipped trials and
/// record it, together with its value over the first half of the trials.
pub(crate) fn aggregate(
    report: &mut EstimateReport,
    name: &str,
    h: Option<f64>,
    outcomes: &[Outcome],
    key: &str,
    kind: Extremum,
) -> Option<f64> {
    let fold = |os: &[Outcome]| {
        let vals = os.iter().filter_map(|o| o.get(key));
        match kind {
            Extremum::Min => vals.fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v)))),
            _ => vals.fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v)))),
        }
    };
    let all = fold(outcomes)?;
    report.measure(name, h, all, kind);
    if let Some(half) = fold(&outcomes[..outcomes.len() / 2]) {
        report.measure(&format!("{name}_half_trials"), h, half, kind);
    }
    Some(all)
}

/// A max-type constant is refinement-stable when each value exceeds the
/// previous (coarser) one by at most the slack.
pub fn stable_max(values: &[f64], slack: f64) -> bool {
    values.iter().all(|v| v.is_finite()) && values.windows(2).all(|w| w[1] <= w[0] * (1.0 + slack))
}

/// A min-type constant is refinement-stable when each value is at least the
/// previous one divided by `1 + slack`.
pub fn stable_min(values: &[f64], slack: f64) -> bool {
    values.iter().all(|v| v.is_finite()) && values.windows(2).all(|w| w[1] >= w[0] / (1.0 + slack))
}

/// Both directions within the slack.
pub fn stable_both(values: &[f64], slack: f64) -> bool {
    stable_max(values, slack) && stable_min(values, slack)
}

pub(crate) fn check_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.is_empty() {
        return Err(invalid("ladder", "at least one resolution is required"));
    }
    if ladder.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(invalid("ladder", "resolutions must be positive"));
    }
    if ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("ladder", "resolutions must decrease"));
    }
    Ok(())
}

/// Grids need `h ≤ r/2` on a domain of radius `r`.
pub(crate) fn fits(name: &'static str, h: f64, radius: f64) -> Result<()> {
    if h <= radius / 2.0 {
        Ok(())
    } else {
        Err(invalid(
            name,
            format!("h = {h} is too coarse for a domain of radius {radius}"),
        ))
    }
}

pub(crate) fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("{v} must be positive and finite")))
    }
}

pub(crate) fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        Err(invalid("trials", "at least one trial is required"))
    } else {
        Ok(())
    }
}

/// The largest level `k` with `#{v ≥ k} ≥ fraction · #values`.
pub(crate) fn upper_quantile(values: &[f64], fraction: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    let count = ((fraction * v.len() as f64).ceil() as usize).clamp(1, v.len());
    Some(v[count - 1])
}

pub(crate) fn fraction_at_least(values: &[f64], k: f64) -> f64 {
    values.iter().filter(|&&v| v >= k).count() as f64 / values.len().max(1) as f64
}

/// Least-squares fit of `log y` on `log x`: `(slope, intercept, r²)`.
pub(crate) fn log_fit(points: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    linear_fit(&xs, &ys)
}

pub(crate) fn to_json<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}
