//! Verification reports: measured constants, series, and a verdict.

use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A real number whose infinite values serialize as the strings `"+inf"` and `"-inf"`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Real(pub f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_finite() {
            s.serialize_f64(v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if v > 0.0 {
            s.serialize_str("+inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct RealVisitor;
        impl Visitor<'_> for RealVisitor {
            type Value = Real;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or one of \"+inf\", \"-inf\", \"nan\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Real, E> {
                Ok(Real(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Real, E> {
                Ok(Real(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Real, E> {
                Ok(Real(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Real, E> {
                match v {
                    "+inf" | "inf" => Ok(Real(f64::INFINITY)),
                    "-inf" => Ok(Real(f64::NEG_INFINITY)),
                    "nan" => Ok(Real(f64::NAN)),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(RealVisitor)
    }
}

impl From<f64> for Real {
    fn from(v: f64) -> Self {
        Real(v)
    }
}

impl fmt::Display for Real {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        let v = self.0;
        if v.is_finite() {
            write!(f, "{v}")
        } else if v.is_nan() {
            f.write_str("nan")
        } else if v > 0.0 {
            f.write_str("+inf")
        } else {
            f.write_str("-inf")
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// The estimate's hypothesis was not met by any instance; nothing is claimed.
    HypothesisUnmet,
}

/// Whether a constant is a supremum over trials (more trials can only raise
/// it) or an infimum (more trials can only lower it).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extremum {
    Max,
    Min,
    Fit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    pub value: Real,
    pub kind: Extremum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub h: f64,
    /// `(name, value)` pairs in a fixed order.
    pub values: Vec<(String, Real)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<(Real, Real)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    /// Descriptive estimate id, e.g. `harnack` or `oscillation-decay`.
    pub estimate: String,
    /// `elliptic` or `parabolic`.
    pub setting: String,
    pub seed: u64,
    pub configuration: serde_json::Value,
    pub measurements: Vec<Measurement>,
    pub trials: Vec<TrialRecord>,
    pub series: Vec<Series>,
    /// The pass rule in words.
    pub rule: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub expect_fail: bool,
    pub notes: Vec<String>,
}

impl EstimateReport {
    pub fn new(estimate: &str, setting: &str, seed: u64, configuration: serde_json::Value) -> Self {
        EstimateReport {
            estimate: estimate.to_string(),
            setting: setting.to_string(),
            seed,
            configuration,
            measurements: Vec::new(),
            trials: Vec::new(),
            series: Vec::new(),
            rule: String::new(),
            verdict: Verdict::Fail,
            expect_fail: false,
            notes: Vec::new(),
        }
    }

    pub fn measure(&mut self, name: &str, h: Option<f64>, value: f64, kind: Extremum) {
        self.measurements.push(Measurement {
            name: name.to_string(),
            h,
            value: Real(value),
            kind,
        });
    }

    /// First measurement with this name (and resolution, when given).
    pub fn value(&self, name: &str, h: Option<f64>) -> Option<f64> {
        self.measurements
            .iter()
            .find(|m| m.name == name && (h.is_none() || m.h == h))
            .map(|m| m.value.0)
    }

    pub fn values(&self, name: &str) -> Vec<(Option<f64>, f64)> {
        self.measurements
            .iter()
            .filter(|m| m.name == name)
            .map(|m| (m.h, m.value.0))
            .collect()
    }

    pub fn series(&self, name: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.name == name)
    }

    pub fn push_series(&mut self, name: &str, x: &str, y: &str, points: Vec<(f64, f64)>) {
        self.series.push(Series {
            name: name.to_string(),
            x_label: x.to_string(),
            y_label: y.to_string(),
            points: points
                .into_iter()
                .map(|(a, b)| (Real(a), Real(b)))
                .collect(),
        });
    }

    /// The run is acceptable: a pass, a hypothesis gate, or an expected failure.
    pub fn acceptable(&self) -> bool {
        match self.verdict {
            Verdict::Pass => !self.expect_fail,
            Verdict::Fail => self.expect_fail,
            Verdict::HypothesisUnmet => true,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}
