//! Experiment reports: named checks comparing two numbers with standard
//! errors. Verdicts are a pure function of the recorded numbers and the
//! criterion, so a reloaded report can be re-audited.

use serde::{Deserialize, Serialize};

use crate::rng::Lane;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Inconclusive,
    Fail,
}

impl Verdict {
    /// Process exit status: 0 pass, 1 fail, 2 inconclusive.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Fail => 1,
            Verdict::Inconclusive => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Fail => "fail",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How `lhs` is compared with `rhs`; `se = sqrt(lhs_se^2 + rhs_se^2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Criterion {
    /// `|lhs - rhs| < max * se`.
    ZScore { max: f64 },
    /// `|lhs - rhs| <= tol`.
    Absolute { tol: f64 },
    /// `|lhs - rhs| <= tol * max(1, |rhs|)`.
    Relative { tol: f64 },
    /// `lhs - rhs > -sigmas * se` (a lower bound `rhs` on `lhs`).
    AtLeast { sigmas: f64 },
    /// `lhs - rhs < sigmas * se`.
    AtMost { sigmas: f64 },
    /// `lhs - rhs > sigmas * se` (strict growth beyond the noise).
    Exceeds { sigmas: f64 },
    /// `|lhs / rhs - 1| < tol`.
    RatioWithin { tol: f64 },
}

impl Criterion {
    pub fn judge(&self, lhs: f64, lhs_se: f64, rhs: f64, rhs_se: f64) -> Verdict {
        if !(lhs.is_finite() && rhs.is_finite() && lhs_se.is_finite() && rhs_se.is_finite()) {
            return Verdict::Fail;
        }
        let d = lhs - rhs;
        let se = lhs_se.hypot(rhs_se);
        let ok = match *self {
            Criterion::ZScore { max } => d.abs() < max * se || d == 0.0,
            Criterion::Absolute { tol } => d.abs() <= tol,
            Criterion::Relative { tol } => d.abs() <= tol * rhs.abs().max(1.0),
            Criterion::AtLeast { sigmas } => d > -sigmas * se || d >= 0.0,
            Criterion::AtMost { sigmas } => d < sigmas * se || d <= 0.0,
            Criterion::Exceeds { sigmas } => d > sigmas * se,
            Criterion::RatioWithin { tol } => rhs != 0.0 && (lhs / rhs - 1.0).abs() < tol,
        };
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

/// Non-finite floats as the strings `"nan"`, `"inf"`, `"-inf"`, which JSON
/// cannot carry as numbers.
mod float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(x) => Ok(x),
            Repr::Text(t) => match t.as_str() {
                "nan" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    #[serde(with = "float")]
    pub lhs: f64,
    #[serde(with = "float")]
    pub lhs_se: f64,
    #[serde(with = "float")]
    pub rhs: f64,
    #[serde(with = "float")]
    pub rhs_se: f64,
    /// `(lhs - rhs) / se`; absent when both sides are exact.
    pub z: Option<f64>,
    pub criterion: Criterion,
    pub verdict: Verdict,
    /// Set when the numbers cannot be trusted (e.g. an unconverged chain);
    /// forces the verdict to inconclusive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inconclusive: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckRecord {
    pub fn new(name: impl Into<String>, lhs: f64, lhs_se: f64, rhs: f64, rhs_se: f64, criterion: Criterion) -> Self {
        let lhs_se = if lhs_se.is_nan() { 0.0 } else { lhs_se };
        let rhs_se = if rhs_se.is_nan() { 0.0 } else { rhs_se };
        let se = lhs_se.hypot(rhs_se);
        let z = if se > 0.0 && (lhs - rhs).is_finite() { Some((lhs - rhs) / se) } else { None };
        let verdict = criterion.judge(lhs, lhs_se, rhs, rhs_se);
        Self { name: name.into(), lhs, lhs_se, rhs, rhs_se, z, criterion, verdict, inconclusive: None, note: None }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// Mark inconclusive unless the numbers already fail outright.
    pub fn inconclusive_if(mut self, reason: Option<String>) -> Self {
        if let Some(r) = reason {
            self.inconclusive = Some(r);
            self.verdict = Verdict::Inconclusive;
        }
        self
    }

    /// The verdict implied by the recorded numbers.
    pub fn recomputed_verdict(&self) -> Verdict {
        if self.inconclusive.is_some() {
            Verdict::Inconclusive
        } else {
            self.criterion.judge(self.lhs, self.lhs_se, self.rhs, self.rhs_se)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaneRecord {
    pub label: String,
    pub master_seed: u64,
    pub module: u32,
    pub case: u64,
}

impl LaneRecord {
    pub fn new(label: impl Into<String>, lane: &Lane) -> Self {
        Self { label: label.into(), master_seed: lane.master_seed, module: lane.module, case: lane.case }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    /// Crate version that produced the report.
    pub version: String,
    pub kind: String,
    pub seed: u64,
    /// Hex digest of `config` (filled in by the runner).
    #[serde(default)]
    pub config_hash: String,
    /// The configuration as given.
    #[serde(default)]
    pub config: String,
    pub checks: Vec<CheckRecord>,
    pub lanes: Vec<LaneRecord>,
    #[serde(default)]
    pub notes: Vec<String>,
    /// Both sides of some check drew from one stream (debugging only).
    #[serde(default)]
    pub shared_seed: bool,
    #[serde(default)]
    pub elapsed_seconds: f64,
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

impl ExperimentReport {
    pub fn new(kind: impl Into<String>, seed: u64) -> Self {
        Self {
            version: VERSION.to_string(),
            kind: kind.into(),
            seed,
            config_hash: String::new(),
            config: String::new(),
            checks: Vec::new(),
            lanes: Vec::new(),
            notes: Vec::new(),
            shared_seed: false,
            elapsed_seconds: 0.0,
        }
    }

    pub fn push(&mut self, check: CheckRecord) {
        self.checks.push(check);
    }

    pub fn lane(&mut self, label: impl Into<String>, lane: &Lane) {
        self.lanes.push(LaneRecord::new(label, lane));
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    /// Append another report's checks, lanes and notes.
    pub fn absorb(&mut self, other: ExperimentReport) {
        self.checks.extend(other.checks);
        self.lanes.extend(other.lanes);
        self.notes.extend(other.notes);
        self.shared_seed |= other.shared_seed;
    }

    /// Fail if any check fails, else inconclusive if any is, else pass.
    /// An empty report is inconclusive.
    pub fn overall(&self) -> Verdict {
        self.checks.iter().map(|c| c.verdict).max().unwrap_or(Verdict::Inconclusive)
    }

    /// Names of checks whose stored verdict disagrees with their numbers.
    pub fn audit(&self) -> Vec<String> {
        self.checks.iter().filter(|c| c.verdict != c.recomputed_verdict()).map(|c| c.name.clone()).collect()
    }

    pub fn check(&self, name: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts_follow_criteria() {
        let c = CheckRecord::new("z", 1.0, 0.1, 1.3, 0.0, Criterion::ZScore { max: 4.0 });
        assert_eq!(c.verdict, Verdict::Pass);
        assert!((c.z.unwrap() + 3.0).abs() < 1e-12);
        let c = CheckRecord::new("z", 1.0, 0.1, 1.5, 0.0, Criterion::ZScore { max: 4.0 });
        assert_eq!(c.verdict, Verdict::Fail);
        let exact = CheckRecord::new("exact", 2.0, 0.0, 2.0, 0.0, Criterion::ZScore { max: 4.0 });
        assert_eq!((exact.verdict, exact.z), (Verdict::Pass, None));
        assert_eq!(Criterion::AtLeast { sigmas: 4.0 }.judge(0.9, 0.01, 1.0, 0.0), Verdict::Fail);
        assert_eq!(Criterion::AtLeast { sigmas: 4.0 }.judge(5.0, 0.0, 1.0, 0.0), Verdict::Pass);
        assert_eq!(Criterion::Relative { tol: 1e-6 }.judge(f64::NAN, 0.0, 1.0, 0.0), Verdict::Fail);
        assert_eq!(Criterion::Exceeds { sigmas: 4.0 }.judge(1.5, 0.1, 1.0, 0.0), Verdict::Pass);
        assert_eq!(Criterion::Exceeds { sigmas: 4.0 }.judge(1.3, 0.1, 1.0, 0.0), Verdict::Fail);
        assert_eq!(Criterion::RatioWithin { tol: 0.2 }.judge(1.1, 0.0, 1.0, 0.0), Verdict::Pass);
        assert_eq!(Criterion::RatioWithin { tol: 0.2 }.judge(0.5, 0.0, 1.0, 0.0), Verdict::Fail);
    }

    #[test]
    fn overall_and_audit() {
        let mut r = ExperimentReport::new("test", 1);
        assert_eq!(r.overall(), Verdict::Inconclusive);
        r.push(CheckRecord::new("a", 1.0, 0.0, 1.0, 0.0, Criterion::Absolute { tol: 0.0 }));
        assert_eq!(r.overall(), Verdict::Pass);
        r.push(CheckRecord::new("b", 1.0, 0.0, 1.0, 0.0, Criterion::Absolute { tol: 0.0 }).inconclusive_if(Some("slow mixing".into())));
        assert_eq!(r.overall(), Verdict::Inconclusive);
        r.push(CheckRecord::new("c", 1.0, 0.0, 2.0, 0.0, Criterion::Absolute { tol: 0.5 }));
        assert_eq!(r.overall(), Verdict::Fail);
        assert!(r.audit().is_empty());
        r.checks[0].lhs = 3.0;
        assert_eq!(r.audit(), vec!["a".to_string()]);
    }

    #[test]
    fn json_round_trip() {
        let mut r = ExperimentReport::new("verify-susy", 7);
        r.push(CheckRecord::new("x", 0.1 + 0.2, 1e-17, 0.3, 0.0, Criterion::Relative { tol: 1e-12 }).with_note("n"));
        r.lane("lhs", &Lane::new(7, 4, 2));
        let s = serde_json::to_string(&r).unwrap();
        let back: ExperimentReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn non_finite_numbers_survive_json() {
        let c = CheckRecord::new("x", f64::INFINITY, f64::NAN, f64::NEG_INFINITY, 0.0, Criterion::Absolute { tol: 1.0 });
        let s = serde_json::to_string(&c).unwrap();
        let back: CheckRecord = serde_json::from_str(&s).unwrap();
        assert_eq!(back.lhs, f64::INFINITY);
        assert_eq!(back.rhs, f64::NEG_INFINITY);
        assert_eq!(back.verdict, Verdict::Fail);
        let nan = CheckRecord { lhs: f64::NAN, ..c };
        let back: CheckRecord = serde_json::from_str(&serde_json::to_string(&nan).unwrap()).unwrap();
        assert!(back.lhs.is_nan());
    }
}
