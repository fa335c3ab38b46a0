//! Pass@1 and safety scores from JSON-lines evaluation logs.
//!
//! Each line is `{"id": "...", "outcomes": [true, false, ...]}`. For Pass@1
//! the outcomes are per-sample correctness; for the safety score a record
//! holds a single judge verdict, `true` meaning the response was judged safe.

use std::collections::HashSet;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples drawn per question in the reference evaluation setup.
pub const DEFAULT_SAMPLES: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRecord {
    pub id: String,
    pub outcomes: Vec<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EvalLog {
    records: Vec<EvalRecord>,
}

impl EvalLog {
    /// Checks that ids are unique and no record is empty.
    pub fn new(records: Vec<EvalRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, r) in records.iter().enumerate() {
            if r.outcomes.is_empty() {
                return Err(Error::Log { line: i + 1, message: format!("record {:?} has no outcomes", r.id) });
            }
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Log { line: i + 1, message: format!("duplicate id {:?}", r.id) });
            }
        }
        Ok(Self { records })
    }

    /// Parses JSON lines. Blank lines are skipped; errors carry 1-based
    /// line numbers.
    pub fn from_jsonl(reader: impl BufRead) -> Result<Self> {
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::Log { line: line_no, message: e.to_string() })?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: EvalRecord = serde_json::from_str(&line)
                .map_err(|e| Error::Log { line: line_no, message: e.to_string() })?;
            if rec.outcomes.is_empty() {
                return Err(Error::Log { line: line_no, message: format!("record {:?} has no outcomes", rec.id) });
            }
            if !seen.insert(rec.id.clone()) {
                return Err(Error::Log { line: line_no, message: format!("duplicate id {:?}", rec.id) });
            }
            records.push(rec);
        }
        Ok(Self { records })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(std::io::BufReader::new(file))
    }

    pub fn records(&self) -> &[EvalRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn nonempty(log: &EvalLog) -> Result<()> {
    if log.is_empty() {
        return Err(Error::InvalidArgument("evaluation log has no records".into()));
    }
    Ok(())
}

/// Mean over questions of the fraction of correct samples.
///
/// Per-question fractions are summed in sorted order, so the result does not
/// depend on record order.
pub fn pass_at_1(log: &EvalLog) -> Result<f64> {
    nonempty(log)?;
    let mut fractions: Vec<f64> = log
        .records
        .iter()
        .map(|r| r.outcomes.iter().filter(|&&o| o).count() as f64 / r.outcomes.len() as f64)
        .collect();
    fractions.sort_by(f64::total_cmp);
    Ok(fractions.iter().sum::<f64>() / fractions.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SafetyPolarity {
    /// Share of responses judged safe; higher is better.
    #[default]
    SafeFraction,
    /// Share of responses judged harmful.
    HarmfulFraction,
}

impl std::str::FromStr for SafetyPolarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "safe_fraction" | "safe" => Ok(SafetyPolarity::SafeFraction),
            "harmful_fraction" | "harmful" => Ok(SafetyPolarity::HarmfulFraction),
            other => Err(Error::InvalidArgument(format!("unknown polarity {other:?}"))),
        }
    }
}

/// Fraction of records whose single verdict matches `polarity`.
///
/// The two polarities of one log always sum to exactly 1.0: the minority
/// share is computed by division and the majority as its complement.
pub fn safety_score(log: &EvalLog, polarity: SafetyPolarity) -> Result<f64> {
    nonempty(log)?;
    let mut safe = 0usize;
    for (i, r) in log.records.iter().enumerate() {
        if r.outcomes.len() != 1 {
            return Err(Error::Log {
                line: i + 1,
                message: format!("record {:?} has {} verdicts, expected 1", r.id, r.outcomes.len()),
            });
        }
        safe += r.outcomes[0] as usize;
    }
    let n = log.len();
    let harmful = n - safe;
    let (minority_is_safe, minority) = if safe <= harmful { (true, safe) } else { (false, harmful) };
    let small = minority as f64 / n as f64;
    let want_safe = polarity == SafetyPolarity::SafeFraction;
    Ok(if want_safe == minority_is_safe { small } else { 1.0 - small })
}
