//! Reports as JSON Lines and data as CSV. A report is a header line, one
//! line per check, lane, note and artifact, and a closing summary line.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use hyperlab::report::{CheckRecord, ExperimentReport, LaneRecord, Verdict};

use crate::kinds::Table;

pub const REPORT_FILE: &str = "report.jsonl";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header { version: String, kind: String, seed: u64, config_hash: String, fingerprint: String, config: String },
    Check(CheckRecord),
    Lane(LaneRecord),
    Note { text: String },
    Artifact(Artifact),
    Summary { overall: Verdict, pass: usize, fail: usize, inconclusive: usize, shared_seed: bool, elapsed_seconds: f64 },
}

/// A report as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredReport {
    pub report: ExperimentReport,
    pub fingerprint: String,
    pub artifacts: Vec<Artifact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Binds the header fields together; an edited seed or kind no longer matches.
pub fn fingerprint(version: &str, kind: &str, seed: u64, config_hash: &str) -> String {
    sha256_hex(format!("{version}\n{kind}\n{seed}\n{config_hash}\n").as_bytes())
}

pub fn table_bytes(table: &Table) -> std::io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| e.into_error())
}

pub fn write_tables(dir: &Path, tables: &[Table]) -> std::io::Result<Vec<Artifact>> {
    tables
        .iter()
        .map(|t| {
            let bytes = table_bytes(t)?;
            fs::write(dir.join(&t.file), &bytes)?;
            Ok(Artifact { file: t.file.clone(), sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 })
        })
        .collect()
}

pub fn write_report(path: &Path, stored: &StoredReport) -> std::io::Result<()> {
    let r = &stored.report;
    let mut lines = vec![Line::Header {
        version: r.version.clone(),
        kind: r.kind.clone(),
        seed: r.seed,
        config_hash: r.config_hash.clone(),
        fingerprint: stored.fingerprint.clone(),
        config: r.config.clone(),
    }];
    lines.extend(r.checks.iter().cloned().map(Line::Check));
    lines.extend(r.lanes.iter().cloned().map(Line::Lane));
    lines.extend(r.notes.iter().map(|t| Line::Note { text: t.clone() }));
    lines.extend(stored.artifacts.iter().cloned().map(Line::Artifact));
    let count = |v: Verdict| r.checks.iter().filter(|c| c.verdict == v).count();
    lines.push(Line::Summary {
        overall: r.overall(),
        pass: count(Verdict::Pass),
        fail: count(Verdict::Fail),
        inconclusive: count(Verdict::Inconclusive),
        shared_seed: r.shared_seed,
        elapsed_seconds: r.elapsed_seconds,
    });
    let mut text = String::new();
    for l in &lines {
        text.push_str(&serde_json::to_string(l).map_err(std::io::Error::other)?);
        text.push('\n');
    }
    fs::write(path, text)
}

pub fn read_report(path: &Path) -> Result<StoredReport, String> {
    let file = fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut header = None;
    let mut report = ExperimentReport::new("", 0);
    let mut artifacts = Vec::new();
    let mut summary = false;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| format!("{}: {e}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| format!("{}:{}: {e}", path.display(), i + 1))?;
        match parsed {
            Line::Header { version, kind, seed, config_hash, fingerprint, config } => {
                report.version = version;
                report.kind = kind;
                report.seed = seed;
                report.config_hash = config_hash;
                report.config = config;
                header = Some(fingerprint);
            }
            Line::Check(c) => report.checks.push(c),
            Line::Lane(l) => report.lanes.push(l),
            Line::Note { text } => report.notes.push(text),
            Line::Artifact(a) => artifacts.push(a),
            Line::Summary { shared_seed, elapsed_seconds, .. } => {
                report.shared_seed = shared_seed;
                report.elapsed_seconds = elapsed_seconds;
                summary = true;
            }
        }
    }
    let fingerprint = header.ok_or_else(|| format!("{}: no header line", path.display()))?;
    if !summary {
        return Err(format!("{}: no summary line (truncated report?)", path.display()));
    }
    Ok(StoredReport { report, fingerprint, artifacts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use hyperlab::report::Criterion;
    use hyperlab::rng::Lane;

    #[test]
    fn report_round_trips() {
        let mut r = ExperimentReport::new("verify-susy", 11);
        r.config = "beta = 1.0\n".into();
        r.config_hash = sha256_hex(r.config.as_bytes());
        r.push(CheckRecord::new("a", 1.0, 0.0, f64::INFINITY, 0.0, Criterion::Absolute { tol: 1e-7 }).with_note("n"));
        r.lane("x", &Lane::new(11, 4, 0));
        r.note("hello");
        r.elapsed_seconds = 0.25;
        let stored = StoredReport {
            fingerprint: fingerprint(&r.version, &r.kind, r.seed, &r.config_hash),
            report: r,
            artifacts: vec![Artifact { file: "checks.csv".into(), sha256: "00".into(), bytes: 3 }],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(REPORT_FILE);
        write_report(&path, &stored).unwrap();
        assert_eq!(read_report(&path).unwrap(), stored);
    }

    #[test]
    fn csv_quotes_fields_with_commas() {
        let t = Table { file: "t.csv".into(), header: vec!["a".into(), "b".into()], rows: vec![vec!["x,y".into(), "1".into()]] };
        assert_eq!(String::from_utf8(table_bytes(&t).unwrap()).unwrap(), "a,b\n\"x,y\",1\n");
    }
}
