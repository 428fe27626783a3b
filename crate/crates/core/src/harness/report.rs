//! Report serialization: one JSON object per line for the full records, a
//! flat CSV for spreadsheet triage, and a terminal verdict table.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::GeomError;

use super::{ReportRecord, Verdict};

/// Newline-delimited JSON, one record per line, in record order.
pub fn write_jsonl(records: &[ReportRecord], path: &Path) -> Result<(), GeomError> {
    let mut out = BufWriter::new(File::create(path)?);
    for rec in records {
        let line = serde_json::to_string(rec)
            .map_err(|e| GeomError::Io(format!("report serialization failed: {e}")))?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn csv_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Condensed per-record CSV: the measured value, the bound it was compared
/// against, and the verdict.
pub fn write_summary_csv(records: &[ReportRecord], path: &Path) -> Result<(), GeomError> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(b"experiment_id,check,grid_point,measured,bound,fitted_constant,verdict\n")?;
    for rec in records {
        let row = format!(
            "{},{},{},{},{},{},{}\n",
            csv_field(&rec.experiment_id),
            rec.check.name(),
            csv_field(&rec.grid_point),
            csv_opt(rec.measured.map(|m| m.value)),
            csv_opt(rec.bound.as_ref().map(|b| b.value())),
            csv_opt(rec.fitted_constant),
            verdict_name(rec.verdict),
        );
        out.write_all(row.as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
        Verdict::Inconclusive => "inconclusive",
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct VerdictCounts {
    pub pass: u64,
    pub fail: u64,
    pub inconclusive: u64,
}

impl VerdictCounts {
    pub fn tally(records: &[ReportRecord]) -> Self {
        let mut c = VerdictCounts::default();
        for rec in records {
            match rec.verdict {
                Verdict::Pass => c.pass += 1,
                Verdict::Fail => c.fail += 1,
                Verdict::Inconclusive => c.inconclusive += 1,
            }
        }
        c
    }
}

/// One line per experiment plus a total, e.g.
/// `sandwich-ball  sandwich  pass=2 fail=0 inconclusive=0`.
pub fn verdict_table(records: &[ReportRecord]) -> String {
    let mut order: Vec<(&str, &str)> = Vec::new();
    for rec in records {
        if !order.iter().any(|(id, _)| *id == rec.experiment_id) {
            order.push((&rec.experiment_id, rec.check.name()));
        }
    }
    let width = order.iter().map(|(id, _)| id.len()).max().unwrap_or(0).max(5);
    let check_width = order.iter().map(|(_, c)| c.len()).max().unwrap_or(0).max(5);
    let mut out = String::new();
    for (id, check) in &order {
        let subset: Vec<ReportRecord> = records
            .iter()
            .filter(|r| r.experiment_id == *id)
            .cloned()
            .collect();
        let c = VerdictCounts::tally(&subset);
        let _ = writeln!(
            out,
            "{id:width$}  {check:check_width$}  pass={} fail={} inconclusive={}",
            c.pass, c.fail, c.inconclusive
        );
    }
    let total = VerdictCounts::tally(records);
    let label = "total";
    let blank = "";
    let _ = writeln!(
        out,
        "{label:width$}  {blank:check_width$}  pass={} fail={} inconclusive={}",
        total.pass, total.fail, total.inconclusive
    );
    out
}

#[cfg(test)]
mod tests {
    use super::super::{BoundSide, CheckKind, SCHEMA_VERSION};
    use super::*;
    use crate::functionals::EstimateCI;

    fn rec(id: &str, grid: &str, verdict: Verdict) -> ReportRecord {
        ReportRecord {
            schema_version: SCHEMA_VERSION,
            experiment_id: id.into(),
            check: CheckKind::Sandwich,
            subject_digest: "d".into(),
            grid_point: grid.into(),
            measured: Some(EstimateCI::closed(1.5, 7)),
            bound: Some(BoundSide::Reference(EstimateCI::closed(2.0, 7))),
            fitted_constant: Some(0.75),
            verdict,
            note: String::new(),
            seed: 7,
            runtime_ms: 3,
        }
    }

    #[test]
    fn jsonl_is_one_parseable_object_per_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.jsonl");
        let records = vec![rec("a", "side=lower", Verdict::Pass), rec("a", "k=2", Verdict::Fail)];
        write_jsonl(&records, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        for line in &lines {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert_eq!(v["schema_version"], SCHEMA_VERSION);
            assert_eq!(v["check"], "sandwich");
            assert!(v["measured"]["value"].is_f64());
        }
        // Verdicts serialize in snake case.
        assert!(lines[0].contains("\"verdict\":\"pass\""));
        assert!(lines[1].contains("\"verdict\":\"fail\""));
    }

    #[test]
    fn summary_csv_quotes_and_tallies() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.csv");
        let mut tricky = rec("suite,one", "q=2 k=3", Verdict::Inconclusive);
        tricky.fitted_constant = None;
        let records = vec![rec("plain", "side=upper", Verdict::Pass), tricky];
        write_summary_csv(&records, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "experiment_id,check,grid_point,measured,bound,fitted_constant,verdict"
        );
        assert_eq!(lines[1], "plain,sandwich,side=upper,1.5,2,0.75,pass");
        assert!(lines[2].starts_with("\"suite,one\","));
        assert!(lines[2].ends_with(",1.5,2,,inconclusive"));

        let counts = VerdictCounts::tally(&records);
        assert_eq!(counts, VerdictCounts { pass: 1, fail: 0, inconclusive: 1 });
        let table = verdict_table(&records);
        assert!(table.contains("pass=1 fail=0 inconclusive=1"));
        assert!(table.lines().count() == 3);
    }
}
