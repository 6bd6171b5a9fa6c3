//! Normalized tool-run records and their mapping onto SWC classes.

mod mapping;
mod matrix;
mod parser;

use std::collections::BTreeSet;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::AnalyticsError;

pub use mapping::{normalize_tool, Classification, MappingCounts, SwcClass, SwcMappingTable};
pub use matrix::{build_matrix, rate_timelines, FlaggedMatrix, MatrixOptions, RateKind, RateTimelines, SwcSource};
pub use parser::{LineParser, ToolOutputParser};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Fails {
    #[serde(default)]
    pub timeout: bool,
    #[serde(default)]
    pub oom: bool,
    #[serde(default)]
    pub program_issue: bool,
}

impl Fails {
    pub fn any(&self) -> bool {
        self.timeout || self.oom || self.program_issue
    }
}

/// Output of one tool on one code, reduced to four channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolRunRecord {
    pub tool: String,
    /// Skeleton digest of the analyzed code.
    pub code_id: String,
    #[serde(default)]
    pub findings: Vec<String>,
    #[serde(default)]
    pub errors: Vec<String>,
    #[serde(default)]
    pub fails: Fails,
    #[serde(default)]
    pub messages: Vec<String>,
    #[serde(default)]
    pub duration_s: f64,
}

impl ToolRunRecord {
    pub fn new(tool: impl Into<String>, code_id: impl Into<String>) -> Self {
        ToolRunRecord {
            tool: tool.into(),
            code_id: code_id.into(),
            findings: Vec::new(),
            errors: Vec::new(),
            fails: Fails::default(),
            messages: Vec::new(),
            duration_s: 0.0,
        }
    }

    pub fn with_findings<I, S>(mut self, findings: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.findings = findings.into_iter().map(Into::into).collect();
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.tool.trim().is_empty() {
            return Err("empty tool id".into());
        }
        if self.code_id.trim().is_empty() {
            return Err("empty code_id".into());
        }
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) {
            return Err(format!("invalid duration {}", self.duration_s));
        }
        Ok(())
    }
}

/// SWC classes of a record plus the findings the table does not know.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MappedRecord {
    pub classes: BTreeSet<SwcClass>,
    pub unknown: Vec<String>,
}

/// Maps a record's findings. Omitted and unmapped findings contribute no
/// class. Unknown findings are reported back, or rejected when `strict`.
pub fn map_record(
    record: &ToolRunRecord,
    table: &SwcMappingTable,
    strict: bool,
) -> Result<MappedRecord, AnalyticsError> {
    let mut out = MappedRecord::default();
    for finding in &record.findings {
        match table.classify(&record.tool, finding) {
            Some(Classification::Swc(s)) => {
                out.classes.insert(s);
            }
            Some(Classification::Omitted | Classification::Unmapped) => {}
            None if strict => {
                return Err(AnalyticsError::UnknownFinding {
                    tool: record.tool.clone(),
                    finding: finding.clone(),
                })
            }
            None => out.unknown.push(finding.clone()),
        }
    }
    Ok(out)
}

/// Reads line-delimited JSON run records. Bad lines are returned separately,
/// or abort the read when `strict`.
pub fn read_runs<R: BufRead>(reader: R, strict: bool) -> Result<(Vec<ToolRunRecord>, Vec<AnalyticsError>), AnalyticsError> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| AnalyticsError::Io {
            context: format!("line {}", idx + 1),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<ToolRunRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(|r| r.validate().map(|()| r));
        match parsed {
            Ok(r) => records.push(r),
            Err(message) => {
                let e = AnalyticsError::Line {
                    line: idx + 1,
                    message,
                };
                if strict {
                    return Err(e);
                }
                errors.push(e);
            }
        }
    }
    Ok((records, errors))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(m: &MappedRecord) -> Vec<u16> {
        m.classes.iter().map(|c| c.0).collect()
    }

    #[test]
    fn overflow_and_underflow_collapse() {
        let r = ToolRunRecord::new("Osiris", "c").with_findings(["Overflow_bugs", "Underflow_bugs"]);
        let m = map_record(&r, SwcMappingTable::bundled(), true).unwrap();
        assert_eq!(ids(&m), [101]);
    }

    #[test]
    fn no_findings() {
        let r = ToolRunRecord::new("osiris", "c");
        assert!(map_record(&r, SwcMappingTable::bundled(), true).unwrap().classes.is_empty());
    }

    #[test]
    fn omitted_findings_contribute_nothing() {
        let r = ToolRunRecord::new("Vandal", "c").with_findings(["UncheckedCall", "checked_call_state_update"]);
        assert_eq!(ids(&map_record(&r, SwcMappingTable::bundled(), true).unwrap()), [104]);
        let r = ToolRunRecord::new("Maian", "c").with_findings(["Ether_lock", "no_Ether_leak"]);
        assert!(map_record(&r, SwcMappingTable::bundled(), true).unwrap().classes.is_empty());
    }

    #[test]
    fn unknown_findings() {
        let r = ToolRunRecord::new("Conkas", "c").with_findings(["Reentrancy", "Novel"]);
        let lenient = map_record(&r, SwcMappingTable::bundled(), false).unwrap();
        assert_eq!(ids(&lenient), [107]);
        assert_eq!(lenient.unknown, ["Novel"]);
        assert!(matches!(
            map_record(&r, SwcMappingTable::bundled(), true),
            Err(AnalyticsError::UnknownFinding { .. })
        ));
    }

    #[test]
    fn read_runs_reports_bad_lines() {
        let text = concat!(
            r#"{"tool":"conkas","code_id":"a","findings":["Reentrancy"],"fails":{"timeout":true}}"#,
            "\n\n",
            r#"{"tool":"","code_id":"a"}"#,
            "\n",
            r#"{"tool":"x","code_id":"a","duration_s":-1}"#,
            "\n"
        );
        let (records, errors) = read_runs(text.as_bytes(), false).unwrap();
        assert_eq!(records.len(), 1);
        assert!(records[0].fails.timeout && !records[0].fails.oom);
        assert_eq!(errors.len(), 2);
        assert!(matches!(read_runs(text.as_bytes(), true), Err(AnalyticsError::Line { line: 3, .. })));
    }
}
