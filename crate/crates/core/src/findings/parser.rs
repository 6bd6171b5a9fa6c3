//! Raw tool output to [`ToolRunRecord`].

use super::{Fails, ToolRunRecord};
use crate::error::AnalyticsError;

pub trait ToolOutputParser {
    fn parse(&self, tool: &str, code_id: &str, output: &str) -> Result<ToolRunRecord, AnalyticsError>;
}

/// Line-oriented reference format:
///
/// ```text
/// FINDING Reentrancy
/// ERROR solver returned unknown
/// FAIL timeout
/// MESSAGE coverage 87%
/// DURATION 12.5
/// ```
///
/// Blank lines and lines starting with `#` are ignored.
#[derive(Debug, Clone, Copy, Default)]
pub struct LineParser;

impl ToolOutputParser for LineParser {
    fn parse(&self, tool: &str, code_id: &str, output: &str) -> Result<ToolRunRecord, AnalyticsError> {
        let mut record = ToolRunRecord::new(tool, code_id);
        let mut fails = Fails::default();
        for (idx, raw) in output.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: String| AnalyticsError::Line {
                line: idx + 1,
                message,
            };
            let (keyword, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            match keyword {
                "FINDING" if !rest.is_empty() => record.findings.push(rest.to_string()),
                "ERROR" => record.errors.push(rest.to_string()),
                "MESSAGE" => record.messages.push(rest.to_string()),
                "FAIL" => match rest {
                    "timeout" => fails.timeout = true,
                    "oom" => fails.oom = true,
                    "program_issue" => fails.program_issue = true,
                    other => return Err(bad(format!("unknown fail kind {other:?}"))),
                },
                "DURATION" => {
                    record.duration_s = rest.parse().map_err(|_| bad(format!("bad duration {rest:?}")))?;
                }
                _ => return Err(bad(format!("unrecognized line {line:?}"))),
            }
        }
        record.fails = fails;
        record.validate().map_err(|message| AnalyticsError::Line { line: 0, message })?;
        Ok(record)
    }
}
