//! Deployment corpus: ingestion, code families, pipeline counts and timelines.

mod family;
mod store;
mod timeline;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bins::DEFAULT_HORIZON_BLOCK;
use crate::error::CorpusError;
use crate::hexcode::parse_hex;
use crate::metadata::SolcVersion;
use crate::skeleton::sha256_hex;

pub use family::{assign_first_block, cluster, dedup_stats, CodeFamily, PipelineCounts};
pub use store::CorpusStore;
pub use timeline::{
    compiler_timeline, first_blocks, ops_timeline, CompilerBin, CompilerTimeline, VersionRange, VersionRanges,
};

/// One line of a records file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeploymentRecord {
    /// SHA-256 of the raw runtime code, lowercase hex.
    pub code_id: String,
    pub block: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub address: Option<String>,
    #[serde(default)]
    pub has_source: bool,
    /// Inline `0x`-prefixed hex, or a path to a hex file relative to the
    /// records file.
    pub code_ref: String,
    /// Compiler version from a verified source, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compiler_version: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deployment {
    pub block: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub address: Option<String>,
    #[serde(default)]
    pub has_source: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compiler_version: Option<SolcVersion>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CodeEntry {
    pub code: Vec<u8>,
    /// Sorted by block, then address.
    pub deployments: Vec<Deployment>,
}

impl CodeEntry {
    pub fn first_block(&self) -> Option<u64> {
        self.deployments.iter().map(|d| d.block).min()
    }

    pub fn has_source(&self) -> bool {
        self.deployments.iter().any(|d| d.has_source)
    }

    /// Version from a verified source, if any deployment records one.
    pub fn source_version(&self) -> Option<SolcVersion> {
        self.deployments.iter().find_map(|d| d.compiler_version)
    }
}

/// Distinct runtime codes keyed by raw-code digest, with all deployments.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    codes: BTreeMap<String, CodeEntry>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, code_id: String, code: Vec<u8>, deployment: Deployment) {
        let entry = self.codes.entry(code_id).or_insert_with(|| CodeEntry {
            code,
            deployments: Vec::new(),
        });
        let pos = entry
            .deployments
            .partition_point(|d| (d.block, &d.address) <= (deployment.block, &deployment.address));
        entry.deployments.insert(pos, deployment);
    }

    /// Adds a code with a single deployment, computing its digest.
    pub fn insert_code(&mut self, code: Vec<u8>, block: u64, has_source: bool) -> String {
        let id = sha256_hex(&code);
        self.insert(
            id.clone(),
            code,
            Deployment {
                block,
                address: None,
                has_source,
                compiler_version: None,
            },
        );
        id
    }

    pub fn get(&self, code_id: &str) -> Option<&CodeEntry> {
        self.codes.get(code_id)
    }

    pub fn codes(&self) -> &BTreeMap<String, CodeEntry> {
        &self.codes
    }

    pub fn distinct_codes(&self) -> usize {
        self.codes.len()
    }

    pub fn deployment_count(&self) -> usize {
        self.codes.values().map(|e| e.deployments.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestOptions {
    pub horizon_block: u64,
    /// Abort on the first malformed line instead of skipping it.
    pub strict: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            horizon_block: DEFAULT_HORIZON_BLOCK,
            strict: false,
        }
    }
}

#[derive(Debug, Default)]
pub struct IngestReport {
    pub corpus: Corpus,
    /// Skipped lines; always empty in strict mode.
    pub errors: Vec<CorpusError>,
}

const CHUNK_LINES: usize = 4096;

/// Reads a records file. Code files named in `code_ref` are resolved against
/// the records file's directory.
pub fn ingest(records_file: &Path, options: IngestOptions) -> Result<IngestReport, CorpusError> {
    let file = File::open(records_file)
        .map_err(|e| CorpusError::io(format!("cannot open {}", records_file.display()), e))?;
    let base = records_file.parent().map(Path::to_path_buf).unwrap_or_default();
    ingest_reader(BufReader::new(file), &base, options)
}

/// Streams records in chunks; each chunk is decoded and hashed in parallel.
pub fn ingest_reader<R: BufRead>(reader: R, base_dir: &Path, options: IngestOptions) -> Result<IngestReport, CorpusError> {
    let mut report = IngestReport::default();
    let mut chunk: Vec<(usize, String)> = Vec::with_capacity(CHUNK_LINES);
    let mut lines = reader.lines().enumerate();
    loop {
        chunk.clear();
        for (idx, line) in lines.by_ref() {
            let line = line.map_err(|e| CorpusError::io(format!("line {}", idx + 1), e))?;
            if line.trim().is_empty() {
                continue;
            }
            chunk.push((idx + 1, line));
            if chunk.len() == CHUNK_LINES {
                break;
            }
        }
        if chunk.is_empty() {
            break;
        }
        let parsed: Vec<_> = chunk
            .par_iter()
            .map(|(line_no, line)| parse_record(*line_no, line, base_dir, options.horizon_block))
            .collect();
        for item in parsed {
            match item {
                Ok((id, code, deployment)) => report.corpus.insert(id, code, deployment),
                Err(e) if options.strict => return Err(e),
                Err(e) => report.errors.push(e),
            }
        }
    }
    Ok(report)
}

fn parse_record(
    line_no: usize,
    line: &str,
    base_dir: &Path,
    horizon: u64,
) -> Result<(String, Vec<u8>, Deployment), CorpusError> {
    let fail = |message: String| CorpusError::Line {
        line: line_no,
        message,
    };
    let record: DeploymentRecord = serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
    if record.block > horizon {
        return Err(fail(format!("block {} beyond horizon {horizon}", record.block)));
    }
    let code = resolve_code_ref(&record.code_ref, base_dir).map_err(&fail)?;
    let id = sha256_hex(&code);
    if !record.code_id.eq_ignore_ascii_case(&id) {
        return Err(fail(format!("code_id {} does not match code digest {id}", record.code_id)));
    }
    if let Some(addr) = &record.address {
        let digits = addr.strip_prefix("0x").unwrap_or(addr);
        if digits.len() != 40 || !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(fail(format!("address {addr:?} is not 20 bytes of hex")));
        }
    }
    let compiler_version = match &record.compiler_version {
        Some(v) => Some(
            v.parse::<SolcVersion>()
                .map_err(|e| fail(format!("compiler_version {v:?}: {e}")))?,
        ),
        None => None,
    };
    Ok((
        id,
        code,
        Deployment {
            block: record.block,
            address: record.address.map(|a| a.to_ascii_lowercase()),
            has_source: record.has_source,
            compiler_version,
        },
    ))
}

fn resolve_code_ref(code_ref: &str, base_dir: &Path) -> Result<Vec<u8>, String> {
    if code_ref.starts_with("0x") || code_ref.starts_with("0X") {
        return parse_hex(code_ref).map_err(|e| format!("code_ref: {e}"));
    }
    let path: PathBuf = base_dir.join(code_ref);
    let text = std::fs::read_to_string(&path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse_hex(&text).map_err(|e| format!("{}: {e}", path.display()))
}
