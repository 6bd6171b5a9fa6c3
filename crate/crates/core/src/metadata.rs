//! Solidity compiler metadata: location, removal and version extraction.
//!
//! The compiler appends a CBOR map followed by its length as a big-endian
//! `u16`. Codes that embed other codes (factories, proxies) carry several such
//! sections, not only a trailing one, so the whole input is scanned.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cbor::{self, Value};

/// Keys a metadata map may contain.
pub const RECOGNIZED_KEYS: [&str; 5] = ["bzzr0", "bzzr1", "ipfs", "solc", "experimental"];

/// A map must carry at least one of these to count as metadata.
pub const SOURCE_HASH_KEYS: [&str; 3] = ["bzzr0", "bzzr1", "ipfs"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct SolcVersion {
    pub major: u64,
    pub minor: u64,
    pub patch: u64,
}

impl SolcVersion {
    pub const fn new(major: u64, minor: u64, patch: u64) -> Self {
        SolcVersion {
            major,
            minor,
            patch,
        }
    }
}

impl fmt::Display for SolcVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.major, self.minor, self.patch)
    }
}

impl From<SolcVersion> for String {
    fn from(v: SolcVersion) -> String {
        v.to_string()
    }
}

impl TryFrom<String> for SolcVersion {
    type Error = semver::Error;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl std::str::FromStr for SolcVersion {
    type Err = semver::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v = semver::Version::parse(s.trim().trim_start_matches('v'))?;
        Ok(SolcVersion::new(v.major, v.minor, v.patch))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetadataSection {
    /// Inclusive start offset in the scanned input.
    pub start: usize,
    /// Exclusive end offset, just past the length field.
    pub end: usize,
    pub cbor_keys: Vec<String>,
    pub solc_version: Option<SolcVersion>,
    /// CBOR map followed by the 2-byte length field.
    pub raw: Vec<u8>,
}

impl MetadataSection {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    /// The CBOR map without the length field.
    pub fn cbor(&self) -> &[u8] {
        &self.raw[..self.raw.len() - 2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StripMode {
    #[default]
    Remove,
    ZeroFill,
}

impl std::str::FromStr for StripMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "remove" => Ok(StripMode::Remove),
            "zero_fill" | "zero-fill" => Ok(StripMode::ZeroFill),
            other => Err(format!("unknown strip mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StripResult {
    pub stripped: Vec<u8>,
    /// Offsets refer to the original input.
    pub sections: Vec<MetadataSection>,
    pub mode: StripMode,
}

/// A `solc` entry that is neither a 3-byte version nor a version string.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed solc value: {0}")]
pub struct MalformedSolc(pub String);

/// Locates all metadata sections in `code`, sorted by start offset.
///
/// Every end position is tried from the back of the input. A candidate is
/// accepted when the length field points at exactly one CBOR map whose keys
/// are all recognized and include a source hash. Once a section is accepted,
/// scanning resumes at its start, so sections never overlap and the rightmost
/// candidate wins.
pub fn find_metadata(code: &[u8]) -> Vec<MetadataSection> {
    let mut found = Vec::new();
    let mut end = code.len();
    while end >= 3 {
        match candidate_at(code, end) {
            Some(section) => {
                end = section.start;
                found.push(section);
            }
            None => end -= 1,
        }
    }
    found.reverse();
    found
}

fn candidate_at(code: &[u8], end: usize) -> Option<MetadataSection> {
    let len = usize::from(u16::from_be_bytes([code[end - 2], code[end - 1]]));
    if len == 0 || len + 2 > end {
        return None;
    }
    let start = end - 2 - len;
    let payload = &code[start..end - 2];
    // Definite-length map header.
    if !(0xa1..=0xbb).contains(&payload[0]) {
        return None;
    }
    let Ok(Value::Map(entries)) = cbor::decode_exact(payload) else {
        return None;
    };
    let mut keys = Vec::with_capacity(entries.len());
    for (key, _) in &entries {
        let Value::Text(key) = key else {
            return None;
        };
        if !RECOGNIZED_KEYS.contains(&key.as_str()) || keys.contains(key) {
            return None;
        }
        keys.push(key.clone());
    }
    if !keys.iter().any(|k| SOURCE_HASH_KEYS.contains(&k.as_str())) {
        return None;
    }
    let solc_version = solc_from_entries(&entries).ok().flatten();
    Some(MetadataSection {
        start,
        end,
        cbor_keys: keys,
        solc_version,
        raw: code[start..end].to_vec(),
    })
}

/// Removes or zero-fills every metadata section of `code`.
pub fn strip_metadata(code: &[u8], mode: StripMode) -> StripResult {
    let sections = find_metadata(code);
    let stripped = apply_strip(code, &sections, mode);
    StripResult {
        stripped,
        sections,
        mode,
    }
}

pub(crate) fn apply_strip(code: &[u8], sections: &[MetadataSection], mode: StripMode) -> Vec<u8> {
    match mode {
        StripMode::Remove => {
            let mut out = Vec::with_capacity(code.len());
            let mut pos = 0;
            for s in sections {
                out.extend_from_slice(&code[pos..s.start]);
                pos = s.end;
            }
            out.extend_from_slice(&code[pos..]);
            out
        }
        StripMode::ZeroFill => {
            let mut out = code.to_vec();
            for s in sections {
                out[s.start..s.end].fill(0);
            }
            out
        }
    }
}

/// Offset where constructor arguments begin in deployment code: everything
/// after the last metadata section. `None` when the code has no metadata.
pub fn constructor_args_start(sections: &[MetadataSection]) -> Option<usize> {
    sections.last().map(|s| s.end)
}

/// Compiler version recorded under the `solc` key.
///
/// Returns `Ok(None)` when the key is absent and `Err` with a description when
/// the value is present but unusable.
pub fn extract_solc_version(section: &MetadataSection) -> Result<Option<SolcVersion>, MalformedSolc> {
    match cbor::decode_exact(section.cbor()) {
        Ok(Value::Map(entries)) => solc_from_entries(&entries),
        _ => Err(MalformedSolc("section is not a CBOR map".into())),
    }
}

fn solc_from_entries(entries: &[(Value, Value)]) -> Result<Option<SolcVersion>, MalformedSolc> {
    let Some((_, value)) = entries
        .iter()
        .find(|(k, _)| matches!(k, Value::Text(t) if t == "solc"))
    else {
        return Ok(None);
    };
    match value {
        Value::Bytes(b) if b.len() == 3 => Ok(Some(SolcVersion::new(
            u64::from(b[0]),
            u64::from(b[1]),
            u64::from(b[2]),
        ))),
        Value::Bytes(b) => Err(MalformedSolc(format!("{}-byte version", b.len()))),
        Value::Text(t) => t
            .parse()
            .map(Some)
            .map_err(|e| MalformedSolc(format!("{t:?}: {e}"))),
        other => Err(MalformedSolc(format!("unexpected value {other:?}"))),
    }
}
