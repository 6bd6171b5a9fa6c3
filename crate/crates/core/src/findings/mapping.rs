//! Tool findings to SWC classes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::TableError;

const BUNDLED_MAPPING: &str = include_str!("../../data/swc_mapping.csv");

/// Class of the SWC registry, e.g. `SWC-107`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct SwcClass(pub u16);

impl fmt::Display for SwcClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SWC-{}", self.0)
    }
}

impl FromStr for SwcClass {
    type Err = String;

    /// Accepts `SWC-107`, `swc107` and `107`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let digits = if t.len() >= 3 && t[..3].eq_ignore_ascii_case("swc") {
            t[3..].trim_start_matches(['-', '_', ' '])
        } else {
            t
        };
        digits
            .parse()
            .map(SwcClass)
            .map_err(|_| format!("not an SWC class: {s:?}"))
    }
}

impl From<SwcClass> for String {
    fn from(c: SwcClass) -> String {
        c.to_string()
    }
}

impl TryFrom<String> for SwcClass {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Classification {
    Swc(SwcClass),
    /// Positive, intermediate or redundant findings; never count as a weakness.
    Omitted,
    /// Weakness reports without a matching SWC class.
    Unmapped,
}

impl FromStr for Classification {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "OMITTED" => Ok(Classification::Omitted),
            "UNMAPPED" => Ok(Classification::Unmapped),
            other if other.starts_with("SWC-") => other.parse().map(Classification::Swc),
            other => Err(format!("unknown classification {other:?}")),
        }
    }
}

/// Tool ids are case-insensitive and stored lowercase.
pub fn normalize_tool(tool: &str) -> String {
    tool.trim().to_ascii_lowercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MappingCounts {
    pub mapped: usize,
    pub classes: usize,
    pub omitted: usize,
    pub unmapped: usize,
}

#[derive(Debug, Deserialize)]
struct Row {
    tool: String,
    finding: String,
    classification: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwcMappingTable {
    rows: BTreeMap<(String, String), Classification>,
}

impl SwcMappingTable {
    /// The bundled table, checked against its known row counts.
    pub fn bundled() -> &'static SwcMappingTable {
        static TABLE: OnceLock<SwcMappingTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            let table = SwcMappingTable::from_csv(BUNDLED_MAPPING).expect("bundled mapping table parses");
            table.check_bundled_counts().expect("bundled mapping table counts");
            table
        })
    }

    pub fn load(path: &Path) -> Result<Self, TableError> {
        let text = std::fs::read_to_string(path).map_err(|source| TableError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_csv(&text)
    }

    /// CSV with header `tool,finding,classification`; `#` starts a comment.
    pub fn from_csv(text: &str) -> Result<Self, TableError> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut rows = BTreeMap::new();
        for (idx, row) in reader.deserialize::<Row>().enumerate() {
            let line = idx + 2;
            let row = row.map_err(|e| TableError::Malformed {
                line,
                message: e.to_string(),
            })?;
            let class = row
                .classification
                .parse()
                .map_err(|_| TableError::UnknownClassification {
                    line,
                    token: row.classification.clone(),
                })?;
            let key = (normalize_tool(&row.tool), row.finding);
            if rows.contains_key(&key) {
                return Err(TableError::Duplicate {
                    line,
                    key: format!("{}/{}", key.0, key.1),
                });
            }
            rows.insert(key, class);
        }
        Ok(SwcMappingTable { rows })
    }

    pub fn counts(&self) -> MappingCounts {
        let mut classes = BTreeSet::new();
        let mut counts = MappingCounts {
            mapped: 0,
            classes: 0,
            omitted: 0,
            unmapped: 0,
        };
        for class in self.rows.values() {
            match class {
                Classification::Swc(s) => {
                    counts.mapped += 1;
                    classes.insert(*s);
                }
                Classification::Omitted => counts.omitted += 1,
                Classification::Unmapped => counts.unmapped += 1,
            }
        }
        counts.classes = classes.len();
        counts
    }

    fn check_bundled_counts(&self) -> Result<(), TableError> {
        let expected = MappingCounts {
            mapped: 56,
            classes: 15,
            omitted: 7,
            unmapped: 9,
        };
        let got = self.counts();
        if got != expected {
            return Err(TableError::Cardinality(format!("expected {expected:?}, got {got:?}")));
        }
        Ok(())
    }

    pub fn classify(&self, tool: &str, finding: &str) -> Option<Classification> {
        self.rows
            .get(&(normalize_tool(tool), finding.to_string()))
            .copied()
    }

    /// Classes any finding of `tool` maps to.
    pub fn swc(&self, tool: &str) -> BTreeSet<SwcClass> {
        let tool = normalize_tool(tool);
        self.rows
            .iter()
            .filter(|((t, _), _)| *t == tool)
            .filter_map(|(_, c)| match c {
                Classification::Swc(s) => Some(*s),
                _ => None,
            })
            .collect()
    }

    pub fn tools(&self) -> BTreeSet<&str> {
        self.rows.keys().map(|(t, _)| t.as_str()).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &str, Classification)> {
        self.rows.iter().map(|((t, f), c)| (t.as_str(), f.as_str(), *c))
    }
}
