use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CodeFamily, Corpus};
use crate::bins::{bin_index, format_pct, BinSeries};
use crate::disasm::ops_present;
use crate::error::CorpusError;
use crate::metadata::{find_metadata, SolcVersion};
use crate::opcodes::OpcodeTable;

/// Skeleton digest to first deployment block of its family.
pub fn first_blocks(families: &[CodeFamily]) -> BTreeMap<String, u64> {
    families
        .iter()
        .map(|f| (f.skeleton_digest.clone(), f.first_block))
        .collect()
}

fn last_bin(families: &[CodeFamily], bin_width: u64) -> Option<u64> {
    families.iter().map(|f| bin_index(f.first_block, bin_width)).max()
}

/// Share of families per bin whose representative contains each mnemonic.
///
/// Families are binned by first deployment block and operations come from a
/// full linear sweep, so embedded data can produce spurious hits.
pub fn ops_timeline(
    corpus: &Corpus,
    families: &[CodeFamily],
    mnemonics: &[&str],
    table: &OpcodeTable,
    bin_width: u64,
) -> Result<BTreeMap<String, BinSeries>, CorpusError> {
    if let Some(unknown) = mnemonics.iter().find(|m| table.by_mnemonic(m).is_none()) {
        return Err(CorpusError::UnknownMnemonic(unknown.to_string()));
    }
    let per_family: Vec<(u64, Vec<bool>)> = families
        .par_iter()
        .map(|f| {
            let code = corpus.get(&f.representative).map_or(&[][..], |e| &e.code[..]);
            let ops = ops_present(code, table);
            let hits = mnemonics.iter().map(|m| ops.contains(*m)).collect();
            (bin_index(f.first_block, bin_width), hits)
        })
        .collect();

    let last = last_bin(families, bin_width);
    Ok(mnemonics
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let mut counts: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
            for (bin, hits) in &per_family {
                let c = counts.entry(*bin).or_default();
                c.0 += u64::from(hits[i]);
                c.1 += 1;
            }
            (m.to_string(), BinSeries::from_counts(bin_width, last, &counts))
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionRange {
    pub label: String,
    /// Inclusive lower bound; the range ends where the next one starts.
    pub from: SolcVersion,
}

/// Ordered, contiguous compiler-version ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionRanges {
    pub ranges: Vec<VersionRange>,
}

impl Default for VersionRanges {
    /// Ten ranges split at the compiler releases that first emit one of the
    /// fork-introduced operations.
    fn default() -> Self {
        let bounds: [(&str, (u64, u64, u64)); 10] = [
            ("<0.4.9", (0, 0, 0)),
            ("0.4.9", (0, 4, 9)),
            ("0.4.10-0.4.21", (0, 4, 10)),
            ("0.4.22-0.4.26", (0, 4, 22)),
            ("0.5.0-0.5.4", (0, 5, 0)),
            ("0.5.5-0.5.13", (0, 5, 5)),
            ("0.5.14-0.6.1", (0, 5, 14)),
            ("0.6.2-0.7.6", (0, 6, 2)),
            ("0.8.0-0.8.6", (0, 8, 0)),
            (">=0.8.7", (0, 8, 7)),
        ];
        VersionRanges {
            ranges: bounds
                .into_iter()
                .map(|(label, (a, b, c))| VersionRange {
                    label: label.to_string(),
                    from: SolcVersion::new(a, b, c),
                })
                .collect(),
        }
    }
}

impl VersionRanges {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let ranges: VersionRanges = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if ranges.ranges.is_empty() {
            return Err("no version ranges".into());
        }
        if ranges.ranges.windows(2).any(|w| w[0].from >= w[1].from) {
            return Err("version ranges must be strictly ascending".into());
        }
        Ok(ranges)
    }

    /// Index of the range holding `v`; versions below the first bound fall
    /// into the first range.
    pub fn classify(&self, v: SolcVersion) -> usize {
        self.ranges
            .iter()
            .rposition(|r| r.from <= v)
            .unwrap_or(0)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.ranges.iter().map(|r| r.label.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompilerBin {
    pub index: u64,
    pub total: u64,
    pub known: u64,
    pub counts: Vec<u64>,
    /// Shares over known versions rescaled to 100%; `None` when no code in
    /// the bin has a known version.
    pub shares: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompilerTimeline {
    pub bin_width: u64,
    pub labels: Vec<String>,
    pub bins: Vec<CompilerBin>,
}

impl CompilerTimeline {
    /// Long format: `bin_index,total,known,range,count,share`.
    pub fn write_csv<W: Write + ?Sized>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "bin_index,total,known,range,count,share")?;
        for bin in &self.bins {
            for (i, label) in self.labels.iter().enumerate() {
                let share = bin.shares.as_ref().map(|s| s[i]);
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    bin.index,
                    bin.total,
                    bin.known,
                    label,
                    bin.counts[i],
                    format_pct(share)
                )?;
            }
        }
        Ok(())
    }
}

/// Compiler version of a code: the verified-source version when recorded,
/// otherwise the `solc` entry of its outermost (last) metadata section.
pub fn code_version(corpus: &Corpus, code_id: &str) -> Option<SolcVersion> {
    let entry = corpus.get(code_id)?;
    entry
        .source_version()
        .or_else(|| find_metadata(&entry.code).last()?.solc_version)
}

/// Per-bin distribution of compiler-version ranges over family
/// representatives. Codes with unknown versions are assumed to follow the
/// distribution of the known ones in the same bin.
pub fn compiler_timeline(
    corpus: &Corpus,
    families: &[CodeFamily],
    ranges: &VersionRanges,
    bin_width: u64,
) -> CompilerTimeline {
    let versions: Vec<(u64, Option<SolcVersion>)> = families
        .par_iter()
        .map(|f| (bin_index(f.first_block, bin_width), code_version(corpus, &f.representative)))
        .collect();

    let n = ranges.ranges.len();
    let mut per_bin: BTreeMap<u64, (u64, Vec<u64>)> = BTreeMap::new();
    for (bin, version) in versions {
        let (total, counts) = per_bin.entry(bin).or_insert_with(|| (0, vec![0; n]));
        *total += 1;
        if let Some(v) = version {
            counts[ranges.classify(v)] += 1;
        }
    }

    let bins = match last_bin(families, bin_width) {
        None => Vec::new(),
        Some(last) => (0..=last)
            .map(|index| {
                let (total, counts) = per_bin.remove(&index).unwrap_or_else(|| (0, vec![0; n]));
                let known: u64 = counts.iter().sum();
                let shares = (known > 0).then(|| {
                    counts
                        .iter()
                        .map(|&c| 100.0 * c as f64 / known as f64)
                        .collect()
                });
                CompilerBin {
                    index,
                    total,
                    known,
                    counts,
                    shares,
                }
            })
            .collect(),
    };
    CompilerTimeline {
        bin_width,
        labels: ranges.labels().map(str::to_string).collect(),
        bins,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{cluster, Deployment};
    use crate::skeleton::{sha256_hex, Skeletonizer};

    fn versioned(corpus: &mut Corpus, code: Vec<u8>, block: u64, version: Option<SolcVersion>) {
        corpus.insert(
            sha256_hex(&code),
            code,
            Deployment {
                block,
                address: None,
                has_source: version.is_some(),
                compiler_version: version,
            },
        );
    }

    #[test]
    fn every_code_with_add_is_full() {
        let mut corpus = Corpus::new();
        corpus.insert_code(vec![0x01], 10, false);
        corpus.insert_code(vec![0x01, 0x02], 250_000, false);
        let families = cluster(&corpus, &Skeletonizer::default());
        let t = ops_timeline(&corpus, &families, &["ADD", "SHR"], OpcodeTable::bundled(), 100_000).unwrap();
        let add = &t["ADD"];
        assert_eq!(add.bins.len(), 3);
        assert_eq!(add.bins[0].percentage, Some(100.0));
        assert_eq!(add.bins[1].percentage, None);
        assert_eq!(add.bins[2].percentage, Some(100.0));
        assert_eq!(t["SHR"].bins[0].percentage, Some(0.0));
    }

    #[test]
    fn unknown_mnemonic() {
        let corpus = Corpus::new();
        assert!(matches!(
            ops_timeline(&corpus, &[], &["FOO"], OpcodeTable::bundled(), 100_000),
            Err(CorpusError::UnknownMnemonic(_))
        ));
    }

    #[test]
    fn known_versions_are_rescaled() {
        let mut corpus = Corpus::new();
        versioned(&mut corpus, vec![0x01], 1, Some(SolcVersion::new(0, 4, 24)));
        versioned(&mut corpus, vec![0x02], 2, Some(SolcVersion::new(0, 4, 11)));
        versioned(&mut corpus, vec![0x03], 3, Some(SolcVersion::new(0, 8, 1)));
        versioned(&mut corpus, vec![0x04], 4, Some(SolcVersion::new(0, 8, 9)));
        versioned(&mut corpus, vec![0x05], 5, None);
        versioned(&mut corpus, vec![0x06], 200_000, None);
        let families = cluster(&corpus, &Skeletonizer::default());
        let ranges = VersionRanges {
            ranges: vec![
                VersionRange {
                    label: "0.4.x".into(),
                    from: SolcVersion::new(0, 4, 0),
                },
                VersionRange {
                    label: "0.8.x".into(),
                    from: SolcVersion::new(0, 8, 0),
                },
            ],
        };
        let t = compiler_timeline(&corpus, &families, &ranges, 100_000);
        assert_eq!(t.bins.len(), 3);
        assert_eq!(t.bins[0].total, 5);
        assert_eq!(t.bins[0].known, 4);
        assert_eq!(t.bins[0].shares, Some(vec![50.0, 50.0]));
        assert_eq!(t.bins[1].shares, None);
        assert_eq!(t.bins[2].shares, None);
        assert_eq!(t.bins[2].total, 1);
    }

    #[test]
    fn default_ranges_classify() {
        let r = VersionRanges::default();
        assert_eq!(r.ranges.len(), 10);
        assert_eq!(r.classify(SolcVersion::new(0, 4, 8)), 0);
        assert_eq!(r.classify(SolcVersion::new(0, 4, 22)), 3);
        assert_eq!(r.classify(SolcVersion::new(0, 8, 12)), 9);
        assert!(VersionRanges::from_json(r#"{"ranges":[{"label":"a","from":"0.5.0"},{"label":"b","from":"0.4.0"}]}"#).is_err());
        assert_eq!(
            VersionRanges::from_json(&serde_json::to_string(&r).unwrap()).unwrap(),
            r
        );
    }
}
