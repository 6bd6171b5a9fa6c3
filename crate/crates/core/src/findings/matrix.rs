use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;

use super::{map_record, normalize_tool, Classification, MappedRecord, SwcClass, SwcMappingTable, ToolRunRecord};
use crate::bins::{bin_index, BinSeries};
use crate::error::AnalyticsError;

/// Where `Swc(t)`, the classes a tool can detect, comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SwcSource {
    /// Every class some finding of the tool maps to.
    #[default]
    Table,
    /// Only classes the tool actually flagged in the given records.
    Observed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MatrixOptions {
    /// Reject findings missing from the mapping table.
    pub strict: bool,
    pub swc_source: SwcSource,
}

/// Flagged contracts per (tool, SWC class), plus the classes each tool covers.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FlaggedMatrix {
    swc: BTreeMap<String, BTreeSet<SwcClass>>,
    flagged: BTreeMap<(String, SwcClass), BTreeSet<String>>,
    /// (tool, finding) pairs absent from the mapping table, lenient mode only.
    pub unknown_findings: BTreeSet<(String, String)>,
}

static EMPTY: BTreeSet<String> = BTreeSet::new();

impl FlaggedMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares `tool` with the classes it can detect.
    pub fn with_tool<I: IntoIterator<Item = SwcClass>>(mut self, tool: &str, classes: I) -> Self {
        self.swc.entry(normalize_tool(tool)).or_default().extend(classes);
        self
    }

    /// Adds `code_id` to `Flagged(tool, class)`; `class` joins `Swc(tool)`.
    pub fn flag(&mut self, tool: &str, class: SwcClass, code_id: &str) {
        let tool = normalize_tool(tool);
        self.swc.entry(tool.clone()).or_default().insert(class);
        self.flagged
            .entry((tool, class))
            .or_default()
            .insert(code_id.to_string());
    }

    pub fn tools(&self) -> impl Iterator<Item = &str> {
        self.swc.keys().map(String::as_str)
    }

    pub fn contains_tool(&self, tool: &str) -> bool {
        self.swc.contains_key(&normalize_tool(tool))
    }

    pub fn swc(&self, tool: &str) -> Option<&BTreeSet<SwcClass>> {
        self.swc.get(&normalize_tool(tool))
    }

    pub fn flagged(&self, tool: &str, class: SwcClass) -> &BTreeSet<String> {
        self.flagged
            .get(&(normalize_tool(tool), class))
            .unwrap_or(&EMPTY)
    }

    /// Nonempty `Flagged` sets in (tool, class) order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, SwcClass, &BTreeSet<String>)> {
        self.flagged
            .iter()
            .filter(|(_, codes)| !codes.is_empty())
            .map(|((t, s), codes)| (t.as_str(), *s, codes))
    }

    /// All classes covered by at least one tool.
    pub fn classes(&self) -> BTreeSet<SwcClass> {
        self.swc.values().flatten().copied().collect()
    }

    /// Copy restricted to the tools for which `keep` holds.
    pub fn select_tools(&self, keep: impl Fn(&str) -> bool) -> FlaggedMatrix {
        FlaggedMatrix {
            swc: self
                .swc
                .iter()
                .filter(|(t, _)| keep(t))
                .map(|(t, s)| (t.clone(), s.clone()))
                .collect(),
            flagged: self
                .flagged
                .iter()
                .filter(|((t, _), _)| keep(t))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
            unknown_findings: self.unknown_findings.clone(),
        }
    }

    pub fn without_tools(&self, excluded: &[String]) -> FlaggedMatrix {
        let excluded: BTreeSet<String> = excluded.iter().map(|t| normalize_tool(t)).collect();
        self.select_tools(|t| !excluded.contains(t))
    }

    /// Copy restricted to `classes`; tools keep their entries with fewer
    /// classes.
    pub fn select_classes(&self, classes: &BTreeSet<SwcClass>) -> FlaggedMatrix {
        FlaggedMatrix {
            swc: self
                .swc
                .iter()
                .map(|(t, s)| (t.clone(), s.intersection(classes).copied().collect()))
                .collect(),
            flagged: self
                .flagged
                .iter()
                .filter(|((_, s), _)| classes.contains(s))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
            unknown_findings: self.unknown_findings.clone(),
        }
    }

    /// `tool,swc_class,code_id`, one row per flagged contract.
    pub fn write_csv<W: Write + ?Sized>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "tool,swc_class,code_id")?;
        for (tool, class, codes) in self.entries() {
            for code in codes {
                writeln!(out, "{tool},{class},{code}")?;
            }
        }
        Ok(())
    }
}

type Flags = BTreeMap<(String, SwcClass), BTreeSet<String>>;

fn merge(mut a: Flags, b: Flags) -> Flags {
    for (k, v) in b {
        a.entry(k).or_default().extend(v);
    }
    a
}

/// `Flagged(t, s)` is the set of code ids for which some record of tool `t`
/// maps to class `s`. Repeated runs of a tool on a code are unioned.
pub fn build_matrix(
    records: &[ToolRunRecord],
    table: &SwcMappingTable,
    options: MatrixOptions,
) -> Result<FlaggedMatrix, AnalyticsError> {
    let mapped: Vec<Result<MappedRecord, AnalyticsError>> = records
        .par_iter()
        .map(|r| map_record(r, table, options.strict))
        .collect();
    let mapped: Vec<MappedRecord> = mapped.into_iter().collect::<Result<_, _>>()?;

    let flagged: Flags = records
        .par_iter()
        .zip(mapped.par_iter())
        .fold(Flags::new, |mut acc, (record, m)| {
            let tool = normalize_tool(&record.tool);
            for class in &m.classes {
                acc.entry((tool.clone(), *class))
                    .or_default()
                    .insert(record.code_id.clone());
            }
            acc
        })
        .reduce(Flags::new, merge);

    let mut tools: BTreeSet<String> = table.tools().into_iter().map(str::to_string).collect();
    tools.extend(records.iter().map(|r| normalize_tool(&r.tool)));
    let swc = tools
        .into_iter()
        .map(|t| {
            let classes = match options.swc_source {
                SwcSource::Table => table.swc(&t),
                SwcSource::Observed => flagged
                    .keys()
                    .filter(|(ft, _)| *ft == t)
                    .map(|(_, s)| *s)
                    .collect(),
            };
            (t, classes)
        })
        .collect();

    let unknown_findings = records
        .iter()
        .zip(&mapped)
        .flat_map(|(r, m)| m.unknown.iter().map(|f| (normalize_tool(&r.tool), f.clone())))
        .collect();

    Ok(FlaggedMatrix {
        swc,
        flagged,
        unknown_findings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateKind {
    /// At least one finding that is not omitted.
    Flagged,
    /// At least one error message.
    Error,
    /// Any fail flag set.
    Failure,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RateTimelines {
    pub series: BTreeMap<String, BinSeries>,
    /// Code ids of records that had no first block and were left out.
    pub skipped: BTreeSet<String>,
}

/// Per tool and bin, the share of analyzed codes with the given property.
///
/// `first_blocks` maps code ids to the block they are binned by; records for
/// other code ids are skipped. Every series spans the bins of `first_blocks`.
pub fn rate_timelines(
    records: &[ToolRunRecord],
    first_blocks: &BTreeMap<String, u64>,
    kind: RateKind,
    table: &SwcMappingTable,
    bin_width: u64,
) -> RateTimelines {
    let mut status: BTreeMap<(String, &str), bool> = BTreeMap::new();
    let mut skipped = BTreeSet::new();
    for r in records {
        if !first_blocks.contains_key(&r.code_id) {
            skipped.insert(r.code_id.clone());
            continue;
        }
        let hit = match kind {
            RateKind::Flagged => r
                .findings
                .iter()
                .any(|f| table.classify(&r.tool, f) != Some(Classification::Omitted)),
            RateKind::Error => !r.errors.is_empty(),
            RateKind::Failure => r.fails.any(),
        };
        *status
            .entry((normalize_tool(&r.tool), r.code_id.as_str()))
            .or_default() |= hit;
    }

    let last = first_blocks.values().map(|&b| bin_index(b, bin_width)).max();
    let mut counts: BTreeMap<String, BTreeMap<u64, (u64, u64)>> = BTreeMap::new();
    for ((tool, code), hit) in status {
        let bin = bin_index(first_blocks[code], bin_width);
        let c = counts.entry(tool).or_default().entry(bin).or_default();
        c.0 += u64::from(hit);
        c.1 += 1;
    }
    RateTimelines {
        series: counts
            .into_iter()
            .map(|(tool, c)| (tool, BinSeries::from_counts(bin_width, last, &c)))
            .collect(),
        skipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::findings::Fails;

    fn table() -> &'static SwcMappingTable {
        SwcMappingTable::bundled()
    }

    #[test]
    fn single_record() {
        let r = ToolRunRecord::new("Conkas", "x").with_findings(["Reentrancy"]);
        let m = build_matrix(&[r], table(), MatrixOptions::default()).unwrap();
        assert_eq!(m.flagged("conkas", SwcClass(107)).iter().collect::<Vec<_>>(), ["x"]);
        assert_eq!(m.tools().count(), 12);
    }

    #[test]
    fn two_tools_same_code() {
        let records = [
            ToolRunRecord::new("Maian", "x").with_findings(["Ether_leak"]),
            ToolRunRecord::new("teEther", "x").with_findings(["Ether_leak"]),
        ];
        let m = build_matrix(&records, table(), MatrixOptions::default()).unwrap();
        assert!(m.flagged("maian", SwcClass(105)).contains("x"));
        assert!(m.flagged("teether", SwcClass(105)).contains("x"));
    }

    #[test]
    fn swc_sources() {
        let r = ToolRunRecord::new("Conkas", "x").with_findings(["Reentrancy"]);
        let table_m = build_matrix(&[r.clone()], table(), MatrixOptions::default()).unwrap();
        assert_eq!(table_m.swc("conkas").unwrap().len(), 5);
        let observed = build_matrix(
            &[r],
            table(),
            MatrixOptions {
                swc_source: SwcSource::Observed,
                ..MatrixOptions::default()
            },
        )
        .unwrap();
        assert_eq!(observed.swc("conkas").unwrap().len(), 1);
        assert!(observed.swc("ethor").unwrap().is_empty());
    }

    #[test]
    fn unknown_findings_are_collected() {
        let r = ToolRunRecord::new("newtool", "x").with_findings(["Thing"]);
        let m = build_matrix(&[r.clone()], table(), MatrixOptions::default()).unwrap();
        assert!(m.unknown_findings.contains(&("newtool".to_string(), "Thing".to_string())));
        assert!(m.swc("newtool").unwrap().is_empty());
        let strict = MatrixOptions {
            strict: true,
            ..MatrixOptions::default()
        };
        assert!(build_matrix(&[r], table(), strict).is_err());
    }

    #[test]
    fn flagged_rate_half() {
        let blocks = BTreeMap::from([("a".to_string(), 10), ("b".to_string(), 20)]);
        let records = [
            ToolRunRecord::new("conkas", "a").with_findings(["Reentrancy"]),
            ToolRunRecord::new("conkas", "b"),
        ];
        let t = rate_timelines(&records, &blocks, RateKind::Flagged, table(), 100_000);
        assert_eq!(t.series["conkas"].bins[0].percentage, Some(50.0));
    }

    #[test]
    fn timeout_counts_as_failure_not_flagged() {
        let blocks = BTreeMap::from([("a".to_string(), 10)]);
        let mut r = ToolRunRecord::new("ethor", "a");
        r.fails = Fails {
            timeout: true,
            ..Fails::default()
        };
        let failed = rate_timelines(&[r.clone()], &blocks, RateKind::Failure, table(), 100_000);
        assert_eq!(failed.series["ethor"].bins[0].percentage, Some(100.0));
        let flagged = rate_timelines(&[r], &blocks, RateKind::Flagged, table(), 100_000);
        assert_eq!(flagged.series["ethor"].bins[0].percentage, Some(0.0));
    }

    #[test]
    fn omitted_findings_do_not_flag_and_missing_codes_are_skipped() {
        let blocks = BTreeMap::from([("a".to_string(), 10)]);
        let records = [
            ToolRunRecord::new("ethor", "a").with_findings(["secure"]),
            ToolRunRecord::new("ethor", "zz").with_findings(["insecure"]),
        ];
        let t = rate_timelines(&records, &blocks, RateKind::Flagged, table(), 100_000);
        assert_eq!(t.series["ethor"].bins[0].numerator, 0);
        assert_eq!(t.skipped.iter().collect::<Vec<_>>(), ["zz"]);
    }
}
