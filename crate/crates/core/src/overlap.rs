//! Agreement between tools over shared SWC classes.
//!
//! `overlap(t1, t2)` is the share of `t1`'s flagged contracts, summed over
//! the classes both tools can detect, that `t2` flags for the same class. It
//! is asymmetric: 100 means `t1` flags a subset of what `t2` flags. Undefined
//! values (no shared class, nothing flagged) are `None`, never 0 or 100.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use crate::bins::{bin_index, format_pct, percentage};
use crate::error::AnalyticsError;
use crate::findings::{normalize_tool, FlaggedMatrix, SwcClass};

fn swc_of<'m>(m: &'m FlaggedMatrix, tool: &str) -> Result<&'m BTreeSet<SwcClass>, AnalyticsError> {
    m.swc(tool)
        .ok_or_else(|| AnalyticsError::UnknownTool(normalize_tool(tool)))
}

fn pct(numerator: usize, denominator: usize) -> Option<f64> {
    percentage(numerator as u64, denominator as u64)
}

pub fn overlap(t1: &str, t2: &str, m: &FlaggedMatrix) -> Result<Option<f64>, AnalyticsError> {
    let s1 = swc_of(m, t1)?;
    let s2 = swc_of(m, t2)?;
    let mut both = 0;
    let mut first = 0;
    for &class in s1.intersection(s2) {
        let f1 = m.flagged(t1, class);
        let f2 = m.flagged(t2, class);
        both += f1.intersection(f2).count();
        first += f1.len();
    }
    Ok(pct(both, first))
}

/// Square matrix with `t1` as row and `t2` as column.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapMatrix {
    pub tools: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl OverlapMatrix {
    pub fn get(&self, t1: &str, t2: &str) -> Option<Option<f64>> {
        let i = self.tools.iter().position(|t| *t == normalize_tool(t1))?;
        let j = self.tools.iter().position(|t| *t == normalize_tool(t2))?;
        Some(self.values[i][j])
    }

    /// Header row and column of tool ids, one-decimal cells, empty when
    /// undefined.
    pub fn write_csv<W: Write + ?Sized>(&self, out: &mut W) -> std::io::Result<()> {
        write!(out, "tool")?;
        for t in &self.tools {
            write!(out, ",{t}")?;
        }
        writeln!(out)?;
        for (t, row) in self.tools.iter().zip(&self.values) {
            write!(out, "{t}")?;
            for v in row {
                write!(out, ",{}", format_pct(*v))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

pub fn overlap_matrix(m: &FlaggedMatrix) -> OverlapMatrix {
    let tools: Vec<String> = m.tools().map(str::to_string).collect();
    let values = tools
        .iter()
        .map(|t1| {
            tools
                .iter()
                .map(|t2| overlap(t1, t2, m).expect("tools come from the matrix"))
                .collect()
        })
        .collect();
    OverlapMatrix { tools, values }
}

/// How many of the included tools agree on each contract a tool flags.
#[derive(Debug, Clone, PartialEq)]
pub struct BreakdownRow {
    pub tool: String,
    pub class: SwcClass,
    pub flagged: usize,
    /// Contracts flagged by exactly 1, 2, 3 and 4 or more tools.
    pub counts: [usize; 4],
    /// `counts` as percentages of `flagged`; `None` when nothing is flagged.
    pub shares: Option<[f64; 4]>,
}

fn bucket(n: usize) -> usize {
    n.clamp(1, 4) - 1
}

fn shares(counts: &[usize; 4], total: usize) -> Option<[f64; 4]> {
    (total > 0).then(|| counts.map(|c| 100.0 * c as f64 / total as f64))
}

fn covering_tools<'a>(m: &FlaggedMatrix, class: SwcClass, tools: &'a [String]) -> Result<Vec<&'a str>, AnalyticsError> {
    let mut out = Vec::new();
    for t in tools {
        if swc_of(m, t)?.contains(&class) {
            out.push(t.as_str());
        }
    }
    if out.is_empty() {
        return Err(AnalyticsError::ClassNotCovered(class.to_string()));
    }
    Ok(out)
}

/// Agreement breakdown for `class` among `included` tools, one row per
/// included tool that covers the class.
pub fn agreement_breakdown(
    m: &FlaggedMatrix,
    class: SwcClass,
    included: &[String],
) -> Result<Vec<BreakdownRow>, AnalyticsError> {
    let tools = covering_tools(m, class, included)?;
    let mut votes: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &tools {
        for code in m.flagged(t, class) {
            *votes.entry(code).or_default() += 1;
        }
    }
    Ok(tools
        .iter()
        .map(|t| {
            let flagged = m.flagged(t, class);
            let mut counts = [0; 4];
            for code in flagged {
                counts[bucket(votes[code.as_str()])] += 1;
            }
            BreakdownRow {
                tool: normalize_tool(t),
                class,
                flagged: flagged.len(),
                counts,
                shares: shares(&counts, flagged.len()),
            }
        })
        .collect())
}

pub fn write_breakdown_csv<W: Write + ?Sized>(rows: &[BreakdownRow], out: &mut W) -> std::io::Result<()> {
    writeln!(out, "tool,swc_class,flagged,share_1,share_2,share_3,share_4plus")?;
    for r in rows {
        write!(out, "{},{},{}", r.tool, r.class, r.flagged)?;
        for i in 0..4 {
            write!(out, ",{}", format_pct(r.shares.map(|s| s[i])))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

fn jaccard_sets<'m>(
    m: &'m FlaggedMatrix,
    t1: &str,
    t2: &str,
    class: Option<SwcClass>,
) -> Result<(BTreeSet<&'m str>, BTreeSet<&'m str>), AnalyticsError> {
    let s1 = swc_of(m, t1)?;
    let s2 = swc_of(m, t2)?;
    let classes: Vec<SwcClass> = match class {
        Some(c) => {
            for (t, s) in [(t1, s1), (t2, s2)] {
                if !s.contains(&c) {
                    return Err(AnalyticsError::ClassNotCovered(format!("{c} by {}", normalize_tool(t))));
                }
            }
            vec![c]
        }
        None => {
            let shared: Vec<_> = s1.intersection(s2).copied().collect();
            if shared.is_empty() {
                return Err(AnalyticsError::NoSharedClass(normalize_tool(t1), normalize_tool(t2)));
            }
            shared
        }
    };
    let collect = |t: &str| {
        classes
            .iter()
            .flat_map(|&c| m.flagged(t, c).iter().map(String::as_str))
            .collect::<BTreeSet<&str>>()
    };
    Ok((collect(t1), collect(t2)))
}

fn jaccard_of(a: &BTreeSet<&str>, b: &BTreeSet<&str>) -> Option<f64> {
    pct(a.intersection(b).count(), a.union(b).count())
}

/// `100 * |A ∩ B| / |A ∪ B|` over one class, or over the union of all shared
/// classes when `class` is `None`.
pub fn jaccard(t1: &str, t2: &str, m: &FlaggedMatrix, class: Option<SwcClass>) -> Result<Option<f64>, AnalyticsError> {
    let (a, b) = jaccard_sets(m, t1, t2, class)?;
    Ok(jaccard_of(&a, &b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JaccardPoint {
    pub bin: u64,
    /// Over contracts first deployed within this bin.
    pub per_bin: Option<f64>,
    /// Over contracts first deployed up to the end of this bin.
    pub cumulative: Option<f64>,
}

pub fn jaccard_timeline(
    t1: &str,
    t2: &str,
    m: &FlaggedMatrix,
    class: Option<SwcClass>,
    first_blocks: &BTreeMap<String, u64>,
    bin_width: u64,
) -> Result<Vec<JaccardPoint>, AnalyticsError> {
    let (a, b) = jaccard_sets(m, t1, t2, class)?;
    let Some(last) = first_blocks.values().map(|&x| bin_index(x, bin_width)).max() else {
        return Ok(Vec::new());
    };
    let bin_of = |code: &str| first_blocks.get(code).map(|&x| bin_index(x, bin_width));
    Ok((0..=last)
        .map(|bin| {
            let within = |s: &BTreeSet<&'_ str>, upto: bool| -> BTreeSet<String> {
                s.iter()
                    .filter(|c| bin_of(c).is_some_and(|x| if upto { x <= bin } else { x == bin }))
                    .map(|c| c.to_string())
                    .collect()
            };
            let point = |upto| {
                let (x, y) = (within(&a, upto), within(&b, upto));
                pct(x.intersection(&y).count(), x.union(&y).count())
            };
            JaccardPoint {
                bin,
                per_bin: point(false),
                cumulative: point(true),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapBin {
    pub index: u64,
    /// Contracts first deployed in this bin.
    pub codes: u64,
    /// Of those, flagged for the class by at least one included tool.
    pub flagged: u64,
    pub flagged_pct: Option<f64>,
    /// Flagged contracts by number of agreeing tools: 1, 2, 3, 4+.
    pub by_tools: [u64; 4],
    pub shares: Option<[f64; 4]>,
}

/// Per bin: how many contracts are flagged for `class` and how many tools
/// agree on each of them.
pub fn overlap_timeline(
    m: &FlaggedMatrix,
    first_blocks: &BTreeMap<String, u64>,
    class: SwcClass,
    tools: &[String],
    bin_width: u64,
) -> Result<Vec<OverlapBin>, AnalyticsError> {
    let tools = covering_tools(m, class, tools)?;
    let mut votes: BTreeMap<&str, u64> = BTreeMap::new();
    for t in &tools {
        for code in m.flagged(t, class) {
            *votes.entry(code).or_default() += 1;
        }
    }
    let Some(last) = first_blocks.values().map(|&x| bin_index(x, bin_width)).max() else {
        return Ok(Vec::new());
    };
    let mut codes = BTreeMap::<u64, u64>::new();
    for &b in first_blocks.values() {
        *codes.entry(bin_index(b, bin_width)).or_default() += 1;
    }
    let mut by_tools = BTreeMap::<u64, [u64; 4]>::new();
    for (code, n) in votes {
        if let Some(&b) = first_blocks.get(code) {
            by_tools.entry(bin_index(b, bin_width)).or_default()[bucket(n as usize)] += 1;
        }
    }
    Ok((0..=last)
        .map(|index| {
            let counts = by_tools.get(&index).copied().unwrap_or_default();
            let flagged: u64 = counts.iter().sum();
            let total = codes.get(&index).copied().unwrap_or(0);
            OverlapBin {
                index,
                codes: total,
                flagged,
                flagged_pct: percentage(flagged, total),
                by_tools: counts,
                shares: (flagged > 0).then(|| counts.map(|c| 100.0 * c as f64 / flagged as f64)),
            }
        })
        .collect())
}

/// `bin_index,numerator,denominator,percentage` (flagged out of all codes in
/// the bin) followed by the stacked agreement shares.
pub fn write_overlap_timeline_csv<W: Write + ?Sized>(bins: &[OverlapBin], out: &mut W) -> std::io::Result<()> {
    writeln!(
        out,
        "bin_index,numerator,denominator,percentage,count_1,count_2,count_3,count_4plus,share_1,share_2,share_3,share_4plus"
    )?;
    for b in bins {
        write!(out, "{},{},{},{}", b.index, b.flagged, b.codes, format_pct(b.flagged_pct))?;
        for c in b.by_tools {
            write!(out, ",{c}")?;
        }
        for i in 0..4 {
            write!(out, ",{}", format_pct(b.shares.map(|s| s[i])))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const REENTRANCY: SwcClass = SwcClass(107);

    fn two_tools() -> FlaggedMatrix {
        let mut m = FlaggedMatrix::new();
        m.flag("A", REENTRANCY, "x");
        m.flag("A", REENTRANCY, "y");
        m.flag("B", REENTRANCY, "y");
        m
    }

    fn names(tools: &[&str]) -> Vec<String> {
        tools.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn asymmetric_pair() {
        let m = two_tools();
        assert_eq!(overlap("A", "B", &m).unwrap(), Some(50.0));
        assert_eq!(overlap("B", "A", &m).unwrap(), Some(100.0));
        assert_eq!(overlap("A", "A", &m).unwrap(), Some(100.0));
        let om = overlap_matrix(&m);
        assert_eq!(om.values, [[Some(100.0), Some(50.0)], [Some(100.0), Some(100.0)]]);
        let mut buf = Vec::new();
        om.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "tool,a,b\na,100.0,50.0\nb,100.0,100.0\n");
    }

    #[test]
    fn disjoint_classes_are_undefined() {
        let mut m = two_tools();
        m.flag("C", SwcClass(101), "x");
        assert_eq!(overlap("A", "C", &m).unwrap(), None);
        assert!(matches!(overlap("A", "Z", &m), Err(AnalyticsError::UnknownTool(_))));
        // Shared class, nothing flagged by the first tool.
        let m = FlaggedMatrix::new()
            .with_tool("p", [REENTRANCY])
            .with_tool("q", [REENTRANCY]);
        assert_eq!(overlap("p", "q", &m).unwrap(), None);
    }

    #[test]
    fn single_tool_breakdown() {
        let m = two_tools();
        let rows = agreement_breakdown(&m, REENTRANCY, &names(&["a"])).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].shares, Some([100.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn three_tools_on_one_code() {
        let mut m = FlaggedMatrix::new();
        for t in ["a", "b", "c"] {
            m.flag(t, REENTRANCY, "k");
        }
        let rows = agreement_breakdown(&m, REENTRANCY, &names(&["a", "b", "c"])).unwrap();
        assert!(rows.iter().all(|r| r.shares == Some([0.0, 0.0, 100.0, 0.0])));
        assert!(matches!(
            agreement_breakdown(&m, SwcClass(101), &names(&["a"])),
            Err(AnalyticsError::ClassNotCovered(_))
        ));
    }

    #[test]
    fn jaccard_values() {
        let mut m = FlaggedMatrix::new();
        for c in ["x", "y"] {
            m.flag("a", REENTRANCY, c);
        }
        for c in ["y", "z"] {
            m.flag("b", REENTRANCY, c);
        }
        let j = jaccard("a", "b", &m, Some(REENTRANCY)).unwrap().unwrap();
        assert!((j - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(jaccard("a", "a", &m, None).unwrap(), Some(100.0));
        m.flag("c", SwcClass(101), "x");
        assert!(matches!(jaccard("a", "c", &m, None), Err(AnalyticsError::NoSharedClass(..))));
        assert!(jaccard("a", "c", &m, Some(REENTRANCY)).is_err());
    }

    #[test]
    fn jaccard_per_bin_and_cumulative() {
        let mut m = FlaggedMatrix::new();
        m.flag("a", REENTRANCY, "early");
        m.flag("b", REENTRANCY, "early");
        m.flag("a", REENTRANCY, "late");
        let blocks = BTreeMap::from([("early".to_string(), 5), ("late".to_string(), 150_000)]);
        let t = jaccard_timeline("a", "b", &m, Some(REENTRANCY), &blocks, 100_000).unwrap();
        assert_eq!(t[0].per_bin, Some(100.0));
        assert_eq!(t[1].per_bin, Some(0.0));
        assert_eq!(t[1].cumulative, Some(50.0));
    }

    #[test]
    fn timeline_two_tools_agree() {
        let mut m = FlaggedMatrix::new();
        for c in ["p", "q"] {
            m.flag("a", REENTRANCY, c);
            m.flag("b", REENTRANCY, c);
        }
        let blocks = BTreeMap::from([
            ("p".to_string(), 1),
            ("q".to_string(), 2),
            ("r".to_string(), 3),
            ("s".to_string(), 250_000),
        ]);
        let t = overlap_timeline(&m, &blocks, REENTRANCY, &names(&["a", "b"]), 100_000).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t[0].shares, Some([0.0, 100.0, 0.0, 0.0]));
        assert_eq!((t[0].flagged, t[0].codes), (2, 3));
        assert_eq!(t[1].codes, 0);
        assert_eq!(t[1].flagged_pct, None);
        assert_eq!(t[1].shares, None);
        assert_eq!(t[2].flagged_pct, Some(0.0));
    }
}
