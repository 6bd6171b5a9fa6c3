//! Block-height bins for timeline statistics.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

pub const DEFAULT_BIN_WIDTH: u64 = 100_000;

/// Default end of the study window.
pub const DEFAULT_HORIZON_BLOCK: u64 = 14_000_000;

pub fn bin_index(block: u64, bin_width: u64) -> u64 {
    block / bin_width
}

/// `100 * numerator / denominator`, or `None` for an empty denominator.
pub fn percentage(numerator: u64, denominator: u64) -> Option<f64> {
    (denominator > 0).then(|| 100.0 * numerator as f64 / denominator as f64)
}

/// One-decimal rendering used by every CSV export; empty for undefined values.
pub fn format_pct(value: Option<f64>) -> String {
    value.map(|v| format!("{v:.1}")).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bin {
    pub index: u64,
    pub numerator: u64,
    pub denominator: u64,
    /// `None` marks an empty bin.
    pub percentage: Option<f64>,
}

impl Bin {
    pub fn is_empty(&self) -> bool {
        self.denominator == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinSeries {
    pub bin_width: u64,
    pub bins: Vec<Bin>,
}

impl BinSeries {
    /// Series over bins `0..=last_bin`, filling gaps with empty bins.
    pub fn from_counts(bin_width: u64, last_bin: Option<u64>, counts: &BTreeMap<u64, (u64, u64)>) -> Self {
        let bins = match last_bin {
            None => Vec::new(),
            Some(last) => (0..=last)
                .map(|index| {
                    let (numerator, denominator) = counts.get(&index).copied().unwrap_or((0, 0));
                    Bin {
                        index,
                        numerator,
                        denominator,
                        percentage: percentage(numerator, denominator),
                    }
                })
                .collect(),
        };
        BinSeries { bin_width, bins }
    }

    pub fn get(&self, index: u64) -> Option<&Bin> {
        self.bins.get(usize::try_from(index).ok()?)
    }
}

/// Writes several labelled series as one CSV:
/// `<label_header>,bin_index,numerator,denominator,percentage`.
pub fn write_series_csv<'a, W: Write + ?Sized>(
    out: &mut W,
    label_header: &str,
    series: impl IntoIterator<Item = (&'a str, &'a BinSeries)>,
) -> std::io::Result<()> {
    writeln!(out, "{label_header},bin_index,numerator,denominator,percentage")?;
    for (label, s) in series {
        for b in &s.bins {
            writeln!(
                out,
                "{label},{},{},{},{}",
                b.index,
                b.numerator,
                b.denominator,
                format_pct(b.percentage)
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_bins_are_marked() {
        let counts = BTreeMap::from([(0, (1, 2)), (2, (3, 3))]);
        let s = BinSeries::from_counts(100_000, Some(2), &counts);
        assert_eq!(s.bins.len(), 3);
        assert_eq!(s.bins[0].percentage, Some(50.0));
        assert!(s.bins[1].is_empty());
        assert_eq!(s.bins[1].percentage, None);
        assert_eq!(s.bins[2].percentage, Some(100.0));
    }

    #[test]
    fn csv_rendering() {
        let counts = BTreeMap::from([(1, (1, 3))]);
        let s = BinSeries::from_counts(10, Some(1), &counts);
        let mut buf = Vec::new();
        write_series_csv(&mut buf, "series", [("ADD", &s)]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "series,bin_index,numerator,denominator,percentage\nADD,0,0,0,\nADD,1,1,3,33.3\n"
        );
    }

    #[test]
    fn bin_boundaries() {
        assert_eq!(bin_index(99_999, DEFAULT_BIN_WIDTH), 0);
        assert_eq!(bin_index(100_000, DEFAULT_BIN_WIDTH), 1);
    }
}
