use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{Context, Result};
use skelforge_core::bins::{format_pct, write_series_csv};
use skelforge_core::corpus::first_blocks;
use skelforge_core::findings::{
    build_matrix, normalize_tool, rate_timelines, read_runs, MatrixOptions, RateKind, SwcClass, SwcMappingTable,
    SwcSource,
};
use skelforge_core::overlap::{
    agreement_breakdown, jaccard, jaccard_timeline, overlap_matrix, overlap_timeline, write_breakdown_csv,
    write_overlap_timeline_csv,
};
use skelforge_core::skeleton::Skeletonizer;
use skelforge_core::AnalyticsError;

use crate::config::Config;
use crate::output::Outputs;
use crate::pipeline::load_families;
use crate::InputError;

pub struct AnalyticsArgs<'a> {
    pub records: &'a Path,
    pub runs: &'a Path,
    pub out_dir: &'a Path,
    pub exclude: &'a [String],
    pub swc: &'a [String],
    pub swc_source: SwcSource,
}

fn parse_classes(tokens: &[String]) -> Result<Option<BTreeSet<SwcClass>>> {
    if tokens.is_empty() {
        return Ok(None);
    }
    tokens
        .iter()
        .map(|t| t.parse::<SwcClass>().map_err(|e| InputError(e.to_string()).into()))
        .collect::<Result<_>>()
        .map(Some)
}

pub fn run(args: &AnalyticsArgs<'_>, cfg: &Config, table: &SwcMappingTable, skeletonizer: &Skeletonizer<'_>) -> Result<()> {
    let classes = parse_classes(args.swc)?;
    let clustered = load_families(args.records, cfg, skeletonizer)?;
    let blocks = first_blocks(&clustered.families);

    let file = File::open(args.runs).with_context(|| format!("cannot open {}", args.runs.display()))?;
    let (records, bad) = read_runs(BufReader::new(file), cfg.strict).map_err(|e| match e {
        AnalyticsError::Line { .. } => anyhow::Error::from(InputError(format!("{}: {e}", args.runs.display()))),
        other => anyhow::Error::from(other),
    })?;
    for e in &bad {
        eprintln!("warning: {}: {e}", args.runs.display());
    }
    if records.is_empty() {
        eprintln!("warning: {} holds no tool runs; all matrices are empty", args.runs.display());
    }

    let options = MatrixOptions {
        strict: cfg.strict,
        swc_source: args.swc_source,
    };
    let full = build_matrix(&records, table, options).map_err(|e| InputError(e.to_string()))?;
    for (tool, finding) in &full.unknown_findings {
        eprintln!("warning: finding {finding:?} of {tool} is not in the mapping table");
    }
    for t in args.exclude {
        if !full.contains_tool(t) {
            return Err(InputError(format!("unknown tool {t:?} in --exclude")).into());
        }
    }
    let excluded: BTreeSet<String> = args.exclude.iter().map(|t| normalize_tool(t)).collect();
    let observed: BTreeSet<String> = records
        .iter()
        .map(|r| normalize_tool(&r.tool))
        .filter(|t| !excluded.contains(t))
        .collect();
    let mut m = full.select_tools(|t| observed.contains(t));
    if let Some(c) = &classes {
        m = m.select_classes(c);
    }
    let tools: Vec<String> = m.tools().map(str::to_string).collect();
    let kept: Vec<_> = records
        .iter()
        .filter(|r| observed.contains(&normalize_tool(&r.tool)))
        .cloned()
        .collect();

    let mut outputs = Outputs::new(args.out_dir)?;
    outputs.write("flagged.csv", |w| m.write_csv(w))?;
    let om = overlap_matrix(&m);
    outputs.write("overlap_matrix.csv", |w| om.write_csv(w))?;

    let mut rows = Vec::new();
    let covered: Vec<SwcClass> = m.classes().into_iter().collect();
    for &class in &covered {
        rows.extend(agreement_breakdown(&m, class, &tools)?);
    }
    outputs.write("agreement.csv", |w| write_breakdown_csv(&rows, w))?;

    for &class in &covered {
        let bins = overlap_timeline(&m, &blocks, class, &tools, cfg.bin_width)?;
        outputs.write(&format!("overlap_timeline_{class}.csv"), |w| write_overlap_timeline_csv(&bins, w))?;
    }

    let mut jaccard_rows = Vec::new();
    let mut jaccard_points = Vec::new();
    for (i, t1) in tools.iter().enumerate() {
        for t2 in &tools[i + 1..] {
            let shared: Vec<SwcClass> = m.swc(t1).unwrap().intersection(m.swc(t2).unwrap()).copied().collect();
            if shared.is_empty() {
                continue;
            }
            let scopes = std::iter::once(None).chain(shared.into_iter().map(Some));
            for scope in scopes {
                let label = scope.map_or_else(|| "all".to_string(), |c| c.to_string());
                jaccard_rows.push((t1, t2, label.clone(), jaccard(t1, t2, &m, scope)?));
                for p in jaccard_timeline(t1, t2, &m, scope, &blocks, cfg.bin_width)? {
                    jaccard_points.push((t1, t2, label.clone(), p));
                }
            }
        }
    }
    outputs.write("jaccard.csv", |w| {
        writeln!(w, "tool1,tool2,swc_class,jaccard")?;
        for (t1, t2, label, j) in &jaccard_rows {
            writeln!(w, "{t1},{t2},{label},{}", format_pct(*j))?;
        }
        Ok(())
    })?;
    outputs.write("jaccard_timeline.csv", |w| {
        writeln!(w, "tool1,tool2,swc_class,bin_index,per_bin,cumulative")?;
        for (t1, t2, label, p) in &jaccard_points {
            writeln!(
                w,
                "{t1},{t2},{label},{},{},{}",
                p.bin,
                format_pct(p.per_bin),
                format_pct(p.cumulative)
            )?;
        }
        Ok(())
    })?;

    let mut skipped = BTreeSet::new();
    for (kind, name) in [
        (RateKind::Flagged, "flagged_rate.csv"),
        (RateKind::Error, "error_rate.csv"),
        (RateKind::Failure, "failure_rate.csv"),
    ] {
        let t = rate_timelines(&kept, &blocks, kind, table, cfg.bin_width);
        skipped.extend(t.skipped);
        outputs.write(name, |w| write_series_csv(w, "tool", t.series.iter().map(|(k, v)| (k.as_str(), v))))?;
    }
    if !skipped.is_empty() {
        eprintln!(
            "warning: {} code ids in {} are not skeletons of the corpus; their runs were skipped",
            skipped.len(),
            args.runs.display()
        );
    }

    outputs.commit()?;
    Ok(())
}
