use std::path::Path;

use anyhow::{Context, Result};
use skelforge_core::bins::write_series_csv;
use skelforge_core::corpus::{
    cluster, compiler_timeline, dedup_stats, ingest, ops_timeline, CodeFamily, Corpus, IngestOptions,
};
use skelforge_core::opcodes::OpcodeTable;
use skelforge_core::skeleton::Skeletonizer;
use skelforge_core::CorpusError;

use crate::config::Config;
use crate::output::Outputs;
use crate::InputError;

pub struct Clustered {
    pub corpus: Corpus,
    pub families: Vec<CodeFamily>,
}

/// Ingests a records file and groups its codes into families. Skipped lines
/// are reported on stderr.
pub fn load_families(records: &Path, cfg: &Config, skeletonizer: &Skeletonizer<'_>) -> Result<Clustered> {
    let options = IngestOptions {
        horizon_block: cfg.horizon_block,
        strict: cfg.strict,
    };
    let report = ingest(records, options).map_err(|e| match e {
        CorpusError::Line { .. } => anyhow::Error::from(InputError(format!("{}: {e}", records.display()))),
        other => anyhow::Error::from(other).context(format!("cannot ingest {}", records.display())),
    })?;
    for e in &report.errors {
        eprintln!("warning: {}: {e}", records.display());
    }
    let families = cluster(&report.corpus, skeletonizer);
    Ok(Clustered {
        corpus: report.corpus,
        families,
    })
}

fn resolve_mnemonics(table: &OpcodeTable, requested: &[String]) -> Result<Vec<String>> {
    if requested.is_empty() {
        return Ok(table.fork_introduced().map(|op| op.mnemonic.clone()).collect());
    }
    let mut out = Vec::new();
    for m in requested {
        let m = m.to_ascii_uppercase();
        if table.by_mnemonic(&m).is_none() {
            return Err(InputError(format!("unknown mnemonic {m}")).into());
        }
        out.push(m);
    }
    Ok(out)
}

pub fn run(
    records: &Path,
    out_dir: &Path,
    cfg: &Config,
    table: &OpcodeTable,
    skeletonizer: &Skeletonizer<'_>,
    ops: &[String],
) -> Result<()> {
    let mnemonics = resolve_mnemonics(table, ops)?;
    let ranges = cfg.version_ranges()?;
    let Clustered { corpus, families } = load_families(records, cfg, skeletonizer)?;

    let mut outputs = Outputs::new(out_dir)?;
    outputs.write("families.jsonl", |w| {
        for f in &families {
            serde_json::to_writer(&mut *w, f)?;
            writeln!(w)?;
        }
        Ok(())
    })?;

    let stats = dedup_stats(&corpus, skeletonizer);
    outputs.write("stats.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &stats)?;
        writeln!(w)
    })?;

    let names: Vec<&str> = mnemonics.iter().map(String::as_str).collect();
    let ops_series = ops_timeline(&corpus, &families, &names, table, cfg.bin_width).context("ops timeline")?;
    outputs.write("ops_timeline.csv", |w| {
        write_series_csv(w, "mnemonic", names.iter().map(|n| (*n, &ops_series[*n])))
    })?;

    let compilers = compiler_timeline(&corpus, &families, &ranges, cfg.bin_width);
    outputs.write("compiler_timeline.csv", |w| compilers.write_csv(w))?;

    outputs.commit()?;
    eprintln!(
        "{} deployments, {} codes, {} families",
        stats.deployments,
        stats.distinct_runtime_codes,
        families.len()
    );
    Ok(())
}
