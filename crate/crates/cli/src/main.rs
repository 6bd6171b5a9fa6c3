mod analytics;
mod config;
mod inspect;
mod output;
mod pipeline;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use skelforge_core::corpus::CorpusStore;
use skelforge_core::findings::SwcSource;
use skelforge_core::metadata::StripMode;
use skelforge_core::skeleton::{CodeKind, Skeletonizer};

use crate::config::{Config, Overrides};

/// Bad input from the user; exits with status 2.
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

#[derive(Parser)]
#[command(name = "skelforge", version, about = "EVM bytecode skeletons, code families and tool-agreement analytics")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// JSON config file.
    #[arg(long, global = true, env = "SKELFORGE_CONFIG")]
    config: Option<PathBuf>,
    /// Width of timeline bins in blocks.
    #[arg(long, global = true)]
    bin_width: Option<u64>,
    /// Ignore deployments after this block.
    #[arg(long, global = true)]
    horizon: Option<u64>,
    /// SWC mapping table CSV replacing the bundled one.
    #[arg(long, global = true)]
    mapping_table: Option<PathBuf>,
    /// Opcode table CSV replacing the bundled one.
    #[arg(long, global = true)]
    opcode_table: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Fail on malformed lines and unknown findings instead of skipping them.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Args, Clone, Copy)]
struct SkeletonArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Remove)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = KindArg::Runtime)]
    kind: KindArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Remove,
    #[value(name = "zero_fill", alias = "zero-fill")]
    ZeroFill,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Runtime,
    Deployment,
}

#[derive(Clone, Copy, ValueEnum)]
enum SwcSourceArg {
    Table,
    Observed,
}

impl SkeletonArgs {
    fn mode(self) -> StripMode {
        match self.mode {
            ModeArg::Remove => StripMode::Remove,
            ModeArg::ZeroFill => StripMode::ZeroFill,
        }
    }

    fn kind(self) -> CodeKind {
        match self.kind {
            KindArg::Runtime => CodeKind::Runtime,
            KindArg::Deployment => CodeKind::Deployment,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Linear-sweep listing of a hex code (file or stdin).
    Disasm { input: Option<PathBuf> },
    /// Metadata sections as JSON lines.
    Meta { input: Option<PathBuf> },
    /// Skeleton digest and removed byte counts.
    Skel {
        input: Option<PathBuf>,
        /// Also print the canonical bytes.
        #[arg(long)]
        emit_canonical: bool,
        #[command(flatten)]
        skeleton: SkeletonArgs,
    },
    /// Ingest a records file into a corpus store directory.
    Ingest { records: PathBuf, store: PathBuf },
    /// Families, pipeline counts and corpus timelines.
    Pipeline {
        records: PathBuf,
        out_dir: PathBuf,
        /// Mnemonics for the operations timeline; default is every fork-introduced operation.
        #[arg(long, value_delimiter = ',')]
        ops: Vec<String>,
        /// JSON file with compiler version ranges.
        #[arg(long)]
        versions: Option<PathBuf>,
        #[command(flatten)]
        skeleton: SkeletonArgs,
    },
    /// Overlap, agreement, Jaccard and rate tables from tool runs.
    Analytics {
        records: PathBuf,
        runs: PathBuf,
        out_dir: PathBuf,
        /// Tools to leave out, comma separated.
        #[arg(long, value_delimiter = ',')]
        exclude: Vec<String>,
        /// Restrict to these SWC classes, comma separated.
        #[arg(long, value_delimiter = ',')]
        swc: Vec<String>,
        /// Derive the classes a tool covers from the table or from its findings.
        #[arg(long, value_enum, default_value_t = SwcSourceArg::Table)]
        swc_source: SwcSourceArg,
        #[command(flatten)]
        skeleton: SkeletonArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<InputError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    let versions = match &cli.command {
        Command::Pipeline { versions, .. } => versions.clone(),
        _ => None,
    };
    let cfg = Config::resolve(&Overrides {
        config: g.config,
        bin_width: g.bin_width,
        horizon: g.horizon,
        mapping_table: g.mapping_table,
        opcode_table: g.opcode_table,
        versions,
        strict: g.strict,
        jobs: g.jobs,
    })?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.jobs {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("cannot start worker threads")?;
    pool.install(|| dispatch(cli.command, &cfg))
}

fn dispatch(command: Command, cfg: &Config) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match command {
        Command::Disasm { input } => {
            let code = inspect::read_code(input.as_deref())?;
            inspect::disasm(&code, &cfg.opcode_table()?, &mut out)?;
        }
        Command::Meta { input } => {
            let code = inspect::read_code(input.as_deref())?;
            inspect::meta(&code, &mut out)?;
        }
        Command::Skel {
            input,
            emit_canonical,
            skeleton,
        } => {
            let code = inspect::read_code(input.as_deref())?;
            let table = cfg.opcode_table()?;
            inspect::skel(&code, &table, skeleton.kind(), skeleton.mode(), emit_canonical, &mut out)?;
        }
        Command::Ingest { records, store } => ingest(&records, &store, cfg)?,
        Command::Pipeline {
            records,
            out_dir,
            ops,
            skeleton,
            ..
        } => {
            let table = cfg.opcode_table()?;
            let sk = Skeletonizer::new(&table).kind(skeleton.kind()).mode(skeleton.mode());
            pipeline::run(&records, &out_dir, cfg, &table, &sk, &ops)?;
        }
        Command::Analytics {
            records,
            runs,
            out_dir,
            exclude,
            swc,
            swc_source,
            skeleton,
        } => {
            let opcodes = cfg.opcode_table()?;
            let mapping = cfg.mapping_table()?;
            let sk = Skeletonizer::new(&opcodes).kind(skeleton.kind()).mode(skeleton.mode());
            let args = analytics::AnalyticsArgs {
                records: &records,
                runs: &runs,
                out_dir: &out_dir,
                exclude: &exclude,
                swc: &swc,
                swc_source: match swc_source {
                    SwcSourceArg::Table => SwcSource::Table,
                    SwcSourceArg::Observed => SwcSource::Observed,
                },
            };
            analytics::run(&args, cfg, &mapping, &sk)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn ingest(records: &Path, store: &Path, cfg: &Config) -> Result<()> {
    let options = skelforge_core::corpus::IngestOptions {
        horizon_block: cfg.horizon_block,
        strict: cfg.strict,
    };
    let report = skelforge_core::corpus::ingest(records, options)
        .map_err(|e| InputError(format!("{}: {e}", records.display())))?;
    for e in &report.errors {
        eprintln!("warning: {}: {e}", records.display());
    }
    CorpusStore::new(store).save(&report.corpus)?;
    eprintln!(
        "{} deployments of {} distinct codes stored in {}",
        report.corpus.deployment_count(),
        report.corpus.distinct_codes(),
        store.display()
    );
    Ok(())
}
