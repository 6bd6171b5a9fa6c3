use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;
use skelforge_core::bins::{DEFAULT_BIN_WIDTH, DEFAULT_HORIZON_BLOCK};
use skelforge_core::corpus::VersionRanges;
use skelforge_core::findings::SwcMappingTable;
use skelforge_core::opcodes::OpcodeTable;

use crate::InputError;

pub const DIGEST_ALGORITHM: &str = "sha256";

/// Contents of the JSON file named by `--config` or `SKELFORGE_CONFIG`.
/// Relative paths are resolved against the file's directory.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    bin_width: Option<u64>,
    horizon_block: Option<u64>,
    digest_algorithm: Option<String>,
    mapping_table_path: Option<PathBuf>,
    opcode_table_path: Option<PathBuf>,
    version_ranges_path: Option<PathBuf>,
    strict: Option<bool>,
    jobs: Option<usize>,
}

/// Settings given on the command line; these win over the config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub bin_width: Option<u64>,
    pub horizon: Option<u64>,
    pub mapping_table: Option<PathBuf>,
    pub opcode_table: Option<PathBuf>,
    pub versions: Option<PathBuf>,
    pub strict: bool,
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Config {
    pub bin_width: u64,
    pub horizon_block: u64,
    pub mapping_table_path: Option<PathBuf>,
    pub opcode_table_path: Option<PathBuf>,
    pub version_ranges_path: Option<PathBuf>,
    pub strict: bool,
    pub jobs: Option<usize>,
}

impl Config {
    pub fn resolve(o: &Overrides) -> Result<Config> {
        let (file, base) = match &o.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read config {}", path.display()))?;
                let file: FileConfig = serde_json::from_str(&text)
                    .map_err(|e| InputError(format!("config {}: {e}", path.display())))?;
                (file, path.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (FileConfig::default(), PathBuf::new()),
        };
        if let Some(alg) = &file.digest_algorithm {
            if !alg.eq_ignore_ascii_case(DIGEST_ALGORITHM) {
                return Err(InputError(format!("unsupported digest algorithm {alg:?}; only {DIGEST_ALGORITHM}")).into());
            }
        }
        let rel = |p: Option<PathBuf>| p.map(|p| base.join(p));
        let cfg = Config {
            bin_width: o.bin_width.or(file.bin_width).unwrap_or(DEFAULT_BIN_WIDTH),
            horizon_block: o.horizon.or(file.horizon_block).unwrap_or(DEFAULT_HORIZON_BLOCK),
            mapping_table_path: o.mapping_table.clone().or(rel(file.mapping_table_path)),
            opcode_table_path: o.opcode_table.clone().or(rel(file.opcode_table_path)),
            version_ranges_path: o.versions.clone().or(rel(file.version_ranges_path)),
            strict: o.strict || file.strict.unwrap_or(false),
            jobs: o.jobs.or(file.jobs),
        };
        if cfg.bin_width == 0 {
            return Err(InputError("bin width must be positive".into()).into());
        }
        if cfg.horizon_block == 0 {
            return Err(InputError("horizon block must be positive".into()).into());
        }
        if cfg.jobs == Some(0) {
            return Err(InputError("--jobs must be positive".into()).into());
        }
        Ok(cfg)
    }

    pub fn opcode_table(&self) -> Result<OpcodeTable> {
        match &self.opcode_table_path {
            Some(p) => OpcodeTable::load(p).map_err(|e| InputError(e.to_string()).into()),
            None => Ok(OpcodeTable::bundled().clone()),
        }
    }

    pub fn mapping_table(&self) -> Result<SwcMappingTable> {
        match &self.mapping_table_path {
            Some(p) => SwcMappingTable::load(p).map_err(|e| InputError(e.to_string()).into()),
            None => Ok(SwcMappingTable::bundled().clone()),
        }
    }

    pub fn version_ranges(&self) -> Result<VersionRanges> {
        match &self.version_ranges_path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
                VersionRanges::from_json(&text).map_err(|e| InputError(format!("{}: {e}", p.display())).into())
            }
            None => Ok(VersionRanges::default()),
        }
    }
}
