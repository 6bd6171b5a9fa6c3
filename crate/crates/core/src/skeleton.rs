//! Skeletons: the canonical form used to group bytecodes into code families.
//!
//! A skeleton is what remains of a code after removing metadata, PUSH
//! operands, constructor arguments (deployment code only) and trailing zero
//! bytes. The canonical bytes are an equivalence key, not executable EVM
//! code: PUSH opcodes keep no operands.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::disasm::{disassemble, ScanMode};
use crate::metadata::{apply_strip, constructor_args_start, find_metadata, StripMode};
use crate::opcodes::OpcodeTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeKind {
    #[default]
    Runtime,
    Deployment,
}

impl std::str::FromStr for CodeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "runtime" => Ok(CodeKind::Runtime),
            "deployment" => Ok(CodeKind::Deployment),
            other => Err(format!("unknown code kind {other:?}")),
        }
    }
}

/// Byte counts dropped by each pipeline step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Removed {
    pub metadata_bytes: usize,
    pub push_operand_bytes: usize,
    pub trailing_zero_bytes: usize,
    pub constructor_arg_bytes: usize,
}

impl Removed {
    pub fn total(&self) -> usize {
        self.metadata_bytes + self.push_operand_bytes + self.trailing_zero_bytes + self.constructor_arg_bytes
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skeleton {
    pub canonical_bytes: Vec<u8>,
    /// Lowercase hex SHA-256 of `canonical_bytes`.
    pub digest: String,
    pub removed: Removed,
}

/// Intermediate results of the skeleton pipeline, one per stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stages {
    pub without_metadata: Vec<u8>,
    pub without_push_args: Vec<u8>,
    pub skeleton: Skeleton,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy)]
pub struct Skeletonizer<'t> {
    table: &'t OpcodeTable,
    kind: CodeKind,
    mode: StripMode,
}

impl Default for Skeletonizer<'static> {
    fn default() -> Self {
        Skeletonizer::new(OpcodeTable::bundled())
    }
}

impl<'t> Skeletonizer<'t> {
    pub fn new(table: &'t OpcodeTable) -> Self {
        Skeletonizer {
            table,
            kind: CodeKind::Runtime,
            mode: StripMode::Remove,
        }
    }

    pub fn kind(mut self, kind: CodeKind) -> Self {
        self.kind = kind;
        self
    }

    /// How metadata is neutralized. `ZeroFill` keeps the section length and
    /// exists for experiments; the default is `Remove`.
    pub fn mode(mut self, mode: StripMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn skeletonize(&self, code: &[u8]) -> Skeleton {
        self.stages(code).skeleton
    }

    pub fn stages(&self, code: &[u8]) -> Stages {
        let mut removed = Removed::default();
        let sections = find_metadata(code);

        let mut body = code;
        if self.kind == CodeKind::Deployment {
            if let Some(args_start) = constructor_args_start(&sections) {
                removed.constructor_arg_bytes = code.len() - args_start;
                body = &code[..args_start];
            }
        }
        let without_metadata = apply_strip(body, &sections, self.mode);
        removed.metadata_bytes = body.len() - without_metadata.len();

        let disassembly = disassemble(&without_metadata, ScanMode::Full, self.table);
        let mut without_push_args = Vec::with_capacity(disassembly.instructions.len());
        for ins in &disassembly.instructions {
            without_push_args.push(ins.byte);
            removed.push_operand_bytes += ins.operand.len();
        }

        let keep = without_push_args
            .iter()
            .rposition(|&b| b != 0)
            .map_or(0, |i| i + 1);
        let mut canonical_bytes = without_push_args.clone();
        canonical_bytes.truncate(keep);
        removed.trailing_zero_bytes = without_push_args.len() - keep;

        let digest = sha256_hex(&canonical_bytes);
        Stages {
            without_metadata,
            without_push_args,
            skeleton: Skeleton {
                canonical_bytes,
                digest,
                removed,
            },
        }
    }
}

/// Skeleton of `code` with the bundled opcode table and metadata removal.
pub fn skeletonize(code: &[u8], kind: CodeKind) -> Skeleton {
    Skeletonizer::default().kind(kind).skeletonize(code)
}

pub fn skeleton_digest(code: &[u8], kind: CodeKind) -> String {
    skeletonize(code, kind).digest
}
