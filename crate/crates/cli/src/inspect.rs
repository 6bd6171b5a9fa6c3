use std::io::{Read, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use skelforge_core::disasm::{disassemble, ScanMode};
use skelforge_core::hexcode::parse_hex;
use skelforge_core::metadata::{find_metadata, SolcVersion, StripMode};
use skelforge_core::opcodes::OpcodeTable;
use skelforge_core::skeleton::{CodeKind, Removed, Skeletonizer};

use crate::InputError;

/// Reads hex from a file, or from stdin when `path` is absent or `-`.
pub fn read_code(path: Option<&Path>) -> Result<Vec<u8>> {
    let (text, name) = match path {
        Some(p) if p != Path::new("-") => (
            std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?,
            p.display().to_string(),
        ),
        _ => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s).context("cannot read stdin")?;
            (s, "stdin".to_string())
        }
    };
    parse_hex(&text).map_err(|e| InputError(format!("{name}: {e}")).into())
}

pub fn disasm(code: &[u8], table: &OpcodeTable, out: &mut dyn Write) -> std::io::Result<()> {
    for ins in disassemble(code, ScanMode::Full, table).instructions {
        writeln!(out, "{ins}")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SectionLine<'a> {
    start: usize,
    end: usize,
    keys: &'a [String],
    solc_version: Option<SolcVersion>,
}

pub fn meta(code: &[u8], out: &mut dyn Write) -> Result<()> {
    for s in find_metadata(code) {
        let line = SectionLine {
            start: s.start,
            end: s.end,
            keys: &s.cbor_keys,
            solc_version: s.solc_version,
        };
        writeln!(out, "{}", serde_json::to_string(&line)?)?;
    }
    Ok(())
}

pub fn skel(
    code: &[u8],
    table: &OpcodeTable,
    kind: CodeKind,
    mode: StripMode,
    emit_canonical: bool,
    out: &mut dyn Write,
) -> Result<()> {
    let s = Skeletonizer::new(table).kind(kind).mode(mode).skeletonize(code);
    writeln!(out, "{} {}", s.digest, serde_json::to_string::<Removed>(&s.removed)?)?;
    if emit_canonical {
        // Operand-free PUSH opcodes: an equivalence key, not runnable code.
        writeln!(out, "canonical (not executable): 0x{}", hex::encode(&s.canonical_bytes))?;
    }
    Ok(())
}
