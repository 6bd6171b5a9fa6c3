//! Linear-sweep disassembly of EVM bytecode.

use std::collections::BTreeSet;
use std::fmt;

use crate::opcodes::{OpcodeSpec, OpcodeTable};

/// How far to scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanMode<'b> {
    /// Decode the whole input.
    Full,
    /// Stop at the earliest of the given metadata start offsets.
    FirstBlock(&'b [usize]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiagnosticKind {
    IncompletePush,
    InvalidOpcode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Diagnostic {
    pub offset: usize,
    pub kind: DiagnosticKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction<'t> {
    pub offset: usize,
    /// Raw opcode byte, kept for bytes the table does not assign.
    pub byte: u8,
    /// `None` for unassigned bytes, which decode as INVALID.
    pub spec: Option<&'t OpcodeSpec>,
    pub operand: Vec<u8>,
    pub incomplete: bool,
}

impl Instruction<'_> {
    pub fn mnemonic(&self) -> &str {
        self.spec.map_or("INVALID", |s| s.mnemonic.as_str())
    }

    pub fn is_push(&self) -> bool {
        self.spec.is_some_and(OpcodeSpec::is_push)
    }

    /// Number of bytes this instruction occupies in the scanned input.
    pub fn size(&self) -> usize {
        1 + self.operand.len()
    }
}

impl fmt::Display for Instruction<'_> {
    /// `<offset-hex>: <MNEMONIC> [<operand-hex>] [INCOMPLETE]`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04x}: {}", self.offset, self.mnemonic())?;
        if self.is_push() {
            write!(f, " 0x{}", hex::encode(&self.operand))?;
        }
        if self.incomplete {
            f.write_str(" INCOMPLETE")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Disassembly<'t> {
    pub instructions: Vec<Instruction<'t>>,
    pub scanned_length: usize,
    pub diagnostics: Vec<Diagnostic>,
}

impl Disassembly<'_> {
    /// Opcode and operand bytes concatenated in order. Equals the first
    /// `scanned_length` bytes of the input.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.scanned_length);
        for ins in &self.instructions {
            out.push(ins.byte);
            out.extend_from_slice(&ins.operand);
        }
        out
    }

    pub fn has_incomplete_push(&self) -> bool {
        self.instructions.last().is_some_and(|i| i.incomplete)
    }
}

/// Decodes `code` from offset 0. Never fails: unassigned bytes become INVALID
/// instructions and a truncated PUSH becomes an incomplete final instruction.
pub fn disassemble<'t>(code: &[u8], mode: ScanMode<'_>, table: &'t OpcodeTable) -> Disassembly<'t> {
    let end = match mode {
        ScanMode::Full => code.len(),
        ScanMode::FirstBlock(starts) => starts
            .iter()
            .copied()
            .min()
            .map_or(code.len(), |s| s.min(code.len())),
    };
    let code = &code[..end];

    let mut out = Disassembly {
        instructions: Vec::new(),
        scanned_length: end,
        diagnostics: Vec::new(),
    };
    let mut pc = 0;
    while pc < code.len() {
        let byte = code[pc];
        let spec = table.get(byte);
        let width = spec.map_or(0, |s| s.operand_width);
        let operand_end = (pc + 1 + width).min(code.len());
        let operand = code[pc + 1..operand_end].to_vec();
        let incomplete = operand.len() < width;
        match spec {
            None => out.diagnostics.push(Diagnostic {
                offset: pc,
                kind: DiagnosticKind::InvalidOpcode,
            }),
            Some(_) if incomplete => out.diagnostics.push(Diagnostic {
                offset: pc,
                kind: DiagnosticKind::IncompletePush,
            }),
            Some(_) => {}
        }
        out.instructions.push(Instruction {
            offset: pc,
            byte,
            spec,
            operand,
            incomplete,
        });
        pc = operand_end;
    }
    out
}

/// Mnemonics of all assigned instructions found by a full linear sweep.
///
/// This over-approximates the operations a contract can execute: data
/// embedded in the code decodes as instructions too.
pub fn ops_present(code: &[u8], table: &OpcodeTable) -> BTreeSet<String> {
    ops_present_in(&disassemble(code, ScanMode::Full, table))
}

pub fn ops_present_in(disassembly: &Disassembly<'_>) -> BTreeSet<String> {
    disassembly
        .instructions
        .iter()
        .filter_map(|i| i.spec.map(|s| s.mnemonic.clone()))
        .collect()
}
