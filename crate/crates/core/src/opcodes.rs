//! EVM opcode table with fork activation blocks.
//!
//! The default table is bundled from `data/opcodes.csv` and covers the
//! instruction set up to the London fork. A replacement table with the same
//! columns can be loaded at runtime, so adding a fork needs no code change.

use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;

use serde::Deserialize;

use crate::error::TableError;

const BUNDLED_TABLE: &str = include_str!("../data/opcodes.csv");

/// Largest immediate carried by any instruction (PUSH32).
pub const MAX_OPERAND_WIDTH: usize = 32;

/// One row of the opcode table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpcodeSpec {
    pub byte_value: u8,
    pub mnemonic: String,
    pub operand_width: usize,
    /// Block at which the operation became available; `None` means genesis.
    pub introduced_at_block: Option<u64>,
}

impl OpcodeSpec {
    pub fn is_push(&self) -> bool {
        self.operand_width > 0
    }

    pub fn is_active_at(&self, block: u64) -> bool {
        self.introduced_at_block.map_or(true, |b| b <= block)
    }
}

#[derive(Debug, Deserialize)]
struct Row {
    byte_value: String,
    mnemonic: String,
    operand_width: usize,
    introduced_at_block: Option<u64>,
}

/// Byte-indexed opcode table.
#[derive(Debug, Clone)]
pub struct OpcodeTable {
    by_byte: Vec<Option<OpcodeSpec>>,
    by_mnemonic: HashMap<String, u8>,
}

impl OpcodeTable {
    /// The table shipped with the crate. Parsed once per process.
    pub fn bundled() -> &'static OpcodeTable {
        static TABLE: OnceLock<OpcodeTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            OpcodeTable::from_csv(BUNDLED_TABLE).expect("bundled opcode table is valid")
        })
    }

    pub fn load(path: &Path) -> Result<OpcodeTable, TableError> {
        let text = std::fs::read_to_string(path).map_err(|source| TableError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_csv(&text)
    }

    /// Parses a table from CSV text. Lines starting with `#` are comments.
    pub fn from_csv(text: &str) -> Result<OpcodeTable, TableError> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());

        let mut by_byte: Vec<Option<OpcodeSpec>> = vec![None; 256];
        let mut by_mnemonic = HashMap::new();
        for (idx, row) in reader.deserialize::<Row>().enumerate() {
            let line = idx + 2;
            let row = row.map_err(|e| TableError::Malformed {
                line,
                message: e.to_string(),
            })?;
            let digits = row
                .byte_value
                .strip_prefix("0x")
                .or_else(|| row.byte_value.strip_prefix("0X"))
                .unwrap_or(&row.byte_value);
            let byte = u8::from_str_radix(digits, 16).map_err(|_| TableError::Malformed {
                line,
                message: format!("bad byte value {:?}", row.byte_value),
            })?;
            let is_push_byte = (0x60..=0x7f).contains(&byte);
            let width_ok = if is_push_byte {
                row.operand_width == usize::from(byte - 0x5f)
            } else {
                row.operand_width == 0
            };
            if !width_ok {
                return Err(TableError::Malformed {
                    line,
                    message: format!(
                        "operand width {} not allowed for byte 0x{byte:02X}",
                        row.operand_width
                    ),
                });
            }
            if row.mnemonic.is_empty() {
                return Err(TableError::Malformed {
                    line,
                    message: "empty mnemonic".into(),
                });
            }
            if by_byte[usize::from(byte)].is_some() {
                return Err(TableError::Duplicate {
                    line,
                    key: format!("0x{byte:02X}"),
                });
            }
            if by_mnemonic.insert(row.mnemonic.clone(), byte).is_some() {
                return Err(TableError::Duplicate {
                    line,
                    key: row.mnemonic,
                });
            }
            by_byte[usize::from(byte)] = Some(OpcodeSpec {
                byte_value: byte,
                mnemonic: row.mnemonic,
                operand_width: row.operand_width,
                introduced_at_block: row.introduced_at_block,
            });
        }
        Ok(OpcodeTable {
            by_byte,
            by_mnemonic,
        })
    }

    pub fn get(&self, byte: u8) -> Option<&OpcodeSpec> {
        self.by_byte[usize::from(byte)].as_ref()
    }

    pub fn by_mnemonic(&self, mnemonic: &str) -> Option<&OpcodeSpec> {
        self.by_mnemonic.get(mnemonic).and_then(|&b| self.get(b))
    }

    /// Whether `mnemonic` is available at `block`.
    pub fn op_is_active(&self, mnemonic: &str, block: u64) -> Result<bool, TableError> {
        self.by_mnemonic(mnemonic)
            .map(|spec| spec.is_active_at(block))
            .ok_or_else(|| TableError::UnknownMnemonic(mnemonic.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &OpcodeSpec> {
        self.by_byte.iter().flatten()
    }

    /// Operations introduced after genesis, in byte order.
    pub fn fork_introduced(&self) -> impl Iterator<Item = &OpcodeSpec> {
        self.iter().filter(|s| s.introduced_at_block.is_some())
    }
}

/// [`OpcodeTable::op_is_active`] on the bundled table.
pub fn op_is_active(mnemonic: &str, block: u64) -> Result<bool, TableError> {
    OpcodeTable::bundled().op_is_active(mnemonic, block)
}
