//! Hex text input for bytecodes.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HexError {
    #[error("invalid hex character {ch:?} at offset {offset}")]
    InvalidCharacter { ch: char, offset: usize },
    #[error("odd number of hex digits (input ends at offset {offset})")]
    OddLength { offset: usize },
}

impl HexError {
    /// Character offset into the original text.
    pub fn offset(&self) -> usize {
        match self {
            HexError::InvalidCharacter { offset, .. } | HexError::OddLength { offset } => *offset,
        }
    }
}

/// Decodes hex text. Surrounding whitespace and a `0x` prefix are ignored;
/// error offsets refer to the text as given.
pub fn parse_hex(text: &str) -> Result<Vec<u8>, HexError> {
    let lead = text.len() - text.trim_start().len();
    let trimmed = text.trim();
    let (skip, digits) = match trimmed.strip_prefix("0x").or_else(|| trimmed.strip_prefix("0X")) {
        Some(rest) => (lead + 2, rest),
        None => (lead, trimmed),
    };
    // hex reports odd length before scanning characters; scan first so the
    // first bad character is named.
    if let Some((i, ch)) = digits.char_indices().find(|(_, c)| !c.is_ascii_hexdigit()) {
        return Err(HexError::InvalidCharacter { ch, offset: skip + i });
    }
    hex::decode(digits).map_err(|_| HexError::OddLength {
        offset: skip + digits.len(),
    })
}
