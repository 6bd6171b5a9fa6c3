//! Minimal CBOR reader for compiler metadata maps.
//!
//! Only definite-length items are accepted. Solidity never emits
//! indefinite-length encodings, and rejecting them keeps the detector strict.

const MAX_DEPTH: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Uint(u64),
    NegInt(u64),
    Bytes(Vec<u8>),
    Text(String),
    Array(Vec<Value>),
    Map(Vec<(Value, Value)>),
    Bool(bool),
    Null,
    Simple(u8),
    /// Tagged item; the tag number is kept, the content decoded.
    Tagged(u64, Box<Value>),
    /// Half, single or double precision float, raw bits.
    Float(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeError {
    Truncated,
    Unsupported(u8),
    TooDeep,
    TrailingBytes,
    InvalidUtf8,
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).ok_or(DecodeError::Truncated)?;
        let slice = self.data.get(self.pos..end).ok_or(DecodeError::Truncated)?;
        self.pos = end;
        Ok(slice)
    }

    fn byte(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn argument(&mut self, info: u8, initial: u8) -> Result<u64, DecodeError> {
        Ok(match info {
            0..=23 => u64::from(info),
            24 => u64::from(self.byte()?),
            25 => u64::from(u16::from_be_bytes(self.take(2)?.try_into().unwrap())),
            26 => u64::from(u32::from_be_bytes(self.take(4)?.try_into().unwrap())),
            27 => u64::from_be_bytes(self.take(8)?.try_into().unwrap()),
            _ => return Err(DecodeError::Unsupported(initial)),
        })
    }

    fn length(&mut self, info: u8, initial: u8) -> Result<usize, DecodeError> {
        let n = self.argument(info, initial)?;
        // Every element needs at least one byte, so lengths beyond the
        // remaining input are truncated data, not huge allocations.
        let n = usize::try_from(n).map_err(|_| DecodeError::Truncated)?;
        if n > self.data.len() - self.pos {
            return Err(DecodeError::Truncated);
        }
        Ok(n)
    }

    fn item(&mut self, depth: usize) -> Result<Value, DecodeError> {
        if depth > MAX_DEPTH {
            return Err(DecodeError::TooDeep);
        }
        let initial = self.byte()?;
        let major = initial >> 5;
        let info = initial & 0x1f;
        Ok(match major {
            0 => Value::Uint(self.argument(info, initial)?),
            1 => Value::NegInt(self.argument(info, initial)?),
            2 => {
                let n = self.length(info, initial)?;
                Value::Bytes(self.take(n)?.to_vec())
            }
            3 => {
                let n = self.length(info, initial)?;
                let raw = self.take(n)?;
                Value::Text(
                    std::str::from_utf8(raw)
                        .map_err(|_| DecodeError::InvalidUtf8)?
                        .to_string(),
                )
            }
            4 => {
                let n = self.length(info, initial)?;
                let mut items = Vec::with_capacity(n);
                for _ in 0..n {
                    items.push(self.item(depth + 1)?);
                }
                Value::Array(items)
            }
            5 => {
                let n = self.length(info, initial)?;
                let mut entries = Vec::with_capacity(n);
                for _ in 0..n {
                    let k = self.item(depth + 1)?;
                    let v = self.item(depth + 1)?;
                    entries.push((k, v));
                }
                Value::Map(entries)
            }
            6 => {
                let tag = self.argument(info, initial)?;
                Value::Tagged(tag, Box::new(self.item(depth + 1)?))
            }
            _ => match info {
                20 => Value::Bool(false),
                21 => Value::Bool(true),
                22 => Value::Null,
                0..=19 => Value::Simple(info),
                24 => Value::Simple(self.byte()?),
                25..=27 => Value::Float(self.argument(info, initial)?),
                _ => return Err(DecodeError::Unsupported(initial)),
            },
        })
    }
}

/// Decodes `data` as exactly one CBOR item with nothing left over.
pub fn decode_exact(data: &[u8]) -> Result<Value, DecodeError> {
    let mut r = Reader { data, pos: 0 };
    let value = r.item(0)?;
    if r.pos != data.len() {
        return Err(DecodeError::TrailingBytes);
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_small_map() {
        let mut data = vec![0xa2, 0x64];
        data.extend_from_slice(b"solc");
        data.extend_from_slice(&[0x43, 0, 8, 7, 0x6c]);
        data.extend_from_slice(b"experimental");
        data.push(0xf5);
        let Value::Map(entries) = decode_exact(&data).unwrap() else {
            panic!("not a map");
        };
        assert_eq!(entries[0].0, Value::Text("solc".into()));
        assert_eq!(entries[0].1, Value::Bytes(vec![0, 8, 7]));
        assert_eq!(entries[1].1, Value::Bool(true));
    }

    #[test]
    fn rejects_trailing_and_truncated() {
        assert_eq!(decode_exact(&[0x01, 0x02]), Err(DecodeError::TrailingBytes));
        assert_eq!(decode_exact(&[0x58, 0x20, 0x00]), Err(DecodeError::Truncated));
        assert_eq!(decode_exact(&[]), Err(DecodeError::Truncated));
        assert_eq!(decode_exact(&[0xbf]), Err(DecodeError::Unsupported(0xbf)));
    }

    #[test]
    fn huge_declared_length_is_truncation() {
        assert_eq!(
            decode_exact(&[0x9b, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff]),
            Err(DecodeError::Truncated)
        );
    }

    #[test]
    fn depth_is_bounded() {
        let nested = vec![0x81; 64];
        assert_eq!(decode_exact(&nested), Err(DecodeError::TooDeep));
    }
}
