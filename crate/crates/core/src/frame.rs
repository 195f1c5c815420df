//! The framed envelope used for every sealed, signed, or transported payload.
//!
//! Layout: the magic `CAUTH1`, one version byte `0x01`, then each field as a
//! 4-byte big-endian length followed by its bytes. The field count is fixed
//! by the payload type and trailing bytes are rejected.

use thiserror::Error;

pub const MAGIC: &[u8; 6] = b"CAUTH1";
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = MAGIC.len() + 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("frame magic mismatch")]
    BadMagic,
    #[error("unsupported frame version {0:#04x}")]
    BadVersion(u8),
    #[error("frame truncated in field {0}")]
    Truncated(usize),
    #[error("expected {expected} fields, found {found}")]
    FieldCount { expected: usize, found: usize },
    #[error("{0} trailing bytes after last field")]
    TrailingBytes(usize),
    #[error("field {index} is {len} bytes, expected {expected}")]
    FieldWidth {
        index: usize,
        len: usize,
        expected: usize,
    },
    #[error("field {0} is not valid UTF-8")]
    Utf8(usize),
}

pub fn encode<F: AsRef<[u8]>>(fields: &[F]) -> Vec<u8> {
    let body: usize = fields.iter().map(|f| 4 + f.as_ref().len()).sum();
    let mut out = Vec::with_capacity(HEADER_LEN + body);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    for field in fields {
        let field = field.as_ref();
        let len = u32::try_from(field.len()).expect("field longer than 4 GiB");
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(field);
    }
    out
}

/// True when `bytes` starts with the frame magic and version.
pub fn has_magic(bytes: &[u8]) -> bool {
    bytes.len() >= HEADER_LEN && &bytes[..MAGIC.len()] == MAGIC && bytes[MAGIC.len()] == VERSION
}

/// Decodes a frame that must hold exactly `expected` fields.
pub fn decode(bytes: &[u8], expected: usize) -> Result<Fields<'_>, FrameError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(FrameError::BadMagic);
    }
    match bytes.get(MAGIC.len()) {
        Some(&VERSION) => {}
        Some(&v) => return Err(FrameError::BadVersion(v)),
        None => return Err(FrameError::Truncated(0)),
    }
    let mut rest = &bytes[HEADER_LEN..];
    let mut fields = Vec::with_capacity(expected);
    while !rest.is_empty() {
        let index = fields.len();
        if index == expected {
            return Err(FrameError::TrailingBytes(rest.len()));
        }
        if rest.len() < 4 {
            return Err(FrameError::Truncated(index));
        }
        let len = u32::from_be_bytes(rest[..4].try_into().expect("4 bytes")) as usize;
        rest = &rest[4..];
        if rest.len() < len {
            return Err(FrameError::Truncated(index));
        }
        fields.push(&rest[..len]);
        rest = &rest[len..];
    }
    if fields.len() != expected {
        return Err(FrameError::FieldCount {
            expected,
            found: fields.len(),
        });
    }
    Ok(Fields(fields))
}

/// Borrowed field slices of a decoded frame with typed accessors.
#[derive(Debug, Clone)]
pub struct Fields<'a>(Vec<&'a [u8]>);

impl<'a> Fields<'a> {
    pub fn bytes(&self, index: usize) -> &'a [u8] {
        self.0[index]
    }

    pub fn text(&self, index: usize) -> Result<&'a str, FrameError> {
        std::str::from_utf8(self.0[index]).map_err(|_| FrameError::Utf8(index))
    }

    pub fn fixed<const N: usize>(&self, index: usize) -> Result<[u8; N], FrameError> {
        let field = self.0[index];
        field.try_into().map_err(|_| FrameError::FieldWidth {
            index,
            len: field.len(),
            expected: N,
        })
    }

    pub fn u64(&self, index: usize) -> Result<u64, FrameError> {
        self.fixed::<8>(index).map(u64::from_be_bytes)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}
