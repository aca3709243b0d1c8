//! Little-endian byte writer and position-tracking reader shared by the
//! entry, snapshot and latent file formats.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecodeError {
    #[error("truncated at byte {pos}: needed {needed} more bytes")]
    Truncated { pos: usize, needed: usize },
    #[error("bad magic at byte {pos}")]
    BadMagic { pos: usize },
    #[error("unsupported version {version} at byte {pos}")]
    Version { pos: usize, version: u16 },
    #[error("checksum mismatch at byte {pos}: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum {
        pos: usize,
        stored: u32,
        computed: u32,
    },
    #[error("invalid data at byte {pos}: {msg}")]
    Invalid { pos: usize, msg: String },
}

#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            buf: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn f32s(&mut self, values: &[f32]) {
        self.buf.reserve(values.len() * 4);
        for v in values {
            self.bytes(&v.to_le_bytes());
        }
    }

    /// CRC32 of everything written since byte `from`.
    pub fn crc_since(&self, from: usize) -> u32 {
        crc32fast::hash(&self.buf[from..])
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn pos(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.remaining() < n {
            return Err(DecodeError::Truncated {
                pos: self.pos,
                needed: n - self.remaining(),
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f32>, DecodeError> {
        let raw = self.take(
            n.checked_mul(4)
                .ok_or_else(|| self.invalid("length overflow"))?,
        )?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    /// Reads a stored CRC32 and checks it against the bytes `from..pos`.
    pub fn expect_crc(&mut self, from: usize) -> Result<(), DecodeError> {
        let computed = crc32fast::hash(&self.buf[from..self.pos]);
        let pos = self.pos;
        let stored = self.u32()?;
        if stored != computed {
            return Err(DecodeError::Checksum {
                pos,
                stored,
                computed,
            });
        }
        Ok(())
    }

    pub fn invalid(&self, msg: impl Into<String>) -> DecodeError {
        DecodeError::Invalid {
            pos: self.pos,
            msg: msg.into(),
        }
    }
}
