//! Big-endian bit packing.

use crate::error::DecodeError;

#[derive(Debug, Default)]
pub(crate) struct BitWriter {
    bytes: Vec<u8>,
    /// Bits used in the last byte; 0 means the last byte is full.
    used: u32,
}

impl BitWriter {
    /// Appends the low `bits` bits of `value`, most significant first.
    pub(crate) fn put(&mut self, value: u32, bits: u32) {
        debug_assert!(bits <= 32 && (bits == 32 || value >> bits == 0));
        for i in (0..bits).rev() {
            if self.used == 0 {
                self.bytes.push(0);
            }
            let bit = ((value >> i) & 1) as u8;
            *self.bytes.last_mut().unwrap() |= bit << (7 - self.used);
            self.used = (self.used + 1) % 8;
        }
    }

    pub(crate) fn bit_len(&self) -> usize {
        self.bytes.len() * 8 - if self.used == 0 { 0 } else { 8 - self.used as usize }
    }

    pub(crate) fn finish(self) -> Vec<u8> {
        self.bytes
    }
}

pub(crate) struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn get(&mut self, bits: u32, field: impl FnOnce() -> String) -> Result<u32, DecodeError> {
        if self.pos + bits as usize > self.bytes.len() * 8 {
            return Err(DecodeError::Truncated { field: field() });
        }
        let mut v = 0u32;
        for _ in 0..bits {
            let bit = (self.bytes[self.pos / 8] >> (7 - self.pos % 8)) & 1;
            v = (v << 1) | u32::from(bit);
            self.pos += 1;
        }
        Ok(v)
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }
}
