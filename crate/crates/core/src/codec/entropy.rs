//! Bit-level IO and exponential-Golomb coding for the block syntax.

use crate::error::{Error, Result};

/// Destination of syntax elements. One implementation writes bits, the
/// other only counts them for rate estimation, so the encoder and the
/// cost model share a single syntax walk.
pub trait BitSink {
    fn put_bit(&mut self, bit: u32);
    fn put_bits(&mut self, value: u64, n: u32);

    /// Unsigned exponential-Golomb code: value+1 in binary, prefixed by
    /// one fewer zero bits than its length. ue(0) = "1", ue(1) = "010",
    /// ue(2) = "011".
    fn put_ue(&mut self, value: u64) {
        let x = value + 1;
        let len = 64 - x.leading_zeros();
        self.put_bits(0, len - 1);
        self.put_bits(x, len);
    }

    /// Signed mapping: positive v to ue(2v-1), non-positive v to ue(-2v).
    fn put_se(&mut self, value: i64) {
        let code = if value > 0 {
            (value as u64) * 2 - 1
        } else {
            (-value as u64) * 2
        };
        self.put_ue(code);
    }
}

/// Bit length of `ue(value)`.
pub fn ue_len(value: u64) -> u64 {
    let x = value + 1;
    let len = 64 - x.leading_zeros() as u64;
    2 * len - 1
}

/// Bit length of `se(value)`.
pub fn se_len(value: i64) -> u64 {
    let code = if value > 0 {
        (value as u64) * 2 - 1
    } else {
        (-value as u64) * 2
    };
    ue_len(code)
}

/// MSB-first bit writer.
#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    cur: u8,
    filled: u32,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Byte-aligns with zero bits and returns the buffer.
    pub fn finish(mut self) -> Vec<u8> {
        if self.filled > 0 {
            self.bytes.push(self.cur << (8 - self.filled));
        }
        self.bytes
    }

    pub fn bit_len(&self) -> u64 {
        self.bytes.len() as u64 * 8 + self.filled as u64
    }
}

impl BitSink for BitWriter {
    fn put_bit(&mut self, bit: u32) {
        self.cur = (self.cur << 1) | (bit & 1) as u8;
        self.filled += 1;
        if self.filled == 8 {
            self.bytes.push(self.cur);
            self.cur = 0;
            self.filled = 0;
        }
    }

    fn put_bits(&mut self, value: u64, n: u32) {
        debug_assert!(n <= 64);
        for i in (0..n).rev() {
            self.put_bit(((value >> i) & 1) as u32);
        }
    }
}

/// Counts bits without storing them.
#[derive(Debug, Default)]
pub struct BitCounter {
    pub bits: u64,
}

impl BitSink for BitCounter {
    fn put_bit(&mut self, _bit: u32) {
        self.bits += 1;
    }

    fn put_bits(&mut self, _value: u64, n: u32) {
        self.bits += n as u64;
    }
}

/// MSB-first bit reader over a byte slice.
pub struct BitReader<'a> {
    data: &'a [u8],
    /// Bit cursor from the start of `data`.
    pos: u64,
    /// Byte offset of `data` within the surrounding stream, for errors.
    base_offset: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(data: &'a [u8], base_offset: u64) -> Self {
        BitReader {
            data,
            pos: 0,
            base_offset,
        }
    }

    pub fn byte_offset(&self) -> u64 {
        self.base_offset + self.pos / 8
    }

    pub fn get_bit(&mut self) -> Result<u32> {
        let byte = (self.pos / 8) as usize;
        if byte >= self.data.len() {
            return Err(Error::decode(self.byte_offset(), "bitstream truncated"));
        }
        let shift = 7 - (self.pos % 8) as u32;
        self.pos += 1;
        Ok(((self.data[byte] >> shift) & 1) as u32)
    }

    pub fn get_bits(&mut self, n: u32) -> Result<u64> {
        let mut v = 0u64;
        for _ in 0..n {
            v = (v << 1) | self.get_bit()? as u64;
        }
        Ok(v)
    }

    pub fn get_ue(&mut self) -> Result<u64> {
        let mut zeros = 0u32;
        while self.get_bit()? == 0 {
            zeros += 1;
            if zeros > 63 {
                return Err(Error::decode(
                    self.byte_offset(),
                    "malformed exp-Golomb code",
                ));
            }
        }
        let rest = self.get_bits(zeros)?;
        Ok(((1u64 << zeros) | rest) - 1)
    }

    pub fn get_se(&mut self) -> Result<i64> {
        let code = self.get_ue()?;
        if code % 2 == 1 {
            Ok((code / 2 + 1) as i64)
        } else {
            Ok(-((code / 2) as i64))
        }
    }
}
