//! MSB-first fixed-width bit packing.

use crate::{Error, Result};

/// Accumulates fixed-width fields most-significant bit first.
#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    acc: u64,
    pending: u32,
    written: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        BitWriter::default()
    }

    /// Appends the low `width` bits of `value`; `width` may be 0.
    pub fn write(&mut self, value: u32, width: u32) {
        debug_assert!(width <= 32);
        debug_assert!(width == 32 || u64::from(value) < 1 << width);
        if width == 0 {
            return;
        }
        self.acc = (self.acc << width) | u64::from(value);
        self.pending += width;
        self.written += u64::from(width);
        while self.pending >= 8 {
            self.pending -= 8;
            self.bytes.push((self.acc >> self.pending) as u8);
        }
        self.acc &= (1 << self.pending) - 1;
    }

    /// Number of bits written so far, excluding padding.
    pub fn bits_written(&self) -> u64 {
        self.written
    }

    /// Zero-pads to a byte boundary and returns the bytes.
    pub fn finish(mut self) -> Vec<u8> {
        if self.pending > 0 {
            self.bytes.push((self.acc << (8 - self.pending)) as u8);
        }
        self.bytes
    }
}

/// Reads fields written by [`BitWriter`].
#[derive(Debug)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    bit: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        BitReader { bytes, bit: 0 }
    }

    pub fn remaining_bits(&self) -> u64 {
        self.bytes.len() as u64 * 8 - self.bit
    }

    pub fn read(&mut self, width: u32) -> Result<u32> {
        if u64::from(width) > self.remaining_bits() {
            return Err(Error::corrupt("bit field runs past the end of the stream"));
        }
        let mut value = 0u64;
        for _ in 0..width {
            let byte = self.bytes[(self.bit / 8) as usize];
            let bit = (byte >> (7 - self.bit % 8)) & 1;
            value = (value << 1) | u64::from(bit);
            self.bit += 1;
        }
        Ok(value as u32)
    }

    /// Bytes consumed, counting a partially read byte as consumed.
    pub fn bytes_consumed(&self) -> usize {
        self.bit.div_ceil(8) as usize
    }
}

fn check_width(width: u32) -> Result<()> {
    if !(1..=32).contains(&width) {
        return Err(Error::invalid(format!("bit width {width} outside 1..=32")));
    }
    Ok(())
}

/// Packs `values` at `width` bits each, MSB first, zero-padded to a byte.
pub fn pack_uints(values: &[u32], width: u32) -> Result<Vec<u8>> {
    check_width(width)?;
    let mut w = BitWriter::new();
    for &v in values {
        if width < 32 && v >> width != 0 {
            return Err(Error::invalid(format!("value {v} does not fit in {width} bits")));
        }
        w.write(v, width);
    }
    Ok(w.finish())
}

pub fn unpack_uints(bytes: &[u8], width: u32, count: usize) -> Result<Vec<u32>> {
    check_width(width)?;
    let needed = (count as u64 * u64::from(width)).div_ceil(8);
    if (bytes.len() as u64) < needed {
        return Err(Error::corrupt(format!("{count} fields of {width} bits need {needed} bytes, got {}", bytes.len())));
    }
    let mut r = BitReader::new(bytes);
    (0..count).map(|_| r.read(width)).collect()
}
