//! 16-bit weight codes: IEEE 754 binary16, round to nearest even.

use half::f16;

use crate::{Error, Result};

pub fn quantize_weight16(x: f64) -> Result<u16> {
    if !x.is_finite() {
        return Err(Error::invalid(format!("cannot encode non-finite weight {x}")));
    }
    let h = f16::from_f64(x);
    if h.is_infinite() {
        return Err(Error::invalid(format!("weight {x} exceeds the binary16 range")));
    }
    Ok(h.to_bits())
}

pub fn dequantize_weight16(code: u16) -> f64 {
    f16::from_bits(code).to_f64()
}

/// Rounds `x` to the nearest binary16 value.
pub fn round_weight16(x: f64) -> Result<f64> {
    quantize_weight16(x).map(dequantize_weight16)
}
