//! IEEE 754 binary16 rounding and bit-level encoding.
//!
//! Values are carried as `f64`/`f32` throughout the crate; this module only
//! decides which reals are binary16-representable and how they are packed
//! into 16-bit patterns for storage.

use crate::error::{Error, Result};

/// Largest finite binary16 value.
pub const HALF_MAX: f64 = 65504.0;

const MIN_NORMAL_EXP: i32 = -14;
const FRACTION_BITS: i32 = 10;

fn exponent_of(x: f64) -> i32 {
    let biased = ((x.to_bits() >> 52) & 0x7ff) as i32;
    // f64 subnormals sit far below the binary16 subnormal range.
    if biased == 0 {
        -1023
    } else {
        biased - 1023
    }
}

/// Rounds `x` to the nearest binary16 value (ties to even) and returns it as
/// an exact `f64`.
///
/// Fails with [`Error::Overflow`] when `|x| > 65504` or `x` is not finite.
pub fn round_to_half(x: f64) -> Result<f64> {
    if !x.is_finite() || x.abs() > HALF_MAX {
        return Err(Error::Overflow {
            value: x,
            target: "binary16",
        });
    }
    if x == 0.0 {
        return Ok(x);
    }
    let quantum_exp = exponent_of(x).max(MIN_NORMAL_EXP) - FRACTION_BITS;
    let quantum = 2f64.powi(quantum_exp);
    // Division and multiplication by a power of two are exact here.
    let steps = (x / quantum).round_ties_even();
    Ok(steps * quantum)
}

/// Returns true if `x` is exactly a finite binary16 value.
pub fn is_half_representable(x: f64) -> bool {
    matches!(round_to_half(x), Ok(r) if r == x)
}

/// Packs a binary16-representable value into its 16-bit pattern.
///
/// The value must already be representable (see [`round_to_half`]).
pub fn half_bits(x: f64) -> u16 {
    debug_assert!(is_half_representable(x), "{x} is not binary16");
    let sign = if x.is_sign_negative() { 0x8000u16 } else { 0 };
    let mag = x.abs();
    if mag == 0.0 {
        return sign;
    }
    let e = exponent_of(mag);
    if e < MIN_NORMAL_EXP {
        let mant = (mag / 2f64.powi(MIN_NORMAL_EXP - FRACTION_BITS)) as u16;
        sign | mant
    } else {
        let exp_field = (e + 15) as u16;
        let mant = ((mag / 2f64.powi(e) - 1.0) * 1024.0) as u16;
        sign | (exp_field << 10) | mant
    }
}

/// Decodes a 16-bit pattern. Infinities and NaNs decode to their `f32`
/// counterparts; callers validating stored data must reject them.
pub fn half_from_bits(bits: u16) -> f32 {
    let sign = if bits & 0x8000 != 0 { -1.0f32 } else { 1.0 };
    let exp_field = ((bits >> 10) & 0x1f) as i32;
    let mant = (bits & 0x3ff) as f32;
    match exp_field {
        0 => sign * mant * 2f32.powi(MIN_NORMAL_EXP - FRACTION_BITS),
        0x1f if mant == 0.0 => sign * f32::INFINITY,
        0x1f => f32::NAN,
        _ => sign * (1.0 + mant / 1024.0) * 2f32.powi(exp_field - 15),
    }
}

/// Rounds `x` to `f32` (ties to even), failing if the result is not finite.
pub fn round_to_single(x: f64) -> Result<f64> {
    let r = x as f32;
    if !r.is_finite() {
        return Err(Error::Overflow {
            value: x,
            target: "binary32",
        });
    }
    Ok(r as f64)
}
