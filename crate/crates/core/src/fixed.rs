//! Q8.8 fixed-point values and the wide accumulator used by every dot product.
//!
//! All convolution and graph products are accumulated exactly in a wide
//! integer and rounded once, at write-out, with round-to-nearest-even followed
//! by saturation. Because the accumulation is exact integer arithmetic, any
//! reordering of a sum yields the identical Q8.8 result.

use std::fmt;

/// 16-bit signed fixed point with 8 integer and 8 fractional bits.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FixedQ8p8(i16);

impl FixedQ8p8 {
    pub const FRAC_BITS: u32 = 8;
    pub const SCALE: f64 = 256.0;
    pub const ZERO: Self = Self(0);
    pub const ONE: Self = Self(256);
    pub const MIN: Self = Self(i16::MIN);
    pub const MAX: Self = Self(i16::MAX);

    pub const fn from_raw(raw: i16) -> Self {
        Self(raw)
    }

    pub const fn raw(self) -> i16 {
        self.0
    }

    /// Nearest representable value, ties to even, saturating at the range
    /// bounds. NaN maps to zero.
    pub fn quantize(x: f64) -> Self {
        if x.is_nan() {
            return Self::ZERO;
        }
        let scaled = (x * Self::SCALE).round_ties_even();
        Self(scaled.clamp(i16::MIN as f64, i16::MAX as f64) as i16)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / Self::SCALE
    }

    pub const fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn relu(self) -> Self {
        Self(self.0.max(0))
    }

    pub fn saturating_add(self, rhs: Self) -> Self {
        Self(self.0.saturating_add(rhs.0))
    }

    /// Product re-quantized to Q8.8.
    pub fn mul_q(self, rhs: Self) -> Self {
        requantize(self.0 as i64 * rhs.0 as i64, 2 * Self::FRAC_BITS)
    }
}

impl fmt::Debug for FixedQ8p8 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}q", self.to_f64())
    }
}

impl fmt::Display for FixedQ8p8 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.to_f64(), f)
    }
}

/// Width of the modelled DSP accumulator.
pub const ACC_BITS: u32 = 48;
const ACC_MAX: i64 = (1 << (ACC_BITS - 1)) - 1;
const ACC_MIN: i64 = -(1 << (ACC_BITS - 1));

/// Rounds a fixed-point integer carrying `frac_bits` fractional bits to Q8.8:
/// clamp to the 48-bit accumulator, arithmetic shift with ties-to-even, then
/// saturate to 16 bits.
pub fn requantize(value: i64, frac_bits: u32) -> FixedQ8p8 {
    let value = value.clamp(ACC_MIN, ACC_MAX);
    let shift = frac_bits.saturating_sub(FixedQ8p8::FRAC_BITS);
    let value = if frac_bits < FixedQ8p8::FRAC_BITS {
        value << (FixedQ8p8::FRAC_BITS - frac_bits)
    } else {
        value
    };
    let rounded = if shift == 0 {
        value
    } else {
        let floor = value >> shift;
        let rem = value - (floor << shift);
        let half = 1i64 << (shift - 1);
        if rem > half || (rem == half && floor & 1 == 1) {
            floor + 1
        } else {
            floor
        }
    };
    FixedQ8p8(rounded.clamp(i16::MIN as i64, i16::MAX as i64) as i16)
}

/// Exact sum of fixed-point products with a fixed number of fractional bits.
///
/// Every product of Q8.8 operands is an exact integer, so `Accumulator`
/// never rounds until [`Accumulator::write_out`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Accumulator {
    sum: i64,
}

impl Accumulator {
    pub const fn new() -> Self {
        Self { sum: 0 }
    }

    /// Adds `a * b` (16 fractional bits).
    #[inline]
    pub fn mac2(&mut self, a: FixedQ8p8, b: FixedQ8p8) {
        self.sum = self.sum.wrapping_add(a.0 as i64 * b.0 as i64);
    }

    /// Adds `a * b * c` (24 fractional bits).
    #[inline]
    pub fn mac3(&mut self, a: FixedQ8p8, b: FixedQ8p8, c: FixedQ8p8) {
        self.sum = self.sum.wrapping_add(a.0 as i64 * b.0 as i64 * c.0 as i64);
    }

    #[inline]
    pub fn add_raw(&mut self, raw: i64) {
        self.sum = self.sum.wrapping_add(raw);
    }

    pub const fn raw(self) -> i64 {
        self.sum
    }

    pub fn write_out(self, frac_bits: u32) -> FixedQ8p8 {
        requantize(self.sum, frac_bits)
    }
}
