//! Saturating two's-complement fixed point.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

/// `Q<INT>.<FRAC>`: `INT` integer bits and `FRAC` fraction bits plus a sign
/// bit, held in an `i32`. Every operation saturates at the format limits.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fixed<const INT: u32, const FRAC: u32> {
    raw: i32,
}

pub type Q8_8 = Fixed<8, 8>;
pub type Q1_15 = Fixed<1, 15>;
pub type Q2_29 = Fixed<2, 29>;

impl<const INT: u32, const FRAC: u32> Fixed<INT, FRAC> {
    const WIDTH_OK: () = assert!(INT + FRAC <= 31, "format wider than 32 bits");

    pub const MAX_RAW: i32 = ((1i64 << (INT + FRAC)) - 1) as i32;
    pub const MIN_RAW: i32 = (-(1i64 << (INT + FRAC))) as i32;
    pub const MAX: Self = Self { raw: Self::MAX_RAW };
    pub const MIN: Self = Self { raw: Self::MIN_RAW };
    pub const ZERO: Self = Self { raw: 0 };
    /// Smallest positive step, `2^-FRAC`.
    pub const EPSILON: Self = Self { raw: 1 };

    #[inline]
    pub fn from_raw(raw: i64) -> Self {
        #[allow(clippy::let_unit_value)]
        let () = Self::WIDTH_OK;
        Self {
            raw: raw.clamp(Self::MIN_RAW as i64, Self::MAX_RAW as i64) as i32,
        }
    }

    #[inline]
    pub const fn raw(self) -> i32 {
        self.raw
    }

    pub fn one() -> Self {
        Self::from_raw(1i64 << FRAC)
    }

    pub fn from_int(v: i64) -> Self {
        Self::from_raw(v.saturating_mul(1i64 << FRAC))
    }

    /// Round-to-nearest; NaN maps to zero.
    pub fn from_f64(v: f64) -> Self {
        if v.is_nan() {
            return Self::ZERO;
        }
        let scaled = (v * (1u64 << FRAC) as f64).round();
        // float-to-int casts saturate, then the format clamp applies
        Self::from_raw(scaled as i64)
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        f64::from(self.raw) / (1u64 << FRAC) as f64
    }

    /// Nearest integer, halves away from zero.
    pub fn round_to_int(self) -> i64 {
        round_shift(i64::from(self.raw), FRAC)
    }

    pub fn is_saturated(self) -> bool {
        self.raw == Self::MAX_RAW || self.raw == Self::MIN_RAW
    }

    #[inline]
    pub fn saturating_add(self, rhs: Self) -> Self {
        Self::from_raw(i64::from(self.raw) + i64::from(rhs.raw))
    }

    #[inline]
    pub fn saturating_sub(self, rhs: Self) -> Self {
        Self::from_raw(i64::from(self.raw) - i64::from(rhs.raw))
    }

    #[inline]
    pub fn saturating_mul(self, rhs: Self) -> Self {
        Self::from_raw(round_shift(i64::from(self.raw) * i64::from(rhs.raw), FRAC))
    }

    /// Re-quantizes into another format, rounding when fraction bits drop.
    pub fn convert<const I2: u32, const F2: u32>(self) -> Fixed<I2, F2> {
        let raw = i64::from(self.raw);
        if F2 >= FRAC {
            Fixed::from_raw(raw << (F2 - FRAC))
        } else {
            Fixed::from_raw(round_shift(raw, FRAC - F2))
        }
    }
}

/// `v / 2^shift` rounded to nearest, halves away from zero.
#[inline]
pub fn round_shift(v: i64, shift: u32) -> i64 {
    if shift == 0 {
        return v;
    }
    let half = 1i64 << (shift - 1);
    if v >= 0 {
        (v + half) >> shift
    } else {
        -((-v + half) >> shift)
    }
}

/// Integer division rounded to nearest, halves away from zero. `d > 0`.
#[inline]
pub fn div_round(n: i64, d: i64) -> i64 {
    debug_assert!(d > 0);
    if n >= 0 {
        (n + d / 2) / d
    } else {
        -((-n + d / 2) / d)
    }
}

/// Floor of the square root.
pub fn isqrt(v: u64) -> u64 {
    if v < 2 {
        return v;
    }
    let mut x = (v as f64).sqrt() as u64;
    // correct the float estimate to the exact floor
    while x.checked_mul(x).is_none_or(|sq| sq > v) {
        x -= 1;
    }
    while (x + 1).checked_mul(x + 1).is_some_and(|sq| sq <= v) {
        x += 1;
    }
    x
}

impl<const INT: u32, const FRAC: u32> Add for Fixed<INT, FRAC> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.saturating_add(rhs)
    }
}

impl<const INT: u32, const FRAC: u32> Sub for Fixed<INT, FRAC> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.saturating_sub(rhs)
    }
}

impl<const INT: u32, const FRAC: u32> Mul for Fixed<INT, FRAC> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.saturating_mul(rhs)
    }
}

impl<const INT: u32, const FRAC: u32> Neg for Fixed<INT, FRAC> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::from_raw(-i64::from(self.raw))
    }
}

impl<const INT: u32, const FRAC: u32> fmt::Debug for Fixed<INT, FRAC> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{INT}.{FRAC}({})", self.to_f64())
    }
}

impl<const INT: u32, const FRAC: u32> fmt::Display for Fixed<INT, FRAC> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.to_f64(), f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q8_8_range() {
        assert_eq!(Q8_8::MAX.to_f64(), 256.0 - 1.0 / 256.0);
        assert_eq!(Q8_8::MIN.to_f64(), -256.0);
        assert_eq!(Q8_8::from_f64(1e9), Q8_8::MAX);
        assert_eq!(Q8_8::from_f64(-1e9), Q8_8::MIN);
        assert_eq!(Q8_8::from_f64(f64::NAN), Q8_8::ZERO);
    }

    #[test]
    fn saturates_instead_of_wrapping() {
        let big = Q8_8::from_int(200);
        assert_eq!(big + big, Q8_8::MAX);
        assert_eq!(-big - big, Q8_8::MIN);
        assert_eq!(big * big, Q8_8::MAX);
        assert_eq!(-Q8_8::MIN, Q8_8::MAX);
    }

    #[test]
    fn multiply_rounds() {
        let half = Q8_8::from_f64(0.5);
        let eps = Q8_8::EPSILON;
        // 0.5 * 2^-8 = 2^-9 rounds away from zero to 2^-8
        assert_eq!(half * eps, eps);
        assert_eq!(Q8_8::from_f64(1.5) * Q8_8::from_f64(2.0), Q8_8::from_f64(3.0));
    }

    #[test]
    fn conversion_between_formats() {
        let x = Q1_15::from_f64(0.7);
        let y: Q2_29 = x.convert();
        assert_eq!(y.to_f64(), x.to_f64());
        let back: Q1_15 = y.convert();
        assert_eq!(back, x);
        let wide = Q8_8::from_int(100);
        assert_eq!(wide.convert::<1, 15>(), Q1_15::MAX);
    }

    #[test]
    fn rounding_helpers() {
        assert_eq!(round_shift(3, 1), 2);
        assert_eq!(round_shift(-3, 1), -2);
        assert_eq!(round_shift(5, 2), 1);
        assert_eq!(div_round(7, 2), 4);
        assert_eq!(div_round(-7, 2), -4);
        assert_eq!(div_round(6, 4), 2);
        for v in [0u64, 1, 2, 3, 4, 15, 16, 17, 1 << 40, u64::MAX] {
            let r = isqrt(v);
            assert!(r * r <= v);
            assert!((r + 1).checked_mul(r + 1).is_none_or(|s| s > v));
        }
    }
}
