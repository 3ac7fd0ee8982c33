//! Exact-arithmetic reference for the dot product unit.
//!
//! Nothing here touches `bitmath` or `pipeline`: values are rebuilt from the
//! decoded fields with arbitrary-precision integers, summed without any
//! intermediate rounding, and rounded once.

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::formats::{DecodedScalar, FpClass, ScalarFormat};

/// `mantissa * 2^exponent`, exact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactFixedPoint {
    pub mantissa: BigInt,
    pub exponent: i64,
}

impl ExactFixedPoint {
    pub fn zero() -> Self {
        ExactFixedPoint { mantissa: BigInt::zero(), exponent: 0 }
    }

    pub fn new(mantissa: BigInt, exponent: i64) -> Self {
        ExactFixedPoint { mantissa, exponent }.normalized()
    }

    /// Strips trailing zero bits so equal values compare equal.
    fn normalized(mut self) -> Self {
        if self.mantissa.is_zero() {
            return Self::zero();
        }
        let tz = self.mantissa.trailing_zeros().unwrap_or(0);
        if tz > 0 {
            self.mantissa >>= tz;
            self.exponent += tz as i64;
        }
        self
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.is_zero()
    }

    pub fn add(&self, other: &Self) -> Self {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        let base = self.exponent.min(other.exponent);
        let lhs = &self.mantissa << (self.exponent - base) as usize;
        let rhs = &other.mantissa << (other.exponent - base) as usize;
        Self::new(lhs + rhs, base)
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self::new(&self.mantissa * &other.mantissa, self.exponent + other.exponent)
    }

    /// Exact value of a finite decoded float (zero when flushed).
    pub fn from_float(value: &DecodedScalar, fmt: ScalarFormat, flush_subnormal: bool) -> Self {
        match value.class {
            FpClass::Zero => Self::zero(),
            FpClass::Subnormal if flush_subnormal => Self::zero(),
            FpClass::Subnormal | FpClass::Normal => {
                let unbiased = value.effective_exp() as i64 - fmt.bias as i64 - fmt.man_bits as i64;
                let mag = BigInt::from(value.significand);
                Self::new(if value.negative { -mag } else { mag }, unbiased)
            }
            FpClass::Inf | FpClass::NaN => panic!("non-finite value has no exact form"),
        }
    }

    pub fn to_f64(&self) -> f64 {
        let m = self.mantissa.to_f64().unwrap_or(f64::NAN);
        m * 2f64.powi(self.exponent.clamp(-2000, 2000) as i32)
    }

    /// Round-to-nearest-even into FP32. Zero gives +0; magnitudes that round
    /// below the smallest normal flush to signed zero; overflow gives
    /// infinity.
    pub fn round_to_fp32(&self) -> u32 {
        if self.is_zero() {
            return 0;
        }
        let sign = if self.mantissa.sign() == Sign::Minus { 0x8000_0000u32 } else { 0 };
        let mag = self.mantissa.abs();
        let len = mag.bits() as i64;
        let mut exp = len - 1 + self.exponent;

        let mut kept = if len > 24 {
            let drop = (len - 24) as usize;
            let (q, r) = mag.div_rem(&(BigInt::one() << drop));
            let half = BigInt::one() << (drop - 1);
            let up = match r.cmp(&half) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Equal => q.is_odd(),
                std::cmp::Ordering::Less => false,
            };
            if up { q + 1 } else { q }
        } else {
            mag << (24 - len) as usize
        };
        if kept.bits() > 24 {
            kept >>= 1;
            exp += 1;
        }

        if exp > 127 {
            sign | 0x7F80_0000
        } else if exp < -126 {
            sign
        } else {
            let frac = kept.to_u32().expect("24-bit significand") & 0x7F_FFFF;
            sign | (((exp + 127) as u32) << 23) | frac
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleResult {
    /// `None` when a special operand decided the result.
    pub exact: Option<ExactFixedPoint>,
    pub rne_fp32: u32,
}

const FP32_INF: u32 = 0x7F80_0000;

/// Exact `sum(a[i] * b[i]) + c`, rounded once to FP32.
///
/// Special operands follow the same table as the datapath: any NaN, an
/// infinity times zero, or opposing infinities give the canonical NaN;
/// otherwise any infinity wins with its sign. With `flush_subnormal`,
/// subnormal inputs (including `c`) count as zero.
pub fn exact_dot_fp(
    a: &[DecodedScalar],
    b: &[DecodedScalar],
    c: &DecodedScalar,
    mul_format: ScalarFormat,
    flush_subnormal: bool,
) -> OracleResult {
    assert_eq!(a.len(), b.len(), "operand length mismatch");
    let is_zero = |v: &DecodedScalar| {
        v.class == FpClass::Zero || (flush_subnormal && v.class == FpClass::Subnormal)
    };

    let any_nan = a.iter().chain(b).chain(std::iter::once(c)).any(DecodedScalar::is_nan);
    let mut pos_inf = false;
    let mut neg_inf = false;
    let mut invalid = any_nan;
    for (x, y) in a.iter().zip(b) {
        if x.is_inf() || y.is_inf() {
            if is_zero(x) || is_zero(y) {
                invalid = true;
            } else if x.negative != y.negative {
                neg_inf = true;
            } else {
                pos_inf = true;
            }
        }
    }
    if c.is_inf() {
        if c.negative {
            neg_inf = true;
        } else {
            pos_inf = true;
        }
    }
    if invalid || (pos_inf && neg_inf) {
        return OracleResult { exact: None, rne_fp32: ScalarFormat::FP32.canonical_nan() };
    }
    if pos_inf || neg_inf {
        let word = if neg_inf { FP32_INF | 0x8000_0000 } else { FP32_INF };
        return OracleResult { exact: None, rne_fp32: word };
    }

    let mut total = ExactFixedPoint::from_float(c, ScalarFormat::FP32, flush_subnormal);
    for (x, y) in a.iter().zip(b) {
        let px = ExactFixedPoint::from_float(x, mul_format, flush_subnormal);
        let py = ExactFixedPoint::from_float(y, mul_format, flush_subnormal);
        total = total.add(&px.mul(&py));
    }
    let rne_fp32 = total.round_to_fp32();
    OracleResult { exact: Some(total), rne_fp32 }
}

/// `(sum(a[i] * b[i]) + c) mod 2^32`, evaluated in 64-bit arithmetic.
pub fn exact_dot_int(a: &[i64], b: &[i64], c: u32) -> u32 {
    assert_eq!(a.len(), b.len(), "operand length mismatch");
    let dot: i64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (dot + c as i32 as i64) as u32
}

/// Distance in representable FP32 steps between two results.
///
/// Both zeros sit at the same point and infinity is one step past the
/// largest finite value. Two NaNs are at distance 0; NaN against anything
/// else is `u64::MAX`.
pub fn ulp_distance(x: u32, y: u32) -> u64 {
    let nan = |w: u32| w & 0x7FFF_FFFF > FP32_INF;
    match (nan(x), nan(y)) {
        (true, true) => return 0,
        (true, false) | (false, true) => return u64::MAX,
        _ => {}
    }
    let ordinal = |w: u32| {
        let mag = (w & 0x7FFF_FFFF) as i64;
        if w >> 31 == 1 { -mag } else { mag }
    };
    (ordinal(x) - ordinal(y)).unsigned_abs()
}
