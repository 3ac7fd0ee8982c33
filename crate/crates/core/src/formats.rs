//! Scalar encodings handled by the dot product unit.
//!
//! Floating-point kinds follow the IEEE-754 field layout (sign, biased
//! exponent, trailing mantissa). The two 8-bit kinds use the OCP split:
//! `FP8` is E4M3 (no infinities, a single NaN pattern per sign) and `BF8` is
//! E5M2 (IEEE-style specials).
//!
//! Low-precision operands travel packed in 32-bit registers. Lane 0 sits in
//! the least-significant field and lanes ascend toward the MSB.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("{0} values travel as whole registers and cannot be packed")]
    NotPackable(FormatKind),
    #[error("unknown format `{0}`")]
    Unknown(String),
    #[error("bit pattern {bits:#x} does not fit in {width} bits")]
    TooWide { bits: u32, width: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatKind {
    Fp16,
    Bf16,
    Fp8,
    Bf8,
    Int8,
    Uint4,
    Fp32,
    Int32,
}

impl FormatKind {
    pub const ALL: [FormatKind; 8] = [
        FormatKind::Fp16,
        FormatKind::Bf16,
        FormatKind::Fp8,
        FormatKind::Bf8,
        FormatKind::Int8,
        FormatKind::Uint4,
        FormatKind::Fp32,
        FormatKind::Int32,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FormatKind::Fp16 => "fp16",
            FormatKind::Bf16 => "bf16",
            FormatKind::Fp8 => "fp8",
            FormatKind::Bf8 => "bf8",
            FormatKind::Int8 => "int8",
            FormatKind::Uint4 => "uint4",
            FormatKind::Fp32 => "fp32",
            FormatKind::Int32 => "int32",
        }
    }
}

impl fmt::Display for FormatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FormatKind {
    type Err = FormatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "e4m3" => return Ok(FormatKind::Fp8),
            "e5m2" => return Ok(FormatKind::Bf8),
            _ => {}
        }
        FormatKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or(FormatError::Unknown(s.to_string()))
    }
}

/// Static description of one numeric encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScalarFormat {
    pub kind: FormatKind,
    pub total_bits: u32,
    /// Zero for integer kinds.
    pub exp_bits: u32,
    /// Zero for integer kinds.
    pub man_bits: u32,
    /// Zero for integer kinds.
    pub bias: i32,
    pub signed: bool,
}

impl ScalarFormat {
    pub const FP16: ScalarFormat = ScalarFormat::float(FormatKind::Fp16, 5, 10);
    pub const BF16: ScalarFormat = ScalarFormat::float(FormatKind::Bf16, 8, 7);
    pub const FP8: ScalarFormat = ScalarFormat::float(FormatKind::Fp8, 4, 3);
    pub const BF8: ScalarFormat = ScalarFormat::float(FormatKind::Bf8, 5, 2);
    pub const FP32: ScalarFormat = ScalarFormat::float(FormatKind::Fp32, 8, 23);
    pub const INT8: ScalarFormat = ScalarFormat::int(FormatKind::Int8, 8, true);
    pub const UINT4: ScalarFormat = ScalarFormat::int(FormatKind::Uint4, 4, false);
    pub const INT32: ScalarFormat = ScalarFormat::int(FormatKind::Int32, 32, true);

    const fn float(kind: FormatKind, exp_bits: u32, man_bits: u32) -> Self {
        ScalarFormat {
            kind,
            total_bits: 1 + exp_bits + man_bits,
            exp_bits,
            man_bits,
            bias: (1 << (exp_bits - 1)) - 1,
            signed: true,
        }
    }

    const fn int(kind: FormatKind, total_bits: u32, signed: bool) -> Self {
        ScalarFormat { kind, total_bits, exp_bits: 0, man_bits: 0, bias: 0, signed }
    }

    pub const fn of(kind: FormatKind) -> Self {
        match kind {
            FormatKind::Fp16 => Self::FP16,
            FormatKind::Bf16 => Self::BF16,
            FormatKind::Fp8 => Self::FP8,
            FormatKind::Bf8 => Self::BF8,
            FormatKind::Int8 => Self::INT8,
            FormatKind::Uint4 => Self::UINT4,
            FormatKind::Fp32 => Self::FP32,
            FormatKind::Int32 => Self::INT32,
        }
    }

    pub const fn is_float(&self) -> bool {
        self.exp_bits != 0
    }

    pub const fn is_integer(&self) -> bool {
        !self.is_float()
    }

    /// Low-precision multiplicand kinds that can be packed into a register.
    pub const fn is_packable(&self) -> bool {
        !matches!(self.kind, FormatKind::Fp32 | FormatKind::Int32)
    }

    pub const fn lanes_per_word(&self) -> usize {
        (32 / self.total_bits) as usize
    }

    pub const fn max_biased_exp(&self) -> u32 {
        (1 << self.exp_bits) - 1
    }

    pub const fn mantissa_mask(&self) -> u32 {
        (1 << self.man_bits) - 1
    }

    /// E4M3 spends its all-ones exponent on finite values.
    pub const fn has_infinity(&self) -> bool {
        !matches!(self.kind, FormatKind::Fp8)
    }

    pub const fn value_mask(&self) -> u32 {
        if self.total_bits == 32 {
            u32::MAX
        } else {
            (1 << self.total_bits) - 1
        }
    }

    /// Canonical quiet NaN pattern for this format.
    pub const fn canonical_nan(&self) -> u32 {
        match self.kind {
            FormatKind::Fp32 => 0x7FC0_0000,
            FormatKind::Fp8 => 0x7F,
            _ => {
                let exp = self.max_biased_exp() << self.man_bits;
                exp | (1 << (self.man_bits - 1))
            }
        }
    }
}

impl fmt::Display for ScalarFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.kind.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FpClass {
    Zero,
    Subnormal,
    Normal,
    Inf,
    NaN,
}

/// One scalar split into its fields.
///
/// Floating-point values carry `significand` with the implicit bit already
/// applied (set for normals, clear for subnormals). Subnormals keep
/// `biased_exp == 0`; their effective exponent is 1. NaN keeps its raw
/// payload in `significand` so decoding is lossless.
///
/// Integer values use `negative`/`significand` as sign and magnitude so the
/// shared multiplier array can consume them directly; `int_value` holds the
/// interpreted integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodedScalar {
    pub negative: bool,
    pub biased_exp: u32,
    pub significand: u64,
    pub class: FpClass,
    pub int_value: i64,
}

impl DecodedScalar {
    pub const ZERO: DecodedScalar = DecodedScalar {
        negative: false,
        biased_exp: 0,
        significand: 0,
        class: FpClass::Zero,
        int_value: 0,
    };

    pub fn is_nan(&self) -> bool {
        self.class == FpClass::NaN
    }

    pub fn is_inf(&self) -> bool {
        self.class == FpClass::Inf
    }

    pub fn is_special(&self) -> bool {
        matches!(self.class, FpClass::Inf | FpClass::NaN)
    }

    /// Exponent actually applied to the significand (subnormals use 1).
    pub fn effective_exp(&self) -> u32 {
        match self.class {
            FpClass::Subnormal => 1,
            _ => self.biased_exp,
        }
    }
}

pub fn decode(bits: u32, fmt: ScalarFormat) -> DecodedScalar {
    debug_assert!(bits & !fmt.value_mask() == 0, "{bits:#x} wider than {fmt}");
    let bits = bits & fmt.value_mask();
    if fmt.is_integer() {
        return decode_int(bits, fmt);
    }

    let negative = (bits >> (fmt.total_bits - 1)) & 1 == 1;
    let biased_exp = (bits >> fmt.man_bits) & fmt.max_biased_exp();
    let mantissa = bits & fmt.mantissa_mask();
    let implicit = 1u64 << fmt.man_bits;

    let (class, significand) = if biased_exp == 0 {
        if mantissa == 0 {
            (FpClass::Zero, 0)
        } else {
            (FpClass::Subnormal, mantissa as u64)
        }
    } else if biased_exp == fmt.max_biased_exp() {
        if fmt.has_infinity() {
            if mantissa == 0 {
                (FpClass::Inf, implicit)
            } else {
                (FpClass::NaN, mantissa as u64)
            }
        } else if mantissa == fmt.mantissa_mask() {
            (FpClass::NaN, mantissa as u64)
        } else {
            (FpClass::Normal, implicit | mantissa as u64)
        }
    } else {
        (FpClass::Normal, implicit | mantissa as u64)
    };

    DecodedScalar { negative, biased_exp, significand, class, int_value: 0 }
}

fn decode_int(bits: u32, fmt: ScalarFormat) -> DecodedScalar {
    let int_value = if fmt.signed {
        let shift = 64 - fmt.total_bits;
        ((bits as i64) << shift) >> shift
    } else {
        bits as i64
    };
    DecodedScalar {
        negative: int_value < 0,
        biased_exp: 0,
        significand: int_value.unsigned_abs(),
        class: if int_value == 0 { FpClass::Zero } else { FpClass::Normal },
        int_value,
    }
}

/// Inverse of [`decode`]; `encode(decode(x), f) == x` for every pattern.
pub fn encode(value: &DecodedScalar, fmt: ScalarFormat) -> u32 {
    if fmt.is_integer() {
        return (value.int_value as u32) & fmt.value_mask();
    }
    let sign = (value.negative as u32) << (fmt.total_bits - 1);
    let exp = match value.class {
        FpClass::Zero | FpClass::Subnormal => 0,
        FpClass::Inf | FpClass::NaN if fmt.has_infinity() => fmt.max_biased_exp(),
        _ => value.biased_exp,
    };
    let mantissa = match value.class {
        FpClass::Zero | FpClass::Inf => 0,
        _ => value.significand as u32 & fmt.mantissa_mask(),
    };
    sign | (exp << fmt.man_bits) | mantissa
}

/// Rounds `(-1)^negative * 1.f * 2^exp` to FP32 with round-to-nearest-even.
///
/// `sig` holds 27 bits: the 24-bit significand (leading one at bit 26)
/// followed by guard, round and sticky. A zero `sig` encodes signed zero.
/// Results above the FP32 range become infinity; results below the smallest
/// normal after rounding flush to signed zero.
pub fn encode_fp32(negative: bool, exp: i32, sig: u32) -> u32 {
    let sign = (negative as u32) << 31;
    if sig == 0 {
        return sign;
    }
    debug_assert!(sig >> 26 == 1, "significand {sig:#x} not normalized");

    let mut mant = sig >> 3;
    let guard = (sig >> 2) & 1;
    let round_sticky = sig & 0b11;
    let mut exp = exp;
    if guard == 1 && (round_sticky != 0 || mant & 1 == 1) {
        mant += 1;
        if mant == 1 << 24 {
            mant >>= 1;
            exp += 1;
        }
    }

    let biased = exp + 127;
    if biased >= 255 {
        sign | 0x7F80_0000
    } else if biased <= 0 {
        sign
    } else {
        sign | ((biased as u32) << 23) | (mant & 0x7F_FFFF)
    }
}

/// One 32-bit register of packed low-precision lanes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackedWord {
    pub bits: u32,
    pub format: ScalarFormat,
    pub lane_count: usize,
}

impl PackedWord {
    pub fn new(bits: u32, format: ScalarFormat) -> Result<Self, FormatError> {
        if !format.is_packable() {
            return Err(FormatError::NotPackable(format.kind));
        }
        Ok(PackedWord { bits, format, lane_count: format.lanes_per_word() })
    }

    pub fn lane_bits(&self, lane: usize) -> u32 {
        assert!(lane < self.lane_count, "lane {lane} out of range");
        (self.bits >> (lane as u32 * self.format.total_bits)) & self.format.value_mask()
    }
}

pub fn unpack(word: &PackedWord) -> Vec<DecodedScalar> {
    (0..word.lane_count)
        .map(|lane| decode(word.lane_bits(lane), word.format))
        .collect()
}

/// Packs raw lane patterns, lane 0 first. Missing lanes are zero.
pub fn pack(lanes: &[u32], format: ScalarFormat) -> Result<PackedWord, FormatError> {
    let mut word = PackedWord::new(0, format)?;
    assert!(lanes.len() <= word.lane_count, "too many lanes for one word");
    for (i, &lane) in lanes.iter().enumerate() {
        if lane & !format.value_mask() != 0 {
            return Err(FormatError::TooWide { bits: lane, width: format.total_bits });
        }
        word.bits |= lane << (i as u32 * format.total_bits);
    }
    Ok(word)
}

pub fn pack_decoded(lanes: &[DecodedScalar], format: ScalarFormat) -> Result<PackedWord, FormatError> {
    let raw: Vec<u32> = lanes.iter().map(|l| encode(l, format)).collect();
    pack(&raw, format)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_table() {
        let expect = [
            (ScalarFormat::FP16, 16, 5, 10, 15),
            (ScalarFormat::BF16, 16, 8, 7, 127),
            (ScalarFormat::FP32, 32, 8, 23, 127),
            (ScalarFormat::FP8, 8, 4, 3, 7),
            (ScalarFormat::BF8, 8, 5, 2, 15),
        ];
        for (f, total, e, m, bias) in expect {
            assert_eq!((f.total_bits, f.exp_bits, f.man_bits, f.bias), (total, e, m, bias), "{f}");
            assert_eq!(f.total_bits, 1 + f.exp_bits + f.man_bits);
        }
        assert_eq!((ScalarFormat::INT8.total_bits, ScalarFormat::INT8.signed), (8, true));
        assert_eq!((ScalarFormat::UINT4.total_bits, ScalarFormat::UINT4.signed), (4, false));
        assert_eq!((ScalarFormat::INT32.total_bits, ScalarFormat::INT32.signed), (32, true));
    }

    #[test]
    fn decode_fp16_one() {
        let d = decode(0x3C00, ScalarFormat::FP16);
        assert!(!d.negative);
        assert_eq!(d.biased_exp, 15);
        assert_eq!(d.significand, 1024);
        assert_eq!(d.class, FpClass::Normal);
    }

    #[test]
    fn decode_zero_and_int_min() {
        let z = decode(0, ScalarFormat::FP16);
        assert_eq!((z.class, z.significand, z.biased_exp), (FpClass::Zero, 0, 0));
        assert_eq!(decode(0x80, ScalarFormat::INT8).int_value, -128);
        assert_eq!(decode(0xF, ScalarFormat::UINT4).int_value, 15);
    }

    #[test]
    fn e4m3_specials() {
        assert_eq!(decode(0x7F, ScalarFormat::FP8).class, FpClass::NaN);
        assert_eq!(decode(0xFF, ScalarFormat::FP8).class, FpClass::NaN);
        // exp all-ones with other mantissas is finite: 0x7E = 1.75 * 2^8 = 448
        let max = decode(0x7E, ScalarFormat::FP8);
        assert_eq!((max.class, max.biased_exp, max.significand), (FpClass::Normal, 15, 0b1110));
        assert_eq!(decode(0x78, ScalarFormat::FP8).class, FpClass::Normal);
    }

    #[test]
    fn e5m2_specials() {
        assert_eq!(decode(0x7C, ScalarFormat::BF8).class, FpClass::Inf);
        assert_eq!(decode(0x7D, ScalarFormat::BF8).class, FpClass::NaN);
        assert_eq!(decode(0x01, ScalarFormat::BF8).class, FpClass::Subnormal);
    }

    #[test]
    fn canonical_nans_decode_as_nan() {
        for kind in [FormatKind::Fp16, FormatKind::Bf16, FormatKind::Fp8, FormatKind::Bf8, FormatKind::Fp32] {
            let f = ScalarFormat::of(kind);
            assert!(decode(f.canonical_nan(), f).is_nan(), "{f}");
        }
        assert_eq!(ScalarFormat::FP32.canonical_nan(), 0x7FC0_0000);
    }

    #[test]
    fn encode_fp32_exact_and_ties() {
        // 4.0 = 1.0 * 2^2
        assert_eq!(encode_fp32(false, 2, 1 << 26), 0x4080_0000);
        // 1 + 2^-23 + half ulp: odd mantissa, tie rounds up to even
        assert_eq!(encode_fp32(false, 0, (1 << 26) | 0b1100), 0x3F80_0002);
        // 1.0 + half ulp, even below: stays
        assert_eq!(encode_fp32(false, 0, (1 << 26) | 0b100), 0x3F80_0000);
        // just above half
        assert_eq!(encode_fp32(false, 0, (1 << 26) | 0b101), 0x3F80_0001);
        assert_eq!(encode_fp32(true, 0, 0), 0x8000_0000);
    }

    #[test]
    fn encode_fp32_range_limits() {
        assert_eq!(encode_fp32(false, 128, 1 << 26), 0x7F80_0000);
        // all-ones significand rounding up out of the top binade
        assert_eq!(encode_fp32(true, 127, 0x7FF_FFFF), 0xFF80_0000);
        assert_eq!(encode_fp32(false, -126, 1 << 26), 0x0080_0000);
        assert_eq!(encode_fp32(true, -127, 1 << 26), 0x8000_0000);
        // rounds up into the smallest normal
        assert_eq!(encode_fp32(false, -127, 0x7FF_FFFF), 0x0080_0000);
    }

    #[test]
    fn unpack_examples() {
        let w = PackedWord::new(0x3C00_3C00, ScalarFormat::FP16).unwrap();
        let lanes = unpack(&w);
        assert_eq!(lanes.len(), 2);
        assert!(lanes.iter().all(|l| l.biased_exp == 15 && l.significand == 1024));

        for kind in [FormatKind::Fp16, FormatKind::Bf16, FormatKind::Fp8, FormatKind::Bf8, FormatKind::Int8, FormatKind::Uint4] {
            let w = PackedWord::new(0, ScalarFormat::of(kind)).unwrap();
            assert!(unpack(&w).iter().all(|l| l.class == FpClass::Zero));
        }
    }

    #[test]
    fn whole_register_kinds_reject_packing() {
        assert_eq!(
            PackedWord::new(0, ScalarFormat::FP32),
            Err(FormatError::NotPackable(FormatKind::Fp32))
        );
        assert!(PackedWord::new(0, ScalarFormat::INT32).is_err());
        assert!(pack(&[0x1F], ScalarFormat::UINT4).is_err());
    }

    #[test]
    fn lane_counts() {
        assert_eq!(ScalarFormat::FP16.lanes_per_word(), 2);
        assert_eq!(ScalarFormat::FP8.lanes_per_word(), 4);
        assert_eq!(ScalarFormat::INT8.lanes_per_word(), 4);
        assert_eq!(ScalarFormat::UINT4.lanes_per_word(), 8);
    }

    #[test]
    fn parse_names() {
        assert_eq!("FP16".parse::<FormatKind>().unwrap(), FormatKind::Fp16);
        assert_eq!("e4m3".parse::<FormatKind>().unwrap(), FormatKind::Fp8);
        assert!("fp64".parse::<FormatKind>().is_err());
    }
}
