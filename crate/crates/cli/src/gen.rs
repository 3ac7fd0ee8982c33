//! Random test-vector generation.
//!
//! Each record draws from its own ChaCha stream (`seed`, stream = record
//! index), so a file is reproducible and records can be built in parallel.
//! Expected words come from the exact oracle, never from the datapath.

use std::fmt;
use std::str::FromStr;

use fedp_core::formats::{self, decode, ScalarFormat};
use fedp_core::oracle::{exact_dot_fp, exact_dot_int};
use fedp_core::FedpConfig;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vectors::TestVectorRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseClass {
    /// Random finite bit patterns.
    Uniform,
    /// Products that cancel exactly or nearly, and addends that cancel the sum.
    Cancellation,
    /// One dominant term against tiny ones, maximizing alignment shifts.
    Spread,
    /// At least one NaN or infinity lane. Floating point only.
    Special,
    /// Zeros, subnormal and normal limits, largest finite values.
    Boundary,
}

impl CaseClass {
    pub const ALL: [CaseClass; 5] =
        [CaseClass::Uniform, CaseClass::Cancellation, CaseClass::Spread, CaseClass::Special, CaseClass::Boundary];

    pub fn name(self) -> &'static str {
        match self {
            CaseClass::Uniform => "uniform",
            CaseClass::Cancellation => "cancellation",
            CaseClass::Spread => "spread",
            CaseClass::Special => "special",
            CaseClass::Boundary => "boundary",
        }
    }

    pub fn supports(self, cfg: &FedpConfig) -> bool {
        !(self == CaseClass::Special && cfg.is_integer())
    }
}

impl fmt::Display for CaseClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CaseClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CaseClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown case class `{s}`"))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenError {
    #[error("case class `{class}` does not apply to {format}")]
    Unsupported { class: CaseClass, format: String },
    #[error("at least one case class is required")]
    NoClasses,
}

/// Oracle result for one record.
pub fn expected_word(cfg: &FedpConfig, a_words: &[u32], b_words: &[u32], c_word: u32) -> u32 {
    let fmt = cfg.mul_format;
    let a = lanes_of(a_words, fmt, cfg.lanes_per_operand());
    let b = lanes_of(b_words, fmt, cfg.lanes_per_operand());
    if cfg.is_integer() {
        let value = |bits: u32| -> i64 {
            if fmt.signed {
                let shift = 32 - fmt.total_bits;
                (((bits << shift) as i32) >> shift) as i64
            } else {
                bits as i64
            }
        };
        let a: Vec<i64> = a.into_iter().map(value).collect();
        let b: Vec<i64> = b.into_iter().map(value).collect();
        return exact_dot_int(&a, &b, c_word);
    }
    let a: Vec<_> = a.into_iter().map(|x| decode(x, fmt)).collect();
    let b: Vec<_> = b.into_iter().map(|x| decode(x, fmt)).collect();
    let c = decode(c_word, ScalarFormat::FP32);
    exact_dot_fp(&a, &b, &c, fmt, cfg.subnormal_flush).rne_fp32
}

/// Lane bit patterns, lane 0 in the low bits of word 0.
fn lanes_of(words: &[u32], fmt: ScalarFormat, used: usize) -> Vec<u32> {
    let per = fmt.lanes_per_word();
    (0..used).map(|i| (words[i / per] >> ((i % per) as u32 * fmt.total_bits)) & fmt.value_mask()).collect()
}

fn words_of(lanes: &[u32], fmt: ScalarFormat) -> Vec<u32> {
    lanes
        .chunks(fmt.lanes_per_word())
        .map(|chunk| formats::pack(chunk, fmt).expect("packable lane format").bits)
        .collect()
}

/// Builds `count` records cycling through `classes`.
pub fn generate(
    cfg: &FedpConfig,
    count: usize,
    seed: u64,
    classes: &[CaseClass],
) -> Result<Vec<TestVectorRecord>, GenError> {
    if classes.is_empty() {
        return Err(GenError::NoClasses);
    }
    if let Some(&class) = classes.iter().find(|c| !c.supports(cfg)) {
        return Err(GenError::Unsupported { class, format: cfg.mul_format.kind.to_string() });
    }
    Ok((0..count)
        .into_par_iter()
        .map(|i| generate_one(cfg, seed, i as u64, classes[i % classes.len()]))
        .collect())
}

pub fn generate_one(cfg: &FedpConfig, seed: u64, index: u64, class: CaseClass) -> TestVectorRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let fmt = cfg.mul_format;
    let used = cfg.lanes_per_operand();
    let total = cfg.words_per_operand() * fmt.lanes_per_word();

    let (mut a, mut b, c) = if cfg.is_integer() {
        int_case(cfg, class, &mut rng)
    } else {
        fp_case(cfg, class, &mut rng)
    };
    // lanes past the operand width carry garbage the datapath must ignore
    for lanes in [&mut a, &mut b] {
        while lanes.len() < total {
            lanes.push(rng.gen::<u32>() & fmt.value_mask());
        }
    }
    debug_assert!(used <= total);
    let a_words = words_of(&a, fmt);
    let b_words = words_of(&b, fmt);
    let expected_word = expected_word(cfg, &a_words, &b_words, c);
    TestVectorRecord { a_words, b_words, c_word: c, expected_word, class: Some(class) }
}

/// Bit-level builder for one floating-point format.
#[derive(Clone, Copy)]
struct Fp(ScalarFormat);

impl Fp {
    fn make(self, negative: bool, exp: u32, man: u32) -> u32 {
        let f = self.0;
        ((negative as u32) << (f.total_bits - 1)) | (exp << f.man_bits) | (man & f.mantissa_mask())
    }

    fn sign_bit(self) -> u32 {
        1 << (self.0.total_bits - 1)
    }

    fn is_special(self, bits: u32) -> bool {
        decode(bits, self.0).is_special()
    }

    /// Largest biased exponent that still encodes finite values.
    fn max_finite_exp(self) -> u32 {
        if self.0.has_infinity() {
            self.0.max_biased_exp() - 1
        } else {
            self.0.max_biased_exp()
        }
    }

    fn max_finite(self, negative: bool) -> u32 {
        let man = if self.0.has_infinity() { self.0.mantissa_mask() } else { self.0.mantissa_mask() - 1 };
        self.make(negative, self.max_finite_exp(), man)
    }

    fn one(self, negative: bool) -> u32 {
        self.make(negative, self.0.bias as u32, 0)
    }

    fn random_finite(self, rng: &mut ChaCha8Rng) -> u32 {
        loop {
            let bits = rng.gen::<u32>() & self.0.value_mask();
            if !self.is_special(bits) {
                return bits;
            }
        }
    }

    fn random_with_exp(self, rng: &mut ChaCha8Rng, exp: u32) -> u32 {
        let bits = self.make(rng.gen(), exp, rng.gen());
        if self.is_special(bits) {
            bits - 1
        } else {
            bits
        }
    }

    fn boundary(self, rng: &mut ChaCha8Rng) -> u32 {
        let neg = rng.gen();
        let m = self.0.mantissa_mask();
        let choices = [
            self.make(neg, 0, 0),
            self.make(neg, 0, 1),
            self.make(neg, 0, m),
            self.make(neg, 1, 0),
            self.make(neg, 1, m),
            self.one(neg),
            self.max_finite(neg),
            self.make(neg, self.max_finite_exp(), 0),
        ];
        *choices.choose(rng).expect("non-empty")
    }

    fn special(self, rng: &mut ChaCha8Rng) -> u32 {
        let f = self.0;
        let neg = rng.gen();
        if f.has_infinity() && rng.gen_bool(0.5) {
            return self.make(neg, f.max_biased_exp(), 0);
        }
        if f.has_infinity() {
            // any non-zero payload
            let man = rng.gen_range(1..=f.mantissa_mask());
            self.make(neg, f.max_biased_exp(), man)
        } else {
            self.make(neg, f.max_biased_exp(), f.mantissa_mask())
        }
    }
}

const FP32: Fp = Fp(ScalarFormat::FP32);

fn fp_case(cfg: &FedpConfig, class: CaseClass, rng: &mut ChaCha8Rng) -> (Vec<u32>, Vec<u32>, u32) {
    let f = Fp(cfg.mul_format);
    let n = cfg.lanes_per_operand();
    let mut a: Vec<u32> = (0..n).map(|_| f.random_finite(rng)).collect();
    let mut b: Vec<u32> = (0..n).map(|_| f.random_finite(rng)).collect();
    let mut c = FP32.random_finite(rng);

    match class {
        CaseClass::Uniform => {}
        CaseClass::Cancellation => {
            // pair lane i with its partner, either adjacent or half a vector away
            let stride = if rng.gen_bool(0.5) { 1 } else { n / 2 };
            for i in (0..n).filter(|i| (i / stride) % 2 == 0) {
                let j = i + stride;
                a[j] = a[i] ^ f.sign_bit();
                b[j] = b[i];
                if rng.gen_bool(0.5) {
                    // nudge one ulp so cancellation is only partial
                    let nudged = if rng.gen() { a[j].wrapping_add(1) } else { a[j].wrapping_sub(1) };
                    let nudged = nudged & cfg.mul_format.value_mask();
                    if !f.is_special(nudged) && (nudged ^ a[j]) & f.sign_bit() == 0 {
                        a[j] = nudged;
                    }
                }
            }
            c = match rng.gen_range(0..3) {
                0 => 0,
                1 => FP32.random_finite(rng),
                _ => {
                    // cancel against the rounded sum of a random subset of products
                    let keep = rng.gen_range(1..=n);
                    let mut sub_a = a.clone();
                    sub_a.iter_mut().skip(keep).for_each(|x| *x = 0);
                    let sub = rounded_dot(cfg, &sub_a, &b);
                    let near = sub ^ 0x8000_0000;
                    if rng.gen() { near } else { near.wrapping_add(rng.gen_range(0..4)) }
                }
            };
            if FP32.is_special(c) {
                c = 0;
            }
        }
        CaseClass::Spread => {
            let big = rng.gen_range(0..n);
            let top = f.max_finite_exp();
            for i in 0..n {
                let (ea, eb) = if i == big {
                    (rng.gen_range(top.saturating_sub(2).max(1)..=top), rng.gen_range(top.saturating_sub(2).max(1)..=top))
                } else if rng.gen_bool(0.25) {
                    (0, rng.gen_range(0..=2))
                } else {
                    (rng.gen_range(1..=2), rng.gen_range(1..=2))
                };
                a[i] = f.random_with_exp(rng, ea);
                b[i] = f.random_with_exp(rng, eb);
            }
            c = match rng.gen_range(0..3) {
                // tiny addend far below the dominant product
                0 => {
                    let e = rng.gen_range(0..=8);
                    FP32.random_with_exp(rng, e)
                }
                // addend dominating everything
                1 => {
                    let e = rng.gen_range(200..=254);
                    FP32.random_with_exp(rng, e)
                }
                _ => FP32.random_finite(rng),
            };
        }
        CaseClass::Special => {
            let count = rng.gen_range(1..=2);
            for _ in 0..count {
                let lane = rng.gen_range(0..n);
                if rng.gen() {
                    a[lane] = f.special(rng);
                    if rng.gen_bool(0.25) {
                        b[lane] = f.make(rng.gen(), 0, 0);
                    }
                } else {
                    b[lane] = f.special(rng);
                    if rng.gen_bool(0.25) {
                        a[lane] = f.make(rng.gen(), 0, rng.gen());
                    }
                }
            }
            if rng.gen_bool(0.25) {
                c = FP32.special(rng);
            }
        }
        CaseClass::Boundary => {
            a.iter_mut().for_each(|x| *x = f.boundary(rng));
            b.iter_mut().for_each(|x| *x = f.boundary(rng));
            c = FP32.boundary(rng);
        }
    }
    (a, b, c)
}

/// Rounded FP32 dot product of lane vectors, for building cancelling addends.
fn rounded_dot(cfg: &FedpConfig, a: &[u32], b: &[u32]) -> u32 {
    let fmt = cfg.mul_format;
    let a: Vec<_> = a.iter().map(|&x| decode(x, fmt)).collect();
    let b: Vec<_> = b.iter().map(|&x| decode(x, fmt)).collect();
    let zero = decode(0, ScalarFormat::FP32);
    exact_dot_fp(&a, &b, &zero, fmt, cfg.subnormal_flush).rne_fp32
}

fn int_case(cfg: &FedpConfig, class: CaseClass, rng: &mut ChaCha8Rng) -> (Vec<u32>, Vec<u32>, u32) {
    let fmt = cfg.mul_format;
    let mask = fmt.value_mask();
    let n = cfg.lanes_per_operand();
    let (min, max): (i64, i64) = if fmt.signed { (-(1 << (fmt.total_bits - 1)), (1 << (fmt.total_bits - 1)) - 1) } else { (0, mask as i64) };
    let enc = |v: i64| (v as u32) & mask;
    let near_wrap = |rng: &mut ChaCha8Rng| -> u32 {
        let base: i64 = *[i32::MAX as i64, i32::MIN as i64, -1, 0].choose(rng).expect("non-empty");
        (base + rng.gen_range(-300_000..=300_000)) as u32
    };

    let mut a: Vec<u32> = (0..n).map(|_| rng.gen::<u32>() & mask).collect();
    let mut b: Vec<u32> = (0..n).map(|_| rng.gen::<u32>() & mask).collect();
    let mut c: u32 = rng.gen();
    match class {
        CaseClass::Uniform | CaseClass::Special => {}
        CaseClass::Cancellation => {
            if fmt.signed {
                for i in (0..n).step_by(2) {
                    let v = rng.gen_range(min + 1..=max);
                    a[i] = enc(v);
                    a[i + 1] = enc(-v);
                    b[i + 1] = b[i];
                }
            }
            c = near_wrap(rng);
        }
        CaseClass::Spread => {
            let pick = |rng: &mut ChaCha8Rng| enc(if rng.gen() { min } else { max });
            a.iter_mut().for_each(|x| *x = pick(rng));
            b.iter_mut().for_each(|x| *x = pick(rng));
            c = near_wrap(rng);
        }
        CaseClass::Boundary => {
            let set: Vec<u32> = [min, max, 0, -1, 1].into_iter().filter(|v| (min..=max).contains(v)).map(enc).collect();
            a.iter_mut().for_each(|x| *x = *set.choose(rng).expect("non-empty"));
            b.iter_mut().for_each(|x| *x = *set.choose(rng).expect("non-empty"));
            c = *[0, i32::MAX as u32, i32::MIN as u32, u32::MAX, 1, 0x01FF_FFFF, 0x0200_0000, 0xFE00_0000]
                .choose(rng)
                .expect("non-empty");
        }
    }
    (a, b, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fedp_core::FormatKind;

    fn cfg(kind: FormatKind, n: usize) -> FedpConfig {
        FedpConfig::new(n, kind).unwrap()
    }

    #[test]
    fn deterministic_per_seed() {
        let c = cfg(FormatKind::Bf16, 8);
        let x = generate(&c, 50, 11, &CaseClass::ALL).unwrap();
        let y = generate(&c, 50, 11, &CaseClass::ALL).unwrap();
        let z = generate(&c, 50, 12, &CaseClass::ALL).unwrap();
        assert_eq!(x, y);
        assert_ne!(x, z);
        assert_eq!(x[7], generate_one(&c, 11, 7, CaseClass::ALL[7 % 5]));
    }

    #[test]
    fn special_rejected_for_integers() {
        let c = cfg(FormatKind::Int8, 4);
        assert!(matches!(generate(&c, 1, 0, &[CaseClass::Special]), Err(GenError::Unsupported { .. })));
        assert_eq!(generate(&c, 1, 0, &[]), Err(GenError::NoClasses));
    }

    #[test]
    fn special_records_hold_a_special_lane() {
        for kind in [FormatKind::Fp16, FormatKind::Bf16, FormatKind::Fp8, FormatKind::Bf8] {
            let c = cfg(kind, 4);
            for r in generate(&c, 200, 3, &[CaseClass::Special]).unwrap() {
                let lanes = lanes_of(&r.a_words, c.mul_format, c.lanes_per_operand())
                    .into_iter()
                    .chain(lanes_of(&r.b_words, c.mul_format, c.lanes_per_operand()));
                let special = lanes.map(|x| decode(x, c.mul_format)).any(|d| d.is_special());
                assert!(special, "{kind}: {}", r.to_line());
            }
        }
    }

    #[test]
    fn other_classes_stay_finite() {
        let c = cfg(FormatKind::Fp8, 8);
        let classes = [CaseClass::Uniform, CaseClass::Cancellation, CaseClass::Spread, CaseClass::Boundary];
        for r in generate(&c, 400, 5, &classes).unwrap() {
            assert!(!decode(r.c_word, ScalarFormat::FP32).is_special());
            for x in lanes_of(&r.a_words, c.mul_format, c.lanes_per_operand()) {
                assert!(!decode(x, c.mul_format).is_special());
            }
        }
    }

    #[test]
    fn expected_words_for_known_vectors() {
        let c = cfg(FormatKind::Fp16, 4);
        assert_eq!(expected_word(&c, &[0x3C00_3C00; 2], &[0x3C00_3C00; 2], 0), 0x4080_0000);
        let c = cfg(FormatKind::Int8, 4);
        // 4 * (-128 * -128) + 0 = 65536
        assert_eq!(expected_word(&c, &[0x8080_8080], &[0x8080_8080], 0), 65536);
        let c = cfg(FormatKind::Uint4, 4);
        // 4 * (15 * 1) - 1, lanes 4..8 ignored
        assert_eq!(expected_word(&c, &[0xFFFF_FFFF], &[0xFFFF_1111], u32::MAX), 59);
    }

    #[test]
    fn word_layout_round_trips() {
        let fmt = ScalarFormat::UINT4;
        let lanes: Vec<u32> = (0..16).collect();
        let words = words_of(&lanes, fmt);
        assert_eq!(words, vec![0x7654_3210, 0xFEDC_BA98]);
        assert_eq!(lanes_of(&words, fmt, 16), lanes);
    }
}
