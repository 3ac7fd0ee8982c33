//! The four-stage fused dot product datapath.
//!
//! 1. multiply: shared Wallace multipliers produce E8M25 raw products, the
//!    addend is brought into the same form (or split, for INT32).
//! 2. align: sign-matrix maximum-exponent selection, right shift with
//!    per-term sticky, two's complement of negative terms.
//! 3. accumulate: MOD-4 carry-save reduction, Kogge-Stone resolve.
//! 4. normalize/round: LZC + round-to-nearest-even, or the INT32 high-bit
//!    fixup.
//!
//! Each stage is a public function so a recorded [`PipelineTrace`] can be
//! replayed stage by stage.
//!
//! ## Internal widths
//!
//! Raw products keep the E8M25 layout: a 25-bit magnitude whose bit 24 is
//! the units bit, so a term is worth `magnitude * 2^(exp - 151)` with `exp`
//! FP32-biased. Stage 2 places that magnitude above `alignment_bits` extra
//! low-order bits and below [`HEADROOM_BITS`] of carry growth and sign, in a
//! field of `25 + log2(N) + HEADROOM_BITS + alignment_bits` bits.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bitmath::{self, CarrySavePair, ReductionTrace};
use crate::formats::{self, encode_fp32, DecodedScalar, FormatKind, FpClass, PackedWord, ScalarFormat};

/// Magnitude bits of an E8M25 raw product.
pub const MAGNITUDE_BITS: u32 = 25;
/// Two carry-growth guard bits plus a sign bit above the nominal width.
pub const HEADROOM_BITS: u32 = 3;
/// Low-order alignment bits used by [`FedpConfig::new`].
pub const DEFAULT_ALIGNMENT_BITS: u32 = 64;
/// Exponent given to zero terms so they never win max selection.
pub const ZERO_EXP: i32 = -4096;

const FP32_BIAS: i32 = 127;
const CANONICAL_NAN: u32 = 0x7FC0_0000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PipelineError {
    #[error("dot product width {0} is not one of 4, 8, 16, 32")]
    UnsupportedWidth(usize),
    #[error("{0} is not a multiplicand format")]
    UnsupportedMulFormat(FormatKind),
    #[error("{mul} multiplicands cannot accumulate into {acc}")]
    AccumulatorMismatch { mul: FormatKind, acc: FormatKind },
    #[error("internal width {0} exceeds 128 bits")]
    TooWide(u32),
    #[error("operand {operand} has {got} words, expected {expected}")]
    WordCount { operand: char, expected: usize, got: usize },
    #[error("operand lanes differ: {a} vs {b}")]
    LaneCount { a: usize, b: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FedpConfig {
    /// Dot-product elements per issue.
    pub n_elements: usize,
    pub mul_format: ScalarFormat,
    pub acc_format: ScalarFormat,
    /// Treat subnormal inputs as zero.
    pub subnormal_flush: bool,
    /// Extra low-order bits kept below the 25-bit magnitude during alignment
    /// (floating-point path only).
    pub alignment_bits: u32,
    /// 8-bit floats: add each element's two lane products into one raw
    /// product in stage 1 instead of feeding both to the accumulator.
    pub fp8_pair_presum: bool,
}

impl FedpConfig {
    /// Configuration with the accumulator implied by `mul` and the default
    /// flush and alignment settings.
    pub fn new(n_elements: usize, mul: FormatKind) -> Result<Self, PipelineError> {
        let mul_format = ScalarFormat::of(mul);
        let acc_format = if mul_format.is_integer() { ScalarFormat::INT32 } else { ScalarFormat::FP32 };
        let cfg = FedpConfig {
            n_elements,
            mul_format,
            acc_format,
            subnormal_flush: true,
            alignment_bits: DEFAULT_ALIGNMENT_BITS,
            fp8_pair_presum: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_alignment_bits(mut self, bits: u32) -> Result<Self, PipelineError> {
        self.alignment_bits = bits;
        self.validate()?;
        Ok(self)
    }

    pub fn with_subnormal_flush(mut self, flush: bool) -> Self {
        self.subnormal_flush = flush;
        self
    }

    pub fn with_fp8_pair_presum(mut self, presum: bool) -> Self {
        self.fp8_pair_presum = presum;
        self
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if ![4, 8, 16, 32].contains(&self.n_elements) {
            return Err(PipelineError::UnsupportedWidth(self.n_elements));
        }
        if !self.mul_format.is_packable() {
            return Err(PipelineError::UnsupportedMulFormat(self.mul_format.kind));
        }
        let expected_acc = if self.mul_format.is_integer() { FormatKind::Int32 } else { FormatKind::Fp32 };
        if self.acc_format.kind != expected_acc {
            return Err(PipelineError::AccumulatorMismatch {
                mul: self.mul_format.kind,
                acc: self.acc_format.kind,
            });
        }
        if self.internal_width() > bitmath::MAX_WIDTH {
            return Err(PipelineError::TooWide(self.internal_width()));
        }
        Ok(())
    }

    pub fn is_integer(&self) -> bool {
        self.mul_format.is_integer()
    }

    pub fn log2_n(&self) -> u32 {
        self.n_elements.trailing_zeros()
    }

    /// `25 + log2(N)`: the accumulator width before headroom and alignment
    /// extension.
    pub fn nominal_acc_width(&self) -> u32 {
        MAGNITUDE_BITS + self.log2_n()
    }

    /// Width of the stage 2/3 datapath: one more growth bit when 8-bit lane
    /// pairs reach the accumulator unsummed.
    pub fn internal_width(&self) -> u32 {
        let growth = self.product_terms().trailing_zeros() - self.log2_n();
        let base = self.nominal_acc_width() + growth + HEADROOM_BITS;
        if self.is_integer() { base } else { base + self.alignment_bits }
    }

    /// Raw products entering stage 2 (the addend comes on top).
    pub fn product_terms(&self) -> usize {
        if self.fp8_pair_presum { self.n_elements } else { self.lanes_per_operand() }
    }

    /// 8-bit floats feed two lane products into each dot-product element.
    pub fn lanes_per_element(&self) -> usize {
        match self.mul_format.kind {
            FormatKind::Fp8 | FormatKind::Bf8 => 2,
            _ => 1,
        }
    }

    pub fn lanes_per_operand(&self) -> usize {
        self.n_elements * self.lanes_per_element()
    }

    pub fn words_per_operand(&self) -> usize {
        self.lanes_per_operand().div_ceil(self.mul_format.lanes_per_word())
    }

    /// Largest alignment shift that cannot drop a magnitude bit.
    pub fn lossless_shift_limit(&self) -> u32 {
        self.alignment_bits
    }
}

/// E8M25 intermediate: `(-1)^negative * magnitude * 2^(exp - 151)`.
///
/// `exp` is FP32-biased. It is kept as a signed integer because BF16
/// products reach past both ends of the 8-bit range; FP16/FP8 products and
/// FP32 addends stay inside `[0, 255]`. `sticky` marks bits already lost
/// while summing an 8-bit lane pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawProduct {
    pub negative: bool,
    pub exp: i32,
    pub magnitude: u32,
    pub sticky: bool,
}

impl RawProduct {
    pub const ZERO: RawProduct = RawProduct { negative: false, exp: ZERO_EXP, magnitude: 0, sticky: false };

    pub fn is_zero(&self) -> bool {
        self.magnitude == 0
    }

    /// The exponent as an 8-bit E8M25 field would hold it.
    pub fn biased_exp8(&self) -> u8 {
        self.exp.clamp(0, 255) as u8
    }
}

fn is_flushed_zero(v: &DecodedScalar, cfg: &FedpConfig) -> bool {
    v.class == FpClass::Zero || (cfg.subnormal_flush && v.class == FpClass::Subnormal)
}

/// Special-operand resolution, taken before stage 2.
///
/// Any NaN, infinity times zero, or opposing infinities give the canonical
/// quiet NaN; otherwise an infinity gives an infinity of its sign. `None`
/// when every operand is finite.
pub fn special_result(a: &[DecodedScalar], b: &[DecodedScalar], c: &DecodedScalar, cfg: &FedpConfig) -> Option<u32> {
    let mut nan = c.is_nan();
    let mut pos = c.is_inf() && !c.negative;
    let mut neg = c.is_inf() && c.negative;
    for (x, y) in a.iter().zip(b) {
        if x.is_nan() || y.is_nan() {
            nan = true;
        } else if x.is_inf() || y.is_inf() {
            if is_flushed_zero(x, cfg) || is_flushed_zero(y, cfg) {
                nan = true;
            } else if x.negative ^ y.negative {
                neg = true;
            } else {
                pos = true;
            }
        }
    }
    if nan || (pos && neg) {
        Some(CANONICAL_NAN)
    } else if pos {
        Some(0x7F80_0000)
    } else if neg {
        Some(0xFF80_0000)
    } else {
        None
    }
}

/// Product significand `P` of two lanes and its FP32-biased exponent, with
/// the binal point after the top bit of the `2m+2`-bit product:
/// `exp = e_a + e_b + 127 - 2*bias + 1`.
fn lane_product(a: &DecodedScalar, b: &DecodedScalar, cfg: &FedpConfig) -> Option<(bool, i32, u64)> {
    if is_flushed_zero(a, cfg) || is_flushed_zero(b, cfg) {
        return None;
    }
    let fmt = cfg.mul_format;
    let sig_width = fmt.man_bits + 1;
    let product = bitmath::wallace_multiply(a.significand, sig_width, b.significand, sig_width) as u64;
    if product == 0 {
        return None;
    }
    let exp = a.effective_exp() as i32 + b.effective_exp() as i32 + FP32_BIAS - 2 * fmt.bias + 1;
    Some((a.negative ^ b.negative, exp, product))
}

/// One lane product in E8M25 form: the `2m+2`-bit product is left-justified
/// in the 25-bit magnitude.
pub fn fp_product(a: &DecodedScalar, b: &DecodedScalar, cfg: &FedpConfig) -> RawProduct {
    match lane_product(a, b, cfg) {
        None => RawProduct::ZERO,
        Some((negative, exp, p)) => {
            let shift = MAGNITUDE_BITS - 2 * (cfg.mul_format.man_bits + 1);
            RawProduct { negative, exp, magnitude: (p << shift) as u32, sticky: false }
        }
    }
}

/// Two 8-bit lane products summed into one raw product.
///
/// The 25-bit magnitude cannot hold two products whose exponents are far
/// apart, so this step can drop bits (flagged by `sticky`); a later
/// cancellation against another element then exposes the loss.
///
/// Both products sit one bit below the top of the magnitude (exponent + 1)
/// so the sum cannot carry out. The product with the smaller exponent is
/// shifted right by the exponent difference; bits shifted out set `sticky`.
pub fn fp8_pair_product(lanes_a: [&DecodedScalar; 2], lanes_b: [&DecodedScalar; 2], cfg: &FedpConfig) -> RawProduct {
    let shift = MAGNITUDE_BITS - 1 - 2 * (cfg.mul_format.man_bits + 1);
    let place = |(neg, exp, p): (bool, i32, u64)| (neg, exp + 1, p << shift);
    let p0 = lane_product(lanes_a[0], lanes_b[0], cfg).map(place);
    let p1 = lane_product(lanes_a[1], lanes_b[1], cfg).map(place);
    let (hi, lo) = match (p0, p1) {
        (None, None) => return RawProduct::ZERO,
        (Some(p), None) | (None, Some(p)) => {
            return RawProduct { negative: p.0, exp: p.1, magnitude: p.2 as u32, sticky: false };
        }
        (Some(x), Some(y)) => if y.1 > x.1 { (y, x) } else { (x, y) },
    };
    let diff = (hi.1 - lo.1) as u32;
    let (lo_mag, sticky) = if diff >= MAGNITUDE_BITS {
        (0, lo.2 != 0)
    } else {
        (lo.2 >> diff, lo.2 & ((1 << diff) - 1) != 0)
    };
    let signed = |neg: bool, m: u64| if neg { -(m as i64) } else { m as i64 };
    let total = signed(hi.0, hi.2) + signed(lo.0, lo_mag);
    if total == 0 {
        return RawProduct { sticky, ..RawProduct::ZERO };
    }
    RawProduct {
        negative: total < 0,
        exp: hi.1,
        magnitude: total.unsigned_abs() as u32,
        sticky,
    }
}

/// The FP32 addend as a raw term: its 24-bit significand shifted up one bit
/// into the 25-bit magnitude, exponent unchanged.
pub fn fp_addend(c: &DecodedScalar, cfg: &FedpConfig) -> RawProduct {
    if is_flushed_zero(c, cfg) {
        return RawProduct::ZERO;
    }
    RawProduct {
        negative: c.negative,
        exp: c.effective_exp() as i32,
        magnitude: (c.significand << 1) as u32,
        sticky: false,
    }
}

/// Product sign-extended into a 25-bit two's-complement pattern.
pub fn int_product(a: &DecodedScalar, b: &DecodedScalar, cfg: &FedpConfig) -> u32 {
    let w = cfg.mul_format.total_bits;
    let mag = bitmath::wallace_multiply(a.significand, w, b.significand, w) as u32;
    let pattern = if a.negative ^ b.negative { mag.wrapping_neg() } else { mag };
    pattern & ((1 << MAGNITUDE_BITS) - 1)
}

/// INT32 addend split: bits `[24:0]` join the stage-3 accumulation, bits
/// `[31:25]` wait for stage 4.
pub fn int_addend_split(c: u32) -> (u32, u8) {
    (c & ((1 << MAGNITUDE_BITS) - 1), (c >> MAGNITUDE_BITS) as u8)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage1Trace {
    Float {
        products: Vec<RawProduct>,
        addend: RawProduct,
    },
    Int {
        /// 25-bit sign-extended product patterns.
        products: Vec<u32>,
        /// Bit 24 of each product pattern.
        product_signs: Vec<bool>,
        low25: u32,
        high7: u8,
    },
    Special {
        result: u32,
    },
}

/// Stage 1: products and addend preparation.
///
/// `a` and `b` hold `cfg.lanes_per_operand()` lanes; for 8-bit floats lanes
/// `2k` and `2k+1` form element `k`. Both of an element's lane products are
/// passed on as separate raw products unless `cfg.fp8_pair_presum` is set,
/// in which case [`fp8_pair_product`] adds them first.
pub fn stage1_multiply(
    a: &[DecodedScalar],
    b: &[DecodedScalar],
    c: &DecodedScalar,
    cfg: &FedpConfig,
) -> Result<Stage1Trace, PipelineError> {
    if a.len() != b.len() {
        return Err(PipelineError::LaneCount { a: a.len(), b: b.len() });
    }
    if a.len() != cfg.lanes_per_operand() {
        return Err(PipelineError::LaneCount { a: a.len(), b: cfg.lanes_per_operand() });
    }

    if cfg.is_integer() {
        let products: Vec<u32> = a.iter().zip(b).map(|(x, y)| int_product(x, y, cfg)).collect();
        let product_signs = products.iter().map(|p| (p >> (MAGNITUDE_BITS - 1)) & 1 == 1).collect();
        let (low25, high7) = int_addend_split(c.int_value as u32);
        return Ok(Stage1Trace::Int { products, product_signs, low25, high7 });
    }

    if let Some(result) = special_result(a, b, c, cfg) {
        return Ok(Stage1Trace::Special { result });
    }
    let products = if cfg.lanes_per_element() == 2 && cfg.fp8_pair_presum {
        a.chunks(2)
            .zip(b.chunks(2))
            .map(|(x, y)| fp8_pair_product([&x[0], &x[1]], [&y[0], &y[1]], cfg))
            .collect()
    } else {
        a.iter().zip(b).map(|(x, y)| fp_product(x, y, cfg)).collect()
    };
    Ok(Stage1Trace::Float { products, addend: fp_addend(c, cfg) })
}

/// Pairwise exponent comparisons for maximum selection.
///
/// `diffs[i][j] = exp[j] - exp[i]`. `signs[i][j]` is set when entry `j`
/// loses to entry `i`: `exp[j] < exp[i]`, or on a tie when `i < j` (the
/// upper triangle compares `exp[j] - exp[i] - 1`). Column `k` is all zero
/// exactly for the lowest-index maximum.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignMatrix {
    pub diffs: Vec<Vec<i32>>,
    pub signs: Vec<Vec<bool>>,
}

impl SignMatrix {
    pub fn build(exps: &[i32]) -> Self {
        let n = exps.len();
        let mut diffs = vec![vec![0; n]; n];
        let mut signs = vec![vec![false; n]; n];
        for i in 0..n {
            for j in 0..n {
                let d = exps[j] - exps[i];
                diffs[i][j] = d;
                signs[i][j] = if i < j { d - 1 < 0 } else { d < 0 };
            }
        }
        SignMatrix { diffs, signs }
    }

    /// Reduction-OR down each column, inverted.
    pub fn one_hot(&self) -> Vec<bool> {
        (0..self.signs.len())
            .map(|j| !self.signs.iter().any(|row| row[j]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExponentSelection {
    pub max_exp: i32,
    pub one_hot: Vec<bool>,
    pub shifts: Vec<u32>,
    pub matrix: SignMatrix,
}

impl ExponentSelection {
    pub fn selected(&self) -> usize {
        self.one_hot.iter().position(|&h| h).expect("one-hot selector")
    }
}

/// Maximum exponent, one-hot selector and per-entry right-shift amounts.
///
/// Shift amounts come from the selected row of the difference matrix,
/// negated: `shift[j] = -(exp[j] - exp[k]) = -diffs[k][j]`.
pub fn max_exponent_select(exps: &[i32]) -> ExponentSelection {
    assert!(!exps.is_empty(), "max selection over no exponents");
    let matrix = SignMatrix::build(exps);
    let one_hot = matrix.one_hot();
    let n = exps.len();
    // one-hot muxes
    let max_exp = exps.iter().zip(&one_hot).filter(|(_, &h)| h).map(|(&e, _)| e).sum();
    let shifts = (0..n)
        .map(|j| {
            let row: i32 = (0..n).filter(|&k| one_hot[k]).map(|k| matrix.diffs[k][j]).sum();
            (-row) as u32
        })
        .collect();
    ExponentSelection { max_exp, one_hot, shifts, matrix }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignedTerm {
    /// Two's-complement value in the internal width.
    pub value: u128,
    /// Magnitude bits shifted out of the field.
    pub sticky: bool,
}

/// Place a raw magnitude above the alignment bits, shift it right, then
/// negate it if needed.
pub fn align_term(term: &RawProduct, shift: u32, cfg: &FedpConfig) -> AlignedTerm {
    let width = cfg.internal_width();
    let placed = (term.magnitude as u128) << cfg.alignment_bits;
    let (mag, sticky) = if shift >= width {
        (0, placed != 0)
    } else {
        (placed >> shift, placed & ((1u128 << shift) - 1) != 0)
    };
    let value = if term.negative { mag.wrapping_neg() & bitmath::mask(width) } else { mag };
    AlignedTerm { value, sticky }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage2Trace {
    /// Products first, addend last.
    pub exponents: Vec<i32>,
    pub selection: ExponentSelection,
    pub aligned: Vec<AlignedTerm>,
    /// OR of every per-term and pair sticky.
    pub sticky: bool,
}

/// Stage 2: max-exponent selection over products and addend, then
/// alignment.
pub fn stage2_align(products: &[RawProduct], addend: &RawProduct, cfg: &FedpConfig) -> Stage2Trace {
    let terms: Vec<&RawProduct> = products.iter().chain(std::iter::once(addend)).collect();
    let exponents: Vec<i32> = terms.iter().map(|t| if t.is_zero() { ZERO_EXP } else { t.exp }).collect();
    let selection = max_exponent_select(&exponents);
    let aligned: Vec<AlignedTerm> = terms
        .iter()
        .zip(&selection.shifts)
        .map(|(t, &s)| align_term(t, s, cfg))
        .collect();
    let sticky = aligned.iter().any(|t| t.sticky) || terms.iter().any(|t| t.sticky);
    Stage2Trace { exponents, selection, aligned, sticky }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage3Trace {
    pub width: u32,
    pub terms: Vec<u128>,
    pub pair: CarrySavePair,
    pub reduction: ReductionTrace,
    pub raw_sum: u128,
}

/// Stage 3: MOD-4 carry-save accumulation of all terms, resolved by a
/// Kogge-Stone adder. `raw_sum == sum(terms) mod 2^width`.
pub fn stage3_accumulate(terms: &[u128], width: u32) -> Stage3Trace {
    let (pair, reduction) = bitmath::csa_reduce_mod4(terms, width).expect("at least the addend term");
    let raw_sum = pair.resolve();
    Stage3Trace { width, terms: terms.to_vec(), pair, reduction, raw_sum }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub negative: bool,
    pub lzc: u32,
    /// Unbiased exponent of the leading one.
    pub exp: i32,
    /// 24 significand bits followed by guard, round, sticky.
    pub pre_round: u32,
    pub round_up: bool,
    pub word: u32,
}

/// Stage 4 (floating point): magnitude, LZC normalization and RNE rounding.
///
/// Bit 0 of the raw sum weighs `2^(max_exp - 151 - alignment_bits)`. A zero
/// sum gives +0 regardless of the sticky.
pub fn stage4_normalize_round(raw_sum: u128, max_exp: i32, sticky: bool, cfg: &FedpConfig) -> RoundTrace {
    let width = cfg.internal_width();
    let negative = (raw_sum >> (width - 1)) & 1 == 1;
    let mag = if negative { raw_sum.wrapping_neg() & bitmath::mask(width) } else { raw_sum };
    let lzc = bitmath::leading_zero_count(mag, width);
    if mag == 0 {
        return RoundTrace { negative: false, lzc, exp: 0, pre_round: 0, round_up: false, word: 0 };
    }

    let lead = (width - 1 - lzc) as i32;
    let exp = lead + max_exp - FP32_BIAS - (MAGNITUDE_BITS as i32 - 1) - cfg.alignment_bits as i32;
    let (window, lost) = if lead >= 26 {
        let drop = (lead - 26) as u32;
        ((mag >> drop) as u32, mag & ((1u128 << drop) - 1) != 0)
    } else {
        ((mag << (26 - lead)) as u32, false)
    };
    let pre_round = window | (lost || sticky) as u32;
    let word = encode_fp32(negative, exp, pre_round);
    let guard = (pre_round >> 2) & 1 == 1;
    let round_up = guard && ((pre_round & 0b11) != 0 || (pre_round >> 3) & 1 == 1);
    RoundTrace { negative, lzc, exp, pre_round, round_up, word }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntFixup {
    /// Bits `[W-1:25]` of the stage-3 sum.
    pub carry: u32,
    pub negative_products: u32,
    pub high7: u8,
    pub word: u32,
}

/// Stage 4 (integer): rebuild bits `[31:25]` and concatenate.
///
/// Stage 3 adds the 25-bit product patterns and `c[24:0]` as unsigned
/// values, so its bits `[W-1:25]` count the carries out of the low field.
/// Each negative product pattern stands for its value plus `2^25`, so the
/// number of set product sign bits is subtracted:
/// `high = c[31:25] + sum[W-1:25] - #negative (mod 2^7)`.
pub fn int_high_fixup(low_sum: u128, high7: u8, product_signs: &[bool], cfg: &FedpConfig) -> IntFixup {
    const HIGH_BITS: u32 = 7;
    let width = cfg.internal_width();
    let carry = ((low_sum & bitmath::mask(width)) >> MAGNITUDE_BITS) as u32;
    let negative_products = product_signs.iter().filter(|&&s| s).count() as u32;
    let (with_carry, _) = bitmath::kogge_stone_add(high7 as u128, carry as u128, false, HIGH_BITS);
    let borrow = (negative_products as u128).wrapping_neg();
    let (high, _) = bitmath::kogge_stone_add(with_carry, borrow, false, HIGH_BITS);
    let low = (low_sum & ((1 << MAGNITUDE_BITS) - 1)) as u32;
    IntFixup {
        carry,
        negative_products,
        high7: high as u8,
        word: ((high as u32) << MAGNITUDE_BITS) | low,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage4Trace {
    Float(RoundTrace),
    Int(IntFixup),
}

/// Every intermediate of one execution. Stages after a special-value
/// resolution are `None`; the integer path has no stage 2.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub config: FedpConfig,
    pub stage1: Stage1Trace,
    pub stage2: Option<Stage2Trace>,
    pub stage3: Option<Stage3Trace>,
    pub stage4: Option<Stage4Trace>,
    pub result: u32,
}

impl PipelineTrace {
    /// True when some magnitude bit was dropped during alignment or 8-bit
    /// pair summation.
    pub fn information_lost(&self) -> bool {
        self.stage2.as_ref().is_some_and(|s| s.sticky)
    }

    /// Largest alignment shift applied to a nonzero term.
    pub fn max_alignment_shift(&self) -> u32 {
        let (Stage1Trace::Float { products, addend }, Some(s2)) = (&self.stage1, &self.stage2) else {
            return 0;
        };
        products
            .iter()
            .chain(std::iter::once(addend))
            .zip(&s2.selection.shifts)
            .filter(|(t, _)| !t.is_zero())
            .map(|(_, &s)| s)
            .max()
            .unwrap_or(0)
    }

    /// Alignment stayed within the lossless window and no 8-bit pair
    /// dropped bits.
    pub fn within_lossless_window(&self) -> bool {
        let pair_loss = match &self.stage1 {
            Stage1Trace::Float { products, .. } => products.iter().any(|p| p.sticky),
            _ => false,
        };
        !pair_loss && self.max_alignment_shift() <= self.config.lossless_shift_limit()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FedpRequest {
    pub cfg: FedpConfig,
    pub a_words: Vec<u32>,
    pub b_words: Vec<u32>,
    pub c_word: u32,
}

/// Unpacks `words` and keeps the lanes the configuration consumes.
pub fn operand_lanes(words: &[u32], operand: char, cfg: &FedpConfig) -> Result<Vec<DecodedScalar>, PipelineError> {
    let expected = cfg.words_per_operand();
    if words.len() != expected {
        return Err(PipelineError::WordCount { operand, expected, got: words.len() });
    }
    let mut lanes = Vec::with_capacity(expected * cfg.mul_format.lanes_per_word());
    for &w in words {
        let word = PackedWord::new(w, cfg.mul_format).expect("validated multiplicand format");
        lanes.extend(formats::unpack(&word));
    }
    lanes.truncate(cfg.lanes_per_operand());
    Ok(lanes)
}

/// Runs all four stages.
pub fn fedp_execute(req: &FedpRequest) -> Result<(u32, PipelineTrace), PipelineError> {
    let cfg = req.cfg;
    cfg.validate()?;
    let a = operand_lanes(&req.a_words, 'a', &cfg)?;
    let b = operand_lanes(&req.b_words, 'b', &cfg)?;
    let c = formats::decode(req.c_word, cfg.acc_format);

    let stage1 = stage1_multiply(&a, &b, &c, &cfg)?;
    let width = cfg.internal_width();
    let (stage2, stage3, stage4, result) = match &stage1 {
        Stage1Trace::Special { result } => (None, None, None, *result),
        Stage1Trace::Int { products, product_signs, low25, high7 } => {
            let terms: Vec<u128> = products.iter().chain(std::iter::once(low25)).map(|&t| t as u128).collect();
            let s3 = stage3_accumulate(&terms, width);
            let fix = int_high_fixup(s3.raw_sum, *high7, product_signs, &cfg);
            (None, Some(s3), Some(Stage4Trace::Int(fix)), fix.word)
        }
        Stage1Trace::Float { products, addend } => {
            let s2 = stage2_align(products, addend, &cfg);
            let terms: Vec<u128> = s2.aligned.iter().map(|t| t.value).collect();
            let s3 = stage3_accumulate(&terms, width);
            let r = stage4_normalize_round(s3.raw_sum, s2.selection.max_exp, s2.sticky, &cfg);
            (Some(s2), Some(s3), Some(Stage4Trace::Float(r)), r.word)
        }
    };
    let trace = PipelineTrace { config: cfg, stage1, stage2, stage3, stage4, result };
    Ok((result, trace))
}
