//! Accuracy contract between the datapath and the exact oracle.
//!
//! Integer results must match bit for bit. Floating-point results must match
//! bit for bit when no magnitude bit was dropped during alignment, and must
//! lie within one FP32 step of the single-rounded exact sum otherwise.
//!
//! The second clause cannot hold when the dominant terms cancel and the
//! exact result is made of bits that fell below the alignment window: the
//! sticky bit records that something was lost, not how much. Such
//! violations are flagged as `cancellation_limited` so reports can separate
//! them from datapath faults.

use serde::{Deserialize, Serialize};

use crate::formats::{decode, FpClass, ScalarFormat};
use crate::oracle::ulp_distance;
use crate::pipeline::PipelineTrace;

pub const LOSSY_ULP_BOUND: u64 = 1;

/// FP32 significand bits including the hidden one.
const FP32_PRECISION: i32 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub ulps: u64,
    pub lossless: bool,
    pub pass: bool,
    /// Lossy and the exact result lies too close to the window floor for
    /// the truncation error to stay under one step.
    pub cancellation_limited: bool,
}

pub fn evaluate(trace: &PipelineTrace, actual: u32, expected: u32) -> Verdict {
    if trace.config.is_integer() {
        let pass = actual == expected;
        return Verdict { ulps: if pass { 0 } else { u64::MAX }, lossless: true, pass, cancellation_limited: false };
    }
    let ulps = ulp_distance(actual, expected);
    let lossless = trace.within_lossless_window() && !trace.information_lost();
    let pass = if lossless { actual == expected || ulps == 0 } else { ulps <= LOSSY_ULP_BOUND };
    let cancellation_limited = !lossless && below_truncation_bound(trace, expected);
    Verdict { ulps, lossless, pass, cancellation_limited }
}

/// True when one step of `expected` can be smaller than the total weight
/// truncated below the window.
///
/// Each term drops less than one window LSB, so the error is under
/// `terms * 2^lsb`. A result whose exponent is below
/// `lsb + ceil(log2 terms) + 24` has a step no larger than that.
pub fn below_truncation_bound(trace: &PipelineTrace, expected: u32) -> bool {
    let Some(s2) = &trace.stage2 else {
        return false;
    };
    let terms = s2.aligned.len().max(1) as u32;
    let growth = terms.next_power_of_two().trailing_zeros() as i32;
    // aligned field LSB weight, unbiased
    let lsb = s2.selection.max_exp - 151 - trace.config.alignment_bits as i32;
    let d = decode(expected, ScalarFormat::FP32);
    let exp = match d.class {
        FpClass::Zero => return true,
        FpClass::Normal => d.biased_exp as i32 - 127,
        // subnormal results never come out of the flushing datapath
        FpClass::Subnormal => -127,
        // stage 2 only runs on finite operands, so this is an overflow
        FpClass::Inf => 128,
        FpClass::NaN => return false,
    };
    exp < lsb + growth + FP32_PRECISION
}
