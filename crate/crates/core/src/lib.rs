//! Golden model of a mixed-precision fused dot product unit.
//!
//! Computes `sum(a[i] * b[i]) + c` over packed FP16/BF16/FP8/BF8 operands
//! with FP32 accumulation, or INT8/UINT4 operands with INT32 accumulation,
//! through a bit-level model of a four-stage fused datapath. An independent
//! exact-arithmetic [`oracle`] is the reference for differential testing.

pub mod bitmath;
pub mod contract;
pub mod formats;
pub mod oracle;
pub mod perf;
pub mod pipeline;

pub use formats::{DecodedScalar, FormatKind, FpClass, PackedWord, ScalarFormat};
pub use pipeline::{fedp_execute, FedpConfig, FedpRequest, PipelineError, PipelineTrace};
