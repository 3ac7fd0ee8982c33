//! Throughput arithmetic for a dot product backend.
//!
//! Throughputs are kept as exact rationals (FLOP/s) so that the
//! filled-pipeline figure is exactly `latency` times the single-cycle one.

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PerfError {
    #[error("latency must be at least one cycle")]
    ZeroLatency,
    #[error("{0} must be positive")]
    NonPositive(&'static str),
}

pub type FlopsPerSecond = Ratio<u128>;

pub const REFERENCE_FLOPS_PER_ISSUE: u64 = 32;
pub const REFERENCE_LATENCY_CYCLES: u32 = 4;
pub const REFERENCE_FMAX_HZ: u64 = 306_600_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub name: String,
    pub latency_cycles: u32,
    pub fmax_hz: u64,
    /// FLOPs retired per pipeline issue across the whole unit grid.
    pub flops_per_issue: u64,
}

impl BackendSpec {
    /// 2x2 grid of four-element units: 4 units x (4 mul + 4 add), 4 cycles
    /// at 306.6 MHz.
    pub fn reference_design() -> Self {
        BackendSpec {
            name: "fedp".into(),
            latency_cycles: REFERENCE_LATENCY_CYCLES,
            fmax_hz: REFERENCE_FMAX_HZ,
            flops_per_issue: REFERENCE_FLOPS_PER_ISSUE,
        }
    }

    pub fn validate(&self) -> Result<(), PerfError> {
        if self.latency_cycles == 0 {
            return Err(PerfError::ZeroLatency);
        }
        if self.flops_per_issue == 0 {
            return Err(PerfError::NonPositive("flops per issue"));
        }
        if self.fmax_hz == 0 {
            return Err(PerfError::NonPositive("fmax"));
        }
        Ok(())
    }
}

/// `(FLOPs / latency) * Fmax`.
pub fn single_cycle_throughput(spec: &BackendSpec) -> Result<FlopsPerSecond, PerfError> {
    if spec.latency_cycles == 0 {
        return Err(PerfError::ZeroLatency);
    }
    Ok(filled_pipeline_throughput(spec) / spec.latency_cycles as u128)
}

/// `FLOPs * Fmax`: one issue retiring every cycle.
pub fn filled_pipeline_throughput(spec: &BackendSpec) -> FlopsPerSecond {
    Ratio::from_integer(spec.flops_per_issue as u128 * spec.fmax_hz as u128)
}

pub fn to_gflops(t: &FlopsPerSecond) -> f64 {
    if t.is_zero() {
        return 0.0;
    }
    t.to_f64().unwrap_or(f64::INFINITY) / 1e9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputRow {
    pub backend: String,
    pub n: usize,
    pub latency_cycles: u32,
    pub fmax_hz: u64,
    pub flops_per_issue: u64,
    pub single_cycle_gflops: f64,
    pub filled_pipeline_gflops: f64,
}

/// Backend latencies compared in the throughput table.
pub const REFERENCE_LATENCIES: [(&str, u32); 3] = [("fedp", 4), ("hardfloat", 13), ("xilinx-dsp", 42)];

/// Throughput table over thread counts `ns`, at one clock for every backend
/// and `8 * n` FLOPs per issue (`n` four-element units, 4 mul + 4 add each).
pub fn comparison_table(ns: &[usize], fmax_hz: u64) -> Result<Vec<ThroughputRow>, PerfError> {
    let mut rows = Vec::new();
    for &(backend, latency) in &REFERENCE_LATENCIES {
        for &n in ns {
            let spec = BackendSpec {
                name: backend.into(),
                latency_cycles: latency,
                fmax_hz,
                flops_per_issue: 8 * n as u64,
            };
            spec.validate()?;
            rows.push(ThroughputRow {
                backend: backend.into(),
                n,
                latency_cycles: latency,
                fmax_hz,
                flops_per_issue: spec.flops_per_issue,
                single_cycle_gflops: to_gflops(&single_cycle_throughput(&spec)?),
                filled_pipeline_gflops: to_gflops(&filled_pipeline_throughput(&spec)),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(flops: u64, latency: u32, fmax: u64) -> BackendSpec {
        BackendSpec { name: "t".into(), latency_cycles: latency, fmax_hz: fmax, flops_per_issue: flops }
    }

    #[test]
    fn reference_point() {
        let s = BackendSpec::reference_design();
        assert_eq!(to_gflops(&single_cycle_throughput(&s).unwrap()), 2.4528);
        assert_eq!(to_gflops(&filled_pipeline_throughput(&s)), 9.8112);
    }

    #[test]
    fn latency_one_matches_filled() {
        let s = spec(32, 1, REFERENCE_FMAX_HZ);
        assert_eq!(single_cycle_throughput(&s).unwrap(), filled_pipeline_throughput(&s));
    }

    #[test]
    fn hardfloat_latency() {
        let g = to_gflops(&single_cycle_throughput(&spec(32, 13, REFERENCE_FMAX_HZ)).unwrap());
        assert!((g - 0.754_707_69).abs() < 1e-8, "{g}");
        assert_eq!(format!("{g:.3}"), "0.755");
    }

    #[test]
    fn target_clock() {
        let s = spec(32, 4, 300_000_000);
        assert_eq!(to_gflops(&single_cycle_throughput(&s).unwrap()), 2.4);
        assert_eq!(to_gflops(&filled_pipeline_throughput(&s)), 9.6);
    }

    #[test]
    fn zero_cases() {
        assert_eq!(single_cycle_throughput(&spec(32, 0, 1)), Err(PerfError::ZeroLatency));
        assert_eq!(to_gflops(&filled_pipeline_throughput(&spec(32, 4, 0))), 0.0);
        assert!(spec(32, 4, 0).validate().is_err());
    }

    #[test]
    fn filled_is_latency_times_single() {
        for latency in [1, 3, 4, 13, 42] {
            let s = spec(32, latency, REFERENCE_FMAX_HZ);
            let single = single_cycle_throughput(&s).unwrap();
            assert_eq!(single * latency as u128, filled_pipeline_throughput(&s));
        }
    }

    #[test]
    fn table_shape() {
        let rows = comparison_table(&[4, 8, 16, 32], REFERENCE_FMAX_HZ).unwrap();
        assert_eq!(rows.len(), 12);
        assert_eq!(rows[0].single_cycle_gflops, 2.4528);
    }
}
