//! Replays vector records through the datapath and checks the contract.

use fedp_core::contract::{self, Verdict};
use fedp_core::{fedp_execute, FedpConfig, PipelineError, PipelineTrace};
use rayon::prelude::*;
use serde::Serialize;

use crate::vectors::TestVectorRecord;

#[derive(Debug, Clone, Serialize)]
pub struct RecordOutcome {
    pub line: usize,
    pub actual: u32,
    pub expected: u32,
    pub verdict: Verdict,
    #[serde(skip)]
    pub trace: Option<Box<PipelineTrace>>,
}

impl RecordOutcome {
    pub fn bit_exact(&self) -> bool {
        self.actual == self.expected
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunSummary {
    pub records: usize,
    pub passed: usize,
    pub bit_exact: usize,
    pub lossless: usize,
    /// Failures explained by cancellation below the alignment window.
    pub cancellation_limited_failures: usize,
    /// Largest ulp distance among records with a finite distance.
    pub worst_ulp: u64,
}

impl RunSummary {
    pub fn failed(&self) -> usize {
        self.records - self.passed
    }

    /// Failures not explained by cancellation: datapath faults.
    pub fn unexplained_failures(&self) -> usize {
        self.failed() - self.cancellation_limited_failures
    }

    pub fn all_passed(&self) -> bool {
        self.records == self.passed
    }

    pub fn bit_exact_fraction(&self) -> f64 {
        if self.records == 0 {
            1.0
        } else {
            self.bit_exact as f64 / self.records as f64
        }
    }
}

/// Runs every record. Traces are kept only for failing records unless
/// `keep_traces` is set.
pub fn run_records(
    cfg: &FedpConfig,
    records: &[(usize, TestVectorRecord)],
    keep_traces: bool,
) -> Result<(RunSummary, Vec<RecordOutcome>), PipelineError> {
    let outcomes: Vec<RecordOutcome> = records
        .par_iter()
        .map(|(line, record)| {
            let (actual, trace) = fedp_execute(&record.request(*cfg))?;
            let verdict = contract::evaluate(&trace, actual, record.expected_word);
            let trace = (keep_traces || !verdict.pass).then(|| Box::new(trace));
            Ok(RecordOutcome { line: *line, actual, expected: record.expected_word, verdict, trace })
        })
        .collect::<Result<_, PipelineError>>()?;
    Ok((summarize(&outcomes), outcomes))
}

pub fn summarize(outcomes: &[RecordOutcome]) -> RunSummary {
    let mut s = RunSummary { records: outcomes.len(), ..RunSummary::default() };
    for o in outcomes {
        s.passed += o.verdict.pass as usize;
        s.bit_exact += o.bit_exact() as usize;
        s.lossless += o.verdict.lossless as usize;
        s.cancellation_limited_failures += (!o.verdict.pass && o.verdict.cancellation_limited) as usize;
        if o.verdict.ulps != u64::MAX {
            s.worst_ulp = s.worst_ulp.max(o.verdict.ulps);
        }
    }
    s
}

/// Per-record CSV report.
pub fn write_report<W: std::io::Write>(out: W, outcomes: &[RecordOutcome]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["line", "expected", "actual", "ulps", "lossless", "pass"])?;
    for o in outcomes {
        let ulps = if o.verdict.ulps == u64::MAX { "inf".to_string() } else { o.verdict.ulps.to_string() };
        w.write_record([
            o.line.to_string(),
            format!("{:08x}", o.expected),
            format!("{:08x}", o.actual),
            ulps,
            o.verdict.lossless.to_string(),
            o.verdict.pass.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
