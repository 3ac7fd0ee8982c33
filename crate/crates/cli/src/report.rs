//! Text and CSV rendering for throughput figures.

use fedp_core::perf::{
    filled_pipeline_throughput, single_cycle_throughput, to_gflops, BackendSpec, PerfError, ThroughputRow,
};

pub fn perf_summary(spec: &BackendSpec) -> Result<String, PerfError> {
    spec.validate()?;
    let single = to_gflops(&single_cycle_throughput(spec)?);
    let filled = to_gflops(&filled_pipeline_throughput(spec));
    Ok(format!(
        "backend:            {}\n\
         flops per issue:    {}\n\
         latency (cycles):   {}\n\
         fmax (MHz):         {}\n\
         single-cycle:       {single:.4} GFLOPS\n\
         filled pipeline:    {filled:.4} GFLOPS\n",
        spec.name,
        spec.flops_per_issue,
        spec.latency_cycles,
        spec.fmax_hz as f64 / 1e6,
    ))
}

pub fn table_text(rows: &[ThroughputRow]) -> String {
    let mut out = format!("{:<12} {:>4} {:>8} {:>8} {:>14} {:>14}\n", "backend", "n", "latency", "flops", "single GFLOPS", "filled GFLOPS");
    for r in rows {
        out.push_str(&format!(
            "{:<12} {:>4} {:>8} {:>8} {:>14.4} {:>14.4}\n",
            r.backend, r.n, r.latency_cycles, r.flops_per_issue, r.single_cycle_gflops, r.filled_pipeline_gflops
        ));
    }
    out
}

pub fn table_csv<W: std::io::Write>(out: W, rows: &[ThroughputRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
