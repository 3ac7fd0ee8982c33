use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fedp_cli::gen::{generate, CaseClass};
use fedp_cli::report;
use fedp_cli::run::{run_records, write_report};
use fedp_cli::vectors::{VectorFile, VectorHeader};
use fedp_core::perf::{self, BackendSpec};
use fedp_core::pipeline::DEFAULT_ALIGNMENT_BITS;
use fedp_core::{FedpConfig, FormatKind};

#[derive(Parser)]
#[command(name = "fedp", version, about = "Bit-accurate model of a mixed-precision fused dot product unit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate test vectors with oracle-computed expectations.
    Gen(GenArgs),
    /// Replay a vector file through the datapath.
    Run(RunArgs),
    /// Throughput figures for a backend.
    Perf(PerfArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Multiplicand format: fp16, bf16, fp8, bf8, int8, uint4.
    #[arg(long)]
    format: FormatKind,
    /// Elements per dot product (4, 8, 16 or 32).
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Case class, repeatable. Records cycle through the given classes.
    #[arg(long = "class", default_value = "uniform")]
    classes: Vec<CaseClass>,
    /// Extra alignment bits below the accumulator's units position.
    #[arg(long, default_value_t = DEFAULT_ALIGNMENT_BITS)]
    alignment_bits: u32,
    /// Keep subnormal inputs instead of flushing them to zero.
    #[arg(long)]
    keep_subnormals: bool,
    /// Sum FP8/BF8 lane pairs before alignment.
    #[arg(long)]
    fp8_pair_presum: bool,
    /// Output file; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    file: PathBuf,
    /// Print the stage trace of every failing record as JSON.
    #[arg(long)]
    trace: bool,
    /// Write a per-record CSV report.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct PerfArgs {
    /// FLOPs retired per issue.
    #[arg(long)]
    flops: Option<u64>,
    /// Pipeline latency in cycles.
    #[arg(long)]
    latency: Option<u32>,
    /// Clock frequency in Hz.
    #[arg(long)]
    fmax: Option<u64>,
    /// Use the 2x2 four-element grid at 306.6 MHz with 4-cycle latency.
    #[arg(long, conflicts_with_all = ["flops", "latency", "fmax"])]
    reference_point: bool,
    /// Print the backend comparison table instead.
    #[arg(long)]
    table: bool,
    /// Unit counts for the table.
    #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
    ns: Vec<usize>,
    /// Emit the table as CSV.
    #[arg(long, requires = "table")]
    csv: bool,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Gen(args) => gen(args),
        Command::Run(args) => run(args),
        Command::Perf(args) => perf_cmd(args),
    }
}

fn gen(args: GenArgs) -> Result<ExitCode> {
    let cfg = FedpConfig::new(args.n, args.format)?
        .with_subnormal_flush(!args.keep_subnormals)
        .with_fp8_pair_presum(args.fp8_pair_presum)
        .with_alignment_bits(args.alignment_bits)?;
    let records = generate(&cfg, args.count, args.seed, &args.classes)?;
    let file = VectorFile::new(VectorHeader::from_config(&cfg, Some(args.seed)), records);
    let text = file.to_text();
    match args.out {
        Some(path) => fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&args.file).with_context(|| format!("reading {}", args.file.display()))?;
    let file = VectorFile::parse(&text).with_context(|| format!("parsing {}", args.file.display()))?;
    let Some(cfg) = file.config()? else {
        println!("records: 0  passed: 0  failed: 0");
        return Ok(ExitCode::SUCCESS);
    };
    let (summary, outcomes) = run_records(&cfg, &file.records, false)?;

    if let Some(path) = &args.report {
        let out = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_report(out, &outcomes)?;
    }
    let mut stdout = io::stdout().lock();
    for o in outcomes.iter().filter(|o| !o.verdict.pass) {
        writeln!(
            stdout,
            "FAIL line {}: expected {:08x} got {:08x} ({} ulp{}{})",
            o.line,
            o.expected,
            o.actual,
            if o.verdict.ulps == u64::MAX { "inf".to_string() } else { o.verdict.ulps.to_string() },
            if o.verdict.lossless { ", lossless" } else { "" },
            if o.verdict.cancellation_limited { ", cancellation below window" } else { "" }
        )?;
        if args.trace {
            if let Some(trace) = &o.trace {
                writeln!(stdout, "{}", serde_json::to_string_pretty(trace)?)?;
            }
        }
    }
    writeln!(
        stdout,
        "format: {}  n: {}  records: {}  passed: {}  failed: {}  bit-exact: {:.6}  lossless: {}  worst ulp: {}  cancellation-limited failures: {}",
        cfg.mul_format.kind,
        cfg.n_elements,
        summary.records,
        summary.passed,
        summary.failed(),
        summary.bit_exact_fraction(),
        summary.lossless,
        summary.worst_ulp,
        summary.cancellation_limited_failures
    )?;
    Ok(if summary.all_passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn perf_cmd(args: PerfArgs) -> Result<ExitCode> {
    let default = BackendSpec::reference_design();
    if args.table {
        let fmax = args.fmax.unwrap_or(default.fmax_hz);
        let rows = perf::comparison_table(&args.ns, fmax)?;
        if args.csv {
            report::table_csv(io::stdout().lock(), &rows)?;
        } else {
            print!("{}", report::table_text(&rows));
        }
        return Ok(ExitCode::SUCCESS);
    }
    let spec = if args.reference_point {
        default
    } else {
        if args.flops.is_none() && args.latency.is_none() && args.fmax.is_none() {
            bail!("give --flops/--latency/--fmax or --reference-point");
        }
        BackendSpec {
            name: "custom".into(),
            latency_cycles: args.latency.unwrap_or(default.latency_cycles),
            fmax_hz: args.fmax.unwrap_or(default.fmax_hz),
            flops_per_issue: args.flops.unwrap_or(default.flops_per_issue),
        }
    };
    print!("{}", report::perf_summary(&spec)?);
    Ok(ExitCode::SUCCESS)
}
