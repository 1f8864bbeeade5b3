use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nvlog::harness::{replay_script, WorkloadScript};
use nvlog::logalg::{AlgorithmKind, LogRegion};
use nvlog::pmem::SimMemory;
use nvlog_cli::bench::{bench, BenchConfig};
use nvlog_cli::crashtest::{crashtest, parse_target, resolve_target, CrashtestOptions};
use nvlog_cli::inspect::{inspect, InspectTarget};
use nvlog_cli::write_csv;
use nvlog_cli::ycsb::{ycsb, Variant, YcsbConfig};

const LATENCIES: [u64; 9] = [0, 100, 200, 300, 400, 500, 600, 700, 800];

#[derive(Parser)]
#[command(name = "nvlog", version, about = "Single-round-trip persistent logs and sets on simulated NVM")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Log append benchmark over algorithms, entry sizes and fence latencies.
    #[command(after_help = "CSV columns: algorithm, entry_lines, latency_ns, appends_per_sec_wallclock, \
appends_per_sec_modeled, roundtrips_per_append.\nModeled throughput charges 1 ns per store, 10 ns per \
flush, 20 ns per append and the fence latency per round trip.")]
    Bench(BenchArgs),
    /// Read/update workload on the persistent set and the two-round-trip set.
    #[command(after_help = "CSV columns: variant, set_size, node_lines, latency_ns, read_fraction, ops, \
throughput_modeled, throughput_wallclock.\nModeled throughput adds 5 ns per chain node visited.")]
    Ycsb(YcsbArgs),
    /// Runs a workload script under crash injection. Exit code 0 iff no violations.
    #[command(after_help = "CSV columns: suite, check, op, mode, states, distinct_states, violations.")]
    Crashtest(CrashtestArgs),
    /// Dumps a snapshot: head word, entries and their validity.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct BenchArgs {
    /// Algorithms, comma separated. Defaults to all.
    #[arg(long, value_delimiter = ',')]
    algo: Vec<AlgorithmKind>,
    /// Entry sizes in cache lines: 0.5, 1, 2, 4, 8.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    entry_lines: Vec<f64>,
    /// Added fence latencies in ns. Defaults to 0,100,...,800.
    #[arg(long, value_delimiter = ',')]
    latency_ns: Vec<u64>,
    /// Appends per cell.
    #[arg(long, default_value_t = 20_000)]
    ops: usize,
    #[arg(long, default_value_t = 512)]
    drain_interval: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output file (stdout if absent).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct YcsbArgs {
    /// Variants, comma separated: stps, stps-optimized, two-rounds-set.
    #[arg(long, alias = "variant", value_delimiter = ',', default_value = "stps,two-rounds-set")]
    algo: Vec<Variant>,
    #[arg(long, default_value_t = 0.5)]
    read_fraction: f64,
    #[arg(long, value_delimiter = ',', default_value = "2048")]
    set_size: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    node_lines: Vec<usize>,
    /// Added fence latencies in ns. Defaults to 0,100,...,800.
    #[arg(long, value_delimiter = ',')]
    latency_ns: Vec<u64>,
    #[arg(long, default_value_t = 20_000)]
    ops: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct CrashtestArgs {
    /// Workload script.
    script: PathBuf,
    /// Log algorithm, `stps` or `stps-optimized`. Overrides the script's `algo`.
    #[arg(long)]
    algo: Option<String>,
    /// Check every crash state of every operation.
    #[arg(long, conflicts_with_all = ["samples", "at_op"])]
    exhaustive: bool,
    /// Sampled crash states per script.
    #[arg(long, conflicts_with = "at_op")]
    samples: Option<usize>,
    /// Only crash inside operation I (0-based), exhaustively.
    #[arg(long)]
    at_op: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Per-check summary as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Also save the crash-free final image as a snapshot.
    #[arg(long)]
    snapshot: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    snapshot: PathBuf,
    /// Log algorithm, or `stps` for a set image.
    #[arg(long, default_value = "cso-vb")]
    algo: String,
    #[arg(long, default_value_t = 56)]
    payload_bytes: usize,
    #[arg(long, default_value_t = 0)]
    region_base: usize,
    /// Log region size (the rest of the image if absent).
    #[arg(long)]
    region_size: Option<usize>,
    #[arg(long, default_value_t = 1)]
    node_lines: usize,
    /// Set slots (as many as fit if absent).
    #[arg(long)]
    slots: Option<usize>,
    /// Hex dump of every non-zero line.
    #[arg(long)]
    dump: bool,
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn or_sweep(latencies: &[u64]) -> Vec<u64> {
    if latencies.is_empty() {
        LATENCIES.to_vec()
    } else {
        latencies.to_vec()
    }
}

fn run_bench(a: &BenchArgs) -> Result<()> {
    let algos = if a.algo.is_empty() { AlgorithmKind::ALL.to_vec() } else { a.algo.clone() };
    let explicit = !a.algo.is_empty();
    let mut rows = Vec::new();
    for &algo in &algos {
        for &entry_lines in &a.entry_lines {
            let len = nvlog_cli::bench::payload_for_lines(entry_lines)?;
            if !algo.supports(len) {
                if explicit {
                    bail!("{algo} does not support {entry_lines} line entries");
                }
                eprintln!("skipping {algo} at {entry_lines} lines (unsupported size)");
                continue;
            }
            for latency_ns in or_sweep(&a.latency_ns) {
                let cfg = BenchConfig {
                    algo,
                    entry_lines,
                    latency_ns,
                    iterations: a.ops,
                    drain_interval: a.drain_interval,
                    seed: a.seed,
                };
                rows.push(bench(&cfg)?);
            }
        }
    }
    write_csv(output(&a.csv)?, &rows)?;
    Ok(())
}

fn run_ycsb(a: &YcsbArgs) -> Result<()> {
    let mut rows = Vec::new();
    for &set_size in &a.set_size {
        for &node_lines in &a.node_lines {
            for latency_ns in or_sweep(&a.latency_ns) {
                for &variant in &a.algo {
                    let cfg = YcsbConfig {
                        variant,
                        read_fraction: a.read_fraction,
                        set_size,
                        node_lines,
                        latency_ns,
                        ops: a.ops,
                        seed: a.seed,
                    };
                    rows.push(ycsb(&cfg)?);
                }
            }
        }
    }
    write_csv(output(&a.csv)?, &rows)?;
    Ok(())
}

fn run_crashtest(a: &CrashtestArgs) -> Result<bool> {
    let text = std::fs::read_to_string(&a.script).with_context(|| format!("reading {}", a.script.display()))?;
    let opts = CrashtestOptions {
        algo: a.algo.clone(),
        exhaustive: a.exhaustive,
        samples: a.samples,
        at_op: a.at_op,
        seed: a.seed,
    };
    let report = crashtest(&text, &opts).with_context(|| format!("in {}", a.script.display()))?;
    report.write_text(&mut io::stdout().lock())?;
    if let Some(p) = &a.csv {
        report.write_csv(output(&Some(p.clone()))?)?;
    }
    if let Some(p) = &a.snapshot {
        let script = WorkloadScript::parse(&text)?;
        let target = resolve_target(a.algo.as_deref(), &script)?;
        let mem = replay_script(target, &script).map_err(anyhow::Error::msg)?;
        mem.snapshot_save(p).with_context(|| format!("saving {}", p.display()))?;
    }
    Ok(report.is_clean())
}

fn run_inspect(a: &InspectArgs) -> Result<()> {
    let mem = SimMemory::snapshot_load(&a.snapshot).with_context(|| format!("loading {}", a.snapshot.display()))?;
    let target = match parse_target(&a.algo)? {
        nvlog::harness::SuiteTarget::Set { .. } => InspectTarget::Set { node_lines: a.node_lines, nslots: a.slots },
        nvlog::harness::SuiteTarget::Log(algo) => {
            let size = a.region_size.unwrap_or(mem.capacity().saturating_sub(a.region_base));
            InspectTarget::Log { algo, payload_len: a.payload_bytes, region: Some(LogRegion::new(a.region_base, size)) }
        }
    };
    print!("{}", inspect(&mem, &target, a.dump)?);
    Ok(())
}

fn report_error(e: &anyhow::Error) {
    eprintln!("error: {e:#}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Command::Bench(a) => run_bench(a).map(|_| true),
        Command::Ycsb(a) => run_ycsb(a).map(|_| true),
        Command::Crashtest(a) => run_crashtest(a),
        Command::Inspect(a) => run_inspect(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            report_error(&e);
            ExitCode::from(2)
        }
    }
}
