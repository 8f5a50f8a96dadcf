use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use daesim::config::{preset, IrregularModel, RunConfig, PRESETS};
use daesim::engine::SimError;
use daesim::kernel::Variant;
use daesim::memsys::write_memlog;
use daesim::oracle::write_counts;
use daesim::report;
use daesim::run::{execute, execute_on, run_batch, RunOutput};
use daesim::workload::{generate, Workload, WorkloadSpec};

/// Exit codes: 0 ok, 1 engine fault, 2 deadlock, 3 cycle limit,
/// 4 oracle mismatch, 5 configuration error, 6 channel imbalance.
#[derive(Parser)]
#[command(name = "daesim", version, about = "Cycle-level simulator for decoupled access-execute accelerators")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a workload file
    Gen {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        overrides: Overrides,
        /// Output path (default: derived from the run name)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the effective run configuration as TOML
        #[arg(long)]
        emit_config: Option<PathBuf>,
    },
    /// Simulate one configuration and verify it against the oracle
    Run {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        overrides: Overrides,
        /// Use a workload file from `gen` instead of generating
        #[arg(long)]
        workload: Option<PathBuf>,
        /// Append the report row to a CSV file
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record per-request memory traffic to a CSV file
        #[arg(long)]
        memlog: Option<PathBuf>,
    },
    /// Compare two run reports, or audit the reference measurements
    Compare {
        /// Baseline report CSV
        #[arg(required_unless_present = "published")]
        baseline: Option<PathBuf>,
        /// Subject report CSV
        #[arg(required_unless_present = "published")]
        subject: Option<PathBuf>,
        /// Clock periods in ns as BASE,SUBJECT to get time speedups
        #[arg(long, value_delimiter = ',')]
        periods: Option<Vec<f64>>,
        /// Recompute the shipped reference table's times from its
        /// cycles and paths and check them against the printed values
        #[arg(long, conflicts_with_all = ["baseline", "subject", "periods"])]
        published: bool,
    },
    /// Run a latency x variant grid and emit chart data
    Sweep {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        overrides: Overrides,
        /// Fixed latencies to sweep
        #[arg(long, value_delimiter = ',', default_value = "1,10,100,1000")]
        latencies: Vec<u64>,
        /// Variants to sweep
        #[arg(long, value_delimiter = ',', value_parser = Variant::parse,
              default_value = "coupled,decoupled")]
        variants: Vec<Variant>,
        /// Write the rows as CSV here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in presets
    Presets,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Named preset (see `daesim presets`)
    #[arg(long)]
    preset: Option<String>,
    /// TOML run configuration file
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct Overrides {
    /// Workload and jitter seed
    #[arg(long)]
    seed: Option<u64>,
    /// coupled or decoupled
    #[arg(long, value_parser = Variant::parse)]
    variant: Option<Variant>,
    /// Read/write latency of the fixed model, in cycles
    #[arg(long)]
    latency: Option<u64>,
    /// Model for the kernel's irregular region
    #[arg(long, value_parser = parse_memory)]
    memory: Option<IrregularModel>,
    /// Decoupled requests in flight
    #[arg(long)]
    rif: Option<usize>,
    /// Queries per chunk for the fixed-trip-count search
    #[arg(long)]
    chunk: Option<usize>,
    /// Abort the run after this many cycles
    #[arg(long)]
    max_cycles: Option<u64>,
}

fn parse_memory(s: &str) -> Result<IrregularModel, String> {
    match s {
        "fixed" => Ok(IrregularModel::Fixed),
        "moms" => Ok(IrregularModel::Moms),
        other => Err(format!("unknown memory model {other:?}; use fixed or moms")),
    }
}

const OK: u8 = 0;
const FAULT: u8 = 1;
const DEADLOCK: u8 = 2;
const CYCLE_LIMIT: u8 = 3;
const ORACLE_MISMATCH: u8 = 4;
const CONFIG_ERROR: u8 = 5;
const IMBALANCE: u8 = 6;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("DAESIM_LOG")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { CONFIG_ERROR } else { OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = match cli.cmd {
        Cmd::Gen { source, overrides, out, emit_config } => gen(source, overrides, out, emit_config),
        Cmd::Run { source, overrides, workload, out, memlog } => {
            run(source, overrides, workload, out, memlog)
        }
        Cmd::Compare { baseline, subject, periods, published } => {
            cmd_compare(baseline, subject, periods, published)
        }
        Cmd::Sweep { source, overrides, latencies, variants, out } => {
            sweep(source, overrides, latencies, variants, out)
        }
        Cmd::Presets => presets(),
    };
    ExitCode::from(code.unwrap_or_else(|msg| {
        eprintln!("error: {msg}");
        CONFIG_ERROR
    }))
}

/// Resolve the configuration source and apply flag overrides.
fn load(source: &Source, ov: &Overrides) -> Result<(String, RunConfig), String> {
    let (name, mut cfg) = match (&source.preset, &source.config) {
        (Some(p), None) => (p.clone(), preset(p)?),
        (None, Some(path)) => {
            let text =
                fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let name = path.file_stem().map_or_else(
                || path.display().to_string(),
                |s| s.to_string_lossy().into_owned(),
            );
            (name, RunConfig::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))?)
        }
        _ => unreachable!("clap requires exactly one of --preset/--config"),
    };
    if let Some(seed) = ov.seed {
        cfg.seed = seed;
    }
    if let Some(v) = ov.variant {
        cfg.variant = v;
    }
    if let Some(l) = ov.latency {
        cfg.memory.latency = l;
    }
    if let Some(m) = ov.memory {
        cfg.memory.irregular = m;
    }
    if let Some(rif) = ov.rif {
        cfg.tuning.rif = rif;
    }
    if let Some(chunk) = ov.chunk {
        cfg.tuning.chunk = chunk;
    }
    if let Some(mc) = ov.max_cycles {
        cfg.max_cycles = Some(mc);
    }
    cfg.tuning.validate()?;
    if cfg.memory.irregular == IrregularModel::Moms {
        cfg.memory.moms.validate()?;
        if cfg.kernel.irregular_region().is_none() {
            return Err(format!("{} has no irregular region for the moms model", cfg.kernel));
        }
    }
    Ok((name, cfg))
}

fn describe(spec: &WorkloadSpec) -> String {
    match spec {
        WorkloadSpec::SortedKeys { n, probes } => format!("sorted keys n={n} probes={probes}"),
        WorkloadSpec::HashTable { keys, buckets, lookups } => {
            format!("hash table keys={keys} buckets={buckets} lookups={lookups}")
        }
        WorkloadSpec::Csr { rows, cols, nnz } => format!("csr {rows}x{cols} nnz={nnz}"),
        WorkloadSpec::Sort { n } => format!("sort n={n}"),
    }
}

fn gen(
    source: Source,
    overrides: Overrides,
    out: Option<PathBuf>,
    emit_config: Option<PathBuf>,
) -> Result<u8, String> {
    let (name, cfg) = load(&source, &overrides)?;
    let workload = generate(&cfg.workload, cfg.seed)?;
    let path =
        out.unwrap_or_else(|| PathBuf::from(format!("{}.workload", name.replace('/', "_"))));
    let bytes = workload.to_bytes();
    fs::write(&path, &bytes).map_err(|e| format!("{}: {e}", path.display()))?;
    println!("wrote {} ({} bytes, {})", path.display(), bytes.len(), describe(&cfg.workload));
    if let Some(cfg_path) = emit_config {
        fs::write(&cfg_path, cfg.to_toml()).map_err(|e| format!("{}: {e}", cfg_path.display()))?;
        println!("wrote {}", cfg_path.display());
    }
    Ok(OK)
}

fn exit_for(out: &RunOutput) -> u8 {
    match out.record.outcome.as_str() {
        "deadlocked" => DEADLOCK,
        "cycle_limit" => CYCLE_LIMIT,
        _ if !out.record.oracle_match => ORACLE_MISMATCH,
        _ if !out.record.balanced => IMBALANCE,
        _ => OK,
    }
}

fn describe_failure(out: &RunOutput) {
    match out.record.outcome.as_str() {
        "deadlocked" => {
            if let daesim::engine::SimOutcome::Deadlocked { stuck } = &out.result.outcome {
                eprintln!("deadlock: no progress; stuck processes: {}", stuck.join(", "));
            }
        }
        "cycle_limit" => eprintln!("cycle limit reached after {} cycles", out.record.cycles),
        _ if !out.record.oracle_match => eprintln!(
            "oracle mismatch: memory image or operation counts diverge on region {}",
            out.oracle.expected.region
        ),
        _ if !out.record.balanced => {
            if let Some(v) = &out.violation {
                eprintln!(
                    "channel imbalance: {} sent {} but {} were consumed",
                    v.channel, v.sent, v.received
                );
            }
        }
        _ => {}
    }
}

fn run(
    source: Source,
    overrides: Overrides,
    workload: Option<PathBuf>,
    out: Option<PathBuf>,
    memlog: Option<PathBuf>,
) -> Result<u8, String> {
    let (name, mut cfg) = load(&source, &overrides)?;
    cfg.memlog = memlog.is_some();
    let result = match &workload {
        Some(path) => {
            let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let w = Workload::from_bytes(&bytes).map_err(|e| format!("{}: {e}", path.display()))?;
            execute_on(&name, &cfg, &w)
        }
        None => execute(&name, &cfg),
    };
    let output = match result {
        Ok(o) => o,
        Err(SimError::Config(msg)) => return Err(msg),
        Err(e @ SimError::Fault { .. }) => {
            eprintln!("{e}");
            return Ok(FAULT);
        }
    };
    print!("{}", report::render_markdown(std::slice::from_ref(&output.record)));
    println!(
        "cycles {} vs golden {} ({:+.2}%), serialized estimate {}",
        output.record.cycles,
        output.record.golden,
        output.record.overhead_pct,
        output.record.serialized
    );
    if let Some(path) = out {
        let mut rows = match fs::read_to_string(&path) {
            Ok(text) => report::read_csv(&text).map_err(|e| format!("{}: {e}", path.display()))?,
            Err(_) => Vec::new(),
        };
        rows.push(output.record.clone());
        write_report(&path, &rows)?;
        println!("appended to {}", path.display());
    }
    if let Some(path) = memlog {
        let rows = output.memlog.as_deref().unwrap_or(&[]);
        let mut buf = Vec::new();
        write_memlog(rows, &mut buf).map_err(|e| e.to_string())?;
        fs::write(&path, buf).map_err(|e| format!("{}: {e}", path.display()))?;
        println!("memory trace: {} rows in {}", rows.len(), path.display());
    }
    if log::log_enabled!(log::Level::Info) {
        let mut buf = Vec::new();
        write_counts(&output.oracle, &mut buf).ok();
        log::info!("oracle counts:\n{}", String::from_utf8_lossy(&buf));
    }
    describe_failure(&output);
    Ok(exit_for(&output))
}

fn write_report(path: &Path, rows: &[report::RunRecord]) -> Result<(), String> {
    let mut buf = Vec::new();
    report::write_csv(rows, &mut buf).map_err(|e| e.to_string())?;
    fs::write(path, buf).map_err(|e| format!("{}: {e}", path.display()))
}

fn cmd_compare(
    baseline: Option<PathBuf>,
    subject: Option<PathBuf>,
    periods: Option<Vec<f64>>,
    published: bool,
) -> Result<u8, String> {
    if published {
        let checks = report::check_arithmetic();
        print!("{}", report::render_arithmetic(&checks));
        let speedup = report::binsearch_published_speedup();
        let speedup_ok = (speedup - 67.41).abs() <= 0.01;
        println!("binsearch time speedup from reference times: {speedup:.4} (printed 67.41)");
        let all = checks.iter().all(|c| c.pass) && speedup_ok;
        println!("{}", if all { "all rows reproduce" } else { "MISMATCH" });
        return Ok(if all { OK } else { ORACLE_MISMATCH });
    }
    let periods = match periods.as_deref() {
        None => None,
        Some([b, s]) => Some((*b, *s)),
        Some(other) => {
            return Err(format!("--periods takes BASE,SUBJECT (two values, got {})", other.len()))
        }
    };
    let read = |path: &PathBuf| -> Result<Vec<report::RunRecord>, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        report::read_csv(&text).map_err(|e| format!("{}: {e}", path.display()))
    };
    let base = read(&baseline.expect("clap requires baseline without --published"))?;
    let subj = read(&subject.expect("clap requires subject without --published"))?;
    let rows = report::compare(&base, &subj, periods)?;
    print!("{}", report::render_comparison(&rows));
    Ok(OK)
}

fn sweep(
    source: Source,
    overrides: Overrides,
    latencies: Vec<u64>,
    variants: Vec<Variant>,
    out: Option<PathBuf>,
) -> Result<u8, String> {
    let (name, base) = load(&source, &overrides)?;
    if latencies.is_empty() {
        return Err("--latencies needs at least one value".into());
    }
    let mut jobs = Vec::new();
    for &variant in &variants {
        for &latency in &latencies {
            let mut cfg = base.clone();
            cfg.variant = variant;
            cfg.memory.latency = latency;
            jobs.push((format!("{name}/{}@{latency}", variant.name()), cfg));
        }
    }
    let mut worst = OK;
    let mut records = Vec::new();
    for (job, outcome) in jobs.iter().zip(run_batch(&jobs)) {
        match outcome {
            Ok(o) => {
                worst = worst.max(exit_for(&o));
                describe_failure(&o);
                records.push(o.record);
            }
            Err(SimError::Config(msg)) => return Err(format!("{}: {msg}", job.0)),
            Err(e @ SimError::Fault { .. }) => {
                eprintln!("{}: {e}", job.0);
                worst = worst.max(FAULT);
            }
        }
    }
    print!("{}", report::render_markdown(&records));
    if let Some(path) = out {
        write_report(&path, &records)?;
        println!("wrote {}", path.display());
    }
    Ok(worst)
}

fn presets() -> Result<u8, String> {
    for name in PRESETS {
        let cfg = preset(name)?;
        println!("{name:<22} {}", describe(&cfg.workload));
    }
    Ok(OK)
}
