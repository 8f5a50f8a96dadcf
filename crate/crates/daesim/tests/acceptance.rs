//! Release gate. Each test checks one criterion at its stated tolerance and
//! prints a single pass/fail line (visible with `--nocapture`).

use std::time::{Duration, Instant};

use daesim::channel::DecoupleId;
use daesim::config::{preset, IrregularModel, RunConfig, PRESETS};
use daesim::engine::{PortModel, Process, Resource, SimOutcome, Step, View, WorldBuilder};
use daesim::kernel::{synthetic, KernelKind, KernelParams, Variant};
use daesim::memsys::{FixedLatencyConfig, MomsConfig};
use daesim::oracle::oracle_execute;
use daesim::report;
use daesim::run::{execute, run_batch, run_batch_serial, RunOutput};
use daesim::workload::{generate, WorkloadSpec};

fn check(n: u32, what: &str, failures: Vec<String>) {
    if failures.is_empty() {
        println!("criterion {n:2} pass: {what}");
    } else {
        println!("criterion {n:2} FAIL: {what}");
        panic!("criterion {n} failed:\n  {}", failures.join("\n  "));
    }
}

fn desk(kind: KernelKind) -> RunConfig {
    preset(&format!("desk/{}", kind.name())).expect("desk preset exists")
}

fn run_all(jobs: Vec<(String, RunConfig)>) -> Vec<(String, Result<RunOutput, String>)> {
    jobs.iter()
        .map(|(n, _)| n.clone())
        .zip(run_batch(&jobs).into_iter().map(|r| r.map_err(|e| e.to_string())))
        .collect()
}

/// Every kernel x variant x memory model on desk presets finishes with the
/// oracle's memory image, bit for bit. The decoupled fixed-trip-count
/// search is the chunked pipeline, so the chunked shape is part of the
/// matrix; the miss-optimized model applies where the kernel has an
/// irregular region.
#[test]
fn criterion_01_functional_equivalence() {
    let t0 = Instant::now();
    let mut jobs = Vec::new();
    for kind in KernelKind::ALL {
        for variant in [Variant::Coupled, Variant::Decoupled] {
            let mut models = vec![IrregularModel::Fixed];
            if kind.irregular_region().is_some() {
                models.push(IrregularModel::Moms);
            }
            for model in models {
                let mut cfg = desk(kind);
                cfg.variant = variant;
                cfg.memory.irregular = model;
                jobs.push((format!("{}/{}/{}", kind.name(), variant.name(), model.name()), cfg));
            }
        }
    }
    assert_eq!(jobs.len(), 22);
    let mut failures = Vec::new();
    for (name, out) in run_all(jobs) {
        match out {
            Ok(o) if o.record.outcome == "completed" && o.image_ok => {}
            Ok(o) => failures.push(format!(
                "{name}: outcome {}, image match {}",
                o.record.outcome, o.image_ok
            )),
            Err(e) => failures.push(format!("{name}: {e}")),
        }
    }
    let elapsed = t0.elapsed();
    if elapsed > Duration::from_secs(120) {
        failures.push(format!("matrix took {elapsed:?}, budget is 2 minutes"));
    }
    check(1, "all 22 desk configurations reproduce the oracle image bit-exactly", failures);
}

/// The serial reference cost of a sparse product is exactly its nonzero
/// count, whatever the shape.
#[test]
fn criterion_02_spmv_golden_equals_nnz() {
    let mut failures = Vec::new();
    for i in 0u64..20 {
        let rows = 1 + (i * 13) % 41;
        let cols = 1 + (i * 29) % 303;
        let nnz = 1 + (i * 7919) % (rows * cols).min(500);
        let spec = WorkloadSpec::Csr { rows, cols, nnz };
        let w = generate(&spec, 1000 + i).expect("csr generates");
        let r = oracle_execute(KernelKind::Spmv, &w, &KernelParams::default()).expect("oracle");
        if r.golden_cycles != nnz {
            failures.push(format!("{rows}x{cols} nnz={nnz}: golden {}", r.golden_cycles));
        }
    }
    check(2, "spmv golden cycles equal nnz on 20 random matrices", failures);
}

/// Memory traffic of the sorts follows the closed forms: 2n*log2(n) - n
/// operations of each kind with the copy pass, n*log2(n) without it, and
/// dropping the copy roughly halves the cycle count at n = 4096.
#[test]
fn criterion_03_mergesort_traffic_formulas() {
    let mut failures = Vec::new();
    for n in [8u64, 64, 1024] {
        let log = n.ilog2() as u64;
        for (kind, want) in
            [(KernelKind::Mergesort, 2 * n * log - n), (KernelKind::MergesortOpt, n * log)]
        {
            let mut cfg = desk(kind);
            cfg.workload = WorkloadSpec::Sort { n };
            match execute("traffic", &cfg) {
                Ok(o) if o.record.loads == want && o.record.stores == want => {}
                Ok(o) => failures.push(format!(
                    "{} n={n}: {} loads, {} stores, formula says {want}",
                    kind.name(),
                    o.record.loads,
                    o.record.stores
                )),
                Err(e) => failures.push(format!("{} n={n}: {e}", kind.name())),
            }
        }
    }
    let cycles = |kind: KernelKind| -> Result<u64, String> {
        let mut cfg = desk(kind);
        cfg.workload = WorkloadSpec::Sort { n: 4096 };
        Ok(execute("ratio", &cfg).map_err(|e| e.to_string())?.record.cycles)
    };
    match (cycles(KernelKind::Mergesort), cycles(KernelKind::MergesortOpt)) {
        (Ok(plain), Ok(opt)) => {
            let ratio = plain as f64 / opt as f64;
            if !(1.7..=2.1).contains(&ratio) {
                failures.push(format!("n=4096 plain/opt cycle ratio {ratio:.3} not in 1.7..2.1"));
            }
        }
        (a, b) => failures.push(format!("ratio runs failed: {a:?} {b:?}")),
    }
    check(3, "sort traffic matches the closed forms and the copy pass costs ~2x", failures);
}

/// No configuration beats its own serial reference.
#[test]
fn criterion_04_golden_lower_bound() {
    let jobs: Vec<(String, RunConfig)> =
        PRESETS.iter().map(|n| (n.to_string(), preset(n).expect("preset"))).collect();
    let mut failures = Vec::new();
    for (name, out) in run_all(jobs) {
        match out {
            Ok(o) if o.record.outcome == "completed" && o.record.cycles >= o.record.golden => {}
            Ok(o) => failures.push(format!(
                "{name}: {} cycles vs golden {} ({})",
                o.record.cycles, o.record.golden, o.record.outcome
            )),
            Err(e) => failures.push(format!("{name}: {e}")),
        }
    }
    check(4, "cycles >= golden on every shipped preset", failures);
}

/// Run-ahead hides a 100-cycle memory under the stated overhead budgets.
#[test]
fn criterion_05_latency_hiding() {
    let mut failures = Vec::new();
    for (kind, budget) in [(KernelKind::BinsearchFor, 25.0), (KernelKind::Hashtable, 30.0)] {
        let mut cfg = desk(kind);
        cfg.tuning.chunk = 128;
        cfg.tuning.rif = 128;
        match execute("hiding", &cfg) {
            Ok(o) if o.record.outcome == "completed" && o.record.overhead_pct <= budget => {}
            Ok(o) => failures.push(format!(
                "{}: overhead {:.2}% over the {budget}% budget",
                kind.name(),
                o.record.overhead_pct
            )),
            Err(e) => failures.push(format!("{}: {e}", kind.name())),
        }
    }
    check(5, "chunked search <= 25% and hash lookup <= 30% over golden at latency 100", failures);
}

/// Decoupling the pointer chases buys at least 20x in cycles.
#[test]
fn criterion_06_decoupled_speedup() {
    let mut failures = Vec::new();
    for kind in [KernelKind::Binsearch, KernelKind::BinsearchFor, KernelKind::Hashtable] {
        let mut coupled = desk(kind);
        coupled.variant = Variant::Coupled;
        let jobs = vec![
            (format!("{}/coupled", kind.name()), coupled),
            (format!("{}/decoupled", kind.name()), desk(kind)),
        ];
        let rows = run_batch(&jobs);
        match (&rows[0], &rows[1]) {
            (Ok(c), Ok(d)) => {
                let speedup = c.record.cycles as f64 / d.record.cycles as f64;
                if speedup < 20.0 {
                    failures.push(format!("{}: speedup {speedup:.1} < 20", kind.name()));
                }
            }
            (a, b) => failures.push(format!(
                "{}: {:?} {:?}",
                kind.name(),
                a.as_ref().err(),
                b.as_ref().err()
            )),
        }
    }
    check(6, "decoupled vs coupled >= 20x on the three pointer chases", failures);
}

/// A coupled chase pays the full round trip per dependent load.
#[test]
fn criterion_07_coupled_latency_floor() {
    let mut jobs = Vec::new();
    for family in ["desk", "ref"] {
        for kind in [KernelKind::Binsearch, KernelKind::BinsearchFor, KernelKind::Hashtable] {
            let name = format!("{family}/{}", kind.name());
            let mut cfg = preset(&name).expect("preset");
            cfg.variant = Variant::Coupled;
            jobs.push((name, cfg));
        }
    }
    let mut failures = Vec::new();
    for (name, out) in run_all(jobs) {
        match out {
            Ok(o) => {
                let floor = o.record.serialized * o.record.latency;
                if o.record.outcome != "completed" || o.record.cycles < floor {
                    failures.push(format!(
                        "{name}: {} cycles below the {floor} floor ({})",
                        o.record.cycles, o.record.outcome
                    ));
                }
            }
            Err(e) => failures.push(format!("{name}: {e}")),
        }
    }
    check(7, "coupled chases never beat dependent_loads x latency", failures);
}

struct LineToucher {
    ch: DecoupleId,
    base: u64,
    lines: u64,
    total: u64,
    sent: u64,
}

impl Process for LineToucher {
    fn name(&self) -> &str {
        "toucher"
    }

    fn step(&mut self, view: &mut View) -> Step {
        if self.sent == self.total {
            return Step::done();
        }
        let addr = self.base + (self.sent % self.lines) * 64;
        if view.decouple_request(self.ch, addr) {
            self.sent += 1;
            Step::moved()
        } else {
            Step::blocked(Resource::Decouple(self.ch))
        }
    }
}

struct LineSink {
    ch: DecoupleId,
    left: u64,
}

impl Process for LineSink {
    fn name(&self) -> &str {
        "sink"
    }

    fn step(&mut self, view: &mut View) -> Step {
        if self.left == 0 {
            return Step::done();
        }
        match view.decouple_response(self.ch) {
            Some(_) => {
                self.left -= 1;
                Step::moved()
            }
            None => Step::blocked(Resource::Decouple(self.ch)),
        }
    }
}

/// Touch every line of an in-capacity region exactly k times at full issue
/// rate: one external fetch per distinct line, never more than 64 external
/// reads in flight.
#[test]
fn criterion_08_moms_conservation() {
    let lines = 512u64;
    let k = 3u64;
    let total = lines * k;
    let moms = MomsConfig::default();
    assert!(lines * 64 <= moms.cache_bytes, "trace must fit in the cache");

    let mut b = WorldBuilder::new(1);
    let port = b.region("arr", 0x1000_0000, vec![0u32; (lines * 16) as usize], PortModel::Moms(moms));
    let ch = b.decouple("ld", port, 256);
    let sink = b.spawn(Box::new(LineSink { ch, left: total }));
    let toucher = b.spawn(Box::new(LineToucher { ch, base: 0x1000_0000, lines, total, sent: 0 }));
    b.bind_decouple(ch, toucher, sink);
    let mut world = b.build().expect("world builds");
    let r = world.run_until_quiescent(1_000_000).expect("run");

    let mut failures = Vec::new();
    if r.outcome != SimOutcome::Completed {
        failures.push(format!("outcome {:?}", r.outcome));
    }
    let stats = r.stats.ports[0].moms.as_ref().expect("moms stats");
    if stats.fetches != lines {
        failures.push(format!("{} fetches for {lines} distinct lines", stats.fetches));
    }
    if u64::from(stats.peak_external_reads) > 64 {
        failures.push(format!("{} external reads in flight", stats.peak_external_reads));
    }
    if stats.hits + stats.merges + stats.fetches != total {
        failures.push(format!(
            "hits {} + merges {} + fetches {} != {total} touches",
            stats.hits, stats.merges, stats.fetches
        ));
    }
    check(8, "one fetch per distinct line, external reads capped at 64", failures);
}

/// Store buffering overlaps a write per cycle; without it every store pays
/// the full write latency.
#[test]
fn criterion_09_store_overlap() {
    let mut failures = Vec::new();
    let model = FixedLatencyConfig::latency(100);
    let mut world = synthetic::store_loop(500, true, model, 1).expect("builds");
    let r = world.run_until_quiescent(100_000).expect("runs");
    if r.outcome != SimOutcome::Completed || r.stats.cycles > 610 {
        failures.push(format!("overlapped: {} cycles, budget 500 + 100 + 10", r.stats.cycles));
    }
    let mut world = synthetic::store_loop(50, false, model, 1).expect("builds");
    let r = world.run_until_quiescent(100_000).expect("runs");
    if r.outcome != SimOutcome::Completed || r.stats.cycles < 5_000 {
        failures.push(format!("serialized: {} cycles, floor 50 x 100", r.stats.cycles));
    }
    check(9, "overlapped stores cost ~n + latency; serialized stores cost n x latency", failures);
}

/// The shipped reference table is arithmetically self-consistent: each time
/// equals cycles x path within the rounding envelope of its two-decimal
/// inputs (at least +/-0.1 us), and the headline binsearch speedup is 67.41
/// within +/-0.01.
#[test]
fn criterion_10_reference_arithmetic() {
    let mut failures = Vec::new();
    for c in report::check_arithmetic() {
        if !c.pass {
            failures.push(format!(
                "{} {}: {:.3} us vs {} us (tolerance {:.3})",
                c.kernel, c.column, c.computed_us, c.published_us, c.tolerance_us
            ));
        }
    }
    let speedup = report::binsearch_published_speedup();
    if (speedup - 67.41).abs() > 0.01 {
        failures.push(format!("binsearch speedup {speedup:.4} vs 67.41"));
    }
    check(10, "reference times reproduce from cycles x path; binsearch speedup 67.41", failures);
}

/// A kernel whose channels can never balance is reported as deadlocked,
/// quickly.
#[test]
fn criterion_11_deadlock_detection() {
    let mut world =
        synthetic::imbalanced(FixedLatencyConfig::latency(100), 1).expect("builds");
    let r = world.run_until_quiescent(10_000).expect("runs");
    let mut failures = Vec::new();
    match &r.outcome {
        SimOutcome::Deadlocked { stuck } if !stuck.is_empty() && r.stats.cycles < 10_000 => {}
        other => failures.push(format!("outcome {:?} after {} cycles", other, r.stats.cycles)),
    }
    check(11, "starved channels deadlock in under 10,000 cycles", failures);
}

/// The same seeds give byte-identical reports, across repeats and across
/// the parallel and serial batch paths.
#[test]
fn criterion_12_deterministic_reports() {
    let mut jobs = Vec::new();
    for name in ["desk/spmv", "desk/mergesort", "desk/hashtable"] {
        let mut cfg = preset(name).expect("preset");
        cfg.memory.jitter = 7;
        jobs.push((name.to_string(), cfg));
    }
    let mut moms = preset("desk/binsearch").expect("preset");
    moms.memory.irregular = IrregularModel::Moms;
    jobs.push(("desk/binsearch".into(), moms));

    let csv = |outs: Vec<Result<RunOutput, daesim::engine::SimError>>| -> Vec<u8> {
        let rows: Vec<_> = outs.into_iter().map(|o| o.expect("runs").record).collect();
        let mut buf = Vec::new();
        report::write_csv(&rows, &mut buf).expect("csv");
        buf
    };
    let first = csv(run_batch(&jobs));
    let second = csv(run_batch(&jobs));
    let serial = csv(run_batch_serial(&jobs));
    let mut failures = Vec::new();
    if first != second {
        failures.push("repeat run differs".into());
    }
    if first != serial {
        failures.push("serial batch differs from parallel".into());
    }
    check(12, "same seed gives byte-identical CSV, parallel or serial", failures);
}
