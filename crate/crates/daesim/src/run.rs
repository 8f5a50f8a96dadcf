//! End-to-end execution: generate the workload, consult the oracle, build
//! and run the world, then flatten everything into a report row.

use crate::config::RunConfig;
use crate::engine::{SimError, SimOutcome, SimResult};
use crate::kernel::build_world;
use crate::memsys::MemLogRow;
use crate::oracle::{check_balance, oracle_execute, OracleReport, Violation};
use crate::report::RunRecord;
use crate::workload::{generate, Workload};

pub struct RunOutput {
    pub record: RunRecord,
    pub result: SimResult,
    pub oracle: OracleReport,
    pub violation: Option<Violation>,
    pub memlog: Option<Vec<MemLogRow>>,
    /// The final memory image alone matched the oracle (`oracle_match` also
    /// requires the operation counts to agree).
    pub image_ok: bool,
}

pub fn outcome_name(outcome: &SimOutcome) -> &'static str {
    match outcome {
        SimOutcome::Completed => "completed",
        SimOutcome::Deadlocked { .. } => "deadlocked",
        SimOutcome::CycleLimit => "cycle_limit",
    }
}

/// Run one configuration to completion and verify it against the oracle.
/// `name` only labels the report row.
pub fn execute(name: &str, cfg: &RunConfig) -> Result<RunOutput, SimError> {
    let workload = generate(&cfg.workload, cfg.seed).map_err(SimError::Config)?;
    execute_on(name, cfg, &workload)
}

/// Like [`execute`], but on an already materialized workload (for example
/// one read back from a `gen` file).
pub fn execute_on(name: &str, cfg: &RunConfig, workload: &Workload) -> Result<RunOutput, SimError> {
    let oracle = oracle_execute(cfg.kernel, workload, &cfg.params).map_err(SimError::Config)?;
    let mut world = build_world(&cfg.build_spec(workload))?;
    let result = world.run_until_quiescent(cfg.cycle_limit())?;
    let memlog = world.take_memlog();

    let completed = result.outcome == SimOutcome::Completed;
    let image_ok = world
        .region_data(&oracle.expected.region)
        .is_some_and(|got| got == oracle.expected.words.as_slice());
    let counts_ok = oracle.counts.iter().all(|c| {
        result
            .stats
            .ports
            .iter()
            .find(|p| p.name == c.region)
            .is_some_and(|p| p.reads == c.loads && p.writes == c.stores)
    });
    let violation = check_balance(&result.stats);

    let golden = oracle.golden_cycles;
    let overhead_pct = if golden > 0 && completed {
        (result.stats.cycles as f64 - golden as f64) / golden as f64 * 100.0
    } else {
        0.0
    };
    let loads: u64 = result.stats.ports.iter().map(|p| p.reads).sum();
    let stores: u64 = result.stats.ports.iter().map(|p| p.writes).sum();

    let record = RunRecord {
        name: name.to_string(),
        kernel: cfg.kernel.name().to_string(),
        variant: cfg.variant.name().to_string(),
        irregular: cfg.memory.irregular.name().to_string(),
        latency: cfg.memory.latency,
        seed: cfg.seed,
        cycles: result.stats.cycles,
        golden,
        serialized: oracle.serialized_loads,
        overhead_pct,
        outcome: outcome_name(&result.outcome).to_string(),
        oracle_match: completed && image_ok && counts_ok,
        balanced: violation.is_none(),
        loads,
        stores,
    };
    Ok(RunOutput { record, result, oracle, violation, memlog, image_ok })
}

/// Run a batch of labeled configurations, one world per job. With the
/// `parallel` feature the jobs fan out across threads; rows come back in
/// job order either way.
pub fn run_batch(jobs: &[(String, RunConfig)]) -> Vec<Result<RunOutput, SimError>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        jobs.par_iter().map(|(name, cfg)| execute(name, cfg)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_batch_serial(jobs)
    }
}

pub fn run_batch_serial(jobs: &[(String, RunConfig)]) -> Vec<Result<RunOutput, SimError>> {
    jobs.iter().map(|(name, cfg)| execute(name, cfg)).collect()
}
