//! Kernel models: hardware process graphs for each benchmark.
//!
//! Every kernel comes in two variants. `Coupled` serializes the data path
//! the way a naive pipeline would: issue a load, wait for the response,
//! consume it, repeat, and block on every store. `Decoupled` splits the
//! kernel into access and execute processes connected by elastic channels,
//! so address generation runs ahead and memory latency is paid once instead
//! of per operation.
//!
//! Builders register consumer processes before producers, which the engine's
//! phase order turns into full-rate transfers through bounded channels.

mod chase;
mod mergesort;
mod spmv;
pub mod synthetic;

use serde::{Deserialize, Serialize};

use crate::engine::{PortModel, SimError, World};
use crate::memsys::FixedLatencyConfig;
use crate::workload::Workload;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Binsearch,
    BinsearchFor,
    Hashtable,
    Spmv,
    MultiSpmv,
    Mergesort,
    MergesortOpt,
}

impl KernelKind {
    pub const ALL: [KernelKind; 7] = [
        KernelKind::Binsearch,
        KernelKind::BinsearchFor,
        KernelKind::Hashtable,
        KernelKind::Spmv,
        KernelKind::MultiSpmv,
        KernelKind::Mergesort,
        KernelKind::MergesortOpt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Binsearch => "binsearch",
            KernelKind::BinsearchFor => "binsearch_for",
            KernelKind::Hashtable => "hashtable",
            KernelKind::Spmv => "spmv",
            KernelKind::MultiSpmv => "multispmv",
            KernelKind::Mergesort => "mergesort",
            KernelKind::MergesortOpt => "mergesort_opt",
        }
    }

    pub fn parse(s: &str) -> Result<KernelKind, String> {
        KernelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown kernel {s:?}"))
    }

    /// Whether the kernel has a read-only irregularly accessed region that a
    /// miss-optimized model may serve.
    pub fn irregular_region(self) -> Option<&'static str> {
        match self {
            KernelKind::Binsearch | KernelKind::BinsearchFor => Some("keys"),
            KernelKind::Hashtable => Some("table"),
            KernelKind::Spmv => Some("vec"),
            KernelKind::MultiSpmv | KernelKind::Mergesort | KernelKind::MergesortOpt => None,
        }
    }
}

impl std::fmt::Display for KernelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Coupled,
    Decoupled,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Coupled => "coupled",
            Variant::Decoupled => "decoupled",
        }
    }

    pub fn parse(s: &str) -> Result<Variant, String> {
        match s {
            "coupled" => Ok(Variant::Coupled),
            "decoupled" => Ok(Variant::Decoupled),
            other => Err(format!("unknown variant {other:?}")),
        }
    }
}

/// Kernel-specific parameters (only multispmv reads them).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelParams {
    pub iterations: u32,
    pub scale: f32,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams { iterations: 1, scale: 1.0 }
    }
}

/// Sizing knobs for the decoupled variants.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct Tuning {
    /// Requests in flight per decoupled channel; sets how much latency the
    /// pointer-chase kernels can hide.
    pub rif: usize,
    /// Queries processed per chunk by the fixed-trip-count search.
    pub chunk: usize,
    /// Capacity of the value and state streams between processes.
    pub stream_capacity: usize,
    /// Keep issuing across merge window boundaries instead of pausing for a
    /// cycle at each one.
    pub prefetch_across_runs: bool,
}

impl Default for Tuning {
    fn default() -> Self {
        Tuning { rif: 128, chunk: 128, stream_capacity: 128, prefetch_across_runs: false }
    }
}

impl Tuning {
    pub fn validate(&self) -> Result<(), String> {
        if self.rif < 1 {
            return Err("rif must be >= 1".into());
        }
        if self.chunk < 1 {
            return Err("chunk must be >= 1".into());
        }
        if self.stream_capacity < 1 {
            return Err("stream_capacity must be >= 1".into());
        }
        Ok(())
    }
}

/// Everything needed to assemble one runnable world.
pub struct BuildSpec<'a> {
    pub kind: KernelKind,
    pub variant: Variant,
    pub workload: &'a Workload,
    pub params: KernelParams,
    pub tuning: Tuning,
    /// Model for the kernel's irregular region (see
    /// [`KernelKind::irregular_region`]); must be fixed-latency for kernels
    /// without one.
    pub irregular: PortModel,
    /// Model for every sequentially streamed region. Sequential regions
    /// include the stored-to output, so they are always fixed-latency.
    pub sequential: FixedLatencyConfig,
    pub seed: u64,
    pub memlog: bool,
}

fn mismatch(kind: KernelKind) -> SimError {
    SimError::Config(format!("workload does not fit kernel {kind}"))
}

pub fn build_world(spec: &BuildSpec) -> Result<World, SimError> {
    if let Err(e) = spec.tuning.validate() {
        return Err(SimError::Config(e));
    }
    if spec.kind.irregular_region().is_none() {
        if let PortModel::Moms(_) = spec.irregular {
            return Err(SimError::Config(format!(
                "kernel {} writes every region it touches; the read-only miss-optimized model cannot serve it",
                spec.kind
            )));
        }
    }
    match (spec.kind, spec.workload) {
        (KernelKind::Binsearch | KernelKind::BinsearchFor, Workload::SortedKeys(w)) => {
            chase::build_binsearch(spec, w)
        }
        (KernelKind::Hashtable, Workload::HashTable(w)) => chase::build_hashtable(spec, w),
        (KernelKind::Spmv | KernelKind::MultiSpmv, Workload::Csr(w)) => spmv::build(spec, w),
        (KernelKind::Mergesort | KernelKind::MergesortOpt, Workload::Sort(w)) => {
            mergesort::build(spec, w)
        }
        _ => Err(mismatch(spec.kind)),
    }
}
