//! Run configurations: the TOML schema the CLI consumes, plus a catalog of
//! named presets. `desk/*` presets are sized to finish in seconds; `ref/*`
//! presets use the workload sizes of the published evaluation.

use serde::{Deserialize, Serialize};

use crate::engine::PortModel;
use crate::kernel::{BuildSpec, KernelKind, KernelParams, Tuning, Variant};
use crate::memsys::{FixedLatencyConfig, MomsConfig};
use crate::workload::{Workload, WorkloadSpec};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IrregularModel {
    Fixed,
    Moms,
}

impl IrregularModel {
    pub fn name(self) -> &'static str {
        match self {
            IrregularModel::Fixed => "fixed",
            IrregularModel::Moms => "moms",
        }
    }
}

/// Memory system settings. Sequential regions always get the fixed-latency
/// model; the kernel's irregular region can be switched to the
/// miss-optimized subsystem.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryConfig {
    pub latency: u64,
    /// Store latency; defaults to `latency`.
    pub write_latency: Option<u64>,
    pub max_outstanding: u32,
    pub jitter: u32,
    pub irregular: IrregularModel,
    pub moms: MomsConfig,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            latency: 100,
            write_latency: None,
            max_outstanding: 256,
            jitter: 0,
            irregular: IrregularModel::Fixed,
            moms: MomsConfig::default(),
        }
    }
}

impl MemoryConfig {
    pub fn sequential(&self) -> FixedLatencyConfig {
        FixedLatencyConfig {
            read_latency: self.latency,
            write_latency: self.write_latency.unwrap_or(self.latency),
            max_outstanding: self.max_outstanding,
            jitter: self.jitter,
        }
    }

    pub fn irregular(&self) -> PortModel {
        match self.irregular {
            IrregularModel::Fixed => PortModel::Fixed(self.sequential()),
            IrregularModel::Moms => PortModel::Moms(self.moms),
        }
    }
}

fn default_seed() -> u64 {
    1
}

fn default_variant() -> Variant {
    Variant::Decoupled
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kernel: KernelKind,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub memory: MemoryConfig,
    #[serde(default)]
    pub tuning: Tuning,
    #[serde(default)]
    pub params: KernelParams,
    /// Abort the run after this many cycles.
    #[serde(default)]
    pub max_cycles: Option<u64>,
    #[serde(default)]
    pub memlog: bool,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("a run configuration always serializes")
    }

    pub fn build_spec<'a>(&self, workload: &'a Workload) -> BuildSpec<'a> {
        BuildSpec {
            kind: self.kernel,
            variant: self.variant,
            workload,
            params: self.params,
            tuning: self.tuning,
            irregular: self.memory.irregular(),
            sequential: self.memory.sequential(),
            seed: self.seed,
            memlog: self.memlog,
        }
    }

    pub fn cycle_limit(&self) -> u64 {
        self.max_cycles.unwrap_or(100_000_000)
    }
}

pub const PRESETS: [&str; 14] = [
    "desk/binsearch",
    "desk/binsearch_for",
    "desk/hashtable",
    "desk/spmv",
    "desk/multispmv",
    "desk/mergesort",
    "desk/mergesort_opt",
    "ref/binsearch",
    "ref/binsearch_for",
    "ref/hashtable",
    "ref/spmv",
    "ref/multispmv",
    "ref/mergesort",
    "ref/mergesort_opt",
];

/// Look up a named preset. Every preset defaults to the decoupled variant,
/// fixed latency 100, and seed 1; override fields after the call.
pub fn preset(name: &str) -> Result<RunConfig, String> {
    let (family, kernel) = name
        .split_once('/')
        .ok_or_else(|| format!("preset names look like desk/spmv; got {name:?}"))?;
    let desk = match family {
        "desk" => true,
        "ref" => false,
        other => return Err(format!("unknown preset family {other:?}; use desk or ref")),
    };
    let kind = KernelKind::parse(kernel)?;
    let mut params = KernelParams::default();
    let workload = match kind {
        KernelKind::Binsearch | KernelKind::BinsearchFor => {
            if desk {
                WorkloadSpec::SortedKeys { n: 300_007, probes: 1024 }
            } else {
                WorkloadSpec::SortedKeys { n: 1_234_567, probes: 1000 }
            }
        }
        KernelKind::Hashtable => {
            if desk {
                WorkloadSpec::HashTable { keys: 32_768, buckets: 2_048, lookups: 1_024 }
            } else {
                WorkloadSpec::HashTable { keys: 65_536, buckets: 4_096, lookups: 1_024 }
            }
        }
        KernelKind::Spmv => {
            if desk {
                WorkloadSpec::Csr { rows: 256, cols: 65_536, nnz: 4_096 }
            } else {
                WorkloadSpec::Csr { rows: 1_024, cols: 16_777_216, nnz: 17_221 }
            }
        }
        KernelKind::MultiSpmv => {
            params.scale = 0.5;
            if desk {
                params.iterations = 4;
                WorkloadSpec::Csr { rows: 128, cols: 128, nnz: 512 }
            } else {
                params.iterations = 10;
                WorkloadSpec::Csr { rows: 128, cols: 128, nnz: 1_639 }
            }
        }
        KernelKind::Mergesort | KernelKind::MergesortOpt => {
            if desk {
                WorkloadSpec::Sort { n: 1_024 }
            } else {
                WorkloadSpec::Sort { n: 234 }
            }
        }
    };
    Ok(RunConfig {
        kernel: kind,
        variant: Variant::Decoupled,
        seed: 1,
        workload,
        memory: MemoryConfig::default(),
        tuning: Tuning::default(),
        params,
        max_cycles: None,
        memlog: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_resolves() {
        for name in PRESETS {
            let cfg = preset(name).unwrap();
            assert_eq!(cfg.seed, 1);
            assert_eq!(cfg.variant, Variant::Decoupled);
        }
    }

    #[test]
    fn unknown_presets_name_the_valid_families() {
        assert!(preset("lab/spmv").unwrap_err().contains("desk"));
        assert!(preset("spmv").unwrap_err().contains("desk/spmv"));
        assert!(preset("desk/quicksort").is_err());
    }

    #[test]
    fn configs_roundtrip_through_toml() {
        let cfg = preset("desk/multispmv").unwrap();
        let text = cfg.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back.kernel, cfg.kernel);
        assert_eq!(back.workload, cfg.workload);
        assert_eq!(back.params.iterations, 4);
    }

    #[test]
    fn sparse_toml_fills_defaults() {
        let cfg = RunConfig::from_toml(
            r#"
            kernel = "spmv"
            [workload]
            kind = "csr"
            rows = 4
            cols = 4
            nnz = 8
            [memory]
            latency = 25
            [tuning]
            rif = 16
            "#,
        )
        .unwrap();
        assert_eq!(cfg.memory.latency, 25);
        assert_eq!(cfg.memory.max_outstanding, 256);
        assert_eq!(cfg.tuning.rif, 16);
        assert_eq!(cfg.tuning.chunk, 128);
        assert_eq!(cfg.seed, 1);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = RunConfig::from_toml(
            r#"
            kernel = "spmv"
            lattency = 3
            [workload]
            kind = "csr"
            rows = 4
            cols = 4
            nnz = 8
            "#,
        )
        .unwrap_err();
        assert!(err.contains("lattency"), "{err}");
    }
}
