//! Fixed-latency memory model.
//!
//! Every accepted request completes exactly `latency` cycles after issue.
//! With latency 1 the model behaves like an on-chip scratchpad. Writes that
//! reach their service cycle commit before reads sample, so a read serviced
//! in the same cycle as an older write observes the committed value.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::Cycle;

use super::{Delivery, MemRequest, Region, ReqKind};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FixedLatencyConfig {
    pub read_latency: Cycle,
    pub write_latency: Cycle,
    /// Requests in flight allowed through the owning port.
    pub max_outstanding: u32,
    /// Extra per-read latency spread in cycles. Zero keeps completions in
    /// issue order; nonzero values deterministically scatter read service
    /// times to exercise response reordering. Write timing is never
    /// jittered, which keeps per-id store commit order equal to issue order.
    pub jitter: u32,
}

impl Default for FixedLatencyConfig {
    fn default() -> Self {
        FixedLatencyConfig { read_latency: 100, write_latency: 100, max_outstanding: 256, jitter: 0 }
    }
}

impl FixedLatencyConfig {
    pub fn latency(cycles: Cycle) -> Self {
        FixedLatencyConfig { read_latency: cycles, write_latency: cycles, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.read_latency < 1 || self.write_latency < 1 {
            return Err("fixed-latency model needs latencies >= 1".into());
        }
        if self.max_outstanding < 1 {
            return Err("fixed-latency model needs max_outstanding >= 1".into());
        }
        Ok(())
    }
}

pub(crate) struct FixedLatency {
    cfg: FixedLatencyConfig,
    seed: u64,
    /// In-flight requests keyed by (service cycle, issue serial).
    pending: BTreeMap<(Cycle, u64), MemRequest>,
}

impl FixedLatency {
    pub fn new(cfg: FixedLatencyConfig, seed: u64) -> Self {
        FixedLatency { cfg, seed, pending: BTreeMap::new() }
    }

    pub fn push(&mut self, req: MemRequest) {
        let latency = match req.kind {
            ReqKind::Read => self.cfg.read_latency + self.read_jitter(req.serial),
            ReqKind::Write => self.cfg.write_latency,
        };
        let service = req.issue + latency;
        self.pending.insert((service, req.serial), req);
    }

    fn read_jitter(&self, serial: u64) -> Cycle {
        if self.cfg.jitter == 0 {
            return 0;
        }
        // splitmix64 over (seed, serial); cheap and reproducible.
        let mut z = self.seed ^ serial.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
        z % (u64::from(self.cfg.jitter) + 1)
    }

    pub fn tick(&mut self, now: Cycle, region: &mut Region, out: &mut Vec<Delivery>) {
        let mut due = Vec::new();
        while let Some(entry) = self.pending.first_entry() {
            if entry.key().0 > now {
                break;
            }
            due.push(entry.remove());
        }
        // Writes commit first so reads serviced this cycle see them.
        for req in due.iter_mut().filter(|r| r.kind == ReqKind::Write) {
            region.write(req.addr, req.data.take().expect("write without data"));
        }
        for req in due {
            let data = match req.kind {
                ReqKind::Read => region.read(req.addr, req.words),
                ReqKind::Write => crate::channel::Value::word(0),
            };
            out.push(Delivery {
                tag: req.tag,
                data,
                ready: now,
                axi: req.axi,
                addr: req.addr,
                issue: req.issue,
                kind: req.kind,
            });
        }
    }

    pub fn busy(&self) -> bool {
        !self.pending.is_empty()
    }
}
