//! Memory subsystem: address regions, ports, and pluggable timing models.
//!
//! Every region of memory is served by exactly one port. A port accepts at
//! most one read and one write per cycle, arbitrates same-cycle contenders
//! round-robin, and bounds its requests in flight. Behind the port sits a
//! timing model: a fixed-latency pipe or a miss-optimized memory subsystem
//! backed by a banked DRAM model.

mod dram;
mod fixed;
mod moms;

pub use dram::DramConfig;
pub use fixed::FixedLatencyConfig;
pub use moms::{MomsConfig, MomsStats};

pub(crate) use dram::Dram;
pub(crate) use fixed::FixedLatency;
pub(crate) use moms::Moms;

use crate::channel::{DecoupleId, Value};
use crate::engine::{Cycle, ProcessId};

/// Byte address. Requests must fall inside their port's region.
pub type Addr = u64;

/// Identifies one memory-operation site. Assigned once at world
/// construction and never reused; ordering guarantees are per id.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct AxiId(pub u32);

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct PortId(pub(crate) usize);

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct RegionId(pub(crate) usize);

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct StoreSiteId(pub(crate) usize);

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ReqKind {
    Read,
    Write,
}

/// Routing tag carried from request to response.
#[derive(Clone, Copy, Debug)]
pub(crate) enum ReqTag {
    Load { ch: DecoupleId, seq: u64 },
    Store { site: StoreSiteId },
}

pub(crate) struct MemRequest {
    pub axi: AxiId,
    pub kind: ReqKind,
    pub addr: Addr,
    pub words: u8,
    pub data: Option<Value>,
    pub issue: Cycle,
    pub tag: ReqTag,
    /// Global issue order, used as a deterministic tie-breaker.
    pub serial: u64,
}

pub(crate) struct Delivery {
    pub tag: ReqTag,
    pub data: Value,
    pub ready: Cycle,
    pub axi: AxiId,
    pub addr: Addr,
    pub issue: Cycle,
    pub kind: ReqKind,
}

/// One contiguous word-addressable region backed by a port.
pub(crate) struct Region {
    pub name: String,
    pub base: Addr,
    pub words: Vec<u32>,
}

impl Region {
    pub fn size_bytes(&self) -> u64 {
        self.words.len() as u64 * 4
    }

    pub fn contains(&self, addr: Addr, n_words: u8) -> bool {
        addr >= self.base
            && addr % 4 == 0
            && addr + u64::from(n_words) * 4 <= self.base + self.size_bytes()
    }

    pub fn read(&self, addr: Addr, n_words: u8) -> Value {
        let i = ((addr - self.base) / 4) as usize;
        Value::from_words(&self.words[i..i + n_words as usize])
    }

    pub fn write(&mut self, addr: Addr, v: Value) {
        let i = ((addr - self.base) / 4) as usize;
        self.words[i..i + v.len()].copy_from_slice(v.words());
    }
}

/// A store site: one static program location issuing writes through a port.
/// Acks are counted so kernels can overlap stores and synchronize on the
/// count instead of blocking per store.
pub(crate) struct StoreSite {
    pub name: String,
    pub port: PortId,
    pub axi: AxiId,
    pub owner: Option<ProcessId>,
    pub issued: u64,
    pub acked: u64,
    pub store_this_cycle: bool,
}

pub(crate) enum ModelKind {
    Fixed(FixedLatency),
    Moms(Box<Moms>),
}

impl ModelKind {
    /// Model-side admission check. `Ok(false)` is back-pressure;
    /// `Err` is a configuration fault (for example a write into a
    /// read-only model).
    pub fn can_accept(&self, req_kind: ReqKind, addr: Addr, port_name: &str) -> Result<bool, String> {
        match self {
            ModelKind::Fixed(_) => Ok(true),
            ModelKind::Moms(m) => m.can_accept(req_kind, addr, port_name),
        }
    }

    pub fn push(&mut self, req: MemRequest, now: Cycle) {
        match self {
            ModelKind::Fixed(f) => f.push(req),
            ModelKind::Moms(m) => m.push(req, now),
        }
    }

    pub fn tick(&mut self, now: Cycle, region: &mut Region, out: &mut Vec<Delivery>) {
        match self {
            ModelKind::Fixed(f) => f.tick(now, region, out),
            ModelKind::Moms(m) => m.tick(now, region, out),
        }
    }

    pub fn busy(&self) -> bool {
        match self {
            ModelKind::Fixed(f) => f.busy(),
            ModelKind::Moms(m) => m.busy(),
        }
    }

    pub fn moms_stats(&self) -> Option<MomsStats> {
        match self {
            ModelKind::Fixed(_) => None,
            ModelKind::Moms(m) => Some(m.stats()),
        }
    }
}

/// Per-direction arbitration state of a port.
pub(crate) struct Direction {
    pub budget_used: bool,
    /// Processes whose issue was rejected and are expected to retry,
    /// kept sorted for the round-robin sweep.
    pub waiting: Vec<ProcessId>,
    pub grant: Option<ProcessId>,
    pub last_winner: Option<ProcessId>,
    pub accepted: u64,
    pub rejected: u64,
}

impl Direction {
    fn new() -> Self {
        Direction {
            budget_used: false,
            waiting: Vec::new(),
            grant: None,
            last_winner: None,
            accepted: 0,
            rejected: 0,
        }
    }

    pub fn enlist(&mut self, pid: ProcessId) {
        if let Err(i) = self.waiting.binary_search(&pid) {
            self.waiting.insert(i, pid);
        }
        self.rejected += 1;
    }

    fn delist(&mut self, pid: ProcessId) {
        if let Ok(i) = self.waiting.binary_search(&pid) {
            self.waiting.remove(i);
        }
    }

    pub fn begin_cycle(&mut self) {
        self.budget_used = false;
        self.grant = if self.waiting.is_empty() {
            None
        } else {
            crate::engine::arbitrate(self.last_winner, &self.waiting)
        };
    }

    /// Admission for this direction only; the caller checks the shared
    /// outstanding bound and the model.
    pub fn admissible(&self, pid: ProcessId) -> bool {
        !self.budget_used && self.grant.map_or(true, |g| g == pid)
    }

    pub fn won(&mut self, pid: ProcessId) {
        self.budget_used = true;
        self.delist(pid);
        self.grant = None;
        self.last_winner = Some(pid);
        self.accepted += 1;
    }
}

pub(crate) struct Port {
    pub name: String,
    pub region: RegionId,
    pub model: ModelKind,
    pub max_outstanding: u32,
    pub outstanding: u32,
    pub peak_outstanding: u32,
    pub read: Direction,
    pub write: Direction,
}

impl Port {
    pub fn new(name: String, region: RegionId, model: ModelKind, max_outstanding: u32) -> Self {
        assert!(max_outstanding >= 1, "port {name} needs max_outstanding >= 1");
        Port {
            name,
            region,
            model,
            max_outstanding,
            outstanding: 0,
            peak_outstanding: 0,
            read: Direction::new(),
            write: Direction::new(),
        }
    }

    pub fn begin_cycle(&mut self) {
        self.read.begin_cycle();
        self.write.begin_cycle();
    }

    pub fn dir(&mut self, kind: ReqKind) -> &mut Direction {
        match kind {
            ReqKind::Read => &mut self.read,
            ReqKind::Write => &mut self.write,
        }
    }

    /// Full admission: per-cycle budget, round-robin grant, outstanding
    /// bound, then the model. On success the caller must `push` the request.
    pub fn admit(&mut self, pid: ProcessId, kind: ReqKind, addr: Addr) -> Result<bool, String> {
        if !self.dir(kind).admissible(pid) {
            self.dir(kind).enlist(pid);
            return Ok(false);
        }
        if self.outstanding >= self.max_outstanding {
            self.dir(kind).enlist(pid);
            return Ok(false);
        }
        let name = self.name.clone();
        if !self.model.can_accept(kind, addr, &name)? {
            self.dir(kind).enlist(pid);
            return Ok(false);
        }
        self.dir(kind).won(pid);
        self.outstanding += 1;
        self.peak_outstanding = self.peak_outstanding.max(self.outstanding);
        Ok(true)
    }
}

/// One row of the memory commit/fetch log.
#[derive(Clone, Debug)]
pub struct MemLogRow {
    pub cycle: Cycle,
    pub port: String,
    pub id: u32,
    pub kind: &'static str,
    pub addr: Addr,
    pub latency: Cycle,
}

pub fn write_memlog<W: std::io::Write>(rows: &[MemLogRow], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "cycle,port,id,kind,addr,latency")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{:#x},{}", r.cycle, r.port, r.id, r.kind, r.addr, r.latency)?;
    }
    Ok(())
}
