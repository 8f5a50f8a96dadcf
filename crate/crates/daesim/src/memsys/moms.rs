//! Miss-optimized memory subsystem (MOMS).
//!
//! A read-only model built for irregular access streams: misses are
//! coalesced by cache-line address in a set of MSHR hash tables so each
//! distinct missing line is fetched from external memory exactly once, no
//! matter how many requests touch it while the fetch is in flight. Fetched
//! lines land in a direct-mapped line cache; hits return after a fixed
//! four-cycle probe. External fetches are bounded and served by the banked
//! DRAM model. Writes are a configuration fault: the design has no
//! coherence machinery.

use std::collections::BTreeMap;
use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::engine::Cycle;

use super::{Addr, AxiId, Delivery, Dram, DramConfig, MemRequest, Region, ReqKind, ReqTag};

/// Cycles from an accepted request to its response on a line-cache hit.
pub const HIT_LATENCY: Cycle = 4;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct MomsConfig {
    pub cache_bytes: u64,
    pub hash_tables: u32,
    pub hash_entries: u32,
    pub line_bytes: u32,
    /// External reads in flight allowed toward the DRAM model.
    pub max_external_reads: u32,
    pub dram: DramConfig,
}

impl Default for MomsConfig {
    fn default() -> Self {
        MomsConfig {
            cache_bytes: 128 * 1024,
            hash_tables: 3,
            hash_entries: 512,
            line_bytes: 64,
            max_external_reads: 64,
            dram: DramConfig::default(),
        }
    }
}

impl MomsConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.line_bytes < 4 || !self.line_bytes.is_power_of_two() {
            return Err("moms line_bytes must be a power of two >= 4".into());
        }
        if self.cache_bytes == 0 || self.cache_bytes % u64::from(self.line_bytes) != 0 {
            return Err("moms cache_bytes must be a nonzero multiple of line_bytes".into());
        }
        if self.hash_tables < 1 {
            return Err("moms needs at least one hash table".into());
        }
        if self.hash_entries == 0 || !self.hash_entries.is_power_of_two() {
            return Err("moms hash_entries must be a nonzero power of two".into());
        }
        if self.max_external_reads < 1 {
            return Err("moms needs max_external_reads >= 1".into());
        }
        self.dram.validate()
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct MomsStats {
    pub hits: u64,
    pub merges: u64,
    pub fetches: u64,
    pub peak_external_reads: u32,
}

struct Waiter {
    tag: ReqTag,
    addr: Addr,
    words: u8,
    axi: AxiId,
    issue: Cycle,
}

struct MshrEntry {
    line: Addr,
    waiters: Vec<Waiter>,
}

struct PendingResp {
    tag: ReqTag,
    addr: Addr,
    words: u8,
    axi: AxiId,
    issue: Cycle,
}

pub(crate) struct Moms {
    cfg: MomsConfig,
    cache: Vec<Option<Addr>>,
    tables: Vec<Vec<Option<MshrEntry>>>,
    fetch_queue: VecDeque<Addr>,
    dispatched: BTreeMap<Addr, Cycle>,
    external_in_flight: u32,
    dram: Dram,
    retire: BTreeMap<(Cycle, u64), PendingResp>,
    retire_serial: u64,
    stats: MomsStats,
    fetch_log: Vec<(Cycle, Addr, Cycle)>,
}

impl Moms {
    pub fn new(cfg: MomsConfig) -> Self {
        let n_lines = (cfg.cache_bytes / u64::from(cfg.line_bytes)) as usize;
        Moms {
            cache: vec![None; n_lines],
            tables: (0..cfg.hash_tables).map(|_| {
                (0..cfg.hash_entries).map(|_| None).collect()
            }).collect(),
            fetch_queue: VecDeque::new(),
            dispatched: BTreeMap::new(),
            external_in_flight: 0,
            dram: Dram::new(cfg.dram),
            retire: BTreeMap::new(),
            retire_serial: 0,
            stats: MomsStats::default(),
            fetch_log: Vec::new(),
            cfg,
        }
    }

    fn line_of(&self, addr: Addr) -> Addr {
        addr & !u64::from(self.cfg.line_bytes - 1)
    }

    fn cache_slot(&self, line: Addr) -> usize {
        ((line / u64::from(self.cfg.line_bytes)) % self.cache.len() as u64) as usize
    }

    fn table_slot(&self, table: usize, line: Addr) -> usize {
        // One multiplicative hash per table, top bits of the product. The
        // base constants are odd, and the stride added for tables past the
        // third is even, so every multiplier stays odd (a bijection on u64).
        const MULTS: [u64; 3] = [
            0x9e37_79b9_7f4a_7c15,
            0xc2b2_ae3d_27d4_eb4f,
            0x1656_67b1_9e37_79f9,
        ];
        let mult = MULTS[table % MULTS.len()].wrapping_add(2 * (table / MULTS.len()) as u64);
        let idx = line / u64::from(self.cfg.line_bytes);
        let bits = self.cfg.hash_entries.trailing_zeros();
        if bits == 0 {
            return 0;
        }
        (idx.wrapping_mul(mult) >> (64 - bits)) as usize
    }

    fn cached(&self, line: Addr) -> bool {
        self.cache[self.cache_slot(line)] == Some(line)
    }

    fn probe(&self, line: Addr) -> Option<(usize, usize)> {
        for t in 0..self.tables.len() {
            let s = self.table_slot(t, line);
            if let Some(e) = &self.tables[t][s] {
                if e.line == line {
                    return Some((t, s));
                }
            }
        }
        None
    }

    fn free_candidate(&self, line: Addr) -> Option<(usize, usize)> {
        for t in 0..self.tables.len() {
            let s = self.table_slot(t, line);
            if self.tables[t][s].is_none() {
                return Some((t, s));
            }
        }
        None
    }

    pub fn can_accept(&self, kind: ReqKind, addr: Addr, port_name: &str) -> Result<bool, String> {
        if kind == ReqKind::Write {
            return Err(format!(
                "write to {addr:#x} on port {port_name}: the miss-optimized model is read-only"
            ));
        }
        let line = self.line_of(addr);
        Ok(self.cached(line) || self.probe(line).is_some() || self.free_candidate(line).is_some())
    }

    pub fn push(&mut self, req: MemRequest, now: Cycle) {
        debug_assert_eq!(req.kind, ReqKind::Read);
        debug_assert!(
            (req.addr % u64::from(self.cfg.line_bytes)) + u64::from(req.words) * 4
                <= u64::from(self.cfg.line_bytes),
            "request at {:#x} straddles a line boundary",
            req.addr
        );
        let line = self.line_of(req.addr);
        if self.cached(line) {
            self.stats.hits += 1;
            self.schedule(now + HIT_LATENCY, PendingResp {
                tag: req.tag,
                addr: req.addr,
                words: req.words,
                axi: req.axi,
                issue: req.issue,
            });
            return;
        }
        let waiter = Waiter {
            tag: req.tag,
            addr: req.addr,
            words: req.words,
            axi: req.axi,
            issue: req.issue,
        };
        if let Some((t, s)) = self.probe(line) {
            self.stats.merges += 1;
            self.tables[t][s].as_mut().expect("probed entry").waiters.push(waiter);
            return;
        }
        let (t, s) = self.free_candidate(line).expect("admission checked a free MSHR slot");
        self.tables[t][s] = Some(MshrEntry { line, waiters: vec![waiter] });
        self.fetch_queue.push_back(line);
    }

    fn schedule(&mut self, ready: Cycle, resp: PendingResp) {
        let key = (ready, self.retire_serial);
        self.retire_serial += 1;
        self.retire.insert(key, resp);
    }

    pub fn tick(&mut self, now: Cycle, region: &mut Region, out: &mut Vec<Delivery>) {
        // Line arrivals: fill the cache, release the MSHR entry, and pace
        // the merged responses at one per requester per cycle.
        for line in self.dram.complete(now) {
            self.external_in_flight -= 1;
            let slot = self.cache_slot(line);
            self.cache[slot] = Some(line);
            let dispatch = self.dispatched.remove(&line).expect("completed line was dispatched");
            self.fetch_log.push((now, line, now - dispatch));
            let (t, s) = self.probe(line).expect("completed line has an MSHR entry");
            let entry = self.tables[t][s].take().expect("probed entry");
            let mut per_axi: BTreeMap<AxiId, Cycle> = BTreeMap::new();
            for w in entry.waiters {
                let k = per_axi.entry(w.axi).or_insert(0);
                let ready = now + 1 + *k;
                *k += 1;
                self.schedule(ready, PendingResp {
                    tag: w.tag,
                    addr: w.addr,
                    words: w.words,
                    axi: w.axi,
                    issue: w.issue,
                });
            }
        }

        while self.external_in_flight < self.cfg.max_external_reads {
            let Some(line) = self.fetch_queue.pop_front() else { break };
            self.dram.push(line);
            self.dispatched.insert(line, now);
            self.external_in_flight += 1;
            self.stats.fetches += 1;
            self.stats.peak_external_reads = self.stats.peak_external_reads.max(self.external_in_flight);
        }
        debug_assert!(self.external_in_flight <= self.cfg.max_external_reads);
        self.dram.select(now);

        while let Some(entry) = self.retire.first_entry() {
            if entry.key().0 > now {
                break;
            }
            let resp = entry.remove();
            out.push(Delivery {
                tag: resp.tag,
                data: region.read(resp.addr, resp.words),
                ready: now,
                axi: resp.axi,
                addr: resp.addr,
                issue: resp.issue,
                kind: ReqKind::Read,
            });
        }
    }

    pub fn busy(&self) -> bool {
        self.external_in_flight > 0
            || !self.fetch_queue.is_empty()
            || !self.retire.is_empty()
            || self.dram.busy()
    }

    pub fn stats(&self) -> MomsStats {
        self.stats
    }

    pub fn take_fetch_log(&mut self) -> Vec<(Cycle, Addr, Cycle)> {
        std::mem::take(&mut self.fetch_log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::DecoupleId;

    fn region(n_words: usize) -> Region {
        Region { name: "table".into(), base: 0, words: (0..n_words as u32).collect() }
    }

    fn read_at(addr: Addr, seq: u64, issue: Cycle) -> MemRequest {
        MemRequest {
            axi: AxiId(7),
            kind: ReqKind::Read,
            addr,
            words: 1,
            data: None,
            issue,
            tag: ReqTag::Load { ch: DecoupleId(0), seq },
            serial: seq,
        }
    }

    fn drain(m: &mut Moms, region: &mut Region, from: Cycle, limit: Cycle) -> Vec<Delivery> {
        let mut out = Vec::new();
        for now in from..limit {
            m.tick(now, region, &mut out);
            if !m.busy() {
                return out;
            }
        }
        panic!("model still busy at cycle {limit}");
    }

    #[test]
    fn miss_fetches_line_and_later_touch_hits_in_four_cycles() {
        let mut m = Moms::new(MomsConfig::default());
        let mut r = region(64);
        m.push(read_at(0, 0, 0), 0);
        let out = drain(&mut m, &mut r, 0, 200);
        assert_eq!(out.len(), 1);
        // Closed-bank row fetch takes 30, then one cycle to hand over.
        assert_eq!(out[0].ready, 31);
        assert_eq!(out[0].data.as_word(), 0);

        m.push(read_at(4, 1, 40), 40);
        let out = drain(&mut m, &mut r, 41, 200);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].ready, 40 + HIT_LATENCY);
        assert_eq!(out[0].data.as_word(), 1);
        let s = m.stats();
        assert_eq!((s.fetches, s.hits, s.merges), (1, 1, 0));
    }

    #[test]
    fn requests_to_an_in_flight_line_merge_into_one_fetch() {
        let mut m = Moms::new(MomsConfig::default());
        let mut r = region(64);
        m.push(read_at(0, 0, 0), 0);
        let mut out = Vec::new();
        m.tick(1, &mut r, &mut out);
        assert!(m.can_accept(ReqKind::Read, 8, "table").unwrap());
        m.push(read_at(8, 1, 1), 1);
        out.extend(drain(&mut m, &mut r, 2, 200));
        // One response per requester per cycle after the line lands at 31.
        assert_eq!(out.iter().map(|d| d.ready).collect::<Vec<_>>(), vec![32, 33]);
        assert_eq!(out.iter().map(|d| d.data.as_word()).collect::<Vec<_>>(), vec![0, 2]);
        let s = m.stats();
        assert_eq!((s.fetches, s.hits, s.merges), (1, 0, 1));
    }

    #[test]
    fn each_distinct_line_is_fetched_exactly_once() {
        let mut m = Moms::new(MomsConfig::default());
        let mut r = region(16 * 10);
        let mut seq = 0;
        for line in 0..10u64 {
            for off in [0u64, 4, 8] {
                m.push(read_at(line * 64 + off, seq, 0), 0);
                seq += 1;
            }
        }
        let out = drain(&mut m, &mut r, 0, 2000);
        assert_eq!(out.len(), 30);
        let s = m.stats();
        assert_eq!((s.fetches, s.hits, s.merges), (10, 0, 20));

        for line in 0..10u64 {
            for off in [0u64, 4, 8] {
                m.push(read_at(line * 64 + off, seq, 3000), 3000);
                seq += 1;
            }
        }
        let out = drain(&mut m, &mut r, 3000, 3200);
        assert_eq!(out.len(), 30);
        let s = m.stats();
        assert_eq!((s.fetches, s.hits), (10, 30));
    }

    #[test]
    fn full_mshr_candidates_back_pressure_until_the_line_returns() {
        let cfg = MomsConfig { hash_tables: 1, hash_entries: 1, ..MomsConfig::default() };
        let mut m = Moms::new(cfg);
        let mut r = region(64);
        assert!(m.can_accept(ReqKind::Read, 0, "table").unwrap());
        m.push(read_at(0, 0, 0), 0);
        // Every line maps to the single MSHR slot, which is now taken.
        assert!(!m.can_accept(ReqKind::Read, 64, "table").unwrap());
        // Same line still merges.
        assert!(m.can_accept(ReqKind::Read, 4, "table").unwrap());
        drain(&mut m, &mut r, 0, 200);
        assert!(m.can_accept(ReqKind::Read, 64, "table").unwrap());
    }

    #[test]
    fn external_fetches_respect_the_read_credit() {
        let cfg = MomsConfig { max_external_reads: 2, ..MomsConfig::default() };
        let mut m = Moms::new(cfg);
        let mut r = region(16 * 5);
        for line in 0..5u64 {
            m.push(read_at(line * 64, line, 0), 0);
        }
        let out = drain(&mut m, &mut r, 0, 2000);
        assert_eq!(out.len(), 5);
        let s = m.stats();
        assert_eq!(s.fetches, 5);
        assert_eq!(s.peak_external_reads, 2);
    }

    #[test]
    fn writes_are_a_read_only_fault() {
        let m = Moms::new(MomsConfig::default());
        let err = m.can_accept(ReqKind::Write, 0, "table").unwrap_err();
        assert!(err.contains("read-only"), "{err}");
    }
}
