//! Pointer-chase kernels: early-exit binary search, fixed-trip-count binary
//! search, and chained hash-table lookup. All three share one shape: a query
//! starts from a key, every probe loads one irregularly indexed element, and
//! the probed value decides the next address or ends the chase.
//!
//! The decoupled variants overlap many chases. Early-exit chases cannot know
//! their trip count, so a run-ahead pair of processes recirculates states
//! until each chase ends. The fixed-trip search instead slides a bounded
//! window of chases through a single process, which keeps exactly one probe
//! in flight per live query.

use std::sync::Arc;

use crate::channel::{DecoupleId, StreamId, Value};
use crate::engine::{PortModel, Process, Resource, SimError, Step, View, World, WorldBuilder};
use crate::memsys::{Addr, PortId, StoreSiteId};
use crate::workload::{bucket_of, HashTableImage, SortedKeys, NIL};

use super::{BuildSpec, KernelKind, Variant};

const CHASE_BASE: Addr = 0x1000_0000;
const PROBES_BASE: Addr = 0x2000_0000;
const OUT_BASE: Addr = 0x3000_0000;

/// Query origins ride inside the state, packed into the low bits of the
/// meta word; the upper bits hold a pass counter and a found flag.
const ORIGIN_BITS: u32 = 24;
const ORIGIN_MASK: u32 = (1 << ORIGIN_BITS) - 1;
const PASS_SHIFT: u32 = ORIGIN_BITS;
const PASS_MASK: u32 = 0x7f;
const FOUND_BIT: u32 = 1 << 31;

pub(super) enum ChaseOutcome {
    Continue(Value),
    Done { origin: u32, result: u32 },
}

/// One query's abstract machine: how a key becomes an initial state, which
/// address a state probes, and how the probed value advances it.
pub(super) trait ChaseSpec: Send + Sync {
    fn words(&self) -> u8 {
        1
    }
    fn init(&self, key: u32, origin: u32) -> Value;
    fn addr(&self, state: &Value) -> Addr;
    fn advance(&self, state: &Value, resp: &Value) -> ChaseOutcome;
}

fn origin_of(meta: u32) -> u32 {
    meta & ORIGIN_MASK
}

/// Early-exit binary search over sorted keys. State: lo, hi, key, meta.
struct EarlyExitSearch {
    base: Addr,
    n: u32,
}

impl ChaseSpec for EarlyExitSearch {
    fn init(&self, key: u32, origin: u32) -> Value {
        Value::wide([0, self.n, key, origin])
    }

    fn addr(&self, state: &Value) -> Addr {
        let w = state.words();
        let mid = w[0] + (w[1] - w[0]) / 2;
        self.base + u64::from(mid) * 4
    }

    fn advance(&self, state: &Value, resp: &Value) -> ChaseOutcome {
        let w = state.words();
        let (lo, hi, key, meta) = (w[0], w[1], w[2], w[3]);
        let mid = lo + (hi - lo) / 2;
        let v = resp.as_word();
        if v == key {
            return ChaseOutcome::Done { origin: origin_of(meta), result: mid };
        }
        let (lo, hi) = if v < key { (mid + 1, hi) } else { (lo, mid) };
        if lo >= hi {
            ChaseOutcome::Done { origin: origin_of(meta), result: NIL }
        } else {
            ChaseOutcome::Continue(Value::wide([lo, hi, key, meta]))
        }
    }
}

/// Fixed-trip-count lower-bound search: every query makes exactly `passes`
/// probes, padding exhausted ranges with a clamped dummy probe so the trip
/// count never depends on the data. State: lo, len, key, meta. The found
/// flag is sound because the range's right boundary is always a previously
/// probed index, and the final lo is that boundary.
struct FixedTripSearch {
    base: Addr,
    n: u32,
    passes: u32,
}

impl ChaseSpec for FixedTripSearch {
    fn init(&self, key: u32, origin: u32) -> Value {
        Value::wide([0, self.n, key, origin])
    }

    fn addr(&self, state: &Value) -> Addr {
        let w = state.words();
        let (lo, len) = (w[0], w[1]);
        let idx = if len > 0 { lo + len / 2 } else { lo.min(self.n - 1) };
        self.base + u64::from(idx) * 4
    }

    fn advance(&self, state: &Value, resp: &Value) -> ChaseOutcome {
        let w = state.words();
        let (mut lo, mut len, key, mut meta) = (w[0], w[1], w[2], w[3]);
        if len > 0 {
            let v = resp.as_word();
            if v == key {
                meta |= FOUND_BIT;
            }
            let half = len / 2;
            if v < key {
                lo += half + 1;
                len -= half + 1;
            } else {
                len = half;
            }
        }
        let pass = ((meta >> PASS_SHIFT) & PASS_MASK) + 1;
        if pass == self.passes {
            let result = if meta & FOUND_BIT != 0 { lo } else { NIL };
            ChaseOutcome::Done { origin: origin_of(meta), result }
        } else {
            meta = (meta & !(PASS_MASK << PASS_SHIFT)) | (pass << PASS_SHIFT);
            ChaseOutcome::Continue(Value::wide([lo, len, key, meta]))
        }
    }
}

/// Chained hash-table walk. Records are four words (key, value, next, pad)
/// and a probe loads the whole record. State: index, key, unused, meta.
struct ChainLookup {
    base: Addr,
    buckets: u32,
}

impl ChaseSpec for ChainLookup {
    fn words(&self) -> u8 {
        4
    }

    fn init(&self, key: u32, origin: u32) -> Value {
        Value::wide([bucket_of(key, self.buckets), key, 0, origin])
    }

    fn addr(&self, state: &Value) -> Addr {
        self.base + u64::from(state.words()[0]) * 16
    }

    fn advance(&self, state: &Value, resp: &Value) -> ChaseOutcome {
        let s = state.words();
        let (key, meta) = (s[1], s[3]);
        let r = resp.words();
        let (k, value, next) = (r[0], r[1], r[2]);
        if k == key {
            ChaseOutcome::Done { origin: origin_of(meta), result: value }
        } else if k == 0 || next == NIL {
            ChaseOutcome::Done { origin: origin_of(meta), result: 0 }
        } else {
            ChaseOutcome::Continue(Value::wide([next, key, 0, meta]))
        }
    }
}

enum Parked {
    None,
    Recirc(Value),
    Store { origin: u32, result: u32 },
}

/// Execute half of the run-ahead pair: consumes probe responses, advances
/// states, recirculates unfinished chases, and retires finished ones to the
/// output region. Signals the issuer once every result is acknowledged.
struct RunaheadResolve {
    spec: Arc<dyn ChaseSpec>,
    chase_ld: DecoupleId,
    inflight: StreamId,
    recirc: StreamId,
    finish: StreamId,
    out_st: StoreSiteId,
    out_port: PortId,
    queries: u64,
    stored: u64,
    parked: Parked,
}

impl RunaheadResolve {
    fn retire(&mut self, view: &mut View, origin: u32, result: u32, store_used: bool) {
        let addr = OUT_BASE + u64::from(origin) * 4;
        if !store_used && view.store(self.out_st, addr, Value::word(result)) {
            self.stored += 1;
        } else {
            self.parked = Parked::Store { origin, result };
        }
    }
}

impl Process for RunaheadResolve {
    fn name(&self) -> &str {
        "resolve"
    }

    fn step(&mut self, view: &mut View) -> Step {
        let mut recirc_used = false;
        let mut store_used = false;
        let mut progressed = false;
        match std::mem::replace(&mut self.parked, Parked::None) {
            Parked::None => {}
            Parked::Recirc(v) => {
                if view.stream_enq(self.recirc, v) {
                    recirc_used = true;
                    progressed = true;
                } else {
                    self.parked = Parked::Recirc(v);
                    return Step::blocked(Resource::Stream(self.recirc));
                }
            }
            Parked::Store { origin, result } => {
                let addr = OUT_BASE + u64::from(origin) * 4;
                if view.store(self.out_st, addr, Value::word(result)) {
                    self.stored += 1;
                    store_used = true;
                    progressed = true;
                } else {
                    self.parked = Parked::Store { origin, result };
                    return Step::blocked(Resource::Port(self.out_port));
                }
            }
        }
        if let Some(resp) = view.decouple_response(self.chase_ld) {
            let Some(state) = view.stream_deq(self.inflight) else {
                view.fault("probe response arrived with no in-flight query state");
                return Step::waiting();
            };
            match self.spec.advance(&state, &resp) {
                ChaseOutcome::Continue(next) => {
                    if recirc_used || !view.stream_enq(self.recirc, next) {
                        self.parked = Parked::Recirc(next);
                    }
                }
                ChaseOutcome::Done { origin, result } => {
                    self.retire(view, origin, result, store_used);
                }
            }
            return Step::moved();
        }
        if progressed {
            return Step::moved();
        }
        if self.stored == self.queries {
            if view.stores_acked(self.out_st) < self.queries {
                return Step::blocked(Resource::Acks(self.out_st));
            }
            if view.stream_enq(self.finish, Value::word(1)) {
                return Step::done();
            }
            return Step::blocked(Resource::Stream(self.finish));
        }
        Step::waiting()
    }
}

/// Access half of the run-ahead pair: issues one probe per cycle, preferring
/// recirculated states over fresh queries so chases finish in bounded time.
/// A state whose probe the port rejects is held and retried.
struct RunaheadIssue {
    spec: Arc<dyn ChaseSpec>,
    chase_ld: DecoupleId,
    probes_ld: DecoupleId,
    inflight: StreamId,
    recirc: StreamId,
    finish: StreamId,
    started: u32,
    held: Option<Value>,
}

impl Process for RunaheadIssue {
    fn name(&self) -> &str {
        "issue"
    }

    fn step(&mut self, view: &mut View) -> Step {
        if view.stream_deq(self.finish).is_some() {
            return Step::done();
        }
        let state = match self.held.take() {
            Some(s) => s,
            None => match view.stream_deq(self.recirc) {
                Some(s) => s,
                None => match view.decouple_response(self.probes_ld) {
                    Some(key) => {
                        let origin = self.started;
                        self.started += 1;
                        self.spec.init(key.as_word(), origin)
                    }
                    None => return Step::waiting(),
                },
            },
        };
        if view.decouple_request_wide(self.chase_ld, self.spec.addr(&state), self.spec.words()) {
            if !view.stream_enq(self.inflight, state) {
                view.fault("issued a probe with no room to park its state");
            }
            Step::moved()
        } else {
            self.held = Some(state);
            Step::blocked(Resource::Decouple(self.chase_ld))
        }
    }
}

/// Streams the query keys in order, one load per cycle.
struct QueryStreamer {
    probes_ld: DecoupleId,
    total: u64,
    sent: u64,
}

impl Process for QueryStreamer {
    fn name(&self) -> &str {
        "queries"
    }

    fn step(&mut self, view: &mut View) -> Step {
        if view.decouple_request(self.probes_ld, PROBES_BASE + self.sent * 4) {
            self.sent += 1;
            if self.sent == self.total {
                Step::done()
            } else {
                Step::moved()
            }
        } else {
            Step::blocked(Resource::Decouple(self.probes_ld))
        }
    }
}

enum ChunkHold {
    None,
    Issue(Value),
    Store { origin: u32, result: u32 },
}

/// Single-process chase with a bounded window: up to `window` queries live
/// at once, each with exactly one probe outstanding. Responses pop in
/// request order, so the state queue's head always matches the next
/// response; a state whose reissue is rejected re-enters at the tail, which
/// is exactly where its new request sits in the response order.
struct ChunkedChase {
    spec: Arc<dyn ChaseSpec>,
    chase_ld: DecoupleId,
    probes_ld: DecoupleId,
    states: StreamId,
    out_st: StoreSiteId,
    out_port: PortId,
    window: u64,
    queries: u64,
    started: u64,
    stored: u64,
    hold: ChunkHold,
}

impl ChunkedChase {
    fn issue(&mut self, view: &mut View, state: Value) -> bool {
        if view.decouple_request_wide(self.chase_ld, self.spec.addr(&state), self.spec.words()) {
            if !view.stream_enq(self.states, state) {
                view.fault("issued a probe with no room to park its state");
            }
            true
        } else {
            self.hold = ChunkHold::Issue(state);
            false
        }
    }

    fn store_result(&mut self, view: &mut View, origin: u32, result: u32) -> bool {
        let addr = OUT_BASE + u64::from(origin) * 4;
        if view.store(self.out_st, addr, Value::word(result)) {
            self.stored += 1;
            true
        } else {
            self.hold = ChunkHold::Store { origin, result };
            false
        }
    }
}

impl Process for ChunkedChase {
    fn name(&self) -> &str {
        "chase"
    }

    fn step(&mut self, view: &mut View) -> Step {
        match std::mem::replace(&mut self.hold, ChunkHold::None) {
            ChunkHold::None => {}
            ChunkHold::Issue(state) => {
                return if self.issue(view, state) {
                    Step::moved()
                } else {
                    Step::blocked(Resource::Decouple(self.chase_ld))
                };
            }
            ChunkHold::Store { origin, result } => {
                return if self.store_result(view, origin, result) {
                    Step::moved()
                } else {
                    Step::blocked(Resource::Port(self.out_port))
                };
            }
        }
        if let Some(resp) = view.decouple_response(self.chase_ld) {
            let Some(state) = view.stream_deq(self.states) else {
                view.fault("probe response arrived with no state at the queue head");
                return Step::waiting();
            };
            match self.spec.advance(&state, &resp) {
                ChaseOutcome::Continue(next) => {
                    self.issue(view, next);
                }
                ChaseOutcome::Done { origin, result } => {
                    self.store_result(view, origin, result);
                }
            }
            return Step::moved();
        }
        if self.started < self.queries && self.started - self.stored < self.window {
            if let Some(key) = view.decouple_response(self.probes_ld) {
                let state = self.spec.init(key.as_word(), self.started as u32);
                self.started += 1;
                self.issue(view, state);
                return Step::moved();
            }
        }
        if self.stored == self.queries {
            if view.stores_acked(self.out_st) == self.queries {
                return Step::done();
            }
            return Step::blocked(Resource::Acks(self.out_st));
        }
        Step::waiting()
    }
}

enum CoupledPhase {
    FetchQuery,
    AwaitQuery,
    Probe(Value),
    AwaitProbe(Value),
    Store { origin: u32, result: u32 },
    AwaitAck,
}

/// The undecoupled baseline: one query at a time, one access in flight at a
/// time, every store blocking until its acknowledgement returns.
struct CoupledChase {
    spec: Arc<dyn ChaseSpec>,
    chase_ld: DecoupleId,
    probes_ld: DecoupleId,
    out_st: StoreSiteId,
    out_port: PortId,
    queries: u64,
    taken: u64,
    phase: CoupledPhase,
}

impl Process for CoupledChase {
    fn name(&self) -> &str {
        "chase"
    }

    fn step(&mut self, view: &mut View) -> Step {
        match std::mem::replace(&mut self.phase, CoupledPhase::FetchQuery) {
            CoupledPhase::FetchQuery => {
                if self.taken == self.queries {
                    return Step::done();
                }
                if view.decouple_request(self.probes_ld, PROBES_BASE + self.taken * 4) {
                    self.phase = CoupledPhase::AwaitQuery;
                    Step::moved()
                } else {
                    Step::blocked(Resource::Decouple(self.probes_ld))
                }
            }
            CoupledPhase::AwaitQuery => match view.decouple_response(self.probes_ld) {
                Some(key) => {
                    let state = self.spec.init(key.as_word(), self.taken as u32);
                    self.taken += 1;
                    self.phase = CoupledPhase::Probe(state);
                    Step::moved()
                }
                None => {
                    self.phase = CoupledPhase::AwaitQuery;
                    Step::waiting()
                }
            },
            CoupledPhase::Probe(state) => {
                if view.decouple_request_wide(self.chase_ld, self.spec.addr(&state), self.spec.words()) {
                    self.phase = CoupledPhase::AwaitProbe(state);
                    Step::moved()
                } else {
                    self.phase = CoupledPhase::Probe(state);
                    Step::blocked(Resource::Decouple(self.chase_ld))
                }
            }
            CoupledPhase::AwaitProbe(state) => match view.decouple_response(self.chase_ld) {
                Some(resp) => {
                    self.phase = match self.spec.advance(&state, &resp) {
                        ChaseOutcome::Continue(next) => CoupledPhase::Probe(next),
                        ChaseOutcome::Done { origin, result } => CoupledPhase::Store { origin, result },
                    };
                    Step::moved()
                }
                None => {
                    self.phase = CoupledPhase::AwaitProbe(state);
                    Step::waiting()
                }
            },
            CoupledPhase::Store { origin, result } => {
                let addr = OUT_BASE + u64::from(origin) * 4;
                if view.store(self.out_st, addr, Value::word(result)) {
                    self.phase = CoupledPhase::AwaitAck;
                    Step::moved()
                } else {
                    self.phase = CoupledPhase::Store { origin, result };
                    Step::blocked(Resource::Port(self.out_port))
                }
            }
            CoupledPhase::AwaitAck => {
                if view.stores_acked(self.out_st) == view.stores_issued(self.out_st) {
                    self.phase = CoupledPhase::FetchQuery;
                    Step::moved()
                } else {
                    self.phase = CoupledPhase::AwaitAck;
                    Step::blocked(Resource::Acks(self.out_st))
                }
            }
        }
    }
}

pub(super) fn build_binsearch(spec: &BuildSpec, w: &SortedKeys) -> Result<World, SimError> {
    let n = w.keys.len();
    if n == 0 {
        return Err(SimError::Config("binary search needs at least one key".into()));
    }
    let n32 = u32::try_from(n)
        .map_err(|_| SimError::Config("key array too large to index with 32 bits".into()))?;
    let chase: Arc<dyn ChaseSpec> = match spec.kind {
        KernelKind::BinsearchFor => {
            Arc::new(FixedTripSearch { base: CHASE_BASE, n: n32, passes: n32.ilog2() + 1 })
        }
        _ => Arc::new(EarlyExitSearch { base: CHASE_BASE, n: n32 }),
    };
    assemble(spec, "keys", w.keys.clone(), &w.probes, chase)
}

pub(super) fn build_hashtable(spec: &BuildSpec, w: &HashTableImage) -> Result<World, SimError> {
    if !w.buckets.is_power_of_two() {
        return Err(SimError::Config("hash table needs a power-of-two bucket count".into()));
    }
    if (w.entries.len() as u64) < u64::from(w.buckets) {
        return Err(SimError::Config("hash table image smaller than its bucket array".into()));
    }
    let mut image = Vec::with_capacity(w.entries.len() * 4);
    for e in &w.entries {
        image.extend_from_slice(&[e.key, e.value, e.next, 0]);
    }
    let chase = Arc::new(ChainLookup { base: CHASE_BASE, buckets: w.buckets });
    assemble(spec, "table", image, &w.lookups, chase)
}

fn assemble(
    spec: &BuildSpec,
    region: &str,
    image: Vec<u32>,
    queries: &[u32],
    chase: Arc<dyn ChaseSpec>,
) -> Result<World, SimError> {
    let n_q = queries.len() as u64;
    if n_q > u64::from(ORIGIN_MASK) + 1 {
        return Err(SimError::Config(format!(
            "query origins are packed into {ORIGIN_BITS} bits; {n_q} queries exceed that"
        )));
    }
    let window = match spec.variant {
        Variant::Coupled => 1,
        Variant::Decoupled if spec.kind == KernelKind::BinsearchFor => spec.tuning.chunk,
        Variant::Decoupled => spec.tuning.rif,
    };
    let mut b = WorldBuilder::new(spec.seed);
    b.memlog(spec.memlog);
    let chase_port = b.region(region, CHASE_BASE, image, spec.irregular.clone());
    let probes_port =
        b.region("probes", PROBES_BASE, queries.to_vec(), PortModel::Fixed(spec.sequential));
    let out_port =
        b.region("out", OUT_BASE, vec![0; queries.len()], PortModel::Fixed(spec.sequential));
    let chase_ld = b.decouple(&format!("{region}_ld"), chase_port, window);
    let probes_ld = b.decouple("probes_ld", probes_port, window);
    let out_st = b.store_site("out_st", out_port);

    match spec.variant {
        Variant::Coupled => {
            let p = b.spawn(Box::new(CoupledChase {
                spec: chase,
                chase_ld,
                probes_ld,
                out_st,
                out_port,
                queries: n_q,
                taken: 0,
                phase: CoupledPhase::FetchQuery,
            }));
            b.bind_decouple(chase_ld, p, p);
            b.bind_decouple(probes_ld, p, p);
            b.bind_site(out_st, p);
        }
        Variant::Decoupled if spec.kind == KernelKind::BinsearchFor => {
            let states = b.stream("states", window);
            let p = b.spawn(Box::new(ChunkedChase {
                spec: chase,
                chase_ld,
                probes_ld,
                states,
                out_st,
                out_port,
                window: window as u64,
                queries: n_q,
                started: 0,
                stored: 0,
                hold: ChunkHold::None,
            }));
            let q = b.spawn(Box::new(QueryStreamer { probes_ld, total: n_q, sent: 0 }));
            b.bind_decouple(chase_ld, p, p);
            b.bind_decouple(probes_ld, q, p);
            b.bind_stream(states, p, p);
            b.bind_site(out_st, p);
        }
        Variant::Decoupled => {
            let inflight = b.stream("inflight", window);
            let recirc = b.stream("recirc", window + 2);
            let finish = b.stream("finish", 1);
            let r = b.spawn(Box::new(RunaheadResolve {
                spec: chase.clone(),
                chase_ld,
                inflight,
                recirc,
                finish,
                out_st,
                out_port,
                queries: n_q,
                stored: 0,
                parked: Parked::None,
            }));
            let i = b.spawn(Box::new(RunaheadIssue {
                spec: chase,
                chase_ld,
                probes_ld,
                inflight,
                recirc,
                finish,
                started: 0,
                held: None,
            }));
            let q = b.spawn(Box::new(QueryStreamer { probes_ld, total: n_q, sent: 0 }));
            b.bind_decouple(chase_ld, i, r);
            b.bind_decouple(probes_ld, q, i);
            b.bind_stream(inflight, i, r);
            b.bind_stream(recirc, r, i);
            b.bind_stream(finish, r, i);
            b.bind_site(out_st, r);
        }
    }
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::testutil::{assert_matches_oracle, port_stat, run, spec_with, tuned};
    use crate::oracle;
    use crate::workload::{generate, Workload, WorkloadSpec};

    fn drive_spec(spec: &dyn ChaseSpec, image: &[u32], key: u32, origin: u32) -> (u32, u64) {
        let mut state = spec.init(key, origin);
        let mut loads = 0;
        loop {
            let i = ((spec.addr(&state) - CHASE_BASE) / 4) as usize;
            let resp = Value::from_words(&image[i..i + spec.words() as usize]);
            loads += 1;
            match spec.advance(&state, &resp) {
                ChaseOutcome::Continue(next) => state = next,
                ChaseOutcome::Done { origin: o, result } => {
                    assert_eq!(o, origin, "origin must ride through the chase");
                    return (result, loads);
                }
            }
        }
    }

    fn keys_0_to(n: u32) -> Vec<u32> {
        (0..n).map(|i| 2 * (i + 1)).collect()
    }

    #[test]
    fn early_exit_machine_agrees_with_the_reference_search() {
        let keys = keys_0_to(13);
        let spec = EarlyExitSearch { base: CHASE_BASE, n: 13 };
        for key in 0..=30 {
            let (result, loads) = drive_spec(&spec, &keys, key, 5);
            assert_eq!((result, loads), oracle::search_steps(&keys, key), "key {key}");
        }
    }

    #[test]
    fn fixed_trip_machine_agrees_with_the_reference_search() {
        for n in [1u32, 2, 3, 8, 13, 100] {
            let keys = keys_0_to(n);
            let spec = FixedTripSearch { base: CHASE_BASE, n, passes: n.ilog2() + 1 };
            for key in 0..=(2 * n + 2) {
                let (result, loads) = drive_spec(&spec, &keys, key, 0);
                assert_eq!(result, oracle::fixed_search(&keys, key), "n {n} key {key}");
                assert_eq!(loads, oracle::fixed_search_passes(n as usize), "n {n} key {key}");
            }
        }
    }

    #[test]
    fn chain_machine_agrees_with_the_reference_walk() {
        let w = generate(&WorkloadSpec::HashTable { keys: 40, buckets: 8, lookups: 1 }, 3).unwrap();
        let Workload::HashTable(img) = &w else { unreachable!() };
        let mut image = Vec::new();
        for e in &img.entries {
            image.extend_from_slice(&[e.key, e.value, e.next, 0]);
        }
        let spec = ChainLookup { base: CHASE_BASE, buckets: img.buckets };
        let probes: Vec<u32> =
            img.entries.iter().map(|e| e.key).filter(|&k| k != 0).chain(1000..1040).collect();
        for key in probes {
            let (result, loads) = drive_spec(&spec, &image, key, 7);
            assert_eq!((result, loads), oracle::chain_walk(img, key), "key {key}");
        }
    }

    #[test]
    fn runahead_binsearch_matches_the_oracle() {
        let w = Workload::SortedKeys(SortedKeys {
            keys: keys_0_to(8),
            probes: vec![6, 1, 16, 9, 2, 15],
        });
        let spec = spec_with(KernelKind::Binsearch, Variant::Decoupled, &w, 5, tuned(4, 4));
        let (world, r) = run(&spec);
        assert_matches_oracle(&world, &r, &spec);
        assert_eq!(world.region_data("out").unwrap()[..4], [2, NIL, 7, NIL]);
    }

    #[test]
    fn runahead_with_a_single_slot_still_completes() {
        let w = Workload::SortedKeys(SortedKeys { keys: keys_0_to(8), probes: vec![6, 1, 16, 9] });
        let spec = spec_with(KernelKind::Binsearch, Variant::Decoupled, &w, 7, tuned(1, 1));
        let (world, r) = run(&spec);
        assert_matches_oracle(&world, &r, &spec);
    }

    #[test]
    fn chunked_search_matches_the_oracle_at_several_window_sizes() {
        let w = Workload::SortedKeys(SortedKeys {
            keys: keys_0_to(8),
            probes: vec![6, 1, 16, 9, 4, 11, 2, 8],
        });
        for chunk in [1, 2, 8] {
            let spec =
                spec_with(KernelKind::BinsearchFor, Variant::Decoupled, &w, 5, tuned(4, chunk));
            let (world, r) = run(&spec);
            assert_matches_oracle(&world, &r, &spec);
            let probes = port_stat(&r.stats, "keys").reads;
            assert_eq!(probes, 8 * 4, "chunk {chunk}: four probes per query on eight keys");
        }
    }

    #[test]
    fn coupled_chase_is_bounded_below_by_serialized_loads() {
        let w = Workload::SortedKeys(SortedKeys { keys: keys_0_to(8), probes: vec![6, 1, 16, 9] });
        let latency = 20;
        let spec = spec_with(KernelKind::Binsearch, Variant::Coupled, &w, latency, tuned(4, 4));
        let (world, r) = run(&spec);
        assert_matches_oracle(&world, &r, &spec);
        let report = oracle::oracle_execute(spec.kind, &w, &spec.params).unwrap();
        assert!(
            r.stats.cycles >= report.serialized_loads * latency,
            "{} cycles for {} serialized loads at latency {latency}",
            r.stats.cycles,
            report.serialized_loads
        );
    }

    #[test]
    fn hashtable_lookup_matches_the_oracle_in_both_variants() {
        let w = generate(&WorkloadSpec::HashTable { keys: 64, buckets: 16, lookups: 24 }, 11)
            .unwrap();
        for variant in [Variant::Decoupled, Variant::Coupled] {
            let spec = spec_with(KernelKind::Hashtable, variant, &w, 6, tuned(8, 8));
            let (world, r) = run(&spec);
            assert_matches_oracle(&world, &r, &spec);
        }
    }

    #[test]
    fn too_many_queries_for_the_origin_field_is_a_config_error() {
        let w = Workload::SortedKeys(SortedKeys {
            keys: keys_0_to(4),
            probes: vec![0; (1 << ORIGIN_BITS) + 1],
        });
        let spec = spec_with(KernelKind::Binsearch, Variant::Decoupled, &w, 5, tuned(4, 4));
        match super::super::build_world(&spec) {
            Err(SimError::Config(msg)) => assert!(msg.contains("origins"), "{msg}"),
            other => panic!("expected a config error, got {:?}", other.map(|_| "a world")),
        }
    }
}
