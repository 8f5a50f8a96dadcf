//! Bottom-up merge sort in two memory layouts.
//!
//! The plain form merges from the table into the result region every pass,
//! then copies the result back before the next pass. The compact form
//! alternates source and destination each pass and skips the copies
//! entirely, halving the memory traffic.
//!
//! Every pass merges adjacent runs of width `2^p`. Two access processes
//! stream the left and right runs of each pair, the merge engine emits one
//! element per cycle into the destination, and a driver gates passes on the
//! store-acknowledgement barrier so no pass reads words the previous one
//! has not finished writing.

use crate::channel::{DecoupleId, StreamId, Value};
use crate::engine::{PortModel, Process, Resource, SimError, Step, View, World, WorldBuilder};
use crate::memsys::{Addr, PortId, StoreSiteId};
use crate::workload::SortWorkload;

use super::{BuildSpec, KernelKind, Variant};

const TABLE_BASE: Addr = 0x1000_0000;
const RESULT_BASE: Addr = 0x2000_0000;

/// Half-open bounds of one run: the first or second half of the pair
/// starting at `base` in pass width `w`.
fn run_span(n: u64, w: u64, base: u64, second: bool) -> (u64, u64) {
    if second {
        ((base + w).min(n), (base + 2 * w).min(n))
    } else {
        (base, (base + w).min(n))
    }
}

/// Issues the loads for one side of every run pair, one per cycle, one
/// pass per start token. Without run prefetch it idles a cycle at each
/// run boundary.
struct RunReader {
    label: &'static str,
    start: StreamId,
    chans: [DecoupleId; 2],
    bases: [Addr; 2],
    second: bool,
    n: u64,
    passes: u32,
    pause: bool,
    pass: u32,
    running: bool,
    stall: bool,
    base: u64,
    idx: u64,
    end: u64,
}

impl RunReader {
    fn new(
        label: &'static str,
        start: StreamId,
        chans: [DecoupleId; 2],
        bases: [Addr; 2],
        second: bool,
        n: u64,
        passes: u32,
        pause: bool,
    ) -> Self {
        RunReader {
            label,
            start,
            chans,
            bases,
            second,
            n,
            passes,
            pause,
            pass: 0,
            running: false,
            stall: false,
            base: 0,
            idx: 0,
            end: 0,
        }
    }

    /// Positions the cursor on the first non-empty run at or after `base`;
    /// false means the pass holds no further work for this side.
    fn seek(&mut self, mut base: u64) -> bool {
        let w = 1u64 << self.pass;
        while base < self.n {
            let (s, e) = run_span(self.n, w, base, self.second);
            if s < e {
                self.base = base;
                self.idx = s;
                self.end = e;
                return true;
            }
            base += 2 * w;
        }
        false
    }
}

impl Process for RunReader {
    fn name(&self) -> &str {
        self.label
    }

    fn step(&mut self, view: &mut View) -> Step {
        if self.pass == self.passes {
            return Step::done();
        }
        if !self.running {
            if view.stream_deq(self.start).is_none() {
                return Step::waiting();
            }
            self.running = true;
            if !self.seek(0) {
                self.pass += 1;
                self.running = false;
                return if self.pass == self.passes { Step::done() } else { Step::moved() };
            }
        }
        if self.stall {
            self.stall = false;
            return Step::moved();
        }
        let parity = (self.pass & 1) as usize;
        let ch = self.chans[parity];
        if !view.decouple_request(ch, self.bases[parity] + self.idx * 4) {
            return Step::blocked(Resource::Decouple(ch));
        }
        self.idx += 1;
        if self.idx == self.end {
            let w = 1u64 << self.pass;
            if self.seek(self.base + 2 * w) {
                self.stall = self.pause;
            } else {
                self.pass += 1;
                self.running = false;
                if self.pass == self.passes {
                    return Step::done();
                }
            }
        }
        Step::moved()
    }
}

/// Merges the two run streams, one element emitted per cycle, and signals
/// the driver after each pass once every store has been acknowledged.
struct MergeExec {
    chans: [(DecoupleId, DecoupleId); 2],
    sites: [StoreSiteId; 2],
    dst_bases: [Addr; 2],
    dst_ports: [PortId; 2],
    done: StreamId,
    n: u64,
    passes: u32,
    pass: u32,
    base: u64,
    i_take: u64,
    i_emit: u64,
    j_take: u64,
    j_emit: u64,
    out: u64,
    hold_i: Option<u32>,
    hold_j: Option<u32>,
    parked: Option<(u64, u32)>,
    drain: bool,
}

impl MergeExec {
    fn load_pair(&mut self) {
        let w = 1u64 << self.pass;
        let (is, ie) = run_span(self.n, w, self.base, false);
        let (js, je) = run_span(self.n, w, self.base, true);
        self.i_take = ie - is;
        self.i_emit = ie - is;
        self.j_take = je - js;
        self.j_emit = je - js;
    }

    fn advance(&mut self) {
        let w = 1u64 << self.pass;
        let next = self.base + 2 * w;
        if next >= self.n {
            self.drain = true;
        } else {
            self.base = next;
            self.load_pair();
        }
    }
}

impl Process for MergeExec {
    fn name(&self) -> &str {
        "merge"
    }

    fn step(&mut self, view: &mut View) -> Step {
        if self.pass == self.passes {
            return Step::done();
        }
        let parity = (self.pass & 1) as usize;
        let (ich, jch) = self.chans[parity];
        let site = self.sites[parity];
        let mut progressed = false;
        let mut store_used = false;
        if let Some((slot, v)) = self.parked.take() {
            if view.store(site, self.dst_bases[parity] + slot * 4, Value::word(v)) {
                store_used = true;
                progressed = true;
            } else {
                self.parked = Some((slot, v));
                return Step::blocked(Resource::Port(self.dst_ports[parity]));
            }
        }
        if self.hold_i.is_none() && self.i_take > 0 {
            if let Some(v) = view.decouple_response(ich) {
                self.hold_i = Some(v.as_word());
                self.i_take -= 1;
                progressed = true;
            }
        }
        if self.hold_j.is_none() && self.j_take > 0 {
            if let Some(v) = view.decouple_response(jch) {
                self.hold_j = Some(v.as_word());
                self.j_take -= 1;
                progressed = true;
            }
        }
        if !self.drain && !store_used {
            let pick = match (self.i_emit > 0, self.j_emit > 0) {
                (true, true) => match (self.hold_i, self.hold_j) {
                    (Some(a), Some(b)) => {
                        if a <= b {
                            self.hold_i = None;
                            self.i_emit -= 1;
                            Some(a)
                        } else {
                            self.hold_j = None;
                            self.j_emit -= 1;
                            Some(b)
                        }
                    }
                    _ => None,
                },
                (true, false) => self.hold_i.take().map(|a| {
                    self.i_emit -= 1;
                    a
                }),
                (false, true) => self.hold_j.take().map(|b| {
                    self.j_emit -= 1;
                    b
                }),
                (false, false) => None,
            };
            if let Some(v) = pick {
                let slot = self.out;
                self.out += 1;
                if self.i_emit == 0 && self.j_emit == 0 {
                    self.advance();
                }
                if !view.store(site, self.dst_bases[parity] + slot * 4, Value::word(v)) {
                    self.parked = Some((slot, v));
                }
                progressed = true;
            }
        }
        if self.drain {
            if self.parked.is_none()
                && view.stores_acked(site) == view.stores_issued(site)
            {
                if view.stream_enq(self.done, Value::word(1)) {
                    self.pass += 1;
                    if self.pass == self.passes {
                        return Step::done();
                    }
                    self.base = 0;
                    self.out = 0;
                    self.drain = false;
                    self.load_pair();
                    return Step::moved();
                }
                return Step::blocked(Resource::Stream(self.done));
            }
            return if progressed { Step::moved() } else { Step::blocked(Resource::Acks(site)) };
        }
        if progressed {
            Step::moved()
        } else {
            Step::waiting()
        }
    }
}

enum CopyPhase {
    Idle,
    Run,
    Drain,
    Signal,
}

/// Copies the result region back over the table between plain passes.
struct CopyPass {
    start: StreamId,
    done: StreamId,
    c_ld: DecoupleId,
    cp_st: StoreSiteId,
    n: u64,
    rounds: u32,
    requested: u64,
    stored: u64,
    round: u32,
    held: Option<u32>,
    phase: CopyPhase,
}

impl Process for CopyPass {
    fn name(&self) -> &str {
        "copy"
    }

    fn step(&mut self, view: &mut View) -> Step {
        if self.round == self.rounds {
            return Step::done();
        }
        match self.phase {
            CopyPhase::Idle => {
                if view.stream_deq(self.start).is_some() {
                    self.phase = CopyPhase::Run;
                    Step::moved()
                } else {
                    Step::waiting()
                }
            }
            CopyPhase::Run => {
                let mut progressed = false;
                let candidate = match self.held.take() {
                    Some(v) => Some(v),
                    None => {
                        let c = view.decouple_response(self.c_ld).map(|v| v.as_word());
                        progressed |= c.is_some();
                        c
                    }
                };
                if let Some(v) = candidate {
                    if view.store(self.cp_st, TABLE_BASE + self.stored * 4, Value::word(v)) {
                        self.stored += 1;
                        progressed = true;
                    } else {
                        self.held = Some(v);
                    }
                }
                if self.requested < self.n
                    && view.decouple_request(self.c_ld, RESULT_BASE + self.requested * 4)
                {
                    self.requested += 1;
                    progressed = true;
                }
                if self.stored == self.n {
                    self.phase = CopyPhase::Drain;
                    return Step::moved();
                }
                if progressed {
                    Step::moved()
                } else {
                    Step::waiting()
                }
            }
            CopyPhase::Drain => {
                if view.stores_acked(self.cp_st) == view.stores_issued(self.cp_st) {
                    self.phase = CopyPhase::Signal;
                    Step::moved()
                } else {
                    Step::blocked(Resource::Acks(self.cp_st))
                }
            }
            CopyPhase::Signal => {
                if view.stream_enq(self.done, Value::word(1)) {
                    self.round += 1;
                    self.requested = 0;
                    self.stored = 0;
                    self.phase = CopyPhase::Idle;
                    Step::moved()
                } else {
                    Step::blocked(Resource::Stream(self.done))
                }
            }
        }
    }
}

enum DriverPhase {
    Launch,
    AwaitExec,
    LaunchCopy,
    AwaitCopy,
}

/// Releases the run readers each pass and, in the plain form, the copy
/// process between passes.
struct PassDriver {
    starts: [StreamId; 2],
    start_cp: Option<StreamId>,
    done_ex: StreamId,
    done_cp: Option<StreamId>,
    passes: u32,
    pass: u32,
    phase: DriverPhase,
}

impl Process for PassDriver {
    fn name(&self) -> &str {
        "driver"
    }

    fn step(&mut self, view: &mut View) -> Step {
        if self.pass == self.passes {
            return Step::done();
        }
        match self.phase {
            DriverPhase::Launch => {
                for s in self.starts {
                    if !view.stream_enq(s, Value::word(1)) {
                        view.fault("start token overran its slot");
                        return Step::waiting();
                    }
                }
                self.phase = DriverPhase::AwaitExec;
                Step::moved()
            }
            DriverPhase::AwaitExec => {
                if view.stream_deq(self.done_ex).is_none() {
                    return Step::waiting();
                }
                if self.pass + 1 == self.passes {
                    return Step::done();
                }
                match self.start_cp {
                    Some(_) => self.phase = DriverPhase::LaunchCopy,
                    None => {
                        self.pass += 1;
                        self.phase = DriverPhase::Launch;
                    }
                }
                Step::moved()
            }
            DriverPhase::LaunchCopy => {
                let s = self.start_cp.expect("copy launch needs a copy token");
                if !view.stream_enq(s, Value::word(1)) {
                    view.fault("start token overran its slot");
                    return Step::waiting();
                }
                self.phase = DriverPhase::AwaitCopy;
                Step::moved()
            }
            DriverPhase::AwaitCopy => {
                let s = self.done_cp.expect("copy wait needs a copy token");
                if view.stream_deq(s).is_none() {
                    return Step::waiting();
                }
                self.pass += 1;
                self.phase = DriverPhase::Launch;
                Step::moved()
            }
        }
    }
}

enum CmPhase {
    Pick,
    Await(bool),
    AwaitAck,
    CopyLoad,
    AwaitCopy,
    CopyStore(u32),
    AwaitCopyAck,
}

/// Fully serialized baseline: one outstanding access at any moment, every
/// store acknowledged before the next element moves.
struct CoupledMerge {
    t_ld: DecoupleId,
    r_ld: DecoupleId,
    st_r: StoreSiteId,
    st_t: StoreSiteId,
    t_port: PortId,
    r_port: PortId,
    opt: bool,
    n: u64,
    passes: u32,
    pass: u32,
    base: u64,
    i_next: u64,
    i_left: u64,
    j_next: u64,
    j_left: u64,
    hold_i: Option<u32>,
    hold_j: Option<u32>,
    out: u64,
    copy_i: u64,
    phase: CmPhase,
}

impl CoupledMerge {
    fn src(&self) -> (DecoupleId, Addr) {
        if self.opt && self.pass & 1 == 1 {
            (self.r_ld, RESULT_BASE)
        } else {
            (self.t_ld, TABLE_BASE)
        }
    }

    fn dst(&self) -> (StoreSiteId, Addr, PortId) {
        if self.opt && self.pass & 1 == 1 {
            (self.st_t, TABLE_BASE, self.t_port)
        } else {
            (self.st_r, RESULT_BASE, self.r_port)
        }
    }

    fn load_pair(&mut self) {
        let w = 1u64 << self.pass;
        let (is, ie) = run_span(self.n, w, self.base, false);
        let (js, je) = run_span(self.n, w, self.base, true);
        self.i_next = is;
        self.i_left = ie - is;
        self.j_next = js;
        self.j_left = je - js;
    }

    fn next_pass(&mut self) -> Option<Step> {
        self.pass += 1;
        if self.pass == self.passes {
            return Some(Step::done());
        }
        self.base = 0;
        self.out = 0;
        self.load_pair();
        self.phase = CmPhase::Pick;
        None
    }

    fn end_of_pass(&mut self) -> Option<Step> {
        if !self.opt && self.pass + 1 < self.passes {
            self.copy_i = 0;
            self.phase = CmPhase::CopyLoad;
            None
        } else {
            self.next_pass()
        }
    }
}

impl Process for CoupledMerge {
    fn name(&self) -> &str {
        "merge"
    }

    fn step(&mut self, view: &mut View) -> Step {
        if self.pass == self.passes {
            return Step::done();
        }
        match self.phase {
            CmPhase::Pick => {
                let i_live = self.i_left > 0 || self.hold_i.is_some();
                let j_live = self.j_left > 0 || self.hold_j.is_some();
                if !i_live && !j_live {
                    let w = 1u64 << self.pass;
                    let next = self.base + 2 * w;
                    if next < self.n {
                        self.base = next;
                        self.load_pair();
                        return Step::moved();
                    }
                    return match self.end_of_pass() {
                        Some(step) => step,
                        None => Step::moved(),
                    };
                }
                let (ch, src_base) = self.src();
                if i_live && self.hold_i.is_none() {
                    return if view.decouple_request(ch, src_base + self.i_next * 4) {
                        self.i_next += 1;
                        self.i_left -= 1;
                        self.phase = CmPhase::Await(false);
                        Step::moved()
                    } else {
                        Step::blocked(Resource::Decouple(ch))
                    };
                }
                if j_live && self.hold_j.is_none() {
                    return if view.decouple_request(ch, src_base + self.j_next * 4) {
                        self.j_next += 1;
                        self.j_left -= 1;
                        self.phase = CmPhase::Await(true);
                        Step::moved()
                    } else {
                        Step::blocked(Resource::Decouple(ch))
                    };
                }
                let (from_j, v) = match (self.hold_i, self.hold_j) {
                    (Some(a), Some(b)) => {
                        if a <= b {
                            (false, a)
                        } else {
                            (true, b)
                        }
                    }
                    (Some(a), None) => (false, a),
                    (None, Some(b)) => (true, b),
                    (None, None) => unreachable!("a live side always has a held word"),
                };
                let (site, dst_base, port) = self.dst();
                if view.store(site, dst_base + self.out * 4, Value::word(v)) {
                    if from_j {
                        self.hold_j = None;
                    } else {
                        self.hold_i = None;
                    }
                    self.out += 1;
                    self.phase = CmPhase::AwaitAck;
                    Step::moved()
                } else {
                    Step::blocked(Resource::Port(port))
                }
            }
            CmPhase::Await(is_j) => {
                let (ch, _) = self.src();
                match view.decouple_response(ch) {
                    Some(v) => {
                        if is_j {
                            self.hold_j = Some(v.as_word());
                        } else {
                            self.hold_i = Some(v.as_word());
                        }
                        self.phase = CmPhase::Pick;
                        Step::moved()
                    }
                    None => Step::waiting(),
                }
            }
            CmPhase::AwaitAck => {
                let (site, _, _) = self.dst();
                if view.stores_acked(site) == view.stores_issued(site) {
                    self.phase = CmPhase::Pick;
                    Step::moved()
                } else {
                    Step::blocked(Resource::Acks(site))
                }
            }
            CmPhase::CopyLoad => {
                if view.decouple_request(self.r_ld, RESULT_BASE + self.copy_i * 4) {
                    self.phase = CmPhase::AwaitCopy;
                    Step::moved()
                } else {
                    Step::blocked(Resource::Decouple(self.r_ld))
                }
            }
            CmPhase::AwaitCopy => match view.decouple_response(self.r_ld) {
                Some(v) => {
                    self.phase = CmPhase::CopyStore(v.as_word());
                    Step::moved()
                }
                None => Step::waiting(),
            },
            CmPhase::CopyStore(v) => {
                if view.store(self.st_t, TABLE_BASE + self.copy_i * 4, Value::word(v)) {
                    self.phase = CmPhase::AwaitCopyAck;
                    Step::moved()
                } else {
                    Step::blocked(Resource::Port(self.t_port))
                }
            }
            CmPhase::AwaitCopyAck => {
                if view.stores_acked(self.st_t) == view.stores_issued(self.st_t) {
                    self.copy_i += 1;
                    if self.copy_i < self.n {
                        self.phase = CmPhase::CopyLoad;
                    } else if let Some(step) = self.next_pass() {
                        return step;
                    }
                    Step::moved()
                } else {
                    Step::blocked(Resource::Acks(self.st_t))
                }
            }
        }
    }
}

pub(super) fn build(spec: &BuildSpec, w: &SortWorkload) -> Result<World, SimError> {
    let n = w.data.len() as u64;
    if n == 0 {
        return Err(SimError::Config("sorting an empty table is undefined".into()));
    }
    let passes: u32 = if n <= 1 { 0 } else { w.data.len().next_power_of_two().ilog2() };
    let opt = spec.kind == KernelKind::MergesortOpt;

    let mut b = WorldBuilder::new(spec.seed);
    b.memlog(spec.memlog);
    let seq = PortModel::Fixed(spec.sequential);
    let table_port = b.region("table", TABLE_BASE, w.data.clone(), seq.clone());
    let result_port = b.region("result", RESULT_BASE, vec![0; w.data.len()], seq);

    match spec.variant {
        Variant::Coupled => {
            let t_ld = b.decouple("t_ld", table_port, 1);
            let r_ld = b.decouple("r_ld", result_port, 1);
            let st_r = b.store_site("st_r", result_port);
            let st_t = b.store_site("st_t", table_port);
            let mut p = CoupledMerge {
                t_ld,
                r_ld,
                st_r,
                st_t,
                t_port: table_port,
                r_port: result_port,
                opt,
                n,
                passes,
                pass: 0,
                base: 0,
                i_next: 0,
                i_left: 0,
                j_next: 0,
                j_left: 0,
                hold_i: None,
                hold_j: None,
                out: 0,
                copy_i: 0,
                phase: CmPhase::Pick,
            };
            p.load_pair();
            let p = b.spawn(Box::new(p));
            b.bind_decouple(t_ld, p, p);
            b.bind_decouple(r_ld, p, p);
            b.bind_site(st_r, p);
            b.bind_site(st_t, p);
        }
        Variant::Decoupled => {
            let cap = spec.tuning.stream_capacity;
            let pause = !spec.tuning.prefetch_across_runs;
            let start_i = b.stream("start_i", 1);
            let start_j = b.stream("start_j", 1);
            let done_ex = b.stream("merge_done", 1);
            if opt {
                let i_ld_t = b.decouple("i_ld_t", table_port, cap);
                let j_ld_t = b.decouple("j_ld_t", table_port, cap);
                let i_ld_r = b.decouple("i_ld_r", result_port, cap);
                let j_ld_r = b.decouple("j_ld_r", result_port, cap);
                let st_r = b.store_site("st_r", result_port);
                let st_t = b.store_site("st_t", table_port);
                let mut e = MergeExec {
                    chans: [(i_ld_t, j_ld_t), (i_ld_r, j_ld_r)],
                    sites: [st_r, st_t],
                    dst_bases: [RESULT_BASE, TABLE_BASE],
                    dst_ports: [result_port, table_port],
                    done: done_ex,
                    n,
                    passes,
                    pass: 0,
                    base: 0,
                    i_take: 0,
                    i_emit: 0,
                    j_take: 0,
                    j_emit: 0,
                    out: 0,
                    hold_i: None,
                    hold_j: None,
                    parked: None,
                    drain: false,
                };
                e.load_pair();
                let e = b.spawn(Box::new(e));
                let ir = b.spawn(Box::new(RunReader::new(
                    "i_reader",
                    start_i,
                    [i_ld_t, i_ld_r],
                    [TABLE_BASE, RESULT_BASE],
                    false,
                    n,
                    passes,
                    pause,
                )));
                let jr = b.spawn(Box::new(RunReader::new(
                    "j_reader",
                    start_j,
                    [j_ld_t, j_ld_r],
                    [TABLE_BASE, RESULT_BASE],
                    true,
                    n,
                    passes,
                    pause,
                )));
                let dr = b.spawn(Box::new(PassDriver {
                    starts: [start_i, start_j],
                    start_cp: None,
                    done_ex,
                    done_cp: None,
                    passes,
                    pass: 0,
                    phase: DriverPhase::Launch,
                }));
                b.bind_decouple(i_ld_t, ir, e);
                b.bind_decouple(j_ld_t, jr, e);
                b.bind_decouple(i_ld_r, ir, e);
                b.bind_decouple(j_ld_r, jr, e);
                b.bind_site(st_r, e);
                b.bind_site(st_t, e);
                b.bind_stream(start_i, dr, ir);
                b.bind_stream(start_j, dr, jr);
                b.bind_stream(done_ex, e, dr);
            } else {
                let i_ld = b.decouple("i_ld", table_port, cap);
                let j_ld = b.decouple("j_ld", table_port, cap);
                let c_ld = b.decouple("c_ld", result_port, cap);
                let exec_st = b.store_site("exec_st", result_port);
                let cp_st = b.store_site("cp_st", table_port);
                let start_cp = b.stream("start_copy", 1);
                let done_cp = b.stream("copy_done", 1);
                let mut e = MergeExec {
                    chans: [(i_ld, j_ld); 2],
                    sites: [exec_st; 2],
                    dst_bases: [RESULT_BASE; 2],
                    dst_ports: [result_port; 2],
                    done: done_ex,
                    n,
                    passes,
                    pass: 0,
                    base: 0,
                    i_take: 0,
                    i_emit: 0,
                    j_take: 0,
                    j_emit: 0,
                    out: 0,
                    hold_i: None,
                    hold_j: None,
                    parked: None,
                    drain: false,
                };
                e.load_pair();
                let e = b.spawn(Box::new(e));
                let ir = b.spawn(Box::new(RunReader::new(
                    "i_reader",
                    start_i,
                    [i_ld; 2],
                    [TABLE_BASE; 2],
                    false,
                    n,
                    passes,
                    pause,
                )));
                let jr = b.spawn(Box::new(RunReader::new(
                    "j_reader",
                    start_j,
                    [j_ld; 2],
                    [TABLE_BASE; 2],
                    true,
                    n,
                    passes,
                    pause,
                )));
                let cp = b.spawn(Box::new(CopyPass {
                    start: start_cp,
                    done: done_cp,
                    c_ld,
                    cp_st,
                    n,
                    rounds: passes.saturating_sub(1),
                    requested: 0,
                    stored: 0,
                    round: 0,
                    held: None,
                    phase: CopyPhase::Idle,
                }));
                let dr = b.spawn(Box::new(PassDriver {
                    starts: [start_i, start_j],
                    start_cp: Some(start_cp),
                    done_ex,
                    done_cp: Some(done_cp),
                    passes,
                    pass: 0,
                    phase: DriverPhase::Launch,
                }));
                b.bind_decouple(i_ld, ir, e);
                b.bind_decouple(j_ld, jr, e);
                b.bind_decouple(c_ld, cp, cp);
                b.bind_site(exec_st, e);
                b.bind_site(cp_st, cp);
                b.bind_stream(start_i, dr, ir);
                b.bind_stream(start_j, dr, jr);
                b.bind_stream(start_cp, dr, cp);
                b.bind_stream(done_ex, e, dr);
                b.bind_stream(done_cp, cp, dr);
            }
        }
    }
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::testutil::{assert_matches_oracle, run, spec_with, tuned};
    use crate::workload::{generate, Workload, WorkloadSpec};

    fn sort_load(data: Vec<u32>) -> Workload {
        Workload::Sort(SortWorkload { data })
    }

    #[test]
    fn eight_elements_sort_with_the_expected_traffic() {
        let w = sort_load(vec![5, 2, 7, 1, 8, 3, 6, 4]);
        for kind in [KernelKind::Mergesort, KernelKind::MergesortOpt] {
            let spec = spec_with(kind, Variant::Decoupled, &w, 4, tuned(4, 4));
            let (world, r) = run(&spec);
            assert_matches_oracle(&world, &r, &spec);
        }
    }

    #[test]
    fn random_data_sorts_in_every_variant() {
        let w = generate(&WorkloadSpec::Sort { n: 234 }, 9).unwrap();
        for kind in [KernelKind::Mergesort, KernelKind::MergesortOpt] {
            for variant in [Variant::Decoupled, Variant::Coupled] {
                let spec = spec_with(kind, variant, &w, 3, tuned(8, 8));
                let (world, r) = run(&spec);
                assert_matches_oracle(&world, &r, &spec);
            }
        }
    }

    #[test]
    fn single_element_needs_no_passes() {
        let w = sort_load(vec![77]);
        for kind in [KernelKind::Mergesort, KernelKind::MergesortOpt] {
            for variant in [Variant::Decoupled, Variant::Coupled] {
                let spec = spec_with(kind, variant, &w, 4, tuned(4, 4));
                let (world, r) = run(&spec);
                assert_matches_oracle(&world, &r, &spec);
                assert_eq!(world.region_data("table").unwrap(), &[77]);
            }
        }
    }

    #[test]
    fn odd_length_leaves_the_tail_in_place() {
        let w = sort_load(vec![9, 4, 11, 2, 6]);
        for kind in [KernelKind::Mergesort, KernelKind::MergesortOpt] {
            for variant in [Variant::Decoupled, Variant::Coupled] {
                let spec = spec_with(kind, variant, &w, 4, tuned(4, 4));
                let (world, r) = run(&spec);
                assert_matches_oracle(&world, &r, &spec);
            }
        }
    }

    #[test]
    fn run_prefetch_changes_pacing_but_not_the_answer() {
        let w = generate(&WorkloadSpec::Sort { n: 64 }, 5).unwrap();
        let mut fast = tuned(8, 8);
        fast.prefetch_across_runs = true;
        let slow = tuned(8, 8);
        let spec_fast = spec_with(KernelKind::MergesortOpt, Variant::Decoupled, &w, 6, fast);
        let spec_slow = spec_with(KernelKind::MergesortOpt, Variant::Decoupled, &w, 6, slow);
        let (world_fast, r_fast) = run(&spec_fast);
        let (world_slow, r_slow) = run(&spec_slow);
        assert_matches_oracle(&world_fast, &r_fast, &spec_fast);
        assert_matches_oracle(&world_slow, &r_slow, &spec_slow);
        assert!(r_fast.stats.cycles <= r_slow.stats.cycles);
    }
}
