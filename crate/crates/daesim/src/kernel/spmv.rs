//! Sparse matrix-vector multiply over CSR data, plus the iterated variant
//! that feeds each product back through a scaling copy.
//!
//! The decoupled pipeline splits into six processes: three streamers walk
//! the row-pointer, column, and value arrays; an access process differences
//! row pointers into per-row element counts; another turns column indices
//! into operand-vector loads; the execute engine multiply-accumulates one
//! element per cycle and stores one word per row. The iterated variant adds
//! a copy-back process and a driver that paces rounds through start and
//! done tokens, with acknowledgement barriers keeping the vector regions
//! consistent between rounds.

use crate::channel::{DecoupleId, StreamId, Value};
use crate::engine::{PortModel, Process, Resource, SimError, Step, View, World, WorldBuilder};
use crate::memsys::{Addr, PortId, StoreSiteId};
use crate::workload::CsrWorkload;

use super::{BuildSpec, KernelKind, Variant};

const ROWS_BASE: Addr = 0x1000_0000;
const COLS_BASE: Addr = 0x2000_0000;
const VALS_BASE: Addr = 0x3000_0000;
const VEC_BASE: Addr = 0x4000_0000;
const OUT_BASE: Addr = 0x5000_0000;

/// Streams a region's words in order, one load per cycle; token-gated
/// instances run one round per start token.
struct SeqStreamer {
    label: &'static str,
    ld: DecoupleId,
    base: Addr,
    total: u64,
    rounds: u32,
    start: Option<StreamId>,
    sent: u64,
    round: u32,
    running: bool,
}

impl SeqStreamer {
    fn new(
        label: &'static str,
        ld: DecoupleId,
        base: Addr,
        total: u64,
        rounds: u32,
        start: Option<StreamId>,
    ) -> Self {
        SeqStreamer { label, ld, base, total, rounds, start, sent: 0, round: 0, running: start.is_none() }
    }
}

impl Process for SeqStreamer {
    fn name(&self) -> &str {
        self.label
    }

    fn step(&mut self, view: &mut View) -> Step {
        if !self.running {
            let Some(start) = self.start else {
                return Step::waiting();
            };
            if view.stream_deq(start).is_none() {
                return Step::waiting();
            }
            self.running = true;
        }
        if view.decouple_request(self.ld, self.base + self.sent * 4) {
            self.sent += 1;
            if self.sent == self.total {
                self.sent = 0;
                self.round += 1;
                if self.round == self.rounds {
                    return Step::done();
                }
                self.running = false;
            }
            Step::moved()
        } else {
            Step::blocked(Resource::Decouple(self.ld))
        }
    }
}

/// Differences consecutive row pointers into per-row element counts.
struct RowsAccess {
    rows_ld: DecoupleId,
    counts: StreamId,
    rows: u64,
    rounds: u32,
    prev: Option<u32>,
    emitted: u64,
    round: u32,
    parked: Option<u32>,
}

impl Process for RowsAccess {
    fn name(&self) -> &str {
        "rows_access"
    }

    fn step(&mut self, view: &mut View) -> Step {
        if let Some(c) = self.parked.take() {
            return if view.stream_enq(self.counts, Value::word(c)) {
                Step::moved()
            } else {
                self.parked = Some(c);
                Step::blocked(Resource::Stream(self.counts))
            };
        }
        if self.round == self.rounds {
            return Step::done();
        }
        match view.decouple_response(self.rows_ld) {
            Some(v) => {
                let v = v.as_word();
                if let Some(p) = self.prev {
                    let count = v.wrapping_sub(p);
                    self.emitted += 1;
                    if !view.stream_enq(self.counts, Value::word(count)) {
                        self.parked = Some(count);
                    }
                }
                self.prev = Some(v);
                if self.emitted == self.rows {
                    self.emitted = 0;
                    self.prev = None;
                    self.round += 1;
                }
                Step::moved()
            }
            None => Step::waiting(),
        }
    }
}

/// Turns each column index into a load of the operand vector.
struct ColsToVec {
    cols_ld: DecoupleId,
    vec_ld: DecoupleId,
    total: u64,
    taken: u64,
    parked: Option<u32>,
}

impl ColsToVec {
    fn request(&mut self, view: &mut View, col: u32) {
        if !view.decouple_request(self.vec_ld, VEC_BASE + u64::from(col) * 4) {
            self.parked = Some(col);
        }
    }
}

impl Process for ColsToVec {
    fn name(&self) -> &str {
        "cols_to_vec"
    }

    fn step(&mut self, view: &mut View) -> Step {
        if let Some(col) = self.parked.take() {
            self.request(view, col);
            return if self.parked.is_none() {
                Step::moved()
            } else {
                Step::blocked(Resource::Decouple(self.vec_ld))
            };
        }
        if self.taken == self.total {
            return Step::done();
        }
        match view.decouple_response(self.cols_ld) {
            Some(col) => {
                self.taken += 1;
                self.request(view, col.as_word());
                Step::moved()
            }
            None => Step::waiting(),
        }
    }
}

enum ExecPhase {
    Row,
    Drain,
    Signal,
}

/// Multiply-accumulate engine: one matrix element per cycle, one output
/// store per row, an acknowledgement barrier at the end of every round.
struct Execute {
    counts: StreamId,
    vals_ld: DecoupleId,
    vec_ld: DecoupleId,
    out_st: StoreSiteId,
    out_port: PortId,
    rows: u64,
    rounds: u32,
    done_tok: Option<StreamId>,
    row: u64,
    round: u32,
    remaining: Option<u32>,
    sum: f32,
    held_val: Option<f32>,
    parked_store: Option<(u64, f32)>,
    phase: ExecPhase,
}

impl Execute {
    fn finish_row(&mut self, view: &mut View, store_used: bool) {
        if store_used
            || !view.store(self.out_st, OUT_BASE + self.row * 4, Value::from_f32(self.sum))
        {
            self.parked_store = Some((self.row, self.sum));
        }
        self.remaining = None;
        self.row += 1;
        if self.row == self.rows {
            self.phase = ExecPhase::Drain;
        }
    }

    fn row_work(&mut self, view: &mut View, store_used: bool, mut progressed: bool) -> Step {
        let rem = match self.remaining {
            Some(r) => r,
            None => match view.stream_deq(self.counts) {
                Some(c) => {
                    self.sum = 0.0;
                    self.remaining = Some(c.as_word());
                    progressed = true;
                    c.as_word()
                }
                None => {
                    return if progressed { Step::moved() } else { Step::waiting() };
                }
            },
        };
        if rem == 0 {
            self.finish_row(view, store_used);
            return Step::moved();
        }
        let val = match self.held_val {
            Some(v) => v,
            None => match view.decouple_response(self.vals_ld) {
                Some(v) => v.as_f32(),
                None => return if progressed { Step::moved() } else { Step::waiting() },
            },
        };
        match view.decouple_response(self.vec_ld) {
            Some(x) => {
                self.held_val = None;
                self.sum += val * x.as_f32();
                self.remaining = Some(rem - 1);
                if rem == 1 {
                    self.finish_row(view, store_used);
                }
                Step::moved()
            }
            None => {
                self.held_val = Some(val);
                if progressed {
                    Step::moved()
                } else {
                    Step::waiting()
                }
            }
        }
    }
}

impl Process for Execute {
    fn name(&self) -> &str {
        "execute"
    }

    fn step(&mut self, view: &mut View) -> Step {
        let mut store_used = false;
        let mut progressed = false;
        if let Some((r, s)) = self.parked_store.take() {
            if view.store(self.out_st, OUT_BASE + r * 4, Value::from_f32(s)) {
                store_used = true;
                progressed = true;
            } else {
                self.parked_store = Some((r, s));
                return Step::blocked(Resource::Port(self.out_port));
            }
        }
        match self.phase {
            ExecPhase::Row => self.row_work(view, store_used, progressed),
            ExecPhase::Drain => {
                if view.stores_acked(self.out_st) == view.stores_issued(self.out_st) {
                    self.round += 1;
                    if self.done_tok.is_some() {
                        self.phase = ExecPhase::Signal;
                    } else if self.round == self.rounds {
                        return Step::done();
                    } else {
                        self.row = 0;
                        self.phase = ExecPhase::Row;
                    }
                    Step::moved()
                } else if progressed {
                    Step::moved()
                } else {
                    Step::blocked(Resource::Acks(self.out_st))
                }
            }
            ExecPhase::Signal => {
                let tok = self.done_tok.expect("signal phase needs a done token");
                if view.stream_enq(tok, Value::word(1)) {
                    if self.round == self.rounds {
                        return Step::done();
                    }
                    self.row = 0;
                    self.phase = ExecPhase::Row;
                    Step::moved()
                } else {
                    Step::blocked(Resource::Stream(tok))
                }
            }
        }
    }
}

enum CopyPhase {
    Idle,
    Run,
    Drain,
    Signal,
}

/// Reads the product vector back through its port, scales it, and stores it
/// over the operand vector for the next round.
struct CopyBack {
    start: StreamId,
    done: StreamId,
    out_ld: DecoupleId,
    vec_st: StoreSiteId,
    n: u64,
    rounds: u32,
    scale: f32,
    requested: u64,
    stored: u64,
    round: u32,
    held: Option<f32>,
    phase: CopyPhase,
}

impl Process for CopyBack {
    fn name(&self) -> &str {
        "copy_back"
    }

    fn step(&mut self, view: &mut View) -> Step {
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
                    Some(y) => Some(y),
                    None => {
                        let c = view.decouple_response(self.out_ld).map(|v| v.as_f32());
                        progressed |= c.is_some();
                        c
                    }
                };
                if let Some(y) = candidate {
                    let addr = VEC_BASE + self.stored * 4;
                    if view.store(self.vec_st, addr, Value::from_f32(self.scale * y)) {
                        self.stored += 1;
                        progressed = true;
                    } else {
                        self.held = Some(y);
                    }
                }
                if self.requested < self.n
                    && view.decouple_request(self.out_ld, OUT_BASE + self.requested * 4)
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
                if view.stores_acked(self.vec_st) == view.stores_issued(self.vec_st) {
                    self.phase = CopyPhase::Signal;
                    Step::moved()
                } else {
                    Step::blocked(Resource::Acks(self.vec_st))
                }
            }
            CopyPhase::Signal => {
                if view.stream_enq(self.done, Value::word(1)) {
                    self.round += 1;
                    if self.round == self.rounds {
                        return Step::done();
                    }
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

/// Paces rounds: releases the streamers, waits for the execute engine's
/// acknowledgement barrier, releases the copy-back, waits again.
struct Driver {
    starts: [StreamId; 3],
    start_cp: StreamId,
    done_ex: StreamId,
    done_cp: StreamId,
    rounds: u32,
    round: u32,
    phase: DriverPhase,
}

impl Process for Driver {
    fn name(&self) -> &str {
        "driver"
    }

    fn step(&mut self, view: &mut View) -> Step {
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
                if view.stream_deq(self.done_ex).is_some() {
                    self.phase = DriverPhase::LaunchCopy;
                    Step::moved()
                } else {
                    Step::waiting()
                }
            }
            DriverPhase::LaunchCopy => {
                if !view.stream_enq(self.start_cp, Value::word(1)) {
                    view.fault("start token overran its slot");
                    return Step::waiting();
                }
                self.phase = DriverPhase::AwaitCopy;
                Step::moved()
            }
            DriverPhase::AwaitCopy => {
                if view.stream_deq(self.done_cp).is_some() {
                    self.round += 1;
                    if self.round == self.rounds {
                        return Step::done();
                    }
                    self.phase = DriverPhase::Launch;
                    Step::moved()
                } else {
                    Step::waiting()
                }
            }
        }
    }
}

enum CoupledSpmvPhase {
    LoadPtr,
    AwaitPtr,
    LoadCol,
    AwaitCol,
    LoadVal(u32),
    AwaitVal(u32),
    LoadVec(u32),
    AwaitVec,
    StoreRow,
    AwaitRowAck,
    LoadOut,
    AwaitOut,
    StoreVec(f32),
    AwaitVecAck,
}

/// Fully serialized baseline: every load waits for its response and every
/// store waits for its acknowledgement before the next access issues.
struct CoupledSpmv {
    rows_ld: DecoupleId,
    cols_ld: DecoupleId,
    vals_ld: DecoupleId,
    vec_ld: DecoupleId,
    out_ld: Option<DecoupleId>,
    out_st: StoreSiteId,
    vec_st: Option<StoreSiteId>,
    out_port: PortId,
    vec_port: PortId,
    n: u64,
    rounds: u32,
    scale: f32,
    round: u32,
    ptr_idx: u64,
    prev: u32,
    row: u64,
    remaining: u32,
    elem: u64,
    held: f32,
    sum: f32,
    copy_i: u64,
    phase: CoupledSpmvPhase,
}

impl CoupledSpmv {
    fn elem_addr(&self) -> Addr {
        self.elem * 4
    }

    fn after_row(&mut self) -> CoupledSpmvPhase {
        if self.ptr_idx <= self.n {
            CoupledSpmvPhase::LoadPtr
        } else if self.out_ld.is_some() {
            self.copy_i = 0;
            CoupledSpmvPhase::LoadOut
        } else {
            CoupledSpmvPhase::LoadPtr
        }
    }

    fn round_done(&mut self) -> Option<Step> {
        self.round += 1;
        if self.round == self.rounds {
            return Some(Step::done());
        }
        self.ptr_idx = 0;
        self.row = 0;
        self.elem = 0;
        self.phase = CoupledSpmvPhase::LoadPtr;
        None
    }
}

impl Process for CoupledSpmv {
    fn name(&self) -> &str {
        "spmv"
    }

    fn step(&mut self, view: &mut View) -> Step {
        match std::mem::replace(&mut self.phase, CoupledSpmvPhase::LoadPtr) {
            CoupledSpmvPhase::LoadPtr => {
                if view.decouple_request(self.rows_ld, ROWS_BASE + self.ptr_idx * 4) {
                    self.phase = CoupledSpmvPhase::AwaitPtr;
                    Step::moved()
                } else {
                    Step::blocked(Resource::Decouple(self.rows_ld))
                }
            }
            CoupledSpmvPhase::AwaitPtr => match view.decouple_response(self.rows_ld) {
                Some(v) => {
                    let v = v.as_word();
                    if self.ptr_idx == 0 {
                        self.prev = v;
                        self.ptr_idx = 1;
                        self.phase = CoupledSpmvPhase::LoadPtr;
                    } else {
                        self.remaining = v.wrapping_sub(self.prev);
                        self.row = self.ptr_idx - 1;
                        self.prev = v;
                        self.ptr_idx += 1;
                        self.sum = 0.0;
                        self.phase = if self.remaining > 0 {
                            CoupledSpmvPhase::LoadCol
                        } else {
                            CoupledSpmvPhase::StoreRow
                        };
                    }
                    Step::moved()
                }
                None => {
                    self.phase = CoupledSpmvPhase::AwaitPtr;
                    Step::waiting()
                }
            },
            CoupledSpmvPhase::LoadCol => {
                if view.decouple_request(self.cols_ld, COLS_BASE + self.elem_addr()) {
                    self.phase = CoupledSpmvPhase::AwaitCol;
                    Step::moved()
                } else {
                    self.phase = CoupledSpmvPhase::LoadCol;
                    Step::blocked(Resource::Decouple(self.cols_ld))
                }
            }
            CoupledSpmvPhase::AwaitCol => match view.decouple_response(self.cols_ld) {
                Some(col) => {
                    self.phase = CoupledSpmvPhase::LoadVal(col.as_word());
                    Step::moved()
                }
                None => {
                    self.phase = CoupledSpmvPhase::AwaitCol;
                    Step::waiting()
                }
            },
            CoupledSpmvPhase::LoadVal(col) => {
                if view.decouple_request(self.vals_ld, VALS_BASE + self.elem_addr()) {
                    self.phase = CoupledSpmvPhase::AwaitVal(col);
                    Step::moved()
                } else {
                    self.phase = CoupledSpmvPhase::LoadVal(col);
                    Step::blocked(Resource::Decouple(self.vals_ld))
                }
            }
            CoupledSpmvPhase::AwaitVal(col) => match view.decouple_response(self.vals_ld) {
                Some(v) => {
                    self.held = v.as_f32();
                    self.phase = CoupledSpmvPhase::LoadVec(col);
                    Step::moved()
                }
                None => {
                    self.phase = CoupledSpmvPhase::AwaitVal(col);
                    Step::waiting()
                }
            },
            CoupledSpmvPhase::LoadVec(col) => {
                if view.decouple_request(self.vec_ld, VEC_BASE + u64::from(col) * 4) {
                    self.phase = CoupledSpmvPhase::AwaitVec;
                    Step::moved()
                } else {
                    self.phase = CoupledSpmvPhase::LoadVec(col);
                    Step::blocked(Resource::Decouple(self.vec_ld))
                }
            }
            CoupledSpmvPhase::AwaitVec => match view.decouple_response(self.vec_ld) {
                Some(x) => {
                    self.sum += self.held * x.as_f32();
                    self.elem += 1;
                    self.remaining -= 1;
                    self.phase = if self.remaining > 0 {
                        CoupledSpmvPhase::LoadCol
                    } else {
                        CoupledSpmvPhase::StoreRow
                    };
                    Step::moved()
                }
                None => {
                    self.phase = CoupledSpmvPhase::AwaitVec;
                    Step::waiting()
                }
            },
            CoupledSpmvPhase::StoreRow => {
                if view.store(self.out_st, OUT_BASE + self.row * 4, Value::from_f32(self.sum)) {
                    self.phase = CoupledSpmvPhase::AwaitRowAck;
                    Step::moved()
                } else {
                    self.phase = CoupledSpmvPhase::StoreRow;
                    Step::blocked(Resource::Port(self.out_port))
                }
            }
            CoupledSpmvPhase::AwaitRowAck => {
                if view.stores_acked(self.out_st) == view.stores_issued(self.out_st) {
                    if self.ptr_idx > self.n && self.out_ld.is_none() {
                        if let Some(step) = self.round_done() {
                            return step;
                        }
                    } else {
                        self.phase = self.after_row();
                    }
                    Step::moved()
                } else {
                    self.phase = CoupledSpmvPhase::AwaitRowAck;
                    Step::blocked(Resource::Acks(self.out_st))
                }
            }
            CoupledSpmvPhase::LoadOut => {
                let ld = self.out_ld.expect("copy phase needs the product channel");
                if view.decouple_request(ld, OUT_BASE + self.copy_i * 4) {
                    self.phase = CoupledSpmvPhase::AwaitOut;
                    Step::moved()
                } else {
                    self.phase = CoupledSpmvPhase::LoadOut;
                    Step::blocked(Resource::Decouple(ld))
                }
            }
            CoupledSpmvPhase::AwaitOut => {
                let ld = self.out_ld.expect("copy phase needs the product channel");
                match view.decouple_response(ld) {
                    Some(y) => {
                        self.phase = CoupledSpmvPhase::StoreVec(self.scale * y.as_f32());
                        Step::moved()
                    }
                    None => {
                        self.phase = CoupledSpmvPhase::AwaitOut;
                        Step::waiting()
                    }
                }
            }
            CoupledSpmvPhase::StoreVec(x) => {
                let st = self.vec_st.expect("copy phase needs the vector site");
                if view.store(st, VEC_BASE + self.copy_i * 4, Value::from_f32(x)) {
                    self.phase = CoupledSpmvPhase::AwaitVecAck;
                    Step::moved()
                } else {
                    self.phase = CoupledSpmvPhase::StoreVec(x);
                    Step::blocked(Resource::Port(self.vec_port))
                }
            }
            CoupledSpmvPhase::AwaitVecAck => {
                let st = self.vec_st.expect("copy phase needs the vector site");
                if view.stores_acked(st) == view.stores_issued(st) {
                    self.copy_i += 1;
                    if self.copy_i < self.n {
                        self.phase = CoupledSpmvPhase::LoadOut;
                    } else if let Some(step) = self.round_done() {
                        return step;
                    }
                    Step::moved()
                } else {
                    self.phase = CoupledSpmvPhase::AwaitVecAck;
                    Step::blocked(Resource::Acks(st))
                }
            }
        }
    }
}

pub(super) fn build(spec: &BuildSpec, w: &CsrWorkload) -> Result<World, SimError> {
    let m = &w.matrix;
    let n = u64::from(m.n_rows);
    let nnz = m.col_idx.len() as u64;
    if m.n_rows == 0 {
        return Err(SimError::Config("matrix needs at least one row".into()));
    }
    if m.row_ptr.len() as u64 != n + 1 {
        return Err(SimError::Config(format!(
            "row pointer array has {} entries for {} rows",
            m.row_ptr.len(),
            m.n_rows
        )));
    }
    if m.values.len() != m.col_idx.len() {
        return Err(SimError::Config("column and value arrays differ in length".into()));
    }
    if nnz == 0 {
        return Err(SimError::Config("matrix stores no elements".into()));
    }
    if w.vector.len() as u64 != u64::from(m.n_cols) {
        return Err(SimError::Config("operand vector length must match the column count".into()));
    }
    let multi = spec.kind == KernelKind::MultiSpmv;
    let rounds = if multi { spec.params.iterations } else { 1 };
    if multi {
        if m.n_rows != m.n_cols {
            return Err(SimError::Config("iterated multiply needs a square matrix".into()));
        }
        if rounds < 1 {
            return Err(SimError::Config("iterated multiply needs iterations >= 1".into()));
        }
    }

    let mut b = WorldBuilder::new(spec.seed);
    b.memlog(spec.memlog);
    let seq = PortModel::Fixed(spec.sequential);
    let rows_port = b.region("rows", ROWS_BASE, m.row_ptr.clone(), seq.clone());
    let cols_port = b.region("cols", COLS_BASE, m.col_idx.clone(), seq.clone());
    let vals_port = b.region(
        "vals",
        VALS_BASE,
        m.values.iter().map(|v| v.to_bits()).collect(),
        seq.clone(),
    );
    let vec_port = b.region(
        "vec",
        VEC_BASE,
        w.vector.iter().map(|v| v.to_bits()).collect(),
        spec.irregular.clone(),
    );
    let out_port = b.region("out", OUT_BASE, vec![0; m.n_rows as usize], seq);

    let coupled = spec.variant == Variant::Coupled;
    let cap = if coupled { 1 } else { spec.tuning.stream_capacity };
    let rows_ld = b.decouple("rows_ld", rows_port, cap);
    let cols_ld = b.decouple("cols_ld", cols_port, cap);
    let vals_ld = b.decouple("vals_ld", vals_port, cap);
    let vec_ld = b.decouple("vec_ld", vec_port, if coupled { 1 } else { spec.tuning.rif });
    let out_st = b.store_site("out_st", out_port);

    match spec.variant {
        Variant::Coupled => {
            let out_ld = multi.then(|| b.decouple("out_ld", out_port, 1));
            let vec_st = multi.then(|| b.store_site("vec_st", vec_port));
            let p = b.spawn(Box::new(CoupledSpmv {
                rows_ld,
                cols_ld,
                vals_ld,
                vec_ld,
                out_ld,
                out_st,
                vec_st,
                out_port,
                vec_port,
                n,
                rounds,
                scale: spec.params.scale,
                round: 0,
                ptr_idx: 0,
                prev: 0,
                row: 0,
                remaining: 0,
                elem: 0,
                held: 0.0,
                sum: 0.0,
                copy_i: 0,
                phase: CoupledSpmvPhase::LoadPtr,
            }));
            for ld in [rows_ld, cols_ld, vals_ld, vec_ld] {
                b.bind_decouple(ld, p, p);
            }
            if let Some(ld) = out_ld {
                b.bind_decouple(ld, p, p);
            }
            b.bind_site(out_st, p);
            if let Some(st) = vec_st {
                b.bind_site(st, p);
            }
        }
        Variant::Decoupled => {
            let counts = b.stream("counts", cap);
            let tokens = multi.then(|| {
                (
                    b.stream("start_rows", 1),
                    b.stream("start_vals", 1),
                    b.stream("start_cols", 1),
                    b.stream("start_copy", 1),
                    b.stream("exec_done", 1),
                    b.stream("copy_done", 1),
                    b.decouple("out_ld", out_port, cap),
                    b.store_site("vec_st", vec_port),
                )
            });
            let e = b.spawn(Box::new(Execute {
                counts,
                vals_ld,
                vec_ld,
                out_st,
                out_port,
                rows: n,
                rounds,
                done_tok: tokens.as_ref().map(|t| t.4),
                row: 0,
                round: 0,
                remaining: None,
                sum: 0.0,
                held_val: None,
                parked_store: None,
                phase: ExecPhase::Row,
            }));
            let ra = b.spawn(Box::new(RowsAccess {
                rows_ld,
                counts,
                rows: n,
                rounds,
                prev: None,
                emitted: 0,
                round: 0,
                parked: None,
            }));
            let cv = b.spawn(Box::new(ColsToVec {
                cols_ld,
                vec_ld,
                total: u64::from(rounds) * nnz,
                taken: 0,
                parked: None,
            }));
            b.bind_stream(counts, ra, e);
            b.bind_decouple(vals_ld, e, e);
            b.bind_decouple(vec_ld, cv, e);
            b.bind_decouple(cols_ld, cv, cv);
            b.bind_site(out_st, e);

            match tokens {
                None => {
                    let sr = b.spawn(Box::new(SeqStreamer::new(
                        "rows_streamer",
                        rows_ld,
                        ROWS_BASE,
                        n + 1,
                        1,
                        None,
                    )));
                    let sv = b.spawn(Box::new(SeqStreamer::new(
                        "vals_streamer",
                        vals_ld,
                        VALS_BASE,
                        nnz,
                        1,
                        None,
                    )));
                    let sc = b.spawn(Box::new(SeqStreamer::new(
                        "cols_streamer",
                        cols_ld,
                        COLS_BASE,
                        nnz,
                        1,
                        None,
                    )));
                    b.bind_decouple(rows_ld, sr, ra);
                    b.bind_decouple(vals_ld, sv, e);
                    b.bind_decouple(cols_ld, sc, cv);
                }
                Some((s_rows, s_vals, s_cols, s_cp, done_ex, done_cp, out_ld, vec_st)) => {
                    let cp = b.spawn(Box::new(CopyBack {
                        start: s_cp,
                        done: done_cp,
                        out_ld,
                        vec_st,
                        n,
                        rounds,
                        scale: spec.params.scale,
                        requested: 0,
                        stored: 0,
                        round: 0,
                        held: None,
                        phase: CopyPhase::Idle,
                    }));
                    let sr = b.spawn(Box::new(SeqStreamer::new(
                        "rows_streamer",
                        rows_ld,
                        ROWS_BASE,
                        n + 1,
                        rounds,
                        Some(s_rows),
                    )));
                    let sv = b.spawn(Box::new(SeqStreamer::new(
                        "vals_streamer",
                        vals_ld,
                        VALS_BASE,
                        nnz,
                        rounds,
                        Some(s_vals),
                    )));
                    let sc = b.spawn(Box::new(SeqStreamer::new(
                        "cols_streamer",
                        cols_ld,
                        COLS_BASE,
                        nnz,
                        rounds,
                        Some(s_cols),
                    )));
                    let dr = b.spawn(Box::new(Driver {
                        starts: [s_rows, s_vals, s_cols],
                        start_cp: s_cp,
                        done_ex,
                        done_cp,
                        rounds,
                        round: 0,
                        phase: DriverPhase::Launch,
                    }));
                    b.bind_decouple(rows_ld, sr, ra);
                    b.bind_decouple(vals_ld, sv, e);
                    b.bind_decouple(cols_ld, sc, cv);
                    b.bind_decouple(out_ld, cp, cp);
                    b.bind_site(vec_st, cp);
                    b.bind_stream(s_rows, dr, sr);
                    b.bind_stream(s_vals, dr, sv);
                    b.bind_stream(s_cols, dr, sc);
                    b.bind_stream(s_cp, dr, cp);
                    b.bind_stream(done_ex, e, dr);
                    b.bind_stream(done_cp, cp, dr);
                }
            }
        }
    }
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SimOutcome;
    use crate::kernel::testutil::{assert_matches_oracle, run, spec_with, tuned};
    use crate::oracle;
    use crate::workload::{generate, CsrMatrix, Workload, WorkloadSpec};

    fn small() -> Workload {
        Workload::Csr(CsrWorkload {
            matrix: CsrMatrix {
                n_rows: 2,
                n_cols: 3,
                row_ptr: vec![0, 1, 3],
                col_idx: vec![1, 0, 2],
                values: vec![10.0, 1.0, 42.0],
            },
            vector: vec![10.0, 2.0, 10.0],
        })
    }

    #[test]
    fn small_product_matches_in_both_variants() {
        let w = small();
        for variant in [Variant::Decoupled, Variant::Coupled] {
            let spec = spec_with(KernelKind::Spmv, variant, &w, 8, tuned(4, 4));
            let (world, r) = run(&spec);
            assert_matches_oracle(&world, &r, &spec);
            let out: Vec<f32> =
                world.region_data("out").unwrap().iter().map(|&b| f32::from_bits(b)).collect();
            assert_eq!(out, [20.0, 430.0]);
        }
    }

    #[test]
    fn empty_rows_produce_zero_sums() {
        let w = Workload::Csr(CsrWorkload {
            matrix: CsrMatrix {
                n_rows: 3,
                n_cols: 2,
                row_ptr: vec![0, 0, 2, 2],
                col_idx: vec![0, 1],
                values: vec![3.0, 4.0],
            },
            vector: vec![1.0, 1.0],
        });
        let spec = spec_with(KernelKind::Spmv, Variant::Decoupled, &w, 6, tuned(4, 4));
        let (world, r) = run(&spec);
        assert_matches_oracle(&world, &r, &spec);
        let out: Vec<f32> =
            world.region_data("out").unwrap().iter().map(|&b| f32::from_bits(b)).collect();
        assert_eq!(out, [0.0, 7.0, 0.0]);
    }

    #[test]
    fn random_matrix_matches_the_oracle() {
        let w = generate(&WorkloadSpec::Csr { rows: 17, cols: 23, nnz: 61 }, 42).unwrap();
        for variant in [Variant::Decoupled, Variant::Coupled] {
            let spec = spec_with(KernelKind::Spmv, variant, &w, 11, tuned(8, 8));
            let (world, r) = run(&spec);
            assert_matches_oracle(&world, &r, &spec);
        }
    }

    #[test]
    fn iterated_multiply_scales_each_round() {
        let w = Workload::Csr(CsrWorkload {
            matrix: CsrMatrix {
                n_rows: 2,
                n_cols: 2,
                row_ptr: vec![0, 1, 2],
                col_idx: vec![0, 1],
                values: vec![1.0, 1.0],
            },
            vector: vec![4.0, 8.0],
        });
        for variant in [Variant::Decoupled, Variant::Coupled] {
            let mut spec = spec_with(KernelKind::MultiSpmv, variant, &w, 5, tuned(4, 4));
            spec.params.iterations = 2;
            spec.params.scale = 0.5;
            let (world, r) = run(&spec);
            assert_matches_oracle(&world, &r, &spec);
            let x: Vec<f32> =
                world.region_data("vec").unwrap().iter().map(|&b| f32::from_bits(b)).collect();
            assert_eq!(x, [1.0, 2.0]);
        }
    }

    #[test]
    fn short_row_pointer_array_leaves_channels_unbalanced() {
        // Three stored elements but row pointers only account for two, so
        // one value response is never consumed. The run still completes and
        // the balance check names the first unbalanced channel.
        let w = Workload::Csr(CsrWorkload {
            matrix: CsrMatrix {
                n_rows: 3,
                n_cols: 2,
                row_ptr: vec![0, 2, 2, 2],
                col_idx: vec![0, 1, 0],
                values: vec![1.0, 2.0, 3.0],
            },
            vector: vec![1.0, 1.0],
        });
        let spec = spec_with(KernelKind::Spmv, Variant::Decoupled, &w, 5, tuned(4, 4));
        let mut world = super::super::build_world(&spec).unwrap();
        let r = world.run_until_quiescent(100_000).unwrap();
        assert_eq!(r.outcome, SimOutcome::Completed);
        let v = oracle::check_balance(&r.stats).expect("channels must be unbalanced");
        assert_eq!((v.channel.as_str(), v.sent, v.received), ("vals_ld", 3, 2));
    }

    #[test]
    fn decreasing_row_pointers_deadlock_instead_of_underflowing() {
        let w = Workload::Csr(CsrWorkload {
            matrix: CsrMatrix {
                n_rows: 3,
                n_cols: 2,
                row_ptr: vec![0, 2, 1, 3],
                col_idx: vec![0, 1, 0],
                values: vec![1.0, 2.0, 3.0],
            },
            vector: vec![1.0, 1.0],
        });
        let spec = spec_with(KernelKind::Spmv, Variant::Decoupled, &w, 5, tuned(4, 4));
        let mut world = super::super::build_world(&spec).unwrap();
        let r = world.run_until_quiescent(100_000).unwrap();
        assert!(matches!(r.outcome, SimOutcome::Deadlocked { .. }), "got {:?}", r.outcome);
    }
}
