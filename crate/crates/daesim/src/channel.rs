//! Stream and decoupled-load channels.
//!
//! Both channel kinds move [`Value`] slots between exactly one producer and
//! one consumer process. A `StreamChannel` is a bounded FIFO written with
//! `stream_enq` / `stream_deq`. A `DecoupleChannel` replaces the FIFO body
//! with the memory subsystem: the producer issues load requests through it
//! and the consumer pops responses in request order, no matter how the
//! memory model reorders completions internally.
//!
//! Values enqueued in cycle `t` become visible to the consumer in cycle
//! `t + 1`; a dequeue in cycle `t` frees its slot for an enqueue in the same
//! cycle. The engine owns the commit schedule, these types only hold state.

use std::collections::BTreeMap;
use std::collections::VecDeque;

use crate::engine::{Cycle, ProcessId};
use crate::memsys::{AxiId, PortId};

/// Raw 32-bit payload unit. Kernels reinterpret words as `u32` or `f32`.
pub type Word = u32;

/// One channel slot: one to four words moved together. Wide slots carry
/// multi-word records (for example a 16-byte hash table entry) as a single
/// transfer.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Value {
    words: [Word; 4],
    len: u8,
}

impl Value {
    pub fn word(w: Word) -> Self {
        Value { words: [w, 0, 0, 0], len: 1 }
    }

    pub fn from_f32(v: f32) -> Self {
        Value::word(v.to_bits())
    }

    pub fn wide(words: [Word; 4]) -> Self {
        Value { words, len: 4 }
    }

    pub fn from_words(src: &[Word]) -> Self {
        assert!((1..=4).contains(&src.len()), "value must hold 1..=4 words");
        let mut words = [0; 4];
        words[..src.len()].copy_from_slice(src);
        Value { words, len: src.len() as u8 }
    }

    pub fn as_word(&self) -> Word {
        self.words[0]
    }

    pub fn as_f32(&self) -> f32 {
        f32::from_bits(self.words[0])
    }

    pub fn words(&self) -> &[Word] {
        &self.words[..self.len as usize]
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct StreamId(pub(crate) usize);

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct DecoupleId(pub(crate) usize);

pub(crate) struct StreamChannel {
    pub name: String,
    pub capacity: usize,
    /// Committed slots, each tagged with its enqueue commit cycle.
    fifo: VecDeque<(Value, Cycle)>,
    /// Enqueue accepted this cycle, applied at commit.
    pending: Option<(Value, Cycle)>,
    pub producer: Option<ProcessId>,
    pub consumer: Option<ProcessId>,
    pub enq_count: u64,
    pub deq_count: u64,
    pub peak: usize,
    enq_this_cycle: bool,
    deq_this_cycle: bool,
}

impl StreamChannel {
    pub fn new(name: String, capacity: usize) -> Self {
        assert!(capacity >= 1, "stream {name} needs capacity >= 1");
        StreamChannel {
            name,
            capacity,
            fifo: VecDeque::new(),
            pending: None,
            producer: None,
            consumer: None,
            enq_count: 0,
            deq_count: 0,
            peak: 0,
            enq_this_cycle: false,
            deq_this_cycle: false,
        }
    }

    /// Enqueue attempt. `Ok(false)` is back-pressure: the FIFO is full even
    /// counting slots freed by a dequeue already committed this cycle.
    pub fn try_enq(&mut self, pid: ProcessId, v: Value, now: Cycle) -> Result<bool, String> {
        if self.producer != Some(pid) {
            return Err(format!("{pid} is not the producer of stream {}", self.name));
        }
        if self.enq_this_cycle {
            return Err(format!("second enqueue on stream {} in one cycle", self.name));
        }
        // fifo.len() already reflects this cycle's dequeue (popped on the
        // spot), so a same-cycle deq on a full FIFO admits this enqueue.
        if self.fifo.len() >= self.capacity {
            return Ok(false);
        }
        self.pending = Some((v, now));
        self.enq_this_cycle = true;
        self.enq_count += 1;
        Ok(true)
    }

    /// Dequeue attempt. `Ok(None)` is a stall: no committed value present.
    pub fn try_deq(&mut self, pid: ProcessId, now: Cycle) -> Result<Option<Value>, String> {
        if self.consumer != Some(pid) {
            return Err(format!("{pid} is not the consumer of stream {}", self.name));
        }
        if self.deq_this_cycle {
            return Err(format!("second dequeue on stream {} in one cycle", self.name));
        }
        match self.fifo.pop_front() {
            None => Ok(None),
            Some((v, enq_cycle)) => {
                debug_assert!(
                    enq_cycle < now,
                    "stream {} leaked a same-cycle enqueue to its consumer",
                    self.name
                );
                self.deq_this_cycle = true;
                self.deq_count += 1;
                Ok(Some(v))
            }
        }
    }

    pub fn commit(&mut self) {
        if let Some(slot) = self.pending.take() {
            self.fifo.push_back(slot);
        }
        assert!(
            self.fifo.len() <= self.capacity,
            "stream {} exceeded capacity {} at cycle boundary",
            self.name,
            self.capacity
        );
        self.peak = self.peak.max(self.fifo.len());
        self.enq_this_cycle = false;
        self.deq_this_cycle = false;
    }
}

pub(crate) struct DecoupleChannel {
    pub name: String,
    /// Upper bound on loads in flight; counted from request accept until the
    /// consumer pops the response.
    pub capacity: usize,
    pub port: PortId,
    pub axi: AxiId,
    pub requester: Option<ProcessId>,
    pub consumer: Option<ProcessId>,
    next_seq: u64,
    consume_seq: u64,
    pub in_flight: usize,
    /// Reorder slots keyed by request sequence number. A response parks here
    /// until every earlier request has been consumed.
    slots: BTreeMap<u64, (Value, Cycle)>,
    pub request_count: u64,
    pub response_count: u64,
    pub peak_in_flight: usize,
    req_this_cycle: bool,
    resp_this_cycle: bool,
}

impl DecoupleChannel {
    pub fn new(name: String, port: PortId, axi: AxiId, capacity: usize) -> Self {
        assert!(capacity >= 1, "decouple channel {name} needs capacity >= 1");
        DecoupleChannel {
            name,
            capacity,
            port,
            axi,
            requester: None,
            consumer: None,
            next_seq: 0,
            consume_seq: 0,
            in_flight: 0,
            slots: BTreeMap::new(),
            request_count: 0,
            response_count: 0,
            peak_in_flight: 0,
            req_this_cycle: false,
            resp_this_cycle: false,
        }
    }

    /// Channel-side admission: false while at capacity.
    pub fn can_request(&self) -> bool {
        self.in_flight < self.capacity
    }

    pub fn check_request(&self, pid: ProcessId) -> Result<(), String> {
        if self.requester != Some(pid) {
            return Err(format!("{pid} is not the requester of channel {}", self.name));
        }
        if self.req_this_cycle {
            return Err(format!("second request on channel {} in one cycle", self.name));
        }
        Ok(())
    }

    /// Record an accepted request and hand back its sequence number.
    pub fn note_request(&mut self) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.in_flight += 1;
        self.peak_in_flight = self.peak_in_flight.max(self.in_flight);
        self.request_count += 1;
        self.req_this_cycle = true;
        seq
    }

    pub fn deliver(&mut self, seq: u64, data: Value, ready: Cycle) {
        let prev = self.slots.insert(seq, (data, ready));
        assert!(prev.is_none(), "duplicate response for seq {seq} on channel {}", self.name);
    }

    /// Pop the oldest unconsumed response if it has arrived. `Ok(None)` is a
    /// stall: either nothing is in flight or the head response is still in
    /// the memory subsystem.
    pub fn try_consume(&mut self, pid: ProcessId, now: Cycle) -> Result<Option<Value>, String> {
        if self.consumer != Some(pid) {
            return Err(format!("{pid} is not the consumer of channel {}", self.name));
        }
        if self.resp_this_cycle {
            return Err(format!("second response pop on channel {} in one cycle", self.name));
        }
        let ready = match self.slots.get(&self.consume_seq) {
            Some(&(v, ready_cycle)) if ready_cycle <= now => Some(v),
            _ => None,
        };
        match ready {
            None => Ok(None),
            Some(v) => {
                self.slots.remove(&self.consume_seq);
                self.consume_seq += 1;
                self.in_flight -= 1;
                self.response_count += 1;
                self.resp_this_cycle = true;
                Ok(Some(v))
            }
        }
    }

    pub fn end_cycle(&mut self) {
        self.req_this_cycle = false;
        self.resp_this_cycle = false;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_roundtrips_words_and_floats() {
        assert_eq!(Value::word(7).as_word(), 7);
        assert_eq!(Value::from_f32(1.5).as_f32(), 1.5);
        let v = Value::wide([1, 2, 3, 4]);
        assert_eq!(v.words(), &[1, 2, 3, 4]);
        assert_eq!(Value::from_words(&[9, 8]).words(), &[9, 8]);
    }

    #[test]
    fn stream_preserves_fifo_order_across_commits() {
        let mut s = StreamChannel::new("s".into(), 4);
        let p = ProcessId(0);
        let c = ProcessId(1);
        s.producer = Some(p);
        s.consumer = Some(c);
        for (cycle, w) in [1u32, 2, 3].iter().enumerate() {
            assert!(s.try_enq(p, Value::word(*w), cycle as Cycle).unwrap());
            s.commit();
        }
        for w in [1u32, 2, 3] {
            assert_eq!(s.try_deq(c, 10).unwrap().unwrap().as_word(), w);
            s.commit();
        }
        assert_eq!(s.try_deq(c, 20).unwrap(), None);
        assert_eq!(s.enq_count, 3);
        assert_eq!(s.deq_count, 3);
    }

    #[test]
    fn enqueue_is_invisible_until_the_next_cycle() {
        let mut s = StreamChannel::new("s".into(), 2);
        let p = ProcessId(0);
        s.producer = Some(p);
        s.consumer = Some(p);
        assert!(s.try_enq(p, Value::word(7), 5).unwrap());
        // Still pending: the consumer sees an empty FIFO in the same cycle.
        assert_eq!(s.try_deq(p, 5).unwrap(), None);
        s.commit();
        assert_eq!(s.try_deq(p, 6).unwrap().unwrap().as_word(), 7);
    }

    #[test]
    fn full_stream_admits_enqueue_only_after_same_cycle_dequeue() {
        let mut s = StreamChannel::new("s".into(), 1);
        let p = ProcessId(0);
        let c = ProcessId(1);
        s.producer = Some(p);
        s.consumer = Some(c);
        assert!(s.try_enq(p, Value::word(1), 0).unwrap());
        s.commit();

        // Producer first: the slot is still held, enqueue is rejected.
        assert!(!s.try_enq(p, Value::word(2), 1).unwrap());
        assert_eq!(s.try_deq(c, 1).unwrap().unwrap().as_word(), 1);
        s.commit();

        // Consumer first: dequeue frees the slot for the same-cycle enqueue.
        assert!(s.try_enq(p, Value::word(3), 2).unwrap());
        s.commit();
        assert_eq!(s.try_deq(c, 3).unwrap().unwrap().as_word(), 3);
        assert!(s.try_enq(p, Value::word(4), 3).unwrap());
        s.commit();
        assert_eq!(s.try_deq(c, 4).unwrap().unwrap().as_word(), 4);
    }

    #[test]
    fn stream_rejects_foreign_endpoints_and_double_ops() {
        let mut s = StreamChannel::new("s".into(), 2);
        s.producer = Some(ProcessId(0));
        s.consumer = Some(ProcessId(1));
        assert!(s.try_enq(ProcessId(1), Value::word(1), 0).is_err());
        assert!(s.try_enq(ProcessId(0), Value::word(1), 0).unwrap());
        assert!(s.try_enq(ProcessId(0), Value::word(2), 0).is_err());
    }

    #[test]
    fn decouple_reorders_responses_into_request_order() {
        let mut d = DecoupleChannel::new("d".into(), PortId(0), AxiId(0), 4);
        let p = ProcessId(0);
        d.requester = Some(p);
        d.consumer = Some(p);
        let a = d.note_request();
        let b = d.note_request();
        // Response for the second request arrives first.
        d.deliver(b, Value::word(20), 3);
        assert_eq!(d.try_consume(p, 5).unwrap(), None);
        d.deliver(a, Value::word(10), 5);
        assert_eq!(d.try_consume(p, 5).unwrap().unwrap().as_word(), 10);
        d.end_cycle();
        assert_eq!(d.try_consume(p, 6).unwrap().unwrap().as_word(), 20);
        assert_eq!(d.in_flight, 0);
    }

    #[test]
    fn decouple_holds_responses_until_ready_cycle() {
        let mut d = DecoupleChannel::new("d".into(), PortId(0), AxiId(0), 2);
        let p = ProcessId(0);
        d.requester = Some(p);
        d.consumer = Some(p);
        let seq = d.note_request();
        d.deliver(seq, Value::word(42), 100);
        assert_eq!(d.try_consume(p, 99).unwrap(), None);
        assert_eq!(d.try_consume(p, 100).unwrap().unwrap().as_word(), 42);
    }
}
