//! Hand-built micro worlds: a store loop that shows acknowledgement
//! overlap, and a deliberately imbalanced pipeline that deadlocks.

use crate::channel::{DecoupleId, StreamId, Value};
use crate::engine::{PortModel, Process, Resource, SimError, Step, View, World, WorldBuilder};
use crate::memsys::{FixedLatencyConfig, PortId, StoreSiteId};

const BASE: u64 = 0x1000_0000;

struct StoreLoop {
    st: StoreSiteId,
    port: PortId,
    n: u64,
    overlap: bool,
    issued: u64,
    awaiting: bool,
}

impl Process for StoreLoop {
    fn name(&self) -> &str {
        "store_loop"
    }

    fn step(&mut self, view: &mut View) -> Step {
        if self.overlap {
            if self.issued < self.n {
                return if view.store(self.st, BASE + self.issued * 4, Value::word(self.issued as u32)) {
                    self.issued += 1;
                    Step::moved()
                } else {
                    Step::blocked(Resource::Port(self.port))
                };
            }
            if view.stores_acked(self.st) == self.n {
                Step::done()
            } else {
                Step::blocked(Resource::Acks(self.st))
            }
        } else {
            if self.awaiting {
                return if view.stores_acked(self.st) == view.stores_issued(self.st) {
                    self.awaiting = false;
                    if self.issued == self.n {
                        Step::done()
                    } else {
                        Step::moved()
                    }
                } else {
                    Step::blocked(Resource::Acks(self.st))
                };
            }
            if view.store(self.st, BASE + self.issued * 4, Value::word(self.issued as u32)) {
                self.issued += 1;
                self.awaiting = true;
                Step::moved()
            } else {
                Step::blocked(Resource::Port(self.port))
            }
        }
    }
}

/// A single process storing `n` words. With `overlap` it issues one store
/// per cycle and waits for the acknowledgements only at the end; without,
/// every store waits for its own acknowledgement.
pub fn store_loop(
    n: u32,
    overlap: bool,
    model: FixedLatencyConfig,
    seed: u64,
) -> Result<World, SimError> {
    if n == 0 {
        return Err(SimError::Config("the store loop needs at least one element".into()));
    }
    let mut b = WorldBuilder::new(seed);
    let port = b.region("out", BASE, vec![0; n as usize], PortModel::Fixed(model));
    let st = b.store_site("out_st", port);
    let p = b.spawn(Box::new(StoreLoop {
        st,
        port,
        n: u64::from(n),
        overlap,
        issued: 0,
        awaiting: false,
    }));
    b.bind_site(st, p);
    b.build()
}

struct Requester {
    ld: DecoupleId,
    never: StreamId,
    requested: bool,
}

impl Process for Requester {
    fn name(&self) -> &str {
        "requester"
    }

    fn step(&mut self, view: &mut View) -> Step {
        if !self.requested && view.decouple_request(self.ld, BASE) {
            self.requested = true;
            return Step::moved();
        }
        match view.stream_deq(self.never) {
            Some(_) => Step::moved(),
            None => Step::waiting(),
        }
    }
}

struct Starver {
    never: StreamId,
}

impl Process for Starver {
    fn name(&self) -> &str {
        "starver"
    }

    fn step(&mut self, view: &mut View) -> Step {
        match view.stream_deq(self.never) {
            Some(_) => Step::moved(),
            None => Step::waiting(),
        }
    }
}

/// Two processes waiting on streams the other never fills. One load is
/// requested and delivered but its consumer never drains it, so the world
/// wedges shortly after the response lands.
pub fn imbalanced(model: FixedLatencyConfig, seed: u64) -> Result<World, SimError> {
    let mut b = WorldBuilder::new(seed);
    let port = b.region("mem", BASE, vec![0; 4], PortModel::Fixed(model));
    let ld = b.decouple("ld", port, 4);
    let never_a = b.stream("never_a", 1);
    let never_b = b.stream("never_b", 1);
    let a = b.spawn(Box::new(Requester { ld, never: never_a, requested: false }));
    let s = b.spawn(Box::new(Starver { never: never_b }));
    b.bind_decouple(ld, a, s);
    b.bind_stream(never_a, s, a);
    b.bind_stream(never_b, a, s);
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SimOutcome;

    #[test]
    fn overlapped_stores_cost_about_one_latency_total() {
        let model = FixedLatencyConfig::latency(100);
        let mut world = store_loop(500, true, model, 1).unwrap();
        let r = world.run_until_quiescent(1_000_000).unwrap();
        assert_eq!(r.outcome, SimOutcome::Completed);
        assert!(r.stats.cycles <= 500 + 100 + 10, "took {} cycles", r.stats.cycles);
    }

    #[test]
    fn serialized_stores_cost_a_latency_each() {
        let model = FixedLatencyConfig::latency(100);
        let mut world = store_loop(50, false, model, 1).unwrap();
        let r = world.run_until_quiescent(1_000_000).unwrap();
        assert_eq!(r.outcome, SimOutcome::Completed);
        assert!(r.stats.cycles >= 50 * 100, "took {} cycles", r.stats.cycles);
    }

    #[test]
    fn starved_consumers_deadlock_quickly() {
        let model = FixedLatencyConfig::latency(100);
        let mut world = imbalanced(model, 1).unwrap();
        let r = world.run_until_quiescent(1_000_000).unwrap();
        match r.outcome {
            SimOutcome::Deadlocked { ref stuck } => {
                assert!(r.stats.cycles < 10_000, "wedged only after {} cycles", r.stats.cycles);
                assert!(!stuck.is_empty());
            }
            other => panic!("expected a deadlock, got {other:?}"),
        }
    }
}
