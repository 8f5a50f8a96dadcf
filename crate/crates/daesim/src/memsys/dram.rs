//! Simplified DRAM bank model behind the miss-optimized memory subsystem.
//!
//! Addresses split row-bank-column. Each bank services one line fetch at a
//! time; among queued fetches it prefers one hitting the open row and falls
//! back to FIFO order, so a row hit costs `t_row_hit` and a row change
//! `t_row_miss`. Banks operate independently.

use serde::{Deserialize, Serialize};

use crate::engine::Cycle;
use crate::memsys::Addr;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct DramConfig {
    pub banks: u32,
    pub rows_per_bank: u32,
    pub row_bytes: u32,
    pub t_row_hit: Cycle,
    pub t_row_miss: Cycle,
}

impl Default for DramConfig {
    fn default() -> Self {
        DramConfig { banks: 8, rows_per_bank: 65536, row_bytes: 2048, t_row_hit: 10, t_row_miss: 30 }
    }
}

impl DramConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.banks == 0 || !self.banks.is_power_of_two() {
            return Err("dram banks must be a nonzero power of two".into());
        }
        if self.row_bytes == 0 || !self.row_bytes.is_power_of_two() {
            return Err("dram row_bytes must be a nonzero power of two".into());
        }
        if self.t_row_miss <= self.t_row_hit {
            return Err("dram t_row_miss must exceed t_row_hit".into());
        }
        if self.t_row_hit < 1 {
            return Err("dram t_row_hit must be >= 1".into());
        }
        Ok(())
    }

    pub fn capacity_bytes(&self) -> u64 {
        u64::from(self.banks) * u64::from(self.rows_per_bank) * u64::from(self.row_bytes)
    }
}

struct Bank {
    open_row: Option<u64>,
    /// Line address in service and its completion cycle.
    in_service: Option<(Addr, Cycle)>,
    queue: Vec<Addr>,
}

pub(crate) struct Dram {
    cfg: DramConfig,
    banks: Vec<Bank>,
}

impl Dram {
    pub fn new(cfg: DramConfig) -> Self {
        let banks = (0..cfg.banks)
            .map(|_| Bank { open_row: None, in_service: None, queue: Vec::new() })
            .collect();
        Dram { cfg, banks }
    }

    fn bank_of(&self, addr: Addr) -> usize {
        ((addr / u64::from(self.cfg.row_bytes)) % u64::from(self.cfg.banks)) as usize
    }

    fn row_of(&self, addr: Addr) -> u64 {
        addr / (u64::from(self.cfg.row_bytes) * u64::from(self.cfg.banks))
    }

    pub fn push(&mut self, line_addr: Addr) {
        let b = self.bank_of(line_addr);
        self.banks[b].queue.push(line_addr);
    }

    /// Collect fetches finishing at `now`. Call before `select` so a bank
    /// can start its next fetch back-to-back in the same cycle.
    pub fn complete(&mut self, now: Cycle) -> Vec<Addr> {
        let mut done = Vec::new();
        for bank in &mut self.banks {
            if let Some((line, finish)) = bank.in_service {
                if finish <= now {
                    bank.in_service = None;
                    done.push(line);
                }
            }
        }
        done
    }

    /// Start the next fetch on every idle bank: open-row first, FIFO among
    /// equals.
    pub fn select(&mut self, now: Cycle) {
        for b in 0..self.banks.len() {
            if self.banks[b].in_service.is_some() || self.banks[b].queue.is_empty() {
                continue;
            }
            let pick = self.banks[b]
                .queue
                .iter()
                .position(|&a| Some(self.row_of(a)) == self.banks[b].open_row)
                .unwrap_or(0);
            let line = self.banks[b].queue.remove(pick);
            let row = self.row_of(line);
            let latency = if self.banks[b].open_row == Some(row) {
                self.cfg.t_row_hit
            } else {
                self.cfg.t_row_miss
            };
            self.banks[b].open_row = Some(row);
            self.banks[b].in_service = Some((line, now + latency));
        }
    }

    pub fn busy(&self) -> bool {
        self.banks.iter().any(|b| b.in_service.is_some() || !b.queue.is_empty())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drain(dram: &mut Dram, until: Cycle) -> Vec<(Cycle, Addr)> {
        let mut done = Vec::new();
        for now in 0..until {
            for line in dram.complete(now) {
                done.push((now, line));
            }
            dram.select(now);
        }
        done
    }

    #[test]
    fn same_row_pair_costs_miss_then_hit() {
        let cfg = DramConfig::default();
        let mut dram = Dram::new(cfg);
        dram.push(0);
        dram.push(64);
        let done = drain(&mut dram, 100);
        // First fetch opens the row (30 cycles), second hits it (10 more).
        assert_eq!(done, vec![(30, 0), (40, 64)]);
    }

    #[test]
    fn different_banks_overlap() {
        let cfg = DramConfig::default();
        let mut dram = Dram::new(cfg);
        dram.push(0); // bank 0
        dram.push(2048); // bank 1
        let done = drain(&mut dram, 100);
        assert_eq!(done, vec![(30, 0), (30, 2048)]);
    }

    #[test]
    fn open_row_first_reorders_alternating_rows() {
        let cfg = DramConfig::default();
        let mut dram = Dram::new(cfg);
        let row_a = 0u64;
        let row_b = 2048 * 8; // same bank, next row
        dram.push(row_a);
        dram.push(row_b);
        dram.push(row_a + 64);
        dram.push(row_b + 64);
        let done: Vec<Addr> = drain(&mut dram, 200).into_iter().map(|(_, a)| a).collect();
        // A opens its row, the second A-fetch jumps the queue, then the Bs.
        assert_eq!(done, vec![row_a, row_a + 64, row_b, row_b + 64]);
    }
}
