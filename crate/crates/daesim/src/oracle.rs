//! Reference results, operation counts, and ideal cycle numbers.
//!
//! Everything here is computed directly from the workload definition by
//! plain sequential code, never from the simulator, so simulated runs can be
//! checked against it: functional outputs must match exactly, per-region
//! operation counts must match exactly, and cycle counts are judged against
//! the golden number (one useful memory operation per cycle).

use std::io::{self, Write};

use crate::engine::SimStats;
use crate::kernel::{KernelKind, KernelParams};
use crate::workload::{bucket_of, CsrMatrix, HashTableImage, SortedKeys, Workload, NIL};

#[derive(Clone, Debug, PartialEq)]
pub struct RegionCounts {
    pub region: String,
    pub loads: u64,
    pub stores: u64,
}

/// Expected final content of the kernel's output region.
#[derive(Clone, Debug, PartialEq)]
pub struct Expected {
    pub region: String,
    pub words: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    /// Cycles an ideal machine needs: one useful memory operation per cycle,
    /// all latency hidden.
    pub golden_cycles: u64,
    pub counts: Vec<RegionCounts>,
    /// Loads a fully serialized (coupled) data path waits on one at a time.
    pub serialized_loads: u64,
    pub expected: Expected,
}

impl OracleReport {
    pub fn total_loads(&self) -> u64 {
        self.counts.iter().map(|c| c.loads).sum()
    }

    pub fn total_stores(&self) -> u64 {
        self.counts.iter().map(|c| c.stores).sum()
    }
}

/// A channel that finished the run with unmatched traffic.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub channel: String,
    pub sent: u64,
    pub received: u64,
}

/// Find the first channel whose producer and consumer sides disagree. A
/// completed run with a violation means the kernel's processes were not
/// balanced: some values were produced and never consumed, or requested and
/// never awaited.
pub fn check_balance(stats: &SimStats) -> Option<Violation> {
    for s in &stats.streams {
        if s.enqueues != s.dequeues {
            return Some(Violation { channel: s.name.clone(), sent: s.enqueues, received: s.dequeues });
        }
    }
    for d in &stats.decouples {
        if d.requests != d.responses {
            return Some(Violation {
                channel: d.name.clone(),
                sent: d.requests,
                received: d.responses,
            });
        }
    }
    None
}

pub fn write_counts<W: Write>(report: &OracleReport, w: &mut W) -> io::Result<()> {
    writeln!(w, "region,loads,stores")?;
    for c in &report.counts {
        writeln!(w, "{},{},{}", c.region, c.loads, c.stores)?;
    }
    Ok(())
}

/// Guarded binary search with early exit: the index holding `key`, or
/// [`NIL`], plus the number of probes the loop made.
pub fn search_steps(keys: &[u32], key: u32) -> (u32, u64) {
    let (mut lo, mut hi, mut probes) = (0usize, keys.len(), 0);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        probes += 1;
        if keys[mid] == key {
            return (mid as u32, probes);
        }
        if keys[mid] < key {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    (NIL, probes)
}

/// Probes made per key by the fixed-trip-count search on `n` keys.
pub fn fixed_search_passes(n: usize) -> u64 {
    u64::from(n.ilog2()) + 1
}

/// Fixed-trip-count lower-bound search: always [`fixed_search_passes`]
/// probes, exhausted ranges probe a clamped dummy index.
pub fn fixed_search(keys: &[u32], key: u32) -> u32 {
    let n = keys.len();
    let (mut lo, mut len) = (0usize, n);
    for _ in 0..fixed_search_passes(n) {
        if len > 0 {
            let half = len / 2;
            if keys[lo + half] < key {
                lo += half + 1;
                len -= half + 1;
            } else {
                len = half;
            }
        } else {
            // Dummy probe keeps the trip count fixed.
            let _ = keys[lo.min(n - 1)];
        }
    }
    if lo < n && keys[lo] == key {
        lo as u32
    } else {
        NIL
    }
}

/// Walk a chain: the stored value for `key` (0 on a miss) and the number of
/// entries loaded.
pub fn chain_walk(img: &HashTableImage, key: u32) -> (u32, u64) {
    let mut at = bucket_of(key, img.buckets) as usize;
    let mut loads = 0;
    loop {
        loads += 1;
        let e = img.entries[at];
        if e.key == key {
            return (e.value, loads);
        }
        if e.key == 0 || e.next == NIL {
            return (0, loads);
        }
        at = e.next as usize;
    }
}

pub fn spmv(m: &CsrMatrix, x: &[f32]) -> Vec<f32> {
    (0..m.n_rows as usize)
        .map(|r| {
            let mut sum = 0f32;
            for i in m.row_ptr[r] as usize..m.row_ptr[r + 1] as usize {
                sum += m.values[i] * x[m.col_idx[i] as usize];
            }
            sum
        })
        .collect()
}

/// Merge passes over `n` elements: runs double in width until one run
/// covers everything.
pub fn merge_passes(n: usize) -> u64 {
    if n <= 1 {
        0
    } else {
        u64::from(n.next_power_of_two().ilog2())
    }
}

fn counts(rows: &[(&str, u64, u64)]) -> Vec<RegionCounts> {
    rows.iter()
        .map(|&(region, loads, stores)| RegionCounts { region: region.to_string(), loads, stores })
        .collect()
}

fn f32_words(xs: &[f32]) -> Vec<u32> {
    xs.iter().map(|x| x.to_bits()).collect()
}

fn chase_report(keys_region: &str, probe_loads: u64, n_queries: u64, results: Vec<u32>) -> OracleReport {
    OracleReport {
        golden_cycles: probe_loads,
        counts: counts(&[
            (keys_region, probe_loads, 0),
            ("probes", n_queries, 0),
            ("out", 0, n_queries),
        ]),
        serialized_loads: probe_loads + n_queries,
        expected: Expected { region: "out".into(), words: results },
    }
}

fn sorted_keys_of(w: &Workload) -> Result<&SortedKeys, String> {
    match w {
        Workload::SortedKeys(s) => Ok(s),
        _ => Err("this kernel needs a sorted-keys workload".into()),
    }
}

pub fn oracle_execute(
    kind: KernelKind,
    w: &Workload,
    params: &KernelParams,
) -> Result<OracleReport, String> {
    match kind {
        KernelKind::Binsearch => {
            let s = sorted_keys_of(w)?;
            let mut probes = 0;
            let results = s
                .probes
                .iter()
                .map(|&k| {
                    let (r, p) = search_steps(&s.keys, k);
                    probes += p;
                    r
                })
                .collect();
            Ok(chase_report("keys", probes, s.probes.len() as u64, results))
        }
        KernelKind::BinsearchFor => {
            let s = sorted_keys_of(w)?;
            let results = s.probes.iter().map(|&k| fixed_search(&s.keys, k)).collect();
            let probes = fixed_search_passes(s.keys.len()) * s.probes.len() as u64;
            Ok(chase_report("keys", probes, s.probes.len() as u64, results))
        }
        KernelKind::Hashtable => {
            let Workload::HashTable(img) = w else {
                return Err("hashtable needs a hash-table workload".into());
            };
            let mut loads = 0;
            let results = img
                .lookups
                .iter()
                .map(|&k| {
                    let (v, l) = chain_walk(img, k);
                    loads += l;
                    v
                })
                .collect();
            Ok(chase_report("table", loads, img.lookups.len() as u64, results))
        }
        KernelKind::Spmv => {
            let Workload::Csr(c) = w else {
                return Err("spmv needs a csr workload".into());
            };
            c.matrix.validate()?;
            let n = u64::from(c.matrix.n_rows);
            let nnz = c.matrix.nnz() as u64;
            let y = spmv(&c.matrix, &c.vector);
            Ok(OracleReport {
                golden_cycles: nnz,
                counts: counts(&[
                    ("rows", n + 1, 0),
                    ("cols", nnz, 0),
                    ("vals", nnz, 0),
                    ("vec", nnz, 0),
                    ("out", 0, n),
                ]),
                serialized_loads: n + 1 + 3 * nnz,
                expected: Expected { region: "out".into(), words: f32_words(&y) },
            })
        }
        KernelKind::MultiSpmv => {
            let Workload::Csr(c) = w else {
                return Err("multispmv needs a csr workload".into());
            };
            c.matrix.validate()?;
            if c.matrix.n_rows != c.matrix.n_cols {
                return Err("multispmv needs a square matrix".into());
            }
            if params.iterations < 1 {
                return Err("multispmv needs iterations >= 1".into());
            }
            let it = u64::from(params.iterations);
            let n = u64::from(c.matrix.n_rows);
            let nnz = c.matrix.nnz() as u64;
            let mut x = c.vector.clone();
            for _ in 0..params.iterations {
                x = spmv(&c.matrix, &x).iter().map(|v| v * params.scale).collect();
            }
            Ok(OracleReport {
                golden_cycles: it * nnz,
                counts: counts(&[
                    ("rows", it * (n + 1), 0),
                    ("cols", it * nnz, 0),
                    ("vals", it * nnz, 0),
                    ("vec", it * nnz, it * n),
                    ("out", it * n, it * n),
                ]),
                serialized_loads: it * (n + 1 + 3 * nnz + n),
                expected: Expected { region: "vec".into(), words: f32_words(&x) },
            })
        }
        KernelKind::Mergesort | KernelKind::MergesortOpt => {
            let Workload::Sort(s) = w else {
                return Err("mergesort needs a sort workload".into());
            };
            let n = s.data.len() as u64;
            let p = merge_passes(s.data.len());
            let mut sorted = s.data.clone();
            sorted.sort_unstable();
            let (table, result, final_region);
            if kind == KernelKind::Mergesort {
                // Merge table -> result every pass, copy back after every
                // pass but the last.
                table = (n * p, n * p.saturating_sub(1));
                result = (n * p.saturating_sub(1), n * p);
                final_region = if p == 0 { "table" } else { "result" };
            } else {
                // Ping-pong: passes alternate direction, no copies.
                let from_table = p.div_ceil(2);
                let from_result = p / 2;
                table = (n * from_table, n * from_result);
                result = (n * from_result, n * from_table);
                final_region = if p % 2 == 1 { "result" } else { "table" };
            }
            Ok(OracleReport {
                golden_cycles: n * p,
                counts: counts(&[("table", table.0, table.1), ("result", result.0, result.1)]),
                serialized_loads: table.0 + result.0,
                expected: Expected { region: final_region.into(), words: sorted },
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{generate, CsrWorkload, SortWorkload, WorkloadSpec};

    fn csr(n_rows: u32, n_cols: u32, row_ptr: Vec<u32>, col_idx: Vec<u32>, values: Vec<f32>) -> CsrMatrix {
        CsrMatrix { n_rows, n_cols, row_ptr, col_idx, values }
    }

    #[test]
    fn spmv_reference_on_a_small_matrix() {
        let m = csr(2, 2, vec![0, 1, 3], vec![0, 0, 1], vec![2.0, 3.0, 4.0]);
        let w = Workload::Csr(CsrWorkload { matrix: m, vector: vec![10.0, 100.0] });
        let r = oracle_execute(KernelKind::Spmv, &w, &KernelParams::default()).unwrap();
        assert_eq!(r.expected.words, vec![20.0f32.to_bits(), 430.0f32.to_bits()]);
        assert_eq!(r.golden_cycles, 3);
        assert_eq!(r.counts[0], RegionCounts { region: "rows".into(), loads: 3, stores: 0 });
        assert_eq!(r.serialized_loads, 3 + 9);
        assert_eq!(r.total_stores(), 2);
    }

    #[test]
    fn multispmv_identity_halves_twice() {
        let m = csr(2, 2, vec![0, 1, 2], vec![0, 1], vec![1.0, 1.0]);
        let w = Workload::Csr(CsrWorkload { matrix: m, vector: vec![4.0, 8.0] });
        let params = KernelParams { iterations: 2, scale: 0.5 };
        let r = oracle_execute(KernelKind::MultiSpmv, &w, &params).unwrap();
        assert_eq!(r.expected.region, "vec");
        assert_eq!(r.expected.words, vec![1.0f32.to_bits(), 2.0f32.to_bits()]);
        assert_eq!(r.golden_cycles, 4);
    }

    #[test]
    fn search_probe_counts_on_eight_keys() {
        let keys: Vec<u32> = (1..=8).collect();
        assert_eq!(search_steps(&keys, 8), (7, 3));
        assert_eq!(search_steps(&keys, 5), (4, 1));
        assert_eq!(search_steps(&keys, 0), (NIL, 4));
        assert_eq!(fixed_search_passes(8), 4);
        assert_eq!(fixed_search(&keys, 8), 7);
        assert_eq!(fixed_search(&keys, 5), 4);
        assert_eq!(fixed_search(&keys, 0), NIL);
        assert_eq!(fixed_search(&keys, 9), NIL);
    }

    #[test]
    fn fixed_search_agrees_with_early_exit_search_on_hits() {
        let Workload::SortedKeys(s) =
            generate(&WorkloadSpec::SortedKeys { n: 300, probes: 64 }, 2).unwrap()
        else {
            unreachable!()
        };
        for &p in &s.probes {
            assert_eq!(fixed_search(&s.keys, p), search_steps(&s.keys, p).0);
        }
    }

    #[test]
    fn chain_walk_load_count_is_the_chain_position() {
        let Workload::HashTable(img) =
            generate(&WorkloadSpec::HashTable { keys: 60, buckets: 8, lookups: 20 }, 4).unwrap()
        else {
            unreachable!()
        };
        for &k in &img.lookups {
            let (v, loads) = chain_walk(&img, k);
            let brute = img.entries.iter().find(|e| e.key == k).unwrap();
            assert_eq!(v, brute.value);
            let mut at = bucket_of(k, img.buckets) as usize;
            let mut pos = 1;
            while img.entries[at].key != k {
                at = img.entries[at].next as usize;
                pos += 1;
            }
            assert_eq!(loads, pos);
        }
    }

    #[test]
    fn mergesort_count_formulas_at_eight_elements() {
        let w = Workload::Sort(SortWorkload { data: (0..8).rev().collect() });
        let plain = oracle_execute(KernelKind::Mergesort, &w, &KernelParams::default()).unwrap();
        let opt = oracle_execute(KernelKind::MergesortOpt, &w, &KernelParams::default()).unwrap();
        // 3 passes over 8 elements: 2 * 8 * 3 - 8 each way for the copying
        // variant, 8 * 3 for the ping-ponging one.
        assert_eq!(plain.total_loads(), 40);
        assert_eq!(plain.total_stores(), 40);
        assert_eq!(opt.total_loads(), 24);
        assert_eq!(opt.total_stores(), 24);
        assert_eq!(plain.golden_cycles, 24);
        assert_eq!(opt.golden_cycles, 24);
        assert_eq!(plain.expected.region, "result");
        assert_eq!(opt.expected.region, "result");
        assert_eq!(opt.expected.words, (0..8).collect::<Vec<u32>>());
    }

    #[test]
    fn merge_pass_count_handles_ragged_sizes() {
        assert_eq!(merge_passes(1), 0);
        assert_eq!(merge_passes(2), 1);
        assert_eq!(merge_passes(8), 3);
        assert_eq!(merge_passes(234), 8);
        assert_eq!(merge_passes(1024), 10);
    }
}
