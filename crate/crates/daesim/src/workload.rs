//! Workload data: generation, validation, and a flat binary file format.
//!
//! Generation is seeded and portable; the same spec and seed produce
//! byte-identical files on every platform.

use std::collections::HashSet;
use std::io::{self, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const MAGIC: &[u8; 8] = b"DAESIMW\0";
const VERSION: u32 = 1;

/// Chain terminator in hash table entries.
pub const NIL: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq)]
pub struct SortedKeys {
    pub keys: Vec<u32>,
    pub probes: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HtEntry {
    pub key: u32,
    pub value: u32,
    pub next: u32,
}

/// Chained hash table image. The first `buckets` entries are the chain
/// heads (key 0 marks an empty head; stored keys are nonzero), the rest is
/// the overflow pool. Records are 16 bytes in memory: key, value, next, pad.
#[derive(Clone, Debug, PartialEq)]
pub struct HashTableImage {
    pub buckets: u32,
    pub entries: Vec<HtEntry>,
    pub lookups: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub n_rows: u32,
    pub n_cols: u32,
    pub row_ptr: Vec<u32>,
    pub col_idx: Vec<u32>,
    pub values: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsrWorkload {
    pub matrix: CsrMatrix,
    pub vector: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SortWorkload {
    pub data: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Workload {
    SortedKeys(SortedKeys),
    HashTable(HashTableImage),
    Csr(CsrWorkload),
    Sort(SortWorkload),
}

/// What to generate; serialized in run configurations.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorkloadSpec {
    SortedKeys { n: u64, probes: u64 },
    HashTable { keys: u64, buckets: u64, lookups: u64 },
    Csr { rows: u64, cols: u64, nnz: u64 },
    Sort { n: u64 },
}

impl CsrMatrix {
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.row_ptr.len() != self.n_rows as usize + 1 {
            return Err(format!(
                "row_ptr has {} entries for {} rows",
                self.row_ptr.len(),
                self.n_rows
            ));
        }
        if self.row_ptr[0] != 0 {
            return Err("row_ptr must start at 0".into());
        }
        if self.row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return Err("row_ptr must be nondecreasing".into());
        }
        let nnz = *self.row_ptr.last().unwrap() as usize;
        if nnz != self.col_idx.len() || nnz != self.values.len() {
            return Err(format!(
                "row_ptr ends at {nnz} but there are {} columns and {} values",
                self.col_idx.len(),
                self.values.len()
            ));
        }
        for r in 0..self.n_rows as usize {
            let row = &self.col_idx[self.row_ptr[r] as usize..self.row_ptr[r + 1] as usize];
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(format!("columns in row {r} are not strictly increasing"));
            }
            if row.last().is_some_and(|&c| c >= self.n_cols) {
                return Err(format!("row {r} has a column out of range"));
            }
        }
        Ok(())
    }
}

/// Bucket of a key, shared between the generator, the lookup kernels, and
/// the oracle. `buckets` must be a power of two.
pub fn bucket_of(key: u32, buckets: u32) -> u32 {
    debug_assert!(buckets.is_power_of_two());
    let h = key.wrapping_mul(0x9e37_79b1);
    h >> (32 - buckets.trailing_zeros())
}

pub fn generate(spec: &WorkloadSpec, seed: u64) -> Result<Workload, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match *spec {
        WorkloadSpec::SortedKeys { n, probes } => {
            if n < 1 {
                return Err("sorted_keys needs n >= 1".into());
            }
            if n.saturating_mul(8) > u64::from(u32::MAX) {
                return Err("sorted_keys n too large for 32-bit keys".into());
            }
            let mut keys = Vec::with_capacity(n as usize);
            let mut k = 0u32;
            for _ in 0..n {
                k += rng.random_range(1..=8u32);
                keys.push(k);
            }
            let max = *keys.last().unwrap();
            let probes = (0..probes)
                .map(|_| {
                    if rng.random_bool(0.5) {
                        keys[rng.random_range(0..keys.len())]
                    } else {
                        rng.random_range(0..=max + 1)
                    }
                })
                .collect();
            Ok(Workload::SortedKeys(SortedKeys { keys, probes }))
        }
        WorkloadSpec::HashTable { keys, buckets, lookups } => {
            if !buckets.is_power_of_two() || buckets > u64::from(u32::MAX) {
                return Err("hash_table needs a power-of-two bucket count".into());
            }
            if keys < 1 {
                return Err("hash_table needs keys >= 1".into());
            }
            let buckets = buckets as u32;
            let capacity = buckets as usize + keys as usize;
            let mut entries = vec![HtEntry { key: 0, value: 0, next: NIL }; capacity];
            let mut pool: Vec<u32> = (buckets..capacity as u32).collect();
            pool.shuffle(&mut rng);
            let mut used = HashSet::with_capacity(keys as usize);
            let mut tails: Vec<u32> = Vec::new();
            for _ in 0..keys {
                let k = loop {
                    let k = rng.random_range(1..=u32::MAX);
                    if used.insert(k) {
                        break k;
                    }
                };
                let value = rng.random();
                let head = bucket_of(k, buckets) as usize;
                if entries[head].key == 0 {
                    entries[head] = HtEntry { key: k, value, next: NIL };
                } else {
                    let mut at = head;
                    while entries[at].next != NIL {
                        at = entries[at].next as usize;
                    }
                    let slot = pool.pop().expect("overflow pool sized for every key") as usize;
                    entries[at].next = slot as u32;
                    entries[slot] = HtEntry { key: k, value, next: NIL };
                }
            }
            // Look up chain tails: every probe walks its whole chain.
            for b in 0..buckets as usize {
                if entries[b].key != 0 {
                    let mut at = b;
                    while entries[at].next != NIL {
                        at = entries[at].next as usize;
                    }
                    tails.push(entries[at].key);
                }
            }
            let lookups = (0..lookups).map(|_| tails[rng.random_range(0..tails.len())]).collect();
            Ok(Workload::HashTable(HashTableImage { buckets, entries, lookups }))
        }
        WorkloadSpec::Csr { rows, cols, nnz } => {
            if rows < 1 || cols < 1 {
                return Err("csr needs rows >= 1 and cols >= 1".into());
            }
            if rows > u64::from(u32::MAX) || cols > u64::from(u32::MAX) || nnz > u64::from(u32::MAX)
            {
                return Err("csr dimensions must fit in 32 bits".into());
            }
            if nnz > rows * cols {
                return Err("csr nnz exceeds rows * cols".into());
            }
            let cap = cols as u32;
            let mut counts = vec![0u32; rows as usize];
            for _ in 0..nnz {
                let mut r = rng.random_range(0..rows as usize);
                while counts[r] >= cap {
                    r = (r + 1) % rows as usize;
                }
                counts[r] += 1;
            }
            let mut row_ptr = Vec::with_capacity(rows as usize + 1);
            row_ptr.push(0u32);
            let mut acc = 0;
            for c in &counts {
                acc += c;
                row_ptr.push(acc);
            }
            let mut col_idx = Vec::with_capacity(nnz as usize);
            let mut values = Vec::with_capacity(nnz as usize);
            for &c in &counts {
                let mut picked = HashSet::with_capacity(c as usize);
                let mut row: Vec<u32> = (0..c)
                    .map(|_| loop {
                        let j = rng.random_range(0..cols as u32);
                        if picked.insert(j) {
                            break j;
                        }
                    })
                    .collect();
                row.sort_unstable();
                for j in row {
                    col_idx.push(j);
                    values.push(rng.random_range(-1.0..1.0f32));
                }
            }
            let vector = (0..cols).map(|_| rng.random_range(-1.0..1.0f32)).collect();
            let matrix =
                CsrMatrix { n_rows: rows as u32, n_cols: cols as u32, row_ptr, col_idx, values };
            matrix.validate()?;
            Ok(Workload::Csr(CsrWorkload { matrix, vector }))
        }
        WorkloadSpec::Sort { n } => {
            if n < 1 {
                return Err("sort needs n >= 1".into());
            }
            Ok(Workload::Sort(SortWorkload { data: (0..n).map(|_| rng.random()).collect() }))
        }
    }
}

fn put_u32s(out: &mut Vec<u8>, xs: &[u32]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn put_f32s(out: &mut Vec<u8>, xs: &[f32]) {
    for x in xs {
        out.extend_from_slice(&x.to_bits().to_le_bytes());
    }
}

impl Workload {
    fn kind_tag(&self) -> u32 {
        match self {
            Workload::SortedKeys(_) => 1,
            Workload::HashTable(_) => 2,
            Workload::Csr(_) => 3,
            Workload::Sort(_) => 4,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.kind_tag().to_le_bytes());
        out.extend_from_slice(&VERSION.to_le_bytes());
        let (count, aux): (u64, u64) = match self {
            Workload::SortedKeys(w) => (w.keys.len() as u64, w.probes.len() as u64),
            Workload::HashTable(w) => {
                (w.entries.len() as u64, u64::from(w.buckets) | (w.lookups.len() as u64) << 32)
            }
            Workload::Csr(w) => (u64::from(w.matrix.n_rows), u64::from(w.matrix.n_cols)),
            Workload::Sort(w) => (w.data.len() as u64, 0),
        };
        out.extend_from_slice(&count.to_le_bytes());
        out.extend_from_slice(&aux.to_le_bytes());
        match self {
            Workload::SortedKeys(w) => {
                put_u32s(&mut out, &w.keys);
                put_u32s(&mut out, &w.probes);
            }
            Workload::HashTable(w) => {
                for e in &w.entries {
                    put_u32s(&mut out, &[e.key, e.value, e.next, 0]);
                }
                put_u32s(&mut out, &w.lookups);
            }
            Workload::Csr(w) => {
                out.extend_from_slice(&(w.matrix.nnz() as u64).to_le_bytes());
                put_u32s(&mut out, &w.matrix.row_ptr);
                put_u32s(&mut out, &w.matrix.col_idx);
                put_f32s(&mut out, &w.matrix.values);
                put_f32s(&mut out, &w.vector);
            }
            Workload::Sort(w) => put_u32s(&mut out, &w.data),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> io::Result<Workload> {
        let mut r = Cursor { bytes, at: 0 };
        let magic = r.take(8)?;
        if magic != MAGIC {
            return Err(bad("not a workload file (bad magic)"));
        }
        let kind = r.u32()?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(bad(format!("unsupported workload version {version}")));
        }
        let count = r.u64()?;
        let aux = r.u64()?;
        let w = match kind {
            1 => Workload::SortedKeys(SortedKeys {
                keys: r.u32s(count as usize)?,
                probes: r.u32s(aux as usize)?,
            }),
            2 => {
                let buckets = (aux & 0xffff_ffff) as u32;
                let lookups = (aux >> 32) as usize;
                let mut entries = Vec::with_capacity(count as usize);
                for _ in 0..count {
                    let w = r.u32s(4)?;
                    entries.push(HtEntry { key: w[0], value: w[1], next: w[2] });
                }
                Workload::HashTable(HashTableImage {
                    buckets,
                    entries,
                    lookups: r.u32s(lookups)?,
                })
            }
            3 => {
                let nnz = r.u64()? as usize;
                let matrix = CsrMatrix {
                    n_rows: count as u32,
                    n_cols: aux as u32,
                    row_ptr: r.u32s(count as usize + 1)?,
                    col_idx: r.u32s(nnz)?,
                    values: r.f32s(nnz)?,
                };
                Workload::Csr(CsrWorkload { matrix, vector: r.f32s(aux as usize)? })
            }
            4 => Workload::Sort(SortWorkload { data: r.u32s(count as usize)? }),
            other => return Err(bad(format!("unknown workload kind {other}"))),
        };
        if r.at != bytes.len() {
            return Err(bad("trailing bytes after workload payload"));
        }
        Ok(w)
    }

    pub fn write_to(&self, path: &Path) -> io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())
    }

    pub fn read_from(path: &Path) -> io::Result<Workload> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Workload::from_bytes(&bytes)
    }
}

fn bad(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> io::Result<&[u8]> {
        if self.at + n > self.bytes.len() {
            return Err(bad("workload file truncated"));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> io::Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> io::Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u32s(&mut self, n: usize) -> io::Result<Vec<u32>> {
        let s = self.take(n * 4)?;
        Ok(s.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn f32s(&mut self, n: usize) -> io::Result<Vec<f32>> {
        Ok(self.u32s(n)?.into_iter().map(f32::from_bits).collect())
    }
}
