//! One-dimensional frequency-estimation sketches.
//!
//! Misra-Gries is the deterministic baseline; its eviction threshold `τ` is
//! exposed because the whole family of guarantees is parameterized by it
//! (the common implementation is `τ = m`). CountMin and CountSketch are the
//! randomized baselines, plus the simplified truncated CountSketch that
//! zeroes estimates below `C·n/w`. [`Learned`] wraps any of them with exact
//! counters for a predicted heavy set.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::FrequencyOracle;
use crate::ElementId;

/// Common query surface shared by every frequency sketch.
pub trait FreqSketch {
    fn update(&mut self, item: ElementId);
    fn estimate(&self, item: ElementId) -> f64;
    /// Memory footprint in words under the accounting used throughout the
    /// benchmarks: key/value counters cost two words each, plain integer
    /// cells cost one.
    fn space_words(&self) -> u64;
    fn items_seen(&self) -> u64;
}

/// Misra-Gries summary with at most `m` (key, count) buckets.
///
/// When a new element arrives and all buckets are occupied, it transiently
/// joins the table as an (m+1)-th candidate with count 1; the (τ+1)-th
/// largest candidate count is subtracted from every candidate and
/// non-positive candidates are dropped. The arriving element never survives
/// (the decrement is at least its single unit), and with the default
/// `τ = m` the decrement is exactly 1, the classic rule. Feeding the
/// matching row-buffer sketch standard-basis rows with one extra buffer slot
/// reproduces this summary bucket for bucket.
///
/// Estimates never overestimate, and the maximum error after `n` items is
/// at most `min_k (n − Σ_{j≤k} f_(j)) / (τ − k)` over `k < τ`, where
/// `f_(j)` is the j-th largest true frequency.
#[derive(Debug, Clone)]
pub struct MisraGries {
    table: HashMap<ElementId, u64>,
    capacity: usize,
    threshold: usize,
    items_seen: u64,
}

impl MisraGries {
    pub fn new(capacity: usize, threshold: usize) -> Result<Self> {
        if capacity == 0 || threshold == 0 || threshold > capacity {
            return Err(Error::InvalidArgument(format!(
                "need 1 ≤ τ ≤ m, got τ={threshold}, m={capacity}"
            )));
        }
        Ok(Self {
            table: HashMap::with_capacity(capacity + 1),
            capacity,
            threshold,
            items_seen: 0,
        })
    }

    /// The common configuration `τ = m`.
    pub fn with_capacity(capacity: usize) -> Result<Self> {
        Self::new(capacity, capacity)
    }

    pub fn update(&mut self, item: ElementId) {
        self.items_seen += 1;
        if let Some(c) = self.table.get_mut(&item) {
            *c += 1;
            return;
        }
        if self.table.len() < self.capacity {
            self.table.insert(item, 1);
            return;
        }
        // Full table, absent element: the m stored counts plus the arriving
        // unit form m+1 candidates; subtract the (τ+1)-th largest candidate
        // count from all of them and drop the non-positive ones. The arrival
        // always sits last in the candidate order, so for τ = m the
        // decrement is 1 and otherwise it is the (τ+1)-th largest stored
        // count; either way the arrival itself is absorbed.
        let decrement = if self.threshold == self.capacity {
            1
        } else {
            self.kth_largest_count(self.threshold + 1)
        };
        debug_assert!(decrement >= 1);
        self.table.retain(|_, c| {
            if *c > decrement {
                *c -= decrement;
                true
            } else {
                false
            }
        });
    }

    /// k-th largest stored count (1-indexed), ties inspected in id order so
    /// the selection pass is deterministic.
    fn kth_largest_count(&self, k: usize) -> u64 {
        let mut counts: Vec<(u64, ElementId)> =
            self.table.iter().map(|(id, c)| (*c, *id)).collect();
        debug_assert!(k >= 1 && k <= counts.len());
        let idx = k - 1;
        counts.select_nth_unstable_by(idx, |a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        counts[idx].0
    }

    pub fn estimate(&self, item: ElementId) -> u64 {
        self.table.get(&item).copied().unwrap_or(0)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn items_seen(&self) -> u64 {
        self.items_seen
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn contains(&self, item: ElementId) -> bool {
        self.table.contains_key(&item)
    }

    /// Table contents as (id, count) pairs sorted by id.
    pub fn entries_sorted(&self) -> Vec<(ElementId, u64)> {
        let mut v: Vec<(ElementId, u64)> = self.table.iter().map(|(k, c)| (*k, *c)).collect();
        v.sort_unstable();
        v
    }

    pub fn snapshot(&self) -> MisraGriesSnapshot {
        MisraGriesSnapshot {
            version: SNAPSHOT_VERSION,
            capacity: self.capacity,
            threshold: self.threshold,
            items_seen: self.items_seen,
            entries: self.entries_sorted(),
        }
    }

    pub fn from_snapshot(s: &MisraGriesSnapshot) -> Result<Self> {
        if s.version != SNAPSHOT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported snapshot version {}",
                s.version
            )));
        }
        let mut mg = Self::new(s.capacity, s.threshold)?;
        if s.entries.len() > s.capacity {
            return Err(Error::Parse("snapshot exceeds its own capacity".into()));
        }
        for &(id, c) in &s.entries {
            if c == 0 {
                return Err(Error::Parse("snapshot holds a zero count".into()));
            }
            mg.table.insert(id, c);
        }
        mg.items_seen = s.items_seen;
        Ok(mg)
    }
}

/// Worst-case estimation error of a τ-threshold summary on a stream with the
/// given true frequencies: `min_k (n − Σ_{j≤k} f_(j)) / (τ − k)`.
pub fn mg_error_bound(truth: &[u64], tau: usize) -> f64 {
    let mut sorted: Vec<u64> = truth.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let n: u64 = sorted.iter().sum();
    let mut best = f64::INFINITY;
    let mut head = 0u64;
    for k in 0..tau {
        if k > 0 {
            head += sorted.get(k - 1).copied().unwrap_or(0);
        }
        let bound = (n - head) as f64 / (tau - k) as f64;
        best = best.min(bound);
    }
    best
}

impl FreqSketch for MisraGries {
    fn update(&mut self, item: ElementId) {
        MisraGries::update(self, item)
    }

    fn estimate(&self, item: ElementId) -> f64 {
        MisraGries::estimate(self, item) as f64
    }

    fn space_words(&self) -> u64 {
        2 * self.capacity as u64
    }

    fn items_seen(&self) -> u64 {
        self.items_seen
    }
}

const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MisraGriesSnapshot {
    pub version: u32,
    pub capacity: usize,
    pub threshold: usize,
    pub items_seen: u64,
    pub entries: Vec<(ElementId, u64)>,
}

/// splitmix64 finalizer; the seeded mixing function behind all sketch
/// hashing. Pairwise independence is only approximated, which is fine for
/// the synthetic workloads this library targets.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CsMode {
    /// Median-of-rows estimator.
    Plain,
    /// Median-of-rows, then estimates below `c·n/w` are reported as zero.
    Truncated { c: f64 },
}

/// CountSketch table with `rows × width` signed counters.
#[derive(Debug, Clone)]
pub struct CountSketch {
    rows: usize,
    width: usize,
    seed: u64,
    mode: CsMode,
    counters: Vec<i64>,
    items_seen: u64,
}

impl CountSketch {
    pub fn new(rows: usize, width: usize, seed: u64, mode: CsMode) -> Result<Self> {
        if rows == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "count sketch needs positive dimensions, got {rows}x{width}"
            )));
        }
        if let CsMode::Truncated { c } = mode {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "truncation constant must be finite and non-negative, got {c}"
                )));
            }
        }
        Ok(Self {
            rows,
            width,
            seed,
            mode,
            counters: vec![0; rows * width],
            items_seen: 0,
        })
    }

    #[inline]
    pub fn bucket(&self, row: usize, item: ElementId) -> usize {
        let key = mix64(self.seed ^ mix64(row as u64));
        (mix64(key ^ item) % self.width as u64) as usize
    }

    #[inline]
    pub fn sign(&self, row: usize, item: ElementId) -> i64 {
        let key = mix64(self.seed ^ mix64(row as u64) ^ 0x5851_f42d_4c95_7f2d);
        if mix64(key ^ item) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    pub fn update(&mut self, item: ElementId) {
        self.items_seen += 1;
        for row in 0..self.rows {
            let b = self.bucket(row, item);
            self.counters[row * self.width + b] += self.sign(row, item);
        }
    }

    pub fn estimate(&self, item: ElementId) -> f64 {
        let mut vals: Vec<f64> = (0..self.rows)
            .map(|row| {
                let b = self.bucket(row, item);
                (self.sign(row, item) * self.counters[row * self.width + b]) as f64
            })
            .collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mid = self.rows / 2;
        let med = if self.rows % 2 == 1 {
            vals[mid]
        } else {
            0.5 * (vals[mid - 1] + vals[mid])
        };
        match self.mode {
            CsMode::Plain => med,
            CsMode::Truncated { c } => {
                let floor = c * self.items_seen as f64 / self.width as f64;
                if med < floor {
                    0.0
                } else {
                    med
                }
            }
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mode(&self) -> CsMode {
        self.mode
    }

    pub fn snapshot(&self) -> CountSketchSnapshot {
        CountSketchSnapshot {
            version: SNAPSHOT_VERSION,
            rows: self.rows,
            width: self.width,
            seed: self.seed,
            mode: self.mode,
            items_seen: self.items_seen,
            counters: self.counters.clone(),
        }
    }

    pub fn from_snapshot(s: &CountSketchSnapshot) -> Result<Self> {
        if s.version != SNAPSHOT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported snapshot version {}",
                s.version
            )));
        }
        let mut cs = Self::new(s.rows, s.width, s.seed, s.mode)?;
        if s.counters.len() != s.rows * s.width {
            return Err(Error::Parse("snapshot counter grid has wrong size".into()));
        }
        cs.counters = s.counters.clone();
        cs.items_seen = s.items_seen;
        Ok(cs)
    }
}

impl FreqSketch for CountSketch {
    fn update(&mut self, item: ElementId) {
        CountSketch::update(self, item)
    }

    fn estimate(&self, item: ElementId) -> f64 {
        CountSketch::estimate(self, item)
    }

    fn space_words(&self) -> u64 {
        (self.rows * self.width) as u64
    }

    fn items_seen(&self) -> u64 {
        self.items_seen
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CountSketchSnapshot {
    pub version: u32,
    pub rows: usize,
    pub width: usize,
    pub seed: u64,
    pub mode: CsMode,
    pub items_seen: u64,
    pub counters: Vec<i64>,
}

/// CountMin table: unsigned counters, minimum over rows.
#[derive(Debug, Clone)]
pub struct CountMin {
    rows: usize,
    width: usize,
    seed: u64,
    counters: Vec<u64>,
    items_seen: u64,
}

impl CountMin {
    pub fn new(rows: usize, width: usize, seed: u64) -> Result<Self> {
        if rows == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "count-min needs positive dimensions, got {rows}x{width}"
            )));
        }
        Ok(Self {
            rows,
            width,
            seed,
            counters: vec![0; rows * width],
            items_seen: 0,
        })
    }

    #[inline]
    fn bucket(&self, row: usize, item: ElementId) -> usize {
        let key = mix64(self.seed ^ mix64((row as u64) | 0x8000_0000_0000_0000));
        (mix64(key ^ item) % self.width as u64) as usize
    }

    pub fn update(&mut self, item: ElementId) {
        self.items_seen += 1;
        for row in 0..self.rows {
            let b = self.bucket(row, item);
            self.counters[row * self.width + b] += 1;
        }
    }

    pub fn estimate(&self, item: ElementId) -> u64 {
        (0..self.rows)
            .map(|row| self.counters[row * self.width + self.bucket(row, item)])
            .min()
            .unwrap_or(0)
    }
}

impl FreqSketch for CountMin {
    fn update(&mut self, item: ElementId) {
        CountMin::update(self, item)
    }

    fn estimate(&self, item: ElementId) -> f64 {
        CountMin::estimate(self, item) as f64
    }

    fn space_words(&self) -> u64 {
        (self.rows * self.width) as u64
    }

    fn items_seen(&self) -> u64 {
        self.items_seen
    }
}

/// Learned wrapper: elements of the predicted heavy set are counted exactly,
/// everything else is routed to the inner sketch.
#[derive(Debug, Clone)]
pub struct Learned<S> {
    heavy: HashMap<ElementId, u64>,
    order: Vec<ElementId>,
    inner: S,
}

pub type LearnedMisraGries = Learned<MisraGries>;

impl<S: FreqSketch> Learned<S> {
    pub fn new(oracle: &FrequencyOracle, inner: S) -> Self {
        let order: Vec<ElementId> = oracle.ids().to_vec();
        let heavy = order.iter().map(|&id| (id, 0)).collect();
        Self {
            heavy,
            order,
            inner,
        }
    }

    pub fn update(&mut self, item: ElementId) {
        if let Some(c) = self.heavy.get_mut(&item) {
            *c += 1;
        } else {
            self.inner.update(item);
        }
    }

    pub fn estimate(&self, item: ElementId) -> f64 {
        match self.heavy.get(&item) {
            Some(c) => *c as f64,
            None => self.inner.estimate(item),
        }
    }

    /// Exact count for a predicted-heavy element, if the element is one.
    pub fn exact_count(&self, item: ElementId) -> Option<u64> {
        self.heavy.get(&item).copied()
    }

    pub fn predicted_len(&self) -> usize {
        self.order.len()
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }

    pub fn heavy_entries_sorted(&self) -> Vec<(ElementId, u64)> {
        let mut v: Vec<(ElementId, u64)> = self.heavy.iter().map(|(k, c)| (*k, *c)).collect();
        v.sort_unstable();
        v
    }
}

impl<S: FreqSketch> FreqSketch for Learned<S> {
    fn update(&mut self, item: ElementId) {
        Learned::update(self, item)
    }

    fn estimate(&self, item: ElementId) -> f64 {
        Learned::estimate(self, item)
    }

    fn space_words(&self) -> u64 {
        2 * self.order.len() as u64 + self.inner.space_words()
    }

    fn items_seen(&self) -> u64 {
        let heavy: u64 = self.heavy.values().sum();
        heavy + self.inner.items_seen()
    }
}

impl LearnedMisraGries {
    pub fn snapshot(&self) -> LearnedMisraGriesSnapshot {
        LearnedMisraGriesSnapshot {
            version: SNAPSHOT_VERSION,
            predicted: self.order.clone(),
            heavy_entries: self.heavy_entries_sorted(),
            inner: self.inner.snapshot(),
        }
    }

    pub fn from_snapshot(s: &LearnedMisraGriesSnapshot) -> Result<Self> {
        if s.version != SNAPSHOT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported snapshot version {}",
                s.version
            )));
        }
        let inner = MisraGries::from_snapshot(&s.inner)?;
        let oracle = FrequencyOracle::from_ids(s.predicted.clone())?;
        let mut out = Learned::new(&oracle, inner);
        for &(id, c) in &s.heavy_entries {
            match out.heavy.get_mut(&id) {
                Some(slot) => *slot = c,
                None => {
                    return Err(Error::Parse(format!(
                        "snapshot heavy entry {id} is not in the predicted set"
                    )))
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnedMisraGriesSnapshot {
    pub version: u32,
    pub predicted: Vec<ElementId>,
    pub heavy_entries: Vec<(ElementId, u64)>,
    pub inner: MisraGriesSnapshot,
}

/// How a space budget (in words) is split between the exact-count block and
/// the inner sketch of a learned algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    /// Half the words to exact counters, half to the inner sketch.
    Half,
    /// A third of the equivalent counters to the exact block; used by the
    /// tighter analyses.
    Third,
}

impl Split {
    /// Number of exactly-counted elements a budget of `words` affords, given
    /// that each exact counter costs two words.
    pub fn heavy_elements(self, words: u64) -> usize {
        match self {
            Split::Half => (words / 4) as usize,
            Split::Third => (words / 6) as usize,
        }
    }

    /// Number of predicted directions for a matrix sketch with `m` row
    /// slots, where predictions and their tracker each consume one slot per
    /// direction.
    pub fn direction_buckets(self, m: usize) -> usize {
        match self {
            Split::Half => m / 4,
            Split::Third => m / 3,
        }
    }
}
