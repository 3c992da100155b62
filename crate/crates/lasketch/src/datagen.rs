//! Synthetic and adversarial instance generators.
//!
//! Streams follow a Zipfian frequency profile `f_i ∝ 1/i`; matrices carry a
//! Zipfian squared-singular-value spectrum `σ_i² ∝ 1/i`. The adversarial
//! builders play the eviction game that realizes the worst case of the
//! deterministic summaries: they drive a simulated table (the same
//! implementation the sketches use, so generator and subject cannot diverge)
//! and always emit an element the table does not currently hold.
//!
//! Every generator is a pure function of its seed.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::freq::MisraGries;
use crate::linalg::{orthonormalize, DenseMatrix};
use crate::ElementId;

/// A finite stream of element ids together with its exact frequency table.
#[derive(Debug, Clone)]
pub struct StreamInstance {
    pub items: Vec<ElementId>,
    /// Exact frequency of element `i+1` at index `i`; consistent with
    /// `items` and summing to `n`.
    pub truth: Vec<u64>,
    pub d: usize,
    pub n: u64,
}

impl StreamInstance {
    fn from_parts(items: Vec<ElementId>, truth: Vec<u64>, d: usize) -> Self {
        let n = items.len() as u64;
        debug_assert_eq!(truth.iter().sum::<u64>(), n);
        Self { items, truth, d, n }
    }

    /// Rebuilds an instance from raw items (used when loading stream files).
    pub fn from_items(items: Vec<ElementId>) -> Result<Self> {
        let d = items.iter().max().copied().unwrap_or(0) as usize;
        if items.contains(&0) {
            return Err(Error::Parse("element ids must be ≥ 1".into()));
        }
        let mut truth = vec![0u64; d];
        for &i in &items {
            truth[(i - 1) as usize] += 1;
        }
        Ok(Self::from_parts(items, truth, d))
    }
}

/// Whether a generated stream is emitted in a seeded shuffle or in blocks of
/// equal elements sorted by id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamOrder {
    Shuffled,
    Sorted,
}

/// n-th harmonic number.
pub fn harmonic(d: usize) -> f64 {
    (1..=d).map(|i| 1.0 / i as f64).sum()
}

/// Zipfian frequency table: `f_i = ⌊n / (i·H_d)⌋` with the rounding
/// remainder assigned to element 1, so the total is exactly `n`.
pub fn zipf_frequencies(d: usize, n: u64) -> Vec<u64> {
    assert!(d >= 1, "domain must be non-empty");
    let h = harmonic(d);
    let mut f: Vec<u64> = (1..=d)
        .map(|i| (n as f64 / (i as f64 * h)).floor() as u64)
        .collect();
    let total: u64 = f.iter().sum();
    debug_assert!(total <= n);
    f[0] += n - total;
    f
}

/// Stream whose frequencies follow the Zipfian rounding above.
pub fn zipf_stream(d: usize, n: u64, seed: u64, order: StreamOrder) -> StreamInstance {
    let truth = zipf_frequencies(d, n);
    let mut items = expand(&truth, 0);
    if order == StreamOrder::Shuffled {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        items.shuffle(&mut rng);
    }
    StreamInstance::from_parts(items, truth, d)
}

/// Expands a frequency table into a sorted block stream, ids offset by
/// `base` (element `base+i+1` appears `truth[i]` times).
fn expand(truth: &[u64], base: u64) -> Vec<ElementId> {
    let total: usize = truth.iter().map(|&f| f as usize).sum();
    let mut items = Vec::with_capacity(total);
    for (i, &f) in truth.iter().enumerate() {
        let id = base + i as u64 + 1;
        items.extend(std::iter::repeat_n(id, f as usize));
    }
    items
}

/// A generated matrix with its intended spectrum and right singular vectors.
#[derive(Debug, Clone)]
pub struct MatrixInstance {
    pub a: DenseMatrix,
    /// Intended squared singular values, non-increasing.
    pub spectrum: Vec<f64>,
    /// Intended right singular vectors as columns (d×d).
    pub v: DenseMatrix,
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    DenseMatrix::new(rows, cols, data).expect("gaussian entries are finite")
}

/// Random orthonormal columns via Gram-Schmidt on a Gaussian draw; retries
/// with fresh draws on (measure-zero) rank deficiency.
fn random_orthonormal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    loop {
        if let Ok(q) = orthonormalize(&gaussian_matrix(rows, cols, rng)) {
            return q;
        }
    }
}

/// Builds `A = U·diag(σ)·Vᵀ` with `σ_i² = Z/i`, `Z = n/H_d`, and seeded
/// random orthonormal factors, so `‖A‖_F² = n` and the right singular
/// structure is known exactly.
pub fn zipf_matrix(d: usize, n: usize, seed: u64) -> Result<MatrixInstance> {
    if n < d {
        return Err(Error::InvalidArgument(format!(
            "need at least as many rows as columns, got n={n}, d={d}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = n as f64 / harmonic(d);
    let spectrum: Vec<f64> = (1..=d).map(|i| z / i as f64).collect();
    let u = random_orthonormal(n, d, &mut rng);
    let v = random_orthonormal(d, d, &mut rng);
    let a = compose_svd(&u, &spectrum, &v);
    Ok(MatrixInstance { a, spectrum, v })
}

/// `U·diag(√spectrum)·Vᵀ` where `spectrum` holds squared singular values.
fn compose_svd(u: &DenseMatrix, spectrum: &[f64], v: &DenseMatrix) -> DenseMatrix {
    let n = u.rows();
    let d = v.rows();
    let k = spectrum.len();
    let mut a = DenseMatrix::zeros(n, d);
    for i in 0..n {
        for l in 0..k {
            let ul = u.get(i, l) * spectrum[l].sqrt();
            if ul == 0.0 {
                continue;
            }
            for j in 0..d {
                let val = a.get(i, j) + ul * v.get(j, l);
                a.set(i, j, val);
            }
        }
    }
    a
}

/// Worst-case stream for a Misra-Gries table of `m` buckets.
///
/// Head elements `1..t` (with `t = ⌈m / ln(2d/m)⌉`) are inserted first in
/// full blocks, padded with extra copies of element 1 so the phase-1 mass is
/// a multiple of `m` (the padding is reflected in `truth` and `n`). The tail
/// is then fed through the eviction game: always emit the smallest tail
/// element absent from a simulated table, which forces a decrement cascade
/// that drags down every head counter. Leftover tail copies are appended in
/// a seeded shuffle.
pub fn adversarial_mg_stream(d: usize, n: u64, m: usize, seed: u64) -> Result<StreamInstance> {
    if m >= d {
        return Err(Error::InvalidArgument(format!(
            "table capacity {m} must be below the domain size {d}"
        )));
    }
    let mut truth = zipf_frequencies(d, n);
    let t = ((m as f64) / (2.0 * d as f64 / m as f64).ln()).ceil() as usize;
    let t = t.clamp(1, m);

    // Phase 1 padding keeps the head mass a multiple of m.
    let head_mass: u64 = truth[..t].iter().sum();
    let pad = (m as u64 - head_mass % m as u64) % m as u64;
    truth[0] += pad;

    let mut items = Vec::with_capacity((n + pad) as usize);
    for i in 0..t {
        items.extend(std::iter::repeat_n(i as u64 + 1, truth[i] as usize));
    }

    let mut sim = MisraGries::with_capacity(m).expect("capacity checked above");
    for &it in &items {
        sim.update(it);
    }

    // Remaining tail multiset, ordered by id.
    let mut pool: BTreeMap<ElementId, u64> = (t..d)
        .filter(|&i| truth[i] > 0)
        .map(|i| (i as u64 + 1, truth[i]))
        .collect();

    play_eviction_game(&mut sim, &mut pool, &mut items);

    // Whatever survives the game goes in last, shuffled.
    let mut leftovers: Vec<ElementId> = Vec::new();
    for (&id, &copies) in &pool {
        leftovers.extend(std::iter::repeat_n(id, copies as usize));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    leftovers.shuffle(&mut rng);
    for &it in &leftovers {
        sim.update(it);
    }
    items.extend(leftovers);

    // The game certifies itself: every head counter must have lost at least
    // the per-bucket share of the consumed tail mass (checked in the regime
    // the construction is designed for).
    #[cfg(debug_assertions)]
    if t <= m / 2 && m + t < d {
        let tail_beyond: u64 = truth[(m + t)..].iter().sum();
        let floor = tail_beyond as f64 / m as f64;
        for head in 1..=t as u64 {
            let f = truth[(head - 1) as usize];
            let drop = f - sim.estimate(head);
            debug_assert!(
                drop as f64 >= floor - 1e-9,
                "head {head} only lost {drop}, expected ≥ {floor}"
            );
        }
    }

    Ok(StreamInstance::from_parts(items, truth, d))
}

/// Worst-case stream for a learned summary with `k_h` exactly-counted
/// elements and an inner table of `m − k_h` buckets.
///
/// Heads `1..k_h` are emitted in blocks (they are absorbed by the exact
/// counters), then the tail plays the same eviction game against a simulated
/// inner table, forcing a full wipe-out of estimates across a band of
/// mid-tail elements.
pub fn adversarial_learned_mg_stream(
    d: usize,
    n: u64,
    m: usize,
    k_h: usize,
    seed: u64,
) -> Result<StreamInstance> {
    if k_h >= m {
        return Err(Error::InvalidArgument(format!(
            "predicted set size {k_h} must be below the table capacity {m}"
        )));
    }
    let capacity = m - k_h;
    if k_h + capacity >= d {
        return Err(Error::InvalidArgument(format!(
            "domain {d} too small for k_h={k_h}, inner capacity {capacity}"
        )));
    }
    let truth = zipf_frequencies(d, n);
    let mut items = Vec::with_capacity(n as usize);
    for i in 0..k_h {
        items.extend(std::iter::repeat_n(i as u64 + 1, truth[i] as usize));
    }

    let mut sim = MisraGries::with_capacity(capacity).expect("capacity ≥ 1");
    let mut pool: BTreeMap<ElementId, u64> = (k_h..d)
        .filter(|&i| truth[i] > 0)
        .map(|i| (i as u64 + 1, truth[i]))
        .collect();

    let mut tail_items = Vec::new();
    play_eviction_game(&mut sim, &mut pool, &mut tail_items);

    let mut leftovers: Vec<ElementId> = Vec::new();
    for (&id, &copies) in &pool {
        leftovers.extend(std::iter::repeat_n(id, copies as usize));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    leftovers.shuffle(&mut rng);
    for &it in &leftovers {
        sim.update(it);
    }
    tail_items.extend(leftovers);
    items.extend(tail_items);

    // Certificate: the band right above the inner table's reach must contain
    // at least `capacity` elements whose estimate the inner table zeroed.
    #[cfg(debug_assertions)]
    if k_h + 2 * capacity <= d {
        let zeroed = ((k_h + capacity)..(k_h + 2 * capacity))
            .filter(|&i| sim.estimate(i as u64 + 1) == 0)
            .count();
        debug_assert!(
            zeroed >= capacity,
            "only {zeroed} of the band estimate zero, expected ≥ {capacity}"
        );
    }

    Ok(StreamInstance::from_parts(items, truth, d))
}

/// The eviction game: repeatedly emit the smallest pool element that the
/// table does not currently hold, until every remaining pool element is
/// stored. Consumed copies are appended to `items` and fed to `sim`.
fn play_eviction_game(
    sim: &mut MisraGries,
    pool: &mut BTreeMap<ElementId, u64>,
    items: &mut Vec<ElementId>,
) {
    loop {
        let pick = pool.keys().copied().find(|&id| !sim.contains(id));
        let Some(id) = pick else { break };
        let copies = pool.get_mut(&id).expect("key comes from the pool");
        *copies -= 1;
        if *copies == 0 {
            pool.remove(&id);
        }
        sim.update(id);
        items.push(id);
    }
}

/// A sequence of matrices sharing their top-`k_shared` right singular
/// subspace and spectrum, with per-instance tail subspaces perturbed by
/// `drift` (0 reproduces the first instance exactly).
pub fn matrix_sequence(
    count: usize,
    d: usize,
    n: usize,
    k_shared: usize,
    drift: f64,
    seed: u64,
) -> Result<Vec<MatrixInstance>> {
    if k_shared >= d {
        return Err(Error::InvalidArgument(format!(
            "shared rank {k_shared} must be below the dimension {d}"
        )));
    }
    if n < d {
        return Err(Error::InvalidArgument(format!(
            "need at least as many rows as columns, got n={n}, d={d}"
        )));
    }
    if !(drift.is_finite() && drift >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "drift must be finite and non-negative, got {drift}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = n as f64 / harmonic(d);
    let spectrum: Vec<f64> = (1..=d).map(|i| z / i as f64).collect();

    let v0 = random_orthonormal(d, d, &mut rng);
    let shared = submatrix_cols(&v0, 0, k_shared);
    let tail0 = submatrix_cols(&v0, k_shared, d);
    let u0_raw = gaussian_matrix(n, d, &mut rng);

    let mut out = Vec::with_capacity(count);
    for j in 0..count {
        let (u, v) = if j == 0 || drift == 0.0 {
            (orthonormalize(&u0_raw)?, v0.clone())
        } else {
            let mut inst_rng = ChaCha8Rng::seed_from_u64(seed ^ mix_instance(j as u64));
            // Perturb the tail inside the complement of the shared block so
            // the shared subspace stays exactly on top.
            let g = gaussian_matrix(d, d - k_shared, &mut inst_rng);
            let mut perturbed = DenseMatrix::zeros(d, d - k_shared);
            for r in 0..d {
                for c in 0..d - k_shared {
                    perturbed.set(r, c, tail0.get(r, c) + drift * g.get(r, c));
                }
            }
            let stacked = hstack(&shared, &perturbed);
            let q = orthonormalize(&stacked)?;
            let tail = submatrix_cols(&q, k_shared, d);

            let gu = gaussian_matrix(n, d, &mut inst_rng);
            let mut pu = DenseMatrix::zeros(n, d);
            for r in 0..n {
                for c in 0..d {
                    pu.set(r, c, u0_raw.get(r, c) + drift * gu.get(r, c));
                }
            }
            (orthonormalize(&pu)?, hstack(&shared, &tail))
        };
        let a = compose_svd(&u, &spectrum, &v);
        out.push(MatrixInstance {
            a,
            spectrum: spectrum.clone(),
            v,
        });
    }
    Ok(out)
}

fn mix_instance(j: u64) -> u64 {
    j.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(0x1234_5678)
}

fn submatrix_cols(m: &DenseMatrix, from: usize, to: usize) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(m.rows(), to - from);
    for i in 0..m.rows() {
        for j in from..to {
            out.set(i, j - from, m.get(i, j));
        }
    }
    out
}

fn hstack(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    debug_assert_eq!(a.rows(), b.rows());
    let mut out = DenseMatrix::zeros(a.rows(), a.cols() + b.cols());
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            out.set(i, j, a.get(i, j));
        }
        for j in 0..b.cols() {
            out.set(i, a.cols() + j, b.get(i, j));
        }
    }
    out
}
