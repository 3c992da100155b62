//! Matrix-streaming sketches.
//!
//! [`FrequentDirections`] maintains an `ℓ × d` row buffer; whenever the
//! buffer fills, an SVD-and-shrink compaction subtracts the τ-th largest
//! squared singular value from the spectrum and rewrites the buffer with the
//! surviving directions. The resulting sketch `B` always satisfies
//! `BᵀB ⪯ AᵀA`, and the spectral error obeys
//! `‖AᵀA − BᵀB‖₂ ≤ min_k ‖A − [A]_k‖_F² / (τ − k)`.
//!
//! [`learned::LearnedFrequentDirections`] splits each row between a
//! predicted subspace and its complement; [`robust::RobustLfd`] runs the
//! learned and the plain sketch side by side and gates per-query between
//! them using a streaming residual estimate.

pub mod learned;
pub mod robust;

pub use learned::{LearnedFrequentDirections, ProjectedSide};
pub use robust::{
    ExactResidualEstimator, ResidualEstimator, RobustLfd, SketchResidualEstimator,
};

use crate::error::{Error, Result};
use crate::linalg::{dot, svd, DenseMatrix};

/// Streaming sketch of the row space of a matrix, `ℓ` row slots in
/// dimension `d`, shrink threshold `τ ≤ ℓ`.
#[derive(Debug, Clone)]
pub struct FrequentDirections {
    ell: usize,
    tau: usize,
    d: usize,
    /// Row-major `ℓ × d` buffer; rows `fill..ℓ` are zero.
    buf: Vec<f64>,
    fill: usize,
    compactions: u64,
}

impl FrequentDirections {
    pub fn new(ell: usize, tau: usize, d: usize) -> Result<Self> {
        if ell == 0 || d == 0 || tau == 0 || tau > ell {
            return Err(Error::InvalidArgument(format!(
                "need 1 ≤ τ ≤ ℓ and a positive dimension, got ℓ={ell}, τ={tau}, d={d}"
            )));
        }
        Ok(Self {
            ell,
            tau,
            d,
            buf: vec![0.0; ell * d],
            fill: 0,
            compactions: 0,
        })
    }

    pub fn update(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.d {
            return Err(Error::DimensionMismatch(format!(
                "row has {} entries, sketch dimension is {}",
                row.len(),
                self.d
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("stream row".into()));
        }
        self.buf[self.fill * self.d..(self.fill + 1) * self.d].copy_from_slice(row);
        self.fill += 1;
        if self.fill == self.ell {
            self.compact();
        }
        Ok(())
    }

    /// SVD-and-shrink: subtract the τ-th largest squared singular value from
    /// every squared singular value, clamp at zero, and rewrite the buffer
    /// as `Σ̄·Vᵀ`. Surviving rows are packed to the front so `fill` equals
    /// the nonzero-row count; at least `ℓ − τ + 1` slots come back free.
    fn compact(&mut self) {
        self.compactions += 1;
        let b = DenseMatrix::new(self.ell, self.d, self.buf.clone())
            .expect("buffer entries stay finite");
        let dec = svd(&b).expect("buffer is non-empty and finite");
        // Round-off tails of rank-deficient buffers must not survive as
        // noise rows; dropping them only shrinks the sketch further.
        let cutoff = 1e-12 * dec.singular_values[0];
        let delta = dec
            .singular_values
            .get(self.tau - 1)
            .map_or(0.0, |s| s * s);
        self.buf.fill(0.0);
        let mut fill = 0;
        for (j, s) in dec.singular_values.iter().enumerate() {
            let shrunk = s * s - delta;
            if shrunk <= 0.0 || *s <= cutoff {
                break; // singular values are sorted, the rest vanish too
            }
            let scale = shrunk.sqrt();
            let dst = &mut self.buf[fill * self.d..(fill + 1) * self.d];
            for (x, v) in dst.iter_mut().zip(dec.vt.row(j)) {
                *x = scale * v;
            }
            fill += 1;
        }
        self.fill = fill;
    }

    /// Current sketch with zero rows trimmed.
    pub fn result(&self) -> DenseMatrix {
        DenseMatrix::new(
            self.fill,
            self.d,
            self.buf[..self.fill * self.d].to_vec(),
        )
        .expect("buffer entries stay finite")
    }

    /// Direction-frequency estimate `‖Bx‖²` from the live buffer.
    pub fn query(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch(format!(
                "query vector has {} entries, sketch dimension is {}",
                x.len(),
                self.d
            )));
        }
        let mut acc = 0.0;
        for i in 0..self.fill {
            let v = dot(&self.buf[i * self.d..(i + 1) * self.d], x);
            acc += v * v;
        }
        Ok(acc)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn capacity(&self) -> usize {
        self.ell
    }

    pub fn threshold(&self) -> usize {
        self.tau
    }

    pub fn fill(&self) -> usize {
        self.fill
    }

    /// Number of SVD-and-shrink passes so far. Each compaction frees at
    /// least `ℓ − τ + 1` slots, so this grows at most one per
    /// `ℓ − τ + 1` updates and caps the update cost at
    /// `O(n·ℓ²·d / (ℓ − τ + 1))` overall.
    pub fn compactions(&self) -> u64 {
        self.compactions
    }

    /// Buffer footprint in words.
    pub fn space_words(&self) -> u64 {
        (self.ell * self.d) as u64
    }
}

/// Direction-frequency estimate `‖Bx‖²` for a materialized sketch.
pub fn direction_frequency(b: &DenseMatrix, x: &[f64]) -> Result<f64> {
    if b.rows() > 0 && x.len() != b.cols() {
        return Err(Error::DimensionMismatch(format!(
            "query vector has {} entries, sketch has {} columns",
            x.len(),
            b.cols()
        )));
    }
    let mut acc = 0.0;
    for i in 0..b.rows() {
        let v = dot(b.row(i), x);
        acc += v * v;
    }
    Ok(acc)
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    pub fn random_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect()
    }

    pub fn to_matrix(rows: &[Vec<f64>]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    /// `‖A − [A]_k‖_F²` for all k, from an exact decomposition of `a`.
    pub fn residual_tails(a: &DenseMatrix) -> Vec<f64> {
        let dec = svd(a).unwrap();
        let sq: Vec<f64> = dec.singular_values.iter().map(|s| s * s).collect();
        let total: f64 = sq.iter().sum();
        let mut tails = Vec::with_capacity(sq.len() + 1);
        let mut head = 0.0;
        tails.push(total);
        for s in &sq {
            head += s;
            tails.push((total - head).max(0.0));
        }
        tails
    }
}

#[cfg(test)]
mod tests {
    use super::test_util::*;
    use super::*;
    use crate::freq::MisraGries;
    use crate::linalg::{gram_gap_spectral_norm, gram_psd_gap};

    #[test]
    fn buffer_passthrough_before_first_compaction() {
        let mut fd = FrequentDirections::new(8, 4, 3).unwrap();
        let rows = random_rows(5, 3, 1);
        for r in &rows {
            fd.update(r).unwrap();
        }
        let b = fd.result();
        assert_eq!(b.rows(), 5);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(b.row(i), r.as_slice());
        }
        // Zero error while the buffer holds the raw rows.
        let a = to_matrix(&rows);
        assert!(gram_gap_spectral_norm(&a, &b).unwrap() <= 1e-10 * a.frob_sq().max(1.0));
    }

    #[test]
    fn low_rank_stream_is_sketched_exactly() {
        // Rows drawn from τ−1 fixed directions: the sketch never loses mass.
        let d = 12;
        let tau = 5;
        let dirs = random_rows(tau - 1, d, 2);
        let mut rows = Vec::new();
        let mut state = 1u64;
        for i in 0..200 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            let c = (state >> 33) as f64 / (1u64 << 31) as f64 - 0.5;
            let base = &dirs[i % (tau - 1)];
            rows.push(base.iter().map(|v| v * (1.0 + c)).collect::<Vec<_>>());
        }
        let mut fd = FrequentDirections::new(10, tau, d).unwrap();
        for r in &rows {
            fd.update(r).unwrap();
        }
        let a = to_matrix(&rows);
        let gap = gram_gap_spectral_norm(&a, &fd.result()).unwrap();
        assert!(gap <= 1e-8 * a.frob_sq(), "gap {gap}");
    }

    #[test]
    fn spectral_bound_holds_for_every_k() {
        let d = 32;
        let ell = 16;
        let tau = 8;
        let rows = random_rows(500, d, 3);
        let mut fd = FrequentDirections::new(ell, tau, d).unwrap();
        for r in &rows {
            fd.update(r).unwrap();
        }
        let a = to_matrix(&rows);
        let b = fd.result();
        let gap = gram_gap_spectral_norm(&a, &b).unwrap();
        let tails = residual_tails(&a);
        for k in 0..tau {
            let bound = tails[k] / (tau - k) as f64;
            assert!(gap <= bound + 1e-8 * a.frob_sq(), "k={k}: {gap} > {bound}");
        }
        // Underestimation in every direction.
        let min_eig = gram_psd_gap(&a, &b).unwrap();
        assert!(min_eig >= -1e-8 * a.frob_sq());
    }

    #[test]
    fn result_shapes() {
        let fd = FrequentDirections::new(4, 2, 3).unwrap();
        assert_eq!(fd.result().rows(), 0);

        let mut fd = FrequentDirections::new(4, 2, 3).unwrap();
        fd.update(&[1.0, 2.0, 3.0]).unwrap();
        let b = fd.result();
        assert_eq!(b.rows(), 1);
        assert_eq!(b.row(0), &[1.0, 2.0, 3.0]);

        // Right after a compaction at most τ−1 rows survive.
        let mut fd = FrequentDirections::new(4, 2, 3).unwrap();
        for r in random_rows(4, 3, 4) {
            fd.update(&r).unwrap();
        }
        assert!(fd.result().rows() <= 1);
    }

    #[test]
    fn update_rejects_bad_rows() {
        let mut fd = FrequentDirections::new(4, 2, 3).unwrap();
        assert!(fd.update(&[1.0, 2.0]).is_err());
        assert!(fd.update(&[1.0, 2.0, f64::NAN]).is_err());
    }

    #[test]
    fn query_matches_materialized_sketch() {
        let d = 10;
        let mut fd = FrequentDirections::new(6, 3, d).unwrap();
        for r in random_rows(40, d, 5) {
            fd.update(&r).unwrap();
        }
        let b = fd.result();
        let x: Vec<f64> = (0..d).map(|i| ((i + 1) as f64).sin()).collect();
        let via_sketch = fd.query(&x).unwrap();
        let via_matrix = direction_frequency(&b, &x).unwrap();
        assert!((via_sketch - via_matrix).abs() < 1e-10 * via_sketch.max(1.0));
    }

    #[test]
    fn query_bracketed_by_truth_and_bound() {
        let d = 16;
        let tau = 6;
        let rows = random_rows(200, d, 6);
        let a = to_matrix(&rows);
        let mut fd = FrequentDirections::new(12, tau, d).unwrap();
        for r in &rows {
            fd.update(r).unwrap();
        }
        let tails = residual_tails(&a);
        let bound = (0..tau)
            .map(|k| tails[k] / (tau - k) as f64)
            .fold(f64::INFINITY, f64::min);
        let mut x = vec![0.0; d];
        for (i, v) in x.iter_mut().enumerate() {
            *v = ((2 * i + 1) as f64).cos();
        }
        let nrm = dot(&x, &x).sqrt();
        for v in x.iter_mut() {
            *v /= nrm;
        }
        let truth = {
            let av = a.mul_vec(&x).unwrap();
            dot(&av, &av)
        };
        let est = fd.query(&x).unwrap();
        assert!(est <= truth + 1e-8 * a.frob_sq());
        assert!(est >= truth - bound - 1e-8 * a.frob_sq());
    }

    #[test]
    fn compaction_frequency_matches_the_update_cost_model() {
        // The amortized update cost is governed by how often the buffer
        // fills: at most one compaction per ℓ−τ+1 insertions, so halving τ
        // divides the SVD work ~ℓ/2 times over. A generous wall-clock cap
        // doubles as a smoke check that updates stay amortized.
        let d = 48;
        let n = 2_000;
        let rows = random_rows(n, d, 77);
        let mut counts = Vec::new();
        for tau_frac in [2usize, 1] {
            let ell = 24;
            let tau = ell / tau_frac;
            let mut fd = FrequentDirections::new(ell, tau, d).unwrap();
            let started = std::time::Instant::now();
            for r in &rows {
                fd.update(r).unwrap();
            }
            let elapsed = started.elapsed();
            let per_fill = ell - tau + 1;
            let cap = (n / per_fill + 1) as u64;
            assert!(
                fd.compactions() <= cap,
                "τ={tau}: {} compactions above the {cap} cap",
                fd.compactions()
            );
            assert!(
                elapsed < std::time::Duration::from_secs(20),
                "update loop took {elapsed:?}"
            );
            counts.push(fd.compactions());
        }
        // τ = ℓ/2 compacts far less often than τ = ℓ.
        assert!(counts[0] * 4 < counts[1], "{counts:?}");
    }

    #[test]
    fn basis_rows_reduce_to_misra_gries() {
        // Standard-basis rows make the sketch maintain per-element counts.
        // An m-bucket counter summary corresponds to a row buffer with one
        // extra slot for the arriving row; the estimates then agree at every
        // prefix of the stream, up to floating-point round-off.
        let d = 12;
        let m = 5;
        let mut rng_state = 99u64;
        let mut items = Vec::new();
        for _ in 0..300 {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(7);
            items.push((rng_state >> 40) % d as u64);
        }
        let mut fd = FrequentDirections::new(m + 1, m + 1, d).unwrap();
        let mut mg = MisraGries::with_capacity(m).unwrap();
        for (step, &it) in items.iter().enumerate() {
            let mut row = vec![0.0; d];
            row[it as usize] = 1.0;
            fd.update(&row).unwrap();
            mg.update(it + 1);
            if step % 37 == 0 || step + 1 == items.len() {
                for id in 0..d as u64 {
                    let mut e = vec![0.0; d];
                    e[id as usize] = 1.0;
                    let est_fd = fd.query(&e).unwrap().round() as u64;
                    let est_mg = mg.estimate(id + 1);
                    assert_eq!(est_fd, est_mg, "element {id} at step {step}");
                }
            }
        }
    }
}
