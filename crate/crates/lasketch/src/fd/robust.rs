//! Robust learned sketching: gate per-query between the learned sketch and
//! a prediction-free one.
//!
//! Bad predictions can make the stacked learned sketch overestimate
//! arbitrarily (in two dimensions, predicting both axes for the single row
//! `(1, 1)` yields the identity sketch, which reports 1 where the true value
//! is 0). The fix runs three sketches side by side: a plain sketch, the
//! learned sketch, and a residual estimator. A query `x` answers with the
//! learned value when the two sketches agree to within twice the scaled
//! residual, and falls back to the plain value otherwise, so the error is
//! bounded by the better of the two.

use crate::error::{Error, Result};
use crate::fd::{FrequentDirections, LearnedFrequentDirections, ProjectedSide};
use crate::linalg::{dot, svd, DenseMatrix};
use crate::oracle::DirectionOracle;

/// Streaming estimate `α₀` of the rank-`k` residual `‖A − [A]_k‖_F²`, with
/// the two-sided guarantee `residual ≤ α₀ ≤ 2·residual`.
pub trait ResidualEstimator {
    fn observe(&mut self, row: &[f64]) -> Result<()>;
    fn residual(&self) -> Result<f64>;
    fn k(&self) -> usize;
    fn space_words(&self) -> u64;
}

/// Default streaming estimator: a dedicated sketch of capacity `2k+1` plus
/// a running Frobenius total.
///
/// The estimate is `‖A‖_F² − Σ_{i≤k} σ_i(B)²`. The sketch never
/// overestimates singular values, so the estimate is at least the true
/// residual; the spectral error bound caps the head underestimate at
/// `k·residual/(k+1)`, so the estimate is below twice the residual.
#[derive(Debug, Clone)]
pub struct SketchResidualEstimator {
    fd: FrequentDirections,
    frob_sq: f64,
    k: usize,
}

impl SketchResidualEstimator {
    pub fn new(k: usize, d: usize) -> Result<Self> {
        if k >= d {
            return Err(Error::InvalidArgument(format!(
                "residual rank {k} must be below the dimension {d}"
            )));
        }
        let ell = 2 * k + 1;
        Ok(Self {
            fd: FrequentDirections::new(ell, ell, d)?,
            frob_sq: 0.0,
            k,
        })
    }
}

impl ResidualEstimator for SketchResidualEstimator {
    fn observe(&mut self, row: &[f64]) -> Result<()> {
        self.frob_sq += dot(row, row);
        self.fd.update(row)
    }

    fn residual(&self) -> Result<f64> {
        if self.k == 0 {
            return Ok(self.frob_sq);
        }
        let b = self.fd.result();
        if b.rows() == 0 {
            return Ok(self.frob_sq);
        }
        let dec = svd(&b)?;
        let head: f64 = dec
            .singular_values
            .iter()
            .take(self.k)
            .map(|s| s * s)
            .sum();
        Ok((self.frob_sq - head).max(0.0))
    }

    fn k(&self) -> usize {
        self.k
    }

    fn space_words(&self) -> u64 {
        self.fd.space_words() + 1
    }
}

/// Reference estimator that stores the full matrix and decomposes it
/// exactly. Only sensible for tests and cross-checks.
#[derive(Debug, Clone, Default)]
pub struct ExactResidualEstimator {
    rows: Vec<Vec<f64>>,
    k: usize,
}

impl ExactResidualEstimator {
    pub fn new(k: usize) -> Self {
        Self { rows: Vec::new(), k }
    }
}

impl ResidualEstimator for ExactResidualEstimator {
    fn observe(&mut self, row: &[f64]) -> Result<()> {
        self.rows.push(row.to_vec());
        Ok(())
    }

    fn residual(&self) -> Result<f64> {
        if self.rows.is_empty() {
            return Ok(0.0);
        }
        let a = DenseMatrix::from_rows(&self.rows)?;
        exact_residual(&a, self.k)
    }

    fn k(&self) -> usize {
        self.k
    }

    fn space_words(&self) -> u64 {
        self.rows.iter().map(|r| r.len() as u64).sum()
    }
}

/// Exact `‖A − [A]_k‖_F²` by full decomposition.
pub fn exact_residual(a: &DenseMatrix, k: usize) -> Result<f64> {
    let dec = svd(a)?;
    Ok(dec
        .singular_values
        .iter()
        .skip(k)
        .map(|s| s * s)
        .sum())
}

/// Streaming residual estimate for a materialized matrix, rows fed in order.
pub fn residual_estimate(a: &DenseMatrix, k: usize) -> Result<f64> {
    let mut est = SketchResidualEstimator::new(k, a.cols())?;
    for i in 0..a.rows() {
        est.observe(a.row(i))?;
    }
    est.residual()
}

/// The gated sketch: plain + learned + residual estimator.
pub struct RobustLfd {
    plain: FrequentDirections,
    learned: LearnedFrequentDirections,
    residual: Box<dyn ResidualEstimator + Send>,
    m: usize,
}

impl RobustLfd {
    /// Default configuration: plain sketch `(m, m/2)`, learned sketch with
    /// the same capacity, residual rank `k = m/2` (capped below the
    /// dimension, where the residual is identically zero anyway).
    pub fn new(oracle: DirectionOracle, m: usize, side: ProjectedSide) -> Result<Self> {
        let d = oracle.dim();
        let k = (m / 2).min(d.saturating_sub(1));
        let residual = Box::new(SketchResidualEstimator::new(k, d)?);
        Self::with_estimator(oracle, m, side, residual)
    }

    pub fn with_estimator(
        oracle: DirectionOracle,
        m: usize,
        side: ProjectedSide,
        residual: Box<dyn ResidualEstimator + Send>,
    ) -> Result<Self> {
        if residual.k() >= m {
            return Err(Error::InvalidArgument(format!(
                "residual rank {} must be below the capacity {m}",
                residual.k()
            )));
        }
        let d = oracle.dim();
        let plain = FrequentDirections::new(m, (m / 2).max(1), d)?;
        let learned = LearnedFrequentDirections::new(oracle, m, side)?;
        Ok(Self {
            plain,
            learned,
            residual,
            m,
        })
    }

    pub fn update(&mut self, row: &[f64]) -> Result<()> {
        self.plain.update(row)?;
        self.learned.update(row)?;
        self.residual.observe(row)
    }

    /// Scaled residual `α = α₀ / (m − k)` that gates the query branch.
    pub fn alpha(&self) -> Result<f64> {
        Ok(self.residual.residual()? / (self.m - self.residual.k()) as f64)
    }

    /// Direction-frequency estimate for a unit vector: the learned answer
    /// when it agrees with the plain sketch to within `2α`, the plain answer
    /// otherwise.
    pub fn query(&self, x: &[f64]) -> Result<f64> {
        let norm_sq = dot(x, x);
        if (norm_sq - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "query vector must be unit length, got ‖x‖² = {norm_sq}"
            )));
        }
        let alpha = self.alpha()?;
        let g_learned = self.learned.query(x)?;
        let g_plain = self.plain.query(x)?;
        if (g_learned - g_plain).abs() <= 2.0 * alpha {
            Ok(g_learned)
        } else {
            Ok(g_plain)
        }
    }

    /// Materialized parts `(B_plain, B_learned, α)` for bulk querying.
    pub fn parts(&self) -> Result<(DenseMatrix, DenseMatrix, f64)> {
        Ok((self.plain.result(), self.learned.result()?, self.alpha()?))
    }

    pub fn plain(&self) -> &FrequentDirections {
        &self.plain
    }

    pub fn learned(&self) -> &LearnedFrequentDirections {
        &self.learned
    }

    pub fn capacity(&self) -> usize {
        self.m
    }

    pub fn residual_rank(&self) -> usize {
        self.residual.k()
    }

    /// Total physical words across the three components.
    pub fn space_words_total(&self) -> u64 {
        self.plain.space_words()
            + self.learned.space_words_budget()
            + self.residual.space_words()
    }
}

/// Query answer from materialized parts, same gating as [`RobustLfd::query`].
pub fn query_parts(
    b_plain: &DenseMatrix,
    b_learned: &DenseMatrix,
    alpha: f64,
    x: &[f64],
) -> Result<f64> {
    let norm_sq = dot(x, x);
    if (norm_sq - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument(format!(
            "query vector must be unit length, got ‖x‖² = {norm_sq}"
        )));
    }
    let g_learned = crate::fd::direction_frequency(b_learned, x)?;
    let g_plain = crate::fd::direction_frequency(b_plain, x)?;
    if (g_learned - g_plain).abs() <= 2.0 * alpha {
        Ok(g_learned)
    } else {
        Ok(g_plain)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::zipf_matrix;
    use crate::fd::test_util::random_rows;
    use crate::linalg::orthonormalize;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn residual_estimator_zero_on_low_rank_input() {
        let d = 10;
        let k = 3;
        // Rows from a rank-k subspace.
        let basis = random_rows(k, d, 41);
        let mut est = SketchResidualEstimator::new(k, d).unwrap();
        for i in 0..60 {
            let mut row = vec![0.0; d];
            for (j, b) in basis.iter().enumerate() {
                let c = ((i * (j + 2)) as f64).sin();
                for (r, v) in row.iter_mut().zip(b) {
                    *r += c * v;
                }
            }
            est.observe(&row).unwrap();
        }
        let alpha0 = est.residual().unwrap();
        assert!(alpha0 <= 1e-8, "rank-k input gave residual {alpha0}");
    }

    #[test]
    fn residual_estimator_within_factor_two_of_known_spectrum() {
        // Diagonal rows realize an exact spectrum, so the tail sum is known.
        let d = 12;
        let k = 4;
        let sigmas: Vec<f64> = (1..=d).map(|i| 10.0 / i as f64).collect();
        let mut est = SketchResidualEstimator::new(k, d).unwrap();
        for (i, s) in sigmas.iter().enumerate() {
            let mut row = vec![0.0; d];
            row[i] = *s;
            est.observe(&row).unwrap();
        }
        let tail: f64 = sigmas.iter().skip(k).map(|s| s * s).sum();
        let alpha0 = est.residual().unwrap();
        assert!(alpha0 >= tail - 1e-9, "{alpha0} < {tail}");
        assert!(alpha0 <= 2.0 * tail + 1e-9, "{alpha0} > 2·{tail}");
    }

    #[test]
    fn residual_estimator_envelope_on_random_matrices() {
        for seed in [51u64, 52, 53, 54] {
            let d = 16;
            let k = 5;
            let rows = random_rows(120, d, seed);
            let a = DenseMatrix::from_rows(&rows).unwrap();
            let truth = exact_residual(&a, k).unwrap();
            let alpha0 = residual_estimate(&a, k).unwrap();
            assert!(alpha0 >= truth - 1e-8 * a.frob_sq(), "below truth");
            assert!(
                alpha0 <= 2.0 * truth + 1e-8 * a.frob_sq(),
                "{alpha0} > 2·{truth}"
            );
        }
    }

    #[test]
    fn two_dimensional_counterexample_falls_back() {
        // Single row (1, 1); predicting the first axis makes the stacked
        // sketch the 2×2 identity, which answers 1 on the antidiagonal unit
        // vector whose true value is 0. The gate must fall back to the plain
        // sketch, which is exact here.
        let oracle = DirectionOracle::from_matrix(
            DenseMatrix::new(2, 1, vec![1.0, 0.0]).unwrap(),
        )
        .unwrap();
        let mut robust = RobustLfd::new(oracle, 4, ProjectedSide::CovarianceTracker).unwrap();
        robust.update(&[1.0, 1.0]).unwrap();

        let inv = 1.0 / 2f64.sqrt();
        let x = [inv, -inv];
        // The learned sketch alone misreports.
        let learned_only = robust.learned().query(&x).unwrap();
        assert!((learned_only - 1.0).abs() < 1e-9);
        // The gated answer is exact: the rank-2 residual is 0, so any
        // disagreement forces the plain branch.
        let answer = robust.query(&x).unwrap();
        assert!(answer.abs() < 1e-9, "robust answer {answer}");
    }

    #[test]
    fn perfect_predictions_answer_exactly_on_top_directions() {
        let d = 20;
        let m = 12;
        let k_h = 4;
        let inst = zipf_matrix(d, 100, 61).unwrap();
        let oracle = DirectionOracle::top_directions(&inst.a, k_h).unwrap();
        let mut robust = RobustLfd::new(oracle, m, ProjectedSide::CovarianceTracker).unwrap();
        for i in 0..inst.a.rows() {
            robust.update(inst.a.row(i)).unwrap();
        }
        let dec = svd(&inst.a).unwrap();
        let tol = 1e-8 * inst.a.frob_sq();
        for j in 0..k_h {
            let v: Vec<f64> = (0..d).map(|i| dec.vt.get(j, i)).collect();
            let answer = robust.query(&v).unwrap();
            let learned = robust.learned().query(&v).unwrap();
            let truth = dec.singular_values[j] * dec.singular_values[j];
            assert_eq!(answer, learned, "gate left the learned branch");
            assert!((answer - truth).abs() <= tol, "direction {j}");
        }
    }

    #[test]
    fn adversarial_predictions_meet_the_min_guarantee() {
        let d = 32;
        let m = 16;
        let k_h = 4;
        let n = 160;
        let inst = zipf_matrix(d, n, 71).unwrap();
        // Predictions drawn independently of the data: a random subspace.
        let mut rng = ChaCha8Rng::seed_from_u64(72);
        let g: Vec<f64> = (0..d * k_h).map(|_| StandardNormal.sample(&mut rng)).collect();
        let p = orthonormalize(&DenseMatrix::new(d, k_h, g).unwrap()).unwrap();
        let oracle = DirectionOracle::from_matrix(p).unwrap();

        let mut robust = RobustLfd::new(oracle, m, ProjectedSide::CovarianceTracker).unwrap();
        for i in 0..inst.a.rows() {
            robust.update(inst.a.row(i)).unwrap();
        }
        let k = robust.residual_rank();
        let cap = 6.0 * exact_residual(&inst.a, k).unwrap() / (m - k) as f64;
        let (b1, b2, alpha) = robust.parts().unwrap();
        let tol = 1e-8 * inst.a.frob_sq();

        let mut rng = ChaCha8Rng::seed_from_u64(73);
        for _ in 0..1000 {
            let mut x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let nrm = dot(&x, &x).sqrt();
            for v in x.iter_mut() {
                *v /= nrm;
            }
            let truth = {
                let ax = inst.a.mul_vec(&x).unwrap();
                dot(&ax, &ax)
            };
            let answer = query_parts(&b1, &b2, alpha, &x).unwrap();
            let learned_err = (truth - crate::fd::direction_frequency(&b2, &x).unwrap()).abs();
            let bound = learned_err.min(cap) + tol;
            assert!(
                (truth - answer).abs() <= bound,
                "error {} above min({learned_err}, {cap})",
                (truth - answer).abs()
            );
        }
    }

    #[test]
    fn rejects_non_unit_queries() {
        let oracle = DirectionOracle::from_matrix(
            DenseMatrix::new(3, 1, vec![1.0, 0.0, 0.0]).unwrap(),
        )
        .unwrap();
        let mut robust = RobustLfd::new(oracle, 4, ProjectedSide::CovarianceTracker).unwrap();
        robust.update(&[1.0, 2.0, 3.0]).unwrap();
        assert!(robust.query(&[1.0, 1.0, 0.0]).is_err());
    }
}
