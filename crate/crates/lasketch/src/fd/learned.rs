//! Frequent Directions with a predicted subspace.
//!
//! Each incoming row is split into its projection onto the predicted span
//! and the orthogonal complement. The complement goes to an inner
//! [`FrequentDirections`] sketch of capacity `m − 2k_h` (the other `2k_h`
//! slots pay for storing the predictions and the projected side). The
//! projected side is tracked exactly: the `k_h × k_h` covariance
//! `C = Σ (Pᵀaᵢ)(Pᵀaᵢ)ᵀ` is maintained in prediction coordinates and
//! materialized as `C^{1/2}·Pᵀ` on return, which loses nothing on the
//! predicted span. A literal inner sketch for the projected side (which can
//! shrink even on rank-`k_h` input) is available behind
//! [`ProjectedSide::LiteralSketch`] for comparison.

use crate::error::{Error, Result};
use crate::fd::FrequentDirections;
use crate::linalg::{dot, sym_sqrt, DenseMatrix};
use crate::oracle::DirectionOracle;

/// How the projected (predicted-subspace) side is maintained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectedSide {
    /// Exact covariance tracker in prediction coordinates (default).
    CovarianceTracker,
    /// A plain sketch of capacity `k_h` with threshold `k_h/2`.
    LiteralSketch,
}

#[derive(Debug, Clone)]
enum Projected {
    Tracker {
        /// Row-major symmetric `k_h × k_h` accumulator.
        cov: Vec<f64>,
    },
    Literal(FrequentDirections),
}

/// Learned matrix sketch: predictions plus an inner sketch for the
/// complement, `m` row slots in total.
#[derive(Debug, Clone)]
pub struct LearnedFrequentDirections {
    oracle: DirectionOracle,
    projected: Projected,
    perp: FrequentDirections,
    d: usize,
    k_h: usize,
    m: usize,
    /// Scratch for `Pᵀ·row`.
    coeffs: Vec<f64>,
}

/// Rows whose complement norm is below this fraction of the row norm are
/// treated as lying inside the predicted span.
const PERP_REL_TOL: f64 = 1e-12;

impl LearnedFrequentDirections {
    pub fn new(oracle: DirectionOracle, m: usize, side: ProjectedSide) -> Result<Self> {
        let d = oracle.dim();
        let k_h = oracle.k();
        if k_h == 0 {
            return Err(Error::InvalidArgument(
                "prediction must contain at least one direction".into(),
            ));
        }
        if 2 * k_h >= m {
            return Err(Error::InvalidArgument(format!(
                "capacity m={m} leaves no room for the complement sketch with k_h={k_h}"
            )));
        }
        let perp_capacity = m - 2 * k_h;
        let perp_tau = (perp_capacity / 2).max(1);
        let projected = match side {
            ProjectedSide::CovarianceTracker => Projected::Tracker {
                cov: vec![0.0; k_h * k_h],
            },
            ProjectedSide::LiteralSketch => {
                Projected::Literal(FrequentDirections::new(k_h, (k_h / 2).max(1), d)?)
            }
        };
        Ok(Self {
            oracle,
            projected,
            perp: FrequentDirections::new(perp_capacity, perp_tau, d)?,
            d,
            k_h,
            m,
            coeffs: vec![0.0; k_h],
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
        let p = self.oracle.matrix();
        for j in 0..self.k_h {
            let mut acc = 0.0;
            for i in 0..self.d {
                acc += p.get(i, j) * row[i];
            }
            self.coeffs[j] = acc;
        }
        // Complement of the projection.
        let mut perp_row = row.to_vec();
        for j in 0..self.k_h {
            let c = self.coeffs[j];
            if c == 0.0 {
                continue;
            }
            for i in 0..self.d {
                perp_row[i] -= c * p.get(i, j);
            }
        }

        match &mut self.projected {
            Projected::Tracker { cov } => {
                for a in 0..self.k_h {
                    let ca = self.coeffs[a];
                    if ca == 0.0 {
                        continue;
                    }
                    for b in 0..self.k_h {
                        cov[a * self.k_h + b] += ca * self.coeffs[b];
                    }
                }
            }
            Projected::Literal(fd) => {
                let mut down = vec![0.0; self.d];
                for j in 0..self.k_h {
                    let c = self.coeffs[j];
                    if c == 0.0 {
                        continue;
                    }
                    for i in 0..self.d {
                        down[i] += c * p.get(i, j);
                    }
                }
                fd.update(&down)?;
            }
        }

        let row_sq = dot(row, row);
        let perp_sq = dot(&perp_row, &perp_row);
        if perp_sq > PERP_REL_TOL * PERP_REL_TOL * row_sq {
            self.perp.update(&perp_row)?;
        }
        Ok(())
    }

    /// Sketch rows for the projected side: `C^{1/2}·Pᵀ` for the tracker,
    /// the inner sketch's buffer for the literal variant. Zero rows are
    /// trimmed.
    fn projected_rows(&self) -> Result<DenseMatrix> {
        match &self.projected {
            Projected::Tracker { cov } => {
                let c = DenseMatrix::new(self.k_h, self.k_h, cov.clone())?;
                let root = sym_sqrt(&c)?;
                let p = self.oracle.matrix();
                let mut out = DenseMatrix::zeros(self.k_h, self.d);
                for i in 0..self.k_h {
                    for l in 0..self.k_h {
                        let r = root.get(i, l);
                        if r == 0.0 {
                            continue;
                        }
                        for j in 0..self.d {
                            let v = out.get(i, j) + r * p.get(j, l);
                            out.set(i, j, v);
                        }
                    }
                }
                // Trim all-zero rows (empty or rank-deficient tracker).
                let kept: Vec<Vec<f64>> = (0..self.k_h)
                    .filter(|&i| out.row(i).iter().any(|v| *v != 0.0))
                    .map(|i| out.row(i).to_vec())
                    .collect();
                DenseMatrix::from_rows(&kept)
            }
            Projected::Literal(fd) => Ok(fd.result()),
        }
    }

    /// Stacked sketch: projected-side rows on top of the complement rows.
    pub fn result(&self) -> Result<DenseMatrix> {
        let down = self.projected_rows()?;
        let perp = self.perp.result();
        down.vstack(&perp)
    }

    /// Direction-frequency estimate `‖B↓x‖² + ‖B⊥x‖²`.
    pub fn query(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch(format!(
                "query vector has {} entries, sketch dimension is {}",
                x.len(),
                self.d
            )));
        }
        let down = match &self.projected {
            Projected::Tracker { cov } => {
                // xᵀ P C Pᵀ x in prediction coordinates.
                let p = self.oracle.matrix();
                let mut px = vec![0.0; self.k_h];
                for (j, pj) in px.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for i in 0..self.d {
                        acc += p.get(i, j) * x[i];
                    }
                    *pj = acc;
                }
                let mut acc = 0.0;
                for a in 0..self.k_h {
                    for b in 0..self.k_h {
                        acc += px[a] * cov[a * self.k_h + b] * px[b];
                    }
                }
                acc.max(0.0)
            }
            Projected::Literal(fd) => fd.query(x)?,
        };
        Ok(down + self.perp.query(x)?)
    }

    pub fn oracle(&self) -> &DirectionOracle {
        &self.oracle
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn k_h(&self) -> usize {
        self.k_h
    }

    pub fn capacity(&self) -> usize {
        self.m
    }

    pub fn perp(&self) -> &FrequentDirections {
        &self.perp
    }

    /// Words under the budget convention: all `m` row slots (predictions,
    /// projected side, complement) are charged to the sketch.
    pub fn space_words_budget(&self) -> u64 {
        (self.m * self.d) as u64
    }

    /// Words when the prediction matrix is treated as an external input that
    /// the sketch does not pay for.
    pub fn space_words_unbilled_oracle(&self) -> u64 {
        ((self.m - self.k_h) * self.d) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::zipf_matrix;
    use crate::eval::weighted_error_matrix;
    use crate::fd::test_util::{random_rows, to_matrix};
    use crate::fd::FrequentDirections;
    use crate::linalg::{complete_basis, gram_gap_spectral_norm, svd};
    use crate::oracle::DirectionOracle;

    fn axis_oracle(d: usize, k: usize) -> DirectionOracle {
        let mut p = DenseMatrix::zeros(d, k);
        for j in 0..k {
            p.set(j, j, 1.0);
        }
        DirectionOracle::from_matrix(p).unwrap()
    }

    #[test]
    fn rejects_degenerate_capacity() {
        let oracle = axis_oracle(6, 2);
        assert!(LearnedFrequentDirections::new(oracle.clone(), 4, ProjectedSide::CovarianceTracker).is_err());
        assert!(LearnedFrequentDirections::new(oracle, 5, ProjectedSide::CovarianceTracker).is_ok());
    }

    #[test]
    fn rows_inside_predicted_span_leave_complement_empty() {
        let d = 8;
        let oracle = axis_oracle(d, 2);
        let mut lfd =
            LearnedFrequentDirections::new(oracle, 8, ProjectedSide::CovarianceTracker).unwrap();
        let rows = vec![
            vec![1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            vec![-3.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            vec![0.25, 1.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        ];
        for r in &rows {
            lfd.update(r).unwrap();
        }
        assert_eq!(lfd.perp().fill(), 0);
        // Estimates along the span are exact.
        let a = to_matrix(&rows);
        for x in [[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]] {
            let mut q = vec![0.0; d];
            q[0] = x[0];
            q[1] = x[1];
            let truth = {
                let av = a.mul_vec(&q).unwrap();
                dot(&av, &av)
            };
            let est = lfd.query(&q).unwrap();
            assert!((est - truth).abs() <= 1e-10 * truth.max(1.0));
        }
    }

    #[test]
    fn orthogonal_rows_behave_like_plain_sketch() {
        // Rows supported entirely outside the predicted span route to the
        // complement sketch, which must then match a standalone sketch of
        // the same shape bit for bit.
        let d = 10;
        let k_h = 2;
        let m = 10;
        let oracle = axis_oracle(d, k_h);
        let mut lfd =
            LearnedFrequentDirections::new(oracle, m, ProjectedSide::CovarianceTracker).unwrap();
        let mut plain = FrequentDirections::new(m - 2 * k_h, (m - 2 * k_h) / 2, d).unwrap();
        let rows = random_rows(60, d - k_h, 9);
        for r in &rows {
            let mut full = vec![0.0; d];
            full[k_h..].copy_from_slice(r);
            lfd.update(&full).unwrap();
            plain.update(&full).unwrap();
        }
        assert_eq!(lfd.perp().result().data(), plain.result().data());
        let down = lfd.projected_rows().unwrap();
        assert_eq!(down.rows(), 0);
    }

    #[test]
    fn result_shapes() {
        let oracle = axis_oracle(6, 2);
        let lfd =
            LearnedFrequentDirections::new(oracle.clone(), 6, ProjectedSide::CovarianceTracker)
                .unwrap();
        assert_eq!(lfd.result().unwrap().rows(), 0);

        let mut lfd =
            LearnedFrequentDirections::new(oracle, 6, ProjectedSide::CovarianceTracker).unwrap();
        lfd.update(&[3.0, 0.0, 0.0, 0.0, 4.0, 0.0]).unwrap();
        let b = lfd.result().unwrap();
        // One projected row plus one complement row, jointly carrying the
        // input's mass.
        assert_eq!(b.rows(), 2);
        assert!((b.frob_sq() - 25.0).abs() < 1e-10);
    }

    #[test]
    fn stacked_result_matches_query_decomposition() {
        let d = 12;
        let inst = zipf_matrix(d, 80, 17).unwrap();
        let oracle = DirectionOracle::top_directions(&inst.a, 3).unwrap();
        let mut lfd =
            LearnedFrequentDirections::new(oracle, 10, ProjectedSide::CovarianceTracker).unwrap();
        for i in 0..inst.a.rows() {
            lfd.update(inst.a.row(i)).unwrap();
        }
        let b = lfd.result().unwrap();
        for s in 0..5u64 {
            let mut x = vec![0.0; d];
            for (i, v) in x.iter_mut().enumerate() {
                *v = ((i as f64 + 1.3) * (s as f64 + 0.7)).sin();
            }
            let via_query = lfd.query(&x).unwrap();
            let via_stack = crate::fd::direction_frequency(&b, &x).unwrap();
            assert!(
                (via_query - via_stack).abs() <= 1e-8 * via_query.max(1.0),
                "query {via_query} vs stacked {via_stack}"
            );
        }
    }

    #[test]
    fn perfect_predictions_zero_out_top_directions() {
        let d = 24;
        let k_h = 6;
        let inst = zipf_matrix(d, 120, 23).unwrap();
        let oracle = DirectionOracle::top_directions(&inst.a, k_h).unwrap();
        let mut lfd =
            LearnedFrequentDirections::new(oracle, 20, ProjectedSide::CovarianceTracker).unwrap();
        for i in 0..inst.a.rows() {
            lfd.update(inst.a.row(i)).unwrap();
        }
        let b = lfd.result().unwrap();
        let dec = svd(&inst.a).unwrap();
        let tol = 1e-8 * inst.a.frob_sq();
        for j in 0..d {
            let v: Vec<f64> = (0..d).map(|i| dec.vt.get(j, i)).collect();
            let truth = dec.singular_values[j] * dec.singular_values[j];
            let est = crate::fd::direction_frequency(&b, &v).unwrap();
            let gap = truth - est;
            if j < k_h {
                assert!(gap.abs() <= tol, "direction {j}: gap {gap}");
            } else {
                assert!(gap >= -tol, "direction {j} overestimated: {gap}");
                assert!(gap <= truth + tol, "direction {j}: gap {gap} above σ²");
            }
        }
    }

    #[test]
    fn beats_plain_sketch_with_perfect_predictions() {
        let d = 64;
        let m = 24;
        let k_h = 8;
        let inst = zipf_matrix(d, 256, 29).unwrap();
        let oracle = DirectionOracle::top_directions(&inst.a, k_h).unwrap();
        let mut lfd =
            LearnedFrequentDirections::new(oracle, m, ProjectedSide::CovarianceTracker).unwrap();
        let mut plain = FrequentDirections::new(m, m / 2, d).unwrap();
        for i in 0..inst.a.rows() {
            lfd.update(inst.a.row(i)).unwrap();
            plain.update(inst.a.row(i)).unwrap();
        }
        let learned_err = weighted_error_matrix(&inst.a, &lfd.result().unwrap()).unwrap();
        let plain_err = weighted_error_matrix(&inst.a, &plain.result()).unwrap();
        assert!(
            learned_err <= plain_err,
            "learned {learned_err} vs plain {plain_err}"
        );
    }

    #[test]
    fn literal_projected_side_can_shrink_where_tracker_cannot() {
        // On input confined to the predicted span the tracker is exact while
        // the literal variant compacts and loses mass.
        let d = 6;
        let k_h = 2;
        let oracle = axis_oracle(d, k_h);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let a = 1.0 + (i % 5) as f64;
                let b = 2.0 - (i % 3) as f64;
                vec![a, b, 0.0, 0.0, 0.0, 0.0]
            })
            .collect();
        let a = to_matrix(&rows);

        let mut tracked =
            LearnedFrequentDirections::new(oracle.clone(), 6, ProjectedSide::CovarianceTracker)
                .unwrap();
        let mut literal =
            LearnedFrequentDirections::new(oracle, 6, ProjectedSide::LiteralSketch).unwrap();
        for r in &rows {
            tracked.update(r).unwrap();
            literal.update(r).unwrap();
        }
        let tracked_gap = gram_gap_spectral_norm(&a, &tracked.result().unwrap()).unwrap();
        let literal_gap = gram_gap_spectral_norm(&a, &literal.result().unwrap()).unwrap();
        assert!(tracked_gap <= 1e-8 * a.frob_sq());
        assert!(literal_gap > tracked_gap);
    }

    #[test]
    fn cross_term_decomposition_identity() {
        // For any x: xᵀAᵀAx = xᵀA↓ᵀA↓x + xᵀA⊥ᵀA⊥x
        //   + 2·Σ_i σ_i²·⟨Pᵀv_i, Pᵀx⟩·⟨P̄ᵀv_i, P̄ᵀx⟩.
        let d = 16;
        let inst = zipf_matrix(d, 64, 31).unwrap();
        let a = &inst.a;
        let p = DirectionOracle::top_directions(
            &zipf_matrix(d, 64, 32).unwrap().a, // unrelated predictions
            5,
        )
        .unwrap();
        let pbar = complete_basis(p.matrix()).unwrap();
        let down = crate::linalg::project_rows(a, p.matrix()).unwrap();
        let perp = a.sub(&down).unwrap();
        let dec = svd(a).unwrap();

        let mut x = vec![0.0; d];
        for (i, v) in x.iter_mut().enumerate() {
            *v = ((i * i) as f64 + 0.5).cos();
        }
        let quad = |m: &DenseMatrix, x: &[f64]| {
            let mx = m.mul_vec(x).unwrap();
            dot(&mx, &mx)
        };
        let lhs = quad(a, &x);
        let mut cross = 0.0;
        let px: Vec<f64> = p.matrix().transpose().mul_vec(&x).unwrap();
        let pbx: Vec<f64> = pbar.transpose().mul_vec(&x).unwrap();
        for i in 0..d {
            let v: Vec<f64> = (0..d).map(|r| dec.vt.get(i, r)).collect();
            let pv = p.matrix().transpose().mul_vec(&v).unwrap();
            let pbv = pbar.transpose().mul_vec(&v).unwrap();
            let s2 = dec.singular_values[i] * dec.singular_values[i];
            cross += s2 * dot(&pv, &px) * dot(&pbv, &pbx);
        }
        let rhs = quad(&down, &x) + quad(&perp, &x) + 2.0 * cross;
        assert!(
            (lhs - rhs).abs() <= 1e-8 * a.frob_sq(),
            "lhs {lhs} vs rhs {rhs}"
        );
    }
}
