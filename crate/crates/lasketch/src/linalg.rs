//! Dense small-matrix numerics: SVD, orthonormalization, projections, Gram
//! products and symmetric eigensolves.
//!
//! Everything here is sized for the panels a streaming matrix sketch sees
//! (a few hundred rows, dimension up to a few hundred), so the kernels are
//! self-contained: a one-sided Jacobi SVD and a two-sided Jacobi eigensolver.
//! All arithmetic is in `f64` and all operations are pure functions.

use crate::error::{Error, Result};

/// Row-major dense matrix of 64-bit floats.
///
/// Construction validates that every entry is finite; the numeric kernels can
/// then assume NaN/Inf never appear mid-computation.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "expected {}x{}={} entries, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "entry at flat index {pos} is {}",
                data[pos]
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch(
                "rows have differing lengths".into(),
            ));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self.get(i, k);
                if aik == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += aik * s;
                }
            }
        }
        Ok(out)
    }

    /// Gram product `AᵀA`, filled symmetrically.
    pub fn gram(&self) -> Self {
        let mut g = Self::zeros(self.cols, self.cols);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..self.cols {
                let ri = row[i];
                if ri == 0.0 {
                    continue;
                }
                for j in i..self.cols {
                    g.data[i * self.cols + j] += ri * row[j];
                }
            }
        }
        for i in 0..self.cols {
            for j in 0..i {
                g.data[i * self.cols + j] = g.data[j * self.cols + i];
            }
        }
        g
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "cannot subtract {}x{} from {}x{}",
                other.rows, other.cols, self.rows, self.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Matrix-vector product `A·x`.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "vector length {} does not match {} columns",
                x.len(),
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|i| dot(self.row(i), x))
            .collect())
    }

    /// Squared Frobenius norm.
    pub fn frob_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Stacks `self` on top of `other`.
    pub fn vstack(&self, other: &Self) -> Result<Self> {
        if self.rows > 0 && other.rows > 0 && self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "cannot stack {} columns on {} columns",
                other.cols, self.cols
            )));
        }
        let cols = if self.rows > 0 { self.cols } else { other.cols };
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Self {
            rows: self.rows + other.rows,
            cols,
            data,
        })
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Thin singular value decomposition `A = U·diag(σ)·Vᵀ`.
///
/// `u` is `rows × r`, `vt` is `r × cols` with `r = min(rows, cols)`;
/// `singular_values` are non-negative and non-increasing. Rank deficiency
/// shows up as trailing zero singular values.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub vt: DenseMatrix,
}

impl SvdResult {
    /// `‖A − U·diag(σ)·Vᵀ‖_F` for the given `a`.
    pub fn reconstruction_error(&self, a: &DenseMatrix) -> f64 {
        let r = self.singular_values.len();
        let mut err = 0.0f64;
        for i in 0..a.rows() {
            for j in 0..a.cols() {
                let mut v = 0.0;
                for k in 0..r {
                    v += self.u.get(i, k) * self.singular_values[k] * self.vt.get(k, j);
                }
                let d = a.get(i, j) - v;
                err += d * d;
            }
        }
        err.sqrt()
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// One-sided Jacobi SVD.
///
/// Right rotations orthogonalize the columns of the working matrix; at
/// convergence the column norms are the singular values. Accurate for the
/// small dense panels this library works with. Singular vectors follow the
/// convention that the largest-magnitude component of each right vector is
/// positive, so decompositions are reproducible up to exact ties.
pub fn svd(a: &DenseMatrix) -> Result<SvdResult> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::InvalidArgument("svd of an empty matrix".into()));
    }
    if let Some(pos) = a.data().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "svd input entry at flat index {pos}"
        )));
    }
    if a.rows() >= a.cols() {
        let (u, s, v) = jacobi_tall(a);
        let mut out = SvdResult {
            u,
            singular_values: s,
            vt: v.transpose(),
        };
        fix_signs(&mut out);
        Ok(out)
    } else {
        // Decompose Aᵀ = U'ΣV'ᵀ, so A = V'ΣU'ᵀ.
        let (u2, s, v2) = jacobi_tall(&a.transpose());
        let mut out = SvdResult {
            u: v2,
            singular_values: s,
            vt: u2.transpose(),
        };
        fix_signs(&mut out);
        Ok(out)
    }
}

/// Jacobi on a tall (rows ≥ cols) matrix; returns (U, σ, V) with V holding
/// right singular vectors as columns.
fn jacobi_tall(a: &DenseMatrix) -> (DenseMatrix, Vec<f64>, DenseMatrix) {
    let m = a.rows();
    let k = a.cols();
    // Column-major working copy so rotations touch contiguous memory.
    let mut w: Vec<Vec<f64>> = (0..k).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let mut e = vec![0.0; k];
            e[j] = 1.0;
            e
        })
        .collect();

    let eps = 1e-15;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..k {
            for q in (p + 1)..k {
                let (wp, wq) = pair_mut(&mut w, p, q);
                let alpha = dot(wp, wp);
                let beta = dot(wq, wq);
                let gamma = dot(wp, wq);
                if gamma.abs() <= eps * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let x = wp[i];
                    let y = wq[i];
                    wp[i] = c * x - s * y;
                    wq[i] = s * x + c * y;
                }
                let (vp, vq) = pair_mut(&mut v, p, q);
                for i in 0..k {
                    let x = vp[i];
                    let y = vq[i];
                    vp[i] = c * x - s * y;
                    vq[i] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    // Singular values are the column norms; sort non-increasing.
    let mut order: Vec<usize> = (0..k).collect();
    let norms: Vec<f64> = w.iter().map(|c| dot(c, c).sqrt()).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());

    let mut u = DenseMatrix::zeros(m, k);
    let mut vout = DenseMatrix::zeros(k, k);
    let mut sigma = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let s = norms[src];
        sigma.push(s);
        if s > 0.0 {
            for i in 0..m {
                u.set(i, dst, w[src][i] / s);
            }
        }
        for i in 0..k {
            vout.set(i, dst, v[src][i]);
        }
    }
    // Exactly-zero columns get an orthonormal completion so U stays
    // column-orthonormal even for rank-deficient input. Columns are filled
    // left to right, so orthogonalizing against every other filled column
    // (nonzero σ plus previously completed ones) is enough.
    for dst in 0..k {
        if sigma[dst] > 0.0 {
            continue;
        }
        'candidates: for cand in 0..m {
            let mut col = vec![0.0; m];
            col[cand] = 1.0;
            for j in 0..k {
                if j == dst || (sigma[j] == 0.0 && j > dst) {
                    continue;
                }
                let uj = u.column(j);
                let c = dot(&col, &uj);
                for i in 0..m {
                    col[i] -= c * uj[i];
                }
            }
            let nrm = dot(&col, &col).sqrt();
            if nrm > 0.5 {
                for i in 0..m {
                    u.set(i, dst, col[i] / nrm);
                }
                break 'candidates;
            }
        }
    }
    (u, sigma, vout)
}

fn pair_mut(cols: &mut [Vec<f64>], p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(p < q);
    let (lo, hi) = cols.split_at_mut(q);
    (&mut lo[p], &mut hi[0])
}

/// Flips singular-vector pairs so each right vector's largest-magnitude
/// component is positive.
fn fix_signs(out: &mut SvdResult) {
    let r = out.singular_values.len();
    for j in 0..r {
        let row = out.vt.row(j);
        let mut best = 0usize;
        for (i, v) in row.iter().enumerate() {
            if v.abs() > row[best].abs() {
                best = i;
            }
        }
        if out.vt.get(j, best) < 0.0 {
            for i in 0..out.vt.cols() {
                let v = out.vt.get(j, i);
                out.vt.set(j, i, -v);
            }
            for i in 0..out.u.rows() {
                let v = out.u.get(i, j);
                out.u.set(i, j, -v);
            }
        }
    }
}

/// Symmetric eigendecomposition via cyclic two-sided Jacobi.
///
/// Returns eigenvalues sorted non-increasing and the matching eigenvectors as
/// columns. Used as an independent route to cross-check the SVD and for
/// matrix square roots.
pub fn sym_eigen(s: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    if s.rows() != s.cols() {
        return Err(Error::DimensionMismatch(format!(
            "eigensolve needs a square matrix, got {}x{}",
            s.rows(),
            s.cols()
        )));
    }
    let n = s.rows();
    if n == 0 {
        return Ok((Vec::new(), DenseMatrix::zeros(0, 0)));
    }
    let mut a = s.clone();
    let mut q = DenseMatrix::identity(n);
    let scale = a.data().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tol = 1e-15 * scale.max(1.0);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0f64;
        for p in 0..n {
            for qq in (p + 1)..n {
                off = off.max(a.get(p, qq).abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let apq = a.get(p, r);
                if apq.abs() <= tol * 1e-2 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(r, r);
                let theta = 0.5 * (2.0 * apq).atan2(aqq - app);
                let (sn, cs) = theta.sin_cos();
                // A ← JᵀAJ on rows/cols p, r.
                for i in 0..n {
                    let aip = a.get(i, p);
                    let air = a.get(i, r);
                    a.set(i, p, cs * aip - sn * air);
                    a.set(i, r, sn * aip + cs * air);
                }
                for i in 0..n {
                    let api = a.get(p, i);
                    let ari = a.get(r, i);
                    a.set(p, i, cs * api - sn * ari);
                    a.set(r, i, sn * api + cs * ari);
                }
                for i in 0..n {
                    let qip = q.get(i, p);
                    let qir = q.get(i, r);
                    q.set(i, p, cs * qip - sn * qir);
                    q.set(i, r, sn * qip + cs * qir);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(j, j).partial_cmp(&a.get(i, i)).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vecs = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..n {
            vecs.set(i, dst, q.get(i, src));
        }
    }
    Ok((vals, vecs))
}

const ORTHO_TOL: f64 = 1e-10;

/// Orthonormalizes the columns of `v` by modified Gram-Schmidt with one
/// reorthogonalization pass; the span is preserved.
///
/// Rejects input whose columns are rank deficient beyond tolerance 1e-10.
pub fn orthonormalize(v: &DenseMatrix) -> Result<DenseMatrix> {
    if v.cols() > v.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} columns exceed ambient dimension {}",
            v.cols(),
            v.rows()
        )));
    }
    let d = v.rows();
    let k = v.cols();
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let mut col = v.column(j);
        let orig_norm = dot(&col, &col).sqrt();
        for _pass in 0..2 {
            for prev in &q {
                let c = dot(&col, prev);
                for i in 0..d {
                    col[i] -= c * prev[i];
                }
            }
        }
        let nrm = dot(&col, &col).sqrt();
        if nrm <= ORTHO_TOL * orig_norm.max(1.0) {
            return Err(Error::RankDeficient(format!(
                "column {j} lies in the span of the preceding columns"
            )));
        }
        for x in col.iter_mut() {
            *x /= nrm;
        }
        q.push(col);
    }
    let mut out = DenseMatrix::zeros(d, k);
    for (j, col) in q.iter().enumerate() {
        for i in 0..d {
            out.set(i, j, col[i]);
        }
    }
    Ok(out)
}

/// Extends the orthonormal columns of `p` to a full orthonormal basis and
/// returns the `d × (d−k)` complement block.
pub fn complete_basis(p: &DenseMatrix) -> Result<DenseMatrix> {
    let d = p.rows();
    let k = p.cols();
    let basis: Vec<Vec<f64>> = (0..k).map(|j| p.column(j)).collect();
    let mut extra: Vec<Vec<f64>> = Vec::with_capacity(d - k);
    for cand in 0..d {
        if k + extra.len() == d {
            break;
        }
        let mut col = vec![0.0; d];
        col[cand] = 1.0;
        for _pass in 0..2 {
            for prev in basis.iter().chain(extra.iter()) {
                let c = dot(&col, prev);
                for i in 0..d {
                    col[i] -= c * prev[i];
                }
            }
        }
        let nrm = dot(&col, &col).sqrt();
        if nrm > 1e-8 {
            for x in col.iter_mut() {
                *x /= nrm;
            }
            extra.push(col);
        }
    }
    if k + extra.len() != d {
        return Err(Error::RankDeficient(
            "could not complete the basis; input columns are not orthonormal".into(),
        ));
    }
    let mut out = DenseMatrix::zeros(d, d - k);
    for (j, col) in extra.iter().enumerate() {
        for i in 0..d {
            out.set(i, j, col[i]);
        }
    }
    Ok(out)
}

fn check_orthonormal_columns(p: &DenseMatrix, tol: f64) -> Result<()> {
    for i in 0..p.cols() {
        let ci = p.column(i);
        for j in i..p.cols() {
            let cj = p.column(j);
            let target = if i == j { 1.0 } else { 0.0 };
            if (dot(&ci, &cj) - target).abs() > tol {
                return Err(Error::InvalidArgument(format!(
                    "columns {i},{j} are not orthonormal within {tol:e}"
                )));
            }
        }
    }
    Ok(())
}

/// Projects every row of `a` onto the column span of `p`: returns `A·P·Pᵀ`.
///
/// The complement `A(I − PPᵀ)` is obtained by subtraction, and the two parts
/// sum back to `a` exactly.
pub fn project_rows(a: &DenseMatrix, p: &DenseMatrix) -> Result<DenseMatrix> {
    if p.rows() != a.cols() {
        return Err(Error::DimensionMismatch(format!(
            "projector has {} rows but matrix has {} columns",
            p.rows(),
            a.cols()
        )));
    }
    check_orthonormal_columns(p, 1e-8)?;
    let ap = a.matmul(p)?;
    ap.matmul(&p.transpose())
}

/// Smallest eigenvalue of `AᵀA − BᵀB`.
///
/// Non-negative output certifies that the sketch `b` underestimates every
/// direction frequency of `a`.
pub fn gram_psd_gap(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    if a.cols() != b.cols() && !b.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "gram gap between {} and {} columns",
            a.cols(),
            b.cols()
        )));
    }
    let ga = a.gram();
    let gap = if b.rows() == 0 {
        ga
    } else {
        ga.sub(&b.gram())?
    };
    let (vals, _) = sym_eigen(&gap)?;
    Ok(*vals.last().expect("non-empty spectrum"))
}

/// Spectral norm of `AᵀA − BᵀB` (largest absolute eigenvalue).
pub fn gram_gap_spectral_norm(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    if a.cols() != b.cols() && !b.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "gram gap between {} and {} columns",
            a.cols(),
            b.cols()
        )));
    }
    let ga = a.gram();
    let gap = if b.rows() == 0 {
        ga
    } else {
        ga.sub(&b.gram())?
    };
    let (vals, _) = sym_eigen(&gap)?;
    Ok(vals
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs())))
}

/// Principal angles (radians, ascending) between the column spans of two
/// orthonormal matrices, via the SVD of `PᵀQ`.
pub fn principal_angles(p: &DenseMatrix, q: &DenseMatrix) -> Result<Vec<f64>> {
    if p.rows() != q.rows() {
        return Err(Error::DimensionMismatch(format!(
            "subspaces live in different dimensions: {} vs {}",
            p.rows(),
            q.rows()
        )));
    }
    let overlap = p.transpose().matmul(q)?;
    let dec = svd(&overlap)?;
    let mut angles: Vec<f64> = dec
        .singular_values
        .iter()
        .map(|s| s.clamp(-1.0, 1.0).acos())
        .collect();
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(angles)
}

/// Symmetric positive-semidefinite square root, with round-off negatives
/// clamped to zero.
pub fn sym_sqrt(c: &DenseMatrix) -> Result<DenseMatrix> {
    let (vals, vecs) = sym_eigen(c)?;
    let n = c.rows();
    let mut out = DenseMatrix::zeros(n, n);
    for k in 0..n {
        let lam = vals[k].max(0.0).sqrt();
        if lam == 0.0 {
            continue;
        }
        for i in 0..n {
            let vik = vecs.get(i, k) * lam;
            if vik == 0.0 {
                continue;
            }
            for j in 0..n {
                let v = out.get(i, j) + vik * vecs.get(j, k);
                out.set(i, j, v);
            }
        }
    }
    Ok(out)
}
