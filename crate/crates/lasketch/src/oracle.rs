//! Prediction sources for the learned sketches.
//!
//! A [`FrequencyOracle`] is an ordered set of element ids predicted to be the
//! heaviest; a [`DirectionOracle`] is a `d × k_h` orthonormal matrix of
//! predicted frequent directions. Constructors cover the perfect case (read
//! off the ground truth), partially correct predictions, Gaussian-noised
//! directions, and predictions derived from the first instance of a
//! sequence. All constructors are deterministic per seed.

use serde::{Deserialize, Serialize};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::datagen::StreamInstance;
use crate::error::{Error, Result};
use crate::linalg::{orthonormalize, svd, DenseMatrix};
use crate::ElementId;

/// Ordered set of predicted heavy elements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyOracle {
    version: u32,
    ids: Vec<ElementId>,
}

const ORACLE_VERSION: u32 = 1;

impl FrequencyOracle {
    pub fn from_ids(ids: Vec<ElementId>) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(ids.len());
        for &id in &ids {
            if !seen.insert(id) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate predicted element {id}"
                )));
            }
        }
        Ok(Self {
            version: ORACLE_VERSION,
            ids,
        })
    }

    /// The `k_h` most frequent elements of `truth`, ties broken toward the
    /// smaller id.
    pub fn top_of(truth: &[u64], k_h: usize) -> Result<Self> {
        if k_h > truth.len() {
            return Err(Error::InvalidArgument(format!(
                "asked for {k_h} heavy elements from a domain of {}",
                truth.len()
            )));
        }
        let mut order: Vec<usize> = (0..truth.len()).collect();
        order.sort_by(|&a, &b| truth[b].cmp(&truth[a]).then(a.cmp(&b)));
        let ids = order[..k_h].iter().map(|&i| i as u64 + 1).collect();
        Self::from_ids(ids)
    }

    /// Partially correct oracle: the true top `⌈c·k_h⌉` elements plus
    /// uniformly sampled distractors from the rest of the domain.
    pub fn partial(truth: &[u64], k_h: usize, c: f64, seed: u64) -> Result<Self> {
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "coverage fraction must lie in (0, 1], got {c}"
            )));
        }
        if k_h > truth.len() {
            return Err(Error::InvalidArgument(format!(
                "asked for {k_h} heavy elements from a domain of {}",
                truth.len()
            )));
        }
        let keep = ((c * k_h as f64).ceil() as usize).min(k_h);
        let top = Self::top_of(truth, keep)?;
        let mut ids = top.ids;
        let chosen: std::collections::HashSet<ElementId> = ids.iter().copied().collect();
        let mut candidates: Vec<ElementId> = (1..=truth.len() as u64)
            .filter(|id| !chosen.contains(id))
            .collect();
        let need = k_h - keep;
        if need > candidates.len() {
            return Err(Error::InvalidArgument(format!(
                "domain too small for {need} distractors"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Partial Fisher-Yates: the first `need` slots become the sample.
        for i in 0..need {
            let j = i + (rand::Rng::random_range(&mut rng, 0..(candidates.len() - i) as u64)
                as usize);
            candidates.swap(i, j);
        }
        ids.extend_from_slice(&candidates[..need]);
        Self::from_ids(ids)
    }

    /// Prediction derived from the first stream of a sequence.
    pub fn from_first_stream(first: &StreamInstance, k_h: usize) -> Result<Self> {
        Self::top_of(&first.truth, k_h)
    }

    pub fn ids(&self) -> &[ElementId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: ElementId) -> bool {
        self.ids.contains(&id)
    }
}

/// Orthonormal matrix of predicted frequent directions (columns).
#[derive(Debug, Clone)]
pub struct DirectionOracle {
    p: DenseMatrix,
}

impl DirectionOracle {
    const COLUMN_TOL: f64 = 1e-8;

    pub fn from_matrix(p: DenseMatrix) -> Result<Self> {
        for i in 0..p.cols() {
            let ci = p.column(i);
            for j in i..p.cols() {
                let cj = p.column(j);
                let target = if i == j { 1.0 } else { 0.0 };
                let dot: f64 = ci.iter().zip(&cj).map(|(a, b)| a * b).sum();
                if (dot - target).abs() > Self::COLUMN_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "prediction columns {i},{j} are not orthonormal"
                    )));
                }
            }
        }
        Ok(Self { p })
    }

    /// Top `k_h` right singular vectors of `a`; ties in a degenerate
    /// spectrum are resolved by the decomposition's deterministic ordering.
    pub fn top_directions(a: &DenseMatrix, k_h: usize) -> Result<Self> {
        if k_h > a.cols() {
            return Err(Error::InvalidArgument(format!(
                "asked for {k_h} directions in dimension {}",
                a.cols()
            )));
        }
        let dec = svd(a)?;
        let d = a.cols();
        let mut p = DenseMatrix::zeros(d, k_h);
        for j in 0..k_h {
            for i in 0..d {
                p.set(i, j, dec.vt.get(j, i));
            }
        }
        Ok(Self { p })
    }

    /// Prediction derived from the first matrix of a sequence.
    pub fn from_first_matrix(first: &DenseMatrix, k_h: usize) -> Result<Self> {
        Self::top_directions(first, k_h)
    }

    /// Adds i.i.d. Gaussian entries of standard deviation `sigma/√d` and
    /// re-orthonormalizes. `sigma = 0` returns the base prediction
    /// bit-exactly. A rank-deficient perturbation (probability ≈ 0) is
    /// redrawn with the next seed.
    pub fn with_noise(&self, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise level must be finite and non-negative, got {sigma}"
            )));
        }
        if sigma == 0.0 {
            return Ok(self.clone());
        }
        let d = self.p.rows();
        let k = self.p.cols();
        let std = sigma / (d as f64).sqrt();
        let mut attempt_seed = seed;
        for _ in 0..16 {
            let mut rng = ChaCha8Rng::seed_from_u64(attempt_seed);
            let mut noisy = self.p.clone();
            for i in 0..d {
                for j in 0..k {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    let v = noisy.get(i, j) + std * g;
                    noisy.set(i, j, v);
                }
            }
            match orthonormalize(&noisy) {
                Ok(q) => return Ok(Self { p: q }),
                Err(Error::RankDeficient(_)) => attempt_seed = attempt_seed.wrapping_add(1),
                Err(e) => return Err(e),
            }
        }
        Err(Error::RankDeficient(
            "noise perturbation stayed rank deficient across redraws".into(),
        ))
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.p
    }

    pub fn dim(&self) -> usize {
        self.p.rows()
    }

    pub fn k(&self) -> usize {
        self.p.cols()
    }
}
