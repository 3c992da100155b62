//! Benchmark harness: parameter sweeps over algorithms, space budgets,
//! ranks, noise levels and seeds, with CSV/JSON emission.
//!
//! Sweep cells are independent and run on a worker pool; results are sorted
//! by cell key before emission, so a config with fixed seeds reproduces its
//! output byte for byte (wall times are recorded only when `timing` is on,
//! and are zero otherwise for that same reason).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{
    adversarial_learned_mg_stream, adversarial_mg_stream, matrix_sequence, zipf_matrix,
    zipf_stream, MatrixInstance, StreamInstance, StreamOrder,
};
use crate::error::{Error, Result};
use crate::eval::{
    unweighted_error_freq, weighted_error_freq, weighted_error_matrix, ErrorReport, CSV_HEADER,
};
use crate::fd::robust::query_parts;
use crate::fd::{FrequentDirections, LearnedFrequentDirections, ProjectedSide, RobustLfd};
use crate::freq::{
    CountMin, CountSketch, CsMode, FreqSketch, Learned, MisraGries, Split,
};
use crate::io;
use crate::linalg::{svd, DenseMatrix};
use crate::oracle::{DirectionOracle, FrequencyOracle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Freq,
    Matrix,
    Adversarial,
    Noise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Which space figure a learned matrix sketch reports: the full `m·d`
/// budget including prediction storage, or only the slots the sketch itself
/// fills (predictions treated as free input).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaceConvention {
    Budget,
    UnbilledOracle,
}

/// Space reported for the gated robust sketch: its nominal budget or the
/// sum of all three component sketches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RobustSpace {
    Budget,
    Total,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub mode: Mode,
    /// Domain size (streams) or dimension (matrices).
    pub d: usize,
    /// Stream length (streams) or row count (matrices).
    pub n: u64,
    /// Number of matrices in a self-similar sequence.
    pub count: usize,
    /// Shared top-subspace rank for matrix sequences.
    pub k_shared: usize,
    /// Tail perturbation for matrix sequences.
    pub drift: f64,
    /// Seed for instance generation (distinct from the trial seeds).
    pub gen_seed: u64,
    pub shuffled: bool,
    pub algos: Vec<String>,
    /// Space budgets in words (freq/adversarial modes).
    pub space: Vec<u64>,
    /// Output ranks (matrix/noise modes); sketch capacity is twice the rank.
    pub rank: Vec<u64>,
    pub seeds: Vec<u64>,
    pub split: Split,
    /// Truncation constants swept for the truncated count sketch.
    pub cs_c: Vec<f64>,
    /// Noise levels swept in noise mode.
    pub sigma: Vec<f64>,
    /// Include the first (prediction-source) instance of a sequence in
    /// reports and summaries.
    pub include_first: bool,
    /// Coverage fraction for a partially-correct frequency oracle.
    pub oracle_c: Option<f64>,
    /// Stream or matrix file replacing the generator.
    pub input: Option<PathBuf>,
    /// Oracle file replacing the derived predictions.
    pub oracle: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    /// Record wall times (breaks byte-identical reproduction).
    pub timing: bool,
    pub space_convention: SpaceConvention,
    pub robust_space: RobustSpace,
    pub save_sketch: Option<PathBuf>,
    pub load_sketch: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Freq,
            d: 10_000,
            n: 100_000,
            count: 1,
            k_shared: 16,
            drift: 0.1,
            gen_seed: 1,
            shuffled: true,
            algos: Vec::new(),
            space: vec![750],
            rank: vec![20, 40, 60, 80, 100],
            seeds: vec![1, 2, 3],
            split: Split::Half,
            cs_c: vec![1.0],
            sigma: vec![0.0, 1e-3, 1e-2, 1e-1, 1.0],
            include_first: false,
            oracle_c: None,
            input: None,
            oracle: None,
            out: None,
            format: OutputFormat::Csv,
            timing: false,
            space_convention: SpaceConvention::Budget,
            robust_space: RobustSpace::Budget,
            save_sketch: None,
            load_sketch: None,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("need at least one seed".into()));
        }
        let check_sorted = |name: &str, v: &[u64]| -> Result<()> {
            if v.is_empty() {
                return Err(Error::InvalidArgument(format!("{name} sweep is empty")));
            }
            if v.contains(&0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} sweep has a zero entry"
                )));
            }
            if v.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidArgument(format!(
                    "{name} sweep must be strictly increasing"
                )));
            }
            Ok(())
        };
        match self.mode {
            Mode::Freq | Mode::Adversarial => check_sorted("space", &self.space)?,
            Mode::Matrix | Mode::Noise => check_sorted("rank", &self.rank)?,
        }
        if let Some(c) = self.oracle_c {
            if !(c > 0.0 && c <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "oracle coverage must lie in (0, 1], got {c}"
                )));
            }
        }
        if self.cs_c.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidArgument(
                "truncation constants must be finite and non-negative".into(),
            ));
        }
        if self.sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidArgument(
                "noise levels must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn effective_algos(&self) -> Vec<String> {
        if !self.algos.is_empty() {
            return self.algos.clone();
        }
        match self.mode {
            Mode::Freq => ["mg", "learned-mg", "cs", "learned-cs", "cs++", "learned-cs++"]
                .map(String::from)
                .to_vec(),
            Mode::Adversarial => ["mg", "learned-mg"].map(String::from).to_vec(),
            Mode::Matrix => ["fd", "learned-fd", "svd"].map(String::from).to_vec(),
            Mode::Noise => ["learned-fd"].map(String::from).to_vec(),
        }
    }
}

/// Aggregate statistics per (algorithm, size, constant) group.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub m: u64,
    pub c: f64,
    pub cells: usize,
    pub median_weighted_err: f64,
    pub mean_weighted_err: f64,
    pub std_weighted_err: f64,
}

#[derive(Debug)]
pub struct BenchOutcome {
    pub reports: Vec<ErrorReport>,
    pub summary: Vec<SummaryRow>,
    /// Fitted log-log slope of median error against the noise level
    /// (noise mode, positive noise levels only).
    pub noise_slope: Option<f64>,
    pub any_failed: bool,
}

pub fn run(config: &BenchConfig) -> Result<BenchOutcome> {
    config.validate()?;
    let reports = match config.mode {
        Mode::Freq => run_freq_bench(config)?,
        Mode::Matrix => run_matrix_bench(config)?,
        Mode::Adversarial => run_adversarial_bench(config)?,
        Mode::Noise => run_noise_bench(config)?,
    };
    let summary = summarize(&reports);
    let noise_slope = if config.mode == Mode::Noise {
        noise_scaling_slope(&reports)
    } else {
        None
    };
    let any_failed = reports.iter().any(|r| r.error.is_some());
    Ok(BenchOutcome {
        reports,
        summary,
        noise_slope,
        any_failed,
    })
}

/// Slope of median weighted error against the noise level, over the
/// positive noise levels (zero cannot enter a log-log fit).
fn noise_scaling_slope(reports: &[ErrorReport]) -> Option<f64> {
    use std::collections::BTreeMap;
    let mut by_sigma: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for r in reports {
        if r.error.is_none() && r.c > 0.0 && r.weighted_err.is_finite() {
            by_sigma.entry(r.c.to_bits()).or_default().push(r.weighted_err);
        }
    }
    let points: Vec<(f64, f64)> = by_sigma
        .into_iter()
        .map(|(bits, mut errs)| {
            errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            (f64::from_bits(bits), errs[errs.len() / 2])
        })
        .collect();
    crate::eval::fit_error_scaling(&points).ok()
}

/// The word accounting every frequency cell must satisfy; the runner
/// asserts each sketch against this and the acceptance suite audits
/// emitted rows.
pub fn expected_freq_space_words(algo: &str, space: u64, split: Split) -> Result<u64> {
    let plan = FreqPlan::new(algo, space, split, None)?;
    Ok(plan.space_words())
}

/// Construction plan for one frequency-sketch cell.
struct FreqPlan {
    algo: String,
    m: u64,
    tau: u64,
    k_h: u64,
    width: u64,
    cs_mode: Option<CsMode>,
}

const CS_ROWS: usize = 3;

impl FreqPlan {
    fn new(algo: &str, space: u64, split: Split, cs_c: Option<f64>) -> Result<Self> {
        let learned = algo.starts_with("learned-");
        let base = algo.strip_prefix("learned-").unwrap_or(algo);
        let k_h = if learned {
            split.heavy_elements(space) as u64
        } else {
            0
        };
        if learned && k_h == 0 {
            return Err(Error::InvalidArgument(format!(
                "space {space} leaves no room for exact counters"
            )));
        }
        let inner_budget = space - 2 * k_h;
        match base {
            "mg" => {
                let m = inner_budget / 2;
                if m == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "space {space} buys no counters"
                    )));
                }
                Ok(Self {
                    algo: algo.into(),
                    m,
                    tau: m,
                    k_h,
                    width: 0,
                    cs_mode: None,
                })
            }
            "cs" | "cs++" | "cm" => {
                let width = inner_budget / CS_ROWS as u64;
                if width == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "space {space} buys no table columns"
                    )));
                }
                let cs_mode = match base {
                    "cs" => Some(CsMode::Plain),
                    "cs++" => Some(CsMode::Truncated {
                        c: cs_c.unwrap_or(1.0),
                    }),
                    _ => None,
                };
                Ok(Self {
                    algo: algo.into(),
                    m: width * CS_ROWS as u64,
                    tau: 0,
                    k_h,
                    width,
                    cs_mode,
                })
            }
            other => Err(Error::InvalidArgument(format!(
                "unknown frequency algorithm {other:?}"
            ))),
        }
    }

    fn space_words(&self) -> u64 {
        let inner = if self.width > 0 {
            self.width * CS_ROWS as u64
        } else {
            2 * self.m
        };
        2 * self.k_h + inner
    }

    fn build(&self, seed: u64, oracle: &FrequencyOracle) -> Result<FreqAlgo> {
        let base = self.algo.strip_prefix("learned-").unwrap_or(&self.algo);
        let learned = self.algo.starts_with("learned-");
        let inner = match base {
            "mg" => FreqAlgo::Mg(MisraGries::with_capacity(self.m as usize)?),
            "cm" => FreqAlgo::Cm(CountMin::new(CS_ROWS, self.width as usize, seed)?),
            "cs" | "cs++" => FreqAlgo::Cs(CountSketch::new(
                CS_ROWS,
                self.width as usize,
                seed,
                self.cs_mode.expect("set for cs variants"),
            )?),
            _ => unreachable!("validated in new"),
        };
        if !learned {
            return Ok(inner);
        }
        if oracle.len() != self.k_h as usize {
            return Err(Error::InvalidArgument(format!(
                "oracle holds {} ids, cell needs {}",
                oracle.len(),
                self.k_h
            )));
        }
        Ok(match inner {
            FreqAlgo::Mg(s) => FreqAlgo::LearnedMg(Learned::new(oracle, s)),
            FreqAlgo::Cm(s) => FreqAlgo::LearnedCm(Learned::new(oracle, s)),
            FreqAlgo::Cs(s) => FreqAlgo::LearnedCs(Learned::new(oracle, s)),
            _ => unreachable!(),
        })
    }
}

enum FreqAlgo {
    Mg(MisraGries),
    Cm(CountMin),
    Cs(CountSketch),
    LearnedMg(Learned<MisraGries>),
    LearnedCm(Learned<CountMin>),
    LearnedCs(Learned<CountSketch>),
}

impl FreqAlgo {
    fn update(&mut self, item: u64) {
        match self {
            FreqAlgo::Mg(s) => s.update(item),
            FreqAlgo::Cm(s) => s.update(item),
            FreqAlgo::Cs(s) => s.update(item),
            FreqAlgo::LearnedMg(s) => s.update(item),
            FreqAlgo::LearnedCm(s) => s.update(item),
            FreqAlgo::LearnedCs(s) => s.update(item),
        }
    }

    fn estimate(&self, item: u64) -> f64 {
        match self {
            FreqAlgo::Mg(s) => FreqSketch::estimate(s, item),
            FreqAlgo::Cm(s) => FreqSketch::estimate(s, item),
            FreqAlgo::Cs(s) => s.estimate(item),
            FreqAlgo::LearnedMg(s) => s.estimate(item),
            FreqAlgo::LearnedCm(s) => s.estimate(item),
            FreqAlgo::LearnedCs(s) => s.estimate(item),
        }
    }

    fn space_words(&self) -> u64 {
        match self {
            FreqAlgo::Mg(s) => FreqSketch::space_words(s),
            FreqAlgo::Cm(s) => FreqSketch::space_words(s),
            FreqAlgo::Cs(s) => FreqSketch::space_words(s),
            FreqAlgo::LearnedMg(s) => FreqSketch::space_words(s),
            FreqAlgo::LearnedCm(s) => FreqSketch::space_words(s),
            FreqAlgo::LearnedCs(s) => FreqSketch::space_words(s),
        }
    }

    fn state(&self) -> Option<io::SketchState> {
        match self {
            FreqAlgo::Mg(s) => Some(io::SketchState::MisraGries(s.snapshot())),
            FreqAlgo::LearnedMg(s) => Some(io::SketchState::LearnedMisraGries(s.snapshot())),
            FreqAlgo::Cs(s) => Some(io::SketchState::CountSketch(s.snapshot())),
            _ => None,
        }
    }

    fn load(state: &io::SketchState) -> Result<Self> {
        Ok(match state {
            io::SketchState::MisraGries(s) => FreqAlgo::Mg(MisraGries::from_snapshot(s)?),
            io::SketchState::LearnedMisraGries(s) => {
                FreqAlgo::LearnedMg(Learned::<MisraGries>::from_snapshot(s)?)
            }
            io::SketchState::CountSketch(s) => FreqAlgo::Cs(CountSketch::from_snapshot(s)?),
        })
    }
}

fn load_or_generate_stream(config: &BenchConfig) -> Result<StreamInstance> {
    match &config.input {
        Some(path) => io::read_stream(path),
        None => {
            let order = if config.shuffled {
                StreamOrder::Shuffled
            } else {
                StreamOrder::Sorted
            };
            Ok(zipf_stream(config.d, config.n, config.gen_seed, order))
        }
    }
}

fn freq_oracle_for(
    config: &BenchConfig,
    truth: &[u64],
    k_h: usize,
) -> Result<FrequencyOracle> {
    if let Some(path) = &config.oracle {
        let full = io::read_frequency_oracle(path)?;
        if full.len() < k_h {
            return Err(Error::InvalidArgument(format!(
                "oracle file holds {} ids but the cell needs {k_h}",
                full.len()
            )));
        }
        return FrequencyOracle::from_ids(full.ids()[..k_h].to_vec());
    }
    match config.oracle_c {
        Some(c) => FrequencyOracle::partial(truth, k_h, c, config.gen_seed),
        None => FrequencyOracle::top_of(truth, k_h),
    }
}

fn run_freq_bench(config: &BenchConfig) -> Result<Vec<ErrorReport>> {
    let instance = load_or_generate_stream(config)?;
    let algos = config.effective_algos();

    // (algo index, space, c index, seed index)
    let mut cells: Vec<(usize, u64, usize, usize)> = Vec::new();
    for (ai, algo) in algos.iter().enumerate() {
        let cs = algo.ends_with("cs++");
        let c_count = if cs { config.cs_c.len() } else { 1 };
        for &space in &config.space {
            for ci in 0..c_count {
                for si in 0..config.seeds.len() {
                    cells.push((ai, space, ci, si));
                }
            }
        }
    }

    if config.load_sketch.is_some() || config.save_sketch.is_some() {
        if cells.len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "sketch save/load needs exactly one sweep cell, this config has {}",
                cells.len()
            )));
        }
        return run_freq_cell_with_state(config, &instance, &algos[cells[0].0], cells[0].1);
    }

    let mut results: Vec<((usize, u64, usize, usize), ErrorReport)> = cells
        .par_iter()
        .map(|&(ai, space, ci, si)| {
            let algo = &algos[ai];
            let seed = config.seeds[si];
            let c = if algo.ends_with("cs++") {
                Some(config.cs_c[ci])
            } else {
                None
            };
            let report = freq_cell(config, &instance, algo, space, seed, c)
                .unwrap_or_else(|e| ErrorReport::failed(algo.clone(), seed, e.to_string()));
            ((ai, space, ci, si), report)
        })
        .collect();
    results.sort_by_key(|(key, _)| *key);
    Ok(results.into_iter().map(|(_, r)| r).collect())
}

fn freq_cell(
    config: &BenchConfig,
    instance: &StreamInstance,
    algo: &str,
    space: u64,
    seed: u64,
    cs_c: Option<f64>,
) -> Result<ErrorReport> {
    let plan = FreqPlan::new(algo, space, config.split, cs_c)?;
    let oracle = if algo.starts_with("learned-") {
        freq_oracle_for(config, &instance.truth, plan.k_h as usize)?
    } else {
        FrequencyOracle::from_ids(Vec::new())?
    };
    let mut sketch = plan.build(seed, &oracle)?;
    debug_assert_eq!(sketch.space_words(), plan.space_words());

    let started = Instant::now();
    for &item in &instance.items {
        sketch.update(item);
    }
    let wall = started.elapsed();

    let weighted = weighted_error_freq(&instance.truth, |id| sketch.estimate(id))?;
    let unweighted = unweighted_error_freq(&instance.truth, |id| sketch.estimate(id));
    let mut report = ErrorReport {
        algorithm: algo.into(),
        m: plan.m,
        tau: plan.tau,
        k_h: plan.k_h,
        c: cs_c.unwrap_or(0.0),
        seed,
        space_words: sketch.space_words(),
        weighted_err: weighted,
        unweighted_err: unweighted,
        wall_ms: 0.0,
        error: None,
    };
    if config.timing {
        report = report.with_wall_time(wall);
    }
    Ok(report)
}

/// Single-cell freq run with snapshot load/save.
fn run_freq_cell_with_state(
    config: &BenchConfig,
    instance: &StreamInstance,
    algo: &str,
    space: u64,
) -> Result<Vec<ErrorReport>> {
    let seed = config.seeds[0];
    let cs_c = if algo.ends_with("cs++") {
        Some(config.cs_c[0])
    } else {
        None
    };
    let plan = FreqPlan::new(algo, space, config.split, cs_c)?;
    let mut sketch = match &config.load_sketch {
        Some(path) => FreqAlgo::load(&io::read_sketch_state(path)?)?,
        None => {
            let oracle = if algo.starts_with("learned-") {
                freq_oracle_for(config, &instance.truth, plan.k_h as usize)?
            } else {
                FrequencyOracle::from_ids(Vec::new())?
            };
            plan.build(seed, &oracle)?
        }
    };
    let started = Instant::now();
    for &item in &instance.items {
        sketch.update(item);
    }
    let wall = started.elapsed();
    if let Some(path) = &config.save_sketch {
        match sketch.state() {
            Some(state) => io::write_sketch_state(path, &state)?,
            None => {
                return Err(Error::InvalidArgument(format!(
                    "algorithm {algo} has no snapshot format"
                )))
            }
        }
    }
    let weighted = weighted_error_freq(&instance.truth, |id| sketch.estimate(id))?;
    let unweighted = unweighted_error_freq(&instance.truth, |id| sketch.estimate(id));
    let mut report = ErrorReport {
        algorithm: algo.into(),
        m: plan.m,
        tau: plan.tau,
        k_h: plan.k_h,
        c: cs_c.unwrap_or(0.0),
        seed,
        space_words: sketch.space_words(),
        weighted_err: weighted,
        unweighted_err: unweighted,
        wall_ms: 0.0,
        error: None,
    };
    if config.timing {
        report = report.with_wall_time(wall);
    }
    Ok(vec![report])
}

fn load_or_generate_matrices(config: &BenchConfig) -> Result<Vec<MatrixInstance>> {
    if let Some(path) = &config.input {
        let a = io::read_matrix(path)?;
        let dec = svd(&a)?;
        let spectrum: Vec<f64> = dec.singular_values.iter().map(|s| s * s).collect();
        let v = dec.vt.transpose();
        return Ok(vec![MatrixInstance { a, spectrum, v }]);
    }
    if config.count > 1 {
        matrix_sequence(
            config.count,
            config.d,
            config.n as usize,
            config.k_shared,
            config.drift,
            config.gen_seed,
        )
    } else {
        Ok(vec![zipf_matrix(config.d, config.n as usize, config.gen_seed)?])
    }
}

fn direction_oracle_for(
    config: &BenchConfig,
    first: &DenseMatrix,
    k_h: usize,
) -> Result<DirectionOracle> {
    if let Some(path) = &config.oracle {
        let full = io::read_direction_oracle(path)?;
        if full.k() < k_h {
            return Err(Error::InvalidArgument(format!(
                "oracle file holds {} directions but the cell needs {k_h}",
                full.k()
            )));
        }
        if full.k() == k_h {
            return Ok(full);
        }
        let mut p = DenseMatrix::zeros(full.dim(), k_h);
        for j in 0..k_h {
            for i in 0..full.dim() {
                p.set(i, j, full.matrix().get(i, j));
            }
        }
        return DirectionOracle::from_matrix(p);
    }
    DirectionOracle::from_first_matrix(first, k_h)
}

fn run_matrix_bench(config: &BenchConfig) -> Result<Vec<ErrorReport>> {
    let instances = load_or_generate_matrices(config)?;
    let algos = config.effective_algos();
    let first_reported = if instances.len() > 1 && !config.include_first {
        1
    } else {
        0
    };

    // (algo, rank, instance, seed) cells.
    let mut cells: Vec<(usize, u64, usize, usize)> = Vec::new();
    for (ai, _) in algos.iter().enumerate() {
        for &rank in &config.rank {
            for inst in first_reported..instances.len() {
                for si in 0..config.seeds.len() {
                    cells.push((ai, rank, inst, si));
                }
            }
        }
    }

    let mut results: Vec<((usize, u64, usize, usize), ErrorReport)> = cells
        .par_iter()
        .map(|&(ai, rank, inst, si)| {
            let algo = &algos[ai];
            let seed = config.seeds[si];
            let report = matrix_cell(config, &instances, algo, rank, inst, seed)
                .unwrap_or_else(|e| ErrorReport::failed(algo.clone(), seed, e.to_string()));
            ((ai, rank, inst, si), report)
        })
        .collect();
    results.sort_by_key(|(key, _)| *key);
    Ok(results.into_iter().map(|(_, r)| r).collect())
}

fn matrix_cell(
    config: &BenchConfig,
    instances: &[MatrixInstance],
    algo: &str,
    rank: u64,
    inst_idx: usize,
    seed: u64,
) -> Result<ErrorReport> {
    let a = &instances[inst_idx].a;
    let d = a.cols();
    let rank_us = rank as usize;
    if rank_us >= d {
        return Err(Error::InvalidArgument(format!(
            "rank {rank} must be below the dimension {d}"
        )));
    }
    let m = 2 * rank_us;
    let started;
    let wall;
    let (b_err, tau, k_h, space): (f64, u64, u64, u64) = match algo {
        "fd" => {
            let mut fd = FrequentDirections::new(m, rank_us, d)?;
            started = Instant::now();
            for i in 0..a.rows() {
                fd.update(a.row(i))?;
            }
            wall = started.elapsed();
            let err = weighted_error_matrix(a, &fd.result())?;
            (err, rank, 0, fd.space_words())
        }
        "learned-fd" => {
            let k_h = config.split.direction_buckets(m);
            let oracle = direction_oracle_for(config, &instances[0].a, k_h)?;
            let mut lfd =
                LearnedFrequentDirections::new(oracle, m, ProjectedSide::CovarianceTracker)?;
            started = Instant::now();
            for i in 0..a.rows() {
                lfd.update(a.row(i))?;
            }
            wall = started.elapsed();
            let err = weighted_error_matrix(a, &lfd.result()?)?;
            let space = match config.space_convention {
                SpaceConvention::Budget => lfd.space_words_budget(),
                SpaceConvention::UnbilledOracle => lfd.space_words_unbilled_oracle(),
            };
            (err, (m - 2 * k_h) as u64 / 2, k_h as u64, space)
        }
        "rlfd" => {
            let k_h = config.split.direction_buckets(m);
            let oracle = direction_oracle_for(config, &instances[0].a, k_h)?;
            let mut robust = RobustLfd::new(oracle, m, ProjectedSide::CovarianceTracker)?;
            started = Instant::now();
            for i in 0..a.rows() {
                robust.update(a.row(i))?;
            }
            wall = started.elapsed();
            let (b1, b2, alpha) = robust.parts()?;
            // Weighted error with the gated answer substituted per direction.
            let dec = svd(a)?;
            let frob_sq = a.frob_sq();
            let mut err = 0.0;
            for (i, s) in dec.singular_values.iter().enumerate() {
                let w = s * s / frob_sq;
                if w == 0.0 {
                    continue;
                }
                let v = dec.vt.row(i);
                let av = a.mul_vec(v)?;
                let truth: f64 = av.iter().map(|x| x * x).sum();
                let answer = query_parts(&b1, &b2, alpha, v)?;
                err += w * (truth - answer).abs();
            }
            let space = match config.robust_space {
                RobustSpace::Budget => (m * d) as u64,
                RobustSpace::Total => robust.space_words_total(),
            };
            (err, (m / 2) as u64, k_h as u64, space)
        }
        "svd" => {
            started = Instant::now();
            let dec = svd(a)?;
            wall = started.elapsed();
            let mut rows = Vec::with_capacity(rank_us);
            for i in 0..rank_us.min(dec.singular_values.len()) {
                let s = dec.singular_values[i];
                rows.push(dec.vt.row(i).iter().map(|v| s * v).collect::<Vec<f64>>());
            }
            let b = DenseMatrix::from_rows(&rows)?;
            let err = weighted_error_matrix(a, &b)?;
            (err, 0, 0, (rank_us * d) as u64)
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown matrix algorithm {other:?}"
            )))
        }
    };
    let mut report = ErrorReport {
        algorithm: algo.into(),
        m: m as u64,
        tau,
        k_h,
        c: 0.0,
        seed,
        space_words: space,
        weighted_err: b_err,
        unweighted_err: 0.0,
        wall_ms: 0.0,
        error: None,
    };
    if config.timing {
        report = report.with_wall_time(wall);
    }
    Ok(report)
}

fn run_noise_bench(config: &BenchConfig) -> Result<Vec<ErrorReport>> {
    let instances = load_or_generate_matrices(config)?;
    let a = &instances[0].a;
    let d = a.cols();

    let mut cells: Vec<(u64, usize, usize)> = Vec::new();
    for &rank in &config.rank {
        for si in 0..config.sigma.len() {
            for sj in 0..config.seeds.len() {
                cells.push((rank, si, sj));
            }
        }
    }
    let mut results: Vec<((u64, usize, usize), ErrorReport)> = cells
        .par_iter()
        .map(|&(rank, si, sj)| {
            let sigma = config.sigma[si];
            let seed = config.seeds[sj];
            let report = noise_cell(config, a, d, rank, sigma, seed)
                .unwrap_or_else(|e| ErrorReport::failed("learned-fd", seed, e.to_string()));
            ((rank, si, sj), report)
        })
        .collect();
    results.sort_by_key(|(key, _)| *key);
    Ok(results.into_iter().map(|(_, r)| r).collect())
}

fn noise_cell(
    config: &BenchConfig,
    a: &DenseMatrix,
    d: usize,
    rank: u64,
    sigma: f64,
    seed: u64,
) -> Result<ErrorReport> {
    let rank_us = rank as usize;
    if rank_us >= d {
        return Err(Error::InvalidArgument(format!(
            "rank {rank} must be below the dimension {d}"
        )));
    }
    let m = 2 * rank_us;
    let k_h = config.split.direction_buckets(m);
    let base = direction_oracle_for(config, a, k_h)?;
    let oracle = base.with_noise(sigma, seed)?;
    let mut lfd = LearnedFrequentDirections::new(oracle, m, ProjectedSide::CovarianceTracker)?;
    let started = Instant::now();
    for i in 0..a.rows() {
        lfd.update(a.row(i))?;
    }
    let wall = started.elapsed();
    let err = weighted_error_matrix(a, &lfd.result()?)?;
    let space = match config.space_convention {
        SpaceConvention::Budget => lfd.space_words_budget(),
        SpaceConvention::UnbilledOracle => lfd.space_words_unbilled_oracle(),
    };
    let mut report = ErrorReport {
        algorithm: "learned-fd".into(),
        m: m as u64,
        tau: ((m - 2 * k_h) / 2) as u64,
        k_h: k_h as u64,
        c: sigma,
        seed,
        space_words: space,
        weighted_err: err,
        unweighted_err: 0.0,
        wall_ms: 0.0,
        error: None,
    };
    if config.timing {
        report = report.with_wall_time(wall);
    }
    Ok(report)
}

fn run_adversarial_bench(config: &BenchConfig) -> Result<Vec<ErrorReport>> {
    let algos = config.effective_algos();
    let mut cells: Vec<(usize, u64, usize)> = Vec::new();
    for (ai, _) in algos.iter().enumerate() {
        for &space in &config.space {
            for si in 0..config.seeds.len() {
                cells.push((ai, space, si));
            }
        }
    }
    let mut results: Vec<((usize, u64, usize), ErrorReport)> = cells
        .par_iter()
        .map(|&(ai, space, si)| {
            let algo = &algos[ai];
            let seed = config.seeds[si];
            let report = adversarial_cell(config, algo, space, seed)
                .unwrap_or_else(|e| ErrorReport::failed(algo.clone(), seed, e.to_string()));
            ((ai, space, si), report)
        })
        .collect();
    results.sort_by_key(|(key, _)| *key);
    Ok(results.into_iter().map(|(_, r)| r).collect())
}

fn adversarial_cell(
    config: &BenchConfig,
    algo: &str,
    space: u64,
    seed: u64,
) -> Result<ErrorReport> {
    match algo {
        "mg" => {
            let m = (space / 2) as usize;
            let instance = adversarial_mg_stream(config.d, config.n, m, seed)?;
            let mut mg = MisraGries::with_capacity(m)?;
            let started = Instant::now();
            for &item in &instance.items {
                mg.update(item);
            }
            let wall = started.elapsed();
            let weighted =
                weighted_error_freq(&instance.truth, |id| mg.estimate(id) as f64)?;
            let unweighted =
                unweighted_error_freq(&instance.truth, |id| mg.estimate(id) as f64);
            let mut report = ErrorReport {
                algorithm: algo.into(),
                m: m as u64,
                tau: m as u64,
                k_h: 0,
                c: 0.0,
                seed,
                space_words: 2 * m as u64,
                weighted_err: weighted,
                unweighted_err: unweighted,
                wall_ms: 0.0,
                error: None,
            };
            if config.timing {
                report = report.with_wall_time(wall);
            }
            Ok(report)
        }
        "learned-mg" => {
            let m = (space / 2) as usize;
            let k_h = config.split.heavy_elements(space);
            if k_h == 0 || k_h >= m {
                return Err(Error::InvalidArgument(format!(
                    "space {space} cannot host a learned split"
                )));
            }
            // The worst case targets the remainder allocation: exact
            // counters for the predicted set, all remaining buckets in one
            // inner table.
            let inner = m - k_h;
            let instance = adversarial_learned_mg_stream(config.d, config.n, m, k_h, seed)?;
            let oracle = FrequencyOracle::top_of(&instance.truth, k_h)?;
            let mut lmg = Learned::new(&oracle, MisraGries::with_capacity(inner)?);
            let started = Instant::now();
            for &item in &instance.items {
                lmg.update(item);
            }
            let wall = started.elapsed();
            let weighted = weighted_error_freq(&instance.truth, |id| lmg.estimate(id))?;
            let unweighted = unweighted_error_freq(&instance.truth, |id| lmg.estimate(id));
            let mut report = ErrorReport {
                algorithm: algo.into(),
                m: inner as u64,
                tau: inner as u64,
                k_h: k_h as u64,
                c: 0.0,
                seed,
                space_words: 2 * (k_h + inner) as u64,
                weighted_err: weighted,
                unweighted_err: unweighted,
                wall_ms: 0.0,
                error: None,
            };
            if config.timing {
                report = report.with_wall_time(wall);
            }
            Ok(report)
        }
        other => Err(Error::InvalidArgument(format!(
            "unknown adversarial algorithm {other:?}"
        ))),
    }
}

fn summarize(reports: &[ErrorReport]) -> Vec<SummaryRow> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(String, u64, u64), Vec<f64>> = BTreeMap::new();
    for r in reports {
        if r.error.is_some() || !r.weighted_err.is_finite() {
            continue;
        }
        groups
            .entry((r.algorithm.clone(), r.m, r.c.to_bits()))
            .or_default()
            .push(r.weighted_err);
    }
    groups
        .into_iter()
        .map(|((algorithm, m, c_bits), mut errs)| {
            errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = errs.len();
            let median = if n % 2 == 1 {
                errs[n / 2]
            } else {
                0.5 * (errs[n / 2 - 1] + errs[n / 2])
            };
            let mean = errs.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1) as f64)
                    .sqrt()
            } else {
                0.0
            };
            SummaryRow {
                algorithm,
                m,
                c: f64::from_bits(c_bits),
                cells: n,
                median_weighted_err: median,
                mean_weighted_err: mean,
                std_weighted_err: std,
            }
        })
        .collect()
}

pub fn render_csv(reports: &[ErrorReport]) -> String {
    let mut out = String::with_capacity(64 * (reports.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub fn render_json(config: &BenchConfig, outcome: &BenchOutcome) -> Result<String> {
    let mut doc = serde_json::json!({
        "config": config,
        "reports": outcome.reports,
        "summary": outcome.summary,
    });
    if let Some(slope) = outcome.noise_slope {
        doc["noise_slope"] = serde_json::json!(slope);
    }
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Parse(format!("json encode: {e}")))
}

pub fn render_summary_table(summary: &[SummaryRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>8} {:>8} {:>6} {:>14} {:>14} {:>14}",
        "algorithm", "m", "C", "cells", "median", "mean", "std"
    );
    for row in summary {
        let _ = writeln!(
            out,
            "{:<16} {:>8} {:>8} {:>6} {:>14.6e} {:>14.6e} {:>14.6e}",
            row.algorithm,
            row.m,
            row.c,
            row.cells,
            row.median_weighted_err,
            row.mean_weighted_err,
            row.std_weighted_err
        );
    }
    out
}

/// Writes the outcome to `config.out` (or returns the rendered text when no
/// path is set).
pub fn emit(config: &BenchConfig, outcome: &BenchOutcome) -> Result<Option<String>> {
    let rendered = match config.format {
        OutputFormat::Csv => render_csv(&outcome.reports),
        OutputFormat::Json => render_json(config, outcome)?,
    };
    match &config.out {
        Some(path) => {
            write_text(path, &rendered)?;
            Ok(None)
        }
        None => Ok(Some(rendered)),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
