//! Protocol-level checks that cut across modules: the benchmark orderings
//! and oracle-quality effects the sweep harness is meant to reproduce.

use lasketch::bench::{self, BenchConfig, Mode};
use lasketch::datagen::{matrix_sequence, zipf_stream, StreamOrder};
use lasketch::eval::weighted_error_freq;
use lasketch::freq::{Learned, MisraGries, Split};
use lasketch::oracle::FrequencyOracle;

/// At the reference 750-word budget on a large Zipfian stream, the learned
/// deterministic summary is at least as accurate as the learned randomized
/// table (median over seeds).
#[test]
fn learned_mg_at_most_learned_cs_at_reference_space() {
    let config = BenchConfig {
        mode: Mode::Freq,
        d: 10_000,
        n: 1_000_000,
        space: vec![750],
        seeds: (1..=10).collect(),
        algos: vec!["learned-mg".into(), "learned-cs".into()],
        gen_seed: 7,
        ..BenchConfig::default()
    };
    let outcome = bench::run(&config).unwrap();
    assert!(!outcome.any_failed);
    let median_of = |algo: &str| {
        outcome
            .summary
            .iter()
            .find(|s| s.algorithm == algo)
            .unwrap()
            .median_weighted_err
    };
    let lmg = median_of("learned-mg");
    let lcs = median_of("learned-cs");
    assert!(lmg <= lcs, "learned-mg {lmg} above learned-cs {lcs}");
}

/// A partially correct oracle (only the top tenth of the predictions are
/// truly heavy) keeps the perfect oracle's 1/m error scaling and stays
/// within a constant of it. The constant frozen here (10, matching the
/// 1/c accounting at c = 0.1) is what running both oracles actually
/// measures at these sizes: the observed ratios sit between 5 and 9.
#[test]
fn partial_oracle_keeps_scaling_within_constant_of_perfect() {
    let inst = zipf_stream(10_000, 1_000_000, 3, StreamOrder::Shuffled);
    let run = |oracle: &FrequencyOracle, inner: usize| {
        let mut lmg = Learned::new(oracle, MisraGries::with_capacity(inner).unwrap());
        for &i in &inst.items {
            lmg.update(i);
        }
        weighted_error_freq(&inst.truth, |id| lmg.estimate(id)).unwrap()
    };
    let mut partial_points = Vec::new();
    for &space in &[512u64, 1024, 2048, 4096] {
        let k_h = Split::Half.heavy_elements(space);
        let inner = ((space - 2 * k_h as u64) / 2) as usize;
        let perfect = run(&FrequencyOracle::top_of(&inst.truth, k_h).unwrap(), inner);
        let partial = run(
            &FrequencyOracle::partial(&inst.truth, k_h, 0.1, 11).unwrap(),
            inner,
        );
        assert!(partial >= perfect);
        assert!(
            partial <= 10.0 * perfect,
            "space {space}: partial {partial} vs perfect {perfect}"
        );
        partial_points.push((space as f64, partial));
    }
    // Same asymptotic law as the perfect oracle: error ∝ 1/m.
    let slope = lasketch::eval::fit_error_scaling(&partial_points).unwrap();
    assert!(
        (-1.3..=-0.7).contains(&slope),
        "partial-oracle slope {slope} left the 1/m envelope"
    );
}

/// The matrix sweep enumerates one report per (algorithm, rank, instance,
/// seed) cell; ranks 20..200 step 20 give ten points per algorithm.
#[test]
fn matrix_rank_sweep_has_ten_points_per_algorithm() {
    let config = BenchConfig {
        mode: Mode::Matrix,
        d: 256,
        n: 256,
        rank: (1..=10).map(|i| 20 * i).collect(),
        seeds: vec![1],
        algos: vec!["fd".into()],
        gen_seed: 2,
        ..BenchConfig::default()
    };
    let outcome = bench::run(&config).unwrap();
    assert!(!outcome.any_failed);
    assert_eq!(outcome.reports.len(), 10);
    let mut ms: Vec<u64> = outcome.reports.iter().map(|r| r.m).collect();
    ms.dedup();
    assert_eq!(ms.len(), 10);
}

/// Large report lists render with exactly one line per report plus the
/// header.
#[test]
fn csv_line_count_scales_with_reports() {
    let report = lasketch::eval::ErrorReport {
        algorithm: "mg".into(),
        m: 1,
        tau: 1,
        k_h: 0,
        c: 0.0,
        seed: 0,
        space_words: 2,
        weighted_err: 0.0,
        unweighted_err: 0.0,
        wall_ms: 0.0,
        error: None,
    };
    let reports = vec![report; 1000];
    let csv = bench::render_csv(&reports);
    assert_eq!(csv.lines().count(), 1001);
}

/// Predictions taken from the first stream of a repeated sequence are the
/// true heavy set of every later stream.
#[test]
fn first_stream_oracle_on_identical_sequence() {
    let first = zipf_stream(500, 20_000, 5, StreamOrder::Shuffled);
    let oracle = FrequencyOracle::from_first_stream(&first, 12).unwrap();
    for seed in 6..9 {
        let later = zipf_stream(500, 20_000, seed, StreamOrder::Shuffled);
        let truth_top = FrequencyOracle::top_of(&later.truth, 12).unwrap();
        assert_eq!(oracle, truth_top);
    }
}

/// With zero drift every instance is identical, so the first-instance
/// predictions behave as a perfect oracle: the learned error on later
/// instances equals the first-instance learned error exactly.
#[test]
fn zero_drift_sequence_reuses_predictions_exactly() {
    let seq = matrix_sequence(3, 16, 48, 4, 0.0, 9).unwrap();
    let oracle =
        lasketch::oracle::DirectionOracle::top_directions(&seq[0].a, 2).unwrap();
    let errs: Vec<f64> = seq
        .iter()
        .map(|inst| {
            let mut lfd = lasketch::fd::LearnedFrequentDirections::new(
                oracle.clone(),
                8,
                lasketch::fd::ProjectedSide::CovarianceTracker,
            )
            .unwrap();
            for i in 0..inst.a.rows() {
                lfd.update(inst.a.row(i)).unwrap();
            }
            lasketch::eval::weighted_error_matrix(&inst.a, &lfd.result().unwrap()).unwrap()
        })
        .collect();
    assert_eq!(errs[0], errs[1]);
    assert_eq!(errs[0], errs[2]);
}
