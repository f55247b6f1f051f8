//! Statistical properties of the sketches on Zipf streams, checked against
//! the exact oracle.

use f1sketch::countsketch::{HeavyHitterStructure, Tracking};
use f1sketch::estimator::{Estimator, EstimatorConfig};
use f1sketch::oracle::ExactState;
use f1sketch::stream::{generate, Distribution};

fn zipf_state(seed: u64) -> (f1sketch::stream::Stream, ExactState) {
    let stream = generate(Distribution::Zipf(1.1), 10_000, 100_000, seed, false).unwrap();
    let mut exact = ExactState::new(stream.n);
    for u in &stream.updates {
        exact.update(u.item, u.delta).unwrap();
    }
    (stream, exact)
}

fn squares_outside(exact: &ExactState, removed: &[u64]) -> u128 {
    let total: u128 = exact.frequencies().iter().map(|&x| u128::from(x.unsigned_abs()).pow(2)).sum();
    let gone: u128 = removed.iter().map(|&i| u128::from(exact.frequency(i).unsigned_abs()).pow(2)).sum();
    total - gone
}

#[test]
fn residual_sandwich_at_b_100() {
    const SEEDS: u64 = 50;
    let k = 100usize;
    let upper = 1.0 + 2.0 * (k as f64).sqrt() + k as f64;
    let (mut sandwiched, mut accurate) = (0, 0);
    for seed in 0..SEEDS {
        let (stream, exact) = zipf_state(500 + seed);
        let mut hh = HeavyHitterStructure::new(seed, HeavyHitterStructure::default_rows(10_000), 6400, 10_000, Tracking::Exact).unwrap();
        for u in &stream.updates {
            hh.update(u.item, u.delta).unwrap();
        }
        let top: Vec<u64> = hh.top_k(k).iter().map(|&(i, _)| i).collect();
        let set_res = squares_outside(&exact, &top) as f64;
        let res = exact.residual_f2(k) as f64;
        sandwiched += usize::from(res <= set_res && set_res <= upper * res);
        let ratio = hh.estimate_f2_res(k) / set_res;
        accurate += usize::from((ratio - 1.0).abs() <= 1.0 / 32.0);
    }
    assert!(sandwiched as f64 >= 0.95 * SEEDS as f64, "{sandwiched}/{SEEDS}");
    assert!(accurate as f64 >= 0.95 * SEEDS as f64, "{accurate}/{SEEDS}");
}

#[test]
fn exact_heavy_set_is_small() {
    for seed in 0..5 {
        let (_, exact) = zipf_state(seed);
        let h = exact.heavy_set(100);
        assert!(!h.is_empty() && h.len() <= 510, "{}", h.len());
    }
}

#[test]
fn heavy_items_are_isolated_on_zipf() {
    const SEEDS: u64 = 30;
    let mut isolated = 0;
    for seed in 0..SEEDS {
        let (stream, _) = zipf_state(700 + seed);
        let mut est = Estimator::new(EstimatorConfig::new(0.5, 10_000, seed).unwrap()).unwrap();
        for u in &stream.updates {
            est.update(u.item, u.delta).unwrap();
        }
        let cls = est.classify();
        assert!(cls.heavy_count() <= est.config().heavy_clamp());
        isolated += usize::from(est.heavy_terms(&cls).iter().all(|t| t.row.is_some()));
    }
    assert!(isolated as f64 >= 0.9 * SEEDS as f64, "{isolated}/{SEEDS}");
}

#[test]
fn classification_matches_exact_heavy_set_closely() {
    let (stream, exact) = zipf_state(3);
    let mut est = Estimator::new(EstimatorConfig::new(0.5, 10_000, 3).unwrap()).unwrap();
    for u in &stream.updates {
        est.update(u.item, u.delta).unwrap();
    }
    let cls = est.classify();
    let truth = exact.heavy_set(est.config().scale);
    let common = truth.iter().filter(|&&i| cls.is_heavy(i)).count();
    // Only items near the threshold may disagree.
    assert!(common as f64 >= 0.9 * truth.len() as f64, "{common} of {}", truth.len());
    assert!(cls.heavy_count() as f64 <= 1.1 * truth.len() as f64 + 5.0);
}
