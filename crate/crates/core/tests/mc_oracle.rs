//! Monte-Carlo estimates against the delta method.

use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use varsynth::mc::Sampler;
use varsynth::{simulate, transmit, CorrelationSet, DesignVariable, Expr, LinkModel, TransmitOptions};

const VOLUME: &str = "pi*(D^2 - B^2)*L/4";
const NOMINAL: [f64; 3] = [1.69, 0.625, 1.92];
const VARIANCE: [f64; 3] = [0.00125, 0.00254, 0.00536];

fn beads() -> Vec<DesignVariable> {
    ["D", "B", "L"]
        .iter()
        .enumerate()
        .map(|(i, n)| {
            DesignVariable::new(*n, NOMINAL[i], LinkModel::constant_cov(VARIANCE[i].sqrt() / NOMINAL[i]).unwrap())
        })
        .collect()
}

#[test]
fn linear_case() {
    let e = Expr::parse("2*x").unwrap();
    let vars = [DesignVariable::new("x", 0.0, LinkModel::fixed_sigma(1.0).unwrap())];
    let est = simulate(&e, &vars, &CorrelationSet::new(), 1_000_000, 11).unwrap();
    assert!((est.variance - 4.0).abs() < 3.0 * est.se_variance, "{est:?}");
    assert!(est.se_mean > 0.0 && est.se_variance > 0.0);
}

#[test]
fn bead_study_matches_delta_method() {
    let e = Expr::parse(VOLUME).unwrap();
    let est = simulate(&e, &beads(), &CorrelationSet::new(), 1_000_000, 2024).unwrap();
    assert!((est.variance / 0.0616 - 1.0).abs() < 0.02, "{est:?}");
    assert_eq!(est.failures, 0);
}

#[test]
fn positive_bore_correlation_lowers_the_variance() {
    let e = Expr::parse(VOLUME).unwrap();
    let vars = beads();
    let corr = CorrelationSet::from_entries([("D", "B", 0.3)]).unwrap();
    let plain = simulate(&e, &vars, &CorrelationSet::new(), 1_000_000, 5).unwrap();
    let correlated = simulate(&e, &vars, &corr, 1_000_000, 5).unwrap();
    let delta = transmit(&e, &vars, &corr, TransmitOptions::default()).unwrap();
    let expected = delta.covariance_total();
    assert!(expected < -0.005);
    let shift = correlated.variance - plain.variance;
    assert!(shift < 0.0);
    assert!((shift - expected).abs() < 0.1 * expected.abs(), "shift {shift}, delta {expected}");
}

#[test]
fn estimates_are_deterministic() {
    let e = Expr::parse(VOLUME).unwrap();
    let corr = CorrelationSet::from_entries([("D", "B", 0.3)]).unwrap();
    let a = simulate(&e, &beads(), &corr, 50_000, 99).unwrap();
    let b = simulate(&e, &beads(), &corr, 50_000, 99).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.variance.to_bits(), b.variance.to_bits());
}

#[test]
fn draws_do_not_depend_on_order() {
    let sampler = Sampler::new(&beads(), &CorrelationSet::new(), 3).unwrap();
    let forward: Vec<Vec<f64>> = (0..100).map(|k| sampler.draw(k)).collect();
    let mut backward: Vec<Vec<f64>> = (0..100).rev().map(|k| sampler.draw(k)).collect();
    backward.reverse();
    assert_eq!(forward, backward);
}

#[test]
fn seeds_agree() {
    let e = Expr::parse(VOLUME).unwrap();
    let runs: Vec<_> = (0..10)
        .map(|s| simulate(&e, &beads(), &CorrelationSet::new(), 100_000, s).unwrap())
        .collect();
    for a in &runs {
        for b in &runs {
            let se = (a.se_variance.powi(2) + b.se_variance.powi(2)).sqrt();
            assert!((a.variance - b.variance).abs() < 4.0 * se);
        }
    }
}

#[test]
fn marginal_means_match_nominals() {
    let vars = beads();
    let sampler = Sampler::new(&vars, &CorrelationSet::from_entries([("D", "B", 0.3)]).unwrap(), 8).unwrap();
    let n = 200_000;
    let mut sum = [0.0; 3];
    for k in 0..n {
        for (s, x) in sum.iter_mut().zip(sampler.draw(k)) {
            *s += x;
        }
    }
    for i in 0..3 {
        let mean = sum[i] / n as f64;
        let sigma = VARIANCE[i].sqrt();
        assert!((mean - NOMINAL[i]).abs() < 4.0 * sigma / (n as f64).sqrt());
    }
}

#[test]
fn failures_abort_the_run() {
    let e = Expr::parse("sqrt(x)").unwrap();
    let vars = [DesignVariable::new("x", 0.0, LinkModel::fixed_sigma(1.0).unwrap())];
    assert!(simulate(&e, &vars, &CorrelationSet::new(), 1000, 1).is_err());
    let vars = [DesignVariable::new("x", 1.0, LinkModel::fixed_sigma(1.0).unwrap())];
    assert!(simulate(&e, &vars, &CorrelationSet::new(), 1, 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 6,
        rng_seed: RngSeed::Fixed(17),
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn affine_transfer_agrees(
        coef in prop::collection::vec(-3.0f64..3.0, 4),
        sig in prop::collection::vec(0.1f64..2.0, 4),
        rho in -0.8f64..0.8,
        seed in any::<u64>(),
    ) {
        let text = format!("{}*a + {}*b + {}*c + {}*d - 4", coef[0], coef[1], coef[2], coef[3]);
        let e = Expr::parse(&text).unwrap();
        let vars: Vec<DesignVariable> = ["a", "b", "c", "d"]
            .iter()
            .zip(&sig)
            .map(|(n, s)| DesignVariable::new(*n, 2.0, LinkModel::fixed_sigma(*s).unwrap()))
            .collect();
        let corr = CorrelationSet::from_entries([("a", "c", rho)]).unwrap();
        let delta = transmit(&e, &vars, &corr, TransmitOptions::default()).unwrap();
        let est = simulate(&e, &vars, &corr, 1_000_000, seed).unwrap();
        prop_assert!((est.variance - delta.total).abs() <= 3.0 * est.se_variance,
            "mc {} ± {}, delta {}", est.variance, est.se_variance, delta.total);
    }
}
