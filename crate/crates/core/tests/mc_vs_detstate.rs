//! Cross-model agreement: the Monte Carlo tallies against the state-vector
//! marginals. The full randomized suite at 1e7 windows lives in the
//! acceptance tests; these runs are smaller and targeted.

mod common;

use common::det;
use heraldg2::detstate;
use heraldg2::mc::{self, SimulationPlan};
use heraldg2::{ExperimentConfig, SourceKind};

/// Assert every marginal count sits within 3 sigma of the matrix-model
/// expectation, with sigma from the binomial under that expectation.
fn assert_marginals_within_3_sigma(cfg: &ExperimentConfig, n_windows: u64, seed: u64) {
    let state = detstate::final_state(cfg, 1e-14).unwrap();
    let tally = mc::simulate(&SimulationPlan::new(cfg.clone(), n_windows, seed).unwrap()).unwrap();
    let n = n_windows as f64;
    for combo in tally.bank().combinations() {
        let p = state.event_probability(combo).unwrap();
        let observed = tally.count(combo).unwrap() as f64;
        let sigma = (n * p * (1.0 - p)).sqrt();
        let dev = (observed - n * p).abs();
        assert!(
            dev <= 3.0 * sigma.max(1e-12) || (p == 0.0 && observed == 0.0),
            "marginal {combo}: observed {observed}, expected {:.3} at sigma {sigma:.3}",
            n * p
        );
    }
}

#[test]
fn spdc_marginals_agree_at_one_million_windows() {
    let d = det(0.7, 20.0);
    let cfg = ExperimentConfig::spdc(5e-9, 1e5, d, d, d).unwrap();
    assert_marginals_within_3_sigma(&cfg, 1_000_000, 0xAB01);
}

#[test]
fn cspdc_marginals_agree_at_one_million_windows() {
    let herald = det(0.6, 400.0);
    let cfg =
        ExperimentConfig::cspdc(5e-9, 4e6, 0.2, herald, det(0.8, 100.0), det(0.7, 50.0), det(0.7, 50.0))
            .unwrap();
    assert_marginals_within_3_sigma(&cfg, 1_000_000, 0xAB02);
}

#[test]
fn g2_estimates_agree_between_mc_and_matrix() {
    // A deliberately noisy configuration so every coincidence class has
    // plenty of counts at one million windows.
    let d = det(0.7, 2e4);
    let cfg = ExperimentConfig::spdc(5e-9, 2e7, d, d, d).unwrap();
    let exact = detstate::g2_matrix(&cfg, 1e-12).unwrap().g2;
    let tally = mc::simulate(&SimulationPlan::new(cfg, 1_000_000, 0xAB03).unwrap()).unwrap();
    let est = mc::g2_estimate(&tally, SourceKind::Spdc).unwrap();
    let sigma = est.statistical_sigma.unwrap();
    assert!(sigma > 0.0);
    let dev = (est.g2 - exact).abs();
    assert!(
        dev <= 3.0 * sigma,
        "mc {} +- {sigma} vs matrix {exact} ({} sigma)",
        est.g2,
        dev / sigma
    );
}

#[test]
fn singles_counts_match_binomial_expectation_from_final_state() {
    let d = det(0.7, 20.0);
    let cfg = ExperimentConfig::spdc(5e-9, 1e5, d, d, d).unwrap();
    let state = detstate::final_state(&cfg, 1e-14).unwrap();
    let p1 = state
        .event_probability(heraldg2::RoleSet::from_roles(&[heraldg2::Role::Herald1]))
        .unwrap();
    let n = 2_000_000u64;
    let tally = mc::simulate(&SimulationPlan::new(cfg, n, 42).unwrap()).unwrap();
    let c1 = tally
        .count(heraldg2::RoleSet::from_roles(&[heraldg2::Role::Herald1]))
        .unwrap() as f64;
    let sigma = (n as f64 * p1 * (1.0 - p1)).sqrt();
    assert!((c1 - n as f64 * p1).abs() <= 3.0 * sigma);
}
