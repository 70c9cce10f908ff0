//! Shared test helpers: configuration builders and independent oracles.
//!
//! The oracles here deliberately avoid the library's own evaluation paths.
//! The minimizer is a brute-force log scan with golden-section polish, and
//! the click-probability oracle is an inclusion-exclusion closed form that
//! never touches a transition matrix.

#![allow(dead_code)]

use heraldg2::{DetectorSpec, ExperimentConfig, Role, SourceKind};

pub fn det(eta: f64, dark: f64) -> DetectorSpec {
    DetectorSpec::new(eta, dark).unwrap()
}

/// eta = 0.7, d = 20/s detectors everywhere, W = 5 ns (H = 7e6).
pub fn typical_spdc(n: f64) -> ExperimentConfig {
    let d = det(0.7, 20.0);
    ExperimentConfig::spdc(5e-9, n, d, d, d).unwrap()
}

pub fn typical_cspdc(n: f64, p: f64) -> ExperimentConfig {
    let d = det(0.7, 20.0);
    ExperimentConfig::cspdc(5e-9, n, p, d, d, d, d).unwrap()
}

/// Independent brute-force minimizer over a log-spaced rate grid with a
/// golden-section polish, used to validate closed-form optima.
pub fn independent_min_log(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let (a, b) = (lo.ln(), hi.ln());
    let points = 4000;
    let mut best_i = 0;
    let mut best = f64::INFINITY;
    let xs: Vec<f64> = (0..points)
        .map(|i| a + (b - a) * i as f64 / (points - 1) as f64)
        .collect();
    for (i, x) in xs.iter().enumerate() {
        let v = f(x.exp());
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let mut lo = xs[best_i.saturating_sub(1)];
    let mut hi = xs[(best_i + 1).min(points - 1)];
    let inv_phi = 0.618_033_988_749_894_9_f64;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c.exp());
    let mut fd = f(d.exp());
    for _ in 0..120 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c.exp());
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d.exp());
        }
    }
    if fc < fd {
        (c.exp(), fc)
    } else {
        (d.exp(), fd)
    }
}

/// Per-pair probability that no detector in `on` fires, for one produced
/// primary pair.
fn pair_miss_probability(cfg: &ExperimentConfig, on: &[Role]) -> f64 {
    let has = |r: Role| on.contains(&r);
    let gate_miss = 1.0
        - if has(Role::G2A) { cfg.g2_a().eta() / 2.0 } else { 0.0 }
        - if has(Role::G2B) { cfg.g2_b().eta() / 2.0 } else { 0.0 };
    match cfg.source_kind() {
        SourceKind::Spdc => {
            let herald_miss = if has(Role::Herald1) {
                1.0 - cfg.herald_stage2().eta()
            } else {
                1.0
            };
            herald_miss * gate_miss
        }
        SourceKind::Cspdc => {
            let stage1_miss = if has(Role::Herald2) {
                1.0 - cfg.herald_stage1().unwrap().eta()
            } else {
                1.0
            };
            let p = cfg.cascade_efficiency().unwrap();
            let herald_miss = if has(Role::Herald1) {
                1.0 - cfg.herald_stage2().eta()
            } else {
                1.0
            };
            stage1_miss * ((1.0 - p) + p * herald_miss * gate_miss)
        }
    }
}

/// Probability that no detector in `on` fires in a whole window: dark
/// survival times the Poisson-averaged per-pair miss probability.
fn window_miss_probability(cfg: &ExperimentConfig, on: &[Role]) -> f64 {
    let mu = cfg.mean_pairs_per_window();
    let mut dark_survival = 1.0;
    for r in on {
        dark_survival *= 1.0 - cfg.detector(*r).unwrap().dark_prob(cfg.window());
    }
    let x = pair_miss_probability(cfg, on);
    dark_survival * (-mu * (1.0 - x)).exp()
}

/// Closed-form probability that every detector in `on` fires in a window,
/// by inclusion-exclusion over miss events. Independent of the matrix model.
pub fn click_probability_oracle(cfg: &ExperimentConfig, on: &[Role]) -> f64 {
    let k = on.len();
    let mut total = 0.0;
    for subset in 0..(1u32 << k) {
        let members: Vec<Role> = (0..k)
            .filter(|i| subset & (1 << i) != 0)
            .map(|i| on[i])
            .collect();
        let sign = if members.len() % 2 == 0 { 1.0 } else { -1.0 };
        total += sign * window_miss_probability(cfg, &members);
    }
    total
}
