//! Window-by-window Monte Carlo event simulation, used as an independent
//! oracle for the state-vector model and the closed-form approximations.
//!
//! Randomness is ChaCha8 keyed by the 64-bit plan seed, with window w drawn
//! from stream w of that keystream. Every window owns its stream, so tallies
//! are bit-identical no matter how windows are sharded across threads. The
//! generator choice and the per-window draw order (pair count, then per-pair
//! detections, then darks in bank order) are part of the stable contract.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, RoleSet, SourceKind};
use crate::detstate::{DetectorBank, MAX_MEAN_PAIRS};
use crate::error::{Error, Result};
use crate::rates::{G2Result, ModelKind, RateSet};

/// A reproducible simulation request.
#[derive(Debug, Clone)]
pub struct SimulationPlan {
    pub cfg: ExperimentConfig,
    pub n_windows: u64,
    pub seed: u64,
}

impl SimulationPlan {
    pub fn new(cfg: ExperimentConfig, n_windows: u64, seed: u64) -> Result<Self> {
        if n_windows == 0 {
            return Err(Error::InvalidConfig("n_windows must be >= 1".into()));
        }
        Ok(Self {
            cfg,
            n_windows,
            seed,
        })
    }
}

/// Per-window event counts for every detector combination of the bank.
#[derive(Debug, Clone)]
pub struct CountTally {
    bank: DetectorBank,
    window: f64,
    n_windows: u64,
    /// Exact-occupancy histogram over bank states (index = fired mask).
    state_counts: Vec<u64>,
}

impl CountTally {
    pub fn bank(&self) -> &DetectorBank {
        &self.bank
    }

    /// Coincidence window of the simulated experiment, in seconds.
    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn n_windows(&self) -> u64 {
        self.n_windows
    }

    /// Windows whose fired set was exactly the given bank state mask.
    pub fn state_counts(&self) -> &[u64] {
        &self.state_counts
    }

    /// Windows in which every detector of `on` fired (others unconstrained).
    pub fn count(&self, on: RoleSet) -> Result<u64> {
        let mask = self.bank.mask(on)?;
        Ok(self
            .state_counts
            .iter()
            .enumerate()
            .filter(|(s, _)| s & mask == mask)
            .map(|(_, c)| c)
            .sum())
    }

    /// Empirical per-window frequency of the combination.
    pub fn frequency(&self, on: RoleSet) -> Result<f64> {
        Ok(self.count(on)? as f64 / self.n_windows as f64)
    }

    /// Empirical rates (counts/s) for every combination of the bank.
    pub fn rates(&self) -> Result<RateSet> {
        let mut rates = RateSet::new();
        let per_window = 1.0 / (self.n_windows as f64 * self.window);
        for combo in self.bank.combinations() {
            let rate = self.count(combo)? as f64 * per_window;
            match combo.len() {
                1 => rates.set_single(combo.iter().next().expect("len 1"), rate),
                2 => rates.set_double(combo, rate),
                3 => rates.set_triple(combo, rate),
                _ => rates.set_fourfold(rate),
            }
        }
        Ok(rates)
    }
}

/// Cascade stage parameters for the per-pair sampler.
struct CascadeSampler {
    p_conv: f64,
    herald_eta: f64,
    herald_bit: usize,
}

/// Everything the per-window sampler needs, precomputed once.
struct Sampler {
    mean_pairs: Poisson<f64>,
    /// Detection of the photon every primary pair sends to a trigger:
    /// detector 1 for SPDC, detector 2 for CSPDC.
    primary_eta: f64,
    primary_bit: usize,
    /// Present for CSPDC: the companion photon converts with `p_conv` into
    /// a secondary pair heralded on detector 1.
    cascade: Option<CascadeSampler>,
    /// Beamsplitter thresholds: the signal hits A if u < a_th, B if
    /// a_th <= u < b_th, and is lost otherwise.
    a_th: f64,
    b_th: f64,
    a_bit: usize,
    b_bit: usize,
    dark_probs: Vec<f64>,
}

impl Sampler {
    fn new(cfg: &ExperimentConfig, bank: &DetectorBank) -> Result<Self> {
        let mu = cfg.mean_pairs_per_window();
        if mu > MAX_MEAN_PAIRS {
            return Err(Error::Resource(format!(
                "mean pair number {mu} per window exceeds {MAX_MEAN_PAIRS}"
            )));
        }
        let mean_pairs = Poisson::new(mu)
            .map_err(|e| Error::InvalidConfig(format!("invalid mean pair number {mu}: {e}")))?;
        let a_th = cfg.g2_a().eta() / 2.0;
        let b_th = a_th + cfg.g2_b().eta() / 2.0;
        let a_bit = bank.bit(crate::config::Role::G2A).expect("bank has A");
        let b_bit = bank.bit(crate::config::Role::G2B).expect("bank has B");
        let h1_bit = bank.bit(crate::config::Role::Herald1).expect("bank has 1");
        let (primary_eta, primary_bit, cascade) = match cfg.source_kind() {
            SourceKind::Spdc => (cfg.herald_stage2().eta(), h1_bit, None),
            SourceKind::Cspdc => {
                let h2_bit = bank.bit(crate::config::Role::Herald2).expect("bank has 2");
                (
                    cfg.herald_stage1().expect("cspdc").eta(),
                    h2_bit,
                    Some(CascadeSampler {
                        p_conv: cfg.cascade_efficiency().expect("cspdc"),
                        herald_eta: cfg.herald_stage2().eta(),
                        herald_bit: h1_bit,
                    }),
                )
            }
        };
        let dark_probs = (0..bank.len())
            .map(|j| bank.spec(j).dark_prob(cfg.window()))
            .collect();
        Ok(Self {
            mean_pairs,
            primary_eta,
            primary_bit,
            cascade,
            a_th,
            b_th,
            a_bit,
            b_bit,
            dark_probs,
        })
    }

    fn route_signal(&self, fired: &mut usize, u: f64) {
        if u < self.a_th {
            *fired |= 1 << self.a_bit;
        } else if u < self.b_th {
            *fired |= 1 << self.b_bit;
        }
    }

    /// Fired-detector mask for one window. Draw order is fixed: pair count,
    /// then per pair the trigger detection, (CSPDC) conversion, secondary
    /// herald and signal routing, and finally darks in bank order.
    fn sample_window(&self, rng: &mut ChaCha8Rng) -> usize {
        let mut fired = 0usize;
        let pairs = self.mean_pairs.sample(rng) as u64;
        for _ in 0..pairs {
            if rng.random::<f64>() < self.primary_eta {
                fired |= 1 << self.primary_bit;
            }
            match &self.cascade {
                None => {
                    let u = rng.random::<f64>();
                    self.route_signal(&mut fired, u);
                }
                Some(c) => {
                    if rng.random::<f64>() < c.p_conv {
                        if rng.random::<f64>() < c.herald_eta {
                            fired |= 1 << c.herald_bit;
                        }
                        let u = rng.random::<f64>();
                        self.route_signal(&mut fired, u);
                    }
                }
            }
        }
        for (j, q) in self.dark_probs.iter().enumerate() {
            if *q > 0.0 && rng.random::<f64>() < *q {
                fired |= 1 << j;
            }
        }
        fired
    }
}

/// Run the plan and tally every window. Deterministic in (seed, n_windows,
/// cfg) and independent of thread count.
pub fn simulate(plan: &SimulationPlan) -> Result<CountTally> {
    let bank = DetectorBank::from_config(&plan.cfg);
    let sampler = Sampler::new(&plan.cfg, &bank)?;
    let master = ChaCha8Rng::seed_from_u64(plan.seed);
    let dim = bank.dim();

    const SHARD: u64 = 1 << 16;
    let n_shards = plan.n_windows.div_ceil(SHARD);
    let state_counts = (0..n_shards)
        .into_par_iter()
        .map(|shard| {
            let lo = shard * SHARD;
            let hi = (lo + SHARD).min(plan.n_windows);
            let mut counts = vec![0u64; dim];
            let mut rng = master.clone();
            for w in lo..hi {
                rng.set_stream(w);
                rng.set_word_pos(0);
                counts[sampler.sample_window(&mut rng)] += 1;
            }
            counts
        })
        .reduce(
            || vec![0u64; dim],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );

    Ok(CountTally {
        bank,
        window: plan.cfg.window(),
        n_windows: plan.n_windows,
        state_counts,
    })
}

/// Plug-in g2 estimate from tallied frequencies, with a propagated binomial
/// standard error (counts treated as independent, a documented
/// approximation). A zero coincidence numerator is reported as g2 = 0 with
/// zero sigma; treat it as an upper bound at the one-count resolution.
pub fn g2_estimate(tally: &CountTally, kind: SourceKind) -> Result<G2Result> {
    use crate::config::Role;
    let (num, herald, da, db) = match kind {
        SourceKind::Spdc => (
            RoleSet::from_roles(&[Role::Herald1, Role::G2A, Role::G2B]),
            RoleSet::from_roles(&[Role::Herald1]),
            RoleSet::from_roles(&[Role::Herald1, Role::G2A]),
            RoleSet::from_roles(&[Role::Herald1, Role::G2B]),
        ),
        SourceKind::Cspdc => (
            RoleSet::from_roles(&Role::ALL),
            RoleSet::from_roles(&[Role::Herald1, Role::Herald2]),
            RoleSet::from_roles(&[Role::Herald1, Role::Herald2, Role::G2A]),
            RoleSet::from_roles(&[Role::Herald1, Role::Herald2, Role::G2B]),
        ),
    };
    let c_num = tally.count(num)?;
    let c_herald = tally.count(herald)?;
    let c_da = tally.count(da)?;
    let c_db = tally.count(db)?;
    if c_herald == 0 {
        return Err(Error::Estimation(
            "no heralding events were tallied; run more windows".into(),
        ));
    }
    if c_da == 0 || c_db == 0 {
        return Err(Error::Estimation(
            "no heralded coincidences were tallied; run more windows".into(),
        ));
    }

    let n = tally.n_windows() as f64;
    let f = |c: u64| c as f64 / n;
    let g2 = f(c_num) * f(c_herald) / (f(c_da) * f(c_db));

    let sigma = if c_num == 0 {
        0.0
    } else {
        // Relative variance of a binomial frequency: (1 - f) / (n f).
        let rel_var = |c: u64| {
            let fr = f(c);
            (1.0 - fr) / (n * fr)
        };
        g2 * (rel_var(c_num) + rel_var(c_herald) + rel_var(c_da) + rel_var(c_db)).sqrt()
    };

    Ok(G2Result {
        g2,
        model: ModelKind::MonteCarlo,
        rates: tally.rates()?,
        statistical_sigma: Some(sigma),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{DetectorSpec, Role};

    fn det(eta: f64, dark: f64) -> DetectorSpec {
        DetectorSpec::new(eta, dark).unwrap()
    }

    fn plan(cfg: ExperimentConfig, n: u64, seed: u64) -> SimulationPlan {
        SimulationPlan::new(cfg, n, seed).unwrap()
    }

    #[test]
    fn tallies_are_deterministic_across_runs_and_thread_counts() {
        let d = det(0.7, 20.0);
        let cfg = ExperimentConfig::spdc(5e-9, 1e6, d, d, d).unwrap();
        let p = plan(cfg, 200_000, 42);
        let a = simulate(&p).unwrap();
        let b = simulate(&p).unwrap();
        assert_eq!(a.state_counts(), b.state_counts());

        for threads in [1usize, 4] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            let c = pool.install(|| simulate(&p).unwrap());
            assert_eq!(a.state_counts(), c.state_counts());
        }
    }

    #[test]
    fn count_hierarchy_holds() {
        let d = det(0.6, 100.0);
        let cfg = ExperimentConfig::cspdc(5e-9, 1e7, 0.3, d, d, d, d).unwrap();
        let tally = simulate(&plan(cfg, 100_000, 7)).unwrap();
        let combos = tally.bank().combinations();
        for big in &combos {
            for small in &combos {
                if small.is_subset_of(*big) {
                    assert!(tally.count(*small).unwrap() >= tally.count(*big).unwrap());
                }
            }
        }
    }

    #[test]
    fn perfect_herald_fires_whenever_pairs_exist() {
        // eta = 1 everywhere, no darks: a window has clicks exactly when it
        // has pairs, and the herald fires in every such window.
        let d = det(1.0, 0.0);
        let cfg = ExperimentConfig::spdc(5e-9, 2e8, d, d, d).unwrap();
        let tally = simulate(&plan(cfg, 100_000, 3)).unwrap();
        let empty = tally.state_counts()[0];
        let herald_only = tally.state_counts()[0b001];
        assert_eq!(herald_only, 0, "the signal photon is never lost at eta 1");
        let c1 = tally.count(RoleSet::from_roles(&[Role::Herald1])).unwrap();
        assert_eq!(c1, tally.n_windows() - empty);
    }

    #[test]
    fn deterministic_triplet_estimate_is_zero_with_zero_sigma() {
        let d = det(1.0, 0.0);
        let cfg = ExperimentConfig::cspdc(5e-9, 2e4, 1.0, d, d, d, d).unwrap();
        let tally = simulate(&plan(cfg, 100_000, 11)).unwrap();
        // mu = 1e-4: no window holds two pairs at this length, so the
        // fourfold never fires and the estimate degenerates to zero.
        let est = g2_estimate(&tally, SourceKind::Cspdc).unwrap();
        assert_eq!(est.g2, 0.0);
        assert_eq!(est.statistical_sigma, Some(0.0));
    }

    #[test]
    fn zero_heralds_is_an_estimation_error() {
        let herald = det(0.0, 0.0);
        let gate = det(0.7, 20.0);
        let cfg = ExperimentConfig::spdc(5e-9, 1e5, herald, gate, gate).unwrap();
        let tally = simulate(&plan(cfg, 1000, 1)).unwrap();
        assert!(matches!(
            g2_estimate(&tally, SourceKind::Spdc),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn sigma_shrinks_with_window_count() {
        let d = det(0.7, 2000.0);
        let cfg = ExperimentConfig::spdc(5e-9, 5e7, d, d, d).unwrap();
        let s1 = g2_estimate(
            &simulate(&plan(cfg.clone(), 300_000, 5)).unwrap(),
            SourceKind::Spdc,
        )
        .unwrap()
        .statistical_sigma
        .unwrap();
        let s2 = g2_estimate(
            &simulate(&plan(cfg, 600_000, 5)).unwrap(),
            SourceKind::Spdc,
        )
        .unwrap()
        .statistical_sigma
        .unwrap();
        let shrink = s1 / s2;
        assert!(
            (shrink - std::f64::consts::SQRT_2).abs() / std::f64::consts::SQRT_2 < 0.2,
            "sigma ratio {shrink} not near sqrt(2)"
        );
    }

    #[test]
    fn empirical_rates_match_tally_counts() {
        let d = det(0.7, 20.0);
        let cfg = ExperimentConfig::spdc(5e-9, 1e6, d, d, d).unwrap();
        let tally = simulate(&plan(cfg, 50_000, 9)).unwrap();
        let rates = tally.rates().unwrap();
        let c1 = tally.count(RoleSet::from_roles(&[Role::Herald1])).unwrap();
        let expect = c1 as f64 / (50_000.0 * 5e-9);
        assert!((rates.single(Role::Herald1).unwrap() - expect).abs() < 1e-9);
    }
}
