//! Exact per-window click statistics via the bucket-detector state-vector
//! model.
//!
//! The joint state of k binary detectors is a probability vector over the
//! 2^k on/off configurations, with bit j of the state index holding detector
//! j of the bank (bank order is the fixed role order: 1, 2, A, B). Starting
//! from the all-off vector, one window is simulated by applying the dark
//! transition matrix once and the pair-interaction matrix once per produced
//! pair, then averaging over the Poisson-distributed pair number:
//!
//! P = sum_i p_i M_pair^i M_dark P0
//!
//! Both matrices only ever turn detectors on, so they are column-stochastic
//! and monotone, and they commute (each is a mixture of bitwise-OR maps).
//! All arithmetic is sums and products of non-negative numbers, which keeps
//! even deeply sub-dominant marginals (two-pair accidentals at tiny mean
//! pair numbers) accurate to relative precision.

use crate::config::{DetectorSpec, ExperimentConfig, Role, RoleSet, SourceKind};
use crate::error::{Error, Result};
use crate::rates::{G2Result, ModelKind, RateSet};

/// Default truncation bound on the neglected Poisson tail mass.
pub const DEFAULT_TRUNCATION_EPSILON: f64 = 1e-12;

/// Largest supported mean pair number per window. Beyond this the model is
/// far outside the low-rate operating regime and the matrix-power sum stops
/// being a sensible way to spend cycles.
pub const MAX_MEAN_PAIRS: f64 = 500.0;

/// An ordered bank of bucket detectors; state index bit j holds detector j.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorBank {
    roles: Vec<Role>,
    specs: Vec<DetectorSpec>,
}

impl DetectorBank {
    /// Bank for a configuration: (1, A, B) for SPDC, (1, 2, A, B) for CSPDC.
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        let roles = cfg.roles();
        let specs = roles
            .iter()
            .map(|r| *cfg.detector(*r).expect("roles() only lists present detectors"))
            .collect();
        Self { roles, specs }
    }

    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    /// Dimension of the state space, 2^k.
    pub fn dim(&self) -> usize {
        1 << self.roles.len()
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn spec(&self, index: usize) -> &DetectorSpec {
        &self.specs[index]
    }

    /// Bank bit position of a role, if present.
    pub fn bit(&self, role: Role) -> Option<usize> {
        self.roles.iter().position(|r| *r == role)
    }

    /// Bank state mask for a set of roles; errors on roles not in the bank.
    pub fn mask(&self, roles: RoleSet) -> Result<usize> {
        let mut mask = 0usize;
        for role in roles.iter() {
            match self.bit(role) {
                Some(b) => mask |= 1 << b,
                None => {
                    return Err(Error::Domain(format!(
                        "detector {role} is not part of this bank"
                    )))
                }
            }
        }
        Ok(mask)
    }

    /// All non-empty role combinations supported by this bank, in mask order.
    pub fn combinations(&self) -> Vec<RoleSet> {
        let mut out = Vec::with_capacity(self.dim() - 1);
        for mask in 1..self.dim() {
            let mut set = RoleSet::EMPTY;
            for (bit, role) in self.roles.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    set.insert(*role);
                }
            }
            out.push(set);
        }
        out
    }
}

/// Column-stochastic transition matrix on the detector state space.
/// Entry (to, from) is the probability of jumping from state `from` to
/// state `to`; entries are nonzero only for `to` a superset of `from`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    dim: usize,
    /// Row-major: entries[to * dim + from].
    entries: Vec<f64>,
}

impl TransitionMatrix {
    fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for s in 0..dim {
            m.entries[s * dim + s] = 1.0;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, to: usize, from: usize) -> f64 {
        self.entries[to * self.dim + from]
    }

    fn add(&mut self, to: usize, from: usize, p: f64) {
        self.entries[to * self.dim + from] += p;
    }

    /// Matrix-vector product M v.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim);
        let mut out = vec![0.0; self.dim];
        for from in 0..self.dim {
            let x = v[from];
            if x == 0.0 {
                continue;
            }
            for to in from..self.dim {
                out[to] += self.get(to, from) * x;
            }
        }
        out
    }

    /// Matrix product M other (applies `other` first).
    pub fn compose(&self, other: &TransitionMatrix) -> TransitionMatrix {
        assert_eq!(self.dim, other.dim);
        let mut out = Self::zeros(self.dim);
        for from in 0..self.dim {
            for mid in 0..self.dim {
                let a = other.get(mid, from);
                if a == 0.0 {
                    continue;
                }
                for to in 0..self.dim {
                    let b = self.get(to, mid);
                    if b != 0.0 {
                        out.add(to, from, b * a);
                    }
                }
            }
        }
        out
    }

    /// Largest deviation of any column sum from one.
    pub fn column_sum_deviation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for from in 0..self.dim {
            let sum: f64 = (0..self.dim).map(|to| self.get(to, from)).sum();
            worst = worst.max((sum - 1.0).abs());
        }
        worst
    }

    /// True when no transition ever turns an "on" detector back "off".
    pub fn is_monotone(&self) -> bool {
        for from in 0..self.dim {
            for to in 0..self.dim {
                if self.get(to, from) != 0.0 && from & !to != 0 {
                    return false;
                }
            }
        }
        true
    }
}

/// Probability vector over the on/off configurations of a detector bank.
#[derive(Debug, Clone)]
pub struct StateVector {
    bank: DetectorBank,
    probs: Vec<f64>,
}

impl StateVector {
    /// The all-off initial state.
    pub fn initial(bank: DetectorBank) -> Self {
        let mut probs = vec![0.0; bank.dim()];
        probs[0] = 1.0;
        Self { bank, probs }
    }

    pub fn bank(&self) -> &DetectorBank {
        &self.bank
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Probability that every detector in `on` fired, other detectors
    /// unconstrained: the sum over all configurations containing `on`.
    pub fn event_probability(&self, on: RoleSet) -> Result<f64> {
        let mask = self.bank.mask(on)?;
        Ok(self
            .probs
            .iter()
            .enumerate()
            .filter(|(s, _)| s & mask == mask)
            .map(|(_, p)| p)
            .sum())
    }
}

/// Dark-count transitions for one window: detector j fires independently
/// with probability 1 - exp(-d_j W), as a tensor product over detectors.
pub fn build_dark_matrix(bank: &DetectorBank, window: f64) -> Result<TransitionMatrix> {
    if !window.is_finite() || window <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "coincidence window must be > 0 s, got {window}"
        )));
    }
    let k = bank.len();
    let dim = bank.dim();
    let q: Vec<f64> = (0..k).map(|j| bank.spec(j).dark_prob(window)).collect();

    let mut m = TransitionMatrix::zeros(dim);
    for from in 0..dim {
        // Distribute over every subset of detectors firing darkly.
        for fire in 0..dim {
            let mut p = 1.0;
            for (j, qj) in q.iter().enumerate() {
                p *= if fire & (1 << j) != 0 { *qj } else { 1.0 - *qj };
            }
            if p != 0.0 {
                m.add(from | fire, from, p);
            }
        }
    }
    Ok(m)
}

/// One weighted way a single produced pair can end in the detectors.
struct PairOutcome {
    prob: f64,
    fire_mask: usize,
}

fn spdc_pair_outcomes(bank: &DetectorBank, cfg: &ExperimentConfig) -> Vec<PairOutcome> {
    let herald_bit = 1usize << bank.bit(Role::Herald1).expect("SPDC bank has detector 1");
    let a_bit = 1usize << bank.bit(Role::G2A).expect("bank has detector A");
    let b_bit = 1usize << bank.bit(Role::G2B).expect("bank has detector B");
    let e1 = cfg.herald_stage2().eta();
    // Both beamsplitter arms share the heralding efficiency by symmetry of
    // the analytic treatment; the exact model keeps them separate.
    let ea = cfg.g2_a().eta();
    let eb = cfg.g2_b().eta();

    let mut out = Vec::with_capacity(6);
    for (hp, hm) in [(e1, herald_bit), (1.0 - e1, 0)] {
        // The signal photon picks one beamsplitter arm or is lost; a single
        // photon can never fire both arms.
        for (sp, sm) in [(ea / 2.0, a_bit), (eb / 2.0, b_bit), (1.0 - (ea + eb) / 2.0, 0)] {
            if hp != 0.0 && sp != 0.0 {
                out.push(PairOutcome {
                    prob: hp * sp,
                    fire_mask: hm | sm,
                });
            }
        }
    }
    out
}

fn cspdc_pair_outcomes(bank: &DetectorBank, cfg: &ExperimentConfig) -> Vec<PairOutcome> {
    let h1_bit = 1usize << bank.bit(Role::Herald1).expect("CSPDC bank has detector 1");
    let h2_bit = 1usize << bank.bit(Role::Herald2).expect("CSPDC bank has detector 2");
    let a_bit = 1usize << bank.bit(Role::G2A).expect("bank has detector A");
    let b_bit = 1usize << bank.bit(Role::G2B).expect("bank has detector B");
    let e1 = cfg.herald_stage2().eta();
    let e2 = cfg
        .herald_stage1()
        .expect("CSPDC config has a stage-1 herald")
        .eta();
    let p_conv = cfg
        .cascade_efficiency()
        .expect("CSPDC config has a cascade efficiency");
    let ea = cfg.g2_a().eta();
    let eb = cfg.g2_b().eta();

    // One primary pair: one photon heads to detector 2, its partner converts
    // with probability P into a secondary pair (herald to detector 1, signal
    // to the beamsplitter) and otherwise produces nothing.
    let mut out = Vec::with_capacity(14);
    for (tp, tm) in [(e2, h2_bit), (1.0 - e2, 0)] {
        if tp == 0.0 {
            continue;
        }
        if p_conv < 1.0 {
            out.push(PairOutcome {
                prob: tp * (1.0 - p_conv),
                fire_mask: tm,
            });
        }
        if p_conv == 0.0 {
            continue;
        }
        for (hp, hm) in [(e1, h1_bit), (1.0 - e1, 0)] {
            for (sp, sm) in [(ea / 2.0, a_bit), (eb / 2.0, b_bit), (1.0 - (ea + eb) / 2.0, 0)] {
                if hp != 0.0 && sp != 0.0 {
                    out.push(PairOutcome {
                        prob: tp * p_conv * hp * sp,
                        fire_mask: tm | hm | sm,
                    });
                }
            }
        }
    }
    out
}

/// Detection transitions caused by one produced primary pair.
///
/// SPDC: the herald photon fires detector 1 with probability eta1 while the
/// signal photon fires A or B with probability eta/2 each (or is lost).
/// CSPDC: detector 2 fires with probability eta2; the companion photon
/// converts with probability P, after which the secondary pair routes as in
/// the SPDC case.
pub fn build_pair_matrix(bank: &DetectorBank, cfg: &ExperimentConfig) -> Result<TransitionMatrix> {
    if bank.roles() != cfg.roles().as_slice() {
        return Err(Error::Domain(
            "detector bank does not match the configured source topology".into(),
        ));
    }
    let outcomes = match cfg.source_kind() {
        SourceKind::Spdc => spdc_pair_outcomes(bank, cfg),
        SourceKind::Cspdc => cspdc_pair_outcomes(bank, cfg),
    };
    let mut m = TransitionMatrix::zeros(bank.dim());
    for from in 0..bank.dim() {
        for o in &outcomes {
            m.add(from | o.fire_mask, from, o.prob);
        }
    }
    Ok(m)
}

/// Poisson pair-number weights truncated at a bounded tail mass.
#[derive(Debug, Clone)]
pub struct PhotonNumberWeights {
    mean: f64,
    weights: Vec<f64>,
    truncation_epsilon: f64,
}

impl PhotonNumberWeights {
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Untruncated pmf values p_0 ..= p_n.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Truncation order n (the largest retained pair number).
    pub fn truncation(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn truncation_epsilon(&self) -> f64 {
        self.truncation_epsilon
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Poisson upper-tail mass P(X > n), summed forward from the (n+1)-th term
/// to avoid the catastrophic cancellation of 1 - cdf at tiny means.
fn poisson_tail(mean: f64, n: usize, p_next: f64) -> f64 {
    let mut term = p_next;
    let mut tail = 0.0;
    let mut i = n + 1;
    while term > 0.0 {
        tail += term;
        i += 1;
        term *= mean / i as f64;
        if i > n + 1 && term < tail * 1e-18 {
            tail += term / (1.0 - (mean / (i + 1) as f64).min(0.5));
            break;
        }
    }
    tail
}

/// Truncated Poisson weights: n is the smallest integer whose upper-tail
/// mass does not exceed `epsilon`; the weights are the raw pmf values.
pub fn poisson_weights(mean: f64, epsilon: f64) -> Result<PhotonNumberWeights> {
    if !mean.is_finite() || mean < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "mean pair number must be finite and >= 0, got {mean}"
        )));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "truncation epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    if mean > MAX_MEAN_PAIRS {
        return Err(Error::Resource(format!(
            "mean pair number {mean} per window exceeds {MAX_MEAN_PAIRS}; the model targets \
             the low-rate regime N W << 1, reduce the pair rate or the window"
        )));
    }

    let mut weights = vec![(-mean).exp()];
    if mean == 0.0 {
        return Ok(PhotonNumberWeights {
            mean,
            weights,
            truncation_epsilon: epsilon,
        });
    }
    loop {
        let n = weights.len() - 1;
        let p_next = weights[n] * mean / (n + 1) as f64;
        // The tail is at least its first term, so the full evaluation is
        // only needed once that term has dropped below the bound.
        if p_next <= epsilon && poisson_tail(mean, n, p_next) <= epsilon {
            break;
        }
        weights.push(p_next);
    }
    Ok(PhotonNumberWeights {
        mean,
        weights,
        truncation_epsilon: epsilon,
    })
}

/// Final detector-state vector: darks applied once, then the pair matrix i
/// times, averaged over the Poisson pair number with a running product.
pub fn final_state(cfg: &ExperimentConfig, epsilon: f64) -> Result<StateVector> {
    let bank = DetectorBank::from_config(cfg);
    let dark = build_dark_matrix(&bank, cfg.window())?;
    let pair = build_pair_matrix(&bank, cfg)?;
    final_state_with(&bank, &dark, &pair, cfg.mean_pairs_per_window(), epsilon)
}

fn final_state_with(
    bank: &DetectorBank,
    dark: &TransitionMatrix,
    pair: &TransitionMatrix,
    mean: f64,
    epsilon: f64,
) -> Result<StateVector> {
    let weights = poisson_weights(mean, epsilon)?;
    let base = StateVector::initial(bank.clone());
    let mut v = dark.apply(base.probs());
    let mut acc = vec![0.0; bank.dim()];
    for (i, w) in weights.weights().iter().enumerate() {
        for (a, x) in acc.iter_mut().zip(v.iter()) {
            *a += w * x;
        }
        if i < weights.truncation() {
            v = pair.apply(&v);
        }
    }
    Ok(StateVector {
        bank: bank.clone(),
        probs: acc,
    })
}

/// Cached matrices for repeated g2 evaluations at different pair rates.
/// Only the Poisson weights depend on the rate.
#[derive(Debug, Clone)]
pub struct MatrixEngine {
    cfg: ExperimentConfig,
    bank: DetectorBank,
    dark: TransitionMatrix,
    pair: TransitionMatrix,
    epsilon: f64,
}

impl MatrixEngine {
    pub fn new(cfg: &ExperimentConfig, epsilon: f64) -> Result<Self> {
        let bank = DetectorBank::from_config(cfg);
        let dark = build_dark_matrix(&bank, cfg.window())?;
        let pair = build_pair_matrix(&bank, cfg)?;
        Ok(Self {
            cfg: cfg.clone(),
            bank,
            dark,
            pair,
            epsilon,
        })
    }

    pub fn bank(&self) -> &DetectorBank {
        &self.bank
    }

    /// Truncation bound used for the g2 ratio at mean pair number `mu`.
    ///
    /// The marginals entering the ratio can be as small as the two-pair pmf
    /// mass (~mu^2/2), far below the raw state-vector scale, so the tail
    /// bound is tightened by that factor to keep the ratio accurate to the
    /// requested relative epsilon.
    fn ratio_epsilon(&self, mu: f64) -> f64 {
        (self.epsilon * (mu * mu * 2.5e-3).min(1.0)).max(1e-290)
    }

    pub fn final_state_at(&self, pair_rate: f64) -> Result<StateVector> {
        let mu = pair_rate * self.cfg.window();
        final_state_with(&self.bank, &self.dark, &self.pair, mu, self.epsilon)
    }

    /// g2 at the given pair rate, with the rates it was formed from.
    pub fn g2_result_at(&self, pair_rate: f64) -> Result<G2Result> {
        let mu = pair_rate * self.cfg.window();
        let state = final_state_with(
            &self.bank,
            &self.dark,
            &self.pair,
            mu,
            self.ratio_epsilon(mu),
        )?;
        let (numerator_set, herald_set, da_set, db_set) = match self.cfg.source_kind() {
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
        let p_num = state.event_probability(numerator_set)?;
        let p_herald = state.event_probability(herald_set)?;
        let p_da = state.event_probability(da_set)?;
        let p_db = state.event_probability(db_set)?;
        if p_da == 0.0 || p_db == 0.0 {
            return Err(Error::Domain(
                "no heralded coincidences are possible for this configuration".into(),
            ));
        }
        // The window factors cancel between numerator and denominator of the
        // rate form, so the ratio of per-window probabilities is already g2.
        let g2 = p_num * p_herald / (p_da * p_db);

        let w = self.cfg.window();
        let mut rates = RateSet::new();
        for combo in self.bank.combinations() {
            let rate = state.event_probability(combo)? / w;
            match combo.len() {
                1 => rates.set_single(combo.iter().next().expect("len 1"), rate),
                2 => rates.set_double(combo, rate),
                3 => rates.set_triple(combo, rate),
                _ => rates.set_fourfold(rate),
            }
        }
        Ok(G2Result {
            g2,
            model: ModelKind::Matrix,
            rates,
            statistical_sigma: None,
        })
    }

    pub fn g2_at(&self, pair_rate: f64) -> Result<f64> {
        self.g2_result_at(pair_rate).map(|r| r.g2)
    }
}

/// Heralded g2 from the state-vector model.
///
/// SPDC: g2 = p(1 A B) p(1) / (p(1 A) p(1 B)); CSPDC conditions on both
/// heralds: g2 = p(1 2 A B) p(1 2) / (p(1 2 A) p(1 2 B)).
pub fn g2_matrix(cfg: &ExperimentConfig, epsilon: f64) -> Result<G2Result> {
    MatrixEngine::new(cfg, epsilon)?.g2_result_at(cfg.pair_rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::DetectorSpec;
    use approx::assert_relative_eq;

    fn det(eta: f64, dark: f64) -> DetectorSpec {
        DetectorSpec::new(eta, dark).unwrap()
    }

    fn spdc(n: f64, eta: f64, dark: f64, w: f64) -> ExperimentConfig {
        let d = det(eta, dark);
        ExperimentConfig::spdc(w, n, d, d, d).unwrap()
    }

    #[test]
    fn bank_layout_follows_role_order() {
        let cfg = spdc(1e5, 0.7, 20.0, 5e-9);
        let bank = DetectorBank::from_config(&cfg);
        assert_eq!(bank.len(), 3);
        assert_eq!(bank.dim(), 8);
        assert_eq!(bank.bit(Role::Herald1), Some(0));
        assert_eq!(bank.bit(Role::G2A), Some(1));
        assert_eq!(bank.bit(Role::G2B), Some(2));
        assert_eq!(bank.bit(Role::Herald2), None);
        assert!(bank.mask(RoleSet::from_roles(&[Role::Herald2])).is_err());
        assert_eq!(bank.combinations().len(), 7);
    }

    #[test]
    fn dark_matrix_without_darks_is_identity() {
        let cfg = spdc(1e5, 0.7, 0.0, 5e-9);
        let bank = DetectorBank::from_config(&cfg);
        let m = build_dark_matrix(&bank, 5e-9).unwrap();
        assert_eq!(m, TransitionMatrix::identity(8));
    }

    #[test]
    fn dark_matrix_single_detector_half_chance() {
        // d W = ln 2 makes the dark-fire probability exactly one half.
        let w = 1e-6;
        let d = DetectorSpec::new(1.0, 2.0_f64.ln() / w).unwrap();
        let bank = DetectorBank {
            roles: vec![Role::Herald1],
            specs: vec![d],
        };
        let m = build_dark_matrix(&bank, w).unwrap();
        assert_relative_eq!(m.get(0, 0), 0.5, max_relative = 1e-12);
        assert_relative_eq!(m.get(1, 0), 0.5, max_relative = 1e-12);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.get(1, 1), 1.0);
    }

    #[test]
    fn dark_matrix_survival_is_product_of_exponentials() {
        let w = 1.0;
        let cfg = spdc(1e-3, 0.7, 1e-7, w);
        let bank = DetectorBank::from_config(&cfg);
        let m = build_dark_matrix(&bank, w).unwrap();
        // P(no dark anywhere) = exp(-3 d W) exactly.
        assert_relative_eq!(m.get(0, 0), (-3e-7_f64).exp(), epsilon = 1e-12);
        assert!(m.column_sum_deviation() < 1e-12);
        assert!(m.is_monotone());
    }

    #[test]
    fn pair_matrix_spdc_perfect_efficiencies() {
        let cfg = spdc(1e5, 1.0, 0.0, 5e-9);
        let bank = DetectorBank::from_config(&cfg);
        let m = build_pair_matrix(&bank, &cfg).unwrap();
        let v = m.apply(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        // Herald always fires; the signal photon picks exactly one arm.
        let p1 = v[0b001] + v[0b011] + v[0b101] + v[0b111];
        assert_relative_eq!(p1, 1.0, max_relative = 1e-12);
        assert_relative_eq!(v[0b011], 0.5, max_relative = 1e-12); // 1 and A
        assert_relative_eq!(v[0b101], 0.5, max_relative = 1e-12); // 1 and B
        assert_eq!(v[0b111], 0.0); // one photon cannot fire both arms
    }

    #[test]
    fn pair_matrix_cspdc_no_conversion_touches_only_detector_2() {
        let d = det(0.7, 20.0);
        let cfg = ExperimentConfig::cspdc(5e-9, 1e6, 0.0, d, d, d, d).unwrap();
        let bank = DetectorBank::from_config(&cfg);
        let m = build_pair_matrix(&bank, &cfg).unwrap();
        let h2 = 1 << bank.bit(Role::Herald2).unwrap();
        for from in 0..bank.dim() {
            for to in 0..bank.dim() {
                if m.get(to, from) != 0.0 {
                    assert!(to == from || to == from | h2);
                }
            }
        }
    }

    #[test]
    fn pair_matrix_cspdc_deterministic_triplet() {
        let d = det(1.0, 0.0);
        let cfg = ExperimentConfig::cspdc(5e-9, 1e6, 1.0, d, d, d, d).unwrap();
        let bank = DetectorBank::from_config(&cfg);
        let m = build_pair_matrix(&bank, &cfg).unwrap();
        let mut v = vec![0.0; 16];
        v[0] = 1.0;
        let v = m.apply(&v);
        // Both heralds fire and exactly one beamsplitter arm clicks.
        let h12a = 0b0111;
        let h12b = 0b1011;
        assert_relative_eq!(v[h12a], 0.5, max_relative = 1e-12);
        assert_relative_eq!(v[h12b], 0.5, max_relative = 1e-12);
        assert_relative_eq!(v[h12a] + v[h12b], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn pair_matrix_rejects_mismatched_bank() {
        let cfg_s = spdc(1e5, 0.7, 20.0, 5e-9);
        let d = det(0.7, 20.0);
        let cfg_c = ExperimentConfig::cspdc(5e-9, 1e6, 1e-6, d, d, d, d).unwrap();
        let bank_c = DetectorBank::from_config(&cfg_c);
        assert!(build_pair_matrix(&bank_c, &cfg_s).is_err());
    }

    #[test]
    fn dark_and_pair_matrices_commute() {
        let d = det(0.63, 180.0);
        let cfg = ExperimentConfig::cspdc(3e-9, 1e6, 0.2, d, det(0.4, 55.0), det(0.8, 10.0), d)
            .unwrap();
        let bank = DetectorBank::from_config(&cfg);
        let dark = build_dark_matrix(&bank, cfg.window()).unwrap();
        let pair = build_pair_matrix(&bank, &cfg).unwrap();
        let ab = dark.compose(&pair);
        let ba = pair.compose(&dark);
        for from in 0..bank.dim() {
            for to in 0..bank.dim() {
                assert!((ab.get(to, from) - ba.get(to, from)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn poisson_weights_zero_mean() {
        let w = poisson_weights(0.0, 1e-12).unwrap();
        assert_eq!(w.weights(), &[1.0]);
        assert_eq!(w.truncation(), 0);
    }

    #[test]
    fn poisson_weights_unit_mean() {
        let w = poisson_weights(1.0, 1e-12).unwrap();
        assert_relative_eq!(w.weights()[0], (-1.0_f64).exp(), max_relative = 1e-14);
        // The tail criterion lands at n = 14 for a unit mean.
        assert_eq!(w.truncation(), 14);
        assert!(1.0 - w.total() <= 1e-12);
    }

    #[test]
    fn poisson_weights_tail_criterion_is_tight() {
        for (mean, eps) in [(0.3, 1e-9), (2.0, 1e-12), (1e-4, 1e-12), (8.0, 1e-6)] {
            let w = poisson_weights(mean, eps).unwrap();
            let n = w.truncation();
            let p_next = w.weights()[n] * mean / (n + 1) as f64;
            assert!(poisson_tail(mean, n, p_next) <= eps);
            if n > 0 {
                // One order lower must violate the bound.
                assert!(poisson_tail(mean, n - 1, w.weights()[n]) > eps);
            }
        }
    }

    #[test]
    fn poisson_weights_reject_bad_inputs() {
        assert!(poisson_weights(-1.0, 1e-12).is_err());
        assert!(poisson_weights(1.0, 0.0).is_err());
        assert!(poisson_weights(1.0, 1.0).is_err());
        assert!(matches!(
            poisson_weights(MAX_MEAN_PAIRS * 2.0, 1e-12),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn final_state_reduces_to_initial_without_events() {
        let cfg = spdc(1e-20, 0.7, 0.0, 5e-9);
        let state = final_state(&cfg, 1e-12).unwrap();
        assert_relative_eq!(state.probs()[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn final_state_small_mean_marginals_match_closed_forms() {
        // p(1 on) = 1 - (1 - q1) exp(-mu eta1) = 1 - exp(-(d1 W + mu eta1)).
        let w = 1.0;
        let n = 1e-3;
        let d1 = DetectorSpec::new(0.7, 1e-7).unwrap();
        let gate = DetectorSpec::new(0.7, 0.0).unwrap();
        let cfg = ExperimentConfig::spdc(w, n, d1, gate, gate).unwrap();
        let state = final_state(&cfg, 1e-18).unwrap();
        let p1 = state
            .event_probability(RoleSet::from_roles(&[Role::Herald1]))
            .unwrap();
        let expected = -(-(1e-7 + 1e-3 * 0.7_f64)).exp_m1();
        assert_relative_eq!(p1, expected, max_relative = 1e-12);
    }

    #[test]
    fn event_probability_of_empty_set_is_one() {
        let cfg = spdc(1e5, 0.7, 20.0, 5e-9);
        let state = final_state(&cfg, 1e-12).unwrap();
        assert_relative_eq!(
            state.event_probability(RoleSet::EMPTY).unwrap(),
            state.total(),
            max_relative = 1e-14
        );
        assert!(state.total() <= 1.0 + 1e-12 && state.total() >= 1.0 - 1e-12);
    }

    #[test]
    fn g2_matrix_vanishes_with_perfect_detectors_at_low_rate() {
        let d = det(1.0, 0.0);
        let w = 5e-9;
        let g_hi = g2_matrix(
            &ExperimentConfig::spdc(w, 1e-4 / w, d, d, d).unwrap(),
            1e-12,
        )
        .unwrap()
        .g2;
        let g_lo = g2_matrix(
            &ExperimentConfig::spdc(w, 1e-5 / w, d, d, d).unwrap(),
            1e-12,
        )
        .unwrap()
        .g2;
        assert!(g_hi < 3e-4);
        // Contamination scales linearly with the mean pair number.
        assert_relative_eq!(g_hi / g_lo, 10.0, max_relative = 0.05);
    }

    #[test]
    fn g2_matrix_errors_when_heralding_impossible() {
        let herald = det(0.0, 0.0);
        let gate = det(0.7, 20.0);
        let cfg = ExperimentConfig::spdc(5e-9, 1e5, herald, gate, gate).unwrap();
        assert!(matches!(g2_matrix(&cfg, 1e-12), Err(Error::Domain(_))));
    }

    #[test]
    fn g2_matrix_truncation_robustness() {
        let cfg = spdc(1e6, 0.7, 20.0, 5e-9);
        let eps = 1e-10;
        let a = g2_matrix(&cfg, eps).unwrap().g2;
        let b = g2_matrix(&cfg, eps / 2.0).unwrap().g2;
        assert!((a - b).abs() / b < 10.0 * eps);
    }

    #[test]
    fn g2_matrix_agrees_with_spdc_analytic_in_regime() {
        // N W = 5e-4, d W = 1e-7: the low-rate approximations hold well.
        let cfg = spdc(1e5, 0.7, 20.0, 5e-9);
        let matrix = g2_matrix(&cfg, 1e-12).unwrap().g2;
        let analytic = crate::analytic::g2_spdc(&cfg).unwrap().g2;
        assert_relative_eq!(matrix, analytic, max_relative = 0.01);
    }

    #[test]
    fn g2_matrix_resolves_two_pair_floor_at_tiny_rates() {
        // With dark-free beamsplitter detectors the numerator exists only at
        // two produced pairs; the scaled truncation must keep those terms.
        let herald = det(0.7, 10.0);
        let gate = det(1.0, 0.0);
        let w = 2e-9;
        let cfg = ExperimentConfig::spdc(w, 0.01 / 0.7, herald, gate, gate).unwrap();
        let g = g2_matrix(&cfg, 1e-12).unwrap().g2;
        // Dark-driven false heralds dominate: g2 ~ (2 - eta1) W d1 / eta1.
        assert_relative_eq!(g, 3.718e-8, max_relative = 0.01);
    }
}
