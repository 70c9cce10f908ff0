//! Closed-form rate and g2 expressions for SPDC and cascaded-SPDC sources.
//!
//! These are the standard low-rate approximations: accidental coincidences
//! are neglected in the twofold rates, threefolds are built from twofold and
//! singles rates with a double-counting correction, and for the cascaded
//! source the singles at detector 1 are taken to be dark-dominated. The
//! matrix model in [`crate::detstate`] makes none of these approximations
//! and serves as the arbiter where they break down.

use crate::config::{ExperimentConfig, FigureOfMerit, Role, RoleSet, SourceKind};
use crate::error::{Error, Result};
use crate::rates::{G2Result, ModelKind, Optimum, RateSet};

/// Upper bound on the identical-detector improvement ratio, 3/2 + sqrt(2).
pub const MAX_IMPROVEMENT_RATIO: f64 = 1.5 + std::f64::consts::SQRT_2;

fn require_spdc(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.source_kind() != SourceKind::Spdc {
        return Err(Error::Domain(
            "this operation applies to SPDC configurations only".into(),
        ));
    }
    Ok(())
}

fn require_cspdc(cfg: &ExperimentConfig) -> Result<(f64, crate::config::DetectorSpec)> {
    match (cfg.cascade_efficiency(), cfg.herald_stage1()) {
        (Some(p), Some(h)) => Ok((p, *h)),
        _ => Err(Error::Domain(
            "this operation applies to CSPDC configurations only".into(),
        )),
    }
}

/// Singles, twofold and threefold rates of a directly pumped source.
///
/// S1 = N eta1 + d1, SA = SB = N etaAB / 2 + dAB, D1A = D1B = N eta1 etaAB / 2
/// and T1AB = D1A SB W + D1B SA W - D1A D1B W. The last term keeps a double
/// pair that fires all three detectors from being counted twice.
pub fn spdc_rates(cfg: &ExperimentConfig) -> Result<RateSet> {
    require_spdc(cfg)?;
    let gate = cfg.require_symmetric_g2()?;
    let n = cfg.pair_rate();
    let w = cfg.window();
    let herald = cfg.herald_stage2();

    let s1 = n * herald.eta() + herald.dark_rate();
    let s_gate = n * gate.eta() / 2.0 + gate.dark_rate();
    let d = n * herald.eta() * gate.eta() / 2.0;
    let t = 2.0 * d * s_gate * w - d * d * w;

    let mut rates = RateSet::new();
    rates.set_single(Role::Herald1, s1);
    rates.set_single(Role::G2A, s_gate);
    rates.set_single(Role::G2B, s_gate);
    rates.set_double(RoleSet::from_roles(&[Role::Herald1, Role::G2A]), d);
    rates.set_double(RoleSet::from_roles(&[Role::Herald1, Role::G2B]), d);
    rates.set_triple(
        RoleSet::from_roles(&[Role::Herald1, Role::G2A, Role::G2B]),
        t,
    );
    Ok(rates)
}

/// Heralded g2 of a directly pumped source,
/// (4 dAB / (N eta1 etaAB) + 2/eta1 - 1) (N W eta1 + W d1).
///
/// Algebraically identical to T1AB S1 / (D1A D1B) built from [`spdc_rates`].
pub fn g2_spdc(cfg: &ExperimentConfig) -> Result<G2Result> {
    let rates = spdc_rates(cfg)?;
    let gate = cfg.require_symmetric_g2()?;
    let n = cfg.pair_rate();
    let w = cfg.window();
    let herald = cfg.herald_stage2();
    if herald.eta() == 0.0 || gate.eta() == 0.0 {
        return Err(Error::Domain(
            "g2 diverges when the herald or beamsplitter efficiency is zero".into(),
        ));
    }

    let g2 = (4.0 * gate.dark_rate() / (n * herald.eta() * gate.eta()) + 2.0 / herald.eta() - 1.0)
        * (n * w * herald.eta() + w * herald.dark_rate());
    Ok(G2Result {
        g2,
        model: ModelKind::Analytic,
        rates,
        statistical_sigma: None,
    })
}

/// Minimum of the SPDC g2 over the pair rate, and its location.
///
/// g2_min = (2 / sqrt(HAB) + sqrt((2 - eta1) / H1))^2 with H = eta / (W d),
/// reached at n_opt = sqrt(4 dAB d1 / (etaAB eta1 (2 - eta1))). The closed
/// form is the exact minimizer of [`g2_spdc`]; with a dark-free herald or
/// dark-free beamsplitter detectors the infimum is only approached as the
/// pump vanishes, reported as `n_opt = 0` with the degenerate flag set.
pub fn g2_spdc_min(cfg: &ExperimentConfig) -> Result<Optimum> {
    require_spdc(cfg)?;
    let gate = cfg.require_symmetric_g2()?;
    let herald = cfg.herald_stage2();
    let w = cfg.window();
    if herald.eta() == 0.0 || gate.eta() == 0.0 {
        return Err(Error::Domain(
            "g2 diverges when the herald or beamsplitter efficiency is zero".into(),
        ));
    }

    let e1 = herald.eta();
    let h1 = herald.figure_of_merit(w).value();
    let hab = gate.figure_of_merit(w).value();
    let g2_min = (2.0 / hab.sqrt() + ((2.0 - e1) / h1).sqrt()).powi(2);

    let interior = herald.dark_rate() > 0.0 && gate.dark_rate() > 0.0;
    let n_opt = if interior {
        (4.0 * gate.dark_rate() * herald.dark_rate() / (gate.eta() * e1 * (2.0 - e1))).sqrt()
    } else {
        0.0
    };
    Ok(Optimum {
        n_opt,
        g2_min,
        degenerate: !interior,
    })
}

/// Twofold, threefold and fourfold rates of a cascaded source.
///
/// T12A = T12B = N P eta1 eta2 etaAB / 2; D12 = S2 d1 W + N P eta1 eta2 with
/// S2 = N eta2 + d2 (detections at detector 1 are taken dark-dominated);
/// F = 2 T12A dAB W + (1-(1-eta2)^2)(1-(1-eta1)^2) N^2 etaAB^2 W / 2.
///
/// The fourfold two-pair term is kept in exactly this published form even
/// though it carries no cascade-efficiency factor; the exact models are the
/// arbiters of the regime where it overestimates the fourfold rate.
pub fn cspdc_rates(cfg: &ExperimentConfig) -> Result<RateSet> {
    let (p, herald1) = require_cspdc(cfg)?;
    let gate = cfg.require_symmetric_g2()?;
    let n = cfg.pair_rate();
    let w = cfg.window();
    let herald2 = cfg.herald_stage2();
    let (e1, d1) = (herald2.eta(), herald2.dark_rate());
    let (e2, d2) = (herald1.eta(), herald1.dark_rate());
    let (eab, dab) = (gate.eta(), gate.dark_rate());

    let t = n * p * e1 * e2 * eab / 2.0;
    let s2 = n * e2 + d2;
    let d12 = s2 * d1 * w + n * p * e1 * e2;
    let two_pair = (1.0 - (1.0 - e2).powi(2)) * (1.0 - (1.0 - e1).powi(2)) * n * n * eab * eab * w
        / 2.0;
    let fourfold = 2.0 * t * dab * w + two_pair;

    let mut rates = RateSet::new();
    rates.set_single(Role::Herald1, n * p * e1 + d1);
    rates.set_single(Role::Herald2, s2);
    rates.set_single(Role::G2A, n * p * eab / 2.0 + dab);
    rates.set_single(Role::G2B, n * p * eab / 2.0 + dab);
    rates.set_double(RoleSet::from_roles(&[Role::Herald1, Role::Herald2]), d12);
    rates.set_triple(
        RoleSet::from_roles(&[Role::Herald1, Role::Herald2, Role::G2A]),
        t,
    );
    rates.set_triple(
        RoleSet::from_roles(&[Role::Herald1, Role::Herald2, Role::G2B]),
        t,
    );
    rates.set_fourfold(fourfold);
    Ok(rates)
}

/// Heralded g2 of a cascaded source, F D12 / (T12A T12B) from [`cspdc_rates`].
pub fn g2_cspdc(cfg: &ExperimentConfig) -> Result<G2Result> {
    let rates = cspdc_rates(cfg)?;
    let t_a = rates
        .triple(RoleSet::from_roles(&[
            Role::Herald1,
            Role::Herald2,
            Role::G2A,
        ]))
        .expect("cspdc_rates always sets the threefold rates");
    let t_b = rates
        .triple(RoleSet::from_roles(&[
            Role::Herald1,
            Role::Herald2,
            Role::G2B,
        ]))
        .expect("cspdc_rates always sets the threefold rates");
    if t_a == 0.0 || t_b == 0.0 {
        return Err(Error::Domain(
            "no heralding: the genuine threefold rate is zero".into(),
        ));
    }
    let d12 = rates
        .double(RoleSet::from_roles(&[Role::Herald1, Role::Herald2]))
        .expect("cspdc_rates always sets the twofold rate");
    let f = rates.fourfold().expect("cspdc_rates always sets fourfold");

    Ok(G2Result {
        g2: f * d12 / (t_a * t_b),
        model: ModelKind::Analytic,
        rates,
        statistical_sigma: None,
    })
}

/// Closed-form minimum of the CSPDC g2 over the pair rate,
/// (2/sqrt(HAB) sqrt(1 + 1/(P H1)) + sqrt((2-eta1)(2-eta2)/(H1 H2)))^2.
pub fn g2_cspdc_min_value(cfg: &ExperimentConfig) -> Result<f64> {
    let (p, herald1) = require_cspdc(cfg)?;
    let gate = cfg.require_symmetric_g2()?;
    if p == 0.0 {
        return Err(Error::Domain(
            "cascade efficiency is zero: the cascaded source never converts".into(),
        ));
    }
    let herald2 = cfg.herald_stage2();
    if herald2.dark_rate() <= 0.0 || herald1.dark_rate() <= 0.0 {
        return Err(Error::Domain(
            "the closed-form CSPDC optimum requires dark counts on both heralds".into(),
        ));
    }
    if herald2.eta() == 0.0 || herald1.eta() == 0.0 || gate.eta() == 0.0 {
        return Err(Error::Domain(
            "g2 diverges when a herald or beamsplitter efficiency is zero".into(),
        ));
    }
    let w = cfg.window();
    let (e1, e2) = (herald2.eta(), herald1.eta());
    let h1 = herald2.figure_of_merit(w).value();
    let h2 = herald1.figure_of_merit(w).value();
    let hab = gate.figure_of_merit(w).value();

    Ok((2.0 / hab.sqrt() * (1.0 + 1.0 / (p * h1)).sqrt()
        + ((2.0 - e1) * (2.0 - e2) / (h1 * h2)).sqrt())
    .powi(2))
}

/// Minimum of the CSPDC g2 over the pair rate.
///
/// The reported value is the closed form of [`g2_cspdc_min_value`]. `n_opt`
/// is found by numeric minimization of [`g2_cspdc`]; in regimes where that
/// expression's fourfold two-pair term dominates, the numeric curve and the
/// closed form disagree, which the validation tooling reports.
pub fn g2_cspdc_min(cfg: &ExperimentConfig) -> Result<Optimum> {
    let g2_min = g2_cspdc_min_value(cfg)?;
    let gate = cfg.require_symmetric_g2()?;

    if gate.dark_rate() == 0.0 {
        // The curve is monotone in N; the minimum is the vanishing-rate limit.
        return Ok(Optimum {
            n_opt: 0.0,
            g2_min,
            degenerate: true,
        });
    }

    let numeric = crate::optsweep::minimize_fn(
        |n| cfg.with_pair_rate(n).and_then(|c| g2_cspdc(&c)).map(|r| r.g2),
        (1e-6, 1e9),
    )?;
    Ok(Optimum {
        n_opt: numeric.n_opt,
        g2_min,
        degenerate: numeric.degenerate,
    })
}

/// General conversion-efficiency threshold above which cascading lowers the
/// optimal g2: (H1 + (2-eta1)/4 HAB + sqrt((2-eta1) HAB H1))^(-1).
///
/// Zero when HAB is infinite (dark-free beamsplitter detectors), where any
/// nonzero conversion efficiency is enough. Note that equating the two
/// closed-form minima directly yields the same expression without the
/// leading H1 term; see [`advantage_threshold_identical`] for the
/// identical-detector form consistent with [`improvement_ratio`].
pub fn advantage_threshold(h1: FigureOfMerit, hab: FigureOfMerit, eta1: f64) -> Result<f64> {
    if !h1.is_finite() {
        return Err(Error::Domain(
            "the advantage threshold requires a finite herald figure of merit".into(),
        ));
    }
    if !(0.0..=1.0).contains(&eta1) {
        return Err(Error::InvalidConfig(format!(
            "eta must lie in [0, 1], got {eta1}"
        )));
    }
    if !hab.is_finite() {
        return Ok(0.0);
    }
    let h1 = h1.value();
    let hab = hab.value();
    Ok(1.0 / (h1 + (2.0 - eta1) / 4.0 * hab + ((2.0 - eta1) * hab * h1).sqrt()))
}

/// Identical-detector advantage threshold, 1 / (H F(eta)).
///
/// This is the break-even point of [`improvement_ratio`]: the exact crossing
/// of the two closed-form minima converges to it for large H.
pub fn advantage_threshold_identical(eta: f64, h: FigureOfMerit) -> Result<f64> {
    let f = f_factor(eta)?;
    if !h.is_finite() {
        return Ok(0.0);
    }
    Ok(1.0 / (h.value() * f))
}

/// F(eta) = sqrt(2 - eta) + (2 - eta)/4, bounded by 1.25 and sqrt(2) + 1/2.
pub fn f_factor(eta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidConfig(format!(
            "eta must lie in [0, 1], got {eta}"
        )));
    }
    Ok((2.0 - eta).sqrt() + (2.0 - eta) / 4.0)
}

/// Identical-detector ratio of the SPDC to CSPDC optimal g2,
/// (1 + F(eta)) / (1 + 1/(P H)). Always below [`MAX_IMPROVEMENT_RATIO`].
pub fn improvement_ratio(eta: f64, p: f64, h: FigureOfMerit) -> Result<f64> {
    let f = f_factor(eta)?;
    if !(0.0..=1.0).contains(&p) || p == 0.0 {
        return Err(Error::InvalidConfig(format!(
            "conversion efficiency must lie in (0, 1], got {p}"
        )));
    }
    let ph = p * h.value();
    Ok((1.0 + f) / (1.0 + 1.0 / ph))
}

/// Optimal g2 values and their ratio when the beamsplitter detectors are
/// noiseless (dark-free), where only multi-pair emission contributes.
#[derive(Debug, Clone, Copy)]
pub struct PerfectGateLimits {
    /// SPDC limit (2 - eta1) / H1.
    pub g2_spdc_min: f64,
    /// CSPDC limit (2 - eta1)(2 - eta2) / (H1 H2).
    pub g2_cspdc_min: f64,
    /// Improvement H2 / (2 - eta2); infinite when a herald is dark-free.
    pub improvement: f64,
}

/// Limiting optima for dark-free beamsplitter detectors.
pub fn perfect_g2_detector_limits(cfg: &ExperimentConfig) -> Result<PerfectGateLimits> {
    let (_, herald1) = require_cspdc(cfg)?;
    let gate = cfg.require_symmetric_g2()?;
    if gate.dark_rate() != 0.0 {
        return Err(Error::Domain(
            "these limits hold only for dark-free beamsplitter detectors".into(),
        ));
    }
    let w = cfg.window();
    let herald2 = cfg.herald_stage2();
    let (e1, e2) = (herald2.eta(), herald1.eta());
    let h1 = herald2.figure_of_merit(w).value();
    let h2 = herald1.figure_of_merit(w).value();

    Ok(PerfectGateLimits {
        g2_spdc_min: (2.0 - e1) / h1,
        g2_cspdc_min: (2.0 - e1) * (2.0 - e2) / (h1 * h2),
        improvement: h2 / (2.0 - e2),
    })
}
