//! Experiment description: detectors, source topology and their invariants.
//!
//! Detector roles follow the usual labelling for heralded-source
//! characterization: detector 1 triggers on the output of the crystal whose
//! photons are measured, detector 2 (cascaded sources only) triggers on the
//! first crystal, and detectors A and B sit behind the 50:50 beamsplitter
//! used for the correlation measurement.

use std::fmt;

use crate::error::{Error, Result};

/// One bucket detector: Klyshko efficiency and dark-count rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorSpec {
    eta: f64,
    dark_rate: f64,
}

impl DetectorSpec {
    /// `eta` in [0, 1], `dark_rate` in counts/s (finite, non-negative).
    pub fn new(eta: f64, dark_rate: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) || !eta.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "detector eta must lie in [0, 1], got {eta}"
            )));
        }
        if !dark_rate.is_finite() || dark_rate < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "detector dark rate must be finite and >= 0, got {dark_rate}"
            )));
        }
        Ok(Self { eta, dark_rate })
    }

    /// Klyshko efficiency of the detection arm.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Dark-count rate in counts/s.
    pub fn dark_rate(&self) -> f64 {
        self.dark_rate
    }

    /// Probability of at least one dark count within a window of `window` seconds.
    ///
    /// Exact for Poissonian darks: 1 - exp(-d W). Reduces to d W when d W << 1.
    pub fn dark_prob(&self, window: f64) -> f64 {
        -(-self.dark_rate * window).exp_m1()
    }

    /// Figure of merit eta / (W d); infinite for a dark-free detector.
    pub fn figure_of_merit(&self, window: f64) -> FigureOfMerit {
        FigureOfMerit(self.eta / (window * self.dark_rate))
    }
}

/// Detector quality metric H = eta / (W d). Higher means lower noise impact.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct FigureOfMerit(f64);

impl FigureOfMerit {
    /// `value` must be > 0; infinity is allowed (dark-free detector).
    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "figure of merit must be > 0, got {value}"
            )));
        }
        Ok(Self(value))
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.is_finite()
    }
}

impl fmt::Display for FigureOfMerit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e}", self.0)
    }
}

/// Source topology: direct pumping or a cascade of two crystals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SourceKind {
    Spdc,
    Cspdc,
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceKind::Spdc => write!(f, "spdc"),
            SourceKind::Cspdc => write!(f, "cspdc"),
        }
    }
}

/// Detector role within the experiment. The discriminant fixes the bit
/// position used by state vectors and count tallies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    /// Trigger on the measured crystal output (the sole herald for SPDC).
    Herald1 = 0,
    /// Trigger on the first-stage crystal output (cascaded sources only).
    Herald2 = 1,
    /// Beamsplitter detector A.
    G2A = 2,
    /// Beamsplitter detector B.
    G2B = 3,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Herald1, Role::Herald2, Role::G2A, Role::G2B];

    /// Fixed bit position of this role in a [`RoleSet`] mask.
    pub fn bit(&self) -> u8 {
        *self as u8
    }

    pub fn label(&self) -> &'static str {
        match self {
            Role::Herald1 => "1",
            Role::Herald2 => "2",
            Role::G2A => "A",
            Role::G2B => "B",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A set of detector roles, stored as a bitmask over [`Role::bit`] positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct RoleSet(u8);

impl RoleSet {
    pub const EMPTY: RoleSet = RoleSet(0);

    pub fn from_roles(roles: &[Role]) -> Self {
        let mut mask = 0u8;
        for r in roles {
            mask |= 1 << r.bit();
        }
        RoleSet(mask)
    }

    pub fn insert(&mut self, role: Role) {
        self.0 |= 1 << role.bit();
    }

    pub fn with(mut self, role: Role) -> Self {
        self.insert(role);
        self
    }

    pub fn contains(&self, role: Role) -> bool {
        self.0 & (1 << role.bit()) != 0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn is_subset_of(&self, other: RoleSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    /// Roles in fixed bit order (1, 2, A, B).
    pub fn iter(&self) -> impl Iterator<Item = Role> + '_ {
        Role::ALL.into_iter().filter(|r| self.contains(*r))
    }

    pub fn bits(&self) -> u8 {
        self.0
    }
}

impl fmt::Display for RoleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("-");
        }
        for r in self.iter() {
            f.write_str(r.label())?;
        }
        Ok(())
    }
}

/// Cascade stage parameters, present only for CSPDC sources.
#[derive(Debug, Clone, Copy, PartialEq)]
struct CascadeStage {
    /// Conversion efficiency P of the second crystal, in [0, 1].
    efficiency: f64,
    /// Detector 2, heralding the first crystal output.
    herald_stage1: DetectorSpec,
}

/// Full source and detector topology for one experiment.
///
/// Invalid combinations are unrepresentable: an SPDC configuration carries
/// neither a cascade efficiency nor a stage-1 herald.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    window: f64,
    pair_rate: f64,
    herald_stage2: DetectorSpec,
    g2_a: DetectorSpec,
    g2_b: DetectorSpec,
    cascade: Option<CascadeStage>,
}

impl ExperimentConfig {
    /// Direct SPDC source heralded by detector 1.
    pub fn spdc(
        window: f64,
        pair_rate: f64,
        herald: DetectorSpec,
        g2_a: DetectorSpec,
        g2_b: DetectorSpec,
    ) -> Result<Self> {
        Self::validate_common(window, pair_rate)?;
        Ok(Self {
            window,
            pair_rate,
            herald_stage2: herald,
            g2_a,
            g2_b,
            cascade: None,
        })
    }

    /// Cascaded source: the first crystal output pumps a second crystal with
    /// conversion efficiency `cascade_efficiency`.
    pub fn cspdc(
        window: f64,
        pair_rate: f64,
        cascade_efficiency: f64,
        herald_stage2: DetectorSpec,
        herald_stage1: DetectorSpec,
        g2_a: DetectorSpec,
        g2_b: DetectorSpec,
    ) -> Result<Self> {
        Self::validate_common(window, pair_rate)?;
        if !(0.0..=1.0).contains(&cascade_efficiency) || !cascade_efficiency.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "cascade_efficiency must lie in [0, 1], got {cascade_efficiency}"
            )));
        }
        Ok(Self {
            window,
            pair_rate,
            herald_stage2,
            g2_a,
            g2_b,
            cascade: Some(CascadeStage {
                efficiency: cascade_efficiency,
                herald_stage1,
            }),
        })
    }

    fn validate_common(window: f64, pair_rate: f64) -> Result<()> {
        if !window.is_finite() || window <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "coincidence window must be > 0 s, got {window}"
            )));
        }
        if !pair_rate.is_finite() || pair_rate <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "pair rate must be > 0 /s, got {pair_rate}"
            )));
        }
        Ok(())
    }

    /// Coincidence window W in seconds.
    pub fn window(&self) -> f64 {
        self.window
    }

    /// Pair production rate N of the pumped crystal, in pairs/s.
    pub fn pair_rate(&self) -> f64 {
        self.pair_rate
    }

    /// Mean number of pairs per coincidence window, N W.
    pub fn mean_pairs_per_window(&self) -> f64 {
        self.pair_rate * self.window
    }

    pub fn source_kind(&self) -> SourceKind {
        if self.cascade.is_some() {
            SourceKind::Cspdc
        } else {
            SourceKind::Spdc
        }
    }

    /// Detector 1.
    pub fn herald_stage2(&self) -> &DetectorSpec {
        &self.herald_stage2
    }

    /// Detector 2, present only for CSPDC.
    pub fn herald_stage1(&self) -> Option<&DetectorSpec> {
        self.cascade.as_ref().map(|c| &c.herald_stage1)
    }

    /// Conversion efficiency P, present only for CSPDC.
    pub fn cascade_efficiency(&self) -> Option<f64> {
        self.cascade.as_ref().map(|c| c.efficiency)
    }

    pub fn g2_a(&self) -> &DetectorSpec {
        &self.g2_a
    }

    pub fn g2_b(&self) -> &DetectorSpec {
        &self.g2_b
    }

    /// Detector roles present in this topology, in bit order.
    pub fn roles(&self) -> Vec<Role> {
        match self.source_kind() {
            SourceKind::Spdc => vec![Role::Herald1, Role::G2A, Role::G2B],
            SourceKind::Cspdc => vec![Role::Herald1, Role::Herald2, Role::G2A, Role::G2B],
        }
    }

    pub fn detector(&self, role: Role) -> Option<&DetectorSpec> {
        match role {
            Role::Herald1 => Some(&self.herald_stage2),
            Role::Herald2 => self.herald_stage1(),
            Role::G2A => Some(&self.g2_a),
            Role::G2B => Some(&self.g2_b),
        }
    }

    /// Same topology with a different pair rate.
    pub fn with_pair_rate(&self, pair_rate: f64) -> Result<Self> {
        Self::validate_common(self.window, pair_rate)?;
        let mut cfg = self.clone();
        cfg.pair_rate = pair_rate;
        Ok(cfg)
    }

    /// Same topology with a different cascade efficiency. Errors for SPDC.
    pub fn with_cascade_efficiency(&self, efficiency: f64) -> Result<Self> {
        let Some(cascade) = self.cascade else {
            return Err(Error::InvalidConfig(
                "cascade_efficiency does not apply to an SPDC source".into(),
            ));
        };
        if !(0.0..=1.0).contains(&efficiency) || !efficiency.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "cascade_efficiency must lie in [0, 1], got {efficiency}"
            )));
        }
        let mut cfg = self.clone();
        cfg.cascade = Some(CascadeStage {
            efficiency,
            ..cascade
        });
        Ok(cfg)
    }

    /// Replace one detector.
    pub fn with_detector(&self, role: Role, spec: DetectorSpec) -> Result<Self> {
        let mut cfg = self.clone();
        match role {
            Role::Herald1 => cfg.herald_stage2 = spec,
            Role::Herald2 => match cfg.cascade.as_mut() {
                Some(c) => c.herald_stage1 = spec,
                None => {
                    return Err(Error::InvalidConfig(
                        "an SPDC source has no stage-1 herald".into(),
                    ))
                }
            },
            Role::G2A => cfg.g2_a = spec,
            Role::G2B => cfg.g2_b = spec,
        }
        Ok(cfg)
    }

    /// The direct-pumping counterpart: same window, same detector 1 and
    /// beamsplitter detectors, cascade stage removed.
    pub fn to_spdc(&self) -> Self {
        let mut cfg = self.clone();
        cfg.cascade = None;
        cfg
    }

    /// True when the beamsplitter detectors are identical.
    pub fn symmetric_g2(&self) -> bool {
        self.g2_a == self.g2_b
    }

    /// The common beamsplitter detector, or an error for asymmetric ones.
    /// The closed-form expressions assume d_A = d_B and eta_A = eta_B.
    pub fn require_symmetric_g2(&self) -> Result<DetectorSpec> {
        if self.symmetric_g2() {
            Ok(self.g2_a)
        } else {
            Err(Error::Domain(
                "analytic expressions require identical beamsplitter detectors".into(),
            ))
        }
    }

    /// Rate of produced-and-heralded photons: N eta1 for SPDC,
    /// N P eta1 eta2 for CSPDC (dark counts excluded).
    pub fn heralded_rate(&self) -> f64 {
        let e1 = self.herald_stage2.eta();
        match self.cascade {
            None => self.pair_rate * e1,
            Some(c) => self.pair_rate * c.efficiency * e1 * c.herald_stage1.eta(),
        }
    }

    /// Pair rate that yields the requested heralded photon rate.
    pub fn with_heralded_rate(&self, heralded: f64) -> Result<Self> {
        let per_pair = self.heralded_rate() / self.pair_rate;
        if per_pair <= 0.0 {
            return Err(Error::Domain(
                "heralded rate is zero for every pair rate in this configuration".into(),
            ));
        }
        self.with_pair_rate(heralded / per_pair)
    }
}
