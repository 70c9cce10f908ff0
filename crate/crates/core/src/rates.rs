//! Coincidence-rate bookkeeping and g2 results.

use std::collections::BTreeMap;
use std::fmt;

use crate::config::{Role, RoleSet};

/// Which model produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelKind {
    Analytic,
    Matrix,
    MonteCarlo,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Analytic => write!(f, "analytic"),
            ModelKind::Matrix => write!(f, "matrix"),
            ModelKind::MonteCarlo => write!(f, "mc"),
        }
    }
}

/// Singles, twofold, threefold and fourfold rates, all in counts/s.
///
/// Exact models populate every combination supported by the detector bank;
/// the closed-form expressions populate only the combinations they define.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RateSet {
    singles: BTreeMap<Role, f64>,
    doubles: BTreeMap<RoleSet, f64>,
    triples: BTreeMap<RoleSet, f64>,
    fourfold: Option<f64>,
}

impl RateSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_single(&mut self, role: Role, rate: f64) {
        self.singles.insert(role, rate);
    }

    pub fn set_double(&mut self, pair: RoleSet, rate: f64) {
        debug_assert_eq!(pair.len(), 2);
        self.doubles.insert(pair, rate);
    }

    pub fn set_triple(&mut self, triple: RoleSet, rate: f64) {
        debug_assert_eq!(triple.len(), 3);
        self.triples.insert(triple, rate);
    }

    pub fn set_fourfold(&mut self, rate: f64) {
        self.fourfold = Some(rate);
    }

    pub fn single(&self, role: Role) -> Option<f64> {
        self.singles.get(&role).copied()
    }

    pub fn double(&self, pair: RoleSet) -> Option<f64> {
        self.doubles.get(&pair).copied()
    }

    pub fn triple(&self, triple: RoleSet) -> Option<f64> {
        self.triples.get(&triple).copied()
    }

    pub fn fourfold(&self) -> Option<f64> {
        self.fourfold
    }

    pub fn singles(&self) -> impl Iterator<Item = (Role, f64)> + '_ {
        self.singles.iter().map(|(r, v)| (*r, *v))
    }

    pub fn doubles(&self) -> impl Iterator<Item = (RoleSet, f64)> + '_ {
        self.doubles.iter().map(|(r, v)| (*r, *v))
    }

    pub fn triples(&self) -> impl Iterator<Item = (RoleSet, f64)> + '_ {
        self.triples.iter().map(|(r, v)| (*r, *v))
    }

    /// Every stored rate keyed by its role combination, in deterministic
    /// order (singles, then doubles, triples, fourfold).
    pub fn iter_all(&self) -> Vec<(RoleSet, f64)> {
        let mut out = Vec::new();
        for (r, v) in &self.singles {
            out.push((RoleSet::from_roles(&[*r]), *v));
        }
        for (s, v) in &self.doubles {
            out.push((*s, *v));
        }
        for (s, v) in &self.triples {
            out.push((*s, *v));
        }
        if let Some(f) = self.fourfold {
            out.push((RoleSet::from_roles(&Role::ALL), f));
        }
        out
    }

    /// All stored rates are finite and non-negative.
    pub fn all_nonnegative(&self) -> bool {
        self.iter_all().iter().all(|(_, v)| v.is_finite() && *v >= 0.0)
    }
}

/// A g2 value together with the rates it was formed from.
#[derive(Debug, Clone)]
pub struct G2Result {
    /// Heralded second-order correlation, dimensionless and >= 0.
    pub g2: f64,
    pub model: ModelKind,
    pub rates: RateSet,
    /// One-standard-deviation statistical uncertainty, Monte Carlo only.
    pub statistical_sigma: Option<f64>,
}

/// Location and value of a g2 minimum over the pair rate.
#[derive(Debug, Clone, Copy)]
pub struct Optimum {
    /// Pair rate at the minimum, in pairs/s. Zero when the minimum is only
    /// approached at vanishing pump power.
    pub n_opt: f64,
    /// Minimal g2 value.
    pub g2_min: f64,
    /// Set when no interior optimum exists and the reported point sits on a
    /// search boundary (or at the vanishing-rate limit).
    pub degenerate: bool,
}
