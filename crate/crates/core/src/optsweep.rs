//! Numeric minimization of g2 over the pair rate, plateau extraction,
//! advantage-threshold crossing and parameter sweeps.
//!
//! All searches over the pair rate run in log space; the curves span many
//! decades and are plotted log-log.

use rayon::prelude::*;

use crate::analytic;
use crate::config::{ExperimentConfig, SourceKind};
use crate::detstate::{MatrixEngine, MAX_MEAN_PAIRS};
use crate::error::{Error, Result};
use crate::rates::{ModelKind, Optimum};

/// Deterministic model choices for optimization and sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalModel {
    Analytic,
    Matrix { epsilon: f64 },
}

impl EvalModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            EvalModel::Analytic => ModelKind::Analytic,
            EvalModel::Matrix { .. } => ModelKind::Matrix,
        }
    }
}

/// A g2-vs-pair-rate evaluator with per-model state built once. The matrix
/// engine caches its transition matrices, which do not depend on the rate.
enum Engine {
    Analytic(ExperimentConfig),
    Matrix(MatrixEngine),
}

impl Engine {
    fn new(model: &EvalModel, base: &ExperimentConfig) -> Result<Self> {
        match model {
            EvalModel::Analytic => Ok(Engine::Analytic(base.clone())),
            EvalModel::Matrix { epsilon } => Ok(Engine::Matrix(MatrixEngine::new(base, *epsilon)?)),
        }
    }

    fn g2_at(&self, pair_rate: f64) -> Result<f64> {
        match self {
            Engine::Analytic(cfg) => {
                let cfg = cfg.with_pair_rate(pair_rate)?;
                match cfg.source_kind() {
                    SourceKind::Spdc => analytic::g2_spdc(&cfg).map(|r| r.g2),
                    SourceKind::Cspdc => analytic::g2_cspdc(&cfg).map(|r| r.g2),
                }
            }
            Engine::Matrix(engine) => engine.g2_at(pair_rate),
        }
    }
}

/// Evaluate g2 for a configuration under the chosen model.
pub fn g2_eval(model: &EvalModel, cfg: &ExperimentConfig) -> Result<f64> {
    Engine::new(model, cfg)?.g2_at(cfg.pair_rate())
}

/// Pair-rate search range appropriate for the model: the matrix model is
/// capped so the mean pair number stays well inside its operating regime.
pub fn default_rate_range(model: &EvalModel, cfg: &ExperimentConfig) -> (f64, f64) {
    match model {
        EvalModel::Analytic => (1e-3, 1e12),
        EvalModel::Matrix { .. } => {
            (1e-3, (MAX_MEAN_PAIRS * 0.04 / cfg.window()).min(1e12))
        }
    }
}

const COARSE_PER_DECADE: usize = 10;
const REFINE_PER_DECADE: usize = 50;
/// Relative tolerance on the minimizer location.
const GOLDEN_REL_TOL: f64 = 1e-6;
const MAX_EXPANSIONS: usize = 3;

fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    let decades = (b - a) / std::f64::consts::LN_10;
    let points = ((decades * per_decade as f64).ceil() as usize).max(2) + 1;
    (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

/// Golden-section minimization of `f` over ln-space bracket [a, b].
fn golden_section_log(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c.exp());
    let mut fd = f(d.exp());
    while (b - a) > GOLDEN_REL_TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c.exp());
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d.exp());
        }
    }
    if fc < fd {
        (c.exp(), fc)
    } else {
        (d.exp(), fd)
    }
}

/// Minimize an arbitrary positive curve over the pair rate.
///
/// Coarse log grid, adaptively condensed to at least [`REFINE_PER_DECADE`]
/// points per decade around the rough minimum, then golden-section refined
/// in log space to a relative rate tolerance of 1e-6. The range auto-expands
/// up to three times per side when the minimum sits on a boundary; a curve
/// that stays monotone over the expanded range yields a boundary optimum
/// with the degenerate flag set.
pub fn minimize_fn(f: impl Fn(f64) -> Result<f64>, n_range: (f64, f64)) -> Result<Optimum> {
    let (mut lo, mut hi) = n_range;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "search range must satisfy 0 < lo < hi, got ({lo}, {hi})"
        )));
    }

    // Error points (outside a model's operating regime) drop out of the
    // search; only an all-error grid propagates a failure.
    let eval = |n: f64| f(n).ok();
    let mut expansions = 0usize;
    loop {
        let grid = log_grid(lo, hi, COARSE_PER_DECADE);
        let values: Vec<Option<f64>> = grid.iter().map(|n| eval(*n)).collect();
        let finite: Vec<(usize, f64)> = values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|x| (i, x)))
            .collect();
        if finite.is_empty() {
            return Err(f(grid[0]).err().unwrap_or(Error::Domain(
                "g2 could not be evaluated anywhere in the search range".into(),
            )));
        }
        let (best_i, best_v) = finite
            .iter()
            .copied()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("finite is non-empty");

        let at_low_edge = best_i == finite.first().expect("non-empty").0;
        let at_high_edge = best_i == finite.last().expect("non-empty").0;
        if (at_low_edge || at_high_edge) && expansions < MAX_EXPANSIONS {
            if at_low_edge {
                lo = (lo / 100.0).max(1e-300);
            }
            if at_high_edge {
                hi = (hi * 100.0).min(1e300);
            }
            expansions += 1;
            continue;
        }
        if at_low_edge || at_high_edge {
            return Ok(Optimum {
                n_opt: grid[best_i],
                g2_min: best_v,
                degenerate: true,
            });
        }

        // Condense around the rough minimum, then polish.
        let refine_lo = (grid[best_i] / 10.0).max(lo);
        let refine_hi = (grid[best_i] * 10.0).min(hi);
        let refined = log_grid(refine_lo, refine_hi, REFINE_PER_DECADE);
        let (ri, _) = refined
            .iter()
            .enumerate()
            .filter_map(|(i, n)| eval(*n).map(|v| (i, v)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("refined grid contains the coarse minimum");
        let bracket_lo = refined[ri.saturating_sub(1)].ln();
        let bracket_hi = refined[(ri + 1).min(refined.len() - 1)].ln();
        let penalized = |n: f64| f(n).unwrap_or(f64::INFINITY);
        let (n_opt, g2_min) = golden_section_log(&penalized, bracket_lo, bracket_hi);
        return Ok(Optimum {
            n_opt,
            g2_min,
            degenerate: false,
        });
    }
}

/// Minimize g2 over the pair rate for the chosen model.
pub fn minimize_g2(
    model: &EvalModel,
    base: &ExperimentConfig,
    n_range: (f64, f64),
) -> Result<Optimum> {
    let engine = Engine::new(model, base)?;
    minimize_fn(|n| engine.g2_at(n), n_range)
}

/// Pair-rate interval on which g2 stays within (1 + delta) of its minimum.
#[derive(Debug, Clone, Copy)]
pub struct PlateauInterval {
    pub lo: f64,
    pub hi: f64,
    pub delta: f64,
}

impl PlateauInterval {
    /// Width in decades, log10(hi / lo).
    pub fn decades(&self) -> f64 {
        (self.hi / self.lo).log10()
    }

    pub fn contains(&self, n: f64) -> bool {
        self.lo <= n && n <= self.hi
    }
}

/// Find the plateau around the g2 minimum of the chosen model.
///
/// Bisects in log space for the leftmost and rightmost rate at which g2
/// meets (1 + delta) g2_min. Errors with a degenerate-optimum condition
/// when the minimum itself sits on a search boundary.
pub fn plateau(model: &EvalModel, base: &ExperimentConfig, delta: f64) -> Result<PlateauInterval> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "plateau delta must be finite and >= 0, got {delta}"
        )));
    }
    let engine = Engine::new(model, base)?;
    let optimum = minimize_fn(|n| engine.g2_at(n), default_rate_range(model, base))?;
    plateau_around(&engine, &optimum, delta)
}

fn plateau_around(engine: &Engine, optimum: &Optimum, delta: f64) -> Result<PlateauInterval> {
    if optimum.degenerate {
        return Err(Error::DegenerateOptimum(
            "the g2 minimum sits on a search boundary, so no plateau is defined".into(),
        ));
    }
    if delta == 0.0 {
        return Ok(PlateauInterval {
            lo: optimum.n_opt,
            hi: optimum.n_opt,
            delta,
        });
    }
    let target = (1.0 + delta) * optimum.g2_min;
    // Evaluation failures outside the model regime count as above target.
    let above = |n: f64| engine.g2_at(n).map(|g| g > target).unwrap_or(true);

    let edge = |direction: f64| -> f64 {
        // March outward from the optimum until the curve exceeds the target,
        // then bisect the bracketing step.
        let mut inside = optimum.n_opt.ln();
        let step = direction * std::f64::consts::LN_10;
        let mut outside = inside;
        for _ in 0..320 {
            outside += step;
            if above(outside.exp()) {
                break;
            }
            inside = outside;
        }
        if !above(outside.exp()) {
            // The curve never left the band within the searchable domain.
            return outside.exp();
        }
        for _ in 0..80 {
            let mid = 0.5 * (inside + outside);
            if above(mid.exp()) {
                outside = mid;
            } else {
                inside = mid;
            }
        }
        inside.exp()
    };

    let lo = edge(-1.0);
    let hi = edge(1.0);
    Ok(PlateauInterval { lo, hi, delta })
}

/// Sampled g2 curve over the pair rate with its minimum and plateau.
#[derive(Debug, Clone)]
pub struct G2Curve {
    /// (pair rate, g2) samples on the requested grid.
    pub samples: Vec<(f64, f64)>,
    pub optimum: Optimum,
    /// Absent when the optimum is degenerate.
    pub plateau: Option<PlateauInterval>,
}

/// Sample g2 over a log grid of pair rates and locate minimum and plateau.
pub fn g2_curve(
    model: &EvalModel,
    base: &ExperimentConfig,
    n_range: (f64, f64),
    points: usize,
    delta: f64,
) -> Result<G2Curve> {
    if points < 2 {
        return Err(Error::InvalidConfig("a curve needs at least 2 points".into()));
    }
    let engine = Engine::new(model, base)?;
    let (lo, hi) = n_range;
    let (a, b) = (lo.ln(), hi.ln());
    let samples: Vec<(f64, f64)> = (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .filter_map(|n| engine.g2_at(n).ok().map(|g| (n, g)))
        .collect();
    let optimum = minimize_fn(|n| engine.g2_at(n), n_range)?;
    let plateau = plateau_around(&engine, &optimum, delta).ok();
    Ok(G2Curve {
        samples,
        optimum,
        plateau,
    })
}

/// Swept quantity for [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    /// Evaluate g2 point by point over the pair rate.
    PairRate,
    /// Optimal g2 as a function of the conversion efficiency (CSPDC only).
    CascadeEfficiency,
    /// Optimal g2 as a function of a common figure of merit: every
    /// detector's dark rate is set to eta / (W H).
    FigureOfMerit,
    /// Optimal g2 as a function of a common detector efficiency.
    Eta,
}

impl SweepParameter {
    pub fn column(&self) -> &'static str {
        match self {
            SweepParameter::PairRate => "pair_rate_hz",
            SweepParameter::CascadeEfficiency => "cascade_efficiency",
            SweepParameter::FigureOfMerit => "figure_of_merit",
            SweepParameter::Eta => "eta",
        }
    }
}

impl std::str::FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pair_rate" => Ok(SweepParameter::PairRate),
            "cascade_efficiency" => Ok(SweepParameter::CascadeEfficiency),
            "figure_of_merit" => Ok(SweepParameter::FigureOfMerit),
            "eta" => Ok(SweepParameter::Eta),
            other => Err(Error::InvalidConfig(format!(
                "unknown sweep parameter '{other}' (expected pair_rate, \
                 cascade_efficiency, figure_of_merit or eta)"
            ))),
        }
    }
}

/// Grid scale for [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Log,
    Linear,
}

/// A parameter sweep request.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub from: f64,
    pub to: f64,
    pub points: usize,
    pub scale: Scale,
    pub model: EvalModel,
    pub base: ExperimentConfig,
}

/// One sweep output row. Exactly one of `g2` (pair-rate sweeps) or the
/// minimized fields is populated on success; `error` carries per-point
/// failures. Plateau bounds are reported for the matrix model only, where
/// the sampled curve is the physical prediction.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub model: ModelKind,
    pub source: SourceKind,
    pub g2: Option<f64>,
    pub n_opt: Option<f64>,
    pub g2_min: Option<f64>,
    pub plateau_lo: Option<f64>,
    pub plateau_hi: Option<f64>,
    pub sigma: Option<f64>,
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(value: f64, model: ModelKind, source: SourceKind, err: Error) -> Self {
        SweepRow {
            value,
            model,
            source,
            g2: None,
            n_opt: None,
            g2_min: None,
            plateau_lo: None,
            plateau_hi: None,
            sigma: None,
            error: Some(err.to_string()),
        }
    }
}

fn sweep_grid(spec: &SweepSpec) -> Result<Vec<f64>> {
    if !(spec.from < spec.to) || !spec.from.is_finite() || !spec.to.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "sweep range must satisfy from < to, got ({}, {})",
            spec.from, spec.to
        )));
    }
    if spec.points < 2 {
        return Err(Error::InvalidConfig("a sweep needs at least 2 points".into()));
    }
    if spec.scale == Scale::Log && spec.from <= 0.0 {
        return Err(Error::InvalidConfig(
            "a log-scale sweep requires from > 0".into(),
        ));
    }
    let n = spec.points;
    Ok((0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            match spec.scale {
                Scale::Linear => spec.from + (spec.to - spec.from) * t,
                Scale::Log => (spec.from.ln() + (spec.to.ln() - spec.from.ln()) * t).exp(),
            }
        })
        .collect())
}

fn apply_parameter(base: &ExperimentConfig, p: SweepParameter, v: f64) -> Result<ExperimentConfig> {
    match p {
        SweepParameter::PairRate => base.with_pair_rate(v),
        SweepParameter::CascadeEfficiency => base.with_cascade_efficiency(v),
        SweepParameter::Eta => {
            let mut cfg = base.clone();
            for role in base.roles() {
                let dark = base.detector(role).expect("role present").dark_rate();
                cfg = cfg.with_detector(role, crate::config::DetectorSpec::new(v, dark)?)?;
            }
            Ok(cfg)
        }
        SweepParameter::FigureOfMerit => {
            if !(v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "figure of merit must be > 0, got {v}"
                )));
            }
            let mut cfg = base.clone();
            for role in base.roles() {
                let det = *base.detector(role).expect("role present");
                let dark = det.eta() / (base.window() * v);
                cfg = cfg.with_detector(
                    role,
                    crate::config::DetectorSpec::new(det.eta(), dark)?,
                )?;
            }
            Ok(cfg)
        }
    }
}

fn minimized_row(
    model: &EvalModel,
    cfg: &ExperimentConfig,
    value: f64,
    source: SourceKind,
) -> SweepRow {
    let mut row = SweepRow {
        value,
        model: model.kind(),
        source,
        g2: None,
        n_opt: None,
        g2_min: None,
        plateau_lo: None,
        plateau_hi: None,
        sigma: None,
        error: None,
    };
    match model {
        EvalModel::Analytic => {
            // Closed-form optima; for the cascaded source the reported
            // minimum is the closed form while n_opt tracks the numeric
            // curve (see analytic::g2_cspdc_min).
            let opt = match source {
                SourceKind::Spdc => analytic::g2_spdc_min(cfg),
                SourceKind::Cspdc => analytic::g2_cspdc_min(cfg),
            };
            match opt {
                Ok(o) => {
                    row.n_opt = Some(o.n_opt);
                    row.g2_min = Some(o.g2_min);
                }
                Err(e) => row.error = Some(e.to_string()),
            }
        }
        EvalModel::Matrix { .. } => match Engine::new(model, cfg) {
            Ok(engine) => {
                match minimize_fn(|n| engine.g2_at(n), default_rate_range(model, cfg)) {
                    Ok(o) => {
                        row.n_opt = Some(o.n_opt);
                        row.g2_min = Some(o.g2_min);
                        if let Ok(p) = plateau_around(&engine, &o, 0.1) {
                            row.plateau_lo = Some(p.lo);
                            row.plateau_hi = Some(p.hi);
                        }
                    }
                    Err(e) => row.error = Some(e.to_string()),
                }
            }
            Err(e) => row.error = Some(e.to_string()),
        },
    }
    row
}

/// Run a sweep. Per-point failures become error rows; the sweep itself only
/// fails on an invalid specification. Rows are deterministic and ordered by
/// grid position regardless of evaluation parallelism.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let grid = sweep_grid(spec)?;
    let source = spec.base.source_kind();
    let rows: Vec<SweepRow> = grid
        .par_iter()
        .map(|v| {
            let cfg = match apply_parameter(&spec.base, spec.parameter, *v) {
                Ok(c) => c,
                Err(e) => return SweepRow::failed(*v, spec.model.kind(), source, e),
            };
            if spec.parameter == SweepParameter::PairRate {
                let mut row = SweepRow {
                    value: *v,
                    model: spec.model.kind(),
                    source,
                    g2: None,
                    n_opt: None,
                    g2_min: None,
                    plateau_lo: None,
                    plateau_hi: None,
                    sigma: None,
                    error: None,
                };
                match g2_eval(&spec.model, &cfg) {
                    Ok(g) => row.g2 = Some(g),
                    Err(e) => row.error = Some(e.to_string()),
                }
                row
            } else {
                minimized_row(&spec.model, &cfg, *v, source)
            }
        })
        .collect();
    Ok(rows)
}

/// Whether a crossing of the two optimal-g2 curves exists in P.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CrossingOutcome {
    /// The cascaded source becomes advantageous above this conversion
    /// efficiency.
    Crossing { p_star: f64 },
    /// The cascaded optimum is lower over the whole (0, 1] range.
    AlwaysAdvantageous,
    /// The cascaded optimum never drops below the direct one.
    NeverAdvantageous,
}

/// Numeric crossing together with the closed-form thresholds it validates.
#[derive(Debug, Clone)]
pub struct ThresholdReport {
    pub outcome: CrossingOutcome,
    /// Optimal g2 of the direct-pumping counterpart under the chosen model.
    pub spdc_min: f64,
    /// General closed-form threshold.
    pub p_threshold_general: f64,
    /// Identical-detector simplified threshold, when all detectors match.
    pub p_threshold_identical: Option<f64>,
}

impl ThresholdReport {
    /// Relative deviation of the numeric crossing from a reference value.
    pub fn rel_diff(&self, reference: f64) -> Option<f64> {
        match self.outcome {
            CrossingOutcome::Crossing { p_star } if reference > 0.0 => {
                Some((p_star - reference).abs() / reference)
            }
            _ => None,
        }
    }
}

/// Locate the conversion efficiency at which the cascaded optimal g2 crosses
/// the direct one, by bisection on P in [1e-12, 1].
///
/// The analytic model compares the two closed-form minima; the matrix model
/// minimizes the exact curve at every probed P.
pub fn threshold_crossing(model: &EvalModel, base: &ExperimentConfig) -> Result<ThresholdReport> {
    if base.source_kind() != SourceKind::Cspdc {
        return Err(Error::Domain(
            "threshold crossing requires a CSPDC configuration".into(),
        ));
    }
    let spdc_cfg = base.to_spdc();
    let w = base.window();
    let herald = base.herald_stage2();
    let gate = base.require_symmetric_g2()?;
    let p_threshold_general = analytic::advantage_threshold(
        herald.figure_of_merit(w),
        gate.figure_of_merit(w),
        herald.eta(),
    )?;
    let herald1 = *base.herald_stage1().expect("cspdc");
    let identical = herald1 == *herald && gate == *herald;
    let p_threshold_identical = if identical {
        Some(analytic::advantage_threshold_identical(
            herald.eta(),
            herald.figure_of_merit(w),
        )?)
    } else {
        None
    };

    let spdc_min = match model {
        EvalModel::Analytic => analytic::g2_spdc_min(&spdc_cfg)?.g2_min,
        EvalModel::Matrix { .. } => {
            minimize_g2(model, &spdc_cfg, default_rate_range(model, &spdc_cfg))?.g2_min
        }
    };
    let cspdc_min = |p: f64| -> Result<f64> {
        let cfg = base.with_cascade_efficiency(p)?;
        match model {
            EvalModel::Analytic => analytic::g2_cspdc_min_value(&cfg),
            EvalModel::Matrix { .. } => {
                Ok(minimize_g2(model, &cfg, default_rate_range(model, &cfg))?.g2_min)
            }
        }
    };

    let (p_lo, p_hi) = (1e-12, 1.0);
    let diff = |p: f64| -> Result<f64> { Ok(cspdc_min(p)? - spdc_min) };
    let d_lo = diff(p_lo)?;
    let d_hi = diff(p_hi)?;
    let outcome = if d_lo <= 0.0 && d_hi <= 0.0 {
        CrossingOutcome::AlwaysAdvantageous
    } else if d_lo > 0.0 && d_hi > 0.0 {
        CrossingOutcome::NeverAdvantageous
    } else {
        let (mut above, mut below) = (p_lo.ln(), p_hi.ln());
        for _ in 0..60 {
            let mid = 0.5 * (above + below);
            if diff(mid.exp())? > 0.0 {
                above = mid;
            } else {
                below = mid;
            }
        }
        CrossingOutcome::Crossing {
            p_star: (0.5 * (above + below)).exp(),
        }
    };

    Ok(ThresholdReport {
        outcome,
        spdc_min,
        p_threshold_general,
        p_threshold_identical,
    })
}
