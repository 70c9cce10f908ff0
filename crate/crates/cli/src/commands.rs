//! Implementations of the five subcommands.

use std::io::Write;
use std::path::{Path, PathBuf};

use heraldg2::analytic;
use heraldg2::detstate::{self, DetectorBank};
use heraldg2::mc::{self, SimulationPlan};
use heraldg2::optsweep::{
    self, CrossingOutcome, EvalModel, Scale, SweepParameter, SweepSpec,
};
use heraldg2::{ExperimentConfig, G2Result, SourceKind};

use crate::config_file::LoadedConfig;
use crate::table::{rate_lines, sci, write_csv};
use crate::{CliError, ModelArg};

fn analytic_g2(cfg: &ExperimentConfig) -> heraldg2::Result<G2Result> {
    match cfg.source_kind() {
        SourceKind::Spdc => analytic::g2_spdc(cfg),
        SourceKind::Cspdc => analytic::g2_cspdc(cfg),
    }
}

fn eval_model(model: ModelArg, epsilon: f64) -> Result<EvalModel, CliError> {
    match model {
        ModelArg::Analytic => Ok(EvalModel::Analytic),
        ModelArg::Matrix => Ok(EvalModel::Matrix { epsilon }),
        ModelArg::Mc => Err(CliError::usage(
            "this command supports --model analytic or matrix".into(),
        )),
    }
}

fn windows_count(windows: f64) -> Result<u64, CliError> {
    if !(windows >= 1.0 && windows <= 1e12 && windows.is_finite()) {
        return Err(CliError::usage(format!(
            "--windows must lie in [1, 1e12], got {windows}"
        )));
    }
    Ok(windows as u64)
}

pub fn cmd_g2(
    loaded: &LoadedConfig,
    model: ModelArg,
    windows: f64,
    seed: u64,
) -> Result<(), CliError> {
    let cfg = &loaded.experiment;
    let result = match model {
        ModelArg::Analytic => analytic_g2(cfg)?,
        ModelArg::Matrix => detstate::g2_matrix(cfg, loaded.truncation_epsilon)?,
        ModelArg::Mc => {
            let plan = SimulationPlan::new(cfg.clone(), windows_count(windows)?, seed)?;
            let tally = mc::simulate(&plan)?;
            mc::g2_estimate(&tally, cfg.source_kind())?
        }
    };
    println!("g2 = {}", sci(result.g2));
    println!("model = {}", result.model);
    println!("source = {}", cfg.source_kind());
    if let Some(sigma) = result.statistical_sigma {
        println!("sigma = {}", sci(sigma));
    }
    println!("rates [counts/s]:");
    for line in rate_lines(&result.rates) {
        println!("{line}");
    }
    Ok(())
}

pub fn cmd_min(
    loaded: &LoadedConfig,
    model: ModelArg,
    from: Option<f64>,
    to: Option<f64>,
) -> Result<(), CliError> {
    let cfg = &loaded.experiment;
    let model = eval_model(model, loaded.truncation_epsilon)?;
    let default = optsweep::default_rate_range(&model, cfg);
    let range = (from.unwrap_or(default.0), to.unwrap_or(default.1));
    let opt = optsweep::minimize_g2(&model, cfg, range)?;

    println!("n_opt_hz = {}", sci(opt.n_opt));
    println!("g2_min = {}", sci(opt.g2_min));
    if let EvalModel::Analytic = model {
        let closed = match cfg.source_kind() {
            SourceKind::Spdc => analytic::g2_spdc_min(cfg).map(|o| o.g2_min),
            SourceKind::Cspdc => analytic::g2_cspdc_min_value(cfg),
        };
        if let Ok(value) = closed {
            println!("closed_form_g2_min = {}", sci(value));
        }
    }
    if opt.degenerate {
        println!("note: boundary optimum (no interior minimum); plateau undefined");
        return Ok(());
    }
    match optsweep::plateau(&model, cfg, loaded.plateau_delta) {
        Ok(p) => {
            println!("plateau_lo_hz = {}", sci(p.lo));
            println!("plateau_hi_hz = {}", sci(p.hi));
            println!("plateau_decades = {}", sci(p.decades()));
            println!("plateau_delta = {}", sci(p.delta));
        }
        Err(heraldg2::Error::DegenerateOptimum(msg)) => {
            println!("note: plateau undefined ({msg})");
        }
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_sweep(
    loaded: &LoadedConfig,
    param: &str,
    from: f64,
    to: f64,
    points: usize,
    scale: Scale,
    model: ModelArg,
    both_sources: bool,
    out: Option<&PathBuf>,
) -> Result<(), CliError> {
    let parameter: SweepParameter = param.parse().map_err(CliError::from)?;
    let model = eval_model(model, loaded.truncation_epsilon)?;
    let base = loaded.experiment.clone();
    if both_sources && base.source_kind() != SourceKind::Cspdc {
        return Err(CliError::usage(
            "--both-sources needs a cspdc configuration to derive the spdc counterpart".into(),
        ));
    }
    if both_sources && parameter == SweepParameter::CascadeEfficiency {
        return Err(CliError::usage(
            "--both-sources cannot apply to a cascade_efficiency sweep".into(),
        ));
    }

    let spec = SweepSpec {
        parameter,
        from,
        to,
        points,
        scale,
        model,
        base: base.clone(),
    };
    let mut rows = optsweep::sweep(&spec)?;
    if both_sources {
        let spdc_spec = SweepSpec {
            base: base.to_spdc(),
            ..spec.clone()
        };
        rows.extend(optsweep::sweep(&spdc_spec)?);
    }
    if rows.iter().all(|r| r.error.is_some()) {
        let first = rows
            .first()
            .and_then(|r| r.error.clone())
            .unwrap_or_else(|| "empty sweep".into());
        return Err(CliError::model(format!("every sweep point failed: {first}")));
    }

    match out {
        Some(path) => {
            let mut file = std::fs::File::create(path)
                .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?;
            write_csv(&mut file, parameter, &rows)
                .map_err(|e| CliError::model(format!("write failed: {e}")))?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_csv(&mut lock, parameter, &rows)
                .map_err(|e| CliError::model(format!("write failed: {e}")))?;
        }
    }
    Ok(())
}

pub fn cmd_criterion(loaded: &LoadedConfig, model: ModelArg) -> Result<(), CliError> {
    let cfg = &loaded.experiment;
    let model = eval_model(model, loaded.truncation_epsilon)?;
    let report = optsweep::threshold_crossing(&model, cfg)?;

    println!(
        "advantage_threshold_general = {}",
        sci(report.p_threshold_general)
    );
    match report.p_threshold_identical {
        Some(p) => println!("advantage_threshold_identical = {}", sci(p)),
        None => println!("advantage_threshold_identical = n/a (detectors differ)"),
    }
    match report.outcome {
        CrossingOutcome::Crossing { p_star } => {
            println!("numeric_p_star = {}", sci(p_star));
            if let Some(d) = report.rel_diff(report.p_threshold_general) {
                println!("rel_diff_p_star_vs_general = {}", sci(d));
            }
            if let Some(p) = report.p_threshold_identical {
                if let Some(d) = report.rel_diff(p) {
                    println!("rel_diff_p_star_vs_identical = {}", sci(d));
                }
            }
        }
        CrossingOutcome::AlwaysAdvantageous => {
            println!("numeric_p_star = none (always advantageous over (0, 1])");
        }
        CrossingOutcome::NeverAdvantageous => {
            println!("numeric_p_star = none (never advantageous within (0, 1])");
        }
    }
    let p_configured = cfg
        .cascade_efficiency()
        .expect("threshold_crossing enforces a cspdc configuration");
    println!("configured_cascade_efficiency = {}", sci(p_configured));
    let advantageous = match report.outcome {
        CrossingOutcome::Crossing { p_star } => p_configured >= p_star,
        CrossingOutcome::AlwaysAdvantageous => true,
        CrossingOutcome::NeverAdvantageous => false,
    };
    println!(
        "verdict: {}",
        if advantageous {
            "ADVANTAGEOUS"
        } else {
            "NOT ADVANTAGEOUS"
        }
    );
    Ok(())
}

pub fn cmd_validate(
    loaded: &LoadedConfig,
    windows: f64,
    seed: u64,
) -> Result<(), CliError> {
    let cfg = &loaded.experiment;
    let n_windows = windows_count(windows)?;

    let analytic_result = analytic_g2(cfg)?;
    let matrix_result = detstate::g2_matrix(cfg, loaded.truncation_epsilon)?;
    let state = detstate::final_state(cfg, loaded.truncation_epsilon.min(1e-14))?;
    let plan = SimulationPlan::new(cfg.clone(), n_windows, seed)?;
    let tally = mc::simulate(&plan)?;
    let mc_result = mc::g2_estimate(&tally, cfg.source_kind())?;
    let sigma = mc_result
        .statistical_sigma
        .expect("monte carlo estimates always carry a sigma");

    println!("g2 comparison ({n_windows} windows, seed {seed}):");
    println!("  analytic  {}", sci(analytic_result.g2));
    println!("  matrix    {}", sci(matrix_result.g2));
    println!("  mc        {}  sigma {}", sci(mc_result.g2), sci(sigma));

    let rel = |a: f64, b: f64| if b != 0.0 { (a - b).abs() / b } else { f64::NAN };
    println!("pairwise relative differences:");
    println!(
        "  analytic_vs_matrix = {}",
        sci(rel(analytic_result.g2, matrix_result.g2))
    );
    println!("  analytic_vs_mc     = {}", sci(rel(analytic_result.g2, mc_result.g2)));
    println!("  matrix_vs_mc       = {}", sci(rel(matrix_result.g2, mc_result.g2)));

    let mut failures: Vec<String> = Vec::new();

    // Marginal agreement between the exact models carries the verdict.
    println!("marginals, matrix expectation vs mc count (3 sigma):");
    let n = n_windows as f64;
    let bank = DetectorBank::from_config(cfg);
    for combo in bank.combinations() {
        let p = state.event_probability(combo)?;
        let expected = n * p;
        let observed = tally.count(combo)? as f64;
        let sigma_c = (n * p * (1.0 - p)).sqrt();
        let dev = (observed - expected).abs();
        let ok = dev <= 3.0 * sigma_c || (expected == 0.0 && observed == 0.0);
        let dev_sigma = if sigma_c > 0.0 { dev / sigma_c } else { 0.0 };
        println!(
            "  {:<5} expected {} observed {} deviation {:.2} sigma {}",
            combo.to_string(),
            sci(expected),
            sci(observed),
            dev_sigma,
            if ok { "OK" } else { "FAIL" }
        );
        if !ok {
            failures.push(format!("marginal {combo} deviates by {dev_sigma:.2} sigma"));
        }
    }

    if sigma > 0.0 {
        let dev = (matrix_result.g2 - mc_result.g2).abs() / sigma;
        println!("g2 matrix_vs_mc deviation = {dev:.2} sigma");
        if dev > 3.0 {
            failures.push(format!("g2 matrix vs mc deviates by {dev:.2} sigma"));
        }
    } else {
        println!("g2 matrix_vs_mc deviation: skipped (zero coincidence count; covered by marginals)");
    }

    if failures.is_empty() {
        println!("verdict: PASS");
        Ok(())
    } else {
        println!("verdict: FAIL");
        Err(CliError::validation(failures.join("; ")))
    }
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, CliError> {
    crate::config_file::load(path)
}
