//! CSV result table and shared numeric formatting.

use std::io::Write;

use heraldg2::optsweep::{SweepParameter, SweepRow};
use heraldg2::RateSet;

/// Scientific notation with nine significant digits, stable across runs.
pub fn sci(x: f64) -> String {
    format!("{x:.8e}")
}

fn opt_sci(x: Option<f64>) -> String {
    x.map(sci).unwrap_or_default()
}

pub fn csv_header(parameter: SweepParameter) -> String {
    format!(
        "{},model,source_type,g2,n_opt,g2_min,plateau_lo_hz,plateau_hi_hz,sigma,error",
        parameter.column()
    )
}

pub fn csv_row(row: &SweepRow) -> String {
    let error = row
        .error
        .as_deref()
        .unwrap_or("")
        .replace([',', '\n'], ";");
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        sci(row.value),
        row.model,
        row.source,
        opt_sci(row.g2),
        opt_sci(row.n_opt),
        opt_sci(row.g2_min),
        opt_sci(row.plateau_lo),
        opt_sci(row.plateau_hi),
        opt_sci(row.sigma),
        error
    )
}

pub fn write_csv(
    out: &mut dyn Write,
    parameter: SweepParameter,
    rows: &[SweepRow],
) -> std::io::Result<()> {
    writeln!(out, "{}", csv_header(parameter))?;
    for row in rows {
        writeln!(out, "{}", csv_row(row))?;
    }
    Ok(())
}

/// Human-readable rate block, one combination per line, deterministic order.
pub fn rate_lines(rates: &RateSet) -> Vec<String> {
    rates
        .iter_all()
        .into_iter()
        .map(|(combo, value)| {
            let label = match combo.len() {
                1 => format!("S_{combo}"),
                2 => format!("D_{combo}"),
                3 => format!("T_{combo}"),
                _ => "F".to_string(),
            };
            format!("  {label:<7} = {}", sci(value))
        })
        .collect()
}
