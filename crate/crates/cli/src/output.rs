//! Machine-readable outputs: the sweep CSV and the JSON run reports.
//!
//! The CSV is the analysis contract and must be byte-reproducible across
//! identical runs, so the wall-time column is written as zero unless
//! `csv_timings = true`; measured times always live in the JSON report.

use lowmach_core::compressible::EnergyDiagnostics;
use lowmach_core::fixed_point::SolveStats;
use lowmach_core::incompressible::K0Report;
use lowmach_core::sweep::{RateFit, SweepRow};
use serde::Serialize;
use std::fmt::Write as _;

pub const SWEEP_CSV_HEADER: &str = "eps,norm_v_H3,norm_theta_H3,norm_eta_H2,perturbation_total,div_v_over_eps_H1,eta_plus_theta_over_eps_H2,u_gap_H3,pressure_gap_H2,residual_total,outer_iters,wall_time_s,converged";

fn fmt_f(x: f64) -> String {
    format!("{x:.12e}")
}

pub fn sweep_csv(rows: &[SweepRow], with_timings: bool) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{SWEEP_CSV_HEADER}");
    for r in rows {
        let wall = if with_timings { r.wall_time_s } else { 0.0 };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            fmt_f(r.eps),
            fmt_f(r.norm_v_h3),
            fmt_f(r.norm_theta_h3),
            fmt_f(r.norm_eta_h2),
            fmt_f(r.perturbation_total),
            fmt_f(r.div_v_over_eps_h1),
            fmt_f(r.eta_plus_theta_over_eps_h2),
            fmt_f(r.u_gap_h3),
            fmt_f(r.pressure_gap_h2),
            fmt_f(r.residual_total),
            r.outer_iters,
            format!("{wall:.6}"),
            r.converged,
        );
    }
    s
}

/// JSON report of a single solve.
#[derive(Serialize)]
pub struct SolveJson<'a> {
    pub version: &'static str,
    pub command: &'static str,
    pub config: &'a crate::config::RunConfig,
    pub stats: &'a SolveStats,
    /// Norm-bound monitor of the final incompressible pair.
    pub k0_report: &'a K0Report,
    /// Quadratic-form diagnostics evaluated at the final correction state.
    pub energy: &'a EnergyDiagnostics,
}

/// JSON report of a sweep.
#[derive(Serialize)]
pub struct SweepJson<'a> {
    pub version: &'static str,
    pub command: &'static str,
    pub config: &'a crate::config::RunConfig,
    pub reference_residual: f64,
    pub rows: &'a [SweepRow],
    pub fits: &'a [RateFit],
    pub row_stats: &'a [SolveStats],
}

/// JSON report of a manufactured-solution verification run.
#[derive(Serialize)]
pub struct MmsJson<'a> {
    pub version: &'static str,
    pub command: &'static str,
    pub config: &'a crate::config::RunConfig,
    pub case: &'a str,
    pub errors: Vec<MmsError>,
    pub passed: bool,
}

#[derive(Serialize)]
pub struct MmsError {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// JSON report of the invariant suite.
#[derive(Serialize)]
pub struct CheckJson<'a> {
    pub version: &'static str,
    pub command: &'static str,
    pub config: &'a crate::config::RunConfig,
    pub results: Vec<CheckEntry>,
    pub passed: bool,
}

#[derive(Serialize)]
pub struct CheckEntry {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_and_formatting() {
        let row = SweepRow {
            eps: 0.1,
            norm_v_h3: 1.0 / 3.0,
            outer_iters: 7,
            wall_time_s: 1.25,
            converged: true,
            ..SweepRow::default()
        };
        let csv = sweep_csv(&[row], false);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), SWEEP_CSV_HEADER);
        let data = lines.next().unwrap();
        assert!(data.starts_with("1.000000000000e-1,3.333333333333e-1,"));
        assert!(data.ends_with(",7,0.000000,true"));
        // With timings enabled the measured value appears.
        let csv = sweep_csv(&[row], true);
        assert!(csv.lines().nth(1).unwrap().contains(",1.250000,"));
    }
}
