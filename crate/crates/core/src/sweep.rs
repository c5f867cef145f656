//! Mach-number sweep harness: solve at a decreasing ladder of `eps`,
//! compare each solution against one shared incompressible reference, and
//! fit convergence rates to the limit quantities.
//!
//! A row is emitted even when a solve fails (flagged, excluded from fits).
//! The comparison uses the reference the solver actually found, which is a
//! stronger check than the infimum over all incompressible solutions; if a
//! converged row breaks gap monotonicity (a branch-switch symptom), its
//! comparison is retried against the projection of its own velocity and the
//! row is flagged.

use crate::fields::FluidParams;
use crate::fixed_point::{fixed_point_solve, OuterOpts, SolveReport, SolveStats};
use crate::incompressible::{
    leray_project, residual_of_reference, solve_incompressible_ns, IncompressibleError,
    StokesOpts, StokesSolution,
};
use crate::spectral::SpectralVectorField;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// One row of the sweep table; field order mirrors the CSV contract.
#[derive(Clone, Copy, Debug, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepRow {
    pub eps: f64,
    pub norm_v_h3: f64,
    pub norm_theta_h3: f64,
    pub norm_eta_h2: f64,
    /// `||v||_3 + ||theta||_3 + ||eta||_2`.
    pub perturbation_total: f64,
    pub div_v_over_eps_h1: f64,
    pub eta_plus_theta_over_eps_h2: f64,
    pub u_gap_h3: f64,
    pub pressure_gap_h2: f64,
    pub residual_total: f64,
    pub outer_iters: usize,
    pub wall_time_s: f64,
    pub converged: bool,
    /// Comparison re-based on the row's own incompressible projection.
    pub reference_retry: bool,
}

/// Named numeric columns available to rate fits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum SweepColumn {
    NormVH3,
    NormThetaH3,
    NormEtaH2,
    PerturbationTotal,
    DivVOverEpsH1,
    EtaPlusThetaOverEpsH2,
    UGapH3,
    PressureGapH2,
    ResidualTotal,
}

impl SweepColumn {
    pub fn name(&self) -> &'static str {
        match self {
            SweepColumn::NormVH3 => "norm_v_H3",
            SweepColumn::NormThetaH3 => "norm_theta_H3",
            SweepColumn::NormEtaH2 => "norm_eta_H2",
            SweepColumn::PerturbationTotal => "perturbation_total",
            SweepColumn::DivVOverEpsH1 => "div_v_over_eps_H1",
            SweepColumn::EtaPlusThetaOverEpsH2 => "eta_plus_theta_over_eps_H2",
            SweepColumn::UGapH3 => "u_gap_H3",
            SweepColumn::PressureGapH2 => "pressure_gap_H2",
            SweepColumn::ResidualTotal => "residual_total",
        }
    }

    pub fn value(&self, row: &SweepRow) -> f64 {
        match self {
            SweepColumn::NormVH3 => row.norm_v_h3,
            SweepColumn::NormThetaH3 => row.norm_theta_h3,
            SweepColumn::NormEtaH2 => row.norm_eta_h2,
            SweepColumn::PerturbationTotal => row.perturbation_total,
            SweepColumn::DivVOverEpsH1 => row.div_v_over_eps_h1,
            SweepColumn::EtaPlusThetaOverEpsH2 => row.eta_plus_theta_over_eps_h2,
            SweepColumn::UGapH3 => row.u_gap_h3,
            SweepColumn::PressureGapH2 => row.pressure_gap_h2,
            SweepColumn::ResidualTotal => row.residual_total,
        }
    }
}

/// Least-squares fit of `log(column)` against `log(eps)`.
#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateFit {
    pub column: String,
    pub slope: f64,
    pub intercept: f64,
    /// Sum of squared fit residuals.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub enum SweepError {
    EpsListNotDecreasing,
    EmptyEpsList,
    GateExceeded { eps: f64, gate: f64 },
    Reference(IncompressibleError),
    /// Fewer than three usable rows for a rate fit.
    InsufficientData { have: usize },
}

impl fmt::Display for SweepError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepError::EpsListNotDecreasing => {
                write!(f, "eps ladder must be strictly decreasing")
            }
            SweepError::EmptyEpsList => write!(f, "eps ladder is empty"),
            SweepError::GateExceeded { eps, gate } => {
                write!(f, "eps {eps} exceeds the eps0 gate {gate} (bypass with --force)")
            }
            SweepError::Reference(e) => write!(f, "reference incompressible solve: {e}"),
            SweepError::InsufficientData { have } => {
                write!(f, "rate fit needs at least 3 usable rows, have {have}")
            }
        }
    }
}

/// The shared incompressible reference and its residual.
#[derive(Clone, Debug)]
pub struct SweepReference {
    pub solution: StokesSolution,
    pub residual: f64,
}

/// Solve the incompressible system once for the whole ladder; the residual
/// must clear 1e-8 before any comparison downstream is trusted.
pub fn incompressible_reference(
    f: &SpectralVectorField,
    g: &SpectralVectorField,
    mu: f64,
    opts: &StokesOpts,
) -> Result<SweepReference, IncompressibleError> {
    let zero_v = SpectralVectorField::zeros(f.grid());
    let solution = solve_incompressible_ns(f, g, &zero_v, mu, opts, None)?;
    let residual = residual_of_reference(&solution, f, g, mu);
    Ok(SweepReference { solution, residual })
}

/// Limit-gap comparison against a reference pair:
/// `u_gap = ||(U + v) - Ubar||_3`,
/// `pressure_gap = ||P + (eta + theta)/eps - Pbar||_2`.
pub fn limit_compare(
    state: &crate::fields::SplitState,
    reference: &StokesSolution,
    eps: f64,
) -> (f64, f64) {
    let u_gap = (&(&state.u_inc + &state.v) - &reference.u).sobolev_norm(3);
    let recovered = &state.p_inc + &(&state.eta + &state.theta).scaled(1.0 / eps);
    let pressure_gap = (&recovered - &reference.p).sobolev_norm(2);
    (u_gap, pressure_gap)
}

/// Solve one ladder entry and assemble its row.
pub fn sweep_row(
    f: &SpectralVectorField,
    g: &SpectralVectorField,
    params: &FluidParams,
    reference: &SweepReference,
    opts: &OuterOpts,
) -> (SweepRow, SolveStats, SolveReport) {
    let report = match fixed_point_solve(f, g, params, opts, None) {
        Ok(r) => r,
        Err(e) => {
            // Gate refusal: emit a failed row with no solve data.
            let mut row = SweepRow { eps: params.eps, ..SweepRow::default() };
            row.converged = false;
            let grid = f.grid();
            let state = crate::fields::SplitState::zeros(grid);
            let composite = crate::fields::compose(&state, params);
            let mut stats = SolveStats::default();
            stats.failure = Some(alloc::format!("{e}"));
            return (row, stats.clone(), SolveReport { state, composite, stats });
        }
    };
    let state = &report.state;
    let (u_gap, pressure_gap) = limit_compare(state, &reference.solution, params.eps);
    let div_v = state.v.divergence();
    let sum = &state.eta + &state.theta;
    let row = SweepRow {
        eps: params.eps,
        norm_v_h3: state.v.sobolev_norm(3),
        norm_theta_h3: state.theta.sobolev_norm(3),
        norm_eta_h2: state.eta.sobolev_norm(2),
        perturbation_total: report.stats.final_norms.perturbation_total,
        div_v_over_eps_h1: div_v.sobolev_norm(1) / params.eps,
        eta_plus_theta_over_eps_h2: sum.sobolev_norm(2) / params.eps,
        u_gap_h3: u_gap,
        pressure_gap_h2: pressure_gap,
        residual_total: report.stats.residual.total,
        outer_iters: report.stats.outer_iters,
        wall_time_s: 0.0,
        converged: report.stats.converged,
        reference_retry: false,
    };
    (row, report.stats.clone(), report)
}

/// Sweep results plus the reference residual.
#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub reference_residual: f64,
}

/// Validate a ladder: nonempty, strictly decreasing, within the gate.
pub fn validate_eps_list(eps_list: &[f64], opts: &OuterOpts) -> Result<(), SweepError> {
    if eps_list.is_empty() {
        return Err(SweepError::EmptyEpsList);
    }
    for pair in eps_list.windows(2) {
        if !(pair[1] < pair[0]) {
            return Err(SweepError::EpsListNotDecreasing);
        }
    }
    if opts.enforce_gates {
        for &eps in eps_list {
            if eps > opts.eps0_gate {
                return Err(SweepError::GateExceeded { eps, gate: opts.eps0_gate });
            }
        }
    }
    Ok(())
}

/// Branch-switch guard: converged rows whose velocity gap breaks
/// monotonicity are re-compared against the projection of their own
/// velocity, and flagged.
pub fn retry_nonmonotone_rows(
    rows: &mut [SweepRow],
    reports: &[SolveReport],
    f: &SpectralVectorField,
    g: &SpectralVectorField,
    mu: f64,
    stokes: &StokesOpts,
) {
    let mut prev_gap: Option<f64> = None;
    for (row, report) in rows.iter_mut().zip(reports) {
        if !row.converged {
            continue;
        }
        if let Some(prev) = prev_gap {
            if row.u_gap_h3 > prev {
                let seed = leray_project(&report.composite.u);
                let zero_v = SpectralVectorField::zeros(f.grid());
                if let Ok(own) = solve_incompressible_ns(f, g, &zero_v, mu, stokes, Some(&seed)) {
                    let (ug, pg) = limit_compare(&report.state, &own, row.eps);
                    row.u_gap_h3 = ug;
                    row.pressure_gap_h2 = pg;
                    row.reference_retry = true;
                }
            }
        }
        prev_gap = Some(row.u_gap_h3);
    }
}

/// Serial sweep: shared reference, one fixed-point solve per `eps`, rows in
/// ladder order. Rows for failed solves are flagged, not dropped.
pub fn epsilon_sweep(
    f: &SpectralVectorField,
    g: &SpectralVectorField,
    base: &FluidParams,
    eps_list: &[f64],
    opts: &OuterOpts,
) -> Result<(SweepTable, Vec<SolveStats>), SweepError> {
    validate_eps_list(eps_list, opts)?;
    let reference =
        incompressible_reference(f, g, base.mu, &opts.stokes).map_err(SweepError::Reference)?;

    let mut rows = Vec::with_capacity(eps_list.len());
    let mut stats = Vec::with_capacity(eps_list.len());
    let mut reports = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let params = FluidParams { eps, ..*base };
        let (row, st, report) = sweep_row(f, g, &params, &reference, opts);
        rows.push(row);
        stats.push(st);
        reports.push(report);
    }
    retry_nonmonotone_rows(&mut rows, &reports, f, g, base.mu, &opts.stokes);
    Ok((SweepTable { rows, reference_residual: reference.residual }, stats))
}

/// Least-squares slope of `log(column)` vs `log(eps)` over converged rows
/// with positive finite entries.
pub fn fit_rate(rows: &[SweepRow], column: SweepColumn) -> Result<RateFit, SweepError> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.converged)
        .map(|r| (r.eps, column.value(r)))
        .filter(|(e, v)| *e > 0.0 && v.is_finite() && *v > 0.0)
        .map(|(e, v)| (libm::log(e), libm::log(v)))
        .collect();
    if pts.len() < 3 {
        return Err(SweepError::InsufficientData { have: pts.len() });
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let residual: f64 =
        pts.iter().map(|(x, y)| (y - (slope * x + intercept)) * (y - (slope * x + intercept))).sum();
    Ok(RateFit { column: String::from(column.name()), slope, intercept, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{mms_forcing, taylor_green};
    use crate::spectral::Grid;

    fn grid() -> Grid {
        Grid::new(32).unwrap()
    }

    fn tg_forcing(amplitude: f64) -> SpectralVectorField {
        let (u_star, p_star) = taylor_green(grid(), amplitude);
        mms_forcing(&u_star, &p_star, 1.0).unwrap()
    }

    #[test]
    fn eps_list_validation() {
        let opts = OuterOpts::default();
        assert!(matches!(validate_eps_list(&[], &opts), Err(SweepError::EmptyEpsList)));
        assert!(matches!(
            validate_eps_list(&[0.1, 0.1], &opts),
            Err(SweepError::EpsListNotDecreasing)
        ));
        assert!(matches!(
            validate_eps_list(&[0.5, 0.1], &opts),
            Err(SweepError::GateExceeded { .. })
        ));
        assert!(validate_eps_list(&[0.1, 0.05], &opts).is_ok());
        let forced = OuterOpts { enforce_gates: false, ..opts };
        assert!(validate_eps_list(&[0.5, 0.1], &forced).is_ok());
    }

    #[test]
    fn zero_forcing_single_entry_row_of_zeros() {
        let z = SpectralVectorField::zeros(grid());
        let base = FluidParams::new(1.0, 0.0, 1.0, 0.1).unwrap();
        let (table, _) = epsilon_sweep(&z, &z, &base, &[0.1], &OuterOpts::default()).unwrap();
        let row = &table.rows[0];
        assert!(row.converged);
        assert_eq!(row.perturbation_total, 0.0);
        assert_eq!(row.u_gap_h3, 0.0);
        assert_eq!(row.pressure_gap_h2, 0.0);
    }

    #[test]
    fn reference_independent_of_ladder() {
        let f = tg_forcing(1.0);
        let z = SpectralVectorField::zeros(grid());
        let opts = OuterOpts::default();
        let a = incompressible_reference(&f, &z, 1.0, &opts.stokes).unwrap();
        let b = incompressible_reference(&f, &z, 1.0, &opts.stokes).unwrap();
        assert!((&a.solution.u - &b.solution.u).max_abs_coeff() == 0.0);
        assert!(a.residual <= 1e-8, "reference residual {}", a.residual);
    }

    #[test]
    fn limit_compare_trivial_cases() {
        let f = tg_forcing(1.0);
        let z = SpectralVectorField::zeros(grid());
        let opts = OuterOpts::default();
        let reference = incompressible_reference(&f, &z, 1.0, &opts.stokes).unwrap();
        // A state equal to (Ubar, Pbar, 0, 0, 0) has zero gaps.
        let state = crate::fields::SplitState {
            u_inc: reference.solution.u.clone(),
            p_inc: reference.solution.p.clone(),
            v: SpectralVectorField::zeros(grid()),
            eta: crate::spectral::SpectralField::zeros(grid()),
            theta: crate::spectral::SpectralField::zeros(grid()),
        };
        let (ug, pg) = limit_compare(&state, &reference.solution, 0.05);
        assert!(ug == 0.0 && pg == 0.0);

        // Gaps depend only on differences: shift both velocities by the
        // same field.
        let shift = tg_forcing(0.3);
        let mut shifted_state = state.clone();
        shifted_state.u_inc = &shifted_state.u_inc + &shift;
        let mut shifted_ref = reference.solution.clone();
        shifted_ref.u = &shifted_ref.u + &shift;
        let (ug, pg) = limit_compare(&shifted_state, &shifted_ref, 0.05);
        assert!(ug <= 1e-12 && pg == 0.0);
    }

    #[test]
    fn fit_rate_exact_cases() {
        let mk = |eps: f64, v: f64| SweepRow {
            eps,
            perturbation_total: v,
            residual_total: 3.25,
            converged: true,
            ..SweepRow::default()
        };
        // Column exactly proportional to eps: slope 1.
        let rows: Vec<SweepRow> = [0.1, 0.05, 0.025, 0.0125].iter().map(|&e| mk(e, 7.0 * e)).collect();
        let fit = fit_rate(&rows, SweepColumn::PerturbationTotal).unwrap();
        assert!(libm::fabs(fit.slope - 1.0) <= 1e-12, "slope {}", fit.slope);
        assert!(fit.residual <= 1e-20);

        // Constant column: slope 0.
        let fit = fit_rate(&rows, SweepColumn::ResidualTotal).unwrap();
        assert!(libm::fabs(fit.slope) <= 1e-12);

        // Failed rows participate in no fits.
        let mut rows_failed = rows.clone();
        for r in rows_failed.iter_mut().take(2) {
            r.converged = false;
        }
        assert!(matches!(
            fit_rate(&rows_failed, SweepColumn::PerturbationTotal),
            Err(SweepError::InsufficientData { have: 2 })
        ));
    }

    // Ladder behavior on the Taylor-Green run is covered by the acceptance
    // suite; here a two-entry ladder checks row assembly end to end.
    #[test]
    fn short_ladder_rows_behave() {
        let f = tg_forcing(1.0);
        let z = SpectralVectorField::zeros(grid());
        let base = FluidParams::new(1.0, 0.0, 1.0, 0.1).unwrap();
        let (table, stats) =
            epsilon_sweep(&f, &z, &base, &[0.1, 0.05], &OuterOpts::default()).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert!(table.rows.iter().all(|r| r.converged));
        assert!(table.rows[1].perturbation_total < table.rows[0].perturbation_total);
        assert!(table.rows[1].u_gap_h3 < table.rows[0].u_gap_h3);
        assert!(stats[0].residual.total <= 1e-8);
    }
}
