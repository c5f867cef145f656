//! Subcommand implementations. Exit codes are the only success signal:
//! 0 = success, 2 = configuration error, 3 = runtime failure (reports are
//! still written on failure where partial data exists).

use crate::config::{build_forcing, RunConfig};
use crate::output::{self, CheckEntry, CheckJson, MmsError, MmsJson, SolveJson, SweepJson};
use crate::snapshot;
use anyhow::{Context, Result};
use lowmach_core::check::{run_all, CheckConfig};
use lowmach_core::compressible::{
    bilinear_form, skew_identity_check, EnergyDiagnostics, LinearizedCoeffs, LinearizedOpts,
};
use lowmach_core::fields::{mms_forcing, taylor_green, SplitState};
use lowmach_core::fixed_point::{fixed_point_solve, FixedPointError, OuterOpts, SolveStats};
use lowmach_core::incompressible::{
    k0_report, solve_advected_stokes, solve_incompressible_ns, StokesOpts,
};
use lowmach_core::spectral::{SpectralField, SpectralVectorField};
use lowmach_core::sweep::{
    self, fit_rate, incompressible_reference, retry_nonmonotone_rows, sweep_row, RateFit,
    SweepColumn, SweepError, SweepRow,
};
use std::path::Path;
use std::time::Instant;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

pub fn outer_opts(cfg: &RunConfig, force: bool) -> OuterOpts {
    OuterOpts {
        tol: cfg.tol,
        max_outer: cfg.max_outer,
        omega: cfg.omega,
        e_gate: cfg.e_gate,
        eps0_gate: cfg.eps0,
        enforce_gates: !force,
        stokes: StokesOpts {
            tol: cfg.tol * 0.1,
            max_iter: cfg.max_inner,
            omega: cfg.omega,
            a0_gate: cfg.a0,
            enforce_gates: !force,
        },
        linearized: LinearizedOpts {
            delta: cfg.delta,
            tol: cfg.tol * 0.1,
            max_iter: cfg.max_inner,
            omega: cfg.omega,
            vtheta_gate: cfg.e_gate,
            eps_gate: cfg.eps0,
            enforce_gates: !force,
        },
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), value)?;
    Ok(())
}

/// Energy-form diagnostics of a final state, for the run report.
fn energy_diagnostics(
    state: &SplitState,
    f: &SpectralVectorField,
    params: &lowmach_core::fields::FluidParams,
    delta: f64,
) -> EnergyDiagnostics {
    let coeffs = LinearizedCoeffs {
        u: &state.u_inc,
        p: &state.p_inc,
        v_tilde: &state.v,
        theta_tilde: &state.theta,
        f,
    };
    let x = (&state.eta, &state.v, &state.theta);
    let b = bilinear_form(x, x, &coeffs, params, delta);
    let (ne, nv, nt) =
        (state.eta.sobolev_norm(0), state.v.sobolev_norm(1), state.theta.sobolev_norm(1));
    let lower = ne * ne + nv * nv + nt * nt;
    EnergyDiagnostics {
        b_quadratic: b,
        lower_bound_norms: lower,
        coercivity_ratio: if lower > 0.0 { b / lower } else { 0.0 },
        skew_residual: skew_identity_check(&state.eta, &state.theta, &state.v),
    }
}

pub fn cmd_solve(
    cfg: &RunConfig,
    out_dir: &Path,
    force: bool,
    save: bool,
    load: Option<&Path>,
) -> Result<i32> {
    let grid = cfg.grid();
    let params = cfg.params();
    if !force && params.eps > cfg.eps0 {
        eprintln!("config error: eps = {} exceeds the eps0 gate {} (use --force)", params.eps, cfg.eps0);
        return Ok(EXIT_CONFIG);
    }
    let (f, g) = build_forcing(&cfg.forcing, grid);
    let opts = outer_opts(cfg, force);

    let initial = match load {
        Some(path) => {
            let (snap_grid, _snap_params, state) = match snapshot::load(path) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("config error: cannot load snapshot: {e:#}");
                    return Ok(EXIT_CONFIG);
                }
            };
            if snap_grid != grid {
                eprintln!("config error: snapshot grid does not match the configured grid");
                return Ok(EXIT_CONFIG);
            }
            Some(state)
        }
        None => None,
    };

    let start = Instant::now();
    let mut report = match fixed_point_solve(&f, &g, &params, &opts, initial) {
        Ok(r) => r,
        Err(FixedPointError::GateExceeded { eps, gate }) => {
            eprintln!("config error: eps = {eps} exceeds the eps0 gate {gate} (use --force)");
            return Ok(EXIT_CONFIG);
        }
        Err(e) => {
            eprintln!("runtime failure before iteration start: {e}");
            return Ok(EXIT_RUNTIME);
        }
    };
    report.stats.wall_time_s = start.elapsed().as_secs_f64();

    std::fs::create_dir_all(out_dir)?;
    let k0 = k0_report(&report.state.u_inc, &report.state.p_inc, &(&f + &g));
    let energy = energy_diagnostics(&report.state, &f, &params, cfg.delta);
    write_json(
        &out_dir.join("report.json"),
        &SolveJson {
            version: output::VERSION,
            command: "solve",
            config: cfg,
            stats: &report.stats,
            k0_report: &k0,
            energy: &energy,
        },
    )?;
    if save {
        snapshot::save(&out_dir.join("state.bin"), grid, &params, &report.state)?;
    }

    let ok = report.stats.converged && report.stats.residual.total <= 10.0 * cfg.tol;
    println!(
        "solve: converged={} outer_iters={} residual={:.3e} wall={:.2}s -> {}",
        report.stats.converged,
        report.stats.outer_iters,
        report.stats.residual.total,
        report.stats.wall_time_s,
        out_dir.join("report.json").display()
    );
    if let Some(failure) = &report.stats.failure {
        eprintln!("solve failure: {failure}");
    }
    Ok(if ok { EXIT_OK } else { EXIT_RUNTIME })
}

/// Sweep invariants that gate the exit code: everything converged, the
/// perturbation and gap columns strictly decreasing, the limit quantities
/// halving over a >= 8x ladder, and a near-linear perturbation rate when a
/// fit is possible.
fn sweep_invariants_hold(rows: &[SweepRow], fits: &[RateFit]) -> bool {
    if rows.is_empty() || !rows.iter().all(|r| r.converged) {
        return false;
    }
    let decreasing = |get: fn(&SweepRow) -> f64| rows.windows(2).all(|w| get(&w[1]) < get(&w[0]));
    if rows.len() >= 2 {
        if !decreasing(|r| r.perturbation_total)
            || !decreasing(|r| r.u_gap_h3)
            || !decreasing(|r| r.pressure_gap_h2)
        {
            return false;
        }
    }
    let span = rows.first().map(|r| r.eps).unwrap_or(1.0) / rows.last().map(|r| r.eps).unwrap_or(1.0);
    if span >= 8.0 {
        let first = &rows[0];
        let last = rows.last().unwrap();
        if last.eta_plus_theta_over_eps_h2 > 0.5 * first.eta_plus_theta_over_eps_h2 {
            return false;
        }
        if last.div_v_over_eps_h1 > 0.5 * first.div_v_over_eps_h1 {
            return false;
        }
    }
    if let Some(fit) = fits.iter().find(|f| f.column == "perturbation_total") {
        if !(0.8..=1.2).contains(&fit.slope) {
            return false;
        }
    }
    true
}

pub fn cmd_sweep(cfg: &RunConfig, out_dir: &Path, force: bool, workers: usize) -> Result<i32> {
    let grid = cfg.grid();
    let (f, g) = build_forcing(&cfg.forcing, grid);
    let opts = outer_opts(cfg, force);
    let eps_list = cfg.eps_list.clone();

    if let Err(e) = sweep::validate_eps_list(&eps_list, &opts) {
        return Ok(match e {
            SweepError::Reference(_) => {
                eprintln!("runtime failure: {e}");
                EXIT_RUNTIME
            }
            _ => {
                eprintln!("config error: {e}");
                EXIT_CONFIG
            }
        });
    }
    let reference = match incompressible_reference(&f, &g, cfg.mu, &opts.stokes) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("runtime failure: reference incompressible solve: {e}");
            return Ok(EXIT_RUNTIME);
        }
    };
    if reference.residual > 1e-8 {
        eprintln!(
            "runtime failure: reference residual {:.3e} exceeds 1e-8; comparisons not trusted",
            reference.residual
        );
        return Ok(EXIT_RUNTIME);
    }

    // Rows are independent pure computations: run them on a small worker
    // pool and reassemble in ladder order regardless of completion order.
    let workers = workers.max(1).min(eps_list.len().max(1));
    let mut slots: Vec<Option<(SweepRow, SolveStats, lowmach_core::fixed_point::SolveReport)>> =
        (0..eps_list.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for w in 0..workers {
            let eps_list = &eps_list;
            let f = &f;
            let g = &g;
            let reference = &reference;
            let opts = &opts;
            let base = cfg.params();
            handles.push(scope.spawn(move || {
                let mut mine = Vec::new();
                for (i, &eps) in eps_list.iter().enumerate() {
                    if i % workers != w {
                        continue;
                    }
                    let params = lowmach_core::fields::FluidParams { eps, ..base };
                    let start = Instant::now();
                    let (mut row, stats, report) = sweep_row(f, g, &params, reference, opts);
                    row.wall_time_s = start.elapsed().as_secs_f64();
                    mine.push((i, row, stats, report));
                }
                mine
            }));
        }
        for h in handles {
            for (i, row, stats, report) in h.join().expect("sweep worker panicked") {
                slots[i] = Some((row, stats, report));
            }
        }
    });
    let mut rows = Vec::with_capacity(slots.len());
    let mut row_stats = Vec::with_capacity(slots.len());
    let mut reports = Vec::with_capacity(slots.len());
    for s in slots {
        let (row, stats, report) = s.expect("every ladder entry produces a row");
        rows.push(row);
        row_stats.push(stats);
        reports.push(report);
    }
    retry_nonmonotone_rows(&mut rows, &reports, &f, &g, cfg.mu, &opts.stokes);

    let fit_columns = [
        SweepColumn::PerturbationTotal,
        SweepColumn::DivVOverEpsH1,
        SweepColumn::EtaPlusThetaOverEpsH2,
        SweepColumn::UGapH3,
        SweepColumn::PressureGapH2,
    ];
    let fits: Vec<RateFit> =
        fit_columns.iter().filter_map(|c| fit_rate(&rows, *c).ok()).collect();

    std::fs::create_dir_all(out_dir)?;
    let csv = output::sweep_csv(&rows, cfg.csv_timings);
    std::fs::write(out_dir.join("sweep.csv"), csv)?;
    write_json(
        &out_dir.join("report.json"),
        &SweepJson {
            version: output::VERSION,
            command: "sweep",
            config: cfg,
            reference_residual: reference.residual,
            rows: &rows,
            fits: &fits,
            row_stats: &row_stats,
        },
    )?;

    let ok = sweep_invariants_hold(&rows, &fits);
    let slope = fits
        .iter()
        .find(|f| f.column == "perturbation_total")
        .map(|f| format!("{:.3}", f.slope))
        .unwrap_or_else(|| "n/a".into());
    println!(
        "sweep: rows={} converged={} slope(perturbation_total)={} -> {}",
        rows.len(),
        rows.iter().filter(|r| r.converged).count(),
        slope,
        out_dir.join("sweep.csv").display()
    );
    Ok(if ok { EXIT_OK } else { EXIT_RUNTIME })
}

pub fn cmd_mms(cfg: &RunConfig, out_dir: &Path) -> Result<i32> {
    let grid = cfg.grid();
    let mu = cfg.mu;
    let stokes_opts = StokesOpts {
        tol: cfg.tol * 0.1,
        max_iter: cfg.max_inner,
        omega: cfg.omega,
        a0_gate: cfg.a0,
        enforce_gates: true,
    };
    let zero = SpectralVectorField::zeros(grid);
    let mut errors: Vec<MmsError> = Vec::new();
    let push = |errors: &mut Vec<MmsError>, name: &str, value: f64, threshold: f64| {
        errors.push(MmsError {
            name: name.to_string(),
            value,
            threshold,
            passed: value <= threshold,
        });
    };

    match cfg.mms_case.as_str() {
        "taylor_green" => {
            let (u_star, p_star) = taylor_green(grid, 1.0);
            let h = mms_forcing(&u_star, &p_star, mu).map_err(|e| anyhow::anyhow!("{e}"))?;
            // Linear stage: exact per-mode inversion with a = 0.
            let sol = solve_advected_stokes(&zero, &h, mu, &stokes_opts)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            push(&mut errors, "u_error_H2_linear", (&sol.u - &u_star).sobolev_norm(2), 1e-10);
            // The self-advection potential coincides with P*, so the solver
            // pressure must be 2 P*.
            push(
                &mut errors,
                "p_error_H2_linear",
                (&sol.p - &p_star.scaled(2.0)).sobolev_norm(2),
                1e-10,
            );
            // Nonlinear stage: Picard from zero lands on the same solution.
            let nl = solve_incompressible_ns(&h, &zero, &zero, mu, &stokes_opts, None)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            push(&mut errors, "u_error_H2_nonlinear", (&nl.u - &u_star).sobolev_norm(2), 1e-8);
        }
        "gradient_force" => {
            let phi = SpectralField::from_fn(grid, |x, y| {
                x.sin() + 0.5 * (2.0 * y).cos()
            });
            let sol = solve_incompressible_ns(&phi.gradient(), &zero, &zero, mu, &stokes_opts, None)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            push(&mut errors, "u_error_H2", sol.u.sobolev_norm(2), 1e-12);
            push(
                &mut errors,
                "p_error_H2",
                (&sol.p - &phi.mean_zero_project()).sobolev_norm(2),
                1e-12,
            );
        }
        "stokes_shear" => {
            let rhs = SpectralVectorField::from_fns(grid, |_, y| y.sin(), |_, _| 0.0);
            let sol = solve_advected_stokes(&zero, &rhs, mu, &stokes_opts)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            let exact =
                SpectralVectorField::from_fns(grid, move |_, y| y.sin() / mu, |_, _| 0.0);
            push(&mut errors, "u_error_H2", (&sol.u - &exact).sobolev_norm(2), 1e-12);
            push(&mut errors, "p_error_H2", sol.p.sobolev_norm(2), 1e-12);
        }
        other => {
            eprintln!(
                "config error: unknown mms_case `{other}` (expected taylor_green, gradient_force, or stokes_shear)"
            );
            return Ok(EXIT_CONFIG);
        }
    }

    let passed = errors.iter().all(|e| e.passed);
    std::fs::create_dir_all(out_dir)?;
    write_json(
        &out_dir.join("report.json"),
        &MmsJson {
            version: output::VERSION,
            command: "mms",
            config: cfg,
            case: &cfg.mms_case,
            errors,
            passed,
        },
    )?;
    println!(
        "mms: case={} passed={} -> {}",
        cfg.mms_case,
        passed,
        out_dir.join("report.json").display()
    );
    Ok(if passed { EXIT_OK } else { EXIT_RUNTIME })
}

pub fn cmd_check(cfg: &RunConfig, out_dir: &Path, seed: u64) -> Result<i32> {
    if cfg.trials == 0 {
        eprintln!("config error: trials must be at least 1 for `check`");
        return Ok(EXIT_CONFIG);
    }
    let check_cfg = CheckConfig {
        grid: cfg.grid(),
        params: cfg.params(),
        trials: cfg.trials,
        seed,
        delta: cfg.delta,
    };
    let results = run_all(&check_cfg);
    let failed: Vec<&str> =
        results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    let entries: Vec<CheckEntry> = results
        .iter()
        .map(|r| CheckEntry { name: r.name, passed: r.passed, detail: r.detail.clone() })
        .collect();
    std::fs::create_dir_all(out_dir)?;
    write_json(
        &out_dir.join("report.json"),
        &CheckJson {
            version: output::VERSION,
            command: "check",
            config: cfg,
            results: entries,
            passed: failed.is_empty(),
        },
    )?;
    println!(
        "check: {} properties, {} failed -> {}",
        results.len(),
        failed.len(),
        out_dir.join("report.json").display()
    );
    if !failed.is_empty() {
        eprintln!("failed properties: {}", failed.join(", "));
        return Ok(EXIT_RUNTIME);
    }
    Ok(EXIT_OK)
}
