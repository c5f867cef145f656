//! The outer splitting iteration: alternate the advected-Stokes solve and
//! the linearized compressible solve until the combined state stops moving,
//! with contraction and invariant-set membership diagnostics along the way.
//!
//! Convergence is measured in the norms of the continuity estimate for the
//! iteration map: H1 for the velocities and temperature, L2 for the density
//! correction. The final residual is recomputed from scratch on the composed
//! state; nothing is reused from solver internals.

use crate::compressible::{
    solve_linearized, CompressibleError, LinearizedCoeffs, LinearizedOpts,
};
use crate::fields::{
    compose, residual_primitive, residual_transformed, CompositeState, FluidParams, ResidualNorms,
    SplitState,
};
use crate::incompressible::{
    k0_report, solve_advected_stokes, solve_incompressible_ns, IncompressibleError, StokesOpts,
};
use crate::spectral::SpectralVectorField;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Options for the outer fixed-point iteration.
#[derive(Clone, Copy, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OuterOpts {
    /// Threshold on the total iterate difference.
    pub tol: f64,
    pub max_outer: usize,
    /// Outer relaxation: `x <- (1-omega) x + omega N(x)`.
    pub omega: f64,
    /// Membership gate for `||v||_3 + ||theta||_3`.
    pub e_gate: f64,
    /// Admissible Mach numbers: `eps <= eps0`.
    pub eps0_gate: f64,
    pub enforce_gates: bool,
    pub stokes: StokesOpts,
    pub linearized: LinearizedOpts,
}

impl Default for OuterOpts {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_outer: 80,
            omega: 1.0,
            e_gate: 0.5,
            eps0_gate: 0.25,
            enforce_gates: true,
            stokes: StokesOpts::default(),
            linearized: LinearizedOpts::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum FixedPointError {
    /// Mach number outside the admissible range (bypass with `--force`).
    GateExceeded { eps: f64, gate: f64 },
    /// Failure in the incompressible stage of the map.
    Incompressible(IncompressibleError),
    /// Failure in the compressible stage of the map.
    Compressible(CompressibleError),
}

impl fmt::Display for FixedPointError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FixedPointError::GateExceeded { eps, gate } => {
                write!(f, "Mach number {eps} exceeds the eps0 gate {gate}")
            }
            FixedPointError::Incompressible(e) => write!(f, "incompressible stage: {e}"),
            FixedPointError::Compressible(e) => write!(f, "compressible stage: {e}"),
        }
    }
}

/// Norms of the difference between consecutive outer iterates.
#[derive(Clone, Copy, Debug, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IterateDiff {
    pub du_h1: f64,
    pub dv_h1: f64,
    pub dtheta_h1: f64,
    pub deta_l2: f64,
    pub total: f64,
}

impl IterateDiff {
    pub fn between(a: &SplitState, b: &SplitState) -> Self {
        let du_h1 = (&a.u_inc - &b.u_inc).sobolev_norm(1);
        let dv_h1 = (&a.v - &b.v).sobolev_norm(1);
        let dtheta_h1 = (&a.theta - &b.theta).sobolev_norm(1);
        let deta_l2 = (&a.eta - &b.eta).sobolev_norm(0);
        Self { du_h1, dv_h1, dtheta_h1, deta_l2, total: du_h1 + dv_h1 + dtheta_h1 + deta_l2 }
    }
}

/// Membership snapshot against the invariant sets of the iteration.
#[derive(Clone, Copy, Debug, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KMembership {
    /// Norm-bound ratios of the incompressible iterate.
    pub k0_ratios: [f64; 4],
    /// `||v||_3 + ||theta||_3`.
    pub v_theta_h3: f64,
    pub e_gate: f64,
    pub inside_k1: bool,
}

/// Ratio diagnostics of the outer iterate differences.
#[derive(Clone, Debug, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ContractionReport {
    /// `r_i = total_{i+1} / total_i`.
    pub ratios: Vec<f64>,
    /// True when every ratio past the first two transients stays below one
    /// (and at least three iterations were taken).
    pub geometric: bool,
}

/// `r_i = total_{i+1}/total_i`, with an exact-zero diff mapping to ratio 0.
pub fn contraction_report(diffs: &[IterateDiff]) -> ContractionReport {
    let mut ratios = Vec::new();
    for pair in diffs.windows(2) {
        let (a, b) = (pair[0].total, pair[1].total);
        ratios.push(if b == 0.0 { 0.0 } else { b / a.max(1e-300) });
    }
    let geometric =
        diffs.len() >= 3 && ratios.iter().enumerate().all(|(i, r)| i < 2 || *r < 1.0);
    ContractionReport { ratios, geometric }
}

/// Final perturbation norms of a converged state.
#[derive(Clone, Copy, Debug, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FinalNorms {
    pub v_h3: f64,
    pub theta_h3: f64,
    pub eta_h2: f64,
    /// Sum of the previous three.
    pub perturbation_total: f64,
}

/// Serializable statistics of one fixed-point run.
#[derive(Clone, Debug, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolveStats {
    pub converged: bool,
    pub failure: Option<String>,
    pub outer_iters: usize,
    pub diffs: Vec<IterateDiff>,
    pub contraction: ContractionReport,
    /// Residual of the transformed system, recomputed on the final state.
    pub residual: ResidualNorms,
    /// Residual of the primitive system on the same state (cross-check).
    pub residual_primitive: Option<ResidualNorms>,
    pub k0_discard_history: Vec<[f64; 3]>,
    pub k_membership: Vec<KMembership>,
    pub inner_iters_history: Vec<usize>,
    pub final_norms: FinalNorms,
    /// Filled in by callers that can measure time; zero otherwise.
    pub wall_time_s: f64,
}

/// Full outcome: the final split and composite states plus statistics.
#[derive(Clone, Debug)]
pub struct SolveReport {
    pub state: SplitState,
    pub composite: CompositeState,
    pub stats: SolveStats,
}

/// One application of the splitting map: an advected-Stokes solve with the
/// current `U + v`, then the linearized compressible solve against the fresh
/// incompressible pair. Returns the next state and the inner bookkeeping.
pub fn map_n(
    state: &SplitState,
    f: &SpectralVectorField,
    g: &SpectralVectorField,
    params: &FluidParams,
    opts: &OuterOpts,
) -> Result<(SplitState, usize, [f64; 3]), FixedPointError> {
    let h = f + g;
    let a = &state.u_inc + &state.v;
    let stokes = solve_advected_stokes(&a, &h, params.mu, &opts.stokes)
        .map_err(FixedPointError::Incompressible)?;
    let coeffs = LinearizedCoeffs {
        u: &stokes.u,
        p: &stokes.p,
        v_tilde: &state.v,
        theta_tilde: &state.theta,
        f,
    };
    let lin = solve_linearized(
        &coeffs,
        params,
        &opts.linearized,
        Some((&state.eta, &state.v, &state.theta)),
    )
    .map_err(FixedPointError::Compressible)?;
    let next = SplitState {
        u_inc: stokes.u,
        p_inc: stokes.p,
        v: lin.v,
        eta: lin.eta,
        theta: lin.theta,
    };
    Ok((next, lin.inner_iters, lin.k0_discard))
}

fn blend(a: &SplitState, b: &SplitState, omega: f64) -> SplitState {
    if omega == 1.0 {
        return b.clone();
    }
    let w = 1.0 - omega;
    SplitState {
        u_inc: &a.u_inc.scaled(w) + &b.u_inc.scaled(omega),
        p_inc: &a.p_inc.scaled(w) + &b.p_inc.scaled(omega),
        v: &a.v.scaled(w) + &b.v.scaled(omega),
        eta: &a.eta.scaled(w) + &b.eta.scaled(omega),
        theta: &a.theta.scaled(w) + &b.theta.scaled(omega),
    }
}

/// Iterate the splitting map from the zero perturbation (seeded with a pure
/// incompressible solve) until the state stops moving, then recompute the
/// residual of the composed state from scratch.
///
/// In-run failures produce a report with `converged = false` and the partial
/// history rather than an error; only the upfront Mach gate refuses to run.
pub fn fixed_point_solve(
    f: &SpectralVectorField,
    g: &SpectralVectorField,
    params: &FluidParams,
    opts: &OuterOpts,
    initial: Option<SplitState>,
) -> Result<SolveReport, FixedPointError> {
    if opts.enforce_gates && params.eps > opts.eps0_gate {
        return Err(FixedPointError::GateExceeded { eps: params.eps, gate: opts.eps0_gate });
    }
    let grid = f.grid();
    let h = f + g;

    let mut stats = SolveStats::default();
    let mut state = match initial {
        Some(s) => s,
        None => {
            let zero_v = SpectralVectorField::zeros(grid);
            match solve_incompressible_ns(f, g, &zero_v, params.mu, &opts.stokes, None) {
                Ok(sol) => SplitState {
                    u_inc: sol.u,
                    p_inc: sol.p,
                    v: SpectralVectorField::zeros(grid),
                    eta: crate::spectral::SpectralField::zeros(grid),
                    theta: crate::spectral::SpectralField::zeros(grid),
                },
                Err(e) => {
                    stats.failure = Some(format!("initial incompressible solve: {e}"));
                    let state = SplitState::zeros(grid);
                    let composite = compose(&state, params);
                    stats.residual = residual_transformed(&composite, params, f, g).norms;
                    return Ok(SolveReport { state, composite, stats });
                }
            }
        }
    };

    for iter in 1..=opts.max_outer {
        let (next, inner_iters, k0) = match map_n(&state, f, g, params, opts) {
            Ok(t) => t,
            Err(e) => {
                stats.failure = Some(format!("{e}"));
                break;
            }
        };
        let accepted = blend(&state, &next, opts.omega);
        let diff = IterateDiff::between(&accepted, &state);
        state = accepted;

        stats.outer_iters = iter;
        stats.inner_iters_history.push(inner_iters);
        stats.k0_discard_history.push(k0);
        stats.diffs.push(diff);
        let v_theta_h3 = state.v.sobolev_norm(3) + state.theta.sobolev_norm(3);
        stats.k_membership.push(KMembership {
            k0_ratios: k0_report(&state.u_inc, &state.p_inc, &h).ratios,
            v_theta_h3,
            e_gate: opts.e_gate,
            inside_k1: v_theta_h3 <= opts.e_gate,
        });

        if diff.total < opts.tol {
            let residual = residual_transformed(&compose(&state, params), params, f, g);
            if residual.total() <= 10.0 * opts.tol {
                stats.converged = true;
                break;
            }
        }
    }
    if !stats.converged && stats.failure.is_none() {
        stats.failure = Some(format!(
            "no convergence in {} outer iterations; last diff {:.3e}",
            opts.max_outer,
            stats.diffs.last().map(|d| d.total).unwrap_or(f64::NAN)
        ));
    }

    stats.contraction = contraction_report(&stats.diffs);
    let composite = compose(&state, params);
    stats.residual = residual_transformed(&composite, params, f, g).norms;
    stats.residual_primitive = match residual_primitive(&composite, params, f, g) {
        Ok(r) => Some(r.norms),
        Err(e) => {
            if stats.failure.is_none() {
                stats.failure = Some(format!("{e}"));
                stats.converged = false;
            }
            None
        }
    };
    stats.final_norms = FinalNorms {
        v_h3: state.v.sobolev_norm(3),
        theta_h3: state.theta.sobolev_norm(3),
        eta_h2: state.eta.sobolev_norm(2),
        perturbation_total: state.v.sobolev_norm(3)
            + state.theta.sobolev_norm(3)
            + state.eta.sobolev_norm(2),
    };

    Ok(SolveReport { state, composite, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{mms_forcing, taylor_green};
    use crate::probe;
    use crate::spectral::Grid;
    use rand_chacha::ChaCha8Rng;
    use rand_core::SeedableRng;

    fn grid() -> Grid {
        Grid::new(32).unwrap()
    }

    fn params(eps: f64) -> FluidParams {
        FluidParams::new(1.0, 0.0, 1.0, eps).unwrap()
    }

    fn tg_forcing(amplitude: f64) -> SpectralVectorField {
        let (u_star, p_star) = taylor_green(grid(), amplitude);
        mms_forcing(&u_star, &p_star, 1.0).unwrap()
    }

    #[test]
    fn map_fixes_zero_state() {
        let z = SpectralVectorField::zeros(grid());
        let state = SplitState::zeros(grid());
        let (next, inner, _) = map_n(&state, &z, &z, &params(0.1), &OuterOpts::default()).unwrap();
        assert_eq!(inner, 1);
        assert!(next.u_inc.max_abs_coeff() == 0.0);
        assert!(next.v.max_abs_coeff() == 0.0);
    }

    #[test]
    fn zero_forcing_converges_immediately() {
        let z = SpectralVectorField::zeros(grid());
        let rep = fixed_point_solve(&z, &z, &params(0.1), &OuterOpts::default(), None).unwrap();
        assert!(rep.stats.converged);
        assert_eq!(rep.stats.outer_iters, 1);
        assert_eq!(rep.stats.residual.total, 0.0);
    }

    #[test]
    fn taylor_green_converges_with_small_residual() {
        let f = tg_forcing(1.0);
        let g = SpectralVectorField::zeros(grid());
        let p = params(0.05);
        let rep = fixed_point_solve(&f, &g, &p, &OuterOpts::default(), None).unwrap();
        assert!(rep.stats.converged, "failure: {:?}", rep.stats.failure);
        assert!(rep.stats.residual.total <= 1e-8, "residual {}", rep.stats.residual.total);
        assert!(rep.stats.k_membership.last().unwrap().inside_k1);

        // Means pinned at every exposed quantity, solenoidality exact.
        assert!(rep.state.invariant_error() <= 1e-13);

        // The final perturbation stays inside the membership gate.
        assert!(rep.stats.final_norms.perturbation_total <= OuterOpts::default().e_gate);

        // Primitive and transformed residuals agree within the algebraic
        // equivalence window.
        let prim = rep.stats.residual_primitive.unwrap();
        assert!(prim.total <= 10.0 * OuterOpts::default().tol * (1.0 + p.eps));

        // One more application of the map moves the state by at most ~tol.
        let (next, _, _) = map_n(&rep.state, &f, &g, &p, &OuterOpts::default()).unwrap();
        let drift = IterateDiff::between(&next, &rep.state);
        assert!(drift.total <= 10.0 * OuterOpts::default().tol, "drift {}", drift.total);

        // Contraction diagnostics on the recorded run.
        assert!(rep.stats.contraction.geometric);
    }

    #[test]
    fn nearby_states_contract_under_the_map() {
        let f = tg_forcing(1.0);
        let g = SpectralVectorField::zeros(grid());
        let p = params(0.05);
        let opts = OuterOpts::default();
        let rep = fixed_point_solve(&f, &g, &p, &opts, None).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let mut other = rep.state.clone();
        other.v = &other.v + &probe::random_vector_field(grid(), &mut rng, 4, 1e-3);
        other.theta = &other.theta + &probe::random_field(grid(), &mut rng, 4, 1e-3);
        other.eta = &other.eta + &probe::random_field(grid(), &mut rng, 4, 1e-3);

        let (nx, _, _) = map_n(&rep.state, &f, &g, &p, &opts).unwrap();
        let (ny, _, _) = map_n(&other, &f, &g, &p, &opts).unwrap();
        let before = IterateDiff::between(&rep.state, &other);
        let after = IterateDiff::between(&nx, &ny);
        assert!(after.total <= before.total, "{} vs {}", after.total, before.total);
    }

    #[test]
    fn eps_gate_refuses_and_force_bypasses() {
        let f = tg_forcing(1.0);
        let g = SpectralVectorField::zeros(grid());
        let opts = OuterOpts::default();
        assert!(matches!(
            fixed_point_solve(&f, &g, &params(0.9), &opts, None),
            Err(FixedPointError::GateExceeded { .. })
        ));
        // Bypassed gates: the run is allowed; convergence is not asserted.
        let forced = OuterOpts {
            enforce_gates: false,
            max_outer: 5,
            stokes: StokesOpts { enforce_gates: false, ..opts.stokes },
            linearized: LinearizedOpts {
                enforce_gates: false,
                max_iter: 50,
                ..opts.linearized
            },
            ..opts
        };
        let rep = fixed_point_solve(&f, &g, &params(0.9), &forced, None).unwrap();
        assert!(rep.stats.outer_iters <= 5);
    }

    #[test]
    fn contraction_report_cases() {
        let mk = |totals: &[f64]| {
            totals
                .iter()
                .map(|&t| IterateDiff { total: t, ..Default::default() })
                .collect::<Vec<_>>()
        };
        let r = contraction_report(&mk(&[1.0, 0.5, 0.25]));
        assert_eq!(r.ratios, alloc::vec![0.5, 0.5]);
        assert!(r.geometric);

        let r = contraction_report(&mk(&[1.0, 1.0, 0.0]));
        assert_eq!(r.ratios[1], 0.0);

        // Late-growth sequence is flagged non-geometric.
        let r = contraction_report(&mk(&[1.0, 0.5, 0.4, 0.6]));
        assert!(!r.geometric);
    }

    #[test]
    fn report_emitted_even_without_convergence() {
        // A single outer iteration cannot converge on a real forcing.
        let f = tg_forcing(1.0);
        let g = SpectralVectorField::zeros(grid());
        let opts = OuterOpts { max_outer: 1, ..OuterOpts::default() };
        let rep = fixed_point_solve(&f, &g, &params(0.05), &opts, None).unwrap();
        assert!(!rep.stats.converged);
        assert!(rep.stats.failure.is_some());
        assert_eq!(rep.stats.diffs.len(), 1);
        assert!(rep.stats.residual.total.is_finite());
    }
}
