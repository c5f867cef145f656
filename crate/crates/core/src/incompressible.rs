//! Solvers for the linearized advected Stokes problem and the steady
//! incompressible system, plus the norm-bound monitor feeding the
//! invariant-set diagnostics.
//!
//! The principal operator `-mu lap U + grad P` with `div U = 0` inverts
//! exactly per Fourier mode, which doubles as a Leray projection; the
//! advection term is handled by lagged (Picard) iteration.

use crate::fields;
use crate::spectral::{SpectralField, SpectralVectorField};
use alloc::format;
use alloc::string::String;
use core::fmt;
use num_complex::Complex64;

/// Options shared by the incompressible solves.
#[derive(Clone, Copy, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StokesOpts {
    /// H1 update threshold for Picard convergence.
    pub tol: f64,
    pub max_iter: usize,
    /// Under-relaxation factor in (0, 1]; auto-halved on update growth,
    /// floored at 0.1.
    pub omega: f64,
    /// Smallness gate on the H3 norm of the advecting field.
    pub a0_gate: f64,
    /// When false (CLI `--force`), the gate only warns via the error path
    /// being skipped; divergence detection remains the backstop.
    pub enforce_gates: bool,
}

impl Default for StokesOpts {
    fn default() -> Self {
        Self { tol: 1e-11, max_iter: 500, omega: 1.0, a0_gate: 0.5, enforce_gates: true }
    }
}

#[derive(Debug, Clone)]
pub enum IncompressibleError {
    /// Picard stalled: advecting field too strong for the linear contraction.
    NoConvergence { max_iter: usize, last_update: f64 },
    /// Advecting field exceeded the configured smallness gate.
    GateExceeded { norm: f64, gate: f64, what: String },
}

impl fmt::Display for IncompressibleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IncompressibleError::NoConvergence { max_iter, last_update } => write!(
                f,
                "Picard did not converge in {max_iter} iterations; last H1 update {last_update:.3e}"
            ),
            IncompressibleError::GateExceeded { norm, gate, what } => {
                write!(f, "smallness gate violated: {what} = {norm:.3e} exceeds {gate:.3e}")
            }
        }
    }
}

/// Solution of an incompressible solve with iteration bookkeeping.
#[derive(Clone, Debug)]
pub struct StokesSolution {
    pub u: SpectralVectorField,
    pub p: SpectralField,
    pub picard_iters: usize,
    pub final_update_norm: f64,
}

/// Leray projection onto the divergence-free part, exact per Fourier mode:
/// `v - k (k.v)/|k|^2`.
pub fn leray_project(v: &SpectralVectorField) -> SpectralVectorField {
    let grid = v.grid();
    let mut out = v.clone();
    for m in grid.modes() {
        let ksq = m.ksq();
        if ksq == 0.0 {
            continue;
        }
        let k_dot = m.kd1 * v.x().coeffs()[m.flat] + m.kd2 * v.y().coeffs()[m.flat];
        let long = k_dot / ksq;
        out.component_mut(0).coeffs_mut()[m.flat] -= long * m.kd1;
        out.component_mut(1).coeffs_mut()[m.flat] -= long * m.kd2;
    }
    out
}

/// Exact per-mode inversion of `-mu lap U + grad P = rhs`, `div U = 0`.
///
/// For each mode `k != 0`: `P = -i k.r / |k|^2` and
/// `U = (r - k (k.r)/|k|^2) / (mu |k|^2)`; the k=0 component of the
/// right-hand side is projected out, so `U` and `P` are mean-free and `U`
/// is solenoidal exactly.
pub fn stokes_mode_solve(rhs: &SpectralVectorField, mu: f64) -> (SpectralVectorField, SpectralField) {
    let grid = rhs.grid();
    let mut u = SpectralVectorField::zeros(grid);
    let mut p = SpectralField::zeros(grid);
    for m in grid.modes() {
        let ksq = m.ksq();
        if ksq == 0.0 {
            continue; // mean and degenerate Nyquist modes stay zero
        }
        let r = [rhs.x().coeffs()[m.flat], rhs.y().coeffs()[m.flat]];
        let k_dot_r = m.kd1 * r[0] + m.kd2 * r[1];
        let long = k_dot_r / ksq;
        p.coeffs_mut()[m.flat] = Complex64::new(0.0, -1.0) * long;
        let scale = 1.0 / (mu * ksq);
        u.component_mut(0).coeffs_mut()[m.flat] = (r[0] - long * m.kd1) * scale;
        u.component_mut(1).coeffs_mut()[m.flat] = (r[1] - long * m.kd2) * scale;
    }
    (u, p)
}

/// Picard solve of the advected Stokes problem
/// `a.grad U - mu lap U + grad P = h`, `div U = 0`.
///
/// Convergence requires both the H1 update below `tol` and the assembled
/// residual below `10 tol`; the update criterion alone does not bound the
/// residual once derivatives amplify the iterate error.
pub fn solve_advected_stokes(
    a: &SpectralVectorField,
    h: &SpectralVectorField,
    mu: f64,
    opts: &StokesOpts,
) -> Result<StokesSolution, IncompressibleError> {
    if a.max_abs_coeff() == 0.0 {
        let (u, p) = stokes_mode_solve(h, mu);
        return Ok(StokesSolution { u, p, picard_iters: 1, final_update_norm: 0.0 });
    }
    // The solenoidal part of `a` is the upstream incompressible iterate and
    // may be large (its advection is skew); the smallness gate covers only
    // the non-solenoidal excess. Runtime divergence detection is the
    // backstop for everything else.
    let excess = (a - &leray_project(a)).sobolev_norm(3);
    if opts.enforce_gates && excess >= opts.a0_gate {
        return Err(IncompressibleError::GateExceeded {
            norm: excess,
            gate: opts.a0_gate,
            what: format!("H3 norm of non-solenoidal advecting excess"),
        });
    }

    let mut u = SpectralVectorField::zeros(h.grid());
    let mut p = SpectralField::zeros(h.grid());
    let mut omega = opts.omega;
    let mut prev_update = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        let rhs = h - &a.advect_vector(&u);
        let (u_new, p_new) = stokes_mode_solve(&rhs, mu);
        let u_next = &u.scaled(1.0 - omega) + &u_new.scaled(omega);
        let p_next = &p.scaled(1.0 - omega) + &p_new.scaled(omega);
        let update = (&u_next - &u).sobolev_norm(1);
        u = u_next;
        p = p_next;
        if update < opts.tol && advected_residual(a, &u, &p, h, mu).total() <= 10.0 * opts.tol {
            return Ok(StokesSolution { u, p, picard_iters: iter, final_update_norm: update });
        }
        if update > prev_update && omega > 0.1 {
            omega = (omega * 0.5).max(0.1);
        }
        prev_update = update;
    }
    Err(IncompressibleError::NoConvergence { max_iter: opts.max_iter, last_update: prev_update })
}

/// Fixed point of `U -> solve_advected_stokes(U + v, f + g)`: the steady
/// incompressible system with an extra advecting correction `v`.
pub fn solve_incompressible_ns(
    f: &SpectralVectorField,
    g: &SpectralVectorField,
    v: &SpectralVectorField,
    mu: f64,
    opts: &StokesOpts,
    initial: Option<&SpectralVectorField>,
) -> Result<StokesSolution, IncompressibleError> {
    let h = f + g;
    let mut u = match initial {
        Some(u0) => u0.clone(),
        None => SpectralVectorField::zeros(h.grid()),
    };
    let mut p = SpectralField::zeros(h.grid());
    let mut omega = opts.omega;
    let mut prev_update = f64::INFINITY;
    let mut total_inner = 0usize;
    for _ in 1..=opts.max_iter {
        let a = &u + v;
        let inner = solve_advected_stokes(&a, &h, mu, opts)?;
        total_inner += inner.picard_iters;
        let u_next = &u.scaled(1.0 - omega) + &inner.u.scaled(omega);
        let p_next = &p.scaled(1.0 - omega) + &inner.p.scaled(omega);
        let update = (&u_next - &u).sobolev_norm(1);
        u = u_next;
        p = p_next;
        if update < opts.tol {
            let res = advected_residual(&(&u + v), &u, &p, &h, mu).total();
            if res <= 10.0 * opts.tol {
                return Ok(StokesSolution {
                    u,
                    p,
                    picard_iters: total_inner,
                    final_update_norm: update,
                });
            }
        }
        if update > prev_update && omega > 0.1 {
            omega = (omega * 0.5).max(0.1);
        }
        prev_update = update;
    }
    Err(IncompressibleError::NoConvergence { max_iter: opts.max_iter, last_update: prev_update })
}

/// Residual of the advected Stokes problem `a.grad U - mu lap U + grad P - h`.
pub fn advected_residual(
    a: &SpectralVectorField,
    u: &SpectralVectorField,
    p: &SpectralField,
    h: &SpectralVectorField,
    mu: f64,
) -> fields::ResidualReport {
    let momentum = &(&a.advect_vector(u) - &u.laplacian().scaled(mu)) + &(&p.gradient() - h);
    let mass = u.divergence();
    let energy = SpectralField::zeros(u.grid());
    fields::ResidualReport::from_parts(mass, momentum, energy)
}

/// Residual total of the steady incompressible system at a solution pair.
pub fn residual_of_reference(
    sol: &StokesSolution,
    f: &SpectralVectorField,
    g: &SpectralVectorField,
    mu: f64,
) -> f64 {
    fields::residual_incompressible(&sol.u, &sol.p, f, g, mu).total()
}

/// Norm-bound monitor: solution norms against the forcing-norm polynomials
/// of the a priori estimates, with all constants set to one. The ratios are
/// only meaningful as cross-run diagnostics (boundedness, scaling); no
/// pass/fail is attached.
#[derive(Clone, Copy, Debug, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct K0Report {
    /// `||U||_1 .. ||U||_4`.
    pub u_norms: [f64; 4],
    /// `||h||_{-1} .. ||h||_2`.
    pub h_norms: [f64; 4],
    /// `||grad P||_0 .. ||grad P||_2`, tracked alongside the velocity norms.
    pub grad_p_norms: [f64; 3],
    /// `r_1 = ||U||_1/||h||_{-1}`, `r_2 = ||U||_2/(||h||_0 (||h||_0+1)^4)`,
    /// `r_3 = ||U||_3/(||h||_1 (||h||_1+1)^8)`,
    /// `r_4 = ||U||_4/(||h||_2 (||h||_2+1)^12)`.
    pub ratios: [f64; 4],
}

pub fn k0_report(u: &SpectralVectorField, p: &SpectralField, h: &SpectralVectorField) -> K0Report {
    let u_norms = [u.sobolev_norm(1), u.sobolev_norm(2), u.sobolev_norm(3), u.sobolev_norm(4)];
    let h_norms = [h.sobolev_norm(-1), h.sobolev_norm(0), h.sobolev_norm(1), h.sobolev_norm(2)];
    let gp = p.gradient();
    let grad_p_norms = [gp.sobolev_norm(0), gp.sobolev_norm(1), gp.sobolev_norm(2)];
    let pow = |x: f64, n: u32| {
        let mut acc = 1.0;
        for _ in 0..n {
            acc *= x;
        }
        acc
    };
    let denom = [
        h_norms[0],
        h_norms[1] * pow(h_norms[1] + 1.0, 4),
        h_norms[2] * pow(h_norms[2] + 1.0, 8),
        h_norms[3] * pow(h_norms[3] + 1.0, 12),
    ];
    let mut ratios = [0.0; 4];
    for i in 0..4 {
        ratios[i] = if denom[i] > 0.0 { u_norms[i] / denom[i] } else { 0.0 };
    }
    K0Report { u_norms, h_norms, grad_p_norms, ratios }
}
