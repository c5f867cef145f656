//! The linearized compressible solve with its stiff `1/eps` principal
//! operator inverted exactly per Fourier mode, the lagged-coefficient inner
//! iteration, and the variational-form diagnostics (bilinear form,
//! coercivity probe, skew identity).
//!
//! The linearized system, for a given incompressible pair `(U, P)` and
//! lagged correction `(v~, theta~)`, reads
//!
//! ```text
//! -delta lap eta + U.grad eta + div v/eps + v~.grad eta + eta div v~ = -eps div(P(U+v~))
//! U.grad v - mu lap v - zeta grad div v + (grad eta + grad theta)/eps
//!     + theta~ grad eta + eta grad theta~ = eps F - v~.grad v~
//! U.grad theta - kappa lap theta + div v/eps + eta div v~
//!     = eps G - v~.grad theta~ - theta~ div v~
//! ```
//!
//! with forcings from [`assemble_forcings`]. The constant-coefficient part
//! block-solves in closed form per mode: the mass row pins the longitudinal
//! velocity, the energy row then pins the temperature, the longitudinal
//! momentum projection pins the density, and the transverse momentum is a
//! plain viscous inversion. That removes the `1/eps` stiffness exactly;
//! every variable-coefficient term is lagged, including the density factor
//! inside the forcings.
//!
//! On the torus the k=0 components of the momentum and energy rows are
//! projected out before solving and their magnitudes reported, in the units
//! of the transformed system where they measure the periodic-surrogate mean
//! imbalance.

use crate::fields::{self, FluidParams, ResidualReport};
use crate::probe;
use crate::spectral::{Grid, SpectralField, SpectralVectorField};
use core::fmt;
use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

/// Options for the inner linearized solve.
#[derive(Clone, Copy, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LinearizedOpts {
    /// Regularization weight on `-lap eta` in the mass row.
    pub delta: f64,
    /// Threshold on the update norm `|dv|_1 + |dtheta|_1 + |deta|_0`.
    pub tol: f64,
    pub max_iter: usize,
    pub omega: f64,
    /// Gate on `||v~||_3 + ||theta~||_3`.
    pub vtheta_gate: f64,
    /// Gate on the Mach number.
    pub eps_gate: f64,
    pub enforce_gates: bool,
}

impl Default for LinearizedOpts {
    fn default() -> Self {
        Self {
            delta: 0.0,
            tol: 1e-11,
            max_iter: 600,
            omega: 1.0,
            vtheta_gate: 0.5,
            eps_gate: 0.25,
            enforce_gates: true,
        }
    }
}

#[derive(Debug, Clone)]
pub enum CompressibleError {
    /// The principal symbol is singular at k = 0; that mode must be
    /// projected out before solving.
    DegenerateMode,
    NoConvergence { max_iter: usize, last_update: f64 },
    /// Update norm doubled twice in a row: the lagged terms defeat the
    /// principal contraction.
    InnerDivergence { iter: usize, update: f64 },
    GateExceeded { norm: f64, gate: f64, what: &'static str },
}

impl fmt::Display for CompressibleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompressibleError::DegenerateMode => {
                write!(f, "principal symbol is singular at the zero mode")
            }
            CompressibleError::NoConvergence { max_iter, last_update } => write!(
                f,
                "inner Picard did not converge in {max_iter} iterations; last update {last_update:.3e}"
            ),
            CompressibleError::InnerDivergence { iter, update } => {
                write!(f, "inner Picard diverging at iteration {iter}, update {update:.3e}")
            }
            CompressibleError::GateExceeded { norm, gate, what } => {
                write!(f, "smallness gate violated: {what} = {norm:.3e} exceeds {gate:.3e}")
            }
        }
    }
}

/// Frozen coefficient fields of one linearized solve.
#[derive(Clone, Copy)]
pub struct LinearizedCoeffs<'a> {
    /// Incompressible velocity iterate (solenoidal).
    pub u: &'a SpectralVectorField,
    /// Incompressible pressure iterate.
    pub p: &'a SpectralField,
    pub v_tilde: &'a SpectralVectorField,
    pub theta_tilde: &'a SpectralField,
    /// Body force density.
    pub f: &'a SpectralVectorField,
}

/// Right-hand side of the principal solve, means projected out.
#[derive(Clone, Debug)]
pub struct CompressibleRhs {
    pub mass: SpectralField,
    pub momentum: SpectralVectorField,
    pub energy: SpectralField,
    /// Projected-out k=0 magnitudes in transformed-system units (the mass
    /// and energy rows scale by eps relative to the solve units).
    pub k0_discard: [f64; 3],
}

impl CompressibleRhs {
    pub fn new(
        mass: SpectralField,
        momentum: SpectralVectorField,
        energy: SpectralField,
        eps: f64,
    ) -> Self {
        let k0_discard = [
            eps * libm::fabs(mass.mean()),
            momentum.mean_norm(),
            eps * libm::fabs(energy.mean()),
        ];
        Self {
            mass: mass.mean_zero_project(),
            momentum: momentum.mean_zero_project(),
            energy: energy.mean_zero_project(),
            k0_discard,
        }
    }
}

/// Solution of the linearized compressible system.
#[derive(Clone, Debug)]
pub struct LinearizedSolution {
    pub eta: SpectralField,
    pub v: SpectralVectorField,
    pub theta: SpectralField,
    pub inner_iters: usize,
    /// k=0 magnitudes discarded from the final right-hand side.
    pub k0_discard: [f64; 3],
}

/// Assembled forcings of the linearized system:
///
/// ```text
/// F = (eps P + eta) f - (eps P + eta)(U+v~).grad(U+v~) - theta~ grad P - P grad theta~
/// G = Psi(U+v~) - (eps P + eta)(U+v~).grad theta~
///     - (eps P + eta) theta~ div v~ - P div v~
/// ```
///
/// with the density factor `eps P + eta` taken at the lagged `eta`.
pub fn assemble_forcings(
    c: &LinearizedCoeffs<'_>,
    eta_lag: &SpectralField,
    p: &FluidParams,
) -> (SpectralVectorField, SpectralField) {
    let rho_lag = &c.p.scaled(p.eps) + eta_lag;
    let w = c.u + c.v_tilde;
    let adv_w = w.advect_vector(&w);
    let grad_tt = c.theta_tilde.gradient();
    let div_vt = c.v_tilde.divergence();

    let force = &(&c.f.scalar_product(&rho_lag) - &adv_w.scalar_product(&rho_lag))
        - &(&c.p.gradient().scalar_product(c.theta_tilde) + &grad_tt.scalar_product(c.p));

    let psi = fields::dissipation(&w, p);
    let w_grad_tt = w.advect_scalar(c.theta_tilde);
    let rho_tt = rho_lag.dealiased_product(c.theta_tilde);
    let heat = &(&psi - &rho_lag.dealiased_product(&w_grad_tt))
        - &(&rho_tt.dealiased_product(&div_vt) + &c.p.dealiased_product(&div_vt));

    (force, heat)
}

/// Closed-form inversion of the principal symbol at one mode `k != 0`.
///
/// Unknown ordering `(eta, v1, v2, theta)` against rows (mass, momentum x2,
/// energy):
///
/// ```text
/// delta |k|^2 eta + (i/eps) k.v                      = r_mass
/// mu |k|^2 v + zeta k (k.v) + (i k/eps)(eta + theta) = r_mom
/// kappa |k|^2 theta + (i/eps) k.v                    = r_energy
/// ```
pub fn principal_mode_solve(
    k: [f64; 2],
    rhs: [Complex64; 4],
    p: &FluidParams,
    delta: f64,
) -> Result<[Complex64; 4], CompressibleError> {
    let ksq = k[0] * k[0] + k[1] * k[1];
    if ksq == 0.0 {
        return Err(CompressibleError::DegenerateMode);
    }
    let eps = p.eps;
    let (r_mass, r1, r2, r_energy) = (rhs[0], rhs[1], rhs[2], rhs[3]);
    let k_dot_rv = k[0] * r1 + k[1] * r2;

    // Longitudinal block: eliminate k.v through the mass row and theta
    // through the energy row, leaving a scalar equation for eta. The
    // longitudinal viscosity is mu + zeta.
    let visc_l = p.mu + p.zeta();
    let denom = eps * visc_l * delta * ksq * ksq + ksq / eps + delta * ksq / (eps * p.kappa);
    let numer = k_dot_rv + Complex64::i() * (eps * visc_l * ksq) * r_mass
        - Complex64::i() * (r_energy - r_mass) / (eps * p.kappa);
    let eta = -Complex64::i() * numer / denom;

    let theta = (r_energy - r_mass + delta * ksq * eta) / (p.kappa * ksq);
    let s = -Complex64::i() * eps * (r_mass - delta * ksq * eta); // k.v
    let long = k_dot_rv / ksq;
    let visc = 1.0 / (p.mu * ksq);
    let v1 = (r1 - long * k[0]) * visc + k[0] * s / ksq;
    let v2 = (r2 - long * k[1]) * visc + k[1] * s / ksq;
    Ok([eta, v1, v2, theta])
}

/// Field-level principal solve. Modes with a degenerate symbol (the mean and
/// the Nyquist corners) stay zero; dealiased right-hand sides carry no data
/// there.
pub fn principal_solve(
    rhs: &CompressibleRhs,
    p: &FluidParams,
    delta: f64,
) -> (SpectralField, SpectralVectorField, SpectralField) {
    let grid = rhs.mass.grid();
    let mut eta = SpectralField::zeros(grid);
    let mut v = SpectralVectorField::zeros(grid);
    let mut theta = SpectralField::zeros(grid);
    for m in grid.modes() {
        if m.ksq() == 0.0 {
            continue;
        }
        let r = [
            rhs.mass.coeffs()[m.flat],
            rhs.momentum.x().coeffs()[m.flat],
            rhs.momentum.y().coeffs()[m.flat],
            rhs.energy.coeffs()[m.flat],
        ];
        let x = principal_mode_solve([m.kd1, m.kd2], r, p, delta)
            .expect("nonzero mode is not degenerate");
        eta.coeffs_mut()[m.flat] = x[0];
        v.component_mut(0).coeffs_mut()[m.flat] = x[1];
        v.component_mut(1).coeffs_mut()[m.flat] = x[2];
        theta.coeffs_mut()[m.flat] = x[3];
    }
    (eta, v, theta)
}

/// Move every variable-coefficient term to the right, lagged at the current
/// iterate, and project the means.
fn assemble_rhs(
    c: &LinearizedCoeffs<'_>,
    p: &FluidParams,
    eta: &SpectralField,
    v: &SpectralVectorField,
    theta: &SpectralField,
) -> CompressibleRhs {
    let (force, heat) = assemble_forcings(c, eta, p);
    let w = c.u + c.v_tilde;
    let div_vt = c.v_tilde.divergence();
    let grad_tt = c.theta_tilde.gradient();
    let grad_eta = eta.gradient();

    let mass = &(&w.scalar_product(c.p).divergence().scaled(-p.eps) - &c.u.advect_scalar(eta))
        - &(&c.v_tilde.advect_scalar(eta) + &eta.dealiased_product(&div_vt));

    let momentum = &(&force.scaled(p.eps) - &c.v_tilde.advect_vector(c.v_tilde))
        - &(&c.u.advect_vector(v)
            + &(&grad_eta.scalar_product(c.theta_tilde) + &grad_tt.scalar_product(eta)));

    let energy = &(&heat.scaled(p.eps)
        - &(&c.v_tilde.advect_scalar(c.theta_tilde) + &c.theta_tilde.dealiased_product(&div_vt)))
        - &(&c.u.advect_scalar(theta) + &eta.dealiased_product(&div_vt));

    CompressibleRhs::new(mass, momentum, energy, p.eps)
}

/// Residual of the linearized system at `(eta, v, theta)` with every term in
/// place, including the `1/eps` blocks (no cancellation shortcuts), k=0
/// projected.
pub fn linearized_residual(
    c: &LinearizedCoeffs<'_>,
    p: &FluidParams,
    delta: f64,
    eta: &SpectralField,
    v: &SpectralVectorField,
    theta: &SpectralField,
) -> ResidualReport {
    let (force, heat) = assemble_forcings(c, eta, p);
    let w = c.u + c.v_tilde;
    let div_v = v.divergence();
    let div_vt = c.v_tilde.divergence();
    let grad_eta = eta.gradient();
    let grad_tt = c.theta_tilde.gradient();

    let mass = &(&(&eta.laplacian().scaled(-delta) + &c.u.advect_scalar(eta))
        + &div_v.scaled(1.0 / p.eps))
        + &(&(&c.v_tilde.advect_scalar(eta) + &eta.dealiased_product(&div_vt))
            + &w.scalar_product(c.p).divergence().scaled(p.eps));

    let momentum = &(&(&c.u.advect_vector(v) - &v.laplacian().scaled(p.mu))
        - &div_v.gradient().scaled(p.zeta()))
        + &(&(&(&grad_eta + &theta.gradient()).scaled(1.0 / p.eps)
            + &(&grad_eta.scalar_product(c.theta_tilde) + &grad_tt.scalar_product(eta)))
            - &(&force.scaled(p.eps) - &c.v_tilde.advect_vector(c.v_tilde)));

    let energy = &(&(&c.u.advect_scalar(theta) - &theta.laplacian().scaled(p.kappa))
        + &(&div_v.scaled(1.0 / p.eps) + &eta.dealiased_product(&div_vt)))
        - &(&heat.scaled(p.eps)
            - &(&c.v_tilde.advect_scalar(c.theta_tilde)
                + &c.theta_tilde.dealiased_product(&div_vt)));

    ResidualReport::from_parts(mass, momentum, energy)
}

/// Inner Picard solve of the linearized system: lag every variable
/// coefficient term at the previous iterate, invert the principal symbol
/// exactly, relax by `omega`. Convergence requires the update norm below
/// `tol` and the full residual (with its `1/eps` blocks) below `10 tol`.
pub fn solve_linearized(
    c: &LinearizedCoeffs<'_>,
    p: &FluidParams,
    opts: &LinearizedOpts,
    initial: Option<(&SpectralField, &SpectralVectorField, &SpectralField)>,
) -> Result<LinearizedSolution, CompressibleError> {
    let smallness = c.v_tilde.sobolev_norm(3) + c.theta_tilde.sobolev_norm(3);
    if opts.enforce_gates {
        if smallness >= opts.vtheta_gate {
            return Err(CompressibleError::GateExceeded {
                norm: smallness,
                gate: opts.vtheta_gate,
                what: "||v~||_3 + ||theta~||_3",
            });
        }
        if p.eps > opts.eps_gate {
            return Err(CompressibleError::GateExceeded {
                norm: p.eps,
                gate: opts.eps_gate,
                what: "Mach number",
            });
        }
    }

    let grid = c.p.grid();
    let (mut eta, mut v, mut theta) = match initial {
        Some((e, vv, t)) => (e.mean_zero_project(), vv.mean_zero_project(), t.mean_zero_project()),
        None => (
            SpectralField::zeros(grid),
            SpectralVectorField::zeros(grid),
            SpectralField::zeros(grid),
        ),
    };
    let mut omega = opts.omega;
    let mut prev_update = f64::INFINITY;
    let mut growth_streak = 0usize;
    for iter in 1..=opts.max_iter {
        let rhs = assemble_rhs(c, p, &eta, &v, &theta);
        let (eta_new, v_new, theta_new) = principal_solve(&rhs, p, opts.delta);
        let mut eta_next = &eta.scaled(1.0 - omega) + &eta_new.scaled(omega);
        let mut v_next = &v.scaled(1.0 - omega) + &v_new.scaled(omega);
        let mut theta_next = &theta.scaled(1.0 - omega) + &theta_new.scaled(omega);
        eta_next.zero_mean_in_place();
        v_next.zero_mean_in_place();
        theta_next.zero_mean_in_place();

        let update = (&v_next - &v).sobolev_norm(1)
            + (&theta_next - &theta).sobolev_norm(1)
            + (&eta_next - &eta).sobolev_norm(0);
        eta = eta_next;
        v = v_next;
        theta = theta_next;

        if update < opts.tol
            && linearized_residual(c, p, opts.delta, &eta, &v, &theta).total() <= 10.0 * opts.tol
        {
            let final_rhs = assemble_rhs(c, p, &eta, &v, &theta);
            return Ok(LinearizedSolution {
                eta,
                v,
                theta,
                inner_iters: iter,
                k0_discard: final_rhs.k0_discard,
            });
        }
        if update > prev_update {
            // Damping extends the contraction basin; once omega bottoms
            // out, persistent doubling is genuine divergence.
            if omega > 0.1 {
                omega = (omega * 0.5).max(0.1);
            } else if update > 2.0 * prev_update {
                growth_streak += 1;
                if growth_streak >= 2 {
                    return Err(CompressibleError::InnerDivergence { iter, update });
                }
            }
        } else {
            growth_streak = 0;
        }
        prev_update = update;
    }
    Err(CompressibleError::NoConvergence { max_iter: opts.max_iter, last_update: prev_update })
}

/// One energy-form evaluation.
#[derive(Clone, Copy, Debug, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnergyDiagnostics {
    /// `B(x; x)`.
    pub b_quadratic: f64,
    /// `||eta||_0^2 + ||v||_1^2 + ||theta||_1^2`.
    pub lower_bound_norms: f64,
    pub coercivity_ratio: f64,
    /// `|integral((eta+theta) div v + v.grad(eta+theta))|`.
    pub skew_residual: f64,
}

/// Summary of a randomized coercivity probe.
#[derive(Clone, Debug, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoercivityReport {
    pub trials: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Diagnostics of the minimum-ratio trial.
    pub worst: EnergyDiagnostics,
}

/// The variational bilinear form of the regularized linearized system,
/// evaluated by direct quadrature of every term. `x` is the trial triple,
/// `y` the test triple. Bilinear in both slots; not symmetric. The advection
/// block carries its derivatives on the test functions, and the `Delta^{-1}
/// div` reformulation terms appear against `eta_y + theta_y`.
pub fn bilinear_form(
    x: (&SpectralField, &SpectralVectorField, &SpectralField),
    y: (&SpectralField, &SpectralVectorField, &SpectralField),
    c: &LinearizedCoeffs<'_>,
    p: &FluidParams,
    delta: f64,
) -> f64 {
    let (eta_x, v_x, th_x) = x;
    let (eta_y, v_y, th_y) = y;
    let eps = p.eps;
    let w = c.u + c.v_tilde;
    let adv_w = w.advect_vector(&w);
    let div_vt = c.v_tilde.divergence();
    let div_vx = v_x.divergence();
    let div_vy = v_y.divergence();
    let sum_x = eta_x + th_x;
    let sum_y = eta_y + th_y;

    let inv_lap_div = |f: &SpectralVectorField| -> SpectralField {
        f.divergence().inverse_laplacian().expect("divergence is mean-free")
    };

    let mut b = 0.0;
    b += delta * eta_x.gradient().inner(&eta_y.gradient());
    // Advection block, derivatives on the test slot.
    b -= c.u.advect_scalar(eta_y).inner(eta_x);
    b -= c.u.advect_vector(v_y).inner(v_x);
    b -= c.u.advect_scalar(th_y).inner(th_x);
    b -= c.v_tilde.advect_scalar(eta_y).inner(eta_x);
    // Zeroth/first-order diagonal block.
    b += sum_x.inner(&sum_y);
    b += p.mu * v_x.grad_inner(v_y);
    b += p.zeta() * div_vx.inner(&div_vy);
    b += p.kappa * th_x.gradient().inner(&th_y.gradient());
    // Reformulated-row extras tested against eta_y + theta_y.
    let reform = &(&(&eta_x.dealiased_product(c.theta_tilde).scaled(eps)
        + &inv_lap_div(&c.u.advect_vector(v_x)).scaled(eps))
        - &div_vx.scaled(eps * (p.mu + p.zeta())))
        + &(&inv_lap_div(&adv_w.scalar_product(eta_x)).scaled(eps * eps)
            - &inv_lap_div(&c.f.scalar_product(eta_x)).scaled(eps * eps));
    b += reform.inner(&sum_y);
    // Momentum-row eta couplings tested against v_y.
    b += eps * adv_w.scalar_product(eta_x).inner(v_y);
    b -= eps * c.f.scalar_product(eta_x).inner(v_y);
    b -= eta_x.dealiased_product(c.theta_tilde).inner(&div_vy);
    // Energy-row eta couplings tested against theta_y.
    b += eps * eta_x.dealiased_product(&w.advect_scalar(c.theta_tilde)).inner(th_y);
    b -= eps * eta_x.dealiased_product(c.theta_tilde).dealiased_product(&div_vt).inner(th_y);
    b += eta_x.dealiased_product(&div_vt).inner(th_y);
    // The 1/eps block; at x = y it cancels exactly.
    b += (div_vx.inner(eta_y) - div_vy.inner(&sum_x) + div_vx.inner(th_y)) / eps;
    b
}

/// `|integral((eta+theta) div v + v.grad(eta+theta))|`: zero by parts on the
/// torus; the return value is the quadrature magnitude.
pub fn skew_identity_check(
    eta: &SpectralField,
    theta: &SpectralField,
    v: &SpectralVectorField,
) -> f64 {
    let sum = eta + theta;
    libm::fabs(sum.inner(&v.divergence()) + v.advect_scalar(&sum).mean())
}

/// Randomized lower-bound probe of the quadratic form `B(x; x)` against
/// `||eta||_0^2 + ||v||_1^2 + ||theta||_1^2`. States are drawn mean-zero and
/// band-limited; out-of-hypothesis coefficient fields may drive the ratio
/// negative, which is reported, not asserted against.
pub fn coercivity_probe(
    c: &LinearizedCoeffs<'_>,
    p: &FluidParams,
    delta: f64,
    trials: usize,
    seed: u64,
) -> CoercivityReport {
    let grid = c.p.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CoercivityReport {
        trials,
        min_ratio: f64::INFINITY,
        max_ratio: f64::NEG_INFINITY,
        worst: EnergyDiagnostics::default(),
    };
    for _ in 0..trials {
        let eta = probe::random_field(grid, &mut rng, 8, 1.0);
        let v = probe::random_vector_field(grid, &mut rng, 8, 1.0);
        let theta = probe::random_field(grid, &mut rng, 8, 1.0);
        let b = bilinear_form((&eta, &v, &theta), (&eta, &v, &theta), c, p, delta);
        let (n_eta, n_v, n_th) = (eta.sobolev_norm(0), v.sobolev_norm(1), theta.sobolev_norm(1));
        let lower = n_eta * n_eta + n_v * n_v + n_th * n_th;
        let ratio = b / lower;
        if ratio < report.min_ratio {
            report.min_ratio = ratio;
            report.worst = EnergyDiagnostics {
                b_quadratic: b,
                lower_bound_norms: lower,
                coercivity_ratio: ratio,
                skew_residual: skew_identity_check(&eta, &theta, &v),
            };
        }
        report.max_ratio = report.max_ratio.max(ratio);
    }
    report
}

/// Zero coefficient bundle, for probes and tests exercising the
/// constant-coefficient limit.
pub struct ZeroCoeffs {
    pub u: SpectralVectorField,
    pub p: SpectralField,
    pub v_tilde: SpectralVectorField,
    pub theta_tilde: SpectralField,
    pub f: SpectralVectorField,
}

impl ZeroCoeffs {
    pub fn new(grid: Grid) -> Self {
        Self {
            u: SpectralVectorField::zeros(grid),
            p: SpectralField::zeros(grid),
            v_tilde: SpectralVectorField::zeros(grid),
            theta_tilde: SpectralField::zeros(grid),
            f: SpectralVectorField::zeros(grid),
        }
    }

    pub fn coeffs(&self) -> LinearizedCoeffs<'_> {
        LinearizedCoeffs {
            u: &self.u,
            p: &self.p,
            v_tilde: &self.v_tilde,
            theta_tilde: &self.theta_tilde,
            f: &self.f,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::dense_symbol_solve;
    use crate::fields::taylor_green;
    use crate::incompressible::{solve_incompressible_ns, StokesOpts};
    use rand_core::RngCore;

    fn grid() -> Grid {
        Grid::new(32).unwrap()
    }

    fn params(eps: f64) -> FluidParams {
        FluidParams::new(1.0, 0.3, 1.2, eps).unwrap()
    }

    fn rand_c(rng: &mut ChaCha8Rng) -> Complex64 {
        Complex64::new(probe::uniform(rng), probe::uniform(rng))
    }

    #[test]
    fn principal_mode_rejects_zero_mode() {
        let p = params(0.1);
        let z = Complex64::new(0.0, 0.0);
        assert!(matches!(
            principal_mode_solve([0.0, 0.0], [z; 4], &p, 0.0),
            Err(CompressibleError::DegenerateMode)
        ));
    }

    #[test]
    fn principal_mode_zero_rhs() {
        let p = params(0.1);
        let z = Complex64::new(0.0, 0.0);
        let x = principal_mode_solve([3.0, -2.0], [z; 4], &p, 0.0).unwrap();
        assert!(x.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn principal_mode_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for &eps in &[0.999, 0.1, 0.01, 0.001] {
            let p = FluidParams::new(0.7, 0.4, 1.3, eps).unwrap();
            for _ in 0..25 {
                let k = [
                    (rng.next_u64() % 21) as f64 - 10.0,
                    (rng.next_u64() % 21) as f64 - 10.0,
                ];
                if k[0] == 0.0 && k[1] == 0.0 {
                    continue;
                }
                for &delta in &[0.0, 0.05] {
                    let rhs =
                        [rand_c(&mut rng), rand_c(&mut rng), rand_c(&mut rng), rand_c(&mut rng)];
                    let fast = principal_mode_solve(k, rhs, &p, delta).unwrap();
                    let dense = dense_symbol_solve(k, rhs, &p, delta);
                    let scale = dense.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1e-300);
                    for i in 0..4 {
                        assert!(
                            (fast[i] - dense[i]).norm() <= 1e-12 * scale,
                            "eps={eps} k={k:?} i={i}: {} vs {}",
                            fast[i],
                            dense[i]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn principal_mode_residual_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for &eps in &[0.999, 0.1, 0.001] {
            let p = params(eps);
            let k = [2.0, -7.0];
            let ksq = k[0] * k[0] + k[1] * k[1];
            let rhs = [rand_c(&mut rng), rand_c(&mut rng), rand_c(&mut rng), rand_c(&mut rng)];
            let x = principal_mode_solve(k, rhs, &p, 0.0).unwrap();
            let (eta, v1, v2, theta) = (x[0], x[1], x[2], x[3]);
            let kv = k[0] * v1 + k[1] * v2;
            let i = Complex64::i();
            let res = [
                i * kv / p.eps - rhs[0],
                p.mu * ksq * v1 + p.zeta() * k[0] * kv + i * k[0] / p.eps * (eta + theta) - rhs[1],
                p.mu * ksq * v2 + p.zeta() * k[1] * kv + i * k[1] / p.eps * (eta + theta) - rhs[2],
                p.kappa * ksq * theta + i * kv / p.eps - rhs[3],
            ];
            // The equations themselves carry 1/eps factors, so measure
            // relative to the row scale.
            let scale = rhs.iter().map(|c| c.norm()).fold(0.0, f64::max) / p.eps.min(1.0);
            for r in res {
                assert!(r.norm() <= 1e-12 * scale, "eps={eps}: residual {r}");
            }
        }
    }

    #[test]
    fn principal_mass_row_closed_form() {
        // r_mass = 0 forces div v = 0 exactly (the mass row is a closed form
        // for the longitudinal velocity).
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let p = params(0.05);
        let z = Complex64::new(0.0, 0.0);
        let rhs = [z, rand_c(&mut rng), rand_c(&mut rng), rand_c(&mut rng)];
        let k = [4.0, 3.0];
        let x = principal_mode_solve(k, rhs, &p, 0.0).unwrap();
        // The closed-form longitudinal velocity is exactly zero; assembling
        // k.v from the components reintroduces one rounding of the
        // transverse projection.
        let kv = k[0] * x[1] + k[1] * x[2];
        let scale = rhs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(kv.norm() <= 1e-15 * scale, "k.v = {kv}");
    }

    #[test]
    fn assemble_forcings_trivial_cases() {
        let z = ZeroCoeffs::new(grid());
        let p = params(0.1);
        let (force, heat) = assemble_forcings(&z.coeffs(), &SpectralField::zeros(grid()), &p);
        assert_eq!(force.max_abs_coeff(), 0.0);
        assert_eq!(heat.max_abs_coeff(), 0.0);

        // Only U nonzero: F = 0 and G = Psi(U) exactly.
        let (u_star, _) = taylor_green(grid(), 0.7);
        let mut zc = ZeroCoeffs::new(grid());
        zc.u = u_star.clone();
        let (force, heat) = assemble_forcings(&zc.coeffs(), &SpectralField::zeros(grid()), &p);
        assert!(force.max_abs_coeff() <= 1e-15);
        let psi = fields::dissipation(&u_star, &p);
        assert!((&heat - &psi).max_abs_coeff() <= 1e-15);
    }

    #[test]
    fn assemble_forcings_matches_oversampled_oracle() {
        // Small-band inputs: triple products stay inside the dealias band,
        // so the dense evaluation on a doubled grid is exact.
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let p = params(0.2);
        let g = grid();
        let fine = Grid::new(64).unwrap();

        let u = probe::random_solenoidal(g, &mut rng, 3, 0.4);
        let pres = probe::random_field(g, &mut rng, 3, 0.4);
        let vt = probe::random_vector_field(g, &mut rng, 3, 0.3);
        let tt = probe::random_field(g, &mut rng, 3, 0.3);
        let f = probe::random_vector_field(g, &mut rng, 3, 0.5);
        let eta = probe::random_field(g, &mut rng, 3, 0.3);

        let coeffs = LinearizedCoeffs { u: &u, p: &pres, v_tilde: &vt, theta_tilde: &tt, f: &f };
        let (force, heat) = assemble_forcings(&coeffs, &eta, &p);

        let embed_v = |v: &SpectralVectorField| {
            SpectralVectorField::new(probe::embed(v.x(), fine), probe::embed(v.y(), fine))
        };
        let (fu, fvt, ff) = (embed_v(&u), embed_v(&vt), embed_v(&f));
        let fp = probe::embed(&pres, fine);
        let ftt = probe::embed(&tt, fine);
        let feta = probe::embed(&eta, fine);
        let fcoeffs =
            LinearizedCoeffs { u: &fu, p: &fp, v_tilde: &fvt, theta_tilde: &ftt, f: &ff };
        let (force_f, heat_f) = assemble_forcings(&fcoeffs, &feta, &p);

        assert!((&probe::restrict(force_f.x(), g) - force.x()).max_abs_coeff() <= 1e-11);
        assert!((&probe::restrict(force_f.y(), g) - force.y()).max_abs_coeff() <= 1e-11);
        assert!((&probe::restrict(&heat_f, g) - &heat).max_abs_coeff() <= 1e-11);
    }

    #[test]
    fn solve_linearized_zero_data() {
        let z = ZeroCoeffs::new(grid());
        let p = params(0.1);
        let sol = solve_linearized(&z.coeffs(), &p, &LinearizedOpts::default(), None).unwrap();
        assert_eq!(sol.inner_iters, 1);
        assert!(sol.eta.max_abs_coeff() == 0.0);
        assert!(sol.v.max_abs_coeff() == 0.0);
        assert!(sol.theta.max_abs_coeff() == 0.0);
    }

    fn taylor_green_setup(eps: f64) -> (ZeroCoeffs, FluidParams) {
        let p = params(eps);
        let (u_star, p_star) = taylor_green(grid(), 0.4);
        let h = fields::mms_forcing(&u_star, &p_star, p.mu).unwrap();
        let z = SpectralVectorField::zeros(grid());
        let sol = solve_incompressible_ns(&h, &z, &z, p.mu, &StokesOpts::default(), None).unwrap();
        let mut zc = ZeroCoeffs::new(grid());
        zc.u = sol.u;
        zc.p = sol.p;
        zc.f = h;
        (zc, p)
    }

    #[test]
    fn solve_linearized_taylor_green_residual() {
        let (zc, p) = taylor_green_setup(0.1);
        let opts = LinearizedOpts::default();
        let sol = solve_linearized(&zc.coeffs(), &p, &opts, None).unwrap();
        let res = linearized_residual(&zc.coeffs(), &p, opts.delta, &sol.eta, &sol.v, &sol.theta);
        assert!(res.total() <= 1e-9, "residual {}", res.total());
        assert!(libm::fabs(sol.eta.mean()) == 0.0);
        assert!(libm::fabs(sol.theta.mean()) == 0.0);
    }

    #[test]
    fn solve_linearized_two_seed_uniqueness() {
        let (zc, p) = taylor_green_setup(0.05);
        let opts = LinearizedOpts::default();
        let a = solve_linearized(&zc.coeffs(), &p, &opts, None).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let e0 = probe::random_field(grid(), &mut rng, 5, 0.05);
        let v0 = probe::random_vector_field(grid(), &mut rng, 5, 0.05);
        let t0 = probe::random_field(grid(), &mut rng, 5, 0.05);
        let b = solve_linearized(&zc.coeffs(), &p, &opts, Some((&e0, &v0, &t0))).unwrap();

        let gap = (&a.eta - &b.eta).sobolev_norm(0)
            + (&a.v - &b.v).sobolev_norm(1)
            + (&a.theta - &b.theta).sobolev_norm(1);
        assert!(gap <= 1e-9, "two-seed gap {gap}");
    }

    #[test]
    fn solve_linearized_delta_regularization() {
        let (zc, p) = taylor_green_setup(0.1);
        // delta = 0 twice is bit-identical (same code path).
        let o0 = LinearizedOpts::default();
        let a = solve_linearized(&zc.coeffs(), &p, &o0, None).unwrap();
        let b = solve_linearized(&zc.coeffs(), &p, &o0, None).unwrap();
        assert!((&a.eta - &b.eta).max_abs_coeff() == 0.0);
        assert_eq!(a.inner_iters, b.inner_iters);

        // delta > 0: the residual including -delta lap eta stays small.
        let od = LinearizedOpts { delta: 0.05, ..o0 };
        let d = solve_linearized(&zc.coeffs(), &p, &od, None).unwrap();
        let res = linearized_residual(&zc.coeffs(), &p, od.delta, &d.eta, &d.v, &d.theta);
        assert!(res.total() <= 1e-9, "delta residual {}", res.total());
        // And it genuinely differs from the unregularized solution.
        assert!((&a.eta - &d.eta).max_abs_coeff() > 0.0);
    }

    #[test]
    fn solve_linearized_gates() {
        let g = grid();
        let mut zc = ZeroCoeffs::new(g);
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        zc.v_tilde = probe::random_vector_field(g, &mut rng, 4, 5.0);
        let p = params(0.1);
        assert!(matches!(
            solve_linearized(&zc.coeffs(), &p, &LinearizedOpts::default(), None),
            Err(CompressibleError::GateExceeded { .. })
        ));
        let p_big = params(0.9);
        let zc2 = ZeroCoeffs::new(g);
        assert!(matches!(
            solve_linearized(&zc2.coeffs(), &p_big, &LinearizedOpts::default(), None),
            Err(CompressibleError::GateExceeded { .. })
        ));
    }

    #[test]
    fn bilinear_form_zero_and_dropout() {
        let g = grid();
        let z = ZeroCoeffs::new(g);
        let p = params(0.1);
        let ze = SpectralField::zeros(g);
        let zv = SpectralVectorField::zeros(g);
        let b = bilinear_form((&ze, &zv, &ze), (&ze, &zv, &ze), &z.coeffs(), &p, 0.0);
        assert_eq!(b, 0.0);

        // Term-dropout closed form: with all coefficients zero the form
        // keeps the diagonal block plus the one reformulation term without
        // coefficient dependence, -eps(mu+zeta) integral(div v (eta+theta)):
        // B(x;x) = ||eta+theta||_0^2 + mu |grad v|^2 + zeta ||div v||_0^2
        //          + kappa |grad theta|^2 - eps(mu+zeta) (div v, eta+theta).
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for _ in 0..5 {
            let eta = probe::random_field(g, &mut rng, 8, 1.0);
            let v = probe::random_vector_field(g, &mut rng, 8, 1.0);
            let th = probe::random_field(g, &mut rng, 8, 1.0);
            let b = bilinear_form((&eta, &v, &th), (&eta, &v, &th), &z.coeffs(), &p, 0.0);
            let sum = &eta + &th;
            let div = v.divergence();
            let closed = sum.sobolev_norm(0) * sum.sobolev_norm(0)
                + p.mu * (v.x().grad_sq_integral() + v.y().grad_sq_integral())
                + p.zeta() * div.sobolev_norm(0) * div.sobolev_norm(0)
                + p.kappa * th.grad_sq_integral()
                - p.eps * (p.mu + p.zeta()) * div.inner(&sum);
            assert!(libm::fabs(b - closed) <= 1e-11 * closed.max(1.0), "{b} vs {closed}");
        }
    }

    #[test]
    fn bilinear_form_eps_block_self_cancellation() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(48);
        let p = params(0.01);
        let eta = probe::random_field(g, &mut rng, 8, 1.0);
        let v = probe::random_vector_field(g, &mut rng, 8, 1.0);
        let th = probe::random_field(g, &mut rng, 8, 1.0);
        let div = v.divergence();
        let sum = &eta + &th;
        let block = (div.inner(&eta) - div.inner(&sum) + div.inner(&th)) / p.eps;
        assert!(libm::fabs(block) <= 1e-12);
    }

    #[test]
    fn bilinear_form_is_bilinear_and_delta_linear() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(49);
        let p = params(0.1);
        let mut zc = ZeroCoeffs::new(g);
        zc.u = probe::random_solenoidal(g, &mut rng, 4, 0.3);
        zc.v_tilde = probe::random_vector_field(g, &mut rng, 4, 0.2);
        zc.theta_tilde = probe::random_field(g, &mut rng, 4, 0.2);
        zc.f = probe::random_vector_field(g, &mut rng, 4, 0.4);
        let c = zc.coeffs();

        let mut triple = |amp: f64| {
            (
                probe::random_field(g, &mut rng, 6, amp),
                probe::random_vector_field(g, &mut rng, 6, amp),
                probe::random_field(g, &mut rng, 6, amp),
            )
        };
        let x1 = triple(1.0);
        let x2 = triple(1.0);
        let y = triple(1.0);

        // Linearity in the trial slot.
        let comb = (&(&x1.0 + &x2.0.scaled(2.0)), &(&x1.1 + &x2.1.scaled(2.0)), &(&x1.2 + &x2.2.scaled(2.0)));
        let lhs = bilinear_form((comb.0, comb.1, comb.2), (&y.0, &y.1, &y.2), &c, &p, 0.03);
        let rhs = bilinear_form((&x1.0, &x1.1, &x1.2), (&y.0, &y.1, &y.2), &c, &p, 0.03)
            + 2.0 * bilinear_form((&x2.0, &x2.1, &x2.2), (&y.0, &y.1, &y.2), &c, &p, 0.03);
        assert!(libm::fabs(lhs - rhs) <= 1e-9 * libm::fabs(lhs).max(1.0));

        // Linearity in the test slot.
        let comb = (&(&y.0 + &x2.0.scaled(-1.5)), &(&y.1 + &x2.1.scaled(-1.5)), &(&y.2 + &x2.2.scaled(-1.5)));
        let lhs = bilinear_form((&x1.0, &x1.1, &x1.2), (comb.0, comb.1, comb.2), &c, &p, 0.03);
        let rhs = bilinear_form((&x1.0, &x1.1, &x1.2), (&y.0, &y.1, &y.2), &c, &p, 0.03)
            - 1.5 * bilinear_form((&x1.0, &x1.1, &x1.2), (&x2.0, &x2.1, &x2.2), &c, &p, 0.03);
        assert!(libm::fabs(lhs - rhs) <= 1e-9 * libm::fabs(lhs).max(1.0));

        // delta enters as exactly delta * ||grad eta||_0^2 on the diagonal.
        let b0 = bilinear_form((&x1.0, &x1.1, &x1.2), (&x1.0, &x1.1, &x1.2), &c, &p, 0.0);
        let b1 = bilinear_form((&x1.0, &x1.1, &x1.2), (&x1.0, &x1.1, &x1.2), &c, &p, 0.1);
        let want = 0.1 * x1.0.grad_sq_integral();
        assert!(libm::fabs((b1 - b0) - want) <= 1e-12 * want.max(1.0));
    }

    #[test]
    fn skew_identity_cases() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        // v = 0: exactly zero.
        let eta = probe::random_field(g, &mut rng, 8, 1.0);
        let th = probe::random_field(g, &mut rng, 8, 1.0);
        assert_eq!(skew_identity_check(&eta, &th, &SpectralVectorField::zeros(g)), 0.0);

        // eta + theta constant: reduces to |integral(c div v)| = 0.
        let c_field = SpectralField::from_fn(g, |_, _| 0.8);
        let v = probe::random_vector_field(g, &mut rng, 8, 1.0);
        assert!(skew_identity_check(&c_field, &SpectralField::zeros(g), &v) <= 1e-13);

        // 50 random triples, relative to the natural scale.
        for _ in 0..50 {
            let eta = probe::random_field(g, &mut rng, 10, 1.0);
            let th = probe::random_field(g, &mut rng, 10, 1.0);
            let v = probe::random_vector_field(g, &mut rng, 10, 1.0);
            let raw = skew_identity_check(&eta, &th, &v);
            let scale = (&eta + &th).sobolev_norm(1) * v.sobolev_norm(1);
            assert!(raw <= 1e-12 * scale.max(1.0), "raw {raw} scale {scale}");
        }
    }

    #[test]
    fn coercivity_probe_zero_coeffs_positive() {
        let z = ZeroCoeffs::new(grid());
        let p = params(0.1);
        let rep = coercivity_probe(&z.coeffs(), &p, 0.0, 100, 99);
        assert!(rep.min_ratio > 0.0, "min ratio {}", rep.min_ratio);
        assert_eq!(rep.trials, 100);
        assert!(rep.worst.skew_residual >= 0.0);
    }

    #[test]
    fn coercivity_probe_adversarial_reports_without_failing() {
        // ||theta~||_2 far outside the hypotheses: the ratio may go
        // negative; the probe must simply report it.
        let g = grid();
        let mut zc = ZeroCoeffs::new(g);
        zc.theta_tilde = SpectralField::from_fn(g, |x, y| 10.0 * libm::sin(x) * libm::cos(y));
        let p = params(0.2);
        let rep = coercivity_probe(&zc.coeffs(), &p, 0.0, 20, 7);
        assert!(rep.min_ratio.is_finite());
    }

    #[test]
    fn k0_discard_units_follow_transformed_scaling() {
        let (zc, p) = taylor_green_setup(0.1);
        let sol = solve_linearized(&zc.coeffs(), &p, &LinearizedOpts::default(), None).unwrap();
        // Mass row is a perfect divergence on the torus: zero discard.
        assert!(sol.k0_discard[0] <= 1e-14);
        // Energy row carries the eps^2-scaled dissipation mean.
        assert!(sol.k0_discard[2] > 0.0);
    }
}
