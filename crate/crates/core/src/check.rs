//! Runtime invariant suite: every machine-checkable property from the
//! module contracts, runnable on demand (`lowmach check`) with configured
//! trial counts and seed.
//!
//! The per-mode oracle [`dense_symbol_solve`] lives here rather than in the
//! solver: it is the independent reference path (pivoted elimination on the
//! assembled 4x4 symbol matrix) that the closed-form block solve is checked
//! against, and is deliberately kept apart from the production code.

use crate::compressible::{self, ZeroCoeffs};
use crate::fields::{self, FluidParams};
use crate::incompressible;
use crate::probe;
use crate::spectral::{Grid, SpectralField};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Dense reference solve of the principal symbol: assemble the full 4x4
/// complex matrix in the unknown order `(eta, v1, v2, theta)` and run
/// Gaussian elimination with partial pivoting.
pub fn dense_symbol_solve(
    k: [f64; 2],
    rhs: [Complex64; 4],
    p: &FluidParams,
    delta: f64,
) -> [Complex64; 4] {
    let ksq = k[0] * k[0] + k[1] * k[1];
    let z = Complex64::new(0.0, 0.0);
    let i = Complex64::i();
    let ie = i / p.eps;
    let mut m = [
        [Complex64::new(delta * ksq, 0.0), ie * k[0], ie * k[1], z],
        [
            ie * k[0],
            Complex64::new(p.mu * ksq + p.zeta() * k[0] * k[0], 0.0),
            Complex64::new(p.zeta() * k[0] * k[1], 0.0),
            ie * k[0],
        ],
        [
            ie * k[1],
            Complex64::new(p.zeta() * k[0] * k[1], 0.0),
            Complex64::new(p.mu * ksq + p.zeta() * k[1] * k[1], 0.0),
            ie * k[1],
        ],
        [z, ie * k[0], ie * k[1], Complex64::new(p.kappa * ksq, 0.0)],
    ];
    let mut b = rhs;

    for col in 0..4 {
        let mut pivot = col;
        for row in col + 1..4 {
            if m[row][col].norm() > m[pivot][col].norm() {
                pivot = row;
            }
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        let inv = Complex64::new(1.0, 0.0) / m[col][col];
        for row in col + 1..4 {
            let factor = m[row][col] * inv;
            for j in col..4 {
                let sub = factor * m[col][j];
                m[row][j] -= sub;
            }
            let sub = factor * b[col];
            b[row] -= sub;
        }
    }
    let mut x = [z; 4];
    for row in (0..4).rev() {
        let mut acc = b[row];
        for j in row + 1..4 {
            acc -= m[row][j] * x[j];
        }
        x[row] = acc / m[row][row];
    }
    x
}

/// Configuration of the invariant suite.
#[derive(Clone, Copy, Debug)]
pub struct CheckConfig {
    pub grid: Grid,
    pub params: FluidParams,
    pub trials: usize,
    pub seed: u64,
    pub delta: f64,
}

/// One property outcome.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn result(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

/// Run the whole suite; the caller decides what to do with failures.
pub fn run_all(cfg: &CheckConfig) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let g = cfg.grid;
    let p = cfg.params;
    let trials = cfg.trials.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Transform round trip.
    {
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let f = probe::random_field(g, &mut rng, (g.n() / 2 - 1) as i64, 1.0);
            let back = SpectralField::from_physical(g, &f.to_physical());
            worst = worst.max((&back - &f).max_abs_coeff() / f.max_abs_coeff().max(1e-300));
        }
        out.push(result("transform_round_trip", worst <= 1e-13, format!("worst rel {worst:.3e}")));
    }

    // Parseval.
    {
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let f = probe::random_field(g, &mut rng, (g.n() / 4) as i64, 1.0);
            let n0 = f.sobolev_norm(0);
            let vals = f.to_physical();
            let quad = vals.iter().map(|v| v * v).sum::<f64>() / vals.len() as f64;
            worst = worst.max(libm::fabs(n0 * n0 - quad) / quad.max(1e-300));
        }
        out.push(result("parseval", worst <= 1e-12, format!("worst rel {worst:.3e}")));
    }

    // div(grad f) = lap f, coefficient-wise.
    {
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let f = probe::random_field(g, &mut rng, (g.n() / 2 - 1) as i64, 1.0);
            worst = worst.max((&f.gradient().divergence() - &f.laplacian()).max_abs_coeff());
        }
        out.push(result("div_grad_equals_laplacian", worst <= 1e-14, format!("worst {worst:.3e}")));
    }

    // lap(inverse_lap(f)) = f on mean-zero fields.
    {
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let f = probe::random_field(g, &mut rng, g.dealias_cutoff().min(g.n() as i64 / 2 - 1), 1.0);
            let back = f.inverse_laplacian().expect("mean-zero input").laplacian();
            worst = worst.max((&back - &f).max_abs_coeff() / f.max_abs_coeff().max(1e-300));
        }
        out.push(result("inverse_laplacian_round_trip", worst <= 1e-13, format!("worst rel {worst:.3e}")));
    }

    // Derivative commutes with the mean projection.
    {
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let f = probe::random_field_with_mean(g, &mut rng, 8, 1.0, 0.5);
            for axis in 0..2 {
                let a = f.derivative(axis).mean_zero_project();
                let b = f.mean_zero_project().derivative(axis);
                worst = worst.max((&a - &b).max_abs_coeff());
            }
        }
        out.push(result("derivative_projection_commute", worst <= 1e-15, format!("worst {worst:.3e}")));
    }

    // Dealiased product: bilinear and symmetric.
    {
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let a = probe::random_field(g, &mut rng, 9, 1.0);
            let b = probe::random_field(g, &mut rng, 9, 1.0);
            let c = probe::random_field(g, &mut rng, 9, 1.0);
            worst = worst.max((&a.dealiased_product(&b) - &b.dealiased_product(&a)).max_abs_coeff());
            let lhs = a.dealiased_product(&(&b + &c));
            let rhs = &a.dealiased_product(&b) + &a.dealiased_product(&c);
            worst = worst.max((&lhs - &rhs).max_abs_coeff());
        }
        out.push(result("product_bilinear_symmetric", worst <= 1e-13, format!("worst {worst:.3e}")));
    }

    // Alias-free product against the oversampled oracle. This is the
    // negative control for broken dealias fractions: with the cutoff at the
    // Nyquist limit, aliased energy lands inside the retained band and the
    // comparison fails.
    {
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let a = probe::random_field(g, &mut rng, (g.n() / 2 - 1) as i64, 1.0);
            let b = probe::random_field(g, &mut rng, (g.n() / 2 - 1) as i64, 1.0);
            let got = a.dealiased_product(&b);
            let want = probe::oversampled_product(&a, &b);
            worst = worst.max((&got - &want).max_abs_coeff());
        }
        out.push(result("product_alias_free", worst <= 1e-12, format!("worst {worst:.3e}")));
    }

    // Deformation tensor: trace equals divergence.
    {
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let u = probe::random_vector_field(g, &mut rng, 10, 1.0);
            let d = fields::deformation_tensor(&u);
            worst = worst.max((&d.trace() - &u.divergence()).max_abs_coeff());
        }
        out.push(result("deformation_trace_is_divergence", worst <= 1e-13, format!("worst {worst:.3e}")));
    }

    // Dissipation nonnegative pointwise (lambda >= 0 and resolved band).
    {
        let p_pos = FluidParams::new(p.mu, p.lambda.max(0.0), p.kappa, p.eps).expect("valid");
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let u = probe::random_vector_field(g, &mut rng, (g.dealias_cutoff() / 2).max(1), 1.0);
            worst = worst.min(fields::dissipation(&u, &p_pos).min_value());
        }
        out.push(result("dissipation_nonnegative", worst >= -1e-12, format!("min {worst:.3e}")));
    }

    // Mass-residual identity div(varrho u) = div u + eps div(rho u).
    {
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let u = probe::random_vector_field(g, &mut rng, 8, 0.5);
            let rho = probe::random_field(g, &mut rng, 8, 0.5);
            let rho_u = u.scalar_product(&rho);
            let lhs = (&u + &rho_u.scaled(p.eps)).divergence();
            let rhs = &u.divergence() + &rho_u.divergence().scaled(p.eps);
            worst = worst.max((&lhs - &rhs).max_abs_coeff());
        }
        out.push(result("mass_residual_identity", worst <= 1e-13, format!("worst {worst:.3e}")));
    }

    // Exact Stokes mode solve: assembled residual and solenoidality.
    {
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let rhs = probe::random_vector_field(g, &mut rng, 10, 1.0);
            let (u, pf) = incompressible::stokes_mode_solve(&rhs, p.mu);
            let res = &(&pf.gradient() - &u.laplacian().scaled(p.mu)) - &rhs.mean_zero_project();
            worst = worst.max(res.sobolev_norm(0)).max(u.divergence().sobolev_norm(0));
        }
        out.push(result("stokes_mode_exact", worst <= 1e-12, format!("worst {worst:.3e}")));
    }

    // Advection energy neutrality for solenoidal advecting fields.
    {
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let a = probe::random_solenoidal(g, &mut rng, 8, 1.0);
            let u = probe::random_vector_field(g, &mut rng, 8, 1.0);
            let q = a.advect_vector(&u).inner(&u);
            let scale = (a.sobolev_norm(1) * u.sobolev_norm(1) * u.sobolev_norm(1)).max(1.0);
            worst = worst.max(libm::fabs(q) / scale);
        }
        out.push(result("advection_energy_neutral", worst <= 1e-11, format!("worst rel {worst:.3e}")));
    }

    // Principal block solve against the dense symbol oracle.
    {
        let mut worst = 0.0f64;
        for &eps in &[1.0, 0.1, 0.01, 0.001] {
            let pe = FluidParams::new(p.mu, p.lambda, p.kappa, eps).expect("valid");
            for _ in 0..trials {
                let k = [
                    (rng.next_u64() % 21) as f64 - 10.0,
                    (rng.next_u64() % 21) as f64 - 10.0,
                ];
                if k[0] == 0.0 && k[1] == 0.0 {
                    continue;
                }
                let rhs = [
                    Complex64::new(probe::uniform(&mut rng), probe::uniform(&mut rng)),
                    Complex64::new(probe::uniform(&mut rng), probe::uniform(&mut rng)),
                    Complex64::new(probe::uniform(&mut rng), probe::uniform(&mut rng)),
                    Complex64::new(probe::uniform(&mut rng), probe::uniform(&mut rng)),
                ];
                let fast =
                    compressible::principal_mode_solve(k, rhs, &pe, cfg.delta).expect("k != 0");
                let dense = dense_symbol_solve(k, rhs, &pe, cfg.delta);
                let scale = dense.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1e-300);
                for i in 0..4 {
                    worst = worst.max((fast[i] - dense[i]).norm() / scale);
                }
            }
        }
        out.push(result("principal_mode_oracle", worst <= 1e-12, format!("worst rel {worst:.3e}")));
    }

    // Skew identity.
    {
        let mut worst = 0.0f64;
        for _ in 0..trials.max(50) {
            let eta = probe::random_field(g, &mut rng, 10, 1.0);
            let th = probe::random_field(g, &mut rng, 10, 1.0);
            let v = probe::random_vector_field(g, &mut rng, 10, 1.0);
            let raw = compressible::skew_identity_check(&eta, &th, &v);
            let scale = ((&eta + &th).sobolev_norm(1) * v.sobolev_norm(1)).max(1.0);
            worst = worst.max(raw / scale);
        }
        out.push(result("skew_identity", worst <= 1e-12, format!("worst rel {worst:.3e}")));
    }

    // Coercivity with zero coefficients: strictly positive ratio and exact
    // agreement with the term-dropout closed form.
    {
        let zc = ZeroCoeffs::new(g);
        let rep = compressible::coercivity_probe(&zc.coeffs(), &p, 0.0, trials.max(100), cfg.seed ^ 0x5eed);
        let mut closed_worst = 0.0f64;
        let mut rng2 = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xc0);
        for _ in 0..trials {
            let eta = probe::random_field(g, &mut rng2, 8, 1.0);
            let v = probe::random_vector_field(g, &mut rng2, 8, 1.0);
            let th = probe::random_field(g, &mut rng2, 8, 1.0);
            let b = compressible::bilinear_form((&eta, &v, &th), (&eta, &v, &th), &zc.coeffs(), &p, 0.0);
            let sum = &eta + &th;
            let div = v.divergence();
            let closed = sum.sobolev_norm(0) * sum.sobolev_norm(0)
                + p.mu * (v.x().grad_sq_integral() + v.y().grad_sq_integral())
                + p.zeta() * div.sobolev_norm(0) * div.sobolev_norm(0)
                + p.kappa * th.grad_sq_integral()
                - p.eps * (p.mu + p.zeta()) * div.inner(&sum);
            closed_worst = closed_worst.max(libm::fabs(b - closed) / closed.max(1e-300));
        }
        let pass = rep.min_ratio > 0.0 && closed_worst <= 1e-9;
        out.push(result(
            "coercivity_zero_coeffs",
            pass,
            format!("min ratio {:.3e}, closed-form worst rel {closed_worst:.3e}", rep.min_ratio),
        ));
    }

    // 1/eps block self-cancellation inside the bilinear form.
    {
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let eta = probe::random_field(g, &mut rng, 8, 1.0);
            let v = probe::random_vector_field(g, &mut rng, 8, 1.0);
            let th = probe::random_field(g, &mut rng, 8, 1.0);
            let div = v.divergence();
            let sum = &eta + &th;
            let block = (div.inner(&eta) - div.inner(&sum) + div.inner(&th)) / p.eps;
            worst = worst.max(libm::fabs(block));
        }
        out.push(result("bilinear_eps_block_cancels", worst <= 1e-12, format!("worst {worst:.3e}")));
    }

    // delta enters the quadratic form as exactly delta * |grad eta|^2.
    {
        let zc = ZeroCoeffs::new(g);
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let eta = probe::random_field(g, &mut rng, 8, 1.0);
            let v = probe::random_vector_field(g, &mut rng, 8, 1.0);
            let th = probe::random_field(g, &mut rng, 8, 1.0);
            let b0 = compressible::bilinear_form((&eta, &v, &th), (&eta, &v, &th), &zc.coeffs(), &p, 0.0);
            let b1 = compressible::bilinear_form((&eta, &v, &th), (&eta, &v, &th), &zc.coeffs(), &p, 0.1);
            let want = 0.1 * eta.grad_sq_integral();
            worst = worst.max(libm::fabs(b1 - b0 - want) / want.max(1e-300));
        }
        out.push(result("bilinear_delta_linearity", worst <= 1e-12, format!("worst rel {worst:.3e}")));
    }

    // compose is linear in each slot.
    {
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let s = fields::SplitState {
                u_inc: probe::random_solenoidal(g, &mut rng, 6, 1.0),
                p_inc: probe::random_field(g, &mut rng, 6, 1.0),
                v: probe::random_vector_field(g, &mut rng, 6, 0.4),
                eta: probe::random_field(g, &mut rng, 6, 0.4),
                theta: probe::random_field(g, &mut rng, 6, 0.4),
            };
            let c1 = fields::compose(&s, &p);
            let s2 = fields::SplitState {
                u_inc: s.u_inc.scaled(2.0),
                v: s.v.scaled(2.0),
                p_inc: s.p_inc.scaled(2.0),
                eta: s.eta.scaled(2.0),
                theta: s.theta.clone(),
            };
            let c2 = fields::compose(&s2, &p);
            worst = worst.max((&c2.u - &c1.u.scaled(2.0)).max_abs_coeff());
            worst = worst.max((&c2.rho - &c1.rho.scaled(2.0)).max_abs_coeff());
        }
        out.push(result("compose_linear", worst <= 1e-13, format!("worst {worst:.3e}")));
    }

    out
}
