//! Physical parameters, state models in both coordinate systems, and
//! residual evaluators for the primitive, transformed, and incompressible
//! systems.
//!
//! The two state models are linked by `u = U + v`, `rho = eps*P + eta`. All
//! quadratic terms go through the shared dealiased product, so the algebraic
//! identities between the three residual evaluators hold to round-off.
//!
//! In the periodic setting the k=0 balance of the momentum and energy
//! equations has no boundary flux to absorb it, so residual fields are
//! reported with their means projected out and the discarded magnitudes
//! recorded separately in [`ResidualNorms::k0`].

use crate::spectral::{SpectralField, SpectralVectorField};
use alloc::vec::Vec;
use core::fmt;

/// Viscosities, heat conductivity, and the Mach number.
///
/// The normalizations `R = c_V = 1`, reference density and temperature 1,
/// are baked into the residual evaluators.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FluidParams {
    pub mu: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamError {
    NonPositiveShearViscosity { mu: f64 },
    NonPositiveConductivity { kappa: f64 },
    /// Violates `2*mu + d*lambda >= 0`.
    BulkViscosityCondition { mu: f64, lambda: f64 },
    MachOutOfRange { eps: f64 },
}

impl fmt::Display for ParamError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamError::NonPositiveShearViscosity { mu } => {
                write!(f, "shear viscosity must be positive, got mu = {mu}")
            }
            ParamError::NonPositiveConductivity { kappa } => {
                write!(f, "heat conductivity must be positive, got kappa = {kappa}")
            }
            ParamError::BulkViscosityCondition { mu, lambda } => {
                write!(f, "need 2*mu + 2*lambda >= 0, got mu = {mu}, lambda = {lambda}")
            }
            ParamError::MachOutOfRange { eps } => {
                write!(f, "Mach number must lie in (0, 1], got eps = {eps}")
            }
        }
    }
}

impl FluidParams {
    pub fn new(mu: f64, lambda: f64, kappa: f64, eps: f64) -> Result<Self, ParamError> {
        if !(mu > 0.0) {
            return Err(ParamError::NonPositiveShearViscosity { mu });
        }
        if !(kappa > 0.0) {
            return Err(ParamError::NonPositiveConductivity { kappa });
        }
        if !(2.0 * mu + 2.0 * lambda >= 0.0) {
            return Err(ParamError::BulkViscosityCondition { mu, lambda });
        }
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(ParamError::MachOutOfRange { eps });
        }
        Ok(Self { mu, lambda, kappa, eps })
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self, ParamError> {
        Self::new(self.mu, self.lambda, self.kappa, eps)
    }

    /// Combined viscosity `zeta = mu + lambda` multiplying `grad div`.
    pub fn zeta(&self) -> f64 {
        self.mu + self.lambda
    }
}

/// Unknowns of the split formulation: incompressible pair `(u_inc, p_inc)`
/// plus the compressible correction `(v, eta, theta)`.
#[derive(Clone, Debug)]
pub struct SplitState {
    pub u_inc: SpectralVectorField,
    pub p_inc: SpectralField,
    pub v: SpectralVectorField,
    pub eta: SpectralField,
    pub theta: SpectralField,
}

impl SplitState {
    pub fn zeros(grid: crate::spectral::Grid) -> Self {
        Self {
            u_inc: SpectralVectorField::zeros(grid),
            p_inc: SpectralField::zeros(grid),
            v: SpectralVectorField::zeros(grid),
            eta: SpectralField::zeros(grid),
            theta: SpectralField::zeros(grid),
        }
    }

    /// Worst violation of the state invariants (solenoidal `u_inc`, all
    /// means zero), for diagnostics and tests.
    pub fn invariant_error(&self) -> f64 {
        let mut worst = self.u_inc.divergence().sobolev_norm(0);
        worst = worst.max(libm::fabs(self.p_inc.mean()));
        worst = worst.max(libm::fabs(self.eta.mean()));
        worst = worst.max(libm::fabs(self.theta.mean()));
        worst = worst.max(self.u_inc.mean_norm());
        worst.max(self.v.mean_norm())
    }
}

/// Unknowns of the transformed system: `u = u_inc + v`, `rho = eps*p + eta`.
#[derive(Clone, Debug)]
pub struct CompositeState {
    pub u: SpectralVectorField,
    pub rho: SpectralField,
    pub theta: SpectralField,
}

/// `u = U + v`, `rho = eps*P + eta`, temperature carried over.
pub fn compose(s: &SplitState, p: &FluidParams) -> CompositeState {
    let u = &s.u_inc + &s.v;
    let mut rho = &s.p_inc.scaled(p.eps) + &s.eta;
    rho.zero_mean_in_place();
    CompositeState { u, rho, theta: s.theta.clone() }
}

/// Inverse of [`compose`] for a known incompressible pair.
pub fn decompose(
    c: &CompositeState,
    u_inc: &SpectralVectorField,
    p_inc: &SpectralField,
    p: &FluidParams,
) -> SplitState {
    SplitState {
        u_inc: u_inc.clone(),
        p_inc: p_inc.clone(),
        v: &c.u - u_inc,
        eta: &c.rho - &p_inc.scaled(p.eps),
        theta: c.theta.clone(),
    }
}

/// Symmetric deformation tensor `D(u) = (grad u + grad u^T)/2`.
#[derive(Clone, Debug)]
pub struct DeformationTensor {
    pub xx: SpectralField,
    pub xy: SpectralField,
    pub yy: SpectralField,
}

impl DeformationTensor {
    /// Double contraction `D : E`, dealiased.
    pub fn ddot(&self, other: &Self) -> SpectralField {
        let a = self.xx.dealiased_product(&other.xx);
        let b = self.xy.dealiased_product(&other.xy);
        let c = self.yy.dealiased_product(&other.yy);
        &(&a + &b.scaled(2.0)) + &c
    }

    pub fn trace(&self) -> SpectralField {
        &self.xx + &self.yy
    }
}

pub fn deformation_tensor(u: &SpectralVectorField) -> DeformationTensor {
    let dxx = u.x().derivative(0);
    let dyy = u.y().derivative(1);
    let cross = &u.x().derivative(1) + &u.y().derivative(0);
    DeformationTensor { xx: dxx, xy: cross.scaled(0.5), yy: dyy }
}

/// Dissipation function `Psi = 2 mu D(u):D(u) + lambda (div u)^2`.
pub fn dissipation(u: &SpectralVectorField, p: &FluidParams) -> SpectralField {
    let d = deformation_tensor(u);
    let div = u.divergence();
    &d.ddot(&d).scaled(2.0 * p.mu) + &div.dealiased_product(&div).scaled(p.lambda)
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldError {
    /// `1 + eps*rho` dipped below the positivity floor on the quadrature grid.
    NegativeDensity { min_density: f64 },
    /// `mms_forcing` needs a solenoidal velocity.
    NotSolenoidal { div_l2: f64 },
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldError::NegativeDensity { min_density } => {
                write!(f, "nonphysical iterate: min density {min_density:.3e} below floor 1e-6")
            }
            FieldError::NotSolenoidal { div_l2 } => {
                write!(f, "manufactured velocity must be solenoidal, ||div||_0 = {div_l2:.3e}")
            }
        }
    }
}

/// Norm summary of a residual evaluation.
#[derive(Clone, Copy, Debug, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ResidualNorms {
    pub mass_l2: f64,
    pub mass_h1: f64,
    pub momentum_l2: f64,
    pub momentum_h1: f64,
    pub energy_l2: f64,
    pub energy_h1: f64,
    /// Root-sum-square of the per-equation L2 norms.
    pub total: f64,
    /// Magnitudes of the projected-out k=0 components (mass, momentum, energy).
    pub k0: [f64; 3],
}

/// Residual fields (means projected out) plus their norms.
#[derive(Clone, Debug)]
pub struct ResidualReport {
    pub mass: SpectralField,
    pub momentum: SpectralVectorField,
    pub energy: SpectralField,
    pub norms: ResidualNorms,
}

impl ResidualReport {
    /// Project the k=0 component out of each residual field, recording the
    /// discarded magnitudes, and compute the norm summary.
    pub fn from_parts(
        mass: SpectralField,
        momentum: SpectralVectorField,
        energy: SpectralField,
    ) -> Self {
        let k0 = [libm::fabs(mass.mean()), momentum.mean_norm(), libm::fabs(energy.mean())];
        let mass = mass.mean_zero_project();
        let momentum = momentum.mean_zero_project();
        let energy = energy.mean_zero_project();
        let norms = ResidualNorms {
            mass_l2: mass.sobolev_norm(0),
            mass_h1: mass.sobolev_norm(1),
            momentum_l2: momentum.sobolev_norm(0),
            momentum_h1: momentum.sobolev_norm(1),
            energy_l2: energy.sobolev_norm(0),
            energy_h1: energy.sobolev_norm(1),
            total: 0.0,
            k0,
        };
        let mut r = Self { mass, momentum, energy, norms };
        r.norms.total = libm::sqrt(
            r.norms.mass_l2 * r.norms.mass_l2
                + r.norms.momentum_l2 * r.norms.momentum_l2
                + r.norms.energy_l2 * r.norms.energy_l2,
        );
        r
    }

    pub fn total(&self) -> f64 {
        self.norms.total
    }
}

/// Residual of the transformed system in the perturbation variables
/// `(u, rho, theta)` with forcings `f`, `g`:
///
/// ```text
/// div u + eps div(rho u)
/// (1+eps rho)(u.grad u) + [(1+eps theta) grad rho + (1+eps rho) grad theta]/eps
///     - mu lap u - zeta grad div u - (1+eps rho) f - g
/// eps (1+eps rho) u.grad theta + div u + eps(rho+theta+eps rho theta) div u
///     - eps kappa lap theta - eps^2 Psi(u)
/// ```
pub fn residual_transformed(
    c: &CompositeState,
    p: &FluidParams,
    f: &SpectralVectorField,
    g: &SpectralVectorField,
) -> ResidualReport {
    let eps = p.eps;
    let div_u = c.u.divergence();
    let rho_u = c.u.scalar_product(&c.rho);
    let mass = &div_u + &rho_u.divergence().scaled(eps);

    let adv = c.u.advect_vector(&c.u);
    let grad_rho = c.rho.gradient();
    let grad_theta = c.theta.gradient();
    let inertia = &adv + &adv.scalar_product(&c.rho).scaled(eps);
    let pressure = &(&(&grad_rho + &grad_theta).scaled(1.0 / eps)
        + &grad_rho.scalar_product(&c.theta))
        + &grad_theta.scalar_product(&c.rho);
    let viscous = &c.u.laplacian().scaled(p.mu) + &div_u.gradient().scaled(p.zeta());
    let body = &(f + &f.scalar_product(&c.rho).scaled(eps)) + g;
    let momentum = &(&inertia + &pressure) - &(&viscous + &body);

    let adv_theta = c.u.advect_scalar(&c.theta);
    let rho_plus_theta = &c.rho + &c.theta;
    let rho_theta = c.rho.dealiased_product(&c.theta);
    let psi = dissipation(&c.u, p);
    let energy = &(&(&(&adv_theta.scaled(eps) + &c.rho.dealiased_product(&adv_theta).scaled(eps * eps))
        + &div_u)
        + &(&rho_plus_theta.dealiased_product(&div_u).scaled(eps)
            + &rho_theta.dealiased_product(&div_u).scaled(eps * eps)))
        - &(&c.theta.laplacian().scaled(eps * p.kappa) + &psi.scaled(eps * eps));

    ResidualReport::from_parts(mass, momentum, energy)
}

/// Residual of the primitive dimensionless system evaluated through
/// `varrho = 1 + eps rho`, `Theta = 1 + eps theta`, with the pressure terms
/// grouped as `grad(varrho Theta)/eps^2` in its epsilon-stable rearrangement.
/// Agrees with [`residual_transformed`] up to exact algebra.
pub fn residual_primitive(
    c: &CompositeState,
    p: &FluidParams,
    f: &SpectralVectorField,
    g: &SpectralVectorField,
) -> Result<ResidualReport, FieldError> {
    let eps = p.eps;
    let min_density = 1.0 + eps * c.rho.min_value();
    if min_density <= 1e-6 {
        return Err(FieldError::NegativeDensity { min_density });
    }

    let div_u = c.u.divergence();
    let rho_u = c.u.scalar_product(&c.rho);
    // div(varrho u) with the density split off the constant part.
    let mass = (&c.u + &rho_u.scaled(eps)).divergence();

    let adv = c.u.advect_vector(&c.u);
    let inertia = &adv + &adv.scalar_product(&c.rho).scaled(eps);
    // grad(p)/eps^2 = grad(rho + theta)/eps + grad(rho theta)
    let rho_theta = c.rho.dealiased_product(&c.theta);
    let pressure = &(&c.rho + &c.theta).gradient().scaled(1.0 / eps) + &rho_theta.gradient();
    let viscous = &c.u.laplacian().scaled(p.mu) + &div_u.gradient().scaled(p.zeta());
    let body = &(f + &f.scalar_product(&c.rho).scaled(eps)) + g;
    let momentum = &(&inertia + &pressure) - &(&viscous + &body);

    // varrho u . grad Theta = eps (1 + eps rho) u . grad theta
    let adv_theta = c.u.advect_scalar(&c.theta);
    let transport = &adv_theta.scaled(eps) + &c.rho.dealiased_product(&adv_theta).scaled(eps * eps);
    // p div u with p = 1 + eps(rho + theta + eps rho theta)
    let p_pert = &(&c.rho + &c.theta) + &rho_theta.scaled(eps);
    let compression = &div_u + &p_pert.dealiased_product(&div_u).scaled(eps);
    let psi = dissipation(&c.u, p);
    let energy = &(&transport + &compression)
        - &(&c.theta.laplacian().scaled(eps * p.kappa) + &psi.scaled(eps * eps));

    Ok(ResidualReport::from_parts(mass, momentum, energy))
}

/// Residual of the steady incompressible system
/// `U.grad U - mu lap U + grad P = f + g`, `div U = 0`.
pub fn residual_incompressible(
    u: &SpectralVectorField,
    p_field: &SpectralField,
    f: &SpectralVectorField,
    g: &SpectralVectorField,
    mu: f64,
) -> ResidualReport {
    let mass = u.divergence();
    let momentum =
        &(&u.advect_vector(u) - &u.laplacian().scaled(mu)) + &(&p_field.gradient() - &(f + g));
    let energy = SpectralField::zeros(u.grid());
    ResidualReport::from_parts(mass, momentum, energy)
}

/// Manufactured forcing `h = U*.grad U* - mu lap U* + grad P*` for the
/// incompressible system.
pub fn mms_forcing(
    u_star: &SpectralVectorField,
    p_star: &SpectralField,
    mu: f64,
) -> Result<SpectralVectorField, FieldError> {
    let div_l2 = u_star.divergence().sobolev_norm(0);
    if div_l2 > 1e-12 {
        return Err(FieldError::NotSolenoidal { div_l2 });
    }
    Ok(&(&u_star.advect_vector(u_star) - &u_star.laplacian().scaled(mu)) + &p_star.gradient())
}

/// Taylor-Green velocity/pressure pair: `U* = c (sin x cos y, -cos x sin y)`
/// with the pressure that balances its self-advection.
pub fn taylor_green(grid: crate::spectral::Grid, amplitude: f64) -> (SpectralVectorField, SpectralField) {
    let u = SpectralVectorField::from_fns(
        grid,
        move |x, y| amplitude * libm::sin(x) * libm::cos(y),
        move |x, y| -amplitude * libm::cos(x) * libm::sin(y),
    );
    let c = amplitude * amplitude / 4.0;
    let p = SpectralField::from_fn(grid, move |x, y| -c * (libm::cos(2.0 * x) + libm::cos(2.0 * y)));
    (u, p)
}

/// Per-iteration history entry for mean bookkeeping.
pub type MeanHistory = Vec<[f64; 3]>;
