//! Periodic pseudo-spectral kernel on the 2-torus `[0, 2pi)^2`.
//!
//! Fields are stored as truncated Fourier coefficient tables normalized so
//! that `coeff(0)` is the mean over a unit-measure domain:
//!
//! ```text
//! f(x) = sum_k fhat(k) exp(i k . x),    fhat(k) = (1/n^2) sum_j f(x_j) exp(-i k . x_j)
//! ```
//!
//! With that normalization, Parseval reads `mean(f^2) = sum_k |fhat(k)|^2`,
//! which is what the discrete Sobolev norms below build on.
//!
//! Wavenumbers run over `k in {-n/2+1, ..., n/2}` per axis. Odd-order
//! derivative multipliers are zeroed at the Nyquist index `n/2` (a real field
//! has no representable odd derivative there), and `laplacian` is defined as
//! the exact composition `div . grad`, so the operator identities asserted in
//! the tests hold coefficient-by-coefficient rather than just to truncation.

mod fft;

pub use fft::FftPlan;

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use num_complex::Complex64;

/// Grid metadata for the square 2-D torus of side `2*pi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grid {
    n: usize,
    dealias_num: u32,
    dealias_den: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GridError {
    BadSize { n: usize },
    BadDealias { num: u32, den: u32 },
}

impl fmt::Display for GridError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridError::BadSize { n } => {
                write!(f, "grid size must be a power of two >= 8, got {n}")
            }
            GridError::BadDealias { num, den } => {
                write!(f, "dealias fraction must satisfy 0 < num/den <= 1, got {num}/{den}")
            }
        }
    }
}

impl Grid {
    /// Grid with the standard 2/3-rule dealiasing.
    pub fn new(n: usize) -> Result<Self, GridError> {
        Self::with_dealias(n, 2, 3)
    }

    pub fn with_dealias(n: usize, num: u32, den: u32) -> Result<Self, GridError> {
        if !n.is_power_of_two() || n < 8 {
            return Err(GridError::BadSize { n });
        }
        if num == 0 || den == 0 || num > den {
            return Err(GridError::BadDealias { num, den });
        }
        Ok(Self { n, dealias_num: num, dealias_den: den })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        2
    }

    /// Number of stored coefficients (`n*n`).
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dealias_fraction(&self) -> (u32, u32) {
        (self.dealias_num, self.dealias_den)
    }

    /// Largest retained mode after dealiasing: `floor(frac * n/2)`.
    pub fn dealias_cutoff(&self) -> i64 {
        ((self.n as u64 / 2) * self.dealias_num as u64 / self.dealias_den as u64) as i64
    }

    /// Integer wavenumber for a storage index, in `{-n/2+1, ..., n/2}`.
    pub fn wavenumber(&self, idx: usize) -> i64 {
        debug_assert!(idx < self.n);
        if idx <= self.n / 2 {
            idx as i64
        } else {
            idx as i64 - self.n as i64
        }
    }

    /// Derivative multiplier wavenumber: as [`Self::wavenumber`] but zero at
    /// the Nyquist index.
    pub fn deriv_wavenumber(&self, idx: usize) -> f64 {
        if idx == self.n / 2 {
            0.0
        } else {
            self.wavenumber(idx) as f64
        }
    }

    /// Storage index for an integer wavenumber.
    pub fn index_of(&self, k: i64) -> usize {
        let half = self.n as i64 / 2;
        assert!(k > -half && k <= half, "wavenumber {k} out of range for n={}", self.n);
        if k >= 0 {
            k as usize
        } else {
            (k + self.n as i64) as usize
        }
    }

    pub fn flat(&self, i1: usize, i2: usize) -> usize {
        i1 * self.n + i2
    }

    /// Iterator over all modes with index, integer and derivative wavenumbers.
    pub fn modes(&self) -> impl Iterator<Item = Mode> + '_ {
        let n = self.n;
        (0..n * n).map(move |flat| {
            let i1 = flat / n;
            let i2 = flat % n;
            Mode {
                flat,
                k1: self.wavenumber(i1),
                k2: self.wavenumber(i2),
                kd1: self.deriv_wavenumber(i1),
                kd2: self.deriv_wavenumber(i2),
            }
        })
    }

    /// Physical collocation points, row-major.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let n = self.n;
        let h = 2.0 * core::f64::consts::PI / n as f64;
        (0..n * n).map(move |flat| ((flat / n) as f64 * h, (flat % n) as f64 * h))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Mode {
    pub flat: usize,
    pub k1: i64,
    pub k2: i64,
    pub kd1: f64,
    pub kd2: f64,
}

impl Mode {
    /// Derivative-consistent `|k|^2` (zero at degenerate Nyquist lines).
    pub fn ksq(&self) -> f64 {
        self.kd1 * self.kd1 + self.kd2 * self.kd2
    }

    /// True `|k|^2` used by the Sobolev weights.
    pub fn ksq_true(&self) -> f64 {
        (self.k1 * self.k1 + self.k2 * self.k2) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpectralError {
    /// `inverse_laplacian` input escaped mean-zero projection.
    NonZeroMean { mean_abs: f64 },
}

impl fmt::Display for SpectralError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpectralError::NonZeroMean { mean_abs } => {
                write!(f, "inverse Laplacian needs a mean-zero field, |mean| = {mean_abs:.3e}")
            }
        }
    }
}

/// Real scalar field on the torus, stored as Fourier coefficients.
///
/// Values are immutable in practice: every operation returns a new field, so
/// instances can be shared across threads freely.
#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, coeffs: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    /// Sample a function at the collocation points and transform.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values: Vec<f64> = grid.points().map(|(x, y)| f(x, y)).collect();
        Self::from_physical(grid, &values)
    }

    pub fn from_physical(grid: Grid, values: &[f64]) -> Self {
        assert_eq!(values.len(), grid.len());
        let mut coeffs: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        forward2d(grid, &mut coeffs);
        Self { grid, coeffs }
    }

    pub fn from_coeffs(grid: Grid, coeffs: Vec<Complex64>) -> Self {
        assert_eq!(coeffs.len(), grid.len());
        Self { grid, coeffs }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Coefficient at integer wavenumber `(k1, k2)`.
    pub fn coeff(&self, k1: i64, k2: i64) -> Complex64 {
        self.coeffs[self.grid.flat(self.grid.index_of(k1), self.grid.index_of(k2))]
    }

    /// Set the coefficient at `(k1, k2)` and its Hermitian partner, keeping
    /// the field real-valued.
    pub fn set_mode_pair(&mut self, k1: i64, k2: i64, c: Complex64) {
        let half = self.grid.n as i64 / 2;
        let i = self.grid.flat(self.grid.index_of(k1), self.grid.index_of(k2));
        self.coeffs[i] = c;
        if k1 == 0 && k2 == 0 {
            self.coeffs[i] = Complex64::new(c.re, 0.0);
            return;
        }
        // The Nyquist line has no distinct mirror; force those modes real.
        if k1 == half || k2 == half {
            self.coeffs[i] = Complex64::new(c.re, 0.0);
            return;
        }
        let j = self.grid.flat(self.grid.index_of(-k1), self.grid.index_of(-k2));
        self.coeffs[j] = c.conj();
    }

    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    /// Collocation values, row-major.
    pub fn to_physical(&self) -> Vec<f64> {
        let mut buf = self.coeffs.clone();
        inverse2d(self.grid, &mut buf);
        buf.iter().map(|c| c.re).collect()
    }

    pub fn derivative(&self, axis: usize) -> Self {
        assert!(axis < 2);
        let mut out = self.clone();
        for m in self.grid.modes() {
            let k = if axis == 0 { m.kd1 } else { m.kd2 };
            out.coeffs[m.flat] *= Complex64::new(0.0, k);
        }
        out
    }

    pub fn gradient(&self) -> SpectralVectorField {
        SpectralVectorField { components: [self.derivative(0), self.derivative(1)] }
    }

    pub fn laplacian(&self) -> Self {
        let mut out = self.clone();
        for m in self.grid.modes() {
            out.coeffs[m.flat] *= -m.ksq();
        }
        out
    }

    /// Solve `laplacian(g) = f` for the mean-zero `g`.
    ///
    /// Degenerate Nyquist-line kernel modes are zeroed on output; solver
    /// fields never populate them because products are dealiased well below
    /// the Nyquist index.
    pub fn inverse_laplacian(&self) -> Result<Self, SpectralError> {
        let mean_abs = libm::fabs(self.coeffs[0].re).max(libm::fabs(self.coeffs[0].im));
        if mean_abs > 1e-13 {
            return Err(SpectralError::NonZeroMean { mean_abs });
        }
        let mut out = self.clone();
        for m in self.grid.modes() {
            let ksq = m.ksq();
            if ksq == 0.0 {
                out.coeffs[m.flat] = Complex64::new(0.0, 0.0);
            } else {
                out.coeffs[m.flat] /= -ksq;
            }
        }
        Ok(out)
    }

    pub fn mean_zero_project(&self) -> Self {
        let mut out = self.clone();
        out.coeffs[0] = Complex64::new(0.0, 0.0);
        out
    }

    pub fn zero_mean_in_place(&mut self) {
        self.coeffs[0] = Complex64::new(0.0, 0.0);
    }

    /// Zero all modes beyond the dealias cutoff.
    pub fn truncated(&self) -> Self {
        let kc = self.grid.dealias_cutoff();
        let mut out = self.clone();
        for m in self.grid.modes() {
            if m.k1.abs() > kc || m.k2.abs() > kc {
                out.coeffs[m.flat] = Complex64::new(0.0, 0.0);
            }
        }
        out
    }

    /// Pointwise product with 2/3-rule truncation before and after.
    pub fn dealiased_product(&self, other: &Self) -> Self {
        assert_eq!(self.grid, other.grid, "dealiased_product needs a shared grid");
        let a = self.truncated().to_physical();
        let b = other.truncated().to_physical();
        let prod: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        Self::from_physical(self.grid, &prod).truncated()
    }

    /// Discrete Sobolev norm `(sum_k (1+|k|^2)^m |fhat(k)|^2)^(1/2)`.
    pub fn sobolev_norm(&self, m: i32) -> f64 {
        assert!((-1..=4).contains(&m), "Sobolev order {m} outside supported range -1..=4");
        let mut acc = 0.0;
        for md in self.grid.modes() {
            let w = powi(1.0 + md.ksq_true(), m);
            acc += w * self.coeffs[md.flat].norm_sqr();
        }
        libm::sqrt(acc)
    }

    /// `integral of |grad f|^2` over the unit-measure torus, straight from
    /// the coefficients.
    pub fn grad_sq_integral(&self) -> f64 {
        let mut acc = 0.0;
        for m in self.grid.modes() {
            acc += m.ksq() * self.coeffs[m.flat].norm_sqr();
        }
        acc
    }

    /// Unit-measure L2 inner product `mean(f * g)`.
    pub fn inner(&self, other: &Self) -> f64 {
        assert_eq!(self.grid, other.grid);
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| (a * b.conj()).re).sum()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.to_physical().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for c in out.coeffs.iter_mut() {
            *c *= s;
        }
        out
    }

    /// Largest Hermitian-symmetry violation, for diagnostics.
    pub fn hermitian_error(&self) -> f64 {
        let n = self.grid.n;
        let mut worst = 0.0f64;
        for m in self.grid.modes() {
            let i1 = (n - m.flat / n) % n;
            let i2 = (n - m.flat % n) % n;
            let mirror = self.coeffs[self.grid.flat(i1, i2)];
            let err = (self.coeffs[m.flat] - mirror.conj()).norm();
            worst = worst.max(err);
        }
        worst
    }
}

fn powi(base: f64, exp: i32) -> f64 {
    let mut acc = 1.0;
    for _ in 0..exp.unsigned_abs() {
        acc *= base;
    }
    if exp < 0 {
        1.0 / acc
    } else {
        acc
    }
}

fn forward2d(grid: Grid, buf: &mut [Complex64]) {
    let n = grid.n;
    let plan = FftPlan::new(n);
    for row in buf.chunks_exact_mut(n) {
        plan.forward(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = buf[i * n + j];
        }
        plan.forward(&mut col);
        for i in 0..n {
            buf[i * n + j] = col[i];
        }
    }
    let scale = 1.0 / (n * n) as f64;
    for c in buf.iter_mut() {
        *c *= scale;
    }
}

fn inverse2d(grid: Grid, buf: &mut [Complex64]) {
    let n = grid.n;
    let plan = FftPlan::new(n);
    // FftPlan::inverse carries 1/n; compensate so coefficients stay
    // normalized as true Fourier coefficients.
    for row in buf.chunks_exact_mut(n) {
        plan.inverse(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = buf[i * n + j];
        }
        plan.inverse(&mut col);
        for i in 0..n {
            buf[i * n + j] = col[i];
        }
    }
    let scale = (n * n) as f64;
    for c in buf.iter_mut() {
        *c *= scale;
    }
}

impl core::ops::Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        assert_eq!(self.grid, rhs.grid);
        let mut out = self.clone();
        for (a, b) in out.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a += b;
        }
        out
    }
}

impl core::ops::Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        assert_eq!(self.grid, rhs.grid);
        let mut out = self.clone();
        for (a, b) in out.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a -= b;
        }
        out
    }
}

/// Real vector field: `dim` scalar components on one grid.
#[derive(Clone, Debug)]
pub struct SpectralVectorField {
    components: [SpectralField; 2],
}

impl SpectralVectorField {
    pub fn zeros(grid: Grid) -> Self {
        Self { components: [SpectralField::zeros(grid), SpectralField::zeros(grid)] }
    }

    pub fn new(x: SpectralField, y: SpectralField) -> Self {
        assert_eq!(x.grid, y.grid, "vector components must share one grid");
        Self { components: [x, y] }
    }

    pub fn from_fns(
        grid: Grid,
        fx: impl Fn(f64, f64) -> f64,
        fy: impl Fn(f64, f64) -> f64,
    ) -> Self {
        Self { components: [SpectralField::from_fn(grid, fx), SpectralField::from_fn(grid, fy)] }
    }

    pub fn grid(&self) -> Grid {
        self.components[0].grid
    }

    pub fn component(&self, i: usize) -> &SpectralField {
        &self.components[i]
    }

    pub fn component_mut(&mut self, i: usize) -> &mut SpectralField {
        &mut self.components[i]
    }

    pub fn x(&self) -> &SpectralField {
        &self.components[0]
    }

    pub fn y(&self) -> &SpectralField {
        &self.components[1]
    }

    pub fn divergence(&self) -> SpectralField {
        &self.components[0].derivative(0) + &self.components[1].derivative(1)
    }

    pub fn laplacian(&self) -> Self {
        Self { components: [self.components[0].laplacian(), self.components[1].laplacian()] }
    }

    /// Advection `(self . grad) s` of a scalar, dealiased term by term.
    pub fn advect_scalar(&self, s: &SpectralField) -> SpectralField {
        let gx = self.components[0].dealiased_product(&s.derivative(0));
        let gy = self.components[1].dealiased_product(&s.derivative(1));
        &gx + &gy
    }

    /// Advection `(self . grad) b` of a vector, dealiased term by term.
    pub fn advect_vector(&self, b: &Self) -> Self {
        Self {
            components: [self.advect_scalar(&b.components[0]), self.advect_scalar(&b.components[1])],
        }
    }

    /// Component-wise dealiased product with a scalar field.
    pub fn scalar_product(&self, s: &SpectralField) -> Self {
        Self {
            components: [
                s.dealiased_product(&self.components[0]),
                s.dealiased_product(&self.components[1]),
            ],
        }
    }

    pub fn mean_zero_project(&self) -> Self {
        Self {
            components: [self.components[0].mean_zero_project(), self.components[1].mean_zero_project()],
        }
    }

    pub fn zero_mean_in_place(&mut self) {
        self.components[0].zero_mean_in_place();
        self.components[1].zero_mean_in_place();
    }

    pub fn truncated(&self) -> Self {
        Self { components: [self.components[0].truncated(), self.components[1].truncated()] }
    }

    pub fn sobolev_norm(&self, m: i32) -> f64 {
        let a = self.components[0].sobolev_norm(m);
        let b = self.components[1].sobolev_norm(m);
        libm::sqrt(a * a + b * b)
    }

    /// Unit-measure L2 inner product `mean(a . b)`.
    pub fn inner(&self, other: &Self) -> f64 {
        self.components[0].inner(&other.components[0])
            + self.components[1].inner(&other.components[1])
    }

    /// `integral of grad a : grad b` (Frobenius pairing of Jacobians).
    pub fn grad_inner(&self, other: &Self) -> f64 {
        let mut acc = 0.0;
        for j in 0..2 {
            for axis in 0..2 {
                acc += self.components[j].derivative(axis).inner(&other.components[j].derivative(axis));
            }
        }
        acc
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { components: [self.components[0].scaled(s), self.components[1].scaled(s)] }
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.components[0].max_abs_coeff().max(self.components[1].max_abs_coeff())
    }

    /// L2 norm of the per-component means, for k=0 diagnostics.
    pub fn mean_norm(&self) -> f64 {
        let a = self.components[0].mean();
        let b = self.components[1].mean();
        libm::sqrt(a * a + b * b)
    }
}

impl core::ops::Add for &SpectralVectorField {
    type Output = SpectralVectorField;
    fn add(self, rhs: &SpectralVectorField) -> SpectralVectorField {
        SpectralVectorField {
            components: [
                &self.components[0] + &rhs.components[0],
                &self.components[1] + &rhs.components[1],
            ],
        }
    }
}

impl core::ops::Sub for &SpectralVectorField {
    type Output = SpectralVectorField;
    fn sub(self, rhs: &SpectralVectorField) -> SpectralVectorField {
        SpectralVectorField {
            components: [
                &self.components[0] - &rhs.components[0],
                &self.components[1] - &rhs.components[1],
            ],
        }
    }
}
