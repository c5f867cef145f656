//! Seeded random field generation for probes and property checks.
//!
//! Everything here is deterministic given the RNG seed, which keeps the
//! randomized diagnostics bit-reproducible across runs.

use crate::spectral::{Grid, SpectralField, SpectralVectorField};
use alloc::vec::Vec;
use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::RngCore;

/// Uniform sample in `[-1, 1)`.
pub fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

/// Random real field with mean zero and modes in `0 < |k|_inf <= max_mode`.
///
/// Coefficients decay like `1/(1+|k|^2)` so the draws look like smooth
/// fields rather than white noise.
pub fn random_field(grid: Grid, rng: &mut ChaCha8Rng, max_mode: i64, amplitude: f64) -> SpectralField {
    random_field_with_mean(grid, rng, max_mode, amplitude, 0.0)
}

pub fn random_field_with_mean(
    grid: Grid,
    rng: &mut ChaCha8Rng,
    max_mode: i64,
    amplitude: f64,
    mean: f64,
) -> SpectralField {
    assert!(max_mode >= 1 && max_mode < grid.n() as i64 / 2);
    let mut f = SpectralField::zeros(grid);
    // Walk half the lattice; set_mode_pair fills the mirror.
    for k1 in 0..=max_mode {
        let k2_lo = if k1 == 0 { 1 } else { -max_mode };
        for k2 in k2_lo..=max_mode {
            let decay = amplitude / (1.0 + (k1 * k1 + k2 * k2) as f64);
            let c = Complex64::new(uniform(rng), uniform(rng)) * decay;
            f.set_mode_pair(k1, k2, c);
        }
    }
    f.set_mode_pair(0, 0, Complex64::new(mean, 0.0));
    f
}

/// Random vector field with both components mean-zero and band-limited.
pub fn random_vector_field(
    grid: Grid,
    rng: &mut ChaCha8Rng,
    max_mode: i64,
    amplitude: f64,
) -> SpectralVectorField {
    SpectralVectorField::new(
        random_field(grid, rng, max_mode, amplitude),
        random_field(grid, rng, max_mode, amplitude),
    )
}

/// Random solenoidal field built as the curl of a random streamfunction,
/// so the divergence vanishes to round-off in the coefficients.
pub fn random_solenoidal(
    grid: Grid,
    rng: &mut ChaCha8Rng,
    max_mode: i64,
    amplitude: f64,
) -> SpectralVectorField {
    let psi = random_field(grid, rng, max_mode, amplitude);
    SpectralVectorField::new(psi.derivative(1), psi.derivative(0).scaled(-1.0))
}

/// Exact product oracle: evaluate both factors on a doubled grid, multiply
/// pointwise, and truncate back. For factors whose combined bandwidth fits
/// the original dealias band this is the alias-free reference the 2/3-rule
/// product must reproduce.
pub fn oversampled_product(a: &SpectralField, b: &SpectralField) -> SpectralField {
    let grid = a.grid();
    let fine = Grid::with_dealias(grid.n() * 2, grid.dealias_fraction().0, grid.dealias_fraction().1)
        .expect("doubled grid is valid");
    let fa = embed(&a.truncated(), fine);
    let fb = embed(&b.truncated(), fine);
    let pa = fa.to_physical();
    let pb = fb.to_physical();
    let prod: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
    let fine_prod = SpectralField::from_physical(fine, &prod);
    restrict(&fine_prod, grid).truncated()
}

/// Copy coefficients into a finer grid (zero-padding the new modes).
pub fn embed(field: &SpectralField, fine: Grid) -> SpectralField {
    let coarse = field.grid();
    assert!(fine.n() >= coarse.n());
    let mut out = SpectralField::zeros(fine);
    let half = coarse.n() as i64 / 2;
    for m in coarse.modes() {
        // Skip the coarse Nyquist line; it has no faithful fine-grid image.
        if m.k1 == half || m.k2 == half {
            continue;
        }
        let idx = fine.flat(fine.index_of(m.k1), fine.index_of(m.k2));
        out.coeffs_mut()[idx] = field.coeffs()[m.flat];
    }
    out
}

/// Restrict a fine-grid field to the shared modes of a coarser grid.
pub fn restrict(field: &SpectralField, coarse: Grid) -> SpectralField {
    let fine = field.grid();
    assert!(fine.n() >= coarse.n());
    let mut out = SpectralField::zeros(coarse);
    let half = coarse.n() as i64 / 2;
    for m in coarse.modes() {
        if m.k1 == half || m.k2 == half {
            continue;
        }
        let idx = fine.flat(fine.index_of(m.k1), fine.index_of(m.k2));
        out.coeffs_mut()[m.flat] = field.coeffs()[idx];
    }
    out
}
