//! Radix-2 complex FFT for power-of-two lengths.
//!
//! Grids are restricted to power-of-two sizes, so a plain iterative
//! decimation-in-time transform covers every case without pulling a
//! `std`-only FFT dependency into the core.

use alloc::vec::Vec;
use num_complex::Complex64;

/// Precomputed roots of unity for one transform length.
pub struct FftPlan {
    n: usize,
    log2n: u32,
    /// `roots[j] = exp(-2*pi*i*j/n)` for `j < n/2`.
    roots: Vec<Complex64>,
}

impl FftPlan {
    pub fn new(n: usize) -> Self {
        assert!(n.is_power_of_two() && n >= 2, "FFT length must be a power of two >= 2");
        let mut roots = Vec::with_capacity(n / 2);
        for j in 0..n / 2 {
            let angle = -2.0 * core::f64::consts::PI * (j as f64) / (n as f64);
            let (s, c) = libm::sincos(angle);
            roots.push(Complex64::new(c, s));
        }
        Self { n, log2n: n.trailing_zeros(), roots }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    /// `X[k] = sum_j x[j] exp(-2*pi*i*jk/n)`, unscaled.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.transform(buf, false);
    }

    /// `x[j] = (1/n) sum_k X[k] exp(+2*pi*i*jk/n)`.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.transform(buf, true);
        let scale = 1.0 / self.n as f64;
        for z in buf.iter_mut() {
            *z *= scale;
        }
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let n = self.n;
        assert_eq!(buf.len(), n);

        // Bit-reversal permutation.
        let shift = usize::BITS - self.log2n;
        for i in 0..n {
            let j = i.reverse_bits() >> shift;
            if i < j {
                buf.swap(i, j);
            }
        }

        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let step = n / len;
            let mut base = 0;
            while base < n {
                for j in 0..half {
                    let w = if inverse {
                        self.roots[j * step].conj()
                    } else {
                        self.roots[j * step]
                    };
                    let a = buf[base + j];
                    let b = buf[base + j + half] * w;
                    buf[base + j] = a + b;
                    buf[base + j + half] = a - b;
                }
                base += len;
            }
            len *= 2;
        }
    }
}
