//! Two-dimensional real-to-complex transforms on a square periodic lattice
//! and application of real, even Fourier multipliers.

use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Spectrum of a real `n x n` array. Only the non-negative frequencies of the
/// second axis are stored; layout is `[k2][k1]` with `k2 < n/2 + 1`.
#[derive(Clone, Debug)]
pub struct HalfSpectrum {
    pub(crate) n: usize,
    pub(crate) data: Vec<Complex64>,
}

impl HalfSpectrum {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Complex64::new(0.0, 0.0); (n / 2 + 1) * n],
        }
    }

    pub fn half(&self) -> usize {
        self.n / 2 + 1
    }

    /// Coefficient at `(k1, k2)` in FFT order, `k2 <= n/2`.
    pub fn at(&self, k1: usize, k2: usize) -> Complex64 {
        self.data[k2 * self.n + k1]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }
}

/// Forward/inverse plans for one lattice size.
#[derive(Clone)]
pub struct Spectral2d {
    n: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral2d {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral2d").field("n", &self.n).finish()
    }
}

/// Per-call scratch for [`Spectral2d`].
pub struct SpectralScratch {
    row_in: Vec<f64>,
    row_out: Vec<Complex64>,
    fft: Vec<Complex64>,
    real: Vec<Complex64>,
}

impl Spectral2d {
    pub fn new(n: usize) -> Self {
        let mut rp = RealFftPlanner::<f64>::new();
        let mut cp = FftPlanner::<f64>::new();
        Self {
            n,
            r2c: rp.plan_fft_forward(n),
            c2r: rp.plan_fft_inverse(n),
            fwd: cp.plan_fft_forward(n),
            inv: cp.plan_fft_inverse(n),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn scratch(&self) -> SpectralScratch {
        let h = self.n / 2 + 1;
        let fft_len = self
            .fwd
            .get_inplace_scratch_len()
            .max(self.inv.get_inplace_scratch_len());
        let real_len = self.r2c.get_scratch_len().max(self.c2r.get_scratch_len());
        SpectralScratch {
            row_in: vec![0.0; self.n],
            row_out: vec![Complex64::new(0.0, 0.0); h],
            fft: vec![Complex64::new(0.0, 0.0); fft_len],
            real: vec![Complex64::new(0.0, 0.0); real_len],
        }
    }

    /// Unnormalized forward transform of a row-major `n x n` array.
    pub fn forward(&self, input: &[f64], out: &mut HalfSpectrum, scratch: &mut SpectralScratch) {
        let n = self.n;
        let h = n / 2 + 1;
        assert_eq!(input.len(), n * n);
        assert_eq!(out.n, n);
        for k1 in 0..n {
            scratch.row_in.copy_from_slice(&input[k1 * n..(k1 + 1) * n]);
            self.r2c
                .process_with_scratch(&mut scratch.row_in, &mut scratch.row_out, &mut scratch.real)
                .expect("row transform lengths are fixed");
            for k2 in 0..h {
                out.data[k2 * n + k1] = scratch.row_out[k2];
            }
        }
        self.fwd
            .process_with_scratch(&mut out.data, &mut scratch.fft);
    }

    /// Inverse transform including the `1/n^2` normalization. Consumes the
    /// spectrum as workspace.
    pub fn inverse(&self, spec: &mut HalfSpectrum, out: &mut [f64], scratch: &mut SpectralScratch) {
        let n = self.n;
        let h = n / 2 + 1;
        assert_eq!(out.len(), n * n);
        self.inv
            .process_with_scratch(&mut spec.data, &mut scratch.fft);
        let norm = 1.0 / (n * n) as f64;
        for k1 in 0..n {
            for k2 in 0..h {
                scratch.row_out[k2] = spec.data[k2 * n + k1];
            }
            scratch.row_out[0].im = 0.0;
            if n.is_multiple_of(2) {
                scratch.row_out[h - 1].im = 0.0;
            }
            let row = &mut out[k1 * n..(k1 + 1) * n];
            self.c2r
                .process_with_scratch(&mut scratch.row_out, row, &mut scratch.real)
                .expect("imaginary parts of self-conjugate bins were cleared");
            row.iter_mut().for_each(|v| *v *= norm);
        }
    }
}

/// Signed FFT frequency index of bin `k` for length `n`.
pub fn signed_index(k: usize, n: usize) -> isize {
    if k <= n / 2 {
        k as isize
    } else {
        k as isize - n as isize
    }
}

/// Angular wavenumber of bin `k` on a periodic interval of length `period`.
pub fn wavenumber(k: usize, n: usize, period: f64) -> f64 {
    std::f64::consts::TAU * signed_index(k, n) as f64 / period
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pseudo_random(n: usize) -> Vec<f64> {
        let mut s = 12345u64;
        (0..n * n)
            .map(|_| {
                s = s
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    #[test]
    fn round_trip_odd_and_even() {
        for n in [9, 12, 15] {
            let plan = Spectral2d::new(n);
            let mut sc = plan.scratch();
            let x = pseudo_random(n);
            let mut spec = HalfSpectrum::zeros(n);
            plan.forward(&x, &mut spec, &mut sc);
            let mut y = vec![0.0; n * n];
            plan.inverse(&mut spec, &mut y, &mut sc);
            for (a, b) in x.iter().zip(&y) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn matches_direct_dft() {
        let n = 7;
        let plan = Spectral2d::new(n);
        let mut sc = plan.scratch();
        let x = pseudo_random(n);
        let mut spec = HalfSpectrum::zeros(n);
        plan.forward(&x, &mut spec, &mut sc);
        for k1 in 0..n {
            for k2 in 0..=n / 2 {
                let mut acc = Complex64::new(0.0, 0.0);
                for a in 0..n {
                    for b in 0..n {
                        let ph = -std::f64::consts::TAU * ((k1 * a + k2 * b) as f64) / n as f64;
                        acc += x[a * n + b] * Complex64::new(ph.cos(), ph.sin());
                    }
                }
                assert!((acc - spec.at(k1, k2)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn frequency_indices() {
        assert_eq!(signed_index(0, 5), 0);
        assert_eq!(signed_index(2, 5), 2);
        assert_eq!(signed_index(3, 5), -2);
        assert_eq!(signed_index(3, 6), 3);
        assert_eq!(signed_index(4, 6), -2);
    }
}
