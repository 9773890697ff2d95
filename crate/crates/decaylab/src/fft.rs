//! Complex-to-complex transforms between coefficient and grid space.
//!
//! Convention (frozen for the whole crate): physical samples relate to
//! coefficients through a plain synthesis sum `f(x) = sum_xi fhat(xi)
//! exp(i xi . x)` with no prefactor; the analysis direction carries the
//! `1/n^dim` factor. Under this convention `||f||_{L^2}^2 = L^dim *
//! sum_xi |fhat(xi)|^2`.

use crate::lattice::Lattice;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Cached transform plans for one lattice.
#[derive(Clone)]
pub struct Transform {
    lattice: Lattice,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    inv_padded: Arc<dyn Fft<f64>>,
}

impl Transform {
    pub fn new(lattice: Lattice) -> Self {
        let mut planner = FftPlanner::new();
        let n = lattice.n();
        Transform {
            lattice,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            inv_padded: planner.plan_fft_inverse(2 * n),
        }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    /// Synthesis fails in place: coefficients -> grid samples (complex).
    fn run_axes(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>, n: usize, dim: usize) {
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        let mut line = vec![Complex64::default(); n];
        if dim == 3 {
            // axis 2: contiguous lines
            for chunk in data.chunks_exact_mut(n) {
                fft.process_with_scratch(chunk, &mut scratch);
            }
            // axis 1: stride n
            for x in 0..n {
                for z in 0..n {
                    let base = x * n * n + z;
                    for (y, v) in line.iter_mut().enumerate() {
                        *v = data[base + y * n];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (y, v) in line.iter().enumerate() {
                        data[base + y * n] = *v;
                    }
                }
            }
            // axis 0: stride n^2
            for y in 0..n {
                for z in 0..n {
                    let base = y * n + z;
                    for (x, v) in line.iter_mut().enumerate() {
                        *v = data[base + x * n * n];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (x, v) in line.iter().enumerate() {
                        data[base + x * n * n] = *v;
                    }
                }
            }
        } else {
            for chunk in data.chunks_exact_mut(n) {
                fft.process_with_scratch(chunk, &mut scratch);
            }
            for y in 0..n {
                for (x, v) in line.iter_mut().enumerate() {
                    *v = data[y + x * n];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (x, v) in line.iter().enumerate() {
                    data[y + x * n] = *v;
                }
            }
        }
    }

    /// Coefficients -> complex grid samples.
    pub fn to_grid_complex(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let mut data = coeffs.to_vec();
        self.run_axes(&mut data, &self.inv, self.lattice.n(), self.lattice.dim());
        data
    }

    /// Coefficients -> real grid samples (imaginary part discarded; fields
    /// representing real data keep it at rounding level).
    pub fn to_grid(&self, coeffs: &[Complex64]) -> Vec<f64> {
        self.to_grid_complex(coeffs).iter().map(|c| c.re).collect()
    }

    /// Real grid samples -> coefficients (carries the 1/n^dim factor).
    pub fn from_grid(&self, grid: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = grid.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.run_axes(&mut data, &self.fwd, self.lattice.n(), self.lattice.dim());
        let scale = 1.0 / self.lattice.num_modes() as f64;
        for v in &mut data {
            *v *= scale;
        }
        data
    }

    /// Coefficients -> real samples on the 2x zero-padded grid, used for
    /// trustworthy max norms of band-limited fields.
    pub fn to_grid_padded(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let n = self.lattice.n();
        let n2 = 2 * n;
        let dim = self.lattice.dim();
        let mut data = vec![Complex64::default(); n2.pow(dim as u32)];
        let pad = |k: usize| -> usize {
            let s = self.lattice.signed_index(k);
            if s >= 0 {
                s as usize
            } else {
                (n2 as i64 + s) as usize
            }
        };
        for (flat, &c) in coeffs.iter().enumerate() {
            let idx = self.lattice.unravel(flat);
            let target = if dim == 3 {
                (pad(idx[0]) * n2 + pad(idx[1])) * n2 + pad(idx[2])
            } else {
                pad(idx[0]) * n2 + pad(idx[1])
            };
            data[target] = c;
        }
        self.run_axes(&mut data, &self.inv_padded, n2, dim);
        data.iter().map(|c| c.re).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn round_trip_is_identity() {
        let lat = Lattice::new(16, 3.0).unwrap();
        let tr = Transform::new(lat);
        let mut grid = vec![0.0; lat.num_modes()];
        for (i, g) in grid.iter_mut().enumerate() {
            *g = ((i * 2654435761) % 1000) as f64 / 1000.0 - 0.5;
        }
        let coeffs = tr.from_grid(&grid);
        let back = tr.to_grid(&coeffs);
        for (a, b) in grid.iter().zip(back.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn single_mode_synthesis() {
        let lat = Lattice::new(8, 2.0 * std::f64::consts::PI).unwrap();
        let tr = Transform::new(lat);
        // fhat = 1/2 at k=(0,0,1) and k=(0,0,-1): f(x) = cos(z)
        let mut coeffs = vec![Complex64::default(); lat.num_modes()];
        coeffs[1] = Complex64::new(0.5, 0.0);
        coeffs[7] = Complex64::new(0.5, 0.0);
        let grid = tr.to_grid(&coeffs);
        for z in 0..8 {
            let x = lat.dx() * z as f64;
            assert_relative_eq!(grid[z], x.cos(), epsilon = 1e-12);
        }
    }

    #[test]
    fn padded_grid_interpolates_band_limited_data() {
        let lat = Lattice::new(8, 2.0 * std::f64::consts::PI).unwrap();
        let tr = Transform::new(lat);
        let mut coeffs = vec![Complex64::default(); lat.num_modes()];
        coeffs[2] = Complex64::new(0.5, 0.0); // k=(0,0,2)
        coeffs[6] = Complex64::new(0.5, 0.0); // k=(0,0,-2)
        let padded = tr.to_grid_padded(&coeffs);
        let n2 = 16;
        for z in 0..n2 {
            let x = lat.box_length() / n2 as f64 * z as f64;
            assert_relative_eq!(padded[z], (2.0 * x).cos(), epsilon = 1e-12);
        }
    }
}
