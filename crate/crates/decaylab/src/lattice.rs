//! Periodic lattice: grid geometry and wavenumber bookkeeping.
//!
//! All spectral data in the crate lives on a uniform periodic lattice with
//! `n` points per axis and period `box_length`. The signed integer
//! frequency for storage index `k` along an axis is `k` for `k < n/2` and
//! `k - n` otherwise, so frequencies run over `[-n/2, n/2)`. The physical
//! wavenumber is `(2*pi/L) * k_signed`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Uniform periodic lattice in 2 or 3 dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    n: usize,
    box_length: f64,
    dim: usize,
}

impl Lattice {
    /// Build a 3-d lattice with `n` points per axis on a box of period `l`.
    ///
    /// `n` must be a power of two in `[8, 512]` and `l` positive.
    pub fn new(n: usize, l: f64) -> Result<Self> {
        Self::with_dim(n, l, 3)
    }

    /// Build a lattice of dimension 2 or 3. Dimension 2 exists only for
    /// the generic anti-symmetric parabolic system.
    pub fn with_dim(n: usize, l: f64, dim: usize) -> Result<Self> {
        if !n.is_power_of_two() || !(8..=512).contains(&n) {
            return Err(Error::invalid(format!(
                "lattice size {n} must be a power of two in [8, 512]"
            )));
        }
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::invalid(format!("box length {l} must be positive")));
        }
        if dim != 2 && dim != 3 {
            return Err(Error::invalid(format!("lattice dimension {dim} not supported")));
        }
        Ok(Lattice { n, box_length: l, dim })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Total number of modes (= grid points).
    pub fn num_modes(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Grid spacing `L / n`.
    pub fn dx(&self) -> f64 {
        self.box_length / self.n as f64
    }

    /// Cell volume `(L/n)^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.dim as i32)
    }

    /// Box volume `L^dim`.
    pub fn volume(&self) -> f64 {
        self.box_length.powi(self.dim as i32)
    }

    /// Smallest positive wavenumber `2*pi/L`.
    pub fn dk(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.box_length
    }

    /// Signed integer frequency for storage index `k` along one axis.
    #[inline]
    pub fn signed_index(&self, k: usize) -> i64 {
        let n = self.n as i64;
        let k = k as i64;
        if 2 * k < n {
            k
        } else {
            k - n
        }
    }

    /// Physical wavenumber for storage index `k` along one axis.
    #[inline]
    pub fn wavenumber(&self, k: usize) -> f64 {
        self.dk() * self.signed_index(k) as f64
    }

    /// Decompose a flat mode index into per-axis storage indices
    /// (shift/mask arithmetic; n is a power of two).
    #[inline]
    pub fn unravel(&self, flat: usize) -> [usize; 3] {
        let sh = self.n.trailing_zeros();
        let mask = self.n - 1;
        if self.dim == 2 {
            [flat >> sh, flat & mask, 0]
        } else {
            [flat >> (2 * sh), (flat >> sh) & mask, flat & mask]
        }
    }

    /// Wavenumber vector for a flat mode index. The third component is 0
    /// on 2-d lattices.
    #[inline]
    pub fn xi(&self, flat: usize) -> [f64; 3] {
        let idx = self.unravel(flat);
        let dk = self.dk();
        let mut out = [0.0; 3];
        for a in 0..self.dim {
            out[a] = dk * self.signed_index(idx[a]) as f64;
        }
        out
    }

    /// |xi|^2 for a flat mode index.
    #[inline]
    pub fn xi_sq(&self, flat: usize) -> f64 {
        let xi = self.xi(flat);
        xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]
    }

    /// True if any signed axis frequency of the mode exceeds n/3 in
    /// magnitude (the 2/3-rule cut for quadratic products).
    #[inline]
    pub fn is_aliased(&self, flat: usize) -> bool {
        let idx = self.unravel(flat);
        let cut3 = self.n; // |k| > n/3  <=>  3 |k| > n
        (0..self.dim).any(|a| 3 * self.signed_index(idx[a]).unsigned_abs() as usize > cut3)
    }

    /// Trusted simulation horizon `(L/8)^2 / nu` before periodic images
    /// and low-mode truncation distort whole-space decay.
    pub fn default_t_max(&self, nu: f64) -> f64 {
        let l8 = self.box_length / 8.0;
        l8 * l8 / nu
    }
}

/// Spec-level constructor: `make_lattice(n, L)`.
pub fn make_lattice(n: usize, l: f64) -> Result<Lattice> {
    Lattice::new(n, l)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_frequencies_cover_half_open_range() {
        let lat = Lattice::new(8, 2.0 * std::f64::consts::PI).unwrap();
        let freqs: Vec<i64> = (0..8).map(|k| lat.signed_index(k)).collect();
        assert_eq!(freqs, vec![0, 1, 2, 3, -4, -3, -2, -1]);
        // L = 2*pi makes xi equal to the signed integer frequency.
        assert!((lat.wavenumber(3) - 3.0).abs() < 1e-14);
        assert!((lat.wavenumber(4) + 4.0).abs() < 1e-14);
    }

    #[test]
    fn smallest_nonzero_wavenumber() {
        let lat = Lattice::new(64, 100.0).unwrap();
        assert!((lat.dk() - 2.0 * std::f64::consts::PI / 100.0).abs() < 1e-15);
        assert!((lat.dk() - 0.0628).abs() < 1e-3);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(Lattice::new(6, 1.0).is_err());
        assert!(Lattice::new(4, 1.0).is_err());
        assert!(Lattice::new(1024, 1.0).is_err());
        assert!(Lattice::new(64, 0.0).is_err());
        assert!(Lattice::new(64, -2.0).is_err());
    }

    #[test]
    fn zero_mode_present_once() {
        let lat = Lattice::new(8, 1.0).unwrap();
        let zeros = (0..lat.num_modes()).filter(|&f| lat.xi_sq(f) == 0.0).count();
        assert_eq!(zeros, 1);
    }

    #[test]
    fn dealias_cut_matches_definition() {
        let lat = Lattice::new(16, 1.0).unwrap();
        // n/3 = 5.33: |k| <= 5 kept, |k| >= 6 cut.
        let flat_keep = 5; // k = (0,0,5)
        let flat_cut = 6; // k = (0,0,6)
        assert!(!lat.is_aliased(flat_keep));
        assert!(lat.is_aliased(flat_cut));
    }
}
