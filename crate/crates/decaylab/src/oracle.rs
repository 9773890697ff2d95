//! Brute-force reference computations, algorithmically independent of the
//! production paths they check. Used by the test suites only.

use crate::error::{Error, Result};
use crate::fft::Transform;
use crate::field::{SpectralField, State};
use crate::lattice::Lattice;
use crate::systems::{stiff_symbol, SystemParams};
use num_complex::Complex64;
use std::sync::OnceLock;

// ---------------------------------------------------------------------------
// Dense grid search for the decay constant minimization
// ---------------------------------------------------------------------------

const GRID_POINTS: usize = 1_000_000;

fn delta_grid() -> &'static [f64] {
    static GRID: OnceLock<Vec<f64>> = OnceLock::new();
    GRID.get_or_init(|| {
        (0..GRID_POINTS)
            .map(|i| 10f64.powf(-8.0 + 16.0 * i as f64 / (GRID_POINTS - 1) as f64))
            .collect()
    })
}

/// Reference evaluation of `min_delta delta^{-1/2} prod_{j=0}^{m}
/// (alpha + j/2 + delta)^{1/2}` over a dense log-spaced grid of one
/// million points on [1e-8, 1e8].
pub fn grid_search_k(alpha: f64, m: usize) -> f64 {
    let mut best = f64::INFINITY;
    for &delta in delta_grid() {
        let mut sq = 1.0;
        for j in 0..=m {
            sq *= alpha + j as f64 / 2.0 + delta;
        }
        sq /= delta;
        if sq < best {
            best = sq;
        }
    }
    best.sqrt()
}

// ---------------------------------------------------------------------------
// Closed-form heat decay of Gaussian data
// ---------------------------------------------------------------------------

/// Angular content of the Gaussian datum.
#[derive(Debug, Clone, Copy)]
pub enum GaussianShape {
    /// Scalar profile `fhat = amp exp(-|xi|^2/(2 sigma^2))`.
    Scalar,
    /// Solenoidal vector `uhat = amp exp(-|xi|^2/(2 sigma^2)) P_xi e`
    /// with a unit direction `e`.
    SolenoidalVector,
}

/// Exact whole-space L2 norm of `exp(c lap t)` applied to Gaussian data:
/// the radial moment integrates in closed form to
/// `sqrt(pi)/4 (1/sigma^2 + 2 c t)^{-3/2}`.
pub fn heat_gaussian_norm(t: f64, c: f64, sigma: f64, amp: f64, shape: GaussianShape) -> f64 {
    let omega = match shape {
        GaussianShape::Scalar => 4.0 * std::f64::consts::PI,
        GaussianShape::SolenoidalVector => 8.0 * std::f64::consts::PI / 3.0,
    };
    let a = 1.0 / (sigma * sigma) + 2.0 * c * t;
    let moment = std::f64::consts::PI.sqrt() / 4.0 * a.powf(-1.5);
    let pref = (2.0 * std::f64::consts::PI).powi(-3);
    (pref * omega * amp * amp * moment).sqrt()
}

// ---------------------------------------------------------------------------
// Alias-free product on the doubled grid
// ---------------------------------------------------------------------------

/// Exact (alias-free) product of two scalar fields, computed on the 2x
/// padded grid and truncated back to the original mode set.
pub fn padded_convolution(f: &SpectralField, g: &SpectralField) -> Result<SpectralField> {
    if f.lattice() != g.lattice() || f.components() != 1 || g.components() != 1 {
        return Err(Error::invalid("padded convolution wants two scalars on one lattice"));
    }
    let lat = *f.lattice();
    if lat.n() > 32 {
        return Err(Error::invalid("padded convolution capped at n = 32"));
    }
    let tr = Transform::new(lat);
    let fg = tr.to_grid_padded(f.component(0));
    let gg = tr.to_grid_padded(g.component(0));
    let prod: Vec<f64> = fg.iter().zip(gg.iter()).map(|(a, b)| a * b).collect();

    let big = Lattice::with_dim(2 * lat.n(), lat.box_length(), lat.dim())?;
    let big_tr = Transform::new(big);
    let spec = big_tr.from_grid(&prod);

    let n = lat.n();
    let n2 = 2 * n;
    let mut out = SpectralField::zeros(lat, 1);
    for flat in 0..lat.num_modes() {
        let idx = lat.unravel(flat);
        let pad = |k: usize| -> usize {
            let s = lat.signed_index(k);
            if s >= 0 {
                s as usize
            } else {
                (n2 as i64 + s) as usize
            }
        };
        let src = if lat.dim() == 3 {
            (pad(idx[0]) * n2 + pad(idx[1])) * n2 + pad(idx[2])
        } else {
            pad(idx[0]) * n2 + pad(idx[1])
        };
        out.set(0, flat, spec[src]);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Dense generator exponential
// ---------------------------------------------------------------------------

/// Split-plane square complex matrix with a blocked multiply kernel.
struct CMat {
    n: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl CMat {
    fn zeros(n: usize) -> Self {
        CMat { n, re: vec![0.0; n * n], im: vec![0.0; n * n] }
    }

    fn scale(&mut self, s: f64) {
        for v in &mut self.re {
            *v *= s;
        }
        for v in &mut self.im {
            *v *= s;
        }
    }

    fn add_scaled_identity(&mut self, s: f64) {
        let n = self.n;
        for i in 0..n {
            self.re[i * n + i] += s;
        }
    }

    fn add_scaled(&mut self, s: f64, other: &CMat) {
        for (a, b) in self.re.iter_mut().zip(other.re.iter()) {
            *a += s * b;
        }
        for (a, b) in self.im.iter_mut().zip(other.im.iter()) {
            *a += s * b;
        }
    }

    fn one_norm(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for j in 0..n {
            let mut col = 0.0;
            for i in 0..n {
                let idx = i * n + j;
                col += (self.re[idx] * self.re[idx] + self.im[idx] * self.im[idx]).sqrt();
            }
            worst = worst.max(col);
        }
        worst
    }

    /// self = a * b, blocked for cache residency.
    fn matmul(out: &mut CMat, a: &CMat, b: &CMat) {
        const IB: usize = 48;
        const JB: usize = 1536;
        let n = a.n;
        out.re.iter_mut().for_each(|v| *v = 0.0);
        out.im.iter_mut().for_each(|v| *v = 0.0);
        let mut ib = 0;
        while ib < n {
            let ie = (ib + IB).min(n);
            let mut jb = 0;
            while jb < n {
                let je = (jb + JB).min(n);
                for k in 0..n {
                    let brow_re = &b.re[k * n + jb..k * n + je];
                    let brow_im = &b.im[k * n + jb..k * n + je];
                    for i in ib..ie {
                        let ar = a.re[i * n + k];
                        let ai = a.im[i * n + k];
                        if ar == 0.0 && ai == 0.0 {
                            continue;
                        }
                        let crow_re = &mut out.re[i * n + jb..i * n + je];
                        for (c, &v) in crow_re.iter_mut().zip(brow_re.iter()) {
                            *c += ar * v;
                        }
                        for (c, &v) in crow_re.iter_mut().zip(brow_im.iter()) {
                            *c -= ai * v;
                        }
                        let crow_im = &mut out.im[i * n + jb..i * n + je];
                        for (c, &v) in crow_im.iter_mut().zip(brow_im.iter()) {
                            *c += ar * v;
                        }
                        for (c, &v) in crow_im.iter_mut().zip(brow_re.iter()) {
                            *c += ai * v;
                        }
                    }
                }
                jb = je;
            }
            ib = ie;
        }
    }

    fn matvec(&self, x_re: &[f64], x_im: &[f64], y_re: &mut [f64], y_im: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut sr = 0.0;
            let mut si = 0.0;
            let row_re = &self.re[i * n..(i + 1) * n];
            let row_im = &self.im[i * n..(i + 1) * n];
            for j in 0..n {
                sr += row_re[j] * x_re[j] - row_im[j] * x_im[j];
                si += row_re[j] * x_im[j] + row_im[j] * x_re[j];
            }
            y_re[i] = sr;
            y_im[i] = si;
        }
    }
}

/// Truncated-Taylor exponential (degree 16, Paterson-Stockmeyer blocks)
/// of a matrix pre-scaled to unit norm, then repeated squaring.
fn cmat_expm(a: &CMat) -> CMat {
    let n = a.n;
    let norm = a.one_norm();
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let mut b = CMat { n, re: a.re.clone(), im: a.im.clone() };
    b.scale(1.0 / 2f64.powi(s as i32));

    let mut b2 = CMat::zeros(n);
    CMat::matmul(&mut b2, &b, &b);
    let mut b3 = CMat::zeros(n);
    CMat::matmul(&mut b3, &b2, &b);
    let mut b4 = CMat::zeros(n);
    CMat::matmul(&mut b4, &b2, &b2);

    let fact: Vec<f64> = {
        let mut f = vec![1.0f64; 17];
        for k in 1..17 {
            f[k] = f[k - 1] * k as f64;
        }
        f
    };
    let c = |k: usize| 1.0 / fact[k];
    let block = |k0: usize| -> CMat {
        // c_{k0} I + c_{k0+1} B + c_{k0+2} B^2 + c_{k0+3} B^3
        let mut m = CMat::zeros(n);
        m.add_scaled_identity(c(k0));
        m.add_scaled(c(k0 + 1), &b);
        m.add_scaled(c(k0 + 2), &b2);
        m.add_scaled(c(k0 + 3), &b3);
        m
    };

    // Horner in B^4 over coefficient blocks; top block is the bare c16 I.
    let mut acc = CMat::zeros(n);
    acc.add_scaled_identity(c(16));
    let mut tmp = CMat::zeros(n);
    for k0 in [12usize, 8, 4, 0] {
        CMat::matmul(&mut tmp, &acc, &b4);
        acc = block(k0);
        acc.add_scaled(1.0, &tmp);
    }
    // undo scaling by repeated squaring
    for _ in 0..s {
        CMat::matmul(&mut tmp, &acc, &acc);
        std::mem::swap(&mut acc, &mut tmp);
    }
    acc
}

/// Dense assembled generator of the stiff linear part of a system, for
/// lattices up to 8 points per axis.
pub struct DenseGenerator {
    lattice: Lattice,
    comps: usize,
    mat: CMat,
}

impl DenseGenerator {
    pub fn new(state_template: &State, params: &SystemParams) -> Result<Self> {
        let lat = *state_template.lattice();
        if lat.n() > 8 {
            return Err(Error::invalid("dense generator capped at n = 8"));
        }
        let comps = state_template.total_components();
        let m = lat.num_modes();
        let n_total = comps * m;
        let mut mat = CMat::zeros(n_total);
        for flat in 0..m {
            let sym = stiff_symbol(state_template.system, params, lat.xi(flat), lat.dim());
            for i in 0..comps {
                for j in 0..comps {
                    let row = flat * comps + i;
                    let col = flat * comps + j;
                    mat.re[row * n_total + col] = sym[(i, j)].re;
                    mat.im[row * n_total + col] = sym[(i, j)].im;
                }
            }
        }
        Ok(DenseGenerator { lattice: lat, comps, mat })
    }

    /// `exp(A t) vec(state0)` by scaling and squaring on the dense matrix.
    pub fn expm_evolve(&self, state0: &State, t: f64) -> State {
        let m = self.lattice.num_modes();
        let n_total = self.comps * m;
        let mut at = CMat { n: n_total, re: self.mat.re.clone(), im: self.mat.im.clone() };
        at.scale(t);
        let e = cmat_expm(&at);

        let mut x_re = vec![0.0; n_total];
        let mut x_im = vec![0.0; n_total];
        let mut off = 0;
        for (_, f) in state0.blocks() {
            for c in 0..f.components() {
                for flat in 0..m {
                    let v = f.at(c, flat);
                    x_re[flat * self.comps + off + c] = v.re;
                    x_im[flat * self.comps + off + c] = v.im;
                }
            }
            off += f.components();
        }
        let mut y_re = vec![0.0; n_total];
        let mut y_im = vec![0.0; n_total];
        e.matvec(&x_re, &x_im, &mut y_re, &mut y_im);

        let mut out = state0.clone();
        let mut off = 0;
        for (_, f) in out.blocks_mut() {
            let nc = f.components();
            for c in 0..nc {
                for flat in 0..m {
                    f.set(
                        c,
                        flat,
                        Complex64::new(y_re[flat * self.comps + off + c], y_im[flat * self.comps + off + c]),
                    );
                }
            }
            off += nc;
        }
        out.time = state0.time + t;
        out
    }
}

/// One-call oracle: assemble the dense generator and evolve.
pub fn dense_expm_evolve(state0: &State, t: f64, params: &SystemParams) -> Result<State> {
    Ok(DenseGenerator::new(state0, params)?.expm_evolve(state0, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn grid_search_anchors() {
        assert_eq!(grid_search_k(0.0, 0), 1.0);
        // K_{0,1} -> sqrt(1/2) as delta -> 0
        assert_relative_eq!(grid_search_k(0.0, 1), (0.5f64).sqrt(), max_relative = 1e-7);
        assert_relative_eq!(grid_search_k(0.0, 3), (6.0f64 / 8.0).sqrt(), max_relative = 1e-7);
    }

    #[test]
    fn heat_gaussian_scalings() {
        let v0 = heat_gaussian_norm(0.0, 1.0, 0.4, 2.0, GaussianShape::Scalar);
        assert!(v0 > 0.0);
        // doubling c equals doubling t
        let a = heat_gaussian_norm(3.0, 2.0, 0.4, 2.0, GaussianShape::Scalar);
        let b = heat_gaussian_norm(6.0, 1.0, 0.4, 2.0, GaussianShape::Scalar);
        assert_relative_eq!(a, b, max_relative = 1e-14);
        // late-time slope -3/4 in log-log
        let t1 = 1e4;
        let t2 = 4e4;
        let r = heat_gaussian_norm(t2, 1.0, 0.4, 2.0, GaussianShape::Scalar)
            / heat_gaussian_norm(t1, 1.0, 0.4, 2.0, GaussianShape::Scalar);
        let slope = -(r.ln()) / (t2 / t1f64()).ln();
        assert_relative_eq!(slope, 0.75, epsilon = 2e-4);

        fn t1f64() -> f64 {
            1e4
        }
    }

    #[test]
    fn single_mode_products_convolve_exactly() {
        let lat = Lattice::new(16, 2.0 * std::f64::consts::PI).unwrap();
        let n = lat.n();
        let mut f = SpectralField::zeros(lat, 1);
        let mut g = SpectralField::zeros(lat, 1);
        // f = cos(z) -> coefficients 1/2 at k=(0,0,1),(0,0,-1)
        f.set(0, 1, Complex64::new(0.5, 0.0));
        f.set(0, n - 1, Complex64::new(0.5, 0.0));
        // g = cos(2z)
        g.set(0, 2, Complex64::new(0.5, 0.0));
        g.set(0, n - 2, Complex64::new(0.5, 0.0));
        let prod = padded_convolution(&f, &g).unwrap();
        // cos(z) cos(2z) = (cos(3z) + cos(z))/2
        assert_relative_eq!(prod.at(0, 3).re, 0.25, epsilon = 1e-13);
        assert_relative_eq!(prod.at(0, 1).re, 0.25, epsilon = 1e-13);
        assert_relative_eq!(prod.at(0, 2).norm(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn product_with_zero_is_zero() {
        let lat = Lattice::new(16, 1.0).unwrap();
        let f = crate::stepper::initial_data::random_band_limited(lat, 1, 2, 0.4);
        let z = SpectralField::zeros(lat, 1);
        let prod = padded_convolution(&f, &z).unwrap();
        assert_eq!(prod.max_abs(), 0.0);
    }

    #[test]
    fn dealiased_grid_product_equals_padded_convolution() {
        let lat = Lattice::new(16, 2.0 * std::f64::consts::PI).unwrap();
        let tr = Transform::new(lat);
        let f = crate::stepper::initial_data::random_band_limited(lat, 1, 5, 10.0).dealias();
        let g = crate::stepper::initial_data::random_band_limited(lat, 1, 6, 10.0).dealias();
        let exact = padded_convolution(&f, &g).unwrap().dealias();
        let fg = tr.to_grid(f.component(0));
        let gg = tr.to_grid(g.component(0));
        let prod: Vec<f64> = fg.iter().zip(gg.iter()).map(|(a, b)| a * b).collect();
        let approx_spec = SpectralField::from_coeffs(lat, 1, tr.from_grid(&prod)).dealias();
        let defect = approx_spec.sub(&exact).max_abs();
        assert!(defect <= 1e-12 * exact.max_abs().max(1e-12), "aliasing defect {defect}");
    }

    #[test]
    fn dense_exponential_identity_and_diagonal() {
        let lat = Lattice::new(8, 10.0).unwrap();
        let s = crate::stepper::initial_data::random_state(
            crate::systems::SystemId::NavierStokes,
            lat,
            3,
            1.0,
        );
        let p = SystemParams { chi: 0.0, mu: 0.8, ..SystemParams::default() };
        let gen = DenseGenerator::new(&s, &p).unwrap();
        // t = 0: identity
        let same = gen.expm_evolve(&s, 0.0);
        assert!(same.sub(&s).l2_norm() <= 1e-13 * s.l2_norm());
        // diagonal generator: elementwise heat factors
        let t = 0.9;
        let evolved = gen.expm_evolve(&s, t);
        let u = s.block(crate::field::Block::U).unwrap();
        let eu = evolved.block(crate::field::Block::U).unwrap();
        for flat in [1usize, 17, 100] {
            let factor = (-p.mu * lat.xi_sq(flat) * t).exp();
            for c in 0..3 {
                let expect = u.at(c, flat) * factor;
                assert!((eu.at(c, flat) - expect).norm() <= 1e-12);
            }
        }
    }
}
