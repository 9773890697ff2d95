//! Spectral fields, states, differential operators and norms.

use crate::error::{Error, Result};
use crate::fft::Transform;
use crate::lattice::Lattice;
use crate::systems::SystemId;
use num_complex::Complex64;

/// Deterministic pairwise summation, independent of any parallel schedule.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 64 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Named state blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    U,
    W,
    B,
    Theta,
    V,
}

impl Block {
    pub fn name(&self) -> &'static str {
        match self {
            Block::U => "u",
            Block::W => "w",
            Block::B => "b",
            Block::Theta => "theta",
            Block::V => "v",
        }
    }
}

/// Complex Fourier coefficients of a scalar or vector field on a periodic
/// lattice. Component-major storage: `coeffs[c * num_modes + flat]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    lattice: Lattice,
    components: usize,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(lattice: Lattice, components: usize) -> Self {
        assert!(components >= 1);
        SpectralField {
            lattice,
            components,
            coeffs: vec![Complex64::default(); components * lattice.num_modes()],
        }
    }

    pub fn from_coeffs(lattice: Lattice, components: usize, coeffs: Vec<Complex64>) -> Self {
        assert_eq!(coeffs.len(), components * lattice.num_modes());
        SpectralField { lattice, components, coeffs }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Coefficient slice of one component.
    pub fn component(&self, c: usize) -> &[Complex64] {
        let m = self.lattice.num_modes();
        &self.coeffs[c * m..(c + 1) * m]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [Complex64] {
        let m = self.lattice.num_modes();
        &mut self.coeffs[c * m..(c + 1) * m]
    }

    /// Coefficient of one component at one mode.
    pub fn at(&self, c: usize, flat: usize) -> Complex64 {
        self.coeffs[c * self.lattice.num_modes() + flat]
    }

    pub fn set(&mut self, c: usize, flat: usize, v: Complex64) {
        let m = self.lattice.num_modes();
        self.coeffs[c * m + flat] = v;
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.coeffs {
            *v *= s;
        }
    }

    /// self += s * other
    pub fn axpy(&mut self, s: f64, other: &SpectralField) {
        assert_eq!(self.coeffs.len(), other.coeffs.len());
        for (a, b) in self.coeffs.iter_mut().zip(other.coeffs.iter()) {
            *a += s * b;
        }
    }

    pub fn sub(&self, other: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Zero the mean mode of every component.
    pub fn pin_zero_mode(&mut self) {
        let m = self.lattice.num_modes();
        for c in 0..self.components {
            self.coeffs[c * m] = Complex64::default();
        }
    }

    /// Multiply every mode of every component by `factor(flat)`.
    pub fn apply_mode_factor(&mut self, factor: impl Fn(usize) -> Complex64) {
        let m = self.lattice.num_modes();
        let table: Vec<Complex64> = (0..m).map(factor).collect();
        for c in 0..self.components {
            for (v, f) in self.coeffs[c * m..(c + 1) * m].iter_mut().zip(table.iter()) {
                *v *= f;
            }
        }
    }

    /// Partial derivative of the given multi-index order: multiplication by
    /// `(i xi_1)^{m1} (i xi_2)^{m2} (i xi_3)^{m3}`. Total order at most 6.
    pub fn derivative(&self, multi_index: [usize; 3]) -> SpectralField {
        let order: usize = multi_index.iter().sum();
        assert!(order <= 6, "derivative order {order} exceeds supported range");
        let lat = self.lattice;
        let mut out = self.clone();
        out.apply_mode_factor(|flat| {
            let xi = lat.xi(flat);
            let mut f = Complex64::new(1.0, 0.0);
            for a in 0..3 {
                for _ in 0..multi_index[a] {
                    f *= Complex64::new(0.0, xi[a]);
                }
            }
            f
        });
        out
    }

    /// Derivative of fractional order: multiplication by `|xi|^s`. This is
    /// the crate-wide meaning of the order-`s` derivative magnitude; every
    /// report header records the convention.
    pub fn fractional_derivative(&self, s: f64) -> SpectralField {
        assert!((0.0..=6.0).contains(&s));
        let lat = self.lattice;
        let mut out = self.clone();
        out.apply_mode_factor(|flat| Complex64::new(lat.xi_sq(flat).powf(s / 2.0), 0.0));
        out
    }

    /// Homogeneous Sobolev norm `(L^dim sum |xi|^{2s} |fhat|^2)^{1/2}`.
    pub fn hs_norm(&self, s: f64) -> f64 {
        assert!((0.0..=6.0).contains(&s), "hs_norm order {s} out of range");
        let lat = self.lattice;
        let m = lat.num_modes();
        let weights: Vec<f64> = if s == 0.0 {
            (0..m).map(|_| 1.0).collect()
        } else if s == s.round() {
            let p = s as i32;
            (0..m).map(|flat| lat.xi_sq(flat).powi(p)).collect()
        } else {
            (0..m).map(|flat| lat.xi_sq(flat).powf(s)).collect()
        };
        let mut terms = vec![0.0; m];
        for c in 0..self.components {
            let comp = self.component(c);
            for (t, (v, w)) in terms.iter_mut().zip(comp.iter().zip(weights.iter())) {
                *t += w * v.norm_sqr();
            }
        }
        (lat.volume() * pairwise_sum(&terms)).sqrt()
    }

    /// L2 norm (Parseval route).
    pub fn l2_norm(&self) -> f64 {
        self.hs_norm(0.0)
    }

    /// L2 inner product of two real fields, computed spectrally.
    pub fn l2_inner(&self, other: &SpectralField) -> f64 {
        assert_eq!(self.coeffs.len(), other.coeffs.len());
        let terms: Vec<f64> = self
            .coeffs
            .iter()
            .zip(other.coeffs.iter())
            .map(|(a, b)| (a.conj() * b).re)
            .collect();
        self.lattice.volume() * pairwise_sum(&terms)
    }

    /// Discrete L^p norm on the grid with cell-volume weight; `p = inf`
    /// gives the grid max norm. For vector fields the pointwise Euclidean
    /// magnitude is used.
    pub fn lp_norm(&self, p: f64, tr: &Transform) -> f64 {
        assert!(p >= 2.0);
        let m = self.lattice.num_modes();
        let mut mag_sq = vec![0.0; m];
        for c in 0..self.components {
            let grid = tr.to_grid(self.component(c));
            for (s, g) in mag_sq.iter_mut().zip(grid.iter()) {
                *s += g * g;
            }
        }
        if p.is_infinite() {
            return mag_sq.iter().fold(0.0f64, |acc, &v| acc.max(v)).sqrt();
        }
        let terms: Vec<f64> = mag_sq.iter().map(|&v| v.powf(p / 2.0)).collect();
        (self.lattice.cell_volume() * pairwise_sum(&terms)).powf(1.0 / p)
    }

    /// Max norm evaluated on the 2x zero-padded grid.
    pub fn linf_norm_padded(&self, tr: &Transform) -> f64 {
        let m2 = (2 * self.lattice.n()).pow(self.lattice.dim() as u32);
        let mut mag_sq = vec![0.0; m2];
        for c in 0..self.components {
            let grid = tr.to_grid_padded(self.component(c));
            for (s, g) in mag_sq.iter_mut().zip(grid.iter()) {
                *s += g * g;
            }
        }
        mag_sq.iter().fold(0.0f64, |acc, &v| acc.max(v)).sqrt()
    }

    /// Leray projection onto divergence-free fields; the mean mode is
    /// zeroed.
    pub fn leray_project(&self) -> SpectralField {
        let dim = self.lattice.dim();
        assert_eq!(self.components, dim, "projection needs a dim-component field");
        let lat = self.lattice;
        let m = lat.num_modes();
        let mut out = self.clone();
        for flat in 0..m {
            let xi = lat.xi(flat);
            let k2 = lat.xi_sq(flat);
            if k2 == 0.0 {
                for c in 0..dim {
                    out.coeffs[c * m + flat] = Complex64::default();
                }
                continue;
            }
            let mut dot = Complex64::default();
            for c in 0..dim {
                dot += xi[c] * self.coeffs[c * m + flat];
            }
            dot /= k2;
            for c in 0..dim {
                out.coeffs[c * m + flat] -= xi[c] * dot;
            }
        }
        out
    }

    /// Curl of a 3-component field: `(i xi) x vhat` per mode.
    pub fn curl(&self) -> SpectralField {
        assert_eq!(self.components, 3);
        assert_eq!(self.lattice.dim(), 3);
        let lat = self.lattice;
        let m = lat.num_modes();
        let mut out = SpectralField::zeros(lat, 3);
        for flat in 0..m {
            let xi = lat.xi(flat);
            let v = [self.coeffs[flat], self.coeffs[m + flat], self.coeffs[2 * m + flat]];
            let i = Complex64::new(0.0, 1.0);
            out.coeffs[flat] = i * (xi[1] * v[2] - xi[2] * v[1]);
            out.coeffs[m + flat] = i * (xi[2] * v[0] - xi[0] * v[2]);
            out.coeffs[2 * m + flat] = i * (xi[0] * v[1] - xi[1] * v[0]);
        }
        out
    }

    /// Divergence: scalar field `i xi . vhat`.
    pub fn divergence(&self) -> SpectralField {
        let dim = self.lattice.dim();
        assert_eq!(self.components, dim);
        let lat = self.lattice;
        let m = lat.num_modes();
        let mut out = SpectralField::zeros(lat, 1);
        for flat in 0..m {
            let xi = lat.xi(flat);
            let mut d = Complex64::default();
            for c in 0..dim {
                d += Complex64::new(0.0, xi[c]) * self.coeffs[c * m + flat];
            }
            out.coeffs[flat] = d;
        }
        out
    }

    /// 2/3-rule truncation: zero every mode with any axis frequency above
    /// n/3 in magnitude.
    pub fn dealias(&self) -> SpectralField {
        let lat = self.lattice;
        let mut out = self.clone();
        out.apply_mode_factor(|flat| {
            if lat.is_aliased(flat) {
                Complex64::default()
            } else {
                Complex64::new(1.0, 0.0)
            }
        });
        out
    }

    /// Relative divergence defect `max |xi . vhat| / max |xi||vhat|`.
    pub fn divergence_defect(&self) -> f64 {
        let dim = self.lattice.dim();
        assert_eq!(self.components, dim);
        let lat = self.lattice;
        let m = lat.num_modes();
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for flat in 0..m {
            let xi = lat.xi(flat);
            let mut dot = Complex64::default();
            let mut mag = 0.0;
            for c in 0..dim {
                dot += xi[c] * self.coeffs[c * m + flat];
                mag += self.coeffs[c * m + flat].norm_sqr();
            }
            worst = worst.max(dot.norm());
            scale = scale.max(lat.xi_sq(flat).sqrt() * mag.sqrt());
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    /// Largest violation of the real-field symmetry
    /// `fhat(-xi) = conj(fhat(xi))`.
    pub fn hermitian_defect(&self) -> f64 {
        let lat = self.lattice;
        let n = lat.n();
        let m = lat.num_modes();
        let neg = |k: usize| if k == 0 { 0 } else { n - k };
        let mut worst = 0.0f64;
        for flat in 0..m {
            let idx = lat.unravel(flat);
            let flip = if lat.dim() == 3 {
                (neg(idx[0]) * n + neg(idx[1])) * n + neg(idx[2])
            } else {
                neg(idx[0]) * n + neg(idx[1])
            };
            for c in 0..self.components {
                let d = (self.coeffs[c * m + flat] - self.coeffs[c * m + flip].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |acc, c| acc.max(c.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// Named blocks forming the state `z` of one of the supported systems.
#[derive(Debug, Clone)]
pub struct State {
    pub system: SystemId,
    pub time: f64,
    blocks: Vec<(Block, SpectralField)>,
}

impl State {
    pub fn new(system: SystemId, time: f64, blocks: Vec<(Block, SpectralField)>) -> Result<Self> {
        let expected = system.block_layout();
        if blocks.len() != expected.len() {
            return Err(Error::invalid(format!(
                "system {} expects blocks {:?}",
                system.name(),
                expected.iter().map(|(b, _)| b.name()).collect::<Vec<_>>()
            )));
        }
        for ((b, f), (eb, ec)) in blocks.iter().zip(expected.iter()) {
            let want = if *ec == 0 { f.lattice().dim() } else { *ec };
            if b != eb || f.components() != want {
                return Err(Error::invalid(format!(
                    "block {} has {} components, system {} wants {} for {}",
                    b.name(),
                    f.components(),
                    system.name(),
                    want,
                    eb.name()
                )));
            }
        }
        Ok(State { system, time, blocks })
    }

    pub fn lattice(&self) -> &Lattice {
        self.blocks[0].1.lattice()
    }

    pub fn blocks(&self) -> &[(Block, SpectralField)] {
        &self.blocks
    }

    pub fn block(&self, b: Block) -> Option<&SpectralField> {
        self.blocks.iter().find(|(name, _)| *name == b).map(|(_, f)| f)
    }

    pub fn block_mut(&mut self, b: Block) -> Option<&mut SpectralField> {
        self.blocks.iter_mut().find(|(name, _)| *name == b).map(|(_, f)| f)
    }

    pub fn blocks_mut(&mut self) -> &mut [(Block, SpectralField)] {
        &mut self.blocks
    }

    /// Total number of scalar components over all blocks.
    pub fn total_components(&self) -> usize {
        self.blocks.iter().map(|(_, f)| f.components()).sum()
    }

    /// Norm of the full state (all blocks concatenated).
    pub fn hs_norm(&self, s: f64) -> f64 {
        self.blocks
            .iter()
            .map(|(_, f)| {
                let v = f.hs_norm(s);
                v * v
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        self.hs_norm(0.0)
    }

    /// self += s * other, blockwise.
    pub fn axpy(&mut self, s: f64, other: &State) {
        assert_eq!(self.blocks.len(), other.blocks.len());
        for ((_, a), (_, b)) in self.blocks.iter_mut().zip(other.blocks.iter()) {
            a.axpy(s, b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (_, f) in &mut self.blocks {
            f.scale(s);
        }
    }

    pub fn sub(&self, other: &State) -> State {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|(_, f)| f.is_finite())
    }
}
