//! Right-hand sides of the nonlinear systems, their stiff symbols, and
//! pressure recovery.
//!
//! Every system splits as `d/dt z = symbol(xi) zhat + explicit(z)`. All
//! linear couplings (curl couplings, damping, temperature/divergence
//! couplings, the Coriolis term) live in the stiff symbol so the
//! integrating-factor stepper treats them exactly and the stepper's
//! linearization coincides with the semigroup module's evolution. The
//! explicit part carries only the quadratic terms, dealiased by the
//! 2/3 rule and, for the velocity block, Leray-projected.

use crate::error::{Error, Result};
use crate::fft::Transform;
use crate::field::{Block, SpectralField, State};
use crate::lattice::Lattice;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, RwLock};

/// The systems the laboratory can evolve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemId {
    Micropolar,
    NavierStokes,
    MagnetoMicropolar,
    Tropical,
    RotatingNs,
    GenericLinear,
    GenericParabolic,
}

impl SystemId {
    pub fn name(&self) -> &'static str {
        match self {
            SystemId::Micropolar => "micropolar",
            SystemId::NavierStokes => "navier_stokes",
            SystemId::MagnetoMicropolar => "magneto_micropolar",
            SystemId::Tropical => "tropical",
            SystemId::RotatingNs => "rotating_ns",
            SystemId::GenericLinear => "generic_linear",
            SystemId::GenericParabolic => "generic_parabolic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "micropolar" => SystemId::Micropolar,
            "navier_stokes" => SystemId::NavierStokes,
            "magneto_micropolar" => SystemId::MagnetoMicropolar,
            "tropical" => SystemId::Tropical,
            "rotating_ns" => SystemId::RotatingNs,
            "generic_linear" => SystemId::GenericLinear,
            "generic_parabolic" => SystemId::GenericParabolic,
            other => return Err(Error::config(format!("unknown system id '{other}'"))),
        })
    }

    /// Block names and component counts; 0 means "lattice dimension".
    pub fn block_layout(&self) -> &'static [(Block, usize)] {
        match self {
            SystemId::Micropolar => &[(Block::U, 3), (Block::W, 3)],
            SystemId::NavierStokes | SystemId::RotatingNs => &[(Block::U, 3)],
            SystemId::MagnetoMicropolar => &[(Block::U, 3), (Block::W, 3), (Block::B, 3)],
            SystemId::Tropical => &[(Block::U, 3), (Block::V, 3), (Block::Theta, 1)],
            SystemId::GenericLinear => &[(Block::V, 3)],
            SystemId::GenericParabolic => &[(Block::V, 0)],
        }
    }

    /// Blocks that must stay divergence-free.
    pub fn solenoidal_blocks(&self) -> &'static [Block] {
        match self {
            SystemId::MagnetoMicropolar => &[Block::U, Block::B],
            SystemId::GenericLinear | SystemId::GenericParabolic => &[],
            _ => &[Block::U],
        }
    }

    pub fn total_components(&self, dim: usize) -> usize {
        self.block_layout()
            .iter()
            .map(|(_, c)| if *c == 0 { dim } else { *c })
            .sum()
    }
}

/// Tropical climate coefficients (barotropic, baroclinic, temperature).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TropicalCoeffs {
    pub mu: f64,
    pub nu: f64,
    pub eta: f64,
}

/// Rotation defining the constant orthogonal frame of the generic linear
/// dissipative system (axis-angle).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RotationSpec {
    pub axis: [f64; 3],
    pub angle: f64,
}

impl RotationSpec {
    /// Orthogonal 3x3 matrix (Rodrigues form).
    pub fn matrix(&self) -> nalgebra::Matrix3<f64> {
        let axis = nalgebra::Vector3::from(self.axis);
        let n = axis.norm();
        if n == 0.0 {
            return nalgebra::Matrix3::identity();
        }
        nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), self.angle)
            .into_inner()
    }
}

/// Generic dissipative linear system: symbol `P^T diag(-c_i |xi|^{2 gamma}) P`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenericLinearCoeffs {
    /// Fractional dissipation exponent in (0, 1].
    pub gamma_exponent: f64,
    /// Per-channel damping rates, all positive.
    pub c: [f64; 3],
    pub rotation: Option<RotationSpec>,
}

/// Generic anti-symmetric parabolic system: diagonal dissipation plus a
/// registered quadratic flux.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParabolicCoeffs {
    /// Dissipation rate of the default diagonal symbol `-c |k|^2 I`.
    pub c: f64,
    /// Name of the flux in the library.
    pub flux: String,
}

/// Viscosities and couplings for every supported system.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemParams {
    pub mu: f64,
    pub chi: f64,
    pub gamma: f64,
    pub kappa: f64,
    /// Magnetic diffusivity (magneto system only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub magnetic_nu: Option<f64>,
    /// Coriolis parameter (rotating system only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tropical: Option<TropicalCoeffs>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generic_linear: Option<GenericLinearCoeffs>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parabolic: Option<ParabolicCoeffs>,
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams {
            mu: 1.0,
            chi: 1.0,
            gamma: 1.0,
            kappa: 1.0,
            magnetic_nu: None,
            omega: None,
            tropical: None,
            generic_linear: None,
            parabolic: None,
        }
    }
}

impl SystemParams {
    /// The joint dissipation rate `min(mu, gamma)`, always derived.
    pub fn nu(&self) -> f64 {
        self.mu.min(self.gamma)
    }

    /// Whether the eigenvalue-bound hypothesis `32 chi (mu+chi+gamma) > 1`
    /// holds.
    pub fn eigen_hypothesis(&self) -> bool {
        32.0 * self.chi * (self.mu + self.chi + self.gamma) > 1.0
    }

    pub fn validate(&self, system: SystemId) -> Result<()> {
        if !(self.mu > 0.0) || !(self.gamma > 0.0) {
            return Err(Error::config("viscosities mu and gamma must be positive"));
        }
        if self.chi < 0.0 || self.kappa < 0.0 {
            return Err(Error::config("chi and kappa must be nonnegative"));
        }
        match system {
            SystemId::MagnetoMicropolar => {
                let nu = self
                    .magnetic_nu
                    .ok_or_else(|| Error::config("magneto_micropolar needs magnetic_nu"))?;
                if !(nu > 0.0) {
                    return Err(Error::config("magnetic_nu must be positive"));
                }
            }
            SystemId::Tropical => {
                let t = self
                    .tropical
                    .ok_or_else(|| Error::config("tropical system needs tropical coefficients"))?;
                if t.mu < 0.0 || t.nu < 0.0 || t.eta < 0.0 {
                    return Err(Error::config("tropical coefficients must be nonnegative"));
                }
            }
            SystemId::RotatingNs => {
                self.omega
                    .ok_or_else(|| Error::config("rotating_ns needs the Coriolis parameter omega"))?;
            }
            SystemId::GenericLinear => {
                let g = self
                    .generic_linear
                    .as_ref()
                    .ok_or_else(|| Error::config("generic_linear needs its coefficient block"))?;
                if !(g.gamma_exponent > 0.0 && g.gamma_exponent <= 1.0) {
                    return Err(Error::config("gamma_exponent must lie in (0, 1]"));
                }
                if g.c.iter().any(|&c| !(c > 0.0)) {
                    return Err(Error::config("generic_linear rates c_i must be positive"));
                }
            }
            SystemId::GenericParabolic => {
                let p = self
                    .parabolic
                    .as_ref()
                    .ok_or_else(|| Error::config("generic_parabolic needs its coefficient block"))?;
                if !(p.c > 0.0) {
                    return Err(Error::config("parabolic dissipation rate must be positive"));
                }
                let flux = lookup_flux(&p.flux)
                    .ok_or_else(|| Error::config(format!("unknown flux '{}'", p.flux)))?;
                validate_flux(flux.as_ref())?;
            }
            _ => {}
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Quadratic flux library for the generic parabolic system
// ---------------------------------------------------------------------------

/// A smooth vector field per direction with symmetric Jacobian and a
/// quadratic growth bound.
pub trait QuadraticFlux: Send + Sync {
    fn name(&self) -> &'static str;
    /// Evaluate `f_j(u)` pointwise into `out` (same length as `u`).
    fn eval(&self, j: usize, u: &[f64], out: &mut [f64]);
    /// Declared constant of the bound `|f_j(u)| <= C |u|^2`.
    fn quadratic_bound(&self) -> f64;
}

/// Shipped example: `f_j = grad_u(u_j |u|^2 / 2)`, i.e.
/// `f_j(u) = (|u|^2 / 2) e_j + u_j u`. Its Jacobian
/// `e_j u^T + u e_j^T + u_j I` is symmetric and `|f_j(u)| <= 1.5 |u|^2`.
pub struct GradientQuadraticFlux;

impl QuadraticFlux for GradientQuadraticFlux {
    fn name(&self) -> &'static str {
        "quadratic"
    }

    fn eval(&self, j: usize, u: &[f64], out: &mut [f64]) {
        let half_sq = 0.5 * u.iter().map(|v| v * v).sum::<f64>();
        for (i, o) in out.iter_mut().enumerate() {
            *o = u[j] * u[i];
        }
        out[j] += half_sq;
    }

    fn quadratic_bound(&self) -> f64 {
        1.5
    }
}

static FLUX_REGISTRY: RwLock<Option<HashMap<String, Arc<dyn QuadraticFlux>>>> = RwLock::new(None);

/// Register an additional flux for the generic parabolic system.
pub fn register_flux(flux: Arc<dyn QuadraticFlux>) {
    let mut reg = FLUX_REGISTRY.write().unwrap();
    reg.get_or_insert_with(HashMap::new)
        .insert(flux.name().to_string(), flux);
}

pub fn lookup_flux(name: &str) -> Option<Arc<dyn QuadraticFlux>> {
    if name == "quadratic" {
        return Some(Arc::new(GradientQuadraticFlux));
    }
    FLUX_REGISTRY
        .read()
        .unwrap()
        .as_ref()
        .and_then(|m| m.get(name).cloned())
}

/// Sample random states and reject fluxes that break their declared
/// quadratic bound.
fn validate_flux(flux: &dyn QuadraticFlux) -> Result<()> {
    let c = flux.quadratic_bound();
    let mut state = 0x9e3779b97f4a7c15u64;
    let mut next = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
    };
    let mut out = [0.0; 4];
    for _ in 0..256 {
        for n in 2..=4usize {
            let u: Vec<f64> = (0..n).map(|_| next()).collect();
            let usq: f64 = u.iter().map(|v| v * v).sum();
            for j in 0..n {
                flux.eval(j, &u, &mut out[..n]);
                let mag = out[..n].iter().map(|v| v * v).sum::<f64>().sqrt();
                if mag > c * usq * (1.0 + 1e-12) + 1e-300 {
                    return Err(Error::config(format!(
                        "flux '{}' violates its quadratic bound: |f_{j}(u)| = {mag} > {c} |u|^2 = {}",
                        flux.name(),
                        c * usq
                    )));
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Stiff symbols
// ---------------------------------------------------------------------------

/// Matrix of the cross product `v -> xi x v`.
pub fn cross_matrix(xi: [f64; 3]) -> nalgebra::Matrix3<f64> {
    nalgebra::Matrix3::new(0.0, -xi[2], xi[1], xi[2], 0.0, -xi[0], -xi[1], xi[0], 0.0)
}

/// Stiff symbol of `system` at wavenumber `xi`, in block order.
pub fn stiff_symbol(
    system: SystemId,
    params: &SystemParams,
    xi: [f64; 3],
    dim: usize,
) -> DMatrix<Complex64> {
    let k2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
    let total = system.total_components(dim);
    let mut m = DMatrix::<Complex64>::zeros(total, total);
    let re = |v: f64| Complex64::new(v, 0.0);
    let im = |v: f64| Complex64::new(0.0, v);
    match system {
        SystemId::Micropolar | SystemId::MagnetoMicropolar => {
            let r = cross_matrix(xi);
            for i in 0..3 {
                m[(i, i)] = re(-(params.mu + params.chi) * k2);
                m[(3 + i, 3 + i)] = re(-(params.gamma * k2 + 2.0 * params.chi));
                for j in 0..3 {
                    m[(i, 3 + j)] = im(params.chi * r[(i, j)]);
                    m[(3 + i, j)] = im(params.chi * r[(i, j)]);
                    m[(3 + i, 3 + j)] += re(-params.kappa * xi[i] * xi[j]);
                }
            }
            if system == SystemId::MagnetoMicropolar {
                let nu_b = params.magnetic_nu.unwrap_or(1.0);
                for i in 0..3 {
                    m[(6 + i, 6 + i)] = re(-nu_b * k2);
                }
            }
        }
        SystemId::NavierStokes => {
            for i in 0..3 {
                m[(i, i)] = re(-params.mu * k2);
            }
        }
        SystemId::RotatingNs => {
            let omega = params.omega.unwrap_or(0.0);
            let j3 = nalgebra::Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            let proj = if k2 == 0.0 {
                nalgebra::Matrix3::zeros()
            } else {
                let v = nalgebra::Vector3::from(xi);
                nalgebra::Matrix3::identity() - v * v.transpose() / k2
            };
            let cor = proj * j3 * proj;
            for i in 0..3 {
                for j in 0..3 {
                    m[(i, j)] = re(-omega * cor[(i, j)]);
                }
                m[(i, i)] += re(-params.mu * k2);
            }
        }
        SystemId::Tropical => {
            let t = params.tropical.unwrap_or(TropicalCoeffs { mu: 1.0, nu: 1.0, eta: 1.0 });
            for i in 0..3 {
                m[(i, i)] = re(-t.mu * k2);
                m[(3 + i, 3 + i)] = re(-t.nu * k2);
                // v-equation: -grad theta; theta-equation: -div v
                m[(3 + i, 6)] = im(-xi[i]);
                m[(6, 3 + i)] = im(-xi[i]);
            }
            m[(6, 6)] = re(-t.eta * k2);
        }
        SystemId::GenericLinear => {
            let g = params.generic_linear.as_ref().expect("validated");
            let p = g.rotation.map(|r| r.matrix()).unwrap_or_else(nalgebra::Matrix3::identity);
            let rate = k2.powf(g.gamma_exponent);
            let d = nalgebra::Matrix3::from_diagonal(&nalgebra::Vector3::new(
                -g.c[0] * rate,
                -g.c[1] * rate,
                -g.c[2] * rate,
            ));
            let sym = p.transpose() * d * p;
            for i in 0..3 {
                for j in 0..3 {
                    m[(i, j)] = re(sym[(i, j)]);
                }
            }
        }
        SystemId::GenericParabolic => {
            let p = params.parabolic.as_ref().expect("validated");
            for i in 0..total {
                m[(i, i)] = re(-p.c * k2);
            }
        }
    }
    m
}

// ---------------------------------------------------------------------------
// Explicit (quadratic) parts
// ---------------------------------------------------------------------------

/// Explicit right-hand side split off from the stiff symbol.
pub struct RhsSplit {
    /// Quadratic contributions per block, dealiased (and projected for the
    /// velocity block).
    pub explicit: State,
}

/// System evaluator: validated parameters plus cached transforms.
pub struct RhsEvaluator {
    system: SystemId,
    params: SystemParams,
    lattice: Lattice,
    tr: Transform,
}

impl RhsEvaluator {
    pub fn new(system: SystemId, params: SystemParams, lattice: Lattice) -> Result<Self> {
        params.validate(system)?;
        if lattice.dim() == 2 && system != SystemId::GenericParabolic {
            return Err(Error::config(format!(
                "system {} requires a 3-d lattice",
                system.name()
            )));
        }
        Ok(RhsEvaluator { system, params, lattice, tr: Transform::new(lattice) })
    }

    pub fn system(&self) -> SystemId {
        self.system
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn transform(&self) -> &Transform {
        &self.tr
    }

    pub fn symbol(&self, xi: [f64; 3]) -> DMatrix<Complex64> {
        stiff_symbol(self.system, &self.params, xi, self.lattice.dim())
    }

    fn check_blocks(&self, s: &State) -> Result<()> {
        if s.system != self.system {
            return Err(Error::invalid(format!(
                "state belongs to {}, evaluator to {}",
                s.system.name(),
                self.system.name()
            )));
        }
        Ok(())
    }

    /// Grids of all components of a block.
    fn grids(&self, f: &SpectralField) -> Vec<Vec<f64>> {
        (0..f.components()).map(|c| self.tr.to_grid(f.component(c))).collect()
    }

    /// Forward-transform a grid product and dealias.
    fn spectrum_of_product(&self, a: &[f64], b: &[f64]) -> Vec<Complex64> {
        let prod: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x * y).collect();
        let mut coeffs = self.tr.from_grid(&prod);
        for (flat, v) in coeffs.iter_mut().enumerate() {
            if self.lattice.is_aliased(flat) {
                *v = Complex64::default();
            }
        }
        coeffs
    }

    /// `-div(a (x) b)` assembled spectrally: out_i = -i xi_j (a_j b_i)^.
    fn minus_div_tensor(&self, a: &[Vec<f64>], b: &[Vec<f64>]) -> SpectralField {
        let lat = self.lattice;
        let dim = lat.dim();
        let mut out = SpectralField::zeros(lat, b.len());
        for i in 0..b.len() {
            for j in 0..dim {
                let spec = self.spectrum_of_product(&a[j], &b[i]);
                let comp = out.component_mut(i);
                for (flat, v) in spec.iter().enumerate() {
                    let xi = lat.xi(flat);
                    comp[flat] += Complex64::new(0.0, -xi[j]) * v;
                }
            }
        }
        out.pin_zero_mode();
        out
    }

    /// Explicit (quadratic) part of the right-hand side.
    pub fn explicit(&self, s: &State) -> Result<RhsSplit> {
        self.check_blocks(s)?;
        let lat = self.lattice;
        let blocks: Vec<(Block, SpectralField)> = match self.system {
            SystemId::NavierStokes | SystemId::RotatingNs => {
                let u = self.grids(s.block(Block::U).unwrap());
                let fu = self.minus_div_tensor(&u, &u).leray_project();
                vec![(Block::U, fu)]
            }
            SystemId::Micropolar => {
                let u = self.grids(s.block(Block::U).unwrap());
                let w = self.grids(s.block(Block::W).unwrap());
                let fu = self.minus_div_tensor(&u, &u).leray_project();
                let fw = self.minus_div_tensor(&u, &w);
                vec![(Block::U, fu), (Block::W, fw)]
            }
            SystemId::MagnetoMicropolar => {
                let u = self.grids(s.block(Block::U).unwrap());
                let w = self.grids(s.block(Block::W).unwrap());
                let b = self.grids(s.block(Block::B).unwrap());
                let mut fu = self.minus_div_tensor(&u, &u);
                fu.axpy(-1.0, &self.minus_div_tensor(&b, &b));
                let fu = fu.leray_project();
                let fw = self.minus_div_tensor(&u, &w);
                // b-equation: div(b (x) u - u (x) b), exactly divergence-free
                let mut fb = self.minus_div_tensor(&u, &b);
                fb.axpy(-1.0, &self.minus_div_tensor(&b, &u));
                vec![(Block::U, fu), (Block::W, fw), (Block::B, fb)]
            }
            SystemId::Tropical => {
                let u = self.grids(s.block(Block::U).unwrap());
                let v = self.grids(s.block(Block::V).unwrap());
                let th = self.grids(s.block(Block::Theta).unwrap());
                let mut fu = self.minus_div_tensor(&u, &u);
                fu.axpy(1.0, &self.minus_div_tensor(&v, &v));
                let fu = fu.leray_project();
                // -(u.grad)v in conservative form, -(v.grad)u directly
                let mut fv = self.minus_div_tensor(&u, &v);
                let ub = s.block(Block::U).unwrap();
                for i in 0..3 {
                    let mut acc = vec![Complex64::default(); lat.num_modes()];
                    for j in 0..3 {
                        let dju = self.tr.to_grid(
                            &ub
                                .derivative(unit_multi(j))
                                .component(i)
                                .to_vec(),
                        );
                        let spec = self.spectrum_of_product(&v[j], &dju);
                        for (a, d) in acc.iter_mut().zip(spec.iter()) {
                            *a += d;
                        }
                    }
                    let comp = fv.component_mut(i);
                    for (c, a) in comp.iter_mut().zip(acc.iter()) {
                        *c -= a;
                    }
                }
                fv.pin_zero_mode();
                let fth = self.minus_div_tensor(&u, std::slice::from_ref(&th[0]));
                vec![(Block::U, fu), (Block::V, fv), (Block::Theta, fth)]
            }
            SystemId::GenericLinear => {
                vec![(Block::V, SpectralField::zeros(lat, 3))]
            }
            SystemId::GenericParabolic => {
                let p = self.params.parabolic.as_ref().expect("validated");
                let flux = lookup_flux(&p.flux).expect("validated");
                let dim = lat.dim();
                let v = self.grids(s.block(Block::V).unwrap());
                let m = lat.num_modes();
                let mut out = SpectralField::zeros(lat, dim);
                let mut point = vec![0.0; dim];
                let mut fj = vec![0.0; dim];
                for j in 0..dim {
                    // f_j(u) on the grid, one component at a time
                    let mut fgrids = vec![vec![0.0; m]; dim];
                    for flat in 0..m {
                        for c in 0..dim {
                            point[c] = v[c][flat];
                        }
                        flux.eval(j, &point, &mut fj);
                        for c in 0..dim {
                            fgrids[c][flat] = fj[c];
                        }
                    }
                    for i in 0..dim {
                        let spec = self.spectrum_of_product_identity(&fgrids[i]);
                        let comp = out.component_mut(i);
                        for (flat, s) in spec.iter().enumerate() {
                            let xi = lat.xi(flat);
                            // A_j D_j u + D_j(A_j u) = 3 D_j f_j(u)
                            comp[flat] += Complex64::new(0.0, -3.0 * xi[j]) * s;
                        }
                    }
                }
                out.pin_zero_mode();
                vec![(Block::V, out)]
            }
        };
        Ok(RhsSplit { explicit: State::new(self.system, s.time, blocks)? })
    }

    fn spectrum_of_product_identity(&self, grid: &[f64]) -> Vec<Complex64> {
        let mut coeffs = self.tr.from_grid(grid);
        for (flat, v) in coeffs.iter_mut().enumerate() {
            if self.lattice.is_aliased(flat) {
                *v = Complex64::default();
            }
        }
        coeffs
    }

    /// Apply the stiff symbol to a state: the linear part of the split.
    pub fn apply_symbol(&self, s: &State) -> State {
        let lat = self.lattice;
        let m = lat.num_modes();
        let total = self.system.total_components(lat.dim());
        let mut out = s.clone();
        let mut vin = vec![Complex64::default(); total];
        let mut vout = vec![Complex64::default(); total];
        for flat in 0..m {
            let sym = self.symbol(lat.xi(flat));
            let mut off = 0;
            for (_, f) in s.blocks() {
                for c in 0..f.components() {
                    vin[off + c] = f.at(c, flat);
                }
                off += f.components();
            }
            for i in 0..total {
                let mut acc = Complex64::default();
                for j in 0..total {
                    acc += sym[(i, j)] * vin[j];
                }
                vout[i] = acc;
            }
            let mut off = 0;
            let comps: Vec<usize> = out.blocks().iter().map(|(_, f)| f.components()).collect();
            for (bi, &nc) in comps.iter().enumerate() {
                let f = &mut out.blocks_mut()[bi].1;
                for c in 0..nc {
                    f.set(c, flat, vout[off + c]);
                }
                off += nc;
            }
        }
        out.time = s.time;
        out
    }

    /// Full right-hand side evaluated without the split, using the field
    /// operators term by term. Reference route for the split-consistency
    /// check.
    pub fn unsplit_rhs(&self, s: &State) -> Result<State> {
        let mut rhs = self.explicit(s)?.explicit;
        let p = &self.params;
        match self.system {
            SystemId::Micropolar | SystemId::MagnetoMicropolar => {
                let u = s.block(Block::U).unwrap();
                let w = s.block(Block::W).unwrap();
                let mut du = laplacian(u);
                du.scale(p.mu + p.chi);
                du.axpy(p.chi, &w.curl());
                let mut dw = laplacian(w);
                dw.scale(p.gamma);
                dw.axpy(p.chi, &u.curl());
                dw.axpy(-2.0 * p.chi, w);
                dw.axpy(p.kappa, &grad_of_scalar(&w.divergence()));
                rhs.block_mut(Block::U).unwrap().axpy(1.0, &du);
                rhs.block_mut(Block::W).unwrap().axpy(1.0, &dw);
                if self.system == SystemId::MagnetoMicropolar {
                    let b = s.block(Block::B).unwrap();
                    let mut db = laplacian(b);
                    db.scale(p.magnetic_nu.unwrap());
                    rhs.block_mut(Block::B).unwrap().axpy(1.0, &db);
                }
            }
            SystemId::NavierStokes => {
                let u = s.block(Block::U).unwrap();
                let mut du = laplacian(u);
                du.scale(p.mu);
                rhs.block_mut(Block::U).unwrap().axpy(1.0, &du);
            }
            SystemId::RotatingNs => {
                let u = s.block(Block::U).unwrap();
                let mut du = laplacian(u);
                du.scale(p.mu);
                let omega = p.omega.unwrap_or(0.0);
                let lat = self.lattice;
                let m = lat.num_modes();
                let mut cor = SpectralField::zeros(lat, 3);
                for flat in 0..m {
                    // J u = e3 x u = (-u2, u1, 0)
                    cor.set(0, flat, -u.at(1, flat));
                    cor.set(1, flat, u.at(0, flat));
                }
                du.axpy(-omega, &cor.leray_project());
                rhs.block_mut(Block::U).unwrap().axpy(1.0, &du);
            }
            SystemId::Tropical => {
                let t = p.tropical.unwrap();
                let u = s.block(Block::U).unwrap();
                let v = s.block(Block::V).unwrap();
                let th = s.block(Block::Theta).unwrap();
                let mut du = laplacian(u);
                du.scale(t.mu);
                let mut dv = laplacian(v);
                dv.scale(t.nu);
                dv.axpy(-1.0, &grad_of_scalar(th));
                let mut dth = laplacian(th);
                dth.scale(t.eta);
                dth.axpy(-1.0, &v.divergence());
                rhs.block_mut(Block::U).unwrap().axpy(1.0, &du);
                rhs.block_mut(Block::V).unwrap().axpy(1.0, &dv);
                rhs.block_mut(Block::Theta).unwrap().axpy(1.0, &dth);
            }
            SystemId::GenericLinear | SystemId::GenericParabolic => {
                let lin = self.apply_symbol(s);
                rhs.axpy(1.0, &lin);
            }
        }
        Ok(rhs)
    }
}

fn unit_multi(axis: usize) -> [usize; 3] {
    let mut m = [0usize; 3];
    m[axis] = 1;
    m
}

/// Laplacian: multiplication by `-|xi|^2`.
pub fn laplacian(f: &SpectralField) -> SpectralField {
    let lat = *f.lattice();
    let mut out = f.clone();
    out.apply_mode_factor(|flat| Complex64::new(-lat.xi_sq(flat), 0.0));
    out
}

/// Gradient of a scalar field.
pub fn grad_of_scalar(f: &SpectralField) -> SpectralField {
    assert_eq!(f.components(), 1);
    let lat = *f.lattice();
    let dim = lat.dim();
    let m = lat.num_modes();
    let mut out = SpectralField::zeros(lat, dim);
    for flat in 0..m {
        let xi = lat.xi(flat);
        for c in 0..dim {
            out.set(c, flat, Complex64::new(0.0, xi[c]) * f.at(0, flat));
        }
    }
    out
}

/// Pressure recovered from the velocity block:
/// `phat = -|xi|^{-2} (xi (x) xi) : (u (x) u)^`, zero mean.
pub fn pressure_recover(s: &State, tr: &Transform) -> Result<SpectralField> {
    let u = s
        .block(Block::U)
        .ok_or_else(|| Error::invalid("pressure recovery needs a velocity block"))?;
    let lat = *u.lattice();
    let grids: Vec<Vec<f64>> = (0..3).map(|c| tr.to_grid(u.component(c))).collect();
    let mut p = SpectralField::zeros(lat, 1);
    for i in 0..3 {
        for j in i..3 {
            let prod: Vec<f64> = grids[i].iter().zip(grids[j].iter()).map(|(a, b)| a * b).collect();
            let mut spec = tr.from_grid(&prod);
            for (flat, v) in spec.iter_mut().enumerate() {
                if lat.is_aliased(flat) {
                    *v = Complex64::default();
                }
            }
            let weight = if i == j { 1.0 } else { 2.0 };
            let comp = p.component_mut(0);
            for (flat, v) in spec.iter().enumerate() {
                let k2 = lat.xi_sq(flat);
                if k2 > 0.0 {
                    let xi = lat.xi(flat);
                    comp[flat] -= weight * xi[i] * xi[j] / k2 * v;
                }
            }
        }
    }
    Ok(p)
}
