//! Exact evolution of the linearized systems through per-mode symbol
//! exponentials, eigenvalue bounds, semigroup comparison checks, and a
//! whole-space quadrature for high-precision decay measurements.

use crate::error::{Error, Result};
use crate::field::{SpectralField, State};
use crate::lattice::Lattice;
use crate::systems::{stiff_symbol, SystemId, SystemParams};
use nalgebra::{DMatrix, Matrix6};
use num_complex::Complex64;

/// The coupled 6x6 symbol of the linearized velocity/micro-rotation
/// system at one wavenumber.
#[derive(Debug, Clone)]
pub struct SymbolMatrix {
    pub xi: [f64; 3],
    pub entries: Matrix6<Complex64>,
    pub params: SystemParams,
}

/// Assemble the 6x6 symbol: diffusion blocks on the diagonal, the curl
/// coupling `i chi R(xi)` off-diagonal with `R(xi) v = xi x v`, damping
/// `-2 chi` and the `-kappa xi xi^T` rank-one term in the lower block.
pub fn symbol_matrix(xi: [f64; 3], params: &SystemParams) -> SymbolMatrix {
    let m = stiff_symbol(SystemId::Micropolar, params, xi, 3);
    let entries = Matrix6::from_fn(|i, j| m[(i, j)]);
    SymbolMatrix { xi, entries, params: params.clone() }
}

/// Maximum real part over the six eigenvalues.
pub fn eigen_max_real(m: &SymbolMatrix) -> Result<f64> {
    // The symbol is Hermitian: real diagonal blocks, anti-symmetric real
    // R(xi) times i off-diagonal.
    let eig = m
        .entries
        .try_symmetric_eigen(f64::EPSILON, 1024)
        .ok_or_else(|| Error::Numerical("symbol eigensolver did not converge".into()))?;
    Ok(eig.eigenvalues.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)))
}

// ---------------------------------------------------------------------------
// Small dense exponentials
// ---------------------------------------------------------------------------

fn hermitian_defect(a: &DMatrix<Complex64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

fn max_abs(a: &DMatrix<Complex64>) -> f64 {
    a.iter().fold(0.0f64, |acc, c| acc.max(c.norm()))
}

/// exp(A) for a Hermitian matrix via unitary eigendecomposition. The
/// decomposition is validated by reconstructing A; `None` signals that
/// the eigensolver silently lost accuracy and the caller must fall back
/// to scaling and squaring.
fn expm_hermitian(a: &DMatrix<Complex64>) -> Option<DMatrix<Complex64>> {
    let eig = a.clone().try_symmetric_eigen(f64::EPSILON, 4096)?;
    let n = a.nrows();
    let v = &eig.eigenvectors;
    let scale = max_abs(a).max(1e-300);
    let mut recon_defect = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let mut acc = Complex64::default();
            for k in 0..n {
                acc += v[(i, k)] * eig.eigenvalues[k] * v[(j, k)].conj();
            }
            recon_defect = recon_defect.max((acc - a[(i, j)]).norm());
        }
    }
    if recon_defect > 1e-12 * scale {
        return None;
    }
    let mut out = DMatrix::<Complex64>::zeros(n, n);
    for k in 0..n {
        let ek = eig.eigenvalues[k].exp();
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += v[(i, k)] * ek * v[(j, k)].conj();
            }
        }
    }
    Some(out)
}

/// exp(A) by scaling and squaring with the degree-13 Pade approximant.
fn expm_pade(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    const THETA13: f64 = 5.371920351148152;
    let n = a.nrows();
    let norm1 = (0..n)
        .map(|j| (0..n).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let s = if norm1 > THETA13 { (norm1 / THETA13).log2().ceil() as u32 } else { 0 };
    let a = a.map(|v| v / Complex64::new(2f64.powi(s as i32), 0.0));

    let b: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let id = DMatrix::<Complex64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let u_inner = &a6 * (a6.scale(b[13]) + a4.scale(b[11]) + a2.scale(b[9]))
        + a6.scale(b[7])
        + a4.scale(b[5])
        + a2.scale(b[3])
        + id.scale(b[1]);
    let u = &a * u_inner;
    let v = &a6 * (a6.scale(b[12]) + a4.scale(b[10]) + a2.scale(b[8]))
        + a6.scale(b[6])
        + a4.scale(b[4])
        + a2.scale(b[2])
        + id.scale(b[0]);
    let lhs = &v - &u;
    let rhs = &v + &u;
    let mut f = lhs
        .lu()
        .solve(&rhs)
        .expect("Pade denominator is invertible for a scaled matrix");
    for _ in 0..s {
        f = &f * &f;
    }
    f
}

/// Matrix exponential of a small complex matrix. Hermitian input takes
/// the unitary eigendecomposition route, anything else scaling and
/// squaring; the choice is deterministic and reported by callers that
/// keep statistics.
pub fn expm_small(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    if hermitian_defect(a) <= 1e-12 * max_abs(a).max(1e-300) {
        if let Some(e) = expm_hermitian(a) {
            return e;
        }
    }
    expm_pade(a)
}

// ---------------------------------------------------------------------------
// Lattice-wide propagators
// ---------------------------------------------------------------------------

/// How many modes took each exponential route.
#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct PropagatorStats {
    pub hermitian_modes: usize,
    pub pade_modes: usize,
}

/// Cached per-mode matrix exponentials `exp(symbol(xi) * t)` for a full
/// lattice, applied as block matvecs.
pub struct ModePropagator {
    lattice: Lattice,
    comps: usize,
    mats: Vec<Complex64>,
    pub stats: PropagatorStats,
}

impl ModePropagator {
    pub fn new(system: SystemId, params: &SystemParams, lattice: Lattice, t: f64) -> Self {
        let dim = lattice.dim();
        let comps = system.total_components(dim);
        let m = lattice.num_modes();
        let mut mats = vec![Complex64::default(); comps * comps * m];
        let mut stats = PropagatorStats::default();
        for flat in 0..m {
            let sym = stiff_symbol(system, params, lattice.xi(flat), dim).scale(t);
            let herm = hermitian_defect(&sym) <= 1e-12 * max_abs(&sym).max(1e-300);
            let e = match if herm { expm_hermitian(&sym) } else { None } {
                Some(e) => {
                    stats.hermitian_modes += 1;
                    e
                }
                None => {
                    stats.pade_modes += 1;
                    expm_pade(&sym)
                }
            };
            let base = flat * comps * comps;
            for i in 0..comps {
                for j in 0..comps {
                    mats[base + i * comps + j] = e[(i, j)];
                }
            }
        }
        ModePropagator { lattice, comps, mats, stats }
    }

    pub fn apply_in_place(&self, s: &mut State) {
        let m = self.lattice.num_modes();
        let comps = self.comps;
        debug_assert_eq!(s.total_components(), comps);
        let mut slices: Vec<&mut [Complex64]> = s
            .blocks_mut()
            .iter_mut()
            .flat_map(|(_, f)| f.coeffs_mut().chunks_exact_mut(m))
            .collect();
        debug_assert_eq!(slices.len(), comps);
        let mut vin = vec![Complex64::default(); comps];
        for flat in 0..m {
            for (v, sl) in vin.iter_mut().zip(slices.iter()) {
                *v = sl[flat];
            }
            let base = flat * comps * comps;
            for (i, sl) in slices.iter_mut().enumerate() {
                let row = &self.mats[base + i * comps..base + (i + 1) * comps];
                let mut acc = Complex64::default();
                for (a, b) in row.iter().zip(vin.iter()) {
                    acc += a * b;
                }
                sl[flat] = acc;
            }
        }
    }

    pub fn apply(&self, s: &State) -> State {
        let mut out = s.clone();
        self.apply_in_place(&mut out);
        out
    }
}

/// Evolve the exact linearization: per mode,
/// `zhat(xi, t) = exp(symbol(xi) t) zhat(xi, 0)`.
pub fn evolve_linear(state0: &State, t: f64, params: &SystemParams) -> Result<State> {
    if t < 0.0 {
        return Err(Error::invalid("evolution time must be nonnegative"));
    }
    let prop = ModePropagator::new(state0.system, params, *state0.lattice(), t);
    let mut out = prop.apply(state0);
    out.time = state0.time + t;
    Ok(out)
}

/// Closed-form evolution by `gamma lap + kappa grad div`: the component of
/// `what` parallel to `xi` decays at rate `(gamma+kappa)|xi|^2`, the
/// perpendicular part at `gamma |xi|^2`.
pub fn lame_semigroup(w0: &SpectralField, t: f64, gamma: f64, kappa: f64) -> SpectralField {
    assert_eq!(w0.components(), 3);
    let lat = *w0.lattice();
    let m = lat.num_modes();
    let mut out = w0.clone();
    for flat in 0..m {
        let xi = lat.xi(flat);
        let k2 = lat.xi_sq(flat);
        let e_perp = (-gamma * k2 * t).exp();
        let e_par = (-(gamma + kappa) * k2 * t).exp();
        if k2 == 0.0 {
            continue;
        }
        let mut dot = Complex64::default();
        for c in 0..3 {
            dot += xi[c] * w0.at(c, flat);
        }
        dot /= k2;
        for c in 0..3 {
            let par = xi[c] * dot;
            let perp = w0.at(c, flat) - par;
            out.set(c, flat, e_perp * perp + e_par * par);
        }
    }
    out
}

/// Heat semigroup: multiply each mode by `exp(-c |xi|^2 t)`.
pub fn heat_semigroup(f: &SpectralField, t: f64, c: f64) -> SpectralField {
    let lat = *f.lattice();
    let mut out = f.clone();
    out.apply_mode_factor(|flat| Complex64::new((-c * lat.xi_sq(flat) * t).exp(), 0.0));
    out
}

/// L2 norm of `exp(c lap t)` applied to a state, computed spectrally.
pub fn heat_norm(s: &State, t: f64, c: f64) -> f64 {
    let lat = *s.lattice();
    s.blocks()
        .iter()
        .map(|(_, f)| {
            let g = heat_semigroup_state_block(f, t, c, &lat);
            g * g
        })
        .sum::<f64>()
        .sqrt()
}

fn heat_semigroup_state_block(f: &SpectralField, t: f64, c: f64, lat: &Lattice) -> f64 {
    let m = lat.num_modes();
    let mut terms = vec![0.0; m];
    for comp in 0..f.components() {
        let cf = f.component(comp);
        for (flat, term) in terms.iter_mut().enumerate() {
            let w = (-2.0 * c * lat.xi_sq(flat) * t).exp();
            *term += w * cf[flat].norm_sqr();
        }
    }
    (lat.volume() * crate::field::pairwise_sum(&terms)).sqrt()
}

// ---------------------------------------------------------------------------
// Eigenvalue bound scan
// ---------------------------------------------------------------------------

/// Result of sampling `lambda_max(M(xi)) / |xi|^2` over a deterministic
/// set of wavenumbers.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EigenBoundReport {
    pub sample_count: usize,
    pub lambda_max_over_xi2: Vec<f64>,
    /// Largest C with `lambda_max <= -C |xi|^2` over the samples.
    pub best_c: f64,
    pub hypothesis_ok: bool,
    /// Deterministic sampling identifier recorded for reproducibility.
    pub sampling: String,
}

/// Sample radii log-uniformly in `[1e-3, 1e2]` and directions on a
/// Fibonacci sphere; both sequences are deterministic.
pub fn eigen_bound_scan(params: &SystemParams, samples: usize) -> Result<EigenBoundReport> {
    let golden = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut ratios = Vec::with_capacity(samples);
    for i in 0..samples {
        let fr = (i as f64 + 0.5) / samples as f64;
        let r = 1e-3 * (1e5f64).powf(fr);
        let z = 1.0 - 2.0 * fr;
        let rho = (1.0 - z * z).max(0.0).sqrt();
        let phi = 2.0 * std::f64::consts::PI * (i as f64 / golden).fract();
        let xi = [r * rho * phi.cos(), r * rho * phi.sin(), r * z];
        let lam = eigen_max_real(&symbol_matrix(xi, params))?;
        ratios.push(lam / (r * r));
    }
    let best_c = -ratios.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    Ok(EigenBoundReport {
        sample_count: samples,
        lambda_max_over_xi2: ratios,
        best_c,
        hypothesis_ok: params.eigen_hypothesis(),
        sampling: "fibonacci-sphere x log-radius [1e-3,1e2]".into(),
    })
}

// ---------------------------------------------------------------------------
// Semigroup comparison
// ---------------------------------------------------------------------------

/// One time sample of a semigroup-vs-heat comparison.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ComparisonRow {
    pub t: f64,
    pub semigroup_norm: f64,
    pub heat_norm: f64,
    /// `heat - semigroup`; nonnegative up to roundoff when the bound holds.
    pub slack: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ComparisonReport {
    pub hypothesis_ok: bool,
    pub c_coupled: f64,
    pub c_lame: f64,
    pub coupled: Vec<ComparisonRow>,
    pub lame: Vec<ComparisonRow>,
}

/// Check `||exp(A t) G|| <= ||exp(c lap t) G||` for the coupled symbol
/// (with the supplied `c`, normally the scanned best C) and the analogous
/// bound for the block of `gamma lap + kappa grad div` acting on the
/// micro-rotation block with its own exact constant `min(c, gamma)`.
pub fn verify_comparison(
    g: &State,
    params: &SystemParams,
    c: f64,
    times: &[f64],
) -> Result<ComparisonReport> {
    let mut coupled = Vec::new();
    let mut lame = Vec::new();
    let c_lame = c.min(params.gamma);
    for &t in times {
        let evolved = evolve_linear(g, t, params)?;
        let sg = evolved.l2_norm();
        let hn = heat_norm(g, t, c);
        coupled.push(ComparisonRow { t, semigroup_norm: sg, heat_norm: hn, slack: hn - sg });
        if let Some(w) = g.block(crate::field::Block::W) {
            let lw = lame_semigroup(w, t, params.gamma, params.kappa).l2_norm();
            let hw = heat_semigroup(w, t, c_lame).l2_norm();
            lame.push(ComparisonRow { t, semigroup_norm: lw, heat_norm: hw, slack: hw - lw });
        }
    }
    Ok(ComparisonReport {
        hypothesis_ok: params.eigen_hypothesis(),
        c_coupled: c,
        c_lame,
        coupled,
        lame,
    })
}

// ---------------------------------------------------------------------------
// Whole-space quadrature
// ---------------------------------------------------------------------------

/// Isotropic Gaussian initial data with closed-form transform:
/// `uhat0(xi) = amp_u exp(-|xi|^2/(2 sigma^2)) P_xi dir_u` and
/// `what0(xi) = amp_w exp(-|xi|^2/(2 sigma^2)) dir_w`.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct GaussianProfile {
    pub sigma: f64,
    pub amp_u: f64,
    pub dir_u: [f64; 3],
    pub amp_w: f64,
    pub dir_w: [f64; 3],
}

impl GaussianProfile {
    fn u_weight(&self) -> f64 {
        let c2: f64 = self.dir_u.iter().map(|v| v * v).sum();
        self.amp_u * self.amp_u * c2
    }

    fn w_weight(&self) -> f64 {
        let c2: f64 = self.dir_w.iter().map(|v| v * v).sum();
        self.amp_w * self.amp_w * c2
    }

    /// Closed-form initial norms: the radial Gaussian moment is
    /// `int r^2 exp(-r^2/sigma^2) dr = sqrt(pi)/4 sigma^3`.
    pub fn u0_norm(&self) -> f64 {
        let moment = std::f64::consts::PI.sqrt() / 4.0 * self.sigma.powi(3);
        let pref = (2.0 * std::f64::consts::PI).powi(-3);
        (pref * 8.0 * std::f64::consts::PI / 3.0 * self.u_weight() * moment).sqrt()
    }

    pub fn w0_norm(&self) -> f64 {
        let moment = std::f64::consts::PI.sqrt() / 4.0 * self.sigma.powi(3);
        let pref = (2.0 * std::f64::consts::PI).powi(-3);
        // perpendicular 8pi/3 plus parallel 4pi/3 = full 4pi
        (pref * 4.0 * std::f64::consts::PI * self.w_weight() * moment).sqrt()
    }

    pub fn z0_norm(&self) -> f64 {
        (self.u0_norm().powi(2) + self.w0_norm().powi(2)).sqrt()
    }
}

/// Entries of the 2x2 exponential of the helicity block
/// `[[-p, q], [q, -s]]` at time `t`, in overflow-safe form.
fn helicity_exp(p: f64, s: f64, q: f64, t: f64) -> (f64, f64, f64) {
    let a = 0.5 * (p + s);
    let d = 0.5 * (p - s);
    let rho = (d * d + q * q).sqrt();
    // exp(-(a -+ rho) t) stays bounded: rho < a whenever p s > q^2.
    let em = (-(a - rho) * t).exp();
    let ep = (-(a + rho) * t).exp();
    let cosh_term = 0.5 * (em + ep);
    let sinh_over_rho = if rho * t < 1e-6 {
        // e^{-a t} t sinhc(rho t)
        let x = rho * t;
        (-a * t).exp() * t * (1.0 + x * x / 6.0)
    } else {
        0.5 * (em - ep) / rho
    };
    let e11 = cosh_term - d * sinh_over_rho;
    let e22 = cosh_term + d * sinh_over_rho;
    let e12 = q * sinh_over_rho;
    (e11, e22, e12)
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Integrate over `[0, rmax]` on a geometric partition so that narrow
/// concentrations near the origin are resolved.
fn radial_integral(f: &impl Fn(f64) -> f64, rmax: f64, tol: f64) -> f64 {
    let mut total = 0.0;
    let mut hi = rmax;
    for _ in 0..48 {
        let lo = hi / 2.0;
        total += adaptive_simpson(f, lo, hi, tol * 0.02);
        hi = lo;
        if hi < 1e-14 * rmax {
            break;
        }
    }
    total += adaptive_simpson(f, 0.0, hi, tol * 0.02);
    total
}

/// Norm samples of the exact whole-space linear evolution.
#[derive(Debug, Clone, serde::Serialize)]
pub struct QuadratureSeries {
    pub times: Vec<f64>,
    pub u_norm: Vec<f64>,
    pub w_norm: Vec<f64>,
    pub z_norm: Vec<f64>,
}

/// Whole-space decay of the linearized system from a Gaussian profile,
/// via radial quadrature: the angular integrals reduce exactly because
/// the coupling splits into identical helicity blocks and a decoupled
/// parallel component.
pub fn linear_decay_quadrature(
    profile: &GaussianProfile,
    params: &SystemParams,
    times: &[f64],
) -> Result<QuadratureSeries> {
    if profile.sigma <= 0.0 {
        return Err(Error::invalid("profile width must be positive"));
    }
    let pref = (2.0 * std::f64::consts::PI).powi(-3);
    let perp = 8.0 * std::f64::consts::PI / 3.0;
    let par = 4.0 * std::f64::consts::PI / 3.0;
    let u2 = profile.u_weight();
    let w2 = profile.w_weight();
    let sig = profile.sigma;
    let rmax = 14.0 * sig;
    let mut out = QuadratureSeries {
        times: times.to_vec(),
        u_norm: Vec::new(),
        w_norm: Vec::new(),
        z_norm: Vec::new(),
    };
    for &t in times {
        let g2 = move |r: f64| (-(r * r) / (sig * sig)).exp();
        let u_int = radial_integral(
            &|r: f64| {
                let (e11, _, e12) = helicity_exp(
                    (params.mu + params.chi) * r * r,
                    params.gamma * r * r + 2.0 * params.chi,
                    params.chi * r,
                    t,
                );
                r * r * g2(r) * (e11 * e11 * u2 + e12 * e12 * w2)
            },
            rmax,
            1e-9,
        );
        let w_perp_int = radial_integral(
            &|r: f64| {
                let (_, e22, e12) = helicity_exp(
                    (params.mu + params.chi) * r * r,
                    params.gamma * r * r + 2.0 * params.chi,
                    params.chi * r,
                    t,
                );
                r * r * g2(r) * (e12 * e12 * u2 + e22 * e22 * w2)
            },
            rmax,
            1e-9,
        );
        let w_par_int = radial_integral(
            &|r: f64| {
                let rate = (params.gamma + params.kappa) * r * r + 2.0 * params.chi;
                r * r * g2(r) * (-2.0 * rate * t).exp() * w2
            },
            rmax,
            1e-9,
        );
        let u_sq = pref * perp * u_int;
        let w_sq = pref * (perp * w_perp_int + par * w_par_int);
        out.u_norm.push(u_sq.sqrt());
        out.w_norm.push(w_sq.sqrt());
        out.z_norm.push((u_sq + w_sq).sqrt());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Block;
    use crate::stepper::initial_data::random_state;
    use crate::systems::cross_matrix;
    use approx::assert_relative_eq;

    fn params() -> SystemParams {
        SystemParams::default()
    }

    fn lat() -> Lattice {
        Lattice::new(8, 10.0).unwrap()
    }

    #[test]
    fn symbol_at_zero_mode_is_pure_damping() {
        let m = symbol_matrix([0.0, 0.0, 0.0], &params());
        for i in 0..6 {
            for j in 0..6 {
                let expect = if i == j && i >= 3 { -2.0 } else { 0.0 };
                assert_relative_eq!(m.entries[(i, j)].re, expect, epsilon = 1e-15);
                assert_eq!(m.entries[(i, j)].im, 0.0);
            }
        }
        assert_relative_eq!(eigen_max_real(&m).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn symbol_decouples_without_vortex_viscosity() {
        let p = SystemParams { chi: 0.0, ..params() };
        let m = symbol_matrix([1.0, 0.0, 0.0], &p);
        for i in 0..3 {
            for j in 3..6 {
                assert_eq!(m.entries[(i, j)], Complex64::default());
                assert_eq!(m.entries[(j, i)], Complex64::default());
            }
        }
        // max eigenvalue = -min(mu, gamma) |xi|^2
        let lam = eigen_max_real(&m).unwrap();
        assert_relative_eq!(lam, -p.mu.min(p.gamma), epsilon = 1e-12);
    }

    #[test]
    fn coupling_slots_carry_the_third_wavenumber() {
        let m = symbol_matrix([0.0, 0.0, 1.5], &params());
        // R(xi) v = xi x v: slots (1,2)/(2,1) hold -+ xi_3
        assert_relative_eq!(m.entries[(0, 4)].im, -1.5, epsilon = 1e-15);
        assert_relative_eq!(m.entries[(1, 3)].im, 1.5, epsilon = 1e-15);
        // antisymmetry of R
        let r = cross_matrix([0.0, 0.0, 1.5]);
        assert_eq!(r.transpose(), -r);
    }

    #[test]
    fn symbol_coupling_matches_curl_transform() {
        // i chi R(xi) what must equal the transform of chi curl w.
        let lat = lat();
        let w = crate::stepper::initial_data::random_band_limited(lat, 3, 9, 0.4);
        let cw = w.curl();
        let p = params();
        for flat in [1, 5, 73, 200] {
            let m = symbol_matrix(lat.xi(flat), &p);
            for i in 0..3 {
                let mut acc = Complex64::default();
                for j in 0..3 {
                    acc += m.entries[(i, 3 + j)] * w.at(j, flat);
                }
                let expect = p.chi * cw.at(i, flat);
                assert!((acc - expect).norm() <= 1e-12 * expect.norm().max(1e-12));
            }
        }
    }

    #[test]
    fn evolve_identity_at_zero_time_and_heat_limit() {
        let lat = lat();
        let s = random_state(SystemId::Micropolar, lat, 1, 1.0);
        let same = evolve_linear(&s, 0.0, &params()).unwrap();
        assert!(same.sub(&s).l2_norm() <= 1e-13 * s.l2_norm());

        // chi = 0, w0 = 0: the velocity block obeys the heat flow with mu
        let p = SystemParams { chi: 0.0, ..params() };
        let mut s0 = s.clone();
        s0.block_mut(Block::W).unwrap().scale(0.0);
        let t = 0.7;
        let evolved = evolve_linear(&s0, t, &p).unwrap();
        let heat = heat_semigroup(s0.block(Block::U).unwrap(), t, p.mu);
        let d = evolved.block(Block::U).unwrap().sub(&heat).l2_norm();
        assert!(d <= 1e-10 * heat.l2_norm());
    }

    #[test]
    fn semigroup_composition_law() {
        let lat = lat();
        let s = random_state(SystemId::Micropolar, lat, 2, 1.0);
        let p = params();
        for (t1, t2) in [(0.1, 1.0), (1.0, 10.0), (0.1, 0.1)] {
            let once = evolve_linear(&s, t1 + t2, &p).unwrap();
            let twice = evolve_linear(&evolve_linear(&s, t1, &p).unwrap(), t2, &p).unwrap();
            let d = once.sub(&twice).l2_norm();
            assert!(d <= 1e-9 * once.l2_norm().max(1e-30), "composition defect {d}");
        }
    }

    #[test]
    fn evolution_preserves_reality() {
        let lat = lat();
        let s = random_state(SystemId::Micropolar, lat, 3, 1.0);
        let evolved = evolve_linear(&s, 2.5, &params()).unwrap();
        for (_, f) in evolved.blocks() {
            assert!(f.hermitian_defect() <= 1e-12);
        }
    }

    #[test]
    fn lame_rates_and_generic_exponential_agree() {
        let lat = lat();
        let (gamma, kappa) = (0.8, 1.3);
        // single mode parallel / perpendicular rates
        let mut w = SpectralField::zeros(lat, 3);
        let flat = 1; // xi along e3
        w.set(2, flat, Complex64::new(1.0, 0.0)); // parallel
        w.set(0, flat, Complex64::new(1.0, 0.0)); // perpendicular
        let t = 0.9;
        let out = lame_semigroup(&w, t, gamma, kappa);
        let k2 = lat.xi_sq(flat);
        assert_relative_eq!(out.at(2, flat).re, (-(gamma + kappa) * k2 * t).exp(), epsilon = 1e-13);
        assert_relative_eq!(out.at(0, flat).re, (-gamma * k2 * t).exp(), epsilon = 1e-13);

        // random field vs 3x3 exponential per mode
        let w = crate::stepper::initial_data::random_band_limited(lat, 3, 14, 0.5);
        let out = lame_semigroup(&w, t, gamma, kappa);
        for flat in [1, 9, 100, 300] {
            let xi = lat.xi(flat);
            let k2 = lat.xi_sq(flat);
            let mut a = DMatrix::<Complex64>::zeros(3, 3);
            for i in 0..3 {
                a[(i, i)] = Complex64::new(-gamma * k2 * t, 0.0);
                for j in 0..3 {
                    a[(i, j)] += Complex64::new(-kappa * xi[i] * xi[j] * t, 0.0);
                }
            }
            let e = expm_small(&a);
            for i in 0..3 {
                let mut acc = Complex64::default();
                for j in 0..3 {
                    acc += e[(i, j)] * w.at(j, flat);
                }
                assert!((acc - out.at(i, flat)).norm() <= 1e-10);
            }
        }
    }

    #[test]
    fn heat_semigroup_contracts() {
        let lat = lat();
        let f = crate::stepper::initial_data::random_band_limited(lat, 3, 4, 0.4);
        let mut prev = f.l2_norm();
        for k in 1..=5 {
            let cur = heat_semigroup(&f, k as f64 * 0.2, 0.7).l2_norm();
            assert!(cur <= prev * (1.0 + 1e-14));
            prev = cur;
        }
    }

    #[test]
    fn pade_matches_hermitian_route() {
        let m = symbol_matrix([0.3, -1.2, 0.7], &params());
        let a = DMatrix::from_fn(6, 6, |i, j| m.entries[(i, j)] * Complex64::new(0.8, 0.0));
        let h = expm_hermitian(&a).expect("validated eigendecomposition");
        let p = expm_pade(&a);
        let defect: f64 = (0..6)
            .flat_map(|i| (0..6).map(move |j| (i, j)))
            .map(|(i, j)| (h[(i, j)] - p[(i, j)]).norm())
            .fold(0.0, f64::max);
        assert!(defect <= 1e-12, "route disagreement {defect}");
    }

    #[test]
    fn eigen_scan_produces_positive_uniform_constant() {
        let report = eigen_bound_scan(&params(), 2000).unwrap();
        assert!(report.hypothesis_ok);
        assert!(report.best_c > 0.0);
        assert!(report.lambda_max_over_xi2.iter().all(|&r| r <= -report.best_c + 1e-12));
        // stability under doubling
        let double = eigen_bound_scan(&params(), 4000).unwrap();
        let rel = (report.best_c - double.best_c).abs() / report.best_c;
        assert!(rel <= 0.05, "best_c unstable: {rel}");
    }

    #[test]
    fn comparison_bound_holds_on_random_data() {
        let lat = lat();
        let p = params();
        let c = eigen_bound_scan(&p, 2000).unwrap().best_c;
        for seed in 0..5 {
            let g = random_state(SystemId::Micropolar, lat, seed, 1.0);
            let report = verify_comparison(&g, &p, c, &[0.1, 0.5, 2.0, 10.0]).unwrap();
            for row in report.coupled.iter().chain(report.lame.iter()) {
                assert!(
                    row.slack >= -1e-10 * row.heat_norm.max(1e-30),
                    "slack {} at t={}",
                    row.slack,
                    row.t
                );
            }
        }
    }

    #[test]
    fn comparison_is_equality_for_single_mode_heat() {
        // chi = 0, data on a single u mode: both sides are the exact heat factor
        let lat = lat();
        let p = SystemParams { chi: 0.0, mu: 0.6, gamma: 0.9, kappa: 0.0, ..params() };
        let mut u = SpectralField::zeros(lat, 3);
        u.set(0, 2, Complex64::new(0.5, 0.1)); // xi along e3, e1-polarized: solenoidal
        u.set(0, lat.num_modes() - 2, Complex64::new(0.5, -0.1));
        let s = State::new(
            SystemId::Micropolar,
            0.0,
            vec![(Block::U, u), (Block::W, SpectralField::zeros(lat, 3))],
        )
        .unwrap();
        let report = verify_comparison(&s, &p, p.mu.min(p.gamma), &[0.3, 1.7]).unwrap();
        for row in &report.coupled {
            // c = min(mu,gamma) = mu here, and the data sees exactly rate mu
            assert_relative_eq!(row.semigroup_norm, row.heat_norm, max_relative = 1e-12);
        }
    }

    #[test]
    fn quadrature_matches_closed_forms() {
        let profile = GaussianProfile {
            sigma: 0.4,
            amp_u: 1.0,
            dir_u: [0.0, 0.0, 1.0],
            amp_w: 0.5,
            dir_w: [1.0, 0.0, 0.0],
        };
        let p = params();
        let series = linear_decay_quadrature(&profile, &p, &[0.0]).unwrap();
        assert_relative_eq!(series.u_norm[0], profile.u0_norm(), max_relative = 1e-6);
        assert_relative_eq!(series.w_norm[0], profile.w0_norm(), max_relative = 1e-6);
        assert_relative_eq!(series.z_norm[0], profile.z0_norm(), max_relative = 1e-6);

        // chi = 0: u follows the heat flow with viscosity mu
        let p0 = SystemParams { chi: 0.0, mu: 0.7, ..params() };
        let series = linear_decay_quadrature(&profile, &p0, &[0.0, 2.0, 8.0]).unwrap();
        for (i, &t) in [0.0, 2.0, 8.0].iter().enumerate() {
            let oracle = crate::oracle::heat_gaussian_norm(
                t,
                p0.mu,
                profile.sigma,
                profile.amp_u,
                crate::oracle::GaussianShape::SolenoidalVector,
            );
            assert_relative_eq!(series.u_norm[i], oracle, max_relative = 1e-6);
        }
    }

    #[test]
    fn quadrature_helicity_form_matches_generic_exponential() {
        // spot-check the 2x2 closed form against the full 6x6 route
        let p = params();
        for &(r, t) in &[(0.05, 3.0), (0.4, 1.0), (2.0, 0.3)] {
            let (e11, e22, e12) = helicity_exp(
                (p.mu + p.chi) * r * r,
                p.gamma * r * r + 2.0 * p.chi,
                p.chi * r,
                t,
            );
            // xi along e3; apply the 6x6 exponential to the helicity-plus
            // vector placed in the u block and read back its components.
            let m = symbol_matrix([0.0, 0.0, r], &p);
            let a = DMatrix::from_fn(6, 6, |i, j| m.entries[(i, j)] * Complex64::new(t, 0.0));
            let e = expm_small(&a);
            let s2 = 2.0f64.sqrt();
            let iu = Complex64::new(0.0, 1.0);
            let mut x = DMatrix::<Complex64>::zeros(6, 1);
            x[(0, 0)] = Complex64::new(1.0 / s2, 0.0);
            x[(1, 0)] = iu / s2;
            let y = &e * &x;
            // project onto helicity plus in the u and w blocks
            let got_e11 = (y[(0, 0)] - iu * y[(1, 0)]) / s2;
            let got_e21 = (y[(3, 0)] - iu * y[(4, 0)]) / s2;
            assert!((got_e11 - Complex64::new(e11, 0.0)).norm() < 1e-10);
            assert!((got_e21 - Complex64::new(e12, 0.0)).norm() < 1e-10);
            // same vector placed in the w block gives E22
            let mut xw = DMatrix::<Complex64>::zeros(6, 1);
            xw[(3, 0)] = Complex64::new(1.0 / s2, 0.0);
            xw[(4, 0)] = iu / s2;
            let yw = &e * &xw;
            let got_e22 = (yw[(3, 0)] - iu * yw[(4, 0)]) / s2;
            assert!((got_e22 - Complex64::new(e22, 0.0)).norm() < 1e-10);
        }
    }
}
