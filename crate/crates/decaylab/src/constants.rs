//! Decay constants, exponent predictions and regularity-time bounds.
//!
//! The central object is the one-parameter minimization
//! `K(alpha, m) = min_{delta > 0} delta^{-1/2} prod_{j=0}^{m}
//! (alpha + j/2 + delta)^{1/2}`, evaluated by golden-section search on
//! `log delta`. Everything else (the summed `K~`, the piecewise extra
//! exponent `beta`, the error-bound constant, the predicted decay
//! exponents) composes it.

use crate::error::{Error, Result};
use crate::systems::SystemParams;
use serde::Serialize;

/// Decay class of the data: the exponent `alpha` of the velocity L2 decay,
/// the tail-supremum estimate `lambda0` of `t^alpha ||u||`, and the L2
/// norm of the initial state.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AlphaParams {
    pub alpha: f64,
    pub lambda0: Option<f64>,
    pub z0_norm: Option<f64>,
}

impl AlphaParams {
    pub fn new(alpha: f64) -> Self {
        AlphaParams { alpha, lambda0: None, z0_norm: None }
    }
}

/// One evaluated constant with provenance notes.
#[derive(Debug, Clone, Serialize)]
pub struct ConstantReport {
    pub name: String,
    pub value: f64,
    /// Minimizing delta when the minimum is attained at an interior point.
    pub attained_delta: Option<f64>,
    pub case_label: String,
}

const DELTA_LOG_LO: f64 = -8.0 * std::f64::consts::LN_10;
const DELTA_LOG_HI: f64 = 8.0 * std::f64::consts::LN_10;

/// Golden-section minimization on a bracket, tolerance on the argument.
fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let invphi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

fn check_km_domain(alpha: f64, m: usize) -> Result<()> {
    if !(0.0..=10.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha = {alpha} outside [0, 10]")));
    }
    if m > 12 {
        return Err(Error::invalid(format!("derivative order m = {m} exceeds 12")));
    }
    Ok(())
}

/// `K(alpha, m)`: the minimized product constant.
///
/// Degenerate cases: for `m = 0, alpha > 0` the expression decreases to 1
/// as `delta -> infinity` (value 1, no attained delta); for `alpha = 0`
/// the `j = 0` factor cancels the `delta^{-1/2}` prefactor and the
/// infimum `sqrt(m! / 2^m)` is approached as `delta -> 0`.
pub fn k_alpha_m(alpha: f64, m: usize) -> Result<ConstantReport> {
    check_km_domain(alpha, m)?;
    let name = format!("K[alpha={alpha},m={m}]");
    if m == 0 {
        return Ok(if alpha == 0.0 {
            ConstantReport {
                name,
                value: 1.0,
                attained_delta: Some(1.0),
                case_label: "expression identically 1; every delta attains".into(),
            }
        } else {
            ConstantReport {
                name,
                value: 1.0,
                attained_delta: None,
                case_label: "infimum 1 approached as delta -> infinity".into(),
            }
        });
    }
    if alpha == 0.0 {
        // prefactor cancels against the j = 0 factor; product over j >= 1
        // decreases to its delta -> 0 limit
        let log_val: f64 = (1..=m).map(|j| (j as f64 / 2.0).ln()).sum::<f64>() / 2.0;
        return Ok(ConstantReport {
            name,
            value: log_val.exp(),
            attained_delta: None,
            case_label: "infimum approached as delta -> 0".into(),
        });
    }
    let objective = |x: f64| {
        let delta = x.exp();
        let mut acc = -0.5 * x;
        for j in 0..=m {
            acc += 0.5 * (alpha + j as f64 / 2.0 + delta).ln();
        }
        acc
    };
    let (x, fx) = golden_min(objective, DELTA_LOG_LO, DELTA_LOG_HI, 1e-10);
    Ok(ConstantReport {
        name,
        value: fx.exp(),
        attained_delta: Some(x.exp()),
        case_label: "interior minimum by golden section on log delta".into(),
    })
}

/// Plain value of `K(alpha, m)`.
pub fn k_value(alpha: f64, m: usize) -> Result<f64> {
    Ok(k_alpha_m(alpha, m)?.value)
}

/// The summed constant
/// `K~(alpha, m) = sum_{l=0}^{m} K_l^{1/4} K_{l+1}^{3/4} K_{m-l+1}^{1/4} K_{m-l+2}^{3/4}`.
pub fn k_tilde(alpha: f64, m: usize) -> Result<f64> {
    check_km_domain(alpha, m)?;
    let mut total = 0.0;
    for l in 0..=m {
        total += k_value(alpha, l)?.powf(0.25)
            * k_value(alpha, l + 1)?.powf(0.75)
            * k_value(alpha, m - l + 1)?.powf(0.25)
            * k_value(alpha, m - l + 2)?.powf(0.75);
    }
    Ok(total)
}

/// Extra decay exponent of the error fields over the solution, piecewise
/// in alpha with left-closed branches.
pub fn beta_of_alpha(alpha: f64) -> Result<f64> {
    if !(0.0..1.25).contains(&alpha) {
        return Err(Error::invalid(format!(
            "alpha = {alpha} outside the admissible range [0, 1.25) for the error-decay constants"
        )));
    }
    Ok(if alpha < 0.5 {
        alpha + 0.25
    } else if alpha < 1.0 {
        0.25
    } else {
        1.25 - alpha
    })
}

/// The error-bound constant `C(nu, chi, alpha, m)`, with `c` the
/// semigroup comparison constant.
pub fn error_constant(
    params: &SystemParams,
    ap: &AlphaParams,
    m: usize,
    c: f64,
) -> Result<ConstantReport> {
    if !(c > 0.0) {
        return Err(Error::invalid("comparison constant c must be positive"));
    }
    let alpha = ap.alpha;
    let beta = beta_of_alpha(alpha)?;
    let nu = params.nu();
    let expo = m as f64 / 2.0 + 1.25;
    let ktil = k_tilde(alpha, m)?;
    let lambda0 = ap
        .lambda0
        .ok_or_else(|| Error::invalid("error constant needs a lambda0 estimate"))?;
    let pow2 = 2f64.powf(alpha + beta + m as f64 / 2.0);
    let (value, label) = if alpha < 0.5 {
        (
            (nu.powf(-expo) * ktil + c.powf(-expo) * pow2) * lambda0 * lambda0,
            "alpha in [0, 1/2)".to_string(),
        )
    } else {
        let z0 = ap
            .z0_norm
            .ok_or_else(|| Error::invalid("error constant needs the initial norm for alpha >= 1/2"))?;
        if alpha < 1.0 {
            (
                nu.powf(-expo) * ktil * lambda0 * lambda0 + c.powf(-expo) * z0 * pow2 * lambda0,
                "alpha in [1/2, 1)".to_string(),
            )
        } else {
            (
                nu.powf(-expo) * ktil * lambda0 * lambda0 + c.powf(-expo) * z0 * pow2,
                "alpha in [1, 5/4)".to_string(),
            )
        }
    };
    Ok(ConstantReport {
        name: format!("C[nu={nu},chi={},alpha={alpha},m={m}]", params.chi),
        value,
        attained_delta: None,
        case_label: label,
    })
}

/// Variant of the smoothing-time bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularityVariant {
    /// Classical bound with prefactor `1/(128 pi)`.
    Leray,
    /// Improved prefactor `0.000464504284`.
    Improved,
}

/// Improved prefactor of the `nu^{-5} ||z0||^4` smoothing-time bound.
pub const REGULARITY_COEFF_IMPROVED: f64 = 0.000464504284;

/// Classical prefactor `1/(128 pi)`. The associated literature also
/// carries the tighter printed decimal 0.000791572 for the same constant;
/// both are recorded in reports.
pub fn regularity_coeff_leray() -> f64 {
    1.0 / (128.0 * std::f64::consts::PI)
}

/// Upper bound on the time after which weak solutions are smooth (and
/// derivative norms eventually monotone): `coeff * nu^{-5} ||z0||^4`.
pub fn regularity_time_bound(nu: f64, z0_norm: f64, variant: RegularityVariant) -> f64 {
    let coeff = match variant {
        RegularityVariant::Leray => regularity_coeff_leray(),
        RegularityVariant::Improved => REGULARITY_COEFF_IMPROVED,
    };
    coeff * nu.powi(-5) * z0_norm.powi(4)
}

/// Which norm track a predicted exponent refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NormField {
    Z,
    U,
    W,
    ErrorZ,
    ErrorW,
    Pressure,
}

/// Predicted decay exponent of `t` for `||D^m field||_{L^p}`.
///
/// Base L2 exponents: `alpha + m/2` for the full state, an extra `1/2`
/// for the micro-rotation block, an extra `beta` for the error fields and
/// `2 alpha + m/2 + 3/4` for the pressure; general `p` adds
/// `3(p-2)/(4p)`, which is `3/4` at `p = infinity`.
pub fn predicted_exponent(ap: &AlphaParams, m: usize, field: NormField, p: f64) -> Result<f64> {
    if p < 2.0 {
        return Err(Error::invalid("predicted exponents cover p in [2, infinity]"));
    }
    let alpha = ap.alpha;
    let mh = m as f64 / 2.0;
    let base = match field {
        NormField::Z | NormField::U => alpha + mh,
        NormField::W => alpha + mh + 0.5,
        NormField::ErrorZ => alpha + beta_of_alpha(alpha)? + mh,
        NormField::ErrorW => alpha + beta_of_alpha(alpha)? + mh + 0.5,
        NormField::Pressure => {
            if p != 2.0 {
                return Err(Error::invalid("pressure prediction is stated for p = 2"));
            }
            2.0 * alpha + mh + 0.75
        }
    };
    let shift = if p.is_infinite() { 0.75 } else { 3.0 * (p - 2.0) / (4.0 * p) };
    Ok(base + shift)
}

/// Predicted exponent of the fractional-order norm of the full state:
/// `alpha + s/2`.
pub fn predicted_hs_exponent(alpha: f64, s: f64) -> f64 {
    alpha + s / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::grid_search_k;
    use approx::assert_relative_eq;

    #[test]
    fn k_anchors() {
        assert_eq!(k_value(0.0, 0).unwrap(), 1.0);
        assert_relative_eq!(k_value(0.0, 1).unwrap(), 0.5f64.sqrt(), epsilon = 1e-12);
        for m in 1..=6usize {
            let fact: f64 = (1..=m).map(|j| j as f64).product();
            let expect = (fact / 2f64.powi(m as i32)).sqrt();
            assert_relative_eq!(k_value(0.0, m).unwrap(), expect, max_relative = 1e-10);
        }
        // degenerate m = 0 case returns the limit value with no minimizer
        let r = k_alpha_m(0.7, 0).unwrap();
        assert_eq!(r.value, 1.0);
        assert!(r.attained_delta.is_none());
    }

    #[test]
    fn golden_section_matches_grid_search() {
        for &(alpha, m) in &[(0.75, 2usize), (0.3, 1), (1.1, 4), (0.5, 6)] {
            let a = k_value(alpha, m).unwrap();
            let b = grid_search_k(alpha, m);
            assert_relative_eq!(a, b, max_relative = 1e-6);
        }
    }

    #[test]
    fn interior_minimum_satisfies_stationarity() {
        for &(alpha, m) in &[(0.4, 1usize), (0.75, 3), (1.2, 5)] {
            let r = k_alpha_m(alpha, m).unwrap();
            let d = r.attained_delta.unwrap();
            let s: f64 = (0..=m).map(|j| d / (alpha + j as f64 / 2.0 + d)).sum();
            assert_relative_eq!(s, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn k_is_monotone_in_alpha_and_in_m_from_one() {
        let alphas = [0.0, 0.2, 0.5, 0.75, 1.0, 1.25];
        for m in 0..=6usize {
            let mut prev = 0.0;
            for &a in &alphas {
                let v = k_value(a, m).unwrap();
                assert!(v >= prev - 1e-12, "K not monotone in alpha at ({a},{m})");
                prev = v;
            }
        }
        // in m the added factor is (alpha + (m+1)/2 + delta), which is at
        // least 1 only from m = 1 on; the step m = 0 -> 1 can decrease
        // (e.g. alpha = 0: 1 -> sqrt(1/2)).
        assert!(k_value(0.0, 1).unwrap() < k_value(0.0, 0).unwrap());
        for &a in &alphas {
            let mut prev = 0.0;
            for m in 1..=8usize {
                let v = k_value(a, m).unwrap();
                assert!(v >= prev - 1e-12, "K not monotone in m at ({a},{m})");
                prev = v;
            }
        }
    }

    #[test]
    fn k_tilde_composes_k_values() {
        // m = 0 term by hand
        let a = 0.0;
        let expect = k_value(a, 0).unwrap().powf(0.25)
            * k_value(a, 1).unwrap().powf(0.75)
            * k_value(a, 1).unwrap().powf(0.25)
            * k_value(a, 2).unwrap().powf(0.75);
        assert_relative_eq!(k_tilde(a, 0).unwrap(), expect, max_relative = 1e-12);
        // independent re-summation at (0.5, 1)
        let a = 0.5;
        let m = 1;
        let mut total = 0.0;
        for l in 0..=m {
            total += grid_search_k(a, l).powf(0.25)
                * grid_search_k(a, l + 1).powf(0.75)
                * grid_search_k(a, m - l + 1).powf(0.25)
                * grid_search_k(a, m - l + 2).powf(0.75);
        }
        assert_relative_eq!(k_tilde(a, m).unwrap(), total, max_relative = 1e-6);
        assert!(k_tilde(1.2, 4).unwrap() > 0.0);
    }

    #[test]
    fn beta_branch_values() {
        assert_eq!(beta_of_alpha(0.0).unwrap(), 0.25);
        assert_eq!(beta_of_alpha(0.75).unwrap(), 0.25);
        assert_relative_eq!(beta_of_alpha(1.1).unwrap(), 0.15, epsilon = 1e-14);
        // the definition jumps at 1/2: left limit 3/4, right value 1/4
        assert_relative_eq!(beta_of_alpha(0.4999999).unwrap(), 0.7499999, epsilon = 1e-9);
        assert_eq!(beta_of_alpha(0.5).unwrap(), 0.25);
        assert!(beta_of_alpha(1.25).is_err());
        assert!(beta_of_alpha(-0.1).is_err());
    }

    #[test]
    fn error_constant_branches() {
        let params = SystemParams::default();
        // branch 1 with lambda0 = 0 vanishes
        let ap = AlphaParams { alpha: 0.3, lambda0: Some(0.0), z0_norm: None };
        assert_eq!(error_constant(&params, &ap, 1, 1.0).unwrap().value, 0.0);
        // branch 3 with lambda0 = 0, z0 = 1 keeps only the data term
        let ap = AlphaParams { alpha: 1.1, lambda0: Some(0.0), z0_norm: Some(1.0) };
        let m = 2;
        let beta = beta_of_alpha(1.1).unwrap();
        let expect = 1.0f64.powf(-(m as f64 / 2.0 + 1.25))
            * 2f64.powf(1.1 + beta + m as f64 / 2.0);
        assert_relative_eq!(error_constant(&params, &ap, m, 1.0).unwrap().value, expect);
        // branch 2 response to lambda0 -> 2 lambda0 is exactly affine:
        // C(2L) - 2 C(L) = 2 A L^2 where A is the quadratic coefficient
        let mk = |l: f64| AlphaParams { alpha: 0.75, lambda0: Some(l), z0_norm: Some(2.0) };
        let c1 = error_constant(&params, &mk(1.0), 1, 1.0).unwrap().value;
        let c2 = error_constant(&params, &mk(2.0), 1, 1.0).unwrap().value;
        let quad = k_tilde(0.75, 1).unwrap() * 1.0f64.powf(-(0.5 + 1.25));
        assert_relative_eq!(c2 - 2.0 * c1, 2.0 * quad, max_relative = 1e-10);
        // missing inputs are errors
        let ap = AlphaParams { alpha: 0.75, lambda0: Some(1.0), z0_norm: None };
        assert!(error_constant(&params, &ap, 0, 1.0).is_err());
        let ap = AlphaParams { alpha: 0.75, lambda0: None, z0_norm: Some(1.0) };
        assert!(error_constant(&params, &ap, 0, 1.0).is_err());
    }

    #[test]
    fn regularity_bound_anchors() {
        let improved = regularity_time_bound(1.0, 1.0, RegularityVariant::Improved);
        assert_eq!(improved, 0.000464504284);
        let leray = regularity_time_bound(1.0, 1.0, RegularityVariant::Leray);
        assert_relative_eq!(leray, 0.0024868, epsilon = 1e-7);
        assert!(improved < leray);
        assert_relative_eq!(
            regularity_time_bound(2.0, 1.0, RegularityVariant::Improved),
            0.000464504284 / 32.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn predicted_exponent_table() {
        let ap = AlphaParams::new(0.75);
        assert_eq!(predicted_exponent(&ap, 0, NormField::Z, 2.0).unwrap(), 0.75);
        assert_eq!(predicted_exponent(&ap, 0, NormField::W, 2.0).unwrap(), 1.25);
        assert_eq!(
            predicted_exponent(&ap, 1, NormField::Z, f64::INFINITY).unwrap(),
            2.0
        );
        assert_eq!(predicted_exponent(&ap, 0, NormField::Pressure, 2.0).unwrap(), 2.25);
        assert!(predicted_exponent(&ap, 0, NormField::Pressure, 4.0).is_err());
        // error fields add beta
        assert_eq!(predicted_exponent(&ap, 0, NormField::ErrorZ, 2.0).unwrap(), 1.0);
        assert_eq!(predicted_exponent(&ap, 0, NormField::ErrorW, 2.0).unwrap(), 1.5);
        assert_eq!(predicted_hs_exponent(0.75, 1.0), 1.25);
    }
}
