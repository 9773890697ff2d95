//! Experiment configuration: a sectioned key = value file (TOML grammar)
//! parsed strictly — unknown keys are hard errors — validated, and
//! resolved against the documented defaults. The resolved spec is echoed
//! into every output file.

use crate::error::{Error, Result};
use crate::stepper::{initial_data::InitialDataSpec, SimConfig};
use crate::systems::{
    GenericLinearCoeffs, ParabolicCoeffs, RotationSpec, SystemId, SystemParams, TropicalCoeffs,
};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Checks the verify command can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckId {
    Energy,
    StepMonotonicity,
    DerivativeMonotonicity,
    DerivativeDecay,
    ErrorDecay,
    AnchorIndependence,
    SobolevProduct,
    InterpolatedDecay,
    PressureDecay,
    EigenBound,
    SemigroupComparison,
}

impl CheckId {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "energy" => CheckId::Energy,
            "step_monotonicity" => CheckId::StepMonotonicity,
            "derivative_monotonicity" => CheckId::DerivativeMonotonicity,
            "derivative_decay" => CheckId::DerivativeDecay,
            "error_decay" => CheckId::ErrorDecay,
            "anchor_independence" => CheckId::AnchorIndependence,
            "sobolev_product" => CheckId::SobolevProduct,
            "interpolated_decay" => CheckId::InterpolatedDecay,
            "pressure_decay" => CheckId::PressureDecay,
            "eigen_bound" => CheckId::EigenBound,
            "semigroup_comparison" => CheckId::SemigroupComparison,
            other => return Err(Error::config(format!("unknown check id '{other}'"))),
        })
    }

    pub fn needs_trajectory(&self) -> bool {
        !matches!(
            self,
            CheckId::SobolevProduct | CheckId::EigenBound | CheckId::SemigroupComparison
        )
    }
}

/// Verification requests attached to an experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyRequest {
    pub alpha: f64,
    pub checks: Vec<CheckId>,
    pub m_list: Vec<usize>,
    /// Band-limited sample count for the product-inequality suite.
    pub sobolev_samples: usize,
}

/// Grids for the constants table command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantsRequest {
    pub alphas: Vec<f64>,
    pub m_max: usize,
    pub lambda0: Option<f64>,
    pub z0_norm: Option<f64>,
    pub c: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Fully resolved experiment.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub sim: SimConfig,
    pub verify: VerifyRequest,
    pub constants: ConstantsRequest,
    pub formats: Vec<OutputFormat>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Dotted parameter path, e.g. "system.chi".
    pub key: String,
    pub values: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Raw file schema (strict)
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Option<RawExperiment>,
    lattice: Option<RawLattice>,
    system: RawSystem,
    initial_data: Option<RawInitialData>,
    time: Option<RawTime>,
    tracks: Option<RawTracks>,
    verify: Option<RawVerify>,
    constants: Option<RawConstants>,
    output: Option<RawOutput>,
    sweep: Option<SweepSpec>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    name: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLattice {
    n: Option<usize>,
    box_length: Option<f64>,
    dim: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    id: String,
    mu: Option<f64>,
    chi: Option<f64>,
    gamma: Option<f64>,
    kappa: Option<f64>,
    magnetic_nu: Option<f64>,
    omega: Option<f64>,
    tropical_mu: Option<f64>,
    tropical_nu: Option<f64>,
    tropical_eta: Option<f64>,
    generic_gamma_exponent: Option<f64>,
    generic_c: Option<Vec<f64>>,
    generic_rotation_axis: Option<[f64; 3]>,
    generic_rotation_angle: Option<f64>,
    parabolic_c: Option<f64>,
    parabolic_flux: Option<String>,
}

impl Default for RawSystem {
    fn default() -> Self {
        RawSystem {
            id: "micropolar".into(),
            mu: None,
            chi: None,
            gamma: None,
            kappa: None,
            magnetic_nu: None,
            omega: None,
            tropical_mu: None,
            tropical_nu: None,
            tropical_eta: None,
            generic_gamma_exponent: None,
            generic_c: None,
            generic_rotation_axis: None,
            generic_rotation_angle: None,
            parabolic_c: None,
            parabolic_flux: None,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitialData {
    seed: Option<u64>,
    spectrum_sigma: Option<f64>,
    block_norms: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    dt: Option<f64>,
    t_end: Option<f64>,
    sample_interval: Option<f64>,
    anchors: Option<Vec<f64>>,
    snapshot_times: Option<Vec<f64>>,
    t_max: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTracks {
    m_max: Option<usize>,
    hs: Option<Vec<f64>>,
    lp: Option<Vec<f64>>,
    pressure: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVerify {
    alpha: Option<f64>,
    checks: Option<Vec<String>>,
    m_list: Option<Vec<usize>>,
    sobolev_samples: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstants {
    alphas: Option<Vec<f64>>,
    m_max: Option<usize>,
    lambda0: Option<f64>,
    z0_norm: Option<f64>,
    c: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    formats: Option<Vec<String>>,
}

// ---------------------------------------------------------------------------
// Resolution
// ---------------------------------------------------------------------------

fn build_params(raw: &RawSystem, system: SystemId) -> Result<SystemParams> {
    let mut p = SystemParams {
        mu: raw.mu.unwrap_or(1.0),
        chi: raw.chi.unwrap_or(if system == SystemId::NavierStokes || system == SystemId::RotatingNs { 0.0 } else { 1.0 }),
        gamma: raw.gamma.unwrap_or(1.0),
        kappa: raw.kappa.unwrap_or(1.0),
        magnetic_nu: raw.magnetic_nu,
        omega: raw.omega,
        tropical: None,
        generic_linear: None,
        parabolic: None,
    };
    match system {
        SystemId::MagnetoMicropolar => {
            p.magnetic_nu = Some(raw.magnetic_nu.unwrap_or(1.0));
        }
        SystemId::RotatingNs => {
            p.omega = Some(raw.omega.unwrap_or(1.0));
        }
        SystemId::Tropical => {
            p.tropical = Some(TropicalCoeffs {
                mu: raw.tropical_mu.unwrap_or(1.0),
                nu: raw.tropical_nu.unwrap_or(1.0),
                eta: raw.tropical_eta.unwrap_or(1.0),
            });
        }
        SystemId::GenericLinear => {
            let rotation = match (raw.generic_rotation_axis, raw.generic_rotation_angle) {
                (Some(axis), angle) => Some(RotationSpec { axis, angle: angle.unwrap_or(0.0) }),
                (None, Some(angle)) => Some(RotationSpec { axis: [0.0, 0.0, 1.0], angle }),
                (None, None) => None,
            };
            let c = raw.generic_c.clone().unwrap_or_else(|| vec![1.0, 1.0, 1.0]);
            if c.len() != 3 {
                return Err(Error::config("generic_c needs exactly three rates"));
            }
            p.generic_linear = Some(GenericLinearCoeffs {
                gamma_exponent: raw.generic_gamma_exponent.unwrap_or(1.0),
                c: [c[0], c[1], c[2]],
                rotation,
            });
        }
        SystemId::GenericParabolic => {
            p.parabolic = Some(ParabolicCoeffs {
                c: raw.parabolic_c.unwrap_or(1.0),
                flux: raw.parabolic_flux.clone().unwrap_or_else(|| "quadratic".into()),
            });
        }
        _ => {}
    }
    Ok(p)
}

/// Parse and fully resolve a configuration file.
pub fn parse_config(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    parse_config_str(&text, &path.display().to_string())
}

/// Parse configuration text; `origin` names the source in diagnostics.
pub fn parse_config_str(text: &str, origin: &str) -> Result<ExperimentSpec> {
    let raw: RawConfig = toml::from_str(text)
        .map_err(|e| Error::config(format!("{origin}: {e}")))?;
    resolve(raw, origin)
}

fn resolve(raw: RawConfig, origin: &str) -> Result<ExperimentSpec> {
    let system = SystemId::parse(&raw.system.id)?;
    let params = build_params(&raw.system, system)?;
    let lat = raw.lattice.unwrap_or_default();
    let n = lat.n.unwrap_or(64);
    let box_length = lat.box_length.unwrap_or(100.0);
    let dim = lat.dim.unwrap_or(3);

    let time = raw.time.unwrap_or_default();
    let dt = time.dt.unwrap_or(0.25);
    let t_max_default = {
        let l8 = box_length / 8.0;
        l8 * l8 / params.nu()
    };
    let t_max = time.t_max.unwrap_or(t_max_default);
    let t_end = time.t_end.unwrap_or_else(|| (150.0f64).min(t_max));
    let initial = raw.initial_data.unwrap_or_default();
    let tracks = raw.tracks.unwrap_or_default();

    let sim = SimConfig {
        system,
        params,
        n,
        box_length,
        dim,
        initial: InitialDataSpec {
            seed: initial.seed.unwrap_or(7),
            spectrum_sigma: initial.spectrum_sigma.unwrap_or(0.25),
            block_norms: initial.block_norms.unwrap_or_default(),
        },
        dt,
        t_end,
        sample_interval: time.sample_interval.unwrap_or(0.5),
        snapshot_times: time.snapshot_times.unwrap_or_default(),
        anchors: time.anchors.unwrap_or_default(),
        t_max,
        m_max: tracks.m_max.unwrap_or(2),
        hs_orders: tracks.hs.unwrap_or_default(),
        lp_orders: tracks.lp.unwrap_or_default(),
        track_pressure: tracks.pressure.unwrap_or(system != SystemId::GenericParabolic),
    };
    sim.validate().map_err(|e| Error::config(format!("{origin}: {e}")))?;

    let rv = raw.verify.unwrap_or_default();
    let alpha = rv.alpha.unwrap_or(0.75);
    let checks = match rv.checks {
        Some(list) => list.iter().map(|s| CheckId::parse(s)).collect::<Result<Vec<_>>>()?,
        None => vec![
            CheckId::Energy,
            CheckId::StepMonotonicity,
            CheckId::DerivativeMonotonicity,
            CheckId::DerivativeDecay,
            CheckId::SobolevProduct,
        ],
    };
    if checks.contains(&CheckId::ErrorDecay) && !(0.0..1.25).contains(&alpha) {
        return Err(Error::config(format!(
            "{origin}: alpha = {alpha} outside the admissible range [0, 1.25) for error_decay"
        )));
    }
    if alpha < 0.0 {
        return Err(Error::config(format!("{origin}: alpha must be nonnegative")));
    }
    if checks.contains(&CheckId::ErrorDecay) && sim.anchors.is_empty() {
        return Err(Error::config(format!(
            "{origin}: error_decay requires at least one anchor time"
        )));
    }
    if checks.contains(&CheckId::AnchorIndependence) && sim.anchors.len() < 2 {
        return Err(Error::config(format!(
            "{origin}: anchor_independence requires two anchor times"
        )));
    }
    let verify = VerifyRequest {
        alpha,
        checks,
        m_list: rv.m_list.unwrap_or_else(|| vec![0, 1]),
        sobolev_samples: rv.sobolev_samples.unwrap_or(100),
    };
    for &m in &verify.m_list {
        if m > sim.m_max {
            return Err(Error::config(format!(
                "{origin}: m = {m} requested but only orders up to {} are tracked",
                sim.m_max
            )));
        }
    }

    let rc = raw.constants.unwrap_or_default();
    let constants = ConstantsRequest {
        alphas: rc.alphas.unwrap_or_else(|| vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.25]),
        m_max: rc.m_max.unwrap_or(3),
        lambda0: rc.lambda0,
        z0_norm: rc.z0_norm,
        c: rc.c.unwrap_or(1.0),
        nu: sim.params.nu(),
    };

    let formats = match raw.output.and_then(|o| o.formats) {
        Some(list) => list
            .iter()
            .map(|s| match s.as_str() {
                "csv" => Ok(OutputFormat::Csv),
                "json" => Ok(OutputFormat::Json),
                other => Err(Error::config(format!("unknown output format '{other}'"))),
            })
            .collect::<Result<Vec<_>>>()?,
        None => vec![OutputFormat::Csv, OutputFormat::Json],
    };

    if let Some(sweep) = &raw.sweep {
        if sweep.values.is_empty() {
            return Err(Error::config("sweep needs at least one value"));
        }
    }

    let name = raw
        .experiment
        .and_then(|e| e.name)
        .unwrap_or_else(|| system.name().to_string());
    Ok(ExperimentSpec { name, sim, verify, constants, formats, sweep: raw.sweep })
}

impl ExperimentSpec {
    /// Apply one sweep value to the dotted parameter path.
    fn with_sweep_value(&self, key: &str, value: f64) -> Result<ExperimentSpec> {
        let mut child = self.clone();
        child.sweep = None;
        child.name = format!("{}_{}={}", self.name, key.replace('.', "_"), value);
        match key {
            "system.mu" => child.sim.params.mu = value,
            "system.chi" => child.sim.params.chi = value,
            "system.gamma" => child.sim.params.gamma = value,
            "system.kappa" => child.sim.params.kappa = value,
            "system.omega" => child.sim.params.omega = Some(value),
            "system.magnetic_nu" => child.sim.params.magnetic_nu = Some(value),
            "time.dt" => child.sim.dt = value,
            "time.t_end" => child.sim.t_end = value,
            "initial_data.spectrum_sigma" => child.sim.initial.spectrum_sigma = value,
            "initial_data.seed" => child.sim.initial.seed = value as u64,
            other => {
                return Err(Error::config(format!("sweep key '{other}' is not sweepable")))
            }
        }
        child.sim.validate()?;
        Ok(child)
    }

    /// Expand the sweep into child specs (or yield self when absent).
    pub fn expand_sweep(&self) -> Result<Vec<ExperimentSpec>> {
        match &self.sweep {
            None => Ok(vec![self.clone()]),
            Some(s) => s.values.iter().map(|&v| self.with_sweep_value(&s.key, v)).collect(),
        }
    }
}
