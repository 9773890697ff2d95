//! Time integration with an integrating-factor Heun scheme, trajectory
//! production, and seeded initial data.
//!
//! The stiff symbol is applied through its exact per-mode exponential, so
//! a run with zero explicit part reproduces the linear semigroup to
//! rounding. Linear companion trajectories anchored at configured times
//! advance through the same cached exponential, which makes the
//! nonlinear-minus-linear error fields free of any additional scheme
//! error in their linear part.

use crate::error::{Error, Result};
use crate::field::{Block, SpectralField, State};
use crate::lattice::Lattice;
use crate::semigroup::{ModePropagator, PropagatorStats};
use crate::systems::{pressure_recover, RhsEvaluator, SystemId, SystemParams};
use serde::{Deserialize, Serialize};

pub mod initial_data {
    //! Seeded band-limited random fields and profile-built states.

    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    /// Divergence-free-able random field: grid white noise shaped by a
    /// Gaussian envelope `exp(-|xi|^2 / (2 sigma^2))`, dealiased, mean
    /// pinned to zero, normalized to unit L2 norm.
    pub fn random_band_limited(
        lattice: Lattice,
        components: usize,
        seed: u64,
        sigma: f64,
    ) -> SpectralField {
        let tr = crate::fft::Transform::new(lattice);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = lattice.num_modes();
        let mut coeffs = Vec::with_capacity(components * m);
        for _ in 0..components {
            let grid: Vec<f64> =
                (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
            coeffs.extend(tr.from_grid(&grid));
        }
        let mut f = SpectralField::from_coeffs(lattice, components, coeffs);
        f.apply_mode_factor(|flat| {
            num_complex::Complex64::new(
                (-lattice.xi_sq(flat) / (2.0 * sigma * sigma)).exp(),
                0.0,
            )
        });
        let mut f = f.dealias();
        f.pin_zero_mode();
        let norm = f.l2_norm();
        if norm > 0.0 {
            f.scale(1.0 / norm);
        }
        f
    }

    /// Random state for a system: each block from an independent seed,
    /// solenoidal blocks projected, every block normalized to `norm`.
    pub fn random_state(system: SystemId, lattice: Lattice, seed: u64, norm: f64) -> State {
        let sigma = 0.5 * lattice.dk() * lattice.n() as f64 / 3.0;
        let mut blocks = Vec::new();
        for (i, (b, comps)) in system.block_layout().iter().enumerate() {
            let nc = if *comps == 0 { lattice.dim() } else { *comps };
            let mut f = random_band_limited(lattice, nc, seed.wrapping_add(i as u64 * 7919), sigma);
            if system.solenoidal_blocks().contains(b) {
                f = f.leray_project();
            }
            let n = f.l2_norm();
            if n > 0.0 {
                f.scale(norm / n);
            }
            blocks.push((*b, f));
        }
        State::new(system, 0.0, blocks).expect("layout is consistent by construction")
    }

    /// Shaped initial data for simulation runs.
    #[derive(Debug, Clone, Serialize, Deserialize)]
    pub struct InitialDataSpec {
        pub seed: u64,
        /// Envelope width in wavenumber units.
        pub spectrum_sigma: f64,
        /// Target L2 norm per block, in block order; missing entries
        /// default to 1.
        pub block_norms: Vec<f64>,
    }

    impl Default for InitialDataSpec {
        fn default() -> Self {
            InitialDataSpec { seed: 7, spectrum_sigma: 0.25, block_norms: vec![] }
        }
    }

    impl InitialDataSpec {
        pub fn build(&self, system: SystemId, lattice: Lattice) -> State {
            let mut blocks = Vec::new();
            for (i, (b, comps)) in system.block_layout().iter().enumerate() {
                let nc = if *comps == 0 { lattice.dim() } else { *comps };
                let mut f = random_band_limited(
                    lattice,
                    nc,
                    self.seed.wrapping_add(i as u64 * 7919),
                    self.spectrum_sigma,
                );
                if system.solenoidal_blocks().contains(b) {
                    f = f.leray_project();
                }
                let target = self.block_norms.get(i).copied().unwrap_or(1.0);
                let n = f.l2_norm();
                if n > 0.0 {
                    f.scale(target / n);
                }
                blocks.push((*b, f));
            }
            State::new(system, 0.0, blocks).expect("layout consistent")
        }
    }
}

/// Full description of one simulation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub system: SystemId,
    pub params: SystemParams,
    pub n: usize,
    pub box_length: f64,
    pub dim: usize,
    pub initial: initial_data::InitialDataSpec,
    pub dt: f64,
    pub t_end: f64,
    /// Cadence of norm sampling (and of the trapezoid energy budget).
    pub sample_interval: f64,
    /// Times at which full states are kept for checkpoint files.
    pub snapshot_times: Vec<f64>,
    /// Anchor times of the linear companion trajectories.
    pub anchors: Vec<f64>,
    /// Trusted horizon; runs beyond it are rejected at validation.
    pub t_max: f64,
    /// Track integer derivative norms up to this order.
    pub m_max: usize,
    /// Additional fractional-order norms of the full state.
    pub hs_orders: Vec<f64>,
    /// Additional grid L^p norms of the full state (small lattices only).
    pub lp_orders: Vec<f64>,
    pub track_pressure: bool,
}

impl SimConfig {
    pub fn lattice(&self) -> Result<Lattice> {
        Lattice::with_dim(self.n, self.box_length, self.dim)
    }

    fn is_multiple(value: f64, dt: f64) -> bool {
        let k = (value / dt).round();
        (value - k * dt).abs() <= 1e-9 * dt.max(value.abs())
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate(self.system)?;
        let lattice = self.lattice()?;
        if !(self.dt > 0.0) {
            return Err(Error::config("dt must be positive"));
        }
        if self.t_end < 0.0 {
            return Err(Error::config("t_end must be nonnegative"));
        }
        if self.t_end > self.t_max * (1.0 + 1e-12) {
            return Err(Error::config(format!(
                "t_end = {} exceeds the trusted horizon t_max = {:.6} for this lattice; \
                 raise t_max explicitly to run further",
                self.t_end, self.t_max
            )));
        }
        for &t in self.snapshot_times.iter().chain(self.anchors.iter()) {
            if t < 0.0 || t > self.t_end + 1e-9 {
                return Err(Error::config(format!("time {t} outside [0, t_end]")));
            }
            if !Self::is_multiple(t, self.dt) {
                return Err(Error::config(format!("time {t} is not a multiple of dt = {}", self.dt)));
            }
        }
        if !Self::is_multiple(self.sample_interval, self.dt) || self.sample_interval <= 0.0 {
            return Err(Error::config("sample_interval must be a positive multiple of dt"));
        }
        if self.anchors.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("anchor times must be strictly increasing"));
        }
        if self.m_max < 1 || self.m_max > 3 {
            return Err(Error::config("m_max must lie in [1, 3]"));
        }
        for &s in &self.hs_orders {
            if !(0.0..=6.0).contains(&s) {
                return Err(Error::config("fractional norm orders must lie in [0, 6]"));
            }
        }
        for &p in &self.lp_orders {
            if p < 2.0 {
                return Err(Error::config("grid norms cover p >= 2"));
            }
        }
        let _ = lattice;
        Ok(())
    }
}

/// Identifier of one recorded norm series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackKey {
    /// Field label: a block name, "z", "zeta", "pressure", or the error
    /// labels "e_z@t0"/"e_w@t0"/"bar_diff@t0,t1".
    pub field: String,
    /// Derivative order (fractional orders allowed).
    pub m: f64,
    /// Norm label: "2", "inf", or a finite p.
    pub p: String,
}

impl TrackKey {
    pub fn l2(field: impl Into<String>, m: f64) -> Self {
        TrackKey { field: field.into(), m, p: "2".into() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormTrack {
    pub key: TrackKey,
    pub samples: Vec<(f64, f64)>,
}

/// Everything a run produces besides side-effect files.
#[derive(Debug)]
pub struct Trajectory {
    pub config: SimConfig,
    pub tracks: Vec<NormTrack>,
    /// Per-step full-state norm, for strict monotonicity checks.
    pub step_norms: Vec<(f64, f64)>,
    pub snapshots: Vec<State>,
    pub events: Vec<String>,
    pub propagator_stats: PropagatorStats,
    pub final_state: State,
}

impl Trajectory {
    pub fn track(&self, field: &str, m: f64) -> Option<&NormTrack> {
        self.tracks
            .iter()
            .find(|t| t.key.field == field && (t.key.m - m).abs() < 1e-12 && t.key.p == "2")
    }
}

/// One integrating-factor Heun step bundle: the evaluator plus the cached
/// per-mode exponential of the stiff symbol at the current dt.
pub struct Stepper {
    ev: RhsEvaluator,
    prop: ModePropagator,
    dt: f64,
}

impl Stepper {
    pub fn new(system: SystemId, params: SystemParams, lattice: Lattice, dt: f64) -> Result<Self> {
        let ev = RhsEvaluator::new(system, params.clone(), lattice)?;
        let prop = ModePropagator::new(system, &params, lattice, dt);
        Ok(Stepper { ev, prop, dt })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn evaluator(&self) -> &RhsEvaluator {
        &self.ev
    }

    pub fn propagator_stats(&self) -> PropagatorStats {
        self.prop.stats
    }

    /// Advance the exact linear flow by dt (companion trajectories).
    pub fn advance_linear(&self, s: &mut State) {
        self.prop.apply_in_place(s);
        s.time += self.dt;
    }

    /// One step of the integrating-factor Heun scheme:
    /// `z* = E (z + dt N(z))`, `z' = E (z + dt/2 N(z)) + dt/2 N(z*)`,
    /// with `E = exp(symbol dt)` applied exactly per mode.
    pub fn step(&self, s: &State) -> Result<State> {
        let dt = self.dt;
        let k1 = self.ev.explicit(s)?.explicit;
        let mut pred = s.clone();
        pred.axpy(dt, &k1);
        self.prop.apply_in_place(&mut pred);
        pred.time = s.time + dt;
        let k2 = self.ev.explicit(&pred)?.explicit;
        let mut out = s.clone();
        out.axpy(0.5 * dt, &k1);
        self.prop.apply_in_place(&mut out);
        out.axpy(0.5 * dt, &k2);
        out.time = s.time + dt;
        if !out.is_finite() {
            return Err(Error::Instability(format!(
                "non-finite state after step to t = {}",
                out.time
            )));
        }
        Ok(out)
    }
}

fn record_state_tracks(
    tracks: &mut Vec<NormTrack>,
    config: &SimConfig,
    ev: &RhsEvaluator,
    z: &State,
    anchors: &[(f64, State)],
) -> Result<()> {
    let t = z.time;
    let mut push = |key: TrackKey, value: f64| {
        if let Some(tr) = tracks.iter_mut().find(|tr| tr.key == key) {
            tr.samples.push((t, value));
        } else {
            tracks.push(NormTrack { key, samples: vec![(t, value)] });
        }
    };
    for m in 0..=config.m_max {
        let mf = m as f64;
        push(TrackKey::l2("z", mf), z.hs_norm(mf));
        for (b, f) in z.blocks() {
            push(TrackKey::l2(b.name(), mf), f.hs_norm(mf));
        }
    }
    if let Some(w) = z.block(Block::W) {
        let zeta = w.divergence();
        for m in 0..=1usize {
            push(TrackKey::l2("zeta", m as f64), zeta.hs_norm(m as f64));
        }
    }
    for &s in &config.hs_orders {
        push(TrackKey::l2("z", s), z.hs_norm(s));
    }
    for &p in &config.lp_orders {
        let label = if p.is_infinite() { "inf".to_string() } else { format!("{p}") };
        let mut val_sq = 0.0;
        for (_, f) in z.blocks() {
            let v = if p.is_infinite() {
                f.linf_norm_padded(ev.transform())
            } else {
                f.lp_norm(p, ev.transform())
            };
            val_sq += v * v;
        }
        push(TrackKey { field: "z".into(), m: 0.0, p: label }, val_sq.sqrt());
    }
    if config.track_pressure {
        let p = pressure_recover(z, ev.transform())?;
        push(TrackKey::l2("pressure", 0.0), p.l2_norm());
    }
    for (t0, bar) in anchors {
        let err = z.sub(bar);
        for m in 0..=config.m_max.min(2) {
            let mf = m as f64;
            push(TrackKey::l2(format!("e_z@{t0}"), mf), err.hs_norm(mf));
            if let Some(ew) = err.block(Block::W) {
                push(TrackKey::l2(format!("e_w@{t0}"), mf), ew.hs_norm(mf));
            }
        }
    }
    for pair in anchors.windows(2) {
        let (t0, a) = &pair[0];
        let (t1, b) = &pair[1];
        let diff = a.sub(b);
        for m in 0..=1usize {
            push(TrackKey::l2(format!("bar_diff@{t0},{t1}"), m as f64), diff.hs_norm(m as f64));
        }
    }
    Ok(())
}

/// Run a full simulation: nonlinear trajectory, linear companions from
/// each anchor, norm tracks at the sampling cadence, events, snapshots.
pub fn run(config: &SimConfig) -> Result<Trajectory> {
    config.validate()?;
    let lattice = config.lattice()?;
    let mut stepper =
        Stepper::new(config.system, config.params.clone(), lattice, config.dt)?;
    let mut z = config.initial.build(config.system, lattice);
    let mut events = Vec::new();
    let mut tracks = Vec::new();
    let mut step_norms = vec![(0.0, z.l2_norm())];
    let mut snapshots = Vec::new();
    let mut anchors: Vec<(f64, State)> = Vec::new();
    let mut anchor_queue = config.anchors.clone();
    let stats = stepper.propagator_stats();

    let eps = 1e-9 * config.dt;
    let mut next_sample = 0.0f64;
    let mut snapshot_queue = config.snapshot_times.clone();
    let umax_grid = |state: &State, ev: &RhsEvaluator| -> f64 {
        let u = match state.block(Block::U) {
            Some(u) => u,
            None => state.blocks().first().map(|(_, f)| f).unwrap(),
        };
        let mut worst = 0.0f64;
        for c in 0..u.components() {
            let g = ev.transform().to_grid(u.component(c));
            worst = worst.max(g.iter().fold(0.0f64, |a, &v| a.max(v.abs())));
        }
        worst
    };

    let mut steps_since_check = 0usize;
    loop {
        let t = z.time;
        // activate anchors scheduled at this time
        while let Some(&t0) = anchor_queue.first() {
            if t0 <= t + eps {
                anchors.push((t0, z.clone()));
                anchor_queue.remove(0);
            } else {
                break;
            }
        }
        if t + eps >= next_sample {
            record_state_tracks(&mut tracks, config, stepper.evaluator(), &z, &anchors)?;
            next_sample += config.sample_interval;
        }
        while let Some(&ts) = snapshot_queue.first() {
            if ts <= t + eps {
                snapshots.push(z.clone());
                snapshot_queue.remove(0);
            } else {
                break;
            }
        }
        if t + eps >= config.t_end {
            break;
        }

        // advective stability check every 10 steps, with dt halving
        if steps_since_check >= 10 {
            steps_since_check = 0;
            let umax = umax_grid(&z, stepper.evaluator());
            let bound = 0.5 * lattice.dx() / umax.max(1e-300);
            if stepper.dt() > bound {
                let new_dt = stepper.dt() / 2.0;
                events.push(format!(
                    "dt halved to {new_dt} at t = {t} (advective bound {bound:.3e})"
                ));
                stepper = Stepper::new(config.system, config.params.clone(), lattice, new_dt)?;
            }
        }
        steps_since_check += 1;

        z = stepper.step(&z)?;
        for (_, bar) in anchors.iter_mut() {
            stepper.advance_linear(bar);
        }
        step_norms.push((z.time, z.l2_norm()));
    }

    Ok(Trajectory {
        config: config.clone(),
        tracks,
        step_norms,
        snapshots,
        events,
        propagator_stats: stats,
        final_state: z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semigroup::evolve_linear;
    use crate::systems::GenericLinearCoeffs;
    use approx::assert_relative_eq;

    fn small_config(system: SystemId, params: SystemParams, t_end: f64, dt: f64) -> SimConfig {
        SimConfig {
            system,
            params,
            n: 16,
            box_length: 2.0 * std::f64::consts::PI,
            dim: 3,
            initial: initial_data::InitialDataSpec {
                seed: 11,
                spectrum_sigma: 1.5,
                block_norms: vec![],
            },
            dt,
            t_end,
            sample_interval: dt * 5.0,
            snapshot_times: vec![],
            anchors: vec![],
            t_max: 1e6,
            m_max: 2,
            hs_orders: vec![],
            lp_orders: vec![],
            track_pressure: false,
        }
    }

    #[test]
    fn zero_explicit_part_reproduces_linear_flow() {
        let params = SystemParams {
            generic_linear: Some(GenericLinearCoeffs {
                gamma_exponent: 1.0,
                c: [1.0, 1.0, 1.0],
                rotation: None,
            }),
            ..SystemParams::default()
        };
        let lat = Lattice::new(16, 2.0 * std::f64::consts::PI).unwrap();
        let stepper = Stepper::new(SystemId::GenericLinear, params.clone(), lat, 0.3).unwrap();
        let s = initial_data::random_state(SystemId::GenericLinear, lat, 5, 1.0);
        let stepped = stepper.step(&s).unwrap();
        let exact = evolve_linear(&s, 0.3, &params).unwrap();
        let d = stepped.sub(&exact).l2_norm();
        assert!(d <= 1e-13 * exact.l2_norm(), "defect {d}");
    }

    #[test]
    fn step_from_zero_state_stays_zero() {
        let lat = Lattice::new(16, 1.0).unwrap();
        let stepper =
            Stepper::new(SystemId::Micropolar, SystemParams::default(), lat, 0.01).unwrap();
        let z = State::new(
            SystemId::Micropolar,
            0.0,
            vec![
                (Block::U, SpectralField::zeros(lat, 3)),
                (Block::W, SpectralField::zeros(lat, 3)),
            ],
        )
        .unwrap();
        assert_eq!(stepper.step(&z).unwrap().l2_norm(), 0.0);
    }

    #[test]
    fn heun_scheme_is_second_order() {
        // self-convergence against a dt/8 reference on an energetic state
        let lat = Lattice::new(16, 2.0 * std::f64::consts::PI).unwrap();
        let params = SystemParams::default();
        let s0 = {
            let mut s = initial_data::random_state(SystemId::Micropolar, lat, 3, 1.0);
            s.scale(4.0);
            s
        };
        let t_end = 0.32;
        let run_dt = |dt: f64| -> State {
            let stepper = Stepper::new(SystemId::Micropolar, params.clone(), lat, dt).unwrap();
            let mut z = s0.clone();
            let n = (t_end / dt).round() as usize;
            for _ in 0..n {
                z = stepper.step(&z).unwrap();
            }
            z
        };
        let reference = run_dt(0.0025);
        let e1 = run_dt(0.02).sub(&reference).l2_norm();
        let e2 = run_dt(0.01).sub(&reference).l2_norm();
        let ratio = e1 / e2;
        assert!(
            (3.2..=4.8).contains(&ratio),
            "convergence ratio {ratio} (errors {e1}, {e2})"
        );
    }

    #[test]
    fn run_records_tracks_and_conserves_energy_budget() {
        let cfg = small_config(SystemId::Micropolar, SystemParams::default(), 2.0, 0.02);
        let traj = run(&cfg).unwrap();
        let z0 = traj.step_norms[0].1;
        // strict per-step dissipation
        for w in traj.step_norms.windows(2) {
            assert!(w[1].1 <= w[0].1 * (1.0 + 1e-10), "norm grew: {:?}", w);
        }
        // energy budget: ||z||^2 + 2 nu int ||Dz||^2 <= ||z0||^2 (1 + 1e-6)
        let z_track = traj.track("z", 0.0).unwrap();
        let dz_track = traj.track("z", 1.0).unwrap();
        let nu = cfg.params.nu();
        let mut integral = 0.0;
        for k in 1..z_track.samples.len() {
            let (t0, _) = z_track.samples[k - 1];
            let (t1, _) = z_track.samples[k];
            let a = dz_track.samples[k - 1].1;
            let b = dz_track.samples[k].1;
            integral += 0.5 * (a * a + b * b) * (t1 - t0);
            let zt = z_track.samples[k].1;
            let lhs = zt * zt + 2.0 * nu * integral;
            assert!(lhs <= z0 * z0 * (1.0 + 1e-6), "budget violated at t={t1}: {lhs} vs {}", z0 * z0);
        }
    }

    #[test]
    fn run_with_zero_t_end_keeps_only_initial_sample() {
        let mut cfg = small_config(SystemId::Micropolar, SystemParams::default(), 0.0, 0.02);
        cfg.t_end = 0.0;
        let traj = run(&cfg).unwrap();
        let z = traj.track("z", 0.0).unwrap();
        assert_eq!(z.samples.len(), 1);
        assert_eq!(z.samples[0].0, 0.0);
    }

    #[test]
    fn anchored_companions_start_exact_and_diverge_slowly() {
        let mut cfg = small_config(SystemId::Micropolar, SystemParams::default(), 1.0, 0.02);
        cfg.anchors = vec![0.2, 0.5];
        let traj = run(&cfg).unwrap();
        let e = traj.track("e_z@0.2", 0.0).unwrap();
        // first sample at the anchor itself is identically zero
        let first_after = e.samples.iter().find(|(t, _)| *t >= 0.2 - 1e-9).unwrap();
        assert!(first_after.1 <= 1e-14, "error at anchor time: {}", first_after.1);
        // errors stay small relative to the state over this short window
        let z = traj.track("z", 0.0).unwrap();
        let last_e = e.samples.last().unwrap().1;
        let last_z = z.samples.last().unwrap().1;
        assert!(last_e <= 0.05 * last_z, "error unexpectedly large: {last_e} vs {last_z}");
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut cfg = small_config(SystemId::Micropolar, SystemParams::default(), 2.0, 0.02);
        cfg.anchors = vec![0.013]; // not a multiple of dt
        assert!(cfg.validate().is_err());
        let mut cfg = small_config(SystemId::Micropolar, SystemParams::default(), 2.0, 0.02);
        cfg.t_max = 1.0; // t_end beyond horizon
        assert!(cfg.validate().is_err());
        let mut cfg = small_config(SystemId::Micropolar, SystemParams::default(), 2.0, 0.02);
        cfg.sample_interval = 0.03;
        assert!(cfg.validate().is_err());
    }
}
