//! Command implementations behind the `decaylab` binary:
//! `run`, `verify`, `constants`, `sweep`.

use crate::config::{CheckId, ExperimentSpec, OutputFormat};
use crate::constants::{self, AlphaParams, RegularityVariant};
use crate::diagnostics::{self, ReportInputs, VerificationReport};
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::output::{self, ConstantsRow, Meta, ReportBundle};
use crate::semigroup::{eigen_bound_scan, verify_comparison};
use crate::stepper::{self, initial_data, Trajectory};
use crate::systems::SystemId;
use std::path::{Path, PathBuf};

/// Resolve (and create) the experiment's output directory.
fn prepare_out_dir(base: &Path, name: &str, force: bool) -> Result<PathBuf> {
    let dir = base.join(name);
    if dir.exists() {
        let occupied = std::fs::read_dir(&dir)?.next().is_some();
        if occupied && !force {
            return Err(Error::config(format!(
                "output directory {} is not empty (pass --force to overwrite)",
                dir.display()
            )));
        }
    }
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// `run`: produce the trajectory, norm CSV and snapshot checkpoints.
pub fn cmd_run(spec: &ExperimentSpec, out: &Path, force: bool) -> Result<Trajectory> {
    let dir = prepare_out_dir(out, &spec.name, force)?;
    let meta = Meta::new(spec);
    let traj = stepper::run(&spec.sim)?;
    if spec.formats.contains(&OutputFormat::Csv) {
        output::write_norms_csv(&traj, &meta, &dir.join("norms.csv"))?;
    }
    output::write_meta_json(&meta, &dir.join("meta.json"))?;
    for (i, snap) in traj.snapshots.iter().enumerate() {
        let t = spec.sim.snapshot_times.get(i).copied().unwrap_or(snap.time);
        output::write_checkpoint(snap, &dir.join(format!("checkpoint_t{t}.dlck")))?;
    }
    for event in &traj.events {
        println!("event: {event}");
    }
    Ok(traj)
}

fn eigen_bound_reports(spec: &ExperimentSpec) -> Result<Vec<VerificationReport>> {
    let scan = eigen_bound_scan(&spec.sim.params, 10_000)?;
    let scan2 = eigen_bound_scan(&spec.sim.params, 20_000)?;
    let max_ratio = scan
        .lambda_max_over_xi2
        .iter()
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut caveats = vec![format!("best C = {:.6} over {} samples", scan.best_c, scan.sample_count)];
    if !scan.hypothesis_ok {
        caveats.push("coupling hypothesis 32 chi (mu+chi+gamma) > 1 not met".into());
    }
    Ok(vec![
        VerificationReport::build(
            "eigen_bound.negative",
            ReportInputs::default(),
            max_ratio,
            0.0,
            0.0,
            caveats,
        ),
        VerificationReport::build(
            "eigen_bound.stability",
            ReportInputs::default(),
            (scan.best_c - scan2.best_c).abs() / scan.best_c.abs().max(1e-300),
            0.05,
            0.0,
            vec!["best C under doubling the sample count".into()],
        ),
    ])
}

fn comparison_reports(spec: &ExperimentSpec) -> Result<Vec<VerificationReport>> {
    let lattice = Lattice::new(16, spec.sim.box_length.min(20.0))?;
    let params = &spec.sim.params;
    let c = eigen_bound_scan(params, 2000)?.best_c;
    let times = [0.1, 0.5, 2.0, 10.0];
    let mut worst_coupled = f64::NEG_INFINITY;
    let mut worst_lame = f64::NEG_INFINITY;
    for seed in 0..20u64 {
        let g = initial_data::random_state(SystemId::Micropolar, lattice, seed, 1.0);
        let rep = verify_comparison(&g, params, c, &times)?;
        for row in &rep.coupled {
            worst_coupled = worst_coupled.max(row.semigroup_norm - row.heat_norm);
        }
        for row in &rep.lame {
            worst_lame = worst_lame.max(row.semigroup_norm - row.heat_norm);
        }
    }
    let inputs = ReportInputs {
        constants: vec![diagnostics::ConstantProvenance {
            name: "c".into(),
            value: c,
            source: "eigenvalue scan".into(),
        }],
        ..Default::default()
    };
    Ok(vec![
        VerificationReport::build(
            "semigroup_comparison.coupled",
            inputs.clone(),
            worst_coupled,
            1e-10,
            0.0,
            vec!["largest signed excess of the coupled flow over the heat bound".into()],
        ),
        VerificationReport::build(
            "semigroup_comparison.lame",
            inputs,
            worst_lame,
            1e-10,
            0.0,
            vec![],
        ),
    ])
}

fn sobolev_reports(spec: &ExperimentSpec) -> Result<Vec<VerificationReport>> {
    let lattice = Lattice::new(32, 20.0)?;
    let tr = crate::fft::Transform::new(lattice);
    let sigma = 0.4 * lattice.dk() * lattice.n() as f64 / 3.0;
    let fields: Vec<_> = (0..spec.verify.sobolev_samples)
        .map(|seed| initial_data::random_band_limited(lattice, 1, seed as u64, sigma))
        .collect();
    diagnostics::check_sobolev_lemma(&fields, &tr)
}

/// `verify`: run whatever the spec requests and write the report bundle.
pub fn cmd_verify(spec: &ExperimentSpec, out: &Path, force: bool) -> Result<ReportBundle> {
    let dir = prepare_out_dir(out, &spec.name, force)?;
    let meta = Meta::new(spec);
    let needs_traj = spec.verify.checks.iter().any(|c| c.needs_trajectory());
    let traj = if needs_traj { Some(stepper::run(&spec.sim)?) } else { None };
    let mut reports = Vec::new();
    let alpha = spec.verify.alpha;
    for check in &spec.verify.checks {
        match check {
            CheckId::Energy => {
                reports.push(diagnostics::verify_energy_inequality(traj.as_ref().unwrap())?);
            }
            CheckId::StepMonotonicity => {
                reports.push(diagnostics::verify_step_monotonicity(traj.as_ref().unwrap()));
            }
            CheckId::DerivativeMonotonicity => {
                let t = traj.as_ref().unwrap();
                for m in 1..=spec.sim.m_max.min(2) {
                    reports.push(diagnostics::verify_derivative_monotonicity(t, m)?);
                }
            }
            CheckId::DerivativeDecay => {
                let t = traj.as_ref().unwrap();
                let w = diagnostics::default_window(t);
                reports.extend(diagnostics::verify_derivative_decay(t, alpha, &spec.verify.m_list, w)?);
            }
            CheckId::ErrorDecay => {
                let t = traj.as_ref().unwrap();
                let w = diagnostics::default_window(t);
                reports.extend(diagnostics::verify_error_decay(t, alpha, &spec.verify.m_list, w)?);
            }
            CheckId::AnchorIndependence => {
                let t = traj.as_ref().unwrap();
                let w = diagnostics::default_window(t);
                reports.extend(diagnostics::verify_anchor_independence(t, &spec.verify.m_list, w)?);
            }
            CheckId::InterpolatedDecay => {
                let t = traj.as_ref().unwrap();
                let w = diagnostics::default_window(t);
                reports.extend(diagnostics::check_interpolated_decay(t, alpha, w)?);
            }
            CheckId::PressureDecay => {
                let t = traj.as_ref().unwrap();
                let w = diagnostics::default_window(t);
                reports.push(diagnostics::verify_pressure_decay(t, alpha, w)?);
            }
            CheckId::SobolevProduct => reports.extend(sobolev_reports(spec)?),
            CheckId::EigenBound => reports.extend(eigen_bound_reports(spec)?),
            CheckId::SemigroupComparison => reports.extend(comparison_reports(spec)?),
        }
    }
    let bundle = ReportBundle::new(meta.clone(), reports);
    if spec.formats.contains(&OutputFormat::Json) {
        bundle.write_json(&dir.join("report.json"))?;
    }
    if let Some(t) = &traj {
        if spec.formats.contains(&OutputFormat::Csv) {
            output::write_norms_csv(t, &meta, &dir.join("norms.csv"))?;
        }
    }
    output::write_meta_json(&meta, &dir.join("meta.json"))?;
    print!("{}", bundle.render_text());
    Ok(bundle)
}

/// `constants`: emit the constants table over the requested grids.
pub fn cmd_constants(spec: &ExperimentSpec, out: &Path, force: bool) -> Result<Vec<ConstantsRow>> {
    let dir = prepare_out_dir(out, &spec.name, force)?;
    let meta = Meta::new(spec);
    let req = &spec.constants;
    let z0 = req.z0_norm.unwrap_or(1.0);
    let mut rows = Vec::new();
    for &alpha in &req.alphas {
        for m in 0..=req.m_max {
            let k = constants::k_alpha_m(alpha, m)?;
            let kt = constants::k_tilde(alpha, m)?;
            let beta = constants::beta_of_alpha(alpha).ok();
            let error_constant = match req.lambda0 {
                Some(l0) if beta.is_some() => {
                    let ap = AlphaParams { alpha, lambda0: Some(l0), z0_norm: Some(z0) };
                    constants::error_constant(&spec.sim.params, &ap, m, req.c).ok().map(|r| r.value)
                }
                _ => None,
            };
            rows.push(ConstantsRow {
                alpha,
                m,
                k: k.value,
                attained_delta: k.attained_delta,
                k_tilde: kt,
                beta,
                error_constant,
                t_bound_improved: constants::regularity_time_bound(req.nu, z0, RegularityVariant::Improved),
                t_bound_leray: constants::regularity_time_bound(req.nu, z0, RegularityVariant::Leray),
            });
        }
    }
    if spec.formats.contains(&OutputFormat::Csv) {
        output::write_constants_csv(&rows, &meta, &dir.join("constants.csv"))?;
    }
    if spec.formats.contains(&OutputFormat::Json) {
        let payload = serde_json::json!({ "meta": meta, "rows": rows });
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("constants.json"))?);
        serde_json::to_writer_pretty(&mut f, &payload)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        use std::io::Write;
        f.write_all(b"\n")?;
    }
    println!("{} constants rows written to {}", rows.len(), dir.display());
    Ok(rows)
}

/// `sweep`: fan out runs over the sweep values and aggregate a summary.
pub fn cmd_sweep(spec: &ExperimentSpec, out: &Path, force: bool, workers: usize) -> Result<()> {
    let children = spec.expand_sweep()?;
    if spec.sweep.is_none() {
        return Err(Error::config("sweep command needs a [sweep] block"));
    }
    let dir = prepare_out_dir(out, &spec.name, force)?;
    let results: Vec<Result<(String, f64, f64)>> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for chunk in children.chunks(workers.max(1)) {
            let mut batch = Vec::new();
            for child in chunk {
                let dir = dir.clone();
                batch.push(scope.spawn(move || -> Result<(String, f64, f64)> {
                    let traj = cmd_run(child, &dir, true)?;
                    let w = diagnostics::default_window(&traj);
                    let fit = diagnostics::DecaySeries::from_track(
                        traj.track("z", 0.0).ok_or_else(|| Error::invalid("missing track"))?,
                    )
                    .fit_exponent(w)?;
                    let final_norm = traj.step_norms.last().map(|s| s.1).unwrap_or(0.0);
                    Ok((child.name.clone(), final_norm, fit.exponent))
                }));
            }
            for h in batch {
                handles.push(h.join().expect("sweep worker panicked"));
            }
        }
        handles
    });
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("sweep_summary.csv"))?);
    writeln!(f, "name,final_norm,z_exponent")?;
    for r in results {
        let (name, norm, expo) = r?;
        writeln!(f, "{name},{norm:.12e},{expo:.6}")?;
    }
    println!("sweep summary written to {}", dir.join("sweep_summary.csv").display());
    Ok(())
}
