//! Output files: norm-track CSV, report JSON, constants tables and binary
//! state checkpoints. Every file embeds the resolved configuration and
//! the crate version so any report is reproducible from its own header.

use crate::config::ExperimentSpec;
use crate::diagnostics::VerificationReport;
use crate::error::{Error, Result};
use crate::field::{Block, SpectralField, State};
use crate::lattice::Lattice;
use crate::stepper::Trajectory;
use crate::systems::SystemId;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Norm convention recorded in every report header.
pub const NORM_CONVENTION: &str = "order-m derivative norms weight mode xi by |xi|^m (one code \
     path for fractional orders); synthesis f(x) = sum fhat(xi) exp(i xi.x) carries no prefactor, \
     analysis divides by n^dim";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Meta {
    pub version: String,
    pub norm_convention: String,
    pub experiment: String,
    pub config: serde_json::Value,
}

impl Meta {
    pub fn new(spec: &ExperimentSpec) -> Self {
        Meta {
            version: crate::VERSION.to_string(),
            norm_convention: NORM_CONVENTION.to_string(),
            experiment: spec.name.clone(),
            config: serde_json::to_value(spec).expect("spec serializes"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportBundle {
    pub meta: Meta,
    pub reports: Vec<VerificationReport>,
    pub summary: Summary,
}

impl ReportBundle {
    pub fn new(meta: Meta, reports: Vec<VerificationReport>) -> Self {
        let passed = reports.iter().filter(|r| r.pass).count();
        let summary = Summary { total: reports.len(), passed, failed: reports.len() - passed };
        ReportBundle { meta, reports, summary }
    }

    pub fn all_pass(&self) -> bool {
        self.summary.failed == 0
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(&mut f, self)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        f.write_all(b"\n")?;
        Ok(())
    }

    /// Human-readable one-line-per-check summary.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for r in &self.reports {
            out.push_str(&format!(
                "{}: {} (measured {:.6e}, bound {:.6e}, tolerance {:.1e})\n",
                r.check,
                if r.pass { "PASS" } else { "FAIL" },
                r.measured,
                r.bound,
                r.tolerance
            ));
        }
        out.push_str(&format!(
            "{} checks: {} passed, {} failed\n",
            self.summary.total, self.summary.passed, self.summary.failed
        ));
        out
    }
}

fn config_header(meta: &Meta) -> String {
    format!(
        "# decaylab {} experiment={}\n# config={}\n",
        meta.version,
        meta.experiment,
        serde_json::to_string(&meta.config).expect("config serializes")
    )
}

/// Norm tracks as CSV: `t,field,m,p,value` with the embedded config in
/// comment lines above the header row.
pub fn write_norms_csv(traj: &Trajectory, meta: &Meta, path: &Path) -> Result<()> {
    let mut f = BufWriter::new(std::fs::File::create(path)?);
    f.write_all(config_header(meta).as_bytes())?;
    writeln!(f, "t,field,m,p,value")?;
    for track in &traj.tracks {
        for &(t, v) in &track.samples {
            writeln!(f, "{t},{},{},{},{v:.17e}", track.key.field, track.key.m, track.key.p)?;
        }
    }
    Ok(())
}

/// One row of the constants table.
#[derive(Debug, Clone, Serialize)]
pub struct ConstantsRow {
    pub alpha: f64,
    pub m: usize,
    pub k: f64,
    pub attained_delta: Option<f64>,
    pub k_tilde: f64,
    pub beta: Option<f64>,
    pub error_constant: Option<f64>,
    pub t_bound_improved: f64,
    pub t_bound_leray: f64,
}

pub fn write_constants_csv(rows: &[ConstantsRow], meta: &Meta, path: &Path) -> Result<()> {
    let mut f = BufWriter::new(std::fs::File::create(path)?);
    f.write_all(config_header(meta).as_bytes())?;
    writeln!(
        f,
        "alpha,m,k,attained_delta,k_tilde,beta,error_constant,t_bound_improved,t_bound_leray"
    )?;
    for r in rows {
        let od = r.attained_delta.map(|d| format!("{d:.12e}")).unwrap_or_default();
        let ob = r.beta.map(|b| format!("{b}")).unwrap_or_default();
        let oc = r.error_constant.map(|c| format!("{c:.12e}")).unwrap_or_default();
        writeln!(
            f,
            "{},{},{:.12e},{},{:.12e},{},{},{:.12e},{:.12e}",
            r.alpha, r.m, r.k, od, r.k_tilde, ob, oc, r.t_bound_improved, r.t_bound_leray
        )?;
    }
    Ok(())
}

pub fn write_meta_json(meta: &Meta, path: &Path) -> Result<()> {
    let mut f = BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut f, meta).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    f.write_all(b"\n")?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Checkpoint files
// ---------------------------------------------------------------------------

const CHECKPOINT_MAGIC: &[u8; 4] = b"DLCK";
const CHECKPOINT_VERSION: u8 = 1;

/// Self-describing binary state snapshot; layout documented in
/// `docs/checkpoint_format.md`.
pub fn write_checkpoint(state: &State, path: &Path) -> Result<()> {
    let mut f = BufWriter::new(std::fs::File::create(path)?);
    let lat = state.lattice();
    f.write_all(CHECKPOINT_MAGIC)?;
    f.write_all(&[CHECKPOINT_VERSION, lat.dim() as u8])?;
    f.write_all(&(lat.n() as u32).to_le_bytes())?;
    f.write_all(&lat.box_length().to_le_bytes())?;
    f.write_all(&state.time.to_le_bytes())?;
    let name = state.system.name().as_bytes();
    f.write_all(&[name.len() as u8])?;
    f.write_all(name)?;
    f.write_all(&[state.blocks().len() as u8])?;
    for (b, field) in state.blocks() {
        let bn = b.name().as_bytes();
        f.write_all(&[bn.len() as u8])?;
        f.write_all(bn)?;
        f.write_all(&[field.components() as u8])?;
        for c in field.coeffs() {
            f.write_all(&c.re.to_le_bytes())?;
            f.write_all(&c.im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<State> {
    let mut f = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::invalid("not a checkpoint file"));
    }
    let mut head = [0u8; 2];
    f.read_exact(&mut head)?;
    if head[0] != CHECKPOINT_VERSION {
        return Err(Error::invalid(format!("unsupported checkpoint version {}", head[0])));
    }
    let dim = head[1] as usize;
    let mut u32b = [0u8; 4];
    f.read_exact(&mut u32b)?;
    let n = u32::from_le_bytes(u32b) as usize;
    let mut f64b = [0u8; 8];
    f.read_exact(&mut f64b)?;
    let box_length = f64::from_le_bytes(f64b);
    f.read_exact(&mut f64b)?;
    let time = f64::from_le_bytes(f64b);
    let read_str = |f: &mut BufReader<std::fs::File>| -> Result<String> {
        let mut len = [0u8; 1];
        f.read_exact(&mut len)?;
        let mut buf = vec![0u8; len[0] as usize];
        f.read_exact(&mut buf)?;
        String::from_utf8(buf).map_err(|_| Error::invalid("bad string in checkpoint"))
    };
    let system = SystemId::parse(&read_str(&mut f)?)?;
    let lattice = Lattice::with_dim(n, box_length, dim)?;
    let mut nblocks = [0u8; 1];
    f.read_exact(&mut nblocks)?;
    let mut blocks = Vec::new();
    for _ in 0..nblocks[0] {
        let bname = read_str(&mut f)?;
        let block = match bname.as_str() {
            "u" => Block::U,
            "w" => Block::W,
            "b" => Block::B,
            "theta" => Block::Theta,
            "v" => Block::V,
            other => return Err(Error::invalid(format!("unknown block '{other}'"))),
        };
        let mut comps = [0u8; 1];
        f.read_exact(&mut comps)?;
        let m = lattice.num_modes();
        let mut coeffs = Vec::with_capacity(comps[0] as usize * m);
        for _ in 0..comps[0] as usize * m {
            let mut re = [0u8; 8];
            let mut im = [0u8; 8];
            f.read_exact(&mut re)?;
            f.read_exact(&mut im)?;
            coeffs.push(Complex64::new(f64::from_le_bytes(re), f64::from_le_bytes(im)));
        }
        blocks.push((block, SpectralField::from_coeffs(lattice, comps[0] as usize, coeffs)));
    }
    let mut state = State::new(system, time, blocks)?;
    state.time = time;
    Ok(state)
}

/// First two comment lines of a CSV written by this crate, for tests and
/// external tooling that wants the embedded config back.
pub fn read_csv_header(path: &Path) -> Result<(String, serde_json::Value)> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut lines = f.lines();
    let version = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::invalid("empty csv"))?;
    let config_line = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::invalid("missing config line"))?;
    let json = config_line
        .strip_prefix("# config=")
        .ok_or_else(|| Error::invalid("missing config header"))?;
    let value = serde_json::from_str(json).map_err(|e| Error::invalid(format!("bad config json: {e}")))?;
    Ok((version, value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stepper::initial_data::random_state;

    #[test]
    fn checkpoint_round_trip() {
        let lat = Lattice::new(8, 5.0).unwrap();
        let mut s = random_state(SystemId::Micropolar, lat, 3, 1.0);
        s.time = 2.5;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.dlck");
        write_checkpoint(&s, &path).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back.system, s.system);
        assert_eq!(back.time, 2.5);
        assert!(back.sub(&s).l2_norm() == 0.0);
    }

    #[test]
    fn report_bundle_counts_and_renders() {
        use crate::diagnostics::{ReportInputs, VerificationReport};
        let spec = crate::config::parse_config_str("[system]\nid = \"micropolar\"\n", "t").unwrap();
        let meta = Meta::new(&spec);
        let bundle = ReportBundle::new(
            meta,
            vec![
                VerificationReport::build("a", ReportInputs::default(), 0.5, 1.0, 0.0, vec![]),
                VerificationReport::build("b", ReportInputs::default(), 2.0, 1.0, 0.0, vec![]),
            ],
        );
        assert_eq!(bundle.summary.passed, 1);
        assert!(!bundle.all_pass());
        let text = bundle.render_text();
        assert!(text.contains("a: PASS"));
        assert!(text.contains("b: FAIL"));
    }

    #[test]
    fn json_reports_are_deterministic() {
        use crate::diagnostics::{ReportInputs, VerificationReport};
        let spec = crate::config::parse_config_str("[system]\nid = \"micropolar\"\n", "t").unwrap();
        let mk = || {
            ReportBundle::new(
                Meta::new(&spec),
                vec![VerificationReport::build(
                    "a",
                    ReportInputs { alpha: Some(0.75), ..Default::default() },
                    0.5,
                    1.0,
                    0.0,
                    vec!["caveat".into()],
                )],
            )
        };
        let a = serde_json::to_string(&mk()).unwrap();
        let b = serde_json::to_string(&mk()).unwrap();
        assert_eq!(a, b);
    }
}
