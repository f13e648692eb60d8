//! Disk formats. Gridded data goes out as a raw stream of little-endian f64
//! values plus a JSON sidecar naming the field, its shape (slowest axis
//! first, C order), the sample time, and the grid spacing. Particle
//! ensembles are one stream holding the five arrays x, y, vx, vy, w with an
//! {N, time, seed} sidecar. Time series are CSV: comma-separated, '.'
//! decimal, header row mandatory, floats through `Display` so deterministic
//! reruns produce byte-identical bytes.
//!
//! Every invocation that writes files also writes a manifest recording the
//! config hash, code version, seed, overrides, wall-clock interval, and the
//! inventory of emitted files.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::field::{Array2, VelocityField};
use crate::particles::ParticleEnsemble;
use crate::phase::PhaseGridDensity;

fn write_raw<'a>(path: &Path, chunks: impl IntoIterator<Item = &'a [f64]>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for chunk in chunks {
        for v in chunk {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct FieldSidecar<'a> {
    field: &'a str,
    shape: Vec<usize>,
    time: f64,
    spacing: Vec<f64>,
}

/// Writes `<stem>.f64` and `<stem>.json` into `dir`; returns both paths.
pub fn write_scalar_snapshot(
    dir: &Path,
    stem: &str,
    field: &str,
    a: &Array2,
    spacing: (f64, f64),
    time: f64,
) -> Result<Vec<PathBuf>> {
    let raw = dir.join(format!("{stem}.f64"));
    let side = dir.join(format!("{stem}.json"));
    write_raw(&raw, [a.data.as_slice()])?;
    write_json(
        &side,
        &FieldSidecar {
            field,
            // storage iterates x fastest, so y is the slow axis
            shape: vec![a.ny, a.nx],
            time,
            spacing: vec![spacing.1, spacing.0],
        },
    )?;
    Ok(vec![raw, side])
}

/// The staggered components have different shapes, so the velocity goes out
/// as two scalar snapshots `<stem>_ux` and `<stem>_uy`.
pub fn write_velocity_snapshot(
    dir: &Path,
    stem: &str,
    u: &VelocityField,
    time: f64,
) -> Result<Vec<PathBuf>> {
    let spacing = (u.hx, u.hy);
    let mut files = write_scalar_snapshot(dir, &format!("{stem}_ux"), "ux", &u.ux, spacing, time)?;
    files.extend(write_scalar_snapshot(
        dir,
        &format!("{stem}_uy"),
        "uy",
        &u.uy,
        spacing,
        time,
    )?);
    Ok(files)
}

/// Phase-space density in the field format with a 4D shape
/// [nx, ny, nv, nv], the last axis fastest.
pub fn write_phase_snapshot(
    dir: &Path,
    stem: &str,
    f: &PhaseGridDensity,
    time: f64,
) -> Result<Vec<PathBuf>> {
    let raw = dir.join(format!("{stem}.f64"));
    let side = dir.join(format!("{stem}.json"));
    write_raw(&raw, [f.f.as_slice()])?;
    write_json(
        &side,
        &FieldSidecar {
            field: "f",
            shape: vec![f.nx, f.ny, f.nv, f.nv],
            time,
            spacing: vec![f.hx, f.hy, f.hv, f.hv],
        },
    )?;
    Ok(vec![raw, side])
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct EnsembleSidecar {
    N: usize,
    time: f64,
    seed: u64,
}

/// One raw stream holding x, y, vx, vy, w back to back (N values each),
/// plus the {N, time, seed} sidecar.
pub fn write_ensemble_snapshot(
    dir: &Path,
    stem: &str,
    e: &ParticleEnsemble,
) -> Result<Vec<PathBuf>> {
    let raw = dir.join(format!("{stem}.f64"));
    let side = dir.join(format!("{stem}.json"));
    write_raw(&raw, [&e.x[..], &e.y[..], &e.vx[..], &e.vy[..], &e.w[..]])?;
    write_json(
        &side,
        &EnsembleSidecar {
            N: e.len(),
            time: e.time,
            seed: e.seed,
        },
    )?;
    Ok(vec![raw, side])
}

/// Streaming CSV writer. The header goes out on creation, so a file without
/// one cannot exist.
pub struct CsvWriter {
    w: BufWriter<File>,
    path: PathBuf,
}

impl CsvWriter {
    pub fn create(path: PathBuf, header: &str) -> Result<Self> {
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "{header}")?;
        Ok(CsvWriter { w, path })
    }

    pub fn row(&mut self, line: &str) -> Result<()> {
        writeln!(self.w, "{line}")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.w.flush()?;
        Ok(self.path)
    }
}

/// Pretty-printed JSON to a file; returns the path for the manifest.
pub fn write_json_file<T: Serialize>(path: PathBuf, value: &T) -> Result<PathBuf> {
    write_json(&path, value)?;
    Ok(path)
}

/// One-shot CSV table.
pub fn write_csv(
    path: PathBuf,
    header: &str,
    lines: impl IntoIterator<Item = String>,
) -> Result<PathBuf> {
    let mut w = CsvWriter::create(path, header)?;
    for line in lines {
        w.row(&line)?;
    }
    w.finish()
}

fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Inventory of one invocation: what ran, from which config (by hash), with
/// which seed and overrides, over which wall-clock interval, and every file
/// it wrote. File names are stored relative to the output directory.
#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_sha256: String,
    pub code_version: String,
    pub seed: u64,
    pub overrides: Vec<String>,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn begin(command: &str, config_text: &str, overrides: &[String], seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(config_text.as_bytes());
        RunManifest {
            command: command.into(),
            config_sha256: format!("{:x}", h.finalize()),
            code_version: env!("CARGO_PKG_VERSION").into(),
            seed,
            overrides: overrides.to_vec(),
            started_unix_ms: unix_ms(),
            finished_unix_ms: 0,
            files: Vec::new(),
        }
    }

    pub fn add(&mut self, paths: &[PathBuf]) {
        for p in paths {
            let name = p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string());
            self.files.push(name);
        }
    }

    /// Stamps the end time and writes `manifest.json` into `dir`.
    pub fn write(mut self, dir: &Path) -> Result<PathBuf> {
        self.finished_unix_ms = unix_ms();
        let path = dir.join("manifest.json");
        write_json(&path, &self)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_domain, DomainSpec, FluidBc, KineticBc};

    fn read_f64s(path: &Path) -> Vec<f64> {
        let bytes = std::fs::read(path).unwrap();
        assert_eq!(bytes.len() % 8, 0);
        bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    }

    #[test]
    fn scalar_snapshot_round_trips_with_its_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Array2::zeros(3, 2);
        a.fill_with(|i, j| (i + 10 * j) as f64);
        let files =
            write_scalar_snapshot(dir.path(), "p_0005", "p", &a, (0.5, 0.25), 1.5).unwrap();
        assert_eq!(files.len(), 2);

        let vals = read_f64s(&files[0]);
        assert_eq!(vals, a.data);
        let side: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&files[1]).unwrap()).unwrap();
        assert_eq!(side["field"], "p");
        assert_eq!(side["shape"][0], 2);
        assert_eq!(side["shape"][1], 3);
        assert_eq!(side["time"], 1.5);
        assert_eq!(side["spacing"][1], 0.5);
    }

    #[test]
    fn ensemble_snapshot_concatenates_the_five_arrays() {
        let dir = tempfile::tempdir().unwrap();
        let e = ParticleEnsemble {
            x: vec![1.0, 2.0],
            y: vec![3.0, 4.0],
            vx: vec![5.0, 6.0],
            vy: vec![7.0, 8.0],
            w: vec![9.0, 10.0],
            seed: 42,
            time: 0.25,
        };
        let files = write_ensemble_snapshot(dir.path(), "particles_final", &e).unwrap();
        let vals = read_f64s(&files[0]);
        assert_eq!(vals, (1..=10).map(f64::from).collect::<Vec<_>>());
        let side: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&files[1]).unwrap()).unwrap();
        assert_eq!(side["N"], 2);
        assert_eq!(side["seed"], 42);
    }

    #[test]
    fn phase_snapshot_records_the_4d_shape() {
        let dir = tempfile::tempdir().unwrap();
        let grid =
            build_domain(DomainSpec::unit_square(4, FluidBc::NoSlip, KineticBc::Specular)).unwrap();
        let f = PhaseGridDensity::zeros(&grid, 4, 4, 8, 3.0).unwrap();
        let files = write_phase_snapshot(dir.path(), "f_final", &f, 2.0).unwrap();
        assert_eq!(read_f64s(&files[0]).len(), 4 * 4 * 8 * 8);
        let side: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&files[1]).unwrap()).unwrap();
        assert_eq!(side["shape"], serde_json::json!([4, 4, 8, 8]));
        assert_eq!(side["spacing"][2], f.hv);
    }

    #[test]
    fn csv_always_leads_with_the_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(
            dir.path().join("t.csv"),
            "a,b",
            ["1,2".to_string(), "3,4.5".to_string()],
        )
        .unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text, "a,b\n1,2\n3,4.5\n");
    }

    #[test]
    fn manifest_lists_files_and_hashes_the_config() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::begin("run", "abc", &["sim.dt=1e-3".into()], 7);
        // sha256("abc"), the classic test vector
        assert_eq!(
            m.config_sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        m.add(&[dir.path().join("ledger.csv")]);
        let path = m.write(dir.path()).unwrap();
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(v["files"], serde_json::json!(["ledger.csv"]));
        assert_eq!(v["seed"], 7);
        assert_eq!(v["overrides"][0], "sim.dt=1e-3");
        assert!(v["finished_unix_ms"].as_u64().unwrap() >= v["started_unix_ms"].as_u64().unwrap());
    }
}
