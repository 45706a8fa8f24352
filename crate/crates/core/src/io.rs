//! Binary payload helpers and trajectory serialization.
//!
//! Trajectories are stored as a flat little-endian float64 payload in
//! row-major (step, i, j) order, next to a JSON sidecar holding the grid,
//! system, time spec, and the seeds that produced the run.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Field2D;
use crate::pde::{PdeSystem, TimeSpec, Trajectory};

pub fn write_f64s<W: Write>(w: &mut W, values: impl IntoIterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Sidecar metadata for a serialized trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub system: PdeSystem,
    pub time: TimeSpec,
    /// Named RNG seeds that produced this run (initial condition etc).
    pub seeds: BTreeMap<String, u64>,
}

fn sidecar_path(payload: &Path) -> PathBuf {
    payload.with_extension("json")
}

/// Writes `payload_path` (flat little-endian float64) and a `.json` sidecar
/// next to it. The grid is taken from the first snapshot.
pub fn save_trajectory(payload_path: &Path, traj: &Trajectory, meta: &TrajectoryMeta) -> Result<()> {
    let first = traj
        .snapshots
        .first()
        .ok_or_else(|| Error::InvalidSpec("cannot serialize an empty trajectory".into()))?;

    #[derive(Serialize)]
    struct Sidecar<'a> {
        grid: crate::grid::GridSpec,
        boundary: crate::grid::BoundaryCondition,
        n_snapshots: usize,
        #[serde(flatten)]
        meta: &'a TrajectoryMeta,
    }

    let sidecar = Sidecar {
        grid: first.grid,
        boundary: first.boundary,
        n_snapshots: traj.len(),
        meta,
    };
    std::fs::write(
        sidecar_path(payload_path),
        serde_json::to_string_pretty(&sidecar)?,
    )?;

    let mut w = BufWriter::new(File::create(payload_path)?);
    for snap in &traj.snapshots {
        write_f64s(&mut w, snap.values.iter().copied())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_trajectory(payload_path: &Path) -> Result<(Trajectory, TrajectoryMeta)> {
    #[derive(Deserialize)]
    struct Sidecar {
        grid: crate::grid::GridSpec,
        boundary: crate::grid::BoundaryCondition,
        n_snapshots: usize,
        #[serde(flatten)]
        meta: TrajectoryMeta,
    }

    let sidecar: Sidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(
        payload_path,
    ))?)?;
    let n = sidecar.grid.n();
    let per_snap = n * n;

    let mut r = BufReader::new(File::open(payload_path)?);
    let values = read_f64s(&mut r, per_snap * sidecar.n_snapshots)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::MalformedFile(format!(
            "{} has trailing bytes beyond {} snapshots",
            payload_path.display(),
            sidecar.n_snapshots
        )));
    }

    let mut snapshots = Vec::with_capacity(sidecar.n_snapshots);
    for k in 0..sidecar.n_snapshots {
        let slice = &values[k * per_snap..(k + 1) * per_snap];
        let arr = ndarray::Array2::from_shape_vec((n, n), slice.to_vec())
            .expect("length checked above");
        let mut field = Field2D::new(sidecar.grid, sidecar.boundary, arr)?;
        field.time = sidecar.meta.time.t0 + k as f64 * sidecar.meta.time.dt;
        snapshots.push(field);
    }
    Ok((Trajectory { snapshots }, sidecar.meta))
}
