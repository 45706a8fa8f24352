//! Labeled stencil datasets: harvesting from trajectories, one-step labeling
//! of designed stencils, uniform space-time downsampling, concatenation, and
//! the on-disk format.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_f64s, write_f64s};
use crate::pde::{rhs_stencil, stencil_extract, PdeSystem, Stencil, Trajectory, STENCIL_LEN};

/// Which simulation a harvested sample came from. Mixed strategies need the
/// distinction so base and augmentation halves stay countable after concat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectorySource {
    Main,
    DiffInit,
    Extend,
}

/// Family tag for synthetically designed stencils.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticFamily {
    RandomUniform,
    RandomSobol,
    PcaUniform,
    PcaSobol,
}

impl SyntheticFamily {
    pub fn label(&self) -> &'static str {
        match self {
            SyntheticFamily::RandomUniform => "random-uniform",
            SyntheticFamily::RandomSobol => "random-sobol",
            SyntheticFamily::PcaUniform => "pca-uniform",
            SyntheticFamily::PcaSobol => "pca-sobol",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    OnTrajectory {
        source: TrajectorySource,
        step: u32,
        i: u16,
        j: u16,
    },
    Synthetic {
        family: SyntheticFamily,
    },
}

impl Provenance {
    /// Histogram key: base on-trajectory samples report "on-trajectory",
    /// burst augments report their burst kind, synthetic samples their
    /// family.
    pub fn kind(&self) -> &'static str {
        match self {
            Provenance::OnTrajectory {
                source: TrajectorySource::Main,
                ..
            } => "on-trajectory",
            Provenance::OnTrajectory {
                source: TrajectorySource::DiffInit,
                ..
            } => "diff-init",
            Provenance::OnTrajectory {
                source: TrajectorySource::Extend,
                ..
            } => "extend",
            Provenance::Synthetic { family } => family.label(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilSample {
    pub input: Stencil,
    pub label: f64,
    pub provenance: Provenance,
}

/// Ordered labeled samples plus the scalar state range of their
/// on-trajectory inputs (None for purely synthetic datasets).
#[derive(Debug, Clone, PartialEq)]
pub struct StencilDataset {
    samples: Vec<StencilSample>,
    range: Option<(f64, f64)>,
}

impl StencilDataset {
    pub fn new(samples: Vec<StencilSample>, range: Option<(f64, f64)>) -> Result<Self> {
        for (z, s) in samples.iter().enumerate() {
            if !s.label.is_finite() || s.input.0.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    step: z,
                    i: 0,
                    j: 0,
                });
            }
        }
        Ok(Self { samples, range })
    }

    pub fn empty() -> Self {
        Self {
            samples: Vec::new(),
            range: None,
        }
    }

    pub fn count(&self) -> usize {
        self.samples.len()
    }

    pub fn samples(&self) -> &[StencilSample] {
        &self.samples
    }

    pub fn range(&self) -> Option<(f64, f64)> {
        self.range
    }

    pub fn inputs_array(&self) -> Array2<f64> {
        let mut arr = Array2::zeros((self.samples.len(), STENCIL_LEN));
        for (z, s) in self.samples.iter().enumerate() {
            arr.row_mut(z)
                .iter_mut()
                .zip(s.input.0.iter())
                .for_each(|(o, &v)| *o = v);
        }
        arr
    }

    pub fn labels_array(&self) -> Array1<f64> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn stencils(&self) -> Vec<Stencil> {
        self.samples.iter().map(|s| s.input).collect()
    }

    pub fn provenance_histogram(&self) -> BTreeMap<String, usize> {
        let mut hist = BTreeMap::new();
        for s in &self.samples {
            *hist.entry(s.provenance.kind().to_string()).or_insert(0) += 1;
        }
        hist
    }
}

/// Extracts one labeled sample per (transition, cell): input is the stencil
/// at step k, label the forward difference (u_next - u) / dt at the center.
pub fn harvest(traj: &Trajectory, dt: f64) -> Result<StencilDataset> {
    harvest_tagged(traj, dt, TrajectorySource::Main)
}

pub fn harvest_tagged(
    traj: &Trajectory,
    dt: f64,
    source: TrajectorySource,
) -> Result<StencilDataset> {
    if traj.len() < 2 {
        return Err(Error::InvalidSpec(
            "harvest needs a trajectory with at least one transition".into(),
        ));
    }
    let n = traj.snapshots[0].n();
    let mut samples = Vec::with_capacity(traj.n_transitions() * n * n);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in 0..traj.n_transitions() {
        let (cur, next) = (&traj.snapshots[k], &traj.snapshots[k + 1]);
        for i in 0..n {
            for j in 0..n {
                let input = stencil_extract(cur, i, j);
                let center = input.center();
                lo = lo.min(center);
                hi = hi.max(center);
                samples.push(StencilSample {
                    input,
                    label: (next.values[(i, j)] - cur.values[(i, j)]) / dt,
                    provenance: Provenance::OnTrajectory {
                        source,
                        step: k as u32,
                        i: i as u16,
                        j: j as u16,
                    },
                });
            }
        }
    }
    StencilDataset::new(samples, Some((lo, hi)))
}

/// Labels designed stencils with the exact operator (identical to one Euler
/// step on an embedding field, divided by dt). Non-finite stencils or labels
/// are dropped; the dropped count is returned alongside.
pub fn label_synthetic(
    stencils: &[Stencil],
    system: &PdeSystem,
    cell_spacing: f64,
    family: SyntheticFamily,
) -> (StencilDataset, usize) {
    let mut samples = Vec::with_capacity(stencils.len());
    let mut dropped = 0;
    for s in stencils {
        if s.0.iter().any(|v| !v.is_finite()) {
            dropped += 1;
            continue;
        }
        match rhs_stencil(system, s, cell_spacing) {
            Ok(label) => samples.push(StencilSample {
                input: *s,
                label,
                provenance: Provenance::Synthetic { family },
            }),
            Err(_) => dropped += 1,
        }
    }
    (
        StencilDataset {
            samples,
            range: None,
        },
        dropped,
    )
}

/// Keeps `target` samples on a regular lattice over the flat (step, cell)
/// index with a seeded phase offset, preserving order. The range is the
/// parent's, not recomputed from the subset.
pub fn downsample_uniform(ds: &StencilDataset, target: usize, seed: u64) -> Result<StencilDataset> {
    let count = ds.count();
    if target > count {
        return Err(Error::TargetTooLarge { target, count });
    }
    if target == 0 {
        return Ok(StencilDataset {
            samples: Vec::new(),
            range: ds.range,
        });
    }
    let stride = count as f64 / target as f64;
    let phase: f64 = ChaCha8Rng::seed_from_u64(seed).gen::<f64>() * stride;
    let samples = (0..target)
        .map(|q| {
            let idx = (phase + q as f64 * stride).floor() as usize;
            ds.samples[idx.min(count - 1)]
        })
        .collect();
    Ok(StencilDataset {
        samples,
        range: ds.range,
    })
}

/// Union preserving order and provenance; range is the hull of the inputs'
/// on-trajectory ranges.
pub fn concat(a: &StencilDataset, b: &StencilDataset) -> StencilDataset {
    let mut samples = Vec::with_capacity(a.count() + b.count());
    samples.extend_from_slice(&a.samples);
    samples.extend_from_slice(&b.samples);
    let range = match (a.range, b.range) {
        (Some((alo, ahi)), Some((blo, bhi))) => Some((alo.min(blo), ahi.max(bhi))),
        (r, None) | (None, r) => r,
    };
    StencilDataset { samples, range }
}

/// Provenance runs for the file header: dense harvest blocks compress to a
/// shape descriptor, arbitrary cell lists stay explicit, synthetic runs are
/// a count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum ProvBlock {
    Dense {
        source: TrajectorySource,
        start_step: u32,
        n_steps: u32,
        n: u16,
    },
    Cells {
        source: TrajectorySource,
        cells: Vec<(u32, u16, u16)>,
    },
    Synthetic {
        family: SyntheticFamily,
        count: usize,
    },
}

fn provenance_blocks(samples: &[StencilSample]) -> Vec<ProvBlock> {
    let mut blocks = Vec::new();
    let mut z = 0;
    while z < samples.len() {
        match samples[z].provenance {
            Provenance::Synthetic { family } => {
                let mut count = 0;
                while z < samples.len()
                    && samples[z].provenance == (Provenance::Synthetic { family })
                {
                    count += 1;
                    z += 1;
                }
                blocks.push(ProvBlock::Synthetic { family, count });
            }
            Provenance::OnTrajectory { source, .. } => {
                let mut cells = Vec::new();
                while z < samples.len() {
                    match samples[z].provenance {
                        Provenance::OnTrajectory {
                            source: s2,
                            step,
                            i,
                            j,
                        } if s2 == source => {
                            cells.push((step, i, j));
                            z += 1;
                        }
                        _ => break,
                    }
                }
                blocks.push(compress_cells(source, cells));
            }
        }
    }
    blocks
}

/// Recognizes a full row-major lattice (whole transitions, every cell) and
/// stores it as a Dense block.
fn compress_cells(source: TrajectorySource, cells: Vec<(u32, u16, u16)>) -> ProvBlock {
    let n = cells.iter().map(|c| c.2).max().unwrap_or(0) as usize + 1;
    let per_step = n * n;
    let dense = cells.len() % per_step == 0
        && cells[0].1 == 0
        && cells[0].2 == 0
        && cells.iter().enumerate().all(|(t, &(step, i, j))| {
            step == cells[0].0 + (t / per_step) as u32
                && i as usize == (t % per_step) / n
                && j as usize == t % n
        });
    if dense && !cells.is_empty() {
        ProvBlock::Dense {
            source,
            start_step: cells[0].0,
            n_steps: (cells.len() / per_step) as u32,
            n: n as u16,
        }
    } else {
        ProvBlock::Cells { source, cells }
    }
}

fn expand_blocks(blocks: &[ProvBlock]) -> Vec<Provenance> {
    let mut out = Vec::new();
    for b in blocks {
        match b {
            ProvBlock::Dense {
                source,
                start_step,
                n_steps,
                n,
            } => {
                for step in *start_step..start_step + n_steps {
                    for i in 0..*n {
                        for j in 0..*n {
                            out.push(Provenance::OnTrajectory {
                                source: *source,
                                step,
                                i,
                                j,
                            });
                        }
                    }
                }
            }
            ProvBlock::Cells { source, cells } => {
                for &(step, i, j) in cells {
                    out.push(Provenance::OnTrajectory {
                        source: *source,
                        step,
                        i,
                        j,
                    });
                }
            }
            ProvBlock::Synthetic { family, count } => {
                for _ in 0..*count {
                    out.push(Provenance::Synthetic { family: *family });
                }
            }
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    m: usize,
    count: usize,
    range: Option<(f64, f64)>,
    provenance_summary: BTreeMap<String, usize>,
    provenance: Vec<ProvBlock>,
    seeds: BTreeMap<String, u64>,
}

/// Single-file format: one compact JSON header line, then a flat
/// little-endian float64 payload of shape (count, m+1).
pub fn save_dataset(path: &Path, ds: &StencilDataset, seeds: &BTreeMap<String, u64>) -> Result<()> {
    let header = DatasetHeader {
        m: STENCIL_LEN,
        count: ds.count(),
        range: ds.range,
        provenance_summary: ds.provenance_histogram(),
        provenance: provenance_blocks(&ds.samples),
        seeds: seeds.clone(),
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for s in &ds.samples {
        write_f64s(&mut w, s.input.0.iter().copied())?;
        write_f64s(&mut w, [s.label])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<(StencilDataset, BTreeMap<String, u64>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header_line = String::new();
    r.read_line(&mut header_line)?;
    let header: DatasetHeader = serde_json::from_str(&header_line)?;
    if header.m != STENCIL_LEN {
        return Err(Error::MalformedFile(format!(
            "dataset has stencil length {}, expected {STENCIL_LEN}",
            header.m
        )));
    }
    let provenance = expand_blocks(&header.provenance);
    if provenance.len() != header.count {
        return Err(Error::MalformedFile(format!(
            "provenance covers {} samples, header says {}",
            provenance.len(),
            header.count
        )));
    }
    let values = read_f64s(&mut r, header.count * (STENCIL_LEN + 1))?;
    let samples = provenance
        .into_iter()
        .enumerate()
        .map(|(z, prov)| {
            let row = &values[z * (STENCIL_LEN + 1)..(z + 1) * (STENCIL_LEN + 1)];
            StencilSample {
                input: Stencil(row[..STENCIL_LEN].try_into().unwrap()),
                label: row[STENCIL_LEN],
                provenance: prov,
            }
        })
        .collect();
    Ok((
        StencilDataset {
            samples,
            range: header.range,
        },
        header.seeds,
    ))
}

/// CLI-facing dataset summary.
pub fn summary_json(ds: &StencilDataset) -> serde_json::Value {
    serde_json::json!({
        "count": ds.count(),
        "range": ds.range,
        "provenance": ds.provenance_histogram(),
    })
}
