//! Closed-loop rollouts of a stencil operator and their evaluation against
//! the reference solver: per-step log10 RMSE curves over a set of held-out
//! initial conditions, with divergence tracked rather than fatal.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gp::{sample_field, GpSpec};
use crate::grid::{BoundaryCondition, Field2D, GridSpec};
use crate::model::TrainedEmulator;
use crate::pde::{rhs_stencil, simulate, stencil_extract, PdeSystem, TimeSpec, Trajectory, STENCIL_LEN};

/// Anything that maps a field to a per-cell time derivative. The emulator
/// and the exact discrete operator implement this, so rollout code and its
/// oracle tests share one path.
pub trait StencilOperator {
    fn time_derivative(&self, field: &Field2D) -> Array2<f64>;
}

/// The exact finite-difference right-hand side, as an operator. Stepping
/// with it reproduces the reference solver bit for bit.
pub struct ExactOperator<'a> {
    pub system: &'a PdeSystem,
}

impl StencilOperator for ExactOperator<'_> {
    fn time_derivative(&self, field: &Field2D) -> Array2<f64> {
        let n = field.n();
        let dx = field.grid.cell_spacing();
        let mut out = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                let s = stencil_extract(field, i, j);
                // Non-finite values surface through the rollout's divergence
                // handling, not as an error here.
                out[(i, j)] = match rhs_stencil(self.system, &s, dx) {
                    Ok(v) => v,
                    Err(_) => f64::NAN,
                };
            }
        }
        out
    }
}

impl StencilOperator for TrainedEmulator {
    fn time_derivative(&self, field: &Field2D) -> Array2<f64> {
        let n = field.n();
        let mut inputs = Array2::zeros((n * n, STENCIL_LEN));
        for i in 0..n {
            for j in 0..n {
                let s = stencil_extract(field, i, j);
                inputs
                    .row_mut(i * n + j)
                    .iter_mut()
                    .zip(&s.0)
                    .for_each(|(o, &v)| *o = v);
            }
        }
        let pred = self.forward_batch(&inputs);
        Array2::from_shape_vec((n, n), pred.to_vec()).expect("n*n predictions")
    }
}

/// A closed-loop rollout. `snapshots` always starts with the initial field;
/// if the state left the finite range at step k, `diverged_at == Some(k)`
/// and snapshots stop before step k.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub snapshots: Vec<Field2D>,
    pub diverged_at: Option<usize>,
}

impl Rollout {
    pub fn completed_steps(&self) -> usize {
        self.snapshots.len() - 1
    }
}

/// Explicit Euler under an arbitrary operator. Timestamps follow the same
/// t0 + k*dt rule as the reference solver.
pub fn operator_rollout<O: StencilOperator>(
    initial: &Field2D,
    op: &O,
    time: &TimeSpec,
) -> Rollout {
    let mut snapshots = Vec::with_capacity(time.n_steps + 1);
    let mut current = initial.clone();
    current.time = time.t0;
    snapshots.push(current.clone());
    for step in 1..=time.n_steps {
        let deriv = op.time_derivative(&current);
        let mut next = current.clone();
        next.values.zip_mut_with(&deriv, |u, &f| *u += time.dt * f);
        next.time = time.t0 + step as f64 * time.dt;
        if next.first_non_finite().is_some() {
            return Rollout {
                snapshots,
                diverged_at: Some(step),
            };
        }
        snapshots.push(next.clone());
        current = next;
    }
    Rollout {
        snapshots,
        diverged_at: None,
    }
}

pub const LOG_RMSE_FLOOR: f64 = -16.0;

/// Per-step log10 RMSE against the reference, for steps k = 1..=horizon.
/// Exact agreement clamps to the floor; steps at or past divergence are the
/// +infinity sentinel. The rollout may be shorter than the reference (it
/// truncates on divergence) but never longer, and both must live on the
/// same grid.
pub fn log_rmse_curve(reference: &Trajectory, rollout: &Rollout) -> Result<Vec<f64>> {
    let horizon = reference.n_transitions();
    if rollout.snapshots.len() > reference.snapshots.len() {
        return Err(Error::ShapeMismatch {
            context: format!(
                "rollout has {} snapshots but the reference only {}",
                rollout.snapshots.len(),
                reference.snapshots.len()
            ),
        });
    }
    let ref_n = reference.snapshots[0].n();
    if rollout.snapshots.iter().any(|s| s.n() != ref_n) {
        return Err(Error::ShapeMismatch {
            context: format!("rollout grid differs from the {ref_n}x{ref_n} reference"),
        });
    }
    let mut curve = Vec::with_capacity(horizon);
    for k in 1..=horizon {
        if k >= rollout.snapshots.len() {
            curve.push(f64::INFINITY);
            continue;
        }
        let r = &reference.snapshots[k].values;
        let e = &rollout.snapshots[k].values;
        let mse = r
            .iter()
            .zip(e.iter())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<f64>()
            / r.len() as f64;
        let rmse = mse.sqrt();
        if rmse.is_finite() {
            curve.push(rmse.log10().max(LOG_RMSE_FLOOR));
        } else {
            curve.push(f64::INFINITY);
        }
    }
    Ok(curve)
}

/// Aggregated evaluation over a set of held-out initial conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// One curve per initial condition, each `horizon` long, +inf past
    /// divergence.
    pub per_ic: Vec<Vec<f64>>,
    pub ic_seeds: Vec<u64>,
    pub diverged_at: Vec<Option<usize>>,
    /// Per-step mean over the finite entries.
    pub mean: Vec<f64>,
    /// Per-step 2x sample standard deviation over the finite entries
    /// (zero when fewer than two survive).
    pub band: Vec<f64>,
    /// Per-step count of finite entries.
    pub n_finite: Vec<usize>,
}

impl EvalReport {
    pub fn horizon(&self) -> usize {
        self.mean.len()
    }

    pub fn final_mean_log_rmse(&self) -> f64 {
        *self.mean.last().expect("non-empty horizon")
    }
}

fn aggregate(per_ic: &[Vec<f64>], horizon: usize) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let mut mean = Vec::with_capacity(horizon);
    let mut band = Vec::with_capacity(horizon);
    let mut n_finite = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let finite: Vec<f64> = per_ic
            .iter()
            .map(|c| c[k])
            .filter(|v| v.is_finite())
            .collect();
        let n = finite.len();
        n_finite.push(n);
        if n == 0 {
            mean.push(f64::INFINITY);
            band.push(0.0);
            continue;
        }
        // All-equal entries short-circuit so a degenerate IC set reports an
        // exactly-zero band instead of fl(n*v)/n rounding noise.
        if finite.windows(2).all(|w| w[0] == w[1]) {
            mean.push(finite[0]);
            band.push(0.0);
            continue;
        }
        let mu = finite.iter().sum::<f64>() / n as f64;
        mean.push(mu);
        let var = finite.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n - 1) as f64;
        band.push(2.0 * var.sqrt());
    }
    (mean, band, n_finite)
}

/// Rolls the operator out against the reference solver from one fresh GP
/// initial condition per seed in `ic_seeds` and aggregates the per-step
/// log10 RMSE. Diverged rollouts stay in the report as +inf tails.
pub fn evaluate_operator_with_seeds<O: StencilOperator>(
    op: &O,
    system: &PdeSystem,
    grid: &GridSpec,
    gp: &GpSpec,
    time: &TimeSpec,
    ic_seeds: &[u64],
) -> Result<EvalReport> {
    if ic_seeds.is_empty() || time.n_steps == 0 {
        return Err(Error::InvalidSpec(
            "evaluation needs at least one IC and one step".into(),
        ));
    }
    let periodic = system.boundary == BoundaryCondition::Periodic;
    let mut per_ic = Vec::with_capacity(ic_seeds.len());
    let mut diverged_at = Vec::with_capacity(ic_seeds.len());
    for &seed in ic_seeds {
        let init = sample_field(&gp.with_seed(seed), grid, periodic)?;
        let reference = simulate(&init, system, time)?;
        let rolled = operator_rollout(&init, op, time);
        diverged_at.push(rolled.diverged_at);
        per_ic.push(log_rmse_curve(&reference, &rolled)?);
    }
    let (mean, band, n_finite) = aggregate(&per_ic, time.n_steps);
    Ok(EvalReport {
        per_ic,
        ic_seeds: ic_seeds.to_vec(),
        diverged_at,
        mean,
        band,
        n_finite,
    })
}

/// Convenience wrapper deriving `n_ics` IC seeds from a single master seed
/// via the documented counter split.
pub fn evaluate_operator<O: StencilOperator>(
    op: &O,
    system: &PdeSystem,
    grid: &GridSpec,
    gp: &GpSpec,
    time: &TimeSpec,
    n_ics: usize,
    eval_seed: u64,
) -> Result<EvalReport> {
    let seeds: Vec<u64> = (0..n_ics)
        .map(|ic| crate::design::split_seed(eval_seed, ic as u64))
        .collect();
    evaluate_operator_with_seeds(op, system, grid, gp, time, &seeds)
}

#[derive(Serialize)]
struct ReportSidecar<'a> {
    horizon: usize,
    n_ics: usize,
    ic_seeds: &'a [u64],
    diverged_at: &'a [Option<usize>],
    n_finite_final: usize,
    /// None when every IC diverged before the final step.
    final_mean_log_rmse: Option<f64>,
}

/// Writes the per-step curves as CSV (columns: step, mean, band, one column
/// per IC; +inf prints as "inf") plus a JSON sidecar with the seeds and
/// divergence summary.
pub fn write_report(csv_path: &Path, report: &EvalReport) -> Result<()> {
    let mut w = BufWriter::new(File::create(csv_path)?);
    write!(w, "step,mean_log_rmse,band")?;
    for ic in 0..report.per_ic.len() {
        write!(w, ",ic{ic}")?;
    }
    writeln!(w)?;
    for k in 0..report.horizon() {
        write!(w, "{},{},{}", k + 1, report.mean[k], report.band[k])?;
        for curve in &report.per_ic {
            write!(w, ",{}", curve[k])?;
        }
        writeln!(w)?;
    }
    w.flush()?;

    let final_mean = report.final_mean_log_rmse();
    let sidecar = ReportSidecar {
        horizon: report.horizon(),
        n_ics: report.per_ic.len(),
        ic_seeds: &report.ic_seeds,
        diverged_at: &report.diverged_at,
        n_finite_final: *report.n_finite.last().expect("non-empty"),
        final_mean_log_rmse: final_mean.is_finite().then_some(final_mean),
    };
    let json_path = csv_path.with_extension("json");
    let mut jw = BufWriter::new(File::create(json_path)?);
    serde_json::to_writer_pretty(&mut jw, &sidecar)?;
    jw.flush()?;
    Ok(())
}
