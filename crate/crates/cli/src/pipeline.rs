//! The experiment pipeline. Each phase expands to independent jobs keyed by
//! (system, D, strategy, seed); jobs run in parallel under rayon, write only
//! their own output paths, and are skipped when those paths already exist
//! (unless --force). Dry runs print the plan instead.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::Deserialize;

use nse_core::design::{build_mixed, build_pure_from, MixtureSpec, StrategyId};
use nse_core::gp::sample_field;
use nse_core::grid::BoundaryCondition;
use nse_core::io::{load_trajectory, save_trajectory, TrajectoryMeta};
use nse_core::model::{load_model, save_model};
use nse_core::pde::{simulate, stability_report};
use nse_core::rollout::{evaluate_operator_with_seeds, write_report};
use nse_core::train::train;

use crate::config::{d_tag, Experiment};
use crate::error::{in_context, CliError, CliResult};
use crate::manifest;

pub struct Ctx<'a> {
    pub exp: &'a Experiment,
    pub force: bool,
    pub dry_run: bool,
}

struct Job<'a> {
    label: String,
    outputs: Vec<PathBuf>,
    run: Box<dyn Fn() -> CliResult<()> + Send + Sync + 'a>,
}

impl Job<'_> {
    fn cached(&self) -> bool {
        !self.outputs.is_empty() && self.outputs.iter().all(|p| p.exists())
    }
}

/// Plan lines go to stdout; a reader that closes early (`nse ... | head`)
/// must not turn into a panic, so write errors are dropped.
fn plan_line(args: std::fmt::Arguments) {
    let _ = writeln!(std::io::stdout(), "{args}");
}

fn execute(ctx: &Ctx, phase: &str, jobs: Vec<Job>) -> CliResult<()> {
    if ctx.dry_run {
        for j in &jobs {
            let note = if !ctx.force && j.cached() { " (cached)" } else { "" };
            plan_line(format_args!("[plan] {}{note}", j.label));
        }
        return Ok(());
    }
    let todo: Vec<&Job> = jobs
        .iter()
        .filter(|j| ctx.force || !j.cached())
        .collect();
    eprintln!(
        "{phase}: {} job(s), {} cached",
        todo.len(),
        jobs.len() - todo.len()
    );
    let mut results: Vec<(usize, CliError)> = todo
        .par_iter()
        .enumerate()
        .filter_map(|(idx, job)| {
            let started = Instant::now();
            match (job.run)() {
                Ok(()) => {
                    eprintln!("done: {} ({:.1}s)", job.label, started.elapsed().as_secs_f64());
                    None
                }
                Err(e) => Some((idx, e)),
            }
        })
        .collect();
    // Deterministic failure choice when several jobs fail in parallel.
    results.sort_by_key(|(idx, _)| *idx);
    match results.into_iter().next() {
        Some((_, e)) => Err(e),
        None => Ok(()),
    }
}

/// Runs and serializes the short and full reference simulations per
/// (system, D) cell.
pub fn cmd_simulate(ctx: &Ctx) -> CliResult<()> {
    let exp = ctx.exp;
    let mut jobs = Vec::new();
    for si in 0..exp.systems.len() {
        for (di, &d) in exp.diffusion_sweep().iter().enumerate() {
            let label = format!("simulate {}", exp.cell_tag(si, di));
            let short_path = exp.short_traj_path(si, di);
            let full_path = exp.full_traj_path(si, di);
            let outputs = vec![
                short_path.clone(),
                short_path.with_extension("json"),
                full_path.clone(),
                full_path.with_extension("json"),
            ];
            let job_label = label.clone();
            let run = Box::new(move || -> CliResult<()> {
                let system = exp.system_for(si, d)?;
                for w in stability_report(&system, &exp.grid, exp.short_time.dt) {
                    eprintln!("warning: {job_label}: {w}");
                }
                let periodic = system.boundary == BoundaryCondition::Periodic;
                for (path, time, seed, role) in [
                    (
                        &short_path,
                        &exp.short_time,
                        exp.short_gp_seed(si, di),
                        "short",
                    ),
                    (&full_path, &exp.full_time, exp.full_gp_seed(si, di), "full"),
                ] {
                    let wrap = |e| in_context(format!("{job_label} ({role} run)"))(e);
                    let init = sample_field(&exp.gp.with_seed(seed), &exp.grid, periodic)
                        .map_err(wrap)?;
                    let traj = simulate(&init, &system, time).map_err(wrap)?;
                    let meta = TrajectoryMeta {
                        system: system.clone(),
                        time: *time,
                        seeds: BTreeMap::from([("ic".to_string(), seed)]),
                    };
                    save_trajectory(path, &traj, &meta).map_err(wrap)?;
                }
                Ok(())
            });
            jobs.push(Job {
                label,
                outputs,
                run,
            });
        }
    }
    execute(ctx, "simulate", jobs)
}

/// Builds one dataset file per (system, D, strategy) from the stored
/// trajectories, validating the sample budgets.
pub fn cmd_build_datasets(ctx: &Ctx) -> CliResult<()> {
    let exp = ctx.exp;
    let mut jobs = Vec::new();
    for si in 0..exp.systems.len() {
        for (di, &d) in exp.diffusion_sweep().iter().enumerate() {
            for &strat in &exp.strategies {
                let label = format!("build {} {strat}", exp.cell_tag(si, di));
                let out = exp.dataset_path(si, di, strat);
                let outputs = vec![out.clone()];
                let job_label = label.clone();
                let run = Box::new(move || -> CliResult<()> {
                    let system = exp.system_for(si, d)?;
                    let design_seed = exp.design_seed(si, di, strat);
                    let mut seeds = BTreeMap::from([("design".to_string(), design_seed)]);
                    let built = match strat {
                        StrategyId::Pure(pure) => {
                            let traj_path = exp.short_traj_path(si, di);
                            let (short, meta) = load_trajectory(&traj_path).map_err(in_context(
                                format!("{job_label}: loading {} (run simulate first)", traj_path.display()),
                            ))?;
                            if meta.system != system {
                                return Err(CliError::Config(format!(
                                    "{job_label}: stored trajectory was produced by a different \
                                     system; rerun simulate --force"
                                )));
                            }
                            if let Some(&ic) = meta.seeds.get("ic") {
                                seeds.insert("short-run-ic".to_string(), ic);
                            }
                            let range = exp.raw.strategies.random_range.map(|[lo, hi]| (lo, hi));
                            build_pure_from(
                                pure,
                                &short,
                                &system,
                                exp.short_time.dt,
                                exp.raw.budgets.pure_stencils,
                                design_seed,
                                range,
                            )
                            .map_err(in_context(job_label.clone()))?
                        }
                        StrategyId::Mixed(augment, sequence) => {
                            let traj_path = exp.full_traj_path(si, di);
                            let (full, meta) = load_trajectory(&traj_path).map_err(in_context(
                                format!("{job_label}: loading {} (run simulate first)", traj_path.display()),
                            ))?;
                            if meta.system != system {
                                return Err(CliError::Config(format!(
                                    "{job_label}: stored trajectory was produced by a different \
                                     system; rerun simulate --force"
                                )));
                            }
                            if let Some(&ic) = meta.seeds.get("ic") {
                                seeds.insert("full-run-ic".to_string(), ic);
                            }
                            let spec = MixtureSpec::new(0.5, augment, sequence)
                                .map_err(in_context(job_label.clone()))?;
                            build_mixed(
                                &spec,
                                &full,
                                &system,
                                &exp.gp,
                                &exp.full_time,
                                exp.raw.budgets.mixed_total / 2,
                                design_seed,
                            )
                            .map_err(in_context(job_label.clone()))?
                        }
                    };
                    if built.dropped > 0 {
                        eprintln!(
                            "warning: {job_label}: {} designed stencils dropped for \
                             non-finite labels",
                            built.dropped
                        );
                    }
                    let want = match strat {
                        StrategyId::Pure(_) => exp.raw.budgets.pure_stencils,
                        StrategyId::Mixed(..) => exp.raw.budgets.mixed_total,
                    };
                    let got = built.dataset.count();
                    if got != want {
                        return Err(CliError::Core {
                            context: job_label.clone(),
                            source: nse_core::Error::InvalidSpec(format!(
                                "dataset holds {got} samples, budget requires {want}"
                            )),
                        });
                    }
                    if let StrategyId::Mixed(..) = strat {
                        let half = exp.raw.budgets.mixed_total / 2;
                        let on_traj = built
                            .dataset
                            .provenance_histogram()
                            .get("on-trajectory")
                            .copied()
                            .unwrap_or(0);
                        if on_traj != half {
                            return Err(CliError::Core {
                                context: job_label.clone(),
                                source: nse_core::Error::InvalidSpec(format!(
                                    "mixed dataset has {on_traj} on-trajectory samples, \
                                     expected {half}"
                                )),
                            });
                        }
                    }
                    nse_core::dataset::save_dataset(&out, &built.dataset, &seeds)
                        .map_err(in_context(job_label.clone()))
                });
                jobs.push(Job {
                    label,
                    outputs,
                    run,
                });
            }
        }
    }
    execute(ctx, "build-datasets", jobs)
}

/// Trains one emulator per (system, D, strategy, train seed); writes the
/// model and its per-epoch loss log.
pub fn cmd_train(ctx: &Ctx) -> CliResult<()> {
    let exp = ctx.exp;
    let mut jobs = Vec::new();
    for si in 0..exp.systems.len() {
        for di in 0..exp.diffusion_sweep().len() {
            for &strat in &exp.strategies {
                for &tseed in &exp.raw.train.seeds {
                    let label = format!("train {} {strat} t{tseed}", exp.cell_tag(si, di));
                    let model_path = exp.model_path(si, di, strat, tseed);
                    let log_path = exp.train_log_path(si, di, strat, tseed);
                    let outputs = vec![model_path.clone(), log_path.clone()];
                    let job_label = label.clone();
                    let run = Box::new(move || -> CliResult<()> {
                        let ds_path = exp.dataset_path(si, di, strat);
                        let (ds, _) = nse_core::dataset::load_dataset(&ds_path).map_err(
                            in_context(format!(
                                "{job_label}: loading {} (run build-datasets first)",
                                ds_path.display()
                            )),
                        )?;
                        let cfg = exp.train_config(tseed);
                        let (model, log) =
                            train(&ds, &exp.arch, &cfg).map_err(in_context(job_label.clone()))?;
                        save_model(&model_path, &model)
                            .map_err(in_context(job_label.clone()))?;
                        log.write_csv(&log_path)
                            .map_err(in_context(job_label.clone()))?;
                        eprintln!(
                            "trained {job_label}: final normalized mse {:.3e}",
                            model.final_mse_normalized
                        );
                        Ok(())
                    });
                    jobs.push(Job {
                        label,
                        outputs,
                        run,
                    });
                }
            }
        }
    }
    execute(ctx, "train", jobs)
}

/// Rolls out every trained emulator against the reference solver on the
/// held-out GP initial conditions; writes per-curve CSV reports.
pub fn cmd_evaluate(ctx: &Ctx) -> CliResult<()> {
    let exp = ctx.exp;
    let mut jobs = Vec::new();
    for si in 0..exp.systems.len() {
        for (di, &d) in exp.diffusion_sweep().iter().enumerate() {
            for &strat in &exp.strategies {
                for &tseed in &exp.raw.train.seeds {
                    let label = format!("evaluate {} {strat} t{tseed}", exp.cell_tag(si, di));
                    let csv_path = exp.report_path(si, di, strat, tseed);
                    let outputs = vec![csv_path.clone(), csv_path.with_extension("json")];
                    let job_label = label.clone();
                    let run = Box::new(move || -> CliResult<()> {
                        let model_path = exp.model_path(si, di, strat, tseed);
                        let model = load_model(&model_path).map_err(in_context(format!(
                            "{job_label}: loading {} (run train first)",
                            model_path.display()
                        )))?;
                        let system = exp.system_for(si, d)?;
                        let report = evaluate_operator_with_seeds(
                            &model,
                            &system,
                            &exp.grid,
                            &exp.gp,
                            &exp.eval_time,
                            &exp.raw.eval.ic_seeds,
                        )
                        .map_err(in_context(job_label.clone()))?;
                        let diverged = report.diverged_at.iter().flatten().count();
                        if diverged > 0 {
                            eprintln!(
                                "warning: {job_label}: {diverged} of {} rollouts diverged",
                                report.per_ic.len()
                            );
                        }
                        write_report(&csv_path, &report).map_err(in_context(job_label.clone()))
                    });
                    jobs.push(Job {
                        label,
                        outputs,
                        run,
                    });
                }
            }
        }
    }
    execute(ctx, "evaluate", jobs)
}

#[derive(Deserialize)]
struct ReportSidecar {
    n_finite_final: usize,
    n_ics: usize,
    /// Absent when every rollout diverged before the final step.
    final_mean_log_rmse: Option<f64>,
}

/// Aggregates report sidecars into one summary table per system (rows:
/// strategy, columns: D, cell: final-step mean log-RMSE averaged over train
/// seeds) plus a long-form runs.csv with one row per trained emulator.
pub fn cmd_report(ctx: &Ctx) -> CliResult<()> {
    let exp = ctx.exp;
    if ctx.dry_run {
        for si in 0..exp.systems.len() {
            plan_line(format_args!(
                "[plan] summarize {} ({} strategies x {} D values)",
                exp.systems[si].name,
                exp.strategies.len(),
                exp.diffusion_sweep().len()
            ));
        }
        plan_line(format_args!("[plan] write runs.csv"));
        return Ok(());
    }

    let mut runs_rows = Vec::new();
    for si in 0..exp.systems.len() {
        let mut table = String::from("strategy");
        for &d in exp.diffusion_sweep() {
            table.push(',');
            table.push_str(&d_tag(d));
        }
        table.push('\n');
        for &strat in &exp.strategies {
            table.push_str(&strat.to_string());
            for (di, &d) in exp.diffusion_sweep().iter().enumerate() {
                let mut sum = 0.0f64;
                for &tseed in &exp.raw.train.seeds {
                    let sidecar_path = exp.report_path(si, di, strat, tseed).with_extension("json");
                    let text = std::fs::read_to_string(&sidecar_path).map_err(|e| {
                        CliError::Core {
                            context: format!(
                                "report: reading {} (run evaluate first)",
                                sidecar_path.display()
                            ),
                            source: e.into(),
                        }
                    })?;
                    let sidecar: ReportSidecar =
                        serde_json::from_str(&text).map_err(|e| CliError::Core {
                            context: format!("report: parsing {}", sidecar_path.display()),
                            source: e.into(),
                        })?;
                    let final_val = sidecar.final_mean_log_rmse.unwrap_or(f64::INFINITY);
                    sum += final_val;
                    runs_rows.push(format!(
                        "{},{},{strat},{tseed},{final_val},{},{}",
                        exp.systems[si].name,
                        d_tag(d),
                        sidecar.n_finite_final,
                        sidecar.n_ics
                    ));
                }
                let mean = sum / exp.raw.train.seeds.len() as f64;
                table.push(',');
                table.push_str(&format!("{mean}"));
            }
            table.push('\n');
        }
        let path = exp.summary_path(si);
        std::fs::write(&path, table).map_err(|e| CliError::Core {
            context: format!("report: writing {}", path.display()),
            source: e.into(),
        })?;
        eprintln!("wrote {}", path.display());
    }

    let mut runs = String::from(
        "system,diffusion,strategy,train_seed,final_mean_log_rmse,n_finite_final,n_ics\n",
    );
    for row in runs_rows {
        runs.push_str(&row);
        runs.push('\n');
    }
    let path = exp.runs_csv_path();
    std::fs::write(&path, runs).map_err(|e| CliError::Core {
        context: format!("report: writing {}", path.display()),
        source: e.into(),
    })?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

/// The whole pipeline in order.
pub fn cmd_full(ctx: &Ctx) -> CliResult<()> {
    cmd_simulate(ctx)?;
    cmd_build_datasets(ctx)?;
    cmd_train(ctx)?;
    cmd_evaluate(ctx)?;
    cmd_report(ctx)
}

/// Shared preamble for every mutating command: create the output tree and
/// write the manifest. Skipped on dry runs.
///
/// An output_dir is bound to one config: cached artifacts are only reusable
/// for the hash recorded in its manifest, so a hash mismatch aborts unless
/// --force (which rebuilds everything anyway).
pub fn prepare(ctx: &Ctx) -> CliResult<()> {
    if ctx.dry_run {
        return Ok(());
    }
    let path = ctx.exp.manifest_path();
    if !ctx.force && path.exists() {
        #[derive(Deserialize)]
        struct Existing {
            config_hash: String,
        }
        let stored = std::fs::read_to_string(&path)
            .ok()
            .and_then(|text| serde_json::from_str::<Existing>(&text).ok());
        match stored {
            Some(m) if m.config_hash == ctx.exp.config_hash => {}
            _ => {
                return Err(CliError::Config(format!(
                    "{} holds artifacts for a different config; rerun with --force to \
                     rebuild them, or point output_dir elsewhere",
                    ctx.exp.output_dir.display()
                )))
            }
        }
    }
    manifest::write(ctx.exp)
}
