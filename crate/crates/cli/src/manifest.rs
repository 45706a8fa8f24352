//! The run manifest: config hash, the complete seed table, and the planned
//! artifact inventory. It is a pure function of the resolved config (no
//! timestamps, no machine state), so reruns rewrite identical bytes and
//! every output file is traceable to the config hash and a named seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Experiment, RawConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Serialize)]
pub struct SeedTable {
    pub master: u64,
    /// GP seed of the 10-step run per (system, D) cell.
    pub short_run_gp: BTreeMap<String, u64>,
    /// GP seed of the full run per (system, D) cell.
    pub full_run_gp: BTreeMap<String, u64>,
    /// Design-stream seed per (system, D, strategy).
    pub design: BTreeMap<String, u64>,
    pub train: Vec<u64>,
    pub eval_ics: Vec<u64>,
}

#[derive(Debug, Serialize)]
pub struct ArtifactPlan {
    pub trajectories: Vec<String>,
    pub datasets: Vec<String>,
    pub models: Vec<String>,
    pub reports: Vec<String>,
    pub summaries: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub config_hash: String,
    pub config: RawConfig,
    pub seeds: SeedTable,
    /// Paths relative to output_dir.
    pub artifacts: ArtifactPlan,
}

fn rel(exp: &Experiment, path: &Path) -> String {
    path.strip_prefix(&exp.output_dir)
        .expect("artifact paths live under output_dir")
        .to_string_lossy()
        .into_owned()
}

pub fn build(exp: &Experiment) -> Manifest {
    let mut short_run_gp = BTreeMap::new();
    let mut full_run_gp = BTreeMap::new();
    let mut design = BTreeMap::new();
    let mut trajectories = Vec::new();
    let mut datasets = Vec::new();
    let mut models = Vec::new();
    let mut reports = Vec::new();
    let mut summaries = Vec::new();

    for si in 0..exp.systems.len() {
        for di in 0..exp.diffusion_sweep().len() {
            let cell = exp.cell_tag(si, di);
            short_run_gp.insert(cell.clone(), exp.short_gp_seed(si, di));
            full_run_gp.insert(cell.clone(), exp.full_gp_seed(si, di));
            for which in [exp.short_traj_path(si, di), exp.full_traj_path(si, di)] {
                trajectories.push(rel(exp, &which));
                trajectories.push(rel(exp, &which.with_extension("json")));
            }
            for &strat in &exp.strategies {
                design.insert(format!("{cell}:{strat}"), exp.design_seed(si, di, strat));
                datasets.push(rel(exp, &exp.dataset_path(si, di, strat)));
                for &tseed in &exp.raw.train.seeds {
                    models.push(rel(exp, &exp.model_path(si, di, strat, tseed)));
                    models.push(rel(exp, &exp.train_log_path(si, di, strat, tseed)));
                    let report = exp.report_path(si, di, strat, tseed);
                    reports.push(rel(exp, &report));
                    reports.push(rel(exp, &report.with_extension("json")));
                }
            }
        }
        summaries.push(rel(exp, &exp.summary_path(si)));
    }
    summaries.push(rel(exp, &exp.runs_csv_path()));

    Manifest {
        config_hash: exp.config_hash.clone(),
        config: exp.raw.clone(),
        seeds: SeedTable {
            master: exp.raw.master_seed,
            short_run_gp,
            full_run_gp,
            design,
            train: exp.raw.train.seeds.clone(),
            eval_ics: exp.raw.eval.ic_seeds.clone(),
        },
        artifacts: ArtifactPlan {
            trajectories,
            datasets,
            models,
            reports,
            summaries,
        },
    }
}

/// Creates the output tree and writes manifest.json.
pub fn write(exp: &Experiment) -> CliResult<()> {
    for sub in ["trajectories", "datasets", "models", "reports", "summary"] {
        let dir: PathBuf = exp.output_dir.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| CliError::Core {
            context: format!("creating {}", dir.display()),
            source: e.into(),
        })?;
    }
    let manifest = build(exp);
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Core {
        context: "serializing manifest".into(),
        source: e.into(),
    })?;
    text.push('\n');
    std::fs::write(exp.manifest_path(), text).map_err(|e| CliError::Core {
        context: "writing manifest.json".into(),
        source: e.into(),
    })?;
    Ok(())
}
