//! Experiment configuration. The TOML schema defaults to the full study
//! protocol, so an empty file (or no --config at all) reproduces it; any
//! field can be overridden. Loading resolves the raw file into core types,
//! validates cross-field invariants, and derives the per-job seed table.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use nse_core::design::{split_seed, StrategyId};
use nse_core::gp::GpSpec;
use nse_core::grid::GridSpec;
use nse_core::model::{Activation, EmulatorArchitecture};
use nse_core::pde::{AdvectionScheme, PdeKind, PdeSystem, TimeSpec};
use nse_core::train::{BatchMode, TrainConfig};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawConfig {
    /// Root seed; every RNG stream in the run derives from it.
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub grid: GridSection,
    pub time: TimeSection,
    pub gp: GpSection,
    pub systems: SystemsSection,
    pub budgets: BudgetsSection,
    pub strategies: StrategiesSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

impl Default for RawConfig {
    fn default() -> Self {
        Self {
            master_seed: 7_000,
            output_dir: PathBuf::from("runs/experiment"),
            grid: GridSection::default(),
            time: TimeSection::default(),
            gp: GpSection::default(),
            systems: SystemsSection::default(),
            budgets: BudgetsSection::default(),
            strategies: StrategiesSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n: usize,
    pub length: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { n: 32, length: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSection {
    pub dt: f64,
    pub short_steps: usize,
    pub full_steps: usize,
    /// Rollout-evaluation horizon, in steps.
    pub eval_steps: usize,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            short_steps: 10,
            full_steps: 1_000,
            eval_steps: 1_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpSection {
    pub mean: f64,
    /// Kernel length scale as a fraction of the domain length.
    pub length_scale: f64,
    pub variance: f64,
}

impl Default for GpSection {
    fn default() -> Self {
        Self {
            mean: 0.0,
            length_scale: 0.1,
            variance: 0.25,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemsSection {
    /// PDE families in the grid: "allen-cahn", "advection-diffusion",
    /// "burgers", "burgers-linear".
    pub kinds: Vec<String>,
    /// Constant velocity for the linear advective systems.
    pub advection_velocity: [f64; 2],
    /// Diffusion (or viscosity) sweep applied to every system.
    pub diffusion_sweep: Vec<f64>,
    /// Transport discretization: "upwind" or "central".
    pub scheme: String,
}

impl Default for SystemsSection {
    fn default() -> Self {
        Self {
            kinds: vec![
                "allen-cahn".into(),
                "advection-diffusion".into(),
                "burgers".into(),
            ],
            advection_velocity: [1.0, 1.0],
            diffusion_sweep: vec![5e-4, 1e-3, 2e-3],
            scheme: "upwind".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetsSection {
    /// Per-dataset sample count for the pure strategies. Must equal
    /// n^2 x short_steps so the short-trajectory harvest hits it exactly.
    pub pure_stencils: usize,
    /// Total for the mixed strategies, split 1:1 between the downsampled
    /// full-run half and the augmentation half.
    pub mixed_total: usize,
}

impl Default for BudgetsSection {
    fn default() -> Self {
        Self {
            pure_stencils: 10_240,
            mixed_total: 20_480,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrategiesSection {
    pub ids: Vec<String>,
    /// Optional a-priori component range for the pure Random designs,
    /// replacing the short run's observed range.
    pub random_range: Option<[f64; 2]>,
}

impl Default for StrategiesSection {
    fn default() -> Self {
        Self {
            ids: StrategyId::ALL.iter().map(|s| s.to_string()).collect(),
            random_range: None,
        }
    }
}

/// Mini-batch size, or "full" for whole-dataset steps.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum BatchChoice {
    Size(usize),
    Name(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub hidden_width: usize,
    pub residual_blocks: usize,
    /// "tanh" or "gelu".
    pub activation: String,
    pub initial_lr: f64,
    pub epochs: usize,
    pub batch: BatchChoice,
    /// One emulator is trained per (system, D, strategy, seed).
    pub seeds: Vec<u64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            hidden_width: 64,
            residual_blocks: 2,
            activation: "tanh".into(),
            initial_lr: 0.01,
            epochs: 5_000,
            batch: BatchChoice::Name("full".into()),
            seeds: vec![1, 2, 3],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// GP seeds for the held-out rollout initial conditions. Exactly ten,
    /// and disjoint from every training-side seed.
    pub ic_seeds: Vec<u64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            ic_seeds: (9_000_001..=9_000_010).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SystemEntry {
    pub name: String,
    pub kind: PdeKind,
}

/// A fully validated experiment: resolved core types, parsed strategy list,
/// and the seed-derivation scheme.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub raw: RawConfig,
    pub config_hash: String,
    pub grid: GridSpec,
    pub short_time: TimeSpec,
    pub full_time: TimeSpec,
    pub eval_time: TimeSpec,
    /// Base field-sampler spec; per-use seeds are applied with `with_seed`.
    pub gp: GpSpec,
    pub systems: Vec<SystemEntry>,
    pub strategies: Vec<StrategyId>,
    pub scheme: AdvectionScheme,
    pub arch: EmulatorArchitecture,
    pub batch: BatchMode,
    pub output_dir: PathBuf,
}

// Seed derivation is counter-mode: the master seed is split once per role,
// then once per job counter within the role. Strategy counters come from the
// canonical catalog (StrategyId::ALL), not the enabled subset, so enabling
// fewer strategies or appending new ones never changes existing seeds.
const ROLE_SHORT_GP: u64 = 1;
const ROLE_FULL_GP: u64 = 2;
const ROLE_DESIGN: u64 = 3;
const CELL_STRIDE: u64 = 64;

fn canonical_strategy_index(id: StrategyId) -> u64 {
    StrategyId::ALL
        .iter()
        .position(|s| *s == id)
        .expect("catalog covers every id") as u64
}

impl Experiment {
    pub fn load(path: Option<&Path>, seed_override: Option<u64>) -> CliResult<Self> {
        let mut raw: RawConfig = match path {
            None => RawConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Config(format!("cannot read config {}: {e}", p.display()))
                })?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Config(format!("config {}: {e}", p.display())))?
            }
        };
        if let Some(seed) = seed_override {
            raw.master_seed = seed;
        }
        Self::resolve(raw)
    }

    pub fn resolve(raw: RawConfig) -> CliResult<Self> {
        let bad = |msg: String| CliError::Config(msg);

        let grid = GridSpec::new(raw.grid.n, raw.grid.length).map_err(|e| bad(e.to_string()))?;
        let short_time = TimeSpec::new(raw.time.dt, raw.time.short_steps, 0.0)
            .map_err(|e| bad(e.to_string()))?;
        let full_time = TimeSpec::new(raw.time.dt, raw.time.full_steps, 0.0)
            .map_err(|e| bad(e.to_string()))?;
        let eval_time = TimeSpec::new(raw.time.dt, raw.time.eval_steps, 0.0)
            .map_err(|e| bad(e.to_string()))?;
        if raw.time.short_steps < 1 || raw.time.full_steps < 1 || raw.time.eval_steps < 1 {
            return Err(bad("step counts must all be at least 1".into()));
        }
        let gp = GpSpec::new(raw.gp.mean, raw.gp.length_scale, raw.gp.variance, 0)
            .map_err(|e| bad(e.to_string()))?;

        if raw.systems.kinds.is_empty() {
            return Err(bad("systems.kinds must name at least one PDE system".into()));
        }
        let mut systems = Vec::new();
        for name in &raw.systems.kinds {
            let kind = match name.as_str() {
                "allen-cahn" => PdeKind::AllenCahn,
                "advection-diffusion" => PdeKind::AdvectionDiffusion,
                "burgers" => PdeKind::Burgers,
                "burgers-linear" => PdeKind::BurgersLinear,
                other => return Err(bad(format!("unknown system kind '{other}'"))),
            };
            systems.push(SystemEntry {
                name: name.clone(),
                kind,
            });
        }
        let names: BTreeSet<_> = systems.iter().map(|s| &s.name).collect();
        if names.len() != systems.len() {
            return Err(bad("systems.kinds contains duplicates".into()));
        }
        let scheme = match raw.systems.scheme.as_str() {
            "upwind" => AdvectionScheme::Upwind,
            "central" => AdvectionScheme::Central,
            other => return Err(bad(format!("unknown advection scheme '{other}'"))),
        };

        if raw.systems.diffusion_sweep.is_empty() {
            return Err(bad("diffusion_sweep must contain at least one value".into()));
        }
        for &d in &raw.systems.diffusion_sweep {
            if !(d > 0.0) || !d.is_finite() {
                return Err(bad(format!("diffusion values must be positive, got {d}")));
            }
        }
        let d_tags: BTreeSet<String> = raw.systems.diffusion_sweep.iter().map(|d| d_tag(*d)).collect();
        if d_tags.len() != raw.systems.diffusion_sweep.len() {
            return Err(bad("diffusion_sweep contains duplicate values".into()));
        }

        if raw.strategies.ids.is_empty() {
            return Err(bad("strategies.ids must name at least one strategy".into()));
        }
        let mut strategies = Vec::new();
        for id in &raw.strategies.ids {
            let parsed: StrategyId = id.parse().map_err(|e: nse_core::Error| bad(e.to_string()))?;
            if strategies.contains(&parsed) {
                return Err(bad(format!("strategy '{id}' listed twice")));
            }
            strategies.push(parsed);
        }
        if let Some([lo, hi]) = raw.strategies.random_range {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(bad(format!(
                    "random_range must be a finite [lo, hi] with lo < hi, got [{lo}, {hi}]"
                )));
            }
        }

        let n2 = raw.grid.n * raw.grid.n;
        let harvest = n2 * raw.time.short_steps;
        if raw.budgets.pure_stencils != harvest {
            return Err(bad(format!(
                "budgets.pure_stencils = {} but the short-trajectory harvest yields \
                 n^2 x short_steps = {harvest}; they must match",
                raw.budgets.pure_stencils
            )));
        }
        if raw.budgets.mixed_total % 2 != 0 {
            return Err(bad(format!(
                "budgets.mixed_total = {} must be even (1:1 split)",
                raw.budgets.mixed_total
            )));
        }
        let half = raw.budgets.mixed_total / 2;
        if half > n2 * raw.time.full_steps {
            return Err(bad(format!(
                "mixed_total/2 = {half} exceeds the full-run harvest of n^2 x full_steps = {}",
                n2 * raw.time.full_steps
            )));
        }
        let needs_burst = strategies.iter().any(|s| {
            matches!(
                s,
                StrategyId::Mixed(
                    nse_core::design::AugmentFamily::DiffInit
                        | nse_core::design::AugmentFamily::Extend,
                    _
                )
            )
        });
        if needs_burst && half % n2 != 0 {
            return Err(bad(format!(
                "mixed_total/2 = {half} is not a whole number of {n2}-cell simulation steps, \
                 required by the ds+diff-init and ds+extend strategies"
            )));
        }

        let activation = match raw.train.activation.as_str() {
            "tanh" => Activation::Tanh,
            "gelu" => Activation::Gelu,
            other => return Err(bad(format!("unknown activation '{other}'"))),
        };
        let arch = EmulatorArchitecture {
            input_dim: 5,
            hidden_width: raw.train.hidden_width,
            n_residual_blocks: raw.train.residual_blocks,
            activation,
        };
        arch.validate().map_err(|e| bad(e.to_string()))?;
        if !(raw.train.initial_lr > 0.0) || !raw.train.initial_lr.is_finite() {
            return Err(bad(format!(
                "train.initial_lr must be positive, got {}",
                raw.train.initial_lr
            )));
        }
        if raw.train.epochs == 0 {
            return Err(bad("train.epochs must be at least 1".into()));
        }
        let batch = match &raw.train.batch {
            BatchChoice::Name(name) if name == "full" => BatchMode::FullBatch,
            BatchChoice::Name(name) => {
                return Err(bad(format!(
                    "train.batch must be \"full\" or a positive integer, got \"{name}\""
                )))
            }
            BatchChoice::Size(0) => {
                return Err(bad("train.batch size must be positive".into()));
            }
            BatchChoice::Size(b) => BatchMode::MiniBatch(*b),
        };
        if raw.train.seeds.is_empty() {
            return Err(bad("train.seeds must list at least one seed".into()));
        }
        let train_set: BTreeSet<_> = raw.train.seeds.iter().collect();
        if train_set.len() != raw.train.seeds.len() {
            return Err(bad("train.seeds contains duplicates".into()));
        }

        if raw.eval.ic_seeds.len() != 10 {
            return Err(bad(format!(
                "eval.ic_seeds must list exactly 10 seeds, got {}",
                raw.eval.ic_seeds.len()
            )));
        }
        let eval_set: BTreeSet<u64> = raw.eval.ic_seeds.iter().copied().collect();
        if eval_set.len() != raw.eval.ic_seeds.len() {
            return Err(bad("eval.ic_seeds contains duplicates".into()));
        }

        if raw.output_dir.as_os_str().is_empty() {
            return Err(bad("output_dir must not be empty".into()));
        }

        let config_hash = hash_config(&raw);
        let output_dir = raw.output_dir.clone();
        let exp = Self {
            grid,
            short_time,
            full_time,
            eval_time,
            gp,
            systems,
            strategies,
            scheme,
            arch,
            batch,
            output_dir,
            config_hash,
            raw,
        };

        // Eval ICs must be unseen: no overlap with training seeds or with any
        // seed a training-side GP draw or design stream will consume.
        let mut training_side: BTreeSet<u64> = exp.raw.train.seeds.iter().copied().collect();
        for si in 0..exp.systems.len() {
            for di in 0..exp.raw.systems.diffusion_sweep.len() {
                training_side.insert(exp.short_gp_seed(si, di));
                training_side.insert(exp.full_gp_seed(si, di));
                for &strat in &exp.strategies {
                    training_side.insert(exp.design_seed(si, di, strat));
                }
            }
        }
        if let Some(shared) = eval_set.intersection(&training_side).next() {
            return Err(bad(format!(
                "eval.ic_seeds must be disjoint from training-side seeds; {shared} collides"
            )));
        }

        Ok(exp)
    }

    pub fn diffusion_sweep(&self) -> &[f64] {
        &self.raw.systems.diffusion_sweep
    }

    /// Instantiates the PDE for one grid cell.
    pub fn system_for(&self, sys_idx: usize, diffusion: f64) -> CliResult<PdeSystem> {
        let entry = &self.systems[sys_idx];
        let v = self.raw.systems.advection_velocity;
        let sys = match entry.kind {
            PdeKind::AllenCahn => PdeSystem::allen_cahn(diffusion),
            PdeKind::AdvectionDiffusion => PdeSystem::advection_diffusion(diffusion, v),
            PdeKind::Burgers => PdeSystem::burgers(diffusion),
            PdeKind::BurgersLinear => PdeSystem::burgers_linear(diffusion, v),
        }
        .map_err(|e| CliError::Config(format!("system {}: {e}", entry.name)))?;
        Ok(sys.with_scheme(self.scheme))
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            initial_lr: self.raw.train.initial_lr,
            epochs: self.raw.train.epochs,
            batch: self.batch,
            seed,
            ..TrainConfig::default()
        }
    }

    fn cell_counter(&self, sys_idx: usize, d_idx: usize) -> u64 {
        sys_idx as u64 * CELL_STRIDE + d_idx as u64
    }

    pub fn short_gp_seed(&self, sys_idx: usize, d_idx: usize) -> u64 {
        split_seed(
            split_seed(self.raw.master_seed, ROLE_SHORT_GP),
            self.cell_counter(sys_idx, d_idx),
        )
    }

    pub fn full_gp_seed(&self, sys_idx: usize, d_idx: usize) -> u64 {
        split_seed(
            split_seed(self.raw.master_seed, ROLE_FULL_GP),
            self.cell_counter(sys_idx, d_idx),
        )
    }

    pub fn design_seed(&self, sys_idx: usize, d_idx: usize, strat: StrategyId) -> u64 {
        split_seed(
            split_seed(self.raw.master_seed, ROLE_DESIGN),
            self.cell_counter(sys_idx, d_idx) * CELL_STRIDE + canonical_strategy_index(strat),
        )
    }

    // Artifact paths. Everything lives under output_dir; names carry the
    // (system, D, strategy, seed) coordinates.

    pub fn cell_tag(&self, sys_idx: usize, d_idx: usize) -> String {
        format!(
            "{}-D{}",
            self.systems[sys_idx].name,
            d_tag(self.diffusion_sweep()[d_idx])
        )
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.output_dir.join("manifest.json")
    }

    pub fn short_traj_path(&self, sys_idx: usize, d_idx: usize) -> PathBuf {
        self.output_dir
            .join("trajectories")
            .join(format!("{}-short.f64", self.cell_tag(sys_idx, d_idx)))
    }

    pub fn full_traj_path(&self, sys_idx: usize, d_idx: usize) -> PathBuf {
        self.output_dir
            .join("trajectories")
            .join(format!("{}-full.f64", self.cell_tag(sys_idx, d_idx)))
    }

    pub fn dataset_path(&self, sys_idx: usize, d_idx: usize, strat: StrategyId) -> PathBuf {
        self.output_dir
            .join("datasets")
            .join(format!("{}-{strat}.ds", self.cell_tag(sys_idx, d_idx)))
    }

    pub fn model_path(
        &self,
        sys_idx: usize,
        d_idx: usize,
        strat: StrategyId,
        train_seed: u64,
    ) -> PathBuf {
        self.output_dir.join("models").join(format!(
            "{}-{strat}-t{train_seed}.nse",
            self.cell_tag(sys_idx, d_idx)
        ))
    }

    pub fn train_log_path(
        &self,
        sys_idx: usize,
        d_idx: usize,
        strat: StrategyId,
        train_seed: u64,
    ) -> PathBuf {
        self.output_dir.join("models").join(format!(
            "{}-{strat}-t{train_seed}-train.csv",
            self.cell_tag(sys_idx, d_idx)
        ))
    }

    pub fn report_path(
        &self,
        sys_idx: usize,
        d_idx: usize,
        strat: StrategyId,
        train_seed: u64,
    ) -> PathBuf {
        self.output_dir.join("reports").join(format!(
            "{}-{strat}-t{train_seed}.csv",
            self.cell_tag(sys_idx, d_idx)
        ))
    }

    pub fn summary_path(&self, sys_idx: usize) -> PathBuf {
        self.output_dir
            .join("summary")
            .join(format!("{}.csv", self.systems[sys_idx].name))
    }

    pub fn runs_csv_path(&self) -> PathBuf {
        self.output_dir.join("summary").join("runs.csv")
    }
}

/// Short stable label for a diffusion value, e.g. 0.0005 -> "5e-4".
pub fn d_tag(d: f64) -> String {
    format!("{d:e}")
}

/// SHA-256 over the canonical JSON encoding of the resolved raw config.
/// Field order is fixed by the struct, so the hash is stable, and any
/// numeric or list change perturbs it.
pub fn hash_config(raw: &RawConfig) -> String {
    let canonical = serde_json::to_string(raw).expect("config serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}
