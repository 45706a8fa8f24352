//! Release acceptance gate. One test per criterion; each prints a
//! `[criterion N] PASS/FAIL` line (visible with `-- --nocapture`) and fails
//! the build when its bar is missed. Tolerances are pinned here, not in
//! config.
//!
//! Criteria 7-10 drive the `nse` binary on pinned configs under
//! `target/tmp/`, so their artifacts persist between runs and reruns verify
//! from the cache in seconds. The first run computes the full grid: hours on
//! one core (the phases parallelize across cores via --jobs). Criterion 11
//! re-executes its pipeline on purpose, twice.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

use ndarray::Array2;

use nse_core::dataset::harvest;
use nse_core::design::{
    build_mixed, build_pure, random_stencils, MixtureSpec, PureStrategy, StrategyId,
};
use nse_core::gp::{sample_field, GpSpec};
use nse_core::grid::{BoundaryCondition, Field2D, GridSpec};
use nse_core::model::{load_model, EmulatorArchitecture, Normalization};
use nse_core::pca::{fit_pca, pca_stencils, SequenceKind};
use nse_core::pde::{euler_step, simulate, AdvectionScheme, PdeSystem, TimeSpec};
use nse_core::sobol::sobol_points;
use nse_core::train::{init_params, loss_and_grad};

/// Training used for the binary-driven criteria (7-10). Minibatch at 3000
/// epochs takes 30k optimizer steps, which converges measurably further
/// than the 5k steps of the full-batch default (oracle run: normalized
/// loss 2.4e-6 vs 8.2e-6 on the same design) at a tenth of the cost; it is
/// an acceptance setting, not the experiment default. The reaction grid
/// separates at 1000 epochs already (see REACTION_EPOCHS).
const GRID_EPOCHS: usize = 3000;
const GRID_BATCH: usize = 1024;

fn verdict(n: u32, ok: bool, detail: &str) {
    let word = if ok { "PASS" } else { "FAIL" };
    println!("[criterion {n}] {word}: {detail}");
    assert!(ok, "[criterion {n}] FAIL: {detail}");
}

// ---------------------------------------------------------------------------
// 1. Budget identities.

#[test]
fn criterion_01_budget_identities() {
    let grid = GridSpec::new(32, 1.0).unwrap();
    let gp = GpSpec::default().with_seed(11);
    let sys = PdeSystem::allen_cahn(1e-3).unwrap();
    let short_time = TimeSpec::new(1e-3, 10, 0.0).unwrap();

    let init = sample_field(&gp, &grid, false).unwrap();
    let short = simulate(&init, &sys, &short_time).unwrap();
    let harvested = harvest(&short, short_time.dt).unwrap();
    let mut ok = harvested.count() == 10_240;
    let mut detail = format!("10-step 32x32 harvest = {}", harvested.count());

    let full_time = TimeSpec::new(1e-3, 1000, 0.0).unwrap();
    let full_init = sample_field(&gp.with_seed(12), &grid, false).unwrap();
    let full_run = simulate(&full_init, &sys, &full_time).unwrap();
    for strat in StrategyId::ALL {
        let StrategyId::Mixed(augment, sequence) = strat else {
            continue;
        };
        let spec = MixtureSpec::new(0.5, augment, sequence).unwrap();
        let built = build_mixed(&spec, &full_run, &sys, &gp, &full_time, 10_240, 13).unwrap();
        let hist = built.dataset.provenance_histogram();
        let main = hist.get("on-trajectory").copied().unwrap_or(0);
        let rest: usize = hist
            .iter()
            .filter(|(k, _)| k.as_str() != "on-trajectory")
            .map(|(_, v)| v)
            .sum();
        let this_ok = built.dataset.count() == 20_480 && main == 10_240 && rest == 10_240;
        ok &= this_ok;
        detail.push_str(&format!("; {strat} = {} ({main}/{rest})", built.dataset.count()));
    }
    verdict(1, ok, &detail);
}

// ---------------------------------------------------------------------------
// 2. Dense-matrix solver oracle and periodic mean conservation.

fn dense_update_matrix(system: &PdeSystem, grid: &GridSpec, dt: f64) -> Array2<f64> {
    let n = grid.n();
    let dx = grid.cell_spacing();
    let idx = |i: isize, j: isize| -> usize {
        let w = |k: isize| (((k % n as isize) + n as isize) % n as isize) as usize;
        w(i) * n + w(j)
    };
    let mut m = Array2::eye(n * n);
    let d = system.diffusion;
    let [vx, vy] = system.advection_velocity;
    for i in 0..n as isize {
        for j in 0..n as isize {
            let r = idx(i, j);
            let mut add = |col: usize, c: f64| m[(r, col)] += dt * c;
            add(idx(i, j), -4.0 * d / (dx * dx));
            add(idx(i - 1, j), d / (dx * dx));
            add(idx(i + 1, j), d / (dx * dx));
            add(idx(i, j - 1), d / (dx * dx));
            add(idx(i, j + 1), d / (dx * dx));
            match system.scheme {
                AdvectionScheme::Upwind => {
                    if vx >= 0.0 {
                        add(idx(i, j), -vx / dx);
                        add(idx(i - 1, j), vx / dx);
                    } else {
                        add(idx(i + 1, j), -vx / dx);
                        add(idx(i, j), vx / dx);
                    }
                    if vy >= 0.0 {
                        add(idx(i, j), -vy / dx);
                        add(idx(i, j - 1), vy / dx);
                    } else {
                        add(idx(i, j + 1), -vy / dx);
                        add(idx(i, j), vy / dx);
                    }
                }
                AdvectionScheme::Central => {
                    add(idx(i + 1, j), -vx / (2.0 * dx));
                    add(idx(i - 1, j), vx / (2.0 * dx));
                    add(idx(i, j + 1), -vy / (2.0 * dx));
                    add(idx(i, j - 1), vy / (2.0 * dx));
                }
            }
        }
    }
    m
}

fn rough_field(grid: GridSpec, seed: u64) -> Field2D {
    let n = grid.n();
    let mut f = Field2D::zeros(grid, BoundaryCondition::Periodic);
    let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1);
    for i in 0..n {
        for j in 0..n {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            f.values[(i, j)] = (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0;
        }
    }
    f
}

#[test]
fn criterion_02_solver_oracle() {
    let dt = 1e-3;
    let systems = [
        PdeSystem::advection_diffusion(1e-3, [1.0, 1.0]).unwrap(),
        PdeSystem::advection_diffusion(5e-4, [-1.0, 0.5]).unwrap(),
        PdeSystem::advection_diffusion(1e-3, [1.0, 1.0])
            .unwrap()
            .with_scheme(AdvectionScheme::Central),
    ];
    let mut worst = 0.0f64;
    for n in [5usize, 8] {
        let grid = GridSpec::new(n, 1.0).unwrap();
        for (k, sys) in systems.iter().enumerate() {
            let m = dense_update_matrix(sys, &grid, dt);
            let field = rough_field(grid, (n * 10 + k) as u64);
            let stepped = euler_step(&field, sys, dt).unwrap();
            let flat: Vec<f64> = field.values.iter().copied().collect();
            for r in 0..n * n {
                let mut acc = 0.0;
                for c in 0..n * n {
                    acc += m[(r, c)] * flat[c];
                }
                worst = worst.max((stepped.values[(r / n, r % n)] - acc).abs());
            }
        }
    }

    let grid = GridSpec::new(32, 1.0).unwrap();
    let init = sample_field(&GpSpec::default().with_seed(21), &grid, true).unwrap();
    let sys = PdeSystem::advection_diffusion(1e-3, [1.0, 1.0]).unwrap();
    let traj = simulate(&init, &sys, &TimeSpec::new(dt, 1000, 0.0).unwrap()).unwrap();
    let mut drift = 0.0f64;
    let mut prev = traj.snapshots[0].mean();
    for snap in traj.snapshots.iter().skip(1) {
        let mean = snap.mean();
        drift = drift.max((mean - prev).abs() / prev.abs().max(1.0));
        prev = mean;
    }

    verdict(
        2,
        worst <= 1e-13 && drift <= 1e-12,
        &format!("dense-matrix max abs err {worst:.2e} (<= 1e-13), per-step mean drift {drift:.2e} (<= 1e-12 rel over 1000 steps)"),
    );
}

// ---------------------------------------------------------------------------
// 3. Dispersion: per-mode decay matches the circulant eigenvalue.

fn mode_factor(system: &PdeSystem, dx: f64, dt: f64, theta: [f64; 2]) -> (f64, f64) {
    let d = system.diffusion;
    let [vx, vy] = system.advection_velocity;
    let mut re = 1.0 + dt * d * (2.0 * theta[0].cos() + 2.0 * theta[1].cos() - 4.0) / (dx * dx);
    let mut im = 0.0;
    for (v, th) in [(vx, theta[0]), (vy, theta[1])] {
        match system.scheme {
            AdvectionScheme::Upwind => {
                if v >= 0.0 {
                    re -= dt * v * (1.0 - th.cos()) / dx;
                    im -= dt * v * th.sin() / dx;
                } else {
                    re -= dt * v * (th.cos() - 1.0) / dx;
                    im -= dt * v * th.sin() / dx;
                }
            }
            AdvectionScheme::Central => {
                im -= dt * v * th.sin() / dx;
            }
        }
    }
    (re, im)
}

#[test]
fn criterion_03_dispersion() {
    let n = 32usize;
    let grid = GridSpec::new(n, 1.0).unwrap();
    let dx = grid.cell_spacing();
    let dt = 1e-3;
    let steps = 100usize;
    let upwind = PdeSystem::advection_diffusion(1e-3, [1.0, 1.0]).unwrap();
    let central = upwind.clone().with_scheme(AdvectionScheme::Central);
    let cases = [(upwind.clone(), (1, 2)), (upwind, (3, 1)), (central, (1, 2))];
    let mut worst_rel = 0.0f64;
    for (sys, (p, q)) in cases {
        let theta = [
            2.0 * std::f64::consts::PI * p as f64 / n as f64,
            2.0 * std::f64::consts::PI * q as f64 / n as f64,
        ];
        let mut init = Field2D::zeros(grid, BoundaryCondition::Periodic);
        for i in 0..n {
            for j in 0..n {
                init.values[(i, j)] = (theta[0] * i as f64 + theta[1] * j as f64).cos();
            }
        }
        let traj = simulate(&init, &sys, &TimeSpec::new(dt, steps, 0.0).unwrap()).unwrap();
        let (gre, gim) = mode_factor(&sys, dx, dt, theta);
        let (radius, phase) = ((gre * gre + gim * gim).sqrt(), gim.atan2(gre));
        for k in 0..=steps {
            let amp = radius.powi(k as i32);
            let shift = phase * k as f64;
            for i in 0..n {
                for j in 0..n {
                    let predicted =
                        amp * (theta[0] * i as f64 + theta[1] * j as f64 + shift).cos();
                    let err = (traj.snapshots[k].values[(i, j)] - predicted).abs();
                    worst_rel = worst_rel.max(err / amp);
                }
            }
        }
    }
    verdict(
        3,
        worst_rel <= 1e-8,
        &format!("worst relative mode error over 100 steps {worst_rel:.2e} (<= 1e-8)"),
    );
}

// ---------------------------------------------------------------------------
// 4. Gradient correctness against central finite differences.

#[test]
fn criterion_04_gradients() {
    let arch = EmulatorArchitecture::default();
    let grid = GridSpec::new(8, 1.0).unwrap();
    let sys = PdeSystem::advection_diffusion(1e-3, [1.0, 1.0]).unwrap();
    let init = sample_field(&GpSpec::default().with_seed(31), &grid, true).unwrap();
    let traj = simulate(&init, &sys, &TimeSpec::new(1e-3, 10, 0.0).unwrap()).unwrap();
    let ds = harvest(&traj, 1e-3).unwrap();
    let norm = Normalization::from_dataset(&ds).unwrap();
    let x = norm.normalize_inputs(&ds.inputs_array());
    let y = norm.normalize_labels(&ds.labels_array());

    let h = 1e-6;
    let mut checked = 0usize;
    let mut passed = 0usize;
    for seed in 0..5u64 {
        let params = init_params(&arch, seed);
        let (_, grad) = loss_and_grad(&arch, &params, &x, &y);
        let n = params.len();
        for probe in (0..n).step_by(n / 101) {
            let mut plus = params.clone();
            plus[probe] += h;
            let mut minus = params.clone();
            minus[probe] -= h;
            let (lp, _) = loss_and_grad(&arch, &plus, &x, &y);
            let (lm, _) = loss_and_grad(&arch, &minus, &x, &y);
            let fd = (lp - lm) / (2.0 * h);
            let denom = fd.abs().max(grad[probe].abs()).max(1e-8);
            checked += 1;
            if (fd - grad[probe]).abs() / denom <= 1e-5 {
                passed += 1;
            }
        }
    }
    verdict(
        4,
        checked >= 500 && passed == checked,
        &format!("{passed}/{checked} sampled coordinates match central differences at rel 1e-5 (h=1e-6, 5 seeds)"),
    );
}

// ---------------------------------------------------------------------------
// 5. PCA roundtrip and score boxes.

#[test]
fn criterion_05_pca() {
    let sys = PdeSystem::allen_cahn(1e-3).unwrap();
    let cloud = random_stencils((-1.0, 1.0), 512, SequenceKind::Uniform, 51);
    let (ds, dropped) = nse_core::dataset::label_synthetic(
        &cloud,
        &sys,
        1.0 / 32.0,
        nse_core::dataset::SyntheticFamily::RandomUniform,
    );
    assert_eq!(dropped, 0);
    let basis = fit_pca(&ds).unwrap();

    let mut worst_round = 0.0f64;
    for s in ds.stencils() {
        let back = basis.back_project(&basis.project(&s));
        for k in 0..5 {
            worst_round = worst_round.max((back.0[k] - s.0[k]).abs());
        }
    }

    let mut worst_escape = 0.0f64;
    let mut accepted_total = 0usize;
    for kind in [SequenceKind::Uniform, SequenceKind::Sobol] {
        let drawn = pca_stencils(&basis, (-1.0, 1.0), 256, kind, 52, 25_600).unwrap();
        accepted_total += drawn.len();
        for s in &drawn {
            let z = basis.project(s);
            for k in 0..5 {
                let below = basis.score_lo[k] - z[k];
                let above = z[k] - basis.score_hi[k];
                worst_escape = worst_escape.max(below.max(above));
            }
        }
    }

    verdict(
        5,
        worst_round <= 1e-10 && worst_escape <= 1e-10 && accepted_total > 0,
        &format!("roundtrip max err {worst_round:.2e}, score-box escape {worst_escape:.2e} over {accepted_total} draws (both <= 1e-10)"),
    );
}

// ---------------------------------------------------------------------------
// 6. Sobol reference sequence.

#[test]
fn criterion_06_sobol_reference() {
    let pts = sobol_points(1, 5, 1).unwrap();
    let got: Vec<f64> = pts.column(0).iter().copied().collect();
    let want = [0.5, 0.25, 0.75, 0.375, 0.875];
    let ok = got.iter().zip(want.iter()).all(|(a, b)| a == b);
    verdict(6, ok, &format!("dim-1 after the initial point: {got:?} == {want:?}"));
}

// ---------------------------------------------------------------------------
// Shared plumbing for the binary-driven criteria.

fn acceptance_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

/// Runs `nse full` on a pinned config, reusing cached artifacts from earlier
/// runs. Returns the output dir.
fn nse_full(name: &str, toml_body: &str, force: bool) -> PathBuf {
    let root = acceptance_dir();
    std::fs::create_dir_all(&root).unwrap();
    let out_dir = root.join(name);
    let config = root.join(format!("{name}.toml"));
    let text = format!("output_dir = \"{}\"\n{toml_body}", out_dir.display());
    std::fs::write(&config, text).unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nse"));
    cmd.arg("--config").arg(&config).arg("full");
    if force {
        cmd.arg("--force");
    }
    let out = cmd.output().expect("nse runs");
    assert!(
        out.status.success(),
        "nse full ({name}) failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out_dir
}

/// final-step mean log10-RMSE keyed by (diffusion tag, strategy, train seed).
fn read_runs(out_dir: &Path) -> BTreeMap<(String, String, u64), f64> {
    let text = std::fs::read_to_string(out_dir.join("summary").join("runs.csv")).unwrap();
    let mut map = BTreeMap::new();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        map.insert(
            (cols[1].to_string(), cols[2].to_string(), cols[3].parse().unwrap()),
            cols[4].parse::<f64>().unwrap(),
        );
    }
    map
}

const TRAIN_SEEDS: [u64; 3] = [1, 2, 3];

// ---------------------------------------------------------------------------
// 7. Learnability of the linear operator.

#[test]
fn criterion_07_linear_operator() {
    let body = format!(
        r#"
master_seed = 901

[systems]
kinds = ["advection-diffusion"]
diffusion_sweep = [1e-3]

[time]
eval_steps = 100

[strategies]
ids = ["random-sobol"]

[train]
epochs = {GRID_EPOCHS}
batch = {GRID_BATCH}
seeds = [1, 2, 3]
"#
    );
    let out = nse_full("linear-cell", &body, false);
    let runs = read_runs(&out);

    // Held-out one-step test set: the on-trajectory stencils of a fresh GP
    // short run none of the training saw.
    let grid = GridSpec::new(32, 1.0).unwrap();
    let gp = GpSpec::default();
    let sys = PdeSystem::advection_diffusion(1e-3, [1.0, 1.0]).unwrap();
    let held = build_pure(
        PureStrategy::ShortTraj,
        &sys,
        &grid,
        &TimeSpec::new(1e-3, 10, 0.0).unwrap(),
        &gp.with_seed(777_777),
        10_240,
        2,
        None,
    )
    .unwrap()
    .dataset;
    let hx = held.inputs_array();
    let hy = held.labels_array();
    let held_std = {
        let mean = hy.sum() / hy.len() as f64;
        (hy.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / hy.len() as f64).sqrt()
    };

    // Relative error is measured in the label scale the model is trained
    // in (its label normalization), where the 1% bar was calibrated. The
    // held-out labels' own std is ~10x smaller, because on-trajectory
    // stencils are far milder than the design box the model trains on;
    // dividing by it would fold that distribution gap into the model's
    // error. Both readings are printed.
    let mut detail = String::new();
    let mut good_seeds = 0;
    for seed in TRAIN_SEEDS {
        let model = load_model(
            &out.join("models")
                .join(format!("advection-diffusion-D1e-3-random-sobol-t{seed}.nse")),
        )
        .unwrap();
        let preds = model.forward_batch(&hx);
        let se: f64 = preds
            .iter()
            .zip(hy.iter())
            .map(|(p, y)| (p - y) * (p - y))
            .sum();
        let rmse = (se / hy.len() as f64).sqrt();
        let rel = rmse / model.norm.label_std;
        let rollout = runs[&("1e-3".to_string(), "random-sobol".to_string(), seed)];
        let seed_ok = rel <= 0.01 && rollout <= -2.0;
        good_seeds += seed_ok as u32;
        detail.push_str(&format!(
            "seed {seed}: one-step rel {:.3}% of label scale (<= 1%; {:.2}% of held-out std), 100-step rollout {rollout:.2} (<= -2); ",
            100.0 * rel,
            100.0 * rmse / held_std
        ));
    }
    detail.push_str(&format!("{good_seeds}/3 seeds pass (need >= 2)"));
    verdict(7, good_seeds >= 2, &detail);
}

// ---------------------------------------------------------------------------
// 8-9. Reaction-system ordering grid (shared artifacts).

/// The reaction comparisons already separate at 1000 epochs (30k samples,
/// ~10k steps); the full 3000 is spent only where the linear system needs
/// the extra convergence.
const REACTION_EPOCHS: usize = 1000;

fn reaction_grid() -> &'static BTreeMap<(String, String, u64), f64> {
    static GRID: OnceLock<BTreeMap<(String, String, u64), f64>> = OnceLock::new();
    GRID.get_or_init(|| {
        let body = format!(
            r#"
master_seed = 902

[systems]
kinds = ["allen-cahn"]
diffusion_sweep = [5e-4, 1e-3, 2e-3]

[strategies]
ids = ["short-traj", "random-sobol", "pca-uniform", "pca-sobol", "ds+pca-uniform", "ds+pca-sobol"]

[train]
epochs = {REACTION_EPOCHS}
batch = {GRID_BATCH}
seeds = [1, 2, 3]
"#
        );
        read_runs(&nse_full("reaction-grid", &body, false))
    })
}

const D_TAGS: [&str; 3] = ["5e-4", "1e-3", "2e-3"];

/// Seeds (out of 3) where `a` beats `b` (lower final log-RMSE).
fn seeds_where_below(
    runs: &BTreeMap<(String, String, u64), f64>,
    d: &str,
    a: &str,
    b: &str,
) -> u32 {
    TRAIN_SEEDS
        .iter()
        .filter(|&&s| {
            runs[&(d.to_string(), a.to_string(), s)] < runs[&(d.to_string(), b.to_string(), s)]
        })
        .count() as u32
}

#[test]
fn criterion_08_reaction_pure_ordering() {
    let runs = reaction_grid();
    let mut ok = true;
    let mut detail = String::new();
    for d in D_TAGS {
        let sobol = seeds_where_below(runs, d, "random-sobol", "short-traj");
        let pca_u = seeds_where_below(runs, d, "pca-uniform", "short-traj");
        let pca_s = seeds_where_below(runs, d, "pca-sobol", "short-traj");
        ok &= sobol >= 2 && pca_u >= 2 && pca_s >= 2;
        detail.push_str(&format!(
            "D={d}: random-sobol {sobol}/3, pca-uniform {pca_u}/3, pca-sobol {pca_s}/3 beat short-traj; "
        ));
    }
    detail.push_str("(need >= 2/3 each)");
    verdict(8, ok, &detail);
}

#[test]
fn criterion_09_mixed_beats_pure_pca() {
    let runs = reaction_grid();
    let mut ok = true;
    let mut detail = String::new();
    for d in D_TAGS {
        let uni = seeds_where_below(runs, d, "ds+pca-uniform", "pca-uniform");
        let sob = seeds_where_below(runs, d, "ds+pca-sobol", "pca-sobol");
        ok &= uni >= 2 && sob >= 2;
        detail.push_str(&format!("D={d}: ds+pca-uniform {uni}/3, ds+pca-sobol {sob}/3; "));
    }
    detail.push_str("(each mixed variant below its pure counterpart, >= 2/3 seeds, every D)");
    verdict(9, ok, &detail);
}

// ---------------------------------------------------------------------------
// 10. Advection ordering at the lowest diffusion.

#[test]
fn criterion_10_advection_ordering() {
    let body = format!(
        r#"
master_seed = 903

[systems]
kinds = ["advection-diffusion"]
diffusion_sweep = [5e-4]

[strategies]
ids = ["short-traj", "random-uniform", "random-sobol", "pca-uniform", "pca-sobol"]

[train]
epochs = {GRID_EPOCHS}
batch = {GRID_BATCH}
seeds = [1, 2, 3]
"#
    );
    let runs = read_runs(&nse_full("advection-cell", &body, false));
    let val = |strat: &str, seed: u64| runs[&("5e-4".to_string(), strat.to_string(), seed)];

    // Family ordering per seed: mean of each family's variants.
    let mut ok_seeds = 0;
    let mut detail = String::new();
    for seed in TRAIN_SEEDS {
        let pca = 0.5 * (val("pca-uniform", seed) + val("pca-sobol", seed));
        let random = 0.5 * (val("random-uniform", seed) + val("random-sobol", seed));
        let short = val("short-traj", seed);
        let seed_ok = pca <= random && random <= short;
        ok_seeds += seed_ok as u32;
        detail.push_str(&format!(
            "seed {seed}: pca {pca:.2} <= random {random:.2} <= short-traj {short:.2} -> {}; ",
            if seed_ok { "yes" } else { "no" }
        ));
    }
    detail.push_str(&format!("{ok_seeds}/3 seeds ordered (need >= 2)"));
    verdict(10, ok_seeds >= 2, &detail);
}

// ---------------------------------------------------------------------------
// 11. Byte-for-byte determinism of `full`.

#[test]
fn criterion_11_determinism() {
    let body = r#"
master_seed = 904

[grid]
n = 16

[time]
full_steps = 500
eval_steps = 200

[systems]
kinds = ["allen-cahn"]
diffusion_sweep = [1e-3]

[budgets]
pure_stencils = 2560
mixed_total = 5120

[strategies]
ids = ["short-traj", "random-sobol", "ds+pca-sobol"]

[train]
epochs = 500
seeds = [1]
"#;
    // Two real executions of the same config: the second forces regeneration.
    let out = nse_full("determinism-smoke", body, true);
    let summaries = |root: &Path| -> Vec<(String, Vec<u8>)> {
        let mut all = Vec::new();
        for entry in std::fs::read_dir(root.join("summary")).unwrap() {
            let path = entry.unwrap().path();
            all.push((
                path.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&path).unwrap(),
            ));
        }
        all.sort();
        all
    };
    let first = summaries(&out);
    let out2 = nse_full("determinism-smoke", body, true);
    let second = summaries(&out2);
    let ok = !first.is_empty() && first == second;
    verdict(
        11,
        ok,
        &format!(
            "two full executions at 16x16/500 epochs: {} summary files byte-identical",
            first.len()
        ),
    );
}
