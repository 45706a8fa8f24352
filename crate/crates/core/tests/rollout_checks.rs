//! Evaluation invariants: translation equivariance of the whole
//! solver-vs-emulator comparison, exactness of the aggregation, and the
//! behavior of degenerate IC sets.

use nse_core::dataset::{label_synthetic, SyntheticFamily};
use nse_core::design::random_stencils;
use nse_core::gp::{sample_field, GpSpec};
use nse_core::grid::GridSpec;
use nse_core::model::{EmulatorArchitecture, Normalization, TrainedEmulator};
use nse_core::pca::SequenceKind;
use nse_core::pde::{simulate, PdeSystem, TimeSpec};
use nse_core::rollout::{
    evaluate_operator, evaluate_operator_with_seeds, log_rmse_curve, operator_rollout,
    ExactOperator, LOG_RMSE_FLOOR,
};
use nse_core::train::init_params;

/// An emulator with seeded random weights; wrong about the dynamics but
/// deterministic, finite, and cell-local, which is all these tests need.
fn scrambled_emulator(seed: u64) -> TrainedEmulator {
    let arch = EmulatorArchitecture::default();
    let sys = PdeSystem::advection_diffusion(1e-3, [1.0, 1.0]).unwrap();
    let stencils = random_stencils((-1.0, 1.0), 256, SequenceKind::Sobol, 12);
    let (ds, _) = label_synthetic(&stencils, &sys, 1.0 / 16.0, SyntheticFamily::RandomSobol);
    let norm = Normalization::from_dataset(&ds).unwrap();
    TrainedEmulator::new(arch, init_params(&arch, seed), norm, seed).unwrap()
}

#[test]
fn log_rmse_curves_are_shift_invariant() {
    let n = 16usize;
    let grid = GridSpec::new(n, 1.0).unwrap();
    let sys = PdeSystem::advection_diffusion(1e-3, [1.0, 1.0]).unwrap();
    let gp = GpSpec::default().with_seed(400);
    let time = TimeSpec::new(1e-3, 100, 0.0).unwrap();
    let model = scrambled_emulator(9);

    let init = sample_field(&gp, &grid, true).unwrap();
    let (si, sj) = (5usize, 11usize);
    let mut shifted = init.clone();
    for i in 0..n {
        for j in 0..n {
            shifted.values[((i + si) % n, (j + sj) % n)] = init.values[(i, j)];
        }
    }

    let curve = |ic: &nse_core::grid::Field2D| -> Vec<f64> {
        let reference = simulate(ic, &sys, &time).unwrap();
        let rolled = operator_rollout(ic, &model, &time);
        assert_eq!(rolled.diverged_at, None);
        log_rmse_curve(&reference, &rolled).unwrap()
    };
    let base = curve(&init);
    let moved = curve(&shifted);
    // Both the solver and the emulator act cell-locally with identical
    // arithmetic, so the curves agree far below the 1e-10 requirement.
    for (k, (a, b)) in base.iter().zip(moved.iter()).enumerate() {
        assert!(
            (a - b).abs() <= 1e-10,
            "step {}: {a} vs {b} after shifting the IC",
            k + 1
        );
    }
}

#[test]
fn concatenating_two_reports_reproduces_the_big_one_exactly() {
    let grid = GridSpec::new(12, 1.0).unwrap();
    let sys = PdeSystem::advection_diffusion(1e-3, [1.0, 1.0]).unwrap();
    let gp = GpSpec::default();
    let time = TimeSpec::new(1e-3, 40, 0.0).unwrap();
    let model = scrambled_emulator(13);

    let seeds: Vec<u64> = (1..=10).collect();
    let all = evaluate_operator_with_seeds(&model, &sys, &grid, &gp, &time, &seeds).unwrap();
    let first = evaluate_operator_with_seeds(&model, &sys, &grid, &gp, &time, &seeds[..5]).unwrap();
    let second = evaluate_operator_with_seeds(&model, &sys, &grid, &gp, &time, &seeds[5..]).unwrap();

    let mut merged = first.per_ic.clone();
    merged.extend(second.per_ic.iter().cloned());
    assert_eq!(merged, all.per_ic);

    // Recomputed mean over the merged curves is bitwise the reported one.
    for k in 0..all.horizon() {
        let finite: Vec<f64> = merged
            .iter()
            .map(|c| c[k])
            .filter(|v| v.is_finite())
            .collect();
        assert_eq!(finite.len(), all.n_finite[k]);
        let mean = finite.iter().sum::<f64>() / finite.len() as f64;
        assert_eq!(mean.to_bits(), all.mean[k].to_bits(), "step {}", k + 1);
    }
}

#[test]
fn exact_operator_stays_on_the_floor_for_both_boundary_kinds() {
    let grid = GridSpec::new(16, 1.0).unwrap();
    let gp = GpSpec::default();
    let time = TimeSpec::new(1e-3, 100, 0.0).unwrap();
    for sys in [
        PdeSystem::advection_diffusion(1e-3, [1.0, 1.0]).unwrap(),
        PdeSystem::allen_cahn(5e-4).unwrap(),
    ] {
        let op = ExactOperator { system: &sys };
        let report = evaluate_operator(&op, &sys, &grid, &gp, &time, 10, 42).unwrap();
        assert!(report.diverged_at.iter().all(|d| d.is_none()));
        for (k, &m) in report.mean.iter().enumerate() {
            assert!(
                m <= -10.0,
                "{:?} step {}: mean log-RMSE {m} above -10",
                sys.kind,
                k + 1
            );
            assert_eq!(m, LOG_RMSE_FLOOR);
        }
    }
}

#[test]
fn identical_ics_collapse_the_band_to_zero() {
    let grid = GridSpec::new(12, 1.0).unwrap();
    let sys = PdeSystem::advection_diffusion(1e-3, [1.0, 1.0]).unwrap();
    let gp = GpSpec::default();
    let time = TimeSpec::new(1e-3, 30, 0.0).unwrap();
    let model = scrambled_emulator(21);

    let report =
        evaluate_operator_with_seeds(&model, &sys, &grid, &gp, &time, &[7, 7, 7]).unwrap();
    assert_eq!(report.per_ic[0], report.per_ic[1]);
    assert_eq!(report.per_ic[0], report.per_ic[2]);
    for k in 0..report.horizon() {
        assert_eq!(report.band[k], 0.0, "band at step {} must vanish", k + 1);
        assert_eq!(report.mean[k].to_bits(), report.per_ic[0][k].to_bits());
    }
}
