//! Training: Adam with a cosine learning-rate schedule over the normalized
//! MSE, full-batch by default. Gradients are hand-written reverse mode over
//! the canonical parameter layout.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::StencilDataset;
use crate::design::split_seed;
use crate::error::{Error, Result};
use crate::model::{layout, net_apply, EmulatorArchitecture, Normalization, TrainedEmulator};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchMode {
    FullBatch,
    MiniBatch(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub epochs: usize,
    pub batch: BatchMode,
    pub betas: (f64, f64),
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            initial_lr: 0.01,
            epochs: 5000,
            batch: BatchMode::FullBatch,
            betas: (0.9, 0.999),
            eps: 1e-8,
            seed: 0,
        }
    }
}

/// Cosine decay from `initial` at epoch 0 to exactly 0 at `epoch == total`.
pub fn cosine_lr(initial: f64, epoch: usize, total: usize) -> f64 {
    assert!(total >= 1 && epoch <= total, "epoch {epoch} of {total}");
    if epoch == total {
        return 0.0;
    }
    0.5 * initial * (1.0 + (std::f64::consts::PI * epoch as f64 / total as f64).cos())
}

#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One Adam update with bias correction.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [f64],
    grad: &[f64],
    lr: f64,
    betas: (f64, f64),
    eps: f64,
) {
    assert_eq!(params.len(), grad.len());
    assert_eq!(params.len(), state.m.len());
    let (b1, b2) = betas;
    state.t += 1;
    let mc = 1.0 - b1.powi(state.t as i32);
    let vc = 1.0 - b2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / mc;
        let v_hat = state.v[i] / vc;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Mean squared error over normalized labels and its gradient in the flat
/// parameter layout.
pub fn loss_and_grad(
    arch: &EmulatorArchitecture,
    params: &[f64],
    x: &Array2<f64>,
    y: &Array1<f64>,
) -> (f64, Vec<f64>) {
    let z = x.nrows();
    assert_eq!(y.len(), z, "labels must match input rows");
    let (pred, cache) = net_apply(arch, params, x, true);
    let cache = cache.expect("cache requested");
    let act = arch.activation;

    let diff = &pred - y;
    let loss = diff.mapv(|d| d * d).sum() / z as f64;
    let dpred = diff.mapv(|d| 2.0 * d / z as f64);

    let specs = layout(arch);
    let mut grad = vec![0.0; params.len()];
    let set2 = |g: &mut [f64], t: &crate::model::TensorSpec, m: &Array2<f64>| {
        g[t.offset..t.offset + t.rows * t.cols]
            .copy_from_slice(m.as_slice().expect("row-major gradient"));
    };

    let nb = arch.n_residual_blocks;
    let w_out_spec = &specs[2 + 4 * nb];
    let b_out_spec = &specs[3 + 4 * nb];
    let r_last = cache.residuals.last().expect("non-empty");

    // Output head: pred = r_last . w_out + b_out.
    let gw_out = dpred.dot(r_last);
    grad[w_out_spec.offset..w_out_spec.offset + w_out_spec.cols]
        .copy_from_slice(gw_out.as_slice().expect("contiguous"));
    grad[b_out_spec.offset] = dpred.sum();

    let w_out = ndarray::ArrayView1::from(
        &params[w_out_spec.offset..w_out_spec.offset + w_out_spec.cols],
    );
    // dL/dr_last as an outer product.
    let mut d_r = Array2::from_shape_fn((z, arch.hidden_width), |(r, c)| dpred[r] * w_out[c]);

    for k in (0..nb).rev() {
        let base = 2 + 4 * k;
        let bc = &cache.blocks[k];
        let r_in = &cache.residuals[k];
        let w1 = ndarray::ArrayView2::from_shape(
            (specs[base].rows, specs[base].cols),
            &params[specs[base].offset..specs[base].offset + specs[base].rows * specs[base].cols],
        )
        .expect("layout shape");
        let w2 = ndarray::ArrayView2::from_shape(
            (specs[base + 2].rows, specs[base + 2].cols),
            &params[specs[base + 2].offset
                ..specs[base + 2].offset + specs[base + 2].rows * specs[base + 2].cols],
        )
        .expect("layout shape");

        // Second layer of the block: r_out = r_in + act(a1 W2^T + b2).
        let mut dz2 = d_r.clone();
        ndarray::Zip::from(&mut dz2)
            .and(&bc.z2)
            .and(&bc.a2)
            .for_each(|g, &zv, &av| *g *= act.derivative(zv, av));
        set2(&mut grad, &specs[base + 2], &dz2.t().dot(&bc.a1));
        grad[specs[base + 3].offset..specs[base + 3].offset + specs[base + 3].rows]
            .copy_from_slice(dz2.sum_axis(Axis(0)).as_slice().expect("contiguous"));

        // First layer: a1 = act(r_in W1^T + b1).
        let mut dz1 = dz2.dot(&w2);
        ndarray::Zip::from(&mut dz1)
            .and(&bc.z1)
            .and(&bc.a1)
            .for_each(|g, &zv, &av| *g *= act.derivative(zv, av));
        set2(&mut grad, &specs[base], &dz1.t().dot(r_in));
        grad[specs[base + 1].offset..specs[base + 1].offset + specs[base + 1].rows]
            .copy_from_slice(dz1.sum_axis(Axis(0)).as_slice().expect("contiguous"));

        // Skip connection adds the block input gradient straight through.
        d_r = d_r + dz1.dot(&w1);
    }

    // Input projection: residuals[0] = act(x W_in^T + b_in).
    let a_in = &cache.residuals[0];
    let mut dz0 = d_r;
    ndarray::Zip::from(&mut dz0)
        .and(&cache.z_in)
        .and(a_in)
        .for_each(|g, &zv, &av| *g *= act.derivative(zv, av));
    set2(&mut grad, &specs[0], &dz0.t().dot(x));
    grad[specs[1].offset..specs[1].offset + specs[1].rows]
        .copy_from_slice(dz0.sum_axis(Axis(0)).as_slice().expect("contiguous"));

    (loss, grad)
}

/// Glorot-uniform weights, zero biases, drawn in canonical layout order.
pub fn init_params(arch: &EmulatorArchitecture, seed: u64) -> Vec<f64> {
    let mut params = vec![0.0; arch.param_count()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in layout(arch) {
        if t.cols == 1 {
            continue; // biases start at zero
        }
        // Weights are stored (out, in); fan-in is cols, fan-out rows.
        let limit = (6.0 / (t.rows + t.cols) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit);
        for p in &mut params[t.offset..t.offset + t.rows * t.cols] {
            *p = dist.sample(&mut rng);
        }
    }
    params
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub lr: f64,
    pub mse_normalized: f64,
    pub mse_original: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "epoch,lr,mse_normalized,mse_original")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.epoch, r.lr, r.mse_normalized, r.mse_original)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Last finite training state, attached to a NonFiniteLoss error so a
/// diverged run still yields its most recent usable parameters.
#[derive(Debug, Clone)]
pub struct Salvage {
    pub emulator: TrainedEmulator,
    pub log: TrainingLog,
}

/// Trains an emulator on the dataset. Deterministic given the config seed:
/// initialization, shuffling, and every update are seeded. A non-finite
/// epoch loss aborts with the offending epoch plus the last checkpoint
/// whose loss was still finite.
pub fn train(
    ds: &StencilDataset,
    arch: &EmulatorArchitecture,
    config: &TrainConfig,
) -> Result<(TrainedEmulator, TrainingLog)> {
    arch.validate()?;
    if ds.count() == 0 {
        return Err(Error::InvalidSpec("cannot train on an empty dataset".into()));
    }
    if let BatchMode::MiniBatch(b) = config.batch {
        if b == 0 {
            return Err(Error::InvalidSpec("mini-batch size must be positive".into()));
        }
    }

    let norm = Normalization::from_dataset(ds)?;
    let x = norm.normalize_inputs(&ds.inputs_array());
    let y = norm.normalize_labels(&ds.labels_array());
    let z = x.nrows();
    // MSE scales quadratically under the label standardization, so the
    // original-units loss is recovered exactly from the normalized one.
    let to_original = norm.label_std * norm.label_std;

    let mut params = init_params(arch, config.seed);
    let mut adam = AdamState::new(params.len());
    // Stream tag keeps the shuffle independent of the init draws.
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(split_seed(config.seed, 0x5f1e));
    let mut log = TrainingLog::default();
    // Parameters as of the latest epoch that evaluated to a finite loss.
    let mut certified: Option<Vec<f64>> = None;

    let salvage = |certified: Option<Vec<f64>>,
                   log: &TrainingLog,
                   norm: &Normalization,
                   epoch: usize|
     -> Error {
        let checkpoint = certified.and_then(|p| {
            let (loss, _) = loss_and_grad(arch, &p, &x, &y);
            // A finite loss certifies the outputs, not every parameter;
            // drop the checkpoint in the freak case the params themselves
            // fail validation.
            TrainedEmulator::new(*arch, p, norm.clone(), config.seed)
                .ok()
                .map(|mut model| {
                    model.final_mse_normalized = loss;
                    model.final_mse_original = loss * to_original;
                    Box::new(Salvage {
                        emulator: model,
                        log: log.clone(),
                    })
                })
        });
        Error::NonFiniteLoss { epoch, checkpoint }
    };

    let mut order: Vec<usize> = (0..z).collect();
    for epoch in 0..config.epochs {
        let lr = cosine_lr(config.initial_lr, epoch, config.epochs);
        let epoch_start = params.clone();
        let epoch_loss = match config.batch {
            BatchMode::FullBatch => {
                let (loss, grad) = loss_and_grad(arch, &params, &x, &y);
                if !loss.is_finite() {
                    return Err(salvage(certified, &log, &norm, epoch));
                }
                adam_step(&mut adam, &mut params, &grad, lr, config.betas, config.eps);
                loss
            }
            BatchMode::MiniBatch(b) => {
                // Fisher-Yates reshuffle each epoch; batches tile the
                // permutation in order.
                for i in (1..z).rev() {
                    order.swap(i, shuffle_rng.gen_range(0..=i));
                }
                let mut weighted = 0.0;
                for chunk in order.chunks(b) {
                    let xb = gather_rows(&x, chunk);
                    let yb = Array1::from_iter(chunk.iter().map(|&i| y[i]));
                    let (loss, grad) = loss_and_grad(arch, &params, &xb, &yb);
                    if !loss.is_finite() {
                        return Err(salvage(certified, &log, &norm, epoch));
                    }
                    adam_step(&mut adam, &mut params, &grad, lr, config.betas, config.eps);
                    weighted += loss * chunk.len() as f64;
                }
                weighted / z as f64
            }
        };
        // The loss certifies the parameters it was computed at, i.e. the
        // state on entry to this epoch, not the just-updated one.
        certified = Some(epoch_start);
        log.rows.push(LogRow {
            epoch,
            lr,
            mse_normalized: epoch_loss,
            mse_original: epoch_loss * to_original,
        });
    }

    // Post-training loss over the full set, for the model header.
    let (final_loss, _) = loss_and_grad(arch, &params, &x, &y);
    if !final_loss.is_finite() {
        return Err(salvage(certified, &log, &norm, config.epochs));
    }
    let mut model = TrainedEmulator::new(*arch, params, norm, config.seed)?;
    model.final_mse_normalized = final_loss;
    model.final_mse_original = final_loss * to_original;
    Ok((model, log))
}

fn gather_rows(x: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), x.ncols()));
    for (dst, &src) in rows.iter().enumerate() {
        out.row_mut(dst).assign(&x.row(src));
    }
    out
}
