//! The stencil emulator: a residual MLP over standardized stencil inputs
//! predicting the standardized time derivative at the center cell.
//!
//! Parameters live in one flat vector with a fixed canonical layout (input
//! projection, residual blocks in order, output head; weights row-major,
//! biases after their weight). Everything downstream (initialization,
//! gradients, the model file) indexes into that layout.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::StencilDataset;
use crate::error::{Error, Result};
use crate::io::{read_f64s, write_f64s};
use crate::pde::Stencil;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    Gelu,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Gelu => gelu(z),
        }
    }

    /// Derivative at pre-activation `z`, given the already-computed
    /// activation `a` (lets tanh reuse 1 - a^2).
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Gelu => gelu_prime(z),
        }
    }
}

// Tanh-form approximation; the emulator never needs erf elsewhere, so the
// usual 0.044715 cubic form is used throughout, including its derivative.
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[inline]
fn gelu(z: f64) -> f64 {
    0.5 * z * (1.0 + (GELU_C * (z + 0.044715 * z * z * z)).tanh())
}

#[inline]
fn gelu_prime(z: f64) -> f64 {
    let u = GELU_C * (z + 0.044715 * z * z * z);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * z * z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmulatorArchitecture {
    pub input_dim: usize,
    pub hidden_width: usize,
    pub n_residual_blocks: usize,
    pub activation: Activation,
}

impl Default for EmulatorArchitecture {
    fn default() -> Self {
        Self {
            input_dim: 5,
            hidden_width: 64,
            n_residual_blocks: 2,
            activation: Activation::Tanh,
        }
    }
}

impl EmulatorArchitecture {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_width == 0 {
            return Err(Error::InvalidSpec(
                "architecture dimensions must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let (m, h, b) = (self.input_dim, self.hidden_width, self.n_residual_blocks);
        h * m + h + b * 2 * (h * h + h) + h + 1
    }
}

/// Offsets of each tensor inside the flat parameter vector, in canonical
/// order. `rows x cols` with cols = 1 for biases.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TensorSpec {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

pub(crate) fn layout(arch: &EmulatorArchitecture) -> Vec<TensorSpec> {
    let (m, h) = (arch.input_dim, arch.hidden_width);
    let mut specs = Vec::with_capacity(4 + 4 * arch.n_residual_blocks);
    let mut offset = 0;
    let mut push = |rows: usize, cols: usize| {
        specs.push(TensorSpec { offset, rows, cols });
        offset += rows * cols;
    };
    push(h, m); // input projection
    push(h, 1);
    for _ in 0..arch.n_residual_blocks {
        push(h, h); // first layer of the block
        push(h, 1);
        push(h, h); // second layer
        push(h, 1);
    }
    push(1, h); // output head
    push(1, 1);
    specs
}

fn view2<'a>(params: &'a [f64], t: &TensorSpec) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((t.rows, t.cols), &params[t.offset..t.offset + t.rows * t.cols])
        .expect("layout offsets are consistent")
}

fn view1<'a>(params: &'a [f64], t: &TensorSpec) -> ArrayView1<'a, f64> {
    ArrayView1::from(&params[t.offset..t.offset + t.rows * t.cols])
}

/// Per-layer forward state kept for backpropagation.
#[derive(Debug)]
pub(crate) struct BlockCache {
    pub z1: Array2<f64>,
    pub a1: Array2<f64>,
    pub z2: Array2<f64>,
    pub a2: Array2<f64>,
}

#[derive(Debug)]
pub(crate) struct Cache {
    pub z_in: Array2<f64>,
    /// residuals[0] is the input-projection activation; residuals[k] the
    /// output of block k. The last entry feeds the output head.
    pub residuals: Vec<Array2<f64>>,
    pub blocks: Vec<BlockCache>,
}

/// Runs the network on pre-normalized inputs (rows are samples). Returns
/// normalized predictions, plus the layer cache when requested.
pub(crate) fn net_apply(
    arch: &EmulatorArchitecture,
    params: &[f64],
    x: &Array2<f64>,
    want_cache: bool,
) -> (Array1<f64>, Option<Cache>) {
    debug_assert_eq!(params.len(), arch.param_count());
    let specs = layout(arch);
    let act = arch.activation;

    let w_in = view2(params, &specs[0]);
    let b_in = view1(params, &specs[1]);
    let z_in = x.dot(&w_in.t()) + &b_in;
    let a_in = z_in.mapv(|z| act.apply(z));

    let mut residuals = vec![a_in];
    let mut blocks = Vec::with_capacity(arch.n_residual_blocks);
    for k in 0..arch.n_residual_blocks {
        let base = 2 + 4 * k;
        let w1 = view2(params, &specs[base]);
        let b1 = view1(params, &specs[base + 1]);
        let w2 = view2(params, &specs[base + 2]);
        let b2 = view1(params, &specs[base + 3]);

        let r_in = residuals.last().expect("input activation is present");
        let z1 = r_in.dot(&w1.t()) + &b1;
        let a1 = z1.mapv(|z| act.apply(z));
        let z2 = a1.dot(&w2.t()) + &b2;
        let a2 = z2.mapv(|z| act.apply(z));
        let r_out = r_in + &a2;
        residuals.push(r_out);
        blocks.push(BlockCache { z1, a1, z2, a2 });
    }

    let w_out = view1(params, &specs[2 + 4 * arch.n_residual_blocks]);
    let b_out = params[specs[3 + 4 * arch.n_residual_blocks].offset];
    let pred = residuals.last().expect("non-empty").dot(&w_out) + b_out;

    let cache = want_cache.then_some(Cache {
        z_in,
        residuals,
        blocks,
    });
    (pred, cache)
}

/// Standardization statistics frozen at training time. Population divisor;
/// exactly-constant components keep std 1 and are flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub input_degenerate: Vec<bool>,
    pub label_mean: f64,
    pub label_std: f64,
    pub label_degenerate: bool,
}

impl Normalization {
    pub fn from_dataset(ds: &StencilDataset) -> Result<Self> {
        if ds.count() == 0 {
            return Err(Error::InvalidSpec(
                "cannot standardize an empty dataset".into(),
            ));
        }
        let inputs = ds.inputs_array();
        let labels = ds.labels_array();
        let m = inputs.ncols();
        let z = inputs.nrows() as f64;

        let mut input_mean = vec![0.0; m];
        let mut input_std = vec![0.0; m];
        let mut input_degenerate = vec![false; m];
        for c in 0..m {
            let col = inputs.column(c);
            let mean = col.sum() / z;
            let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / z;
            let std = var.sqrt();
            input_mean[c] = mean;
            if std > 0.0 {
                input_std[c] = std;
            } else {
                input_std[c] = 1.0;
                input_degenerate[c] = true;
            }
        }

        let label_mean = labels.sum() / z;
        let label_var = labels
            .iter()
            .map(|&v| (v - label_mean) * (v - label_mean))
            .sum::<f64>()
            / z;
        let label_std = label_var.sqrt();
        let (label_std, label_degenerate) = if label_std > 0.0 {
            (label_std, false)
        } else {
            (1.0, true)
        };

        Ok(Self {
            input_mean,
            input_std,
            input_degenerate,
            label_mean,
            label_std,
            label_degenerate,
        })
    }

    pub fn normalize_inputs(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (*v - self.input_mean[c]) / self.input_std[c];
            }
        }
        out
    }

    pub fn normalize_labels(&self, y: &Array1<f64>) -> Array1<f64> {
        y.mapv(|v| (v - self.label_mean) / self.label_std)
    }

    pub fn denormalize_labels(&self, y: &Array1<f64>) -> Array1<f64> {
        y.mapv(|v| v * self.label_std + self.label_mean)
    }
}

/// A trained emulator: parameters plus the normalization frozen at training
/// time and the training provenance needed to reproduce it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedEmulator {
    pub arch: EmulatorArchitecture,
    pub params: Vec<f64>,
    pub norm: Normalization,
    pub seed: u64,
    pub final_mse_normalized: f64,
    pub final_mse_original: f64,
}

impl TrainedEmulator {
    pub fn new(
        arch: EmulatorArchitecture,
        params: Vec<f64>,
        norm: Normalization,
        seed: u64,
    ) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.param_count() {
            return Err(Error::ShapeMismatch {
                context: format!(
                    "parameter vector has {} entries, architecture needs {}",
                    params.len(),
                    arch.param_count()
                ),
            });
        }
        if norm.input_mean.len() != arch.input_dim {
            return Err(Error::ShapeMismatch {
                context: format!(
                    "normalization covers {} inputs, architecture has {}",
                    norm.input_mean.len(),
                    arch.input_dim
                ),
            });
        }
        Ok(Self {
            arch,
            params,
            norm,
            seed,
            final_mse_normalized: f64::NAN,
            final_mse_original: f64::NAN,
        })
    }

    /// Predicted time derivative for a batch of stencils (rows), in
    /// original units.
    pub fn forward_batch(&self, inputs: &Array2<f64>) -> Array1<f64> {
        let x = self.norm.normalize_inputs(inputs);
        let (pred, _) = net_apply(&self.arch, &self.params, &x, false);
        self.norm.denormalize_labels(&pred)
    }

    /// Single-stencil forward: exactly a batch of one.
    pub fn forward(&self, s: &Stencil) -> f64 {
        let x = Array2::from_shape_vec((1, s.0.len()), s.0.to_vec()).expect("fixed shape");
        self.forward_batch(&x)[0]
    }
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    arch: EmulatorArchitecture,
    norm: Normalization,
    seed: u64,
    final_mse_normalized: f64,
    final_mse_original: f64,
    param_count: usize,
}

/// Single-file format: one compact JSON header line, then the parameter
/// vector as little-endian float64 in canonical layout order.
pub fn save_model(path: &Path, model: &TrainedEmulator) -> Result<()> {
    let header = ModelHeader {
        arch: model.arch,
        norm: model.norm.clone(),
        seed: model.seed,
        final_mse_normalized: model.final_mse_normalized,
        final_mse_original: model.final_mse_original,
        param_count: model.params.len(),
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    write_f64s(&mut w, model.params.iter().copied())?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TrainedEmulator> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header_line = String::new();
    r.read_line(&mut header_line)?;
    let header: ModelHeader = serde_json::from_str(&header_line)?;
    if header.param_count != header.arch.param_count() {
        return Err(Error::MalformedFile(format!(
            "header lists {} parameters, architecture needs {}",
            header.param_count,
            header.arch.param_count()
        )));
    }
    let params = read_f64s(&mut r, header.param_count)?;
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::MalformedFile(
            "model file contains non-finite parameters".into(),
        ));
    }
    let mut model = TrainedEmulator::new(header.arch, params, header.norm, header.seed)?;
    model.final_mse_normalized = header.final_mse_normalized;
    model.final_mse_original = header.final_mse_original;
    Ok(model)
}
