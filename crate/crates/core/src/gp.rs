//! Gaussian random fields with a squared-exponential kernel, sampled by
//! circulant spectral synthesis on the periodic grid.
//!
//! The covariance of grid values is block-circulant once the kernel is
//! periodized (wrapped over neighbor images), so its eigenvalues are the 2D
//! DFT of the base row and a draw is a linear combination of Fourier modes
//! with independent complex Gaussian weights. No FFT library is needed: the
//! kernel is separable, so the synthesis runs as two O(N^3) passes.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BoundaryCondition, Field2D, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpSpec {
    pub mean_value: f64,
    /// Kernel length scale as a fraction of the domain length.
    pub kernel_length_scale: f64,
    pub kernel_variance: f64,
    pub seed: u64,
}

impl GpSpec {
    pub fn new(mean_value: f64, kernel_length_scale: f64, kernel_variance: f64, seed: u64) -> Result<Self> {
        if !(kernel_length_scale > 0.0 && kernel_length_scale <= 1.0) {
            return Err(Error::InvalidSpec(format!(
                "kernel length scale must lie in (0, 1], got {kernel_length_scale}"
            )));
        }
        if !(kernel_variance > 0.0) || !kernel_variance.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "kernel variance must be positive, got {kernel_variance}"
            )));
        }
        if !mean_value.is_finite() {
            return Err(Error::InvalidSpec("mean value must be finite".into()));
        }
        Ok(Self {
            mean_value,
            kernel_length_scale,
            kernel_variance,
            seed,
        })
    }

    /// Same spec with a different seed; convenient for drawing families.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

impl Default for GpSpec {
    fn default() -> Self {
        Self {
            mean_value: 0.0,
            kernel_length_scale: 0.1,
            kernel_variance: 0.25,
            seed: 0,
        }
    }
}

/// One-axis periodized kernel factor g(p) = sum over wrap images of
/// exp(-d^2 / (2 l^2)). The squared-exponential kernel factorizes over axes,
/// so the full base row is variance * g(p) * g(q).
fn axis_kernel(spec: &GpSpec, grid: &GridSpec) -> Vec<f64> {
    let n = grid.n();
    let l = spec.kernel_length_scale * grid.length();
    let mut g = vec![0.0; n];
    for (p, gp) in g.iter_mut().enumerate() {
        for image in [-1.0f64, 0.0, 1.0] {
            let d = (p as f64 / n as f64 - image) * grid.length();
            *gp += (-d * d / (2.0 * l * l)).exp();
        }
    }
    g
}

/// Eigenvalues of the one-axis circulant factor: the real DFT of `g`.
fn axis_eigenvalues(g: &[f64]) -> Vec<f64> {
    let n = g.len();
    let mut lam = vec![0.0; n];
    for (a, la) in lam.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (p, gp) in g.iter().enumerate() {
            acc += gp * (2.0 * std::f64::consts::PI * (a * p) as f64 / n as f64).cos();
        }
        *la = acc;
    }
    lam
}

/// Square roots of the 2D covariance eigenvalues, negatives clamped to zero.
fn sqrt_eigenvalues(spec: &GpSpec, grid: &GridSpec) -> Result<Array2<f64>> {
    let g = axis_kernel(spec, grid);
    let lam_axis = axis_eigenvalues(&g);
    let n = grid.n();
    let mut lam = Array2::zeros((n, n));
    let mut max_lam = 0.0f64;
    for a in 0..n {
        for b in 0..n {
            let v = (spec.kernel_variance * lam_axis[a] * lam_axis[b]).max(0.0);
            max_lam = max_lam.max(v);
            lam[(a, b)] = v.sqrt();
        }
    }
    if max_lam == 0.0 {
        return Err(Error::DegenerateKernel);
    }
    Ok(lam)
}

/// Reconstructs the stationary covariance c(dp, dq) implied by the spectral
/// synthesis; cross-validation hook for the dense reference path.
pub fn implied_covariance(spec: &GpSpec, grid: &GridSpec) -> Result<Array2<f64>> {
    let lam_sqrt = sqrt_eigenvalues(spec, grid)?;
    let n = grid.n();
    let mut cov = Array2::zeros((n, n));
    for dp in 0..n {
        for dq in 0..n {
            let mut acc = 0.0;
            for a in 0..n {
                for b in 0..n {
                    let lam = lam_sqrt[(a, b)] * lam_sqrt[(a, b)];
                    let phase =
                        2.0 * std::f64::consts::PI * ((a * dp + b * dq) as f64) / n as f64;
                    acc += lam * phase.cos();
                }
            }
            cov[(dp, dq)] = acc / (n * n) as f64;
        }
    }
    Ok(cov)
}

/// Periodized kernel covariance between cells at offset (dp, dq); the
/// analytic counterpart of `implied_covariance`.
pub fn periodized_kernel(spec: &GpSpec, grid: &GridSpec, dp: usize, dq: usize) -> f64 {
    let g = axis_kernel(spec, grid);
    spec.kernel_variance * g[dp] * g[dq]
}

/// Draws one GP field. The periodic flag tags the returned field's boundary
/// condition; the draw itself is always the exactly periodic spectral
/// synthesis. Non-periodic fields (the cubic-source system) are clamped to
/// [-1, 1] to keep the source well scaled.
pub fn sample_field(spec: &GpSpec, grid: &GridSpec, periodic: bool) -> Result<Field2D> {
    let lam_sqrt = sqrt_eigenvalues(spec, grid)?;
    let n = grid.n();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Coefficient draw order is (a, b) row-major, real part then imaginary,
    // which pins the stream layout for reproducibility.
    let mut coeff = Array2::from_elem((n, n), (0.0f64, 0.0f64));
    for a in 0..n {
        for b in 0..n {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            let s = lam_sqrt[(a, b)];
            coeff[(a, b)] = (s * re, s * im);
        }
    }

    let (cos_t, sin_t): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            (t.cos(), t.sin())
        })
        .unzip();

    // Pass 1: contract over b. half[(a, m2)] = sum_b coeff[a,b] * W^(b*m2).
    let mut half = Array2::from_elem((n, n), (0.0f64, 0.0f64));
    for a in 0..n {
        for m2 in 0..n {
            let mut acc_re = 0.0;
            let mut acc_im = 0.0;
            for b in 0..n {
                let (re, im) = coeff[(a, b)];
                let idx = (b * m2) % n;
                let (c, s) = (cos_t[idx], sin_t[idx]);
                acc_re += re * c - im * s;
                acc_im += re * s + im * c;
            }
            half[(a, m2)] = (acc_re, acc_im);
        }
    }

    // Pass 2: contract over a and keep the real part.
    let mut values = Array2::zeros((n, n));
    for m1 in 0..n {
        for m2 in 0..n {
            let mut acc = 0.0;
            for a in 0..n {
                let (re, im) = half[(a, m2)];
                let idx = (a * m1) % n;
                acc += re * cos_t[idx] - im * sin_t[idx];
            }
            values[(m1, m2)] = spec.mean_value + acc / n as f64;
        }
    }

    let boundary = if periodic {
        BoundaryCondition::Periodic
    } else {
        BoundaryCondition::ZeroGradient
    };
    let mut field = Field2D::new(*grid, boundary, values)?;
    if !periodic {
        field.clamp(-1.0, 1.0);
    }
    Ok(field)
}

/// Dense reference path: explicit covariance matrix plus Cholesky. Same
/// periodized kernel, so the distribution matches the spectral path. Costs
/// O(N^6); intended for cross-validation on grids up to 16x16.
pub fn sample_field_dense(spec: &GpSpec, grid: &GridSpec, periodic: bool) -> Result<Field2D> {
    let n = grid.n();
    assert!(n <= 16, "dense reference path is limited to 16x16 grids");
    let g = axis_kernel(spec, grid);
    let m = n * n;

    let mut cov = vec![0.0f64; m * m];
    for r in 0..m {
        let (i1, j1) = (r / n, r % n);
        for c in 0..m {
            let (i2, j2) = (c / n, c % n);
            let dp = (i1 + n - i2) % n;
            let dq = (j1 + n - j2) % n;
            cov[r * m + c] = spec.kernel_variance * g[dp] * g[dq];
        }
    }

    // In-place lower Cholesky with a small diagonal jitter; the periodized
    // covariance is only semidefinite up to rounding.
    let jitter = 1e-12 * spec.kernel_variance;
    let mut chol = vec![0.0f64; m * m];
    for r in 0..m {
        for c in 0..=r {
            let mut sum = cov[r * m + c];
            for k in 0..c {
                sum -= chol[r * m + k] * chol[c * m + k];
            }
            if r == c {
                let d = sum + jitter;
                if d <= 0.0 {
                    return Err(Error::DegenerateKernel);
                }
                chol[r * m + c] = d.sqrt();
            } else {
                chol[r * m + c] = sum / chol[c * m + c];
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let z: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut values = Array2::zeros((n, n));
    for r in 0..m {
        let mut acc = spec.mean_value;
        for k in 0..=r {
            acc += chol[r * m + k] * z[k];
        }
        values[(r / n, r % n)] = acc;
    }

    let boundary = if periodic {
        BoundaryCondition::Periodic
    } else {
        BoundaryCondition::ZeroGradient
    };
    let mut field = Field2D::new(*grid, boundary, values)?;
    if !periodic {
        field.clamp(-1.0, 1.0);
    }
    Ok(field)
}
