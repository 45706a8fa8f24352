//! Principal component analysis of stencil datasets and PCA-guided stencil
//! synthesis by rejection sampling in score space.
//!
//! With m = 5 the covariance is tiny, so the eigendecomposition is a plain
//! cyclic Jacobi iteration; no linear-algebra dependency is warranted.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::StencilDataset;
use crate::error::{Error, Result};
use crate::pde::{Stencil, STENCIL_LEN};
use crate::sobol::SobolSequence;

/// Quasi-random or pseudo-random driver for designed draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceKind {
    Uniform,
    Sobol,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    pub mean: [f64; STENCIL_LEN],
    /// Columns are principal directions, descending eigenvalue order, sign
    /// fixed so each column's largest-magnitude entry is positive.
    pub loadings: Array2<f64>,
    pub eigenvalues: [f64; STENCIL_LEN],
    pub score_lo: [f64; STENCIL_LEN],
    pub score_hi: [f64; STENCIL_LEN],
    pub rank: usize,
    /// Components whose eigenvalue is numerically zero relative to the
    /// largest; draws along them collapse to the mean.
    pub degenerate: [bool; STENCIL_LEN],
}

impl PcaBasis {
    pub fn project(&self, s: &Stencil) -> [f64; STENCIL_LEN] {
        let mut z = [0.0; STENCIL_LEN];
        for (k, zk) in z.iter_mut().enumerate() {
            for r in 0..STENCIL_LEN {
                *zk += self.loadings[(r, k)] * (s.0[r] - self.mean[r]);
            }
        }
        z
    }

    pub fn back_project(&self, z: &[f64; STENCIL_LEN]) -> Stencil {
        let mut s = self.mean;
        for (r, sr) in s.iter_mut().enumerate() {
            for k in 0..STENCIL_LEN {
                *sr += self.loadings[(r, k)] * z[k];
            }
        }
        Stencil(s)
    }
}

/// Jacobi eigendecomposition of a symmetric matrix; returns (eigenvalues,
/// eigenvector columns) in descending eigenvalue order.
fn jacobi_eigen(mut a: Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut v = Array2::eye(n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off <= 1e-30 * a.diag().mapv(|d| d * d).sum().max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(y, y)].partial_cmp(&a[(x, x)]).unwrap());
    let eigvals = Array1::from_iter(order.iter().map(|&k| a[(k, k)]));
    let mut eigvecs = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            eigvecs[(r, dst)] = v[(r, src)];
        }
    }
    (eigvals, eigvecs)
}

/// Full PCA of the dataset's inputs: sample mean, covariance eigenvectors,
/// and empirical score bounds. Numerically zero components are flagged, not
/// fatal.
pub fn fit_pca(ds: &StencilDataset) -> Result<PcaBasis> {
    let z = ds.count();
    if z < 2 {
        return Err(Error::InvalidSpec(format!(
            "PCA needs at least 2 samples, got {z}"
        )));
    }
    let inputs = ds.inputs_array();
    let mut mean = [0.0; STENCIL_LEN];
    for row in inputs.rows() {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= z as f64;
    }

    let mut cov = Array2::zeros((STENCIL_LEN, STENCIL_LEN));
    for row in inputs.rows() {
        let mut d = [0.0; STENCIL_LEN];
        for (k, (dv, &v)) in d.iter_mut().zip(row).enumerate() {
            *dv = v - mean[k];
        }
        for r in 0..STENCIL_LEN {
            for c in r..STENCIL_LEN {
                cov[(r, c)] += d[r] * d[c];
            }
        }
    }
    for r in 0..STENCIL_LEN {
        for c in r..STENCIL_LEN {
            cov[(r, c)] /= (z - 1) as f64;
            cov[(c, r)] = cov[(r, c)];
        }
    }

    let (eigvals, mut eigvecs) = jacobi_eigen(cov);
    // Sign convention: the largest-magnitude entry of each column positive.
    for k in 0..STENCIL_LEN {
        let mut best = 0;
        for r in 1..STENCIL_LEN {
            if eigvecs[(r, k)].abs() > eigvecs[(best, k)].abs() {
                best = r;
            }
        }
        if eigvecs[(best, k)] < 0.0 {
            for r in 0..STENCIL_LEN {
                eigvecs[(r, k)] = -eigvecs[(r, k)];
            }
        }
    }

    let max_eig = eigvals[0].max(0.0);
    let mut degenerate = [false; STENCIL_LEN];
    let mut eigenvalues = [0.0; STENCIL_LEN];
    for k in 0..STENCIL_LEN {
        eigenvalues[k] = eigvals[k];
        degenerate[k] = eigvals[k] <= 1e-12 * max_eig.max(f64::MIN_POSITIVE);
    }

    let mut basis = PcaBasis {
        mean,
        loadings: eigvecs,
        eigenvalues,
        score_lo: [f64::INFINITY; STENCIL_LEN],
        score_hi: [f64::NEG_INFINITY; STENCIL_LEN],
        rank: STENCIL_LEN,
        degenerate,
    };
    for s in ds.samples() {
        let scores = basis.project(&s.input);
        for k in 0..STENCIL_LEN {
            basis.score_lo[k] = basis.score_lo[k].min(scores[k]);
            basis.score_hi[k] = basis.score_hi[k].max(scores[k]);
        }
    }
    Ok(basis)
}

/// Draws stencils by mapping unit-cube points into the empirical score
/// hyper-rectangle, back-projecting, and rejecting anything outside the
/// componentwise state range. Deterministic given (sequence, seed).
pub fn pca_stencils(
    basis: &PcaBasis,
    range: (f64, f64),
    count: usize,
    sequence: SequenceKind,
    seed: u64,
    max_attempts: usize,
) -> Result<Vec<Stencil>> {
    assert!(max_attempts >= count, "attempt budget below requested count");
    let (lo, hi) = range;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sobol = SobolSequence::new(STENCIL_LEN)?;
    if sequence == SequenceKind::Sobol {
        sobol.next_point(); // drop the all-zero point
    }

    let mut accepted = Vec::with_capacity(count);
    let mut attempts = 0;
    while accepted.len() < count && attempts < max_attempts {
        attempts += 1;
        let unit: Vec<f64> = match sequence {
            SequenceKind::Uniform => (0..STENCIL_LEN).map(|_| rng.gen::<f64>()).collect(),
            SequenceKind::Sobol => sobol.next_point(),
        };
        let mut z = [0.0; STENCIL_LEN];
        for k in 0..STENCIL_LEN {
            z[k] = basis.score_lo[k] + unit[k] * (basis.score_hi[k] - basis.score_lo[k]);
        }
        let s = basis.back_project(&z);
        if s.0.iter().all(|&v| v >= lo && v <= hi) {
            accepted.push(s);
        }
    }
    if accepted.len() < count {
        return Err(Error::AcceptanceTooLow {
            accepted: accepted.len(),
            requested: count,
            attempts,
            rate: accepted.len() as f64 / attempts as f64,
        });
    }
    Ok(accepted)
}
