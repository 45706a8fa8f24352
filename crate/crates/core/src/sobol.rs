//! Unscrambled Sobol' sequence in up to 16 dimensions.
//!
//! Direction numbers come from the published Joe-Kuo tables; points are
//! generated in Gray-code order with 53 fractional bits so every coordinate
//! is an exactly representable dyadic rational. The raw sequence starts at
//! the all-zero point; callers that want space-filling draws usually skip it.

use ndarray::Array2;

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 16;
const BITS: u32 = 53;

/// Per-dimension primitive polynomial degrees.
const S: [u32; MAX_DIM] = [1, 2, 3, 3, 4, 4, 5, 5, 5, 5, 5, 5, 6, 6, 6, 6];
/// Encoded interior polynomial coefficients a_1..a_{s-1} (a_1 most
/// significant).
const A: [u64; MAX_DIM] = [0, 1, 1, 2, 1, 4, 2, 4, 7, 11, 13, 14, 1, 13, 16, 19];
/// Initial direction integers m_1..m_s.
const M: [&[u64]; MAX_DIM] = [
    &[1],
    &[1, 3],
    &[1, 3, 1],
    &[1, 1, 1],
    &[1, 1, 3, 3],
    &[1, 3, 5, 13],
    &[1, 1, 5, 5, 17],
    &[1, 1, 5, 5, 5],
    &[1, 1, 7, 11, 19],
    &[1, 1, 5, 1, 1],
    &[1, 1, 1, 3, 11],
    &[1, 3, 5, 5, 31],
    &[1, 3, 3, 9, 7, 49],
    &[1, 1, 1, 15, 21, 21],
    &[1, 3, 1, 13, 27, 49],
    &[1, 1, 1, 15, 7, 5],
];

/// Direction integers v_1..v_BITS for one dimension, scaled to BITS
/// fractional bits.
fn direction_integers(dim_index: usize) -> [u64; BITS as usize] {
    let s = S[dim_index] as usize;
    let a = A[dim_index];
    let mut m = [0u64; BITS as usize];
    m[..s].copy_from_slice(M[dim_index]);
    for k in s..BITS as usize {
        // m_k = 2 a_1 m_{k-1} ^ 4 a_2 m_{k-2} ^ ... ^ 2^s m_{k-s} ^ m_{k-s}
        let mut mk = (m[k - s] << s) ^ m[k - s];
        for i in 1..s {
            let a_i = (a >> (s - 1 - i)) & 1;
            if a_i == 1 {
                mk ^= m[k - i] << i;
            }
        }
        m[k] = mk;
    }
    let mut v = [0u64; BITS as usize];
    for (k, vk) in v.iter_mut().enumerate() {
        *vk = m[k] << (BITS as usize - 1 - k);
    }
    v
}

/// Streaming Gray-code generator; `next_point` yields the raw sequence
/// starting at the all-zero point.
#[derive(Debug, Clone)]
pub struct SobolSequence {
    v: Vec<[u64; BITS as usize]>,
    x: Vec<u64>,
    index: u64,
}

impl SobolSequence {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSpec("sobol dimension must be at least 1".into()));
        }
        if dim > MAX_DIM {
            return Err(Error::DimTooLarge { dim, max: MAX_DIM });
        }
        Ok(Self {
            v: (0..dim).map(direction_integers).collect(),
            x: vec![0; dim],
            index: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let scale = (-(BITS as i32) as f64).exp2();
        let point = self.x.iter().map(|&xi| xi as f64 * scale).collect();
        let bit = self.index.trailing_ones() as usize;
        assert!(bit < BITS as usize, "sobol sequence exhausted");
        for (xi, vi) in self.x.iter_mut().zip(&self.v) {
            *xi ^= vi[bit];
        }
        self.index += 1;
        point
    }
}

/// `count` consecutive points of the raw sequence after dropping the first
/// `skip` (index 0 is the all-zero point).
pub fn sobol_points(dim: usize, count: usize, skip: usize) -> Result<Array2<f64>> {
    let mut seq = SobolSequence::new(dim)?;
    for _ in 0..skip {
        seq.next_point();
    }
    let mut out = Array2::zeros((count, dim));
    for r in 0..count {
        let p = seq.next_point();
        out.row_mut(r).iter_mut().zip(&p).for_each(|(o, &v)| *o = v);
    }
    Ok(out)
}
