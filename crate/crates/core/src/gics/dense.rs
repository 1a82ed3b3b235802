//! Row-major dense products with a fixed summation order, so results are
//! bit-identical for any number of rayon workers.

use rayon::prelude::*;

const COL_BLOCK: usize = 256;
/// Below this many matrix entries the products run on the calling thread.
const PAR_MIN_LEN: usize = 1 << 15;

/// Four-lane dot product; the lane split is fixed, not data dependent.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let k = 4 * i;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in 4 * chunks..a.len() {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `out = A x` for a row-major `m x n` matrix.
pub(crate) fn gemv(a: &[f64], n: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(a.len(), out.len() * n);
    if a.len() < PAR_MIN_LEN {
        for (o, row) in out.iter_mut().zip(a.chunks(n)) {
            *o = dot(row, x);
        }
        return;
    }
    out.par_iter_mut()
        .zip(a.par_chunks(n))
        .for_each(|(o, row)| *o = dot(row, x));
}

/// `out = Aᵀ y`, parallel over column blocks with rows summed in order.
pub(crate) fn gemv_t(a: &[f64], n: usize, y: &[f64], out: &mut [f64]) {
    debug_assert_eq!(a.len(), y.len() * n);
    let block = |(blk, o): (usize, &mut [f64])| {
        o.fill(0.0);
        let start = blk * COL_BLOCK;
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            let row = &a[i * n + start..i * n + start + o.len()];
            for (oj, aj) in o.iter_mut().zip(row) {
                *oj += yi * aj;
            }
        }
    };
    if a.len() < PAR_MIN_LEN {
        out.chunks_mut(COL_BLOCK).enumerate().for_each(block);
    } else {
        out.par_chunks_mut(COL_BLOCK).enumerate().for_each(block);
    }
}

pub(crate) fn norm_sq(v: &[f64]) -> f64 {
    dot(v, v)
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
