//! Dense row-major matrices and order-stable summation kernels.
//!
//! Every reduction in this crate that feeds a convergence test goes through
//! the blocked pairwise kernels below. The block structure is fixed, so the
//! parallel paths produce bit-identical results to the sequential ones
//! regardless of thread count.

use rayon::prelude::*;

/// Leaf size below which pairwise recursion switches to a sequential loop.
const PAIRWISE_LEAF: usize = 64;

/// Rows per parallel work item in the matrix kernels.
const ROW_BLOCK: usize = 256;

/// Element count under which the matrix kernels stay sequential.
const PAR_THRESHOLD: usize = 1 << 16;

/// Pairwise (cascade) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_LEAF {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise dot product of two equally long slices.
pub fn pairwise_dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot: length mismatch");
    if a.len() <= PAIRWISE_LEAF {
        let mut acc = 0.0;
        for (&x, &y) in a.iter().zip(b) {
            acc += x * y;
        }
        return acc;
    }
    let mid = a.len() / 2;
    pairwise_dot(&a[..mid], &b[..mid]) + pairwise_dot(&a[mid..], &b[mid..])
}

/// Pairwise sum of `f(x)` over a slice, propagating the first error.
pub fn try_pairwise_map_sum<E, F>(xs: &[f64], f: &F) -> Result<f64, E>
where
    F: Fn(f64) -> Result<f64, E>,
{
    if xs.len() <= PAIRWISE_LEAF {
        let mut acc = 0.0;
        for &x in xs {
            acc += f(x)?;
        }
        return Ok(acc);
    }
    let mid = xs.len() / 2;
    Ok(try_pairwise_map_sum(&xs[..mid], f)? + try_pairwise_map_sum(&xs[mid..], f)?)
}

/// Euclidean norm via pairwise accumulation.
pub fn norm2(xs: &[f64]) -> f64 {
    pairwise_dot(xs, xs).sqrt()
}

/// Max-norm.
pub fn norm_inf(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix: shape/data mismatch");
        Matrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Copy of the row range `[lo, hi)`.
    pub fn row_slice(&self, lo: usize, hi: usize) -> Matrix {
        assert!(lo <= hi && hi <= self.rows);
        Matrix {
            rows: hi - lo,
            cols: self.cols,
            data: self.data[lo * self.cols..hi * self.cols].to_vec(),
        }
    }

    /// `R * x`. Each output element is an independent row dot, so the
    /// parallel path is trivially bit-identical to the sequential one.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec: length mismatch");
        let mut out = vec![0.0; self.rows];
        if self.data.len() < PAR_THRESHOLD {
            for (i, o) in out.iter_mut().enumerate() {
                *o = pairwise_dot(self.row(i), x);
            }
        } else {
            out.par_chunks_mut(ROW_BLOCK)
                .enumerate()
                .for_each(|(b, chunk)| {
                    let base = b * ROW_BLOCK;
                    for (k, o) in chunk.iter_mut().enumerate() {
                        *o = pairwise_dot(self.row(base + k), x);
                    }
                });
        }
        out
    }

    /// `R^T * v`, accumulated over fixed row blocks whose partial sums are
    /// folded in block order.
    pub fn matvec_t(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows, "matvec_t: length mismatch");
        let partial = |b: usize| -> Vec<f64> {
            let lo = b * ROW_BLOCK;
            let hi = (lo + ROW_BLOCK).min(self.rows);
            let mut acc = vec![0.0; self.cols];
            for i in lo..hi {
                let vi = v[i];
                for (a, &r) in acc.iter_mut().zip(self.row(i)) {
                    *a += vi * r;
                }
            }
            acc
        };
        let nblocks = self.rows.div_ceil(ROW_BLOCK);
        let partials: Vec<Vec<f64>> = if self.data.len() < PAR_THRESHOLD {
            (0..nblocks).map(partial).collect()
        } else {
            (0..nblocks).into_par_iter().map(partial).collect()
        };
        let mut out = vec![0.0; self.cols];
        for p in partials {
            for (o, x) in out.iter_mut().zip(p) {
                *o += x;
            }
        }
        out
    }

    /// Column means, recomputed deterministically.
    pub fn col_means(&self) -> Vec<f64> {
        let ones = vec![1.0; self.rows];
        let mut s = self.matvec_t(&ones);
        let inv = 1.0 / self.rows as f64;
        for x in &mut s {
            *x *= inv;
        }
        s
    }
}

/// Two-pass mean and population variance. A bitwise-constant series reports
/// exactly zero variance, so degenerate inputs do not leak rounding noise
/// into ratio metrics.
pub fn mean_and_population_var(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    if xs.iter().all(|&x| x == xs[0]) {
        return (xs[0], 0.0);
    }
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    let dev: Vec<f64> = xs.iter().map(|&x| (x - mean) * (x - mean)).collect();
    (mean, pairwise_sum(&dev) / n)
}

/// `n` evenly spaced points on `[lo, hi]`; a single point collapses to `lo`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + step * i as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_small_inputs() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-10);
    }

    #[test]
    fn matvec_shapes_and_values() {
        let m = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(m.matvec(&[1.0, 0.0, -1.0]), vec![-2.0, -2.0]);
        assert_eq!(m.matvec_t(&[1.0, 1.0]), vec![5.0, 7.0, 9.0]);
        assert_eq!(m.col_means(), vec![2.5, 3.5, 4.5]);
    }

    #[test]
    fn parallel_kernels_match_sequential_bitwise() {
        // Large enough to cross PAR_THRESHOLD and span several row blocks.
        let rows = 3 * ROW_BLOCK + 17;
        let cols = 37;
        let data: Vec<f64> = (0..rows * cols)
            .map(|i| ((i * 2654435761 % 1000) as f64 - 500.0) / 251.0)
            .collect();
        let m = Matrix::from_vec(rows, cols, data);
        let x: Vec<f64> = (0..cols).map(|j| (j as f64 * 0.37).cos()).collect();
        let v: Vec<f64> = (0..rows).map(|i| (i as f64 * 0.11).sin()).collect();

        // Sequential reference with the same block structure.
        let mut seq_mv = vec![0.0; rows];
        for (i, o) in seq_mv.iter_mut().enumerate() {
            *o = pairwise_dot(m.row(i), &x);
        }
        let mut seq_mt = vec![0.0; cols];
        for b in 0..rows.div_ceil(ROW_BLOCK) {
            let lo = b * ROW_BLOCK;
            let hi = (lo + ROW_BLOCK).min(rows);
            let mut acc = vec![0.0; cols];
            for i in lo..hi {
                for (a, &r) in acc.iter_mut().zip(m.row(i)) {
                    *a += v[i] * r;
                }
            }
            for (o, a) in seq_mt.iter_mut().zip(acc) {
                *o += a;
            }
        }

        assert_eq!(m.matvec(&x), seq_mv);
        assert_eq!(m.matvec_t(&v), seq_mt);
    }

    #[test]
    fn linspace_endpoints() {
        assert_eq!(linspace(0.05, 0.50, 2), vec![0.05, 0.50]);
        assert_eq!(linspace(0.05, 0.50, 1), vec![0.05]);
        let v = linspace(0.0, 1.0, 11);
        assert_eq!(v.len(), 11);
        assert!((v[5] - 0.5).abs() < 1e-15);
    }
}
