//! Dense row-major matrices generic over the float width.
//!
//! The training path runs in `f32`; gradient-checking tests instantiate the
//! same code with `f64` and compare against central finite differences.

use num_traits::Float;
use rand::Rng;

/// Convert an `f64` constant into the active float type.
#[inline]
pub fn scalar<T: Float>(v: f64) -> T {
    T::from(v).expect("constant representable in float type")
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Float> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    /// Uniform init in `[-limit, limit]`.
    pub fn uniform<R: Rng>(rows: usize, cols: usize, limit: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| scalar::<T>(rng.gen_range(-limit..=limit)))
            .collect();
        Self { rows, cols, data }
    }

    /// Xavier/Glorot uniform init for a `fan_in x fan_out` projection.
    pub fn xavier<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        Self::uniform(rows, cols, limit, rng)
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// `out[0..m][0..n] += a[0..m][0..k] * b` where `b` is `k x n`.
///
/// Only the first `m` rows of `a` and `out` participate; callers pass the
/// real-token prefix length so PAD rows cost nothing.
pub fn matmul_into<T: Float>(out: &mut Matrix<T>, a: &Matrix<T>, b: &Matrix<T>, m: usize) {
    debug_assert_eq!(a.cols, b.rows);
    debug_assert_eq!(out.cols, b.cols);
    let (k, n) = (b.rows, b.cols);
    for i in 0..m {
        let arow = &a.data[i * a.cols..i * a.cols + k];
        let orow = &mut out.data[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o = *o + av * bv;
            }
        }
    }
}

/// `out += a * b^T` where `a` is `m x k` (prefix) and `b` is `n x k`.
pub fn matmul_bt_into<T: Float>(out: &mut Matrix<T>, a: &Matrix<T>, b: &Matrix<T>, m: usize) {
    debug_assert_eq!(a.cols, b.cols);
    debug_assert_eq!(out.cols, b.rows);
    let k = a.cols;
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        for j in 0..b.rows {
            let brow = &b.data[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for (&x, &y) in arow.iter().zip(brow.iter()) {
                acc = acc + x * y;
            }
            out.data[i * out.cols + j] = out.data[i * out.cols + j] + acc;
        }
    }
}

/// `out += a^T * b` where `a` is `m x r` and `b` is `m x c` (prefix rows).
///
/// This is the weight-gradient product: activations transposed times the
/// upstream gradient.
pub fn matmul_at_into<T: Float>(out: &mut Matrix<T>, a: &Matrix<T>, b: &Matrix<T>, m: usize) {
    debug_assert_eq!(out.rows, a.cols);
    debug_assert_eq!(out.cols, b.cols);
    for i in 0..m {
        let arow = &a.data[i * a.cols..(i + 1) * a.cols];
        let brow = &b.data[i * b.cols..(i + 1) * b.cols];
        for (r, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let orow = &mut out.data[r * b.cols..(r + 1) * b.cols];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o = *o + av * bv;
            }
        }
    }
}

/// Dot product of two slices.
#[inline]
pub fn dot<T: Float>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b.iter()) {
        acc = acc + x * y;
    }
    acc
}

/// `y += alpha * x`
#[inline]
pub fn axpy<T: Float>(y: &mut [T], alpha: T, x: &[T]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x.iter()) {
        *yi = *yi + alpha * xi;
    }
}
