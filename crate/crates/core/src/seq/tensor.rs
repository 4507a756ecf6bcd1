//! Row-major matrices and the few kernels the network needs.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn uniform(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.random_range(-scale..=scale)).collect();
        Tensor { rows, cols, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn zeros_like(&self) -> Self {
        Tensor::zeros(self.rows, self.cols)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorize without reassociating a single sum
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4 * 4;
    for i in (0..chunks).step_by(4) {
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `Y[t] = W · X[t] + b` for every row `t` of `x` (`steps × w.cols`).
pub fn affine(x: &[f64], steps: usize, w: &Tensor, b: &Tensor) -> Vec<f64> {
    debug_assert_eq!(x.len(), steps * w.cols);
    let mut y = Vec::with_capacity(steps * w.rows);
    for t in 0..steps {
        let xt = &x[t * w.cols..(t + 1) * w.cols];
        for o in 0..w.rows {
            y.push(dot(w.row(o), xt) + b.data[o]);
        }
    }
    y
}

/// Accumulates parameter gradients of `affine` and returns `dX`.
pub fn affine_backward(x: &[f64], dy: &[f64], steps: usize, w: &Tensor, dw: &mut Tensor, db: &mut Tensor) -> Vec<f64> {
    let mut dx = vec![0.0; steps * w.cols];
    for t in 0..steps {
        let xt = &x[t * w.cols..(t + 1) * w.cols];
        let dxt = &mut dx[t * w.cols..(t + 1) * w.cols];
        for o in 0..w.rows {
            let g = dy[t * w.rows + o];
            if g == 0.0 {
                continue;
            }
            axpy(g, w.row(o), dxt);
            axpy(g, xt, dw.row_mut(o));
            db.data[o] += g;
        }
    }
    dx
}

pub fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Masks `dy` where the forward ReLU output was zero.
pub fn relu_backward(out: &[f64], dy: &mut [f64]) {
    for (g, y) in dy.iter_mut().zip(out) {
        if *y <= 0.0 {
            *g = 0.0;
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_matches_naive_product() {
        let w = Tensor { rows: 2, cols: 3, data: vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0] };
        let b = Tensor { rows: 1, cols: 2, data: vec![0.5, -0.5] };
        let x = [1.0, 1.0, 1.0, 2.0, 0.0, -1.0];
        assert_eq!(affine(&x, 2, &w, &b), vec![6.5, -1.0, -0.5, -2.5]);
    }

    #[test]
    fn dot_handles_remainders() {
        let a: Vec<f64> = (0..7).map(f64::from).collect();
        assert_eq!(dot(&a, &a), 91.0);
    }
}
