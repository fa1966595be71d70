use rand::Rng;
use serde::{Deserialize, Serialize};

/// Row-major parameter matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Param {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        Self { rows, cols, data }
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

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Gradient for one parameter tensor. Embedding tables touched by a handful
/// of rows use the sparse form so the optimizer only visits those rows.
#[derive(Debug, Clone, PartialEq)]
pub enum Gradient {
    Dense(Vec<f64>),
    Rows {
        cols: usize,
        rows: Vec<usize>,
        values: Vec<f64>,
    },
}

impl Gradient {
    pub fn to_dense(&self, len: usize) -> Vec<f64> {
        match self {
            Gradient::Dense(v) => v.clone(),
            Gradient::Rows { cols, rows, values } => {
                let mut out = vec![0.0; len];
                for (k, &r) in rows.iter().enumerate() {
                    for c in 0..*cols {
                        out[r * cols + c] += values[k * cols + c];
                    }
                }
                out
            }
        }
    }
}

/// Accumulates per-row gradients for an embedding table.
#[derive(Debug, Default)]
pub(crate) struct RowGrad {
    cols: usize,
    slot: std::collections::HashMap<usize, usize>,
    rows: Vec<usize>,
    values: Vec<f64>,
}

impl RowGrad {
    pub fn new(cols: usize) -> Self {
        Self {
            cols,
            ..Self::default()
        }
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        let cols = self.cols;
        let k = *self.slot.entry(row).or_insert_with(|| {
            self.rows.push(row);
            self.values.extend(std::iter::repeat(0.0).take(cols));
            self.rows.len() - 1
        });
        &mut self.values[k * cols..(k + 1) * cols]
    }

    pub fn finish(self) -> Gradient {
        Gradient::Rows {
            cols: self.cols,
            rows: self.rows,
            values: self.values,
        }
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `y += a * x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
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
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..11).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..11).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn row_grad_accumulates_repeats() {
        let mut g = RowGrad::new(2);
        g.row_mut(3)[0] += 1.0;
        g.row_mut(1)[1] += 2.0;
        g.row_mut(3)[0] += 1.0;
        assert_eq!(g.finish().to_dense(8), vec![0., 0., 0., 2., 0., 0., 2., 0.]);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }
}
