//! Dense row-major matrices and elementwise activations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix of finite `f64` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for Matrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        Matrix::new(raw.rows, raw.cols, raw.data)
    }
}

impl From<Matrix> for RawMatrix {
    fn from(m: Matrix) -> Self {
        RawMatrix {
            rows: m.rows,
            cols: m.cols,
            data: m.data,
        }
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::dims("ragged rows"));
        }
        Self::new(r, c, rows.concat())
    }

    /// Column vector.
    pub fn column(values: &[f64]) -> Result<Self> {
        Self::new(values.len(), 1, values.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the payload. Callers keep the values finite.
    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// `self · x` for a plain vector, written into `out`.
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::dims(format!(
                "matvec: matrix has {} cols, vector has {} entries",
                self.cols,
                x.len()
            )));
        }
        let mut out = vec![0.0; self.rows];
        self.matvec_into(x, &mut out);
        Ok(out)
    }

    /// Accumulates `selfᵀ · g` into `out`.
    pub(crate) fn add_matvec_transposed(&self, g: &[f64], out: &mut [f64]) {
        debug_assert_eq!(g.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (r, &gr) in g.iter().enumerate() {
            if gr == 0.0 {
                continue;
            }
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * gr;
            }
        }
    }

    /// Accumulates the outer product `g ⊗ x` into `self`.
    pub(crate) fn add_outer(&mut self, g: &[f64], x: &[f64]) {
        debug_assert_eq!(g.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for (r, &gr) in g.iter().enumerate() {
            if gr == 0.0 {
                continue;
            }
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (w, xv) in row.iter_mut().zip(x) {
                *w += gr * xv;
            }
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::dims(format!(
            "matmul {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            let b_row = &b.data[k * b.cols..(k + 1) * b.cols];
            for (o, bv) in out_row.iter_mut().zip(b_row) {
                *o += aik * bv;
            }
        }
    }
    if let Some(index) = out.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Sigmoid,
    Tanh,
    Relu,
    Identity,
}

impl ActivationKind {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationKind::Sigmoid => sigmoid(x),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::Identity => x,
        }
    }

    /// Derivative at pre-activation `x`. `relu'(0) = 0`.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            ActivationKind::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            ActivationKind::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            ActivationKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Identity => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn activate(kind: ActivationKind, v: &Matrix) -> Matrix {
    v.map(|x| kind.apply(x))
}

pub fn activate_grad(kind: ActivationKind, v: &Matrix) -> Matrix {
    v.map(|x| kind.derivative(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = vec![0.0; a.rows() * b.cols()];
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out[i * b.cols() + j] = s;
            }
        }
        Matrix::new(a.rows(), b.cols(), out).unwrap()
    }

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::new(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn identity_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(&mut rng, 3, 3);
        assert_eq!(matmul(&Matrix::identity(3), &a).unwrap(), a);
    }

    #[test]
    fn small_product() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Matrix::column(&[1.0, 1.0]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.as_slice(), &[3.0, 7.0]);
        assert_eq!(c, naive(&a, &b));
    }

    #[test]
    fn random_product_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random(&mut rng, 5, 4);
        let b = random(&mut rng, 4, 3);
        let c = matmul(&a, &b).unwrap();
        let oracle = naive(&a, &b);
        for (x, y) in c.as_slice().iter().zip(oracle.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_dims() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(matmul(&a, &a), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::new(1, 1, vec![f64::INFINITY]).is_err());
        assert!(Matrix::new(1, 2, vec![1.0]).is_err());
    }

    #[test]
    fn activation_points() {
        let z = Matrix::column(&[0.0]).unwrap();
        assert_eq!(activate(ActivationKind::Sigmoid, &z).get(0, 0), 0.5);
        assert_eq!(activate(ActivationKind::Tanh, &z).get(0, 0), 0.0);
        assert_eq!(activate_grad(ActivationKind::Sigmoid, &z).get(0, 0), 0.25);
        assert_eq!(activate_grad(ActivationKind::Tanh, &z).get(0, 0), 1.0);
        assert_eq!(activate_grad(ActivationKind::Relu, &z).get(0, 0), 0.0);
        let v = Matrix::column(&[-3.2, 3.2]).unwrap();
        assert_eq!(activate(ActivationKind::Relu, &v).as_slice(), &[0.0, 3.2]);
    }

    #[test]
    fn grads_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-6;
        for kind in [
            ActivationKind::Sigmoid,
            ActivationKind::Tanh,
            ActivationKind::Relu,
            ActivationKind::Identity,
        ] {
            for _ in 0..100 {
                let mut x: f64 = rng.random_range(-4.0..4.0);
                if kind == ActivationKind::Relu && x.abs() < 1e-3 {
                    x += 0.01;
                }
                let fd = (kind.apply(x + h) - kind.apply(x - h)) / (2.0 * h);
                assert!((fd - kind.derivative(x)).abs() < 1e-6, "{kind:?} at {x}");
            }
        }
    }

    proptest! {
        #[test]
        fn matmul_is_associative(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random(&mut rng, 3, 4);
            let b = random(&mut rng, 4, 5);
            let c = random(&mut rng, 5, 2);
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            for (x, y) in left.as_slice().iter().zip(right.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0));
            }
        }

        #[test]
        fn activation_ranges(x in -50.0f64..50.0) {
            let s = ActivationKind::Sigmoid.apply(x);
            prop_assert!(s >= 0.0 && s <= 1.0);
            let t = ActivationKind::Tanh.apply(x);
            prop_assert!(t >= -1.0 && t <= 1.0);
            prop_assert!(ActivationKind::Relu.apply(x) >= 0.0);
        }
    }
}
