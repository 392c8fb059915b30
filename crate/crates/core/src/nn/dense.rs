use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mathcore::{ActivationKind, Matrix};

/// Fully connected layer, `activation(W·x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: ActivationKind,
}

/// Input and pre-activation kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseCache {
    pub input: Vec<f64>,
    pub pre: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: ActivationKind) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::dims(format!(
                "bias has {} entries for {} outputs",
                bias.len(),
                weights.rows()
            )));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn zeros(outputs: usize, inputs: usize, activation: ActivationKind) -> Self {
        Self {
            weights: Matrix::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
            activation,
        }
    }

    /// Weights uniform in `±1/√fan_in`, zero bias.
    pub fn init(outputs: usize, inputs: usize, activation: ActivationKind, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (inputs.max(1) as f64).sqrt();
        let mut layer = Self::zeros(outputs, inputs, activation);
        for v in layer.weights.as_mut_slice() {
            *v = rng.random_range(-bound..bound);
        }
        layer
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<(Vec<f64>, DenseCache)> {
        let mut pre = self.weights.matvec(x)?;
        pre.iter_mut().zip(&self.bias).for_each(|(p, b)| *p += b);
        let out = pre.iter().map(|&z| self.activation.apply(z)).collect();
        Ok((
            out,
            DenseCache {
                input: x.to_vec(),
                pre,
            },
        ))
    }

    /// Accumulates parameter gradients into `grads` and returns ∂L/∂x.
    pub fn backward(&self, cache: &DenseCache, upstream: &[f64], grads: &mut DenseLayer) -> Vec<f64> {
        let dz: Vec<f64> = upstream
            .iter()
            .zip(&cache.pre)
            .map(|(g, &z)| g * self.activation.derivative(z))
            .collect();
        grads.weights.add_outer(&dz, &cache.input);
        grads.bias.iter_mut().zip(&dz).for_each(|(b, d)| *b += d);
        let mut dx = vec![0.0; self.inputs()];
        self.weights.add_matvec_transposed(&dz, &mut dx);
        dx
    }

    pub(crate) fn slices(&self) -> [&[f64]; 2] {
        [self.weights.as_slice(), &self.bias]
    }

    pub(crate) fn slices_mut(&mut self) -> [&mut [f64]; 2] {
        [self.weights.as_mut_slice(), &mut self.bias]
    }
}

pub fn dense_forward(layer: &DenseLayer, x: &[f64]) -> Result<Vec<f64>> {
    layer.forward_cached(x).map(|(y, _)| y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        let w = Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        let l = DenseLayer::new(w, vec![1.0], ActivationKind::Identity).unwrap();
        assert_eq!(dense_forward(&l, &[1.0, 2.0]).unwrap(), vec![12.0]);

        let mut l = DenseLayer::zeros(1, 3, ActivationKind::Relu);
        l.bias = vec![0.7];
        assert_eq!(dense_forward(&l, &[5.0, -2.0, 9.0]).unwrap(), vec![0.7]);
        l.bias = vec![-5.0];
        assert_eq!(dense_forward(&l, &[5.0, -2.0, 9.0]).unwrap(), vec![0.0]);

        assert!(matches!(dense_forward(&l, &[1.0]), Err(Error::DimensionMismatch(_))));
    }
}
