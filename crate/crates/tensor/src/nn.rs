use std::cell::RefCell;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Uniform init in `[-limit, limit]` with the Glorot limit
/// `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Scalar>(
    rng: &mut ChaCha8Rng,
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(rng, shape, -limit, limit)
}

pub fn uniform<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<T> {
    let numel: usize = shape.iter().product();
    let data: Vec<T> = (0..numel).map(|_| T::cast(rng.gen_range(lo..hi))).collect();
    Tensor::leaf(shape.to_vec(), data, true)
}

/// Affine map on the last dim: `(.., in) -> (.., out)`.
pub struct Linear<T: Scalar> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(rng: &mut ChaCha8Rng, d_in: usize, d_out: usize, bias: bool) -> Self {
        Linear {
            weight: glorot_uniform(rng, &[d_in, d_out], d_in, d_out),
            bias: bias.then(|| Tensor::leaf(vec![d_out], vec![T::zero(); d_out], true)),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let d_in = self.weight.shape()[0];
        let d_out = self.weight.shape()[1];
        let shape = x.shape().to_vec();
        if shape.last() != Some(&d_in) {
            return Err(TensorError::ShapeMismatch {
                op: "linear",
                left: shape,
                right: self.weight.shape().to_vec(),
            });
        }
        let rows = x.numel() / d_in;
        let flat = x.reshape(&[rows, d_in])?;
        let mut y = flat.matmul(&self.weight)?;
        if let Some(b) = &self.bias {
            y = y.add(b)?;
        }
        let mut out_shape = x.shape().to_vec();
        *out_shape.last_mut().unwrap() = d_out;
        y.reshape(&out_shape)
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, Tensor<T>)> {
        let mut v = vec![(format!("{prefix}.weight"), self.weight.clone())];
        if let Some(b) = &self.bias {
            v.push((format!("{prefix}.bias"), b.clone()));
        }
        v
    }
}

/// Row lookup table with scatter-add gradients.
pub struct Embedding<T: Scalar> {
    pub table: Tensor<T>,
}

impl<T: Scalar> Embedding<T> {
    pub fn new(rng: &mut ChaCha8Rng, entries: usize, dim: usize, scale: f64) -> Self {
        Embedding {
            table: uniform(rng, &[entries, dim], -scale, scale),
        }
    }

    pub fn from_table(table: Tensor<T>) -> Self {
        Embedding { table }
    }

    pub fn entries(&self) -> usize {
        self.table.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.table.shape()[1]
    }

    pub fn lookup(&self, ids: &[usize]) -> Result<Tensor<T>> {
        self.table.gather_rows(ids)
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, Tensor<T>)> {
        vec![(format!("{prefix}.table"), self.table.clone())]
    }
}

/// Inverted dropout driven by an internal seeded stream, so a fixed call
/// sequence reproduces the same masks run to run.
pub struct Dropout<T: Scalar> {
    rate: f64,
    rng: RefCell<ChaCha8Rng>,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> Dropout<T> {
    pub fn new(rate: f64, rng: ChaCha8Rng) -> Self {
        Dropout {
            rate,
            rng: RefCell::new(rng),
            _marker: std::marker::PhantomData,
        }
    }

    pub fn forward(&self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        if !train || self.rate <= 0.0 {
            return Ok(x.clone());
        }
        let keep = 1.0 - self.rate;
        let scale = T::cast(1.0 / keep);
        let mut rng = self.rng.borrow_mut();
        let mask: Vec<T> = (0..x.numel())
            .map(|_| {
                if rng.gen_range(0.0..1.0) < keep {
                    scale
                } else {
                    T::zero()
                }
            })
            .collect();
        let mask_t = Tensor::leaf(x.shape().to_vec(), mask, false);
        x.mul(&mask_t)
    }
}
