use std::cell::{Cell, RefCell};

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Batch normalization over the channel (last) dim of an NHWC tensor.
///
/// Training mode normalizes by batch statistics and folds them into the
/// running estimates; inference mode uses the running estimates and fails
/// if no training step has happened yet.
pub struct BatchNorm2d<T: Scalar> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    running_mean: RefCell<Vec<T>>,
    running_var: RefCell<Vec<T>>,
    momentum: T,
    eps: T,
    seen_batch: Cell<bool>,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Tensor::leaf(vec![channels], vec![T::one(); channels], true),
            beta: Tensor::leaf(vec![channels], vec![T::zero(); channels], true),
            running_mean: RefCell::new(vec![T::zero(); channels]),
            running_var: RefCell::new(vec![T::one(); channels]),
            momentum: T::cast(0.99),
            eps: T::cast(1e-5),
            seen_batch: Cell::new(false),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.numel()
    }

    pub fn running_stats(&self) -> (Vec<T>, Vec<T>) {
        (
            self.running_mean.borrow().clone(),
            self.running_var.borrow().clone(),
        )
    }

    pub fn set_running_stats(&self, mean: &[T], var: &[T]) {
        self.running_mean.borrow_mut().copy_from_slice(mean);
        self.running_var.borrow_mut().copy_from_slice(var);
        self.seen_batch.set(true);
    }

    pub fn forward(&self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        let c = self.channels();
        let shape = x.shape().to_vec();
        if shape.is_empty() || *shape.last().unwrap() != c {
            return Err(TensorError::ShapeMismatch {
                op: "batch_norm",
                left: shape,
                right: vec![c],
            });
        }
        let rows = x.numel() / c;
        if train {
            if rows < 2 {
                return Err(TensorError::InvalidParameter {
                    op: "batch_norm",
                    what: "samples per channel in train mode",
                    value: rows as i64,
                });
            }
            self.forward_train(x, rows, c)
        } else {
            if !self.seen_batch.get() {
                return Err(TensorError::BatchNormUninitialized);
            }
            self.forward_infer(x, rows, c)
        }
    }

    fn forward_train(&self, x: &Tensor<T>, rows: usize, c: usize) -> Result<Tensor<T>> {
        let m = T::cast(rows as f64);
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        {
            let xd = x.data();
            for r in 0..rows {
                for ch in 0..c {
                    mean[ch] = mean[ch] + xd[r * c + ch];
                }
            }
            for ch in 0..c {
                mean[ch] = mean[ch] / m;
            }
            for r in 0..rows {
                for ch in 0..c {
                    let d = xd[r * c + ch] - mean[ch];
                    var[ch] = var[ch] + d * d;
                }
            }
            for ch in 0..c {
                var[ch] = var[ch] / m;
            }
        }
        // Fold batch statistics into the running estimates.
        {
            let mut rm = self.running_mean.borrow_mut();
            let mut rv = self.running_var.borrow_mut();
            let keep = self.momentum;
            let take = T::one() - self.momentum;
            if self.seen_batch.get() {
                for ch in 0..c {
                    rm[ch] = keep * rm[ch] + take * mean[ch];
                    rv[ch] = keep * rv[ch] + take * var[ch];
                }
            } else {
                rm.copy_from_slice(&mean);
                rv.copy_from_slice(&var);
            }
        }
        self.seen_batch.set(true);

        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + self.eps).sqrt()).collect();
        let mut xhat = vec![T::zero(); rows * c];
        let mut out = vec![T::zero(); rows * c];
        {
            let xd = x.data();
            let g = self.gamma.data();
            let b = self.beta.data();
            for r in 0..rows {
                for ch in 0..c {
                    let h = (xd[r * c + ch] - mean[ch]) * inv_std[ch];
                    xhat[r * c + ch] = h;
                    out[r * c + ch] = g[ch] * h + b[ch];
                }
            }
        }

        let xt = x.clone();
        let gamma = self.gamma.clone();
        let beta = self.beta.clone();
        Ok(Tensor::from_op(
            x.shape().to_vec(),
            out,
            vec![x.clone(), self.gamma.clone(), self.beta.clone()],
            Box::new(move |og, _| {
                // Per-channel reductions of dy and dy*xhat.
                let mut sum_dy = vec![T::zero(); c];
                let mut sum_dyh = vec![T::zero(); c];
                for r in 0..rows {
                    for ch in 0..c {
                        let dy = og[r * c + ch];
                        sum_dy[ch] = sum_dy[ch] + dy;
                        sum_dyh[ch] = sum_dyh[ch] + dy * xhat[r * c + ch];
                    }
                }
                if gamma.requires_grad() {
                    gamma.accumulate_grad(&sum_dyh);
                }
                if beta.requires_grad() {
                    beta.accumulate_grad(&sum_dy);
                }
                if xt.requires_grad() {
                    let g = gamma.data();
                    let m = T::cast(rows as f64);
                    xt.accumulate_grad_at(|gx| {
                        for r in 0..rows {
                            for ch in 0..c {
                                let i = r * c + ch;
                                let dxhat = og[i] * g[ch];
                                let term = m * dxhat
                                    - g[ch] * sum_dy[ch]
                                    - xhat[i] * g[ch] * sum_dyh[ch];
                                gx[i] = gx[i] + inv_std[ch] / m * term;
                            }
                        }
                    });
                }
            }),
        ))
    }

    fn forward_infer(&self, x: &Tensor<T>, rows: usize, c: usize) -> Result<Tensor<T>> {
        let rm = self.running_mean.borrow().clone();
        let rv = self.running_var.borrow().clone();
        let inv_std: Vec<T> = rv.iter().map(|&v| T::one() / (v + self.eps).sqrt()).collect();
        let mut out = vec![T::zero(); rows * c];
        {
            let xd = x.data();
            let g = self.gamma.data();
            let b = self.beta.data();
            for r in 0..rows {
                for ch in 0..c {
                    out[r * c + ch] = g[ch] * (xd[r * c + ch] - rm[ch]) * inv_std[ch] + b[ch];
                }
            }
        }
        let xt = x.clone();
        let gamma = self.gamma.clone();
        let beta = self.beta.clone();
        let xd_saved = x.to_vec();
        Ok(Tensor::from_op(
            x.shape().to_vec(),
            out,
            vec![x.clone(), self.gamma.clone(), self.beta.clone()],
            Box::new(move |og, _| {
                if beta.requires_grad() {
                    let mut sum_dy = vec![T::zero(); c];
                    for r in 0..rows {
                        for ch in 0..c {
                            sum_dy[ch] = sum_dy[ch] + og[r * c + ch];
                        }
                    }
                    beta.accumulate_grad(&sum_dy);
                }
                if gamma.requires_grad() {
                    let mut sum_dyh = vec![T::zero(); c];
                    for r in 0..rows {
                        for ch in 0..c {
                            let h = (xd_saved[r * c + ch] - rm[ch]) * inv_std[ch];
                            sum_dyh[ch] = sum_dyh[ch] + og[r * c + ch] * h;
                        }
                    }
                    gamma.accumulate_grad(&sum_dyh);
                }
                if xt.requires_grad() {
                    let g = gamma.data();
                    xt.accumulate_grad_at(|gx| {
                        for r in 0..rows {
                            for ch in 0..c {
                                let i = r * c + ch;
                                gx[i] = gx[i] + og[i] * g[ch] * inv_std[ch];
                            }
                        }
                    });
                }
            }),
        ))
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, Tensor<T>)> {
        vec![
            (format!("{prefix}.gamma"), self.gamma.clone()),
            (format!("{prefix}.beta"), self.beta.clone()),
        ]
    }
}

/// Layer normalization over the last dim with learned scale and shift.
pub struct LayerNorm<T: Scalar> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    eps: T,
}

impl<T: Scalar> LayerNorm<T> {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: Tensor::leaf(vec![dim], vec![T::one(); dim], true),
            beta: Tensor::leaf(vec![dim], vec![T::zero(); dim], true),
            eps: T::cast(1e-5),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let d = self.gamma.numel();
        if x.shape().last() != Some(&d) {
            return Err(TensorError::ShapeMismatch {
                op: "layer_norm",
                left: x.shape().to_vec(),
                right: vec![d],
            });
        }
        let rows = x.numel() / d;
        let mut xhat = vec![T::zero(); rows * d];
        let mut inv_std = vec![T::zero(); rows];
        let mut out = vec![T::zero(); rows * d];
        {
            let xd = x.data();
            let g = self.gamma.data();
            let b = self.beta.data();
            let dn = T::cast(d as f64);
            for r in 0..rows {
                let row = &xd[r * d..(r + 1) * d];
                let mean = row.iter().copied().sum::<T>() / dn;
                let mut var = T::zero();
                for &v in row {
                    let dv = v - mean;
                    var = var + dv * dv;
                }
                var = var / dn;
                let is = T::one() / (var + self.eps).sqrt();
                inv_std[r] = is;
                for j in 0..d {
                    let h = (row[j] - mean) * is;
                    xhat[r * d + j] = h;
                    out[r * d + j] = g[j] * h + b[j];
                }
            }
        }
        let xt = x.clone();
        let gamma = self.gamma.clone();
        let beta = self.beta.clone();
        Ok(Tensor::from_op(
            x.shape().to_vec(),
            out,
            vec![x.clone(), self.gamma.clone(), self.beta.clone()],
            Box::new(move |og, _| {
                if gamma.requires_grad() {
                    gamma.accumulate_grad_at(|gg| {
                        for r in 0..rows {
                            for j in 0..d {
                                gg[j] = gg[j] + og[r * d + j] * xhat[r * d + j];
                            }
                        }
                    });
                }
                if beta.requires_grad() {
                    beta.accumulate_grad_at(|gb| {
                        for r in 0..rows {
                            for j in 0..d {
                                gb[j] = gb[j] + og[r * d + j];
                            }
                        }
                    });
                }
                if xt.requires_grad() {
                    let g = gamma.data();
                    let dn = T::cast(d as f64);
                    xt.accumulate_grad_at(|gx| {
                        for r in 0..rows {
                            let mut sum_dxhat = T::zero();
                            let mut sum_dxhat_h = T::zero();
                            for j in 0..d {
                                let dxh = og[r * d + j] * g[j];
                                sum_dxhat = sum_dxhat + dxh;
                                sum_dxhat_h = sum_dxhat_h + dxh * xhat[r * d + j];
                            }
                            for j in 0..d {
                                let dxh = og[r * d + j] * g[j];
                                let term =
                                    dn * dxh - sum_dxhat - xhat[r * d + j] * sum_dxhat_h;
                                gx[r * d + j] = gx[r * d + j] + inv_std[r] / dn * term;
                            }
                        }
                    });
                }
            }),
        ))
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, Tensor<T>)> {
        vec![
            (format!("{prefix}.gamma"), self.gamma.clone()),
            (format!("{prefix}.beta"), self.beta.clone()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_mode_normalizes_per_channel() {
        let vals: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let x = Tensor::from_f64(&[6, 2], &vals, false).unwrap();
        let bn = BatchNorm2d::<f64>::new(2);
        let y = bn.forward(&x, true).unwrap();
        let yd = y.to_f64_vec();
        for ch in 0..2 {
            let col: Vec<f64> = (0..6).map(|r| yd[r * 2 + ch]).collect();
            let mean: f64 = col.iter().sum::<f64>() / 6.0;
            let var: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 6.0;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn constant_batch_yields_zeros() {
        let x = Tensor::from_f64(&[4, 3], &[5.0; 12], false).unwrap();
        let bn = BatchNorm2d::<f64>::new(3);
        let y = bn.forward(&x, true).unwrap();
        assert!(y.to_f64_vec().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn infer_before_train_errors() {
        let x = Tensor::<f64>::zeros(&[2, 3], false);
        let bn = BatchNorm2d::<f64>::new(3);
        assert!(matches!(
            bn.forward(&x, false),
            Err(TensorError::BatchNormUninitialized)
        ));
    }

    #[test]
    fn train_then_infer_are_close() {
        // First train batch seeds the running stats exactly, so inference on
        // the same batch reproduces the train output.
        let vals: Vec<f64> = (0..20).map(|v| (v as f64) * 0.3 - 2.0).collect();
        let x = Tensor::from_f64(&[10, 2], &vals, false).unwrap();
        let bn = BatchNorm2d::<f64>::new(2);
        let yt = bn.forward(&x, true).unwrap().to_f64_vec();
        let yi = bn.forward(&x, false).unwrap().to_f64_vec();
        for (a, b) in yt.iter().zip(&yi) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn single_row_train_rejected() {
        let x = Tensor::<f64>::zeros(&[1, 3], false);
        let bn = BatchNorm2d::<f64>::new(3);
        assert!(bn.forward(&x, true).is_err());
    }

    #[test]
    fn layer_norm_rows_standardized() {
        let x = Tensor::from_f64(&[2, 4], &[1.0, 2.0, 3.0, 4.0, -1.0, 0.0, 3.0, 10.0], false)
            .unwrap();
        let ln = LayerNorm::<f64>::new(4);
        let y = ln.forward(&x).unwrap().to_f64_vec();
        for r in 0..2 {
            let row = &y[r * 4..(r + 1) * 4];
            let mean: f64 = row.iter().sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-9);
        }
    }
}
