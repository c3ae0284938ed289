use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

impl<T: Scalar> Tensor<T> {
    /// Per-position softmax cross entropy: logits `(N, V)` against `targets`
    /// of length N, returning the N losses unreduced so callers can mask and
    /// average per their own formula.
    pub fn softmax_cross_entropy(&self, targets: &[usize]) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(TensorError::InvalidShape {
                op: "softmax_cross_entropy",
                shape: s.to_vec(),
                detail: "logits must be (positions, vocab)".into(),
            });
        }
        let (n, v) = (s[0], s[1]);
        if targets.len() != n {
            return Err(TensorError::ShapeMismatch {
                op: "softmax_cross_entropy",
                left: s.to_vec(),
                right: vec![targets.len()],
            });
        }
        for &t in targets {
            if t >= v {
                return Err(TensorError::IndexOutOfRange {
                    what: "cross entropy target",
                    index: t,
                    size: v,
                });
            }
        }

        let mut losses = vec![T::zero(); n];
        {
            let d = self.data();
            for r in 0..n {
                let row = &d[r * v..(r + 1) * v];
                let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                let mut denom = T::zero();
                for &x in row {
                    denom = denom + (x - max).exp();
                }
                losses[r] = max + denom.ln() - row[targets[r]];
            }
        }

        let logits = self.clone();
        let t_idx = targets.to_vec();
        Ok(Tensor::from_op(
            vec![n],
            losses,
            vec![self.clone()],
            Box::new(move |og, _| {
                let d = logits.data();
                logits.accumulate_grad_at(|g| {
                    for r in 0..n {
                        let row = &d[r * v..(r + 1) * v];
                        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                        let mut denom = T::zero();
                        for &x in row {
                            denom = denom + (x - max).exp();
                        }
                        let scale = og[r];
                        for j in 0..v {
                            let p = (row[j] - max).exp() / denom;
                            let indicator = if j == t_idx[r] { T::one() } else { T::zero() };
                            g[r * v + j] = g[r * v + j] + scale * (p - indicator);
                        }
                    }
                });
            }),
        ))
    }
}
