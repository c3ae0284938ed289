use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// c += a (m x k) * b (k x n), row-major. The k-inner/axpy form keeps the
/// inner loop contiguous so it autovectorizes.
pub(crate) fn gemm_nn<T: Scalar>(c: &mut [T], a: &[T], b: &[T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv = *cv + av * bv;
            }
        }
    }
}

/// c += a (m x k) * b^T where b is (n x k) row-major: dot-product form.
pub(crate) fn gemm_nt<T: Scalar>(c: &mut [T], a: &[T], b: &[T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (j, cv) in crow.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for (&av, &bv) in arow.iter().zip(brow) {
                acc = acc + av * bv;
            }
            *cv = *cv + acc;
        }
    }
}

/// c += a^T * b where a is (k x m) and b is (k x n), row-major.
pub(crate) fn gemm_tn<T: Scalar>(c: &mut [T], a: &[T], b: &[T], m: usize, k: usize, n: usize) {
    for kk in 0..k {
        let arow = &a[kk * m..(kk + 1) * m];
        let brow = &b[kk * n..(kk + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv = *cv + av * bv;
            }
        }
    }
}

fn mat_dims<T: Scalar>(t: &Tensor<T>, op: &'static str) -> Result<(usize, usize)> {
    let s = t.shape();
    if s.len() != 2 {
        return Err(TensorError::InvalidShape {
            op,
            shape: s.to_vec(),
            detail: "expected a 2-D tensor".into(),
        });
    }
    Ok((s[0], s[1]))
}

impl<T: Scalar> Tensor<T> {
    /// 2-D matrix product `(m,k) x (k,n) -> (m,n)`.
    pub fn matmul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let (m, ka) = mat_dims(self, "matmul")?;
        let (kb, n) = mat_dims(rhs, "matmul")?;
        if ka != kb {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: self.shape().to_vec(),
                right: rhs.shape().to_vec(),
            });
        }
        let mut data = vec![T::zero(); m * n];
        gemm_nn(&mut data, &self.data(), &rhs.data(), m, ka, n);

        let (a, b) = (self.clone(), rhs.clone());
        Ok(Tensor::from_op(
            vec![m, n],
            data,
            vec![self.clone(), rhs.clone()],
            Box::new(move |og, _| {
                if a.requires_grad() {
                    let bd = b.data();
                    a.accumulate_grad_at(|g| gemm_nt(g, og, &bd, m, n, ka));
                }
                if b.requires_grad() {
                    let ad = a.data();
                    b.accumulate_grad_at(|g| gemm_tn(g, &ad, og, n, m, ka));
                }
            }),
        ))
    }

    /// Batched matrix product `(b,m,k) x (b,k,n) -> (b,m,n)`.
    pub fn bmm(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let (sa, sb) = (self.shape(), rhs.shape());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(TensorError::ShapeMismatch {
                op: "bmm",
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        let (bt, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut data = vec![T::zero(); bt * m * n];
        {
            let ad = self.data();
            let bd = rhs.data();
            for i in 0..bt {
                gemm_nn(
                    &mut data[i * m * n..(i + 1) * m * n],
                    &ad[i * m * k..(i + 1) * m * k],
                    &bd[i * k * n..(i + 1) * k * n],
                    m,
                    k,
                    n,
                );
            }
        }
        let (a, b) = (self.clone(), rhs.clone());
        Ok(Tensor::from_op(
            vec![bt, m, n],
            data,
            vec![self.clone(), rhs.clone()],
            Box::new(move |og, _| {
                if a.requires_grad() {
                    let bd = b.data();
                    a.accumulate_grad_at(|g| {
                        for i in 0..bt {
                            gemm_nt(
                                &mut g[i * m * k..(i + 1) * m * k],
                                &og[i * m * n..(i + 1) * m * n],
                                &bd[i * k * n..(i + 1) * k * n],
                                m,
                                n,
                                k,
                            );
                        }
                    });
                }
                if b.requires_grad() {
                    let ad = a.data();
                    b.accumulate_grad_at(|g| {
                        for i in 0..bt {
                            gemm_tn(
                                &mut g[i * k * n..(i + 1) * k * n],
                                &ad[i * m * k..(i + 1) * m * k],
                                &og[i * m * n..(i + 1) * m * n],
                                k,
                                m,
                                n,
                            );
                        }
                    });
                }
            }),
        ))
    }

    /// `(b, m, h)` -> `(b*heads, m, h/heads)`, slicing the feature dim.
    pub fn split_heads(&self, heads: usize) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.len() != 3 || heads == 0 || s[2] % heads != 0 {
            return Err(TensorError::InvalidShape {
                op: "split_heads",
                shape: s.to_vec(),
                detail: format!("feature dim must divide into {heads} heads"),
            });
        }
        let (b, m, h) = (s[0], s[1], s[2]);
        let dh = h / heads;
        let mut data = vec![T::zero(); self.numel()];
        {
            let src = self.data();
            for bi in 0..b {
                for hi in 0..heads {
                    for mi in 0..m {
                        let dst = (((bi * heads + hi) * m) + mi) * dh;
                        let srco = (bi * m + mi) * h + hi * dh;
                        data[dst..dst + dh].copy_from_slice(&src[srco..srco + dh]);
                    }
                }
            }
        }
        let a = self.clone();
        Ok(Tensor::from_op(
            vec![b * heads, m, dh],
            data,
            vec![self.clone()],
            Box::new(move |og, _| {
                a.accumulate_grad_at(|g| {
                    for bi in 0..b {
                        for hi in 0..heads {
                            for mi in 0..m {
                                let src = (((bi * heads + hi) * m) + mi) * dh;
                                let dsto = (bi * m + mi) * h + hi * dh;
                                for i in 0..dh {
                                    g[dsto + i] = g[dsto + i] + og[src + i];
                                }
                            }
                        }
                    }
                });
            }),
        ))
    }

    /// Inverse of `split_heads`: `(b*heads, m, dh)` -> `(b, m, heads*dh)`.
    pub fn merge_heads(&self, heads: usize) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.len() != 3 || heads == 0 || s[0] % heads != 0 {
            return Err(TensorError::InvalidShape {
                op: "merge_heads",
                shape: s.to_vec(),
                detail: format!("batch dim must divide into {heads} heads"),
            });
        }
        let (bh, m, dh) = (s[0], s[1], s[2]);
        let b = bh / heads;
        let h = heads * dh;
        let mut data = vec![T::zero(); self.numel()];
        {
            let src = self.data();
            for bi in 0..b {
                for hi in 0..heads {
                    for mi in 0..m {
                        let srco = (((bi * heads + hi) * m) + mi) * dh;
                        let dst = (bi * m + mi) * h + hi * dh;
                        data[dst..dst + dh].copy_from_slice(&src[srco..srco + dh]);
                    }
                }
            }
        }
        let a = self.clone();
        Ok(Tensor::from_op(
            vec![b, m, h],
            data,
            vec![self.clone()],
            Box::new(move |og, _| {
                a.accumulate_grad_at(|g| {
                    for bi in 0..b {
                        for hi in 0..heads {
                            for mi in 0..m {
                                let dsto = (((bi * heads + hi) * m) + mi) * dh;
                                let src = (bi * m + mi) * h + hi * dh;
                                for i in 0..dh {
                                    g[dsto + i] = g[dsto + i] + og[src + i];
                                }
                            }
                        }
                    }
                });
            }),
        ))
    }
}
