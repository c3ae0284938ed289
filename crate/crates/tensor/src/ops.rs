use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Numpy-style broadcast of two shapes, aligned from the right.
pub(crate) fn broadcast_shape(
    op: &'static str,
    a: &[usize],
    b: &[usize],
) -> Result<Vec<usize>> {
    let nd = a.len().max(b.len());
    let mut out = vec![0usize; nd];
    for i in 0..nd {
        let da = if i < nd - a.len() { 1 } else { a[i - (nd - a.len())] };
        let db = if i < nd - b.len() { 1 } else { b[i - (nd - b.len())] };
        if da == db || da == 1 || db == 1 {
            out[i] = da.max(db);
        } else {
            return Err(TensorError::ShapeMismatch {
                op,
                left: a.to_vec(),
                right: b.to_vec(),
            });
        }
    }
    Ok(out)
}

/// Row-major strides of `shape` within `out_shape`, with 0 on broadcast dims.
fn broadcast_strides(out_shape: &[usize], shape: &[usize]) -> Vec<usize> {
    let nd = out_shape.len();
    let offset = nd - shape.len();
    let mut full = vec![1usize; nd];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        full[offset + i] = full[offset + i + 1] * shape[i + 1];
    }
    let mut strides = vec![0usize; nd];
    for i in 0..nd {
        let dim = if i < offset { 1 } else { shape[i - offset] };
        strides[i] = if dim == 1 { 0 } else { full[i] };
    }
    strides
}

/// Walk every element of `out_shape`, yielding the linear output index and
/// the offsets into the two broadcast operands.
fn for_each_broadcast(
    out_shape: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let nd = out_shape.len();
    if nd == 0 {
        f(0, 0, 0);
        return;
    }
    let inner = out_shape[nd - 1];
    let outer: usize = out_shape[..nd - 1].iter().product();
    let (ia, ib) = (sa[nd - 1], sb[nd - 1]);
    let mut counters = vec![0usize; nd.saturating_sub(1)];
    let (mut offa, mut offb) = (0usize, 0usize);
    let mut out_idx = 0usize;
    for _ in 0..outer {
        for j in 0..inner {
            f(out_idx, offa + j * ia, offb + j * ib);
            out_idx += 1;
        }
        // Advance the odometer over the leading dims.
        for d in (0..nd - 1).rev() {
            counters[d] += 1;
            offa += sa[d];
            offb += sb[d];
            if counters[d] < out_shape[d] {
                break;
            }
            counters[d] = 0;
            offa -= sa[d] * out_shape[d];
            offb -= sb[d] * out_shape[d];
        }
    }
}

/// Sum `src` (shaped `out_shape`) into the gradient of `parent`, collapsing
/// broadcast dims.
fn reduce_into_parent<T: Scalar>(parent: &Tensor<T>, out_shape: &[usize], src: &[T]) {
    // Parent dims each equal the output dim or 1, so an equal element count
    // means no broadcasting happened for this operand.
    if parent.numel() == src.len() {
        parent.accumulate_grad(src);
        return;
    }
    let sp = broadcast_strides(out_shape, parent.shape());
    let zeros = vec![0usize; out_shape.len()];
    parent.accumulate_grad_at(|g| {
        for_each_broadcast(out_shape, &sp, &zeros, |out_idx, poff, _| {
            g[poff] = g[poff] + src[out_idx];
        });
    });
}

enum BinKind {
    Add,
    Sub,
    Mul,
}

impl<T: Scalar> Tensor<T> {
    fn binop(&self, rhs: &Tensor<T>, kind: BinKind, op: &'static str) -> Result<Tensor<T>> {
        let out_shape = broadcast_shape(op, self.shape(), rhs.shape())?;
        let numel: usize = out_shape.iter().product();
        let mut data = vec![T::zero(); numel];
        {
            let a = self.data();
            let b = rhs.data();
            if self.shape() == rhs.shape() {
                match kind {
                    BinKind::Add => {
                        for i in 0..numel {
                            data[i] = a[i] + b[i];
                        }
                    }
                    BinKind::Sub => {
                        for i in 0..numel {
                            data[i] = a[i] - b[i];
                        }
                    }
                    BinKind::Mul => {
                        for i in 0..numel {
                            data[i] = a[i] * b[i];
                        }
                    }
                }
            } else {
                let sa = broadcast_strides(&out_shape, self.shape());
                let sb = broadcast_strides(&out_shape, rhs.shape());
                match kind {
                    BinKind::Add => for_each_broadcast(&out_shape, &sa, &sb, |o, i, j| {
                        data[o] = a[i] + b[j];
                    }),
                    BinKind::Sub => for_each_broadcast(&out_shape, &sa, &sb, |o, i, j| {
                        data[o] = a[i] - b[j];
                    }),
                    BinKind::Mul => for_each_broadcast(&out_shape, &sa, &sb, |o, i, j| {
                        data[o] = a[i] * b[j];
                    }),
                }
            }
        }

        let (a, b) = (self.clone(), rhs.clone());
        let shape_for_back = out_shape.clone();
        let backward: crate::tensor::BackwardFn<T> = match kind {
            BinKind::Add => Box::new(move |og, _| {
                if a.requires_grad() {
                    reduce_into_parent(&a, &shape_for_back, og);
                }
                if b.requires_grad() {
                    reduce_into_parent(&b, &shape_for_back, og);
                }
            }),
            BinKind::Sub => Box::new(move |og, _| {
                if a.requires_grad() {
                    reduce_into_parent(&a, &shape_for_back, og);
                }
                if b.requires_grad() {
                    let neg: Vec<T> = og.iter().map(|&g| -g).collect();
                    reduce_into_parent(&b, &shape_for_back, &neg);
                }
            }),
            BinKind::Mul => Box::new(move |og, _| {
                let sa = broadcast_strides(&shape_for_back, a.shape());
                let sb = broadcast_strides(&shape_for_back, b.shape());
                if a.requires_grad() {
                    let mut da = vec![T::zero(); og.len()];
                    {
                        let bd = b.data();
                        for_each_broadcast(&shape_for_back, &sa, &sb, |o, _, j| {
                            da[o] = og[o] * bd[j];
                        });
                    }
                    reduce_into_parent(&a, &shape_for_back, &da);
                }
                if b.requires_grad() {
                    let mut db = vec![T::zero(); og.len()];
                    {
                        let ad = a.data();
                        for_each_broadcast(&shape_for_back, &sa, &sb, |o, i, _| {
                            db[o] = og[o] * ad[i];
                        });
                    }
                    reduce_into_parent(&b, &shape_for_back, &db);
                }
            }),
        };
        Ok(Tensor::from_op(
            out_shape,
            data,
            vec![self.clone(), rhs.clone()],
            backward,
        ))
    }

    pub fn add(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.binop(rhs, BinKind::Add, "add")
    }

    pub fn sub(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.binop(rhs, BinKind::Sub, "sub")
    }

    pub fn mul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.binop(rhs, BinKind::Mul, "mul")
    }

    pub fn neg(&self) -> Tensor<T> {
        let data: Vec<T> = self.data().iter().map(|&v| -v).collect();
        let a = self.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |og, _| {
                a.accumulate_grad_at(|g| {
                    for i in 0..g.len() {
                        g[i] = g[i] - og[i];
                    }
                });
            }),
        )
    }

    pub fn relu(&self) -> Tensor<T> {
        let data: Vec<T> = self
            .data()
            .iter()
            .map(|&v| if v > T::zero() { v } else { T::zero() })
            .collect();
        let a = self.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |og, _| {
                let src = a.to_vec();
                a.accumulate_grad_at(|g| {
                    for i in 0..g.len() {
                        if src[i] > T::zero() {
                            g[i] = g[i] + og[i];
                        }
                    }
                });
            }),
        )
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        let data: Vec<T> = self
            .data()
            .iter()
            .map(|&v| T::one() / (T::one() + (-v).exp()))
            .collect();
        let a = self.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |og, out| {
                a.accumulate_grad_at(|g| {
                    for i in 0..g.len() {
                        g[i] = g[i] + og[i] * out[i] * (T::one() - out[i]);
                    }
                });
            }),
        )
    }

    pub fn scale(&self, factor: f64) -> Tensor<T> {
        let c = T::cast(factor);
        let data: Vec<T> = self.data().iter().map(|&v| v * c).collect();
        let a = self.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |og, _| {
                a.accumulate_grad_at(|g| {
                    for i in 0..g.len() {
                        g[i] = g[i] + og[i] * c;
                    }
                });
            }),
        )
    }

    pub fn add_scalar(&self, value: f64) -> Tensor<T> {
        let c = T::cast(value);
        let data: Vec<T> = self.data().iter().map(|&v| v + c).collect();
        let a = self.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |og, _| a.accumulate_grad(og)),
        )
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(TensorError::InvalidShape {
                op: "reshape",
                shape: shape.to_vec(),
                detail: format!("cannot view {} elements as {:?}", self.numel(), shape),
            });
        }
        let a = self.clone();
        Ok(Tensor::from_op(
            shape.to_vec(),
            self.to_vec(),
            vec![self.clone()],
            Box::new(move |og, _| a.accumulate_grad(og)),
        ))
    }

    /// Concatenate along `axis`. All other dims must agree.
    pub fn concat(parts: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>> {
        if parts.is_empty() {
            return Err(TensorError::InvalidShape {
                op: "concat",
                shape: vec![],
                detail: "no tensors given".into(),
            });
        }
        let nd = parts[0].shape().len();
        if axis >= nd {
            return Err(TensorError::IndexOutOfRange {
                what: "concat axis",
                index: axis,
                size: nd,
            });
        }
        let mut out_shape = parts[0].shape().to_vec();
        let mut axis_total = 0usize;
        for p in parts {
            if p.shape().len() != nd {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    left: parts[0].shape().to_vec(),
                    right: p.shape().to_vec(),
                });
            }
            for d in 0..nd {
                if d != axis && p.shape()[d] != out_shape[d] {
                    return Err(TensorError::ShapeMismatch {
                        op: "concat",
                        left: out_shape.clone(),
                        right: p.shape().to_vec(),
                    });
                }
            }
            axis_total += p.shape()[axis];
        }
        out_shape[axis] = axis_total;

        let outer: usize = out_shape[..axis].iter().product();
        let inner: usize = out_shape[axis + 1..].iter().product();
        let mut data = vec![T::zero(); outer * axis_total * inner];
        let mut axis_offset = 0usize;
        for p in parts {
            let pa = p.shape()[axis];
            let pd = p.data();
            for o in 0..outer {
                let src = &pd[o * pa * inner..(o * pa + pa) * inner];
                let dst_start = (o * axis_total + axis_offset) * inner;
                data[dst_start..dst_start + pa * inner].copy_from_slice(src);
            }
            axis_offset += pa;
        }

        let handles: Vec<Tensor<T>> = parts.iter().map(|p| (*p).clone()).collect();
        let back_handles = handles.clone();
        let back_shape = out_shape.clone();
        Ok(Tensor::from_op(
            out_shape,
            data,
            handles,
            Box::new(move |og, _| {
                let outer: usize = back_shape[..axis].iter().product();
                let inner: usize = back_shape[axis + 1..].iter().product();
                let total = back_shape[axis];
                let mut axis_offset = 0usize;
                for p in &back_handles {
                    let pa = p.shape()[axis];
                    if p.requires_grad() {
                        p.accumulate_grad_at(|g| {
                            for o in 0..outer {
                                let src_start = (o * total + axis_offset) * inner;
                                let dst = &mut g[o * pa * inner..(o * pa + pa) * inner];
                                for (d, &s) in
                                    dst.iter_mut().zip(&og[src_start..src_start + pa * inner])
                                {
                                    *d = *d + s;
                                }
                            }
                        });
                    }
                    axis_offset += pa;
                }
            }),
        ))
    }

    /// Narrow to `[start, start+len)` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor<T>> {
        let nd = self.shape().len();
        if axis >= nd {
            return Err(TensorError::IndexOutOfRange {
                what: "slice axis",
                index: axis,
                size: nd,
            });
        }
        let dim = self.shape()[axis];
        if start + len > dim {
            return Err(TensorError::IndexOutOfRange {
                what: "slice range end",
                index: start + len,
                size: dim,
            });
        }
        let mut out_shape = self.shape().to_vec();
        out_shape[axis] = len;
        let outer: usize = self.shape()[..axis].iter().product();
        let inner: usize = self.shape()[axis + 1..].iter().product();
        let mut data = vec![T::zero(); outer * len * inner];
        {
            let src = self.data();
            for o in 0..outer {
                let s = (o * dim + start) * inner;
                data[o * len * inner..(o + 1) * len * inner]
                    .copy_from_slice(&src[s..s + len * inner]);
            }
        }
        let a = self.clone();
        Ok(Tensor::from_op(
            out_shape,
            data,
            vec![self.clone()],
            Box::new(move |og, _| {
                a.accumulate_grad_at(|g| {
                    for o in 0..outer {
                        let d = (o * dim + start) * inner;
                        let src = &og[o * len * inner..(o + 1) * len * inner];
                        for (i, &s) in src.iter().enumerate() {
                            g[d + i] = g[d + i] + s;
                        }
                    }
                });
            }),
        ))
    }

    /// Swap the last two dims (2-D transpose, batched for higher ranks).
    pub fn transpose_last2(&self) -> Result<Tensor<T>> {
        let nd = self.shape().len();
        if nd < 2 {
            return Err(TensorError::InvalidShape {
                op: "transpose_last2",
                shape: self.shape().to_vec(),
                detail: "needs at least 2 dims".into(),
            });
        }
        let rows = self.shape()[nd - 2];
        let cols = self.shape()[nd - 1];
        let batch: usize = self.shape()[..nd - 2].iter().product();
        let mut out_shape = self.shape().to_vec();
        out_shape[nd - 2] = cols;
        out_shape[nd - 1] = rows;
        let mut data = vec![T::zero(); self.numel()];
        {
            let src = self.data();
            for b in 0..batch {
                let base = b * rows * cols;
                for r in 0..rows {
                    for c in 0..cols {
                        data[base + c * rows + r] = src[base + r * cols + c];
                    }
                }
            }
        }
        let a = self.clone();
        Ok(Tensor::from_op(
            out_shape,
            data,
            vec![self.clone()],
            Box::new(move |og, _| {
                a.accumulate_grad_at(|g| {
                    for b in 0..batch {
                        let base = b * rows * cols;
                        for r in 0..rows {
                            for c in 0..cols {
                                g[base + r * cols + c] =
                                    g[base + r * cols + c] + og[base + c * rows + r];
                            }
                        }
                    }
                });
            }),
        ))
    }

    /// Gather rows of a 2-D table: `(V, D)` indexed by `ids` -> `(ids.len(), D)`.
    /// Backward scatter-adds into the table.
    pub fn gather_rows(&self, ids: &[usize]) -> Result<Tensor<T>> {
        if self.shape().len() != 2 {
            return Err(TensorError::InvalidShape {
                op: "gather_rows",
                shape: self.shape().to_vec(),
                detail: "table must be 2-D".into(),
            });
        }
        let (v, d) = (self.shape()[0], self.shape()[1]);
        for &id in ids {
            if id >= v {
                return Err(TensorError::IndexOutOfRange {
                    what: "gather row",
                    index: id,
                    size: v,
                });
            }
        }
        let mut data = vec![T::zero(); ids.len() * d];
        {
            let src = self.data();
            for (r, &id) in ids.iter().enumerate() {
                data[r * d..(r + 1) * d].copy_from_slice(&src[id * d..(id + 1) * d]);
            }
        }
        let a = self.clone();
        let ids_owned = ids.to_vec();
        Ok(Tensor::from_op(
            vec![ids.len(), d],
            data,
            vec![self.clone()],
            Box::new(move |og, _| {
                a.accumulate_grad_at(|g| {
                    for (r, &id) in ids_owned.iter().enumerate() {
                        let src = &og[r * d..(r + 1) * d];
                        let dst = &mut g[id * d..(id + 1) * d];
                        for (di, &s) in dst.iter_mut().zip(src) {
                            *di = *di + s;
                        }
                    }
                });
            }),
        ))
    }

    /// Column-wise max over the rows of a 2-D tensor: `(R, D)` -> `(D,)`.
    /// Gradient flows to the first row attaining the max in each column.
    pub fn max_rows(&self) -> Result<Tensor<T>> {
        if self.shape().len() != 2 || self.shape()[0] == 0 {
            return Err(TensorError::InvalidShape {
                op: "max_rows",
                shape: self.shape().to_vec(),
                detail: "needs a non-empty 2-D tensor".into(),
            });
        }
        let (r, d) = (self.shape()[0], self.shape()[1]);
        let mut data = vec![T::zero(); d];
        let mut argmax = vec![0usize; d];
        {
            let src = self.data();
            for c in 0..d {
                let mut best = src[c];
                let mut best_r = 0usize;
                for row in 1..r {
                    let v = src[row * d + c];
                    if v > best {
                        best = v;
                        best_r = row;
                    }
                }
                data[c] = best;
                argmax[c] = best_r;
            }
        }
        let a = self.clone();
        Ok(Tensor::from_op(
            vec![d],
            data,
            vec![self.clone()],
            Box::new(move |og, _| {
                a.accumulate_grad_at(|g| {
                    for c in 0..d {
                        let idx = argmax[c] * d + c;
                        g[idx] = g[idx] + og[c];
                    }
                });
            }),
        ))
    }

    pub fn sum(&self) -> Tensor<T> {
        let total: T = self.data().iter().copied().sum();
        let a = self.clone();
        Tensor::from_op(
            vec![],
            vec![total],
            vec![self.clone()],
            Box::new(move |og, _| {
                let g0 = og[0];
                a.accumulate_grad_at(|g| {
                    for gi in g.iter_mut() {
                        *gi = *gi + g0;
                    }
                });
            }),
        )
    }

    pub fn mean(&self) -> Tensor<T> {
        let n = self.numel().max(1);
        self.sum().scale(1.0 / n as f64)
    }

    /// Softmax over the last dim.
    pub fn softmax_last(&self) -> Result<Tensor<T>> {
        let nd = self.shape().len();
        if nd == 0 {
            return Err(TensorError::InvalidShape {
                op: "softmax_last",
                shape: vec![],
                detail: "needs at least 1 dim".into(),
            });
        }
        let cols = self.shape()[nd - 1];
        let rows = self.numel() / cols.max(1);
        let mut data = vec![T::zero(); self.numel()];
        {
            let src = self.data();
            for r in 0..rows {
                let row = &src[r * cols..(r + 1) * cols];
                let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                let mut denom = T::zero();
                for (j, &v) in row.iter().enumerate() {
                    let e = (v - max).exp();
                    data[r * cols + j] = e;
                    denom = denom + e;
                }
                for j in 0..cols {
                    data[r * cols + j] = data[r * cols + j] / denom;
                }
            }
        }
        let a = self.clone();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |og, out| {
                a.accumulate_grad_at(|g| {
                    for r in 0..rows {
                        let o = r * cols;
                        let mut dot = T::zero();
                        for j in 0..cols {
                            dot = dot + og[o + j] * out[o + j];
                        }
                        for j in 0..cols {
                            g[o + j] = g[o + j] + out[o + j] * (og[o + j] - dot);
                        }
                    }
                });
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t64(shape: &[usize], vals: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, vals, true).unwrap()
    }

    #[test]
    fn add_same_shape_and_backward() {
        let a = t64(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = t64(&[2, 2], &[10.0, 20.0, 30.0, 40.0]);
        let c = a.add(&b).unwrap();
        assert_eq!(c.to_f64_vec(), vec![11.0, 22.0, 33.0, 44.0]);
        c.sum().backward().unwrap();
        assert_eq!(a.grad_f64(), vec![1.0; 4]);
        assert_eq!(b.grad_f64(), vec![1.0; 4]);
    }

    #[test]
    fn broadcast_bias_add() {
        let a = t64(&[2, 3], &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = t64(&[3], &[1.0, 2.0, 3.0]);
        let c = a.add(&b).unwrap();
        assert_eq!(c.to_f64_vec(), vec![1.0, 2.0, 3.0, 2.0, 3.0, 4.0]);
        c.sum().backward().unwrap();
        // Bias gradient sums over the broadcast rows.
        assert_eq!(b.grad_f64(), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn broadcast_middle_dim() {
        let a = t64(&[2, 2, 2], &[1.0; 8]);
        let z = t64(&[2, 1, 2], &[1.0, 2.0, 3.0, 4.0]);
        let c = a.add(&z).unwrap();
        assert_eq!(
            c.to_f64_vec(),
            vec![2.0, 3.0, 2.0, 3.0, 4.0, 5.0, 4.0, 5.0]
        );
        c.sum().backward().unwrap();
        assert_eq!(z.grad_f64(), vec![2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn mismatched_shapes_error() {
        let a = t64(&[2, 3], &[0.0; 6]);
        let b = t64(&[2, 2], &[0.0; 4]);
        assert!(matches!(
            a.add(&b),
            Err(TensorError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn mul_backward_routes_operand_values() {
        let a = t64(&[2], &[3.0, 5.0]);
        let b = t64(&[2], &[7.0, 11.0]);
        a.mul(&b).unwrap().sum().backward().unwrap();
        assert_eq!(a.grad_f64(), vec![7.0, 11.0]);
        assert_eq!(b.grad_f64(), vec![3.0, 5.0]);
    }

    #[test]
    fn repeated_operand_accumulates() {
        let a = t64(&[2], &[3.0, 4.0]);
        // d(x^2)/dx = 2x
        a.mul(&a).unwrap().sum().backward().unwrap();
        assert_eq!(a.grad_f64(), vec![6.0, 8.0]);
    }

    #[test]
    fn concat_and_slice_roundtrip() {
        let a = t64(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = t64(&[2, 1], &[9.0, 8.0]);
        let c = Tensor::concat(&[&a, &b], 1).unwrap();
        assert_eq!(c.shape(), &[2, 3]);
        assert_eq!(c.to_f64_vec(), vec![1.0, 2.0, 9.0, 3.0, 4.0, 8.0]);
        let back = c.slice(1, 2, 1).unwrap();
        assert_eq!(back.to_f64_vec(), vec![9.0, 8.0]);
        back.sum().backward().unwrap();
        assert_eq!(b.grad_f64(), vec![1.0, 1.0]);
        assert_eq!(a.grad_f64(), vec![0.0; 4]);
    }

    #[test]
    fn max_rows_picks_first_on_tie() {
        let a = t64(&[3, 2], &[1.0, 5.0, 4.0, 5.0, 4.0, 2.0]);
        let m = a.max_rows().unwrap();
        assert_eq!(m.to_f64_vec(), vec![4.0, 5.0]);
        m.sum().backward().unwrap();
        // Column 0 max at row 1 (first of the 4.0 tie), column 1 at row 0.
        assert_eq!(a.grad_f64(), vec![0.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let a = t64(&[2, 4], &[0.1, 0.2, 0.3, 0.4, -1.0, 0.0, 1.0, 2.0]);
        let s = a.softmax_last().unwrap();
        let d = s.to_f64_vec();
        for r in 0..2 {
            let sum: f64 = d[r * 4..(r + 1) * 4].iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn off_path_grad_stays_zero() {
        let a = t64(&[2], &[1.0, 2.0]);
        let b = t64(&[2], &[3.0, 4.0]);
        let loss = a.mul(&a).unwrap().sum();
        loss.backward().unwrap();
        assert_eq!(b.grad_f64(), vec![0.0, 0.0]);
    }
}
