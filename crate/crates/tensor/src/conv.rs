use crate::error::{Result, TensorError};
use crate::matmul::{gemm_nn, gemm_nt, gemm_tn};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// SAME-padding geometry for one spatial axis: output extent and the
/// low-side padding. Total padding is `max(0, (out-1)*stride + k - in)`,
/// split with the extra pixel on the high side.
fn same_geometry(input: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = input.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(input);
    (out, total / 2)
}

struct ConvGeom {
    n: usize,
    h: usize,
    w: usize,
    cin: usize,
    kh: usize,
    kw: usize,
    cout: usize,
    stride: usize,
    oh: usize,
    ow: usize,
    pad_top: usize,
    pad_left: usize,
}

fn conv_geom<T: Scalar>(x: &Tensor<T>, kernel: &Tensor<T>, stride: usize) -> Result<ConvGeom> {
    if stride == 0 {
        return Err(TensorError::InvalidParameter {
            op: "conv2d",
            what: "stride",
            value: 0,
        });
    }
    let xs = x.shape();
    let ks = kernel.shape();
    if xs.len() != 4 || ks.len() != 4 {
        return Err(TensorError::InvalidShape {
            op: "conv2d",
            shape: if xs.len() != 4 { xs.to_vec() } else { ks.to_vec() },
            detail: "input must be NHWC and kernel KhKwCinCout".into(),
        });
    }
    if xs[3] != ks[2] {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            left: xs.to_vec(),
            right: ks.to_vec(),
        });
    }
    let (oh, pad_top) = same_geometry(xs[1], ks[0], stride);
    let (ow, pad_left) = same_geometry(xs[2], ks[1], stride);
    Ok(ConvGeom {
        n: xs[0],
        h: xs[1],
        w: xs[2],
        cin: xs[3],
        kh: ks[0],
        kw: ks[1],
        cout: ks[3],
        stride,
        oh,
        ow,
        pad_top,
        pad_left,
    })
}

/// Patch matrix of shape `(n*oh*ow, kh*kw*cin)`; out-of-image taps are zero.
fn im2col<T: Scalar>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let cols = g.kh * g.kw * g.cin;
    let mut col = vec![T::zero(); g.n * g.oh * g.ow * cols];
    let mut row = 0usize;
    for n in 0..g.n {
        let img = &x[n * g.h * g.w * g.cin..(n + 1) * g.h * g.w * g.cin];
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let base = row * cols;
                for ky in 0..g.kh {
                    let iy = (oy * g.stride + ky) as isize - g.pad_top as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    for kx in 0..g.kw {
                        let ix = (ox * g.stride + kx) as isize - g.pad_left as isize;
                        if ix < 0 || ix >= g.w as isize {
                            continue;
                        }
                        let src = (iy as usize * g.w + ix as usize) * g.cin;
                        let dst = base + (ky * g.kw + kx) * g.cin;
                        col[dst..dst + g.cin].copy_from_slice(&img[src..src + g.cin]);
                    }
                }
                row += 1;
            }
        }
    }
    col
}

/// Adjoint of `im2col`: scatter-add patch gradients back into image layout.
fn col2im<T: Scalar>(col: &[T], g: &ConvGeom, dx: &mut [T]) {
    let cols = g.kh * g.kw * g.cin;
    let mut row = 0usize;
    for n in 0..g.n {
        let img = &mut dx[n * g.h * g.w * g.cin..(n + 1) * g.h * g.w * g.cin];
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let base = row * cols;
                for ky in 0..g.kh {
                    let iy = (oy * g.stride + ky) as isize - g.pad_top as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    for kx in 0..g.kw {
                        let ix = (ox * g.stride + kx) as isize - g.pad_left as isize;
                        if ix < 0 || ix >= g.w as isize {
                            continue;
                        }
                        let dst = (iy as usize * g.w + ix as usize) * g.cin;
                        let src = base + (ky * g.kw + kx) * g.cin;
                        for c in 0..g.cin {
                            img[dst + c] = img[dst + c] + col[src + c];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

impl<T: Scalar> Tensor<T> {
    /// 2-D convolution over NHWC input with SAME padding.
    /// Kernel layout is `(kh, kw, cin, cout)`.
    pub fn conv2d(&self, kernel: &Tensor<T>, stride: usize) -> Result<Tensor<T>> {
        let g = conv_geom(self, kernel, stride)?;
        let rows = g.n * g.oh * g.ow;
        let cols = g.kh * g.kw * g.cin;
        let col = im2col(&self.data(), &g);
        let mut out = vec![T::zero(); rows * g.cout];
        gemm_nn(&mut out, &col, &kernel.data(), rows, cols, g.cout);

        let x = self.clone();
        let k = kernel.clone();
        Ok(Tensor::from_op(
            vec![g.n, g.oh, g.ow, g.cout],
            out,
            vec![self.clone(), kernel.clone()],
            Box::new(move |og, _| {
                // The patch matrix is recomputed here rather than kept alive
                // in the graph; activations dominate memory otherwise.
                if k.requires_grad() {
                    let col = im2col(&x.data(), &g);
                    k.accumulate_grad_at(|gw| gemm_tn(gw, &col, og, cols, rows, g.cout));
                }
                if x.requires_grad() {
                    let mut dcol = vec![T::zero(); rows * cols];
                    gemm_nt(&mut dcol, og, &k.data(), rows, g.cout, cols);
                    x.accumulate_grad_at(|gx| col2im(&dcol, &g, gx));
                }
            }),
        ))
    }

    /// Transposed 2-D convolution (upsampling by `stride`): NHWC input,
    /// kernel `(kh, kw, cin, cout)`, output spatial dims = input * stride.
    /// This is the adjoint of a SAME-padded, strided convolution.
    pub fn conv2d_transposed(&self, kernel: &Tensor<T>, stride: usize) -> Result<Tensor<T>> {
        if stride == 0 {
            return Err(TensorError::InvalidParameter {
                op: "conv2d_transposed",
                what: "stride",
                value: 0,
            });
        }
        let xs = self.shape();
        let ks = kernel.shape();
        if xs.len() != 4 || ks.len() != 4 || xs[3] != ks[2] {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d_transposed",
                left: xs.to_vec(),
                right: ks.to_vec(),
            });
        }
        let (n, ih, iw, cin) = (xs[0], xs[1], xs[2], xs[3]);
        let (kh, kw, cout) = (ks[0], ks[1], ks[3]);
        let (oh, ow) = (ih * stride, iw * stride);
        // Mirror the geometry of the SAME conv that maps (oh, ow) -> (ih, iw).
        let (_, pad_top) = same_geometry(oh, kh, stride);
        let (_, pad_left) = same_geometry(ow, kw, stride);

        let mut out = vec![T::zero(); n * oh * ow * cout];
        {
            let xd = self.data();
            let kd = kernel.data();
            scatter_tconv(
                &xd, &kd, &mut out, n, ih, iw, cin, kh, kw, cout, oh, ow, stride, pad_top,
                pad_left,
            );
        }

        let x = self.clone();
        let k = kernel.clone();
        Ok(Tensor::from_op(
            vec![n, oh, ow, cout],
            out,
            vec![self.clone(), kernel.clone()],
            Box::new(move |og, _| {
                let xd = x.data();
                let kd = k.data();
                if x.requires_grad() {
                    x.accumulate_grad_at(|gx| {
                        for ni in 0..n {
                            for yi in 0..ih {
                                for xi in 0..iw {
                                    for ky in 0..kh {
                                        let oy =
                                            (yi * stride + ky) as isize - pad_top as isize;
                                        if oy < 0 || oy >= oh as isize {
                                            continue;
                                        }
                                        for kx in 0..kw {
                                            let ox = (xi * stride + kx) as isize
                                                - pad_left as isize;
                                            if ox < 0 || ox >= ow as isize {
                                                continue;
                                            }
                                            let ob = ((ni * oh + oy as usize) * ow
                                                + ox as usize)
                                                * cout;
                                            for ci in 0..cin {
                                                let kb = ((ky * kw + kx) * cin + ci) * cout;
                                                let mut acc = T::zero();
                                                for co in 0..cout {
                                                    acc = acc + og[ob + co] * kd[kb + co];
                                                }
                                                let gi = ((ni * ih + yi) * iw + xi) * cin + ci;
                                                gx[gi] = gx[gi] + acc;
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    });
                }
                if k.requires_grad() {
                    k.accumulate_grad_at(|gk| {
                        for ni in 0..n {
                            for yi in 0..ih {
                                for xi in 0..iw {
                                    let ib = ((ni * ih + yi) * iw + xi) * cin;
                                    for ky in 0..kh {
                                        let oy =
                                            (yi * stride + ky) as isize - pad_top as isize;
                                        if oy < 0 || oy >= oh as isize {
                                            continue;
                                        }
                                        for kx in 0..kw {
                                            let ox = (xi * stride + kx) as isize
                                                - pad_left as isize;
                                            if ox < 0 || ox >= ow as isize {
                                                continue;
                                            }
                                            let ob = ((ni * oh + oy as usize) * ow
                                                + ox as usize)
                                                * cout;
                                            for ci in 0..cin {
                                                let xv = xd[ib + ci];
                                                if xv == T::zero() {
                                                    continue;
                                                }
                                                let kb = ((ky * kw + kx) * cin + ci) * cout;
                                                for co in 0..cout {
                                                    gk[kb + co] =
                                                        gk[kb + co] + xv * og[ob + co];
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    });
                }
            }),
        ))
    }
}

#[allow(clippy::too_many_arguments)]
fn scatter_tconv<T: Scalar>(
    x: &[T],
    k: &[T],
    out: &mut [T],
    n: usize,
    ih: usize,
    iw: usize,
    cin: usize,
    kh: usize,
    kw: usize,
    cout: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad_top: usize,
    pad_left: usize,
) {
    for ni in 0..n {
        for yi in 0..ih {
            for xi in 0..iw {
                let ib = ((ni * ih + yi) * iw + xi) * cin;
                for ky in 0..kh {
                    let oy = (yi * stride + ky) as isize - pad_top as isize;
                    if oy < 0 || oy >= oh as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let ox = (xi * stride + kx) as isize - pad_left as isize;
                        if ox < 0 || ox >= ow as isize {
                            continue;
                        }
                        let ob = ((ni * oh + oy as usize) * ow + ox as usize) * cout;
                        for ci in 0..cin {
                            let xv = x[ib + ci];
                            if xv == T::zero() {
                                continue;
                            }
                            let kb = ((ky * kw + kx) * cin + ci) * cout;
                            for co in 0..cout {
                                out[ob + co] = out[ob + co] + xv * k[kb + co];
                            }
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stride2_same_halves_spatial() {
        let x = Tensor::<f64>::zeros(&[1, 64, 64, 1], false);
        let k = Tensor::<f64>::zeros(&[5, 5, 1, 4], false);
        let y = x.conv2d(&k, 2).unwrap();
        assert_eq!(y.shape(), &[1, 32, 32, 4]);
        // Odd extents round up.
        let x7 = Tensor::<f64>::zeros(&[1, 7, 7, 1], false);
        let k3 = Tensor::<f64>::zeros(&[3, 3, 1, 2], false);
        assert_eq!(x7.conv2d(&k3, 2).unwrap().shape(), &[1, 4, 4, 2]);
    }

    #[test]
    fn identity_1x1_kernel() {
        let vals: Vec<f64> = (0..9).map(|v| v as f64).collect();
        let x = Tensor::<f64>::from_f64(&[1, 3, 3, 1], &vals, false).unwrap();
        let k = Tensor::<f64>::from_f64(&[1, 1, 1, 1], &[1.0], false).unwrap();
        let y = x.conv2d(&k, 1).unwrap();
        assert_eq!(y.to_f64_vec(), vals);
    }

    #[test]
    fn hand_computed_3x3() {
        // 2x2 input, 3x3 kernel of ones, stride 1, SAME: each output is the
        // sum of in-image neighbours.
        let x = Tensor::<f64>::from_f64(&[1, 2, 2, 1], &[1.0, 2.0, 3.0, 4.0], false).unwrap();
        let k = Tensor::<f64>::from_f64(&[3, 3, 1, 1], &[1.0; 9], false).unwrap();
        let y = x.conv2d(&k, 1).unwrap();
        assert_eq!(y.to_f64_vec(), vec![10.0, 10.0, 10.0, 10.0]);
    }

    #[test]
    fn transposed_doubles_spatial() {
        let x = Tensor::<f64>::zeros(&[2, 4, 4, 3], false);
        let k = Tensor::<f64>::zeros(&[3, 3, 3, 6], false);
        let y = x.conv2d_transposed(&k, 2).unwrap();
        assert_eq!(y.shape(), &[2, 8, 8, 6]);
    }

    #[test]
    fn zero_stride_rejected() {
        let x = Tensor::<f64>::zeros(&[1, 4, 4, 1], false);
        let k = Tensor::<f64>::zeros(&[3, 3, 1, 1], false);
        assert!(x.conv2d(&k, 0).is_err());
        assert!(x.conv2d_transposed(&k, 0).is_err());
    }

    #[test]
    fn tconv_single_pixel_paints_kernel() {
        // One input pixel, 2x2 kernel, stride 2: no padding, so the output
        // is the kernel scaled by the pixel value.
        let x = Tensor::<f64>::from_f64(&[1, 1, 1, 1], &[3.0], false).unwrap();
        let k = Tensor::<f64>::from_f64(&[2, 2, 1, 1], &[1.0, 2.0, 4.0, 8.0], false).unwrap();
        let y = x.conv2d_transposed(&k, 2).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2, 1]);
        assert_eq!(y.to_f64_vec(), vec![3.0, 6.0, 12.0, 24.0]);
    }

    #[test]
    fn tconv_is_adjoint_of_conv() {
        // <conv(x, w), y> == <x, tconv(y, w_swapped)> where w_swapped has
        // the channel dims exchanged.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let (cin, cout) = (2usize, 3usize);
        let xv: Vec<f64> = (0..4 * 4 * cin).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let kv: Vec<f64> = (0..3 * 3 * cin * cout)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let yv: Vec<f64> = (0..2 * 2 * cout).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Tensor::<f64>::from_f64(&[1, 4, 4, cin], &xv, false).unwrap();
        let k = Tensor::<f64>::from_f64(&[3, 3, cin, cout], &kv, false).unwrap();
        let y = Tensor::<f64>::from_f64(&[1, 2, 2, cout], &yv, false).unwrap();

        let mut swapped = vec![0.0; kv.len()];
        for ky in 0..3 {
            for kx in 0..3 {
                for ci in 0..cin {
                    for co in 0..cout {
                        swapped[((ky * 3 + kx) * cout + co) * cin + ci] =
                            kv[((ky * 3 + kx) * cin + ci) * cout + co];
                    }
                }
            }
        }
        let k_swapped = Tensor::<f64>::from_f64(&[3, 3, cout, cin], &swapped, false).unwrap();

        let lhs: f64 = x
            .conv2d(&k, 2)
            .unwrap()
            .to_f64_vec()
            .iter()
            .zip(y.to_f64_vec())
            .map(|(a, b)| a * b)
            .sum();
        let rhs: f64 = y
            .conv2d_transposed(&k_swapped, 2)
            .unwrap()
            .to_f64_vec()
            .iter()
            .zip(x.to_f64_vec())
            .map(|(a, b)| a * b)
            .sum();
        assert!((lhs - rhs).abs() < 1e-9, "lhs {lhs} rhs {rhs}");
    }
}
