//! Finite-difference oracles for every differentiable op. Central
//! differences at 64-bit, step 1e-4, relative tolerance 1e-3.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use widgetcap_tensor::{grad_check, BatchNorm2d, GradCheckOptions, LayerNorm, Result, Tensor};

const TOL: f64 = 1e-3;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random values bounded away from zero so relu kinks and max ties cannot
/// land on a test point.
fn spread(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            sign * rng.gen_range(0.2..1.0)
        })
        .collect()
}

fn param(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_f64(shape, &spread(rng, n), true).unwrap()
}

fn assert_grads<F>(label: &str, f: F, params: &[(&str, Tensor<f64>)])
where
    F: Fn() -> Result<Tensor<f64>>,
{
    let named: Vec<(String, Tensor<f64>)> = params
        .iter()
        .map(|(n, t)| (n.to_string(), t.clone()))
        .collect();
    let report = grad_check(f, &named, &GradCheckOptions::default()).unwrap();
    assert!(
        report.passes(TOL),
        "{label} failed the finite-difference check:\n{report}"
    );
}

#[test]
fn elementwise_binary_grads() {
    let mut r = rng(1);
    let a = param(&mut r, &[3, 4]);
    let b = param(&mut r, &[3, 4]);
    assert_grads("add", || Ok(a.add(&b)?.mul(&a)?.sum()), &[("a", a.clone()), ("b", b.clone())]);
    assert_grads("sub", || Ok(a.sub(&b)?.mul(&b)?.sum()), &[("a", a.clone()), ("b", b.clone())]);
    assert_grads("mul", || Ok(a.mul(&b)?.sum()), &[("a", a.clone()), ("b", b.clone())]);
}

#[test]
fn broadcast_grads() {
    let mut r = rng(2);
    let x = param(&mut r, &[2, 3, 4]);
    let bias = param(&mut r, &[4]);
    let row = param(&mut r, &[2, 1, 4]);
    assert_grads(
        "bias add",
        || Ok(x.add(&bias)?.mul(&x)?.sum()),
        &[("x", x.clone()), ("bias", bias.clone())],
    );
    assert_grads(
        "middle-dim broadcast mul",
        || Ok(x.mul(&row)?.sum()),
        &[("x", x.clone()), ("row", row.clone())],
    );
}

#[test]
fn unary_grads() {
    let mut r = rng(3);
    let x = param(&mut r, &[4, 5]);
    assert_grads("neg", || Ok(x.neg().mul(&x)?.sum()), &[("x", x.clone())]);
    assert_grads("relu", || Ok(x.relu().mul(&x)?.sum()), &[("x", x.clone())]);
    assert_grads("sigmoid", || Ok(x.sigmoid().sum()), &[("x", x.clone())]);
    assert_grads("scale", || Ok(x.scale(-2.5).mul(&x)?.sum()), &[("x", x.clone())]);
    assert_grads("add_scalar", || Ok(x.add_scalar(0.7).mul(&x)?.sum()), &[("x", x.clone())]);
    assert_grads("mean", || Ok(x.mul(&x)?.mean()), &[("x", x.clone())]);
}

#[test]
fn movement_grads() {
    let mut r = rng(4);
    let a = param(&mut r, &[2, 6]);
    let b = param(&mut r, &[2, 3]);
    assert_grads(
        "reshape",
        || Ok(a.reshape(&[3, 4])?.mul(&a.reshape(&[3, 4])?)?.sum()),
        &[("a", a.clone())],
    );
    assert_grads(
        "concat+slice",
        || {
            let c = Tensor::concat(&[&a, &b], 1)?;
            let s = c.slice(1, 4, 4)?;
            Ok(s.mul(&s)?.sum())
        },
        &[("a", a.clone()), ("b", b.clone())],
    );
    let x = param(&mut r, &[2, 3, 4]);
    assert_grads(
        "transpose_last2",
        || {
            let t = x.transpose_last2()?;
            Ok(t.mul(&t)?.sum())
        },
        &[("x", x.clone())],
    );
    assert_grads(
        "split/merge heads",
        || {
            let s = x.split_heads(2)?;
            let m = s.mul(&s)?.merge_heads(2)?;
            Ok(m.sum())
        },
        &[("x", x.clone())],
    );
}

#[test]
fn gather_and_max_grads() {
    let mut r = rng(5);
    let table = param(&mut r, &[6, 3]);
    assert_grads(
        "gather_rows with repeats",
        || {
            let g = table.gather_rows(&[0, 2, 2, 5])?;
            Ok(g.mul(&g)?.sum())
        },
        &[("table", table.clone())],
    );
    let m = param(&mut r, &[4, 3]);
    assert_grads(
        "max_rows",
        || {
            let mx = m.max_rows()?;
            Ok(mx.mul(&mx)?.sum())
        },
        &[("m", m.clone())],
    );
}

#[test]
fn matmul_grads() {
    let mut r = rng(6);
    let a = param(&mut r, &[3, 4]);
    let b = param(&mut r, &[4, 5]);
    assert_grads(
        "matmul",
        || {
            let c = a.matmul(&b)?;
            Ok(c.mul(&c)?.sum())
        },
        &[("a", a.clone()), ("b", b.clone())],
    );
    let p = param(&mut r, &[2, 3, 4]);
    let q = param(&mut r, &[2, 4, 2]);
    assert_grads(
        "bmm",
        || {
            let c = p.bmm(&q)?;
            Ok(c.mul(&c)?.sum())
        },
        &[("p", p.clone()), ("q", q.clone())],
    );
}

#[test]
fn softmax_grads() {
    let mut r = rng(7);
    let x = param(&mut r, &[3, 5]);
    let w = param(&mut r, &[3, 5]);
    assert_grads(
        "softmax_last",
        || Ok(x.softmax_last()?.mul(&w)?.sum()),
        &[("x", x.clone())],
    );
}

#[test]
fn cross_entropy_grads() {
    let mut r = rng(8);
    let logits = param(&mut r, &[4, 6]);
    let targets = [0usize, 5, 2, 2];
    let weights = Tensor::from_f64(&[4], &[0.5, 1.0, 0.0, 2.0], false).unwrap();
    assert_grads(
        "softmax_cross_entropy (weighted/masked)",
        || {
            let losses = logits.softmax_cross_entropy(&targets)?;
            Ok(losses.mul(&weights)?.sum())
        },
        &[("logits", logits.clone())],
    );
}

#[test]
fn conv2d_grads() {
    let mut r = rng(9);
    let x = param(&mut r, &[2, 8, 8, 2]);
    let k = param(&mut r, &[3, 3, 2, 3]);
    assert_grads(
        "conv2d stride 1",
        || {
            let y = x.conv2d(&k, 1)?;
            Ok(y.mul(&y)?.sum())
        },
        &[("x", x.clone()), ("k", k.clone())],
    );
    assert_grads(
        "conv2d stride 2",
        || {
            let y = x.conv2d(&k, 2)?;
            Ok(y.mul(&y)?.sum())
        },
        &[("x", x.clone()), ("k", k.clone())],
    );
    let k5 = param(&mut r, &[5, 5, 2, 2]);
    assert_grads(
        "conv2d 5x5 stride 2",
        || {
            let y = x.conv2d(&k5, 2)?;
            Ok(y.mul(&y)?.sum())
        },
        &[("x", x.clone()), ("k", k5.clone())],
    );
}

#[test]
fn conv2d_transposed_grads() {
    let mut r = rng(10);
    let x = param(&mut r, &[2, 4, 4, 3]);
    let k = param(&mut r, &[3, 3, 3, 2]);
    assert_grads(
        "conv2d_transposed stride 2",
        || {
            let y = x.conv2d_transposed(&k, 2)?;
            Ok(y.mul(&y)?.sum())
        },
        &[("x", x.clone()), ("k", k.clone())],
    );
    assert_grads(
        "conv2d_transposed stride 1",
        || {
            let y = x.conv2d_transposed(&k, 1)?;
            Ok(y.mul(&y)?.sum())
        },
        &[("x", x.clone()), ("k", k.clone())],
    );
}

#[test]
fn batch_norm_grads() {
    let mut r = rng(11);
    let x = param(&mut r, &[6, 3]);
    let bn = BatchNorm2d::<f64>::new(3);
    bn.gamma.set_data(&spread(&mut r, 3));
    bn.beta.set_data(&spread(&mut r, 3));
    assert_grads(
        "batch_norm train",
        || {
            let y = bn.forward(&x, true)?;
            Ok(y.mul(&y)?.sum())
        },
        &[
            ("x", x.clone()),
            ("gamma", bn.gamma.clone()),
            ("beta", bn.beta.clone()),
        ],
    );
    // Seed running stats, then check the inference path too.
    bn.forward(&x, true).unwrap();
    assert_grads(
        "batch_norm infer",
        || {
            let y = bn.forward(&x, false)?;
            Ok(y.mul(&y)?.sum())
        },
        &[
            ("x", x.clone()),
            ("gamma", bn.gamma.clone()),
            ("beta", bn.beta.clone()),
        ],
    );
}

#[test]
fn layer_norm_grads() {
    let mut r = rng(12);
    let x = param(&mut r, &[2, 3, 4]);
    let ln = LayerNorm::<f64>::new(4);
    ln.gamma.set_data(&spread(&mut r, 4));
    ln.beta.set_data(&spread(&mut r, 4));
    assert_grads(
        "layer_norm",
        || {
            let y = ln.forward(&x)?;
            Ok(y.mul(&y)?.sum())
        },
        &[
            ("x", x.clone()),
            ("gamma", ln.gamma.clone()),
            ("beta", ln.beta.clone()),
        ],
    );
}

#[test]
fn composite_attention_block_grads() {
    // A miniature attention computation chaining most ops end to end.
    let mut r = rng(13);
    let x = param(&mut r, &[1, 4, 8]);
    let wq = param(&mut r, &[8, 8]);
    let wk = param(&mut r, &[8, 8]);
    let wv = param(&mut r, &[8, 8]);
    let heads = 2usize;
    let f = || -> Result<Tensor<f64>> {
        let flat = x.reshape(&[4, 8])?;
        let q = flat.matmul(&wq)?.reshape(&[1, 4, 8])?.split_heads(heads)?;
        let k = flat.matmul(&wk)?.reshape(&[1, 4, 8])?.split_heads(heads)?;
        let v = flat.matmul(&wv)?.reshape(&[1, 4, 8])?.split_heads(heads)?;
        let scores = q.bmm(&k.transpose_last2()?)?.scale(0.5);
        let probs = scores.softmax_last()?;
        let ctx = probs.bmm(&v)?.merge_heads(heads)?;
        Ok(ctx.mul(&ctx)?.sum())
    };
    assert_grads(
        "attention composite",
        f,
        &[
            ("x", x.clone()),
            ("wq", wq.clone()),
            ("wk", wk.clone()),
            ("wv", wv.clone()),
        ],
    );
}
