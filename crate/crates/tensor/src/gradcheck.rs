use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Settings for [`grad_check`]. Central differences with `step`, comparing
/// against the analytic gradient; coordinates beyond `max_coords_per_tensor`
/// are subsampled deterministically from `seed`.
pub struct GradCheckOptions {
    pub step: f64,
    pub max_coords_per_tensor: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-4,
            max_coords_per_tensor: 0, // 0 = all coordinates
            seed: 0,
        }
    }
}

#[derive(Debug)]
pub struct GradCheckEntry {
    pub name: String,
    pub coords_checked: usize,
    pub max_rel_error: f64,
    pub worst_coord: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
}

#[derive(Debug)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for e in &self.entries {
            writeln!(
                f,
                "{}: {} coords, max rel err {:.3e} (analytic {:.6e}, numeric {:.6e})",
                e.name, e.coords_checked, e.max_rel_error, e.analytic_at_worst, e.numeric_at_worst
            )?;
        }
        write!(f, "overall max rel err {:.3e}", self.max_rel_error)
    }
}

/// Small gradients drown in the O(h^2) truncation noise of the difference
/// quotient, so the denominator is floored.
fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-2)
}

/// Compare the analytic gradients of `loss_fn` with central finite
/// differences over the given parameters (64-bit only; the widths involved
/// make 32-bit differences meaningless). `loss_fn` must rebuild the scalar
/// loss from the parameters' current values on every call.
pub fn grad_check<F>(
    loss_fn: F,
    params: &[(String, Tensor<f64>)],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn() -> Result<Tensor<f64>>,
{
    for (_, p) in params {
        p.zero_grad();
    }
    let loss = loss_fn()?;
    let base = loss.item();
    if !base.is_finite() {
        return Err(TensorError::NonFinite {
            context: "grad_check loss".into(),
        });
    }
    loss.backward()?;
    let analytic: Vec<Vec<f64>> = params.iter().map(|(_, p)| p.grad_f64()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut entries = Vec::with_capacity(params.len());
    let mut overall: f64 = 0.0;
    for (pi, (name, p)) in params.iter().enumerate() {
        let n = p.numel();
        let coords: Vec<usize> = if opts.max_coords_per_tensor == 0 || n <= opts.max_coords_per_tensor
        {
            (0..n).collect()
        } else {
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(&mut rng);
            all.truncate(opts.max_coords_per_tensor);
            all.sort_unstable();
            all
        };

        let mut worst = GradCheckEntry {
            name: name.clone(),
            coords_checked: coords.len(),
            max_rel_error: 0.0,
            worst_coord: 0,
            analytic_at_worst: 0.0,
            numeric_at_worst: 0.0,
        };
        for &c in &coords {
            let original = p.data()[c];
            p.data_mut()[c] = original + opts.step;
            let plus = loss_fn()?.item();
            p.data_mut()[c] = original - opts.step;
            let minus = loss_fn()?.item();
            p.data_mut()[c] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(TensorError::NonFinite {
                    context: format!("grad_check perturbation of {name}[{c}]"),
                });
            }
            let numeric = (plus - minus) / (2.0 * opts.step);
            let err = rel_error(analytic[pi][c], numeric);
            if err > worst.max_rel_error {
                worst.max_rel_error = err;
                worst.worst_coord = c;
                worst.analytic_at_worst = analytic[pi][c];
                worst.numeric_at_worst = numeric;
            }
        }
        overall = overall.max(worst.max_rel_error);
        entries.push(worst);
    }

    Ok(GradCheckReport {
        entries,
        max_rel_error: overall,
    })
}
