use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Result, Tensor, TensorError};

/// Gradients whose magnitudes both fall below this are compared absolutely.
const ABS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// `(input, element, analytic, numeric)` at the worst coordinate.
    pub worst: Option<(usize, usize, f64, f64)>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_rel_error < self.tolerance
    }

    fn record(&mut self, input: usize, index: usize, analytic: f64, numeric: f64) {
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ABS_FLOOR);
        self.checked += 1;
        if err > self.max_rel_error || self.worst.is_none() {
            self.max_rel_error = self.max_rel_error.max(err);
            self.worst = Some((input, index, analytic, numeric));
        }
    }
}

/// Compares the analytic backward pass of a layer against central finite
/// differences of `Σ r ⊙ forward(inputs)` for a seeded random projection `r`.
///
/// Every element of every input is perturbed.
pub fn grad_check<F, B>(forward: F, backward: B, inputs: &[Tensor<f64>], eps: f64, tol: f64, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
    B: Fn(&[Tensor<f64>], &Tensor<f64>) -> Result<Vec<Tensor<f64>>>,
{
    let out = forward(inputs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let proj = Tensor::<f64>::randn(out.shape(), 1.0, &mut rng);
    let analytic = backward(inputs, &proj)?;
    let objective = |xs: &[Tensor<f64>]| -> Result<f64> {
        let y = forward(xs)?;
        Ok(y.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum())
    };
    grad_check_scalar(objective, &analytic, inputs, None, eps, tol)
}

/// Finite-difference check of a scalar function.
///
/// `coords` restricts the check to `(input, element)` pairs; `None` checks
/// everything.
pub fn grad_check_scalar<F>(
    mut f: F,
    analytic: &[Tensor<f64>],
    inputs: &[Tensor<f64>],
    coords: Option<&[(usize, usize)]>,
    eps: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&[Tensor<f64>]) -> Result<f64>,
{
    if analytic.len() != inputs.len() {
        return Err(TensorError::Shape {
            op: "grad_check",
            detail: format!("{} gradients for {} inputs", analytic.len(), inputs.len()),
        });
    }
    for (g, x) in analytic.iter().zip(inputs) {
        if g.shape() != x.shape() {
            return Err(TensorError::Shape {
                op: "grad_check",
                detail: format!("gradient {} for input {}", g.shape(), x.shape()),
            });
        }
    }
    let all: Vec<(usize, usize)>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = inputs.iter().enumerate().flat_map(|(i, x)| (0..x.len()).map(move |j| (i, j))).collect();
            &all
        }
    };
    let mut report = GradCheckReport { checked: 0, max_rel_error: 0.0, worst: None, tolerance: tol };
    let mut work = inputs.to_vec();
    for &(i, j) in coords {
        let x0 = work[i].data()[j];
        work[i].data_mut()[j] = x0 + eps;
        let plus = f(&work)?;
        work[i].data_mut()[j] = x0 - eps;
        let minus = f(&work)?;
        work[i].data_mut()[j] = x0;
        let numeric = (plus - minus) / (2.0 * eps);
        report.record(i, j, analytic[i].data()[j], numeric);
    }
    Ok(report)
}

/// Draws `count` distinct `(input, element)` coordinates uniformly over all
/// elements of `sizes`.
pub fn sample_coords(sizes: &[usize], count: usize, seed: u64) -> Vec<(usize, usize)> {
    let total: usize = sizes.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<usize> = sample(&mut rng, total, count.min(total)).into_vec();
    picks.sort_unstable();
    picks
        .into_iter()
        .map(|mut flat| {
            let mut input = 0;
            while flat >= sizes[input] {
                flat -= sizes[input];
                input += 1;
            }
            (input, flat)
        })
        .collect()
}
