use crate::label::{LabelMask, NUM_CATEGORIES};
use crate::network::{ForwardOutputs, STAGES};
use crate::tensor::{Real, Tensor};

use super::TrainError;

/// Per-image category weights, broadcast to pixels through the label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassWeights {
    pub weights: [f64; NUM_CATEGORIES],
}

impl ClassWeights {
    pub fn uniform(w: f64) -> Self {
        Self { weights: [w; NUM_CATEGORIES] }
    }

    pub fn get(&self, category: usize) -> f64 {
        self.weights[category]
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self { weights: self.weights.map(|w| w * k) }
    }
}

/// Inverse pixel proportion of every present category, clamped to
/// `[1, w_max]`. Absent categories get 0.
pub fn compute_class_weights(label: &LabelMask, w_max: f64) -> ClassWeights {
    let hist = label.histogram();
    let total = label.len() as f64;
    let weights = hist.map(|count| {
        if count == 0 {
            0.0
        } else {
            (total / count as f64).clamp(1.0, w_max.max(1.0))
        }
    });
    ClassWeights { weights }
}

/// Pixel proportion of every category over the whole image.
pub fn class_proportions(label: &LabelMask) -> [f64; NUM_CATEGORIES] {
    let total = label.len() as f64;
    label.histogram().map(|c| c as f64 / total)
}

/// Weighted squared error against one-hot targets, averaged over the
/// `N·H·W` pixels of the batch. Returns the loss and its gradient.
pub fn weighted_sq_loss<T: Real>(
    pred: &Tensor<T>,
    labels: &[&LabelMask],
    weights: &[ClassWeights],
) -> Result<(f64, Tensor<T>), TrainError> {
    let s = pred.shape();
    if s.c != NUM_CATEGORIES {
        return Err(TrainError::Shape(format!("prediction has {} channels, expected {NUM_CATEGORIES}", s.c)));
    }
    if labels.len() != s.n || weights.len() != s.n {
        return Err(TrainError::Shape(format!(
            "batch of {} predictions with {} labels and {} weight sets",
            s.n,
            labels.len(),
            weights.len()
        )));
    }
    let plane = s.h * s.w;
    let pixels = (s.n * plane) as f64;
    let mut grad = Tensor::zeros(s);
    let mut loss = 0.0f64;
    for (n, (label, w)) in labels.iter().zip(weights).enumerate() {
        if label.dims() != (s.w, s.h) {
            return Err(TrainError::Shape(format!("label is {:?}, prediction plane is {}x{}", label.dims(), s.w, s.h)));
        }
        let p = pred.sample(n);
        let g = grad.sample_mut(n);
        for (i, &cls) in label.as_raw().iter().enumerate() {
            let wi = w.get(cls as usize);
            if wi == 0.0 {
                continue;
            }
            for c in 0..NUM_CATEGORIES {
                let idx = c * plane + i;
                let target = if c == cls as usize { 1.0 } else { 0.0 };
                let diff = p[idx].to_f64() - target;
                loss += wi * diff * diff;
                g[idx] = T::from_f64(2.0 * wi * diff / pixels);
            }
        }
    }
    Ok((loss / pixels, grad))
}

/// Multi-output loss: `total = final + Σ λ_i · pre_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub final_term: f64,
    pub pre_terms: [f64; STAGES],
    pub lambda: [f64; STAGES],
}

impl LossReport {
    /// The total rebuilt from the individual terms.
    pub fn recompose(&self) -> f64 {
        self.final_term + self.lambda.iter().zip(&self.pre_terms).map(|(l, p)| l * p).sum::<f64>()
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.final_term.is_finite() && self.pre_terms.iter().all(|p| p.is_finite())
    }
}

/// Gradients of the total loss with respect to the six heads.
#[derive(Debug, Clone)]
pub struct HeadGrads<T = f32> {
    pub final_output: Tensor<T>,
    pub pre_outputs: Vec<Tensor<T>>,
}

pub fn total_loss<T: Real>(
    outputs: &ForwardOutputs<T>,
    labels: &[&LabelMask],
    weights: &[ClassWeights],
    lambda: &[f64; STAGES],
) -> Result<(LossReport, HeadGrads<T>), TrainError> {
    if outputs.pre_outputs.len() != STAGES {
        return Err(TrainError::Shape(format!("expected {STAGES} pre-outputs, got {}", outputs.pre_outputs.len())));
    }
    let (final_term, g_final) = weighted_sq_loss(&outputs.final_output, labels, weights)?;
    let mut pre_terms = [0.0; STAGES];
    let mut g_pre = Vec::with_capacity(STAGES);
    for (i, pre) in outputs.pre_outputs.iter().enumerate() {
        let (l, g) = weighted_sq_loss(pre, labels, weights)?;
        pre_terms[i] = l;
        g_pre.push(g.scale(T::from_f64(lambda[i])));
    }
    let mut report = LossReport { total: 0.0, final_term, pre_terms, lambda: *lambda };
    report.total = report.recompose();
    Ok((report, HeadGrads { final_output: g_final, pre_outputs: g_pre }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::Category;
    use crate::tensor::Shape;

    #[test]
    fn all_background_weight_is_one() {
        let w = compute_class_weights(&LabelMask::new(8, 8), 1000.0);
        assert_eq!(w.weights[0], 1.0);
        assert!(w.weights[1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn half_half_weights_are_two() {
        let mut m = LabelMask::new(4, 4);
        for y in 0..2 {
            for x in 0..4 {
                m.set(x, y, Category::Parking);
            }
        }
        let w = compute_class_weights(&m, 1000.0);
        assert_eq!(w.weights[0], 2.0);
        assert_eq!(w.weights[1], 2.0);
    }

    #[test]
    fn clamp_applies_to_rare_category() {
        let mut m = LabelMask::new(100, 100);
        m.set(0, 0, Category::YellowDashed);
        let w = compute_class_weights(&m, 1000.0);
        assert_eq!(w.weights[5], 1000.0);
    }

    #[test]
    fn single_pixel_example() {
        let mut pred = Tensor::<f64>::zeros(Shape::new(1, 6, 1, 1));
        pred.data_mut()[0] = 1.0;
        let mut label = LabelMask::new(1, 1);
        label.set(0, 0, Category::Parking);
        let (loss, _) = weighted_sq_loss(&pred, &[&label], &[ClassWeights::uniform(1.0)]).unwrap();
        assert_eq!(loss, 2.0);
    }

    #[test]
    fn exact_target_has_zero_loss() {
        let mut label = LabelMask::new(3, 2);
        label.set(1, 1, Category::WhiteSolid);
        let mut pred = Tensor::<f32>::zeros(Shape::new(1, 6, 2, 3));
        for y in 0..2 {
            for x in 0..3 {
                pred.set(0, label.get(x, y) as usize, y, x, 1.0);
            }
        }
        let w = compute_class_weights(&label, 1000.0);
        let (loss, grad) = weighted_sq_loss(&pred, &[&label], &[w]).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grad.max_abs(), 0.0);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let pred = Tensor::<f32>::zeros(Shape::new(1, 6, 2, 2));
        let label = LabelMask::new(3, 2);
        assert!(weighted_sq_loss(&pred, &[&label], &[ClassWeights::uniform(1.0)]).is_err());
        let pred5 = Tensor::<f32>::zeros(Shape::new(1, 5, 2, 3));
        assert!(weighted_sq_loss(&pred5, &[&label], &[ClassWeights::uniform(1.0)]).is_err());
    }
}
