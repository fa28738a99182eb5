use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::label::{LabelMask, NUM_CATEGORIES};
use crate::network::{ForwardOutputs, ModelParams, Network, NetworkConfig, STAGES};
use crate::tensor::{
    concat_channels, concat_channels_backward, conv2d_backward, conv2d_forward, grad_check, grad_check_scalar,
    maxpool2x2_backward, maxpool2x2_forward, relu_backward, relu_forward, sample_coords, sum_elementwise,
    sum_elementwise_backward, upsample2x_backward, upsample2x_forward, upsample_to_backward, upsample_to_forward,
    ConvSpec, GradCheckReport, Shape, Tensor, TensorError, UpsampleSpec,
};

use super::loss::{compute_class_weights, total_loss, weighted_sq_loss, ClassWeights};
use super::TrainError;

/// Relative tolerance for single layers and the loss.
pub const LAYER_TOLERANCE: f64 = 1e-3;
/// Relative tolerance for the loss differentiated through the whole network.
pub const NETWORK_TOLERANCE: f64 = 1e-2;
/// Parameters sampled for the through-network check.
pub const NETWORK_SAMPLES: usize = 100;

const EPS: f64 = 1e-6;
/// Central differences are exact on a quadratic, so the loss checks can
/// use a step large enough to keep rounding out of the comparison.
const QUADRATIC_EPS: f64 = 1e-2;

#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub name: &'static str,
    pub report: GradCheckReport,
}

impl GradCheckEntry {
    pub fn passed(&self) -> bool {
        self.report.passed()
    }
}

fn randn(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::randn(shape, 1.0, rng)
}

/// Values bounded away from zero so `ReLU` and max-pool stay differentiable
/// under the finite-difference step.
fn randn_away_from_kinks(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        let m: f64 = rng.random_range(0.05..1.5);
        *v = if rng.random_bool(0.5) { m } else { -m };
    }
    t
}

/// Like [`randn_away_from_kinks`] but every 2×2 window has a distinct
/// maximum separated from the runner-up.
fn pool_input(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let mut t = Tensor::zeros(shape);
    let mut ranks: Vec<f64> = (0..t.len()).map(|i| i as f64 * 0.01).collect();
    for i in (1..ranks.len()).rev() {
        ranks.swap(i, rng.random_range(0..=i));
    }
    t.data_mut().copy_from_slice(&ranks);
    t
}

fn random_label(w: usize, h: usize, rng: &mut ChaCha8Rng) -> LabelMask {
    let data = (0..w * h).map(|_| rng.random_range(0..NUM_CATEGORIES as u8)).collect();
    LabelMask::from_raw(w, h, data).expect("values in range")
}

fn conv_entry(name: &'static str, kh: usize, kw: usize, rng: &mut ChaCha8Rng, seed: u64) -> Result<GradCheckEntry, TensorError> {
    let spec = ConvSpec::same(4, 5, kh, kw)?;
    let inputs = [
        randn(Shape::new(2, 4, 12, 12), rng),
        randn(spec.weight_shape(), rng),
        randn(spec.bias_shape(), rng),
    ];
    let report = grad_check(
        |xs| conv2d_forward(&xs[0], &xs[1], &xs[2], &spec),
        |xs, g| {
            let gr = conv2d_backward(&xs[0], &xs[1], &spec, g)?;
            Ok(vec![gr.input, gr.weight, gr.bias])
        },
        &inputs,
        EPS,
        LAYER_TOLERANCE,
        seed,
    )?;
    Ok(GradCheckEntry { name, report })
}

/// Finite-difference checks of every layer kind, the weighted loss, the
/// six-term loss, and the loss differentiated through a tiny network.
pub fn gradient_suite(seed: u64) -> Result<Vec<GradCheckEntry>, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![
        conv_entry("conv 3x3", 3, 3, &mut rng, seed)?,
        conv_entry("conv 9x1", 9, 1, &mut rng, seed)?,
        conv_entry("conv 1x9", 1, 9, &mut rng, seed)?,
    ];

    let x = randn_away_from_kinks(Shape::new(4, 8, 16, 16), &mut rng);
    let report = grad_check(
        |xs| Ok(relu_forward(&xs[0])),
        |xs, g| Ok(vec![relu_backward(&xs[0], g)?]),
        &[x],
        EPS,
        LAYER_TOLERANCE,
        seed,
    )?;
    out.push(GradCheckEntry { name: "relu", report });

    let x = pool_input(Shape::new(4, 8, 16, 16), &mut rng);
    let report = grad_check(
        |xs| Ok(maxpool2x2_forward(&xs[0])?.0),
        |xs, g| {
            let (_, idx) = maxpool2x2_forward(&xs[0])?;
            Ok(vec![maxpool2x2_backward(&idx, g)?])
        },
        &[x],
        EPS,
        LAYER_TOLERANCE,
        seed,
    )?;
    out.push(GradCheckEntry { name: "maxpool 2x2", report });

    let up = UpsampleSpec::double(4, 3);
    let inputs = [randn(Shape::new(2, 4, 8, 8), &mut rng), randn(up.weight_shape(), &mut rng), randn(up.bias_shape(), &mut rng)];
    let report = grad_check(
        |xs| upsample2x_forward(&xs[0], &xs[1], &xs[2], &up),
        |xs, g| {
            let gr = upsample2x_backward(&xs[0], &xs[1], &up, g)?;
            Ok(vec![gr.input, gr.weight, gr.bias])
        },
        &inputs,
        EPS,
        LAYER_TOLERANCE,
        seed,
    )?;
    out.push(GradCheckEntry { name: "upsample 2x", report });

    let to = UpsampleSpec::by_scale(4, 3, 4);
    let target = (16, 16);
    let inputs = [randn(Shape::new(2, 4, 4, 4), &mut rng), randn(to.weight_shape(), &mut rng), randn(to.bias_shape(), &mut rng)];
    let report = grad_check(
        |xs| upsample_to_forward(&xs[0], &xs[1], &xs[2], &to, target),
        |xs, g| {
            let gr = upsample_to_backward(&xs[0], &xs[1], &to, target, g)?;
            Ok(vec![gr.input, gr.weight, gr.bias])
        },
        &inputs,
        EPS,
        LAYER_TOLERANCE,
        seed,
    )?;
    out.push(GradCheckEntry { name: "upsample to size", report });

    let s = Shape::new(4, 8, 16, 16);
    let inputs = [randn(s, &mut rng), randn(s, &mut rng), randn(s, &mut rng)];
    let report = grad_check(
        |xs| sum_elementwise(&[&xs[0], &xs[1], &xs[2]]),
        |_, g| Ok(sum_elementwise_backward(3, g)),
        &inputs,
        EPS,
        LAYER_TOLERANCE,
        seed,
    )?;
    out.push(GradCheckEntry { name: "sum", report });

    let inputs = [randn(Shape::new(4, 3, 16, 16), &mut rng), randn(Shape::new(4, 5, 16, 16), &mut rng)];
    let report = grad_check(
        |xs| concat_channels(&[&xs[0], &xs[1]]),
        |_, g| concat_channels_backward(&[3, 5], g),
        &inputs,
        EPS,
        LAYER_TOLERANCE,
        seed,
    )?;
    out.push(GradCheckEntry { name: "concat", report });

    out.push(GradCheckEntry { name: "weighted loss", report: loss_check(&mut rng)? });
    out.push(GradCheckEntry { name: "six-term loss", report: total_loss_check(&mut rng)? });
    out.push(GradCheckEntry { name: "loss through network", report: network_check(&mut rng, seed)? });
    Ok(out)
}

fn loss_check(rng: &mut ChaCha8Rng) -> Result<GradCheckReport, TrainError> {
    let (n, w, h) = (2, 16, 16);
    let labels: Vec<LabelMask> = (0..n).map(|_| random_label(w, h, rng)).collect();
    let refs: Vec<&LabelMask> = labels.iter().collect();
    let weights: Vec<ClassWeights> = labels.iter().map(|l| compute_class_weights(l, 1000.0)).collect();
    let pred = randn(Shape::new(n, NUM_CATEGORIES, h, w), rng);
    let (_, grad) = weighted_sq_loss(&pred, &refs, &weights)?;
    let report = grad_check_scalar(
        |xs| Ok(weighted_sq_loss(&xs[0], &refs, &weights).map_err(|e| TensorError::Spec(e.to_string()))?.0),
        &[grad],
        &[pred],
        None,
        QUADRATIC_EPS,
        LAYER_TOLERANCE,
    )?;
    Ok(report)
}

fn total_loss_check(rng: &mut ChaCha8Rng) -> Result<GradCheckReport, TrainError> {
    let (w, h) = (8, 8);
    let label = random_label(w, h, rng);
    let weights = [compute_class_weights(&label, 1000.0)];
    let lambda: [f64; STAGES] = std::array::from_fn(|_| rng.random_range(0.1..2.0));
    let shape = Shape::new(1, NUM_CATEGORIES, h, w);
    let heads: Vec<Tensor<f64>> = (0..=STAGES).map(|_| randn(shape, rng)).collect();
    let as_outputs = |xs: &[Tensor<f64>]| ForwardOutputs {
        final_output: xs[0].clone(),
        pre_outputs: xs[1..].to_vec(),
        encoder_feats: Vec::new(),
    };
    let (_, g) = total_loss(&as_outputs(&heads), &[&label], &weights, &lambda)?;
    let mut analytic = vec![g.final_output];
    analytic.extend(g.pre_outputs);
    let report = grad_check_scalar(
        |xs| {
            let (r, _) = total_loss(&as_outputs(xs), &[&label], &weights, &lambda)
                .map_err(|e| TensorError::Spec(e.to_string()))?;
            Ok(r.total)
        },
        &analytic,
        &heads,
        None,
        QUADRATIC_EPS,
        LAYER_TOLERANCE,
    )?;
    Ok(report)
}

/// The six-term loss of a 32×32 network with width-2 stages, checked on
/// randomly sampled parameters.
fn network_check(rng: &mut ChaCha8Rng, seed: u64) -> Result<GradCheckReport, TrainError> {
    let config = NetworkConfig { encoder_channels: [2; STAGES], input_size: (32, 32), ..NetworkConfig::default() };
    let net = Network::new(&config)?;
    let params: ModelParams<f64> = ModelParams::<f32>::build(&config, seed)?.cast();
    let x = Tensor::<f64>::uniform(Shape::new(1, 3, 32, 32), 0.0, 1.0, rng);
    let label = random_label(32, 32, rng);
    let weights = [compute_class_weights(&label, 1000.0)];
    let lambda = [1.0; STAGES];

    let (outputs, trace) = net.forward_traced(&params, &x)?;
    let (_, heads) = total_loss(&outputs, &[&label], &weights, &lambda)?;
    let grads = net.backward(&params, &trace, &heads.final_output, &heads.pre_outputs)?;

    let names: Vec<String> = params.names().map(str::to_owned).collect();
    let inputs: Vec<Tensor<f64>> = names.iter().map(|n| params.get(n).cloned()).collect::<Result<_, _>>()?;
    let analytic: Vec<Tensor<f64>> = names.iter().map(|n| grads.get(n).cloned()).collect::<Result<_, _>>()?;
    let sizes: Vec<usize> = inputs.iter().map(Tensor::len).collect();
    let coords = sample_coords(&sizes, NETWORK_SAMPLES, seed);

    let mut work = params.clone();
    let report = grad_check_scalar(
        |xs| {
            for (name, t) in names.iter().zip(xs) {
                work.insert(name.clone(), t.clone());
            }
            let out = net.forward(&work, &x).map_err(|e| TensorError::Spec(e.to_string()))?;
            let (r, _) = total_loss(&out, &[&label], &weights, &lambda).map_err(|e| TensorError::Spec(e.to_string()))?;
            Ok(r.total)
        },
        &analytic,
        &inputs,
        Some(&coords),
        1e-5,
        NETWORK_TOLERANCE,
    )?;
    Ok(report)
}
