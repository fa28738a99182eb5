use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataset::Sample;
use crate::label::LabelMask;
use crate::metrics::ConfusionMatrix;
use crate::network::{images_to_tensor, predict, ModelParams, Network, NetworkConfig, STAGES};
use crate::tensor::Real;

use super::loss::{compute_class_weights, total_loss, ClassWeights, LossReport};
use super::TrainError;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub lambda: [f64; STAGES],
    pub w_max: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { batch_size: 10, learning_rate: 1e-4, epochs: 50, lambda: [1.0; STAGES], w_max: 1000.0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if self.lambda.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return bad("lambda entries must be finite and non-negative");
        }
        if !(self.w_max >= 1.0 && self.w_max.is_finite()) {
            return bad("weight ceiling must be at least 1");
        }
        Ok(())
    }
}

/// Where a run writes its artifacts. Both are optional.
#[derive(Debug, Clone, Default)]
pub struct TrainOutputs {
    /// One model file per epoch, `epoch_NNN.psvnet`.
    pub checkpoint_dir: Option<PathBuf>,
    /// One line per epoch.
    pub log_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Sample-weighted mean of the batch reports.
    pub loss: LossReport,
    pub val_miou: Option<f64>,
}

impl EpochLog {
    pub fn to_line(&self) -> String {
        let l = &self.loss;
        let mut s = format!("{}\t{:.6e}", self.epoch, l.final_term);
        for p in l.pre_terms {
            s.push_str(&format!("\t{p:.6e}"));
        }
        match self.val_miou {
            Some(m) => s.push_str(&format!("\t{m:.6}")),
            None => s.push_str("\t-"),
        }
        s
    }
}

/// `p ← p − lr·g`. Gradients are checked before any parameter changes.
pub fn sgd_step<T: Real>(params: &mut ModelParams<T>, grads: &ModelParams<T>, lr: f64) -> Result<(), TrainError> {
    for (name, g) in grads.iter() {
        if !g.is_finite() {
            return Err(TrainError::NonFinite { what: format!("gradient of {name}"), step: 0 });
        }
    }
    let lr = T::from_f64(lr);
    for (name, p) in params.iter_mut() {
        let g = grads.get(name)?;
        for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
            *pv -= lr * *gv;
        }
    }
    Ok(())
}

/// One forward/backward/update on a batch. Returns the batch loss.
pub fn train_step<T: Real>(
    net: &Network,
    params: &mut ModelParams<T>,
    batch: &[&Sample],
    config: &TrainConfig,
) -> Result<LossReport, TrainError> {
    let images: Vec<&image::RgbImage> = batch.iter().map(|s| &s.image).collect();
    let labels: Vec<&LabelMask> = batch.iter().map(|s| &s.label).collect();
    let weights: Vec<ClassWeights> = labels.iter().map(|l| compute_class_weights(l, config.w_max)).collect();
    let x = images_to_tensor::<T>(&images)?;
    let (outputs, trace) = net.forward_traced(params, &x)?;
    let (report, heads) = total_loss(&outputs, &labels, &weights, &config.lambda)?;
    if !report.is_finite() {
        return Err(TrainError::NonFinite { what: "loss".into(), step: 0 });
    }
    let grads = net.backward(params, &trace, &heads.final_output, &heads.pre_outputs)?;
    sgd_step(params, &grads, config.learning_rate)?;
    Ok(report)
}

/// Dataset-level confusion matrix of the final head's argmax.
pub fn evaluate<T: Real>(
    net: &Network,
    params: &ModelParams<T>,
    samples: &[Sample],
    batch_size: usize,
) -> Result<ConfusionMatrix, TrainError> {
    let mut cm = ConfusionMatrix::new();
    for chunk in samples.chunks(batch_size.max(1)) {
        let images: Vec<&image::RgbImage> = chunk.iter().map(|s| &s.image).collect();
        let x = images_to_tensor::<T>(&images)?;
        let outputs = net.forward(params, &x)?;
        for (pred, s) in predict(&outputs).iter().zip(chunk) {
            cm.accumulate(pred, &s.label)?;
        }
    }
    Ok(cm)
}

/// Epoch loop over seeded shuffles of `train_set`. `on_epoch` sees every
/// log entry as it is produced.
#[allow(clippy::too_many_arguments)]
pub fn train<T: Real, R: Rng + ?Sized>(
    params: &mut ModelParams<T>,
    net_config: &NetworkConfig,
    train_set: &[Sample],
    val_set: &[Sample],
    config: &TrainConfig,
    rng: &mut R,
    outputs: &TrainOutputs,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>, TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let net = Network::new(net_config)?;
    params.check_against(net_config)?;
    if let Some(dir) = &outputs.checkpoint_dir {
        fs::create_dir_all(dir)?;
    }
    let mut log = match &outputs.log_path {
        Some(p) => {
            let mut f = BufWriter::new(File::create(p)?);
            writeln!(f, "# epoch\tfinal\tpre1\tpre2\tpre3\tpre4\tpre5\tval_miou")?;
            Some(f)
        }
        None => None,
    };

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut step = 0usize;
    for epoch in 1..=config.epochs {
        order.shuffle(rng);
        let mut acc = LossReport { total: 0.0, final_term: 0.0, pre_terms: [0.0; STAGES], lambda: config.lambda };
        for idx in order.chunks(config.batch_size) {
            let batch: Vec<&Sample> = idx.iter().map(|&i| &train_set[i]).collect();
            let r = train_step(&net, params, &batch, config).map_err(|e| match e {
                TrainError::NonFinite { what, .. } => TrainError::NonFinite { what, step },
                other => other,
            })?;
            step += 1;
            let k = batch.len() as f64;
            acc.total += k * r.total;
            acc.final_term += k * r.final_term;
            for (a, p) in acc.pre_terms.iter_mut().zip(r.pre_terms) {
                *a += k * p;
            }
        }
        let n = train_set.len() as f64;
        acc.total /= n;
        acc.final_term /= n;
        acc.pre_terms.iter_mut().for_each(|p| *p /= n);

        let val_miou = if val_set.is_empty() {
            None
        } else {
            Some(evaluate(&net, params, val_set, config.batch_size)?.mean_iou()?)
        };
        let entry = EpochLog { epoch, loss: acc, val_miou };
        if let Some(f) = log.as_mut() {
            writeln!(f, "{}", entry.to_line())?;
            f.flush()?;
        }
        if let Some(dir) = &outputs.checkpoint_dir {
            params.cast::<f32>().save(&dir.join(format!("epoch_{epoch:03}.psvnet")), net_config)?;
        }
        on_epoch(&entry);
        history.push(entry);
    }
    Ok(history)
}
