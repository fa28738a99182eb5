use std::collections::HashMap;

use crate::label::LabelMask;
use crate::tensor::{
    concat_channels, concat_channels_backward, conv2d_backward, conv2d_forward, maxpool2x2_backward,
    maxpool2x2_forward, relu_backward, relu_forward, sum_elementwise, upsample2x_backward, upsample2x_forward,
    upsample_to_backward, upsample_to_forward, PoolIndices, Real, Shape, Tensor,
};

use super::config::{Combine, NetworkConfig, STAGES, VH_DEPTH};
use super::params::{layout, vh_path_layer, Gradients, LayerKind, ModelParams};
use super::NetworkError;

/// Network heads plus the encoder features the decoder fuses with.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutputs<T = f32> {
    /// `(N, 6, H, W)` scores from the convolution over all pre-outputs.
    pub final_output: Tensor<T>,
    /// Five full-resolution `(N, 6, H, W)` pre-outputs, coarsest first.
    pub pre_outputs: Vec<Tensor<T>>,
    /// Encoder stage outputs before pooling, finest first.
    pub encoder_feats: Vec<Tensor<T>>,
}

struct EncoderStage<T> {
    conv1: Tensor<T>,
    conv2: Tensor<T>,
    pool: PoolIndices,
}

struct VhTrace<T> {
    /// `[input, layer1, ..., layer5]` per path.
    v: Vec<Tensor<T>>,
    h: Vec<Tensor<T>>,
    c: Option<Vec<Tensor<T>>>,
    cat: Option<Tensor<T>>,
}

/// Intermediate activations kept for the backward pass.
pub struct Trace<T = f32> {
    /// `levels[0]` is the input, `levels[s]` the pooled output of stage `s`.
    levels: Vec<Tensor<T>>,
    encoder: Vec<EncoderStage<T>>,
    vh: Option<VhTrace<T>>,
    /// `decoder[0]` is the decoder input, `decoder[k]` the fused map of step `k`.
    decoder: Vec<Tensor<T>>,
    pre_cat: Tensor<T>,
}

/// Resolved layer geometry for one configuration.
#[derive(Debug, Clone)]
pub struct Network {
    config: NetworkConfig,
    layers: HashMap<String, LayerKind>,
}

impl Network {
    pub fn new(config: &NetworkConfig) -> Result<Self, NetworkError> {
        let layers = layout(config)?.into_iter().map(|l| (l.name, l.kind)).collect();
        Ok(Self { config: config.clone(), layers })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    fn conv<T: Real>(&self, params: &ModelParams<T>, name: &str, x: &Tensor<T>) -> Result<Tensor<T>, NetworkError> {
        match self.layers.get(name) {
            Some(LayerKind::Conv(spec)) => Ok(conv2d_forward(x, params.weight(name)?, params.bias(name)?, spec)?),
            _ => Err(NetworkError::MissingParam(name.to_string())),
        }
    }

    fn conv_relu<T: Real>(&self, params: &ModelParams<T>, name: &str, x: &Tensor<T>) -> Result<Tensor<T>, NetworkError> {
        Ok(relu_forward(&self.conv(params, name, x)?))
    }

    fn up<T: Real>(&self, params: &ModelParams<T>, name: &str, x: &Tensor<T>, target: Option<(usize, usize)>) -> Result<Tensor<T>, NetworkError> {
        let spec = match self.layers.get(name) {
            Some(LayerKind::Upsample(s)) => s,
            _ => return Err(NetworkError::MissingParam(name.to_string())),
        };
        let (w, b) = (params.weight(name)?, params.bias(name)?);
        Ok(match target {
            Some(t) => upsample_to_forward(x, w, b, spec, t)?,
            None => upsample2x_forward(x, w, b, spec)?,
        })
    }

    /// Adds the weight and bias gradients of `name` and returns the input gradient.
    fn conv_back<T: Real>(
        &self,
        params: &ModelParams<T>,
        grads: &mut Gradients<T>,
        name: &str,
        x: &Tensor<T>,
        g: &Tensor<T>,
    ) -> Result<Tensor<T>, NetworkError> {
        let spec = match self.layers.get(name) {
            Some(LayerKind::Conv(s)) => s,
            _ => return Err(NetworkError::MissingParam(name.to_string())),
        };
        let r = conv2d_backward(x, params.weight(name)?, spec, g)?;
        grads.insert(format!("{name}.weight"), r.weight);
        grads.insert(format!("{name}.bias"), r.bias);
        Ok(r.input)
    }

    fn conv_relu_back<T: Real>(
        &self,
        params: &ModelParams<T>,
        grads: &mut Gradients<T>,
        name: &str,
        x: &Tensor<T>,
        y: &Tensor<T>,
        g: &Tensor<T>,
    ) -> Result<Tensor<T>, NetworkError> {
        let g = relu_backward(y, g)?;
        self.conv_back(params, grads, name, x, &g)
    }

    fn up_back<T: Real>(
        &self,
        params: &ModelParams<T>,
        grads: &mut Gradients<T>,
        name: &str,
        x: &Tensor<T>,
        target: Option<(usize, usize)>,
        g: &Tensor<T>,
    ) -> Result<Tensor<T>, NetworkError> {
        let spec = match self.layers.get(name) {
            Some(LayerKind::Upsample(s)) => s,
            _ => return Err(NetworkError::MissingParam(name.to_string())),
        };
        let w = params.weight(name)?;
        let r = match target {
            Some(t) => upsample_to_backward(x, w, spec, t, g)?,
            None => upsample2x_backward(x, w, spec, g)?,
        };
        grads.insert(format!("{name}.weight"), r.weight);
        grads.insert(format!("{name}.bias"), r.bias);
        Ok(r.input)
    }

    fn path<T: Real>(&self, params: &ModelParams<T>, tag: char, x: &Tensor<T>) -> Result<Vec<Tensor<T>>, NetworkError> {
        let mut acts = vec![x.clone()];
        for l in 0..VH_DEPTH {
            let next = self.conv_relu(params, &vh_path_layer(tag, l), &acts[l])?;
            acts.push(next);
        }
        Ok(acts)
    }

    /// Output of one VH path (`'v'`, `'h'`, or the conv+ path `'c'`).
    pub fn vh_path<T: Real>(&self, params: &ModelParams<T>, tag: char, x: &Tensor<T>) -> Result<Tensor<T>, NetworkError> {
        Ok(self.path(params, tag, x)?.pop().expect("path has layers"))
    }

    fn vh_traced<T: Real>(&self, params: &ModelParams<T>, x: &Tensor<T>) -> Result<(Tensor<T>, VhTrace<T>), NetworkError> {
        let v = self.path(params, 'v', x)?;
        let h = self.path(params, 'h', x)?;
        let (out, c, cat) = match self.config.combine {
            Combine::Sum => (sum_elementwise(&[&v[VH_DEPTH], &h[VH_DEPTH]])?, None, None),
            Combine::ConvPlus => {
                let c = self.path(params, 'c', x)?;
                (sum_elementwise(&[&v[VH_DEPTH], &h[VH_DEPTH], &c[VH_DEPTH]])?, Some(c), None)
            }
            Combine::Concat => {
                let cat = concat_channels(&[&v[VH_DEPTH], &h[VH_DEPTH]])?;
                (self.conv(params, "vh.reduce", &cat)?, None, Some(cat))
            }
        };
        Ok((out, VhTrace { v, h, c, cat }))
    }

    /// The VH-stage applied to the deepest (pooled) encoder output.
    pub fn vh_stage<T: Real>(&self, params: &ModelParams<T>, x: &Tensor<T>) -> Result<Tensor<T>, NetworkError> {
        if !self.config.vh_enabled {
            return Err(NetworkError::Config("VH-stage is disabled in this configuration".into()));
        }
        Ok(self.vh_traced(params, x)?.0)
    }

    pub fn forward<T: Real>(&self, params: &ModelParams<T>, x: &Tensor<T>) -> Result<ForwardOutputs<T>, NetworkError> {
        Ok(self.forward_traced(params, x)?.0)
    }

    pub fn forward_traced<T: Real>(&self, params: &ModelParams<T>, x: &Tensor<T>) -> Result<(ForwardOutputs<T>, Trace<T>), NetworkError> {
        let s = x.shape();
        if s.c != 3 {
            return Err(NetworkError::Input(format!("expected 3 input channels, got {s}")));
        }
        self.config.check_input((s.h, s.w)).map_err(|e| NetworkError::Input(e.to_string()))?;
        let full = (s.h, s.w);

        let mut levels = vec![x.clone()];
        let mut encoder = Vec::with_capacity(STAGES);
        for st in 0..STAGES {
            let conv1 = self.conv_relu(params, &format!("enc{}.conv1", st + 1), &levels[st])?;
            let conv2 = self.conv_relu(params, &format!("enc{}.conv2", st + 1), &conv1)?;
            let (pooled, pool) = maxpool2x2_forward(&conv2)?;
            levels.push(pooled);
            encoder.push(EncoderStage { conv1, conv2, pool });
        }

        let (d0, vh) = if self.config.vh_enabled {
            let (out, tr) = self.vh_traced(params, &levels[STAGES])?;
            (out, Some(tr))
        } else {
            (levels[STAGES].clone(), None)
        };

        let mut decoder = vec![d0];
        let mut pre_outputs = Vec::with_capacity(STAGES);
        for k in 1..=STAGES {
            let up = self.up(params, &format!("dec{k}.up"), &decoder[k - 1], None)?;
            let skip = self.conv(params, &format!("dec{k}.skip"), &encoder[STAGES - k].conv2)?;
            let fused = relu_forward(&sum_elementwise(&[&up, &skip])?);
            pre_outputs.push(self.up(params, &format!("pre{k}"), &fused, Some(full))?);
            decoder.push(fused);
        }
        let refs: Vec<&Tensor<T>> = pre_outputs.iter().collect();
        let pre_cat = concat_channels(&refs)?;
        let final_output = self.conv(params, "final", &pre_cat)?;

        let outputs = ForwardOutputs {
            final_output,
            pre_outputs,
            encoder_feats: encoder.iter().map(|e| e.conv2.clone()).collect(),
        };
        Ok((outputs, Trace { levels, encoder, vh, decoder, pre_cat }))
    }

    /// Back-propagates head gradients (`final` and the five pre-outputs)
    /// through the whole network.
    pub fn backward<T: Real>(
        &self,
        params: &ModelParams<T>,
        trace: &Trace<T>,
        grad_final: &Tensor<T>,
        grad_pre: &[Tensor<T>],
    ) -> Result<Gradients<T>, NetworkError> {
        if grad_pre.len() != STAGES {
            return Err(NetworkError::Input(format!("expected {STAGES} pre-output gradients, got {}", grad_pre.len())));
        }
        let mut grads = Gradients::zeros_like(params);
        let x_shape = trace.levels[0].shape();
        let full = (x_shape.h, x_shape.w);

        let g_cat = self.conv_back(params, &mut grads, "final", &trace.pre_cat, grad_final)?;
        let classes = self.config.num_classes;
        let g_heads = concat_channels_backward(&[classes; STAGES], &g_cat)?;

        let mut g_skip: Vec<Option<Tensor<T>>> = (0..STAGES).map(|_| None).collect();
        let mut g_d: Option<Tensor<T>> = None;
        for k in (1..=STAGES).rev() {
            let g_pre = g_heads[k - 1].add_scaled(&grad_pre[k - 1], T::one())?;
            let d_k = &trace.decoder[k];
            let mut g_fused = self.up_back(params, &mut grads, &format!("pre{k}"), d_k, Some(full), &g_pre)?;
            if let Some(g) = g_d.take() {
                g_fused = g_fused.add_scaled(&g, T::one())?;
            }
            let g_sum = relu_backward(d_k, &g_fused)?;
            let enc = STAGES - k;
            g_skip[enc] = Some(self.conv_back(params, &mut grads, &format!("dec{k}.skip"), &trace.encoder[enc].conv2, &g_sum)?);
            g_d = Some(self.up_back(params, &mut grads, &format!("dec{k}.up"), &trace.decoder[k - 1], None, &g_sum)?);
        }
        let g_d0 = g_d.expect("decoder has steps");

        let mut g_level = match &trace.vh {
            Some(vh) => self.vh_backward(params, &mut grads, vh, &g_d0)?,
            None => g_d0,
        };

        for st in (0..STAGES).rev() {
            let stage = &trace.encoder[st];
            let mut g = maxpool2x2_backward(&stage.pool, &g_level)?;
            if let Some(gs) = g_skip[st].take() {
                g = g.add_scaled(&gs, T::one())?;
            }
            let g = self.conv_relu_back(params, &mut grads, &format!("enc{}.conv2", st + 1), &stage.conv1, &stage.conv2, &g)?;
            g_level = self.conv_relu_back(params, &mut grads, &format!("enc{}.conv1", st + 1), &trace.levels[st], &stage.conv1, &g)?;
        }
        Ok(grads)
    }

    fn path_back<T: Real>(
        &self,
        params: &ModelParams<T>,
        grads: &mut Gradients<T>,
        tag: char,
        acts: &[Tensor<T>],
        g: &Tensor<T>,
    ) -> Result<Tensor<T>, NetworkError> {
        let mut g = g.clone();
        for l in (0..VH_DEPTH).rev() {
            g = self.conv_relu_back(params, grads, &vh_path_layer(tag, l), &acts[l], &acts[l + 1], &g)?;
        }
        Ok(g)
    }

    fn vh_backward<T: Real>(
        &self,
        params: &ModelParams<T>,
        grads: &mut Gradients<T>,
        vh: &VhTrace<T>,
        g_out: &Tensor<T>,
    ) -> Result<Tensor<T>, NetworkError> {
        let (g_v, g_h) = match (&vh.cat, self.config.combine) {
            (Some(cat), Combine::Concat) => {
                let g_cat = self.conv_back(params, grads, "vh.reduce", cat, g_out)?;
                let width = vh.v[VH_DEPTH].shape().c;
                let mut parts = concat_channels_backward(&[width, width], &g_cat)?;
                let g_h = parts.pop().expect("two parts");
                (parts.pop().expect("two parts"), g_h)
            }
            _ => (g_out.clone(), g_out.clone()),
        };
        let mut g_in = self.path_back(params, grads, 'v', &vh.v, &g_v)?;
        g_in = g_in.add_scaled(&self.path_back(params, grads, 'h', &vh.h, &g_h)?, T::one())?;
        if let Some(c) = &vh.c {
            g_in = g_in.add_scaled(&self.path_back(params, grads, 'c', c, g_out)?, T::one())?;
        }
        Ok(g_in)
    }
}

pub fn forward<T: Real>(params: &ModelParams<T>, config: &NetworkConfig, x: &Tensor<T>) -> Result<ForwardOutputs<T>, NetworkError> {
    Network::new(config)?.forward(params, x)
}

pub fn vh_stage<T: Real>(x: &Tensor<T>, params: &ModelParams<T>, config: &NetworkConfig) -> Result<Tensor<T>, NetworkError> {
    Network::new(config)?.vh_stage(params, x)
}

/// Per-pixel argmax of `scores` (`N` masks); ties go to the lower class.
pub fn argmax_masks<T: Real>(scores: &Tensor<T>) -> Vec<LabelMask> {
    let s = scores.shape();
    (0..s.n)
        .map(|n| {
            let data = scores.sample(n);
            let plane = s.plane();
            let mut raw = vec![0u8; plane];
            for (p, out) in raw.iter_mut().enumerate() {
                let mut best = 0;
                let mut best_v = data[p];
                for c in 1..s.c {
                    let v = data[c * plane + p];
                    if v > best_v {
                        best = c;
                        best_v = v;
                    }
                }
                *out = best as u8;
            }
            LabelMask::from_raw(s.w, s.h, raw).expect("argmax within class range")
        })
        .collect()
}

/// Class map of the final head for every sample in the batch.
pub fn predict<T: Real>(outputs: &ForwardOutputs<T>) -> Vec<LabelMask> {
    argmax_masks(&outputs.final_output)
}

/// Stacks RGB `u8` images into a `(N, 3, H, W)` tensor scaled to `[0, 1]`.
pub fn images_to_tensor<T: Real>(images: &[&image::RgbImage]) -> Result<Tensor<T>, NetworkError> {
    let first = images.first().ok_or_else(|| NetworkError::Input("empty batch".into()))?;
    let (w, h) = (first.width() as usize, first.height() as usize);
    let shape = Shape::new(images.len(), 3, h, w);
    let mut data = vec![T::zero(); shape.len()];
    let scale = T::from_f64(1.0 / 255.0);
    for (n, img) in images.iter().enumerate() {
        if (img.width() as usize, img.height() as usize) != (w, h) {
            return Err(NetworkError::Input("images in a batch differ in size".into()));
        }
        let base = n * shape.sample_len();
        for (i, px) in img.pixels().enumerate() {
            for c in 0..3 {
                data[base + c * h * w + i] = T::from_f64(px[c] as f64) * scale;
            }
        }
    }
    Ok(Tensor::from_vec(shape, data)?)
}
