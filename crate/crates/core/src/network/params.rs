use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::kv::KvDoc;
use crate::tensor::{read_tensors, write_tensors, ConvSpec, Real, Shape, Tensor, UpsampleSpec};

use super::config::{Combine, NetworkConfig, STAGES, VH_DEPTH};
use super::NetworkError;

/// A learned layer of the network.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Conv(ConvSpec),
    Upsample(UpsampleSpec),
}

impl LayerKind {
    fn shapes(&self) -> (Shape, Shape) {
        match self {
            LayerKind::Conv(s) => (s.weight_shape(), s.bias_shape()),
            LayerKind::Upsample(s) => (s.weight_shape(), s.bias_shape()),
        }
    }

    fn fan_in(&self) -> usize {
        match self {
            LayerKind::Conv(s) => s.fan_in(),
            LayerKind::Upsample(s) => s.fan_in(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerDef {
    pub name: String,
    pub kind: LayerKind,
}

pub(crate) fn vh_path_layer(path: char, l: usize) -> String {
    format!("vh.{path}{}", l + 1)
}

/// Every learned layer for `config`, in forward order.
pub fn layout(config: &NetworkConfig) -> Result<Vec<LayerDef>, NetworkError> {
    config.validate()?;
    let ch = config.encoder_channels;
    let classes = config.num_classes;
    let mut layers = Vec::new();
    let mut push = |name: String, kind: LayerKind| layers.push(LayerDef { name, kind });
    let mut cin = 3;
    for (s, &c) in ch.iter().enumerate() {
        push(format!("enc{}.conv1", s + 1), LayerKind::Conv(ConvSpec::same(cin, c, 3, 3)?));
        push(format!("enc{}.conv2", s + 1), LayerKind::Conv(ConvSpec::same(c, c, 3, 3)?));
        cin = c;
    }
    let width = ch[STAGES - 1];
    if config.vh_enabled {
        let k = config.vh_kernel;
        for l in 0..VH_DEPTH {
            push(vh_path_layer('v', l), LayerKind::Conv(ConvSpec::same(width, width, k, 1)?));
        }
        for l in 0..VH_DEPTH {
            push(vh_path_layer('h', l), LayerKind::Conv(ConvSpec::same(width, width, 1, k)?));
        }
        match config.combine {
            Combine::Sum => {}
            Combine::Concat => push("vh.reduce".into(), LayerKind::Conv(ConvSpec::same(2 * width, width, 1, 1)?)),
            Combine::ConvPlus => {
                for l in 0..VH_DEPTH {
                    push(vh_path_layer('c', l), LayerKind::Conv(ConvSpec::same(width, width, 3, 3)?));
                }
            }
        }
    }
    let mut prev = width;
    for k in 1..=STAGES {
        let skip_ch = ch[STAGES - k];
        push(format!("dec{k}.up"), LayerKind::Upsample(UpsampleSpec::double(prev, skip_ch)));
        push(format!("dec{k}.skip"), LayerKind::Conv(ConvSpec::same(skip_ch, skip_ch, 1, 1)?));
        push(format!("pre{k}"), LayerKind::Upsample(UpsampleSpec::by_scale(skip_ch, classes, 1 << (STAGES - k))));
        prev = skip_ch;
    }
    push("final".into(), LayerKind::Conv(ConvSpec::same(STAGES * classes, classes, 3, 3)?));
    Ok(layers)
}

/// Named weights and biases, `"<layer>.weight"` / `"<layer>.bias"`, in
/// forward order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = f32> {
    tensors: IndexMap<String, Tensor<T>>,
}

/// Gradients share the parameter container and naming.
pub type Gradients<T = f32> = ModelParams<T>;

const HEAD_GAIN: f64 = 0.1;

fn is_head(layer: &str) -> bool {
    layer == "final" || layer.starts_with("pre")
}

fn name_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a, so every tensor's initial values depend only on (seed, name).
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl<T: Real> ModelParams<T> {
    /// Fan-in scaled Gaussian weights, zero biases. Hidden layers use the
    /// ReLU gain; the linear output heads start near zero.
    pub fn build(config: &NetworkConfig, seed: u64) -> Result<Self, NetworkError> {
        let mut tensors = IndexMap::new();
        for layer in layout(config)? {
            let (ws, bs) = layer.kind.shapes();
            let wname = format!("{}.weight", layer.name);
            let mut rng = ChaCha8Rng::seed_from_u64(name_seed(seed, &wname));
            let gain = if is_head(&layer.name) { HEAD_GAIN * HEAD_GAIN } else { 2.0 };
            let std = (gain / layer.kind.fan_in() as f64).sqrt();
            tensors.insert(wname, Tensor::randn(ws, std, &mut rng));
            tensors.insert(format!("{}.bias", layer.name), Tensor::zeros(bs));
        }
        Ok(Self { tensors })
    }

    pub fn zeros_like(other: &ModelParams<T>) -> Self {
        Self { tensors: other.tensors.iter().map(|(k, t)| (k.clone(), Tensor::zeros(t.shape()))).collect() }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>, NetworkError> {
        self.tensors.get(name).ok_or_else(|| NetworkError::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>, NetworkError> {
        self.tensors.get_mut(name).ok_or_else(|| NetworkError::MissingParam(name.to_string()))
    }

    pub fn weight(&self, layer: &str) -> Result<&Tensor<T>, NetworkError> {
        self.get(&format!("{layer}.weight"))
    }

    pub fn bias(&self, layer: &str) -> Result<&Tensor<T>, NetworkError> {
        self.get(&format!("{layer}.bias"))
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.tensors.insert(name.into(), t);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// `(name, shape)` for every tensor.
    pub fn manifest(&self) -> Vec<(String, Shape)> {
        self.tensors.iter().map(|(k, t)| (k.clone(), t.shape())).collect()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams { tensors: self.tensors.iter().map(|(k, t)| (k.clone(), t.cast())).collect() }
    }

    /// Checks that names and shapes match the layout of `config` exactly.
    pub fn check_against(&self, config: &NetworkConfig) -> Result<(), NetworkError> {
        let want = ModelParams::<T>::expected_manifest(config)?;
        let got = self.manifest();
        if want != got {
            let missing: Vec<_> = want.iter().filter(|w| !got.contains(w)).map(|w| w.0.clone()).collect();
            let extra: Vec<_> = got.iter().filter(|g| !want.contains(g)).map(|g| g.0.clone()).collect();
            return Err(NetworkError::Manifest(format!("missing or reshaped {missing:?}, unexpected {extra:?}")));
        }
        Ok(())
    }

    pub fn expected_manifest(config: &NetworkConfig) -> Result<Vec<(String, Shape)>, NetworkError> {
        let mut out = Vec::new();
        for layer in layout(config)? {
            let (ws, bs) = layer.kind.shapes();
            out.push((format!("{}.weight", layer.name), ws));
            out.push((format!("{}.bias", layer.name), bs));
        }
        Ok(out)
    }
}

impl ModelParams<f32> {
    /// Writes the model file: config lines, tensor manifest, raw `f32` payload.
    pub fn save(&self, path: &Path, config: &NetworkConfig) -> Result<(), NetworkError> {
        let mut out = BufWriter::new(File::create(path)?);
        let mut header = vec!["PSVNET 1".to_string()];
        header.extend(config.to_kv().iter().map(|(k, v)| format!("{k}={v}")));
        let list: Vec<(&str, &Tensor<f32>)> = self.iter().collect();
        write_tensors(&mut out, &header, &list)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(NetworkConfig, Self), NetworkError> {
        let mut input = BufReader::new(File::open(path)?);
        let (header, tensors) = read_tensors(&mut input)?;
        if header.first().map(String::as_str) != Some("PSVNET 1") {
            return Err(NetworkError::Manifest("not a PSVNET 1 model file".into()));
        }
        let doc = KvDoc::parse(&header[1..].join("\n")).map_err(|e| NetworkError::Manifest(e.to_string()))?;
        let config = NetworkConfig::from_kv(&doc)?;
        let params = ModelParams { tensors: tensors.into_iter().collect() };
        params.check_against(&config)?;
        Ok((config, params))
    }
}

impl<T: Real> ModelParams<T> {
    /// Raw bytes of every value, for determinism checks.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.tensors
            .values()
            .flat_map(|t| t.data().iter().flat_map(|v| Real::to_f64(*v).to_le_bytes()))
            .collect()
    }
}
