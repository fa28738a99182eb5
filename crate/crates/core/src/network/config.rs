use std::fmt;
use std::str::FromStr;

use crate::kv::KvDoc;

use super::NetworkError;

/// How the vertical and horizontal paths of the VH-stage are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Combine {
    /// `V(x) + H(x)`.
    Sum,
    /// 1×1 convolution over `[V(x), H(x)]` back to the path width.
    Concat,
    /// `V(x) + H(x) + C(x)` with a third path of 3×3 convolutions.
    ConvPlus,
}

impl Combine {
    pub const ALL: [Combine; 3] = [Combine::Sum, Combine::Concat, Combine::ConvPlus];
}

impl fmt::Display for Combine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Combine::Sum => "sum",
            Combine::Concat => "concat",
            Combine::ConvPlus => "convplus",
        })
    }
}

impl FromStr for Combine {
    type Err = NetworkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sum" => Ok(Combine::Sum),
            "concat" => Ok(Combine::Concat),
            "convplus" | "conv+" => Ok(Combine::ConvPlus),
            other => Err(NetworkError::Config(format!("unknown combine strategy {other:?}"))),
        }
    }
}

pub const NUM_CLASSES: usize = 6;
pub const VH_KERNELS: [usize; 5] = [3, 5, 7, 9, 11];
/// Encoder stages, decoder steps, and pre-outputs.
pub const STAGES: usize = 5;
/// Convolution layers per VH path.
pub const VH_DEPTH: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkConfig {
    /// Length of the `k×1` and `1×k` VH kernels.
    pub vh_kernel: usize,
    pub combine: Combine,
    /// `false` drops the VH-stage, leaving the plain fused encoder-decoder.
    pub vh_enabled: bool,
    pub num_classes: usize,
    pub encoder_channels: [usize; STAGES],
    /// `(height, width)`, both divisible by 32.
    pub input_size: (usize, usize),
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            vh_kernel: 9,
            combine: Combine::Sum,
            vh_enabled: true,
            num_classes: NUM_CLASSES,
            encoder_channels: [16, 32, 64, 128, 256],
            input_size: (256, 256),
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), NetworkError> {
        if !VH_KERNELS.contains(&self.vh_kernel) {
            return Err(NetworkError::Config(format!("vh_kernel must be one of {VH_KERNELS:?}, got {}", self.vh_kernel)));
        }
        if self.num_classes != NUM_CLASSES {
            return Err(NetworkError::Config(format!("num_classes must be {NUM_CLASSES}, got {}", self.num_classes)));
        }
        if self.encoder_channels.contains(&0) {
            return Err(NetworkError::Config("encoder stage with zero channels".into()));
        }
        self.check_input(self.input_size)
    }

    pub fn check_input(&self, (h, w): (usize, usize)) -> Result<(), NetworkError> {
        let div = 1 << STAGES;
        if h == 0 || w == 0 || h % div != 0 || w % div != 0 {
            return Err(NetworkError::Config(format!("input {h}x{w} must be a nonzero multiple of {div}")));
        }
        Ok(())
    }

    /// Short variant tag such as `v9h9`.
    pub fn variant(&self) -> String {
        format!("v{0}h{0}", self.vh_kernel)
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::default();
        doc.set("vh_kernel", self.vh_kernel);
        doc.set("combine", self.combine);
        doc.set("vh_enabled", self.vh_enabled);
        doc.set("num_classes", self.num_classes);
        doc.set("channels", self.encoder_channels.map(|c| c.to_string()).join(","));
        doc.set("input_size", format!("{}x{}", self.input_size.0, self.input_size.1));
        doc
    }

    /// Reads a config document; absent keys keep their default values.
    pub fn from_kv(doc: &KvDoc) -> Result<Self, NetworkError> {
        let mut cfg = Self::default();
        let kv = |e: crate::kv::KvError| NetworkError::Config(e.to_string());
        if let Some(k) = doc.parse_value("vh_kernel").map_err(kv)? {
            cfg.vh_kernel = k;
        }
        if let Some(c) = doc.get("combine") {
            cfg.combine = c.parse()?;
        }
        if let Some(v) = doc.parse_value("vh_enabled").map_err(kv)? {
            cfg.vh_enabled = v;
        }
        if let Some(v) = doc.parse_value("num_classes").map_err(kv)? {
            cfg.num_classes = v;
        }
        if doc.get("channels").is_some() {
            let ch: Vec<usize> = doc.numbers("channels").map_err(kv)?;
            cfg.encoder_channels = ch
                .try_into()
                .map_err(|c: Vec<usize>| NetworkError::Config(format!("expected {STAGES} channel counts, got {}", c.len())))?;
        }
        if let Some(s) = doc.get("input_size") {
            cfg.input_size = parse_size(s)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `HxW` (or a single number for square inputs).
pub fn parse_size(s: &str) -> Result<(usize, usize), NetworkError> {
    let bad = || NetworkError::Config(format!("bad size {s:?}"));
    match s.split_once(['x', 'X']) {
        Some((h, w)) => Ok((h.trim().parse().map_err(|_| bad())?, w.trim().parse().map_err(|_| bad())?)),
        None => {
            let v = s.trim().parse().map_err(|_| bad())?;
            Ok((v, v))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        NetworkConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = NetworkConfig { vh_kernel: 4, ..Default::default() };
        assert!(c.validate().is_err());
        c.vh_kernel = 9;
        c.input_size = (100, 128);
        assert!(c.validate().is_err());
        c.input_size = (128, 128);
        c.num_classes = 5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn kv_round_trip() {
        let c = NetworkConfig {
            vh_kernel: 5,
            combine: Combine::ConvPlus,
            vh_enabled: false,
            encoder_channels: [4, 8, 8, 16, 16],
            input_size: (64, 96),
            ..Default::default()
        };
        assert_eq!(NetworkConfig::from_kv(&c.to_kv()).unwrap(), c);
        assert_eq!("conv+".parse::<Combine>().unwrap(), Combine::ConvPlus);
    }
}
