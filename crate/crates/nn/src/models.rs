//! Classifier architectures: LeNet-5, ResNet-18, the single-stage
//! SB-ResNet-18, the LSTM series branch, and image+series fusion.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::Hasher;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::layers::{
    BasicBlock, BatchNorm2d, Context, Conv2d, Dropout, Flatten, GlobalAvgPool, Layer, Linear, Lstm, MaxPool2d, Relu,
    Sequential,
};
use crate::scalar::Scalar;
use crate::tensor::{Buffer, Param, Tensor};

pub const NUM_CLASSES: usize = 2;
pub const DEFAULT_LSTM_HIDDEN: usize = 32;
pub const DEFAULT_FUSION_HIDDEN: usize = 64;
pub const SERIES_LEN: usize = 126;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backbone {
    Lenet5,
    Resnet18,
    SbResnet18,
}

impl Backbone {
    /// Width of the penultimate feature vector.
    pub fn feature_width(self) -> usize {
        match self {
            Backbone::Lenet5 => 180,
            Backbone::Resnet18 => 512,
            Backbone::SbResnet18 => 64,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Backbone::Lenet5 => "lenet5",
            Backbone::Resnet18 => "resnet18",
            Backbone::SbResnet18 => "sb-resnet18",
        }
    }
}

/// An image backbone, optionally fused with the LSTM series branch, or the
/// series branch alone (debugging only).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Architecture {
    pub backbone: Option<Backbone>,
    pub series: bool,
}

impl Architecture {
    pub const LENET5: Self = Self { backbone: Some(Backbone::Lenet5), series: false };
    pub const RESNET18: Self = Self { backbone: Some(Backbone::Resnet18), series: false };
    pub const SB_RESNET18: Self = Self { backbone: Some(Backbone::SbResnet18), series: false };
    pub const LENET5_LSTM: Self = Self { backbone: Some(Backbone::Lenet5), series: true };
    pub const RESNET18_LSTM: Self = Self { backbone: Some(Backbone::Resnet18), series: true };
    pub const SB_RESNET18_LSTM: Self = Self { backbone: Some(Backbone::SbResnet18), series: true };
    pub const LSTM_ONLY: Self = Self { backbone: None, series: true };

    pub fn is_fusion(&self) -> bool {
        self.backbone.is_some() && self.series
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.backbone, self.series) {
            (Some(b), false) => f.write_str(b.name()),
            (Some(b), true) => write!(f, "{}+lstm", b.name()),
            (None, _) => f.write_str("lstm"),
        }
    }
}

impl FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (base, series) = match s.strip_suffix("+lstm") {
            Some(b) => (b, true),
            None => (s, false),
        };
        let backbone = match base {
            "lenet5" => Some(Backbone::Lenet5),
            "resnet18" => Some(Backbone::Resnet18),
            "sb-resnet18" => Some(Backbone::SbResnet18),
            "lstm" if !series => return Ok(Self::LSTM_ONLY),
            _ => {
                return Err(format!(
                    "unknown architecture `{s}`; expected lenet5, resnet18 or sb-resnet18, optionally with +lstm"
                ))
            }
        };
        Ok(Self { backbone, series })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    #[default]
    TwoWay,
    /// Standard ImageNet head; only used to audit published parameter counts.
    ThousandWay,
}

impl Head {
    pub fn classes(self) -> usize {
        match self {
            Head::TwoWay => NUM_CLASSES,
            Head::ThousandWay => 1000,
        }
    }
}

impl FromStr for Head {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "two_way" | "two-way" | "2" => Ok(Head::TwoWay),
            "thousand_way" | "thousand-way" | "1000" => Ok(Head::ThousandWay),
            _ => Err(format!("unknown head `{s}`; expected two_way or thousand_way")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Architecture,
    pub in_channels: usize,
    pub head: Head,
    pub lstm_hidden: usize,
    pub fusion_hidden: usize,
    /// Dropout on the LSTM branch output.
    pub dropout: f64,
    pub series_len: usize,
}

impl ModelSpec {
    pub fn new(arch: Architecture, in_channels: usize) -> Self {
        Self {
            arch,
            in_channels,
            head: Head::TwoWay,
            lstm_hidden: DEFAULT_LSTM_HIDDEN,
            fusion_hidden: DEFAULT_FUSION_HIDDEN,
            dropout: 0.0,
            series_len: SERIES_LEN,
        }
    }

    pub fn with_head(mut self, head: Head) -> Self {
        self.head = head;
        self
    }

    pub fn with_dropout(mut self, dropout: f64) -> Self {
        self.dropout = dropout;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.arch.backbone.is_some() && ![1, 3, 5].contains(&self.in_channels) {
            return Err(NnError::BadChannels(self.in_channels));
        }
        if self.arch.series && self.head == Head::ThousandWay {
            return Err(NnError::IncompatibleSpecs("the thousand-way head exists only for image-only audits".into()));
        }
        if self.arch.series && (self.lstm_hidden == 0 || self.series_len == 0) {
            return Err(NnError::IncompatibleSpecs("series branch needs nonzero hidden size and length".into()));
        }
        if self.arch.is_fusion() && self.fusion_hidden == 0 {
            return Err(NnError::IncompatibleSpecs("fusion MLP width must be nonzero".into()));
        }
        if !(0.0..=0.9).contains(&self.dropout) {
            return Err(NnError::InvalidHyperparameter(format!("dropout {} outside [0, 0.9]", self.dropout)));
        }
        Ok(())
    }
}

/// LeNet-5 up to and including the 180-unit hidden layer (with its ReLU).
fn lenet5_features<T: Scalar>(in_channels: usize, rng: &mut ChaCha8Rng) -> Sequential<T> {
    let mut s = Sequential::new();
    s.push(Conv2d::new("image.conv1", in_channels, 12, 5, 1, 0, true, rng))
        .push(Relu::new())
        .push(MaxPool2d::new(2, 2, 0))
        .push(Conv2d::new("image.conv2", 12, 30, 5, 1, 0, true, rng))
        .push(Relu::new())
        .push(MaxPool2d::new(2, 2, 0))
        .push(Flatten::new())
        .push(Linear::new("image.fc1", 30 * 3 * 3, 180, true, rng))
        .push(Relu::new());
    s
}

/// ResNet-18 trunk through global average pooling. With `single_stage`
/// only the first residual stage (two 64-wide blocks) is kept.
fn resnet_features<T: Scalar>(in_channels: usize, single_stage: bool, rng: &mut ChaCha8Rng) -> Sequential<T> {
    let mut s = Sequential::new();
    s.push(Conv2d::new("image.conv1", in_channels, 64, 7, 2, 3, false, rng))
        .push(BatchNorm2d::new("image.bn1", 64))
        .push(Relu::new())
        .push(MaxPool2d::new(3, 2, 1));
    let stages: &[(usize, usize)] = if single_stage { &[(64, 1)] } else { &[(64, 1), (128, 2), (256, 2), (512, 2)] };
    let mut width = 64;
    for (i, &(out, stride)) in stages.iter().enumerate() {
        s.push(BasicBlock::new(&format!("image.layer{}.0", i + 1), width, out, stride, rng));
        s.push(BasicBlock::new(&format!("image.layer{}.1", i + 1), out, out, 1, rng));
        width = out;
    }
    s.push(GlobalAvgPool::new());
    s
}

/// Single-layer LSTM over the scalar series, followed by optional dropout.
pub fn build_lstm_branch<T: Scalar>(hidden: usize, dropout: f64, rng: &mut ChaCha8Rng) -> Sequential<T> {
    let mut s = Sequential::new();
    s.push(Lstm::new("series.lstm", 1, hidden, rng));
    if dropout > 0.0 {
        s.push(Dropout::new(dropout));
    }
    s
}

/// A built classifier: optional image trunk, optional series branch, and a
/// head over their (concatenated) features.
pub struct Model<T> {
    spec: ModelSpec,
    image: Option<Sequential<T>>,
    series: Option<Sequential<T>>,
    head: Sequential<T>,
    image_width: usize,
    series_width: usize,
}

impl<T: Scalar> Model<T> {
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let image = spec.arch.backbone.map(|b| match b {
            Backbone::Lenet5 => lenet5_features(spec.in_channels, &mut rng),
            Backbone::Resnet18 => resnet_features(spec.in_channels, false, &mut rng),
            Backbone::SbResnet18 => resnet_features(spec.in_channels, true, &mut rng),
        });
        let image_width = spec.arch.backbone.map_or(0, Backbone::feature_width);
        let series = spec.arch.series.then(|| build_lstm_branch(spec.lstm_hidden, spec.dropout, &mut rng));
        let series_width = if spec.arch.series { spec.lstm_hidden } else { 0 };

        let mut head = Sequential::new();
        if spec.arch.is_fusion() {
            head.push(Linear::new("head.fc1", image_width + series_width, spec.fusion_hidden, true, &mut rng))
                .push(Relu::new())
                .push(Linear::new("head.fc2", spec.fusion_hidden, NUM_CLASSES, true, &mut rng));
        } else {
            head.push(Linear::new("head.fc", image_width + series_width, spec.head.classes(), true, &mut rng));
        }
        Ok(Self { spec: spec.clone(), image, series, head, image_width, series_width })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Width of the vector fed to the head.
    pub fn head_input_width(&self) -> usize {
        self.image_width + self.series_width
    }

    pub fn forward(&mut self, images: Option<&Tensor<T>>, series: Option<&Tensor<T>>, ctx: &mut Context) -> Result<Tensor<T>> {
        let img_feats = match &mut self.image {
            Some(branch) => Some(branch.forward(images.ok_or(NnError::MissingInput("images"))?, ctx)?),
            None => None,
        };
        let ser_feats = match &mut self.series {
            Some(branch) => Some(branch.forward(series.ok_or(NnError::MissingInput("series"))?, ctx)?),
            None => None,
        };
        let features = match (img_feats, ser_feats) {
            (Some(a), Some(b)) => concat_features(&a, &b)?,
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => unreachable!("validated spec has at least one branch"),
        };
        self.head.forward(&features, ctx)
    }

    /// Backpropagate d(loss)/d(logits), accumulating every parameter gradient.
    pub fn backward(&mut self, grad_logits: &Tensor<T>) -> Result<()> {
        let g = self.head.backward(grad_logits)?;
        match (&mut self.image, &mut self.series) {
            (Some(img), Some(ser)) => {
                let (gi, gs) = split_features(&g, self.image_width)?;
                img.backward(&gi)?;
                ser.backward(&gs)?;
            }
            (Some(img), None) => {
                img.backward(&g)?;
            }
            (None, Some(ser)) => {
                ser.backward(&g)?;
            }
            (None, None) => {}
        }
        Ok(())
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut p = Vec::new();
        if let Some(b) = &self.image {
            p.extend(b.params());
        }
        if let Some(b) = &self.series {
            p.extend(b.params());
        }
        p.extend(self.head.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut p = Vec::new();
        if let Some(b) = &mut self.image {
            p.extend(b.params_mut());
        }
        if let Some(b) = &mut self.series {
            p.extend(b.params_mut());
        }
        p.extend(self.head.params_mut());
        p
    }

    pub fn buffers(&self) -> Vec<&Buffer<T>> {
        let mut b = Vec::new();
        if let Some(l) = &self.image {
            b.extend(l.buffers());
        }
        if let Some(l) = &self.series {
            b.extend(l.buffers());
        }
        b.extend(self.head.buffers());
        b
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>> {
        let mut b = Vec::new();
        if let Some(l) = &mut self.image {
            b.extend(l.buffers_mut());
        }
        if let Some(l) = &mut self.series {
            b.extend(l.buffers_mut());
        }
        b.extend(self.head.buffers_mut());
        b
    }

    /// Hash of every ReLU mask and max-pool winner from the last train-mode forward.
    pub fn activation_pattern(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for branch in [&self.image, &self.series].into_iter().flatten() {
            branch.activation_pattern(&mut h);
        }
        self.head.activation_pattern(&mut h);
        h.finish()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    /// Trainable scalars, batchnorm affine pairs included, running stats excluded.
    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Parameter count of the image trunk alone (no head).
    pub fn image_branch_count(&self) -> usize {
        self.image.as_ref().map_or(0, |b| b.params().iter().map(|p| p.len()).sum())
    }

    pub fn series_branch_count(&self) -> usize {
        self.series.as_ref().map_or(0, |b| b.params().iter().map(|p| p.len()).sum())
    }
}

fn concat_features<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, wa, wb) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    if b.shape()[0] != n {
        return Err(NnError::shape("fusion concat batch", &[n], &[b.shape()[0]]));
    }
    let mut data = Vec::with_capacity(n * (wa + wb));
    for i in 0..n {
        data.extend_from_slice(&a.data()[i * wa..(i + 1) * wa]);
        data.extend_from_slice(&b.data()[i * wb..(i + 1) * wb]);
    }
    Tensor::from_vec(&[n, wa + wb], data)
}

fn split_features<T: Scalar>(g: &Tensor<T>, left: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let (n, w) = (g.shape()[0], g.shape()[1]);
    let right = w - left;
    let mut a = Vec::with_capacity(n * left);
    let mut b = Vec::with_capacity(n * right);
    for row in g.data().chunks_exact(w) {
        a.extend_from_slice(&row[..left]);
        b.extend_from_slice(&row[left..]);
    }
    Ok((Tensor::from_vec(&[n, left], a)?, Tensor::from_vec(&[n, right], b)?))
}

pub fn build_lenet5<T: Scalar>(in_channels: usize, seed: u64) -> Result<Model<T>> {
    Model::build(&ModelSpec::new(Architecture::LENET5, in_channels), seed)
}

pub fn build_resnet18<T: Scalar>(in_channels: usize, head: Head, seed: u64) -> Result<Model<T>> {
    Model::build(&ModelSpec::new(Architecture::RESNET18, in_channels).with_head(head), seed)
}

pub fn build_sb_resnet18<T: Scalar>(in_channels: usize, seed: u64) -> Result<Model<T>> {
    Model::build(&ModelSpec::new(Architecture::SB_RESNET18, in_channels), seed)
}

/// Fuse an image architecture with the series branch described by `lstm`.
pub fn build_fusion<T: Scalar>(image: &ModelSpec, lstm: &ModelSpec, seed: u64) -> Result<Model<T>> {
    let backbone = image
        .arch
        .backbone
        .ok_or_else(|| NnError::IncompatibleSpecs("fusion needs an image backbone".into()))?;
    if image.arch.series || lstm.arch.backbone.is_some() || !lstm.arch.series {
        return Err(NnError::IncompatibleSpecs(format!("cannot fuse {} with {}", image.arch, lstm.arch)));
    }
    if image.head != Head::TwoWay {
        return Err(NnError::IncompatibleSpecs("fusion requires the two-way image model".into()));
    }
    let spec = ModelSpec {
        arch: Architecture { backbone: Some(backbone), series: true },
        in_channels: image.in_channels,
        head: Head::TwoWay,
        lstm_hidden: lstm.lstm_hidden,
        fusion_hidden: image.fusion_hidden,
        dropout: lstm.dropout,
        series_len: lstm.series_len,
    };
    Model::build(&spec, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn architecture_names_round_trip() {
        for name in ["lenet5", "resnet18", "sb-resnet18", "lenet5+lstm", "sb-resnet18+lstm", "lstm"] {
            let a: Architecture = name.parse().unwrap();
            assert_eq!(a.to_string(), name);
        }
        assert!("vgg".parse::<Architecture>().is_err());
    }

    #[test]
    fn bad_channel_counts_are_rejected() {
        assert!(matches!(build_lenet5::<f32>(2, 0), Err(NnError::BadChannels(2))));
        assert!(matches!(build_sb_resnet18::<f32>(4, 0), Err(NnError::BadChannels(4))));
    }

    #[test]
    fn fusion_input_width() {
        let m = Model::<f32>::build(&ModelSpec::new(Architecture::SB_RESNET18_LSTM, 5), 0).unwrap();
        assert_eq!(m.head_input_width(), 96);
    }

    #[test]
    fn fusion_rejects_thousand_way_image_model() {
        let img = ModelSpec::new(Architecture::RESNET18, 3).with_head(Head::ThousandWay);
        let lstm = ModelSpec::new(Architecture::LSTM_ONLY, 1);
        assert!(matches!(build_fusion::<f32>(&img, &lstm, 0), Err(NnError::IncompatibleSpecs(_))));
    }

    #[test]
    fn logits_are_two_wide() {
        let mut m = build_lenet5::<f32>(3, 1).unwrap();
        let x = Tensor::zeros(&[4, 3, 24, 24]);
        let y = m.forward(Some(&x), None, &mut Context::eval()).unwrap();
        assert_eq!(y.shape(), &[4, 2]);
    }
}
