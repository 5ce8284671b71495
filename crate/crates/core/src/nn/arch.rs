//! Layer graphs of the supported backbones.
//!
//! Parameter names follow the torchvision state-dict naming so that
//! exported archives map one to one onto these slots.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ops::PoolSpec;
use crate::error::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchName {
    AlexNet,
    SqueezeNet,
    Vgg16,
    ResNet18,
    ResNet50,
}

impl ArchName {
    pub const ALL: [ArchName; 5] = [
        ArchName::AlexNet,
        ArchName::SqueezeNet,
        ArchName::Vgg16,
        ArchName::ResNet18,
        ArchName::ResNet50,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArchName::AlexNet => "alexnet",
            ArchName::SqueezeNet => "squeezenet",
            ArchName::Vgg16 => "vgg16",
            ArchName::ResNet18 => "resnet18",
            ArchName::ResNet50 => "resnet50",
        }
    }

    /// Whether this build carries the layer graph for the architecture.
    pub fn is_available(self) -> bool {
        match self {
            ArchName::AlexNet | ArchName::SqueezeNet => true,
            _ => cfg!(feature = "extended-backbones"),
        }
    }
}

impl fmt::Display for ArchName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArchName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ArchName::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::UnknownArchitecture(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    Basic,
    Bottleneck,
}

/// One residual block (torchvision v1.5: stride sits on the 3x3 conv).
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualBlock {
    pub name: String,
    pub kind: BlockKind,
    pub in_channels: usize,
    pub width: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub downsample: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerKind {
    Conv2d {
        name: String,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    },
    BatchNorm {
        name: String,
        channels: usize,
    },
    Relu,
    MaxPool2d(PoolSpec),
    Fire {
        name: String,
        in_channels: usize,
        squeeze: usize,
        expand1x1: usize,
        expand3x3: usize,
    },
    ResidualStack {
        name: String,
        blocks: Vec<ResidualBlock>,
    },
    AdaptiveAvgPool {
        out_h: usize,
        out_w: usize,
    },
    Flatten,
    Dropout,
    Linear {
        name: String,
        in_features: usize,
        out_features: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub is_extraction_point: bool,
}

impl LayerSpec {
    fn new(kind: LayerKind) -> Self {
        LayerSpec {
            kind,
            is_extraction_point: false,
        }
    }

    fn extract(mut self) -> Self {
        self.is_extraction_point = true;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlotRole {
    Weight,
    Bias,
    /// Batch-norm running statistics; stored but not learnable.
    RunningStat,
}

/// A named tensor an archive must provide for an architecture.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSlot {
    pub name: String,
    pub shape: Vec<usize>,
    pub role: SlotRole,
    /// Fan-in of the owning conv/linear layer; zero for batch-norm slots.
    pub fan_in: usize,
    pub is_batch_norm: bool,
}

impl ParamSlot {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_trainable(&self) -> bool {
        self.role != SlotRole::RunningStat
    }
}

/// Backbone description: a feature trunk with marked extraction points
/// followed by a classifier head.
#[derive(Clone, Debug, PartialEq)]
pub struct ArchitectureSpec {
    pub name: ArchName,
    pub features: Vec<LayerSpec>,
    pub head: Vec<LayerSpec>,
    pub extraction_layer_count: usize,
}

fn conv(name: impl Into<String>, i: usize, o: usize, k: usize, s: usize, p: usize) -> LayerSpec {
    LayerSpec::new(LayerKind::Conv2d {
        name: name.into(),
        in_channels: i,
        out_channels: o,
        kernel: k,
        stride: s,
        padding: p,
        bias: true,
    })
}

fn relu() -> LayerSpec {
    LayerSpec::new(LayerKind::Relu)
}

fn pool(kernel: usize, stride: usize, padding: usize, ceil_mode: bool) -> LayerSpec {
    LayerSpec::new(LayerKind::MaxPool2d(PoolSpec {
        kernel,
        stride,
        padding,
        ceil_mode,
    }))
}

fn linear(name: impl Into<String>, i: usize, o: usize) -> LayerSpec {
    LayerSpec::new(LayerKind::Linear {
        name: name.into(),
        in_features: i,
        out_features: o,
    })
}

fn fire(idx: usize, i: usize, s: usize, e1: usize, e3: usize) -> LayerSpec {
    LayerSpec::new(LayerKind::Fire {
        name: format!("features.{idx}"),
        in_channels: i,
        squeeze: s,
        expand1x1: e1,
        expand3x3: e3,
    })
}

fn finish(name: ArchName, features: Vec<LayerSpec>, head: Vec<LayerSpec>) -> ArchitectureSpec {
    let extraction_layer_count = features.iter().filter(|l| l.is_extraction_point).count();
    ArchitectureSpec {
        name,
        features,
        head,
        extraction_layer_count,
    }
}

impl ArchitectureSpec {
    pub fn get(name: ArchName) -> Result<Self, Error> {
        match name {
            ArchName::AlexNet => Ok(Self::alexnet()),
            ArchName::SqueezeNet => Ok(Self::squeezenet()),
            #[cfg(feature = "extended-backbones")]
            ArchName::Vgg16 => Ok(Self::vgg16()),
            #[cfg(feature = "extended-backbones")]
            ArchName::ResNet18 => Ok(Self::resnet(ArchName::ResNet18)),
            #[cfg(feature = "extended-backbones")]
            ArchName::ResNet50 => Ok(Self::resnet(ArchName::ResNet50)),
            #[cfg(not(feature = "extended-backbones"))]
            other => Err(Error::invalid(format!(
                "architecture `{other}` needs the `extended-backbones` feature"
            ))),
        }
    }

    /// Extraction points: the five ReLUs that follow each convolution.
    pub fn alexnet() -> Self {
        let features = vec![
            conv("features.0", 3, 64, 11, 4, 2),
            relu().extract(),
            pool(3, 2, 0, false),
            conv("features.3", 64, 192, 5, 1, 2),
            relu().extract(),
            pool(3, 2, 0, false),
            conv("features.6", 192, 384, 3, 1, 1),
            relu().extract(),
            conv("features.8", 384, 256, 3, 1, 1),
            relu().extract(),
            conv("features.10", 256, 256, 3, 1, 1),
            relu().extract(),
            pool(3, 2, 0, false),
        ];
        let head = vec![
            LayerSpec::new(LayerKind::AdaptiveAvgPool { out_h: 6, out_w: 6 }),
            LayerSpec::new(LayerKind::Flatten),
            LayerSpec::new(LayerKind::Dropout),
            linear("classifier.1", 256 * 6 * 6, 4096),
            relu(),
            LayerSpec::new(LayerKind::Dropout),
            linear("classifier.4", 4096, 4096),
            relu(),
            linear("classifier.6", 4096, 1000),
        ];
        finish(ArchName::AlexNet, features, head)
    }

    /// SqueezeNet 1.1. Extraction points: the stem ReLU and fire modules
    /// 2, 4, 5, 6, 7 and 8.
    pub fn squeezenet() -> Self {
        let features = vec![
            conv("features.0", 3, 64, 3, 2, 0),
            relu().extract(),
            pool(3, 2, 0, true),
            fire(3, 64, 16, 64, 64),
            fire(4, 128, 16, 64, 64).extract(),
            pool(3, 2, 0, true),
            fire(6, 128, 32, 128, 128),
            fire(7, 256, 32, 128, 128).extract(),
            pool(3, 2, 0, true),
            fire(9, 256, 48, 192, 192).extract(),
            fire(10, 384, 48, 192, 192).extract(),
            fire(11, 384, 64, 256, 256).extract(),
            fire(12, 512, 64, 256, 256).extract(),
        ];
        let head = vec![
            LayerSpec::new(LayerKind::Dropout),
            conv("classifier.1", 512, 1000, 1, 1, 0),
            relu(),
            LayerSpec::new(LayerKind::AdaptiveAvgPool { out_h: 1, out_w: 1 }),
            LayerSpec::new(LayerKind::Flatten),
        ];
        finish(ArchName::SqueezeNet, features, head)
    }

    /// Extraction points: ReLUs 2, 4, 7, 10 and 13.
    #[cfg(feature = "extended-backbones")]
    pub fn vgg16() -> Self {
        const CFG: [Option<usize>; 18] = [
            Some(64),
            Some(64),
            None,
            Some(128),
            Some(128),
            None,
            Some(256),
            Some(256),
            Some(256),
            None,
            Some(512),
            Some(512),
            Some(512),
            None,
            Some(512),
            Some(512),
            Some(512),
            None,
        ];
        let mut features = Vec::new();
        let mut in_ch = 3;
        let mut relu_count = 0;
        for entry in CFG {
            match entry {
                Some(out) => {
                    features.push(conv(
                        format!("features.{}", features.len()),
                        in_ch,
                        out,
                        3,
                        1,
                        1,
                    ));
                    relu_count += 1;
                    let r = relu();
                    features.push(if matches!(relu_count, 2 | 4 | 7 | 10 | 13) {
                        r.extract()
                    } else {
                        r
                    });
                    in_ch = out;
                }
                None => features.push(pool(2, 2, 0, false)),
            }
        }
        let head = vec![
            LayerSpec::new(LayerKind::AdaptiveAvgPool { out_h: 7, out_w: 7 }),
            LayerSpec::new(LayerKind::Flatten),
            linear("classifier.0", 512 * 7 * 7, 4096),
            relu(),
            LayerSpec::new(LayerKind::Dropout),
            linear("classifier.3", 4096, 4096),
            relu(),
            LayerSpec::new(LayerKind::Dropout),
            linear("classifier.6", 4096, 1000),
        ];
        finish(ArchName::Vgg16, features, head)
    }

    /// Extraction points: the stem (conv, batch norm, ReLU), the stem
    /// max-pool, and the outputs of block stacks 2, 3 and 4.
    #[cfg(feature = "extended-backbones")]
    pub fn resnet(name: ArchName) -> Self {
        let (kind, depths, expansion) = match name {
            ArchName::ResNet18 => (BlockKind::Basic, [2, 2, 2, 2], 1),
            ArchName::ResNet50 => (BlockKind::Bottleneck, [3, 4, 6, 3], 4),
            other => panic!("{other} is not a residual network"),
        };
        let mut features = vec![
            LayerSpec::new(LayerKind::Conv2d {
                name: "conv1".into(),
                in_channels: 3,
                out_channels: 64,
                kernel: 7,
                stride: 2,
                padding: 3,
                bias: false,
            }),
            LayerSpec::new(LayerKind::BatchNorm {
                name: "bn1".into(),
                channels: 64,
            }),
            relu().extract(),
            pool(3, 2, 1, false).extract(),
        ];
        let mut in_ch = 64;
        for (stage, &depth) in depths.iter().enumerate() {
            let width = 64 << stage;
            let out = width * expansion;
            let blocks = (0..depth)
                .map(|b| {
                    let stride = if b == 0 && stage > 0 { 2 } else { 1 };
                    let block = ResidualBlock {
                        name: format!("layer{}.{b}", stage + 1),
                        kind,
                        in_channels: in_ch,
                        width,
                        out_channels: out,
                        stride,
                        downsample: stride != 1 || in_ch != out,
                    };
                    in_ch = out;
                    block
                })
                .collect();
            let spec = LayerSpec::new(LayerKind::ResidualStack {
                name: format!("layer{}", stage + 1),
                blocks,
            });
            features.push(if stage > 0 { spec.extract() } else { spec });
        }
        let head = vec![
            LayerSpec::new(LayerKind::AdaptiveAvgPool { out_h: 1, out_w: 1 }),
            LayerSpec::new(LayerKind::Flatten),
            linear("fc", 512 * expansion, 1000),
        ];
        finish(name, features, head)
    }

    /// Every named tensor the architecture reads, features first.
    pub fn param_slots(&self) -> Vec<ParamSlot> {
        let mut slots = Vec::new();
        for layer in self.features.iter().chain(&self.head) {
            layer_slots(&layer.kind, &mut slots);
        }
        slots
    }

    /// Number of learnable scalars (batch-norm running statistics excluded).
    pub fn parameter_count(&self) -> usize {
        self.param_slots()
            .iter()
            .filter(|s| s.is_trainable())
            .map(ParamSlot::numel)
            .sum()
    }

    /// Index into `features` of the last extraction point.
    pub(crate) fn last_extraction_index(&self) -> usize {
        self.features
            .iter()
            .rposition(|l| l.is_extraction_point)
            .unwrap_or(0)
    }

    /// Channel count at each extraction point.
    pub fn extraction_channels(&self) -> Vec<usize> {
        let mut channels = 3;
        let mut out = Vec::new();
        for layer in &self.features {
            channels = match &layer.kind {
                LayerKind::Conv2d { out_channels, .. } => *out_channels,
                LayerKind::Fire {
                    expand1x1,
                    expand3x3,
                    ..
                } => expand1x1 + expand3x3,
                LayerKind::ResidualStack { blocks, .. } => {
                    blocks.last().map_or(channels, |b| b.out_channels)
                }
                _ => channels,
            };
            if layer.is_extraction_point {
                out.push(channels);
            }
        }
        out
    }

    /// Propagate a `[C, H, W]` shape through the trunk, returning the shape
    /// at each extraction point, or `None` if some layer cannot fit.
    pub fn extraction_shapes(&self, input: [usize; 3]) -> Option<Vec<[usize; 3]>> {
        let [mut c, mut h, mut w] = input;
        let mut out = Vec::new();
        let conv_dim =
            |n: usize, k: usize, s: usize, p: usize| (n + 2 * p).checked_sub(k).map(|v| v / s + 1);
        for layer in &self.features[..=self.last_extraction_index()] {
            match &layer.kind {
                LayerKind::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    ..
                } => {
                    if *in_channels != c {
                        return None;
                    }
                    h = conv_dim(h, *kernel, *stride, *padding)?;
                    w = conv_dim(w, *kernel, *stride, *padding)?;
                    c = *out_channels;
                }
                LayerKind::MaxPool2d(spec) => {
                    h = spec.out_dim(h)?;
                    w = spec.out_dim(w)?;
                }
                LayerKind::Fire {
                    in_channels,
                    expand1x1,
                    expand3x3,
                    ..
                } => {
                    if *in_channels != c {
                        return None;
                    }
                    c = expand1x1 + expand3x3;
                }
                LayerKind::ResidualStack { blocks, .. } => {
                    for b in blocks {
                        if b.in_channels != c {
                            return None;
                        }
                        h = conv_dim(h, 3, b.stride, 1)?;
                        w = conv_dim(w, 3, b.stride, 1)?;
                        c = b.out_channels;
                    }
                }
                _ => {}
            }
            if layer.is_extraction_point {
                out.push([c, h, w]);
            }
        }
        Some(out)
    }
}

fn conv_slots(name: &str, i: usize, o: usize, k: usize, bias: bool, slots: &mut Vec<ParamSlot>) {
    let fan_in = i * k * k;
    slots.push(ParamSlot {
        name: format!("{name}.weight"),
        shape: vec![o, i, k, k],
        role: SlotRole::Weight,
        fan_in,
        is_batch_norm: false,
    });
    if bias {
        slots.push(ParamSlot {
            name: format!("{name}.bias"),
            shape: vec![o],
            role: SlotRole::Bias,
            fan_in,
            is_batch_norm: false,
        });
    }
}

fn bn_slots(name: &str, c: usize, slots: &mut Vec<ParamSlot>) {
    for (suffix, role) in [
        ("weight", SlotRole::Weight),
        ("bias", SlotRole::Bias),
        ("running_mean", SlotRole::RunningStat),
        ("running_var", SlotRole::RunningStat),
    ] {
        slots.push(ParamSlot {
            name: format!("{name}.{suffix}"),
            shape: vec![c],
            role,
            fan_in: 0,
            is_batch_norm: true,
        });
    }
}

fn layer_slots(kind: &LayerKind, slots: &mut Vec<ParamSlot>) {
    match kind {
        LayerKind::Conv2d {
            name,
            in_channels,
            out_channels,
            kernel,
            bias,
            ..
        } => conv_slots(name, *in_channels, *out_channels, *kernel, *bias, slots),
        LayerKind::BatchNorm { name, channels } => bn_slots(name, *channels, slots),
        LayerKind::Fire {
            name,
            in_channels,
            squeeze,
            expand1x1,
            expand3x3,
        } => {
            conv_slots(
                &format!("{name}.squeeze"),
                *in_channels,
                *squeeze,
                1,
                true,
                slots,
            );
            conv_slots(
                &format!("{name}.expand1x1"),
                *squeeze,
                *expand1x1,
                1,
                true,
                slots,
            );
            conv_slots(
                &format!("{name}.expand3x3"),
                *squeeze,
                *expand3x3,
                3,
                true,
                slots,
            );
        }
        LayerKind::ResidualStack { blocks, .. } => {
            for b in blocks {
                let n = &b.name;
                match b.kind {
                    BlockKind::Basic => {
                        conv_slots(
                            &format!("{n}.conv1"),
                            b.in_channels,
                            b.width,
                            3,
                            false,
                            slots,
                        );
                        bn_slots(&format!("{n}.bn1"), b.width, slots);
                        conv_slots(&format!("{n}.conv2"), b.width, b.width, 3, false, slots);
                        bn_slots(&format!("{n}.bn2"), b.width, slots);
                    }
                    BlockKind::Bottleneck => {
                        conv_slots(
                            &format!("{n}.conv1"),
                            b.in_channels,
                            b.width,
                            1,
                            false,
                            slots,
                        );
                        bn_slots(&format!("{n}.bn1"), b.width, slots);
                        conv_slots(&format!("{n}.conv2"), b.width, b.width, 3, false, slots);
                        bn_slots(&format!("{n}.bn2"), b.width, slots);
                        conv_slots(
                            &format!("{n}.conv3"),
                            b.width,
                            b.out_channels,
                            1,
                            false,
                            slots,
                        );
                        bn_slots(&format!("{n}.bn3"), b.out_channels, slots);
                    }
                }
                if b.downsample {
                    conv_slots(
                        &format!("{n}.downsample.0"),
                        b.in_channels,
                        b.out_channels,
                        1,
                        false,
                        slots,
                    );
                    bn_slots(&format!("{n}.downsample.1"), b.out_channels, slots);
                }
            }
        }
        LayerKind::Linear {
            name,
            in_features,
            out_features,
        } => {
            slots.push(ParamSlot {
                name: format!("{name}.weight"),
                shape: vec![*out_features, *in_features],
                role: SlotRole::Weight,
                fan_in: *in_features,
                is_batch_norm: false,
            });
            slots.push(ParamSlot {
                name: format!("{name}.bias"),
                shape: vec![*out_features],
                role: SlotRole::Bias,
                fan_in: *in_features,
                is_batch_norm: false,
            });
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn required_tier_parameter_counts() {
        assert_eq!(ArchitectureSpec::alexnet().parameter_count(), 61_100_840);
        assert_eq!(ArchitectureSpec::squeezenet().parameter_count(), 1_235_496);
    }

    #[cfg(feature = "extended-backbones")]
    #[test]
    fn extended_tier_parameter_counts() {
        assert_eq!(ArchitectureSpec::vgg16().parameter_count(), 138_357_544);
        assert_eq!(
            ArchitectureSpec::resnet(ArchName::ResNet18).parameter_count(),
            11_689_512
        );
        assert_eq!(
            ArchitectureSpec::resnet(ArchName::ResNet50).parameter_count(),
            25_557_032
        );
    }

    #[test]
    fn extraction_counts() {
        for name in ArchName::ALL.into_iter().filter(|a| a.is_available()) {
            let spec = ArchitectureSpec::get(name).unwrap();
            let expected = if name == ArchName::SqueezeNet { 7 } else { 5 };
            assert_eq!(spec.extraction_layer_count, expected, "{name}");
            let shapes = spec.extraction_shapes([3, 64, 64]).unwrap();
            assert_eq!(shapes.len(), expected);
            let chans: Vec<usize> = shapes.iter().map(|s| s[0]).collect();
            assert_eq!(chans, spec.extraction_channels());
            for pair in shapes.windows(2) {
                assert!(
                    pair[1][1] <= pair[0][1] && pair[1][2] <= pair[0][2],
                    "{name}: {shapes:?}"
                );
            }
        }
    }

    #[test]
    fn lpips_channel_layouts() {
        assert_eq!(
            ArchitectureSpec::alexnet().extraction_channels(),
            vec![64, 192, 384, 256, 256]
        );
        assert_eq!(
            ArchitectureSpec::squeezenet().extraction_channels(),
            vec![64, 128, 256, 384, 384, 512, 512]
        );
    }

    #[test]
    fn alexnet_shapes_at_64() {
        let shapes = ArchitectureSpec::alexnet()
            .extraction_shapes([3, 64, 64])
            .unwrap();
        assert_eq!(
            shapes,
            vec![
                [64, 15, 15],
                [192, 7, 7],
                [384, 3, 3],
                [256, 3, 3],
                [256, 3, 3]
            ]
        );
    }

    #[test]
    fn squeezenet_shapes_at_64() {
        let shapes = ArchitectureSpec::squeezenet()
            .extraction_shapes([3, 64, 64])
            .unwrap();
        assert_eq!(
            shapes,
            vec![
                [64, 31, 31],
                [128, 15, 15],
                [256, 7, 7],
                [384, 3, 3],
                [384, 3, 3],
                [512, 3, 3],
                [512, 3, 3]
            ]
        );
    }

    #[test]
    fn names_round_trip() {
        for a in ArchName::ALL {
            assert_eq!(a.as_str().parse::<ArchName>().unwrap(), a);
        }
        assert!("lenet".parse::<ArchName>().is_err());
    }

    #[test]
    fn slot_names_unique() {
        for name in ArchName::ALL.into_iter().filter(|a| a.is_available()) {
            let slots = ArchitectureSpec::get(name).unwrap().param_slots();
            let mut names: Vec<_> = slots.iter().map(|s| &s.name).collect();
            names.sort();
            names.dedup();
            assert_eq!(names.len(), slots.len(), "{name}");
        }
    }
}
