//! Running a backbone over a model-input tensor.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::arch::{ArchName, ArchitectureSpec, BlockKind, LayerKind, LayerSpec, ResidualBlock};
use super::archive::TensorArchive;
use super::ops::{self, FireParams};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Smallest spatial size any supported backbone accepts.
pub const MIN_INPUT_SIZE: usize = 64;
const BN_EPS: f32 = 1e-5;

/// Activations at an architecture's extraction points, shallowest first.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStack {
    pub layers: Vec<Tensor>,
    pub architecture: ArchName,
    pub normalized: bool,
}

impl FeatureStack {
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

fn conv_layer(
    x: &Tensor,
    w: &TensorArchive,
    name: &str,
    stride: usize,
    padding: usize,
    bias: bool,
) -> Result<Tensor> {
    let weight = w.get(&format!("{name}.weight"))?;
    let b = if bias {
        Some(w.get(&format!("{name}.bias"))?)
    } else {
        None
    };
    ops::conv2d(x, weight, b, stride, padding)
}

fn bn_layer(x: &Tensor, w: &TensorArchive, name: &str) -> Result<Tensor> {
    ops::batch_norm(
        x,
        w.get(&format!("{name}.weight"))?,
        w.get(&format!("{name}.bias"))?,
        w.get(&format!("{name}.running_mean"))?,
        w.get(&format!("{name}.running_var"))?,
        BN_EPS,
    )
}

fn residual_block(x: &Tensor, w: &TensorArchive, b: &ResidualBlock) -> Result<Tensor> {
    let n = &b.name;
    let mut out = match b.kind {
        BlockKind::Basic => {
            let mut y = bn_layer(
                &conv_layer(x, w, &format!("{n}.conv1"), b.stride, 1, false)?,
                w,
                &format!("{n}.bn1"),
            )?;
            ops::relu_inplace(&mut y);
            bn_layer(
                &conv_layer(&y, w, &format!("{n}.conv2"), 1, 1, false)?,
                w,
                &format!("{n}.bn2"),
            )?
        }
        BlockKind::Bottleneck => {
            let mut y = bn_layer(
                &conv_layer(x, w, &format!("{n}.conv1"), 1, 0, false)?,
                w,
                &format!("{n}.bn1"),
            )?;
            ops::relu_inplace(&mut y);
            let mut y = bn_layer(
                &conv_layer(&y, w, &format!("{n}.conv2"), b.stride, 1, false)?,
                w,
                &format!("{n}.bn2"),
            )?;
            ops::relu_inplace(&mut y);
            bn_layer(
                &conv_layer(&y, w, &format!("{n}.conv3"), 1, 0, false)?,
                w,
                &format!("{n}.bn3"),
            )?
        }
    };
    let identity = if b.downsample {
        let d = conv_layer(x, w, &format!("{n}.downsample.0"), b.stride, 0, false)?;
        bn_layer(&d, w, &format!("{n}.downsample.1"))?
    } else {
        x.clone()
    };
    out = ops::add(&out, &identity)?;
    ops::relu_inplace(&mut out);
    Ok(out)
}

fn apply_layer(x: Tensor, layer: &LayerSpec, w: &TensorArchive) -> Result<Tensor> {
    match &layer.kind {
        LayerKind::Conv2d {
            name,
            stride,
            padding,
            bias,
            ..
        } => conv_layer(&x, w, name, *stride, *padding, *bias),
        LayerKind::BatchNorm { name, .. } => bn_layer(&x, w, name),
        LayerKind::Relu => {
            let mut x = x;
            ops::relu_inplace(&mut x);
            Ok(x)
        }
        LayerKind::MaxPool2d(spec) => ops::maxpool2d_with(&x, *spec),
        LayerKind::Fire { name, .. } => {
            let get = |part: &str, what: &str| w.get(&format!("{name}.{part}.{what}"));
            let params = FireParams {
                squeeze_weight: get("squeeze", "weight")?,
                squeeze_bias: Some(get("squeeze", "bias")?),
                expand1x1_weight: get("expand1x1", "weight")?,
                expand1x1_bias: Some(get("expand1x1", "bias")?),
                expand3x3_weight: get("expand3x3", "weight")?,
                expand3x3_bias: Some(get("expand3x3", "bias")?),
            };
            ops::fire_forward(&x, &params)
        }
        LayerKind::ResidualStack { blocks, .. } => {
            let mut x = x;
            for b in blocks {
                x = residual_block(&x, w, b)?;
            }
            Ok(x)
        }
        LayerKind::AdaptiveAvgPool { out_h, out_w } => {
            let x = if x.rank() == 1 {
                x.clone().reshape(vec![x.len(), 1, 1])?
            } else {
                x
            };
            ops::adaptive_avg_pool2d(&x, *out_h, *out_w)
        }
        LayerKind::Flatten => {
            let n = x.len();
            x.reshape(vec![n])
        }
        LayerKind::Dropout => Ok(x),
        LayerKind::Linear { name, .. } => ops::linear(
            &x,
            w.get(&format!("{name}.weight"))?,
            Some(w.get(&format!("{name}.bias"))?),
        ),
    }
}

fn check_input(image: &Tensor, arch: &ArchitectureSpec, weights: &TensorArchive) -> Result<()> {
    let (c, h, w) = image.chw("forward")?;
    if c != 3 {
        return Err(Error::shape(
            "forward",
            format!("expected 3 input channels, got {c}"),
        ));
    }
    if h < MIN_INPUT_SIZE || w < MIN_INPUT_SIZE {
        return Err(Error::UndersizedInput {
            height: h,
            width: w,
            min: MIN_INPUT_SIZE,
        });
    }
    if weights.architecture != arch.name {
        return Err(Error::Archive(format!(
            "weights are for {} but architecture is {}",
            weights.architecture, arch.name
        )));
    }
    Ok(())
}

/// Unnormalized activations at every extraction point of `arch`.
pub fn forward_features(
    image: &Tensor,
    arch: &ArchitectureSpec,
    weights: &TensorArchive,
) -> Result<FeatureStack> {
    check_input(image, arch, weights)?;
    let last = arch.last_extraction_index();
    let mut layers = Vec::with_capacity(arch.extraction_layer_count);
    let mut x = image.clone();
    for layer in &arch.features[..=last] {
        x = apply_layer(x, layer, weights)?;
        if layer.is_extraction_point {
            layers.push(x.clone());
        }
    }
    Ok(FeatureStack {
        layers,
        architecture: arch.name,
        normalized: false,
    })
}

/// Full forward pass to class logits.
pub fn classify(
    image: &Tensor,
    arch: &ArchitectureSpec,
    weights: &TensorArchive,
) -> Result<Tensor> {
    check_input(image, arch, weights)?;
    let head_present = arch.head.iter().all(|l| match &l.kind {
        LayerKind::Linear { name, .. } | LayerKind::Conv2d { name, .. } => {
            weights.contains(&format!("{name}.weight"))
        }
        _ => true,
    });
    if !head_present {
        return Err(Error::Archive(format!(
            "archive has no classifier head for {}",
            arch.name
        )));
    }
    let mut x = image.clone();
    for layer in arch.features.iter().chain(&arch.head) {
        x = apply_layer(x, layer, weights)?;
    }
    let n = x.len();
    x.reshape(vec![n])
}

/// Index of the largest logit; ties resolve to the lowest index.
pub fn argmax(logits: &[f32]) -> usize {
    logits
        .iter()
        .enumerate()
        .fold((0, f32::NEG_INFINITY), |best, (i, &v)| {
            if v > best.1 {
                (i, v)
            } else {
                best
            }
        })
        .0
}

pub fn classify_sanity(
    image: &Tensor,
    arch: &ArchitectureSpec,
    weights: &TensorArchive,
) -> Result<usize> {
    Ok(argmax(classify(image, arch, weights)?.data()))
}

/// Reference classification produced by the weight exporter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationFixture {
    pub image_path: String,
    pub top1_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits_sha256: Option<String>,
}

pub fn read_fixtures(path: &Path) -> Result<Vec<ClassificationFixture>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

/// Agreement between our forward pass and a fixture set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FixtureReport {
    pub total: usize,
    pub top1_agree: usize,
    /// Largest `|ours - reference|` over fixtures that carry raw logits.
    pub max_abs_logit_error: Option<f32>,
}

/// Runs `classify` on each pre-processed fixture input and compares.
pub fn check_fixtures(
    fixtures: &[ClassificationFixture],
    inputs: &[Tensor],
    arch: &ArchitectureSpec,
    weights: &TensorArchive,
) -> Result<FixtureReport> {
    if fixtures.len() != inputs.len() {
        return Err(Error::invalid(format!(
            "{} fixtures but {} inputs",
            fixtures.len(),
            inputs.len()
        )));
    }
    let mut report = FixtureReport {
        total: fixtures.len(),
        top1_agree: 0,
        max_abs_logit_error: None,
    };
    for (fx, input) in fixtures.iter().zip(inputs) {
        let logits = classify(input, arch, weights)?;
        if argmax(logits.data()) == fx.top1_index {
            report.top1_agree += 1;
        }
        if let Some(reference) = &fx.logits {
            if reference.len() != logits.len() {
                return Err(Error::shape(
                    "fixtures",
                    format!(
                        "{}: {} reference logits vs {}",
                        fx.image_path,
                        reference.len(),
                        logits.len()
                    ),
                ));
            }
            let err = reference
                .iter()
                .zip(logits.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f32, f32::max);
            report.max_abs_logit_error =
                Some(report.max_abs_logit_error.map_or(err, |m| m.max(err)));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::archive::random_init;

    fn image(seed: u32, size: usize) -> Tensor {
        Tensor::from_fn(vec![3, size, size], |i| {
            (((i as u32).wrapping_mul(2654435761).wrapping_add(seed) >> 8) % 1000) as f32 / 500.0
                - 1.0
        })
    }

    #[test]
    fn alexnet_stack_has_five_layers() {
        let arch = ArchitectureSpec::alexnet();
        let w = random_init(&arch, 0);
        let s = forward_features(&image(1, 64), &arch, &w).unwrap();
        assert_eq!(s.len(), 5);
        let shapes: Vec<_> = s.layers.iter().map(|t| t.shape().to_vec()).collect();
        let expect: Vec<Vec<usize>> = arch
            .extraction_shapes([3, 64, 64])
            .unwrap()
            .into_iter()
            .map(|s| s.to_vec())
            .collect();
        assert_eq!(shapes, expect);
        assert!(s.layers.iter().all(Tensor::all_finite));
    }

    #[test]
    fn squeezenet_stack_has_seven_layers() {
        let arch = ArchitectureSpec::squeezenet();
        let w = random_init(&arch, 0);
        let s = forward_features(&image(2, 64), &arch, &w).unwrap();
        assert_eq!(s.len(), 7);
        let expect: Vec<Vec<usize>> = arch
            .extraction_shapes([3, 64, 64])
            .unwrap()
            .into_iter()
            .map(|s| s.to_vec())
            .collect();
        assert_eq!(
            s.layers
                .iter()
                .map(|t| t.shape().to_vec())
                .collect::<Vec<_>>(),
            expect
        );
    }

    #[test]
    fn deterministic() {
        let arch = ArchitectureSpec::squeezenet();
        let w = random_init(&arch, 3);
        let x = image(9, 64);
        assert_eq!(
            forward_features(&x, &arch, &w).unwrap(),
            forward_features(&x, &arch, &w).unwrap()
        );
    }

    #[test]
    fn undersized_input_rejected() {
        let arch = ArchitectureSpec::squeezenet();
        let w = random_init(&arch, 3);
        assert!(matches!(
            forward_features(&image(0, 63), &arch, &w),
            Err(Error::UndersizedInput { height: 63, .. })
        ));
    }

    #[test]
    fn missing_parameter_named() {
        let arch = ArchitectureSpec::squeezenet();
        let full = random_init(&arch, 3);
        let mut w = TensorArchive::new(arch.name, full.weight_set);
        for (k, v) in full
            .iter()
            .filter(|(k, _)| *k != "features.9.squeeze.weight")
        {
            w.insert(k, v.clone());
        }
        let err = forward_features(&image(0, 64), &arch, &w).unwrap_err();
        assert!(matches!(err, Error::MissingParameter(ref n) if n == "features.9.squeeze.weight"));
    }

    #[test]
    fn classify_gray_is_deterministic() {
        let arch = ArchitectureSpec::squeezenet();
        let w = random_init(&arch, 11);
        let gray = Tensor::zeros(vec![3, 64, 64]);
        let a = classify_sanity(&gray, &arch, &w).unwrap();
        assert_eq!(a, classify_sanity(&gray, &arch, &w).unwrap());
        assert!(a < 1000);
    }

    #[test]
    fn classify_needs_head() {
        let arch = ArchitectureSpec::squeezenet();
        let full = random_init(&arch, 3);
        let mut w = TensorArchive::new(arch.name, full.weight_set);
        for (k, v) in full.iter().filter(|(k, _)| !k.starts_with("classifier")) {
            w.insert(k, v.clone());
        }
        assert!(forward_features(&image(0, 64), &arch, &w).is_ok());
        assert!(matches!(
            classify(&image(0, 64), &arch, &w),
            Err(Error::Archive(_))
        ));
    }

    #[cfg(feature = "extended-backbones")]
    #[test]
    fn extended_backbones_run() {
        for name in [ArchName::Vgg16, ArchName::ResNet18, ArchName::ResNet50] {
            let arch = ArchitectureSpec::get(name).unwrap();
            let w = random_init(&arch, 5);
            let s = forward_features(&image(4, 64), &arch, &w).unwrap();
            assert_eq!(s.len(), 5, "{name}");
            let expect: Vec<Vec<usize>> = arch
                .extraction_shapes([3, 64, 64])
                .unwrap()
                .into_iter()
                .map(|s| s.to_vec())
                .collect();
            assert_eq!(
                s.layers
                    .iter()
                    .map(|t| t.shape().to_vec())
                    .collect::<Vec<_>>(),
                expect,
                "{name}"
            );
        }
    }
}
