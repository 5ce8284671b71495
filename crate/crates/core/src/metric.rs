//! Deep-feature perceptual distance.
//!
//! For normalized stacks `x̂`, `ŷ` and per-layer channel weights `w_l`:
//!
//! ```text
//! d(x, y) = Σ_{l ∈ L'} 1/(H_l W_l) Σ_{h,w} ‖ w_l ⊙ (x̂ˡ_hw − ŷˡ_hw) ‖²
//! ```

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DistanceMatrix;
use crate::nn::{
    forward_features, ArchName, ArchitectureSpec, FeatureStack, TensorArchive, WeightSet,
};
use crate::preprocess::{prepare, ImageStimulus, PreprocessConfig};
use crate::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-10;

/// Channel weights `w_l`, one vector per extraction layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingWeights {
    pub layers: Vec<Vec<f64>>,
    pub label: String,
}

impl ScalingWeights {
    /// `w_l = 1` for every channel.
    pub fn ones(spec: &ArchitectureSpec) -> Self {
        ScalingWeights::ones_for_channels(&spec.extraction_channels())
    }

    pub fn ones_for_channels(channels: &[usize]) -> Self {
        ScalingWeights {
            layers: channels.iter().map(|&c| vec![1.0; c]).collect(),
            label: "ones".into(),
        }
    }

    /// Explicit vectors; negative or non-finite components are rejected.
    pub fn new(layers: Vec<Vec<f64>>, label: impl Into<String>) -> Result<Self> {
        for (l, v) in layers.iter().enumerate() {
            if let Some(x) = v.iter().find(|x| !x.is_finite() || **x < 0.0) {
                return Err(Error::invalid(format!(
                    "scaling layer {l} has component {x}"
                )));
            }
        }
        Ok(ScalingWeights {
            layers,
            label: label.into(),
        })
    }

    /// Reads `lin{l}.weight` tensors (shape `[C]` or `[1, C, 1, 1]`) from an
    /// `lpips-scaling` archive. Negative components are clamped to zero.
    pub fn from_archive(archive: &TensorArchive, spec: &ArchitectureSpec) -> Result<Self> {
        if archive.weight_set != WeightSet::LpipsScaling {
            return Err(Error::Archive(format!(
                "expected an lpips-scaling archive, got {}",
                archive.weight_set
            )));
        }
        if archive.architecture != spec.name {
            return Err(Error::Archive(format!(
                "scaling archive is for {} but architecture is {}",
                archive.architecture, spec.name
            )));
        }
        let channels = spec.extraction_channels();
        let mut layers = Vec::with_capacity(channels.len());
        for (l, &c) in channels.iter().enumerate() {
            let name = format!("lin{l}.weight");
            let t = archive.get(&name)?;
            let ok = t.shape() == [c] || t.shape() == [1, c, 1, 1];
            if !ok {
                return Err(Error::shape(
                    "scaling",
                    format!("`{name}` has shape {:?}, expected [{c}]", t.shape()),
                ));
            }
            layers.push(t.data().iter().map(|&v| f64::from(v).max(0.0)).collect());
        }
        ScalingWeights::new(layers, "lpips")
    }

    pub fn scaled_layer(&self, l: usize, c: f64) -> Self {
        let mut out = self.clone();
        out.layers[l].iter_mut().for_each(|v| *v *= c);
        out
    }
}

/// Which layers enter the sum, and the normalization epsilon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceConfig {
    /// `None` uses every extraction layer.
    pub layers: Option<Vec<usize>>,
    pub eps: f64,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        DistanceConfig {
            layers: None,
            eps: DEFAULT_EPS,
        }
    }
}

impl DistanceConfig {
    pub fn with_layers(layers: Vec<usize>) -> Self {
        DistanceConfig {
            layers: Some(layers),
            ..Default::default()
        }
    }

    /// Resolved layer indices for a stack of `n` layers, sorted and deduplicated.
    pub fn resolve(&self, n: usize) -> Result<Vec<usize>> {
        if !(self.eps > 0.0) {
            return Err(Error::invalid(format!(
                "epsilon must be positive, got {}",
                self.eps
            )));
        }
        let mut layers = match &self.layers {
            None => (0..n).collect(),
            Some(v) => v.clone(),
        };
        layers.sort_unstable();
        layers.dedup();
        if layers.is_empty() {
            return Err(Error::invalid("layer subset is empty"));
        }
        if let Some(&bad) = layers.iter().find(|&&l| l >= n) {
            return Err(Error::invalid(format!(
                "layer {bad} out of range for a {n}-layer stack"
            )));
        }
        Ok(layers)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        self.resolve(n).map(|_| ())
    }
}

/// Divides each channel vector by `‖v‖ + eps`.
pub fn unit_normalize(stack: &FeatureStack, eps: f64) -> Result<FeatureStack> {
    if stack.normalized {
        return Err(Error::invalid("feature stack is already normalized"));
    }
    let layers = stack
        .layers
        .iter()
        .map(|t| normalize_layer(t, eps))
        .collect::<Result<_>>()?;
    Ok(FeatureStack {
        layers,
        architecture: stack.architecture,
        normalized: true,
    })
}

fn normalize_layer(t: &Tensor, eps: f64) -> Result<Tensor> {
    let (c, h, w) = t.chw("unit_normalize")?;
    let hw = h * w;
    let src = t.data();
    let mut out = vec![0f32; src.len()];
    for p in 0..hw {
        let norm = (0..c)
            .map(|k| f64::from(src[k * hw + p]).powi(2))
            .sum::<f64>()
            .sqrt();
        let denom = norm + eps;
        for k in 0..c {
            out[k * hw + p] = (f64::from(src[k * hw + p]) / denom) as f32;
        }
    }
    Tensor::new(t.shape().to_vec(), out)
}

fn check_pair(a: &FeatureStack, b: &FeatureStack, w: &ScalingWeights) -> Result<()> {
    if a.architecture != b.architecture {
        return Err(Error::invalid(format!(
            "architecture mismatch: {} vs {}",
            a.architecture, b.architecture
        )));
    }
    if !a.normalized || !b.normalized {
        return Err(Error::invalid(
            "perceptual distance needs unit-normalized feature stacks",
        ));
    }
    if a.len() != b.len() || a.len() != w.layers.len() {
        return Err(Error::shape(
            "perceptual_distance",
            format!(
                "stacks have {} and {} layers, scaling has {}",
                a.len(),
                b.len(),
                w.layers.len()
            ),
        ));
    }
    for (l, (x, y)) in a.layers.iter().zip(&b.layers).enumerate() {
        if x.shape() != y.shape() {
            return Err(Error::shape(
                "perceptual_distance",
                format!("layer {l}: {:?} vs {:?}", x.shape(), y.shape()),
            ));
        }
        let (c, _, _) = x.chw("perceptual_distance")?;
        if w.layers[l].len() != c {
            return Err(Error::shape(
                "perceptual_distance",
                format!("layer {l}: {c} channels, {} weights", w.layers[l].len()),
            ));
        }
    }
    Ok(())
}

/// Single-layer term; channel-major accumulation in a fixed order.
fn layer_term(x: &Tensor, y: &Tensor, w: &[f64]) -> f64 {
    let (c, h, wd) = x.chw("layer_term").expect("checked");
    let hw = h * wd;
    let (xs, ys) = (x.data(), y.data());
    let mut sum = 0.0;
    for (k, &wk) in w.iter().enumerate().take(c) {
        let base = k * hw;
        let mut s = 0.0;
        for p in base..base + hw {
            let d = f64::from(xs[p]) - f64::from(ys[p]);
            s += d * d;
        }
        sum += wk * wk * s;
    }
    sum / hw as f64
}

/// Each layer's contribution to the distance, for every extraction layer.
pub fn per_layer_distances(
    a: &FeatureStack,
    b: &FeatureStack,
    w: &ScalingWeights,
) -> Result<Vec<f64>> {
    check_pair(a, b, w)?;
    Ok((0..a.len())
        .map(|l| layer_term(&a.layers[l], &b.layers[l], &w.layers[l]))
        .collect())
}

pub fn perceptual_distance(
    a: &FeatureStack,
    b: &FeatureStack,
    w: &ScalingWeights,
    cfg: &DistanceConfig,
) -> Result<f64> {
    check_pair(a, b, w)?;
    let layers = cfg.resolve(a.len())?;
    Ok(layers
        .iter()
        .map(|&l| layer_term(&a.layers[l], &b.layers[l], &w.layers[l]))
        .sum())
}

/// Distance over the configured layers minus `layer`.
pub fn distance_excluding_layer(
    a: &FeatureStack,
    b: &FeatureStack,
    w: &ScalingWeights,
    cfg: &DistanceConfig,
    layer: usize,
) -> Result<f64> {
    let sub = exclude_layer(cfg, a.len(), layer)?;
    perceptual_distance(a, b, w, &sub)
}

/// `cfg` with `layer` removed; fails if `layer` is not in the subset or is its only member.
pub fn exclude_layer(cfg: &DistanceConfig, n: usize, layer: usize) -> Result<DistanceConfig> {
    let layers = cfg.resolve(n)?;
    if !layers.contains(&layer) {
        return Err(Error::invalid(format!(
            "layer {layer} is not in the layer subset {layers:?}"
        )));
    }
    let rest: Vec<usize> = layers.into_iter().filter(|&l| l != layer).collect();
    if rest.is_empty() {
        return Err(Error::invalid(format!(
            "excluding layer {layer} leaves no layers"
        )));
    }
    Ok(DistanceConfig {
        layers: Some(rest),
        eps: cfg.eps,
    })
}

/// A backbone with its weights, channel scaling and preprocessing.
#[derive(Clone, Debug)]
pub struct DeepMetric {
    pub spec: ArchitectureSpec,
    pub weights: TensorArchive,
    pub scaling: ScalingWeights,
    pub preprocess: PreprocessConfig,
    pub config: DistanceConfig,
}

impl DeepMetric {
    pub fn new(
        weights: TensorArchive,
        scaling: Option<ScalingWeights>,
        preprocess: PreprocessConfig,
        config: DistanceConfig,
    ) -> Result<Self> {
        let spec = ArchitectureSpec::get(weights.architecture)?;
        weights.validate_for(&spec)?;
        preprocess.validate()?;
        config.validate(spec.extraction_layer_count)?;
        let scaling = scaling.unwrap_or_else(|| ScalingWeights::ones(&spec));
        let channels = spec.extraction_channels();
        let ok = scaling.layers.len() == channels.len()
            && scaling
                .layers
                .iter()
                .zip(&channels)
                .all(|(v, &c)| v.len() == c);
        if !ok {
            return Err(Error::shape(
                "DeepMetric",
                format!(
                    "scaling vectors do not match {} channels {channels:?}",
                    spec.name
                ),
            ));
        }
        Ok(DeepMetric {
            spec,
            weights,
            scaling,
            preprocess,
            config,
        })
    }

    pub fn architecture(&self) -> ArchName {
        self.spec.name
    }

    /// Normalized features for one image; errors name the image.
    pub fn features(&self, image: &ImageStimulus) -> Result<FeatureStack> {
        let run = || {
            let input = prepare(image, &self.preprocess)?;
            let raw = forward_features(&input, &self.spec, &self.weights)?;
            unit_normalize(&raw, self.config.eps)
        };
        run().map_err(|e| e.for_item(image.source_id.clone()))
    }

    pub fn distance(&self, a: &ImageStimulus, b: &ImageStimulus) -> Result<f64> {
        let (fa, fb) = rayon::join(|| self.features(a), || self.features(b));
        perceptual_distance(&fa?, &fb?, &self.scaling, &self.config)
    }

    /// Features for every image, computed once each in parallel.
    pub fn feature_cache(&self, images: &[ImageStimulus]) -> Result<Vec<FeatureStack>> {
        images.par_iter().map(|im| self.features(im)).collect()
    }

    pub fn pairwise_matrix(&self, images: &[ImageStimulus]) -> Result<DistanceMatrix> {
        let ids = stimulus_ids(images)?;
        let cache = self.feature_cache(images)?;
        matrix_from_features(ids, &cache, &self.scaling, &self.config)
    }

    /// Per-layer matrices; entry `l` uses layer `l` alone.
    pub fn layer_matrices(&self, images: &[ImageStimulus]) -> Result<Vec<DistanceMatrix>> {
        let ids = stimulus_ids(images)?;
        let cache = self.feature_cache(images)?;
        layer_matrices_from_features(ids, &cache, &self.scaling)
    }
}

fn stimulus_ids(images: &[ImageStimulus]) -> Result<Vec<String>> {
    if images.len() < 2 {
        return Err(Error::invalid(format!(
            "pairwise matrix needs at least 2 images, got {}",
            images.len()
        )));
    }
    Ok(images.iter().map(|im| im.source_id.clone()).collect())
}

/// Pairwise distances over precomputed normalized stacks.
pub fn matrix_from_features(
    ids: Vec<String>,
    stacks: &[FeatureStack],
    w: &ScalingWeights,
    cfg: &DistanceConfig,
) -> Result<DistanceMatrix> {
    let n = stacks.len();
    if ids.len() != n {
        return Err(Error::invalid(format!(
            "{} ids for {n} feature stacks",
            ids.len()
        )));
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| perceptual_distance(&stacks[i], &stacks[j], w, cfg))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    DistanceMatrix::from_upper_rows(ids, &rows)
}

pub fn layer_matrices_from_features(
    ids: Vec<String>,
    stacks: &[FeatureStack],
    w: &ScalingWeights,
) -> Result<Vec<DistanceMatrix>> {
    let n = stacks.len();
    let rows: Vec<Vec<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| per_layer_distances(&stacks[i], &stacks[j], w))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let layers = stacks.first().map_or(0, FeatureStack::len);
    (0..layers)
        .map(|l| DistanceMatrix::from_fn(ids.clone(), |i, j| rows[i][j - i - 1][l]))
        .collect()
}

/// Convenience wrapper: build a [`DeepMetric`] and compute the matrix.
pub fn pairwise_matrix(
    images: &[ImageStimulus],
    weights: &TensorArchive,
    scaling: Option<&ScalingWeights>,
    preprocess: &PreprocessConfig,
    cfg: &DistanceConfig,
) -> Result<DistanceMatrix> {
    DeepMetric::new(
        weights.clone(),
        scaling.cloned(),
        preprocess.clone(),
        cfg.clone(),
    )?
    .pairwise_matrix(images)
}
