//! Pixel-space baselines: MSE, SSIM and multi-scale SSIM.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DistanceMatrix;
use crate::preprocess::{resize, srgb_to_lab, srgb_to_linear, ColorSpace, ImageStimulus};

/// Color space in which MSE is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MseSpace {
    Srgb,
    Lab,
}

impl std::str::FromStr for MseSpace {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "srgb" => Ok(MseSpace::Srgb),
            "lab" => Ok(MseSpace::Lab),
            other => Err(Error::invalid(format!(
                "unknown color space `{other}` (expected srgb or lab)"
            ))),
        }
    }
}

fn same_dims(a: &ImageStimulus, b: &ImageStimulus) -> Result<()> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::shape(
            "baseline",
            format!(
                "{} is {}x{} but {} is {}x{}",
                a.source_id, a.width, a.height, b.source_id, b.width, b.height
            ),
        ));
    }
    Ok(())
}

/// Mean over pixels and channels of the squared difference. Inputs are sRGB.
pub fn mse(a: &ImageStimulus, b: &ImageStimulus, space: MseSpace) -> Result<f64> {
    same_dims(a, b)?;
    let (a, b) = match space {
        MseSpace::Srgb => (a.clone(), b.clone()),
        MseSpace::Lab => (srgb_to_lab(a)?, srgb_to_lab(b)?),
    };
    Ok(mean_sq_diff(&a.pixels, &b.pixels))
}

fn mean_sq_diff(a: &[f32], b: &[f32]) -> f64 {
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
        .sum();
    s / a.len() as f64
}

/// Single-channel image in `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "{width}x{height} plane needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, v: f64) -> Self {
        GrayImage {
            width,
            height,
            data: vec![v; width * height],
        }
    }

    /// Rec.601 luma of linearized sRGB.
    pub fn luma(img: &ImageStimulus) -> Result<Self> {
        let lin = |v: f32| match img.color_space {
            ColorSpace::Srgb => srgb_to_linear(f64::from(v)),
            ColorSpace::LinearRgb => f64::from(v),
            ColorSpace::Lab => f64::NAN,
        };
        if img.color_space == ColorSpace::Lab {
            return Err(Error::invalid("luma needs an RGB image"));
        }
        let data = img
            .pixels
            .chunks_exact(3)
            .map(|p| 0.299 * lin(p[0]) + 0.587 * lin(p[1]) + 0.114 * lin(p[2]))
            .collect();
        GrayImage::new(img.width, img.height, data)
    }

    /// 2x2 box average; odd trailing rows and columns are dropped.
    pub fn downscale2(&self) -> GrayImage {
        let (w, h) = (self.width / 2, self.height / 2);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let at = |dx: usize, dy: usize| self.data[(2 * y + dy) * self.width + 2 * x + dx];
                data.push((at(0, 0) + at(1, 0) + at(0, 1) + at(1, 1)) / 4.0);
            }
        }
        GrayImage {
            width: w,
            height: h,
            data,
        }
    }
}

/// Gaussian-window SSIM parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsimConfig {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub data_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        SsimConfig {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            data_range: 1.0,
        }
    }
}

impl SsimConfig {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.data_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.data_range).powi(2)
    }

    fn validate(&self) -> Result<()> {
        if self.window == 0
            || !(self.sigma > 0.0)
            || !(self.data_range > 0.0)
            || self.k1 < 0.0
            || self.k2 < 0.0
        {
            return Err(Error::invalid(format!(
                "invalid SSIM configuration {self:?}"
            )));
        }
        Ok(())
    }

    fn kernel(&self) -> Vec<f64> {
        let r = (self.window as f64 - 1.0) / 2.0;
        let g: Vec<f64> = (0..self.window)
            .map(|i| (-(i as f64 - r).powi(2) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let s: f64 = g.iter().sum();
        g.into_iter().map(|v| v / s).collect()
    }
}

/// Per-window luminance term `l` and contrast-structure term `cs`.
struct SsimMaps {
    l: Vec<f64>,
    cs: Vec<f64>,
}

/// Separable valid-mode Gaussian filter.
fn filter_valid(img: &GrayImage, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (w, h) = (img.width, img.height);
    let (ow, oh) = (w - n + 1, h - n + 1);
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        let row = &img.data[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = k.iter().zip(&row[x..x + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

fn ssim_maps(a: &GrayImage, b: &GrayImage, cfg: &SsimConfig) -> Result<SsimMaps> {
    cfg.validate()?;
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::shape(
            "ssim",
            format!("{}x{} vs {}x{}", a.width, a.height, b.width, b.height),
        ));
    }
    if a.width.min(a.height) < cfg.window {
        return Err(Error::UndersizedInput {
            height: a.height,
            width: a.width,
            min: cfg.window,
        });
    }
    let k = cfg.kernel();
    let prod = |f: fn(f64, f64) -> f64| GrayImage {
        width: a.width,
        height: a.height,
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    };
    let mu1 = filter_valid(a, &k);
    let mu2 = filter_valid(b, &k);
    let e11 = filter_valid(&prod(|x, _| x * x), &k);
    let e22 = filter_valid(&prod(|_, y| y * y), &k);
    let e12 = filter_valid(&prod(|x, y| x * y), &k);
    let (c1, c2) = (cfg.c1(), cfg.c2());
    let mut l = Vec::with_capacity(mu1.len());
    let mut cs = Vec::with_capacity(mu1.len());
    for i in 0..mu1.len() {
        let (m1, m2) = (mu1[i], mu2[i]);
        let s11 = e11[i] - m1 * m1;
        let s22 = e22[i] - m2 * m2;
        let s12 = e12[i] - m1 * m2;
        l.push((2.0 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1));
        cs.push((2.0 * s12 + c2) / (s11 + s22 + c2));
    }
    Ok(SsimMaps { l, cs })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean local SSIM over valid Gaussian windows.
pub fn ssim(a: &GrayImage, b: &GrayImage, cfg: &SsimConfig) -> Result<f64> {
    let m = ssim_maps(a, b, cfg)?;
    Ok(m.l.iter().zip(&m.cs).map(|(l, cs)| l * cs).sum::<f64>() / m.l.len() as f64)
}

pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

/// Multi-scale SSIM with `β_i = γ_i = w_i`; `K = weights.len()`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsSsimConfig {
    pub ssim: SsimConfig,
    pub weights: Vec<f64>,
    /// Exponent of the coarsest-scale luminance term.
    pub alpha: f64,
}

impl Default for MsSsimConfig {
    fn default() -> Self {
        MsSsimConfig::with_scales(5)
    }
}

impl MsSsimConfig {
    /// First `k` standard weights, renormalized to sum to one.
    pub fn with_scales(k: usize) -> Self {
        let k = k.clamp(1, MS_SSIM_WEIGHTS.len());
        let w = &MS_SSIM_WEIGHTS[..k];
        let s: f64 = w.iter().sum();
        MsSsimConfig {
            ssim: SsimConfig::default(),
            weights: w.iter().map(|v| v / s).collect(),
            alpha: 1.0,
        }
    }

    pub fn scales(&self) -> usize {
        self.weights.len()
    }

    pub fn min_size(&self) -> usize {
        self.ssim.window << (self.scales().max(1) - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::invalid("MS-SSIM needs at least one scale"));
        }
        let s: f64 = self.weights.iter().sum();
        if (s - 1.0).abs() > 1e-9 || self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::invalid(format!(
                "MS-SSIM weights must be nonnegative and sum to 1, got {:?}",
                self.weights
            )));
        }
        self.ssim.validate()
    }
}

fn max_feasible_scales(side: usize, window: usize) -> usize {
    let mut k = 0;
    while side >= window << k {
        k += 1;
    }
    k
}

/// `Π_{i<K} relu(mean cs_i)^{w_i} · mean(l_K^α · cs_K^{w_K})`.
///
/// The coarsest scale is combined per window so that `K = 1` is exactly SSIM.
pub fn ms_ssim(a: &GrayImage, b: &GrayImage, cfg: &MsSsimConfig) -> Result<f64> {
    cfg.validate()?;
    let k = cfg.scales();
    let side = a.width.min(a.height);
    if side < cfg.min_size() {
        return Err(Error::invalid(format!(
            "{}x{} input is too small for {k} MS-SSIM scales (needs {} px); at most {} scales fit",
            a.width,
            a.height,
            cfg.min_size(),
            max_feasible_scales(side, cfg.ssim.window)
        )));
    }
    let (mut x, mut y) = (a.clone(), b.clone());
    let mut product = 1.0;
    for (i, &w) in cfg.weights.iter().enumerate() {
        let m = ssim_maps(&x, &y, &cfg.ssim)?;
        if i + 1 < k {
            product *= mean(&m.cs).max(0.0).powf(w);
            x = x.downscale2();
            y = y.downscale2();
        } else {
            let last: Vec<f64> =
                m.l.iter()
                    .zip(&m.cs)
                    .map(|(&l, &cs)| {
                        let cs = if w == 1.0 { cs } else { cs.max(0.0).powf(w) };
                        let l = if cfg.alpha == 1.0 {
                            l
                        } else {
                            l.max(0.0).powf(cfg.alpha)
                        };
                        l * cs
                    })
                    .collect();
            product *= mean(&last);
        }
    }
    Ok(product)
}

/// Pixel-space baseline used as a distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Baseline {
    Mse {
        space: MseSpace,
    },
    /// Reported as `1 - ssim`.
    Ssim(SsimConfig),
    /// Reported as `1 - ms_ssim`.
    MsSsim(MsSsimConfig),
}

impl Baseline {
    pub fn name(&self) -> &'static str {
        match self {
            Baseline::Mse { .. } => "mse",
            Baseline::Ssim(_) => "ssim",
            Baseline::MsSsim(_) => "ms-ssim",
        }
    }

    /// Distance between two same-size sRGB images.
    pub fn distance(&self, a: &ImageStimulus, b: &ImageStimulus) -> Result<f64> {
        match self {
            Baseline::Mse { space } => mse(a, b, *space),
            Baseline::Ssim(cfg) => Ok(1.0 - ssim(&GrayImage::luma(a)?, &GrayImage::luma(b)?, cfg)?),
            Baseline::MsSsim(cfg) => {
                Ok(1.0 - ms_ssim(&GrayImage::luma(a)?, &GrayImage::luma(b)?, cfg)?)
            }
        }
    }

    /// Resizes every image to `size` and fills the pairwise matrix.
    /// Similarities become distances as `1 - s`, clamped at zero.
    pub fn pairwise_matrix(&self, images: &[ImageStimulus], size: usize) -> Result<DistanceMatrix> {
        if images.len() < 2 {
            return Err(Error::invalid(format!(
                "pairwise matrix needs at least 2 images, got {}",
                images.len()
            )));
        }
        let resized: Vec<ImageStimulus> = images
            .par_iter()
            .map(|im| resize(im, size).map_err(|e| e.for_item(im.source_id.clone())))
            .collect::<Result<_>>()?;
        let n = resized.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (i + 1..n)
                    .map(|j| self.distance(&resized[i], &resized[j]).map(|d| d.max(0.0)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let ids = images.iter().map(|im| im.source_id.clone()).collect();
        DistanceMatrix::from_upper_rows(ids, &rows)
    }
}
