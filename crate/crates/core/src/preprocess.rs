//! Image decoding, color conversion, resizing and input normalization.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColorSpace {
    Srgb,
    LinearRgb,
    Lab,
}

/// An `H x W x 3` image with interleaved channels.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageStimulus {
    pub width: usize,
    pub height: usize,
    /// Row-major, three values per pixel.
    pub pixels: Vec<f32>,
    pub color_space: ColorSpace,
    pub source_id: String,
}

impl ImageStimulus {
    pub fn new(
        width: usize,
        height: usize,
        pixels: Vec<f32>,
        color_space: ColorSpace,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        if pixels.len() != width * height * 3 {
            return Err(Error::invalid(format!(
                "{width}x{height} image needs {} values, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        Ok(ImageStimulus {
            width,
            height,
            pixels,
            color_space,
            source_id: source_id.into(),
        })
    }

    pub fn filled(
        width: usize,
        height: usize,
        rgb: [f32; 3],
        source_id: impl Into<String>,
    ) -> Self {
        let pixels = std::iter::repeat_n(rgb, width * height).flatten().collect();
        ImageStimulus {
            width,
            height,
            pixels,
            color_space: ColorSpace::Srgb,
            source_id: source_id.into(),
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    fn map_pixels(&self, space: ColorSpace, f: impl Fn([f32; 3]) -> [f32; 3]) -> ImageStimulus {
        let pixels = self
            .pixels
            .chunks_exact(3)
            .flat_map(|p| f([p[0], p[1], p[2]]))
            .collect();
        ImageStimulus {
            pixels,
            color_space: space,
            ..self.clone()
        }
    }
}

/// Decodes PNG or JPEG bytes into an sRGB stimulus in `[0, 1]`,
/// compositing any alpha channel over opaque white.
pub fn decode_image(bytes: &[u8], source_id: &str) -> Result<ImageStimulus> {
    let img = image::load_from_memory(bytes).map_err(|e| Error::Decode {
        source_id: source_id.to_string(),
        reason: e.to_string(),
    })?;
    let channels = img.color().channel_count();
    if !(1..=4).contains(&channels) {
        return Err(Error::Decode {
            source_id: source_id.to_string(),
            reason: format!("unexpected channel count {channels}"),
        });
    }
    let rgba = img.to_rgba32f();
    let (width, height) = (rgba.width() as usize, rgba.height() as usize);
    let mut pixels = Vec::with_capacity(width * height * 3);
    for p in rgba.pixels() {
        let a = p.0[3].clamp(0.0, 1.0);
        for c in &p.0[..3] {
            pixels.push(c.clamp(0.0, 1.0) * a + (1.0 - a));
        }
    }
    ImageStimulus::new(width, height, pixels, ColorSpace::Srgb, source_id)
}

pub fn read_image(path: &Path) -> Result<ImageStimulus> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path.file_stem().map_or_else(
        || path.display().to_string(),
        |s| s.to_string_lossy().into_owned(),
    );
    decode_image(&bytes, &id).map_err(|e| match e {
        Error::Decode { reason, .. } => Error::Decode {
            source_id: path.display().to_string(),
            reason,
        },
        other => other,
    })
}

/// Image files (`png`, `jpg`, `jpeg`) directly inside `dir`, ordered by
/// numeric stem when every stem is an integer and by name otherwise.
pub fn list_images(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) {
            files.push(path);
        }
    }
    let stem = |p: &std::path::PathBuf| {
        p.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    let numeric: Option<Vec<u64>> = files.iter().map(|p| stem(p).parse().ok()).collect();
    match numeric {
        Some(keys) => {
            let mut pairs: Vec<_> = keys.into_iter().zip(files).collect();
            pairs.sort();
            Ok(pairs.into_iter().map(|(_, p)| p).collect())
        }
        None => {
            files.sort();
            Ok(files)
        }
    }
}

/// Decodes every image in `dir`. All failing files are listed in one error.
pub fn load_image_dir(dir: &Path) -> Result<Vec<ImageStimulus>> {
    let files = list_images(dir)?;
    let mut images = Vec::with_capacity(files.len());
    let mut failures = Vec::new();
    for path in &files {
        match read_image(path) {
            Ok(img) => images.push(img),
            Err(e) => failures.push(e.to_string()),
        }
    }
    if !failures.is_empty() {
        return Err(Error::invalid(format!(
            "{} file(s) failed to decode:\n  {}",
            failures.len(),
            failures.join("\n  ")
        )));
    }
    Ok(images)
}

/// Per-output-sample weights of a separable triangle filter.
///
/// On downscale the filter support stretches by the scale factor, which
/// averages every input pixel the output footprint covers.
fn triangle_weights(n_in: usize, n_out: usize) -> Vec<(usize, Vec<f32>)> {
    let scale = n_in as f64 / n_out as f64;
    let stretch = scale.max(1.0);
    (0..n_out)
        .map(|i| {
            let center = (i as f64 + 0.5) * scale;
            let lo = ((center - stretch).floor().max(0.0)) as usize;
            let hi = ((center + stretch).ceil() as usize).min(n_in);
            let mut w: Vec<f64> = (lo..hi)
                .map(|j| (1.0 - ((j as f64 + 0.5 - center) / stretch).abs()).max(0.0))
                .collect();
            let sum: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= sum);
            (lo, w.into_iter().map(|v| v as f32).collect())
        })
        .collect()
}

/// Resamples to `target x target` with an antialiased bilinear filter.
pub fn resize(stimulus: &ImageStimulus, target: usize) -> Result<ImageStimulus> {
    if target == 0 {
        return Err(Error::invalid("resize target must be at least 1"));
    }
    let (w, h) = (stimulus.width, stimulus.height);
    if w == target && h == target {
        return Ok(stimulus.clone());
    }
    let wx = triangle_weights(w, target);
    let wy = triangle_weights(h, target);
    // Horizontal pass: h rows x target columns.
    let mut tmp = vec![0.0f32; h * target * 3];
    for y in 0..h {
        for (x, (lo, ws)) in wx.iter().enumerate() {
            for c in 0..3 {
                tmp[(y * target + x) * 3 + c] = ws
                    .iter()
                    .enumerate()
                    .map(|(k, wv)| wv * stimulus.pixels[(y * w + lo + k) * 3 + c])
                    .sum();
            }
        }
    }
    let mut out = vec![0.0f32; target * target * 3];
    for (y, (lo, ws)) in wy.iter().enumerate() {
        for x in 0..target {
            for c in 0..3 {
                out[(y * target + x) * 3 + c] = ws
                    .iter()
                    .enumerate()
                    .map(|(k, wv)| wv * tmp[((lo + k) * target + x) * 3 + c])
                    .sum();
            }
        }
    }
    ImageStimulus::new(
        target,
        target,
        out,
        stimulus.color_space,
        stimulus.source_id.clone(),
    )
}

/// Canonical ImageNet-1K channel statistics for `[0, 1]` inputs.
pub const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub target_size: usize,
    /// Subtracted from inputs already mapped to `[-1, 1]`.
    pub shift: [f32; 3],
    pub scale: [f32; 3],
}

impl PreprocessConfig {
    /// ImageNet statistics re-expressed for inputs in `[-1, 1]`:
    /// `shift = 2 * mean - 1`, `scale = 2 * std`.
    pub fn imagenet(target_size: usize) -> Self {
        PreprocessConfig {
            target_size,
            shift: IMAGENET_MEAN.map(|m| 2.0 * m - 1.0),
            scale: IMAGENET_STD.map(|s| 2.0 * s),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_size < crate::nn::forward::MIN_INPUT_SIZE {
            return Err(Error::invalid(format!(
                "target size {} below minimum {}",
                self.target_size,
                crate::nn::forward::MIN_INPUT_SIZE
            )));
        }
        if self.scale.iter().any(|&s| s <= 0.0 || !s.is_finite()) {
            return Err(Error::invalid(format!(
                "scale components must be positive: {:?}",
                self.scale
            )));
        }
        Ok(())
    }
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig::imagenet(64)
    }
}

/// Maps an sRGB stimulus to a channels-first network input. Does not resize.
pub fn to_model_input(stimulus: &ImageStimulus, config: &PreprocessConfig) -> Result<Tensor> {
    if stimulus.color_space != ColorSpace::Srgb {
        return Err(Error::invalid(format!(
            "{}: model input must be sRGB, got {:?}",
            stimulus.source_id, stimulus.color_space
        )));
    }
    let (w, h) = (stimulus.width, stimulus.height);
    let mut data = vec![0.0f32; 3 * h * w];
    for (i, px) in stimulus.pixels.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * h * w + i] = (2.0 * px[c] - 1.0 - config.shift[c]) / config.scale[c];
        }
    }
    Tensor::new(vec![3, h, w], data)
}

/// Resize to the configured size, then normalize.
pub fn prepare(stimulus: &ImageStimulus, config: &PreprocessConfig) -> Result<Tensor> {
    config.validate()?;
    to_model_input(&resize(stimulus, config.target_size)?, config)
}

pub fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

/// D65 reference white.
pub const WHITE_D65: [f64; 3] = [0.95047, 1.0, 1.08883];

const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412453, 0.357580, 0.180423],
    [0.212671, 0.715160, 0.072169],
    [0.019334, 0.119193, 0.950227],
];

pub fn rgb_to_lab(rgb: [f32; 3]) -> [f32; 3] {
    let lin = rgb.map(|v| srgb_to_linear(v as f64));
    let xyz: Vec<f64> = SRGB_TO_XYZ
        .iter()
        .map(|row| row.iter().zip(&lin).map(|(m, v)| m * v).sum())
        .collect();
    const DELTA: f64 = 6.0 / 29.0;
    let f = |t: f64| {
        if t > DELTA.powi(3) {
            t.cbrt()
        } else {
            t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
        }
    };
    let fx = f(xyz[0] / WHITE_D65[0]);
    let fy = f(xyz[1] / WHITE_D65[1]);
    let fz = f(xyz[2] / WHITE_D65[2]);
    [
        (116.0 * fy - 16.0) as f32,
        (500.0 * (fx - fy)) as f32,
        (200.0 * (fy - fz)) as f32,
    ]
}

/// sRGB -> linear RGB -> XYZ (D65) -> CIELAB.
pub fn srgb_to_lab(stimulus: &ImageStimulus) -> Result<ImageStimulus> {
    if stimulus.color_space != ColorSpace::Srgb {
        return Err(Error::invalid("LAB conversion expects sRGB input"));
    }
    Ok(stimulus.map_pixels(ColorSpace::Lab, rgb_to_lab))
}

pub fn srgb_to_linear_rgb(stimulus: &ImageStimulus) -> Result<ImageStimulus> {
    if stimulus.color_space != ColorSpace::Srgb {
        return Err(Error::invalid("linearization expects sRGB input"));
    }
    Ok(stimulus.map_pixels(ColorSpace::LinearRgb, |p| {
        p.map(|v| srgb_to_linear(v as f64) as f32)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn png_bytes(img: image::DynamicImage) -> Vec<u8> {
        let mut buf = std::io::Cursor::new(Vec::new());
        img.write_to(&mut buf, image::ImageFormat::Png).unwrap();
        buf.into_inner()
    }

    #[test]
    fn decode_white_and_black() {
        let white = image::RgbImage::from_pixel(1, 1, image::Rgb([255, 255, 255]));
        let s = decode_image(&png_bytes(white.into()), "w").unwrap();
        assert_eq!(s.pixel(0, 0), [1.0, 1.0, 1.0]);
        let black = image::RgbImage::from_pixel(1, 1, image::Rgb([0, 0, 0]));
        assert_eq!(
            decode_image(&png_bytes(black.into()), "b")
                .unwrap()
                .pixel(0, 0),
            [0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn decode_composites_alpha_over_white() {
        let red = image::RgbaImage::from_pixel(1, 1, image::Rgba([255, 0, 0, 128]));
        let p = decode_image(&png_bytes(red.into()), "r")
            .unwrap()
            .pixel(0, 0);
        // a = 128/255; red stays 1, green/blue become 1 - a.
        let a = 128.0f32 / 255.0;
        assert!((p[0] - 1.0).abs() < 1e-6);
        assert!((p[1] - (1.0 - a)).abs() < 1e-6 && (p[2] - (1.0 - a)).abs() < 1e-6);
        assert!((p[1] - 0.5).abs() < 0.01);
    }

    #[test]
    fn decode_garbage_fails() {
        assert!(matches!(
            decode_image(b"not an image", "x"),
            Err(Error::Decode { .. })
        ));
    }

    #[test]
    fn resize_constant_and_identity() {
        let c = ImageStimulus::filled(37, 37, [0.2, 0.4, 0.6], "c");
        let r = resize(&c, 64).unwrap();
        assert!(r
            .pixels
            .chunks(3)
            .all(|p| (p[0] - 0.2).abs() < 1e-6 && (p[2] - 0.6).abs() < 1e-6));
        let r = resize(&c, 5).unwrap();
        assert!(r.pixels.chunks(3).all(|p| (p[1] - 0.4).abs() < 1e-6));
    }

    #[test]
    fn checkerboard_to_single_pixel_is_mean() {
        let px = vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.5, 0.0, 0.0, 0.25, 1.0];
        let s = ImageStimulus::new(2, 2, px, ColorSpace::Srgb, "cb").unwrap();
        let r = resize(&s, 1).unwrap();
        let expect = [0.5, 0.4375, 0.5];
        for (got, want) in r.pixels.iter().zip(expect) {
            assert!((got - want).abs() < 1e-6, "{:?}", r.pixels);
        }
    }

    #[test]
    fn normalization_triples() {
        let cfg = PreprocessConfig::imagenet(64);
        let shift = [-0.030, -0.088, -0.188];
        let scale = [0.458, 0.448, 0.450];
        for c in 0..3 {
            assert!((cfg.shift[c] - shift[c]).abs() < 1e-6);
            assert!((cfg.scale[c] - scale[c]).abs() < 1e-6);
        }
    }

    #[test]
    fn channel_mean_maps_to_zero() {
        let s = ImageStimulus::filled(2, 2, IMAGENET_MEAN, "m");
        let t = to_model_input(&s, &PreprocessConfig::imagenet(64)).unwrap();
        assert!(t.data().iter().all(|v| v.abs() < 1e-6), "{:?}", t.data());
    }

    #[test]
    fn model_input_requires_srgb() {
        let s = srgb_to_lab(&ImageStimulus::filled(2, 2, [0.5; 3], "m")).unwrap();
        assert!(to_model_input(&s, &PreprocessConfig::default()).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(PreprocessConfig::imagenet(32).validate().is_err());
        let mut c = PreprocessConfig::imagenet(224);
        c.validate().unwrap();
        c.scale[1] = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn lab_reference_points() {
        let w = rgb_to_lab([1.0, 1.0, 1.0]);
        assert!(
            (w[0] - 100.0).abs() < 1e-3 && w[1].abs() < 1e-2 && w[2].abs() < 1e-2,
            "{w:?}"
        );
        assert_eq!(rgb_to_lab([0.0; 3])[0], 0.0);
        // Reference value from an independent conversion of sRGB 0.5 gray.
        let g = rgb_to_lab([0.5; 3]);
        assert!((g[0] - 53.3890).abs() < 1e-2, "{g:?}");
    }
}
