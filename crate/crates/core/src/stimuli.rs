//! Rendered visual-channel stimuli: filled glyphs on a white canvas.
//!
//! Palette values live in `data/palettes.json`; geometry lives here. A glyph
//! is described in unit coordinates (y up, inscribed in the unit circle) and
//! scaled by a pixel radius. Coverage is estimated by supersampling.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Cursor;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::VisualChannel;
use crate::preprocess::{ColorSpace, ImageStimulus};

const PALETTE_DATA: &str = include_str!("../data/palettes.json");
const SUPERSAMPLE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Glyph {
    TriangleRight,
    Star,
    Circle,
    Square,
    Plus,
    Cross,
    Diamond,
    TriangleUp,
    TriangleLeft,
    TriangleDown,
}

impl Glyph {
    pub const ALL: [Glyph; 10] = [
        Glyph::TriangleRight,
        Glyph::Star,
        Glyph::Circle,
        Glyph::Square,
        Glyph::Plus,
        Glyph::Cross,
        Glyph::Diamond,
        Glyph::TriangleUp,
        Glyph::TriangleLeft,
        Glyph::TriangleDown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Glyph::TriangleRight => "triangle-right",
            Glyph::Star => "star",
            Glyph::Circle => "circle",
            Glyph::Square => "square",
            Glyph::Plus => "plus",
            Glyph::Cross => "cross",
            Glyph::Diamond => "diamond",
            Glyph::TriangleUp => "triangle-up",
            Glyph::TriangleLeft => "triangle-left",
            Glyph::TriangleDown => "triangle-down",
        }
    }

    /// Base outline and the rotation (radians, counter-clockwise) applied to it.
    fn outline(self) -> (Outline, f64) {
        match self {
            Glyph::TriangleRight => (Outline::Polygon(triangle()), 0.0),
            Glyph::TriangleUp => (Outline::Polygon(triangle()), FRAC_PI_2),
            Glyph::TriangleLeft => (Outline::Polygon(triangle()), PI),
            Glyph::TriangleDown => (Outline::Polygon(triangle()), 3.0 * FRAC_PI_2),
            Glyph::Plus => (Outline::Polygon(plus()), 0.0),
            Glyph::Cross => (Outline::Polygon(plus()), PI / 4.0),
            Glyph::Star => (Outline::Polygon(star()), 0.0),
            Glyph::Diamond => (
                Outline::Polygon(vec![(0.0, 1.0), (-0.7, 0.0), (0.0, -1.0), (0.7, 0.0)]),
                0.0,
            ),
            Glyph::Circle => (Outline::Circle, 0.0),
            Glyph::Square => (Outline::PixelSquare, 0.0),
        }
    }
}

impl std::fmt::Display for Glyph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Glyph {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Glyph::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown glyph `{s}`")))
    }
}

enum Outline {
    Polygon(Vec<(f64, f64)>),
    Circle,
    /// Axis-aligned square snapped to whole pixels, so its fill has no partial coverage.
    PixelSquare,
}

fn triangle() -> Vec<(f64, f64)> {
    (0..3)
        .map(|k| polar(1.0, 2.0 * PI * k as f64 / 3.0))
        .collect()
}

fn star() -> Vec<(f64, f64)> {
    let inner = (PI / 10.0).sin() / (3.0 * PI / 10.0).sin();
    (0..10)
        .map(|k| {
            polar(
                if k % 2 == 0 { 1.0 } else { inner },
                FRAC_PI_2 + PI * k as f64 / 5.0,
            )
        })
        .collect()
}

fn plus() -> Vec<(f64, f64)> {
    let t = 0.3;
    let l = (1.0f64 - t * t).sqrt();
    vec![
        (t, t),
        (t, l),
        (-t, l),
        (-t, t),
        (-l, t),
        (-l, -t),
        (-t, -t),
        (-t, -l),
        (t, -l),
        (t, -t),
        (l, -t),
        (l, t),
    ]
}

fn polar(r: f64, a: f64) -> (f64, f64) {
    (r * a.cos(), r * a.sin())
}

fn rotate((x, y): (f64, f64), a: f64) -> (f64, f64) {
    let (s, c) = a.sin_cos();
    (x * c - y * s, x * s + y * c)
}

/// Nonzero-winding point-in-polygon test.
fn inside_polygon(p: (f64, f64), poly: &[(f64, f64)]) -> bool {
    let mut winding = 0i32;
    for k in 0..poly.len() {
        let (a, b) = (poly[k], poly[(k + 1) % poly.len()]);
        let cross = (b.0 - a.0) * (p.1 - a.1) - (p.0 - a.0) * (b.1 - a.1);
        if a.1 <= p.1 {
            if b.1 > p.1 && cross > 0.0 {
                winding += 1;
            }
        } else if b.1 <= p.1 && cross < 0.0 {
            winding -= 1;
        }
    }
    winding != 0
}

pub fn parse_hex(hex: &str) -> Result<[u8; 3]> {
    let h = hex.strip_prefix('#').unwrap_or(hex);
    if h.len() != 6 {
        return Err(Error::invalid(format!("bad color `{hex}`")));
    }
    let mut out = [0u8; 3];
    for (i, o) in out.iter_mut().enumerate() {
        *o = u8::from_str_radix(&h[2 * i..2 * i + 2], 16)
            .map_err(|_| Error::invalid(format!("bad color `{hex}`")))?;
    }
    Ok(out)
}

pub fn to_hex(c: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Renders `glyph` centered on a white `canvas x canvas` image, with an extra
/// counter-clockwise rotation `angle`.
pub fn render_glyph_rotated(
    glyph: Glyph,
    radius: f64,
    color: [u8; 3],
    canvas: usize,
    angle: f64,
    id: &str,
) -> ImageStimulus {
    let (outline, base) = glyph.outline();
    let c = canvas as f64 / 2.0;
    let coverage: Box<dyn Fn(f64, f64) -> bool> = match outline {
        Outline::Circle => {
            Box::new(move |x, y| (x - c).powi(2) + (y - c).powi(2) <= radius * radius)
        }
        Outline::PixelSquare => {
            let h = (radius / 2f64.sqrt()).round();
            Box::new(move |x, y| (x - c).abs() < h && (y - c).abs() < h)
        }
        Outline::Polygon(pts) => {
            let poly: Vec<(f64, f64)> = pts
                .into_iter()
                .map(|p| {
                    let (x, y) = rotate(p, base + angle);
                    (c + radius * x, c - radius * y)
                })
                .collect();
            Box::new(move |x, y| inside_polygon((x, y), &poly))
        }
    };
    let s = SUPERSAMPLE;
    let total = (s * s) as f64;
    let lo = (c - radius - 1.0).floor().max(0.0) as usize;
    let hi = ((c + radius + 1.0).ceil() as usize).min(canvas);
    let mut pixels = vec![1.0f32; canvas * canvas * 3];
    for py in lo..hi {
        for px in lo..hi {
            let mut hits = 0usize;
            for sy in 0..s {
                for sx in 0..s {
                    let x = px as f64 + (sx as f64 + 0.5) / s as f64;
                    let y = py as f64 + (sy as f64 + 0.5) / s as f64;
                    hits += usize::from(coverage(x, y));
                }
            }
            if hits == 0 {
                continue;
            }
            let a = hits as f64 / total;
            let i = (py * canvas + px) * 3;
            for ch in 0..3 {
                let v = a * f64::from(color[ch]) + (1.0 - a) * 255.0;
                pixels[i + ch] = (v.round() / 255.0) as f32;
            }
        }
    }
    ImageStimulus {
        width: canvas,
        height: canvas,
        pixels,
        color_space: ColorSpace::Srgb,
        source_id: id.to_string(),
    }
}

pub fn render_glyph(glyph: Glyph, radius: f64, color: [u8; 3], canvas: usize) -> ImageStimulus {
    render_glyph_rotated(glyph, radius, color, canvas, 0.0, glyph.as_str())
}

#[derive(Debug, Deserialize)]
struct PaletteData {
    version: u32,
    canvas: usize,
    background: String,
    glyph_color: String,
    base_glyph_diameter: f64,
    colors: ColorData,
    shapes: ShapeData,
    sizes: SizeData,
    size_color: SizeColorData,
}

#[derive(Debug, Deserialize)]
struct ColorData {
    values: Vec<String>,
    glyph: Glyph,
}

#[derive(Debug, Deserialize)]
struct ShapeData {
    values: Vec<Glyph>,
}

#[derive(Debug, Deserialize)]
struct SizeData {
    glyph: Glyph,
    steps: usize,
}

#[derive(Debug, Deserialize)]
struct NamedColor {
    name: String,
    hex: String,
}

#[derive(Debug, Deserialize)]
struct SizeColorData {
    size_indices: Vec<usize>,
    colors: Vec<NamedColor>,
    glyph: Glyph,
}

fn palette_data() -> Result<PaletteData> {
    let d: PaletteData = serde_json::from_str(PALETTE_DATA)
        .map_err(|e| Error::invalid(format!("palette data: {e}")))?;
    if d.version != 1 || d.background != "#ffffff" {
        return Err(Error::invalid(
            "palette data has an unsupported version or background",
        ));
    }
    Ok(d)
}

/// One stimulus of a palette.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaletteEntry {
    pub label: String,
    pub glyph: Glyph,
    /// Glyph radius as a fraction of the canvas side.
    pub radius_frac: f64,
    pub color: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaletteSpec {
    pub channel: VisualChannel,
    pub canvas: usize,
    pub background: String,
    pub data_version: u32,
    pub entries: Vec<PaletteEntry>,
}

/// Radius fraction of size step `i` in `1..=steps`: area grows linearly with `i`.
pub fn size_radius_frac(base_diameter: f64, i: usize, steps: usize) -> f64 {
    base_diameter / 2.0 * (i as f64 / steps as f64).sqrt()
}

impl PaletteSpec {
    /// The standard palette for `channel` at the data file's canvas size.
    pub fn standard(channel: VisualChannel) -> Result<Self> {
        let d = palette_data()?;
        PaletteSpec::standard_with_canvas(channel, d.canvas)
    }

    pub fn standard_with_canvas(channel: VisualChannel, canvas: usize) -> Result<Self> {
        let d = palette_data()?;
        let base = d.base_glyph_diameter / 2.0;
        let entry = |label: String, glyph, radius_frac, color: &str| PaletteEntry {
            label,
            glyph,
            radius_frac,
            color: color.to_string(),
        };
        let entries = match channel {
            VisualChannel::Color => d
                .colors
                .values
                .iter()
                .map(|c| entry(c.clone(), d.colors.glyph, base, c))
                .collect(),
            VisualChannel::Shape => d
                .shapes
                .values
                .iter()
                .map(|g| entry(g.to_string(), *g, base, &d.glyph_color))
                .collect(),
            VisualChannel::Size => (1..=d.sizes.steps)
                .map(|i| {
                    entry(
                        format!("size-{i}"),
                        d.sizes.glyph,
                        size_radius_frac(d.base_glyph_diameter, i, d.sizes.steps),
                        &d.glyph_color,
                    )
                })
                .collect(),
            VisualChannel::SizeColor => d
                .size_color
                .colors
                .iter()
                .flat_map(|c| {
                    d.size_color.size_indices.iter().map(move |&i| {
                        let r = size_radius_frac(d.base_glyph_diameter, i, d.sizes.steps);
                        (format!("{}-size-{i}", c.name), r, c.hex.clone())
                    })
                })
                .map(|(label, r, hex)| entry(label, d.size_color.glyph, r, &hex))
                .collect(),
        };
        let spec = PaletteSpec {
            channel,
            canvas,
            background: d.background,
            data_version: d.version,
            entries,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.canvas < 64 {
            return Err(Error::invalid(format!(
                "canvas {} is below the 64 px minimum",
                self.canvas
            )));
        }
        if self.entries.len() != self.channel.palette_len() {
            return Err(Error::invalid(format!(
                "{} palette needs {} values, has {}",
                self.channel,
                self.channel.palette_len(),
                self.entries.len()
            )));
        }
        for e in &self.entries {
            parse_hex(&e.color)?;
            if !(e.radius_frac > 0.0 && e.radius_frac <= 0.4) {
                return Err(Error::invalid(format!(
                    "{}: radius fraction {} leaves less than a 10% margin",
                    e.label, e.radius_frac
                )));
            }
        }
        Ok(())
    }
}

/// Renders every entry; stimulus ids are the 0-based indices.
pub fn gen_palette(spec: &PaletteSpec) -> Result<Vec<ImageStimulus>> {
    spec.validate()?;
    spec.entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let color = parse_hex(&e.color)?;
            Ok(render_glyph_rotated(
                e.glyph,
                e.radius_frac * spec.canvas as f64,
                color,
                spec.canvas,
                0.0,
                &i.to_string(),
            ))
        })
        .collect()
}

/// 8-bit RGB PNG bytes with fixed encoder settings.
pub fn encode_png(img: &ImageStimulus) -> Result<Vec<u8>> {
    let bytes: Vec<u8> = img
        .pixels
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, bytes)
        .ok_or_else(|| Error::invalid("pixel buffer does not match dimensions"))?;
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| Error::invalid(format!("PNG encode: {e}")))?;
    Ok(out.into_inner())
}

/// Writes `<out>/<channel>/<index>.png` and `<out>/<channel>/palette.json`.
pub fn write_palette(spec: &PaletteSpec, out: &Path) -> Result<Vec<PathBuf>> {
    let dir = out.join(spec.channel.as_str());
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut written = Vec::new();
    for img in gen_palette(spec)? {
        let path = dir.join(format!("{}.png", img.source_id));
        std::fs::write(&path, encode_png(&img)?).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    let manifest = dir.join("palette.json");
    let mut json = serde_json::to_string_pretty(spec).expect("palette spec serializes");
    json.push('\n');
    std::fs::write(&manifest, json).map_err(|e| Error::io(&manifest, e))?;
    written.push(manifest);
    Ok(written)
}

/// Count of pixels that differ from white.
pub fn ink_pixels(img: &ImageStimulus) -> usize {
    img.pixels
        .chunks_exact(3)
        .filter(|p| p.iter().any(|&v| v < 1.0))
        .count()
}
