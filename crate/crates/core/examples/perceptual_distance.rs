//! Deep-feature distance between two images, with a per-layer breakdown.
//!
//! `cargo run --release --example perceptual_distance -- [a.png b.png] [archive_dir]`
//!
//! Without image arguments two generated glyphs are compared. Without an
//! archive the SqueezeNet graph runs on seeded random weights.

use vizsim::metric::{per_layer_distances, DeepMetric, DistanceConfig};
use vizsim::nn::{load_archive, random_init, ArchitectureSpec};
use vizsim::preprocess::{read_image, PreprocessConfig};
use vizsim::stimuli::{render_glyph, Glyph};

fn main() -> vizsim::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (a, b) = match args.as_slice() {
        [a, b, ..] => (read_image(a.as_ref())?, read_image(b.as_ref())?),
        _ => (
            render_glyph(Glyph::Circle, 40.0, [0, 0, 0], 128),
            render_glyph(Glyph::Square, 40.0, [0, 0, 0], 128),
        ),
    };
    let weights = match args.get(2) {
        Some(dir) => load_archive(dir)?,
        None => random_init(&ArchitectureSpec::squeezenet(), 0),
    };
    let metric = DeepMetric::new(
        weights,
        None,
        PreprocessConfig::imagenet(64),
        DistanceConfig::default(),
    )?;

    let (fa, fb) = (metric.features(&a)?, metric.features(&b)?);
    let per_layer = per_layer_distances(&fa, &fb, &metric.scaling)?;
    println!("{} vs {} ({})", a.source_id, b.source_id, metric.spec.name);
    for (l, d) in per_layer.iter().enumerate() {
        println!("  layer {l}: {d:.6}");
    }
    println!("  total:   {:.6}", metric.distance(&a, &b)?);
    Ok(())
}
