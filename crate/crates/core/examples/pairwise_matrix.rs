//! Pairwise distance matrix over a directory of images, written as CSV.
//!
//! `cargo run --release --example pairwise_matrix -- [image_dir] [out.csv]`
//!
//! Defaults to the generated size palette and random AlexNet weights.

use vizsim::eval::VisualChannel;
use vizsim::metric::{DeepMetric, DistanceConfig};
use vizsim::nn::{random_init, ArchitectureSpec};
use vizsim::preprocess::{load_image_dir, PreprocessConfig};
use vizsim::stimuli::{gen_palette, PaletteSpec};

fn main() -> vizsim::Result<()> {
    let mut args = std::env::args().skip(1);
    let images = match args.next() {
        Some(dir) => load_image_dir(dir.as_ref())?,
        None => gen_palette(&PaletteSpec::standard(VisualChannel::Size)?)?,
    };
    let spec = ArchitectureSpec::alexnet();
    let metric = DeepMetric::new(
        random_init(&spec, 1),
        None,
        PreprocessConfig::imagenet(64),
        DistanceConfig::default(),
    )?;
    let m = metric.pairwise_matrix(&images)?;
    match args.next() {
        Some(out) => {
            m.write_csv(out.as_ref())?;
            println!("{0}x{0} matrix written to {out}", m.len());
        }
        None => print!("{}", m.to_csv_string()),
    }
    Ok(())
}
