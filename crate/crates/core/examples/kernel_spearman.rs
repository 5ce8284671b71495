//! Rank correlation between a model matrix and a perceptual kernel.
//!
//! `cargo run --release --example kernel_spearman -- [kernel.csv]`
//!
//! The model side is the size palette under random AlexNet weights. Without
//! a kernel file, a stand-in kernel of normalized size-step differences is used.

use vizsim::eval::{normalize01, spearman_rho, VisualChannel};
use vizsim::metric::{DeepMetric, DistanceConfig};
use vizsim::nn::{random_init, ArchitectureSpec};
use vizsim::preprocess::PreprocessConfig;
use vizsim::stimuli::{gen_palette, PaletteSpec};
use vizsim::DistanceMatrix;

fn main() -> vizsim::Result<()> {
    let images = gen_palette(&PaletteSpec::standard(VisualChannel::Size)?)?;
    let ids: Vec<String> = images.iter().map(|im| im.source_id.clone()).collect();
    let kernel = match std::env::args().nth(1) {
        Some(path) => DistanceMatrix::read_csv(path.as_ref())?,
        None => DistanceMatrix::from_fn(ids, |i, j| (i as f64 - j as f64).abs() / 9.0)?,
    };
    let metric = DeepMetric::new(
        random_init(&ArchitectureSpec::alexnet(), 0),
        None,
        PreprocessConfig::imagenet(64),
        DistanceConfig::default(),
    )?;
    let model = metric.pairwise_matrix(&images)?;
    let rho = spearman_rho(&normalize01(&kernel)?, &normalize01(&model)?)?;
    println!("spearman rho = {rho:.4}");
    Ok(())
}
