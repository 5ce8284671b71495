//! Random-weight ablation: cluster agreement across seeded random networks,
//! summarized with percentile bootstrap intervals.
//!
//! `cargo run --release --example random_ablation -- [trials]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vizsim::eval::{bootstrap_ci, cut_k, hac_ward, ClusterLabels, ClusterScores, VisualChannel};
use vizsim::metric::{DeepMetric, DistanceConfig};
use vizsim::nn::{random_init, ArchitectureSpec};
use vizsim::preprocess::PreprocessConfig;
use vizsim::stimuli::{gen_palette, PaletteSpec};

fn main() -> vizsim::Result<()> {
    let trials: u64 = std::env::args()
        .nth(1)
        .and_then(|t| t.parse().ok())
        .unwrap_or(5);
    let images = gen_palette(&PaletteSpec::standard(VisualChannel::SizeColor)?)?;
    let ids: Vec<String> = images.iter().map(|im| im.source_id.clone()).collect();
    // Palette order is color-major: four colors, four sizes each.
    let by_color = ClusterLabels::new(ids, (0..16).map(|i| i / 4).collect())?;

    let spec = ArchitectureSpec::squeezenet();
    let mut ari = Vec::new();
    for seed in 0..trials {
        let metric = DeepMetric::new(
            random_init(&spec, seed),
            None,
            PreprocessConfig::imagenet(64),
            DistanceConfig::default(),
        )?;
        let labels = cut_k(&hac_ward(&metric.pairwise_matrix(&images)?)?, 4)?;
        let s = ClusterScores::compute(&by_color, &labels)?;
        println!("seed {seed}: ari {:.4} nmi {:.4}", s.ari, s.nmi);
        ari.push(s.ari);
    }
    let ci = bootstrap_ci(&ari, 1000, 0.95, &mut ChaCha8Rng::seed_from_u64(0))?;
    println!(
        "ari mean {:.4}, 95% CI [{:.4}, {:.4}]",
        ci.mean, ci.lo, ci.hi
    );
    Ok(())
}
