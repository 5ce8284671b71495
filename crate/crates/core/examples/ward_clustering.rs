//! Ward clustering of a distance matrix and a flat cut at `k` clusters.
//!
//! `cargo run --example ward_clustering -- [matrix.csv] [k]`
//!
//! Without a matrix, three noisy groups of points on a line are clustered.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vizsim::eval::{cut_k, hac_ward};
use vizsim::DistanceMatrix;

fn main() -> vizsim::Result<()> {
    let mut args = std::env::args().skip(1);
    let (m, k) = match args.next() {
        Some(path) => (
            DistanceMatrix::read_csv(path.as_ref())?,
            args.next().map_or(3, |k| k.parse().unwrap_or(3)),
        ),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let pts: Vec<f64> = (0..12)
                .map(|i| (i % 3) as f64 * 10.0 + rng.gen_range(0.0..1.0))
                .collect();
            let ids = (0..12).map(|i| format!("p{i}")).collect();
            (
                DistanceMatrix::from_fn(ids, |i, j| (pts[i] - pts[j]).abs())?,
                3,
            )
        }
    };
    let tree = hac_ward(&m)?;
    for (s, merge) in tree.merges.iter().enumerate() {
        println!(
            "merge {s:>2}: {:>2} + {:>2} at {:.4} (size {})",
            merge.left, merge.right, merge.height, merge.size
        );
    }
    let labels = cut_k(&tree, k)?;
    print!("{}", labels.to_csv_string());
    Ok(())
}
