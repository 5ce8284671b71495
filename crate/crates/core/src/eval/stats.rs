//! Rank correlation, range normalization and bootstrap intervals.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DistanceMatrix;

/// Ranks starting at 1; tied values share their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid(format!(
            "correlation needs two equal-length series of ≥ 2, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("correlation of a constant series".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman correlation of the strict upper triangles, with `b` aligned to `a`'s ids.
pub fn spearman_rho(a: &DistanceMatrix, b: &DistanceMatrix) -> Result<f64> {
    if a.len() < 3 {
        return Err(Error::invalid(format!(
            "Spearman needs at least 3 items, got {}",
            a.len()
        )));
    }
    let b = b.reorder(a.ids())?;
    pearson(
        &average_ranks(&a.upper_triangle()),
        &average_ranks(&b.upper_triangle()),
    )
}

/// Affine map of the off-diagonal entries onto `[0, 1]`.
pub fn normalize01(m: &DistanceMatrix) -> Result<DistanceMatrix> {
    let upper = m.upper_triangle();
    let lo = upper.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = upper.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if upper.is_empty() || hi == lo {
        return Err(Error::Undefined(
            "cannot normalize a constant matrix".into(),
        ));
    }
    m.map_entries(|v| (v - lo) / (hi - lo))
}

/// Percentile bootstrap interval of the mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub lo: f64,
    pub mean: f64,
    pub hi: f64,
}

/// Linear-interpolation quantile of sorted data (`(n − 1)·q` positions).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let (f, c) = (h.floor() as usize, h.ceil() as usize);
    sorted[f] + (h - h.floor()) * (sorted[c] - sorted[f])
}

/// `resamples` draws of `n` indices each, taken in order with
/// `rng.gen_range(0..n)`. `mean` is the sample mean; the bounds are the
/// `(1 ± level)/2` quantiles of the resampled means.
pub fn bootstrap_ci<R: Rng>(
    samples: &[f64],
    resamples: usize,
    level: f64,
    rng: &mut R,
) -> Result<BootstrapCi> {
    if samples.len() < 2 {
        return Err(Error::invalid(format!(
            "bootstrap needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    if resamples == 0 || !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "bootstrap needs resamples > 0 and level in (0, 1), got {resamples} and {level}"
        )));
    }
    if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "bootstrap sample {bad} is not finite"
        )));
    }
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| samples[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let lo = quantile_sorted(&means, tail).min(mean);
    let hi = quantile_sorted(&means, 1.0 - tail).max(mean);
    Ok(BootstrapCi { lo, mean, hi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn m(values: &[f64]) -> DistanceMatrix {
        let ids = (0..3).map(|i| format!("s{i}")).collect();
        DistanceMatrix::from_fn(ids, |i, j| values[i + j - 1]).unwrap()
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(
            average_ranks(&[3.0, 1.0, 3.0, 2.0]),
            vec![3.5, 1.0, 3.5, 2.0]
        );
    }

    #[test]
    fn normalize_hand_case() {
        // (0,1)=2, (0,2)=4, (1,2)=6 -> 0, 0.5, 1
        let n = normalize01(&m(&[2.0, 4.0, 6.0])).unwrap();
        assert_eq!(n.upper_triangle(), vec![0.0, 0.5, 1.0]);
        assert!(normalize01(&m(&[1.0, 1.0, 1.0])).is_err());
    }

    #[test]
    fn spearman_constant_is_undefined() {
        let e = spearman_rho(&m(&[1.0, 1.0, 1.0]), &m(&[1.0, 2.0, 3.0])).unwrap_err();
        assert!(matches!(e, Error::Undefined(_)));
        assert!(
            (spearman_rho(&m(&[1.0, 2.0, 3.0]), &m(&[1.0, 4.0, 9.0])).unwrap() - 1.0).abs() < 1e-12
        );
    }

    #[test]
    fn bootstrap_constant_and_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = bootstrap_ci(&[2.0; 5], 100, 0.95, &mut rng).unwrap();
        assert_eq!((c.lo, c.mean, c.hi), (2.0, 2.0, 2.0));
        let data = [1.0, 5.0, 2.0, 8.0];
        let a = bootstrap_ci(&data, 500, 0.95, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = bootstrap_ci(&data, 500, 0.95, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.lo <= a.mean && a.mean <= a.hi);
        assert!(bootstrap_ci(&[], 10, 0.95, &mut rng).is_err());
    }
}
