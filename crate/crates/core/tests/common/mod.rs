//! Independent reference implementations shared by the integration tests.
//! Each oracle recomputes a result the slow, obvious way.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use vizsim::nn::{ArchName, FeatureStack};
use vizsim::{DistanceMatrix, Tensor};

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0f32..1.0))
}

/// Six nested loops, `f64` accumulation.
pub fn naive_conv(x: &Tensor, w: &Tensor, b: Option<&Tensor>, stride: usize, pad: usize) -> Tensor {
    let (c_in, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (c_out, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let xv = |c: usize, i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i as usize >= h || j as usize >= wd {
            0.0
        } else {
            f64::from(x.data()[(c * h + i as usize) * wd + j as usize])
        }
    };
    let mut out = vec![0f32; c_out * oh * ow];
    for o in 0..c_out {
        for y in 0..oh {
            for z in 0..ow {
                let mut acc = b.map_or(0.0, |b| f64::from(b.data()[o]));
                for c in 0..c_in {
                    for p in 0..kh {
                        for q in 0..kw {
                            let i = (y * stride + p) as isize - pad as isize;
                            let j = (z * stride + q) as isize - pad as isize;
                            acc += f64::from(w.data()[((o * c_in + c) * kh + p) * kw + q])
                                * xv(c, i, j);
                        }
                    }
                }
                out[(o * oh + y) * ow + z] = acc as f32;
            }
        }
    }
    Tensor::new(vec![c_out, oh, ow], out).unwrap()
}

/// Sliding-window maximum; padded cells never win.
pub fn naive_maxpool(x: &Tensor, k: usize, s: usize, pad: usize, ceil: bool) -> Tensor {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let size = |n: usize| {
        let span = n + 2 * pad - k;
        let mut o = if ceil {
            span.div_ceil(s) + 1
        } else {
            span / s + 1
        };
        if ceil && (o - 1) * s >= n + pad {
            o -= 1;
        }
        o
    };
    let (oh, ow) = (size(h), size(w));
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for y in 0..oh {
            for z in 0..ow {
                let mut m = f32::NEG_INFINITY;
                for p in 0..k {
                    for q in 0..k {
                        let i = (y * s + p) as isize - pad as isize;
                        let j = (z * s + q) as isize - pad as isize;
                        if i >= 0 && j >= 0 && (i as usize) < h && (j as usize) < w {
                            m = m.max(x.data()[(ch * h + i as usize) * w + j as usize]);
                        }
                    }
                }
                out.push(m);
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out).unwrap()
}

pub fn random_stack(rng: &mut ChaCha8Rng, layers: &[(usize, usize, usize)]) -> FeatureStack {
    FeatureStack {
        layers: layers
            .iter()
            .map(|&(c, h, w)| random_tensor(rng, vec![c, h, w]))
            .collect(),
        architecture: ArchName::AlexNet,
        normalized: false,
    }
}

/// The layer-summed distance spelled out term by term over `(l, h, w, c)`.
pub fn naive_distance(a: &FeatureStack, b: &FeatureStack, w: &[Vec<f64>], layers: &[usize]) -> f64 {
    let mut total = 0.0;
    for &l in layers {
        let (x, y) = (&a.layers[l], &b.layers[l]);
        let (c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let mut s = 0.0;
        for i in 0..h {
            for j in 0..wd {
                for k in 0..c {
                    let idx = (k * h + i) * wd + j;
                    let d = w[l][k] * (f64::from(x.data()[idx]) - f64::from(y.data()[idx]));
                    s += d * d;
                }
            }
        }
        total += s / (h * wd) as f64;
    }
    total
}

/// Ward by exhaustive search: at each step every pair of current clusters is
/// scored from scratch as `sqrt(2·(ESS(A∪B) − ESS(A) − ESS(B)))`, where
/// `ESS(S) = Σ_{i<j∈S} d²_ij / |S|`. Returns `(min member of A, min member of B, height)`.
pub fn brute_force_ward(m: &DistanceMatrix) -> Vec<(BTreeSet<usize>, BTreeSet<usize>, f64)> {
    let n = m.len();
    let ess = |s: &BTreeSet<usize>| {
        let v: Vec<usize> = s.iter().copied().collect();
        let mut acc = 0.0;
        for a in 0..v.len() {
            for b in a + 1..v.len() {
                acc += m.get(v[a], v[b]).powi(2);
            }
        }
        acc / v.len() as f64
    };
    let mut clusters: Vec<BTreeSet<usize>> = (0..n).map(|i| BTreeSet::from([i])).collect();
    let mut merges = Vec::new();
    while clusters.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let union: BTreeSet<usize> = clusters[a].union(&clusters[b]).copied().collect();
                let cost = 2.0 * (ess(&union) - ess(&clusters[a]) - ess(&clusters[b]));
                if best.is_none_or(|(c, _, _)| cost < c - 1e-12) {
                    best = Some((cost, a, b));
                }
            }
        }
        let (cost, a, b) = best.unwrap();
        let (sa, sb) = (clusters[a].clone(), clusters[b].clone());
        merges.push((sa.clone(), sb.clone(), cost.max(0.0).sqrt()));
        clusters[a] = sa.union(&sb).copied().collect();
        clusters.remove(b);
        clusters.sort_by_key(|c| *c.iter().next().unwrap());
    }
    merges
}

/// RI and ARI by enumerating every pair.
pub fn pair_oracle(a: &[usize], b: &[usize]) -> (f64, f64) {
    let n = a.len();
    let (mut both, mut only_a, mut only_b, mut neither) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => both += 1.0,
                (true, false) => only_a += 1.0,
                (false, true) => only_b += 1.0,
                (false, false) => neither += 1.0,
            }
        }
    }
    let total = both + only_a + only_b + neither;
    let ri = (both + neither) / total;
    let sa = both + only_a;
    let sb = both + only_b;
    let expected = sa * sb / total;
    let max = (sa + sb) / 2.0;
    let ari = if max == expected {
        1.0
    } else {
        (both - expected) / (max - expected)
    };
    (ri, ari)
}

fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn entropy_of(labels: &[usize]) -> f64 {
    let n = labels.len() as f64;
    let mut counts = std::collections::BTreeMap::new();
    for l in labels {
        *counts.entry(*l).or_insert(0.0) += 1.0;
    }
    counts.values().map(|c: &f64| -(c / n) * (c / n).ln()).sum()
}

/// `(NMI, AMI)` from entropies `H(A) + H(B) − H(A, B)` and a hypergeometric
/// expectation written with binomial coefficients.
pub fn info_oracle(a: &[usize], b: &[usize]) -> (f64, f64) {
    let n = a.len();
    let joint: Vec<usize> = a.iter().zip(b).map(|(x, y)| x * 10_000 + y).collect();
    let (ha, hb) = (entropy_of(a), entropy_of(b));
    let mi = (ha + hb - entropy_of(&joint)).max(0.0);
    let count = |v: &[usize]| {
        let mut m = std::collections::BTreeMap::new();
        for x in v {
            *m.entry(*x).or_insert(0usize) += 1;
        }
        m.into_values().collect::<Vec<_>>()
    };
    let (ra, rb) = (count(a), count(b));
    let mut emi = 0.0;
    let nf = n as f64;
    for &ai in &ra {
        for &bj in &rb {
            for nij in 1..=ai.min(bj) {
                if ai + bj > n + nij {
                    continue;
                }
                let p = binom(bj, nij) * binom(n - bj, ai - nij) / binom(n, ai);
                emi += p * (nij as f64 / nf) * (nf * nij as f64 / (ai * bj) as f64).ln();
            }
        }
    }
    let mean_h = (ha + hb) / 2.0;
    let nmi = if mi == 0.0 { 0.0 } else { mi / mean_h };
    let ami = (mi - emi) / (mean_h - emi);
    (nmi, ami)
}

/// Percentile bootstrap with the same draw protocol as the library:
/// `resamples` rounds of `n` calls to `gen_range(0..n)`.
pub fn bootstrap_oracle(
    samples: &[f64],
    resamples: usize,
    level: f64,
    rng: &mut ChaCha8Rng,
) -> (f64, f64, f64) {
    let n = samples.len();
    let mut means = Vec::new();
    for _ in 0..resamples {
        let mut idx = Vec::with_capacity(n);
        for _ in 0..n {
            idx.push(rng.gen_range(0..n));
        }
        means.push(idx.iter().map(|&i| samples[i]).sum::<f64>() / n as f64);
    }
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| {
        let pos = p * (means.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let frac = pos - lo as f64;
        if lo + 1 < means.len() {
            means[lo] * (1.0 - frac) + means[lo + 1] * frac
        } else {
            means[lo]
        }
    };
    let mean = samples.iter().sum::<f64>() / n as f64;
    let tail = (1.0 - level) / 2.0;
    (q(tail).min(mean), mean, q(1.0 - tail).max(mean))
}

pub fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i}")).collect()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> DistanceMatrix {
    let pts: Vec<[f64; 3]> = (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
    DistanceMatrix::from_fn(ids(n), |i, j| {
        pts[i]
            .iter()
            .zip(&pts[j])
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    })
    .unwrap()
}
