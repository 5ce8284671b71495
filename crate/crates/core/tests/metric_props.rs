mod common;

use common::{naive_distance, random_stack};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vizsim::metric::{
    distance_excluding_layer, matrix_from_features, per_layer_distances, perceptual_distance,
    unit_normalize, DeepMetric, DistanceConfig, ScalingWeights, DEFAULT_EPS,
};
use vizsim::nn::{random_init, ArchitectureSpec, FeatureStack};
use vizsim::preprocess::{ImageStimulus, PreprocessConfig};

const DIMS: [(usize, usize, usize); 3] = [(4, 3, 3), (6, 2, 2), (3, 1, 1)];

fn pair(seed: u64) -> (FeatureStack, FeatureStack, ScalingWeights) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = unit_normalize(&random_stack(&mut rng, &DIMS), DEFAULT_EPS).unwrap();
    let b = unit_normalize(&random_stack(&mut rng, &DIMS), DEFAULT_EPS).unwrap();
    let w = DIMS
        .iter()
        .map(|&(c, _, _)| (0..c).map(|_| rng.gen_range(0.0..2.0)).collect())
        .collect();
    (a, b, ScalingWeights::new(w, "random").unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn axioms(seed in any::<u64>()) {
        let (a, b, w) = pair(seed);
        let cfg = DistanceConfig::default();
        prop_assert_eq!(perceptual_distance(&a, &a, &w, &cfg).unwrap(), 0.0);
        let ab = perceptual_distance(&a, &b, &w, &cfg).unwrap();
        let ba = perceptual_distance(&b, &a, &w, &cfg).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-6 * ab.max(1e-12));
    }

    #[test]
    fn matches_term_by_term_expansion(seed in any::<u64>(), mask in 1u8..8) {
        let (a, b, w) = pair(seed);
        let layers: Vec<usize> = (0..3).filter(|l| mask & (1 << l) != 0).collect();
        let d = perceptual_distance(&a, &b, &w, &DistanceConfig::with_layers(layers.clone())).unwrap();
        prop_assert!((d - naive_distance(&a, &b, &w.layers, &layers)).abs() <= 1e-9);
    }

    #[test]
    fn layers_add_up_and_leave_one_out(seed in any::<u64>()) {
        let (a, b, w) = pair(seed);
        let cfg = DistanceConfig::default();
        let total = perceptual_distance(&a, &b, &w, &cfg).unwrap();
        let per = per_layer_distances(&a, &b, &w).unwrap();
        prop_assert!((per.iter().sum::<f64>() - total).abs() <= 1e-6);
        for (l, p) in per.iter().enumerate() {
            let ex = distance_excluding_layer(&a, &b, &w, &cfg, l).unwrap();
            prop_assert!((ex - (total - p)).abs() <= 1e-6);
        }
    }

    #[test]
    fn channel_scaling_is_quadratic(seed in any::<u64>(), l in 0usize..3, c in 0.0f64..5.0) {
        let (a, b, w) = pair(seed);
        let before = per_layer_distances(&a, &b, &w).unwrap();
        let after = per_layer_distances(&a, &b, &w.scaled_layer(l, c)).unwrap();
        for k in 0..3 {
            let expect = if k == l { before[k] * c * c } else { before[k] };
            prop_assert!((after[k] - expect).abs() <= 1e-9 * expect.max(1.0));
        }
    }

    #[test]
    fn normalized_channels_have_unit_norm(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = random_stack(&mut rng, &DIMS);
        let n = unit_normalize(&raw, DEFAULT_EPS).unwrap();
        for (r, t) in raw.layers.iter().zip(&n.layers) {
            let (c, h, w) = t.chw("test").unwrap();
            for p in 0..h * w {
                let pre: f64 = (0..c).map(|k| f64::from(r.data()[k * h * w + p]).powi(2)).sum::<f64>().sqrt();
                let post: f64 = (0..c).map(|k| f64::from(t.data()[k * h * w + p]).powi(2)).sum::<f64>().sqrt();
                if pre > 1e-3 {
                    prop_assert!((post - 1.0).abs() <= 1e-4);
                }
            }
        }
    }
}

#[test]
fn zero_vector_stays_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut s = random_stack(&mut rng, &[(3, 1, 1)]);
    s.layers[0] = vizsim::Tensor::zeros(vec![3, 1, 1]);
    assert_eq!(
        unit_normalize(&s, DEFAULT_EPS).unwrap().layers[0].data(),
        &[0.0; 3]
    );
}

fn images(n: usize) -> Vec<ImageStimulus> {
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
            let px = (0..72 * 72 * 3)
                .map(|_| rng.gen_range(0.0f32..1.0))
                .collect();
            ImageStimulus::new(
                72,
                72,
                px,
                vizsim::preprocess::ColorSpace::Srgb,
                format!("img{i}"),
            )
            .unwrap()
        })
        .collect()
}

fn squeezenet_metric(seed: u64) -> DeepMetric {
    let spec = ArchitectureSpec::squeezenet();
    DeepMetric::new(
        random_init(&spec, seed),
        None,
        PreprocessConfig::imagenet(64),
        DistanceConfig::default(),
    )
    .unwrap()
}

#[test]
fn cached_matrix_equals_per_pair_recomputation() {
    let metric = squeezenet_metric(5);
    let imgs = images(5);
    let cached = metric.pairwise_matrix(&imgs).unwrap();
    assert_eq!(cached.len(), 5);
    for i in 0..5 {
        assert_eq!(cached.get(i, i), 0.0);
        for j in 0..5 {
            if i != j {
                let direct = metric.distance(&imgs[i], &imgs[j]).unwrap();
                assert!((cached.get(i, j) - direct).abs() <= 1e-6, "({i},{j})");
            }
        }
    }
}

#[test]
fn identical_images_give_zero_matrix() {
    let metric = squeezenet_metric(2);
    let mut imgs = images(1);
    let mut twin = imgs[0].clone();
    twin.source_id = "twin".into();
    imgs.push(twin);
    let m = metric.pairwise_matrix(&imgs).unwrap();
    assert_eq!(m.values(), &[0.0; 4]);
    assert!(metric.pairwise_matrix(&imgs[..1]).is_err());
}

#[test]
fn matrix_is_schedule_independent() {
    let metric = squeezenet_metric(9);
    let imgs = images(4);
    let stacks = metric.feature_cache(&imgs).unwrap();
    let ids: Vec<String> = imgs.iter().map(|i| i.source_id.clone()).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let serial = pool.install(|| {
        matrix_from_features(ids.clone(), &stacks, &metric.scaling, &metric.config).unwrap()
    });
    let parallel = matrix_from_features(ids, &stacks, &metric.scaling, &metric.config).unwrap();
    assert_eq!(serial, parallel);
}

#[test]
fn forward_errors_name_the_image() {
    let metric = squeezenet_metric(1);
    let bad = ImageStimulus::filled(8, 8, [0.5; 3], "tiny.png");
    let mut lab = images(1).remove(0);
    lab.color_space = vizsim::preprocess::ColorSpace::Lab;
    lab.source_id = "lab-image".into();
    let err = metric
        .pairwise_matrix(&[images(1).remove(0), lab])
        .unwrap_err()
        .to_string();
    assert!(err.contains("lab-image"), "{err}");
    assert!(
        metric.features(&bad).is_ok(),
        "small inputs are resized up to the model size"
    );
}
