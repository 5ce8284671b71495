mod common;

use common::{naive_conv, naive_maxpool, random_tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vizsim::nn::ops::{
    concat_channels, conv2d, fire_forward, maxpool2d_with, relu, FireParams, PoolSpec,
};
use vizsim::nn::{forward_features, random_init, ArchitectureSpec};
use vizsim::Tensor;

fn max_abs_diff(a: &Tensor, b: &Tensor) -> f32 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f32::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_matches_loop_oracle(
        seed in any::<u64>(), c_in in 1usize..5, c_out in 1usize..5, k in 1usize..4,
        stride in 1usize..3, pad in 0usize..3, extra in 0usize..6, bias in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = k + extra;
        let x = random_tensor(&mut rng, vec![c_in, h, h + 1]);
        let w = random_tensor(&mut rng, vec![c_out, c_in, k, k]);
        let b = random_tensor(&mut rng, vec![c_out]);
        let b = bias.then_some(&b);
        let ours = conv2d(&x, &w, b, stride, pad).unwrap();
        prop_assert!(max_abs_diff(&ours, &naive_conv(&x, &w, b, stride, pad)) <= 1e-5);
    }

    #[test]
    fn maxpool_matches_window_oracle(
        seed in any::<u64>(), c in 1usize..4, k in 1usize..4, stride in 1usize..3,
        pad in 0usize..2, extra in 0usize..7, ceil in any::<bool>(),
    ) {
        prop_assume!(pad * 2 <= k);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_tensor(&mut rng, vec![c, k + extra, k + extra + 2]);
        let spec = PoolSpec { kernel: k, stride, padding: pad, ceil_mode: ceil };
        let ours = maxpool2d_with(&x, spec).unwrap();
        prop_assert_eq!(ours, naive_maxpool(&x, k, stride, pad, ceil));
    }
}

#[test]
fn fire_is_bitwise_composition_of_primitives() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random_tensor(&mut rng, vec![8, 9, 9]);
    let sw = random_tensor(&mut rng, vec![4, 8, 1, 1]);
    let sb = random_tensor(&mut rng, vec![4]);
    let e1w = random_tensor(&mut rng, vec![6, 4, 1, 1]);
    let e1b = random_tensor(&mut rng, vec![6]);
    let e3w = random_tensor(&mut rng, vec![6, 4, 3, 3]);
    let e3b = random_tensor(&mut rng, vec![6]);
    let p = FireParams {
        squeeze_weight: &sw,
        squeeze_bias: Some(&sb),
        expand1x1_weight: &e1w,
        expand1x1_bias: Some(&e1b),
        expand3x3_weight: &e3w,
        expand3x3_bias: Some(&e3b),
    };
    let s = relu(&conv2d(&x, &sw, Some(&sb), 1, 0).unwrap());
    let e1 = relu(&conv2d(&s, &e1w, Some(&e1b), 1, 0).unwrap());
    let e3 = relu(&conv2d(&s, &e3w, Some(&e3b), 1, 1).unwrap());
    let composed = concat_channels(&[&e1, &e3]).unwrap();
    let fused = fire_forward(&x, &p).unwrap();
    assert_eq!(fused.shape(), &[12, 9, 9]);
    assert_eq!(fused.data(), composed.data());
}

#[test]
fn conv_output_sizing_follows_floor_rule() {
    let x = Tensor::zeros(vec![1, 10, 7]);
    let w = Tensor::zeros(vec![2, 1, 3, 3]);
    assert_eq!(conv2d(&x, &w, None, 2, 1).unwrap().shape(), &[2, 5, 4]);
    assert_eq!(
        conv2d(&x, &Tensor::zeros(vec![1, 1, 5, 5]), None, 1, 0)
            .unwrap()
            .shape(),
        &[1, 6, 3]
    );
    assert!(conv2d(
        &Tensor::zeros(vec![1, 2, 2]),
        &Tensor::zeros(vec![1, 1, 3, 3]),
        None,
        1,
        0
    )
    .is_err());
}

#[test]
fn extraction_shapes_at_224() {
    let spec = ArchitectureSpec::alexnet();
    let w = random_init(&spec, 1);
    let x = Tensor::full(vec![3, 224, 224], 0.1);
    let stack = forward_features(&x, &spec, &w).unwrap();
    let shapes: Vec<Vec<usize>> = stack.layers.iter().map(|t| t.shape().to_vec()).collect();
    assert_eq!(
        shapes,
        vec![
            vec![64, 55, 55],
            vec![192, 27, 27],
            vec![384, 13, 13],
            vec![256, 13, 13],
            vec![256, 13, 13]
        ]
    );
}
