use std::time::Instant;

use image::{Rgb, RgbImage};
use taillight::features::{
    build_network, build_network_for, forward, forward_traced, resize_to_input, NetworkSpec, FEATURE_DIM,
};

// The full plan holds ~138M parameters, so everything that needs it runs in
// one test to keep a single copy resident.
#[test]
fn full_vgg16_plan() {
    let (spec, weights) = build_network(2024);
    assert_eq!(spec, NetworkSpec::vgg16());
    assert_eq!(spec.filter_counts(), vec![64, 128, 256, 512, 512]);
    assert_eq!(spec.head, [4096, 4096, 1000]);
    weights.check(&spec).unwrap();
    let params: usize = weights
        .convs
        .iter()
        .flatten()
        .map(|l| l.weight.len() + l.bias.len())
        .chain(weights.dense.iter().map(|l| l.weight.len() + l.bias.len()))
        .sum();
    assert_eq!(params, 138_357_544);

    let img = RgbImage::from_fn(96, 64, |x, y| Rgb([(x * 2) as u8, (y * 3) as u8, ((x + y) % 256) as u8]));
    let start = Instant::now();
    let trace = forward_traced(&spec, &weights, &resize_to_input(&img).unwrap()).unwrap();
    eprintln!("full forward: {:?}", start.elapsed());
    assert_eq!(
        trace.block_shapes,
        vec![(112, 112, 64), (56, 56, 128), (28, 28, 256), (14, 14, 512), (7, 7, 512)]
    );
    assert_eq!(trace.fc1.values.len(), FEATURE_DIM);
    assert_eq!(trace.fc2.values.len(), FEATURE_DIM);
    assert!(trace.fc1.values.iter().chain(&trace.fc2.values).all(|v| v.is_finite() && *v >= 0.0));

    let digest = weights.digest();
    drop(weights);
    let (_, again) = build_network(2024);
    assert_eq!(again.digest(), digest);
}

#[test]
fn narrow_forward_is_bit_stable_across_threads() {
    let spec = NetworkSpec::vgg16_narrow(16).unwrap();
    let weights = build_network_for(&spec, 1);
    let img = resize_to_input(&RgbImage::from_fn(40, 30, |x, y| Rgb([x as u8 * 6, y as u8 * 8, 200]))).unwrap();
    let start = Instant::now();
    let (a1, a2) = forward(&spec, &weights, &img).unwrap();
    eprintln!("narrow forward: {:?}", start.elapsed());
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let (b1, b2) = pool.install(|| forward(&spec, &weights, &img)).unwrap();
    assert_eq!(a1, b1);
    assert_eq!(a2, b2);
}
