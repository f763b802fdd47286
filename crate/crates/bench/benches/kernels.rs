use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use span_core::ctc::ctc_loss;
use span_core::model::{Architecture, ModelConfig, SpanModel};
use span_core::tensor::ops::{conv2d, depthwise_separable_conv, Conv2dSpec};
use span_core::tensor::{NdArray, Tensor};

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> NdArray<f32> {
    let n = shape.iter().product();
    NdArray::from_vec(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn convolutions(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = Tensor::constant(random(&[1, 64, 40, 36], &mut rng));
    let w = Tensor::constant(random(&[64, 64, 3, 3], &mut rng));
    let b = Tensor::constant(random(&[64], &mut rng));
    c.bench_function("conv2d 64->64 3x3 40x36", |bench| {
        bench.iter(|| conv2d(&x, &w, Some(&b), Conv2dSpec::new((1, 1), (1, 1))).unwrap())
    });
    let dw = Tensor::constant(random(&[64, 1, 3, 3], &mut rng));
    let pw = Tensor::constant(random(&[64, 64, 1, 1], &mut rng));
    c.bench_function("separable 64 3x3 40x36", |bench| {
        bench.iter(|| depthwise_separable_conv(&x, &dw, &pw, Some(&b), Conv2dSpec::new((1, 1), (1, 1))).unwrap())
    });
}

fn ctc(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (frames, classes) = (600, 101);
    let mut lp: Vec<f64> = (0..frames * classes).map(|_| rng.random_range(-3.0..0.0)).collect();
    for row in lp.chunks_mut(classes) {
        let m = row.iter().map(|v: &f64| v.exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|v| *v -= m);
    }
    let label: Vec<usize> = (0..120).map(|_| rng.random_range(0..100)).collect();
    c.bench_function("ctc loss T=600 L=120 N=100", |bench| bench.iter(|| ctc_loss(&lp, frames, classes, &label, 100).unwrap()));
}

fn forward(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = SpanModel::<f32>::new(Architecture::Span, ModelConfig::reduced(10), 0).unwrap();
    let x = random(&[1, 3, 160, 144], &mut rng);
    let mut group = c.benchmark_group("reduced model");
    group.sample_size(10);
    group.bench_function("predict 160x144", |bench| bench.iter(|| model.predict(&x).unwrap()));
    group.finish();
}

criterion_group!(benches, convolutions, ctc, forward);
criterion_main!(benches);
