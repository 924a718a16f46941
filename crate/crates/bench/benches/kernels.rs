use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fsoinet::autograd::Tape;
use fsoinet::ops::conv2d;
use fsoinet::VariantMode;
use fsoinet_bench::{random_tensor, small_model};

fn conv(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv2d_3x3");
    for channels in [8usize, 16, 32] {
        let x = random_tensor(&[4, channels, 96, 96], 1);
        let w = random_tensor(&[channels, channels, 3, 3], 2);
        let b = random_tensor(&[channels], 3);
        group.bench_with_input(BenchmarkId::from_parameter(channels), &channels, |bench, _| {
            bench.iter(|| conv2d(&x, &w, Some(&b), 1, 1).unwrap())
        });
    }
    group.finish();
}

fn model(c: &mut Criterion) {
    let x = random_tensor(&[1, 1, 96, 96], 4).map(|v| v.abs());
    let mut group = c.benchmark_group("model");
    group.sample_size(10);
    for mode in VariantMode::ALL {
        let net = small_model(mode);
        group.bench_function(BenchmarkId::new("reconstruct", mode), |bench| {
            bench.iter(|| net.reconstruct(&x).unwrap())
        });
        group.bench_function(BenchmarkId::new("forward_backward", mode), |bench| {
            bench.iter(|| {
                let mut tape = Tape::new();
                let p = net.params().bind(&mut tape);
                let xv = tape.constant(x.clone());
                let out = net.forward_on(&mut tape, &p, &xv).unwrap();
                let loss = tape.mse_loss(&out.x_rec, &xv).unwrap();
                tape.backward(&loss).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, conv, model);
criterion_main!(benches);
