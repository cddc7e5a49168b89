use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use msvr::bitstream::{pack_uints, unpack_uints};
use msvr::codebook::quantize_plane;
use msvr::codec::{decode, encode, EncodeSettings};
use msvr::latent::patchify;
use msvr::Mode;
use msvr_bench::{test_image, test_model};

fn quantize(c: &mut Criterion) {
    let mut group = c.benchmark_group("quantize_plane");
    let img = test_image(256, 256);
    for n in [64usize, 256, 512] {
        let model = test_model(1, n, 8);
        let grid = patchify(&img, &model.embed).unwrap();
        group.throughput(Throughput::Elements(grid.len() as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &grid, |b, grid| {
            b.iter(|| quantize_plane(model.books.book(0), black_box(grid)).unwrap())
        });
    }
    group.finish();
}

fn codec(c: &mut Criterion) {
    let model = test_model(4, 256, 8);
    let img = test_image(256, 256);
    let mut group = c.benchmark_group("codec");
    group.sample_size(20);
    for mode in [Mode::Single, Mode::Masked(2), Mode::Masked(4)] {
        let settings = EncodeSettings::new(mode);
        let label = format!("{}{}", mode.name(), mode.kept());
        group.bench_function(BenchmarkId::new("encode", &label), |b| {
            b.iter(|| encode(black_box(&img), &model, &settings).unwrap())
        });
        let (bytes, _) = encode(&img, &model, &settings).unwrap();
        group.bench_function(BenchmarkId::new("decode", &label), |b| {
            b.iter(|| decode(black_box(&bytes), &model).unwrap())
        });
    }
    group.finish();
}

fn packing(c: &mut Criterion) {
    let mut group = c.benchmark_group("pack");
    let values: Vec<u32> = (0..65_536u32).map(|i| i.wrapping_mul(2_654_435_761) >> 23).collect();
    group.throughput(Throughput::Elements(values.len() as u64));
    group.bench_function("pack_9bit", |b| b.iter(|| pack_uints(black_box(&values), 9).unwrap()));
    let packed = pack_uints(&values, 9).unwrap();
    group.bench_function("unpack_9bit", |b| b.iter(|| unpack_uints(black_box(&packed), 9, values.len()).unwrap()));
    group.finish();
}

criterion_group!(benches, quantize, codec, packing);
criterion_main!(benches);
