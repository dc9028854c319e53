use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use hypgcn_bench::random_banks;
use hypgcn_core::rfc::{decode_bank, histogram_from_banks, relu_encode_bank, size_minibanks, SparsityHistogram};

fn encode_decode(c: &mut Criterion) {
    let mut group = c.benchmark_group("rfc");
    for density in [0.25, 0.5, 0.9] {
        let banks = random_banks(4096, density, 7);
        let encoded: Vec<_> = banks.iter().map(relu_encode_bank).collect();
        group.throughput(Throughput::Elements(banks.len() as u64));
        group.bench_with_input(BenchmarkId::new("encode", density), &banks, |b, banks| {
            b.iter(|| {
                banks
                    .iter()
                    .map(|v| relu_encode_bank(black_box(v)).hot as u64)
                    .sum::<u64>()
            })
        });
        group.bench_with_input(BenchmarkId::new("decode", density), &encoded, |b, enc| {
            b.iter(|| {
                enc.iter()
                    .map(|e| decode_bank(black_box(e)).unwrap()[15].raw() as i64)
                    .sum::<i64>()
            })
        });
        group.bench_with_input(BenchmarkId::new("store_load", density), &encoded, |b, enc| {
            let hist = SparsityHistogram::from_counts(histogram_from_banks(enc)).unwrap();
            b.iter(|| {
                let mut layout = size_minibanks(&hist, enc.len(), 1, 1).unwrap();
                for e in enc {
                    layout.store_bank(e).unwrap();
                }
                (0..enc.len())
                    .map(|l| layout.load_bank(l).unwrap().hot as u64)
                    .sum::<u64>()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, encode_decode);
criterion_main!(benches);
