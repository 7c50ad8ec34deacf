use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use tcd_npe_bench::stream;
use tcd_npe_core::bitmac::{conv_mac_stream, tcd_mac_stream};

fn bench_mac_streams(c: &mut Criterion) {
    let mut group = c.benchmark_group("mac_streams");
    for len in [16usize, 256, 1024] {
        let pairs = stream(len, 0x5eed);
        group.throughput(Throughput::Elements(len as u64));
        group.bench_with_input(BenchmarkId::new("deferring", len), &pairs, |b, pairs| {
            b.iter(|| black_box(tcd_mac_stream(pairs).value))
        });
        group.bench_with_input(BenchmarkId::new("behavioral", len), &pairs, |b, pairs| {
            b.iter(|| black_box(conv_mac_stream(pairs).value))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_mac_streams);
criterion_main!(benches);
