use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fenbench::exec::Exec;
use fenbench::notation::parse_fen;
use fenbench::rules::perft_with;

const POSITIONS: [(&str, &str, u32); 2] = [
    ("startpos", "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1", 4),
    ("kiwipete", "r3k2r/p1ppqpb1/bn2pnp1/3PN3/1p2P3/2N2Q1p/PPPBBPPP/R3K2R w KQkq - 0 1", 3),
];

fn perft(c: &mut Criterion) {
    let mut group = c.benchmark_group("perft");
    group.sample_size(10);
    for (name, fen, depth) in POSITIONS {
        let pos = parse_fen(fen).unwrap();
        for (label, exec) in [("sequential", Exec::Sequential), ("parallel", Exec::parallel())] {
            group.bench_with_input(BenchmarkId::new(label, format!("{name}/d{depth}")), &pos, |b, pos| {
                b.iter(|| perft_with(exec, black_box(pos), depth))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, perft);
criterion_main!(benches);
