use criterion::{black_box, criterion_group, criterion_main, Criterion};
use tpm_kdc_core::wire::{decode, encode, pack_input};
use tpm_kdc_core::{LearningRule, Message, SeededGenerator, Spin, TpmParams};

fn codec(c: &mut Criterion) {
    let p = TpmParams::new(8, 128, 6, LearningRule::Hebbian).unwrap();
    let x = SeededGenerator::new(3).gen_input(p);
    let input = Message::Input {
        round: 9,
        packed: pack_input(&x),
    };
    let output = Message::Output {
        round: 9,
        tau: Spin::Minus,
    };
    let mut g = c.benchmark_group("wire");
    for (name, msg) in [("input_k8n128", input), ("output", output)] {
        let bytes = encode(&msg).unwrap();
        g.bench_function(format!("encode/{name}"), |b| {
            b.iter(|| encode(black_box(&msg)).unwrap())
        });
        g.bench_function(format!("decode/{name}"), |b| {
            b.iter(|| decode(black_box(&bytes)).unwrap())
        });
    }
    g.bench_function("pack_input/k8n128", |b| {
        b.iter(|| pack_input(black_box(&x)))
    });
    g.finish();
}

criterion_group!(benches, codec);
criterion_main!(benches);
