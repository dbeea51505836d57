use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use lore_core::kernel::loss_and_gradient;
use lore_core::synth::{build_benchmark, GeneratorConfig};
use lore_core::trainer::{fewshot_adapt, train_joint, FewshotConfig, TrainConfig};
use lore_core::UserWeights;

fn benches(c: &mut Criterion) {
    let bench = build_benchmark(&GeneratorConfig {
        n_seen: 50,
        n_unseen: 10,
        ..Default::default()
    })
    .unwrap();
    let train = bench.train();
    let trained = train_joint(&train, &TrainConfig::default()).unwrap();
    let rec = &train.records()[0];
    let w = UserWeights::uniform(trained.model.rank());

    c.bench_function("loss_and_gradient D=32 B=5", |b| {
        b.iter(|| loss_and_gradient(black_box(&trained.model), black_box(&w), black_box(rec)).unwrap())
    });

    let one_epoch = TrainConfig {
        epochs: 1,
        ..Default::default()
    };
    c.bench_function("joint epoch 50 users x 45 records", |b| {
        b.iter(|| train_joint(black_box(&train), &one_epoch).unwrap())
    });

    let fewshot = bench.fewshot();
    let user = bench.split.unseen_users.first().unwrap();
    let records: Vec<_> = fewshot.user_records(user).cloned().collect();
    c.bench_function("fewshot_adapt 9 records", |b| {
        b.iter(|| fewshot_adapt(black_box(&trained.model), black_box(&records), &FewshotConfig::default()).unwrap())
    });
}

criterion_group!(training, benches);
criterion_main!(training);
