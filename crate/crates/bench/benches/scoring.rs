use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use dataprio_core::elicitation::SupportPolicy;
use dataprio_core::fixture;
use dataprio_core::synthetic::{random_instance, random_judgments, InstanceShape};
use dataprio_core::{
    build_consensus, derive_incidence, perturb_sensitivity, priority_index, SensitivityConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn index(c: &mut Criterion) {
    let mut group = c.benchmark_group("priority_index");
    for items in [20, 200, 2000] {
        let shape = InstanceShape {
            max_value_streams: 8,
            max_processes: 8,
            max_decisions: 10,
            max_items: items,
            max_analyses_per_decision: 4,
            max_items_per_analysis: 12,
        };
        let inst = random_instance(&mut ChaCha8Rng::seed_from_u64(1), &shape);
        let params = inst.parameters();
        let incidence = derive_incidence(&inst.model).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(items), &items, |b, _| {
            b.iter(|| priority_index(black_box(&params), black_box(&incidence)).unwrap())
        });
    }
    group.finish();
}

fn consensus(c: &mut Criterion) {
    let model = fixture::hr_model();
    let mut group = c.benchmark_group("build_consensus_hr");
    for assessors in [1, 10, 40] {
        let j = random_judgments(&mut ChaCha8Rng::seed_from_u64(2), &model, assessors);
        group.bench_with_input(
            BenchmarkId::from_parameter(assessors),
            &assessors,
            |b, _| {
                b.iter(|| {
                    build_consensus(black_box(&model), black_box(&j), SupportPolicy::Strict)
                        .unwrap()
                })
            },
        );
    }
    group.finish();
}

fn sensitivity(c: &mut Criterion) {
    let model = fixture::hr_model();
    let j = random_judgments(&mut ChaCha8Rng::seed_from_u64(3), &model, 8);
    let config = SensitivityConfig {
        trials: 200,
        ..Default::default()
    };
    let mut group = c.benchmark_group("sensitivity_hr");
    group.sample_size(10);
    group.bench_function("200_trials", |b| {
        b.iter(|| perturb_sensitivity(black_box(&model), black_box(&j), &config).unwrap())
    });
    group.finish();
}

criterion_group!(benches, index, consensus, sensitivity);
criterion_main!(benches);
