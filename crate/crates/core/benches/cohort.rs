use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use mutualctr::data::{encode_split, synth_generate, Batch, SynthConfig, DEFAULT_RATIOS};
use mutualctr::exec::ExecMode;
use mutualctr::models::{Architecture, FieldLayout, ModelConfig, ModelInstance};
use mutualctr::training::Cohort;

fn modes() -> Vec<(&'static str, ExecMode)> {
    let mut m = vec![("sequential", ExecMode::Sequential)];
    #[cfg(feature = "parallel")]
    m.push(("parallel", ExecMode::Parallel));
    m
}

fn cohort_step(c: &mut Criterion) {
    let ds = synth_generate(&SynthConfig {
        rows: 5000,
        ..SynthConfig::default()
    })
    .unwrap();
    let (schema, split) = encode_split(&ds.table, DEFAULT_RATIOS, 1).unwrap();
    let layout = FieldLayout::from_schema(&schema);
    let batch = Batch::from_examples(&split.train[..1000]);
    let config = ModelConfig {
        tower: vec![128, 64, 32],
        ..ModelConfig::default()
    };

    let mut group = c.benchmark_group("cohort_step");
    group.sample_size(10);
    for n in [2usize, 4] {
        for (name, mode) in modes() {
            let models: Vec<ModelInstance> = (0..n)
                .map(|i| ModelInstance::new(Architecture::ALL[i % 4], &config, &layout, i as u64).unwrap())
                .collect();
            let mut cohort = Cohort::mutual(models, 1.0, true, mode).unwrap();
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, _| {
                b.iter(|| cohort.step(&batch, 1e-4).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, cohort_step);
criterion_main!(benches);
