use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use segunc::calibration::{temperature_scale_with, LogProbMap};
use segunc::patch::{threshold_sweep_dataset, uniform_grid, EdgePolicy, EvalImage, ImagePatches, PatchConfig};
use segunc::synth::{generate, SynthSpec};
use segunc::tensor::{argmax_prediction, ClassMap, ProbStack};
use segunc::uncertainty::{uncertainty_map_with, Measure};
use segunc::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn scene(side: usize) -> (ClassMap, ProbStack) {
    generate(&SynthSpec::random(17, side, side, 8, 16, 12)).expect("valid scene")
}

fn uncertainty(c: &mut Criterion) {
    let (_, stack) = scene(256);
    let mut group = c.benchmark_group("uncertainty_map");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new("mi", name), &exec, |b, &exec| {
            b.iter(|| uncertainty_map_with(black_box(&stack), Measure::MutualInformation, exec))
        });
    }
    group.finish();
}

fn patches(c: &mut Criterion) {
    let (gt, stack) = scene(512);
    let pred = argmax_prediction(&stack);
    let umap = uncertainty_map_with(&stack, Measure::PredictiveEntropy, Exec::default());
    let img = EvalImage::new(&pred, &gt, &umap).expect("same shapes");
    let cfg = PatchConfig::new(4, 1, 0.5, EdgePolicy::DropPartial).expect("valid config");
    let grid = uniform_grid(101).expect("non-empty grid");

    let mut group = c.benchmark_group("patches");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new("classify", name), &exec, |b, &exec| {
            b.iter(|| ImagePatches::compute(black_box(&img), &cfg, exec))
        });
        group.bench_with_input(BenchmarkId::new("sweep", name), &exec, |b, &exec| {
            b.iter(|| threshold_sweep_dataset(black_box(&[img]), &cfg, &grid, exec))
        });
    }
    group.finish();
}

fn temperature(c: &mut Criterion) {
    let (gt, stack) = scene(192);
    let logp = LogProbMap::from_probs(&stack);
    let mut group = c.benchmark_group("temperature_scale");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| temperature_scale_with(black_box(&logp), &gt, exec))
        });
    }
    group.finish();
}

criterion_group!(benches, uncertainty, patches, temperature);
criterion_main!(benches);
