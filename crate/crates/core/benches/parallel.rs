//! Sequential vs rayon execution of the Monte-Carlo core and of a full run.

use cellfree::harness::{prepare_throw, run_experiment, ScenarioConfig};
use cellfree::strategies::{run_strategy, Strategy};
use cellfree::Exec;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn monte_carlo(c: &mut Criterion) {
    let config = ScenarioConfig { n_mc: 256, ..ScenarioConfig::desk() };
    let throw = prepare_throw(&config, 0).expect("throw");
    let mut group = c.benchmark_group("wc_single_throw");
    group.sample_size(10);
    for (name, exec) in MODES {
        let scenario = throw.scenario(&config, exec);
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_strategy(Strategy::Wc, &scenario).expect("solve"))
        });
    }
    group.finish();
}

fn experiment(c: &mut Criterion) {
    let config = ScenarioConfig { n_throws: 4, n_fading: 10, n_mc: 64, ..ScenarioConfig::desk() };
    let mut group = c.benchmark_group("desk_experiment");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_experiment(&config, exec).expect("run"))
        });
    }
    group.finish();
}

criterion_group!(benches, monte_carlo, experiment);
criterion_main!(benches);
