//! Criterion benches comparing the data-parallel particle evaluation path
//! against the always-sequential fallback, plus the cost of one full
//! optimizer iteration under each.
//!
//! With `--no-default-features` the "parallel" variants degrade to
//! sequential execution; the comparison is meaningful under the default
//! feature set on a multi-core host.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use stl_svpio::dynamics::{backprop_controls, rollout, rollout_jacobians, ControlSequence};
use stl_svpio::exec;
use stl_svpio::optimizer::{run_svpio, SvpioConfig};
use stl_svpio::scenario::Scenario;
use stl_svpio::semantics::CompiledFormula;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn make_population(scenario: &Scenario, n: usize) -> Vec<ControlSequence> {
    let dim = scenario.dynamics.control_dim();
    let steps = scenario.horizon;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    (0..n)
        .map(|_| {
            let flat: Vec<f64> = (0..steps * dim)
                .map(|d| {
                    let lo = scenario.dynamics.u_min[d % dim];
                    let hi = scenario.dynamics.u_max[d % dim];
                    lo + (hi - lo) * rng.gen::<f64>()
                })
                .collect();
            ControlSequence::from_flat(flat, dim).unwrap()
        })
        .collect()
}

fn population_eval(c: &mut Criterion) {
    let scenario = Scenario::builtin("reach_avoid").unwrap();
    let compiled = CompiledFormula::compile(&scenario.formula, &scenario.bindings).unwrap();
    let jac = rollout_jacobians(&scenario.dynamics);
    let mut group = c.benchmark_group("population_eval");
    for &n in &[8usize, 32] {
        let particles = make_population(&scenario, n);
        let eval = |p: &ControlSequence| {
            let trace = rollout(&scenario.dynamics, &scenario.x0, p).unwrap();
            let smooth = compiled
                .robustness_smooth(&trace, &scenario.smoothing)
                .unwrap();
            let grad = backprop_controls(&jac, &smooth.per_state_grad);
            (smooth.value, grad)
        };
        group.bench_with_input(BenchmarkId::new("parallel", n), &particles, |b, ps| {
            b.iter(|| exec::map_items(ps, eval))
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &particles, |b, ps| {
            b.iter(|| exec::map_items_seq(ps, eval))
        });
    }
    group.finish();
}

fn full_run(c: &mut Criterion) {
    let scenario = Scenario::builtin("reach_avoid").unwrap();
    let cfg = SvpioConfig {
        particles: 10,
        iterations: 5,
        ..scenario.methods.svpio.clone().unwrap_or_default()
    };
    let mut group = c.benchmark_group("svpio_short_run");
    group.sample_size(10);
    group.bench_function("reach_avoid_n10_m5", |b| {
        b.iter(|| run_svpio(&scenario, &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, population_eval, full_run);
criterion_main!(benches);
