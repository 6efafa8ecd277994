use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use homcone::cone::{invariance_margin, RhsForm, Sampling};
use homcone::parallel::Exec;
use homcone::reproduce::{cone, controller, plant};
use homcone::simulation::{build_rhs, simulate_batch, Feedback, PerturbationSpec, SimConfig};
use homcone::Vector;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn invariance(c: &mut Criterion) {
    let ctrl = controller();
    let cn = cone();
    let mut group = c.benchmark_group("invariance_margin");
    group.sample_size(10);
    for (name, exec) in MODES {
        let opts = Sampling { count: 512, seed: 1, exec };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                invariance_margin(|x| ctrl.closed_loop_field(x), ctrl.dilation(), &cn, RhsForm::Generator, &opts)
                    .unwrap()
            })
        });
    }
    group.finish();
}

fn batch(c: &mut Criterion) {
    let ctrl = controller();
    let cn = cone();
    let lp = build_rhs(&plant(), Feedback::Homogeneous(ctrl.clone()), PerturbationSpec::None).unwrap();
    let cfg = SimConfig { t_final: 2.0, ..SimConfig::default() };
    let x0s: Vec<Vector> = (0..16)
        .map(|i| {
            let s = 0.2 + 0.05 * i as f64;
            Vector::from_vec(vec![s, 2.0 * s, 0.1 * s])
        })
        .collect();
    let mut group = c.benchmark_group("simulate_batch");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| simulate_batch(&lp, &cn, ctrl.dilation(), &x0s, &cfg, exec))
        });
    }
    group.finish();
}

criterion_group!(benches, invariance, batch);
criterion_main!(benches);
