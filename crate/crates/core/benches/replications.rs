use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use spikeslab::diagnostics::omega_event_frequency;
use spikeslab::exec::Exec;
use spikeslab::harness::{run_contraction_study, ExperimentConfig};
use spikeslab::model::{generate_instance, CoefficientSpec, DesignSpec};

const EXECS: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn study(c: &mut Criterion) {
    let cfg = ExperimentConfig::from_toml_str(
        r#"
        study = "contract"
        replications = 8
        grid = [{ n = 80, p = 10, s = 2 }, { n = 120, p = 40, s = 2 }]
        signal = { kind = "rate", multiple = 10.0 }
        [inference]
        draws_per_model = 200
        [inference.sampler]
        sweeps = 500
        burn_in = 100
        "#,
    )
    .unwrap();
    let mut g = c.benchmark_group("contraction_study");
    g.sample_size(10);
    for (name, exec) in EXECS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| run_contraction_study(&cfg, exec).unwrap()));
    }
    g.finish();
}

fn omega(c: &mut Criterion) {
    let inst = generate_instance(
        200,
        30,
        2,
        &CoefficientSpec::ConstantRandomSign { magnitude: 1.0 },
        1.0,
        DesignSpec::IidGaussian,
        3,
    )
    .unwrap();
    let xi = inst.truth.as_ref().unwrap().xi_star.clone();
    let mut g = c.benchmark_group("omega_frequency");
    g.sample_size(10);
    for (name, exec) in EXECS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| omega_event_frequency(&inst.x, &xi, 2.0, 0.1, 2000, 7, 1 << 20, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, study, omega);
criterion_main!(benches);
