use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use spikeslab::eigen::{msev, muev};
use spikeslab::exec::Exec;
use spikeslab::inference::exact_posterior;
use spikeslab::model::{generate_instance, CoefficientSpec, DesignSpec};
use spikeslab::priors::PriorSpec;

const EXECS: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn exact(c: &mut Criterion) {
    let inst = generate_instance(
        100,
        14,
        3,
        &CoefficientSpec::ConstantRandomSign { magnitude: 0.5 },
        1.0,
        DesignSpec::IidGaussian,
        1,
    )
    .unwrap();
    let prior = PriorSpec::default();
    let mut g = c.benchmark_group("exact_posterior_p14");
    g.sample_size(10);
    for (name, exec) in EXECS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| exact_posterior(&inst, &prior, 14, 1 << 20, exec).unwrap())
        });
    }
    g.finish();
}

fn eigen(c: &mut Criterion) {
    let inst = generate_instance(
        60,
        20,
        2,
        &CoefficientSpec::ConstantRandomSign { magnitude: 1.0 },
        1.0,
        DesignSpec::Equicorrelated { rho: 0.3 },
        2,
    )
    .unwrap();
    let xi = inst.truth.as_ref().unwrap().xi_star.clone();
    let mut g = c.benchmark_group("eigen_p20_t6");
    g.sample_size(10);
    for (name, exec) in EXECS {
        g.bench_function(BenchmarkId::new("muev", name), |b| b.iter(|| muev(&inst.x, &xi, 6, 1 << 24, exec).unwrap()));
        g.bench_function(BenchmarkId::new("msev", name), |b| b.iter(|| msev(&inst.x, 5, 1 << 24, exec).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, exact, eigen);
criterion_main!(benches);
