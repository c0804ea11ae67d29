use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use qc_certify::exec::Exec;
use qc_certify::input_qc::InputSet;
use qc_certify::network::{random_network, Activation};
use qc_certify::oracle::{sample_lower_bound, SampleOptions};
use qc_certify::verifier::{compass_directions, reach_polytope, VerifyOptions};

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn reach(c: &mut Criterion) {
    let net = random_network(&[2, 10, 10, 2], Activation::Relu, 7).unwrap();
    let set = InputSet::boxed(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
    let dirs = compass_directions(8);
    let mut group = c.benchmark_group("reach_8_directions");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        let opts = VerifyOptions { exec, ..VerifyOptions::default() };
        group.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, opts| {
            b.iter(|| reach_polytope(&net, &set, &dirs, opts).unwrap())
        });
    }
    group.finish();
}

fn sampling(c: &mut Criterion) {
    let net = random_network(&[4, 32, 32, 2], Activation::Relu, 3).unwrap();
    let set = InputSet::boxed(vec![-1.0; 4], vec![1.0; 4]).unwrap();
    let opts = SampleOptions {
        n_samples: 20_000,
        n_refine: 50,
        ascent_steps: 20,
        seed: 0,
    };
    let mut group = c.benchmark_group("sample_lower_bound");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        group.bench_function(name, |b| b.iter(|| sample_lower_bound(&net, &set, &[1.0, -1.0], &opts, exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, reach, sampling);
criterion_main!(benches);
