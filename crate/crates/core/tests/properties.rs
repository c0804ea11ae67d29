use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use qc_certify::activation_qc::{relu_global_qc, relu_local_qc, CouplingMode, NeuronPartition, ReluQcOptions};
use qc_certify::exec::Exec;
use qc_certify::input_qc::InputSet;
use qc_certify::network::{random_network, Activation, NeuralNetwork};
use qc_certify::oracle::{exact_max_relu, sample_lower_bound, SampleOptions};
use qc_certify::param::{Assignment, Cone, ParamMatrix, SparseRows, SymSparse, VarId};
use qc_certify::presolve::interval_propagate;
use qc_certify::verifier::{bound_direction, VerifyOptions};

fn arch() -> impl Strategy<Value = Vec<usize>> {
    (1usize..=3, prop::collection::vec(1usize..=6, 1..=3), 1usize..=2).prop_map(|(n_x, hidden, n_y)| {
        let mut dims = vec![n_x];
        dims.extend(hidden);
        dims.push(n_y);
        dims
    })
}

/// Network, box and a point of the box.
fn instance() -> impl Strategy<Value = (NeuralNetwork, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (arch(), any::<u64>()).prop_flat_map(|(dims, seed)| {
        let n_x = dims[0];
        let net = random_network(&dims, Activation::Relu, seed).unwrap();
        (
            Just(net),
            prop::collection::vec(-2.0..2.0f64, n_x),
            prop::collection::vec(0.0..1.0f64, n_x),
            prop::collection::vec(0.0..=1.0f64, n_x),
        )
            .prop_map(|(net, lo, width, t)| {
                let hi: Vec<f64> = lo.iter().zip(&width).map(|(l, w)| l + w).collect();
                let x: Vec<f64> = lo.iter().zip(&width).zip(&t).map(|((l, w), t)| l + w * t).collect();
                (net, lo, hi, x)
            })
    })
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n < 1e-9 {
        let mut e = vec![0.0; v.len()];
        e[0] = 1.0;
        e
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

fn random_assignment(pm: &ParamMatrix, vals: &[f64]) -> Assignment {
    pm.cones()
        .iter()
        .zip(vals.iter().cycle())
        .map(|((v, c), &x)| (v.clone(), if *c == Cone::Nonnegative { x.abs() } else { x }))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interval_bounds_contain_traces((net, lo, hi, x) in instance()) {
        let nb = interval_propagate(&net, &InputSet::boxed(lo, hi).unwrap()).unwrap();
        let trace = net.trace(&DVector::from_vec(x)).unwrap();
        let hidden = &trace.pre[..net.num_hidden()];
        let pre: Vec<f64> = hidden.iter().flat_map(|v| v.iter().copied()).collect();
        let (plo, phi) = (nb.pre_lo(), nb.pre_hi());
        for i in 0..pre.len() {
            let slack = 1e-9 * (1.0 + pre[i].abs());
            prop_assert!(plo[i] - slack <= pre[i] && pre[i] <= phi[i] + slack);
        }
        for &i in &nb.partition.active {
            prop_assert!(pre[i] >= -1e-9);
        }
        for &i in &nb.partition.inactive {
            prop_assert!(pre[i] < 1e-9);
        }
    }

    #[test]
    fn interval_bounds_shrink_with_the_box((net, lo, hi, x) in instance(), t in 0.0..1.0f64) {
        let outer = interval_propagate(&net, &InputSet::boxed(lo.clone(), hi.clone()).unwrap()).unwrap();
        let ilo: Vec<f64> = lo.iter().zip(&x).map(|(l, c)| c + t * (l - c)).collect();
        let ihi: Vec<f64> = hi.iter().zip(&x).map(|(h, c)| c + t * (h - c)).collect();
        let inner = interval_propagate(&net, &InputSet::boxed(ilo, ihi).unwrap()).unwrap();
        for (a, b) in inner.pre_lo().iter().zip(outer.pre_lo()) {
            prop_assert!(*a >= b - 1e-9 * (1.0 + b.abs()));
        }
        for (a, b) in inner.pre_hi().iter().zip(outer.pre_hi()) {
            prop_assert!(*a <= b + 1e-9 * (1.0 + b.abs()));
        }
        prop_assert!(inner.partition.unknown.len() <= outer.partition.unknown.len());
    }

    #[test]
    fn local_relu_constraints_collapse_to_global(n in 1usize..6, vals in prop::collection::vec(-3.0..3.0f64, 8)) {
        let range = Activation::Relu.slope_range();
        let pairs = CouplingMode::Full.pairs(&[n]);
        let global = relu_global_qc(n, range, &pairs, ReluQcOptions::default()).unwrap();
        let local = relu_local_qc(&NeuronPartition::all_unknown(n), range, &pairs, ReluQcOptions::default()).unwrap();
        let asg = random_assignment(&global, &vals);
        let a = global.evaluate(&asg).unwrap();
        let b = local.evaluate(&random_assignment(&local, &vals)).unwrap();
        prop_assert_eq!(global.cones().len(), local.cones().len());
        prop_assert!((a - b).amax() < 1e-12);
    }

    #[test]
    fn coupling_modes_are_nested(layers in prop::collection::vec(1usize..6, 1..4)) {
        let none = CouplingMode::None.pairs(&layers);
        let lw = CouplingMode::Layerwise.pairs(&layers);
        let full = CouplingMode::Full.pairs(&layers);
        let n: usize = layers.iter().sum();
        prop_assert!(none.is_empty());
        prop_assert!(lw.iter().all(|p| full.contains(p)));
        prop_assert_eq!(full.len(), n * (n - 1) / 2);
    }

    #[test]
    fn congruence_and_sum_commute_with_evaluation(
        entries in prop::collection::vec((0usize..4, 0usize..4, -2.0..2.0f64), 1..10),
        t in prop::collection::vec(-1.0..1.0f64, 12),
        x in -2.0..2.0f64,
        y in -2.0..2.0f64,
    ) {
        let a = SymSparse::from_triplets(4, entries.clone());
        let b = SymSparse::from_triplets(4, entries.iter().map(|&(i, j, v)| (j, (i + 1) % 4, v)));
        let mut p = ParamMatrix::constant(SymSparse::identity(4));
        p.add_var(VarId::new("x"), Cone::Free, a.clone()).unwrap();
        let mut q = ParamMatrix::zeros(4);
        q.add_var(VarId::new("y"), Cone::Free, b.clone()).unwrap();
        let asg: Assignment = [("x".into(), x), ("y".into(), y)].into_iter().collect();
        let dense = DMatrix::identity(4, 4) + a.to_dense() * x + b.to_dense() * y;
        let sum = p.sum(&q).unwrap();
        prop_assert!((sum.evaluate(&asg).unwrap() - &dense).amax() < 1e-12);
        let tm = DMatrix::from_row_slice(4, 3, &t);
        let cong = sum.congruence(&SparseRows::from_dense(&tm)).evaluate(&asg).unwrap();
        let want = tm.transpose() * &dense * &tm;
        prop_assert!((cong - want).amax() < 1e-12 * (1.0 + dense.amax()));
    }

    #[test]
    fn sampling_is_thread_independent((net, lo, hi, _x) in instance(), seed in any::<u64>()) {
        let set = InputSet::boxed(lo, hi).unwrap();
        let c = vec![1.0; net.output_dim()];
        let opts = SampleOptions { n_samples: 200, n_refine: 5, ascent_steps: 5, seed };
        let a = sample_lower_bound(&net, &set, &c, &opts, Exec::Sequential).unwrap();
        let b = sample_lower_bound(&net, &set, &c, &opts, Exec::Parallel).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn network_files_round_trip((net, _lo, _hi, _x) in instance()) {
        prop_assert_eq!(NeuralNetwork::from_json(&net.to_json()).unwrap(), net);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exact_maximum_dominates_samples((net, lo, hi, _x) in instance(), dir in prop::collection::vec(-1.0..1.0f64, 2)) {
        let set = InputSet::boxed(lo, hi).unwrap();
        let c = unit(&dir[..net.output_dim()]);
        let (exact, cert) = exact_max_relu(&net, &set, &c, 12, Exec::Parallel).unwrap();
        let opts = SampleOptions { n_samples: 500, n_refine: 10, ascent_steps: 20, seed: 1 };
        let sampled = sample_lower_bound(&net, &set, &c, &opts, Exec::Parallel).unwrap();
        prop_assert!(exact >= sampled - 1e-7 * (1.0 + exact.abs()), "exact {exact} < sampled {sampled}");
        // The witness is a point of the box whose value is the maximum.
        prop_assert!(set.contains(&cert.x, 1e-9));
        let y = net.forward_slice(&cert.x).unwrap();
        let v: f64 = c.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        prop_assert!((v - exact).abs() <= 1e-9 * (1.0 + exact.abs()));
        prop_assert!((cert.lp_value - exact).abs() <= 1e-6 * (1.0 + exact.abs()));
    }

    #[test]
    fn certified_bound_dominates_exact_maximum((net, lo, hi, _x) in instance(), dir in prop::collection::vec(-1.0..1.0f64, 2)) {
        let set = InputSet::boxed(lo, hi).unwrap();
        let c = unit(&dir[..net.output_dim()]);
        let (exact, _) = exact_max_relu(&net, &set, &c, 12, Exec::Parallel).unwrap();
        let (d, res) = bound_direction(&net, &set, &c, &VerifyOptions::default()).unwrap();
        prop_assert!(res.is_certified());
        prop_assert!(d >= exact - 1e-6, "bound {d} < exact {exact}");
    }
}
