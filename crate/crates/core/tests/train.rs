use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wideconv_core::nn::{build_network, forward, ntk_gram, Activation, LayerSpec, NetworkSpec, NetworkState, Readout};
use wideconv_core::observe::{dtheta_dt0, drift_finish, drift_start, mean_abs, ntk_stat_samples, DriftOptions};
use wideconv_core::train::{
    accuracy, detect_after_quiet, detect_instability, evolve_linear, gap_seed, lambda_max, stability_lr, test_loss, train_full,
    train_loss, GapSeries, InstabilityOptions, Split, StopReason, TrainError, TrainOptions,
};
use wideconv_core::{Image, KernelMatrix, Shape};

fn random_image(shape: Shape, rng: &mut ChaCha8Rng) -> Image {
    let data = (0..shape.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    Image::new(shape, data).unwrap()
}

fn random_split(shape: Shape, n: usize, seed: u64) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = (0..n).map(|_| random_image(shape, &mut rng)).collect();
    let labels = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    Split::new(inputs, labels).unwrap()
}

fn random_psd(n: usize, seed: u64) -> KernelMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            v[i * n + j] = (0..n).map(|k| a[i * n + k] * a[j * n + k]).sum::<f64>() + if i == j { 0.1 } else { 0.0 };
        }
    }
    KernelMatrix::square(n, v)
}

fn small_net(act: Activation, readout: Readout) -> NetworkSpec {
    NetworkSpec {
        input_shape: Shape::new(4, 4, 1),
        width: 6,
        activation: act,
        readout,
        layers: vec![LayerSpec::Conv { kw: 3, kh: 3 }],
    }
}

/// `f = theta x` on a 1x1x1 input.
fn scalar_model(theta: f64) -> NetworkState {
    let spec = NetworkSpec {
        input_shape: Shape::new(1, 1, 1),
        width: 1,
        activation: Activation::Identity,
        readout: Readout::Flatten,
        layers: vec![],
    };
    NetworkState::from_params(&spec, vec![theta]).unwrap()
}

#[test]
fn stability_lr_small_cases() {
    let id = KernelMatrix::square(3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    assert!((stability_lr(&id).unwrap() - 0.25).abs() < 1e-12);
    let d = KernelMatrix::square(2, vec![2.0, 0.0, 0.0, 1.0]);
    assert!((stability_lr(&d).unwrap() - 0.125).abs() < 1e-12);
    assert_eq!(stability_lr(&KernelMatrix::square(2, vec![0.0; 4])), Err(TrainError::ZeroKernel));
}

#[test]
fn lambda_max_matches_dense_eigensolver() {
    for seed in 0..10 {
        let k = random_psd(12, seed);
        let exact = DMatrix::from_row_slice(12, 12, &k.values).symmetric_eigen().eigenvalues.max();
        let got = lambda_max(&k).unwrap();
        assert!(((got - exact) / exact).abs() < 1e-6, "{got} vs {exact}");
    }
}

#[test]
fn lambda_max_of_network_gram() {
    let st = build_network(&small_net(Activation::Tanh, Readout::Flatten), 3).unwrap();
    let data = random_split(Shape::new(4, 4, 1), 8, 1);
    let k = ntk_gram(&st, &data.inputs).unwrap();
    let exact = DMatrix::from_row_slice(8, 8, &k.values).symmetric_eigen().eigenvalues.max();
    assert!(((lambda_max(&k).unwrap() - exact) / exact).abs() < 1e-6);
}

#[test]
fn metrics_conventions() {
    assert_eq!(train_loss(&[1.0, 2.0], &[0.0, 0.0]), 2.5);
    assert_eq!(test_loss(&[1.0, 2.0], &[0.0, 0.0]), 1.25);
    assert_eq!(accuracy(&[0.5, -0.1, 0.0], &[1.0, -1.0, 1.0]), 2.0 / 3.0);
    assert_eq!(accuracy(&[0.0], &[-1.0]), 0.0);
}

#[test]
fn scalar_gradient_descent_by_hand() {
    let train = Split::new(vec![Image::new(Shape::new(1, 1, 1), vec![1.0]).unwrap()], vec![1.0]).unwrap();
    let opts = TrainOptions { max_steps: 1, ..TrainOptions::default() };
    let one = train_full(scalar_model(0.0), &train, &train, &[], 0.5, &opts).unwrap();
    assert_eq!(one.state.params(), &[0.5]);
    let opts = TrainOptions { max_steps: 2, ..TrainOptions::default() };
    let two = train_full(scalar_model(0.0), &train, &train, &[], 0.5, &opts).unwrap();
    assert_eq!(two.state.params(), &[0.75]);
    assert_eq!(two.stop, StopReason::StepCap);
    assert_eq!(two.trajectory.records.iter().map(|r| r.step).collect::<Vec<_>>(), vec![0, 1, 2]);
    assert_eq!(two.trajectory.records[1].train_loss, 0.125);
}

#[test]
fn zero_learning_rate_is_constant() {
    let data = random_split(Shape::new(4, 4, 1), 6, 2);
    let st = build_network(&small_net(Activation::Relu, Readout::Gap), 5).unwrap();
    let opts = TrainOptions { max_steps: 5, ..TrainOptions::default() };
    let run = train_full(st.clone(), &data, &data, &[], 0.0, &opts).unwrap();
    assert_eq!(run.state.params(), st.params());
    let first = run.trajectory.records[0];
    assert!(run.trajectory.records.iter().all(|r| r.train_loss == first.train_loss && r.test_loss == first.test_loss));
}

#[test]
fn stops_at_full_accuracy_and_loss_threshold() {
    let data = random_split(Shape::new(4, 4, 1), 6, 3);
    let st = build_network(&small_net(Activation::Tanh, Readout::Flatten), 7).unwrap();
    let lr = stability_lr(&ntk_gram(&st, &data.inputs).unwrap()).unwrap();
    let opts = TrainOptions { max_steps: 5000, stop_at_full_accuracy: true, ..TrainOptions::default() };
    let run = train_full(st.clone(), &data, &data, &[], lr, &opts).unwrap();
    assert_eq!(run.stop, StopReason::FullAccuracy);
    assert_eq!(run.trajectory.records.last().unwrap().train_accuracy, 1.0);
    assert!(run.trajectory.records[..run.trajectory.records.len() - 1].iter().all(|r| r.train_accuracy < 1.0));
    let opts = TrainOptions { max_steps: 5000, loss_threshold: Some(0.05), ..TrainOptions::default() };
    let run = train_full(st, &data, &data, &[], lr, &opts).unwrap();
    assert_eq!(run.stop, StopReason::LossThreshold);
    assert!(run.trajectory.records.last().unwrap().train_loss <= 0.05);
}

#[test]
fn divergence_aborts_with_partial_trajectory() {
    let data = random_split(Shape::new(4, 4, 1), 6, 3);
    let st = build_network(&small_net(Activation::Identity, Readout::Flatten), 7).unwrap();
    let lr = 40.0 * stability_lr(&ntk_gram(&st, &data.inputs).unwrap()).unwrap();
    let run = train_full(st, &data, &data, &[], lr, &TrainOptions { max_steps: 500, ..TrainOptions::default() }).unwrap();
    assert_eq!(run.stop, StopReason::Diverged);
    assert!(run.trajectory.diverged);
    assert!(run.final_step < 500);
}

#[test]
fn train_loss_non_increasing_at_stability_lr() {
    for (i, spec) in [small_net(Activation::Tanh, Readout::Flatten), small_net(Activation::Relu, Readout::Gap)]
        .iter()
        .enumerate()
    {
        let data = random_split(Shape::new(4, 4, 1), 8, 10 + i as u64);
        let st = build_network(spec, 20 + i as u64).unwrap();
        let lr = stability_lr(&ntk_gram(&st, &data.inputs).unwrap()).unwrap();
        let run = train_full(st, &data, &data, &[], lr, &TrainOptions { max_steps: 300, ..TrainOptions::default() })
            .unwrap();
        assert!(run.trajectory.loss_increases().is_empty(), "{:?}", run.trajectory.loss_increases());
    }
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let data = random_split(Shape::new(4, 4, 1), 6, 4);
    let st = build_network(&small_net(Activation::Tanh, Readout::Flatten), 8).unwrap();
    let whole = train_full(st.clone(), &data, &data, &[], 0.05, &TrainOptions { max_steps: 40, ..TrainOptions::default() })
        .unwrap();
    let half = train_full(st, &data, &data, &[], 0.05, &TrainOptions { max_steps: 15, ..TrainOptions::default() }).unwrap();
    let rest = train_full(
        half.state,
        &data,
        &data,
        &[],
        0.05,
        &TrainOptions { max_steps: 40, step_offset: 15, ..TrainOptions::default() },
    )
    .unwrap();
    assert_eq!(rest.final_step, 40);
    assert_eq!(rest.state.params(), whole.state.params());
}

#[test]
fn identity_kernel_converges_in_one_step() {
    let id = KernelMatrix::square(3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    let y = [1.0, -1.0, 1.0];
    let et = KernelMatrix::new(vec![], vec![0, 1, 2], vec![]);
    let t = evolve_linear(&id, &et, &[0.3, 0.2, -4.0], &[], &y, &[], 1.0, 1, 1).unwrap();
    assert_eq!(t.records[1].train_loss, 0.0);
}

#[test]
fn linear_residual_contracts_below_critical_rate() {
    for seed in 0..5 {
        let k = random_psd(10, seed);
        let lr = 0.99 / lambda_max(&k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f0: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..10).map(|i| if i % 3 == 0 { 1.0 } else { -1.0 }).collect();
        let et = KernelMatrix::new(vec![], (0..10).collect(), vec![]);
        let t = evolve_linear(&k, &et, &f0, &[], &y, &[], lr, 200, 1).unwrap();
        assert!(t.records.windows(2).all(|w| w[1].train_loss <= w[0].train_loss * (1.0 + 1e-12)));
    }
}

#[test]
fn halving_rate_and_doubling_steps_reach_same_fixed_point() {
    let k = random_psd(6, 9);
    let lr = stability_lr(&k).unwrap();
    let y = [1.0, -1.0, 1.0, 1.0, -1.0, -1.0];
    let f0 = [0.1, 0.2, -0.3, 0.0, 0.5, -0.5];
    let et = KernelMatrix::new(vec![], (0..6).collect(), vec![]);
    let a = evolve_linear(&k, &et, &f0, &[], &y, &[], lr, 50_000, 50_000).unwrap();
    let b = evolve_linear(&k, &et, &f0, &[], &y, &[], lr / 2.0, 100_000, 100_000).unwrap();
    let ra = (2.0 * a.records.last().unwrap().train_loss).sqrt();
    let rb = (2.0 * b.records.last().unwrap().train_loss).sqrt();
    assert!(ra < 1e-6 && rb < 1e-6, "{ra} {rb}");
}

#[test]
fn linear_model_in_parameters_matches_linearization() {
    // No hidden layers: f is linear in the parameters and the kernel is frozen.
    let spec = NetworkSpec {
        input_shape: Shape::new(3, 2, 2),
        width: 1,
        activation: Activation::Tanh,
        readout: Readout::Flatten,
        layers: vec![],
    };
    let st = build_network(&spec, 4).unwrap();
    let train = random_split(Shape::new(3, 2, 2), 8, 5);
    let test = random_split(Shape::new(3, 2, 2), 5, 6);
    let lr = 0.5 * stability_lr(&ntk_gram(&st, &train.inputs).unwrap()).unwrap();
    let g = gap_seed(st, &train, &test, lr, 50, 1).unwrap();
    for (a, b) in g.full.records.iter().zip(&g.linear.records) {
        assert_eq!(a.step, b.step);
        assert!((a.train_loss - b.train_loss).abs() <= 1e-8 * a.train_loss.abs().max(1e-12));
        assert!((a.test_loss - b.test_loss).abs() <= 1e-8 * a.test_loss.abs().max(1e-12));
    }
}

#[test]
fn gap_is_zero_at_step_zero_and_aggregates() {
    let train = random_split(Shape::new(4, 4, 1), 6, 7);
    let test = random_split(Shape::new(4, 4, 1), 4, 8);
    let spec = small_net(Activation::Tanh, Readout::Flatten);
    let runs: Vec<_> = (0..3)
        .map(|s| gap_seed(build_network(&spec, s).unwrap(), &train, &test, 0.1, 20, 5).unwrap())
        .collect();
    for r in &runs {
        assert_eq!(r.full.records[0].test_loss, r.linear.records[0].test_loss);
    }
    let series = GapSeries::aggregate(6, &runs);
    assert_eq!(series.steps, vec![0, 5, 10, 15, 20]);
    assert_eq!(series.loss_gap()[0], 0.0);
    assert_eq!(series.seeds, 3);
    assert!(series.early_stopping_step().is_some());
}

#[test]
fn instability_on_synthetic_series() {
    let opts = InstabilityOptions::default();
    let smooth: Vec<(usize, f64)> = (1..60).map(|k| (10 * k, 1.0 + 0.01 * k as f64)).collect();
    assert_eq!(detect_instability(&smooth, &[], &opts), None);
    let mut jump: Vec<(usize, f64)> = (1..60).map(|k| (10 * k, 1e-3)).collect();
    jump[24].1 = 0.1;
    assert_eq!(jump[24].0, 250);
    assert_eq!(detect_instability(&jump, &[], &opts), Some(250));
    let losses: Vec<(usize, f64)> = (0..100).map(|k| (k, 1.0 / (1.0 + k as f64))).collect();
    assert_eq!(detect_instability(&[], &losses, &opts), None);
    let mut spiky = losses.clone();
    spiky[70].1 = 5.0;
    assert_eq!(detect_instability(&smooth, &spiky, &opts), Some(70));
    let mut tiny: Vec<(usize, f64)> = (0..100).map(|k| (k, (-(k as f64) / 5.0).exp())).collect();
    tiny[90].1 = 50.0 * tiny[89].1;
    assert_eq!(detect_instability(&[], &tiny, &opts), None);
}

#[test]
fn ntk_stat_samples_average_to_grid_statistics() {
    let ks: Vec<KernelMatrix> = (0..5).map(|s| random_psd(3, s)).collect();
    let (m, v) = ntk_stat_samples(&ks);
    let n = ks.len() as f64;
    let mut mean_abs_centre = 0.0;
    let mut var = 0.0;
    for e in 0..9 {
        let xs: Vec<f64> = ks.iter().map(|k| k.values[e]).collect();
        let mu = xs.iter().sum::<f64>() / n;
        mean_abs_centre += mu.abs() / 9.0;
        var += xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1.0) / 9.0;
    }
    assert!((m.iter().sum::<f64>() / n - mean_abs_centre).abs() < 1e-12);
    assert!((v.iter().sum::<f64>() / n - var).abs() < 1e-12);
}

#[test]
fn dtheta_finite_difference_is_converged() {
    let spec = NetworkSpec {
        input_shape: Shape::new(3, 3, 1),
        width: 256,
        activation: Activation::Identity,
        readout: Readout::Flatten,
        layers: vec![LayerSpec::Dense],
    };
    let st = build_network(&spec, 1).unwrap();
    let train = random_split(Shape::new(3, 3, 1), 6, 11);
    let a = dtheta_dt0(&st, &train, &[], 0.01).unwrap();
    let b = dtheta_dt0(&st, &train, &[], 0.005).unwrap();
    assert!(((a.value - b.value) / b.value).abs() < 0.01, "{} {}", a.value, b.value);
    assert!((a.eta - 2.0 * b.eta).abs() < 1e-15 * a.eta);
}

#[test]
fn drift_is_first_order_in_step() {
    let spec = NetworkSpec {
        input_shape: Shape::new(3, 3, 1),
        width: 16,
        activation: Activation::Identity,
        readout: Readout::Flatten,
        layers: vec![LayerSpec::Conv { kw: 3, kh: 3 }, LayerSpec::Conv { kw: 3, kh: 3 }],
    };
    let st = build_network(&spec, 2).unwrap();
    let train = random_split(Shape::new(3, 3, 1), 5, 12);
    let k0 = ntk_gram(&st, &train.inputs).unwrap();
    let (_, grad) = wideconv_core::nn::loss_gradient(&st, &train.inputs, &train.labels).unwrap();
    let eta = 1e-5 * stability_lr(&k0).unwrap();
    let drift = |step: f64| {
        let mut s = st.clone();
        s.descend(&grad, step);
        ntk_gram(&s, &train.inputs).unwrap().mean_abs_diff(&k0)
    };
    let ratio = drift(2.0 * eta) / drift(eta);
    assert!((ratio - 2.0).abs() < 0.1, "{ratio}");
}

#[test]
fn drift_runs_to_common_step() {
    let spec = small_net(Activation::Relu, Readout::Flatten);
    let train = random_split(Shape::new(4, 4, 1), 6, 13);
    let opts = DriftOptions { step_cap: 5000, snapshot_stride: 10, ..DriftOptions::default() };
    let starts: Vec<_> = (0..3).map(|s| drift_start(build_network(&spec, s).unwrap(), &train, &[], &opts).unwrap()).collect();
    let t_star = starts.iter().map(|s| s.reached.unwrap()).max().unwrap();
    for s in starts {
        let reached = s.reached.unwrap();
        let d = drift_finish(s, &train, &[], t_star, 10).unwrap();
        assert_eq!(d.step, t_star);
        assert_eq!(d.reached, Some(reached));
        assert!(d.value > 0.0);
        assert!(d.drifts.windows(2).all(|w| w[0].0 < w[1].0));
    }
}

#[test]
fn training_is_deterministic() {
    let data = random_split(Shape::new(4, 4, 1), 6, 14);
    let spec = small_net(Activation::Tanh, Readout::Gap);
    let run = |_: ()| {
        let st = build_network(&spec, 3).unwrap();
        train_full(st, &data, &data, &data.inputs, 0.1, &TrainOptions { max_steps: 30, snapshot_stride: Some(10), ..TrainOptions::default() })
            .unwrap()
            .trajectory
    };
    assert_eq!(run(()), run(()));
    let f = forward(&build_network(&spec, 3).unwrap(), &data.inputs).unwrap();
    assert!(mean_abs(&f) > 0.0);
}

#[test]
fn late_instability_needs_a_quiet_stretch() {
    let opts = InstabilityOptions::default();
    let drifts: Vec<(usize, f64)> = (1..=60)
        .map(|k| {
            let s = 10 * k;
            let d = if s <= 100 && k % 3 == 0 { 0.5 } else if s == 510 { 0.05 } else { 1e-3 };
            (s, d)
        })
        .collect();
    let losses: Vec<(usize, f64)> = (0..=600).map(|s| (s, 1.0 / (1.0 + s as f64))).collect();
    assert_eq!(detect_instability(&drifts, &losses, &opts), Some(30));
    assert_eq!(detect_after_quiet(&drifts, &losses, 0, 200, &opts), Some(510));
    assert_eq!(detect_after_quiet(&drifts, &losses, 0, 500, &opts), None);
    assert_eq!(detect_after_quiet(&drifts, &losses, 0, 0, &opts), Some(30));
}
