use wideconv::config::{DatasetConfig, ExperimentConfig, ExperimentKind, LrPolicy, TrainingConfig};
use wideconv::experiments::{load_dataset, run_experiment, ExperimentError};
use wideconv_core::{Activation, LayerSpec, NetworkSpec, Readout, Shape};

fn base(kind: ExperimentKind, arch: NetworkSpec, widths: Vec<usize>, seeds: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_json(r#"{"kind": "exponent", "correlation": {"builtin": "ntk"}}"#, "c").unwrap();
    cfg.kind = kind;
    cfg.correlation = None;
    cfg.architecture = Some(arch);
    cfg.widths = widths;
    cfg.seeds = seeds;
    cfg.root_seed = 11;
    cfg.dataset = Some(DatasetConfig::Synthetic { shape: Shape::new(3, 3, 1), n_train: 6, n_test: 6, seed: 2 });
    cfg
}

fn conv_net(act: Activation) -> NetworkSpec {
    NetworkSpec {
        input_shape: Shape::new(3, 3, 1),
        width: 4,
        activation: act,
        readout: Readout::Flatten,
        layers: vec![LayerSpec::Conv { kw: 3, kh: 3 }],
    }
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let cfg = base(ExperimentKind::NtkStats, conv_net(Activation::Tanh), vec![4, 8, 16], 5);
    let a = in_pool(1, || run_experiment(&cfg).unwrap());
    let b = in_pool(3, || run_experiment(&cfg).unwrap());
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let cfg = base(ExperimentKind::Drift, conv_net(Activation::Relu), vec![4, 8, 16], 3);
    let a = in_pool(1, || run_experiment(&cfg).unwrap());
    let b = in_pool(4, || run_experiment(&cfg).unwrap());
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn deep_linear_dense_variance_decays_as_one_over_width() {
    let arch = NetworkSpec {
        input_shape: Shape::new(3, 3, 1),
        width: 4,
        activation: Activation::Identity,
        readout: Readout::Flatten,
        layers: vec![LayerSpec::Dense, LayerSpec::Dense],
    };
    let mut cfg = base(ExperimentKind::NtkStats, arch, vec![16, 32, 64, 128, 256], 200);
    cfg.fit_range = Some([16, 256]);
    let out = run_experiment(&cfg).unwrap();
    let mean = out.series_named("ntk_mean").unwrap();
    let var = out.series_named("ntk_variance").unwrap();
    assert!(mean.alpha().unwrap().abs() < 0.1, "{:?}", mean.alpha());
    assert!((var.alpha().unwrap() - 1.0).abs() < 0.2, "{:?}", var.alpha());
}

#[test]
fn dtheta_and_drift_decay_with_width() {
    let mut cfg = base(ExperimentKind::Dtheta0, conv_net(Activation::Tanh), vec![16, 64, 256], 8);
    cfg.fit_range = Some([16, 256]);
    let out = run_experiment(&cfg).unwrap();
    let a = out.series[0].alpha().unwrap();
    assert!(a > 0.5 && a < 1.5, "{a}");
    let mut cfg = base(ExperimentKind::Drift, conv_net(Activation::Relu), vec![16, 64, 256], 6);
    cfg.fit_range = Some([16, 256]);
    let out = run_experiment(&cfg).unwrap();
    assert!(out.series[0].alpha().unwrap() > 0.3);
    assert_eq!(out.drift.len(), 18);
    for w in [16, 64, 256] {
        let at: Vec<usize> = out.drift.iter().filter(|d| d.width == w).map(|d| d.measured_at).collect();
        let reached = out.drift.iter().filter(|d| d.width == w).filter_map(|d| d.reached).max().unwrap();
        assert!(at.iter().all(|&t| t == reached));
    }
}

#[test]
fn lossgap_single_width_cannot_be_fitted() {
    let mut cfg = base(ExperimentKind::Lossgap, conv_net(Activation::Tanh), vec![8], 3);
    cfg.training = TrainingConfig { horizon: 60, ..TrainingConfig::default() };
    let out = run_experiment(&cfg).unwrap();
    let gap = out.gap.unwrap();
    assert_eq!(gap.points.len(), 1);
    for s in &out.series {
        assert!(s.fit.is_none(), "{}", s.series.observable);
        let e = s.fit_error.as_deref().unwrap();
        assert!(e.contains("3 widths"), "{e}");
    }
    assert_eq!(gap.series[0].loss_gap()[0], 0.0);
}

#[test]
fn lossgap_late_step_is_multiple_of_early() {
    let mut cfg = base(ExperimentKind::Lossgap, conv_net(Activation::Tanh), vec![4, 8, 16], 3);
    cfg.lr = LrPolicy::Stability { factor: 1.0 };
    cfg.training = TrainingConfig { horizon: 400, late_factor: 3, ..TrainingConfig::default() };
    let out = run_experiment(&cfg).unwrap();
    for p in out.gap.unwrap().points {
        assert!(p.late_step == (3 * p.early_step).min(400), "{p:?}");
    }
}

#[test]
fn divergent_seeds_are_excluded_and_counted() {
    let mut cfg = base(ExperimentKind::Drift, conv_net(Activation::Identity), vec![4, 8, 16], 3);
    cfg.lr = LrPolicy::Fixed { value: 50.0 };
    let out = run_experiment(&cfg).unwrap();
    assert!(out.excluded() > 0);
    assert!(out.series[0].fit.is_none());
}

#[test]
fn missing_cifar_location_is_reported() {
    std::env::remove_var(wideconv::data::DATA_ENV);
    let d = DatasetConfig::Cifar10 { path: None, classes: [0, 1], train_per_class: 1, test_per_class: 0, seed: 0 };
    assert!(matches!(load_dataset(&d), Err(ExperimentError::Missing(_))));
}

#[test]
fn oracle_matches_exact_moments() {
    let arch = NetworkSpec {
        input_shape: Shape::new(3, 3, 2),
        width: 4,
        activation: Activation::Identity,
        readout: Readout::Gap,
        layers: vec![LayerSpec::Conv { kw: 3, kh: 3 }, LayerSpec::Conv { kw: 1, kh: 1 }],
    };
    let mut cfg = base(ExperimentKind::Oracle, arch, vec![2, 4, 8], 2);
    cfg.dataset = None;
    cfg.mc_samples = 2000;
    let out = run_experiment(&cfg).unwrap();
    for r in &out.oracle {
        assert!(r.ntk_z() < 4.0, "{r:?}");
    }
}
