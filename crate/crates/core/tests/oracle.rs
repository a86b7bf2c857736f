use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wideconv_core::graph::{dtheta_dt_spec, ntk_spec, pair_spec, CorrelationSpec, FactorDoc, SpecDocument};
use wideconv_core::nn::{build_network, forward_one, ntk_matrix, Activation, Inner, LayerSpec, NetworkSpec, Readout};
use wideconv_core::oracle::{
    chain_count, decompose, evaluate_chain, evaluate_sum, mc_oracle, mc_oracle_range, wick_ntk, wick_pair, McAccumulator,
    McPlan, OracleError, Step,
};
use wideconv_core::{Image, Shape};

fn net(shape: Shape, width: usize, readout: Readout, layers: Vec<LayerSpec>) -> NetworkSpec {
    NetworkSpec { input_shape: shape, width, activation: Activation::Identity, readout, layers }
}

fn random_image(shape: Shape, rng: &mut ChaCha8Rng) -> Image {
    Image::new(shape, (0..shape.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn conv(k: usize) -> LayerSpec {
    LayerSpec::Conv { kw: k, kh: k }
}

/// Linear conv + skip + GAP architecture used by several checks.
fn mixed_net(width: usize) -> NetworkSpec {
    net(
        Shape::new(3, 3, 2),
        width,
        Readout::Gap,
        vec![conv(3), LayerSpec::Skip { target: 1, inner: Inner::Conv { kw: 3, kh: 1 } }, conv(1)],
    )
}

#[test]
fn single_conv_has_nine_chains() {
    let s = net(Shape::new(4, 4, 1), 3, Readout::Flatten, vec![conv(3)]);
    assert_eq!(decompose(&s).unwrap().chains.len(), 9);
    assert_eq!(chain_count(&s).unwrap(), 9);
}

#[test]
fn skip_gives_two_chains_of_different_depth() {
    let s = net(
        Shape::new(2, 2, 1),
        3,
        Readout::Flatten,
        vec![LayerSpec::Dense, LayerSpec::Dense, LayerSpec::Skip { target: 1, inner: Inner::Dense }],
    );
    let d = decompose(&s).unwrap();
    let mut depths: Vec<usize> = d.chains.iter().map(|c| c.depth()).collect();
    depths.sort();
    assert_eq!(depths, vec![1, 3]);
    assert!(d.chains.iter().any(|c| c.steps.contains(&Step::Identity { layer: 2, from: 1 })));
}

#[test]
fn dense_net_is_one_chain() {
    let s = net(Shape::new(2, 3, 2), 4, Readout::Flatten, vec![LayerSpec::Dense; 3]);
    let d = decompose(&s).unwrap();
    assert_eq!(d.chains.len(), 1);
    assert_eq!(d.chains[0].depth(), 3);
}

#[test]
fn counts_are_sums_over_paths() {
    let s = mixed_net(2);
    // conv 9, skip (3 + identity), conv 1, GAP readout 9 positions.
    assert_eq!(chain_count(&s).unwrap(), (9 * 3 + 9) * 9);
    assert_eq!(decompose(&s).unwrap().chains.len(), 324);
}

#[test]
fn nonlinear_specs_rejected() {
    let mut s = mixed_net(2);
    s.activation = Activation::Tanh;
    assert!(matches!(decompose(&s), Err(OracleError::Nonlinear(_))));
    let p = net(Shape::new(4, 4, 1), 2, Readout::Flatten, vec![conv(3), LayerSpec::MaxPool { size: 2, stride: 2 }]);
    assert!(matches!(wick_pair(&p, &Image::zeros(p.input_shape), &Image::zeros(p.input_shape)), Err(OracleError::Nonlinear(_))));
}

#[test]
fn sum_of_chains_is_linear_and_vanishes_at_zero() {
    let s = mixed_net(3);
    let st = build_network(&s, 4).unwrap();
    let d = decompose(&s).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_image(s.input_shape, &mut rng);
    assert_eq!(evaluate_sum(&d, &st, &Image::zeros(s.input_shape)).unwrap(), 0.0);
    let a = evaluate_sum(&d, &st, &x).unwrap();
    let b = evaluate_sum(&d, &st, &x.scaled(-2.5)).unwrap();
    assert!((b + 2.5 * a).abs() < 1e-12 * (1.0 + a.abs()));
}

#[test]
fn sharing_map_covers_readout() {
    let d = decompose(&mixed_net(2)).unwrap();
    let map = d.sharing_map();
    let readout = map.iter().find(|(w, _)| *w == wideconv_core::oracle::WeightRef::Readout).unwrap();
    assert_eq!(readout.1.len(), d.chains.len());
}

/// Random linear nets built from conv, dense, skip and GAP layers.
fn arb_linear() -> impl Strategy<Value = NetworkSpec> {
    let layer = (0u8..4, prop_oneof![Just(1usize), Just(3usize)], prop_oneof![Just(1usize), Just(3usize)]);
    (1usize..4, 1usize..4, 1usize..3, 1usize..4, any::<bool>(), prop::collection::vec(layer, 1..4)).prop_map(
        |(h, w, c, n, gap, raw)| {
            let mut layers = vec![];
            let mut shapes = vec![Shape::new(h, w, c)];
            for (kind, kw, kh) in raw {
                let prev = *shapes.last().unwrap();
                let (l, next) = match kind {
                    0 => (LayerSpec::Conv { kw, kh }, Shape::new(prev.height, prev.width, n)),
                    1 if prev.positions() == 1 => (LayerSpec::Dense, Shape::new(1, 1, n)),
                    1 => (LayerSpec::Gap, Shape::new(1, 1, prev.channels)),
                    _ => {
                        let straight = Shape::new(prev.height, prev.width, n);
                        match shapes.iter().rposition(|s| *s == straight) {
                            Some(t) => (LayerSpec::Skip { target: t, inner: Inner::Conv { kw, kh } }, straight),
                            None => (LayerSpec::Conv { kw, kh }, straight),
                        }
                    }
                };
                layers.push(l);
                shapes.push(next);
            }
            net(Shape::new(h, w, c), n, if gap { Readout::Gap } else { Readout::Flatten }, layers)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn prop_decomposition_identity(s in arb_linear(), seed in 0u64..10_000) {
        let st = build_network(&s, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_image(s.input_shape, &mut rng);
        let d = decompose(&s).unwrap();
        prop_assert_eq!(d.chains.len() as u128, chain_count(&s).unwrap());
        let f = forward_one(&st, &x).unwrap();
        let g = evaluate_sum(&d, &st, &x).unwrap();
        prop_assert!((f - g).abs() <= 1e-10 * (1.0 + f.abs()), "{} vs {}", f, g);
    }

    #[test]
    fn prop_wick_is_width_invariant(s in arb_linear(), seed in 0u64..1000, n2 in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x1 = random_image(s.input_shape, &mut rng);
        let x2 = random_image(s.input_shape, &mut rng);
        let other = s.with_width(n2);
        prop_assume!(other.plan().is_ok());
        let (p1, p2) = (wick_pair(&s, &x1, &x2).unwrap(), wick_pair(&other, &x1, &x2).unwrap());
        let (k1, k2) = (wick_ntk(&s, &x1, &x2).unwrap(), wick_ntk(&other, &x1, &x2).unwrap());
        prop_assert!((p1 - p2).abs() <= 1e-12 * (1.0 + p1.abs()));
        prop_assert!((k1 - k2).abs() <= 1e-12 * (1.0 + k1.abs()));
    }
}

#[test]
fn wick_pair_dense_by_hand() {
    // One hidden dense layer: E[f f'] = s_r^2 s^2 sum_j sum_k x_k x'_k = x.x' / D.
    let shape = Shape::new(1, 1, 5);
    let x1 = Image::new(shape, vec![1.0, -0.5, 0.25, 2.0, 0.0]).unwrap();
    let x2 = Image::new(shape, vec![0.5, 1.0, -1.0, 0.5, 3.0]).unwrap();
    let dot: f64 = x1.data().iter().zip(x2.data()).map(|(a, b)| a * b).sum();
    for d in 1..5 {
        let s = net(shape, 7, Readout::Flatten, vec![LayerSpec::Dense; d]);
        assert!((wick_pair(&s, &x1, &x2).unwrap() - dot / 5.0).abs() < 1e-14);
        assert!((wick_ntk(&s, &x1, &x2).unwrap() - (d + 1) as f64 * dot / 5.0).abs() < 1e-13);
    }
    let zero = Image::zeros(shape);
    let s = net(shape, 7, Readout::Flatten, vec![LayerSpec::Dense; 2]);
    assert_eq!(wick_pair(&s, &x1, &zero).unwrap(), 0.0);
    let e1 = Image::new(shape, vec![1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let e2 = Image::new(shape, vec![0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
    assert_eq!(wick_ntk(&s, &e1, &e2).unwrap(), 0.0);
}

#[test]
fn wick_pair_one_by_one_conv_gap() {
    // z_j = x.U_j / sqrt(c), f = sum_j V_j z_j / sqrt(n): E[f f'] = x.x' / c.
    let shape = Shape::new(1, 1, 3);
    let s = net(shape, 6, Readout::Gap, vec![conv(1)]);
    let x1 = Image::new(shape, vec![1.0, 2.0, -1.0]).unwrap();
    let x2 = Image::new(shape, vec![0.5, -1.0, 4.0]).unwrap();
    assert!((wick_pair(&s, &x1, &x2).unwrap() - (0.5 - 2.0 - 4.0) / 3.0).abs() < 1e-14);
}

fn ensemble(s: &NetworkSpec, x1: &Image, x2: &Image, seeds: u64) -> (McAccumulator, McAccumulator) {
    let (mut ff, mut th) = (McAccumulator::default(), McAccumulator::default());
    for seed in 0..seeds {
        let st = build_network(s, 1_000_000 + seed).unwrap();
        ff.push(forward_one(&st, x1).unwrap() * forward_one(&st, x2).unwrap());
        th.push(ntk_matrix(&st, &[x1.clone()], &[x2.clone()]).unwrap().values[0]);
    }
    (ff, th)
}

#[test]
fn wick_matches_ensemble_mixed_net() {
    let s = mixed_net(8);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let x1 = random_image(s.input_shape, &mut rng);
    let x2 = random_image(s.input_shape, &mut rng);
    let (ff, th) = ensemble(&s, &x1, &x2, 4000);
    let (ff, th) = (ff.estimate(), th.estimate());
    let p = wick_pair(&s, &x1, &x2).unwrap();
    let k = wick_ntk(&s, &x1, &x2).unwrap();
    assert!((ff.mean - p).abs() < 3.0 * ff.stderr, "pair {} vs {p} +- {}", ff.mean, ff.stderr);
    assert!((th.mean - k).abs() < 3.0 * th.stderr, "ntk {} vs {k} +- {}", th.mean, th.stderr);
}

#[test]
fn wick_matches_ensemble_dense_gap_net() {
    let s = net(
        Shape::new(2, 2, 2),
        8,
        Readout::Flatten,
        vec![conv(3), LayerSpec::Gap, LayerSpec::Dense, LayerSpec::Skip { target: 3, inner: Inner::Dense }],
    );
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let x1 = random_image(s.input_shape, &mut rng);
    let x2 = random_image(s.input_shape, &mut rng);
    let (ff, th) = ensemble(&s, &x1, &x2, 4000);
    let (ff, th) = (ff.estimate(), th.estimate());
    let p = wick_pair(&s, &x1, &x2).unwrap();
    let k = wick_ntk(&s, &x1, &x2).unwrap();
    assert!((ff.mean - p).abs() < 3.0 * ff.stderr, "pair {} vs {p} +- {}", ff.mean, ff.stderr);
    assert!((th.mean - k).abs() < 3.0 * th.stderr, "ntk {} vs {k} +- {}", th.mean, th.stderr);
}

#[test]
fn distinct_chains_are_uncorrelated() {
    let s = net(Shape::new(3, 3, 1), 4, Readout::Flatten, vec![conv(3)]);
    let d = decompose(&s).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let x = random_image(s.input_shape, &mut rng);
    let (i, j) = (0, 4);
    assert!(d.chains[i].weights().iter().filter(|w| d.chains[j].weights().contains(w)).count() == 1);
    let mut acc = McAccumulator::default();
    for seed in 0..10_000 {
        let st = build_network(&s, seed).unwrap();
        acc.push(evaluate_chain(&d.chains[i], &st, &x).unwrap() * evaluate_chain(&d.chains[j], &st, &x).unwrap());
    }
    let e = acc.estimate();
    assert!(e.mean.abs() < 3.0 * e.stderr, "{} +- {}", e.mean, e.stderr);
}

fn inputs(shape: Shape, names: &[&str], seed: u64) -> BTreeMap<String, Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    names.iter().map(|n| (n.to_string(), random_image(shape, &mut rng))).collect()
}

#[test]
fn mc_odd_moment_vanishes() {
    let s = mixed_net(4);
    let corr = CorrelationSpec::from_document(SpecDocument {
        factors: vec![FactorDoc { input: "x1".into(), slots: vec![] }],
        pairs: vec![],
        depths: None,
    });
    // A single factor is an odd correlation function; build E[f] through the plan directly.
    assert!(corr.is_err());
    let plan = McPlan { inputs: vec![inputs(s.input_shape, &["x1"], 1)["x1"].clone()], plain: vec![0], contracted: vec![] };
    let e = mc_oracle_range(&s, &plan, 5, 0..4000).unwrap().estimate();
    assert!(e.mean.abs() < 3.0 * e.stderr);
}

#[test]
fn mc_matches_wick() {
    let s = mixed_net(8);
    let ins = inputs(s.input_shape, &["x1", "x2"], 2);
    let p = mc_oracle(&s, &pair_spec(), &ins, 3000, 9).unwrap();
    let k = mc_oracle(&s, &ntk_spec(), &ins, 3000, 9).unwrap();
    let wp = wick_pair(&s, &ins["x1"], &ins["x2"]).unwrap();
    let wk = wick_ntk(&s, &ins["x1"], &ins["x2"]).unwrap();
    assert!((p.mean - wp).abs() < 3.0 * p.stderr);
    assert!((k.mean - wk).abs() < 3.0 * k.stderr);
}

#[test]
fn mc_split_matches_sequential() {
    let s = mixed_net(3);
    let ins = inputs(s.input_shape, &["x1", "x2"], 3);
    let plan = McPlan::new(&ntk_spec(), &ins).unwrap();
    let whole = mc_oracle_range(&s, &plan, 77, 0..60).unwrap();
    let mut parts = mc_oracle_range(&s, &plan, 77, 0..25).unwrap();
    parts.merge(&mc_oracle_range(&s, &plan, 77, 25..60).unwrap());
    assert_eq!(whole.count, parts.count);
    assert!((whole.mean - parts.mean).abs() < 1e-12 * whole.mean.abs().max(1.0));
    assert!((whole.m2 - parts.m2).abs() < 1e-9 * whole.m2.abs().max(1.0));
}

#[test]
fn mc_stderr_shrinks_with_samples() {
    let s = mixed_net(4);
    let ins = inputs(s.input_shape, &["x1", "x2"], 4);
    let a = mc_oracle(&s, &pair_spec(), &ins, 400, 1).unwrap();
    let b = mc_oracle(&s, &pair_spec(), &ins, 1600, 1).unwrap();
    let ratio = a.stderr / b.stderr;
    assert!((1.5..2.7).contains(&ratio), "{ratio}");
}

#[test]
fn mc_rejects_second_derivatives_and_missing_inputs() {
    let s = mixed_net(3);
    let ins = inputs(s.input_shape, &["x1", "x2", "x3", "x4"], 5);
    assert!(matches!(
        mc_oracle(&s, &dtheta_dt_spec(), &ins, 2, 0),
        Err(OracleError::Unrealizable { factor: 0, slots: 2 })
    ));
    let few = inputs(s.input_shape, &["x1"], 5);
    assert!(matches!(mc_oracle(&s, &pair_spec(), &few, 2, 0), Err(OracleError::MissingInput(n)) if n == "x2"));
}
