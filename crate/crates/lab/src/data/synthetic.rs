use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use wideconv_core::train::Split;
use wideconv_core::{Image, Shape};

use super::{finish, LoadedData};

/// Standard-normal inputs with uniformly random `+-1` labels.
pub fn synthetic(shape: Shape, n_train: usize, n_test: usize, seed: u64) -> LoadedData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| {
        let mut inputs = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let data: Vec<f64> = (0..shape.len()).map(|_| rng.sample(StandardNormal)).collect();
            inputs.push(Image::new(shape, data).expect("shape matches"));
            labels.push(if rng.random::<bool>() { 1.0 } else { -1.0 });
        }
        Split { inputs, labels }
    };
    let train = draw(n_train);
    let test = draw(n_test);
    finish("synthetic", Vec::new(), None, seed, train, test, BTreeMap::new())
}
