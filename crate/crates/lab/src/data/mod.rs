//! Dataset loaders, class selection, standardization and content digests.

mod cifar;
mod idx;
mod synthetic;

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use wideconv_core::train::Split;
use wideconv_core::{Image, Shape};

pub use cifar::{load_cifar10, parse_cifar_records, CIFAR_RECORD};
pub use idx::{load_mnist, parse_idx_images, parse_idx_labels, IDX_IMAGES, IDX_LABELS};
pub use synthetic::synthetic;

/// Directory holding datasets (`mnist/`, `cifar-10-batches-bin/`).
pub const DATA_ENV: &str = "WIDECONV_DATA";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{file}: bad magic {found:#010x}, expected {expected:#010x}")]
    BadMagic { file: String, found: u32, expected: u32 },
    #[error("{file}: truncated, expected {expected} bytes, found {found}")]
    Truncated { file: String, expected: usize, found: usize },
    #[error("{file}: image and label counts differ ({images} vs {labels})")]
    CountMismatch { file: String, images: usize, labels: usize },
    #[error("{file}: record at byte offset {offset} is {found} bytes, expected {expected}")]
    RecordSize { file: String, offset: usize, found: usize, expected: usize },
    #[error("{file}: unknown class id {class} at byte offset {offset}")]
    UnknownClass { file: String, class: u8, offset: usize },
    #[error("class {class} requested but must be in 0..=9")]
    ClassOutOfRange { class: u8 },
    #[error("the two classes must differ")]
    SameClass,
    #[error("{split}: class {class} has {available} examples, {requested} requested")]
    Insufficient { split: &'static str, class: u8, requested: usize, available: usize },
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    std::fs::read(path).map_err(|source| DataError::Io { path: path.display().to_string(), source })
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One split: standardized inputs with `+-1` labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub split: Split,
    /// Original class id to label.
    pub class_map: BTreeMap<u8, f64>,
    pub digest: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.split.len()
    }

    pub fn is_empty(&self) -> bool {
        self.split.is_empty()
    }

    pub fn inputs(&self) -> &[Image] {
        &self.split.inputs
    }

    pub fn labels(&self) -> &[f64] {
        &self.split.labels
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceFile {
    pub name: String,
    pub sha256: String,
}

/// Everything needed to reproduce a loaded pair of splits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataManifest {
    pub source: String,
    pub files: Vec<SourceFile>,
    pub classes: Option<[u8; 2]>,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub normalization: String,
    pub mean: f64,
    pub std: f64,
    pub train_digest: String,
    pub test_digest: String,
}

#[derive(Clone, Debug)]
pub struct LoadedData {
    pub train: Dataset,
    pub test: Dataset,
    pub manifest: DataManifest,
}

/// Global mean and population standard deviation over every training pixel.
/// An empty or constant training split leaves values unchanged.
pub fn standardization(train: &[Image]) -> (f64, f64) {
    let count: usize = train.iter().map(|x| x.data().len()).sum();
    if count == 0 {
        return (0.0, 1.0);
    }
    let mean = train.iter().flat_map(|x| x.data()).sum::<f64>() / count as f64;
    let var = train.iter().flat_map(|x| x.data()).map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
    if var > 0.0 {
        (mean, var.sqrt())
    } else {
        (mean, 1.0)
    }
}

pub fn apply_standardization(xs: &mut [Image], mean: f64, std: f64) {
    for x in xs {
        x.data_mut().iter_mut().for_each(|v| *v = (*v - mean) / std);
    }
}

/// SHA-256 over shapes, values and labels, little-endian.
pub fn split_digest(split: &Split) -> String {
    let mut h = Sha256::new();
    h.update((split.len() as u64).to_le_bytes());
    for (x, y) in split.inputs.iter().zip(&split.labels) {
        let s = x.shape();
        for d in [s.height, s.width, s.channels] {
            h.update((d as u64).to_le_bytes());
        }
        for v in x.data() {
            h.update(v.to_le_bytes());
        }
        h.update(y.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// First class maps to `+1`, second to `-1`.
pub fn class_map(classes: [u8; 2]) -> BTreeMap<u8, f64> {
    BTreeMap::from([(classes[0], 1.0), (classes[1], -1.0)])
}

pub(crate) fn check_classes(classes: [u8; 2]) -> Result<(), DataError> {
    for c in classes {
        if c > 9 {
            return Err(DataError::ClassOutOfRange { class: c });
        }
    }
    if classes[0] == classes[1] {
        return Err(DataError::SameClass);
    }
    Ok(())
}

/// Shuffle indices under `seed`, then keep the first `per_class` of each class
/// in shuffled order.
pub(crate) fn select(
    split: &'static str,
    labels: &[u8],
    classes: [u8; 2],
    per_class: usize,
    seed: u64,
) -> Result<Vec<usize>, DataError> {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut taken = [0usize; 2];
    let mut out = Vec::with_capacity(2 * per_class);
    for i in order {
        if let Some(c) = classes.iter().position(|&c| c == labels[i]) {
            if taken[c] < per_class {
                taken[c] += 1;
                out.push(i);
            }
        }
    }
    for (c, &t) in taken.iter().enumerate() {
        if t < per_class {
            return Err(DataError::Insufficient { split, class: classes[c], requested: per_class, available: t });
        }
    }
    Ok(out)
}

/// Standardize both splits with training statistics and assemble datasets.
pub(crate) fn finish(
    source: &str,
    files: Vec<SourceFile>,
    classes: Option<[u8; 2]>,
    seed: u64,
    mut train: Split,
    mut test: Split,
    map: BTreeMap<u8, f64>,
) -> LoadedData {
    let (mean, std) = standardization(&train.inputs);
    apply_standardization(&mut train.inputs, mean, std);
    apply_standardization(&mut test.inputs, mean, std);
    let train_digest = split_digest(&train);
    let test_digest = split_digest(&test);
    let manifest = DataManifest {
        source: source.to_string(),
        files,
        classes,
        n_train: train.len(),
        n_test: test.len(),
        seed,
        normalization: "global mean/std over training pixels".to_string(),
        mean,
        std,
        train_digest: train_digest.clone(),
        test_digest: test_digest.clone(),
    };
    LoadedData {
        train: Dataset { split: train, class_map: map.clone(), digest: train_digest },
        test: Dataset { split: test, class_map: map, digest: test_digest },
        manifest,
    }
}

pub(crate) fn pixels_to_image(shape: Shape, pixels: Vec<f64>) -> Image {
    Image::new(shape, pixels).expect("loader builds images of the declared shape")
}

/// Bundled 2-class MNIST subset (digits 0 and 1).
pub fn bundled_mnist_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join("mnist01")
}

/// `$WIDECONV_DATA/mnist` if it exists, else the bundled subset.
pub fn default_mnist_dir() -> PathBuf {
    if let Ok(root) = std::env::var(DATA_ENV) {
        let p = PathBuf::from(root).join("mnist");
        if p.is_dir() {
            return p;
        }
    }
    bundled_mnist_dir()
}

/// `$WIDECONV_DATA/cifar-10-batches-bin`, if set.
pub fn default_cifar_dir() -> Option<PathBuf> {
    std::env::var(DATA_ENV).ok().map(|root| PathBuf::from(root).join("cifar-10-batches-bin"))
}
