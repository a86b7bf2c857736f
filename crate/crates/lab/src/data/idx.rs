use std::path::Path;

use wideconv_core::train::Split;
use wideconv_core::Shape;

use super::{check_classes, class_map, finish, pixels_to_image, read_file, select, sha256_hex, DataError, LoadedData, SourceFile};

pub const IDX_IMAGES: u32 = 0x0000_0803;
pub const IDX_LABELS: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, file: &str) -> Result<u32, DataError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(DataError::Truncated { file: file.to_string(), expected: at + 4, found: bytes.len() })
}

/// `(rows, cols, pixels)` of an IDX image file.
pub fn parse_idx_images(bytes: &[u8], file: &str) -> Result<(usize, usize, Vec<Vec<u8>>), DataError> {
    let magic = be_u32(bytes, 0, file)?;
    if magic != IDX_IMAGES {
        return Err(DataError::BadMagic { file: file.to_string(), found: magic, expected: IDX_IMAGES });
    }
    let n = be_u32(bytes, 4, file)? as usize;
    let rows = be_u32(bytes, 8, file)? as usize;
    let cols = be_u32(bytes, 12, file)? as usize;
    let size = rows * cols;
    let expected = 16 + n * size;
    if bytes.len() < expected {
        return Err(DataError::Truncated { file: file.to_string(), expected, found: bytes.len() });
    }
    Ok((rows, cols, bytes[16..expected].chunks(size.max(1)).take(n).map(<[u8]>::to_vec).collect()))
}

pub fn parse_idx_labels(bytes: &[u8], file: &str) -> Result<Vec<u8>, DataError> {
    let magic = be_u32(bytes, 0, file)?;
    if magic != IDX_LABELS {
        return Err(DataError::BadMagic { file: file.to_string(), found: magic, expected: IDX_LABELS });
    }
    let n = be_u32(bytes, 4, file)? as usize;
    if bytes.len() < 8 + n {
        return Err(DataError::Truncated { file: file.to_string(), expected: 8 + n, found: bytes.len() });
    }
    Ok(bytes[8..8 + n].to_vec())
}

fn read_pair(dir: &Path, prefix: &str, files: &mut Vec<SourceFile>) -> Result<(Shape, Vec<Vec<u8>>, Vec<u8>), DataError> {
    let img_name = format!("{prefix}-images-idx3-ubyte");
    let lab_name = format!("{prefix}-labels-idx1-ubyte");
    let img = read_file(&dir.join(&img_name))?;
    let lab = read_file(&dir.join(&lab_name))?;
    files.push(SourceFile { name: img_name.clone(), sha256: sha256_hex(&img) });
    files.push(SourceFile { name: lab_name.clone(), sha256: sha256_hex(&lab) });
    let (rows, cols, images) = parse_idx_images(&img, &img_name)?;
    let labels = parse_idx_labels(&lab, &lab_name)?;
    if images.len() != labels.len() {
        return Err(DataError::CountMismatch { file: img_name, images: images.len(), labels: labels.len() });
    }
    Ok((Shape::new(rows, cols, 1), images, labels))
}

fn build_split(shape: Shape, images: &[Vec<u8>], labels: &[u8], picks: &[usize], classes: [u8; 2]) -> Split {
    let map = class_map(classes);
    Split {
        inputs: picks
            .iter()
            .map(|&i| pixels_to_image(shape, images[i].iter().map(|&p| p as f64 / 255.0).collect()))
            .collect(),
        labels: picks.iter().map(|&i| map[&labels[i]]).collect(),
    }
}

/// Load `per_class_train` / `per_class_test` examples of each class from the
/// IDX files in `dir` (`train-*` and `t10k-*`).
pub fn load_mnist(
    dir: &Path,
    classes: [u8; 2],
    per_class_train: usize,
    per_class_test: usize,
    seed: u64,
) -> Result<LoadedData, DataError> {
    check_classes(classes)?;
    let mut files = Vec::new();
    let (shape, images, labels) = read_pair(dir, "train", &mut files)?;
    let picks = select("train", &labels, classes, per_class_train, seed)?;
    let train = build_split(shape, &images, &labels, &picks, classes);
    let test = if per_class_test == 0 {
        Split { inputs: Vec::new(), labels: Vec::new() }
    } else {
        let (shape, images, labels) = read_pair(dir, "t10k", &mut files)?;
        let picks = select("test", &labels, classes, per_class_test, seed)?;
        build_split(shape, &images, &labels, &picks, classes)
    };
    Ok(finish("mnist", files, Some(classes), seed, train, test, class_map(classes)))
}
