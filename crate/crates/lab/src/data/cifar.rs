use std::path::Path;

use wideconv_core::train::Split;
use wideconv_core::Shape;

use super::{check_classes, class_map, finish, pixels_to_image, read_file, select, sha256_hex, DataError, LoadedData, SourceFile};

/// One label byte plus 32x32x3 channel-major pixels.
pub const CIFAR_RECORD: usize = 3073;
const SIDE: usize = 32;

/// `(label, channel-last pixels in [0, 1])` per record.
pub fn parse_cifar_records(bytes: &[u8], file: &str) -> Result<Vec<(u8, Vec<f64>)>, DataError> {
    let whole = bytes.len() / CIFAR_RECORD * CIFAR_RECORD;
    if whole != bytes.len() {
        return Err(DataError::RecordSize {
            file: file.to_string(),
            offset: whole,
            found: bytes.len() - whole,
            expected: CIFAR_RECORD,
        });
    }
    let plane = SIDE * SIDE;
    bytes
        .chunks(CIFAR_RECORD)
        .enumerate()
        .map(|(k, rec)| {
            let label = rec[0];
            if label > 9 {
                return Err(DataError::UnknownClass { file: file.to_string(), class: label, offset: k * CIFAR_RECORD });
            }
            let px = &rec[1..];
            let mut out = vec![0.0; 3 * plane];
            for c in 0..3 {
                for p in 0..plane {
                    out[p * 3 + c] = px[c * plane + p] as f64 / 255.0;
                }
            }
            Ok((label, out))
        })
        .collect()
}

fn read_batches(dir: &Path, names: &[String], files: &mut Vec<SourceFile>) -> Result<Vec<(u8, Vec<f64>)>, DataError> {
    let mut all = Vec::new();
    for name in names {
        let bytes = read_file(&dir.join(name))?;
        files.push(SourceFile { name: name.clone(), sha256: sha256_hex(&bytes) });
        all.extend(parse_cifar_records(&bytes, name)?);
    }
    Ok(all)
}

fn build_split(records: &[(u8, Vec<f64>)], picks: &[usize], classes: [u8; 2]) -> Split {
    let map = class_map(classes);
    let shape = Shape::new(SIDE, SIDE, 3);
    Split {
        inputs: picks.iter().map(|&i| pixels_to_image(shape, records[i].1.clone())).collect(),
        labels: picks.iter().map(|&i| map[&records[i].0]).collect(),
    }
}

/// Load from the CIFAR-10 binary batches in `dir` (`data_batch_1.bin` ..
/// `data_batch_5.bin`, `test_batch.bin`). Missing training batches after the
/// first are skipped.
pub fn load_cifar10(
    dir: &Path,
    classes: [u8; 2],
    per_class_train: usize,
    per_class_test: usize,
    seed: u64,
) -> Result<LoadedData, DataError> {
    check_classes(classes)?;
    let mut files = Vec::new();
    let names: Vec<String> = (1..=5)
        .map(|k| format!("data_batch_{k}.bin"))
        .enumerate()
        .filter(|(k, n)| *k == 0 || dir.join(n).is_file())
        .map(|(_, n)| n)
        .collect();
    let records = read_batches(dir, &names, &mut files)?;
    let labels: Vec<u8> = records.iter().map(|r| r.0).collect();
    let picks = select("train", &labels, classes, per_class_train, seed)?;
    let train = build_split(&records, &picks, classes);
    let test = if per_class_test == 0 {
        Split { inputs: Vec::new(), labels: Vec::new() }
    } else {
        let records = read_batches(dir, &["test_batch.bin".to_string()], &mut files)?;
        let labels: Vec<u8> = records.iter().map(|r| r.0).collect();
        let picks = select("test", &labels, classes, per_class_test, seed)?;
        build_split(&records, &picks, classes)
    };
    Ok(finish("cifar10", files, Some(classes), seed, train, test, class_map(classes)))
}
