//! CIFAR-10 binary batches: 3073-byte records of one label byte followed by
//! a 32x32 RGB image stored as three 1024-byte planes (R, then G, then B).

use std::fs;
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SIDE: usize = 32;
pub const CHANNELS: usize = 3;
pub const RECORD_BYTES: usize = 1 + CHANNELS * SIDE * SIDE;

pub const CLASS_NAMES: [&str; 10] = [
    "plane", "car", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck",
];

/// Load one or more CIFAR-10 binary batch files into a single dataset.
pub fn load_cifar10<P: AsRef<Path>>(batch_paths: &[P]) -> Result<Dataset> {
    if batch_paths.is_empty() {
        return Err(Error::invalid("load_cifar10 requires at least one batch file"));
    }
    let mut values: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for path in batch_paths {
        let path = path.as_ref();
        let name = path.display().to_string();
        let bytes = fs::read(path)?;
        if bytes.is_empty() || bytes.len() % RECORD_BYTES != 0 {
            return Err(Error::format(
                &name,
                "file size",
                format!(
                    "{} bytes is not a positive multiple of the {RECORD_BYTES}-byte record",
                    bytes.len()
                ),
            ));
        }
        for (rec_idx, record) in bytes.chunks_exact(RECORD_BYTES).enumerate() {
            let label = record[0];
            if label > 9 {
                return Err(Error::format(
                    &name,
                    format!("record {rec_idx} label"),
                    format!("label byte {label} exceeds 9"),
                ));
            }
            labels.push(label as usize);
            values.extend(record[1..].iter().map(|&p| f64::from(p) / 255.0));
        }
    }
    let n = labels.len();
    Dataset::new(
        "cifar10",
        Tensor::new(vec![n, CHANNELS, SIDE, SIDE], values)?,
        labels,
        10,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn record(label: u8, fill: u8) -> Vec<u8> {
        let mut rec = vec![fill; RECORD_BYTES];
        rec[0] = label;
        rec
    }

    #[test]
    fn parses_single_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batch.bin");
        fs::write(&path, record(0, 0)).unwrap();
        let ds = load_cifar10(&[&path]).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.labels(), &[0]);
        assert_eq!(ds.input_shape(), (3, 32, 32));
        assert!(ds.images().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn plane_order_is_rgb() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batch.bin");
        let mut rec = vec![0u8; RECORD_BYTES];
        rec[0] = 3;
        rec[1] = 255; // first red pixel
        rec[1 + 1024] = 51; // first green pixel
        rec[1 + 2048] = 102; // first blue pixel
        fs::write(&path, rec).unwrap();
        let ds = load_cifar10(&[&path]).unwrap();
        let v = ds.images().values();
        assert_eq!(v[0], 1.0);
        assert_eq!(v[1024], 51.0 / 255.0);
        assert_eq!(v[2048], 102.0 / 255.0);
        assert_eq!(ds.labels(), &[3]);
    }

    #[test]
    fn concatenates_batches() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("b1.bin");
        let p2 = dir.path().join("b2.bin");
        let mut two = record(1, 10);
        two.extend(record(2, 20));
        fs::write(&p1, two).unwrap();
        fs::write(&p2, record(9, 30)).unwrap();
        let ds = load_cifar10(&[&p1, &p2]).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.labels(), &[1, 2, 9]);
    }

    #[test]
    fn rejects_bad_sizes_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        let missing_label = dir.path().join("short.bin");
        fs::write(&missing_label, vec![0u8; RECORD_BYTES - 1]).unwrap();
        let err = load_cifar10(&[&missing_label]).unwrap_err();
        assert!(err.to_string().contains("file size"), "{err}");

        let bad_label = dir.path().join("badlabel.bin");
        fs::write(&bad_label, record(10, 0)).unwrap();
        let err = load_cifar10(&[&bad_label]).unwrap_err();
        assert!(err.to_string().contains("label byte 10"), "{err}");
    }
}
