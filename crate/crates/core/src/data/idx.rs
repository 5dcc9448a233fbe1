//! IDX image/label files (the MNIST and Fashion-MNIST container format).
//!
//! Big-endian, magic 0x00000803 for images with dims (N, rows, cols) and
//! 0x00000801 for labels with dims (N,). Pixels are stored as u8 and scaled
//! to [0, 1] on load.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(r: &mut impl Read, path: &str, field: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|e| Error::format(path, field, format!("truncated ({e})")))?;
    Ok(u32::from_be_bytes(buf))
}

/// Parse an IDX image/label file pair into a dataset. The parse is
/// all-or-nothing: any malformed input yields an error and no dataset.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let img_name = images_path.display().to_string();
    let lbl_name = labels_path.display().to_string();

    let mut img = BufReader::new(File::open(images_path)?);
    let magic = read_u32_be(&mut img, &img_name, "magic")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::format(
            &img_name,
            "magic",
            format!("expected {IMAGES_MAGIC:#010x} for images, got {magic:#010x}"),
        ));
    }
    let n = read_u32_be(&mut img, &img_name, "sample count")? as usize;
    let rows = read_u32_be(&mut img, &img_name, "rows")? as usize;
    let cols = read_u32_be(&mut img, &img_name, "cols")? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::format(&img_name, "dimensions", "zero rows or cols"));
    }
    let mut pixels = vec![0u8; n * rows * cols];
    img.read_exact(&mut pixels)
        .map_err(|e| Error::format(&img_name, "pixel data", format!("truncated ({e})")))?;
    let mut trailing = [0u8; 1];
    if img.read(&mut trailing)? != 0 {
        return Err(Error::format(&img_name, "trailer", "trailing bytes after pixel data"));
    }

    let mut lbl = BufReader::new(File::open(labels_path)?);
    let magic = read_u32_be(&mut lbl, &lbl_name, "magic")?;
    if magic != LABELS_MAGIC {
        return Err(Error::format(
            &lbl_name,
            "magic",
            format!("expected {LABELS_MAGIC:#010x} for labels, got {magic:#010x}"),
        ));
    }
    let n_labels = read_u32_be(&mut lbl, &lbl_name, "label count")? as usize;
    if n_labels != n {
        return Err(Error::format(
            &lbl_name,
            "label count",
            format!("{n_labels} labels for {n} images"),
        ));
    }
    let mut raw_labels = vec![0u8; n_labels];
    lbl.read_exact(&mut raw_labels)
        .map_err(|e| Error::format(&lbl_name, "label data", format!("truncated ({e})")))?;
    if lbl.read(&mut trailing)? != 0 {
        return Err(Error::format(&lbl_name, "trailer", "trailing bytes after label data"));
    }

    let values: Vec<f64> = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let labels: Vec<usize> = raw_labels.iter().map(|&l| l as usize).collect();
    let num_classes = labels.iter().copied().max().unwrap_or(0) + 1;
    Dataset::new(
        "idx",
        Tensor::new(vec![n, 1, rows, cols], values)?,
        labels,
        num_classes.max(2),
    )
}

/// Write a single-channel dataset as an IDX image/label file pair.
/// Pixels are quantized to u8 with rounding.
pub fn save_idx(
    ds: &Dataset,
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    let (c, rows, cols) = ds.input_shape();
    if c != 1 {
        return Err(Error::invalid(format!(
            "IDX export supports single-channel images, got {c} channels"
        )));
    }
    let mut img = BufWriter::new(File::create(images_path.as_ref())?);
    img.write_all(&IMAGES_MAGIC.to_be_bytes())?;
    for v in [ds.len(), rows, cols] {
        img.write_all(&(v as u32).to_be_bytes())?;
    }
    for &v in ds.images().values() {
        img.write_all(&[(v * 255.0).round() as u8])?;
    }
    img.flush()?;

    let mut lbl = BufWriter::new(File::create(labels_path.as_ref())?);
    lbl.write_all(&LABELS_MAGIC.to_be_bytes())?;
    lbl.write_all(&(ds.len() as u32).to_be_bytes())?;
    for &l in ds.labels() {
        lbl.write_all(&[l as u8])?;
    }
    lbl.flush()?;
    Ok(())
}
