//! IDX files on disk, optionally gzip-compressed.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::{Compression, GzBuilder};

use lipkernel_core::data::{encode_idx_images, encode_idx_labels, mnist_from_idx, Dataset};

use crate::error::Result;

/// File contents, inflated when the file starts with the gzip magic bytes.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Writes `bytes`, gzip-compressed when the path ends in `.gz`.
///
/// The gzip header carries no timestamp, so equal bytes give equal files.
pub fn write_maybe_gz(path: &Path, bytes: &[u8]) -> Result<()> {
    if path.extension().is_some_and(|e| e == "gz") {
        let f = fs::File::create(path)?;
        let mut enc: GzEncoder<fs::File> = GzBuilder::new().mtime(0).write(f, Compression::default());
        enc.write_all(bytes)?;
        enc.finish()?;
    } else {
        fs::write(path, bytes)?;
    }
    Ok(())
}

/// MNIST-style dataset: pixels in [0,1], digits zero-padded to 32×32.
pub fn load_mnist_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    Ok(mnist_from_idx(&read_maybe_gz(images)?, &read_maybe_gz(labels)?)?)
}

/// Train and test splits from the four standard file names in `dir`.
pub fn load_mnist_dir(dir: &Path) -> Result<(Dataset, Dataset)> {
    let pick = |stem: &str| {
        let gz = dir.join(format!("{stem}.gz"));
        if gz.exists() { gz } else { dir.join(stem) }
    };
    let train = load_mnist_idx(&pick("train-images-idx3-ubyte"), &pick("train-labels-idx1-ubyte"))?;
    let test = load_mnist_idx(&pick("t10k-images-idx3-ubyte"), &pick("t10k-labels-idx1-ubyte"))?;
    Ok((train, test))
}

pub fn write_idx_images(path: &Path, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    write_maybe_gz(path, &encode_idx_images(rows, cols, pixels))
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    write_maybe_gz(path, &encode_idx_labels(labels))
}
