//! IDX container reader (MNIST). Big-endian header, unsigned-byte payload,
//! gzip-compressed files are detected by their magic bytes.

use std::fs::File;
use std::io::{Cursor, Read};
use std::path::{Path, PathBuf};

use byteorder::{BigEndian, ReadBytesExt};
use flate2::read::GzDecoder;

use super::{DataError, Dataset};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>, DataError> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| io_err(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| io_err(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Parses the header; returns the dimension sizes and the payload slice.
fn parse_idx<'a>(
    bytes: &'a [u8],
    path: &Path,
    expected_magic: u32,
) -> Result<(Vec<usize>, &'a [u8]), DataError> {
    let truncated_header = |expected: usize| DataError::Truncated {
        path: path.display().to_string(),
        expected: expected as u64,
        found: bytes.len() as u64,
    };
    let mut cur = Cursor::new(bytes);
    let magic = cur
        .read_u32::<BigEndian>()
        .map_err(|_| truncated_header(4))?;
    if magic != expected_magic {
        return Err(DataError::BadMagic {
            path: path.display().to_string(),
            expected: expected_magic,
            found: magic,
        });
    }
    let ndims = (magic & 0xff) as usize;
    let mut dims = Vec::with_capacity(ndims);
    for _ in 0..ndims {
        let d = cur
            .read_u32::<BigEndian>()
            .map_err(|_| truncated_header(4 + 4 * ndims))?;
        dims.push(d as usize);
    }
    let header = 4 + 4 * ndims;
    let expected: u64 = dims.iter().map(|&d| d as u64).product();
    let payload = &bytes[header..];
    if (payload.len() as u64) < expected {
        return Err(DataError::Truncated {
            path: path.display().to_string(),
            expected,
            found: payload.len() as u64,
        });
    }
    Ok((dims, &payload[..expected as usize]))
}

/// Reads an image file and a label file into one dataset with pixels scaled
/// to `[0, 1]`.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Dataset, DataError> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let image_bytes = read_maybe_gz(images_path)?;
    let label_bytes = read_maybe_gz(labels_path)?;

    let (image_dims, pixels) = parse_idx(&image_bytes, images_path, IDX_IMAGES_MAGIC)?;
    let (label_dims, labels) = parse_idx(&label_bytes, labels_path, IDX_LABELS_MAGIC)?;

    let num_images = image_dims[0];
    let num_labels = label_dims[0];
    if num_images != num_labels {
        return Err(DataError::CountMismatch {
            images: num_images,
            labels: num_labels,
        });
    }
    let input_dim = image_dims[1] * image_dims[2];
    let features = pixels.iter().map(|&p| f32::from(p) / 255.0).collect();
    let labels: Vec<u32> = labels.iter().map(|&l| u32::from(l)).collect();
    let num_classes = labels.iter().max().map_or(2, |&m| (m as usize + 1).max(10));
    Dataset::new(input_dim, num_classes, features, labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MnistSplit {
    Train,
    Test,
}

impl MnistSplit {
    fn stems(self) -> (&'static str, &'static str) {
        match self {
            MnistSplit::Train => ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
            MnistSplit::Test => ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
        }
    }
}

fn find_file(dir: &Path, stem: &str) -> PathBuf {
    let plain = dir.join(stem);
    if plain.exists() {
        return plain;
    }
    let gz = dir.join(format!("{stem}.gz"));
    if gz.exists() {
        gz
    } else {
        plain
    }
}

/// Loads a split from a directory holding the official file names, either
/// raw or with a `.gz` suffix.
pub fn load_mnist_dir(dir: impl AsRef<Path>, split: MnistSplit) -> Result<Dataset, DataError> {
    let dir = dir.as_ref();
    let (images, labels) = split.stems();
    load_idx(find_file(dir, images), find_file(dir, labels))
}
