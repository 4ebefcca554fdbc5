use std::path::Path;

use super::Example;
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Big-endian header words following the magic number.
fn header(path: &Path, bytes: &[u8], magic: u32, dims: usize) -> Result<Vec<usize>> {
    let need = 4 * (1 + dims);
    if bytes.len() < need {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: need,
            actual: bytes.len(),
        });
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes"));
    let found = word(0);
    if found != magic {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: magic,
            found,
        });
    }
    Ok((1..=dims).map(|i| word(i) as usize).collect())
}

fn payload<'a>(path: &Path, bytes: &'a [u8], offset: usize, len: usize) -> Result<&'a [u8]> {
    bytes.get(offset..offset + len).ok_or_else(|| Error::Truncated {
        path: path.to_path_buf(),
        expected: offset + len,
        actual: bytes.len(),
    })
}

/// Loads an IDX image file and its label file. Pixels are scaled to `[0, 1]`
/// and each image is flattened row by row.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Vec<Example>> {
    let (images_path, labels_path) = (images_path.as_ref(), labels_path.as_ref());
    let image_bytes = read(images_path)?;
    let label_bytes = read(labels_path)?;

    let dims = header(images_path, &image_bytes, IMAGES_MAGIC, 3)?;
    let (count, pixels) = (dims[0], dims[1] * dims[2]);
    let labels_dims = header(labels_path, &label_bytes, LABELS_MAGIC, 1)?;
    if labels_dims[0] != count {
        return Err(Error::CountMismatch {
            images: count,
            labels: labels_dims[0],
        });
    }

    let images = payload(images_path, &image_bytes, 16, count * pixels)?;
    let labels = payload(labels_path, &label_bytes, 8, count)?;
    Ok(labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let features = images[i * pixels..(i + 1) * pixels]
                .iter()
                .map(|&p| f64::from(p) / 255.0)
                .collect();
            Example::new(features, usize::from(label))
        })
        .collect())
}
