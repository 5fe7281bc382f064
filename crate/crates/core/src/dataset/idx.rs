//! IDX binary reader for MNIST-family files.
//!
//! Image files (idx3-ubyte):
//! ```text
//! bytes  0-3   magic 0x00000803, big-endian
//! bytes  4-7   image count
//! bytes  8-11  rows
//! bytes 12-15  cols
//! bytes 16..   count * rows * cols pixel bytes, row-major
//! ```
//! Label files (idx1-ubyte) carry magic 0x00000801, a count, and one byte
//! per label. All header integers are big-endian.

use super::{DataSource, RawImageSet};
use crate::error::{Error, Result};
use std::path::Path;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::TruncatedFile {
            path: path.display().to_string(),
            needed: offset + 4,
            found: bytes.len(),
        })
}

/// Load an IDX image/label pair. EMNIST Letters labels (stored 1..=26)
/// are remapped to 0..=25 so every label indexes a one-hot slot directly.
pub fn load_idx(image_path: &Path, label_path: &Path, source: DataSource) -> Result<RawImageSet> {
    let n_out = match source {
        DataSource::Mnist => 10,
        DataSource::Emnist => 26,
        other => {
            return Err(Error::InvalidInput(format!(
                "IDX loader supports MNIST/EMNIST sources, got {other:?}"
            )))
        }
    };

    let images = std::fs::read(image_path)
        .map_err(|e| Error::io(image_path.display().to_string(), e))?;
    let labels = std::fs::read(label_path)
        .map_err(|e| Error::io(label_path.display().to_string(), e))?;

    let image_magic = read_be_u32(&images, 0, image_path)?;
    if image_magic != IMAGE_MAGIC {
        return Err(Error::BadMagic {
            path: image_path.display().to_string(),
            expected: IMAGE_MAGIC,
            found: image_magic,
        });
    }
    let label_magic = read_be_u32(&labels, 0, label_path)?;
    if label_magic != LABEL_MAGIC {
        return Err(Error::BadMagic {
            path: label_path.display().to_string(),
            expected: LABEL_MAGIC,
            found: label_magic,
        });
    }

    let n_images = read_be_u32(&images, 4, image_path)? as usize;
    let rows = read_be_u32(&images, 8, image_path)? as usize;
    let cols = read_be_u32(&images, 12, image_path)? as usize;
    let n_labels = read_be_u32(&labels, 4, label_path)? as usize;
    if n_images != n_labels {
        return Err(Error::CountMismatch {
            images: n_images,
            labels: n_labels,
        });
    }
    if rows != cols {
        return Err(Error::InvalidInput(format!(
            "non-square IDX images: {rows}x{cols}"
        )));
    }

    let pixel_bytes = n_images * rows * cols;
    if images.len() < 16 + pixel_bytes {
        return Err(Error::TruncatedFile {
            path: image_path.display().to_string(),
            needed: 16 + pixel_bytes,
            found: images.len(),
        });
    }
    if labels.len() < 8 + n_labels {
        return Err(Error::TruncatedFile {
            path: label_path.display().to_string(),
            needed: 8 + n_labels,
            found: labels.len(),
        });
    }

    let pixels: Vec<Vec<u8>> = images[16..16 + pixel_bytes]
        .chunks_exact(rows * cols)
        .map(|chunk| chunk.to_vec())
        .collect();

    let mut out_labels = Vec::with_capacity(n_labels);
    for (i, &raw) in labels[8..8 + n_labels].iter().enumerate() {
        let label = if source == DataSource::Emnist {
            // Letters files are 1-based.
            (raw as usize).checked_sub(1).ok_or(Error::LabelOutOfRange {
                label: raw as usize,
                n_out,
            })?
        } else {
            raw as usize
        };
        if label >= n_out {
            return Err(Error::LabelOutOfRange { label, n_out });
        }
        debug_assert!(i < n_labels);
        out_labels.push(label as u8);
    }

    Ok(RawImageSet {
        pixels,
        labels: out_labels,
        side: rows,
        channels: 1,
        n_out,
        source,
    })
}

/// Serialize images/labels back to IDX bytes. Used to build fixtures and
/// by tests to check byte-for-byte round trips.
pub fn write_idx_fixture(
    image_path: &Path,
    label_path: &Path,
    side: usize,
    images: &[Vec<u8>],
    labels: &[u8],
) -> Result<()> {
    let mut img = Vec::with_capacity(16 + images.len() * side * side);
    img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    img.extend_from_slice(&(images.len() as u32).to_be_bytes());
    img.extend_from_slice(&(side as u32).to_be_bytes());
    img.extend_from_slice(&(side as u32).to_be_bytes());
    for image in images {
        img.extend_from_slice(image);
    }
    let mut lab = Vec::with_capacity(8 + labels.len());
    lab.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    lab.extend_from_slice(labels);
    std::fs::write(image_path, img).map_err(|e| Error::io(image_path.display().to_string(), e))?;
    std::fs::write(label_path, lab).map_err(|e| Error::io(label_path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_round_trips_byte_for_byte() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = dir.path().join("images.idx3");
        let lab_path = dir.path().join("labels.idx1");
        let images = vec![
            (0u8..16).collect::<Vec<_>>(),
            (100u8..116).collect::<Vec<_>>(),
        ];
        write_idx_fixture(&img_path, &lab_path, 4, &images, &[3, 7]).unwrap();
        let raw = load_idx(&img_path, &lab_path, DataSource::Mnist).unwrap();
        assert_eq!(raw.len(), 2);
        assert_eq!(raw.side, 4);
        assert_eq!(raw.pixels, images);
        assert_eq!(raw.labels, vec![3, 7]);
    }

    #[test]
    fn label_file_with_image_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = dir.path().join("images.idx3");
        let lab_path = dir.path().join("labels.idx1");
        write_idx_fixture(&img_path, &lab_path, 2, &[vec![0; 4]], &[1]).unwrap();
        // Swap the files: the label slot now carries magic 0x00000803.
        let err = load_idx(&img_path, &img_path, DataSource::Mnist).unwrap_err();
        assert!(matches!(err, Error::BadMagic { found, .. } if found == IMAGE_MAGIC));
    }

    #[test]
    fn truncated_image_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = dir.path().join("images.idx3");
        let lab_path = dir.path().join("labels.idx1");
        write_idx_fixture(&img_path, &lab_path, 4, &[vec![9; 16]], &[0]).unwrap();
        let bytes = std::fs::read(&img_path).unwrap();
        std::fs::write(&img_path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(
            load_idx(&img_path, &lab_path, DataSource::Mnist),
            Err(Error::TruncatedFile { .. })
        ));
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = dir.path().join("images.idx3");
        let lab_path = dir.path().join("labels.idx1");
        let other_lab = dir.path().join("labels2.idx1");
        write_idx_fixture(&img_path, &lab_path, 2, &[vec![0; 4], vec![1; 4]], &[0, 1]).unwrap();
        write_idx_fixture(&dir.path().join("unused.idx3"), &other_lab, 2, &[vec![0; 4]], &[5])
            .unwrap();
        assert!(matches!(
            load_idx(&img_path, &other_lab, DataSource::Mnist),
            Err(Error::CountMismatch { images: 2, labels: 1 })
        ));
    }

    #[test]
    fn emnist_labels_are_shifted_to_zero_base() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = dir.path().join("images.idx3");
        let lab_path = dir.path().join("labels.idx1");
        write_idx_fixture(&img_path, &lab_path, 2, &[vec![0; 4], vec![0; 4]], &[1, 26]).unwrap();
        let raw = load_idx(&img_path, &lab_path, DataSource::Emnist).unwrap();
        assert_eq!(raw.labels, vec![0, 25]);
        assert_eq!(raw.n_out, 26);
    }
}
