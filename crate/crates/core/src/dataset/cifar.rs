//! CIFAR-10 binary batch reader.
//!
//! Each record is 3073 bytes: one label byte followed by 32*32 red,
//! green, and blue planes. Batch files simply concatenate records.

use super::{DataSource, RawImageSet};
use crate::error::{Error, Result};
use std::path::Path;

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_CHANNELS: usize = 3;
pub const CIFAR_RECORD_BYTES: usize = 1 + CIFAR_SIDE * CIFAR_SIDE * CIFAR_CHANNELS;
const CIFAR_CLASSES: usize = 10;

/// Load one or more CIFAR-10 binary batch files. An empty path list yields
/// an empty record set.
pub fn load_cifar10(batch_paths: &[impl AsRef<Path>]) -> Result<RawImageSet> {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for path in batch_paths {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        if bytes.len() % CIFAR_RECORD_BYTES != 0 {
            return Err(Error::BadRecordSize {
                path: path.display().to_string(),
                len: bytes.len() as u64,
                record: CIFAR_RECORD_BYTES,
            });
        }
        for record in bytes.chunks_exact(CIFAR_RECORD_BYTES) {
            let label = record[0] as usize;
            if label >= CIFAR_CLASSES {
                return Err(Error::LabelOutOfRange {
                    label,
                    n_out: CIFAR_CLASSES,
                });
            }
            labels.push(record[0]);
            pixels.push(record[1..].to_vec());
        }
    }
    Ok(RawImageSet {
        pixels,
        labels,
        side: CIFAR_SIDE,
        channels: CIFAR_CHANNELS,
        n_out: CIFAR_CLASSES,
        source: DataSource::Cifar10,
    })
}
