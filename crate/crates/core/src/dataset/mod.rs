//! Dataset ingestion: IDX and CIFAR-10 binary readers, a synthetic Gaussian
//! generator, and preprocessing into normalized input/one-hot output pairs.

mod cifar;
mod idx;
mod synthetic;

pub use cifar::load_cifar10;
pub use idx::{load_idx, write_idx_fixture};
pub use synthetic::{generate_synthetic, SyntheticSpec};

use crate::container::Container;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Mnist,
    Emnist,
    Cifar10,
    Synthetic,
}

impl DataSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            DataSource::Mnist => "mnist",
            DataSource::Emnist => "emnist",
            DataSource::Cifar10 => "cifar10",
            DataSource::Synthetic => "synthetic",
        }
    }
}

/// Raw byte images straight from disk, before any preprocessing.
///
/// `pixels[i]` holds `side * side * channels` bytes; three-channel images
/// are stored as full planes in R, G, B order, as in the CIFAR-10 binary
/// format. Labels are already zero-based (EMNIST Letters files store
/// 1..=26 and are remapped on load).
#[derive(Debug, Clone)]
pub struct RawImageSet {
    pub pixels: Vec<Vec<u8>>,
    pub labels: Vec<u8>,
    pub side: usize,
    pub channels: usize,
    pub n_out: usize,
    pub source: DataSource,
}

impl RawImageSet {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// Preprocessed samples: one input vector and one output vector per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    /// n_samples x d, each row an input vector.
    pub inputs: Matrix,
    /// n_samples x n_out, each row an output vector.
    pub outputs: Matrix,
    /// Pixels per side when the input dimension is a square pixel grid.
    pub pixel_side: Option<usize>,
    pub n_out: usize,
    pub source: DataSource,
}

impl LabeledDataset {
    pub fn n_samples(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    /// One-hot integrity plus, for image sources, the [0, 1] pixel range.
    pub fn validate(&self) -> Result<()> {
        if self.inputs.nrows() != self.outputs.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "{} input rows vs {} output rows",
                self.inputs.nrows(),
                self.outputs.nrows()
            )));
        }
        if self.source != DataSource::Synthetic {
            if self.inputs.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidInput("input entry outside [0, 1]".into()));
            }
            for r in 0..self.outputs.nrows() {
                let row = self.outputs.row(r);
                let ones = row.iter().filter(|&&v| v == 1.0).count();
                let zeros = row.iter().filter(|&&v| v == 0.0).count();
                if ones != 1 || ones + zeros != self.n_out {
                    return Err(Error::InvalidInput(format!("output row {r} is not one-hot")));
                }
            }
        }
        Ok(())
    }

    /// Serialize to the shared binary container. Bit-exact round trip.
    pub fn to_container(&self, preprocessing: serde_json::Value) -> Container {
        let mut c = Container::new(
            "dataset",
            json!({
                "source": self.source.as_str(),
                "n_samples": self.n_samples(),
                "d": self.dim(),
                "n_out": self.n_out,
                "pixel_side": self.pixel_side,
                "preprocessing": preprocessing,
            }),
        );
        c.push("inputs", self.inputs.clone());
        c.push("outputs", self.outputs.clone());
        c
    }

    pub fn save_cache(&self, path: &Path, preprocessing: serde_json::Value) -> Result<()> {
        self.to_container(preprocessing).write(path)
    }

    pub fn load_cache(path: &Path) -> Result<(Self, serde_json::Value)> {
        let c = Container::read(path)?;
        if c.kind != "dataset" {
            return Err(Error::BadContainer(format!(
                "expected dataset container, found {:?}",
                c.kind
            )));
        }
        let source = match c.meta["source"].as_str() {
            Some("mnist") => DataSource::Mnist,
            Some("emnist") => DataSource::Emnist,
            Some("cifar10") => DataSource::Cifar10,
            Some("synthetic") => DataSource::Synthetic,
            other => {
                return Err(Error::BadContainer(format!(
                    "unknown dataset source {other:?}"
                )))
            }
        };
        let data = LabeledDataset {
            inputs: c.matrix("inputs")?.clone(),
            outputs: c.matrix("outputs")?.clone(),
            pixel_side: c.meta["pixel_side"].as_u64().map(|v| v as usize),
            n_out: c.meta["n_out"].as_u64().unwrap_or(0) as usize,
            source,
        };
        Ok((data, c.meta.clone()))
    }
}

/// Center-crop, optional grayscale conversion, byte scaling to [0, 1], and
/// one-hot label encoding.
///
/// Cropping keeps the centered `crop_to x crop_to` window (28 -> 24 keeps
/// rows/cols 2..26). Three-channel images are reduced with luminance
/// weights (0.299, 0.587, 0.114); a per-channel mode is unsupported.
pub fn preprocess(raw: &RawImageSet, crop_to: usize, grayscale: bool) -> Result<LabeledDataset> {
    if crop_to > raw.side {
        return Err(Error::CropTooLarge {
            crop: crop_to,
            side: raw.side,
        });
    }
    if raw.channels == 3 && !grayscale {
        return Err(Error::ColorWithoutGrayscale);
    }
    let side = raw.side;
    let offset = (side - crop_to) / 2;
    let d = crop_to * crop_to;
    let n = raw.len();

    let mut inputs = Matrix::zeros(n, d);
    let mut outputs = Matrix::zeros(n, raw.n_out);
    let plane = side * side;
    for (s, img) in raw.pixels.iter().enumerate() {
        for r in 0..crop_to {
            for c in 0..crop_to {
                let p = (offset + r) * side + (offset + c);
                let value = if raw.channels == 1 {
                    img[p] as f64
                } else {
                    0.299 * img[p] as f64
                        + 0.587 * img[plane + p] as f64
                        + 0.114 * img[2 * plane + p] as f64
                };
                inputs[(s, r * crop_to + c)] = value / 255.0;
            }
        }
        let label = raw.labels[s] as usize;
        if label >= raw.n_out {
            return Err(Error::LabelOutOfRange {
                label,
                n_out: raw.n_out,
            });
        }
        outputs[(s, label)] = 1.0;
    }

    Ok(LabeledDataset {
        inputs,
        outputs,
        pixel_side: Some(crop_to),
        n_out: raw.n_out,
        source: raw.source,
    })
}
