use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::tensor::{read_tensor, write_tensor, TensorF32};

/// The `l` noisy-sample input gradients for one image, shape `[l, H, W, C]`.
#[derive(Debug, Clone)]
pub struct GradientStack {
    pub image_id: String,
    samples: TensorF32,
}

impl GradientStack {
    pub fn new(image_id: impl Into<String>, samples: TensorF32) -> Result<Self> {
        if samples.shape().len() != 4 {
            return Err(Error::InvalidTensor(format!(
                "gradient stack must be [l, H, W, C], got {:?}",
                samples.shape()
            )));
        }
        Ok(Self {
            image_id: image_id.into(),
            samples,
        })
    }

    pub fn samples(&self) -> &TensorF32 {
        &self.samples
    }

    /// `(l, H, W, C)`
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        let s = self.samples.shape();
        (s[0], s[1], s[2], s[3])
    }
}

/// Post-processed `H x W` saliency map with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub image_id: String,
    values: TensorF32,
}

impl SaliencyMap {
    pub fn new(image_id: impl Into<String>, values: TensorF32) -> Result<Self> {
        if values.shape().len() != 2 {
            return Err(Error::InvalidTensor(format!(
                "saliency map must be [H, W], got {:?}",
                values.shape()
            )));
        }
        if let Some(i) = values.data().iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidTensor(format!(
                "saliency value {} at index {i} outside [0, 1]",
                values.data()[i]
            )));
        }
        Ok(Self {
            image_id: image_id.into(),
            values,
        })
    }

    pub fn values(&self) -> &TensorF32 {
        &self.values
    }

    pub fn data(&self) -> &[f32] {
        self.values.data()
    }

    pub fn shape(&self) -> (usize, usize) {
        let s = self.values.shape();
        (s[0], s[1])
    }
}

fn image_id_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn read_gradient_stack(path: impl AsRef<Path>) -> Result<GradientStack> {
    let path = path.as_ref();
    GradientStack::new(image_id_of(path), read_tensor(path)?)
}

pub fn read_saliency_map(path: impl AsRef<Path>) -> Result<SaliencyMap> {
    let path = path.as_ref();
    SaliencyMap::new(image_id_of(path), read_tensor(path)?)
}

/// Writes `<dir>/<image_id>.{json,bin}`.
pub fn write_saliency_map(map: &SaliencyMap, dir: impl AsRef<Path>) -> Result<PathBuf> {
    write_tensor(&map.values, dir.as_ref().join(&map.image_id))
}

/// Sidecar paths (`*.json`) in a directory, sorted by file name.
pub fn list_tensor_sidecars(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "json") {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}
