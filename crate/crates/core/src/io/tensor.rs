//! The `tnsr-v1` on-disk format: a JSON sidecar describing shape and dtype,
//! next to a headerless little-endian `f32` payload in row-major order.
//!
//! ```text
//! maps/img_0001.json  {"format":"tnsr-v1","dtype":"f32le","shape":[224,224],"data":"img_0001.bin"}
//! maps/img_0001.bin   224 * 224 * 4 bytes
//! ```
//!
//! The `data` field is resolved relative to the sidecar's directory.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "tnsr-v1";
pub const DTYPE_TAG: &str = "f32le";

/// Shaped, row-major `f32` array. Never empty, never non-finite.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorF32 {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl TensorF32 {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        check_shape(&shape).map_err(Error::InvalidTensor)?;
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InvalidTensor(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidTensor(format!(
                "non-finite data at index {index}"
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_parts(self) -> (Vec<usize>, Vec<f32>) {
        (self.shape, self.data)
    }
}

fn check_shape(shape: &[usize]) -> std::result::Result<(), String> {
    if shape.is_empty() {
        return Err("shape must have at least one dimension".into());
    }
    if shape.contains(&0) {
        return Err(format!("empty tensors are invalid (shape {shape:?})"));
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    format: String,
    dtype: String,
    shape: Vec<usize>,
    data: String,
}

fn sidecar_path(basename: &Path) -> PathBuf {
    let mut s = basename.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn payload_path(basename: &Path) -> PathBuf {
    let mut s = basename.as_os_str().to_owned();
    s.push(".bin");
    PathBuf::from(s)
}

/// Writes `<basename>.json` and `<basename>.bin`. Returns the sidecar path.
pub fn write_tensor(tensor: &TensorF32, basename: impl AsRef<Path>) -> Result<PathBuf> {
    let basename = basename.as_ref();
    let json_path = sidecar_path(basename);
    let bin_path = payload_path(basename);
    let bin_name = bin_path
        .file_name()
        .ok_or_else(|| Error::arg(format!("invalid tensor basename {}", basename.display())))?
        .to_string_lossy()
        .into_owned();

    let file = fs::File::create(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let mut out = BufWriter::new(file);
    for v in &tensor.data {
        out.write_all(&v.to_le_bytes())
            .map_err(|e| Error::io(&bin_path, e))?;
    }
    out.flush().map_err(|e| Error::io(&bin_path, e))?;

    let sidecar = Sidecar {
        format: FORMAT_TAG.to_string(),
        dtype: DTYPE_TAG.to_string(),
        shape: tensor.shape.clone(),
        data: bin_name,
    };
    let json = serde_json::to_string(&sidecar).expect("sidecar serializes");
    fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;
    Ok(json_path)
}

/// Reads a tensor given its sidecar path. A path without the `.json`
/// extension is treated as a basename.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<TensorF32> {
    let path = path.as_ref();
    let json_path = if path.extension().is_some_and(|e| e == "json") {
        path.to_path_buf()
    } else {
        sidecar_path(path)
    };
    let corrupt = |reason: String| Error::CorruptTensor {
        path: json_path.clone(),
        reason,
    };

    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let sidecar: Sidecar =
        serde_json::from_str(&text).map_err(|e| corrupt(format!("bad sidecar: {e}")))?;
    if sidecar.format != FORMAT_TAG {
        return Err(corrupt(format!("unsupported format {:?}", sidecar.format)));
    }
    if sidecar.dtype != DTYPE_TAG {
        return Err(corrupt(format!("unsupported dtype {:?}", sidecar.dtype)));
    }
    check_shape(&sidecar.shape).map_err(&corrupt)?;

    let bin_path = json_path
        .parent()
        .unwrap_or_else(|| Path::new(""))
        .join(&sidecar.data);
    let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let count = sidecar
        .shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| corrupt("shape overflows".into()))?;
    if count.checked_mul(4) != Some(bytes.len()) {
        return Err(corrupt(format!(
            "shape {:?} needs {} bytes, payload has {}",
            sidecar.shape,
            count * 4,
            bytes.len()
        )));
    }

    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    if let Some(index) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            path: bin_path,
            index,
        });
    }
    Ok(TensorF32 {
        shape: sidecar.shape,
        data,
    })
}
