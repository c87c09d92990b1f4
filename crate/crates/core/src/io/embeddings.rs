use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::tensor::{read_tensor, write_tensor, TensorF32};
use crate::metric::{self, MetricKind};

/// An `n x m` embedding matrix with one id per row and the metric the
/// model was trained with.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    ids: Vec<String>,
    matrix: TensorF32,
    metric: MetricKind,
}

impl EmbeddingSet {
    pub fn new(ids: Vec<String>, matrix: TensorF32, metric: MetricKind) -> Result<Self> {
        let &[n, m] = matrix.shape() else {
            return Err(Error::InvalidTensor(format!(
                "embedding matrix must be 2-D, got shape {:?}",
                matrix.shape()
            )));
        };
        if ids.len() != n {
            return Err(Error::arg(format!(
                "{} ids for {n} embedding rows",
                ids.len()
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        let rows = matrix.data().chunks_exact(m);
        match metric {
            MetricKind::CosineSimilarity => {
                if let Some(i) = rows.clone().position(|r| r.iter().all(|&v| v == 0.0)) {
                    return Err(Error::arg(format!(
                        "row {i} ({}) is all zeros under cosine similarity",
                        ids[i]
                    )));
                }
            }
            MetricKind::SnrDistance => {
                if let Some(i) = rows.clone().position(|r| metric::variance(r) == 0.0) {
                    return Err(Error::arg(format!(
                        "row {i} ({}) has zero variance under SNR distance",
                        ids[i]
                    )));
                }
            }
            _ => {}
        }
        Ok(Self {
            ids,
            matrix,
            metric,
        })
    }

    /// Builds a set with ids `0..n` from row-major data; handy for tests.
    pub fn from_rows(data: Vec<f32>, dim: usize, metric: MetricKind) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::arg(format!(
                "{} values do not form rows of width {dim}",
                data.len()
            )));
        }
        let n = data.len() / dim;
        let ids = (0..n).map(|i| i.to_string()).collect();
        Self::new(ids, TensorF32::new(vec![n, dim], data)?, metric)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.shape()[1]
    }

    pub fn metric(&self) -> MetricKind {
        self.metric
    }

    pub fn matrix(&self) -> &TensorF32 {
        &self.matrix
    }

    pub fn data(&self) -> &[f32] {
        self.matrix.data()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let m = self.dim();
        &self.matrix.data()[i * m..(i + 1) * m]
    }

    /// Same embeddings under a different metric (re-validated).
    pub fn with_metric(self, metric: MetricKind) -> Result<Self> {
        Self::new(self.ids, self.matrix, metric)
    }
}

/// Reads `<dir>/embeddings.{json,bin}` and `<dir>/ids.txt`.
pub fn read_embedding_dir(dir: impl AsRef<Path>, metric: MetricKind) -> Result<EmbeddingSet> {
    let dir = dir.as_ref();
    let matrix = read_tensor(dir.join("embeddings.json"))?;
    let ids_path = dir.join("ids.txt");
    let text = fs::read_to_string(&ids_path).map_err(|e| Error::io(&ids_path, e))?;
    let ids: Vec<String> = text
        .lines()
        .map(|l| l.trim_end_matches('\r').to_string())
        .filter(|l| !l.is_empty())
        .collect();
    EmbeddingSet::new(ids, matrix, metric)
}

pub fn write_embedding_dir(set: &EmbeddingSet, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_tensor(&set.matrix, dir.join("embeddings"))?;
    let ids_path = dir.join("ids.txt");
    let file = fs::File::create(&ids_path).map_err(|e| Error::io(&ids_path, e))?;
    let mut out = BufWriter::new(file);
    for id in &set.ids {
        writeln!(out, "{id}").map_err(|e| Error::io(&ids_path, e))?;
    }
    out.flush().map_err(|e| Error::io(&ids_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicates_and_zero_rows() {
        let t = TensorF32::new(vec![2, 1], vec![1.0, 2.0]).unwrap();
        let err = EmbeddingSet::new(vec!["a".into(), "a".into()], t.clone(), MetricKind::Euclidean);
        assert!(matches!(err, Err(Error::DuplicateId(_))));

        let z = TensorF32::new(vec![2, 2], vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        assert!(EmbeddingSet::new(
            vec!["a".into(), "b".into()],
            z.clone(),
            MetricKind::CosineSimilarity
        )
        .is_err());
        assert!(EmbeddingSet::new(vec!["a".into(), "b".into()], z, MetricKind::Euclidean).is_ok());
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let set = EmbeddingSet::from_rows(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2, MetricKind::Euclidean)
            .unwrap();
        write_embedding_dir(&set, dir.path()).unwrap();
        let back = read_embedding_dir(dir.path(), MetricKind::Euclidean).unwrap();
        assert_eq!(back.ids(), set.ids());
        assert_eq!(back.data(), set.data());
        assert_eq!(back.row(2), &[5.0, 6.0]);
    }
}
