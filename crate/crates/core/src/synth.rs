//! The car-render property grid, uniform manifests over it, render-job
//! export, and synthetic embeddings with controllable property influence.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::io::{EmbeddingSet, PropertyTable, TensorF32};
use crate::metric::MetricKind;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropertyGrid {
    properties: Vec<(String, Vec<String>)>,
}

impl PropertyGrid {
    pub fn properties(&self) -> &[(String, Vec<String>)] {
        &self.properties
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.properties.iter().map(|(n, _)| n.as_str())
    }

    pub fn values(&self, name: &str) -> Option<&[String]> {
        self.properties
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.properties.iter().map(|(_, v)| v.len()).collect()
    }

    pub fn combination_count(&self) -> u128 {
        self.properties.iter().map(|(_, v)| v.len() as u128).product()
    }
}

fn steps(start: f64, step: f64, count: usize, decimals: usize) -> Vec<String> {
    (0..count)
        .map(|i| {
            let v = start + step * i as f64;
            let s = format!("{v:.decimals$}");
            // "0.50" -> "0.5", but keep one decimal: "1.0" stays.
            if decimals > 1 {
                let trimmed = s.trim_end_matches('0');
                if trimmed.ends_with('.') {
                    format!("{trimmed}0")
                } else {
                    trimmed.to_string()
                }
            } else {
                s
            }
        })
        .collect()
}

fn angles(step: usize, count: usize) -> Vec<String> {
    (0..count).map(|i| (i * step).to_string()).collect()
}

/// The eleven rendered properties and their levels.
pub fn property_grid() -> PropertyGrid {
    let models = [
        "Ferrari Enzo",
        "Mercedes Benz 300sel",
        "Megane RS",
        "Mercedes AMG Coupe",
        "Range Rover Evoque",
        "Tesla Model S",
    ];
    let hue = steps(0.0, 0.1, 10, 1);
    let level = steps(0.0, 0.25, 9, 2);
    let properties = vec![
        ("car_model", models.iter().map(|s| s.to_string()).collect()),
        ("car_rotation", angles(45, 8)),
        ("car_hue", hue.clone()),
        ("car_saturation", level.clone()),
        ("car_value", level.clone()),
        ("bg_hue", hue),
        ("bg_saturation", level.clone()),
        ("bg_value", level),
        ("camera_height", steps(0.5, 1.0, 4, 1)),
        ("sun_elevation", angles(45, 3)),
        ("sun_rotation", angles(45, 8)),
    ];
    PropertyGrid {
        properties: properties
            .into_iter()
            .map(|(n, v)| (n.to_string(), v))
            .collect(),
    }
}

/// Sampled property assignments. Each entry stores one value index per grid
/// property.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub seed: u64,
    grid: PropertyGrid,
    ids: Vec<String>,
    assignments: Vec<Vec<u16>>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn grid(&self) -> &PropertyGrid {
        &self.grid
    }

    /// Value of property `k` (grid order) for entry `i`.
    pub fn value(&self, i: usize, k: usize) -> &str {
        &self.grid.properties[k].1[self.assignments[i][k] as usize]
    }

    pub fn to_property_table(&self) -> PropertyTable {
        let columns = self
            .grid
            .properties
            .iter()
            .enumerate()
            .map(|(k, (name, _))| {
                (
                    name.clone(),
                    (0..self.len()).map(|i| self.value(i, k).to_string()).collect(),
                )
            })
            .collect();
        PropertyTable::new(self.ids.clone(), columns).expect("manifest ids are unique")
    }
}

/// Draws `n` entries, each property independently and uniformly from its
/// levels (with replacement over the full product).
pub fn sample_manifest(n: usize, seed: u64) -> Result<Manifest> {
    if n == 0 {
        return Err(Error::arg("manifest size must be at least 1"));
    }
    let grid = property_grid();
    let cards = grid.cardinalities();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = n.to_string().len().max(6);
    let ids = (0..n).map(|i| format!("car_{i:0width$}")).collect();
    let assignments = (0..n)
        .map(|_| cards.iter().map(|&c| rng.random_range(0..c) as u16).collect())
        .collect();
    Ok(Manifest {
        seed,
        grid,
        ids,
        assignments,
    })
}

/// Writes one JSON object per entry: `id` followed by every property in
/// grid order.
pub fn emit_render_jobs(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let quote = |s: &str| serde_json::to_string(s).expect("strings serialize");
    let mut line = String::new();
    for i in 0..manifest.len() {
        line.clear();
        line.push_str("{\"id\":");
        line.push_str(&quote(&manifest.ids[i]));
        for (k, (name, _)) in manifest.grid.properties.iter().enumerate() {
            line.push(',');
            line.push_str(&quote(name));
            line.push(':');
            line.push_str(&quote(manifest.value(i, k)));
        }
        line.push_str("}\n");
        out.write_all(line.as_bytes())
            .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Converts render-job lines back into a property table.
pub fn read_render_jobs(path: impl AsRef<Path>) -> Result<PropertyTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::PropertyTable {
        path: path.to_path_buf(),
        reason,
    };
    let mut ids = Vec::new();
    let mut names: Option<Vec<String>> = None;
    let mut columns: Vec<Vec<String>> = Vec::new();
    for (lineno, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let obj: serde_json::Map<String, serde_json::Value> = serde_json::from_str(line)
            .map_err(|e| bad(format!("line {}: {e}", lineno + 1)))?;
        let id = obj
            .get("id")
            .and_then(|v| v.as_str())
            .ok_or_else(|| bad(format!("line {}: missing id", lineno + 1)))?;
        let keys: Vec<String> = obj.keys().filter(|k| *k != "id").cloned().collect();
        let names = names.get_or_insert_with(|| {
            columns = vec![Vec::new(); keys.len()];
            keys.clone()
        });
        if &keys != names {
            return Err(bad(format!("line {}: inconsistent keys", lineno + 1)));
        }
        ids.push(id.to_string());
        for (col, key) in columns.iter_mut().zip(names.iter()) {
            let v = obj[key]
                .as_str()
                .ok_or_else(|| bad(format!("line {}: {key} is not a string", lineno + 1)))?;
            col.push(v.to_string());
        }
    }
    PropertyTable::new(ids, names.unwrap_or_default().into_iter().zip(columns).collect())
}

/// Builds embeddings where property `k` contributes `weights[k]` times a
/// random unit vector chosen by the item's value, plus isotropic Gaussian
/// noise with standard deviation `noise`.
///
/// Centres are drawn for every property in column order, values in sorted
/// order, so the result depends only on the arguments.
pub fn synth_embed_table(
    table: &PropertyTable,
    weights: &BTreeMap<String, f64>,
    dim: usize,
    noise: f64,
    seed: u64,
) -> Result<EmbeddingSet> {
    if dim < 2 {
        return Err(Error::arg("embedding dimension must be at least 2"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::arg(format!("noise must be finite and >= 0, got {noise}")));
    }
    for (name, &w) in weights {
        if table.column(name).is_none() {
            return Err(Error::UnknownProperty(name.clone()));
        }
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::arg(format!("weight for {name:?} must be finite and >= 0")));
        }
    }

    let mut center_rng = ChaCha8Rng::seed_from_u64(seed);
    center_rng.set_stream(0);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(1);

    // (weight, per-item centre index, centres)
    let mut parts: Vec<(f64, Vec<usize>, Vec<Vec<f64>>)> = Vec::new();
    for (name, values) in table.columns() {
        let alphabet: BTreeSet<&str> = values.iter().map(String::as_str).collect();
        let centers: Vec<Vec<f64>> = alphabet
            .iter()
            .map(|_| unit_vector(&mut center_rng, dim))
            .collect();
        if let Some(&w) = weights.get(name) {
            let index: BTreeMap<&str, usize> =
                alphabet.iter().enumerate().map(|(i, v)| (*v, i)).collect();
            let assignment = values.iter().map(|v| index[v.as_str()]).collect();
            parts.push((w, assignment, centers));
        }
    }

    let n = table.len();
    let mut data = Vec::with_capacity(n * dim);
    let mut row = vec![0f64; dim];
    for i in 0..n {
        row.iter_mut().for_each(|v| *v = 0.0);
        for (w, assignment, centers) in &parts {
            for (r, c) in row.iter_mut().zip(&centers[assignment[i]]) {
                *r += w * c;
            }
        }
        if noise > 0.0 {
            for r in row.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut noise_rng);
                *r += noise * z;
            }
        }
        data.extend(row.iter().map(|&v| v as f32));
    }
    EmbeddingSet::new(
        table.ids().to_vec(),
        TensorF32::new(vec![n, dim], data)?,
        MetricKind::Euclidean,
    )
}

pub fn synth_embed(
    manifest: &Manifest,
    weights: &BTreeMap<String, f64>,
    dim: usize,
    noise: f64,
    seed: u64,
) -> Result<EmbeddingSet> {
    synth_embed_table(&manifest.to_property_table(), weights, dim, noise, seed)
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Parses `name=weight,name=weight`.
pub fn parse_weights(text: &str) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, value) = part
            .split_once('=')
            .ok_or_else(|| Error::arg(format!("weight {part:?} is not name=value")))?;
        let name = name.trim();
        if name.is_empty() {
            return Err(Error::arg(format!("weight {part:?} has an empty name")));
        }
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::arg(format!("weight {part:?} is not a number")))?;
        if out.insert(name.to_string(), value).is_some() {
            return Err(Error::arg(format!("weight for {name:?} given twice")));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_matches_levels() {
        let g = property_grid();
        assert_eq!(g.cardinalities(), [6, 8, 10, 9, 9, 10, 9, 9, 4, 3, 8]);
        assert_eq!(g.combination_count(), 3_023_308_800);
        assert_eq!(g.values("sun_elevation").unwrap(), ["0", "45", "90"]);
        assert_eq!(g.values("car_rotation").unwrap().last().unwrap(), "315");
        assert_eq!(
            g.values("car_saturation").unwrap(),
            ["0.0", "0.25", "0.5", "0.75", "1.0", "1.25", "1.5", "1.75", "2.0"]
        );
        assert_eq!(g.values("bg_hue").unwrap()[9], "0.9");
        assert_eq!(g.values("camera_height").unwrap(), ["0.5", "1.5", "2.5", "3.5"]);
        assert_eq!(g.values("car_model").unwrap()[1], "Mercedes Benz 300sel");
    }

    #[test]
    fn single_entry_manifest() {
        let m = sample_manifest(1, 3).unwrap();
        assert_eq!(m.len(), 1);
        let t = m.to_property_table();
        assert_eq!(t.columns().len(), 11);
        assert!(sample_manifest(0, 3).is_err());
    }

    #[test]
    fn same_seed_same_manifest() {
        assert_eq!(sample_manifest(500, 9).unwrap(), sample_manifest(500, 9).unwrap());
        assert_ne!(sample_manifest(500, 9).unwrap(), sample_manifest(500, 10).unwrap());
    }

    #[test]
    fn render_jobs_two_lines() {
        let dir = tempfile::tempdir().unwrap();
        let m = sample_manifest(2, 1).unwrap();
        let p = dir.path().join("jobs.jsonl");
        emit_render_jobs(&m, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        for line in lines {
            let v: serde_json::Map<String, serde_json::Value> = serde_json::from_str(line).unwrap();
            assert_eq!(v.len(), 12);
        }
        assert!(text.starts_with("{\"id\":\"car_000000\",\"car_model\":"));
        assert_eq!(read_render_jobs(&p).unwrap(), m.to_property_table());
    }

    #[test]
    fn weights_parser() {
        let w = parse_weights("car_model=1.0,car_hue=0.2").unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w["car_model"], 1.0);
        assert_eq!(w["car_hue"], 0.2);
        assert!(parse_weights("car_model").is_err());
        assert!(parse_weights("car_model=x").is_err());
        assert!(parse_weights("a=1,a=2").is_err());
        assert!(parse_weights("").unwrap().is_empty());
    }

    #[test]
    fn unknown_weight_rejected() {
        let m = sample_manifest(10, 1).unwrap();
        let w = parse_weights("wheel_size=1").unwrap();
        assert!(matches!(synth_embed(&m, &w, 8, 0.0, 1), Err(Error::UnknownProperty(_))));
        assert!(synth_embed(&m, &BTreeMap::new(), 1, 0.0, 1).is_err());
    }

    #[test]
    fn synth_is_deterministic_and_coincident_without_noise() {
        let m = sample_manifest(300, 4).unwrap();
        let w = parse_weights("car_model=1.0").unwrap();
        let a = synth_embed(&m, &w, 16, 0.0, 7).unwrap();
        let b = synth_embed(&m, &w, 16, 0.0, 7).unwrap();
        assert_eq!(a.data(), b.data());
        let t = m.to_property_table();
        let models = t.column("car_model").unwrap();
        for i in 1..m.len() {
            if models[i] == models[0] {
                assert_eq!(a.row(i), a.row(0));
            } else {
                assert_ne!(a.row(i), a.row(0));
            }
        }
    }
}
