//! Saliency maps from input gradients, and comparison of maps across models.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{GradientStack, SaliencyMap, TensorF32};
use crate::par;
use crate::stats::population_std;

/// Clamp applied before `atanh` so that `|r| = 1` stays finite.
pub const FISHER_EPS: f64 = 1e-7;

/// Element-wise mean over the sample axis of a `[l, H, W, C]` stack.
pub fn smoothgrad_mean(stack: &GradientStack) -> TensorF32 {
    let (l, h, w, c) = stack.dims();
    let plane = h * w * c;
    let data = stack.samples().data();
    let mut sum = vec![0f64; plane];
    for sample in data.chunks_exact(plane) {
        for (acc, &v) in sum.iter_mut().zip(sample) {
            *acc += v as f64;
        }
    }
    let mean = sum.into_iter().map(|s| (s / l as f64) as f32).collect();
    TensorF32::new(vec![h, w, c], mean).expect("mean of finite values is finite")
}

/// Index into the ascending-sorted values of the nearest-rank 99th percentile.
fn p99_rank_index(n: usize) -> usize {
    // ceil(0.99 * n) as a 1-based rank, computed in integers.
    (99 * n).div_ceil(100).max(1) - 1
}

/// Turns a raw `[H, W, C]` gradient into a saliency map: absolute value,
/// mean over channels, clip above the nearest-rank 99th percentile, then
/// min-max scale to `[0, 1]` (all zeros when the clipped map is constant).
pub fn postprocess(image_id: impl Into<String>, raw: &TensorF32) -> Result<SaliencyMap> {
    let &[h, w, c] = raw.shape() else {
        return Err(Error::InvalidTensor(format!(
            "raw gradient must be [H, W, C], got {:?}",
            raw.shape()
        )));
    };
    let mut pixels: Vec<f64> = raw
        .data()
        .chunks_exact(c)
        .map(|ch| ch.iter().map(|v| v.abs() as f64).sum::<f64>() / c as f64)
        .collect();

    let mut sorted = pixels.clone();
    sorted.sort_by(f64::total_cmp);
    let cap = sorted[p99_rank_index(sorted.len())];
    for p in &mut pixels {
        if *p > cap {
            *p = cap;
        }
    }
    let lo = sorted[0];
    let hi = cap;
    let scaled: Vec<f32> = if hi > lo {
        let span = hi - lo;
        pixels
            .iter()
            .map(|&p| ((p - lo) / span).clamp(0.0, 1.0) as f32)
            .collect()
    } else {
        vec![0.0; pixels.len()]
    };
    SaliencyMap::new(image_id, TensorF32::new(vec![h, w], scaled)?)
}

fn same_shape(a: &SaliencyMap, b: &SaliencyMap) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::arg(format!(
            "saliency maps have different shapes: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Pearson correlation of the flattened pixel vectors.
pub fn pearson(a: &SaliencyMap, b: &SaliencyMap) -> Result<f64> {
    same_shape(a, b)?;
    pearson_slices(a.data(), b.data())
}

pub(crate) fn pearson_slices(a: &[f32], b: &[f32]) -> Result<f64> {
    let n = a.len() as f64;
    let mean_a = a.iter().map(|&v| v as f64).sum::<f64>() / n;
    let mean_b = b.iter().map(|&v| v as f64).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0f64, 0f64, 0f64);
    for (&x, &y) in a.iter().zip(b) {
        let dx = x as f64 - mean_a;
        let dy = y as f64 - mean_b;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::DegenerateMap("zero variance, cannot correlate"));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

pub fn fisher_z(r: f64) -> f64 {
    r.clamp(-1.0 + FISHER_EPS, 1.0 - FISHER_EPS).atanh()
}

pub fn inv_fisher_z(z: f64) -> f64 {
    z.tanh()
}

/// Average of correlations taken in Fisher-Z space.
pub fn mean_correlation(rs: &[f64]) -> Result<f64> {
    if rs.is_empty() {
        return Err(Error::arg("mean of an empty correlation list"));
    }
    let z = rs.iter().map(|&r| fisher_z(r)).sum::<f64>() / rs.len() as f64;
    Ok(inv_fisher_z(z))
}

/// Jensen-Shannon divergence (base 2) between sum-normalised maps.
pub fn jsd(a: &SaliencyMap, b: &SaliencyMap) -> Result<f64> {
    same_shape(a, b)?;
    jsd_slices(a.data(), b.data())
}

pub(crate) fn jsd_slices(a: &[f32], b: &[f32]) -> Result<f64> {
    let sa: f64 = a.iter().map(|&v| v as f64).sum();
    let sb: f64 = b.iter().map(|&v| v as f64).sum();
    if sa <= 0.0 || sb <= 0.0 {
        return Err(Error::DegenerateMap("zero sum, not a distribution"));
    }
    // Weighted by the raw values and divided by the sums at the end, so that
    // disjoint supports give exactly 1 (the log terms are exactly 1 there).
    let (mut kl_p, mut kl_q) = (0f64, 0f64);
    for (&x, &y) in a.iter().zip(b) {
        let p = x as f64 / sa;
        let q = y as f64 / sb;
        let m = 0.5 * (p + q);
        if p > 0.0 {
            kl_p += x as f64 * (p / m).log2();
        }
        if q > 0.0 {
            kl_q += y as f64 * (q / m).log2();
        }
    }
    Ok((0.5 * (kl_p / sa) + 0.5 * (kl_q / sb)).clamp(0.0, 1.0))
}

/// Statistics for one model pair over the shared images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonCell {
    /// Fisher-Z averaged.
    pub mean_correlation: f64,
    /// Population std of the raw per-image correlations.
    pub std_correlation: f64,
    pub mean_jsd: f64,
    pub std_jsd: f64,
    pub n_images: usize,
    pub n_skipped: usize,
}

/// Symmetric model-by-model table; the diagonal is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonMatrix {
    pub model_names: Vec<String>,
    cells: Vec<Vec<Option<ComparisonCell>>>,
}

impl ComparisonMatrix {
    pub fn cell(&self, i: usize, j: usize) -> Option<&ComparisonCell> {
        self.cells.get(i)?.get(j)?.as_ref()
    }

    pub fn cell_by_name(&self, a: &str, b: &str) -> Option<&ComparisonCell> {
        let i = self.model_names.iter().position(|m| m == a)?;
        let j = self.model_names.iter().position(|m| m == b)?;
        self.cell(i, j)
    }

    /// Unordered pairs `(i, j, cell)` with `i < j`, in model order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, &ComparisonCell)> {
        let n = self.model_names.len();
        (0..n).flat_map(move |i| {
            (i + 1..n).filter_map(move |j| self.cell(i, j).map(|c| (i, j, c)))
        })
    }
}

/// Compares every model pair image by image.
///
/// Each model supplies its maps in the same image order. Images where either
/// map is degenerate (constant or zero-sum) are skipped for that pair and
/// counted in `n_skipped`.
pub fn compare_models(models: &[(String, Vec<SaliencyMap>)]) -> Result<ComparisonMatrix> {
    if models.len() < 2 {
        return Err(Error::arg("need at least two models to compare"));
    }
    let mut seen = BTreeSet::new();
    for (name, _) in models {
        if !seen.insert(name.as_str()) {
            return Err(Error::arg(format!("model {name:?} listed twice")));
        }
    }
    let reference: Vec<&str> = models[0].1.iter().map(|m| m.image_id.as_str()).collect();
    for (name, maps) in &models[1..] {
        let ids: Vec<&str> = maps.iter().map(|m| m.image_id.as_str()).collect();
        if ids != reference {
            let a: BTreeSet<&str> = reference.iter().copied().collect();
            let b: BTreeSet<&str> = ids.iter().copied().collect();
            let diff: Vec<&str> = a.symmetric_difference(&b).copied().collect();
            return Err(Error::arg(if diff.is_empty() {
                format!("model {name:?} lists the same images in a different order")
            } else {
                format!(
                    "model {name:?} and {:?} differ on image ids: {}",
                    models[0].0,
                    diff.join(", ")
                )
            }));
        }
        for (x, y) in maps.iter().zip(&models[0].1) {
            same_shape(x, y)?;
        }
    }

    let n = models.len();
    let pair_list: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let n_images = reference.len();
    let computed = pair_list
        .iter()
        .map(|&(i, j)| compare_pair(&models[i].1, &models[j].1, n_images))
        .collect::<Result<Vec<_>>>()?;

    let mut cells = vec![vec![None; n]; n];
    for (&(i, j), cell) in pair_list.iter().zip(computed) {
        cells[i][j] = Some(cell);
        cells[j][i] = Some(cell);
    }
    Ok(ComparisonMatrix {
        model_names: models.iter().map(|(m, _)| m.clone()).collect(),
        cells,
    })
}

fn compare_pair(a: &[SaliencyMap], b: &[SaliencyMap], n_images: usize) -> Result<ComparisonCell> {
    // Per-image work may run in parallel; the reduction below walks images
    // in index order so results never depend on the thread count.
    let per_image = par::map_range(n_images, |k| {
        let r = pearson_slices(a[k].data(), b[k].data());
        let d = jsd_slices(a[k].data(), b[k].data());
        match (r, d) {
            (Ok(r), Ok(d)) => Some((r, d)),
            _ => None,
        }
    });
    let (rs, ds): (Vec<f64>, Vec<f64>) = per_image.iter().flatten().copied().unzip();
    let n_skipped = n_images - rs.len();
    if rs.is_empty() {
        return Ok(ComparisonCell {
            mean_correlation: f64::NAN,
            std_correlation: f64::NAN,
            mean_jsd: f64::NAN,
            std_jsd: f64::NAN,
            n_images: 0,
            n_skipped,
        });
    }
    Ok(ComparisonCell {
        mean_correlation: mean_correlation(&rs)?,
        std_correlation: population_std(&rs)?,
        mean_jsd: ds.iter().sum::<f64>() / ds.len() as f64,
        std_jsd: population_std(&ds)?,
        n_images: rs.len(),
        n_skipped,
    })
}

/// Groups maps by model from `(model, maps)` pairs keyed by image id,
/// keeping the image order of the first model.
pub fn align_by_image_id(
    models: Vec<(String, Vec<SaliencyMap>)>,
) -> Result<Vec<(String, Vec<SaliencyMap>)>> {
    let Some(first) = models.first() else {
        return Ok(models);
    };
    let order: Vec<String> = first.1.iter().map(|m| m.image_id.clone()).collect();
    let order_set: BTreeSet<&str> = order.iter().map(String::as_str).collect();
    let mut out = Vec::with_capacity(models.len());
    for (name, maps) in &models {
        let mut by_id: BTreeMap<&str, &SaliencyMap> =
            maps.iter().map(|m| (m.image_id.as_str(), m)).collect();
        let ids: BTreeSet<&str> = by_id.keys().copied().collect();
        if ids != order_set {
            let diff: Vec<&str> = ids.symmetric_difference(&order_set).copied().collect();
            return Err(Error::arg(format!(
                "model {name:?} and {:?} differ on image ids: {}",
                first.0,
                diff.join(", ")
            )));
        }
        let aligned = order
            .iter()
            .map(|id| by_id.remove(id.as_str()).unwrap().clone())
            .collect();
        out.push((name.clone(), aligned));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(values: &[f32]) -> SaliencyMap {
        SaliencyMap::new("m", TensorF32::new(vec![1, values.len()], values.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn smoothgrad_of_two_samples() {
        let stack = GradientStack::new(
            "x",
            TensorF32::new(vec![2, 1, 2, 1], vec![0.0, 0.0, 2.0, 2.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(smoothgrad_mean(&stack).data(), &[1.0, 1.0]);
        assert_eq!(smoothgrad_mean(&stack).shape(), &[1, 2, 1]);
    }

    #[test]
    fn smoothgrad_of_one_sample_is_identity() {
        let data = vec![0.5, -1.25, 3.0, 7.0, -2.0, 0.0];
        let stack =
            GradientStack::new("x", TensorF32::new(vec![1, 1, 2, 3], data.clone()).unwrap()).unwrap();
        assert_eq!(smoothgrad_mean(&stack).data(), &data[..]);
    }

    #[test]
    fn postprocess_hand_trace() {
        let raw = TensorF32::new(vec![2, 1, 1], vec![-4.0, 2.0]).unwrap();
        let m = postprocess("x", &raw).unwrap();
        assert_eq!(m.data(), &[1.0, 0.0]);
        assert_eq!(m.shape(), (2, 1));
    }

    #[test]
    fn postprocess_constant_is_zero() {
        let raw = TensorF32::new(vec![3, 3, 3], vec![-0.7; 27]).unwrap();
        assert!(postprocess("x", &raw).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn postprocess_clips_outlier() {
        // 200 pixels: 0..199 plus one huge outlier replacing the last value.
        let mut v: Vec<f32> = (0..200).map(|i| i as f32).collect();
        v[199] = 1e6;
        let raw = TensorF32::new(vec![200, 1, 1], v).unwrap();
        let m = postprocess("x", &raw).unwrap();
        // Nearest rank ceil(0.99 * 200) = 198 -> sorted[197] = 197.
        assert_eq!(m.data()[199], 1.0);
        assert_eq!(m.data()[197], 1.0);
        assert!((m.data()[196] - 196.0 / 197.0).abs() < 1e-7);
    }

    #[test]
    fn percentile_rank() {
        assert_eq!(p99_rank_index(1), 0);
        assert_eq!(p99_rank_index(2), 1);
        assert_eq!(p99_rank_index(100), 98);
        assert_eq!(p99_rank_index(101), 99);
        assert_eq!(p99_rank_index(224 * 224), 49674);
    }

    #[test]
    fn pearson_examples() {
        let r = pearson(&map(&[0.0, 0.1, 0.2, 0.3]), &map(&[0.0, 0.2, 0.4, 0.6])).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        let r = pearson(&map(&[0.1, 0.2, 0.3]), &map(&[0.3, 0.2, 0.1])).unwrap();
        assert!((r + 1.0).abs() < 1e-12);
        let r = pearson(&map(&[0.1, 0.2, 0.3, 0.4]), &map(&[0.1, 0.3, 0.2, 0.4])).unwrap();
        assert!((r - 0.8).abs() < 1e-7);
        assert!(matches!(
            pearson(&map(&[0.5, 0.5]), &map(&[0.1, 0.2])),
            Err(Error::DegenerateMap(_))
        ));
    }

    #[test]
    fn fisher_examples() {
        assert_eq!(fisher_z(0.0), 0.0);
        assert!((fisher_z(0.8) - 0.5 * (1.8f64 / 0.2).ln()).abs() < 1e-12);
        assert!((fisher_z(0.8) - 1.0986).abs() < 1e-4);
        assert!(fisher_z(1.0).is_finite());
        assert_eq!(fisher_z(1.0), (1.0 - FISHER_EPS).atanh());
        for r in [-0.999_999, -0.5, 0.0, 0.3, 0.999_999] {
            assert!((inv_fisher_z(fisher_z(r)) - r).abs() < 1e-6);
        }
    }

    #[test]
    fn mean_correlation_examples() {
        assert!((mean_correlation(&[0.8, 0.8, 0.8]).unwrap() - 0.8).abs() < 1e-12);
        assert!((mean_correlation(&[0.3]).unwrap() - 0.3).abs() < 1e-12);
        assert!((mean_correlation(&[0.0, 0.8]).unwrap() - 0.5).abs() < 1e-12);
        assert!(mean_correlation(&[]).is_err());
    }

    #[test]
    fn jsd_examples() {
        assert_eq!(jsd(&map(&[0.2, 0.7]), &map(&[0.2, 0.7])).unwrap(), 0.0);
        assert_eq!(jsd(&map(&[1.0, 0.0]), &map(&[0.0, 1.0])).unwrap(), 1.0);
        let d = jsd(&map(&[0.5, 0.5]), &map(&[1.0, 0.0])).unwrap();
        assert!((d - 0.311_278_124_459_132_8).abs() < 1e-12, "{d}");
        assert!(matches!(
            jsd(&map(&[0.0, 0.0]), &map(&[1.0, 0.0])),
            Err(Error::DegenerateMap(_))
        ));
    }

    fn named(id: &str, values: &[f32]) -> SaliencyMap {
        SaliencyMap::new(id, TensorF32::new(vec![1, values.len()], values.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn compare_with_known_correlations() {
        // Image 0: r = 0.8. Image 1: r = 0.0 ([0,1,0,1] vs [0,0,1,1]).
        let a = vec![named("i0", &[0.1, 0.2, 0.3, 0.4]), named("i1", &[0.0, 1.0, 0.0, 1.0])];
        let b = vec![named("i0", &[0.1, 0.3, 0.2, 0.4]), named("i1", &[0.0, 0.0, 1.0, 1.0])];
        let m = compare_models(&[("a".into(), a), ("b".into(), b)]).unwrap();
        let c = m.cell(0, 1).unwrap();
        assert!((c.mean_correlation - 0.5).abs() < 1e-7);
        assert!((c.std_correlation - 0.4).abs() < 1e-7);
        assert_eq!(c.n_images, 2);
        assert_eq!(m.cell(1, 0), m.cell(0, 1));
        assert!(m.cell(0, 0).is_none());
    }

    #[test]
    fn compare_skips_degenerate_images() {
        let a = vec![named("i0", &[0.1, 0.2]), named("i1", &[0.5, 0.5])];
        let b = vec![named("i0", &[0.2, 0.1]), named("i1", &[0.1, 0.9])];
        let m = compare_models(&[("a".into(), a), ("b".into(), b)]).unwrap();
        let c = m.cell(0, 1).unwrap();
        assert_eq!((c.n_images, c.n_skipped), (1, 1));
    }

    #[test]
    fn compare_rejects_mismatched_ids() {
        let a = vec![named("i0", &[0.1, 0.2]), named("i1", &[0.5, 0.6])];
        let b = vec![named("i0", &[0.2, 0.1]), named("i2", &[0.1, 0.9])];
        let err = compare_models(&[("a".into(), a), ("b".into(), b)]).unwrap_err();
        assert!(err.to_string().contains("i1, i2"), "{err}");
    }
}
