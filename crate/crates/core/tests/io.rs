use std::collections::BTreeMap;

use dmlprobe::io::{
    read_embedding_dir, read_property_table, read_tensor, write_embedding_dir,
    write_property_table, write_tensor,
};
use dmlprobe::synth::{emit_render_jobs, read_render_jobs, sample_manifest, synth_embed};
use dmlprobe::{MetricKind, TensorF32};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn tensor_round_trip_is_bit_exact(
        shape in prop::collection::vec(1usize..6, 1..4),
        bits in prop::collection::vec(any::<u32>(), 125),
    ) {
        let n: usize = shape.iter().product();
        let data: Vec<f32> = bits
            .iter()
            .cycle()
            .take(n)
            .map(|&b| {
                let v = f32::from_bits(b);
                if v.is_finite() { v } else { f32::from_bits(b & 0x807f_ffff) }
            })
            .collect();
        let t = TensorF32::new(shape, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_tensor(&t, dir.path().join("t")).unwrap();
        let back = read_tensor(dir.path().join("t.json")).unwrap();
        prop_assert_eq!(back.shape(), t.shape());
        let same_bits = back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same_bits);
    }
}

#[test]
fn large_manifest_aligns_with_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = sample_manifest(100_000, 42).unwrap();
    let table = manifest.to_property_table();
    let csv = dir.path().join("props.csv");
    write_property_table(&table, &csv).unwrap();

    let weights: BTreeMap<String, f64> = [("car_model".to_string(), 1.0)].into();
    let set = synth_embed(&manifest, &weights, 4, 0.1, 1).unwrap();
    write_embedding_dir(&set, dir.path().join("emb")).unwrap();

    let back = read_property_table(&csv).unwrap();
    assert_eq!(back.len(), 100_000);
    let emb = read_embedding_dir(dir.path().join("emb"), MetricKind::Euclidean).unwrap();
    let aligned = back.aligned_to(emb.ids()).unwrap();
    assert_eq!(aligned, table);
}

#[test]
fn render_jobs_reproduce_manifest_assignments() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = sample_manifest(1000, 3).unwrap();
    let jobs = dir.path().join("jobs.jsonl");
    emit_render_jobs(&manifest, &jobs).unwrap();
    // JSONL -> CSV -> table
    let csv = dir.path().join("props.csv");
    write_property_table(&read_render_jobs(&jobs).unwrap(), &csv).unwrap();
    assert_eq!(read_property_table(&csv).unwrap(), manifest.to_property_table());
}

#[test]
fn mismatched_ids_fail_before_metrics() {
    let manifest = sample_manifest(20, 3).unwrap();
    let table = manifest.to_property_table();
    let other = sample_manifest(21, 3).unwrap();
    let set = synth_embed(&other, &BTreeMap::new(), 4, 1.0, 1).unwrap();
    let err = dmlprobe::nr_precision_all(&set, &table, &Default::default()).unwrap_err();
    assert!(matches!(err, dmlprobe::Error::IdMismatch { missing_right: 1, .. }), "{err}");
}
