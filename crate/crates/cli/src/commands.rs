use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use dmlprobe::io::{
    list_tensor_sidecars, read_embedding_dir, read_gradient_stack, read_property_table,
    read_saliency_map, write_embedding_dir, write_property_table, write_saliency_map,
};
use dmlprobe::report::{
    comparison_csv, comparison_markdown, group_test_csv, group_test_markdown, nrprec_csv,
    nrprec_markdown, read_nrprec_csv, NRPREC_CSV_HEADER,
};
use dmlprobe::saliency::align_by_image_id;
use dmlprobe::synth::{emit_render_jobs, parse_weights, read_render_jobs, synth_embed_table};
use dmlprobe::{
    compare_models, mann_whitney_u, nr_precision_all, par, postprocess, sample_manifest,
    smoothgrad_mean, MetricKind, NrPrecReport, PropertyTable, QueryMode, RetrievalOptions,
};
use serde_json::json;

use crate::args::{Format, Settings};

pub const SUCCESS_MARKER: &str = "_SUCCESS";

/// An output directory whose `_SUCCESS` marker is removed up front and only
/// written back by [`OutDir::complete`].
struct OutDir(PathBuf);

impl OutDir {
    fn prepare(path: &Path) -> Result<Self> {
        fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
        let marker = path.join(SUCCESS_MARKER);
        if marker.exists() {
            fs::remove_file(&marker).with_context(|| format!("removing {}", marker.display()))?;
        }
        Ok(Self(path.to_path_buf()))
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.0.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    fn complete(self) -> Result<()> {
        self.write(SUCCESS_MARKER, "").map(|_| ())
    }
}

fn dir_name(path: &Path) -> String {
    path.canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|s| s.to_string_lossy().into_owned()))
        .or_else(|| path.file_name().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| path.display().to_string())
}

fn unique_names(paths: &[PathBuf], name_of: impl Fn(&Path) -> String) -> Result<Vec<String>> {
    let names: Vec<String> = paths.iter().map(|p| name_of(p)).collect();
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            bail!("two inputs share the model name {n:?}");
        }
    }
    Ok(names)
}

fn meta_json(value: serde_json::Value) -> String {
    serde_json::to_string_pretty(&value).expect("json value") + "\n"
}

pub fn saliency_postprocess(in_dir: &Path, out_dir: &Path) -> Result<()> {
    let inputs = list_tensor_sidecars(in_dir)?;
    if inputs.is_empty() {
        bail!("no gradient stacks (*.json) in {}", in_dir.display());
    }
    let out = OutDir::prepare(out_dir)?;
    let maps = par::map_slice(&inputs, |path| {
        let stack = read_gradient_stack(path)?;
        postprocess(stack.image_id.clone(), &smoothgrad_mean(&stack))
    });
    let mut failed = 0;
    for (path, map) in inputs.iter().zip(maps) {
        match map.and_then(|m| write_saliency_map(&m, &out.0)) {
            Ok(written) => println!("ok {} -> {}", path.display(), written.display()),
            Err(e) => {
                failed += 1;
                eprintln!("error {}: {e}", path.display());
            }
        }
    }
    if failed > 0 {
        bail!("{failed} of {} stacks failed", inputs.len());
    }
    out.complete()
}

pub fn saliency_compare(model_dirs: &[PathBuf], s: &Settings) -> Result<()> {
    let names = unique_names(model_dirs, dir_name)?;
    let mut models = Vec::with_capacity(model_dirs.len());
    for (name, dir) in names.into_iter().zip(model_dirs) {
        let maps = list_tensor_sidecars(dir)?
            .iter()
            .map(read_saliency_map)
            .collect::<dmlprobe::Result<Vec<_>>>()?;
        if maps.is_empty() {
            bail!("no saliency maps in {}", dir.display());
        }
        models.push((name, maps));
    }
    let matrix = compare_models(&align_by_image_id(models)?)?;
    for (i, j, c) in matrix.pairs() {
        if c.n_skipped > 0 {
            eprintln!(
                "warning: {} vs {}: {} degenerate images skipped",
                matrix.model_names[i], matrix.model_names[j], c.n_skipped
            );
        }
    }
    let (file, text) = match s.format {
        Format::Csv => ("comparison.csv", comparison_csv(&matrix)),
        Format::Markdown => ("comparison.md", comparison_markdown(&matrix)),
    };
    emit(s, file, &text)
}

/// Writes `text` to `<out>/<file>` with a success marker, or prints it.
fn emit(s: &Settings, file: &str, text: &str) -> Result<()> {
    match &s.out {
        Some(dir) => {
            let out = OutDir::prepare(dir)?;
            out.write(file, text)?;
            out.complete()
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn metric_for(dir: &Path, s: &Settings) -> Result<MetricKind> {
    if let Some(m) = s.metric {
        return Ok(m);
    }
    let meta = dir.join("meta.json");
    if !meta.exists() {
        return Ok(MetricKind::Euclidean);
    }
    let text = fs::read_to_string(&meta).with_context(|| format!("reading {}", meta.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", meta.display()))?;
    match value.get("metric").and_then(|m| m.as_str()) {
        Some(name) => name.parse().with_context(|| format!("metric in {}", meta.display())),
        None => Ok(MetricKind::Euclidean),
    }
}

fn check_columns(table: &PropertyTable, path: &Path) -> Result<()> {
    if table.is_empty() {
        bail!("{} has no rows", path.display());
    }
    if table.columns().is_empty() {
        bail!("{} has no property columns", path.display());
    }
    for (name, values) in table.columns() {
        if values.iter().all(|v| v.trim().is_empty()) {
            bail!("property column {name:?} in {} is empty", path.display());
        }
    }
    Ok(())
}

pub fn nrprec(properties_csv: &Path, dirs: &[PathBuf], s: &Settings) -> Result<()> {
    let table = read_property_table(properties_csv)?;
    check_columns(&table, properties_csv)?;
    let names = unique_names(dirs, dir_name)?;
    let opts = RetrievalOptions {
        query_mode: if s.include_query { QueryMode::Include } else { QueryMode::Exclude },
        block_size: s.block_size,
        threshold: s.threshold,
    };

    // Load and validate every model before computing anything.
    let mut sets = Vec::with_capacity(dirs.len());
    for (name, dir) in names.iter().zip(dirs) {
        let metric = metric_for(dir, s)?;
        let set = read_embedding_dir(dir, metric).with_context(|| format!("model {name}"))?;
        table.aligned_to(set.ids()).with_context(|| format!("model {name}"))?;
        sets.push(set);
    }

    let mut results: Vec<(String, Vec<NrPrecReport>)> = Vec::with_capacity(sets.len());
    for (name, set) in names.iter().zip(&sets) {
        let reports = nr_precision_all(set, &table, &opts).with_context(|| format!("model {name}"))?;
        for r in reports.iter().filter(|r| r.n_skipped > 0) {
            eprintln!("{name}: {} skipped {} queries with p in {{0, 1}}", r.property_name, r.n_skipped);
        }
        results.push((name.clone(), reports));
    }

    let properties: Vec<String> = table.property_names().map(str::to_string).collect();
    let meta = meta_json(json!({
        "properties_csv": properties_csv.display().to_string(),
        "include_query": s.include_query,
        "query_mode": opts.query_mode,
        "alpha": s.alpha,
        "threshold": s.threshold,
        "block_size": s.block_size,
        "models": names.iter().zip(&sets).zip(dirs).map(|((n, set), d)| json!({
            "name": n,
            "embeddings_dir": d.display().to_string(),
            "metric": set.metric(),
            "n": set.len(),
            "dim": set.dim(),
        })).collect::<Vec<_>>(),
    }));

    match (&s.out, s.format) {
        (Some(dir), format) => {
            let out = OutDir::prepare(dir)?;
            match format {
                Format::Csv => {
                    for (name, reports) in &results {
                        out.write(&format!("{name}.csv"), nrprec_csv(reports))?;
                    }
                }
                Format::Markdown => {
                    out.write("nrprec.md", nrprec_markdown(&results, &properties))?;
                }
            }
            out.write("meta.json", meta)?;
            out.complete()
        }
        (None, Format::Markdown) => {
            print!("{}", nrprec_markdown(&results, &properties));
            Ok(())
        }
        (None, Format::Csv) if results.len() == 1 => {
            print!("{}", nrprec_csv(&results[0].1));
            Ok(())
        }
        (None, Format::Csv) => {
            println!("model,{NRPREC_CSV_HEADER}");
            for (name, reports) in &results {
                for line in nrprec_csv(reports).lines().skip(1) {
                    println!("{name},{line}");
                }
            }
            Ok(())
        }
    }
}

fn read_groups(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line == "model,group") {
            continue;
        }
        let (model, group) = line
            .split_once(',')
            .ok_or_else(|| anyhow!("{} line {}: expected model,group", path.display(), i + 1))?;
        let (model, group) = (model.trim().to_string(), group.trim().to_string());
        if model.is_empty() || group.is_empty() {
            bail!("{} line {}: empty model or group", path.display(), i + 1);
        }
        if out.iter().any(|(m, _)| *m == model) {
            bail!("{} assigns model {model:?} twice", path.display());
        }
        out.push((model, group));
    }
    Ok(out)
}

pub fn group_test(reports: &[PathBuf], groups_file: &Path, s: &Settings) -> Result<()> {
    let names = unique_names(reports, |p| {
        p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    })?;
    let groups = read_groups(groups_file)?;
    for (model, _) in &groups {
        if !names.contains(model) {
            bail!("unknown model {model:?} in {} (no report given)", groups_file.display());
        }
    }
    let mut labels: Vec<&str> = Vec::new();
    for (_, g) in &groups {
        if !labels.contains(&g.as_str()) {
            labels.push(g);
        }
    }
    if labels.len() != 2 {
        bail!("expected exactly two groups, found {}: {labels:?}", labels.len());
    }

    let mut values: Vec<(String, BTreeMap<String, f64>)> = Vec::new();
    let mut properties: Vec<String> = Vec::new();
    for (name, path) in names.iter().zip(reports) {
        let rows = read_nrprec_csv(path)?;
        if properties.is_empty() {
            properties = rows.iter().map(|(p, _)| p.clone()).collect();
        }
        values.push((name.clone(), rows.into_iter().collect()));
    }
    let group_of = |model: &str| {
        groups
            .iter()
            .find(|(m, _)| m == model)
            .map(|(_, g)| g.as_str())
            .ok_or_else(|| anyhow!("missing group label for model {model:?} in {}", groups_file.display()))
    };
    for (name, _) in &values {
        group_of(name)?;
    }

    let mut rows = Vec::with_capacity(properties.len());
    for property in &properties {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (name, by_prop) in &values {
            let v = *by_prop
                .get(property)
                .ok_or_else(|| anyhow!("report for {name:?} has no property {property:?}"))?;
            if group_of(name)? == labels[0] {
                a.push(v);
            } else {
                b.push(v);
            }
        }
        rows.push((property.clone(), mann_whitney_u(&a, &b)?));
    }
    eprintln!(
        "groups: {} (n={}) vs {} (n={})",
        labels[0],
        groups.iter().filter(|(_, g)| g == labels[0]).count(),
        labels[1],
        groups.iter().filter(|(_, g)| g == labels[1]).count()
    );
    let (file, text) = match s.format {
        Format::Csv => ("group_test.csv", group_test_csv(s.alpha, &rows)),
        Format::Markdown => ("group_test.md", group_test_markdown(s.alpha, &rows)),
    };
    emit(s, file, &text)
}

fn require_out(s: &Settings) -> Result<&Path> {
    s.out.as_deref().ok_or_else(|| anyhow!("--out is required"))
}

pub fn manifest(count: usize, render_jobs: bool, s: &Settings) -> Result<()> {
    let dir = require_out(s)?;
    if count == 0 {
        bail!("-n must be at least 1");
    }
    let manifest = sample_manifest(count, s.seed)?;
    let out = OutDir::prepare(dir)?;
    write_property_table(&manifest.to_property_table(), out.0.join("properties.csv"))?;
    if render_jobs {
        emit_render_jobs(&manifest, out.0.join("render_jobs.jsonl"))?;
    }
    out.write("meta.json", meta_json(json!({ "n": count, "seed": s.seed })))?;
    out.complete()
}

pub fn synth_embed(manifest: &Path, weights: &str, dim: usize, noise: f64, s: &Settings) -> Result<()> {
    let dir = require_out(s)?;
    let weights = parse_weights(weights)?;
    let table = if manifest.extension().is_some_and(|e| e == "jsonl") {
        read_render_jobs(manifest)?
    } else {
        read_property_table(manifest)?
    };
    let set = synth_embed_table(&table, &weights, dim, noise, s.seed)?;
    let out = OutDir::prepare(dir)?;
    write_embedding_dir(&set, &out.0)?;
    out.write(
        "meta.json",
        meta_json(json!({
            "metric": set.metric(),
            "weights": weights,
            "dim": dim,
            "noise": noise,
            "seed": s.seed,
            "manifest": manifest.display().to_string(),
        })),
    )?;
    out.complete()
}
