//! CSV (full precision) and Markdown (rounded) renderings of results.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::retrieval::NrPrecReport;
use crate::saliency::ComparisonMatrix;
use crate::stats::MwuResult;

pub const COMPARISON_CSV_HEADER: &str =
    "model_a,model_b,mean_r,std_r,mean_jsd,std_jsd,n_images,n_skipped";
pub const NRPREC_CSV_HEADER: &str = "property,mean_nrprec,mean_rprec,n_queries,n_skipped,significant";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per unordered model pair, in command-line order.
pub fn comparison_csv(matrix: &ComparisonMatrix) -> String {
    let mut out = String::from(COMPARISON_CSV_HEADER);
    out.push('\n');
    for (i, j, c) in matrix.pairs() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            csv_field(&matrix.model_names[i]),
            csv_field(&matrix.model_names[j]),
            c.mean_correlation,
            c.std_correlation,
            c.mean_jsd,
            c.std_jsd,
            c.n_images,
            c.n_skipped
        );
    }
    out
}

fn percent(v: f64) -> String {
    if v.is_nan() {
        "-".into()
    } else {
        format!("{}", (v * 100.0).round() as i64)
    }
}

fn matrix_markdown(
    matrix: &ComparisonMatrix,
    title: &str,
    cell: impl Fn(&crate::saliency::ComparisonCell) -> (f64, f64),
) -> String {
    let mut out = format!("**{title}** (percent)\n\n|");
    for name in &matrix.model_names {
        let _ = write!(out, " | {name}");
    }
    out.push_str(" |\n|---");
    for _ in &matrix.model_names {
        out.push_str("|---");
    }
    out.push_str("|\n");
    for (i, row_name) in matrix.model_names.iter().enumerate() {
        let _ = write!(out, "| {row_name}");
        for j in 0..matrix.model_names.len() {
            match matrix.cell(i, j) {
                Some(c) => {
                    let (mean, std) = cell(c);
                    let _ = write!(out, " | {}±{}", percent(mean), percent(std));
                }
                None => out.push_str(" | "),
            }
        }
        out.push_str(" |\n");
    }
    out
}

/// Correlation and JSD tables, rows and columns in model order.
pub fn comparison_markdown(matrix: &ComparisonMatrix) -> String {
    let mut out = matrix_markdown(matrix, "Correlation", |c| (c.mean_correlation, c.std_correlation));
    out.push('\n');
    out.push_str(&matrix_markdown(matrix, "Jensen-Shannon divergence", |c| {
        (c.mean_jsd, c.std_jsd)
    }));
    out
}

pub fn nrprec_csv(reports: &[NrPrecReport]) -> String {
    let mut out = String::from(NRPREC_CSV_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            csv_field(&r.property_name),
            r.mean_nrprec,
            r.mean_rprec,
            r.n_queries(),
            r.n_skipped,
            r.significant
        );
    }
    out
}

/// Properties as columns, one row per model. Significant values are underlined.
pub fn nrprec_markdown(models: &[(String, Vec<NrPrecReport>)], properties: &[String]) -> String {
    let mut out = String::from("| Model");
    for p in properties {
        let _ = write!(out, " | {p}");
    }
    out.push_str(" |\n|---");
    for _ in properties {
        out.push_str("|---:");
    }
    out.push_str("|\n");
    for (model, reports) in models {
        let _ = write!(out, "| {model}");
        for p in properties {
            match reports.iter().find(|r| &r.property_name == p) {
                Some(r) if r.significant => {
                    let _ = write!(out, " | <u>{:.2}</u>", r.mean_nrprec);
                }
                Some(r) => {
                    let _ = write!(out, " | {:.2}", r.mean_nrprec);
                }
                None => out.push_str(" | -"),
            }
        }
        out.push_str(" |\n");
    }
    out
}

/// `(property, mean_nrprec)` rows of a report written by [`nrprec_csv`].
pub fn read_nrprec_csv(path: impl AsRef<Path>) -> Result<Vec<(String, f64)>> {
    let path = path.as_ref();
    let bad = |reason: String| Error::PropertyTable {
        path: path.to_path_buf(),
        reason,
    };
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| bad(format!("unreadable header: {e}")))?
        .clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(format!("missing column {name:?}")))
    };
    let (pi, vi) = (col("property")?, col("mean_nrprec")?);
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let value: f64 = record[vi]
            .parse()
            .map_err(|_| bad(format!("bad mean_nrprec {:?}", &record[vi])))?;
        rows.push((record[pi].to_string(), value));
    }
    Ok(rows)
}

pub fn group_test_csv(alpha: f64, rows: &[(String, MwuResult)]) -> String {
    let mut out = format!("property,U,p,method,significant@{alpha}\n");
    for (property, r) in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            csv_field(property),
            r.u_statistic,
            r.p_value,
            r.method.name(),
            r.significant(alpha)
        );
    }
    out
}

pub fn group_test_markdown(alpha: f64, rows: &[(String, MwuResult)]) -> String {
    let mut out = format!("| Property | U | p | Significant at {alpha} |\n|---|---:|---:|:---:|\n");
    for (property, r) in rows {
        let _ = writeln!(
            out,
            "| {property} | {} | {:.4} | {} |",
            r.u_statistic,
            r.p_value,
            if r.significant(alpha) { "yes" } else { "no" }
        );
    }
    out
}
