use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Categorical properties per id. Values are always strings; numeric grid
/// levels such as `"0.25"` are labels, not numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyTable {
    ids: Vec<String>,
    columns: Vec<(String, Vec<String>)>,
}

impl PropertyTable {
    pub fn new(ids: Vec<String>, columns: Vec<(String, Vec<String>)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        let mut names = HashSet::new();
        for (name, values) in &columns {
            if name.trim().is_empty() {
                return Err(Error::arg("empty property name"));
            }
            if name == "id" {
                return Err(Error::arg("\"id\" is reserved and cannot be a property"));
            }
            if !names.insert(name.as_str()) {
                return Err(Error::arg(format!("duplicate property {name:?}")));
            }
            if values.len() != ids.len() {
                return Err(Error::arg(format!(
                    "property {name:?} has {} values for {} ids",
                    values.len(),
                    ids.len()
                )));
            }
        }
        Ok(Self { ids, columns })
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

    pub fn property_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(n, _)| n.as_str())
    }

    pub fn columns(&self) -> &[(String, Vec<String>)] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&[String]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    /// Distinct values of a property, in first-seen order.
    pub fn alphabet(&self, name: &str) -> Option<Vec<&str>> {
        let column = self.column(name)?;
        let mut seen = HashSet::new();
        Some(
            column
                .iter()
                .filter(|v| seen.insert(v.as_str()))
                .map(String::as_str)
                .collect(),
        )
    }

    /// Reorders rows to follow `ids`. Fails unless both id sets are equal.
    pub fn aligned_to(&self, ids: &[String]) -> Result<PropertyTable> {
        check_same_ids(&self.ids, ids)?;
        let position: HashMap<&str, usize> = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let order: Vec<usize> = ids.iter().map(|id| position[id.as_str()]).collect();
        let columns = self
            .columns
            .iter()
            .map(|(name, values)| {
                (
                    name.clone(),
                    order.iter().map(|&i| values[i].clone()).collect(),
                )
            })
            .collect();
        Ok(PropertyTable {
            ids: ids.to_vec(),
            columns,
        })
    }
}

/// Errors unless `left` and `right` contain the same ids (order ignored).
pub fn check_same_ids(left: &[String], right: &[String]) -> Result<()> {
    let l: HashSet<&str> = left.iter().map(String::as_str).collect();
    let r: HashSet<&str> = right.iter().map(String::as_str).collect();
    if l == r && left.len() == right.len() {
        return Ok(());
    }
    let mut only_left: Vec<&str> = l.difference(&r).copied().collect();
    let mut only_right: Vec<&str> = r.difference(&l).copied().collect();
    only_left.sort_unstable();
    only_right.sort_unstable();
    let examples = only_left
        .iter()
        .chain(&only_right)
        .take(10)
        .map(|s| s.to_string())
        .collect();
    Err(Error::IdMismatch {
        missing_left: only_left.len(),
        missing_right: only_right.len(),
        examples,
    })
}

/// Reads `id,<prop1>,<prop2>,...` CSV.
pub fn read_property_table(path: impl AsRef<Path>) -> Result<PropertyTable> {
    let path = path.as_ref();
    let bad = |reason: String| Error::PropertyTable {
        path: path.to_path_buf(),
        reason,
    };
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file);

    let header = reader
        .headers()
        .map_err(|e| bad(format!("unreadable header: {e}")))?
        .clone();
    if header.get(0).map(str::trim) != Some("id") {
        return Err(bad("first column must be \"id\"".into()));
    }
    let names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    if let Some(i) = names.iter().position(|n| n.is_empty()) {
        return Err(bad(format!("empty property name in column {}", i + 2)));
    }

    let mut ids = Vec::new();
    let mut columns: Vec<Vec<String>> = vec![Vec::new(); names.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { .. } => bad(format!("ragged row {}", row + 2)),
            _ => bad(format!("row {}: {e}", row + 2)),
        })?;
        ids.push(record[0].to_string());
        for (col, value) in columns.iter_mut().zip(record.iter().skip(1)) {
            col.push(value.to_string());
        }
    }
    PropertyTable::new(ids, names.into_iter().zip(columns).collect())
}

pub fn write_property_table(table: &PropertyTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    let to_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut header = vec!["id"];
    header.extend(table.property_names());
    writer.write_record(&header).map_err(to_err)?;
    for (i, id) in table.ids.iter().enumerate() {
        let mut record = vec![id.as_str()];
        record.extend(table.columns.iter().map(|(_, v)| v[i].as_str()));
        writer.write_record(&record).map_err(to_err)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Integer codes for a label column plus the number of distinct values.
pub fn encode_labels(values: &[String]) -> (Vec<u32>, usize) {
    let mut codes = HashMap::new();
    let encoded = values
        .iter()
        .map(|v| {
            let next = codes.len() as u32;
            *codes.entry(v.as_str()).or_insert(next)
        })
        .collect();
    (encoded, codes.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, text: &str) -> std::path::PathBuf {
        let p = dir.join("props.csv");
        fs::File::create(&p)
            .unwrap()
            .write_all(text.as_bytes())
            .unwrap();
        p
    }

    #[test]
    fn two_rows_one_property() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "id,car_model\na,Tesla Model S\nb,Megane RS\n");
        let t = read_property_table(p).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.property_names().collect::<Vec<_>>(), ["car_model"]);
        assert_eq!(t.column("car_model").unwrap(), ["Tesla Model S", "Megane RS"]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "id,x\na,1\na,2\n");
        assert!(matches!(read_property_table(p), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn ragged_row_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "id,x,y\na,1,2\nb,3\n");
        let err = read_property_table(p).unwrap_err();
        assert!(err.to_string().contains("ragged row 3"), "{err}");
    }

    #[test]
    fn empty_property_name_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "id,x,\na,1,2\n");
        let err = read_property_table(p).unwrap_err();
        assert!(err.to_string().contains("empty property name"), "{err}");
    }

    #[test]
    fn alignment_and_mismatch() {
        let t = PropertyTable::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![("p".into(), vec!["1".into(), "2".into(), "3".into()])],
        )
        .unwrap();
        let order: Vec<String> = ["c", "a", "b"].iter().map(|s| s.to_string()).collect();
        let aligned = t.aligned_to(&order).unwrap();
        assert_eq!(aligned.column("p").unwrap(), ["3", "1", "2"]);

        let other: Vec<String> = ["a", "b", "z"].iter().map(|s| s.to_string()).collect();
        match t.aligned_to(&other) {
            Err(Error::IdMismatch {
                missing_left,
                missing_right,
                examples,
            }) => {
                assert_eq!((missing_left, missing_right), (1, 1));
                assert_eq!(examples, ["c", "z"]);
            }
            other => panic!("expected id mismatch, got {other:?}"),
        }
    }

    #[test]
    fn label_codes() {
        let v: Vec<String> = ["x", "y", "x", "z"].iter().map(|s| s.to_string()).collect();
        assert_eq!(encode_labels(&v), (vec![0, 1, 0, 2], 3));
    }
}
