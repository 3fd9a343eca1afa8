//! CSV ingestion and export with a TOML schema sidecar.
//!
//! Column names follow `a{j}_{k}` / `h{j}_{k}` for the `k`-th column of aspect
//! `j`'s AI / human block, `y` for the target and `s{j}_0`, `s{j}_1` for the
//! optional relevance and agreement columns. Data rows are numbered from 1 in
//! error messages.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{AspectBlocks, Dataset};
use crate::error::{Error, Result};

/// Schema sidecar describing the aspect layout and column order of a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub aspects: usize,
    pub a_widths: Vec<usize>,
    pub h_widths: Vec<usize>,
    #[serde(default)]
    pub agreement: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    /// File column order. Defaults to [`DatasetSchema::canonical_columns`].
    #[serde(default)]
    pub columns: Vec<String>,
}

impl DatasetSchema {
    pub fn for_dataset(ds: &Dataset) -> Self {
        let mut schema = DatasetSchema {
            aspects: ds.aspects(),
            a_widths: ds.blocks().a_widths().to_vec(),
            h_widths: ds.blocks().h_widths().to_vec(),
            agreement: ds.agreement().is_some(),
            id_column: ds.ids().map(|_| "id".to_string()),
            rows: Some(ds.n()),
            columns: Vec::new(),
        };
        schema.columns = schema.canonical_columns();
        schema
    }

    pub fn blocks(&self) -> Result<AspectBlocks> {
        if self.a_widths.len() != self.aspects || self.h_widths.len() != self.aspects {
            return Err(Error::Schema(format!(
                "aspects = {} but {} AI widths and {} human widths given",
                self.aspects,
                self.a_widths.len(),
                self.h_widths.len()
            )));
        }
        AspectBlocks::new(self.a_widths.clone(), self.h_widths.clone())
    }

    pub fn a_names(&self) -> Vec<String> {
        block_names('a', &self.a_widths)
    }

    pub fn h_names(&self) -> Vec<String> {
        block_names('h', &self.h_widths)
    }

    pub fn s_names(&self) -> Vec<String> {
        if !self.agreement {
            return Vec::new();
        }
        (0..self.aspects)
            .flat_map(|j| [format!("s{j}_0"), format!("s{j}_1")])
            .collect()
    }

    /// Id column (if any), then `a*`, `h*`, `y`, `s*`.
    pub fn canonical_columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = self.id_column.iter().cloned().collect();
        cols.extend(self.a_names());
        cols.extend(self.h_names());
        cols.push("y".to_string());
        cols.extend(self.s_names());
        cols
    }

    fn column_order(&self) -> Result<Vec<String>> {
        let canonical = self.canonical_columns();
        if self.columns.is_empty() {
            return Ok(canonical);
        }
        let mut given = self.columns.clone();
        given.sort();
        let mut expected = canonical;
        expected.sort();
        if given != expected {
            return Err(Error::Schema(
                "`columns` must list exactly the id, a*, h*, y and s* columns implied by the widths"
                    .into(),
            ));
        }
        Ok(self.columns.clone())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// `data.csv` -> `data.schema.toml`.
    pub fn sidecar_path(data_path: impl AsRef<Path>) -> PathBuf {
        data_path.as_ref().with_extension("schema.toml")
    }
}

fn block_names(prefix: char, widths: &[usize]) -> Vec<String> {
    widths
        .iter()
        .enumerate()
        .flat_map(|(j, &w)| (0..w).map(move |k| format!("{prefix}{j}_{k}")))
        .collect()
}

/// Reads a dataset file described by `schema`.
pub fn load_dataset(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let blocks = schema.blocks()?;
    schema.column_order()?;

    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Schema(format!("{}: {other:?}", path.display())),
        })?;
    let header: HashMap<String, usize> = reader
        .headers()?
        .iter()
        .enumerate()
        .map(|(i, name)| (name.to_string(), i))
        .collect();
    let locate = |names: &[String]| -> Result<Vec<usize>> {
        names
            .iter()
            .map(|name| {
                header.get(name).copied().ok_or_else(|| Error::MissingColumn {
                    column: name.clone(),
                })
            })
            .collect()
    };
    let a_names = schema.a_names();
    let h_names = schema.h_names();
    let s_names = schema.s_names();
    let y_name = vec!["y".to_string()];
    let a_idx = locate(&a_names)?;
    let h_idx = locate(&h_names)?;
    let s_idx = locate(&s_names)?;
    let y_idx = locate(&y_name)?[0];
    let id_idx = match &schema.id_column {
        Some(name) => Some(locate(std::slice::from_ref(name))?[0]),
        None => None,
    };

    let (mut a, mut h, mut s, mut y, mut ids) = (vec![], vec![], vec![], vec![], vec![]);
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let cell = |idx: usize, name: &str| -> Result<f64> {
            let raw = record.get(idx).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| Error::NonNumeric {
                row,
                column: name.to_string(),
                value: raw.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row,
                    column: name.to_string(),
                    value: v,
                });
            }
            Ok(v)
        };
        for (&i, name) in a_idx.iter().zip(&a_names) {
            a.push(cell(i, name)?);
        }
        for (&i, name) in h_idx.iter().zip(&h_names) {
            h.push(cell(i, name)?);
        }
        for (&i, name) in s_idx.iter().zip(&s_names) {
            s.push(cell(i, name)?);
        }
        y.push(cell(y_idx, "y")?);
        if let Some(i) = id_idx {
            ids.push(record.get(i).unwrap_or("").to_string());
        }
    }

    let n = y.len();
    if let Some(expected) = schema.rows {
        if expected != n {
            return Err(Error::RowCount { expected, found: n });
        }
    }
    Dataset::new(
        DMatrix::from_row_slice(n, a_names.len(), &a),
        DMatrix::from_row_slice(n, h_names.len(), &h),
        DVector::from_vec(y),
        blocks,
        schema
            .agreement
            .then(|| DMatrix::from_row_slice(n, s_names.len(), &s)),
        id_idx.map(|_| ids),
    )
}

/// Writes `ds` as CSV in `schema`'s column order. Values use the shortest
/// representation that parses back to the identical `f64`.
pub fn write_dataset(path: impl AsRef<Path>, ds: &Dataset, schema: &DatasetSchema) -> Result<()> {
    let path = path.as_ref();
    if schema.blocks()? != *ds.blocks() {
        return Err(Error::Schema("schema widths do not match the dataset".into()));
    }
    if schema.agreement != ds.agreement().is_some() {
        return Err(Error::Schema("schema agreement flag does not match the dataset".into()));
    }
    if schema.id_column.is_some() && ds.ids().is_none() {
        return Err(Error::Schema("schema names an id column but the dataset has no ids".into()));
    }
    let order = schema.column_order()?;
    let mut lookup: HashMap<String, Box<dyn Fn(usize) -> String + '_>> = HashMap::new();
    for (c, name) in schema.a_names().into_iter().enumerate() {
        lookup.insert(name, Box::new(move |r| ds.a()[(r, c)].to_string()));
    }
    for (c, name) in schema.h_names().into_iter().enumerate() {
        lookup.insert(name, Box::new(move |r| ds.h()[(r, c)].to_string()));
    }
    lookup.insert("y".into(), Box::new(|r| ds.y()[r].to_string()));
    if let Some(s) = ds.agreement() {
        for (c, name) in schema.s_names().into_iter().enumerate() {
            lookup.insert(name, Box::new(move |r| s[(r, c)].to_string()));
        }
    }
    if let (Some(name), Some(ids)) = (&schema.id_column, ds.ids()) {
        lookup.insert(name.clone(), Box::new(move |r| ids[r].clone()));
    }

    let mut writer = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Schema(format!("{other:?}")),
    })?;
    writer.write_record(&order)?;
    for r in 0..ds.n() {
        writer.write_record(order.iter().map(|name| lookup[name](r)))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}
