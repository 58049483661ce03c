//! CSV ingestion driven by a TOML dataset config.
//!
//! ```toml
//! label = "income"
//! positive_labels = [">50K", ">50K."]
//! negative_labels = ["<=50K", "<=50K."]
//! missing_values = ["?"]
//! # present only for header-less files
//! # column_names = ["age", "workclass", ...]
//!
//! [[columns]]
//! name = "age"
//! kind = "continuous"
//! bins = 10
//!
//! [[columns]]
//! name = "sex"
//! kind = "categorical"
//! sensitive = true
//! ```
//!
//! Columns present in the file but absent from `columns` are ignored. Rows
//! holding a missing-value token in any used column are dropped.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Cell, ColumnKind, ColumnSpec, Dataset};
use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKindName {
    Categorical,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnConfig {
    pub name: String,
    pub kind: ColumnKindName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub sensitive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub label: String,
    pub positive_labels: Vec<String>,
    pub negative_labels: Vec<String>,
    #[serde(default)]
    pub missing_values: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_bins: Option<usize>,
    pub columns: Vec<ColumnConfig>,
}

impl DatasetConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: DatasetConfig = toml::from_str(text)?;
        cfg.column_specs()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("dataset config serializes")
    }

    /// Config that reads back a file produced by [`write_csv`].
    pub fn for_dataset(ds: &Dataset) -> Self {
        DatasetConfig {
            label: ds.label_name.clone(),
            positive_labels: vec!["1".into()],
            negative_labels: vec!["0".into()],
            missing_values: Vec::new(),
            column_names: None,
            default_bins: None,
            columns: ds
                .columns
                .iter()
                .map(|c| match c.kind {
                    ColumnKind::Categorical => ColumnConfig {
                        name: c.name.clone(),
                        kind: ColumnKindName::Categorical,
                        bins: None,
                        sensitive: c.sensitive,
                    },
                    ColumnKind::Continuous { bins } => ColumnConfig {
                        name: c.name.clone(),
                        kind: ColumnKindName::Continuous,
                        bins: Some(bins),
                        sensitive: c.sensitive,
                    },
                })
                .collect(),
        }
    }

    pub fn column_specs(&self) -> Result<Vec<ColumnSpec>> {
        let default_bins = self.default_bins.unwrap_or(DEFAULT_BINS);
        let specs: Vec<ColumnSpec> = self
            .columns
            .iter()
            .map(|c| ColumnSpec {
                name: c.name.clone(),
                kind: match c.kind {
                    ColumnKindName::Categorical => ColumnKind::Categorical,
                    ColumnKindName::Continuous => ColumnKind::Continuous {
                        bins: c.bins.unwrap_or(default_bins),
                    },
                },
                sensitive: c.sensitive,
            })
            .collect();
        super::validate_columns(&specs)?;
        if specs.iter().any(|s| s.name == self.label) {
            return Err(Error::Schema(format!(
                "label column {:?} is also listed as a feature",
                self.label
            )));
        }
        if let Some(p) = self
            .positive_labels
            .iter()
            .find(|p| self.negative_labels.contains(p))
        {
            return Err(Error::Config(format!("label value {p:?} is both positive and negative")));
        }
        Ok(specs)
    }
}

/// Load a CSV file into a typed [`Dataset`]. Row indices in errors count data
/// rows from zero, excluding the header.
pub fn load_csv(path: &Path, cfg: &DatasetConfig) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, cfg)
}

pub(crate) fn read_csv<R: std::io::Read>(reader: R, cfg: &DatasetConfig) -> Result<Dataset> {
    let columns = cfg.column_specs()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(cfg.column_names.is_none())
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);

    let header: Vec<String> = match &cfg.column_names {
        Some(names) => names.clone(),
        None => rdr.headers()?.iter().map(str::to_owned).collect(),
    };
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("missing column {name:?} in header")))
    };
    let label_pos = find(&cfg.label)?;
    let positions: Vec<usize> = columns.iter().map(|c| find(&c.name)).collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    'records: for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != header.len() {
            return Err(Error::row(
                i,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        let is_missing = |s: &str| cfg.missing_values.iter().any(|m| m == s);
        if is_missing(&rec[label_pos]) || positions.iter().any(|&p| is_missing(&rec[p])) {
            continue 'records;
        }
        let raw_label = &rec[label_pos];
        let label = if cfg.positive_labels.iter().any(|p| p == raw_label) {
            1
        } else if cfg.negative_labels.iter().any(|p| p == raw_label) {
            0
        } else {
            return Err(Error::row(i, format!("label {raw_label:?} outside the label mapping")));
        };
        let mut row = Vec::with_capacity(columns.len());
        for (col, &p) in columns.iter().zip(&positions) {
            let text = &rec[p];
            row.push(match col.kind {
                ColumnKind::Categorical => Cell::Cat(text.to_owned()),
                ColumnKind::Continuous { .. } => {
                    let v: f64 = text.parse().map_err(|_| {
                        Error::row(i, format!("column {}: cannot parse {text:?} as a number", col.name))
                    })?;
                    if !v.is_finite() {
                        return Err(Error::row(i, format!("column {}: non-finite value", col.name)));
                    }
                    Cell::Num(v)
                }
            });
        }
        rows.push(row);
        labels.push(label);
    }
    Dataset::new(columns, rows, labels, cfg.label.clone())
}

/// Write a dataset as CSV with a header row; the label is the last column and
/// is written as `0`/`1`.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_csv_to(ds, &mut buf)?;
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_csv_to<W: Write>(ds: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = ds.columns.iter().map(|c| c.name.as_str()).collect();
    header.push(&ds.label_name);
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for (row, label) in ds.rows.iter().zip(&ds.labels) {
        record.clear();
        for cell in row {
            record.push(match cell {
                Cell::Cat(s) => s.clone(),
                Cell::Num(v) => v.to_string(),
            });
        }
        record.push(label.to_string());
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}
