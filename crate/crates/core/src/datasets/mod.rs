//! Raw tabular data: synthetic generators, CSV ingestion and seeded splits.

mod split;
mod synthetic;
mod tabular;

pub use split::{split, SplitIndices, SplitSpec};
pub use synthetic::{generate, generate_scenario1, generate_scenario2, Scenario, SyntheticSpec};
pub use tabular::{load_csv, write_csv, ColumnConfig, DatasetConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ColumnKind {
    Categorical,
    Continuous { bins: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    pub sensitive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Cat(String),
    Num(f64),
}

/// Rows of typed cells plus a binary label, with the column that defines the
/// sensitive groups marked in `columns`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub columns: Vec<ColumnSpec>,
    pub rows: Vec<Vec<Cell>>,
    pub labels: Vec<u8>,
    pub label_name: String,
}

impl Dataset {
    pub fn new(
        columns: Vec<ColumnSpec>,
        rows: Vec<Vec<Cell>>,
        labels: Vec<u8>,
        label_name: impl Into<String>,
    ) -> Result<Self> {
        let ds = Dataset {
            columns,
            rows,
            labels,
            label_name: label_name.into(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        validate_columns(&self.columns)?;
        if self.rows.len() != self.labels.len() {
            return Err(Error::Shape(format!(
                "{} rows but {} labels",
                self.rows.len(),
                self.labels.len()
            )));
        }
        for (i, (row, &label)) in self.rows.iter().zip(&self.labels).enumerate() {
            if label > 1 {
                return Err(Error::row(i, format!("label {label} is not binary")));
            }
            if row.len() != self.columns.len() {
                return Err(Error::row(
                    i,
                    format!("expected {} cells, found {}", self.columns.len(), row.len()),
                ));
            }
            for (cell, col) in row.iter().zip(&self.columns) {
                match (cell, col.kind) {
                    (Cell::Cat(_), ColumnKind::Categorical) => {}
                    (Cell::Num(v), ColumnKind::Continuous { .. }) if v.is_finite() => {}
                    (Cell::Num(v), ColumnKind::Continuous { .. }) => {
                        return Err(Error::row(i, format!("column {}: non-finite value {v}", col.name)))
                    }
                    _ => {
                        return Err(Error::row(i, format!("column {}: cell type does not match kind", col.name)))
                    }
                }
            }
        }
        Ok(())
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            columns: self.columns.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            label_name: self.label_name.clone(),
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }
}

pub(crate) fn validate_columns(columns: &[ColumnSpec]) -> Result<()> {
    if columns.is_empty() {
        return Err(Error::Schema("no feature columns".into()));
    }
    let sensitive = columns.iter().filter(|c| c.sensitive).count();
    if sensitive != 1 {
        return Err(Error::Schema(format!(
            "exactly one sensitive column required, found {sensitive}"
        )));
    }
    for (i, c) in columns.iter().enumerate() {
        if columns[..i].iter().any(|o| o.name == c.name) {
            return Err(Error::Schema(format!("duplicate column name {:?}", c.name)));
        }
        if let ColumnKind::Continuous { bins } = c.kind {
            if bins < 2 {
                return Err(Error::Schema(format!("column {}: bins must be >= 2", c.name)));
            }
        }
    }
    Ok(())
}
