//! Tabular data container and CSV ingestion.
//!
//! A [`Dataset`] is a set of equally long numeric columns, each described by a
//! [`ColumnSpec`]. Roles (covariate, response, time, event) come from the
//! schema supplied by the caller and are never inferred from column names.
//! Only numeric and 0/1 columns are supported; multi-level categorical
//! variables must be encoded by the caller.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column '{0}'")]
    MissingColumn(String),
    #[error("column '{0}' is not in the schema")]
    UnexpectedColumn(String),
    #[error("duplicate column '{0}'")]
    DuplicateColumn(String),
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("row {row}, column '{column}': cannot parse '{value}' as a finite number")]
    BadCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column '{column}': binary column out of range (value {value})")]
    BinaryOutOfRange {
        row: usize,
        column: String,
        value: f64,
    },
    #[error("row {row}, column '{column}': survival time must be > 0 (value {value})")]
    NonPositiveTime {
        row: usize,
        column: String,
        value: f64,
    },
    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("column '{column}' has {found} values, expected {expected}")]
    LengthMismatch {
        column: String,
        expected: usize,
        found: usize,
    },
    #[error("dataset needs at least 2 rows, found {0}")]
    TooFewRows(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Numeric,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnRole {
    Covariate,
    Response,
    Time,
    Event,
    Ignore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    pub role: ColumnRole,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, kind: ColumnKind, role: ColumnRole) -> Self {
        Self {
            name: name.into(),
            kind,
            role,
        }
    }

    pub fn covariate(name: impl Into<String>) -> Self {
        Self::new(name, ColumnKind::Numeric, ColumnRole::Covariate)
    }
}

/// Right-censored survival outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalOutcome {
    /// Follow-up time, strictly positive.
    pub time: f64,
    /// `true` when the event was observed, `false` when censored.
    pub event: bool,
}

impl SurvivalOutcome {
    pub fn new(time: f64, event: bool) -> Self {
        Self { time, event }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub spec: ColumnSpec,
    pub values: Vec<f64>,
}

/// Immutable, validated table of numeric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_rows: usize,
    columns: Vec<Column>,
}

impl Dataset {
    /// Validates and assembles a dataset. Row numbers in errors are 1-based.
    pub fn new(columns: Vec<(ColumnSpec, Vec<f64>)>) -> Result<Self, DataError> {
        let n_rows = columns.first().map_or(0, |(_, v)| v.len());
        let mut seen = HashSet::new();
        for (spec, values) in &columns {
            if !seen.insert(spec.name.as_str()) {
                return Err(DataError::DuplicateColumn(spec.name.clone()));
            }
            if values.len() != n_rows {
                return Err(DataError::LengthMismatch {
                    column: spec.name.clone(),
                    expected: n_rows,
                    found: values.len(),
                });
            }
            for (i, &v) in values.iter().enumerate() {
                check_cell(spec, i + 1, v)?;
            }
        }
        if n_rows < 2 {
            return Err(DataError::TooFewRows(n_rows));
        }
        let columns = columns
            .into_iter()
            .map(|(spec, values)| Column { spec, values })
            .collect();
        Ok(Self { n_rows, columns })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn spec(&self, name: &str) -> Result<&ColumnSpec, DataError> {
        self.find(name).map(|c| &c.spec)
    }

    /// Values of the named column, in row order.
    pub fn column(&self, name: &str) -> Result<&[f64], DataError> {
        self.find(name).map(|c| c.values.as_slice())
    }

    pub fn names_with_role(&self, role: ColumnRole) -> Vec<&str> {
        self.columns
            .iter()
            .filter(|c| c.spec.role == role)
            .map(|c| c.spec.name.as_str())
            .collect()
    }

    /// New dataset holding the given rows, in the order given.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self, DataError> {
        let columns = self
            .columns
            .iter()
            .map(|c| (c.spec.clone(), rows.iter().map(|&r| c.values[r]).collect()))
            .collect();
        Self::new(columns)
    }

    /// Writes the dataset as CSV. Floats use the shortest representation that
    /// parses back to the identical `f64`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), DataError> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(self.columns.iter().map(|c| c.spec.name.as_str()))?;
        let mut record = Vec::with_capacity(self.columns.len());
        for i in 0..self.n_rows {
            record.clear();
            record.extend(self.columns.iter().map(|c| format!("{}", c.values[i])));
            writer.write_record(&record)?;
        }
        writer.flush().map_err(|source| DataError::Io {
            path: "<output>".into(),
            source,
        })?;
        Ok(())
    }

    fn find(&self, name: &str) -> Result<&Column, DataError> {
        self.columns
            .iter()
            .find(|c| c.spec.name == name)
            .ok_or_else(|| DataError::UnknownColumn(name.to_string()))
    }
}

fn check_cell(spec: &ColumnSpec, row: usize, v: f64) -> Result<(), DataError> {
    if !v.is_finite() {
        return Err(DataError::BadCell {
            row,
            column: spec.name.clone(),
            value: v.to_string(),
        });
    }
    if (spec.kind == ColumnKind::Binary || spec.role == ColumnRole::Event) && v != 0.0 && v != 1.0 {
        return Err(DataError::BinaryOutOfRange {
            row,
            column: spec.name.clone(),
            value: v,
        });
    }
    if spec.role == ColumnRole::Time && v <= 0.0 {
        return Err(DataError::NonPositiveTime {
            row,
            column: spec.name.clone(),
            value: v,
        });
    }
    Ok(())
}

fn parse_cell(text: &str) -> Option<f64> {
    let t = text.trim();
    // Rust's float parser also accepts "inf", "nan" and "infinity".
    if t.is_empty()
        || t.bytes()
            .any(|b| b.is_ascii_alphabetic() && b != b'e' && b != b'E')
    {
        return None;
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn open(path: &Path) -> Result<File, DataError> {
    File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Header names of a CSV file, in file order.
pub fn read_header(path: impl AsRef<Path>) -> Result<Vec<String>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open(path.as_ref())?);
    Ok(reader.headers()?.iter().map(str::to_string).collect())
}

pub fn load_csv(path: impl AsRef<Path>, schema: &[ColumnSpec]) -> Result<Dataset, DataError> {
    read_csv(open(path.as_ref())?, schema)
}

/// Parses CSV text against `schema`. Every header name must appear in the
/// schema and vice versa. The result holds columns in schema order; columns
/// with the `Ignore` role are neither parsed nor kept.
pub fn read_csv<R: Read>(input: R, schema: &[ColumnSpec]) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();

    let mut seen = HashSet::new();
    for name in &header {
        if !seen.insert(name.as_str()) {
            return Err(DataError::DuplicateColumn(name.clone()));
        }
        if !schema.iter().any(|s| &s.name == name) {
            return Err(DataError::UnexpectedColumn(name.clone()));
        }
    }
    let positions = schema
        .iter()
        .map(|s| {
            header
                .iter()
                .position(|h| *h == s.name)
                .ok_or_else(|| DataError::MissingColumn(s.name.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let kept: Vec<usize> = (0..schema.len())
        .filter(|&k| schema[k].role != ColumnRole::Ignore)
        .collect();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); schema.len()];
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        if record.len() != header.len() {
            return Err(DataError::RaggedRow {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        for &k in &kept {
            let spec = &schema[k];
            let text = &record[positions[k]];
            let v = parse_cell(text).ok_or_else(|| DataError::BadCell {
                row,
                column: spec.name.clone(),
                value: text.to_string(),
            })?;
            check_cell(spec, row, v)?;
            values[k].push(v);
        }
    }
    Dataset::new(
        kept.iter()
            .map(|&k| (schema[k].clone(), std::mem::take(&mut values[k])))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xy_schema() -> Vec<ColumnSpec> {
        vec![
            ColumnSpec::covariate("x"),
            ColumnSpec::new("y", ColumnKind::Numeric, ColumnRole::Response),
        ]
    }

    #[test]
    fn three_rows() {
        let ds = read_csv("x,y\n1,2\n3,4.5\n-1e-3,7\n".as_bytes(), &xy_schema()).unwrap();
        assert_eq!(ds.n_rows(), 3);
        assert_eq!(ds.column("x").unwrap(), &[1.0, 3.0, -1e-3]);
        assert_eq!(ds.column("y").unwrap(), &[2.0, 4.5, 7.0]);
    }

    #[test]
    fn ignored_columns_are_skipped() {
        let schema = vec![
            ColumnSpec::new("id", ColumnKind::Numeric, ColumnRole::Ignore),
            ColumnSpec::covariate("x"),
        ];
        let ds = read_csv("x,id\n1,a17\n2,b3\n".as_bytes(), &schema).unwrap();
        assert_eq!(ds.columns().len(), 1);
        assert_eq!(ds.column("x").unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn na_cell_names_row_and_column() {
        let err = read_csv("x,y\n1,2\n3,NA\n".as_bytes(), &xy_schema()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2") && msg.contains("'y'"), "{msg}");
    }

    #[test]
    fn non_finite_literals_rejected() {
        for bad in ["inf", "NaN", "-infinity", "", "0x10", "1,5"] {
            let text = format!("x,y\n1,2\n3,{bad}\n");
            assert!(read_csv(text.as_bytes(), &xy_schema()).is_err(), "{bad}");
        }
    }

    #[test]
    fn event_out_of_range() {
        let schema = vec![
            ColumnSpec::new("time", ColumnKind::Numeric, ColumnRole::Time),
            ColumnSpec::new("event", ColumnKind::Binary, ColumnRole::Event),
        ];
        let err = read_csv("time,event\n1,1\n2,2\n".as_bytes(), &schema).unwrap_err();
        assert!(err.to_string().contains("binary column out of range"));

        let err = read_csv("time,event\n1,1\n0,0\n".as_bytes(), &schema).unwrap_err();
        assert!(matches!(err, DataError::NonPositiveTime { row: 2, .. }));
    }

    #[test]
    fn missing_and_unknown_columns() {
        let err = read_csv("x\n1\n2\n".as_bytes(), &xy_schema()).unwrap_err();
        assert!(matches!(err, DataError::MissingColumn(ref c) if c == "y"));
        let ds = read_csv("y,x\n1,2\n3,4\n".as_bytes(), &xy_schema()).unwrap();
        assert!(matches!(ds.column("psa"), Err(DataError::UnknownColumn(_))));
        // schema order, not file order
        assert_eq!(ds.columns()[0].spec.name, "x");
        assert_eq!(ds.column("x").unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn single_row_rejected() {
        assert!(matches!(
            read_csv("x,y\n1,2\n".as_bytes(), &xy_schema()),
            Err(DataError::TooFewRows(1))
        ));
    }
}
