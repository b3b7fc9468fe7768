//! Masked design matrices, labeled datasets and their CSV representation.
//!
//! Missing cells are read from either the literal `NA` (any case) or an empty
//! cell, and always written back as `NA`. Reals are written in Rust's shortest
//! round-trip decimal form so a save/load cycle is bit-exact.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Binary censorship filter, `true` = observed.
pub type Mask = DMatrix<bool>;

pub const MISSING_TOKEN: &str = "NA";
pub const LABEL_COLUMN: &str = "y";

/// A design matrix with a binary observation mask.
///
/// Masked cells hold a NaN sentinel internally and are only reachable through
/// [`CensoredMatrix::get`], which returns `None` for them.
#[derive(Debug, Clone, PartialEq)]
pub struct CensoredMatrix {
    values: DMatrix<f64>,
    mask: Mask,
}

impl CensoredMatrix {
    /// Builds a censored matrix. Values at masked positions are discarded;
    /// every observed value must be finite.
    pub fn new(values: DMatrix<f64>, mask: Mask) -> Result<Self> {
        if values.shape() != mask.shape() {
            return Err(Error::Dimension(format!(
                "values are {:?} but mask is {:?}",
                values.shape(),
                mask.shape()
            )));
        }
        let (n, p) = values.shape();
        if n == 0 || p == 0 {
            return Err(Error::Validation(
                "censored matrix needs at least one sample and one feature".into(),
            ));
        }
        let mut values = values;
        for i in 0..p {
            for k in 0..n {
                if mask[(k, i)] {
                    if !values[(k, i)].is_finite() {
                        return Err(Error::Validation(format!(
                            "observed entry ({k}, {i}) is not finite"
                        )));
                    }
                } else {
                    values[(k, i)] = f64::NAN;
                }
            }
        }
        Ok(Self { values, mask })
    }

    pub fn fully_observed(values: DMatrix<f64>) -> Result<Self> {
        let mask = Mask::from_element(values.nrows(), values.ncols(), true);
        Self::new(values, mask)
    }

    /// Row-major cells, `None` meaning missing.
    pub fn from_rows(rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != p) {
            return Err(Error::Parse {
                row: bad,
                message: format!("expected {p} cells, found {}", rows[bad].len()),
            });
        }
        let values = DMatrix::from_fn(n, p, |k, i| rows[k][i].unwrap_or(f64::NAN));
        let mask = Mask::from_fn(n, p, |k, i| rows[k][i].is_some());
        Self::new(values, mask)
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn get(&self, k: usize, i: usize) -> Option<f64> {
        self.mask[(k, i)].then(|| self.values[(k, i)])
    }

    pub fn is_observed(&self, k: usize, i: usize) -> bool {
        self.mask[(k, i)]
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    /// Dense copy with every missing cell replaced by `fill`.
    pub fn filled(&self, fill: f64) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_samples(), self.n_features(), |k, i| {
            self.get(k, i).unwrap_or(fill)
        })
    }

    /// Observed values of feature `i`, in sample order.
    pub fn observed_column(&self, i: usize) -> Vec<f64> {
        (0..self.n_samples()).filter_map(|k| self.get(k, i)).collect()
    }

    pub fn missing_count(&self) -> usize {
        self.mask.iter().filter(|&&m| !m).count()
    }

    /// Fraction of observed cells.
    pub fn observed_fraction(&self) -> f64 {
        observed_fraction(self)
    }
}

/// A censored design together with its fully observed labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub design: CensoredMatrix,
    pub labels: DVector<f64>,
}

impl LabeledDataset {
    pub fn new(design: CensoredMatrix, labels: DVector<f64>) -> Result<Self> {
        if labels.len() != design.n_samples() {
            return Err(Error::Dimension(format!(
                "{} labels for {} samples",
                labels.len(),
                design.n_samples()
            )));
        }
        if let Some(k) = labels.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("label {k} is not finite")));
        }
        Ok(Self { design, labels })
    }
}

pub fn observed_fraction(m: &CensoredMatrix) -> f64 {
    let total = (m.n_samples() * m.n_features()) as f64;
    m.mask().iter().filter(|&&b| b).count() as f64 / total
}

/// Parses one cell. Empty and `NA` (any case) are missing.
pub fn parse_cell(raw: &str, row: usize) -> Result<Option<f64>> {
    let cell = raw.trim();
    if cell.is_empty() || cell.eq_ignore_ascii_case(MISSING_TOKEN) {
        return Ok(None);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(Error::Parse {
            row,
            message: format!("cell {cell:?} is neither a finite number nor a missing token"),
        }),
    }
}

pub fn format_real(v: f64) -> String {
    format!("{v}")
}

fn format_cell(v: Option<f64>) -> String {
    v.map_or_else(|| MISSING_TOKEN.to_string(), format_real)
}

/// Raw header + string cells of a CSV file. Rows are numbered from 1 for the
/// first data row; `#` lines are skipped.
pub fn read_raw_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(file);
    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let row = idx + 1;
        if record.len() != header.len() {
            return Err(Error::Parse {
                row,
                message: format!("expected {} cells, found {}", header.len(), record.len()),
            });
        }
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

/// A design read from disk, keeping the feature names and an optional
/// trailing `y` column.
#[derive(Debug, Clone)]
pub struct DesignTable {
    pub feature_names: Vec<String>,
    pub design: CensoredMatrix,
    pub labels: Option<DVector<f64>>,
}

/// Reads a design CSV. A final column named `y` is split off as labels and
/// must be fully observed.
pub fn load_design_table(path: &Path) -> Result<DesignTable> {
    let (header, rows) = read_raw_table(path)?;
    let has_labels = header.last().is_some_and(|h| h == LABEL_COLUMN);
    let p = header.len() - usize::from(has_labels);
    if p == 0 {
        return Err(Error::Validation(format!(
            "{} has no feature columns",
            path.display()
        )));
    }
    let mut cells = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for (idx, row) in rows.iter().enumerate() {
        let row_no = idx + 1;
        let parsed = row[..p]
            .iter()
            .map(|c| parse_cell(c, row_no))
            .collect::<Result<Vec<_>>>()?;
        cells.push(parsed);
        if has_labels {
            match parse_cell(&row[p], row_no)? {
                Some(v) => labels.push(v),
                None => {
                    return Err(Error::Validation(format!(
                        "label column `y` is missing at row {row_no}"
                    )))
                }
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::Validation(format!(
            "{} has no data rows",
            path.display()
        )));
    }
    let design = CensoredMatrix::from_rows(&cells)?;
    Ok(DesignTable {
        feature_names: header[..p].to_vec(),
        design,
        labels: has_labels.then(|| DVector::from_vec(labels)),
    })
}

/// Loads a labeled dataset: feature columns followed by a final `y` column.
pub fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    let table = load_design_table(path)?;
    let labels = table.labels.ok_or_else(|| {
        Error::Validation(format!(
            "{} has no final `{LABEL_COLUMN}` column",
            path.display()
        ))
    })?;
    LabeledDataset::new(table.design, labels)
}

/// Reads a single-column CSV of reals (header row required, no missing cells).
pub fn load_vector(path: &Path) -> Result<DVector<f64>> {
    let (header, rows) = read_raw_table(path)?;
    if header.len() != 1 {
        return Err(Error::Validation(format!(
            "{} must have exactly one column, found {}",
            path.display(),
            header.len()
        )));
    }
    let values = rows
        .iter()
        .enumerate()
        .map(|(idx, r)| {
            parse_cell(&r[0], idx + 1)?.ok_or_else(|| {
                Error::Validation(format!("missing value at row {} of {}", idx + 1, path.display()))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(values))
}

/// Reads a fully observed numeric matrix (header row ignored).
pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let table = load_design_table(path)?;
    if table.labels.is_some() {
        return Err(Error::Validation(format!(
            "{} carries a `y` column; expected a plain matrix",
            path.display()
        )));
    }
    if table.design.missing_count() > 0 {
        return Err(Error::Validation(format!(
            "{} contains missing cells",
            path.display()
        )));
    }
    Ok(table.design.filled(0.0))
}

pub fn default_feature_names(p: usize) -> Vec<String> {
    (0..p).map(|i| format!("x{i}")).collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let mut out = create(path)?;
    for line in lines {
        out.write_all(line.as_bytes())
            .and_then(|_| out.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Writes a design (with `NA` for missing cells) and optional labels column.
pub fn save_design(
    path: &Path,
    names: &[String],
    design: &CensoredMatrix,
    labels: Option<&DVector<f64>>,
) -> Result<()> {
    if names.len() != design.n_features() {
        return Err(Error::Dimension(format!(
            "{} names for {} features",
            names.len(),
            design.n_features()
        )));
    }
    if let Some(y) = labels {
        if y.len() != design.n_samples() {
            return Err(Error::Dimension(format!(
                "{} labels for {} samples",
                y.len(),
                design.n_samples()
            )));
        }
    }
    let mut header = names.join(",");
    if labels.is_some() {
        header.push(',');
        header.push_str(LABEL_COLUMN);
    }
    let rows = (0..design.n_samples()).map(|k| {
        let mut cells: Vec<String> = (0..design.n_features())
            .map(|i| format_cell(design.get(k, i)))
            .collect();
        if let Some(y) = labels {
            cells.push(format_real(y[k]));
        }
        cells.join(",")
    });
    write_lines(path, std::iter::once(header).chain(rows))
}

pub fn save_dataset(path: &Path, names: &[String], data: &LabeledDataset) -> Result<()> {
    save_design(path, names, &data.design, Some(&data.labels))
}

pub fn save_matrix(path: &Path, names: &[String], m: &DMatrix<f64>) -> Result<()> {
    let design = CensoredMatrix::fully_observed(m.clone())?;
    save_design(path, names, &design, None)
}

pub fn save_vector(path: &Path, column: &str, v: &DVector<f64>) -> Result<()> {
    write_lines(
        path,
        std::iter::once(column.to_string()).chain(v.iter().map(|&x| format_real(x))),
    )
}

pub fn save_mask(path: &Path, names: &[String], mask: &Mask) -> Result<()> {
    let rows = (0..mask.nrows()).map(|k| {
        (0..mask.ncols())
            .map(|i| if mask[(k, i)] { "1" } else { "0" })
            .collect::<Vec<_>>()
            .join(",")
    });
    write_lines(path, std::iter::once(names.join(",")).chain(rows))
}

pub fn load_mask(path: &Path) -> Result<Mask> {
    let (header, rows) = read_raw_table(path)?;
    let n = rows.len();
    let p = header.len();
    let mut mask = Mask::from_element(n, p, false);
    for (k, row) in rows.iter().enumerate() {
        for (i, cell) in row.iter().enumerate() {
            mask[(k, i)] = match cell.trim() {
                "1" => true,
                "0" => false,
                other => {
                    return Err(Error::Parse {
                        row: k + 1,
                        message: format!("mask cell {other:?} is not 0 or 1"),
                    })
                }
            };
        }
    }
    Ok(mask)
}

/// A value in a [`Record`] field.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Real(f64),
    Bool(bool),
    Text(String),
    Missing,
}

impl Value {
    fn render(&self) -> String {
        match self {
            Value::Int(v) => v.to_string(),
            Value::Real(v) if v.is_finite() => format_real(*v),
            Value::Real(_) | Value::Missing => MISSING_TOKEN.to_string(),
            Value::Bool(b) => b.to_string(),
            Value::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Real(v)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as i64)
    }
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::Int(v as i64)
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<i32> for Value {
    fn from(v: i32) -> Self {
        Value::Int(v.into())
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

impl<T: Into<Value>> From<Option<T>> for Value {
    fn from(v: Option<T>) -> Self {
        v.map_or(Value::Missing, Into::into)
    }
}

/// An ordered list of named fields; one row of an output table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Record {
    fields: Vec<(String, Value)>,
}

impl Record {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: impl Into<Value>) -> Self {
        self.fields.push((name.to_string(), value.into()));
        self
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.fields.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }
}

/// Writes `rows` under the header `columns`. Every record must carry exactly
/// those fields in that order.
pub fn save_table(path: &Path, columns: &[&str], rows: &[Record]) -> Result<()> {
    save_table_with_comment(path, None, columns, rows)
}

/// Like [`save_table`], optionally preceded by a single `# ...` comment line.
pub fn save_table_with_comment(
    path: &Path,
    comment: Option<&str>,
    columns: &[&str],
    rows: &[Record],
) -> Result<()> {
    for (idx, r) in rows.iter().enumerate() {
        if !r.names().eq(columns.iter().copied()) {
            return Err(Error::Validation(format!(
                "record {idx} has fields [{}], expected [{}]",
                r.names().collect::<Vec<_>>().join(","),
                columns.join(",")
            )));
        }
    }
    let comment = comment.map(|c| format!("# {c}"));
    let body = rows.iter().map(|r| {
        r.fields
            .iter()
            .map(|(_, v)| v.render())
            .collect::<Vec<_>>()
            .join(",")
    });
    write_lines(
        path,
        comment
            .into_iter()
            .chain(std::iter::once(columns.join(",")))
            .chain(body),
    )
}
