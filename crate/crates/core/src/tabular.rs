//! CSV datasets typed by a grammar-derived schema: loading, cleaning,
//! categorical encoding, seeded splitting and joint min-max scaling.

use std::collections::HashSet;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::constraints::RowEncoder;
use crate::grammar::{ColumnKind, RowLayout, RowRecord, Value};
use crate::rng;

pub const DEFAULT_MISSING_MARKERS: [&str; 3] = ["", "?", "NA"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TabularError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("header mismatch: expected [{expected}], found [{found}]")]
    HeaderMismatch { expected: String, found: String },
    #[error("line {line}: expected {expected} cells, found {found}")]
    Arity { line: usize, expected: usize, found: usize },
    #[error("unknown category {token:?} in column {column}")]
    UnknownCategory { column: String, token: String },
    #[error("dataset too small: {0} rows")]
    TooSmall(usize),
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("dataset has unencoded or missing cells; run preprocess first")]
    NotEncoded,
    #[error("schemas differ")]
    SchemaMismatch,
    #[error("train fraction {0} outside (0, 1)")]
    BadFraction(f64),
    #[error("column {0} is not categorical")]
    NotCategorical(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

/// Column names and kinds, with categorical vocabularies taken from the
/// grammar so both datasets share one encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub columns: Vec<Column>,
    pub target: Option<usize>,
    pub missing_markers: Vec<String>,
}

impl Schema {
    pub fn from_layout(layout: &RowLayout) -> Self {
        let columns = layout
            .names
            .iter()
            .zip(&layout.kinds)
            .map(|(name, kind)| Column { name: name.clone(), kind: kind.clone() })
            .collect();
        Schema {
            columns,
            target: None,
            missing_markers: DEFAULT_MISSING_MARKERS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn with_target(mut self, name: &str) -> Result<Self, TabularError> {
        self.target = Some(self.column(name).ok_or_else(|| TabularError::UnknownColumn(name.to_string()))?);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    /// Vocabulary index of `token` in column `col`.
    pub fn encode(&self, col: usize, token: &str) -> Option<usize> {
        match &self.columns[col].kind {
            ColumnKind::Categorical(vocab) => vocab.iter().position(|v| v == token),
            ColumnKind::Numeric => None,
        }
    }

    pub fn decode(&self, col: usize, code: usize) -> Option<&str> {
        match &self.columns[col].kind {
            ColumnKind::Categorical(vocab) => vocab.get(code).map(String::as_str),
            ColumnKind::Numeric => None,
        }
    }

    /// Converts a grammar row into encoded cells.
    pub fn cells_of(&self, row: &RowRecord) -> Result<Vec<Cell>, TabularError> {
        if row.values.len() != self.len() {
            return Err(TabularError::SchemaMismatch);
        }
        row.values
            .iter()
            .enumerate()
            .map(|(i, v)| match v {
                Value::Number(x) => Ok(Cell::Num(*x)),
                Value::Category(t) => self.encode(i, t).map(Cell::Code).ok_or_else(|| {
                    TabularError::UnknownCategory { column: self.columns[i].name.clone(), token: t.clone() }
                }),
            })
            .collect()
    }
}

impl RowEncoder for Schema {
    fn encode_row(&self, row: &RowRecord) -> Result<Vec<f64>, String> {
        let cells = self.cells_of(row).map_err(|e| e.to_string())?;
        Ok(cells.iter().map(|c| c.as_f64().expect("encoded cell")).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    /// Categorical token not yet encoded.
    Cat(String),
    /// Vocabulary index of a categorical token.
    Code(usize),
    Missing,
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            Cell::Code(c) => Some(*c as f64),
            _ => None,
        }
    }

    fn key(&self) -> (u8, u64, &str) {
        match self {
            // adding 0.0 folds -0.0 into 0.0
            Cell::Num(v) => (0, (v + 0.0).to_bits(), ""),
            Cell::Cat(s) => (1, 0, s),
            Cell::Code(c) => (2, *c as u64, ""),
            Cell::Missing => (3, 0, ""),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Original,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: Arc<Schema>,
    pub rows: Vec<Vec<Cell>>,
    pub provenance: Provenance,
}

/// Exact-equality key for a row; equal keys mean equal rows.
pub fn row_key(row: &[Cell]) -> Vec<(u8, u64, &str)> {
    row.iter().map(Cell::key).collect()
}

pub type RowKey = Vec<(u8, u64, String)>;

pub fn owned_row_key(row: &[Cell]) -> RowKey {
    row.iter().map(Cell::key).map(|(a, b, s)| (a, b, s.to_string())).collect()
}

impl Dataset {
    pub fn new(schema: Arc<Schema>, rows: Vec<Vec<Cell>>, provenance: Provenance) -> Self {
        Dataset { schema, rows, provenance }
    }

    pub fn from_records(
        schema: Arc<Schema>,
        records: &[RowRecord],
        provenance: Provenance,
    ) -> Result<Self, TabularError> {
        let rows = records.iter().map(|r| schema.cells_of(r)).collect::<Result<_, _>>()?;
        Ok(Dataset { schema, rows, provenance })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: Arc::clone(&self.schema),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            provenance: self.provenance,
        }
    }

    /// All cells as numbers; fails unless the dataset is fully encoded.
    pub fn matrix(&self) -> Result<Vec<Vec<f64>>, TabularError> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|c| c.as_f64().ok_or(TabularError::NotEncoded)).collect())
            .collect()
    }

    /// Features (every column but the target) and target values.
    pub fn xy(&self) -> Result<(Vec<Vec<f64>>, Vec<f64>), TabularError> {
        let t = self.schema.target.ok_or_else(|| TabularError::UnknownColumn("<target>".into()))?;
        let m = self.matrix()?;
        let y = m.iter().map(|r| r[t]).collect();
        let x = m
            .into_iter()
            .map(|mut r| {
                r.remove(t);
                r
            })
            .collect();
        Ok((x, y))
    }

    /// Renders the dataset as CSV with a header, decoding categorical codes.
    pub fn to_csv(&self) -> String {
        let mut out = self.schema.names().join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(i, c)| match c {
                    Cell::Num(v) => v.to_string(),
                    Cell::Cat(s) => s.clone(),
                    Cell::Code(k) => self.schema.decode(i, *k).unwrap_or("").to_string(),
                    Cell::Missing => String::new(),
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn io_err(path: &Path, e: impl ToString) -> TabularError {
    TabularError::Io { path: path.display().to_string(), message: e.to_string() }
}

/// Reads a headered CSV. Cells are trimmed; missing markers and
/// unparseable numbers become `Cell::Missing`.
pub fn load_csv(path: &Path, schema: Arc<Schema>) -> Result<Dataset, TabularError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_csv(&text, schema).map_err(|e| match e {
        TabularError::Io { message, .. } => io_err(path, message),
        other => other,
    })
}

pub fn parse_csv(text: &str, schema: Arc<Schema>) -> Result<Dataset, TabularError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let expected = schema.names().join(",");
    let header = match records.next() {
        Some(r) => r.map_err(|e| TabularError::Io { path: String::new(), message: e.to_string() })?,
        None => return Err(TabularError::HeaderMismatch { expected, found: String::new() }),
    };
    let found: Vec<&str> = header.iter().collect();
    if found != schema.names() {
        return Err(TabularError::HeaderMismatch { expected, found: found.join(",") });
    }
    let mut rows = Vec::new();
    for record in records {
        let record = record.map_err(|e| TabularError::Io { path: String::new(), message: e.to_string() })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() != schema.len() {
            return Err(TabularError::Arity { line, expected: schema.len(), found: record.len() });
        }
        let row = record
            .iter()
            .zip(&schema.columns)
            .map(|(raw, col)| {
                if schema.missing_markers.iter().any(|m| m == raw) {
                    return Cell::Missing;
                }
                match col.kind {
                    ColumnKind::Numeric => {
                        raw.parse::<f64>().ok().filter(|v| v.is_finite()).map_or(Cell::Missing, Cell::Num)
                    }
                    ColumnKind::Categorical(_) => Cell::Cat(raw.to_string()),
                }
            })
            .collect();
        rows.push(row);
    }
    Ok(Dataset { schema, rows, provenance: Provenance::Original })
}

/// Drops rows with missing cells, encodes categorical tokens by their
/// vocabulary index and removes duplicates (first occurrence wins).
pub fn preprocess(data: &Dataset) -> Result<Dataset, TabularError> {
    let schema = &data.schema;
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for row in &data.rows {
        if row.contains(&Cell::Missing) {
            continue;
        }
        let encoded: Vec<Cell> = row
            .iter()
            .enumerate()
            .map(|(i, c)| match c {
                Cell::Cat(t) => schema.encode(i, t).map(Cell::Code).ok_or_else(|| TabularError::UnknownCategory {
                    column: schema.columns[i].name.clone(),
                    token: t.clone(),
                }),
                other => Ok(other.clone()),
            })
            .collect::<Result<_, _>>()?;
        if seen.insert(owned_row_key(&encoded)) {
            rows.push(encoded);
        }
    }
    Ok(Dataset { schema: Arc::clone(schema), rows, provenance: data.provenance })
}

/// Seeded shuffle of `0..n` cut into a train prefix of `floor(n * f)` and
/// the remainder, keeping both sides non-empty.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), TabularError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(TabularError::BadFraction(train_fraction));
    }
    if n < 2 {
        return Err(TabularError::TooSmall(n));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::seeded(seed));
    let k = ((n as f64 * train_fraction + 1e-9).floor() as usize).clamp(1, n - 1);
    let test = idx.split_off(k);
    Ok((idx, test))
}

pub fn split(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), TabularError> {
    let (train, test) = split_indices(data.len(), train_fraction, seed)?;
    Ok((data.subset(&train), data.subset(&test)))
}

/// Min-max scales every column of both datasets to `[0, 1]` using the
/// bounds of their union. Constant columns become 0.
pub fn normalize(a: &Dataset, b: &Dataset) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), TabularError> {
    if a.schema.columns != b.schema.columns {
        return Err(TabularError::SchemaMismatch);
    }
    let (ma, mb) = (a.matrix()?, b.matrix()?);
    Ok(normalize_matrices(&ma, &mb, a.schema.len()))
}

pub fn normalize_matrices(a: &[Vec<f64>], b: &[Vec<f64>], width: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut lo = vec![f64::INFINITY; width];
    let mut hi = vec![f64::NEG_INFINITY; width];
    for row in a.iter().chain(b) {
        for (j, &v) in row.iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    let scale = |m: &[Vec<f64>]| -> Vec<Vec<f64>> {
        m.iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(j, &v)| if hi[j] > lo[j] { ((v - lo[j]) / (hi[j] - lo[j])).clamp(0.0, 1.0) } else { 0.0 })
                    .collect()
            })
            .collect()
    };
    (scale(a), scale(b))
}

/// Writes `contents` to `path` via a temporary file and rename, so readers
/// never observe a half-written file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), TabularError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    f.write_all(contents).and_then(|_| f.sync_all()).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

pub fn write_csv(path: &Path, data: &Dataset) -> Result<(), TabularError> {
    write_atomic(path, data.to_csv().as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_spec;

    fn schema() -> Arc<Schema> {
        let spec = parse_spec(include_str!("../../../specs/example.fan")).unwrap();
        Arc::new(Schema::from_layout(&RowLayout::from_grammar(&spec.grammar).unwrap()))
    }

    #[test]
    fn loads_example_rows() {
        let d = parse_csv("age, job, income\n29, librarian, 9427\n78, president, 19300\n", schema()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.rows[0], [Cell::Num(29.0), Cell::Cat("librarian".into()), Cell::Num(9427.0)]);
        assert_eq!(d.rows[1].len(), 3);
    }

    #[test]
    fn header_checks() {
        assert!(matches!(parse_csv("", schema()), Err(TabularError::HeaderMismatch { .. })));
        assert!(matches!(parse_csv("age,income,job\n", schema()), Err(TabularError::HeaderMismatch { .. })));
        assert!(matches!(parse_csv("age,job,income\n1,president\n", schema()), Err(TabularError::Arity { .. })));
    }

    #[test]
    fn bad_number_is_missing() {
        let d = parse_csv("age,job,income\nabc,librarian,1\n30,?,2\n", schema()).unwrap();
        assert_eq!(d.rows[0][0], Cell::Missing);
        assert_eq!(d.rows[1][1], Cell::Missing);
        assert!(preprocess(&d).unwrap().is_empty());
    }

    #[test]
    fn preprocess_examples() {
        let d = parse_csv("age,job,income\n29,librarian,1\n29,librarian,1\n40,president,2\n41,president,NA\n", schema())
            .unwrap();
        let p = preprocess(&d).unwrap();
        assert_eq!(p.rows, [
            vec![Cell::Num(29.0), Cell::Code(0), Cell::Num(1.0)],
            vec![Cell::Num(40.0), Cell::Code(2), Cell::Num(2.0)]
        ]);
        assert_eq!(preprocess(&p).unwrap(), p);
        assert_eq!(p.to_csv(), "age,job,income\n29,librarian,1\n40,president,2\n");
        let bad = parse_csv("age,job,income\n29,plumber,1\n", schema()).unwrap();
        assert_eq!(
            preprocess(&bad),
            Err(TabularError::UnknownCategory { column: "job".into(), token: "plumber".into() })
        );
    }

    #[test]
    fn split_sizes() {
        let (a, b) = split_indices(10, 0.7, 1).unwrap();
        assert_eq!((a.len(), b.len()), (7, 3));
        assert_eq!(split_indices(10, 0.7, 1).unwrap(), (a, b));
        assert_eq!(split_indices(1, 0.7, 1), Err(TabularError::TooSmall(1)));
        let (a, b) = split_indices(2, 0.7, 1).unwrap();
        assert_eq!((a.len(), b.len()), (1, 1));
    }

    #[test]
    fn normalize_examples() {
        let one = |v: &[f64]| v.iter().map(|&x| vec![x]).collect::<Vec<_>>();
        let (a, _) = normalize_matrices(&one(&[0.0, 5.0, 10.0]), &[], 1);
        assert_eq!(a, one(&[0.0, 0.5, 1.0]));
        let (a, _) = normalize_matrices(&one(&[7.0, 7.0]), &[], 1);
        assert_eq!(a, one(&[0.0, 0.0]));
        let (a, b) = normalize_matrices(&one(&[0.0, 10.0]), &one(&[20.0]), 1);
        assert_eq!((a, b), (one(&[0.0, 0.5]), one(&[1.0])));
    }

    #[test]
    fn atomic_write() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/x.csv");
        write_atomic(&p, b"hello").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "hello");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
