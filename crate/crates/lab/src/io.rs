//! Dataset and weight files, plus the csv tables every experiment emits.

use std::fs;
use std::io::Write;
use std::path::Path;

use pcbias_core::{Dataset, DeepLinearNet, Matrix};

use crate::error::{LabError, Result};

const DATASET_MAGIC: &[u8; 4] = b"PCB1";
const NETWORK_MAGIC: &[u8; 4] = b"PCBN";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    RawF64,
}

impl Format {
    /// `.bin`/`.pcb` files are raw, everything else csv.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("pcb") => Self::RawF64,
            _ => Self::Csv,
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "csv" => Some(Self::Csv),
            "raw" | "raw-f64" => Some(Self::RawF64),
            _ => None,
        }
    }
}

/// Shortest decimal string that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn save_dataset(data: &Dataset, path: &Path, format: Format) -> Result<()> {
    let bytes = match format {
        Format::Csv => dataset_csv(data),
        Format::RawF64 => dataset_raw(data),
    };
    write_file(path, &bytes)
}

pub fn load_dataset(path: &Path, format: Format) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| LabError::io(path, e))?;
    match format {
        Format::Csv => parse_dataset_csv(path, &bytes),
        Format::RawF64 => parse_dataset_raw(path, &bytes),
    }
}

fn dataset_csv(data: &Dataset) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (1..=data.dim()).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    w.write_record(&header).expect("in-memory write");
    for (i, col) in data.x().column_iter().enumerate() {
        let mut row: Vec<String> = col.iter().map(|&v| fmt_f64(v)).collect();
        row.push(data.labels()[i].to_string());
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn parse_dataset_csv(path: &Path, bytes: &[u8]) -> Result<Dataset> {
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers().map_err(|e| LabError::parse(path, e.to_string()))?.clone();
    let q = header.len().checked_sub(1).filter(|_| header.iter().next_back() == Some("label"));
    let q = q.ok_or_else(|| LabError::parse(path, "header must end with a `label` column"))?;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(|e| LabError::parse(path, e.to_string()))?;
        let row = line + 2;
        if record.len() != q + 1 {
            return Err(LabError::parse(path, format!("line {row}: expected {} fields, found {}", q + 1, record.len())));
        }
        for field in record.iter().take(q) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| LabError::parse(path, format!("line {row}: `{field}` is not a number")))?;
            values.push(v);
        }
        let label: usize = record[q]
            .trim()
            .parse()
            .map_err(|_| LabError::parse(path, format!("line {row}: `{}` is not a class index", &record[q])))?;
        labels.push(label);
    }
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let x = Matrix::from_vec(q, labels.len(), values);
    Ok(Dataset::new(x, labels, classes)?)
}

fn dataset_raw(data: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * data.x().len() + 4 * data.len());
    out.extend_from_slice(DATASET_MAGIC);
    for v in [data.dim(), data.classes(), data.len()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in data.x().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &c in data.labels() {
        out.extend_from_slice(&(c as u32).to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, section: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| LabError::Truncated {
            path: self.path.to_path_buf(),
            section,
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, section: &'static str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, section)?.try_into().unwrap()) as usize)
    }

    fn f64s(&mut self, n: usize, section: &'static str) -> Result<Vec<f64>> {
        let raw = self.take(n.saturating_mul(8), section)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(LabError::parse(self.path, format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

fn parse_dataset_raw(path: &Path, bytes: &[u8]) -> Result<Dataset> {
    let mut c = Cursor { path, bytes, pos: 0 };
    if c.take(4, "magic")? != DATASET_MAGIC {
        return Err(LabError::parse(path, "not a raw-f64 dataset (bad magic)"));
    }
    let q = c.u32("header")?;
    let classes = c.u32("header")?;
    let n = c.u32("header")?;
    let values = c.f64s(q * n, "data matrix")?;
    let labels = (0..n).map(|_| c.u32("labels")).collect::<Result<Vec<_>>>()?;
    c.finish()?;
    Ok(Dataset::new(Matrix::from_vec(q, n, values), labels, classes)?)
}

/// Weights as `PCBN`, u32 layer count, then per layer u32 rows, u32 cols and
/// the entries row-major, all little-endian.
pub fn save_network(net: &DeepLinearNet, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(NETWORK_MAGIC);
    out.extend_from_slice(&(net.depth() as u32).to_le_bytes());
    for w in net.layers() {
        out.extend_from_slice(&(w.nrows() as u32).to_le_bytes());
        out.extend_from_slice(&(w.ncols() as u32).to_le_bytes());
        for row in w.row_iter() {
            for v in row.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    write_file(path, &out)
}

pub fn load_network(path: &Path) -> Result<DeepLinearNet> {
    let bytes = fs::read(path).map_err(|e| LabError::io(path, e))?;
    let mut c = Cursor { path, bytes: &bytes, pos: 0 };
    if c.take(4, "magic")? != NETWORK_MAGIC {
        return Err(LabError::parse(path, "not a network file (bad magic)"));
    }
    let depth = c.u32("header")?;
    let mut layers = Vec::with_capacity(depth);
    for _ in 0..depth {
        let rows = c.u32("layer shape")?;
        let cols = c.u32("layer shape")?;
        let values = c.f64s(rows * cols, "layer weights")?;
        layers.push(Matrix::from_row_slice(rows, cols, &values));
    }
    c.finish()?;
    Ok(DeepLinearNet::from_layers(layers)?)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => fmt_f64(*v),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Float(v) => Some(*v),
            _ => None,
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Float)
    }
}

impl From<Option<usize>> for Cell {
    fn from(v: Option<usize>) -> Self {
        v.map_or(Cell::Empty, |v| Cell::Int(v as i64))
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// A named csv table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_header(name: &str, header: Vec<String>) -> Self {
        Self {
            name: name.to_string(),
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width in table {}", self.name);
        self.rows.push(row);
    }

    /// Values of a numeric column, `None` for empty or text cells.
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let idx = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[idx].as_f64()).collect())
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

/// Numeric csv with a header row; empty fields read as NaN.
pub fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let bytes = fs::read(path).map_err(|e| LabError::io(path, e))?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| LabError::parse(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(|e| LabError::parse(path, e.to_string()))?;
        let row = record
            .iter()
            .map(|f| {
                if f.is_empty() {
                    Ok(f64::NAN)
                } else {
                    f.parse::<f64>()
                        .map_err(|_| LabError::parse(path, format!("line {}: `{f}` is not a number", line + 2)))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| LabError::io(path, e))?;
    f.write_all(bytes).map_err(|e| LabError::io(path, e))
}
