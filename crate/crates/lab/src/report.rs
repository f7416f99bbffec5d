//! Ensemble traces: weights in principal coordinates per snapshot, and the
//! cross-member spread and distance-to-optimum tables derived from them.

use std::path::Path;

use pcbias_core::metrics::spread_table;
use pcbias_core::Matrix;

use crate::error::{LabError, Result};
use crate::io::{read_numeric_csv, Cell, Table};
use crate::plot::LinePlot;

/// One member's weights (`K × q`, principal coordinates) per snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub epochs: Vec<usize>,
    pub weights: Vec<Matrix>,
}

impl Trace {
    pub fn dims(&self) -> (usize, usize) {
        self.weights.first().map_or((0, 0), |w| (w.nrows(), w.ncols()))
    }

    /// Columns `epoch, output, pc1, …, pcq`, one row per output unit.
    pub fn to_table(&self, name: &str) -> Table {
        let (_, q) = self.dims();
        let mut t = Table::with_header(name, trace_header(q));
        for (&e, w) in self.epochs.iter().zip(&self.weights) {
            for (k, row) in w.row_iter().enumerate() {
                let mut cells: Vec<Cell> = vec![e.into(), k.into()];
                cells.extend(row.iter().map(|&v| Cell::Float(v)));
                t.push(cells);
            }
        }
        t
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, rows) = read_numeric_csv(path)?;
        if header.len() < 3 || header[0] != "epoch" || header[1] != "output" {
            return Err(LabError::parse(path, "trace header must start with `epoch,output`"));
        }
        let q = header.len() - 2;
        let mut epochs: Vec<usize> = Vec::new();
        let mut blocks: Vec<Vec<Vec<f64>>> = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            let epoch = row[0] as usize;
            let output = row[1] as usize;
            if epochs.last() != Some(&epoch) {
                epochs.push(epoch);
                blocks.push(Vec::new());
            }
            let block = blocks.last_mut().unwrap();
            if output != block.len() {
                return Err(LabError::parse(path, format!("line {}: output rows out of order", i + 2)));
            }
            block.push(row[2..].to_vec());
        }
        let k = blocks.first().map_or(0, Vec::len);
        let mut weights = Vec::with_capacity(blocks.len());
        for (e, block) in epochs.iter().zip(&blocks) {
            if block.len() != k {
                return Err(LabError::parse(path, format!("epoch {e}: expected {k} output rows, found {}", block.len())));
            }
            let flat: Vec<f64> = block.iter().flatten().copied().collect();
            weights.push(Matrix::from_row_slice(k, q, &flat));
        }
        Ok(Trace { epochs, weights })
    }
}

fn trace_header(q: usize) -> Vec<String> {
    let mut h = vec!["epoch".to_string(), "output".to_string()];
    h.extend((1..=q).map(|j| format!("pc{j}")));
    h
}

fn epoch_header(q: usize) -> Vec<String> {
    let mut h = vec!["epoch".to_string()];
    h.extend((1..=q).map(|j| format!("pc{j}")));
    h
}

/// The optimum as a one-snapshot trace.
pub fn optimum_table(wopt: &Matrix) -> Table {
    Trace {
        epochs: vec![0],
        weights: vec![wopt.clone()],
    }
    .to_table("optimum")
}

pub struct Merged {
    pub epochs: Vec<usize>,
    /// `[snapshot][component]` cross-member spread.
    pub spread: Vec<Vec<f64>>,
    /// `[snapshot][component]` mean over members of `‖w_j − w_opt,j‖`.
    pub distance: Option<Vec<Vec<f64>>>,
}

pub fn merge(traces: &[Trace], optimum: Option<&Matrix>) -> Result<Merged> {
    let first = traces.first().ok_or_else(|| LabError::Invalid("no traces to merge".into()))?;
    let dims = first.dims();
    for (i, t) in traces.iter().enumerate() {
        if t.epochs != first.epochs || t.weights.iter().any(|w| (w.nrows(), w.ncols()) != dims) {
            return Err(LabError::Invalid(format!("trace {i} does not match the shape of trace 0")));
        }
    }
    if let Some(w) = optimum {
        if (w.nrows(), w.ncols()) != dims {
            return Err(LabError::Invalid("optimum does not match the trace shape".into()));
        }
    }
    let weights: Vec<Vec<Matrix>> = traces.iter().map(|t| t.weights.clone()).collect();
    let spread = spread_table(&weights)?;
    let distance = optimum.map(|wopt| {
        (0..first.epochs.len())
            .map(|s| {
                (0..dims.1)
                    .map(|j| {
                        traces
                            .iter()
                            .map(|t| (t.weights[s].column(j) - wopt.column(j)).norm())
                            .sum::<f64>()
                            / traces.len() as f64
                    })
                    .collect()
            })
            .collect()
    });
    Ok(Merged {
        epochs: first.epochs.clone(),
        spread,
        distance,
    })
}

impl Merged {
    fn table(&self, name: &str, values: &[Vec<f64>]) -> Table {
        let q = values.first().map_or(0, Vec::len);
        let mut t = Table::with_header(name, epoch_header(q));
        for (&e, row) in self.epochs.iter().zip(values) {
            let mut cells: Vec<Cell> = vec![e.into()];
            cells.extend(row.iter().map(|&v| Cell::Float(v)));
            t.push(cells);
        }
        t
    }

    pub fn tables(&self) -> Vec<Table> {
        let mut out = vec![self.table("spread", &self.spread)];
        if let Some(d) = &self.distance {
            out.push(self.table("distance", d));
        }
        out
    }

    /// Spread (and distance) curves of a few components spaced over the spectrum.
    pub fn plots(&self) -> Vec<LinePlot> {
        let q = self.spread.first().map_or(0, Vec::len);
        let picks: Vec<usize> = [0, 1, 3, 7, 15, 31, 63].into_iter().filter(|&j| j < q).collect();
        let curve = |values: &[Vec<f64>], name: &str, title: &str| {
            let mut p = LinePlot::new(name, title, "epoch", "value").log_y();
            for &j in &picks {
                p.add(
                    format!("pc{}", j + 1),
                    self.epochs.iter().zip(values).map(|(&e, row)| (e as f64, row[j])).collect(),
                );
            }
            p
        };
        let mut out = vec![curve(&self.spread, "spread", "Cross-member spread per principal component")];
        if let Some(d) = &self.distance {
            out.push(curve(d, "distance", "Mean distance to the optimum per principal component"));
        }
        out
    }
}
