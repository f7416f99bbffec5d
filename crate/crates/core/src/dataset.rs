//! Labelled data: a `q × n` matrix with one example per column and a class
//! index per example.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{ensure_dim, invalid, Result};
use crate::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Matrix,
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    /// Builds a dataset, checking that every label is a valid class index.
    pub fn new(x: Matrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        ensure_dim("dataset labels", x.ncols(), labels.len())?;
        if let Some(&bad) = labels.iter().find(|&&c| c >= classes) {
            return Err(invalid(alloc::format!(
                "label {bad} is not a valid class index for {classes} classes"
            )));
        }
        Ok(Self { x, labels, classes })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Input dimension `q`.
    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    /// Number of examples `n`.
    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The `K × n` one-hot label matrix `Y`.
    pub fn one_hot(&self) -> Matrix {
        let mut y = Matrix::zeros(self.classes, self.len());
        for (i, &c) in self.labels.iter().enumerate() {
            y[(c, i)] = 1.0;
        }
        y
    }

    /// Binary labels encoded as ±1 (class 1 ↦ +1, class 0 ↦ −1).
    pub fn signed_labels(&self) -> Result<Vec<f64>> {
        if self.classes != 2 {
            return Err(invalid("signed labels need exactly two classes"));
        }
        Ok(self
            .labels
            .iter()
            .map(|&c| if c == 1 { 1.0 } else { -1.0 })
            .collect())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &c in &self.labels {
            counts[c] += 1;
        }
        counts
    }

    /// Same labels, new inputs (e.g. after whitening or projection).
    pub fn with_x(&self, x: Matrix) -> Result<Self> {
        Self::new(x, self.labels.clone(), self.classes)
    }

    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        Self::new(self.x.clone(), labels, self.classes)
    }

    /// The examples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let x = self.x.select_columns(indices.iter());
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self {
            x,
            labels,
            classes: self.classes,
        }
    }

    pub fn moments(&self) -> Moments {
        Moments::of(self)
    }
}

/// Second moments of a dataset: everything the l2 gradient depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    /// `Σ_XX = X Xᵀ`, `q × q`.
    pub sxx: Matrix,
    /// `Σ_YX = Y Xᵀ`, `K × q`; row `k` is the sum of class-`k` examples.
    pub syx: Matrix,
    /// `‖Y‖²_F`.
    pub yy: f64,
}

impl Moments {
    pub fn of(data: &Dataset) -> Self {
        let y = data.one_hot();
        let sxx = data.x() * data.x().transpose();
        let syx = &y * data.x().transpose();
        Self {
            sxx,
            syx,
            yy: y.norm_squared(),
        }
    }
}
