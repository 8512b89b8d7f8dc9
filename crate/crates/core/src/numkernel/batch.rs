use alloc::vec::Vec;

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Labeled samples: one input row per label.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    inputs: Matrix,
    labels: Vec<usize>,
}

impl Batch {
    /// Requires at least one finite row and one label per row.
    pub fn new(inputs: Matrix, labels: Vec<usize>) -> Result<Self> {
        if inputs.rows() == 0 {
            return Err(Error::Contract(
                "batch must contain at least one sample".into(),
            ));
        }
        if labels.len() != inputs.rows() {
            return Err(Error::Shape {
                context: "Batch::new labels",
                expected: inputs.rows(),
                actual: labels.len(),
            });
        }
        if !inputs.is_finite() {
            return Err(Error::Numeric("Batch::new inputs"));
        }
        Ok(Self { inputs, labels })
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn into_parts(self) -> (Matrix, Vec<usize>) {
        (self.inputs, self.labels)
    }

    /// Rows at `indices`, in that order. Fails on an empty selection.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(self.inputs.select_rows(indices), labels)
    }

    /// Concatenates batches of equal input width.
    pub fn concat<'a, I>(batches: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Batch>,
    {
        let mut inputs = Matrix::zeros(0, 0);
        let mut labels = Vec::new();
        for b in batches {
            for (row, &label) in b.inputs.iter_rows().zip(&b.labels) {
                inputs.push_row(row)?;
                labels.push(label);
            }
        }
        Self::new(inputs, labels)
    }

    /// Same inputs with every label passed through `f`.
    pub fn map_labels(&self, f: impl Fn(usize) -> usize) -> Self {
        Self {
            inputs: self.inputs.clone(),
            labels: self.labels.iter().map(|&l| f(l)).collect(),
        }
    }
}
