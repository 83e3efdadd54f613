use crate::error::{contract, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Regression,
    Classification,
}

/// `n` observations `(xᵢ, yᵢ)` with `xᵢ ∈ ℝᵈ` stored as one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    xs: Vec<f64>,
    dim: usize,
    ys: Vec<f64>,
    task: Task,
}

impl Dataset {
    pub fn new(xs: Vec<f64>, dim: usize, ys: Vec<f64>, task: Task) -> Result<Self> {
        if dim == 0 {
            return Err(contract("dataset dimension must be >= 1"));
        }
        if ys.is_empty() {
            return Err(contract("dataset must contain at least one observation"));
        }
        if xs.len() != ys.len() * dim {
            return Err(contract(format!(
                "{} covariate values do not match {} labels of dimension {dim}",
                xs.len(),
                ys.len()
            )));
        }
        if let Some(i) = xs.iter().position(|v| !v.is_finite()) {
            return Err(contract(format!("non-finite covariate in observation {}", i / dim)));
        }
        if let Some(i) = ys.iter().position(|v| !v.is_finite()) {
            return Err(contract(format!("non-finite label in observation {i}")));
        }
        if task == Task::Classification {
            if let Some(i) = ys.iter().position(|&y| y != 1.0 && y != -1.0) {
                return Err(contract(format!(
                    "classification label {} in observation {i} is not -1 or +1",
                    ys[i]
                )));
            }
        }
        Ok(Self { xs, dim, ys, task })
    }

    pub fn n(&self) -> usize {
        self.ys.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn y(&self, i: usize) -> f64 {
        self.ys[i]
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    /// Observations at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut xs = Vec::with_capacity(indices.len() * self.dim);
        let mut ys = Vec::with_capacity(indices.len());
        for &i in indices {
            xs.extend_from_slice(self.x(i));
            ys.push(self.ys[i]);
        }
        Dataset { xs, dim: self.dim, ys, task: self.task }
    }
}
