//! Real-valued sample arrays on Cartesian grids.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// A row-major real sample array with an explicit shape and spatial step.
///
/// Row index `i1` runs along the first coordinate axis and column index `i2`
/// along the second, so `field[(i1, i2)]` is the sample at `x_(i1, i2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    rows: usize,
    cols: usize,
    h: f64,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(rows: usize, cols: usize, h: f64) -> Self {
        Self::filled(rows, cols, h, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, h: f64, value: f64) -> Self {
        Self {
            rows,
            cols,
            h,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, h: f64, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                format!("{} samples ({rows}x{cols})", rows * cols),
                format!("{} samples", data.len()),
            ));
        }
        Ok(Self {
            rows,
            cols,
            h,
            data,
        })
    }

    /// Samples `f(i1, i2)` at every node.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        h: f64,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i1 in 0..rows {
            for i2 in 0..cols {
                data.push(f(i1, i2));
            }
        }
        Self {
            rows,
            cols,
            h,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Physical grid spacing.
    pub fn step(&self) -> f64 {
        self.h
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i1: usize, i2: usize) -> f64 {
        self.data[i1 * self.cols + i2]
    }

    pub fn set(&mut self, i1: usize, i2: usize, value: f64) {
        self.data[i1 * self.cols + i2] = value;
    }

    pub fn ensure_shape(&self, rows: usize, cols: usize) -> Result<()> {
        if self.shape() != (rows, cols) {
            return Err(Error::shape(
                format!("{rows}x{cols}"),
                format!("{}x{}", self.rows, self.cols),
            ));
        }
        Ok(())
    }

    pub fn ensure_same_shape(&self, other: &ScalarField) -> Result<()> {
        other.ensure_shape(self.rows, self.cols)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Plain Euclidean norm of the samples (no quadrature weight).
    pub fn l2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|v| *v *= a);
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &ScalarField) {
        debug_assert_eq!(self.shape(), x.shape());
        self.data
            .iter_mut()
            .zip(&x.data)
            .for_each(|(s, v)| *s += a * v);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            rows: self.rows,
            cols: self.cols,
            h: self.h,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        self.ensure_same_shape(other)?;
        Ok(ScalarField {
            rows: self.rows,
            cols: self.cols,
            h: self.h,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Index reflection `(i1, i2) -> (rows-1-i1, cols-1-i2)`.
    pub fn reflected(&self) -> ScalarField {
        let mut data = self.data.clone();
        data.reverse();
        ScalarField {
            rows: self.rows,
            cols: self.cols,
            h: self.h,
            data,
        }
    }
}

impl Index<(usize, usize)> for ScalarField {
    type Output = f64;

    fn index(&self, (i1, i2): (usize, usize)) -> &f64 {
        &self.data[i1 * self.cols + i2]
    }
}

impl IndexMut<(usize, usize)> for ScalarField {
    fn index_mut(&mut self, (i1, i2): (usize, usize)) -> &mut f64 {
        &mut self.data[i1 * self.cols + i2]
    }
}

/// Relative Euclidean distance `|a - b| / |b|`, with `|b| = 0` giving `|a - b|`.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}
