//! Minimal vector-space plumbing shared by the operators and the iterative
//! solvers.

use crate::error::Result;
use crate::field::ScalarField;

/// A finite-dimensional real vector backed by a flat slice.
pub trait Vector: Clone {
    fn as_slice(&self) -> &[f64];
    fn as_mut_slice(&mut self) -> &mut [f64];

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.as_mut_slice().fill(0.0);
        z
    }

    fn scale(&mut self, a: f64) {
        self.as_mut_slice().iter_mut().for_each(|v| *v *= a);
    }

    /// `self += a * x`
    fn axpy(&mut self, a: f64, x: &Self) {
        self.as_mut_slice()
            .iter_mut()
            .zip(x.as_slice())
            .for_each(|(s, v)| *s += a * v);
    }

    fn all_finite(&self) -> bool {
        self.as_slice().iter().all(|v| v.is_finite())
    }
}

impl Vector for Vec<f64> {
    fn as_slice(&self) -> &[f64] {
        self
    }

    fn as_mut_slice(&mut self) -> &mut [f64] {
        self
    }
}

impl Vector for ScalarField {
    fn as_slice(&self) -> &[f64] {
        ScalarField::as_slice(self)
    }

    fn as_mut_slice(&mut self) -> &mut [f64] {
        ScalarField::as_mut_slice(self)
    }
}

/// A bounded linear map between two real Hilbert spaces, with its adjoint
/// taken with respect to the spaces' own inner products.
pub trait LinearOperator {
    type Domain: Vector;
    type Range: Vector;

    fn apply(&self, x: &Self::Domain) -> Result<Self::Range>;
    fn apply_adjoint(&self, y: &Self::Range) -> Result<Self::Domain>;
    fn domain_inner(&self, a: &Self::Domain, b: &Self::Domain) -> f64;
    fn range_inner(&self, a: &Self::Range, b: &Self::Range) -> f64;

    fn domain_norm_sq(&self, a: &Self::Domain) -> f64 {
        self.domain_inner(a, a)
    }

    fn range_norm_sq(&self, a: &Self::Range) -> f64 {
        self.range_inner(a, a)
    }
}

/// Diagonal operator on `R^n` with Euclidean inner products.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagonal(pub Vec<f64>);

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LinearOperator for Diagonal {
    type Domain = Vec<f64>;
    type Range = Vec<f64>;

    fn apply(&self, x: &Vec<f64>) -> Result<Vec<f64>> {
        Ok(self.0.iter().zip(x).map(|(d, v)| d * v).collect())
    }

    fn apply_adjoint(&self, y: &Vec<f64>) -> Result<Vec<f64>> {
        self.apply(y)
    }

    fn domain_inner(&self, a: &Vec<f64>, b: &Vec<f64>) -> f64 {
        dot(a, b)
    }

    fn range_inner(&self, a: &Vec<f64>, b: &Vec<f64>) -> f64 {
        dot(a, b)
    }
}
