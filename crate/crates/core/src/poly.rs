//! Operator polynomials `poly(A) = sum_k c_k A^k` of a graphon.
//!
//! Finite-dimensional evaluation always takes the scaled coupling
//! `entries / n`, so that `eval(lambda)` on an operator eigenvalue matches
//! the eigenvalue of the matrix built by [`CoeffPoly::apply_matrix`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real coefficients, constant term first. Trailing zeros are dropped on
/// construction, but at least one coefficient is always kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CoeffPoly {
    coeffs: Vec<f64>,
}

impl CoeffPoly {
    pub fn new(coeffs: impl Into<Vec<f64>>) -> Result<Self> {
        let mut coeffs = coeffs.into();
        if coeffs.is_empty() {
            return Err(Error::invalid("polynomial", "needs at least one coefficient"));
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::invalid("polynomial", format!("coefficient {i} is not finite")));
        }
        while coeffs.len() > 1 && coeffs[coeffs.len() - 1] == 0.0 {
            coeffs.pop();
        }
        Ok(CoeffPoly { coeffs })
    }

    pub fn constant(c: f64) -> Self {
        CoeffPoly { coeffs: vec![c] }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// The constant term `c_0`, i.e. the action on the null space of the graphon.
    pub fn constant_term(&self) -> f64 {
        self.coeffs[0]
    }

    /// Horner evaluation at a scalar.
    pub fn eval(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
    }

    /// `sum_k c_k m^k` with `m^0 = I`, by Horner's scheme on matrices.
    pub fn apply_matrix(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if !m.is_square() {
            return Err(Error::Shape {
                context: "apply_poly_matrix",
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let n = m.nrows();
        let identity = DMatrix::<f64>::identity(n, n);
        let mut acc = DMatrix::<f64>::zeros(n, n);
        for &c in self.coeffs.iter().rev() {
            acc = &acc * m + &identity * c;
        }
        // Products of a symmetric matrix with itself drift from symmetry by rounding only.
        let sym = (&acc + acc.transpose()) * 0.5;
        Ok(sym)
    }
}

impl TryFrom<Vec<f64>> for CoeffPoly {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        CoeffPoly::new(v)
    }
}

impl From<CoeffPoly> for Vec<f64> {
    fn from(p: CoeffPoly) -> Self {
        p.coeffs
    }
}
