use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub const SYMMETRY_TOL: f64 = 1e-12;
pub const MIN_EIGENVALUE: f64 = 1e-10;

/// `x -> A x + b` with `A` symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl AffineMap {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let d = b.len();
        if d == 0 || a.nrows() != d || a.ncols() != d {
            return Err(Error::Dimension(format!(
                "matrix {}x{} with offset of length {d}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.iter().chain(b.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Invariant("non-finite affine coefficients".into()));
        }
        let asym = (&a - a.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(Error::Invariant(format!("matrix is not symmetric (asymmetry {asym:e})")));
        }
        let sym = (&a + a.transpose()) * 0.5;
        let min_eig = SymmetricEigen::new(sym.clone()).eigenvalues.min();
        if min_eig <= MIN_EIGENVALUE {
            return Err(Error::Invariant(format!(
                "matrix is not positive definite (smallest eigenvalue {min_eig:e})"
            )));
        }
        Ok(Self { a: sym, b })
    }

    /// Row-major coefficients.
    pub fn from_slices(a: &[f64], b: &[f64]) -> Result<Self> {
        let d = b.len();
        if a.len() != d * d {
            return Err(Error::Dimension(format!("{} matrix entries for dimension {d}", a.len())));
        }
        Self::new(DMatrix::from_row_slice(d, d, a), DVector::from_column_slice(b))
    }

    pub fn identity(d: usize) -> Self {
        Self { a: DMatrix::identity(d, d), b: DVector::zeros(d) }
    }

    pub fn shift(b: &[f64]) -> Self {
        let d = b.len();
        Self { a: DMatrix::identity(d, d), b: DVector::from_column_slice(b) }
    }

    pub fn scaling(s: f64, b: &[f64]) -> Result<Self> {
        let d = b.len();
        Self::new(DMatrix::identity(d, d) * s, DVector::from_column_slice(b))
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|i| (0..d).map(|j| self.a[(i, j)] * x[j]).sum::<f64>() + self.b[i])
            .collect()
    }

    pub fn determinant(&self) -> f64 {
        self.a.determinant()
    }

    pub fn inverse(&self) -> AffineMap {
        let inv = self
            .a
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .unwrap_or_else(|| self.a.clone().try_inverse().expect("positive definite"));
        let inv = (&inv + inv.transpose()) * 0.5;
        let b = -(&inv * &self.b);
        AffineMap { a: inv, b }
    }

    /// `outer ∘ self`. Fails when the product of the linear parts is not symmetric.
    pub fn then(&self, outer: &AffineMap) -> Result<AffineMap> {
        if outer.dim() != self.dim() {
            return Err(Error::Dimension("composing maps of different dimension".into()));
        }
        let a = &outer.a * &self.a;
        let b = &outer.a * &self.b + &outer.b;
        AffineMap::new(a, b)
    }

    /// Diagonal with positive entries: such maps send grids to grids exactly.
    pub fn diagonal_positive(&self) -> Option<Vec<f64>> {
        let d = self.dim();
        for i in 0..d {
            for j in 0..d {
                if i != j && self.a[(i, j)] != 0.0 {
                    return None;
                }
            }
        }
        Some((0..d).map(|i| self.a[(i, i)]).collect())
    }

    /// Spectral norm of `A`.
    pub fn operator_norm(&self) -> f64 {
        spectral_norm(&self.a)
    }
}

pub(crate) fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    let asym = (m - m.transpose()).amax();
    if asym == 0.0 {
        SymmetricEigen::new(sym).eigenvalues.amax()
    } else {
        m.clone().svd(false, false).singular_values.max()
    }
}
