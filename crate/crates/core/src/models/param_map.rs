use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::measures::AffineMap;

pub type MapFn = Arc<dyn Fn(&[f64]) -> Result<AffineMap> + Send + Sync>;

/// `θ -> (A_θ, b_θ)`.
#[derive(Clone)]
pub enum ParamMap {
    /// `A_θ = a0 + Σ_k θ_k a_k`, `b_θ = b0 + Σ_k θ_k b_k`.
    Linear { a0: DMatrix<f64>, a: Vec<DMatrix<f64>>, b0: DVector<f64>, b: Vec<DVector<f64>> },
    Custom { dim: usize, params: usize, f: MapFn },
}

impl fmt::Debug for ParamMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamMap::Linear { a0, a, b0, b } => f
                .debug_struct("Linear")
                .field("a0", a0)
                .field("a", a)
                .field("b0", b0)
                .field("b", b)
                .finish(),
            ParamMap::Custom { dim, params, .. } => {
                write!(f, "Custom {{ dim: {dim}, params: {params} }}")
            }
        }
    }
}

impl ParamMap {
    pub fn linear(a0: DMatrix<f64>, a: Vec<DMatrix<f64>>, b0: DVector<f64>, b: Vec<DVector<f64>>) -> Result<Self> {
        let d = b0.len();
        if a0.shape() != (d, d) || a.len() != b.len() {
            return Err(Error::Family("inconsistent linear map coefficients".into()));
        }
        if a.iter().any(|m| m.shape() != (d, d)) || b.iter().any(|v| v.len() != d) {
            return Err(Error::Family("coefficient shapes differ from the space dimension".into()));
        }
        Ok(ParamMap::Linear { a0, a, b0, b })
    }

    /// `θ ∈ R^d`, `A = I`, `b = θ`.
    pub fn shift(d: usize) -> Self {
        let b = (0..d)
            .map(|k| {
                let mut e = DVector::zeros(d);
                e[k] = 1.0;
                e
            })
            .collect();
        ParamMap::Linear {
            a0: DMatrix::identity(d, d),
            a: vec![DMatrix::zeros(d, d); d],
            b0: DVector::zeros(d),
            b,
        }
    }

    /// `θ = (a, b)` acting on the line as `x -> a x + b`.
    pub fn location_scale() -> Self {
        ParamMap::Linear {
            a0: DMatrix::zeros(1, 1),
            a: vec![DMatrix::identity(1, 1), DMatrix::zeros(1, 1)],
            b0: DVector::zeros(1),
            b: vec![DVector::zeros(1), DVector::from_element(1, 1.0)],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ParamMap::Linear { b0, .. } => b0.len(),
            ParamMap::Custom { dim, .. } => *dim,
        }
    }

    pub fn params(&self) -> usize {
        match self {
            ParamMap::Linear { a, .. } => a.len(),
            ParamMap::Custom { params, .. } => *params,
        }
    }

    pub fn eval(&self, theta: &[f64]) -> Result<AffineMap> {
        if theta.len() != self.params() {
            return Err(Error::Dimension(format!(
                "parameter of length {} for a map with {} parameters",
                theta.len(),
                self.params()
            )));
        }
        match self {
            ParamMap::Linear { a0, a, b0, b } => {
                let mut am = a0.clone();
                let mut bv = b0.clone();
                for (k, &t) in theta.iter().enumerate() {
                    if t != 0.0 {
                        am += &a[k] * t;
                        bv += &b[k] * t;
                    }
                }
                AffineMap::new(am, bv)
            }
            ParamMap::Custom { f, .. } => f(theta),
        }
    }
}
