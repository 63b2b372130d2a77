use crate::error::{Error, Result};
use crate::measures::DomainBox;

/// Default midpoint nodes per parameter axis.
pub const DEFAULT_NODES: usize = 33;

/// Midpoint rule on a uniform grid of the parameter box.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
    per_axis: Vec<usize>,
}

impl Quadrature {
    pub fn midpoint(theta_box: &DomainBox, per_axis: &[usize]) -> Result<Self> {
        let p = theta_box.dim();
        if per_axis.len() != p || per_axis.contains(&0) {
            return Err(Error::Range("midpoint rule needs at least one node per axis".into()));
        }
        let h: Vec<f64> = (0..p)
            .map(|k| (theta_box.hi()[k] - theta_box.lo()[k]) / per_axis[k] as f64)
            .collect();
        let vol: f64 = h.iter().product();
        let total: usize = per_axis.iter().product();
        let mut nodes = Vec::with_capacity(total);
        for flat in 0..total {
            // Last axis fastest.
            let mut rem = flat;
            let mut idx = vec![0usize; p];
            for k in (0..p).rev() {
                idx[k] = rem % per_axis[k];
                rem /= per_axis[k];
            }
            nodes.push((0..p).map(|k| theta_box.lo()[k] + (idx[k] as f64 + 0.5) * h[k]).collect());
        }
        Ok(Self { nodes, weights: vec![vol; total], per_axis: per_axis.to_vec() })
    }

    pub fn uniform(theta_box: &DomainBox, n: usize) -> Result<Self> {
        Self::midpoint(theta_box, &vec![n; theta_box.dim()])
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    /// Cell volumes.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn per_axis(&self) -> &[usize] {
        &self.per_axis
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// The parameter law discretized by a quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLaw {
    pub nodes: Vec<Vec<f64>>,
    /// Quadrature (Lebesgue) weights.
    pub weights: Vec<f64>,
    /// Density values rescaled so that `Σ weights·density = 1`.
    pub density: Vec<f64>,
    /// `weights·density`, a probability vector.
    pub probs: Vec<f64>,
    /// `Σ weights·g` before rescaling.
    pub normalizer: f64,
}

impl ParamLaw {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ_k probs_k h(θ_k)` for vector-valued `h`.
    pub fn expect_vec(&self, h: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
        let mut acc: Vec<f64> = Vec::new();
        for (t, &p) in self.nodes.iter().zip(&self.probs) {
            let v = h(t);
            if acc.is_empty() {
                acc = vec![0.0; v.len()];
            }
            for (a, x) in acc.iter_mut().zip(v) {
                *a += p * x;
            }
        }
        acc
    }

    /// Rescaled density at an arbitrary parameter.
    pub fn density_at(&self, g_value: f64) -> f64 {
        g_value / self.normalizer
    }

    pub fn mean(&self) -> Vec<f64> {
        self.expect_vec(|t| t.to_vec())
    }
}
