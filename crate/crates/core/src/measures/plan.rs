use super::DiscreteMeasure;
use crate::error::{Error, Result};

pub const MARGINAL_TOL: f64 = 1e-9;

/// Coupling between two discrete measures, stored as sparse `(i, j, mass)` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    source: DiscreteMeasure,
    target: DiscreteMeasure,
    entries: Vec<(usize, usize, f64)>,
}

impl TransportPlan {
    pub fn new(
        source: DiscreteMeasure,
        target: DiscreteMeasure,
        entries: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        let (m, n) = (source.len(), target.len());
        let mut rows = vec![0.0; m];
        let mut cols = vec![0.0; n];
        for &(i, j, g) in &entries {
            if i >= m || j >= n {
                return Err(Error::Dimension(format!("plan entry ({i}, {j}) outside {m}x{n}")));
            }
            if !(g.is_finite() && g >= 0.0) {
                return Err(Error::Invariant(format!("plan entry ({i}, {j}) is {g}")));
            }
            rows[i] += g;
            cols[j] += g;
        }
        check_marginal("row", &rows, source.weights())?;
        check_marginal("column", &cols, target.weights())?;
        Ok(Self { source, target, entries })
    }

    /// From a dense row-major `m x n` matrix; zero entries are dropped.
    pub fn from_dense(source: DiscreteMeasure, target: DiscreteMeasure, gamma: &[f64]) -> Result<Self> {
        let n = target.len();
        if gamma.len() != source.len() * n {
            return Err(Error::Dimension("dense plan size".into()));
        }
        let entries = gamma
            .iter()
            .enumerate()
            .filter(|(_, g)| **g != 0.0)
            .map(|(e, &g)| (e / n, e % n, g))
            .collect();
        Self::new(source, target, entries)
    }

    pub fn source(&self) -> &DiscreteMeasure {
        &self.source
    }

    pub fn target(&self) -> &DiscreteMeasure {
        &self.target
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut g = vec![vec![0.0; self.target.len()]; self.source.len()];
        for &(i, j, w) in &self.entries {
            g[i][j] += w;
        }
        g
    }

    /// `Σ γ_ij |x_i − y_j|²`.
    pub fn cost(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, g)| g * sq_dist(self.source.point(i), self.target.point(j)))
            .sum()
    }
}

fn check_marginal(name: &str, got: &[f64], want: &[f64]) -> Result<()> {
    for (k, (g, w)) in got.iter().zip(want).enumerate() {
        if (g - w).abs() > MARGINAL_TOL {
            return Err(Error::Invariant(format!("{name} marginal {k}: {g} vs {w}")));
        }
    }
    Ok(())
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
