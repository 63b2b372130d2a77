//! Empirical barycenters: exact 1D, closed-form affine, free-support
//! fixed point, and the Euclidean mean for contrast.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measures::{require_same_domain, DiscreteMeasure, GridDensity, GridGeometry};
use crate::models::DeformableFamily;
use crate::transport1d::barycenter_1d;
use crate::transport_exact::{barycentric_projection, w2sq_lp, LpSolution};

pub const DEFAULT_MAX_ITER: usize = 200;
/// Default stopping displacement, relative to the domain diameter.
pub const DEFAULT_REL_TOL: f64 = 1e-7;
const DECREASE_SLACK: f64 = 1e-9;

/// Equal-weight 1D barycenter.
pub fn empirical_barycenter_1d(measures: &[DiscreteMeasure]) -> Result<DiscreteMeasure> {
    if measures.is_empty() {
        return Err(Error::InsufficientData("no measures".into()));
    }
    let w = vec![1.0 / measures.len() as f64; measures.len()];
    barycenter_1d(measures, &w)
}

/// Template pushed by the sample-mean map `((1/n)Σ A_θi, (1/n)Σ b_θi)`.
pub fn empirical_barycenter_affine(
    thetas: &[Vec<f64>],
    family: &DeformableFamily,
    target: Option<&GridGeometry>,
) -> Result<GridDensity> {
    family.image_density(&family.sample_mean_map(thetas)?, target)
}

/// `J_n(ν) = (1/n) Σ_j ½ W₂²(ν, μ_j)`.
pub fn objective(nu: &DiscreteMeasure, measures: &[DiscreteMeasure]) -> Result<f64> {
    Ok(solve_all(nu, measures)?.1)
}

fn solve_all(nu: &DiscreteMeasure, measures: &[DiscreteMeasure]) -> Result<(Vec<LpSolution>, f64)> {
    let sols: Vec<LpSolution> = measures.par_iter().map(|m| w2sq_lp(nu, m)).collect::<Result<_>>()?;
    let j = sols.iter().map(|s| 0.5 * s.cost).sum::<f64>() / measures.len() as f64;
    Ok((sols, j))
}

#[derive(Debug, Clone, Copy)]
pub struct FixedSupportOptions {
    pub max_iter: usize,
    /// Absolute displacement tolerance; defaults to `1e-7` times the domain diameter.
    pub tol: Option<f64>,
}

impl Default for FixedSupportOptions {
    fn default() -> Self {
        Self { max_iter: DEFAULT_MAX_ITER, tol: None }
    }
}

#[derive(Debug, Clone)]
pub struct FixedSupportResult {
    pub measure: DiscreteMeasure,
    /// `J_n` at the seed and after every update.
    pub trace: Vec<f64>,
    /// Largest atom displacement of every update.
    pub displacements: Vec<f64>,
    /// Updates performed before the stopping rule fired.
    pub iterations: usize,
    pub converged: bool,
}

/// Free-support fixed point: every atom moves to the average of its
/// barycentric projections onto the inputs. Weights stay equal.
pub fn empirical_barycenter_fixed_support(
    measures: &[DiscreteMeasure],
    seed: Option<&DiscreteMeasure>,
    opts: &FixedSupportOptions,
) -> Result<FixedSupportResult> {
    let first = measures.first().ok_or_else(|| Error::InsufficientData("no measures".into()))?;
    for m in &measures[1..] {
        if m.dim() != first.dim() {
            return Err(Error::Dimension("inputs have different dimensions".into()));
        }
        require_same_domain(first.domain(), m.domain())?;
    }
    let mut x = match seed {
        Some(s) => {
            if !s.has_equal_weights() {
                return Err(Error::Invariant("seed support must have equal weights".into()));
            }
            require_same_domain(first.domain(), s.domain())?;
            s.clone()
        }
        None => DiscreteMeasure::uniform(first.domain().clone(), first.points().to_vec())?,
    };
    let tol = opts.tol.unwrap_or(DEFAULT_REL_TOL * first.domain().diameter());
    let n = measures.len() as f64;
    let d = x.dim();
    let (mut sols, mut j) = solve_all(&x, measures)?;
    let mut trace = vec![j];
    let mut displacements = Vec::new();
    for it in 0..opts.max_iter {
        let mut next = vec![0.0; x.points().len()];
        for s in &sols {
            for (i, p) in barycentric_projection(&s.plan).into_iter().enumerate() {
                for k in 0..d {
                    next[i * d + k] += p[k] / n;
                }
            }
        }
        let disp = next
            .chunks_exact(d)
            .zip(x.points().chunks_exact(d))
            .map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        let candidate = DiscreteMeasure::new(x.domain().clone(), next, x.weights().to_vec())?;
        let (nsols, nj) = solve_all(&candidate, measures)?;
        if nj > j + DECREASE_SLACK + 1e-12 * j.abs() {
            return Err(Error::NoDecrease(format!("iteration {it}: {j} -> {nj}")));
        }
        x = candidate;
        sols = nsols;
        j = nj;
        trace.push(j);
        displacements.push(disp);
        log::debug!("fixed support iteration {it}: J = {j}, displacement = {disp:e}");
        if disp < tol {
            return Ok(FixedSupportResult { measure: x, trace, displacements, iterations: it, converged: true });
        }
    }
    log::warn!("fixed support solver stopped after {} iterations without converging", opts.max_iter);
    Ok(FixedSupportResult { measure: x, trace, displacements, iterations: opts.max_iter, converged: false })
}

/// Fixed point restarted from every equal-weight input; keeps the lowest
/// final `J_n` (earliest input on ties). Every input is then beaten.
pub fn empirical_barycenter_multistart(
    measures: &[DiscreteMeasure],
    opts: &FixedSupportOptions,
) -> Result<FixedSupportResult> {
    let seeds: Vec<&DiscreteMeasure> = measures.iter().filter(|m| m.has_equal_weights()).collect();
    if seeds.is_empty() {
        return empirical_barycenter_fixed_support(measures, None, opts);
    }
    let mut best: Option<FixedSupportResult> = None;
    for s in seeds {
        let res = empirical_barycenter_fixed_support(measures, Some(s), opts)?;
        let better = best.as_ref().is_none_or(|b| res.trace.last() < b.trace.last());
        if better {
            best = Some(res);
        }
    }
    Ok(best.expect("at least one seed"))
}

/// Pointwise average of densities on a common grid.
pub fn euclidean_mean(densities: &[GridDensity]) -> Result<GridDensity> {
    let first = densities.first().ok_or_else(|| Error::InsufficientData("no densities".into()))?;
    let geom = first.geometry();
    let mut acc = vec![0.0; geom.len()];
    for q in densities {
        if !q.geometry().approx_eq(geom) {
            return Err(Error::GridMismatch("densities live on different grids".into()));
        }
        for (a, v) in acc.iter_mut().zip(q.values()) {
            *a += v;
        }
    }
    let n = densities.len() as f64;
    GridDensity::new(geom.clone(), acc.into_iter().map(|v| v / n).collect())
}
