//! Template densities with exact cell masses.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::measures::{DomainBox, GridDensity, GridGeometry};

/// CDF of the symmetric triangular law on `[lo, hi]`.
pub fn triangle_cdf(lo: f64, hi: f64, x: f64) -> f64 {
    let c = 0.5 * (lo + hi);
    let w = hi - lo;
    if x <= lo {
        0.0
    } else if x <= c {
        2.0 * (x - lo) * (x - lo) / (w * w)
    } else if x < hi {
        1.0 - 2.0 * (hi - x) * (hi - x) / (w * w)
    } else {
        1.0
    }
}

/// Quantile of the symmetric triangular law on `[lo, hi]`.
pub fn triangle_quantile(lo: f64, hi: f64, y: f64) -> f64 {
    let w = hi - lo;
    if y <= 0.5 {
        lo + w * (0.5 * y).sqrt()
    } else {
        hi - w * (0.5 * (1.0 - y)).sqrt()
    }
}

pub fn triangle_pdf(lo: f64, hi: f64, x: f64) -> f64 {
    let c = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    if x <= lo || x >= hi {
        0.0
    } else {
        (1.0 - (x - c).abs() / half) / half
    }
}

fn from_axis_cdfs(geometry: GridGeometry, cdfs: &[&dyn Fn(f64) -> f64]) -> Result<GridDensity> {
    let d = geometry.dim();
    let axis_mass: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let (o, h) = (geometry.origin()[k], geometry.cell_size()[k]);
            (0..geometry.shape()[k])
                .map(|i| cdfs[k](o + (i as f64 + 1.0) * h) - cdfs[k](o + i as f64 * h))
                .collect()
        })
        .collect();
    let vol = geometry.cell_volume();
    let values = (0..geometry.len())
        .map(|flat| {
            let idx = geometry.multi_index(flat);
            (0..d).map(|k| axis_mass[k][idx[k]]).product::<f64>().max(0.0) / vol
        })
        .collect();
    GridDensity::from_unnormalized(geometry, values)
}

/// Symmetric triangular density on `[lo, hi]` with `cells` cells.
pub fn triangle(lo: f64, hi: f64, cells: usize) -> Result<GridDensity> {
    if !(hi > lo) {
        return Err(Error::Invariant("triangle needs lo < hi".into()));
    }
    let geometry = GridGeometry::covering(&DomainBox::new(vec![lo], vec![hi])?, &[cells])?;
    from_axis_cdfs(geometry, &[&|x| triangle_cdf(lo, hi, x)])
}

/// Uniform density on a box.
pub fn uniform(bounds: &DomainBox, cells: &[usize]) -> Result<GridDensity> {
    let geometry = GridGeometry::covering(bounds, cells)?;
    let n = geometry.len();
    GridDensity::from_unnormalized(geometry, vec![1.0; n])
}

/// Product of `sin²` bumps vanishing on the box boundary.
pub fn bump(bounds: &DomainBox, cells: &[usize]) -> Result<GridDensity> {
    let geometry = GridGeometry::covering(bounds, cells)?;
    let cdf = |k: usize| {
        let (lo, w) = (bounds.lo()[k], bounds.widths()[k]);
        move |x: f64| {
            let u = ((x - lo) / w).clamp(0.0, 1.0);
            u - (2.0 * PI * u).sin() / (2.0 * PI)
        }
    };
    match bounds.dim() {
        1 => from_axis_cdfs(geometry, &[&cdf(0)]),
        2 => from_axis_cdfs(geometry, &[&cdf(0), &cdf(1)]),
        d => Err(Error::Dimension(format!("grid templates support dimension 1 or 2, got {d}"))),
    }
}
