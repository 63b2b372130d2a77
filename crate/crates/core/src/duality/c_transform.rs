use std::collections::HashMap;

use super::GridFunction;
use crate::error::{Error, Result};

fn check_scale(scale: f64) -> Result<()> {
    if scale > 0.0 && scale.is_finite() {
        Ok(())
    } else {
        Err(Error::Scale(format!("{scale}")))
    }
}

/// `min_j (s/2)(x − y_j)² − v_j` for every `x` in `xs`.
fn min_plus_1d(xs: &[f64], ys: &[f64], v: &[f64], s: f64) -> Vec<f64> {
    xs.iter()
        .map(|&x| {
            ys.iter()
                .zip(v)
                .map(|(&y, &f)| 0.5 * s * (x - y) * (x - y) - f)
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// `S_c f(x) = min_y (c/2)|x − y|² − f(y)`, the minimum over grid points `y`,
/// evaluated at every grid point `x`. Separable by axis in 2D.
pub fn c_transform(f: &GridFunction, scale: f64) -> Result<GridFunction> {
    check_scale(scale)?;
    let g = f.geometry();
    let values = match g.dim() {
        1 => {
            let c = g.axis_centers(0);
            min_plus_1d(&c, &c, f.values(), scale)
        }
        _ => {
            let (n0, n1) = (g.shape()[0], g.shape()[1]);
            let c0 = g.axis_centers(0);
            let c1 = g.axis_centers(1);
            // h[i0][j1] = min_{j0} (s/2)(x0_i0 − y0_j0)² − f[j0][j1]
            let mut h = vec![f64::INFINITY; n0 * n1];
            for i0 in 0..n0 {
                for j0 in 0..n0 {
                    let q = 0.5 * scale * (c0[i0] - c0[j0]) * (c0[i0] - c0[j0]);
                    let row = &f.values()[j0 * n1..(j0 + 1) * n1];
                    let out = &mut h[i0 * n1..(i0 + 1) * n1];
                    for (o, &fv) in out.iter_mut().zip(row) {
                        let v = q - fv;
                        if v < *o {
                            *o = v;
                        }
                    }
                }
            }
            let mut out = vec![0.0; n0 * n1];
            for i0 in 0..n0 {
                let hr = &h[i0 * n1..(i0 + 1) * n1];
                let neg: Vec<f64> = hr.iter().map(|v| -v).collect();
                let row = min_plus_1d(&c1, &c1, &neg, scale);
                out[i0 * n1..(i0 + 1) * n1].copy_from_slice(&row);
            }
            out
        }
    };
    GridFunction::new(g.clone(), values)
}

/// `S_c f` at arbitrary points (flat coordinates); the minimum still ranges over grid points.
pub fn c_transform_at(f: &GridFunction, scale: f64, points: &[f64]) -> Result<Vec<f64>> {
    check_scale(scale)?;
    let g = f.geometry();
    let d = g.dim();
    if !points.len().is_multiple_of(d) {
        return Err(Error::Dimension("point coordinates do not match the grid dimension".into()));
    }
    match d {
        1 => Ok(min_plus_1d(points, &g.axis_centers(0), f.values(), scale)),
        _ => {
            let (n0, n1) = (g.shape()[0], g.shape()[1]);
            let c0 = g.axis_centers(0);
            let c1 = g.axis_centers(1);
            let mut cache: HashMap<u64, Vec<f64>> = HashMap::new();
            let mut out = Vec::with_capacity(points.len() / 2);
            for p in points.chunks_exact(2) {
                let neg_h = cache.entry(p[0].to_bits()).or_insert_with(|| {
                    let mut h = vec![f64::INFINITY; n1];
                    for j0 in 0..n0 {
                        let q = 0.5 * scale * (p[0] - c0[j0]) * (p[0] - c0[j0]);
                        let row = &f.values()[j0 * n1..(j0 + 1) * n1];
                        for (o, &fv) in h.iter_mut().zip(row) {
                            let v = q - fv;
                            if v < *o {
                                *o = v;
                            }
                        }
                    }
                    h.into_iter().map(|v| -v).collect()
                });
                out.push(min_plus_1d(&[p[1]], &c1, neg_h, scale)[0]);
            }
            Ok(out)
        }
    }
}

/// Direct minimization over all grid pairs; reference implementation.
pub fn c_transform_naive(f: &GridFunction, scale: f64) -> Result<GridFunction> {
    check_scale(scale)?;
    let g = f.geometry();
    let centers: Vec<Vec<f64>> = (0..g.len()).map(|i| g.center(i)).collect();
    let values = centers
        .iter()
        .map(|x| {
            centers
                .iter()
                .zip(f.values())
                .map(|(y, &fy)| {
                    0.5 * scale * x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() - fy
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    GridFunction::new(g.clone(), values)
}
