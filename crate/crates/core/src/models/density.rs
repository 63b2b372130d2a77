use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::measures::DomainBox;

pub type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Shape of the parameter density before normalization on the box.
#[derive(Clone)]
pub enum DensityKind {
    Uniform,
    /// Product of independent Gaussians truncated to the box.
    TruncGauss { mean: Vec<f64>, sd: Vec<f64> },
    /// Product over axes of polynomials `Σ_j c_j t^j`; must already integrate to 1.
    Poly { coeffs: Vec<Vec<f64>> },
    /// Caller-supplied density; must already integrate to 1.
    Custom(DensityFn),
}

impl fmt::Debug for DensityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DensityKind::Uniform => write!(f, "Uniform"),
            DensityKind::TruncGauss { mean, sd } => write!(f, "TruncGauss {{ mean: {mean:?}, sd: {sd:?} }}"),
            DensityKind::Poly { coeffs } => write!(f, "Poly {{ coeffs: {coeffs:?} }}"),
            DensityKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// A probability density `g` on a parameter box.
#[derive(Clone, Debug)]
pub struct WeightDensity {
    kind: DensityKind,
    theta_box: DomainBox,
    norm: Vec<f64>,
    sup: f64,
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn poly_eval(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * t + ci)
}

fn poly_integral(c: &[f64], lo: f64, hi: f64) -> f64 {
    c.iter()
        .enumerate()
        .map(|(j, &cj)| cj * (hi.powi(j as i32 + 1) - lo.powi(j as i32 + 1)) / (j as f64 + 1.0))
        .sum()
}

/// Points per axis used when a density or map is checked on a grid.
pub(crate) fn check_grid_points(p: usize) -> usize {
    match p {
        1 => 201,
        2 => 41,
        3 => 13,
        _ => 5,
    }
}

/// Grid including the box corners.
pub fn closed_grid_points(b: &DomainBox, per_axis: usize) -> Vec<Vec<f64>> {
    let p = b.dim();
    let per_axis = per_axis.max(2);
    let total = per_axis.pow(p as u32);
    (0..total)
        .map(|mut idx| {
            (0..p)
                .map(|k| {
                    let i = idx % per_axis;
                    idx /= per_axis;
                    let t = i as f64 / (per_axis - 1) as f64;
                    b.lo()[k] + t * (b.hi()[k] - b.lo()[k])
                })
                .collect()
        })
        .collect()
}

impl WeightDensity {
    pub fn new(kind: DensityKind, theta_box: DomainBox) -> Result<Self> {
        let p = theta_box.dim();
        let widths = theta_box.widths();
        if widths.iter().any(|w| *w <= 0.0) {
            return Err(Error::Invariant("parameter box must have positive width on every axis".into()));
        }
        let mut norm = vec![1.0; p];
        match &kind {
            DensityKind::Uniform => {
                norm = widths.iter().map(|w| 1.0 / w).collect();
            }
            DensityKind::TruncGauss { mean, sd } => {
                if mean.len() != p || sd.len() != p {
                    return Err(Error::Dimension("truncated Gaussian parameters per axis".into()));
                }
                for k in 0..p {
                    if !(sd[k] > 0.0) {
                        return Err(Error::Invariant(format!("sd[{k}] = {} must be positive", sd[k])));
                    }
                    let a = (theta_box.lo()[k] - mean[k]) / sd[k];
                    let b = (theta_box.hi()[k] - mean[k]) / sd[k];
                    let z = std_normal_cdf(b) - std_normal_cdf(a);
                    if !(z > 0.0) {
                        return Err(Error::Invariant("truncated Gaussian has no mass on the box".into()));
                    }
                    norm[k] = 1.0 / (sd[k] * z);
                }
            }
            DensityKind::Poly { coeffs } => {
                if coeffs.len() != p {
                    return Err(Error::Dimension("one polynomial per parameter axis".into()));
                }
                let total: f64 = (0..p)
                    .map(|k| poly_integral(&coeffs[k], theta_box.lo()[k], theta_box.hi()[k]))
                    .product();
                if (total - 1.0).abs() > 1e-6 {
                    return Err(Error::Invariant(format!("polynomial density integrates to {total}")));
                }
            }
            DensityKind::Custom(_) => {}
        }
        let mut g = Self { kind, theta_box, norm, sup: 0.0 };
        let grid = closed_grid_points(&g.theta_box, check_grid_points(p));
        let mut max = 0.0_f64;
        for t in &grid {
            let v = g.eval(t);
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Invariant(format!("density is {v} at {t:?}")));
            }
            max = max.max(v);
        }
        if let DensityKind::Custom(_) = g.kind {
            let total = g.integrate(|_| 1.0);
            if (total - 1.0).abs() > 1e-6 {
                return Err(Error::Invariant(format!("density integrates to {total}")));
            }
        }
        g.sup = match &g.kind {
            DensityKind::Uniform => g.norm.iter().product(),
            DensityKind::TruncGauss { mean, sd } => (0..p)
                .map(|k| {
                    let m = mean[k].clamp(g.theta_box.lo()[k], g.theta_box.hi()[k]);
                    g.norm[k] * std_normal_pdf((m - mean[k]) / sd[k])
                })
                .product(),
            _ => max * 1.01,
        };
        Ok(g)
    }

    pub fn kind(&self) -> &DensityKind {
        &self.kind
    }

    pub fn theta_box(&self) -> &DomainBox {
        &self.theta_box
    }

    /// `g(θ)`, zero outside the box.
    pub fn eval(&self, theta: &[f64]) -> f64 {
        if !self.theta_box.contains(theta) {
            return 0.0;
        }
        match &self.kind {
            DensityKind::Uniform => self.norm.iter().product(),
            DensityKind::TruncGauss { mean, sd } => (0..theta.len())
                .map(|k| self.norm[k] * std_normal_pdf((theta[k] - mean[k]) / sd[k]))
                .product(),
            DensityKind::Poly { coeffs } => {
                (0..theta.len()).map(|k| poly_eval(&coeffs[k], theta[k])).product()
            }
            DensityKind::Custom(f) => f(theta),
        }
    }

    /// Upper bound used by the rejection sampler.
    pub fn sup_bound(&self) -> f64 {
        self.sup
    }

    /// `∫ h g` by a composite 8-point Gauss rule on 16 panels per axis.
    pub fn integrate(&self, h: impl Fn(&[f64]) -> f64) -> f64 {
        const NODES: [f64; 8] = [
            -0.960_289_856_497_536_3,
            -0.796_666_477_413_626_7,
            -0.525_532_409_916_329,
            -0.183_434_642_495_649_8,
            0.183_434_642_495_649_8,
            0.525_532_409_916_329,
            0.796_666_477_413_626_7,
            0.960_289_856_497_536_3,
        ];
        const WEIGHTS: [f64; 8] = [
            0.101_228_536_290_376_3,
            0.222_381_034_453_374_5,
            0.313_706_645_877_887_3,
            0.362_683_783_378_362,
            0.362_683_783_378_362,
            0.313_706_645_877_887_3,
            0.222_381_034_453_374_5,
            0.101_228_536_290_376_3,
        ];
        let p = self.theta_box.dim();
        let panels = match p {
            1 => 64,
            2 => 16,
            3 => 4,
            _ => 1,
        };
        let per_axis = panels * NODES.len();
        let mut axes: Vec<Vec<(f64, f64)>> = Vec::with_capacity(p);
        for k in 0..p {
            let (lo, hi) = (self.theta_box.lo()[k], self.theta_box.hi()[k]);
            let h = (hi - lo) / panels as f64;
            let mut pts = Vec::with_capacity(per_axis);
            for j in 0..panels {
                let mid = lo + (j as f64 + 0.5) * h;
                for (x, w) in NODES.iter().zip(WEIGHTS) {
                    pts.push((mid + 0.5 * h * x, 0.5 * h * w));
                }
            }
            axes.push(pts);
        }
        let total = per_axis.pow(p as u32);
        let mut theta = vec![0.0; p];
        let mut acc = 0.0;
        for mut idx in 0..total {
            let mut w = 1.0;
            for k in 0..p {
                let (x, wk) = axes[k][idx % per_axis];
                idx /= per_axis;
                theta[k] = x;
                w *= wk;
            }
            acc += w * self.eval(&theta) * h(&theta);
        }
        acc
    }

    /// Analytic mean when available.
    pub fn analytic_mean(&self) -> Option<Vec<f64>> {
        let b = &self.theta_box;
        match &self.kind {
            DensityKind::Uniform => Some(b.center()),
            DensityKind::TruncGauss { mean, sd } => Some(
                (0..b.dim())
                    .map(|k| {
                        let a = (b.lo()[k] - mean[k]) / sd[k];
                        let c = (b.hi()[k] - mean[k]) / sd[k];
                        let z = std_normal_cdf(c) - std_normal_cdf(a);
                        mean[k] + sd[k] * (std_normal_pdf(a) - std_normal_pdf(c)) / z
                    })
                    .collect(),
            ),
            _ => None,
        }
    }
}
