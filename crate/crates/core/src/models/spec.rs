//! JSON family specification.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::density::{DensityKind, WeightDensity};
use super::family::{DeformableFamily, FamilyKind};
use super::param_map::ParamMap;
use super::templates;
use crate::error::{Error, Result};
use crate::measures::io::GridSchema;
use crate::measures::{DomainBox, GridDensity, Measure};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum KindSpec {
    Shift,
    LocationScale,
    Affine,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyticTemplate {
    Triangle { lo: f64, hi: f64, cells: usize },
    Bump { lo: Vec<f64>, hi: Vec<f64>, cells: Vec<usize> },
    Uniform { lo: Vec<f64>, hi: Vec<f64>, cells: Vec<usize> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TemplateSpec {
    Path { path: String },
    Analytic { analytic: AnalyticTemplate },
    Inline(GridSchema),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensitySpec {
    Uniform,
    TruncGauss { mean: Vec<f64>, sd: Vec<f64> },
    Poly { coeffs: Vec<Vec<f64>> },
}

/// `A_θ = a0 + Σ θ_k a[k]`, `b_θ = b0 + Σ θ_k b[k]`; matrices row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhiSpec {
    pub a0: Vec<Vec<f64>>,
    pub a: Vec<Vec<Vec<f64>>>,
    pub b0: Vec<f64>,
    pub b: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilySpec {
    pub kind: KindSpec,
    pub template: TemplateSpec,
    pub theta_box: Vec<[f64; 2]>,
    pub g: DensitySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<PhiSpec>,
}

fn matrix(rows: &[Vec<f64>], d: usize) -> Result<DMatrix<f64>> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Family(format!("expected a {d}x{d} matrix")));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

impl AnalyticTemplate {
    pub fn build(&self) -> Result<GridDensity> {
        match self {
            AnalyticTemplate::Triangle { lo, hi, cells } => templates::triangle(*lo, *hi, *cells),
            AnalyticTemplate::Bump { lo, hi, cells } => templates::bump(&DomainBox::new(lo.clone(), hi.clone())?, cells),
            AnalyticTemplate::Uniform { lo, hi, cells } => {
                templates::uniform(&DomainBox::new(lo.clone(), hi.clone())?, cells)
            }
        }
    }
}

impl TemplateSpec {
    pub fn build(&self, base: Option<&Path>) -> Result<GridDensity> {
        match self {
            TemplateSpec::Inline(g) => g.clone().into_density(),
            TemplateSpec::Analytic { analytic } => analytic.build(),
            TemplateSpec::Path { path } => {
                let p = match base {
                    Some(b) if Path::new(path).is_relative() => b.join(path),
                    _ => Path::new(path).to_path_buf(),
                };
                match crate::measures::io::load_measure_auto(&p)? {
                    Measure::Grid(g) => Ok(g),
                    Measure::Discrete(_) => Err(Error::Family("template must be a grid density".into())),
                }
            }
        }
    }
}

impl DensitySpec {
    pub fn kind(&self) -> DensityKind {
        match self {
            DensitySpec::Uniform => DensityKind::Uniform,
            DensitySpec::TruncGauss { mean, sd } => DensityKind::TruncGauss { mean: mean.clone(), sd: sd.clone() },
            DensitySpec::Poly { coeffs } => DensityKind::Poly { coeffs: coeffs.clone() },
        }
    }
}

impl FamilySpec {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Build the family; relative template paths resolve against `base`.
    pub fn build(&self, base: Option<&Path>) -> Result<DeformableFamily> {
        let template = self.template.build(base)?;
        let theta_box = DomainBox::from_intervals(&self.theta_box)?;
        let g = WeightDensity::new(self.g.kind(), theta_box)?;
        let d = template.dim();
        let p = self.theta_box.len();
        let (kind, phi) = match self.kind {
            KindSpec::Shift => {
                if p != d {
                    return Err(Error::Family(format!("shift family needs {d} parameters, got {p}")));
                }
                (FamilyKind::Shift, ParamMap::shift(d))
            }
            KindSpec::LocationScale => {
                if d != 1 || p != 2 {
                    return Err(Error::Family("location-scale family needs a 1D template and (a, b) parameters".into()));
                }
                (FamilyKind::LocationScale, ParamMap::location_scale())
            }
            KindSpec::Affine => {
                let s = self.phi.as_ref().ok_or_else(|| Error::Family("affine family needs `phi`".into()))?;
                if s.a.len() != p || s.b.len() != p {
                    return Err(Error::Family(format!("phi needs {p} coefficient matrices and vectors")));
                }
                if s.b0.len() != d || s.b.iter().any(|v| v.len() != d) {
                    return Err(Error::Family(format!("phi offsets must have length {d}")));
                }
                let phi = ParamMap::linear(
                    matrix(&s.a0, d)?,
                    s.a.iter().map(|m| matrix(m, d)).collect::<Result<_>>()?,
                    DVector::from_column_slice(&s.b0),
                    s.b.iter().map(|v| DVector::from_column_slice(v)).collect(),
                )?;
                (FamilyKind::Affine, phi)
            }
        };
        DeformableFamily::new(kind, g, phi, template)
    }
}

pub fn load_family(path: &Path) -> Result<DeformableFamily> {
    let text = fs::read_to_string(path)?;
    FamilySpec::parse(&text)?.build(path.parent())
}
