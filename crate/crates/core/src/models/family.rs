use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::density::{closed_grid_points, WeightDensity};
use super::param_map::ParamMap;
use super::quadrature::{ParamLaw, Quadrature};
use crate::error::{Error, Result};
use crate::measures::{AffineMap, DiscreteMeasure, DomainBox, GridDensity, GridGeometry};

/// Inflation of the common domain about its center.
pub const DOMAIN_INFLATION: f64 = 1.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    Shift,
    LocationScale,
    Affine,
}

/// How a member measure is turned into atoms.
#[derive(Debug, Clone, PartialEq)]
pub enum MemberScheme {
    /// Resample the push-forward density onto a grid; atoms at its cell centers.
    Grid(GridGeometry),
    /// Push the template's cell centers through the map.
    Lagrangian,
}

/// Random measures `φ_θ # μ0` with `θ ~ g` on a box.
#[derive(Debug, Clone)]
pub struct DeformableFamily {
    kind: FamilyKind,
    g: WeightDensity,
    phi: ParamMap,
    template: GridDensity,
    omega: DomainBox,
}

impl DeformableFamily {
    pub fn new(kind: FamilyKind, g: WeightDensity, phi: ParamMap, template: GridDensity) -> Result<Self> {
        let p = g.theta_box().dim();
        if phi.params() != p {
            return Err(Error::Family(format!(
                "map takes {} parameters but the box has {p} axes",
                phi.params()
            )));
        }
        if phi.dim() != template.dim() {
            return Err(Error::Family(format!(
                "map acts in dimension {} but the template lives in dimension {}",
                phi.dim(),
                template.dim()
            )));
        }
        let support = template.support_bounds();
        let corners = support.corners();
        let mut pts: Vec<f64> = Vec::new();
        let per_axis = match p {
            1 | 2 => 9,
            3 => 7,
            _ => 3,
        };
        for theta in closed_grid_points(g.theta_box(), per_axis) {
            let map = phi.eval(&theta)?;
            for c in &corners {
                pts.extend(map.apply(c));
            }
        }
        let omega = DomainBox::bounding(&pts, template.dim())?.inflate(DOMAIN_INFLATION);
        let family = Self { kind, g, phi, template, omega };
        if let ParamMap::Custom { .. } = family.phi {
            family.lipschitz_spot_check(64, 0x5eed)?;
        }
        Ok(family)
    }

    /// Estimate a Lipschitz constant of `θ -> (A_θ, b_θ)` on random nearby pairs;
    /// fails when ratios blow up as the pairs get closer.
    pub fn lipschitz_spot_check(&self, pairs: usize, seed: u64) -> Result<f64> {
        let b = self.theta_box();
        let widths = b.widths();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0_f64;
        for _ in 0..pairs {
            let t: Vec<f64> = (0..b.dim()).map(|k| b.lo()[k] + rng.random::<f64>() * widths[k]).collect();
            let dir: Vec<f64> = (0..b.dim()).map(|_| rng.random::<f64>() - 0.5).collect();
            let ratio = |scale: f64| -> Result<f64> {
                let t2: Vec<f64> = t
                    .iter()
                    .zip(&dir)
                    .enumerate()
                    .map(|(k, (x, v))| (x + scale * widths[k] * v).clamp(b.lo()[k], b.hi()[k]))
                    .collect();
                let dist = t.iter().zip(&t2).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                if dist == 0.0 {
                    return Ok(0.0);
                }
                let (m1, m2) = (self.phi.eval(&t)?, self.phi.eval(&t2)?);
                let da = (m1.matrix() - m2.matrix()).norm();
                let db = (m1.offset() - m2.offset()).norm();
                Ok((da * da + db * db).sqrt() / dist)
            };
            let coarse = ratio(1e-3)?;
            let fine = ratio(1e-5)?;
            if fine > 5.0 * coarse + 1e-6 {
                return Err(Error::Family(format!(
                    "parameter map looks discontinuous near {t:?} (difference ratios {coarse:e} -> {fine:e})"
                )));
            }
            worst = worst.max(coarse).max(fine);
        }
        Ok(worst)
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn density(&self) -> &WeightDensity {
        &self.g
    }

    pub fn theta_box(&self) -> &DomainBox {
        self.g.theta_box()
    }

    pub fn phi(&self) -> &ParamMap {
        &self.phi
    }

    pub fn template(&self) -> &GridDensity {
        &self.template
    }

    /// Common compact domain of all members.
    pub fn omega(&self) -> &DomainBox {
        &self.omega
    }

    /// Space dimension.
    pub fn dim(&self) -> usize {
        self.template.dim()
    }

    /// Parameter dimension.
    pub fn params(&self) -> usize {
        self.theta_box().dim()
    }

    pub fn g(&self, theta: &[f64]) -> f64 {
        self.g.eval(theta)
    }

    pub fn map_at(&self, theta: &[f64]) -> Result<AffineMap> {
        self.phi.eval(theta)
    }

    /// Grid over the common domain with `cells[k]` cells on axis k.
    pub fn omega_grid(&self, cells: &[usize]) -> Result<GridGeometry> {
        GridGeometry::covering(&self.omega, cells)
    }

    /// The parameter law on a quadrature rule.
    pub fn law(&self, quad: &Quadrature) -> Result<ParamLaw> {
        let raw: Vec<f64> = quad.nodes().iter().map(|t| self.g.eval(t)).collect();
        let z: f64 = raw.iter().zip(quad.weights()).map(|(g, w)| g * w).sum();
        if !(z > 0.0) {
            return Err(Error::Family("density vanishes on every quadrature node".into()));
        }
        let density: Vec<f64> = raw.iter().map(|g| g / z).collect();
        let probs = density.iter().zip(quad.weights()).map(|(g, w)| g * w).collect();
        Ok(ParamLaw { nodes: quad.nodes().to_vec(), weights: quad.weights().to_vec(), density, probs, normalizer: z })
    }

    /// `(Ā, b̄) = E(A_θ, b_θ)`.
    pub fn mean_map(&self, law: &ParamLaw) -> Result<AffineMap> {
        let d = self.dim();
        let mut a = DMatrix::zeros(d, d);
        let mut b = DVector::zeros(d);
        for (t, &p) in law.nodes.iter().zip(&law.probs) {
            let m = self.map_at(t)?;
            a += m.matrix() * p;
            b += m.offset() * p;
        }
        AffineMap::new(a, b)
    }

    /// Sample mean of the maps at the given parameters.
    pub fn sample_mean_map(&self, thetas: &[Vec<f64>]) -> Result<AffineMap> {
        if thetas.is_empty() {
            return Err(Error::InsufficientData("no parameters to average".into()));
        }
        let d = self.dim();
        let mut a = DMatrix::zeros(d, d);
        let mut b = DVector::zeros(d);
        for t in thetas {
            let m = self.map_at(t)?;
            a += m.matrix();
            b += m.offset();
        }
        let n = thetas.len() as f64;
        AffineMap::new(a / n, b / n)
    }

    /// `(A_θ Ā⁻¹, b_θ − A_θ Ā⁻¹ b̄)`.
    pub fn centered_params(&self, theta: &[f64], mean: &AffineMap) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let m = self.map_at(theta)?;
        let inv = mean.inverse();
        let a = m.matrix() * inv.matrix();
        let b = m.offset() - m.matrix() * (inv.matrix() * mean.offset());
        Ok((a, b))
    }

    /// Density of `φ # μ0`, resampled on `target` or transformed exactly.
    pub fn image_density(&self, map: &AffineMap, target: Option<&GridGeometry>) -> Result<GridDensity> {
        self.template.pushforward(map, target)
    }

    pub fn member_density(&self, theta: &[f64], target: Option<&GridGeometry>) -> Result<GridDensity> {
        self.image_density(&self.map_at(theta)?, target)
    }

    /// Atoms of `φ # μ0` declared on the common domain.
    pub fn image_measure(&self, map: &AffineMap, scheme: &MemberScheme) -> Result<DiscreteMeasure> {
        match scheme {
            MemberScheme::Grid(geom) => {
                let q = self.template.pushforward(map, Some(geom))?;
                let (points, weights) = q.cell_center_atoms();
                DiscreteMeasure::new(self.omega.clone(), points, weights)
            }
            MemberScheme::Lagrangian => {
                let (points, weights) = self.template.cell_center_atoms();
                let mapped = points.chunks_exact(self.dim()).flat_map(|p| map.apply(p)).collect();
                DiscreteMeasure::new(self.omega.clone(), mapped, weights)
            }
        }
    }

    pub fn member(&self, theta: &[f64], scheme: &MemberScheme) -> Result<DiscreteMeasure> {
        self.image_measure(&self.map_at(theta)?, scheme)
    }
}
