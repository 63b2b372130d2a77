//! Primal and dual objectives of the population barycenter problem,
//! closed-form dual maximizers and recovery of the barycenter from them.

mod c_transform;

pub use c_transform::{c_transform, c_transform_at, c_transform_naive};

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure, GridGeometry};
use crate::models::{DeformableFamily, FamilyKind, MemberScheme, ParamLaw};
use crate::transport1d::w2sq_1d;
use crate::transport_exact::w2sq_lp;

/// Zero-sum tolerance of dual families.
pub const ZERO_SUM_TOL: f64 = 1e-8;
/// Second differences below this flag a non-convex potential.
pub const CONVEXITY_TOL: f64 = 1e-4;

/// Values at the cell centers of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    geometry: GridGeometry,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(geometry: GridGeometry, values: Vec<f64>) -> Result<Self> {
        if values.len() != geometry.len() {
            return Err(Error::Dimension(format!(
                "{} values for {} cells",
                values.len(),
                geometry.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invariant("grid function must be finite".into()));
        }
        Ok(Self { geometry, values })
    }

    pub fn zeros(geometry: GridGeometry) -> Self {
        let n = geometry.len();
        Self { geometry, values: vec![0.0; n] }
    }

    pub fn from_fn(geometry: GridGeometry, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..geometry.len()).map(|i| f(&geometry.center(i))).collect();
        Self::new(geometry, values)
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// One grid function per quadrature node, with `Σ_k w_k f_k ≡ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualFamily {
    law: ParamLaw,
    geometry: GridGeometry,
    f: Vec<Vec<f64>>,
}

impl DualFamily {
    pub fn new(law: ParamLaw, geometry: GridGeometry, f: Vec<Vec<f64>>) -> Result<Self> {
        if f.len() != law.len() {
            return Err(Error::Dimension(format!("{} functions for {} nodes", f.len(), law.len())));
        }
        if f.iter().any(|v| v.len() != geometry.len()) {
            return Err(Error::Dimension("dual function size differs from the grid".into()));
        }
        for x in 0..geometry.len() {
            let s: f64 = law.weights.iter().zip(&f).map(|(w, fk)| w * fk[x]).sum();
            if s.abs() > ZERO_SUM_TOL {
                return Err(Error::Constraint(format!(
                    "weighted sum {s:e} at grid point {:?}",
                    geometry.center(x)
                )));
            }
        }
        Ok(Self { law, geometry, f })
    }

    pub fn zero(law: ParamLaw, geometry: GridGeometry) -> Self {
        let f = vec![vec![0.0; geometry.len()]; law.len()];
        Self { law, geometry, f }
    }

    pub fn law(&self) -> &ParamLaw {
        &self.law
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn function(&self, k: usize) -> GridFunction {
        GridFunction { geometry: self.geometry.clone(), values: self.f[k].clone() }
    }

    pub fn values(&self, k: usize) -> &[f64] {
        &self.f[k]
    }

    /// `f_k + c_k`; the constants must have zero weighted sum.
    pub fn add_constants(&self, c: &[f64]) -> Result<Self> {
        if c.len() != self.f.len() {
            return Err(Error::Dimension("one constant per node".into()));
        }
        let f = self.f.iter().zip(c).map(|(fk, ck)| fk.iter().map(|v| v + ck).collect()).collect();
        Self::new(self.law.clone(), self.geometry.clone(), f)
    }

    /// Shift each `f_k` so it vanishes at the origin, or at the box center
    /// when the origin lies outside the grid.
    pub fn normalized(&self) -> Result<Self> {
        let bounds = self.geometry.bounds();
        let origin = vec![0.0; self.geometry.dim()];
        let anchor = if bounds.contains(&origin) { origin } else { bounds.center() };
        let cell = self.geometry.locate(&anchor).expect("anchor inside the grid");
        let c: Vec<f64> = self.f.iter().map(|fk| -fk[cell]).collect();
        self.add_constants(&c)
    }
}

fn half_w2sq(nu: &DiscreteMeasure, mu: &DiscreteMeasure) -> Result<f64> {
    let d2 = if nu.dim() == 1 { w2sq_1d(nu, mu)? } else { w2sq_lp(nu, mu)?.cost };
    Ok(0.5 * d2)
}

/// `J(ν) = Σ_k p_k · ½ W₂²(ν, μ_θk)` on the quadrature nodes.
pub fn primal_objective(
    nu: &DiscreteMeasure,
    family: &DeformableFamily,
    law: &ParamLaw,
    scheme: &MemberScheme,
) -> Result<f64> {
    let terms: Vec<f64> = (0..law.len())
        .into_par_iter()
        .map(|k| {
            if law.probs[k] == 0.0 {
                return Ok(0.0);
            }
            let mu = family.member(&law.nodes[k], scheme)?;
            Ok(law.probs[k] * half_w2sq(nu, &mu)?)
        })
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum())
}

/// `Σ_k w_k Σ_x S_{ĝ_k} f_k(x) μ_θk(x)`.
pub fn dual_objective(df: &DualFamily, family: &DeformableFamily, scheme: &MemberScheme) -> Result<f64> {
    let law = df.law();
    let on_grid = matches!(scheme, MemberScheme::Grid(g) if g.approx_eq(df.geometry()));
    let terms: Vec<f64> = (0..law.len())
        .into_par_iter()
        .map(|k| dual_term(df, family, scheme, on_grid, k))
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum())
}

fn dual_term(df: &DualFamily, family: &DeformableFamily, scheme: &MemberScheme, on_grid: bool, k: usize) -> Result<f64> {
    let law = df.law();
    let f = df.function(k);
    let gk = law.density[k];
    if gk == 0.0 {
        // S_0 f ≡ −max f.
        let m = f.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        return Ok(-law.weights[k] * m);
    }
    let inner = if on_grid {
        let map = family.map_at(&law.nodes[k])?;
        let q = family.image_density(&map, Some(df.geometry()))?;
        let s = c_transform(&f, gk)?;
        s.values().iter().zip(q.masses()).map(|(a, m)| a * m).sum::<f64>()
    } else {
        let mu = family.member(&law.nodes[k], scheme)?;
        let s = c_transform_at(&f, gk, mu.points())?;
        s.iter().zip(mu.weights()).map(|(a, w)| a * w).sum::<f64>()
    };
    Ok(law.weights[k] * inner)
}

/// `J(ν) − J*(f)`.
pub fn duality_gap(
    nu: &DiscreteMeasure,
    df: &DualFamily,
    family: &DeformableFamily,
    scheme: &MemberScheme,
) -> Result<f64> {
    Ok(primal_objective(nu, family, df.law(), scheme)? - dual_objective(df, family, scheme)?)
}

/// Per-node contributions `(p_k · ½ W₂²(ν, μ_θk), w_k Σ S f_k μ_θk)`; they sum to the two objectives.
pub fn node_terms(
    nu: &DiscreteMeasure,
    df: &DualFamily,
    family: &DeformableFamily,
    scheme: &MemberScheme,
) -> Result<Vec<(f64, f64)>> {
    let law = df.law();
    let on_grid = matches!(scheme, MemberScheme::Grid(g) if g.approx_eq(df.geometry()));
    (0..law.len())
        .into_par_iter()
        .map(|k| {
            let primal = if law.probs[k] == 0.0 {
                0.0
            } else {
                law.probs[k] * half_w2sq(nu, &family.member(&law.nodes[k], scheme)?)?
            };
            Ok((primal, dual_term(df, family, scheme, on_grid, k)?))
        })
        .collect()
}

fn require_grid_dim(family: &DeformableFamily) -> Result<()> {
    if family.dim() > 2 {
        Err(Error::Family("dual grid functions need dimension 1 or 2".into()))
    } else {
        Ok(())
    }
}

/// `f_θ(x) = −(ĝ(θ)/2)⟨(Ā_θ − I)x, x⟩ − ĝ(θ)⟨b̄_θ, x⟩`.
pub fn affine_dual_maximizer(
    family: &DeformableFamily,
    law: &ParamLaw,
    theta: &[f64],
    geometry: &GridGeometry,
) -> Result<GridFunction> {
    require_grid_dim(family)?;
    let mean = family.mean_map(law)?;
    let gk = law.density_at(family.g(theta));
    quadratic_function(family, &mean, theta, gk, geometry)
}

fn quadratic_function(
    family: &DeformableFamily,
    mean: &crate::measures::AffineMap,
    theta: &[f64],
    gk: f64,
    geometry: &GridGeometry,
) -> Result<GridFunction> {
    let (a, b) = family.centered_params(theta, mean)?;
    let d = family.dim();
    let m = &a - nalgebra::DMatrix::<f64>::identity(d, d);
    GridFunction::from_fn(geometry.clone(), |x| {
        let xv = DVector::from_column_slice(x);
        -0.5 * gk * (&m * &xv).dot(&xv) - gk * b.dot(&xv)
    })
}

/// Closed-form maximizer at every quadrature node.
pub fn affine_dual_family(family: &DeformableFamily, law: &ParamLaw, geometry: &GridGeometry) -> Result<DualFamily> {
    require_grid_dim(family)?;
    let mean = family.mean_map(law)?;
    let f = (0..law.len())
        .map(|k| quadratic_function(family, &mean, &law.nodes[k], law.density[k], geometry).map(|g| g.values))
        .collect::<Result<_>>()?;
    DualFamily::new(law.clone(), geometry.clone(), f)
}

/// `f_θ(x) = −ĝ(θ)⟨θ − Eθ, x⟩` for shift families.
pub fn shift_dual_family(family: &DeformableFamily, law: &ParamLaw, geometry: &GridGeometry) -> Result<DualFamily> {
    if family.kind() != FamilyKind::Shift {
        return Err(Error::Family("linear maximizer applies to shift families only".into()));
    }
    let mean = law.mean();
    let f = (0..law.len())
        .map(|k| {
            let gk = law.density[k];
            let c: Vec<f64> = law.nodes[k].iter().zip(&mean).map(|(t, m)| t - m).collect();
            (0..geometry.len())
                .map(|i| -gk * geometry.center(i).iter().zip(&c).map(|(x, ci)| x * ci).sum::<f64>())
                .collect()
        })
        .collect();
    DualFamily::new(law.clone(), geometry.clone(), f)
}

#[derive(Debug, Clone)]
pub struct BrenierRecovery {
    /// `φ(x) = ½|x|² − S f(x)/ĝ` on the grid.
    pub potential: GridFunction,
    /// Image of the member measure under the discrete gradient of the potential.
    pub pushed: DiscreteMeasure,
    /// Smallest axis-aligned second difference of the potential.
    pub min_second_difference: f64,
    pub convex: bool,
}

fn second_differences_min(phi: &GridFunction) -> f64 {
    let g = phi.geometry();
    let v = phi.values();
    let mut min = f64::INFINITY;
    for i in 0..g.len() {
        let idx = g.multi_index(i);
        for k in 0..g.dim() {
            if idx[k] == 0 || idx[k] + 1 >= g.shape()[k] {
                continue;
            }
            let mut lo = idx.clone();
            lo[k] -= 1;
            let mut hi = idx.clone();
            hi[k] += 1;
            let dd = v[g.flat_index(&hi)] - 2.0 * v[i] + v[g.flat_index(&lo)];
            min = min.min(dd);
        }
    }
    min
}

fn gradient(phi: &GridFunction, cell: usize) -> Vec<f64> {
    let g = phi.geometry();
    let v = phi.values();
    let idx = g.multi_index(cell);
    (0..g.dim())
        .map(|k| {
            let n = g.shape()[k];
            let h = g.cell_size()[k];
            if n == 1 {
                return 0.0;
            }
            let at = |i: usize| {
                let mut j = idx.clone();
                j[k] = i;
                v[g.flat_index(&j)]
            };
            if idx[k] == 0 {
                (at(1) - at(0)) / h
            } else if idx[k] + 1 == n {
                (at(n - 1) - at(n - 2)) / h
            } else {
                (at(idx[k] + 1) - at(idx[k] - 1)) / (2.0 * h)
            }
        })
        .collect()
}

/// Potential of node `k` and the push-forward of its member by the potential's gradient.
pub fn brenier_recover(
    df: &DualFamily,
    family: &DeformableFamily,
    k: usize,
    scheme: &MemberScheme,
) -> Result<BrenierRecovery> {
    let law = df.law();
    if k >= law.len() {
        return Err(Error::Range(format!("node {k} of {}", law.len())));
    }
    let gk = law.density[k];
    if !(gk > 0.0) {
        return Err(Error::Family("density must be positive at the recovery node".into()));
    }
    let geom = df.geometry();
    let s = c_transform(&df.function(k), gk)?;
    let values = (0..geom.len())
        .map(|i| 0.5 * geom.center(i).iter().map(|x| x * x).sum::<f64>() - s.values()[i] / gk)
        .collect();
    let potential = GridFunction::new(geom.clone(), values)?;
    let min_second_difference = second_differences_min(&potential);
    let convex = min_second_difference >= -CONVEXITY_TOL;
    if !convex {
        log::warn!("potential at node {k} is not convex: second difference {min_second_difference:e}");
    }
    let mu = family.member(&law.nodes[k], scheme)?;
    let mut points = Vec::with_capacity(mu.points().len());
    for (p, _) in mu.iter() {
        let cell = geom
            .locate(p)
            .ok_or_else(|| Error::Domain(format!("atom {p:?} outside the dual grid")))?;
        points.extend(gradient(&potential, cell));
    }
    let pushed = DiscreteMeasure::new(family.omega().clone(), points, mu.weights().to_vec())?;
    Ok(BrenierRecovery { potential, pushed, min_second_difference, convex })
}

/// Objectives at the population barycenter and the closed-form dual family.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormCheck {
    pub primal: f64,
    pub dual: f64,
    /// Per-node `(primal, dual)` contributions.
    pub terms: Vec<(f64, f64)>,
}

impl ClosedFormCheck {
    pub fn gap(&self) -> f64 {
        self.primal - self.dual
    }

    pub fn relative_gap(&self) -> f64 {
        self.gap().abs() / self.primal.abs().max(f64::MIN_POSITIVE)
    }
}

/// Shift maximizer for shift families, the quadratic maximizer otherwise.
pub fn closed_form_dual(family: &DeformableFamily, law: &ParamLaw, geometry: &GridGeometry) -> Result<DualFamily> {
    if family.kind() == FamilyKind::Shift {
        shift_dual_family(family, law, geometry)
    } else {
        affine_dual_family(family, law, geometry)
    }
}

/// `W₂(∇φ_k # μ_θk, target)`: exact in 1D, by the LP otherwise.
pub fn pushforward_error(
    df: &DualFamily,
    family: &DeformableFamily,
    k: usize,
    scheme: &MemberScheme,
    target: &DiscreteMeasure,
) -> Result<f64> {
    let rec = brenier_recover(df, family, k, scheme)?;
    let d2 = if family.dim() == 1 { w2sq_1d(&rec.pushed, target)? } else { w2sq_lp(&rec.pushed, target)?.cost };
    Ok(d2.max(0.0).sqrt())
}

/// Evaluates both objectives for `ν = φ̄ # μ0` and the closed-form maximizers on `geometry`.
pub fn closed_form_check(
    family: &DeformableFamily,
    law: &ParamLaw,
    geometry: &GridGeometry,
    scheme: &MemberScheme,
) -> Result<ClosedFormCheck> {
    let df = closed_form_dual(family, law, geometry)?;
    let nu = family.image_measure(&family.mean_map(law)?, scheme)?;
    let terms = node_terms(&nu, &df, family, scheme)?;
    Ok(ClosedFormCheck {
        primal: terms.iter().map(|t| t.0).sum(),
        dual: terms.iter().map(|t| t.1).sum(),
        terms,
    })
}
