//! Random-measure families generated by affine deformations of a template.

pub mod density;
pub mod family;
pub mod param_map;
pub mod quadrature;
pub mod spec;
pub mod templates;

pub use density::{DensityKind, WeightDensity};
pub use family::{DeformableFamily, FamilyKind, MemberScheme};
pub use param_map::ParamMap;
pub use quadrature::{ParamLaw, Quadrature, DEFAULT_NODES};
pub use spec::{load_family, FamilySpec};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::measures::{AffineMap, DomainBox, GridDensity, GridGeometry, Measure};

/// Rejection sampling gives up below this acceptance rate.
pub const MIN_ACCEPTANCE: f64 = 1e-4;
const MIN_ATTEMPTS: usize = 10_000;

/// `n` i.i.d. parameters drawn from the family's density.
pub fn sample_theta(family: &DeformableFamily, seed: u64, n: usize) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_theta_with(family.density(), &mut rng, n)
}

/// Rejection sampling from uniform proposals on the box.
pub fn sample_theta_with<R: Rng + ?Sized>(g: &WeightDensity, rng: &mut R, n: usize) -> Result<Vec<Vec<f64>>> {
    let b = g.theta_box();
    let (lo, widths) = (b.lo().to_vec(), b.widths());
    let bound = g.sup_bound();
    if !(bound > 0.0 && bound.is_finite()) {
        return Err(Error::Efficiency(format!("density bound {bound} is unusable")));
    }
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n {
        let theta: Vec<f64> = (0..b.dim()).map(|k| lo[k] + rng.random::<f64>() * widths[k]).collect();
        let u: f64 = rng.random();
        attempts += 1;
        if u * bound < g.eval(&theta) {
            out.push(theta);
        }
        if attempts >= MIN_ATTEMPTS && (out.len() as f64) < MIN_ACCEPTANCE * attempts as f64 {
            return Err(Error::Efficiency(format!(
                "accepted {} of {attempts} proposals",
                out.len()
            )));
        }
    }
    Ok(out)
}

/// Image of a template under an affine map. Discrete inputs keep their
/// declared domain (or the target grid's box); grids follow the density formula.
pub fn pushforward_affine(template: &Measure, map: &AffineMap, target: Option<&GridGeometry>) -> Result<Measure> {
    match template {
        Measure::Discrete(m) => {
            let domain = target.map_or_else(|| m.domain().clone(), |t| t.bounds());
            m.pushforward(map, &domain).map(Measure::Discrete)
        }
        Measure::Grid(g) => g.pushforward(map, target).map(Measure::Grid),
    }
}

pub fn family_mean_map(family: &DeformableFamily, quad: &Quadrature) -> Result<AffineMap> {
    family.mean_map(&family.law(quad)?)
}

/// `φ̄ # μ0`, exactly transformed when `target` is `None` and `Ā` is diagonal.
pub fn population_barycenter(
    family: &DeformableFamily,
    quad: &Quadrature,
    target: Option<&GridGeometry>,
) -> Result<GridDensity> {
    family.image_density(&family_mean_map(family, quad)?, target)
}

pub fn centered_params(
    family: &DeformableFamily,
    theta: &[f64],
    quad: &Quadrature,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    family.centered_params(theta, &family_mean_map(family, quad)?)
}

pub fn make_shift_family(template: GridDensity, g: DensityKind, theta_box: DomainBox) -> Result<DeformableFamily> {
    let d = template.dim();
    if theta_box.dim() != d {
        return Err(Error::Family(format!("shift family needs a {d}-dimensional parameter box")));
    }
    DeformableFamily::new(FamilyKind::Shift, WeightDensity::new(g, theta_box)?, ParamMap::shift(d), template)
}

/// `θ = (a, b)`, members `x -> a x + b` of a 1D template; the scale axis must be positive.
pub fn make_location_scale_1d(fbar: GridDensity, g: DensityKind, theta_box: DomainBox) -> Result<DeformableFamily> {
    if fbar.dim() != 1 || theta_box.dim() != 2 {
        return Err(Error::Family("location-scale family needs a 1D template and a 2D parameter box".into()));
    }
    DeformableFamily::new(
        FamilyKind::LocationScale,
        WeightDensity::new(g, theta_box)?,
        ParamMap::location_scale(),
        fbar,
    )
}

pub fn make_affine_family(
    phi: ParamMap,
    g: DensityKind,
    theta_box: DomainBox,
    template: GridDensity,
) -> Result<DeformableFamily> {
    DeformableFamily::new(FamilyKind::Affine, WeightDensity::new(g, theta_box)?, phi, template)
}
