use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AffineMap, DiscreteMeasure, DomainBox};
use crate::error::{Error, Result};

/// Largest accepted mass drift when a density is resampled onto a new grid.
pub const MASS_TOL: f64 = 1e-3;
/// Stored densities integrate to 1 within this.
pub const GRID_MASS_TOL: f64 = 1e-9;

const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Regular axis-aligned grid in dimension 1 or 2, cells stored row-major
/// (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct GridGeometry {
    origin: Vec<f64>,
    cell_size: Vec<f64>,
    shape: Vec<usize>,
}

impl GridGeometry {
    pub fn new(origin: Vec<f64>, cell_size: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        let d = origin.len();
        if !(1..=2).contains(&d) || cell_size.len() != d || shape.len() != d {
            return Err(Error::Dimension(format!(
                "grid needs dimension 1 or 2 with matching origin/cell_size/shape, got {}/{}/{}",
                origin.len(),
                cell_size.len(),
                shape.len()
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::Invariant("grid origin is not finite".into()));
        }
        if cell_size.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(Error::Invariant(format!("cell sizes must be positive: {cell_size:?}")));
        }
        if shape.contains(&0) {
            return Err(Error::Invariant("grid has an empty axis".into()));
        }
        Ok(Self { origin, cell_size, shape })
    }

    /// `cells[k]` equal cells along axis k spanning `bounds`.
    pub fn covering(bounds: &DomainBox, cells: &[usize]) -> Result<Self> {
        if cells.len() != bounds.dim() {
            return Err(Error::Dimension("cell counts do not match the box".into()));
        }
        let widths = bounds.widths();
        Self::new(
            bounds.lo().to_vec(),
            widths.iter().zip(cells).map(|(w, &n)| w / n as f64).collect(),
            cells.to_vec(),
        )
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn cell_size(&self) -> &[f64] {
        &self.cell_size
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_size.iter().product()
    }

    /// Largest cell edge.
    pub fn max_cell_size(&self) -> f64 {
        self.cell_size.iter().copied().fold(0.0, f64::max)
    }

    pub fn bounds(&self) -> DomainBox {
        let hi = (0..self.dim())
            .map(|k| self.origin[k] + self.cell_size[k] * self.shape[k] as f64)
            .collect();
        DomainBox::new(self.origin.clone(), hi).expect("valid grid bounds")
    }

    pub fn axis_centers(&self, k: usize) -> Vec<f64> {
        (0..self.shape[k])
            .map(|i| self.origin[k] + (i as f64 + 0.5) * self.cell_size[k])
            .collect()
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        match self.dim() {
            1 => vec![flat],
            _ => vec![flat / self.shape[1], flat % self.shape[1]],
        }
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        match self.dim() {
            1 => idx[0],
            _ => idx[0] * self.shape[1] + idx[1],
        }
    }

    pub fn center(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(k, &i)| self.origin[k] + (i as f64 + 0.5) * self.cell_size[k])
            .collect()
    }

    /// Flat coordinates of all cell centers in storage order.
    pub fn centers(&self) -> Vec<f64> {
        (0..self.len()).flat_map(|i| self.center(i)).collect()
    }

    /// Lower and upper corner of a cell.
    pub fn cell_box(&self, flat: usize) -> (Vec<f64>, Vec<f64>) {
        let idx = self.multi_index(flat);
        let lo: Vec<f64> = idx
            .iter()
            .enumerate()
            .map(|(k, &i)| self.origin[k] + i as f64 * self.cell_size[k])
            .collect();
        let hi = lo.iter().zip(&self.cell_size).map(|(l, h)| l + h).collect();
        (lo, hi)
    }

    /// Axis index of coordinate `x` on axis `k`; the upper edge belongs to the last cell.
    pub fn locate_axis(&self, k: usize, x: f64) -> Option<usize> {
        let t = (x - self.origin[k]) / self.cell_size[k];
        let n = self.shape[k];
        if !(t >= 0.0) || t > n as f64 {
            return None;
        }
        Some((t.floor() as usize).min(n - 1))
    }

    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim() {
            return None;
        }
        let idx: Option<Vec<usize>> = (0..self.dim()).map(|k| self.locate_axis(k, x[k])).collect();
        idx.map(|i| self.flat_index(&i))
    }

    pub fn approx_eq(&self, other: &GridGeometry) -> bool {
        let close = |a: &[f64], b: &[f64]| {
            a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + x.abs().max(y.abs())))
        };
        self.shape == other.shape
            && close(&self.origin, &other.origin)
            && close(&self.cell_size, &other.cell_size)
    }
}

/// How a density is turned into atoms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscretizeMode {
    /// `m` equal bins per axis, atoms at bin centers carrying the bin's mass.
    CellCenters,
    /// `m` i.i.d. draws with equal weights.
    Samples { seed: u64 },
}

/// Piecewise-constant probability density on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    geometry: GridGeometry,
    values: Vec<f64>,
}

impl GridDensity {
    /// Values must integrate to 1 up to `RENORMALIZE_TOL`; small drift is renormalized.
    pub fn new(geometry: GridGeometry, values: Vec<f64>) -> Result<Self> {
        check_values(&geometry, &values)?;
        let mass: f64 = values.iter().sum::<f64>() * geometry.cell_volume();
        if (mass - 1.0).abs() > super::RENORMALIZE_TOL {
            return Err(Error::Invariant(format!("density integrates to {mass}")));
        }
        let mut values = values;
        if (mass - 1.0).abs() > GRID_MASS_TOL {
            values.iter_mut().for_each(|v| *v /= mass);
        }
        Ok(Self { geometry, values })
    }

    /// Normalize arbitrary nonnegative values to a probability density.
    pub fn from_unnormalized(geometry: GridGeometry, values: Vec<f64>) -> Result<Self> {
        check_values(&geometry, &values)?;
        let mass: f64 = values.iter().sum::<f64>() * geometry.cell_volume();
        if !(mass > 0.0) {
            return Err(Error::Invariant("density has no mass".into()));
        }
        let values = values.into_iter().map(|v| v / mass).collect();
        Ok(Self { geometry, values })
    }

    /// Cell averages of a nonnegative function (5-point Gauss rule per axis), normalized.
    pub fn from_fn(geometry: GridGeometry, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let d = geometry.dim();
        let values = (0..geometry.len())
            .map(|i| {
                let (lo, hi) = geometry.cell_box(i);
                let half: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (h - l)).collect();
                let mid: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (h + l)).collect();
                let mut acc = 0.0;
                let mut x = mid.clone();
                if d == 1 {
                    for (n, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
                        x[0] = mid[0] + half[0] * n;
                        acc += w * f(&x);
                    }
                    acc / 2.0
                } else {
                    for (n0, w0) in GL_NODES.iter().zip(GL_WEIGHTS) {
                        for (n1, w1) in GL_NODES.iter().zip(GL_WEIGHTS) {
                            x[0] = mid[0] + half[0] * n0;
                            x[1] = mid[1] + half[1] * n1;
                            acc += w0 * w1 * f(&x);
                        }
                    }
                    acc / 4.0
                }
            })
            .map(|v: f64| v.max(0.0))
            .collect();
        Self::from_unnormalized(geometry, values)
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.values[i] * self.geometry.cell_volume()
    }

    pub fn masses(&self) -> Vec<f64> {
        let v = self.geometry.cell_volume();
        self.values.iter().map(|x| x * v).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.geometry.cell_volume()
    }

    /// Density value at `x`, zero outside the grid.
    pub fn pdf(&self, x: &[f64]) -> f64 {
        self.geometry.locate(x).map_or(0.0, |i| self.values[i])
    }

    pub fn mean(&self) -> Vec<f64> {
        let d = self.dim();
        let mut m = vec![0.0; d];
        for i in 0..self.geometry.len() {
            let w = self.mass(i);
            if w > 0.0 {
                for (k, c) in self.geometry.center(i).into_iter().enumerate() {
                    m[k] += w * c;
                }
            }
        }
        m
    }

    /// Exact `∫|x|² dμ` for the piecewise-constant density.
    pub fn second_moment(&self) -> f64 {
        let within: f64 = self.geometry.cell_size.iter().map(|h| h * h / 12.0).sum();
        (0..self.geometry.len())
            .map(|i| {
                let w = self.mass(i);
                if w == 0.0 {
                    0.0
                } else {
                    w * (self.geometry.center(i).iter().map(|c| c * c).sum::<f64>() + within)
                }
            })
            .sum()
    }

    /// Bounding box of cells with positive mass.
    pub fn support_bounds(&self) -> DomainBox {
        let d = self.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for i in 0..self.geometry.len() {
            if self.values[i] > 0.0 {
                let (l, h) = self.geometry.cell_box(i);
                for k in 0..d {
                    lo[k] = lo[k].min(l[k]);
                    hi[k] = hi[k].max(h[k]);
                }
            }
        }
        DomainBox::new(lo, hi).expect("density has mass")
    }

    /// Atoms at the centers of cells with positive mass, declared on the grid box.
    pub fn cell_center_measure(&self) -> Result<DiscreteMeasure> {
        let (points, weights) = self.cell_center_atoms();
        DiscreteMeasure::new(self.geometry.bounds(), points, weights)
    }

    /// Flat centers and masses of cells with positive mass, renormalized.
    pub(crate) fn cell_center_atoms(&self) -> (Vec<f64>, Vec<f64>) {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for i in 0..self.geometry.len() {
            let w = self.mass(i);
            if w > 0.0 {
                points.extend(self.geometry.center(i));
                weights.push(w);
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        (points, weights)
    }

    /// `m` atoms per axis (cell-center mode) or `m` samples.
    pub fn discretize(&self, m: usize, mode: DiscretizeMode) -> Result<DiscreteMeasure> {
        if m == 0 {
            return Err(Error::Range("discretization needs m >= 1".into()));
        }
        let bounds = self.geometry.bounds();
        match mode {
            DiscretizeMode::CellCenters => {
                let bins = GridGeometry::covering(&bounds, &vec![m; self.dim()])?;
                let mut mass = vec![0.0; bins.len()];
                for i in 0..self.geometry.len() {
                    let w = self.mass(i);
                    if w > 0.0 {
                        let c = self.geometry.center(i);
                        let j = bins.locate(&c).expect("cell center inside grid");
                        mass[j] += w;
                    }
                }
                let total: f64 = mass.iter().sum();
                let mut points = Vec::new();
                let mut weights = Vec::new();
                for (j, w) in mass.into_iter().enumerate() {
                    if w > 0.0 {
                        points.extend(bins.center(j));
                        weights.push(w / total);
                    }
                }
                DiscreteMeasure::new(bounds, points, weights)
            }
            DiscretizeMode::Samples { seed } => {
                let masses = self.masses();
                let mut cum = Vec::with_capacity(masses.len());
                let mut acc = 0.0;
                for w in &masses {
                    acc += w;
                    cum.push(acc);
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut points = Vec::with_capacity(m * self.dim());
                for _ in 0..m {
                    let u: f64 = rng.random::<f64>() * acc;
                    let mut i = cum.partition_point(|&c| c <= u).min(masses.len() - 1);
                    while masses[i] == 0.0 {
                        i -= 1;
                    }
                    let (lo, hi) = self.geometry.cell_box(i);
                    for k in 0..self.dim() {
                        points.push(lo[k] + rng.random::<f64>() * (hi[k] - lo[k]));
                    }
                }
                DiscreteMeasure::uniform(bounds, points)
            }
        }
    }

    /// Image density under `map`. With a target grid the change-of-variables
    /// formula is evaluated at target cell centers and renormalized. Without
    /// one, diagonal maps give the exactly transformed grid and other maps a
    /// covering grid of the image with the same shape.
    pub fn pushforward(&self, map: &AffineMap, target: Option<&GridGeometry>) -> Result<GridDensity> {
        let d = self.dim();
        if map.dim() != d {
            return Err(Error::Dimension(format!(
                "map of dimension {} applied to grid of dimension {d}",
                map.dim()
            )));
        }
        let image = image_box(&self.support_bounds(), map)?;
        let target = match target {
            Some(t) => {
                if t.dim() != d {
                    return Err(Error::Dimension("target grid dimension".into()));
                }
                if !t.bounds().contains_box(&image) {
                    return Err(Error::Domain(format!(
                        "image support {:?} leaves the target box {:?}",
                        image.intervals(),
                        t.bounds().intervals()
                    )));
                }
                t.clone()
            }
            None => {
                if let Some(diag) = map.diagonal_positive() {
                    let origin = (0..d).map(|k| diag[k] * self.geometry.origin[k] + map.offset()[k]).collect();
                    let cell = (0..d).map(|k| diag[k] * self.geometry.cell_size[k]).collect();
                    let geometry = GridGeometry::new(origin, cell, self.geometry.shape.clone())?;
                    let det: f64 = diag.iter().product();
                    let values = self.values.iter().map(|v| v / det).collect();
                    return Ok(GridDensity { geometry, values });
                }
                GridGeometry::covering(&image, &self.geometry.shape)?
            }
        };
        let inv = map.inverse();
        let det_inv = 1.0 / map.determinant();
        let values: Vec<f64> = (0..target.len())
            .map(|i| det_inv * self.pdf(&inv.apply(&target.center(i))))
            .collect();
        let mass: f64 = values.iter().sum::<f64>() * target.cell_volume();
        if !(mass > 0.0) {
            return Err(Error::Domain("image density misses every target cell".into()));
        }
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::Invariant(format!(
                "resampled mass {mass} differs from 1 by more than {MASS_TOL}; refine the grids"
            )));
        }
        log::debug!("pushforward renormalization factor {}", 1.0 / mass);
        let values = values.into_iter().map(|v| v / mass).collect();
        Ok(GridDensity { geometry: target, values })
    }

    /// Resample onto another grid (identity push-forward).
    pub fn resample(&self, target: &GridGeometry) -> Result<GridDensity> {
        self.pushforward(&AffineMap::identity(self.dim()), Some(target))
    }

    pub fn l1_distance(&self, other: &GridDensity) -> Result<f64> {
        if !self.geometry.approx_eq(&other.geometry) {
            return Err(Error::GridMismatch("L1 distance needs identical grids".into()));
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum::<f64>()
            * self.geometry.cell_volume())
    }
}

fn check_values(geometry: &GridGeometry, values: &[f64]) -> Result<()> {
    if values.len() != geometry.len() {
        return Err(Error::Dimension(format!(
            "{} values for a grid of {} cells",
            values.len(),
            geometry.len()
        )));
    }
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Invariant(format!("density value {i} is {v}")));
    }
    Ok(())
}

/// Bounding box of the image of a box under an affine map.
pub(crate) fn image_box(b: &DomainBox, map: &AffineMap) -> Result<DomainBox> {
    let pts: Vec<f64> = b.corners().iter().flat_map(|c| map.apply(c)).collect();
    DomainBox::bounding(&pts, b.dim())
}
