//! Probability measures, grids, affine maps and their file formats.

pub(crate) mod affine;
mod grid;
pub mod io;
mod plan;

pub use affine::AffineMap;
pub use grid::{DiscretizeMode, GridDensity, GridGeometry, MASS_TOL};
pub use plan::TransportPlan;

use crate::error::{Error, Result};

/// Weights below this are dropped at construction.
pub const PRUNE_BELOW: f64 = 1e-15;
/// Input weight sums within this of 1 are renormalized; larger drift is an error.
pub const RENORMALIZE_TOL: f64 = 1e-6;
/// Weight sums this close to 1 are kept bit-for-bit.
pub const SUM_TOL: f64 = 1e-12;

/// Axis-aligned box `[lo_i, hi_i]` in R^d.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl DomainBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::Dimension(format!(
                "box bounds have lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for (i, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if !l.is_finite() || !h.is_finite() || l > h {
                return Err(Error::Invariant(format!("box axis {i}: [{l}, {h}]")));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn from_intervals(intervals: &[[f64; 2]]) -> Result<Self> {
        Self::new(
            intervals.iter().map(|iv| iv[0]).collect(),
            intervals.iter().map(|iv| iv[1]).collect(),
        )
    }

    pub fn cube(d: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; d], vec![hi; d])
    }

    /// Smallest box containing all `points` (flat, `dim` coordinates each).
    pub fn bounding(points: &[f64], dim: usize) -> Result<Self> {
        if dim == 0 || points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::Dimension("cannot bound an empty point set".into()));
        }
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for p in points.chunks_exact(dim) {
            for k in 0..dim {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        Self::new(lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn intervals(&self) -> Vec<[f64; 2]> {
        self.lo.iter().zip(&self.hi).map(|(&l, &h)| [l, h]).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    /// Euclidean diameter.
    pub fn diameter(&self) -> f64 {
        self.widths().iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    fn slack(&self, k: usize) -> f64 {
        1e-9 * (1.0 + self.hi[k].abs().max(self.lo[k].abs()))
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && (0..self.dim()).all(|k| {
                let s = self.slack(k);
                p[k] >= self.lo[k] - s && p[k] <= self.hi[k] + s
            })
    }

    pub fn contains_box(&self, other: &DomainBox) -> bool {
        self.contains(&other.lo) && self.contains(&other.hi)
    }

    pub fn approx_eq(&self, other: &DomainBox) -> bool {
        self.dim() == other.dim()
            && (0..self.dim()).all(|k| {
                let s = self.slack(k);
                (self.lo[k] - other.lo[k]).abs() <= s && (self.hi[k] - other.hi[k]).abs() <= s
            })
    }

    pub fn hull(&self, other: &DomainBox) -> Result<DomainBox> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension(format!(
                "boxes of dimension {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(DomainBox {
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| a.min(*b)).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| a.max(*b)).collect(),
        })
    }

    /// Scale about the center by `factor`.
    pub fn inflate(&self, factor: f64) -> DomainBox {
        let c = self.center();
        DomainBox {
            lo: self.lo.iter().zip(&c).map(|(l, c)| c + (l - c) * factor).collect(),
            hi: self.hi.iter().zip(&c).map(|(h, c)| c + (h - c) * factor).collect(),
        }
    }

    pub fn translate(&self, shift: &[f64]) -> DomainBox {
        DomainBox {
            lo: self.lo.iter().zip(shift).map(|(l, s)| l + s).collect(),
            hi: self.hi.iter().zip(shift).map(|(h, s)| h + s).collect(),
        }
    }

    /// The 2^d corners.
    pub fn corners(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..1usize << d)
            .map(|mask| {
                (0..d)
                    .map(|k| if mask >> k & 1 == 1 { self.hi[k] } else { self.lo[k] })
                    .collect()
            })
            .collect()
    }
}

pub(crate) fn require_same_domain(a: &DomainBox, b: &DomainBox) -> Result<()> {
    if a.approx_eq(b) {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "declared domains differ: {:?} vs {:?}",
            a.intervals(),
            b.intervals()
        )))
    }
}

/// Weighted point cloud with an explicit compact domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    domain: DomainBox,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// `points` is flat, `domain.dim()` coordinates per atom.
    pub fn new(domain: DomainBox, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let dim = domain.dim();
        if points.len() != weights.len() * dim {
            return Err(Error::Dimension(format!(
                "{} coordinates for {} weights in dimension {dim}",
                points.len(),
                weights.len()
            )));
        }
        if weights.is_empty() {
            return Err(Error::Invariant("measure has no atoms".into()));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Invariant(format!("weight {i} is {w}")));
            }
        }
        for (i, p) in points.chunks_exact(dim).enumerate() {
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::Invariant(format!("atom {i} is not finite")));
            }
            if !domain.contains(p) {
                return Err(Error::Domain(format!(
                    "atom {i} at {p:?} outside {:?}",
                    domain.intervals()
                )));
            }
        }
        let mut weights = weights;
        let mut points = points;
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > RENORMALIZE_TOL {
            return Err(Error::Invariant(format!("weights sum to {total}")));
        }
        if weights.iter().any(|&w| w < PRUNE_BELOW) {
            let keep: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] >= PRUNE_BELOW).collect();
            if keep.is_empty() {
                return Err(Error::Invariant("all weights are negligible".into()));
            }
            points = keep
                .iter()
                .flat_map(|&i| points[i * dim..(i + 1) * dim].iter().copied())
                .collect();
            weights = keep.iter().map(|&i| weights[i]).collect();
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            weights.iter_mut().for_each(|w| *w /= total);
        }
        Ok(Self { dim, domain, points, weights })
    }

    pub fn from_rows(domain: DomainBox, rows: &[Vec<f64>], weights: Vec<f64>) -> Result<Self> {
        let d = domain.dim();
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::Dimension(format!("point {r:?} in dimension {d}")));
        }
        Self::new(domain, rows.concat(), weights)
    }

    /// Equal weights `1/m`.
    pub fn uniform(domain: DomainBox, points: Vec<f64>) -> Result<Self> {
        let d = domain.dim();
        let m = if d == 0 { 0 } else { points.len() / d };
        if m == 0 {
            return Err(Error::Invariant("measure has no atoms".into()));
        }
        Self::new(domain, points, vec![1.0 / m as f64; m])
    }

    pub fn dirac(domain: DomainBox, point: Vec<f64>) -> Result<Self> {
        Self::new(domain, point, vec![1.0])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Flat coordinates.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point_rows(&self) -> Vec<Vec<f64>> {
        self.points.chunks_exact(self.dim).map(|p| p.to_vec()).collect()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.points.chunks_exact(self.dim).zip(self.weights.iter().copied())
    }

    /// Same atoms, different declared domain.
    pub fn with_domain(&self, domain: DomainBox) -> Result<Self> {
        Self::new(domain, self.points.clone(), self.weights.clone())
    }

    pub fn has_equal_weights(&self) -> bool {
        let u = 1.0 / self.len() as f64;
        self.weights.iter().all(|w| (w - u).abs() <= 1e-12)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (p, w) in self.iter() {
            for k in 0..self.dim {
                m[k] += w * p[k];
            }
        }
        m
    }

    /// Shift atoms and domain by `shift`.
    pub fn translate(&self, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.dim {
            return Err(Error::Dimension("shift length".into()));
        }
        let points = self
            .points
            .chunks_exact(self.dim)
            .flat_map(|p| p.iter().zip(shift).map(|(x, s)| x + s).collect::<Vec<_>>())
            .collect();
        Self::new(self.domain.translate(shift), points, self.weights.clone())
    }

    /// Image under an affine map; the result is declared on `domain`.
    pub fn pushforward(&self, map: &AffineMap, domain: &DomainBox) -> Result<Self> {
        if map.dim() != self.dim || domain.dim() != self.dim {
            return Err(Error::Dimension(format!(
                "map of dimension {} applied to measure of dimension {}",
                map.dim(),
                self.dim
            )));
        }
        let points = self.points.chunks_exact(self.dim).flat_map(|p| map.apply(p)).collect();
        Self::new(domain.clone(), points, self.weights.clone())
    }

    /// Mixture `lambda * self + (1 - lambda) * other` with concatenated atoms.
    pub fn mix(&self, other: &DiscreteMeasure, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Range(format!("mixing weight {lambda}")));
        }
        require_same_domain(&self.domain, &other.domain)?;
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        let mut weights: Vec<f64> = self.weights.iter().map(|w| w * lambda).collect();
        weights.extend(other.weights.iter().map(|w| w * (1.0 - lambda)));
        Self::new(self.domain.clone(), points, weights)
    }

    /// Merge atoms with identical coordinates. Returns the merged measure and,
    /// for each original atom, the index of its merged atom.
    pub fn merge_duplicates(&self) -> (DiscreteMeasure, Vec<usize>) {
        let d = self.dim;
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            self.point(a)
                .iter()
                .zip(self.point(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut group = vec![0usize; self.len()];
        let mut points: Vec<f64> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        let mut prev: Option<usize> = None;
        for &i in &order {
            if prev.is_none_or(|p| self.point(p) != self.point(i)) {
                points.extend_from_slice(self.point(i));
                weights.push(0.0);
            }
            *weights.last_mut().unwrap() += self.weights[i];
            group[i] = weights.len() - 1;
            prev = Some(i);
        }
        let merged = DiscreteMeasure { dim: d, domain: self.domain.clone(), points, weights };
        (merged, group)
    }
}

/// Either kind of measure, as read from a file.
#[derive(Debug, Clone, PartialEq)]
pub enum Measure {
    Discrete(DiscreteMeasure),
    Grid(GridDensity),
}

impl Measure {
    pub fn dim(&self) -> usize {
        match self {
            Measure::Discrete(m) => m.dim(),
            Measure::Grid(g) => g.dim(),
        }
    }

    pub fn domain(&self) -> DomainBox {
        match self {
            Measure::Discrete(m) => m.domain().clone(),
            Measure::Grid(g) => g.geometry().bounds(),
        }
    }

    /// Discrete view: grids become atoms at their cell centers.
    pub fn to_discrete(&self) -> Result<DiscreteMeasure> {
        match self {
            Measure::Discrete(m) => Ok(m.clone()),
            Measure::Grid(g) => g.cell_center_measure(),
        }
    }

    pub fn as_discrete(&self) -> Option<&DiscreteMeasure> {
        match self {
            Measure::Discrete(m) => Some(m),
            Measure::Grid(_) => None,
        }
    }

    pub fn as_grid(&self) -> Option<&GridDensity> {
        match self {
            Measure::Grid(g) => Some(g),
            Measure::Discrete(_) => None,
        }
    }
}

impl From<DiscreteMeasure> for Measure {
    fn from(m: DiscreteMeasure) -> Self {
        Measure::Discrete(m)
    }
}

impl From<GridDensity> for Measure {
    fn from(g: GridDensity) -> Self {
        Measure::Grid(g)
    }
}
