//! Exact one-dimensional optimal transport through quantile functions.

mod quantile;

pub use quantile::QuantileFn;

use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure, DomainBox, GridDensity, Measure};

/// A probability measure on the real line.
pub trait Univariate {
    fn cdf(&self, x: f64) -> Result<f64>;
    fn quantile_fn(&self) -> Result<QuantileFn>;

    fn quantile(&self, y: f64) -> Result<f64> {
        self.quantile_fn()?.eval(y)
    }
}

fn require_1d(d: usize) -> Result<()> {
    if d == 1 {
        Ok(())
    } else {
        Err(Error::Dimension(format!("one-dimensional measure required, got dimension {d}")))
    }
}

impl Univariate for DiscreteMeasure {
    fn cdf(&self, x: f64) -> Result<f64> {
        require_1d(self.dim())?;
        // Read off the quantile's own breakpoints so both stay Galois-consistent.
        let q = self.quantile_fn()?;
        let k = q.left_values().partition_point(|&v| v <= x);
        Ok(if k == 0 { 0.0 } else { q.breakpoints()[k - 1] })
    }

    fn quantile_fn(&self) -> Result<QuantileFn> {
        require_1d(self.dim())?;
        let mut atoms: Vec<(f64, f64)> = self.iter().map(|(p, w)| (p[0], w)).collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == x => last.1 += w,
                _ => merged.push((x, w)),
            }
        }
        QuantileFn::from_segments(merged.into_iter().map(|(x, w)| (w, x, x)))
    }
}

impl Univariate for GridDensity {
    fn cdf(&self, x: f64) -> Result<f64> {
        require_1d(self.dim())?;
        let g = self.geometry();
        let (o, h) = (g.origin()[0], g.cell_size()[0]);
        let mut s = 0.0;
        for i in 0..g.len() {
            let lo = o + i as f64 * h;
            if x >= lo + h {
                s += self.mass(i);
            } else if x > lo {
                s += self.values()[i] * (x - lo);
            } else {
                break;
            }
        }
        Ok(s.min(1.0))
    }

    fn quantile_fn(&self) -> Result<QuantileFn> {
        require_1d(self.dim())?;
        let g = self.geometry();
        let (o, h) = (g.origin()[0], g.cell_size()[0]);
        QuantileFn::from_segments((0..g.len()).filter(|&i| self.values()[i] > 0.0).map(|i| {
            let lo = o + i as f64 * h;
            (self.mass(i), lo, lo + h)
        }))
    }
}

impl Univariate for Measure {
    fn cdf(&self, x: f64) -> Result<f64> {
        match self {
            Measure::Discrete(m) => m.cdf(x),
            Measure::Grid(g) => g.cdf(x),
        }
    }

    fn quantile_fn(&self) -> Result<QuantileFn> {
        match self {
            Measure::Discrete(m) => m.quantile_fn(),
            Measure::Grid(g) => g.quantile_fn(),
        }
    }
}

/// Right-continuous CDF.
pub fn cdf(measure: &dyn Univariate, x: f64) -> Result<f64> {
    measure.cdf(x)
}

/// Generalized inverse `inf{x : F(x) >= y}` for `y` in (0, 1].
pub fn quantile(measure: &dyn Univariate, y: f64) -> Result<f64> {
    measure.quantile(y)
}

/// Exact squared 2-Wasserstein distance.
pub fn w2sq_1d(mu: &dyn Univariate, nu: &dyn Univariate) -> Result<f64> {
    Ok(mu.quantile_fn()?.w2sq(&nu.quantile_fn()?))
}

/// Monotone map `x -> F_nu^{-1}(F_mu0(x))`.
#[derive(Debug, Clone)]
pub struct MonotoneMap {
    source: GridDensity,
    target: QuantileFn,
}

impl MonotoneMap {
    pub fn apply(&self, x: f64) -> f64 {
        let u = self.source.cdf(x).expect("one-dimensional source");
        if u <= 0.0 {
            self.target.lower_limit()
        } else {
            self.target.eval(u).expect("u in (0, 1]")
        }
    }

    pub fn source(&self) -> &GridDensity {
        &self.source
    }

    pub fn target(&self) -> &QuantileFn {
        &self.target
    }
}

/// Optimal transport map from an absolutely continuous source.
pub fn optimal_map_1d(mu0: &Measure, nu: &dyn Univariate) -> Result<MonotoneMap> {
    match mu0 {
        Measure::Discrete(_) => Err(Error::AbsContinuity(
            "the source has atoms; a transport map need not exist".into(),
        )),
        Measure::Grid(g) => {
            require_1d(g.dim())?;
            Ok(MonotoneMap { source: g.clone(), target: nu.quantile_fn()? })
        }
    }
}

pub(crate) fn check_probability_vector(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::Dimension(format!("{} weights for {n} inputs", weights.len())));
    }
    if n == 0 {
        return Err(Error::Invariant("no inputs".into()));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Invariant("weights must be nonnegative".into()));
    }
    let s: f64 = weights.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::Invariant(format!("weights sum to {s}")));
    }
    Ok(())
}

/// Pointwise weighted average of quantile functions.
pub fn quantile_mean(quantiles: &[QuantileFn], weights: &[f64]) -> Result<QuantileFn> {
    check_probability_vector(weights, quantiles.len())?;
    QuantileFn::weighted_mean(quantiles, weights)
}

/// Weighted barycenter of 1D discrete measures through their quantile average.
pub fn barycenter_1d(measures: &[DiscreteMeasure], weights: &[f64]) -> Result<DiscreteMeasure> {
    check_probability_vector(weights, measures.len())?;
    let qs: Vec<QuantileFn> = measures.iter().map(|m| m.quantile_fn()).collect::<Result<_>>()?;
    let mean = QuantileFn::weighted_mean(&qs, weights)?;
    let mut domain: DomainBox = measures[0].domain().clone();
    for m in &measures[1..] {
        domain = domain.hull(m.domain())?;
    }
    mean.to_discrete(domain)
}

/// Barycenter quantile function of arbitrary 1D measures.
pub fn barycenter_quantile(measures: &[&dyn Univariate], weights: &[f64]) -> Result<QuantileFn> {
    check_probability_vector(weights, measures.len())?;
    let qs: Vec<QuantileFn> = measures.iter().map(|m| m.quantile_fn()).collect::<Result<_>>()?;
    QuantileFn::weighted_mean(&qs, weights)
}
