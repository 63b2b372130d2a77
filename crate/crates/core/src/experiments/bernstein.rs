use crate::error::{Error, Result};
use crate::measures::affine::spectral_norm;
use crate::models::{DeformableFamily, ParamLaw};

/// Moments and bounds entering the two-term tail bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernsteinConstants {
    pub dim: usize,
    /// `∫|x|² dμ0`.
    pub eps0_sq: f64,
    /// `E‖A_θ − Ā‖²` (spectral norm).
    pub var_a: f64,
    /// `E|b_θ − b̄|²`.
    pub var_b: f64,
    /// `max ‖A_θ − Ā‖` over the parameter grid.
    pub b1: f64,
    /// `max |b_θ − b̄|` over the parameter grid.
    pub b2: f64,
}

/// Grid points per axis, endpoints included, used for the sup bounds.
const SUP_GRID: usize = 33;

impl BernsteinConstants {
    pub fn from_family(family: &DeformableFamily, law: &ParamLaw) -> Result<Self> {
        let mean = family.mean_map(law)?;
        let dev = |theta: &[f64]| -> Result<(f64, f64)> {
            let m = family.map_at(theta)?;
            let da = spectral_norm(&(m.matrix() - mean.matrix()));
            let db = (m.offset() - mean.offset()).norm();
            Ok((da, db))
        };
        let mut var_a = 0.0;
        let mut var_b = 0.0;
        let (mut b1, mut b2) = (0.0_f64, 0.0_f64);
        for (t, &p) in law.nodes.iter().zip(&law.probs) {
            let (da, db) = dev(t)?;
            var_a += p * da * da;
            var_b += p * db * db;
            b1 = b1.max(da);
            b2 = b2.max(db);
        }
        let per_axis = if family.params() <= 2 { SUP_GRID } else { 9 };
        for t in crate::models::density::closed_grid_points(family.theta_box(), per_axis) {
            let (da, db) = dev(&t)?;
            b1 = b1.max(da);
            b2 = b2.max(db);
        }
        // Deviations below this, relative to the mean map, are summation noise.
        let noise_a = 1e-12 * (1.0 + spectral_norm(mean.matrix()));
        let noise_b = 1e-12 * (1.0 + mean.offset().norm());
        let clean = |v: f64, noise: f64| if v < noise { 0.0 } else { v };
        Ok(Self {
            dim: family.dim(),
            eps0_sq: family.template().second_moment(),
            var_a: clean(var_a, noise_a * noise_a),
            var_b: clean(var_b, noise_b * noise_b),
            b1: clean(b1, noise_a),
            b2: clean(b2, noise_b),
        })
    }

    /// Upper bound on `P(d²(μ̄_n, μ*) ≥ t)`, clipped to [0, 1].
    pub fn bound(&self, t: f64, n: usize) -> f64 {
        if !(t > 0.0) {
            return 1.0;
        }
        if t.is_infinite() {
            return 0.0;
        }
        let n = n as f64;
        let st = t.sqrt();
        let matrix_term = if self.var_a == 0.0 && self.b1 == 0.0 {
            0.0
        } else {
            let eps0 = self.eps0_sq.sqrt();
            let den = 8.0 * self.eps0_sq * self.var_a + 4.0 / 3.0 * self.b1 * eps0 * st;
            if den == 0.0 {
                0.0
            } else {
                2.0 * self.dim as f64 * (-n * t / den).exp()
            }
        };
        let vector_term = if self.var_b == 0.0 && self.b2 == 0.0 {
            0.0
        } else {
            2.0 * (-n * t / (8.0 * self.var_b + 4.0 / 3.0 * self.b2 * st)).exp()
        };
        (matrix_term + vector_term).clamp(0.0, 1.0)
    }
}

pub fn bernstein_envelope(family: &DeformableFamily, law: &ParamLaw, t: f64, n: usize) -> Result<f64> {
    if t.is_nan() {
        return Err(Error::Range("threshold is NaN".into()));
    }
    Ok(BernsteinConstants::from_family(family, law)?.bound(t, n))
}
