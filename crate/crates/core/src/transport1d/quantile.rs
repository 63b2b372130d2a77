use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure, DomainBox};

/// Quantile function on a partition `0 = p_0 < p_1 < ... < p_K = 1` of (0, 1].
/// On segment `(p_{k-1}, p_k]` it runs linearly from `left[k]` to `right[k]`;
/// a step has `left == right`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileFn {
    breaks: Vec<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl QuantileFn {
    /// Build from `(width, left, right)` segments in increasing order.
    /// Widths are accumulated and scaled so the last break is exactly 1.
    pub fn from_segments(segments: impl IntoIterator<Item = (f64, f64, f64)>) -> Result<Self> {
        let segs: Vec<(f64, f64, f64)> = segments.into_iter().filter(|s| s.0 > 0.0).collect();
        if segs.is_empty() {
            return Err(Error::Invariant("quantile function without mass".into()));
        }
        let total: f64 = segs.iter().map(|s| s.0).sum();
        let mut breaks = Vec::with_capacity(segs.len());
        let mut left = Vec::with_capacity(segs.len());
        let mut right = Vec::with_capacity(segs.len());
        let mut acc = 0.0;
        let last = segs.len() - 1;
        for (k, (w, l, r)) in segs.into_iter().enumerate() {
            acc += w;
            let p = if k == last { 1.0 } else { (acc / total).min(1.0) };
            let prev = breaks.last().copied().unwrap_or(0.0);
            if p <= prev {
                // Rounding swallowed the segment: extend the previous one.
                if let Some(rr) = right.last_mut() {
                    *rr = f64::max(*rr, r);
                }
                if k == last {
                    *breaks.last_mut().unwrap() = 1.0;
                }
                continue;
            }
            breaks.push(p);
            left.push(l);
            right.push(r);
        }
        Self::from_parts(breaks, left, right)
    }

    /// Validate raw parts.
    pub fn from_parts(breaks: Vec<f64>, left: Vec<f64>, right: Vec<f64>) -> Result<Self> {
        let k = breaks.len();
        if k == 0 || left.len() != k || right.len() != k {
            return Err(Error::Invariant("quantile parts have inconsistent lengths".into()));
        }
        if breaks[k - 1] != 1.0 {
            return Err(Error::Invariant("last breakpoint must be 1".into()));
        }
        let mut prev = 0.0;
        for &b in &breaks {
            if !(b > prev) {
                return Err(Error::Invariant("breakpoints must increase strictly".into()));
            }
            prev = b;
        }
        let scale = left.iter().chain(&right).fold(1.0_f64, |m, v| m.max(v.abs()));
        let tol = 1e-12 * scale;
        for i in 0..k {
            if !(left[i].is_finite() && right[i].is_finite()) || left[i] > right[i] + tol {
                return Err(Error::Invariant(format!("segment {i} decreases")));
            }
            if i + 1 < k && right[i] > left[i + 1] + tol {
                return Err(Error::Invariant(format!("quantile decreases after segment {i}")));
            }
        }
        Ok(Self { breaks, left, right })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breaks
    }

    pub fn left_values(&self) -> &[f64] {
        &self.left
    }

    pub fn right_values(&self) -> &[f64] {
        &self.right
    }

    pub fn segments(&self) -> usize {
        self.breaks.len()
    }

    pub fn is_step(&self) -> bool {
        self.left == self.right
    }

    fn start(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.breaks[k - 1]
        }
    }

    fn value_in(&self, k: usize, y: f64) -> f64 {
        let (l, r) = (self.left[k], self.right[k]);
        if l == r {
            return l;
        }
        let a = self.start(k);
        let t = ((y - a) / (self.breaks[k] - a)).clamp(0.0, 1.0);
        l + (r - l) * t
    }

    /// `Q(y)` for `y` in (0, 1].
    pub fn eval(&self, y: f64) -> Result<f64> {
        if !(y > 0.0 && y <= 1.0) {
            return Err(Error::Range(format!("quantile level {y} outside (0, 1]")));
        }
        let k = self.breaks.partition_point(|&b| b < y).min(self.breaks.len() - 1);
        Ok(self.value_in(k, y))
    }

    /// `lim_{y -> 0+} Q(y)`.
    pub fn lower_limit(&self) -> f64 {
        self.left[0]
    }

    pub fn upper_limit(&self) -> f64 {
        self.right[self.right.len() - 1]
    }

    /// `∫_0^1 |Q − R|²`, exact for piecewise-linear quantiles.
    pub fn w2sq(&self, other: &QuantileFn) -> f64 {
        let (mut i, mut j) = (0usize, 0usize);
        let mut a = 0.0;
        let mut total = 0.0;
        while i < self.breaks.len() && j < other.breaks.len() {
            let b = self.breaks[i].min(other.breaks[j]);
            let d0 = self.value_in(i, a) - other.value_in(j, a);
            let d1 = self.value_in(i, b) - other.value_in(j, b);
            total += (b - a) * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0;
            a = b;
            if self.breaks[i] == b {
                i += 1;
            }
            if other.breaks[j] == b {
                j += 1;
            }
        }
        total.max(0.0)
    }

    /// `∫_0^1 Q`, the mean of the measure.
    pub fn mean(&self) -> f64 {
        (0..self.breaks.len())
            .map(|k| (self.breaks[k] - self.start(k)) * 0.5 * (self.left[k] + self.right[k]))
            .sum()
    }

    /// `y -> scale * Q(y) + shift` with `scale >= 0`.
    pub fn affine(&self, scale: f64, shift: f64) -> Result<QuantileFn> {
        if !(scale >= 0.0) {
            return Err(Error::Range("quantile scale must be nonnegative".into()));
        }
        Self::from_parts(
            self.breaks.clone(),
            self.left.iter().map(|v| scale * v + shift).collect(),
            self.right.iter().map(|v| scale * v + shift).collect(),
        )
    }

    /// Weighted pointwise average on the merged partition (weights assumed valid).
    pub(crate) fn weighted_mean(qs: &[QuantileFn], weights: &[f64]) -> Result<QuantileFn> {
        let n = qs.len();
        if n == 0 {
            return Err(Error::Invariant("no quantile functions to average".into()));
        }
        // Each input contributes c + s*y on its current segment; sweep the breaks.
        let contrib = |i: usize, k: usize| -> (f64, f64) {
            let q = &qs[i];
            let w = weights[i];
            let (l, r) = (q.left[k], q.right[k]);
            if l == r {
                (w * l, 0.0)
            } else {
                let a = q.start(k);
                let slope = (r - l) / (q.breaks[k] - a);
                (w * (l - slope * a), w * slope)
            }
        };
        let mut events: Vec<(f64, u32)> = Vec::new();
        for (i, q) in qs.iter().enumerate() {
            if weights[i] == 0.0 {
                continue;
            }
            for &b in &q.breaks[..q.breaks.len() - 1] {
                events.push((b, i as u32));
            }
        }
        events.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let mut seg = vec![0usize; n];
        let recompute = |seg: &[usize]| -> (f64, f64) {
            let mut c = 0.0;
            let mut s = 0.0;
            for i in 0..n {
                if weights[i] != 0.0 {
                    let (ci, si) = contrib(i, seg[i]);
                    c += ci;
                    s += si;
                }
            }
            (c, s)
        };
        let (mut c, mut s) = recompute(&seg);
        let mut breaks = Vec::new();
        let mut left = Vec::new();
        let mut right = Vec::new();
        let mut start = 0.0;
        let mut since = 0usize;
        let mut e = 0;
        while e <= events.len() {
            let y = if e < events.len() { events[e].0 } else { 1.0 };
            let (l, r) = if s == 0.0 { (c, c) } else { (c + s * start, c + s * y) };
            let l = left_clamp(&right, l);
            breaks.push(y);
            left.push(l);
            right.push(r.max(l));
            if e == events.len() {
                break;
            }
            while e < events.len() && events[e].0 == y {
                let i = events[e].1 as usize;
                let (c0, s0) = contrib(i, seg[i]);
                seg[i] += 1;
                let (c1, s1) = contrib(i, seg[i]);
                c += c1 - c0;
                s += s1 - s0;
                since += 1;
                e += 1;
            }
            if since >= n.max(64) {
                (c, s) = recompute(&seg);
                since = 0;
            }
            start = y;
        }
        Self::from_parts(breaks, left, right)
    }

    /// The discrete measure of a step quantile: atoms at step values,
    /// weights equal to step widths, equal consecutive values merged.
    pub fn to_discrete(&self, domain: DomainBox) -> Result<DiscreteMeasure> {
        if !self.is_step() {
            return Err(Error::Invariant("quantile is not a step function".into()));
        }
        let mut points: Vec<f64> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for k in 0..self.breaks.len() {
            let w = self.breaks[k] - self.start(k);
            let v = self.left[k];
            if points.last() == Some(&v) {
                *weights.last_mut().unwrap() += w;
            } else {
                points.push(v);
                weights.push(w);
            }
        }
        let lo = domain.lo()[0].min(points[0]);
        let hi = domain.hi()[0].max(*points.last().unwrap());
        let domain = if domain.contains(&[points[0]]) && domain.contains(&[*points.last().unwrap()]) {
            domain
        } else {
            DomainBox::new(vec![lo], vec![hi])?
        };
        DiscreteMeasure::new(domain, points, weights)
    }
}

fn left_clamp(right: &[f64], l: f64) -> f64 {
    right.last().map_or(l, |&r| l.max(r))
}
