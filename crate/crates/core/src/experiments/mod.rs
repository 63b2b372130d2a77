//! Monte Carlo harness: consistency runs, rate fits, tail envelopes and
//! the Euclidean-versus-Wasserstein contrast.

mod bernstein;
pub mod report;

pub use bernstein::{bernstein_envelope, BernsteinConstants};
pub use report::write_report;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::barycenter::euclidean_mean;
use crate::error::{Error, Result};
use crate::measures::{AffineMap, DiscreteMeasure, GridDensity};
use crate::models::{sample_theta_with, DeformableFamily, FamilyKind, MemberScheme, ParamLaw, Quadrature};
use crate::transport1d::w2sq_1d;
use crate::transport_exact::w2sq_lp;

/// Minimum distinct sample sizes for a rate fit.
pub const MIN_RATE_POINTS: usize = 4;
/// Minimum replicates per sample size for a rate fit.
pub const MIN_RATE_REPLICATES: usize = 50;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;
/// Tail levels, taken from the smallest sample size, at which envelopes are checked.
pub const ENVELOPE_LEVELS: [f64; 3] = [0.5, 0.9, 0.99];

/// How `d²(μ̄_n, μ*)` is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DistanceScheme {
    /// Exactly transformed template grids, compared through quantile functions (d = 1).
    Exact1d,
    /// Template cell centers pushed through both maps, compared by the LP.
    Lagrangian,
    /// Both densities resampled on one grid over the common domain; atoms at cell centers.
    Grid { cells: usize },
}

impl DistanceScheme {
    pub fn default_for(dim: usize) -> Self {
        if dim == 1 {
            DistanceScheme::Exact1d
        } else {
            DistanceScheme::Lagrangian
        }
    }

    /// Squared distance between two images of the family's template.
    pub fn w2sq(&self, family: &DeformableFamily, a: &AffineMap, b: &AffineMap) -> Result<f64> {
        match *self {
            DistanceScheme::Exact1d => {
                if family.dim() != 1 {
                    return Err(Error::Dimension(format!(
                        "exact quantile scheme needs d = 1, got {}",
                        family.dim()
                    )));
                }
                let qa = family.image_density(a, None)?;
                let qb = family.image_density(b, None)?;
                w2sq_1d(&qa, &qb)
            }
            DistanceScheme::Lagrangian => {
                let ma = family.image_measure(a, &MemberScheme::Lagrangian)?;
                let mb = family.image_measure(b, &MemberScheme::Lagrangian)?;
                pair_w2sq(&ma, &mb)
            }
            DistanceScheme::Grid { cells } => {
                let geom = family.omega_grid(&vec![cells; family.dim()])?;
                let scheme = MemberScheme::Grid(geom);
                let ma = family.image_measure(a, &scheme)?;
                let mb = family.image_measure(b, &scheme)?;
                pair_w2sq(&ma, &mb)
            }
        }
    }
}

fn pair_w2sq(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<f64> {
    if a.dim() == 1 {
        w2sq_1d(a, b)
    } else {
        Ok(w2sq_lp(a, b)?.cost)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyConfig {
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub scheme: DistanceScheme,
    /// Quadrature nodes per parameter axis for the population barycenter.
    pub quad_nodes: usize,
}

impl ConsistencyConfig {
    pub fn new(n_grid: Vec<usize>, replicates: usize, seed: u64, dim: usize) -> Self {
        Self { n_grid, replicates, seed, scheme: DistanceScheme::default_for(dim), quad_nodes: 65 }
    }
}

/// Random stream of replicate `rep` at sample-size index `n_idx`.
pub fn stream_id(n_idx: usize, rep: usize) -> u64 {
    ((n_idx as u64) << 32) | rep as u64
}

/// Generator for one replicate; independent of scheduling.
pub fn replicate_rng(seed: u64, n_idx: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(n_idx, rep));
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub n: usize,
    pub replicate: usize,
    pub stream: u64,
    pub d2: f64,
    /// Seconds; excluded from checksums and record files.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub n: usize,
    pub count: usize,
    pub mean: f64,
    pub q10: f64,
    pub q50: f64,
    pub q90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ConsistencyConfig,
    pub population_map: (Vec<f64>, Vec<f64>),
    pub records: Vec<ReplicateRecord>,
    pub aggregates: Vec<AggregateRow>,
    /// Fraction of consecutive sample sizes over which the mean distance decreased.
    pub decreasing_fraction: f64,
    /// SHA-256 of the records file contents.
    pub checksum: String,
}

impl ExperimentReport {
    /// Records as CSV, without timings.
    pub fn records_csv(&self) -> String {
        records_csv(&self.records)
    }

    pub fn distances(&self, n: usize) -> Vec<f64> {
        self.records.iter().filter(|r| r.n == n).map(|r| r.d2).collect()
    }

    /// Recomputes aggregates and checksum from the records.
    pub fn verify(&self) -> bool {
        aggregate(&self.records) == self.aggregates && checksum(&self.records_csv()) == self.checksum
    }
}

fn records_csv(records: &[ReplicateRecord]) -> String {
    let mut s = String::from("n,replicate,stream,d2\n");
    for r in records {
        s.push_str(&format!("{},{},{},{:?}\n", r.n, r.replicate, r.stream, r.d2));
    }
    s
}

fn checksum(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Linear-interpolation quantile of sorted values.
pub fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = level.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-n summaries in first-appearance order of n.
pub fn aggregate(records: &[ReplicateRecord]) -> Vec<AggregateRow> {
    let mut ns: Vec<usize> = Vec::new();
    for r in records {
        if !ns.contains(&r.n) {
            ns.push(r.n);
        }
    }
    ns.into_iter()
        .map(|n| {
            let mut v: Vec<f64> = records.iter().filter(|r| r.n == n).map(|r| r.d2).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            v.sort_by(f64::total_cmp);
            AggregateRow {
                n,
                count: v.len(),
                mean,
                q10: quantile_sorted(&v, 0.1),
                q50: quantile_sorted(&v, 0.5),
                q90: quantile_sorted(&v, 0.9),
            }
        })
        .collect()
}

fn map_parts(m: &AffineMap) -> (Vec<f64>, Vec<f64>) {
    let d = m.dim();
    let a = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| m.matrix()[(i, j)]).collect();
    (a, m.offset().iter().copied().collect())
}

pub fn population_law(family: &DeformableFamily, nodes: usize) -> Result<ParamLaw> {
    if nodes == 0 {
        return Err(Error::Range("quadrature needs at least one node per axis".into()));
    }
    family.law(&Quadrature::midpoint(family.theta_box(), &vec![nodes; family.params()])?)
}

/// Draws `n` parameters per replicate, forms `μ̄_n` from the sample-mean map
/// and records its squared distance to the population barycenter.
pub fn consistency_run(family: &DeformableFamily, config: &ConsistencyConfig) -> Result<ExperimentReport> {
    if config.n_grid.is_empty() || config.n_grid.contains(&0) {
        return Err(Error::Range("sample sizes must be positive".into()));
    }
    if config.replicates == 0 {
        return Err(Error::InsufficientData("no replicates requested".into()));
    }
    let law = population_law(family, config.quad_nodes)?;
    let pop = family.mean_map(&law)?;
    let jobs: Vec<(usize, usize, usize)> = config
        .n_grid
        .iter()
        .enumerate()
        .flat_map(|(k, &n)| (0..config.replicates).map(move |r| (k, n, r)))
        .collect();
    let records: Vec<ReplicateRecord> = jobs
        .par_iter()
        .map(|&(k, n, rep)| {
            let start = Instant::now();
            let mut rng = replicate_rng(config.seed, k, rep);
            let thetas = sample_theta_with(family.density(), &mut rng, n)?;
            let emp = family.sample_mean_map(&thetas)?;
            let d2 = config.scheme.w2sq(family, &emp, &pop)?;
            Ok(ReplicateRecord { n, replicate: rep, stream: stream_id(k, rep), d2, wall_time: start.elapsed().as_secs_f64() })
        })
        .collect::<Result<_>>()?;
    let aggregates = aggregate(&records);
    let pairs = aggregates.windows(2).filter(|w| w[1].n > w[0].n).count();
    let dec = aggregates.windows(2).filter(|w| w[1].n > w[0].n && w[1].mean < w[0].mean).count();
    let decreasing_fraction = if pairs == 0 { 1.0 } else { dec as f64 / pairs as f64 };
    let checksum = checksum(&records_csv(&records));
    Ok(ExperimentReport {
        config: config.clone(),
        population_map: map_parts(&pop),
        records,
        aggregates,
        decreasing_fraction,
        checksum,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// 95% percentile bootstrap interval for the slope.
    pub ci: (f64, f64),
}

fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Fails unless a rate fit over these sample sizes and replicate counts is possible.
pub fn check_rate_inputs(n_grid: &[usize], replicates: usize) -> Result<()> {
    let mut ns = n_grid.to_vec();
    ns.sort_unstable();
    ns.dedup();
    if ns.len() < MIN_RATE_POINTS {
        return Err(Error::InsufficientData(format!(
            "rate fit needs at least {MIN_RATE_POINTS} distinct sample sizes, got {}",
            ns.len()
        )));
    }
    if replicates < MIN_RATE_REPLICATES {
        return Err(Error::InsufficientData(format!(
            "rate fit needs at least {MIN_RATE_REPLICATES} replicates per sample size, got {replicates}"
        )));
    }
    Ok(())
}

/// Least-squares slope of `log mean d²` against `log n`, with a replicate bootstrap.
pub fn rate_fit(report: &ExperimentReport) -> Result<RateFit> {
    rate_fit_records(&report.records, report.config.seed)
}

pub fn rate_fit_records(records: &[ReplicateRecord], seed: u64) -> Result<RateFit> {
    let mut ns: Vec<usize> = records.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let groups: Vec<Vec<f64>> =
        ns.iter().map(|&n| records.iter().filter(|r| r.n == n).map(|r| r.d2).collect()).collect();
    let fewest = groups.iter().map(Vec::len).min().unwrap_or(0);
    check_rate_inputs(&ns, fewest)?;
    let x: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let log_mean = |g: &[f64]| -> Result<f64> {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        if !(m > 0.0) {
            return Err(Error::InsufficientData("mean distance is not positive; no log-log fit".into()));
        }
        Ok(m.ln())
    };
    let y: Vec<f64> = groups.iter().map(|g| log_mean(g)).collect::<Result<_>>()?;
    let (slope, intercept) = ols(&x, &y);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut slopes = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut buf = Vec::new();
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let mut yb = Vec::with_capacity(groups.len());
        for g in &groups {
            buf.clear();
            buf.extend((0..g.len()).map(|_| g[rng.random_range(0..g.len())]));
            let m = buf.iter().sum::<f64>() / buf.len() as f64;
            yb.push(if m > 0.0 { m.ln() } else { f64::NEG_INFINITY });
        }
        let (s, _) = ols(&x, &yb);
        if s.is_finite() {
            slopes.push(s);
        }
    }
    slopes.sort_by(f64::total_cmp);
    let ci = if slopes.is_empty() {
        (slope, slope)
    } else {
        (quantile_sorted(&slopes, 0.025), quantile_sorted(&slopes, 0.975))
    };
    Ok(RateFit { slope, intercept, ci })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub n: usize,
    pub t: f64,
    pub freq: f64,
    pub bound: f64,
    pub se: f64,
    pub ok: bool,
}

/// Thresholds at the given tail levels of the smallest sample size.
pub fn envelope_thresholds(report: &ExperimentReport, levels: &[f64]) -> Vec<f64> {
    let Some(n0) = report.aggregates.iter().map(|a| a.n).min() else {
        return Vec::new();
    };
    let mut v = report.distances(n0);
    v.sort_by(f64::total_cmp);
    levels.iter().map(|&l| quantile_sorted(&v, l)).collect()
}

/// Empirical tail frequency against the bound at every (n, t).
pub fn envelope_check(report: &ExperimentReport, constants: &BernsteinConstants, t_grid: &[f64]) -> Vec<EnvelopeRow> {
    let mut rows = Vec::new();
    for agg in &report.aggregates {
        let d = report.distances(agg.n);
        let reps = d.len() as f64;
        for &t in t_grid {
            let freq = d.iter().filter(|&&v| v >= t).count() as f64 / reps;
            let bound = constants.bound(t, agg.n);
            let se = (bound * (1.0 - bound) / reps).sqrt();
            rows.push(EnvelopeRow { n: agg.n, t, freq, bound, se, ok: freq <= bound + 3.0 * se });
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EuclidComparison {
    pub n: usize,
    /// `L¹(q̄_n, q₀ ∗ g)`.
    pub l1_euclid_conv: f64,
    /// `L¹(q̄_n, q₀)`.
    pub l1_euclid_template: f64,
    /// `L¹(q₀ ∗ g, q₀)`.
    pub l1_conv_template: f64,
    /// `W₂(μ̄_n, μ₀)` for the Wasserstein barycenter.
    pub w2_wass_template: f64,
    /// `|mean(θ_i)|`.
    pub mean_shift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EuclidOptions {
    /// Cells per axis of the common grid.
    pub cells: usize,
    /// Quadrature nodes per axis for the convolution.
    pub conv_nodes: usize,
}

impl EuclidOptions {
    pub fn default_for(dim: usize) -> Self {
        if dim == 1 {
            Self { cells: 1024, conv_nodes: 2001 }
        } else {
            Self { cells: 128, conv_nodes: 101 }
        }
    }
}

/// `(q₀ ∗ g)` at the cell centers of the template's resampled grid, by quadrature over `θ`.
pub fn convolve_template(family: &DeformableFamily, template: &GridDensity, nodes: usize) -> Result<GridDensity> {
    let law = population_law(family, nodes)?;
    let geom = template.geometry();
    let q0 = family.template();
    let values = geom
        .centers()
        .chunks_exact(geom.dim())
        .map(|x| {
            law.nodes
                .iter()
                .zip(&law.probs)
                .filter(|(_, &p)| p > 0.0)
                .map(|(t, &p)| {
                    let y: Vec<f64> = x.iter().zip(t).map(|(a, b)| a - b).collect();
                    p * q0.pdf(&y)
                })
                .sum()
        })
        .collect();
    GridDensity::from_unnormalized(geom.clone(), values)
}

pub fn euclid_vs_wasserstein(family: &DeformableFamily, n: usize, seed: u64, opts: &EuclidOptions) -> Result<EuclidComparison> {
    if family.kind() != FamilyKind::Shift {
        return Err(Error::Family("Euclidean comparison needs a shift family".into()));
    }
    if n == 0 {
        return Err(Error::InsufficientData("no members requested".into()));
    }
    let d = family.dim();
    let geom = family.omega_grid(&vec![opts.cells; d])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let thetas = sample_theta_with(family.density(), &mut rng, n)?;
    let q0 = family.image_density(&AffineMap::identity(d), Some(&geom))?;
    let members: Vec<GridDensity> =
        thetas.par_iter().map(|t| family.member_density(t, Some(&geom))).collect::<Result<_>>()?;
    let qbar = euclidean_mean(&members)?;
    let conv = convolve_template(family, &q0, opts.conv_nodes)?;
    let identity = AffineMap::identity(d);
    let emp = family.sample_mean_map(&thetas)?;
    let scheme = DistanceScheme::default_for(d);
    let w2 = scheme.w2sq(family, &emp, &identity)?.max(0.0).sqrt();
    let mean_shift = emp.offset().norm();
    Ok(EuclidComparison {
        n,
        l1_euclid_conv: qbar.l1_distance(&conv)?,
        l1_euclid_template: qbar.l1_distance(&q0)?,
        l1_conv_template: conv.l1_distance(&q0)?,
        w2_wass_template: w2,
        mean_shift,
    })
}
