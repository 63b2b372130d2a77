//! Exact discrete optimal transport in any dimension.

pub mod network_simplex;

use crate::error::{Error, Result};
use crate::measures::{require_same_domain, DiscreteMeasure, TransportPlan};

/// Default cap on atoms per side.
pub const DEFAULT_MAX_ATOMS: usize = 2000;
/// Relative tolerance of the optimality certificate.
pub const CERTIFICATE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub struct LpOptions {
    pub max_atoms: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self { max_atoms: DEFAULT_MAX_ATOMS }
    }
}

/// Dual variables with `u_i + v_j <= |x_i − y_j|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Potentials {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Evidence that a plan is optimal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    /// `max(u_i + v_j − c_ij)` over all pairs; at most 0 for a feasible dual.
    pub dual_violation: f64,
    /// `max |c_ij − u_i − v_j|` over pairs carrying mass.
    pub slackness_violation: f64,
    pub dual_objective: f64,
    /// Largest squared distance, the scale of the tolerances.
    pub cost_scale: f64,
}

impl Certificate {
    pub fn holds(&self, tol: f64) -> bool {
        let t = tol * (1.0 + self.cost_scale);
        self.dual_violation <= t && self.slackness_violation <= t
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub cost: f64,
    pub plan: TransportPlan,
    pub potentials: Potentials,
    pub certificate: Certificate,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_pair(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<()> {
    if mu.dim() != nu.dim() {
        return Err(Error::Dimension(format!("dimensions {} and {}", mu.dim(), nu.dim())));
    }
    require_same_domain(mu.domain(), nu.domain())
}

/// Squared 2-Wasserstein distance with an optimal plan and dual certificate.
pub fn w2sq_lp(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<LpSolution> {
    w2sq_lp_with(mu, nu, &LpOptions::default())
}

pub fn w2sq_lp_with(mu: &DiscreteMeasure, nu: &DiscreteMeasure, opts: &LpOptions) -> Result<LpSolution> {
    check_pair(mu, nu)?;
    if mu.len() > opts.max_atoms || nu.len() > opts.max_atoms {
        return Err(Error::Size(format!(
            "{} x {} atoms exceeds the cap of {}",
            mu.len(),
            nu.len(),
            opts.max_atoms
        )));
    }
    let (mu_m, mu_group) = mu.merge_duplicates();
    let (nu_m, nu_group) = nu.merge_duplicates();
    let (m, n) = (mu_m.len(), nu_m.len());
    let mut cost = vec![0.0; m * n];
    for i in 0..m {
        let x = mu_m.point(i);
        for j in 0..n {
            cost[i * n + j] = sq_dist(x, nu_m.point(j));
        }
    }
    let sol = network_simplex::solve(&cost, mu_m.weights(), nu_m.weights())?;
    let mut u_m: Vec<f64> = sol.pi[..m].iter().map(|p| -p).collect();
    let mut v_m: Vec<f64> = sol.pi[m..].to_vec();
    let shift = u_m[0];
    u_m.iter_mut().for_each(|u| *u -= shift);
    v_m.iter_mut().for_each(|v| *v += shift);

    let cost_scale = cost.iter().copied().fold(0.0, f64::max);
    let mut dual_violation = f64::NEG_INFINITY;
    for i in 0..m {
        for j in 0..n {
            dual_violation = dual_violation.max(u_m[i] + v_m[j] - cost[i * n + j]);
        }
    }
    let slackness_violation = sol
        .flows
        .iter()
        .map(|&(i, j, _)| (cost[i * n + j] - u_m[i] - v_m[j]).abs())
        .fold(0.0, f64::max);
    let dual_objective: f64 = mu_m.weights().iter().zip(&u_m).map(|(a, u)| a * u).sum::<f64>()
        + nu_m.weights().iter().zip(&v_m).map(|(b, v)| b * v).sum::<f64>();
    let certificate = Certificate { dual_violation, slackness_violation, dual_objective, cost_scale };
    if !certificate.holds(CERTIFICATE_TOL) {
        return Err(Error::Solver(format!("optimality certificate failed: {certificate:?}")));
    }

    // Spread merged mass back over the original atoms in proportion to their weights.
    let mut mu_members: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (i, &g) in mu_group.iter().enumerate() {
        mu_members[g].push(i);
    }
    let mut nu_members: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (j, &g) in nu_group.iter().enumerate() {
        nu_members[g].push(j);
    }
    let mut entries = Vec::with_capacity(sol.flows.len());
    for &(gi, gj, mass) in &sol.flows {
        let (wi, wj) = (mu_m.weights()[gi], nu_m.weights()[gj]);
        for &i in &mu_members[gi] {
            for &j in &nu_members[gj] {
                entries.push((i, j, mass * (mu.weights()[i] / wi) * (nu.weights()[j] / wj)));
            }
        }
    }
    entries.sort_by_key(|&(i, j, _)| (i, j));
    let plan = TransportPlan::new(mu.clone(), nu.clone(), entries)?;
    let cost = plan.cost();
    let potentials = Potentials {
        u: mu_group.iter().map(|&g| u_m[g]).collect(),
        v: nu_group.iter().map(|&g| v_m[g]).collect(),
    };
    log::trace!("network simplex: {m}x{n} atoms, {} pivots, cost {cost}", sol.pivots);
    Ok(LpSolution { cost, plan, potentials, certificate })
}

/// Brute force over all permutations for equal-weight measures with at most 8 atoms.
pub fn w2sq_permutation_oracle(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return Err(Error::Dimension(format!("dimensions {} and {}", mu.dim(), nu.dim())));
    }
    let m = mu.len();
    if nu.len() != m || m > 8 {
        return Err(Error::OracleScope(format!(
            "needs equal atom counts of at most 8, got {} and {}",
            m,
            nu.len()
        )));
    }
    if !mu.has_equal_weights() || !nu.has_equal_weights() {
        return Err(Error::OracleScope("needs equal weights 1/m".into()));
    }
    let c: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| sq_dist(mu.point(i), nu.point(j))).collect())
        .collect();
    // Heap's algorithm.
    let mut perm: Vec<usize> = (0..m).collect();
    let eval = |p: &[usize]| -> f64 { (0..m).map(|i| c[i][p[i]]).sum::<f64>() };
    let mut best = eval(&perm);
    let mut stack = vec![0usize; m];
    let mut i = 1;
    while i < m {
        if stack[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(stack[i], i);
            }
            best = best.min(eval(&perm));
            stack[i] += 1;
            i = 1;
        } else {
            stack[i] = 0;
            i += 1;
        }
    }
    Ok(best / m as f64)
}

/// Conditional mean `Σ_j γ_ij y_j / w_i` for every source atom.
pub fn barycentric_projection(plan: &TransportPlan) -> Vec<Vec<f64>> {
    let src = plan.source();
    let tgt = plan.target();
    let d = src.dim();
    let mut acc = vec![vec![0.0; d]; src.len()];
    let mut mass = vec![0.0; src.len()];
    for &(i, j, g) in plan.entries() {
        let y = tgt.point(j);
        for k in 0..d {
            acc[i][k] += g * y[k];
        }
        mass[i] += g;
    }
    acc.into_iter()
        .enumerate()
        .map(|(i, s)| {
            if mass[i] > 0.0 {
                s.into_iter().map(|v| v / mass[i]).collect()
            } else {
                src.point(i).to_vec()
            }
        })
        .collect()
}
