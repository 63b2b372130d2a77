//! Primal network simplex for the dense bipartite transportation problem,
//! with block-search pivoting and a strongly feasible spanning tree.

use crate::error::{Error, Result};

const NONE: usize = usize::MAX;
const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;
const DIR_UP: i8 = 1;
const DIR_DOWN: i8 = -1;
const MAX_RESTARTS: usize = 8;

pub struct Solution {
    /// Positive flows `(i, j, mass)`.
    pub flows: Vec<(usize, usize, f64)>,
    /// Node potentials: `c_ij + pi_i - pi_{m+j} >= 0`, equality on tree arcs.
    pub pi: Vec<f64>,
    pub pivots: usize,
}

struct Simplex<'a> {
    m: usize,
    n: usize,
    cost: &'a [f64],
    arc_num: usize,
    node_num: usize,
    root: usize,
    art_cost: Vec<f64>,
    art_source: Vec<usize>,
    art_target: Vec<usize>,
    flow: Vec<f64>,
    state: Vec<i8>,
    pi: Vec<f64>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pred_dir: Vec<i8>,
    dirty_revs: Vec<usize>,
    block_size: usize,
    next_arc: usize,
    eps: f64,
    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: f64,
}

impl<'a> Simplex<'a> {
    fn source(&self, e: usize) -> usize {
        if e < self.arc_num {
            e / self.n
        } else {
            self.art_source[e - self.arc_num]
        }
    }

    fn target(&self, e: usize) -> usize {
        if e < self.arc_num {
            self.m + e % self.n
        } else {
            self.art_target[e - self.arc_num]
        }
    }

    fn arc_cost(&self, e: usize) -> f64 {
        if e < self.arc_num {
            self.cost[e]
        } else {
            self.art_cost[e - self.arc_num]
        }
    }

    fn new(cost: &'a [f64], supply: &[f64], m: usize, n: usize) -> Self {
        let node_num = m + n;
        let arc_num = m * n;
        let all = arc_num + node_num;
        let root = node_num;
        let max_cost = cost.iter().copied().fold(0.0_f64, f64::max);
        let art = (max_cost + 1.0) * node_num as f64;
        let sum_supply: f64 = supply.iter().sum();
        let mut s = Simplex {
            m,
            n,
            cost,
            arc_num,
            node_num,
            root,
            art_cost: vec![0.0; node_num],
            art_source: vec![0; node_num],
            art_target: vec![0; node_num],
            flow: vec![0.0; all],
            state: vec![STATE_LOWER; all],
            pi: vec![0.0; node_num + 1],
            parent: vec![NONE; node_num + 1],
            pred: vec![NONE; node_num + 1],
            thread: vec![0; node_num + 1],
            rev_thread: vec![0; node_num + 1],
            succ_num: vec![0; node_num + 1],
            last_succ: vec![0; node_num + 1],
            pred_dir: vec![0; node_num + 1],
            dirty_revs: Vec::new(),
            block_size: ((arc_num as f64).sqrt().ceil() as usize).max(10),
            next_arc: 0,
            eps: 64.0 * f64::EPSILON * art + 1e-14 * (1.0 + max_cost),
            in_arc: 0,
            join: 0,
            u_in: 0,
            v_in: 0,
            u_out: 0,
            delta: 0.0,
        };
        s.thread[root] = 0;
        s.rev_thread[0] = root;
        s.succ_num[root] = node_num + 1;
        s.last_succ[root] = root - 1;
        let _ = sum_supply;
        for u in 0..node_num {
            let e = arc_num + u;
            s.parent[u] = root;
            s.pred[u] = e;
            s.thread[u] = u + 1;
            s.rev_thread[u + 1] = u;
            s.succ_num[u] = 1;
            s.last_succ[u] = u;
            s.state[e] = STATE_TREE;
            if supply[u] >= 0.0 {
                s.pred_dir[u] = DIR_UP;
                s.pi[u] = 0.0;
                s.art_source[u] = u;
                s.art_target[u] = root;
                s.flow[e] = supply[u];
                s.art_cost[u] = 0.0;
            } else {
                s.pred_dir[u] = DIR_DOWN;
                s.pi[u] = art;
                s.art_source[u] = root;
                s.art_target[u] = u;
                s.flow[e] = -supply[u];
                s.art_cost[u] = art;
            }
        }
        s
    }

    fn reduced(&self, e: usize, i: usize, j: usize) -> f64 {
        self.state[e] as f64 * (self.cost[e] + self.pi[i] - self.pi[self.m + j])
    }

    fn find_entering_arc(&mut self) -> bool {
        let mut min = -self.eps;
        let mut cnt = self.block_size;
        let total = self.arc_num;
        let start = self.next_arc;
        let mut found = false;
        let mut e = start;
        let (mut i, mut j) = (e / self.n, e % self.n);
        for _ in 0..total {
            let c = self.reduced(e, i, j);
            if c < min {
                min = c;
                self.in_arc = e;
                found = true;
            }
            e += 1;
            j += 1;
            if j == self.n {
                j = 0;
                i += 1;
            }
            if e == total {
                e = 0;
                i = 0;
                j = 0;
            }
            cnt -= 1;
            if cnt == 0 {
                if found {
                    self.next_arc = e;
                    return true;
                }
                cnt = self.block_size;
            }
        }
        if found {
            self.next_arc = e;
        }
        found
    }

    fn find_join_node(&mut self) {
        let mut u = self.source(self.in_arc);
        let mut v = self.target(self.in_arc);
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;
    }

    fn find_leaving_arc(&mut self) -> bool {
        // Entering arcs are always at their lower bound.
        let first = self.source(self.in_arc);
        let second = self.target(self.in_arc);
        self.delta = f64::INFINITY;
        let mut result = 0;
        let mut u = first;
        while u != self.join {
            if self.pred_dir[u] == DIR_UP {
                let d = self.flow[self.pred[u]];
                if d < self.delta {
                    self.delta = d;
                    self.u_out = u;
                    result = 1;
                }
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != self.join {
            if self.pred_dir[u] == DIR_DOWN {
                let d = self.flow[self.pred[u]];
                if d <= self.delta {
                    self.delta = d;
                    self.u_out = u;
                    result = 2;
                }
            }
            u = self.parent[u];
        }
        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        result != 0
    }

    fn change_flow(&mut self) {
        let val = self.delta;
        if val > 0.0 {
            self.flow[self.in_arc] += val;
            let mut u = self.source(self.in_arc);
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] -= self.pred_dir[u] as f64 * val;
                u = self.parent[u];
            }
            let mut u = self.target(self.in_arc);
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] += self.pred_dir[u] as f64 * val;
                u = self.parent[u];
            }
        }
        self.state[self.in_arc] = STATE_TREE;
        let out = self.pred[self.u_out];
        self.flow[out] = 0.0;
        self.state[out] = STATE_LOWER;
    }

    fn update_tree_structure(&mut self) {
        let (u_in, v_in, u_out, join, in_arc) = (self.u_in, self.v_in, self.u_out, self.join, self.in_arc);
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = if u_in == self.source(in_arc) { DIR_UP } else { DIR_DOWN };
            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue =
                if old_rev_thread == v_in { self.thread[old_last_succ] } else { self.thread[v_in] };
            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);
                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;
                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;
                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;
            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }
            for k in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[k];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }
            let mut tmp_sc = 0usize;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                tmp_sc = tmp_sc + self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = if u_in == self.source(in_arc) { DIR_UP } else { DIR_DOWN };
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in { join } else { NONE };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }
        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }
        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn update_potential(&mut self) {
        let u_in = self.u_in;
        let sigma = self.pi[self.v_in] - self.pi[u_in] - self.pred_dir[u_in] as f64 * self.arc_cost(self.in_arc);
        let end = self.thread[self.last_succ[u_in]];
        let mut u = u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }

    /// Rebuild potentials from the tree to shed accumulated rounding.
    fn recompute_potentials(&mut self) {
        self.pi[self.root] = 0.0;
        let mut u = self.thread[self.root];
        while u != self.root {
            let p = self.parent[u];
            let c = self.arc_cost(self.pred[u]);
            self.pi[u] = if self.pred_dir[u] == DIR_UP { self.pi[p] - c } else { self.pi[p] + c };
            u = self.thread[u];
        }
    }

    fn run(&mut self, max_pivots: usize) -> Result<usize> {
        let mut pivots = 0usize;
        for _ in 0..MAX_RESTARTS {
            while self.find_entering_arc() {
                self.find_join_node();
                if !self.find_leaving_arc() {
                    return Err(Error::Solver("unbounded pivot in transportation problem".into()));
                }
                self.change_flow();
                self.update_tree_structure();
                self.update_potential();
                pivots += 1;
                if pivots > max_pivots {
                    return Err(Error::Solver(format!("no convergence after {pivots} pivots")));
                }
            }
            self.recompute_potentials();
            if !self.find_entering_arc() {
                return Ok(pivots);
            }
        }
        Ok(pivots)
    }
}

/// Solve `min Σ c_ij x_ij` with row sums `a` and column sums `b`; `cost` is row-major.
pub fn solve(cost: &[f64], a: &[f64], b: &[f64]) -> Result<Solution> {
    let (m, n) = (a.len(), b.len());
    if m == 0 || n == 0 || cost.len() != m * n {
        return Err(Error::Dimension("transportation problem shape".into()));
    }
    let supply: Vec<f64> = a.iter().copied().chain(b.iter().map(|v| -v)).collect();
    let mut s = Simplex::new(cost, &supply, m, n);
    let max_pivots = 50 * (m * n).max(1000) + 1_000_000;
    let pivots = s.run(max_pivots)?;
    let residual: f64 = (s.arc_num..s.arc_num + s.node_num).map(|e| s.flow[e]).fold(0.0, f64::max);
    let total: f64 = a.iter().sum::<f64>().max(b.iter().sum());
    if residual > 1e-12 * total.max(1.0) {
        return Err(Error::Infeasible(format!("artificial arcs still carry {residual:e}")));
    }
    let mut flows = Vec::with_capacity(m + n);
    for u in 0..s.node_num {
        let e = s.pred[u];
        if e < s.arc_num && s.flow[e] > 0.0 {
            flows.push((e / n, e % n, s.flow[e]));
        }
    }
    flows.sort_by_key(|&(i, j, _)| (i, j));
    Ok(Solution { flows, pi: s.pi[..s.node_num].to_vec(), pivots })
}
