//! Exact quadratic optimal transport between small discrete measures.
//!
//! The transportation LP is solved with the network simplex method on the
//! complete bipartite graph. The basis is a spanning tree with `n + m - 1`
//! cells, started from the north-west corner rule. The entering cell has the
//! most negative reduced cost (lowest row-major index on ties); after more
//! than `n + m` consecutive degenerate pivots the rule switches to Bland's
//! first eligible cell until flow moves again, which excludes cycling. The
//! leaving cell is the lowest-index blocking cell, so the pivot sequence is
//! deterministic.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{sq_dist, DiscreteMeasure};
use crate::par;

/// Largest `n * m` accepted by the dense solver.
pub const MAX_CELLS: usize = 1_000_000;

/// A transport plan between two discrete measures, row-major `n x m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub rows: usize,
    pub cols: usize,
    pub mass: Vec<f64>,
}

impl Coupling {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mass[i * self.cols + j]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.mass.chunks_exact(self.cols).map(par::pairwise_sum).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|j| {
                let col: Vec<f64> = (0..self.rows).map(|i| self.get(i, j)).collect();
                par::pairwise_sum(&col)
            })
            .collect()
    }

    pub fn nonzeros(&self) -> usize {
        self.mass.iter().filter(|&&g| g > 0.0).count()
    }

    /// `int |x - y|^2 dgamma`.
    pub fn cost(&self, alpha: &DiscreteMeasure, mu: &DiscreteMeasure) -> f64 {
        let terms: Vec<f64> = (0..self.rows)
            .map(|i| {
                let t: Vec<f64> = (0..self.cols)
                    .map(|j| self.get(i, j) * sq_dist(alpha.point(i), mu.point(j)))
                    .collect();
                par::pairwise_sum(&t)
            })
            .collect();
        par::pairwise_sum(&terms)
    }
}

/// Optimal value of `min_{gamma in Pi(alpha, mu)} int |x - y|^2 dgamma`
/// together with an optimal vertex coupling.
pub fn w2_squared_exact(alpha: &DiscreteMeasure, mu: &DiscreteMeasure) -> Result<(f64, Coupling)> {
    if alpha.dim() != mu.dim() {
        return Err(Error::DimensionMismatch(format!(
            "alpha has dimension {}, mu has dimension {}",
            alpha.dim(),
            mu.dim()
        )));
    }
    let (n, m) = (alpha.len(), mu.len());
    if n.saturating_mul(m) > MAX_CELLS {
        return Err(Error::InstanceTooLarge { n, m });
    }
    let cost: Vec<f64> = (0..n)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .map(|(i, j)| sq_dist(alpha.point(i), mu.point(j)))
        .collect();
    let flow = TransportSimplex::new(alpha.weights(), mu.weights(), cost).solve()?;
    let coupling = Coupling {
        rows: n,
        cols: m,
        mass: flow,
    };
    let value = coupling.cost(alpha, mu).max(0.0);
    Ok((value, coupling))
}

/// `W_2(alpha, mu)`.
pub fn w2(alpha: &DiscreteMeasure, mu: &DiscreteMeasure) -> Result<f64> {
    Ok(w2_squared_exact(alpha, mu)?.0.sqrt())
}

struct TransportSimplex {
    n: usize,
    m: usize,
    cost: Vec<f64>,
    flow: Vec<f64>,
    basic: Vec<bool>,
    /// Basic cells as flat indices `i * m + j`.
    basis: Vec<usize>,
    rc_tol: f64,
}

impl TransportSimplex {
    fn new(supply: &[f64], demand: &[f64], cost: Vec<f64>) -> Self {
        let (n, m) = (supply.len(), demand.len());
        let mut flow = vec![0.0; n * m];
        let mut basic = vec![false; n * m];
        let mut basis = Vec::with_capacity(n + m - 1);
        // north-west corner: every move advances exactly one of i, j
        let (mut i, mut j) = (0, 0);
        let (mut ra, mut rb) = (supply[0], demand[0]);
        loop {
            let q = ra.min(rb).max(0.0);
            let k = i * m + j;
            flow[k] = q;
            basic[k] = true;
            basis.push(k);
            ra -= q;
            rb -= q;
            if i == n - 1 && j == m - 1 {
                break;
            }
            if j == m - 1 || (i < n - 1 && ra <= rb) {
                i += 1;
                ra = supply[i];
            } else {
                j += 1;
                rb = demand[j];
            }
        }
        let scale = cost.iter().copied().fold(0.0, f64::max);
        Self {
            n,
            m,
            cost,
            flow,
            basic,
            basis,
            rc_tol: 1e-12 * (1.0 + scale),
        }
    }

    /// Adjacency of the basis tree. Nodes `0..n` are rows, `n..n+m` columns;
    /// each edge carries its cell index.
    fn tree(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.n + self.m];
        for &k in &self.basis {
            let (i, j) = (k / self.m, k % self.m);
            adj[i].push((self.n + j, k));
            adj[self.n + j].push((i, k));
        }
        adj
    }

    fn potentials(&self, adj: &[Vec<(usize, usize)>]) -> Vec<f64> {
        let mut pot = vec![f64::NAN; self.n + self.m];
        let mut queue = VecDeque::new();
        pot[0] = 0.0;
        queue.push_back(0);
        while let Some(node) = queue.pop_front() {
            for &(next, k) in &adj[node] {
                if pot[next].is_nan() {
                    // row + col = cost on basic cells
                    pot[next] = self.cost[k] - pot[node];
                    queue.push_back(next);
                }
            }
        }
        pot
    }

    /// Cells on the tree path from row node `i` to column node `n + j`.
    fn tree_path(&self, adj: &[Vec<(usize, usize)>], i: usize, j: usize) -> Vec<usize> {
        let target = self.n + j;
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; self.n + self.m];
        let mut seen = vec![false; self.n + self.m];
        let mut queue = VecDeque::new();
        seen[i] = true;
        queue.push_back(i);
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            for &(next, k) in &adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = Some((node, k));
                    queue.push_back(next);
                }
            }
        }
        let mut cells = Vec::new();
        let mut node = target;
        while let Some((prev, k)) = parent[node] {
            cells.push(k);
            node = prev;
        }
        cells.reverse();
        cells
    }

    fn solve(mut self) -> Result<Vec<f64>> {
        let max_pivots = 50 * self.n * self.m + 10_000;
        let mut degenerate_run = 0;
        for _ in 0..max_pivots {
            let adj = self.tree();
            let pot = self.potentials(&adj);
            let reduced = |k: usize| self.cost[k] - pot[k / self.m] - pot[self.n + k % self.m];
            let eligible = (0..self.n * self.m).filter(|&k| !self.basic[k] && reduced(k) < -self.rc_tol);
            // Dantzig pricing; Bland's rule while pivots stall, which rules out cycling
            let entering = if degenerate_run > self.n + self.m {
                eligible.min()
            } else {
                eligible.min_by(|&a, &b| reduced(a).total_cmp(&reduced(b)).then(a.cmp(&b)))
            };
            let Some(enter) = entering else {
                return Ok(self.flow);
            };
            let (ei, ej) = (enter / self.m, enter % self.m);
            // path from row ei to column ej; its cells alternate -, +, -, ..., -
            let path = self.tree_path(&adj, ei, ej);
            let theta = path
                .iter()
                .step_by(2)
                .map(|&k| self.flow[k])
                .fold(f64::INFINITY, f64::min);
            let leave = path
                .iter()
                .step_by(2)
                .copied()
                .filter(|&k| self.flow[k] == theta)
                .min()
                .expect("cycle has a blocking cell");
            degenerate_run = if theta == 0.0 { degenerate_run + 1 } else { 0 };
            for (pos, &k) in path.iter().enumerate() {
                if pos % 2 == 0 {
                    self.flow[k] = (self.flow[k] - theta).max(0.0);
                } else {
                    self.flow[k] += theta;
                }
            }
            self.flow[enter] = theta;
            self.flow[leave] = 0.0;
            self.basic[leave] = false;
            self.basic[enter] = true;
            let slot = self.basis.iter().position(|&k| k == leave).unwrap();
            self.basis[slot] = enter;
        }
        Err(Error::Degenerate)
    }
}
