//! Exact Kantorovich (earth mover's) distance between finite distributions.
//!
//! The transport problem is solved with the network simplex method on the
//! bipartite supply/demand graph (the transportation simplex). Zero-mass
//! entries are pruned first; the initial basis comes from the least-cost
//! rule; entering arcs are chosen by most negative reduced cost, switching
//! to the lowest-index rule while pivots stay degenerate. Leaving arcs are
//! always chosen by lowest index among the ties.
//!
//! [`TransportSolver`] keeps its basis between calls. Fixed-point iterations
//! re-solve the same pair of distributions under slowly changing costs, and
//! the previous optimal basis stays primal feasible, so later solves usually
//! need only a pricing pass.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape, Error, Result};
use crate::linalg::Matrix;

/// Tolerance on the total mass of each input distribution.
pub const MASS_TOL: f64 = 1e-10;

/// Base distance between support points.
pub type CostMatrix = Matrix;

/// An optimal coupling and its expected cost.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    pub plan: Matrix,
    pub objective: f64,
}

pub(crate) fn check_probability(v: &[f64], name: &str) -> Result<()> {
    let mut total = 0.0;
    for (i, &p) in v.iter().enumerate() {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::NotAProbability(format!("{name}[{i}] = {p}")));
        }
        total += p;
    }
    if libm::fabs(total - 1.0) > MASS_TOL {
        return Err(Error::NotAProbability(format!("{name} sums to {total}")));
    }
    Ok(())
}

fn check_costs(mu: &[f64], nu: &[f64], costs: &Matrix) -> Result<()> {
    if costs.rows() != mu.len() || costs.cols() != nu.len() {
        return Err(shape(format!(
            "{}x{} costs for distributions of size {} and {}",
            costs.rows(),
            costs.cols(),
            mu.len(),
            nu.len()
        )));
    }
    if let Some(c) = costs.as_slice().iter().find(|c| !c.is_finite() || **c < 0.0) {
        return Err(Error::InvalidDistance(format!("cost {c} is not a non-negative real")));
    }
    Ok(())
}

/// Optimal coupling of `mu` and `nu` under `costs[(i, j)]`.
pub fn kantorovich(mu: &[f64], nu: &[f64], costs: &CostMatrix) -> Result<TransportPlan> {
    check_costs(mu, nu, costs)?;
    let mut solver = TransportSolver::new(mu, nu)?;
    let objective = solver.solve(costs);
    Ok(TransportPlan {
        plan: solver.plan(),
        objective,
    })
}

/// The optimal objective only; identical to [`kantorovich`]'s objective.
pub fn kantorovich_value(mu: &[f64], nu: &[f64], costs: &CostMatrix) -> Result<f64> {
    check_costs(mu, nu, costs)?;
    Ok(TransportSolver::new(mu, nu)?.solve(costs))
}

#[derive(Clone, Copy, Debug)]
struct BasicCell {
    row: usize,
    col: usize,
    flow: f64,
}

/// Reusable transport solver for a fixed pair of distributions.
#[derive(Clone, Debug)]
pub struct TransportSolver {
    n_mu: usize,
    n_nu: usize,
    src: Vec<usize>,
    supply: Vec<f64>,
    dst: Vec<usize>,
    demand: Vec<f64>,
    basis: Vec<BasicCell>,
    cost: Vec<f64>,
}

/// Per-solve scratch for the spanning-tree walk.
struct Tree {
    u: Vec<f64>,
    v: Vec<f64>,
    adjacency: Vec<Vec<(usize, usize)>>,
    parent_cell: Vec<usize>,
    parent_node: Vec<usize>,
    depth: Vec<usize>,
    queue: Vec<usize>,
}

impl TransportSolver {
    /// Validates both distributions and prunes their zero-mass entries.
    pub fn new(mu: &[f64], nu: &[f64]) -> Result<Self> {
        check_probability(mu, "mu")?;
        check_probability(nu, "nu")?;
        let (src, supply): (Vec<usize>, Vec<f64>) = mu
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, &p)| (i, p))
            .unzip();
        let (dst, demand): (Vec<usize>, Vec<f64>) = nu
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, &p)| (i, p))
            .unzip();
        Ok(Self {
            n_mu: mu.len(),
            n_nu: nu.len(),
            src,
            supply,
            dst,
            demand,
            basis: Vec::new(),
            cost: Vec::new(),
        })
    }

    /// Support sizes after pruning.
    pub fn support(&self) -> (usize, usize) {
        (self.src.len(), self.dst.len())
    }

    /// Solves under `costs` (indexed by the original, unpruned positions),
    /// starting from the basis left by the previous call, and returns the
    /// optimal expected cost. `costs` must be at least `len(mu) × len(nu)`.
    pub fn solve(&mut self, costs: &Matrix) -> f64 {
        self.solve_with(|i, j| costs[(i, j)])
    }

    /// As [`solve`](Self::solve) with costs given by a closure over the
    /// original indices.
    pub fn solve_with(&mut self, cost: impl Fn(usize, usize) -> f64) -> f64 {
        let (m, k) = self.support();
        self.cost.clear();
        for &i in &self.src {
            for &j in &self.dst {
                self.cost.push(cost(i, j));
            }
        }
        if self.basis.is_empty() {
            self.least_cost_basis();
        }
        if m > 1 && k > 1 {
            self.pivot_to_optimality();
        }
        self.basis.iter().map(|c| c.flow * self.cost[c.row * k + c.col]).sum()
    }

    /// Full `len(mu) × len(nu)` coupling of the last solve.
    pub fn plan(&self) -> Matrix {
        let mut plan = Matrix::zeros(self.n_mu, self.n_nu);
        for c in &self.basis {
            plan[(self.src[c.row], self.dst[c.col])] += c.flow;
        }
        plan
    }

    fn least_cost_basis(&mut self) {
        let (m, k) = self.support();
        let mut order: Vec<usize> = (0..m * k).collect();
        order.sort_by(|&a, &b| self.cost[a].total_cmp(&self.cost[b]).then(a.cmp(&b)));
        let mut rem_s = self.supply.clone();
        let mut rem_d = self.demand.clone();
        let mut row_done = vec![false; m];
        let mut col_done = vec![false; k];
        let (mut rows_left, mut cols_left) = (m, k);
        self.basis.clear();
        for cell in order {
            let (i, j) = (cell / k, cell % k);
            if row_done[i] || col_done[j] {
                continue;
            }
            let q = f64::min(rem_s[i], rem_d[j]);
            rem_s[i] -= q;
            rem_d[j] -= q;
            self.basis.push(BasicCell {
                row: i,
                col: j,
                flow: q,
            });
            if rows_left == 1 && cols_left == 1 {
                break;
            }
            // Each allocation retires exactly one line so the basis stays a
            // spanning tree with m + k - 1 cells.
            let retire_row = if rows_left == 1 {
                false
            } else if cols_left == 1 {
                true
            } else {
                rem_s[i] <= rem_d[j]
            };
            if retire_row {
                row_done[i] = true;
                rows_left -= 1;
            } else {
                col_done[j] = true;
                cols_left -= 1;
            }
        }
        debug_assert_eq!(self.basis.len(), m + k - 1);
    }

    fn pivot_to_optimality(&mut self) {
        let (m, k) = self.support();
        let nodes = m + k;
        let scale = self.cost.iter().copied().fold(1.0, f64::max);
        let tol = 1e-12 * scale;
        let mut tree = Tree {
            u: vec![0.0; m],
            v: vec![0.0; k],
            adjacency: vec![Vec::new(); nodes],
            parent_cell: vec![usize::MAX; nodes],
            parent_node: vec![usize::MAX; nodes],
            depth: vec![0; nodes],
            queue: Vec::with_capacity(nodes),
        };
        let mut degenerate_streak = 0usize;
        let max_pivots = 50 * nodes * nodes + 1000;
        for _ in 0..max_pivots {
            self.build_tree(&mut tree);
            let bland = degenerate_streak > nodes;
            let Some((ei, ej)) = self.entering(&tree, tol, bland) else {
                return;
            };
            let theta = self.pivot(&tree, ei, ej);
            if theta > 0.0 {
                degenerate_streak = 0;
            } else {
                degenerate_streak += 1;
            }
        }
        debug_assert!(false, "transport simplex hit its pivot cap");
    }

    /// Dual potentials `u_i + v_j = c_ij` on basic cells, plus BFS parents
    /// rooted at row 0. Rows are nodes `0..m`, columns `m..m + k`.
    fn build_tree(&self, tree: &mut Tree) {
        let (m, k) = self.support();
        for list in tree.adjacency.iter_mut() {
            list.clear();
        }
        for (c, cell) in self.basis.iter().enumerate() {
            tree.adjacency[cell.row].push((m + cell.col, c));
            tree.adjacency[m + cell.col].push((cell.row, c));
        }
        tree.parent_node.fill(usize::MAX);
        tree.queue.clear();
        tree.queue.push(0);
        tree.parent_node[0] = 0;
        tree.parent_cell[0] = usize::MAX;
        tree.depth[0] = 0;
        tree.u[0] = 0.0;
        let mut head = 0;
        while head < tree.queue.len() {
            let node = tree.queue[head];
            head += 1;
            for idx in 0..tree.adjacency[node].len() {
                let (next, c) = tree.adjacency[node][idx];
                if tree.parent_node[next] != usize::MAX {
                    continue;
                }
                let cell = self.basis[c];
                let cij = self.cost[cell.row * k + cell.col];
                if next >= m {
                    tree.v[next - m] = cij - tree.u[node];
                } else {
                    tree.u[next] = cij - tree.v[node - m];
                }
                tree.parent_node[next] = node;
                tree.parent_cell[next] = c;
                tree.depth[next] = tree.depth[node] + 1;
                tree.queue.push(next);
            }
        }
        debug_assert_eq!(tree.queue.len(), m + k, "basis is not a spanning tree");
    }

    fn entering(&self, tree: &Tree, tol: f64, bland: bool) -> Option<(usize, usize)> {
        let (m, k) = self.support();
        let mut best = -tol;
        let mut choice = None;
        for i in 0..m {
            let ui = tree.u[i];
            let row = &self.cost[i * k..(i + 1) * k];
            for (j, (&c, &vj)) in row.iter().zip(&tree.v).enumerate() {
                let reduced = c - ui - vj;
                if reduced < best {
                    if bland {
                        return Some((i, j));
                    }
                    best = reduced;
                    choice = Some((i, j));
                }
            }
        }
        choice
    }

    /// Pushes flow around the cycle closed by `(ei, ej)` and swaps the
    /// leaving cell out of the basis. Returns the amount pushed.
    fn pivot(&mut self, tree: &Tree, ei: usize, ej: usize) -> f64 {
        let m = self.src.len();
        // Walk both endpoints up to their common ancestor. Edges collected
        // from the column side come first on the cycle after the entering
        // cell, then the row side in reverse.
        let mut from_col: Vec<usize> = Vec::new();
        let mut from_row: Vec<usize> = Vec::new();
        let (mut a, mut b) = (m + ej, ei);
        while tree.depth[a] > tree.depth[b] {
            from_col.push(tree.parent_cell[a]);
            a = tree.parent_node[a];
        }
        while tree.depth[b] > tree.depth[a] {
            from_row.push(tree.parent_cell[b]);
            b = tree.parent_node[b];
        }
        while a != b {
            from_col.push(tree.parent_cell[a]);
            a = tree.parent_node[a];
            from_row.push(tree.parent_cell[b]);
            b = tree.parent_node[b];
        }
        let path: Vec<usize> = from_col.into_iter().chain(from_row.into_iter().rev()).collect();

        let mut theta = f64::INFINITY;
        let mut leaving = usize::MAX;
        for &c in path.iter().step_by(2) {
            let cell = self.basis[c];
            let better = cell.flow < theta
                || (cell.flow == theta && {
                    let cur = self.basis[leaving];
                    (cell.row, cell.col) < (cur.row, cur.col)
                });
            if better {
                theta = cell.flow;
                leaving = c;
            }
        }
        for (pos, &c) in path.iter().enumerate() {
            let cell = &mut self.basis[c];
            if pos % 2 == 0 {
                cell.flow = f64::max(cell.flow - theta, 0.0);
            } else {
                cell.flow += theta;
            }
        }
        self.basis[leaving] = BasicCell {
            row: ei,
            col: ej,
            flow: theta,
        };
        theta
    }
}
