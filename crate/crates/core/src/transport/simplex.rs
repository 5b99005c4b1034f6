//! Transportation simplex (MODI method) for the balanced problem
//! maximize Σ w_ij x_ij subject to row sums `supply` and column sums `demand`.

use std::collections::VecDeque;

use super::TransportError;

/// Optimal dense allocation, row-major `supply.len() × demand.len()`.
/// Rows and columns with zero mass are removed before solving and come back
/// as zeros.
pub(crate) fn solve_dense(supply: &[f64], demand: &[f64], w: &[f64]) -> Result<Vec<f64>, TransportError> {
    let (m0, n0) = (supply.len(), demand.len());
    debug_assert_eq!(w.len(), m0 * n0);
    let rows: Vec<usize> = (0..m0).filter(|&i| supply[i] > 0.0).collect();
    let cols: Vec<usize> = (0..n0).filter(|&j| demand[j] > 0.0).collect();
    let mut out = vec![0.0; m0 * n0];
    if rows.is_empty() && cols.is_empty() {
        return Ok(out);
    }
    if rows.is_empty() || cols.is_empty() {
        return Err(TransportError::Unbalanced {
            supply: supply.iter().sum(),
            demand: demand.iter().sum(),
        });
    }
    let a: Vec<f64> = rows.iter().map(|&i| supply[i]).collect();
    let b: Vec<f64> = cols.iter().map(|&j| demand[j]).collect();
    let n = cols.len();
    let cost: Vec<f64> = rows
        .iter()
        .flat_map(|&i| cols.iter().map(move |&j| -w[i * n0 + j]))
        .collect();
    let x = Simplex::new(&a, &b, cost).solve()?;
    for (ri, &i) in rows.iter().enumerate() {
        for (cj, &j) in cols.iter().enumerate() {
            out[i * n0 + j] = x[ri * n + cj];
        }
    }
    Ok(out)
}

struct Simplex {
    m: usize,
    n: usize,
    cost: Vec<f64>,
    x: Vec<f64>,
    basic: Vec<bool>,
    /// Basic cells as (row, col).
    basis: Vec<(usize, usize)>,
    /// Row then column marginals.
    marginals: Vec<f64>,
}

impl Simplex {
    /// Minimum-cost-cell starting basis with exactly m+n−1 basic cells.
    fn new(a: &[f64], b: &[f64], cost: Vec<f64>) -> Self {
        let (m, n) = (a.len(), b.len());
        let mut ra = a.to_vec();
        let mut rb = b.to_vec();
        let mut row_on = vec![true; m];
        let mut col_on = vec![true; n];
        let (mut nr, mut nc) = (m, n);
        let mut x = vec![0.0; m * n];
        let mut basic = vec![false; m * n];
        let mut basis = Vec::with_capacity(m + n - 1);
        while nr > 0 && nc > 0 {
            let mut best: Option<(usize, usize)> = None;
            for i in (0..m).filter(|&i| row_on[i]) {
                for j in (0..n).filter(|&j| col_on[j]) {
                    if best.is_none_or(|(bi, bj)| cost[i * n + j] < cost[bi * n + bj]) {
                        best = Some((i, j));
                    }
                }
            }
            let (i, j) = best.expect("active cell");
            let q = ra[i].min(rb[j]).max(0.0);
            x[i * n + j] = q;
            basic[i * n + j] = true;
            basis.push((i, j));
            ra[i] -= q;
            rb[j] -= q;
            if nr == 1 && nc == 1 {
                break;
            }
            let cross_row = if nr == 1 {
                false
            } else if nc == 1 {
                true
            } else {
                ra[i] <= rb[j]
            };
            if cross_row {
                row_on[i] = false;
                nr -= 1;
            } else {
                col_on[j] = false;
                nc -= 1;
            }
        }
        debug_assert_eq!(basis.len(), m + n - 1);
        Self {
            m,
            n,
            cost,
            x,
            basic,
            basis,
            marginals: a.iter().chain(b).copied().collect(),
        }
    }

    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        // Nodes 0..m are rows, m..m+n are columns; edges carry the basis index.
        let mut adj = vec![Vec::new(); self.m + self.n];
        for (k, &(i, j)) in self.basis.iter().enumerate() {
            adj[i].push((self.m + j, k));
            adj[self.m + j].push((i, k));
        }
        adj
    }

    fn potentials(&self, adj: &[Vec<(usize, usize)>]) -> (Vec<f64>, Vec<f64>) {
        let mut pot = vec![f64::NAN; self.m + self.n];
        pot[0] = 0.0;
        let mut queue = VecDeque::from([0usize]);
        while let Some(node) = queue.pop_front() {
            for &(next, k) in &adj[node] {
                if pot[next].is_nan() {
                    let (i, j) = self.basis[k];
                    // u_i + v_j = c_ij
                    pot[next] = self.cost[i * self.n + j] - pot[node];
                    queue.push_back(next);
                }
            }
        }
        let v = pot.split_off(self.m);
        (pot, v)
    }

    /// Basis indices on the tree path from column node `j` to row node `i`.
    fn path(&self, adj: &[Vec<(usize, usize)>], i: usize, j: usize) -> Vec<usize> {
        let start = self.m + j;
        let mut via: Vec<Option<(usize, usize)>> = vec![None; self.m + self.n];
        let mut seen = vec![false; self.m + self.n];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(node) = queue.pop_front() {
            if node == i {
                break;
            }
            for &(next, k) in &adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    via[next] = Some((node, k));
                    queue.push_back(next);
                }
            }
        }
        let mut edges = Vec::new();
        let mut node = i;
        while node != start {
            let (prev, k) = via[node].expect("basis is a spanning tree");
            edges.push(k);
            node = prev;
        }
        edges.reverse();
        edges
    }

    /// Recomputes basic values by peeling leaves towards the node with the
    /// largest marginal, so rounding from the pivots collects in one place
    /// and every other marginal is met to within a few ulps.
    fn settle(&mut self, adj: &[Vec<(usize, usize)>]) {
        let nodes = self.m + self.n;
        let root = (0..nodes)
            .max_by(|&a, &b| self.marginals[a].total_cmp(&self.marginals[b]).then(b.cmp(&a)))
            .expect("non-empty");
        let mut rest = self.marginals.clone();
        let mut degree: Vec<usize> = adj.iter().map(Vec::len).collect();
        let mut used = vec![false; self.basis.len()];
        let mut leaves: VecDeque<usize> = (0..nodes).filter(|&v| v != root && degree[v] == 1).collect();
        while let Some(leaf) = leaves.pop_front() {
            let &(other, k) = adj[leaf].iter().find(|(_, k)| !used[*k]).expect("leaf keeps one edge");
            used[k] = true;
            let (i, j) = self.basis[k];
            let v = rest[leaf].max(0.0);
            self.x[i * self.n + j] = v;
            rest[leaf] = 0.0;
            rest[other] -= v;
            degree[leaf] -= 1;
            degree[other] -= 1;
            if other != root && degree[other] == 1 {
                leaves.push_back(other);
            }
        }
    }

    fn solve(mut self) -> Result<Vec<f64>, TransportError> {
        let (m, n) = (self.m, self.n);
        let scale = self.cost.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
        let tol = 1e-12 * scale;
        let max_iter = 50 * m * n + 1000;
        let mut bland = false;
        for _ in 0..max_iter {
            let adj = self.adjacency();
            let (u, v) = self.potentials(&adj);
            let mut entering: Option<(usize, usize, f64)> = None;
            'scan: for i in 0..m {
                for j in 0..n {
                    if self.basic[i * n + j] {
                        continue;
                    }
                    let r = self.cost[i * n + j] - u[i] - v[j];
                    if r < -tol && entering.is_none_or(|(_, _, best)| r < best) {
                        entering = Some((i, j, r));
                        if bland {
                            break 'scan;
                        }
                    }
                }
            }
            let Some((ei, ej, _)) = entering else {
                self.settle(&adj);
                return Ok(self.x);
            };
            // Cycle: entering cell gains, path cells alternate lose/gain
            // starting from the cell in column ej.
            let path = self.path(&adj, ei, ej);
            let mut leave: Option<usize> = None;
            for &k in path.iter().step_by(2) {
                let (i, j) = self.basis[k];
                let better = match leave {
                    None => true,
                    Some(l) => {
                        let (li, lj) = self.basis[l];
                        let (xv, xl) = (self.x[i * n + j], self.x[li * n + lj]);
                        xv < xl || (xv == xl && i * n + j < li * n + lj)
                    }
                };
                if better {
                    leave = Some(k);
                }
            }
            let leave = leave.expect("cycle has a losing cell");
            let (li, lj) = self.basis[leave];
            let theta = self.x[li * n + lj];
            for (step, &k) in path.iter().enumerate() {
                let (i, j) = self.basis[k];
                let cell = &mut self.x[i * n + j];
                if step % 2 == 0 {
                    *cell = (*cell - theta).max(0.0);
                } else {
                    *cell += theta;
                }
            }
            self.x[li * n + lj] = 0.0;
            self.basic[li * n + lj] = false;
            self.x[ei * n + ej] = theta;
            self.basic[ei * n + ej] = true;
            self.basis[leave] = (ei, ej);
            bland = theta <= 0.0;
        }
        Err(TransportError::NonConvergence(max_iter))
    }
}
