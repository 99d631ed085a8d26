//! Transportation simplex on a dense cost matrix.
//!
//! The starting basis comes from the least-cost (matrix minimum) rule or the
//! northwest corner; potentials come from the basis tree; pivots follow the
//! tree cycle. Entering cells are priced block-wise (most negative reduced cost inside a
//! rotating block); after a run of degenerate pivots the solver switches to
//! Bland's rule until the objective strictly decreases again, which rules out
//! cycling.

use crate::{Error, Result};

/// Pivoting rule for the entering cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PivotRule {
    /// First improving cell in row-major order, smallest-index leaving cell.
    Bland,
    /// Most negative reduced cost inside a rotating block, falling back to
    /// Bland's rule during degenerate stretches.
    BlockSearch,
}

/// Construction of the starting basic feasible solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialBasis {
    NorthwestCorner,
    /// Greedy allocation in order of increasing cost.
    LeastCost,
}

#[derive(Clone, Copy, Debug)]
pub struct SimplexOptions {
    pub rule: PivotRule,
    pub initial: InitialBasis,
    /// A nonbasic cell enters when its reduced cost is below `-tolerance`.
    pub tolerance: f64,
    /// Consecutive degenerate pivots tolerated before switching to Bland.
    pub degenerate_streak: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            rule: PivotRule::BlockSearch,
            initial: InitialBasis::LeastCost,
            tolerance: 1e-12,
            degenerate_streak: 32,
        }
    }
}

/// Optimal basic solution of a balanced transportation problem.
#[derive(Clone, Debug)]
pub struct BasicSolution {
    /// Basic cells `(row, col, flow)`; exactly `m + n - 1` of them, possibly
    /// with zero flow.
    pub basis: Vec<(usize, usize, f64)>,
    /// Row potentials, `u[0] = 0`.
    pub u: Vec<f64>,
    /// Column potentials; `u[i] + v[j] = cost[i][j]` on the basis and
    /// `<= cost[i][j]` (up to tolerance) everywhere.
    pub v: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

#[derive(Clone, Copy, Debug)]
struct Cell {
    i: usize,
    j: usize,
    flow: f64,
}

struct Tree {
    m: usize,
    n: usize,
    cells: Vec<Cell>,
    row_adj: Vec<Vec<usize>>,
    col_adj: Vec<Vec<usize>>,
    basic_at: Vec<usize>,
    // Rooted at row 0; nodes 0..m are rows and m..m+n columns.
    parent: Vec<usize>,
    parent_cell: Vec<usize>,
    depth: Vec<usize>,
    /// Row potentials followed by column potentials.
    pot: Vec<f64>,
}

const NONBASIC: usize = usize::MAX;

impl Tree {
    fn new(m: usize, n: usize) -> Self {
        Self {
            m,
            n,
            cells: Vec::with_capacity(m + n - 1),
            row_adj: vec![Vec::new(); m],
            col_adj: vec![Vec::new(); n],
            basic_at: vec![NONBASIC; m * n],
            parent: vec![NONBASIC; m + n],
            parent_cell: vec![NONBASIC; m + n],
            depth: vec![0; m + n],
            pot: vec![0.0; m + n],
        }
    }

    fn push(&mut self, i: usize, j: usize, flow: f64) {
        let k = self.cells.len();
        self.cells.push(Cell { i, j, flow });
        self.row_adj[i].push(k);
        self.col_adj[j].push(k);
        self.basic_at[i * self.n + j] = k;
    }

    /// Replaces basic cell `k` by a new cell `(i, j)` with the given flow.
    fn replace(&mut self, k: usize, i: usize, j: usize, flow: f64) {
        let old = self.cells[k];
        self.row_adj[old.i].retain(|&c| c != k);
        self.col_adj[old.j].retain(|&c| c != k);
        self.basic_at[old.i * self.n + old.j] = NONBASIC;
        self.cells[k] = Cell { i, j, flow };
        self.row_adj[i].push(k);
        self.col_adj[j].push(k);
        self.basic_at[i * self.n + j] = k;
    }

    fn other_end(&self, node: usize, k: usize) -> usize {
        let c = self.cells[k];
        if node < self.m {
            self.m + c.j
        } else {
            c.i
        }
    }

    fn adjacent(&self, node: usize) -> &[usize] {
        if node < self.m {
            &self.row_adj[node]
        } else {
            &self.col_adj[node - self.m]
        }
    }

    /// Sets parent, depth and potential of everything below `top`, whose own
    /// entries must already be set.
    fn hang(&mut self, top: usize, cost: &[f64]) {
        let mut stack = vec![top];
        while let Some(node) = stack.pop() {
            for idx in 0..self.adjacent(node).len() {
                let k = self.adjacent(node)[idx];
                if k == self.parent_cell[node] {
                    continue;
                }
                let child = self.other_end(node, k);
                let c = self.cells[k];
                self.parent[child] = node;
                self.parent_cell[child] = k;
                self.depth[child] = self.depth[node] + 1;
                self.pot[child] = cost[c.i * self.n + c.j] - self.pot[node];
                stack.push(child);
            }
        }
    }

    fn root(&mut self, cost: &[f64]) {
        self.parent[0] = NONBASIC;
        self.parent_cell[0] = NONBASIC;
        self.depth[0] = 0;
        self.pot[0] = 0.0;
        self.hang(0, cost);
    }

    /// Basic cells on the tree path from column `j` to row `i`, in that order.
    fn path(&self, i: usize, j: usize) -> Vec<usize> {
        let (mut a, mut b) = (i, self.m + j);
        let mut from_row = Vec::new();
        let mut from_col = Vec::new();
        while a != b {
            if self.depth[a] >= self.depth[b] {
                from_row.push(self.parent_cell[a]);
                a = self.parent[a];
            } else {
                from_col.push(self.parent_cell[b]);
                b = self.parent[b];
            }
        }
        from_col.extend(from_row.into_iter().rev());
        from_col
    }

    fn is_below(&self, mut node: usize, top: usize) -> bool {
        while self.depth[node] > self.depth[top] {
            node = self.parent[node];
        }
        node == top
    }

    /// Swaps basic cell `leave` for the entering cell and re-hangs the
    /// detached subtree from the entering cell.
    fn pivot(&mut self, leave: usize, i: usize, j: usize, flow: f64, cost: &[f64]) {
        let old = self.cells[leave];
        let (r, c) = (old.i, self.m + old.j);
        let child = if self.parent_cell[r] == leave { r } else { c };
        self.replace(leave, i, j, flow);
        let (ri, cj) = (i, self.m + j);
        let (below, above) = if self.is_below(ri, child) {
            (ri, cj)
        } else {
            (cj, ri)
        };
        self.parent[below] = above;
        self.parent_cell[below] = leave;
        self.depth[below] = self.depth[above] + 1;
        self.pot[below] = cost[i * self.n + j] - self.pot[above];
        self.hang(below, cost);
    }
}

/// Solves `min Σ c_ij π_ij` over couplings of `supply` and `demand`.
///
/// `cost` is row-major `supply.len() x demand.len()`. All masses must be
/// strictly positive; callers drop empty rows and columns beforehand.
pub fn solve(supply: &[f64], demand: &[f64], cost: &[f64], opts: SimplexOptions) -> Result<BasicSolution> {
    let (m, n) = (supply.len(), demand.len());
    if m == 0 || n == 0 {
        return Err(Error::Empty("transport problem has an empty side"));
    }
    if cost.len() != m * n {
        return Err(Error::DimensionMismatch {
            expected: m * n,
            found: cost.len(),
        });
    }
    if supply.iter().chain(demand).any(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(Error::Malformed(
            "transport masses must be positive and finite".into(),
        ));
    }
    let total_s: f64 = supply.iter().sum();
    let total_d: f64 = demand.iter().sum();
    if (total_s - total_d).abs() > 1e-9 * total_s.max(1.0) {
        return Err(Error::Malformed(format!(
            "unbalanced transport problem: supply {total_s} vs demand {total_d}"
        )));
    }

    let mut tree = match opts.initial {
        InitialBasis::NorthwestCorner => northwest_corner(supply, demand),
        InitialBasis::LeastCost => least_cost(supply, demand, cost),
    };
    tree.root(cost);
    let max_pivots = 50 * m * n + 10_000;
    let block = ((m * n) as f64).sqrt().ceil().max(16.0) as usize;
    let mut cursor = 0usize;
    let mut streak = 0usize;
    let mut pivots = 0usize;

    loop {
        let (u, v) = tree.pot.split_at(m);
        let use_bland = opts.rule == PivotRule::Bland || streak >= opts.degenerate_streak;
        let entering = if use_bland {
            price_bland(&tree, cost, u, v, opts.tolerance)
        } else {
            price_block(&tree, cost, u, v, opts.tolerance, block, &mut cursor)
        };
        let Some((ie, je)) = entering else { break };

        let path = tree.path(ie, je);
        // Cells at even positions along the path lose flow.
        let mut leave: Option<usize> = None;
        let mut theta = f64::INFINITY;
        for &k in path.iter().step_by(2) {
            let c = tree.cells[k];
            let better = match leave {
                None => true,
                Some(l) => {
                    let lc = tree.cells[l];
                    c.flow < theta || (c.flow == theta && (c.i, c.j) < (lc.i, lc.j))
                }
            };
            if better {
                theta = c.flow;
                leave = Some(k);
            }
        }
        let leave = leave.expect("cycle always contains a losing cell");
        for (pos, &k) in path.iter().enumerate() {
            if k == leave {
                continue;
            }
            let f = &mut tree.cells[k].flow;
            if pos % 2 == 0 {
                *f = (*f - theta).max(0.0);
            } else {
                *f += theta;
            }
        }
        tree.pivot(leave, ie, je, theta, cost);

        streak = if theta > 0.0 { 0 } else { streak + 1 };
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::Degenerate(
                "transportation simplex exceeded its pivot budget",
            ));
        }
    }

    // Recompute potentials from scratch to shed accumulated rounding.
    tree.root(cost);
    let (u, v) = tree.pot.split_at(m);
    let (u, v) = (u.to_vec(), v.to_vec());
    let objective = tree.cells.iter().map(|c| c.flow * cost[c.i * n + c.j]).sum();
    Ok(BasicSolution {
        basis: tree.cells.iter().map(|c| (c.i, c.j, c.flow)).collect(),
        u,
        v,
        objective,
        pivots,
    })
}

fn northwest_corner(supply: &[f64], demand: &[f64]) -> Tree {
    let (m, n) = (supply.len(), demand.len());
    let mut tree = Tree::new(m, n);
    let mut s = supply.to_vec();
    let mut d = demand.to_vec();
    let (mut i, mut j) = (0, 0);
    loop {
        let last = i == m - 1 && j == n - 1;
        let amount = if last {
            s[i].max(0.0)
        } else {
            s[i].min(d[j]).max(0.0)
        };
        tree.push(i, j, amount);
        if last {
            break;
        }
        s[i] -= amount;
        d[j] -= amount;
        if i == m - 1 {
            j += 1;
        } else if j == n - 1 || s[i] <= d[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    tree
}

/// Every allocation retires exactly one row or column (both for the last
/// one), so the `m + n − 1` allocated cells form a spanning tree.
fn least_cost(supply: &[f64], demand: &[f64], cost: &[f64]) -> Tree {
    let (m, n) = (supply.len(), demand.len());
    let mut tree = Tree::new(m, n);
    let mut order: Vec<usize> = (0..m * n).collect();
    order.sort_by(|&a, &b| cost[a].total_cmp(&cost[b]).then(a.cmp(&b)));
    let mut s = supply.to_vec();
    let mut d = demand.to_vec();
    let mut row_open = vec![true; m];
    let mut col_open = vec![true; n];
    let (mut rows_left, mut cols_left) = (m, n);
    for k in order {
        let (i, j) = (k / n, k % n);
        if !row_open[i] || !col_open[j] {
            continue;
        }
        if rows_left == 1 && cols_left == 1 {
            tree.push(i, j, s[i].max(0.0));
            break;
        }
        let retire_row = if rows_left == 1 {
            false
        } else if cols_left == 1 {
            true
        } else {
            s[i] <= d[j]
        };
        let amount = if retire_row { s[i] } else { d[j] }.max(0.0);
        tree.push(i, j, amount);
        if retire_row {
            row_open[i] = false;
            rows_left -= 1;
            d[j] = (d[j] - amount).max(0.0);
        } else {
            col_open[j] = false;
            cols_left -= 1;
            s[i] = (s[i] - amount).max(0.0);
        }
    }
    tree
}

fn price_bland(tree: &Tree, cost: &[f64], u: &[f64], v: &[f64], tol: f64) -> Option<(usize, usize)> {
    for i in 0..tree.m {
        let row = &cost[i * tree.n..(i + 1) * tree.n];
        for (j, &c) in row.iter().enumerate() {
            if tree.basic_at[i * tree.n + j] == NONBASIC && c - u[i] - v[j] < -tol {
                return Some((i, j));
            }
        }
    }
    None
}

fn price_block(
    tree: &Tree,
    cost: &[f64],
    u: &[f64],
    v: &[f64],
    tol: f64,
    block: usize,
    cursor: &mut usize,
) -> Option<(usize, usize)> {
    let total = tree.m * tree.n;
    let mut best: Option<(usize, f64)> = None;
    let mut scanned = 0;
    let mut idx = *cursor % total;
    while scanned < total {
        let (i, j) = (idx / tree.n, idx % tree.n);
        if tree.basic_at[idx] == NONBASIC {
            let r = cost[idx] - u[i] - v[j];
            if r < -tol && best.is_none_or(|(_, br)| r < br) {
                best = Some((idx, r));
            }
        }
        scanned += 1;
        idx += 1;
        if idx == total {
            idx = 0;
        }
        if scanned % block == 0 && best.is_some() {
            break;
        }
    }
    *cursor = idx;
    best.map(|(k, _)| (k / tree.n, k % tree.n))
}
