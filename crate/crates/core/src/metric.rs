//! Finite metric spaces and their geodesic structure.
//!
//! A [`FiniteMetricSpace`] is a dense, validated distance matrix over a list of
//! point identifiers. When it is induced from a [`WeightedGraph`] the graph is
//! kept, so that discrete geodesics can be extracted with
//! [`FiniteMetricSpace::minimal_geodesic`].

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ndarray::Array2;
use rayon::prelude::*;

use crate::{Error, Result};

/// Absolute tolerance (relative to the largest entry, floored at 1) used by
/// [`validate_metric`].
pub const METRIC_TOL: f64 = 1e-12;

/// Undirected graph with positive edge weights.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl WeightedGraph {
    pub fn new(n: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("graph has no vertices"));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v, w) in &edges {
            if u >= n || v >= n {
                return Err(Error::Malformed(format!(
                    "edge ({u}, {v}) references a vertex outside 0..{n}"
                )));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "edge weight",
                    value: w,
                    reason: "edge weights must be positive and finite",
                });
            }
            if u == v {
                continue;
            }
            adjacency[u].push((v, w));
            adjacency[v].push((u, w));
        }
        for list in &mut adjacency {
            list.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        }
        Ok(Self { n, edges, adjacency })
    }

    /// Path `0 - 1 - ... - (n-1)` with uniform edge length `h`.
    pub fn path(n: usize, h: f64) -> Result<Self> {
        let edges = (1..n).map(|i| (i - 1, i, h)).collect();
        Self::new(n, edges)
    }

    /// Cycle on `n` vertices with uniform edge length `h`.
    pub fn cycle(n: usize, h: f64) -> Result<Self> {
        let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i, h)).collect();
        if n >= 2 {
            edges.push((n - 1, 0, h));
        }
        Self::new(n, edges)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// Neighbours of `v` with edge weights, sorted by neighbour index.
    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adjacency[v]
    }

    /// Weight of the lightest edge between `u` and `v`, if any.
    pub fn edge_weight(&self, u: usize, v: usize) -> Option<f64> {
        self.adjacency[u]
            .iter()
            .filter(|(w, _)| *w == v)
            .map(|(_, wt)| *wt)
            .min_by(|a, b| a.total_cmp(b))
    }

    /// Largest edge weight (the mesh size of a discretization).
    pub fn max_edge(&self) -> f64 {
        self.edges.iter().map(|e| e.2).fold(0.0, f64::max)
    }

    fn dijkstra(&self, source: usize) -> Vec<f64> {
        #[derive(PartialEq)]
        struct Item(f64, usize);
        impl Eq for Item {}
        impl PartialOrd for Item {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }
        impl Ord for Item {
            fn cmp(&self, other: &Self) -> Ordering {
                other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
            }
        }

        let mut dist = vec![f64::INFINITY; self.n];
        dist[source] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(Item(0.0, source));
        while let Some(Item(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &(v, w) in &self.adjacency[u] {
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(Item(nd, v));
                }
            }
        }
        dist
    }
}

/// One violated metric axiom.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Violation {
    NonzeroDiagonal(usize),
    Asymmetric(usize, usize),
    Negative(usize, usize),
    /// `d(i, k) > d(i, j) + d(j, k)`.
    Triangle(usize, usize, usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

/// Checks zero diagonal, symmetry, nonnegativity and the triangle inequality.
///
/// Triangle violations are reported once per unordered pair `(i, k)` with
/// `i < k`, as the triple `(i, j, k)`.
pub fn validate_metric(d: &Array2<f64>) -> Result<ValidationReport> {
    let (rows, cols) = d.dim();
    if rows != cols {
        return Err(Error::Malformed(format!(
            "distance matrix is {rows}x{cols}, not square"
        )));
    }
    if let Some(((i, j), v)) = d.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Malformed(format!(
            "distance matrix entry ({i}, {j}) is {v}"
        )));
    }
    let n = rows;
    let scale = d.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let tol = METRIC_TOL * scale;
    let mut violations = Vec::new();
    for i in 0..n {
        if d[[i, i]].abs() > tol {
            violations.push(Violation::NonzeroDiagonal(i));
        }
        for j in 0..n {
            if d[[i, j]] < -tol {
                violations.push(Violation::Negative(i, j));
            }
            if j > i && (d[[i, j]] - d[[j, i]]).abs() > tol {
                violations.push(Violation::Asymmetric(i, j));
            }
        }
    }
    for i in 0..n {
        for k in (i + 1)..n {
            for j in 0..n {
                if d[[i, k]] > d[[i, j]] + d[[j, k]] + tol {
                    violations.push(Violation::Triangle(i, j, k));
                }
            }
        }
    }
    Ok(ValidationReport {
        ok: violations.is_empty(),
        violations,
    })
}

/// A finite set of points with a validated distance matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMetricSpace {
    ids: Vec<String>,
    dist: Array2<f64>,
    graph: Option<WeightedGraph>,
}

impl FiniteMetricSpace {
    /// Builds a space from an explicit matrix; fails unless every axiom holds.
    pub fn new(ids: Vec<String>, dist: Array2<f64>) -> Result<Self> {
        if ids.len() != dist.nrows() {
            return Err(Error::DimensionMismatch {
                expected: dist.nrows(),
                found: ids.len(),
            });
        }
        let report = validate_metric(&dist)?;
        if !report.ok {
            return Err(Error::Malformed(format!(
                "matrix violates the metric axioms ({} violations, first {:?})",
                report.violations.len(),
                report.violations[0]
            )));
        }
        Ok(Self {
            ids,
            dist,
            graph: None,
        })
    }

    /// Same as [`FiniteMetricSpace::new`] with identifiers `0..n`.
    pub fn from_matrix(dist: Array2<f64>) -> Result<Self> {
        let ids = (0..dist.nrows()).map(|i| i.to_string()).collect();
        Self::new(ids, dist)
    }

    /// All-pairs shortest-path metric of a connected graph.
    pub fn shortest_path_space(graph: WeightedGraph) -> Result<Self> {
        let n = graph.len();
        let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|s| graph.dijkstra(s)).collect();
        if let Some(v) = rows[0].iter().position(|d| !d.is_finite()) {
            return Err(Error::Disconnected(v));
        }
        let mut dist = Array2::zeros((n, n));
        for (i, row) in rows.iter().enumerate() {
            for (j, &d) in row.iter().enumerate() {
                dist[[i, j]] = d;
            }
        }
        // Dijkstra from i and from j may round differently; keep the matrix exactly symmetric.
        for i in 0..n {
            for j in (i + 1)..n {
                let m = dist[[i, j]].min(dist[[j, i]]);
                dist[[i, j]] = m;
                dist[[j, i]] = m;
            }
        }
        Ok(Self {
            ids: (0..n).map(|i| i.to_string()).collect(),
            dist,
            graph: Some(graph),
        })
    }

    /// Uniform discretization of `[0, 1]` by `n` points (mesh `1/(n-1)`).
    pub fn unit_interval(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter {
                name: "n",
                value: n as f64,
                reason: "interval discretization needs at least 2 points",
            });
        }
        Self::shortest_path_space(WeightedGraph::path(n, 1.0 / (n - 1) as f64)?)
    }

    /// Unit-circumference discrete torus with `n` points (mesh `1/n`).
    pub fn unit_torus(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidParameter {
                name: "n",
                value: n as f64,
                reason: "torus needs at least 3 points",
            });
        }
        Self::shortest_path_space(WeightedGraph::cycle(n, 1.0 / n as f64)?)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dist(&self) -> &Array2<f64> {
        &self.dist
    }

    #[inline]
    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[[i, j]]
    }

    pub fn graph(&self) -> Option<&WeightedGraph> {
        self.graph.as_ref()
    }

    pub fn diameter(&self) -> f64 {
        self.dist.iter().copied().fold(0.0, f64::max)
    }

    /// Distance from `x` to its nearest distinct point (`+∞` for a singleton).
    pub fn nearest_distance(&self, x: usize) -> f64 {
        (0..self.len())
            .filter(|&y| y != x)
            .map(|y| self.d(x, y))
            .filter(|&d| d > 0.0)
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest positive distance in the space.
    pub fn min_positive_distance(&self) -> f64 {
        self.dist
            .iter()
            .copied()
            .filter(|&d| d > 0.0)
            .fold(f64::INFINITY, f64::min)
    }

    /// Mesh size: largest graph edge when a graph is attached, otherwise the
    /// largest nearest-neighbour distance.
    pub fn mesh(&self) -> f64 {
        match &self.graph {
            Some(g) => g.max_edge(),
            None => (0..self.len())
                .map(|x| self.nearest_distance(x))
                .filter(|d| d.is_finite())
                .fold(0.0, f64::max),
        }
    }

    /// Returns `c · d` over the same points (and graph, rescaled).
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidParameter {
                name: "scale",
                value: c,
                reason: "metric scale must be positive",
            });
        }
        let graph = match &self.graph {
            Some(g) => Some(WeightedGraph::new(
                g.len(),
                g.edges().iter().map(|&(u, v, w)| (u, v, c * w)).collect(),
            )?),
            None => None,
        };
        Ok(Self {
            ids: self.ids.clone(),
            dist: self.dist.mapv(|d| c * d),
            graph,
        })
    }

    /// Shortest path from `x` to `y` in the attached graph; among all
    /// shortest paths the lexicographically smallest vertex sequence wins.
    pub fn minimal_geodesic(&self, x: usize, y: usize) -> Result<DiscretePath> {
        let graph = self.graph.as_ref().ok_or(Error::NoGeodesicGraph)?;
        let n = self.len();
        if x >= n || y >= n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: x.max(y) + 1,
            });
        }
        let mut vertices = vec![x];
        let mut cumulative = vec![0.0];
        let mut cur = x;
        let tol = METRIC_TOL * self.diameter().max(1.0);
        while cur != y {
            let remaining = self.d(cur, y);
            let next = graph
                .neighbors(cur)
                .iter()
                .find(|&&(v, w)| (w + self.d(v, y) - remaining).abs() <= tol && v != cur)
                .map(|&(v, _)| v)
                .ok_or_else(|| {
                    Error::Malformed(format!(
                        "distance matrix is not the shortest-path metric of the graph at vertex {cur}"
                    ))
                })?;
            let len = *cumulative.last().unwrap() + self.d(cur, next);
            vertices.push(next);
            cumulative.push(len);
            cur = next;
        }
        Ok(DiscretePath {
            vertices,
            cumulative_length: cumulative,
        })
    }
}

/// Ordered vertex sequence with its arc-length parametrization.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretePath {
    pub vertices: Vec<usize>,
    pub cumulative_length: Vec<f64>,
}

impl DiscretePath {
    /// Builds a path, computing lengths from the space.
    pub fn through(space: &FiniteMetricSpace, vertices: Vec<usize>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::Empty("path has no vertices"));
        }
        if let Some(&v) = vertices.iter().find(|&&v| v >= space.len()) {
            return Err(Error::DimensionMismatch {
                expected: space.len(),
                found: v + 1,
            });
        }
        let mut cumulative = Vec::with_capacity(vertices.len());
        cumulative.push(0.0);
        for w in vertices.windows(2) {
            let last = *cumulative.last().unwrap();
            cumulative.push(last + space.d(w[0], w[1]));
        }
        Ok(Self {
            vertices,
            cumulative_length: cumulative,
        })
    }

    pub fn length(&self) -> f64 {
        *self.cumulative_length.last().unwrap_or(&0.0)
    }

    pub fn start(&self) -> usize {
        self.vertices[0]
    }

    pub fn end(&self) -> usize {
        *self.vertices.last().unwrap()
    }

    /// Constant-speed parameters `s_k = cumulative_length[k] / length` in `[0, 1]`.
    pub fn parameters(&self) -> Vec<f64> {
        let total = self.length();
        if total == 0.0 {
            return vec![0.0; self.vertices.len()];
        }
        self.cumulative_length.iter().map(|c| c / total).collect()
    }

    /// Largest single step along the path.
    pub fn max_step(&self) -> f64 {
        self.cumulative_length
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}
