//! Communication topologies and consensus weight matrices.
//!
//! Graphs are random geometric graphs (RGGs) on the unit torus — nodes drawn
//! uniformly on `[0,1)²`, an edge wherever the wraparound distance is at most
//! the connectivity radius — or explicit edge lists. Weights use the
//! Metropolis rule, which is local, symmetric, doubly stochastic, and
//! elementwise nonnegative for every connected graph; nonnegativity keeps
//! all downstream variance coefficients nonnegative.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{derived_rng, derived_seed, Role};
use crate::{Error, Result};

/// Default number of redraws before giving up on a connected RGG.
pub const DEFAULT_RETRY_LIMIT: usize = 100;

/// An undirected graph, optionally carrying the geometry it was drawn from.
///
/// Serialized as `{"m", "rho_c", "coords", "edges"}` with 0-based vertex
/// indices and every edge stored as `[i, j]` with `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    /// Node count.
    pub m: usize,
    /// Connectivity radius, when the graph came from an RGG draw.
    pub rho_c: Option<f64>,
    /// Node coordinates on the unit torus, when drawn geometrically.
    pub coords: Option<Vec<[f64; 2]>>,
    /// Edge list, each pair ordered `i < j`, sorted lexicographically.
    pub edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Builds a graph from an explicit edge list, normalizing edge order.
    pub fn from_edges(m: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut norm = Vec::with_capacity(edges.len());
        for &(i, j) in edges {
            if i >= m || j >= m {
                return Err(Error::Dimension(format!(
                    "edge ({i}, {j}) out of range for m={m}"
                )));
            }
            if i == j {
                return Err(Error::InvalidParameter(format!("self-loop at node {i}")));
            }
            norm.push((i.min(j), i.max(j)));
        }
        norm.sort_unstable();
        norm.dedup();
        Ok(Graph { m, rho_c: None, coords: None, edges: norm })
    }

    /// Path graph `0 - 1 - ... - (m-1)`.
    pub fn path(m: usize) -> Self {
        let edges: Vec<_> = (1..m).map(|i| (i - 1, i)).collect();
        Graph { m, rho_c: None, coords: None, edges }
    }

    /// Complete graph on `m` nodes.
    pub fn complete(m: usize) -> Self {
        let mut edges = Vec::new();
        for i in 0..m {
            for j in (i + 1)..m {
                edges.push((i, j));
            }
        }
        Graph { m, rho_c: None, coords: None, edges }
    }

    /// Node degrees.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.m];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    /// True iff the graph has a single connected component (breadth-first
    /// reachability from node 0; the empty graph and `m = 1` are connected).
    pub fn is_connected(&self) -> bool {
        if self.m <= 1 {
            return true;
        }
        let mut adj = vec![Vec::new(); self.m];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut seen = vec![false; self.m];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.m
    }
}

/// Squared wraparound (torus) distance between two points on `[0,1)²`.
fn torus_dist_sq(a: [f64; 2], b: [f64; 2]) -> f64 {
    let mut s = 0.0;
    for k in 0..2 {
        let d = (a[k] - b[k]).abs();
        let d = d.min(1.0 - d);
        s += d * d;
    }
    s
}

/// Recomputes the RGG edge set from coordinates. The edge decision is a pure
/// function of the coordinates and radius; comparing squared distances avoids
/// square-root rounding at the boundary.
pub fn rgg_edges_from_coords(coords: &[[f64; 2]], rho_c: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    let rsq = rho_c * rho_c;
    for i in 0..coords.len() {
        for j in (i + 1)..coords.len() {
            if torus_dist_sq(coords[i], coords[j]) <= rsq {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Draws a random geometric graph on the unit torus. Disconnected output is
/// allowed; use [`generate_connected_rgg`] to redraw until connected.
pub fn generate_rgg(m: usize, rho_c: f64, seed: u64) -> Result<Graph> {
    if m < 1 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    if !(rho_c > 0.0) {
        return Err(Error::InvalidParameter(format!("rho_c must be positive, got {rho_c}")));
    }
    let mut rng = derived_rng(seed, 0, 0, 0, Role::Topology);
    let coords: Vec<[f64; 2]> = (0..m).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect();
    let edges = rgg_edges_from_coords(&coords, rho_c);
    Ok(Graph { m, rho_c: Some(rho_c), coords: Some(coords), edges })
}

/// Draws RGGs with freshly derived seeds until one is connected, up to
/// `retries` attempts (the first draw counts as attempt one).
pub fn generate_connected_rgg(m: usize, rho_c: f64, seed: u64, retries: usize) -> Result<Graph> {
    let attempts = retries.max(1);
    for k in 0..attempts {
        let sub = if k == 0 { seed } else { derived_seed(seed, k as u64) };
        let g = generate_rgg(m, rho_c, sub)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::RetryLimitExhausted { attempts, m, rho_c })
}

/// A symmetric, doubly stochastic, elementwise nonnegative weight matrix
/// whose off-diagonal sparsity pattern matches the graph's edge set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    w: DMatrix<f64>,
}

impl WeightMatrix {
    /// Wraps a matrix after checking the weight-matrix invariants:
    /// symmetry, row/column sums equal to one within `1e-12`, and
    /// nonnegativity.
    pub fn from_matrix(w: DMatrix<f64>) -> Result<Self> {
        let m = w.nrows();
        if w.ncols() != m {
            return Err(Error::Dimension(format!("weight matrix must be square, got {}x{}", m, w.ncols())));
        }
        for i in 0..m {
            for j in 0..m {
                if (w[(i, j)] - w[(j, i)]).abs() > 1e-15 {
                    return Err(Error::InvalidParameter(format!(
                        "weight matrix not symmetric at ({i}, {j})"
                    )));
                }
                if w[(i, j)] < 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "negative weight at ({i}, {j}): {}",
                        w[(i, j)]
                    )));
                }
            }
            let row_sum: f64 = w.row(i).iter().sum();
            if (row_sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "row {i} sums to {row_sum}, expected 1"
                )));
            }
        }
        Ok(WeightMatrix { w })
    }

    /// Node count.
    pub fn m(&self) -> usize {
        self.w.nrows()
    }

    /// The underlying matrix.
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// Second-largest eigenvalue magnitude on the subspace orthogonal to the
    /// all-ones vector: the spectral radius of `W - (1/m)·11ᵀ`. Strictly
    /// below one exactly when consensus contracts.
    pub fn lambda2(&self) -> f64 {
        let m = self.m();
        let j = DMatrix::from_element(m, m, 1.0 / m as f64);
        let shifted = &self.w - j;
        shifted
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(0.0f64, |acc, &e| acc.max(e.abs()))
    }
}

/// Builds the Metropolis weight matrix of a connected graph:
/// `W_ij = 1 / (1 + max(deg_i, deg_j))` on edges, diagonal filled so each
/// row sums to one, zeros elsewhere.
pub fn metropolis_weights(g: &Graph) -> Result<WeightMatrix> {
    if !g.is_connected() {
        return Err(Error::Disconnected);
    }
    let m = g.m;
    let deg = g.degrees();
    let mut w = DMatrix::zeros(m, m);
    for &(i, j) in &g.edges {
        let v = 1.0 / (1.0 + deg[i].max(deg[j]) as f64);
        w[(i, j)] = v;
        w[(j, i)] = v;
    }
    for i in 0..m {
        let off: f64 = w.row(i).iter().sum();
        w[(i, i)] = 1.0 - off;
    }
    WeightMatrix::from_matrix(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn path_graph_metropolis_matches_hand_evaluation() {
        // Degrees 1, 2, 1: edge weights 1/3, diagonals 2/3, 1/3, 2/3.
        let w = metropolis_weights(&Graph::path(3)).unwrap();
        let m = w.as_matrix();
        assert_abs_diff_eq!(m[(0, 1)], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(1, 2)], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(0, 0)], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(1, 1)], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(2, 2)], 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(m[(0, 2)], 0.0);
    }

    #[test]
    fn complete_graph_metropolis_is_uniform_averaging() {
        // deg = m-1 everywhere, so every entry (diagonal included) is 1/m.
        for m in [2usize, 3, 5] {
            let w = metropolis_weights(&Graph::complete(m)).unwrap();
            for i in 0..m {
                for j in 0..m {
                    assert_abs_diff_eq!(w.as_matrix()[(i, j)], 1.0 / m as f64, epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn single_node_weight_matrix_is_identity() {
        let w = metropolis_weights(&Graph::complete(1)).unwrap();
        assert_eq!(w.as_matrix()[(0, 0)], 1.0);
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let g = Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        assert!(!g.is_connected());
        assert!(matches!(metropolis_weights(&g), Err(Error::Disconnected)));
    }

    #[test]
    fn connectivity_basics() {
        assert!(Graph::complete(3).is_connected());
        assert!(Graph::path(3).is_connected());
        assert!(!Graph::from_edges(2, &[]).unwrap().is_connected());
        assert!(Graph::complete(1).is_connected());
    }

    #[test]
    fn large_radius_gives_complete_graph() {
        // Max torus distance is sqrt(0.5) ~ 0.7071.
        let g = generate_rgg(12, 0.7072, 99).unwrap();
        assert_eq!(g.edges.len(), 12 * 11 / 2);
    }

    #[test]
    fn single_node_rgg_has_no_edges() {
        let g = generate_rgg(1, 0.3, 5).unwrap();
        assert!(g.edges.is_empty());
        assert!(g.is_connected());
    }

    #[test]
    fn rgg_is_deterministic_in_seed() {
        let a = generate_rgg(15, 0.35, 1234).unwrap();
        let b = generate_rgg(15, 0.35, 1234).unwrap();
        assert_eq!(a, b);
        let c = generate_rgg(15, 0.35, 1235).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn edges_recompute_from_coords() {
        let g = generate_rgg(25, 0.35, 77).unwrap();
        let redo = rgg_edges_from_coords(g.coords.as_ref().unwrap(), g.rho_c.unwrap());
        assert_eq!(g.edges, redo);
    }

    #[test]
    fn connected_rgg_retries_until_connected() {
        // This (m, radius, seed) draws disconnected graphs on attempts 0-4
        // and connects on attempt 5, so the retry loop is genuinely
        // exercised and must land on the connected draw.
        let first = generate_rgg(10, 0.3, 5).unwrap();
        assert!(!first.is_connected());
        let g = generate_connected_rgg(10, 0.3, 5, DEFAULT_RETRY_LIMIT).unwrap();
        assert!(g.is_connected());
        assert_ne!(g, first);
    }

    #[test]
    fn impossible_connectivity_exhausts_retries() {
        // Radius far below the connectivity threshold for m=30.
        let err = generate_connected_rgg(30, 0.01, 3, 5).unwrap_err();
        assert!(matches!(err, Error::RetryLimitExhausted { attempts: 5, .. }));
    }

    #[test]
    fn graph_json_round_trip() {
        let g = generate_rgg(8, 0.4, 42).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        let back: Graph = serde_json::from_str(&s).unwrap();
        assert_eq!(g, back);
        // Explicit edge-list graphs serialize rho_c / coords as null.
        let p = Graph::path(3);
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"rho_c\":null"));
        assert!(s.contains("\"edges\":[[0,1],[1,2]]"));
    }

    #[test]
    fn lambda2_contracts_for_connected_graphs() {
        for g in [Graph::path(5), Graph::complete(4), generate_connected_rgg(12, 0.4, 9, 100).unwrap()] {
            let w = metropolis_weights(&g).unwrap();
            let l2 = w.lambda2();
            assert!(l2 < 1.0, "lambda2 = {l2}");
            assert!(l2 >= 0.0);
        }
        // Complete graph averages in one step: W - J = 0.
        let w = metropolis_weights(&Graph::complete(6)).unwrap();
        assert!(w.lambda2() < 1e-12);
    }

    #[test]
    fn from_edges_normalizes_and_validates() {
        let g = Graph::from_edges(3, &[(2, 1), (1, 0), (1, 2)]).unwrap();
        assert_eq!(g.edges, vec![(0, 1), (1, 2)]);
        assert!(Graph::from_edges(3, &[(0, 3)]).is_err());
        assert!(Graph::from_edges(3, &[(1, 1)]).is_err());
    }
}

