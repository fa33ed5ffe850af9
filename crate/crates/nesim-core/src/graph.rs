//! Communication topology and the graph-derived constants consumed by the
//! strategy-updating rule and its gain conditions.
//!
//! The weighted graph is stored densely. Problem sizes stay small (the
//! augmented estimate space has dimension `N^2 * n`, a few hundred at most),
//! so every spectral quantity is computed by a full symmetric eigendecomposition
//! rather than sparse iterative methods.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

/// Tolerance on the second-smallest Laplacian eigenvalue below which the
/// graph is reported as disconnected.
pub const CONNECTIVITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("weight matrix is {rows}x{cols}, expected square")]
    NonSquare { rows: usize, cols: usize },
    #[error("negative edge weight a[{i}][{j}] = {value}")]
    NegativeWeight { i: usize, j: usize, value: f64 },
    #[error("nonzero self-loop weight a[{i}][{i}] = {value}")]
    SelfLoop { i: usize, value: f64 },
    #[error("undirected graph has asymmetric weights at ({i},{j}): {forward} vs {backward}")]
    Asymmetric {
        i: usize,
        j: usize,
        forward: f64,
        backward: f64,
    },
    #[error("digraph is not weight-balanced at node {i}: out {out_sum} vs in {in_sum}")]
    NotWeightBalanced { i: usize, out_sum: f64, in_sum: f64 },
    #[error("graph is disconnected (lambda2 = {lambda2:.3e})")]
    Disconnected { lambda2: f64 },
    #[error("strategy dimension must be >= 1")]
    ZeroDimension,
}

/// Weighted communication topology over `N` agents.
///
/// Undirected graphs must have exactly symmetric weights. Directed graphs are
/// accepted only when weight-balanced (row sums equal column sums at every
/// node), the class for which the digraph convergence result holds.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n_agents: usize,
    weights: DMatrix<f64>,
    directed: bool,
}

/// Constants derived from the graph that the rule and the gain conditions use.
///
/// `lambda2` is the algebraic connectivity of the Laplacian `L` (for digraphs,
/// the second-smallest eigenvalue of the symmetrized `(L + L^T)/2`).
/// `lap_norm`, `rl_norm` and `stsl_norm` are the spectral norms of the lifted
/// Laplacian and of its row-selected / self-block-masked products appearing in
/// the theorem statements.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphConstants {
    pub lambda2: f64,
    pub lap_norm: f64,
    pub rl_norm: f64,
    pub stsl_norm: f64,
    pub degrees: DVector<f64>,
}

impl Graph {
    /// Validate a weight matrix and build a graph.
    pub fn new(weights: DMatrix<f64>, directed: bool) -> Result<Self, GraphError> {
        let (rows, cols) = weights.shape();
        if rows != cols {
            return Err(GraphError::NonSquare { rows, cols });
        }
        let n = rows;
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(GraphError::SelfLoop {
                    i,
                    value: weights[(i, i)],
                });
            }
            for j in 0..n {
                if weights[(i, j)] < 0.0 {
                    return Err(GraphError::NegativeWeight {
                        i,
                        j,
                        value: weights[(i, j)],
                    });
                }
            }
        }
        if !directed {
            for i in 0..n {
                for j in (i + 1)..n {
                    if weights[(i, j)] != weights[(j, i)] {
                        return Err(GraphError::Asymmetric {
                            i,
                            j,
                            forward: weights[(i, j)],
                            backward: weights[(j, i)],
                        });
                    }
                }
            }
        } else {
            // Weight balance, checked with a scaled tolerance: exact balance is
            // a modeling requirement, not a float identity.
            let scale = weights.amax().max(1.0);
            for i in 0..n {
                let out_sum: f64 = weights.row(i).sum();
                let in_sum: f64 = weights.column(i).sum();
                if libm::fabs(out_sum - in_sum) > 1e-9 * scale {
                    return Err(GraphError::NotWeightBalanced { i, out_sum, in_sum });
                }
            }
        }
        Ok(Self {
            n_agents: n,
            weights,
            directed,
        })
    }

    /// Undirected cycle on `n` nodes with uniform edge weight.
    pub fn cycle(n: usize, weight: f64) -> Result<Self, GraphError> {
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            let j = (i + 1) % n;
            if i != j {
                w[(i, j)] = weight;
                w[(j, i)] = weight;
            }
        }
        Self::new(w, false)
    }

    /// Undirected path 0 - 1 - ... - (n-1) with uniform edge weight.
    pub fn path(n: usize, weight: f64) -> Result<Self, GraphError> {
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n.saturating_sub(1) {
            w[(i, i + 1)] = weight;
            w[(i + 1, i)] = weight;
        }
        Self::new(w, false)
    }

    /// Undirected complete graph with uniform edge weight.
    pub fn complete(n: usize, weight: f64) -> Result<Self, GraphError> {
        let mut w = DMatrix::from_element(n, n, weight);
        for i in 0..n {
            w[(i, i)] = 0.0;
        }
        Self::new(w, false)
    }

    /// Directed cycle 0 -> 1 -> ... -> (n-1) -> 0 with uniform edge weight.
    /// Weight-balanced by construction.
    pub fn directed_cycle(n: usize, weight: f64) -> Result<Self, GraphError> {
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            let j = (i + 1) % n;
            if i != j {
                w[(i, j)] = weight;
            }
        }
        Self::new(w, true)
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn directed(&self) -> bool {
        self.directed
    }

    /// Edge weight `a_ij`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Weighted degree `d_i = sum_j a_ij` of every node.
    pub fn degrees(&self) -> DVector<f64> {
        DVector::from_iterator(self.n_agents, self.weights.row_iter().map(|r| r.sum()))
    }

    /// Graph Laplacian `L = D - A`; every row sums to zero.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.n_agents;
        let mut lap = -self.weights.clone();
        for i in 0..n {
            lap[(i, i)] = self.weights.row(i).sum();
        }
        lap
    }

    /// Connectivity by traversal over edges with positive weight.
    ///
    /// Undirected: every node reachable from node 0. Directed: strong
    /// connectivity, i.e. node 0 reaches every node both along and against
    /// the edge directions.
    pub fn is_connected(&self) -> bool {
        if self.n_agents == 0 {
            return true;
        }
        let forward = self.reach_count(false);
        if !self.directed {
            return forward == self.n_agents;
        }
        forward == self.n_agents && self.reach_count(true) == self.n_agents
    }

    fn reach_count(&self, transpose: bool) -> usize {
        let n = self.n_agents;
        let mut seen = alloc::vec![false; n];
        let mut queue = alloc::vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop() {
            for v in 0..n {
                let w = if transpose {
                    self.weights[(v, u)]
                } else {
                    self.weights[(u, v)]
                };
                if w > 0.0 && !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push(v);
                }
            }
        }
        count
    }

    /// Compute all rule/theorem constants for strategy dimension `dim`.
    ///
    /// Materializes the lifted Laplacian `L (x) I_{N n}` (dimension `N^2 n`)
    /// together with the own-block row selection and the self-block mask, and
    /// returns their spectral norms. Fails with [`GraphError::Disconnected`]
    /// when the algebraic connectivity is not positive.
    pub fn constants(&self, dim: usize) -> Result<GraphConstants, GraphError> {
        if dim == 0 {
            return Err(GraphError::ZeroDimension);
        }
        let n = self.n_agents;
        let lap = self.laplacian();
        let sym = if self.directed {
            (&lap + lap.transpose()) * 0.5
        } else {
            lap.clone()
        };
        let lambda2 = second_smallest_eigenvalue(&sym);
        if lambda2 <= CONNECTIVITY_TOL {
            return Err(GraphError::Disconnected { lambda2 });
        }

        let block = n * dim; // size of one estimate vector
        let lifted = lap.kronecker(&DMatrix::identity(block, block));

        // Own-block row selection: row (i, c) of `rl` is row (i*block + i*dim + c)
        // of the lifted Laplacian.
        let mut rl = DMatrix::zeros(n * dim, n * block);
        for i in 0..n {
            for c in 0..dim {
                rl.row_mut(i * dim + c)
                    .copy_from(&lifted.row(i * block + i * dim + c));
            }
        }

        // Self-block mask: zero the rows of the lifted Laplacian that act on
        // each agent's own strategy slot, keeping only the estimate blocks.
        let mut stsl = lifted.clone();
        for i in 0..n {
            for c in 0..dim {
                stsl.row_mut(i * block + i * dim + c).fill(0.0);
            }
        }

        Ok(GraphConstants {
            lambda2,
            lap_norm: spectral_norm(&lifted),
            rl_norm: spectral_norm(&rl),
            stsl_norm: spectral_norm(&stsl),
            degrees: self.degrees(),
        })
    }
}

/// Second-smallest eigenvalue of a symmetric matrix. A single-node graph is
/// vacuously connected, reported as infinity.
fn second_smallest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() < 2 {
        return f64::INFINITY;
    }
    let mut eig: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| a.total_cmp(b));
    eig[1]
}

/// Spectral norm via full symmetric eigendecomposition of `M^T M`.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let gram = m.transpose() * m;
    let max = gram
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v));
    libm::sqrt(max.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    #[test]
    fn laplacian_two_node_path() {
        let g = Graph::path(2, 1.0).unwrap();
        let l = g.laplacian();
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn laplacian_five_cycle_is_circulant() {
        let g = Graph::cycle(5, 1.0).unwrap();
        let l = g.laplacian();
        for i in 0..5 {
            assert_eq!(l[(i, i)], 2.0);
            assert_eq!(l[(i, (i + 1) % 5)], -1.0);
            assert_eq!(l[(i, (i + 4) % 5)], -1.0);
            assert_eq!(l[(i, (i + 2) % 5)], 0.0);
        }
    }

    #[test]
    fn laplacian_empty_graph_is_zero() {
        let g = Graph::new(DMatrix::zeros(3, 3), false).unwrap();
        assert_eq!(g.laplacian(), DMatrix::zeros(3, 3));
    }

    #[test]
    fn laplacian_row_and_column_sums_vanish() {
        let g = Graph::cycle(7, 0.3).unwrap();
        let l = g.laplacian();
        for i in 0..7 {
            assert!(l.row(i).sum().abs() < 1e-12);
            assert!(l.column(i).sum().abs() < 1e-12);
        }
    }

    #[test]
    fn five_cycle_constants_match_analytic_values() {
        let g = Graph::cycle(5, 1.0).unwrap();
        let c = g.constants(1).unwrap();
        let analytic = 2.0 - 2.0 * (2.0 * PI / 5.0).cos();
        assert!((c.lambda2 - analytic).abs() < 1e-9);
        assert!((c.lambda2 - 1.382).abs() < 1e-3);
        assert_eq!(c.degrees, DVector::from_element(5, 2.0));
        // ||RL|| = sqrt(max_i sum_j L_ij^2) = sqrt(6) for the unit cycle.
        assert!((c.rl_norm - 6.0f64.sqrt()).abs() < 1e-10);
        // ||L|| = 2 - 2 cos(4 pi / 5).
        let lap_max = 2.0 - 2.0 * (4.0 * PI / 5.0).cos();
        assert!((c.lap_norm - lap_max).abs() < 1e-9);
        assert!(c.rl_norm <= c.lap_norm + 1e-12);
        assert!(c.stsl_norm <= c.lap_norm + 1e-12);
    }

    #[test]
    fn kronecker_lift_preserves_spectral_norm() {
        let g = Graph::cycle(5, 1.0).unwrap();
        let l = g.laplacian();
        let small = spectral_norm(&l);
        let lifted = l.kronecker(&DMatrix::identity(5, 5));
        assert!((spectral_norm(&lifted) - small).abs() < 1e-10);
    }

    #[test]
    fn connectivity_cases() {
        assert!(Graph::cycle(5, 1.0).unwrap().is_connected());
        // Two disjoint 2-node components.
        let mut w = DMatrix::zeros(4, 4);
        w[(0, 1)] = 1.0;
        w[(1, 0)] = 1.0;
        w[(2, 3)] = 1.0;
        w[(3, 2)] = 1.0;
        assert!(!Graph::new(w, false).unwrap().is_connected());
        // Directed 3-cycle is strongly connected and weight-balanced.
        assert!(Graph::directed_cycle(3, 1.0).unwrap().is_connected());
    }

    #[test]
    fn disconnected_graph_rejected_by_constants() {
        let mut w = DMatrix::zeros(4, 4);
        w[(0, 1)] = 1.0;
        w[(1, 0)] = 1.0;
        w[(2, 3)] = 1.0;
        w[(3, 2)] = 1.0;
        let g = Graph::new(w, false).unwrap();
        match g.constants(1) {
            Err(GraphError::Disconnected { lambda2 }) => assert!(lambda2.abs() < 1e-10),
            other => panic!("expected Disconnected, got {other:?}"),
        }
    }

    #[test]
    fn unbalanced_digraph_rejected() {
        let mut w = DMatrix::zeros(3, 3);
        w[(0, 1)] = 1.0;
        w[(1, 2)] = 2.0;
        w[(2, 0)] = 1.0;
        match Graph::new(w, true) {
            Err(GraphError::NotWeightBalanced { .. }) => {}
            other => panic!("expected NotWeightBalanced, got {other:?}"),
        }
    }

    #[test]
    fn directed_three_cycle_symmetrized_lambda2() {
        let g = Graph::directed_cycle(3, 1.0).unwrap();
        let c = g.constants(1).unwrap();
        assert!((c.lambda2 - 1.5).abs() < 1e-12);
    }

    #[test]
    fn invalid_weight_matrices_rejected() {
        assert!(matches!(
            Graph::new(DMatrix::zeros(2, 3), false),
            Err(GraphError::NonSquare { .. })
        ));
        let mut w = DMatrix::zeros(2, 2);
        w[(0, 1)] = -1.0;
        w[(1, 0)] = -1.0;
        assert!(matches!(
            Graph::new(w, false),
            Err(GraphError::NegativeWeight { .. })
        ));
        let mut w = DMatrix::zeros(2, 2);
        w[(0, 0)] = 0.5;
        assert!(matches!(Graph::new(w, false), Err(GraphError::SelfLoop { .. })));
        let mut w = DMatrix::zeros(2, 2);
        w[(0, 1)] = 1.0;
        w[(1, 0)] = 2.0;
        assert!(matches!(
            Graph::new(w, false),
            Err(GraphError::Asymmetric { .. })
        ));
    }
}
