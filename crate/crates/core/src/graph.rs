//! Undirected graph container and the renormalized aggregation matrix
//! `L = D̃^{-1/2} (A + I) D̃^{-1/2}`.

use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphIssue {
    SelfLoop { edge: usize, node: usize },
    OutOfRange { edge: usize, node: usize },
    Duplicate { edge: usize, first: usize },
    NonPositiveWeight { edge: usize },
}

impl fmt::Display for GraphIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphIssue::SelfLoop { edge, node } => write!(f, "edge {edge}: self-loop on node {node}"),
            GraphIssue::OutOfRange { edge, node } => write!(f, "edge {edge}: node {node} out of range"),
            GraphIssue::Duplicate { edge, first } => {
                write!(f, "edge {edge}: duplicates edge {first}")
            }
            GraphIssue::NonPositiveWeight { edge } => write!(f, "edge {edge}: weight must be > 0"),
        }
    }
}

/// Reports every structural problem in an edge list without failing.
pub fn validate_graph(
    num_nodes: usize,
    edges: &[(usize, usize)],
    weights: Option<&[f64]>,
) -> Vec<GraphIssue> {
    let mut issues = Vec::new();
    let mut seen = std::collections::HashMap::new();
    for (e, &(i, j)) in edges.iter().enumerate() {
        let mut in_range = true;
        for node in [i, j] {
            if node >= num_nodes {
                issues.push(GraphIssue::OutOfRange { edge: e, node });
                in_range = false;
            }
        }
        if i == j {
            issues.push(GraphIssue::SelfLoop { edge: e, node: i });
            continue;
        }
        if !in_range {
            continue;
        }
        let key = (i.min(j), i.max(j));
        if let Some(&first) = seen.get(&key) {
            issues.push(GraphIssue::Duplicate { edge: e, first });
        } else {
            seen.insert(key, e);
        }
    }
    if let Some(w) = weights {
        for (e, &v) in w.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                issues.push(GraphIssue::NonPositiveWeight { edge: e });
            }
        }
    }
    issues
}

impl Graph {
    pub fn new(num_nodes: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        Self::build(num_nodes, edges, None)
    }

    pub fn with_weights(num_nodes: usize, edges: Vec<(usize, usize)>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != edges.len() {
            return Err(Error::InvalidGraph(format!(
                "{} weights for {} edges",
                weights.len(),
                edges.len()
            )));
        }
        Self::build(num_nodes, edges, Some(weights))
    }

    fn build(num_nodes: usize, edges: Vec<(usize, usize)>, weights: Option<Vec<f64>>) -> Result<Self> {
        let issues = validate_graph(num_nodes, &edges, weights.as_deref());
        if let Some(first) = issues.first() {
            return Err(Error::InvalidGraph(format!(
                "{first} ({} issue(s) total)",
                issues.len()
            )));
        }
        Ok(Self {
            num_nodes,
            edges,
            weights,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Per-edge weights, `None` for an unweighted graph.
    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn weight(&self, edge: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[edge])
    }

    /// Distinct neighbors of every node.
    pub fn neighbor_sets(&self) -> Vec<HashSet<usize>> {
        let mut out = vec![HashSet::new(); self.num_nodes];
        for &(i, j) in &self.edges {
            out[i].insert(j);
            out[j].insert(i);
        }
        out
    }

    /// Symmetric adjacency `A` (no self-loops).
    pub fn adjacency(&self) -> SparseMatrix {
        let mut t = Vec::with_capacity(2 * self.edges.len());
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            let w = self.weight(e);
            t.push((i, j, w));
            t.push((j, i, w));
        }
        SparseMatrix::from_triplets(self.num_nodes, self.num_nodes, &t)
            .expect("validated edges form a valid matrix")
    }
}

/// The aggregation operator and its elementwise square.
#[derive(Debug, Clone)]
pub struct Aggregation {
    l: SparseMatrix,
    l_sq: SparseMatrix,
}

impl Aggregation {
    pub fn matrix(&self) -> &SparseMatrix {
        &self.l
    }

    pub fn squared(&self) -> &SparseMatrix {
        &self.l_sq
    }

    pub fn num_nodes(&self) -> usize {
        self.l.rows()
    }
}

pub fn build_aggregation(g: &Graph) -> Aggregation {
    let n = g.num_nodes();
    let mut t = Vec::with_capacity(2 * g.num_edges() + n);
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        let w = g.weight(e);
        t.push((i, j, w));
        t.push((j, i, w));
    }
    for i in 0..n {
        t.push((i, i, 1.0));
    }
    let a_tilde = SparseMatrix::from_triplets(n, n, &t).expect("validated edges form a valid matrix");
    let deg: Vec<f64> = (0..n)
        .map(|r| a_tilde.row_iter(r).map(|(_, v)| v).sum::<f64>())
        .collect();
    let mut values = Vec::with_capacity(a_tilde.nnz());
    for r in 0..n {
        for (c, v) in a_tilde.row_iter(r) {
            values.push(v / (deg[r] * deg[c]).sqrt());
        }
    }
    let l = SparseMatrix::from_csr(
        n,
        n,
        a_tilde.offsets().to_vec(),
        a_tilde.indices().to_vec(),
        values,
    )
    .expect("same pattern as a valid matrix");
    let l_sq = l.hadamard_square();
    Aggregation { l, l_sq }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Dense evaluation of D̃^{-1/2}(A+I)D̃^{-1/2}.
    fn dense_oracle(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; n]; n];
        for &(i, j) in edges {
            a[i][j] = 1.0;
            a[j][i] = 1.0;
        }
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += 1.0;
        }
        let d: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
        (0..n)
            .map(|i| (0..n).map(|j| a[i][j] / (d[i] * d[j]).sqrt()).collect())
            .collect()
    }

    #[test]
    fn single_node() {
        let agg = build_aggregation(&Graph::new(1, vec![]).unwrap());
        assert_eq!(agg.matrix().to_dense().data(), &[1.0]);
    }

    #[test]
    fn two_nodes_one_edge() {
        let agg = build_aggregation(&Graph::new(2, vec![(0, 1)]).unwrap());
        assert_eq!(agg.matrix().to_dense().data(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn path_graph() {
        let agg = build_aggregation(&Graph::new(3, vec![(0, 1), (1, 2)]).unwrap());
        let l = agg.matrix();
        assert!((l.get(1, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert!((l.get(0, 1) - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        let oracle = dense_oracle(3, &[(0, 1), (1, 2)]);
        for i in 0..3 {
            for j in 0..3 {
                assert!((l.get(i, j) - oracle[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn isolated_node_is_fine() {
        let agg = build_aggregation(&Graph::new(3, vec![(0, 1)]).unwrap());
        assert_eq!(agg.matrix().get(2, 2), 1.0);
    }

    #[test]
    fn validation_report() {
        assert!(validate_graph(3, &[(0, 1), (1, 2)], None).is_empty());
        assert_eq!(
            validate_graph(3, &[(0, 0)], None),
            vec![GraphIssue::SelfLoop { edge: 0, node: 0 }]
        );
        assert_eq!(
            validate_graph(3, &[(0, 3)], None),
            vec![GraphIssue::OutOfRange { edge: 0, node: 3 }]
        );
        assert_eq!(
            validate_graph(3, &[(0, 1), (1, 0)], None),
            vec![GraphIssue::Duplicate { edge: 1, first: 0 }]
        );
        assert!(Graph::new(3, vec![(2, 2)]).is_err());
        assert!(Graph::with_weights(2, vec![(0, 1)], vec![0.0]).is_err());
    }

    #[test]
    fn regular_graph_rows_sum_to_one() {
        // 6-cycle: 2-regular
        let edges: Vec<_> = (0..6).map(|i| (i, (i + 1) % 6)).collect();
        let l = build_aggregation(&Graph::new(6, edges).unwrap()).matrix().to_dense();
        for i in 0..6 {
            let s: f64 = l.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_edges_use_values() {
        let g = Graph::with_weights(2, vec![(0, 1)], vec![3.0]).unwrap();
        let l = build_aggregation(&g).matrix().to_dense();
        // Ã = [[1,3],[3,1]], d̃ = 4
        assert!((l.get(0, 1) - 0.75).abs() < 1e-15);
        assert!((l.get(0, 0) - 0.25).abs() < 1e-15);
    }

    fn arb_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (1usize..25).prop_flat_map(|n| {
            let pairs = proptest::collection::vec((0..n, 0..n), 0..60);
            (Just(n), pairs)
        })
        .prop_map(|(n, pairs)| {
            let mut seen = HashSet::new();
            let edges = pairs
                .into_iter()
                .filter(|&(i, j)| i != j && seen.insert((i.min(j), i.max(j))))
                .collect();
            (n, edges)
        })
    }

    proptest! {
        #[test]
        fn aggregation_properties((n, edges) in arb_graph()) {
            let agg = build_aggregation(&Graph::new(n, edges.clone()).unwrap());
            let l = agg.matrix().to_dense();
            prop_assert!(l.max_abs_diff(&l.transpose()) < 1e-12);
            prop_assert_eq!(agg.squared().to_dense(), l.map(|v| v * v));
            let oracle = dense_oracle(n, &edges);
            // Row sums equal Σ_n Ã_in / sqrt(d̃_i d̃_n).
            for i in 0..n {
                let want: f64 = oracle[i].iter().sum();
                let got: f64 = l.row(i).iter().sum();
                prop_assert!((want - got).abs() < 1e-12);
            }
        }
    }
}
