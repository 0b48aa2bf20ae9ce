//! Weighted row-dependency graphs.
//!
//! Vertex `i` is row `i` of the matrix; an edge `(j, i)` exists for every
//! stored entry `A[i, j]` with `j < i`; the weight of a vertex is the number
//! of stored entries of its row. Graphs built from a matrix therefore have
//! the identity order as a topological order.

use std::collections::VecDeque;
use std::io::Write;

use crate::error::{Error, Result};
use crate::matrix::CsrLowerTriangular;

/// Vertex-weighted directed graph with sorted adjacency in both directions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComputeDag {
    child_ptr: Vec<usize>,
    children: Vec<usize>,
    parent_ptr: Vec<usize>,
    parents: Vec<usize>,
    weights: Vec<u64>,
}

/// Level decomposition: sources are level 0, every other vertex sits one
/// level below its deepest parent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WavefrontDecomposition {
    pub levels: Vec<Vec<usize>>,
    pub level_of: Vec<usize>,
}

impl WavefrontDecomposition {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// `|V|` divided by the number of wavefronts, kept as an exact fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AverageWavefront {
    pub vertices: usize,
    pub wavefronts: usize,
}

impl AverageWavefront {
    pub fn value(&self) -> f64 {
        if self.wavefronts == 0 {
            0.0
        } else {
            self.vertices as f64 / self.wavefronts as f64
        }
    }
}

fn csr_from_lists(n: usize, edges: &[(usize, usize)], by_source: bool) -> (Vec<usize>, Vec<usize>) {
    let mut ptr = vec![0usize; n + 1];
    for &(u, v) in edges {
        ptr[if by_source { u } else { v } + 1] += 1;
    }
    for i in 0..n {
        ptr[i + 1] += ptr[i];
    }
    let mut next = ptr.clone();
    let mut adj = vec![0usize; edges.len()];
    for &(u, v) in edges {
        let (key, val) = if by_source { (u, v) } else { (v, u) };
        adj[next[key]] = val;
        next[key] += 1;
    }
    for i in 0..n {
        adj[ptr[i]..ptr[i + 1]].sort_unstable();
    }
    (ptr, adj)
}

impl ComputeDag {
    /// Builds a graph from an edge list; duplicate edges are merged.
    ///
    /// Self-loops and out-of-range endpoints are rejected. Cycles are allowed
    /// here so that [`ComputeDag::is_acyclic`] can report them.
    pub fn from_edges(weights: Vec<u64>, edges: &[(usize, usize)]) -> Result<Self> {
        let n = weights.len();
        if let Some(v) = weights.iter().position(|&w| w == 0) {
            return Err(Error::InvalidParameter(format!(
                "vertex {v} has zero weight"
            )));
        }
        let mut edges = edges.to_vec();
        for &(u, v) in &edges {
            if u >= n || v >= n {
                return Err(Error::InvalidParameter(format!(
                    "edge ({u}, {v}) out of range for {n} vertices"
                )));
            }
            if u == v {
                return Err(Error::InvalidParameter(format!("self-loop on vertex {u}")));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        let (child_ptr, children) = csr_from_lists(n, &edges, true);
        let (parent_ptr, parents) = csr_from_lists(n, &edges, false);
        Ok(Self {
            child_ptr,
            children,
            parent_ptr,
            parents,
            weights,
        })
    }

    /// The row-dependency graph of a lower-triangular matrix.
    pub fn from_matrix(a: &CsrLowerTriangular) -> Self {
        Self::from_row_range(a, 0..a.n())
    }

    /// The induced graph on a contiguous range of rows.
    ///
    /// Only entries whose column also lies in `range` become edges, but vertex
    /// weights count every stored entry of the row.
    pub fn from_row_range(a: &CsrLowerTriangular, range: std::ops::Range<usize>) -> Self {
        let n = range.len();
        let base = range.start;
        let mut parent_ptr = Vec::with_capacity(n + 1);
        let mut parents = Vec::new();
        let mut weights = Vec::with_capacity(n);
        parent_ptr.push(0);
        for i in range.clone() {
            let cols = a.row_cols(i);
            weights.push(cols.len() as u64);
            parents.extend(
                cols.iter()
                    .filter(|&&c| c >= base && c < i)
                    .map(|&c| c - base),
            );
            parent_ptr.push(parents.len());
        }
        // transpose; iterating rows in order keeps child lists sorted
        let mut child_ptr = vec![0usize; n + 1];
        for &p in &parents {
            child_ptr[p + 1] += 1;
        }
        for i in 0..n {
            child_ptr[i + 1] += child_ptr[i];
        }
        let mut next = child_ptr.clone();
        let mut children = vec![0usize; parents.len()];
        for v in 0..n {
            for &u in &parents[parent_ptr[v]..parent_ptr[v + 1]] {
                children[next[u]] = v;
                next[u] += 1;
            }
        }
        Self {
            child_ptr,
            children,
            parent_ptr,
            parents,
            weights,
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.weights.len()
    }

    pub fn n_edges(&self) -> usize {
        self.children.len()
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[self.child_ptr[v]..self.child_ptr[v + 1]]
    }

    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[self.parent_ptr[v]..self.parent_ptr[v + 1]]
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.child_ptr[v + 1] - self.child_ptr[v]
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.parent_ptr[v + 1] - self.parent_ptr[v]
    }

    pub fn weight(&self, v: usize) -> u64 {
        self.weights[v]
    }

    pub fn weights(&self) -> &[u64] {
        &self.weights
    }

    pub fn total_weight(&self) -> u64 {
        self.weights.iter().sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_vertices()).flat_map(move |u| self.children(u).iter().map(move |&v| (u, v)))
    }

    /// True when every edge goes from a smaller to a larger ID.
    pub fn is_id_topological(&self) -> bool {
        self.edges().all(|(u, v)| u < v)
    }

    /// Kahn's algorithm; smallest ready ID first, so ID-topological graphs
    /// yield the identity order.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let n = self.n_vertices();
        let mut indeg: Vec<usize> = (0..n).map(|v| self.in_degree(v)).collect();
        let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<usize>> = (0..n)
            .filter(|&v| indeg[v] == 0)
            .map(std::cmp::Reverse)
            .collect();
        let mut order = Vec::with_capacity(n);
        while let Some(std::cmp::Reverse(v)) = ready.pop() {
            order.push(v);
            for &c in self.children(v) {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.push(std::cmp::Reverse(c));
                }
            }
        }
        if order.len() < n {
            let stuck: Vec<usize> = (0..n).filter(|&v| indeg[v] > 0).collect();
            return Err(Error::Cycle(stuck));
        }
        Ok(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_ok()
    }

    /// Level decomposition of an acyclic graph.
    ///
    /// # Panics
    ///
    /// Panics if the graph has a cycle.
    pub fn wavefronts(&self) -> WavefrontDecomposition {
        let n = self.n_vertices();
        let order = if self.is_id_topological() {
            (0..n).collect()
        } else {
            self.topological_order()
                .expect("wavefronts of a cyclic graph")
        };
        let mut level_of = vec![0usize; n];
        let mut depth = 0;
        for &v in &order {
            let l = self
                .parents(v)
                .iter()
                .map(|&u| level_of[u] + 1)
                .max()
                .unwrap_or(0);
            level_of[v] = l;
            depth = depth.max(l + 1);
        }
        let mut levels = vec![Vec::new(); depth];
        for v in 0..n {
            levels[level_of[v]].push(v);
        }
        WavefrontDecomposition { levels, level_of }
    }

    pub fn average_wavefront_size(&self) -> AverageWavefront {
        AverageWavefront {
            vertices: self.n_vertices(),
            wavefronts: self.wavefronts().len(),
        }
    }

    /// Removes every edge `(u, w)` that closes a triangle `u -> v -> w`.
    ///
    /// Single pass, no fixpoint iteration. Reachability is preserved: each
    /// removed edge has a two-hop witness whose edges span strictly fewer
    /// topological positions.
    pub fn approx_transitive_reduction(&self) -> ComputeDag {
        let n = self.n_vertices();
        // owner[w] = u marks w as a child of u; slot[w] is the edge position
        let mut owner = vec![usize::MAX; n];
        let mut slot = vec![0usize; n];
        let mut removed = vec![false; self.children.len()];
        for u in 0..n {
            for k in self.child_ptr[u]..self.child_ptr[u + 1] {
                owner[self.children[k]] = u;
                slot[self.children[k]] = k;
            }
            for &v in self.children(u) {
                for &w in self.children(v) {
                    if owner[w] == u {
                        removed[slot[w]] = true;
                    }
                }
            }
        }
        let edges: Vec<(usize, usize)> = self
            .edges()
            .zip(&removed)
            .filter(|(_, &r)| !r)
            .map(|(e, _)| e)
            .collect();
        ComputeDag::from_edges(self.weights.clone(), &edges).expect("subgraph of a valid graph")
    }

    /// Reverses every edge. Weights are unchanged.
    pub fn reversed(&self) -> ComputeDag {
        ComputeDag {
            child_ptr: self.parent_ptr.clone(),
            children: self.parents.clone(),
            parent_ptr: self.child_ptr.clone(),
            parents: self.children.clone(),
            weights: self.weights.clone(),
        }
    }

    /// Relabels vertex `v` to `new_id[v]`.
    pub fn relabeled(&self, new_id: &[usize]) -> ComputeDag {
        let mut weights = vec![0; self.n_vertices()];
        for (v, &nv) in new_id.iter().enumerate() {
            weights[nv] = self.weights[v];
        }
        let edges: Vec<_> = self.edges().map(|(u, v)| (new_id[u], new_id[v])).collect();
        ComputeDag::from_edges(weights, &edges).expect("relabeling of a valid graph")
    }

    /// Writes `# vertices n` followed by one `u v` line per edge.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# vertices {}", self.n_vertices())?;
        for (u, v) in self.edges() {
            writeln!(w, "{u} {v}")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Brute-force reachability (`reach[u][v]`: a non-trivial path `u -> v` exists).
#[doc(hidden)]
pub fn reachability_matrix(g: &ComputeDag) -> Vec<Vec<bool>> {
    let n = g.n_vertices();
    let mut reach = vec![vec![false; n]; n];
    for (s, row) in reach.iter_mut().enumerate() {
        let mut queue: VecDeque<usize> = g.children(s).iter().copied().collect();
        while let Some(v) = queue.pop_front() {
            if !row[v] {
                row[v] = true;
                queue.extend(g.children(v).iter().copied());
            }
        }
    }
    reach
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::fixtures::six_row;
    use proptest::prelude::*;

    fn chain(n: usize) -> ComputeDag {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        ComputeDag::from_edges(vec![1; n], &edges).unwrap()
    }

    #[test]
    fn six_row_graph() {
        let g = ComputeDag::from_matrix(&six_row());
        let edges: Vec<_> = g.edges().collect();
        assert_eq!(edges, vec![(0, 1), (1, 2), (1, 3), (2, 4), (3, 5)]);
        assert_eq!(g.weights(), &[1, 2, 2, 2, 2, 2]);
        assert_eq!(g.total_weight(), 11);
        assert_eq!(g.parents(4), &[2]);
    }

    #[test]
    fn diagonal_and_dense_graphs() {
        let g = ComputeDag::from_matrix(&CsrLowerTriangular::identity(4));
        assert_eq!(g.n_edges(), 0);
        assert_eq!(g.weights(), &[1, 1, 1, 1]);

        let t: Vec<_> = (0..4)
            .flat_map(|i| (0..=i).map(move |j| (i, j, 1.0)))
            .collect();
        let g = ComputeDag::from_matrix(&CsrLowerTriangular::from_triplets(4, &t).unwrap());
        assert_eq!(g.n_edges(), 6);
        assert_eq!(g.weights(), &[1, 2, 3, 4]);
    }

    #[test]
    fn six_row_wavefronts() {
        let g = ComputeDag::from_matrix(&six_row());
        let wf = g.wavefronts();
        assert_eq!(wf.levels, vec![vec![0], vec![1], vec![2, 3], vec![4, 5]]);
        let avg = g.average_wavefront_size();
        assert_eq!((avg.vertices, avg.wavefronts), (6, 4));
        assert_eq!(avg.value(), 1.5);
    }

    #[test]
    fn edgeless_and_chain_wavefronts() {
        let g = ComputeDag::from_edges(vec![1; 7], &[]).unwrap();
        assert_eq!(g.wavefronts().len(), 1);
        assert_eq!(g.average_wavefront_size().value(), 7.0);
        let c = chain(5);
        assert_eq!(
            c.wavefronts().levels,
            (0..5).map(|i| vec![i]).collect::<Vec<_>>()
        );
        assert_eq!(c.average_wavefront_size().value(), 1.0);
    }

    #[test]
    fn triangle_reduction() {
        let g = ComputeDag::from_edges(vec![1; 4], &[(1, 2), (2, 3), (1, 3)]).unwrap();
        let r = g.approx_transitive_reduction();
        assert_eq!(r.edges().collect::<Vec<_>>(), vec![(1, 2), (2, 3)]);
        let f = ComputeDag::from_matrix(&six_row());
        assert_eq!(f.approx_transitive_reduction(), f);
    }

    #[test]
    fn acyclicity() {
        let g = ComputeDag::from_matrix(&six_row());
        assert_eq!(g.topological_order().unwrap(), (0..6).collect::<Vec<_>>());
        let cyc = ComputeDag::from_edges(vec![1, 1, 1], &[(0, 1), (1, 0), (1, 2)]).unwrap();
        assert!(!cyc.is_acyclic());
        match cyc.topological_order() {
            Err(Error::Cycle(w)) => assert_eq!(w, vec![0, 1, 2]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn edge_list_dump() {
        let mut out = Vec::new();
        ComputeDag::from_matrix(&six_row())
            .write_edge_list(&mut out)
            .unwrap();
        let s = String::from_utf8(out).unwrap();
        assert_eq!(s, "# vertices 6\n0 1\n1 2\n1 3\n2 4\n3 5\n");
    }

    #[test]
    fn rejects_bad_graphs() {
        assert!(ComputeDag::from_edges(vec![1, 0], &[]).is_err());
        assert!(ComputeDag::from_edges(vec![1, 1], &[(0, 0)]).is_err());
        assert!(ComputeDag::from_edges(vec![1, 1], &[(0, 2)]).is_err());
    }

    fn random_dag(n: usize, p: f64, seed: u64) -> ComputeDag {
        let a = crate::gen::gen_erdos_renyi(n, p, seed).unwrap();
        ComputeDag::from_matrix(&a)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn reduction_preserves_reachability(n in 1usize..200, p in 0.0f64..0.15, seed in any::<u64>()) {
            let g = random_dag(n, p, seed);
            let r = g.approx_transitive_reduction();
            prop_assert_eq!(r.weights(), g.weights());
            prop_assert!(r.edges().all(|(u, v)| g.children(u).contains(&v)));
            prop_assert_eq!(reachability_matrix(&g), reachability_matrix(&r));
            // no triangle survives its own long edge in the original graph
            for (u, w) in r.edges() {
                prop_assert!(!g.children(u).iter().any(|&v| g.children(v).contains(&w)));
            }
        }

        #[test]
        fn levels_respect_edges(n in 1usize..300, p in 0.0f64..0.1, seed in any::<u64>()) {
            let a = crate::gen::gen_erdos_renyi(n, p, seed).unwrap();
            let g = ComputeDag::from_matrix(&a);
            prop_assert_eq!(g.total_weight() as usize, a.nnz());
            let wf = g.wavefronts();
            for (u, v) in g.edges() {
                prop_assert!(wf.level_of[u] < wf.level_of[v]);
            }
            for v in 0..n {
                let expect = g.parents(v).iter().map(|&u| wf.level_of[u] + 1).max().unwrap_or(0);
                prop_assert_eq!(wf.level_of[v], expect);
            }
        }
    }
}
