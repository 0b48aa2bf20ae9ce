//! Acyclicity-preserving coarsening.
//!
//! A vertex set is a *cascade* when each of its entry vertices (targets of
//! incoming cut edges) reaches each of its exit vertices (sources of outgoing
//! cut edges). Quotienting a DAG by a partition into cascades yields a DAG.
//! In-funnels, cascades with at most one exit vertex, are grown here
//! backwards from a root by absorbing parents whose children are all inside.

use std::collections::{BinaryHeap, VecDeque};
use std::io::Write;

use crate::dag::ComputeDag;
use crate::error::{Error, Result};
use crate::schedule::BspSchedule;

/// Disjoint vertex groups covering the graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    part_of: Vec<usize>,
    parts: Vec<Vec<usize>>,
    part_weight: Vec<u64>,
}

impl Partition {
    /// Checks that `parts` cover every vertex of `g` exactly once.
    pub fn new(g: &ComputeDag, mut parts: Vec<Vec<usize>>) -> Result<Self> {
        let n = g.n_vertices();
        let mut part_of = vec![usize::MAX; n];
        for (i, part) in parts.iter_mut().enumerate() {
            if part.is_empty() {
                return Err(Error::InvalidParameter(format!("part {i} is empty")));
            }
            part.sort_unstable();
            for &v in part.iter() {
                if v >= n || part_of[v] != usize::MAX {
                    return Err(Error::InvalidParameter(format!(
                        "vertex {v} is out of range or in two parts"
                    )));
                }
                part_of[v] = i;
            }
        }
        if let Some(v) = part_of.iter().position(|&p| p == usize::MAX) {
            return Err(Error::InvalidParameter(format!("vertex {v} is in no part")));
        }
        let part_weight = parts
            .iter()
            .map(|p| p.iter().map(|&v| g.weight(v)).sum())
            .collect();
        Ok(Self {
            part_of,
            parts,
            part_weight,
        })
    }

    pub fn singletons(g: &ComputeDag) -> Self {
        Self::new(g, (0..g.n_vertices()).map(|v| vec![v]).collect()).expect("singletons")
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn part_of(&self, v: usize) -> usize {
        self.part_of[v]
    }

    /// Members of each part, ascending.
    pub fn parts(&self) -> &[Vec<usize>] {
        &self.parts
    }

    pub fn part_weight(&self, i: usize) -> u64 {
        self.part_weight[i]
    }

    /// Writes one `vertex part` line per vertex.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        for (v, p) in self.part_of.iter().enumerate() {
            writeln!(w, "{v} {p}")?;
        }
        w.flush()?;
        Ok(())
    }
}

fn cut_boundary(g: &ComputeDag, inside: &[bool], set: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let entries = set
        .iter()
        .copied()
        .filter(|&v| g.parents(v).iter().any(|&u| !inside[u]))
        .collect();
    let exits = set
        .iter()
        .copied()
        .filter(|&v| g.children(v).iter().any(|&w| !inside[w]))
        .collect();
    (entries, exits)
}

/// True when every entry vertex of `set` reaches every exit vertex in `g`.
pub fn is_cascade(g: &ComputeDag, set: &[usize]) -> bool {
    let mut inside = vec![false; g.n_vertices()];
    for &v in set {
        inside[v] = true;
    }
    let (entries, exits) = cut_boundary(g, &inside, set);
    if entries.is_empty() || exits.is_empty() {
        return true;
    }
    let mut seen = vec![false; g.n_vertices()];
    for &s in &entries {
        seen.iter_mut().for_each(|x| *x = false);
        let mut queue = VecDeque::from([s]);
        seen[s] = true;
        while let Some(v) = queue.pop_front() {
            for &c in g.children(v) {
                if !seen[c] {
                    seen[c] = true;
                    queue.push_back(c);
                }
            }
        }
        if exits.iter().any(|&e| !seen[e]) {
            return false;
        }
    }
    true
}

/// A cascade with at most one exit vertex.
pub fn is_in_funnel(g: &ComputeDag, set: &[usize]) -> bool {
    let mut inside = vec![false; g.n_vertices()];
    for &v in set {
        inside[v] = true;
    }
    let (_, exits) = cut_boundary(g, &inside, set);
    exits.len() <= 1 && is_cascade(g, set)
}

/// `max(20 * average vertex weight, heaviest vertex)`, rounded up.
pub fn default_funnel_cap(g: &ComputeDag) -> u64 {
    let n = g.n_vertices().max(1) as u64;
    let avg_times_20 = (20 * g.total_weight()).div_ceil(n);
    avg_times_20.max(g.weights().iter().copied().max().unwrap_or(1))
}

/// Partitions `g` into in-funnels of weight at most `cap`.
///
/// Roots are visited in reverse topological order. A part grows from its
/// root by absorbing a parent once all of that parent's children are in the
/// part, largest ID first; a candidate that would push the part weight past
/// `cap` is left for a later part. A root heavier than `cap` forms a
/// singleton.
pub fn funnel_partition(g: &ComputeDag, cap: u64) -> Partition {
    let n = g.n_vertices();
    let order = if g.is_id_topological() {
        (0..n).collect::<Vec<_>>()
    } else {
        g.topological_order()
            .expect("funnel partition of a cyclic graph")
    };
    let mut visited = vec![false; n];
    let mut children_in = vec![0usize; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut queue: BinaryHeap<usize> = BinaryHeap::new();
    let mut parts = Vec::new();

    for &root in order.iter().rev() {
        if visited[root] {
            continue;
        }
        let mut part = Vec::new();
        let mut weight = 0u64;
        queue.push(root);
        while let Some(w) = queue.pop() {
            if !part.is_empty() && weight + g.weight(w) > cap {
                continue;
            }
            weight += g.weight(w);
            part.push(w);
            visited[w] = true;
            for &u in g.parents(w) {
                if visited[u] {
                    continue;
                }
                if children_in[u] == 0 {
                    touched.push(u);
                }
                children_in[u] += 1;
                if children_in[u] == g.out_degree(u) {
                    queue.push(u);
                }
            }
        }
        for u in touched.drain(..) {
            children_in[u] = 0;
        }
        parts.push(part);
    }
    Partition::new(g, parts).expect("funnel parts cover the graph")
}

/// Out-funnel partition: in-funnels of the reversed graph.
pub fn out_funnel_partition(g: &ComputeDag, cap: u64) -> Partition {
    let n = g.n_vertices();
    // relabel v -> n-1-v so the reversed graph stays ID-topological
    let flip: Vec<usize> = (0..n).map(|v| n - 1 - v).collect();
    let rev = g.reversed().relabeled(&flip);
    let p = funnel_partition(&rev, cap);
    let parts = p
        .parts()
        .iter()
        .map(|part| part.iter().map(|&v| n - 1 - v).collect())
        .collect();
    Partition::new(g, parts).expect("flipped parts cover the graph")
}

/// The quotient graph together with the maps back to the fine graph.
#[derive(Debug, Clone)]
pub struct Coarsening {
    /// Quotient graph; its ID order is topological.
    pub dag: ComputeDag,
    /// Coarse vertex of every fine vertex.
    pub coarse_of: Vec<usize>,
    /// Fine vertices of every coarse vertex.
    pub members: Vec<Vec<usize>>,
    /// For every coarse edge, one fine edge that induces it.
    pub edge_origin: Vec<((usize, usize), (usize, usize))>,
}

/// Quotient of `g` by `p` with self-loops removed.
///
/// Coarse IDs follow a topological order of the quotient, breaking ties by
/// the smallest member. Fails if the quotient has a cycle.
pub fn coarsen(g: &ComputeDag, p: &Partition) -> Result<Coarsening> {
    if p.part_of.len() != g.n_vertices() {
        return Err(Error::LengthMismatch {
            expected: g.n_vertices(),
            got: p.part_of.len(),
        });
    }
    let m = p.len();
    let mut origin: std::collections::BTreeMap<(usize, usize), (usize, usize)> =
        std::collections::BTreeMap::new();
    for (u, w) in g.edges() {
        let (pu, pw) = (p.part_of(u), p.part_of(w));
        if pu != pw {
            origin.entry((pu, pw)).or_insert((u, w));
        }
    }
    let part_edges: Vec<(usize, usize)> = origin.keys().copied().collect();
    let by_part = ComputeDag::from_edges(p.part_weight.clone(), &part_edges)?;

    // Kahn's algorithm keyed by smallest member
    let mut indeg: Vec<usize> = (0..m).map(|i| by_part.in_degree(i)).collect();
    let mut ready: BinaryHeap<std::cmp::Reverse<(usize, usize)>> = (0..m)
        .filter(|&i| indeg[i] == 0)
        .map(|i| std::cmp::Reverse((p.parts[i][0], i)))
        .collect();
    let mut new_id = vec![usize::MAX; m];
    let mut next = 0;
    while let Some(std::cmp::Reverse((_, i))) = ready.pop() {
        new_id[i] = next;
        next += 1;
        for &c in by_part.children(i) {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                ready.push(std::cmp::Reverse((p.parts[c][0], c)));
            }
        }
    }
    if next < m {
        let stuck = (0..m).filter(|&i| indeg[i] > 0).collect();
        return Err(Error::Cycle(stuck));
    }

    let dag = by_part.relabeled(&new_id);
    let coarse_of = p.part_of.iter().map(|&i| new_id[i]).collect();
    let mut members = vec![Vec::new(); m];
    for (i, part) in p.parts.iter().enumerate() {
        members[new_id[i]] = part.clone();
    }
    let mut edge_origin: Vec<_> = origin
        .into_iter()
        .map(|((a, b), e)| ((new_id[a], new_id[b]), e))
        .collect();
    edge_origin.sort_unstable();
    Ok(Coarsening {
        dag,
        coarse_of,
        members,
        edge_origin,
    })
}

/// Pulls a schedule of the quotient back to the fine graph: every vertex
/// takes the core and superstep of its part.
pub fn expand_schedule(
    coarse: &BspSchedule,
    c: &Coarsening,
    g: &ComputeDag,
) -> Result<BspSchedule> {
    if g.n_vertices() != c.coarse_of.len() {
        return Err(Error::LengthMismatch {
            expected: c.coarse_of.len(),
            got: g.n_vertices(),
        });
    }
    coarse.check(&c.dag)?;
    let core_of = c.coarse_of.iter().map(|&u| coarse.core_of(u)).collect();
    let step_of = c.coarse_of.iter().map(|&u| coarse.step_of(u)).collect();
    BspSchedule::new(coarse.n_cores(), core_of, step_of)
}
