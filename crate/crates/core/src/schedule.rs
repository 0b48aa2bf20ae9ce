//! Bulk-synchronous schedules: assignment of every vertex to a core and a
//! superstep, validity checking, cost statistics and locality reordering.
//!
//! Cores and supersteps are 0-based in memory. The CSV representation uses
//! 1-based cores and supersteps and 0-based vertices.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dag::ComputeDag;
use crate::error::{Error, Result};
use crate::matrix::{permute_vector, symmetric_permute, CsrLowerTriangular, Permutation};

/// A per-vertex `(core, superstep)` assignment.
///
/// Every superstep in `0..n_supersteps` holds at least one vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BspSchedule {
    n_cores: usize,
    core_of: Vec<usize>,
    step_of: Vec<usize>,
    n_supersteps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// The child runs in an earlier superstep than its parent.
    StepOrder,
    /// Parent and child share a superstep but run on different cores.
    CrossCoreSameStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub from: usize,
    pub to: usize,
    pub kind: ViolationKind,
}

impl BspSchedule {
    /// Builds a schedule, requiring that no superstep is left empty.
    pub fn new(n_cores: usize, core_of: Vec<usize>, step_of: Vec<usize>) -> Result<Self> {
        let s = Self::check_ranges(n_cores, core_of, step_of)?;
        let mut used = vec![false; s.n_supersteps];
        for &t in &s.step_of {
            used[t] = true;
        }
        if let Some(t) = used.iter().position(|u| !u) {
            return Err(Error::InvalidSchedule(format!("superstep {t} is empty")));
        }
        Ok(s)
    }

    /// Builds a schedule and renumbers supersteps so that none is empty.
    pub fn compacting(n_cores: usize, core_of: Vec<usize>, step_of: Vec<usize>) -> Result<Self> {
        let mut s = Self::check_ranges(n_cores, core_of, step_of)?;
        let mut remap = vec![usize::MAX; s.n_supersteps];
        for &t in &s.step_of {
            remap[t] = 0;
        }
        let mut next = 0;
        for r in remap.iter_mut() {
            if *r == 0 {
                *r = next;
                next += 1;
            }
        }
        for t in s.step_of.iter_mut() {
            *t = remap[*t];
        }
        s.n_supersteps = next;
        Ok(s)
    }

    fn check_ranges(n_cores: usize, core_of: Vec<usize>, step_of: Vec<usize>) -> Result<Self> {
        if n_cores == 0 {
            return Err(Error::InvalidParameter(
                "core count must be at least 1".into(),
            ));
        }
        if core_of.len() != step_of.len() {
            return Err(Error::LengthMismatch {
                expected: core_of.len(),
                got: step_of.len(),
            });
        }
        if let Some((v, &p)) = core_of.iter().enumerate().find(|(_, &p)| p >= n_cores) {
            return Err(Error::InvalidSchedule(format!(
                "vertex {v} assigned to core {p} of {n_cores}"
            )));
        }
        let n_supersteps = step_of.iter().max().map_or(0, |&m| m + 1);
        Ok(Self {
            n_cores,
            core_of,
            step_of,
            n_supersteps,
        })
    }

    /// Everything on core 0 in a single superstep.
    pub fn serial(n: usize, n_cores: usize) -> Self {
        Self {
            n_cores: n_cores.max(1),
            core_of: vec![0; n],
            step_of: vec![0; n],
            n_supersteps: usize::from(n > 0),
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.core_of.len()
    }

    pub fn n_cores(&self) -> usize {
        self.n_cores
    }

    pub fn n_supersteps(&self) -> usize {
        self.n_supersteps
    }

    pub fn core_of(&self, v: usize) -> usize {
        self.core_of[v]
    }

    pub fn step_of(&self, v: usize) -> usize {
        self.step_of[v]
    }

    pub fn cores(&self) -> &[usize] {
        &self.core_of
    }

    pub fn steps(&self) -> &[usize] {
        &self.step_of
    }

    /// Lists every edge that breaks the precedence rules.
    pub fn validate(&self, g: &ComputeDag) -> Vec<Violation> {
        let mut out = Vec::new();
        if g.n_vertices() != self.n_vertices() {
            return out;
        }
        for (u, v) in g.edges() {
            let (su, sv) = (self.step_of[u], self.step_of[v]);
            if su > sv {
                out.push(Violation {
                    from: u,
                    to: v,
                    kind: ViolationKind::StepOrder,
                });
            } else if su == sv && self.core_of[u] != self.core_of[v] {
                out.push(Violation {
                    from: u,
                    to: v,
                    kind: ViolationKind::CrossCoreSameStep,
                });
            }
        }
        out
    }

    /// Like [`BspSchedule::validate`] but as a `Result`, also checking sizes.
    pub fn check(&self, g: &ComputeDag) -> Result<()> {
        if g.n_vertices() != self.n_vertices() {
            return Err(Error::LengthMismatch {
                expected: g.n_vertices(),
                got: self.n_vertices(),
            });
        }
        match self.validate(g).first() {
            None => Ok(()),
            Some(v) => Err(Error::InvalidSchedule(format!(
                "edge ({}, {}) violates {:?}",
                v.from, v.to, v.kind
            ))),
        }
    }

    /// Work of every `(superstep, core)` pair.
    pub fn work_matrix(&self, g: &ComputeDag) -> Vec<Vec<u64>> {
        let mut work = vec![vec![0u64; self.n_cores]; self.n_supersteps];
        for v in 0..self.n_vertices() {
            work[self.step_of[v]][self.core_of[v]] += g.weight(v);
        }
        work
    }

    pub fn stats(&self, g: &ComputeDag, sync_cost: f64) -> ScheduleStats {
        let work = self.work_matrix(g);
        let max_work: Vec<u64> = work
            .iter()
            .map(|row| row.iter().copied().max().unwrap_or(0))
            .collect();
        let total_work: u64 = work.iter().flatten().sum();
        let critical: u64 = max_work.iter().sum();
        let even = total_work as f64 / self.n_cores as f64;
        let wavefronts = g.wavefronts().len();
        ScheduleStats {
            n_supersteps: self.n_supersteps,
            n_cores: self.n_cores,
            wavefronts,
            total_work,
            imbalance: if total_work == 0 {
                1.0
            } else {
                critical as f64 / even
            },
            modeled_cost: critical as f64 + sync_cost * self.n_supersteps as f64,
            barrier_reduction: if self.n_supersteps == 0 {
                0.0
            } else {
                wavefronts as f64 / self.n_supersteps as f64
            },
            max_work,
            work,
        }
    }

    /// Orders vertices by `(superstep, core, id)`.
    pub fn permutation(&self) -> Permutation {
        let mut order: Vec<usize> = (0..self.n_vertices()).collect();
        order.sort_by_key(|&v| (self.step_of[v], self.core_of[v], v));
        Permutation::from_order(&order).expect("sorted indices form a permutation")
    }

    /// The same schedule after renaming vertex `v` to `p(v)`.
    pub fn relabeled(&self, p: &Permutation) -> BspSchedule {
        let n = self.n_vertices();
        let mut core_of = vec![0; n];
        let mut step_of = vec![0; n];
        for v in 0..n {
            core_of[p.apply(v)] = self.core_of[v];
            step_of[p.apply(v)] = self.step_of[v];
        }
        BspSchedule {
            n_cores: self.n_cores,
            core_of,
            step_of,
            n_supersteps: self.n_supersteps,
        }
    }

    /// Writes the `vertex,core,superstep` CSV (1-based core and superstep).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for v in 0..self.n_vertices() {
            wr.serialize(ScheduleRow {
                vertex: v,
                core: self.core_of[v] + 1,
                superstep: self.step_of[v] + 1,
            })
            .map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads a schedule CSV. `n_cores` defaults to the largest core listed.
    pub fn read_csv<R: Read>(r: R, n_cores: Option<usize>) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers().map_err(csv_err)?.clone();
        if headers.iter().collect::<Vec<_>>() != ["vertex", "core", "superstep"] {
            return Err(Error::InvalidSchedule(format!(
                "expected header vertex,core,superstep, got {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows: Vec<ScheduleRow> = Vec::new();
        for rec in rd.deserialize() {
            rows.push(rec.map_err(csv_err)?);
        }
        let n = rows.len();
        let mut core_of = vec![usize::MAX; n];
        let mut step_of = vec![usize::MAX; n];
        for row in &rows {
            if row.vertex >= n || core_of[row.vertex] != usize::MAX {
                return Err(Error::InvalidSchedule(format!(
                    "vertex {} is out of range or listed twice",
                    row.vertex
                )));
            }
            if row.core == 0 || row.superstep == 0 {
                return Err(Error::InvalidSchedule(
                    "cores and supersteps are 1-based".into(),
                ));
            }
            core_of[row.vertex] = row.core - 1;
            step_of[row.vertex] = row.superstep - 1;
        }
        let max_core = core_of.iter().map(|&c| c + 1).max().unwrap_or(1);
        let k = n_cores.unwrap_or(max_core);
        Self::new(k, core_of, step_of)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ScheduleRow {
    vertex: usize,
    core: usize,
    superstep: usize,
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidSchedule(format!("csv: {e}"))
}

/// Cost summary of a schedule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleStats {
    pub n_supersteps: usize,
    pub n_cores: usize,
    pub wavefronts: usize,
    pub total_work: u64,
    /// Sum over supersteps of the heaviest core, divided by `total_work / k`.
    pub imbalance: f64,
    /// Sum over supersteps of `max work + sync_cost`.
    pub modeled_cost: f64,
    /// Wavefront count divided by superstep count.
    pub barrier_reduction: f64,
    #[serde(skip)]
    pub max_work: Vec<u64>,
    #[serde(skip)]
    pub work: Vec<Vec<u64>>,
}

/// Level-by-level schedule; within a level vertices go, in ID order, to the
/// least-loaded core (ties to the lowest index).
pub fn wavefront_schedule(g: &ComputeDag, n_cores: usize) -> Result<BspSchedule> {
    if n_cores == 0 {
        return Err(Error::InvalidParameter(
            "core count must be at least 1".into(),
        ));
    }
    let wf = g.wavefronts();
    let n = g.n_vertices();
    let mut core_of = vec![0; n];
    let mut load = vec![0u64; n_cores];
    for level in &wf.levels {
        load.iter_mut().for_each(|l| *l = 0);
        for &v in level {
            let (p, _) = load
                .iter()
                .enumerate()
                .min_by_key(|&(p, &l)| (l, p))
                .expect("at least one core");
            core_of[v] = p;
            load[p] += g.weight(v);
        }
    }
    BspSchedule::compacting(n_cores, core_of, wf.level_of)
}

/// A matrix, right-hand side and schedule after locality reordering.
#[derive(Debug, Clone)]
pub struct Reordered {
    pub matrix: CsrLowerTriangular,
    pub rhs: Vec<f64>,
    pub schedule: BspSchedule,
    pub permutation: Permutation,
}

/// Symmetrically permutes `a` so that each `(superstep, core)` block of
/// `s` occupies consecutive rows, and carries `b` and `s` along.
pub fn apply_reordering(a: &CsrLowerTriangular, b: &[f64], s: &BspSchedule) -> Result<Reordered> {
    if s.n_vertices() != a.n() {
        return Err(Error::LengthMismatch {
            expected: a.n(),
            got: s.n_vertices(),
        });
    }
    let p = s.permutation();
    Ok(Reordered {
        matrix: symmetric_permute(a, &p)?,
        rhs: permute_vector(b, &p)?,
        schedule: s.relabeled(&p),
        permutation: p,
    })
}
