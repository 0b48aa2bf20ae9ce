//! The GrowLocal barrier scheduler.
//!
//! Supersteps are formed one at a time. Each superstep is attempted with a
//! length `alpha`: core 0 receives up to `alpha` vertices, then every other
//! core in order receives vertices until its work reaches that of core 0.
//! The attempt is scored with
//!
//! ```text
//! beta = sum_p work_p / (max_p work_p + sync_cost)
//! ```
//!
//! and, while the score stays within `worthy_factor` of the best attempt of
//! the current superstep, the attempt is undone and retried with a longer
//! `alpha`. The last worthy attempt becomes the superstep.
//!
//! Vertex selection on a core prefers vertices that only that core may run
//! before the next barrier (some parent was placed on it in this superstep),
//! then the smallest ID. Ready vertices whose current-superstep parents sit
//! on two or more cores wait for the next barrier.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::coarsen::{coarsen, default_funnel_cap, expand_schedule, funnel_partition};
use crate::dag::ComputeDag;
use crate::error::{Error, Result};
use crate::idset::IdSet;
use crate::schedule::BspSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowLocalParams {
    /// Superstep length of the first attempt.
    pub alpha0: f64,
    /// Multiplier applied to `alpha` after each worthy attempt.
    pub growth: f64,
    /// Barrier penalty in units of vertex weight.
    pub sync_cost: f64,
    /// An attempt is worthy if its score reaches this fraction of the best one.
    pub worthy_factor: f64,
}

impl Default for GrowLocalParams {
    fn default() -> Self {
        Self {
            alpha0: 20.0,
            growth: 1.5,
            sync_cost: 500.0,
            worthy_factor: 0.97,
        }
    }
}

impl GrowLocalParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.alpha0 >= 1.0 && self.alpha0.is_finite()) {
            return bad("alpha0 must be a finite value >= 1");
        }
        if !(self.growth > 1.0 && self.growth.is_finite()) {
            return bad("growth must be a finite value > 1");
        }
        if !(self.sync_cost >= 0.0 && self.sync_cost.is_finite()) {
            return bad("sync cost must be a finite value >= 0");
        }
        if !(self.worthy_factor > 0.0 && self.worthy_factor <= 1.0) {
            return bad("worthy factor must lie in (0, 1]");
        }
        Ok(())
    }
}

/// One tentative superstep.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperstepDraft {
    /// Vertices per core in assignment order.
    pub assigned: Vec<Vec<usize>>,
    pub work: Vec<u64>,
    pub score: f64,
    pub alpha: f64,
}

/// Trace line emitted after every attempt.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub superstep: usize,
    pub alpha: f64,
    pub work: Vec<u64>,
    pub score: f64,
    pub worthy: bool,
}

impl std::fmt::Display for IterationRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let work: Vec<String> = self.work.iter().map(u64::to_string).collect();
        write!(
            f,
            "superstep={} alpha={:.3} work=[{}] beta={:.6} worthy={}",
            self.superstep,
            self.alpha,
            work.join(","),
            self.score,
            self.worthy
        )
    }
}

/// Parallelization score of a set of per-core work totals.
pub fn parallelization_score(work: &[u64], sync_cost: f64) -> f64 {
    let max = work.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return 0.0;
    }
    let sum: u64 = work.iter().sum();
    sum as f64 / (max as f64 + sync_cost)
}

const UNTOUCHED: u32 = u32::MAX;
const BLOCKED: u32 = u32::MAX - 1;

#[derive(Debug, Clone, Copy, Hash)]
struct Slot {
    missing: u32,
    local_core: u32,
}

struct State<'g> {
    g: &'g ComputeDag,
    k: usize,
    /// Per vertex: parents not yet assigned (counting tentative
    /// assignments) and the core holding its current-superstep parents,
    /// `UNTOUCHED` or `BLOCKED`. Kept together so a child update touches one
    /// cache line.
    slots: Vec<Slot>,
    free: IdSet,
    exclusive: Vec<BinaryHeap<Reverse<usize>>>,
    blocked: Vec<usize>,
    /// Tentative assignments of the running attempt: (vertex, core, came from `free`).
    log: Vec<(usize, usize, bool)>,
    committed: usize,
    core_of: Vec<usize>,
    step_of: Vec<usize>,
    step: usize,
}

impl<'g> State<'g> {
    fn new(g: &'g ComputeDag, k: usize) -> Self {
        let n = g.n_vertices();
        let slots: Vec<Slot> = (0..n)
            .map(|v| Slot {
                missing: g.in_degree(v) as u32,
                local_core: UNTOUCHED,
            })
            .collect();
        let mut free = IdSet::new(n);
        free.extend((0..n).filter(|&v| slots[v].missing == 0));
        Self {
            g,
            k,
            slots,
            free,
            exclusive: vec![BinaryHeap::new(); k],
            blocked: Vec::new(),
            log: Vec::new(),
            committed: 0,
            core_of: vec![0; n],
            step_of: vec![0; n],
            step: 0,
        }
    }

    fn pop_for(&mut self, p: usize) -> Option<(usize, bool)> {
        if let Some(Reverse(v)) = self.exclusive[p].pop() {
            return Some((v, false));
        }
        self.free.pop_min().map(|v| (v, true))
    }

    fn assign(&mut self, v: usize, p: usize, from_free: bool) {
        self.log.push((v, p, from_free));
        for &c in self.g.children(v) {
            let slot = &mut self.slots[c];
            slot.missing -= 1;
            slot.local_core = match slot.local_core {
                UNTOUCHED => p as u32,
                q if q == p as u32 => q,
                _ => BLOCKED,
            };
            if slot.missing == 0 {
                if slot.local_core == BLOCKED {
                    self.blocked.push(c);
                } else {
                    self.exclusive[p].push(Reverse(c));
                }
            }
        }
    }

    /// Runs one attempt with superstep length `alpha`.
    fn attempt(&mut self, alpha: f64) -> Attempt {
        let limit = (alpha.floor() as usize).max(1);
        let mut work = vec![0u64; self.k];
        let mut first_core = 0;
        while first_core < limit {
            let Some((v, from_free)) = self.pop_for(0) else {
                break;
            };
            self.assign(v, 0, from_free);
            work[0] += self.g.weight(v);
            first_core += 1;
        }
        for p in 1..self.k {
            while work[p] < work[0] {
                let Some((v, from_free)) = self.pop_for(p) else {
                    break;
                };
                self.assign(v, p, from_free);
                work[p] += self.g.weight(v);
            }
        }
        Attempt {
            work,
            saturated: first_core < limit,
        }
    }

    fn rollback(&mut self) {
        while let Some((v, _, from_free)) = self.log.pop() {
            for &c in self.g.children(v) {
                let slot = &mut self.slots[c];
                slot.missing += 1;
                slot.local_core = UNTOUCHED;
            }
            if from_free {
                self.free.insert(v);
            }
        }
        for q in &mut self.exclusive {
            q.clear();
        }
        self.blocked.clear();
    }

    fn commit(&mut self) {
        for &(v, p, _) in &self.log {
            self.core_of[v] = p;
            self.step_of[v] = self.step;
            for &c in self.g.children(v) {
                self.slots[c].local_core = UNTOUCHED;
            }
        }
        self.committed += self.log.len();
        self.log.clear();
        for q in &mut self.exclusive {
            self.free.extend(q.drain().map(|Reverse(v)| v));
        }
        self.free.extend(self.blocked.drain(..));
        self.step += 1;
    }

    fn draft(&self, work: Vec<u64>, score: f64, alpha: f64) -> SuperstepDraft {
        let mut assigned = vec![Vec::new(); self.k];
        for &(v, p, _) in &self.log {
            assigned[p].push(v);
        }
        SuperstepDraft {
            assigned,
            work,
            score,
            alpha,
        }
    }

    fn fingerprint(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.slots.hash(&mut h);
        self.free.to_vec().hash(&mut h);
        self.exclusive.iter().all(BinaryHeap::is_empty).hash(&mut h);
        self.blocked.hash(&mut h);
        h.finish()
    }
}

struct Attempt {
    work: Vec<u64>,
    /// Core 0 ran out of candidates, so a longer attempt would be identical.
    saturated: bool,
}

/// Graphs up to this size re-check the post-barrier state after every
/// rollback in debug builds.
const ROLLBACK_CHECK_LIMIT: usize = 4096;

/// Schedules `g` on `k` cores.
pub fn growlocal_schedule(
    g: &ComputeDag,
    k: usize,
    params: &GrowLocalParams,
) -> Result<BspSchedule> {
    growlocal_schedule_traced(g, k, params, |_| {})
}

/// [`growlocal_schedule`] with a callback receiving every attempt.
pub fn growlocal_schedule_traced(
    g: &ComputeDag,
    k: usize,
    params: &GrowLocalParams,
    mut trace: impl FnMut(&IterationRecord),
) -> Result<BspSchedule> {
    params.validate()?;
    if k == 0 {
        return Err(Error::InvalidParameter(
            "core count must be at least 1".into(),
        ));
    }
    let n = g.n_vertices();
    let check_rollback = cfg!(debug_assertions) && n <= ROLLBACK_CHECK_LIMIT;
    let mut st = State::new(g, k);

    while st.committed < n {
        let snapshot = check_rollback.then(|| st.fingerprint());
        let mut alpha = params.alpha0;
        let mut best_score = f64::NEG_INFINITY;
        let mut last_worthy: Option<SuperstepDraft> = None;
        loop {
            let attempt = st.attempt(alpha);
            let score = parallelization_score(&attempt.work, params.sync_cost);
            let worthy = last_worthy.is_none() || score >= params.worthy_factor * best_score;
            trace(&IterationRecord {
                superstep: st.step,
                alpha,
                work: attempt.work.clone(),
                score,
                worthy,
            });
            if worthy {
                best_score = best_score.max(score);
                if attempt.saturated || st.committed + st.log.len() == n {
                    st.commit();
                    break;
                }
                last_worthy = Some(st.draft(attempt.work, score, alpha));
                st.rollback();
                if let Some(fp) = snapshot {
                    assert_eq!(
                        fp,
                        st.fingerprint(),
                        "rollback changed the post-barrier state"
                    );
                }
                alpha *= params.growth;
            } else {
                st.rollback();
                let draft = last_worthy.expect("first attempt is always worthy");
                let replay = st.attempt(draft.alpha);
                debug_assert_eq!(replay.work, draft.work);
                st.commit();
                break;
            }
        }
    }

    BspSchedule::compacting(k, st.core_of, st.step_of)
}

/// GrowLocal on the funnel-coarsened graph, pulled back to `g`.
///
/// Long triangle edges are dropped first, the reduced graph is partitioned
/// into in-funnels of weight at most `cap` (defaulting to
/// [`default_funnel_cap`]), the quotient is scheduled and every vertex
/// inherits the slot of its part.
pub fn growlocal_with_coarsening(
    g: &ComputeDag,
    k: usize,
    params: &GrowLocalParams,
    cap: Option<u64>,
) -> Result<BspSchedule> {
    growlocal_with_coarsening_traced(g, k, params, cap, |_| {})
}

/// [`growlocal_with_coarsening`] with a callback receiving every attempt on
/// the coarse graph.
pub fn growlocal_with_coarsening_traced(
    g: &ComputeDag,
    k: usize,
    params: &GrowLocalParams,
    cap: Option<u64>,
    trace: impl FnMut(&IterationRecord),
) -> Result<BspSchedule> {
    let reduced = g.approx_transitive_reduction();
    let cap = cap.unwrap_or_else(|| default_funnel_cap(g));
    let partition = funnel_partition(&reduced, cap);
    // The reduction keeps reachability, so a schedule valid on the reduced
    // quotient is valid on every edge of `g` once pulled back.
    let coarse = coarsen(&reduced, &partition)?;
    let coarse_schedule = growlocal_schedule_traced(&coarse.dag, k, params, trace)?;
    expand_schedule(&coarse_schedule, &coarse, g)
}
