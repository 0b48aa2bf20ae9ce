//! One entry point for every scheduler, with optional block splitting.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::block::block_parallel_schedule;
use crate::dag::ComputeDag;
use crate::error::{Error, Result};
use crate::growlocal::{
    growlocal_schedule_traced, growlocal_with_coarsening_traced, GrowLocalParams, IterationRecord,
};
use crate::matrix::CsrLowerTriangular;
use crate::schedule::{wavefront_schedule, BspSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheduler {
    Serial,
    Wavefront,
    GrowLocal,
    FunnelGrowLocal,
}

impl Scheduler {
    pub const ALL: [Scheduler; 4] = [
        Scheduler::Serial,
        Scheduler::Wavefront,
        Scheduler::GrowLocal,
        Scheduler::FunnelGrowLocal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheduler::Serial => "serial",
            Scheduler::Wavefront => "wavefront",
            Scheduler::GrowLocal => "growlocal",
            Scheduler::FunnelGrowLocal => "funnel-gl",
        }
    }
}

impl fmt::Display for Scheduler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheduler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheduler::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown scheduler '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerConfig {
    pub algo: Scheduler,
    pub cores: usize,
    pub params: GrowLocalParams,
    /// Diagonal blocks scheduled independently; 1 schedules the whole matrix.
    pub blocks: usize,
    pub funnel_cap: Option<u64>,
}

impl SchedulerConfig {
    pub fn new(algo: Scheduler, cores: usize) -> Self {
        Self {
            algo,
            cores,
            params: GrowLocalParams::default(),
            blocks: 1,
            funnel_cap: None,
        }
    }

    /// Schedules one DAG, ignoring `blocks`.
    pub fn schedule_dag(&self, g: &ComputeDag) -> Result<BspSchedule> {
        self.schedule_dag_traced(g, |_| {})
    }

    /// [`Self::schedule_dag`], passing GrowLocal attempts to `trace`.
    pub fn schedule_dag_traced(
        &self,
        g: &ComputeDag,
        trace: impl FnMut(&IterationRecord),
    ) -> Result<BspSchedule> {
        if self.cores == 0 {
            return Err(Error::InvalidParameter(
                "core count must be at least 1".into(),
            ));
        }
        match self.algo {
            Scheduler::Serial => Ok(BspSchedule::serial(g.n_vertices(), self.cores)),
            Scheduler::Wavefront => wavefront_schedule(g, self.cores),
            Scheduler::GrowLocal => growlocal_schedule_traced(g, self.cores, &self.params, trace),
            Scheduler::FunnelGrowLocal => growlocal_with_coarsening_traced(
                g,
                self.cores,
                &self.params,
                self.funnel_cap,
                trace,
            ),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scheduled {
    pub schedule: BspSchedule,
    /// Wall time from DAG construction to the finished schedule.
    pub elapsed: Duration,
    /// Superstep count per diagonal block.
    pub block_supersteps: Vec<usize>,
}

/// Builds the DAG of `a` (or of its diagonal blocks) and schedules it.
pub fn schedule_matrix(a: &CsrLowerTriangular, cfg: &SchedulerConfig) -> Result<Scheduled> {
    let start = Instant::now();
    if cfg.blocks <= 1 {
        let g = ComputeDag::from_matrix(a);
        let schedule = cfg.schedule_dag(&g)?;
        let elapsed = start.elapsed();
        let s = schedule.n_supersteps();
        return Ok(Scheduled {
            schedule,
            elapsed,
            block_supersteps: vec![s],
        });
    }
    let b = block_parallel_schedule(a, cfg.cores, cfg.blocks, |g| cfg.schedule_dag(g))?;
    Ok(Scheduled {
        schedule: b.schedule,
        elapsed: start.elapsed(),
        block_supersteps: b.block_supersteps,
    })
}
