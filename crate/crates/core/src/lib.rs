//! Scheduling and barrier-synchronized execution of sparse lower-triangular
//! solves.
//!
//! A matrix in [`CsrLowerTriangular`] form defines a [`ComputeDag`] with one
//! vertex per row. Schedulers assign every row a core and a superstep
//! ([`BspSchedule`]); [`parallel_sptrsv`] then runs the solve with one
//! thread per core and a barrier between supersteps.
//!
//! ```
//! use sptrsv_core::*;
//!
//! let a = gen_narrow_bandwidth(2_000, 0.1, 10.0, 1)?;
//! let g = ComputeDag::from_matrix(&a);
//! let s = growlocal_schedule(&g, 4, &GrowLocalParams::default())?;
//! let plan = ExecutablePlan::compile(&g, &s)?;
//! let b = vec![1.0; a.n()];
//! assert_eq!(parallel_sptrsv(&a, &b, &plan)?, serial_sptrsv(&a, &b)?);
//! # Ok::<(), Error>(())
//! ```

pub mod bench;
pub mod block;
pub mod coarsen;
pub mod dag;
pub mod error;
pub mod exec;
pub mod gen;
pub mod growlocal;
mod idset;
pub mod matrix;
pub mod mtx;
pub mod pipeline;
pub mod schedule;

pub use bench::{
    amortization_threshold, performance_profile, run_benchmark, time_serial, write_reports_csv,
    BenchCase, BenchConfig, BenchReport, PerformanceProfile, TimingStats,
};
pub use block::{block_parallel_schedule, block_sub_dag, split_diagonal_blocks, BlockSchedule};
pub use coarsen::{
    coarsen, default_funnel_cap, expand_schedule, funnel_partition, is_cascade, is_in_funnel,
    Coarsening, Partition,
};
pub use dag::{AverageWavefront, ComputeDag, WavefrontDecomposition};
pub use error::{Error, Result};
pub use exec::{parallel_sptrsv, solve_repeated, BatchResult, ExecOptions, ExecutablePlan};
pub use gen::{gen_erdos_renyi, gen_narrow_bandwidth};
pub use growlocal::{
    growlocal_schedule, growlocal_schedule_traced, growlocal_with_coarsening,
    growlocal_with_coarsening_traced, GrowLocalParams, IterationRecord,
};
pub use matrix::{
    inverse_permute_vector, permute_vector, relative_residual, serial_sptrsv, symmetric_permute,
    CsrLowerTriangular, Permutation,
};
pub use mtx::{
    read_matrix_market, read_matrix_market_file, read_matrix_market_str, write_matrix_market,
    write_matrix_market_file,
};
pub use pipeline::{schedule_matrix, Scheduled, Scheduler, SchedulerConfig};
pub use schedule::{
    apply_reordering, wavefront_schedule, BspSchedule, Reordered, ScheduleStats, Violation,
    ViolationKind,
};
