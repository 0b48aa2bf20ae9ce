//! Barrier-synchronized parallel forward substitution.
//!
//! Worker `p` handles the rows of core `p` superstep by superstep, and all
//! workers meet at a barrier after each superstep. The solution lives in a
//! vector of `AtomicU64` holding `f64` bits: each row is written by exactly
//! one worker and read only after a barrier, which orders the relaxed
//! accesses. Rows are solved by the same routine as
//! [`serial_sptrsv`](crate::matrix::serial_sptrsv), so results agree bit for
//! bit.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Barrier;
use std::time::{Duration, Instant};

use crate::dag::ComputeDag;
use crate::error::{Error, Result};
use crate::matrix::CsrLowerTriangular;
use crate::schedule::BspSchedule;

/// Row lists per `(superstep, core)`, each ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutablePlan {
    n: usize,
    n_cores: usize,
    n_supersteps: usize,
    /// Rows of `(s, p)` are `rows[ptr[s * k + p]..ptr[s * k + p + 1]]`.
    ptr: Vec<usize>,
    rows: Vec<usize>,
}

impl ExecutablePlan {
    /// Validates `s` against `g` and groups rows by superstep and core.
    pub fn compile(g: &ComputeDag, s: &BspSchedule) -> Result<Self> {
        if g.n_vertices() != s.n_vertices() {
            return Err(Error::LengthMismatch {
                expected: g.n_vertices(),
                got: s.n_vertices(),
            });
        }
        s.check(g)?;
        let k = s.n_cores();
        let slots = s.n_supersteps() * k;
        let mut ptr = vec![0usize; slots + 1];
        for v in 0..s.n_vertices() {
            ptr[s.step_of(v) * k + s.core_of(v) + 1] += 1;
        }
        for i in 0..slots {
            ptr[i + 1] += ptr[i];
        }
        let mut fill = ptr.clone();
        let mut rows = vec![0; s.n_vertices()];
        for v in 0..s.n_vertices() {
            let slot = s.step_of(v) * k + s.core_of(v);
            rows[fill[slot]] = v;
            fill[slot] += 1;
        }
        Ok(Self {
            n: s.n_vertices(),
            n_cores: k,
            n_supersteps: s.n_supersteps(),
            ptr,
            rows,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_cores(&self) -> usize {
        self.n_cores
    }

    pub fn n_supersteps(&self) -> usize {
        self.n_supersteps
    }

    pub fn rows(&self, step: usize, core: usize) -> &[usize] {
        let slot = step * self.n_cores + core;
        &self.rows[self.ptr[slot]..self.ptr[slot + 1]]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExecOptions {
    /// Best-effort pinning of worker `p` to CPU `p mod ncpu` (Linux only).
    pub pin_threads: bool,
}

/// Solution of the last run and the wall time of every run.
#[derive(Debug, Clone)]
pub struct BatchResult {
    pub x: Vec<f64>,
    pub times: Vec<Duration>,
}

/// Solves `a x = b` once following `plan`.
pub fn parallel_sptrsv(
    a: &CsrLowerTriangular,
    b: &[f64],
    plan: &ExecutablePlan,
) -> Result<Vec<f64>> {
    Ok(solve_repeated(a, b, plan, 1, ExecOptions::default())?.x)
}

#[cfg(target_os = "linux")]
fn pin_current_thread(worker: usize) {
    let ncpu = std::thread::available_parallelism().map_or(1, |n| n.get());
    // SAFETY: cpu_set_t is plain data, zeroed is a valid empty set, and the
    // call only reads the set we pass for the current thread.
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_SET(worker % ncpu, &mut set);
        libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set);
    }
}

#[cfg(not(target_os = "linux"))]
fn pin_current_thread(_worker: usize) {}

struct Shared<'a> {
    a: &'a CsrLowerTriangular,
    b: &'a [f64],
    plan: &'a ExecutablePlan,
    x: Vec<AtomicU64>,
    barrier: Barrier,
    #[cfg(debug_assertions)]
    writes: Vec<std::sync::atomic::AtomicU32>,
}

impl Shared<'_> {
    fn run_superstep(&self, step: usize, core: usize) {
        for &i in self.plan.rows(step, core) {
            let xi = self.a.solve_row(i, self.b[i], |j| {
                f64::from_bits(self.x[j].load(Ordering::Relaxed))
            });
            self.x[i].store(xi.to_bits(), Ordering::Relaxed);
            #[cfg(debug_assertions)]
            self.writes[i].fetch_add(1, Ordering::Relaxed);
        }
    }

    fn worker(&self, core: usize, runs: usize) {
        for _ in 0..runs {
            self.barrier.wait();
            for step in 0..self.plan.n_supersteps {
                self.run_superstep(step, core);
                self.barrier.wait();
            }
        }
    }
}

/// Runs the solve `runs` times with one set of workers.
///
/// The calling thread acts as worker 0 and `k - 1` threads are spawned, so
/// thread start-up is paid once per batch. Each time covers the first
/// barrier through the last one.
pub fn solve_repeated(
    a: &CsrLowerTriangular,
    b: &[f64],
    plan: &ExecutablePlan,
    runs: usize,
    opts: ExecOptions,
) -> Result<BatchResult> {
    let n = a.n();
    if plan.n != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: plan.n,
        });
    }
    if b.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: b.len(),
        });
    }
    if let Some(i) = (0..n).find(|&i| *a.row_values(i).last().expect("diagonal") == 0.0) {
        return Err(Error::SingularDiagonal(i));
    }
    let k = plan.n_cores;
    let shared = Shared {
        a,
        b,
        plan,
        x: (0..n).map(|_| AtomicU64::new(0)).collect(),
        barrier: Barrier::new(k),
        #[cfg(debug_assertions)]
        writes: (0..n)
            .map(|_| std::sync::atomic::AtomicU32::new(0))
            .collect(),
    };
    let mut times = Vec::with_capacity(runs);
    std::thread::scope(|scope| {
        for core in 1..k {
            let shared = &shared;
            scope.spawn(move || {
                if opts.pin_threads {
                    pin_current_thread(core);
                }
                shared.worker(core, runs);
            });
        }
        if opts.pin_threads {
            pin_current_thread(0);
        }
        for _ in 0..runs {
            shared.barrier.wait();
            let start = Instant::now();
            for step in 0..plan.n_supersteps {
                shared.run_superstep(step, 0);
                shared.barrier.wait();
            }
            times.push(start.elapsed());
        }
    });
    #[cfg(debug_assertions)]
    for (i, w) in shared.writes.iter().enumerate() {
        assert_eq!(
            w.load(Ordering::Relaxed) as usize,
            runs,
            "row {i} write count"
        );
    }
    let x = shared
        .x
        .into_iter()
        .map(|v| f64::from_bits(v.into_inner()))
        .collect();
    Ok(BatchResult { x, times })
}
