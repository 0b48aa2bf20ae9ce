//! Python module `sptrsv`.
//!
//! Rows, cores and supersteps are 0-based on the Python side, as in Rust.

use std::time::Duration;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sptrsv_core as core;
use sptrsv_core::{BspSchedule, ComputeDag, CsrLowerTriangular, Scheduler, SchedulerConfig};

fn to_py(e: core::Error) -> PyErr {
    match e {
        core::Error::Io(e) => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn rhs_or_ones(b: Option<Vec<f64>>, n: usize) -> Vec<f64> {
    b.unwrap_or_else(|| vec![1.0; n])
}

/// Lower-triangular matrix in CSR form.
#[pyclass(module = "sptrsv", frozen)]
struct Matrix {
    inner: CsrLowerTriangular,
}

#[pymethods]
impl Matrix {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    #[staticmethod]
    fn from_triplets(n: usize, triplets: Vec<(usize, usize, f64)>) -> PyResult<Self> {
        let inner = CsrLowerTriangular::from_triplets(n, &triplets).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_csr(
        n: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> PyResult<Self> {
        let inner = CsrLowerTriangular::from_csr(n, row_ptr, col_idx, values).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn identity(n: usize) -> Self {
        Self {
            inner: CsrLowerTriangular::identity(n),
        }
    }

    #[staticmethod]
    fn read_mtx(path: &str) -> PyResult<Self> {
        let inner = core::read_matrix_market_file(path).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn erdos_renyi(n: usize, p: f64, seed: u64) -> PyResult<Self> {
        let inner = core::gen_erdos_renyi(n, p, seed).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn narrow_bandwidth(n: usize, p: f64, b: f64, seed: u64) -> PyResult<Self> {
        let inner = core::gen_narrow_bandwidth(n, p, b, seed).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn write_mtx(&self, path: &str) -> PyResult<()> {
        core::write_matrix_market_file(&self.inner, path).map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn nnz(&self) -> usize {
        self.inner.nnz()
    }

    /// `(row_ptr, col_idx, values)`.
    fn csr(&self) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
        (
            self.inner.row_ptr().to_vec(),
            self.inner.col_idx().to_vec(),
            self.inner.values().to_vec(),
        )
    }

    fn wavefronts(&self) -> usize {
        ComputeDag::from_matrix(&self.inner).wavefronts().len()
    }

    fn average_wavefront(&self) -> f64 {
        ComputeDag::from_matrix(&self.inner)
            .average_wavefront_size()
            .value()
    }

    /// Row-dependency edges `(j, i)` for every entry `A[i, j]` below the diagonal.
    fn edges(&self) -> Vec<(usize, usize)> {
        ComputeDag::from_matrix(&self.inner).edges().collect()
    }

    fn __repr__(&self) -> String {
        format!("Matrix(n={}, nnz={})", self.inner.n(), self.inner.nnz())
    }
}

/// Core and superstep of every row.
#[pyclass(module = "sptrsv", frozen)]
struct Schedule {
    inner: BspSchedule,
    elapsed: Duration,
}

#[pymethods]
impl Schedule {
    #[new]
    fn new(n_cores: usize, cores: Vec<usize>, supersteps: Vec<usize>) -> PyResult<Self> {
        let inner = BspSchedule::new(n_cores, cores, supersteps).map_err(to_py)?;
        Ok(Self {
            inner,
            elapsed: Duration::ZERO,
        })
    }

    /// Reads a `vertex,core,superstep` CSV (1-based core and superstep).
    #[staticmethod]
    #[pyo3(signature = (path, n_cores=None))]
    fn read_csv(path: &str, n_cores: Option<usize>) -> PyResult<Self> {
        let f = std::fs::File::open(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        let inner = BspSchedule::read_csv(std::io::BufReader::new(f), n_cores).map_err(to_py)?;
        Ok(Self {
            inner,
            elapsed: Duration::ZERO,
        })
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        let f = std::fs::File::create(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        self.inner
            .write_csv(std::io::BufWriter::new(f))
            .map_err(to_py)
    }

    #[getter]
    fn n_cores(&self) -> usize {
        self.inner.n_cores()
    }

    #[getter]
    fn n_supersteps(&self) -> usize {
        self.inner.n_supersteps()
    }

    /// Scheduling wall time in seconds; zero for schedules not computed here.
    #[getter]
    fn elapsed(&self) -> f64 {
        self.elapsed.as_secs_f64()
    }

    fn cores(&self) -> Vec<usize> {
        self.inner.cores().to_vec()
    }

    fn supersteps(&self) -> Vec<usize> {
        self.inner.steps().to_vec()
    }

    /// Precedence violations as `(from, to)` pairs; empty when valid.
    fn validate(&self, matrix: &Matrix) -> Vec<(usize, usize)> {
        self.inner
            .validate(&ComputeDag::from_matrix(&matrix.inner))
            .into_iter()
            .map(|v| (v.from, v.to))
            .collect()
    }

    #[pyo3(signature = (matrix, sync_cost=500.0))]
    fn stats<'py>(
        &self,
        py: Python<'py>,
        matrix: &Matrix,
        sync_cost: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let s = self
            .inner
            .stats(&ComputeDag::from_matrix(&matrix.inner), sync_cost);
        let d = PyDict::new(py);
        d.set_item("supersteps", s.n_supersteps)?;
        d.set_item("cores", s.n_cores)?;
        d.set_item("wavefronts", s.wavefronts)?;
        d.set_item("total_work", s.total_work)?;
        d.set_item("imbalance", s.imbalance)?;
        d.set_item("modeled_cost", s.modeled_cost)?;
        d.set_item("barrier_reduction", s.barrier_reduction)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!(
            "Schedule(n={}, cores={}, supersteps={})",
            self.inner.n_vertices(),
            self.inner.n_cores(),
            self.inner.n_supersteps()
        )
    }
}

/// Schedules `matrix` on `cores` cores.
///
/// `algo` is one of `serial`, `wavefront`, `growlocal`, `funnel-gl`.
#[pyfunction]
#[pyo3(signature = (
    matrix, cores, algo="growlocal", *, alpha0=20.0, growth=1.5, sync_cost=500.0,
    worthy=0.97, blocks=1, funnel_cap=None
))]
#[allow(clippy::too_many_arguments)]
fn schedule(
    py: Python<'_>,
    matrix: &Matrix,
    cores: usize,
    algo: &str,
    alpha0: f64,
    growth: f64,
    sync_cost: f64,
    worthy: f64,
    blocks: usize,
    funnel_cap: Option<u64>,
) -> PyResult<Schedule> {
    let cfg = SchedulerConfig {
        algo: algo.parse::<Scheduler>().map_err(to_py)?,
        cores,
        params: core::GrowLocalParams {
            alpha0,
            growth,
            sync_cost,
            worthy_factor: worthy,
        },
        blocks,
        funnel_cap,
    };
    let s = py
        .detach(|| core::schedule_matrix(&matrix.inner, &cfg))
        .map_err(to_py)?;
    Ok(Schedule {
        inner: s.schedule,
        elapsed: s.elapsed,
    })
}

/// Forward substitution; `b` defaults to ones.
#[pyfunction]
#[pyo3(signature = (matrix, b=None))]
fn serial_solve(matrix: &Matrix, b: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
    let b = rhs_or_ones(b, matrix.inner.n());
    core::serial_sptrsv(&matrix.inner, &b).map_err(to_py)
}

/// Solves with one thread per core and a barrier after every superstep.
#[pyfunction]
#[pyo3(signature = (matrix, schedule, b=None))]
fn parallel_solve(
    py: Python<'_>,
    matrix: &Matrix,
    schedule: &Schedule,
    b: Option<Vec<f64>>,
) -> PyResult<Vec<f64>> {
    let a = &matrix.inner;
    let b = rhs_or_ones(b, a.n());
    py.detach(|| {
        let plan = core::ExecutablePlan::compile(&ComputeDag::from_matrix(a), &schedule.inner)?;
        core::parallel_sptrsv(a, &b, &plan)
    })
    .map_err(to_py)
}

/// Permutes matrix, right-hand side and schedule so every superstep/core
/// block is contiguous.
///
/// Returns `(matrix, schedule, rhs, permutation)` where row `i` moves to
/// `permutation[i]`.
#[pyfunction]
#[pyo3(signature = (matrix, schedule, b=None))]
fn reorder(
    matrix: &Matrix,
    schedule: &Schedule,
    b: Option<Vec<f64>>,
) -> PyResult<(Matrix, Schedule, Vec<f64>, Vec<usize>)> {
    let b = rhs_or_ones(b, matrix.inner.n());
    let r = core::apply_reordering(&matrix.inner, &b, &schedule.inner).map_err(to_py)?;
    Ok((
        Matrix { inner: r.matrix },
        Schedule {
            inner: r.schedule,
            elapsed: schedule.elapsed,
        },
        r.rhs,
        r.permutation.forward().to_vec(),
    ))
}

/// In-funnel parts of the row DAG after dropping long triangle edges.
#[pyfunction]
#[pyo3(signature = (matrix, cap=None))]
fn funnel_partition(matrix: &Matrix, cap: Option<u64>) -> Vec<Vec<usize>> {
    let g = ComputeDag::from_matrix(&matrix.inner);
    let cap = cap.unwrap_or_else(|| core::default_funnel_cap(&g));
    core::funnel_partition(&g.approx_transitive_reduction(), cap)
        .parts()
        .to_vec()
}

/// Solves needed before scheduling pays off; `inf` without a speed-up.
#[pyfunction]
fn amortization_threshold(sched_ns: f64, serial_ns: f64, parallel_ns: f64) -> f64 {
    core::amortization_threshold(sched_ns, serial_ns, parallel_ns)
}

#[pymodule]
fn sptrsv(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Matrix>()?;
    m.add_class::<Schedule>()?;
    m.add_function(wrap_pyfunction!(schedule, m)?)?;
    m.add_function(wrap_pyfunction!(serial_solve, m)?)?;
    m.add_function(wrap_pyfunction!(parallel_solve, m)?)?;
    m.add_function(wrap_pyfunction!(reorder, m)?)?;
    m.add_function(wrap_pyfunction!(funnel_partition, m)?)?;
    m.add_function(wrap_pyfunction!(amortization_threshold, m)?)?;
    m.add("SCHEDULERS", Scheduler::ALL.map(Scheduler::name).to_vec())?;
    Ok(())
}
