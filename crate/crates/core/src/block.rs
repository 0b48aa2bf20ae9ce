//! Scheduling diagonal blocks independently and stacking the results.

use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::dag::ComputeDag;
use crate::error::{Error, Result};
use crate::matrix::CsrLowerTriangular;
use crate::schedule::BspSchedule;

/// Upper bound on worker threads used for block scheduling.
pub const MAX_BLOCK_WORKERS: usize = 64;

/// Splits rows `0..n` into `t` contiguous non-empty ranges of similar
/// non-zero count.
///
/// Row `r` goes to block `floor(t * nnz(0..=r) / nnz)`, capped at `t - 1`;
/// boundaries are then nudged so that no block is empty.
pub fn split_diagonal_blocks(a: &CsrLowerTriangular, t: usize) -> Result<Vec<Range<usize>>> {
    let n = a.n();
    if t == 0 || t > n {
        return Err(Error::InvalidParameter(format!(
            "block count must lie in 1..={n}, got {t}"
        )));
    }
    let total = a.nnz() as u128;
    let row_ptr = a.row_ptr();
    let mut starts = Vec::with_capacity(t + 1);
    starts.push(0usize);
    for b in 1..t {
        // first row r with t * prefix(r) >= b * total
        let raw =
            row_ptr[1..].partition_point(|&end| (t as u128) * (end as u128) < (b as u128) * total);
        let lo = starts[b - 1] + 1;
        let hi = n - (t - b);
        starts.push(raw.clamp(lo, hi));
    }
    starts.push(n);
    Ok(starts.windows(2).map(|w| w[0]..w[1]).collect())
}

/// Sub-DAG of the rows in `range`; vertex weights count the full rows.
pub fn block_sub_dag(a: &CsrLowerTriangular, range: Range<usize>) -> ComputeDag {
    ComputeDag::from_row_range(a, range)
}

/// A stacked block schedule.
#[derive(Debug, Clone)]
pub struct BlockSchedule {
    pub schedule: BspSchedule,
    pub ranges: Vec<Range<usize>>,
    /// Superstep count of each block's own schedule.
    pub block_supersteps: Vec<usize>,
}

/// Schedules each of `t` diagonal blocks with `scheduler` and stacks the
/// block schedules in order.
///
/// Blocks are handed to up to `min(t, 64)` scoped threads. Every edge
/// between blocks points from an earlier block to a later one, so the
/// stacked schedule is valid whenever each block schedule is.
pub fn block_parallel_schedule<F>(
    a: &CsrLowerTriangular,
    k: usize,
    t: usize,
    scheduler: F,
) -> Result<BlockSchedule>
where
    F: Fn(&ComputeDag) -> Result<BspSchedule> + Sync,
{
    let ranges = split_diagonal_blocks(a, t)?;
    let slots: Vec<Mutex<Option<Result<BspSchedule>>>> =
        ranges.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(range) = ranges.get(i) else { break };
        let result = scheduler(&block_sub_dag(a, range.clone()));
        *slots[i].lock().expect("slot lock") = Some(result);
    };
    let workers = t.min(MAX_BLOCK_WORKERS);
    if workers == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(work);
            }
        });
    }

    let n = a.n();
    let mut core_of = vec![0; n];
    let mut step_of = vec![0; n];
    let mut block_supersteps = Vec::with_capacity(t);
    let mut offset = 0;
    for (range, slot) in ranges.iter().zip(slots) {
        let s = slot
            .into_inner()
            .expect("slot lock")
            .expect("every block was scheduled")?;
        if s.n_vertices() != range.len() || s.n_cores() != k {
            return Err(Error::InvalidSchedule(format!(
                "block {range:?} scheduler returned {} vertices on {} cores",
                s.n_vertices(),
                s.n_cores()
            )));
        }
        for (local, v) in range.clone().enumerate() {
            core_of[v] = s.core_of(local);
            step_of[v] = s.step_of(local) + offset;
        }
        offset += s.n_supersteps();
        block_supersteps.push(s.n_supersteps());
    }
    Ok(BlockSchedule {
        schedule: BspSchedule::new(k, core_of, step_of)?,
        ranges,
        block_supersteps,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::gen::{gen_erdos_renyi, gen_narrow_bandwidth};
    use crate::growlocal::{growlocal_schedule, GrowLocalParams};
    use crate::schedule::wavefront_schedule;
    use proptest::prelude::*;

    pub(crate) fn nine_row() -> CsrLowerTriangular {
        let pattern = [
            (1, 1),
            (2, 1),
            (2, 2),
            (3, 2),
            (3, 3),
            (4, 2),
            (4, 4),
            (5, 3),
            (5, 5),
            (6, 4),
            (6, 6),
            (7, 7),
            (8, 8),
            (9, 9),
            (8, 1),
            (8, 3),
            (7, 2),
            (7, 3),
            (9, 2),
            (9, 7),
            (7, 6),
        ];
        let t: Vec<_> = pattern.iter().map(|&(r, c)| (r - 1, c - 1, 1.0)).collect();
        CsrLowerTriangular::from_triplets(9, &t).unwrap()
    }

    #[test]
    fn nine_row_split() {
        let a = nine_row();
        assert_eq!(
            split_diagonal_blocks(&a, 3).unwrap(),
            vec![0..3, 3..6, 6..9]
        );
        assert_eq!(split_diagonal_blocks(&a, 1).unwrap(), vec![0..9]);
        assert_eq!(split_diagonal_blocks(&a, 9).unwrap().len(), 9);
        assert!(split_diagonal_blocks(&a, 10).is_err());
        assert!(split_diagonal_blocks(&a, 0).is_err());
    }

    #[test]
    fn uniform_rows_split_evenly() {
        let a = CsrLowerTriangular::identity(100);
        let lens: Vec<_> = split_diagonal_blocks(&a, 4)
            .unwrap()
            .iter()
            .map(|r| r.len())
            .collect();
        assert!(lens.iter().all(|l| (24..=26).contains(l)), "{lens:?}");
    }

    #[test]
    fn skewed_rows_keep_blocks_nonempty() {
        // the last row holds almost all the non-zeros
        let mut t: Vec<_> = (0..10).map(|i| (i, i, 1.0)).collect();
        t.extend((0..9).map(|j| (9, j, 1.0)));
        let a = CsrLowerTriangular::from_triplets(10, &t).unwrap();
        let r = split_diagonal_blocks(&a, 5).unwrap();
        assert_eq!(r.len(), 5);
        assert!(r.iter().all(|x| !x.is_empty()));
        assert_eq!(r.last().unwrap().end, 10);
    }

    #[test]
    fn nine_row_middle_block() {
        let a = nine_row();
        let g = block_sub_dag(&a, 3..6);
        assert_eq!(g.n_vertices(), 3);
        // rows 4,5,6 (1-based) only depend on each other through (6,4)
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 2)]);
        assert_eq!(g.weights(), &[2, 2, 2]);
        let total: u64 = split_diagonal_blocks(&a, 3)
            .unwrap()
            .into_iter()
            .map(|r| block_sub_dag(&a, r).total_weight())
            .sum();
        assert_eq!(total, a.nnz() as u64);
        assert_eq!(block_sub_dag(&a, 0..9), ComputeDag::from_matrix(&a));
    }

    #[test]
    fn nine_row_stacked_growlocal() {
        let a = nine_row();
        let params = GrowLocalParams::default();
        let b = block_parallel_schedule(&a, 2, 3, |g| growlocal_schedule(g, 2, &params)).unwrap();
        let g = ComputeDag::from_matrix(&a);
        assert!(b.schedule.validate(&g).is_empty());
        assert_eq!(
            b.schedule.n_supersteps(),
            b.block_supersteps.iter().sum::<usize>()
        );
        // row 8 depends on row 1 across two blocks
        assert!(b.schedule.step_of(7) > b.schedule.step_of(0));
    }

    #[test]
    fn single_block_matches_direct() {
        let a = gen_narrow_bandwidth(800, 0.2, 8.0, 3).unwrap();
        let g = ComputeDag::from_matrix(&a);
        let params = GrowLocalParams::default();
        let direct = growlocal_schedule(&g, 4, &params).unwrap();
        let b = block_parallel_schedule(&a, 4, 1, |g| growlocal_schedule(g, 4, &params)).unwrap();
        assert_eq!(b.schedule, direct);
    }

    #[test]
    fn scheduler_errors_propagate() {
        let a = nine_row();
        let r = block_parallel_schedule(&a, 2, 3, |_| Err(Error::InvalidParameter("x".into())));
        assert!(r.is_err());
        let r = block_parallel_schedule(&a, 2, 3, |g| wavefront_schedule(g, 3));
        assert!(matches!(r, Err(Error::InvalidSchedule(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn stacked_schedules_are_valid(
            n in 4usize..300,
            p in 0.0f64..0.1,
            t in 1usize..9,
            k in 1usize..6,
            seed in any::<u64>(),
        ) {
            let a = gen_erdos_renyi(n, p, seed).unwrap();
            let t = t.min(n);
            let params = GrowLocalParams::default();
            let b = block_parallel_schedule(&a, k, t, |g| growlocal_schedule(g, k, &params)).unwrap();
            let g = ComputeDag::from_matrix(&a);
            prop_assert!(b.schedule.validate(&g).is_empty());
            prop_assert_eq!(b.schedule.n_supersteps(), b.block_supersteps.iter().sum::<usize>());
            prop_assert_eq!(b.ranges.len(), t);
        }
    }
}
