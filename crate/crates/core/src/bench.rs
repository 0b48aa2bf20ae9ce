//! Timing protocol, benchmark reports and performance profiles.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::{Duration, Instant};

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::exec::{solve_repeated, ExecOptions, ExecutablePlan};
use crate::matrix::{serial_sptrsv, CsrLowerTriangular};

/// IQR / median above which a measurement is called unstable.
pub const UNSTABLE_IQR_RATIO: f64 = 0.2;

/// Order statistics of a set of timings, in nanoseconds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingStats {
    pub samples: usize,
    pub median_ns: f64,
    pub q1_ns: f64,
    pub q3_ns: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl TimingStats {
    /// Median and quartiles by linear interpolation between order statistics.
    pub fn from_durations(times: &[Duration]) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidParameter("no timing samples".into()));
        }
        let mut ns: Vec<f64> = times.iter().map(|d| d.as_nanos() as f64).collect();
        ns.sort_by(f64::total_cmp);
        Ok(Self {
            samples: ns.len(),
            median_ns: quantile(&ns, 0.5),
            q1_ns: quantile(&ns, 0.25),
            q3_ns: quantile(&ns, 0.75),
        })
    }

    pub fn iqr_ratio(&self) -> f64 {
        if self.median_ns > 0.0 {
            (self.q3_ns - self.q1_ns) / self.median_ns
        } else {
            0.0
        }
    }

    pub fn is_unstable(&self) -> bool {
        self.iqr_ratio() > UNSTABLE_IQR_RATIO
    }
}

/// Number of solves after which scheduling has paid for itself:
/// `sched / (serial - parallel)`, or infinity without a speed-up.
pub fn amortization_threshold(sched_ns: f64, serial_ns: f64, parallel_ns: f64) -> f64 {
    if serial_ns > parallel_ns {
        sched_ns / (serial_ns - parallel_ns)
    } else {
        f64::INFINITY
    }
}

fn finite_or_inf<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

/// One row of a benchmark report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub matrix: String,
    pub scheduler: String,
    pub cores: usize,
    pub supersteps: usize,
    pub serial_median_ns: f64,
    pub parallel_median_ns: f64,
    pub sched_time_ns: f64,
    pub speedup: f64,
    pub barrier_reduction: f64,
    #[serde(serialize_with = "finite_or_inf")]
    pub amortization_threshold: f64,
    pub unstable_flag: bool,
    pub flops: usize,
    pub serial_q1_ns: f64,
    pub serial_q3_ns: f64,
    pub parallel_q1_ns: f64,
    pub parallel_q3_ns: f64,
}

/// Measurement settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    pub reps: usize,
    pub warmup: usize,
    /// Extra measurement rounds allowed while the result is unstable.
    pub max_reruns: usize,
    pub exec: ExecOptions,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            reps: 100,
            warmup: 2,
            max_reruns: 3,
            exec: ExecOptions::default(),
        }
    }
}

/// A plan to time, with the matrix it runs on (possibly reordered).
#[derive(Debug, Clone)]
pub struct BenchCase<'a> {
    pub scheduler: String,
    pub matrix: &'a CsrLowerTriangular,
    pub plan: &'a ExecutablePlan,
    pub sched_time: Duration,
    pub barrier_reduction: f64,
}

fn measure(
    cfg: &BenchConfig,
    mut batch: impl FnMut(usize) -> Result<Vec<Duration>>,
) -> Result<(TimingStats, bool)> {
    if cfg.reps == 0 {
        return Err(Error::InvalidParameter("reps must be at least 1".into()));
    }
    let mut round = 0;
    loop {
        let times = batch(cfg.warmup + cfg.reps)?;
        let stats = TimingStats::from_durations(&times[cfg.warmup..])?;
        if !stats.is_unstable() || round == cfg.max_reruns {
            let unstable = stats.is_unstable();
            return Ok((stats, unstable));
        }
        round += 1;
    }
}

/// Times the serial solve on `a` with a right-hand side of ones.
pub fn time_serial(a: &CsrLowerTriangular, cfg: &BenchConfig) -> Result<(TimingStats, bool)> {
    let b = vec![1.0; a.n()];
    measure(cfg, |runs| {
        (0..runs)
            .map(|_| {
                let start = Instant::now();
                let x = serial_sptrsv(a, &b)?;
                let t = start.elapsed();
                std::hint::black_box(x);
                Ok(t)
            })
            .collect()
    })
}

/// Times every case against one serial baseline of `a`.
///
/// Each case runs `warmup` untimed and `reps` timed solves with `b = 1`
/// inside one batch of workers. A batch whose IQR exceeds 20% of its median
/// is repeated up to `max_reruns` times; the flag records whether the last
/// round was still unstable.
pub fn run_benchmark(
    matrix_id: &str,
    a: &CsrLowerTriangular,
    cases: &[BenchCase<'_>],
    cfg: &BenchConfig,
) -> Result<Vec<BenchReport>> {
    let (serial, serial_unstable) = time_serial(a, cfg)?;
    cases
        .iter()
        .map(|c| {
            let b = vec![1.0; c.matrix.n()];
            let (par, unstable) = measure(cfg, |runs| {
                Ok(solve_repeated(c.matrix, &b, c.plan, runs, cfg.exec)?.times)
            })?;
            let sched_ns = c.sched_time.as_nanos() as f64;
            Ok(BenchReport {
                matrix: matrix_id.to_string(),
                scheduler: c.scheduler.clone(),
                cores: c.plan.n_cores(),
                supersteps: c.plan.n_supersteps(),
                serial_median_ns: serial.median_ns,
                parallel_median_ns: par.median_ns,
                sched_time_ns: sched_ns,
                speedup: serial.median_ns / par.median_ns,
                barrier_reduction: c.barrier_reduction,
                amortization_threshold: amortization_threshold(
                    sched_ns,
                    serial.median_ns,
                    par.median_ns,
                ),
                unstable_flag: unstable || serial_unstable,
                flops: a.flops(),
                serial_q1_ns: serial.q1_ns,
                serial_q3_ns: serial.q3_ns,
                parallel_q1_ns: par.q1_ns,
                parallel_q3_ns: par.q3_ns,
            })
        })
        .collect()
}

pub fn write_reports_csv<W: Write>(reports: &[BenchReport], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in reports {
        wr.serialize(r)
            .map_err(|e| Error::InvalidParameter(format!("csv: {e}")))?;
    }
    wr.flush()?;
    Ok(())
}

/// Fraction of matrices on which each scheduler is within `tau` of the
/// fastest scheduler, for a geometric grid of `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceProfile {
    pub taus: Vec<f64>,
    /// `(scheduler, fraction per tau)`, sorted by scheduler.
    pub series: Vec<(String, Vec<f64>)>,
}

/// Builds a profile from `parallel_median_ns` with `points` grid values
/// from 1 to the largest observed ratio (both exact).
///
/// A scheduler missing on some matrix counts as never within reach there.
pub fn performance_profile(reports: &[BenchReport], points: usize) -> PerformanceProfile {
    let mut by_matrix: BTreeMap<&str, Vec<&BenchReport>> = BTreeMap::new();
    for r in reports {
        by_matrix.entry(&r.matrix).or_default().push(r);
    }
    let mut ratios: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in reports {
        ratios.entry(&r.scheduler).or_default();
    }
    for group in by_matrix.values() {
        let best = group
            .iter()
            .map(|r| r.parallel_median_ns)
            .fold(f64::INFINITY, f64::min);
        for r in group {
            let ratio = if best > 0.0 {
                r.parallel_median_ns / best
            } else {
                1.0
            };
            ratios
                .get_mut(r.scheduler.as_str())
                .expect("known scheduler")
                .push(ratio);
        }
    }
    let max_ratio = ratios.values().flatten().copied().fold(1.0, f64::max);
    let taus = if max_ratio <= 1.0 {
        vec![1.0]
    } else if points < 2 {
        vec![1.0, max_ratio]
    } else {
        let step = max_ratio.ln() / (points - 1) as f64;
        let mut t: Vec<f64> = (0..points).map(|i| (step * i as f64).exp()).collect();
        t[0] = 1.0;
        t[points - 1] = max_ratio;
        t
    };
    let n_matrices = by_matrix.len().max(1) as f64;
    let series = ratios
        .into_iter()
        .map(|(name, rs)| {
            let frac = taus
                .iter()
                .map(|&tau| rs.iter().filter(|&&r| r <= tau).count() as f64 / n_matrices)
                .collect();
            (name.to_string(), frac)
        })
        .collect();
    PerformanceProfile { taus, series }
}

impl PerformanceProfile {
    /// `tau,<scheduler>...` with one row per grid point.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| Error::InvalidParameter(format!("csv: {e}"));
        let mut header = vec!["tau".to_string()];
        header.extend(self.series.iter().map(|(n, _)| n.clone()));
        wr.write_record(&header).map_err(csv_err)?;
        for (i, tau) in self.taus.iter().enumerate() {
            let mut row = vec![tau.to_string()];
            row.extend(self.series.iter().map(|(_, f)| f[i].to_string()));
            wr.write_record(&row).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::ComputeDag;
    use crate::matrix::fixtures::six_row;
    use crate::schedule::BspSchedule;
    use proptest::prelude::*;

    fn report(matrix: &str, scheduler: &str, par: f64) -> BenchReport {
        BenchReport {
            matrix: matrix.into(),
            scheduler: scheduler.into(),
            cores: 1,
            supersteps: 1,
            serial_median_ns: 1.0,
            parallel_median_ns: par,
            sched_time_ns: 0.0,
            speedup: 1.0,
            barrier_reduction: 1.0,
            amortization_threshold: f64::INFINITY,
            unstable_flag: false,
            flops: 0,
            serial_q1_ns: 1.0,
            serial_q3_ns: 1.0,
            parallel_q1_ns: par,
            parallel_q3_ns: par,
        }
    }

    #[test]
    fn threshold_formula() {
        assert_eq!(amortization_threshold(1000.0, 300.0, 100.0), 5.0);
        assert_eq!(amortization_threshold(7.0, 10.0, 3.0), 1.0);
        assert_eq!(amortization_threshold(1000.0, 100.0, 100.0), f64::INFINITY);
        assert_eq!(amortization_threshold(1000.0, 100.0, 200.0), f64::INFINITY);
        assert_eq!(amortization_threshold(0.0, 2.0, 1.0), 0.0);
    }

    #[test]
    fn quartiles() {
        let d = |v: &[u64]| {
            v.iter()
                .map(|&x| Duration::from_nanos(x))
                .collect::<Vec<_>>()
        };
        let s = TimingStats::from_durations(&d(&[7])).unwrap();
        assert_eq!((s.q1_ns, s.median_ns, s.q3_ns), (7.0, 7.0, 7.0));
        let s = TimingStats::from_durations(&d(&[4, 1, 3, 2, 5])).unwrap();
        assert_eq!((s.q1_ns, s.median_ns, s.q3_ns), (2.0, 3.0, 4.0));
        assert!(s.is_unstable());
        let s = TimingStats::from_durations(&d(&[100, 101, 99, 100])).unwrap();
        assert!(!s.is_unstable());
        assert!(TimingStats::from_durations(&[]).is_err());
    }

    #[test]
    fn single_sample_benchmark() {
        let a = six_row();
        let g = ComputeDag::from_matrix(&a);
        let plan = ExecutablePlan::compile(&g, &BspSchedule::serial(6, 1)).unwrap();
        let cfg = BenchConfig {
            reps: 1,
            warmup: 0,
            ..Default::default()
        };
        let case = BenchCase {
            scheduler: "serial".into(),
            matrix: &a,
            plan: &plan,
            sched_time: Duration::from_millis(1),
            barrier_reduction: 4.0,
        };
        let r = run_benchmark("six_row", &a, &[case], &cfg).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].flops, 16);
        assert_eq!(r[0].parallel_q1_ns, r[0].parallel_median_ns);
        assert_eq!(r[0].parallel_q3_ns, r[0].parallel_median_ns);
        assert!(!r[0].unstable_flag);
    }

    #[test]
    fn csv_writes_inf() {
        let mut out = Vec::new();
        write_reports_csv(&[report("m", "s", 1.0)], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with(
            "matrix,scheduler,cores,supersteps,serial_median_ns,parallel_median_ns,\
             sched_time_ns,speedup,barrier_reduction,amortization_threshold,unstable_flag"
        ));
        assert!(lines.next().unwrap().contains(",inf,false,"));
    }

    #[test]
    fn profile_single_scheduler() {
        let p = performance_profile(&[report("a", "x", 3.0), report("b", "x", 5.0)], 10);
        assert_eq!(p.taus, vec![1.0]);
        assert_eq!(p.series, vec![("x".to_string(), vec![1.0])]);
    }

    #[test]
    fn profile_two_x_slower() {
        let reports = [
            report("a", "fast", 1.0),
            report("a", "slow", 2.0),
            report("b", "fast", 4.0),
            report("b", "slow", 8.0),
        ];
        let p = performance_profile(&reports, 11);
        assert_eq!(p.taus[0], 1.0);
        assert_eq!(*p.taus.last().unwrap(), 2.0);
        let slow = &p.series.iter().find(|(n, _)| n == "slow").unwrap().1;
        let fast = &p.series.iter().find(|(n, _)| n == "fast").unwrap().1;
        for (i, &tau) in p.taus.iter().enumerate() {
            assert_eq!(slow[i], if tau < 2.0 { 0.0 } else { 1.0 });
            assert_eq!(fast[i], 1.0);
        }
        let mut out = Vec::new();
        p.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("tau,fast,slow\n1,1,0\n"));
        assert!(text.ends_with("2,1,1\n"));
    }

    proptest! {
        #[test]
        fn profiles_monotone_and_reach_one(
            times in prop::collection::vec(prop::collection::vec(1.0f64..100.0, 3), 1..8),
        ) {
            let mut reports = Vec::new();
            for (m, row) in times.iter().enumerate() {
                for (s, &t) in row.iter().enumerate() {
                    reports.push(report(&format!("m{m}"), &format!("s{s}"), t));
                }
            }
            let p = performance_profile(&reports, 25);
            prop_assert!(p.taus.windows(2).all(|w| w[0] <= w[1]));
            for (_, f) in &p.series {
                prop_assert!(f.windows(2).all(|w| w[0] <= w[1]));
                prop_assert_eq!(*f.last().unwrap(), 1.0);
            }
        }
    }
}
