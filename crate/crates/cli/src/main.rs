//! `sptrsv`: generate matrices, schedule, solve and benchmark.
//!
//! Every command prints one JSON object on stdout when it succeeds. Failures
//! print `{"error": <kind>, "message": <text>}` on stderr and exit non-zero.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use sptrsv_core::{
    apply_reordering, gen_erdos_renyi, gen_narrow_bandwidth, inverse_permute_vector,
    parallel_sptrsv, performance_profile, read_matrix_market_file, relative_residual,
    run_benchmark, schedule_matrix, serial_sptrsv, write_matrix_market_file, write_reports_csv,
    BenchCase, BenchConfig, BspSchedule, ComputeDag, CsrLowerTriangular, ExecOptions,
    ExecutablePlan, GrowLocalParams, Scheduler, SchedulerConfig,
};

/// Relative tolerance for solutions computed on a reordered matrix.
const REORDER_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] sptrsv_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Verification(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(_) => "core",
            CliError::Io { .. } => "io",
            CliError::Usage(_) => "usage",
            CliError::Verification(_) => "verification",
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Parser)]
#[command(
    name = "sptrsv",
    version,
    about = "Barrier-synchronized sparse triangular solves"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write random lower-triangular matrices and a manifest.
    Gen(GenArgs),
    /// Schedule one matrix and write the schedule CSV.
    Schedule(ScheduleArgs),
    /// Solve with a schedule and compare against the serial solve.
    Solve(SolveArgs),
    /// Time every scheduler on every matrix of a directory.
    Bench(BenchArgs),
    /// Print structural statistics of a matrix.
    Stats(StatsArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Kind {
    /// Erdos-Renyi: every lower entry with probability p.
    Er,
    /// Narrow bandwidth: probability p * exp((1 - distance) / b).
    Nb,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: f64,
    /// Bandwidth, required for `nb`.
    #[arg(long)]
    b: Option<f64>,
    /// Seed of the first matrix; matrix i uses seed + i.
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScheduleParams {
    #[arg(long, default_value_t = 20.0)]
    alpha0: f64,
    #[arg(long, default_value_t = 1.5)]
    growth: f64,
    #[arg(long, default_value_t = 500.0)]
    sync_cost: f64,
    #[arg(long, default_value_t = 0.97)]
    worthy: f64,
    /// Diagonal blocks scheduled independently (scheduling threads).
    #[arg(long, default_value_t = 1)]
    blocks: usize,
    /// Weight cap of a funnel part (default: max(20 x mean weight, max weight)).
    #[arg(long)]
    funnel_cap: Option<u64>,
}

impl ScheduleParams {
    fn config(&self, algo: Scheduler, cores: usize) -> SchedulerConfig {
        SchedulerConfig {
            algo,
            cores,
            params: GrowLocalParams {
                alpha0: self.alpha0,
                growth: self.growth,
                sync_cost: self.sync_cost,
                worthy_factor: self.worthy,
            },
            blocks: self.blocks,
            funnel_cap: self.funnel_cap,
        }
    }
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    cores: usize,
    #[arg(long, default_value = "growlocal", value_parser = parse_scheduler)]
    algo: Scheduler,
    #[command(flatten)]
    params: ScheduleParams,
    /// Schedule CSV (`vertex,core,superstep`, 1-based core and superstep).
    #[arg(long)]
    out: PathBuf,
    /// Also write the stats JSON here.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Print every GrowLocal attempt on stderr.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    schedule: PathBuf,
    #[arg(long)]
    cores: usize,
    /// `ones`, or a file with one value per line.
    #[arg(long, default_value = "ones")]
    rhs: String,
    /// Permute matrix, rhs and schedule so each superstep/core block is contiguous.
    #[arg(long)]
    reorder: bool,
    /// Write the solution here, one value per line.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    pin: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    matrix_dir: PathBuf,
    #[arg(long)]
    cores: usize,
    #[arg(long, value_delimiter = ',', value_parser = parse_scheduler,
          default_value = "serial,wavefront,growlocal,funnel-gl")]
    algos: Vec<Scheduler>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 2)]
    warmup: usize,
    #[command(flatten)]
    params: ScheduleParams,
    #[arg(long)]
    reorder: bool,
    #[arg(long)]
    pin: bool,
    #[arg(long)]
    out: PathBuf,
    /// Also write the reports as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Performance-profile CSV (`tau,<scheduler>...`).
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    profile_points: usize,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    matrix: PathBuf,
}

fn parse_scheduler(s: &str) -> std::result::Result<Scheduler, String> {
    s.parse().map_err(|e: sptrsv_core::Error| e.to_string())
}

fn read_matrix(path: &Path) -> Result<CsrLowerTriangular> {
    Ok(read_matrix_market_file(path)?)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(path))
}

fn print_json(value: &impl Serialize) {
    println!(
        "{}",
        serde_json::to_string(value).expect("serializable output")
    );
}

#[derive(Serialize)]
struct ManifestEntry {
    file: String,
    seed: u64,
    n: usize,
    nnz: usize,
    avg_wavefront: f64,
}

#[derive(Serialize)]
struct Manifest {
    kind: Kind,
    n: usize,
    p: f64,
    b: Option<f64>,
    base_seed: u64,
    count: usize,
    matrices: Vec<ManifestEntry>,
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    if matches!(args.kind, Kind::Nb) && args.b.is_none() {
        return Err(CliError::Usage("--b is required for --kind nb".into()));
    }
    if matches!(args.kind, Kind::Er) && args.b.is_some() {
        return Err(CliError::Usage("--b only applies to --kind nb".into()));
    }
    fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    let mut matrices = Vec::with_capacity(args.count);
    for i in 0..args.count {
        let seed = args.seed.wrapping_add(i as u64);
        let a = match args.kind {
            Kind::Er => gen_erdos_renyi(args.n, args.p, seed)?,
            Kind::Nb => gen_narrow_bandwidth(args.n, args.p, args.b.unwrap_or_default(), seed)?,
        };
        let name = format!("{}_n{}_s{seed}.mtx", kind_name(args.kind), args.n);
        write_matrix_market_file(&a, args.out.join(&name))?;
        matrices.push(ManifestEntry {
            file: name,
            seed,
            n: a.n(),
            nnz: a.nnz(),
            avg_wavefront: ComputeDag::from_matrix(&a).average_wavefront_size().value(),
        });
    }
    let manifest = Manifest {
        kind: args.kind,
        n: args.n,
        p: args.p,
        b: args.b,
        base_seed: args.seed,
        count: args.count,
        matrices,
    };
    write_json(&args.out.join("manifest.json"), &manifest)?;
    print_json(&json!({ "written": manifest.count, "dir": args.out }));
    Ok(())
}

fn kind_name(k: Kind) -> &'static str {
    match k {
        Kind::Er => "er",
        Kind::Nb => "nb",
    }
}

fn cmd_schedule(args: ScheduleArgs) -> Result<()> {
    let a = read_matrix(&args.matrix)?;
    let cfg = args.params.config(args.algo, args.cores);
    if args.trace && cfg.blocks > 1 {
        return Err(CliError::Usage("--trace needs --blocks 1".into()));
    }
    let (schedule, elapsed, block_supersteps) = if args.trace {
        let start = Instant::now();
        let g = ComputeDag::from_matrix(&a);
        let stderr = std::io::stderr();
        let mut log = stderr.lock();
        let s = cfg.schedule_dag_traced(&g, |r| {
            let _ = writeln!(log, "{r}");
        })?;
        let steps = s.n_supersteps();
        (s, start.elapsed(), vec![steps])
    } else {
        let s = schedule_matrix(&a, &cfg)?;
        (s.schedule, s.elapsed, s.block_supersteps)
    };

    let g = ComputeDag::from_matrix(&a);
    schedule.check(&g)?;
    let f = fs::File::create(&args.out).map_err(io_err(&args.out))?;
    schedule.write_csv(BufWriter::new(f))?;

    let stats = schedule.stats(&g, cfg.params.sync_cost);
    let out = json!({
        "matrix": args.matrix,
        "algo": args.algo.name(),
        "cores": args.cores,
        "blocks": cfg.blocks,
        "supersteps": stats.n_supersteps,
        "wavefronts": stats.wavefronts,
        "barrier_reduction": stats.barrier_reduction,
        "imbalance": stats.imbalance,
        "modeled_cost": stats.modeled_cost,
        "total_work": stats.total_work,
        "sched_time_ns": elapsed.as_nanos() as u64,
        "block_supersteps": block_supersteps,
        "schedule": args.out,
    });
    if let Some(path) = &args.stats {
        write_json(path, &out)?;
    }
    print_json(&out);
    Ok(())
}

fn read_rhs(spec: &str, n: usize) -> Result<Vec<f64>> {
    if spec == "ones" {
        return Ok(vec![1.0; n]);
    }
    let path = Path::new(spec);
    let f = fs::File::open(path).map_err(io_err(path))?;
    let mut b = Vec::with_capacity(n);
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') || t.starts_with('#') {
            continue;
        }
        let v = t
            .parse::<f64>()
            .map_err(|e| CliError::Usage(format!("{spec}: line {}: {e}", i + 1)))?;
        b.push(v);
    }
    if b.len() != n {
        return Err(CliError::Usage(format!(
            "{spec}: expected {n} right-hand side values, got {}",
            b.len()
        )));
    }
    Ok(b)
}

fn max_relative_diff(reference: &[f64], x: &[f64]) -> f64 {
    let scale = reference
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    reference
        .iter()
        .zip(x)
        .fold(0.0f64, |m, (r, v)| m.max((r - v).abs()))
        / scale
}

fn bitwise_equal(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn cmd_solve(args: SolveArgs) -> Result<()> {
    let a = read_matrix(&args.matrix)?;
    let f = fs::File::open(&args.schedule).map_err(io_err(&args.schedule))?;
    let s = BspSchedule::read_csv(BufReader::new(f), Some(args.cores))?;
    let b = read_rhs(&args.rhs, a.n())?;
    let reference = serial_sptrsv(&a, &b)?;
    let opts = ExecOptions {
        pin_threads: args.pin,
    };

    let x = if args.reorder {
        let r = apply_reordering(&a, &b, &s)?;
        let plan = ExecutablePlan::compile(&ComputeDag::from_matrix(&r.matrix), &r.schedule)?;
        let y = sptrsv_core::solve_repeated(&r.matrix, &r.rhs, &plan, 1, opts)?.x;
        inverse_permute_vector(&y, &r.permutation)?
    } else {
        let plan = ExecutablePlan::compile(&ComputeDag::from_matrix(&a), &s)?;
        if args.pin {
            sptrsv_core::solve_repeated(&a, &b, &plan, 1, opts)?.x
        } else {
            parallel_sptrsv(&a, &b, &plan)?
        }
    };

    let residual = relative_residual(&a, &x, &b);
    let equal = bitwise_equal(&x, &reference);
    let diff = max_relative_diff(&reference, &x);
    if let Some(path) = &args.out {
        let f = fs::File::create(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(f);
        for v in &x {
            writeln!(w, "{v:e}").map_err(io_err(path))?;
        }
        w.flush().map_err(io_err(path))?;
    }
    print_json(&json!({
        "n": a.n(),
        "supersteps": s.n_supersteps(),
        "reordered": args.reorder,
        "residual": residual,
        "bitwise_equal": equal,
        "max_relative_diff": diff,
    }));
    if args.reorder {
        if diff > REORDER_TOL {
            return Err(CliError::Verification(format!(
                "reordered solution differs from the serial solve by {diff:e}"
            )));
        }
    } else if !equal {
        return Err(CliError::Verification(
            "parallel solution is not bitwise equal to the serial solve".into(),
        ));
    }
    Ok(())
}

fn matrix_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().is_some_and(|e| e == "mtx") {
            files.push(path);
        }
    }
    if files.is_empty() {
        return Err(CliError::Usage(format!(
            "no .mtx files in {}",
            dir.display()
        )));
    }
    files.sort();
    Ok(files)
}

/// A scheduled case that owns its (possibly reordered) matrix.
struct Prepared {
    scheduler: Scheduler,
    matrix: Option<CsrLowerTriangular>,
    plan: ExecutablePlan,
    sched_time: std::time::Duration,
    barrier_reduction: f64,
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let files = matrix_files(&args.matrix_dir)?;
    let cfg = BenchConfig {
        reps: args.reps,
        warmup: args.warmup,
        exec: ExecOptions {
            pin_threads: args.pin,
        },
        ..BenchConfig::default()
    };
    let mut reports = Vec::new();
    for path in &files {
        let a = read_matrix(path)?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let g = ComputeDag::from_matrix(&a);
        let ones = vec![1.0; a.n()];
        let reference = serial_sptrsv(&a, &ones)?;

        let mut prepared = Vec::with_capacity(args.algos.len());
        for &algo in &args.algos {
            let sc = args.params.config(algo, args.cores);
            let scheduled = schedule_matrix(&a, &sc)?;
            let stats = scheduled.schedule.stats(&g, sc.params.sync_cost);
            let (matrix, plan, sched_time) = if args.reorder {
                // reordering counts as preprocessing
                let start = Instant::now();
                let r = apply_reordering(&a, &ones, &scheduled.schedule)?;
                let plan =
                    ExecutablePlan::compile(&ComputeDag::from_matrix(&r.matrix), &r.schedule)?;
                let x = inverse_permute_vector(
                    &parallel_sptrsv(&r.matrix, &r.rhs, &plan)?,
                    &r.permutation,
                )?;
                let diff = max_relative_diff(&reference, &x);
                if diff > REORDER_TOL {
                    return Err(CliError::Verification(format!(
                        "{id}/{algo}: reordered solution differs by {diff:e}"
                    )));
                }
                (Some(r.matrix), plan, scheduled.elapsed + start.elapsed())
            } else {
                let plan = ExecutablePlan::compile(&g, &scheduled.schedule)?;
                if !bitwise_equal(&parallel_sptrsv(&a, &ones, &plan)?, &reference) {
                    return Err(CliError::Verification(format!(
                        "{id}/{algo}: parallel solution is not bitwise equal to the serial solve"
                    )));
                }
                (None, plan, scheduled.elapsed)
            };
            prepared.push(Prepared {
                scheduler: algo,
                matrix,
                plan,
                sched_time,
                barrier_reduction: stats.barrier_reduction,
            });
        }
        let cases: Vec<BenchCase<'_>> = prepared
            .iter()
            .map(|p| BenchCase {
                scheduler: p.scheduler.name().to_string(),
                matrix: p.matrix.as_ref().unwrap_or(&a),
                plan: &p.plan,
                sched_time: p.sched_time,
                barrier_reduction: p.barrier_reduction,
            })
            .collect();
        reports.extend(run_benchmark(&id, &a, &cases, &cfg)?);
    }

    let f = fs::File::create(&args.out).map_err(io_err(&args.out))?;
    write_reports_csv(&reports, BufWriter::new(f))?;
    if let Some(path) = &args.json {
        write_json(path, &reports)?;
    }
    if let Some(path) = &args.profile {
        let profile = performance_profile(&reports, args.profile_points);
        let f = fs::File::create(path).map_err(io_err(path))?;
        profile.write_csv(BufWriter::new(f))?;
    }
    print_json(&json!({
        "matrices": files.len(),
        "rows": reports.len(),
        "unstable": reports.iter().filter(|r| r.unstable_flag).count(),
        "report": args.out,
    }));
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<()> {
    let a = read_matrix(&args.matrix)?;
    let g = ComputeDag::from_matrix(&a);
    let wf = g.wavefronts();
    let widest = wf.levels.iter().map(Vec::len).max().unwrap_or(0);
    print_json(&json!({
        "matrix": args.matrix,
        "n": a.n(),
        "nnz": a.nnz(),
        "flops": a.flops(),
        "edges": g.n_edges(),
        "total_weight": g.total_weight(),
        "wavefronts": wf.len(),
        "avg_wavefront": g.average_wavefront_size().value(),
        "max_wavefront": widest,
    }));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Schedule(a) => cmd_schedule(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Stats(a) => cmd_stats(a),
    }
}

fn error_line(kind: &str, message: &str) {
    eprintln!("{}", json!({ "error": kind, "message": message }));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            error_line("usage", e.to_string().trim_end());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error_line(e.kind(), &e.to_string());
            match e {
                CliError::Usage(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
