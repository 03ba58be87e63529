mod pairfile;

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use implicit_sketch::calibrate::{calibrate, CalibrationGrid};
use implicit_sketch::hadamard::matrix_norm;
use implicit_sketch::recsum::{recursive_sum_offline, LevelDiagnostics};
use implicit_sketch::sketches::SimulatedBlackbox;
use implicit_sketch::stream::StreamGenerator;
use implicit_sketch::{
    BitHash, Calibration, Error, ExactHistogram, GeneratorMode, HadamardFunction, IMMatrixSketch, PairCounts,
    RecursiveSum, RecursiveSumConfig, Regime,
};

use pairfile::{domain_size, write_events, PairReader};

#[derive(Parser)]
#[command(name = "implicit-sketch", version, about = "Streaming estimates of ‖g[A]‖₁ for implicit stream matrices")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic pair stream.
    Generate(GenerateArgs),
    /// Run an estimator over a pair file and print a JSON report.
    Estimate(EstimateArgs),
    /// Fit c_r in r(n) = max(2, c_r·ln n) and write it as JSON.
    Calibrate(CalibrateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Independent,
    PerfectDependence,
    PlantedRows,
    Mixture,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    /// Dependent fraction of a mixture stream.
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    /// Comma-separated planted-row probabilities.
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    weights: Vec<f64>,
    #[arg(long, env = "IMPLICIT_SKETCH_SEED", default_value_t = 0)]
    seed: u64,
    /// Output path (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Algorithm {
    Exact,
    Im08,
    Pipeline,
}

#[derive(Args)]
struct EstimateArgs {
    /// Pair file to read.
    input: PathBuf,
    #[arg(long, value_enum, default_value = "pipeline")]
    algorithm: Algorithm,
    /// Hadamard function: `l1` or `lp:<p>` with p in (0, 1].
    #[arg(long, default_value = "l1")]
    g: HadamardFunction,
    #[arg(long, default_value_t = 0.2)]
    eps: f64,
    #[arg(long, default_value = "practical")]
    regime: Regime,
    #[arg(long, env = "IMPLICIT_SKETCH_SEED", default_value_t = 0)]
    seed: u64,
    /// Domain size when the file has no `# n=` header.
    #[arg(long)]
    n: Option<usize>,
    /// JSON file holding `c_r`, as written by `calibrate`.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Also compute the exact value and the relative error.
    #[arg(long)]
    with_oracle: bool,
    /// Append `x,estimate,oracle,error` with x = n to this CSV file.
    #[arg(long)]
    emit_csv: Option<PathBuf>,
    /// Write the BA2 sketch checkpoint (im08 only).
    #[arg(long)]
    save_sketch: Option<PathBuf>,
    /// Merge BA2 checkpoints into the sketch before estimating (im08 only).
    #[arg(long)]
    merge_sketch: Vec<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, value_delimiter = ',', default_value = "16,64")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 10_000)]
    m: usize,
    #[arg(long, env = "IMPLICIT_SKETCH_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct RunReport {
    estimate: f64,
    oracle: Option<f64>,
    relative_error: Option<f64>,
    algorithm: Algorithm,
    g: String,
    n: usize,
    m: u64,
    eps: f64,
    seed: u64,
    space_bytes: usize,
    wall_time_ms: f64,
    constants_regime: String,
    levels: Vec<LevelDiagnostics>,
}

#[derive(Serialize)]
struct CalibrationFile {
    c_r: f64,
    trials: usize,
    coverage: f64,
    worst_factor: f64,
}

/// An error with its exit code: 2 for input problems, 3 for configuration.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

fn input(err: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, err: err.into() }
}

fn config(err: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 3, err: err.into() }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(_) | Error::Config(_) => config(e),
            Error::OutOfRange { .. } | Error::EmptyStream | Error::Checkpoint(_) => input(e),
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Calibrate(a) => cmd_calibrate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn output(path: Option<&Path>) -> Outcome<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display())).map_err(config)?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn cmd_generate(a: GenerateArgs) -> Outcome<()> {
    if a.m == 0 {
        return Err(config(anyhow!("--m must be at least 1")));
    }
    let mode = match a.mode {
        Mode::Independent => GeneratorMode::Independent,
        Mode::PerfectDependence => GeneratorMode::PerfectDependence,
        Mode::PlantedRows => GeneratorMode::PlantedRows { weights: a.weights },
        Mode::Mixture => GeneratorMode::Mixture { lambda: a.lambda },
    };
    let generator = StreamGenerator::new(mode, a.n, a.seed)?;
    let mut out = output(a.out.as_deref())?;
    write_events(&mut out, a.n, generator.events(a.m)).context("write failed").map_err(config)
}

fn load_calibration(path: Option<&Path>) -> Outcome<Calibration> {
    let Some(path) = path else {
        eprintln!("warning: no calibration file given, using c_r = {}", Calibration::default().c_r);
        return Ok(Calibration::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display())).map_err(config)?;
    let cal: Calibration = serde_json::from_str(&text)
        .with_context(|| format!("{} is not a calibration file", path.display()))
        .map_err(config)?;
    Ok(Calibration::new(cal.c_r)?)
}

/// Streams the file through `sink` one chunk at a time; returns the oracle
/// histogram when one is kept.
fn scan(
    reader: &mut PairReader,
    n: usize,
    keep_histogram: bool,
    mut sink: impl FnMut(&PairCounts) -> Outcome<()>,
) -> Outcome<Option<ExactHistogram>> {
    let mut hist = if keep_histogram { Some(ExactHistogram::new(n)?) } else { None };
    let mut buf = Vec::new();
    while reader.next_chunk(&mut buf).map_err(input)? {
        let batch = PairCounts::from_events(n, &buf)?;
        if let Some(h) = hist.as_mut() {
            for (e, c) in batch.pairs() {
                h.ingest_weighted(e, c)?;
            }
        }
        sink(&batch)?;
    }
    Ok(hist)
}

fn cmd_estimate(a: EstimateArgs) -> Outcome<()> {
    let start = Instant::now();
    let calibration = load_calibration(a.calibration.as_deref())?;
    if (!a.merge_sketch.is_empty() || a.save_sketch.is_some()) && a.algorithm != Algorithm::Im08 {
        return Err(config(anyhow!("sketch checkpoints are only supported with --algorithm im08")));
    }
    if !a.g.is_l1() && a.algorithm == Algorithm::Im08 {
        return Err(config(anyhow!("im08 estimates the L1 norm only; use --g l1")));
    }
    let n = match a.n {
        Some(n) => n,
        None => domain_size(&a.input).map_err(input)?,
    };
    if n == 0 {
        return Err(input(Error::EmptyStream));
    }
    let mut reader = PairReader::open(&a.input).map_err(input)?;
    if let Some(h) = reader.header() {
        if a.n.is_some_and(|flag| flag != h) {
            return Err(config(anyhow!("--n {} disagrees with the file header n={h}", a.n.unwrap())));
        }
    }
    reader.bound(n).map_err(input)?;

    let explicit = !a.g.is_l1();
    let need_hist = a.with_oracle || a.algorithm == Algorithm::Exact || explicit;
    let mut levels = Vec::new();
    let (estimate, hist, space_bytes, m) = match a.algorithm {
        Algorithm::Exact => {
            let hist = scan(&mut reader, n, true, |_| Ok(()))?.expect("histogram kept");
            let est = hist.exact_distance(a.g)?;
            let (space, m) = (hist.space_bytes(), hist.m());
            (est, Some(hist), space, m)
        }
        Algorithm::Im08 => {
            let mut sketch = IMMatrixSketch::new(n, BitHash::ones(n), im08_reps(), a.seed)?;
            let hist = scan(&mut reader, n, need_hist, |b| Ok(sketch.ingest_counts(b)?))?;
            for path in &a.merge_sketch {
                let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display())).map_err(input)?;
                sketch.merge(&IMMatrixSketch::from_bytes(&bytes)?)?;
            }
            if let Some(path) = &a.save_sketch {
                fs::write(path, sketch.to_bytes()?)
                    .with_context(|| format!("cannot write {}", path.display()))
                    .map_err(config)?;
            }
            (sketch.estimate()?, hist, sketch.space_bytes(), sketch.m())
        }
        Algorithm::Pipeline => {
            let cfg = RecursiveSumConfig::new(n, a.eps, calibration, a.regime, a.seed)?;
            if explicit {
                let hist = scan(&mut reader, n, true, |_| Ok(()))?.expect("histogram kept");
                let matrix = hist.view()?.to_explicit();
                let bb = SimulatedBlackbox {
                    matrix: matrix.clone(),
                    g: a.g,
                    eps1: a.eps / 2.0,
                    delta1: cfg.heavy[0].keyrow.delta1,
                    r: calibration.r(n),
                    delta2: cfg.heavy[0].keyrow.delta2,
                    seed: a.seed,
                };
                let est = recursive_sum_offline(&matrix, a.g, &bb, &cfg)?;
                levels = est.levels;
                (est.result, Some(hist.clone()), 8 * n * n, hist.m())
            } else {
                let mut rs = RecursiveSum::new(cfg)?;
                let hist = scan(&mut reader, n, need_hist, |b| {
                    rs.ingest_batch(b);
                    Ok(())
                })?;
                if rs.m() == 0 {
                    return Err(input(Error::EmptyStream));
                }
                let est = rs.estimate();
                levels = est.levels;
                (est.result, hist, rs.space_bytes(), rs.m())
            }
        }
    };
    let oracle = if a.with_oracle {
        let h = hist.as_ref().expect("oracle histogram kept");
        Some(if explicit { matrix_norm(a.g, &h.view()?.to_explicit()) } else { h.exact_distance(a.g)? })
    } else {
        None
    };
    let relative_error = oracle.map(|o| if o > 0.0 { (estimate - o).abs() / o } else { (estimate - o).abs() });
    let report = RunReport {
        estimate,
        oracle,
        relative_error,
        algorithm: a.algorithm,
        g: a.g.to_string(),
        n,
        m,
        eps: a.eps,
        seed: a.seed,
        space_bytes,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        constants_regime: a.regime.name().to_string(),
        levels,
    };
    if let Some(path) = &a.emit_csv {
        append_csv(path, &report).map_err(config)?;
    }
    let json = serde_json::to_string_pretty(&report).map_err(config)?;
    println!("{json}");
    Ok(())
}

fn im08_reps() -> usize {
    implicit_sketch::params::ba2_reps(implicit_sketch::params::DEFAULT_DELTA2, implicit_sketch::params::DEFAULT_C2)
}

fn append_csv(path: &Path, r: &RunReport) -> anyhow::Result<()> {
    let fresh = !path.exists();
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "x,estimate,oracle,error")?;
    }
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    writeln!(f, "{},{},{},{}", r.n, r.estimate, opt(r.oracle), opt(r.relative_error))?;
    Ok(())
}

fn cmd_calibrate(a: CalibrateArgs) -> Outcome<()> {
    let grid = CalibrationGrid { sizes: a.sizes, trials: a.trials, m: a.m, seed: a.seed, ..CalibrationGrid::default() };
    let report = calibrate(&grid)?;
    eprintln!(
        "c_r = {:.4} over {} trials (coverage {:.3}, worst factor {:.3})",
        report.calibration.c_r, report.trials, report.coverage, report.worst_factor
    );
    let file = CalibrationFile {
        c_r: report.calibration.c_r,
        trials: report.trials,
        coverage: report.coverage,
        worst_factor: report.worst_factor,
    };
    let mut out = output(a.out.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &file).map_err(config)?;
    writeln!(out).and_then(|_| out.flush()).map_err(config)?;
    Ok(())
}
