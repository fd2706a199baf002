//! Command-line front end. Logs and diagnostics go to stderr; results are
//! only ever written to files.
//!
//! Exit codes: `0` success, `1` runtime failure, `2` invalid configuration
//! or data.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::data_io::{generate_synthetic, load_panel, sidecar_path, write_panel, DgpSpec, PanelDataset, PanelSchema};
use crate::error::{Error, Result};
use crate::harness::{run_experiment, validate_plan, ExperimentPlan, RunOptions};
use crate::reporting::{sha256_hex, write_reports, Manifest};
use crate::svd_sampler::{sample_gamma, thin_svd, DenseSampler, GammaPosteriorSpec};

pub const THREADS_ENV: &str = "RIDGECAST_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "ridgecast",
    version,
    about = "Bayesian forecasting with many survey predictors"
)]
pub struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dry-run a plan: build designs at the first and last origin.
    Validate(DataArgs),
    /// Run an experiment and write forecasts, scores and reports.
    Run(RunArgs),
    /// Generate a synthetic panel with its metadata sidecar.
    Synth(SynthArgs),
    /// Time the SVD sampler against the dense reference.
    BenchSampler(BenchArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Metadata sidecar; defaults to `<data>.meta`.
    #[arg(long)]
    pub meta: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub input: DataArgs,
    /// Output directory, created if needed.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the plan seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long, env = THREADS_ENV)]
    pub threads: Option<usize>,
    /// Also write every mixture component to `components.csv`.
    #[arg(long)]
    pub components: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator settings; defaults reproduce the table layout.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// CSV path; the sidecar goes next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Survey block sizes to time.
    #[arg(long, value_delimiter = ',', default_value = "1000,2000,4000")]
    pub ks: Vec<usize>,
    /// Number of observations.
    #[arg(long, default_value_t = 100)]
    pub t: usize,
    #[arg(long, default_value_t = 5)]
    pub repetitions: usize,
    /// SVD draws per timed repetition.
    #[arg(long, default_value_t = 1000)]
    pub draws: usize,
    /// Skip the dense reference.
    #[arg(long)]
    pub no_dense: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> u8 {
    if e.is_input_error() {
        2
    } else {
        1
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate(a) => cmd_validate(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::BenchSampler(a) => cmd_bench_sampler(&a),
    }
}

fn load_data(args: &DataArgs) -> Result<(PanelDataset, Vec<u8>)> {
    let meta = args.meta.clone().unwrap_or_else(|| sidecar_path(&args.data));
    let schema = PanelSchema::load(&meta)?;
    let data = load_panel(&args.data, &schema)?;
    let mut bytes = fs::read(&args.data).map_err(|e| Error::io(&args.data, e))?;
    bytes.extend(fs::read(&meta).map_err(|e| Error::io(&meta, e))?);
    Ok((data, bytes))
}

pub fn cmd_validate(args: &DataArgs) -> Result<()> {
    let plan = ExperimentPlan::load(&args.plan)?;
    let (data, _) = load_data(args)?;
    let dims = validate_plan(&plan, &data)?;
    let mut report = format!(
        "{} origins from {} to {}\n{:<8} {:<24} {:>3} {:>8} {:>5} {:>4} {:>6}\n",
        plan.origins().len(),
        plan.origins()[0],
        plan.origins().last().unwrap(),
        "target",
        "spec",
        "h",
        "origin",
        "T",
        "M",
        "K"
    );
    for d in &dims {
        let _ = writeln!(
            report,
            "{:<8} {:<24} {:>3} {:>8} {:>5} {:>4} {:>6}{}",
            d.target,
            d.spec.to_string(),
            d.horizon,
            d.origin.to_string(),
            d.t,
            d.m,
            d.k,
            if d.fallback { "  (benchmark fallback)" } else { "" }
        );
    }
    eprint!("{report}");
    Ok(())
}

fn resolve_threads(flag: Option<usize>) -> usize {
    flag.filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

fn write_out(dir: &Path, name: &str, body: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<String> {
    let path = dir.join(name);
    let mut buf = Vec::new();
    body(&mut buf).map_err(|e| Error::io(&path, e))?;
    fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
    Ok(name.to_string())
}

pub fn cmd_run(args: &RunArgs) -> Result<()> {
    let plan_bytes = fs::read(&args.input.plan).map_err(|e| Error::io(&args.input.plan, e))?;
    let mut plan = ExperimentPlan::load(&args.input.plan)?;
    if let Some(seed) = args.seed {
        plan.seed = seed;
    }
    let (data, data_bytes) = load_data(&args.input)?;
    let threads = resolve_threads(args.threads);
    let opts = RunOptions {
        keep_components: args.components,
    };
    let results = run_experiment(&plan, &data, threads, opts)?;
    if !results.failures.is_empty() {
        log::warn!("{} work units failed; see failures.csv", results.failures.len());
    }

    let out = &args.out;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let scores = results.scores();
    let mut outputs = vec![
        write_out(out, "forecasts.csv", |w| results.write_forecasts_csv(w))?,
        write_out(out, "scores.csv", |w| scores.write_csv(w))?,
        write_out(out, "failures.csv", |w| results.write_failures_csv(w))?,
    ];
    if args.components {
        outputs.push(write_out(out, "components.csv", |w| results.write_components_csv(w))?);
    }
    outputs.extend(write_reports(&scores, &plan, out)?);
    Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        plan_hash: sha256_hex(&plan_bytes),
        data_hash: sha256_hex(&data_bytes),
        seed: plan.seed,
        outputs,
    }
    .write(out)?;
    log::info!("wrote {} forecasts to {}", results.outcomes.len(), out.display());
    Ok(())
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let spec = match &args.spec {
        Some(p) => DgpSpec::load(p)?,
        None => DgpSpec::default(),
    };
    let synth = generate_synthetic(&spec, args.seed)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_panel(&synth.panel, &args.out)?;
    let mut truth = String::from("variable,lag,coefficient\n");
    for s in &synth.signals {
        let _ = writeln!(truth, "{},{},{}", s.variable, s.lag, s.coefficient);
    }
    let mut truth_path = args.out.as_os_str().to_os_string();
    truth_path.push(".truth.csv");
    fs::write(&truth_path, truth).map_err(|e| Error::io(&truth_path, e))?;
    log::info!(
        "wrote {} periods x {} variables to {}",
        synth.panel.len(),
        synth.panel.variables().count(),
        args.out.display()
    );
    Ok(())
}

/// Timings for one block size.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub k: usize,
    pub t: usize,
    /// Seconds per draw, one entry per repetition.
    pub fast: Vec<f64>,
    pub dense: Vec<f64>,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

impl BenchRow {
    pub fn fast_median(&self) -> f64 {
        median(&self.fast)
    }

    pub fn dense_median(&self) -> f64 {
        median(&self.dense)
    }
}

/// Per-draw wall time of the SVD sampler (factors precomputed, as inside
/// the Gibbs sampler) and of the dense sampler, which refactors the
/// `K x K` precision every draw. Repetitions cycle through the whole ladder
/// so that background load affects every block size alike.
pub fn bench_sampler(
    ks: &[usize],
    t: usize,
    reps: usize,
    draws: usize,
    dense: bool,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    if reps == 0 || draws == 0 || t == 0 {
        return Err(Error::InvalidParameter(
            "t, repetitions and draws must be at least 1".into(),
        ));
    }
    if let Some(k) = ks.iter().find(|&&k| k < t) {
        return Err(Error::InvalidParameter(format!("ladder value {k} is below T = {t}")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut cases = Vec::new();
    for &k in ks {
        let z = DMatrix::from_fn(t, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let residual = nalgebra::DVector::from_fn(t, |_, _| rng.sample::<f64, _>(StandardNormal));
        let spec = GammaPosteriorSpec {
            residual,
            sigma2: 0.5,
            delta: 0.1,
        };
        let factors = thin_svd(&z)?;
        cases.push((z, spec, factors));
    }
    let mut rows: Vec<BenchRow> = ks
        .iter()
        .map(|&k| BenchRow {
            k,
            t,
            fast: Vec::new(),
            dense: Vec::new(),
        })
        .collect();
    let mut sink = 0.0;
    for rep in 0..=reps {
        for ((_, spec, factors), row) in cases.iter().zip(rows.iter_mut()) {
            let start = Instant::now();
            for _ in 0..draws {
                sink += sample_gamma(factors, spec, &mut rng)?[0];
            }
            // The first pass only warms caches and is not recorded.
            if rep > 0 {
                row.fast.push(start.elapsed().as_secs_f64() / draws as f64);
            }
        }
    }
    if dense {
        let samplers: Vec<DenseSampler> = cases.iter().map(|(z, _, _)| DenseSampler::new(z)).collect();
        for _ in 0..reps {
            for ((sampler, (_, spec, _)), row) in samplers.iter().zip(&cases).zip(rows.iter_mut()) {
                let start = Instant::now();
                sink += sampler.sample(spec, &mut rng)?[0];
                row.dense.push(start.elapsed().as_secs_f64());
            }
        }
    }
    std::hint::black_box(sink);
    for row in &rows {
        log::info!(
            "K = {}: svd {:.3e} s/draw, dense {:.3e} s/draw",
            row.k,
            row.fast_median(),
            row.dense_median()
        );
    }
    Ok(rows)
}

/// CSV with medians, ratios to the smallest block and the raw times.
pub fn render_bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("method,k,t,repetitions,median_seconds,ratio_to_first,raw_seconds\n");
    for (method, pick) in [("svd", 0usize), ("dense", 1)] {
        let med = |r: &BenchRow| if pick == 0 { r.fast_median() } else { r.dense_median() };
        let raw = |r: &BenchRow| if pick == 0 { r.fast.clone() } else { r.dense.clone() };
        let Some(first) = rows.first() else { break };
        if raw(first).is_empty() {
            continue;
        }
        for r in rows {
            let times = raw(r);
            let joined: Vec<String> = times.iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(
                s,
                "{method},{},{},{},{:e},{},{}",
                r.k,
                r.t,
                times.len(),
                med(r),
                med(r) / med(first),
                joined.join(";")
            );
        }
    }
    s
}

pub fn cmd_bench_sampler(args: &BenchArgs) -> Result<()> {
    let rows = bench_sampler(
        &args.ks,
        args.t,
        args.repetitions,
        args.draws,
        !args.no_dense,
        args.seed,
    )?;
    fs::write(&args.out, render_bench_csv(&rows)).map_err(|e| Error::io(&args.out, e))?;
    if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
        log::info!(
            "svd time ratio K = {} / K = {}: {:.2}",
            last.k,
            first.k,
            last.fast_median() / first.fast_median()
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_subcommands() {
        let cli = Cli::try_parse_from([
            "ridgecast",
            "run",
            "--plan",
            "p",
            "--data",
            "d",
            "--out",
            "o",
            "--threads",
            "3",
            "--seed",
            "5",
        ])
        .unwrap();
        match cli.command {
            Command::Run(a) => {
                assert_eq!(a.threads, Some(3));
                assert_eq!(a.seed, Some(5));
                assert!(a.input.meta.is_none());
            }
            other => panic!("{other:?}"),
        }
        let b = Cli::try_parse_from(["ridgecast", "bench-sampler", "--ks", "10,20", "--out", "x"]).unwrap();
        match b.command {
            Command::BenchSampler(a) => assert_eq!(a.ks, [10, 20]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bench_small_ladder() {
        let rows = bench_sampler(&[20, 40], 10, 2, 5, true, 1).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.fast.len() == 2 && r.dense.len() == 2));
        let csv = render_bench_csv(&rows);
        assert_eq!(csv.lines().count(), 5);
        assert!(bench_sampler(&[5], 10, 1, 1, false, 0).is_err());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
