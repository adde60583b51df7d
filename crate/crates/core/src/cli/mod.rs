//! Command-line front end.
//!
//! Commands: `simulate`, `identify`, `scan`, `sweep` and `assign`. Data and
//! reports are CSV; errors exit with a code from [`Error::exit_code`].

pub mod dataset;
pub mod report;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::accumulator::{BlockAccumulator, MomentStats, ACCUMULATION_BLOCK};
use crate::error::{Error, Result};
use crate::gpca::{assign_regressor, best_permutation_accuracy, CandidatePool, HybridPolynomial};
use crate::moments::NoiseModel;
use crate::pipeline::{solve, NoiseSpec};
use crate::simulator::{simulate, InputPolicy, NoiseSource, SimConfig, SwitchingPolicy};
use crate::solver::{coefficient_error, ScaleFamily, ScanOptions};
use crate::veronese::{ExponentBasis, ModelOrders, Submodel, SubmodelSet};

use dataset::{for_each_window, write_dataset};
use report::Report;

#[derive(Debug, Parser)]
#[command(
    name = "sarid",
    version,
    about = "Identify switched autoregressive models from noisy data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a switched system and write a dataset CSV.
    Simulate(SimulateArgs),
    /// Identify hybrid coefficients and submodels from a dataset.
    Identify(IdentifyArgs),
    /// Estimate the noise scale and coefficients jointly.
    Scan(ScanArgs),
    /// Coefficient error against N and noise level over many seeds.
    Sweep(SweepArgs),
    /// Assign each sample to its closest identified submodel.
    Assign(AssignArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SystemArgs {
    /// Submodel as "a1,..,a_na;c1,..,c_nc"; repeat once per mode.
    #[arg(long = "submodel", value_name = "A;C")]
    pub submodels: Vec<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub a1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub b1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub a2: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub b2: Option<f64>,
    /// gaussian[:std], uniform[:lo,hi] or binary[:low,high].
    #[arg(long, default_value = "gaussian:1", allow_hyphen_values = true)]
    pub input: String,
    /// iid or dwell:K.
    #[arg(long, default_value = "iid")]
    pub switching: String,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Measurement noise variance.
    #[arg(long, default_value_t = 0.0)]
    pub s2: f64,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ScanFlags {
    /// Largest noise standard deviation searched.
    #[arg(long)]
    pub smax: Option<f64>,
    #[arg(long, default_value_t = 64)]
    pub grid: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub eps_rel: f64,
}

#[derive(Debug, Clone, Args)]
pub struct IdentifyArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Model orders as "n,na,nc".
    #[arg(long)]
    pub orders: ModelOrders,
    /// Known Gaussian noise variance.
    #[arg(long, conflicts_with = "scan")]
    pub s2: Option<f64>,
    /// Search the noise scale instead of taking it as known.
    #[arg(long)]
    pub scan: bool,
    #[command(flatten)]
    pub scan_flags: ScanFlags,
    /// Candidate regressors kept for the factorization.
    #[arg(long, default_value_t = CandidatePool::DEFAULT_CAPACITY)]
    pub pool: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Plot-ready `s,s2,sigma_min` file for scanning runs.
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ScanArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub orders: ModelOrders,
    #[command(flatten)]
    pub scan_flags: ScanFlags,
    #[arg(long, default_value_t = CandidatePool::DEFAULT_CAPACITY)]
    pub pool: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Noise variances, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub s2: Vec<f64>,
    /// Sample counts, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "1000,10000,100000,1000000"
    )]
    pub n: Vec<usize>,
    /// Number of seeds per (s2, N) cell.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AssignArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Report written by `identify` or `scan`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("sarid: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Identify(a) => cmd_identify(&a),
        Command::Scan(a) => cmd_identify(&IdentifyArgs {
            data: a.data,
            orders: a.orders,
            s2: None,
            scan: true,
            scan_flags: a.scan_flags,
            pool: a.pool,
            out: a.out,
            curve: a.curve,
        }),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Assign(a) => cmd_assign(&a),
    }
}

/// Thread budget: available parallelism, capped by `SARID_THREADS`.
pub fn thread_budget() -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var("SARID_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
    {
        Some(cap) => cap.clamp(1, available.max(1)),
        None => available,
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn parse_list(text: &str) -> Result<Vec<f64>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad number '{v}'")))
        })
        .collect()
}

impl FromStr for Submodel {
    type Err = Error;

    /// `"a1,..,a_na;c1,..,c_nc"`
    fn from_str(s: &str) -> Result<Self> {
        let (a, c) = s
            .split_once(';')
            .ok_or_else(|| Error::InvalidConfig(format!("submodel '{s}' needs 'a..;c..'")))?;
        Ok(Submodel::new(parse_list(a)?, parse_list(c)?))
    }
}

impl SystemArgs {
    pub fn submodel_set(&self) -> Result<SubmodelSet> {
        let pairs = [self.a1, self.b1, self.a2, self.b2];
        let models: Vec<Submodel> = if !self.submodels.is_empty() {
            if pairs.iter().any(Option::is_some) {
                return Err(Error::InvalidConfig(
                    "--submodel cannot be combined with --a1/--b1/--a2/--b2".into(),
                ));
            }
            self.submodels
                .iter()
                .map(|s| s.parse())
                .collect::<Result<_>>()?
        } else if pairs.iter().all(Option::is_none) {
            vec![
                Submodel::new(vec![0.3], vec![1.0]),
                Submodel::new(vec![-0.5], vec![-1.0]),
            ]
        } else if let [Some(a1), Some(b1), Some(a2), Some(b2)] = pairs {
            vec![
                Submodel::new(vec![a1], vec![b1]),
                Submodel::new(vec![a2], vec![b2]),
            ]
        } else {
            return Err(Error::InvalidConfig(
                "--a1, --b1, --a2 and --b2 must be given together".into(),
            ));
        };
        let first = models
            .first()
            .ok_or_else(|| Error::InvalidConfig("no submodels".into()))?;
        let orders = ModelOrders::new(models.len(), first.a.len(), first.c.len())?;
        SubmodelSet::new(models, orders)
    }

    pub fn input_policy(&self) -> Result<InputPolicy> {
        let (kind, params) = self.input.split_once(':').unwrap_or((&self.input, ""));
        let p = parse_list(params)?;
        let bad = || Error::InvalidConfig(format!("bad --input '{}'", self.input));
        Ok(match (kind, p.as_slice()) {
            ("gaussian", []) => InputPolicy::IidGaussian { std: 1.0 },
            ("gaussian", [std]) => InputPolicy::IidGaussian { std: *std },
            ("uniform", []) => InputPolicy::IidUniform { lo: -1.0, hi: 1.0 },
            ("uniform", [lo, hi]) => InputPolicy::IidUniform { lo: *lo, hi: *hi },
            ("binary", []) => InputPolicy::PseudoRandomBinary {
                low: -1.0,
                high: 1.0,
            },
            ("binary", [low, high]) => InputPolicy::PseudoRandomBinary {
                low: *low,
                high: *high,
            },
            _ => return Err(bad()),
        })
    }

    pub fn switching_policy(&self) -> Result<SwitchingPolicy> {
        match self.switching.split_once(':') {
            None if self.switching == "iid" => Ok(SwitchingPolicy::IidUniform),
            Some(("dwell", k)) => k
                .trim()
                .parse()
                .map(SwitchingPolicy::PeriodicDwell)
                .map_err(|_| Error::InvalidConfig(format!("bad dwell '{k}'"))),
            _ => Err(Error::InvalidConfig(format!(
                "bad --switching '{}'",
                self.switching
            ))),
        }
    }

    pub fn config(&self, s2: f64, n: usize, seed: u64) -> Result<SimConfig> {
        if !(s2 >= 0.0) || !s2.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "noise variance {s2} must be >= 0"
            )));
        }
        Ok(SimConfig {
            switching: self.switching_policy()?,
            input: self.input_policy()?,
            ..SimConfig::new(
                self.submodel_set()?,
                NoiseSource::gaussian_variance(s2),
                n,
                seed,
            )
        })
    }
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let ds = simulate(&a.system.config(a.s2, a.n, a.seed)?)?;
    let mut out = output(a.out.as_deref())?;
    write_dataset(&mut out, &ds)?;
    out.flush()?;
    eprintln!("gamma {}", ds.gamma);
    Ok(())
}

/// First pass over a dataset file: statistics of every window.
pub fn accumulate_file(path: &Path, orders: ModelOrders, threads: usize) -> Result<MomentStats> {
    let s = orders.regressor_dim();
    let capacity = threads.max(1) * ACCUMULATION_BLOCK * s;
    let mut acc = BlockAccumulator::new(orders);
    let mut batch = Vec::with_capacity(capacity);
    for_each_window(path, orders, |_, r, _| {
        batch.extend_from_slice(r);
        if batch.len() == capacity {
            acc.push_many(&batch, threads);
            batch.clear();
        }
    })?;
    acc.push_many(&batch, threads);
    let stats = acc.finish();
    if stats.count() == 0 {
        return Err(Error::SeriesTooShort(format!(
            "{} holds no complete window for orders {orders}",
            path.display()
        )));
    }
    Ok(stats)
}

fn scan_spec(flags: &ScanFlags) -> Result<NoiseSpec> {
    let s_max = flags
        .smax
        .ok_or_else(|| Error::InvalidConfig("--scan needs --smax".into()))?;
    Ok(NoiseSpec::Scan {
        family: ScaleFamily::Gaussian,
        options: ScanOptions {
            grid_points: flags.grid,
            epsilon_rel: flags.eps_rel,
            ..ScanOptions::new(s_max)
        },
    })
}

/// Streams the dataset twice: once for the statistics, once to fill the
/// candidate pool for the factorization.
pub fn identify_file(
    path: &Path,
    orders: ModelOrders,
    spec: &NoiseSpec,
    pool_capacity: usize,
    threads: usize,
) -> Result<(
    crate::pipeline::Identification,
    crate::gpca::FactorizationResult,
)> {
    let t = Instant::now();
    let stats = accumulate_file(path, orders, threads)?;
    let accumulate_time = t.elapsed().as_secs_f64();
    let mut ident = solve(&stats, spec)?;
    ident.timings.accumulate = accumulate_time;

    let t = Instant::now();
    let poly = HybridPolynomial::new(&ident.result.coefficients, orders)?;
    let mut pool = CandidatePool::new(poly, pool_capacity);
    for_each_window(path, orders, |_, r, _| pool.offer(r))?;
    let factorization = pool.factor()?;
    ident.timings.factor = t.elapsed().as_secs_f64();
    Ok((ident, factorization))
}

fn cmd_identify(a: &IdentifyArgs) -> Result<()> {
    let (spec, known_s2) = match (a.scan, a.s2) {
        (true, _) => (scan_spec(&a.scan_flags)?, None),
        (false, Some(s2)) if s2 >= 0.0 && s2.is_finite() => (
            NoiseSpec::Known(NoiseModel::gaussian_variance(s2)),
            Some(s2),
        ),
        (false, Some(s2)) => {
            return Err(Error::InvalidConfig(format!(
                "noise variance {s2} must be >= 0"
            )))
        }
        (false, None) => {
            return Err(Error::InvalidConfig(
                "give either --s2 or --scan --smax".into(),
            ))
        }
    };
    let (ident, factorization) = identify_file(&a.data, a.orders, &spec, a.pool, thread_budget())?;
    let report = Report::identification(a.orders, &ident, &factorization, known_s2);
    let mut out = output(a.out.as_deref())?;
    report.write(&mut out)?;
    out.flush()?;
    if let (Some(path), Some(scan)) = (&a.curve, &ident.scan) {
        let mut w = csv::Writer::from_writer(output(Some(path))?);
        w.write_record(["s", "s2", "sigma_min"])?;
        for (s, sigma) in &scan.curve {
            w.write_record([s.to_string(), (s * s).to_string(), sigma.to_string()])?;
        }
        w.flush()?;
    }
    if let Some(scan) = &ident.scan {
        if !scan.below_threshold {
            eprintln!(
                "warning: no scale met the singular-value threshold; reporting the global minimum"
            );
        }
    }
    Ok(())
}

/// One sweep cell: `‖c - ĉ‖₂` and identification time, or the failure.
pub fn sweep_run(
    system: &SystemArgs,
    s2: f64,
    n: usize,
    seed: u64,
    threads: usize,
) -> Result<(f64, f64)> {
    let cfg = system.config(s2, n, seed)?;
    let orders = cfg.submodels.orders()?;
    let truth = cfg
        .submodels
        .hybrid_coefficients(&ExponentBasis::new(orders))?;
    let ds = simulate(&cfg)?;
    let t = Instant::now();
    let stats = crate::accumulator::accumulate(ds.io(), orders, threads)?;
    let ident = solve(&stats, &NoiseSpec::Known(NoiseModel::gaussian_variance(s2)))?;
    let elapsed = t.elapsed().as_secs_f64();
    Ok((
        coefficient_error(truth.as_slice(), ident.result.coefficients.as_slice())?,
        elapsed,
    ))
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    a.system.submodel_set()?;
    let threads = thread_budget();
    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    w.write_record(["s2", "n", "seed", "error", "runtime_s"])?;
    for &s2 in &a.s2 {
        for &n in &a.n {
            for seed in a.seed..a.seed + a.seeds {
                match sweep_run(&a.system, s2, n, seed, threads) {
                    Ok((err, time)) => w.write_record([
                        s2.to_string(),
                        n.to_string(),
                        seed.to_string(),
                        err.to_string(),
                        time.to_string(),
                    ])?,
                    Err(e @ Error::InvalidConfig(_)) => return Err(e),
                    Err(e) => eprintln!("s2={s2} n={n} seed={seed}: {e}"),
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_assign(a: &AssignArgs) -> Result<()> {
    let file =
        File::open(&a.model).map_err(|e| Error::Io(format!("{}: {e}", a.model.display())))?;
    let set = Report::read(io::BufReader::new(file))?.submodels()?;
    let orders = set.orders()?;
    let normals = set.normals();
    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    w.write_record(["k", "mode", "residual", "ambiguous"])?;
    let mut assigned = Vec::new();
    let mut truth = Vec::new();
    let mut labelled = true;
    let mut write_err = None;
    let has_modes = for_each_window(&a.data, orders, |k, r, mode| {
        let m = assign_regressor(&normals, r);
        match mode {
            Some(t) if !m.ambiguous => {
                assigned.push(m.mode);
                truth.push(t);
            }
            Some(_) => {}
            None => labelled = false,
        }
        if write_err.is_none() {
            let record = [
                k.to_string(),
                (m.mode + 1).to_string(),
                m.residual.to_string(),
                u8::from(m.ambiguous).to_string(),
            ];
            if let Err(e) = w.write_record(record) {
                write_err = Some(e);
            }
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    w.flush()?;
    if has_modes && labelled && !truth.is_empty() {
        // Windows that fit several submodels equally carry no mode information.
        eprintln!(
            "accuracy {}",
            best_permutation_accuracy(&assigned, &truth, orders.n())
        );
    }
    Ok(())
}
