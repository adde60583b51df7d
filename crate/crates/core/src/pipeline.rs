//! End-to-end identification: accumulate, solve, factor.

use std::time::Instant;

use crate::accumulator::{accumulate, IoData, MomentStats};
use crate::error::Result;
use crate::gpca::{CandidatePool, FactorizationResult, HybridPolynomial};
use crate::moments::NoiseModel;
use crate::solver::{
    ensure_enough_windows, identify_matrix, scan_from_stats, IdentificationResult, ScaleFamily,
    ScanOptions, ScanResult,
};
use crate::veronese::ModelOrders;

/// What is known about the measurement noise.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    Known(NoiseModel),
    Scan {
        family: ScaleFamily,
        options: ScanOptions,
    },
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    pub accumulate: f64,
    pub assemble: f64,
    pub svd: f64,
    pub scan: f64,
    pub factor: f64,
}

impl PhaseTimings {
    pub fn total(&self) -> f64 {
        self.accumulate + self.assemble + self.svd + self.scan + self.factor
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Identification {
    pub result: IdentificationResult,
    pub scan: Option<ScanResult>,
    pub timings: PhaseTimings,
}

/// Runs the known-noise or scanning solver on accumulated statistics.
pub fn solve(stats: &MomentStats, spec: &NoiseSpec) -> Result<Identification> {
    let mut timings = PhaseTimings::default();
    match spec {
        NoiseSpec::Known(noise) => {
            ensure_enough_windows(stats)?;
            let t = Instant::now();
            let m = stats.assemble(noise)?;
            timings.assemble = t.elapsed().as_secs_f64();
            let t = Instant::now();
            let result = identify_matrix(&m);
            timings.svd = t.elapsed().as_secs_f64();
            let result = result?;
            Ok(Identification {
                result,
                scan: None,
                timings,
            })
        }
        NoiseSpec::Scan { family, options } => {
            let t = Instant::now();
            let scan = scan_from_stats(stats, family, options)?;
            timings.scan = t.elapsed().as_secs_f64();
            Ok(Identification {
                result: scan.result.clone(),
                scan: Some(scan),
                timings,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub orders: ModelOrders,
    pub identification: Identification,
    pub factorization: FactorizationResult,
}

impl PipelineReport {
    /// Noise scale used for the reported coefficients: the scan estimate, or
    /// `None` when the noise law was given.
    pub fn noise_scale(&self) -> Option<f64> {
        self.identification.scan.as_ref().map(|s| s.s_star)
    }
}

/// Full identification of an in-memory dataset. Candidate regressors for the
/// factorization come from a bounded pool, exactly as in the streaming CLI.
pub fn run(
    data: IoData<'_>,
    orders: ModelOrders,
    spec: &NoiseSpec,
    threads: usize,
    pool_capacity: usize,
) -> Result<PipelineReport> {
    let t = Instant::now();
    let stats = accumulate(data, orders, threads)?;
    let accumulate_time = t.elapsed().as_secs_f64();
    let mut identification = solve(&stats, spec)?;
    identification.timings.accumulate = accumulate_time;

    let t = Instant::now();
    let poly = HybridPolynomial::new(&identification.result.coefficients, orders)?;
    let mut pool = CandidatePool::new(poly, pool_capacity);
    for w in data.windows(orders)? {
        pool.offer(w.regressor());
    }
    let factorization = pool.factor()?;
    identification.timings.factor = t.elapsed().as_secs_f64();
    Ok(PipelineReport {
        orders,
        identification,
        factorization,
    })
}
