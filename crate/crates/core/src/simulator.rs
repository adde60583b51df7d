//! Ground-truth trajectories of switched autoregressive systems.
//!
//! Every random quantity at time `k` is drawn from a ChaCha stream positioned
//! at a fixed offset derived from `k`, so any slice of the trajectory's
//! randomness can be regenerated independently of the rest.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::accumulator::IoData;
use crate::error::{Error, Result};
use crate::moments::NoiseModel;
use crate::veronese::{ModelOrders, SubmodelSet};

/// How the active mode evolves. Mode indices are zero-based.
#[derive(Debug, Clone, PartialEq)]
pub enum SwitchingPolicy {
    /// Independent uniform choice at each step.
    IidUniform,
    /// Cycle through the modes, holding each for `dwell` steps.
    PeriodicDwell(usize),
    /// Given sequence, repeated cyclically if shorter than the run.
    Explicit(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputPolicy {
    IidUniform {
        lo: f64,
        hi: f64,
    },
    IidGaussian {
        std: f64,
    },
    /// Independent fair choice between two levels.
    PseudoRandomBinary {
        low: f64,
        high: f64,
    },
    /// Given sequence, repeated cyclically if shorter than the run.
    Explicit(Vec<f64>),
}

/// Measurement noise that can be sampled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSource {
    None,
    Gaussian {
        std: f64,
    },
    /// Uniform on `[-half_width, half_width]`.
    Uniform {
        half_width: f64,
    },
}

impl NoiseSource {
    pub fn gaussian_variance(variance: f64) -> Self {
        if variance > 0.0 {
            NoiseSource::Gaussian {
                std: variance.sqrt(),
            }
        } else {
            NoiseSource::None
        }
    }

    /// Moment description of this noise, covering orders up to `max_order`.
    pub fn model(&self, max_order: usize) -> NoiseModel {
        match *self {
            NoiseSource::None => NoiseModel::noiseless(),
            NoiseSource::Gaussian { std } => NoiseModel::gaussian(std),
            NoiseSource::Uniform { half_width } => NoiseModel::SymmetricEmpirical {
                even_moments: (1..=max_order.div_ceil(2))
                    .map(|j| half_width.powi(2 * j as i32) / (2 * j + 1) as f64)
                    .collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub submodels: SubmodelSet,
    pub switching: SwitchingPolicy,
    pub input: InputPolicy,
    pub noise: NoiseSource,
    /// Number of time steps `k = 0..N-1` after the initial conditions.
    pub n_samples: usize,
    pub seed: u64,
    /// `[x_{-1}, .., x_{-na}]`; zeros when empty.
    pub initial_outputs: Vec<f64>,
    /// `[u_{-1}, .., u_{-nc}]`; zeros when empty.
    pub initial_inputs: Vec<f64>,
    /// Largest tolerated `|x_k|`.
    pub guard: f64,
}

impl SimConfig {
    /// Uniform switching, standard normal inputs, zero initial conditions.
    pub fn new(submodels: SubmodelSet, noise: NoiseSource, n_samples: usize, seed: u64) -> Self {
        Self {
            submodels,
            switching: SwitchingPolicy::IidUniform,
            input: InputPolicy::IidGaussian { std: 1.0 },
            noise,
            n_samples,
            seed,
            initial_outputs: Vec::new(),
            initial_inputs: Vec::new(),
            guard: 1e9,
        }
    }
}

/// Simulated run on a common time index starting at `start = -max(na, nc)`.
///
/// `u`, `x`, `y` and `eta` cover `k = start..N-1`; `modes` covers `k = 0..N-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDataset {
    pub orders: ModelOrders,
    pub start: i64,
    pub u: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub eta: Vec<f64>,
    pub modes: Vec<usize>,
    pub gamma: f64,
}

impl SimulatedDataset {
    /// Noisy input/output view.
    pub fn io(&self) -> IoData<'_> {
        IoData::aligned(&self.y, &self.u, self.start)
    }

    /// Noise-free input/output view.
    pub fn clean_io(&self) -> IoData<'_> {
        IoData::aligned(&self.x, &self.u, self.start)
    }

    /// Number of windows (`N`).
    pub fn n_samples(&self) -> usize {
        self.modes.len()
    }
}

// Stream selectors for the per-purpose random sequences.
const STREAM_SWITCH: u64 = 1;
const STREAM_INPUT: u64 = 2;
const STREAM_NOISE: u64 = 3;
// Every sample consumes exactly two u64 words (four 32-bit words).
const WORDS_PER_SAMPLE: u128 = 4;

/// Counter-addressed uniform draws: sample `i` of a stream always comes from
/// the same position of the ChaCha keystream.
struct CounterRng {
    rng: ChaCha8Rng,
    next: u64,
}

impl CounterRng {
    fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, next: 0 }
    }

    /// Two uniforms in `[0, 1)` for sample `index`.
    fn pair(&mut self, index: u64) -> (f64, f64) {
        if index != self.next {
            self.rng.set_word_pos(index as u128 * WORDS_PER_SAMPLE);
        }
        self.next = index + 1;
        let a: f64 = self.rng.random();
        let b: f64 = self.rng.random();
        (a, b)
    }

    fn uniform(&mut self, index: u64) -> f64 {
        self.pair(index).0
    }

    /// Standard normal by Box-Muller.
    fn normal(&mut self, index: u64) -> f64 {
        let (a, b) = self.pair(index);
        let radius = (-2.0 * (1.0 - a).ln()).sqrt();
        radius * (std::f64::consts::TAU * b).cos()
    }
}

/// Noise sample for row `index` of a dataset generated with `seed`.
pub fn noise_sample(seed: u64, source: NoiseSource, index: u64) -> f64 {
    let mut rng = CounterRng::new(seed, STREAM_NOISE);
    draw_noise(&mut rng, source, index)
}

fn draw_noise(rng: &mut CounterRng, source: NoiseSource, index: u64) -> f64 {
    match source {
        NoiseSource::None => 0.0,
        NoiseSource::Gaussian { std } => std * rng.normal(index),
        NoiseSource::Uniform { half_width } => half_width * (2.0 * rng.uniform(index) - 1.0),
    }
}

/// Runs the switched recursion and adds measurement noise.
pub fn simulate(cfg: &SimConfig) -> Result<SimulatedDataset> {
    let orders = cfg.submodels.orders()?;
    let (n, na, nc) = (orders.n(), orders.na(), orders.nc());
    if cfg.n_samples == 0 {
        return Err(Error::InvalidConfig("n_samples must be >= 1".into()));
    }
    let check_prefix = |v: &[f64], len: usize, what: &str| -> Result<()> {
        if !v.is_empty() && v.len() != len {
            return Err(Error::InvalidConfig(format!(
                "{what} must have {len} entries, got {}",
                v.len()
            )));
        }
        Ok(())
    };
    check_prefix(&cfg.initial_outputs, na, "initial outputs")?;
    check_prefix(&cfg.initial_inputs, nc, "initial inputs")?;
    match &cfg.switching {
        SwitchingPolicy::PeriodicDwell(0) => {
            return Err(Error::InvalidConfig("dwell must be >= 1".into()))
        }
        SwitchingPolicy::Explicit(seq) if seq.is_empty() || seq.iter().any(|&m| m >= n) => {
            return Err(Error::InvalidConfig(format!(
                "explicit modes must be non-empty and below {n}"
            )))
        }
        _ => {}
    }
    match &cfg.input {
        InputPolicy::IidUniform { lo, hi } if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() => {
            return Err(Error::InvalidConfig(
                "input range must satisfy lo <= hi".into(),
            ))
        }
        InputPolicy::Explicit(seq) if seq.is_empty() || seq.iter().any(|v| !v.is_finite()) => {
            return Err(Error::InvalidConfig(
                "explicit input must be non-empty and finite".into(),
            ))
        }
        _ => {}
    }

    let prefix = na.max(nc);
    let total = prefix + cfg.n_samples;
    let mut u = vec![0.0; total];
    let mut x = vec![0.0; total];
    for j in 1..=na {
        if let Some(&v) = cfg.initial_outputs.get(j - 1) {
            x[prefix - j] = v;
        }
    }
    for j in 1..=nc {
        if let Some(&v) = cfg.initial_inputs.get(j - 1) {
            u[prefix - j] = v;
        }
    }

    let mut input_rng = CounterRng::new(cfg.seed, STREAM_INPUT);
    let mut switch_rng = CounterRng::new(cfg.seed, STREAM_SWITCH);
    for k in 0..cfg.n_samples {
        u[prefix + k] = match &cfg.input {
            InputPolicy::IidUniform { lo, hi } => lo + (hi - lo) * input_rng.uniform(k as u64),
            InputPolicy::IidGaussian { std } => std * input_rng.normal(k as u64),
            InputPolicy::PseudoRandomBinary { low, high } => {
                if input_rng.uniform(k as u64) < 0.5 {
                    *low
                } else {
                    *high
                }
            }
            InputPolicy::Explicit(seq) => seq[k % seq.len()],
        };
    }

    let models = cfg.submodels.models();
    let mut modes = Vec::with_capacity(cfg.n_samples);
    for k in 0..cfg.n_samples {
        let mode = match &cfg.switching {
            SwitchingPolicy::IidUniform => {
                ((switch_rng.uniform(k as u64) * n as f64) as usize).min(n - 1)
            }
            SwitchingPolicy::PeriodicDwell(dwell) => (k / dwell) % n,
            SwitchingPolicy::Explicit(seq) => seq[k % seq.len()],
        };
        modes.push(mode);
        let t = prefix + k;
        let m = &models[mode];
        let mut v = 0.0;
        for (j, a) in m.a.iter().enumerate() {
            v += a * x[t - j - 1];
        }
        for (j, c) in m.c.iter().enumerate() {
            v += c * u[t - j - 1];
        }
        if !(v.abs() <= cfg.guard) {
            return Err(Error::TrajectoryUnbounded { k, value: v.abs() });
        }
        x[t] = v;
    }

    let mut noise_rng = CounterRng::new(cfg.seed, STREAM_NOISE);
    let eta: Vec<f64> = (0..total)
        .map(|i| draw_noise(&mut noise_rng, cfg.noise, i as u64))
        .collect();
    let y: Vec<f64> = x.iter().zip(&eta).map(|(a, b)| a + b).collect();
    let gamma = noise_ratio(&eta, &y)?;
    Ok(SimulatedDataset {
        orders,
        start: -(prefix as i64),
        u,
        x,
        y,
        eta,
        modes,
        gamma,
    })
}

/// `max|η| / max|y|`.
pub fn noise_ratio(eta: &[f64], y: &[f64]) -> Result<f64> {
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let y_max = max_abs(y);
    if !(y_max > 0.0) {
        return Err(Error::AllZeroOutput);
    }
    Ok(max_abs(eta) / y_max)
}
