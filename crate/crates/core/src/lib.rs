//! Identification of switched autoregressive models from large datasets with
//! noisy outputs.
//!
//! The decoupling polynomial `∏_i b_i · r_k` vanishes for every sample,
//! whichever mode is active. Its coefficient vector is the null vector of the
//! averaged Veronese outer-product matrix, which is estimated from noisy
//! outputs by replacing every power `x^h` with a moment-corrected polynomial of
//! the measurement. Unknown noise scale is found by a line search on the
//! smallest singular value.

// `!(x > 0.0)` style guards are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accumulator;
pub mod cli;
pub mod error;
pub mod gpca;
pub mod moments;
pub mod pipeline;
pub mod simulator;
pub mod solver;
pub mod veronese;

pub use accumulator::{accumulate, build, CorrectedMatrix, IoData, MomentStats, RegressorWindow};
pub use error::{Error, Result};
pub use gpca::{assign_modes, factor, CandidatePool, FactorizationResult, HybridPolynomial};
pub use moments::{CorrectionPolynomial, NoiseModel};
pub use simulator::{
    simulate, InputPolicy, NoiseSource, SimConfig, SimulatedDataset, SwitchingPolicy,
};
pub use solver::{
    coefficient_error, identify_known_noise, min_singular_pair, scan_variance,
    IdentificationResult, ScaleFamily, ScanOptions, ScanResult,
};
pub use veronese::{ExponentBasis, HybridCoefficients, ModelOrders, Submodel, SubmodelSet};
