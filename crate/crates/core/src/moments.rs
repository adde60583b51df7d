//! Noise moments and bias-correcting polynomials.
//!
//! For a measurement `y = x + η` with `η` independent of the deterministic
//! `x`, the monic polynomial `q_h` built by
//!
//! ```text
//! q_0(y) = 1
//! q_h(y) = y^h - Σ_{d=1..h} C(h, d) m_d q_{h-d}(y)
//! ```
//!
//! satisfies `E[q_h(x + η)] = x^h`. For zero-mean Gaussian noise these are
//! the scaled probabilists' Hermite polynomials.

use crate::error::{Error, Result};
use crate::veronese::binomial;

/// Distribution of the additive measurement noise, described by its moments.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    /// Zero-mean normal with standard deviation `std`.
    GaussianZeroMean { std: f64 },
    /// Symmetric law given by `[m_2, m_4, m_6, ..]`; odd moments are zero.
    SymmetricEmpirical { even_moments: Vec<f64> },
    /// Arbitrary law given by `[m_1, m_2, m_3, ..]`.
    GeneralEmpirical { moments: Vec<f64> },
}

fn double_factorial(n: u64) -> f64 {
    let mut acc = 1.0;
    let mut k = n;
    while k > 1 {
        acc *= k as f64;
        k -= 2;
    }
    acc
}

impl NoiseModel {
    pub fn gaussian(std: f64) -> Self {
        NoiseModel::GaussianZeroMean { std }
    }

    pub fn gaussian_variance(variance: f64) -> Self {
        NoiseModel::GaussianZeroMean {
            std: variance.max(0.0).sqrt(),
        }
    }

    /// No noise: every moment of order `>= 1` is zero.
    pub fn noiseless() -> Self {
        NoiseModel::GaussianZeroMean { std: 0.0 }
    }

    /// Highest order for which [`NoiseModel::moment`] succeeds.
    pub fn max_order(&self) -> Option<usize> {
        match self {
            NoiseModel::GaussianZeroMean { .. } => None,
            // m_{2j+1} is zero for j < len, so the last available is m_{2 len + 1}.
            NoiseModel::SymmetricEmpirical { even_moments } => Some(2 * even_moments.len() + 1),
            NoiseModel::GeneralEmpirical { moments } => Some(moments.len()),
        }
    }

    /// `m_d = E[η^d]`, with `m_0 = 1`.
    pub fn moment(&self, d: usize) -> Result<f64> {
        if d == 0 {
            return Ok(1.0);
        }
        match self {
            NoiseModel::GaussianZeroMean { std } => Ok(if d % 2 == 1 {
                0.0
            } else {
                std.powi(d as i32) * double_factorial(d as u64 - 1)
            }),
            NoiseModel::SymmetricEmpirical { even_moments } => {
                if d > 2 * even_moments.len() + 1 {
                    Err(Error::OrderUnavailable { order: d })
                } else if d % 2 == 1 {
                    Ok(0.0)
                } else {
                    Ok(even_moments[d / 2 - 1])
                }
            }
            NoiseModel::GeneralEmpirical { moments } => moments
                .get(d - 1)
                .copied()
                .ok_or(Error::OrderUnavailable { order: d }),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        !matches!(self, NoiseModel::GeneralEmpirical { .. })
    }

    /// `q_h` for this noise law.
    pub fn correction_polynomial(&self, h: usize) -> Result<CorrectionPolynomial> {
        Ok(self
            .correction_table(h)?
            .pop()
            .expect("table has h + 1 entries"))
    }

    /// `[q_0, q_1, .., q_max_h]`, computed once by the moment recursion.
    pub fn correction_table(&self, max_h: usize) -> Result<Vec<CorrectionPolynomial>> {
        let moments = (0..=max_h)
            .map(|d| self.moment(d))
            .collect::<Result<Vec<_>>>()?;
        let mut table: Vec<CorrectionPolynomial> = Vec::with_capacity(max_h + 1);
        for h in 0..=max_h {
            let mut coeffs = vec![0.0; h + 1];
            coeffs[h] = 1.0;
            for d in 1..=h {
                let weight = binomial(h as u64, d as u64) as f64 * moments[d];
                if weight == 0.0 {
                    continue;
                }
                for (j, q) in table[h - d].coeffs.iter().enumerate() {
                    coeffs[j] -= weight * q;
                }
            }
            table.push(CorrectionPolynomial { coeffs });
        }
        Ok(table)
    }

    /// `q_h(y)`, the unbiased single-sample estimate of `x^h`.
    pub fn corrected_power(&self, y: f64, h: usize) -> Result<f64> {
        Ok(self.correction_polynomial(h)?.eval(y))
    }
}

/// Monic polynomial `q_h(y) = Σ_j coeffs[j] y^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionPolynomial {
    coeffs: Vec<f64>,
}

impl CorrectionPolynomial {
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * y + c)
    }
}
