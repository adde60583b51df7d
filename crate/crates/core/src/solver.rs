//! Null-vector extraction and the noise-level line search.

use nalgebra::{DMatrix, DVector};

use crate::accumulator::{accumulate, CorrectedMatrix, IoData, MomentStats};
use crate::error::{Error, Result};
use crate::moments::NoiseModel;
use crate::veronese::{HybridCoefficients, ModelOrders};

#[derive(Debug, Clone, PartialEq)]
pub struct SingularPair {
    pub sigma_min: f64,
    /// Unit-norm singular vector of `sigma_min`, largest-magnitude entry positive.
    pub vector: DVector<f64>,
    pub sigma_max: f64,
}

/// Smallest singular value of `m` with its singular vector, plus the largest
/// singular value. Among tied minima the last one in decomposition order wins.
pub fn min_singular_pair(m: &DMatrix<f64>) -> Result<SingularPair> {
    if m.is_empty() || m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteMatrix);
    }
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let sv = &svd.singular_values;
    let mut idx = 0;
    for i in 1..sv.len() {
        if sv[i] <= sv[idx] {
            idx = i;
        }
    }
    let sigma_max = sv.iter().fold(0.0f64, |a, &b| a.max(b));
    let mut vector: DVector<f64> = v_t.row(idx).transpose();
    vector /= vector.norm();
    let pivot = vector.iamax();
    if vector[pivot] < 0.0 {
        vector.neg_mut();
    }
    Ok(SingularPair {
        sigma_min: sv[idx],
        vector,
        sigma_max,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationResult {
    pub coefficients: HybridCoefficients,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub n_samples: u64,
}

/// Minimum singular pair of an assembled matrix, normalized to leading one.
pub fn identify_matrix(m: &CorrectedMatrix) -> Result<IdentificationResult> {
    let pair = min_singular_pair(&m.matrix)?;
    Ok(IdentificationResult {
        coefficients: HybridCoefficients::normalize(pair.vector.as_slice())?,
        sigma_min: pair.sigma_min,
        sigma_max: pair.sigma_max,
        n_samples: m.n_samples,
    })
}

/// Rejects statistics with fewer windows than embedding dimensions.
pub fn ensure_enough_windows(stats: &MomentStats) -> Result<()> {
    let l = stats.orders().veronese_dim() as u64;
    if stats.count() < l {
        return Err(Error::SeriesTooShort(format!(
            "{} windows available, at least {l} required",
            stats.count()
        )));
    }
    Ok(())
}

/// Identification with a fully known noise law from precomputed statistics.
pub fn identify_from_stats(
    stats: &MomentStats,
    noise: &NoiseModel,
) -> Result<IdentificationResult> {
    ensure_enough_windows(stats)?;
    identify_matrix(&stats.assemble(noise)?)
}

/// Identification with a fully known noise law.
pub fn identify_known_noise(
    data: IoData<'_>,
    orders: ModelOrders,
    noise: &NoiseModel,
) -> Result<IdentificationResult> {
    identify_from_stats(&accumulate(data, orders, 1)?, noise)
}

/// One-parameter noise family indexed by a scale `s >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum ScaleFamily {
    /// Zero-mean normal with standard deviation `s`.
    Gaussian,
    /// `m_{2j}(s) = s^{2j} · unit[j - 1]` for a symmetric law with unit scale.
    ScaledSymmetric { unit_even_moments: Vec<f64> },
}

impl ScaleFamily {
    pub fn model(&self, s: f64) -> NoiseModel {
        match self {
            ScaleFamily::Gaussian => NoiseModel::gaussian(s),
            ScaleFamily::ScaledSymmetric { unit_even_moments } => NoiseModel::SymmetricEmpirical {
                even_moments: unit_even_moments
                    .iter()
                    .enumerate()
                    .map(|(j, m)| m * s.powi(2 * (j as i32 + 1)))
                    .collect(),
            },
        }
    }

    /// Variance of the law at scale `s`.
    pub fn variance(&self, s: f64) -> f64 {
        match self {
            ScaleFamily::Gaussian => s * s,
            ScaleFamily::ScaledSymmetric { unit_even_moments } => {
                s * s * unit_even_moments.first().copied().unwrap_or(0.0)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    pub s_max: f64,
    pub grid_points: usize,
    /// Threshold relative to `sigma_max`.
    pub epsilon_rel: f64,
    /// Final bracket width of the golden-section refinement, relative to `s_max`.
    pub refine_rel_width: f64,
}

impl ScanOptions {
    pub fn new(s_max: f64) -> Self {
        Self {
            s_max,
            ..Self::default()
        }
    }
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            s_max: 1.0,
            grid_points: 64,
            epsilon_rel: 1e-3,
            refine_rel_width: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub s_star: f64,
    pub result: IdentificationResult,
    /// `(s, sigma_min)` for every evaluated point, increasing in `s`.
    pub curve: Vec<(f64, f64)>,
    pub threshold: f64,
    /// False when no local minimum reached the threshold and the global
    /// minimizer was returned instead.
    pub below_threshold: bool,
}

/// Golden-section search for a minimum of `f` on `[a, b]`, stopping once the
/// bracket is narrower than `tol`. Returns every evaluated `(x, f(x))`.
pub fn golden_section<F>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Result<Vec<(f64, f64)>>
where
    F: FnMut(f64) -> Result<f64>,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut seen = Vec::new();
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    seen.push((x1, f1));
    seen.push((x2, f2));
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1)?;
            seen.push((x1, f1));
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2)?;
            seen.push((x2, f2));
        }
    }
    Ok(seen)
}

fn argmin(points: &[(f64, f64)]) -> (f64, f64) {
    points
        .iter()
        .copied()
        .fold((f64::NAN, f64::INFINITY), |best, p| {
            if p.1 < best.1 {
                p
            } else {
                best
            }
        })
}

/// Line search over the noise scale driven by an arbitrary evaluator
/// `s -> M̂_N(s)`.
///
/// The grid is scanned for local minima (endpoints included), each is refined
/// by golden-section search inside its neighbouring grid cells, and the
/// smallest `s` whose refined `sigma_min` is below
/// `epsilon_rel * sigma_max(M̂_N(s))` is selected.
pub fn scan_with<F>(mut evaluate: F, opts: &ScanOptions) -> Result<ScanResult>
where
    F: FnMut(f64) -> Result<CorrectedMatrix>,
{
    if !(opts.s_max > 0.0) || opts.grid_points < 8 {
        return Err(Error::InvalidConfig(format!(
            "scan needs s_max > 0 and at least 8 grid points (got {}, {})",
            opts.s_max, opts.grid_points
        )));
    }
    let mut sigma =
        |s: f64| -> Result<f64> { Ok(min_singular_pair(&evaluate(s)?.matrix)?.sigma_min) };

    let last = opts.grid_points - 1;
    let grid: Vec<f64> = (0..opts.grid_points)
        .map(|i| opts.s_max * i as f64 / last as f64)
        .collect();
    let values = grid.iter().map(|&s| sigma(s)).collect::<Result<Vec<_>>>()?;
    let mut curve: Vec<(f64, f64)> = grid.iter().copied().zip(values.iter().copied()).collect();

    let tol = opts.refine_rel_width * opts.s_max;
    let mut candidates = Vec::new();
    for i in 0..=last {
        let left = if i == 0 { f64::INFINITY } else { values[i - 1] };
        let right = if i == last {
            f64::INFINITY
        } else {
            values[i + 1]
        };
        if values[i] <= left && values[i] <= right {
            let lo = grid[i.saturating_sub(1)];
            let hi = grid[(i + 1).min(last)];
            let mut probes = golden_section(&mut sigma, lo, hi, tol)?;
            probes.push((grid[i], values[i]));
            curve.extend_from_slice(&probes);
            candidates.push(argmin(&probes));
        }
    }
    curve.sort_by(|a, b| a.0.total_cmp(&b.0));
    curve.dedup_by(|a, b| a.0 == b.0);

    let mut chosen = None;
    for &(s, value) in &candidates {
        let m = evaluate(s)?;
        let pair = min_singular_pair(&m.matrix)?;
        let threshold = opts.epsilon_rel * pair.sigma_max;
        if value <= threshold {
            chosen = Some((s, m, threshold, true));
            break;
        }
    }
    let (s_star, m, threshold, below_threshold) = match chosen {
        Some(c) => c,
        None => {
            let (s, _) = argmin(&candidates);
            let m = evaluate(s)?;
            let threshold = opts.epsilon_rel * min_singular_pair(&m.matrix)?.sigma_max;
            (s, m, threshold, false)
        }
    };
    Ok(ScanResult {
        s_star,
        result: identify_matrix(&m)?,
        curve,
        threshold,
        below_threshold,
    })
}

/// Joint identification and noise-scale estimation from cached statistics.
pub fn scan_from_stats(
    stats: &MomentStats,
    family: &ScaleFamily,
    opts: &ScanOptions,
) -> Result<ScanResult> {
    ensure_enough_windows(stats)?;
    scan_with(|s| stats.assemble(&family.model(s)), opts)
}

pub fn scan_variance(
    data: IoData<'_>,
    orders: ModelOrders,
    family: &ScaleFamily,
    opts: &ScanOptions,
) -> Result<ScanResult> {
    scan_from_stats(&accumulate(data, orders, 1)?, family, opts)
}

/// `‖c_true - c_est‖_2`.
pub fn coefficient_error(c_true: &[f64], c_est: &[f64]) -> Result<f64> {
    if c_true.len() != c_est.len() {
        return Err(Error::DimensionMismatch {
            expected: c_true.len(),
            got: c_est.len(),
        });
    }
    Ok(c_true
        .iter()
        .zip(c_est)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_diagonal() {
        let p = min_singular_pair(&DMatrix::identity(3, 3)).unwrap();
        assert!((p.sigma_min - 1.0).abs() < 1e-15);
        assert!((p.vector.norm() - 1.0).abs() < 1e-15);

        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 0.0]));
        let p = min_singular_pair(&d).unwrap();
        assert_eq!(p.sigma_min, 0.0);
        assert!((p.sigma_max - 3.0).abs() < 1e-15);
        assert!((p.vector[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn non_finite_rejected() {
        let mut m = DMatrix::identity(2, 2);
        m[(0, 1)] = f64::NAN;
        assert_eq!(min_singular_pair(&m), Err(Error::NonFiniteMatrix));
    }

    #[test]
    fn indefinite_matrix_uses_absolute_eigenvalues() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![-4.0, 0.5, 2.0]));
        let p = min_singular_pair(&d).unwrap();
        assert!((p.sigma_min - 0.5).abs() < 1e-15);
        assert!((p.sigma_max - 4.0).abs() < 1e-15);
        assert!((p.vector[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn perturbed_rank_deficient_matrix() {
        // M = P + rho * c c^T where P is PSD with null vector c.
        let c = DVector::from_vec(vec![0.3, -0.5, 0.2, 0.7]).normalize();
        let proj = DMatrix::identity(4, 4) - &c * c.transpose();
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[
                2.0, 0.1, 0.0, 0.3, 0.1, 1.5, 0.2, 0.0, 0.0, 0.2, 1.0, 0.1, 0.3, 0.0, 0.1, 3.0,
            ],
        );
        let base = &proj * (&a * a.transpose()) * &proj;
        for rho in [1e-3, 1e-6, 1e-9] {
            let m = &base + (&c * c.transpose()) * rho;
            let p = min_singular_pair(&m).unwrap();
            let cos = p.vector.dot(&c).abs();
            assert!(cos > 1.0 - 1e-12, "rho={rho} cos={cos}");
            assert!((p.sigma_min - rho).abs() < 1e-10);
        }
    }

    #[test]
    fn scale_invariance() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.0, 0.3, 0.1, 0.3, 0.01]);
        let p = min_singular_pair(&m).unwrap();
        let q = min_singular_pair(&(&m * 7.5)).unwrap();
        assert!((q.sigma_min - 7.5 * p.sigma_min).abs() < 1e-12);
        assert!((q.sigma_max - 7.5 * p.sigma_max).abs() < 1e-12);
        assert!((&q.vector - &p.vector).amax() < 1e-12);
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let probes = golden_section(|x| Ok((x - 0.3).powi(2)), 0.0, 1.0, 1e-8).unwrap();
        let (x, _) = argmin(&probes);
        assert!((x - 0.3).abs() < 1e-8);
        // V-shaped minimum, as produced by |eigenvalue| crossing zero.
        let probes = golden_section(|x| Ok((x - 0.71).abs()), 0.5, 1.0, 1e-9).unwrap();
        assert!((argmin(&probes).0 - 0.71).abs() < 1e-9);
    }

    #[test]
    fn scan_picks_smallest_qualifying_minimum() {
        // sigma_min(s) = min(|s - 0.4|, |s - 0.8|) * 10 + tiny, sigma_max ~ 10.
        let eval = |s: f64| -> Result<CorrectedMatrix> {
            let d = DVector::from_vec(vec![10.0, 10.0 * (s - 0.4), 10.0 * (s - 0.8) + 1e-9]);
            Ok(CorrectedMatrix {
                matrix: DMatrix::from_diagonal(&d),
                n_samples: 1,
            })
        };
        // The leading coefficient of the selected vector is zero here, so
        // only check the curve and the selection up to normalization failure.
        let opts = ScanOptions::new(1.0);
        let err = scan_with(eval, &opts).unwrap_err();
        assert!(matches!(err, Error::LeadingCoefficientVanishes { .. }));

        let eval = |s: f64| -> Result<CorrectedMatrix> {
            let a = 5.0 * (s - 0.4);
            let b = 5.0 * (s - 0.8) + 1e-9;
            // Eigenvalues a and b on a basis whose vectors have non-zero first entry.
            let q = DMatrix::from_row_slice(3, 3, &[0.6, 0.8, 0.0, 0.8, -0.6, 0.0, 0.0, 0.0, 1.0]);
            let d = DMatrix::from_diagonal(&DVector::from_vec(vec![a, b, 10.0]));
            Ok(CorrectedMatrix {
                matrix: &q * d * q.transpose(),
                n_samples: 1,
            })
        };
        let r = scan_with(eval, &opts).unwrap();
        assert!(r.below_threshold);
        assert!((r.s_star - 0.4).abs() < 2e-4, "{}", r.s_star);
        assert!(r.curve.windows(2).all(|w| w[0].0 < w[1].0));
        let at_star = r.curve.iter().find(|p| p.0 == r.s_star).unwrap().1;
        assert_eq!(at_star, r.result.sigma_min);
        assert!((r.result.coefficients.as_slice()[1] - 0.8 / 0.6).abs() < 1e-6);
    }

    #[test]
    fn scan_rejects_bad_options() {
        let eval = |_s: f64| -> Result<CorrectedMatrix> { unreachable!() };
        assert!(scan_with(eval, &ScanOptions::new(0.0)).is_err());
        let opts = ScanOptions {
            grid_points: 4,
            ..ScanOptions::new(1.0)
        };
        assert!(scan_with(eval, &opts).is_err());
    }

    #[test]
    fn scale_family_models() {
        assert_eq!(ScaleFamily::Gaussian.model(0.5), NoiseModel::gaussian(0.5));
        let uniform = ScaleFamily::ScaledSymmetric {
            unit_even_moments: vec![1.0 / 3.0, 1.0 / 5.0],
        };
        match uniform.model(2.0) {
            NoiseModel::SymmetricEmpirical { even_moments } => {
                assert!((even_moments[0] - 4.0 / 3.0).abs() < 1e-15);
                assert!((even_moments[1] - 16.0 / 5.0).abs() < 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!((uniform.variance(2.0) - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn coefficient_error_examples() {
        assert_eq!(coefficient_error(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let e = coefficient_error(
            &[1.0, 0.2, 0.0, -0.15, -0.8, -1.0],
            &[1.0, 0.2002, 0.0001, -0.1503, -0.7989, -0.9996],
        )
        .unwrap();
        // sqrt(0.0002^2 + 0.0001^2 + 0.0003^2 + 0.0011^2 + 0.0004^2)
        let oracle = (4e-8f64 + 1e-8 + 9e-8 + 1.21e-6 + 1.6e-7).sqrt();
        assert!((e - oracle).abs() < 1e-12);
        assert!((e - 1.24e-3).abs() < 2e-5);
        assert!(coefficient_error(&[1.0], &[1.0, 2.0]).is_err());
    }
}
