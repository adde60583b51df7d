//! Recovery of the individual hyperplanes from the decoupling polynomial.
//!
//! `P_n(r) = c · ν_n(r) = ∏_i b_i · r` vanishes on the union of the mode
//! hyperplanes. At a point on hyperplane `i` only one factor of the product
//! rule survives, so `∇P_n(r) ∝ b_i`. Hyperplanes are extracted one at a time
//! from the candidate point that looks closest to the zero set while staying
//! away from the hyperplanes already found.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use itertools::Itertools;

use crate::accumulator::RegressorWindow;
use crate::error::{Error, Result};
use crate::veronese::{
    monomial, power_table, ExponentBasis, HybridCoefficients, ModelOrders, Submodel, SubmodelSet,
};

const SCORE_GUARD: f64 = 1e-12;

/// `P_n(r) = c · ν_n(r)` with its gradient.
#[derive(Debug, Clone)]
pub struct HybridPolynomial {
    basis: ExponentBasis,
    coeffs: Vec<f64>,
}

impl HybridPolynomial {
    pub fn new(coefficients: &HybridCoefficients, orders: ModelOrders) -> Result<Self> {
        let basis = ExponentBasis::new(orders);
        if coefficients.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                got: coefficients.len(),
            });
        }
        Ok(Self {
            basis,
            coeffs: coefficients.as_slice().to_vec(),
        })
    }

    pub fn orders(&self) -> ModelOrders {
        self.basis.orders()
    }

    fn check(&self, r: &[f64]) -> Result<()> {
        let s = self.orders().regressor_dim();
        if r.len() != s {
            return Err(Error::DimensionMismatch {
                expected: s,
                got: r.len(),
            });
        }
        Ok(())
    }

    pub fn value(&self, r: &[f64]) -> Result<f64> {
        self.check(r)?;
        let powers = power_table(r, self.orders().n());
        Ok(self
            .basis
            .tuples()
            .iter()
            .zip(&self.coeffs)
            .map(|(t, c)| c * monomial(&powers, t))
            .sum())
    }

    /// `∇_r P_n(r)`: every monomial contributes `exponent · coefficient` to the
    /// monomial with that exponent lowered by one.
    pub fn gradient(&self, r: &[f64]) -> Result<Vec<f64>> {
        self.check(r)?;
        let powers = power_table(r, self.orders().n());
        let mut grad = vec![0.0; r.len()];
        for (tuple, &c) in self.basis.tuples().iter().zip(&self.coeffs) {
            if c == 0.0 {
                continue;
            }
            for (j, &e) in tuple.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let mut term = c * e as f64;
                for (i, (&ei, p)) in tuple.iter().zip(&powers).enumerate() {
                    term *= p[if i == j { ei as usize - 1 } else { ei as usize }];
                }
                grad[j] += term;
            }
        }
        Ok(grad)
    }

    fn coeff_norm(&self) -> f64 {
        norm(&self.coeffs)
    }

    /// `(score, ∇P(r))`; `None` for the origin.
    ///
    /// The score is the angular distance `|P| / (‖∇P‖ ‖r‖)` to the zero set,
    /// divided by the relative gradient size `‖∇P‖ / (‖c‖ ‖r‖^(n-1))`. Near the
    /// intersection of two hyperplanes the gradient mixes both normals, and the
    /// second factor pushes such points down the ranking.
    fn scored(&self, r: &[f64]) -> Option<(f64, Vec<f64>)> {
        let rn = norm(r);
        if !(rn > 0.0) || !rn.is_finite() {
            return None;
        }
        let g = self.gradient(r).ok()?;
        let p = self.value(r).ok()?.abs();
        let gn = norm(&g);
        let distance = p / (gn * rn + SCORE_GUARD);
        let separation = gn / (self.coeff_norm() * rn.powi(self.basis.orders().n() as i32 - 1));
        let score = distance / (separation + SCORE_GUARD);
        score.is_finite().then_some((score, g))
    }

    fn base_score(&self, r: &[f64]) -> Option<f64> {
        self.scored(r).map(|(score, _)| score)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `|b · r| / (‖b‖ ‖r‖)`, the sine of the angle between `r` and the hyperplane.
fn hyperplane_proximity(r: &[f64], b: &[f64]) -> f64 {
    dot(b, r).abs() / (norm(b) * norm(r))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorizationResult {
    pub submodels: SubmodelSet,
    /// Recovered normals, first coordinate `-1`.
    pub normals: Vec<Vec<f64>>,
    pub pick_points: Vec<Vec<f64>>,
    /// `|P_n|` at each pick.
    pub residuals: Vec<f64>,
}

/// Splits `c` into `n` hyperplane normals by gradient evaluation at
/// selected candidate regressors.
pub fn factor(poly: &HybridPolynomial, candidates: &[Vec<f64>]) -> Result<FactorizationResult> {
    let orders = poly.orders();
    let n = orders.n();
    if candidates.is_empty() {
        return Err(Error::InvalidConfig("no candidate regressors".into()));
    }
    for r in candidates {
        poly.check(r)?;
    }
    let scored: Vec<(usize, (f64, Vec<f64>))> = candidates
        .iter()
        .enumerate()
        .filter_map(|(i, r)| poly.scored(r).map(|parts| (i, parts)))
        .collect();
    let c_norm = poly.coeff_norm();
    let mut normals: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut picks = Vec::with_capacity(n);
    let mut residuals = Vec::with_capacity(n);
    for round in 0..n {
        let mut best: Option<(f64, usize)> = None;
        for (pos, (idx, (base, _))) in scored.iter().enumerate() {
            let r = &candidates[*idx];
            let penalty: f64 = normals.iter().map(|b| hyperplane_proximity(r, b)).product();
            // Guard both terms so exact zeros on a found hyperplane rank last.
            let score = (base + SCORE_GUARD) / (penalty + SCORE_GUARD);
            if best.is_none_or(|(s, _)| score < s) {
                best = Some((score, pos));
            }
        }
        let (_, pos) = best.ok_or(Error::GradientDegenerate {
            index: round,
            norm: 0.0,
        })?;
        let (idx, (_, g)) = &scored[pos];
        let r = &candidates[*idx];
        let g_norm = norm(g);
        if g_norm < 1e-10 * c_norm * norm(r).powi(n as i32 - 1) {
            return Err(Error::GradientDegenerate {
                index: round,
                norm: g_norm,
            });
        }
        if g[0].abs() <= 1e-12 * g_norm {
            return Err(Error::FirstCoordinateVanishes { index: round });
        }
        let scale = -1.0 / g[0];
        let mut b: Vec<f64> = g.iter().map(|v| v * scale).collect();
        b[0] = -1.0;
        residuals.push(poly.value(r)?.abs());
        picks.push(r.clone());
        normals.push(b);
    }
    let models = normals
        .iter()
        .map(|b| Submodel::from_normal(b, orders))
        .collect::<Result<Vec<_>>>()?;
    Ok(FactorizationResult {
        submodels: SubmodelSet::new(models, orders)?,
        normals,
        pick_points: picks,
        residuals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct PoolEntry {
    score: f64,
    seq: u64,
}

impl Eq for PoolEntry {}

impl PartialOrd for PoolEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PoolEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then(self.seq.cmp(&other.seq))
    }
}

/// Keeps the `capacity` regressors closest to the zero set of `P_n`, so that
/// [`factor`] can run on a bounded candidate set fed from a stream.
#[derive(Debug, Clone)]
pub struct CandidatePool {
    poly: HybridPolynomial,
    capacity: usize,
    heap: BinaryHeap<PoolEntry>,
    points: std::collections::HashMap<u64, Vec<f64>>,
    seq: u64,
}

impl CandidatePool {
    pub const DEFAULT_CAPACITY: usize = 4096;

    pub fn new(poly: HybridPolynomial, capacity: usize) -> Self {
        Self {
            poly,
            capacity: capacity.max(1),
            heap: BinaryHeap::new(),
            points: Default::default(),
            seq: 0,
        }
    }

    pub fn offer(&mut self, r: &[f64]) {
        let seq = self.seq;
        self.seq += 1;
        let Some(score) = self.poly.base_score(r) else {
            return;
        };
        let entry = PoolEntry { score, seq };
        if self.heap.len() < self.capacity {
            self.heap.push(entry);
            self.points.insert(seq, r.to_vec());
        } else if let Some(top) = self.heap.peek() {
            if entry < *top {
                let evicted = self.heap.pop().expect("non-empty");
                self.points.remove(&evicted.seq);
                self.heap.push(entry);
                self.points.insert(seq, r.to_vec());
            }
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Retained candidates in arrival order.
    pub fn into_candidates(self) -> Vec<Vec<f64>> {
        let mut points: Vec<(u64, Vec<f64>)> = self.points.into_iter().collect();
        points.sort_by_key(|(seq, _)| *seq);
        points.into_iter().map(|(_, r)| r).collect()
    }

    pub fn factor(self) -> Result<FactorizationResult> {
        let poly = self.poly.clone();
        factor(&poly, &self.into_candidates())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeAssignment {
    /// Zero-based submodel index.
    pub mode: usize,
    /// `|b_mode · r|`
    pub residual: f64,
    /// Another submodel explains the window equally well, as for `r = 0`.
    pub ambiguous: bool,
}

/// Assigns each window to the submodel with the smallest equation residual.
/// Ties go to the lower index and are flagged as ambiguous.
pub fn assign_modes<I>(submodels: &SubmodelSet, windows: I) -> Vec<ModeAssignment>
where
    I: IntoIterator<Item = RegressorWindow>,
{
    let normals = submodels.normals();
    windows
        .into_iter()
        .map(|w| assign_regressor(&normals, w.regressor()))
        .collect()
}

pub fn assign_regressor(normals: &[Vec<f64>], r: &[f64]) -> ModeAssignment {
    let residuals: Vec<f64> = normals.iter().map(|b| dot(b, r).abs()).collect();
    let mut mode = 0;
    for (i, &res) in residuals.iter().enumerate() {
        if res < residuals[mode] {
            mode = i;
        }
    }
    let scale = norm(r) * normals.iter().map(|b| norm(b)).fold(0.0, f64::max);
    let tol = 1e-12 * scale;
    let ambiguous = residuals
        .iter()
        .enumerate()
        .any(|(i, &res)| i != mode && res - residuals[mode] <= tol);
    ModeAssignment {
        mode,
        residual: residuals.get(mode).copied().unwrap_or(f64::INFINITY),
        ambiguous,
    }
}

/// Fraction of matching labels under the best relabelling of `n` modes.
pub fn best_permutation_accuracy(assigned: &[usize], truth: &[usize], n: usize) -> f64 {
    if assigned.is_empty() {
        return 0.0;
    }
    let mut confusion = vec![vec![0usize; n]; n];
    for (&a, &t) in assigned.iter().zip(truth) {
        if a < n && t < n {
            confusion[a][t] += 1;
        }
    }
    let best = (0..n)
        .permutations(n)
        .map(|perm| {
            perm.iter()
                .enumerate()
                .map(|(a, &t)| confusion[a][t])
                .sum::<usize>()
        })
        .max()
        .unwrap_or(0);
    best as f64 / assigned.len().min(truth.len()) as f64
}

/// Largest coefficient deviation between two submodel sets under the best
/// matching of modes.
pub fn submodel_distance(estimated: &SubmodelSet, truth: &SubmodelSet) -> f64 {
    let est = estimated.normals();
    let tru = truth.normals();
    if est.len() != tru.len() {
        return f64::INFINITY;
    }
    (0..est.len())
        .permutations(est.len())
        .map(|perm| {
            perm.iter()
                .enumerate()
                .map(|(i, &j)| {
                    est[i]
                        .iter()
                        .zip(&tru[j])
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orders(n: usize, na: usize, nc: usize) -> ModelOrders {
        ModelOrders::new(n, na, nc).unwrap()
    }

    fn poly_from(normals: &[Vec<f64>], o: ModelOrders) -> HybridPolynomial {
        let basis = ExponentBasis::new(o);
        let c = HybridCoefficients::normalize(&basis.expand_product(normals).unwrap()).unwrap();
        HybridPolynomial::new(&c, o).unwrap()
    }

    #[test]
    fn linear_gradient_is_constant() {
        let o = orders(1, 1, 1);
        let c = HybridCoefficients::from_raw(vec![1.0, -0.4, 2.0]);
        let p = HybridPolynomial::new(&c, o).unwrap();
        for r in [[0.0, 0.0, 0.0], [1.0, -2.0, 3.0]] {
            assert_eq!(p.gradient(&r).unwrap(), vec![1.0, -0.4, 2.0]);
        }
    }

    #[test]
    fn gradient_on_hyperplane_is_parallel_to_normal() {
        let o = orders(2, 1, 1);
        let b1 = vec![-1.0, 0.3, 1.0];
        let b2 = vec![-1.0, -0.5, -1.0];
        let p = poly_from(&[b1.clone(), b2.clone()], o);
        // r* on hyperplane 1: -x + 0.3 y + u = 0.
        let r = [0.3 * 2.0 + 0.7, 2.0, 0.7];
        assert!(p.value(&r).unwrap().abs() < 1e-12);
        let g = p.gradient(&r).unwrap();
        let cos = dot(&g, &b1) / (norm(&g) * norm(&b1));
        assert!((cos.abs() - 1.0).abs() < 1e-12);
        assert!(p.gradient(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let o = orders(3, 2, 1);
        let basis = ExponentBasis::new(o);
        let coeffs: Vec<f64> = (0..basis.len())
            .map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0)
            .collect();
        let p = HybridPolynomial::new(&HybridCoefficients::from_raw(coeffs), o).unwrap();
        let r = [0.7, -1.3, 0.4, 1.1];
        let g = p.gradient(&r).unwrap();
        let h = 1e-5 * norm(&r);
        for j in 0..r.len() {
            let mut plus = r;
            let mut minus = r;
            plus[j] += h;
            minus[j] -= h;
            let fd = (p.value(&plus).unwrap() - p.value(&minus).unwrap()) / (2.0 * h);
            assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1.0), "j={j}");
        }
    }

    #[test]
    fn factor_noiseless_two_modes() {
        let o = orders(2, 1, 1);
        let p = poly_from(&[vec![-1.0, 0.3, 1.0], vec![-1.0, -0.5, -1.0]], o);
        let mut candidates = Vec::new();
        for i in 0..50 {
            let xprev = (i as f64 * 0.37).sin();
            let u = (i as f64 * 0.91).cos();
            let (a, c) = if i % 2 == 0 { (0.3, 1.0) } else { (-0.5, -1.0) };
            candidates.push(vec![a * xprev + c * u, xprev, u]);
        }
        let f = factor(&p, &candidates).unwrap();
        let truth = SubmodelSet::new(
            vec![
                Submodel::new(vec![0.3], vec![1.0]),
                Submodel::new(vec![-0.5], vec![-1.0]),
            ],
            o,
        )
        .unwrap();
        assert!(
            submodel_distance(&f.submodels, &truth) < 1e-9,
            "{:?} {:?}",
            f.normals,
            f.pick_points
        );
        assert!(f.normals.iter().all(|b| b[0] == -1.0));
        assert!(f.residuals.iter().all(|r| *r < 1e-12));
    }

    #[test]
    fn factor_single_mode_returns_scaled_c() {
        let o = orders(1, 1, 1);
        let c = HybridCoefficients::from_raw(vec![1.0, -0.4, -2.0]);
        let p = HybridPolynomial::new(&c, o).unwrap();
        let f = factor(&p, &[vec![1.0, 0.5, 0.4]]).unwrap();
        assert_eq!(f.normals[0], vec![-1.0, 0.4, 2.0]);
        assert_eq!(f.submodels.models()[0], Submodel::new(vec![0.4], vec![2.0]));
    }

    #[test]
    fn repeated_hyperplane_is_degenerate() {
        let o = orders(2, 1, 1);
        let b = vec![-1.0, 0.3, 1.0];
        let p = poly_from(&[b.clone(), b], o);
        // Data generated by the single true mode lies on its hyperplane.
        let candidates = vec![
            vec![1.3, 1.0, 1.0],
            vec![0.5, 0.0, 0.5],
            vec![1.0, 2.0, 0.3],
        ];
        assert!(matches!(
            factor(&p, &candidates),
            Err(Error::GradientDegenerate { .. })
        ));
    }

    #[test]
    fn zero_candidates_are_skipped() {
        let o = orders(2, 1, 1);
        let p = poly_from(&[vec![-1.0, 0.3, 1.0], vec![-1.0, -0.5, -1.0]], o);
        let f = factor(
            &p,
            &[vec![0.0; 3], vec![1.3, 1.0, 1.0], vec![-1.5, 1.0, 1.0]],
        )
        .unwrap();
        assert!(f.pick_points.iter().all(|r| norm(r) > 0.0));
    }

    #[test]
    fn pool_keeps_best_candidates() {
        let o = orders(2, 1, 1);
        let p = poly_from(&[vec![-1.0, 0.3, 1.0], vec![-1.0, -0.5, -1.0]], o);
        let all: Vec<Vec<f64>> = (0..200)
            .map(|i| {
                let t = i as f64;
                vec![(t * 0.13).sin() * 2.0, (t * 0.71).cos(), (t * 0.29).sin()]
            })
            .collect();
        let mut pool = CandidatePool::new(p.clone(), 10);
        for r in &all {
            pool.offer(r);
        }
        assert_eq!(pool.len(), 10);
        let kept = pool.clone().into_candidates();
        let mut scores: Vec<f64> = all.iter().filter_map(|r| p.base_score(r)).collect();
        scores.sort_by(f64::total_cmp);
        let worst_kept = kept
            .iter()
            .map(|r| p.base_score(r).unwrap())
            .fold(0.0, f64::max);
        assert_eq!(worst_kept, scores[9]);
        // Round one picks the global best whether or not the pool filtered.
        let full = factor(&p, &all).unwrap();
        let pooled = pool.factor().unwrap();
        assert_eq!(full.pick_points[0], pooled.pick_points[0]);
    }

    #[test]
    fn assignment_and_tie_break() {
        let o = orders(2, 1, 1);
        let set = SubmodelSet::new(
            vec![
                Submodel::new(vec![0.3], vec![1.0]),
                Submodel::new(vec![-0.5], vec![-1.0]),
            ],
            o,
        )
        .unwrap();
        let on_mode_two = RegressorWindow::new(0, &[-0.5 * 2.0 - 0.4, 2.0], &[0.4]);
        // Equal residuals: |-x + 0.3 y + u| == |-x - 0.5 y - u| at x = -0.1 y, u = 0.
        let tie = RegressorWindow::new(1, &[-0.1, 1.0], &[0.0]);
        let out = assign_modes(&set, vec![on_mode_two, tie]);
        assert_eq!(out[0].mode, 1);
        assert!(out[0].residual < 1e-12);
        assert!(!out[0].ambiguous);
        assert_eq!(out[1].mode, 0);
        assert!(out[1].ambiguous);
        let origin = assign_regressor(&set.normals(), &[0.0; 3]);
        assert!(origin.ambiguous);
    }

    #[test]
    fn permutation_accuracy() {
        assert_eq!(
            best_permutation_accuracy(&[0, 0, 1, 1], &[1, 1, 0, 0], 2),
            1.0
        );
        assert_eq!(
            best_permutation_accuracy(&[0, 1, 1, 1], &[1, 1, 0, 0], 2),
            0.75
        );
    }
}
