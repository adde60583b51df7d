//! Degree-`n` Veronese embedding of regressors.
//!
//! A regressor `r = [y_k, y_{k-1}, .., y_{k-na}, u_{k-1}, .., u_{k-nc}]` of
//! dimension `s = na + nc + 1` is mapped to the vector of all its degree-`n`
//! monomials. Monomials are identified by exponent tuples and listed in
//! strictly decreasing lexicographic order, so the first entry is always
//! `y_k^n`. Every matrix in this crate is indexed by that ordering.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Exponent tuple of a monomial, one entry per regressor coordinate.
pub type Exponent = Vec<u32>;

pub(crate) fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// Number of submodels `n`, output lags `na` and input lags `nc`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelOrders {
    n: usize,
    na: usize,
    nc: usize,
}

impl ModelOrders {
    pub fn new(n: usize, na: usize, nc: usize) -> Result<Self> {
        if n == 0 || na == 0 || nc == 0 {
            return Err(Error::InvalidOrders(format!(
                "n, na and nc must all be >= 1 (got n={n}, na={na}, nc={nc})"
            )));
        }
        Ok(Self { n, na, nc })
    }

    /// Number of submodels.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn na(&self) -> usize {
        self.na
    }

    pub fn nc(&self) -> usize {
        self.nc
    }

    /// Regressor dimension `s = na + nc + 1`.
    pub fn regressor_dim(&self) -> usize {
        self.na + self.nc + 1
    }

    /// Number of output coordinates in a regressor (`na + 1`).
    pub fn output_lags(&self) -> usize {
        self.na + 1
    }

    /// Veronese dimension `l = C(n + na + nc, n)`.
    pub fn veronese_dim(&self) -> usize {
        binomial((self.n + self.na + self.nc) as u64, self.n as u64) as usize
    }
}

impl fmt::Display for ModelOrders {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.n, self.na, self.nc)
    }
}

impl std::str::FromStr for ModelOrders {
    type Err = Error;

    /// Parses `"n,na,nc"`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::InvalidOrders(format!("expected n,na,nc, got {s:?}")));
        }
        let mut v = [0usize; 3];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p
                .parse()
                .map_err(|_| Error::InvalidOrders(format!("not an integer: {p:?}")))?;
        }
        ModelOrders::new(v[0], v[1], v[2])
    }
}

/// The ordered list of exponent tuples of the degree-`n` Veronese map.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentBasis {
    orders: ModelOrders,
    tuples: Vec<Exponent>,
    index: HashMap<Exponent, usize>,
}

fn enumerate_decreasing(dim: usize, degree: u32, prefix: &mut Exponent, out: &mut Vec<Exponent>) {
    if prefix.len() + 1 == dim {
        prefix.push(degree);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for e in (0..=degree).rev() {
        prefix.push(e);
        enumerate_decreasing(dim, degree - e, prefix, out);
        prefix.pop();
    }
}

/// All exponent tuples of length `dim` summing to `degree`, strictly
/// decreasing in lexicographic order.
pub(crate) fn exponent_tuples(dim: usize, degree: u32) -> Vec<Exponent> {
    let mut out = Vec::new();
    enumerate_decreasing(dim, degree, &mut Vec::with_capacity(dim), &mut out);
    out
}

impl ExponentBasis {
    pub fn new(orders: ModelOrders) -> Self {
        let tuples = exponent_tuples(orders.regressor_dim(), orders.n() as u32);
        let index = tuples
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, t)| (t, i))
            .collect();
        Self {
            orders,
            tuples,
            index,
        }
    }

    pub fn orders(&self) -> ModelOrders {
        self.orders
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn tuples(&self) -> &[Exponent] {
        &self.tuples
    }

    pub fn position(&self, tuple: &[u32]) -> Option<usize> {
        self.index.get(tuple).copied()
    }

    /// Evaluates `ν_n(r)`.
    pub fn embed(&self, r: &[f64]) -> Result<Vec<f64>> {
        let s = self.orders.regressor_dim();
        if r.len() != s {
            return Err(Error::DimensionMismatch {
                expected: s,
                got: r.len(),
            });
        }
        let powers = power_table(r, self.orders.n());
        Ok(self.tuples.iter().map(|t| monomial(&powers, t)).collect())
    }

    /// Coefficients `c` with `c · ν_n(r) == ∏_i b_i · r` for every `r`,
    /// obtained by multiplying the linear forms one at a time.
    pub fn expand_product(&self, normals: &[Vec<f64>]) -> Result<Vec<f64>> {
        let n = self.orders.n();
        let s = self.orders.regressor_dim();
        if normals.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: normals.len(),
            });
        }
        let mut poly: HashMap<Exponent, f64> = HashMap::new();
        poly.insert(vec![0; s], 1.0);
        for b in normals {
            if b.len() != s {
                return Err(Error::DimensionMismatch {
                    expected: s,
                    got: b.len(),
                });
            }
            let mut next: HashMap<Exponent, f64> = HashMap::with_capacity(poly.len() * s);
            for (tuple, coef) in &poly {
                for (j, bj) in b.iter().enumerate() {
                    let mut t = tuple.clone();
                    t[j] += 1;
                    *next.entry(t).or_insert(0.0) += coef * bj;
                }
            }
            poly = next;
        }
        Ok(self
            .tuples
            .iter()
            .map(|t| poly.get(t).copied().unwrap_or(0.0))
            .collect())
    }

    /// Human-readable label such as `x0^1*x1^1`; coordinate `j` is the
    /// `j`-th regressor entry.
    pub fn label(&self, index: usize) -> String {
        monomial_label(&self.tuples[index])
    }
}

pub fn monomial_label(tuple: &[u32]) -> String {
    let parts: Vec<String> = tuple
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > 0)
        .map(|(j, e)| format!("x{j}^{e}"))
        .collect();
    if parts.is_empty() {
        "1".to_string()
    } else {
        parts.join("*")
    }
}

/// `powers[j][d] = r[j]^d` for `d <= max_degree`.
pub(crate) fn power_table(r: &[f64], max_degree: usize) -> Vec<Vec<f64>> {
    r.iter()
        .map(|&v| {
            let mut row = Vec::with_capacity(max_degree + 1);
            let mut p = 1.0;
            for _ in 0..=max_degree {
                row.push(p);
                p *= v;
            }
            row
        })
        .collect()
}

pub(crate) fn monomial(powers: &[Vec<f64>], tuple: &[u32]) -> f64 {
    tuple
        .iter()
        .zip(powers)
        .map(|(&e, p)| p[e as usize])
        .product()
}

/// Coefficients of the hybrid decoupling polynomial in the basis ordering,
/// scaled so that the `y_k^n` entry equals one.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridCoefficients(Vec<f64>);

impl HybridCoefficients {
    /// Divides by the leading entry. Fails when that entry is below
    /// `1e-8 * max|c|`.
    pub fn normalize(raw: &[f64]) -> Result<Self> {
        Self::normalize_with_tolerance(raw, 1e-8)
    }

    pub fn normalize_with_tolerance(raw: &[f64], rel_tol: f64) -> Result<Self> {
        let lead = *raw.first().ok_or(Error::DimensionMismatch {
            expected: 1,
            got: 0,
        })?;
        let scale = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tolerance = rel_tol * scale;
        if !(lead.abs() > tolerance) {
            return Err(Error::LeadingCoefficientVanishes {
                value: lead.abs(),
                tolerance,
            });
        }
        Ok(Self(raw.iter().map(|v| v / lead).collect()))
    }

    /// Wraps a vector without rescaling.
    pub fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Output and input coefficients of one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Submodel {
    pub a: Vec<f64>,
    pub c: Vec<f64>,
}

impl Submodel {
    pub fn new(a: Vec<f64>, c: Vec<f64>) -> Self {
        Self { a, c }
    }

    /// Hyperplane normal `[-1, a_1, .., a_na, c_1, .., c_nc]`.
    pub fn normal(&self) -> Vec<f64> {
        std::iter::once(-1.0)
            .chain(self.a.iter().copied())
            .chain(self.c.iter().copied())
            .collect()
    }

    /// Inverse of [`Submodel::normal`]; the normal must already be scaled
    /// to first coordinate `-1`.
    pub fn from_normal(b: &[f64], orders: ModelOrders) -> Result<Self> {
        let s = orders.regressor_dim();
        if b.len() != s {
            return Err(Error::DimensionMismatch {
                expected: s,
                got: b.len(),
            });
        }
        Ok(Self {
            a: b[1..=orders.na()].to_vec(),
            c: b[orders.na() + 1..].to_vec(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubmodelSet {
    models: Vec<Submodel>,
}

impl SubmodelSet {
    pub fn new(models: Vec<Submodel>, orders: ModelOrders) -> Result<Self> {
        if models.len() != orders.n() {
            return Err(Error::DimensionMismatch {
                expected: orders.n(),
                got: models.len(),
            });
        }
        for m in &models {
            if m.a.len() != orders.na() {
                return Err(Error::DimensionMismatch {
                    expected: orders.na(),
                    got: m.a.len(),
                });
            }
            if m.c.len() != orders.nc() {
                return Err(Error::DimensionMismatch {
                    expected: orders.nc(),
                    got: m.c.len(),
                });
            }
        }
        Ok(Self { models })
    }

    pub fn models(&self) -> &[Submodel] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn normals(&self) -> Vec<Vec<f64>> {
        self.models.iter().map(Submodel::normal).collect()
    }

    /// Orders implied by the coefficient lengths.
    pub fn orders(&self) -> Result<ModelOrders> {
        let first = self
            .models
            .first()
            .ok_or_else(|| Error::InvalidOrders("empty submodel set".into()))?;
        ModelOrders::new(self.models.len(), first.a.len(), first.c.len())
    }

    /// Normalized hybrid coefficients of the product of all submodel
    /// hyperplanes.
    pub fn hybrid_coefficients(&self, basis: &ExponentBasis) -> Result<HybridCoefficients> {
        HybridCoefficients::normalize(&basis.expand_product(&self.normals())?)
    }
}
