//! One-pass sufficient statistics for the moment-corrected Veronese matrix.
//!
//! Entry `(i, j)` of the corrected matrix for one window is
//! `∏_lag q_{e_lag}(y_lag) · ∏ u^{e_u}` where `e = t_i + t_j` is the sum of the
//! two basis exponents. Expanding each `q` into raw powers turns the average
//! over windows into a fixed linear combination of cross-moment sums
//! `Σ_k ∏ y_{k-j}^{p_j} ∏ u_{k-j}^{r_j}` whose weights depend only on the noise
//! moments. [`MomentStats`] keeps those sums, so the matrix can be rebuilt for
//! any noise law without touching the data again.

use std::collections::HashMap;
use std::sync::Arc;

use itertools::Itertools;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::moments::NoiseModel;
use crate::veronese::{power_table, Exponent, ExponentBasis, ModelOrders};

/// Windows per accumulation block. Blocks are reduced in index order, which
/// makes results independent of how many threads produced them.
pub const ACCUMULATION_BLOCK: usize = 1 << 16;

/// Output samples `y` and input samples `u`, each tagged with the time index
/// of its first element.
#[derive(Debug, Clone, Copy)]
pub struct IoData<'a> {
    pub y: &'a [f64],
    pub y_start: i64,
    pub u: &'a [f64],
    pub u_start: i64,
}

impl<'a> IoData<'a> {
    /// `y` carries `na` pre-samples and `u` carries `nc - 1` pre-samples, so
    /// `N + na` outputs and `N + nc - 1` inputs give `N` windows.
    pub fn presampled(y: &'a [f64], u: &'a [f64], orders: ModelOrders) -> Self {
        Self {
            y,
            y_start: 1 - orders.na() as i64,
            u,
            u_start: 1 - orders.nc() as i64,
        }
    }

    /// Both series share the same time index, starting at `start`.
    pub fn aligned(y: &'a [f64], u: &'a [f64], start: i64) -> Self {
        Self {
            y,
            y_start: start,
            u,
            u_start: start,
        }
    }

    /// Time indices `[first, last]` of the complete windows.
    pub fn window_range(&self, orders: ModelOrders) -> Option<(i64, i64)> {
        let first = (self.y_start + orders.na() as i64).max(self.u_start + orders.nc() as i64);
        let last = (self.y_start + self.y.len() as i64 - 1).min(self.u_start + self.u.len() as i64);
        (first <= last).then_some((first, last))
    }

    pub fn window_count(&self, orders: ModelOrders) -> usize {
        self.window_range(orders)
            .map_or(0, |(a, b)| (b - a + 1) as usize)
    }

    /// Regressor at time `k` written into `buf`; `k` must be admissible.
    pub fn fill_regressor(&self, orders: ModelOrders, k: i64, buf: &mut [f64]) {
        let na = orders.na();
        let y0 = (k - self.y_start) as usize;
        let u0 = (k - self.u_start) as usize;
        for (j, b) in buf[..=na].iter_mut().enumerate() {
            *b = self.y[y0 - j];
        }
        for j in 1..=orders.nc() {
            buf[na + j] = self.u[u0 - j];
        }
    }

    pub fn windows(&self, orders: ModelOrders) -> Result<Windows<'a>> {
        let (first, last) = self.window_range(orders).ok_or_else(|| {
            Error::SeriesTooShort(format!(
                "no complete window for orders {orders} ({} outputs, {} inputs)",
                self.y.len(),
                self.u.len()
            ))
        })?;
        Ok(Windows {
            data: *self,
            orders,
            next: first,
            last,
        })
    }
}

/// Lagged outputs and inputs that form the regressor at time `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorWindow {
    pub k: i64,
    values: Vec<f64>,
    output_lags: usize,
}

impl RegressorWindow {
    pub fn new(k: i64, y_lags: &[f64], u_lags: &[f64]) -> Self {
        let mut values = Vec::with_capacity(y_lags.len() + u_lags.len());
        values.extend_from_slice(y_lags);
        values.extend_from_slice(u_lags);
        Self {
            k,
            values,
            output_lags: y_lags.len(),
        }
    }

    /// `[y_k, y_{k-1}, .., y_{k-na}]`
    pub fn y_lags(&self) -> &[f64] {
        &self.values[..self.output_lags]
    }

    /// `[u_{k-1}, .., u_{k-nc}]`
    pub fn u_lags(&self) -> &[f64] {
        &self.values[self.output_lags..]
    }

    /// The full regressor `[y_lags, u_lags]`.
    pub fn regressor(&self) -> &[f64] {
        &self.values
    }
}

pub struct Windows<'a> {
    data: IoData<'a>,
    orders: ModelOrders,
    next: i64,
    last: i64,
}

impl Iterator for Windows<'_> {
    type Item = RegressorWindow;

    fn next(&mut self) -> Option<RegressorWindow> {
        if self.next > self.last {
            return None;
        }
        let k = self.next;
        self.next += 1;
        let mut values = vec![0.0; self.orders.regressor_dim()];
        self.data.fill_regressor(self.orders, k, &mut values);
        Some(RegressorWindow {
            k,
            values,
            output_lags: self.orders.output_lags(),
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.last - self.next + 1).max(0) as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Windows<'_> {}

#[derive(Debug)]
struct Term {
    key: usize,
    /// Raw power of each output lag taken from the `q` polynomials.
    y_powers: Vec<u32>,
}

#[derive(Debug)]
struct EntryPlan {
    row: usize,
    col: usize,
    /// Target power of each output lag (the `h` of `q_h`).
    y_exponents: Vec<u32>,
    terms: Vec<Term>,
}

/// Key set and assembly plan shared by every [`MomentStats`] of one order.
#[derive(Debug)]
struct StatsLayout {
    orders: ModelOrders,
    basis: ExponentBasis,
    keys: Vec<Exponent>,
    /// `keys` flattened with stride `s`, for the accumulation hot loop.
    flat_keys: Vec<usize>,
    key_index: HashMap<Exponent, usize>,
    entries: Vec<EntryPlan>,
}

impl StatsLayout {
    fn new(orders: ModelOrders) -> Self {
        let basis = ExponentBasis::new(orders);
        let ny = orders.output_lags();
        let mut keys: Vec<Exponent> = Vec::new();
        let mut key_index: HashMap<Exponent, usize> = HashMap::new();
        let mut entries = Vec::new();
        let tuples = basis.tuples();
        for row in 0..tuples.len() {
            for col in row..tuples.len() {
                let e: Exponent = tuples[row]
                    .iter()
                    .zip(&tuples[col])
                    .map(|(a, b)| a + b)
                    .collect();
                let y_exponents = e[..ny].to_vec();
                let mut terms = Vec::new();
                for y_powers in y_exponents.iter().map(|&h| 0..=h).multi_cartesian_product() {
                    let mut key = y_powers.clone();
                    key.extend_from_slice(&e[ny..]);
                    let idx = *key_index.entry(key.clone()).or_insert_with(|| {
                        keys.push(key);
                        keys.len() - 1
                    });
                    terms.push(Term { key: idx, y_powers });
                }
                entries.push(EntryPlan {
                    row,
                    col,
                    y_exponents,
                    terms,
                });
            }
        }
        let flat_keys = keys.iter().flatten().map(|&e| e as usize).collect();
        Self {
            orders,
            basis,
            keys,
            flat_keys,
            key_index,
            entries,
        }
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Mergeable cross-moment sums over regressor windows.
#[derive(Debug, Clone)]
pub struct MomentStats {
    layout: Arc<StatsLayout>,
    count: u64,
    sums: Vec<CompensatedSum>,
}

impl PartialEq for MomentStats {
    fn eq(&self, other: &Self) -> bool {
        self.layout.orders == other.layout.orders
            && self.count == other.count
            && self.sums == other.sums
    }
}

impl MomentStats {
    pub fn new(orders: ModelOrders) -> Self {
        Self::with_layout(Arc::new(StatsLayout::new(orders)))
    }

    fn with_layout(layout: Arc<StatsLayout>) -> Self {
        let sums = vec![CompensatedSum::default(); layout.keys.len()];
        Self {
            layout,
            count: 0,
            sums,
        }
    }

    /// A zeroed accumulator sharing this one's layout.
    pub fn empty_like(&self) -> Self {
        Self::with_layout(Arc::clone(&self.layout))
    }

    pub fn orders(&self) -> ModelOrders {
        self.layout.orders
    }

    pub fn basis(&self) -> &ExponentBasis {
        &self.layout.basis
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Cross-moment keys: exponents over `[y_k, .., y_{k-na}, u_{k-1}, .., u_{k-nc}]`.
    pub fn keys(&self) -> &[Exponent] {
        &self.layout.keys
    }

    pub fn sum(&self, key: &[u32]) -> Option<f64> {
        self.layout
            .key_index
            .get(key)
            .map(|&i| self.sums[i].value())
    }

    pub fn accumulate(&mut self, window: &RegressorWindow) {
        self.push_regressor(window.regressor());
    }

    /// Adds one regressor `[y_lags, u_lags]`.
    ///
    /// Panics if `r` does not have the regressor dimension.
    pub fn push_regressor(&mut self, r: &[f64]) {
        let s = self.layout.orders.regressor_dim();
        assert_eq!(r.len(), s, "regressor dimension mismatch");
        let max_degree = 2 * self.layout.orders.n();
        let powers = power_table(r, max_degree);
        for (sum, key) in self
            .sums
            .iter_mut()
            .zip(self.layout.flat_keys.chunks_exact(s))
        {
            let mut v = 1.0;
            for (p, &e) in powers.iter().zip(key) {
                v *= p[e];
            }
            sum.add(v);
        }
        self.count += 1;
    }

    /// Adds `other` into `self`.
    pub fn merge(&mut self, other: &MomentStats) -> Result<()> {
        if self.layout.orders != other.layout.orders {
            return Err(Error::OrdersMismatch);
        }
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            a.merge(b);
        }
        self.count += other.count;
        Ok(())
    }

    pub fn merged(a: &MomentStats, b: &MomentStats) -> Result<MomentStats> {
        let mut out = a.clone();
        out.merge(b)?;
        Ok(out)
    }

    /// The corrected matrix `(1/N) Σ_k M̂_k` for the given noise law.
    pub fn assemble(&self, noise: &NoiseModel) -> Result<CorrectedMatrix> {
        if self.count == 0 {
            return Err(Error::SeriesTooShort("no windows accumulated".into()));
        }
        let q = noise.correction_table(2 * self.layout.orders.n())?;
        let l = self.layout.basis.len();
        let mut m = DMatrix::zeros(l, l);
        let inv_n = 1.0 / self.count as f64;
        for entry in &self.layout.entries {
            let mut acc = 0.0;
            for term in &entry.terms {
                let mut weight = 1.0;
                for (&h, &p) in entry.y_exponents.iter().zip(&term.y_powers) {
                    weight *= q[h as usize].coeffs()[p as usize];
                }
                if weight != 0.0 {
                    acc += weight * self.sums[term.key].value();
                }
            }
            let v = acc * inv_n;
            m[(entry.row, entry.col)] = v;
            m[(entry.col, entry.row)] = v;
        }
        Ok(CorrectedMatrix {
            matrix: m,
            n_samples: self.count,
        })
    }
}

/// Accumulates a stream of regressors in fixed-size blocks.
#[derive(Debug, Clone)]
pub struct BlockAccumulator {
    total: MomentStats,
    current: MomentStats,
    in_block: usize,
}

impl BlockAccumulator {
    pub fn new(orders: ModelOrders) -> Self {
        let total = MomentStats::new(orders);
        let current = total.empty_like();
        Self {
            total,
            current,
            in_block: 0,
        }
    }

    pub fn push_regressor(&mut self, r: &[f64]) {
        self.current.push_regressor(r);
        self.in_block += 1;
        if self.in_block == ACCUMULATION_BLOCK {
            self.flush();
        }
    }

    /// Adds statistics of one complete block computed elsewhere. Must only be
    /// called on a block boundary.
    pub fn push_block(&mut self, block: &MomentStats) -> Result<()> {
        debug_assert_eq!(self.in_block, 0);
        self.total.merge(block)
    }

    /// Pushes regressors stored back to back. Complete blocks are accumulated
    /// on up to `threads` threads; the result is the same as pushing one by one.
    pub fn push_many(&mut self, flat: &[f64], threads: usize) {
        let s = self.total.orders().regressor_dim();
        assert_eq!(
            flat.len() % s,
            0,
            "buffer is not a whole number of regressors"
        );
        let mut rest = flat;
        while self.in_block != 0 && !rest.is_empty() {
            self.push_regressor(&rest[..s]);
            rest = &rest[s..];
        }
        let block_len = s * ACCUMULATION_BLOCK;
        let (whole, tail) = rest.split_at(rest.len() / block_len * block_len);
        let chunks: Vec<&[f64]> = whole.chunks(block_len).collect();
        let template = &self.total;
        let blocks = map_in_order(&chunks, threads, |chunk| {
            let mut stats = template.empty_like();
            for r in chunk.chunks(s) {
                stats.push_regressor(r);
            }
            stats
        });
        for b in &blocks {
            self.total.merge(b).expect("blocks share one layout");
        }
        for r in tail.chunks(s) {
            self.push_regressor(r);
        }
    }

    fn flush(&mut self) {
        if self.in_block > 0 {
            self.total
                .merge(&self.current)
                .expect("blocks share one layout");
            self.current = self.total.empty_like();
            self.in_block = 0;
        }
    }

    pub fn finish(mut self) -> MomentStats {
        self.flush();
        self.total
    }

    pub fn template(&self) -> &MomentStats {
        &self.total
    }
}

/// `items.iter().map(f)` spread over up to `threads` scoped threads.
fn map_in_order<T: Sync, R: Send>(
    items: &[T],
    threads: usize,
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    let threads = threads.max(1).min(items.len());
    if threads <= 1 {
        return items.iter().map(&f).collect();
    }
    let per_thread = items.len().div_ceil(threads);
    let f = &f;
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(per_thread)
            .map(|chunk| scope.spawn(move || chunk.iter().map(f).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("accumulation thread panicked"))
            .collect()
    })
}

/// Statistics of every complete window in `data`, computed block-wise on up
/// to `threads` threads. The result does not depend on `threads`.
pub fn accumulate(data: IoData<'_>, orders: ModelOrders, threads: usize) -> Result<MomentStats> {
    let (first, last) = data.window_range(orders).ok_or_else(|| {
        Error::SeriesTooShort(format!(
            "no complete window for orders {orders} ({} outputs, {} inputs)",
            data.y.len(),
            data.u.len()
        ))
    })?;
    let template = MomentStats::new(orders);
    let starts: Vec<i64> = (first..=last).step_by(ACCUMULATION_BLOCK).collect();
    let block = |start: i64| {
        let end = (start + ACCUMULATION_BLOCK as i64 - 1).min(last);
        let mut stats = template.empty_like();
        let mut buf = vec![0.0; orders.regressor_dim()];
        for k in start..=end {
            data.fill_regressor(orders, k, &mut buf);
            stats.push_regressor(&buf);
        }
        stats
    };
    let blocks = map_in_order(&starts, threads, |&s| block(s));
    let mut total = template;
    for b in &blocks {
        total.merge(b)?;
    }
    Ok(total)
}

/// Averaged moment-corrected Veronese matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedMatrix {
    pub matrix: DMatrix<f64>,
    pub n_samples: u64,
}

/// Windows, accumulation and assembly in one call.
pub fn build(data: IoData<'_>, orders: ModelOrders, noise: &NoiseModel) -> Result<CorrectedMatrix> {
    accumulate(data, orders, 1)?.assemble(noise)
}
