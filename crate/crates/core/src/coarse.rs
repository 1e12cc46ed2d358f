//! Exact coarse singularity spectra: depth-`n` cylinders counted by `α_n`.
//!
//! A cylinder's mass depends only on how many of its bits select `min(p, 1-p)`
//! within each group of levels sharing a weight, so counts are sums of
//! products of binomial coefficients over the group count vectors.

use std::collections::HashMap;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::spectrum::LegendreGrid;
use crate::weights::WeightSequence;

/// Default bin width.
pub const DEFAULT_WIDTH: f64 = 0.01;
/// Largest number of count vectors enumerated exactly.
pub const EXACT_LIMIT: u64 = 10_000_000;
/// Cell width in `log2`-measure of the convolution fallback.
pub const DP_RESOLUTION: f64 = 1e-4;
/// Distance from a bin edge below which an exactly computed `α` counts as spill.
pub const EDGE_TOL: f64 = 1e-9;

/// Strictly increasing bin edges; bin `i` is `[edges[i], edges[i+1])`, the
/// last bin closed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaBins {
    edges: Vec<f64>,
}

impl AlphaBins {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::Argument("need at least two bin edges".into()));
        }
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Argument("bin edges must be finite and strictly increasing".into()));
        }
        Ok(AlphaBins { edges })
    }

    /// Bins of width `width` centred on `lo, lo + width, ..., hi`.
    pub fn centred(lo: f64, hi: f64, width: f64) -> Result<Self> {
        if !(width > 0.0 && hi >= lo) {
            return Err(Error::Argument(format!("invalid bin layout [{lo}, {hi}] width {width}")));
        }
        let count = ((hi - lo) / width + 1e-9).floor() as usize + 1;
        let inv = 1.0 / width;
        let exact = (inv - inv.round()).abs() < 1e-9;
        let edge = |i: usize| {
            let x = i as f64 - 0.5;
            if exact {
                lo + x / inv.round()
            } else {
                lo + x * width
            }
        };
        Self::new((0..=count).map(edge).collect())
    }

    /// Width-`width` bins centred on multiples of `width` over `[0, ⌈α_max⌉]`,
    /// `α_max = max_j -log2 min(p_j, 1 - p_j)` over the first `n` levels.
    pub fn default_for(seq: &WeightSequence, n: u64, width: f64) -> Result<Self> {
        let w = seq.weights(n)?;
        let amax = w.iter().map(|&p| -p.min(1.0 - p).log2()).fold(0.0, f64::max);
        Self::centred(0.0, amax.ceil(), width)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Splits every bin at its midpoint.
    pub fn refine(&self) -> Self {
        let mut e = Vec::with_capacity(2 * self.edges.len() - 1);
        for w in self.edges.windows(2) {
            e.push(w[0]);
            e.push(0.5 * (w[0] + w[1]));
        }
        e.push(*self.edges.last().expect("non-empty"));
        AlphaBins { edges: e }
    }

    /// Bin containing `alpha`, if any.
    pub fn locate(&self, alpha: f64) -> Option<usize> {
        let last = *self.edges.last()?;
        if alpha < self.edges[0] || alpha > last {
            return None;
        }
        let i = self.edges.partition_point(|&e| e <= alpha);
        Some((i.max(1) - 1).min(self.len() - 1))
    }

    /// Whether `[lo, hi]` meets an interior edge or the outer boundary.
    fn straddles(&self, lo: f64, hi: f64) -> bool {
        let i = self.edges.partition_point(|&e| e < lo);
        i < self.edges.len() && self.edges[i] <= hi
    }
}

fn biguint_str<S: Serializer>(v: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_str_radix(10))
}

/// `log2` of a positive big integer to double precision.
pub fn log2_biguint(v: &BigUint) -> f64 {
    let bits = v.bits();
    if bits <= 64 {
        return (v.to_u64().expect("fits in 64 bits") as f64).log2();
    }
    let shift = bits - 64;
    let top = (v >> shift).to_u64().expect("64 leading bits");
    shift as f64 + (top as f64).log2()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoarseBin {
    pub low: f64,
    pub high: f64,
    #[serde(serialize_with = "biguint_str")]
    pub count: BigUint,
    /// `log2(count) / n`; `None` for empty bins.
    pub f_value: Option<f64>,
    /// Cylinders whose `α_n` cannot be placed with certainty (within rounding
    /// of an edge for exact counting, within the accumulated cell error for the
    /// fallback).
    #[serde(serialize_with = "biguint_str")]
    pub spill: BigUint,
}

impl CoarseBin {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.low + self.high)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CountingMethod {
    Exact,
    Convolution,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoarseSpectrum {
    pub depth: u64,
    pub method: CountingMethod,
    /// Attainable range of `α_n` at this depth.
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Bound on the `α_n` error of the fallback (zero for exact counting).
    pub alpha_error: f64,
    pub bins: Vec<CoarseBin>,
}

impl CoarseSpectrum {
    pub fn total(&self) -> BigUint {
        self.bins.iter().map(|b| &b.count).sum()
    }

    pub fn occupied(&self) -> impl Iterator<Item = &CoarseBin> {
        self.bins.iter().filter(|b| !b.count.is_zero())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoarseOptions {
    pub exact_limit: u64,
    pub resolution: f64,
}

impl Default for CoarseOptions {
    fn default() -> Self {
        CoarseOptions { exact_limit: EXACT_LIMIT, resolution: DP_RESOLUTION }
    }
}

/// One group of levels sharing `min(p, 1-p) = p`.
struct Group {
    m: usize,
    /// `-log2` mass contributed by `k` light-branch choices, `k = 0..=m`.
    cost: Vec<f64>,
    binom: Vec<BigUint>,
}

fn binomial_row(m: usize) -> Vec<BigUint> {
    let mut row = Vec::with_capacity(m + 1);
    let mut c = BigUint::one();
    row.push(c.clone());
    for k in 1..=m {
        c = c * BigUint::from(m - k + 1) / BigUint::from(k);
        row.push(c.clone());
    }
    row
}

fn groups(seq: &WeightSequence, n: u64) -> Result<Vec<Group>> {
    let mut order: Vec<u64> = Vec::new();
    let mut mult: HashMap<u64, usize> = HashMap::new();
    for p in seq.weights(n)? {
        let key = p.min(1.0 - p).to_bits();
        *mult.entry(key).or_insert_with(|| {
            order.push(key);
            0
        }) += 1;
    }
    Ok(order
        .into_iter()
        .map(|key| {
            let p = f64::from_bits(key);
            let m = mult[&key];
            let (a, b) = (-p.log2(), -(1.0 - p).log2());
            Group {
                m,
                cost: (0..=m).map(|k| k as f64 * a + (m - k) as f64 * b).collect(),
                binom: binomial_row(m),
            }
        })
        .collect())
}

/// Exact coarse spectrum of `seq` at depth `n`.
pub fn coarse_spectrum(seq: &WeightSequence, n: u64, bins: &AlphaBins) -> Result<CoarseSpectrum> {
    coarse_spectrum_with(seq, n, bins, CoarseOptions::default())
}

pub fn coarse_spectrum_with(seq: &WeightSequence, n: u64, bins: &AlphaBins, opts: CoarseOptions) -> Result<CoarseSpectrum> {
    if n == 0 {
        return Err(Error::Argument("coarse spectrum depth must be >= 1".into()));
    }
    if !(opts.resolution > 0.0) {
        return Err(Error::Argument("convolution resolution must be positive".into()));
    }
    let gs = groups(seq, n)?;
    let nf = n as f64;
    let alpha_min = gs.iter().map(|g| g.cost[0]).sum::<f64>() / nf;
    let alpha_max = gs.iter().map(|g| g.cost[g.m]).sum::<f64>() / nf;
    let (lo, hi) = (bins.edges[0], *bins.edges.last().expect("non-empty"));
    if alpha_min < lo - EDGE_TOL || alpha_max > hi + EDGE_TOL {
        return Err(Error::Coverage { alpha_min, alpha_max, bins_low: lo, bins_high: hi });
    }
    let vectors = gs.iter().try_fold(1u64, |acc, g| acc.checked_mul(g.m as u64 + 1));
    let clamp = |a: f64| a.clamp(lo, hi);
    let nb = bins.len();
    let (counts, spill, method, alpha_error) = match vectors {
        Some(v) if v <= opts.exact_limit => {
            let (c, s) = exact_counts(&gs, nf, bins, clamp);
            (c, s, CountingMethod::Exact, 0.0)
        }
        _ => {
            let err = gs.len() as f64 * opts.resolution / 2.0 / nf;
            let (c, s) = convolution_counts(&gs, nf, bins, opts.resolution, err, clamp);
            (c, s, CountingMethod::Convolution, err)
        }
    };
    debug_assert_eq!(counts.len(), nb);
    let out = (0..nb)
        .map(|i| {
            let count = counts[i].clone();
            let f_value = (!count.is_zero()).then(|| log2_biguint(&count) / nf);
            CoarseBin { low: bins.edges[i], high: bins.edges[i + 1], count, f_value, spill: spill[i].clone() }
        })
        .collect();
    Ok(CoarseSpectrum { depth: n, method, alpha_min, alpha_max, alpha_error, bins: out })
}

type Tally = (Vec<BigUint>, Vec<BigUint>);

fn merge(mut a: Tally, b: Tally) -> Tally {
    for (x, y) in a.0.iter_mut().zip(b.0) {
        *x += y;
    }
    for (x, y) in a.1.iter_mut().zip(b.1) {
        *x += y;
    }
    a
}

fn exact_counts(gs: &[Group], nf: f64, bins: &AlphaBins, clamp: impl Fn(f64) -> f64 + Sync) -> Tally {
    let nb = bins.len();
    let empty = || (vec![BigUint::zero(); nb], vec![BigUint::zero(); nb]);
    let (first, rest) = gs.split_first().expect("depth >= 1 gives a group");
    (0..=first.m)
        .into_par_iter()
        .map(|k0| {
            let mut t = empty();
            let mut ks = vec![0usize; rest.len()];
            loop {
                let mut cost = first.cost[k0];
                let mut mult = first.binom[k0].clone();
                for (g, &k) in rest.iter().zip(&ks) {
                    cost += g.cost[k];
                    mult *= &g.binom[k];
                }
                let a = clamp(cost / nf);
                let i = bins.locate(a).expect("coverage checked");
                if bins.straddles(a - EDGE_TOL, a + EDGE_TOL) {
                    t.1[i] += &mult;
                }
                t.0[i] += mult;
                // odometer over the remaining groups
                let mut d = 0;
                while d < ks.len() {
                    ks[d] += 1;
                    if ks[d] <= rest[d].m {
                        break;
                    }
                    ks[d] = 0;
                    d += 1;
                }
                if d == ks.len() {
                    break;
                }
            }
            t
        })
        .reduce(empty, merge)
}

fn convolution_counts(
    gs: &[Group],
    nf: f64,
    bins: &AlphaBins,
    h: f64,
    err: f64,
    clamp: impl Fn(f64) -> f64 + Sync,
) -> Tally {
    let nb = bins.len();
    let mut cells: HashMap<i64, BigUint> = HashMap::from([(0, BigUint::one())]);
    for g in gs {
        let shift: Vec<i64> = g.cost.iter().map(|c| (c / h).round() as i64).collect();
        let mut next: HashMap<i64, BigUint> = HashMap::with_capacity(cells.len() * 2);
        for (&cell, cnt) in &cells {
            for k in 0..=g.m {
                *next.entry(cell + shift[k]).or_default() += cnt * &g.binom[k];
            }
        }
        cells = next;
    }
    let mut keys: Vec<i64> = cells.keys().copied().collect();
    keys.sort_unstable();
    let mut t = (vec![BigUint::zero(); nb], vec![BigUint::zero(); nb]);
    for key in keys {
        let cnt = cells.remove(&key).expect("present");
        let a = clamp(key as f64 * h / nf);
        let i = bins.locate(a).expect("coverage checked");
        if bins.straddles(a - err - EDGE_TOL, a + err + EDGE_TOL) {
            t.1[i] += &cnt;
        }
        t.0[i] += cnt;
    }
    t
}

/// One-sided deviations of `f_n` from `τ*` at the occupied bin midpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FormalismGap {
    /// `sup (f_n - τ*)`.
    pub upper_excess: f64,
    pub upper_at: f64,
    /// `sup (τ* - f_n)`.
    pub deficit: f64,
    pub deficit_at: f64,
    pub max_abs: f64,
    pub bins_compared: usize,
}

pub fn formalism_gap(cs: &CoarseSpectrum, lg: &LegendreGrid) -> Result<FormalismGap> {
    let mut g = FormalismGap {
        upper_excess: f64::NEG_INFINITY,
        upper_at: f64::NAN,
        deficit: f64::NEG_INFINITY,
        deficit_at: f64::NAN,
        max_abs: 0.0,
        bins_compared: 0,
    };
    for b in cs.occupied() {
        let a = b.midpoint();
        let (Some(ts), Some(f)) = (lg.interpolate(a), b.f_value) else { continue };
        if f - ts > g.upper_excess {
            g.upper_excess = f - ts;
            g.upper_at = a;
        }
        if ts - f > g.deficit {
            g.deficit = ts - f;
            g.deficit_at = a;
        }
        g.max_abs = g.max_abs.max((f - ts).abs());
        g.bins_compared += 1;
    }
    if g.bins_compared == 0 {
        return Err(Error::Argument("coarse spectrum and alpha grid do not overlap".into()));
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::log2_mass;

    fn brute(seq: &WeightSequence, n: u64, bins: &AlphaBins) -> Vec<u64> {
        let w = seq.weights(n).unwrap();
        let mut c = vec![0u64; bins.len()];
        for x in 0u64..(1 << n) {
            let bits: Vec<u8> = (0..n).map(|j| ((x >> j) & 1) as u8).collect();
            let a = -log2_mass(&w, &bits) / n as f64;
            c[bins.locate(a).unwrap()] += 1;
        }
        c
    }

    #[test]
    fn uniform_single_bin() {
        let s = WeightSequence::constant(0.5).unwrap();
        let bins = AlphaBins::default_for(&s, 10, DEFAULT_WIDTH).unwrap();
        let cs = coarse_spectrum(&s, 10, &bins).unwrap();
        let occ: Vec<_> = cs.occupied().collect();
        assert_eq!(occ.len(), 1);
        assert_eq!(occ[0].count, BigUint::from(1024u32));
        assert!((occ[0].midpoint() - 1.0).abs() < 1e-12);
        assert_eq!(occ[0].f_value, Some(1.0));
    }

    #[test]
    fn binomial_quarter() {
        let s = WeightSequence::constant(0.25).unwrap();
        let bins = AlphaBins::default_for(&s, 10, DEFAULT_WIDTH).unwrap();
        let cs = coarse_spectrum(&s, 10, &bins).unwrap();
        assert_eq!(cs.occupied().count(), 11);
        // k levels take weight 3/4
        let a5 = (2.0 * 5.0 - 5.0 * (0.75f64).log2()) / 10.0;
        let b = &cs.bins[bins.locate(a5).unwrap()];
        assert_eq!(b.count, BigUint::from(252u32));
        assert!((b.f_value.unwrap() - 252f64.log2() / 10.0).abs() < 1e-15);
        assert!((b.f_value.unwrap() - 0.7978).abs() < 1e-4);
        assert_eq!(cs.total(), BigUint::one() << 10);
    }

    #[test]
    fn matches_brute_force() {
        for (seq, n) in [
            (WeightSequence::periodic(&[0.25, 0.5]).unwrap(), 12),
            (WeightSequence::explicit(&[0.1, 0.7, 0.3, 0.9, 0.45, 0.2, 0.6, 0.35, 0.15, 0.55, 0.8]).unwrap(), 11),
            (WeightSequence::constant(0.3).unwrap(), 12),
        ] {
            let bins = AlphaBins::default_for(&seq, n, DEFAULT_WIDTH).unwrap();
            let cs = coarse_spectrum(&seq, n, &bins).unwrap();
            assert!(cs.bins.iter().all(|b| b.spill.is_zero()));
            let exact: Vec<u64> = cs.bins.iter().map(|b| b.count.to_u64().unwrap()).collect();
            assert_eq!(exact, brute(&seq, n, &bins));
        }
    }

    #[test]
    fn convolution_agrees_up_to_spill() {
        let seq = WeightSequence::periodic(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        let n = 40;
        let bins = AlphaBins::default_for(&seq, n, DEFAULT_WIDTH).unwrap();
        let exact = coarse_spectrum(&seq, n, &bins).unwrap();
        let dp = coarse_spectrum_with(&seq, n, &bins, CoarseOptions { exact_limit: 1, ..Default::default() }).unwrap();
        assert_eq!(dp.method, CountingMethod::Convolution);
        assert_eq!(dp.total(), BigUint::one() << 40);
        for i in 0..bins.len() {
            let (a, b) = (&exact.bins[i].count, &dp.bins[i].count);
            let diff = if a > b { a - b } else { b - a };
            let nearby: BigUint = (i.saturating_sub(1)..(i + 2).min(bins.len())).map(|j| dp.bins[j].spill.clone()).sum();
            assert!(diff <= nearby, "bin {i}: {a} vs {b}, spill {nearby}");
        }
    }

    #[test]
    fn coverage_error() {
        let s = WeightSequence::constant(0.25).unwrap();
        let bins = AlphaBins::centred(0.0, 1.0, 0.01).unwrap();
        match coarse_spectrum(&s, 8, &bins) {
            Err(Error::Coverage { alpha_max, .. }) => assert!((alpha_max - 2.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        assert!(coarse_spectrum(&s, 0, &bins).is_err());
    }

    #[test]
    fn big_log2() {
        let v = BigUint::one() << 300u32;
        assert_eq!(log2_biguint(&v), 300.0);
        let w = BigUint::from(3u32) * (BigUint::one() << 1000u32);
        assert!((log2_biguint(&w) - (1000.0 + 3f64.log2())).abs() < 1e-12);
        assert_eq!(log2_biguint(&BigUint::from(1024u32)), 10.0);
    }

    #[test]
    fn refinement_never_raises_f() {
        let s = WeightSequence::periodic(&[0.2, 0.35, 0.45]).unwrap();
        let bins = AlphaBins::default_for(&s, 30, 0.02).unwrap();
        let fine = bins.refine();
        let a = coarse_spectrum(&s, 30, &bins).unwrap();
        let b = coarse_spectrum(&s, 30, &fine).unwrap();
        for (i, child) in b.bins.iter().enumerate() {
            let parent = &a.bins[i / 2];
            if let Some(f) = child.f_value {
                assert!(f <= parent.f_value.unwrap());
            }
        }
    }

    #[test]
    fn gap_uniform_zero() {
        use crate::spectrum::{legendre_transform, uniform_grid, TauGrid, tau_single};
        let s = WeightSequence::constant(0.5).unwrap();
        let bins = AlphaBins::default_for(&s, 10, DEFAULT_WIDTH).unwrap();
        let cs = coarse_spectrum(&s, 10, &bins).unwrap();
        let qs = uniform_grid(-5.0, 5.0, 0.01).unwrap();
        let tau = TauGrid::from_fn(&qs, |q| tau_single(0.5, q)).unwrap();
        let lg = legendre_transform(&tau, &[0.9, 1.0, 1.1]).unwrap();
        let g = formalism_gap(&cs, &lg).unwrap();
        assert!(g.max_abs.abs() < 1e-12);
        let far = legendre_transform(&tau, &[3.0, 4.0]).unwrap();
        assert!(formalism_gap(&cs, &far).is_err());
    }
}
