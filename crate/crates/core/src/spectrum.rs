//! L^q-spectra of inhomogeneous Bernoulli products.
//!
//! For a single weight, `τ(p, q) = log2(p^q + (1-p)^q)`. The depth-`n`
//! spectrum of a product is the Cesàro average `τ_n(q) = (1/n) Σ_{i<=n} τ(p_i, q)`.
//! The limsup spectrum is approximated by a running sup of `τ_n` over a
//! window of depths, and every grid records the window and the depth that
//! produced each value.

use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::{LevelProfile, WeightSequence};

/// Log-sum-exp weights `(w0, w1) = (p^q, (1-p)^q) / (p^q + (1-p)^q)` and
/// `ln(p^q + (1-p)^q)`.
#[inline]
fn split(p: f64, q: f64) -> (f64, f64, f64) {
    let a = q * p.ln();
    let b = q * (1.0 - p).ln();
    let m = a.max(b);
    let ea = (a - m).exp();
    let eb = (b - m).exp();
    let s = ea + eb;
    (ea / s, eb / s, m + s.ln())
}

/// `τ(p, q) = log2(p^q + (1-p)^q)`, overflow-free for large `|q|`.
#[inline]
pub fn tau_single(p: f64, q: f64) -> f64 {
    split(p, q).2 / LN_2
}

/// `∂τ/∂q = (p^q ln p + (1-p)^q ln(1-p)) / ((p^q + (1-p)^q) ln 2)`.
#[inline]
pub fn tau_derivative(p: f64, q: f64) -> f64 {
    let (w0, w1, _) = split(p, q);
    (w0 * p.ln() + w1 * (1.0 - p).ln()) / LN_2
}

/// `∂²τ/∂q² = p^q (1-p)^q (ln(p/(1-p)))² / ((p^q + (1-p)^q)² ln 2)`.
#[inline]
pub fn tau_second_derivative(p: f64, q: f64) -> f64 {
    let (w0, w1, _) = split(p, q);
    let l = (p / (1.0 - p)).ln();
    w0 * w1 * l * l / LN_2
}

/// `[4p(1-p)]^{q0} (ln min(p, 1-p))² / ln 2`, a bound on the second derivative
/// for every `q >= q0 > 0`.
pub fn second_derivative_bound(p: f64, q0: f64) -> f64 {
    let l = p.min(1.0 - p).ln();
    (4.0 * p * (1.0 - p)).powf(q0) * l * l / LN_2
}

/// Checks the second-derivative bound at every `q >= q0` of `qs`.
pub fn bound_check(p: f64, q0: f64, qs: &[f64]) -> bool {
    let bound = second_derivative_bound(p, q0);
    qs.iter().filter(|&&q| q >= q0).all(|&q| tau_second_derivative(p, q) <= bound)
}

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
}

/// `τ_n(q)` for the first `n` weights of `seq`, grouped by distinct value.
pub fn tau_partial(seq: &WeightSequence, n: u64, q: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Argument("depth must be >= 1".into()));
    }
    let prof = LevelProfile::of(seq, n)?;
    Ok(grouped_average(&prof, n as usize, |p| tau_single(p, q)))
}

/// Cesàro average of the per-level derivative, `τ_n'(q)`.
pub fn tau_partial_derivative(seq: &WeightSequence, n: u64, q: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Argument("depth must be >= 1".into()));
    }
    let prof = LevelProfile::of(seq, n)?;
    Ok(grouped_average(&prof, n as usize, |p| tau_derivative(p, q)))
}

/// `Σ_v (count_v / n) f(v)` over the first `n` levels.
pub fn grouped_average(prof: &LevelProfile, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    prof.counts(n)
        .iter()
        .zip(&prof.values)
        .filter(|(&c, _)| c > 0)
        .map(|(&c, &v)| c as f64 / n as f64 * f(v))
        .sum()
}

/// Running Cesàro averages `(1/n) Σ_{i<=n} f(p_i)` for every `n = 1..=depth`.
pub fn cesaro_series(prof: &LevelProfile, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let table: Vec<f64> = prof.values.iter().map(|&v| f(v)).collect();
    let mut sum = 0.0;
    prof.index
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            sum += table[k as usize];
            sum / (i + 1) as f64
        })
        .collect()
}

/// Depth window `[start, end]` used for liminf/limsup surrogates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: u64,
    pub end: u64,
}

impl Window {
    pub fn new(start: u64, end: u64) -> Result<Self> {
        if start == 0 || start > end {
            return Err(Error::Argument(format!("invalid depth window [{start}, {end}]")));
        }
        Ok(Window { start, end })
    }

    /// `[ceil(N/2), N]`.
    pub fn half(horizon: u64) -> Result<Self> {
        Self::new(horizon.div_ceil(2).max(1), horizon)
    }

    /// `[ceil(frac N), N]`.
    pub fn fraction(horizon: u64, frac: f64) -> Result<Self> {
        if !(frac > 0.0 && frac <= 1.0) {
            return Err(Error::Argument(format!("window fraction {frac} outside (0, 1]")));
        }
        Self::new(((horizon as f64 * frac).ceil() as u64).max(1), horizon)
    }
}

/// Grid `lo, lo + step, ..., <= hi`. When `1/step` is an integer the points
/// are exact decimals `k / (1/step)`.
pub fn uniform_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite() && step.is_finite() && step > 0.0 && hi >= lo) {
        return Err(Error::Argument(format!("invalid grid [{lo}, {hi}] step {step}")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    let inv = 1.0 / step;
    let denom = inv.round();
    let exact = denom >= 1.0 && (inv - denom).abs() < 1e-9 * denom;
    Ok((0..count)
        .map(|i| {
            if exact {
                ((lo * denom).round() + i as f64) / denom
            } else {
                lo + i as f64 * step
            }
        })
        .collect())
}

/// One point of a [`TauGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauPoint {
    pub q: f64,
    pub tau: f64,
    /// Backward secant `(τ_i - τ_{i-1}) / (q_i - q_{i-1})`.
    pub slope_left: Option<f64>,
    /// Forward secant `(τ_{i+1} - τ_i) / (q_{i+1} - q_i)`.
    pub slope_right: Option<f64>,
    /// Depth whose `τ_n` realized this value; `None` for analytic grids.
    pub source_n: Option<u64>,
}

/// Sampled L^q-spectrum with one-sided secant slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauGrid {
    pub points: Vec<TauPoint>,
    /// Depth window of the running-sup surrogate, when built from a measure.
    pub window: Option<Window>,
}

impl TauGrid {
    pub fn from_values(qs: &[f64], taus: &[f64], sources: Option<&[u64]>, window: Option<Window>) -> Result<Self> {
        if qs.is_empty() || qs.len() != taus.len() {
            return Err(Error::Argument("q-grid and tau values must be non-empty and aligned".into()));
        }
        if qs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Argument("q-grid must be strictly increasing".into()));
        }
        let m = qs.len();
        let points = (0..m)
            .map(|i| TauPoint {
                q: qs[i],
                tau: taus[i],
                slope_left: (i > 0).then(|| (taus[i] - taus[i - 1]) / (qs[i] - qs[i - 1])),
                slope_right: (i + 1 < m).then(|| (taus[i + 1] - taus[i]) / (qs[i + 1] - qs[i])),
                source_n: sources.map(|s| s[i]),
            })
            .collect();
        Ok(TauGrid { points, window })
    }

    /// Samples an analytic spectrum.
    pub fn from_fn(qs: &[f64], f: impl Fn(f64) -> f64 + Sync) -> Result<Self> {
        let taus: Vec<f64> = qs.par_iter().map(|&q| f(q)).collect();
        Self::from_values(qs, &taus, None, None)
    }

    /// Running-sup surrogate `max_{n ∈ window} τ_n(q)` of the limsup spectrum.
    pub fn from_sequence(seq: &WeightSequence, qs: &[f64], window: Window) -> Result<Self> {
        let prof = LevelProfile::of(seq, window.end)?;
        Self::from_profile(&prof, qs, window)
    }

    pub fn from_profile(prof: &LevelProfile, qs: &[f64], window: Window) -> Result<Self> {
        if (prof.depth() as u64) < window.end {
            return Err(Error::Argument("profile shallower than window".into()));
        }
        let (taus, sources): (Vec<f64>, Vec<u64>) =
            qs.par_iter().map(|&q| running_sup(prof, window, |p| tau_single(p, q))).unzip();
        Self::from_values(qs, &taus, Some(&sources), Some(window))
    }

    pub fn qs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.q).collect()
    }

    pub fn taus(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.tau).collect()
    }

    /// Grid index of `q` (within `1e-9`).
    pub fn index_of(&self, q: f64) -> Option<usize> {
        self.points.iter().position(|p| (p.q - q).abs() <= 1e-9)
    }

    /// Largest grid spacing.
    pub fn max_step(&self) -> f64 {
        self.points.windows(2).map(|w| w[1].q - w[0].q).fold(0.0, f64::max)
    }

    /// Smallest normalized second difference; convex grids give values `>= 0`.
    pub fn min_second_difference(&self) -> f64 {
        self.points
            .iter()
            .filter_map(|p| Some(p.slope_right? - p.slope_left?))
            .fold(f64::INFINITY, f64::min)
    }
}

/// `(max, argmax)` of the Cesàro averages of `f(p_i)` over depths in `window`
/// (first maximizer on ties).
pub fn running_sup(prof: &LevelProfile, window: Window, f: impl Fn(f64) -> f64) -> (f64, u64) {
    let table: Vec<f64> = prof.values.iter().map(|&v| f(v)).collect();
    let mut sum = 0.0;
    let mut best = (f64::NEG_INFINITY, window.start);
    for (i, &k) in prof.index[..window.end as usize].iter().enumerate() {
        sum += table[k as usize];
        let n = i as u64 + 1;
        if n >= window.start {
            let v = sum / n as f64;
            if v > best.0 {
                best = (v, n);
            }
        }
    }
    best
}

/// Where the grid minimum of `αq + τ(q)` was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MinimizerFlag {
    Interior,
    /// Minimizer at a grid end; the true infimum may lie outside the q-range.
    Boundary,
    /// Several grid points attain the minimum (affine τ).
    Flat,
}

impl MinimizerFlag {
    pub fn code(self) -> u8 {
        match self {
            MinimizerFlag::Interior => 0,
            MinimizerFlag::Boundary => 1,
            MinimizerFlag::Flat => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegendrePoint {
    pub alpha: f64,
    pub tau_star: f64,
    pub argmin_q: f64,
    pub flag: MinimizerFlag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegendreGrid {
    pub points: Vec<LegendrePoint>,
}

const FLAT_TOL: f64 = 1e-12;

/// Grid infimum `τ*(α) = min_i (α q_i + τ(q_i))`.
pub fn legendre_at(tau: &TauGrid, alpha: f64) -> Result<LegendrePoint> {
    if tau.points.is_empty() {
        return Err(Error::Argument("empty tau grid".into()));
    }
    let vals: Vec<f64> = tau.points.iter().map(|p| alpha * p.q + p.tau).collect();
    let (imin, &vmin) = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let ties: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] - vmin <= FLAT_TOL).collect();
    let last = vals.len() - 1;
    let (flag, at) = if ties.len() > 1 {
        (MinimizerFlag::Flat, ties[ties.len() / 2])
    } else if imin == 0 || imin == last {
        (MinimizerFlag::Boundary, imin)
    } else {
        (MinimizerFlag::Interior, imin)
    };
    Ok(LegendrePoint { alpha, tau_star: vmin, argmin_q: tau.points[at].q, flag })
}

pub fn legendre_transform(tau: &TauGrid, alphas: &[f64]) -> Result<LegendreGrid> {
    if tau.points.is_empty() || alphas.is_empty() {
        return Err(Error::Argument("legendre transform needs non-empty q and alpha grids".into()));
    }
    let points = alphas.par_iter().map(|&a| legendre_at(tau, a)).collect::<Result<Vec<_>>>()?;
    Ok(LegendreGrid { points })
}

impl LegendreGrid {
    /// Piecewise-linear interpolation of `τ*`; `None` outside the α-grid.
    pub fn interpolate(&self, alpha: f64) -> Option<f64> {
        let pts = &self.points;
        let first = pts.first()?;
        let last = pts.last()?;
        if alpha < first.alpha - 1e-12 || alpha > last.alpha + 1e-12 {
            return None;
        }
        let i = pts.partition_point(|p| p.alpha <= alpha);
        if i == 0 {
            return Some(first.tau_star);
        }
        if i == pts.len() {
            return Some(last.tau_star);
        }
        let (a, b) = (&pts[i - 1], &pts[i]);
        let t = (alpha - a.alpha) / (b.alpha - a.alpha);
        Some(a.tau_star + t * (b.tau_star - a.tau_star))
    }

    /// Largest normalized second difference; concave grids give values `<= 0`.
    pub fn max_second_difference(&self) -> f64 {
        self.points
            .windows(3)
            .map(|w| {
                let s1 = (w[1].tau_star - w[0].tau_star) / (w[1].alpha - w[0].alpha);
                let s2 = (w[2].tau_star - w[1].tau_star) / (w[2].alpha - w[1].alpha);
                s2 - s1
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionPoint {
    pub q: f64,
    pub d: f64,
}

/// `D_q = -τ(q) / (q - 1)`, and `D_1 = -τ'(1)` from the one-sided secants.
///
/// The sign makes `D_q ∈ (0, 1]` for these measures under the `τ(0) = 1`,
/// decreasing-τ convention.
pub fn generalized_dimensions(tau: &TauGrid) -> Vec<DimensionPoint> {
    tau.points
        .iter()
        .map(|p| {
            let d = if (p.q - 1.0).abs() < 1e-12 {
                match (p.slope_left, p.slope_right) {
                    (Some(l), Some(r)) => -(l + r) / 2.0,
                    (Some(s), None) | (None, Some(s)) => -s,
                    (None, None) => f64::NAN,
                }
            } else {
                -p.tau / (p.q - 1.0)
            };
            DimensionPoint { q: p.q, d }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaximizingIndex {
    pub n: u64,
    pub tau: f64,
    pub slope: f64,
}

/// Depths `n <= horizon` with `τ_n(q) >= max_{m<=horizon} τ_m(q) - slack`,
/// each with the Cesàro derivative `τ_n'(q)`.
pub fn maximizing_subsequence(seq: &WeightSequence, q: f64, horizon: u64, slack: f64) -> Result<Vec<MaximizingIndex>> {
    if horizon == 0 || !(slack > 0.0) {
        return Err(Error::Argument("horizon must be >= 1 and slack > 0".into()));
    }
    let prof = LevelProfile::of(seq, horizon)?;
    let taus = cesaro_series(&prof, |p| tau_single(p, q));
    let slopes = cesaro_series(&prof, |p| tau_derivative(p, q));
    let max = taus.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(taus
        .iter()
        .zip(&slopes)
        .enumerate()
        .filter(|(_, (&t, _))| t >= max - slack)
        .map(|(i, (&tau, &slope))| MaximizingIndex { n: i as u64 + 1, tau, slope })
        .collect())
}
