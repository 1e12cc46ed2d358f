//! Gibbs transforms of Bernoulli products, entropy dimensions, the computable
//! sides of the level-set dimension bounds, and Monte Carlo local dimensions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::{legendre_at, tau_derivative, tau_single, TauGrid, Window};
use crate::weights::{LevelProfile, WeightSequence};

/// Weight of the `q`-tilted measure at a level of weight `p`:
/// `p^q / (p^q + (1-p)^q)`.
pub fn tilted_weight(p: f64, q: f64) -> f64 {
    let a = p.powf(q);
    let b = (1.0 - p).powf(q);
    let s = a + b;
    if a.is_normal() && b.is_normal() && s.is_finite() {
        a / s
    } else {
        1.0 / (1.0 + (q * ((1.0 - p) / p).ln()).exp())
    }
}

/// The Gibbs measure `ν_q` with `ν(I) = μ(I)^q 2^{-n τ_{μ,n}(q)}`, itself a
/// Bernoulli product with the tilted weights, level structure preserved.
pub fn gibbs_transform(seq: &WeightSequence, q: f64) -> Result<WeightSequence> {
    if !q.is_finite() {
        return Err(Error::Argument(format!("gibbs exponent {q} is not finite")));
    }
    if q == 1.0 {
        return Ok(seq.clone());
    }
    if q == 0.0 {
        return WeightSequence::constant(0.5);
    }
    seq.map_values(&|p| Ok(tilted_weight(p, q)))
}

/// `sup_s |τ_{ν,n}(s) - (τ_{μ,n}(qs) - s τ_{μ,n}(q))|` over `s_grid`.
pub fn gibbs_tau_identity_check(seq: &WeightSequence, q: f64, s_grid: &[f64], n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Argument("depth must be >= 1".into()));
    }
    let nu = gibbs_transform(seq, q)?;
    let mu_prof = LevelProfile::of(seq, n)?;
    let nu_prof = LevelProfile::of(&nu, n)?;
    let avg = |prof: &LevelProfile, f: &dyn Fn(f64) -> f64| crate::spectrum::grouped_average(prof, n as usize, f);
    let tau_mu_q = avg(&mu_prof, &|p| tau_single(p, q));
    Ok(s_grid
        .iter()
        .map(|&s| {
            let lhs = avg(&nu_prof, &|p| tau_single(p, s));
            let rhs = avg(&mu_prof, &|p| tau_single(p, q * s)) - s * tau_mu_q;
            (lhs - rhs).abs()
        })
        .fold(0.0, f64::max))
}

/// Window extrema of the depth-`n` entropy `-τ_n'(1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    /// Liminf surrogate: lower dimension of the measure.
    pub h_lower: f64,
    /// Limsup surrogate: upper (packing) dimension of the measure.
    pub h_upper: f64,
    pub horizon: u64,
    pub window: Window,
    pub argmin_n: u64,
    pub argmax_n: u64,
}

fn window_extrema(prof: &LevelProfile, window: Window, f: impl Fn(f64) -> f64) -> ((f64, u64), (f64, u64)) {
    let table: Vec<f64> = prof.values.iter().map(|&v| f(v)).collect();
    let mut sum = 0.0;
    let mut lo = (f64::INFINITY, window.start);
    let mut hi = (f64::NEG_INFINITY, window.start);
    for (i, &k) in prof.index[..window.end as usize].iter().enumerate() {
        sum += table[k as usize];
        let n = i as u64 + 1;
        if n >= window.start {
            let v = sum / n as f64;
            if v < lo.0 {
                lo = (v, n);
            }
            if v > hi.0 {
                hi = (v, n);
            }
        }
    }
    (lo, hi)
}

/// `min` and `max` over the window of `-τ_n'(1) = (1/n) Σ H(p_i)`.
pub fn entropy_dimensions(seq: &WeightSequence, window: Window) -> Result<DimensionReport> {
    if window.end < 2 {
        return Err(Error::Argument("entropy dimensions need a horizon >= 2".into()));
    }
    let prof = LevelProfile::of(seq, window.end)?;
    let ((h_lower, argmin_n), (h_upper, argmax_n)) = window_extrema(&prof, window, |p| -tau_derivative(p, 1.0));
    Ok(DimensionReport { h_lower, h_upper, horizon: window.end, window, argmin_n, argmax_n })
}

/// Computable lower and upper sides of the level-set dimension bounds at `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub q: f64,
    pub horizon: u64,
    pub window: Window,
    /// `min_{n ∈ window} (-q τ_n'(q) + τ_n(q))`.
    pub lower: f64,
    pub lower_at_n: u64,
    /// The same quantity restricted to depths where `τ_n(q)` is within
    /// `maximizer_slack` of its window maximum.
    pub lower_along_maximizers: f64,
    pub maximizer_slack: f64,
    /// `-τ'(q+)` and `τ*(-τ'(q+))` from the forward secant.
    pub alpha_right: f64,
    pub upper_right: f64,
    /// `-τ'(q-)` and `τ*(-τ'(q-))` from the backward secant.
    pub alpha_left: f64,
    pub upper_left: f64,
    pub upper: f64,
    /// Largest spacing of the q-grid; bounds the secant error.
    pub grid_step: f64,
}

pub const MAXIMIZER_SLACK: f64 = 1e-6;

pub fn theorem1_bounds(seq: &WeightSequence, q: f64, window: Window, tau: &TauGrid) -> Result<BoundsReport> {
    let i = tau
        .index_of(q)
        .ok_or_else(|| Error::Argument(format!("q = {q} is not a grid point")))?;
    let pt = tau.points[i];
    let (sl, sr) = match (pt.slope_left, pt.slope_right) {
        (Some(l), Some(r)) => (l, r),
        _ => return Err(Error::Argument(format!("q = {q} is not an interior grid point"))),
    };
    let prof = LevelProfile::of(seq, window.end)?;
    let g = |p: f64| -q * tau_derivative(p, q) + tau_single(p, q);
    let ((lower, lower_at_n), _) = window_extrema(&prof, window, g);

    let table_tau: Vec<f64> = prof.values.iter().map(|&v| tau_single(v, q)).collect();
    let table_g: Vec<f64> = prof.values.iter().map(|&v| g(v)).collect();
    let (mut st, mut sg) = (0.0, 0.0);
    let mut series = Vec::with_capacity((window.end - window.start + 1) as usize);
    for (j, &k) in prof.index[..window.end as usize].iter().enumerate() {
        st += table_tau[k as usize];
        sg += table_g[k as usize];
        let n = j as u64 + 1;
        if n >= window.start {
            series.push((st / n as f64, sg / n as f64));
        }
    }
    let tmax = series.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let lower_along_maximizers = series
        .iter()
        .filter(|s| s.0 >= tmax - MAXIMIZER_SLACK)
        .map(|s| s.1)
        .fold(f64::INFINITY, f64::min);

    let upper_right = legendre_at(tau, -sr)?.tau_star;
    let upper_left = legendre_at(tau, -sl)?.tau_star;
    Ok(BoundsReport {
        q,
        horizon: window.end,
        window,
        lower,
        lower_at_n,
        lower_along_maximizers,
        maximizer_slack: MAXIMIZER_SLACK,
        alpha_right: -sr,
        upper_right,
        alpha_left: -sl,
        upper_left,
        upper: upper_right.min(upper_left),
        grid_step: tau.max_step(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub low: f64,
    pub high: f64,
    pub count: u64,
}

/// Statistics of `α_n(x) = -log2 μ(I_n(x)) / n` over sampled paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalDimensionStats {
    pub depth: u64,
    pub trials: u64,
    pub seed: u64,
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
    pub histogram: Vec<HistogramBin>,
}

/// Generator for trial `t` under `seed`: a ChaCha8 key from the seed and the
/// trial index as stream, so trials are independent of scheduling.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Draws `trials` depth-`n` paths from `sampler` and evaluates `α_n` under `measure`.
pub fn local_dimension_sample(
    measure: &WeightSequence,
    sampler: &WeightSequence,
    n: u64,
    trials: u64,
    seed: u64,
    bins: usize,
) -> Result<LocalDimensionStats> {
    if n == 0 || trials == 0 || bins == 0 {
        return Err(Error::Argument("depth, trials and bins must be >= 1".into()));
    }
    let mw = measure.weights(n)?;
    let sw = sampler.weights(n)?;
    let log0: Vec<f64> = mw.iter().map(|p| p.log2()).collect();
    let log1: Vec<f64> = mw.iter().map(|p| (1.0 - p).log2()).collect();
    let alphas: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let s: f64 = sw
                .iter()
                .enumerate()
                .map(|(j, &p)| if rng.gen::<f64>() < p { log0[j] } else { log1[j] })
                .sum();
            -s / n as f64
        })
        .collect();
    let mean = alphas.iter().sum::<f64>() / trials as f64;
    let var = if trials > 1 {
        alphas.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (trials - 1) as f64
    } else {
        0.0
    };
    let min = alphas.iter().copied().fold(f64::INFINITY, f64::min);
    let max = alphas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(LocalDimensionStats {
        depth: n,
        trials,
        seed,
        mean,
        std_dev: var.sqrt(),
        min,
        max,
        histogram: histogram(&alphas, min, max, bins),
    })
}

fn histogram(xs: &[f64], min: f64, max: f64, bins: usize) -> Vec<HistogramBin> {
    if max <= min {
        return vec![HistogramBin { low: min, high: max, count: xs.len() as u64 }];
    }
    let width = (max - min) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &x in xs {
        let k = (((x - min) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistogramBin {
            low: min + k as f64 * width,
            high: if k + 1 == bins { max } else { min + (k + 1) as f64 * width },
            count,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{binary_entropy, uniform_grid};
    use crate::weights::BlockSchedule;

    #[test]
    fn transform_examples() {
        let seq = WeightSequence::periodic(&[0.13, 0.4, 0.77]).unwrap();
        assert_eq!(gibbs_transform(&seq, 1.0).unwrap(), seq);
        let flat = gibbs_transform(&seq, 0.0).unwrap();
        assert!(flat.weights(10).unwrap().iter().all(|&p| p == 0.5));
        let q = gibbs_transform(&WeightSequence::constant(0.25).unwrap(), 2.0).unwrap();
        assert_eq!(q, WeightSequence::constant(0.1).unwrap());
        // huge exponents stay finite through the log form, or fail loudly
        let hot = gibbs_transform(&WeightSequence::constant(0.4).unwrap(), 50.0).unwrap();
        assert!(hot.weight_at(1).unwrap().get() > 0.0);
        assert!(gibbs_transform(&WeightSequence::constant(0.1).unwrap(), 500.0).is_err());
    }

    #[test]
    fn identity_examples() {
        let c = WeightSequence::constant(0.3).unwrap();
        let s = uniform_grid(-3.0, 3.0, 0.05).unwrap();
        assert!(gibbs_tau_identity_check(&c, 2.0, &s, 50).unwrap() <= 1e-10);
        let p = WeightSequence::periodic(&[0.11, 0.3, 0.62]).unwrap();
        assert!(gibbs_tau_identity_check(&p, -1.5, &[1.0], 17).unwrap() <= 1e-12);
        assert!(gibbs_tau_identity_check(&p, 2.5, &[0.0], 17).unwrap() <= 1e-12);
    }

    #[test]
    fn entropy_examples() {
        let w = Window::half(200).unwrap();
        let r = entropy_dimensions(&WeightSequence::constant(0.5).unwrap(), w).unwrap();
        assert!((r.h_lower - 1.0).abs() < 1e-12 && (r.h_upper - 1.0).abs() < 1e-12);
        let r = entropy_dimensions(&WeightSequence::constant(0.25).unwrap(), w).unwrap();
        assert!((r.h_lower - 0.811278).abs() < 1e-6);
        assert!((r.h_lower - binary_entropy(0.25)).abs() < 1e-9);
        assert!((r.h_upper - binary_entropy(0.25)).abs() < 1e-9);
    }

    #[test]
    fn entropy_interleaved_blocks() {
        // Block-average oracle: at depth n the 0.2 component owns
        // c(n) levels, and -τ_n'(1) = (c H(0.2) + (n - c) H(0.4)) / n.
        let seq = WeightSequence::block_interleaved(
            vec![WeightSequence::constant(0.2).unwrap(), WeightSequence::constant(0.4).unwrap()],
            BlockSchedule::factorial(),
        )
        .unwrap();
        let n = 100_000u64;
        let w = Window::half(n).unwrap();
        let r = entropy_dimensions(&seq, w).unwrap();
        let blocks = BlockSchedule::factorial().block_indices(n).unwrap();
        let (h2, h4) = (binary_entropy(0.2), binary_entropy(0.4));
        let mut c = 0u64;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (j, &b) in blocks.iter().enumerate() {
            if b % 2 == 1 {
                c += 1;
            }
            let m = j as u64 + 1;
            if m >= w.start {
                let v = (c as f64 * h2 + (m - c) as f64 * h4) / m as f64;
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        assert!(r.h_lower < r.h_upper);
        let gap = r.h_upper - r.h_lower;
        assert!((gap - (hi - lo)).abs() <= 0.1 * (h4 - h2).abs() * ((hi - lo) / (h4 - h2).abs()));
        assert!((r.h_lower - lo).abs() < 1e-9 && (r.h_upper - hi).abs() < 1e-9);
    }

    #[test]
    fn bounds_smooth_cases() {
        let qs = uniform_grid(-4.0, 4.0, 0.01).unwrap();
        let w = Window::half(400).unwrap();
        let c = WeightSequence::constant(0.25).unwrap();
        let tau = TauGrid::from_sequence(&c, &qs, w).unwrap();
        let b = theorem1_bounds(&c, 1.0, w, &tau).unwrap();
        let h = binary_entropy(0.25);
        assert!((b.lower - h).abs() < 2e-3 && (b.upper - h).abs() < 2e-3, "{b:?}");
        let half = WeightSequence::constant(0.5).unwrap();
        let tau = TauGrid::from_sequence(&half, &qs, w).unwrap();
        for q in [-2.0, 0.5, 3.0] {
            let b = theorem1_bounds(&half, q, w, &tau).unwrap();
            assert!((b.lower - 1.0).abs() < 1e-9 && (b.upper - 1.0).abs() < 1e-9, "{b:?}");
        }
        assert!(theorem1_bounds(&half, 4.0, w, &tau).is_err());
        assert!(theorem1_bounds(&half, 0.005, w, &tau).is_err());
    }

    #[test]
    fn entropy_of_gibbs_matches_lower_bound() {
        let seq = WeightSequence::periodic(&[0.15, 0.35, 0.3, 0.45]).unwrap();
        let w = Window::half(1000).unwrap();
        let qs = uniform_grid(0.0, 4.0, 0.01).unwrap();
        let tau = TauGrid::from_sequence(&seq, &qs, w).unwrap();
        for q in [0.5, 1.7, 3.0] {
            let b = theorem1_bounds(&seq, q, w, &tau).unwrap();
            let d = entropy_dimensions(&gibbs_transform(&seq, q).unwrap(), w).unwrap();
            assert!((d.h_lower - b.lower).abs() < 1e-9, "{} vs {}", d.h_lower, b.lower);
        }
    }

    #[test]
    fn uniform_local_dimension() {
        let half = WeightSequence::constant(0.5).unwrap();
        let s = local_dimension_sample(&half, &half, 200, 20, 1, 4).unwrap();
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.min, 1.0);
        assert_eq!(s.max, 1.0);
        assert_eq!(s.histogram.iter().map(|b| b.count).sum::<u64>(), 20);
    }

    #[test]
    fn sampling_is_reproducible() {
        let mu = WeightSequence::constant(0.3).unwrap();
        let a = local_dimension_sample(&mu, &mu, 500, 64, 9, 10).unwrap();
        let b = local_dimension_sample(&mu, &mu, 500, 64, 9, 10).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.histogram.iter().map(|b| b.count).sum::<u64>(), 64);
        let c = local_dimension_sample(&mu, &mu, 500, 64, 10, 10).unwrap();
        assert_ne!(a.mean, c.mean);
    }
}
