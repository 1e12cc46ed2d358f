//! Phase transitions from convex combinations of single-weight spectra.
//!
//! A [`ConvexCombo`] `τ = Σ λ_i τ(p_i, ·)` with `p_i ∈ (0, 1/2]` is the
//! spectrum of a Bernoulli product whose levels use weight `p_i` with
//! frequency `λ_i`. [`cocorico_perturb`] replaces it by another combination
//! that touches `τ` at two points `1 < q1 < q2`, lies above it strictly
//! between them and strictly below elsewhere on `(1, ∞)`; the maximum of the
//! two is then kinked at `q1` and `q2`. Interleaving realizations over
//! rapidly growing blocks produces a measure whose spectrum is that maximum,
//! and a diagonal composition of such stages accumulates kinks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::{tau_derivative, tau_single, uniform_grid, LegendreGrid, TauGrid, Window};
use crate::weights::{BlockSchedule, LevelProfile, MixtureTerm, Probability, WeightSequence, WEIGHT_SUM_TOL};

/// Equality tolerance at the anchor points of a perturbation.
pub const ANCHOR_TOL: f64 = 1e-10;

/// Largest condition estimate accepted for the 3×3 system.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, f64)", into = "(f64, f64)")]
pub struct ComboTerm {
    pub lambda: f64,
    pub p: f64,
}

impl From<(f64, f64)> for ComboTerm {
    fn from((lambda, p): (f64, f64)) -> Self {
        ComboTerm { lambda, p }
    }
}

impl From<ComboTerm> for (f64, f64) {
    fn from(t: ComboTerm) -> Self {
        (t.lambda, t.p)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComboRepr {
    terms: Vec<ComboTerm>,
}

/// `τ(q) = Σ λ_i τ(p_i, q)`, weights positive summing to one, `p_i` distinct
/// in `(0, 1/2]` and kept sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComboRepr", into = "ComboRepr")]
pub struct ConvexCombo {
    terms: Vec<ComboTerm>,
}

impl TryFrom<ComboRepr> for ConvexCombo {
    type Error = Error;
    fn try_from(r: ComboRepr) -> Result<Self> {
        ConvexCombo::new(r.terms.into_iter().map(|t| (t.lambda, t.p)).collect())
    }
}

impl From<ConvexCombo> for ComboRepr {
    fn from(c: ConvexCombo) -> Self {
        ComboRepr { terms: c.terms }
    }
}

impl ConvexCombo {
    /// Builds from `(λ, p)` pairs; terms are sorted by `p`.
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Argument("convex combination needs at least one term".into()));
        }
        let mut terms: Vec<ComboTerm> = pairs.into_iter().map(ComboTerm::from).collect();
        for t in &terms {
            if !(t.lambda > 0.0 && t.lambda <= 1.0) {
                return Err(Error::Argument(format!("weight {} outside (0, 1]", t.lambda)));
            }
            if !(t.p > 0.0 && t.p <= 0.5) {
                return Err(Error::Argument(format!("p = {} outside (0, 1/2]", t.p)));
            }
        }
        let sum: f64 = terms.iter().map(|t| t.lambda).sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Argument(format!("weights sum to {sum}, expected 1")));
        }
        terms.sort_by(|a, b| a.p.total_cmp(&b.p));
        if terms.windows(2).any(|w| w[0].p == w[1].p) {
            return Err(Error::Argument("p values of a convex combination must be distinct".into()));
        }
        Ok(ConvexCombo { terms })
    }

    /// Like [`ConvexCombo::new`] but adds the weights of repeated `p` values.
    pub fn merged(pairs: Vec<(f64, f64)>) -> Result<Self> {
        let mut sorted = pairs;
        sorted.sort_by(|a, b| a.1.total_cmp(&b.1));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
        for (l, p) in sorted {
            match out.last_mut() {
                Some(last) if last.1 == p => last.0 += l,
                _ => out.push((l, p)),
            }
        }
        Self::new(out)
    }

    pub fn terms(&self) -> &[ComboTerm] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, q: f64) -> f64 {
        self.terms.iter().map(|t| t.lambda * tau_single(t.p, q)).sum()
    }

    pub fn derivative(&self, q: f64) -> f64 {
        self.terms.iter().map(|t| t.lambda * tau_derivative(t.p, q)).sum()
    }

    fn two_terms(&self) -> Result<(ComboTerm, ComboTerm)> {
        match self.terms.as_slice() {
            [a, b] => Ok((*a, *b)),
            _ => Err(Error::Argument(format!("expected a two-term combination, got {} terms", self.len()))),
        }
    }
}

fn check_q_above_one(q: f64) -> Result<()> {
    if q.is_finite() && q > 1.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!("q = {q} must lie in (1, ∞)")))
    }
}

/// `(τ(p1,q) - τ(p2,q)) / (τ(p2,q) - τ(p3,q))`, decreasing in `q > 1` for
/// `p1 < p2 < p3 < 1/2`.
pub fn subsidiary_ratio(p1: f64, p2: f64, p3: f64, q: f64) -> Result<f64> {
    if !(0.0 < p1 && p1 < p2 && p2 < p3 && p3 < 0.5) {
        return Err(Error::Argument(format!("need 0 < p1 < p2 < p3 < 1/2, got ({p1}, {p2}, {p3})")));
    }
    check_q_above_one(q)?;
    Ok((tau_single(p1, q) - tau_single(p2, q)) / (tau_single(p2, q) - tau_single(p3, q)))
}

/// Upper end of the crossing-point search.
pub const CROSSING_Q_MAX: f64 = 100.0;

/// Unique `q0 > 1` where the two-term combination meets `τ(p0, ·)`, if any.
pub fn crossing_point(combo: &ConvexCombo, p0: f64) -> Result<Option<f64>> {
    crossing_point_until(combo, p0, CROSSING_Q_MAX)
}

pub fn crossing_point_until(combo: &ConvexCombo, p0: f64, q_max: f64) -> Result<Option<f64>> {
    let (a, b) = combo.two_terms()?;
    check_q_above_one(q_max)?;
    if !(p0 > a.p && p0 < b.p) {
        return Ok(None);
    }
    let diff = |q: f64| combo.eval(q) - tau_single(p0, q);
    // log-spaced scan of q - 1 over [1e-6, q_max - 1]
    let steps = 400;
    let (lo, hi) = (1e-6f64.ln(), (q_max - 1.0).ln());
    let mut prev_q = 1.0 + lo.exp();
    let mut prev = diff(prev_q);
    for k in 1..=steps {
        let q = 1.0 + (lo + (hi - lo) * k as f64 / steps as f64).exp();
        let d = diff(q);
        if prev == 0.0 {
            return Ok(Some(prev_q));
        }
        if prev.signum() != d.signum() {
            return Ok(Some(bisect(diff, prev_q, q, 1e-10)));
        }
        prev_q = q;
        prev = d;
    }
    Ok(None)
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid == lo || mid == hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `p4 ∈ (p1, p2)` with `τ(p4, q) = τ(q)` for a two-term combination.
pub fn match_p4(combo: &ConvexCombo, q: f64) -> Result<f64> {
    let (a, b) = combo.two_terms()?;
    check_q_above_one(q)?;
    if !(b.p < 0.5) {
        return Err(Error::Precondition("matching needs p2 < 1/2".into()));
    }
    let target = combo.eval(q);
    // τ(·, q) is strictly decreasing on (0, 1/2) for q > 1
    let (mut lo, mut hi) = (a.p, b.p);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if tau_single(mid, q) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let p4 = if (tau_single(lo, q) - target).abs() <= (tau_single(hi, q) - target).abs() { lo } else { hi };
    let resid = (tau_single(p4, q) - target).abs();
    if resid > 1e-12 {
        return Err(Error::ConstructionFailed { q, reason: format!("matching residual {resid:e}") });
    }
    Ok(p4)
}

/// Solves `A x = b` for a 3×3 system with partial pivoting; also returns the
/// 1-norm condition estimate `‖A‖₁ ‖A⁻¹‖₁`.
fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<([f64; 3], f64)> {
    fn lu_solve(mut m: [[f64; 3]; 3], mut v: [f64; 3]) -> Option<[f64; 3]> {
        for c in 0..3 {
            let piv = (c..3).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
            if m[piv][c] == 0.0 {
                return None;
            }
            m.swap(c, piv);
            v.swap(c, piv);
            for r in c + 1..3 {
                let f = m[r][c] / m[c][c];
                for k in c..3 {
                    m[r][k] -= f * m[c][k];
                }
                v[r] -= f * v[c];
            }
        }
        let mut x = [0.0; 3];
        for r in (0..3).rev() {
            let s: f64 = (r + 1..3).map(|k| m[r][k] * x[k]).sum();
            x[r] = (v[r] - s) / m[r][r];
        }
        Some(x)
    }
    let x = lu_solve(a, b)?;
    let norm1 = |cols: &[[f64; 3]; 3]| (0..3).map(|c| (0..3).map(|r| cols[r][c].abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut inv = [[0.0; 3]; 3];
    for c in 0..3 {
        let mut e = [0.0; 3];
        e[c] = 1.0;
        let col = lu_solve(a, e)?;
        for r in 0..3 {
            inv[r][c] = col[r];
        }
    }
    Some((x, norm1(&a) * norm1(&inv)))
}

/// Weights `(λ3, λ4, λ5)` of `τ̃ = λ3 τ(p1,·) + λ4 τ(p4,·) + λ5 τ(p5,·)` with
/// `τ̃(q1) = τ(q1)`, `τ̃(q2) = τ(q2)` and `λ3 + λ4 + λ5 = 1`.
pub fn solve_system_s(combo: &ConvexCombo, q1: f64, q2: f64, p4: f64, p5: f64) -> Result<[f64; 3]> {
    let (a, b) = combo.two_terms()?;
    check_q_above_one(q1)?;
    if !(q2 > q1 && q2.is_finite()) {
        return Err(Error::Argument(format!("need 1 < q1 < q2, got ({q1}, {q2})")));
    }
    if !(a.p < p4 && p4 < b.p && b.p < p5 && p5 < 0.5) {
        return Err(Error::Precondition(format!(
            "need p1 < p4 < p2 < p5 < 1/2, got p1 = {}, p4 = {p4}, p2 = {}, p5 = {p5}",
            a.p, b.p
        )));
    }
    let row = |q: f64| [tau_single(a.p, q), tau_single(p4, q), tau_single(p5, q)];
    let m = [row(q1), row(q2), [1.0, 1.0, 1.0]];
    let rhs = [combo.eval(q1), combo.eval(q2), 1.0];
    let (x, cond) = solve3(m, rhs).ok_or(Error::Degenerate { condition: f64::INFINITY })?;
    if !(cond <= MAX_CONDITION) {
        return Err(Error::Degenerate { condition: cond });
    }
    if let Some(i) = (0..3).find(|&i| !(x[i] > 0.0)) {
        return Err(Error::Precondition(format!(
            "weight λ{} = {} is not positive; p4/p5 misconfigured",
            i + 3,
            x[i]
        )));
    }
    Ok(x)
}

/// Default `p5`, centred in `(p2, 1/2)`.
pub fn default_p5(p2: f64) -> f64 {
    (p2 + 0.5) / 2.0
}

/// Grid on which perturbations are certified: `(1, max(q_max, q2 + 1)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateGrid {
    pub q_max: f64,
    pub step: f64,
}

impl Default for CertificateGrid {
    fn default() -> Self {
        CertificateGrid { q_max: 10.0, step: 0.01 }
    }
}

impl CertificateGrid {
    pub fn points(&self, q2: f64) -> Result<Vec<f64>> {
        let hi = self.q_max.max(q2 + 1.0);
        Ok(uniform_grid(1.0, hi, self.step)?.into_iter().filter(|&q| q > 1.0).collect())
    }
}

/// Result of [`cocorico_perturb`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub combo: ConvexCombo,
    pub q1: f64,
    pub q2: f64,
    pub p4: f64,
    pub p5: f64,
    /// `(λ3, λ4, λ5)` of the three-term fix of the leading pair.
    pub lambdas: [f64; 3],
    /// `τ̃'(q1) - τ'(q1)` (positive) and `τ̃'(q2) - τ'(q2)` (negative).
    pub slope_jumps: [f64; 2],
    pub grid_points_checked: usize,
}

/// Checks `τ̃ - τ`: zero at the anchors, positive on `(q1, q2)`, negative
/// elsewhere on the grid.
pub fn verify_sign_pattern(
    new: impl Fn(f64) -> f64,
    old: impl Fn(f64) -> f64,
    q1: f64,
    q2: f64,
    grid: &[f64],
) -> Result<()> {
    for &q in &[q1, q2] {
        let d = new(q) - old(q);
        if d.abs() > ANCHOR_TOL {
            return Err(Error::ConstructionFailed { q, reason: format!("anchor mismatch {d:e}") });
        }
    }
    for &q in grid {
        let d = new(q) - old(q);
        let at_anchor = (q - q1).abs() <= 1e-9 || (q - q2).abs() <= 1e-9;
        let ok = if at_anchor {
            d.abs() <= ANCHOR_TOL
        } else if q > q1 && q < q2 {
            d > 0.0
        } else {
            d < 0.0
        };
        if !ok {
            return Err(Error::ConstructionFailed { q, reason: format!("sign pattern violated, difference {d:e}") });
        }
    }
    Ok(())
}

/// Perturbs `combo` around `[q1, q2]`. The two smallest-`p` terms are
/// replaced by the three-term solution of the matching system; the remaining
/// terms are carried over. The result is certified on `grid` before return.
pub fn cocorico_perturb_on(
    combo: &ConvexCombo,
    q1: f64,
    q2: f64,
    p5: Option<f64>,
    grid: CertificateGrid,
) -> Result<Perturbation> {
    check_q_above_one(q1)?;
    if !(q2 > q1 && q2.is_finite()) {
        return Err(Error::Argument(format!("need 1 < q1 < q2, got ({q1}, {q2})")));
    }
    if combo.len() < 2 {
        return Err(Error::Argument("perturbation needs at least two terms".into()));
    }
    let t = combo.terms();
    let (a, b) = (t[0], t[1]);
    let s = a.lambda + b.lambda;
    let pair = ConvexCombo::new(vec![(a.lambda / s, a.p), (b.lambda / s, b.p)])?;
    let p4 = match_p4(&pair, q1)?;
    let p5 = p5.unwrap_or_else(|| default_p5(b.p));
    let lambdas = solve_system_s(&pair, q1, q2, p4, p5)?;
    let mut pairs = vec![(s * lambdas[0], a.p), (s * lambdas[1], p4), (s * lambdas[2], p5)];
    pairs.extend(t[2..].iter().map(|t| (t.lambda, t.p)));
    // renormalize away rounding in the solve
    let total: f64 = pairs.iter().map(|x| x.0).sum();
    pairs.iter_mut().for_each(|x| x.0 /= total);
    let new = ConvexCombo::merged(pairs)?;

    let points = grid.points(q2)?;
    verify_sign_pattern(|q| new.eval(q), |q| combo.eval(q), q1, q2, &points)?;
    let slope_jumps = [new.derivative(q1) - combo.derivative(q1), new.derivative(q2) - combo.derivative(q2)];
    if !(slope_jumps[0] > 0.0) {
        return Err(Error::ConstructionFailed { q: q1, reason: "slopes do not separate".into() });
    }
    if !(slope_jumps[1] < 0.0) {
        return Err(Error::ConstructionFailed { q: q2, reason: "slopes do not separate".into() });
    }
    Ok(Perturbation { combo: new, q1, q2, p4, p5, lambdas, slope_jumps, grid_points_checked: points.len() })
}

pub fn cocorico_perturb(combo: &ConvexCombo, q1: f64, q2: f64, p5: Option<f64>) -> Result<Perturbation> {
    cocorico_perturb_on(combo, q1, q2, p5, CertificateGrid::default())
}

/// Bernoulli product whose spectrum is `combo`: the greedy low-discrepancy
/// assignment of weights `p_i` with frequencies `λ_i`.
pub fn realize_measure(combo: &ConvexCombo) -> Result<WeightSequence> {
    if let [t] = combo.terms() {
        return WeightSequence::constant(t.p);
    }
    let terms = combo
        .terms()
        .iter()
        .map(|t| Ok(MixtureTerm { lambda: t.lambda, p: Probability::new(t.p)? }))
        .collect::<Result<Vec<_>>>()?;
    WeightSequence::low_discrepancy(terms)
}

/// Cycles `measures` over the blocks of `schedule`.
pub fn interleave_max(measures: Vec<WeightSequence>, schedule: BlockSchedule) -> Result<WeightSequence> {
    if measures.len() < 2 {
        return Err(Error::Argument("interleaving needs at least two measures".into()));
    }
    WeightSequence::block_interleaved(measures, schedule)
}

/// `max_k τ_k(q)`.
pub fn envelope(combos: &[ConvexCombo], q: f64) -> f64 {
    combos.iter().map(|c| c.eval(q)).fold(f64::NEG_INFINITY, f64::max)
}

pub fn envelope_grid(combos: &[ConvexCombo], qs: &[f64]) -> Result<TauGrid> {
    TauGrid::from_fn(qs, |q| envelope(combos, q))
}

/// How the running-sup spectrum of a finite-depth measure tracks an analytic target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingReport {
    pub window: Window,
    pub max_abs_error: f64,
    pub at_q: f64,
    /// Largest excess of the finite-depth value over the target (the
    /// running sup approaches from below when this is `<= 0`).
    pub max_excess: f64,
}

pub fn envelope_tracking(
    seq: &WeightSequence,
    target: impl Fn(f64) -> f64,
    qs: &[f64],
    window: Window,
) -> Result<TrackingReport> {
    let prof = LevelProfile::of(seq, window.end)?;
    let grid = TauGrid::from_profile(&prof, qs, window)?;
    let mut rep = TrackingReport { window, max_abs_error: 0.0, at_q: qs[0], max_excess: f64::NEG_INFINITY };
    for p in &grid.points {
        let e = p.tau - target(p.q);
        if e.abs() > rep.max_abs_error {
            rep.max_abs_error = e.abs();
            rep.at_q = p.q;
        }
        rep.max_excess = rep.max_excess.max(e);
    }
    Ok(rep)
}

/// `q_1, q_2, ...` in `(1, ∞)` with `q_{2n+1} < q_{2n+2}` and no earlier point in
/// `[q_{2n+1}, q_{2n+2}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct NestedDenseSequence {
    points: Vec<f64>,
}

impl TryFrom<Vec<f64>> for NestedDenseSequence {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        NestedDenseSequence::new(v)
    }
}

impl From<NestedDenseSequence> for Vec<f64> {
    fn from(s: NestedDenseSequence) -> Self {
        s.points
    }
}

impl NestedDenseSequence {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() % 2 != 0 {
            return Err(Error::Argument("nested sequence needs an even number of points".into()));
        }
        if let Some(q) = points.iter().find(|q| !(q.is_finite() && **q > 1.0)) {
            return Err(Error::Argument(format!("point {q} not in (1, ∞)")));
        }
        for (k, pair) in points.chunks(2).enumerate() {
            let (a, b) = (pair[0], pair[1]);
            if !(a < b) {
                return Err(Error::Argument(format!("pair {k} is not increasing: ({a}, {b})")));
            }
            if let Some(q) = points[..2 * k].iter().find(|&&q| q >= a && q <= b) {
                return Err(Error::Argument(format!("earlier point {q} lies in pair interval [{a}, {b}]")));
            }
        }
        Ok(NestedDenseSequence { points })
    }

    /// `pairs` intervals by midpoint refinement of `[1 + delta, q_max]`: each
    /// new pair is `mid ± w/4` of a gap of width `w` between used points,
    /// gaps visited breadth-first, left to right.
    pub fn generate(pairs: usize, delta: f64, q_max: f64) -> Result<Self> {
        if !(delta > 0.0 && 1.0 + delta < q_max && q_max.is_finite()) {
            return Err(Error::Argument(format!("need 0 < delta and 1 + delta < q_max, got ({delta}, {q_max})")));
        }
        let mut points = Vec::with_capacity(2 * pairs);
        let mut gaps = vec![(1.0 + delta, q_max)];
        while points.len() < 2 * pairs {
            let mut next = Vec::with_capacity(3 * gaps.len());
            for &(lo, hi) in &gaps {
                if points.len() == 2 * pairs {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                let w = hi - lo;
                let (a, b) = (mid - w / 4.0, mid + w / 4.0);
                points.push(a);
                points.push(b);
                next.extend([(lo, a), (a, b), (b, hi)]);
            }
            gaps = next;
        }
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn intervals(&self) -> Vec<[f64; 2]> {
        self.points.chunks(2).map(|p| [p[0], p[1]]).collect()
    }
}

/// Output of [`dense_transition_build`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseBuild {
    /// `τ_1` (the base) followed by one perturbed combination per stage.
    pub combos: Vec<ConvexCombo>,
    /// Target interval of stage `k` (perturbation producing `combos[k]`).
    pub intervals: Vec<[f64; 2]>,
    /// Index into `combos` of the maximal combination that stage `k` perturbed.
    pub parents: Vec<usize>,
    pub schedule: BlockSchedule,
    pub certificate: CertificateGrid,
    /// Diagonal composition of the stage measures `ν_1, ..., ν_{K+1}`.
    pub composite: WeightSequence,
}

/// Points per target interval used to certify that one combination is maximal.
pub const MAX_SELECTION_POINTS: usize = 401;
const TIE_TOL: f64 = 1e-12;

/// Index of the combination maximal on all of `[lo, hi]`; ties on the whole
/// interval go to the earliest, a switch inside is an error.
pub fn select_maximal(combos: &[ConvexCombo], lo: f64, hi: f64) -> Result<usize> {
    let pts: Vec<f64> = (0..MAX_SELECTION_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (MAX_SELECTION_POINTS - 1) as f64)
        .collect();
    let mut alive = vec![true; combos.len()];
    for &q in &pts {
        let vals: Vec<f64> = combos.iter().map(|c| c.eval(q)).collect();
        let m = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (i, v) in vals.iter().enumerate() {
            if m - v > TIE_TOL {
                alive[i] = false;
            }
        }
    }
    alive.iter().position(|&a| a).ok_or(Error::MaxSwitch { low: lo, high: hi })
}

/// Diagonal construction with `stages` perturbations at the pairs of `qs`.
pub fn dense_transition_build(
    qs: &NestedDenseSequence,
    base: &ConvexCombo,
    stages: usize,
    schedule: BlockSchedule,
) -> Result<DenseBuild> {
    dense_transition_build_on(qs, base, stages, schedule, CertificateGrid::default())
}

pub fn dense_transition_build_on(
    qs: &NestedDenseSequence,
    base: &ConvexCombo,
    stages: usize,
    schedule: BlockSchedule,
    certificate: CertificateGrid,
) -> Result<DenseBuild> {
    if stages == 0 {
        return Err(Error::Argument("need at least one stage".into()));
    }
    if base.len() != 2 {
        return Err(Error::Argument("dense construction starts from a two-term combination".into()));
    }
    let all = qs.intervals();
    if all.len() < stages {
        return Err(Error::Argument(format!(
            "{stages} stages need {} points, sequence has {}",
            2 * stages,
            qs.points().len()
        )));
    }
    let intervals = all[..stages].to_vec();
    let mut combos = vec![base.clone()];
    let mut parents = Vec::with_capacity(stages);
    for &[lo, hi] in &intervals {
        let j = select_maximal(&combos, lo, hi)?;
        let pert = cocorico_perturb_on(&combos[j], lo, hi, None, certificate)?;
        parents.push(j);
        combos.push(pert.combo);
    }
    let realized = combos.iter().map(realize_measure).collect::<Result<Vec<_>>>()?;
    let mut stage_measures = vec![realized[0].clone()];
    for k in 2..=combos.len() {
        stage_measures.push(interleave_max(realized[..k].to_vec(), schedule.clone())?);
    }
    let composite = WeightSequence::diagonal(stage_measures, schedule.clone())?;
    Ok(DenseBuild { combos, intervals, parents, schedule, certificate, composite })
}

impl DenseBuild {
    pub fn envelope(&self, q: f64) -> f64 {
        envelope(&self.combos, q)
    }

    /// Every stage combination lies strictly below the maximum of its
    /// predecessors outside its target interval, and strictly above it inside.
    pub fn check_stage_patterns(&self) -> Result<usize> {
        let mut checked = 0;
        for (k, &[lo, hi]) in self.intervals.iter().enumerate() {
            let prev = &self.combos[..=k];
            let new = &self.combos[k + 1];
            let parent = &self.combos[self.parents[k]];
            let grid = self.certificate.points(hi)?;
            verify_sign_pattern(|q| new.eval(q), |q| parent.eval(q), lo, hi, &grid)?;
            for &q in &grid {
                let inside = q > lo + 1e-9 && q < hi - 1e-9;
                let anchor = (q - lo).abs() <= 1e-9 || (q - hi).abs() <= 1e-9;
                if !inside && !anchor && !(new.eval(q) < envelope(prev, q)) {
                    return Err(Error::ConstructionFailed { q, reason: format!("stage {} rises above the envelope", k + 1) });
                }
            }
            checked += grid.len();
        }
        Ok(checked)
    }
}

/// A detected slope discontinuity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinkReport {
    pub q: f64,
    pub left_slope: f64,
    pub right_slope: f64,
    /// `right_slope - left_slope`.
    pub gap: f64,
    pub threshold: f64,
}

/// Interior grid points with `|right secant - left secant| >= threshold`.
pub fn detect_kinks(tau: &TauGrid, threshold: f64) -> Result<Vec<KinkReport>> {
    if !(threshold > 0.0) {
        return Err(Error::Argument("kink threshold must be positive".into()));
    }
    Ok(tau
        .points
        .iter()
        .filter_map(|p| {
            let (l, r) = (p.slope_left?, p.slope_right?);
            let gap = r - l;
            (gap.abs() >= threshold).then_some(KinkReport { q: p.q, left_slope: l, right_slope: r, gap, threshold })
        })
        .collect())
}

/// Transform of a spectrum given analytically.
pub fn analytic_legendre(combos: &[ConvexCombo], qs: &[f64], alphas: &[f64]) -> Result<LegendreGrid> {
    crate::spectrum::legendre_transform(&envelope_grid(combos, qs)?, alphas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::greedy_assignment;

    fn base() -> ConvexCombo {
        ConvexCombo::new(vec![(0.5, 0.1), (0.5, 0.4)]).unwrap()
    }

    #[test]
    fn combo_validation() {
        assert!(ConvexCombo::new(vec![(0.5, 0.2), (0.5, 0.2)]).is_err());
        assert!(ConvexCombo::new(vec![(0.5, 0.2), (0.4, 0.3)]).is_err());
        assert!(ConvexCombo::new(vec![(0.5, 0.2), (0.5, 0.6)]).is_err());
        assert!(ConvexCombo::new(vec![(1.0, 0.5)]).is_ok());
        let c = ConvexCombo::new(vec![(0.3, 0.4), (0.7, 0.1)]).unwrap();
        assert_eq!(c.terms()[0].p, 0.1);
        let m = ConvexCombo::merged(vec![(0.25, 0.3), (0.5, 0.1), (0.25, 0.3)]).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.terms()[1].lambda, 0.5);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(json, r#"{"terms":[[0.7,0.1],[0.3,0.4]]}"#);
        assert_eq!(serde_json::from_str::<ConvexCombo>(&json).unwrap(), c);
    }

    #[test]
    fn ratio_examples() {
        let a = subsidiary_ratio(0.1, 0.2, 0.3, 1.5).unwrap();
        let b = subsidiary_ratio(0.1, 0.2, 0.3, 2.5).unwrap();
        assert!(a > b);
        // L'Hôpital at q -> 1+
        let lim = (tau_derivative(0.1, 1.0) - tau_derivative(0.2, 1.0)) / (tau_derivative(0.2, 1.0) - tau_derivative(0.3, 1.0));
        let near = subsidiary_ratio(0.1, 0.2, 0.3, 1.0 + 1e-6).unwrap();
        assert!(lim > 0.0 && lim.is_finite());
        assert!((near - lim).abs() < 1e-5 * lim, "{near} vs {lim}");
        let tiny = subsidiary_ratio(0.1, 0.1 + 1e-9, 0.3, 2.0).unwrap();
        assert!(tiny.abs() < 1e-7);
        assert!(subsidiary_ratio(0.2, 0.1, 0.3, 2.0).is_err());
        assert!(subsidiary_ratio(0.1, 0.2, 0.3, 1.0).is_err());
    }

    #[test]
    fn match_p4_quadratic() {
        let c = base();
        let p4 = match_p4(&c, 2.0).unwrap();
        // p² + (1-p)² = 2^{τ(2)}  =>  p = (1 - sqrt(2 t - 1)) / 2
        let t = 2f64.powf((tau_single(0.1, 2.0) + tau_single(0.4, 2.0)) / 2.0);
        let closed = (1.0 - (2.0 * t - 1.0).sqrt()) / 2.0;
        assert!((p4 - closed).abs() < 1e-12);
        assert!((p4 - 0.2234).abs() < 1e-4);
        assert!((tau_single(p4, 2.0) - c.eval(2.0)).abs() <= 1e-12);
        let skew = ConvexCombo::new(vec![(0.999, 0.1), (0.001, 0.4)]).unwrap();
        assert!((match_p4(&skew, 2.0).unwrap() - 0.1).abs() < 1e-2);
        assert!(match_p4(&ConvexCombo::new(vec![(1.0, 0.2)]).unwrap(), 2.0).is_err());
    }

    #[test]
    fn crossing_examples() {
        let c = base();
        assert_eq!(crossing_point(&c, 0.1).unwrap(), None);
        assert_eq!(crossing_point(&c, 0.45).unwrap(), None);
        let p4 = match_p4(&c, 2.0).unwrap();
        let q0 = crossing_point(&c, p4).unwrap().unwrap();
        assert!((q0 - 2.0).abs() < 1e-8, "{q0}");
        // sign pattern around the crossing
        assert!(c.eval(1.5) > tau_single(p4, 1.5));
        assert!(c.eval(3.0) < tau_single(p4, 3.0));
    }

    #[test]
    fn system_example() {
        let c = base();
        let p4 = match_p4(&c, 2.0).unwrap();
        let l = solve_system_s(&c, 2.0, 3.0, p4, 0.45).unwrap();
        assert!(l.iter().all(|&x| x > 0.0));
        assert!((l.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let tt = |q: f64| l[0] * tau_single(0.1, q) + l[1] * tau_single(p4, q) + l[2] * tau_single(0.45, q);
        assert!((tt(2.0) - c.eval(2.0)).abs() <= 1e-10);
        assert!((tt(3.0) - c.eval(3.0)).abs() <= 1e-10);
        assert!(matches!(solve_system_s(&c, 2.0, 3.0, 0.05, 0.45), Err(Error::Precondition(_))));
        assert!(matches!(solve_system_s(&c, 2.0, 3.0, p4, 0.35), Err(Error::Precondition(_))));
    }

    #[test]
    fn perturbation_example() {
        let c = base();
        let pert = cocorico_perturb(&c, 2.0, 3.0, None).unwrap();
        assert_eq!(pert.combo.len(), 3);
        assert_eq!(pert.p5, 0.45);
        let d = |q: f64| pert.combo.eval(q) - c.eval(q);
        assert!(d(1.5) < 0.0 && d(2.5) > 0.0 && d(5.0) < 0.0);
        assert!(d(2.0).abs() <= 1e-10 && d(3.0).abs() <= 1e-10);
        let h = 1e-4;
        let sec_new = (pert.combo.eval(2.0 + h) - pert.combo.eval(2.0 - h)) / (2.0 * h);
        let sec_old = (c.eval(2.0 + h) - c.eval(2.0 - h)) / (2.0 * h);
        assert!((sec_new - sec_old).abs() > 0.0);
        assert!(pert.slope_jumps[0] > 0.0 && pert.slope_jumps[1] < 0.0);
    }

    #[test]
    fn perturbation_of_longer_combo() {
        let c = ConvexCombo::new(vec![(0.3, 0.05), (0.3, 0.2), (0.4, 0.35)]).unwrap();
        let pert = cocorico_perturb(&c, 1.5, 2.5, Some(0.3)).unwrap();
        // trailing term carried over untouched
        assert!(pert.combo.terms().iter().any(|t| t.p == 0.35 && (t.lambda - 0.4).abs() < 1e-15));
        assert!(cocorico_perturb(&c, 2.5, 1.5, None).is_err());
        assert!(cocorico_perturb(&ConvexCombo::new(vec![(1.0, 0.2)]).unwrap(), 1.5, 2.5, None).is_err());
        let half = ConvexCombo::new(vec![(0.5, 0.2), (0.5, 0.5)]).unwrap();
        assert!(cocorico_perturb(&half, 1.5, 2.5, None).is_err());
    }

    #[test]
    fn realization_examples() {
        let one = ConvexCombo::new(vec![(1.0, 0.3)]).unwrap();
        assert_eq!(realize_measure(&one).unwrap(), WeightSequence::constant(0.3).unwrap());
        let third = 1.0 / 3.0;
        let three = ConvexCombo::new(vec![(third, 0.1), (third, 0.2), (1.0 - 2.0 * third, 0.3)]).unwrap();
        let w = realize_measure(&three).unwrap().weights(9).unwrap();
        for p in [0.1, 0.2, 0.3] {
            assert_eq!(w.iter().filter(|&&x| x == p).count(), 3);
        }
        let mix = ConvexCombo::new(vec![(0.7, 0.2), (0.3, 0.4)]).unwrap();
        let seq = realize_measure(&mix).unwrap();
        let t = crate::spectrum::tau_partial(&seq, 10_000, 2.0).unwrap();
        assert!((t - mix.eval(2.0)).abs() <= 1e-3);
    }

    #[test]
    fn greedy_discrepancy_small() {
        let l = [0.15, 0.5, 0.35];
        let idx = greedy_assignment(&l, 5000);
        let mut c = [0u64; 3];
        for (n, &i) in idx.iter().enumerate() {
            c[i as usize] += 1;
            for k in 0..3 {
                assert!((c[k] as f64 - l[k] * (n + 1) as f64).abs() <= 3.0);
            }
        }
    }

    #[test]
    fn interleave_examples() {
        let a = WeightSequence::constant(0.3).unwrap();
        let same = interleave_max(vec![a.clone(), a.clone()], BlockSchedule::factorial()).unwrap();
        assert_eq!(same.weights(500).unwrap(), a.weights(500).unwrap());
        let three = interleave_max(
            vec![a, WeightSequence::constant(0.1).unwrap(), WeightSequence::periodic(&[0.2, 0.45]).unwrap()],
            BlockSchedule::factorial(),
        )
        .unwrap();
        for n in [1, 10, 1000] {
            assert!(crate::spectrum::tau_partial(&three, n, 1.0).unwrap().abs() < 1e-12);
        }
        assert!(interleave_max(vec![WeightSequence::constant(0.3).unwrap()], BlockSchedule::factorial()).is_err());
    }

    #[test]
    fn nested_sequences() {
        assert!(NestedDenseSequence::new(vec![2.0, 3.0, 1.5, 1.75, 4.0, 5.0]).is_ok());
        assert!(NestedDenseSequence::new(vec![2.0, 3.0, 1.5, 2.5]).is_err());
        assert!(NestedDenseSequence::new(vec![3.0, 2.0]).is_err());
        assert!(NestedDenseSequence::new(vec![0.5, 2.0]).is_err());
        assert!(NestedDenseSequence::new(vec![2.0]).is_err());
        let g = NestedDenseSequence::generate(13, 0.1, 10.0).unwrap();
        assert_eq!(g.points().len(), 26);
        assert!(g.points().iter().all(|&q| q > 1.1 && q < 10.0));
        // gaps shrink geometrically, so points eventually fall within any subinterval
        let fine = NestedDenseSequence::generate(200, 0.1, 10.0).unwrap();
        for k in 0..40 {
            let lo = 1.1 + k as f64 * 0.2;
            assert!(fine.points().iter().any(|&q| q > lo && q < lo + 0.2), "no point in ({lo}, {})", lo + 0.2);
        }
    }

    #[test]
    fn dense_single_stage() {
        let qs = NestedDenseSequence::new(vec![2.0, 3.0]).unwrap();
        let b = dense_transition_build(&qs, &base(), 1, BlockSchedule::factorial()).unwrap();
        let direct = cocorico_perturb(&base(), 2.0, 3.0, None).unwrap();
        assert_eq!(b.combos, vec![base(), direct.combo.clone()]);
        assert_eq!(b.parents, vec![0]);
        let expected = WeightSequence::diagonal(
            vec![
                realize_measure(&base()).unwrap(),
                interleave_max(
                    vec![realize_measure(&base()).unwrap(), realize_measure(&direct.combo).unwrap()],
                    BlockSchedule::factorial(),
                )
                .unwrap(),
            ],
            BlockSchedule::factorial(),
        )
        .unwrap();
        assert_eq!(b.composite, expected);
        assert!(dense_transition_build(&qs, &base(), 2, BlockSchedule::factorial()).is_err());
    }

    #[test]
    fn max_switch_is_reported() {
        let c = base();
        let p = cocorico_perturb(&c, 2.0, 3.0, None).unwrap().combo;
        // [1.5, 2.5] straddles the crossing at q = 2
        assert!(matches!(select_maximal(&[c.clone(), p.clone()], 1.5, 2.5), Err(Error::MaxSwitch { .. })));
        assert_eq!(select_maximal(&[c.clone(), p.clone()], 2.2, 2.8).unwrap(), 1);
        assert_eq!(select_maximal(&[c.clone(), c.clone()], 2.2, 2.8).unwrap(), 0);
        let qs = NestedDenseSequence::new(vec![2.0, 3.0, 1.5, 1.75]).unwrap();
        assert!(dense_transition_build(&qs, &c, 2, BlockSchedule::factorial()).is_ok());
    }

    #[test]
    fn kinks_smooth_and_threshold() {
        let qs = uniform_grid(1.2, 8.0, 0.01).unwrap();
        let tau = TauGrid::from_fn(&qs, |q| tau_single(0.25, q)).unwrap();
        assert!(detect_kinks(&tau, 0.05).unwrap().is_empty());
        let p = cocorico_perturb(&base(), 2.0, 3.0, None).unwrap();
        let env = envelope_grid(&[base(), p.combo], &qs).unwrap();
        assert!(detect_kinks(&env, 10.0).unwrap().is_empty());
        assert!(detect_kinks(&env, 0.0).is_err());
    }
}
