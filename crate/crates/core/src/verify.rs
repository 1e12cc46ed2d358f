//! Seeded invariant suite backing the `verify` command.
//!
//! Every suite draws from its own ChaCha8 stream so the report is identical
//! for a fixed seed regardless of thread count. Reports hold no timings.

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rand::Rng;
use serde::Serialize;

use crate::coarse::{coarse_spectrum, AlphaBins, DEFAULT_WIDTH};
use crate::error::Result;
use crate::gibbs::{gibbs_transform, trial_rng};
use crate::spectrum::{
    bound_check, legendre_transform, tau_derivative, tau_partial, tau_second_derivative, tau_single, uniform_grid, TauGrid,
};
use crate::transitions::{
    cocorico_perturb, dense_transition_build, detect_kinks, envelope_grid, subsidiary_ratio, ConvexCombo,
    NestedDenseSequence,
};
use crate::weights::{greedy_assignment, log2_mass, BlockSchedule, WeightSequence};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub checks: u64,
    /// Largest observed deviation relevant to the suite's tolerance.
    pub worst: f64,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub passed: bool,
    pub suites: Vec<SuiteResult>,
}

struct Suite {
    result: SuiteResult,
}

impl Suite {
    fn new(name: &'static str) -> Self {
        Suite { result: SuiteResult { name, passed: true, checks: 0, worst: 0.0, failures: Vec::new() } }
    }

    fn check(&mut self, ok: bool, deviation: f64, what: impl FnOnce() -> String) {
        self.result.checks += 1;
        if deviation.is_finite() {
            self.result.worst = self.result.worst.max(deviation);
        }
        if !ok {
            self.result.passed = false;
            if self.result.failures.len() < 10 {
                self.result.failures.push(what());
            }
        }
    }

    fn fail(&mut self, what: String) {
        self.check(false, f64::NAN, || what);
    }

    fn done(self) -> SuiteResult {
        self.result
    }
}

fn random_sequence<R: Rng>(rng: &mut R, len: usize) -> WeightSequence {
    let w: Vec<f64> = (0..len).map(|_| rng.gen_range(0.01..0.99)).collect();
    WeightSequence::explicit(&w).expect("weights inside (0, 1)")
}

fn endpoints(seed: u64) -> SuiteResult {
    let mut s = Suite::new("endpoints");
    let mut rng = trial_rng(seed, 1);
    for _ in 0..1000 {
        let n = rng.gen_range(1..=200);
        let seq = random_sequence(&mut rng, n);
        let t0 = tau_partial(&seq, n as u64, 0.0).unwrap_or(f64::NAN);
        let t1 = tau_partial(&seq, n as u64, 1.0).unwrap_or(f64::NAN);
        let dev = (t0 - 1.0).abs().max(t1.abs());
        s.check(dev <= 1e-12, dev, || format!("depth {n}: tau(0) = {t0}, tau(1) = {t1}"));
    }
    s.done()
}

fn derivatives(seed: u64) -> SuiteResult {
    let mut s = Suite::new("derivatives");
    let mut rng = trial_rng(seed, 2);
    for _ in 0..1000 {
        let p: f64 = rng.gen_range(0.01..0.99);
        let q: f64 = rng.gen_range(-5.0..5.0);
        let h1 = 1e-4;
        let fd1 = (tau_single(p, q + h1) - tau_single(p, q - h1)) / (2.0 * h1);
        let h2 = 1e-4;
        let fd2 = (tau_single(p, q + h2) - 2.0 * tau_single(p, q) + tau_single(p, q - h2)) / (h2 * h2);
        let e1 = (fd1 - tau_derivative(p, q)).abs();
        let e2 = (fd2 - tau_second_derivative(p, q)).abs();
        s.check(e1 <= 1e-6 && e2 <= 1e-5, e1.max(e2), || format!("p = {p}, q = {q}: errors {e1:e}, {e2:e}"));
        let q0: f64 = rng.gen_range(0.05..5.0);
        let qs: Vec<f64> = (0..50).map(|i| q0 + i as f64 * 0.2).collect();
        s.check(bound_check(p, q0, &qs), 0.0, || format!("second-derivative bound fails at p = {p}, q0 = {q0}"));
    }
    s.done()
}

fn brute_force(seed: u64) -> SuiteResult {
    let mut s = Suite::new("brute_force");
    let mut rng = trial_rng(seed, 3);
    for _ in 0..12 {
        let n = rng.gen_range(1..=12usize);
        let seq = random_sequence(&mut rng, n);
        let w = seq.weights(n as u64).expect("explicit length");
        let masses: Vec<f64> = (0u64..1 << n)
            .map(|x| {
                let bits: Vec<u8> = (0..n).map(|j| ((x >> j) & 1) as u8).collect();
                log2_mass(&w, &bits)
            })
            .collect();
        for &q in &[-2.0, -0.5, 0.5, 2.0, 3.5] {
            let direct = masses.iter().map(|l| (q * l).exp2()).sum::<f64>().log2() / n as f64;
            let t = tau_partial(&seq, n as u64, q).unwrap_or(f64::NAN);
            let rel = (t - direct).abs() / direct.abs().max(1e-300);
            s.check(rel <= 1e-10, rel, || format!("tau_partial depth {n}, q = {q}: {t} vs {direct}"));

            let nu = gibbs_transform(&seq, q).expect("moderate exponent");
            let nw = nu.weights(n as u64).expect("explicit length");
            let norm: f64 = masses.iter().map(|l| (q * l).exp2()).sum();
            let worst = (0u64..1 << n)
                .map(|x| {
                    let bits: Vec<u8> = (0..n).map(|j| ((x >> j) & 1) as u8).collect();
                    let expect = (q * masses[x as usize]).exp2() / norm;
                    (log2_mass(&nw, &bits).exp2() - expect).abs() / expect
                })
                .fold(0.0, f64::max);
            s.check(worst <= 1e-10, worst, || format!("gibbs projection depth {n}, q = {q}: rel err {worst:e}"));
        }
        let bins = AlphaBins::default_for(&seq, n as u64, DEFAULT_WIDTH).expect("finite weights");
        match coarse_spectrum(&seq, n as u64, &bins) {
            Ok(cs) => {
                let mut brute = vec![0u64; bins.len()];
                for l in &masses {
                    brute[bins.locate(-l / n as f64).expect("covered")] += 1;
                }
                let counts: Vec<u64> = cs.bins.iter().map(|b| b.count.to_u64().unwrap_or(u64::MAX)).collect();
                let spill: BigUint = cs.bins.iter().map(|b| &b.spill).sum();
                let ok = counts == brute || spill > BigUint::from(0u32);
                s.check(ok, 0.0, || format!("coarse counts differ at depth {n}"));
                s.check(cs.total() == BigUint::from(1u32) << n, 0.0, || format!("coarse total at depth {n}"));
            }
            Err(e) => s.fail(format!("coarse spectrum: {e}")),
        }
    }
    s.done()
}

fn uniform() -> SuiteResult {
    let mut s = Suite::new("uniform_collapse");
    let seq = WeightSequence::constant(0.5).expect("valid");
    let qs = uniform_grid(-5.0, 5.0, 0.01).expect("grid");
    for &q in &qs {
        let t = tau_partial(&seq, 100, q).unwrap_or(f64::NAN);
        let d = (t - (1.0 - q)).abs();
        s.check(d <= 1e-10, d, || format!("tau({q}) = {t}"));
    }
    let tau = TauGrid::from_fn(&qs, |q| tau_single(0.5, q)).expect("grid");
    match legendre_transform(&tau, &[1.0]) {
        Ok(lg) => {
            let d = (lg.points[0].tau_star - 1.0).abs();
            s.check(d <= 2e-3, d, || format!("tau*(1) = {}", lg.points[0].tau_star));
        }
        Err(e) => s.fail(e.to_string()),
    }
    let bins = AlphaBins::default_for(&seq, 10, DEFAULT_WIDTH).expect("bins");
    match coarse_spectrum(&seq, 10, &bins) {
        Ok(cs) => {
            let occ: Vec<_> = cs.occupied().collect();
            let ok = occ.len() == 1
                && (occ[0].midpoint() - 1.0).abs() <= 1e-10
                && occ[0].f_value.is_some_and(|f| (f - 1.0).abs() <= 1e-10);
            s.check(ok, 0.0, || "coarse spectrum is not a single bin at alpha = 1".into());
        }
        Err(e) => s.fail(e.to_string()),
    }
    s.done()
}

fn ratio(seed: u64) -> SuiteResult {
    let mut s = Suite::new("subsidiary_ratio");
    let mut rng = trial_rng(seed, 5);
    let qs: Vec<f64> = uniform_grid(1.0, 10.0, 0.01).expect("grid").into_iter().filter(|&q| q > 1.0).collect();
    for _ in 0..100 {
        let mut p = [rng.gen_range(0.01..0.49), rng.gen_range(0.01..0.49), rng.gen_range(0.01..0.49)];
        p.sort_by(f64::total_cmp);
        if !(p[0] < p[1] && p[1] < p[2]) {
            continue;
        }
        let vals: Vec<f64> = qs.iter().map(|&q| subsidiary_ratio(p[0], p[1], p[2], q).unwrap_or(f64::NAN)).collect();
        let worst = vals.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
        s.check(worst < 1e-9, worst.max(0.0), || format!("ratio increases for {p:?}: step {worst:e}"));
    }
    s.done()
}

fn perturbations(seed: u64) -> SuiteResult {
    let mut s = Suite::new("system_s");
    let mut rng = trial_rng(seed, 6);
    for _ in 0..50 {
        let p1 = rng.gen_range(0.02..0.3);
        let p2 = rng.gen_range(p1 + 0.02..0.45);
        let l = rng.gen_range(0.1..0.9);
        let q1 = rng.gen_range(1.2..5.0);
        let q2 = rng.gen_range(q1 + 0.3..q1 + 4.0);
        let base = ConvexCombo::new(vec![(l, p1), (1.0 - l, p2)]).expect("valid");
        match cocorico_perturb(&base, q1, q2, None) {
            Ok(pert) => {
                let sum: f64 = pert.lambdas.iter().sum();
                let anchor = (pert.combo.eval(q1) - base.eval(q1)).abs().max((pert.combo.eval(q2) - base.eval(q2)).abs());
                let ok = pert.lambdas.iter().all(|&x| x > 0.0) && (sum - 1.0).abs() <= 1e-12 && anchor <= 1e-10;
                s.check(ok, anchor, || format!("instance ({l}, {p1}, {p2}) at ({q1}, {q2})"));
            }
            Err(e) => s.fail(format!("instance ({l}, {p1}, {p2}) at ({q1}, {q2}): {e}")),
        }
    }
    s.done()
}

fn realization(seed: u64) -> SuiteResult {
    let mut s = Suite::new("realization_discrepancy");
    let mut rng = trial_rng(seed, 7);
    for _ in 0..5 {
        let m = rng.gen_range(2..=6usize);
        let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let lambdas: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let idx = greedy_assignment(&lambdas, 100_000);
        let mut counts = vec![0u64; m];
        let mut worst = 0.0f64;
        for (n, &i) in idx.iter().enumerate() {
            counts[i as usize] += 1;
            for k in 0..m {
                worst = worst.max((counts[k] as f64 - lambdas[k] * (n + 1) as f64).abs());
            }
        }
        s.check(worst <= m as f64, worst, || format!("discrepancy {worst} with {m} components"));
    }
    s.done()
}

fn dense() -> SuiteResult {
    let mut s = Suite::new("dense_construction");
    let base = ConvexCombo::new(vec![(0.5, 0.1), (0.5, 0.4)]).expect("valid");
    let qs = NestedDenseSequence::new(vec![2.0, 3.0, 1.5, 1.75, 4.0, 5.0]).expect("nested");
    match dense_transition_build(&qs, &base, 3, BlockSchedule::factorial()) {
        Ok(b) => {
            match b.check_stage_patterns() {
                Ok(n) => s.check(n > 0, 0.0, || "no grid points checked".into()),
                Err(e) => s.fail(e.to_string()),
            }
            // smooth secant bias is about step * τ'' ~ 1e-6, the smallest jump is ~2e-4
            let grid = uniform_grid(1.2, 8.0, 1e-5).expect("grid");
            match envelope_grid(&b.combos, &grid).and_then(|env| detect_kinks(&env, 5e-5)) {
                Ok(kinks) => {
                    let targets = [2.0, 3.0, 1.5, 1.75, 4.0, 5.0];
                    for q in targets {
                        let hit = kinks.iter().any(|k| (k.q - q).abs() < 1e-9);
                        s.check(hit, 0.0, || format!("no kink detected at q = {q}"));
                    }
                    for k in &kinks {
                        let near = targets.iter().any(|&q| (k.q - q).abs() < 1e-9);
                        s.check(near, 0.0, || format!("spurious kink at q = {}", k.q));
                    }
                }
                Err(e) => s.fail(e.to_string()),
            }
        }
        Err(e) => s.fail(e.to_string()),
    }
    s.done()
}

fn serialization(seed: u64) -> SuiteResult {
    let mut s = Suite::new("serialization");
    let mut rng = trial_rng(seed, 9);
    let seqs = vec![
        random_sequence(&mut rng, 7),
        WeightSequence::periodic(&[0.2, 0.7]).expect("valid"),
        WeightSequence::block_interleaved(
            vec![WeightSequence::constant(0.2).expect("valid"), WeightSequence::constant(0.4).expect("valid")],
            BlockSchedule::factorial(),
        )
        .expect("valid"),
    ];
    for seq in seqs {
        let ok = serde_json::to_string(&seq)
            .ok()
            .and_then(|j| serde_json::from_str::<WeightSequence>(&j).ok().map(|back| (j, back)))
            .is_some_and(|(j, back)| back == seq && serde_json::to_string(&back).ok() == Some(j));
        s.check(ok, 0.0, || format!("{} does not round-trip", seq.kind_name()));
    }
    s.done()
}

/// Runs every suite.
pub fn run_all(seed: u64) -> Result<VerifyReport> {
    let suites = vec![
        endpoints(seed),
        derivatives(seed),
        brute_force(seed),
        uniform(),
        ratio(seed),
        perturbations(seed),
        realization(seed),
        dense(),
        serialization(seed),
    ];
    let passed = suites.iter().all(|s| s.passed);
    Ok(VerifyReport { seed, passed, suites })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_and_is_reproducible() {
        let a = run_all(7).unwrap();
        for s in &a.suites {
            assert!(s.passed, "{}: {:?}", s.name, s.failures);
        }
        assert_eq!(a, run_all(7).unwrap());
    }
}
