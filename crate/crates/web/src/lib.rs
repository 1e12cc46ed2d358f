//! Browser bindings. Every export takes plain numbers or a JSON string and
//! returns a JSON string; failures come back as `{"error": "..."}`.

use cointoss::coarse::{coarse_spectrum, formalism_gap, AlphaBins};
use cointoss::spectrum::{legendre_transform, tau_single, uniform_grid, TauGrid};
use cointoss::transitions::{cocorico_perturb, detect_kinks, envelope_grid};
use cointoss::{ConvexCombo, WeightSequence, Window};
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::wasm_bindgen;

type Out = Result<serde_json::Value, String>;

fn finish(r: Out) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

fn err(e: impl ToString) -> String {
    e.to_string()
}

#[derive(Serialize)]
struct Curve {
    x: Vec<f64>,
    y: Vec<f64>,
}

fn finite_curve(xs: impl IntoIterator<Item = (f64, f64)>) -> Curve {
    let (x, y) = xs.into_iter().filter(|(_, y)| y.is_finite()).unzip();
    Curve { x, y }
}

/// Running-sup `τ` and its transform for a measure given in config JSON form.
pub fn spectrum_curves_json(measure: &str, q_min: f64, q_max: f64, q_step: f64, horizon: u64) -> Out {
    let seq: WeightSequence = serde_json::from_str(measure).map_err(err)?;
    let qs = uniform_grid(q_min, q_max, q_step).map_err(err)?;
    let tau = TauGrid::from_sequence(&seq, &qs, Window::half(horizon).map_err(err)?).map_err(err)?;
    // the slope range of the grid bounds the useful α range
    let slopes: Vec<f64> = tau.points.iter().flat_map(|p| [p.slope_left, p.slope_right]).flatten().collect();
    let lo = -slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let hi = -slopes.iter().copied().fold(f64::INFINITY, f64::min);
    let alphas: Vec<f64> = (0..=200).map(|i| lo + (hi - lo) * i as f64 / 200.0).collect();
    let lg = legendre_transform(&tau, &alphas).map_err(err)?;
    Ok(json!({
        "tau": finite_curve(tau.points.iter().map(|p| (p.q, p.tau))),
        "legendre": finite_curve(lg.points.iter().map(|p| (p.alpha, p.tau_star))),
    }))
}

/// Two-term base, its perturbation at `(q1, q2)`, the envelope and its kinks.
pub fn kink_demo_json(lambda: f64, p1: f64, p2: f64, q1: f64, q2: f64, threshold: f64) -> Out {
    let base = ConvexCombo::new(vec![(lambda, p1), (1.0 - lambda, p2)]).map_err(err)?;
    let pert = cocorico_perturb(&base, q1, q2, None).map_err(err)?;
    let hi = q2 + (q2 - 1.0).max(1.0);
    let qs = uniform_grid(1.0 + 1e-3, hi, 1e-4).map_err(err)?;
    let env = envelope_grid(&[base.clone(), pert.combo.clone()], &qs).map_err(err)?;
    let kinks = detect_kinks(&env, threshold).map_err(err)?;
    // differences against the base make the crossings visible
    let plot: Vec<f64> = qs.iter().step_by(10).copied().collect();
    let diff = |c: &ConvexCombo| finite_curve(plot.iter().map(|&q| (q, c.eval(q) - base.eval(q))));
    Ok(json!({
        "combo": pert.combo,
        "lambdas": pert.lambdas,
        "p4": pert.p4,
        "p5": pert.p5,
        "slope_jumps": pert.slope_jumps,
        "perturbed_minus_base": diff(&pert.combo),
        "kinks": kinks,
    }))
}

/// Exact coarse spectrum of the homogeneous measure with weight `p`, next to `τ*`.
pub fn coarse_demo_json(p: f64, depth: u64, width: f64) -> Out {
    if depth > 200 {
        return Err("depth is capped at 200 in the browser".into());
    }
    let seq = WeightSequence::constant(p).map_err(err)?;
    let bins = AlphaBins::default_for(&seq, depth, width).map_err(err)?;
    let cs = coarse_spectrum(&seq, depth, &bins).map_err(err)?;
    let qs = uniform_grid(-30.0, 30.0, 0.01).map_err(err)?;
    let tau = TauGrid::from_fn(&qs, |q| tau_single(p, q)).map_err(err)?;
    let mids: Vec<f64> = cs.occupied().map(|b| b.midpoint()).collect();
    let lg = legendre_transform(&tau, &mids).map_err(err)?;
    let gap = formalism_gap(&cs, &lg).map_err(err)?;
    Ok(json!({
        "coarse": finite_curve(cs.occupied().map(|b| (b.midpoint(), b.f_value.unwrap_or(f64::NAN)))),
        "tau_star": finite_curve(lg.points.iter().map(|p| (p.alpha, p.tau_star))),
        "upper_excess": gap.upper_excess,
        "max_abs": gap.max_abs,
        "method": cs.method,
    }))
}

#[wasm_bindgen]
pub fn spectrum_curves(measure: &str, q_min: f64, q_max: f64, q_step: f64, horizon: u32) -> String {
    finish(spectrum_curves_json(measure, q_min, q_max, q_step, horizon as u64))
}

#[wasm_bindgen]
pub fn kink_demo(lambda: f64, p1: f64, p2: f64, q1: f64, q2: f64, threshold: f64) -> String {
    finish(kink_demo_json(lambda, p1, p2, q1, q2, threshold))
}

#[wasm_bindgen]
pub fn coarse_demo(p: f64, depth: u32, width: f64) -> String {
    finish(coarse_demo_json(p, depth as u64, width))
}
