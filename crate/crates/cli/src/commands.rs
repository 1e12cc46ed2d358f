use std::path::{Path, PathBuf};

use cointoss::coarse::{coarse_spectrum, AlphaBins};
use cointoss::gibbs::{entropy_dimensions, gibbs_transform, local_dimension_sample, theorem1_bounds, DimensionReport};
use cointoss::io::{coarse_csv, histogram_csv, legendre_csv, tau_csv};
use cointoss::spectrum::{generalized_dimensions, legendre_transform, uniform_grid, DimensionPoint, TauGrid};
use cointoss::transitions::{
    cocorico_perturb_on, dense_transition_build_on, detect_kinks, envelope, envelope_grid, envelope_tracking,
    realize_measure, ConvexCombo, DenseBuild, KinkReport, Perturbation, TrackingReport,
};
use cointoss::weights::cylinder_measure;
use cointoss::{verify, Cylinder, WeightSequence, Window};
use serde::Serialize;

use crate::config::{Config, KinkSource};
use crate::{CliError, Format};

pub struct Output {
    dir: PathBuf,
    format: Option<Format>,
}

impl Output {
    pub fn new(dir: &Path, format: Option<Format>) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::validation("io", format!("cannot create {}: {e}", dir.display())))?;
        Ok(Output { dir: dir.to_path_buf(), format })
    }

    pub fn text(&self, name: &str, body: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, body).map_err(|e| CliError::validation("io", format!("cannot write {}: {e}", path.display())))
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::validation("serialize", e.to_string()))?;
        s.push('\n');
        self.text(name, &s)
    }

    /// Writes `stem.csv` or `stem.json` according to `--format` (CSV by default).
    fn table<T: Serialize>(&self, stem: &str, value: &T, csv: impl FnOnce(&T) -> String) -> Result<(), CliError> {
        match self.format.unwrap_or(Format::Csv) {
            Format::Csv => self.text(&format!("{stem}.csv"), &csv(value)),
            Format::Json => self.json(&format!("{stem}.json"), value),
        }
    }

    /// JSON-only commands reject `--format csv`.
    fn json_only(&self, command: &str) -> Result<(), CliError> {
        if self.format == Some(Format::Csv) {
            return Err(CliError::validation("argument", format!("`{command}` writes JSON only")));
        }
        Ok(())
    }
}

pub fn dispatch(name: &str, cfg: &Config, out: &Output) -> Result<(), CliError> {
    match name {
        "measure-eval" => measure_eval(cfg, out),
        "spectrum" => spectrum(cfg, out),
        "legendre" => legendre(cfg, out),
        "gibbs" => gibbs(cfg, out),
        "dims" => dims(cfg, out),
        "bounds" => bounds(cfg, out),
        "coarse" => coarse(cfg, out),
        "sample" => sample(cfg, out),
        "fit-transition" => fit_transition(cfg, out),
        "dense" => dense(cfg, out),
        "kinks" => kinks(cfg, out),
        "verify" => run_verify(cfg, out),
        other => Err(CliError::validation("argument", format!("unknown command `{other}`"))),
    }
}

#[derive(Serialize)]
struct EvalReport<'a> {
    cylinder: &'a str,
    depth: usize,
    log2_measure: f64,
    measure: f64,
}

fn measure_eval(cfg: &Config, out: &Output) -> Result<(), CliError> {
    out.json_only("measure eval")?;
    let word = cfg
        .eval
        .cylinder
        .as_deref()
        .ok_or_else(|| CliError::validation("config", "`measure eval` needs a cylinder".into()))?;
    let c = Cylinder::parse(word)?;
    let l = cylinder_measure(cfg.measure()?, &c)?;
    out.json("eval.json", &EvalReport { cylinder: word, depth: c.depth(), log2_measure: l, measure: l.exp2() })
}

fn tau_grid(cfg: &Config) -> Result<TauGrid, CliError> {
    let qs = cfg.spectrum.q.points()?;
    Ok(TauGrid::from_sequence(cfg.measure()?, &qs, cfg.spectrum.window()?)?)
}

fn spectrum(cfg: &Config, out: &Output) -> Result<(), CliError> {
    out.table("tau", &tau_grid(cfg)?, tau_csv)
}

fn legendre(cfg: &Config, out: &Output) -> Result<(), CliError> {
    let tau = tau_grid(cfg)?;
    let lg = legendre_transform(&tau, &cfg.legendre.alpha.points()?)?;
    out.table("legendre", &lg, legendre_csv)
}

#[derive(Serialize)]
struct GibbsReport {
    q: f64,
    sequence: WeightSequence,
}

fn gibbs(cfg: &Config, out: &Output) -> Result<(), CliError> {
    out.json_only("gibbs")?;
    let sequence = gibbs_transform(cfg.measure()?, cfg.gibbs.q)?;
    out.json("gibbs.json", &GibbsReport { q: cfg.gibbs.q, sequence })
}

#[derive(Serialize)]
struct DimsReport {
    entropy: DimensionReport,
    generalized: Vec<DimensionPoint>,
}

fn dims(cfg: &Config, out: &Output) -> Result<(), CliError> {
    out.json_only("dims")?;
    let entropy = entropy_dimensions(cfg.measure()?, cfg.spectrum.window()?)?;
    let generalized = generalized_dimensions(&tau_grid(cfg)?);
    out.json("dims.json", &DimsReport { entropy, generalized })
}

fn bounds(cfg: &Config, out: &Output) -> Result<(), CliError> {
    out.json_only("bounds")?;
    let b = &cfg.bounds;
    let qs = uniform_grid(b.q - b.half_width, b.q + b.half_width, b.step)?;
    let window = cfg.spectrum.window()?;
    let seq = cfg.measure()?;
    let tau = TauGrid::from_sequence(seq, &qs, window)?;
    out.json("bounds.json", &theorem1_bounds(seq, b.q, window, &tau)?)
}

fn coarse(cfg: &Config, out: &Output) -> Result<(), CliError> {
    let c = &cfg.coarse;
    let seq = cfg.measure()?;
    let bins = match &c.edges {
        Some(e) => AlphaBins::new(e.clone())?,
        None => AlphaBins::default_for(seq, c.depth, c.bin_width)?,
    };
    out.table("coarse", &coarse_spectrum(seq, c.depth, &bins)?, coarse_csv)
}

fn sample(cfg: &Config, out: &Output) -> Result<(), CliError> {
    let s = &cfg.sample;
    let measure = cfg.measure()?;
    let sampler = s.sampler.as_ref().unwrap_or(measure);
    let stats = local_dimension_sample(measure, sampler, s.depth, s.trials, cfg.seed, s.bins)?;
    out.json("sample.json", &stats)?;
    if out.format != Some(Format::Json) {
        out.text("histogram.csv", &histogram_csv(&stats))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TransitionReport {
    base: ConvexCombo,
    perturbation: Perturbation,
    /// Bernoulli product realizing the perturbed combination.
    realized: WeightSequence,
}

fn perturb(cfg: &Config) -> Result<Perturbation, CliError> {
    let t = &cfg.transition;
    Ok(cocorico_perturb_on(&t.base, t.q1, t.q2, t.p5, t.certificate)?)
}

fn fit_transition(cfg: &Config, out: &Output) -> Result<(), CliError> {
    out.json_only("fit-transition")?;
    let perturbation = perturb(cfg)?;
    let realized = realize_measure(&perturbation.combo)?;
    out.json("transition.json", &TransitionReport { base: cfg.transition.base.clone(), perturbation, realized })
}

#[derive(Serialize)]
struct DenseReport {
    build: DenseBuild,
    stage_pattern_points: usize,
    kink_threshold: f64,
    kinks: Vec<KinkReport>,
    tracking: Option<TrackingReport>,
}

fn dense(cfg: &Config, out: &Output) -> Result<(), CliError> {
    out.json_only("dense")?;
    let d = &cfg.dense;
    let qs = d.qs.as_ref().expect("resolved config carries the sequence");
    let build = dense_transition_build_on(qs, &d.base, d.stages, d.schedule.clone(), d.certificate)?;
    let stage_pattern_points = build.check_stage_patterns()?;
    let env = envelope_grid(&build.combos, &d.kink_grid.points()?)?;
    let kinks = detect_kinks(&env, d.kink_threshold)?;
    let tracking = match &d.tracking {
        Some(t) => Some(envelope_tracking(
            &build.composite,
            |q| envelope(&build.combos, q),
            &t.q.points()?,
            Window::half(t.horizon)?,
        )?),
        None => None,
    };
    out.json("dense.json", &DenseReport { build, stage_pattern_points, kink_threshold: d.kink_threshold, kinks, tracking })
}

#[derive(Serialize)]
struct KinksOutput {
    source: KinkSource,
    threshold: f64,
    kinks: Vec<KinkReport>,
}

fn kinks(cfg: &Config, out: &Output) -> Result<(), CliError> {
    out.json_only("kinks")?;
    let k = &cfg.kinks;
    let tau = match k.source {
        KinkSource::Measure => tau_grid(cfg)?,
        KinkSource::Transition => {
            let p = perturb(cfg)?;
            envelope_grid(&[cfg.transition.base.clone(), p.combo], &k.q.points()?)?
        }
    };
    out.json("kinks.json", &KinksOutput { source: k.source, threshold: k.threshold, kinks: detect_kinks(&tau, k.threshold)? })
}

fn run_verify(cfg: &Config, out: &Output) -> Result<(), CliError> {
    out.json_only("verify")?;
    let report = verify::run_all(cfg.seed)?;
    out.json("verify.json", &report)?;
    if !report.passed {
        let failed: Vec<&str> = report.suites.iter().filter(|s| !s.passed).map(|s| s.name).collect();
        return Err(CliError::Failed { kind: "verification_failed".into(), message: format!("failing suites: {}", failed.join(", ")) });
    }
    Ok(())
}
