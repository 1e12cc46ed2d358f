use std::path::Path;

use cointoss::spectrum::uniform_grid;
use cointoss::transitions::{default_p5, CertificateGrid, NestedDenseSequence};
use cointoss::{BlockSchedule, ConvexCombo, WeightSequence, Window};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Closed grid `min, min + step, ..., max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn points(&self) -> Result<Vec<f64>, CliError> {
        Ok(uniform_grid(self.min, self.max, self.step)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumParams {
    pub q: GridSpec,
    pub horizon: u64,
    /// First depth of the running-sup window; `ceil(horizon / 2)` when absent.
    pub window_start: Option<u64>,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        SpectrumParams { q: GridSpec { min: -5.0, max: 5.0, step: 0.01 }, horizon: 10_000, window_start: None }
    }
}

impl SpectrumParams {
    pub fn window(&self) -> Result<Window, CliError> {
        match self.window_start {
            Some(s) => Ok(Window::new(s, self.horizon)?),
            None => Ok(Window::half(self.horizon)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LegendreParams {
    pub alpha: GridSpec,
}

impl Default for LegendreParams {
    fn default() -> Self {
        LegendreParams { alpha: GridSpec { min: 0.0, max: 4.0, step: 0.01 } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct EvalParams {
    /// Bit word such as `"0110"`; bit 0 takes `p_j`.
    pub cylinder: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GibbsParams {
    pub q: f64,
}

impl Default for GibbsParams {
    fn default() -> Self {
        GibbsParams { q: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsParams {
    pub q: f64,
    /// The local q-grid is `[q - half_width, q + half_width]` at `step`.
    pub half_width: f64,
    pub step: f64,
}

impl Default for BoundsParams {
    fn default() -> Self {
        BoundsParams { q: 2.0, half_width: 0.5, step: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoarseParams {
    pub depth: u64,
    pub bin_width: f64,
    /// Explicit bin edges; replaces the default layout.
    pub edges: Option<Vec<f64>>,
}

impl Default for CoarseParams {
    fn default() -> Self {
        CoarseParams { depth: 16, bin_width: 0.01, edges: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleParams {
    /// Measure paths are drawn from; the main measure when absent.
    pub sampler: Option<WeightSequence>,
    pub depth: u64,
    pub trials: u64,
    pub bins: usize,
}

impl Default for SampleParams {
    fn default() -> Self {
        SampleParams { sampler: None, depth: 10_000, trials: 1000, bins: 50 }
    }
}

pub fn default_base() -> ConvexCombo {
    ConvexCombo::new(vec![(0.5, 0.1), (0.5, 0.4)]).expect("valid combination")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransitionParams {
    pub base: ConvexCombo,
    pub q1: f64,
    pub q2: f64,
    pub p5: Option<f64>,
    pub certificate: CertificateGrid,
}

impl Default for TransitionParams {
    fn default() -> Self {
        TransitionParams { base: default_base(), q1: 2.0, q2: 3.0, p5: None, certificate: CertificateGrid::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateParams {
    pub delta: f64,
    pub q_max: f64,
}

impl Default for GenerateParams {
    fn default() -> Self {
        GenerateParams { delta: 0.1, q_max: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackingParams {
    pub horizon: u64,
    pub q: GridSpec,
}

impl Default for TrackingParams {
    fn default() -> Self {
        TrackingParams { horizon: 100_000, q: GridSpec { min: 1.2, max: 8.0, step: 0.01 } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenseParams {
    pub base: ConvexCombo,
    pub stages: usize,
    /// Nested sequence; generated by midpoint refinement when absent.
    pub qs: Option<NestedDenseSequence>,
    pub generate: GenerateParams,
    pub schedule: BlockSchedule,
    pub certificate: CertificateGrid,
    /// Grid and threshold for kink detection on the analytic envelope.
    pub kink_grid: GridSpec,
    pub kink_threshold: f64,
    /// Finite-depth comparison; skipped when absent.
    pub tracking: Option<TrackingParams>,
}

impl Default for DenseParams {
    fn default() -> Self {
        DenseParams {
            base: default_base(),
            stages: 3,
            qs: None,
            generate: GenerateParams::default(),
            schedule: BlockSchedule::factorial(),
            certificate: CertificateGrid::default(),
            kink_grid: GridSpec { min: 1.2, max: 8.0, step: 1e-5 },
            kink_threshold: 5e-5,
            tracking: Some(TrackingParams::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KinkSource {
    /// Running-sup spectrum of `measure` on the spectrum grid.
    #[default]
    Measure,
    /// Analytic envelope of the `transition` base and its perturbation.
    Transition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KinkParams {
    pub source: KinkSource,
    pub threshold: f64,
    /// Grid for the analytic source.
    pub q: GridSpec,
}

impl Default for KinkParams {
    fn default() -> Self {
        KinkParams { source: KinkSource::Measure, threshold: 0.05, q: GridSpec { min: 1.01, max: 10.0, step: 1e-4 } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub command: Option<String>,
    pub seed: u64,
    pub measure: Option<WeightSequence>,
    pub spectrum: SpectrumParams,
    pub legendre: LegendreParams,
    pub eval: EvalParams,
    pub gibbs: GibbsParams,
    pub bounds: BoundsParams,
    pub coarse: CoarseParams,
    pub sample: SampleParams,
    pub transition: TransitionParams,
    pub dense: DenseParams,
    pub kinks: KinkParams,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            command: None,
            seed: 0,
            measure: None,
            spectrum: SpectrumParams::default(),
            legendre: LegendreParams::default(),
            eval: EvalParams::default(),
            gibbs: GibbsParams::default(),
            bounds: BoundsParams::default(),
            coarse: CoarseParams::default(),
            sample: SampleParams::default(),
            transition: TransitionParams::default(),
            dense: DenseParams::default(),
            kinks: KinkParams::default(),
        }
    }
}

impl Config {
    /// Reads JSON, or TOML when the extension is `.toml`.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation("io", format!("cannot read {}: {e}", path.display())))?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        if is_toml {
            toml::from_str(&text).map_err(|e| CliError::validation("config", e.to_string()))
        } else {
            serde_json::from_str(&text).map_err(|e| CliError::validation("config", e.to_string()))
        }
    }

    pub fn measure(&self) -> Result<&WeightSequence, CliError> {
        self.measure
            .as_ref()
            .ok_or_else(|| CliError::validation("config", "this command needs a `measure`".into()))
    }

    /// Fills every default that depends on other fields, so the echoed
    /// manifest reproduces the run without re-deriving anything.
    pub fn resolve(&mut self, command: &str) -> Result<(), CliError> {
        match &self.command {
            Some(c) if c != command => {
                return Err(CliError::validation("config", format!("config was written for `{c}`, not `{command}`")));
            }
            _ => self.command = Some(command.to_string()),
        }
        if self.spectrum.window_start.is_none() {
            self.spectrum.window_start = Some(self.spectrum.window()?.start);
        }
        if self.sample.sampler.is_none() {
            self.sample.sampler = self.measure.clone();
        }
        if self.transition.p5.is_none() && self.transition.base.len() >= 2 {
            self.transition.p5 = Some(default_p5(self.transition.base.terms()[1].p));
        }
        if self.dense.qs.is_none() {
            let g = &self.dense.generate;
            self.dense.qs = Some(NestedDenseSequence::generate(self.dense.stages, g.delta, g.q_max)?);
        }
        Ok(())
    }
}
