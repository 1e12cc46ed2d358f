//! Weight sequences `(p_j)` defining inhomogeneous Bernoulli products on the
//! dyadic tree, and exact log-space evaluation of cylinder masses.
//!
//! A level-`j` branch labelled `0` carries mass `p_j`, the branch labelled `1`
//! carries `1 - p_j`. All logarithms are base 2.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A weight strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_finite() && p > 0.0 && p < 1.0 {
            Ok(Probability(p))
        } else {
            Err(Error::InvalidProbability(p))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn complement(self) -> f64 {
        1.0 - self.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = Error;
    fn try_from(p: f64) -> Result<Self> {
        Probability::new(p)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

/// Rule generating the block lengths `ℓ_k`, `k >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase", deny_unknown_fields)]
pub enum BlockRule {
    /// `ℓ_k = k!`
    Factorial,
    /// `ℓ_k = max(1, round(scale * ratio^k))`
    Geometric { scale: f64, ratio: f64 },
    /// A finite list; levels past the last boundary are unresolvable.
    Explicit { lengths: Vec<u64> },
}

/// Block lengths `ℓ_k` with cumulative boundaries `L_k = ℓ_1 + ... + ℓ_k`.
///
/// Level `j` belongs to block `k` when `L_{k-1} < j <= L_k` (with `L_0 = 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BlockRule", into = "BlockRule")]
pub struct BlockSchedule {
    rule: BlockRule,
}

impl TryFrom<BlockRule> for BlockSchedule {
    type Error = Error;
    fn try_from(rule: BlockRule) -> Result<Self> {
        BlockSchedule::new(rule)
    }
}

impl From<BlockSchedule> for BlockRule {
    fn from(s: BlockSchedule) -> BlockRule {
        s.rule
    }
}

impl BlockSchedule {
    pub fn new(rule: BlockRule) -> Result<Self> {
        match &rule {
            BlockRule::Factorial => {}
            BlockRule::Geometric { scale, ratio } => {
                if !(scale.is_finite() && *scale > 0.0 && ratio.is_finite() && *ratio > 0.0) {
                    return Err(Error::Schedule(format!(
                        "geometric rule needs positive finite scale and ratio, got ({scale}, {ratio})"
                    )));
                }
            }
            BlockRule::Explicit { lengths } => {
                if lengths.is_empty() {
                    return Err(Error::Schedule("explicit rule needs at least one block".into()));
                }
                if lengths.iter().any(|&l| l == 0) {
                    return Err(Error::Schedule("block lengths must be >= 1".into()));
                }
            }
        }
        Ok(BlockSchedule { rule })
    }

    pub fn factorial() -> Self {
        BlockSchedule { rule: BlockRule::Factorial }
    }

    pub fn geometric(scale: f64, ratio: f64) -> Result<Self> {
        Self::new(BlockRule::Geometric { scale, ratio })
    }

    pub fn explicit(lengths: Vec<u64>) -> Result<Self> {
        Self::new(BlockRule::Explicit { lengths })
    }

    pub fn rule(&self) -> &BlockRule {
        &self.rule
    }

    /// Length `ℓ_k` of block `k >= 1`; `None` past the end of an explicit list.
    pub fn block_len(&self, k: usize) -> Option<u64> {
        assert!(k >= 1, "blocks are numbered from 1");
        match &self.rule {
            BlockRule::Factorial => Some((1..=k as u64).fold(1u64, |acc, i| acc.saturating_mul(i))),
            BlockRule::Geometric { scale, ratio } => {
                let l = (scale * ratio.powi(k as i32)).round();
                Some(if l.is_finite() && l >= 1.0 { l.min(u64::MAX as f64) as u64 } else { 1 })
            }
            BlockRule::Explicit { lengths } => lengths.get(k - 1).copied(),
        }
    }

    /// Boundaries `L_1, L_2, ...` up to the first one reaching `level`.
    pub fn boundaries_through(&self, level: u64) -> Result<Vec<u64>> {
        let mut out = Vec::new();
        let mut total = 0u64;
        let mut k = 1;
        while total < level {
            match self.block_len(k) {
                Some(l) => {
                    total = total.saturating_add(l);
                    out.push(total);
                    k += 1;
                }
                None => {
                    return Err(Error::Index { level, available: total });
                }
            }
        }
        Ok(out)
    }

    /// Index `k >= 1` of the block containing `level >= 1`.
    pub fn block_of(&self, level: u64) -> Result<usize> {
        if level == 0 {
            return Err(Error::Index { level, available: 0 });
        }
        let bounds = self.boundaries_through(level)?;
        Ok(bounds.partition_point(|&b| b < level) + 1)
    }

    /// Block index of every level `1..=n`.
    pub fn block_indices(&self, n: u64) -> Result<Vec<usize>> {
        let bounds = self.boundaries_through(n)?;
        let mut out = Vec::with_capacity(n as usize);
        let mut k = 0usize;
        for level in 1..=n {
            while bounds[k] < level {
                k += 1;
            }
            out.push(k + 1);
        }
        Ok(out)
    }
}

/// A finite bit word `ε_1 ... ε_n`; the empty word is the root.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Cylinder {
    bits: Vec<u8>,
}

impl Cylinder {
    pub fn root() -> Self {
        Cylinder::default()
    }

    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Argument("cylinder bits must be 0 or 1".into()));
        }
        Ok(Cylinder { bits })
    }

    /// Parses a word such as `"0110"`.
    pub fn parse(word: &str) -> Result<Self> {
        let bits = word
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::Argument(format!("invalid cylinder digit {other:?}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(Cylinder { bits })
    }

    pub fn depth(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn child(&self, bit: u8) -> Cylinder {
        let mut bits = self.bits.clone();
        bits.push(bit & 1);
        Cylinder { bits }
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }
}

impl std::fmt::Display for Cylinder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for b in &self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// One `(λ, p)` component of a low-discrepancy mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, Probability)", into = "(f64, Probability)")]
pub struct MixtureTerm {
    pub lambda: f64,
    pub p: Probability,
}

impl From<(f64, Probability)> for MixtureTerm {
    fn from((lambda, p): (f64, Probability)) -> Self {
        MixtureTerm { lambda, p }
    }
}

impl From<MixtureTerm> for (f64, Probability) {
    fn from(t: MixtureTerm) -> Self {
        (t.lambda, t.p)
    }
}

/// Tolerance on `Σ λ_i = 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

fn check_mixture(terms: &[MixtureTerm]) -> Result<()> {
    if terms.is_empty() {
        return Err(Error::Argument("mixture needs at least one term".into()));
    }
    if let Some(t) = terms.iter().find(|t| !(t.lambda > 0.0 && t.lambda <= 1.0)) {
        return Err(Error::Argument(format!("mixture weight {} outside (0, 1]", t.lambda)));
    }
    let sum: f64 = terms.iter().map(|t| t.lambda).sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::Argument(format!("mixture weights sum to {sum}, expected 1")));
    }
    Ok(())
}

/// Component chosen at each level `1..=n` by the greedy rule: at level `n`
/// pick the `i` maximizing `λ_i n - count_i(n-1)`, ties to the smallest index.
///
/// Deficits `λ_i n - count_i(n)` stay in `[-1, m - 1]` for `m` components.
pub fn greedy_assignment(lambdas: &[f64], n: u64) -> Vec<u32> {
    let mut counts = vec![0u64; lambdas.len()];
    let mut out = Vec::with_capacity(n as usize);
    for level in 1..=n {
        let lf = level as f64;
        let mut best = 0usize;
        let mut best_val = f64::NEG_INFINITY;
        for (i, &l) in lambdas.iter().enumerate() {
            let v = l * lf - counts[i] as f64;
            if v > best_val {
                best_val = v;
                best = i;
            }
        }
        counts[best] += 1;
        out.push(best as u32);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Constant(Probability),
    Periodic(Vec<Probability>),
    Explicit(Vec<Probability>),
    LowDiscrepancy(Vec<MixtureTerm>),
    BlockInterleaved { components: Vec<WeightSequence>, schedule: BlockSchedule },
    Diagonal { stages: Vec<WeightSequence>, schedule: BlockSchedule },
}

/// Deterministic generator of per-level weights `p_j ∈ (0, 1)`, `j >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SequenceSpec", into = "SequenceSpec")]
pub struct WeightSequence {
    kind: Kind,
}

impl WeightSequence {
    pub fn constant(p: f64) -> Result<Self> {
        Ok(WeightSequence { kind: Kind::Constant(Probability::new(p)?) })
    }

    pub fn periodic(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Argument("periodic sequence needs at least one value".into()));
        }
        let v = values.iter().map(|&p| Probability::new(p)).collect::<Result<_>>()?;
        Ok(WeightSequence { kind: Kind::Periodic(v) })
    }

    pub fn explicit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Argument("explicit sequence needs at least one value".into()));
        }
        let v = values.iter().map(|&p| Probability::new(p)).collect::<Result<_>>()?;
        Ok(WeightSequence { kind: Kind::Explicit(v) })
    }

    /// Greedy low-discrepancy realization of a mixture; see [`greedy_assignment`].
    pub fn low_discrepancy(terms: Vec<MixtureTerm>) -> Result<Self> {
        check_mixture(&terms)?;
        Ok(WeightSequence { kind: Kind::LowDiscrepancy(terms) })
    }

    /// Levels in block `k` use component `(k - 1) mod m`, at their absolute depth.
    pub fn block_interleaved(components: Vec<WeightSequence>, schedule: BlockSchedule) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Argument("block-interleaved sequence needs components".into()));
        }
        Ok(WeightSequence { kind: Kind::BlockInterleaved { components, schedule } })
    }

    /// Depths `<= L_1` use stage 1; depths in `(L_k, L_{k+1}]` use stage
    /// `min(k, S)`, at their absolute depth.
    pub fn diagonal(stages: Vec<WeightSequence>, schedule: BlockSchedule) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::Argument("diagonal sequence needs stages".into()));
        }
        Ok(WeightSequence { kind: Kind::Diagonal { stages, schedule } })
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.kind {
            Kind::Constant(_) => "constant",
            Kind::Periodic(_) => "periodic",
            Kind::Explicit(_) => "explicit",
            Kind::LowDiscrepancy(_) => "low-discrepancy",
            Kind::BlockInterleaved { .. } => "block-interleaved",
            Kind::Diagonal { .. } => "diagonal",
        }
    }

    /// Number of levels the sequence defines, `None` when unbounded.
    pub fn len(&self) -> Option<u64> {
        match &self.kind {
            Kind::Explicit(v) => Some(v.len() as u64),
            Kind::BlockInterleaved { schedule, .. } | Kind::Diagonal { schedule, .. } => {
                match schedule.rule() {
                    BlockRule::Explicit { lengths } => Some(lengths.iter().sum()),
                    _ => None,
                }
            }
            _ => None,
        }
    }

    /// `p_j` for `j >= 1`.
    pub fn weight_at(&self, j: u64) -> Result<Probability> {
        if j == 0 {
            return Err(Error::Index { level: 0, available: self.len().unwrap_or(u64::MAX) });
        }
        match &self.kind {
            Kind::Constant(p) => Ok(*p),
            Kind::Periodic(v) => Ok(v[((j - 1) % v.len() as u64) as usize]),
            Kind::Explicit(v) => v
                .get((j - 1) as usize)
                .copied()
                .ok_or(Error::Index { level: j, available: v.len() as u64 }),
            Kind::LowDiscrepancy(terms) => {
                let lambdas: Vec<f64> = terms.iter().map(|t| t.lambda).collect();
                let idx = *greedy_assignment(&lambdas, j).last().unwrap();
                Ok(terms[idx as usize].p)
            }
            Kind::BlockInterleaved { components, schedule } => {
                let k = schedule.block_of(j)?;
                components[(k - 1) % components.len()].weight_at(j)
            }
            Kind::Diagonal { stages, schedule } => {
                let b = schedule.block_of(j)?;
                stages[diagonal_stage(b, stages.len())].weight_at(j)
            }
        }
    }

    /// The first `n` weights `p_1, ..., p_n`.
    pub fn weights(&self, n: u64) -> Result<Vec<f64>> {
        match &self.kind {
            Kind::Constant(p) => Ok(vec![p.get(); n as usize]),
            Kind::Periodic(v) => Ok((0..n as usize).map(|i| v[i % v.len()].get()).collect()),
            Kind::Explicit(v) => {
                if n as usize > v.len() {
                    return Err(Error::Index { level: n, available: v.len() as u64 });
                }
                Ok(v[..n as usize].iter().map(|p| p.get()).collect())
            }
            Kind::LowDiscrepancy(terms) => {
                let lambdas: Vec<f64> = terms.iter().map(|t| t.lambda).collect();
                Ok(greedy_assignment(&lambdas, n)
                    .into_iter()
                    .map(|i| terms[i as usize].p.get())
                    .collect())
            }
            Kind::BlockInterleaved { components, schedule } => {
                let blocks = schedule.block_indices(n)?;
                let owner: Vec<usize> = blocks.iter().map(|&k| (k - 1) % components.len()).collect();
                select_levels(components, &owner)
            }
            Kind::Diagonal { stages, schedule } => {
                let blocks = schedule.block_indices(n)?;
                let owner: Vec<usize> = blocks.iter().map(|&b| diagonal_stage(b, stages.len())).collect();
                select_levels(stages, &owner)
            }
        }
    }

    /// Applies `f` to every weight value while keeping the level structure.
    pub(crate) fn map_values(&self, f: &impl Fn(f64) -> Result<f64>) -> Result<Self> {
        let map_all = |v: &[Probability]| -> Result<Vec<Probability>> {
            v.iter().map(|p| Probability::new(f(p.get())?)).collect()
        };
        let kind = match &self.kind {
            Kind::Constant(p) => Kind::Constant(Probability::new(f(p.get())?)?),
            Kind::Periodic(v) => Kind::Periodic(map_all(v)?),
            Kind::Explicit(v) => Kind::Explicit(map_all(v)?),
            Kind::LowDiscrepancy(terms) => Kind::LowDiscrepancy(
                terms
                    .iter()
                    .map(|t| Ok(MixtureTerm { lambda: t.lambda, p: Probability::new(f(t.p.get())?)? }))
                    .collect::<Result<_>>()?,
            ),
            Kind::BlockInterleaved { components, schedule } => Kind::BlockInterleaved {
                components: components.iter().map(|c| c.map_values(f)).collect::<Result<_>>()?,
                schedule: schedule.clone(),
            },
            Kind::Diagonal { stages, schedule } => Kind::Diagonal {
                stages: stages.iter().map(|c| c.map_values(f)).collect::<Result<_>>()?,
                schedule: schedule.clone(),
            },
        };
        Ok(WeightSequence { kind })
    }

    pub fn components(&self) -> &[WeightSequence] {
        match &self.kind {
            Kind::BlockInterleaved { components, .. } => components,
            Kind::Diagonal { stages, .. } => stages,
            _ => &[],
        }
    }

    pub fn schedule(&self) -> Option<&BlockSchedule> {
        match &self.kind {
            Kind::BlockInterleaved { schedule, .. } | Kind::Diagonal { schedule, .. } => Some(schedule),
            _ => None,
        }
    }

    pub fn mixture_terms(&self) -> Option<&[MixtureTerm]> {
        match &self.kind {
            Kind::LowDiscrepancy(t) => Some(t),
            _ => None,
        }
    }

    /// Largest `-log2 min(p_j, 1 - p_j)` over the weight values the definition mentions.
    pub fn max_level_exponent(&self) -> f64 {
        let e = |p: Probability| -(p.get().min(p.complement())).log2();
        match &self.kind {
            Kind::Constant(p) => e(*p),
            Kind::Periodic(v) | Kind::Explicit(v) => v.iter().map(|&p| e(p)).fold(0.0, f64::max),
            Kind::LowDiscrepancy(t) => t.iter().map(|t| e(t.p)).fold(0.0, f64::max),
            Kind::BlockInterleaved { components, .. } => {
                components.iter().map(|c| c.max_level_exponent()).fold(0.0, f64::max)
            }
            Kind::Diagonal { stages, .. } => stages.iter().map(|c| c.max_level_exponent()).fold(0.0, f64::max),
        }
    }
}

fn diagonal_stage(block: usize, stages: usize) -> usize {
    (block.saturating_sub(1)).clamp(1, stages) - 1
}

fn select_levels(parts: &[WeightSequence], owner: &[usize]) -> Result<Vec<f64>> {
    let mut needed = vec![0u64; parts.len()];
    for (j, &o) in owner.iter().enumerate() {
        needed[o] = j as u64 + 1;
    }
    let resolved: Vec<Vec<f64>> = parts
        .iter()
        .zip(&needed)
        .map(|(s, &n)| if n == 0 { Ok(Vec::new()) } else { s.weights(n) })
        .collect::<Result<_>>()?;
    Ok(owner.iter().enumerate().map(|(j, &o)| resolved[o][j]).collect())
}

/// `log2 μ(c) = Σ_j [ε_j = 0] log2 p_j + [ε_j = 1] log2(1 - p_j)`.
pub fn cylinder_measure(seq: &WeightSequence, c: &Cylinder) -> Result<f64> {
    if c.depth() == 0 {
        return Ok(0.0);
    }
    let w = seq.weights(c.depth() as u64)?;
    Ok(log2_mass(&w, c.bits()))
}

/// Log mass of a bit word against already-resolved weights.
pub fn log2_mass(weights: &[f64], bits: &[u8]) -> f64 {
    weights
        .iter()
        .zip(bits)
        .map(|(&p, &b)| if b == 0 { p.log2() } else { (1.0 - p).log2() })
        .sum()
}

/// Draws a depth-`n` path: bit 0 with probability `p_j`, bit 1 otherwise.
pub fn sample_path<R: Rng + ?Sized>(seq: &WeightSequence, n: u64, rng: &mut R) -> Result<Cylinder> {
    if n == 0 {
        return Err(Error::Argument("sample depth must be >= 1".into()));
    }
    let w = seq.weights(n)?;
    Ok(Cylinder { bits: sample_bits(&w, rng) })
}

pub(crate) fn sample_bits<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Vec<u8> {
    weights.iter().map(|&p| if rng.gen::<f64>() < p { 0 } else { 1 }).collect()
}

/// Levels grouped by distinct weight value, in order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelProfile {
    pub values: Vec<f64>,
    /// `index[j]` is the position in `values` of `p_{j+1}`.
    pub index: Vec<u32>,
}

impl LevelProfile {
    pub fn new(weights: &[f64]) -> Self {
        let mut lookup: HashMap<u64, u32> = HashMap::new();
        let mut values = Vec::new();
        let index = weights
            .iter()
            .map(|&p| {
                *lookup.entry(p.to_bits()).or_insert_with(|| {
                    values.push(p);
                    (values.len() - 1) as u32
                })
            })
            .collect();
        LevelProfile { values, index }
    }

    pub fn of(seq: &WeightSequence, n: u64) -> Result<Self> {
        Ok(Self::new(&seq.weights(n)?))
    }

    pub fn depth(&self) -> usize {
        self.index.len()
    }

    /// Multiplicity of each distinct value among the first `n` levels.
    pub fn counts(&self, n: usize) -> Vec<u64> {
        let mut c = vec![0u64; self.values.len()];
        for &i in &self.index[..n] {
            c[i as usize] += 1;
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum KindTag {
    Constant,
    Periodic,
    Explicit,
    LowDiscrepancy,
    BlockInterleaved,
    Diagonal,
}

/// Config/manifest form: `{ "kind": ..., "params": {...}, "schedule": {...} }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SequenceSpec {
    kind: KindTag,
    params: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schedule: Option<BlockSchedule>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantParams {
    p: Probability,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ValuesParams {
    values: Vec<Probability>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermsParams {
    terms: Vec<MixtureTerm>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentsParams {
    components: Vec<WeightSequence>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StagesParams {
    stages: Vec<WeightSequence>,
}

fn params<T: serde::de::DeserializeOwned>(v: serde_json::Value, kind: &str) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::Argument(format!("{kind} params: {e}")))
}

impl TryFrom<SequenceSpec> for WeightSequence {
    type Error = Error;

    fn try_from(spec: SequenceSpec) -> Result<Self> {
        let needs_schedule = matches!(spec.kind, KindTag::BlockInterleaved | KindTag::Diagonal);
        if needs_schedule != spec.schedule.is_some() {
            return Err(Error::Argument(if needs_schedule {
                "block-interleaved and diagonal sequences need a schedule".into()
            } else {
                "schedule is only valid for block-interleaved and diagonal sequences".into()
            }));
        }
        let to_f = |v: Vec<Probability>| v.into_iter().map(f64::from).collect::<Vec<_>>();
        match spec.kind {
            KindTag::Constant => {
                let p: ConstantParams = params(spec.params, "constant")?;
                Ok(WeightSequence { kind: Kind::Constant(p.p) })
            }
            KindTag::Periodic => WeightSequence::periodic(&to_f(params::<ValuesParams>(spec.params, "periodic")?.values)),
            KindTag::Explicit => WeightSequence::explicit(&to_f(params::<ValuesParams>(spec.params, "explicit")?.values)),
            KindTag::LowDiscrepancy => {
                WeightSequence::low_discrepancy(params::<TermsParams>(spec.params, "low-discrepancy")?.terms)
            }
            KindTag::BlockInterleaved => WeightSequence::block_interleaved(
                params::<ComponentsParams>(spec.params, "block-interleaved")?.components,
                spec.schedule.unwrap(),
            ),
            KindTag::Diagonal => WeightSequence::diagonal(
                params::<StagesParams>(spec.params, "diagonal")?.stages,
                spec.schedule.unwrap(),
            ),
        }
    }
}

impl From<WeightSequence> for SequenceSpec {
    fn from(seq: WeightSequence) -> Self {
        let (kind, params, schedule) = match seq.kind {
            Kind::Constant(p) => (KindTag::Constant, to_value(&ConstantParams { p }), None),
            Kind::Periodic(values) => (KindTag::Periodic, to_value(&ValuesParams { values }), None),
            Kind::Explicit(values) => (KindTag::Explicit, to_value(&ValuesParams { values }), None),
            Kind::LowDiscrepancy(terms) => (KindTag::LowDiscrepancy, to_value(&TermsParams { terms }), None),
            Kind::BlockInterleaved { components, schedule } => {
                (KindTag::BlockInterleaved, to_value(&ComponentsParams { components }), Some(schedule))
            }
            Kind::Diagonal { stages, schedule } => {
                (KindTag::Diagonal, to_value(&StagesParams { stages }), Some(schedule))
            }
        };
        SequenceSpec { kind, params, schedule }
    }
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("params serialize to JSON")
}
