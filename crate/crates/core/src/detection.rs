//! Periodogram statistic and the four-level minimum-average-cost detector.
//!
//! A subcarrier `k` and its mirror `-k` give four states: noise only (H0),
//! image leakage from an active mirror (H1), a primary signal on `k` (H2),
//! and both (H3). Given the received component variance `σᵢ²` under each
//! state, the averaged periodogram `Z` is Gamma distributed with shape `N`
//! and scale `2σᵢ²/N`, so every conditional density is a line in log space
//! and the equal-prior, uniform-cost rule is the maximum-likelihood partition:
//! hypotheses sorted by variance each own one interval, separated by the
//! pairwise density crossings
//!
//! ```text
//! S_ij = 2 ln(σᵢ²/σⱼ²) / (1/σⱼ² - 1/σᵢ²)
//! ```
//!
//! The crossing does not depend on `N`. A literal evaluation of the
//! published expressions (scale `Nσᵢ²`, thresholds carrying `N²`) is
//! available through [`literal_thresholds`] for side-by-side comparison.

use crate::error::{Error, Result};
use crate::numerics::{gamma_isf, gamma_sf, ExponentialMixture, GammaScale, GammaShape};
use crate::signal_model::{psk_alphabet, ComplexSample, MismatchCoefficients, SubcarrierPairConfig};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Relative variance gap below which two hypotheses are merged.
pub const DEFAULT_MERGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
    H2,
    H3,
}

impl Hypothesis {
    pub const ALL: [Hypothesis; 4] = [Hypothesis::H0, Hypothesis::H1, Hypothesis::H2, Hypothesis::H3];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            Hypothesis::H0 => "H0",
            Hypothesis::H1 => "H1",
            Hypothesis::H2 => "H2",
            Hypothesis::H3 => "H3",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Hypothesis::H0 => "Only Noise",
            Hypothesis::H1 => "I/Q Imbalance+Noise",
            Hypothesis::H2 => "Primary user signal+Noise",
            Hypothesis::H3 => "Primary user signal+I/Q Imbalance+Noise",
        }
    }

    /// True state has a primary signal on `k`.
    pub fn primary_on_k(self) -> bool {
        matches!(self, Hypothesis::H2 | Hypothesis::H3)
    }

    /// True state has a primary signal on the mirror `-k`.
    pub fn primary_on_mirror(self) -> bool {
        matches!(self, Hypothesis::H1 | Hypothesis::H3)
    }

    pub fn from_activity(on_k: bool, on_mirror: bool) -> Self {
        match (on_k, on_mirror) {
            (false, false) => Hypothesis::H0,
            (false, true) => Hypothesis::H1,
            (true, false) => Hypothesis::H2,
            (true, true) => Hypothesis::H3,
        }
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Per-component variance of the received sample under each hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisVariances {
    sigma_sq: [f64; 4],
}

impl HypothesisVariances {
    pub fn new(sigma0_sq: f64, sigma1_sq: f64, sigma2_sq: f64, sigma3_sq: f64) -> Result<Self> {
        Self::from_array([sigma0_sq, sigma1_sq, sigma2_sq, sigma3_sq])
    }

    pub fn from_array(sigma_sq: [f64; 4]) -> Result<Self> {
        for (i, v) in sigma_sq.iter().enumerate() {
            if !(v.is_finite() && *v > 0.0) {
                return Err(Error::Domain(format!("variance of H{i} must be positive and finite, got {v}")));
            }
        }
        Ok(Self { sigma_sq })
    }

    pub fn get(&self, h: Hypothesis) -> f64 {
        self.sigma_sq[h.index()]
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.sigma_sq
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::from_array(self.sigma_sq.map(|v| v * c))
    }

    /// `σ₀² < σ₁² < σ₂² < σ₃²`, the ordering assumed by the closed forms.
    pub fn strictly_ordered(&self) -> bool {
        self.sigma_sq.windows(2).all(|w| w[0] < w[1])
    }
}

/// How the symbol-dependent cross term of `σ₃²` is handled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SymbolMode {
    /// Expectation over independent uniform PSK symbols (cross term vanishes).
    Averaged,
    /// Cross term evaluated for a given symbol pair.
    Conditioned { s_k: ComplexSample, s_mk: ComplexSample },
}

pub fn hypothesis_variances(
    cfg: &SubcarrierPairConfig,
    tx: &MismatchCoefficients,
    symbol_mode: SymbolMode,
) -> HypothesisVariances {
    let (sk_sq, smk_sq, cross) = match symbol_mode {
        SymbolMode::Averaged => (1.0, 1.0, 0.0),
        SymbolMode::Conditioned { s_k, s_mk } => {
            let c = tx.alpha * tx.beta * s_k * s_mk.conj();
            (s_k.norm_sqr(), s_mk.norm_sqr(), 2.0 * (cfg.power_k * cfg.power_mk).sqrt() * c.re)
        }
    };
    let sigma0 = 0.5 * cfg.noise_var;
    let sigma1 = 0.5 * tx.beta.norm_sqr() * cfg.power_mk * smk_sq * cfg.channel_var + sigma0;
    let direct = tx.alpha.norm_sqr() * cfg.power_k * sk_sq;
    let sigma2 = 0.5 * direct * cfg.channel_var + sigma0;
    let sigma3 = 0.5 * (direct + cross) * cfg.channel_var + sigma1;
    HypothesisVariances { sigma_sq: [sigma0, sigma1, sigma2, sigma3] }
}

/// Gamma scale of `Z` under a hypothesis: `2σ²/N`, so the mean is `2σ²` for every `N`.
pub fn scale_of(variance: f64, shape: GammaShape) -> Result<GammaScale> {
    GammaScale::new(2.0 * variance / shape.as_f64())
}

/// Averaged periodogram `Z = (1/N) Σ |y_i|²`.
pub fn periodogram(samples: &[ComplexSample], shape: GammaShape) -> Result<f64> {
    let n = shape.get() as usize;
    if samples.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: samples.len() });
    }
    Ok(samples.iter().map(|y| y.norm_sqr()).sum::<f64>() / n as f64)
}

/// Crossing of the two conditional densities, for distinct variances.
fn density_crossing(a: f64, b: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let gap = hi - lo;
    2.0 * hi * lo * (gap / lo).ln_1p() / gap
}

fn nearly_equal(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() / a.min(b) < tol
}

/// Equal-likelihood point between two hypotheses.
///
/// The result is symmetric in its arguments, lies strictly between the two
/// means `2σⱼ²` and `2σᵢ²`, and does not depend on `shape`.
pub fn pairwise_threshold(var_i: f64, var_j: f64, shape: GammaShape) -> Result<f64> {
    let _ = shape;
    for v in [var_i, var_j] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Domain(format!("variance must be positive, got {v}")));
        }
    }
    if nearly_equal(var_i, var_j, DEFAULT_MERGE_TOL) {
        return Err(Error::DegeneratePair(var_i, var_j));
    }
    Ok(density_crossing(var_i, var_j))
}

/// All six pairwise thresholds, `None` on the diagonal and for merged pairs.
pub fn pairwise_thresholds(v: &HypothesisVariances, shape: GammaShape) -> [[Option<f64>; 4]; 4] {
    std::array::from_fn(|i| {
        std::array::from_fn(|j| (i != j).then(|| pairwise_threshold(v.sigma_sq[i], v.sigma_sq[j], shape).ok()).flatten())
    })
}

/// The three ordering chains `S01<S02<S03`, `S02<S12<S13`, `S03<S13<S23`.
pub fn ordering_chains_hold(v: &HypothesisVariances, shape: GammaShape) -> bool {
    let s = pairwise_thresholds(v, shape);
    let chain = |a: Option<f64>, b: Option<f64>, c: Option<f64>| match (a, b, c) {
        (Some(a), Some(b), Some(c)) => a < b && b < c,
        _ => false,
    };
    chain(s[0][1], s[0][2], s[0][3]) && chain(s[0][2], s[1][2], s[1][3]) && chain(s[0][3], s[1][3], s[2][3])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DetectorMode {
    #[serde(rename = "four")]
    FourLevel,
    #[serde(rename = "two-bayes")]
    TwoLevelBayes,
    #[serde(rename = "two-cfar")]
    TwoLevelCfar { target_pfa: f64 },
}

impl DetectorMode {
    pub fn validate(&self) -> Result<()> {
        if let DetectorMode::TwoLevelCfar { target_pfa } = self {
            if !(*target_pfa > 0.0 && *target_pfa <= 1.0) {
                return Err(Error::Domain(format!("CFAR target must lie in (0, 1], got {target_pfa}")));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self {
            DetectorMode::FourLevel => "four-level".into(),
            DetectorMode::TwoLevelBayes => "two-level-bayes".into(),
            DetectorMode::TwoLevelCfar { target_pfa } => format!("two-level-cfar({target_pfa})"),
        }
    }
}

impl FromStr for DetectorMode {
    type Err = Error;

    /// Accepts `four`, `two-bayes`, and `two-cfar` or `two-cfar:<p>`.
    fn from_str(s: &str) -> Result<Self> {
        let mode = match s {
            "four" => DetectorMode::FourLevel,
            "two-bayes" => DetectorMode::TwoLevelBayes,
            "two-cfar" => DetectorMode::TwoLevelCfar { target_pfa: 0.1 },
            other => match other.strip_prefix("two-cfar:") {
                Some(p) => DetectorMode::TwoLevelCfar {
                    target_pfa: p.parse().map_err(|_| Error::Config(format!("bad CFAR target '{p}'")))?,
                },
                None => return Err(Error::Config(format!("unknown detector mode '{other}'"))),
            },
        };
        mode.validate()?;
        Ok(mode)
    }
}

/// Hypotheses sharing one decision region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionGroup {
    /// Reported decision: the lowest-index member.
    pub decided: Hypothesis,
    pub members: Vec<Hypothesis>,
    pub variance: f64,
}

/// Partition of the statistic axis into decision regions.
///
/// Regions are ordered by increasing variance and separated by
/// `boundaries`; a value equal to a boundary belongs to the upper region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionRule {
    groups: Vec<RegionGroup>,
    boundaries: Vec<f64>,
    merged: Vec<(Hypothesis, Hypothesis)>,
    shape: GammaShape,
}

/// Four-level maximum-likelihood rule.
pub fn decision_rule(v: &HypothesisVariances, shape: GammaShape, merge_tol: f64) -> DecisionRule {
    let mut order = Hypothesis::ALL;
    order.sort_by(|a, b| v.get(*a).total_cmp(&v.get(*b)).then(a.cmp(b)));

    let mut groups: Vec<RegionGroup> = Vec::new();
    for h in order {
        let var = v.get(h);
        match groups.last_mut() {
            Some(g) if nearly_equal(g.variance, var, merge_tol) => {
                g.members.push(h);
                g.decided = g.decided.min(h);
            }
            _ => groups.push(RegionGroup { decided: h, members: vec![h], variance: var }),
        }
    }

    let mut merged = Vec::new();
    for g in &groups {
        let mut members = g.members.clone();
        members.sort();
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                merged.push((members[i], members[j]));
            }
        }
    }
    merged.sort();

    let boundaries: Vec<f64> = groups.windows(2).map(|w| density_crossing(w[0].variance, w[1].variance)).collect();
    debug_assert!(boundaries.windows(2).all(|w| w[0] < w[1]), "{boundaries:?}");

    DecisionRule { groups, boundaries, merged, shape }
}

/// Single-threshold rule for the two-level baselines; idle decides H0, busy decides H2.
pub fn two_level_rule(v: &HypothesisVariances, shape: GammaShape, mode: DetectorMode) -> Result<DecisionRule> {
    mode.validate()?;
    let threshold = match mode {
        DetectorMode::FourLevel => {
            return Err(Error::Domain("two_level_rule needs a two-level detector mode".into()));
        }
        DetectorMode::TwoLevelBayes => pairwise_threshold(v.get(Hypothesis::H2), v.get(Hypothesis::H0), shape)?,
        DetectorMode::TwoLevelCfar { target_pfa } => {
            gamma_isf(shape, scale_of(v.get(Hypothesis::H0), shape)?, target_pfa)?
        }
    };
    Ok(DecisionRule::binary(threshold, v, shape))
}

/// Rule for any detector mode.
pub fn rule_for_mode(
    v: &HypothesisVariances,
    shape: GammaShape,
    mode: DetectorMode,
    merge_tol: f64,
) -> Result<DecisionRule> {
    match mode {
        DetectorMode::FourLevel => Ok(decision_rule(v, shape, merge_tol)),
        _ => two_level_rule(v, shape, mode),
    }
}

impl DecisionRule {
    fn binary(threshold: f64, v: &HypothesisVariances, shape: GammaShape) -> Self {
        use Hypothesis::*;
        DecisionRule {
            groups: vec![
                RegionGroup { decided: H0, members: vec![H0, H1], variance: v.get(H0) },
                RegionGroup { decided: H2, members: vec![H2, H3], variance: v.get(H2) },
            ],
            boundaries: vec![threshold],
            merged: vec![(H0, H1), (H2, H3)],
            shape,
        }
    }

    pub fn groups(&self) -> &[RegionGroup] {
        &self.groups
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn merged(&self) -> &[(Hypothesis, Hypothesis)] {
        &self.merged
    }

    pub fn shape(&self) -> GammaShape {
        self.shape
    }

    pub fn is_merged(&self, a: Hypothesis, b: Hypothesis) -> bool {
        let key = if a <= b { (a, b) } else { (b, a) };
        self.merged.contains(&key)
    }

    fn group_of(&self, h: Hypothesis) -> usize {
        self.groups.iter().position(|g| g.members.contains(&h)).expect("every hypothesis has a region")
    }

    /// Boundary between the regions of `a` and `b` when they are adjacent.
    pub fn threshold_between(&self, a: Hypothesis, b: Hypothesis) -> Option<f64> {
        let (ga, gb) = (self.group_of(a), self.group_of(b));
        if ga.abs_diff(gb) != 1 {
            return None;
        }
        Some(self.boundaries[ga.min(gb)])
    }

    pub fn s01(&self) -> Option<f64> {
        self.threshold_between(Hypothesis::H0, Hypothesis::H1)
    }

    pub fn s12(&self) -> Option<f64> {
        self.threshold_between(Hypothesis::H1, Hypothesis::H2)
    }

    pub fn s23(&self) -> Option<f64> {
        self.threshold_between(Hypothesis::H2, Hypothesis::H3)
    }

    /// Decision regions as `(decided, lower, upper)` with `upper = ∞` for the last.
    pub fn regions(&self) -> Vec<(Hypothesis, f64, f64)> {
        self.groups
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let lo = if i == 0 { 0.0 } else { self.boundaries[i - 1] };
                let hi = self.boundaries.get(i).copied().unwrap_or(f64::INFINITY);
                (g.decided, lo, hi)
            })
            .collect()
    }

    #[inline]
    pub fn classify(&self, z: f64) -> Hypothesis {
        let idx = self.boundaries.partition_point(|b| *b <= z);
        self.groups[idx].decided
    }
}

/// Whether a decided hypothesis makes the secondary user treat `k` as occupied.
pub fn busy_decision(h: Hypothesis, mode: DetectorMode) -> bool {
    let _ = mode;
    // Two-level rules report their busy region as H2, so one test serves every mode.
    h.primary_on_k()
}

/// How conditional probabilities are combined into `P_fa` and `P_D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    /// Unweighted sums of conditionals; can exceed one.
    UnweightedSum,
    /// Equal-prior average of the busy probabilities; a proper probability.
    PriorWeighted,
}

impl Convention {
    pub const BOTH: [Convention; 2] = [Convention::UnweightedSum, Convention::PriorWeighted];

    pub fn label(self) -> &'static str {
        match self {
            Convention::UnweightedSum => "unweighted-sum",
            Convention::PriorWeighted => "prior-weighted",
        }
    }
}

/// Law of the statistic `Z` under one hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub enum StatisticLaw {
    Gamma { shape: GammaShape, scale: GammaScale },
    /// Average of `shape` packets, each exponential with a symbol-dependent mean.
    MixtureSum { shape: GammaShape, packet: ExponentialMixture },
}

impl StatisticLaw {
    pub fn sf(&self, z: f64) -> Result<f64> {
        if z == f64::INFINITY {
            return Ok(0.0);
        }
        match self {
            StatisticLaw::Gamma { shape, scale } => gamma_sf(*shape, *scale, z),
            StatisticLaw::MixtureSum { shape, packet } => packet.sum_sf(*shape, shape.as_f64() * z),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            StatisticLaw::Gamma { shape, scale } => shape.as_f64() * scale.get(),
            StatisticLaw::MixtureSum { packet, .. } => packet.mean(),
        }
    }
}

/// Gamma laws implied by a variance quadruple.
pub fn gamma_laws(v: &HypothesisVariances, shape: GammaShape) -> Result<[StatisticLaw; 4]> {
    let law = |h: Hypothesis| -> Result<StatisticLaw> { Ok(StatisticLaw::Gamma { shape, scale: scale_of(v.get(h), shape)? }) };
    Ok([law(Hypothesis::H0)?, law(Hypothesis::H1)?, law(Hypothesis::H2)?, law(Hypothesis::H3)?])
}

/// Per-packet means of `|r|²` under `h`, one entry per value of the symbol
/// product `s_k s_{-k}` when it matters and a single entry otherwise.
///
/// `r` is the sample on `k`, or `α_R y_k + β_R conj(y_{-k})` when a receiver
/// mismatch is given. Given the symbols `r` is circular Gaussian, so each
/// entry is the mean of an exponential packet energy.
pub fn packet_energy_means(
    cfg: &SubcarrierPairConfig,
    tx: &MismatchCoefficients,
    rx: Option<&MismatchCoefficients>,
    h: Hypothesis,
) -> Result<Vec<f64>> {
    let pk = if h.primary_on_k() { cfg.power_k } else { 0.0 };
    let pm = if h.primary_on_mirror() { cfg.power_mk } else { 0.0 };
    let (a2, b2) = (tx.alpha.norm_sqr(), tx.beta.norm_sqr());
    let coupling = tx.alpha * tx.beta.conj();
    let amp = 2.0 * (pk * pm).sqrt();
    let products = if amp > 0.0 && coupling.norm_sqr() > 0.0 {
        psk_alphabet(cfg.psk_order)?
    } else {
        vec![ComplexSample::ONE]
    };
    Ok(products
        .into_iter()
        .map(|u| {
            let cross = amp * (coupling * u).re;
            let on_k = (a2 * pk + b2 * pm + cross).max(0.0) * cfg.channel_var + cfg.noise_var;
            match rx {
                None => on_k,
                Some(rx) => {
                    let on_mirror = (a2 * pm + b2 * pk + cross).max(0.0) * cfg.channel_var_mirror + cfg.noise_var;
                    rx.alpha.norm_sqr() * on_k + rx.beta.norm_sqr() * on_mirror
                }
            }
        })
        .collect())
}

/// Per-component variances of the joint Tx–Rx output, averaged over symbols.
pub fn joint_hypothesis_variances(
    cfg: &SubcarrierPairConfig,
    tx: &MismatchCoefficients,
    rx: &MismatchCoefficients,
) -> Result<HypothesisVariances> {
    let mut out = [0.0; 4];
    for h in Hypothesis::ALL {
        let means = packet_energy_means(cfg, tx, Some(rx), h)?;
        out[h.index()] = 0.5 * means.iter().sum::<f64>() / means.len() as f64;
    }
    HypothesisVariances::from_array(out)
}

/// Exact laws of `Z` for independent per-packet fading and uniform PSK symbols.
///
/// With both subcarriers active the instantaneous power depends on the
/// product `s_k s_{-k}`, which is uniform over the alphabet, so each packet
/// is an equal-weight mixture of `M` exponentials and `Z` is not Gamma. The
/// other hypotheses are pure Gamma laws.
pub fn symbol_averaged_laws(
    cfg: &SubcarrierPairConfig,
    tx: &MismatchCoefficients,
    rx: Option<&MismatchCoefficients>,
    shape: GammaShape,
) -> Result<[StatisticLaw; 4]> {
    let law = |h: Hypothesis| -> Result<StatisticLaw> {
        let means = packet_energy_means(cfg, tx, rx, h)?;
        if means.len() == 1 {
            Ok(StatisticLaw::Gamma { shape, scale: GammaScale::new(means[0] / shape.as_f64())? })
        } else {
            let weights = vec![1.0; means.len()];
            Ok(StatisticLaw::MixtureSum { shape, packet: ExponentialMixture::new(means, weights)? })
        }
    };
    Ok([law(Hypothesis::H0)?, law(Hypothesis::H1)?, law(Hypothesis::H2)?, law(Hypothesis::H3)?])
}

/// `P(decide j | true i)` indexed `[i][j]`.
pub type ConditionalMatrix = [[f64; 4]; 4];

pub fn conditional_matrix(laws: &[StatisticLaw; 4], rule: &DecisionRule) -> Result<ConditionalMatrix> {
    let mut m = [[0.0; 4]; 4];
    let regions = rule.regions();
    for (i, law) in laws.iter().enumerate() {
        for (decided, lo, hi) in &regions {
            let p = law.sf(*lo)? - law.sf(*hi)?;
            m[i][decided.index()] += p.max(0.0);
        }
    }
    Ok(m)
}

/// `P(busy | H)` from a conditional matrix.
pub fn busy_probability(m: &ConditionalMatrix, h: Hypothesis) -> f64 {
    m[h.index()][2] + m[h.index()][3]
}

pub fn false_alarm_from(m: &ConditionalMatrix, convention: Convention) -> f64 {
    let b0 = busy_probability(m, Hypothesis::H0);
    let b1 = busy_probability(m, Hypothesis::H1);
    match convention {
        Convention::UnweightedSum => b0 + b1,
        Convention::PriorWeighted => 0.5 * (b0 + b1),
    }
}

pub fn detection_from(m: &ConditionalMatrix, convention: Convention) -> f64 {
    match convention {
        Convention::UnweightedSum => m[2][2] + m[3][3],
        Convention::PriorWeighted => {
            0.5 * (busy_probability(m, Hypothesis::H2) + busy_probability(m, Hypothesis::H3))
        }
    }
}

/// Closed-form false-alarm probability under the Gamma laws of `v`.
pub fn analytic_false_alarm(v: &HypothesisVariances, rule: &DecisionRule, convention: Convention) -> Result<f64> {
    let m = conditional_matrix(&gamma_laws(v, rule.shape())?, rule)?;
    Ok(false_alarm_from(&m, convention))
}

/// Closed-form detection probability under the Gamma laws of `v`.
pub fn analytic_detection(v: &HypothesisVariances, rule: &DecisionRule, convention: Convention) -> Result<f64> {
    let m = conditional_matrix(&gamma_laws(v, rule.shape())?, rule)?;
    Ok(detection_from(&m, convention))
}

/// The four-term false-alarm sum over the H2 and H3 regions, before telescoping.
pub fn false_alarm_four_terms(v: &HypothesisVariances, rule: &DecisionRule) -> Result<Option<f64>> {
    let (Some(s12), Some(s23)) = (rule.s12(), rule.s23()) else {
        return Ok(None);
    };
    let shape = rule.shape();
    let q = |h: Hypothesis, t: f64| -> Result<f64> { gamma_sf(shape, scale_of(v.get(h), shape)?, t) };
    use Hypothesis::*;
    Ok(Some(
        (q(H1, s12)? - q(H1, s23)?) + (q(H0, s12)? - q(H0, s23)?) + q(H1, s23)? + q(H0, s23)?,
    ))
}

/// The telescoped two-term form `Q(N, S12/scale1) + Q(N, S12/scale0)`.
pub fn false_alarm_two_terms(v: &HypothesisVariances, rule: &DecisionRule) -> Result<Option<f64>> {
    let Some(s12) = rule.s12() else {
        return Ok(None);
    };
    let shape = rule.shape();
    let q = |h: Hypothesis| -> Result<f64> { gamma_sf(shape, scale_of(v.get(h), shape)?, s12) };
    Ok(Some(q(Hypothesis::H1)? + q(Hypothesis::H0)?))
}

/// Literal evaluation of the published threshold and probability expressions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerbatimEvaluation {
    pub s01: f64,
    pub s12: f64,
    pub s23: f64,
    pub p_fa: f64,
    pub p_d: f64,
}

/// Thresholds `N² ln(σᵢ²/σⱼ²)/(1/σⱼ² - 1/σᵢ²)` with Gamma scale `Nσᵢ²`.
///
/// Needs strictly increasing variances. The probabilities agree with the
/// canonical rule for every `N` because threshold and scale carry the same
/// factor, but the threshold values are on a different axis from the
/// averaged periodogram: applied to `Z` directly they only coincide with the
/// canonical thresholds after dividing by `N²/2`.
pub fn literal_thresholds(v: &HypothesisVariances, shape: GammaShape) -> Result<VerbatimEvaluation> {
    if !v.strictly_ordered() {
        return Err(Error::Domain("verbatim evaluation needs strictly ordered variances".into()));
    }
    let n = shape.as_f64();
    let s = |i: usize, j: usize| {
        let (vi, vj) = (v.sigma_sq[i], v.sigma_sq[j]);
        n * n * (vi / vj).ln() / (1.0 / vj - 1.0 / vi)
    };
    let (s01, s12, s23) = (s(1, 0), s(2, 1), s(3, 2));
    let q = |i: usize, t: f64| -> Result<f64> { gamma_sf(shape, GammaScale::new(n * v.sigma_sq[i])?, t) };
    let p_fa = q(1, s12)? + q(0, s12)?;
    let p_d = q(2, s12)? - q(2, s23)? + q(3, s23)?;
    Ok(VerbatimEvaluation { s01, s12, s23, p_fa, p_d })
}
