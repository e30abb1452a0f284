//! Seeded, parallel trial engine.
//!
//! Work is cut into fixed-size chunks. Chunk `c` of lane `l` draws from its
//! own ChaCha8 stream `(stream_index, l, c)` under the master seed, and
//! chunk results are merged in chunk order, so every result is a pure
//! function of the scenario, the seed and the trial count, whatever the
//! number of worker threads.
//!
//! Every packet draws the same random quantities (both symbols, both
//! channels, both noise samples) under every hypothesis and model, so runs
//! that share a seed use common random numbers and paired differences
//! between detectors or models have small variance.

use crate::detection::{
    conditional_matrix, detection_from, false_alarm_from, gamma_laws, hypothesis_variances,
    joint_hypothesis_variances, rule_for_mode, symbol_averaged_laws, Convention, DecisionRule, DetectorMode,
    Hypothesis, HypothesisVariances, StatisticLaw, SymbolMode, DEFAULT_MERGE_TOL,
};
use crate::error::{Error, Result};
use crate::numerics::{wilson_interval, GammaShape, Z95};
use crate::signal_model::{
    irr_to_mismatch, psk_alphabet, receive, receive_joint, ComplexSample, IqMismatch, MismatchCoefficients,
    SubcarrierPairConfig,
};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign};

/// Trials per chunk; fixed so chunk boundaries never depend on the thread count.
pub const CHUNK_TRIALS: u64 = 1 << 16;

const MAX_CHUNKS: u64 = 1 << 24;

/// Root of a family of independent random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_index: u32,
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_index: u32) -> Self {
        Self { master_seed, stream_index }
    }

    /// Same master seed, different stream family.
    pub fn with_stream(self, stream_index: u32) -> Self {
        Self { stream_index, ..self }
    }

    /// Generator for one chunk of one lane.
    pub fn rng(&self, lane: u8, chunk: u64) -> ChaCha8Rng {
        assert!(chunk < MAX_CHUNKS, "chunk index {chunk} exceeds the stream budget");
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(((self.stream_index as u64) << 32) | ((lane as u64) << 24) | chunk);
        rng
    }
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Err(Error::Config("worker count must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Maps `f(rng, chunk_len)` over the chunks of `total` trials and folds
/// the results in chunk order.
pub(crate) fn run_chunked<T, F, M>(total: u64, seed: SeedSpec, lane: u8, init: T, f: F, mut merge: M) -> T
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, u64) -> T + Sync,
    M: FnMut(&mut T, T),
{
    let chunks = total.div_ceil(CHUNK_TRIALS);
    let parts: Vec<T> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = CHUNK_TRIALS.min(total - c * CHUNK_TRIALS);
            f(&mut seed.rng(lane, c), len)
        })
        .collect();
    let mut acc = init;
    for p in parts {
        merge(&mut acc, p);
    }
    acc
}

/// Serializable scenario description in SNR terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    /// `P_k / σ_n²` in dB.
    pub snr1_db: f64,
    /// `P_{-k} / σ_n²` in dB.
    pub snr2_db: f64,
    /// Transmitter image rejection ratio in dB; absent means ideal.
    #[serde(default)]
    pub irr_db: Option<f64>,
    /// Secondary receiver image rejection ratio in dB; absent means Tx-only model.
    #[serde(default)]
    pub rx_irr_db: Option<f64>,
    #[serde(default = "default_one")]
    pub noise_var: f64,
    #[serde(default = "default_one")]
    pub channel_var: f64,
    #[serde(default = "default_one")]
    pub channel_var_mirror: f64,
    #[serde(default = "default_psk")]
    pub psk_order: usize,
    #[serde(default = "default_packets")]
    pub n_packets: u32,
    #[serde(default = "default_mode")]
    pub mode: DetectorMode,
    /// One channel draw per `N`-packet window instead of one per packet.
    #[serde(default)]
    pub block_fading: bool,
}

fn default_one() -> f64 {
    1.0
}

fn default_psk() -> usize {
    16
}

fn default_packets() -> u32 {
    1
}

fn default_mode() -> DetectorMode {
    DetectorMode::FourLevel
}

impl ScenarioSpec {
    pub fn new(snr1_db: f64, snr2_db: f64, irr_db: Option<f64>) -> Self {
        Self {
            snr1_db,
            snr2_db,
            irr_db,
            rx_irr_db: None,
            noise_var: 1.0,
            channel_var: 1.0,
            channel_var_mirror: 1.0,
            psk_order: 16,
            n_packets: 1,
            mode: DetectorMode::FourLevel,
            block_fading: false,
        }
    }

    pub fn with_rx_irr(mut self, rx_irr_db: Option<f64>) -> Self {
        self.rx_irr_db = rx_irr_db;
        self
    }

    pub fn with_packets(mut self, n: u32) -> Self {
        self.n_packets = n;
        self
    }

    pub fn with_mode(mut self, mode: DetectorMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn build(&self) -> Result<SensingScenario> {
        for (name, v) in [("snr1_db", self.snr1_db), ("snr2_db", self.snr2_db)] {
            if !v.is_finite() {
                return Err(Error::InvalidScenario(format!("{name} must be finite, got {v}")));
            }
        }
        let mismatch = |irr: Option<f64>| irr.map(irr_to_mismatch).transpose();
        let pair = SubcarrierPairConfig::new(
            10f64.powf(self.snr1_db / 10.0) * self.noise_var,
            10f64.powf(self.snr2_db / 10.0) * self.noise_var,
            self.psk_order,
            self.channel_var,
            self.channel_var_mirror,
            self.noise_var,
        )?;
        SensingScenario::new(
            pair,
            mismatch(self.irr_db)?.unwrap_or(IqMismatch::IDEAL),
            mismatch(self.rx_irr_db)?,
            GammaShape::new(self.n_packets)?,
            self.mode,
            self.block_fading,
        )
    }
}

/// One mirrored subcarrier pair as seen by the secondary sensor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensingScenario {
    pub pair: SubcarrierPairConfig,
    pub tx_mismatch: IqMismatch,
    pub rx_mismatch: Option<IqMismatch>,
    pub n_packets: GammaShape,
    pub mode: DetectorMode,
    pub block_fading: bool,
}

impl SensingScenario {
    pub fn new(
        pair: SubcarrierPairConfig,
        tx_mismatch: IqMismatch,
        rx_mismatch: Option<IqMismatch>,
        n_packets: GammaShape,
        mode: DetectorMode,
        block_fading: bool,
    ) -> Result<Self> {
        pair.validate()?;
        mode.validate()?;
        Ok(Self { pair, tx_mismatch, rx_mismatch, n_packets, mode, block_fading })
    }

    pub fn snr1_db(&self) -> f64 {
        10.0 * (self.pair.power_k / self.pair.noise_var).log10()
    }

    pub fn snr2_db(&self) -> f64 {
        10.0 * (self.pair.power_mk / self.pair.noise_var).log10()
    }

    /// `10 log10(SNR₁/SNR₂)`.
    pub fn delta_snr_db(&self) -> f64 {
        self.snr1_db() - self.snr2_db()
    }

    pub fn with_mode(&self, mode: DetectorMode) -> Self {
        Self { mode, ..self.clone() }
    }

    fn tx(&self) -> MismatchCoefficients {
        self.tx_mismatch.coefficients()
    }

    fn rx(&self) -> Option<MismatchCoefficients> {
        self.rx_mismatch.map(|m| m.coefficients())
    }

    /// Symbol-averaged per-component variances of the sensed sample.
    pub fn variances(&self) -> Result<HypothesisVariances> {
        match self.rx() {
            None => Ok(hypothesis_variances(&self.pair, &self.tx(), SymbolMode::Averaged)),
            Some(rx) => joint_hypothesis_variances(&self.pair, &self.tx(), &rx),
        }
    }

    pub fn rule(&self) -> Result<DecisionRule> {
        self.rule_for(self.mode)
    }

    pub fn rule_for(&self, mode: DetectorMode) -> Result<DecisionRule> {
        rule_for_mode(&self.variances()?, self.n_packets, mode, DEFAULT_MERGE_TOL)
    }

    /// Exact laws of `Z`; unavailable under block fading, where packets share a channel.
    pub fn exact_laws(&self) -> Result<[StatisticLaw; 4]> {
        if self.block_fading {
            return Err(Error::InvalidScenario("no closed-form law under block fading".into()));
        }
        symbol_averaged_laws(&self.pair, &self.tx(), self.rx().as_ref(), self.n_packets)
    }

    pub fn sampler(&self) -> Result<StatisticSampler> {
        StatisticSampler::new(self)
    }
}

/// Random quantities drawn for one packet.
#[derive(Debug, Clone, Copy)]
struct PacketDraw {
    s_k: ComplexSample,
    s_mk: ComplexSample,
    h_k: ComplexSample,
    h_mk: ComplexSample,
    w_k: ComplexSample,
    w_mk: ComplexSample,
}

#[inline]
fn gaussian<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> ComplexSample {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    ComplexSample::new(re * sigma, im * sigma)
}

/// Draws received samples and the periodogram statistic for a scenario.
#[derive(Debug, Clone)]
pub struct StatisticSampler {
    alphabet: Vec<ComplexSample>,
    mask: usize,
    pair_by_h: [SubcarrierPairConfig; 4],
    mirror_by_h: [SubcarrierPairConfig; 4],
    tx: MismatchCoefficients,
    rx: Option<MismatchCoefficients>,
    sigma_h: f64,
    sigma_hm: f64,
    sigma_n: f64,
    n: u32,
    block_fading: bool,
}

impl StatisticSampler {
    pub fn new(sc: &SensingScenario) -> Result<Self> {
        let alphabet = psk_alphabet(sc.pair.psk_order)?;
        let pair_by_h = Hypothesis::ALL.map(|h| SubcarrierPairConfig {
            power_k: if h.primary_on_k() { sc.pair.power_k } else { 0.0 },
            power_mk: if h.primary_on_mirror() { sc.pair.power_mk } else { 0.0 },
            ..sc.pair
        });
        Ok(Self {
            mask: alphabet.len() - 1,
            alphabet,
            mirror_by_h: pair_by_h.map(|p| p.mirrored()),
            pair_by_h,
            tx: sc.tx(),
            rx: sc.rx(),
            sigma_h: (0.5 * sc.pair.channel_var).sqrt(),
            sigma_hm: (0.5 * sc.pair.channel_var_mirror).sqrt(),
            sigma_n: (0.5 * sc.pair.noise_var).sqrt(),
            n: sc.n_packets.get(),
            block_fading: sc.block_fading,
        })
    }

    #[inline]
    fn draw<R: RngCore>(&self, rng: &mut R) -> PacketDraw {
        let bits = rng.next_u64();
        PacketDraw {
            s_k: self.alphabet[bits as usize & self.mask],
            s_mk: self.alphabet[(bits >> 32) as usize & self.mask],
            h_k: gaussian(self.sigma_h, rng),
            h_mk: gaussian(self.sigma_hm, rng),
            w_k: gaussian(self.sigma_n, rng),
            w_mk: gaussian(self.sigma_n, rng),
        }
    }

    #[inline]
    fn output(&self, h: Hypothesis, d: &PacketDraw, h_k: ComplexSample, h_mk: ComplexSample) -> ComplexSample {
        let i = h.index();
        let y_k = receive(d.s_k, d.s_mk, h_k, d.w_k, &self.pair_by_h[i], &self.tx);
        match &self.rx {
            None => y_k,
            Some(rx) => {
                let y_mk = receive(d.s_mk, d.s_k, h_mk, d.w_mk, &self.mirror_by_h[i], &self.tx);
                receive_joint(y_k, y_mk, rx)
            }
        }
    }

    /// One sensed sample (a single packet) under `h`.
    pub fn sample<R: RngCore>(&self, h: Hypothesis, rng: &mut R) -> ComplexSample {
        let d = self.draw(rng);
        self.output(h, &d, d.h_k, d.h_mk)
    }

    /// Periodogram `Z` over `N` packets under `h`.
    pub fn statistic<R: RngCore>(&self, h: Hypothesis, rng: &mut R) -> f64 {
        let mut acc = 0.0;
        let mut channel = None;
        for _ in 0..self.n {
            let d = self.draw(rng);
            let (h_k, h_mk) = if self.block_fading {
                *channel.get_or_insert((d.h_k, d.h_mk))
            } else {
                (d.h_k, d.h_mk)
            };
            acc += self.output(h, &d, h_k, h_mk).norm_sqr();
        }
        acc / self.n as f64
    }

    /// Periodograms on `k` and on `-k` from one shared realization of the
    /// pair; `h` is the state as seen from `k`.
    pub fn pair_statistics<R: RngCore>(&self, h: Hypothesis, rng: &mut R) -> (f64, f64) {
        let i = h.index();
        let (mut acc_k, mut acc_mk) = (0.0, 0.0);
        let mut channel = None;
        for _ in 0..self.n {
            let d = self.draw(rng);
            let (h_k, h_mk) = if self.block_fading {
                *channel.get_or_insert((d.h_k, d.h_mk))
            } else {
                (d.h_k, d.h_mk)
            };
            let y_k = receive(d.s_k, d.s_mk, h_k, d.w_k, &self.pair_by_h[i], &self.tx);
            let y_mk = receive(d.s_mk, d.s_k, h_mk, d.w_mk, &self.mirror_by_h[i], &self.tx);
            let (r_k, r_mk) = match &self.rx {
                None => (y_k, y_mk),
                Some(rx) => (receive_joint(y_k, y_mk, rx), receive_joint(y_mk, y_k, rx)),
            };
            acc_k += r_k.norm_sqr();
            acc_mk += r_mk.norm_sqr();
        }
        (acc_k / self.n as f64, acc_mk / self.n as f64)
    }
}

/// Confusion counts indexed `[true][decided]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TallyMatrix {
    counts: [[u64; 4]; 4],
}

impl TallyMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counts(counts: [[u64; 4]; 4]) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[[u64; 4]; 4] {
        &self.counts
    }

    #[inline]
    pub fn record(&mut self, truth: Hypothesis, decided: Hypothesis) {
        self.counts[truth.index()][decided.index()] += 1;
    }

    pub fn count(&self, truth: Hypothesis, decided: Hypothesis) -> u64 {
        self.counts[truth.index()][decided.index()]
    }

    pub fn row_total(&self, truth: Hypothesis) -> u64 {
        self.counts[truth.index()].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn busy_count(&self, truth: Hypothesis) -> u64 {
        let row = &self.counts[truth.index()];
        row[2] + row[3]
    }

    /// Empirical `P(decided | truth)`.
    pub fn conditional(&self, truth: Hypothesis, decided: Hypothesis) -> Result<f64> {
        let n = self.row_total(truth);
        if n == 0 {
            return Err(Error::EmptyRow(truth.label()));
        }
        Ok(self.count(truth, decided) as f64 / n as f64)
    }

    pub fn merge(&mut self, other: &TallyMatrix) {
        for (a, b) in self.counts.iter_mut().flatten().zip(other.counts.iter().flatten()) {
            *a += b;
        }
    }
}

impl AddAssign for TallyMatrix {
    fn add_assign(&mut self, rhs: Self) {
        self.merge(&rhs);
    }
}

impl Add for TallyMatrix {
    type Output = TallyMatrix;

    fn add(mut self, rhs: Self) -> TallyMatrix {
        self.merge(&rhs);
        self
    }
}

/// Counts produced by evaluating several rules on one shared stream of statistics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulationOutput {
    pub tallies: Vec<TallyMatrix>,
    /// Per true hypothesis, how often each busy/idle pattern across the rules
    /// occurred; bit `r` of the index is set when rule `r` declared busy.
    pub busy_patterns: [Vec<u64>; 4],
}

impl SimulationOutput {
    fn empty(rules: usize) -> Self {
        Self {
            tallies: vec![TallyMatrix::new(); rules],
            busy_patterns: std::array::from_fn(|_| vec![0; 1 << rules]),
        }
    }

    fn merge(&mut self, other: SimulationOutput) {
        for (a, b) in self.tallies.iter_mut().zip(&other.tallies) {
            a.merge(b);
        }
        for (a, b) in self.busy_patterns.iter_mut().zip(&other.busy_patterns) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Largest number of rules [`simulate`] evaluates jointly.
pub const MAX_JOINT_RULES: usize = 8;

/// Runs `per_hypothesis` trials under each hypothesis and classifies every
/// statistic with each of `rules`.
pub fn simulate(
    sc: &SensingScenario,
    rules: &[DecisionRule],
    per_hypothesis: u64,
    seed: SeedSpec,
) -> Result<SimulationOutput> {
    if per_hypothesis == 0 {
        return Err(Error::InvalidScenario("trial count must be at least 1".into()));
    }
    if rules.is_empty() || rules.len() > MAX_JOINT_RULES {
        return Err(Error::InvalidScenario(format!("between 1 and {MAX_JOINT_RULES} rules required")));
    }
    if rules.iter().any(|r| r.shape() != sc.n_packets) {
        return Err(Error::InvalidScenario("rule built for a different packet count".into()));
    }
    let sampler = sc.sampler()?;
    let mut out = SimulationOutput::empty(rules.len());
    for truth in Hypothesis::ALL {
        let part = run_chunked(
            per_hypothesis,
            seed,
            truth.index() as u8,
            SimulationOutput::empty(rules.len()),
            |rng, len| {
                let mut local = SimulationOutput::empty(rules.len());
                let patterns = &mut local.busy_patterns[truth.index()];
                for _ in 0..len {
                    let z = sampler.statistic(truth, rng);
                    let mut pattern = 0usize;
                    for (r, rule) in rules.iter().enumerate() {
                        let decided = rule.classify(z);
                        local.tallies[r].record(truth, decided);
                        if decided.primary_on_k() {
                            pattern |= 1 << r;
                        }
                    }
                    patterns[pattern] += 1;
                }
                local
            },
            |acc, part| acc.merge(part),
        );
        out.merge(part);
    }
    Ok(out)
}

/// Confusion counts for the scenario's own detector mode.
pub fn run_trials(sc: &SensingScenario, per_hypothesis: u64, seed: SeedSpec) -> Result<TallyMatrix> {
    let rule = sc.rule()?;
    Ok(simulate(sc, std::slice::from_ref(&rule), per_hypothesis, seed)?.tallies[0])
}

/// Raw periodogram values under one hypothesis.
pub fn sample_statistics(sc: &SensingScenario, truth: Hypothesis, count: u64, seed: SeedSpec) -> Result<Vec<f64>> {
    let sampler = sc.sampler()?;
    Ok(run_chunked(
        count,
        seed,
        truth.index() as u8,
        Vec::with_capacity(count as usize),
        |rng, len| (0..len).map(|_| sampler.statistic(truth, rng)).collect::<Vec<_>>(),
        |acc, part| acc.extend(part),
    ))
}

/// A point estimate with a two-sided 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// One conditional frequency entering a metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricTerm {
    pub truth: Hypothesis,
    /// `None` when the term counts every busy decision.
    pub decided: Option<Hypothesis>,
    pub weight: f64,
    pub successes: u64,
    pub trials: u64,
    pub frequency: f64,
    pub wilson: (f64, f64),
}

impl MetricTerm {
    fn new(truth: Hypothesis, decided: Option<Hypothesis>, weight: f64, t: &TallyMatrix) -> Result<Self> {
        let trials = t.row_total(truth);
        if trials == 0 {
            return Err(Error::EmptyRow(truth.label()));
        }
        let successes = match decided {
            Some(d) => t.count(truth, d),
            None => t.busy_count(truth),
        };
        Ok(Self {
            truth,
            decided,
            weight,
            successes,
            trials,
            frequency: successes as f64 / trials as f64,
            wilson: wilson_interval(successes, trials, Z95),
        })
    }

    fn variance(&self) -> f64 {
        self.weight * self.weight * self.frequency * (1.0 - self.frequency) / self.trials as f64
    }
}

fn combine(terms: &[MetricTerm]) -> Estimate {
    let value: f64 = terms.iter().map(|t| t.weight * t.frequency).sum();
    let std_error = terms.iter().map(MetricTerm::variance).sum::<f64>().sqrt();
    Estimate { value, lower: value - Z95 * std_error, upper: value + Z95 * std_error, std_error }
}

/// Empirical false-alarm and detection probabilities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalMetrics {
    pub convention: Convention,
    pub p_fa: Estimate,
    pub p_d: Estimate,
    pub fa_terms: Vec<MetricTerm>,
    pub d_terms: Vec<MetricTerm>,
}

pub fn empirical_metrics(t: &TallyMatrix, convention: Convention) -> Result<EmpiricalMetrics> {
    use Hypothesis::*;
    let (fa_terms, d_terms) = match convention {
        Convention::UnweightedSum => (
            vec![MetricTerm::new(H0, None, 1.0, t)?, MetricTerm::new(H1, None, 1.0, t)?],
            vec![MetricTerm::new(H2, Some(H2), 1.0, t)?, MetricTerm::new(H3, Some(H3), 1.0, t)?],
        ),
        Convention::PriorWeighted => (
            vec![MetricTerm::new(H0, None, 0.5, t)?, MetricTerm::new(H1, None, 0.5, t)?],
            vec![MetricTerm::new(H2, None, 0.5, t)?, MetricTerm::new(H3, None, 0.5, t)?],
        ),
    };
    Ok(EmpiricalMetrics { convention, p_fa: combine(&fa_terms), p_d: combine(&d_terms), fa_terms, d_terms })
}

/// Paired estimate of `Σ w_h [P(busy_a | h) - P(busy_b | h)]` from one shared run.
///
/// Rules `a` and `b` index the rule list passed to [`simulate`]. Only
/// discordant trials contribute, so the interval is much tighter than the
/// difference of two independent intervals.
pub fn paired_busy_difference(
    out: &SimulationOutput,
    a: usize,
    b: usize,
    weights: &[(Hypothesis, f64)],
) -> Result<Estimate> {
    let rules = out.tallies.len();
    if a >= rules || b >= rules {
        return Err(Error::Domain(format!("rule index out of range for {rules} rules")));
    }
    let (mut value, mut var) = (0.0, 0.0);
    for &(h, w) in weights {
        let patterns = &out.busy_patterns[h.index()];
        let n: u64 = patterns.iter().sum();
        if n == 0 {
            return Err(Error::EmptyRow(h.label()));
        }
        let (mut only_a, mut only_b) = (0u64, 0u64);
        for (p, c) in patterns.iter().enumerate() {
            match ((p >> a) & 1, (p >> b) & 1) {
                (1, 0) => only_a += c,
                (0, 1) => only_b += c,
                _ => {}
            }
        }
        let n = n as f64;
        let mean = (only_a as f64 - only_b as f64) / n;
        let second = (only_a + only_b) as f64 / n;
        value += w * mean;
        var += w * w * (second - mean * mean) / n;
    }
    let std_error = var.sqrt();
    Ok(Estimate { value, lower: value - Z95 * std_error, upper: value + Z95 * std_error, std_error })
}

#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(&mut self, o: Welford) {
        if o.n == 0 {
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n as f64 / n as f64;
        self.m2 += o.m2 + d * d * self.n as f64 * o.n as f64 / n as f64;
        self.n = n;
    }

    fn variance(&self) -> f64 {
        self.m2 / (self.n - 1) as f64
    }
}

/// Sample variance of the real part of the sensed sample under each hypothesis.
pub fn estimate_component_variances(sc: &SensingScenario, samples: u64, seed: SeedSpec) -> Result<HypothesisVariances> {
    if samples < 10_000 {
        return Err(Error::InvalidScenario(format!("at least 10000 samples required, got {samples}")));
    }
    let sampler = sc.sampler()?;
    let mut out = [0.0; 4];
    for h in Hypothesis::ALL {
        let acc = run_chunked(
            samples,
            seed,
            h.index() as u8,
            Welford::default(),
            |rng, len| {
                let mut w = Welford::default();
                for _ in 0..len {
                    w.push(sampler.sample(h, rng).re);
                }
                w
            },
            |acc, part| acc.merge(part),
        );
        out[h.index()] = acc.variance();
    }
    HypothesisVariances::from_array(out)
}

/// Scenario parameter varied by [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// Transmitter IRR, and the receiver IRR too when it follows the transmitter.
    IrrDb,
    /// `SNR₁ - SNR₂` with `SNR₂` held fixed.
    DeltaSnrDb,
    /// `SNR₁` with `SNR₂` held fixed.
    Snr1Db,
}

impl SweepAxis {
    pub fn label(self) -> &'static str {
        match self {
            SweepAxis::IrrDb => "irr_db",
            SweepAxis::DeltaSnrDb => "delta_snr_db",
            SweepAxis::Snr1Db => "snr1_db",
        }
    }

    pub fn apply(self, template: &ScenarioSpec, value: f64, rx_follows_tx: bool) -> ScenarioSpec {
        let mut spec = template.clone();
        match self {
            SweepAxis::IrrDb => {
                spec.irr_db = Some(value);
                if rx_follows_tx {
                    spec.rx_irr_db = Some(value);
                }
            }
            SweepAxis::DeltaSnrDb => spec.snr1_db = spec.snr2_db + value,
            SweepAxis::Snr1Db => spec.snr1_db = value,
        }
        spec
    }
}

/// Analytic and empirical metrics of one detector at one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointResult {
    pub mode: DetectorMode,
    pub convention: Convention,
    /// Closed form with every hypothesis treated as Gamma distributed.
    pub gamma_p_fa: f64,
    pub gamma_p_d: f64,
    /// Exact symbol-averaged law; absent under block fading.
    pub exact_p_fa: Option<f64>,
    pub exact_p_d: Option<f64>,
    pub empirical: EmpiricalMetrics,
    pub tally: TallyMatrix,
}

/// Evaluates every mode on one shared set of trials.
pub fn evaluate_point(
    sc: &SensingScenario,
    modes: &[DetectorMode],
    per_hypothesis: u64,
    seed: SeedSpec,
) -> Result<Vec<PointResult>> {
    let rules = modes.iter().map(|m| sc.rule_for(*m)).collect::<Result<Vec<_>>>()?;
    let out = simulate(sc, &rules, per_hypothesis, seed)?;
    let v = sc.variances()?;
    let gamma = gamma_laws(&v, sc.n_packets)?;
    let exact = sc.exact_laws().ok();
    let mut rows = Vec::with_capacity(modes.len() * 2);
    for ((mode, rule), tally) in modes.iter().zip(&rules).zip(&out.tallies) {
        let mg = conditional_matrix(&gamma, rule)?;
        let me = exact.as_ref().map(|l| conditional_matrix(l, rule)).transpose()?;
        for convention in Convention::BOTH {
            rows.push(PointResult {
                mode: *mode,
                convention,
                gamma_p_fa: false_alarm_from(&mg, convention),
                gamma_p_d: detection_from(&mg, convention),
                exact_p_fa: me.map(|m| false_alarm_from(&m, convention)),
                exact_p_d: me.map(|m| detection_from(&m, convention)),
                empirical: empirical_metrics(tally, convention)?,
                tally: *tally,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub result: PointResult,
}

/// Evaluates `modes` at each grid point; point `i` uses stream `seed.stream_index + i`.
pub fn sweep(
    template: &ScenarioSpec,
    axis: SweepAxis,
    grid: &[f64],
    rx_follows_tx: bool,
    modes: &[DetectorMode],
    per_hypothesis: u64,
    seed: SeedSpec,
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::InvalidScenario("sweep grid is empty".into()));
    }
    let mut rows = Vec::new();
    for (i, &value) in grid.iter().enumerate() {
        let sc = axis.apply(template, value, rx_follows_tx).build()?;
        let point_seed = seed.with_stream(seed.stream_index.wrapping_add(i as u32));
        for result in evaluate_point(&sc, modes, per_hypothesis, point_seed)? {
            rows.push(SweepRow { axis_value: value, result });
        }
    }
    Ok(rows)
}
