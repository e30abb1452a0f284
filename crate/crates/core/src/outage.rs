//! Outage of the primary link on `-k` when a secondary transmitter with
//! I/Q imbalance occupies `k`.
//!
//! With Rayleigh fading the normalized signal and interference gains
//! `X₁ = P_{-k}|g|²/N_p` and `X₂ = |β|²P₀|h|²/N_p` are independent
//! exponentials, and `γ = X₁/(1 + X₂)`. Conditioning on `X₂` and
//! integrating gives
//!
//! ```text
//! ρ = 1 - σ₁/(σ₁ + γ_th σ₂) · exp(-γ_th/σ₁)
//! ```
//!
//! where `σ₁`, `σ₂` are the means of `X₁`, `X₂` and `γ_th = 2^R - 1`.

use crate::error::{Error, Result};
use crate::montecarlo::{run_chunked, SeedSpec};
use crate::numerics::{wilson_interval, Z95};
use crate::signal_model::{draw_rayleigh, primary_rx, ComplexSample, MismatchCoefficients};
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutageScenario {
    /// Primary transmit power on `-k`.
    pub p_mk: f64,
    /// Secondary transmit power on `k`.
    pub p0: f64,
    /// Image gain `|β|²` of the secondary transmitter.
    pub beta_sq_sec: f64,
    /// Noise power at the primary receiver.
    pub noise_p: f64,
    /// Variance of the primary channel `g_{-k}`.
    pub var_g: f64,
    /// Variance of the interfering channel `h_{-k}`.
    pub var_h: f64,
    /// Primary rate in bits/s/Hz.
    pub rate_p: f64,
}

impl OutageScenario {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [("p_mk", self.p_mk), ("p0", self.p0), ("beta_sq_sec", self.beta_sq_sec), ("rate_p", self.rate_p)];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidScenario(format!("{name} must be nonnegative, got {v}")));
            }
        }
        for (name, v) in [("noise_p", self.noise_p), ("var_g", self.var_g), ("var_h", self.var_h)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidScenario(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Mean of the normalized signal gain `X₁`.
    pub fn sigma_x1(&self) -> f64 {
        self.p_mk * self.var_g / self.noise_p
    }

    /// Mean of the normalized interference gain `X₂`.
    pub fn sigma_x2(&self) -> f64 {
        self.beta_sq_sec * self.p0 * self.var_h / self.noise_p
    }

    pub fn gamma_th(&self) -> f64 {
        self.rate_p.exp2() - 1.0
    }
}

/// SINR for given channel power gains `|g|²` and `|h|²`.
pub fn sinr(signal_gain_sq: f64, interference_gain_sq: f64, sc: &OutageScenario) -> Result<f64> {
    if !(signal_gain_sq >= 0.0 && interference_gain_sq >= 0.0) {
        return Err(Error::Domain("gains must be nonnegative".into()));
    }
    Ok(sc.p_mk * signal_gain_sq / (sc.noise_p + sc.beta_sq_sec * sc.p0 * interference_gain_sq))
}

fn closed_form(sigma_x1: f64, sigma_x2: f64, gamma_th: f64) -> f64 {
    if gamma_th <= 0.0 {
        return 0.0;
    }
    if sigma_x1 <= 0.0 {
        return 1.0;
    }
    let keep = sigma_x1 / (sigma_x1 + gamma_th * sigma_x2);
    // 1 - keep·e^{-x} without cancellation when both factors are near one.
    let x = gamma_th / sigma_x1;
    (-(keep.ln() - x).exp_m1()).clamp(0.0, 1.0)
}

/// Outage probability `Pr{γ < γ_th}`.
pub fn analytic_outage(sc: &OutageScenario) -> Result<f64> {
    sc.validate()?;
    Ok(closed_form(sc.sigma_x1(), sc.sigma_x2(), sc.gamma_th()))
}

/// The published closed form read literally: no `γ_th` weight on the
/// interference mean and an extra `N_p` in the exponent.
pub fn literal_outage(sc: &OutageScenario) -> Result<f64> {
    sc.validate()?;
    let (s1, s2) = (sc.sigma_x1(), sc.sigma_x2());
    if s1 <= 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - s1 / (s1 + s2) * (-sc.noise_p * sc.gamma_th() / s1).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OutageEstimate {
    pub outages: u64,
    pub trials: u64,
    pub frequency: f64,
    /// 95% Wilson interval.
    pub lower: f64,
    pub upper: f64,
}

impl OutageEstimate {
    fn new(outages: u64, trials: u64) -> Self {
        let (lower, upper) = wilson_interval(outages, trials, Z95);
        Self { outages, trials, frequency: outages as f64 / trials as f64, lower, upper }
    }
}

fn check_trials(trials: u64) -> Result<()> {
    if trials == 0 {
        return Err(Error::InvalidScenario("trial count must be at least 1".into()));
    }
    Ok(())
}

/// Monte Carlo outage from independent exponential gains.
pub fn mc_outage(sc: &OutageScenario, trials: u64, seed: SeedSpec) -> Result<OutageEstimate> {
    sc.validate()?;
    check_trials(trials)?;
    let (s1, s2, g) = (sc.sigma_x1(), sc.sigma_x2(), sc.gamma_th());
    let outages = run_chunked(
        trials,
        seed,
        0,
        0u64,
        |rng, len| {
            let mut count = 0;
            for _ in 0..len {
                let x1 = s1 * rng.sample::<f64, _>(Exp1);
                let x2 = s2 * rng.sample::<f64, _>(Exp1);
                count += u64::from(x1 / (1.0 + x2) < g);
            }
            count
        },
        |acc, c| *acc += c,
    );
    Ok(OutageEstimate::new(outages, trials))
}

/// Monte Carlo outage from complex channel draws pushed through the
/// primary receiver model, measuring signal and interference powers.
pub fn mc_outage_samples(sc: &OutageScenario, trials: u64, seed: SeedSpec) -> Result<OutageEstimate> {
    sc.validate()?;
    check_trials(trials)?;
    let sec_tx = MismatchCoefficients { alpha: ComplexSample::ONE, beta: ComplexSample::new(sc.beta_sq_sec.sqrt(), 0.0) };
    let g_th = sc.gamma_th();
    let outages = run_chunked(
        trials,
        seed,
        1,
        0u64,
        |rng, len| {
            let mut count = 0;
            for _ in 0..len {
                let g = draw_rayleigh(sc.var_g, rng).expect("validated variance");
                let h = draw_rayleigh(sc.var_h, rng).expect("validated variance");
                let s = ComplexSample::ONE;
                let wanted = primary_rx(s, g, s, h, ComplexSample::ZERO, sc.p_mk, 0.0, &sec_tx).norm_sqr();
                let leaked = primary_rx(s, g, s, h, ComplexSample::ZERO, 0.0, sc.p0, &sec_tx).norm_sqr();
                count += u64::from(wanted / (sc.noise_p + leaked) < g_th);
            }
            count
        },
        |acc, c| *acc += c,
    );
    Ok(OutageEstimate::new(outages, trials))
}
