//! Frequency-domain baseband model of a mirrored subcarrier pair under
//! transmitter and receiver I/Q imbalance.
//!
//! An imbalanced direct-conversion front end with amplitude mismatch `ε` and
//! phase mismatch `θ` scales the wanted subcarrier by `α = cos θ + jε sin θ`
//! and leaks the conjugate of the mirror subcarrier `-k` through
//! `β = ε cos θ - j sin θ`. Every sample generator here is a small closed
//! expression in those coefficients; the random draws take an explicit RNG.

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

/// A complex baseband sample.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ComplexSample {
    pub re: f64,
    pub im: f64,
}

impl ComplexSample {
    pub const ZERO: ComplexSample = ComplexSample { re: 0.0, im: 0.0 };
    pub const ONE: ComplexSample = ComplexSample { re: 1.0, im: 0.0 };

    #[inline]
    pub const fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    #[inline]
    pub fn conj(self) -> Self {
        Self::new(self.re, -self.im)
    }

    #[inline]
    pub fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    #[inline]
    pub fn scale(self, k: f64) -> Self {
        Self::new(self.re * k, self.im * k)
    }

    pub fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

impl Add for ComplexSample {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.im + o.im)
    }
}

impl AddAssign for ComplexSample {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        self.re += o.re;
        self.im += o.im;
    }
}

impl Sub for ComplexSample {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.im - o.im)
    }
}

impl Neg for ComplexSample {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.re, -self.im)
    }
}

impl Mul for ComplexSample {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }
}

/// Amplitude (`epsilon`) and phase (`theta`, radians) mismatch of one front end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IqMismatch {
    epsilon: f64,
    theta: f64,
}

impl IqMismatch {
    pub const IDEAL: IqMismatch = IqMismatch { epsilon: 0.0, theta: 0.0 };

    pub fn new(epsilon: f64, theta: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon.abs() < 1.0) {
            return Err(Error::InvalidMismatch(format!("|epsilon| must be below 1, got {epsilon}")));
        }
        if !(theta.is_finite() && theta.abs() < FRAC_PI_2) {
            return Err(Error::InvalidMismatch(format!("|theta| must be below pi/2, got {theta}")));
        }
        Ok(Self { epsilon, theta })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn is_ideal(&self) -> bool {
        self.epsilon == 0.0 && self.theta == 0.0
    }

    pub fn coefficients(&self) -> MismatchCoefficients {
        mismatch_coefficients(*self)
    }
}

/// Direct (`alpha`) and image (`beta`) gains produced by an [`IqMismatch`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MismatchCoefficients {
    pub alpha: ComplexSample,
    pub beta: ComplexSample,
}

impl MismatchCoefficients {
    pub const IDEAL: MismatchCoefficients = MismatchCoefficients {
        alpha: ComplexSample::ONE,
        beta: ComplexSample::ZERO,
    };
}

pub fn mismatch_coefficients(m: IqMismatch) -> MismatchCoefficients {
    let (s, c) = m.theta.sin_cos();
    MismatchCoefficients {
        alpha: ComplexSample::new(c, m.epsilon * s),
        beta: ComplexSample::new(m.epsilon * c, -s),
    }
}

/// Image rejection ratio `|β|²/|α|²` as a linear power ratio.
pub fn image_rejection_ratio(c: &MismatchCoefficients) -> Result<f64> {
    let a = c.alpha.norm_sqr();
    if a == 0.0 {
        return Err(Error::DegenerateMismatch);
    }
    Ok(c.beta.norm_sqr() / a)
}

/// Linear ratio to decibels; zero maps to negative infinity.
pub fn ratio_to_db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

/// Canonical mismatch (`θ = 0`, `ε = 10^(irr/20)`) for an image rejection ratio in dB.
///
/// Negative infinity is accepted and yields the ideal front end.
pub fn irr_to_mismatch(irr_db: f64) -> Result<IqMismatch> {
    if irr_db == f64::NEG_INFINITY {
        return Ok(IqMismatch::IDEAL);
    }
    if irr_db.is_nan() || irr_db >= 0.0 {
        return Err(Error::Domain(format!("image rejection ratio must be negative in dB, got {irr_db}")));
    }
    IqMismatch::new(10f64.powf(irr_db / 20.0), 0.0)
}

/// Unit-modulus M-PSK symbol `e^{j 2π index / M}`.
pub fn psk_symbol(index: usize, order: usize) -> Result<ComplexSample> {
    if order < 2 || index >= order {
        return Err(Error::SymbolIndex { index, order });
    }
    let (s, c) = (2.0 * PI * index as f64 / order as f64).sin_cos();
    Ok(ComplexSample::new(c, s))
}

/// Whole M-PSK alphabet in index order.
pub fn psk_alphabet(order: usize) -> Result<Vec<ComplexSample>> {
    (0..order).map(|i| psk_symbol(i, order)).collect()
}

/// Powers and statistics of one mirrored subcarrier pair `(k, -k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubcarrierPairConfig {
    /// Average power on subcarrier `k`.
    pub power_k: f64,
    /// Average power on the mirror subcarrier `-k`.
    pub power_mk: f64,
    pub psk_order: usize,
    /// Rayleigh channel variance on `k`.
    pub channel_var: f64,
    /// Rayleigh channel variance on `-k`.
    pub channel_var_mirror: f64,
    /// Total complex noise variance.
    pub noise_var: f64,
}

impl SubcarrierPairConfig {
    pub fn new(
        power_k: f64,
        power_mk: f64,
        psk_order: usize,
        channel_var: f64,
        channel_var_mirror: f64,
        noise_var: f64,
    ) -> Result<Self> {
        let cfg = Self { power_k, power_mk, psk_order, channel_var, channel_var_mirror, noise_var };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Error::InvalidScenario(format!("{what} is invalid: {v}"));
        if !(self.power_k.is_finite() && self.power_k >= 0.0) {
            return Err(bad("power_k", self.power_k));
        }
        if !(self.power_mk.is_finite() && self.power_mk >= 0.0) {
            return Err(bad("power_mk", self.power_mk));
        }
        for (what, v) in [
            ("channel_var", self.channel_var),
            ("channel_var_mirror", self.channel_var_mirror),
            ("noise_var", self.noise_var),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(bad(what, v));
            }
        }
        if self.psk_order < 2 || !self.psk_order.is_power_of_two() {
            return Err(Error::InvalidScenario(format!(
                "psk_order must be a power of two >= 2, got {}",
                self.psk_order
            )));
        }
        Ok(())
    }

    /// The same pair seen from subcarrier `-k`.
    pub fn mirrored(&self) -> Self {
        Self {
            power_k: self.power_mk,
            power_mk: self.power_k,
            channel_var: self.channel_var_mirror,
            channel_var_mirror: self.channel_var,
            ..*self
        }
    }
}

/// Transmitted sample on `k`: `α √P_k s_k + β √P_{-k} conj(s_{-k})`.
pub fn transmit(
    s_k: ComplexSample,
    s_mk: ComplexSample,
    cfg: &SubcarrierPairConfig,
    tx: &MismatchCoefficients,
) -> ComplexSample {
    tx.alpha * s_k.scale(cfg.power_k.sqrt()) + tx.beta * s_mk.conj().scale(cfg.power_mk.sqrt())
}

/// Sample received on `k` by an ideal receiver: `h_k x_k + ω_k`.
pub fn receive(
    s_k: ComplexSample,
    s_mk: ComplexSample,
    h_k: ComplexSample,
    noise: ComplexSample,
    cfg: &SubcarrierPairConfig,
    tx: &MismatchCoefficients,
) -> ComplexSample {
    h_k * transmit(s_k, s_mk, cfg, tx) + noise
}

/// Output of an imbalanced receiver: `α_R y_k + β_R conj(y_{-k})`.
pub fn receive_joint(y_k: ComplexSample, y_mk: ComplexSample, rx: &MismatchCoefficients) -> ComplexSample {
    rx.alpha * y_k + rx.beta * y_mk.conj()
}

/// Primary receiver on `-k` with image interference from a secondary
/// transmitter occupying `k`.
#[allow(clippy::too_many_arguments)]
pub fn primary_rx(
    s_mk: ComplexSample,
    g_mk: ComplexSample,
    s_sk: ComplexSample,
    h_mk: ComplexSample,
    noise: ComplexSample,
    p_mk: f64,
    p0: f64,
    sec_tx: &MismatchCoefficients,
) -> ComplexSample {
    s_mk * g_mk.scale(p_mk.sqrt()) + sec_tx.beta * s_sk.conj().scale(p0.sqrt()) * h_mk + noise
}

fn check_variance(variance: f64) -> Result<f64> {
    if !(variance.is_finite() && variance > 0.0) {
        return Err(Error::Domain(format!("variance must be positive, got {variance}")));
    }
    Ok((0.5 * variance).sqrt())
}

/// Circularly symmetric complex Gaussian with `E|x|² = variance`.
#[inline]
pub(crate) fn draw_complex_gaussian<R: Rng + ?Sized>(sigma_per_component: f64, rng: &mut R) -> ComplexSample {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    ComplexSample::new(re * sigma_per_component, im * sigma_per_component)
}

/// Rayleigh-fading channel coefficient with total variance `channel_var`.
pub fn draw_rayleigh<R: Rng + ?Sized>(channel_var: f64, rng: &mut R) -> Result<ComplexSample> {
    let sigma = check_variance(channel_var)?;
    Ok(draw_complex_gaussian(sigma, rng))
}

/// Additive noise sample with total variance `noise_var`.
pub fn draw_noise<R: Rng + ?Sized>(noise_var: f64, rng: &mut R) -> Result<ComplexSample> {
    let sigma = check_variance(noise_var)?;
    Ok(draw_complex_gaussian(sigma, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: ComplexSample, b: ComplexSample, tol: f64) -> bool {
        (a.re - b.re).abs() <= tol && (a.im - b.im).abs() <= tol
    }

    fn pair(pk: f64, pmk: f64) -> SubcarrierPairConfig {
        SubcarrierPairConfig::new(pk, pmk, 16, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn coefficients_examples() {
        let c = mismatch_coefficients(IqMismatch::IDEAL);
        assert_eq!(c, MismatchCoefficients::IDEAL);

        let c = mismatch_coefficients(IqMismatch::new(0.1, 0.1).unwrap());
        assert!(close(c.alpha, ComplexSample::new(0.9950041652780258, 0.009983341664682815), 1e-15));
        assert!(close(c.beta, ComplexSample::new(0.09950041652780258, -0.09983341664682815), 1e-15));

        let c = mismatch_coefficients(IqMismatch::new(0.0, PI / 4.0).unwrap());
        let h = 0.5f64.sqrt();
        assert!(close(c.alpha, ComplexSample::new(h, 0.0), 1e-15));
        assert!(close(c.beta, ComplexSample::new(0.0, -h), 1e-15));
    }

    #[test]
    fn mismatch_validation() {
        assert!(IqMismatch::new(1.0, 0.0).is_err());
        assert!(IqMismatch::new(-1.2, 0.0).is_err());
        assert!(IqMismatch::new(0.1, FRAC_PI_2).is_err());
        assert!(IqMismatch::new(f64::NAN, 0.0).is_err());
        assert!(IqMismatch::new(-0.3, -1.0).is_ok());
    }

    #[test]
    fn image_rejection_examples() {
        assert_eq!(image_rejection_ratio(&MismatchCoefficients::IDEAL).unwrap(), 0.0);
        assert_eq!(ratio_to_db(0.0), f64::NEG_INFINITY);

        let a = image_rejection_ratio(&IqMismatch::new(0.1, 0.1).unwrap().coefficients()).unwrap();
        assert!((a - 0.020_065_026_466_965_77).abs() < 1e-15);
        assert!((ratio_to_db(a) - (-16.975602630694593)).abs() < 1e-12);

        let m = IqMismatch::new(10f64.powf(-0.75), 0.0).unwrap();
        let a = image_rejection_ratio(&m.coefficients()).unwrap();
        assert!((a - 10f64.powf(-1.5)).abs() < 1e-15);

        let degenerate = MismatchCoefficients { alpha: ComplexSample::ZERO, beta: ComplexSample::ONE };
        assert!(matches!(image_rejection_ratio(&degenerate), Err(Error::DegenerateMismatch)));
    }

    #[test]
    fn irr_inverse_examples() {
        let m = irr_to_mismatch(-15.0).unwrap();
        assert!((m.epsilon() - 0.177_827_941_003_892_3).abs() < 1e-15);
        assert_eq!(m.theta(), 0.0);
        assert_eq!(irr_to_mismatch(f64::NEG_INFINITY).unwrap(), IqMismatch::IDEAL);
        let m = irr_to_mismatch(-20.0).unwrap();
        assert!((m.epsilon() - 0.1).abs() < 1e-15);
        assert!(irr_to_mismatch(0.0).is_err());
        assert!(irr_to_mismatch(3.0).is_err());
        assert!(irr_to_mismatch(f64::NAN).is_err());
    }

    #[test]
    fn psk_examples() {
        assert!(close(psk_symbol(0, 16).unwrap(), ComplexSample::ONE, 0.0));
        assert!(close(psk_symbol(4, 16).unwrap(), ComplexSample::new(0.0, 1.0), 1e-15));
        assert!(close(
            psk_symbol(1, 16).unwrap(),
            ComplexSample::new(0.9238795325112867, 0.3826834323650898),
            1e-15
        ));
        assert!(matches!(psk_symbol(16, 16), Err(Error::SymbolIndex { index: 16, order: 16 })));
        for s in psk_alphabet(16).unwrap() {
            assert!((s.norm_sqr() - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn transmit_examples() {
        let ideal = MismatchCoefficients::IDEAL;
        let x = transmit(ComplexSample::ONE, ComplexSample::new(0.3, 0.7), &pair(4.0, 0.0), &ideal);
        assert!(close(x, ComplexSample::new(2.0, 0.0), 1e-15));

        let tx = MismatchCoefficients { alpha: ComplexSample::ONE, beta: ComplexSample::new(0.1, 0.0) };
        let x = transmit(ComplexSample::ZERO, ComplexSample::new(0.0, 1.0), &pair(0.0, 1.0), &tx);
        assert!(close(x, ComplexSample::new(0.0, -0.1), 1e-15));

        let x = transmit(ComplexSample::ZERO, ComplexSample::ZERO, &pair(3.0, 5.0), &tx);
        assert_eq!(x, ComplexSample::ZERO);
    }

    #[test]
    fn receive_examples() {
        let ideal = MismatchCoefficients::IDEAL;
        let y = receive(ComplexSample::ONE, ComplexSample::ZERO, ComplexSample::ONE, ComplexSample::ZERO, &pair(4.0, 0.0), &ideal);
        assert!(close(y, ComplexSample::new(2.0, 0.0), 1e-15));

        let w = ComplexSample::new(-0.4, 0.25);
        let tx = IqMismatch::new(0.2, 0.1).unwrap().coefficients();
        let y = receive(ComplexSample::ZERO, ComplexSample::ZERO, ComplexSample::new(0.5, 2.0), w, &pair(1.0, 1.0), &tx);
        assert_eq!(y, w);

        let tx = MismatchCoefficients { alpha: ComplexSample::ONE, beta: ComplexSample::new(0.2, 0.0) };
        let y = receive(ComplexSample::ONE, ComplexSample::ONE, ComplexSample::new(0.0, 1.0), ComplexSample::ZERO, &pair(1.0, 1.0), &tx);
        assert!(close(y, ComplexSample::new(0.0, 1.2), 1e-15));
    }

    #[test]
    fn receive_joint_examples() {
        let y = ComplexSample::new(0.3, -1.1);
        let ym = ComplexSample::new(2.0, 0.5);
        assert_eq!(receive_joint(y, ym, &MismatchCoefficients::IDEAL), y);

        let rx = MismatchCoefficients { alpha: ComplexSample::ONE, beta: ComplexSample::new(0.1, 0.0) };
        let r = receive_joint(ComplexSample::ZERO, ComplexSample::new(0.0, 1.0), &rx);
        assert!(close(r, ComplexSample::new(0.0, -0.1), 1e-15));

        let rx = IqMismatch::new(0.3, -0.2).unwrap().coefficients();
        assert!(close(receive_joint(y, ComplexSample::ZERO, &rx), rx.alpha * y, 0.0));
    }

    #[test]
    fn primary_rx_examples() {
        let s = ComplexSample::new(0.6, 0.8);
        let g = ComplexSample::new(1.5, -0.5);
        let ss = ComplexSample::new(0.0, 1.0);
        let h = ComplexSample::new(0.7, 0.7);
        let w = ComplexSample::new(0.01, 0.02);
        let clean = s * g.scale(2f64.sqrt()) + w;
        assert!(close(primary_rx(s, g, ss, h, w, 2.0, 4.0, &MismatchCoefficients::IDEAL), clean, 1e-15));
        let tx = IqMismatch::new(0.3, 0.0).unwrap().coefficients();
        assert!(close(primary_rx(s, g, ss, h, w, 2.0, 0.0, &tx), clean, 1e-15));

        let tx = MismatchCoefficients { alpha: ComplexSample::ONE, beta: ComplexSample::new(0.1, 0.0) };
        let y = primary_rx(ComplexSample::ONE, ComplexSample::ONE, ss, ComplexSample::ONE, ComplexSample::ZERO, 1.0, 4.0, &tx);
        assert!(close(y, ComplexSample::new(1.0, -0.2), 1e-15));
    }

    #[test]
    fn gaussian_draws_have_requested_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let (mut power, mut sum_re, mut sum_im, mut sum_reim, mut sum_re2, mut sum_im2) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let h = draw_rayleigh(1.0, &mut rng).unwrap();
            power += h.norm_sqr();
            sum_re += h.re;
            sum_im += h.im;
            sum_reim += h.re * h.im;
            sum_re2 += h.re * h.re;
            sum_im2 += h.im * h.im;
        }
        let nf = n as f64;
        assert!((power / nf - 1.0).abs() < 0.01);
        let cov = sum_reim / nf - (sum_re / nf) * (sum_im / nf);
        let corr = cov / ((sum_re2 / nf) * (sum_im2 / nf)).sqrt();
        assert!(corr.abs() < 0.01, "{corr}");

        assert!(draw_rayleigh(0.0, &mut rng).is_err());
        assert!(draw_noise(-1.0, &mut rng).is_err());
        let w = (0..100_000).map(|_| draw_noise(0.25, &mut rng).unwrap().norm_sqr()).sum::<f64>() / 1e5;
        assert!((w - 0.25).abs() < 0.01 * 0.25 * 3.0);
    }

    #[test]
    fn pair_config_validation() {
        assert!(SubcarrierPairConfig::new(1.0, 1.0, 12, 1.0, 1.0, 1.0).is_err());
        assert!(SubcarrierPairConfig::new(-1.0, 1.0, 16, 1.0, 1.0, 1.0).is_err());
        assert!(SubcarrierPairConfig::new(1.0, 1.0, 16, 0.0, 1.0, 1.0).is_err());
        assert!(SubcarrierPairConfig::new(1.0, 1.0, 16, 1.0, 1.0, 0.0).is_err());
        let m = pair(2.0, 3.0).mirrored();
        assert_eq!((m.power_k, m.power_mk), (3.0, 2.0));
    }

    proptest! {
        #[test]
        fn energy_identity(eps in -0.99f64..0.99, theta in -1.5f64..1.5) {
            let c = IqMismatch::new(eps, theta).unwrap().coefficients();
            prop_assert!((c.alpha.norm_sqr() + c.beta.norm_sqr() - (1.0 + eps * eps)).abs() < 1e-12);
        }

        #[test]
        fn irr_round_trip(irr_db in -60.0f64..-1.0) {
            let m = irr_to_mismatch(irr_db).unwrap();
            let back = ratio_to_db(image_rejection_ratio(&m.coefficients()).unwrap());
            prop_assert!((back - irr_db).abs() < 1e-9);
        }

        #[test]
        fn mirror_only_reception_is_pure_leakage(
            eps in -0.9f64..0.9, theta in -1.2f64..1.2, phase in 0.0f64..6.3,
            hr in -2.0f64..2.0, hi in -2.0f64..2.0, wr in -1.0f64..1.0, wi in -1.0f64..1.0,
            pmk in 0.0f64..10.0,
        ) {
            let tx = IqMismatch::new(eps, theta).unwrap().coefficients();
            let s = ComplexSample::new(phase.cos(), phase.sin());
            let h = ComplexSample::new(hr, hi);
            let w = ComplexSample::new(wr, wi);
            let cfg = pair(1.0, pmk);
            let got = receive(ComplexSample::ZERO, s, h, w, &cfg, &tx);
            let want = tx.beta * h * s.conj().scale(pmk.sqrt()) + w;
            prop_assert!(close(got, want, 1e-12));
        }
    }
}
