//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test -p iqsense --test acceptance`.

use iqsense::detection::{
    conditional_matrix, decision_rule, gamma_laws, ordering_chains_hold, scale_of, Convention, DetectorMode,
    Hypothesis, HypothesisVariances, StatisticLaw, DEFAULT_MERGE_TOL,
};
use iqsense::experiments::{cmd_sense, default_irr_grid, ExperimentConfig};
use iqsense::montecarlo::{
    empirical_metrics, paired_busy_difference, run_trials, sample_statistics, simulate, with_workers, ScenarioSpec,
    SeedSpec,
};
use iqsense::numerics::{gamma_pdf, regularized_upper_gamma, GammaShape};
use iqsense::outage::{analytic_outage, mc_outage, OutageScenario};
use iqsense::signal_model::irr_to_mismatch;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

/// Name, time budget and check.
type Criterion = (&'static str, Duration, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn shape(n: u32) -> GammaShape {
    GammaShape::new(n).unwrap()
}

/// `e^{-x} Σ_{m<N} x^m/m!`, summed directly.
fn erlang_tail(n: u32, x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for m in 1..n {
        term *= x / m as f64;
        sum += term;
    }
    (-x).exp() * sum
}

fn special_function_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=50);
        let x = rng.random_range(0.0..=100.0);
        let got = regularized_upper_gamma(shape(n), x).unwrap();
        let want = erlang_tail(n, x);
        worst = worst.max(((got - want) / want).abs());
    }
    outcome(worst <= 1e-12, format!("max relative error {worst:.2e} over 1000 (N, x) pairs"))
}

fn ks_distance(mut samples: Vec<f64>, law: &StatisticLaw) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let cdf = 1.0 - law.sf(z).unwrap();
            (cdf - i as f64 / n).max((i + 1) as f64 / n - cdf)
        })
        .fold(0.0, f64::max)
}

fn distributional_validation() -> Outcome {
    let mut worst = 0.0f64;
    let mut worst_exact = 0.0f64;
    let mut detail = Vec::new();
    for n in [1, 4] {
        let sc = ScenarioSpec::new(0.0, -10.0, Some(-15.0)).with_packets(n).build().unwrap();
        let gamma = gamma_laws(&sc.variances().unwrap(), sc.n_packets).unwrap();
        let exact = sc.exact_laws().unwrap();
        for h in Hypothesis::ALL {
            let z = sample_statistics(&sc, h, 100_000, SeedSpec::new(202, n)).unwrap();
            let d = ks_distance(z.clone(), &gamma[h.index()]);
            worst_exact = worst_exact.max(ks_distance(z, &exact[h.index()]));
            worst = worst.max(d);
            detail.push(format!("N={n} {h}: {d:.4}"));
        }
    }
    outcome(
        worst < 0.006,
        format!("max KS {worst:.4} vs Gamma (exact law {worst_exact:.4}) [{}]", detail.join(", ")),
    )
}

fn random_ordered(rng: &mut ChaCha8Rng) -> HypothesisVariances {
    let base = rng.random_range(0.01..10.0);
    let mut v = [base; 4];
    for i in 1..4 {
        v[i] = v[i - 1] * (1.0 + rng.random_range(1e-6..5.0));
    }
    HypothesisVariances::from_array(v).unwrap()
}

fn threshold_ordering() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut failures = 0;
    for _ in 0..10_000 {
        let v = random_ordered(&mut rng);
        let n = shape(rng.random_range(1..=32));
        let rule = decision_rule(&v, n, DEFAULT_MERGE_TOL);
        let increasing = match (rule.s01(), rule.s12(), rule.s23()) {
            (Some(a), Some(b), Some(c)) => a < b && b < c,
            _ => false,
        };
        if !(ordering_chains_hold(&v, n) && increasing) {
            failures += 1;
        }
    }
    outcome(failures == 0, format!("{failures} of 10000 random quadruples violate the ordering"))
}

fn random_spec(rng: &mut ChaCha8Rng) -> ScenarioSpec {
    let n = [1, 2, 4, 8][rng.random_range(0..4)];
    ScenarioSpec::new(rng.random_range(-10.0..10.0), rng.random_range(-20.0..10.0), Some(rng.random_range(-30.0..-5.0)))
        .with_packets(n)
}

fn classifier_is_ml() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut checked, mut disagreements, mut boundary_errors) = (0u64, 0u64, 0u64);
    for _ in 0..100 {
        let sc = random_spec(&mut rng).build().unwrap();
        let v = sc.variances().unwrap();
        let n = sc.n_packets;
        let rule = decision_rule(&v, n, DEFAULT_MERGE_TOL);
        let log_density = |h: Hypothesis, z: f64| gamma_pdf(n, scale_of(v.get(h), n).unwrap(), z).ln();
        let top = 6.0 * 2.0 * v.get(Hypothesis::H3);
        for i in 1..=1000 {
            let z = top * i as f64 / 1000.0;
            let logs = Hypothesis::ALL.map(|h| log_density(h, z));
            let best = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let argmax = Hypothesis::ALL.into_iter().find(|h| logs[h.index()] == best).unwrap();
            let got = rule.classify(z);
            checked += 1;
            // Distinct answers are acceptable only at a numerical tie.
            if got != argmax && logs[got.index()] < best - 1e-12 * best.abs().max(1.0) {
                disagreements += 1;
            }
        }
        // A statistic exactly on a boundary belongs to the upper region.
        for (i, t) in rule.thresholds().iter().enumerate() {
            if rule.classify(*t) != rule.groups()[i + 1].decided {
                boundary_errors += 1;
            }
        }
    }
    outcome(
        disagreements == 0 && boundary_errors == 0,
        format!("{disagreements} disagreements in {checked} points, {boundary_errors} boundary-rule violations"),
    )
}

/// `P(|Z| > 3)` for a standard normal.
const TWO_SIDED_3SE: f64 = 0.0026997960632601866;
/// Two-sided normal quantile at `0.05 / 320`.
const BONFERRONI_Z_320: f64 = 3.78;

fn closure() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut specs = vec![ScenarioSpec::new(0.0, -10.0, Some(-15.0))];
    specs.extend((0..19).map(|_| random_spec(&mut rng)));
    let trials = 1_000_000u64;
    let (mut compared, mut failures, mut worst) = (0, 0, 0.0f64);
    let mut failed = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        let sc = spec.build().unwrap();
        let rule = sc.rule().unwrap();
        let m = conditional_matrix(&sc.exact_laws().unwrap(), &rule).unwrap();
        let t = run_trials(&sc, trials, SeedSpec::new(505, i as u32)).unwrap();
        for truth in Hypothesis::ALL {
            for decided in Hypothesis::ALL {
                let p = m[truth.index()][decided.index()];
                let f = t.conditional(truth, decided).unwrap();
                let se = (p * (1.0 - p) / trials as f64).sqrt();
                compared += 1;
                if se > 0.0 {
                    worst = worst.max((f - p).abs() / se);
                }
                if (f - p).abs() > 3.0 * se {
                    failures += 1;
                    failed.push(format!("scenario {i} P({decided}|{truth})"));
                }
            }
        }
    }
    // Not part of the gate: with this many simultaneous 3-SE checks a correct
    // model still exceeds one now and then, so report the family-wise picture.
    let expected = compared as f64 * TWO_SIDED_3SE;
    let bonferroni = worst <= BONFERRONI_Z_320;
    outcome(
        failures == 0,
        format!(
            "{failures} of {compared} conditionals outside 3 SE (largest deviation {worst:.2} SE) {}; \
             info: a correct model gives {expected:.2} such exceedances on average, and the largest deviation \
             is {} the family-wise 5% bound of {BONFERRONI_Z_320} SE",
            failed.join(", "),
            if bonferroni { "within" } else { "beyond" }
        ),
    )
}

fn headline_comparison() -> Outcome {
    let modes = [DetectorMode::FourLevel, DetectorMode::TwoLevelBayes];
    let mut ok = true;
    let mut detail = Vec::new();
    for (i, irr) in [-25.0, -20.0, -15.0, -10.0].into_iter().enumerate() {
        let sc = ScenarioSpec::new(0.0, -10.0, Some(irr)).build().unwrap();
        let rules = modes.map(|m| sc.rule_for(m).unwrap());
        let out = simulate(&sc, &rules, 1_000_000, SeedSpec::new(606, i as u32)).unwrap();
        let four = empirical_metrics(&out.tallies[0], Convention::PriorWeighted).unwrap().p_fa;
        let two = empirical_metrics(&out.tallies[1], Convention::PriorWeighted).unwrap().p_fa;
        // Positive when the two-level detector raises more false alarms.
        let weights = [(Hypothesis::H0, 0.5), (Hypothesis::H1, 0.5)];
        let gap = paired_busy_difference(&out, 1, 0, &weights).unwrap();
        ok &= four.value < two.value && gap.lower > 0.0;
        detail.push(format!(
            "IRR {irr}: four {:.6} two {:.6} gap {:.2e} CI [{:.2e}, {:.2e}]",
            four.value, two.value, gap.value, gap.lower, gap.upper
        ));
    }
    outcome(ok, format!("paired 95% CIs; {}", detail.join("; ")))
}

fn delta_snr_sensitivity() -> Outcome {
    // SNR₂ = SNR₁ + 10 dB; at SNR₁ = 0 dB the imbalance barely moves the false-alarm rate.
    let trials = 1_000_000;
    let seed = SeedSpec::new(707, 0);
    let imbalanced = ScenarioSpec::new(10.0, 20.0, Some(-15.0)).build().unwrap();
    let ideal = ScenarioSpec::new(10.0, 20.0, None).build().unwrap();
    let f = empirical_metrics(&run_trials(&imbalanced, trials, seed).unwrap(), Convention::PriorWeighted).unwrap();
    let b = empirical_metrics(&run_trials(&ideal, trials, seed.with_stream(1)).unwrap(), Convention::PriorWeighted)
        .unwrap();
    let excess = f.p_fa.value - b.p_fa.value;
    let bar = 5.0 * b.p_fa.half_width();
    outcome(
        excess > bar,
        format!(
            "SNR1 10 dB, SNR2 20 dB: four-level {:.5} vs ideal {:.5}, excess {excess:.5} > 5x half-width {bar:.5}",
            f.p_fa.value, b.p_fa.value
        ),
    )
}

fn joint_degradation() -> Outcome {
    let trials = 1_000_000;
    let seed = SeedSpec::new(808, 0);
    let tx_only = ScenarioSpec::new(0.0, -10.0, Some(-15.0));
    let p_d = |spec: &ScenarioSpec| {
        let t = run_trials(&spec.build().unwrap(), trials, seed).unwrap();
        empirical_metrics(&t, Convention::PriorWeighted).unwrap().p_d
    };
    let a = p_d(&tx_only);
    let j = p_d(&tx_only.clone().with_rx_irr(Some(-15.0)));
    let i = p_d(&tx_only.clone().with_rx_irr(Some(f64::NEG_INFINITY)));
    let separated = a.value - j.value > a.half_width() + j.half_width();
    let coincide = (a.value - i.value).abs() <= a.half_width() + i.half_width();
    outcome(
        separated && coincide,
        format!(
            "P_D tx-only {:.5} ±{:.5}, joint {:.5} ±{:.5}, ideal rx {:.5} ±{:.5}",
            a.value,
            a.half_width(),
            j.value,
            j.half_width(),
            i.value,
            i.half_width()
        ),
    )
}

fn outage_criterion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let trials = 1_000_000u64;
    let (mut mc_failures, mut limit_err, mut worst) = (0, 0.0f64, 0.0f64);
    for i in 0..100 {
        let irr = rng.random_range(-30.0..-5.0);
        let sc = OutageScenario {
            p_mk: rng.random_range(0.5..50.0),
            p0: rng.random_range(0.1..100.0),
            beta_sq_sec: irr_to_mismatch(irr).unwrap().coefficients().beta.norm_sqr(),
            noise_p: rng.random_range(0.5..2.0),
            var_g: rng.random_range(0.5..2.0),
            var_h: rng.random_range(0.5..2.0),
            rate_p: rng.random_range(0.2..3.0),
        };
        let p = analytic_outage(&sc).unwrap();
        let est = mc_outage(&sc, trials, SeedSpec::new(909, i)).unwrap();
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        worst = worst.max((est.frequency - p).abs() / se);
        if (est.frequency - p).abs() >= 3.0 * se {
            mc_failures += 1;
        }
        let clean = OutageScenario { beta_sq_sec: 0.0, ..sc };
        let limit = 1.0 - (-sc.gamma_th() / clean.sigma_x1()).exp();
        limit_err = limit_err.max((analytic_outage(&clean).unwrap() - limit).abs());
    }
    let base = OutageScenario { p_mk: 10.0, p0: 10.0, beta_sq_sec: 0.0, noise_p: 1.0, var_g: 1.0, var_h: 1.0, rate_p: 1.0 };
    let curve: Vec<f64> = default_irr_grid()
        .into_iter()
        .map(|irr| {
            let beta_sq_sec = irr_to_mismatch(irr).unwrap().coefficients().beta.norm_sqr();
            analytic_outage(&OutageScenario { beta_sq_sec, ..base }).unwrap()
        })
        .collect();
    let monotone = curve.windows(2).all(|w| w[0] <= w[1]);
    outcome(
        mc_failures == 0 && monotone && limit_err <= 1e-12,
        format!(
            "{mc_failures} of 100 scenarios outside 3 SE (largest {worst:.2} SE); monotone over IRR grid: {monotone}; \
             interference-free limit error {limit_err:.1e}"
        ),
    )
}

fn determinism() -> Outcome {
    let cfg = ExperimentConfig { seed: 1010, trials: 1_000_000, ..Default::default() };
    let render = |workers| with_workers(workers, || cmd_sense(&cfg, true).unwrap().to_csv().unwrap()).unwrap();
    let (a, b, c) = (render(1), render(1), render(4));
    let library = a == b && a == c;

    let dir = tempfile::tempdir().unwrap();
    let run = |workers: usize, name: &str| {
        let path = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_iqsense"))
            .args(["sense", "--seed", "1010", "--trials", "1000000", "--workers", &workers.to_string(), "--out"])
            .arg(&path)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(path).unwrap()
    };
    let (x, y, z) = (run(1, "a.csv"), run(1, "b.csv"), run(4, "c.csv"));
    let cli = x == y && x == z;
    outcome(
        library && cli,
        format!("library outputs identical: {library}; CLI files identical across runs and --workers 1/4: {cli}"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("special-function oracle", Duration::from_secs(1), special_function_oracle),
        ("distributional validation", Duration::from_secs(30), distributional_validation),
        ("threshold ordering", Duration::from_secs(5), threshold_ordering),
        ("classifier is the ML partition", Duration::from_secs(10), classifier_is_ml),
        ("analytic/empirical closure", Duration::from_secs(300), closure),
        ("four-level below two-level false alarm", Duration::from_secs(300), headline_comparison),
        ("delta-SNR sensitivity", Duration::from_secs(120), delta_snr_sensitivity),
        ("joint Tx-Rx degradation", Duration::from_secs(180), joint_degradation),
        ("primary outage", Duration::from_secs(120), outage_criterion),
        ("determinism", Duration::from_secs(60), determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let passed = result.passed && elapsed < budget;
        failed += usize::from(!passed);
        println!(
            "{} criterion {:>2} {name}: {} [{:.2} s of {} s]",
            if passed { "PASS" } else { "FAIL" },
            i + 1,
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
