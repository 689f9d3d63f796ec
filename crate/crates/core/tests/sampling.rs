//! Statistical checks of the samplers and the Monte Carlo pipeline.

use bellbeam_core::dcs::{AngularDensity, DcsPair, VKernel};
use bellbeam_core::estimator::{bootstrap_std_error, estimate_chsh, Kernels};
use bellbeam_core::experiment::{run_trials, run_trials_with_threads, ExperimentConfig, SideOutcome};
use bellbeam_core::quantum::{Sign, SignPattern};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const BINS: usize = 50;
const SIGNIFICANCE: f64 = 1e-3;

fn quantile(f: &AngularDensity, u: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, std::f64::consts::PI);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if f.cdf(mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn chi_square_p_value(f: &AngularDensity, n: usize, seed: u64) -> f64 {
    let edges: Vec<f64> = (1..BINS).map(|i| quantile(f, i as f64 / BINS as f64)).collect();
    let mut counts = [0u64; BINS];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n {
        let x = f.sample(&mut rng);
        counts[edges.partition_point(|&e| e < x)] += 1;
    }
    let expected = n as f64 / BINS as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    1.0 - ChiSquared::new((BINS - 1) as f64).unwrap().cdf(stat)
}

#[test]
fn sampled_angles_follow_their_densities() {
    let one = DcsPair::default_channel_one();
    let two = DcsPair::default_channel_two();
    let cases = [one.plus(), one.minus(), two.plus(), two.minus()];
    for (i, f) in cases.into_iter().enumerate() {
        let p = chi_square_p_value(f, 200_000, 17 + i as u64);
        assert!(p > SIGNIFICANCE, "density {i}: p-value {p}");
    }
    let edge = AngularDensity::single(0.05, 0.3).unwrap();
    assert!(chi_square_p_value(&edge, 200_000, 3) > SIGNIFICANCE);
}

#[test]
fn kernel_weight_decodes_samples() {
    let pair = DcsPair::default_channel_one();
    let k = VKernel::new(&pair).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 200_000;
    for sign in Sign::BOTH {
        let w: Vec<f64> = (0..n).map(|_| k.weight(pair.density(sign).sample(&mut rng))).collect();
        let mean = w.iter().sum::<f64>() / n as f64;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - sign.value()).abs() < 5.0 * se, "{sign:?}: {mean} ± {se}");
    }
}

fn config(p: f64, trials: u64, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        trials,
        seed,
        ..ExperimentConfig::werner(p).unwrap()
    }
}

#[test]
fn routing_and_direct_outcomes_are_fair() {
    let cfg = ExperimentConfig {
        scatter_probability: [0.3, 0.65],
        ..config(0.9, 100_000, 8)
    };
    let (records, _) = run_trials(&cfg).unwrap();
    let n = records.len() as f64;
    for (side, q) in [0usize, 1].into_iter().zip(cfg.scatter_probability) {
        let outcome = |r: &bellbeam_core::experiment::TrialRecord| if side == 0 { r.first } else { r.second };
        let scattered = records.iter().filter(|r| outcome(r).is_scattered()).count() as f64;
        let sigma = (q * (1.0 - q) / n).sqrt();
        assert!((scattered / n - q).abs() < 5.0 * sigma, "side {side}");

        let direct: Vec<Sign> = records
            .iter()
            .filter_map(|r| match outcome(r) {
                SideOutcome::Direct(s) => Some(s),
                SideOutcome::Scattered(_) => None,
            })
            .collect();
        let m = direct.len() as f64;
        let plus = direct.iter().filter(|&&s| s == Sign::Plus).count() as f64;
        assert!((plus / m - 0.5).abs() < 5.0 * (0.25 / m).sqrt(), "side {side}");
    }
}

#[test]
fn mean_statistic_grows_with_p() {
    let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut previous = -1.0;
    for p in grid {
        let mean: f64 = (0..3)
            .map(|seed| {
                let cfg = config(p, 30_000, seed);
                let (records, _) = run_trials(&cfg).unwrap();
                let k = Kernels::from_config(&cfg).unwrap();
                estimate_chsh(&records, &k, SignPattern::default()).unwrap().s.abs()
            })
            .sum::<f64>()
            / 3.0;
        assert!(mean > previous, "p = {p}: {mean} <= {previous}");
        previous = mean;
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let cfg = config(0.6, 20_000, 42);
    let (a, ca) = run_trials_with_threads(&cfg, 1).unwrap();
    let (b, cb) = run_trials_with_threads(&cfg, 5).unwrap();
    assert_eq!(a, b);
    assert_eq!(ca.histograms(), cb.histograms());
}

#[test]
fn bootstrap_agrees_with_delta_method() {
    let cfg = config(1.0, 20_000, 9);
    let (records, _) = run_trials(&cfg).unwrap();
    let k = Kernels::from_config(&cfg).unwrap();
    let est = estimate_chsh(&records, &k, SignPattern::default()).unwrap();
    let boot = bootstrap_std_error(&records, &k, SignPattern::default(), 300, 1).unwrap();
    let ratio = boot / est.std_error;
    assert!(
        (0.8..1.25).contains(&ratio),
        "bootstrap {boot} vs delta {}",
        est.std_error
    );
}
