//! The continuous-variable CHSH statistic estimated from trial records.
//!
//! Each correlation term is the sample mean of `w₁·w₂` over the pairs that
//! realised that setting combination, where `w` is the kernel factor
//! `v(θ|+) − v(θ|−)` for a scattered side and the sensor reading `±1` for a
//! direct side.

use std::sync::OnceLock;

use rand::Rng;
use serde::Serialize;

use crate::dcs::VKernel;
use crate::error::{Error, Result};
use crate::experiment::{run_trials, ExperimentConfig, SideOutcome, TrialRecord};
use crate::quantum::{chsh_discrete, BipartiteState, ChshSettings, SettingPair, SignPattern};
use crate::rng::{derive_seed, TrialStreams};

/// Violation is declared when `|S| − 2` exceeds this many standard errors.
pub const VIOLATION_SIGMAS: f64 = 3.0;
pub const LOCAL_BOUND: f64 = 2.0;
pub const DEFAULT_BOOTSTRAP_RESAMPLES: usize = 1000;

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Decoding kernels for the two scattering channels.
#[derive(Clone, Debug)]
pub struct Kernels {
    pub channel_one: VKernel,
    pub channel_two: VKernel,
}

impl Kernels {
    pub fn from_config(config: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            channel_one: VKernel::new(&config.channel_one)?,
            channel_two: VKernel::new(&config.channel_two)?,
        })
    }

    /// `w₁·w₂` for one record.
    pub fn product(&self, rec: &TrialRecord) -> f64 {
        side_weight(&rec.first, &self.channel_one) * side_weight(&rec.second, &self.channel_two)
    }
}

fn side_weight(outcome: &SideOutcome, kernel: &VKernel) -> f64 {
    match outcome {
        SideOutcome::Scattered(theta) => kernel.weight(*theta),
        SideOutcome::Direct(s) => s.value(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TermEstimate {
    pub setting: SettingPair,
    pub n: u64,
    pub value: f64,
    pub std_error: f64,
}

/// Estimates `E` for one setting pair from the records that realised it.
pub fn estimate_term(setting: SettingPair, records: &[TrialRecord], kernels: &Kernels) -> Result<TermEstimate> {
    let products: Vec<f64> = records
        .iter()
        .filter(|r| r.setting() == setting)
        .map(|r| kernels.product(r))
        .collect();
    term_from_products(setting, &products)
}

fn term_from_products(setting: SettingPair, products: &[f64]) -> Result<TermEstimate> {
    let n = products.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "sub-ensemble {setting} has {n} pairs; at least 2 are needed"
        )));
    }
    let mean = products.iter().copied().collect::<CompensatedSum>().value() / n as f64;
    let ss = products
        .iter()
        .map(|x| (x - mean) * (x - mean))
        .collect::<CompensatedSum>()
        .value();
    let std = (ss / (n - 1) as f64).sqrt();
    Ok(TermEstimate {
        setting,
        n: n as u64,
        value: mean,
        std_error: std / (n as f64).sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMethod {
    Delta,
    Bootstrap { resamples: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChshEstimate {
    /// Ordered `r1t1, r1t2, r2t1, r2t2`.
    pub terms: [TermEstimate; 4],
    pub s: f64,
    pub std_error: f64,
    pub signs: SignPattern,
    pub method: ErrorMethod,
    pub violated: bool,
}

impl ChshEstimate {
    pub fn term(&self, setting: SettingPair) -> &TermEstimate {
        &self.terms[setting.index()]
    }

    /// Replaces the standard error (and verdict) with a bootstrap estimate.
    pub fn with_std_error(mut self, std_error: f64, method: ErrorMethod) -> Self {
        self.std_error = std_error;
        self.method = method;
        self.violated = is_violation(self.s, std_error);
        self
    }
}

pub fn is_violation(s: f64, std_error: f64) -> bool {
    s.abs() - LOCAL_BOUND > VIOLATION_SIGMAS * std_error
}

/// Signed sum of the four terms with quadrature-summed standard errors.
pub fn assemble_s(terms: &[TermEstimate], signs: SignPattern) -> Result<ChshEstimate> {
    let mut ordered: [Option<TermEstimate>; 4] = [None; 4];
    for t in terms {
        if ordered[t.setting.index()].replace(*t).is_some() {
            return Err(Error::Domain(format!("duplicate term for {}", t.setting)));
        }
    }
    let mut out = Vec::with_capacity(4);
    for (slot, pair) in ordered.iter().zip(SettingPair::ALL) {
        out.push(slot.ok_or_else(|| Error::InsufficientData(format!("missing term {pair}")))?);
    }
    let terms: [TermEstimate; 4] = out.try_into().expect("four terms");
    let s = terms
        .iter()
        .map(|t| signs.sign(t.setting) * t.value)
        .collect::<CompensatedSum>()
        .value();
    let std_error = terms.iter().map(|t| t.std_error * t.std_error).sum::<f64>().sqrt();
    Ok(ChshEstimate {
        terms,
        s,
        std_error,
        signs,
        method: ErrorMethod::Delta,
        violated: is_violation(s, std_error),
    })
}

/// All four terms and `S` from one run's records.
pub fn estimate_chsh(records: &[TrialRecord], kernels: &Kernels, signs: SignPattern) -> Result<ChshEstimate> {
    let mut buckets: [Vec<f64>; 4] = Default::default();
    for r in records {
        buckets[r.setting().index()].push(kernels.product(r));
    }
    let terms = SettingPair::ALL
        .iter()
        .zip(&buckets)
        .map(|(&s, b)| term_from_products(s, b))
        .collect::<Result<Vec<_>>>()?;
    assemble_s(&terms, signs)
}

/// Standard error of `S` from resampling trials with replacement.
pub fn bootstrap_std_error(
    records: &[TrialRecord],
    kernels: &Kernels,
    signs: SignPattern,
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    if resamples < 2 {
        return Err(Error::Domain("bootstrap needs at least 2 resamples".into()));
    }
    if records.is_empty() {
        return Err(Error::InsufficientData("no records to resample".into()));
    }
    let products: Vec<(usize, f64)> = records
        .iter()
        .map(|r| (r.setting().index(), kernels.product(r)))
        .collect();
    let streams = TrialStreams::new(seed);
    let n = products.len();
    let stats = (0..resamples)
        .map(|b| {
            let mut rng = streams.stream(b as u64);
            let mut sums = [CompensatedSum::default(); 4];
            let mut counts = [0u64; 4];
            for _ in 0..n {
                let (k, x) = products[rng.random_range(0..n)];
                sums[k].add(x);
                counts[k] += 1;
            }
            if counts.contains(&0) {
                return Err(Error::InsufficientData(
                    "a bootstrap resample left a sub-ensemble empty".into(),
                ));
            }
            Ok(SettingPair::ALL
                .iter()
                .map(|&s| signs.sign(s) * sums[s.index()].value() / counts[s.index()] as f64)
                .sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = stats.iter().sum::<f64>() / resamples as f64;
    let var = stats.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (resamples - 1) as f64;
    Ok(var.sqrt())
}

/// The exact discrete CHSH value along the Werner family, `S(p) = c·p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TheoryCurve {
    /// Signed value of `S` at `p = 1`.
    coefficient: f64,
}

impl TheoryCurve {
    pub fn new(settings: &ChshSettings, signs: SignPattern) -> Self {
        let bell = BipartiteState::werner(1.0).expect("valid");
        Self {
            coefficient: chsh_discrete(&bell, settings, signs),
        }
    }

    /// Standard settings and `(+,+,−,+)`.
    pub fn standard() -> &'static TheoryCurve {
        static CURVE: OnceLock<TheoryCurve> = OnceLock::new();
        CURVE.get_or_init(|| TheoryCurve::new(&ChshSettings::default(), SignPattern::default()))
    }

    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    /// `±1`: multiplying a measured `S` by this makes the theory positive.
    pub fn orientation(&self) -> f64 {
        if self.coefficient < 0.0 {
            -1.0
        } else {
            1.0
        }
    }

    /// `|c|·p`.
    pub fn magnitude(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("p = {p} outside [0, 1]")));
        }
        Ok(self.coefficient.abs() * p)
    }
}

/// `2√2·p` for the standard settings.
pub fn theoretical_s(p: f64) -> Result<f64> {
    TheoryCurve::standard().magnitude(p)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub p: f64,
    pub seed: u64,
    /// `S` multiplied by the theory orientation, so it is comparable to `s_theory`.
    pub s_hat: f64,
    pub std_error: f64,
    pub s_theory: f64,
    pub violated: bool,
    pub estimate: ChshEstimate,
}

/// One simulation plus estimate per `p`, each with a seed derived from the
/// template's master seed and the grid position.
pub fn sweep_p(grid: &[f64], template: &ExperimentConfig, signs: SignPattern) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::Domain("p grid is empty".into()));
    }
    if let Some(p) = grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Domain(format!("p = {p} outside [0, 1]")));
    }
    let kernels = Kernels::from_config(template)?;
    let curve = TheoryCurve::new(&ChshSettings::default(), signs);
    grid.iter()
        .enumerate()
        .map(|(i, &p)| {
            let seed = derive_seed(template.seed, i as u64);
            let config = ExperimentConfig {
                state: BipartiteState::werner(p)?,
                seed,
                ..template.clone()
            };
            let (records, _) = run_trials(&config)?;
            let estimate = estimate_chsh(&records, &kernels, signs)?;
            Ok(SweepRow {
                p,
                seed,
                s_hat: curve.orientation() * estimate.s,
                std_error: estimate.std_error,
                s_theory: curve.magnitude(p)?,
                violated: estimate.violated,
                estimate,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::Sign;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

    fn direct(pair: u64, a: Sign, b: Sign) -> TrialRecord {
        TrialRecord {
            pair,
            first: SideOutcome::Direct(a),
            second: SideOutcome::Direct(b),
        }
    }

    fn default_kernels() -> Kernels {
        Kernels::from_config(&ExperimentConfig::default()).unwrap()
    }

    fn term(setting: SettingPair, value: f64) -> TermEstimate {
        TermEstimate {
            setting,
            n: 100,
            value,
            std_error: 0.01,
        }
    }

    #[test]
    fn all_direct_anticorrelated() {
        let mut recs = Vec::new();
        for i in 0..10 {
            recs.push(direct(2 * i, Sign::Plus, Sign::Minus));
            recs.push(direct(2 * i + 1, Sign::Minus, Sign::Plus));
        }
        let t = estimate_term(SettingPair::R2T2, &recs, &default_kernels()).unwrap();
        assert_eq!(t.value, -1.0);
        assert_eq!(t.std_error, 0.0);
        assert_eq!(t.n, 20);
    }

    #[test]
    fn empty_sub_ensemble_is_an_error() {
        let recs = vec![direct(0, Sign::Plus, Sign::Plus); 5];
        assert!(matches!(
            estimate_term(SettingPair::R1T1, &recs, &default_kernels()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn assemble_examples() {
        let h = FRAC_1_SQRT_2;
        let terms = [
            term(SettingPair::R1T1, -h),
            term(SettingPair::R1T2, -h),
            term(SettingPair::R2T1, h),
            term(SettingPair::R2T2, -h),
        ];
        let est = assemble_s(&terms, SignPattern::default()).unwrap();
        assert_abs_diff_eq!(est.s, -2.0 * SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(est.std_error, 0.02, epsilon = 1e-15);
        assert!(est.violated);

        let zeros = SettingPair::ALL.map(|s| term(s, 0.0));
        let est = assemble_s(&zeros, SignPattern::default()).unwrap();
        assert_eq!(est.s, 0.0);
        assert!(!est.violated);

        assert!(matches!(
            assemble_s(&terms[..3], SignPattern::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn theory_curve() {
        assert_abs_diff_eq!(theoretical_s(FRAC_1_SQRT_2).unwrap(), 2.0, epsilon = 1e-12);
        assert_eq!(theoretical_s(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(theoretical_s(1.0).unwrap(), 2.0 * SQRT_2, epsilon = 1e-12);
        assert!(theoretical_s(1.1).is_err());
        assert_eq!(TheoryCurve::standard().orientation(), -1.0);
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(xs.iter().copied().collect::<CompensatedSum>().value(), 2.0);
    }

    #[test]
    fn both_scattered_term_at_p1() {
        let cfg = ExperimentConfig {
            trials: 100_000,
            seed: 3,
            ..ExperimentConfig::default()
        };
        let (records, _) = run_trials(&cfg).unwrap();
        let t = estimate_term(SettingPair::R1T1, &records, &default_kernels()).unwrap();
        assert!((t.value + FRAC_1_SQRT_2).abs() < 5.0 * t.std_error, "{t:?}");
    }

    #[test]
    fn bootstrap_agrees_with_delta_method() {
        let cfg = ExperimentConfig {
            trials: 20_000,
            seed: 4,
            ..ExperimentConfig::werner(0.8).unwrap()
        };
        let (records, _) = run_trials(&cfg).unwrap();
        let k = default_kernels();
        let est = estimate_chsh(&records, &k, SignPattern::default()).unwrap();
        let boot = bootstrap_std_error(&records, &k, SignPattern::default(), 200, 1).unwrap();
        assert!((boot / est.std_error - 1.0).abs() < 0.25, "{boot} vs {}", est.std_error);
    }

    #[test]
    fn sweep_rejects_bad_grid() {
        let cfg = ExperimentConfig::default();
        assert!(sweep_p(&[], &cfg, SignPattern::default()).is_err());
        assert!(sweep_p(&[0.5, 1.2], &cfg, SignPattern::default()).is_err());
    }

    #[test]
    fn sweep_is_deterministic() {
        let cfg = ExperimentConfig {
            trials: 4000,
            seed: 77,
            ..ExperimentConfig::default()
        };
        let a = sweep_p(&[0.0, 1.0], &cfg, SignPattern::default()).unwrap();
        let b = sweep_p(&[0.0, 1.0], &cfg, SignPattern::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].seed, a[1].seed);
    }
}
