//! The trial engine.
//!
//! Each atom of a pair is independently scattered with probability `q`. In
//! channel I scattering realises `Z` and the direct sensor measures `X`; in
//! channel II scattering realises `(Z+X)/√2` and the sensor `(Z−X)/√2`. The
//! joint eigenvalue pair is drawn from the Born rule for the realised settings
//! and a scattered side reports an angle drawn from the density of its
//! eigenvalue.

use std::f64::consts::PI;
use std::io::{self, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dcs::DcsPair;
use crate::error::{Error, Result};
use crate::format;
use crate::quantum::{
    joint_probabilities, BipartiteState, ChshSettings, JointProbabilityTable, PairCounts, SettingPair, Sign,
};
use crate::rng::TrialStreams;

pub const DEFAULT_TRIALS: u64 = 100_000;
pub const DEFAULT_SCATTER_PROBABILITY: f64 = 0.5;
pub const DEFAULT_BINS: usize = 40;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub state: BipartiteState,
    /// Scatter probability of the channel-I and channel-II atom.
    pub scatter_probability: [f64; 2],
    pub trials: u64,
    pub seed: u64,
    pub channel_one: DcsPair,
    pub channel_two: DcsPair,
    /// θ bins per continuous histogram axis.
    pub bins: usize,
}

impl ExperimentConfig {
    pub fn werner(p: f64) -> Result<Self> {
        Ok(Self {
            state: BipartiteState::werner(p)?,
            ..Self::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        for q in self.scatter_probability {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::Config(format!("scatter probability {q} outside [0, 1]")));
            }
        }
        if self.trials == 0 {
            return Err(Error::Config("trial count must be at least 1".into()));
        }
        if self.bins == 0 {
            return Err(Error::Config("bin count must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            state: BipartiteState::werner(1.0).expect("valid"),
            scatter_probability: [DEFAULT_SCATTER_PROBABILITY; 2],
            trials: DEFAULT_TRIALS,
            seed: 0,
            channel_one: DcsPair::default_channel_one(),
            channel_two: DcsPair::default_channel_two(),
            bins: DEFAULT_BINS,
        }
    }
}

/// What one side of a pair reported.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideOutcome {
    /// Scattering angle of the product, radians.
    Scattered(f64),
    /// The direct sensor reading `S±`.
    Direct(Sign),
}

impl SideOutcome {
    pub fn is_scattered(&self) -> bool {
        matches!(self, SideOutcome::Scattered(_))
    }

    fn kind(&self) -> &'static str {
        match self {
            SideOutcome::Scattered(_) => "scattered",
            SideOutcome::Direct(_) => "direct",
        }
    }

    fn value_string(&self) -> String {
        match self {
            SideOutcome::Scattered(t) => format::float(*t),
            SideOutcome::Direct(s) => format!("{}", s.value() as i8),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub pair: u64,
    pub first: SideOutcome,
    pub second: SideOutcome,
}

impl TrialRecord {
    pub fn setting(&self) -> SettingPair {
        SettingPair::from_routing(self.first.is_scattered(), self.second.is_scattered())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Theta { bins: usize },
    Discrete,
}

impl Axis {
    fn len(self) -> usize {
        match self {
            Axis::Theta { bins } => bins,
            Axis::Discrete => 2,
        }
    }

    fn index(self, outcome: &SideOutcome) -> usize {
        match (self, outcome) {
            (Axis::Theta { bins }, SideOutcome::Scattered(t)) => theta_bin(*t, bins),
            (Axis::Discrete, SideOutcome::Direct(s)) => s.index(),
            _ => unreachable!("outcome kind does not match histogram axis"),
        }
    }
}

/// Equal-width bin of `[0, π]`; `θ = π` falls in the last bin.
pub fn theta_bin(theta: f64, bins: usize) -> usize {
    ((theta / PI * bins as f64) as usize).min(bins - 1)
}

/// Counts for one setting pair. Rows follow the channel-I axis.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub setting: SettingPair,
    pub axes: [Axis; 2],
    counts: Vec<u64>,
}

impl Histogram {
    fn new(setting: SettingPair, bins: usize) -> Self {
        let axis = |scattered| {
            if scattered {
                Axis::Theta { bins }
            } else {
                Axis::Discrete
            }
        };
        let axes = [axis(setting.first_scattered()), axis(setting.second_scattered())];
        Self {
            setting,
            axes,
            counts: vec![0; axes[0].len() * axes[1].len()],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.axes[0].len(), self.axes[1].len())
    }

    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.counts[row * self.axes[1].len() + col]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn record(&mut self, rec: &TrialRecord) {
        let i = self.axes[0].index(&rec.first);
        let j = self.axes[1].index(&rec.second);
        let cols = self.axes[1].len();
        self.counts[i * cols + j] += 1;
    }

    fn merge(&mut self, other: &Histogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }
}

/// Histograms of the four sub-ensembles.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubEnsembleCounts {
    pub bins: usize,
    histograms: [Histogram; 4],
}

impl SubEnsembleCounts {
    pub fn new(bins: usize) -> Self {
        Self {
            bins,
            histograms: SettingPair::ALL.map(|s| Histogram::new(s, bins)),
        }
    }

    pub fn record(&mut self, rec: &TrialRecord) {
        self.histograms[rec.setting().index()].record(rec);
    }

    pub fn merge(mut self, other: &SubEnsembleCounts) -> Self {
        for (a, b) in self.histograms.iter_mut().zip(&other.histograms) {
            a.merge(b);
        }
        self
    }

    pub fn histogram(&self, setting: SettingPair) -> &Histogram {
        &self.histograms[setting.index()]
    }

    pub fn histograms(&self) -> &[Histogram; 4] {
        &self.histograms
    }

    pub fn sub_total(&self, setting: SettingPair) -> u64 {
        self.histogram(setting).total()
    }

    pub fn total(&self) -> u64 {
        self.histograms.iter().map(Histogram::total).sum()
    }

    /// The direct–direct 2×2 table.
    pub fn direct_table(&self) -> PairCounts {
        let h = self.histogram(SettingPair::R2T2);
        PairCounts::new(h.get(0, 0), h.get(0, 1), h.get(1, 0), h.get(1, 1))
    }
}

/// Born-rule tables for each setting pair, precomputed for sampling.
struct Routing {
    tables: [JointProbabilityTable; 4],
}

impl Routing {
    fn new(state: &BipartiteState) -> Self {
        let settings = ChshSettings::default();
        Self {
            tables: SettingPair::ALL.map(|pair| {
                let (a, b) = settings.observables(pair);
                joint_probabilities(state, a, b)
            }),
        }
    }

    fn draw<R: Rng>(&self, pair: SettingPair, rng: &mut R) -> (Sign, Sign) {
        let t = &self.tables[pair.index()];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for a in Sign::BOTH {
            for b in Sign::BOTH {
                acc += t.get(a, b);
                if u < acc {
                    return (a, b);
                }
            }
        }
        // Rounding left a sliver above the cumulative sum; take the last nonzero cell.
        let mut last = (Sign::Minus, Sign::Minus);
        for a in Sign::BOTH {
            for b in Sign::BOTH {
                if t.get(a, b) > 0.0 {
                    last = (a, b);
                }
            }
        }
        last
    }
}

fn simulate_pair(config: &ExperimentConfig, routing: &Routing, streams: &TrialStreams, index: u64) -> TrialRecord {
    let mut rng = streams.stream(index);
    let first_scattered = rng.random::<f64>() < config.scatter_probability[0];
    let second_scattered = rng.random::<f64>() < config.scatter_probability[1];
    let pair = SettingPair::from_routing(first_scattered, second_scattered);
    let (a1, a2) = routing.draw(pair, &mut rng);
    let first = if first_scattered {
        SideOutcome::Scattered(config.channel_one.density(a1).sample(&mut rng))
    } else {
        SideOutcome::Direct(a1)
    };
    let second = if second_scattered {
        SideOutcome::Scattered(config.channel_two.density(a2).sample(&mut rng))
    } else {
        SideOutcome::Direct(a2)
    };
    TrialRecord {
        pair: index,
        first,
        second,
    }
}

/// Runs all trials on the current rayon pool.
pub fn run_trials(config: &ExperimentConfig) -> Result<(Vec<TrialRecord>, SubEnsembleCounts)> {
    config.validate()?;
    let routing = Routing::new(&config.state);
    let streams = TrialStreams::new(config.seed);
    let records: Vec<TrialRecord> = (0..config.trials)
        .into_par_iter()
        .map(|i| simulate_pair(config, &routing, &streams, i))
        .collect();
    let counts = records
        .par_iter()
        .fold(
            || SubEnsembleCounts::new(config.bins),
            |mut acc, rec| {
                acc.record(rec);
                acc
            },
        )
        .reduce(|| SubEnsembleCounts::new(config.bins), |a, b| a.merge(&b));
    Ok((records, counts))
}

/// Runs all trials on a dedicated pool with `threads` workers.
pub fn run_trials_with_threads(
    config: &ExperimentConfig,
    threads: usize,
) -> Result<(Vec<TrialRecord>, SubEnsembleCounts)> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    pool.install(|| run_trials(config))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum BinLabel {
    Theta { index: usize, lo: f64, hi: f64 },
    Discrete(Sign),
}

impl BinLabel {
    fn of(axis: Axis, i: usize) -> Self {
        match axis {
            Axis::Theta { bins } => {
                let w = PI / bins as f64;
                BinLabel::Theta {
                    index: i,
                    lo: w * i as f64,
                    hi: if i + 1 == bins { PI } else { w * (i + 1) as f64 },
                }
            }
            Axis::Discrete => BinLabel::Discrete(Sign::from_index(i)),
        }
    }

    fn csv_fields(&self) -> [String; 3] {
        match self {
            BinLabel::Theta { index, lo, hi } => [index.to_string(), format::float(*lo), format::float(*hi)],
            BinLabel::Discrete(s) => [format!("S{s}"), String::new(), String::new()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistogramRow {
    pub sub_ensemble: SettingPair,
    pub axis1: BinLabel,
    pub axis2: BinLabel,
    pub count: u64,
}

/// Long-format rows for one histogram.
pub fn histogram_rows(h: &Histogram) -> Vec<HistogramRow> {
    let (rows, cols) = h.shape();
    (0..rows)
        .flat_map(|i| (0..cols).map(move |j| (i, j)))
        .map(|(i, j)| HistogramRow {
            sub_ensemble: h.setting,
            axis1: BinLabel::of(h.axes[0], i),
            axis2: BinLabel::of(h.axes[1], j),
            count: h.get(i, j),
        })
        .collect()
}

/// Long-format rows for all four sub-ensembles.
pub fn histogram_export(counts: &SubEnsembleCounts) -> Vec<HistogramRow> {
    counts.histograms().iter().flat_map(histogram_rows).collect()
}

pub const HISTOGRAM_HEADER: &str = "sub_ensemble,axis1,axis1_lo,axis1_hi,axis2,axis2_lo,axis2_hi,count";

pub fn write_histogram_csv<W: Write>(mut w: W, rows: &[HistogramRow]) -> io::Result<()> {
    writeln!(w, "{HISTOGRAM_HEADER}")?;
    for row in rows {
        let [a, alo, ahi] = row.axis1.csv_fields();
        let [b, blo, bhi] = row.axis2.csv_fields();
        writeln!(w, "{},{a},{alo},{ahi},{b},{blo},{bhi},{}", row.sub_ensemble, row.count)?;
    }
    Ok(())
}

pub const TRIAL_LOG_HEADER: &str = "pair,side1_kind,side1_value,side2_kind,side2_value";

pub fn write_trial_log<W: Write>(mut w: W, records: &[TrialRecord]) -> io::Result<()> {
    writeln!(w, "{TRIAL_LOG_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.pair,
            r.first.kind(),
            r.first.value_string(),
            r.second.kind(),
            r.second.value_string()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(p: f64, q: f64, n: u64) -> ExperimentConfig {
        ExperimentConfig {
            scatter_probability: [q, q],
            trials: n,
            seed: 9,
            ..ExperimentConfig::werner(p).unwrap()
        }
    }

    #[test]
    fn forced_scattering_routes_everything_to_r1t1() {
        let (records, counts) = run_trials(&small(1.0, 1.0, 2000)).unwrap();
        assert_eq!(records.len(), 2000);
        assert_eq!(counts.sub_total(SettingPair::R1T1), 2000);
        for s in [SettingPair::R1T2, SettingPair::R2T1, SettingPair::R2T2] {
            assert_eq!(counts.sub_total(s), 0);
        }
    }

    #[test]
    fn sub_ensemble_sizes_follow_binomial() {
        let n = 100_000u64;
        let (_, counts) = run_trials(&small(0.5, 0.5, n)).unwrap();
        assert_eq!(counts.total(), n);
        let tol = 5.0 * (n as f64 * 3.0 / 16.0).sqrt();
        for s in SettingPair::ALL {
            let c = counts.sub_total(s) as f64;
            assert!((c - 25_000.0).abs() < tol, "{s}: {c}");
        }
    }

    #[test]
    fn direct_correlation_matches_born_rule() {
        let n = 40_000u64;
        let (_, counts) = run_trials(&small(1.0, 0.0, n)).unwrap();
        let table = counts.direct_table();
        assert_eq!(table.total(), n);
        let e = table.correlation().unwrap().value;
        let want = -std::f64::consts::FRAC_1_SQRT_2;
        let sigma = ((1.0 - want * want) / n as f64).sqrt();
        assert!((e - want).abs() < 3.0 * sigma, "{e}");
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let cfg = small(0.7, 0.5, 5000);
        let a = run_trials_with_threads(&cfg, 1).unwrap();
        let b = run_trials_with_threads(&cfg, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_invalid_config() {
        assert!(run_trials(&small(1.0, 1.2, 10)).is_err());
        assert!(run_trials(&small(1.0, 0.5, 0)).is_err());
    }

    #[test]
    fn export_preserves_totals_and_edges() {
        let (_, counts) = run_trials(&small(1.0, 0.5, 3000)).unwrap();
        let rows = histogram_export(&counts);
        assert_eq!(rows.iter().map(|r| r.count).sum::<u64>(), 3000);
        assert_eq!(rows.len(), 40 * 40 + 40 * 2 + 2 * 40 + 4);
        let mut buf = Vec::new();
        write_histogram_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(HISTOGRAM_HEADER));
        assert!(text.contains("r2_t2,S+,,,S-,,,"));
        let last_theta = rows
            .iter()
            .find(|r| matches!(r.axis1, BinLabel::Theta { index: 39, .. }))
            .unwrap();
        assert!(matches!(last_theta.axis1, BinLabel::Theta { hi, .. } if hi == PI));
    }

    #[test]
    fn theta_binning_edges() {
        assert_eq!(theta_bin(0.0, 40), 0);
        assert_eq!(theta_bin(PI, 40), 39);
        assert_eq!(theta_bin(PI / 2.0, 2), 1);
    }

    #[test]
    fn trial_log_format() {
        let recs = [TrialRecord {
            pair: 3,
            first: SideOutcome::Scattered(0.5),
            second: SideOutcome::Direct(Sign::Minus),
        }];
        let mut buf = Vec::new();
        write_trial_log(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().nth(1).unwrap(),
            "3,scattered,5.0000000000000000e-1,direct,-1"
        );
    }
}
