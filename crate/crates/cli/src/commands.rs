use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bellbeam_core::config::{RunConfig, StateSpec};
use bellbeam_core::estimator::{
    bootstrap_std_error, estimate_chsh, sweep_p, ChshEstimate, ErrorMethod, Kernels, SweepRow, TheoryCurve,
};
use bellbeam_core::experiment::{histogram_rows, run_trials, write_histogram_csv, write_trial_log};
use bellbeam_core::fit::fit_gaussian_peaks;
use bellbeam_core::format::float;
use bellbeam_core::quantum::{chsh_discrete, exact_correlation, ChshSettings, SettingPair};
use bellbeam_core::rng::derive_seed;
use bellbeam_core::soc::{
    adiabats, build_six_state, build_two_state, cartesian_to_coupled, CartesianInputs, CouplingInputs,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::manifest::{write_with_sidecar, OutputDir, OutputFile, RunManifest};

pub const SEED_ENV: &str = "BELLBEAM_SEED";

/// Options shared by `simulate` and `sweep`.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub out: PathBuf,
    pub trial_log: bool,
}

/// Source of manifest timestamps.
#[derive(Debug, Clone)]
pub enum Clock {
    System,
    Fixed(String),
}

impl Clock {
    /// Honours `SOURCE_DATE_EPOCH` when set.
    pub fn from_env() -> Self {
        std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|v| v.trim().parse::<i64>().ok())
            .and_then(|secs| chrono::DateTime::from_timestamp(secs, 0))
            .map(|t| Clock::Fixed(t.to_rfc3339()))
            .unwrap_or(Clock::System)
    }

    pub fn now(&self) -> String {
        match self {
            Clock::System => chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            Clock::Fixed(t) => t.clone(),
        }
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Loads the config and applies flag overrides. Seed precedence:
/// `--seed`, then the config's `seed`, then `BELLBEAM_SEED`, then 0.
pub fn resolve_config(opts: &RunOptions) -> CliResult<RunConfig> {
    let mut config = match &opts.config {
        Some(path) => {
            RunConfig::from_json(&read_text(path)?).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(t) = opts.trials {
        config.set_trials(t)?;
    }
    let env_seed = match std::env::var(SEED_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<u64>()
                .map_err(|_| CliError::usage(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?,
        ),
        Err(_) => None,
    };
    config.seed = Some(opts.seed.or(config.seed).or(env_seed).unwrap_or(0));
    if opts.trial_log {
        config.trial_log = true;
    }
    Ok(config)
}

#[derive(Serialize)]
struct TermReport {
    setting: SettingPair,
    n: u64,
    value: f64,
    std_error: f64,
    exact: f64,
}

#[derive(Serialize)]
struct ChshReport {
    state: String,
    trials: u64,
    seed: u64,
    sign_pattern: [i8; 4],
    terms: Vec<TermReport>,
    s: f64,
    s_oriented: f64,
    std_error: f64,
    method: ErrorMethod,
    violated: bool,
    s_exact: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    s_theory: Option<f64>,
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

/// Runs one experiment and writes histograms, the estimate and a manifest.
pub fn simulate(opts: &RunOptions, bootstrap: Option<usize>, clock: &Clock) -> CliResult<ChshEstimate> {
    let started_at = clock.now();
    let config = resolve_config(opts)?;
    let experiment = config.experiment()?;
    let (records, counts) = run_trials(&experiment)?;

    let mut out = OutputDir::create(&opts.out)?;
    for h in counts.histograms() {
        let mut buf = Vec::new();
        write_histogram_csv(&mut buf, &histogram_rows(h)).expect("in-memory write");
        out.write(&format!("hist_{}.csv", h.setting), &buf)?;
    }
    if config.trial_log {
        let mut buf = Vec::new();
        write_trial_log(&mut buf, &records).expect("in-memory write");
        out.write("trials.csv", &buf)?;
    }

    let settings = ChshSettings::default();
    let estimate = Kernels::from_config(&experiment).and_then(|kernels| {
        let est = estimate_chsh(&records, &kernels, config.sign_pattern)?;
        match bootstrap {
            Some(resamples) => {
                let se = bootstrap_std_error(
                    &records,
                    &kernels,
                    config.sign_pattern,
                    resamples,
                    derive_seed(experiment.seed, u64::MAX),
                )?;
                Ok(est.with_std_error(se, ErrorMethod::Bootstrap { resamples }))
            }
            None => Ok(est),
        }
    });

    let result = match estimate {
        Ok(est) => {
            let curve = TheoryCurve::new(&settings, config.sign_pattern);
            let report = ChshReport {
                state: experiment.state.label().to_string(),
                trials: experiment.trials,
                seed: experiment.seed,
                sign_pattern: config.sign_pattern.as_array(),
                terms: est
                    .terms
                    .iter()
                    .map(|t| TermReport {
                        setting: t.setting,
                        n: t.n,
                        value: t.value,
                        std_error: t.std_error,
                        exact: exact_correlation(&experiment.state, &settings, t.setting),
                    })
                    .collect(),
                s: est.s,
                s_oriented: curve.orientation() * est.s,
                std_error: est.std_error,
                method: est.method,
                violated: est.violated,
                s_exact: chsh_discrete(&experiment.state, &settings, config.sign_pattern),
                s_theory: match &config.state {
                    StateSpec::Werner(p) => Some(curve.magnitude(p.get())?),
                    StateSpec::Explicit(_) => None,
                },
            };
            out.write("chsh.json", &json_bytes(&report))?;
            Ok(est)
        }
        Err(e) => Err(CliError::from(e)),
    };

    let manifest = RunManifest {
        tool: "bellbeam",
        tool_version: env!("CARGO_PKG_VERSION"),
        command: "simulate".into(),
        started_at,
        finished_at: clock.now(),
        master_seed: config.seed,
        p_list: None,
        resolved_config: Some(config),
        inputs: Vec::new(),
        outputs: Vec::new(),
    };
    out.finish(manifest)?;
    result
}

/// Parses a comma-separated list of probabilities.
pub fn parse_p_list(text: &str) -> CliResult<Vec<f64>> {
    if text.trim().is_empty() {
        return Err(CliError::usage("--p-list is empty"));
    }
    let values: Vec<f64> = text
        .split(',')
        .map(str::trim)
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| CliError::usage(format!("--p-list entry {s:?} is not a number")))
        })
        .collect::<CliResult<_>>()?;
    if let Some(p) = values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(CliError::usage(format!("--p-list value {p} outside [0, 1]")));
    }
    Ok(values)
}

/// The `p_list` of a sweep manifest, for re-running without `--p-list`.
pub fn manifest_p_list(config: Option<&Path>) -> CliResult<Vec<f64>> {
    let missing = || CliError::usage("--p-list is required unless --config is a sweep manifest");
    let path = config.ok_or_else(missing)?;
    let value: serde_json::Value =
        serde_json::from_str(&read_text(path)?).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let list = value.get("p_list").ok_or_else(missing)?;
    let ps: Vec<f64> = serde_json::from_value(list.clone())
        .map_err(|e| CliError::usage(format!("{}: p_list: {e}", path.display())))?;
    parse_p_list(&ps.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(","))
}

pub const SWEEP_HEADER: &str = "p,S_hat,SE,S_theory,violated";

fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            float(r.p),
            float(r.s_hat),
            float(r.std_error),
            float(r.s_theory),
            r.violated
        );
    }
    s
}

fn theory_csv(curve: &TheoryCurve) -> CliResult<String> {
    let mut s = String::from("p,S_theory\n");
    for i in 0..=100 {
        let p = i as f64 / 100.0;
        let _ = writeln!(s, "{},{}", float(p), float(curve.magnitude(p)?));
    }
    Ok(s)
}

/// Runs the Werner sweep and writes the table, the per-point report, the
/// dense theory curve and a manifest.
pub fn sweep(opts: &RunOptions, p_list: &[f64], clock: &Clock) -> CliResult<Vec<SweepRow>> {
    let started_at = clock.now();
    if p_list.is_empty() {
        return Err(CliError::usage("--p-list is empty"));
    }
    let config = resolve_config(opts)?;
    let template = config.experiment()?;
    let rows = sweep_p(p_list, &template, config.sign_pattern)?;
    let curve = TheoryCurve::new(&ChshSettings::default(), config.sign_pattern);

    let mut out = OutputDir::create(&opts.out)?;
    out.write("sweep.csv", sweep_csv(&rows).as_bytes())?;
    out.write("sweep.json", &json_bytes(&rows))?;
    out.write("theory.csv", theory_csv(&curve)?.as_bytes())?;
    let manifest = RunManifest {
        tool: "bellbeam",
        tool_version: env!("CARGO_PKG_VERSION"),
        command: "sweep".into(),
        started_at,
        finished_at: clock.now(),
        master_seed: config.seed,
        p_list: Some(p_list.to_vec()),
        resolved_config: Some(config),
        inputs: Vec::new(),
        outputs: Vec::new(),
    };
    out.finish(manifest)?;
    Ok(rows)
}

pub const PES_COLUMNS: [&str; 6] = ["v_xx", "v_yy", "v_zz", "v_xz", "a", "b"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PesPoint {
    pub v_xx: f64,
    pub v_yy: f64,
    pub v_zz: f64,
    pub v_xz: f64,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PesResult {
    pub input: PesPoint,
    pub coupling: CouplingInputs,
    /// Ascending eigenvalues of the six-state `V_el + V_so`.
    pub adiabats: Vec<f64>,
    /// Ascending eigenvalues of the two-state matrix.
    pub two_state: Vec<f64>,
}

pub fn evaluate_pes(point: &PesPoint) -> CliResult<PesResult> {
    let terms = cartesian_to_coupled(&CartesianInputs {
        v_xx: point.v_xx,
        v_yy: point.v_yy,
        v_zz: point.v_zz,
        v_xz: point.v_xz,
    });
    let coupling = CouplingInputs::new(terms, point.a, point.b)?;
    let six = build_six_state(&coupling);
    let two = build_two_state(coupling.v_sigma, coupling.v_pi, coupling.a, coupling.b);
    Ok(PesResult {
        input: *point,
        coupling,
        adiabats: adiabats(&six.total)?,
        two_state: adiabats(&two)?,
    })
}

/// Reads Cartesian potential rows (CSV) or a single point (`.json`) and
/// writes the coupled terms and adiabats.
pub fn pes(input: &Path, output: &Path, clock: &Clock) -> CliResult<()> {
    let started_at = clock.now();
    let bytes = pes_bytes(input)?;
    let manifest = single_file_manifest("pes".into(), started_at, input, clock)?;
    write_with_sidecar(output, &bytes, manifest)?;
    Ok(())
}

fn single_file_manifest(command: String, started_at: String, input: &Path, clock: &Clock) -> CliResult<RunManifest> {
    let contents = fs::read(input).map_err(|e| CliError::io(input, e))?;
    Ok(RunManifest {
        tool: "bellbeam",
        tool_version: env!("CARGO_PKG_VERSION"),
        command,
        started_at,
        finished_at: clock.now(),
        master_seed: None,
        p_list: None,
        resolved_config: None,
        inputs: vec![OutputFile::of(input.display().to_string(), &contents)],
        outputs: Vec::new(),
    })
}

fn pes_bytes(input: &Path) -> CliResult<Vec<u8>> {
    let is_json = input.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        let text = read_text(input)?;
        let point: PesPoint =
            serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", input.display())))?;
        return Ok(json_bytes(&evaluate_pes(&point)?));
    }

    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(input)
        .map_err(|e| CliError::usage(format!("{}: {e}", input.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::usage(format!("{}: {e}", input.display())))?
        .clone();
    let positions = PES_COLUMNS
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(name))
                .ok_or_else(|| CliError::usage(format!("{}: missing column {name}", input.display())))
        })
        .collect::<CliResult<Vec<usize>>>()?;

    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header_out: Vec<String> = headers.iter().map(str::to_string).collect();
    header_out.extend(["v_sigma", "v_pi", "v1", "v2"].map(String::from));
    header_out.extend((1..=6).map(|i| format!("adiabat_{i}")));
    header_out.extend((1..=2).map(|i| format!("two_state_{i}")));
    writer.write_record(&header_out).expect("in-memory write");

    for (row, record) in reader.records().enumerate() {
        let row = row + 1;
        let record = record.map_err(|e| CliError::usage(format!("{}: row {row}: {e}", input.display())))?;
        let mut vals = [0.0; 6];
        for (slot, (&pos, name)) in vals.iter_mut().zip(positions.iter().zip(PES_COLUMNS)) {
            let field = record.get(pos).unwrap_or("");
            *slot = field.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                CliError::usage(format!(
                    "{}: row {row}: {name} = {field:?} is not a finite number",
                    input.display()
                ))
            })?;
        }
        let [v_xx, v_yy, v_zz, v_xz, a, b] = vals;
        let result = evaluate_pes(&PesPoint {
            v_xx,
            v_yy,
            v_zz,
            v_xz,
            a,
            b,
        })
        .map_err(|e| CliError::usage(format!("{}: row {row}: {e}", input.display())))?;
        let mut out: Vec<String> = record.iter().map(str::to_string).collect();
        let c = &result.coupling;
        out.extend([c.v_sigma, c.v_pi, c.v1, c.v2].map(float));
        out.extend(result.adiabats.iter().map(|v| float(*v)));
        out.extend(result.two_state.iter().map(|v| float(*v)));
        writer.write_record(&out).expect("in-memory write");
    }
    Ok(writer.into_inner().expect("in-memory flush"))
}

/// Reads a two-column `theta_rad,intensity` CSV; a non-numeric first line is a header.
pub fn read_digitized_curve(path: &Path) -> CliResult<Vec<(f64, f64)>> {
    let text = read_text(path)?;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = match fields.as_slice() {
            [t, y] => t.parse::<f64>().ok().zip(y.parse::<f64>().ok()),
            _ => None,
        };
        match parsed {
            Some(p) => points.push(p),
            None if i == 0 => continue,
            None => {
                return Err(CliError::usage(format!(
                    "{}: line {}: expected two numeric columns",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(points)
}

#[derive(Serialize)]
struct FitReport<'a> {
    source: String,
    peaks: &'a [bellbeam_core::fit::Peak],
    /// Drop-in value for a `plus`/`minus` entry of the DCS config.
    components: &'a bellbeam_core::dcs::AngularDensity,
    rms_residual: f64,
    iterations: usize,
}

pub fn fit_dcs(input: &Path, peaks: usize, output: &Path, clock: &Clock) -> CliResult<bellbeam_core::fit::FitResult> {
    let started_at = clock.now();
    let points = read_digitized_curve(input)?;
    let fit = fit_gaussian_peaks(&points, peaks)?;
    let report = FitReport {
        source: input.display().to_string(),
        peaks: &fit.peaks,
        components: &fit.density,
        rms_residual: fit.rms_residual,
        iterations: fit.iterations,
    };
    let manifest = single_file_manifest(format!("fit-dcs --peaks {peaks}"), started_at, input, clock)?;
    write_with_sidecar(output, &json_bytes(&report), manifest)?;
    Ok(fit)
}
