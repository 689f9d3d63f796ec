//! Python module `bellbeam`.
//!
//! Structured results (estimates, sweeps, fits, adiabats) come back as plain
//! dicts and lists built from the same JSON the CLI writes.

use bellbeam_core::config::RunConfig;
use bellbeam_core::dcs::{self, AngularDensity, GaussianComponent};
use bellbeam_core::estimator::{bootstrap_std_error, estimate_chsh, sweep_p, ErrorMethod, Kernels};
use bellbeam_core::experiment::{run_trials, ExperimentConfig};
use bellbeam_core::fit::fit_gaussian_peaks;
use bellbeam_core::quantum::{self, BipartiteState, ChshSettings, QubitObservable, SettingPair, Sign, SignPattern};
use bellbeam_core::soc::{self, CartesianInputs, CouplingInputs};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;
use rand::SeedableRng;

fn err(e: bellbeam_core::Error) -> PyErr {
    match e {
        bellbeam_core::Error::InsufficientData(_)
        | bellbeam_core::Error::EmptyEnsemble
        | bellbeam_core::Error::Fit { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    PyModule::import(py, "json")?.call_method1("loads", (text,))
}

fn parse_sign(s: &str) -> PyResult<Sign> {
    match s {
        "+" | "plus" => Ok(Sign::Plus),
        "-" | "−" | "minus" => Ok(Sign::Minus),
        _ => Err(PyValueError::new_err(format!("sign must be '+' or '-', got {s:?}"))),
    }
}

fn parse_setting(name: &str) -> PyResult<SettingPair> {
    SettingPair::ALL.into_iter().find(|p| p.name() == name).ok_or_else(|| {
        PyValueError::new_err(format!(
            "unknown setting pair {name:?}; expected r1_t1, r1_t2, r2_t1 or r2_t2"
        ))
    })
}

fn signs(pattern: Option<[i8; 4]>) -> PyResult<SignPattern> {
    pattern.map_or(Ok(SignPattern::default()), |p| SignPattern::new(p).map_err(err))
}

/// Two-qubit density matrix; the first factor is the channel-I atom.
#[pyclass(name = "State", frozen)]
struct PyState(BipartiteState);

#[pymethods]
impl PyState {
    /// `p|Ψ⁻⟩⟨Ψ⁻| + (1−p)I/4`.
    #[staticmethod]
    fn werner(p: f64) -> PyResult<Self> {
        BipartiteState::werner(p).map(Self).map_err(err)
    }

    /// Builds a state from a 4×4 nested list of complex numbers.
    #[staticmethod]
    #[pyo3(signature = (matrix, label = "explicit"))]
    fn from_matrix(matrix: Vec<Vec<num_complex::Complex64>>, label: &str) -> PyResult<Self> {
        if matrix.len() != 4 || matrix.iter().any(|r| r.len() != 4) {
            return Err(PyValueError::new_err("matrix must be 4×4"));
        }
        let m = nalgebra::Matrix4::from_fn(|i, j| matrix[i][j]);
        BipartiteState::new(m, label).map(Self).map_err(err)
    }

    #[getter]
    fn label(&self) -> String {
        self.0.label().to_string()
    }

    fn matrix(&self) -> Vec<Vec<num_complex::Complex64>> {
        let m = self.0.matrix();
        (0..4).map(|i| (0..4).map(|j| m[(i, j)]).collect()).collect()
    }

    fn eigenvalues(&self) -> [f64; 4] {
        self.0.eigenvalues()
    }

    fn __repr__(&self) -> String {
        format!("State({:?})", self.0.label())
    }
}

/// Unit-Bloch-vector observable `n·σ`.
#[pyclass(name = "Observable", frozen)]
struct PyObservable(QubitObservable);

#[pymethods]
impl PyObservable {
    #[new]
    fn new(bloch: [f64; 3]) -> PyResult<Self> {
        QubitObservable::new(bloch).map(Self).map_err(err)
    }

    #[getter]
    fn bloch(&self) -> [f64; 3] {
        self.0.bloch()
    }

    fn __repr__(&self) -> String {
        format!("Observable({:?})", self.0.bloch())
    }
}

fn settings(obs: Option<[PyRef<'_, PyObservable>; 4]>) -> ChshSettings {
    match obs {
        Some([r1, r2, t1, t2]) => ChshSettings {
            r1: r1.0.clone(),
            r2: r2.0.clone(),
            t1: t1.0.clone(),
            t2: t2.0.clone(),
        },
        None => ChshSettings::default(),
    }
}

/// Joint outcome probabilities `[[P(++), P(+−)], [P(−+), P(−−)]]`.
#[pyfunction]
fn joint_probabilities(state: &PyState, a: &PyObservable, b: &PyObservable) -> [[f64; 2]; 2] {
    quantum::joint_probabilities(&state.0, &a.0, &b.0).as_array()
}

/// Born-rule correlation for one setting pair (`"r1_t1"` …) under the standard
/// or the given `(r1, r2, t1, t2)` observables.
#[pyfunction]
#[pyo3(signature = (state, pair, observables = None))]
fn exact_correlation(state: &PyState, pair: &str, observables: Option<[PyRef<'_, PyObservable>; 4]>) -> PyResult<f64> {
    Ok(quantum::exact_correlation(
        &state.0,
        &settings(observables),
        parse_setting(pair)?,
    ))
}

#[pyfunction]
#[pyo3(signature = (state, observables = None, sign_pattern = None))]
fn chsh_discrete(
    state: &PyState,
    observables: Option<[PyRef<'_, PyObservable>; 4]>,
    sign_pattern: Option<[i8; 4]>,
) -> PyResult<f64> {
    Ok(quantum::chsh_discrete(
        &state.0,
        &settings(observables),
        signs(sign_pattern)?,
    ))
}

/// Mixture of Gaussians truncated to `[0, π]`, from `(weight, mean, sigma)` triples.
#[pyclass(name = "Density", frozen)]
struct PyDensity(AngularDensity);

#[pymethods]
impl PyDensity {
    #[new]
    fn new(components: Vec<(f64, f64, f64)>) -> PyResult<Self> {
        let comps = components
            .into_iter()
            .map(|(w, m, s)| GaussianComponent::new(w, m, s))
            .collect();
        AngularDensity::new(comps).map(Self).map_err(err)
    }

    fn pdf(&self, theta: f64) -> f64 {
        self.0.pdf(theta)
    }

    fn cdf(&self, theta: f64) -> f64 {
        self.0.cdf(theta)
    }

    fn mean(&self) -> f64 {
        self.0.mean()
    }

    fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.0.sample(&mut rng)).collect()
    }

    fn components(&self) -> Vec<(f64, f64, f64)> {
        self.0
            .components()
            .iter()
            .map(|c| (c.weight, c.mean_rad, c.sigma_rad))
            .collect()
    }
}

/// The `v(θ|±)` decoding kernel of a `(f₊, f₋)` pair.
#[pyclass(name = "Kernel", frozen)]
struct PyKernel(dcs::VKernel);

#[pymethods]
impl PyKernel {
    #[new]
    fn new(plus: &PyDensity, minus: &PyDensity) -> PyResult<Self> {
        let pair = dcs::DcsPair::new("python", plus.0.clone(), minus.0.clone()).map_err(err)?;
        dcs::VKernel::new(&pair).map(Self).map_err(err)
    }

    #[staticmethod]
    fn default_channel_one() -> PyResult<Self> {
        dcs::VKernel::new(&dcs::DcsPair::default_channel_one())
            .map(Self)
            .map_err(err)
    }

    #[staticmethod]
    fn default_channel_two() -> PyResult<Self> {
        dcs::VKernel::new(&dcs::DcsPair::default_channel_two())
            .map(Self)
            .map_err(err)
    }

    /// `(I₊₊, I₋₋, I₊₋)`.
    fn overlaps(&self) -> (f64, f64, f64) {
        self.0.overlaps()
    }

    fn v(&self, theta: f64, sign: &str) -> PyResult<f64> {
        Ok(self.0.v(theta, parse_sign(sign)?))
    }

    fn weight(&self, theta: f64) -> f64 {
        self.0.weight(theta)
    }

    /// `∫ f_actual(θ) v(θ|decoded) dθ`.
    fn decode(&self, actual: &str, decoded: &str) -> PyResult<f64> {
        Ok(self.0.decode(parse_sign(actual)?, parse_sign(decoded)?))
    }
}

fn experiment(
    config_json: Option<&str>,
    p: Option<f64>,
    trials: Option<u64>,
    seed: Option<u64>,
) -> PyResult<(RunConfig, ExperimentConfig)> {
    let mut cfg = match config_json {
        Some(text) => RunConfig::from_json(text).map_err(err)?,
        None => RunConfig::default(),
    };
    if let Some(t) = trials {
        cfg.set_trials(t).map_err(err)?;
    }
    if seed.is_some() {
        cfg.seed = seed;
    }
    let mut exp = cfg.experiment().map_err(err)?;
    if let Some(p) = p {
        exp.state = BipartiteState::werner(p).map_err(err)?;
    }
    Ok((cfg, exp))
}

/// Runs one simulated experiment and returns the CHSH estimate as a dict.
/// `config` is a JSON run configuration; `p`, `trials` and `seed` override it.
#[pyfunction]
#[pyo3(signature = (p = None, trials = None, seed = None, config = None, bootstrap = None))]
fn simulate<'py>(
    py: Python<'py>,
    p: Option<f64>,
    trials: Option<u64>,
    seed: Option<u64>,
    config: Option<&str>,
    bootstrap: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let (cfg, exp) = experiment(config, p, trials, seed)?;
    let result = py.detach(|| -> bellbeam_core::Result<_> {
        let (records, _) = run_trials(&exp)?;
        let kernels = Kernels::from_config(&exp)?;
        let mut est = estimate_chsh(&records, &kernels, cfg.sign_pattern)?;
        if let Some(resamples) = bootstrap {
            let se = bootstrap_std_error(&records, &kernels, cfg.sign_pattern, resamples, exp.seed)?;
            est = est.with_std_error(se, ErrorMethod::Bootstrap { resamples });
        }
        Ok(est)
    });
    to_py(py, &result.map_err(err)?)
}

/// Simulates each Werner parameter in `p_list`; returns one dict per point.
#[pyfunction]
#[pyo3(signature = (p_list, trials = None, seed = None, config = None))]
fn sweep<'py>(
    py: Python<'py>,
    p_list: Vec<f64>,
    trials: Option<u64>,
    seed: Option<u64>,
    config: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let (cfg, exp) = experiment(config, None, trials, seed)?;
    let rows = py.detach(|| sweep_p(&p_list, &exp, cfg.sign_pattern)).map_err(err)?;
    to_py(py, &rows)
}

/// `(V_Σ, V_Π, V₁, V₂)` from Cartesian `V_xx, V_yy, V_zz, V_xz`.
#[pyfunction]
fn cartesian_to_coupled(v_xx: f64, v_yy: f64, v_zz: f64, v_xz: f64) -> (f64, f64, f64, f64) {
    let t = soc::cartesian_to_coupled(&CartesianInputs { v_xx, v_yy, v_zz, v_xz });
    (t.v_sigma, t.v_pi, t.v1, t.v2)
}

fn coupling(v_sigma: f64, v_pi: f64, v1: f64, v2: f64, a: f64, b: f64) -> PyResult<CouplingInputs> {
    CouplingInputs::new(soc::ElectrostaticTerms { v_sigma, v_pi, v1, v2 }, a, b).map_err(err)
}

fn rows(m: &soc::PotentialMatrix) -> Vec<Vec<f64>> {
    let mat = m.matrix();
    (0..mat.nrows()).map(|i| mat.row(i).iter().copied().collect()).collect()
}

/// The 6×6 `(electrostatic, spin_orbit, total)` matrices.
#[pyfunction]
#[pyo3(signature = (v_sigma, v_pi, v1, v2, a, b))]
fn six_state_matrices(v_sigma: f64, v_pi: f64, v1: f64, v2: f64, a: f64, b: f64) -> PyResult<[Vec<Vec<f64>>; 3]> {
    let six = soc::build_six_state(&coupling(v_sigma, v_pi, v1, v2, a, b)?);
    Ok([rows(&six.electrostatic), rows(&six.spin_orbit), rows(&six.total)])
}

/// Ascending eigenvalues of the 6×6 total potential.
#[pyfunction]
#[pyo3(signature = (v_sigma, v_pi, v1, v2, a, b))]
fn six_state_adiabats(v_sigma: f64, v_pi: f64, v1: f64, v2: f64, a: f64, b: f64) -> PyResult<Vec<f64>> {
    let six = soc::build_six_state(&coupling(v_sigma, v_pi, v1, v2, a, b)?);
    soc::adiabats(&six.total).map_err(err)
}

/// Ascending eigenvalues of the two-state `Ω = 1/2` model.
#[pyfunction]
fn two_state_adiabats(v_sigma: f64, v_pi: f64, a: f64, b: f64) -> PyResult<Vec<f64>> {
    soc::adiabats(&soc::build_two_state(v_sigma, v_pi, a, b)).map_err(err)
}

/// Fits `n_peaks` Gaussians to `(theta_rad, intensity)` points.
#[pyfunction]
fn fit_peaks<'py>(py: Python<'py>, points: Vec<(f64, f64)>, n_peaks: usize) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &fit_gaussian_peaks(&points, n_peaks).map_err(err)?)
}

#[pymodule]
fn bellbeam(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyState>()?;
    m.add_class::<PyObservable>()?;
    m.add_class::<PyDensity>()?;
    m.add_class::<PyKernel>()?;
    m.add_function(wrap_pyfunction!(joint_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(exact_correlation, m)?)?;
    m.add_function(wrap_pyfunction!(chsh_discrete, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(cartesian_to_coupled, m)?)?;
    m.add_function(wrap_pyfunction!(six_state_matrices, m)?)?;
    m.add_function(wrap_pyfunction!(six_state_adiabats, m)?)?;
    m.add_function(wrap_pyfunction!(two_state_adiabats, m)?)?;
    m.add_function(wrap_pyfunction!(fit_peaks, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
