//! Two-qubit states, dichotomic observables and the discrete CHSH algebra.
//!
//! Basis ordering is `|00⟩, |01⟩, |10⟩, |11⟩` with the first factor being the
//! atom sent into channel I. On each atom `|0⟩` is the ²P₃/₂ ground level and
//! `|1⟩` the ²P₁/₂ excited level; `|0⟩` carries the outcome `+1` under `Z`.

use std::fmt;

use nalgebra::{Matrix2, Matrix4, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-10;
pub const BLOCH_NORM_TOL: f64 = 1e-9;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A dichotomic measurement outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    pub const BOTH: [Sign; 2] = [Sign::Plus, Sign::Minus];

    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    /// Row/column index used by 2×2 tables: `+ → 0`, `− → 1`.
    pub fn index(self) -> usize {
        match self {
            Sign::Plus => 0,
            Sign::Minus => 1,
        }
    }

    pub fn from_index(i: usize) -> Sign {
        if i == 0 {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        })
    }
}

/// 4×4 density matrix of an atom pair.
#[derive(Clone, Debug, PartialEq)]
pub struct BipartiteState {
    matrix: Matrix4<Complex64>,
    label: String,
}

impl BipartiteState {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(matrix: Matrix4<Complex64>, label: impl Into<String>) -> Result<Self> {
        let herm_dev = (matrix - matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm_dev > HERMITIAN_TOL {
            return Err(Error::State(format!(
                "matrix is not Hermitian (max deviation {herm_dev:.3e})"
            )));
        }
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > TRACE_TOL || trace.im.abs() > TRACE_TOL {
            return Err(Error::State(format!("trace is {trace}, expected 1")));
        }
        let min_eig = hermitian_eigenvalues4(&matrix)[0];
        if min_eig < -PSD_TOL {
            return Err(Error::State(format!(
                "matrix is not positive semidefinite (smallest eigenvalue {min_eig:.3e})"
            )));
        }
        Ok(Self {
            matrix,
            label: label.into(),
        })
    }

    /// The Werner family interpolating between the Bell state
    /// `(|01⟩+|10⟩)/√2` at `p = 1` and `I/4` at `p = 0`.
    pub fn werner(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("Werner parameter p = {p} outside [0, 1]")));
        }
        let d = Complex64::new((1.0 - p) / 4.0, 0.0);
        let c = Complex64::new((1.0 + p) / 4.0, 0.0);
        let o = Complex64::new(p / 2.0, 0.0);
        #[rustfmt::skip]
        let m = Matrix4::new(
            d,    ZERO, ZERO, ZERO,
            ZERO, c,    o,    ZERO,
            ZERO, o,    c,    ZERO,
            ZERO, ZERO, ZERO, d,
        );
        Self::new(m, format!("werner(p={p})"))
    }

    /// `ρ_A ⊗ ρ_B` for two single-qubit density matrices.
    pub fn product(rho_a: &Matrix2<Complex64>, rho_b: &Matrix2<Complex64>) -> Result<Self> {
        Self::new(rho_a.kronecker(rho_b), "product")
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.matrix
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 4] {
        hermitian_eigenvalues4(&self.matrix)
    }

    /// Reduced density matrix of the channel-I atom.
    pub fn reduced_first(&self) -> Matrix2<Complex64> {
        let mut out = Matrix2::zeros();
        for i in 0..2 {
            for j in 0..2 {
                out[(i, j)] = (0..2).map(|k| self.matrix[(2 * i + k, 2 * j + k)]).sum();
            }
        }
        out
    }

    /// Reduced density matrix of the channel-II atom.
    pub fn reduced_second(&self) -> Matrix2<Complex64> {
        let mut out = Matrix2::zeros();
        for i in 0..2 {
            for j in 0..2 {
                out[(i, j)] = (0..2).map(|k| self.matrix[(2 * k + i, 2 * k + j)]).sum();
            }
        }
        out
    }
}

fn hermitian_eigenvalues4(m: &Matrix4<Complex64>) -> [f64; 4] {
    let eig = m.symmetric_eigenvalues();
    let mut vals = [eig[0], eig[1], eig[2], eig[3]];
    vals.sort_by(f64::total_cmp);
    vals
}

/// JSON form of a state: complex entries as `[re, im]` pairs, row-major.
#[derive(Serialize, Deserialize)]
struct StateDoc {
    label: String,
    matrix: [[[f64; 2]; 4]; 4],
}

impl Serialize for BipartiteState {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut matrix = [[[0.0; 2]; 4]; 4];
        for (i, row) in matrix.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                let z = self.matrix[(i, j)];
                *cell = [z.re, z.im];
            }
        }
        StateDoc {
            label: self.label.clone(),
            matrix,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BipartiteState {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let doc = StateDoc::deserialize(deserializer)?;
        let m = Matrix4::from_fn(|i, j| Complex64::new(doc.matrix[i][j][0], doc.matrix[i][j][1]));
        BipartiteState::new(m, doc.label).map_err(serde::de::Error::custom)
    }
}

/// A ±1-valued observable `n·σ` on one atom.
#[derive(Clone, Debug, PartialEq)]
pub struct QubitObservable {
    bloch: [f64; 3],
    matrix: Matrix2<Complex64>,
    plus: Vector2<Complex64>,
    minus: Vector2<Complex64>,
}

impl QubitObservable {
    pub fn new(bloch: [f64; 3]) -> Result<Self> {
        let norm = bloch.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Domain("Bloch vector must be nonzero and finite".into()));
        }
        if (norm - 1.0).abs() > BLOCH_NORM_TOL {
            return Err(Error::Domain(format!("Bloch vector has norm {norm}, expected 1")));
        }
        let [nx, ny, nz] = bloch.map(|c| c / norm);
        #[rustfmt::skip]
        let matrix = Matrix2::new(
            Complex64::new(nz, 0.0),  Complex64::new(nx, -ny),
            Complex64::new(nx, ny),   Complex64::new(-nz, 0.0),
        );
        // Spherical parametrisation; |+⟩ = (cos θ/2, e^{iφ} sin θ/2).
        let polar = nz.clamp(-1.0, 1.0).acos();
        let azimuth = ny.atan2(nx);
        let (s, c) = (polar / 2.0).sin_cos();
        let phase = Complex64::from_polar(1.0, azimuth);
        let plus = Vector2::new(Complex64::new(c, 0.0), phase * s);
        let minus = Vector2::new(-phase.conj() * s, Complex64::new(c, 0.0));
        Ok(Self {
            bloch: [nx, ny, nz],
            matrix,
            plus,
            minus,
        })
    }

    /// Pauli `Z`; realised by scattering in channel I.
    pub fn z() -> Self {
        Self::new([0.0, 0.0, 1.0]).expect("unit vector")
    }

    /// Pauli `X`; the direct measurement in channel I.
    pub fn x() -> Self {
        Self::new([1.0, 0.0, 0.0]).expect("unit vector")
    }

    /// `(Z+X)/√2`; realised by scattering in channel II.
    pub fn z_plus_x() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self::new([h, 0.0, h]).expect("unit vector")
    }

    /// `(Z−X)/√2`; the direct measurement in channel II.
    pub fn z_minus_x() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self::new([-h, 0.0, h]).expect("unit vector")
    }

    pub fn bloch(&self) -> [f64; 3] {
        self.bloch
    }

    pub fn matrix(&self) -> &Matrix2<Complex64> {
        &self.matrix
    }

    /// Eigenstate for the given outcome.
    pub fn eigenstate(&self, sign: Sign) -> &Vector2<Complex64> {
        match sign {
            Sign::Plus => &self.plus,
            Sign::Minus => &self.minus,
        }
    }

    /// `|φ±⟩⟨φ±|`.
    pub fn projector(&self, sign: Sign) -> Matrix2<Complex64> {
        let v = self.eigenstate(sign);
        v * v.adjoint()
    }

    /// `[(+1, |φ⁺⟩), (−1, |φ⁻⟩)]`.
    pub fn eigen_decomposition(&self) -> [(f64, Vector2<Complex64>); 2] {
        [(1.0, self.plus), (-1.0, self.minus)]
    }
}

impl Serialize for QubitObservable {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Doc {
            bloch: [f64; 3],
        }
        Doc { bloch: self.bloch }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for QubitObservable {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Doc {
            bloch: [f64; 3],
        }
        let doc = Doc::deserialize(deserializer)?;
        QubitObservable::new(doc.bloch).map_err(serde::de::Error::custom)
    }
}

/// Born-rule probabilities `P(a, b)` for a pair of observables.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointProbabilityTable {
    /// Indexed `[a][b]` with `+ → 0`, `− → 1`.
    probs: [[f64; 2]; 2],
}

impl JointProbabilityTable {
    pub fn new(probs: [[f64; 2]; 2]) -> Result<Self> {
        let flat = probs.iter().flatten();
        if flat.clone().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Domain("probabilities must lie in [0, 1]".into()));
        }
        let total: f64 = flat.sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("probabilities sum to {total}, expected 1")));
        }
        Ok(Self { probs })
    }

    pub fn get(&self, a: Sign, b: Sign) -> f64 {
        self.probs[a.index()][b.index()]
    }

    pub fn as_array(&self) -> [[f64; 2]; 2] {
        self.probs
    }

    /// Exact-mode correlation: probabilities in place of counts.
    pub fn correlation(&self) -> CorrelationValue {
        let p = &self.probs;
        let num = p[0][0] - p[0][1] - p[1][0] + p[1][1];
        let den = p[0][0] + p[0][1] + p[1][0] + p[1][1];
        CorrelationValue {
            value: num / den,
            basis: CorrelationBasis::Exact,
        }
    }
}

/// Computes `P(a,b) = tr[ρ (Π_a ⊗ Π_b)]`.
pub fn joint_probabilities(
    rho: &BipartiteState,
    first: &QubitObservable,
    second: &QubitObservable,
) -> JointProbabilityTable {
    let mut probs = [[0.0; 2]; 2];
    for a in Sign::BOTH {
        let pa = first.projector(a);
        for b in Sign::BOTH {
            let joint = pa.kronecker(&second.projector(b));
            let p = (rho.matrix() * joint).trace().re;
            probs[a.index()][b.index()] = p.clamp(0.0, 1.0);
        }
    }
    JointProbabilityTable { probs }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationBasis {
    Exact,
    Counts(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationValue {
    pub value: f64,
    pub basis: CorrelationBasis,
}

/// Outcome counts `N_ab` for one setting pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    /// Indexed `[a][b]` with `+ → 0`, `− → 1`.
    pub counts: [[u64; 2]; 2],
}

impl PairCounts {
    pub fn new(pp: u64, pm: u64, mp: u64, mm: u64) -> Self {
        Self {
            counts: [[pp, pm], [mp, mm]],
        }
    }

    pub fn get(&self, a: Sign, b: Sign) -> u64 {
        self.counts[a.index()][b.index()]
    }

    pub fn add(&mut self, a: Sign, b: Sign) {
        self.counts[a.index()][b.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Empirical correlation `(N₊₊ − N₊₋ − N₋₊ + N₋₋) / N`.
    pub fn correlation(&self) -> Result<CorrelationValue> {
        let total = self.total();
        if total == 0 {
            return Err(Error::EmptyEnsemble);
        }
        let c = &self.counts;
        let same = (c[0][0] + c[1][1]) as f64;
        let diff = (c[0][1] + c[1][0]) as f64;
        Ok(CorrelationValue {
            value: (same - diff) / total as f64,
            basis: CorrelationBasis::Counts(total),
        })
    }
}

/// The four setting combinations, in the order used by sign patterns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SettingPair {
    R1T1,
    R1T2,
    R2T1,
    R2T2,
}

impl SettingPair {
    pub const ALL: [SettingPair; 4] = [
        SettingPair::R1T1,
        SettingPair::R1T2,
        SettingPair::R2T1,
        SettingPair::R2T2,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// From the two routing flags: `true` means the atom was scattered.
    pub fn from_routing(first_scattered: bool, second_scattered: bool) -> Self {
        match (first_scattered, second_scattered) {
            (true, true) => SettingPair::R1T1,
            (true, false) => SettingPair::R1T2,
            (false, true) => SettingPair::R2T1,
            (false, false) => SettingPair::R2T2,
        }
    }

    pub fn first_scattered(self) -> bool {
        matches!(self, SettingPair::R1T1 | SettingPair::R1T2)
    }

    pub fn second_scattered(self) -> bool {
        matches!(self, SettingPair::R1T1 | SettingPair::R2T1)
    }

    pub fn name(self) -> &'static str {
        match self {
            SettingPair::R1T1 => "r1_t1",
            SettingPair::R1T2 => "r1_t2",
            SettingPair::R2T1 => "r2_t1",
            SettingPair::R2T2 => "r2_t2",
        }
    }
}

impl fmt::Display for SettingPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Signs applied to `E(r1,t1), E(r1,t2), E(r2,t1), E(r2,t2)`; exactly one is negative.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "[i8; 4]", into = "[i8; 4]")]
pub struct SignPattern([i8; 4]);

impl SignPattern {
    pub fn new(signs: [i8; 4]) -> Result<Self> {
        if signs.iter().any(|s| *s != 1 && *s != -1) {
            return Err(Error::Domain(format!("sign pattern {signs:?} must contain only ±1")));
        }
        if signs.iter().filter(|s| **s == -1).count() != 1 {
            return Err(Error::Domain(format!(
                "sign pattern {signs:?} must contain exactly one −1"
            )));
        }
        Ok(Self(signs))
    }

    pub fn sign(&self, pair: SettingPair) -> f64 {
        f64::from(self.0[pair.index()])
    }

    pub fn as_array(&self) -> [i8; 4] {
        self.0
    }
}

/// Minus on the `E(r2,t1)` term.
impl Default for SignPattern {
    fn default() -> Self {
        Self([1, 1, -1, 1])
    }
}

impl TryFrom<[i8; 4]> for SignPattern {
    type Error = Error;
    fn try_from(value: [i8; 4]) -> Result<Self> {
        Self::new(value)
    }
}

impl From<SignPattern> for [i8; 4] {
    fn from(p: SignPattern) -> Self {
        p.0
    }
}

/// The four observables of a CHSH run.
#[derive(Clone, Debug, PartialEq)]
pub struct ChshSettings {
    pub r1: QubitObservable,
    pub r2: QubitObservable,
    pub t1: QubitObservable,
    pub t2: QubitObservable,
}

impl ChshSettings {
    pub fn observables(&self, pair: SettingPair) -> (&QubitObservable, &QubitObservable) {
        match pair {
            SettingPair::R1T1 => (&self.r1, &self.t1),
            SettingPair::R1T2 => (&self.r1, &self.t2),
            SettingPair::R2T1 => (&self.r2, &self.t1),
            SettingPair::R2T2 => (&self.r2, &self.t2),
        }
    }
}

/// `r1 = Z`, `r2 = X`, `t1 = (Z+X)/√2`, `t2 = (Z−X)/√2`.
impl Default for ChshSettings {
    fn default() -> Self {
        Self {
            r1: QubitObservable::z(),
            r2: QubitObservable::x(),
            t1: QubitObservable::z_plus_x(),
            t2: QubitObservable::z_minus_x(),
        }
    }
}

/// Exact correlation for one setting pair.
pub fn exact_correlation(rho: &BipartiteState, settings: &ChshSettings, pair: SettingPair) -> f64 {
    let (a, b) = settings.observables(pair);
    joint_probabilities(rho, a, b).correlation().value
}

/// `Σ sign_ij E(r_i, t_j)` from Born-rule probabilities.
pub fn chsh_discrete(rho: &BipartiteState, settings: &ChshSettings, signs: SignPattern) -> f64 {
    SettingPair::ALL
        .iter()
        .map(|&pair| signs.sign(pair) * exact_correlation(rho, settings, pair))
        .sum()
}

/// Pure single-qubit state `|ψ⟩⟨ψ|` for Bloch vector `n` (`|n| ≤ 1` gives a mixed state).
pub fn qubit_density(bloch: [f64; 3]) -> Matrix2<Complex64> {
    let [x, y, z] = bloch;
    #[rustfmt::skip]
    let m = Matrix2::new(
        ONE + Complex64::new(z, 0.0), Complex64::new(x, -y),
        Complex64::new(x, y),         ONE - Complex64::new(z, 0.0),
    );
    m * Complex64::new(0.5, 0.0)
}
