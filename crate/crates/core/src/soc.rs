//! Electronic and spin-orbit potential matrices for the F + HD entrance channel.
//!
//! Energies are in whatever unit the caller supplies; nothing here converts.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

pub const TWO_STATE_LABELS: [&str; 2] = ["|Σ⟩", "|Π⟩"];
pub const SIX_STATE_LABELS: [&str; 6] = ["|Σ⟩", "|Σ̄⟩", "|Π₁⟩", "|Π̄₁⟩", "|Π₋₁⟩", "|Π̄₋₁⟩"];

/// Diabatic potentials in the Cartesian p-orbital basis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CartesianInputs {
    pub v_xx: f64,
    pub v_yy: f64,
    pub v_zz: f64,
    pub v_xz: f64,
}

/// The four electrostatic terms of the coupled model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ElectrostaticTerms {
    pub v_sigma: f64,
    pub v_pi: f64,
    pub v1: f64,
    pub v2: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CouplingInputs {
    pub v_sigma: f64,
    pub v_pi: f64,
    pub v1: f64,
    pub v2: f64,
    /// Spin-orbit constants.
    pub a: f64,
    pub b: f64,
}

impl CouplingInputs {
    pub fn new(terms: ElectrostaticTerms, a: f64, b: f64) -> Result<Self> {
        let c = Self {
            v_sigma: terms.v_sigma,
            v_pi: terms.v_pi,
            v1: terms.v1,
            v2: terms.v2,
            a,
            b,
        };
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        let all = [self.v_sigma, self.v_pi, self.v1, self.v2, self.a, self.b];
        if all.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Domain("coupling inputs must be finite".into()))
        }
    }
}

/// `V_Σ = V_zz`, `V_Π = (V_xx+V_yy)/2`, `V₁ = V_xz/√2`, `V₂ = (V_yy−V_xx)/2`.
pub fn cartesian_to_coupled(c: &CartesianInputs) -> ElectrostaticTerms {
    ElectrostaticTerms {
        v_sigma: c.v_zz,
        v_pi: 0.5 * (c.v_xx + c.v_yy),
        v1: c.v_xz / SQRT_2,
        v2: 0.5 * (c.v_yy - c.v_xx),
    }
}

/// A real symmetric potential matrix with basis labels.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialMatrix {
    matrix: DMatrix<f64>,
    labels: Vec<&'static str>,
}

impl PotentialMatrix {
    pub fn new(matrix: DMatrix<f64>, labels: Vec<&'static str>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() != labels.len() {
            return Err(Error::Domain(format!(
                "{}×{} matrix does not match {} basis labels",
                matrix.nrows(),
                matrix.ncols(),
                labels.len()
            )));
        }
        Ok(Self { matrix, labels })
    }

    pub fn dimension(&self) -> usize {
        self.labels.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn labels(&self) -> &[&'static str] {
        &self.labels
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    /// The submatrix on the given basis indices.
    pub fn block(&self, indices: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(indices.len(), indices.len(), |i, j| {
            self.matrix[(indices[i], indices[j])]
        })
    }
}

impl std::ops::Add for &PotentialMatrix {
    type Output = PotentialMatrix;
    fn add(self, rhs: Self) -> PotentialMatrix {
        PotentialMatrix {
            matrix: &self.matrix + &rhs.matrix,
            labels: self.labels.clone(),
        }
    }
}

/// `[[V_Σ, −√2 B], [−√2 B, A + V_Π]]`.
pub fn build_two_state(v_sigma: f64, v_pi: f64, a: f64, b: f64) -> PotentialMatrix {
    let off = -SQRT_2 * b;
    let m = DMatrix::from_row_slice(2, 2, &[v_sigma, off, off, a + v_pi]);
    PotentialMatrix {
        matrix: m,
        labels: TWO_STATE_LABELS.to_vec(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SixStatePotential {
    pub electrostatic: PotentialMatrix,
    pub spin_orbit: PotentialMatrix,
    pub total: PotentialMatrix,
}

/// Basis order `|Σ⟩, |Σ̄⟩, |Π₁⟩, |Π̄₁⟩, |Π₋₁⟩, |Π̄₋₁⟩`.
pub fn build_six_state(c: &CouplingInputs) -> SixStatePotential {
    let CouplingInputs {
        v_sigma: vs,
        v_pi: vp,
        v1,
        v2,
        a,
        b,
    } = *c;
    #[rustfmt::skip]
    let el = DMatrix::from_row_slice(6, 6, &[
        vs,  0.0, -v1, 0.0,  v1, 0.0,
        0.0, vs,  0.0, -v1, 0.0,  v1,
        -v1, 0.0, vp,  0.0,  v2, 0.0,
        0.0, -v1, 0.0, vp,  0.0,  v2,
        v1,  0.0, v2,  0.0,  vp, 0.0,
        0.0, v1,  0.0, v2,  0.0,  vp,
    ]);
    let s = -SQRT_2 * b;
    #[rustfmt::skip]
    let so = DMatrix::from_row_slice(6, 6, &[
        0.0, 0.0, 0.0, s,   0.0, 0.0,
        0.0, 0.0, 0.0, 0.0, s,   0.0,
        0.0, 0.0, -a,  0.0, 0.0, 0.0,
        s,   0.0, 0.0, a,   0.0, 0.0,
        0.0, s,   0.0, 0.0, a,   0.0,
        0.0, 0.0, 0.0, 0.0, 0.0, -a,
    ]);
    let electrostatic = PotentialMatrix {
        matrix: el,
        labels: SIX_STATE_LABELS.to_vec(),
    };
    let spin_orbit = PotentialMatrix {
        matrix: so,
        labels: SIX_STATE_LABELS.to_vec(),
    };
    let total = &electrostatic + &spin_orbit;
    SixStatePotential {
        electrostatic,
        spin_orbit,
        total,
    }
}

/// Ascending eigenvalues of a symmetric potential matrix.
pub fn adiabats(m: &PotentialMatrix) -> Result<Vec<f64>> {
    let a = m.matrix();
    let norm = a.norm();
    let asym = (a - a.transpose()).amax();
    if asym > 1e-12 * norm.max(1.0) {
        return Err(Error::Domain(format!(
            "matrix is not symmetric (max deviation {asym:.3e})"
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("matrix has non-finite entries".into()));
    }
    let eig = SymmetricEigen::new(a.clone());
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// Eigenvalues together with the reconstruction residual `‖Q Λ Qᵀ − m‖`.
pub fn adiabats_with_residual(m: &PotentialMatrix) -> Result<(Vec<f64>, f64)> {
    let vals = adiabats(m)?;
    let eig = SymmetricEigen::new(m.matrix().clone());
    let recon = eig.recompose();
    Ok((vals, (recon - m.matrix()).norm()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cartesian_relations() {
        let iso = cartesian_to_coupled(&CartesianInputs {
            v_xx: 1.7,
            v_yy: 1.7,
            v_zz: 1.7,
            v_xz: 0.0,
        });
        assert_eq!(
            iso,
            ElectrostaticTerms {
                v_sigma: 1.7,
                v_pi: 1.7,
                v1: 0.0,
                v2: 0.0
            }
        );
        let t = cartesian_to_coupled(&CartesianInputs {
            v_xx: 1.0,
            v_yy: 3.0,
            v_zz: 2.0,
            v_xz: SQRT_2,
        });
        assert_abs_diff_eq!(t.v_sigma, 2.0);
        assert_abs_diff_eq!(t.v_pi, 2.0);
        assert_abs_diff_eq!(t.v1, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.v2, 1.0);
    }

    #[test]
    fn two_state_examples() {
        let z = build_two_state(0.0, 0.0, 0.0, 0.0);
        assert!(z.matrix().iter().all(|v| *v == 0.0));
        let m = build_two_state(0.0, 0.0, 1.0, 1.0);
        assert_eq!(m.matrix(), &m.matrix().transpose());
        let vals = adiabats(&m).unwrap();
        assert_abs_diff_eq!(vals[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn six_state_examples() {
        let zero = build_six_state(&CouplingInputs::default());
        assert!(zero.electrostatic.matrix().iter().all(|v| *v == 0.0));
        assert!(zero.spin_orbit.matrix().iter().all(|v| *v == 0.0));

        let so = build_six_state(&CouplingInputs {
            a: 1.0,
            b: 1.0,
            ..Default::default()
        });
        let vals = adiabats(&so.spin_orbit).unwrap();
        for (got, want) in vals.iter().zip([-1.0, -1.0, -1.0, -1.0, 2.0, 2.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-10);
        }

        let el = build_six_state(&CouplingInputs {
            v_sigma: 0.5,
            v_pi: -0.25,
            ..Default::default()
        });
        let diag: Vec<f64> = el.electrostatic.matrix().diagonal().iter().copied().collect();
        assert_eq!(diag, vec![0.5, 0.5, -0.25, -0.25, -0.25, -0.25]);
        assert!(el
            .electrostatic
            .matrix()
            .iter()
            .enumerate()
            .all(|(k, v)| k % 7 == 0 || *v == 0.0));
    }

    #[test]
    fn sigma_pibar_block_matches_two_state() {
        let c = CouplingInputs {
            v_sigma: -0.3,
            v_pi: 0.8,
            v1: 0.0,
            v2: 0.0,
            a: 0.4,
            b: 0.7,
        };
        let six = build_six_state(&c);
        let block = PotentialMatrix::new(six.total.block(&[0, 3]), TWO_STATE_LABELS.to_vec()).unwrap();
        let two = build_two_state(c.v_sigma, c.v_pi, c.a, c.b);
        assert_eq!(block.matrix(), two.matrix());
    }

    #[test]
    fn adiabats_basic() {
        let d = PotentialMatrix::new(
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, -1.0, 2.0])),
            vec!["a", "b", "c"],
        )
        .unwrap();
        assert_eq!(adiabats(&d).unwrap(), vec![-1.0, 2.0, 3.0]);

        let asym = PotentialMatrix::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]), vec!["a", "b"]).unwrap();
        assert!(matches!(adiabats(&asym), Err(Error::Domain(_))));

        let six = build_six_state(&CouplingInputs {
            v_sigma: 1.0,
            v_pi: 2.0,
            v1: 0.3,
            v2: -0.2,
            a: 0.5,
            b: 0.6,
        });
        let (vals, resid) = adiabats_with_residual(&six.total).unwrap();
        assert!(resid <= 1e-10 * six.total.matrix().norm());
        assert_abs_diff_eq!(vals.iter().sum::<f64>(), six.total.trace(), epsilon = 1e-10);
    }

    #[test]
    fn label_count_must_match() {
        assert!(PotentialMatrix::new(DMatrix::zeros(2, 2), vec!["a"]).is_err());
    }
}
