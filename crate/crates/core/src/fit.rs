//! Levenberg–Marquardt fit of a Gaussian-peak model to a digitised angular curve.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dcs::{truncation_mass, AngularDensity, GaussianComponent};
use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 2000;

/// One fitted peak `amplitude · exp(−(θ−mean)²/(2σ²))` in intensity units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Peak {
    pub amplitude: f64,
    pub mean_rad: f64,
    pub sigma_rad: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FitResult {
    pub peaks: Vec<Peak>,
    /// The fitted curve renormalised to a density on `[0, π]`.
    pub density: AngularDensity,
    pub rms_residual: f64,
    pub iterations: usize,
}

fn model(params: &[f64], theta: f64) -> f64 {
    params
        .chunks_exact(3)
        .map(|p| {
            let z = (theta - p[1]) / p[2];
            p[0] * (-0.5 * z * z).exp()
        })
        .sum()
}

fn sse(params: &[f64], points: &[(f64, f64)]) -> f64 {
    points
        .iter()
        .map(|&(t, y)| {
            let r = y - model(params, t);
            r * r
        })
        .sum()
}

fn admissible(params: &[f64]) -> bool {
    params
        .chunks_exact(3)
        .all(|p| p[0] > 0.0 && (0.0..=PI).contains(&p[1]) && p[2] > 0.0 && p.iter().all(|v| v.is_finite()))
}

/// Greedy initial guess: take the tallest remaining point, estimate its
/// half-width at half-maximum, subtract, repeat.
fn initial_guess(points: &[(f64, f64)], n_peaks: usize) -> Vec<f64> {
    let mut residual: Vec<f64> = points.iter().map(|p| p.1).collect();
    let span = points.last().unwrap().0 - points[0].0;
    let fallback = (span / (4.0 * n_peaks as f64)).max(1e-3);
    let mut params = Vec::with_capacity(3 * n_peaks);
    for _ in 0..n_peaks {
        let (imax, &ymax) = residual.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        let amplitude = ymax.max(f64::MIN_POSITIVE);
        let half = amplitude / 2.0;
        let left = (0..imax).rev().find(|&i| residual[i] < half);
        let right = (imax + 1..residual.len()).find(|&i| residual[i] < half);
        let hwhm = match (left, right) {
            (Some(l), Some(r)) => 0.5 * (points[r].0 - points[l].0),
            (Some(l), None) => points[imax].0 - points[l].0,
            (None, Some(r)) => points[r].0 - points[imax].0,
            (None, None) => fallback,
        };
        let sigma = (hwhm / (2.0 * 2f64.ln()).sqrt()).max(1e-3);
        let mean = points[imax].0;
        params.extend_from_slice(&[amplitude, mean, sigma]);
        for (r, &(t, _)) in residual.iter_mut().zip(points) {
            let z = (t - mean) / sigma;
            *r -= amplitude * (-0.5 * z * z).exp();
        }
    }
    params
}

fn jacobian(params: &[f64], points: &[(f64, f64)]) -> DMatrix<f64> {
    DMatrix::from_fn(points.len(), params.len(), |i, j| {
        let t = points[i].0;
        let p = &params[3 * (j / 3)..3 * (j / 3) + 3];
        let z = (t - p[1]) / p[2];
        let e = (-0.5 * z * z).exp();
        match j % 3 {
            0 => e,
            1 => p[0] * e * z / p[2],
            _ => p[0] * e * z * z / p[2],
        }
    })
}

/// Digitised endpoints like `π·i/n` may overshoot by rounding; they are clamped.
const ANGLE_SLACK: f64 = 1e-9;

/// Fits `n_peaks` Gaussians to `(θ, intensity)` samples.
pub fn fit_gaussian_peaks(points: &[(f64, f64)], n_peaks: usize) -> Result<FitResult> {
    if n_peaks == 0 {
        return Err(Error::Domain("at least one peak is required".into()));
    }
    if points.len() < 3 * n_peaks {
        return Err(Error::Domain(format!(
            "{} points cannot constrain {} peaks (need at least {})",
            points.len(),
            n_peaks,
            3 * n_peaks
        )));
    }
    for &(t, y) in points {
        if !(-ANGLE_SLACK..=PI + ANGLE_SLACK).contains(&t) {
            return Err(Error::Domain(format!("angle {t} rad outside [0, π]")));
        }
        if !(y.is_finite() && y >= 0.0) {
            return Err(Error::Domain(format!("intensity {y} must be finite and nonnegative")));
        }
    }
    if points.iter().all(|p| p.1 == 0.0) {
        return Err(Error::Domain("all intensities are zero".into()));
    }
    let mut points: Vec<(f64, f64)> = points.iter().map(|&(t, y)| (t.clamp(0.0, PI), y)).collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut params = initial_guess(&points, n_peaks);
    let mut cost = sse(&params, &points);
    let scale: f64 = points.iter().map(|p| p.1 * p.1).sum();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        if cost <= 1e-30 * scale {
            converged = true;
            break;
        }
        let jac = jacobian(&params, &points);
        let resid = DVector::from_iterator(points.len(), points.iter().map(|&(t, y)| y - model(&params, t)));
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * resid;

        let mut accepted = false;
        while lambda < 1e20 {
            let mut lhs = jtj.clone();
            for k in 0..lhs.nrows() {
                lhs[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(step) = lhs.cholesky().map(|c| c.solve(&grad)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, d)| p + d).collect();
            let trial_cost = if admissible(&trial) {
                sse(&trial, &points)
            } else {
                f64::INFINITY
            };
            if trial_cost < cost {
                let rel_step = params
                    .iter()
                    .zip(step.iter())
                    .map(|(p, d)| d.abs() / (p.abs() + 1e-12))
                    .fold(0.0, f64::max);
                let rel_gain = (cost - trial_cost) / cost;
                params = trial;
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel_step < 1e-13 || rel_gain < 1e-15 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        // No damping gives a decrease: we sit at a minimum to working precision.
        if !accepted {
            converged = true;
        }
        if converged {
            break;
        }
    }

    let rms_residual = (cost / points.len() as f64).sqrt();
    if !converged {
        return Err(Error::Fit {
            iterations,
            best_rms: rms_residual,
        });
    }

    let peaks: Vec<Peak> = params
        .chunks_exact(3)
        .map(|p| Peak {
            amplitude: p[0],
            mean_rad: p[1],
            sigma_rad: p[2],
        })
        .collect();
    let components = peaks
        .iter()
        .map(|p| {
            let area = p.amplitude * p.sigma_rad * (2.0 * PI).sqrt() * truncation_mass(p.mean_rad, p.sigma_rad);
            GaussianComponent::new(area, p.mean_rad, p.sigma_rad)
        })
        .collect();
    Ok(FitResult {
        peaks,
        density: AngularDensity::new(components)?,
        rms_residual,
        iterations,
    })
}
