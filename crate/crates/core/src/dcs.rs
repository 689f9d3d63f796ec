//! Angular densities for each measurement eigenstate and the decoding kernels
//! that turn a scattering angle into an unbiased ±1 estimate.
//!
//! Densities are normalised with respect to `dθ` on `[0, π]`. Each Gaussian
//! component is truncated to that interval and renormalised on its own, so a
//! mixture is sampled by picking a component by weight and then rejecting
//! draws that fall outside the interval.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, Tolerance};
use crate::quantum::Sign;

/// Minimum L² distance between the two densities of a pair.
pub const MIN_L2_DISTANCE: f64 = 1e-6;
/// Minimum value of either kernel denominator.
pub const MIN_DENOMINATOR: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean_rad: f64,
    pub sigma_rad: f64,
}

impl GaussianComponent {
    pub fn new(weight: f64, mean_rad: f64, sigma_rad: f64) -> Self {
        Self {
            weight,
            mean_rad,
            sigma_rad,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.weight.is_finite() && self.weight > 0.0) {
            return Err(Error::Domain(format!(
                "component weight {} must be positive",
                self.weight
            )));
        }
        if !(0.0..=PI).contains(&self.mean_rad) {
            return Err(Error::Domain(format!(
                "component mean {} rad outside [0, π]",
                self.mean_rad
            )));
        }
        if !(self.sigma_rad.is_finite() && self.sigma_rad > 0.0) {
            return Err(Error::Domain(format!(
                "component width {} must be positive",
                self.sigma_rad
            )));
        }
        Ok(())
    }
}

pub(crate) fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Probability mass of `N(mean, sigma²)` inside `[0, π]`.
pub(crate) fn truncation_mass(mean: f64, sigma: f64) -> f64 {
    std_normal_cdf((PI - mean) / sigma) - std_normal_cdf(-mean / sigma)
}

/// A normalised mixture of truncated Gaussians on `[0, π]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AngularDensity {
    components: Vec<GaussianComponent>,
    // Per-component prefactor w / (σ √(2π) Z).
    scale: Vec<f64>,
    cumulative: Vec<f64>,
}

impl AngularDensity {
    /// Builds a density; weights are rescaled to sum to one.
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Domain("density needs at least one component".into()));
        }
        for c in &components {
            c.validate()?;
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        let components: Vec<_> = components
            .into_iter()
            .map(|c| GaussianComponent {
                weight: c.weight / total,
                ..c
            })
            .collect();
        let scale = components
            .iter()
            .map(|c| {
                let mass = truncation_mass(c.mean_rad, c.sigma_rad);
                c.weight / (c.sigma_rad * (2.0 * PI).sqrt() * mass)
            })
            .collect();
        let cumulative = components
            .iter()
            .scan(0.0, |acc, c| {
                *acc += c.weight;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            components,
            scale,
            cumulative,
        })
    }

    pub fn single(mean_rad: f64, sigma_rad: f64) -> Result<Self> {
        Self::new(vec![GaussianComponent::new(1.0, mean_rad, sigma_rad)])
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    /// Density value; zero outside `[0, π]`.
    pub fn pdf(&self, theta: f64) -> f64 {
        if !(0.0..=PI).contains(&theta) {
            return 0.0;
        }
        self.components
            .iter()
            .zip(&self.scale)
            .map(|(c, s)| {
                let z = (theta - c.mean_rad) / c.sigma_rad;
                s * (-0.5 * z * z).exp()
            })
            .sum()
    }

    /// Mean of the distribution, by quadrature.
    pub fn mean(&self) -> f64 {
        integrate(|t| t * self.pdf(t), 0.0, PI, Tolerance::default()).value
    }

    /// Cumulative distribution, closed form.
    pub fn cdf(&self, theta: f64) -> f64 {
        let theta = theta.clamp(0.0, PI);
        self.components
            .iter()
            .map(|c| {
                let mass = truncation_mass(c.mean_rad, c.sigma_rad);
                let below =
                    std_normal_cdf((theta - c.mean_rad) / c.sigma_rad) - std_normal_cdf(-c.mean_rad / c.sigma_rad);
                c.weight * below / mass
            })
            .sum()
    }

    /// Draws one angle: component by weight, then truncated-Gaussian rejection.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let k = self
            .cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.components.len() - 1);
        let c = &self.components[k];
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let theta = c.mean_rad + c.sigma_rad * z;
            if (0.0..=PI).contains(&theta) {
                return theta;
            }
        }
    }
}

impl Serialize for AngularDensity {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.components.serialize(s)
    }
}

impl<'de> Deserialize<'de> for AngularDensity {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let components = Vec::<GaussianComponent>::deserialize(d)?;
        AngularDensity::new(components).map_err(serde::de::Error::custom)
    }
}

/// `∫₀^π f(θ) g(θ) dθ`.
pub fn overlap_integral(f: &AngularDensity, g: &AngularDensity) -> f64 {
    integrate(|t| f.pdf(t) * g.pdf(t), 0.0, PI, Tolerance::default()).value
}

/// `‖f − g‖₂` on `[0, π]`.
pub fn l2_distance(f: &AngularDensity, g: &AngularDensity) -> f64 {
    integrate(
        |t| {
            let d = f.pdf(t) - g.pdf(t);
            d * d
        },
        0.0,
        PI,
        Tolerance::default(),
    )
    .value
    .sqrt()
}

/// Angular densities for the `+1` and `−1` eigenstates of one scattering measurement.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DcsPair {
    pub label: String,
    plus: AngularDensity,
    minus: AngularDensity,
}

impl DcsPair {
    pub fn new(label: impl Into<String>, plus: AngularDensity, minus: AngularDensity) -> Result<Self> {
        let dist = l2_distance(&plus, &minus);
        if dist <= MIN_L2_DISTANCE {
            return Err(Error::Indistinguishable { denominator: dist });
        }
        Ok(Self {
            label: label.into(),
            plus,
            minus,
        })
    }

    /// Placeholder channel-I pair: forward-peaked ground-level product with a
    /// small backward lobe, sideways-peaked excited level.
    pub fn default_channel_one() -> Self {
        let plus = AngularDensity::new(vec![
            GaussianComponent::new(0.7, 0.35, 0.12),
            GaussianComponent::new(0.3, 2.8, 0.25),
        ])
        .expect("valid default");
        let minus = AngularDensity::single(1.6, 0.2).expect("valid default");
        Self::new("channel I (Z)", plus, minus).expect("distinguishable default")
    }

    /// Placeholder channel-II pair with well separated supports.
    pub fn default_channel_two() -> Self {
        let plus = AngularDensity::single(0.6, 0.15).expect("valid default");
        let minus = AngularDensity::single(2.4, 0.15).expect("valid default");
        Self::new("channel II ((Z+X)/√2)", plus, minus).expect("distinguishable default")
    }

    pub fn density(&self, sign: Sign) -> &AngularDensity {
        match sign {
            Sign::Plus => &self.plus,
            Sign::Minus => &self.minus,
        }
    }

    pub fn plus(&self) -> &AngularDensity {
        &self.plus
    }

    pub fn minus(&self) -> &AngularDensity {
        &self.minus
    }
}

impl<'de> Deserialize<'de> for DcsPair {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Doc {
            #[serde(default)]
            label: String,
            plus: AngularDensity,
            minus: AngularDensity,
        }
        let doc = Doc::deserialize(d)?;
        DcsPair::new(doc.label, doc.plus, doc.minus).map_err(serde::de::Error::custom)
    }
}

/// Overlap integrals of a [`DcsPair`] and the auxiliary functions built from them.
///
/// `v(x|±) = [f±(x) − I±∓] / [I±± − I±∓]`, which satisfies
/// `∫ f_a v(·|b) = δ_ab` for normalised densities.
#[derive(Clone, Debug, PartialEq)]
pub struct VKernel {
    pair: DcsPair,
    i_pp: f64,
    i_pm: f64,
    i_mm: f64,
}

impl VKernel {
    pub fn new(pair: &DcsPair) -> Result<Self> {
        let i_pp = overlap_integral(&pair.plus, &pair.plus);
        let i_pm = overlap_integral(&pair.plus, &pair.minus);
        let i_mm = overlap_integral(&pair.minus, &pair.minus);
        for denominator in [i_pp - i_pm, i_mm - i_pm] {
            if denominator.is_nan() || denominator <= MIN_DENOMINATOR {
                return Err(Error::Indistinguishable { denominator });
            }
        }
        Ok(Self {
            pair: pair.clone(),
            i_pp,
            i_pm,
            i_mm,
        })
    }

    pub fn pair(&self) -> &DcsPair {
        &self.pair
    }

    /// `(I₊₊, I₊₋, I₋₋)`.
    pub fn overlaps(&self) -> (f64, f64, f64) {
        (self.i_pp, self.i_pm, self.i_mm)
    }

    pub fn v(&self, theta: f64, sign: Sign) -> f64 {
        match sign {
            Sign::Plus => (self.pair.plus.pdf(theta) - self.i_pm) / (self.i_pp - self.i_pm),
            Sign::Minus => (self.pair.minus.pdf(theta) - self.i_pm) / (self.i_mm - self.i_pm),
        }
    }

    /// `v(θ|+) − v(θ|−)`: the per-side factor of the two-particle kernel.
    pub fn weight(&self, theta: f64) -> f64 {
        self.v(theta, Sign::Plus) - self.v(theta, Sign::Minus)
    }

    /// `∫ f_a(θ) v(θ|b) dθ`; should equal `δ_ab`.
    pub fn decode(&self, actual: Sign, decoded: Sign) -> f64 {
        let f = self.pair.density(actual);
        integrate(|t| f.pdf(t) * self.v(t, decoded), 0.0, PI, Tolerance::default()).value
    }
}

/// `V(x₁, x₂) = [v(x₁|+) − v(x₁|−)] · [v(x₂|+) − v(x₂|−)]`.
pub fn kernel_product(first: &VKernel, second: &VKernel, x1: f64, x2: f64) -> f64 {
    first.weight(x1) * second.weight(x2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pair(a: AngularDensity, b: AngularDensity) -> DcsPair {
        DcsPair::new("t", a, b).unwrap()
    }

    #[test]
    fn densities_are_normalised() {
        for d in [
            AngularDensity::single(0.0, 0.3).unwrap(),
            AngularDensity::single(PI, 1.5).unwrap(),
            DcsPair::default_channel_one().plus().clone(),
            DcsPair::default_channel_one().minus().clone(),
        ] {
            let total = integrate(|t| d.pdf(t), 0.0, PI, Tolerance::default()).value;
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
            assert_abs_diff_eq!(d.cdf(PI), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn construction_rejects_bad_components() {
        assert!(AngularDensity::single(1.0, 0.0).is_err());
        assert!(AngularDensity::single(1.0, -0.1).is_err());
        assert!(AngularDensity::single(4.0, 0.1).is_err());
        assert!(AngularDensity::new(vec![GaussianComponent::new(-1.0, 1.0, 0.1)]).is_err());
        assert!(AngularDensity::new(vec![]).is_err());
    }

    #[test]
    fn identical_pair_is_rejected() {
        let d = AngularDensity::single(1.0, 0.2).unwrap();
        assert!(matches!(
            DcsPair::new("same", d.clone(), d),
            Err(Error::Indistinguishable { .. })
        ));
    }

    #[test]
    fn gaussian_self_overlap_closed_form() {
        let s = 0.1;
        let d = AngularDensity::single(1.5, s).unwrap();
        let want = 1.0 / (2.0 * s * PI.sqrt());
        assert_abs_diff_eq!(overlap_integral(&d, &d), want, epsilon = want * 1e-9);
        assert_abs_diff_eq!(want, 2.8209479177387814, epsilon = 1e-12);
    }

    #[test]
    fn disjoint_overlap_vanishes() {
        let f = AngularDensity::single(0.5, 0.05).unwrap();
        let g = AngularDensity::single(2.5, 0.05).unwrap();
        assert!(overlap_integral(&f, &g) < 1e-12);
    }

    #[test]
    fn overlap_bilinearity() {
        let f = AngularDensity::single(0.8, 0.2).unwrap();
        let g = AngularDensity::single(1.4, 0.3).unwrap();
        let h = AngularDensity::single(2.0, 0.25).unwrap();
        // Equal-weight mixture of two renormalised components is (f + g)/2.
        let fg = AngularDensity::new(vec![
            GaussianComponent::new(1.0, 0.8, 0.2),
            GaussianComponent::new(1.0, 1.4, 0.3),
        ])
        .unwrap();
        let lhs = overlap_integral(&fg, &h);
        let rhs = 0.5 * (overlap_integral(&f, &h) + overlap_integral(&g, &h));
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-9);
    }

    #[test]
    fn decoding_identities_default_pairs() {
        for p in [DcsPair::default_channel_one(), DcsPair::default_channel_two()] {
            let k = VKernel::new(&p).unwrap();
            for a in Sign::BOTH {
                for b in Sign::BOTH {
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(k.decode(a, b), want, epsilon = 1e-8);
                }
            }
            let (pp, pm, mm) = k.overlaps();
            assert!(pm * pm <= pp * mm * (1.0 + 1e-9));
        }
    }

    #[test]
    fn disjoint_kernel_reduces_to_scaled_density() {
        let p = pair(
            AngularDensity::single(0.5, 0.05).unwrap(),
            AngularDensity::single(2.5, 0.05).unwrap(),
        );
        let k = VKernel::new(&p).unwrap();
        let (pp, _, _) = k.overlaps();
        for t in [0.45, 0.5, 0.55] {
            assert_abs_diff_eq!(k.v(t, Sign::Plus), p.plus().pdf(t) / pp, epsilon = 1e-9);
        }
        assert!(k.v(1.5, Sign::Plus).abs() < 1e-9);
    }

    #[test]
    fn kernel_expectations() {
        let p = DcsPair::default_channel_two();
        let q = DcsPair::default_channel_one();
        let ka = VKernel::new(&p).unwrap();
        let kb = VKernel::new(&q).unwrap();
        for (a, b, want) in [
            (Sign::Plus, Sign::Plus, 1.0),
            (Sign::Plus, Sign::Minus, -1.0),
            (Sign::Minus, Sign::Minus, 1.0),
        ] {
            // The kernel factorises, so the double integral is a product.
            let side_a = integrate(|t| p.density(a).pdf(t) * ka.weight(t), 0.0, PI, Tolerance::default()).value;
            let side_b = integrate(|t| q.density(b).pdf(t) * kb.weight(t), 0.0, PI, Tolerance::default()).value;
            assert_abs_diff_eq!(side_a * side_b, want, epsilon = 1e-8);
        }
        assert_abs_diff_eq!(
            kernel_product(&ka, &kb, 0.6, 1.6),
            ka.weight(0.6) * kb.weight(1.6),
            epsilon = 0.0
        );
    }

    #[test]
    fn overlapping_pair_rejected_by_kernel() {
        // f− broad and centred on the narrow f+ peak: I₋₋ < I₊₋.
        let p = pair(
            AngularDensity::single(1.5, 0.1).unwrap(),
            AngularDensity::single(1.5, 0.4).unwrap(),
        );
        assert!(matches!(VKernel::new(&p), Err(Error::Indistinguishable { .. })));
    }

    #[test]
    fn sampling_mean_and_determinism() {
        let d = AngularDensity::single(PI / 2.0, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
        assert!(draws.iter().all(|t| (0.0..=PI).contains(t)));
        let mean = draws.iter().sum::<f64>() / n as f64;
        assert!((mean - PI / 2.0).abs() < 3.0 * 0.05 / (n as f64).sqrt());

        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        let c = DcsPair::default_channel_one();
        let xs: Vec<f64> = (0..100).map(|_| c.plus().sample(&mut a)).collect();
        let ys: Vec<f64> = (0..100).map(|_| c.plus().sample(&mut b)).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn json_schema() {
        let json = r#"{"label":"x","plus":[{"weight":1.0,"mean_rad":0.6,"sigma_rad":0.15}],
                       "minus":[{"weight":2.0,"mean_rad":2.4,"sigma_rad":0.15}]}"#;
        let p: DcsPair = serde_json::from_str(json).unwrap();
        assert_eq!(p.minus().components()[0].weight, 1.0);
        let bad = r#"{"plus":[{"weight":1.0,"mean_rad":0.6,"sigma_rad":-1}],"minus":[]}"#;
        assert!(serde_json::from_str::<DcsPair>(bad).is_err());
    }
}
