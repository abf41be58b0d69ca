//! Source model: a sub-threshold OPO emitting V-polarized squeezed vacuum,
//! combined with an H-polarized coherent beam.
//!
//! Conventions used throughout:
//!
//! - `delta_nu` (δν) is a rate in s⁻¹ and enters both the squeezed flux
//!   `Φ_S = μ²ηδν/(1 − μ²)` and the decay `e^{−δν|τ|}` without a 2π factor.
//! - Sideband frequencies ω are angular (rad/s) and enter the Bogoliubov
//!   coefficients as the ratio `ω/δν`.
//! - The pump phase is zero, so every correlation is real.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical configuration of the source. The canonical form stores μ; the
/// squeezed flux Φ_S is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OpoParams {
    delta_nu: f64,
    eta: f64,
    mu: f64,
    phi_c: f64,
}

impl OpoParams {
    /// Builds parameters from the pump amplitude μ (square root of the pump
    /// power as a fraction of threshold).
    pub fn new(delta_nu: f64, eta: f64, mu: f64, phi_c: f64) -> Result<Self> {
        if !(delta_nu.is_finite() && delta_nu > 0.0) {
            return Err(Error::Domain(format!("delta_nu must be > 0, got {delta_nu}")));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::Domain(format!("eta must lie in (0, 1], got {eta}")));
        }
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(Error::Domain(format!("mu must be >= 0, got {mu}")));
        }
        if mu >= 1.0 {
            return Err(Error::Threshold { mu });
        }
        if !(phi_c.is_finite() && phi_c >= 0.0) {
            return Err(Error::Domain(format!("phi_c must be >= 0, got {phi_c}")));
        }
        let p = OpoParams { delta_nu, eta, mu, phi_c };
        if !p.phi_s().is_finite() {
            return Err(Error::Domain("squeezed flux overflows".into()));
        }
        Ok(p)
    }

    /// Builds parameters from the squeezed-beam flux Φ_S instead of μ.
    pub fn from_flux(delta_nu: f64, eta: f64, phi_s: f64, phi_c: f64) -> Result<Self> {
        let mu = mu_from_flux(phi_s, eta, delta_nu)?;
        Self::new(delta_nu, eta, mu, phi_c)
    }

    pub fn delta_nu(&self) -> f64 {
        self.delta_nu
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn phi_c(&self) -> f64 {
        self.phi_c
    }

    /// Pump power as a fraction of threshold, μ².
    pub fn pump_fraction(&self) -> f64 {
        self.mu * self.mu
    }

    /// Squeezed-vacuum photon flux Φ_S = μ²ηδν/(1 − μ²).
    pub fn phi_s(&self) -> f64 {
        let m2 = self.mu * self.mu;
        m2 * self.eta * self.delta_nu / (1.0 - m2)
    }

    pub fn with_phi_c(self, phi_c: f64) -> Result<Self> {
        Self::new(self.delta_nu, self.eta, self.mu, phi_c)
    }

    pub fn with_mu(self, mu: f64) -> Result<Self> {
        Self::new(self.delta_nu, self.eta, mu, self.phi_c)
    }

    pub fn derived(&self) -> DerivedCoefficients {
        DerivedCoefficients::new(self)
    }

    pub fn to_record(&self) -> ParamsRecord {
        ParamsRecord {
            delta_nu_hz: self.delta_nu,
            eta: self.eta,
            mu: Some(self.mu),
            phi_s: None,
            phi_c: self.phi_c,
        }
    }
}

impl fmt::Display for OpoParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "delta_nu={:e} s^-1, eta={}, mu={} (mu^2={:.4}), phi_s={:e}/s, phi_c={:e}/s",
            self.delta_nu,
            self.eta,
            self.mu,
            self.pump_fraction(),
            self.phi_s(),
            self.phi_c
        )
    }
}

/// JSON form of [`OpoParams`]: exactly one of `mu` / `phi_s` must be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsRecord {
    pub delta_nu_hz: f64,
    pub eta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_s: Option<f64>,
    pub phi_c: f64,
}

impl TryFrom<ParamsRecord> for OpoParams {
    type Error = Error;

    fn try_from(r: ParamsRecord) -> Result<Self> {
        match (r.mu, r.phi_s) {
            (Some(mu), None) => OpoParams::new(r.delta_nu_hz, r.eta, mu, r.phi_c),
            (None, Some(phi_s)) => OpoParams::from_flux(r.delta_nu_hz, r.eta, phi_s, r.phi_c),
            _ => Err(Error::Validation(
                "exactly one of `mu` and `phi_s` must be given".into(),
            )),
        }
    }
}

impl<'de> Deserialize<'de> for OpoParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let record = ParamsRecord::deserialize(d)?;
        OpoParams::try_from(record).map_err(serde::de::Error::custom)
    }
}

/// Escape coefficient η = T₁/(T₁ + T₂) from the output-coupler transmission
/// and the intracavity loss.
pub fn eta_from_mirrors(t1: f64, t2: f64) -> Result<f64> {
    if !(t1 > 0.0) {
        return Err(Error::Domain(format!("output-coupler transmission must be > 0, got {t1}")));
    }
    if !(t2 >= 0.0) {
        return Err(Error::Domain(format!("intracavity loss must be >= 0, got {t2}")));
    }
    Ok(t1 / (t1 + t2))
}

/// Inverts `Φ_S = μ²ηδν/(1 − μ²)`: μ = √(Φ_S/(Φ_S + ηδν)).
pub fn mu_from_flux(phi_s: f64, eta: f64, delta_nu: f64) -> Result<f64> {
    if !(phi_s.is_finite() && phi_s >= 0.0) {
        return Err(Error::Domain(format!("phi_s must be >= 0, got {phi_s}")));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Domain(format!("eta must lie in (0, 1], got {eta}")));
    }
    if !(delta_nu.is_finite() && delta_nu > 0.0) {
        return Err(Error::Domain(format!("delta_nu must be > 0, got {delta_nu}")));
    }
    Ok((phi_s / (phi_s + eta * delta_nu)).sqrt())
}

/// Coefficients shared by the closed-form correlations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedCoefficients {
    /// α = ημδν/(1 − μ²), photons/s.
    pub alpha: f64,
    /// Constant term of the [`VvvvForm::Printed`] correlation, with πδν
    /// entering as a bare number (δν in s⁻¹).
    pub beta_coeff: f64,
    mu: f64,
    delta_nu: f64,
}

impl DerivedCoefficients {
    pub fn new(p: &OpoParams) -> Self {
        let (mu, eta, dn) = (p.mu, p.eta, p.delta_nu);
        let m2 = mu * mu;
        let alpha = eta * mu * dn / (1.0 - m2);
        let pdn = std::f64::consts::PI * dn;
        let braces = m2 * m2 * (1.0 - eta - pdn)
            + m2 * (pdn + 2.0 * eta * (1.0 + eta) - 1.0)
            + 6.0 * eta * eta
            - 9.0 * eta
            + 4.0;
        let beta_coeff = braces / (pdn * (1.0 - m2));
        DerivedCoefficients { alpha, beta_coeff, mu, delta_nu: dn }
    }

    /// x(τ) = μδν|τ|.
    pub fn x_of_tau(&self, tau: f64) -> f64 {
        self.mu * self.delta_nu * tau.abs()
    }
}

/// Bogoliubov coefficients of the squeezed-mode output at one sideband.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BogoliubovCoefficients {
    pub omega: f64,
    pub f1: Complex64,
    pub f2: Complex64,
    pub f3: Complex64,
    pub f4: Complex64,
    pub a_denom: Complex64,
}

impl BogoliubovCoefficients {
    /// |f₁|² + |f₃|² − |f₂|² − |f₄|², which equals 1 for a valid transformation.
    pub fn commutator(&self) -> f64 {
        self.f1.norm_sqr() + self.f3.norm_sqr() - self.f2.norm_sqr() - self.f4.norm_sqr()
    }
}

/// Evaluates f₁…f₄ and A at the dimensionless detuning `u = ω/δν`.
///
/// Unlike [`bogoliubov`] this accepts μ = 1, where `A(0) = 0` is reported as
/// [`Error::Singular`].
pub fn bogoliubov_at(u: f64, eta: f64, mu: f64) -> Result<BogoliubovCoefficients> {
    let one = Complex64::new(1.0, 0.0);
    let iu = Complex64::new(0.0, u);
    let a = (one - iu) * (one - iu) - mu * mu;
    if a.norm() == 0.0 {
        return Err(Error::Singular(format!("A(omega) = 0 at u = {u}, mu = {mu}")));
    }
    let inv = a.inv();
    let leak = (eta * (1.0 - eta)).sqrt();
    let lossy = Complex64::new(1.0 - eta, 0.0) - iu;
    let f1 = (eta * eta - lossy * lossy + mu * mu) * inv;
    let f2 = Complex64::new(2.0 * eta * mu, 0.0) * inv;
    let f3 = 2.0 * leak * (one - iu) * inv;
    let f4 = Complex64::new(2.0 * mu * leak, 0.0) * inv;
    Ok(BogoliubovCoefficients { omega: u, f1, f2, f3, f4, a_denom: a })
}

/// Bogoliubov coefficients at angular sideband frequency ω (rad/s).
pub fn bogoliubov(omega: f64, params: &OpoParams) -> Result<BogoliubovCoefficients> {
    let mut c = bogoliubov_at(omega / params.delta_nu, params.eta, params.mu)?;
    c.omega = omega;
    Ok(c)
}

/// Which expression is used for R_VVVV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VvvvForm {
    /// Gaussian-moment form `α²{μ² + [(1 + μ²)cosh 2x + 2μ sinh 2x]e^{−2δν|τ|}}`,
    /// equal to `n(0)² + n(τ)² + m(τ)²` for the closed-form moments.
    #[default]
    Gaussian,
    /// `α²{β + [(1 − μ²)cosh 2x + 2μ sinh 2x]e^{−2δν|τ|}}` with β =
    /// [`DerivedCoefficients::beta_coeff`], kept for comparison.
    Printed,
}

impl VvvvForm {
    pub fn label(self) -> &'static str {
        match self {
            VvvvForm::Gaussian => "gaussian",
            VvvvForm::Printed => "printed",
        }
    }
}

impl std::str::FromStr for VvvvForm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(VvvvForm::Gaussian),
            "printed" => Ok(VvvvForm::Printed),
            _ => Err(Error::Validation(format!("unknown R_VVVV form `{s}`"))),
        }
    }
}

/// Second-order correlations R⁽²⁾ at one delay, photons²/s².
///
/// Index order follows the tomography convention: `r_hhvv` is
/// ⟨a_H†(t) a_H†(t+τ) a_V(t+τ) a_V(t)⟩. With zero pump phase every element is
/// real, so the conjugate partners `r_vvhh`, `r_vhhv` equal their mirrors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairCorrelations {
    pub tau: f64,
    pub r_hhhh: f64,
    pub r_hvhv: f64,
    pub r_vhvh: f64,
    pub r_hhvv: f64,
    pub r_hvvh: f64,
    pub r_vvvv: f64,
}

impl PairCorrelations {
    pub fn r_vvhh(&self) -> f64 {
        self.r_hhvv
    }
    pub fn r_vhhv(&self) -> f64 {
        self.r_hvvh
    }

    /// Tr R⁽²⁾ = R_HHHH + R_HVHV + R_VHVH + R_VVVV.
    pub fn trace(&self) -> f64 {
        self.r_hhhh + self.r_hvhv + self.r_vhvh + self.r_vvvv
    }

    pub fn scaled(&self, factor: f64) -> Self {
        PairCorrelations {
            tau: self.tau,
            r_hhhh: self.r_hhhh * factor,
            r_hvhv: self.r_hvhv * factor,
            r_vhvh: self.r_vhvh * factor,
            r_hhvv: self.r_hhvv * factor,
            r_hvvh: self.r_hvvh * factor,
            r_vvvv: self.r_vvvv * factor,
        }
    }
}

/// Closed-form second-order correlations at delay τ (seconds).
pub fn pair_correlations(tau: f64, params: &OpoParams, form: VvvvForm) -> PairCorrelations {
    let d = params.derived();
    let (mu, phi_c) = (params.mu, params.phi_c);
    let x = d.x_of_tau(tau);
    let decay = (-params.delta_nu * tau.abs()).exp();
    let (ch, sh) = (x.cosh(), x.sinh());
    let (ch2, sh2) = ((2.0 * x).cosh(), (2.0 * x).sinh());
    let alpha = d.alpha;

    let r_hvhv = phi_c * alpha * mu;
    let r_vvvv = match form {
        VvvvForm::Gaussian => {
            alpha
                * alpha
                * (mu * mu + ((1.0 + mu * mu) * ch2 + 2.0 * mu * sh2) * decay * decay)
        }
        VvvvForm::Printed => {
            alpha
                * alpha
                * (d.beta_coeff + ((1.0 - mu * mu) * ch2 + 2.0 * mu * sh2) * decay * decay)
        }
    };
    PairCorrelations {
        tau,
        r_hhhh: phi_c * phi_c,
        r_hvhv,
        r_vhvh: r_hvhv,
        r_hhvv: phi_c * alpha * (ch + mu * sh) * decay,
        r_hvvh: phi_c * alpha * (mu * ch + sh) * decay,
        r_vvvv,
    }
}

/// First-order correlation matrix R⁽¹⁾(0) in the (H, V) basis.
///
/// The product state is invariant under a π phase shift of V, so the
/// off-diagonal elements vanish.
pub fn first_order(params: &OpoParams) -> [[f64; 2]; 2] {
    [[params.phi_c, 0.0], [0.0, params.phi_s()]]
}

/// Noise power of the squeezed quadrature at zero sideband frequency,
/// relative to shot noise: `1 − 4ημ/(1 + μ)²`.
pub fn squeezed_noise_at_resonance(params: &OpoParams) -> f64 {
    let mu = params.mu;
    1.0 - 4.0 * params.eta * mu / ((1.0 + mu) * (1.0 + mu))
}

/// On-resonance squeezing level in dB below shot noise.
pub fn squeezing_db(params: &OpoParams) -> f64 {
    -10.0 * squeezed_noise_at_resonance(params).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn typical() -> OpoParams {
        OpoParams::from_flux(8e6, 0.93, 2e5, 2e6).unwrap()
    }

    #[test]
    fn eta_from_mirror_examples() {
        assert_eq!(eta_from_mirrors(0.1, 0.0).unwrap(), 1.0);
        assert_relative_eq!(eta_from_mirrors(0.093, 0.007).unwrap(), 0.93, epsilon = 1e-15);
        assert_eq!(eta_from_mirrors(0.05, 0.05).unwrap(), 0.5);
        assert!(matches!(eta_from_mirrors(0.0, 0.1), Err(Error::Domain(_))));
        assert!(matches!(eta_from_mirrors(-0.1, 0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn mu_from_flux_examples() {
        let mu = mu_from_flux(2e5, 0.93, 8e6).unwrap();
        assert!((mu * mu - 0.026).abs() < 1e-3);
        assert_eq!(mu_from_flux(0.0, 0.5, 1e7).unwrap(), 0.0);
        let mu = mu_from_flux(0.93 * 8e6, 0.93, 8e6).unwrap();
        assert_relative_eq!(mu * mu, 0.5, epsilon = 1e-15);
        assert!(mu_from_flux(-1.0, 0.5, 1e7).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(matches!(OpoParams::new(8e6, 0.9, 1.0, 1e6), Err(Error::Threshold { .. })));
        assert!(OpoParams::new(0.0, 0.9, 0.1, 1e6).is_err());
        assert!(OpoParams::new(8e6, 0.0, 0.1, 1e6).is_err());
        assert!(OpoParams::new(8e6, 1.1, 0.1, 1e6).is_err());
        assert!(OpoParams::new(8e6, 0.9, -0.1, 1e6).is_err());
        assert!(OpoParams::new(8e6, 0.9, 0.1, -1.0).is_err());
        assert!(OpoParams::new(8e6, 1.0, 0.0, 0.0).is_ok());
    }

    #[test]
    fn params_json_requires_exactly_one_pump_key() {
        let p: OpoParams =
            serde_json::from_str(r#"{"delta_nu_hz":8e6,"eta":0.93,"phi_s":2e5,"phi_c":2e6}"#)
                .unwrap();
        assert_relative_eq!(p.phi_s(), 2e5, max_relative = 1e-12);
        let p: OpoParams =
            serde_json::from_str(r#"{"delta_nu_hz":8e6,"eta":0.93,"mu":0.2,"phi_c":2e6}"#).unwrap();
        assert_eq!(p.mu(), 0.2);
        assert!(serde_json::from_str::<OpoParams>(
            r#"{"delta_nu_hz":8e6,"eta":0.93,"mu":0.2,"phi_s":1.0,"phi_c":2e6}"#
        )
        .is_err());
        assert!(
            serde_json::from_str::<OpoParams>(r#"{"delta_nu_hz":8e6,"eta":0.93,"phi_c":2e6}"#)
                .is_err()
        );
        let back: OpoParams = serde_json::from_value(serde_json::to_value(p.to_record()).unwrap())
            .unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn derived_coefficients() {
        let p = typical();
        let d = p.derived();
        assert_relative_eq!(d.alpha * p.mu(), p.phi_s(), max_relative = 1e-12);
        assert_eq!(d.x_of_tau(0.0), 0.0);
        assert_eq!(d.x_of_tau(3e-9), d.x_of_tau(-3e-9));
        // The coefficient collapses onto μ² up to O(1/(πδν)).
        assert!((d.beta_coeff - p.pump_fraction()).abs() < 1e-6);
    }

    #[test]
    fn bogoliubov_limits() {
        let id = bogoliubov_at(0.0, 1.0, 0.0).unwrap();
        assert_relative_eq!(id.f1.re, 1.0, epsilon = 1e-15);
        assert_eq!(id.f1.im, 0.0);
        for f in [id.f2, id.f3, id.f4] {
            assert_eq!(f.norm(), 0.0);
        }
        for u in [-3.0, -0.2, 0.0, 0.7, 40.0] {
            let c = bogoliubov_at(u, 0.6, 0.0).unwrap();
            assert_eq!(c.f2.norm(), 0.0);
            assert_eq!(c.f4.norm(), 0.0);
            assert_relative_eq!(c.f1.norm_sqr() + c.f3.norm_sqr(), 1.0, epsilon = 1e-12);
        }
        let c = bogoliubov_at(0.0, 0.93, 0.1618).unwrap();
        // At u = 0: f₁ = (2η − 1 + μ²)/(1 − μ²), f₂ = 2ημ/(1 − μ²),
        // f₃ = 2√(η(1−η))/(1 − μ²), f₄ = 2μ√(η(1−η))/(1 − μ²).
        let (eta, mu) = (0.93f64, 0.1618f64);
        let den = 1.0 - mu * mu;
        let leak = (eta * (1.0 - eta)).sqrt();
        assert_relative_eq!(c.f1.re, (2.0 * eta - 1.0 + mu * mu) / den, epsilon = 1e-14);
        assert_relative_eq!(c.f2.re, 2.0 * eta * mu / den, epsilon = 1e-14);
        assert_relative_eq!(c.f3.re, 2.0 * leak / den, epsilon = 1e-14);
        assert_relative_eq!(c.f4.re, 2.0 * mu * leak / den, epsilon = 1e-14);
        assert!((c.commutator() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bogoliubov_singular_at_threshold() {
        assert!(matches!(bogoliubov_at(0.0, 0.9, 1.0), Err(Error::Singular(_))));
        assert!(bogoliubov_at(0.5, 0.9, 1.0).is_ok());
    }

    #[test]
    fn correlation_examples() {
        let p = typical();
        for tau in [0.0, 1e-9, 1e-6] {
            let c = pair_correlations(tau, &p, VvvvForm::Gaussian);
            assert_eq!(c.r_hhhh, 4e12);
            assert_eq!(c.r_hvhv, c.r_vhvh);
        }
        let c0 = pair_correlations(0.0, &p, VvvvForm::Gaussian);
        let d = p.derived();
        assert_relative_eq!(c0.r_hhvv, p.phi_c() * d.alpha, max_relative = 1e-15);
        assert_relative_eq!(c0.r_hvvh, c0.r_hvhv, max_relative = 1e-15);
        assert_relative_eq!(c0.r_hvvh, p.phi_c() * p.phi_s(), max_relative = 1e-12);

        let off = OpoParams::new(8e6, 0.93, 0.0, 2e6).unwrap();
        for form in [VvvvForm::Gaussian, VvvvForm::Printed] {
            let c = pair_correlations(2e-9, &off, form);
            assert_eq!(c.r_hhhh, 4e12);
            assert_eq!((c.r_hvhv, c.r_hhvv, c.r_hvvh, c.r_vvvv), (0.0, 0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn first_order_matrix() {
        let p = typical();
        let r1 = first_order(&p);
        assert_eq!(r1[0][0], 2e6);
        assert_relative_eq!(r1[1][1], 2e5, max_relative = 1e-12);
        assert_eq!((r1[0][1], r1[1][0]), (0.0, 0.0));
        let off = p.with_mu(0.0).unwrap();
        assert_eq!(first_order(&off), [[2e6, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn typical_squeezing_level() {
        let db = squeezing_db(&typical());
        assert!((db - 2.3).abs() <= 0.5, "{db}");
    }
}
