//! Figures of merit for one operating point.
//!
//! `w2` is the concurrence-weighted pair flux `∫ dτ Tr[R⁽²⁾(τ)]·C(τ)`,
//! labelled ebit/s following the usual convention for this quantity even
//! though it is not an entropy of entanglement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opo::{pair_correlations, OpoParams, VvvvForm};
use crate::quad::{integrate_with_breaks, Estimate, QuadConfig};
use crate::two_photon::{build_odm, chsh_max, concurrence, TwoPhotonOdm};

/// Coincidence windows wider than this fraction of `1/δν` trigger a warning.
pub const NARROW_WINDOW_LIMIT: f64 = 0.1;

/// Reference pairs-to-singles ratio of an ideal pair source.
pub const IDEAL_PAIR_SOURCE_RPS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxMetrics {
    /// Concurrence flux W⁽²⁾, ebit/s.
    pub w2: f64,
    /// Coincidence rate Φ_Δτ within the window, 1/s.
    pub pair_rate: f64,
    /// Bell figure of merit ΔS²·Φ_Δτ, 1/s.
    pub beta_fom: f64,
    pub r_ps: f64,
    /// W⁽²⁾ per MHz of cavity bandwidth, pairs/(s·MHz).
    pub spectral_brightness: f64,
    /// Error estimate on `w2`, including the truncated tail.
    pub integ_error: f64,
}

/// Trace of R⁽²⁾(τ) times the concurrence at τ.
pub fn concurrence_flux_density(tau: f64, params: &OpoParams, form: VvvvForm) -> Result<f64> {
    let corr = pair_correlations(tau, params, form);
    let trace = corr.trace();
    if trace == 0.0 {
        return Ok(0.0);
    }
    let odm = build_odm(&corr)?;
    Ok(trace * concurrence(&odm)?.value)
}

/// W⁽²⁾ = ∫ dτ Tr[R⁽²⁾(τ)]·C(τ), evaluated as twice the half-line integral
/// up to `quad.tau_cutoff / (δν(1 − μ))`.
///
/// The reported error adds a bound on the truncated tail: the integrand
/// never exceeds `2R_HHVV(τ) ≤ 2Φ_Cα e^{−δν(1−μ)|τ|}`.
pub fn concurrence_flux(params: &OpoParams, quad: &QuadConfig, form: VvvvForm) -> Result<Estimate> {
    quad.validate()?;
    if params.mu() == 0.0 {
        return Ok(Estimate::ZERO);
    }
    let rate = params.delta_nu() * (1.0 - params.mu());
    let cutoff = quad.tau_cutoff / rate;
    let mut breaks = vec![0.0];
    let mut x = cutoff / 1024.0;
    while x < cutoff {
        breaks.push(x);
        x *= 2.0;
    }
    breaks.push(cutoff);
    // Errors inside the integrand surface after integration.
    let failure = std::cell::RefCell::new(None);
    let half = integrate_with_breaks(
        |tau| match concurrence_flux_density(tau, params, form) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert_with(|| e.to_string());
                f64::NAN
            }
        },
        &breaks,
        quad,
    );
    if let Some(msg) = failure.into_inner() {
        return Err(Error::Accuracy(format!("concurrence-flux integrand failed: {msg}")));
    }
    let half = half?;
    let alpha = params.derived().alpha;
    let tail = 2.0 * params.phi_c() * alpha * (-quad.tau_cutoff).exp() / rate;
    Ok(Estimate {
        value: 2.0 * half.value,
        abs_err: 2.0 * (half.abs_err + tail),
    })
}

/// `Tr[R⁽²⁾(0)]·Δτ`, the rate of pairs inside a coincidence window.
pub fn pair_rate(params: &OpoParams, delta_tau: f64, form: VvvvForm) -> Result<f64> {
    if !(delta_tau >= 0.0 && delta_tau.is_finite()) {
        return Err(Error::Domain(format!("coincidence window must be >= 0, got {delta_tau}")));
    }
    if !window_is_narrow(params, delta_tau) {
        log::warn!(
            "coincidence window {delta_tau:e} s is not small against 1/delta_nu = {:e} s",
            1.0 / params.delta_nu()
        );
    }
    Ok(pair_correlations(0.0, params, form).trace() * delta_tau)
}

pub fn window_is_narrow(params: &OpoParams, delta_tau: f64) -> bool {
    delta_tau * params.delta_nu() <= NARROW_WINDOW_LIMIT
}

/// `max(0, ΔS)²·rate` for a given state.
pub fn bell_fom_for_state(odm: &TwoPhotonOdm, pair_rate: f64) -> f64 {
    let ds = chsh_max(odm).delta_s;
    if ds <= 0.0 {
        0.0
    } else {
        ds * ds * pair_rate
    }
}

/// Bell figure of merit `β = max(0, ΔS)²·Φ_Δτ`, with ΔS taken from the ODM
/// at delay `state_tau` (zero by convention: the detected pairs sit well
/// inside the coherence time when `Δτ ≪ 1/δν`).
pub fn bell_fom(params: &OpoParams, delta_tau: f64, state_tau: f64, form: VvvvForm) -> Result<f64> {
    let rate = pair_rate(params, delta_tau, form)?;
    let corr = pair_correlations(state_tau, params, form);
    if corr.trace() == 0.0 {
        return Ok(0.0);
    }
    Ok(bell_fom_for_state(&build_odm(&corr)?, rate))
}

/// `R_P/S = W⁽²⁾/(Φ_S + Φ_C)`.
pub fn pairs_to_singles(params: &OpoParams, quad: &QuadConfig, form: VvvvForm) -> Result<f64> {
    let singles = params.phi_s() + params.phi_c();
    if !(singles > 0.0) {
        return Err(Error::Domain("pairs-to-singles ratio needs a non-zero total flux".into()));
    }
    Ok(concurrence_flux(params, quad, form)?.value / singles)
}

/// W⁽²⁾ per MHz of δν.
pub fn spectral_brightness(params: &OpoParams, quad: &QuadConfig, form: VvvvForm) -> Result<f64> {
    Ok(concurrence_flux(params, quad, form)?.value / (params.delta_nu() * 1e-6))
}

/// Every figure of merit at once, sharing one W⁽²⁾ integral.
pub fn flux_metrics(
    params: &OpoParams,
    delta_tau: f64,
    state_tau: f64,
    quad: &QuadConfig,
    form: VvvvForm,
) -> Result<FluxMetrics> {
    let w2 = concurrence_flux(params, quad, form)?;
    let rate = pair_rate(params, delta_tau, form)?;
    let beta_fom = bell_fom(params, delta_tau, state_tau, form)?;
    let singles = params.phi_s() + params.phi_c();
    let r_ps = if singles > 0.0 { w2.value / singles } else { 0.0 };
    Ok(FluxMetrics {
        w2: w2.value,
        pair_rate: rate,
        beta_fom,
        r_ps,
        spectral_brightness: w2.value / (params.delta_nu() * 1e-6),
        integ_error: w2.abs_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn typical() -> OpoParams {
        OpoParams::from_flux(8e6, 0.93, 2e5, 2e6).unwrap()
    }

    #[test]
    fn unpumped_source_has_no_flux() {
        let p = typical().with_mu(0.0).unwrap();
        let q = QuadConfig::default();
        assert_eq!(concurrence_flux(&p, &q, VvvvForm::Gaussian).unwrap(), Estimate::ZERO);
        assert_eq!(pairs_to_singles(&p, &q, VvvvForm::Gaussian).unwrap(), 0.0);
        assert_eq!(spectral_brightness(&p, &q, VvvvForm::Gaussian).unwrap(), 0.0);
        assert_eq!(bell_fom(&p, 1e-9, 0.0, VvvvForm::Gaussian).unwrap(), 0.0);
        assert_relative_eq!(pair_rate(&p, 1e-9, VvvvForm::Gaussian).unwrap(), 4e12 * 1e-9);
    }

    #[test]
    fn no_coherent_beam_means_no_entanglement() {
        let p = typical().with_phi_c(0.0).unwrap();
        for k in 0..50 {
            let tau = k as f64 * 2e-9;
            let corr = pair_correlations(tau, &p, VvvvForm::Gaussian);
            let odm = build_odm(&corr).unwrap();
            assert_eq!(concurrence(&odm).unwrap().value, 0.0);
        }
        let w = concurrence_flux(&p, &QuadConfig::default(), VvvvForm::Gaussian).unwrap();
        assert_eq!(w.value, 0.0);
    }

    #[test]
    fn pair_rate_examples() {
        let p = typical();
        let c0 = pair_correlations(0.0, &p, VvvvForm::Gaussian);
        let expected = p.phi_c().powi(2) + 2.0 * p.phi_c() * p.phi_s() + c0.r_vvvv;
        assert_relative_eq!(
            pair_rate(&p, 1e-9, VvvvForm::Gaussian).unwrap(),
            expected * 1e-9,
            max_relative = 1e-12
        );
        assert_eq!(pair_rate(&p, 0.0, VvvvForm::Gaussian).unwrap(), 0.0);
        assert!(pair_rate(&p, -1.0, VvvvForm::Gaussian).is_err());
        assert!(window_is_narrow(&p, 1e-9));
        assert!(!window_is_narrow(&p, 1e-7));
    }

    #[test]
    fn bell_state_envelope() {
        let bell = TwoPhotonOdm::bell_phi_plus();
        let rate = 123.0;
        let expected = (2.0 * 2f64.sqrt() - 2.0).powi(2) * rate;
        assert_relative_eq!(bell_fom_for_state(&bell, rate), expected, max_relative = 1e-12);
        assert_eq!(bell_fom_for_state(&TwoPhotonOdm::basis_state(0), rate), 0.0);
    }

    #[test]
    fn typical_point_figures() {
        let p = typical();
        let q = QuadConfig::default();
        let m = flux_metrics(&p, 1e-9, 0.0, &q, VvvvForm::Gaussian).unwrap();
        assert!(m.w2 > 0.0 && m.beta_fom > 0.0);
        assert!(m.integ_error < 1e-6 * m.w2);
        assert!(m.r_ps < IDEAL_PAIR_SOURCE_RPS);
        assert_relative_eq!(m.spectral_brightness, m.w2 / 8.0, max_relative = 1e-15);
    }

    #[test]
    fn half_line_doubling_matches_full_line() {
        let p = typical();
        let q = QuadConfig::default();
        let half = concurrence_flux(&p, &q, VvvvForm::Gaussian).unwrap();
        let cut = q.tau_cutoff / (p.delta_nu() * (1.0 - p.mu()));
        let breaks: Vec<f64> = (-8..=8).map(|k| cut * k as f64 / 8.0).collect();
        let full = integrate_with_breaks(
            |t| concurrence_flux_density(t, &p, VvvvForm::Gaussian).unwrap(),
            &breaks,
            &q,
        )
        .unwrap();
        assert!((full.value - half.value).abs() <= full.abs_err + half.abs_err + 1e-9 * half.value);
    }

    #[test]
    fn flux_bounded_by_total_pair_flux() {
        let p = typical();
        let q = QuadConfig::default();
        let w = concurrence_flux(&p, &q, VvvvForm::Gaussian).unwrap();
        let cut = q.tau_cutoff / (p.delta_nu() * (1.0 - p.mu()));
        let total = crate::quad::integrate(
            |t| pair_correlations(t, &p, VvvvForm::Gaussian).trace(),
            0.0,
            cut,
            &q,
        )
        .unwrap();
        assert!(w.value <= 2.0 * total.value);
    }

    #[test]
    fn zero_total_flux_is_a_domain_error() {
        let p = OpoParams::new(8e6, 0.93, 0.0, 0.0).unwrap();
        assert!(matches!(
            pairs_to_singles(&p, &QuadConfig::default(), VvvvForm::Gaussian),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn brightness_recomputes_identically() {
        let q = QuadConfig::default();
        let p = typical();
        let doubled = OpoParams::new(16e6, 0.93, p.mu(), p.phi_c()).unwrap();
        let a = spectral_brightness(&doubled, &q, VvvvForm::Gaussian).unwrap();
        let b = spectral_brightness(&doubled, &q, VvvvForm::Gaussian).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        let base = spectral_brightness(&p, &q, VvvvForm::Gaussian).unwrap();
        assert!(a > 0.0 && base > 0.0);
    }
}
