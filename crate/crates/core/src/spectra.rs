//! Reflection coefficients seen from the control line, and power conversions.

use alloc::vec::Vec;

use crate::dynamics::{expectation, steady_state};
use crate::error::{invalid, Error, Result};
use crate::linalg::{annihilation, C64, I, ONE};
use crate::model::{single_transmon_parts, TransmonParams};

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054571817e-34;

/// Readout resonator; the resonance sits at `omega_r + chi` with the qubit in the
/// ground state and at `omega_r - chi` in the excited state.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ResonatorParams {
    pub omega_r: f64,
    pub kappa_ex: f64,
    pub kappa_in: f64,
    pub chi: f64,
}

impl ResonatorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_r > 0.0) || !(self.kappa_ex >= 0.0) || !(self.kappa_in >= 0.0) || !self.chi.is_finite() {
            return Err(invalid("resonator needs omega_r > 0, non-negative kappas and finite chi"));
        }
        Ok(())
    }
}

/// Complex samples on a strictly increasing angular-frequency grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTrace {
    pub frequencies: Vec<f64>,
    pub values: Vec<C64>,
}

impl ComplexTrace {
    pub fn new(frequencies: Vec<f64>, values: Vec<C64>) -> Result<Self> {
        if frequencies.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: frequencies.len(), found: values.len() });
        }
        if frequencies.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("trace frequencies must be strictly increasing"));
        }
        Ok(ComplexTrace { frequencies, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `S11 = 1 − i √(γ_ex/ṅ) c ⟨b⟩_ss` from the steady state of one transmon driven through
/// the line; `cos_factor` is `cos θ` at the transmon position (1 at the open end).
pub fn reflection_numeric(t: &TransmonParams, cos_factor: f64, omega_probe: f64, photon_flux: f64) -> Result<C64> {
    if !(photon_flux > 0.0) {
        return Err(invalid("reflection needs a positive photon flux"));
    }
    let parts = single_transmon_parts(t, cos_factor, omega_probe, photon_flux)?;
    let rho = steady_state(&parts.at(1.0, 0.0))?;
    let b = annihilation(t.levels)?;
    let mean_b = expectation(&rho, &b)?;
    // The drive carries |c|; the sign of c cancels between drive and output.
    let c = cos_factor.abs();
    Ok(ONE - I * (libm::sqrt(t.gamma_ex / photon_flux) * c) * mean_b)
}

/// Two-level rates `(γ_1, γ_2, n_eff)`. Dephasing enters as `γ_φ D(b†b)`, which damps
/// coherences at `γ_φ/2`.
pub fn two_level_rates(t: &TransmonParams) -> (f64, f64, f64) {
    let gamma_1 = t.gamma_ex + (2.0 * t.n_th + 1.0) * t.gamma_in;
    let gamma_2 = 0.5 * gamma_1 + 0.5 * t.gamma_phi;
    let total = t.gamma_ex + t.gamma_in;
    let n_eff = if total > 0.0 { t.gamma_in * t.n_th / total } else { 0.0 };
    (gamma_1, gamma_2, n_eff)
}

/// `γ_eff = γ_ex / (2 n_eff + 1)`.
pub fn effective_rate(t: &TransmonParams) -> f64 {
    let (_, _, n_eff) = two_level_rates(t);
    t.gamma_ex / (2.0 * n_eff + 1.0)
}

/// Closed-form steady-state reflection of a two-level qubit at the open end.
pub fn reflection_qubit_analytic(t: &TransmonParams, omega_probe: f64, photon_flux: f64) -> C64 {
    let (g1, g2, n_eff) = two_level_rates(t);
    let x = (omega_probe - t.omega) / g2;
    let sat = if g1 > 0.0 { 4.0 * t.gamma_ex * photon_flux / (g1 * g2) } else { f64::INFINITY };
    let pre = t.gamma_ex / ((2.0 * n_eff + 1.0) * g2);
    ONE - C64::new(1.0, x) * (pre / (1.0 + x * x + sat))
}

/// Weak-probe reflection `1 − γ_eff/(γ_2 − i(ω − ω_q))`.
pub fn reflection_qubit_weak(omega_q: f64, gamma_eff: f64, gamma_2: f64, omega_probe: f64) -> C64 {
    ONE - C64::new(gamma_eff, 0.0) / C64::new(gamma_2, -(omega_probe - omega_q))
}

/// Bare resonator reflection `−((κ_ex−κ_in)/2 + iΔ)/((κ_ex+κ_in)/2 − iΔ)`.
pub fn resonator_reflection_bare(omega_res: f64, kappa_ex: f64, kappa_in: f64, omega_probe: f64) -> C64 {
    let d = omega_probe - omega_res;
    -C64::new(0.5 * (kappa_ex - kappa_in), d) / C64::new(0.5 * (kappa_ex + kappa_in), -d)
}

/// Resonator reflection averaged over the qubit being in the ground (weight `1 − p_th`)
/// or excited (weight `p_th`) state.
pub fn resonator_reflection(res: &ResonatorParams, p_th: f64, omega_probe: f64) -> Result<C64> {
    if !(0.0..=1.0).contains(&p_th) {
        return Err(invalid("thermal population must lie in [0, 1]"));
    }
    Ok(resonator_mixture(res, p_th, omega_probe))
}

pub(crate) fn resonator_mixture(res: &ResonatorParams, p_th: f64, omega_probe: f64) -> C64 {
    let g = resonator_reflection_bare(res.omega_r + res.chi, res.kappa_ex, res.kappa_in, omega_probe);
    let e = resonator_reflection_bare(res.omega_r - res.chi, res.kappa_ex, res.kappa_in, omega_probe);
    g * (1.0 - p_th) + e * p_th
}

/// Photon flux `P/(ħω)` for a power in dBm.
pub fn photon_flux_from_dbm(power_dbm: f64, omega: f64) -> f64 {
    let watts = 1e-3 * libm::pow(10.0, power_dbm / 10.0);
    watts / (HBAR * omega)
}

pub fn dbm_from_photon_flux(photon_flux: f64, omega: f64) -> f64 {
    10.0 * libm::log10(photon_flux * HBAR * omega / 1e-3)
}

/// `ħω(γ_ex+γ_in)²/(4γ_ex)` in dBm.
pub fn single_photon_power_dbm(omega: f64, gamma_ex: f64, gamma_in: f64) -> Result<f64> {
    if !(gamma_ex > 0.0) {
        return Err(invalid("single-photon power needs gamma_ex > 0"));
    }
    let s = gamma_ex + gamma_in;
    let watts = HBAR * omega * s * s / (4.0 * gamma_ex);
    Ok(10.0 * libm::log10(watts / 1e-3))
}

/// External rate from an effective rate and the measured thermal population:
/// `n_eff = p/(1−2p)`, `γ_ex = (2 n_eff + 1) γ_eff`.
pub fn effective_rate_correction(p_th: f64, gamma_eff: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&p_th) {
        return Err(invalid("thermal population must lie in [0, 0.5)"));
    }
    let n_eff = p_th / (1.0 - 2.0 * p_th);
    Ok((2.0 * n_eff + 1.0) * gamma_eff)
}
