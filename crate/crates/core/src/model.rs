//! Physical model of a qubit at the open end of a waveguide with a JQF a distance `d` away.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::dynamics::PulseSchedule;
use crate::error::{invalid, Result};
use crate::linalg::{
    annihilation, commutator_superop, dissipator_matrix, embed, Liouvillian, Operator, C64, I, ONE,
};
use crate::spectra::ResonatorParams;

const TWO_PI: f64 = 2.0 * PI;

/// One transmon. Frequencies and rates are angular (rad/s).
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransmonParams {
    pub omega: f64,
    pub alpha: f64,
    pub gamma_ex: f64,
    pub gamma_in: f64,
    pub gamma_phi: f64,
    pub n_th: f64,
    pub levels: usize,
}

impl TransmonParams {
    /// Builds from `/2π` values in Hz.
    pub fn from_hz(
        freq_hz: f64,
        alpha_hz: f64,
        gamma_ex_hz: f64,
        gamma_in_hz: f64,
        gamma_phi_hz: f64,
        n_th: f64,
        levels: usize,
    ) -> Self {
        TransmonParams {
            omega: TWO_PI * freq_hz,
            alpha: TWO_PI * alpha_hz,
            gamma_ex: TWO_PI * gamma_ex_hz,
            gamma_in: TWO_PI * gamma_in_hz,
            gamma_phi: TWO_PI * gamma_phi_hz,
            n_th,
            levels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.omega, self.alpha, self.gamma_ex, self.gamma_in, self.gamma_phi, self.n_th];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(invalid("transmon parameters must be finite"));
        }
        if !(self.omega > 0.0) {
            return Err(invalid("transmon frequency must be positive"));
        }
        if self.alpha > 0.0 || self.alpha.abs() >= self.omega {
            return Err(invalid("anharmonicity must satisfy -omega < alpha <= 0"));
        }
        if self.gamma_ex < 0.0 || self.gamma_in < 0.0 || self.gamma_phi < 0.0 || self.n_th < 0.0 {
            return Err(invalid("rates and thermal quanta must be non-negative"));
        }
        if self.levels < 2 {
            return Err(invalid("transmon truncation needs at least 2 levels"));
        }
        Ok(())
    }

    /// Same transmon without intrinsic loss, dephasing or thermal excitation.
    pub fn lossless(&self) -> Self {
        TransmonParams { gamma_in: 0.0, gamma_phi: 0.0, n_th: 0.0, ..*self }
    }
}

/// Qubit at `r = 0`, JQF at `r = d`; phases follow `θ(ω) = 2π d_frac ω/ω_ref`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WaveguideGeometry {
    pub d_frac: f64,
    pub omega_ref: f64,
}

impl WaveguideGeometry {
    pub fn new(d_frac: f64, omega_ref: f64) -> Self {
        WaveguideGeometry { d_frac, omega_ref }
    }

    pub fn theta(&self, omega: f64) -> f64 {
        TWO_PI * self.d_frac * omega / self.omega_ref
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d_frac > 0.0 && self.d_frac.is_finite()) || !(self.omega_ref > 0.0 && self.omega_ref.is_finite()) {
            return Err(invalid("geometry needs d_frac > 0 and a positive reference frequency"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Envelope {
    Constant,
    Schedule(PulseSchedule),
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DriveParams {
    pub omega_d: f64,
    /// Photons per second at unit amplitude scale.
    pub photon_flux: f64,
    pub envelope: Envelope,
}

impl DriveParams {
    pub fn constant(omega_d: f64, photon_flux: f64) -> Self {
        DriveParams { omega_d, photon_flux, envelope: Envelope::Constant }
    }

    /// No drive; `omega_frame` only sets the rotating frame.
    pub fn frame(omega_frame: f64) -> Self {
        Self::constant(omega_frame, 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CouplingRates {
    pub j: C64,
    pub gamma_qq: f64,
    pub gamma_ff: f64,
    pub gamma_qf: C64,
    pub gamma_bright: f64,
    pub gamma_dark: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DeviceModel {
    pub qubit: TransmonParams,
    pub jqf: Option<TransmonParams>,
    pub geometry: WaveguideGeometry,
    pub resonator: Option<ResonatorParams>,
}

impl DeviceModel {
    pub fn qubit_only(qubit: TransmonParams) -> Self {
        DeviceModel { qubit, jqf: None, geometry: WaveguideGeometry::new(0.5, qubit.omega), resonator: None }
    }

    pub fn dims(&self) -> Vec<usize> {
        match &self.jqf {
            Some(f) => vec![self.qubit.levels, f.levels],
            None => vec![self.qubit.levels],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.qubit.validate()?;
        if let Some(f) = &self.jqf {
            f.validate()?;
            self.geometry.validate()?;
        }
        if let Some(r) = &self.resonator {
            r.validate()?;
        }
        Ok(())
    }

    pub fn coupling_rates(&self) -> Option<CouplingRates> {
        self.jqf.as_ref().map(|f| coupling_rates(&self.qubit, f, &self.geometry))
    }

    /// Copy with the JQF frequency set to `omega_q + detuning`.
    pub fn with_jqf_detuning(&self, detuning: f64) -> Self {
        let mut d = self.clone();
        if let Some(f) = d.jqf.as_mut() {
            f.omega = self.qubit.omega + detuning;
        }
        d
    }

    pub fn without_jqf(&self) -> Self {
        DeviceModel { jqf: None, ..self.clone() }
    }

    /// Annihilation operators of the qubit and (if present) the JQF on the composite space.
    pub fn lowering_operators(&self) -> Result<(Operator, Option<Operator>)> {
        let dims = self.dims();
        let bq = embed(&annihilation(self.qubit.levels)?, 0, &dims)?;
        let bf = match &self.jqf {
            Some(f) => Some(embed(&annihilation(f.levels)?, 1, &dims)?),
            None => None,
        };
        Ok((bq, bf))
    }
}

fn bright_dark_rates(gqq: f64, gff: f64, gqf: C64) -> (f64, f64) {
    let mean = 0.5 * (gqq + gff);
    let half = 0.5 * (gqq - gff);
    let root = libm::sqrt(half * half + gqf.norm_sqr());
    (mean + root, mean - root)
}

pub fn coupling_rates(qubit: &TransmonParams, jqf: &TransmonParams, geometry: &WaveguideGeometry) -> CouplingRates {
    let tq = geometry.theta(qubit.omega);
    let tf = geometry.theta(jqf.omega);
    let g = libm::sqrt(qubit.gamma_ex * jqf.gamma_ex);
    let ef = C64::new(0.0, tf).exp();
    let eq = C64::new(0.0, -tq).exp();
    let j = (ef - eq) / (I * 2.0) * (0.5 * g);
    let gamma_qf = (ef + eq) * (0.5 * g);
    let c = libm::cos(tf);
    let gamma_qq = qubit.gamma_ex;
    let gamma_ff = jqf.gamma_ex * c * c;
    let (gamma_bright, gamma_dark) = bright_dark_rates(gamma_qq, gamma_ff, gamma_qf);
    CouplingRates { j, gamma_qq, gamma_ff, gamma_qf, gamma_bright, gamma_dark }
}

/// Normalized `(qubit, JQF)` coefficients of the bright and dark modes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BrightDark {
    pub bright: [C64; 2],
    pub dark: [C64; 2],
    pub gamma_bright: f64,
    pub gamma_dark: f64,
    /// Set when the decay matrix is proportional to the identity and the modes are arbitrary.
    pub degenerate: bool,
}

pub fn bright_dark_modes(rates: &CouplingRates) -> Result<BrightDark> {
    let (gqq, gff, gqf) = (rates.gamma_qq, rates.gamma_ff, rates.gamma_qf);
    let scale = gqq.abs().max(gff.abs()).max(gqf.norm());
    if gqf.norm_sqr() > gqq * gff + 1e-9 * scale * scale {
        return Err(invalid("decay matrix is not positive semidefinite"));
    }
    let (gb, gd) = bright_dark_rates(gqq, gff, gqf);
    if gqf.norm() <= 1e-15 * scale && (gqq - gff).abs() <= 1e-15 * scale {
        return Ok(BrightDark {
            bright: [ONE, C64::new(0.0, 0.0)],
            dark: [C64::new(0.0, 0.0), ONE],
            gamma_bright: gb,
            gamma_dark: gd,
            degenerate: true,
        });
    }
    let mode = |lambda: f64| -> [C64; 2] {
        // Two equivalent forms of the conjugated eigenvector; take the better conditioned one.
        let a = [C64::new(lambda - gff, 0.0), gqf];
        let b = [gqf.conj(), C64::new(lambda - gqq, 0.0)];
        let na = libm::sqrt(a[0].norm_sqr() + a[1].norm_sqr());
        let nb = libm::sqrt(b[0].norm_sqr() + b[1].norm_sqr());
        if na >= nb {
            [a[0] / na, a[1] / na]
        } else {
            [b[0] / nb, b[1] / nb]
        }
    };
    Ok(BrightDark { bright: mode(gb), dark: mode(gd), gamma_bright: gb, gamma_dark: gd, degenerate: false })
}

fn transmon_hamiltonian(t: &TransmonParams, b: &Operator, omega_frame: f64) -> Result<Operator> {
    let bd = b.dag();
    let n = bd.mul(b)?;
    let mut h = n.scale_real(t.omega - omega_frame);
    let kerr = bd.mul(&bd)?.mul(b)?.mul(b)?;
    h.axpy(ONE * (0.5 * t.alpha), &kerr)?;
    Ok(h)
}

/// `Σ (ω_n − ω) b†b + (α_n/2) b†²b²` in the frame rotating at `omega_frame`.
pub fn system_hamiltonian(device: &DeviceModel, omega_frame: f64) -> Result<Operator> {
    let (bq, bf) = device.lowering_operators()?;
    let mut h = transmon_hamiltonian(&device.qubit, &bq, omega_frame)?;
    if let (Some(f), Some(bf)) = (&device.jqf, &bf) {
        h = h.add(&transmon_hamiltonian(f, bf, omega_frame)?)?;
    }
    Ok(h)
}

/// `e^{iφ} b† + e^{-iφ} b`
fn quadrature(b: &Operator, phase: f64) -> Result<Operator> {
    let e = C64::new(0.0, phase).exp();
    b.dag().scale(e).add(&b.scale(e.conj()))
}

/// Drive term at unit amplitude scale and the given phase.
pub fn drive_hamiltonian_phased(device: &DeviceModel, omega_d: f64, photon_flux: f64, phase: f64) -> Result<Operator> {
    if !(photon_flux >= 0.0) {
        return Err(invalid("photon flux must be non-negative"));
    }
    let (bq, bf) = device.lowering_operators()?;
    let mut h = quadrature(&bq, phase)?.scale_real(libm::sqrt(device.qubit.gamma_ex * photon_flux));
    if let (Some(f), Some(bf)) = (&device.jqf, &bf) {
        let c = libm::cos(device.geometry.theta(omega_d));
        h.axpy(ONE * (c * libm::sqrt(f.gamma_ex * photon_flux)), &quadrature(bf, phase)?)?;
    }
    Ok(h)
}

/// `√(γ_q ṅ)(b_q† + b_q) + √(γ_f ṅ) cos θ(ω_d) (b_f† + b_f)`
pub fn drive_hamiltonian(device: &DeviceModel, drive: &DriveParams) -> Result<Operator> {
    drive_hamiltonian_phased(device, drive.omega_d, drive.photon_flux, 0.0)
}

/// `J b_q† b_f + J* b_f† b_q`; zero without a JQF.
pub fn effective_coupling_hamiltonian(device: &DeviceModel) -> Result<Operator> {
    let (bq, bf) = device.lowering_operators()?;
    match (device.coupling_rates(), bf) {
        (Some(r), Some(bf)) => {
            let a = bq.dag().mul(&bf)?.scale(r.j);
            a.add(&a.dag())
        }
        _ => Ok(Operator::zeros(&device.dims())),
    }
}

fn intrinsic_dissipators(l: &mut Liouvillian, t: &TransmonParams, b: &Operator) -> Result<()> {
    if t.gamma_in > 0.0 {
        let down = dissipator_matrix(b, b)?;
        l.axpy(t.gamma_in * (1.0 + t.n_th), &down)?;
        if t.n_th > 0.0 {
            let bd = b.dag();
            l.axpy(t.gamma_in * t.n_th, &dissipator_matrix(&bd, &bd)?)?;
        }
    }
    if t.gamma_phi > 0.0 {
        let n = b.dag().mul(b)?;
        l.axpy(t.gamma_phi, &dissipator_matrix(&n, &n)?)?;
    }
    Ok(())
}

/// Liouvillian split as `base + s (cos φ · drive_x + sin φ · drive_y)` for a drive of
/// amplitude scale `s` and phase `φ`.
#[derive(Clone, Debug)]
pub struct DrivenLiouvillian {
    pub base: Liouvillian,
    pub drive_x: Liouvillian,
    pub drive_y: Liouvillian,
}

impl DrivenLiouvillian {
    pub fn at(&self, scale: f64, phase: f64) -> Liouvillian {
        let mut l = self.base.clone();
        if scale != 0.0 {
            let (s, c) = (libm::sin(phase), libm::cos(phase));
            // Exact zeros keep the cardinal phases free of round-off.
            let c = if c.abs() < 1e-15 { 0.0 } else { c };
            let s = if s.abs() < 1e-15 { 0.0 } else { s };
            if c != 0.0 {
                l.axpy(scale * c, &self.drive_x).expect("same dims");
            }
            if s != 0.0 {
                l.axpy(scale * s, &self.drive_y).expect("same dims");
            }
        }
        l
    }

    pub fn dims(&self) -> &[usize] {
        self.base.dims()
    }
}

/// Which master equation to assemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ModelKind {
    #[default]
    Full,
    TwoLevelApprox,
}

pub fn liouvillian_parts(device: &DeviceModel, kind: ModelKind, omega_d: f64, photon_flux: f64) -> Result<DrivenLiouvillian> {
    match kind {
        ModelKind::Full => full_parts(device, omega_d, photon_flux),
        ModelKind::TwoLevelApprox => two_level_parts(device, omega_d, photon_flux),
    }
}

fn full_parts(device: &DeviceModel, omega_d: f64, photon_flux: f64) -> Result<DrivenLiouvillian> {
    device.validate()?;
    let (bq, bf) = device.lowering_operators()?;
    let h = system_hamiltonian(device, omega_d)?.add(&effective_coupling_hamiltonian(device)?)?;
    let mut base = commutator_superop(&h)?;
    match (device.coupling_rates(), &bf) {
        (Some(r), Some(bf)) => {
            base.axpy(r.gamma_qq, &dissipator_matrix(&bq, &bq)?)?;
            base.axpy(r.gamma_ff, &dissipator_matrix(bf, bf)?)?;
            base.axpy_complex(r.gamma_qf, &dissipator_matrix(&bq, bf)?)?;
            base.axpy_complex(r.gamma_qf.conj(), &dissipator_matrix(bf, &bq)?)?;
        }
        _ => base.axpy(device.qubit.gamma_ex, &dissipator_matrix(&bq, &bq)?)?,
    }
    intrinsic_dissipators(&mut base, &device.qubit, &bq)?;
    if let (Some(f), Some(bf)) = (&device.jqf, &bf) {
        intrinsic_dissipators(&mut base, f, bf)?;
    }
    let drive_x = commutator_superop(&drive_hamiltonian_phased(device, omega_d, photon_flux, 0.0)?)?;
    let drive_y = commutator_superop(&drive_hamiltonian_phased(device, omega_d, photon_flux, PI / 2.0)?)?;
    Ok(DrivenLiouvillian { base, drive_x, drive_y })
}

/// Master equation of the qubit and JQF, in the frame rotating at the drive frequency.
pub fn full_liouvillian(device: &DeviceModel, drive: &DriveParams) -> Result<Liouvillian> {
    Ok(full_parts(device, drive.omega_d, drive.photon_flux)?.at(1.0, 0.0))
}

/// True when the JQF sits half a qubit wavelength away and is resonant with the qubit.
pub fn is_ideal_geometry(device: &DeviceModel) -> bool {
    match &device.jqf {
        Some(f) => {
            let q = &device.qubit;
            (f.omega - q.omega).abs() <= 1e-12 * q.omega
                && (device.geometry.d_frac - 0.5).abs() <= 1e-12
                && (device.geometry.omega_ref - q.omega).abs() <= 1e-12 * q.omega
        }
        None => false,
    }
}

fn two_level_parts(device: &DeviceModel, omega_d: f64, photon_flux: f64) -> Result<DrivenLiouvillian> {
    device.validate()?;
    if !is_ideal_geometry(device) {
        return Err(invalid("the two-level approximation needs a resonant JQF at d = λ_q/2"));
    }
    if !(photon_flux >= 0.0) {
        return Err(invalid("photon flux must be non-negative"));
    }
    let q = TransmonParams { levels: 2, alpha: 0.0, ..device.qubit };
    let f = TransmonParams { levels: 2, alpha: 0.0, ..device.jqf.expect("checked above") };
    let two = DeviceModel { qubit: q, jqf: Some(f), ..device.clone() };
    let (sq, sf) = two.lowering_operators()?;
    let sf = sf.expect("JQF present");
    // 1 + σ_z^f = 2 |e⟩⟨e|_f
    let proj_e = sf.dag().mul(&sf)?.scale_real(2.0);

    let h = system_hamiltonian(&two, omega_d)?;
    let mut base = commutator_superop(&h)?;
    let mut c = sf.scale_real(libm::sqrt(f.gamma_ex));
    c.axpy(-ONE * libm::sqrt(q.gamma_ex), &proj_e.mul(&sq)?)?;
    base.add_assign(&dissipator_matrix(&c, &c)?)?;
    intrinsic_dissipators(&mut base, &q, &sq)?;
    intrinsic_dissipators(&mut base, &f, &sf)?;

    let drive = |phase: f64| -> Result<Liouvillian> {
        let omega_q = 2.0 * libm::sqrt(q.gamma_ex * photon_flux);
        let omega_f = 2.0 * libm::sqrt(f.gamma_ex * photon_flux);
        let mut h = quadrature(&sf, phase)?.scale_real(-0.5 * omega_f);
        h.axpy(ONE * (0.5 * omega_q), &proj_e.mul(&quadrature(&sq, phase)?)?)?;
        commutator_superop(&h)
    };
    Ok(DrivenLiouvillian { base, drive_x: drive(0.0)?, drive_y: drive(PI / 2.0)? })
}

/// Approximate model of a two-level qubit and two-level JQF in the ideal geometry:
/// one collapse operator `√γ_f σ_f − √γ_q (1+σ_z^f) σ_q` and the drive
/// `−(Ω_f/2)σ_x^f + (Ω_q/2)(1+σ_z^f)σ_x^q`. Intrinsic channels, if any, are kept per transmon.
pub fn two_level_approx_liouvillian(device: &DeviceModel, drive: &DriveParams) -> Result<Liouvillian> {
    Ok(two_level_parts(device, drive.omega_d, drive.photon_flux)?.at(1.0, 0.0))
}

/// Single transmon with its coupling scaled by the geometric factor `cos_factor`
/// (1 at the open end).
pub fn single_transmon_parts(t: &TransmonParams, cos_factor: f64, omega_d: f64, photon_flux: f64) -> Result<DrivenLiouvillian> {
    t.validate()?;
    let scaled = TransmonParams { gamma_ex: t.gamma_ex * cos_factor * cos_factor, ..*t };
    full_parts(&DeviceModel::qubit_only(scaled), omega_d, photon_flux)
}
