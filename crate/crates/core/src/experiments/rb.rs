//! Single-qubit Clifford randomized benchmarking with Gaussian π and π/2 pulses.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ground_vec, qubit_ket_bra, qubit_operator, unitary_superop};
use crate::dynamics::{dot, observable_row, Evolver, PulseSchedule};
use crate::error::{invalid, Error, Result};
use crate::fitting::{fit_rb_decay, FitResult};
use crate::linalg::{commutator_superop, CMatrix, C64, ONE, ZERO};
use crate::model::{
    drive_hamiltonian_phased, liouvillian_parts, system_hamiltonian, DeviceModel, DrivenLiouvillian, ModelKind,
};

/// Physical pulses: rotations by π or π/2 about an equatorial axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Gate {
    X,
    Y,
    X2,
    MX2,
    Y2,
    MY2,
}

pub const GATES: [Gate; 6] = [Gate::X, Gate::Y, Gate::X2, Gate::MX2, Gate::Y2, Gate::MY2];

impl Gate {
    /// (rotation angle, drive phase)
    pub fn rotation(self) -> (f64, f64) {
        match self {
            Gate::X => (PI, 0.0),
            Gate::Y => (PI, 0.5 * PI),
            Gate::X2 => (0.5 * PI, 0.0),
            Gate::MX2 => (0.5 * PI, PI),
            Gate::Y2 => (0.5 * PI, 0.5 * PI),
            Gate::MY2 => (0.5 * PI, 1.5 * PI),
        }
    }

    fn index(self) -> usize {
        GATES.iter().position(|g| *g == self).expect("listed")
    }

    /// `cos(θ/2) I − i sin(θ/2)(cos φ X + sin φ Y)`, row-major.
    pub fn unitary(self) -> [C64; 4] {
        let (theta, phi) = self.rotation();
        let c = libm::cos(0.5 * theta);
        let s = libm::sin(0.5 * theta);
        let off = C64::new(0.0, -s) * C64::from_polar(1.0, -phi);
        let off_t = C64::new(0.0, -s) * C64::from_polar(1.0, phi);
        [C64::new(c, 0.0), off, off_t, C64::new(c, 0.0)]
    }
}

/// `a · b` for row-major 2×2 matrices.
pub fn compose(a: &[C64; 4], b: &[C64; 4]) -> [C64; 4] {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

fn same_up_to_phase(a: &[C64; 4], b: &[C64; 4]) -> bool {
    let overlap = a[0].conj() * b[0] + a[1].conj() * b[1] + a[2].conj() * b[2] + a[3].conj() * b[3];
    overlap.norm() > 2.0 - 1e-9
}

fn adjoint(a: &[C64; 4]) -> [C64; 4] {
    [a[0].conj(), a[2].conj(), a[1].conj(), a[3].conj()]
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clifford {
    /// Applied first to last.
    pub gates: Vec<Gate>,
    pub unitary: [C64; 4],
}

/// The 24 single-qubit Cliffords, each as a shortest pulse sequence, found breadth first.
pub fn clifford_group() -> Vec<Clifford> {
    let id = [ONE, ZERO, ZERO, ONE];
    let mut group = vec![Clifford { gates: Vec::new(), unitary: id }];
    let mut frontier = vec![0usize];
    while group.len() < 24 && !frontier.is_empty() {
        let mut next = Vec::new();
        for &k in &frontier {
            for g in GATES {
                let u = compose(&g.unitary(), &group[k].unitary);
                if !group.iter().any(|c| same_up_to_phase(&c.unitary, &u)) {
                    let mut gates = group[k].gates.clone();
                    gates.push(g);
                    group.push(Clifford { gates, unitary: u });
                    next.push(group.len() - 1);
                }
            }
        }
        frontier = next;
    }
    group
}

fn find(group: &[Clifford], u: &[C64; 4]) -> Option<usize> {
    group.iter().position(|c| same_up_to_phase(&c.unitary, u))
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RbConfig {
    pub sequence_lengths: Vec<usize>,
    pub sequences_per_length: usize,
    /// s
    pub pulse_sigma: f64,
    /// The pulse spans `±pulse_truncation·σ`.
    pub pulse_truncation: f64,
    /// Slot length per pulse in units of the pulse duration.
    pub pulse_interval_factor: f64,
    pub rng_seed: u64,
    pub sample_dt: f64,
}

impl Default for RbConfig {
    fn default() -> Self {
        RbConfig {
            sequence_lengths: vec![1, 2, 4, 7, 12, 20, 35, 60, 100, 150, 200],
            sequences_per_length: 30,
            pulse_sigma: 5e-9,
            pulse_truncation: 2.0,
            pulse_interval_factor: 2.0,
            rng_seed: 1,
            sample_dt: 1e-9,
        }
    }
}

impl RbConfig {
    pub fn pulse_duration(&self) -> f64 {
        2.0 * self.pulse_truncation * self.pulse_sigma
    }

    pub fn slot(&self) -> f64 {
        self.pulse_interval_factor * self.pulse_duration()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sequence_lengths.is_empty() || self.sequence_lengths.iter().any(|m| *m < 1) {
            return Err(invalid("sequence lengths must be at least 1"));
        }
        if self.sequences_per_length < 1 {
            return Err(invalid("need at least one sequence per length"));
        }
        if !(self.pulse_sigma > 0.0) || !(self.pulse_truncation > 0.0) || !(self.sample_dt > 0.0) {
            return Err(invalid("pulse sigma, truncation and sample_dt must be positive"));
        }
        if !(self.pulse_interval_factor >= 1.0) {
            return Err(invalid("pulse interval factor must be at least 1"));
        }
        Ok(())
    }
}

/// Clifford indices of one sequence, recovery Clifford last. Each sequence draws from
/// its own ChaCha stream, so sequences do not depend on each other.
pub fn rb_sequence(group: &[Clifford], cfg: &RbConfig, length_index: usize, sequence_index: usize) -> Result<Vec<usize>> {
    let m = *cfg.sequence_lengths.get(length_index).ok_or_else(|| invalid("length index out of range"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    rng.set_stream((length_index * cfg.sequences_per_length + sequence_index) as u64);
    let mut seq = Vec::with_capacity(m + 1);
    let mut total = group[0].unitary;
    for _ in 0..m {
        let k = rng.gen_range(0..group.len());
        total = compose(&group[k].unitary, &total);
        seq.push(k);
    }
    let inv = find(group, &adjoint(&total)).ok_or_else(|| Error::Numerical { time: 0.0, reason: "Clifford table is not closed".into() })?;
    seq.push(inv);
    Ok(seq)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RbOutcome {
    pub lengths: Vec<usize>,
    pub survival: Vec<f64>,
    pub coherence_survival: Vec<f64>,
    pub fit: FitResult,
    pub coherence_fit: FitResult,
    pub avg_gate_error: f64,
    pub coherence_limit: f64,
    /// Calibrated π-pulse peak `√ṅ`, √(photons/s).
    pub pi_amplitude: f64,
}

/// Coherent part of the drive on an isolated copy of the qubit.
fn isolated_parts(device: &DeviceModel) -> Result<DrivenLiouvillian> {
    let d = DeviceModel::qubit_only(device.qubit.lossless());
    let w = d.qubit.omega;
    Ok(DrivenLiouvillian {
        base: commutator_superop(&system_hamiltonian(&d, w)?)?,
        drive_x: commutator_superop(&drive_hamiltonian_phased(&d, w, 1.0, 0.0)?)?,
        drive_y: commutator_superop(&drive_hamiltonian_phased(&d, w, 1.0, 0.5 * PI)?)?,
    })
}

fn pulse(cfg: &RbConfig, peak: f64, phase: f64) -> Result<PulseSchedule> {
    PulseSchedule::gaussian(cfg.pulse_duration(), cfg.pulse_sigma, peak, phase, cfg.sample_dt)
}

/// Product of the propagators of `schedule`, first segment rightmost.
fn schedule_superop(ev: &mut Evolver, schedule: &PulseSchedule, n: usize) -> Result<CMatrix> {
    let mut m = CMatrix::identity(n);
    for s in schedule.segments() {
        m = ev.propagator(s.amplitude_scale, s.phase, s.duration)?.matmul(&m);
    }
    Ok(m)
}

/// Peak `√ṅ` of the π pulse maximizing the `|1⟩` population of an isolated, lossless
/// copy of the qubit (golden-section search around the pulse-area estimate).
pub fn calibrate_pi_amplitude(device: &DeviceModel, cfg: &RbConfig) -> Result<f64> {
    let parts = isolated_parts(device)?;
    let d = DeviceModel::qubit_only(device.qubit);
    let row = observable_row(&qubit_ket_bra(&d, 1, 1)?);
    let v0 = ground_vec(&d)?;
    let unit = pulse(cfg, 1.0, 0.0)?;
    let area: f64 = unit.segments().iter().map(|s| s.amplitude_scale * s.duration).sum();
    let estimate = PI / (2.0 * libm::sqrt(device.qubit.gamma_ex) * area);
    let population = |a: f64| -> Result<f64> {
        let mut ev = Evolver::new(&parts).without_quantization();
        let v = ev.apply(&pulse(cfg, a, 0.0)?, v0.clone())?;
        Ok(dot(&row, &v).re)
    };
    let golden = 0.5 * (libm::sqrt(5.0) - 1.0);
    let (mut lo, mut hi) = (0.5 * estimate, 1.5 * estimate);
    let mut x1 = hi - golden * (hi - lo);
    let mut x2 = lo + golden * (hi - lo);
    let mut f1 = population(x1)?;
    let mut f2 = population(x2)?;
    while hi - lo > 1e-10 * estimate {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + golden * (hi - lo);
            f2 = population(x2)?;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - golden * (hi - lo);
            f1 = population(x1)?;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Embeds a 2×2 qubit unitary on levels 0 and 1 of the qubit, identity elsewhere.
fn ideal_gate(device: &DeviceModel, u: &[C64; 4]) -> Result<CMatrix> {
    let n = device.qubit.levels;
    let mut m = CMatrix::identity(n);
    m[(0, 0)] = u[0];
    m[(0, 1)] = u[1];
    m[(1, 0)] = u[2];
    m[(1, 1)] = u[3];
    Ok(qubit_operator(device, m)?.into_matrix())
}

/// Slot superoperators for the six pulses: driven by the calibrated Gaussian, and the
/// ideal instantaneous rotation at mid-pulse with free evolution around it.
fn gate_superops(device: &DeviceModel, cfg: &RbConfig, amp_pi: f64) -> Result<(Vec<CMatrix>, Vec<CMatrix>)> {
    let parts = liouvillian_parts(device, ModelKind::Full, device.qubit.omega, 1.0)?;
    let n = parts.base.dim();
    let mut ev = Evolver::new(&parts).without_quantization();
    let dur = cfg.pulse_duration();
    let idle = cfg.slot() - dur;
    let mut real = Vec::with_capacity(GATES.len());
    let mut ideal = Vec::with_capacity(GATES.len());
    let before = ev.propagator(0.0, 0.0, 0.5 * dur)?.clone();
    let after = ev.propagator(0.0, 0.0, cfg.slot() - 0.5 * dur)?.clone();
    for g in GATES {
        let (theta, phase) = g.rotation();
        let mut s = pulse(cfg, amp_pi * theta / PI, phase)?;
        s.idle(idle)?;
        real.push(schedule_superop(&mut ev, &s, n * n)?);
        let u = unitary_superop(&ideal_gate(device, &g.unitary())?);
        ideal.push(after.matmul(&u.matmul(&before)));
    }
    Ok((real, ideal))
}

fn survival(seq: &[usize], group: &[Clifford], gates: &[CMatrix], v0: &[C64], row: &[C64]) -> f64 {
    let mut v = v0.to_vec();
    for &k in seq {
        for g in &group[k].gates {
            v = gates[g.index()].matvec(&v);
        }
    }
    dot(row, &v).re
}

/// Standard single-qubit RB: mean ground-state survival per length fitted to
/// `A p^m + B`, `r = (1 − p)/2`. The coherence limit reruns the same sequences with
/// ideal rotations and only the free evolution of the same schedule.
pub fn randomized_benchmarking(device: &DeviceModel, cfg: &RbConfig) -> Result<RbOutcome> {
    cfg.validate()?;
    device.validate()?;
    let group = clifford_group();
    let amp_pi = calibrate_pi_amplitude(device, cfg)?;
    let (real, ideal) = gate_superops(device, cfg, amp_pi)?;
    let v0 = ground_vec(device)?;
    let row = observable_row(&qubit_ket_bra(device, 0, 0)?);
    let mut surv = Vec::with_capacity(cfg.sequence_lengths.len());
    let mut coh = Vec::with_capacity(cfg.sequence_lengths.len());
    for li in 0..cfg.sequence_lengths.len() {
        let (mut a, mut b) = (0.0, 0.0);
        for si in 0..cfg.sequences_per_length {
            let seq = rb_sequence(&group, cfg, li, si)?;
            a += survival(&seq, &group, &real, &v0, &row);
            b += survival(&seq, &group, &ideal, &v0, &row);
        }
        surv.push(a / cfg.sequences_per_length as f64);
        coh.push(b / cfg.sequences_per_length as f64);
    }
    let m: Vec<f64> = cfg.sequence_lengths.iter().map(|v| *v as f64).collect();
    let fit = fit_rb_decay(&m, &surv)?;
    let coherence_fit = fit_rb_decay(&m, &coh)?;
    Ok(RbOutcome {
        lengths: cfg.sequence_lengths.clone(),
        avg_gate_error: fit.value("r"),
        coherence_limit: coherence_fit.value("r"),
        survival: surv,
        coherence_survival: coh,
        fit,
        coherence_fit,
        pi_amplitude: amp_pi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TransmonParams;

    #[test]
    fn group_has_24_distinct_elements() {
        let g = clifford_group();
        assert_eq!(g.len(), 24);
        for i in 0..24 {
            for j in 0..i {
                assert!(!same_up_to_phase(&g[i].unitary, &g[j].unitary));
            }
        }
        let pulses: usize = g.iter().map(|c| c.gates.len()).sum();
        assert_eq!(pulses, 44);
    }

    #[test]
    fn sequences_invert_to_identity() {
        let g = clifford_group();
        let cfg = RbConfig::default();
        for li in 0..3 {
            let seq = rb_sequence(&g, &cfg, li, 7).unwrap();
            let mut u = g[0].unitary;
            for k in &seq {
                u = compose(&g[*k].unitary, &u);
            }
            assert!(same_up_to_phase(&u, &g[0].unitary));
        }
    }

    #[test]
    fn sequences_are_reproducible() {
        let g = clifford_group();
        let cfg = RbConfig::default();
        assert_eq!(rb_sequence(&g, &cfg, 4, 3).unwrap(), rb_sequence(&g, &cfg, 4, 3).unwrap());
        assert_ne!(rb_sequence(&g, &cfg, 4, 3).unwrap(), rb_sequence(&g, &cfg, 4, 4).unwrap());
    }

    #[test]
    fn pulse_rotation_matches_ideal_on_two_levels() {
        let q = TransmonParams::from_hz(8.0e9, -0.3e9, 123e3, 0.0, 0.0, 0.0, 2);
        let d = DeviceModel::qubit_only(q);
        let cfg = RbConfig::default();
        let amp = calibrate_pi_amplitude(&d, &cfg).unwrap();
        let parts = isolated_parts(&d).unwrap();
        let mut ev = Evolver::new(&parts).without_quantization();
        for g in GATES {
            let (theta, phase) = g.rotation();
            let s = pulse(&cfg, amp * theta / PI, phase).unwrap();
            let real = schedule_superop(&mut ev, &s, 4).unwrap();
            let ideal = unitary_superop(&ideal_gate(&d, &g.unitary()).unwrap());
            let diff = (&real - &ideal).max_abs();
            // a maximum only fixes the amplitude to about √ε
            assert!(diff < 1e-7, "{g:?}: {diff}");
        }
    }

    #[test]
    fn decoherence_free_error_is_tiny() {
        let q = TransmonParams::from_hz(8.0e9, -0.3e9, 123e3, 0.0, 0.0, 0.0, 2);
        let mut d = DeviceModel::qubit_only(q);
        // radiative decay switched off, drive coupling kept
        let cfg = RbConfig { sequence_lengths: vec![1, 5, 20, 50], sequences_per_length: 5, ..Default::default() };
        let amp = calibrate_pi_amplitude(&d, &cfg).unwrap();
        let parts = isolated_parts(&d).unwrap();
        let mut ev = Evolver::new(&parts).without_quantization();
        let group = clifford_group();
        let mut gates = Vec::new();
        for g in GATES {
            let (theta, phase) = g.rotation();
            let mut s = pulse(&cfg, amp * theta / PI, phase).unwrap();
            s.idle(cfg.slot() - cfg.pulse_duration()).unwrap();
            gates.push(schedule_superop(&mut ev, &s, 4).unwrap());
        }
        d.qubit.levels = 2;
        let v0 = ground_vec(&d).unwrap();
        let row = observable_row(&qubit_ket_bra(&d, 0, 0).unwrap());
        for li in 0..cfg.sequence_lengths.len() {
            let seq = rb_sequence(&group, &cfg, li, 0).unwrap();
            let s = survival(&seq, &group, &gates, &v0, &row);
            assert!(1.0 - s < 1e-4 * cfg.sequence_lengths[li] as f64, "{s}");
        }
    }
}
