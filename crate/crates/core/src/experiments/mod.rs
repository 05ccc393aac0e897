//! Virtual experiments: decay times, Rabi oscillations and parameter sweeps.
//!
//! Frequencies and rates are angular inside the outcome structs; sweep tables carry
//! `/2π` values in Hz and times in seconds, as their column names say.

mod rb;

pub use rb::{
    clifford_group, compose, randomized_benchmarking, rb_sequence, Clifford, Gate, RbConfig, RbOutcome, GATES,
};

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::dynamics::{convergence_check, dot, observable_row, steady_state, ConvergenceOptions, Evolver, PulseSchedule, Segment};
use crate::error::{invalid, Error, Result};
use crate::fitting::{fit_damped_sinusoid, fit_exponential, FitResult};
use crate::linalg::{embed, expm, CMatrix, DensityMatrix, Liouvillian, Operator, C64, ONE, ZERO};
use crate::model::{liouvillian_parts, DeviceModel, DrivenLiouvillian, ModelKind};

const TWO_PI: f64 = 2.0 * PI;

/// Qubit-space matrix `m` lifted to the device space.
pub(crate) fn qubit_operator(device: &DeviceModel, m: CMatrix) -> Result<Operator> {
    let op = Operator::new(vec![device.qubit.levels], m)?;
    embed(&op, 0, &device.dims())
}

/// `|j⟩⟨k|` on the qubit.
pub(crate) fn qubit_ket_bra(device: &DeviceModel, j: usize, k: usize) -> Result<Operator> {
    let n = device.qubit.levels;
    let mut m = CMatrix::zeros(n, n);
    m[(j, k)] = ONE;
    qubit_operator(device, m)
}

pub(crate) fn ground_vec(device: &DeviceModel) -> Result<Vec<C64>> {
    let dims = device.dims();
    Ok(DensityMatrix::basis(&dims, &vec![0; dims.len()])?.to_vec())
}

/// Qubit in `(|0⟩ + |1⟩)/√2`, everything else in the ground state.
fn superposition_vec(device: &DeviceModel) -> Result<Vec<C64>> {
    let dims = device.dims();
    let n: usize = dims.iter().product();
    let stride = n / dims[0];
    let mut psi = vec![ZERO; n];
    let a = C64::new(core::f64::consts::FRAC_1_SQRT_2, 0.0);
    psi[0] = a;
    psi[stride] = a;
    Ok(DensityMatrix::pure(&dims, &psi)?.to_vec())
}

fn excited_vec(device: &DeviceModel) -> Result<Vec<C64>> {
    let dims = device.dims();
    let mut levels = vec![0; dims.len()];
    levels[0] = 1;
    Ok(DensityMatrix::basis(&dims, &levels)?.to_vec())
}

/// Row reading the population outside the qubit ground state.
fn excited_population_row(device: &DeviceModel) -> Result<Vec<C64>> {
    let p0 = qubit_ket_bra(device, 0, 0)?;
    let id = Operator::identity(&device.dims());
    let mut op = id;
    op.axpy(-ONE, &p0)?;
    Ok(observable_row(&op))
}

fn free_parts(device: &DeviceModel, omega_frame: f64) -> Result<DrivenLiouvillian> {
    liouvillian_parts(device, ModelKind::Full, omega_frame, 0.0)
}

fn check_delays(delays: &[f64], min_points: usize) -> Result<()> {
    if delays.len() < min_points {
        return Err(invalid(format!("need at least {min_points} delays, got {}", delays.len())));
    }
    if delays.iter().any(|t| !(*t >= 0.0 && t.is_finite())) || delays.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("delays must be finite, non-negative and strictly increasing"));
    }
    Ok(())
}

/// Samples `row · v(t)` under free evolution.
fn sample_free(parts: &DrivenLiouvillian, v0: Vec<C64>, delays: &[f64], row: &[C64]) -> Result<Vec<C64>> {
    let mut out = vec![ZERO; delays.len()];
    let mut ev = Evolver::new(parts);
    ev.run_vec(&PulseSchedule::default(), v0, delays, |i, v| {
        out[i] = dot(row, v);
        Ok(())
    })?;
    Ok(out)
}

/// Time for `|row·v(t) − row·v(∞)|` to fall below `e^{-4}` of its initial value,
/// found by repeated squaring of a short propagator.
pub fn relaxation_window(l: &Liouvillian, v0: &[C64], row: &[C64]) -> Result<f64> {
    let ss = steady_state(l)?.to_vec();
    let s_inf = dot(row, &ss);
    let s0 = (dot(row, v0) - s_inf).norm();
    if !(s0 > 0.0) {
        return Err(invalid("signal starts at its long-time value"));
    }
    let threshold = libm::exp(-4.0) * s0;
    let mut t = 1e-9;
    let mut p = expm(&l.matrix().scale_real(t))?;
    for _ in 0..48 {
        let v = p.matvec(v0);
        if (dot(row, &v) - s_inf).norm() < threshold {
            return Ok(t);
        }
        p = p.matmul(&p);
        t *= 2.0;
    }
    Err(Error::Numerical { time: t, reason: "signal does not relax".into() })
}

/// `n` evenly spaced delays from 0 to `window`.
pub fn linear_delays(window: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|k| window * k as f64 / (n - 1) as f64).collect()
}

/// One fitted decay curve.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayOutcome {
    pub delays: Vec<f64>,
    pub signal: Vec<f64>,
    pub fit: FitResult,
    /// Fitted decay time, s.
    pub time: f64,
    pub time_stderr: Option<f64>,
}

fn decay_outcome(delays: &[f64], signal: Vec<f64>, fit: FitResult) -> Result<DecayOutcome> {
    let time = fit.value("T");
    let span = delays[delays.len() - 1] - delays[0];
    if !fit.converged {
        return Err(Error::Fit(format!("{} fit did not converge", fit.model)));
    }
    if span < 3.0 * time {
        return Err(Error::Sampling(format!("delays span {span:.3e} s but the decay time is {time:.3e} s")));
    }
    let time_stderr = fit.stderr("T");
    Ok(DecayOutcome { delays: delays.to_vec(), signal, fit, time, time_stderr })
}

/// Delay window (about five decay times) for the T1 experiment.
pub fn t1_window(device: &DeviceModel) -> Result<f64> {
    let parts = free_parts(device, device.qubit.omega)?;
    Ok(1.25 * relaxation_window(&parts.base, &excited_vec(device)?, &excited_population_row(device)?)?)
}

/// Qubit prepared in `|1⟩`, excited population fitted to `A e^{-t/T} + C`.
pub fn t1_experiment(device: &DeviceModel, delays: &[f64]) -> Result<DecayOutcome> {
    check_delays(delays, 6)?;
    let parts = free_parts(device, device.qubit.omega)?;
    let row = excited_population_row(device)?;
    let signal: Vec<f64> = sample_free(&parts, excited_vec(device)?, delays, &row)?.iter().map(|z| z.re).collect();
    let fit = fit_exponential(delays, &signal)?;
    decay_outcome(delays, signal, fit)
}

/// Delay window for the coherence experiments.
pub fn coherence_window(device: &DeviceModel) -> Result<f64> {
    let parts = free_parts(device, device.qubit.omega)?;
    let row = observable_row(&qubit_ket_bra(device, 1, 0)?);
    Ok(1.25 * relaxation_window(&parts.base, &superposition_vec(device)?, &row)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RamseyOutcome {
    pub decay: DecayOutcome,
    /// Qubit frequency minus the bare `omega_q`, rad/s.
    pub freq_shift: f64,
    pub freq_shift_stderr: Option<f64>,
}

/// Free evolution of `(|0⟩+|1⟩)/√2` in a frame detuned by `artificial_detuning` below
/// the bare qubit; the fringe `½ + Re ρ₀₁` is fitted to a damped sinusoid.
pub fn ramsey_experiment(device: &DeviceModel, delays: &[f64], artificial_detuning: f64) -> Result<RamseyOutcome> {
    check_delays(delays, 10)?;
    if !(artificial_detuning > 0.0) {
        return Err(invalid("artificial detuning must be positive"));
    }
    let max_step = delays.windows(2).fold(0.0f64, |m, w| m.max(w[1] - w[0]));
    if max_step > TWO_PI / artificial_detuning / 8.0 * (1.0 + 1e-9) {
        return Err(Error::Sampling("Ramsey fringes need at least 8 delays per period".into()));
    }
    let parts = free_parts(device, device.qubit.omega - artificial_detuning)?;
    let row = observable_row(&qubit_ket_bra(device, 1, 0)?);
    let signal: Vec<f64> =
        sample_free(&parts, superposition_vec(device)?, delays, &row)?.iter().map(|z| 0.5 + z.re).collect();
    let fit = fit_damped_sinusoid(delays, &signal)?;
    let freq_shift = fit.value("Omega") - artificial_detuning;
    let freq_shift_stderr = fit.stderr("Omega");
    Ok(RamseyOutcome { decay: decay_outcome(delays, signal, fit)?, freq_shift, freq_shift_stderr })
}

/// `conj(U) ⊗ U`, the superoperator of `ρ ↦ U ρ U†`.
pub(crate) fn unitary_superop(u: &CMatrix) -> CMatrix {
    u.conj().kron(u)
}

/// Qubit π rotation exchanging `|0⟩` and `|1⟩`.
fn pi_flip(device: &DeviceModel) -> Result<CMatrix> {
    let n = device.qubit.levels;
    let mut m = CMatrix::identity(n);
    m[(0, 0)] = ZERO;
    m[(1, 1)] = ZERO;
    m[(0, 1)] = ONE;
    m[(1, 0)] = ONE;
    Ok(qubit_operator(device, m)?.into_matrix())
}

/// Hahn echo: free evolution for `τ/2`, an ideal π flip, another `τ/2`; the coherence
/// magnitude `|ρ₀₁|` is fitted to an exponential.
pub fn echo_experiment(device: &DeviceModel, delays: &[f64]) -> Result<DecayOutcome> {
    check_delays(delays, 6)?;
    let parts = free_parts(device, device.qubit.omega)?;
    let flip = unitary_superop(&pi_flip(device)?);
    // The second half acts on the readout row instead of the state, so both halves
    // advance by one cached step per delay.
    let mut state = superposition_vec(device)?;
    let mut row = observable_row(&qubit_ket_bra(device, 1, 0)?);
    let mut ev = Evolver::new(&parts);
    let mut signal = Vec::with_capacity(delays.len());
    let mut t = 0.0;
    for &tau in delays {
        let step = 0.5 * tau - t;
        if step > 0.0 {
            let p = ev.propagator(0.0, 0.0, step)?;
            state = p.matvec(&state);
            row = row_times(&row, p);
            t = 0.5 * tau;
        }
        signal.push(dot(&row, &flip.matvec(&state)).norm());
    }
    let fit = fit_exponential(delays, &signal)?;
    decay_outcome(delays, signal, fit)
}

/// `row · m`.
fn row_times(row: &[C64], m: &CMatrix) -> Vec<C64> {
    let mut out = vec![ZERO; m.cols()];
    for (r, &x) in row.iter().enumerate() {
        if x != ZERO {
            for (o, &y) in out.iter_mut().zip(m.row(r)) {
                *o += x * y;
            }
        }
    }
    out
}

/// `2√(ṅ/T1)` in rad/s.
pub fn rabi_upper_bound(photon_flux: f64, t1: f64) -> Result<f64> {
    if !(t1 > 0.0) || !(photon_flux >= 0.0) {
        return Err(invalid("upper bound needs T1 > 0 and a non-negative flux"));
    }
    Ok(2.0 * libm::sqrt(photon_flux / t1))
}

/// Nominal qubit Rabi frequency `2√(γ_ex ṅ)`.
pub fn nominal_rabi_frequency(device: &DeviceModel, photon_flux: f64) -> f64 {
    2.0 * libm::sqrt(device.qubit.gamma_ex * photon_flux)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RabiOptions {
    /// Width of the Gaussian rise and fall; 0 gives a square pulse.
    pub edge_sigma: f64,
    pub sample_dt: f64,
}

impl Default for RabiOptions {
    fn default() -> Self {
        RabiOptions { edge_sigma: 5e-9, sample_dt: 1e-9 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RabiOutcome {
    pub durations: Vec<f64>,
    pub population: Vec<f64>,
    pub fit: FitResult,
    /// rad/s
    pub rabi_freq: f64,
    /// s
    pub rabi_decay: f64,
}

impl RabiOutcome {
    /// `γ_Rabi · 2π/Ω`, the decay accumulated over one oscillation.
    pub fn error_per_cycle(&self) -> f64 {
        TWO_PI / (self.rabi_decay * self.rabi_freq)
    }
}

/// Pulse lengths covering `periods` nominal Rabi periods with `points_per_period`
/// samples each, starting after the edges.
pub fn rabi_durations(device: &DeviceModel, photon_flux: f64, periods: f64, points_per_period: usize, opts: &RabiOptions) -> Vec<f64> {
    let period = TWO_PI / nominal_rabi_frequency(device, photon_flux);
    let n = libm::ceil(periods * points_per_period as f64) as usize + 1;
    let start = 4.0 * opts.edge_sigma;
    (0..n).map(|k| start + period * k as f64 / points_per_period as f64).collect()
}

/// Drive at the bare qubit frequency with a square pulse of each total length in
/// `durations` (including Gaussian edges of `2σ` each) and read the excited population.
pub fn rabi_experiment(device: &DeviceModel, photon_flux: f64, durations: &[f64], opts: &RabiOptions) -> Result<RabiOutcome> {
    check_delays(durations, 10)?;
    if !(photon_flux > 0.0) {
        return Err(invalid("Rabi experiment needs a positive photon flux"));
    }
    let edges = 4.0 * opts.edge_sigma;
    if durations[0] < edges * (1.0 - 1e-12) {
        return Err(invalid("pulse lengths must cover both Gaussian edges"));
    }
    let period = TWO_PI / nominal_rabi_frequency(device, photon_flux);
    let max_step = durations.windows(2).fold(0.0f64, |m, w| m.max(w[1] - w[0]));
    if max_step > period / 8.0 {
        return Err(Error::Sampling(format!(
            "pulse lengths step by {max_step:.3e} s; the Rabi period {period:.3e} s needs 8 points"
        )));
    }
    let parts = liouvillian_parts(device, ModelKind::Full, device.qubit.omega, photon_flux)?;
    let mut ev = Evolver::new(&parts).without_quantization();
    let (rise, fall) = if opts.edge_sigma > 0.0 {
        let g = PulseSchedule::gaussian(edges, opts.edge_sigma, 1.0, 0.0, opts.sample_dt)?;
        let half = g.segments().len() / 2;
        let rise = PulseSchedule::new(g.segments()[..half].to_vec(), opts.sample_dt)?;
        let fall = PulseSchedule::new(g.segments()[g.segments().len() - half..].to_vec(), opts.sample_dt)?;
        (rise, fall)
    } else {
        (PulseSchedule::default(), PulseSchedule::default())
    };
    let v = ev.apply(&rise, ground_vec(device)?)?;
    let flats: Vec<f64> = durations.iter().map(|d| (d - edges).max(0.0)).collect();
    let mut flat = PulseSchedule::default();
    let longest = flats[flats.len() - 1];
    if longest > 0.0 {
        flat.push(Segment { duration: longest, amplitude_scale: 1.0, phase: 0.0 })?;
    }
    let mut states = Vec::with_capacity(flats.len());
    ev.run_vec(&flat, v, &flats, |_, v| {
        states.push(v.to_vec());
        Ok(())
    })?;
    let row = excited_population_row(device)?;
    let mut population = Vec::with_capacity(states.len());
    for s in states {
        let v = ev.apply(&fall, s)?;
        population.push(dot(&row, &v).re);
    }
    let fit = fit_damped_sinusoid(durations, &population)?;
    if !fit.converged {
        return Err(Error::Fit("Rabi fit did not converge".into()));
    }
    let rabi_freq = fit.value("Omega");
    let rabi_decay = fit.value("T");
    Ok(RabiOutcome { durations: durations.to_vec(), population, fit, rabi_freq, rabi_decay })
}

/// Per-point table of a sweep; failed points keep NaN values and an error message.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepResult {
    pub axis_name: String,
    pub axis: Vec<f64>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub errors: Vec<Option<String>>,
}

impl SweepResult {
    pub fn new(axis_name: &str, columns: &[&str]) -> Self {
        SweepResult {
            axis_name: axis_name.to_string(),
            axis: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            errors: Vec::new(),
        }
    }

    pub fn push(&mut self, x: f64, row: Result<Vec<f64>>) {
        self.axis.push(x);
        match row {
            Ok(r) => {
                debug_assert_eq!(r.len(), self.columns.len());
                self.rows.push(r);
                self.errors.push(None);
            }
            Err(e) => {
                self.rows.push(vec![f64::NAN; self.columns.len()]);
                self.errors.push(Some(e.to_string()));
            }
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

fn or_nan(x: Option<f64>) -> f64 {
    x.unwrap_or(f64::NAN)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetuningOptions {
    /// Delays per decay curve.
    pub points: usize,
    /// Ramsey fringes across the delay window.
    pub ramsey_fringes: f64,
}

impl Default for DetuningOptions {
    fn default() -> Self {
        DetuningOptions { points: 161, ramsey_fringes: 8.0 }
    }
}

pub const DETUNING_COLUMNS: [&str; 11] = [
    "t1_s",
    "t1_stderr_s",
    "t2e_s",
    "t2e_stderr_s",
    "t2star_s",
    "t2star_stderr_s",
    "p_th",
    "freq_shift_hz",
    "freq_shift_stderr_hz",
    "gamma_ex_hz",
    "gamma_ex_stderr_hz",
];

/// Drive-free steady-state population outside the qubit ground state.
pub fn thermal_population(device: &DeviceModel) -> Result<f64> {
    let parts = free_parts(device, device.qubit.omega)?;
    let rho = steady_state(&parts.base)?;
    Ok(dot(&excited_population_row(device)?, &rho.to_vec()).re)
}

/// Qubit relaxation rate with its own intrinsic loss and dephasing switched off, rad/s.
pub fn external_rate(device: &DeviceModel, points: usize) -> Result<(f64, Option<f64>)> {
    let mut d = device.clone();
    d.qubit.gamma_in = 0.0;
    d.qubit.gamma_phi = 0.0;
    let t1 = t1_experiment(&d, &linear_delays(t1_window(&d)?, points))?;
    let rate = 1.0 / t1.time;
    Ok((rate, t1.time_stderr.map(|s| rate * s / t1.time)))
}

/// One row of [`DETUNING_COLUMNS`] for a JQF at `omega_q + detuning`.
pub fn detuning_point(device: &DeviceModel, detuning: f64, opts: &DetuningOptions) -> Result<Vec<f64>> {
    let d = device.with_jqf_detuning(detuning);
    let t1 = t1_experiment(&d, &linear_delays(t1_window(&d)?, opts.points))?;
    let coh = coherence_window(&d)?;
    let echo_window = coh.max(2.0 * t1_window(&d)?);
    let echo = echo_experiment(&d, &linear_delays(echo_window, opts.points))?;
    let art = opts.ramsey_fringes * TWO_PI / coh;
    let ramsey = ramsey_experiment(&d, &linear_delays(coh, opts.points), art)?;
    let p_th = thermal_population(&d)?;
    let (gex, gex_se) = external_rate(&d, opts.points)?;
    Ok(vec![
        t1.time,
        or_nan(t1.time_stderr),
        echo.time,
        or_nan(echo.time_stderr),
        ramsey.decay.time,
        or_nan(ramsey.decay.time_stderr),
        p_th,
        ramsey.freq_shift / TWO_PI,
        or_nan(ramsey.freq_shift_stderr) / TWO_PI,
        gex / TWO_PI,
        or_nan(gex_se) / TWO_PI,
    ])
}

/// T1, T2E, T2*, thermal population, frequency shift and `γ_ex` against JQF detuning
/// (rad/s). Failed points are recorded and the sweep continues.
pub fn sweep_detuning(device: &DeviceModel, detunings: &[f64], opts: &DetuningOptions) -> Result<SweepResult> {
    if device.jqf.is_none() {
        return Err(invalid("detuning sweep needs a JQF"));
    }
    let mut out = SweepResult::new("detuning_hz", &DETUNING_COLUMNS);
    for &det in detunings {
        out.push(det / TWO_PI, detuning_point(device, det, opts));
    }
    Ok(out)
}

/// Shape of a dip in a sampled curve.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dip {
    /// Axis value and curve value at the sampled minimum.
    pub min_at: f64,
    pub min_value: f64,
    /// Largest sampled value.
    pub baseline: f64,
    /// Interpolated crossings of `(baseline + min_value)/2` on either side.
    pub left: f64,
    pub right: f64,
}

impl Dip {
    pub fn fwhm(&self) -> f64 {
        self.right - self.left
    }

    pub fn centre(&self) -> f64 {
        0.5 * (self.left + self.right)
    }
}

/// Locates the minimum of `values` over the increasing `axis` and its half-depth
/// width; `None` if either half-depth crossing falls outside the samples. NaN points
/// are skipped.
pub fn dip_width(axis: &[f64], values: &[f64]) -> Option<Dip> {
    let pts: Vec<(f64, f64)> = axis.iter().zip(values).filter(|(_, v)| v.is_finite()).map(|(a, v)| (*a, *v)).collect();
    let (k, &(min_at, min_value)) = pts.iter().enumerate().min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))?;
    let baseline = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let half = 0.5 * (baseline + min_value);
    let cross = |a: (f64, f64), b: (f64, f64)| a.0 + (half - a.1) * (b.0 - a.0) / (b.1 - a.1);
    let left = (1..=k).rev().find(|&i| pts[i - 1].1 >= half).map(|i| cross(pts[i - 1], pts[i]))?;
    let right = (k..pts.len() - 1).find(|&i| pts[i + 1].1 >= half).map(|i| cross(pts[i], pts[i + 1]))?;
    Some(Dip { min_at, min_value, baseline, left, right })
}

/// Rabi window in nominal periods and samples per period.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RabiWindow {
    pub periods: f64,
    pub points_per_period: usize,
}

impl Default for RabiWindow {
    fn default() -> Self {
        RabiWindow { periods: 40.0, points_per_period: 16 }
    }
}

pub const AMPLITUDE_COLUMNS: [&str; 5] = ["rabi_freq_hz", "rabi_decay_s", "error_per_cycle", "nominal_rabi_hz", "sqrt_flux"];

fn rabi_row(device: &DeviceModel, flux: f64, window: &RabiWindow, opts: &RabiOptions) -> Result<RabiOutcome> {
    let durations = rabi_durations(device, flux, window.periods, window.points_per_period, opts);
    rabi_experiment(device, flux, &durations, opts)
}

pub fn amplitude_point(device: &DeviceModel, flux: f64, window: &RabiWindow, opts: &RabiOptions) -> Result<Vec<f64>> {
    let r = rabi_row(device, flux, window, opts)?;
    Ok(vec![
        r.rabi_freq / TWO_PI,
        r.rabi_decay,
        r.error_per_cycle(),
        nominal_rabi_frequency(device, flux) / TWO_PI,
        libm::sqrt(flux),
    ])
}

/// Rabi frequency and decay time against photon flux (photons/s).
pub fn sweep_amplitude(device: &DeviceModel, fluxes: &[f64], window: &RabiWindow, opts: &RabiOptions) -> SweepResult {
    let mut out = SweepResult::new("photon_flux", &AMPLITUDE_COLUMNS);
    for &flux in fluxes {
        out.push(flux, amplitude_point(device, flux, window, opts));
    }
    out
}

pub const TRADEOFF_COLUMNS: [&str; 5] = ["t1_s", "rabi_freq_hz", "rabi_decay_s", "upper_bound_hz", "exceeds_bound"];

/// Rabi frequency at fixed flux against the T1 set by the JQF detuning.
pub fn tradeoff_point(
    device: &DeviceModel,
    detuning: f64,
    flux: f64,
    window: &RabiWindow,
    opts: &RabiOptions,
    points: usize,
) -> Result<Vec<f64>> {
    let d = device.with_jqf_detuning(detuning);
    let t1 = t1_experiment(&d, &linear_delays(t1_window(&d)?, points))?.time;
    let r = rabi_row(&d, flux, window, opts)?;
    let bound = rabi_upper_bound(flux, t1)?;
    Ok(vec![t1, r.rabi_freq / TWO_PI, r.rabi_decay, bound / TWO_PI, if r.rabi_freq > bound { 1.0 } else { 0.0 }])
}

pub fn tradeoff(
    device: &DeviceModel,
    detunings: &[f64],
    flux: f64,
    window: &RabiWindow,
    opts: &RabiOptions,
    points: usize,
) -> SweepResult {
    let mut out = SweepResult::new("detuning_hz", &TRADEOFF_COLUMNS);
    for &det in detunings {
        out.push(det / TWO_PI, tradeoff_point(device, det, flux, window, opts, points));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnharmonicityOptions {
    pub window: RabiWindow,
    pub convergence: ConvergenceOptions,
}

impl Default for AnharmonicityOptions {
    fn default() -> Self {
        AnharmonicityOptions {
            window: RabiWindow { periods: 100.0, points_per_period: 20 },
            convergence: ConvergenceOptions {
                start_qubit_levels: 2,
                start_jqf_levels: 4,
                // ε varies by only ~0.5% across the optimum in α_f
                tolerance: 2e-4,
                max_levels: 20,
                vary_qubit: false,
            },
        }
    }
}

pub const ANHARMONICITY_COLUMNS: [&str; 4] = ["rabi_freq_hz", "rabi_decay_s", "error_per_cycle", "jqf_levels"];

#[derive(Clone, Debug, PartialEq)]
pub struct AnharmonicityResult {
    pub sweep: SweepResult,
    /// Same drive without the JQF.
    pub no_jqf: RabiOutcome,
    /// Same drive with a two-level JQF.
    pub two_level: RabiOutcome,
}

/// Stationary (square) drive: the Rabi window starts with the drive already on.
const STATIONARY: RabiOptions = RabiOptions { edge_sigma: 0.0, sample_dt: 1e-9 };

/// One α_f point with the JQF truncation raised until the Rabi decay time settles.
pub fn anharmonicity_point(base: &DeviceModel, alpha: f64, flux: f64, opts: &AnharmonicityOptions) -> Result<Vec<f64>> {
    let mut d = base.clone();
    let f = d.jqf.as_mut().ok_or_else(|| invalid("anharmonicity sweep needs a JQF"))?;
    f.alpha = alpha;
    let mut runs: Vec<(usize, RabiOutcome)> = Vec::new();
    let conv = convergence_check(&d, &opts.convergence, |dev| {
        let r = rabi_row(dev, flux, &opts.window, &STATIONARY)?;
        let decay = r.rabi_decay;
        runs.push((dev.jqf.map_or(0, |f| f.levels), r));
        Ok(decay)
    })?;
    let levels = conv.jqf_levels.unwrap_or(0);
    let (_, r) = runs.into_iter().find(|(n, _)| *n == levels).ok_or_else(|| invalid("converged run missing"))?;
    Ok(vec![r.rabi_freq / TWO_PI, r.rabi_decay, r.error_per_cycle(), or_nan(conv.jqf_levels.map(|n| n as f64))])
}

/// Rabi frequency, decay and error per cycle against the JQF anharmonicity (rad/s), with
/// the no-JQF and two-level-JQF references at the same flux.
pub fn sweep_anharmonicity(base: &DeviceModel, alphas: &[f64], flux: f64, opts: &AnharmonicityOptions) -> Result<AnharmonicityResult> {
    let (no_jqf, two_level) = anharmonicity_references(base, flux, opts)?;
    let mut sweep = SweepResult::new("alpha_hz", &ANHARMONICITY_COLUMNS);
    for &a in alphas {
        sweep.push(a / TWO_PI, anharmonicity_point(base, a, flux, opts));
    }
    Ok(AnharmonicityResult { sweep, no_jqf, two_level })
}

pub fn anharmonicity_references(base: &DeviceModel, flux: f64, opts: &AnharmonicityOptions) -> Result<(RabiOutcome, RabiOutcome)> {
    let f = base.jqf.ok_or_else(|| invalid("anharmonicity sweep needs a JQF"))?;
    let no_jqf = rabi_row(&base.without_jqf(), flux, &opts.window, &STATIONARY)?;
    let mut two = base.clone();
    two.jqf = Some(crate::model::TransmonParams { levels: 2, ..f });
    let two_level = rabi_row(&two, flux, &opts.window, &STATIONARY)?;
    Ok((no_jqf, two_level))
}
