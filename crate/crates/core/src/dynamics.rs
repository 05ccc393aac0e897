//! Steady states and piecewise-constant time evolution of the master equation.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linalg::{expm, is_positive, CMatrix, DensityMatrix, Liouvillian, Lu, Operator, C64, POSITIVITY_TOL, ZERO};
use crate::model::{liouvillian_parts, DeviceModel, DriveParams, DrivenLiouvillian, Envelope, ModelKind};

/// Amplitude levels used to quantize sampled envelopes before caching propagators.
pub const AMPLITUDE_LEVELS: usize = 64;
pub const DEFAULT_SAMPLE_DT: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Segment {
    pub duration: f64,
    pub amplitude_scale: f64,
    pub phase: f64,
}

/// Piecewise-constant drive envelope. After the last segment the drive is off.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PulseSchedule {
    segments: Vec<Segment>,
    sample_dt: f64,
}

impl Default for PulseSchedule {
    fn default() -> Self {
        PulseSchedule { segments: Vec::new(), sample_dt: DEFAULT_SAMPLE_DT }
    }
}

fn check_segment(s: &Segment) -> Result<()> {
    if !(s.duration > 0.0 && s.duration.is_finite()) {
        return Err(invalid("segment durations must be positive and finite"));
    }
    if !(s.amplitude_scale >= 0.0 && s.amplitude_scale.is_finite()) || !s.phase.is_finite() {
        return Err(invalid("segment amplitude must be non-negative and phase finite"));
    }
    Ok(())
}

impl PulseSchedule {
    pub fn new(segments: Vec<Segment>, sample_dt: f64) -> Result<Self> {
        if !(sample_dt > 0.0) {
            return Err(invalid("sample_dt must be positive"));
        }
        segments.iter().try_for_each(check_segment)?;
        Ok(PulseSchedule { segments, sample_dt })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn sample_dt(&self) -> f64 {
        self.sample_dt
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn max_amplitude(&self) -> f64 {
        self.segments.iter().fold(0.0, |m, s| m.max(s.amplitude_scale))
    }

    pub fn push(&mut self, segment: Segment) -> Result<()> {
        check_segment(&segment)?;
        self.segments.push(segment);
        Ok(())
    }

    pub fn idle(&mut self, duration: f64) -> Result<()> {
        if duration == 0.0 {
            return Ok(());
        }
        self.push(Segment { duration, amplitude_scale: 0.0, phase: 0.0 })
    }

    pub fn extend(&mut self, other: &PulseSchedule) {
        self.segments.extend_from_slice(&other.segments);
    }

    /// Gaussian of width `sigma` centred in a window of length `duration`, sampled at
    /// bin centres with a bin close to `sample_dt`.
    pub fn gaussian(duration: f64, sigma: f64, peak: f64, phase: f64, sample_dt: f64) -> Result<Self> {
        if !(sigma > 0.0) || !(duration > 0.0) || !(sample_dt > 0.0) {
            return Err(invalid("gaussian pulse needs positive duration, sigma and sample_dt"));
        }
        let bins = libm::round(duration / sample_dt).max(1.0) as usize;
        let dt = duration / bins as f64;
        // Mirrored bins get bit-identical amplitudes so they share cached propagators.
        let segments = (0..bins)
            .map(|k| {
                let j = k.min(bins - 1 - k);
                let t = (j as f64 + 0.5) * dt - 0.5 * duration;
                Segment { duration: dt, amplitude_scale: peak * libm::exp(-t * t / (2.0 * sigma * sigma)), phase }
            })
            .collect();
        PulseSchedule::new(segments, sample_dt)
    }

    /// Square pulse of length `flat` with Gaussian rise and fall of width `edge_sigma`,
    /// each edge lasting `2·edge_sigma`.
    pub fn flat_top(flat: f64, edge_sigma: f64, peak: f64, phase: f64, sample_dt: f64) -> Result<Self> {
        let mut s = PulseSchedule { segments: Vec::new(), sample_dt };
        if edge_sigma > 0.0 {
            let edge = PulseSchedule::gaussian(4.0 * edge_sigma, edge_sigma, peak, phase, sample_dt)?;
            let half = edge.segments.len() / 2;
            s.segments.extend_from_slice(&edge.segments[..half]);
            if flat > 0.0 {
                s.push(Segment { duration: flat, amplitude_scale: peak, phase })?;
            }
            s.segments.extend_from_slice(&edge.segments[edge.segments.len() - half..]);
        } else if flat > 0.0 {
            s.push(Segment { duration: flat, amplitude_scale: peak, phase })?;
        }
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

/// Durations are rounded to attoseconds so repeated nominal steps share a propagator.
fn duration_key(dt: f64) -> u64 {
    libm::round(dt * 1e18) as u64
}

/// Propagates vectorized states through schedules, caching `exp(L dt)` per
/// (quantized amplitude, phase, duration).
pub struct Evolver<'a> {
    parts: &'a DrivenLiouvillian,
    cache: BTreeMap<(u64, u64, u64), CMatrix>,
    levels: usize,
}

impl<'a> Evolver<'a> {
    pub fn new(parts: &'a DrivenLiouvillian) -> Self {
        Evolver { parts, cache: BTreeMap::new(), levels: AMPLITUDE_LEVELS }
    }

    /// Use exact amplitudes instead of the quantized grid.
    pub fn without_quantization(mut self) -> Self {
        self.levels = 0;
        self
    }

    pub fn dims(&self) -> &[usize] {
        self.parts.dims()
    }

    pub fn quantize(&self, scale: f64, max_scale: f64) -> f64 {
        if self.levels < 2 || max_scale <= 0.0 {
            return scale;
        }
        let steps = (self.levels - 1) as f64;
        libm::round(scale / max_scale * steps) * max_scale / steps
    }

    /// `exp(L(scale, phase) dt)`; `scale` is used as given.
    pub fn propagator(&mut self, scale: f64, phase: f64, dt: f64) -> Result<&CMatrix> {
        let phase = if scale == 0.0 { 0.0 } else { phase };
        let dkey = duration_key(dt);
        let key = (scale.to_bits(), phase.to_bits(), dkey);
        if !self.cache.contains_key(&key) {
            let l = self.parts.at(scale, phase);
            let p = expm(&l.matrix().scale_real(dkey as f64 * 1e-18))?;
            self.cache.insert(key, p);
        }
        Ok(&self.cache[&key])
    }

    /// Evolves `v` through `schedule` and calls `on_sample(i, state)` at each of the
    /// non-decreasing `sample_times` (measured from the schedule start).
    pub fn run_vec(
        &mut self,
        schedule: &PulseSchedule,
        mut v: Vec<C64>,
        sample_times: &[f64],
        mut on_sample: impl FnMut(usize, &[C64]) -> Result<()>,
    ) -> Result<Vec<C64>> {
        if sample_times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(invalid("sample times must be finite and non-negative"));
        }
        if sample_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("sample times must be non-decreasing"));
        }
        let max_scale = schedule.max_amplitude();
        let mut boundaries = Vec::with_capacity(schedule.segments.len());
        let mut acc = 0.0;
        for s in &schedule.segments {
            acc += s.duration;
            boundaries.push(acc);
        }
        let mut t = 0.0;
        let mut seg = 0;
        for (i, &ts) in sample_times.iter().enumerate() {
            while t < ts {
                let (end, scale, phase) = if seg < schedule.segments.len() {
                    let s = &schedule.segments[seg];
                    (boundaries[seg], self.quantize(s.amplitude_scale, max_scale), s.phase)
                } else {
                    (f64::INFINITY, 0.0, 0.0)
                };
                let stop = end.min(ts);
                let step = stop - t;
                if duration_key(step) > 0 {
                    let p = self.propagator(scale, phase, step)?;
                    v = p.matvec(&v);
                }
                t = stop;
                if stop >= end {
                    seg += 1;
                }
            }
            on_sample(i, &v)?;
        }
        Ok(v)
    }

    /// Applies the whole schedule (no sampling) and returns the final state.
    pub fn apply(&mut self, schedule: &PulseSchedule, v: Vec<C64>) -> Result<Vec<C64>> {
        let total = schedule.total_duration();
        self.run_vec(schedule, v, &[total], |_, _| Ok(()))
    }

    pub fn run(&mut self, schedule: &PulseSchedule, rho0: &DensityMatrix, sample_times: &[f64]) -> Result<Trajectory> {
        if rho0.dims() != self.dims() {
            return Err(Error::DimensionMismatch { expected: self.parts.base.dim(), found: rho0.dim() });
        }
        let n = rho0.dim();
        let dims = rho0.dims().to_vec();
        let mut states = Vec::with_capacity(sample_times.len());
        self.run_vec(schedule, rho0.to_vec(), sample_times, |i, v| {
            let rho = checked_state(&dims, v, n, sample_times[i])?;
            states.push(rho);
            Ok(())
        })?;
        Ok(Trajectory { times: sample_times.to_vec(), states })
    }
}

/// Rebuilds a density matrix from a propagated vector, failing if positivity is lost.
pub fn checked_state(dims: &[usize], v: &[C64], n: usize, time: f64) -> Result<DensityMatrix> {
    let m = CMatrix::unvec(v, n);
    let herm = CMatrix::from_fn(n, n, |r, c| 0.5 * (m[(r, c)] + m[(c, r)].conj()));
    if !is_positive(&herm, POSITIVITY_TOL) {
        return Err(Error::Numerical { time, reason: "density matrix lost positivity".into() });
    }
    Ok(DensityMatrix::from_parts_unchecked(dims.to_vec(), herm))
}

/// Evolves under the full master equation with the drive described by `drive`.
/// A constant envelope keeps the drive on for all times.
pub fn evolve(device: &DeviceModel, drive: &DriveParams, rho0: &DensityMatrix, sample_times: &[f64]) -> Result<Trajectory> {
    let parts = liouvillian_parts(device, ModelKind::Full, drive.omega_d, drive.photon_flux)?;
    let mut ev = Evolver::new(&parts);
    match &drive.envelope {
        Envelope::Schedule(s) => ev.run(s, rho0, sample_times),
        Envelope::Constant => {
            let end = sample_times.last().copied().unwrap_or(0.0);
            let mut s = PulseSchedule::default();
            if end > 0.0 {
                s.push(Segment { duration: end, amplitude_scale: 1.0, phase: 0.0 })?;
            }
            ev.run(&s, rho0, sample_times)
        }
    }
}

/// Solves `L vec(ρ) = 0` with the trace condition replacing the first row.
pub fn steady_state(l: &Liouvillian) -> Result<DensityMatrix> {
    let n = l.dim();
    let nn = n * n;
    let scale = l.matrix().max_abs();
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::DegenerateSteadyState);
    }
    let mut a = l.matrix().clone();
    for c in 0..nn {
        a[(0, c)] = ZERO;
    }
    for d in 0..n {
        a[(0, d * n + d)] = C64::new(scale, 0.0);
    }
    let mut rhs = alloc::vec![ZERO; nn];
    rhs[0] = C64::new(scale, 0.0);
    let lu = Lu::factor(&a, 1e-13)?;
    let v = lu.solve(&rhs);
    let residual = l.matrix().matvec(&v).iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if !(residual <= 1e-10 * scale) {
        return Err(Error::DegenerateSteadyState);
    }
    let m = CMatrix::unvec(&v, n);
    let mut herm = CMatrix::from_fn(n, n, |r, c| 0.5 * (m[(r, c)] + m[(c, r)].conj()));
    let tr = herm.trace().re;
    herm = herm.scale_real(1.0 / tr);
    if !is_positive(&herm, POSITIVITY_TOL) {
        return Err(Error::Numerical { time: f64::INFINITY, reason: "steady state is not positive".into() });
    }
    Ok(DensityMatrix::from_parts_unchecked(l.dims().to_vec(), herm))
}

/// `Tr(op ρ)`.
pub fn expectation(rho: &DensityMatrix, op: &Operator) -> Result<C64> {
    if rho.dims() != op.dims() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), found: op.dim() });
    }
    Ok(trace_product(op.matrix(), rho.matrix()))
}

/// `Tr(A B)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.rows();
    let mut s = ZERO;
    for i in 0..n {
        for k in 0..n {
            s += a[(i, k)] * b[(k, i)];
        }
    }
    s
}

/// Row vector `r` with `r · vec(ρ) = Tr(op ρ)`.
pub fn observable_row(op: &Operator) -> Vec<C64> {
    let n = op.dim();
    let m = op.matrix();
    let mut r = alloc::vec![ZERO; n * n];
    for c in 0..n {
        for row in 0..n {
            r[c * n + row] = m[(c, row)];
        }
    }
    r
}

pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceOptions {
    pub start_qubit_levels: usize,
    pub start_jqf_levels: usize,
    pub tolerance: f64,
    pub max_levels: usize,
    /// Also refine the qubit truncation once the JQF has converged.
    pub vary_qubit: bool,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        ConvergenceOptions { start_qubit_levels: 2, start_jqf_levels: 2, tolerance: 0.005, max_levels: 8, vary_qubit: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Converged {
    pub qubit_levels: usize,
    pub jqf_levels: Option<usize>,
    pub value: f64,
}

/// Raises the JQF truncation, then the qubit truncation, until `observable` changes by
/// less than `tolerance` (relative) between consecutive levels. The reported levels are
/// the smallest ones that passed.
pub fn convergence_check(
    device: &DeviceModel,
    options: &ConvergenceOptions,
    mut observable: impl FnMut(&DeviceModel) -> Result<f64>,
) -> Result<Converged> {
    if options.start_qubit_levels < 2 || options.start_jqf_levels < 2 {
        return Err(invalid("truncation must start at 2 levels or more"));
    }
    let mut d = device.clone();
    d.qubit.levels = options.start_qubit_levels;
    if let Some(f) = d.jqf.as_mut() {
        f.levels = options.start_jqf_levels;
    }
    let close = |a: f64, b: f64| (a - b).abs() <= options.tolerance * b.abs().max(a.abs());
    let mut value = observable(&d)?;
    if d.jqf.is_some() {
        loop {
            let mut next = d.clone();
            let f = next.jqf.as_mut().expect("present");
            f.levels += 1;
            if f.levels > options.max_levels {
                return Err(Error::Truncation { max_levels: options.max_levels });
            }
            let v = observable(&next)?;
            if close(v, value) {
                break;
            }
            d = next;
            value = v;
        }
    }
    if options.vary_qubit {
        loop {
            let mut next = d.clone();
            next.qubit.levels += 1;
            if next.qubit.levels > options.max_levels {
                return Err(Error::Truncation { max_levels: options.max_levels });
            }
            let v = observable(&next)?;
            if close(v, value) {
                break;
            }
            d = next;
            value = v;
        }
    }
    Ok(Converged { qubit_levels: d.qubit.levels, jqf_levels: d.jqf.map(|f| f.levels), value })
}
