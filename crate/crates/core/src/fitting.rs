//! Damped least squares and the fit models used on simulated traces.
//!
//! Every parameter is moved in a rescaled coordinate `x = offset + scale * u`, so that
//! rates of 1e5 rad/s and resonances of 1e10 rad/s are stepped with comparable care.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::linalg::{C64, ONE};
use crate::spectra::{resonator_reflection_bare, reflection_qubit_weak};

pub const MAX_ITERATIONS: usize = 500;
pub const STEP_TOL: f64 = 1e-10;
pub const COST_TOL: f64 = 1e-12;

/// One fitted value; `stderr` is only filled in for converged fits.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitParam {
    pub name: String,
    pub value: f64,
    pub stderr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitResult {
    pub model: String,
    pub params: Vec<FitParam>,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|p| p.name == name).map(|p| p.value)
    }

    pub fn stderr(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|p| p.name == name).and_then(|p| p.stderr)
    }

    pub fn values(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.value).collect()
    }

    /// Value of a parameter that the model is known to produce.
    pub fn value(&self, name: &str) -> f64 {
        self.get(name).unwrap_or(f64::NAN)
    }

    fn push_derived(&mut self, name: &str, value: f64, stderr: Option<f64>) {
        self.params.push(FitParam { name: name.to_string(), value, stderr: if self.converged { stderr } else { None } });
    }
}

/// Search box and typical magnitude of one parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bound {
    pub lower: f64,
    pub upper: f64,
    pub scale: f64,
}

impl Bound {
    pub fn free(scale: f64) -> Self {
        Bound { lower: f64::NEG_INFINITY, upper: f64::INFINITY, scale }
    }

    pub fn positive(scale: f64) -> Self {
        Bound { lower: 0.0, upper: f64::INFINITY, scale }
    }

    pub fn within(lower: f64, upper: f64, scale: f64) -> Self {
        Bound { lower, upper, scale }
    }

    fn clamp(&self, x: f64) -> f64 {
        x.max(self.lower).min(self.upper)
    }
}

/// Raw outcome of [`least_squares`].
#[derive(Clone, Debug, PartialEq)]
pub struct LsqOutcome {
    pub x: Vec<f64>,
    /// Diagonal of `s² (JᵀJ)⁻¹`; absent when `JᵀJ` is singular.
    pub variance: Option<Vec<f64>>,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Minimizes `Σ r_i(x)²` where `residuals(x, r)` fills `r` (length `m`).
///
/// Gauss–Newton steps with Marquardt diagonal damping, central-difference Jacobian and
/// box bounds enforced by clamping. Stops when the relative step falls below
/// [`STEP_TOL`] or the relative cost change below [`COST_TOL`].
pub fn least_squares<F>(residuals: F, m: usize, initial: &[f64], bounds: &[Bound]) -> Result<LsqOutcome>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = initial.len();
    if bounds.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: bounds.len() });
    }
    if m < n {
        return Err(invalid(format!("{m} residuals cannot determine {n} parameters")));
    }
    for (x, b) in initial.iter().zip(bounds) {
        if !x.is_finite() || *x < b.lower || *x > b.upper || !(b.scale > 0.0) {
            return Err(invalid("initial parameters must be finite and inside their bounds"));
        }
    }
    let offset = initial.to_vec();
    let scale: Vec<f64> = bounds.iter().map(|b| b.scale).collect();
    let to_x = |u: &[f64]| -> Vec<f64> {
        u.iter().enumerate().map(|(k, &uk)| bounds[k].clamp(offset[k] + scale[k] * uk)).collect()
    };
    let to_u = |x: &[f64]| -> Vec<f64> { x.iter().enumerate().map(|(k, &xk)| (xk - offset[k]) / scale[k]).collect() };
    let eval = |u: &[f64], r: &mut [f64]| -> f64 {
        residuals(&to_x(u), r);
        r.iter().map(|v| v * v).sum::<f64>()
    };

    let mut u = vec![0.0; n];
    let mut r = vec![0.0; m];
    let mut cost = eval(&u, &mut r);
    if !cost.is_finite() {
        return Err(Error::Fit("residuals are not finite at the initial parameters".into()));
    }
    let mut jac = vec![0.0; m * n];
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut trial_r = vec![0.0; m];

    while iterations < MAX_ITERATIONS {
        jacobian(&eval, &u, &to_x, &to_u, m, &mut jac);
        let (jtj, jtr) = normal_equations(&jac, &r, m, n);
        if jtr.iter().all(|g| *g == 0.0) {
            converged = true;
            break;
        }
        iterations += 1;
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[k * n + k] += lambda * jtj[k * n + k].max(1e-12 * trace_scale(&jtj, n));
            }
            let mut step: Vec<f64> = jtr.iter().map(|g| -g).collect();
            if !solve_dense(&mut a, &mut step, n) {
                lambda *= 10.0;
                continue;
            }
            let trial_u: Vec<f64> = to_u(&to_x(&u.iter().zip(&step).map(|(a, b)| a + b).collect::<Vec<_>>()));
            let trial_cost = eval(&trial_u, &mut trial_r);
            if trial_cost.is_finite() && trial_cost <= cost {
                let du = norm(&u.iter().zip(&trial_u).map(|(a, b)| a - b).collect::<Vec<_>>());
                let rel_step = du / (norm(&u) + 1.0);
                let rel_cost = (cost - trial_cost) / cost.max(f64::MIN_POSITIVE);
                u = trial_u;
                core::mem::swap(&mut r, &mut trial_r);
                cost = trial_cost;
                lambda = (lambda * 0.1).max(1e-12);
                accepted = true;
                if rel_step < STEP_TOL || rel_cost < COST_TOL {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if converged {
            break;
        }
        if !accepted {
            // Damping cannot find a decrease: this is a minimum to working precision when
            // the undamped step predicts no useful reduction either.
            let mut a = jtj.clone();
            let mut step: Vec<f64> = jtr.iter().map(|g| -g).collect();
            let predicted = if solve_dense(&mut a, &mut step, n) {
                -step.iter().zip(&jtr).map(|(s, g)| s * g).sum::<f64>()
            } else {
                f64::INFINITY
            };
            converged = predicted <= 1e-8 * cost + 1e-300;
            break;
        }
    }

    let x = to_x(&u);
    jacobian(&eval, &u, &to_x, &to_u, m, &mut jac);
    let (jtj, _) = normal_equations(&jac, &r, m, n);
    let dof = (m - n).max(1) as f64;
    let s2 = cost / dof;
    let variance = invert_dense(&jtj, n).map(|inv| (0..n).map(|k| s2 * inv[k * n + k] * scale[k] * scale[k]).collect());
    Ok(LsqOutcome { x, variance, residual_norm: libm::sqrt(cost), converged, iterations })
}

fn trace_scale(a: &[f64], n: usize) -> f64 {
    (0..n).map(|k| a[k * n + k]).fold(0.0, f64::max)
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

fn jacobian<E, X, U>(eval: &E, u: &[f64], to_x: &X, to_u: &U, m: usize, jac: &mut [f64])
where
    E: Fn(&[f64], &mut [f64]) -> f64,
    X: Fn(&[f64]) -> Vec<f64>,
    U: Fn(&[f64]) -> Vec<f64>,
{
    let n = u.len();
    let mut rp = vec![0.0; m];
    let mut rm = vec![0.0; m];
    for k in 0..n {
        let h = 1e-6 * (1.0 + u[k].abs());
        let mut up = u.to_vec();
        let mut um = u.to_vec();
        up[k] += h;
        um[k] -= h;
        // Steps are clamped at the bounds, so use the realized spacing.
        let up = to_u(&to_x(&up));
        let um = to_u(&to_x(&um));
        let span = up[k] - um[k];
        eval(&up, &mut rp);
        eval(&um, &mut rm);
        for i in 0..m {
            jac[i * n + k] = if span > 0.0 { (rp[i] - rm[i]) / span } else { 0.0 };
        }
    }
}

fn normal_equations(jac: &[f64], r: &[f64], m: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jtj = vec![0.0; n * n];
    let mut jtr = vec![0.0; n];
    for i in 0..m {
        let row = &jac[i * n..(i + 1) * n];
        for a in 0..n {
            jtr[a] += row[a] * r[i];
            for b in 0..n {
                jtj[a * n + b] += row[a] * row[b];
            }
        }
    }
    (jtj, jtr)
}

/// Gaussian elimination with partial pivoting; `b` is overwritten by the solution.
fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> bool {
    let max = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(max > 0.0) || !max.is_finite() {
        return false;
    }
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i * n + c].abs().total_cmp(&a[j * n + c].abs())).unwrap_or(c);
        if a[p * n + c].abs() <= 1e-15 * max {
            return false;
        }
        if p != c {
            for k in 0..n {
                a.swap(p * n + k, c * n + k);
            }
            b.swap(p, c);
        }
        for i in c + 1..n {
            let f = a[i * n + c] / a[c * n + c];
            for k in c..n {
                a[i * n + k] -= f * a[c * n + k];
            }
            b[i] -= f * b[c];
        }
    }
    for c in (0..n).rev() {
        let s: f64 = (c + 1..n).map(|k| a[c * n + k] * b[k]).sum();
        b[c] = (b[c] - s) / a[c * n + c];
    }
    b.iter().all(|v| v.is_finite())
}

fn invert_dense(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; n * n];
    for c in 0..n {
        let mut m = a.to_vec();
        let mut e = vec![0.0; n];
        e[c] = 1.0;
        if !solve_dense(&mut m, &mut e, n) {
            return None;
        }
        for r in 0..n {
            inv[r * n + c] = e[r];
        }
    }
    Some(inv)
}

fn build_result(model: &str, names: &[&str], out: LsqOutcome) -> FitResult {
    let params = names
        .iter()
        .enumerate()
        .map(|(k, name)| FitParam {
            name: name.to_string(),
            value: out.x[k],
            stderr: if out.converged { out.variance.as_ref().map(|v| libm::sqrt(v[k].max(0.0))) } else { None },
        })
        .collect();
    FitResult { model: model.to_string(), params, residual_norm: out.residual_norm, converged: out.converged, iterations: out.iterations }
}

fn check_real_data(x: &[f64], y: &[f64], n_params: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    if x.len() < 2 * n_params {
        return Err(invalid(format!("need at least {} points, got {}", 2 * n_params, x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(invalid("data contain non-finite values"));
    }
    Ok(())
}

fn span(x: &[f64]) -> f64 {
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

/// Linear least squares for `y ≈ Σ c_k f_k(x)`; returns coefficients and cost.
fn linear_fit(columns: &[Vec<f64>], y: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = columns.len();
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = columns[i].iter().zip(&columns[j]).map(|(p, q)| p * q).sum();
        }
        b[i] = columns[i].iter().zip(y).map(|(p, q)| p * q).sum();
    }
    if !solve_dense(&mut a, &mut b, n) {
        return None;
    }
    let cost = y
        .iter()
        .enumerate()
        .map(|(i, yi)| {
            let f: f64 = (0..n).map(|k| b[k] * columns[k][i]).sum();
            (yi - f) * (yi - f)
        })
        .sum();
    Some((b, cost))
}

fn log_grid(lo: f64, hi: f64, count: usize) -> impl Iterator<Item = f64> {
    let (a, b) = (libm::log(lo), libm::log(hi));
    (0..count).map(move |k| libm::exp(a + (b - a) * k as f64 / (count - 1) as f64))
}

/// Closed-form `y = slope·x + intercept`.
pub fn fit_linear(x: &[f64], y: &[f64]) -> Result<FitResult> {
    check_real_data(x, y, 1)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if !(sxx > 0.0) {
        return Err(invalid("linear fit needs at least two distinct abscissae"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept) * (b - slope * a - intercept)).sum();
    let s2 = if x.len() > 2 { ss / (n - 2.0) } else { 0.0 };
    let se_slope = libm::sqrt(s2 / sxx);
    let se_int = libm::sqrt(s2 * (1.0 / n + mx * mx / sxx));
    Ok(FitResult {
        model: "linear".into(),
        params: vec![
            FitParam { name: "slope".into(), value: slope, stderr: Some(se_slope) },
            FitParam { name: "intercept".into(), value: intercept, stderr: Some(se_int) },
        ],
        residual_norm: libm::sqrt(ss),
        converged: true,
        iterations: 0,
    })
}

fn real_residuals<'a, M>(t: &'a [f64], y: &'a [f64], model: M) -> impl Fn(&[f64], &mut [f64]) + 'a
where
    M: Fn(&[f64], f64) -> f64 + 'a,
{
    move |p: &[f64], r: &mut [f64]| {
        for i in 0..t.len() {
            r[i] = model(p, t[i]) - y[i];
        }
    }
}

fn exp_model(p: &[f64], t: f64) -> f64 {
    p[0] * libm::exp(-t / p[1]) + p[2]
}

/// `A·e^{−t/T} + C`; parameters `A`, `T`, `C`.
pub fn fit_exponential(t: &[f64], y: &[f64]) -> Result<FitResult> {
    check_real_data(t, y, 3)?;
    let init = exponential_guess(t, y)?;
    fit_exponential_from(t, y, &init)
}

pub fn fit_exponential_from(t: &[f64], y: &[f64], initial: &[f64]) -> Result<FitResult> {
    check_real_data(t, y, 3)?;
    if initial.len() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, found: initial.len() });
    }
    let ys = span(y).max(f64::MIN_POSITIVE);
    let bounds = [Bound::free(ys), Bound::positive(initial[1].abs().max(f64::MIN_POSITIVE)), Bound::free(ys)];
    let out = least_squares(real_residuals(t, y, exp_model), t.len(), initial, &bounds)?;
    Ok(build_result("exponential", &["A", "T", "C"], out))
}

/// Scans `T` on a log grid with `A` and `C` solved linearly.
fn exponential_guess(t: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let ts = span(t);
    if !(ts > 0.0) {
        return Err(invalid("exponential fit needs distinct times"));
    }
    let t0 = t.iter().cloned().fold(f64::INFINITY, f64::min);
    let ones = vec![1.0; t.len()];
    let mut best: Option<(f64, Vec<f64>)> = None;
    for tau in log_grid(ts / 1000.0, ts * 100.0, 241) {
        let col: Vec<f64> = t.iter().map(|v| libm::exp(-(v - t0) / tau)).collect();
        if let Some((c, cost)) = linear_fit(&[col, ones.clone()], y) {
            if best.as_ref().map_or(true, |b| cost < b.0) {
                best = Some((cost, vec![c[0] * libm::exp(t0 / tau), tau, c[1]]));
            }
        }
    }
    best.map(|b| b.1).ok_or_else(|| Error::Fit("no exponential start found".into()))
}

fn damped_model(p: &[f64], t: f64) -> f64 {
    p[0] * libm::exp(-t / p[1]) * libm::cos(p[2] * t + p[3]) + p[4]
}

/// `A·e^{−t/T}·cos(Ωt + φ) + C`; parameters `A`, `T`, `Omega`, `phi`, `C`.
pub fn fit_damped_sinusoid(t: &[f64], y: &[f64]) -> Result<FitResult> {
    check_real_data(t, y, 5)?;
    let init = damped_guess(t, y)?;
    fit_damped_sinusoid_from(t, y, &init)
}

pub fn fit_damped_sinusoid_from(t: &[f64], y: &[f64], initial: &[f64]) -> Result<FitResult> {
    check_real_data(t, y, 5)?;
    if initial.len() != 5 {
        return Err(Error::DimensionMismatch { expected: 5, found: initial.len() });
    }
    let ys = span(y).max(f64::MIN_POSITIVE);
    let bounds = [
        Bound::positive(ys),
        Bound::positive(initial[1].abs().max(f64::MIN_POSITIVE)),
        Bound::positive(initial[2].abs().max(1.0 / span(t))),
        Bound::free(1.0),
        Bound::free(ys),
    ];
    let out = least_squares(real_residuals(t, y, damped_model), t.len(), initial, &bounds)?;
    let mut fit = build_result("damped_sinusoid", &["A", "T", "Omega", "phi", "C"], out);
    fit.params[3].value = wrap_phase(fit.params[3].value);
    Ok(fit)
}

/// Periodogram peak for `Ω`, then a `T` scan with the quadratures solved linearly.
fn damped_guess(t: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let n = t.len();
    let ts = span(t);
    if !(ts > 0.0) {
        return Err(invalid("sinusoid fit needs distinct times"));
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let nyquist = PI * (n - 1) as f64 / ts;
    let d_omega = 2.0 * PI / ts / 8.0;
    let power = |w: f64| {
        let (mut c, mut s) = (0.0, 0.0);
        for i in 0..n {
            c += (y[i] - mean) * libm::cos(w * t[i]);
            s += (y[i] - mean) * libm::sin(w * t[i]);
        }
        c * c + s * s
    };
    let count = (nyquist / d_omega) as usize;
    let mut best = (0usize, 0.0);
    let samples: Vec<f64> = (0..=count).map(|k| power(k as f64 * d_omega)).collect();
    for (k, p) in samples.iter().enumerate().skip(1) {
        if *p > best.1 {
            best = (k, *p);
        }
    }
    let k = best.0;
    if k == 0 {
        return Err(Error::Fit("no oscillation found".into()));
    }
    let mut omega = k as f64 * d_omega;
    if k + 1 < samples.len() {
        let (a, b, c) = (samples[k - 1], samples[k], samples[k + 1]);
        let den = a - 2.0 * b + c;
        if den < 0.0 {
            omega += 0.5 * (a - c) / den * d_omega;
        }
    }
    let ones = vec![1.0; n];
    let mut best_fit: Option<(f64, Vec<f64>)> = None;
    for tau in log_grid(ts / 100.0, ts * 100.0, 161) {
        let e: Vec<f64> = t.iter().map(|v| libm::exp(-v / tau)).collect();
        let cc: Vec<f64> = (0..n).map(|i| e[i] * libm::cos(omega * t[i])).collect();
        let ss: Vec<f64> = (0..n).map(|i| e[i] * libm::sin(omega * t[i])).collect();
        if let Some((c, cost)) = linear_fit(&[cc, ss, ones.clone()], y) {
            if best_fit.as_ref().map_or(true, |b| cost < b.0) {
                let amp = libm::sqrt(c[0] * c[0] + c[1] * c[1]);
                best_fit = Some((cost, vec![amp, tau, omega, libm::atan2(-c[1], c[0]), c[2]]));
            }
        }
    }
    best_fit.map(|b| b.1).ok_or_else(|| Error::Fit("no sinusoid start found".into()))
}

/// `A·p^m + B` with `r = (1 − p)/2`; parameters `A`, `p`, `B`, plus derived `r`.
pub fn fit_rb_decay(m: &[f64], survival: &[f64]) -> Result<FitResult> {
    check_real_data(m, survival, 3)?;
    let ones = vec![1.0; m.len()];
    let mut best: Option<(f64, Vec<f64>)> = None;
    for k in 0..400 {
        let p = 1.0 - libm::pow(10.0, -0.01 * k as f64 - 0.5).min(1.0);
        let p = if k == 0 { 0.5 } else { p };
        let col: Vec<f64> = m.iter().map(|v| libm::pow(p, *v)).collect();
        if let Some((c, cost)) = linear_fit(&[col, ones.clone()], survival) {
            if best.as_ref().map_or(true, |b| cost < b.0) {
                best = Some((cost, vec![c[0], p, c[1]]));
            }
        }
    }
    let init = best.map(|b| b.1).ok_or_else(|| Error::Fit("no decay start found".into()))?;
    fit_rb_decay_from(m, survival, &init)
}

pub fn fit_rb_decay_from(m: &[f64], survival: &[f64], initial: &[f64]) -> Result<FitResult> {
    check_real_data(m, survival, 3)?;
    if initial.len() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, found: initial.len() });
    }
    let bounds = [Bound::free(0.5), Bound::within(0.0, 1.0, 1e-3), Bound::free(0.5)];
    let model = |p: &[f64], x: f64| p[0] * libm::pow(p[1], x) + p[2];
    let out = least_squares(real_residuals(m, survival, model), m.len(), initial, &bounds)?;
    let mut fit = build_result("rb_decay", &["A", "p", "B"], out);
    let p = fit.value("p");
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Fit(format!("decay constant p = {p} lies outside (0, 1]")));
    }
    let se = fit.stderr("p").map(|s| 0.5 * s);
    fit.push_derived("r", 0.5 * (1.0 - p), se);
    Ok(fit)
}

/// Wraps a phase into `(−π, π]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let mut w = libm::fmod(phi, 2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    } else if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// Measurement-chain factor `e^{i(φ0 + ωτ)}`, evaluated about `omega_ref` to keep the
/// phase well conditioned.
fn chain(phi_ref: f64, tau: f64, omega_ref: f64, omega: f64) -> C64 {
    C64::from_polar(1.0, phi_ref + (omega - omega_ref) * tau)
}

fn check_trace(freqs: &[f64], values: &[C64], n_params: usize) -> Result<()> {
    if freqs.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: freqs.len(), found: values.len() });
    }
    if 2 * freqs.len() < 2 * n_params || freqs.len() < n_params {
        return Err(invalid(format!("need at least {n_params} complex points, got {}", freqs.len())));
    }
    if freqs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("trace frequencies must be strictly increasing"));
    }
    if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(invalid("trace contains non-finite values"));
    }
    Ok(())
}

fn complex_residuals<'a, M>(freqs: &'a [f64], values: &'a [C64], model: M) -> impl Fn(&[f64], &mut [f64]) + 'a
where
    M: Fn(&[f64], f64) -> C64 + 'a,
{
    move |p: &[f64], r: &mut [f64]| {
        for i in 0..freqs.len() {
            let d = model(p, freqs[i]) - values[i];
            r[2 * i] = d.re;
            r[2 * i + 1] = d.im;
        }
    }
}

fn reference_frequency(freqs: &[f64]) -> f64 {
    0.5 * (freqs[0] + freqs[freqs.len() - 1])
}

/// Delay and offset from the trace edges, where the response is close to 1.
fn chain_guess(freqs: &[f64], values: &[C64]) -> (f64, f64) {
    let n = freqs.len();
    let edge = (n / 10).max(2).min(n / 2);
    let slope = |idx: &[usize]| -> f64 {
        let mut ph: Vec<f64> = Vec::with_capacity(idx.len());
        for &i in idx {
            let a = values[i].arg();
            let v = match ph.last() {
                Some(&prev) => prev + wrap_phase(a - prev),
                None => a,
            };
            ph.push(v);
        }
        let x: Vec<f64> = idx.iter().map(|&i| freqs[i]).collect();
        fit_linear(&x, &ph).map(|f| f.value("slope")).unwrap_or(0.0)
    };
    let lo: Vec<usize> = (0..edge).collect();
    let hi: Vec<usize> = (n - edge..n).collect();
    let tau = 0.5 * (slope(&lo) + slope(&hi));
    let w_ref = reference_frequency(freqs);
    let mut acc = C64::new(0.0, 0.0);
    for &i in lo.iter().chain(&hi) {
        acc += values[i] * C64::from_polar(1.0, -(freqs[i] - w_ref) * tau);
    }
    (acc.arg(), tau)
}

/// Centre and half width of a Lorentzian peak in `|1 − z|`.
fn peak_guess(freqs: &[f64], dip: &[f64]) -> (usize, f64) {
    let (k, peak) = dip.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, v)| if *v > b.1 { (i, *v) } else { b });
    let half = peak / core::f64::consts::SQRT_2;
    let mut lo = k;
    while lo > 0 && dip[lo] > half {
        lo -= 1;
    }
    let mut hi = k;
    while hi + 1 < dip.len() && dip[hi] > half {
        hi += 1;
    }
    let width = 0.5 * (freqs[hi] - freqs[lo]);
    let min_width = (freqs[freqs.len() - 1] - freqs[0]) / freqs.len() as f64;
    (k, width.max(min_width))
}

/// Weak-probe qubit reflection `e^{i(φ0+ωτ)}(1 − γ_eff/(γ_2 − i(ω − ω_q)))`; parameters
/// `omega_q`, `gamma_eff`, `gamma_2`, `phi0`, `tau`, with `φ0` referred to `ω = 0`.
pub fn fit_reflection_qubit(freqs: &[f64], values: &[C64]) -> Result<FitResult> {
    check_trace(freqs, values, 5)?;
    let (phi_ref, tau) = chain_guess(freqs, values);
    let w_ref = reference_frequency(freqs);
    let bare: Vec<C64> = freqs.iter().zip(values).map(|(w, z)| z / chain(phi_ref, tau, w_ref, *w)).collect();
    let dip: Vec<f64> = bare.iter().map(|z| (ONE - z).norm()).collect();
    let (k, width) = peak_guess(freqs, &dip);
    let init = [freqs[k], dip[k] * width, width, wrap_phase(phi_ref - w_ref * tau), tau];
    fit_reflection_qubit_from(freqs, values, &init)
}

pub fn fit_reflection_qubit_from(freqs: &[f64], values: &[C64], initial: &[f64]) -> Result<FitResult> {
    check_trace(freqs, values, 5)?;
    if initial.len() != 5 {
        return Err(Error::DimensionMismatch { expected: 5, found: initial.len() });
    }
    let w_ref = reference_frequency(freqs);
    let width = initial[2].abs().max(f64::MIN_POSITIVE);
    let internal = [initial[0], initial[1], initial[2], initial[3] + w_ref * initial[4], initial[4]];
    let bounds = [
        Bound::free(width),
        Bound::positive(width),
        Bound::positive(width),
        Bound::free(1.0),
        Bound::free(1.0 / span(freqs)),
    ];
    let model = move |p: &[f64], w: f64| chain(p[3], p[4], w_ref, w) * reflection_qubit_weak(p[0], p[1], p[2], w);
    let out = least_squares(complex_residuals(freqs, values, model), 2 * freqs.len(), &internal, &bounds)?;
    let mut fit = build_result("reflection_qubit", &["omega_q", "gamma_eff", "gamma_2", "phi0", "tau"], out);
    fit.params[3].value = wrap_phase(fit.params[3].value - w_ref * fit.params[4].value);
    Ok(fit)
}

/// Parameters of the resonator model that may be held fixed.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ResonatorFitOptions {
    pub omega_r: Option<f64>,
    pub chi: Option<f64>,
    pub kappa_in: Option<f64>,
    pub p_th: Option<f64>,
    /// Frees `κ_in` and `p_th` together even outside the strong dispersive regime.
    pub allow_weak_identifiability: bool,
    /// Full starting point in the order of the fitted parameters.
    pub initial: Option<[f64; 7]>,
}

pub const RESONATOR_PARAMS: [&str; 7] = ["omega_r", "kappa_ex", "kappa_in", "chi", "p_th", "phi0", "tau"];

fn resonator_model(p: &[f64], w_ref: f64, w: f64) -> C64 {
    let g = resonator_reflection_bare(p[0] + p[3], p[1], p[2], w);
    let e = resonator_reflection_bare(p[0] - p[3], p[1], p[2], w);
    chain(p[5], p[6], w_ref, w) * (g * (1.0 - p[4]) + e * p[4])
}

/// Two-dip resonator reflection with the qubit thermally mixed; parameters as in
/// [`RESONATOR_PARAMS`], with `φ0` referred to `ω = 0`.
///
/// `κ_in` and `p_th` both lower the dip depth, so they are only freed together when
/// `κ_ex + κ_in ≤ 2|χ|` or the caller overrides the check.
pub fn fit_reflection_resonator(freqs: &[f64], values: &[C64], opts: &ResonatorFitOptions) -> Result<FitResult> {
    check_trace(freqs, values, 7)?;
    let w_ref = reference_frequency(freqs);
    let init = match opts.initial {
        Some(p) => {
            let mut q = p;
            q[5] += w_ref * q[6];
            q
        }
        None => resonator_guess(freqs, values, opts)?,
    };
    let mut init = init;
    for (k, fixed) in [(0, opts.omega_r), (3, opts.chi), (2, opts.kappa_in), (4, opts.p_th)] {
        if let Some(v) = fixed {
            init[k] = v;
        }
    }
    let both_free = opts.kappa_in.is_none() && opts.p_th.is_none();
    let regime = |p: &[f64]| p[1] + p[2] <= 2.0 * p[3].abs();
    if both_free && !opts.allow_weak_identifiability && !regime(&init) {
        return Err(invalid(format!(
            "kappa_ex + kappa_in = {:.4e} exceeds 2|chi| = {:.4e}; fix kappa_in or p_th",
            init[1] + init[2],
            2.0 * init[3].abs()
        )));
    }

    let width = (init[1] + init[2]).abs().max(f64::MIN_POSITIVE);
    let all_bounds = [
        Bound::free(width),
        Bound::positive(width),
        Bound::positive(width),
        Bound::free(width),
        Bound::within(0.0, 1.0, 0.01),
        Bound::free(1.0),
        Bound::free(1.0 / span(freqs)),
    ];
    let fixed = [opts.omega_r.is_some(), false, opts.kappa_in.is_some(), opts.chi.is_some(), opts.p_th.is_some(), false, false];
    let free: Vec<usize> = (0..7).filter(|k| !fixed[*k]).collect();
    let full = |q: &[f64]| -> [f64; 7] {
        let mut p = init;
        for (j, &k) in free.iter().enumerate() {
            p[k] = q[j];
        }
        p
    };
    let x0: Vec<f64> = free.iter().map(|&k| init[k].max(all_bounds[k].lower).min(all_bounds[k].upper)).collect();
    let bounds: Vec<Bound> = free.iter().map(|&k| all_bounds[k]).collect();
    let residuals = |q: &[f64], r: &mut [f64]| {
        let p = full(q);
        for i in 0..freqs.len() {
            let d = resonator_model(&p, w_ref, freqs[i]) - values[i];
            r[2 * i] = d.re;
            r[2 * i + 1] = d.im;
        }
    };
    let out = least_squares(residuals, 2 * freqs.len(), &x0, &bounds)?;
    let p = full(&out.x);
    let mut params = Vec::with_capacity(7);
    for k in 0..7 {
        let stderr = match (out.converged, free.iter().position(|&j| j == k), out.variance.as_ref()) {
            (true, Some(j), Some(v)) => Some(libm::sqrt(v[j].max(0.0))),
            (true, None, _) => Some(0.0),
            _ => None,
        };
        params.push(FitParam { name: RESONATOR_PARAMS[k].to_string(), value: p[k], stderr });
    }
    params[5].value = wrap_phase(p[5] - w_ref * p[6]);
    Ok(FitResult {
        model: "reflection_resonator".into(),
        params,
        residual_norm: out.residual_norm,
        converged: out.converged,
        iterations: out.iterations,
    })
}

/// Single-resonator pre-fit on the de-embedded trace, then the second dip from the
/// residual. Returns internal parameters (phase referred to the trace centre).
fn resonator_guess(freqs: &[f64], values: &[C64], opts: &ResonatorFitOptions) -> Result<[f64; 7]> {
    let (phi_ref, tau) = chain_guess(freqs, values);
    let w_ref = reference_frequency(freqs);
    let dip: Vec<f64> = freqs.iter().zip(values).map(|(w, z)| (ONE - z / chain(phi_ref, tau, w_ref, *w)).norm()).collect();
    let (k, hw) = peak_guess(freqs, &dip);
    let kappa = 2.0 * hw;
    let kappa_ex = (0.5 * dip[k] * kappa).min(kappa);
    let rough = [freqs[k], kappa_ex, (kappa - kappa_ex).max(0.0), phi_ref, tau];
    // The edge slope is biased by the resonance tail; a one-dip fit removes most of it.
    let single = |p: &[f64], w: f64| chain(p[3], p[4], w_ref, w) * resonator_reflection_bare(p[0], p[1], p[2], w);
    let bounds = [
        Bound::free(kappa),
        Bound::positive(kappa),
        Bound::positive(kappa),
        Bound::free(1.0),
        Bound::free(1.0 / span(freqs)),
    ];
    let one = least_squares(complex_residuals(freqs, values, single), 2 * freqs.len(), &rough, &bounds)?.x;
    let (w_g, kappa_ex, kappa_in, phi_ref, tau) = (one[0], one[1], one[2], one[3], one[4]);
    let kappa = kappa_ex + kappa_in;
    let rest: Vec<f64> = freqs
        .iter()
        .zip(values)
        .map(|(w, z)| (z - single(&one, *w)).norm())
        .collect();
    let (k2, _) = peak_guess(freqs, &rest);
    let mut chi = 0.5 * (w_g - freqs[k2]);
    if let Some(c) = opts.chi {
        chi = c;
    } else if chi.abs() < 0.1 * kappa {
        chi = 0.5 * kappa;
    }
    let omega_r = opts.omega_r.unwrap_or(w_g - chi);
    Ok([omega_r, kappa_ex, kappa_in, chi, 0.05, phi_ref, tau])
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_PI: f64 = 2.0 * PI;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn linear_slope_is_exact() {
        let x: Vec<f64> = (0..20).map(|k| k as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v).collect();
        let f = fit_linear(&x, &y).unwrap();
        assert!(rel(f.value("slope"), 2.5) < 1e-10);
        assert!(f.value("intercept").abs() < 1e-12);
    }

    #[test]
    fn least_squares_linear_model() {
        let x: Vec<f64> = (1..30).map(|k| k as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| -0.7 * v).collect();
        let res = |p: &[f64], r: &mut [f64]| {
            for i in 0..x.len() {
                r[i] = p[0] * x[i] - y[i];
            }
        };
        let out = least_squares(res, x.len(), &[1.0], &[Bound::free(1.0)]).unwrap();
        assert!(out.converged);
        assert!(rel(out.x[0], -0.7) < 1e-10);
    }

    #[test]
    fn exact_start_does_not_move() {
        let t: Vec<f64> = (0..50).map(|k| k as f64 * 0.3e-6).collect();
        let y: Vec<f64> = t.iter().map(|v| exp_model(&[1.0, 5e-6, 0.03], *v)).collect();
        let f = fit_exponential_from(&t, &y, &[1.0, 5e-6, 0.03]).unwrap();
        assert!(f.converged);
        assert!(f.residual_norm < 1e-12);
        assert!(rel(f.value("T"), 5e-6) < 1e-12);
    }

    #[test]
    fn exponential_recovery() {
        let t: Vec<f64> = (0..80).map(|k| k as f64 * 0.25e-6).collect();
        let y: Vec<f64> = t.iter().map(|v| exp_model(&[1.0, 5e-6, 0.03], *v)).collect();
        let f = fit_exponential(&t, &y).unwrap();
        assert!(f.converged);
        assert!(rel(f.value("A"), 1.0) < 1e-8);
        assert!(rel(f.value("T"), 5e-6) < 1e-8);
        assert!(rel(f.value("C"), 0.03) < 1e-8);
        assert!(f.stderr("T").is_some());
    }

    #[test]
    fn damped_sinusoid_recovery() {
        let truth = [0.45, 0.8e-6, TWO_PI * 12e6, 0.4, 0.5];
        let t: Vec<f64> = (0..300).map(|k| k as f64 * 4e-9).collect();
        let y: Vec<f64> = t.iter().map(|v| damped_model(&truth, *v)).collect();
        let f = fit_damped_sinusoid(&t, &y).unwrap();
        assert!(f.converged);
        for (k, name) in ["A", "T", "Omega", "phi", "C"].iter().enumerate() {
            assert!(rel(f.value(name), truth[k]) < 1e-8, "{name}: {}", f.value(name));
        }
    }

    #[test]
    fn rb_decay_recovery() {
        let m: Vec<f64> = [1, 2, 4, 8, 16, 32, 64, 128, 200].iter().map(|v| *v as f64).collect();
        let s: Vec<f64> = m.iter().map(|v| 0.48 * libm::pow(0.985, *v) + 0.5).collect();
        let f = fit_rb_decay(&m, &s).unwrap();
        assert!(rel(f.value("p"), 0.985) < 1e-8);
        assert!(rel(f.value("r"), 0.0075) < 1e-7);
    }

    #[test]
    fn qubit_reflection_recovery_with_chain() {
        let (wq, ge, g2, phi0, tau) = (TWO_PI * 8.002e9, TWO_PI * 116e3, TWO_PI * 140e3, 0.7, 35e-9);
        let freqs: Vec<f64> = (0..201).map(|k| wq + (k as f64 - 100.0) * 0.1 * g2).collect();
        let vals: Vec<C64> = freqs
            .iter()
            .map(|w| C64::from_polar(1.0, phi0 + w * tau) * reflection_qubit_weak(wq, ge, g2, *w))
            .collect();
        let f = fit_reflection_qubit(&freqs, &vals).unwrap();
        assert!(f.converged);
        assert!(rel(f.value("omega_q"), wq) < 1e-8);
        assert!(rel(f.value("gamma_eff"), ge) < 1e-8);
        assert!(rel(f.value("gamma_2"), g2) < 1e-8);
        assert!(wrap_phase(f.value("phi0") - phi0).abs() < 1e-6);
        assert!((f.value("tau") - tau).abs() < 1e-12);
    }

    fn table_resonator() -> [f64; 7] {
        [TWO_PI * 10.2e9, TWO_PI * 2.152e6, TWO_PI * 0.015e6, TWO_PI * 0.935e6, 0.028, -1.1, 12e-9]
    }

    fn resonator_trace(p: &[f64; 7]) -> (Vec<f64>, Vec<C64>) {
        let freqs: Vec<f64> = (0..401).map(|k| p[0] + (k as f64 - 200.0) * TWO_PI * 50e3).collect();
        let vals = freqs.iter().map(|w| resonator_model(p, 0.0, *w)).collect();
        (freqs, vals)
    }

    #[test]
    fn resonator_refuses_weak_identifiability() {
        let (f, v) = resonator_trace(&table_resonator());
        let err = fit_reflection_resonator(&f, &v, &ResonatorFitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
        let fixed = ResonatorFitOptions { kappa_in: Some(TWO_PI * 0.015e6), ..Default::default() };
        let fit = fit_reflection_resonator(&f, &v, &fixed).unwrap();
        assert!(rel(fit.value("p_th"), 0.028) < 1e-6, "{fit:?}");
    }

    #[test]
    fn resonator_recovery_with_override() {
        let p = table_resonator();
        let (f, v) = resonator_trace(&p);
        let opts = ResonatorFitOptions { allow_weak_identifiability: true, ..Default::default() };
        let fit = fit_reflection_resonator(&f, &v, &opts).unwrap();
        assert!(fit.converged, "{fit:?}");
        for (k, name) in RESONATOR_PARAMS.iter().enumerate().take(5) {
            assert!(rel(fit.value(name), p[k]) < 1e-8, "{name}: {} vs {}", fit.value(name), p[k]);
        }
        assert!(wrap_phase(fit.value("phi0") - p[5]).abs() < 1e-6);
        assert!((fit.value("tau") - p[6]).abs() < 1e-12);
    }

    #[test]
    fn under_determined_is_rejected() {
        let t = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert!(matches!(fit_exponential(&t, &t), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn refit_is_idempotent() {
        let t: Vec<f64> = (0..60).map(|k| k as f64 * 0.2e-6).collect();
        let y: Vec<f64> = t.iter().enumerate().map(|(i, v)| exp_model(&[0.9, 2e-6, 0.1], *v) + 1e-3 * libm::sin(i as f64)).collect();
        let a = fit_exponential(&t, &y).unwrap();
        let b = fit_exponential_from(&t, &y, &a.values()).unwrap();
        for (x, z) in a.values().iter().zip(b.values()) {
            assert!(rel(z, *x) < 1e-10);
        }
    }

    #[test]
    fn wrap_phase_range() {
        assert!((wrap_phase(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-12);
        assert!((wrap_phase(0.3) - 0.3).abs() < 1e-15);
    }
}
