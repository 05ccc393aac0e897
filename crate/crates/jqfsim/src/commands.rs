//! Subcommands: each turns a resolved config into one [`Artifact`].

use std::f64::consts::PI;
use std::path::Path;

use jqfsim_core::dynamics::ConvergenceOptions;
use jqfsim_core::experiments::{
    self, amplitude_point, anharmonicity_point, anharmonicity_references, coherence_window, detuning_point, dip_width,
    echo_experiment, linear_delays, nominal_rabi_frequency, rabi_durations, rabi_experiment, rabi_upper_bound,
    ramsey_experiment, randomized_benchmarking, t1_experiment, t1_window, thermal_population, tradeoff_point,
    AnharmonicityOptions, DecayOutcome, DetuningOptions, RabiOptions, RabiOutcome, RabiWindow, SweepResult,
    AMPLITUDE_COLUMNS, ANHARMONICITY_COLUMNS, DETUNING_COLUMNS, TRADEOFF_COLUMNS,
};
use jqfsim_core::fitting::{
    fit_damped_sinusoid, fit_exponential, fit_linear, fit_rb_decay, fit_reflection_qubit, fit_reflection_resonator,
    FitResult, ResonatorFitOptions,
};
use jqfsim_core::model::DeviceModel;
use jqfsim_core::spectra::{
    effective_rate_correction, photon_flux_from_dbm, reflection_numeric, resonator_reflection, single_photon_power_dbm, two_level_rates,
};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::output::{Artifact, Table};
use crate::CliError;

const TWO_PI: f64 = 2.0 * PI;

pub const SPECTRUM_COLUMNS: [&str; 5] = ["freq_hz", "re", "im", "amp", "phase_rad"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    SpectrumJqf,
    SpectrumQubit,
    SpectrumResonator,
    T1,
    Ramsey,
    Echo,
    Rabi,
    SweepDetuning,
    SweepAmplitude,
    SweepAnharmonicity,
    Tradeoff,
    Rb,
    Fit,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SpectrumJqf => "spectrum-jqf",
            Command::SpectrumQubit => "spectrum-qubit",
            Command::SpectrumResonator => "spectrum-resonator",
            Command::T1 => "t1",
            Command::Ramsey => "ramsey",
            Command::Echo => "echo",
            Command::Rabi => "rabi",
            Command::SweepDetuning => "sweep-detuning",
            Command::SweepAmplitude => "sweep-amplitude",
            Command::SweepAnharmonicity => "sweep-anharmonicity",
            Command::Tradeoff => "tradeoff",
            Command::Rb => "rb",
            Command::Fit => "fit",
        }
    }
}

/// Runs one subcommand. `threads` sizes the pool used for sweep points.
pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Artifact, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
    let (table, summary) = pool.install(|| match cmd {
        Command::SpectrumJqf => spectrum_jqf(cfg),
        Command::SpectrumQubit => spectrum_qubit(cfg),
        Command::SpectrumResonator => spectrum_resonator(cfg),
        Command::T1 => t1(cfg),
        Command::Ramsey => ramsey(cfg),
        Command::Echo => echo(cfg),
        Command::Rabi => rabi(cfg),
        Command::SweepDetuning => sweep_detuning(cfg),
        Command::SweepAmplitude => sweep_amplitude(cfg),
        Command::SweepAnharmonicity => sweep_anharmonicity(cfg),
        Command::Tradeoff => tradeoff(cfg),
        Command::Rb => rb(cfg),
        Command::Fit => fit(cfg),
    })?;
    Ok(Artifact { name: cmd.name().to_string(), table, summary })
}

type Output = Result<(Table, Value), CliError>;

fn device(cfg: &RunConfig) -> DeviceModel {
    cfg.device.model()
}

fn jqf_device(cfg: &RunConfig) -> Result<DeviceModel, CliError> {
    let d = device(cfg);
    if d.jqf.is_none() {
        return Err(CliError::Input("this subcommand needs `device.jqf`".into()));
    }
    Ok(d)
}

/// Seeded Gaussian noise; a no-op at zero standard deviation.
struct Noise {
    rng: ChaCha8Rng,
    dist: Option<Normal<f64>>,
}

impl Noise {
    fn new(cfg: &RunConfig) -> Self {
        let dist = (cfg.noise_std > 0.0).then(|| Normal::new(0.0, cfg.noise_std).expect("finite std"));
        Noise { rng: ChaCha8Rng::seed_from_u64(cfg.seed), dist }
    }

    fn active(&self) -> bool {
        self.dist.is_some()
    }

    fn add(&mut self, xs: &mut [f64]) {
        if let Some(d) = &self.dist {
            for x in xs {
                *x += d.sample(&mut self.rng);
            }
        }
    }

    fn add_complex(&mut self, zs: &mut [Complex64]) {
        if let Some(d) = &self.dist {
            for z in zs {
                *z += Complex64::new(d.sample(&mut self.rng), d.sample(&mut self.rng));
            }
        }
    }
}

fn fit_json(fit: &FitResult) -> Value {
    serde_json::to_value(fit).expect("serializable")
}

fn or_null(x: Option<f64>) -> Value {
    x.map_or(Value::Null, Value::from)
}

fn grid(centre_hz: f64, span_hz: f64, points: usize) -> Vec<f64> {
    (0..points).map(|k| centre_hz - 0.5 * span_hz + span_hz * k as f64 / (points - 1) as f64).collect()
}

fn trace_table(freqs_hz: &[f64], values: &[Complex64]) -> Table {
    let mut t = Table::new(&SPECTRUM_COLUMNS);
    for (f, z) in freqs_hz.iter().zip(values) {
        t.push(vec![*f, z.re, z.im, z.norm(), z.arg()]);
    }
    t
}

/// `e^{i(φ0 + ωτ)}` applied by the measurement chain.
fn chain(phase_offset: f64, delay: f64, omega: f64) -> Complex64 {
    Complex64::from_polar(1.0, phase_offset + omega * delay)
}

fn spectrum_jqf(cfg: &RunConfig) -> Output {
    let d = jqf_device(cfg)?;
    let f = d.jqf.expect("checked");
    let s = &cfg.spectrum_jqf;
    let cos_factor = s.cos_factor.unwrap_or_else(|| d.geometry.theta(f.omega).cos());
    let flux = photon_flux_from_dbm(s.power_dbm, f.omega);
    let freqs = grid(f.omega / TWO_PI, s.span_hz, s.points);
    let mut values = freqs
        .par_iter()
        .map(|fr| reflection_numeric(&f, cos_factor, TWO_PI * fr, flux))
        .collect::<Result<Vec<_>, _>>()?;
    Noise::new(cfg).add_complex(&mut values);
    let table = trace_table(&freqs, &values);
    let (k, _) = values.iter().enumerate().min_by(|a, b| a.1.norm().total_cmp(&b.1.norm())).expect("points ≥ 2");
    let summary = json!({
        "power_dbm": s.power_dbm,
        "photon_flux": flux,
        "cos_factor": cos_factor,
        "single_photon_power_dbm": single_photon_power_dbm(f.omega, f.gamma_ex, f.gamma_in)?,
        "min_amp": values[k].norm(),
        "min_amp_freq_hz": freqs[k],
    });
    Ok((table, summary))
}

fn spectrum_qubit(cfg: &RunConfig) -> Output {
    let d = device(cfg);
    let q = d.qubit;
    let s = &cfg.spectrum_qubit;
    let flux = photon_flux_from_dbm(s.power_dbm, q.omega);
    let freqs = grid(q.omega / TWO_PI, s.span_hz, s.points);
    let mut values = freqs
        .par_iter()
        .map(|fr| {
            let w = TWO_PI * fr;
            Ok(chain(s.phase_offset_rad, s.delay_s, w) * reflection_numeric(&q, 1.0, w, flux)?)
        })
        .collect::<Result<Vec<_>, jqfsim_core::Error>>()?;
    Noise::new(cfg).add_complex(&mut values);
    let table = trace_table(&freqs, &values);
    let omegas: Vec<f64> = freqs.iter().map(|f| TWO_PI * f).collect();
    let fit = fit_reflection_qubit(&omegas, &values)?;
    let (gamma_1, gamma_2, n_eff) = two_level_rates(&q);
    let p_th = thermal_population(&DeviceModel::qubit_only(q))?;
    let gamma_ex = effective_rate_correction(p_th, fit.value("gamma_eff"))?;
    let summary = json!({
        "power_dbm": s.power_dbm,
        "photon_flux": flux,
        "single_photon_power_dbm": single_photon_power_dbm(q.omega, q.gamma_ex, q.gamma_in)?,
        "gamma_1_hz": gamma_1 / TWO_PI,
        "gamma_2_hz": gamma_2 / TWO_PI,
        "n_eff": n_eff,
        "p_th": p_th,
        "gamma_ex_from_fit_hz": gamma_ex / TWO_PI,
        "fit": fit_json(&fit),
        "fit_hz": hz_params(&fit),
    });
    Ok((table, summary))
}

fn spectrum_resonator(cfg: &RunConfig) -> Output {
    let r = cfg
        .device
        .resonator
        .as_ref()
        .ok_or_else(|| CliError::Input("spectrum-resonator needs `device.resonator`".into()))?;
    let res = r.params();
    let s = &cfg.spectrum_resonator;
    let freqs = grid(r.freq_hz, s.span_hz, s.points);
    let mut values = freqs
        .iter()
        .map(|fr| {
            let w = TWO_PI * fr;
            Ok(chain(s.phase_offset_rad, s.delay_s, w) * resonator_reflection(&res, r.p_th, w)?)
        })
        .collect::<Result<Vec<_>, jqfsim_core::Error>>()?;
    Noise::new(cfg).add_complex(&mut values);
    let table = trace_table(&freqs, &values);
    let summary = json!({
        "freq_hz": r.freq_hz,
        "kappa_ex_hz": r.kappa_ex_hz,
        "kappa_in_hz": r.kappa_in_hz,
        "chi_hz": r.chi_hz,
        "p_th": r.p_th,
        "phase_offset_rad": s.phase_offset_rad,
        "delay_s": s.delay_s,
        "strong_dispersive": r.kappa_ex_hz + r.kappa_in_hz <= 2.0 * r.chi_hz.abs(),
    });
    Ok((table, summary))
}

/// Refits a decay curve after adding noise, if any was requested.
fn noisy_decay(cfg: &RunConfig, out: DecayOutcome, sinusoid: bool) -> Result<DecayOutcome, CliError> {
    let mut noise = Noise::new(cfg);
    if !noise.active() {
        return Ok(out);
    }
    let mut signal = out.signal.clone();
    noise.add(&mut signal);
    let fit = if sinusoid { fit_damped_sinusoid(&out.delays, &signal)? } else { fit_exponential(&out.delays, &signal)? };
    let time = fit.value("T");
    let time_stderr = fit.stderr("T");
    Ok(DecayOutcome { delays: out.delays, signal, fit, time, time_stderr })
}

fn decay_table(out: &DecayOutcome, signal: &str) -> Table {
    let mut t = Table::new(&["delay_s", signal]);
    for (x, y) in out.delays.iter().zip(&out.signal) {
        t.push(vec![*x, *y]);
    }
    t
}

fn t1(cfg: &RunConfig) -> Output {
    let d = device(cfg);
    let window = match cfg.decay.window_s {
        Some(w) => w,
        None => t1_window(&d)?,
    };
    let out = noisy_decay(cfg, t1_experiment(&d, &linear_delays(window, cfg.decay.points))?, false)?;
    let summary = json!({
        "t1_s": out.time,
        "t1_stderr_s": or_null(out.time_stderr),
        "p_th": thermal_population(&d)?,
        "fit": fit_json(&out.fit),
    });
    Ok((decay_table(&out, "population"), summary))
}

fn ramsey(cfg: &RunConfig) -> Output {
    let d = device(cfg);
    let window = match cfg.decay.window_s {
        Some(w) => w,
        None => coherence_window(&d)?,
    };
    let artificial = cfg.decay.ramsey_fringes * TWO_PI / window;
    let r = ramsey_experiment(&d, &linear_delays(window, cfg.decay.points), artificial)?;
    let out = noisy_decay(cfg, r.decay, true)?;
    let shift = out.fit.value("Omega") - artificial;
    let summary = json!({
        "t2star_s": out.time,
        "t2star_stderr_s": or_null(out.time_stderr),
        "artificial_detuning_hz": artificial / TWO_PI,
        "freq_shift_hz": shift / TWO_PI,
        "freq_shift_stderr_hz": or_null(out.fit.stderr("Omega").map(|s| s / TWO_PI)),
        "fit": fit_json(&out.fit),
    });
    Ok((decay_table(&out, "signal"), summary))
}

fn echo(cfg: &RunConfig) -> Output {
    let d = device(cfg);
    let window = match cfg.decay.window_s {
        Some(w) => w,
        None => coherence_window(&d)?.max(2.0 * t1_window(&d)?),
    };
    let out = noisy_decay(cfg, echo_experiment(&d, &linear_delays(window, cfg.decay.points))?, false)?;
    let summary = json!({
        "t2e_s": out.time,
        "t2e_stderr_s": or_null(out.time_stderr),
        "fit": fit_json(&out.fit),
    });
    Ok((decay_table(&out, "coherence"), summary))
}

fn rabi_options(cfg: &RunConfig) -> RabiOptions {
    RabiOptions { edge_sigma: cfg.rabi.edge_sigma_s, sample_dt: cfg.rabi.sample_dt_s }
}

fn rabi_window(cfg: &RunConfig) -> RabiWindow {
    RabiWindow { periods: cfg.rabi.periods, points_per_period: cfg.rabi.points_per_period }
}

fn rabi_summary(d: &DeviceModel, flux: f64, r: &RabiOutcome) -> Value {
    json!({
        "photon_flux": flux,
        "rabi_freq_hz": r.rabi_freq / TWO_PI,
        "rabi_decay_s": r.rabi_decay,
        "error_per_cycle": r.error_per_cycle(),
        "nominal_rabi_hz": nominal_rabi_frequency(d, flux) / TWO_PI,
    })
}

fn rabi(cfg: &RunConfig) -> Output {
    let d = device(cfg);
    let flux = cfg.rabi.photon_flux;
    let opts = rabi_options(cfg);
    let durations = rabi_durations(&d, flux, cfg.rabi.periods, cfg.rabi.points_per_period, &opts);
    let mut r = rabi_experiment(&d, flux, &durations, &opts)?;
    let mut noise = Noise::new(cfg);
    if noise.active() {
        noise.add(&mut r.population);
        r.fit = fit_damped_sinusoid(&r.durations, &r.population)?;
        r.rabi_freq = r.fit.value("Omega");
        r.rabi_decay = r.fit.value("T");
    }
    let mut t = Table::new(&["duration_s", "population"]);
    for (x, y) in r.durations.iter().zip(&r.population) {
        t.push(vec![*x, *y]);
    }
    let mut summary = rabi_summary(&d, flux, &r);
    summary["fit"] = fit_json(&r.fit);
    Ok((t, summary))
}

/// Evaluates sweep points in parallel and keeps axis order.
fn sweep<F>(axis_name: &str, columns: &[&str], axis: &[f64], scale: f64, point: F) -> SweepResult
where
    F: Fn(f64) -> jqfsim_core::Result<Vec<f64>> + Sync,
{
    let rows: Vec<_> = axis.par_iter().map(|x| point(*x)).collect();
    let mut out = SweepResult::new(axis_name, columns);
    for (x, row) in axis.iter().zip(rows) {
        out.push(x * scale, row);
    }
    out
}

fn sweep_table(s: &SweepResult) -> Table {
    let mut cols = vec![s.axis_name.as_str()];
    cols.extend(s.columns.iter().map(String::as_str));
    let mut t = Table::new(&cols);
    for (x, row) in s.axis.iter().zip(&s.rows) {
        let mut r = vec![*x];
        r.extend_from_slice(row);
        t.push(r);
    }
    t
}

fn failures(s: &SweepResult) -> Value {
    let list: Vec<Value> = s
        .errors
        .iter()
        .enumerate()
        .filter_map(|(i, e)| e.as_ref().map(|e| json!({"index": i, "axis": s.axis[i], "error": e})))
        .collect();
    Value::Array(list)
}

fn argmax(s: &SweepResult, column: &str) -> Value {
    let col = s.column(column).unwrap_or_default();
    match col.iter().enumerate().filter(|(_, v)| v.is_finite()).max_by(|a, b| a.1.total_cmp(b.1)) {
        Some((i, v)) => json!({ s.axis_name.clone(): s.axis[i], column: v }),
        None => Value::Null,
    }
}

fn argmin(s: &SweepResult, column: &str) -> Value {
    let col = s.column(column).unwrap_or_default();
    match col.iter().enumerate().filter(|(_, v)| v.is_finite()).min_by(|a, b| a.1.total_cmp(b.1)) {
        Some((i, v)) => json!({ s.axis_name.clone(): s.axis[i], column: v }),
        None => Value::Null,
    }
}

fn sweep_detuning(cfg: &RunConfig) -> Output {
    let d = jqf_device(cfg)?;
    let opts = DetuningOptions { points: cfg.decay.points, ramsey_fringes: cfg.decay.ramsey_fringes };
    let axis: Vec<f64> = cfg.sweep_detuning.values().iter().map(|x| TWO_PI * x).collect();
    let s = sweep("detuning_hz", &DETUNING_COLUMNS, &axis, 1.0 / TWO_PI, |det| detuning_point(&d, det, &opts));
    let dip = dip_width(&s.axis, &s.column("gamma_ex_hz").unwrap_or_default());
    let summary = json!({
        "max_t1": argmax(&s, "t1_s"),
        "gamma_ex_dip": dip.map(|p| json!({
            "min_at_hz": p.min_at,
            "min_hz": p.min_value,
            "baseline_hz": p.baseline,
            "fwhm_hz": p.fwhm(),
            "centre_hz": p.centre(),
        })),
        "failures": failures(&s),
    });
    Ok((sweep_table(&s), summary))
}

fn sweep_amplitude(cfg: &RunConfig) -> Output {
    let d = device(cfg);
    let (window, opts) = (rabi_window(cfg), rabi_options(cfg));
    let axis = cfg.sweep_amplitude.values();
    let s = sweep("photon_flux", &AMPLITUDE_COLUMNS, &axis, 1.0, |flux| amplitude_point(&d, flux, &window, &opts));
    Ok((sweep_table(&s), json!({ "failures": failures(&s) })))
}

fn tradeoff(cfg: &RunConfig) -> Output {
    let d = jqf_device(cfg)?;
    let flux = cfg.rabi.photon_flux;
    let (window, opts) = (rabi_window(cfg), rabi_options(cfg));
    let points = cfg.decay.points;
    let axis: Vec<f64> = cfg.tradeoff.values().iter().map(|x| TWO_PI * x).collect();
    let s = sweep("detuning_hz", &TRADEOFF_COLUMNS, &axis, 1.0 / TWO_PI, |det| {
        tradeoff_point(&d, det, flux, &window, &opts, points)
    });
    let bare = d.without_jqf();
    let t1_bare = t1_experiment(&bare, &linear_delays(t1_window(&bare)?, points))?.time;
    let rabi_bare = experiments::amplitude_point(&bare, flux, &window, &opts)?[0];
    let freqs: Vec<f64> = s.column("rabi_freq_hz").unwrap_or_default().into_iter().filter(|v| v.is_finite()).collect();
    let spread = if freqs.is_empty() {
        Value::Null
    } else {
        let (lo, hi) = freqs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        let mean = freqs.iter().sum::<f64>() / freqs.len() as f64;
        Value::from((hi - lo) / mean)
    };
    let summary = json!({
        "photon_flux": flux,
        "rabi_freq_spread": spread,
        "max_t1": argmax(&s, "t1_s"),
        "no_jqf": {
            "t1_s": t1_bare,
            "rabi_freq_hz": rabi_bare,
            "upper_bound_hz": rabi_upper_bound(flux, t1_bare)? / TWO_PI,
        },
        "failures": failures(&s),
    });
    Ok((sweep_table(&s), summary))
}

pub fn anharmonicity_options(cfg: &RunConfig) -> AnharmonicityOptions {
    let a = &cfg.sweep_anharmonicity;
    AnharmonicityOptions {
        window: RabiWindow { periods: a.periods, points_per_period: a.points_per_period },
        convergence: ConvergenceOptions {
            start_qubit_levels: cfg.device.qubit.levels,
            start_jqf_levels: a.start_jqf_levels,
            tolerance: a.tolerance,
            max_levels: a.max_levels,
            vary_qubit: false,
        },
    }
}

fn sweep_anharmonicity(cfg: &RunConfig) -> Output {
    let d = jqf_device(cfg)?;
    let flux = cfg.sweep_anharmonicity.photon_flux;
    let opts = anharmonicity_options(cfg);
    let axis: Vec<f64> = cfg.sweep_anharmonicity.axis.values().iter().map(|x| TWO_PI * x).collect();
    let s = sweep("alpha_hz", &ANHARMONICITY_COLUMNS, &axis, 1.0 / TWO_PI, |a| anharmonicity_point(&d, a, flux, &opts));
    let (no_jqf, two_level) = anharmonicity_references(&d, flux, &opts)?;
    let summary = json!({
        "photon_flux": flux,
        "jqf_gamma_ex_hz": d.jqf.expect("checked").gamma_ex / TWO_PI,
        "min_error_per_cycle": argmin(&s, "error_per_cycle"),
        "no_jqf": rabi_summary(&d.without_jqf(), flux, &no_jqf),
        "two_level_jqf": rabi_summary(&d, flux, &two_level),
        "failures": failures(&s),
    });
    Ok((sweep_table(&s), summary))
}

fn rb(cfg: &RunConfig) -> Output {
    let d = device(cfg);
    let rbc = cfg.rb.core(cfg.seed);
    let out = randomized_benchmarking(&d, &rbc)?;
    let mut t = Table::new(&["length", "survival", "coherence_survival"]);
    for ((m, s), c) in out.lengths.iter().zip(&out.survival).zip(&out.coherence_survival) {
        t.push(vec![*m as f64, *s, *c]);
    }
    let summary = json!({
        "avg_gate_error": out.avg_gate_error,
        "coherence_limit": out.coherence_limit,
        "pulse_duration_s": rbc.pulse_duration(),
        "pi_amplitude_sqrt_flux": out.pi_amplitude,
        "seed": cfg.seed,
        "fit": fit_json(&out.fit),
        "coherence_fit": fit_json(&out.coherence_fit),
    });
    Ok((t, summary))
}

/// Fitted parameters that are angular rates, divided by 2π.
fn hz_params(fit: &FitResult) -> Value {
    let mut m = serde_json::Map::new();
    for p in &fit.params {
        let angular = ["omega", "gamma", "kappa", "chi", "Omega"].iter().any(|pre| p.name.starts_with(pre));
        if angular {
            m.insert(format!("{}_hz", p.name), Value::from(p.value / TWO_PI));
        }
    }
    Value::Object(m)
}

fn column<'a>(t: &'a Table, name: Option<&str>, fallback: usize) -> Result<Vec<f64>, CliError> {
    match name {
        Some(n) => t.column(n).ok_or_else(|| CliError::Input(format!("input has no column `{n}`"))),
        None => {
            if t.columns.len() <= fallback {
                return Err(CliError::Input(format!("input needs at least {} columns", fallback + 1)));
            }
            Ok(t.rows.iter().map(|r| r[fallback]).collect())
        }
    }
}

fn complex_trace(t: &Table) -> Result<(Vec<f64>, Vec<Complex64>), CliError> {
    let need = |n: &str| t.column(n).ok_or_else(|| CliError::Input(format!("reflection fits need a `{n}` column")));
    let f = need("freq_hz")?;
    let (re, im) = (need("re")?, need("im")?);
    let omegas = f.iter().map(|x| TWO_PI * x).collect();
    Ok((omegas, re.iter().zip(&im).map(|(a, b)| Complex64::new(*a, *b)).collect()))
}

pub const FIT_MODELS: [&str; 6] =
    ["exponential", "damped-sinusoid", "rb", "linear", "reflection-qubit", "reflection-resonator"];

fn fit(cfg: &RunConfig) -> Output {
    let model = cfg.fit.model.as_deref().ok_or_else(|| CliError::Input("fit needs a model (--model)".into()))?;
    let input = cfg.fit.input.as_deref().ok_or_else(|| CliError::Input("fit needs an input CSV (--input)".into()))?;
    let text = std::fs::read_to_string(Path::new(input)).map_err(|e| CliError::Input(format!("{input}: {e}")))?;
    let data = Table::from_csv(&text).map_err(|e| CliError::Input(format!("{input}: {e}")))?;
    let real = || -> Result<(Vec<f64>, Vec<f64>), CliError> {
        Ok((column(&data, cfg.fit.x_column.as_deref(), 0)?, column(&data, cfg.fit.y_column.as_deref(), 1)?))
    };
    let result = match model {
        "exponential" => {
            let (x, y) = real()?;
            fit_exponential(&x, &y)?
        }
        "damped-sinusoid" => {
            let (x, y) = real()?;
            fit_damped_sinusoid(&x, &y)?
        }
        "rb" => {
            let (x, y) = real()?;
            fit_rb_decay(&x, &y)?
        }
        "linear" => {
            let (x, y) = real()?;
            fit_linear(&x, &y)?
        }
        "reflection-qubit" => {
            let (w, z) = complex_trace(&data)?;
            fit_reflection_qubit(&w, &z)?
        }
        "reflection-resonator" => {
            let (w, z) = complex_trace(&data)?;
            let r = &cfg.fit.resonator;
            let opts = ResonatorFitOptions {
                omega_r: r.freq_hz.map(|f| TWO_PI * f),
                chi: r.chi_hz.map(|c| TWO_PI * c),
                kappa_in: r.kappa_in_hz.map(|k| TWO_PI * k),
                p_th: r.p_th,
                allow_weak_identifiability: r.allow_weak_identifiability,
                initial: None,
            };
            fit_reflection_resonator(&w, &z, &opts)?
        }
        other => {
            let hint = FIT_MODELS
                .iter()
                .max_by(|a, b| strsim::jaro_winkler(other, a).total_cmp(&strsim::jaro_winkler(other, b)))
                .expect("models");
            return Err(CliError::Input(format!("unknown fit model `{other}`, did you mean `{hint}`?")));
        }
    };
    let names: Vec<&str> = result.params.iter().map(|p| p.name.as_str()).collect();
    let mut t = Table::new(&names);
    t.push(result.params.iter().map(|p| p.value).collect());
    t.push(result.params.iter().map(|p| p.stderr.unwrap_or(f64::NAN)).collect());
    let summary = json!({
        "input": input,
        "fit": fit_json(&result),
        "fit_hz": hz_params(&result),
    });
    Ok((t, summary))
}
