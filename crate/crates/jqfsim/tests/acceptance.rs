//! Acceptance suite: one PASS/FAIL line per criterion, with its runtime budget.
//!
//! Parts listed in `KNOWN_FAILURES` are reported as FAIL but do not fail the run; the
//! README explains each one. Any other failing part, or a criterion over its runtime
//! budget, makes the binary exit nonzero.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use jqfsim::commands::anharmonicity_options;
use jqfsim::config::{self, Overrides, ProfileSource, RunConfig};
use jqfsim_core::experiments::{
    amplitude_point, anharmonicity_point, anharmonicity_references, coherence_window, dip_width, echo_experiment,
    external_rate, linear_delays, randomized_benchmarking, t1_experiment, t1_window, thermal_population, tradeoff_point,
    RabiOptions, RabiWindow,
};
use jqfsim_core::fitting::{
    fit_damped_sinusoid, fit_exponential, fit_linear, fit_rb_decay, fit_reflection_qubit, fit_reflection_resonator,
    FitResult, ResonatorFitOptions,
};
use jqfsim_core::linalg::{commutator_superop, dissipator_matrix, CMatrix, Operator, C64};
use jqfsim_core::model::{
    full_liouvillian, liouvillian_parts, single_transmon_parts, two_level_approx_liouvillian, DeviceModel, DriveParams,
    ModelKind, TransmonParams, WaveguideGeometry,
};
use jqfsim_core::spectra::{reflection_numeric, reflection_qubit_analytic, reflection_qubit_weak, resonator_reflection};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const TWO_PI: f64 = 2.0 * PI;
const MHZ: f64 = TWO_PI * 1e6;

const KNOWN_FAILURES: [&str; 2] = ["7a", "9b"];

struct Part {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn part(id: &'static str, pass: bool, detail: String) -> Part {
    Part { id, pass, detail }
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target.abs()
}

fn profile(name: &str) -> RunConfig {
    config::resolve(Some(name), None, &Overrides::default(), &ProfileSource::default()).expect("bundled profile")
}

/// Shared between criteria: the detuning with the longest T1.
struct Context {
    table: DeviceModel,
    cfg: RunConfig,
    optimum: f64,
}

impl Context {
    fn at_optimum(&self) -> DeviceModel {
        self.table.with_jqf_detuning(self.optimum)
    }
}

fn t1(d: &DeviceModel) -> f64 {
    t1_experiment(d, &linear_delays(t1_window(d).unwrap(), 161)).unwrap().time
}

fn echo(d: &DeviceModel) -> f64 {
    let window = coherence_window(d).unwrap().max(2.0 * t1_window(d).unwrap());
    echo_experiment(d, &linear_delays(window, 161)).unwrap().time
}

fn grid(start: f64, stop: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| start + (stop - start) * k as f64 / (n - 1) as f64).collect()
}

/// Vertex of the parabola through three equally spaced samples around index `k`.
fn refine_max(x: &[f64], y: &[f64], k: usize) -> (f64, f64) {
    if k == 0 || k + 1 == x.len() {
        return (x[k], y[k]);
    }
    let (a, b, c) = (y[k - 1], y[k], y[k + 1]);
    let denom = a - 2.0 * b + c;
    if denom >= 0.0 {
        return (x[k], y[k]);
    }
    let s = 0.5 * (a - c) / denom;
    (x[k] + s * (x[k + 1] - x[k]), b - 0.25 * (a - c) * s)
}

fn c1(ctx: &mut Context) -> Vec<Part> {
    let d = ctx.table.with_jqf_detuning(2e3 * MHZ);
    let t = t1(&d);
    vec![part("1", within(t, 1.1e-6, 0.10), format!("T1 = {:.3} us with the JQF 2 GHz away (target 1.1 us +-10%)", t * 1e6))]
}

fn c2(ctx: &mut Context) -> Vec<Part> {
    let axis = grid(-60.0, 60.0, 41);
    let t1s: Vec<f64> = axis.par_iter().map(|det| t1(&ctx.table.with_jqf_detuning(det * MHZ))).collect();
    let k = t1s.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    let (at, peak) = refine_max(&axis, &t1s, k);
    ctx.optimum = axis[k] * MHZ;
    let ok = (at - 9.0).abs() <= 3.0 && within(peak, 5.2e-6, 0.25);
    vec![part(
        "2",
        ok,
        format!(
            "max T1 = {:.3} us at {:+.2} MHz over 41 detunings (target 5.2 us +-25% at +9 +-3 MHz)",
            peak * 1e6,
            at
        ),
    )]
}

fn c3(ctx: &mut Context) -> Vec<Part> {
    let axis = grid(-150.0, 150.0, 41);
    let rates: Vec<f64> =
        axis.par_iter().map(|det| external_rate(&ctx.table.with_jqf_detuning(det * MHZ), 161).unwrap().0 / TWO_PI).collect();
    let Some(dip) = dip_width(&axis, &rates) else {
        return vec![part("3", false, "no half-depth crossings inside +-150 MHz".into())];
    };
    let fwhm = dip.fwhm();
    // Mirror pairs Δ, −Δ disagree when the curve is asymmetric about zero detuning.
    let n = axis.len();
    let mirror = (0..n / 2).map(|i| (rates[i] - rates[n - 1 - i]).abs()).fold(0.0, f64::max);
    let depth = dip.baseline - dip.min_value;
    let asym = mirror / depth;
    vec![
        part("3a", within(fwhm, 130.0, 0.20), format!("FWHM = {fwhm:.1} MHz (target 130 MHz +-20%)")),
        part(
            "3b",
            asym > 0.05,
            format!(
                "half-depth crossings {:+.1} / {:+.1} MHz, minimum {:.2} kHz at {:+.1} MHz, mirror mismatch {:.0}% of the dip depth",
                dip.left,
                dip.right,
                dip.min_value * 1e-3,
                dip.min_at,
                100.0 * asym
            ),
        ),
    ]
}

fn c4(ctx: &mut Context) -> Vec<Part> {
    let bare = thermal_population(&ctx.table.without_jqf()).unwrap();
    let opt = thermal_population(&ctx.at_optimum()).unwrap();
    vec![
        part("4a", (bare - 0.031).abs() <= 0.005, format!("p_th = {bare:.4} without JQF (target 0.031 +-0.005)")),
        part("4b", (opt - 0.16).abs() <= 0.03, format!("p_th = {opt:.4} at the optimum (target 0.16 +-0.03)")),
    ]
}

fn c5(ctx: &mut Context) -> Vec<Part> {
    let bare = echo(&ctx.table.without_jqf());
    let opt = echo(&ctx.at_optimum());
    vec![
        part("5a", within(bare, 2.3e-6, 0.20), format!("T2E = {:.3} us without JQF (target 2.3 us +-20%)", bare * 1e6)),
        part("5b", within(opt, 7.3e-6, 0.30), format!("T2E = {:.3} us with JQF (target 7.3 us +-30%)", opt * 1e6)),
    ]
}

fn c6(ctx: &mut Context) -> Vec<Part> {
    let flux = 1.5e10;
    let mut d = ctx.table.clone();
    if let Some(f) = d.jqf.as_mut() {
        f.levels = 6;
    }
    let window = RabiWindow { periods: ctx.cfg.rabi.periods, points_per_period: ctx.cfg.rabi.points_per_period };
    let opts = RabiOptions { edge_sigma: ctx.cfg.rabi.edge_sigma_s, sample_dt: ctx.cfg.rabi.sample_dt_s };
    let dets = [-60.0 * MHZ, -30.0 * MHZ, ctx.optimum, 30.0 * MHZ, 60.0 * MHZ];
    let rows: Vec<Vec<f64>> = dets.par_iter().map(|det| tradeoff_point(&d, *det, flux, &window, &opts, 161).unwrap()).collect();
    let freqs: Vec<f64> = rows.iter().map(|r| r[1] * 1e-6).collect();
    let (lo, hi) = freqs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let mean = freqs.iter().sum::<f64>() / freqs.len() as f64;
    let spread = (hi - lo) / mean;
    let all_in = freqs.iter().all(|f| within(*f, 34.3, 0.05));
    let opt = &rows[2];
    let bound_ok = rows.iter().all(|r| r[4] == 1.0);
    vec![
        part(
            "6a",
            all_in && spread < 0.02,
            format!("Rabi {lo:.2}-{hi:.2} MHz over +-60 MHz, spread {:.2}% (target 34.3 MHz +-5%, spread < 2%)", 100.0 * spread),
        ),
        part(
            "6b",
            bound_ok,
            format!(
                "at the optimum {:.2} MHz vs bound 2 sqrt(n/T1) = {:.2} MHz (T1 = {:.2} us); above the bound at {} of {} detunings",
                opt[1] * 1e-6,
                opt[3] * 1e-6,
                opt[0] * 1e6,
                rows.iter().filter(|r| r[4] == 1.0).count(),
                rows.len()
            ),
        ),
    ]
}

fn c7(_: &mut Context) -> Vec<Part> {
    let cfg = profile("fig_s4");
    let base = cfg.device.model();
    let opts = anharmonicity_options(&cfg);
    let flux = 1e10;
    let (none, two) = anharmonicity_references(&base, flux, &opts).unwrap();
    let gamma = base.qubit.gamma_ex;
    let limit = 4.0 * PI / 3.0 * (gamma / flux).sqrt();
    let eps = none.error_per_cycle();
    let a = part(
        "7a",
        within(eps, limit, 0.05),
        format!(
            "no-JQF error per cycle {eps:.5} at sqrt(n) = 100 sqrt(MHz) vs (4pi/3) sqrt(gamma/n) = {limit:.5}; (3pi/4) sqrt(gamma/n) = {:.5}",
            0.75 * PI * (gamma / flux).sqrt()
        ),
    );

    let stationary = RabiOptions { edge_sigma: 0.0, sample_dt: 1e-9 };
    let mut two_dev = base.clone();
    if let Some(f) = two_dev.jqf.as_mut() {
        f.levels = 2;
    }
    let roots = [10.0, 20.0, 30.0, 50.0, 70.0, 100.0];
    let rows: Vec<(f64, f64)> = roots
        .par_iter()
        .map(|s| {
            let n = s * s * 1e6;
            let t2 = amplitude_point(&two_dev, n, &opts.window, &stationary).unwrap()[1];
            let t0 = amplitude_point(&base.without_jqf(), n, &opts.window, &stationary).unwrap()[1];
            (t2, t0)
        })
        .collect();
    let below = rows.iter().all(|(t2, t0)| t2 < t0);
    let top: Vec<f64> = rows.iter().zip(roots).filter(|(_, s)| *s >= 50.0).map(|(r, _)| r.0).collect();
    let (lo, hi) = top.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let flat = (hi - lo) / hi;
    let b = part(
        "7b",
        below && flat < 0.10,
        format!(
            "two-level JQF decay {} us vs no JQF {} us at sqrt(n) = {:?}; {:.1}% variation over 50-100 sqrt(MHz) (plateau: < 10%)",
            rows.iter().map(|r| format!("{:.3}", r.0 * 1e6)).collect::<Vec<_>>().join("/"),
            rows.iter().map(|r| format!("{:.3}", r.1 * 1e6)).collect::<Vec<_>>().join("/"),
            roots,
            100.0 * flat
        ),
    );

    let f = base.jqf.expect("fig_s4 has a JQF");
    let transmon = anharmonicity_point(&base, -0.1e9 * TWO_PI, flux, &opts).unwrap();
    let c = part(
        "7c",
        within(transmon[1], none.rabi_decay, 0.10),
        format!(
            "alpha_f = -0.1 GHz JQF decay {:.3} us vs no JQF {:.3} us ({} levels; two-level JQF {:.3} us)",
            transmon[1] * 1e6,
            none.rabi_decay * 1e6,
            transmon[3],
            two.rabi_decay * 1e6
        ),
    );

    let alphas = [-25.0, -50.0, -75.0, -100.0, -150.0, -200.0, -300.0, -400.0];
    let eps: Vec<f64> =
        alphas.par_iter().map(|a| anharmonicity_point(&base, a * MHZ, flux, &opts).map(|r| r[2]).unwrap_or(f64::NAN)).collect();
    let k = eps.iter().enumerate().filter(|e| e.1.is_finite()).min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    let logs: Vec<f64> = alphas.iter().map(|a| a.abs().ln()).collect();
    let neg: Vec<f64> = eps.iter().map(|e| -e).collect();
    let best = refine_max(&logs, &neg, k).0.exp();
    let ratio = best / (f.gamma_ex / MHZ);
    let d = part(
        "7d",
        (0.5..=2.0).contains(&ratio),
        format!(
            "error per cycle {} at alpha_f = {:?} MHz; minimum at |alpha_f| = {best:.0} MHz = {ratio:.2} gamma_ex^f (target within x2)",
            eps.iter().map(|e| format!("{e:.5}")).collect::<Vec<_>>().join("/"),
            alphas
        ),
    );
    vec![a, b, c, d]
}

fn random_operator(rng: &mut ChaCha8Rng, n: usize) -> Operator {
    let m = CMatrix::from_fn(n, n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    Operator::new(vec![n], m).unwrap()
}

fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> Operator {
    let a = random_operator(rng, n);
    let h = a.matrix() + &a.matrix().adjoint();
    Operator::new(vec![n], h.scale_real(0.5)).unwrap()
}

fn c8(_: &mut Context) -> Vec<Part> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    let mut s11_err = 0.0f64;
    for _ in 0..60 {
        let t = TransmonParams::from_hz(
            rng.gen_range(4e9..9e9),
            -0.3e9,
            rng.gen_range(1e4..2e7),
            rng.gen_range(0.0..5e4),
            rng.gen_range(0.0..5e4),
            rng.gen_range(0.0..0.5),
            2,
        );
        let (g1, _, _) = jqfsim_core::spectra::two_level_rates(&t);
        let w = t.omega + rng.gen_range(-3.0..3.0) * g1;
        let flux = g1 * g1 / (4.0 * t.gamma_ex) * 10f64.powf(rng.gen_range(-4.0..3.0));
        let num = reflection_numeric(&t, 1.0, w, flux).unwrap();
        s11_err = s11_err.max((num - reflection_qubit_analytic(&t, w, flux)).norm());
    }

    let mut super_err = 0.0f64;
    for _ in 0..40 {
        let n = rng.gen_range(2..7);
        let (a, b, h) = (random_operator(&mut rng, n), random_operator(&mut rng, n), random_hermitian(&mut rng, n));
        let rho = random_operator(&mut rng, n).matrix().clone();
        let (am, bm, hm) = (a.matrix(), b.matrix(), h.matrix());
        let ad = am.adjoint();
        let adb = &ad * bm;
        let mut direct = &(bm * &rho) * &ad;
        direct.axpy(C64::new(-0.5, 0.0), &(&adb * &rho));
        direct.axpy(C64::new(-0.5, 0.0), &(&rho * &adb));
        let mut diff = dissipator_matrix(&a, &b).unwrap().apply(&rho);
        diff.axpy(C64::new(-1.0, 0.0), &direct);
        super_err = super_err.max(diff.max_abs());
        let mut comm = &(hm * &rho) - &(&rho * hm);
        comm = comm.scale(C64::new(0.0, -1.0));
        let mut diff = commutator_superop(&h).unwrap().apply(&rho);
        diff.axpy(C64::new(-1.0, 0.0), &comm);
        super_err = super_err.max(diff.max_abs());
    }

    let mut trace_err = 0.0f64;
    for _ in 0..30 {
        let lq = rng.gen_range(2..4);
        let q = TransmonParams::from_hz(
            8.0e9,
            -0.4e9,
            rng.gen_range(1e4..1e6),
            rng.gen_range(0.0..1e5),
            rng.gen_range(0.0..1e5),
            rng.gen_range(0.0..0.5),
            lq,
        );
        let f = TransmonParams::from_hz(
            8.0e9 + rng.gen_range(-1e8..1e8),
            -rng.gen_range(0.05e9..0.5e9),
            rng.gen_range(1e6..2e8),
            rng.gen_range(0.0..1e7),
            0.0,
            rng.gen_range(0.0..0.1),
            rng.gen_range(2..5),
        );
        let d = DeviceModel { qubit: q, jqf: Some(f), geometry: WaveguideGeometry::new(rng.gen_range(0.3..0.7), q.omega), resonator: None };
        let drive = DriveParams::constant(q.omega + rng.gen_range(-1e7..1e7), 10f64.powf(rng.gen_range(6.0..11.0)));
        let mut ls = vec![full_liouvillian(&d, &drive).unwrap(), full_liouvillian(&d.without_jqf(), &drive).unwrap()];
        let ideal = DeviceModel {
            qubit: TransmonParams { levels: 2, ..q },
            jqf: Some(TransmonParams { omega: q.omega, levels: 2, ..f }),
            geometry: WaveguideGeometry::new(0.5, q.omega),
            resonator: None,
        };
        ls.push(two_level_approx_liouvillian(&ideal, &drive).unwrap());
        let parts = liouvillian_parts(&d, ModelKind::Full, drive.omega_d, drive.photon_flux).unwrap();
        ls.push(parts.at(0.7, 1.1));
        ls.push(single_transmon_parts(&f, rng.gen_range(-1.0..1.0), f.omega, 1e9).unwrap().at(1.0, 0.0));
        for l in &ls {
            trace_err = trace_err.max(l.trace_preservation_error() / l.matrix().max_abs());
        }
    }
    vec![
        part("8a", s11_err <= 1e-6, format!("analytic vs steady-state S11: max |diff| = {s11_err:.1e} over 60 random qubits and powers (tol 1e-6)")),
        part("8b", super_err <= 1e-12, format!("dissipator/commutator vs direct: max |diff| = {super_err:.1e} over 40 random inputs (tol 1e-12)")),
        part("8c", trace_err <= 1e-8, format!("trace preservation: max |vec(I)^T L| / max|L| = {trace_err:.1e} (tol 1e-8)")),
    ]
}

fn c9(ctx: &mut Context) -> Vec<Part> {
    let rb = ctx.cfg.rb.core(ctx.cfg.seed);
    let bare = randomized_benchmarking(&ctx.table.without_jqf(), &rb).unwrap();
    let with = randomized_benchmarking(&ctx.at_optimum(), &rb).unwrap();
    let rel = (bare.avg_gate_error - bare.coherence_limit).abs() / bare.coherence_limit;
    vec![
        part(
            "9a",
            rel <= 0.30,
            format!(
                "no JQF: error per Clifford {:.4} vs coherence limit {:.4} ({:.0}% apart, tol 30%)",
                bare.avg_gate_error,
                bare.coherence_limit,
                100.0 * rel
            ),
        ),
        part(
            "9b",
            with.avg_gate_error >= bare.avg_gate_error,
            format!(
                "with JQF: {:.4} (coherence limit {:.4}) vs {:.4} without",
                with.avg_gate_error, with.coherence_limit, bare.avg_gate_error
            ),
        ),
    ]
}

fn worst(fit: &FitResult, truth: &[f64]) -> f64 {
    fit.values().iter().zip(truth).map(|(v, t)| if *t == 0.0 { v.abs() } else { ((v - t) / t).abs() }).fold(0.0, f64::max)
}

fn c10(ctx: &mut Context) -> Vec<Part> {
    let mut errs: Vec<(&str, f64)> = Vec::new();
    let t: Vec<f64> = linear_delays(15e-6, 121);
    let y: Vec<f64> = t.iter().map(|x| 0.8 * (-x / 3e-6).exp() + 0.1).collect();
    errs.push(("exponential", worst(&fit_exponential(&t, &y).unwrap(), &[0.8, 3e-6, 0.1])));
    let p = [0.45, 2e-6, 5.0 * MHZ, 0.3, 0.5];
    let ts: Vec<f64> = linear_delays(6e-6, 301);
    let y: Vec<f64> = ts.iter().map(|x| p[0] * (-x / p[1]).exp() * (p[2] * x + p[3]).cos() + p[4]).collect();
    errs.push(("damped-sinusoid", worst(&fit_damped_sinusoid(&ts, &y).unwrap(), &p)));
    let m: Vec<f64> = [1, 2, 4, 7, 12, 20, 35, 60, 100, 150, 200].iter().map(|v| *v as f64).collect();
    let y: Vec<f64> = m.iter().map(|x| 0.48 * 0.985f64.powf(*x) + 0.5).collect();
    let rb = fit_rb_decay(&m, &y).unwrap();
    errs.push(("rb", worst(&rb, &[0.48, 0.985, 0.5, 0.0075])));
    let y: Vec<f64> = t.iter().map(|x| -2.5e5 * x + 0.7).collect();
    errs.push(("linear", worst(&fit_linear(&t, &y).unwrap(), &[-2.5e5, 0.7])));

    let q = [TWO_PI * 8.002e9, TWO_PI * 120e3, TWO_PI * 75e3, 0.4, 35e-9];
    let w: Vec<f64> = grid(q[0] - 2.0 * MHZ, q[0] + 2.0 * MHZ, 401);
    let z: Vec<C64> =
        w.iter().map(|x| C64::from_polar(1.0, q[3] + x * q[4]) * reflection_qubit_weak(q[0], q[1], q[2], *x)).collect();
    let mut fit = fit_reflection_qubit(&w, &z).unwrap();
    let phi = fit.params[3].value;
    fit.params[3].value = q[3] + jqfsim_core::fitting::wrap_phase(phi - q[3]);
    errs.push(("reflection-qubit", worst(&fit, &q)));

    let strong = resonator_truth(TWO_PI * 10.1564e9, 1.2 * MHZ, 0.02 * MHZ, 1.5 * MHZ, 0.05);
    errs.push(("reflection-resonator", resonator_fit_error(&strong, false).0));

    let r = ctx.cfg.device.resonator.as_ref().expect("table_s1 has a resonator");
    let table = resonator_truth(TWO_PI * r.freq_hz, TWO_PI * r.kappa_ex_hz, TWO_PI * r.kappa_in_hz, TWO_PI * r.chi_hz, r.p_th);
    let (_, per) = resonator_fit_error(&table, true);
    let table_worst = per[1..5].iter().cloned().fold(0.0, f64::max);
    let exact = errs.iter().all(|(_, e)| *e <= 1e-8);
    vec![
        part(
            "10a",
            exact,
            format!(
                "noiseless recovery (tol 1e-8): {}",
                errs.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", ")
            ),
        ),
        part(
            "10b",
            table_worst <= 0.01,
            format!(
                "resonator trace from the default device: kappa_ex {:.1e}, kappa_in {:.1e}, chi {:.1e}, p_th {:.1e} relative (tol 1e-2)",
                per[1], per[2], per[3], per[4]
            ),
        ),
    ]
}

fn resonator_truth(omega_r: f64, kappa_ex: f64, kappa_in: f64, chi: f64, p_th: f64) -> [f64; 7] {
    [omega_r, kappa_ex, kappa_in, chi, p_th, -0.8, 42e-9]
}

fn resonator_fit_error(p: &[f64; 7], weak: bool) -> (f64, Vec<f64>) {
    let res = jqfsim_core::spectra::ResonatorParams { omega_r: p[0], kappa_ex: p[1], kappa_in: p[2], chi: p[3] };
    let w = grid(p[0] - 10.0 * MHZ, p[0] + 10.0 * MHZ, 801);
    let z: Vec<C64> = w.iter().map(|x| C64::from_polar(1.0, p[5] + x * p[6]) * resonator_reflection(&res, p[4], *x).unwrap()).collect();
    let opts = ResonatorFitOptions { allow_weak_identifiability: weak, ..Default::default() };
    let mut fit = fit_reflection_resonator(&w, &z, &opts).unwrap();
    let phi = fit.params[5].value;
    fit.params[5].value = p[5] + jqfsim_core::fitting::wrap_phase(phi - p[5]);
    let per: Vec<f64> = fit.values().iter().zip(p).map(|(v, t)| ((v - t) / t).abs()).collect();
    (per.iter().cloned().fold(0.0, f64::max), per)
}

type Criterion = fn(&mut Context) -> Vec<Part>;

fn main() {
    // `cargo test -- --list` and filters probe test binaries; this suite has one entry.
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let cfg = profile("table_s1");
    let mut ctx = Context { table: cfg.device.model(), optimum: 9.0 * MHZ, cfg };
    let criteria: [(u32, Criterion, u64); 10] = [
        (1, c1, 10),
        (2, c2, 120),
        (3, c3, 120),
        (4, c4, 10),
        (5, c5, 60),
        (6, c6, 60),
        (7, c7, 600),
        (8, c8, 60),
        (9, c9, 900),
        (10, c10, 30),
    ];
    let mut unexpected = Vec::new();
    for (n, run, budget) in criteria {
        let start = Instant::now();
        let parts = run(&mut ctx);
        let took = start.elapsed();
        let in_time = took <= Duration::from_secs(budget);
        let pass = in_time && parts.iter().all(|p| p.pass);
        println!(
            "criterion {n:>2} {} [{:.1} s, budget {budget} s]",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
        for p in &parts {
            let known = KNOWN_FAILURES.contains(&p.id);
            let tag = match (p.pass, known) {
                (true, _) => "ok  ",
                (false, true) => "FAIL (known)",
                (false, false) => "FAIL",
            };
            println!("    {:<4} {tag} {}", p.id, p.detail);
            if !p.pass && !known {
                unexpected.push(p.id.to_string());
            }
        }
        if !in_time {
            println!("    over the runtime budget");
            unexpected.push(format!("{n} (runtime)"));
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected acceptance failures: {}", unexpected.join(", "));
        std::process::exit(1);
    }
}
