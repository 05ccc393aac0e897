//! Run configuration.
//!
//! JSON with a versioned schema. Frequencies and rates are ordinary frequencies in Hz
//! (the angular values divided by 2π); times are in seconds and photon fluxes in
//! photons per second. A resolved config is built by layering the built-in defaults,
//! a profile, the user's file and finally command-line overrides.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use jqfsim_core::experiments::RbConfig;
use jqfsim_core::model::{DeviceModel, TransmonParams, WaveguideGeometry};
use jqfsim_core::spectra::ResonatorParams;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_PROFILE: &str = "table_s1";
pub const PROFILE_DIR_ENV: &str = "JQFSIM_PROFILE_DIR";

const TWO_PI: f64 = 2.0 * PI;

const BUILTIN_PROFILES: [(&str, &str); 2] = [
    ("table_s1", include_str!("../../../profiles/table_s1.json")),
    ("fig_s4", include_str!("../../../profiles/fig_s4.json")),
];

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: line {line}, column {column}: {message}")]
    Parse { path: String, line: usize, column: usize, message: String },
    #[error("unknown key `{key}`{}", .suggestion.as_ref().map(|s| format!(", did you mean `{s}`?")).unwrap_or_default())]
    UnknownKey { key: String, suggestion: Option<String> },
    #[error("`{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("profile `{name}` not found in {searched}")]
    Profile { name: String, searched: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl ConfigError {
    /// Machine-readable kind for the error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            ConfigError::Parse { .. } => "parse",
            ConfigError::UnknownKey { .. } => "unknown_key",
            ConfigError::Invalid { .. } => "validation",
            ConfigError::Profile { .. } => "profile",
            ConfigError::Io { .. } => "io",
        }
    }

    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::UnknownKey { key, .. } => Some(key),
            ConfigError::Invalid { field, .. } => Some(field),
            _ => None,
        }
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), reason: reason.into() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransmonConfig {
    pub freq_hz: f64,
    pub alpha_hz: f64,
    pub gamma_ex_hz: f64,
    pub gamma_in_hz: f64,
    pub gamma_phi_hz: f64,
    pub n_th: f64,
    pub levels: usize,
}

impl TransmonConfig {
    fn table_qubit() -> Self {
        TransmonConfig {
            freq_hz: 8.002e9,
            alpha_hz: -0.398e9,
            gamma_ex_hz: 123e3,
            gamma_in_hz: 16e3,
            gamma_phi_hz: 6e3,
            n_th: 0.29,
            levels: 3,
        }
    }

    fn table_jqf() -> Self {
        TransmonConfig {
            freq_hz: 8.011e9,
            alpha_hz: -0.387e9,
            gamma_ex_hz: 113e6,
            gamma_in_hz: 3e6,
            gamma_phi_hz: 0.0,
            n_th: 0.0,
            levels: 4,
        }
    }

    fn validate(&self, at: &str) -> Result<(), ConfigError> {
        let f = |name: &str| format!("{at}.{name}");
        positive(&f("freq_hz"), self.freq_hz)?;
        finite(&f("alpha_hz"), self.alpha_hz)?;
        positive(&f("gamma_ex_hz"), self.gamma_ex_hz)?;
        non_negative(&f("gamma_in_hz"), self.gamma_in_hz)?;
        non_negative(&f("gamma_phi_hz"), self.gamma_phi_hz)?;
        non_negative(&f("n_th"), self.n_th)?;
        if self.levels < 2 {
            return Err(invalid(&f("levels"), "a transmon needs at least 2 levels"));
        }
        Ok(())
    }

    pub fn params(&self) -> TransmonParams {
        TransmonParams::from_hz(
            self.freq_hz,
            self.alpha_hz,
            self.gamma_ex_hz,
            self.gamma_in_hz,
            self.gamma_phi_hz,
            self.n_th,
            self.levels,
        )
    }
}

impl Default for TransmonConfig {
    fn default() -> Self {
        TransmonConfig::table_qubit()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    /// Qubit-JQF separation in wavelengths at `ref_freq_hz`.
    pub d_frac: f64,
    /// Defaults to the qubit frequency.
    pub ref_freq_hz: Option<f64>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig { d_frac: 0.526, ref_freq_hz: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResonatorConfig {
    pub freq_hz: f64,
    pub kappa_ex_hz: f64,
    pub kappa_in_hz: f64,
    /// Signed; the qubit-ground resonance sits at `freq_hz + chi_hz`.
    pub chi_hz: f64,
    /// Qubit excited population seen by the resonator.
    pub p_th: f64,
}

impl Default for ResonatorConfig {
    fn default() -> Self {
        ResonatorConfig { freq_hz: 10.1564e9, kappa_ex_hz: 2.152e6, kappa_in_hz: 0.015e6, chi_hz: 0.935e6, p_th: 0.028 }
    }
}

impl ResonatorConfig {
    pub fn params(&self) -> ResonatorParams {
        ResonatorParams {
            omega_r: TWO_PI * self.freq_hz,
            kappa_ex: TWO_PI * self.kappa_ex_hz,
            kappa_in: TWO_PI * self.kappa_in_hz,
            chi: TWO_PI * self.chi_hz,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceConfig {
    pub qubit: TransmonConfig,
    /// `null` removes the JQF.
    pub jqf: Option<TransmonConfig>,
    pub geometry: GeometryConfig,
    pub resonator: Option<ResonatorConfig>,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig {
            qubit: TransmonConfig::table_qubit(),
            jqf: Some(TransmonConfig::table_jqf()),
            geometry: GeometryConfig::default(),
            resonator: Some(ResonatorConfig::default()),
        }
    }
}

impl DeviceConfig {
    pub fn model(&self) -> DeviceModel {
        let qubit = self.qubit.params();
        let omega_ref = TWO_PI * self.geometry.ref_freq_hz.unwrap_or(self.qubit.freq_hz);
        DeviceModel {
            qubit,
            jqf: self.jqf.as_ref().map(TransmonConfig::params),
            geometry: WaveguideGeometry::new(self.geometry.d_frac, omega_ref),
            resonator: self.resonator.as_ref().map(ResonatorConfig::params),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JqfSpectrumConfig {
    pub power_dbm: f64,
    /// Centred on the JQF frequency.
    pub span_hz: f64,
    pub points: usize,
    /// Geometric factor of the JQF reflection; `null` uses `cos θ(ω_f)`.
    pub cos_factor: Option<f64>,
}

impl Default for JqfSpectrumConfig {
    fn default() -> Self {
        JqfSpectrumConfig { power_dbm: -146.0, span_hz: 600e6, points: 601, cos_factor: None }
    }
}

/// Missing fields come from the layered defaults, which differ per spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpectrumConfig {
    pub power_dbm: f64,
    pub span_hz: f64,
    pub points: usize,
    /// Measurement-chain phase offset, referred to zero frequency.
    pub phase_offset_rad: f64,
    /// Electrical delay of the measurement chain.
    pub delay_s: f64,
}

impl ChainSpectrumConfig {
    fn qubit() -> Self {
        ChainSpectrumConfig { power_dbm: -170.0, span_hz: 2e6, points: 401, phase_offset_rad: 0.0, delay_s: 0.0 }
    }

    fn resonator() -> Self {
        ChainSpectrumConfig { power_dbm: -150.0, span_hz: 20e6, points: 801, phase_offset_rad: 0.0, delay_s: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecayConfig {
    pub points: usize,
    /// Ramsey fringes across the delay window.
    pub ramsey_fringes: f64,
    /// Delay window; `null` picks about five decay times.
    pub window_s: Option<f64>,
}

impl Default for DecayConfig {
    fn default() -> Self {
        DecayConfig { points: 161, ramsey_fringes: 8.0, window_s: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RabiConfig {
    pub photon_flux: f64,
    pub edge_sigma_s: f64,
    pub sample_dt_s: f64,
    /// Window length in nominal Rabi periods.
    pub periods: f64,
    pub points_per_period: usize,
}

impl Default for RabiConfig {
    fn default() -> Self {
        RabiConfig { photon_flux: 1.5e10, edge_sigma_s: 5e-9, sample_dt_s: 1e-9, periods: 40.0, points_per_period: 16 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    #[serde(default = "linear")]
    pub spacing: Spacing,
}

fn linear() -> Spacing {
    Spacing::Linear
}

impl AxisConfig {
    fn linear(start: f64, stop: f64, points: usize) -> Self {
        AxisConfig { start, stop, points, spacing: Spacing::Linear }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start];
        }
        let n = (self.points - 1) as f64;
        (0..self.points)
            .map(|k| {
                let u = k as f64 / n;
                if k + 1 == self.points {
                    return self.stop;
                }
                match self.spacing {
                    Spacing::Linear => self.start + (self.stop - self.start) * u,
                    Spacing::Log => (self.start.ln() + (self.stop.ln() - self.start.ln()) * u).exp(),
                }
            })
            .collect()
    }

    fn validate(&self, at: &str) -> Result<(), ConfigError> {
        finite(&format!("{at}.start"), self.start)?;
        finite(&format!("{at}.stop"), self.stop)?;
        if self.points == 0 {
            return Err(invalid(&format!("{at}.points"), "must be at least 1"));
        }
        if self.spacing == Spacing::Log && !(self.start > 0.0 && self.stop > 0.0) {
            return Err(invalid(&format!("{at}.spacing"), "log spacing needs positive endpoints"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnharmonicityConfig {
    /// JQF anharmonicity, Hz.
    pub axis: AxisConfig,
    pub photon_flux: f64,
    pub periods: f64,
    pub points_per_period: usize,
    /// Relative change of the Rabi decay time accepted between truncations.
    pub tolerance: f64,
    pub start_jqf_levels: usize,
    pub max_levels: usize,
}

impl Default for AnharmonicityConfig {
    fn default() -> Self {
        AnharmonicityConfig {
            axis: AxisConfig::linear(-0.025e9, -0.4e9, 16),
            photon_flux: 1e10,
            periods: 100.0,
            points_per_period: 20,
            tolerance: 2e-4,
            start_jqf_levels: 4,
            max_levels: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RbSection {
    pub sequence_lengths: Vec<usize>,
    pub sequences_per_length: usize,
    pub pulse_sigma_s: f64,
    /// The pulse spans `±pulse_truncation·σ`.
    pub pulse_truncation: f64,
    /// Slot length per pulse in units of the pulse duration.
    pub pulse_interval_factor: f64,
    pub sample_dt_s: f64,
}

impl Default for RbSection {
    fn default() -> Self {
        let d = RbConfig::default();
        RbSection {
            sequence_lengths: d.sequence_lengths,
            sequences_per_length: d.sequences_per_length,
            pulse_sigma_s: d.pulse_sigma,
            pulse_truncation: d.pulse_truncation,
            pulse_interval_factor: d.pulse_interval_factor,
            sample_dt_s: d.sample_dt,
        }
    }
}

impl RbSection {
    pub fn core(&self, seed: u64) -> RbConfig {
        RbConfig {
            sequence_lengths: self.sequence_lengths.clone(),
            sequences_per_length: self.sequences_per_length,
            pulse_sigma: self.pulse_sigma_s,
            pulse_truncation: self.pulse_truncation,
            pulse_interval_factor: self.pulse_interval_factor,
            rng_seed: seed,
            sample_dt: self.sample_dt_s,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResonatorFitConfig {
    /// Fixed values; `null` leaves the parameter free.
    pub freq_hz: Option<f64>,
    pub chi_hz: Option<f64>,
    pub kappa_in_hz: Option<f64>,
    pub p_th: Option<f64>,
    /// Free `κ_in` and `p_th` together even when `κ_ex + κ_in > 2|χ|`.
    pub allow_weak_identifiability: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// `exponential`, `damped-sinusoid`, `rb`, `linear`, `reflection-qubit` or
    /// `reflection-resonator`.
    pub model: Option<String>,
    /// CSV file with a header row.
    pub input: Option<String>,
    /// Columns for the real-valued models; default first and second column.
    pub x_column: Option<String>,
    pub y_column: Option<String>,
    pub resonator: ResonatorFitConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    /// Worker threads for sweeps; 0 uses all cores.
    pub threads: usize,
    pub out: String,
    /// Standard deviation of Gaussian noise added to simulated signals before fitting.
    pub noise_std: f64,
    pub device: DeviceConfig,
    pub spectrum_jqf: JqfSpectrumConfig,
    pub spectrum_qubit: ChainSpectrumConfig,
    pub spectrum_resonator: ChainSpectrumConfig,
    pub decay: DecayConfig,
    pub rabi: RabiConfig,
    /// JQF detuning from the qubit, Hz.
    pub sweep_detuning: AxisConfig,
    /// Photon flux, photons/s.
    pub sweep_amplitude: AxisConfig,
    pub sweep_anharmonicity: AnharmonicityConfig,
    /// JQF detuning from the qubit, Hz.
    pub tradeoff: AxisConfig,
    pub rb: RbSection,
    pub fit: FitConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            seed: 1,
            threads: 0,
            out: "out".into(),
            noise_std: 0.0,
            device: DeviceConfig::default(),
            spectrum_jqf: JqfSpectrumConfig::default(),
            spectrum_qubit: ChainSpectrumConfig::qubit(),
            spectrum_resonator: ChainSpectrumConfig::resonator(),
            decay: DecayConfig::default(),
            rabi: RabiConfig::default(),
            sweep_detuning: AxisConfig::linear(-150e6, 150e6, 61),
            sweep_amplitude: AxisConfig { start: 1e8, stop: 1e11, points: 13, spacing: Spacing::Log },
            sweep_anharmonicity: AnharmonicityConfig::default(),
            tradeoff: AxisConfig::linear(-60e6, 60e6, 13),
            rb: RbSection::default(),
            fit: FitConfig::default(),
        }
    }
}

impl Default for AxisConfig {
    fn default() -> Self {
        AxisConfig::linear(0.0, 0.0, 1)
    }
}

fn finite(field: &str, x: f64) -> Result<(), ConfigError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, "must be finite"))
    }
}

fn positive(field: &str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive, got {x}")))
    }
}

fn non_negative(field: &str, x: f64) -> Result<(), ConfigError> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be non-negative, got {x}")))
    }
}

fn probability(field: &str, x: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(invalid(field, format!("must lie in [0, 1], got {x}")))
    }
}

fn at_least(field: &str, n: usize, min: usize) -> Result<(), ConfigError> {
    if n >= min {
        Ok(())
    } else {
        Err(invalid(field, format!("must be at least {min}, got {n}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        non_negative("noise_std", self.noise_std)?;
        let d = &self.device;
        d.qubit.validate("device.qubit")?;
        if let Some(f) = &d.jqf {
            f.validate("device.jqf")?;
        }
        positive("device.geometry.d_frac", d.geometry.d_frac)?;
        if let Some(f) = d.geometry.ref_freq_hz {
            positive("device.geometry.ref_freq_hz", f)?;
        }
        if let Some(r) = &d.resonator {
            positive("device.resonator.freq_hz", r.freq_hz)?;
            positive("device.resonator.kappa_ex_hz", r.kappa_ex_hz)?;
            non_negative("device.resonator.kappa_in_hz", r.kappa_in_hz)?;
            finite("device.resonator.chi_hz", r.chi_hz)?;
            probability("device.resonator.p_th", r.p_th)?;
        }
        finite("spectrum_jqf.power_dbm", self.spectrum_jqf.power_dbm)?;
        positive("spectrum_jqf.span_hz", self.spectrum_jqf.span_hz)?;
        at_least("spectrum_jqf.points", self.spectrum_jqf.points, 2)?;
        if let Some(c) = self.spectrum_jqf.cos_factor {
            if !(-1.0..=1.0).contains(&c) {
                return Err(invalid("spectrum_jqf.cos_factor", "must lie in [-1, 1]"));
            }
        }
        for (name, s) in [("spectrum_qubit", &self.spectrum_qubit), ("spectrum_resonator", &self.spectrum_resonator)] {
            finite(&format!("{name}.power_dbm"), s.power_dbm)?;
            positive(&format!("{name}.span_hz"), s.span_hz)?;
            at_least(&format!("{name}.points"), s.points, 2)?;
            finite(&format!("{name}.phase_offset_rad"), s.phase_offset_rad)?;
            finite(&format!("{name}.delay_s"), s.delay_s)?;
        }
        at_least("decay.points", self.decay.points, 10)?;
        positive("decay.ramsey_fringes", self.decay.ramsey_fringes)?;
        if ((self.decay.points - 1) as f64) < 8.0 * self.decay.ramsey_fringes {
            return Err(invalid("decay.points", "Ramsey fringes need at least 8 delays per period"));
        }
        if let Some(w) = self.decay.window_s {
            positive("decay.window_s", w)?;
        }
        positive("rabi.photon_flux", self.rabi.photon_flux)?;
        non_negative("rabi.edge_sigma_s", self.rabi.edge_sigma_s)?;
        positive("rabi.sample_dt_s", self.rabi.sample_dt_s)?;
        positive("rabi.periods", self.rabi.periods)?;
        at_least("rabi.points_per_period", self.rabi.points_per_period, 8)?;
        self.sweep_detuning.validate("sweep_detuning")?;
        self.sweep_amplitude.validate("sweep_amplitude")?;
        if self.sweep_amplitude.values().iter().any(|x| !(*x > 0.0)) {
            return Err(invalid("sweep_amplitude", "photon fluxes must be positive"));
        }
        self.tradeoff.validate("tradeoff")?;
        let a = &self.sweep_anharmonicity;
        a.axis.validate("sweep_anharmonicity.axis")?;
        positive("sweep_anharmonicity.photon_flux", a.photon_flux)?;
        positive("sweep_anharmonicity.periods", a.periods)?;
        at_least("sweep_anharmonicity.points_per_period", a.points_per_period, 8)?;
        positive("sweep_anharmonicity.tolerance", a.tolerance)?;
        at_least("sweep_anharmonicity.start_jqf_levels", a.start_jqf_levels, 2)?;
        at_least("sweep_anharmonicity.max_levels", a.max_levels, a.start_jqf_levels)?;
        let rb = &self.rb;
        if rb.sequence_lengths.is_empty() || rb.sequence_lengths.contains(&0) {
            return Err(invalid("rb.sequence_lengths", "lengths must be at least 1"));
        }
        at_least("rb.sequence_lengths", rb.sequence_lengths.len(), 6)?;
        at_least("rb.sequences_per_length", rb.sequences_per_length, 1)?;
        positive("rb.pulse_sigma_s", rb.pulse_sigma_s)?;
        positive("rb.pulse_truncation", rb.pulse_truncation)?;
        if !(rb.pulse_interval_factor >= 1.0) {
            return Err(invalid("rb.pulse_interval_factor", "must be at least 1"));
        }
        positive("rb.sample_dt_s", rb.sample_dt_s)?;
        let fr = &self.fit.resonator;
        if let Some(p) = fr.p_th {
            probability("fit.resonator.p_th", p)?;
        }
        if let Some(k) = fr.kappa_in_hz {
            non_negative("fit.resonator.kappa_in_hz", k)?;
        }
        Ok(())
    }
}

/// Where a named profile is looked up.
#[derive(Clone, Debug, Default)]
pub struct ProfileSource {
    /// Overrides the bundled profiles when set.
    pub dir: Option<PathBuf>,
}

impl ProfileSource {
    pub fn from_env() -> Self {
        ProfileSource { dir: std::env::var_os(PROFILE_DIR_ENV).map(PathBuf::from) }
    }

    /// Profile text and a label for error messages.
    pub fn load(&self, name: &str) -> Result<(String, String), ConfigError> {
        if let Some(dir) = &self.dir {
            let path = dir.join(format!("{name}.json"));
            if path.is_file() {
                let text = read(&path)?;
                return Ok((text, path.display().to_string()));
            }
        }
        if let Some((_, text)) = BUILTIN_PROFILES.iter().find(|(n, _)| *n == name) {
            return Ok((text.to_string(), format!("profile {name}")));
        }
        let searched = match &self.dir {
            Some(d) => format!("{} and the bundled profiles", d.display()),
            None => "the bundled profiles".to_string(),
        };
        Err(ConfigError::Profile { name: name.to_string(), searched })
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })
}

/// Parses a JSON object; blank text counts as `{}`.
pub fn parse_object(text: &str, label: &str) -> Result<Map<String, Value>, ConfigError> {
    if text.trim().is_empty() {
        return Ok(Map::new());
    }
    let value: Value = serde_json::from_str(text).map_err(|e| {
        let full = e.to_string();
        let suffix = format!(" at line {} column {}", e.line(), e.column());
        ConfigError::Parse {
            path: label.to_string(),
            line: e.line(),
            column: e.column(),
            message: full.strip_suffix(&suffix).unwrap_or(&full).to_string(),
        }
    })?;
    match value {
        Value::Object(m) => Ok(m),
        _ => Err(ConfigError::Parse {
            path: label.to_string(),
            line: 1,
            column: 1,
            message: "top level must be a JSON object".into(),
        }),
    }
}

/// Rejects keys that the schema does not know, suggesting the closest known key.
pub fn check_keys(value: &Map<String, Value>) -> Result<(), ConfigError> {
    let schema = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
    check_object(value, schema.as_object().expect("object"), "")
}

fn check_object(value: &Map<String, Value>, schema: &Map<String, Value>, prefix: &str) -> Result<(), ConfigError> {
    for (k, v) in value {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        let Some(s) = schema.get(k) else {
            let suggestion = schema
                .keys()
                .map(|c| (strsim::jaro_winkler(k, c), c))
                .filter(|(score, _)| *score > 0.7)
                .max_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, c)| if prefix.is_empty() { c.clone() } else { format!("{prefix}.{c}") });
            return Err(ConfigError::UnknownKey { key: path, suggestion });
        };
        if let (Value::Object(vo), Value::Object(so)) = (v, s) {
            check_object(vo, so, &path)?;
        }
    }
    Ok(())
}

/// Recursive merge; objects merge key by key, anything else replaces.
pub fn merge(base: &mut Map<String, Value>, overlay: Map<String, Value>) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(Value::Object(b)), Value::Object(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Command-line values that take precedence over every file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<String>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

/// Defaults, then the profile, then the config file, then overrides.
pub fn resolve(
    profile: Option<&str>,
    config: Option<&Path>,
    overrides: &Overrides,
    profiles: &ProfileSource,
) -> Result<RunConfig, ConfigError> {
    let (profile_text, profile_label) = profiles.load(profile.unwrap_or(DEFAULT_PROFILE))?;
    let profile_map = parse_object(&profile_text, &profile_label)?;
    check_keys(&profile_map)?;
    let mut merged = match serde_json::to_value(RunConfig::default()).expect("defaults serialize") {
        Value::Object(m) => m,
        _ => unreachable!(),
    };
    merge(&mut merged, profile_map);
    if let Some(path) = config {
        let user = parse_object(&read(path)?, &path.display().to_string())?;
        check_keys(&user)?;
        merge(&mut merged, user);
    }
    from_map(merged, overrides)
}

/// Resolves a config given as text (defaults and profile already merged in `base`).
pub fn from_map(mut merged: Map<String, Value>, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    if let Some(out) = &overrides.out {
        merged.insert("out".into(), Value::String(out.clone()));
    }
    if let Some(seed) = overrides.seed {
        merged.insert("seed".into(), Value::from(seed));
    }
    if let Some(t) = overrides.threads {
        merged.insert("threads".into(), Value::from(t));
    }
    let cfg: RunConfig = serde_path_to_error::deserialize(Value::Object(merged))
        .map_err(|e| invalid(&e.path().to_string(), e.inner().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundled() -> ProfileSource {
        ProfileSource { dir: None }
    }

    fn from_text(text: &str) -> Result<RunConfig, ConfigError> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, text).unwrap();
        resolve(None, Some(&path), &Overrides::default(), &bundled())
    }

    #[test]
    fn empty_file_gives_table_device() {
        let cfg = from_text("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let d = cfg.device.model();
        assert!((d.qubit.omega / TWO_PI - 8.002e9).abs() < 1e-3);
        assert!((d.qubit.gamma_ex / TWO_PI - 123e3).abs() < 1e-9);
        assert_eq!(d.jqf.unwrap().levels, 4);
        assert_eq!(from_text("  \n").unwrap(), cfg);
    }

    #[test]
    fn negative_rate_names_field() {
        let e = from_text(r#"{"device": {"qubit": {"gamma_ex_hz": -1}}}"#).unwrap_err();
        assert_eq!(e.field(), Some("device.qubit.gamma_ex_hz"));
        assert_eq!(e.kind(), "validation");
    }

    #[test]
    fn unknown_key_suggests() {
        let e = from_text(r#"{"device": {"qubit": {"gama_ex_hz": 1e5}}}"#).unwrap_err();
        match e {
            ConfigError::UnknownKey { key, suggestion } => {
                assert_eq!(key, "device.qubit.gama_ex_hz");
                assert_eq!(suggestion.as_deref(), Some("device.qubit.gamma_ex_hz"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn parse_error_has_line() {
        let e = from_text("{\n  \"seed\": 3,\n  \"out\" \"x\"\n}").unwrap_err();
        match e {
            ConfigError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn type_error_names_field() {
        let e = from_text(r#"{"device": {"jqf": {"levels": "four"}}}"#).unwrap_err();
        assert_eq!(e.field(), Some("device.jqf.levels"));
    }

    #[test]
    fn jqf_can_be_removed() {
        let cfg = from_text(r#"{"device": {"jqf": null}}"#).unwrap();
        assert!(cfg.device.model().jqf.is_none());
    }

    #[test]
    fn overrides_win() {
        let o = Overrides { out: Some("elsewhere".into()), seed: Some(9), threads: Some(2) };
        let cfg = resolve(None, None, &o, &bundled()).unwrap();
        assert_eq!((cfg.out.as_str(), cfg.seed, cfg.threads), ("elsewhere", 9, 2));
    }

    #[test]
    fn fig_s4_profile() {
        let cfg = resolve(Some("fig_s4"), None, &Overrides::default(), &bundled()).unwrap();
        let d = cfg.device.model();
        assert_eq!(d.qubit.levels, 2);
        assert_eq!(d.qubit.gamma_in, 0.0);
        assert!((d.jqf.unwrap().gamma_ex / TWO_PI - 100e6).abs() < 1e-6);
        assert!(d.resonator.is_none());
    }

    #[test]
    fn profile_dir_overrides_bundled() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("table_s1.json"), r#"{"seed": 42}"#).unwrap();
        let src = ProfileSource { dir: Some(dir.path().to_path_buf()) };
        assert_eq!(resolve(None, None, &Overrides::default(), &src).unwrap().seed, 42);
        assert!(matches!(
            resolve(Some("missing"), None, &Overrides::default(), &src),
            Err(ConfigError::Profile { .. })
        ));
    }

    #[test]
    fn axis_spacing() {
        let a = AxisConfig { start: 1.0, stop: 100.0, points: 3, spacing: Spacing::Log };
        let v = a.values();
        assert!((v[1] - 10.0).abs() < 1e-12 && v[2] == 100.0);
        assert_eq!(AxisConfig::linear(-1.0, 1.0, 3).values(), vec![-1.0, 0.0, 1.0]);
    }
}
