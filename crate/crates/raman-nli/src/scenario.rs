//! Scenario ingestion and orchestration: JSON configs in engineering units,
//! measured Raman-gain CSV tables, and end-to-end runs of the analytic models
//! and the split-step simulator with matched plans and seeds.
//!
//! A scenario file describes one link study in four blocks — `fiber`
//! (engineering units: dB/km, ps/nm/km, µm², km), `raman` (analytic fit
//! parameters or a measured co-polarized gain table), `plan` (an explicit
//! channel list or a WDM grid with an occupancy draw), and `run` (which model
//! to execute and its controls). Every omitted value is filled from the
//! single-span reference system used throughout the crate and flagged in
//! [`LoadedScenario::defaults_applied`], so a run log always states exactly
//! what was computed. The loaded config is echoed back in concrete form:
//! re-loading the echo reproduces the run bit for bit.
//!
//! Four models are exposed through one result schema ([`ResultRow`]):
//! `gn-integral` evaluates the spectrally resolved interference integral,
//! `closed-form` assembles per-channel coefficients from the self/cross
//! scaling factors, `ssfm` measures the same quantities by simulation, and
//! `compare` runs model and simulation on an identical snapped plan and
//! reports the per-channel difference.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::fiber::{
    build_psd, dispersion_coefficients, Channel, ChannelPlan, FiberError, FiberSpec, WdmGrid,
};
use crate::gn::{
    delta_eta, evaluate_plan, pair_coefficients, scaling_xpm, xpm_closed_form_total,
    GnError, GnIntegrator, NliConfig, ProfileSource, ScalingFactors,
};
use crate::profile::{log_z_grid, raman_ode_profile, triangular_profile, PowerProfile, ProfileError};
use crate::raman::{
    analytic_gain_spectrum, raman_time_constant, NonlinearTransfer, Polarization, RamanError,
    RamanFitParams, RamanSpectrum,
};
use crate::ssfm::{
    check_convergence, measure_delta_eta, snapped_plan, SimGrid, SsfmConfig, SsfmError,
    StepDistribution,
};
use crate::units::{
    db_per_km_to_inv_m, dbm_to_watts, linear_to_db, ps_nm2_km_to_s_m3, ps_nm_km_to_s_m2,
    watts_to_dbm,
};

/// Errors from scenario loading, validation, and orchestration.
///
/// [`ScenarioError::exit_code`] maps each variant onto the process exit-code
/// contract: 2 for configuration problems, 3 for convergence failures, 1 for
/// anything internal.
#[derive(Debug, Error)]
pub enum ScenarioError {
    /// The config text does not parse or violates the schema.
    #[error("config schema: {0}")]
    Schema(String),
    /// A parsed value is out of range or inconsistent.
    #[error("config value `{field}`: {message}")]
    InvalidValue { field: String, message: String },
    /// A referenced file is missing or unreadable.
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    /// A gain-table row failed validation (`row` counts data rows from 1).
    #[error("gain table row {row}: {message}")]
    GainTable { row: usize, message: String },
    /// The simulation cannot meet, or failed to demonstrate, convergence.
    #[error("convergence: {0}")]
    Convergence(String),
    /// Output emission failed.
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    /// CSV emission failed.
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    /// An internal model stage failed on inputs that passed validation.
    #[error("model: {0}")]
    Model(String),
}

impl ScenarioError {
    /// Process exit code for this error: 2 config, 3 convergence, 1 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Schema(_)
            | ScenarioError::InvalidValue { .. }
            | ScenarioError::File { .. }
            | ScenarioError::GainTable { .. } => 2,
            ScenarioError::Convergence(_) => 3,
            _ => 1,
        }
    }

    fn invalid(field: &str, message: impl Into<String>) -> Self {
        ScenarioError::InvalidValue {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

impl From<SsfmError> for ScenarioError {
    fn from(e: SsfmError) -> Self {
        match e {
            SsfmError::Convergence(msg) => ScenarioError::Convergence(msg),
            SsfmError::Divergence { .. } => ScenarioError::Model(e.to_string()),
            SsfmError::Grid(msg) | SsfmError::InvalidInput(msg) => {
                ScenarioError::invalid("run.ssfm", msg)
            }
            other => ScenarioError::Model(other.to_string()),
        }
    }
}

impl From<GnError> for ScenarioError {
    fn from(e: GnError) -> Self {
        match e {
            GnError::InvalidInput(msg) => ScenarioError::invalid("run.gn", msg),
            other => ScenarioError::Model(other.to_string()),
        }
    }
}

impl From<FiberError> for ScenarioError {
    fn from(e: FiberError) -> Self {
        ScenarioError::invalid("fiber/plan", e.to_string())
    }
}

impl From<RamanError> for ScenarioError {
    fn from(e: RamanError) -> Self {
        ScenarioError::invalid("raman", e.to_string())
    }
}

impl From<ProfileError> for ScenarioError {
    fn from(e: ProfileError) -> Self {
        ScenarioError::Model(format!("power profile: {e}"))
    }
}

// ---------------------------------------------------------------------------
// Config schema
// ---------------------------------------------------------------------------

fn d_schema_version() -> u32 {
    1
}
fn d_attenuation_db_per_km() -> f64 {
    0.16
}
fn d_dispersion_ps_nm_km() -> f64 {
    16.4
}
fn d_dispersion_slope() -> f64 {
    0.067
}
fn d_effective_area_um2() -> f64 {
    81.8
}
fn d_reference_wavelength_nm() -> f64 {
    1550.0
}
fn d_n2() -> f64 {
    2.1e-20
}
fn d_span_length_km() -> f64 {
    100.0
}
fn d_spans() -> u32 {
    1
}
fn d_raman_slope() -> f64 {
    RamanFitParams::default().slope_m_per_w_hz
}
fn d_raman_support() -> f64 {
    RamanFitParams::default().support_hz
}
fn d_raman_sine_amplitude() -> f64 {
    RamanFitParams::default().sine_amplitude_m_per_w
}
fn d_raman_sine_rate() -> f64 {
    RamanFitParams::default().sine_rate_rad_per_hz
}
fn d_raman_real_offset() -> f64 {
    RamanFitParams::default().real_offset_m_per_w
}
fn d_occupancy_seed() -> u64 {
    1
}
fn d_true() -> bool {
    true
}
fn d_rel_tol() -> f64 {
    1e-3
}
fn d_max_depth() -> u32 {
    22
}
fn d_steps_per_span() -> usize {
    1000
}
fn d_n_symbols() -> usize {
    8192
}
fn d_realizations() -> usize {
    4
}
fn d_ssfm_seed() -> u64 {
    7
}

/// Fiber block in engineering units; every field has a reference default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberConfig {
    #[serde(default = "d_attenuation_db_per_km")]
    pub attenuation_db_per_km: f64,
    #[serde(default = "d_dispersion_ps_nm_km")]
    pub dispersion_ps_nm_km: f64,
    #[serde(default = "d_dispersion_slope")]
    pub dispersion_slope_ps_nm2_km: f64,
    /// Kerr coefficient (1/W/km). `null` derives 2π·n2/(λ0·A_eff).
    #[serde(default)]
    pub gamma_per_w_km: Option<f64>,
    #[serde(default = "d_effective_area_um2")]
    pub effective_area_um2: f64,
    #[serde(default = "d_reference_wavelength_nm")]
    pub reference_wavelength_nm: f64,
    #[serde(default = "d_n2")]
    pub n2_m2_per_w: f64,
    #[serde(default = "d_span_length_km")]
    pub span_length_km: f64,
    #[serde(default = "d_spans")]
    pub spans: u32,
}

impl Default for FiberConfig {
    fn default() -> Self {
        serde_json::from_value(Value::Object(Default::default())).expect("defaults are total")
    }
}

/// How the Raman spectrum is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RamanMode {
    /// Closed-form gain fit plus its exact transform.
    Analytic,
    /// Tabulated co-polarized gain from a CSV, transformed numerically.
    Measured,
}

fn d_raman_mode() -> RamanMode {
    RamanMode::Analytic
}

/// Raman block: fit parameters (analytic mode) or a gain-table path
/// (measured mode), plus the normalization constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RamanConfig {
    #[serde(default = "d_raman_mode")]
    pub mode: RamanMode,
    #[serde(default = "d_raman_slope")]
    pub slope_m_per_w_hz: f64,
    #[serde(default = "d_raman_support")]
    pub support_hz: f64,
    #[serde(default = "d_raman_sine_amplitude")]
    pub sine_amplitude_m_per_w: f64,
    #[serde(default = "d_raman_sine_rate")]
    pub sine_rate_rad_per_hz: f64,
    #[serde(default = "d_raman_real_offset")]
    pub real_offset_m_per_w: f64,
    /// Gain-table CSV (`freq_hz,gain_m_per_w`), required in measured mode.
    #[serde(default)]
    pub csv_path: Option<String>,
    /// Set when the CSV holds polarization-averaged gain; values are doubled
    /// on ingest to recover the co-polarized spectrum.
    #[serde(default)]
    pub polarization_averaged: bool,
    /// Nonlinear index used to normalize the spectrum; `null` copies the
    /// fiber value.
    #[serde(default)]
    pub n2: Option<f64>,
    /// Normalization wavelength (nm); `null` copies the fiber reference.
    #[serde(default)]
    pub lambda0_nm: Option<f64>,
    /// Forces the fractional Raman contribution after construction
    /// (model studies only; the simulator always derives it from the
    /// spectrum).
    #[serde(default)]
    pub fractional_raman_override: Option<f64>,
}

impl Default for RamanConfig {
    fn default() -> Self {
        serde_json::from_value(Value::Object(Default::default())).expect("defaults are total")
    }
}

/// Uniform WDM grid with an occupancy specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPlanConfig {
    pub slots: usize,
    pub spacing_ghz: f64,
    pub symbol_rate_gbd: f64,
    #[serde(default)]
    pub roll_off: f64,
    pub power_dbm: f64,
    /// Occupied fraction drawn with `occupancy_seed`; mutually exclusive
    /// with `occupied_slots`. Loading materializes the draw into
    /// `occupied_slots` so the echoed config is exact.
    #[serde(default)]
    pub occupancy: Option<f64>,
    #[serde(default = "d_occupancy_seed")]
    pub occupancy_seed: u64,
    #[serde(default)]
    pub occupied_slots: Option<Vec<usize>>,
}

/// One explicitly placed channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub center_ghz: f64,
    pub symbol_rate_gbd: f64,
    pub power_dbm: f64,
    #[serde(default)]
    pub roll_off: f64,
    #[serde(default = "d_true")]
    pub occupied: bool,
}

/// Plan block: exactly one of `grid` or `channels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    #[serde(default)]
    pub grid: Option<GridPlanConfig>,
    #[serde(default)]
    pub channels: Option<Vec<ChannelConfig>>,
}

/// Which estimate a run produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunModel {
    /// Spectrally resolved interference integral.
    GnIntegral,
    /// Scaling-factor assembly from restricted-window coefficients.
    ClosedForm,
    /// Split-step simulation.
    Ssfm,
    /// Model and simulation on one snapped plan, with difference columns.
    Compare,
}

fn d_run_model() -> RunModel {
    RunModel::GnIntegral
}
fn d_polarization() -> Polarization {
    Polarization::Dual
}
fn d_profile_source() -> ProfileSource {
    ProfileSource::Triangular
}
fn d_distribution() -> StepDistribution {
    StepDistribution::Logarithmic
}

/// Controls for the interference integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GnRunConfig {
    #[serde(default = "d_profile_source")]
    pub profile: ProfileSource,
    /// Outer-quadrature seeding resolution (GHz); `null` resolves to an
    /// eighth of the narrowest symbol rate.
    #[serde(default)]
    pub resolution_ghz: Option<f64>,
    #[serde(default = "d_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "d_max_depth")]
    pub max_depth: u32,
}

impl Default for GnRunConfig {
    fn default() -> Self {
        serde_json::from_value(Value::Object(Default::default())).expect("defaults are total")
    }
}

/// Controls for the split-step simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsfmRunConfig {
    #[serde(default = "d_steps_per_span")]
    pub steps_per_span: usize,
    /// Symbols per narrowest channel; a power of two.
    #[serde(default = "d_n_symbols")]
    pub n_symbols: usize,
    #[serde(default = "d_realizations")]
    pub realizations: usize,
    #[serde(default = "d_ssfm_seed")]
    pub seed: u64,
    #[serde(default = "d_distribution")]
    pub distribution: StepDistribution,
    /// Simulation sample rate (GHz); `null` picks the smallest power-of-two
    /// multiple of the narrowest symbol rate that keeps both the field and
    /// the pump-probe beats between the outermost channels unaliased.
    #[serde(default)]
    pub sample_rate_ghz: Option<f64>,
    /// Re-run at half the step count and flag the result unconverged when
    /// any channel moves by 0.02 dB or more.
    #[serde(default)]
    pub check_convergence: bool,
}

impl Default for SsfmRunConfig {
    fn default() -> Self {
        serde_json::from_value(Value::Object(Default::default())).expect("defaults are total")
    }
}

/// Run block: model selection and its controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "d_run_model")]
    pub model: RunModel,
    #[serde(default = "d_polarization")]
    pub polarization: Polarization,
    /// Channels of interest (plan indices); empty means every occupied one.
    #[serde(default)]
    pub channels: Vec<usize>,
    /// Channels receiving ideal single-channel back-propagation.
    #[serde(default)]
    pub dbp_channels: Vec<usize>,
    /// Amplifier noise power per channel (dBm); `null` disables noise.
    #[serde(default)]
    pub p_ase_dbm: Option<f64>,
    #[serde(default)]
    pub gn: GnRunConfig,
    #[serde(default)]
    pub ssfm: SsfmRunConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_value(Value::Object(Default::default())).expect("defaults are total")
    }
}

/// One complete scenario in concrete form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "d_schema_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub fiber: FiberConfig,
    #[serde(default)]
    pub raman: RamanConfig,
    /// Absent for runs that need no channels (spectrum and scaling dumps).
    #[serde(default)]
    pub plan: Option<PlanConfig>,
    #[serde(default)]
    pub run: RunConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        serde_json::from_value(Value::Object(Default::default())).expect("defaults are total")
    }
}

/// A validated scenario: the concrete config plus the load bookkeeping.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub config: ScenarioConfig,
    /// Directory for resolving relative file references.
    pub base_dir: PathBuf,
    /// Human-readable list of every defaulted field with its value.
    pub defaults_applied: Vec<String>,
    /// Sanity and policy warnings (never fatal).
    pub warnings: Vec<String>,
    /// Non-warning load notes (occupancy draws, derived values).
    pub notes: Vec<String>,
}

// Every defaultable leaf, as (JSON pointer, echo line). A missing parent
// block marks all its children as defaulted.
const DEFAULT_NOTES: &[(&str, &str)] = &[
    ("/fiber/attenuation_db_per_km", "fiber.attenuation_db_per_km = 0.16"),
    ("/fiber/dispersion_ps_nm_km", "fiber.dispersion_ps_nm_km = 16.4"),
    (
        "/fiber/dispersion_slope_ps_nm2_km",
        "fiber.dispersion_slope_ps_nm2_km = 0.067",
    ),
    (
        "/fiber/gamma_per_w_km",
        "fiber.gamma_per_w_km derived from n2, lambda0, and A_eff",
    ),
    ("/fiber/effective_area_um2", "fiber.effective_area_um2 = 81.8"),
    (
        "/fiber/reference_wavelength_nm",
        "fiber.reference_wavelength_nm = 1550",
    ),
    ("/fiber/n2_m2_per_w", "fiber.n2_m2_per_w = 2.1e-20"),
    ("/fiber/span_length_km", "fiber.span_length_km = 100"),
    ("/fiber/spans", "fiber.spans = 1"),
    ("/raman/mode", "raman.mode = analytic"),
    ("/raman/slope_m_per_w_hz", "raman.slope_m_per_w_hz = 3.87e-27"),
    ("/raman/support_hz", "raman.support_hz = 3e13"),
    (
        "/raman/sine_amplitude_m_per_w",
        "raman.sine_amplitude_m_per_w = 4.2e-15",
    ),
    (
        "/raman/sine_rate_rad_per_hz",
        "raman.sine_rate_rad_per_hz = 7.2e-13",
    ),
    (
        "/raman/real_offset_m_per_w",
        "raman.real_offset_m_per_w = -2.12e-15",
    ),
    ("/raman/n2", "raman.n2 copied from fiber.n2_m2_per_w"),
    ("/raman/lambda0_nm", "raman.lambda0_nm copied from fiber.reference_wavelength_nm"),
    ("/run/model", "run.model = gn-integral"),
    ("/run/polarization", "run.polarization = dual"),
    ("/run/gn/profile", "run.gn.profile = triangular"),
    (
        "/run/gn/resolution_ghz",
        "run.gn.resolution_ghz resolved to min symbol rate / 8",
    ),
    ("/run/gn/rel_tol", "run.gn.rel_tol = 0.001"),
    ("/run/gn/max_depth", "run.gn.max_depth = 22"),
    ("/run/ssfm/steps_per_span", "run.ssfm.steps_per_span = 1000"),
    ("/run/ssfm/n_symbols", "run.ssfm.n_symbols = 8192"),
    ("/run/ssfm/realizations", "run.ssfm.realizations = 4"),
    ("/run/ssfm/seed", "run.ssfm.seed = 7"),
    (
        "/run/ssfm/distribution",
        "run.ssfm.distribution = logarithmic",
    ),
];

/// Applies repeatable `key.path=value` overrides onto a raw config value.
///
/// Keys are dotted object paths; missing intermediate objects are created.
/// Values parse as JSON scalars, falling back to a plain string, so
/// `raman.n2=2.6e-20`, `run.model=ssfm`, and `run.ssfm.check_convergence=true`
/// all do what they look like.
pub fn apply_overrides(raw: &mut Value, overrides: &[String]) -> Result<(), ScenarioError> {
    for item in overrides {
        let (key, text) = item.split_once('=').ok_or_else(|| {
            ScenarioError::Schema(format!("override `{item}` is not of the form key.path=value"))
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ScenarioError::Schema(format!(
                "override `{item}` has an empty key"
            )));
        }
        let value: Value = serde_json::from_str(text.trim())
            .unwrap_or_else(|_| Value::String(text.trim().to_string()));
        let segments: Vec<&str> = key.split('.').collect();
        let (last, parents) = segments.split_last().expect("split produces a segment");
        let mut node = &mut *raw;
        for (i, seg) in parents.iter().enumerate() {
            let map = match node {
                Value::Object(map) => map,
                _ => {
                    return Err(ScenarioError::Schema(format!(
                        "override `{key}` descends into non-object at `{}`",
                        segments[..i].join(".")
                    )));
                }
            };
            node = map
                .entry(seg.to_string())
                .or_insert_with(|| Value::Object(Default::default()));
        }
        match node {
            Value::Object(map) => {
                map.insert(last.to_string(), value);
            }
            _ => {
                return Err(ScenarioError::Schema(format!(
                    "override `{key}` descends into non-object at `{}`",
                    parents.join(".")
                )));
            }
        }
    }
    Ok(())
}

/// Loads and validates a scenario file, resolving every default.
pub fn load_scenario(path: &Path) -> Result<LoadedScenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::File {
        path: path.to_path_buf(),
        source,
    })?;
    let raw: Value = serde_json::from_str(&text)
        .map_err(|e| ScenarioError::Schema(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    load_scenario_value(raw, base)
}

/// Validates an in-memory raw config (the no-file and post-override path).
pub fn load_scenario_value(raw: Value, base_dir: PathBuf) -> Result<LoadedScenario, ScenarioError> {
    if !raw.is_object() {
        return Err(ScenarioError::Schema(
            "top-level config must be a JSON object".into(),
        ));
    }
    let defaults_applied: Vec<String> = DEFAULT_NOTES
        .iter()
        .filter(|(ptr, _)| raw.pointer(ptr).map_or(true, Value::is_null))
        .map(|(_, note)| note.to_string())
        .collect();
    let mut warnings = Vec::new();
    if raw.pointer("/raman").map_or(true, Value::is_null) {
        warnings.push(
            "no raman block: using the analytic-fit spectrum of the reference fiber".to_string(),
        );
    }
    let mut config: ScenarioConfig =
        serde_json::from_value(raw).map_err(|e| ScenarioError::Schema(e.to_string()))?;
    let mut notes = Vec::new();
    resolve(&mut config, &mut warnings, &mut notes)?;
    Ok(LoadedScenario {
        config,
        base_dir,
        defaults_applied,
        warnings,
        notes,
    })
}

/// Fills derived values, checks ranges, and emits sanity warnings.
fn resolve(
    config: &mut ScenarioConfig,
    warnings: &mut Vec<String>,
    notes: &mut Vec<String>,
) -> Result<(), ScenarioError> {
    if config.schema_version != 1 {
        return Err(ScenarioError::invalid(
            "schema_version",
            format!("unsupported version {}, expected 1", config.schema_version),
        ));
    }
    let f = &mut config.fiber;
    let lambda0_m = f.reference_wavelength_nm * 1e-9;
    let a_eff_m2 = f.effective_area_um2 * 1e-12;
    let consistent = 2.0 * std::f64::consts::PI * f.n2_m2_per_w / (lambda0_m * a_eff_m2) * 1e3;
    match f.gamma_per_w_km {
        None => {
            f.gamma_per_w_km = Some(consistent);
            notes.push(format!(
                "fiber.gamma_per_w_km derived as {consistent:.6} 1/W/km"
            ));
        }
        Some(g) => {
            if !(g > 0.0) {
                return Err(ScenarioError::invalid(
                    "fiber.gamma_per_w_km",
                    "must be positive",
                ));
            }
            if ((g - consistent) / consistent).abs() > 0.01 {
                warnings.push(format!(
                    "fiber.gamma_per_w_km = {g:.6} differs from 2π·n2/(λ0·A_eff) = \
                     {consistent:.6} by more than 1%; the Kerr and Raman scales disagree"
                ));
            }
        }
    }
    sanity(warnings, "fiber.attenuation_db_per_km", f.attenuation_db_per_km, 0.05, 1.0);
    sanity(warnings, "fiber.dispersion_ps_nm_km", f.dispersion_ps_nm_km, -30.0, 30.0);
    sanity(warnings, "fiber.effective_area_um2", f.effective_area_um2, 20.0, 200.0);
    sanity(warnings, "fiber.reference_wavelength_nm", f.reference_wavelength_nm, 1000.0, 2000.0);
    sanity(warnings, "fiber.n2_m2_per_w", f.n2_m2_per_w, 1e-21, 1e-19);
    sanity(warnings, "fiber.span_length_km", f.span_length_km, 0.1, 2000.0);
    if f.spans == 0 {
        return Err(ScenarioError::invalid("fiber.spans", "must be at least 1"));
    }

    let r = &mut config.raman;
    if r.n2.is_none() {
        r.n2 = Some(config.fiber.n2_m2_per_w);
    }
    if r.lambda0_nm.is_none() {
        r.lambda0_nm = Some(config.fiber.reference_wavelength_nm);
    }
    if r.mode == RamanMode::Measured && r.csv_path.is_none() {
        return Err(ScenarioError::invalid(
            "raman.csv_path",
            "measured mode needs a gain-table CSV path",
        ));
    }
    if let Some(fr) = r.fractional_raman_override {
        if !(0.0..1.0).contains(&fr) {
            return Err(ScenarioError::invalid(
                "raman.fractional_raman_override",
                format!("{fr} outside [0, 1)"),
            ));
        }
    }

    if let Some(plan) = &mut config.plan {
        match (&mut plan.grid, &plan.channels) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(ScenarioError::invalid(
                    "plan",
                    "give exactly one of `grid` or `channels`",
                ));
            }
            (Some(grid), None) => {
                if grid.slots == 0 {
                    return Err(ScenarioError::invalid("plan.grid.slots", "must be positive"));
                }
                sanity(warnings, "plan.grid.power_dbm", grid.power_dbm, -20.0, 25.0);
                match (grid.occupancy, &grid.occupied_slots) {
                    (Some(_), Some(_)) => {
                        return Err(ScenarioError::invalid(
                            "plan.grid",
                            "give at most one of `occupancy` and `occupied_slots`",
                        ));
                    }
                    (Some(frac), None) => {
                        let wdm = wdm_grid(grid);
                        let drawn = crate::fiber::sample_network_occupancy(
                            &wdm,
                            frac,
                            grid.occupancy_seed,
                        )?;
                        let slots: Vec<usize> = drawn
                            .channels
                            .iter()
                            .enumerate()
                            .filter(|(_, c)| c.occupied)
                            .map(|(i, _)| i)
                            .collect();
                        notes.push(format!(
                            "plan.grid.occupancy {frac} with seed {} drew slots {slots:?}",
                            grid.occupancy_seed
                        ));
                        grid.occupied_slots = Some(slots);
                        grid.occupancy = None;
                    }
                    (None, Some(slots)) => {
                        let mut sorted = slots.clone();
                        sorted.sort_unstable();
                        sorted.dedup();
                        if sorted.len() != slots.len() {
                            return Err(ScenarioError::invalid(
                                "plan.grid.occupied_slots",
                                "slot indices must be distinct",
                            ));
                        }
                        if let Some(&bad) = sorted.iter().find(|&&s| s >= grid.slots) {
                            return Err(ScenarioError::invalid(
                                "plan.grid.occupied_slots",
                                format!("slot {bad} outside the {}-slot grid", grid.slots),
                            ));
                        }
                    }
                    (None, None) => {
                        notes.push("plan.grid fully packed (no occupancy given)".to_string());
                        grid.occupied_slots = Some((0..grid.slots).collect());
                    }
                }
            }
            (None, Some(channels)) => {
                if channels.is_empty() {
                    return Err(ScenarioError::invalid("plan.channels", "must not be empty"));
                }
                for (i, ch) in channels.iter().enumerate() {
                    sanity(
                        warnings,
                        &format!("plan.channels[{i}].power_dbm"),
                        ch.power_dbm,
                        -20.0,
                        25.0,
                    );
                }
            }
        }
    }

    let run = &mut config.run;
    if run.gn.resolution_ghz.is_none() {
        if let Some(plan_cfg) = &config.plan {
            let plan = plan_from_config(plan_cfg)?;
            if let Some(min_rate) = plan.min_symbol_rate() {
                run.gn.resolution_ghz = Some(min_rate / 8.0 / 1e9);
            }
        }
    }
    if !run.ssfm.n_symbols.is_power_of_two() {
        return Err(ScenarioError::invalid(
            "run.ssfm.n_symbols",
            format!("{} is not a power of two", run.ssfm.n_symbols),
        ));
    }
    let simulates = matches!(run.model, RunModel::Ssfm | RunModel::Compare);
    if simulates {
        if config.fiber.spans != 1 {
            return Err(ScenarioError::invalid(
                "fiber.spans",
                "the simulator models a single span; set spans = 1 for ssfm and compare runs",
            ));
        }
        if config.raman.fractional_raman_override.is_some() {
            return Err(ScenarioError::invalid(
                "raman.fractional_raman_override",
                "applies to model computations only; the simulator derives the fraction \
                 from the spectrum",
            ));
        }
        if run.p_ase_dbm.is_some() {
            warnings.push(
                "run.p_ase_dbm is ignored by the simulator (no noise loading)".to_string(),
            );
        }
    }
    Ok(())
}

fn sanity(warnings: &mut Vec<String>, field: &str, value: f64, lo: f64, hi: f64) {
    if !value.is_finite() || value < lo || value > hi {
        warnings.push(format!(
            "{field} = {value} outside the sanity band [{lo}, {hi}]"
        ));
    }
}

fn wdm_grid(grid: &GridPlanConfig) -> WdmGrid {
    WdmGrid {
        slots: grid.slots,
        spacing_hz: grid.spacing_ghz * 1e9,
        symbol_rate_hz: grid.symbol_rate_gbd * 1e9,
        roll_off: grid.roll_off,
        power_w: dbm_to_watts(grid.power_dbm),
    }
}

// ---------------------------------------------------------------------------
// Builders: config → domain objects
// ---------------------------------------------------------------------------

/// Converts the fiber block to SI units.
///
/// The triangular-profile gain slope comes from the raman block; in measured
/// mode [`run_scenario`] re-estimates it from the loaded table.
pub fn build_fiber(config: &ScenarioConfig) -> Result<FiberSpec, ScenarioError> {
    let f = &config.fiber;
    let lambda0 = f.reference_wavelength_nm * 1e-9;
    let (beta2, beta3) = dispersion_coefficients(
        ps_nm_km_to_s_m2(f.dispersion_ps_nm_km),
        ps_nm2_km_to_s_m3(f.dispersion_slope_ps_nm2_km),
        lambda0,
    )?;
    let a_eff = f.effective_area_um2 * 1e-12;
    let spec = FiberSpec {
        attenuation: db_per_km_to_inv_m(f.attenuation_db_per_km),
        beta2,
        beta3,
        gamma: f
            .gamma_per_w_km
            .map(|g| g * 1e-3)
            .unwrap_or_else(|| 2.0 * std::f64::consts::PI * f.n2_m2_per_w / (lambda0 * a_eff)),
        effective_area: a_eff,
        reference_wavelength: lambda0,
        n2: f.n2_m2_per_w,
        raman_gain_slope: config.raman.slope_m_per_w_hz / (2.0 * a_eff),
        span_length: f.span_length_km * 1e3,
    };
    spec.validate()?;
    Ok(spec)
}

/// Fit parameters from the raman block (measured mode reads only the slope,
/// for the first-order time constant).
pub fn fit_params(config: &RamanConfig) -> RamanFitParams {
    RamanFitParams {
        slope_m_per_w_hz: config.slope_m_per_w_hz,
        support_hz: config.support_hz,
        sine_amplitude_m_per_w: config.sine_amplitude_m_per_w,
        sine_rate_rad_per_hz: config.sine_rate_rad_per_hz,
        real_offset_m_per_w: config.real_offset_m_per_w,
    }
}

/// Builds the Raman spectrum for the configured mode, returning ingest
/// warnings alongside.
pub fn build_spectrum(
    config: &ScenarioConfig,
    base_dir: &Path,
) -> Result<(RamanSpectrum, Vec<String>), ScenarioError> {
    let r = &config.raman;
    let n2 = r.n2.unwrap_or(config.fiber.n2_m2_per_w);
    let lambda0 = r.lambda0_nm.unwrap_or(config.fiber.reference_wavelength_nm) * 1e-9;
    match r.mode {
        RamanMode::Analytic => {
            let spectrum = RamanSpectrum::from_analytic_fit(&fit_params(r), lambda0, n2)?;
            Ok((spectrum, Vec::new()))
        }
        RamanMode::Measured => {
            let rel = r.csv_path.as_deref().expect("validated at load");
            let path = base_dir.join(rel);
            let (mut table, mut warnings) = load_raman_gain_csv(&path)?;
            if r.polarization_averaged {
                for g in &mut table.gain_m_per_w {
                    *g *= 2.0;
                }
                warnings.push(
                    "doubled polarization-averaged gain values to co-polarized".to_string(),
                );
            }
            let spectrum = RamanSpectrum::from_gain_table(
                &table.freqs_hz,
                &table.gain_m_per_w,
                r.real_offset_m_per_w,
                lambda0,
                n2,
            )?;
            Ok((spectrum, warnings))
        }
    }
}

/// Wraps the spectrum in a transfer function for the configured polarization,
/// applying the fractional override when one is set.
pub fn build_transfer(config: &ScenarioConfig, spectrum: &RamanSpectrum) -> NonlinearTransfer {
    let mut transfer = NonlinearTransfer::from_spectrum(spectrum, config.run.polarization);
    if let Some(fr) = config.raman.fractional_raman_override {
        // The transfer evaluates its response live from the spectrum and this
        // fraction, so assigning here rewrites H(f) consistently.
        transfer.fractional_raman = fr;
    }
    transfer
}

fn plan_from_config(plan: &PlanConfig) -> Result<ChannelPlan, ScenarioError> {
    match (&plan.grid, &plan.channels) {
        (Some(grid), None) => {
            let wdm = wdm_grid(grid);
            let slots: Vec<usize> = match (&grid.occupied_slots, grid.occupancy) {
                (Some(slots), _) => slots.clone(),
                (None, Some(frac)) => {
                    let drawn =
                        crate::fiber::sample_network_occupancy(&wdm, frac, grid.occupancy_seed)?;
                    drawn.occupied_indices()
                }
                (None, None) => (0..grid.slots).collect(),
            };
            let mut flags = vec![false; grid.slots];
            for &s in &slots {
                flags[s] = true;
            }
            Ok(wdm.plan_from_flags(&flags)?)
        }
        (None, Some(channels)) => {
            let chans: Vec<Channel> = channels
                .iter()
                .map(|c| Channel {
                    center_hz: c.center_ghz * 1e9,
                    symbol_rate_hz: c.symbol_rate_gbd * 1e9,
                    power_w: dbm_to_watts(c.power_dbm),
                    roll_off: c.roll_off,
                    occupied: c.occupied,
                })
                .collect();
            Ok(ChannelPlan::new(chans)?)
        }
        _ => Err(ScenarioError::invalid(
            "plan",
            "give exactly one of `grid` or `channels`",
        )),
    }
}

/// Builds the channel plan; errors when the scenario has no plan block.
pub fn build_plan(config: &ScenarioConfig) -> Result<ChannelPlan, ScenarioError> {
    let plan = config
        .plan
        .as_ref()
        .ok_or_else(|| ScenarioError::invalid("plan", "this run needs a plan block"))?;
    plan_from_config(plan)
}

/// Picks the simulation grid for a plan.
///
/// The sample rate is the smallest power-of-two multiple of the narrowest
/// symbol rate that (a) covers twice the occupied extent, so the pump-probe
/// beats between the outermost channels stay unaliased in the power spectrum,
/// and (b) keeps every channel edge clear of Nyquist. An explicit
/// `sample_rate_ghz` must still be a power-of-two multiple of the narrowest
/// symbol rate; a warning flags it when it leaves beats folded.
pub fn choose_grid(plan: &ChannelPlan, ssfm: &SsfmRunConfig) -> Result<(SimGrid, Vec<String>), ScenarioError> {
    let mut warnings = Vec::new();
    let occupied: Vec<&Channel> = plan.channels.iter().filter(|c| c.occupied).collect();
    if occupied.is_empty() {
        return Err(ScenarioError::invalid("plan", "no occupied channels"));
    }
    let b_min = occupied
        .iter()
        .map(|c| c.symbol_rate_hz)
        .fold(f64::INFINITY, f64::min);
    let lo = occupied
        .iter()
        .map(|c| c.center_hz - 0.5 * c.bandwidth_hz())
        .fold(f64::INFINITY, f64::min);
    let hi = occupied
        .iter()
        .map(|c| c.center_hz + 0.5 * c.bandwidth_hz())
        .fold(f64::NEG_INFINITY, f64::max);
    let extent = hi - lo;
    let edge = lo.abs().max(hi.abs());
    let sample_rate_hz = match ssfm.sample_rate_ghz {
        Some(ghz) => {
            let fs = ghz * 1e9;
            if fs < 2.0 * extent * (1.0 - 1e-9) {
                warnings.push(format!(
                    "run.ssfm.sample_rate_ghz = {ghz} folds pump-probe beats: the occupied \
                     extent is {:.3} GHz, needing at least {:.3} GHz for alias-free coupling",
                    extent / 1e9,
                    2.0 * extent / 1e9
                ));
            }
            fs
        }
        None => {
            let need = (2.0 * extent).max(2.1 * edge).max(4.0 * b_min);
            let mut fs = 2.0 * b_min;
            while fs < need * (1.0 - 1e-9) {
                fs *= 2.0;
            }
            fs
        }
    };
    let ratio = sample_rate_hz / b_min;
    let sps = ratio.round();
    if (ratio - sps).abs() > 1e-6 * ratio || sps < 2.0 || !(sps as u64).is_power_of_two() {
        return Err(ScenarioError::invalid(
            "run.ssfm.sample_rate_ghz",
            format!(
                "{} GHz is not a power-of-two multiple of the narrowest symbol rate {} GBd",
                sample_rate_hz / 1e9,
                b_min / 1e9
            ),
        ));
    }
    for (i, ch) in plan.channels.iter().enumerate().filter(|(_, c)| c.occupied) {
        let per = sample_rate_hz / ch.symbol_rate_hz;
        if (per - per.round()).abs() > 1e-6 * per || per.round() < 2.0 {
            return Err(ScenarioError::invalid(
                "plan",
                format!(
                    "channel {i}: sample rate {} GHz is not an integer multiple (≥ 2) of its \
                     symbol rate {} GBd",
                    sample_rate_hz / 1e9,
                    ch.symbol_rate_hz / 1e9
                ),
            ));
        }
    }
    let n_samples = ssfm.n_symbols * sps as usize;
    const N_CAP: usize = 1 << 22;
    if n_samples > N_CAP {
        return Err(ScenarioError::invalid(
            "run.ssfm.n_symbols",
            format!(
                "grid needs {n_samples} samples ({} symbols × {} samples/symbol), above the \
                 {N_CAP} cap; reduce the symbol count, the plan extent, or the sample rate",
                ssfm.n_symbols, sps as usize
            ),
        ));
    }
    Ok((
        SimGrid {
            sample_rate_hz,
            n_samples,
        },
        warnings,
    ))
}

// ---------------------------------------------------------------------------
// Measured gain tables
// ---------------------------------------------------------------------------

/// A validated co-polarized Raman gain table.
#[derive(Debug, Clone, PartialEq)]
pub struct RamanGainTable {
    pub freqs_hz: Vec<f64>,
    pub gain_m_per_w: Vec<f64>,
}

/// Loads a `freq_hz,gain_m_per_w` CSV.
///
/// Data rows are numbered from 1 in error messages. The table must start at
/// exactly (0, 0), increase strictly in frequency, stay at or below 40 THz,
/// and hold at least four rows for the downstream interpolation. Tables
/// truncated below 15 THz load with a warning: the transform of a clipped
/// spectrum degrades in accuracy.
pub fn load_raman_gain_csv(path: &Path) -> Result<(RamanGainTable, Vec<String>), ScenarioError> {
    let file = std::fs::File::open(path).map_err(|source| ScenarioError::File {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    {
        let headers = reader.headers()?;
        let expect = ["freq_hz", "gain_m_per_w"];
        if headers.len() != 2 || headers.iter().zip(expect).any(|(h, e)| h != e) {
            return Err(ScenarioError::GainTable {
                row: 0,
                message: format!(
                    "header must be `freq_hz,gain_m_per_w`, got `{}`",
                    headers.iter().collect::<Vec<_>>().join(",")
                ),
            });
        }
    }
    let mut freqs = Vec::new();
    let mut gains = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let parse = |field: usize, name: &str| -> Result<f64, ScenarioError> {
            record
                .get(field)
                .ok_or(())
                .and_then(|s| s.parse::<f64>().map_err(|_| ()))
                .map_err(|_| ScenarioError::GainTable {
                    row,
                    message: format!("cannot parse {name} `{}`", record.get(field).unwrap_or("")),
                })
        };
        let f = parse(0, "freq_hz")?;
        let g = parse(1, "gain_m_per_w")?;
        if f < 0.0 {
            return Err(ScenarioError::GainTable {
                row,
                message: format!(
                    "negative frequency {f}; provide the f ≥ 0 half, the negative side is \
                     the odd extension"
                ),
            });
        }
        if f > 40e12 {
            return Err(ScenarioError::GainTable {
                row,
                message: format!("frequency {f} Hz above the 40 THz table limit"),
            });
        }
        if row == 1 && (f != 0.0 || g != 0.0) {
            return Err(ScenarioError::GainTable {
                row,
                message: format!("table must start at exactly (0, 0), got ({f}, {g})"),
            });
        }
        if let Some(&prev) = freqs.last() {
            if f <= prev {
                return Err(ScenarioError::GainTable {
                    row,
                    message: format!("frequency {f} Hz does not increase past {prev} Hz"),
                });
            }
        }
        freqs.push(f);
        gains.push(g);
    }
    if freqs.len() < 4 {
        return Err(ScenarioError::GainTable {
            row: freqs.len(),
            message: format!(
                "only {} rows; interpolation needs at least 4 points",
                freqs.len()
            ),
        });
    }
    let mut warnings = Vec::new();
    let f_max = *freqs.last().expect("non-empty");
    if f_max < 15e12 {
        warnings.push(format!(
            "gain table ends at {:.2} THz (< 15 THz): the reconstructed real part loses \
             accuracy when the spectrum is clipped",
            f_max / 1e12
        ));
    }
    Ok((RamanGainTable { freqs_hz: freqs, gain_m_per_w: gains }, warnings))
}

/// Samples the analytic gain fit into a table, the surrogate for users
/// without measured data.
pub fn synthetic_gain_table(params: &RamanFitParams, f_max_hz: f64, df_hz: f64) -> RamanGainTable {
    let n = (f_max_hz / df_hz).round() as usize;
    let freqs: Vec<f64> = (0..=n).map(|i| i as f64 * df_hz).collect();
    let gain: Vec<f64> = freqs
        .iter()
        .map(|&f| analytic_gain_spectrum(params, f))
        .collect();
    RamanGainTable {
        freqs_hz: freqs,
        gain_m_per_w: gain,
    }
}

/// Writes a gain table in the ingestible CSV format.
pub fn write_gain_csv<W: std::io::Write>(
    table: &RamanGainTable,
    sink: W,
) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["freq_hz", "gain_m_per_w"])?;
    for (f, g) in table.freqs_hz.iter().zip(&table.gain_m_per_w) {
        w.write_record(&[f.to_string(), g.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Least-squares slope of a tabulated gain spectrum through the origin over
/// |f| ≤ 5 THz, the band-scale stand-in for the analytic fit's slope when
/// only measurements exist.
pub fn gain_slope_estimate(spectrum: &RamanSpectrum) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (f, g) in spectrum.freqs_hz.iter().zip(&spectrum.gain_m_per_w) {
        if *f > 0.0 && *f <= 5e12 {
            num += f * g;
            den += f * f;
        }
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

/// Which engine produced a result row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceTag {
    /// Interference integral.
    Gn,
    /// Closed-form scaling assembly.
    Cf,
    /// Split-step simulation.
    Ssfm,
}

impl std::fmt::Display for SourceTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SourceTag::Gn => "gn",
            SourceTag::Cf => "cf",
            SourceTag::Ssfm => "ssfm",
        })
    }
}

/// One channel's outcome from one engine.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRow {
    pub channel_index: usize,
    pub f_center_hz: f64,
    pub power_dbm: f64,
    /// Single-span NLI coefficient (1/W²); for simulation rows the empirical
    /// value 1/(SNR·P²) including any back-propagation applied.
    pub eta_1_per_w2: Option<f64>,
    pub snr_db: f64,
    /// Cross-interference scaling R_XPM at this channel's offset from the
    /// reference carrier (dB), a model-side annotation on every row.
    pub r_xpm_db: f64,
    /// First-order impact of the real Raman spectrum on the NLI (dB).
    pub delta_eta_db: f64,
    pub source: SourceTag,
    /// Compare runs: Δη₁(model) − Δη₁(simulation) on simulation rows.
    pub delta_model_sim_db: Option<f64>,
}

/// Writes result rows; `with_delta` adds the compare-mode difference column.
pub fn write_results_csv<W: std::io::Write>(
    rows: &[ResultRow],
    with_delta: bool,
    sink: W,
) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec![
        "channel_index",
        "f_center_hz",
        "power_dbm",
        "eta_1_per_w2",
        "snr_db",
        "r_xpm_db",
        "delta_eta_db",
        "source",
    ];
    if with_delta {
        header.push("delta_model_sim_db");
    }
    w.write_record(&header)?;
    for row in rows {
        let mut record = vec![
            row.channel_index.to_string(),
            row.f_center_hz.to_string(),
            row.power_dbm.to_string(),
            row.eta_1_per_w2.map(|v| v.to_string()).unwrap_or_default(),
            row.snr_db.to_string(),
            row.r_xpm_db.to_string(),
            row.delta_eta_db.to_string(),
            row.source.to_string(),
        ];
        if with_delta {
            record.push(
                row.delta_model_sim_db
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
            );
        }
        w.write_record(&record)?;
        w.flush()?;
    }
    w.flush()?;
    Ok(())
}

/// Run-log JSON: what ran, how long each stage took, and the exact config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunLog {
    pub schema: String,
    pub model: RunModel,
    pub timings_ms: BTreeMap<String, u64>,
    pub seeds: BTreeMap<String, u64>,
    /// Simulation convergence verdict when one was requested.
    pub converged: Option<bool>,
    pub convergence_worst_delta_db: Option<f64>,
    pub defaults_applied: Vec<String>,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
    pub config_echo: ScenarioConfig,
}

/// Everything a scenario run produces.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub rows: Vec<ResultRow>,
    pub run_log: RunLog,
    /// Scaling factors at the run polarization (model runs).
    pub scaling: Option<ScalingFactors>,
    /// The power profile the integral used (model runs).
    pub profile: Option<PowerProfile>,
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

struct RunContext {
    fiber: FiberSpec,
    spectrum: RamanSpectrum,
    transfer: NonlinearTransfer,
    plan: ChannelPlan,
    cois: Vec<usize>,
}

fn assemble(loaded: &LoadedScenario, warnings: &mut Vec<String>) -> Result<RunContext, ScenarioError> {
    let config = &loaded.config;
    let (spectrum, ingest_warnings) = build_spectrum(config, &loaded.base_dir)?;
    warnings.extend(ingest_warnings);
    let mut fiber = build_fiber(config)?;
    if config.raman.mode == RamanMode::Measured {
        // The triangular profile's constant slope should describe the table,
        // not the analytic default.
        fiber.raman_gain_slope = gain_slope_estimate(&spectrum) / (2.0 * fiber.effective_area);
    }
    let transfer = build_transfer(config, &spectrum);
    let plan = build_plan(config)?;
    let occupied = plan.occupied_indices();
    let cois = if config.run.channels.is_empty() {
        occupied.clone()
    } else {
        for &c in &config.run.channels {
            if !occupied.contains(&c) {
                return Err(ScenarioError::invalid(
                    "run.channels",
                    format!("channel {c} is not an occupied plan entry"),
                ));
            }
        }
        config.run.channels.clone()
    };
    for &c in &config.run.dbp_channels {
        if !cois.contains(&c) {
            return Err(ScenarioError::invalid(
                "run.dbp_channels",
                format!("channel {c} is not among the channels of interest"),
            ));
        }
    }
    Ok(RunContext {
        fiber,
        spectrum,
        transfer,
        plan,
        cois,
    })
}

fn nli_config(config: &ScenarioConfig, channels: Vec<usize>, dbp: bool) -> NliConfig {
    let gn = &config.run.gn;
    NliConfig {
        polarization: config.run.polarization,
        profile_source: gn.profile,
        resolution_hz: gn.resolution_ghz.map(|g| g * 1e9).unwrap_or(0.0),
        rel_tol: gn.rel_tol,
        max_depth: gn.max_depth,
        channels,
        dbp,
    }
}

fn build_profile(
    ctx: &RunContext,
    config: &ScenarioConfig,
    psd: &crate::fiber::SignalPsd,
) -> Result<PowerProfile, ScenarioError> {
    let z = log_z_grid(ctx.fiber.span_length, 96);
    match config.run.gn.profile {
        ProfileSource::Triangular => {
            let lo = psd.freq(0);
            let hi = psd.freq(psd.values.len() - 1);
            let margin = 0.25 * (hi - lo).max(psd.df);
            let n = 129;
            let f_grid: Vec<f64> = (0..n)
                .map(|i| lo - margin + (hi - lo + 2.0 * margin) * i as f64 / (n - 1) as f64)
                .collect();
            Ok(triangular_profile(psd, &ctx.fiber, &z, &f_grid)?)
        }
        ProfileSource::RamanOde => {
            let min_rate = ctx
                .plan
                .min_symbol_rate()
                .ok_or_else(|| ScenarioError::invalid("plan", "no occupied channels"))?;
            let profile = raman_ode_profile(
                psd,
                &ctx.spectrum,
                &ctx.fiber,
                &z,
                min_rate / 2.0,
                false,
            )?;
            // The solver grid stops at the outermost tone centers; the NLI
            // evaluator needs the whole occupied band covered.
            let runs = crate::gn::support_runs(psd);
            match (runs.first(), runs.last()) {
                (Some(&(lo, _)), Some(&(_, hi))) => Ok(profile.widened_to(lo, hi)),
                _ => Ok(profile),
            }
        }
    }
}

fn p_ase_w(config: &ScenarioConfig) -> f64 {
    config.run.p_ase_dbm.map(dbm_to_watts).unwrap_or(0.0)
}

/// Rows from the spectrally resolved integral on `plan`.
fn gn_rows(
    ctx: &RunContext,
    config: &ScenarioConfig,
    plan: &ChannelPlan,
) -> Result<(Vec<ResultRow>, ScalingFactors, PowerProfile), ScenarioError> {
    let min_rate = plan
        .min_symbol_rate()
        .ok_or_else(|| ScenarioError::invalid("plan", "no occupied channels"))?;
    let psd = build_psd(plan, min_rate / 8.0)?;
    let profile = build_profile(ctx, config, &psd)?;
    let groups: [(bool, Vec<usize>); 2] = [
        (
            false,
            ctx.cois
                .iter()
                .copied()
                .filter(|c| !config.run.dbp_channels.contains(c))
                .collect(),
        ),
        (true, config.run.dbp_channels.clone()),
    ];
    let mut by_channel: BTreeMap<usize, ResultRow> = BTreeMap::new();
    let mut scaling = None;
    for (dbp, channels) in groups {
        if channels.is_empty() {
            continue;
        }
        let nli = nli_config(config, channels, dbp);
        let report = evaluate_plan(
            plan,
            &psd,
            &ctx.fiber,
            &ctx.transfer,
            &profile,
            &nli,
            p_ase_w(config),
            config.fiber.spans,
        )?;
        for (i, &idx) in report.channel_indices.iter().enumerate() {
            by_channel.insert(
                idx,
                ResultRow {
                    channel_index: idx,
                    f_center_hz: report.center_hz[i],
                    power_dbm: watts_to_dbm(report.power_w[i]),
                    eta_1_per_w2: Some(report.eta_1[i]),
                    snr_db: report.snr_db[i],
                    r_xpm_db: linear_to_db(scaling_xpm(
                        &ctx.transfer,
                        report.center_hz[i].abs(),
                    )),
                    delta_eta_db: report.delta_eta_db[i],
                    source: SourceTag::Gn,
                    delta_model_sim_db: None,
                },
            );
        }
        scaling = Some(report.scaling);
    }
    let rows = ctx
        .cois
        .iter()
        .map(|c| by_channel.remove(c).expect("every coi evaluated"))
        .collect();
    Ok((rows, scaling.expect("at least one group ran"), profile))
}

/// Rows from the closed-form scaling assembly.
fn closed_form_rows(
    ctx: &RunContext,
    config: &ScenarioConfig,
) -> Result<(Vec<ResultRow>, ScalingFactors, PowerProfile), ScenarioError> {
    let plan = &ctx.plan;
    let min_rate = plan
        .min_symbol_rate()
        .ok_or_else(|| ScenarioError::invalid("plan", "no occupied channels"))?;
    let psd = build_psd(plan, min_rate / 8.0)?;
    let profile = build_profile(ctx, config, &psd)?;
    let nli = nli_config(config, ctx.cois.clone(), false);
    let integrator = GnIntegrator::new(&psd, &ctx.fiber, &ctx.transfer, &profile, nli)?;
    let pairs = pair_coefficients(&integrator, plan, &ctx.cois)?;
    let with_dbp = |dbp: bool| xpm_closed_form_total(plan, &ctx.transfer, &pairs, dbp);
    let plain = with_dbp(false)?;
    let dbp_totals = if config.run.dbp_channels.is_empty() {
        None
    } else {
        Some(with_dbp(true)?)
    };
    let f_r = ctx.transfer.fractional_raman;
    let n = config.fiber.spans as f64;
    let p_ase = p_ase_w(config);
    let mut rows = Vec::with_capacity(pairs.channel_indices.len());
    for (row, &idx) in pairs.channel_indices.iter().enumerate() {
        let coi = &plan.channels[idx];
        let dbp = config.run.dbp_channels.contains(&idx);
        let eta = if dbp {
            dbp_totals.as_ref().expect("dbp totals computed")[row]
        } else {
            plain[row]
        };
        // Reference assembly: every scaling factor forced flat. The
        // coefficients in `pairs` are already reference-normalized, so the
        // flat total is their plain sum.
        let mut eta_ref = if dbp { 0.0 } else { pairs.spm[row] };
        for (_, cross) in &pairs.xpm[row] {
            eta_ref += cross;
        }
        let delta_db = if eta_ref > 0.0 {
            delta_eta(eta, eta_ref, f_r)?
        } else {
            0.0
        };
        let snr = coi.power_w / (n * p_ase + n * eta * coi.power_w.powi(3));
        rows.push(ResultRow {
            channel_index: idx,
            f_center_hz: coi.center_hz,
            power_dbm: watts_to_dbm(coi.power_w),
            eta_1_per_w2: Some(eta),
            snr_db: linear_to_db(snr),
            r_xpm_db: linear_to_db(scaling_xpm(&ctx.transfer, coi.center_hz.abs())),
            delta_eta_db: delta_db,
            source: SourceTag::Cf,
            delta_model_sim_db: None,
        });
    }
    let scaling = crate::gn::scaling_table(&ctx.transfer, 10e12, 101);
    Ok((rows, scaling, profile))
}

/// Rows from the split-step simulation on the snapped plan.
fn ssfm_rows(
    ctx: &RunContext,
    config: &ScenarioConfig,
    plan: &ChannelPlan,
    grid: SimGrid,
    run_log: &mut RunLog,
) -> Result<Vec<ResultRow>, ScenarioError> {
    let s = &config.run.ssfm;
    let ssfm_config = SsfmConfig {
        steps_per_span: s.steps_per_span,
        distribution: s.distribution,
        response: crate::ssfm::ResponseMode::FullTransfer,
        seed: s.seed,
        realizations: s.realizations,
    };
    if s.check_convergence {
        let t = Instant::now();
        let report = check_convergence(
            plan,
            &ctx.fiber,
            &ctx.transfer,
            grid,
            &ssfm_config,
            &ctx.cois,
        )?;
        run_log
            .timings_ms
            .insert("convergence_check".into(), t.elapsed().as_millis() as u64);
        run_log.converged = Some(report.converged);
        run_log.convergence_worst_delta_db = Some(report.worst_delta_db);
        if !report.converged {
            run_log.warnings.push(format!(
                "unconverged: halving {} steps moved a channel by {:.4} dB (tolerance 0.02)",
                s.steps_per_span, report.worst_delta_db
            ));
        }
    }
    let rows = measure_delta_eta(
        plan,
        &ctx.fiber,
        Some(&ctx.spectrum),
        config.run.polarization,
        grid,
        &ssfm_config,
        &ctx.cois,
        &config.run.dbp_channels,
    )?;
    Ok(rows
        .iter()
        .map(|r| {
            let coi = &plan.channels[r.channel_index];
            // Channels under digital back-propagation report the
            // back-propagated receiver, matching the model rows.
            let (snr_db, delta_db) = match (r.snr_full_dbp_db, r.delta_eta_dbp_db) {
                (Some(snr), Some(delta)) => (snr, delta),
                _ => (r.snr_full_db, r.delta_eta_db),
            };
            let snr_lin = crate::units::db_to_linear(snr_db);
            ResultRow {
                channel_index: r.channel_index,
                f_center_hz: coi.center_hz,
                power_dbm: watts_to_dbm(coi.power_w),
                eta_1_per_w2: Some(1.0 / (snr_lin * coi.power_w * coi.power_w)),
                snr_db,
                r_xpm_db: linear_to_db(scaling_xpm(&ctx.transfer, coi.center_hz.abs())),
                delta_eta_db: delta_db,
                source: SourceTag::Ssfm,
                delta_model_sim_db: None,
            }
        })
        .collect())
}

/// Executes the configured model(s) and assembles rows plus the run log.
pub fn run_scenario(loaded: &LoadedScenario) -> Result<ScenarioOutcome, ScenarioError> {
    let config = &loaded.config;
    let mut run_log = RunLog {
        schema: "run-log/1".into(),
        model: config.run.model,
        timings_ms: BTreeMap::new(),
        seeds: BTreeMap::new(),
        converged: None,
        convergence_worst_delta_db: None,
        defaults_applied: loaded.defaults_applied.clone(),
        warnings: loaded.warnings.clone(),
        notes: loaded.notes.clone(),
        config_echo: config.clone(),
    };
    let t_total = Instant::now();
    let ctx = assemble(loaded, &mut run_log.warnings)?;
    let mut scaling = None;
    let mut profile = None;
    let rows = match config.run.model {
        RunModel::GnIntegral => {
            let t = Instant::now();
            let (rows, s, p) = gn_rows(&ctx, config, &ctx.plan)?;
            run_log
                .timings_ms
                .insert("gn_integral".into(), t.elapsed().as_millis() as u64);
            scaling = Some(s);
            profile = Some(p);
            rows
        }
        RunModel::ClosedForm => {
            let t = Instant::now();
            let (rows, s, p) = closed_form_rows(&ctx, config)?;
            run_log
                .timings_ms
                .insert("closed_form".into(), t.elapsed().as_millis() as u64);
            scaling = Some(s);
            profile = Some(p);
            rows
        }
        RunModel::Ssfm => {
            let (grid, grid_warnings) = choose_grid(&ctx.plan, &config.run.ssfm)?;
            run_log.warnings.extend(grid_warnings);
            run_log.seeds.insert("ssfm".into(), config.run.ssfm.seed);
            let plan = snapped_plan(&ctx.plan, grid.sample_rate_hz, grid.n_samples)?;
            let t = Instant::now();
            let rows = ssfm_rows(&ctx, config, &plan, grid, &mut run_log)?;
            run_log
                .timings_ms
                .insert("ssfm".into(), t.elapsed().as_millis() as u64);
            rows
        }
        RunModel::Compare => {
            let (grid, grid_warnings) = choose_grid(&ctx.plan, &config.run.ssfm)?;
            run_log.warnings.extend(grid_warnings);
            run_log.seeds.insert("ssfm".into(), config.run.ssfm.seed);
            // Both engines see the identical snapped plan, so the difference
            // column isolates model error rather than grid quantization.
            let plan = snapped_plan(&ctx.plan, grid.sample_rate_hz, grid.n_samples)?;
            let t = Instant::now();
            let (gn, s, p) = gn_rows(&ctx, config, &plan)?;
            run_log
                .timings_ms
                .insert("gn_integral".into(), t.elapsed().as_millis() as u64);
            scaling = Some(s);
            profile = Some(p);
            let t = Instant::now();
            let sim = ssfm_rows(&ctx, config, &plan, grid, &mut run_log)?;
            run_log
                .timings_ms
                .insert("ssfm".into(), t.elapsed().as_millis() as u64);
            let mut rows = Vec::with_capacity(gn.len() * 2);
            for (g, mut m) in gn.into_iter().zip(sim) {
                debug_assert_eq!(g.channel_index, m.channel_index);
                m.delta_model_sim_db = Some(g.delta_eta_db - m.delta_eta_db);
                rows.push(g);
                rows.push(m);
            }
            rows
        }
    };
    run_log
        .timings_ms
        .insert("total".into(), t_total.elapsed().as_millis() as u64);
    Ok(ScenarioOutcome {
        rows,
        run_log,
        scaling,
        profile,
    })
}

// ---------------------------------------------------------------------------
// Spectrum reports
// ---------------------------------------------------------------------------

/// Writes `freq_hz, n_r, g_r, re_H, im_H` over |f| ≤ `f_abs_max_hz`:
/// the normalized spectrum halves and the complex response they generate.
pub fn write_spectrum_csv<W: std::io::Write>(
    spectrum: &RamanSpectrum,
    transfer: &NonlinearTransfer,
    f_abs_max_hz: f64,
    sink: W,
) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["freq_hz", "n_r", "g_r", "re_H", "im_H"])?;
    for (i, &f) in spectrum.freqs_hz.iter().enumerate() {
        if f.abs() > f_abs_max_hz * (1.0 + 1e-12) {
            continue;
        }
        let h = transfer.h_at(f);
        w.write_record(&[
            f.to_string(),
            spectrum.n_norm[i].to_string(),
            spectrum.g_norm[i].to_string(),
            h.re.to_string(),
            h.im.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// The two summary constants of a configured spectrum: the effective
/// fractional contribution (override included) and the first-order time
/// constant.
pub fn spectrum_summary(
    config: &ScenarioConfig,
    spectrum: &RamanSpectrum,
    transfer: &NonlinearTransfer,
) -> (f64, f64) {
    let f_r = transfer.fractional_raman;
    let mut params = fit_params(&config.raman);
    if config.raman.mode == RamanMode::Measured {
        params.slope_m_per_w_hz = gain_slope_estimate(spectrum);
    }
    let t_r = raman_time_constant(
        &params,
        config
            .raman
            .lambda0_nm
            .unwrap_or(config.fiber.reference_wavelength_nm)
            * 1e-9,
        config.raman.n2.unwrap_or(config.fiber.n2_m2_per_w),
    );
    (f_r, t_r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
        let denom = b.abs().max(1e-300);
        let rel = (a - b).abs() / denom;
        assert!(
            rel <= tol,
            "{what}: {a} vs {b} (rel err {rel:.3e} > {tol:.1e})"
        );
    }

    fn load_json(v: Value) -> LoadedScenario {
        load_scenario_value(v, PathBuf::from(".")).expect("valid scenario")
    }

    fn single_channel_plan() -> Value {
        json!({
            "plan": {
                "channels": [
                    { "center_ghz": 0.0, "symbol_rate_gbd": 5.0, "power_dbm": 3.0 }
                ]
            }
        })
    }

    #[test]
    fn minimal_config_lists_every_default_and_converts_units() {
        let loaded = load_json(single_channel_plan());
        for (_, note) in DEFAULT_NOTES {
            assert!(
                loaded.defaults_applied.iter().any(|d| d == note),
                "missing default note: {note}"
            );
        }
        assert!(
            loaded
                .warnings
                .iter()
                .any(|w| w.contains("no raman block")),
            "missing-raman warning not raised: {:?}",
            loaded.warnings
        );
        let fiber = build_fiber(&loaded.config).unwrap();
        assert_close(fiber.attenuation, 3.6841e-5, 1e-4, "0.16 dB/km in 1/m");
        assert_close(fiber.span_length, 100e3, 1e-12, "span length");
        assert_close(
            fiber.gamma,
            fiber.consistent_gamma(),
            1e-12,
            "derived gamma matches the closed form",
        );
    }

    #[test]
    fn gamma_consistency_warning_fires_above_one_percent() {
        let mut v = single_channel_plan();
        apply_overrides(&mut v, &["fiber.gamma_per_w_km=1.5".to_string()]).unwrap();
        let loaded = load_json(v);
        assert!(
            loaded.warnings.iter().any(|w| w.contains("gamma_per_w_km")),
            "expected a gamma consistency warning: {:?}",
            loaded.warnings
        );
    }

    #[test]
    fn override_round_trips_and_shifts_the_fraction() {
        let mut v = single_channel_plan();
        apply_overrides(&mut v, &["raman.n2=2.6e-20".to_string()]).unwrap();
        let loaded = load_json(v);
        assert_eq!(loaded.config.raman.n2, Some(2.6e-20));
        let (spectrum, _) = build_spectrum(&loaded.config, Path::new(".")).unwrap();
        assert_close(spectrum.fractional_raman, 0.185187, 1e-3, "f_r at n2 = 2.6e-20");
        // The echoed concrete config reloads to the identical config.
        let echo = serde_json::to_value(&loaded.config).unwrap();
        let reloaded = load_json(echo);
        assert_eq!(reloaded.config, loaded.config);
    }

    #[test]
    fn override_parsing_rejects_malformed_items() {
        let mut v = json!({});
        let err = apply_overrides(&mut v, &["no_equals_sign".to_string()]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err =
            apply_overrides(&mut v, &["=5".to_string()]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        apply_overrides(
            &mut v,
            &["run.model=ssfm".to_string(), "raman.csv_path=t.csv".to_string()],
        )
        .unwrap();
        assert_eq!(v.pointer("/run/model"), Some(&Value::String("ssfm".into())));
        assert_eq!(
            v.pointer("/raman/csv_path"),
            Some(&Value::String("t.csv".into()))
        );
    }

    #[test]
    fn unknown_field_errors_name_the_offender() {
        let v = json!({ "fiber": { "attenuation_db_per_m": 0.2 } });
        let err = load_scenario_value(v, PathBuf::from(".")).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("attenuation_db_per_m"),
            "error should name the unknown field: {msg}"
        );
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn gain_csv_round_numbered_errors() {
        let dir = std::env::temp_dir().join("raman-nli-gain-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let write = |name: &str, text: &str| {
            let p = dir.join(name);
            std::fs::write(&p, text).unwrap();
            p
        };
        let cases: &[(&str, &str, usize, &str)] = &[
            (
                "no_zero.csv",
                "freq_hz,gain_m_per_w\n1e12,1e-15\n2e12,2e-15\n3e12,3e-15\n4e12,4e-15\n",
                1,
                "start at exactly (0, 0)",
            ),
            (
                "non_monotone.csv",
                "freq_hz,gain_m_per_w\n0,0\n2e12,2e-15\n1e12,1e-15\n3e12,3e-15\n",
                3,
                "does not increase",
            ),
            (
                "negative.csv",
                "freq_hz,gain_m_per_w\n0,0\n1e12,1e-15\n-2e12,-2e-15\n3e12,3e-15\n",
                3,
                "negative frequency",
            ),
            (
                "too_high.csv",
                "freq_hz,gain_m_per_w\n0,0\n1e12,1e-15\n41e12,1e-15\n42e12,1e-15\n",
                3,
                "40 THz",
            ),
            (
                "two_rows.csv",
                "freq_hz,gain_m_per_w\n0,0\n1e12,1e-15\n",
                2,
                "at least 4 points",
            ),
        ];
        for (name, text, row, needle) in cases {
            let path = write(name, text);
            match load_raman_gain_csv(&path) {
                Err(ScenarioError::GainTable { row: r, message }) => {
                    assert_eq!(r, *row, "{name}: wrong row number ({message})");
                    assert!(
                        message.contains(needle),
                        "{name}: message `{message}` lacks `{needle}`"
                    );
                }
                other => panic!("{name}: expected a gain-table error, got {other:?}"),
            }
        }
        let truncated = write(
            "truncated.csv",
            "freq_hz,gain_m_per_w\n0,0\n5e12,5e-15\n10e12,8e-15\n14e12,6e-15\n",
        );
        let (_, warnings) = load_raman_gain_csv(&truncated).unwrap();
        assert!(
            warnings.iter().any(|w| w.contains("15 THz")),
            "expected a truncation warning: {warnings:?}"
        );
    }

    #[test]
    fn synthetic_table_round_trips_through_the_measured_path() {
        let dir = std::env::temp_dir().join("raman-nli-gain-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let table = synthetic_gain_table(&RamanFitParams::default(), 30e12, 50e9);
        let path = dir.join("synthetic.csv");
        let mut buf = Vec::new();
        write_gain_csv(&table, &mut buf).unwrap();
        std::fs::write(&path, &buf).unwrap();

        let mut v = single_channel_plan();
        apply_overrides(
            &mut v,
            &[
                "raman.mode=measured".to_string(),
                format!("raman.csv_path={}", path.display()),
            ],
        )
        .unwrap();
        let loaded = load_json(v);
        let (spectrum, warnings) = build_spectrum(&loaded.config, &loaded.base_dir).unwrap();
        assert!(warnings.is_empty(), "unexpected warnings: {warnings:?}");
        let analytic = RamanSpectrum::from_analytic_fit(
            &RamanFitParams::default(),
            1550e-9,
            2.1e-20,
        )
        .unwrap();
        assert_close(
            spectrum.fractional_raman,
            analytic.fractional_raman,
            2e-2,
            "measured-path f_r vs analytic",
        );
        assert_close(
            gain_slope_estimate(&spectrum),
            gain_slope_estimate(&analytic),
            2e-2,
            "band-scale slope estimate",
        );
    }

    #[test]
    fn grid_chooser_covers_beats_and_respects_the_cap() {
        let mk = |center: f64| ChannelConfig {
            center_ghz: center,
            symbol_rate_gbd: 5.0,
            power_dbm: 9.0,
            roll_off: 0.0,
            occupied: true,
        };
        let v = json!({
            "plan": { "channels": [mk(-250.0), mk(0.0), mk(250.0)] },
            "run": { "ssfm": { "n_symbols": 8192 } }
        });
        let loaded = load_json(v);
        let plan = build_plan(&loaded.config).unwrap();
        let (grid, warnings) = choose_grid(&plan, &loaded.config.run.ssfm).unwrap();
        assert!(warnings.is_empty());
        // Occupied extent 505 GHz → beats to ±505 GHz → 1.28 THz grid.
        assert_close(grid.sample_rate_hz, 1.28e12, 1e-12, "auto sample rate");
        assert_eq!(grid.n_samples, 1 << 21);

        let v = json!({
            "plan": { "channels": [mk(-750.0), mk(0.0), mk(750.0)] },
            "run": { "ssfm": { "n_symbols": 8192 } }
        });
        let loaded = load_json(v);
        let plan = build_plan(&loaded.config).unwrap();
        let err = choose_grid(&plan, &loaded.config.run.ssfm).unwrap_err();
        assert_eq!(err.exit_code(), 2, "cap overflow is a config error: {err}");

        let v = json!({
            "plan": { "channels": [mk(-250.0), mk(0.0), mk(250.0)] },
            "run": { "ssfm": { "n_symbols": 256, "sample_rate_ghz": 640.0 } }
        });
        let loaded = load_json(v);
        let plan = build_plan(&loaded.config).unwrap();
        let (_, warnings) = choose_grid(&plan, &loaded.config.run.ssfm).unwrap();
        assert!(
            warnings.iter().any(|w| w.contains("folds pump-probe beats")),
            "expected a beat-folding warning: {warnings:?}"
        );
    }

    #[test]
    fn closed_form_nine_channel_smoke() {
        let v = json!({
            "plan": {
                "grid": {
                    "slots": 9, "spacing_ghz": 150.0, "symbol_rate_gbd": 5.0,
                    "power_dbm": 9.0
                }
            },
            "run": { "model": "closed-form" }
        });
        let loaded = load_json(v);
        let outcome = run_scenario(&loaded).unwrap();
        assert_eq!(outcome.rows.len(), 9);
        for row in &outcome.rows {
            assert_eq!(row.source, SourceTag::Cf);
            assert!(row.eta_1_per_w2.unwrap() > 0.0);
            assert!(row.delta_eta_db <= 0.0, "real-response impact must not be positive");
            assert!(row.snr_db.is_finite());
        }
        assert!(outcome.scaling.is_some());
        let echo = serde_json::to_value(&outcome.run_log.config_echo).unwrap();
        let reloaded = load_json(echo);
        assert_eq!(reloaded.config, loaded.config, "echo reloads identically");
    }

    #[test]
    fn occupancy_draw_materializes_into_the_echo() {
        let v = json!({
            "plan": {
                "grid": {
                    "slots": 10, "spacing_ghz": 100.0, "symbol_rate_gbd": 5.0,
                    "power_dbm": 6.0, "occupancy": 0.5, "occupancy_seed": 11
                }
            }
        });
        let loaded = load_json(v);
        let grid = loaded.config.plan.as_ref().unwrap().grid.as_ref().unwrap();
        assert_eq!(grid.occupancy, None, "draw is materialized");
        let slots = grid.occupied_slots.as_ref().unwrap();
        assert_eq!(slots.len(), 5);
        let plan = build_plan(&loaded.config).unwrap();
        assert_eq!(plan.occupied_indices().len(), 5);
        // Identical config → identical draw.
        let v2 = json!({
            "plan": {
                "grid": {
                    "slots": 10, "spacing_ghz": 100.0, "symbol_rate_gbd": 5.0,
                    "power_dbm": 6.0, "occupancy": 0.5, "occupancy_seed": 11
                }
            }
        });
        let again = load_json(v2);
        assert_eq!(
            again.config.plan.as_ref().unwrap().grid.as_ref().unwrap().occupied_slots,
            grid.occupied_slots.clone()
        );
    }

    #[test]
    fn compare_smoke_pairs_rows_and_fills_the_delta_column() {
        let v = json!({
            "plan": {
                "channels": [
                    { "center_ghz": 0.0, "symbol_rate_gbd": 5.0, "power_dbm": 3.0 }
                ]
            },
            "run": {
                "model": "compare",
                "ssfm": { "steps_per_span": 120, "n_symbols": 64, "realizations": 1 }
            }
        });
        let loaded = load_json(v);
        let outcome = run_scenario(&loaded).unwrap();
        assert_eq!(outcome.rows.len(), 2, "one gn row and one ssfm row");
        assert_eq!(outcome.rows[0].source, SourceTag::Gn);
        assert_eq!(outcome.rows[1].source, SourceTag::Ssfm);
        assert_eq!(outcome.rows[0].channel_index, outcome.rows[1].channel_index);
        let delta = outcome.rows[1].delta_model_sim_db.expect("delta column");
        assert!(delta.is_finite());
        assert!(outcome.rows[0].delta_model_sim_db.is_none());
        let mut buf = Vec::new();
        write_results_csv(&outcome.rows, true, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "channel_index,f_center_hz,power_dbm,eta_1_per_w2,snr_db,r_xpm_db,delta_eta_db,source,delta_model_sim_db"
        ));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn step_floor_surfaces_as_a_convergence_error() {
        let v = json!({
            "plan": {
                "channels": [
                    { "center_ghz": 0.0, "symbol_rate_gbd": 5.0, "power_dbm": 3.0 }
                ]
            },
            "run": {
                "model": "ssfm",
                "ssfm": { "steps_per_span": 40, "n_symbols": 64, "realizations": 1 }
            }
        });
        let loaded = load_json(v);
        let err = run_scenario(&loaded).unwrap_err();
        assert_eq!(err.exit_code(), 3, "step floor maps to the convergence exit code");
        assert!(err.to_string().contains("100"), "diagnostic names the floor: {err}");
    }

    #[test]
    fn simulator_limits_are_validated_at_load() {
        let mut v = single_channel_plan();
        apply_overrides(
            &mut v,
            &["run.model=ssfm".to_string(), "fiber.spans=3".to_string()],
        )
        .unwrap();
        let err = load_scenario_value(v, PathBuf::from(".")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("spans"));

        let mut v = single_channel_plan();
        apply_overrides(
            &mut v,
            &[
                "run.model=ssfm".to_string(),
                "raman.fractional_raman_override=0.1".to_string(),
            ],
        )
        .unwrap();
        let err = load_scenario_value(v, PathBuf::from(".")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("fractional_raman_override"));
    }

    #[test]
    fn spectrum_dump_covers_the_band_with_the_summary_constants() {
        let loaded = load_json(json!({}));
        let (spectrum, _) = build_spectrum(&loaded.config, Path::new(".")).unwrap();
        let transfer = build_transfer(&loaded.config, &spectrum);
        let (f_r, t_r) = spectrum_summary(&loaded.config, &spectrum, &transfer);
        let direct = RamanSpectrum::from_analytic_fit(
            &RamanFitParams::default(),
            1550.0 * 1e-9,
            2.1e-20,
        )
        .unwrap();
        assert_close(
            f_r,
            direct.fractional_raman,
            1e-12,
            "config plumbs the default normalization",
        );
        assert_close(f_r, 0.2293, 1e-3, "default fractional contribution");
        assert_close(t_r, 3.616e-15, 2e-3, "default first-order time constant");
        let mut buf = Vec::new();
        write_spectrum_csv(&spectrum, &transfer, 30e12, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("freq_hz,n_r,g_r,re_H,im_H"));
        let first_field = text.lines().nth(1).unwrap().split(',').next().unwrap();
        assert_close(first_field.parse::<f64>().unwrap(), -30e12, 1e-12, "band start");
        assert_eq!(text.lines().count(), 1 + 6001, "10 GHz grid over ±30 THz");
    }

    #[test]
    fn fractional_override_flattens_the_model_response() {
        let mut v = single_channel_plan();
        apply_overrides(&mut v, &["raman.fractional_raman_override=0.0".to_string()]).unwrap();
        let loaded = load_json(v);
        let (spectrum, _) = build_spectrum(&loaded.config, Path::new(".")).unwrap();
        let transfer = build_transfer(&loaded.config, &spectrum);
        assert_eq!(transfer.fractional_raman, 0.0);
        let r0 = crate::gn::scaling_xpm(&transfer, 0.0);
        let r6 = crate::gn::scaling_xpm(&transfer, 6e12);
        assert_close(r0, 1.0, 1e-12, "flat response at zero separation");
        assert_close(r6, 1.0, 1e-12, "flat response at 6 THz");
    }
}
