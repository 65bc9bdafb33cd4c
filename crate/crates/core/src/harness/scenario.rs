use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::{LockMode, LockSettings};
use crate::drift::{ActuatorModel, CreepModel, NoiseModel};
use crate::error::{Error, Result};
use crate::interference::{EmitterParams, HomConfig};
use crate::spectra::FilterSettings;

/// Complete description of a two-emitter experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    pub duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_modes")]
    pub modes: Vec<LockMode>,
    #[serde(default)]
    pub export: ExportSettings,
    #[serde(default)]
    pub visibility: VisibilitySettings,
    #[serde(default)]
    pub hom: HomConfig,
    #[serde(default = "ArmConfig::qd1", deserialize_with = "arm_over_qd1")]
    pub arm_a: ArmConfig,
    /// Fields left out fall back to the second reference emitter, not the
    /// first.
    #[serde(default = "ArmConfig::qd2", deserialize_with = "arm_over_qd2")]
    pub arm_b: ArmConfig,
}

fn default_modes() -> Vec<LockMode> {
    vec![LockMode::Locked, LockMode::FreeRunning]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExportSettings {
    /// Keep every n-th update-period sample in exported traces.
    pub decimation: usize,
    pub psd_segment: usize,
    pub psd_overlap: f64,
}

impl Default for ExportSettings {
    fn default() -> Self {
        Self {
            decimation: 10,
            psd_segment: 4096,
            psd_overlap: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VisibilitySettings {
    pub window_min: f64,
    pub step_min: f64,
    /// Mutual detuning of the two emitters at t = 0, GHz.
    pub initial_detuning_ghz: f64,
    /// Draw a coincidence histogram for every window point.
    pub sampled: bool,
}

impl Default for VisibilitySettings {
    fn default() -> Self {
        Self {
            window_min: 40.0,
            step_min: 1.0,
            initial_detuning_ghz: 0.0,
            sampled: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmitterConfig {
    pub t1_ps: f64,
    pub t2_ps: f64,
    /// Photon rate at the lock detector before the filter, cps.
    pub r_qd_cps: f64,
    pub dark_cps: f64,
}

impl Default for EmitterConfig {
    fn default() -> Self {
        Self {
            t1_ps: 155.0,
            t2_ps: 153.0,
            r_qd_cps: 6000.0,
            dark_cps: 104.0,
        }
    }
}

impl EmitterConfig {
    pub fn params(&self) -> Result<EmitterParams> {
        EmitterParams::new(self.t1_ps, self.t2_ps).map_err(into_config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CreepSettings {
    pub enabled: bool,
    pub dnu0_ghz: f64,
    pub alpha: f64,
    pub t0_s: f64,
}

impl Default for CreepSettings {
    fn default() -> Self {
        let m = CreepModel::default();
        Self {
            enabled: true,
            dnu0_ghz: m.dnu0_ghz,
            alpha: m.alpha,
            t0_s: m.t0_s,
        }
    }
}

impl CreepSettings {
    pub fn model(&self) -> Result<Option<CreepModel>> {
        if !self.enabled {
            return Ok(None);
        }
        CreepModel::new(self.dnu0_ghz, self.alpha, self.t0_s)
            .map(Some)
            .map_err(into_config)
    }
}

/// Out-of-loop monitor detector behind its own vapour cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorSettings {
    pub enabled: bool,
    /// Emitter rate at the monitor before its filter; defaults to the lock
    /// channel's rate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_qd_cps: Option<f64>,
    pub dark_cps: f64,
    pub bin_s: f64,
}

impl Default for MonitorSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            r_qd_cps: None,
            dark_cps: 104.0,
            bin_s: 0.5,
        }
    }
}

/// One emitter with its filter branch, drift and lock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArmConfig {
    pub emitter: EmitterConfig,
    pub filter: FilterSettings,
    /// Tabulated laser transmission `(detuning_GHz, transmission)`; replaces
    /// the parametric filter when given. Relative to the scenario file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curve_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convolution_step_ghz: Option<f64>,
    pub creep: CreepSettings,
    pub noise: NoiseModel,
    pub actuator: ActuatorModel,
    pub lock: LockSettings,
    pub monitor: MonitorSettings,
}

impl Default for ArmConfig {
    fn default() -> Self {
        Self::qd1()
    }
}

impl ArmConfig {
    pub fn qd1() -> Self {
        Self {
            emitter: EmitterConfig::default(),
            filter: FilterSettings::default(),
            curve_file: None,
            convolution_step_ghz: None,
            creep: CreepSettings::default(),
            noise: NoiseModel::default(),
            actuator: ActuatorModel::default(),
            lock: LockSettings {
                r_set_cps: Some(3600.0),
                ..LockSettings::default()
            },
            monitor: MonitorSettings::default(),
        }
    }

    pub fn qd2() -> Self {
        Self {
            emitter: EmitterConfig {
                t1_ps: 187.0,
                t2_ps: 123.0,
                r_qd_cps: 6000.0,
                dark_cps: 134.0,
            },
            creep: CreepSettings {
                enabled: false,
                ..CreepSettings::default()
            },
            lock: LockSettings {
                r_set_cps: Some(1500.0),
                ..LockSettings::default()
            },
            ..Self::qd1()
        }
    }
}

fn arm_over_qd1<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> std::result::Result<ArmConfig, D::Error> {
    arm_over(d, ArmConfig::qd1())
}

fn arm_over_qd2<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> std::result::Result<ArmConfig, D::Error> {
    arm_over(d, ArmConfig::qd2())
}

/// Overlays the given table onto `base`, section by section.
fn arm_over<'de, D: serde::Deserializer<'de>>(
    d: D,
    base: ArmConfig,
) -> std::result::Result<ArmConfig, D::Error> {
    use serde::de::Error as _;
    let patch = toml::Table::deserialize(d)?;
    let mut merged = toml::Table::try_from(base).map_err(D::Error::custom)?;
    merge_tables(&mut merged, patch);
    merged.try_into().map_err(D::Error::custom)
}

fn merge_tables(base: &mut toml::Table, patch: toml::Table) {
    for (key, value) in patch {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(p)) => merge_tables(b, p),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

fn into_config(e: Error) -> Error {
    match e {
        Error::Domain(msg) => Error::Config(msg),
        other => other,
    }
}

impl Scenario {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| parse_error(text, origin, e))?;
        scenario.check()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Checks invariants that do not need curves or simulation.
    pub fn check(&self) -> Result<()> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::Config(format!(
                "duration_s = {} must be positive",
                self.duration_s
            )));
        }
        if self.modes.is_empty() {
            return Err(Error::Config("modes must name at least one mode".into()));
        }
        if self
            .modes
            .iter()
            .enumerate()
            .any(|(i, m)| self.modes[..i].contains(m))
        {
            return Err(Error::Config("modes contains duplicates".into()));
        }
        let v = &self.visibility;
        if !(v.window_min >= 0.0 && v.step_min > 0.0) {
            return Err(Error::Config(
                "visibility window must be non-negative and step positive".into(),
            ));
        }
        if self.export.decimation == 0 {
            return Err(Error::Config("export.decimation must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.export.psd_overlap) || self.export.psd_segment < 16 {
            return Err(Error::Config(
                "PSD needs overlap in [0, 1) and >= 16-sample segments".into(),
            ));
        }
        self.hom.validate()?;
        for (name, arm) in [("arm_a", &self.arm_a), ("arm_b", &self.arm_b)] {
            arm.emitter
                .params()
                .map_err(|e| Error::Config(format!("{name}.emitter: {e}")))?;
            if !(arm.emitter.r_qd_cps >= 0.0 && arm.emitter.dark_cps >= 0.0) {
                return Err(Error::Config(format!(
                    "{name}.emitter rates must be non-negative"
                )));
            }
            arm.actuator
                .validate()
                .map_err(|e| Error::Config(format!("{name}.actuator: {e}")))?;
            if arm.monitor.enabled && !(arm.monitor.bin_s > 0.0) {
                return Err(Error::Config(format!(
                    "{name}.monitor.bin_s must be positive"
                )));
            }
        }
        Ok(())
    }
}

fn parse_error(text: &str, origin: &Path, e: toml::de::Error) -> Error {
    let line = e
        .span()
        .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
        .unwrap_or(0);
    Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg: e.message().to_string(),
    }
}

/// Replaces the numeric value at a dotted key path, creating missing tables.
pub(crate) fn set_numeric(doc: &mut toml::Table, path: &str, value: f64) -> Result<()> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("malformed axis '{path}'")));
    }
    let (leaf, parents) = keys.split_last().expect("non-empty");
    let mut table = doc;
    for key in parents {
        let entry = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = match entry {
            toml::Value::Table(t) => t,
            _ => {
                return Err(Error::Config(format!(
                    "axis '{path}': '{key}' is not a section"
                )))
            }
        };
    }
    match table.get(*leaf) {
        Some(toml::Value::Integer(_)) | Some(toml::Value::Float(_)) | None => {}
        Some(_) => {
            return Err(Error::Config(format!(
                "axis '{path}' is not a numeric field"
            )))
        }
    }
    if !value.is_finite() {
        return Err(Error::Config(format!(
            "axis '{path}': value {value} is not finite"
        )));
    }
    // Integral values stay integers so that integer fields accept them;
    // floating-point fields accept integers as well.
    let new = if value.fract() == 0.0 && value.abs() < 9.0e15 {
        toml::Value::Integer(value as i64)
    } else {
        toml::Value::Float(value)
    };
    table.insert(leaf.to_string(), new);
    Ok(())
}
