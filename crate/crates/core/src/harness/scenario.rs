//! Scenario files (TOML) and bundled presets.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dsp::DspConfig;
use crate::optics::{linear_to_db, ChannelSpec, DetectorSpec, SourceSpec, SwitchSchedule};
use crate::security::KeyRateParams;

pub const SCENARIO_VERSION: u32 = 1;

const PRESETS: &[(&str, &str)] = &[
    ("table1_4qnu", include_str!("../../presets/table1_4qnu.toml")),
    ("ideal_single", include_str!("../../presets/ideal_single.toml")),
    ("high_loss", include_str!("../../presets/high_loss.toml")),
];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid {field}: {constraint}")]
    Validation { field: String, constraint: String },
    #[error("unknown key: {0}")]
    UnknownKey(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("reading scenario: {0}")]
    Io(#[from] std::io::Error),
}

fn invalid(field: impl Into<String>, constraint: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        field: field.into(),
        constraint: constraint.into(),
    }
}

/// Impairments injected by the simulator and undone by the DSP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Impairments {
    /// Relative LO power swing, `g = 1 + A sin(2 pi slot / P)`.
    pub lo_drift_amplitude: f64,
    pub lo_drift_period_slots: f64,
    /// Wiener phase step per phase block (rad).
    pub phase_drift_sigma_rad: f64,
    /// Acquisition delay drawn uniformly from `[-max_delay, max_delay]`.
    pub max_delay: usize,
    /// ADC samples per symbol.
    pub oversampling: usize,
    /// In-band-free ADC noise added to oversampled samples (SNU).
    pub oversampling_noise_snu: f64,
}

impl Default for Impairments {
    fn default() -> Self {
        Self {
            lo_drift_amplitude: 0.0,
            lo_drift_period_slots: 400.0,
            phase_drift_sigma_rad: 0.0,
            max_delay: 0,
            oversampling: 1,
            oversampling_noise_snu: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameConfig {
    /// Signal frames to simulate.
    pub count: usize,
    /// Symbols per frame.
    pub samples: usize,
    /// Frames per estimation point.
    pub estimation_group: usize,
    /// Frames per spliced data frame (label only).
    pub splice_group: usize,
    /// Symbol rate.
    pub sample_rate_hz: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            count: 100,
            samples: 400_000,
            estimation_group: 25,
            splice_group: 100,
            sample_rate_hz: 4.0e9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    pub source: SourceSpec,
    pub qlt_detector: DetectorSpec,
    pub qnu_detector: DetectorSpec,
    pub fanout: usize,
    pub channels: Vec<ChannelSpec>,
    #[serde(default)]
    pub switch: SwitchSchedule,
    #[serde(default)]
    pub impairments: Impairments,
    #[serde(default)]
    pub dsp: DspConfig,
    pub keyrate: KeyRateParams,
    #[serde(default)]
    pub frames: FrameConfig,
    #[serde(default = "default_budget")]
    pub memory_budget_bytes: u64,
}

fn default_version() -> u32 {
    SCENARIO_VERSION
}

fn default_budget() -> u64 {
    4 << 30
}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |p| before.len() - p - 1) + 1;
    (line, column)
}

impl ScenarioConfig {
    /// Parses and validates TOML text.
    pub fn from_toml_str(src: &str) -> Result<Self, ScenarioError> {
        if src.trim().is_empty() {
            return Err(ScenarioError::Parse {
                line: 1,
                column: 1,
                message: "empty scenario".into(),
            });
        }
        let cfg: ScenarioConfig = toml::from_str(src).map_err(|e| {
            let message = e.message().to_string();
            if let Some(rest) = message.strip_prefix("unknown field `") {
                let key = rest.split('`').next().unwrap_or(rest).to_string();
                return ScenarioError::UnknownKey(key);
            }
            let (line, column) = e.span().map_or((1, 1), |s| line_col(src, s.start));
            ScenarioError::Parse {
                line,
                column,
                message,
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn preset(name: &str) -> Result<Self, ScenarioError> {
        let src = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, s)| *s)
            .ok_or_else(|| ScenarioError::UnknownPreset(name.to_string()))?;
        Self::from_toml_str(src)
    }

    pub fn preset_names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|(n, _)| *n)
    }

    /// Validated TOML with every default written out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// SHA-256 of the canonical (sorted-key) JSON form.
    pub fn digest(&self) -> String {
        let v = serde_json::to_value(self).expect("scenario serializes");
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let wrap = |field: &str, e: &dyn std::fmt::Display| invalid(field, e.to_string());
        if self.version != SCENARIO_VERSION {
            return Err(invalid("version", format!("must be {SCENARIO_VERSION}")));
        }
        self.source.validate().map_err(|e| wrap("source", &e))?;
        self.qlt_detector
            .validate("qlt_detector")
            .map_err(|e| wrap("qlt_detector", &e))?;
        self.qnu_detector
            .validate("qnu_detector")
            .map_err(|e| wrap("qnu_detector", &e))?;
        if self.fanout == 0 || !self.fanout.is_power_of_two() || self.fanout > 128 {
            return Err(invalid("fanout", "must be a power of two in 1..=128"));
        }
        if self.channels.len() != self.fanout {
            return Err(invalid(
                "channels",
                format!("{} channels for fanout {}", self.channels.len(), self.fanout),
            ));
        }
        let split_db = linear_to_db(1.0 / self.fanout as f64);
        for (i, c) in self.channels.iter().enumerate() {
            c.validate().map_err(|e| wrap(&format!("channels[{i}]"), &e))?;
            if c.transmittance_db > split_db + 1e-9 {
                return Err(invalid(
                    format!("channels[{i}].transmittance_db"),
                    format!("total budget must include the {split_db:.2} dB splitter loss"),
                ));
            }
        }
        self.switch.validate().map_err(|e| wrap("switch", &e))?;
        self.dsp.validate().map_err(|e| wrap("dsp", &e))?;
        self.keyrate.validate().map_err(|e| wrap("keyrate", &e))?;
        // The trusted-detector bound is always reported, so the combination
        // is rejected in either mode.
        if self.qnu_detector.efficiency >= 1.0
            && self.qnu_detector.electronic_noise_snu > 0.0
        {
            return Err(invalid(
                "qnu_detector",
                "a trusted detector with efficiency 1 cannot carry electronic noise",
            ));
        }
        let imp = &self.impairments;
        if imp.oversampling == 0 {
            return Err(invalid("impairments.oversampling", "must be >= 1"));
        }
        if imp.oversampling != self.dsp.downsample {
            return Err(invalid(
                "dsp.downsample",
                "must equal impairments.oversampling",
            ));
        }
        if !(imp.lo_drift_amplitude >= 0.0 && imp.lo_drift_amplitude < 0.5) {
            return Err(invalid("impairments.lo_drift_amplitude", "must lie in [0, 0.5)"));
        }
        if !(imp.phase_drift_sigma_rad >= 0.0) || !(imp.oversampling_noise_snu >= 0.0) {
            return Err(invalid("impairments", "noise levels must be >= 0"));
        }
        let f = &self.frames;
        if f.samples < 1000 {
            return Err(invalid("frames.samples", "must be >= 1000"));
        }
        if imp.max_delay > self.dsp.sync_max_lag {
            return Err(invalid("impairments.max_delay", "exceeds dsp.sync_max_lag"));
        }
        if self.dsp.sync_max_lag >= f.samples {
            return Err(invalid("dsp.sync_max_lag", "must be below frames.samples"));
        }
        if f.estimation_group == 0 || f.count < f.estimation_group {
            return Err(invalid(
                "frames.count",
                "must hold at least one estimation group",
            ));
        }
        if f.splice_group == 0 {
            return Err(invalid("frames.splice_group", "must be >= 1"));
        }
        if !(f.sample_rate_hz > 0.0) {
            return Err(invalid("frames.sample_rate_hz", "must be > 0"));
        }
        let need = self.peak_memory_bytes();
        if need > self.memory_budget_bytes {
            return Err(invalid(
                "frames.samples",
                format!("needs about {need} bytes per frame slot, budget {}", self.memory_budget_bytes),
            ));
        }
        Ok(())
    }

    /// Rough peak working set of one frame slot. Frames stream through the
    /// pipeline one slot at a time, so the frame count doesn't matter.
    pub fn peak_memory_bytes(&self) -> u64 {
        let n = self.frames.samples as u64;
        let f = self.impairments.oversampling as u64;
        let per = 16u64;
        // reference + measurement + outgoing, plus per QNU: clean, raw (oversampled), processed
        n * per * (3 + self.fanout as u64 * (2 + f))
    }

    pub fn estimation_points(&self) -> usize {
        self.frames.count / self.frames.estimation_group
    }

    pub fn key_params(&self) -> KeyRateParams {
        KeyRateParams {
            detector: Some(self.qnu_detector),
            ..self.keyrate
        }
    }
}

/// Reads, parses and validates a scenario file. A bare preset name
/// (`table1_4qnu`) is accepted when no such file exists.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    if !path.exists() {
        if let Some(name) = path.to_str() {
            if PRESETS.iter().any(|(n, _)| *n == name) {
                return ScenarioConfig::preset(name);
            }
        }
    }
    let src = std::fs::read_to_string(path)?;
    ScenarioConfig::from_toml_str(&src)
}
