//! Scenario files, seeded end-to-end runs and report emission.
//!
//! A scenario is a TOML document with one table per layer (`[channel]`,
//! `[receiver]`, `[session]`, `[sync]`, `[pat]`, ...). Omitted keys take
//! the layer defaults; unknown keys are rejected.

mod report;
mod run;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelParams, ReceiverConfig};
use crate::error::{require, ParamError};
use crate::pat::PatConfig;
use crate::protocol::SessionConfig;
use crate::sync::SyncConfig;

pub use report::{
    emit_report, read_blocks_csv, render_summary, write_blocks_csv, EmittedFiles, BLOCKS_CSV_HEADER,
};
pub use run::{run_scenario, BlockRecord, RunCounters, RunOptions, ScenarioReport};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: {source}")]
    Invalid {
        path: String,
        #[source]
        source: ParamError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ScenarioError {
    /// The offending key of a validation failure.
    pub fn key(&self) -> Option<&str> {
        match self {
            ScenarioError::Invalid { source, .. } => Some(&source.key),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Geometry {
    pub horizontal_distance_m: f64,
    pub altitude_m: f64,
    pub speed_mps: f64,
    /// Line-of-sight heading range swept while moving, degrees.
    pub heading_min_deg: f64,
    pub heading_max_deg: f64,
    pub travel_m: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            horizontal_distance_m: 100.0,
            altitude_m: 0.0,
            speed_mps: 0.0,
            heading_min_deg: 90.0,
            heading_max_deg: 90.0,
            travel_m: 0.0,
        }
    }
}

impl Geometry {
    pub fn validate(&self) -> Result<(), ParamError> {
        require(
            self.horizontal_distance_m.is_finite() && self.horizontal_distance_m > 0.0,
            "horizontal_distance_m",
            self.horizontal_distance_m,
            "must be > 0",
        )?;
        require(
            self.altitude_m.is_finite() && self.altitude_m >= 0.0,
            "altitude_m",
            self.altitude_m,
            "must be >= 0",
        )?;
        require(
            self.speed_mps.is_finite() && self.speed_mps >= 0.0,
            "speed_mps",
            self.speed_mps,
            "must be >= 0",
        )?;
        require(
            self.heading_min_deg <= self.heading_max_deg,
            "heading_max_deg",
            self.heading_max_deg,
            "must be >= heading_min_deg",
        )?;
        if self.speed_mps > 0.0 {
            require(
                self.travel_m.is_finite() && self.travel_m > 0.0,
                "travel_m",
                self.travel_m,
                "a moving platform needs a trajectory length > 0",
            )?;
            require(
                self.heading_max_deg > self.heading_min_deg,
                "heading_max_deg",
                self.heading_max_deg,
                "a moving platform needs a heading range",
            )?;
        }
        Ok(())
    }

    pub fn slant_range_m(&self) -> f64 {
        self.horizontal_distance_m.hypot(self.altitude_m)
    }

    /// Peak line-of-sight angular rate for transverse motion, µrad/s.
    pub fn slew_rate_urad_s(&self) -> f64 {
        self.speed_mps / self.slant_range_m() * 1e6
    }

    pub fn travel_time_s(&self) -> f64 {
        if self.speed_mps > 0.0 {
            self.travel_m / self.speed_mps
        } else {
            0.0
        }
    }
}

/// Values measured in the reference experiment, carried for comparison.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PaperReference {
    pub loss_db: Option<f64>,
    pub transmittance: Option<f64>,
    pub key_rate_kbps: Option<f64>,
    /// Additional measured key rates for repeat runs of the same geometry.
    pub other_key_rates_kbps: Vec<f64>,
    pub other_loss_db: Vec<f64>,
}

impl PaperReference {
    pub fn validate(&self) -> Result<(), ParamError> {
        for (key, v) in [
            ("loss_db", self.loss_db),
            ("transmittance", self.transmittance),
            ("key_rate_kbps", self.key_rate_kbps),
        ] {
            if let Some(v) = v {
                require(v.is_finite() && v >= 0.0, key, v, "must be >= 0")?;
            }
        }
        if let Some(t) = self.transmittance {
            require(t <= 1.0, "transmittance", t, "must be <= 1")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub description: String,
    pub duration_s: f64,
    pub seed: u64,
    /// Pulses simulated per block; statistics are scaled to the full block.
    pub sim_pulses_per_block: u64,
    /// Give up on link acquisition after this long, s.
    pub acquisition_timeout_s: f64,
    pub geometry: Geometry,
    pub channel: ChannelParams,
    pub receiver: ReceiverConfig,
    pub session: SessionConfig,
    pub sync: SyncConfig,
    pub pat: PatConfig,
    pub paper_reference: Option<PaperReference>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: String::new(),
            description: String::new(),
            duration_s: 30.0,
            seed: 1,
            sim_pulses_per_block: 1_000_000,
            acquisition_timeout_s: 30.0,
            geometry: Geometry::default(),
            channel: ChannelParams::default(),
            receiver: ReceiverConfig::default(),
            session: SessionConfig::default(),
            sync: SyncConfig::default(),
            pat: PatConfig::default(),
            paper_reference: None,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ParamError> {
        require(!self.name.trim().is_empty(), "name", &self.name, "must not be empty")?;
        require(
            self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-'),
            "name",
            &self.name,
            "must use only letters, digits, '_' and '-'",
        )?;
        require(
            self.duration_s.is_finite() && self.duration_s > 0.0,
            "duration_s",
            self.duration_s,
            "must be > 0",
        )?;
        require(
            self.sim_pulses_per_block >= 10_000,
            "sim_pulses_per_block",
            self.sim_pulses_per_block,
            "must be >= 10000",
        )?;
        require(
            self.acquisition_timeout_s.is_finite() && self.acquisition_timeout_s > 0.0,
            "acquisition_timeout_s",
            self.acquisition_timeout_s,
            "must be > 0",
        )?;
        self.geometry.validate().map_err(|e| e.in_section("geometry"))?;
        self.channel.validate().map_err(|e| e.in_section("channel"))?;
        self.receiver.validate().map_err(|e| e.in_section("receiver"))?;
        self.session.validate().map_err(|e| e.in_section("session"))?;
        self.sync.validate().map_err(|e| e.in_section("sync"))?;
        self.pat.validate().map_err(|e| e.in_section("pat"))?;
        if let Some(r) = &self.paper_reference {
            r.validate().map_err(|e| e.in_section("paper_reference"))?;
        }
        require(
            self.session.pulse_rate_hz == self.channel.pulse_rate_hz,
            "session.pulse_rate_hz",
            self.session.pulse_rate_hz,
            "must equal channel.pulse_rate_hz",
        )?;
        Ok(())
    }

    /// True when the only per-run differences are loss and geometry: no
    /// platform motion, polarization drift or Doppler residual.
    pub fn is_fixed_noise(&self) -> bool {
        self.geometry.speed_mps == 0.0 && self.channel.drift_rate == 0.0 && self.channel.doppler_residual_hz == 0.0
    }

    /// The PAT configuration with slew derived from the geometry.
    pub fn effective_pat(&self) -> PatConfig {
        let mut pat = self.pat.clone();
        if self.geometry.speed_mps > 0.0 {
            pat.disturbance.slew_rate_urad_s = self.geometry.slew_rate_urad_s();
            pat.disturbance.slew_duration_s = self.geometry.travel_time_s();
        }
        pat
    }
}

impl fmt::Display for ScenarioConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match toml::to_string(self) {
            Ok(s) => f.write_str(&s),
            Err(_) => Err(fmt::Error),
        }
    }
}

/// Parses and validates scenario text; `origin` labels error messages.
pub fn parse_scenario(text: &str, origin: &str) -> Result<ScenarioConfig, ScenarioError> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ScenarioError::Parse {
        path: origin.to_string(),
        message: e.message().to_string(),
    })?;
    cfg.validate().map_err(|source| ScenarioError::Invalid {
        path: origin.to_string(),
        source,
    })?;
    Ok(cfg)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text, &path.display().to_string())
}

/// `(file name, contents)` of every bundled fixture.
pub const BUNDLED: [(&str, &str); 8] = [
    ("ground_100m.scenario", include_str!("../../scenarios/ground_100m.scenario")),
    ("ground_100m_static.scenario", include_str!("../../scenarios/ground_100m_static.scenario")),
    ("hover_25m.scenario", include_str!("../../scenarios/hover_25m.scenario")),
    ("hover_50m.scenario", include_str!("../../scenarios/hover_50m.scenario")),
    ("hover_75m.scenario", include_str!("../../scenarios/hover_75m.scenario")),
    ("motion_1mps.scenario", include_str!("../../scenarios/motion_1mps.scenario")),
    ("fixed_1p2km.scenario", include_str!("../../scenarios/fixed_1p2km.scenario")),
    ("km_1p2.scenario", include_str!("../../scenarios/km_1p2.scenario")),
];

/// Looks up a bundled fixture by file name, with or without extension.
pub fn bundled(name: &str) -> Option<ScenarioConfig> {
    let file = if name.ends_with(".scenario") {
        name.to_string()
    } else {
        format!("{name}.scenario")
    };
    BUNDLED
        .iter()
        .find(|(f, _)| *f == file)
        .map(|(f, text)| parse_scenario(text, f).expect("bundled fixtures are valid"))
}

pub fn bundled_all() -> Vec<ScenarioConfig> {
    BUNDLED
        .iter()
        .map(|(f, text)| parse_scenario(text, f).expect("bundled fixtures are valid"))
        .collect()
}
