//! JSON configuration and scenario files.
//!
//! Field names carry their SI unit (`_m`, `_kg`, `_rad`, ...). Unknown keys
//! are rejected, and every embedded domain invariant is checked at load time
//! so that a loaded [`ConfigFile`] is always usable as-is.

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{ComplianceSpec, DamperSpec, Device, Scenario};
use crate::kinematics::{Joint, MechanismParams, ValidationError};
use crate::statics::{synthesize_balancing, SpringKind, SpringSpec, SynthesisBounds};

pub const SCHEMA_VERSION: u32 = 1;

/// The shipped nominal configuration.
pub const DEFAULT_CONFIG_JSON: &str = include_str!("../configs/default.json");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid value at {path}: {constraint}")]
    Validation { path: String, constraint: String },
    #[error("schema_version {found} is not supported (expected {supported})")]
    VersionMismatch { found: u32, supported: u32 },
}

impl ConfigError {
    fn at(prefix: &str, e: ValidationError) -> Self {
        let path = if prefix.is_empty() {
            e.field
        } else {
            format!("{prefix}.{}", e.field)
        };
        ConfigError::Validation {
            path,
            constraint: e.constraint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub mechanism: MechanismParams,
    pub springs: Vec<SpringSpec>,
    pub dampers: Vec<DamperSpec>,
    pub compliance: ComplianceSpec,
}

impl ConfigFile {
    /// Nominal mechanism with zero-free-length balancing springs, viscous
    /// dampers on J2 and J3 and the rubber utensil mount.
    pub fn nominal() -> Self {
        let mechanism = MechanismParams::nominal();
        let balance = synthesize_balancing(
            &mechanism,
            SpringKind::LinearZeroFreeLength,
            &SynthesisBounds::default(),
        )
        .expect("default synthesis bounds are feasible");
        let viscous = |joint| DamperSpec {
            deadzone: 0.3,
            ..DamperSpec::viscous(joint, 0.4)
        };
        Self {
            schema_version: SCHEMA_VERSION,
            mechanism,
            springs: balance.springs().to_vec(),
            dampers: vec![viscous(Joint::J2), viscous(Joint::J3)],
            compliance: ComplianceSpec::nominal(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::VersionMismatch {
                found: self.schema_version,
                supported: SCHEMA_VERSION,
            });
        }
        self.mechanism
            .validate()
            .map_err(|e| ConfigError::at("mechanism", e))?;
        for (i, s) in self.springs.iter().enumerate() {
            s.validate()
                .map_err(|e| ConfigError::at(&format!("springs[{i}]"), e))?;
        }
        for (i, d) in self.dampers.iter().enumerate() {
            d.validate()
                .map_err(|e| ConfigError::at(&format!("dampers[{i}]"), e))?;
        }
        self.compliance
            .validate()
            .map_err(|e| ConfigError::at("compliance", e))
    }

    pub fn device(&self) -> Device {
        Device {
            params: self.mechanism.clone(),
            springs: self.springs.clone(),
            dampers: self.dampers.clone(),
            compliance: self.compliance,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

fn parse<T: DeserializeOwned>(text: &str) -> Result<T, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::Parse {
            path,
            message: e.into_inner().to_string(),
        }
    })
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ConfigFile, ConfigError> {
    // check the version before the schema so old files get a clear message
    #[derive(Deserialize)]
    struct Version {
        schema_version: Option<u32>,
    }
    if let Ok(Version {
        schema_version: Some(found),
    }) = serde_json::from_str::<Version>(text)
    {
        if found != SCHEMA_VERSION {
            return Err(ConfigError::VersionMismatch {
                found,
                supported: SCHEMA_VERSION,
            });
        }
    }
    let cfg: ConfigFile = parse(text)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ConfigFile, ConfigError> {
    parse_config(&read(path.as_ref())?)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ConfigError> {
    let sc: Scenario = parse(text)?;
    sc.validate().map_err(|e| ConfigError::at("", e))?;
    Ok(sc)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ConfigError> {
    parse_scenario(&read(path.as_ref())?)
}
