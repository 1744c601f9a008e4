//! Scenario configuration.
//!
//! TOML with a top-level `schema_version` and one section per concern:
//!
//! ```toml
//! schema_version = 1
//! plant = "cuk"                 # cuk | acad3 | cascade
//! observers = ["all"]           # or a list of observer ids
//! dt = 1e-5
//! horizon = 1.2
//! decimation = 10
//! seed = 42
//! output = "results"
//!
//! [noise]
//! enabled = true
//! amplitude = [0.02, 2e-4]
//! sample_period = 1e-4
//!
//! [cuk]       # L1, C2, L3, C4, E, G, start
//! [control]   # segments = [[t, Vd], ...], lambda_c, u_clamp
//! [gains]     # converter observer gains
//! [acad3]     # u, start, alpha, gamma, psi0, prime_filters
//! [cascade]   # start, alpha, gamma, prime_filters
//! [diagnostics]  # theta, d_m, chi
//! ```
//!
//! Every key except `schema_version` is optional; unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use observerkit_core::observers::{CukGains, CukObserverId, IioVariant, KklPeboYVariant};
use observerkit_core::plants::{acad3_equilibrium, ControlSchedule, CukParams};

use crate::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantId {
    Cuk,
    Acad3,
    Cascade,
}

impl PlantId {
    pub const ALL: [PlantId; 3] = [PlantId::Cuk, PlantId::Acad3, PlantId::Cascade];

    pub fn as_str(&self) -> &'static str {
        match self {
            PlantId::Cuk => "cuk",
            PlantId::Acad3 => "acad3",
            PlantId::Cascade => "cascade",
        }
    }

    /// Observer ids registered for this plant.
    pub fn observer_ids(&self) -> Vec<&'static str> {
        match self {
            PlantId::Cuk => CukObserverId::ALL.iter().map(|id| id.as_str()).collect(),
            PlantId::Acad3 | PlantId::Cascade => vec!["kkl-pebo"],
        }
    }

    fn default_dt(&self) -> f64 {
        match self {
            PlantId::Cuk => 1e-5,
            PlantId::Acad3 | PlantId::Cascade => 1e-3,
        }
    }

    fn default_horizon(&self) -> f64 {
        match self {
            PlantId::Cuk => 1.2,
            PlantId::Acad3 => 30.0,
            PlantId::Cascade => 20.0,
        }
    }

    fn default_decimation(&self) -> usize {
        match self {
            PlantId::Cuk => 10,
            PlantId::Acad3 | PlantId::Cascade => 1,
        }
    }
}

impl fmt::Display for PlantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlantId {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PlantId::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                HarnessError::Validation(format!(
                    "unknown plant '{s}'; valid plants: cuk, acad3, cascade"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub enabled: bool,
    /// Half-widths per output channel. Defaults to the converter's
    /// `[0.02, 2e-4]` for the converter and is required otherwise.
    pub amplitude: Option<Vec<f64>>,
    pub sample_period: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            amplitude: None,
            sample_period: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CukConfig {
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    #[serde(rename = "L3")]
    pub l3: f64,
    #[serde(rename = "C4")]
    pub c4: f64,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "G")]
    pub g: f64,
    /// `(i1, v4, v2, i3)`; defaults to the steady state for `Vd = -12 V`.
    pub start: Option<[f64; 4]>,
}

impl Default for CukConfig {
    fn default() -> Self {
        let p = CukParams::reference();
        Self {
            l1: p.l1,
            c2: p.c2,
            l3: p.l3,
            c4: p.c4,
            e: p.e,
            g: p.g,
            start: None,
        }
    }
}

impl CukConfig {
    pub fn params(&self) -> CukParams {
        CukParams {
            l1: self.l1,
            c2: self.c2,
            l3: self.l3,
            c4: self.c4,
            e: self.e,
            g: self.g,
        }
    }

    pub fn start(&self) -> [f64; 4] {
        self.start.unwrap_or_else(|| self.params().default_start())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlConfig {
    /// `[start time, Vd]` pairs.
    pub segments: Vec<(f64, f64)>,
    pub lambda_c: f64,
    pub u_clamp: (f64, f64),
}

impl Default for ControlConfig {
    fn default() -> Self {
        let s = ControlSchedule::default();
        Self {
            segments: s.segments,
            lambda_c: s.lambda_c,
            u_clamp: s.u_clamp,
        }
    }
}

impl ControlConfig {
    pub fn schedule(&self) -> ControlSchedule {
        ControlSchedule {
            segments: self.segments.clone(),
            lambda_c: self.lambda_c,
            u_clamp: self.u_clamp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YVariant {
    Derived,
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IioEquations {
    Corrected,
    Printed,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainsConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub gamma_pebo: [f64; 2],
    pub gamma1: f64,
    pub gamma2: f64,
    pub r1: f64,
    pub r2: f64,
    pub hgo_alpha: [f64; 4],
    pub prime_filters: bool,
    pub kkl_pebo_y: YVariant,
    pub iio: IioEquations,
}

impl Default for GainsConfig {
    fn default() -> Self {
        let g = CukGains::default();
        Self {
            alpha: g.alpha,
            gamma: g.gamma,
            gamma_pebo: g.gamma_pebo,
            gamma1: g.gamma1,
            gamma2: g.gamma2,
            r1: g.r1,
            r2: g.r2,
            hgo_alpha: g.hgo_alpha,
            prime_filters: g.prime_filters,
            kkl_pebo_y: YVariant::Derived,
            iio: IioEquations::Corrected,
        }
    }
}

impl GainsConfig {
    pub fn gains(&self) -> CukGains {
        CukGains {
            alpha: self.alpha,
            gamma: self.gamma,
            gamma_pebo: self.gamma_pebo,
            gamma1: self.gamma1,
            gamma2: self.gamma2,
            r1: self.r1,
            r2: self.r2,
            hgo_alpha: self.hgo_alpha,
            prime_filters: self.prime_filters,
            kkl_pebo_y: match self.kkl_pebo_y {
                YVariant::Derived => KklPeboYVariant::Derived,
                YVariant::Printed => KklPeboYVariant::Printed,
            },
            iio: match self.iio {
                IioEquations::Corrected => IioVariant::Corrected,
                IioEquations::Printed => IioVariant::Printed,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Acad3Config {
    pub u: f64,
    /// Defaults to the steady state for `u` shifted by `(0.2, 0.2, -0.2)`.
    pub start: Option<[f64; 3]>,
    pub alpha: f64,
    pub gamma: f64,
    pub psi0: f64,
    pub prime_filters: bool,
}

impl Default for Acad3Config {
    fn default() -> Self {
        Self {
            u: -1.0,
            start: None,
            alpha: 0.5,
            gamma: 2.0,
            psi0: 0.1,
            prime_filters: true,
        }
    }
}

impl Acad3Config {
    pub fn start(&self) -> Result<[f64; 3], HarnessError> {
        match self.start {
            Some(s) => Ok(s),
            None => {
                let eq = acad3_equilibrium(self.u)?;
                Ok([eq[0] + 0.2, eq[1] + 0.2, eq[2] - 0.2])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CascadeConfig {
    pub start: [f64; 4],
    pub alpha: f64,
    pub gamma: f64,
    pub prime_filters: bool,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            start: [0.5, 1.0, -1.0, 2.0],
            alpha: 1.0,
            gamma: 5.0,
            prime_filters: true,
        }
    }
}

/// Optional trace columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Diagnostics {
    /// Parameter estimate and its error.
    pub theta: bool,
    /// Off-the-manifold coordinate.
    pub d_m: bool,
    /// Full observer extension, including regressor filter states.
    pub chi: bool,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Self {
            theta: true,
            d_m: true,
            chi: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default = "default_plant")]
    pub plant: PlantId,
    #[serde(default)]
    pub observers: Vec<String>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub decimation: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub cuk: CukConfig,
    #[serde(default)]
    pub control: ControlConfig,
    #[serde(default)]
    pub gains: GainsConfig,
    #[serde(default)]
    pub acad3: Acad3Config,
    #[serde(default)]
    pub cascade: CascadeConfig,
    #[serde(default)]
    pub diagnostics: Diagnostics,
}

fn default_plant() -> PlantId {
    PlantId::Cuk
}

impl ScenarioConfig {
    /// Defaults for `plant`.
    pub fn new(plant: PlantId) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            plant,
            observers: Vec::new(),
            dt: None,
            horizon: None,
            decimation: None,
            seed: 0,
            output: None,
            noise: NoiseConfig::default(),
            cuk: CukConfig::default(),
            control: ControlConfig::default(),
            gains: GainsConfig::default(),
            acad3: Acad3Config::default(),
            cascade: CascadeConfig::default(),
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: ScenarioConfig = toml::from_str(text)
            .map_err(|e| HarnessError::Validation(format!("invalid configuration: {e}")))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::Validation(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or_else(|| self.plant.default_dt())
    }

    pub fn horizon(&self) -> f64 {
        self.horizon.unwrap_or_else(|| self.plant.default_horizon())
    }

    pub fn decimation(&self) -> usize {
        self.decimation
            .unwrap_or_else(|| self.plant.default_decimation())
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output
            .clone()
            .unwrap_or_else(|| PathBuf::from("results"))
    }

    /// Observer ids to run, with `all` (or an empty list) expanded.
    pub fn observer_ids(&self) -> Result<Vec<String>, HarnessError> {
        let valid = self.plant.observer_ids();
        if self.observers.is_empty() || self.observers.iter().any(|o| o == "all") {
            return Ok(valid.iter().map(|s| s.to_string()).collect());
        }
        for o in &self.observers {
            if !valid.contains(&o.as_str()) {
                return Err(HarnessError::Validation(format!(
                    "unknown observer '{o}' for plant {}; valid ids: {}, all",
                    self.plant,
                    valid.join(", ")
                )));
            }
        }
        Ok(self.observers.clone())
    }

    /// Noise half-widths, or `None` when noise is off.
    pub fn noise_amplitude(&self) -> Result<Option<Vec<f64>>, HarnessError> {
        if !self.noise.enabled {
            return Ok(None);
        }
        match (&self.noise.amplitude, self.plant) {
            (Some(a), _) => Ok(Some(a.clone())),
            (None, PlantId::Cuk) => Ok(Some(vec![0.02, 2e-4])),
            (None, p) => Err(HarnessError::Validation(format!(
                "noise.amplitude is required when noise is enabled for plant {p}"
            ))),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let (dt, horizon) = (self.dt(), self.horizon());
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(HarnessError::Validation(format!(
                "dt must be positive, got {dt}"
            )));
        }
        if !(horizon >= dt) || !horizon.is_finite() {
            return Err(HarnessError::Validation(format!(
                "horizon must be at least dt, got {horizon}"
            )));
        }
        if self.decimation() == 0 {
            return Err(HarnessError::Validation(
                "decimation must be at least 1".into(),
            ));
        }
        if let Some(a) = self.noise_amplitude()? {
            if a.iter().any(|v| !(*v >= 0.0)) {
                return Err(HarnessError::Validation(
                    "noise amplitudes must be non-negative".into(),
                ));
            }
            if !(self.noise.sample_period > 0.0) {
                return Err(HarnessError::Validation(
                    "noise.sample_period must be positive".into(),
                ));
            }
            if dt > self.noise.sample_period * (1.0 + 1e-9) {
                return Err(HarnessError::Validation(format!(
                    "dt = {dt} exceeds the noise sample period {}",
                    self.noise.sample_period
                )));
            }
        }
        self.observer_ids()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_takes_defaults() {
        let cfg = ScenarioConfig::from_toml("schema_version = 1").unwrap();
        assert_eq!(cfg.plant, PlantId::Cuk);
        assert_eq!((cfg.dt(), cfg.horizon(), cfg.decimation()), (1e-5, 1.2, 10));
        assert_eq!(cfg.observer_ids().unwrap().len(), 6);
        assert_eq!(cfg.gains.gains(), CukGains::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn sections_are_parsed() {
        let text = r#"
            schema_version = 1
            plant = "acad3"
            horizon = 5.0
            [acad3]
            gamma = 3.0
            [noise]
            enabled = true
            amplitude = [0.01]
            sample_period = 1e-3
        "#;
        let cfg = ScenarioConfig::from_toml(text).unwrap();
        assert_eq!(cfg.acad3.gamma, 3.0);
        assert_eq!(cfg.noise_amplitude().unwrap(), Some(vec![0.01]));
        cfg.validate().unwrap();
    }

    #[test]
    fn bad_files_are_rejected() {
        assert!(ScenarioConfig::from_toml("schema_version = 2").is_err());
        assert!(ScenarioConfig::from_toml("plant = \"cuk\"").is_err());
        assert!(ScenarioConfig::from_toml("schema_version = 1\nbogus = 3").is_err());
        let mut cfg = ScenarioConfig::new(PlantId::Cuk);
        cfg.observers = vec!["kalman".into()];
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("hgo-tv"), "{err}");
        let mut cfg = ScenarioConfig::new(PlantId::Cuk);
        cfg.noise.enabled = true;
        cfg.dt = Some(1e-3);
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::new(PlantId::Acad3);
        cfg.noise.enabled = true;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::new(PlantId::Cuk);
        cfg.horizon = Some(1e-6);
        assert!(cfg.validate().is_err());
    }
}
