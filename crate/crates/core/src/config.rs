//! Run configuration files.
//!
//! Configurations are TOML documents with the sections `[params]`, `[grid]`,
//! `[scenario]`, `[control]` and `[output]`; every key is optional and falls
//! back to the case-study defaults. Dimensional values are either bare
//! numbers in the key's canonical unit or strings carrying a unit suffix,
//! e.g. `rho_max = "0.16 cars/m"`. A suffix of the wrong dimension is an
//! error, as is any key outside the schema. See `README.md` for the table.

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{make_grid, per_km_to_per_m, TrafficParams};
use crate::riccati::VslClamp;
use crate::scenario::{BcLengthUnit, Model, Scenario, TimeStepping};
use crate::solver::Outflow;

/// Artifact kinds a run can emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "svg" => Ok(Format::Svg),
            other => Err(Error::Config(format!("unknown output format `{other}`"))),
        }
    }
}

/// Weights used by `sweep` and `riccati` when none are given.
pub const CASE_STUDY_Q0: [f64; 4] = [1e-6, 1e-5, 5e-5, 5e-4];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub output_dir: PathBuf,
    pub formats: BTreeSet<Format>,
    pub q0_list: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::case_study(Model::Linear),
            output_dir: PathBuf::from("out"),
            formats: [Format::Csv, Format::Json, Format::Svg].into_iter().collect(),
            q0_list: CASE_STUDY_Q0.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Dim {
    /// canonical cars/km
    Density,
    /// canonical km/h
    Speed,
    /// canonical m
    Length,
    /// canonical s
    Time,
    /// canonical 1/s
    Rate,
    /// canonical cars/km/s
    DensityRate,
}

impl Dim {
    fn name(self) -> &'static str {
        match self {
            Dim::Density => "density",
            Dim::Speed => "speed",
            Dim::Length => "length",
            Dim::Time => "time",
            Dim::Rate => "rate",
            Dim::DensityRate => "density rate",
        }
    }

    fn factor(self, unit: &str) -> Option<f64> {
        let f = match (self, unit) {
            (Dim::Density, "cars/km") => 1.0,
            (Dim::Density, "cars/m") => 1000.0,
            (Dim::Speed, "km/h" | "kph") => 1.0,
            (Dim::Speed, "m/s") => 3.6,
            (Dim::Length, "m") => 1.0,
            (Dim::Length, "km") => 1000.0,
            (Dim::Time, "s") => 1.0,
            (Dim::Time, "min") => 60.0,
            (Dim::Time, "h") => 3600.0,
            (Dim::Rate, "1/s") => 1.0,
            (Dim::DensityRate, "cars/km/s") => 1.0,
            (Dim::DensityRate, "cars/m/s") => 1000.0,
            _ => return None,
        };
        Some(f)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Quantity {
    Number(f64),
    Text(String),
}

impl Quantity {
    fn to_canonical(&self, key: &str, dim: Dim) -> Result<f64> {
        match self {
            Quantity::Number(v) => Ok(*v),
            Quantity::Text(text) => {
                let text = text.trim();
                let (num, unit) = text
                    .split_once(char::is_whitespace)
                    .ok_or_else(|| Error::Config(format!("`{key}`: expected \"<number> <unit>\", got \"{text}\"")))?;
                let value: f64 = num
                    .parse()
                    .map_err(|_| Error::Config(format!("`{key}`: cannot parse number \"{num}\"")))?;
                let unit = unit.trim();
                let factor = dim
                    .factor(unit)
                    .ok_or_else(|| Error::Config(format!("`{key}`: unit `{unit}` is not a {} unit", dim.name())))?;
                Ok(value * factor)
            }
        }
    }
}

#[derive(Debug, Default, Deserialize)]
struct RawConfig {
    #[serde(default)]
    params: RawParams,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    scenario: RawScenario,
    #[serde(default)]
    control: RawControl,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
struct RawParams {
    rho_max: Option<Quantity>,
    u_max: Option<Quantity>,
    rho_0: Option<Quantity>,
    b_0: Option<f64>,
    road_length: Option<Quantity>,
    sim_time: Option<Quantity>,
}

#[derive(Debug, Default, Deserialize)]
struct RawGrid {
    n_cells: Option<usize>,
    cfl: Option<f64>,
    time_stepping: Option<String>,
    outflow: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
struct RawScenario {
    model: Option<String>,
    ic_amplitude: Option<Quantity>,
    bc_osc_amplitude: Option<Quantity>,
    bc_osc_period: Option<Quantity>,
    bc_length_unit: Option<String>,
    bc_decay_rate: Option<Quantity>,
    bc_growth_rate: Option<Quantity>,
}

#[derive(Debug, Default, Deserialize)]
struct RawControl {
    enabled: Option<bool>,
    q0: Option<f64>,
    r0: Option<f64>,
    b_min: Option<f64>,
    b_max: Option<f64>,
    q0_sweep: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
struct RawOutput {
    dir: Option<PathBuf>,
    cadence: Option<Quantity>,
    formats: Option<Vec<String>>,
}

fn quantity(q: &Option<Quantity>, key: &str, dim: Dim, default: f64) -> Result<f64> {
    q.as_ref().map_or(Ok(default), |q| q.to_canonical(key, dim))
}

pub fn parse_model(s: &str) -> Result<Model> {
    match s {
        "linear" => Ok(Model::Linear),
        "nonlinear" => Ok(Model::Nonlinear),
        other => Err(Error::Config(format!("unknown model `{other}` (linear|nonlinear)"))),
    }
}

/// Parses a configuration document, applying defaults for omitted keys.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::Config(e.to_string()))?;
    let mut unknown = Vec::new();
    let raw: RawConfig = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
        .map_err(|e| Error::Config(e.to_string()))?;
    if !unknown.is_empty() {
        return Err(Error::Config(format!("unknown key `{}`", unknown.join("`, `"))));
    }
    build(raw)
}

fn build(raw: RawConfig) -> Result<RunConfig> {
    let rp = &raw.params;
    let params = TrafficParams::from_file_units(
        quantity(&rp.rho_max, "params.rho_max", Dim::Density, 160.0)?,
        quantity(&rp.u_max, "params.u_max", Dim::Speed, 115.0)?,
        quantity(&rp.rho_0, "params.rho_0", Dim::Density, 50.0)?,
        quantity(&rp.road_length, "params.road_length", Dim::Length, 2000.0)?,
        quantity(&rp.sim_time, "params.sim_time", Dim::Time, 120.0)?,
        rp.b_0.unwrap_or(1.0),
    )?;

    let mut scenario = Scenario::case_study(Model::Linear);
    scenario.params = params;
    scenario.grid = make_grid(params.road_length, raw.grid.n_cells.unwrap_or(400))?;
    scenario.cfl = raw.grid.cfl.unwrap_or(0.9);
    scenario.time_stepping = match raw.grid.time_stepping.as_deref() {
        None | Some("fixed") => TimeStepping::Fixed,
        Some("adaptive") => TimeStepping::Adaptive,
        Some(other) => {
            return Err(Error::Config(format!(
                "unknown time_stepping `{other}` (fixed|adaptive)"
            )))
        }
    };
    scenario.outflow = match raw.grid.outflow.as_deref() {
        None | Some("zero-gradient") => Outflow::ZeroGradient,
        Some("equilibrium") => Outflow::Equilibrium,
        Some(other) => {
            return Err(Error::Config(format!(
                "unknown outflow `{other}` (zero-gradient|equilibrium)"
            )))
        }
    };

    let rs = &raw.scenario;
    if let Some(m) = &rs.model {
        scenario.model = parse_model(m)?;
    }
    let unit = match rs.bc_length_unit.as_deref() {
        None | Some("km") => BcLengthUnit::Km,
        Some("m") => BcLengthUnit::M,
        Some(other) => return Err(Error::Config(format!("unknown bc_length_unit `{other}` (km|m)"))),
    };
    let (decay, growth) = unit.coefficients(params.road_length);
    scenario.ic_amplitude = per_km_to_per_m(quantity(&rs.ic_amplitude, "scenario.ic_amplitude", Dim::Density, 10.0)?);
    scenario.bc_osc_amplitude = per_km_to_per_m(quantity(
        &rs.bc_osc_amplitude,
        "scenario.bc_osc_amplitude",
        Dim::Density,
        5.0,
    )?);
    scenario.bc_osc_period = quantity(&rs.bc_osc_period, "scenario.bc_osc_period", Dim::Time, 20.0)?;
    scenario.bc_decay_rate = quantity(&rs.bc_decay_rate, "scenario.bc_decay_rate", Dim::Rate, decay)?;
    scenario.bc_growth_rate = per_km_to_per_m(quantity(
        &rs.bc_growth_rate,
        "scenario.bc_growth_rate",
        Dim::DensityRate,
        growth * 1000.0,
    )?);

    let rc = &raw.control;
    scenario.control_enabled = rc.enabled.unwrap_or(false);
    scenario.q0 = rc.q0.unwrap_or(5e-5);
    scenario.r0 = rc.r0.unwrap_or(1.0);
    let default_clamp = VslClamp::default();
    scenario.clamp = VslClamp {
        b_min: rc.b_min.unwrap_or(default_clamp.b_min),
        b_max: rc.b_max.unwrap_or(default_clamp.b_max),
    };
    let q0_list = rc.q0_sweep.clone().unwrap_or_else(|| CASE_STUDY_Q0.to_vec());

    let ro = &raw.output;
    scenario.output_cadence = quantity(&ro.cadence, "output.cadence", Dim::Time, 0.5)?;
    let formats = match &ro.formats {
        None => RunConfig::default().formats,
        Some(list) => list.iter().map(|s| s.parse()).collect::<Result<_>>()?,
    };
    let config = RunConfig {
        scenario,
        output_dir: ro.dir.clone().unwrap_or_else(|| PathBuf::from("out")),
        formats,
        q0_list,
    };
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.formats.is_empty() {
            return Err(Error::Config("`output.formats` must not be empty".into()));
        }
        if self.scenario.output_cadence.is_nan() || self.scenario.output_cadence <= 0.0 {
            return Err(Error::Config("`output.cadence` must be positive".into()));
        }
        if !(self.scenario.r0.is_finite() && self.scenario.r0 > 0.0) {
            return Err(Error::Config("`control.r0` must be positive".into()));
        }
        self.scenario.validate()
    }
}
