//! The case-study highway: initial/boundary data, the closed loop, metrics.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fundamental::{critical_density, vsl_speed, VslRate};
use crate::params::{make_grid, per_km_to_per_m, Grid1D, TrafficParams};
use crate::riccati::{assemble_problem, control_from_gains, gain_profile, integrate_vsl, ControlField, VslClamp};
use crate::solver::{apply_boundary, cfl_max_dt, step_linear, step_nonlinear, DensityField, FieldKind, Outflow};

/// Relative band around the target car count used for settling times.
pub const TARGET_BAND: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Linear,
    Nonlinear,
}

/// Which length unit the road length takes inside the inflow formula's decay
/// exponent `L * 1e-6 * t` and growth term `t / (4 L)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BcLengthUnit {
    Km,
    M,
}

impl BcLengthUnit {
    /// `(decay rate [1/s], growth rate [cars/m/s])` for a road of `road_length` metres.
    pub fn coefficients(self, road_length: f64) -> (f64, f64) {
        let l = match self {
            BcLengthUnit::Km => road_length / 1000.0,
            BcLengthUnit::M => road_length,
        };
        // growth is 1/(4L) cars/km per second
        (l * 1e-6, per_km_to_per_m(1.0 / (4.0 * l)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeStepping {
    /// One step size per run, from the worst-case wave speed `b_max * u_max`.
    Fixed,
    /// Step size re-derived from the current field every step.
    Adaptive,
}

/// A complete run description. Densities are stored in SI (cars/m).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub params: TrafficParams,
    #[serde(skip)]
    pub grid: Grid1D,
    /// Amplitude of the sinusoidal initial bump [cars/m].
    pub ic_amplitude: f64,
    /// Amplitude of the inflow oscillation [cars/m].
    pub bc_osc_amplitude: f64,
    /// Exponential decay rate of the inflow oscillation [1/s].
    pub bc_decay_rate: f64,
    /// Period of the inflow oscillation [s] (the sine argument is `pi t / period`).
    pub bc_osc_period: f64,
    /// Linear growth of the inflow density [cars/m/s].
    pub bc_growth_rate: f64,
    pub q0: f64,
    pub r0: f64,
    pub control_enabled: bool,
    pub model: Model,
    pub clamp: VslClamp,
    pub cfl: f64,
    pub time_stepping: TimeStepping,
    #[serde(skip)]
    pub outflow: Outflow,
    /// Spacing of recorded frames [s].
    pub output_cadence: f64,
}

impl Scenario {
    /// Case-study highway with the default 400-cell grid and inflow read with L in km.
    pub fn case_study(model: Model) -> Self {
        let params = TrafficParams::case_study();
        let grid = make_grid(params.road_length, 400).expect("valid default grid");
        let (bc_decay_rate, bc_growth_rate) = BcLengthUnit::Km.coefficients(params.road_length);
        Self {
            params,
            grid,
            ic_amplitude: per_km_to_per_m(10.0),
            bc_osc_amplitude: per_km_to_per_m(5.0),
            bc_decay_rate,
            bc_osc_period: 20.0,
            bc_growth_rate,
            q0: 5e-5,
            r0: 1.0,
            control_enabled: false,
            model,
            clamp: VslClamp::default(),
            cfl: 0.9,
            time_stepping: TimeStepping::Fixed,
            outflow: Outflow::ZeroGradient,
            output_cadence: 0.5,
        }
    }

    pub fn with_control(mut self, q0: f64) -> Self {
        self.control_enabled = true;
        self.q0 = q0;
        self
    }

    pub fn with_cells(mut self, n_cells: usize) -> Result<Self> {
        self.grid = make_grid(self.params.road_length, n_cells)?;
        Ok(self)
    }

    /// Scales every perturbation amplitude (bump, oscillation, growth) by `eps`.
    pub fn scaled_perturbation(mut self, eps: f64) -> Self {
        self.ic_amplitude *= eps;
        self.bc_osc_amplitude *= eps;
        self.bc_growth_rate *= eps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        let rho_c = critical_density(p);
        let bad = |name: &'static str, reason: String| Err(Error::InvalidParameter { name, reason });
        if (self.grid.length() - p.road_length).abs() > 1e-9 * p.road_length {
            return bad("grid", "grid does not span the road".into());
        }
        if self.output_cadence.is_nan() || self.output_cadence <= 0.0 {
            return bad(
                "output_cadence",
                format!("must be positive, got {}", self.output_cadence),
            );
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad("cfl", format!("must lie in (0, 1], got {}", self.cfl));
        }
        if self.bc_osc_period.is_nan() || self.bc_osc_period <= 0.0 {
            return bad("bc_osc_period", format!("must be positive, got {}", self.bc_osc_period));
        }
        if self.bc_decay_rate.is_nan() || self.bc_decay_rate < 0.0 {
            return bad(
                "bc_decay_rate",
                format!("must be non-negative, got {}", self.bc_decay_rate),
            );
        }
        self.clamp.validate(p.b_0)?;
        if self.control_enabled {
            assemble_problem(p, self.q0, self.r0)?;
        }
        let ic = self.ic_amplitude.abs();
        if p.rho_0 + ic >= rho_c || p.rho_0 - ic <= 0.0 {
            return bad("ic_amplitude", "initial density leaves the free-flow range".into());
        }
        let drift = self.bc_growth_rate * p.sim_time;
        let hi = p.rho_0 + self.bc_osc_amplitude.abs() + drift.max(0.0);
        let lo = p.rho_0 - self.bc_osc_amplitude.abs() + drift.min(0.0);
        if hi >= rho_c || lo <= 0.0 {
            return bad("bc", "inflow density leaves the free-flow range".into());
        }
        Ok(())
    }

    /// Desired car count, `rho_0 * L`.
    pub fn target_cars(&self) -> f64 {
        self.params.target_cars()
    }
}

/// Initial density `rho_0 + A sin(pi z / L)` [cars/m].
pub fn initial_condition(z: f64, scenario: &Scenario) -> f64 {
    let p = &scenario.params;
    p.rho_0 + scenario.ic_amplitude * (std::f64::consts::PI * z / p.road_length).sin()
}

/// Inflow density `rho_0 + A exp(-k t) sin(pi t / P) + g t` [cars/m].
pub fn upstream_boundary(t: f64, scenario: &Scenario) -> f64 {
    let s = scenario;
    s.params.rho_0
        + s.bc_osc_amplitude * (-s.bc_decay_rate * t).exp() * (std::f64::consts::PI * t / s.bc_osc_period).sin()
        + s.bc_growth_rate * t
}

/// Cars on the road, `sum rho_i dz`, accumulated as deviations from rho_0 so
/// that a uniform equilibrium road counts exactly `rho_0 L`.
pub fn total_cars(field: &DensityField, grid: &Grid1D, params: &TrafficParams) -> f64 {
    let deviation: f64 = match field.kind {
        FieldKind::Absolute => field.values.iter().map(|v| v - params.rho_0).sum(),
        FieldKind::Perturbation => field.values.iter().sum(),
    };
    params.rho_0 * grid.n_cells as f64 * grid.dz + deviation * grid.dz
}

/// Everything recorded during one run. Frames share the indexing of `times`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationHistory {
    pub model: Model,
    pub times: Vec<f64>,
    pub density_frames: Vec<DensityField>,
    /// Per-cell speed [m/s].
    pub speed_frames: Vec<Vec<f64>>,
    /// Per-interface VSL rate.
    pub vsl_frames: Vec<Vec<f64>>,
    /// Per-interface db/dz [1/m].
    pub control_frames: Vec<Vec<f64>>,
    pub total_cars_series: Vec<f64>,
    /// Cumulative `int (F_in - F_out) dt` at each frame [cars]. Only the
    /// nonlinear model carries a conserved quantity; linear runs record the
    /// perturbation transport flux.
    pub net_inflow_series: Vec<f64>,
    /// Extremes of absolute density over every solver step [cars/m].
    pub min_density: f64,
    pub max_density: f64,
    pub steps: usize,
    pub target_cars: f64,
}

impl SimulationHistory {
    pub fn final_total_cars(&self) -> f64 {
        *self.total_cars_series.last().expect("history has an initial frame")
    }

    /// Earliest frame time from which the car count stays within `band`
    /// (relative) of the target. `None` if the final frame is outside.
    pub fn time_to_target(&self, band: f64) -> Option<f64> {
        let tol = band * self.target_cars;
        let mut since = None;
        for (t, c) in self.times.iter().zip(&self.total_cars_series) {
            if (c - self.target_cars).abs() <= tol {
                since.get_or_insert(*t);
            } else {
                since = None;
            }
        }
        since
    }
}

/// Compact per-run metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub model: Model,
    pub control_enabled: bool,
    /// Absent for open-loop runs, whose output does not depend on it.
    pub q0: Option<f64>,
    pub final_total_cars: f64,
    pub target_cars: f64,
    pub time_to_target_s: Option<f64>,
    pub min_density_per_km: f64,
    pub max_density_per_km: f64,
    pub steps: usize,
}

impl RunSummary {
    pub fn new(scenario: &Scenario, history: &SimulationHistory) -> Self {
        Self {
            model: scenario.model,
            control_enabled: scenario.control_enabled,
            q0: scenario.control_enabled.then_some(scenario.q0),
            final_total_cars: history.final_total_cars(),
            target_cars: history.target_cars,
            time_to_target_s: history.time_to_target(TARGET_BAND),
            min_density_per_km: crate::params::per_m_to_per_km(history.min_density),
            max_density_per_km: crate::params::per_m_to_per_km(history.max_density),
            steps: history.steps,
        }
    }
}

struct ClosedLoop<'a> {
    scenario: &'a Scenario,
    gains: Option<Vec<f64>>,
}

impl ClosedLoop<'_> {
    fn control(&self, field: &DensityField) -> Result<ControlField> {
        let s = self.scenario;
        let p = &s.params;
        match &self.gains {
            None => Ok(ControlField::idle(p.b_0, &s.grid, field.time)),
            Some(gains) => {
                let delta = field.to_perturbation(p.rho_0);
                let u = control_from_gains(&delta, gains, &s.grid)?;
                integrate_vsl(&u, p.b_0, &s.grid, s.clamp, field.time)
            }
        }
    }

    fn speeds(&self, field: &DensityField, b_profile: &[f64]) -> Result<Vec<f64>> {
        let p = &self.scenario.params;
        field
            .absolute_values(p.rho_0)
            .iter()
            .enumerate()
            .map(|(i, &rho)| {
                let b = VslRate::new(0.5 * (b_profile[i] + b_profile[i + 1]))?;
                vsl_speed(rho.clamp(0.0, p.rho_max), b, p)
            })
            .collect()
    }
}

/// Runs the scenario from t = 0 to the horizon, recording a frame every
/// `output_cadence` seconds (and at the horizon).
///
/// Each solver step evaluates the feedback on the current state, integrates
/// it into a speed-limit profile, and advances the plant with that profile
/// frozen. The nonlinear plant receives the same linear feedback law, fed
/// with its own `rho - rho_0`.
pub fn run_simulation(scenario: &Scenario) -> Result<SimulationHistory> {
    scenario.validate()?;
    let s = scenario;
    let p = &s.params;
    let grid = &s.grid;

    let gains = if s.control_enabled {
        let problem = assemble_problem(p, s.q0, s.r0)?;
        Some(gain_profile(&problem, grid)?)
    } else {
        None
    };
    let ctl = ClosedLoop { scenario: s, gains };

    let mut field = {
        let ic: Vec<f64> = grid.cell_centers.iter().map(|&z| initial_condition(z, s)).collect();
        let f = DensityField::absolute(ic, 0.0);
        match s.model {
            Model::Nonlinear => f,
            Model::Linear => f.to_perturbation(p.rho_0),
        }
    };

    let fixed_dt = s.cfl * grid.dz / (s.clamp.b_max * p.u_max);
    let mut history = SimulationHistory {
        model: s.model,
        times: Vec::new(),
        density_frames: Vec::new(),
        speed_frames: Vec::new(),
        vsl_frames: Vec::new(),
        control_frames: Vec::new(),
        total_cars_series: Vec::new(),
        net_inflow_series: Vec::new(),
        min_density: f64::INFINITY,
        max_density: f64::NEG_INFINITY,
        steps: 0,
        target_cars: s.target_cars(),
    };
    let mut net_inflow = 0.0;

    let track_extremes = |h: &mut SimulationHistory, f: &DensityField| {
        for rho in f.absolute_values(p.rho_0) {
            h.min_density = h.min_density.min(rho);
            h.max_density = h.max_density.max(rho);
        }
    };
    let record = |h: &mut SimulationHistory, f: &DensityField, net: f64| -> Result<()> {
        let c = ctl.control(f)?;
        h.times.push(f.time);
        h.speed_frames.push(ctl.speeds(f, &c.b_profile)?);
        h.total_cars_series.push(total_cars(f, grid, p));
        h.net_inflow_series.push(net);
        h.vsl_frames.push(c.b_profile);
        h.control_frames.push(c.dbdz);
        h.density_frames.push(f.clone());
        Ok(())
    };

    track_extremes(&mut history, &field);
    record(&mut history, &field, net_inflow)?;

    let n_out = (p.sim_time / s.output_cadence - 1e-9).ceil().max(1.0) as usize;
    for k in 1..=n_out {
        let t_start = field.time;
        let t_end = (k as f64 * s.output_cadence).min(p.sim_time);
        let span = t_end - t_start;
        let n_fixed = (span / fixed_dt - 1e-9).ceil().max(1.0) as usize;
        let mut sub = 0usize;
        while field.time < t_end {
            let control = ctl.control(&field)?;
            let remaining = t_end - field.time;
            let (dt, lands) = match s.time_stepping {
                TimeStepping::Fixed => (span / n_fixed as f64, sub + 1 == n_fixed),
                TimeStepping::Adaptive => {
                    let dt = cfl_max_dt(&field, &control.b_profile, grid, p, s.cfl, remaining)?;
                    // avoid a sliver step at the end of the interval
                    if dt >= remaining * (1.0 - 1e-9) {
                        (remaining, true)
                    } else {
                        (dt, false)
                    }
                }
            };
            let ghosts = apply_boundary(&field, upstream_boundary(field.time, s), p, s.outflow)?;
            let step = match s.model {
                Model::Linear => step_linear(&field, ghosts, &control.b_profile, grid, p, dt)?,
                Model::Nonlinear => step_nonlinear(&field, ghosts, &control.b_profile, grid, p, dt)?,
            };
            net_inflow += dt * (step.interface_fluxes[0] - step.interface_fluxes[grid.n_cells]);
            field = step.field;
            sub += 1;
            if lands {
                field.time = t_end;
            } else if s.time_stepping == TimeStepping::Fixed {
                field.time = t_start + sub as f64 * dt;
            }
            history.steps += 1;
            track_extremes(&mut history, &field);
        }
        record(&mut history, &field, net_inflow)?;
    }
    Ok(history)
}

/// Result of one member of a weight sweep.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub q0: f64,
    pub result: Result<SimulationHistory>,
}

/// Runs the scenario once per weight (control enabled), concurrently.
/// Failures are tagged with their weight; other members still complete.
pub fn sweep_q0(scenario: &Scenario, q0_list: &[f64]) -> Result<Vec<SweepOutcome>> {
    if q0_list.is_empty() {
        return Err(Error::InvalidParameter {
            name: "q0_list",
            reason: "sweep needs at least one weight".into(),
        });
    }
    if let Some(bad) = q0_list.iter().find(|q| !(q.is_finite() && **q > 0.0)) {
        return Err(Error::InvalidParameter {
            name: "q0_list",
            reason: format!("weights must be positive, got {bad}"),
        });
    }
    Ok(q0_list
        .par_iter()
        .map(|&q0| {
            let member = scenario.clone().with_control(q0);
            SweepOutcome {
                q0,
                result: run_simulation(&member).map_err(|e| Error::SweepMember {
                    q0,
                    source: Box::new(e),
                }),
            }
        })
        .collect())
}
