//! Numerical self-checks run by the `verify` subcommand.
//!
//! Each check returns a measured value together with its pass band, so the
//! CLI can print one line per property.

use std::fmt;

use crate::error::Result;
use crate::fundamental::{characteristic_speed, VslRate};
use crate::params::{make_grid, TrafficParams};
use crate::riccati::{assemble_problem, phi_closed_form, phi_numeric_oracle, RiccatiProblem};
use crate::scenario::{run_simulation, Model, Scenario};
use crate::solver::{apply_boundary, step_linear, step_nonlinear, DensityField, Outflow};

pub const CASE_STUDY_Q0: [f64; 4] = crate::config::CASE_STUDY_Q0;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Check {
    fn within(name: impl Into<String>, measured: f64, lower: f64, upper: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            lower,
            upper,
        }
    }

    fn below(name: impl Into<String>, measured: f64, upper: f64) -> Self {
        Self::within(name, measured, f64::NEG_INFINITY, upper)
    }

    pub fn passed(&self) -> bool {
        self.measured >= self.lower && self.measured <= self.upper
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        if self.lower == f64::NEG_INFINITY {
            write!(
                f,
                "{verdict}  {:<48} {:.3e} (< {:.1e})",
                self.name, self.measured, self.upper
            )
        } else {
            write!(
                f,
                "{verdict}  {:<48} {:.4} (in [{}, {}])",
                self.name, self.measured, self.lower, self.upper
            )
        }
    }
}

/// `max |V dPhi/dz - (2 M Phi + C0^2 Q0 - B0^2 Phi^2 / R0)| / Q0` over
/// `n_points` nodes, with dPhi/dz from fourth-order central differences of
/// `phi`. Nodes within two spacings of either end are skipped.
pub fn riccati_residual(problem: &RiccatiProblem, phi: impl Fn(f64) -> f64, n_points: usize) -> f64 {
    let p = problem;
    let h = p.length / n_points as f64;
    let node = |i: usize| phi(p.length * i as f64 / n_points as f64);
    (2..=n_points - 2)
        .map(|i| {
            let d = (node(i - 2) - 8.0 * node(i - 1) + 8.0 * node(i + 1) - node(i + 2)) / (12.0 * h);
            let v = node(i);
            let rhs = 2.0 * p.m_coef * v + p.c0_coef * p.c0_coef * p.q0 - p.b0_coef * p.b0_coef * v * v / p.r0;
            (p.v_coef * d - rhs).abs()
        })
        .fold(0.0, f64::max)
        / p.q0
}

/// Sup-norm relative gap between the closed form and the RK4 oracle.
pub fn oracle_gap(problem: &RiccatiProblem, n_steps: usize) -> Result<f64> {
    let profile = phi_numeric_oracle(problem, n_steps)?;
    let mut err = 0.0f64;
    let mut scale = 0.0f64;
    for (z, v) in profile {
        err = err.max((v - phi_closed_form(z, problem)?).abs());
        scale = scale.max(v.abs());
    }
    Ok(if scale > 0.0 { err / scale } else { err })
}

/// `|cars(T) - cars(0) - int (F_in - F_out) dt| / cars(0)` for a nonlinear run.
pub fn mass_balance_defect(scenario: &Scenario) -> Result<f64> {
    let h = run_simulation(scenario)?;
    let c0 = h.total_cars_series[0];
    let net = *h.net_inflow_series.last().expect("non-empty history");
    Ok((h.final_total_cars() - c0 - net).abs() / c0)
}

/// Smooth pulse `rho_0 + A sin^2(pi z / L)` used by the refinement study.
fn smooth_pulse(z: f64, params: &TrafficParams, amplitude: f64) -> f64 {
    if (0.0..=params.road_length).contains(&z) {
        params.rho_0 + amplitude * (std::f64::consts::PI * z / params.road_length).sin().powi(2)
    } else {
        params.rho_0
    }
}

/// Exact pre-shock solution of the pulse problem by tracing characteristics.
fn characteristic_solution(z: f64, t: f64, params: &TrafficParams, amplitude: f64, linear: bool) -> f64 {
    let speed = |rho: f64| {
        let r = if linear { params.rho_0 } else { rho };
        characteristic_speed(r, VslRate::UNIT, params).expect("free-flow density")
    };
    let foot = |xi: f64| xi + speed(smooth_pulse(xi, params, amplitude)) * t - z;
    // foot(xi) is increasing before characteristics cross
    let (mut lo, mut hi) = (z - 2.0 * params.u_max * t - 1.0, z + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if foot(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    smooth_pulse(0.5 * (lo + hi), params, amplitude)
}

/// L1 error of the linear or nonlinear stepper on the pulse problem at time
/// `horizon`, using `n_cells` cells and a step tied to the grid by `cfl`.
pub fn pulse_l1_error(model: Model, n_cells: usize, horizon: f64, amplitude: f64) -> Result<f64> {
    let params = TrafficParams::case_study();
    let grid = make_grid(params.road_length, n_cells)?;
    let ic: Vec<f64> = grid
        .cell_centers
        .iter()
        .map(|&z| smooth_pulse(z, &params, amplitude))
        .collect();
    let mut field = match model {
        Model::Nonlinear => DensityField::absolute(ic, 0.0),
        Model::Linear => DensityField::absolute(ic, 0.0).to_perturbation(params.rho_0),
    };
    let b = vec![1.0; grid.n_interfaces()];
    let dt_max = 0.9 * grid.dz / (2.0 * params.u_max);
    let steps = (horizon / dt_max).ceil() as usize;
    let dt = horizon / steps as f64;
    for _ in 0..steps {
        let ghosts = apply_boundary(&field, params.rho_0, &params, Outflow::ZeroGradient)?;
        field = match model {
            Model::Linear => step_linear(&field, ghosts, &b, &grid, &params, dt)?.field,
            Model::Nonlinear => step_nonlinear(&field, ghosts, &b, &grid, &params, dt)?.field,
        };
    }
    let linear = model == Model::Linear;
    Ok(field
        .absolute_values(params.rho_0)
        .iter()
        .zip(&grid.cell_centers)
        .map(|(v, &z)| (v - characteristic_solution(z, horizon, &params, amplitude, linear)).abs() * grid.dz)
        .sum())
}

/// Error ratio `e(n) / e(2n)`; close to 2 for a first-order scheme.
pub fn refinement_ratio(model: Model, n_cells: usize) -> Result<f64> {
    let coarse = pulse_l1_error(model, n_cells, 40.0, 0.01)?;
    let fine = pulse_l1_error(model, 2 * n_cells, 40.0, 0.01)?;
    Ok(coarse / fine)
}

/// Sup-norm gap at the horizon between `rho_0 + drho` (linear) and `rho`
/// (nonlinear), control off, for each perturbation scale.
pub fn linearization_gaps(base: &Scenario, scales: &[f64]) -> Result<Vec<f64>> {
    scales
        .iter()
        .map(|&eps| {
            let mut s = base.clone().scaled_perturbation(eps);
            s.control_enabled = false;
            s.output_cadence = s.params.sim_time;
            s.model = Model::Linear;
            let lin = run_simulation(&s)?;
            s.model = Model::Nonlinear;
            let non = run_simulation(&s)?;
            let rho_0 = s.params.rho_0;
            let a = lin.density_frames.last().expect("frame").absolute_values(rho_0);
            let b = non.density_frames.last().expect("frame").absolute_values(rho_0);
            Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
        })
        .collect()
}

/// The full property suite at default resolution.
pub fn run_all() -> Result<Vec<Check>> {
    let params = TrafficParams::case_study();
    let mut checks = Vec::new();
    for q0 in CASE_STUDY_Q0 {
        let p = assemble_problem(&params, q0, 1.0)?;
        let phi = |z: f64| phi_closed_form(z, &p).expect("inside domain");
        checks.push(Check::below(
            format!("riccati residual / Q0 (q0 = {q0:e})"),
            riccati_residual(&p, phi, 10_000),
            1e-8,
        ));
        checks.push(Check::below(
            format!("closed form vs RK4 oracle (q0 = {q0:e})"),
            oracle_gap(&p, 100_000)?,
            1e-8,
        ));
        checks.push(Check::below(
            format!("Phi(L) (q0 = {q0:e})"),
            phi(p.length).abs(),
            f64::MIN_POSITIVE,
        ));
    }
    for q0 in [None, Some(5e-5), Some(5e-4)] {
        let mut s = Scenario::case_study(Model::Nonlinear);
        if let Some(q) = q0 {
            s = s.with_control(q);
        }
        let name = match q0 {
            None => "mass balance, nonlinear baseline".to_string(),
            Some(q) => format!("mass balance, nonlinear q0 = {q:e}"),
        };
        checks.push(Check::below(name, mass_balance_defect(&s)?, 1e-9));
    }
    for model in [Model::Linear, Model::Nonlinear] {
        checks.push(Check::within(
            format!("L1 refinement ratio 200 -> 400, {model:?}"),
            refinement_ratio(model, 200)?,
            1.7,
            2.3,
        ));
    }
    let gaps = linearization_gaps(&Scenario::case_study(Model::Linear), &[1.0, 0.5, 0.25])?;
    for (k, w) in gaps.windows(2).enumerate() {
        checks.push(Check::within(
            format!("linearization gap ratio eps = 1/{} -> 1/{}", 1 << k, 2 << k),
            w[0] / w[1],
            3.0,
            5.0,
        ));
    }
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residual_detects_flipped_exponent() {
        let params = TrafficParams::case_study();
        let p = assemble_problem(&params, 5e-5, 1.0).unwrap();
        let good = |z: f64| phi_closed_form(z, &p).unwrap();
        assert!(riccati_residual(&p, good, 10_000) < 1e-8);
        // sign of B0 flipped inside the exponent only
        let bad = |z: f64| {
            let sq = p.q0.sqrt();
            let e = (-2.0 * p.b0_coef * sq * (z - p.length) / p.v_coef).exp();
            sq * (e - 1.0) / (p.b0_coef * (e + 1.0))
        };
        assert!(riccati_residual(&p, bad, 10_000) > 1e-2);
    }

    #[test]
    fn characteristic_solution_at_time_zero_is_initial_data() {
        let params = TrafficParams::case_study();
        for z in [0.0, 300.0, 1000.0, 1999.0] {
            let v = characteristic_solution(z, 0.0, &params, 0.01, false);
            assert!((v - smooth_pulse(z, &params, 0.01)).abs() < 1e-12);
        }
        // linear transport is a pure shift
        let c = characteristic_speed(params.rho_0, VslRate::UNIT, &params).unwrap();
        let v = characteristic_solution(1500.0, 30.0, &params, 0.01, true);
        assert!((v - smooth_pulse(1500.0 - c * 30.0, &params, 0.01)).abs() < 1e-12);
    }

    #[test]
    fn coarse_grid_refinement_is_first_order() {
        for model in [Model::Linear, Model::Nonlinear] {
            let r = refinement_ratio(model, 8).unwrap();
            assert!((1.7..=2.3).contains(&r), "{model:?}: {r}");
        }
    }

    #[test]
    fn check_formatting() {
        let c = Check::below("x", 1e-10, 1e-8);
        assert!(c.passed());
        assert!(c.to_string().starts_with("PASS"));
        let c = Check::within("y", 2.5, 1.7, 2.3);
        assert!(!c.passed());
        assert!(c.to_string().starts_with("FAIL"));
    }
}
