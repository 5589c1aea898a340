//! First-order explicit steppers for the linearised and nonlinear LWR models.
//!
//! Both steppers take the speed-limit profile `b` at cell interfaces and hold
//! it frozen over the step. Boundary data enters through [`Ghosts`], produced
//! by [`apply_boundary`].

use crate::error::{Error, Result};
use crate::fundamental::{characteristic_speed, critical_density, flux, VslRate};
use crate::params::{Grid1D, TrafficParams};

/// Densities that leave `[0, rho_max]` by more than this abort the run.
pub const BOUND_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    /// Absolute density rho [cars/m].
    Absolute,
    /// Perturbation drho = rho - rho_0 [cars/m].
    Perturbation,
}

/// Cell-averaged density or density perturbation at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub values: Vec<f64>,
    pub kind: FieldKind,
    pub time: f64,
}

impl DensityField {
    pub fn absolute(values: Vec<f64>, time: f64) -> Self {
        Self {
            values,
            kind: FieldKind::Absolute,
            time,
        }
    }

    pub fn perturbation(values: Vec<f64>, time: f64) -> Self {
        Self {
            values,
            kind: FieldKind::Perturbation,
            time,
        }
    }

    /// Absolute density values, shifting perturbations by `rho_0`.
    pub fn absolute_values(&self, rho_0: f64) -> Vec<f64> {
        match self.kind {
            FieldKind::Absolute => self.values.clone(),
            FieldKind::Perturbation => self.values.iter().map(|d| rho_0 + d).collect(),
        }
    }

    pub fn to_perturbation(&self, rho_0: f64) -> DensityField {
        match self.kind {
            FieldKind::Perturbation => self.clone(),
            FieldKind::Absolute => {
                DensityField::perturbation(self.values.iter().map(|r| r - rho_0).collect(), self.time)
            }
        }
    }

    /// Checks the physical range of every cell.
    pub fn validate(&self, params: &TrafficParams) -> Result<()> {
        let shift = match self.kind {
            FieldKind::Absolute => 0.0,
            FieldKind::Perturbation => params.rho_0,
        };
        for &v in &self.values {
            let rho = shift + v;
            if !(rho >= -BOUND_TOLERANCE && rho <= params.rho_max + BOUND_TOLERANCE) {
                return Err(Error::DensityOutOfRange {
                    value: rho,
                    rho_max: params.rho_max,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub field: DensityField,
    pub dt_used: f64,
    /// Numerical flux at each of the `n_cells + 1` interfaces [cars/s].
    pub interface_fluxes: Vec<f64>,
}

/// Advection coefficient of the linearised model, `b0 U_max (1 - 2 rho_0 / rho_max)`.
pub fn linear_wave_speed(params: &TrafficParams) -> f64 {
    params.b_0 * params.u_max * (1.0 - 2.0 * params.rho_0 / params.rho_max)
}

fn check_len(values: usize, expected: usize) -> Result<()> {
    if values == expected {
        Ok(())
    } else {
        Err(Error::GridMismatch {
            expected,
            actual: values,
        })
    }
}

fn max_wave_speed(field: &DensityField, b_profile: &[f64], params: &TrafficParams) -> Result<f64> {
    match field.kind {
        FieldKind::Perturbation => Ok(linear_wave_speed(params).abs()),
        FieldKind::Absolute => {
            let mut max = 0.0f64;
            for (i, &rho) in field.values.iter().enumerate() {
                let b = b_profile[i].max(b_profile[i + 1]);
                let c = characteristic_speed(rho.clamp(0.0, params.rho_max), VslRate::new(b)?, params)?;
                max = max.max(c.abs());
            }
            Ok(max)
        }
    }
}

/// Largest stable step, `cfl * dz / max |wave speed|`.
///
/// A field with no wave motion anywhere returns `remaining`.
pub fn cfl_max_dt(
    field: &DensityField,
    b_profile: &[f64],
    grid: &Grid1D,
    params: &TrafficParams,
    cfl_number: f64,
    remaining: f64,
) -> Result<f64> {
    if !(cfl_number > 0.0 && cfl_number <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "cfl",
            reason: format!("CFL number must lie in (0, 1], got {cfl_number}"),
        });
    }
    check_len(field.values.len(), grid.n_cells)?;
    check_len(b_profile.len(), grid.n_interfaces())?;
    let speed = max_wave_speed(field, b_profile, params)?;
    if speed == 0.0 {
        return Ok(remaining);
    }
    Ok(cfl_number * grid.dz / speed)
}

fn check_cfl(speed: f64, dt: f64, dz: f64) -> Result<()> {
    let limit = if speed > 0.0 { dz / speed } else { f64::INFINITY };
    if dt.is_nan() || dt <= 0.0 || dt > limit * (1.0 + 1e-12) {
        return Err(Error::CflViolation { dt, limit });
    }
    Ok(())
}

/// How the downstream ghost cell is filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Outflow {
    /// Copy of the last interior cell.
    #[default]
    ZeroGradient,
    /// Held at the equilibrium density rho_0.
    Equilibrium,
}

/// Ghost-cell values on either side of the road, in the field's own kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ghosts {
    pub upstream: f64,
    pub downstream: f64,
}

/// Dirichlet inflow with `upstream_value` (absolute density) and the chosen
/// outflow policy downstream.
pub fn apply_boundary(
    field: &DensityField,
    upstream_value: f64,
    params: &TrafficParams,
    outflow: Outflow,
) -> Result<Ghosts> {
    if !(0.0..=params.rho_max).contains(&upstream_value) {
        return Err(Error::DensityOutOfRange {
            value: upstream_value,
            rho_max: params.rho_max,
        });
    }
    let last = *field
        .values
        .last()
        .ok_or(Error::GridMismatch { expected: 2, actual: 0 })?;
    let shift = match field.kind {
        FieldKind::Absolute => 0.0,
        FieldKind::Perturbation => params.rho_0,
    };
    let downstream = match outflow {
        Outflow::ZeroGradient => last,
        Outflow::Equilibrium => params.rho_0 - shift,
    };
    Ok(Ghosts {
        upstream: upstream_value - shift,
        downstream,
    })
}

/// One upwind step of `d(drho)/dt = V d(drho)/dz + B0 db/dz`.
///
/// The control source uses the interface difference of `b_profile`, which
/// equals the cell average of `db/dz` for an unclamped profile.
pub fn step_linear(
    field: &DensityField,
    ghosts: Ghosts,
    b_profile: &[f64],
    grid: &Grid1D,
    params: &TrafficParams,
    dt: f64,
) -> Result<StepResult> {
    if field.kind != FieldKind::Perturbation {
        return Err(Error::InvalidParameter {
            name: "field",
            reason: "linear stepper advances a perturbation field".into(),
        });
    }
    let n = grid.n_cells;
    check_len(field.values.len(), n)?;
    check_len(b_profile.len(), n + 1)?;
    let a = linear_wave_speed(params);
    check_cfl(a.abs(), dt, grid.dz)?;
    let ratio = params.rho_0 / params.rho_max;
    let b0_coef = -params.rho_0 * params.u_max * (1.0 - ratio);

    let d = &field.values;
    let cell = |i: isize| -> f64 {
        if i < 0 {
            ghosts.upstream
        } else if i as usize >= n {
            ghosts.downstream
        } else {
            d[i as usize]
        }
    };
    // interface i sits between cells i-1 and i
    let fluxes: Vec<f64> = (0..=n as isize)
        .map(|i| if a >= 0.0 { a * cell(i - 1) } else { a * cell(i) })
        .collect();
    let values = (0..n)
        .map(|i| {
            let transport = (fluxes[i + 1] - fluxes[i]) / grid.dz;
            let source = b0_coef * (b_profile[i + 1] - b_profile[i]) / grid.dz;
            d[i] + dt * (source - transport)
        })
        .collect();
    let next = DensityField::perturbation(values, field.time + dt);
    next.validate(params).map_err(|e| Error::SolverAbort {
        time: next.time,
        reason: e.to_string(),
    })?;
    Ok(StepResult {
        field: next,
        dt_used: dt,
        interface_fluxes: fluxes,
    })
}

/// Godunov flux for the concave Greenshield flux in demand-supply form.
pub fn godunov_interface_flux(
    rho_left: f64,
    rho_right: f64,
    b_interface: VslRate,
    params: &TrafficParams,
) -> Result<f64> {
    let rho_c = critical_density(params);
    let demand = flux(rho_left.min(rho_c), b_interface, params)?;
    let supply = flux(rho_right.max(rho_c), b_interface, params)?;
    // validate the untouched arguments as well
    flux(rho_left, b_interface, params)?;
    flux(rho_right, b_interface, params)?;
    Ok(demand.min(supply))
}

/// Conservative Godunov step of `drho/dt + d(rho b U(rho))/dz = 0`.
pub fn step_nonlinear(
    field: &DensityField,
    ghosts: Ghosts,
    b_profile: &[f64],
    grid: &Grid1D,
    params: &TrafficParams,
    dt: f64,
) -> Result<StepResult> {
    if field.kind != FieldKind::Absolute {
        return Err(Error::InvalidParameter {
            name: "field",
            reason: "nonlinear stepper advances an absolute density field".into(),
        });
    }
    let n = grid.n_cells;
    check_len(field.values.len(), n)?;
    check_len(b_profile.len(), n + 1)?;

    let rho = &field.values;
    let mut speed = 0.0f64;
    let mut fluxes = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let left = if i == 0 { ghosts.upstream } else { rho[i - 1] };
        let right = if i == n { ghosts.downstream } else { rho[i] };
        let b = VslRate::new(b_profile[i])?;
        for r in [left, right] {
            speed = speed.max(characteristic_speed(r, b, params)?.abs());
        }
        fluxes.push(godunov_interface_flux(left, right, b, params)?);
    }
    check_cfl(speed, dt, grid.dz)?;

    let lambda = dt / grid.dz;
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let mut v = rho[i] - lambda * (fluxes[i + 1] - fluxes[i]);
        if v < -BOUND_TOLERANCE || v > params.rho_max + BOUND_TOLERANCE {
            return Err(Error::SolverAbort {
                time: field.time + dt,
                reason: format!("density {v} left [0, {}] in cell {i}", params.rho_max),
            });
        }
        v = v.clamp(0.0, params.rho_max);
        values.push(v);
    }
    Ok(StepResult {
        field: DensityField::absolute(values, field.time + dt),
        dt_used: dt,
        interface_fluxes: fluxes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::make_grid;

    fn setup(n: usize) -> (TrafficParams, Grid1D) {
        let p = TrafficParams::case_study();
        let g = make_grid(p.road_length, n).unwrap();
        (p, g)
    }

    #[test]
    fn cfl_examples() {
        let (p, g) = setup(400);
        let b = vec![1.0; 401];
        let empty = DensityField::absolute(vec![0.0; 400], 0.0);
        let dt = cfl_max_dt(&empty, &b, &g, &p, 0.9, 120.0).unwrap();
        assert!((dt - 0.9 * 5.0 / p.u_max).abs() < 1e-15);
        assert!((dt - 0.1409).abs() < 1e-4);

        let sonic = DensityField::absolute(vec![p.rho_max / 2.0; 400], 0.0);
        assert_eq!(cfl_max_dt(&sonic, &b, &g, &p, 0.9, 42.0).unwrap(), 42.0);

        let lin = DensityField::perturbation(vec![0.0; 400], 0.0);
        let dt = cfl_max_dt(&lin, &b, &g, &p, 0.9, 120.0).unwrap();
        assert!((dt - 0.9 * 5.0 / 11.979).abs() < 1e-4);

        assert!(cfl_max_dt(&lin, &b, &g, &p, 0.0, 1.0).is_err());
        assert!(cfl_max_dt(&lin, &b, &g, &p, 1.5, 1.0).is_err());
    }

    #[test]
    fn linear_equilibrium_is_fixed() {
        let (p, g) = setup(50);
        let mut f = DensityField::perturbation(vec![0.0; 50], 0.0);
        let b = vec![1.0; 51];
        for _ in 0..100 {
            let gh = apply_boundary(&f, p.rho_0, &p, Outflow::ZeroGradient).unwrap();
            f = step_linear(&f, gh, &b, &g, &p, 1.0).unwrap().field;
        }
        assert!(f.values.iter().all(|&v| v == 0.0));
        assert!((f.time - 100.0).abs() < 1e-12);
    }

    #[test]
    fn linear_pulse_advects_at_wave_speed() {
        let (p, g) = setup(400);
        let mut values = vec![0.0; 400];
        values[40] = 1e-3;
        let mut f = DensityField::perturbation(values, 0.0);
        let b = vec![1.0; 401];
        let dt = 0.25;
        let steps = 200;
        for _ in 0..steps {
            let gh = apply_boundary(&f, p.rho_0, &p, Outflow::ZeroGradient).unwrap();
            f = step_linear(&f, gh, &b, &g, &p, dt).unwrap().field;
        }
        let mass: f64 = f.values.iter().sum();
        let com: f64 = f.values.iter().zip(&g.cell_centers).map(|(v, z)| v * z).sum::<f64>() / mass;
        let expected = g.cell_centers[40] + linear_wave_speed(&p) * dt * steps as f64;
        assert!((com - expected).abs() < g.dz, "com {com} vs {expected}");
    }

    #[test]
    fn linear_control_source_sign() {
        let (p, g) = setup(20);
        let c = 1e-5;
        let b: Vec<f64> = g.interfaces.iter().map(|z| 1.0 + c * z).collect();
        let f = DensityField::perturbation(vec![0.0; 20], 0.0);
        let gh = apply_boundary(&f, p.rho_0, &p, Outflow::ZeroGradient).unwrap();
        let dt = 0.5;
        let next = step_linear(&f, gh, &b, &g, &p, dt).unwrap().field;
        let b0_coef = -p.rho_0 * p.u_max * (1.0 - p.rho_0 / p.rho_max);
        for v in &next.values {
            assert!((v / dt - b0_coef * c).abs() < 1e-12);
            assert!(*v < 0.0);
        }
    }

    #[test]
    fn linear_rejects_cfl_violation() {
        let (p, g) = setup(400);
        let f = DensityField::perturbation(vec![0.0; 400], 0.0);
        let gh = apply_boundary(&f, p.rho_0, &p, Outflow::ZeroGradient).unwrap();
        let dt = 1.01 * g.dz / linear_wave_speed(&p);
        assert!(matches!(
            step_linear(&f, gh, &vec![1.0; 401], &g, &p, dt),
            Err(Error::CflViolation { .. })
        ));
    }

    #[test]
    fn godunov_cases() {
        let p = TrafficParams::case_study();
        let one = VslRate::UNIT;
        for rho in [0.0, 0.02, 0.08, 0.12, 0.16] {
            let g = godunov_interface_flux(rho, rho, one, &p).unwrap();
            assert_eq!(g, flux(rho, one, &p).unwrap());
        }
        assert_eq!(godunov_interface_flux(0.0, p.rho_max, one, &p).unwrap(), 0.0);
        let b = VslRate::new(0.7).unwrap();
        let g = godunov_interface_flux(p.rho_max, 0.0, b, &p).unwrap();
        assert!((g - 0.7 * p.rho_max * p.u_max / 4.0).abs() < 1e-15);
        assert!(godunov_interface_flux(-0.1, 0.0, one, &p).is_err());
    }

    /// Exact Godunov flux by enumerating Riemann solutions of a concave flux.
    fn riemann_flux(l: f64, r: f64, b: VslRate, p: &TrafficParams) -> f64 {
        let f = |x: f64| flux(x, b, p).unwrap();
        let c = critical_density(p);
        if l <= r {
            // shock or contact: min over [l, r] for concave flux sits at an endpoint
            f(l).min(f(r))
        } else if l <= c {
            f(l)
        } else if r >= c {
            f(r)
        } else {
            f(c)
        }
    }

    #[test]
    fn godunov_matches_riemann_enumeration() {
        let p = TrafficParams::case_study();
        let samples: Vec<f64> = (0..=16).map(|k| k as f64 * p.rho_max / 16.0).collect();
        for b in [0.5, 1.0, 1.7] {
            let b = VslRate::new(b).unwrap();
            for &l in &samples {
                for &r in &samples {
                    let g = godunov_interface_flux(l, r, b, &p).unwrap();
                    assert!((g - riemann_flux(l, r, b, &p)).abs() < 1e-15, "{l} {r}");
                }
            }
        }
    }

    #[test]
    fn nonlinear_uniform_state_unchanged() {
        let (p, g) = setup(50);
        let f = DensityField::absolute(vec![0.05; 50], 0.0);
        let b = vec![1.3; 51];
        let gh = apply_boundary(&f, 0.05, &p, Outflow::ZeroGradient).unwrap();
        let next = step_nonlinear(&f, gh, &b, &g, &p, 0.5).unwrap();
        assert_eq!(next.field.values, f.values);

        let empty = DensityField::absolute(vec![0.0; 50], 0.0);
        let gh = apply_boundary(&empty, 0.0, &p, Outflow::ZeroGradient).unwrap();
        let next = step_nonlinear(&empty, gh, &b, &g, &p, 0.5).unwrap();
        assert!(next.field.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nonlinear_mass_balance_per_step() {
        let (p, g) = setup(100);
        let values: Vec<f64> = g.cell_centers.iter().map(|z| 0.05 + 0.01 * (z / 300.0).sin()).collect();
        let f = DensityField::absolute(values, 0.0);
        let b: Vec<f64> = g.interfaces.iter().map(|z| 1.0 + 1e-4 * z).collect();
        let gh = apply_boundary(&f, 0.055, &p, Outflow::ZeroGradient).unwrap();
        let dt = 0.9 * g.dz / (1.2 * p.u_max);
        let res = step_nonlinear(&f, gh, &b, &g, &p, dt).unwrap();
        let before: f64 = f.values.iter().sum::<f64>() * g.dz;
        let after: f64 = res.field.values.iter().sum::<f64>() * g.dz;
        let net = dt * (res.interface_fluxes[0] - res.interface_fluxes[100]);
        assert!(((after - before) - net).abs() < 1e-12 * before);
    }

    #[test]
    fn nonlinear_rejects_cfl_violation_and_wrong_kind() {
        let (p, g) = setup(100);
        let f = DensityField::absolute(vec![0.0; 100], 0.0);
        let gh = apply_boundary(&f, 0.0, &p, Outflow::ZeroGradient).unwrap();
        let dt = 1.1 * g.dz / p.u_max;
        assert!(matches!(
            step_nonlinear(&f, gh, &vec![1.0; 101], &g, &p, dt),
            Err(Error::CflViolation { .. })
        ));
        let lin = DensityField::perturbation(vec![0.0; 100], 0.0);
        assert!(step_nonlinear(&lin, gh, &vec![1.0; 101], &g, &p, 0.01).is_err());
        assert!(step_linear(&f, gh, &vec![1.0; 101], &g, &p, 0.01).is_err());
    }

    #[test]
    fn boundary_ghosts() {
        let p = TrafficParams::case_study();
        let f = DensityField::absolute(vec![0.04, 0.045, 0.06], 0.0);
        let gh = apply_boundary(&f, 0.052, &p, Outflow::ZeroGradient).unwrap();
        assert_eq!(gh.upstream, 0.052);
        assert_eq!(gh.downstream, 0.06);

        let uniform = DensityField::absolute(vec![0.07; 3], 0.0);
        assert_eq!(
            apply_boundary(&uniform, 0.05, &p, Outflow::ZeroGradient)
                .unwrap()
                .downstream,
            0.07
        );
        assert_eq!(
            apply_boundary(&uniform, 0.05, &p, Outflow::Equilibrium)
                .unwrap()
                .downstream,
            p.rho_0
        );

        let pert = DensityField::perturbation(vec![0.001, 0.002], 0.0);
        let gh = apply_boundary(&pert, 0.058, &p, Outflow::ZeroGradient).unwrap();
        assert!((gh.upstream - 0.008).abs() < 1e-15);
        assert_eq!(gh.downstream, 0.002);
        assert_eq!(
            apply_boundary(&pert, 0.058, &p, Outflow::Equilibrium)
                .unwrap()
                .downstream,
            0.0
        );

        assert!(apply_boundary(&f, -0.01, &p, Outflow::ZeroGradient).is_err());
        assert!(apply_boundary(&f, 0.2, &p, Outflow::ZeroGradient).is_err());
    }

    #[test]
    fn plain_lwr_equivalence_bit_for_bit() {
        // Reference Godunov update written without any VSL plumbing.
        let (p, g) = setup(200);
        let plain = |r: f64| r * (p.u_max * (1.0 - r / p.rho_max));
        let rc = p.rho_max / 2.0;
        let mut reference: Vec<f64> = g.cell_centers.iter().map(|z| 0.05 + 0.01 * (z / 250.0).cos()).collect();
        let mut f = DensityField::absolute(reference.clone(), 0.0);
        let b = vec![1.0; 201];
        let dt = 0.9 * g.dz / p.u_max;
        for _ in 0..300 {
            let ghosts = apply_boundary(&f, 0.05, &p, Outflow::ZeroGradient).unwrap();
            f = step_nonlinear(&f, ghosts, &b, &g, &p, dt).unwrap().field;

            let mut ext = vec![0.05];
            ext.extend_from_slice(&reference);
            ext.push(*reference.last().unwrap());
            let fl: Vec<f64> = ext
                .windows(2)
                .map(|w| plain(w[0].min(rc)).min(plain(w[1].max(rc))))
                .collect();
            for i in 0..200 {
                reference[i] -= dt / g.dz * (fl[i + 1] - fl[i]);
            }
        }
        assert_eq!(f.values, reference);
    }
}
