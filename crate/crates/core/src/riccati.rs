//! Scalar LQ design for the linearised VSL plant.
//!
//! The linearised LWR model with a VSL term is a scalar hyperbolic system
//! `dx/dt = V dx/dz + M x + B0 u` with `x = drho` and `u = db/dz`. Its optimal
//! state feedback follows from the spatial Riccati equation
//!
//! ```text
//! V dPhi/dz = 2 M Phi + C0^2 Q0 - B0^2 Phi^2 / R0,    Phi(L) = 0
//! ```
//!
//! which for `M = 0`, `C0 = 1` has the closed form evaluated by
//! [`phi_closed_form`]. [`phi_numeric_oracle`] integrates the same equation
//! with RK4 and is kept only to cross-check the closed form.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{Grid1D, TrafficParams};
use crate::solver::{DensityField, FieldKind};

/// Coefficients of the scalar LQ problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiccatiProblem {
    /// Transport coefficient V [m/s]; negative for a rightward-moving wave.
    pub v_coef: f64,
    /// Reaction coefficient M [1/s].
    pub m_coef: f64,
    /// Control coefficient B0 [cars/s].
    pub b0_coef: f64,
    /// Output coefficient C0.
    pub c0_coef: f64,
    /// State weight Q0.
    pub q0: f64,
    /// Control weight R0.
    pub r0: f64,
    /// Domain length L [m].
    pub length: f64,
}

pub fn assemble_problem(params: &TrafficParams, q0: f64, r0: f64) -> Result<RiccatiProblem> {
    if !(q0.is_finite() && q0 > 0.0) {
        return Err(Error::InvalidParameter {
            name: "q0",
            reason: format!("state weight must be positive, got {q0}"),
        });
    }
    if !(r0.is_finite() && r0 > 0.0) {
        return Err(Error::InvalidParameter {
            name: "r0",
            reason: format!("control weight must be positive, got {r0}"),
        });
    }
    let ratio = params.rho_0 / params.rho_max;
    let v_coef = -params.b_0 * params.u_max * (1.0 - 2.0 * ratio);
    if v_coef >= 0.0 {
        return Err(Error::Uncontrollable { v: v_coef });
    }
    let b0_coef = -params.rho_0 * params.u_max * (1.0 - ratio);
    Ok(RiccatiProblem {
        v_coef,
        m_coef: 0.0,
        b0_coef,
        c0_coef: 1.0,
        q0,
        r0,
        length: params.road_length,
    })
}

fn check_position(z: f64, problem: &RiccatiProblem) -> Result<()> {
    if (0.0..=problem.length).contains(&z) {
        Ok(())
    } else {
        Err(Error::PositionOutOfRange {
            z,
            length: problem.length,
        })
    }
}

/// Closed-form solution of the Riccati equation with `Phi(L) = 0`.
///
/// With `beta = B0 / sqrt(R0)` and `E = exp(2 beta sqrt(Q0) (z - L) / V)`,
/// `Phi(z) = sqrt(Q0) (E - 1) / (beta (E + 1))`. `E - 1` is evaluated with
/// `expm1` so that weak weights keep full relative precision.
pub fn phi_closed_form(z: f64, problem: &RiccatiProblem) -> Result<f64> {
    check_position(z, problem)?;
    Ok(phi_unchecked(z, problem))
}

pub(crate) fn phi_unchecked(z: f64, p: &RiccatiProblem) -> f64 {
    let sq = p.q0.sqrt();
    let beta = p.b0_coef / p.r0.sqrt();
    if beta == 0.0 {
        // V dPhi/dz = Q0 integrates to a linear profile
        return p.q0 * (z - p.length) / p.v_coef + 0.0;
    }
    let em = (2.0 * beta * sq * (z - p.length) / p.v_coef).exp_m1();
    // `+ 0.0` normalises the -0.0 produced at z = L
    sq * em / (beta * (em + 2.0)) + 0.0
}

/// Fixed-step RK4 integration of the Riccati equation backward from `z = L`.
///
/// Returns `(z, Phi)` pairs on `n_steps + 1` equispaced nodes ordered from
/// `z = 0` to `z = L`.
pub fn phi_numeric_oracle(problem: &RiccatiProblem, n_steps: usize) -> Result<Vec<(f64, f64)>> {
    if n_steps < 100 {
        return Err(Error::InvalidParameter {
            name: "n_steps",
            reason: format!("oracle needs at least 100 steps, got {n_steps}"),
        });
    }
    let p = *problem;
    let rhs = |phi: f64| {
        (2.0 * p.m_coef * phi + p.c0_coef * p.c0_coef * p.q0 - p.b0_coef * p.b0_coef * phi * phi / p.r0) / p.v_coef
    };
    let h = -p.length / n_steps as f64;
    let mut out = vec![(0.0, 0.0); n_steps + 1];
    let mut phi = 0.0;
    out[n_steps] = (p.length, 0.0);
    for k in (0..n_steps).rev() {
        let k1 = rhs(phi);
        let k2 = rhs(phi + 0.5 * h * k1);
        let k3 = rhs(phi + 0.5 * h * k2);
        let k4 = rhs(phi + h * k3);
        phi += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out[k] = (p.length * k as f64 / n_steps as f64, phi);
    }
    Ok(out)
}

/// Feedback gain K0(z) = -B0 Phi(z) / R0, so that `db/dz = K0 drho`.
pub fn feedback_gain(z: f64, problem: &RiccatiProblem) -> Result<f64> {
    check_position(z, problem)?;
    Ok(gain_unchecked(z, problem))
}

fn gain_unchecked(z: f64, p: &RiccatiProblem) -> f64 {
    -p.b0_coef * phi_unchecked(z, p) / p.r0 + 0.0
}

/// K0 at every grid interface. The gains do not depend on time, so the
/// closed loop evaluates them once per run.
pub fn gain_profile(problem: &RiccatiProblem, grid: &Grid1D) -> Result<Vec<f64>> {
    check_grid(problem, grid)?;
    Ok(grid.interfaces.iter().map(|&z| gain_unchecked(z, problem)).collect())
}

fn check_grid(problem: &RiccatiProblem, grid: &Grid1D) -> Result<()> {
    let len = grid.length();
    if (len - problem.length).abs() > 1e-9 * problem.length {
        return Err(Error::InvalidParameter {
            name: "grid",
            reason: format!("grid length {len} differs from problem length {}", problem.length),
        });
    }
    Ok(())
}

/// Cell perturbation values averaged onto interfaces; one-sided at the ends.
pub fn interface_average(cells: &[f64]) -> Vec<f64> {
    let n = cells.len();
    let mut out = Vec::with_capacity(n + 1);
    out.push(cells[0]);
    out.extend(cells.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    out.push(cells[n - 1]);
    out
}

/// Optimal distributed control `u = db/dz = K0(z) drho(z)` at each interface.
pub fn control_field(delta_rho: &DensityField, problem: &RiccatiProblem, grid: &Grid1D) -> Result<Vec<f64>> {
    let gains = gain_profile(problem, grid)?;
    control_from_gains(delta_rho, &gains, grid)
}

pub fn control_from_gains(delta_rho: &DensityField, gains: &[f64], grid: &Grid1D) -> Result<Vec<f64>> {
    if delta_rho.kind != FieldKind::Perturbation {
        return Err(Error::InvalidParameter {
            name: "delta_rho",
            reason: "feedback acts on a perturbation field".into(),
        });
    }
    if delta_rho.values.len() != grid.n_cells {
        return Err(Error::GridMismatch {
            expected: grid.n_cells,
            actual: delta_rho.values.len(),
        });
    }
    if gains.len() != grid.n_interfaces() {
        return Err(Error::GridMismatch {
            expected: grid.n_interfaces(),
            actual: gains.len(),
        });
    }
    Ok(interface_average(&delta_rho.values)
        .iter()
        .zip(gains)
        .map(|(d, k)| k * d)
        .collect())
}

/// Admissible range for the speed-limit multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VslClamp {
    pub b_min: f64,
    pub b_max: f64,
}

impl Default for VslClamp {
    fn default() -> Self {
        Self { b_min: 0.1, b_max: 2.0 }
    }
}

impl VslClamp {
    pub fn validate(&self, b0: f64) -> Result<()> {
        let ok =
            self.b_min.is_finite() && self.b_max.is_finite() && self.b_min >= 0.0 && self.b_min < b0 && b0 < self.b_max;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name: "clamp",
                reason: format!(
                    "need 0 <= b_min < b0 < b_max, got [{}, {}] with b0 = {b0}",
                    self.b_min, self.b_max
                ),
            })
        }
    }
}

/// Control at one instant: the distributed input and the speed-limit profile
/// it integrates to.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlField {
    /// db/dz at each interface [1/m].
    pub dbdz: Vec<f64>,
    /// VSL rate b at each interface.
    pub b_profile: Vec<f64>,
    pub timestamp: f64,
}

impl ControlField {
    /// Control switched off: zero input, b = b0 everywhere.
    pub fn idle(b0: f64, grid: &Grid1D, timestamp: f64) -> Self {
        Self {
            dbdz: vec![0.0; grid.n_interfaces()],
            b_profile: vec![b0; grid.n_interfaces()],
            timestamp,
        }
    }
}

/// Integrates db/dz from the upstream end, `b(z) = b0 + int_0^z u dz'`
/// (trapezoidal), then clamps each entry to `[b_min, b_max]`.
pub fn integrate_vsl(u_opt: &[f64], b0: f64, grid: &Grid1D, clamp: VslClamp, timestamp: f64) -> Result<ControlField> {
    clamp.validate(b0)?;
    if u_opt.len() != grid.n_interfaces() {
        return Err(Error::GridMismatch {
            expected: grid.n_interfaces(),
            actual: u_opt.len(),
        });
    }
    let mut b_profile = Vec::with_capacity(u_opt.len());
    let mut acc = b0;
    b_profile.push(b0);
    for (w, z) in u_opt.windows(2).zip(grid.interfaces.windows(2)) {
        acc += 0.5 * (w[0] + w[1]) * (z[1] - z[0]);
        b_profile.push(acc);
    }
    for b in &mut b_profile {
        *b = b.clamp(clamp.b_min, clamp.b_max);
    }
    Ok(ControlField {
        dbdz: u_opt.to_vec(),
        b_profile,
        timestamp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::make_grid;
    use proptest::prelude::*;

    const CASE_STUDY_Q0: [f64; 4] = [1e-6, 1e-5, 5e-5, 5e-4];

    fn table_problem(q0: f64) -> RiccatiProblem {
        assemble_problem(&TrafficParams::case_study(), q0, 1.0).unwrap()
    }

    #[test]
    fn assemble_table_one() {
        let p = table_problem(5e-5);
        assert!((p.v_coef + 11.979).abs() < 1e-3);
        assert!((p.b0_coef + 1.0981).abs() < 1e-4);
        assert_eq!(p.m_coef, 0.0);
        assert_eq!(p.c0_coef, 1.0);
    }

    #[test]
    fn assemble_zero_density_and_critical() {
        // rho_0 = 0 is outside TrafficParams' domain, so build it field by field
        let mut params = TrafficParams::case_study();
        params.rho_0 = 0.0;
        let p = assemble_problem(&params, 1e-5, 1.0).unwrap();
        assert_eq!(p.b0_coef, 0.0);
        assert_eq!(p.v_coef, -params.b_0 * params.u_max);

        params.rho_0 = params.rho_max / 2.0;
        assert!(matches!(
            assemble_problem(&params, 1e-5, 1.0),
            Err(Error::Uncontrollable { .. })
        ));
        assert!(assemble_problem(&TrafficParams::case_study(), 0.0, 1.0).is_err());
        assert!(assemble_problem(&TrafficParams::case_study(), 1e-5, -1.0).is_err());
    }

    #[test]
    fn phi_boundary_and_domain() {
        for q0 in CASE_STUDY_Q0 {
            let p = table_problem(q0);
            let at_l = phi_closed_form(p.length, &p).unwrap();
            assert_eq!(at_l, 0.0);
            assert!(at_l.is_sign_positive());
            assert_eq!(feedback_gain(p.length, &p).unwrap(), 0.0);
        }
        let p = table_problem(5e-5);
        assert!(phi_closed_form(-1.0, &p).is_err());
        assert!(phi_closed_form(p.length + 1.0, &p).is_err());
        assert!(feedback_gain(-1.0, &p).is_err());
    }

    #[test]
    fn phi_vanishes_with_weight() {
        let mut p = table_problem(5e-5);
        // tanh(x) <= x bounds Phi by the uncoupled linear profile Q0 (L - z) / |V|
        let mut last = f64::INFINITY;
        for q0 in [1e-6, 1e-10, 1e-14, 1e-18] {
            p.q0 = q0;
            let phi = phi_closed_form(0.0, &p).unwrap();
            assert!(phi > 0.0 && phi <= q0 * p.length / p.v_coef.abs() * (1.0 + 1e-12));
            assert!(phi < last);
            last = phi;
        }
        p.q0 = 0.0;
        assert_eq!(phi_closed_form(0.0, &p).unwrap(), 0.0);
    }

    #[test]
    fn oracle_linear_profile_without_control_coupling() {
        let mut p = table_problem(5e-5);
        p.b0_coef = 0.0;
        let prof = phi_numeric_oracle(&p, 1000).unwrap();
        for (z, phi) in prof {
            let exact = p.q0 * (p.length - z) / p.v_coef.abs();
            assert!((phi - exact).abs() < 1e-15);
            assert!((phi_closed_form(z, &p).unwrap() - exact).abs() < 1e-15);
        }
    }

    #[test]
    fn oracle_zero_weight_is_zero() {
        let mut p = table_problem(5e-5);
        p.q0 = 0.0;
        assert!(phi_numeric_oracle(&p, 100).unwrap().iter().all(|&(_, v)| v == 0.0));
        assert!(phi_numeric_oracle(&p, 99).is_err());
    }

    #[test]
    fn oracle_matches_closed_form() {
        for q0 in CASE_STUDY_Q0 {
            let p = table_problem(q0);
            let prof = phi_numeric_oracle(&p, 100_000).unwrap();
            let scale = prof.iter().map(|&(_, v)| v.abs()).fold(0.0, f64::max);
            let err = prof
                .iter()
                .map(|&(z, v)| (v - phi_closed_form(z, &p).unwrap()).abs())
                .fold(0.0, f64::max);
            assert!(err / scale < 1e-8, "q0 = {q0}: {}", err / scale);
        }
    }

    #[test]
    fn oracle_matches_closed_form_with_general_r0() {
        let mut p = table_problem(5e-5);
        p.r0 = 3.5;
        let prof = phi_numeric_oracle(&p, 100_000).unwrap();
        let scale = prof.iter().map(|&(_, v)| v).fold(0.0, f64::max);
        for (z, v) in prof {
            assert!((v - phi_closed_form(z, &p).unwrap()).abs() / scale < 1e-8);
        }
    }

    #[test]
    fn phi_at_origin_regression() {
        // Frozen from the RK4 oracle at 1e5 steps, case-study coefficients, q0 = 5e-5.
        let p = table_problem(5e-5);
        let oracle = phi_numeric_oracle(&p, 100_000).unwrap()[0].1;
        let closed = phi_closed_form(0.0, &p).unwrap();
        assert!((closed - PHI0_Q5E5).abs() < 1e-9 * PHI0_Q5E5);
        assert!((oracle - PHI0_Q5E5).abs() < 1e-9 * PHI0_Q5E5);
        let k = feedback_gain(0.0, &p).unwrap();
        assert!((k + p.b0_coef * oracle).abs() < 1e-9 * k);
    }

    const PHI0_Q5E5: f64 = 0.005_542_950_940_357_99;

    #[test]
    fn gain_saturates_at_sqrt_q0() {
        let mut p = table_problem(5e-4);
        p.length = 1e6;
        let k = feedback_gain(0.0, &p).unwrap();
        assert!((k - p.q0.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn control_field_cases() {
        let grid = make_grid(2000.0, 8).unwrap();
        let p = table_problem(5e-5);
        let zero = DensityField::perturbation(vec![0.0; 8], 0.0);
        assert!(control_field(&zero, &p, &grid).unwrap().iter().all(|&u| u == 0.0));

        let c = 0.004;
        let uniform = DensityField::perturbation(vec![c; 8], 0.0);
        let u = control_field(&uniform, &p, &grid).unwrap();
        for (ui, z) in u.iter().zip(&grid.interfaces) {
            let k = feedback_gain(*z, &p).unwrap();
            assert!((ui - k * c).abs() <= 1e-15);
            assert!(ui * c >= 0.0);
        }

        let mut spike = vec![0.0; 8];
        spike[3] = -0.002;
        let u = control_field(&DensityField::perturbation(spike, 0.0), &p, &grid).unwrap();
        for (i, ui) in u.iter().enumerate() {
            assert_eq!(*ui != 0.0, i == 3 || i == 4, "interface {i}");
        }

        let wrong = DensityField::perturbation(vec![0.0; 7], 0.0);
        assert!(matches!(
            control_field(&wrong, &p, &grid),
            Err(Error::GridMismatch { .. })
        ));
        let absolute = DensityField::absolute(vec![0.05; 8], 0.0);
        assert!(control_field(&absolute, &p, &grid).is_err());
    }

    #[test]
    fn integrate_vsl_cases() {
        let grid = make_grid(2000.0, 10).unwrap();
        let clamp = VslClamp::default();
        let f = integrate_vsl(&[0.0; 11], 1.0, &grid, clamp, 0.0).unwrap();
        assert!(f.b_profile.iter().all(|&b| b == 1.0));

        let c = 2e-4;
        let f = integrate_vsl(
            &[c; 11],
            1.0,
            &grid,
            VslClamp {
                b_min: 0.0,
                b_max: 10.0,
            },
            0.0,
        )
        .unwrap();
        for (b, z) in f.b_profile.iter().zip(&grid.interfaces) {
            assert!((b - (1.0 + c * z)).abs() < 1e-12);
        }
        let f = integrate_vsl(&[c; 11], 1.0, &grid, clamp, 0.0).unwrap();
        assert!((f.b_profile[10] - 1.4).abs() < 1e-12);
        let f = integrate_vsl(&[1e-3; 11], 1.0, &grid, clamp, 0.0).unwrap();
        assert_eq!(f.b_profile[10], 2.0);

        assert!(integrate_vsl(&[0.0; 11], 1.0, &grid, VslClamp { b_min: 1.0, b_max: 2.0 }, 0.0).is_err());
        assert!(integrate_vsl(&[0.0; 11], 1.0, &grid, VslClamp { b_min: 0.5, b_max: 0.9 }, 0.0).is_err());
        assert!(integrate_vsl(&[0.0; 10], 1.0, &grid, clamp, 0.0).is_err());
    }

    #[test]
    fn bump_raises_limit_downstream() {
        let params = TrafficParams::case_study();
        let grid = make_grid(params.road_length, 400).unwrap();
        let p = assemble_problem(&params, 5e-5, 1.0).unwrap();
        let bump: Vec<f64> = grid
            .cell_centers
            .iter()
            .map(|z| 0.01 * (std::f64::consts::PI * z / params.road_length).sin())
            .collect();
        let u = control_field(&DensityField::perturbation(bump, 0.0), &p, &grid).unwrap();
        let f = integrate_vsl(&u, 1.0, &grid, VslClamp::default(), 0.0).unwrap();
        assert_eq!(f.b_profile[0], 1.0);
        assert!(f.b_profile.iter().cloned().fold(f64::MIN, f64::max) > 1.0);
        assert!(f.b_profile.windows(2).all(|w| w[1] >= w[0]));
    }

    proptest! {
        #[test]
        fn phi_nonnegative_and_nonincreasing(q0 in 1e-8f64..1e-2, frac in 0.0f64..1.0) {
            let p = table_problem(q0);
            let z = frac * p.length;
            let dz = 1e-3 * p.length;
            let a = phi_closed_form(z, &p).unwrap();
            let b = phi_closed_form((z + dz).min(p.length), &p).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert!(feedback_gain(z, &p).unwrap() >= 0.0);
            prop_assert!(b <= a);
        }

        #[test]
        fn phi_increasing_in_weight(qa in 1e-8f64..1e-3, factor in 1.01f64..100.0, frac in 0.0f64..0.999) {
            let pa = table_problem(qa);
            let pb = table_problem(qa * factor);
            let z = frac * pa.length;
            prop_assert!(phi_closed_form(z, &pa).unwrap() < phi_closed_form(z, &pb).unwrap());
        }

        #[test]
        fn zero_state_gives_base_profile(n in 2usize..200) {
            let grid = make_grid(2000.0, n).unwrap();
            let p = table_problem(5e-4);
            let u = control_field(&DensityField::perturbation(vec![0.0; n], 0.0), &p, &grid).unwrap();
            let f = integrate_vsl(&u, 1.0, &grid, VslClamp::default(), 0.0).unwrap();
            prop_assert!(f.b_profile.iter().all(|&b| b == 1.0));
        }
    }
}
