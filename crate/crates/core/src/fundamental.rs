//! Greenshield equilibrium relations, with and without a variable speed limit.

use crate::error::{Error, Result};
use crate::params::TrafficParams;

/// Multiplier applied to the free-flow speed by a variable speed limit.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct VslRate(f64);

impl VslRate {
    pub const UNIT: VslRate = VslRate(1.0);

    pub fn new(b: f64) -> Result<Self> {
        if b.is_finite() && b >= 0.0 {
            Ok(Self(b))
        } else {
            Err(Error::InvalidParameter {
                name: "b",
                reason: format!("VSL rate must be finite and non-negative, got {b}"),
            })
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

fn check_density(rho: f64, params: &TrafficParams) -> Result<()> {
    if (0.0..=params.rho_max).contains(&rho) {
        Ok(())
    } else {
        Err(Error::DensityOutOfRange {
            value: rho,
            rho_max: params.rho_max,
        })
    }
}

/// U(rho) = U_max (1 - rho / rho_max).
pub fn equilibrium_speed(rho: f64, params: &TrafficParams) -> Result<f64> {
    check_density(rho, params)?;
    Ok(params.u_max * (1.0 - rho / params.rho_max))
}

/// b * U(rho).
pub fn vsl_speed(rho: f64, b: VslRate, params: &TrafficParams) -> Result<f64> {
    Ok(b.0 * equilibrium_speed(rho, params)?)
}

/// Traffic flow q = rho * b * U(rho) [cars/s].
pub fn flux(rho: f64, b: VslRate, params: &TrafficParams) -> Result<f64> {
    Ok(rho * vsl_speed(rho, b, params)?)
}

/// dq/drho = b U_max (1 - 2 rho / rho_max).
pub fn characteristic_speed(rho: f64, b: VslRate, params: &TrafficParams) -> Result<f64> {
    check_density(rho, params)?;
    Ok(b.0 * params.u_max * (1.0 - 2.0 * rho / params.rho_max))
}

/// Density of maximum flow, separating free flow from congestion.
pub fn critical_density(params: &TrafficParams) -> f64 {
    params.rho_max / 2.0
}
