//! Physical parameters, unit conventions and the spatial grid.
//!
//! Everything inside the crate runs in SI units: metres, seconds, cars per
//! metre and metres per second. The helpers here convert to and from the
//! highway-engineering units (cars/km, km/h) used in configuration files and
//! emitted artifacts.

use serde::Serialize;

use crate::error::{Error, Result};

pub const METRES_PER_KM: f64 = 1000.0;
pub const KPH_PER_MPS: f64 = 3.6;

pub fn per_km_to_per_m(rho_per_km: f64) -> f64 {
    rho_per_km / METRES_PER_KM
}

pub fn per_m_to_per_km(rho_per_m: f64) -> f64 {
    rho_per_m * METRES_PER_KM
}

pub fn kph_to_mps(kph: f64) -> f64 {
    kph / KPH_PER_MPS
}

pub fn mps_to_kph(mps: f64) -> f64 {
    mps * KPH_PER_MPS
}

/// Traffic constants in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrafficParams {
    /// Jam density [cars/m].
    pub rho_max: f64,
    /// Free-flow speed limit [m/s].
    pub u_max: f64,
    /// Equilibrium density [cars/m].
    pub rho_0: f64,
    /// Base VSL rate (dimensionless).
    pub b_0: f64,
    /// Road length [m].
    pub road_length: f64,
    /// Simulated horizon [s].
    pub sim_time: f64,
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be positive and finite, got {value}"),
        })
    }
}

impl TrafficParams {
    /// Validating constructor; all arguments in SI units.
    pub fn new(rho_max: f64, u_max: f64, rho_0: f64, b_0: f64, road_length: f64, sim_time: f64) -> Result<Self> {
        positive("rho_max", rho_max)?;
        positive("u_max", u_max)?;
        positive("rho_0", rho_0)?;
        positive("b_0", b_0)?;
        positive("road_length", road_length)?;
        positive("sim_time", sim_time)?;
        if rho_0 >= rho_max / 2.0 {
            return Err(Error::CongestedEquilibrium {
                rho_0,
                critical: rho_max / 2.0,
            });
        }
        Ok(Self {
            rho_max,
            u_max,
            rho_0,
            b_0,
            road_length,
            sim_time,
        })
    }

    /// Builds parameters from cars/km, km/h, m and s.
    pub fn from_file_units(
        rho_max_per_km: f64,
        u_max_kph: f64,
        rho_0_per_km: f64,
        road_length_m: f64,
        sim_time_s: f64,
        b_0: f64,
    ) -> Result<Self> {
        positive("rho_max", rho_max_per_km)?;
        positive("u_max", u_max_kph)?;
        positive("rho_0", rho_0_per_km)?;
        if rho_0_per_km >= rho_max_per_km / 2.0 {
            return Err(Error::CongestedEquilibrium {
                rho_0: per_km_to_per_m(rho_0_per_km),
                critical: per_km_to_per_m(rho_max_per_km) / 2.0,
            });
        }
        Self::new(
            per_km_to_per_m(rho_max_per_km),
            kph_to_mps(u_max_kph),
            per_km_to_per_m(rho_0_per_km),
            b_0,
            road_length_m,
            sim_time_s,
        )
    }

    /// The case-study highway: 160 cars/km, 115 km/h, 50 cars/km, 2 km, 120 s.
    pub fn case_study() -> Self {
        Self::from_file_units(160.0, 115.0, 50.0, 2000.0, 120.0, 1.0).expect("default parameters are valid")
    }

    /// Desired number of cars on the segment, rho_0 * L.
    pub fn target_cars(&self) -> f64 {
        self.rho_0 * self.road_length
    }
}

/// Uniform finite-volume grid on `[0, road_length]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    pub n_cells: usize,
    pub dz: f64,
    pub cell_centers: Vec<f64>,
    pub interfaces: Vec<f64>,
}

impl Grid1D {
    pub fn n_interfaces(&self) -> usize {
        self.n_cells + 1
    }

    pub fn length(&self) -> f64 {
        self.interfaces[self.n_cells]
    }
}

pub fn make_grid(road_length: f64, n_cells: usize) -> Result<Grid1D> {
    positive("road_length", road_length)?;
    if n_cells < 2 {
        return Err(Error::InvalidParameter {
            name: "n_cells",
            reason: format!("need at least 2 cells, got {n_cells}"),
        });
    }
    let dz = road_length / n_cells as f64;
    let cell_centers = (0..n_cells).map(|i| (i as f64 + 0.5) * dz).collect();
    let mut interfaces: Vec<f64> = (0..=n_cells).map(|i| i as f64 * dz).collect();
    interfaces[n_cells] = road_length;
    Ok(Grid1D {
        n_cells,
        dz,
        cell_centers,
        interfaces,
    })
}
