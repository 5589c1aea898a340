//! CSV and JSON artifacts.
//!
//! CSV files are wide: one row per recorded instant, first column `t_s`,
//! remaining columns keyed by position in metres. Densities are written in
//! cars/km and speeds in km/h; the file name carries the quantity and unit.
//! Floats use Rust's shortest round-trip formatting, so parsing a file back
//! recovers the in-memory values exactly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Format, RunConfig};
use crate::error::{Error, Result};
use crate::params::{mps_to_kph, per_m_to_per_km};
use crate::riccati::{assemble_problem, feedback_gain, phi_closed_form};
use crate::scenario::{RunSummary, Scenario, SimulationHistory, SweepOutcome};
use crate::svg;

pub const DENSITY_CSV: &str = "density_cars_per_km.csv";
pub const SPEED_CSV: &str = "speed_kph.csv";
pub const VSL_CSV: &str = "vsl_rate.csv";
pub const CONTROL_CSV: &str = "control_dbdz_per_m.csv";
pub const TOTAL_CARS_CSV: &str = "total_cars.csv";
pub const SUMMARY_JSON: &str = "summary.json";

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?)
}

/// Writes a wide table: header `[first, columns...]`, then `(t, row)` pairs.
pub fn write_wide_csv<'a>(
    path: &Path,
    first: &str,
    columns: &[String],
    rows: impl IntoIterator<Item = (f64, &'a [f64])>,
    scale: impl Fn(f64) -> f64,
) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec![first.to_string()];
    header.extend(columns.iter().cloned());
    w.write_record(&header)?;
    for (t, row) in rows {
        let mut rec = Vec::with_capacity(row.len() + 1);
        rec.push(fmt(t));
        rec.extend(row.iter().map(|&v| fmt(scale(v))));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a wide CSV back into `(header, rows)`.
pub fn read_wide_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// Parameters echoed into every summary, in file units.
#[derive(Debug, Clone, Serialize)]
pub struct ParameterEcho {
    pub rho_max_per_km: f64,
    pub u_max_kph: f64,
    pub rho_0_per_km: f64,
    pub b_0: f64,
    pub road_length_m: f64,
    pub sim_time_s: f64,
    pub n_cells: usize,
    pub cfl: f64,
    pub time_stepping: crate::scenario::TimeStepping,
    pub ic_amplitude_per_km: f64,
    pub bc_osc_amplitude_per_km: f64,
    pub bc_osc_period_s: f64,
    pub bc_decay_rate_per_s: f64,
    pub bc_growth_rate_per_km_per_s: f64,
    pub r0: f64,
    pub b_min: f64,
    pub b_max: f64,
    pub output_cadence_s: f64,
}

impl ParameterEcho {
    pub fn new(s: &Scenario) -> Self {
        let p = &s.params;
        Self {
            rho_max_per_km: per_m_to_per_km(p.rho_max),
            u_max_kph: mps_to_kph(p.u_max),
            rho_0_per_km: per_m_to_per_km(p.rho_0),
            b_0: p.b_0,
            road_length_m: p.road_length,
            sim_time_s: p.sim_time,
            n_cells: s.grid.n_cells,
            cfl: s.cfl,
            time_stepping: s.time_stepping,
            ic_amplitude_per_km: per_m_to_per_km(s.ic_amplitude),
            bc_osc_amplitude_per_km: per_m_to_per_km(s.bc_osc_amplitude),
            bc_osc_period_s: s.bc_osc_period,
            bc_decay_rate_per_s: s.bc_decay_rate,
            bc_growth_rate_per_km_per_s: per_m_to_per_km(s.bc_growth_rate),
            r0: s.r0,
            b_min: s.clamp.b_min,
            b_max: s.clamp.b_max,
            output_cadence_s: s.output_cadence,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    #[serde(flatten)]
    pub summary: RunSummary,
    pub parameters: ParameterEcho,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn frames<'a>(times: &[f64], rows: &'a [Vec<f64>]) -> Vec<(f64, &'a [f64])> {
    times.iter().copied().zip(rows.iter().map(Vec::as_slice)).collect()
}

fn positions(xs: &[f64]) -> Vec<String> {
    xs.iter().map(|&x| fmt(x)).collect()
}

/// Tracks created files so a failed write leaves nothing half-done behind.
struct Artifacts {
    written: Vec<PathBuf>,
}

impl Artifacts {
    fn run(dir: &Path, f: impl FnOnce(&mut Vec<PathBuf>) -> Result<()>) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut a = Artifacts { written: Vec::new() };
        match f(&mut a.written) {
            Ok(()) => Ok(std::mem::take(&mut a.written)),
            Err(e) => {
                for p in a.written.drain(..) {
                    let _ = fs::remove_file(p);
                }
                Err(e)
            }
        }
    }
}

/// Writes every artifact of one simulation into `dir`.
pub fn write_simulation(
    dir: &Path,
    scenario: &Scenario,
    history: &SimulationHistory,
    config: &RunConfig,
) -> Result<Vec<PathBuf>> {
    let grid = &scenario.grid;
    let rho_0 = scenario.params.rho_0;
    let densities: Vec<Vec<f64>> = history
        .density_frames
        .iter()
        .map(|f| f.absolute_values(rho_0))
        .collect();
    Artifacts::run(dir, |written| {
        if config.formats.contains(&Format::Csv) {
            let cells = positions(&grid.cell_centers);
            let faces = positions(&grid.interfaces);
            let mut table = |name: &str, cols: &[String], rows: &[Vec<f64>], scale: fn(f64) -> f64| {
                let path = dir.join(name);
                written.push(path.clone());
                write_wide_csv(&path, "t_s", cols, frames(&history.times, rows), scale)
            };
            table(DENSITY_CSV, &cells, &densities, per_m_to_per_km)?;
            table(SPEED_CSV, &cells, &history.speed_frames, mps_to_kph)?;
            table(VSL_CSV, &faces, &history.vsl_frames, |v| v)?;
            table(CONTROL_CSV, &faces, &history.control_frames, |v| v)?;

            let path = dir.join(TOTAL_CARS_CSV);
            written.push(path.clone());
            let mut w = writer(&path)?;
            w.write_record(["t_s", "total_cars", "net_inflow_cars"])?;
            for ((t, c), n) in history
                .times
                .iter()
                .zip(&history.total_cars_series)
                .zip(&history.net_inflow_series)
            {
                w.write_record([fmt(*t), fmt(*c), fmt(*n)])?;
            }
            w.flush()?;
        }
        if config.formats.contains(&Format::Json) {
            let path = dir.join(SUMMARY_JSON);
            written.push(path.clone());
            let report = SimulateReport {
                summary: RunSummary::new(scenario, history),
                parameters: ParameterEcho::new(scenario),
            };
            write_json(&path, &report)?;
        }
        if config.formats.contains(&Format::Svg) {
            let convert = |rows: &[Vec<f64>], f: fn(f64) -> f64| -> Vec<Vec<f64>> {
                rows.iter().map(|r| r.iter().map(|&v| f(v)).collect()).collect()
            };
            let panels = [
                (
                    "density.svg",
                    "Density [cars/km]",
                    &grid.cell_centers,
                    convert(&densities, per_m_to_per_km),
                ),
                (
                    "speed.svg",
                    "Speed [km/h]",
                    &grid.cell_centers,
                    convert(&history.speed_frames, mps_to_kph),
                ),
                (
                    "vsl.svg",
                    "VSL rate b [-]",
                    &grid.interfaces,
                    history.vsl_frames.clone(),
                ),
            ];
            for (name, title, xs, values) in panels {
                let path = dir.join(name);
                written.push(path.clone());
                fs::write(&path, svg::heatmap(title, xs, &history.times, &values))?;
            }
        }
        Ok(())
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepMemberReport {
    pub q0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<RunSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub members: Vec<SweepMemberReport>,
    pub parameters: ParameterEcho,
}

pub fn q0_label(q0: f64) -> String {
    format!("{q0:e}")
}

/// Writes per-member directories plus the combined car-count table.
pub fn write_sweep(
    dir: &Path,
    scenario: &Scenario,
    outcomes: &[SweepOutcome],
    config: &RunConfig,
) -> Result<Vec<PathBuf>> {
    let mut all = Vec::new();
    for o in outcomes {
        if let Ok(h) = &o.result {
            let member = scenario.clone().with_control(o.q0);
            let sub = dir.join(format!("q0_{}", q0_label(o.q0)));
            all.extend(write_simulation(&sub, &member, h, config)?);
        }
    }
    let ok: Vec<(f64, &SimulationHistory)> = outcomes
        .iter()
        .filter_map(|o| o.result.as_ref().ok().map(|h| (o.q0, h)))
        .collect();
    let combined = Artifacts::run(dir, |written| {
        if config.formats.contains(&Format::Csv) && !ok.is_empty() {
            let path = dir.join(TOTAL_CARS_CSV);
            written.push(path.clone());
            let cols: Vec<String> = ok.iter().map(|(q, _)| q0_label(*q)).collect();
            let times = &ok[0].1.times;
            let rows: Vec<Vec<f64>> = (0..times.len())
                .map(|k| ok.iter().map(|(_, h)| h.total_cars_series[k]).collect())
                .collect();
            write_wide_csv(
                &path,
                "t_s",
                &cols,
                times.iter().copied().zip(rows.iter().map(Vec::as_slice)),
                |v| v,
            )?;
        }
        if config.formats.contains(&Format::Json) {
            let path = dir.join(SUMMARY_JSON);
            written.push(path.clone());
            let members = outcomes
                .iter()
                .map(|o| {
                    let member = scenario.clone().with_control(o.q0);
                    match &o.result {
                        Ok(h) => SweepMemberReport {
                            q0: o.q0,
                            summary: Some(RunSummary::new(&member, h)),
                            error: None,
                        },
                        Err(e) => SweepMemberReport {
                            q0: o.q0,
                            summary: None,
                            error: Some(e.to_string()),
                        },
                    }
                })
                .collect();
            write_json(
                &path,
                &SweepReport {
                    members,
                    parameters: ParameterEcho::new(scenario),
                },
            )?;
        }
        if config.formats.contains(&Format::Svg) && !ok.is_empty() {
            let path = dir.join("total_cars.svg");
            written.push(path.clone());
            let series: Vec<svg::Series> = ok
                .iter()
                .map(|(q, h)| svg::Series {
                    label: format!("Q0 = {}", q0_label(*q)),
                    points: h
                        .times
                        .iter()
                        .copied()
                        .zip(h.total_cars_series.iter().copied())
                        .collect(),
                })
                .collect();
            fs::write(
                &path,
                svg::line_plot("Total cars on the road", "t [s]", "cars", &series),
            )?;
        }
        Ok(())
    })?;
    all.extend(combined);
    Ok(all)
}

/// Feedback profiles on the grid interfaces, one column pair per weight.
pub fn write_riccati(dir: &Path, config: &RunConfig, q0_list: &[f64]) -> Result<Vec<PathBuf>> {
    let s = &config.scenario;
    let problems = q0_list
        .iter()
        .map(|&q| assemble_problem(&s.params, q, s.r0))
        .collect::<Result<Vec<_>>>()?;
    let zs = &s.grid.interfaces;
    let mut phi_rows = Vec::with_capacity(zs.len());
    for &z in zs {
        let mut row = Vec::with_capacity(2 * problems.len());
        for p in &problems {
            row.push(phi_closed_form(z, p)?);
        }
        for p in &problems {
            row.push(feedback_gain(z, p)?);
        }
        phi_rows.push(row);
    }
    Artifacts::run(dir, |written| {
        if config.formats.contains(&Format::Csv) {
            let path = dir.join("riccati.csv");
            written.push(path.clone());
            let mut cols: Vec<String> = q0_list.iter().map(|q| format!("phi_{}", q0_label(*q))).collect();
            cols.extend(q0_list.iter().map(|q| format!("gain_{}", q0_label(*q))));
            write_wide_csv(
                &path,
                "z_m",
                &cols,
                zs.iter().copied().zip(phi_rows.iter().map(Vec::as_slice)),
                |v| v,
            )?;
        }
        if config.formats.contains(&Format::Svg) {
            let path = dir.join("phi.svg");
            written.push(path.clone());
            let series: Vec<svg::Series> = q0_list
                .iter()
                .enumerate()
                .map(|(j, q)| svg::Series {
                    label: format!("Q0 = {}", q0_label(*q)),
                    points: zs.iter().copied().zip(phi_rows.iter().map(|r| r[j])).collect(),
                })
                .collect();
            fs::write(
                &path,
                svg::line_plot("State feedback function Phi(z)", "z [m]", "Phi", &series),
            )?;
        }
        if config.formats.contains(&Format::Json) {
            let path = dir.join(SUMMARY_JSON);
            written.push(path.clone());
            write_json(&path, &problems)?;
        }
        Ok(())
    })
}
