//! Scenario files and delimited output tables.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::direct::DirectSolution;
use crate::error::{Error, Result};
use crate::ocp::{Scenario, Solution, Trajectory};
use crate::stochastic::{RatioStats, StudyResult};
use crate::windfield::WindObservation;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl Format {
    /// JSON for `.json`, TOML otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Toml,
        }
    }
}

pub fn parse_document<T: DeserializeOwned>(text: &str, format: Format) -> Result<T> {
    match format {
        Format::Toml => toml::from_str(text).map_err(|e| Error::Parse(e.to_string())),
        Format::Json => serde_json::from_str(text).map_err(|e| {
            Error::Parse(format!("line {} column {}: {e}", e.line(), e.column()))
        }),
    }
}

pub fn parse_scenario(text: &str, format: Format) -> Result<Scenario> {
    let s: Scenario = parse_document(text, format)?;
    s.validate()?;
    Ok(s)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_scenario(&text, Format::from_path(path)).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn scenario_to_string(s: &Scenario, format: Format) -> Result<String> {
    match format {
        Format::Toml => toml::to_string_pretty(s).map_err(|e| Error::Parse(e.to_string())),
        Format::Json => serde_json::to_string_pretty(s).map_err(|e| Error::Parse(e.to_string())),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::Parse(format!("{} row {}: {e}", path.display(), i + 1))))
        .collect()
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    write_rows(path, &traj.nodes)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ResidualRow {
    pub iteration: usize,
    pub residual_norm: f64,
    pub lambda_x0: f64,
    pub chi0: f64,
    pub tf: f64,
}

pub fn residual_rows(sol: &Solution) -> Vec<ResidualRow> {
    sol.residual_history
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let p = sol.param_history.get(i).copied().unwrap_or(sol.params);
            ResidualRow {
                iteration: i,
                residual_norm: *r,
                lambda_x0: p.lambda_x0,
                chi0: p.chi0,
                tf: p.tf,
            }
        })
        .collect()
}

pub fn write_residual_csv(path: &Path, sol: &Solution) -> Result<()> {
    write_rows(path, residual_rows(sol))
}

pub fn write_direct_csv(path: &Path, sol: &DirectSolution) -> Result<()> {
    write_rows(path, &sol.nodes)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PdfRow {
    pub series: &'static str,
    pub kind: &'static str,
    pub x: f64,
    pub density: f64,
}

fn pdf_rows(series: &'static str, s: &RatioStats, out: &mut Vec<PdfRow>) {
    for (i, d) in s.histogram.density.iter().enumerate() {
        let e = &s.histogram.edges;
        out.push(PdfRow {
            series,
            kind: "histogram",
            x: 0.5 * (e[i] + e[i + 1]),
            density: *d,
        });
    }
    for (x, d) in s.kde.x.iter().zip(&s.kde.density) {
        out.push(PdfRow {
            series,
            kind: "kde",
            x: *x,
            density: *d,
        });
    }
}

/// Sample table and PDF table for a Monte Carlo study.
pub fn write_study_tables(samples: &Path, pdf: &Path, r: &StudyResult) -> Result<()> {
    write_rows(samples, &r.samples)?;
    let mut rows = Vec::new();
    pdf_rows("t_rand/t_avg", &r.domain_stats, &mut rows);
    pdf_rows("t_rand/t_band", &r.band_stats, &mut rows);
    write_rows(pdf, rows)
}

pub fn read_observations(path: &Path) -> Result<Vec<WindObservation>> {
    read_rows(path)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

pub fn read_points(path: &Path) -> Result<Vec<(f64, f64)>> {
    Ok(read_rows::<Point>(path)?.into_iter().map(|p| (p.x, p.y)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
altitude_m = 10000.0
initial_mass_kg = 120000.0

[endpoints]
xf_m = 500000.0
yf_m = 0.0

[weights]
time_per_s = 1.0
mass_per_kg = -1.0
"#;

    #[test]
    fn minimal_scenario_gets_defaults() {
        let s = parse_scenario(MINIMAL, Format::Toml).unwrap();
        assert!(s.wind.is_empty() && s.hazards.is_empty());
        assert_eq!(s.bounds, crate::ocp::Bounds::default());
    }

    #[test]
    fn round_trip_both_formats() {
        let s = Scenario::nominal();
        for f in [Format::Toml, Format::Json] {
            let back = parse_scenario(&scenario_to_string(&s, f).unwrap(), f).unwrap();
            assert_eq!(back, s);
        }
    }

    #[test]
    fn parse_error_has_location() {
        let bad = MINIMAL.replace("xf_m = 500000.0", "xf_m = \"far\"");
        let e = parse_scenario(&bad, Format::Toml).unwrap_err().to_string();
        assert!(e.contains("line") && e.contains("xf_m"), "{e}");
        let e = parse_scenario("{\"altitude_m\": }", Format::Json).unwrap_err().to_string();
        assert!(e.contains("line 1"), "{e}");
    }

    #[test]
    fn unknown_field_rejected() {
        let bad = format!("{MINIMAL}\n[bounds]\nmach_top = 0.9\n");
        assert!(parse_scenario(&bad, Format::Toml).is_err());
    }

    #[test]
    fn inverted_mach_is_validation_error() {
        let bad = format!("{MINIMAL}\n[bounds]\nmach_min = 0.9\nmach_max = 0.6\n");
        let e = parse_scenario(&bad, Format::Toml).unwrap_err();
        assert!(matches!(e, Error::Validation { .. }) && e.to_string().contains("M_min < M_max"));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pts.csv");
        let pts = vec![Point { x: 1.0, y: 2.0 }, Point { x: -3.5, y: 4.25 }];
        write_rows(&p, &pts).unwrap();
        assert_eq!(read_points(&p).unwrap(), vec![(1.0, 2.0), (-3.5, 4.25)]);
    }
}
