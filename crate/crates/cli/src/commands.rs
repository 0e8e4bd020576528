use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use serde::Serialize;
use serde_json::json;

use cruise_core::direct::{self, solve_direct, DirectConfig};
use cruise_core::error::Error;
use cruise_core::hazards::cluster_ellipses;
use cruise_core::io::{
    load_scenario, read_observations, read_points, scenario_to_string, write_direct_csv, write_json,
    write_residual_csv, write_rows, write_study_tables, write_trajectory_csv, Format,
};
use cruise_core::ocp::checks::run_checks;
use cruise_core::ocp::turnpike::{decay_from, linspace, turnpike_scan};
use cruise_core::ocp::{self, Problem, Scenario, Solution, SolverConfig};
use cruise_core::performance::Performance;
use cruise_core::stochastic::{run_study, StudyConfig};
use cruise_core::windfield::{
    fit_wind_field, sample_random_field, Domain, FitOptions, PrimitiveCounts, WindObservation,
};

use crate::report::{run_dir, RunReport};

/// Input problems exit with 2, solver failures with 1.
#[derive(Debug)]
pub enum Fail {
    Input(String),
    /// Message and the run directory when a report was still written.
    Solver(String, Option<PathBuf>),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        match e {
            Error::NotConverged { .. } | Error::Infeasible(_) | Error::IntegrationAbort { .. } => {
                Fail::Solver(e.to_string(), None)
            }
            _ => Fail::Input(e.to_string()),
        }
    }
}

type Outcome = Result<PathBuf, Fail>;

#[derive(Args, Debug, Serialize)]
pub struct ScenarioArg {
    /// Scenario file (.toml or .json), or `nominal` for the built-in two-ellipse case.
    #[arg(long, short)]
    pub scenario: String,
}

impl ScenarioArg {
    fn load(&self) -> Result<(Scenario, String), Fail> {
        if self.scenario == "nominal" {
            return Ok((Scenario::nominal(), "nominal".into()));
        }
        let path = Path::new(&self.scenario);
        let s = load_scenario(path)?;
        let label = if s.name.is_empty() {
            path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
        } else {
            s.name.clone()
        };
        Ok((s, label))
    }
}

#[derive(Args, Debug, Serialize)]
pub struct ShootingArgs {
    /// Fixed RK3 steps over [0, tf].
    #[arg(long = "dt-steps", visible_alias = "steps", default_value_t = 300)]
    pub steps: usize,
    /// Scaled terminal residual tolerance.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    /// Wall-clock cap in seconds.
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// Disable hazard continuation and multi-start.
    #[arg(long)]
    pub no_fallbacks: bool,
}

impl ShootingArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            steps: self.steps,
            tol: self.tol,
            max_iter: self.max_iter,
            time_limit_s: self.time_limit,
            fallbacks: !self.no_fallbacks,
            ..SolverConfig::default()
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct SolveArgs {
    #[command(flatten)]
    pub scenario: ScenarioArg,
    #[command(flatten)]
    pub shooting: ShootingArgs,
}

fn write_scenario(dir: &Path, s: &Scenario, rep: &mut RunReport) -> Result<(), Fail> {
    std::fs::write(dir.join("scenario.toml"), scenario_to_string(s, Format::Toml)?)
        .map_err(|e| Fail::Input(e.to_string()))?;
    rep.files.push("scenario.toml".into());
    Ok(())
}

fn solution_summary(p: &Problem, sol: &Solution) -> Result<serde_json::Value, Fail> {
    let checks = match &sol.trajectory {
        Some(t) => Some(run_checks(p, t)?),
        None => None,
    };
    Ok(json!({
        "status": sol.status,
        "objective": sol.objective,
        "tf_s": sol.tf,
        "fuel_burn_kg": sol.fuel_burn_kg,
        "penalty_integral": sol.penalty_integral,
        "chi0_rad": sol.chi0,
        "lambda_x0": sol.lambda_x0,
        "lambda_y0": sol.lambda_y0,
        "residual": sol.residual,
        "residual_norm": sol.residual_norm,
        "max_abs_h_plus_ct": checks.as_ref().map(|c| c.hamiltonian_drift),
        "checks": checks,
        "diagnostics": sol.diagnostics,
        "solve_time_s": sol.wall_time_s,
    }))
}

fn finish(dir: PathBuf, rep: &mut RunReport, start: Instant, converged: bool, what: &str) -> Outcome {
    rep.wall_time_s = start.elapsed().as_secs_f64();
    rep.write(&dir)?;
    if converged {
        Ok(dir)
    } else {
        Err(Fail::Solver(format!("{what} did not converge"), Some(dir)))
    }
}

pub fn solve(root: &Path, a: &SolveArgs) -> Outcome {
    let start = Instant::now();
    let (sc, label) = a.scenario.load()?;
    let cfg = a.shooting.config();
    let sol = ocp::solve(&sc, &cfg)?;
    let dir = run_dir(root, "solve", &label)?;
    let mut rep = RunReport::new("solve", a);
    write_scenario(&dir, &sc, &mut rep)?;
    if let Some(t) = &sol.trajectory {
        write_trajectory_csv(&dir.join("trajectory.csv"), t)?;
        rep.files.push("trajectory.csv".into());
    }
    write_residual_csv(&dir.join("residuals.csv"), &sol)?;
    rep.files.push("residuals.csv".into());
    rep.summary = solution_summary(&Problem::new(&sc)?, &sol)?;
    rep.config = json!(cfg);
    rep.scenario = Some(sc);
    finish(dir, &mut rep, start, sol.converged(), "shooting solve")
}

#[derive(Args, Debug, Serialize)]
pub struct DirectArgs {
    #[command(flatten)]
    pub scenario: ScenarioArg,
    /// Control intervals.
    #[arg(long, default_value_t = 300)]
    pub nodes: usize,
    #[arg(long)]
    pub time_limit: Option<f64>,
}

impl DirectArgs {
    fn config(&self) -> DirectConfig {
        DirectConfig {
            nodes: self.nodes,
            time_limit_s: self.time_limit,
            ..DirectConfig::default()
        }
    }
}

pub fn direct(root: &Path, a: &DirectArgs) -> Outcome {
    let start = Instant::now();
    let (sc, label) = a.scenario.load()?;
    let cfg = a.config();
    let d = solve_direct(&sc, &cfg)?;
    let dir = run_dir(root, "direct", &label)?;
    let mut rep = RunReport::new("direct", a);
    write_scenario(&dir, &sc, &mut rep)?;
    write_direct_csv(&dir.join("direct.csv"), &d)?;
    rep.files.push("direct.csv".into());
    rep.summary = json!({
        "converged": d.converged,
        "objective": d.objective,
        "tf_s": d.tf,
        "fuel_burn_kg": d.fuel_burn_kg,
        "violation_history": d.violation_history,
        "inner_iterations": d.inner_iterations,
        "evaluations": d.evaluations,
        "solve_time_s": d.wall_time_s,
    });
    rep.config = json!(cfg);
    rep.scenario = Some(sc);
    finish(dir, &mut rep, start, d.converged, "direct transcription")
}

#[derive(Args, Debug, Serialize)]
pub struct CompareArgs {
    #[command(flatten)]
    pub scenario: ScenarioArg,
    #[command(flatten)]
    pub shooting: ShootingArgs,
    /// Direct-transcription control intervals.
    #[arg(long, default_value_t = 300)]
    pub nodes: usize,
}

pub fn compare(root: &Path, a: &CompareArgs) -> Outcome {
    let start = Instant::now();
    let (sc, label) = a.scenario.load()?;
    let scfg = a.shooting.config();
    let dcfg = DirectConfig {
        nodes: a.nodes,
        ..DirectConfig::default()
    };
    let sol = ocp::solve(&sc, &scfg)?;
    let d = solve_direct(&sc, &dcfg)?;
    let dir = run_dir(root, "compare", &label)?;
    let mut rep = RunReport::new("compare", a);
    write_scenario(&dir, &sc, &mut rep)?;
    write_direct_csv(&dir.join("direct.csv"), &d)?;
    rep.files.push("direct.csv".into());
    let ok = sol.converged() && d.converged;
    let cmp = if let Some(t) = &sol.trajectory {
        write_trajectory_csv(&dir.join("trajectory.csv"), t)?;
        rep.files.push("trajectory.csv".into());
        Some(direct::compare(&sol, &d)?)
    } else {
        None
    };
    if let Some(c) = &cmp {
        println!(
            "relative objective error {:.3e}, CT ratio (direct/shooting) {:.2}",
            c.relative_error, c.time_ratio
        );
    }
    rep.summary = json!({
        "comparison": cmp,
        "shooting": solution_summary(&Problem::new(&sc)?, &sol)?,
        "direct": { "converged": d.converged, "objective": d.objective, "tf_s": d.tf, "solve_time_s": d.wall_time_s },
    });
    rep.config = json!({ "shooting": scfg, "direct": dcfg });
    rep.scenario = Some(sc);
    finish(dir, &mut rep, start, ok, "comparison")
}

#[derive(Args, Debug, Serialize)]
pub struct ClusterArgs {
    /// CSV with header `x,y` in metres.
    #[arg(long)]
    pub points: PathBuf,
    /// Number of ellipses.
    #[arg(long, short)]
    pub k: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Serialize)]
struct AssignmentRow {
    x: f64,
    y: f64,
    cluster: usize,
    norm: f64,
}

pub fn cluster(root: &Path, a: &ClusterArgs) -> Outcome {
    let start = Instant::now();
    let pts = read_points(&a.points)?;
    let r = cluster_ellipses(&pts, a.k, a.seed)?;
    let label = a.points.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let dir = run_dir(root, "cluster", &label)?;
    let mut rep = RunReport::new("cluster", a);
    write_json(&dir.join("hazards.json"), &json!({ "hazards": r.hazards }))?;
    let rows = pts.iter().zip(&r.assignments).map(|(p, c)| AssignmentRow {
        x: p.0,
        y: p.1,
        cluster: *c,
        norm: r.hazards[*c].anisotropic_norm(p.0, p.1),
    });
    write_rows(&dir.join("assignments.csv"), rows)?;
    rep.files.extend(["hazards.json".into(), "assignments.csv".into()]);
    rep.summary = json!({
        "points": pts.len(),
        "hazards": r.hazards,
        "iterations": r.iterations,
        "warnings": r.warnings,
    });
    finish(dir, &mut rep, start, true, "clustering")
}

#[derive(Args, Debug, Serialize, Clone, Copy)]
pub struct CountArgs {
    #[arg(long, default_value_t = 3)]
    pub vortices: usize,
    #[arg(long, default_value_t = 1)]
    pub dipoles: usize,
    #[arg(long, default_value_t = 2)]
    pub sources: usize,
}

impl CountArgs {
    fn counts(&self) -> PrimitiveCounts {
        PrimitiveCounts::new(self.vortices, self.dipoles, self.sources)
    }
}

#[derive(Args, Debug, Serialize)]
pub struct WindFitArgs {
    /// CSV with header `x,y,wx,wy`.
    #[arg(long)]
    pub observations: PathBuf,
    #[command(flatten)]
    pub counts: CountArgs,
    #[arg(long, default_value_t = 12)]
    pub starts: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
}

pub fn wind_fit(root: &Path, a: &WindFitArgs) -> Outcome {
    let start = Instant::now();
    let obs = read_observations(&a.observations)?;
    let opts = FitOptions {
        starts: a.starts,
        seed: a.seed,
        max_iter: a.max_iter,
    };
    let fit = fit_wind_field(&obs, a.counts.counts(), &opts)?;
    let label = a.observations.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let dir = run_dir(root, "wind-fit", &label)?;
    let mut rep = RunReport::new("wind-fit", a);
    write_json(&dir.join("field.json"), &fit.field)?;
    rep.files.push("field.json".into());
    rep.summary = json!({
        "observations": obs.len(),
        "rms_residual_mps": fit.rms_residual,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "starts": fit.starts,
    });
    finish(dir, &mut rep, start, fit.converged, "wind fit")
}

#[derive(Args, Debug, Serialize)]
pub struct WindSampleArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Grid sup-norm of the rescaled field, m/s.
    #[arg(long, default_value_t = 20.0)]
    pub max_speed: f64,
    /// Side of the square domain [0, L]², m.
    #[arg(long, default_value_t = 1.0e6)]
    pub side: f64,
    #[command(flatten)]
    pub counts: CountArgs,
    /// Also tabulate the field on an n × n grid (0 = skip).
    #[arg(long, default_value_t = 0)]
    pub grid: usize,
}

pub fn wind_sample(root: &Path, a: &WindSampleArgs) -> Outcome {
    let start = Instant::now();
    let dom = Domain::square(a.side);
    let field = sample_random_field(a.seed, a.max_speed, a.counts.counts(), &dom)?;
    let dir = run_dir(root, "wind-sample", &format!("seed{}", a.seed))?;
    let mut rep = RunReport::new("wind-sample", a);
    write_json(&dir.join("field.json"), &field)?;
    rep.files.push("field.json".into());
    if a.grid >= 2 {
        let rows = dom.grid(a.grid).map(|(x, y)| {
            let (wx, wy) = field.eval(x, y);
            WindObservation { x, y, wx, wy }
        });
        write_rows(&dir.join("samples.csv"), rows)?;
        rep.files.push("samples.csv".into());
    }
    rep.summary = json!({
        "primitives": field.primitives.len(),
        "grid_sup_norm_mps": field.grid_sup_norm(&dom, cruise_core::windfield::SUP_GRID),
    });
    finish(dir, &mut rep, start, true, "wind sampling")
}

#[derive(Args, Debug, Serialize)]
pub struct TurnpikeArgs {
    /// Aircraft and Mach bounds source; defaults to the built-in nominal scenario.
    #[arg(long, short, default_value = "nominal")]
    pub scenario: String,
    /// Cruise altitudes, m.
    #[arg(long, value_delimiter = ',', default_values_t = [9000.0, 10000.0, 11000.0])]
    pub altitudes: Vec<f64>,
    #[arg(long, default_value_t = 15)]
    pub throttles: usize,
    #[arg(long, default_value_t = 10)]
    pub masses: usize,
    /// Mass range as fractions of MTOW.
    #[arg(long, default_value_t = 0.55)]
    pub mass_lo: f64,
    #[arg(long, default_value_t = 1.0)]
    pub mass_hi: f64,
    /// Speed offset for the decay check, m/s.
    #[arg(long, default_value_t = 10.0)]
    pub offset: f64,
}

#[derive(Serialize)]
struct TurnpikeRow {
    altitude_m: f64,
    throttle: f64,
    mass_kg: f64,
    roots: usize,
    v_star_mps: Option<f64>,
    lambda: Option<f64>,
    decay_up_ok: Option<bool>,
    decay_down_ok: Option<bool>,
}

pub fn turnpike(root: &Path, a: &TurnpikeArgs) -> Outcome {
    let start = Instant::now();
    let (base, _) = ScenarioArg {
        scenario: a.scenario.clone(),
    }
    .load()?;
    let mtow = base.aircraft.mtow_kg;
    let throttles = linspace(0.3, 1.0, a.throttles);
    let masses = linspace(a.mass_lo * mtow, a.mass_hi * mtow, a.masses);
    let mut rows = Vec::new();
    let mut per_alt = Vec::new();
    let mut all_ok = true;
    for &h in &a.altitudes {
        let mut sc = base.clone();
        sc.altitude_m = h;
        let scan = turnpike_scan(&sc, &throttles, &masses)?;
        let perf = Performance::new(sc.aircraft.clone(), h)?;
        let mut decay_fail = 0;
        for c in &scan.cells {
            let check = |dv: f64| {
                c.v_star.map(|vs| {
                    decay_from(&perf, c.mass_kg, c.throttle, vs, dv)
                        .map(|d| d.monotone && d.final_gap < 1e-3 * dv.abs())
                        .unwrap_or(false)
                })
            };
            let (up, down) = (check(a.offset), check(-a.offset));
            decay_fail += [up, down].iter().filter(|x| **x == Some(false)).count();
            rows.push(TurnpikeRow {
                altitude_m: h,
                throttle: c.throttle,
                mass_kg: c.mass_kg,
                roots: c.roots,
                v_star_mps: c.v_star,
                lambda: c.lambda,
                decay_up_ok: up,
                decay_down_ok: down,
            });
        }
        all_ok &= scan.all_stable() && decay_fail == 0;
        per_alt.push(json!({
            "altitude_m": h,
            "lambda_min": scan.lambda_min,
            "lambda_max": scan.lambda_max,
            "cells_without_root": scan.no_root,
            "sign_flips": scan.sign_flips,
            "decay_failures": decay_fail,
        }));
    }
    let dir = run_dir(root, "turnpike", "")?;
    let mut rep = RunReport::new("turnpike", a);
    write_rows(&dir.join("turnpike.csv"), rows)?;
    rep.files.push("turnpike.csv".into());
    rep.summary = json!({ "all_stable_and_decaying": all_ok, "altitudes": per_alt });
    rep.scenario = Some(base);
    finish(dir, &mut rep, start, true, "turnpike scan")
}

#[derive(Args, Debug, Serialize)]
pub struct McArgs {
    /// Wind index max‖W‖/v0.
    #[arg(long, default_value_t = 1.0 / 24.0)]
    pub p: f64,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0e6)]
    pub side: f64,
    #[arg(long, default_value_t = 240.0)]
    pub v0: f64,
    /// Cells per side for domain and band averages.
    #[arg(long, default_value_t = 100)]
    pub grid: usize,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    /// Fixed histogram bin count (Freedman–Diaconis when omitted).
    #[arg(long)]
    pub bins: Option<usize>,
    #[command(flatten)]
    pub counts: CountArgs,
}

pub fn mc(root: &Path, a: &McArgs) -> Outcome {
    let start = Instant::now();
    let cfg = StudyConfig {
        trials: a.trials,
        seed: a.seed,
        p: a.p,
        side_m: a.side,
        v0_mps: a.v0,
        grid: a.grid,
        steps: a.steps,
        counts: a.counts.counts(),
        bins: a.bins,
    };
    let r = run_study(&cfg)?;
    let dir = run_dir(root, "mc", &format!("p{:.4}-seed{}", a.p, a.seed))?;
    let mut rep = RunReport::new("mc", a);
    write_study_tables(&dir.join("samples.csv"), &dir.join("pdf.csv"), &r)?;
    rep.files.extend(["samples.csv".into(), "pdf.csv".into()]);
    let brief = |s: &cruise_core::stochastic::RatioStats| {
        json!({ "mean": s.mean, "std": s.std, "min": s.min, "max": s.max, "tail_mass": s.tail_mass,
                "kde_bandwidth": s.kde.bandwidth, "bins": s.histogram.density.len() })
    };
    rep.summary = json!({
        "trials_ok": r.samples.len(),
        "failures": r.failures,
        "domain_average_ratio": brief(&r.domain_stats),
        "band_average_ratio": brief(&r.band_stats),
        "control_ratio": r.control.ratio_avg,
    });
    rep.config = json!(cfg);
    finish(dir, &mut rep, start, true, "Monte Carlo study")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_classes_map_to_exit_kinds() {
        assert!(matches!(Fail::from(Error::validation("x", "y")), Fail::Input(_)));
        assert!(matches!(Fail::from(Error::Parse("p".into())), Fail::Input(_)));
        let nc = Error::NotConverged {
            iterations: 3,
            best_residual: 1.0,
        };
        assert!(matches!(Fail::from(nc), Fail::Solver(_, None)));
    }

    #[test]
    fn shooting_args_fill_config() {
        let a = ShootingArgs {
            steps: 120,
            tol: 1e-8,
            max_iter: 50,
            time_limit: Some(3.0),
            no_fallbacks: true,
        };
        let c = a.config();
        assert_eq!((c.steps, c.max_iter, c.fallbacks), (120, 50, false));
        assert_eq!(c.time_limit_s, Some(3.0));
    }
}
