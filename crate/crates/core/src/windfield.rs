//! Composite analytic wind: uniform flow plus regularized vortices, dipoles
//! and sources/sinks, with closed-form spatial Jacobians.
//!
//! The regularized source and dipole formulas carry a small divergence
//! inside their cores (it vanishes as R → 0 and decays like R²/r⁴ and
//! R²/r⁵ respectively). [`divergence_scan`] reports it honestly;
//! [`WindPrimitive::divergence_closed_form`] gives the exact value.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsq::{levenberg_marquardt, LmOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WindPrimitive {
    Uniform {
        u_mps: f64,
        v_mps: f64,
    },
    Vortex {
        gamma_m2ps: f64,
        x_m: f64,
        y_m: f64,
        radius_m: f64,
    },
    Dipole {
        mu_x_m3ps: f64,
        mu_y_m3ps: f64,
        x_m: f64,
        y_m: f64,
        radius_m: f64,
    },
    Source {
        q_m2ps: f64,
        x_m: f64,
        y_m: f64,
        radius_m: f64,
    },
}

/// Wind velocity and its Jacobian at a point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WindSample {
    pub wx: f64,
    pub wy: f64,
    pub wx_x: f64,
    pub wx_y: f64,
    pub wy_x: f64,
    pub wy_y: f64,
}

impl WindSample {
    pub fn divergence(&self) -> f64 {
        self.wx_x + self.wy_y
    }

    fn add(&mut self, o: &WindSample) {
        self.wx += o.wx;
        self.wy += o.wy;
        self.wx_x += o.wx_x;
        self.wx_y += o.wx_y;
        self.wy_x += o.wy_x;
        self.wy_y += o.wy_y;
    }

    pub fn scaled(&self, s: f64) -> WindSample {
        WindSample {
            wx: s * self.wx,
            wy: s * self.wy,
            wx_x: s * self.wx_x,
            wx_y: s * self.wx_y,
            wy_x: s * self.wy_x,
            wy_y: s * self.wy_y,
        }
    }
}

impl WindPrimitive {
    pub fn radius(&self) -> Option<f64> {
        match *self {
            WindPrimitive::Uniform { .. } => None,
            WindPrimitive::Vortex { radius_m, .. }
            | WindPrimitive::Dipole { radius_m, .. }
            | WindPrimitive::Source { radius_m, .. } => Some(radius_m),
        }
    }

    pub fn parameter_count(&self) -> usize {
        match self {
            WindPrimitive::Uniform { .. } => 2,
            WindPrimitive::Vortex { .. } | WindPrimitive::Source { .. } => 4,
            WindPrimitive::Dipole { .. } => 5,
        }
    }

    pub fn velocity(&self, x: f64, y: f64) -> (f64, f64) {
        let s = self.sample(x, y);
        (s.wx, s.wy)
    }

    pub fn sample(&self, x: f64, y: f64) -> WindSample {
        match *self {
            WindPrimitive::Uniform { u_mps, v_mps } => WindSample {
                wx: u_mps,
                wy: v_mps,
                ..Default::default()
            },
            WindPrimitive::Vortex {
                gamma_m2ps,
                x_m,
                y_m,
                radius_m,
            } => {
                let k = gamma_m2ps / (2.0 * PI);
                let (dx, dy) = (x - x_m, y - y_m);
                let s = dx * dx + dy * dy + radius_m * radius_m;
                let is = 1.0 / s;
                let is2 = is * is;
                WindSample {
                    wx: -k * dy * is,
                    wy: k * dx * is,
                    wx_x: 2.0 * k * dx * dy * is2,
                    wx_y: k * (-is + 2.0 * dy * dy * is2),
                    wy_x: k * (is - 2.0 * dx * dx * is2),
                    wy_y: -2.0 * k * dx * dy * is2,
                }
            }
            WindPrimitive::Dipole {
                mu_x_m3ps: mx,
                mu_y_m3ps: my,
                x_m,
                y_m,
                radius_m,
            } => {
                let k = 1.0 / (2.0 * PI);
                let (dx, dy) = (x - x_m, y - y_m);
                let s = dx * dx + dy * dy + radius_m * radius_m;
                let is2 = 1.0 / (s * s);
                let is3 = is2 / s;
                let nx = mx * (dx * dx - dy * dy) + 2.0 * my * dx * dy;
                let ny = my * (dy * dy - dx * dx) + 2.0 * mx * dx * dy;
                let nx_x = 2.0 * (mx * dx + my * dy);
                let nx_y = 2.0 * (my * dx - mx * dy);
                let ny_x = 2.0 * (mx * dy - my * dx);
                let ny_y = 2.0 * (my * dy + mx * dx);
                WindSample {
                    wx: k * nx * is2,
                    wy: k * ny * is2,
                    wx_x: k * (nx_x * is2 - 4.0 * dx * nx * is3),
                    wx_y: k * (nx_y * is2 - 4.0 * dy * nx * is3),
                    wy_x: k * (ny_x * is2 - 4.0 * dx * ny * is3),
                    wy_y: k * (ny_y * is2 - 4.0 * dy * ny * is3),
                }
            }
            WindPrimitive::Source {
                q_m2ps,
                x_m,
                y_m,
                radius_m,
            } => {
                let k = q_m2ps / (2.0 * PI);
                let (dx, dy) = (x - x_m, y - y_m);
                let s = dx * dx + dy * dy + radius_m * radius_m;
                let is = 1.0 / s;
                let is2 = is * is;
                WindSample {
                    wx: k * dx * is,
                    wy: k * dy * is,
                    wx_x: k * (is - 2.0 * dx * dx * is2),
                    wx_y: -2.0 * k * dx * dy * is2,
                    wy_x: -2.0 * k * dx * dy * is2,
                    wy_y: k * (is - 2.0 * dy * dy * is2),
                }
            }
        }
    }

    /// Exact divergence of the primitive as written.
    pub fn divergence_closed_form(&self, x: f64, y: f64) -> f64 {
        match *self {
            WindPrimitive::Uniform { .. } | WindPrimitive::Vortex { .. } => 0.0,
            WindPrimitive::Dipole {
                mu_x_m3ps,
                mu_y_m3ps,
                x_m,
                y_m,
                radius_m,
            } => {
                let (dx, dy) = (x - x_m, y - y_m);
                let s = dx * dx + dy * dy + radius_m * radius_m;
                let r2 = radius_m * radius_m;
                4.0 / (2.0 * PI) * (mu_x_m3ps * dx + mu_y_m3ps * dy) * r2 / (s * s * s)
            }
            WindPrimitive::Source {
                q_m2ps,
                x_m,
                y_m,
                radius_m,
            } => {
                let (dx, dy) = (x - x_m, y - y_m);
                let s = dx * dx + dy * dy + radius_m * radius_m;
                2.0 * q_m2ps / (2.0 * PI) * radius_m * radius_m / (s * s)
            }
        }
    }

    fn scale_strength(&mut self, f: f64) {
        match self {
            WindPrimitive::Uniform { u_mps, v_mps } => {
                *u_mps *= f;
                *v_mps *= f;
            }
            WindPrimitive::Vortex { gamma_m2ps, .. } => *gamma_m2ps *= f,
            WindPrimitive::Dipole {
                mu_x_m3ps,
                mu_y_m3ps,
                ..
            } => {
                *mu_x_m3ps *= f;
                *mu_y_m3ps *= f;
            }
            WindPrimitive::Source { q_m2ps, .. } => *q_m2ps *= f,
        }
    }
}

/// Primitive counts (vortices, dipoles, sources).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimitiveCounts {
    pub vortices: usize,
    pub dipoles: usize,
    pub sources: usize,
}

impl PrimitiveCounts {
    pub const fn new(vortices: usize, dipoles: usize, sources: usize) -> Self {
        Self {
            vortices,
            dipoles,
            sources,
        }
    }

    pub fn parameter_count(&self) -> usize {
        2 + 4 * self.vortices + 5 * self.dipoles + 4 * self.sources
    }
}

impl Default for PrimitiveCounts {
    fn default() -> Self {
        Self::new(3, 1, 2)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindField {
    #[serde(default)]
    pub primitives: Vec<WindPrimitive>,
}

impl WindField {
    pub fn new(primitives: Vec<WindPrimitive>) -> Self {
        Self { primitives }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn uniform(u: f64, v: f64) -> Self {
        Self::new(vec![WindPrimitive::Uniform { u_mps: u, v_mps: v }])
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.primitives.iter().enumerate() {
            if let Some(r) = p.radius() {
                if !(r > 0.0) || !r.is_finite() {
                    return Err(Error::validation(
                        format!("wind.primitives[{i}].radius_m"),
                        "regularization radius must be > 0",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn counts(&self) -> PrimitiveCounts {
        let mut c = PrimitiveCounts::new(0, 0, 0);
        for p in &self.primitives {
            match p {
                WindPrimitive::Vortex { .. } => c.vortices += 1,
                WindPrimitive::Dipole { .. } => c.dipoles += 1,
                WindPrimitive::Source { .. } => c.sources += 1,
                WindPrimitive::Uniform { .. } => {}
            }
        }
        c
    }

    pub fn parameter_count(&self) -> usize {
        self.counts().parameter_count()
    }

    pub fn eval(&self, x: f64, y: f64) -> (f64, f64) {
        let mut w = (0.0, 0.0);
        for p in &self.primitives {
            let (a, b) = p.velocity(x, y);
            w.0 += a;
            w.1 += b;
        }
        w
    }

    pub fn sample(&self, x: f64, y: f64) -> WindSample {
        let mut s = WindSample::default();
        for p in &self.primitives {
            s.add(&p.sample(x, y));
        }
        s
    }

    /// Jacobian as (∂Wx/∂x, ∂Wx/∂y, ∂Wy/∂x, ∂Wy/∂y).
    pub fn jacobian(&self, x: f64, y: f64) -> [f64; 4] {
        let s = self.sample(x, y);
        [s.wx_x, s.wx_y, s.wy_x, s.wy_y]
    }

    pub fn concat(&self, other: &WindField) -> WindField {
        let mut p = self.primitives.clone();
        p.extend_from_slice(&other.primitives);
        WindField::new(p)
    }

    pub fn scaled(&self, f: f64) -> WindField {
        let mut out = self.clone();
        for p in &mut out.primitives {
            p.scale_strength(f);
        }
        out
    }

    /// Maximum wind speed over a grid_n × grid_n node grid.
    pub fn grid_sup_norm(&self, domain: &Domain, grid_n: usize) -> f64 {
        domain
            .grid(grid_n)
            .map(|(x, y)| {
                let (u, v) = self.eval(x, y);
                u.hypot(v)
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Domain {
    pub fn square(side: f64) -> Self {
        Self {
            x_min: 0.0,
            x_max: side,
            y_min: 0.0,
            y_max: side,
        }
    }

    pub fn is_empty(&self) -> bool {
        !(self.x_max > self.x_min && self.y_max > self.y_min)
    }

    pub fn side(&self) -> f64 {
        (self.x_max - self.x_min).max(self.y_max - self.y_min)
    }

    pub fn diagonal(&self) -> f64 {
        (self.x_max - self.x_min).hypot(self.y_max - self.y_min)
    }

    /// Node grid including the boundary, row-major in y.
    pub fn grid(&self, n: usize) -> impl Iterator<Item = (f64, f64)> + '_ {
        let n = n.max(2);
        let dx = (self.x_max - self.x_min) / (n - 1) as f64;
        let dy = (self.y_max - self.y_min) / (n - 1) as f64;
        (0..n * n).map(move |k| {
            let (i, j) = (k % n, k / n);
            (self.x_min + i as f64 * dx, self.y_min + j as f64 * dy)
        })
    }
}

/// Maximum |∇·W| from the analytic Jacobian over a grid.
pub fn divergence_scan(field: &WindField, domain: &Domain, grid_n: usize) -> Result<f64> {
    if domain.is_empty() {
        return Err(Error::Domain("empty domain".into()));
    }
    if grid_n < 2 {
        return Err(Error::Domain(format!("grid_n must be >= 2, got {grid_n}")));
    }
    Ok(domain
        .grid(grid_n)
        .map(|(x, y)| field.sample(x, y).divergence().abs())
        .fold(0.0, f64::max))
}

pub const SUP_GRID: usize = 200;

/// Seeded random composite field rescaled so its grid sup-norm is `max_speed`.
pub fn sample_random_field(
    seed: u64,
    max_speed: f64,
    counts: PrimitiveCounts,
    domain: &Domain,
) -> Result<WindField> {
    if !(max_speed > 0.0) {
        return Err(Error::Domain(format!("max_speed must be > 0, got {max_speed}")));
    }
    if domain.is_empty() {
        return Err(Error::Domain("empty domain".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = domain.side();
    let (wx, wy) = (domain.x_max - domain.x_min, domain.y_max - domain.y_min);
    let center = |rng: &mut ChaCha8Rng| {
        (
            rng.gen_range(domain.x_min - 0.1 * wx..domain.x_max + 0.1 * wx),
            rng.gen_range(domain.y_min - 0.1 * wy..domain.y_max + 0.1 * wy),
        )
    };
    let mut prims = vec![WindPrimitive::Uniform {
        u_mps: rng.gen_range(-1.0..1.0),
        v_mps: rng.gen_range(-1.0..1.0),
    }];
    // Strengths give peak primitive speeds in [-1, 1] before rescaling.
    for _ in 0..counts.vortices {
        let (x, y) = center(&mut rng);
        let r = rng.gen_range(0.05..0.20) * side;
        let u: f64 = rng.gen_range(-1.0..1.0);
        prims.push(WindPrimitive::Vortex {
            gamma_m2ps: u * 4.0 * PI * r,
            x_m: x,
            y_m: y,
            radius_m: r,
        });
    }
    for _ in 0..counts.dipoles {
        let (x, y) = center(&mut rng);
        let r = rng.gen_range(0.05..0.20) * side;
        let u: f64 = rng.gen_range(-1.0..1.0);
        let th: f64 = rng.gen_range(0.0..2.0 * PI);
        let mag = u * 8.0 * PI * r * r;
        prims.push(WindPrimitive::Dipole {
            mu_x_m3ps: mag * th.cos(),
            mu_y_m3ps: mag * th.sin(),
            x_m: x,
            y_m: y,
            radius_m: r,
        });
    }
    for _ in 0..counts.sources {
        let (x, y) = center(&mut rng);
        let r = rng.gen_range(0.05..0.20) * side;
        let u: f64 = rng.gen_range(-1.0..1.0);
        prims.push(WindPrimitive::Source {
            q_m2ps: u * 4.0 * PI * r,
            x_m: x,
            y_m: y,
            radius_m: r,
        });
    }
    let field = WindField::new(prims);
    let sup = field.grid_sup_norm(domain, SUP_GRID);
    if !(sup > 0.0) {
        return Err(Error::Domain("sampled field vanishes on the grid".into()));
    }
    Ok(field.scaled(max_speed / sup))
}

/// One gridded wind observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindObservation {
    pub x: f64,
    pub y: f64,
    pub wx: f64,
    pub wy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub field: WindField,
    pub rms_residual: f64,
    pub converged: bool,
    pub iterations: usize,
    pub starts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub starts: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            starts: 12,
            seed: 1,
            max_iter: 200,
        }
    }
}

// Parameter vector: U, V, then per primitive (strength(s), x, y, ln R).
fn pack(field: &WindField) -> Vec<f64> {
    let mut p = vec![0.0, 0.0];
    for prim in &field.primitives {
        if let WindPrimitive::Uniform { u_mps, v_mps } = *prim {
            p[0] += u_mps;
            p[1] += v_mps;
        }
    }
    for prim in &field.primitives {
        if let WindPrimitive::Vortex { gamma_m2ps, x_m, y_m, radius_m } = *prim {
            p.extend([gamma_m2ps, x_m, y_m, radius_m.ln()]);
        }
    }
    for prim in &field.primitives {
        if let WindPrimitive::Dipole { mu_x_m3ps, mu_y_m3ps, x_m, y_m, radius_m } = *prim {
            p.extend([mu_x_m3ps, mu_y_m3ps, x_m, y_m, radius_m.ln()]);
        }
    }
    for prim in &field.primitives {
        if let WindPrimitive::Source { q_m2ps, x_m, y_m, radius_m } = *prim {
            p.extend([q_m2ps, x_m, y_m, radius_m.ln()]);
        }
    }
    p
}

fn unpack(p: &[f64], counts: PrimitiveCounts) -> WindField {
    let mut prims = vec![WindPrimitive::Uniform {
        u_mps: p[0],
        v_mps: p[1],
    }];
    let mut k = 2;
    for _ in 0..counts.vortices {
        prims.push(WindPrimitive::Vortex {
            gamma_m2ps: p[k],
            x_m: p[k + 1],
            y_m: p[k + 2],
            radius_m: p[k + 3].exp(),
        });
        k += 4;
    }
    for _ in 0..counts.dipoles {
        prims.push(WindPrimitive::Dipole {
            mu_x_m3ps: p[k],
            mu_y_m3ps: p[k + 1],
            x_m: p[k + 2],
            y_m: p[k + 3],
            radius_m: p[k + 4].exp(),
        });
        k += 5;
    }
    for _ in 0..counts.sources {
        prims.push(WindPrimitive::Source {
            q_m2ps: p[k],
            x_m: p[k + 1],
            y_m: p[k + 2],
            radius_m: p[k + 3].exp(),
        });
        k += 4;
    }
    WindField::new(prims)
}

fn residuals(field: &WindField, samples: &[WindObservation]) -> Vec<f64> {
    let mut r = Vec::with_capacity(2 * samples.len());
    for s in samples {
        let (u, v) = field.eval(s.x, s.y);
        r.push(u - s.wx);
        r.push(v - s.wy);
    }
    r
}

fn rms(r: &[f64]) -> f64 {
    if r.is_empty() {
        return 0.0;
    }
    (r.iter().map(|x| x * x).sum::<f64>() / (r.len() / 2).max(1) as f64).sqrt()
}

/// Per-parameter scales so the least-squares step is well balanced.
fn param_scale(counts: PrimitiveCounts, speed: f64, side: f64) -> Vec<f64> {
    let mut s = vec![speed, speed];
    for _ in 0..counts.vortices {
        s.extend([speed * side, side, side, 1.0]);
    }
    for _ in 0..counts.dipoles {
        s.extend([speed * side * side, speed * side * side, side, side, 1.0]);
    }
    for _ in 0..counts.sources {
        s.extend([speed * side, side, side, 1.0]);
    }
    s
}

fn lm_fit(
    p0: Vec<f64>,
    counts: PrimitiveCounts,
    samples: &[WindObservation],
    scale: Vec<f64>,
    max_iter: usize,
    tol: f64,
) -> (Vec<f64>, f64, bool, usize) {
    let opts = LmOptions {
        max_iter,
        tol,
        scale: Some(scale),
        ..LmOptions::default()
    };
    let rep = levenberg_marquardt(|p| residuals(&unpack(p, counts), samples), p0, &opts);
    let r = residuals(&unpack(&rep.x, counts), samples);
    (rep.x, rms(&r), rep.converged, rep.iterations)
}

/// Least-squares calibration of a composite field to observations.
///
/// Multi-start: primitive centers are seeded on a coarse grid over the
/// sample bounding box, radii at 10% of its side; strengths start at zero.
pub fn fit_wind_field(
    samples: &[WindObservation],
    counts: PrimitiveCounts,
    opts: &FitOptions,
) -> Result<FitResult> {
    let np = counts.parameter_count();
    if samples.len() < np {
        return Err(Error::Domain(format!(
            "need at least {np} samples for {np} parameters, got {}",
            samples.len()
        )));
    }
    let (mut xl, mut xh, mut yl, mut yh) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    let mut speed: f64 = 0.0;
    for s in samples {
        xl = xl.min(s.x);
        xh = xh.max(s.x);
        yl = yl.min(s.y);
        yh = yh.max(s.y);
        speed = speed.max(s.wx.hypot(s.wy));
    }
    let side = (xh - xl).max(yh - yl).max(1.0);
    let speed = speed.max(1e-6);
    let tol = 1e-10 * speed * (samples.len() as f64).sqrt();
    let scale = param_scale(counts, speed, side);
    let nprim = counts.vortices + counts.dipoles + counts.sources;
    let starts = if nprim == 0 { 1 } else { opts.starts.max(1) };

    let grid: Vec<(f64, f64)> = (0..4)
        .flat_map(|j| (0..4).map(move |i| (i, j)))
        .map(|(i, j)| {
            (
                xl + (i as f64 + 0.5) / 4.0 * (xh - xl),
                yl + (j as f64 + 0.5) / 4.0 * (yh - yl),
            )
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let inits: Vec<Vec<f64>> = (0..starts)
        .map(|_| {
            let mut p = vec![0.0, 0.0];
            let ln_r = (0.1 * side).ln();
            let mut push = |n: usize, strengths: usize, p: &mut Vec<f64>| {
                for _ in 0..n {
                    let (cx, cy) = grid[rng.gen_range(0..grid.len())];
                    p.extend(std::iter::repeat(0.0).take(strengths));
                    p.extend([cx, cy, ln_r]);
                }
            };
            push(counts.vortices, 1, &mut p);
            push(counts.dipoles, 2, &mut p);
            push(counts.sources, 1, &mut p);
            p
        })
        .collect();

    let runs: Vec<_> = inits
        .into_par_iter()
        .map(|p0| lm_fit(p0, counts, samples, scale.clone(), opts.max_iter, tol))
        .collect();
    let (best, rms_residual, converged, iterations) = runs
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one start");
    if !converged {
        log::warn!("wind fit hit the iteration cap; returning best-so-far (rms {rms_residual:.3e})");
    }
    Ok(FitResult {
        field: unpack(&best, counts),
        rms_residual,
        converged,
        iterations,
        starts,
    })
}

/// Refine a fit from a given initial field (no multi-start).
pub fn fit_from(
    samples: &[WindObservation],
    initial: &WindField,
    max_iter: usize,
) -> Result<FitResult> {
    let counts = initial.counts();
    if samples.len() < counts.parameter_count() {
        return Err(Error::Domain("fewer samples than parameters".into()));
    }
    let speed = samples
        .iter()
        .map(|s| s.wx.hypot(s.wy))
        .fold(1e-6, f64::max);
    let side = samples
        .iter()
        .map(|s| s.x.abs().max(s.y.abs()))
        .fold(1.0, f64::max);
    let tol = 1e-10 * speed * (samples.len() as f64).sqrt();
    let (p, rms_residual, converged, iterations) = lm_fit(
        pack(initial),
        counts,
        samples,
        param_scale(counts, speed, side),
        max_iter,
        tol,
    );
    Ok(FitResult {
        field: unpack(&p, counts),
        rms_residual,
        converged,
        iterations,
        starts: 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn mixed() -> WindField {
        WindField::new(vec![
            WindPrimitive::Uniform {
                u_mps: 3.0,
                v_mps: -2.0,
            },
            WindPrimitive::Vortex {
                gamma_m2ps: 4.0e7,
                x_m: 2.0e5,
                y_m: 3.0e5,
                radius_m: 1.0e5,
            },
            WindPrimitive::Dipole {
                mu_x_m3ps: 3.0e12,
                mu_y_m3ps: -1.0e12,
                x_m: 6.0e5,
                y_m: 4.0e5,
                radius_m: 1.5e5,
            },
            WindPrimitive::Source {
                q_m2ps: -2.5e7,
                x_m: 5.0e5,
                y_m: 8.0e5,
                radius_m: 8.0e4,
            },
        ])
    }

    #[test]
    fn uniform_is_constant() {
        let f = WindField::uniform(10.0, -5.0);
        for (x, y) in [(0.0, 0.0), (1e6, -3e5), (-7.0, 12.0)] {
            assert_eq!(f.eval(x, y), (10.0, -5.0));
            assert_eq!(f.jacobian(x, y), [0.0; 4]);
        }
    }

    #[test]
    fn vortex_vanishes_at_center() {
        let v = WindPrimitive::Vortex {
            gamma_m2ps: 1e7,
            x_m: 3.0,
            y_m: 4.0,
            radius_m: 10.0,
        };
        assert_eq!(v.velocity(3.0, 4.0), (0.0, 0.0));
    }

    #[test]
    fn source_points_outward() {
        let s = WindPrimitive::Source {
            q_m2ps: 5e6,
            x_m: 1e5,
            y_m: -2e5,
            radius_m: 3e4,
        };
        for k in 0..16 {
            let th = k as f64 * PI / 8.0;
            let (dx, dy) = (5e4 * th.cos(), 5e4 * th.sin());
            let (u, v) = s.velocity(1e5 + dx, -2e5 + dy);
            assert!(u * dx + v * dy > 0.0);
            assert!((u * dy - v * dx).abs() < 1e-12 * (u.hypot(v)) * 5e4);
        }
    }

    #[test]
    fn parameter_count_formula() {
        let f = mixed();
        assert_eq!(f.parameter_count(), 2 + 4 + 5 + 4);
        assert_eq!(PrimitiveCounts::new(3, 1, 2).parameter_count(), 2 + 12 + 5 + 8);
        let n: usize = f.primitives.iter().map(|p| p.parameter_count()).sum();
        assert_eq!(n, f.parameter_count());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let f = mixed();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let (x, y) = (rng.gen_range(-2e5..1.2e6), rng.gen_range(-2e5..1.2e6));
            let j = f.jacobian(x, y);
            let h = 1.0;
            let (ap, am) = (f.eval(x + h, y), f.eval(x - h, y));
            let (bp, bm) = (f.eval(x, y + h), f.eval(x, y - h));
            let fd = [
                (ap.0 - am.0) / (2.0 * h),
                (bp.0 - bm.0) / (2.0 * h),
                (ap.1 - am.1) / (2.0 * h),
                (bp.1 - bm.1) / (2.0 * h),
            ];
            let scale = j.iter().map(|v| v.abs()).fold(0.0, f64::max);
            for k in 0..4 {
                assert!((j[k] - fd[k]).abs() <= 1e-6 * scale, "k={k} {j:?} {fd:?}");
            }
        }
    }

    #[test]
    fn vortex_and_uniform_divergence_free() {
        let f = WindField::new(vec![mixed().primitives[0], mixed().primitives[1]]);
        let d = Domain::square(1.0e6);
        assert!(divergence_scan(&f, &d, 50).unwrap() < 1e-20);
        assert_eq!(divergence_scan(&WindField::zero(), &d, 10).unwrap(), 0.0);
    }

    #[test]
    fn source_and_dipole_divergence_closed_form() {
        let f = mixed();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let (x, y) = (rng.gen_range(-2e5..1.2e6), rng.gen_range(-2e5..1.2e6));
            for p in &f.primitives {
                let s = p.sample(x, y);
                let scale = s.wx_x.abs() + s.wy_y.abs() + 1e-30;
                assert!((s.divergence() - p.divergence_closed_form(x, y)).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn divergence_scan_rejects_bad_input() {
        let f = mixed();
        assert!(divergence_scan(&f, &Domain::square(0.0), 10).is_err());
        assert!(divergence_scan(&f, &Domain::square(1.0), 1).is_err());
    }

    #[test]
    fn vortex_profile_peaks_near_core_and_decays() {
        let r0 = 1.0e5;
        let v = WindPrimitive::Vortex {
            gamma_m2ps: 1e7,
            x_m: 0.0,
            y_m: 0.0,
            radius_m: r0,
        };
        let speed = |r: f64| {
            let (u, w) = v.velocity(r, 0.0);
            u.hypot(w)
        };
        let peak = (1..400)
            .map(|i| i as f64 * r0 / 100.0)
            .max_by(|a, b| speed(*a).total_cmp(&speed(*b)))
            .unwrap();
        assert!((peak - r0).abs() <= 0.01 * r0);
        let mut prev = speed(r0);
        for i in 1..100 {
            let r = r0 * (1.0 + 0.2 * i as f64);
            let s = speed(r);
            assert!(s < prev);
            prev = s;
        }
        let far = 1.0e8;
        assert!((speed(far) * far - 1e7 / (2.0 * PI)).abs() < 1e-4 * 1e7 / (2.0 * PI));
    }

    #[test]
    fn random_field_is_deterministic_and_rescaled() {
        let d = Domain::square(1.0e6);
        let a = sample_random_field(42, 20.0, PrimitiveCounts::default(), &d).unwrap();
        let b = sample_random_field(42, 20.0, PrimitiveCounts::default(), &d).unwrap();
        assert_eq!(a, b);
        let sup = a.grid_sup_norm(&d, SUP_GRID);
        assert!((sup / 20.0 - 1.0).abs() <= 0.01);
        let u = sample_random_field(5, 7.0, PrimitiveCounts::new(0, 0, 0), &d).unwrap();
        assert_eq!(u.primitives.len(), 1);
        let (x, y) = u.eval(123.0, 456.0);
        assert!((x.hypot(y) - 7.0).abs() < 1e-12);
        assert!(sample_random_field(1, 0.0, PrimitiveCounts::default(), &d).is_err());
    }

    fn grid_samples(f: &WindField, n: usize, side: f64) -> Vec<WindObservation> {
        Domain::square(side)
            .grid(n)
            .map(|(x, y)| {
                let (wx, wy) = f.eval(x, y);
                WindObservation { x, y, wx, wy }
            })
            .collect()
    }

    #[test]
    fn fit_recovers_uniform_exactly() {
        let truth = WindField::uniform(10.0, -5.0);
        let s = grid_samples(&truth, 5, 1e6);
        let fit = fit_wind_field(&s, PrimitiveCounts::new(0, 0, 0), &FitOptions::default()).unwrap();
        assert!(fit.rms_residual < 1e-9);
        let (u, v) = fit.field.eval(0.0, 0.0);
        assert!((u - 10.0).abs() < 1e-9 && (v + 5.0).abs() < 1e-9);
    }

    #[test]
    fn fit_at_truth_is_fixed_point() {
        let truth = mixed();
        let s = grid_samples(&truth, 12, 1e6);
        let fit = fit_from(&s, &truth, 20).unwrap();
        assert!(fit.rms_residual < 1e-9, "{}", fit.rms_residual);
    }

    #[test]
    fn fit_rejects_too_few_samples() {
        let s = grid_samples(&WindField::uniform(1.0, 1.0), 2, 1.0);
        assert!(fit_wind_field(&s, PrimitiveCounts::new(1, 0, 0), &FitOptions::default()).is_err());
    }

    proptest! {
        #[test]
        fn linearity_of_superposition(
            x in -1e6..2e6f64, y in -1e6..2e6f64, split in 0usize..4,
        ) {
            let f = mixed();
            let (a, b) = f.primitives.split_at(split);
            let (fa, fb) = (WindField::new(a.to_vec()), WindField::new(b.to_vec()));
            let whole = f.eval(x, y);
            let parts = (fa.eval(x, y).0 + fb.eval(x, y).0, fa.eval(x, y).1 + fb.eval(x, y).1);
            prop_assert!((whole.0 - parts.0).abs() <= 1e-12 * (1.0 + whole.0.abs()));
            prop_assert!((whole.1 - parts.1).abs() <= 1e-12 * (1.0 + whole.1.abs()));
            let c = fa.concat(&fb).eval(x, y);
            prop_assert_eq!(c, whole);
        }

        #[test]
        fn vortex_trace_vanishes(g in -1e8..1e8f64, r in 1e3..1e6f64, x in -1e6..1e6f64, y in -1e6..1e6f64) {
            let v = WindPrimitive::Vortex { gamma_m2ps: g, x_m: 0.0, y_m: 0.0, radius_m: r };
            let s = v.sample(x, y);
            prop_assert!(s.divergence().abs() <= 1e-12 * (s.wx_x.abs() + s.wx_y.abs() + 1e-300));
        }
    }
}
