//! Elliptical flight-sensitive areas: anisotropic norm, penalty field with
//! gradient, and k-means clustering of scattered points into ellipses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regularization of the soft penalty denominator.
pub const SOFT_EPS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PenaltyMode {
    /// c_s / (ε + ‖X − X_c‖_A)
    #[default]
    Soft,
    /// c_s · exp(k(1 − ‖X − X_c‖_A) + d) with k = c − d.
    Hard { c: f64, d: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipseHazard {
    pub center_x_m: f64,
    pub center_y_m: f64,
    pub semi_axis_a_m: f64,
    pub semi_axis_b_m: f64,
    pub orientation_rad: f64,
    #[serde(default = "one")]
    pub weight: f64,
    #[serde(default)]
    pub mode: PenaltyMode,
}

fn one() -> f64 {
    1.0
}

/// Penalty value and gradient.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PenaltySample {
    pub g: f64,
    pub gx: f64,
    pub gy: f64,
}

impl EllipseHazard {
    pub fn soft(cx: f64, cy: f64, a: f64, b: f64, alpha: f64, weight: f64) -> Self {
        Self {
            center_x_m: cx,
            center_y_m: cy,
            semi_axis_a_m: a,
            semi_axis_b_m: b,
            orientation_rad: alpha,
            weight,
            mode: PenaltyMode::Soft,
        }
    }

    pub fn validate(&self, idx: usize) -> Result<()> {
        let f = |name: &str| format!("hazards[{idx}].{name}");
        if !(self.semi_axis_a_m > 0.0) {
            return Err(Error::validation(f("semi_axis_a_m"), "must be > 0"));
        }
        if !(self.semi_axis_b_m > 0.0) {
            return Err(Error::validation(f("semi_axis_b_m"), "must be > 0"));
        }
        if !(self.weight >= 0.0) {
            return Err(Error::validation(f("weight"), "must be >= 0"));
        }
        let finite = [self.center_x_m, self.center_y_m, self.orientation_rad]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::validation(f("center"), "must be finite"));
        }
        if let PenaltyMode::Hard { c, d } = self.mode {
            if !(c.is_finite() && d.is_finite()) {
                return Err(Error::validation(f("mode"), "c and d must be finite"));
            }
        }
        Ok(())
    }

    /// Metric matrix A = R diag(1/a², 1/b²) Rᵀ as (A11, A12, A22).
    pub fn metric(&self) -> (f64, f64, f64) {
        let (s, c) = self.orientation_rad.sin_cos();
        let (ia, ib) = (
            1.0 / (self.semi_axis_a_m * self.semi_axis_a_m),
            1.0 / (self.semi_axis_b_m * self.semi_axis_b_m),
        );
        (c * c * ia + s * s * ib, c * s * (ia - ib), s * s * ia + c * c * ib)
    }

    /// ‖X − X_c‖_A and A(X − X_c).
    fn norm_and_ad(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let (dx, dy) = (x - self.center_x_m, y - self.center_y_m);
        let (s, c) = self.orientation_rad.sin_cos();
        let u = (c * dx + s * dy) / (self.semi_axis_a_m * self.semi_axis_a_m);
        let w = (-s * dx + c * dy) / (self.semi_axis_b_m * self.semi_axis_b_m);
        let (adx, ady) = (c * u - s * w, s * u + c * w);
        let n2 = dx * adx + dy * ady;
        (n2.max(0.0).sqrt(), adx, ady)
    }

    pub fn anisotropic_norm(&self, x: f64, y: f64) -> f64 {
        self.norm_and_ad(x, y).0
    }

    /// Unweighted term g_i and gradient.
    pub fn term(&self, x: f64, y: f64) -> PenaltySample {
        let (n, adx, ady) = self.norm_and_ad(x, y);
        let (g, dg_dn) = match self.mode {
            PenaltyMode::Soft => {
                let den = SOFT_EPS + n;
                (1.0 / den, -1.0 / (den * den))
            }
            PenaltyMode::Hard { c, d } => {
                let k = c - d;
                let g = (k * (1.0 - n) + d).exp();
                (g, -k * g)
            }
        };
        if n > 0.0 {
            PenaltySample {
                g,
                gx: dg_dn * adx / n,
                gy: dg_dn * ady / n,
            }
        } else {
            PenaltySample { g, gx: 0.0, gy: 0.0 }
        }
    }
}

/// Weighted penalty sum g = Σ c_s,i g_i with gradient.
pub fn penalty(hazards: &[EllipseHazard], x: f64, y: f64) -> PenaltySample {
    let mut out = PenaltySample::default();
    for h in hazards {
        if h.weight == 0.0 {
            continue;
        }
        let t = h.term(x, y);
        out.g += h.weight * t.g;
        out.gx += h.weight * t.gx;
        out.gy += h.weight * t.gy;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub hazards: Vec<EllipseHazard>,
    /// Cluster index per input point.
    pub assignments: Vec<usize>,
    pub warnings: Vec<String>,
    pub iterations: usize,
}

const KMEANS_MAX_ITER: usize = 100;

fn d2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

fn nearest(p: (f64, f64), centers: &[(f64, f64)]) -> usize {
    let mut best = 0;
    let mut bd = f64::INFINITY;
    for (k, c) in centers.iter().enumerate() {
        let d = d2(p, *c);
        if d < bd {
            bd = d;
            best = k;
        }
    }
    best
}

/// Seeded k-means++ followed by Lloyd iterations.
pub fn kmeans(points: &[(f64, f64)], k: usize, seed: u64) -> (Vec<(f64, f64)>, Vec<usize>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![points[rng.gen_range(0..points.len())]];
    while centers.len() < k {
        let w: Vec<f64> = points
            .iter()
            .map(|p| centers.iter().map(|c| d2(*p, *c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = w.iter().sum();
        let next = if total > 0.0 {
            let mut t = rng.gen_range(0.0..total);
            let mut idx = points.len() - 1;
            for (i, wi) in w.iter().enumerate() {
                if t < *wi {
                    idx = i;
                    break;
                }
                t -= wi;
            }
            idx
        } else {
            rng.gen_range(0..points.len())
        };
        centers.push(points[next]);
    }

    let mut assign: Vec<usize> = points.iter().map(|p| nearest(*p, &centers)).collect();
    let mut iters = 0;
    for it in 1..=KMEANS_MAX_ITER {
        iters = it;
        let mut sum = vec![(0.0, 0.0, 0usize); k];
        for (p, &a) in points.iter().zip(&assign) {
            sum[a].0 += p.0;
            sum[a].1 += p.1;
            sum[a].2 += 1;
        }
        for c in 0..k {
            if sum[c].2 > 0 {
                centers[c] = (sum[c].0 / sum[c].2 as f64, sum[c].1 / sum[c].2 as f64);
            } else {
                // reseed an empty cluster at the point worst served by its center
                let far = (0..points.len())
                    .max_by(|&i, &j| {
                        d2(points[i], centers[assign[i]]).total_cmp(&d2(points[j], centers[assign[j]]))
                    })
                    .unwrap();
                centers[c] = points[far];
                assign[far] = c;
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(*p, &centers)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    (centers, assign, iters)
}

/// Cluster scattered points into K covering ellipses.
///
/// Each ellipse is centred on its cluster centroid with axes along the
/// covariance eigenvectors; semi-axes are √λ scaled by the smallest factor
/// that puts every member inside, then floored at 1% of the point-cloud
/// bounding-box diagonal.
pub fn cluster_ellipses(points: &[(f64, f64)], k: usize, seed: u64) -> Result<ClusterResult> {
    if k == 0 {
        return Err(Error::Domain("cluster count K must be >= 1".into()));
    }
    if k > points.len() {
        return Err(Error::Domain(format!(
            "cluster count K = {k} exceeds number of points {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::Domain("non-finite point".into()));
    }
    let (mut xl, mut xh, mut yl, mut yh) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in points {
        xl = xl.min(p.0);
        xh = xh.max(p.0);
        yl = yl.min(p.1);
        yh = yh.max(p.1);
    }
    let diag = (xh - xl).hypot(yh - yl);
    if !(diag > 0.0) {
        return Err(Error::Domain("all points coincide".into()));
    }
    let floor = 0.01 * diag;

    let (centers, assign, iterations) = kmeans(points, k, seed);
    let mut hazards = Vec::with_capacity(k);
    let mut warnings = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        let members: Vec<(f64, f64)> = points
            .iter()
            .zip(&assign)
            .filter(|(_, &a)| a == c)
            .map(|(p, _)| *p)
            .collect();
        let n = members.len() as f64;
        let (mx, my) = if members.is_empty() {
            *center
        } else {
            (
                members.iter().map(|p| p.0).sum::<f64>() / n,
                members.iter().map(|p| p.1).sum::<f64>() / n,
            )
        };
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for p in &members {
            let (dx, dy) = (p.0 - mx, p.1 - my);
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
        let denom = (n - 1.0).max(1.0);
        let (sxx, sxy, syy) = (sxx / denom, sxy / denom, syy / denom);
        let tr = 0.5 * (sxx + syy);
        let disc = (0.25 * (sxx - syy).powi(2) + sxy * sxy).sqrt();
        let (l1, l2) = (tr + disc, (tr - disc).max(0.0));
        let (ex, ey) = if sxy.abs() > 1e-300 {
            if sxx >= syy {
                (l1 - syy, sxy)
            } else {
                (sxy, l1 - sxx)
            }
        } else if sxx >= syy {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        };
        let alpha = ey.atan2(ex);

        let degenerate = members.len() < 3 || l2 <= 1e-12 * l1 || l1 <= 0.0;
        if degenerate {
            warnings.push(format!(
                "cluster {c}: {} point(s){}; semi-axis floor {floor:.3e} m applied",
                members.len(),
                if members.len() >= 3 { ", collinear" } else { "" }
            ));
        }
        let mut h = EllipseHazard::soft(
            mx,
            my,
            l1.sqrt().max(floor),
            l2.sqrt().max(floor),
            alpha,
            1.0,
        );
        let kmax = members
            .iter()
            .map(|p| h.anisotropic_norm(p.0, p.1))
            .fold(0.0, f64::max);
        if kmax > 0.0 {
            h.semi_axis_a_m *= kmax;
            h.semi_axis_b_m *= kmax;
        }
        h.semi_axis_a_m = h.semi_axis_a_m.max(floor);
        h.semi_axis_b_m = h.semi_axis_b_m.max(floor);
        hazards.push(h);
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(ClusterResult {
        hazards,
        assignments: assign,
        warnings,
        iterations,
    })
}
