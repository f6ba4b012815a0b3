// The invariant line measure and Poisson sampling of cylinders hitting
// finite windows.
//
// A line is parametrized as (direction mod sign, offset in the orthogonal
// plane); the invariant measure factorizes as (rotation mass 1) x (planar
// Lebesgue on offsets). Consequently the mass of lines passing within
// distance r of a point is pi r^2, and every sampler below draws a uniform
// direction on the sphere plus a uniform offset on an orthogonal disk.

use nalgebra::Vector2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Poisson, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::geom::{dist_point_line, Cylinder, Line3, P2, P3};
use crate::{replica_seed, Error, Result};

/// A finite observation window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Window {
    /// Solid ball; radius 0 encodes a single point.
    Ball { center: P3, r: f64 },
    /// S(center, s) x [z.0, z.1]: a vertical solid cylinder over a disk.
    DiskSlab { center: P2, s: f64, z: (f64, f64) },
}

impl Window {
    pub fn ball(center: P3, r: f64) -> Window {
        Window::Ball { center, r }
    }

    pub fn point(p: P3) -> Window {
        Window::Ball { center: p, r: 0.0 }
    }

    /// Disk-slab over the default slab [0, 1000].
    pub fn disk_slab(center: P2, s: f64) -> Window {
        Window::DiskSlab { center, s, z: (0.0, 1000.0) }
    }

    /// Center and radius of the minimal enclosing ball.
    pub fn enclosing_ball(&self) -> (P3, f64) {
        match *self {
            Window::Ball { center, r } => (center, r),
            Window::DiskSlab { center, s, z } => {
                let mid = 0.5 * (z.0 + z.1);
                let half = 0.5 * (z.1 - z.0);
                (P3::new(center.x, center.y, mid), (s * s + half * half).sqrt())
            }
        }
    }

    /// Euclidean distance from a point to the (solid) window.
    pub fn dist_to_point(&self, p: P3) -> f64 {
        match *self {
            Window::Ball { center, r } => ((p - center).norm() - r).max(0.0),
            Window::DiskSlab { center, s, z } => {
                let dh = ((Vector2::new(p.x, p.y) - center).norm() - s).max(0.0);
                let dv = (z.0 - p.z).max(p.z - z.1).max(0.0);
                (dh * dh + dv * dv).sqrt()
            }
        }
    }

    pub fn contains_point(&self, p: P3) -> bool {
        self.dist_to_point(p) <= 0.0
    }
}

/// One realization of the Poisson cylinder process restricted to a window.
/// Contains every line whose unit cylinder can meet the window: the sampling
/// region is the enclosing ball enlarged by the cylinder radius 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineSample {
    pub u: f64,
    pub window: Window,
    pub lines: Vec<Line3>,
    pub seed: u64,
}

impl LineSample {
    /// True if questions about lines touching `w` are answerable from this
    /// sample (w's enclosing ball lies inside the sampled ball).
    pub fn covers(&self, w: &Window) -> bool {
        let (c0, r0) = self.window.enclosing_ball();
        let (c1, r1) = w.enclosing_ball();
        (c1 - c0).norm() + r1 <= r0 + 1e-9
    }

    pub fn covers_point(&self, p: P3) -> bool {
        let (c0, r0) = self.window.enclosing_ball();
        (p - c0).norm() <= r0 + 1e-9
    }

    pub fn cylinders(&self) -> impl Iterator<Item = Cylinder> + '_ {
        self.lines.iter().map(|l| Cylinder::unit(*l))
    }
}

/// Measure of lines passing within distance r of a point: pi r^2.
pub fn mu_lines_hitting_ball(r: f64) -> Result<f64> {
    if r < 0.0 {
        return Err(Error::Geometry(format!("negative radius {r}")));
    }
    Ok(std::f64::consts::PI * r * r)
}

/// Measure of lines whose unit cylinder meets the window; closed form only
/// for balls: pi (r+1)^2.
pub fn mu_cylinders_hitting(w: &Window) -> Result<f64> {
    match *w {
        Window::Ball { r, .. } => Ok(std::f64::consts::PI * (r + 1.0) * (r + 1.0)),
        Window::DiskSlab { .. } => Err(Error::EstimateOnly),
    }
}

/// Orthonormal basis of the plane orthogonal to unit vector d.
fn orthonormal_basis(d: P3) -> (P3, P3) {
    let pick = if d.x.abs() <= d.y.abs() && d.x.abs() <= d.z.abs() {
        P3::new(1.0, 0.0, 0.0)
    } else if d.y.abs() <= d.z.abs() {
        P3::new(0.0, 1.0, 0.0)
    } else {
        P3::new(0.0, 0.0, 1.0)
    };
    let e1 = d.cross(&pick).normalize();
    let e2 = d.cross(&e1);
    (e1, e2)
}

/// One line uniform on the set of lines passing within `radius` of `center`.
fn sample_line_through_ball(rng: &mut impl Rng, center: P3, radius: f64) -> Line3 {
    let d: [f64; 3] = UnitSphere.sample(rng);
    let dir = P3::new(d[0], d[1], d[2]);
    let (e1, e2) = orthonormal_basis(dir);
    let rho = radius * rng.gen::<f64>().sqrt();
    let phi = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
    let p = center + e1 * (rho * phi.cos()) + e2 * (rho * phi.sin());
    Line3::new(p, dir).expect("unit direction")
}

/// Sample the Poisson line process at intensity `u` restricted to lines whose
/// unit cylinder can meet `w`. Deterministic in (u, w, seed).
pub fn sample_poisson(u: f64, w: &Window, seed: u64) -> Result<LineSample> {
    if u < 0.0 || !u.is_finite() {
        return Err(Error::Config(format!("intensity must be >= 0, got {u}")));
    }
    let (center, r) = w.enclosing_ball();
    let radius = r + 1.0;
    let mean = u * std::f64::consts::PI * radius * radius;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = if mean > 0.0 {
        Poisson::new(mean)
            .map_err(|e| Error::Config(format!("poisson mean {mean}: {e}")))?
            .sample(&mut rng) as usize
    } else {
        0
    };
    let lines = (0..count)
        .map(|_| sample_line_through_ball(&mut rng, center, radius))
        .collect();
    Ok(LineSample { u, window: *w, lines, seed })
}

/// True iff the unit cylinder around `l` meets `w`: min_t dist(l(t), w) <= 1,
/// located by ternary search on the convex distance profile.
pub fn hits_region(l: &Line3, w: &Window) -> bool {
    min_dist_line_window(l, w) <= 1.0
}

/// min over t of dist(l(t), w), to absolute tolerance ~1e-9.
pub fn min_dist_line_window(l: &Line3, w: &Window) -> f64 {
    let (c, r) = w.enclosing_ball();
    let axial_dist = dist_point_line(c, l);
    if let Window::Ball { .. } = w {
        // Exact for balls: nearest approach of the line to the center.
        return (axial_dist - r).max(0.0);
    }
    if axial_dist - r > 2.0 {
        // Certainly farther than anything we ever compare against.
        return axial_dist - r;
    }
    let t0 = (c - l.anchor).dot(&l.dir);
    let half = r + 2.0;
    let (mut lo, mut hi) = (t0 - half, t0 + half);
    for _ in 0..200 {
        if hi - lo <= 1e-10 {
            break;
        }
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if w.dist_to_point(l.at(m1)) <= w.dist_to_point(l.at(m2)) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    w.dist_to_point(l.at(0.5 * (lo + hi)))
}

/// Number of sampled lines whose cylinder meets both windows.
pub fn count_hitting_both(s: &LineSample, w1: &Window, w2: &Window) -> Result<usize> {
    for w in [w1, w2] {
        if !s.covers(w) {
            return Err(Error::Coverage(format!("{w:?} outside sampled region")));
        }
    }
    Ok(s.lines
        .iter()
        .filter(|l| hits_region(l, w1) && hits_region(l, w2))
        .count())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MuEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub draws: usize,
}

/// Monte Carlo estimate of the measure of lines whose cylinders meet both
/// windows. Samples uniformly from the lines through the first window's
/// enlarged enclosing ball (every line hitting both must pass there), which
/// keeps the hit fraction workable even at large separations.
pub fn estimate_mu_hitting_both(w1: &Window, w2: &Window, n: usize, seed: u64) -> Result<MuEstimate> {
    if n < 1000 {
        return Err(Error::Config(format!("need >= 1000 draws, got {n}")));
    }
    let (center, r1) = w1.enclosing_ball();
    let radius = r1 + 1.0;
    let total = std::f64::consts::PI * radius * radius;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..n {
        let l = sample_line_through_ball(&mut rng, center, radius);
        if hits_region(&l, w1) && hits_region(&l, w2) {
            hits += 1;
        }
    }
    let frac = hits as f64 / n as f64;
    Ok(MuEstimate {
        estimate: total * frac,
        stderr: total * (frac * (1.0 - frac) / n as f64).sqrt(),
        draws: n,
    })
}

/// Measure of lines passing within `rho` of both centers, by 1-D quadrature
/// over the polar angle: a direction at angle theta to the segment projects
/// the two centers d sin(theta) apart in the offset plane, so the admissible
/// offsets form the lens of two rho-disks at that distance.
pub fn mu_hitting_both_balls(c1: P3, c2: P3, rho: f64) -> f64 {
    if rho <= 0.0 {
        return 0.0;
    }
    let d = (c2 - c1).norm();
    if d == 0.0 {
        return std::f64::consts::PI * rho * rho;
    }
    let lens = |x: f64| {
        if x >= 2.0 * rho {
            0.0
        } else {
            2.0 * rho * rho * (x / (2.0 * rho)).acos() - 0.5 * x * (4.0 * rho * rho - x * x).sqrt()
        }
    };
    let theta_max = (2.0 * rho / d).min(1.0).asin();
    // Simpson's rule; the integrand is smooth except for a (2rho - x)^{3/2}
    // vanishing at theta_max, which Simpson handles fine at this resolution.
    let m = 4096usize;
    let h = theta_max / m as f64;
    let f = |theta: f64| lens(d * theta.sin()) * theta.sin();
    let mut acc = f(0.0) + f(theta_max);
    for k in 1..m {
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
    }
    acc * h / 3.0
}

/// p is in the vacant set of the realization.
pub fn point_vacant(s: &LineSample, p: P3) -> Result<bool> {
    if !s.covers_point(p) {
        return Err(Error::Coverage(format!("point {p:?} outside sampled region")));
    }
    Ok(!s.lines.iter().any(|l| dist_point_line(p, l) <= 1.0))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CovEstimate {
    pub mc: f64,
    pub mc_stderr: f64,
    /// exp(-2 u pi) (exp(u mu(L_{x,y})) - 1) with mu by exact quadrature.
    pub semi_analytic: f64,
    /// Zero: the reference value carries no sampling error.
    pub semi_analytic_stderr: f64,
    pub replicas: usize,
}

/// Covariance of the vacancy indicators at x and y under intensity u.
pub fn covariance_estimate(x: P3, y: P3, u: f64, reps: usize, seed: u64) -> Result<CovEstimate> {
    if reps < 10_000 {
        return Err(Error::Config(format!("need >= 1e4 replicas, got {reps}")));
    }
    let mid = (x + y) * 0.5;
    let w = Window::ball(mid, (x - mid).norm());
    let mut sx = 0.0f64;
    let mut sy = 0.0f64;
    let mut sxy = 0.0f64;
    let mut joint = Vec::with_capacity(reps);
    for i in 0..reps {
        let s = sample_poisson(u, &w, replica_seed(seed, i as u64))?;
        let ix = point_vacant(&s, x)? as u8 as f64;
        let iy = point_vacant(&s, y)? as u8 as f64;
        sx += ix;
        sy += iy;
        sxy += ix * iy;
        joint.push((ix, iy));
    }
    let n = reps as f64;
    let (mx, my) = (sx / n, sy / n);
    let cov = sxy / n - mx * my;
    // Spread of the centered products gives the estimator's standard error.
    let var_g = joint
        .iter()
        .map(|&(ix, iy)| {
            let g = (ix - mx) * (iy - my) - cov;
            g * g
        })
        .sum::<f64>()
        / n;
    let mc_stderr = (var_g / n).sqrt();

    let mu = mu_hitting_both_balls(x, y, 1.0);
    let base = (-2.0 * u * std::f64::consts::PI).exp();
    Ok(CovEstimate {
        mc: cov,
        mc_stderr,
        semi_analytic: base * ((u * mu).exp() - 1.0),
        semi_analytic_stderr: 0.0,
        replicas: reps,
    })
}
