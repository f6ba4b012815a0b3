// Super-exponential scale sequence, lattice coverings of swept circles,
// secant-index selection, worst-case crossing estimators (p_n / q_n), and
// the exact arithmetic behind the recursion, induction step and tail bound.
//
// Scales follow a_n = a0^(gamma^n) with gamma = 7/6, so a_n/a_{n-1} =
// a_{n-1}^(1/6). Simulation runs at desk scales (a0 >= 8000); the induction
// arithmetic runs at the theory scale (a0 >= 288^6) in extended precision.

use std::collections::HashSet;

use nalgebra::Vector2;
use num_rational::Ratio;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::extreal::Ext;
use crate::geom::{Cylinder, HexTiling, Line3, P2, P3};
use crate::lines::{min_dist_line_window, sample_poisson, Window};
use crate::surface::obstacle_crossing;
use crate::{replica_seed, Error, Result};

pub const GAMMA_NUM: i64 = 7;
pub const GAMMA_DEN: i64 = 6;

/// The scale sequence a_n = a0^((7/6)^n).
#[derive(Debug, Clone, Copy)]
pub struct ScaleSequence {
    pub a0: f64,
    /// Desk mode admits a0 >= 8000 for simulation; otherwise the theory
    /// threshold a0 >= 288^6 is enforced (which guarantees a_{n+1} >= 288 a_n).
    pub desk_mode: bool,
}

impl ScaleSequence {
    pub fn new(a0: f64, desk_mode: bool) -> Result<ScaleSequence> {
        let floor = if desk_mode { 8000.0 } else { 288f64.powi(6) };
        if !(a0 >= floor) {
            return Err(Error::Config(format!(
                "a0 = {a0} below the {} threshold {floor}",
                if desk_mode { "desk" } else { "theory" }
            )));
        }
        Ok(ScaleSequence { a0, desk_mode })
    }

    pub fn desk(a0: f64) -> Result<ScaleSequence> {
        ScaleSequence::new(a0, true)
    }

    /// a_n in extended precision; never overflows for sane n.
    pub fn scale_ext(&self, n: u32) -> Ext {
        scale_from_ext(&Ext::from_f64(self.a0), n)
    }

    /// a_n as f64, or an explicit overflow error naming the exact exponent.
    pub fn scale(&self, n: u32) -> Result<f64> {
        let v = self.scale_ext(n).to_f64();
        if !v.is_finite() {
            return Err(Error::ScaleOverflow(format!(
                "a_{n} = {}^(({GAMMA_NUM}/{GAMMA_DEN})^{n}) exceeds f64 range",
                self.a0
            )));
        }
        Ok(v)
    }
}

/// a0^(gamma^n) for an extended-precision a0.
pub fn scale_from_ext(a0: &Ext, n: u32) -> Ext {
    let gamma_n = Ext::from_ratio(GAMMA_NUM, GAMMA_DEN).powi(n as usize);
    a0.pow(&gamma_n)
}

// ---------------------------------------------------------------------------
// Hexagon geometry: the central tile of the default tiling.

/// Vertices of the central hexagonal face (counter-clockwise).
pub fn central_hexagon() -> [P2; 6] {
    HexTiling::default().face_vertices(P2::zeros())
}

fn dist_point_segment2(x: P2, a: P2, b: P2) -> f64 {
    let ab = b - a;
    let t = ((x - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (x - (a + ab * t)).norm()
}

/// Distance from x to a convex polygon (0 inside). A single-vertex "polygon"
/// degenerates to the distance to that point.
pub fn dist_to_hull(x: P2, hull: &[P2]) -> f64 {
    if hull.len() == 1 {
        return (x - hull[0]).norm();
    }
    let n = hull.len();
    let mut inside = true;
    let mut best = f64::INFINITY;
    for k in 0..n {
        let (a, b) = (hull[k], hull[(k + 1) % n]);
        let e = b - a;
        let cross = e.x * (x - a).y - e.y * (x - a).x;
        inside &= cross >= 0.0;
        best = best.min(dist_point_segment2(x, a, b));
    }
    if inside {
        0.0
    } else {
        best
    }
}

/// max over the hull of |x - x0|; attained at a vertex by convexity.
pub fn max_dist_to_hull(x: P2, hull: &[P2]) -> f64 {
    hull.iter().map(|v| (x - v).norm()).fold(0.0, f64::max)
}

/// Whether the ball S(x, w) meets the swept circle family
/// { |y - x0| = radius : x0 in hull }. The set of center distances
/// { |x - x0| : x0 in hull } is the interval [dist, maxdist], so the sweep is
/// within w of x iff that interval meets [radius - w, radius + w].
pub fn ball_meets_sweep(x: P2, hull: &[P2], radius: f64, w: f64) -> bool {
    dist_to_hull(x, hull) <= radius + w && max_dist_to_hull(x, hull) >= radius - w
}

// ---------------------------------------------------------------------------
// Coverings.

/// Lattice points of (a_{n-1}/10) Z^2 whose a_{n-1}-ball meets the circles of
/// radius (i+1) a_n / 6 swept around the central hexagon.
#[derive(Debug, Clone)]
pub struct CoveringSet {
    pub n: u32,
    pub i: u32,
    /// Lattice spacing a_{n-1}/10 (also the covering-ball radius).
    pub spacing: f64,
    /// Swept-circle radius (i+1) a_n / 6.
    pub radius: f64,
    pub points: Vec<P2>,
    index: HashSet<(i64, i64)>,
}

impl CoveringSet {
    pub fn contains_lattice(&self, ij: (i64, i64)) -> bool {
        self.index.contains(&ij)
    }

    /// Nearest lattice point to x (as lattice indices).
    pub fn nearest_lattice(&self, x: P2) -> (i64, i64) {
        ((x.x / self.spacing).round() as i64, (x.y / self.spacing).round() as i64)
    }
}

/// Covering around the central hexagon.
pub fn build_covering(seq: &ScaleSequence, n: u32, i: u32) -> Result<CoveringSet> {
    build_covering_around(seq, n, i, &central_hexagon())
}

/// Covering of the circles of radius (i+1) a_n / 6 swept around an arbitrary
/// convex hull of centers (exposed so a single-point hull degenerates to a
/// plain annulus membership test).
pub fn build_covering_around(
    seq: &ScaleSequence,
    n: u32,
    i: u32,
    hull: &[P2],
) -> Result<CoveringSet> {
    if n == 0 {
        return Err(Error::Config("coverings are defined for n >= 1".into()));
    }
    if !(1..=4).contains(&i) {
        return Err(Error::Config(format!("covering index {i} outside 1..=4")));
    }
    let a_n = seq.scale(n)?;
    let a_prev = seq.scale(n - 1)?;
    let spacing = a_prev / 10.0;
    let radius = (i as f64 + 1.0) * a_n / 6.0;
    let w = a_prev;
    let hull_reach = hull.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let r_hi = radius + w + hull_reach;
    let r_lo = (radius - w - hull_reach).max(0.0);
    let k_max = (r_hi / spacing).ceil() as i64;
    if k_max > 20_000 {
        return Err(Error::Resource(format!("covering lattice span {k_max} too large")));
    }
    let mut points = Vec::new();
    let mut index = HashSet::new();
    for jj in -k_max..=k_max {
        for ii in -k_max..=k_max {
            let x = P2::new(ii as f64 * spacing, jj as f64 * spacing);
            let r = x.norm();
            if r < r_lo - spacing || r > r_hi + spacing {
                continue;
            }
            if ball_meets_sweep(x, hull, radius, w) {
                points.push(x);
                index.insert((ii, jj));
            }
        }
    }
    Ok(CoveringSet { n, i, spacing, radius, points, index })
}

// ---------------------------------------------------------------------------
// Secant-index selection and touched-ball counting.

/// Distance from the origin to the ground projection of the axis (the
/// projected point itself for near-vertical axes).
pub fn axis_ground_distance(l: &Line3) -> f64 {
    let p = Vector2::new(l.anchor.x, l.anchor.y);
    let d = Vector2::new(l.dir.x, l.dir.y);
    if d.norm() < 1e-9 {
        p.norm()
    } else {
        (p.x * d.y - p.y * d.x).abs() / d.norm()
    }
}

/// The half-open band of ground distances that disqualifies index i.
pub fn exclusion_interval(a_n: f64, i: u32) -> (f64, f64) {
    let lo = (2.0 * i as f64 + 1.0) * a_n / 12.0;
    (lo, lo + a_n / 6.0)
}

fn excluded_index(a_n: f64, d: f64) -> Option<u32> {
    (1..=4).find(|&i| {
        let (lo, hi) = exclusion_interval(a_n, i);
        d >= lo && d < hi
    })
}

/// Lexicographically smallest pair of distinct indices in {1..4} whose
/// exclusion bands avoid both axes' ground distances. The bands are disjoint,
/// so each axis rules out at most one index and a pair always exists.
pub fn select_secant_indices(
    seq: &ScaleSequence,
    n: u32,
    c1: &Cylinder,
    c2: &Cylinder,
) -> Result<(u32, u32)> {
    let a_n = seq.scale(n)?;
    let banned: Vec<u32> = [&c1.axis, &c2.axis]
        .iter()
        .filter_map(|l| excluded_index(a_n, axis_ground_distance(l)))
        .collect();
    let ok: Vec<u32> = (1..=4).filter(|i| !banned.contains(i)).collect();
    Ok((ok[0], ok[1]))
}

/// Number of covering points x whose window S(x, a_{n-1}/10) x [0,1000] is
/// touched by either cylinder.
pub fn count_touched(covering: &CoveringSet, c1: &Cylinder, c2: &Cylinder) -> usize {
    covering
        .points
        .iter()
        .filter(|&&x| {
            let w = Window::disk_slab(x, covering.spacing);
            let (bc, br) = w.enclosing_ball();
            [c1, c2].iter().any(|c| {
                // Cheap ball-based reject before the exact window distance.
                crate::geom::dist_point_line(bc, &c.axis) - br <= c.radius
                    && min_dist_line_window(&c.axis, &w) <= c.radius
            })
        })
        .count()
}

/// Random vertical unit-cylinder pairs for scale-covariance checks: each
/// ground point sits at radius rho * a_n with rho a fixed relative margin
/// outside the exclusion band flanking a random target index, so the
/// touched-ball count is a purely local lattice statistic, independent of a0.
pub fn random_vertical_secant_pair(
    seq: &ScaleSequence,
    n: u32,
    rng: &mut impl Rng,
) -> Result<(Cylinder, Cylinder)> {
    let a_n = seq.scale(n)?;
    let one = |rng: &mut dyn RngCore| {
        let j = rng.gen_range(1..=4u32) as f64;
        let side = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let delta = rng.gen_range(0.001..0.005);
        let rho = (j + 1.0) / 6.0 + side * (1.0 / 12.0 + delta);
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        let p = P3::new(rho * a_n * theta.cos(), rho * a_n * theta.sin(), 0.0);
        Cylinder::unit(Line3::new(p, P3::new(0.0, 0.0, 1.0)).expect("unit dir"))
    };
    Ok((one(rng), one(rng)))
}

// ---------------------------------------------------------------------------
// Annulus chords.

/// Length of each of the two segments in which a line at distance d from the
/// center crosses the annulus with radii R(1 -+ eps).
pub fn annulus_chord_length(d: f64, big_r: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps <= 1.0 / 24.0) {
        return Err(Error::Geometry(format!("eps = {eps} outside (0, 1/24]")));
    }
    if !(d >= 0.0 && d < big_r * (1.0 - eps)) {
        return Err(Error::Geometry(format!(
            "d = {d} outside [0, R(1-eps)) with R = {big_r}, eps = {eps}"
        )));
    }
    let x = d / big_r;
    let outer = ((1.0 + eps) * (1.0 + eps) - x * x).sqrt();
    let inner = ((1.0 - eps) * (1.0 - eps) - x * x).sqrt();
    Ok(big_r * (outer - inner))
}

// ---------------------------------------------------------------------------
// Monte Carlo estimators for the worst-case crossing probabilities.

#[derive(Debug, Clone, Copy)]
pub struct EstimateWithCI {
    pub mean: f64,
    pub stderr: f64,
    pub replicas: usize,
    pub seed: u64,
}

impl EstimateWithCI {
    pub fn binomial(successes: usize, replicas: usize, seed: u64) -> EstimateWithCI {
        let mean = successes as f64 / replicas as f64;
        EstimateWithCI {
            mean,
            stderr: (mean * (1.0 - mean) / replicas as f64).sqrt(),
            replicas,
            seed,
        }
    }
}

/// Default probe points: the hexagon center plus six points at radius 500
/// (a finite lower-bound proxy for the sup over the hexagon).
pub fn default_x_points() -> Vec<P2> {
    let mut pts = vec![P2::zeros()];
    for k in 0..6 {
        let th = k as f64 * std::f64::consts::FRAC_PI_3;
        pts.push(P2::new(500.0 * th.cos(), 500.0 * th.sin()));
    }
    pts
}

fn crossing_probability(
    seq: &ScaleSequence,
    n: u32,
    u: f64,
    x0: P2,
    extra: Option<(&Line3, &Line3)>,
    reps: usize,
    seed: u64,
    x_index: u64,
) -> Result<EstimateWithCI> {
    let a = seq.scale(n)?;
    if a > 1.5e6 {
        return Err(Error::Resource(format!("crossing window radius a_{n} = {a} too large")));
    }
    let h = 0.5;
    let mut hits = 0usize;
    for r in 0..reps {
        let rs = replica_seed(seed, x_index * reps as u64 + r as u64);
        let mut s = sample_poisson(u, &Window::disk_slab(x0, a), rs)?;
        if let Some((l1, l2)) = extra {
            s.lines.push(*l1);
            s.lines.push(*l2);
        }
        if obstacle_crossing(&s, x0, a, h)? {
            hits += 1;
        }
    }
    Ok(EstimateWithCI::binomial(hits, reps, seed))
}

/// Worst-case (over probe points) probability of the crossing event A_n(x).
pub fn estimate_pn(
    seq: &ScaleSequence,
    n: u32,
    u: f64,
    x_points: &[P2],
    reps: usize,
    seed: u64,
) -> Result<EstimateWithCI> {
    let mut best: Option<EstimateWithCI> = None;
    for (k, &x) in x_points.iter().enumerate() {
        let e = crossing_probability(seq, n, u, x, None, reps, seed, k as u64)?;
        if best.map_or(true, |b| e.mean > b.mean) {
            best = Some(e);
        }
    }
    best.ok_or_else(|| Error::Config("x_points must be non-empty".into()))
}

/// Deterministic adversarial line pairs. Families:
/// - "edge_hugging": horizontal at height 0.5, parallel to two adjacent hex
///   edges at inward offsets {0, 0.5, 1} (9 pairs);
/// - "radial": horizontal axis-aligned lines through x0 at heights {0.5, 500}
///   (3 pairs);
/// - "tangent": lines tangent to the circle of radius (i+1) a_n / 6 around x0
///   at height 0.5, tangency angles 0 and 90 degrees, i in 1..=4 (4 pairs).
pub fn pair_family(
    name: &str,
    seq: &ScaleSequence,
    n: u32,
    x0: P2,
) -> Result<Vec<(Line3, Line3)>> {
    let horiz = |p: P2, d: P2, z: f64| {
        Line3::new(P3::new(p.x, p.y, z), P3::new(d.x, d.y, 0.0).normalize()).expect("unit dir")
    };
    match name {
        "edge_hugging" => {
            let v = central_hexagon();
            let edge = |a: P2, b: P2, offset: f64| {
                let mid = (a + b) * 0.5;
                // Inward normal: the face is centered at the origin.
                let inw = -mid.normalize();
                horiz(mid + inw * offset, b - a, 0.5)
            };
            let mut pairs = Vec::new();
            for &o1 in &[0.0, 0.5, 1.0] {
                for &o2 in &[0.0, 0.5, 1.0] {
                    pairs.push((edge(v[0], v[1], o1), edge(v[1], v[2], o2)));
                }
            }
            Ok(pairs)
        }
        "radial" => {
            let ex = P2::new(1.0, 0.0);
            let ey = P2::new(0.0, 1.0);
            Ok(vec![
                (horiz(x0, ex, 0.5), horiz(x0, ey, 0.5)),
                (horiz(x0, ex, 0.5), horiz(x0, ey, 500.0)),
                (horiz(x0, ex, 500.0), horiz(x0, ey, 500.0)),
            ])
        }
        "tangent" => {
            let a_n = seq.scale(n)?;
            let tangent = |i: u32, th: f64| {
                let r = (i as f64 + 1.0) * a_n / 6.0;
                let at = x0 + P2::new(r * th.cos(), r * th.sin());
                horiz(at, P2::new(-th.sin(), th.cos()), 0.5)
            };
            Ok((1..=4).map(|i| (tangent(i, 0.0), tangent(i, std::f64::consts::FRAC_PI_2))).collect())
        }
        other => Err(Error::Config(format!("unknown pair family '{other}'"))),
    }
}

/// Worst-case crossing probability with two adversarial lines added, maximized
/// over the named family and the probe points. Replica seeds match
/// estimate_pn's, so qn >= pn holds replica-by-replica (adding lines is
/// monotone for the obstacle event).
pub fn estimate_qn(
    seq: &ScaleSequence,
    n: u32,
    u: f64,
    family: &str,
    x_points: &[P2],
    reps: usize,
    seed: u64,
) -> Result<EstimateWithCI> {
    let mut best: Option<EstimateWithCI> = None;
    for (k, &x) in x_points.iter().enumerate() {
        for (l1, l2) in pair_family(family, seq, n, x)? {
            let e = crossing_probability(seq, n, u, x, Some((&l1, &l2)), reps, seed, k as u64)?;
            if best.map_or(true, |b| e.mean > b.mean) {
                best = Some(e);
            }
        }
    }
    best.ok_or_else(|| Error::Config("x_points must be non-empty".into()))
}

/// Jittered instances drawn from the adversarial families, for blocking-check
/// corpora: family lines with the anchor nudged by up to `jitter` and the
/// direction tilted by up to 0.01 radians (kept horizontal).
pub fn adversarial_pairs(
    seq: &ScaleSequence,
    n: u32,
    x0: P2,
    count: usize,
    jitter: f64,
    seed: u64,
) -> Result<Vec<(Line3, Line3)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut base = Vec::new();
    for fam in ["edge_hugging", "radial", "tangent"] {
        base.extend(pair_family(fam, seq, n, x0)?);
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let (l1, l2) = base[rng.gen_range(0..base.len())];
        let mut wobble = |l: &Line3| {
            let p = l.anchor
                + P3::new(
                    rng.gen_range(-jitter..jitter),
                    rng.gen_range(-jitter..jitter),
                    rng.gen_range(0.0..jitter.min(1.0)),
                );
            let phi = rng.gen_range(-0.01..0.01f64);
            let d2 = Vector2::new(l.dir.x, l.dir.y);
            let d2 = Vector2::new(
                d2.x * phi.cos() - d2.y * phi.sin(),
                d2.x * phi.sin() + d2.y * phi.cos(),
            );
            Line3::new(p, P3::new(d2.x, d2.y, 0.0).normalize()).expect("unit dir")
        };
        out.push((wobble(&l1), wobble(&l2)));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Exact arithmetic: recursion, induction step, tail bound.

/// Right-hand sides of the coupled recursion at level n (a = a_{n-1}):
///   p_bound = c_p a^(1/3) (p^2 + a^(-1) + a^(-1/3) q^2)
///   q_bound = c_q [ same bracket + a^(1/6)(pq + a^(-1/3) q + a^(-1))
///                   + q^2 + a^(-1/3) ]
pub fn recursion_rhs(
    p_prev: &Ext,
    q_prev: &Ext,
    a0: &Ext,
    n: u32,
    c_p: f64,
    c_q: f64,
) -> Result<(Ext, Ext)> {
    if n == 0 {
        return Err(Error::Config("recursion starts at n = 1".into()));
    }
    let a = scale_from_ext(a0, n - 1);
    let a_third = a.pow_ratio(1, 3);
    let a_sixth = a.pow_ratio(1, 6);
    let inv_a = Ext::from_i64(1).div(&a);
    let inv_third = a.pow_ratio(-1, 3);
    let p2 = p_prev.mul(p_prev);
    let q2 = q_prev.mul(q_prev);
    let bracket = p2.add(&inv_a).add(&inv_third.mul(&q2));
    let p_bound = Ext::from_f64(c_p).mul(&a_third).mul(&bracket);
    let mid = a_sixth.mul(&p_prev.mul(q_prev).add(&inv_third.mul(q_prev)).add(&inv_a));
    let q_bound =
        Ext::from_f64(c_q).mul(&a_third.mul(&bracket).add(&mid).add(&q2).add(&inv_third));
    Ok((p_bound, q_bound))
}

/// The induction thresholds at level n: (a_n^(-5/12), a_n^(-1/4)).
pub fn induction_thresholds(a0: &Ext, n: u32) -> (Ext, Ext) {
    let a = scale_from_ext(a0, n);
    (a.pow_ratio(-5, 12), a.pow_ratio(-1, 4))
}

/// The scale floor absorbing the recursion constants: 288^6 v (8(c_p v c_q))^168.
pub fn a0_hat_for(c_p: f64, c_q: f64) -> Ext {
    let base = Ext::from_i64(288).powi(6);
    let absorb = Ext::from_f64(8.0 * c_p.max(c_q)).powi(168);
    if absorb > base {
        absorb
    } else {
        base
    }
}

/// Verifies the exponent gaps (exact rational arithmetic) and the absorption
/// a0_hat^(1/168) >= 8(c_p v c_q), i.e. that one induction step contracts.
pub fn check_induction_step(a0_hat: &Ext, c_p: f64, c_q: f64) -> bool {
    let gamma = Ratio::new(GAMMA_NUM, GAMMA_DEN);
    let one = Ratio::from_integer(1);
    let margin = Ratio::new(1i64, 168);
    // 3(1/gamma - 1) + 1/168 < (5/2)(1 - gamma): -71/168 < -70/168.
    let e1 = Ratio::from_integer(3) * (gamma.recip() - one) + margin
        < Ratio::new(5, 2) * (one - gamma);
    // 2(1/gamma - 1) + 1/168 < (3/2)(1 - gamma): -47/168 < -42/168.
    let e2 = Ratio::from_integer(2) * (gamma.recip() - one) + margin
        < Ratio::new(3, 2) * (one - gamma);
    let need = Ext::from_f64(8.0 * c_p.max(c_q)).mul(&Ext::from_f64(1.0 - 1e-30));
    let absorb = a0_hat.pow_ratio(1, 168) >= need;
    let floor = *a0_hat >= Ext::from_i64(288).powi(6).mul(&Ext::from_f64(1.0 - 1e-30));
    e1 && e2 && absorb && floor
}

/// 20 * sum_{k >= k0-1} (a0_hat^(-1/4))^(gamma^k), summed until terms drop
/// below 1e-300. Strictly decreasing in k0.
pub fn tail_bound(a0_hat: &Ext, k0: u32) -> Result<f64> {
    if !(*a0_hat > Ext::from_i64(1)) {
        return Err(Error::Config(format!("tail diverges for a0_hat = {a0_hat} <= 1")));
    }
    if k0 < 1 {
        return Err(Error::Config("k0 must be >= 1".into()));
    }
    let base = a0_hat.pow_ratio(-1, 4);
    let gamma = Ext::from_ratio(GAMMA_NUM, GAMMA_DEN);
    let cutoff = Ext::from_f64(1e-300);
    let mut exponent = gamma.powi((k0 - 1) as usize);
    let mut sum = Ext::zero();
    loop {
        let term = base.pow(&exponent);
        if term < cutoff {
            break;
        }
        sum = sum.add(&term);
        exponent = exponent.mul(&gamma);
    }
    Ok(Ext::from_i64(20).mul(&sum).to_f64())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_err(a: &Ext, b: &Ext) -> f64 {
        a.sub(b).div(b).to_f64().abs()
    }

    #[test]
    fn scale_examples() {
        let seq = ScaleSequence::new(288f64.powi(6), false).unwrap();
        let a1 = seq.scale_ext(1);
        let exact = Ext::from_i64(288).powi(7);
        assert!(rel_err(&a1, &exact) < 1e-30);

        let desk = ScaleSequence::desk(8000.0).unwrap();
        assert_eq!(desk.scale(0).unwrap(), 8000.0);
        for n in 1..=5u32 {
            let a_n = desk.scale(n).unwrap();
            let a_prev = desk.scale(n - 1).unwrap();
            let ratio = a_n / a_prev;
            assert!(
                (ratio / a_prev.powf(1.0 / 6.0) - 1.0).abs() < 1e-12,
                "ratio law fails at n = {n}"
            );
        }
    }

    #[test]
    fn scale_overflow_is_an_error() {
        let seq = ScaleSequence::new(288f64.powi(6), false).unwrap();
        match seq.scale(60) {
            Err(Error::ScaleOverflow(msg)) => assert!(msg.contains("(7/6)^60")),
            other => panic!("expected overflow, got {other:?}"),
        }
        // But the extended-precision value is fine.
        assert!(seq.scale_ext(60).log10().to_f64() > 1e4);
    }

    #[test]
    fn scale_floor_enforced() {
        assert!(ScaleSequence::new(1e6, false).is_err());
        assert!(ScaleSequence::desk(7000.0).is_err());
        assert!(ScaleSequence::desk(8000.0).is_ok());
    }

    #[test]
    fn degenerate_hull_is_an_annulus_test() {
        // A single-point hull reduces the predicate to |x| within w of the
        // circle radius; compare against direct enumeration.
        let seq = ScaleSequence::desk(8000.0).unwrap();
        let cov = build_covering_around(&seq, 1, 2, &[P2::zeros()]).unwrap();
        let a_n = seq.scale(1).unwrap();
        let w = seq.scale(0).unwrap();
        let radius = 3.0 * a_n / 6.0;
        let s = cov.spacing;
        let k_max = ((radius + w) / s).ceil() as i64 + 1;
        let mut expected = 0usize;
        for jj in -k_max..=k_max {
            for ii in -k_max..=k_max {
                let r = (ii as f64 * s).hypot(jj as f64 * s);
                if (r - radius).abs() <= w {
                    expected += 1;
                    assert!(cov.contains_lattice((ii, jj)), "missing ({ii},{jj})");
                }
            }
        }
        assert_eq!(cov.points.len(), expected);
    }

    #[test]
    fn covering_soundness_sampled() {
        let seq = ScaleSequence::desk(8000.0).unwrap();
        let cov = build_covering(&seq, 1, 3).unwrap();
        let hull = central_hexagon();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let circ = HexTiling::default().circumradius();
        for _ in 0..200 {
            // Uniform center in the hexagon by rejection, then a circle point.
            let x0 = loop {
                let c = P2::new(rng.gen_range(-circ..circ), rng.gen_range(-circ..circ));
                if dist_to_hull(c, &hull) == 0.0 {
                    break c;
                }
            };
            let th = rng.gen_range(0.0..std::f64::consts::TAU);
            let y = x0 + P2::new(cov.radius * th.cos(), cov.radius * th.sin());
            let ij = cov.nearest_lattice(y);
            let p = P2::new(ij.0 as f64 * cov.spacing, ij.1 as f64 * cov.spacing);
            assert!(cov.contains_lattice(ij), "nearest lattice point not in covering at {y:?}");
            assert!((y - p).norm() <= cov.spacing, "sphere point not within one ball radius");
        }
    }

    #[test]
    fn secant_index_examples() {
        let seq = ScaleSequence::desk(8000.0).unwrap();
        let vertical = |x: f64, y: f64| {
            Cylinder::unit(Line3::new(P3::new(x, y, 0.0), P3::new(0.0, 0.0, 1.0)).unwrap())
        };
        // Both through the origin: nothing excluded.
        let v0 = vertical(0.0, 0.0);
        assert_eq!(select_secant_indices(&seq, 1, &v0, &v0).unwrap(), (1, 2));
        // d = a_1/2 lands in [5a/12, 7a/12), excluding i = 2.
        let a1 = seq.scale(1).unwrap();
        let far = vertical(a1 / 2.0, 0.0);
        assert_eq!(select_secant_indices(&seq, 1, &far, &v0).unwrap(), (1, 3));
    }

    #[test]
    fn exclusion_bands_are_disjoint() {
        let a = 12345.0;
        for i in 1..4 {
            assert!(exclusion_interval(a, i).1 <= exclusion_interval(a, i + 1).0 + 1e-12);
        }
    }

    #[test]
    fn count_touched_basics() {
        let seq = ScaleSequence::desk(8000.0).unwrap();
        let cov = build_covering(&seq, 1, 1).unwrap();
        let vertical = |p: P2| {
            Cylinder::unit(Line3::new(P3::new(p.x, p.y, 0.0), P3::new(0.0, 0.0, 1.0)).unwrap())
        };
        // Far from the covering band: zero.
        let far = vertical(P2::new(10.0 * cov.radius, 0.0));
        assert_eq!(count_touched(&cov, &far, &far), 0);
        // Centered on an actual covering point: at least one.
        let on = vertical(cov.points[0]);
        assert!(count_touched(&cov, &on, &far) >= 1);
    }

    #[test]
    fn chord_length_examples() {
        let r = 100.0;
        let eps = 1.0 / 30.0;
        assert!((annulus_chord_length(0.0, r, eps).unwrap() - 2.0 * r * eps).abs() < 1e-12);
        assert!(annulus_chord_length(99.0, r, eps).is_err());
        assert!(annulus_chord_length(0.0, r, 0.2).is_err());
    }

    #[test]
    fn chord_length_matches_bisection_oracle() {
        // Locate the annulus entry/exit parameters of the line x = d by
        // bisection on |(d, t)| and compare segment lengths.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let big_r = rng.gen_range(1.0..1000.0);
            let eps = rng.gen_range(1e-4..1.0 / 24.0);
            let d = rng.gen_range(0.0..big_r * (1.0 - eps) * 0.999);
            let cross_at = |radius: f64| -> f64 {
                // t >= 0 with hypot(d, t) = radius.
                let (mut lo, mut hi) = (0.0f64, 2.0 * big_r);
                for _ in 0..100 {
                    let m = 0.5 * (lo + hi);
                    if d.hypot(m) < radius {
                        lo = m;
                    } else {
                        hi = m;
                    }
                }
                0.5 * (lo + hi)
            };
            let oracle = cross_at(big_r * (1.0 + eps)) - cross_at(big_r * (1.0 - eps));
            let got = annulus_chord_length(d, big_r, eps).unwrap();
            assert!((got - oracle).abs() < 1e-9 * big_r.max(1.0), "{got} vs {oracle}");
        }
    }

    #[test]
    fn chord_length_uniform_bound() {
        // <= 10 R eps over the whole admissible sweep.
        for a in 0..100 {
            for b in 1..=100 {
                let x = a as f64 / 100.0 * (11.0 / 12.0);
                let eps = b as f64 / 100.0 / 24.0;
                let big_r = 1.0;
                if x >= 1.0 - eps {
                    continue;
                }
                let v = annulus_chord_length(x * big_r, big_r, eps).unwrap();
                assert!(v <= 10.0 * big_r * eps, "f({x},{eps}) = {v}");
            }
        }
    }

    #[test]
    fn recursion_rhs_examples() {
        let a0 = Ext::from_f64(1e6);
        let zero = Ext::zero();
        let (p, _q) = recursion_rhs(&zero, &zero, &a0, 1, 2.0, 3.0).unwrap();
        let expect = Ext::from_f64(2.0).mul(&a0.pow_ratio(-2, 3));
        assert!(p.sub(&expect).div(&expect).to_f64().abs() < 1e-12);

        // At the induction thresholds the proof's 3-term / 8-term bounds hold.
        let (p0, q0) = induction_thresholds(&a0, 0);
        let (pb, qb) = recursion_rhs(&p0, &q0, &a0, 1, 1.0, 1.0).unwrap();
        let p_cap = Ext::from_i64(8).mul(&a0.pow_ratio(-1, 2));
        let q_cap = Ext::from_i64(8).mul(&a0.pow_ratio(-1, 3));
        assert!(pb <= p_cap, "p bound exceeds 8 a^(-1/2)");
        assert!(qb <= q_cap, "q bound exceeds 8 a^(-1/3)");
        // And the dominant p-terms (two of the three are equal) are tight to
        // within the third, smaller term.
        let three = Ext::from_i64(3).mul(&a0.pow_ratio(-1, 2));
        assert!(pb <= three && pb > p_cap.mul(&Ext::from_ratio(2, 8)));
    }

    #[test]
    fn recursion_rhs_monotone() {
        let a0 = Ext::from_f64(1e6);
        let grid: Vec<f64> = (0..10).map(|k| k as f64 / 10.0).collect();
        let mut prev_rows: Option<Vec<(Ext, Ext)>> = None;
        for &p in &grid {
            let mut row = Vec::new();
            let mut prev_in_q: Option<(Ext, Ext)> = None;
            for &q in &grid {
                let out = recursion_rhs(&Ext::from_f64(p), &Ext::from_f64(q), &a0, 1, 1.0, 1.0)
                    .unwrap();
                if let Some((bp, bq)) = &prev_in_q {
                    assert!(out.0 >= *bp && out.1 >= *bq, "not monotone in q");
                }
                prev_in_q = Some(out.clone());
                row.push(out);
            }
            if let Some(prows) = &prev_rows {
                for (a, b) in row.iter().zip(prows) {
                    assert!(a.0 >= b.0 && a.1 >= b.1, "not monotone in p");
                }
            }
            prev_rows = Some(row);
        }
    }

    #[test]
    fn induction_step_checks() {
        for c in [1.0, 10.0] {
            let a0 = a0_hat_for(c, c);
            assert!(check_induction_step(&a0, c, c), "induction fails at c = {c}");
        }
        // Too small to absorb large constants.
        assert!(!check_induction_step(&Ext::from_f64(1e15), 100.0, 100.0));
    }

    #[test]
    fn tail_bound_examples() {
        let a0 = Ext::from_f64(1e16);
        let t1 = tail_bound(&a0, 1).unwrap();
        let t2 = tail_bound(&a0, 2).unwrap();
        // First term 20e-4; the k=1 term adds 20*(1e-4)^(7/6) ~ 4.3e-4.
        assert!(t1 > 2e-3 && t1 < 2.6e-3, "t1 = {t1}");
        assert!(t2 < t1);
        assert!(tail_bound(&Ext::from_f64(0.5), 1).is_err());

        // A k0 below 1/3 exists for the theory floor (already at k0 = 1).
        let floor = Ext::from_i64(288).powi(6);
        let found = (1..=40).find(|&k0| tail_bound(&floor, k0).unwrap() < 1.0 / 3.0);
        assert!(found.is_some());
    }

    #[test]
    fn estimate_pn_trivial_and_qn_dominates() {
        let seq = ScaleSequence::desk(8000.0).unwrap();
        let xs = [P2::zeros()];
        let p0 = estimate_pn(&seq, 0, 0.0, &xs, 2, 99).unwrap();
        assert_eq!(p0.mean, 0.0);

        let u = 1e-8;
        let reps = 4;
        let p = estimate_pn(&seq, 0, u, &xs, reps, 5).unwrap();
        let q = estimate_qn(&seq, 0, u, "radial", &xs, reps, 5).unwrap();
        assert!(q.mean >= p.mean, "adding lines must not lower the estimate");
    }

    #[test]
    fn edge_hugging_alone_cannot_cross() {
        // Two cylinders by themselves never span the annulus at desk scale.
        let seq = ScaleSequence::desk(1e5).unwrap();
        let q = estimate_qn(&seq, 0, 0.0, "edge_hugging", &[P2::zeros()], 1, 1).unwrap();
        assert_eq!(q.mean, 0.0);
    }

    #[test]
    fn unknown_family_rejected() {
        let seq = ScaleSequence::desk(8000.0).unwrap();
        assert!(pair_family("diagonal", &seq, 1, P2::zeros()).is_err());
    }

    #[test]
    fn vertical_pair_generator_respects_exclusion() {
        let seq = ScaleSequence::desk(8000.0).unwrap();
        let a1 = seq.scale(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let (c1, c2) = random_vertical_secant_pair(&seq, 1, &mut rng).unwrap();
            let (i1, i2) = select_secant_indices(&seq, 1, &c1, &c2).unwrap();
            assert!(i1 < i2);
            for c in [&c1, &c2] {
                let d = axis_ground_distance(&c.axis);
                for i in [i1, i2] {
                    let (lo, hi) = exclusion_interval(a1, i);
                    assert!(!(d >= lo && d < hi), "selected index {i} excluded by d = {d}");
                }
            }
        }
    }
}
