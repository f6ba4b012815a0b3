// Constructive verifiers for the deterministic two-cylinder lemmas: the core
// segment of an intersection, the radius-4 tube around long curves in a
// two-cylinder union, the horizon scan of the tiling boundary's neighborhood,
// and the blocking check that triggers the renormalization.

use std::fmt::Write as _;

use rand::prelude::*;

use crate::geom::{
    dist_point_line, dist_to_hex_boundary, lift_to_h, map_f, Cylinder,
    HexTiling, Line3, P2, P3,
};
use crate::lines::{LineSample, Window};
use crate::surface::obstacle_crossing;
use crate::{Error, Result};

/// Sine of the axis angle below which two cylinders count as parallel.
pub const PARALLEL_TOL: f64 = 1e-6;

// ---------------------------------------------------------------------------
// Polylines.

/// A curve surrogate: straight segments, parametrized proportionally to arc
/// length on [0, 1].
#[derive(Debug, Clone)]
pub struct Polyline {
    pub vertices: Vec<P3>,
    cum: Vec<f64>,
}

impl Polyline {
    pub fn new(vertices: Vec<P3>) -> Result<Polyline> {
        if vertices.len() < 2 {
            return Err(Error::Geometry("polyline needs at least 2 vertices".into()));
        }
        let mut cum = vec![0.0];
        for w in vertices.windows(2) {
            let len = (w[1] - w[0]).norm();
            if len == 0.0 {
                return Err(Error::Geometry("repeated consecutive vertex".into()));
            }
            cum.push(cum.last().unwrap() + len);
        }
        Ok(Polyline { vertices, cum })
    }

    pub fn total_length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn at(&self, t: f64) -> P3 {
        let s = t.clamp(0.0, 1.0) * self.total_length();
        let k = match self.cum.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
            Ok(k) => k.min(self.vertices.len() - 2),
            Err(k) => k.saturating_sub(1).min(self.vertices.len() - 2),
        };
        let seg = self.cum[k + 1] - self.cum[k];
        let f = ((s - self.cum[k]) / seg).clamp(0.0, 1.0);
        self.vertices[k] + (self.vertices[k + 1] - self.vertices[k]) * f
    }

    /// Parameter of vertex k.
    pub fn vertex_param(&self, k: usize) -> f64 {
        self.cum[k] / self.total_length()
    }

    /// Vertex and edge-midpoint parameters: the membership checkpoints.
    pub fn checkpoints(&self) -> Vec<f64> {
        let mut ts = Vec::with_capacity(2 * self.vertices.len());
        for k in 0..self.vertices.len() {
            ts.push(self.vertex_param(k));
            if k + 1 < self.vertices.len() {
                ts.push(0.5 * (self.vertex_param(k) + self.vertex_param(k + 1)));
            }
        }
        ts
    }
}

// ---------------------------------------------------------------------------
// Core segment of a two-cylinder intersection.

/// Axis projections of C1 and C2's intersection: segment [x_m, y_m] on axis m.
#[derive(Debug, Clone, Copy)]
pub struct CoreSegment {
    pub x1: P3,
    pub y1: P3,
    pub x2: P3,
    pub y2: P3,
}

pub fn dist_point_segment3(p: P3, a: P3, b: P3) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Hausdorff distance between two segments; the sup over a segment of the
/// (convex) distance to the other is attained at an endpoint.
pub fn hausdorff_segments(a: (P3, P3), b: (P3, P3)) -> f64 {
    let one_way = |s: (P3, P3), t: (P3, P3)| {
        dist_point_segment3(s.0, t.0, t.1).max(dist_point_segment3(s.1, t.0, t.1))
    };
    one_way(a, b).max(one_way(b, a))
}

/// Hausdorff distance between two finite point sets.
pub fn hausdorff_points(a: &[P3], b: &[P3]) -> f64 {
    let one_way = |s: &[P3], t: &[P3]| {
        s.iter()
            .map(|p| t.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}

/// Minimal distance between two (infinite) axis lines and the parameters of
/// the closest-approach points.
fn line_line_closest(l1: &Line3, l2: &Line3) -> (f64, f64, f64) {
    let w = l1.anchor - l2.anchor;
    let b = l1.dir.dot(&l2.dir);
    let d = l1.dir.dot(&w);
    let e = l2.dir.dot(&w);
    let denom = 1.0 - b * b;
    if denom.abs() < 1e-15 {
        // Parallel: any common perpendicular.
        let t1 = 0.0;
        let t2 = -e;
        return ((l1.at(t1) - l2.at(t2)).norm(), t1, t2);
    }
    let t1 = (b * e - d) / denom;
    let t2 = (e - b * d) / denom;
    ((l1.at(t1) - l2.at(t2)).norm(), t1, t2)
}

/// Minimum distance from the radius-r1 disk orthogonal to `axis1` at
/// parameter t to the axis of c2. The squared distance to a line is a convex
/// quadratic over the disk plane, so the minimum is either the unconstrained
/// critical point or lies on the boundary circle (a degree-2 trigonometric
/// polynomial, located by a grid plus ternary refinement).
fn disk_axis_distance(axis1: &Line3, r1: f64, t: f64, c2: &Cylinder) -> f64 {
    let center = axis1.at(t);
    let d = c2.axis.dir;
    let proj = |v: P3| v - d * v.dot(&d);
    let pick = if axis1.dir.x.abs() < 0.9 {
        P3::new(1.0, 0.0, 0.0)
    } else {
        P3::new(0.0, 1.0, 0.0)
    };
    let e1 = axis1.dir.cross(&pick).normalize();
    let e2 = axis1.dir.cross(&e1);
    let w = proj(center - c2.axis.anchor);
    let (p1, p2) = (proj(e1), proj(e2));
    let (m11, m22, m12) = (p1.dot(&p1), p2.dot(&p2), p1.dot(&p2));
    let (b1, b2) = (p1.dot(&w), p2.dot(&w));
    let c0 = w.dot(&w);
    let q = |v1: f64, v2: f64| {
        (m11 * v1 * v1 + 2.0 * m12 * v1 * v2 + m22 * v2 * v2 + 2.0 * (b1 * v1 + b2 * v2) + c0)
            .max(0.0)
    };
    let mut best = q(0.0, 0.0);
    let det = m11 * m22 - m12 * m12;
    if det > 1e-14 {
        let v1 = (-b1 * m22 + b2 * m12) / det;
        let v2 = (-b2 * m11 + b1 * m12) / det;
        if v1 * v1 + v2 * v2 <= r1 * r1 {
            // Interior minimum (a nearly singular form puts it far outside).
            return q(v1, v2).sqrt();
        }
    }
    let tau = std::f64::consts::TAU;
    let val = |phi: f64| q(r1 * phi.cos(), r1 * phi.sin());
    let grid = 512;
    let mut kbest = 0usize;
    let mut vbest = f64::INFINITY;
    for k in 0..grid {
        let v = val(tau * k as f64 / grid as f64);
        if v < vbest {
            vbest = v;
            kbest = k;
        }
    }
    // The boundary profile has at most 4 critical points, so it is unimodal
    // within one grid step of the best sample.
    let mut lo = tau * (kbest as f64 - 1.0) / grid as f64;
    let mut hi = tau * (kbest as f64 + 1.0) / grid as f64;
    for _ in 0..100 {
        let g1 = lo + (hi - lo) / 3.0;
        let g2 = hi - (hi - lo) / 3.0;
        if val(g1) <= val(g2) {
            hi = g2;
        } else {
            lo = g1;
        }
    }
    best = best.min(vbest).min(val(0.5 * (lo + hi)));
    best.sqrt()
}

/// Whether the radius-r1 disk orthogonal to `axis1` at parameter t intersects
/// the solid cylinder c2.
fn disk_meets_cylinder(axis1: &Line3, r1: f64, t: f64, c2: &Cylinder) -> bool {
    disk_axis_distance(axis1, r1, t, c2) <= c2.radius + 1e-9
}

fn axis_core_interval(c_self: &Cylinder, c_other: &Cylinder, t_feasible: f64) -> Result<(f64, f64)> {
    let sin = c_self.axis.dir.cross(&c_other.axis.dir).norm();
    let mut reach = (c_self.radius + c_other.radius + 2.0) / sin.max(PARALLEL_TOL) + 4.0;
    let feasible = |t: f64| disk_meets_cylinder(&c_self.axis, c_self.radius, t, c_other);
    if !feasible(t_feasible) {
        return Err(Error::Geometry("no feasible axis parameter for the core".into()));
    }
    // Make sure the outer brackets really are infeasible.
    for _ in 0..8 {
        if !feasible(t_feasible + reach) && !feasible(t_feasible - reach) {
            break;
        }
        reach *= 2.0;
    }
    let endpoint = |sign: f64| -> f64 {
        let (mut lo, mut hi) = (t_feasible, t_feasible + sign * reach);
        // lo feasible, hi infeasible throughout.
        while (hi - lo).abs() > 1e-7 {
            let m = 0.5 * (lo + hi);
            if feasible(m) {
                lo = m;
            } else {
                hi = m;
            }
        }
        0.5 * (lo + hi)
    };
    Ok((endpoint(-1.0), endpoint(1.0)))
}

/// Extremes of the two axis parameters over C1 n C2, by bisection on the
/// "orthogonal disk still meets the other cylinder" predicate.
pub fn core_segment(c1: &Cylinder, c2: &Cylinder) -> Result<CoreSegment> {
    let sin = c1.axis.dir.cross(&c2.axis.dir).norm();
    if sin <= PARALLEL_TOL {
        return Err(Error::Geometry(format!("axes parallel (sin = {sin:.2e})")));
    }
    let (gap, t1, t2) = line_line_closest(&c1.axis, &c2.axis);
    if gap > c1.radius + c2.radius {
        return Err(Error::Geometry(format!(
            "cylinders disjoint (axis gap {gap:.6} > {})",
            c1.radius + c2.radius
        )));
    }
    // The midpoint of the closest-approach pair lies in both cylinders, so its
    // axis parameters are feasible starting points.
    let mid = (c1.axis.at(t1) + c2.axis.at(t2)) * 0.5;
    let tm1 = (mid - c1.axis.anchor).dot(&c1.axis.dir);
    let tm2 = (mid - c2.axis.anchor).dot(&c2.axis.dir);
    let (a1, b1) = axis_core_interval(c1, c2, tm1)?;
    let (a2, b2) = axis_core_interval(c2, c1, tm2)?;
    Ok(CoreSegment {
        x1: c1.axis.at(a1),
        y1: c1.axis.at(b1),
        x2: c2.axis.at(a2),
        y2: c2.axis.at(b2),
    })
}

// ---------------------------------------------------------------------------
// The tube lemma.

fn in_cylinder(p: P3, c: &Cylinder) -> bool {
    dist_point_line(p, &c.axis) <= c.radius + 1e-9
}

/// Parameter intervals (in the polyline's [0,1] clock) where the curve is
/// inside the ball, merged and sorted.
fn ball_occupancy(eta: &Polyline, center: P3, radius: f64) -> Vec<(f64, f64)> {
    let total = eta.total_length();
    let mut raw: Vec<(f64, f64)> = Vec::new();
    for k in 0..eta.vertices.len() - 1 {
        let (a, b) = (eta.vertices[k], eta.vertices[k + 1]);
        let d = b - a;
        let m = a - center;
        // |m + s d|^2 = radius^2, s in [0,1].
        let qa = d.norm_squared();
        let qb = 2.0 * m.dot(&d);
        let qc = m.norm_squared() - radius * radius;
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            continue;
        }
        let sq = disc.sqrt();
        let s_lo = ((-qb - sq) / (2.0 * qa)).clamp(0.0, 1.0);
        let s_hi = ((-qb + sq) / (2.0 * qa)).clamp(0.0, 1.0);
        if s_hi <= s_lo {
            continue;
        }
        let seg_len = d.norm();
        let t_lo = (eta.cum[k] + s_lo * seg_len) / total;
        let t_hi = (eta.cum[k] + s_hi * seg_len) / total;
        raw.push((t_lo, t_hi));
    }
    raw.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for iv in raw {
        match merged.last_mut() {
            Some(last) if iv.0 <= last.1 + 1e-12 => last.1 = last.1.max(iv.1),
            _ => merged.push(iv),
        }
    }
    merged
}

/// Complement of a sorted disjoint interval union within [0,1].
fn complement_intervals(occ: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut cursor = 0.0;
    for &(a, b) in occ {
        if a > cursor {
            out.push((cursor, a));
        }
        cursor = cursor.max(b);
    }
    if cursor < 1.0 {
        out.push((cursor, 1.0));
    }
    out
}

fn subcurve_within(eta: &Polyline, t1: f64, t2: f64, axis: &Line3, radius: f64) -> bool {
    // Distance to a line is convex along each straight segment, so the max
    // over the subcurve is attained at the cut points or interior vertices.
    let mut ts = vec![t1, t2];
    for k in 0..eta.vertices.len() {
        let tv = eta.vertex_param(k);
        if tv > t1 && tv < t2 {
            ts.push(tv);
        }
    }
    ts.iter().all(|&t| dist_point_line(eta.at(t), axis) <= radius + 1e-9)
}

/// Finds a straight tube of radius 4 containing a long piece of the curve:
/// returns an axis l and parameters t1 < t2 with dist(eta(t1), eta(t2)) >=
/// a0/100 and eta([t1,t2]) within distance 4 of l.
///
/// Case analysis mirrors the underlying proof: a curve inside a single
/// cylinder uses that axis; parallel overlapping cylinders use C1's axis
/// (everything is then within 2 + 1 + 1 <= 4 of it); otherwise the curve can
/// only switch cylinders near the core segment, so cutting out the radius-5
/// balls around the core endpoints leaves single-cylinder pieces, one of
/// which is long enough.
pub fn tube_from_two_cylinders(
    c1: &Cylinder,
    c2: &Cylinder,
    eta: &Polyline,
    a0: f64,
) -> Result<(Line3, f64, f64)> {
    // Membership precondition at vertices and midpoints.
    for &t in &eta.checkpoints() {
        let p = eta.at(t);
        if !in_cylinder(p, c1) && !in_cylinder(p, c2) {
            return Err(Error::Geometry(format!(
                "curve point {p:?} (t = {t:.4}) outside both cylinders"
            )));
        }
    }
    let span = (eta.at(1.0) - eta.at(0.0)).norm();
    if span < a0 / 10.0 - 1e-9 {
        return Err(Error::Geometry(format!("endpoint span {span} below a0/10 = {}", a0 / 10.0)));
    }

    let all_in = |c: &Cylinder| eta.checkpoints().iter().all(|&t| in_cylinder(eta.at(t), c));
    if all_in(c1) {
        return Ok((c1.axis, 0.0, 1.0));
    }
    if all_in(c2) {
        return Ok((c2.axis, 0.0, 1.0));
    }

    let sin = c1.axis.dir.cross(&c2.axis.dir).norm();
    let (gap, _, _) = line_line_closest(&c1.axis, &c2.axis);
    if gap > c1.radius + c2.radius {
        return Err(Error::Geometry(
            "curve straddles both cylinders but the cylinders are disjoint".into(),
        ));
    }
    if sin <= PARALLEL_TOL {
        // Parallel overlapping: everything is within gap + r2 <= 4 of axis 1.
        return Ok((c1.axis, 0.0, 1.0));
    }

    let core = core_segment(c1, c2)?;
    let mut occ = ball_occupancy(eta, core.x1, 5.0);
    occ.extend(ball_occupancy(eta, core.y1, 5.0));
    occ.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for iv in occ {
        match merged.last_mut() {
            Some(last) if iv.0 <= last.1 + 1e-12 => last.1 = last.1.max(iv.1),
            _ => merged.push(iv),
        }
    }
    let candidates = complement_intervals(&merged);

    for &(t1, t2) in &candidates {
        if (eta.at(t2) - eta.at(t1)).norm() < a0 / 100.0 {
            continue;
        }
        for axis in [&c1.axis, &c2.axis] {
            if subcurve_within(eta, t1, t2, axis, 4.0) {
                return Ok((*axis, t1, t2));
            }
        }
    }
    Err(Error::Geometry("no ball-avoiding subcurve satisfies the tube bounds".into()))
}

// ---------------------------------------------------------------------------
// Horizon scan.

#[derive(Debug, Clone, Copy)]
pub struct HorizonScan {
    /// Longest free segment found (capped when unbounded).
    pub max_len: f64,
    pub unbounded: bool,
    /// (direction angle, starting point) attaining the maximum.
    pub argmax: (f64, P2),
}

const HORIZON_CAP: f64 = 2e4;

/// Length of the contiguous piece of the line through `start` with direction
/// `dir` that stays inside B(boundary, padding) and contains `start`;
/// step-1 march with bisection refinement to 1e-3, capped at HORIZON_CAP.
fn free_length(start: P2, dir: P2, padding: f64) -> f64 {
    if dist_to_hex_boundary(start) > padding {
        return 0.0;
    }
    let reach = |sign: f64| -> f64 {
        let mut t = 0.0;
        loop {
            let next = t + 1.0;
            if next > HORIZON_CAP {
                return HORIZON_CAP;
            }
            if dist_to_hex_boundary(start + dir * (sign * next)) > padding {
                // Refine the exit point within (t, next].
                let (mut lo, mut hi) = (t, next);
                while hi - lo > 1e-3 {
                    let m = 0.5 * (lo + hi);
                    if dist_to_hex_boundary(start + dir * (sign * m)) > padding {
                        hi = m;
                    } else {
                        lo = m;
                    }
                }
                return 0.5 * (lo + hi);
            }
            t = next;
        }
    };
    reach(1.0) + reach(-1.0)
}

/// Scan for the longest straight free path inside B(boundary, padding):
/// `directions` angles uniform on [0, pi), starting points on a grid over the
/// fundamental domain of the tiling. A free length reaching 2e4 is reported
/// as unbounded.
pub fn horizon_scan(padding: f64, directions: usize, offsets: usize) -> Result<HorizonScan> {
    if directions < 360 || offsets < 100 {
        return Err(Error::Config(format!(
            "scan too coarse: need >= 360 directions and >= 100 offsets, got {directions}/{offsets}"
        )));
    }
    let tiling = HexTiling::default();
    let (u1, u2) = tiling.basis();
    let side = (offsets as f64).sqrt().ceil() as usize;
    let mut best = HorizonScan { max_len: 0.0, unbounded: false, argmax: (0.0, P2::zeros()) };
    for k in 0..directions {
        let th = k as f64 * std::f64::consts::PI / directions as f64;
        let dir = P2::new(th.cos(), th.sin());
        for a in 0..side {
            for b in 0..side {
                if a * side + b >= offsets {
                    break;
                }
                let start = u1 * (a as f64 / side as f64) + u2 * (b as f64 / side as f64);
                let len = free_length(start, dir, padding);
                if len > best.max_len {
                    best = HorizonScan {
                        max_len: len,
                        unbounded: len >= HORIZON_CAP,
                        argmax: (th, start),
                    };
                    if best.unbounded {
                        return Ok(best);
                    }
                }
            }
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Blocking check.

/// True iff the two cylinders alone fail to connect S(x0, a0/10) to the
/// circle of radius a0 through their traces on H.
pub fn blocking_check(c1: &Cylinder, c2: &Cylinder, x0: P2, a0: f64, h: f64) -> Result<bool> {
    if a0 < 1e5 {
        return Err(Error::Config(format!(
            "blocking check needs a0 >= 1e5 (the horizon must be dominated), got {a0}"
        )));
    }
    let s = LineSample {
        u: 0.0,
        window: Window::disk_slab(x0, a0),
        lines: vec![c1.axis, c2.axis],
        seed: 0,
    };
    Ok(!obstacle_crossing(&s, x0, a0, h)?)
}

/// Largest deviation |F(q) - q| over axis samples that sit near the surface
/// (within vertical distance 2 of the lifted graph); F fixes the horizontal
/// coordinates, so the deviation is the height mismatch.
pub fn max_f_deviation_on_axis(l: &Line3, t1: f64, t2: f64, samples: usize) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..=samples {
        let t = t1 + (t2 - t1) * k as f64 / samples as f64;
        let q = l.at(t);
        let lifted = lift_to_h(P2::new(q.x, q.y));
        if (q.z - lifted.z).abs() <= 2.0 {
            worst = worst.max((map_f(q) - q).norm());
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// Corpus files: one instance per line, whitespace-separated
//   anchor1(3) dir1(3) radius1 anchor2(3) dir2(3) radius2 k v1(3) ... vk(3)

#[derive(Debug, Clone)]
pub struct TubeInstance {
    pub c1: Cylinder,
    pub c2: Cylinder,
    pub eta: Polyline,
}

pub fn format_instance(inst: &TubeInstance) -> String {
    let mut s = String::new();
    for c in [&inst.c1, &inst.c2] {
        let (a, d) = (c.axis.anchor, c.axis.dir);
        write!(s, "{} {} {} {} {} {} {} ", a.x, a.y, a.z, d.x, d.y, d.z, c.radius).unwrap();
    }
    write!(s, "{}", inst.eta.vertices.len()).unwrap();
    for v in &inst.eta.vertices {
        write!(s, " {} {} {}", v.x, v.y, v.z).unwrap();
    }
    s
}

pub fn parse_instance(line: &str) -> Result<TubeInstance> {
    let nums: Vec<f64> = line
        .split_whitespace()
        .map(|w| w.parse::<f64>().map_err(|e| Error::Config(format!("bad number '{w}': {e}"))))
        .collect::<Result<_>>()?;
    if nums.len() < 15 {
        return Err(Error::Config(format!("corpus line too short ({} fields)", nums.len())));
    }
    let cyl = |o: usize| -> Result<Cylinder> {
        Cylinder::with_radius(
            Line3::new(
                P3::new(nums[o], nums[o + 1], nums[o + 2]),
                P3::new(nums[o + 3], nums[o + 4], nums[o + 5]),
            )?,
            nums[o + 6],
        )
    };
    let (c1, c2) = (cyl(0)?, cyl(7)?);
    let k = nums[14] as usize;
    if nums.len() != 15 + 3 * k {
        return Err(Error::Config(format!(
            "corpus line declares {k} vertices but carries {} fields",
            nums.len() - 15
        )));
    }
    let vertices = (0..k)
        .map(|i| P3::new(nums[15 + 3 * i], nums[16 + 3 * i], nums[17 + 3 * i]))
        .collect();
    Ok(TubeInstance { c1, c2, eta: Polyline::new(vertices)? })
}

pub fn parse_corpus(text: &str) -> Result<Vec<TubeInstance>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(parse_instance)
        .collect()
}

// ---------------------------------------------------------------------------
// Random instance generators (shared by tests, corpora and the harness).

/// Two intersecting non-parallel unit cylinders near the origin.
pub fn random_intersecting_pair(rng: &mut impl Rng) -> (Cylinder, Cylinder) {
    loop {
        let rand_dir = |rng: &mut dyn RngCore| loop {
            let v = P3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                break v / n;
            }
        };
        let d1 = rand_dir(rng);
        let d2 = rand_dir(rng);
        let sin = d1.cross(&d2).norm();
        if sin <= 1e-3 {
            continue;
        }
        let p1 = P3::new(
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
        );
        let l1 = Line3::new(p1, d1).unwrap();
        // Offset the second axis by less than 2 along the common perpendicular
        // direction so the unit cylinders are guaranteed to intersect.
        let perp = d1.cross(&d2).normalize();
        let shift = rng.gen_range(-1.9..1.9);
        let l2 = Line3::new(p1 + perp * shift, d2).unwrap();
        return (Cylinder::unit(l1), Cylinder::unit(l2));
    }
}

/// A random polyline alternating between the two cylinders: it walks in from
/// far out on C1, hops through the intersection, and walks out along C2
/// (optionally bouncing back and forth a few times near the core). Each
/// segment has both endpoints in one cylinder, so the whole segment lies in
/// the union by convexity.
pub fn random_tube_instance(a0: f64, rng: &mut impl Rng) -> TubeInstance {
    let (c1, c2) = random_intersecting_pair(rng);
    let (_, t1, t2) = line_line_closest(&c1.axis, &c2.axis);
    let hop = (c1.axis.at(t1) + c2.axis.at(t2)) * 0.5; // in both cylinders
    let reach = a0 / 10.0;

    let wiggle_along = |c: &Cylinder, t_from: f64, t_to: f64, rng: &mut dyn RngCore| -> Vec<P3> {
        let steps = rng.gen_range(2..6);
        (0..=steps)
            .map(|k| {
                let t = t_from + (t_to - t_from) * k as f64 / steps as f64;
                let (e1, e2) = {
                    let pick = if c.axis.dir.x.abs() < 0.9 {
                        P3::new(1.0, 0.0, 0.0)
                    } else {
                        P3::new(0.0, 1.0, 0.0)
                    };
                    let e1 = c.axis.dir.cross(&pick).normalize();
                    (e1, c.axis.dir.cross(&e1))
                };
                let rho = rng.gen_range(0.0..0.9);
                let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                c.axis.at(t) + e1 * (rho * phi.cos()) + e2 * (rho * phi.sin())
            })
            .collect()
    };

    let mut vertices = wiggle_along(&c1, t1 - reach, t1 - 2.0, rng);
    vertices.push(hop);
    // Optional bounce back into C1 and out again.
    if rng.gen::<bool>() {
        vertices.extend(wiggle_along(&c1, t1 - 1.5, t1 - 0.5, rng));
        vertices.push(hop);
    }
    // Walk out along C2 on whichever side moves away from the start, so the
    // endpoint span stays well above a0/10.
    let start = vertices[0];
    let sign = if (c2.axis.at(t2 + reach) - start).norm() >= (c2.axis.at(t2 - reach) - start).norm()
    {
        1.0
    } else {
        -1.0
    };
    vertices.extend(wiggle_along(&c2, t2 + sign * 2.0, t2 + sign * reach, rng));
    TubeInstance { c1, c2, eta: Polyline::new(vertices).unwrap() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn polyline_parametrization() {
        let pl = Polyline::new(vec![
            P3::new(0.0, 0.0, 0.0),
            P3::new(1.0, 0.0, 0.0),
            P3::new(1.0, 3.0, 0.0),
        ])
        .unwrap();
        assert_eq!(pl.total_length(), 4.0);
        assert_eq!(pl.at(0.25), P3::new(1.0, 0.0, 0.0));
        assert_eq!(pl.at(1.0), P3::new(1.0, 3.0, 0.0));
        assert!(Polyline::new(vec![P3::zeros()]).is_err());
        assert!(Polyline::new(vec![P3::zeros(), P3::zeros()]).is_err());
    }

    fn unit_x() -> Cylinder {
        Cylinder::unit(Line3::new(P3::zeros(), P3::new(1.0, 0.0, 0.0)).unwrap())
    }

    fn unit_y() -> Cylinder {
        Cylinder::unit(Line3::new(P3::zeros(), P3::new(0.0, 1.0, 0.0)).unwrap())
    }

    #[test]
    fn core_of_perpendicular_cylinders() {
        // x^2 + z^2 <= 1 and y^2 + z^2 <= 1: each axis parameter spans [-1,1].
        let core = core_segment(&unit_x(), &unit_y()).unwrap();
        for (p, expect) in [
            (core.x1, P3::new(-1.0, 0.0, 0.0)),
            (core.y1, P3::new(1.0, 0.0, 0.0)),
            (core.x2, P3::new(0.0, -1.0, 0.0)),
            (core.y2, P3::new(0.0, 1.0, 0.0)),
        ] {
            assert!((p - expect).norm() < 1e-5, "{p:?} != {expect:?}");
        }
    }

    #[test]
    fn core_matches_dense_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let (c1, c2) = random_intersecting_pair(&mut rng);
            let core = core_segment(&c1, &c2).unwrap();
            // Dense-sample the intersection; every point's axis-1 parameter
            // must fall inside the computed interval (+tolerance), and the
            // extremes must be approached.
            let lo = (core.x1 - c1.axis.anchor).dot(&c1.axis.dir);
            let hi = (core.y1 - c1.axis.anchor).dot(&c1.axis.dir);
            let mut seen_lo = f64::INFINITY;
            let mut seen_hi = f64::NEG_INFINITY;
            for _ in 0..20000 {
                let t = rng.gen_range(lo - 1.0..hi + 1.0);
                let (e1, e2) = {
                    let pick = if c1.axis.dir.x.abs() < 0.9 {
                        P3::new(1.0, 0.0, 0.0)
                    } else {
                        P3::new(0.0, 1.0, 0.0)
                    };
                    let e1 = c1.axis.dir.cross(&pick).normalize();
                    (e1, c1.axis.dir.cross(&e1))
                };
                let rho = rng.gen_range(0.0..1.0f64).sqrt();
                let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                let p = c1.axis.at(t) + e1 * (rho * phi.cos()) + e2 * (rho * phi.sin());
                if dist_point_line(p, &c2.axis) <= c2.radius {
                    seen_lo = seen_lo.min(t);
                    seen_hi = seen_hi.max(t);
                    assert!(
                        t >= lo - 1e-3 && t <= hi + 1e-3,
                        "sample t = {t} outside core interval [{lo}, {hi}]"
                    );
                }
            }
            assert!(seen_lo - lo < 0.3 && hi - seen_hi < 0.3, "core endpoints not approached");
        }
    }

    #[test]
    fn core_hausdorff_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let (c1, c2) = random_intersecting_pair(&mut rng);
            let core = core_segment(&c1, &c2).unwrap();
            let hs = hausdorff_segments((core.x1, core.y1), (core.x2, core.y2));
            assert!(hs <= 2.0 + 1e-6, "segment Hausdorff {hs} > 2");
            let he = hausdorff_points(&[core.x1, core.y1], &[core.x2, core.y2]);
            assert!(he <= 2.0 * std::f64::consts::SQRT_2 + 1e-6, "endpoint Hausdorff {he}");
        }
    }

    #[test]
    fn core_rejects_parallel_and_disjoint() {
        let c1 = unit_x();
        let shifted =
            Cylinder::unit(Line3::new(P3::new(0.0, 0.5, 0.0), P3::new(1.0, 0.0, 0.0)).unwrap());
        assert!(core_segment(&c1, &shifted).is_err());
        let far =
            Cylinder::unit(Line3::new(P3::new(0.0, 0.0, 5.0), P3::new(0.0, 1.0, 0.0)).unwrap());
        assert!(core_segment(&c1, &far).is_err());
    }

    #[test]
    fn core_endpoints_stable_under_refinement() {
        // Tightening the bisection by 100x moves endpoints by < 1e-5.
        let (c1, c2) = (unit_x(), unit_y());
        let core = core_segment(&c1, &c2).unwrap();
        // The analytic endpoints are at parameter +-1 exactly.
        assert!((core.x1.x + 1.0).abs() < 1e-5 && (core.y1.x - 1.0).abs() < 1e-5);
    }

    #[test]
    fn tube_single_cylinder_case() {
        let c1 = unit_x();
        let c2 = unit_y();
        let eta = Polyline::new(vec![P3::new(-30.0, 0.2, 0.0), P3::new(30.0, -0.4, 0.1)]).unwrap();
        let (l, t1, t2) = tube_from_two_cylinders(&c1, &c2, &eta, 200.0).unwrap();
        assert_eq!((t1, t2), (0.0, 1.0));
        assert_eq!(l.dir, c1.axis.dir);
    }

    #[test]
    fn tube_parallel_case() {
        let c1 = unit_x();
        let c2 =
            Cylinder::unit(Line3::new(P3::new(0.0, 1.5, 0.0), P3::new(1.0, 0.0, 0.0)).unwrap());
        // Zig-zag between the overlapping parallel cylinders.
        let mut v = Vec::new();
        for k in 0..=20 {
            let x = -25.0 + 50.0 * k as f64 / 20.0;
            let y = if k % 2 == 0 { 0.0 } else { 1.5 };
            v.push(P3::new(x, y, 0.0));
        }
        let eta = Polyline::new(v).unwrap();
        let (l, t1, t2) = tube_from_two_cylinders(&c1, &c2, &eta, 300.0).unwrap();
        assert_eq!(l.dir, c1.axis.dir);
        for k in 0..=100 {
            let t = t1 + (t2 - t1) * k as f64 / 100.0;
            assert!(dist_point_line(eta.at(t), &l) <= 4.0 + 1e-9);
        }
    }

    #[test]
    fn tube_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a0 = 2000.0;
        for i in 0..500 {
            let inst = random_tube_instance(a0, &mut rng);
            let (l, t1, t2) = tube_from_two_cylinders(&inst.c1, &inst.c2, &inst.eta, a0)
                .unwrap_or_else(|e| panic!("instance {i}: {e}"));
            let sep = (inst.eta.at(t2) - inst.eta.at(t1)).norm();
            assert!(sep >= a0 / 100.0, "instance {i}: separation {sep}");
            for k in 0..=200 {
                let t = t1 + (t2 - t1) * k as f64 / 200.0;
                let d = dist_point_line(inst.eta.at(t), &l);
                assert!(d <= 4.0 + 1e-6, "instance {i}: point at dist {d} from tube axis");
            }
        }
    }

    #[test]
    fn tube_rejects_bad_input() {
        let c1 = unit_x();
        let c2 = unit_y();
        // Curve point far outside both cylinders.
        let eta =
            Polyline::new(vec![P3::new(-30.0, 0.0, 0.0), P3::new(0.0, 0.0, 50.0)]).unwrap();
        assert!(tube_from_two_cylinders(&c1, &c2, &eta, 200.0).is_err());
        // Endpoints too close together.
        let eta2 = Polyline::new(vec![P3::new(-1.0, 0.0, 0.0), P3::new(1.0, 0.0, 0.0)]).unwrap();
        assert!(tube_from_two_cylinders(&c1, &c2, &eta2, 200.0).is_err());
    }

    #[test]
    fn horizon_full_cover_is_unbounded() {
        // Padding beyond the apothem covers the whole plane.
        let scan = horizon_scan(1200.0, 360, 100).unwrap();
        assert!(scan.unbounded);
    }

    #[test]
    fn horizon_scan_coarse() {
        let scan = horizon_scan(20.0, 360, 100).unwrap();
        assert!(!scan.unbounded);
        assert!(scan.max_len <= 1e4, "free length {} exceeds the horizon cap", scan.max_len);
        // Even a coarse scan finds runs comparable to an edge.
        assert!(scan.max_len >= 500.0, "coarse scan found only {}", scan.max_len);
    }

    #[test]
    fn horizon_monotone_in_padding() {
        let a = horizon_scan(10.0, 360, 100).unwrap();
        let b = horizon_scan(20.0, 360, 100).unwrap();
        assert!(b.max_len >= a.max_len);
    }

    #[test]
    fn horizon_rejects_coarse_grids() {
        assert!(horizon_scan(20.0, 100, 100).is_err());
        assert!(horizon_scan(20.0, 360, 50).is_err());
    }

    #[test]
    fn edge_parallel_free_run() {
        // A line hugging a hex edge midline runs the full edge length.
        let verts = HexTiling::default().face_vertices(P2::zeros());
        let (a, b) = (verts[0], verts[1]);
        let mid = (a + b) * 0.5;
        let dir = (b - a).normalize();
        let len = free_length(mid, dir, 20.0);
        assert!(len >= (b - a).norm() - 1.0, "free run {len} shorter than the edge");
        assert!(len <= 1e4);
    }

    #[test]
    fn blocking_trivial_cases() {
        let vert = |x: f64, y: f64| {
            Cylinder::unit(Line3::new(P3::new(x, y, 0.0), P3::new(0.0, 0.0, 1.0)).unwrap())
        };
        let (c1, c2) = (vert(15_000.0, 0.0), vert(0.0, 15_000.0));
        assert!(blocking_check(&c1, &c2, P2::zeros(), 1e5, 0.5).unwrap());
        assert!(blocking_check(&c1, &c2, P2::zeros(), 5e4, 0.5).is_err());
    }

    #[test]
    fn blocking_edge_hugging_pair() {
        let verts = HexTiling::default().face_vertices(P2::zeros());
        let edge = |a: P2, b: P2| {
            let mid = (a + b) * 0.5;
            let d = (b - a).normalize();
            Cylinder::unit(
                Line3::new(P3::new(mid.x, mid.y, 0.5), P3::new(d.x, d.y, 0.0)).unwrap(),
            )
        };
        let c1 = edge(verts[0], verts[1]);
        let c2 = edge(verts[1], verts[2]);
        assert!(blocking_check(&c1, &c2, P2::zeros(), 1e5, 0.5).unwrap());
        // Their combined trace is short, and F barely moves axis points that
        // sit near the surface.
        assert!(max_f_deviation_on_axis(&c1.axis, -600.0, 600.0, 400) <= 10.0);
    }

    #[test]
    fn corpus_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let inst = random_tube_instance(500.0, &mut rng);
        let line = format_instance(&inst);
        let back = parse_instance(&line).unwrap();
        assert_eq!(back.eta.vertices.len(), inst.eta.vertices.len());
        assert!((back.c1.axis.anchor - inst.c1.axis.anchor).norm() < 1e-12);
        assert!((back.eta.vertices[3] - inst.eta.vertices[3]).norm() < 1e-12);
        let corpus = format!("# comment\n{line}\n\n{line}\n");
        assert_eq!(parse_corpus(&corpus).unwrap().len(), 2);
        assert!(parse_instance("1 2 3").is_err());
    }
}
