// Exact geometric primitives: lines and cylinders in R^3, the hexagonal
// tiling distance field, the periodic surface H and the flattening map F.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, GEOM_TOL};

pub type P2 = Vector2<f64>;
pub type P3 = Vector3<f64>;

/// A line in R^3 in canonical form: `anchor` is the point closest to the
/// origin (so anchor·dir = 0) and `dir` is unit length with its first
/// nonzero coordinate positive (directions are only defined mod sign).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line3 {
    pub anchor: P3,
    pub dir: P3,
}

impl Line3 {
    /// Build a canonical line through `point` with direction `dir`.
    pub fn new(point: P3, dir: P3) -> Result<Line3> {
        let norm = dir.norm();
        if !(norm > GEOM_TOL) || !norm.is_finite() {
            return Err(Error::Geometry(format!(
                "line direction too short or not finite: {dir:?}"
            )));
        }
        let mut d = dir / norm;
        // Orient so the first nonzero coordinate is positive.
        let flip = if d.x != 0.0 {
            d.x < 0.0
        } else if d.y != 0.0 {
            d.y < 0.0
        } else {
            d.z < 0.0
        };
        if flip {
            d = -d;
        }
        let anchor = point - d * point.dot(&d);
        Ok(Line3 { anchor, dir: d })
    }

    /// Point at parameter `t` (arc length from the anchor).
    pub fn at(&self, t: f64) -> P3 {
        self.anchor + self.dir * t
    }

    pub fn is_canonical(&self) -> bool {
        (self.dir.norm() - 1.0).abs() <= 1e-12 && self.anchor.dot(&self.dir).abs() <= GEOM_TOL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub axis: Line3,
    pub radius: f64,
}

impl Cylinder {
    /// Unit-radius cylinder around `axis` (the default throughout).
    pub fn unit(axis: Line3) -> Cylinder {
        Cylinder { axis, radius: 1.0 }
    }

    pub fn with_radius(axis: Line3, radius: f64) -> Result<Cylinder> {
        if !(radius > 0.0) {
            return Err(Error::Geometry(format!("radius must be positive: {radius}")));
        }
        Ok(Cylinder { axis, radius })
    }
}

pub fn dist_point_line(p: P3, l: &Line3) -> f64 {
    // |(p-a) x d| with unit d; cheaper and better conditioned than the
    // projection form for nearly-on-line points.
    (p - l.anchor).cross(&l.dir).norm()
}

pub fn closest_point_on_line(p: P3, l: &Line3) -> P3 {
    l.anchor + l.dir * (p - l.anchor).dot(&l.dir)
}

pub fn cylinder_contains(c: &Cylinder, p: P3) -> bool {
    dist_point_line(p, &c.axis) <= c.radius
}

/// Hexagonal tiling of the plane with faces of the given period: face
/// centers sit on the lattice period·(n + m·e^{iπ/3}); the apothem (distance
/// from a center to the face boundary ℋ) is period/2.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HexTiling {
    pub period: f64,
}

pub const DEFAULT_PERIOD: f64 = 2000.0;

impl Default for HexTiling {
    fn default() -> Self {
        HexTiling { period: DEFAULT_PERIOD }
    }
}

impl HexTiling {
    pub fn new(period: f64) -> Result<HexTiling> {
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::Geometry(format!("period must be positive: {period}")));
        }
        Ok(HexTiling { period })
    }

    pub fn apothem(&self) -> f64 {
        self.period / 2.0
    }

    /// Circumradius of a face (center-to-vertex distance).
    pub fn circumradius(&self) -> f64 {
        self.period / 3.0f64.sqrt()
    }

    /// Lattice basis vectors of the face centers.
    pub fn basis(&self) -> (P2, P2) {
        let p = self.period;
        (P2::new(p, 0.0), P2::new(p / 2.0, p * 3.0f64.sqrt() / 2.0))
    }

    /// Face center nearest to `x`.
    pub fn nearest_center(&self, x: P2) -> P2 {
        let p = self.period;
        let sq3 = 3.0f64.sqrt();
        // Fractional lattice coordinates: x = a*u1 + b*u2.
        let b = x.y / (p * sq3 / 2.0);
        let a = (x.x - p * b / 2.0) / p;
        let (u1, u2) = self.basis();
        let mut best = P2::zeros();
        let mut best_d2 = f64::INFINITY;
        for dn in -1..=2 {
            for dm in -1..=2 {
                let c = u1 * (a.floor() + dn as f64) + u2 * (b.floor() + dm as f64);
                let d2 = (x - c).norm_squared();
                if d2 < best_d2 {
                    best_d2 = d2;
                    best = c;
                }
            }
        }
        best
    }

    /// Exact distance from `x` to the tiling boundary ℋ: the minimum of the
    /// perpendicular distances to the bisector lines separating the nearest
    /// face center from its six lattice neighbors.
    pub fn dist_to_boundary(&self, x: P2) -> f64 {
        let c = self.nearest_center(x);
        let d = x - c;
        // For neighbor offset g the bisector distance is
        // (|g|^2 - 2 d·g) / (2|g|) = period/2 - (d·g)/(2·period)·2 with |g| = period.
        // Minimizing over ±g pairs keeps only the largest |d·g|.
        let p = self.period;
        let sq3 = 3.0f64.sqrt();
        let g1 = P2::new(p, 0.0);
        let g2 = P2::new(p / 2.0, p * sq3 / 2.0);
        let g3 = P2::new(p / 2.0, -p * sq3 / 2.0);
        let m = d.dot(&g1).abs().max(d.dot(&g2).abs()).max(d.dot(&g3).abs());
        (p / 2.0 - m / p).max(0.0)
    }

    /// Vertices of the face centered at `center`, counterclockwise.
    pub fn face_vertices(&self, center: P2) -> [P2; 6] {
        let r = self.circumradius();
        let mut v = [P2::zeros(); 6];
        for (k, out) in v.iter_mut().enumerate() {
            let ang = std::f64::consts::FRAC_PI_6 + std::f64::consts::FRAC_PI_3 * k as f64;
            *out = center + P2::new(r * ang.cos(), r * ang.sin());
        }
        v
    }
}

/// The periodic surface H: the graph of x ↦ dist(x, ℋ) over the plane,
/// contained in the slab R² × [0, period/2].
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct SurfaceH {
    pub tiling: HexTiling,
}

impl SurfaceH {
    pub fn height(&self, x: P2) -> f64 {
        self.tiling.dist_to_boundary(x)
    }

    pub fn lift(&self, x: P2) -> P3 {
        P3::new(x.x, x.y, self.height(x))
    }

    /// F(p) = (π(p), height(π(p))): retraction of R³ onto H, √2-Lipschitz.
    pub fn map_f(&self, p: P3) -> P3 {
        self.lift(project(p))
    }
}

/// Distance field convenience on the default tiling.
pub fn dist_to_hex_boundary(x: P2) -> f64 {
    HexTiling::default().dist_to_boundary(x)
}

pub fn lift_to_h(x: P2) -> P3 {
    SurfaceH::default().lift(x)
}

pub fn project(p: P3) -> P2 {
    P2::new(p.x, p.y)
}

pub fn map_f(p: P3) -> P3 {
    SurfaceH::default().map_f(p)
}


#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    fn coord() -> impl Strategy<Value = f64> {
        -3000.0..3000.0f64
    }

    proptest! {
        // The point-line distance must not depend on how the line was handed
        // in: re-anchoring along the axis and flipping the direction give the
        // same canonical line.
        #[test]
        fn line_distance_ignores_parameterization(
            px in coord(), py in coord(), pz in coord(),
            ax in coord(), ay in coord(), az in coord(),
            dx in -1.0..1.0f64, dy in -1.0..1.0f64, dz in -1.0..1.0f64,
            shift in -500.0..500.0f64, flip: bool,
        ) {
            let d = P3::new(dx, dy, dz);
            prop_assume!(d.norm() > 1e-3);
            let p = P3::new(px, py, pz);
            let a = P3::new(ax, ay, az);
            let l1 = Line3::new(a, d).unwrap();
            let l2 = Line3::new(a + d * shift, if flip { -d } else { d }).unwrap();
            let (d1, d2) = (dist_point_line(p, &l1), dist_point_line(p, &l2));
            prop_assert!((d1 - d2).abs() <= 1e-6 * (1.0 + d1));
        }

        // The hexagon-boundary distance field has the lattice period and
        // stays within [0, apothem].
        #[test]
        fn hex_field_is_periodic_and_bounded(
            x in coord(), y in coord(), n in -3i32..=3, m in -3i32..=3,
        ) {
            let t = HexTiling::default();
            let (u1, u2) = t.basis();
            let p = P2::new(x, y);
            let d0 = t.dist_to_boundary(p);
            let d1 = t.dist_to_boundary(p + u1 * n as f64 + u2 * m as f64);
            prop_assert!((d0 - d1).abs() <= 1e-6);
            prop_assert!((0.0..=t.apothem() + 1e-9).contains(&d0));
        }

        // Lifting to the surface and projecting back is the identity on the
        // ground plane, and the lifted height equals the distance field.
        #[test]
        fn lift_project_roundtrip(x in coord(), y in coord()) {
            let p = P2::new(x, y);
            let lifted = lift_to_h(p);
            prop_assert!((project(lifted) - p).norm() <= 1e-9);
            prop_assert!((lifted.z - dist_to_hex_boundary(p)).abs() <= 1e-9);
        }
    }
}
