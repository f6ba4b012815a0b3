// Rasterized cylinder traces on the periodic surface H (and on the plane
// z=0), crossing events, dual circuits and vacant-cluster statistics.
//
// Conventions shared by everything here:
// - cells live on a global integer grid: cell (i,j) at resolution h has
//   center ((i+0.5)h, (j+0.5)h), so traces computed independently are
//   automatically on a common grid;
// - a cell is occupied iff the exact membership predicate holds at its
//   center (center-point occupancy, no dilation);
// - vacancy uses 4-connectivity, obstacles use 8-connectivity (the standard
//   planar duality pairing).
//
// Windows of radius ~1e5 cannot be rasterized densely; obstacle traces are
// marked by marching along the projected axis and only materializing cells
// in a narrow strip. The marcher exploits that x -> (x, height(x)) is
// sqrt(2)-Lipschitz: when the lifted centerline is far from the cylinder it
// can jump ahead proportionally to the clearance.

use std::collections::{HashMap, HashSet};
use std::io::Write;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::geom::{dist_point_line, Cylinder, Line3, SurfaceH, P2, P3};
use crate::lines::{LineSample, Window};
use crate::{Error, Result};

/// The surface a trace is computed on.
#[derive(Debug, Clone, Copy)]
pub enum Surface {
    /// The periodic rough surface: graph of the hex-boundary distance.
    H(SurfaceH),
    /// The flat plane z = 0.
    Plane,
}

impl Surface {
    pub fn h_default() -> Surface {
        Surface::H(SurfaceH::default())
    }

    pub fn height(&self, x: P2) -> f64 {
        match self {
            Surface::H(s) => s.height(x),
            Surface::Plane => 0.0,
        }
    }

    pub fn lift(&self, x: P2) -> P3 {
        P3::new(x.x, x.y, self.height(x))
    }

    /// Upper bound on the surface height (0 for the plane).
    pub fn zmax(&self) -> f64 {
        match self {
            Surface::H(s) => s.tiling.apothem(),
            Surface::Plane => 0.0,
        }
    }
}

/// Dense occupancy grid over a finite rectangle.
#[derive(Debug, Clone)]
pub struct GridMask {
    /// Global cell index of the lower-left cell.
    pub i0: i64,
    pub j0: i64,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    pub occupied: Vec<bool>,
}

impl GridMask {
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn center(&self, i: usize, j: usize) -> P2 {
        cell_center(self.i0 + i as i64, self.j0 + j as i64, self.h)
    }

    /// Lower-left corner of the covered rectangle.
    pub fn origin(&self) -> P2 {
        P2::new(self.i0 as f64 * self.h, self.j0 as f64 * self.h)
    }

    /// Dump as a binary PGM (P5) image; occupied cells black.
    pub fn write_pgm(&self, path: &std::path::Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(f, "P5\n{} {}\n255\n", self.nx, self.ny)?;
        // Top image row = highest j so the picture is not mirrored.
        for j in (0..self.ny).rev() {
            let row: Vec<u8> = (0..self.nx)
                .map(|i| if self.occupied[self.idx(i, j)] { 0 } else { 255 })
                .collect();
            f.write_all(&row)?;
        }
        Ok(())
    }
}

pub fn cell_center(i: i64, j: i64, h: f64) -> P2 {
    P2::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h)
}

pub fn cell_of(p: P2, h: f64) -> (i64, i64) {
    ((p.x / h).floor() as i64, (p.y / h).floor() as i64)
}

/// March along the projected axis of `c` and call `visit(i, j)` for every
/// global cell in `region` (disk) whose center's surface lift lies in `c`.
/// Cells are visited at most once per call.
fn mark_cylinder(
    c: &Cylinder,
    surf: &Surface,
    h: f64,
    region_center: P2,
    region_radius: f64,
    mut visit: impl FnMut(i64, i64),
) {
    let rad = c.radius;
    let reach = rad + 3.0 * h; // strip half-width (rad + 2h) plus sampling slack
    let skip = std::f64::consts::SQRT_2 * reach;
    let mut seen: HashSet<(i64, i64)> = HashSet::new();

    let scan_square = |p: P2, seen: &mut HashSet<(i64, i64)>, visit: &mut dyn FnMut(i64, i64)| {
        let (ilo, _) = cell_of(P2::new(p.x - reach, p.y - reach), h);
        let (ihi, _) = cell_of(P2::new(p.x + reach, p.y + reach), h);
        let (_, jlo) = cell_of(P2::new(p.x - reach, p.y - reach), h);
        let (_, jhi) = cell_of(P2::new(p.x + reach, p.y + reach), h);
        for i in ilo..=ihi {
            for j in jlo..=jhi {
                if !seen.insert((i, j)) {
                    continue;
                }
                let x = cell_center(i, j, h);
                if (x - region_center).norm() > region_radius {
                    continue;
                }
                if dist_point_line(surf.lift(x), &c.axis) <= rad {
                    visit(i, j);
                }
            }
        }
    };

    let dxy = Vector2::new(c.axis.dir.x, c.axis.dir.y);
    let n2 = dxy.norm();
    if n2 < 1e-6 {
        // Near-vertical axis: the trace sits in a disk around the projection.
        let p = P2::new(c.axis.anchor.x, c.axis.anchor.y);
        if (p - region_center).norm() > region_radius + reach {
            return;
        }
        scan_square(p, &mut seen, &mut visit);
        return;
    }

    let e = dxy / n2;
    let axy = P2::new(c.axis.anchor.x, c.axis.anchor.y);
    let slope = c.axis.dir.z / n2; // dz per unit of projected arc length

    // Clip the marched parameter range to the region disk (inflated by the
    // strip width)...
    let rel = axy - region_center;
    let rr = region_radius + reach + h;
    let b = e.dot(&rel);
    let disc = b * b - (rel.norm_squared() - rr * rr);
    if disc <= 0.0 {
        return;
    }
    let mut tlo = -b - disc.sqrt();
    let mut thi = -b + disc.sqrt();

    // ...and to the slab where the cylinder can reach the surface.
    let zlo = -rad - 1.0;
    let zhi = surf.zmax() + rad + 1.0;
    if slope.abs() < 1e-12 {
        if c.axis.anchor.z < zlo || c.axis.anchor.z > zhi {
            return;
        }
    } else {
        // Cells near track position t can be occupied by axis points up to
        // ~(reach + rad) away along the track, so pad the slab interval.
        let pad = reach + rad + 1.0 + h;
        let t1 = (zlo - c.axis.anchor.z) / slope;
        let t2 = (zhi - c.axis.anchor.z) / slope;
        tlo = tlo.max(t1.min(t2) - pad);
        thi = thi.min(t1.max(t2) + pad);
        if tlo > thi {
            return;
        }
    }

    let mut t = tlo;
    while t <= thi {
        let p = axy + e * t;
        let clearance = dist_point_line(surf.lift(p), &c.axis) - rad;
        if clearance > skip {
            // The lift of the centerline moves at speed <= sqrt(2), so no
            // cell can be occupied before the clearance has had distance to
            // shrink back to `skip`.
            t += h.max((clearance - skip) / std::f64::consts::SQRT_2);
        } else {
            scan_square(p, &mut seen, &mut visit);
            t += h;
        }
    }
}

/// One 8-connected component of a single cylinder's trace on the surface.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceComponent {
    pub cylinder_id: usize,
    pub cells: Vec<(i64, i64)>,
    /// (imin, jmin, imax, jmax)
    pub bbox: (i64, i64, i64, i64),
}

const NBR8: [(i64, i64); 8] =
    [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];
const NBR4: [(i64, i64); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

fn split_components(cells: HashSet<(i64, i64)>, cylinder_id: usize) -> Vec<TraceComponent> {
    let mut remaining = cells;
    let mut out = Vec::new();
    while let Some(&start) = remaining.iter().next() {
        remaining.remove(&start);
        let mut comp = vec![start];
        let mut stack = vec![start];
        while let Some((i, j)) = stack.pop() {
            for (di, dj) in NBR8 {
                let q = (i + di, j + dj);
                if remaining.remove(&q) {
                    comp.push(q);
                    stack.push(q);
                }
            }
        }
        let bbox = comp.iter().fold((i64::MAX, i64::MAX, i64::MIN, i64::MIN), |b, &(i, j)| {
            (b.0.min(i), b.1.min(j), b.2.max(i), b.3.max(j))
        });
        out.push(TraceComponent { cylinder_id, cells: comp, bbox });
    }
    out
}

/// Rasterize the trace of one cylinder on `surf` clipped to the disk region,
/// split into 8-connected components.
pub fn trace_cylinder_on(
    l: &Line3,
    surf: &Surface,
    region_center: P2,
    region_radius: f64,
    h: f64,
    cylinder_id: usize,
) -> Vec<TraceComponent> {
    let c = Cylinder::unit(*l);
    let mut cells = HashSet::new();
    mark_cylinder(&c, surf, h, region_center, region_radius, |i, j| {
        cells.insert((i, j));
    });
    split_components(cells, cylinder_id)
}

/// Trace on the default surface H.
pub fn trace_cylinder_on_h(
    l: &Line3,
    region_center: P2,
    region_radius: f64,
    h: f64,
) -> Vec<TraceComponent> {
    trace_cylinder_on(l, &Surface::h_default(), region_center, region_radius, h, 0)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> UnionFind {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

/// Trace components plus two virtual terminals (inner disk / outer circle),
/// with adjacency = shared or 8-adjacent cells.
pub struct ComponentGraph {
    pub n_components: usize,
    pub edges: Vec<(usize, usize)>,
    pub inner_links: Vec<usize>,
    pub outer_links: Vec<usize>,
    uf: UnionFind,
    inner: usize,
    outer: usize,
}

impl ComponentGraph {
    pub fn inner_outer_connected(&mut self) -> bool {
        let (i, o) = (self.inner, self.outer);
        self.uf.find(i) == self.uf.find(o)
    }
}

/// Link components whose cell sets share or 8-touch cells; attach the inner
/// terminal to components meeting the inner disk and the outer terminal to
/// components with cells straddling (or beyond) the outer circle.
pub fn build_component_graph(
    traces: &[TraceComponent],
    h: f64,
    center: P2,
    inner_radius: f64,
    outer_radius: f64,
) -> ComponentGraph {
    let n = traces.len();
    let (inner, outer) = (n, n + 1);
    let mut uf = UnionFind::new(n + 2);
    let mut edges = Vec::new();
    let mut inner_links = Vec::new();
    let mut outer_links = Vec::new();
    let mut owner: HashMap<(i64, i64), usize> = HashMap::new();
    let straddle = h * std::f64::consts::SQRT_2 / 2.0;

    for (k, tc) in traces.iter().enumerate() {
        let mut touches_inner = false;
        let mut touches_outer = false;
        for &(i, j) in &tc.cells {
            // Adjacency against everything already registered; later
            // components check earlier cells, so the relation is symmetric.
            if let Some(&other) = owner.get(&(i, j)) {
                if other != k && uf.find(other) != uf.find(k) {
                    edges.push((other, k));
                }
                uf.union(other, k);
            }
            for (di, dj) in NBR8 {
                if let Some(&other) = owner.get(&(i + di, j + dj)) {
                    if other != k && uf.find(other) != uf.find(k) {
                        edges.push((other, k));
                    }
                    uf.union(other, k);
                }
            }
            owner.entry((i, j)).or_insert(k);
            let d = (cell_center(i, j, h) - center).norm();
            touches_inner |= d <= inner_radius;
            touches_outer |= d + straddle >= outer_radius;
        }
        if touches_inner {
            inner_links.push(k);
            uf.union(k, inner);
        }
        if touches_outer {
            outer_links.push(k);
            uf.union(k, outer);
        }
    }
    ComponentGraph { n_components: n, edges, inner_links, outer_links, uf, inner, outer }
}

fn require_coverage(s: &LineSample, x0: P2, radius: f64) -> Result<()> {
    let w = Window::disk_slab(x0, radius);
    if !s.covers(&w) {
        return Err(Error::Coverage(format!(
            "sample window {:?} does not cover disk of radius {radius} at {x0:?}",
            s.window
        )));
    }
    Ok(())
}

/// The crossing event A(x0, a): the projected obstacle traces on H connect
/// S(x0, a/10) to the circle of radius a around x0.
pub fn obstacle_crossing(s: &LineSample, x0: P2, a: f64, h: f64) -> Result<bool> {
    require_coverage(s, x0, a)?;
    let surf = Surface::h_default();
    let mut traces = Vec::new();
    for (id, l) in s.lines.iter().enumerate() {
        traces.extend(trace_cylinder_on(l, &surf, x0, a + 1.0 + 3.0 * h, h, id));
    }
    let mut g = build_component_graph(&traces, h, x0, a / 10.0, a);
    Ok(g.inner_outer_connected())
}

/// Dense obstacle mask over the square spanning the disk of radius `r` at
/// `x0` (plus a margin of a few cells).
pub fn rasterize_dense(s: &LineSample, surf: &Surface, x0: P2, r: f64, h: f64) -> Result<GridMask> {
    let half = r + 3.0 * h;
    let (i0, j0) = cell_of(P2::new(x0.x - half, x0.y - half), h);
    let (i1, j1) = cell_of(P2::new(x0.x + half, x0.y + half), h);
    let nx = (i1 - i0 + 1) as usize;
    let ny = (j1 - j0 + 1) as usize;
    if nx.saturating_mul(ny) > 100_000_000 {
        return Err(Error::Resource(format!("grid {nx} x {ny} exceeds 1e8 cells")));
    }
    let mut mask =
        GridMask { i0, j0, h, nx, ny, occupied: vec![false; nx * ny] };
    for l in &s.lines {
        let c = Cylinder::unit(*l);
        mark_cylinder(&c, surf, h, x0, half + h, |i, j| {
            if i >= i0 && i <= i1 && j >= j0 && j <= j1 {
                let idx = ((j - j0) as usize) * nx + (i - i0) as usize;
                mask.occupied[idx] = true;
            }
        });
    }
    Ok(mask)
}

/// Cell classes for the annulus crossing/circuit pair.
#[derive(Clone, Copy, PartialEq)]
enum Zone {
    Inner,
    Annulus,
    Outer,
}

fn zone(center: P2, x0: P2, r_in: f64, r_out: f64) -> Zone {
    let d = (center - x0).norm();
    if d < r_in {
        Zone::Inner
    } else if d <= r_out {
        Zone::Annulus
    } else {
        Zone::Outer
    }
}

/// 4-connected vacant path through the annulus from a cell touching the
/// inner disk to a cell touching the outside.
pub fn vacant_crossing_mask(mask: &GridMask, x0: P2, r_in: f64, r_out: f64) -> bool {
    let h = mask.h;
    let mut visited = vec![false; mask.nx * mask.ny];
    let mut stack = Vec::new();
    let cls = |i: usize, j: usize| zone(cell_center(mask.i0 + i as i64, mask.j0 + j as i64, h), x0, r_in, r_out);
    for j in 0..mask.ny {
        for i in 0..mask.nx {
            let idx = mask.idx(i, j);
            if mask.occupied[idx] || cls(i, j) != Zone::Annulus {
                continue;
            }
            // Seed: vacant annulus cells with a 4-neighbor in the inner disk.
            let seed = NBR4.iter().any(|&(di, dj)| {
                let (ni, nj) = (i as i64 + di, j as i64 + dj);
                ni >= 0
                    && nj >= 0
                    && (ni as usize) < mask.nx
                    && (nj as usize) < mask.ny
                    && cls(ni as usize, nj as usize) == Zone::Inner
            });
            if seed && !visited[idx] {
                visited[idx] = true;
                stack.push((i, j));
            }
        }
    }
    while let Some((i, j)) = stack.pop() {
        let reach_outer = NBR4.iter().any(|&(di, dj)| {
            let (ni, nj) = (i as i64 + di, j as i64 + dj);
            ni >= 0
                && nj >= 0
                && (ni as usize) < mask.nx
                && (nj as usize) < mask.ny
                && cls(ni as usize, nj as usize) == Zone::Outer
        });
        if reach_outer {
            return true;
        }
        for (di, dj) in NBR4 {
            let (ni, nj) = (i as i64 + di, j as i64 + dj);
            if ni < 0 || nj < 0 || ni as usize >= mask.nx || nj as usize >= mask.ny {
                continue;
            }
            let (ni, nj) = (ni as usize, nj as usize);
            let idx = mask.idx(ni, nj);
            if !visited[idx] && !mask.occupied[idx] && cls(ni, nj) == Zone::Annulus {
                visited[idx] = true;
                stack.push((ni, nj));
            }
        }
    }
    false
}

/// Independent circuit detector: an 8-connected occupied component inside
/// the annulus whose lifted polar angle is inconsistent (wraps by 2 pi)
/// winds around x0.
pub fn obstacle_circuit_mask(mask: &GridMask, x0: P2, r_in: f64, r_out: f64) -> bool {
    let h = mask.h;
    let n = mask.nx * mask.ny;
    let mut lifted: Vec<f64> = vec![f64::NAN; n];
    let in_annulus = |i: usize, j: usize| {
        zone(cell_center(mask.i0 + i as i64, mask.j0 + j as i64, h), x0, r_in, r_out) == Zone::Annulus
    };
    let angle = |i: usize, j: usize| {
        let p = cell_center(mask.i0 + i as i64, mask.j0 + j as i64, h) - x0;
        p.y.atan2(p.x)
    };
    for j0 in 0..mask.ny {
        for i0 in 0..mask.nx {
            let idx0 = mask.idx(i0, j0);
            if !mask.occupied[idx0] || !lifted[idx0].is_nan() || !in_annulus(i0, j0) {
                continue;
            }
            lifted[idx0] = angle(i0, j0);
            let mut stack = vec![(i0, j0)];
            while let Some((i, j)) = stack.pop() {
                let base = lifted[mask.idx(i, j)];
                let a_cur = angle(i, j);
                for (di, dj) in NBR8 {
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    if ni < 0 || nj < 0 || ni as usize >= mask.nx || nj as usize >= mask.ny {
                        continue;
                    }
                    let (ni, nj) = (ni as usize, nj as usize);
                    let idx = mask.idx(ni, nj);
                    if !mask.occupied[idx] || !in_annulus(ni, nj) {
                        continue;
                    }
                    let mut delta = angle(ni, nj) - a_cur;
                    while delta > std::f64::consts::PI {
                        delta -= 2.0 * std::f64::consts::PI;
                    }
                    while delta < -std::f64::consts::PI {
                        delta += 2.0 * std::f64::consts::PI;
                    }
                    let proposal = base + delta;
                    if lifted[idx].is_nan() {
                        lifted[idx] = proposal;
                        stack.push((ni, nj));
                    } else if (lifted[idx] - proposal).abs() > std::f64::consts::PI {
                        // Two walks disagree by a full turn: the component
                        // winds around the center.
                        return true;
                    }
                }
            }
        }
    }
    false
}

fn check_ring_radii(r_in: f64, r_out: f64) -> Result<()> {
    if !(r_in > 0.0 && r_in < r_out && r_out <= 500.0) {
        return Err(Error::Config(format!(
            "need 0 < r_in < r_out <= 500, got {r_in}, {r_out}"
        )));
    }
    Ok(())
}

/// Vacant 4-crossing of the annulus on the surface H.
pub fn vacant_crossing(s: &LineSample, x0: P2, r_in: f64, r_out: f64, h: f64) -> Result<bool> {
    check_ring_radii(r_in, r_out)?;
    require_coverage(s, x0, r_out)?;
    let mask = rasterize_dense(s, &Surface::h_default(), x0, r_out, h)?;
    Ok(vacant_crossing_mask(&mask, x0, r_in, r_out))
}

/// Obstacle 8-circuit around the annulus on H: the exact dual of
/// `vacant_crossing` on the same grid.
pub fn obstacle_circuit(s: &LineSample, x0: P2, r_in: f64, r_out: f64, h: f64) -> Result<bool> {
    Ok(!vacant_crossing(s, x0, r_in, r_out, h)?)
}

/// Vacant 4-crossing of the annulus on the plane z = 0.
pub fn plane_vacant_crossing(s: &LineSample, x0: P2, r_in: f64, r_out: f64, h: f64) -> Result<bool> {
    check_ring_radii(r_in, r_out)?;
    require_coverage(s, x0, r_out)?;
    let mask = rasterize_dense(s, &Surface::Plane, x0, r_out, h)?;
    Ok(vacant_crossing_mask(&mask, x0, r_in, r_out))
}

/// Exact description of a unit cylinder's intersection with the plane z=0.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum PlaneRegion {
    Empty,
    /// Affine image of a disk: semi-minor 1 across the axis projection,
    /// semi-major 1/|sin(angle to plane)| along it.
    Ellipse { center: P2, major_dir: P2, semi_major: f64, semi_minor: f64 },
    /// Horizontal axis within vertical distance 1 of the plane.
    Strip { point: P2, dir: P2, half_width: f64 },
}

impl PlaneRegion {
    pub fn contains(&self, p: P2) -> bool {
        match *self {
            PlaneRegion::Empty => false,
            PlaneRegion::Ellipse { center, major_dir, semi_major, semi_minor } => {
                let d = p - center;
                let along = d.dot(&major_dir) / semi_major;
                let across = (d.x * -major_dir.y + d.y * major_dir.x) / semi_minor;
                along * along + across * across <= 1.0
            }
            PlaneRegion::Strip { point, dir, half_width } => {
                let d = p - point;
                (d.x * -dir.y + d.y * dir.x).abs() <= half_width
            }
        }
    }
}

/// C(l) ∩ {z=0} for a unit cylinder.
pub fn plane_obstacle_region(l: &Line3) -> PlaneRegion {
    let dz = l.dir.z;
    let dxy = Vector2::new(l.dir.x, l.dir.y);
    if dz.abs() < 1e-6 {
        // Horizontal axis at height z0: cross-section half-width
        // sqrt(1 - z0^2), empty if |z0| > 1.
        let z0 = l.anchor.z;
        if z0.abs() > 1.0 {
            return PlaneRegion::Empty;
        }
        return PlaneRegion::Strip {
            point: P2::new(l.anchor.x, l.anchor.y),
            dir: dxy.normalize(),
            half_width: (1.0 - z0 * z0).sqrt(),
        };
    }
    let t = -l.anchor.z / dz;
    let hit = l.at(t);
    let center = P2::new(hit.x, hit.y);
    let semi_major = 1.0 / dz.abs();
    let major_dir = if dxy.norm() < 1e-12 { P2::new(1.0, 0.0) } else { dxy.normalize() };
    PlaneRegion::Ellipse { center, major_dir, semi_major, semi_minor: 1.0 }
}

/// Histogram of vacant 4-component sizes (cell counts) on H inside a disk
/// window, plus the totals, via union-find over the grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterStats {
    pub sizes: Vec<usize>,
    pub vacant_cells: usize,
    pub occupied_cells: usize,
    pub total_cells: usize,
}

pub fn cluster_stats(s: &LineSample, x0: P2, r: f64, h: f64) -> Result<ClusterStats> {
    if r > 500.0 {
        return Err(Error::Config(format!("window radius {r} > 500")));
    }
    require_coverage(s, x0, r)?;
    let mask = rasterize_dense(s, &Surface::h_default(), x0, r, h)?;
    let inside: Vec<bool> = (0..mask.nx * mask.ny)
        .map(|idx| {
            let (i, j) = (idx % mask.nx, idx / mask.nx);
            (mask.center(i, j) - x0).norm() <= r
        })
        .collect();
    let mut uf = UnionFind::new(mask.nx * mask.ny);
    let mut vacant = 0usize;
    let mut occupied = 0usize;
    let mut total = 0usize;
    for j in 0..mask.ny {
        for i in 0..mask.nx {
            let idx = mask.idx(i, j);
            if !inside[idx] {
                continue;
            }
            total += 1;
            if mask.occupied[idx] {
                occupied += 1;
                continue;
            }
            vacant += 1;
            for (di, dj) in [(1i64, 0i64), (0, 1)] {
                let (ni, nj) = (i as i64 + di, j as i64 + dj);
                if ni as usize >= mask.nx || nj as usize >= mask.ny {
                    continue;
                }
                let nidx = mask.idx(ni as usize, nj as usize);
                if inside[nidx] && !mask.occupied[nidx] {
                    uf.union(idx, nidx);
                }
            }
        }
    }
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for j in 0..mask.ny {
        for i in 0..mask.nx {
            let idx = mask.idx(i, j);
            if inside[idx] && !mask.occupied[idx] {
                *counts.entry(uf.find(idx)).or_insert(0) += 1;
            }
        }
    }
    let mut sizes: Vec<usize> = counts.into_values().collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    Ok(ClusterStats { sizes, vacant_cells: vacant, occupied_cells: occupied, total_cells: total })
}
