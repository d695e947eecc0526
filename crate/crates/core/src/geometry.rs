//! Planar primitives: vectors, rigid poses, axis-aligned boxes and convex
//! polygons with the queries the simulator and perception stack need
//! (separating-axis penetration, boundary distance, half-plane clipping,
//! area moments).

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum polygon area in m².
pub const MIN_POLYGON_AREA: f64 = 1e-8;

const CONVEXITY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c, s)
    }

    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    #[inline]
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }

    /// Counter-clockwise perpendicular.
    #[inline]
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    #[inline]
    pub fn rotated(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    #[inline]
    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    #[inline]
    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    #[inline]
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into `[-π, π)`.
pub fn normalize_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

/// Rigid 2D transform: rotate by `theta` then translate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub translation: Vec2,
    pub rotation: f64,
}

impl Pose {
    pub fn new(translation: Vec2, rotation: f64) -> Self {
        Self {
            translation,
            rotation,
        }
    }

    #[inline]
    pub fn apply(&self, p: Vec2) -> Vec2 {
        p.rotated(self.rotation) + self.translation
    }

    /// Composition `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            translation: self.apply(other.translation),
            rotation: self.rotation + other.rotation,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec2,
    pub max: Vec2,
}

impl Aabb {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Self { min, max }
    }

    pub fn from_points(points: &[Vec2]) -> Self {
        let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        Self { min, max }
    }

    pub fn translated(&self, t: Vec2) -> Self {
        Self::new(self.min + t, self.max + t)
    }

    pub fn center(&self) -> Vec2 {
        (self.min + self.max) * 0.5
    }

    pub fn contains(&self, p: Vec2, tol: f64) -> bool {
        p.x >= self.min.x - tol
            && p.x <= self.max.x + tol
            && p.y >= self.min.y - tol
            && p.y <= self.max.y + tol
    }
}

/// Convex polygon with counter-clockwise vertices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec2>", into = "Vec<Vec2>")]
pub struct ConvexPolygon {
    vertices: Vec<Vec2>,
}

impl TryFrom<Vec<Vec2>> for ConvexPolygon {
    type Error = Error;
    fn try_from(v: Vec<Vec2>) -> Result<Self> {
        ConvexPolygon::new(v)
    }
}

impl From<ConvexPolygon> for Vec<Vec2> {
    fn from(p: ConvexPolygon) -> Self {
        p.vertices
    }
}

impl ConvexPolygon {
    /// Validates convexity, CCW winding and non-degeneracy.
    pub fn new(vertices: Vec<Vec2>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidPolygon(format!(
                "need at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPolygon("non-finite vertex".into()));
        }
        let poly = Self { vertices };
        let area = poly.signed_area();
        if area <= MIN_POLYGON_AREA {
            return Err(Error::InvalidPolygon(format!(
                "area {area:e} too small or clockwise winding"
            )));
        }
        let n = poly.vertices.len();
        for i in 0..n {
            let a = poly.vertices[i];
            let b = poly.vertices[(i + 1) % n];
            let c = poly.vertices[(i + 2) % n];
            let turn = (b - a).cross(c - b);
            if turn < -CONVEXITY_TOL * (b - a).norm().max(1.0) {
                return Err(Error::InvalidPolygon(format!("not convex at vertex {}", (i + 1) % n)));
            }
        }
        Ok(poly)
    }

    /// Builds a polygon from vertices produced by an operation that preserves
    /// convexity (rigid transforms, half-plane clipping). Drops near-duplicate
    /// vertices; returns `None` when the result is degenerate.
    pub(crate) fn from_clipped(mut vertices: Vec<Vec2>) -> Option<Self> {
        vertices.dedup_by(|a, b| a.distance(*b) < 1e-12);
        while vertices.len() > 1 && vertices[0].distance(*vertices.last().unwrap()) < 1e-12 {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return None;
        }
        let p = Self { vertices };
        (p.signed_area() > MIN_POLYGON_AREA).then_some(p)
    }

    pub fn rectangle(width: f64, height: f64) -> Result<Self> {
        let (hw, hh) = (width / 2.0, height / 2.0);
        Self::new(vec![
            Vec2::new(-hw, -hh),
            Vec2::new(hw, -hh),
            Vec2::new(hw, hh),
            Vec2::new(-hw, hh),
        ])
    }

    /// Regular polygon centered at the origin.
    pub fn regular(sides: usize, circumradius: f64, phase: f64) -> Result<Self> {
        let verts = (0..sides)
            .map(|i| {
                Vec2::from_angle(phase + i as f64 * std::f64::consts::TAU / sides as f64)
                    * circumradius
            })
            .collect();
        Self::new(verts)
    }

    #[inline]
    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Edges as `(start, end)` pairs.
    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn signed_area(&self) -> f64 {
        let o = self.vertices[0];
        self.edges()
            .map(|(a, b)| (a - o).cross(b - o))
            .sum::<f64>()
            * 0.5
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| a.distance(b)).sum()
    }

    pub fn centroid(&self) -> Vec2 {
        let o = self.vertices[0];
        let mut acc = Vec2::ZERO;
        let mut area2 = 0.0;
        for (a, b) in self.edges() {
            let (a, b) = (a - o, b - o);
            let w = a.cross(b);
            area2 += w;
            acc += (a + b) * w;
        }
        o + acc * (1.0 / (3.0 * area2))
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    /// Largest distance from `p` to any vertex.
    pub fn max_radius_from(&self, p: Vec2) -> f64 {
        self.vertices
            .iter()
            .map(|v| v.distance(p))
            .fold(0.0, f64::max)
    }

    pub fn transformed(&self, pose: &Pose) -> ConvexPolygon {
        let (s, c) = pose.rotation.sin_cos();
        ConvexPolygon {
            vertices: self
                .vertices
                .iter()
                .map(|v| Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y) + pose.translation)
                .collect(),
        }
    }

    pub fn translated(&self, t: Vec2) -> ConvexPolygon {
        ConvexPolygon {
            vertices: self.vertices.iter().map(|&v| v + t).collect(),
        }
    }

    /// Outward unit normal of edge `i` (from vertex `i` to `i+1`).
    pub fn edge_normal(&self, i: usize) -> Vec2 {
        let n = self.vertices.len();
        let d = self.vertices[(i + 1) % n] - self.vertices[i];
        Vec2::new(d.y, -d.x).normalized()
    }

    /// Inclusive point containment with tolerance `tol` (meters).
    pub fn contains(&self, p: Vec2, tol: f64) -> bool {
        self.edges().all(|(a, b)| {
            let d = b - a;
            // signed distance of p to the edge line, positive outside
            d.cross(p - a) / d.norm() >= -tol
        })
    }

    /// If `p` lies strictly inside, returns the depth to the nearest edge and
    /// that edge's outward normal.
    pub fn point_penetration(&self, p: Vec2) -> Option<(f64, Vec2)> {
        let mut best: Option<(f64, Vec2)> = None;
        for i in 0..self.vertices.len() {
            let n = self.edge_normal(i);
            let depth = (self.vertices[i] - p).dot(n);
            if depth <= 0.0 {
                return None;
            }
            if best.map_or(true, |(d, _)| depth < d) {
                best = Some((depth, n));
            }
        }
        best
    }

    /// Distance from `p` along unit `u` to where the ray leaves the polygon;
    /// 0 when `p` is already outside.
    pub fn ray_exit(&self, p: Vec2, u: Vec2) -> f64 {
        let mut exit = f64::INFINITY;
        for (i, (a, _)) in self.edges().enumerate() {
            let n = self.edge_normal(i);
            let inside = n.dot(p - a);
            if inside > 0.0 {
                return 0.0;
            }
            let rate = n.dot(u);
            if rate > 0.0 {
                exit = exit.min(-inside / rate);
            }
        }
        if exit.is_finite() {
            exit
        } else {
            0.0
        }
    }

    /// Euclidean distance from `p` to the polygon (0 inside).
    pub fn distance_to_point(&self, p: Vec2) -> f64 {
        if self.contains(p, 0.0) {
            return 0.0;
        }
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Keeps the part with `normal · x <= offset`.
    pub fn clip_halfplane(&self, normal: Vec2, offset: f64) -> Option<ConvexPolygon> {
        let mut out = Vec::with_capacity(self.vertices.len() + 1);
        for (a, b) in self.edges() {
            let da = normal.dot(a) - offset;
            let db = normal.dot(b) - offset;
            if da <= 0.0 {
                out.push(a);
            }
            if (da < 0.0 && db > 0.0) || (da > 0.0 && db < 0.0) {
                let t = da / (da - db);
                out.push(a + (b - a) * t);
            }
        }
        ConvexPolygon::from_clipped(out)
    }

    /// Central second moments `(cxx, cyy, cxy)` of the area, divided by area.
    pub fn covariance(&self) -> (f64, f64, f64) {
        let c = self.centroid();
        let (mut ixx, mut iyy, mut ixy, mut a2) = (0.0, 0.0, 0.0, 0.0);
        for (p, q) in self.edges() {
            let (p, q) = (p - c, q - c);
            let w = p.cross(q);
            a2 += w;
            ixx += w * (p.x * p.x + p.x * q.x + q.x * q.x);
            iyy += w * (p.y * p.y + p.y * q.y + q.y * q.y);
            ixy += w * (p.x * q.y + 2.0 * p.x * p.y + 2.0 * q.x * q.y + q.x * p.y);
        }
        let area = a2 / 2.0;
        (ixx / 12.0 / area, iyy / 12.0 / area, ixy / 24.0 / area)
    }
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let d = b - a;
    let len2 = d.norm_sq();
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(d) / len2).clamp(0.0, 1.0);
    p.distance(a + d * t)
}

/// Separating-axis test. When the polygons overlap, returns the penetration
/// depth and the unit direction along which `b` must move (by `depth`) to
/// separate from `a`.
pub fn sat_penetration(a: &ConvexPolygon, b: &ConvexPolygon) -> Option<(f64, Vec2)> {
    let mut best: Option<(f64, Vec2)> = None;
    for poly in [a, b] {
        for i in 0..poly.len() {
            let n = poly.edge_normal(i);
            let (amin, amax) = project(a, n);
            let (bmin, bmax) = project(b, n);
            let push_pos = amax - bmin;
            let push_neg = bmax - amin;
            if push_pos <= 0.0 || push_neg <= 0.0 {
                return None;
            }
            let (depth, dir) = if push_pos < push_neg {
                (push_pos, n)
            } else {
                (push_neg, -n)
            };
            if best.map_or(true, |(d, _)| depth < d) {
                best = Some((depth, dir));
            }
        }
    }
    best
}

fn project(p: &ConvexPolygon, axis: Vec2) -> (f64, f64) {
    p.vertices()
        .iter()
        .map(|v| v.dot(axis))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            (lo.min(x), hi.max(x))
        })
}

/// Exact boundary distance between two convex polygons; 0 when they touch or
/// overlap. Uses vertex-to-edge distances, which attain the minimum for
/// disjoint convex polygons.
pub fn polygon_distance(a: &ConvexPolygon, b: &ConvexPolygon) -> f64 {
    if sat_penetration(a, b).is_some() {
        return 0.0;
    }
    let one_way = |p: &ConvexPolygon, q: &ConvexPolygon| {
        p.vertices()
            .iter()
            .flat_map(|&v| q.edges().map(move |(s, e)| point_segment_distance(v, s, e)))
            .fold(f64::INFINITY, f64::min)
    };
    one_way(a, b).min(one_way(b, a))
}

/// Area of the intersection of two convex polygons.
pub fn intersection_area(a: &ConvexPolygon, b: &ConvexPolygon) -> f64 {
    let mut clipped = Some(a.clone());
    for i in 0..b.len() {
        let Some(cur) = clipped else { return 0.0 };
        let n = b.edge_normal(i);
        clipped = cur.clip_halfplane(n, n.dot(b.vertices()[i]));
    }
    clipped.map_or(0.0, |p| p.area())
}

/// Principal axes from a symmetric 2×2 covariance: `(major, minor, sd_major, sd_minor)`.
pub fn principal_axes(cxx: f64, cyy: f64, cxy: f64) -> (Vec2, Vec2, f64, f64) {
    let tr = cxx + cyy;
    let det = cxx * cyy - cxy * cxy;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let l1 = tr / 2.0 + disc;
    let l2 = (tr / 2.0 - disc).max(0.0);
    let major = if cxy.abs() > 1e-300 {
        Vec2::new(l1 - cyy, cxy).normalized()
    } else if cxx >= cyy {
        Vec2::new(1.0, 0.0)
    } else {
        Vec2::new(0.0, 1.0)
    };
    (major, major.perp(), l1.sqrt(), l2.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(side: f64, center: Vec2) -> ConvexPolygon {
        ConvexPolygon::rectangle(side, side).unwrap().translated(center)
    }

    #[test]
    fn rejects_clockwise_and_degenerate() {
        let cw = vec![Vec2::new(0., 0.), Vec2::new(0., 1.), Vec2::new(1., 0.)];
        assert!(ConvexPolygon::new(cw).is_err());
        let flat = vec![Vec2::new(0., 0.), Vec2::new(1., 0.), Vec2::new(2., 0.)];
        assert!(ConvexPolygon::new(flat).is_err());
        let concave = vec![
            Vec2::new(0., 0.),
            Vec2::new(2., 0.),
            Vec2::new(1., 0.2),
            Vec2::new(2., 2.),
            Vec2::new(0., 2.),
        ];
        assert!(ConvexPolygon::new(concave).is_err());
    }

    #[test]
    fn ray_exit_distances() {
        let s = square(2.0, Vec2::ZERO);
        assert!((s.ray_exit(Vec2::new(0.5, 0.0), Vec2::new(-1.0, 0.0)) - 1.5).abs() < 1e-12);
        let d = Vec2::new(1.0, 1.0).normalized();
        assert!((s.ray_exit(Vec2::ZERO, d) - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(s.ray_exit(Vec2::new(3.0, 0.0), d), 0.0);
    }

    #[test]
    fn square_area_centroid_covariance() {
        let s = square(2.0, Vec2::new(3.0, -1.0));
        assert!((s.area() - 4.0).abs() < 1e-12);
        assert!(s.centroid().distance(Vec2::new(3.0, -1.0)) < 1e-12);
        // uniform square of side a: variance a²/12
        let (cxx, cyy, cxy) = s.covariance();
        assert!((cxx - 4.0 / 12.0).abs() < 1e-12);
        assert!((cyy - 4.0 / 12.0).abs() < 1e-12);
        assert!(cxy.abs() < 1e-12);
    }

    #[test]
    fn rotated_rectangle_principal_axes() {
        let r = ConvexPolygon::rectangle(4.0, 1.0)
            .unwrap()
            .transformed(&Pose::new(Vec2::ZERO, 0.3));
        let (cxx, cyy, cxy) = r.covariance();
        let (major, minor, s1, s2) = principal_axes(cxx, cyy, cxy);
        assert!(major.dot(minor).abs() < 1e-12);
        assert!((major.cross(Vec2::from_angle(0.3))).abs() < 1e-9);
        assert!((s1 * s1 - 16.0 / 12.0).abs() < 1e-9);
        assert!((s2 * s2 - 1.0 / 12.0).abs() < 1e-9);
    }

    #[test]
    fn sat_and_distance() {
        let a = square(1.0, Vec2::ZERO);
        let b = square(1.0, Vec2::new(1.05, 0.0));
        assert!(sat_penetration(&a, &b).is_none());
        assert!((polygon_distance(&a, &b) - 0.05).abs() < 1e-12);
        let c = square(1.0, Vec2::new(0.9, 0.0));
        let (depth, dir) = sat_penetration(&a, &c).unwrap();
        assert!((depth - 0.1).abs() < 1e-12);
        assert!(dir.distance(Vec2::new(1.0, 0.0)) < 1e-12);
        assert_eq!(polygon_distance(&a, &c), 0.0);
    }

    #[test]
    fn point_penetration_picks_nearest_edge() {
        let s = square(1.0, Vec2::ZERO);
        let (d, n) = s.point_penetration(Vec2::new(-0.45, 0.1)).unwrap();
        assert!((d - 0.05).abs() < 1e-12);
        assert!(n.distance(Vec2::new(-1.0, 0.0)) < 1e-12);
        assert!(s.point_penetration(Vec2::new(0.5, 0.0)).is_none());
        assert!(s.point_penetration(Vec2::new(0.7, 0.0)).is_none());
    }

    #[test]
    fn clipping_preserves_area() {
        let s = ConvexPolygon::regular(6, 1.0, 0.1).unwrap();
        let n = Vec2::from_angle(0.7);
        let off = 0.2;
        let left = s.clip_halfplane(n, off).unwrap();
        let right = s.clip_halfplane(-n, -off).unwrap();
        assert!((left.area() + right.area() - s.area()).abs() < 1e-12);
        assert!(s.clip_halfplane(n, -2.0).is_none());
    }

    #[test]
    fn intersection_area_of_offset_squares() {
        let a = square(1.0, Vec2::ZERO);
        let b = square(1.0, Vec2::new(0.5, 0.5));
        assert!((intersection_area(&a, &b) - 0.25).abs() < 1e-12);
        let c = square(1.0, Vec2::new(2.0, 0.0));
        assert_eq!(intersection_area(&a, &c), 0.0);
    }

    #[test]
    fn angle_normalization() {
        use std::f64::consts::PI;
        assert_eq!(normalize_angle(PI), -PI);
        assert!((normalize_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((normalize_angle(-PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }
}
