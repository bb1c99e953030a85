//! Minimal 3-D vector/plane/polygon geometry for the image-source engine.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for coplanarity of polygon vertices (metres).
pub const COPLANAR_TOL: f64 = 1e-6;
/// Tolerance under which a grazing path (edge hit) still counts as a hit.
pub const GRAZE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3 { x: a[0], y: a[1], z: a[2] }
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm2().sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        Vec3::new(self.x / n, self.y / n, self.z / n)
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl std::ops::Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Oriented plane `n·p = d` with unit normal. Points with `n·p > d` lie on
/// the normal side (outside, for room walls wound with outward normals).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vec3,
    pub d: f64,
}

impl Plane {
    pub fn signed_distance(&self, p: Vec3) -> f64 {
        self.normal.dot(p) - self.d
    }

    /// Mirror image of `p` across the plane.
    pub fn mirror(&self, p: Vec3) -> Vec3 {
        p - self.normal * (2.0 * self.signed_distance(p))
    }

    /// Parameter t of the intersection of segment a→b with the plane, if the
    /// segment is not parallel to it.
    pub fn segment_param(&self, a: Vec3, b: Vec3) -> Option<f64> {
        let da = self.signed_distance(a);
        let db = self.signed_distance(b);
        let denom = da - db;
        if denom.abs() < 1e-300 {
            return None;
        }
        Some(da / denom)
    }
}

/// Planar convex-or-concave polygon with a cached plane and 2-D basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub vertices: Vec<Vec3>,
    plane: Plane,
    /// Orthonormal in-plane basis for 2-D point-in-polygon tests.
    u: Vec3,
    v: Vec3,
    area: f64,
}

impl Polygon {
    /// Builds a polygon, validating vertex count, coplanarity (1e-6 m) and
    /// non-degenerate area. The outward normal follows the vertex winding
    /// (right-hand rule).
    pub fn new(vertices: Vec<Vec3>) -> Result<Polygon> {
        if vertices.len() < 3 {
            return Err(Error::Validation(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        for (i, v) in vertices.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Validation(format!("polygon vertex {i} not finite")));
            }
        }
        // Newell's method: robust normal for arbitrary planar polygons.
        let mut n = Vec3::ZERO;
        for i in 0..vertices.len() {
            let a = vertices[i];
            let b = vertices[(i + 1) % vertices.len()];
            n = n + a.cross(b);
        }
        let area = 0.5 * n.norm();
        if area <= 1e-12 {
            return Err(Error::Validation("polygon has zero area".into()));
        }
        let normal = n.normalized();
        let d = vertices.iter().map(|p| normal.dot(*p)).sum::<f64>() / vertices.len() as f64;
        let plane = Plane { normal, d };
        for (i, p) in vertices.iter().enumerate() {
            if plane.signed_distance(*p).abs() > COPLANAR_TOL {
                return Err(Error::Validation(format!(
                    "polygon vertex {i} off-plane by {:.2e} m",
                    plane.signed_distance(*p).abs()
                )));
            }
        }
        // In-plane orthonormal basis.
        let e = (vertices[1] - vertices[0]).normalized();
        let u = e;
        let v = normal.cross(e);
        Ok(Polygon { vertices, plane, u, v, area })
    }

    pub fn plane(&self) -> Plane {
        self.plane
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn centroid(&self) -> Vec3 {
        let mut c = Vec3::ZERO;
        for v in &self.vertices {
            c = c + *v;
        }
        c * (1.0 / self.vertices.len() as f64)
    }

    fn project(&self, p: Vec3) -> (f64, f64) {
        let r = p - self.vertices[0];
        (r.dot(self.u), r.dot(self.v))
    }

    /// Whether a point already on the plane lies inside the polygon.
    /// Points within `GRAZE_TOL` of an edge count as inside.
    pub fn contains(&self, p: Vec3) -> bool {
        let (px, py) = self.project(p);
        let n = self.vertices.len();
        let mut inside = false;
        for i in 0..n {
            let (ax, ay) = self.project(self.vertices[i]);
            let (bx, by) = self.project(self.vertices[(i + 1) % n]);
            // Edge-graze test: distance from point to segment.
            let (ex, ey) = (bx - ax, by - ay);
            let len2 = ex * ex + ey * ey;
            let t = (((px - ax) * ex + (py - ay) * ey) / len2).clamp(0.0, 1.0);
            let (cx, cy) = (ax + t * ex - px, ay + t * ey - py);
            if (cx * cx + cy * cy).sqrt() <= GRAZE_TOL {
                return true;
            }
            // Even-odd crossing rule.
            if (ay > py) != (by > py) {
                let x_cross = ax + (py - ay) / (by - ay) * (bx - ax);
                if px < x_cross {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Intersection of segment a→b with this polygon: returns the segment
    /// parameter when the crossing point lies inside the polygon.
    pub fn segment_hit(&self, a: Vec3, b: Vec3) -> Option<f64> {
        let t = self.plane.segment_param(a, b)?;
        if !(-GRAZE_TOL..=1.0 + GRAZE_TOL).contains(&t) {
            return None;
        }
        let p = a + (b - a) * t;
        if self.contains(p) {
            Some(t)
        } else {
            None
        }
    }
}

/// Even-odd ray-parity test for a point against a closed polygon soup.
/// Direction is fixed and deliberately incommensurate with axis-aligned
/// geometry so shoebox edge/vertex grazes cannot produce double counts.
pub fn point_in_polyhedron(polygons: &[Polygon], p: Vec3) -> bool {
    let dir = Vec3::new(0.531340264650571, 0.3621260682277699, 0.7655419363536937);
    let mut crossings = 0usize;
    for poly in polygons {
        let plane = poly.plane();
        let dn = plane.normal.dot(dir);
        if dn.abs() < 1e-14 {
            continue;
        }
        let t = -plane.signed_distance(p) / dn;
        if t <= 0.0 {
            continue;
        }
        if poly.contains(p + dir * t) {
            crossings += 1;
        }
    }
    crossings % 2 == 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quad(a: [f64; 3], b: [f64; 3], c: [f64; 3], d: [f64; 3]) -> Polygon {
        Polygon::new(vec![a.into(), b.into(), c.into(), d.into()]).unwrap()
    }

    #[test]
    fn polygon_rejects_too_few_vertices() {
        let r = Polygon::new(vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0)]);
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn polygon_rejects_zero_area() {
        let r = Polygon::new(vec![
            Vec3::ZERO,
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
        ]);
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn polygon_rejects_non_coplanar() {
        let r = Polygon::new(vec![
            Vec3::ZERO,
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 1e-3),
            Vec3::new(0.0, 1.0, 0.0),
        ]);
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn winding_sets_outward_normal() {
        // Counter-clockwise seen from +z ⇒ normal +z.
        let p = quad([0.0; 3], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]);
        assert!((p.plane().normal - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
        assert!((p.area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn contains_handles_interior_exterior_and_edge() {
        let p = quad([0.0; 3], [2.0, 0.0, 0.0], [2.0, 2.0, 0.0], [0.0, 2.0, 0.0]);
        assert!(p.contains(Vec3::new(1.0, 1.0, 0.0)));
        assert!(!p.contains(Vec3::new(3.0, 1.0, 0.0)));
        // Grazing the edge counts as inside.
        assert!(p.contains(Vec3::new(2.0, 1.0, 0.0)));
        assert!(p.contains(Vec3::new(0.0, 0.0, 0.0)));
    }

    #[test]
    fn segment_hit_finds_crossing_point() {
        let p = quad([0.0; 3], [2.0, 0.0, 0.0], [2.0, 2.0, 0.0], [0.0, 2.0, 0.0]);
        let t = p
            .segment_hit(Vec3::new(1.0, 1.0, -1.0), Vec3::new(1.0, 1.0, 3.0))
            .unwrap();
        assert!((t - 0.25).abs() < 1e-12);
        assert!(p.segment_hit(Vec3::new(5.0, 5.0, -1.0), Vec3::new(5.0, 5.0, 1.0)).is_none());
    }

    fn unit_box() -> Vec<Polygon> {
        let (lx, ly, lz) = (2.0, 3.0, 4.0);
        vec![
            // z = 0 floor (outward -z), z = lz ceiling (outward +z), etc.
            quad([0.0, 0.0, 0.0], [0.0, ly, 0.0], [lx, ly, 0.0], [lx, 0.0, 0.0]),
            quad([0.0, 0.0, lz], [lx, 0.0, lz], [lx, ly, lz], [0.0, ly, lz]),
            quad([0.0, 0.0, 0.0], [lx, 0.0, 0.0], [lx, 0.0, lz], [0.0, 0.0, lz]),
            quad([0.0, ly, 0.0], [0.0, ly, lz], [lx, ly, lz], [lx, ly, 0.0]),
            quad([0.0, 0.0, 0.0], [0.0, 0.0, lz], [0.0, ly, lz], [0.0, ly, 0.0]),
            quad([lx, 0.0, 0.0], [lx, ly, 0.0], [lx, ly, lz], [lx, 0.0, lz]),
        ]
    }

    #[test]
    fn point_in_polyhedron_box() {
        let walls = unit_box();
        assert!(point_in_polyhedron(&walls, Vec3::new(1.0, 1.5, 2.0)));
        assert!(!point_in_polyhedron(&walls, Vec3::new(-0.1, 1.5, 2.0)));
        assert!(!point_in_polyhedron(&walls, Vec3::new(1.0, 1.5, 4.5)));
    }

    proptest! {
        #[test]
        fn mirror_is_an_involution(px in -50.0..50.0f64, py in -50.0..50.0f64, pz in -50.0..50.0f64,
                                   nx in -1.0..1.0f64, ny in -1.0..1.0f64, nz in -1.0..1.0f64,
                                   d in -10.0..10.0f64) {
            let n = Vec3::new(nx, ny, nz);
            prop_assume!(n.norm() > 1e-3);
            let plane = Plane { normal: n.normalized(), d };
            let p = Vec3::new(px, py, pz);
            let q = plane.mirror(plane.mirror(p));
            prop_assert!((q - p).norm() < 1e-9);
            // Mirror lies symmetrically: midpoint on the plane.
            let m = (p + plane.mirror(p)) * 0.5;
            prop_assert!(plane.signed_distance(m).abs() < 1e-9);
        }

        #[test]
        fn box_membership_matches_bounds(x in -1.0..3.0f64, y in -1.0..4.0f64, z in -1.0..5.0f64) {
            let walls = unit_box();
            let p = Vec3::new(x, y, z);
            let expect = (0.0..2.0).contains(&x) && (0.0..3.0).contains(&y) && (0.0..4.0).contains(&z);
            // Skip points within a millimetre of a face: parity there is a
            // boundary call, not a correctness statement.
            let near_face = [x, 2.0 - x, y, 3.0 - y, z, 4.0 - z].iter().any(|v| v.abs() < 1e-3);
            prop_assume!(!near_face);
            prop_assert_eq!(point_in_polyhedron(&walls, p), expect);
        }
    }
}
