//! Small geometric utilities shared across the crate.

use nalgebra::{Point3, Vector3};

pub type Point = Point3<f64>;
pub type Vec3 = Vector3<f64>;

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Point::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn grow(&mut self, p: &Point) {
        for k in 0..3 {
            self.min[k] = self.min[k].min(p[k]);
            self.max[k] = self.max[k].max(p[k]);
        }
    }

    pub fn merge(&mut self, other: &Aabb) {
        for k in 0..3 {
            self.min[k] = self.min[k].min(other.min[k]);
            self.max[k] = self.max[k].max(other.max[k]);
        }
    }

    pub fn from_points<'a>(pts: impl IntoIterator<Item = &'a Point>) -> Self {
        let mut b = Aabb::empty();
        for p in pts {
            b.grow(p);
        }
        b
    }

    pub fn center(&self) -> Point {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    /// Squared distance from `p` to this box (0 if inside).
    pub fn dist2(&self, p: &Point) -> f64 {
        let mut d2 = 0.0;
        for k in 0..3 {
            let v = p[k];
            if v < self.min[k] {
                d2 += (self.min[k] - v) * (self.min[k] - v);
            } else if v > self.max[k] {
                d2 += (v - self.max[k]) * (v - self.max[k]);
            }
        }
        d2
    }

    pub fn longest_axis(&self) -> usize {
        let e = self.max - self.min;
        if e.x >= e.y && e.x >= e.z {
            0
        } else if e.y >= e.z {
            1
        } else {
            2
        }
    }
}

/// Signed volume of the tetrahedron (a, b, c, d); positive when (b-a, c-a, d-a)
/// form a right-handed frame.
pub fn tet_volume(a: &Point, b: &Point, c: &Point, d: &Point) -> f64 {
    (b - a).cross(&(c - a)).dot(&(d - a)) / 6.0
}

/// Area of triangle (a, b, c).
pub fn tri_area(a: &Point, b: &Point, c: &Point) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Unit normal of triangle (a, b, c) following right-hand winding.
pub fn tri_normal(a: &Point, b: &Point, c: &Point) -> Vec3 {
    let n = (b - a).cross(&(c - a));
    let len = n.norm();
    if len > 0.0 {
        n / len
    } else {
        Vec3::zeros()
    }
}

/// Closest point on triangle (a, b, c) to `p` (Ericson, Real-Time Collision Detection).
pub fn closest_point_on_triangle(p: &Point, a: &Point, b: &Point, c: &Point) -> Point {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;

    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }

    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }

    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }

    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Closest point on segment (a, b) to `p`.
pub fn closest_point_on_segment(p: &Point, a: &Point, b: &Point) -> Point {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return *a;
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

/// Area of the convex polygon with vertices `pts` (any order around the hull),
/// computed after sorting around the centroid in the plane with normal `n`.
pub fn convex_polygon_area(pts: &[Point], n: &Vec3) -> f64 {
    if pts.len() < 3 {
        return 0.0;
    }
    let order = order_around_centroid(pts, n);
    let mut acc = Vec3::zeros();
    for i in 0..order.len() {
        let p = pts[order[i]].coords;
        let q = pts[order[(i + 1) % order.len()]].coords;
        acc += p.cross(&q);
    }
    0.5 * acc.dot(n).abs()
}

/// Indices of `pts` ordered counter-clockwise around their centroid when viewed
/// from the tip of `n`.
pub fn order_around_centroid(pts: &[Point], n: &Vec3) -> Vec<usize> {
    if pts.len() <= 2 {
        return (0..pts.len()).collect();
    }
    let centroid = pts
        .iter()
        .fold(Vec3::zeros(), |acc, p| acc + p.coords)
        / pts.len() as f64;
    let u = pick_tangent(n);
    let v = n.cross(&u);
    let mut idx: Vec<(usize, f64)> = pts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d = p.coords - centroid;
            (i, d.dot(&v).atan2(d.dot(&u)))
        })
        .collect();
    idx.sort_by(|a, b| a.1.total_cmp(&b.1));
    idx.into_iter().map(|(i, _)| i).collect()
}

/// Any unit vector orthogonal to `n`.
pub fn pick_tangent(n: &Vec3) -> Vec3 {
    let axis = if n.x.abs() < 0.9 {
        Vec3::x()
    } else {
        Vec3::y()
    };
    let u = n.cross(&axis);
    u / u.norm()
}

/// Intersection of overlapping 1D intervals, as a length (0 when disjoint).
pub fn interval_overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
    let lo = a.0.min(a.1).max(b.0.min(b.1));
    let hi = a.0.max(a.1).min(b.0.max(b.1));
    (hi - lo).max(0.0)
}

/// Area of the intersection of two convex polygons lying in the plane with
/// normal `n` (Sutherland-Hodgman in the 2D chart of that plane).
pub fn convex_polygon_overlap_area(pa: &[Point], pb: &[Point], n: &Vec3) -> f64 {
    if pa.len() < 3 || pb.len() < 3 {
        return 0.0;
    }
    let u = pick_tangent(n);
    let v = n.cross(&u);
    let origin = pa[0];
    let to2d = |p: &Point| -> (f64, f64) {
        let d = p - origin;
        (d.dot(&u), d.dot(&v))
    };
    let order_a = order_around_centroid(pa, n);
    let order_b = order_around_centroid(pb, n);
    let a2d: Vec<(f64, f64)> = order_a.iter().map(|&i| to2d(&pa[i])).collect();
    let mut clip: Vec<(f64, f64)> = order_b.iter().map(|&i| to2d(&pb[i])).collect();

    // CCW signed area; flip the clip polygon if it came out clockwise.
    let signed = |poly: &[(f64, f64)]| -> f64 {
        let mut s = 0.0;
        for i in 0..poly.len() {
            let (x0, y0) = poly[i];
            let (x1, y1) = poly[(i + 1) % poly.len()];
            s += x0 * y1 - x1 * y0;
        }
        0.5 * s
    };
    let mut subject = a2d;
    if signed(&subject) < 0.0 {
        subject.reverse();
    }
    if signed(&clip) < 0.0 {
        clip.reverse();
    }

    for i in 0..clip.len() {
        if subject.is_empty() {
            return 0.0;
        }
        let (ex0, ey0) = clip[i];
        let (ex1, ey1) = clip[(i + 1) % clip.len()];
        let inside = |p: (f64, f64)| (ex1 - ex0) * (p.1 - ey0) - (ey1 - ey0) * (p.0 - ex0) >= 0.0;
        let mut out = Vec::with_capacity(subject.len() + 2);
        for j in 0..subject.len() {
            let cur = subject[j];
            let prev = subject[(j + subject.len() - 1) % subject.len()];
            let cur_in = inside(cur);
            let prev_in = inside(prev);
            if cur_in != prev_in {
                let dx = cur.0 - prev.0;
                let dy = cur.1 - prev.1;
                let denom = (ex1 - ex0) * dy - (ey1 - ey0) * dx;
                if denom.abs() > 0.0 {
                    let t = ((ex1 - ex0) * (ey0 - prev.1) - (ey1 - ey0) * (ex0 - prev.0)) / denom;
                    out.push((prev.0 + t * dx, prev.1 + t * dy));
                }
            }
            if cur_in {
                out.push(cur);
            }
        }
        subject = out;
    }
    signed(&subject).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tet_volume_unit() {
        let v = tet_volume(
            &Point::origin(),
            &Point::new(1.0, 0.0, 0.0),
            &Point::new(0.0, 1.0, 0.0),
            &Point::new(0.0, 0.0, 1.0),
        );
        assert!((v - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn closest_point_cases() {
        let a = Point::new(0.0, 0.0, 0.0);
        let b = Point::new(1.0, 0.0, 0.0);
        let c = Point::new(0.0, 1.0, 0.0);
        // Above the interior: projects onto the plane.
        let q = closest_point_on_triangle(&Point::new(0.2, 0.2, 1.0), &a, &b, &c);
        assert!((q - Point::new(0.2, 0.2, 0.0)).norm() < 1e-14);
        // Beyond vertex b.
        let q = closest_point_on_triangle(&Point::new(2.0, -1.0, 0.0), &a, &b, &c);
        assert!((q - b).norm() < 1e-14);
        // Beside edge ab.
        let q = closest_point_on_triangle(&Point::new(0.5, -1.0, 0.5), &a, &b, &c);
        assert!((q - Point::new(0.5, 0.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn polygon_overlap_unit_squares() {
        let n = Vec3::z();
        let sq = |x0: f64, y0: f64| -> Vec<Point> {
            vec![
                Point::new(x0, y0, 0.0),
                Point::new(x0 + 1.0, y0, 0.0),
                Point::new(x0 + 1.0, y0 + 1.0, 0.0),
                Point::new(x0, y0 + 1.0, 0.0),
            ]
        };
        let a = sq(0.0, 0.0);
        let b = sq(0.5, 0.5);
        let area = convex_polygon_overlap_area(&a, &b, &n);
        assert!((area - 0.25).abs() < 1e-12);
        let c = sq(2.0, 2.0);
        assert_eq!(convex_polygon_overlap_area(&a, &c, &n), 0.0);
    }
}
