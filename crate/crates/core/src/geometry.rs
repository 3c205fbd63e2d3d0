//! Cubic Bézier curves, uniform flattening and point-to-curve distance.

use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

/// Default number of flattening segments used for distance queries.
pub const DEFAULT_SEGMENTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Point) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Component-wise scaling, e.g. normalized to pixel coordinates.
    pub fn scale(self, sx: f64, sy: f64) -> Point {
        Point::new(self.x * sx, self.y * sy)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

/// Cubic Bernstein basis at `t`.
#[inline]
pub fn bernstein(t: f64) -> [f64; 4] {
    let u = 1.0 - t;
    [u * u * u, 3.0 * u * u * t, 3.0 * u * t * t, t * t * t]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicBezier {
    pub points: [Point; 4],
}

impl CubicBezier {
    pub const fn new(p1: Point, p2: Point, p3: Point, p4: Point) -> Self {
        Self {
            points: [p1, p2, p3, p4],
        }
    }

    /// Builds a curve from `[x1, y1, x2, y2, x3, y3, x4, y4]`.
    pub fn from_coords(c: [f64; 8]) -> Self {
        Self::new(
            Point::new(c[0], c[1]),
            Point::new(c[2], c[3]),
            Point::new(c[4], c[5]),
            Point::new(c[6], c[7]),
        )
    }

    pub fn coords(&self) -> [f64; 8] {
        let p = &self.points;
        [p[0].x, p[0].y, p[1].x, p[1].y, p[2].x, p[2].y, p[3].x, p[3].y]
    }

    pub fn reversed(&self) -> Self {
        let p = self.points;
        Self::new(p[3], p[2], p[1], p[0])
    }

    pub fn map(&self, f: impl Fn(Point) -> Point) -> Self {
        let p = self.points;
        Self::new(f(p[0]), f(p[1]), f(p[2]), f(p[3]))
    }

    /// Evaluates without the domain check; callers guarantee `t` is in [0, 1].
    #[inline]
    pub(crate) fn eval_at(&self, t: f64) -> Point {
        let b = bernstein(t);
        let p = &self.points;
        Point::new(
            b[0] * p[0].x + b[1] * p[1].x + b[2] * p[2].x + b[3] * p[3].x,
            b[0] * p[0].y + b[1] * p[1].y + b[2] * p[2].y + b[3] * p[3].y,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    vertices: Vec<Point>,
}

impl Polyline {
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::domain("a polyline needs at least 2 vertices"));
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn segments(&self) -> usize {
        self.vertices.len() - 1
    }

    /// Axis-aligned bounds `(min, max)` of the vertices.
    pub fn bounds(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }
}

/// `B(t) = (1-t)^3 p1 + 3(1-t)^2 t p2 + 3(1-t) t^2 p3 + t^3 p4`.
pub fn bezier_eval(curve: &CubicBezier, t: f64) -> Result<Point> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::domain(format!("bezier parameter {t} outside [0, 1]")));
    }
    Ok(curve.eval_at(t))
}

/// Samples the curve at `i / segments` for `i = 0..=segments`.
pub fn flatten(curve: &CubicBezier, segments: usize) -> Result<Polyline> {
    if segments == 0 {
        return Err(Error::domain("flatten needs at least one segment"));
    }
    let k = segments as f64;
    let vertices = (0..=segments)
        .map(|i| curve.eval_at(i as f64 / k))
        .collect();
    Ok(Polyline { vertices })
}

/// Nearest point on segment `ab` to `q` as the clamped projection parameter.
#[inline]
pub(crate) fn segment_projection(q: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 <= 0.0 {
        0.0
    } else {
        ((q - a).dot(ab) / len2).clamp(0.0, 1.0)
    }
}

pub fn point_segment_distance(q: Point, a: Point, b: Point) -> f64 {
    let s = segment_projection(q, a, b);
    q.distance(a + (b - a) * s)
}

/// Closest flattened segment to a query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentHit {
    pub distance: f64,
    /// Index of the winning segment (vertices `segment` and `segment + 1`).
    pub segment: usize,
    /// Clamped projection parameter within the winning segment.
    pub s: f64,
}

impl SegmentHit {
    /// Curve parameter of the hit, interpolated linearly within the segment.
    pub fn curve_t(&self, segments: usize) -> f64 {
        (self.segment as f64 + self.s) / segments as f64
    }
}

/// Minimum distance from `q` to a polyline; the first segment wins ties.
pub fn nearest_on_polyline(q: Point, poly: &Polyline) -> SegmentHit {
    let v = &poly.vertices;
    let mut best = SegmentHit {
        distance: f64::INFINITY,
        segment: 0,
        s: 0.0,
    };
    let mut best_d2 = f64::INFINITY;
    for i in 0..v.len() - 1 {
        let (a, b) = (v[i], v[i + 1]);
        let s = segment_projection(q, a, b);
        let p = a + (b - a) * s;
        let d = q - p;
        let d2 = d.dot(d);
        if d2 < best_d2 {
            best_d2 = d2;
            best.segment = i;
            best.s = s;
        }
    }
    best.distance = best_d2.sqrt();
    best
}

/// Distance from `q` to the curve flattened into `segments` pieces, together
/// with the curve parameter of the nearest point.
pub fn point_curve_distance(q: Point, curve: &CubicBezier, segments: usize) -> Result<(f64, f64)> {
    let poly = flatten(curve, segments)?;
    let hit = nearest_on_polyline(q, &poly);
    Ok((hit.distance, hit.curve_t(segments)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::XorShift64Star;

    fn random_curve(r: &mut XorShift64Star) -> CubicBezier {
        let mut c = [0.0; 8];
        for v in &mut c {
            *v = r.next_f64();
        }
        CubicBezier::from_coords(c)
    }

    fn de_casteljau(c: &CubicBezier, t: f64) -> Point {
        let mut p = c.points.to_vec();
        while p.len() > 1 {
            p = p.windows(2).map(|w| w[0] * (1.0 - t) + w[1] * t).collect();
        }
        p[0]
    }

    fn diagonal() -> CubicBezier {
        CubicBezier::new(
            Point::new(0.0, 0.0),
            Point::new(1.0 / 3.0, 1.0 / 3.0),
            Point::new(2.0 / 3.0, 2.0 / 3.0),
            Point::new(1.0, 1.0),
        )
    }

    #[test]
    fn endpoints_interpolate() {
        let mut r = XorShift64Star::new(3);
        let c = random_curve(&mut r);
        assert_eq!(bezier_eval(&c, 0.0).unwrap(), c.points[0]);
        assert_eq!(bezier_eval(&c, 1.0).unwrap(), c.points[3]);
    }

    #[test]
    fn collinear_midpoint() {
        let p = bezier_eval(&diagonal(), 0.5).unwrap();
        assert!((p.x - 0.5).abs() < 1e-15 && (p.y - 0.5).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_parameter() {
        assert!(matches!(bezier_eval(&diagonal(), 1.5), Err(Error::Domain(_))));
        assert!(bezier_eval(&diagonal(), -1e-9).is_err());
    }

    #[test]
    fn matches_de_casteljau() {
        let mut r = XorShift64Star::new(11);
        for _ in 0..500 {
            let c = random_curve(&mut r);
            let t = r.next_f64();
            let a = bezier_eval(&c, t).unwrap();
            let b = de_casteljau(&c, t);
            assert!(a.distance(b) < 1e-12);
        }
    }

    #[test]
    fn flatten_shapes() {
        let c = diagonal();
        let one = flatten(&c, 1).unwrap();
        assert_eq!(one.vertices(), &[c.points[0], c.points[3]]);
        let two = flatten(&c, 2).unwrap();
        assert!(two.vertices()[1].distance(Point::new(0.5, 0.5)) < 1e-15);
        assert!(flatten(&c, 0).is_err());
        assert!(Polyline::new(vec![Point::default()]).is_err());
    }

    #[test]
    fn flatten_deviation_bound() {
        let mut r = XorShift64Star::new(5);
        for _ in 0..20 {
            let c = random_curve(&mut r);
            let poly = flatten(&c, 64).unwrap();
            let worst = (0..=10_000)
                .map(|i| nearest_on_polyline(c.eval_at(i as f64 / 10_000.0), &poly).distance)
                .fold(0.0, f64::max);
            assert!(worst <= 1e-3, "deviation {worst}");
        }
    }

    #[test]
    fn segment_distance_cases() {
        let o = Point::new(0.0, 0.0);
        let b = Point::new(2.0, 0.0);
        assert_eq!(point_segment_distance(Point::new(1.0, 0.0), o, b), 0.0);
        assert_eq!(point_segment_distance(Point::new(0.0, 1.0), o, b), 1.0);
        let d = point_segment_distance(Point::new(3.0, 1.0), o, b);
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
        // degenerate segment
        assert_eq!(point_segment_distance(Point::new(3.0, 4.0), o, o), 5.0);
    }

    #[test]
    fn straight_curve_distance() {
        let c = CubicBezier::new(
            Point::new(0.0, 0.0),
            Point::new(1.0 / 3.0, 0.0),
            Point::new(2.0 / 3.0, 0.0),
            Point::new(1.0, 0.0),
        );
        let (d, t) = point_curve_distance(Point::new(0.5, 0.5), &c, 64).unwrap();
        assert!((d - 0.5).abs() < 1e-12);
        assert!((t - 0.5).abs() < 1e-12);
    }

    #[test]
    fn on_curve_point_is_close() {
        let mut r = XorShift64Star::new(8);
        let c = random_curve(&mut r);
        let q = c.eval_at(0.3);
        let (d, t) = point_curve_distance(q, &c, 64).unwrap();
        assert!(d <= 1e-3);
        assert!((t - 0.3).abs() < 0.05);
    }

    #[test]
    fn brute_force_distance() {
        let mut r = XorShift64Star::new(21);
        for _ in 0..100 {
            let c = random_curve(&mut r);
            let q = Point::new(r.uniform(-0.2, 1.2), r.uniform(-0.2, 1.2));
            let brute = (0..=10_000)
                .map(|i| q.distance(de_casteljau(&c, i as f64 / 10_000.0)))
                .fold(f64::INFINITY, f64::min);
            let (d, _) = point_curve_distance(q, &c, 64).unwrap();
            assert!((d - brute).abs() <= 1e-3, "{d} vs {brute}");
        }
    }

    #[test]
    fn doubling_segments_never_increases_distance() {
        let mut r = XorShift64Star::new(2);
        for _ in 0..200 {
            let c = random_curve(&mut r);
            let q = Point::new(r.next_f64(), r.next_f64());
            let mut prev = f64::INFINITY;
            for k in [4, 8, 16, 32, 64, 128] {
                let (d, _) = point_curve_distance(q, &c, k).unwrap();
                // vertex sets are nested under doubling
                let vmin = flatten(&c, k)
                    .unwrap()
                    .vertices()
                    .iter()
                    .map(|v| q.distance(*v))
                    .fold(f64::INFINITY, f64::min);
                assert!(d <= vmin + 1e-15);
                assert!(vmin <= prev + 1e-15);
                prev = vmin;
            }
        }
    }

    #[test]
    fn reversal_symmetry() {
        let mut r = XorShift64Star::new(4);
        for _ in 0..200 {
            let c = random_curve(&mut r);
            let q = Point::new(r.next_f64(), r.next_f64());
            let (a, _) = point_curve_distance(q, &c, 64).unwrap();
            let (b, _) = point_curve_distance(q, &c.reversed(), 64).unwrap();
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn affine_equivariance() {
        let mut r = XorShift64Star::new(9);
        let m = [1.3, -0.4, 0.2, 0.7, 0.9, -0.1];
        let tf = |p: Point| Point::new(m[0] * p.x + m[1] * p.y + m[2], m[3] * p.x + m[4] * p.y + m[5]);
        for _ in 0..100 {
            let c = random_curve(&mut r);
            let t = r.next_f64();
            let a = tf(bezier_eval(&c, t).unwrap());
            let b = bezier_eval(&c.map(tf), t).unwrap();
            assert!(a.distance(b) < 1e-12);
        }
    }
}
