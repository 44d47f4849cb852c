//! Planar geometry for detection boxes and trapezium instance boundaries.
//!
//! Screen coordinates: x grows rightward, y grows downward. Everything is
//! double precision; nothing is snapped to integer pixels. The shoelace
//! formulas are winding-sign-agnostic, so polygons may be given in either
//! orientation; [`Trapezium`] itself always stores its vertices in the
//! fixed order TL, TR, BR, BL with the two parallel sides vertical.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Polygon areas at or below this are treated as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Clip results with absolute area below this count as an empty intersection.
pub const EMPTY_CLIP_AREA: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid rect ({x1}, {y1}, {x2}, {y2}): requires finite x1 < x2 and y1 < y2")]
    InvalidRect { x1: f64, y1: f64, x2: f64, y2: f64 },
    #[error("degenerate polygon: |area| = {0:e}")]
    DegeneratePolygon(f64),
    #[error("invalid trapezium: {0}")]
    InvalidTrapezium(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Axis-aligned pixel box, the universal detection geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl Rect {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        let ok = x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite();
        if !ok || x1 >= x2 || y1 >= y2 {
            return Err(GeometryError::InvalidRect { x1, y1, x2, y2 });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        Point::new((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    /// Corners in TL, TR, BR, BL order (positive shoelace area in screen coords).
    pub fn corners(&self) -> [Point; 4] {
        [
            Point::new(self.x1, self.y1),
            Point::new(self.x2, self.y1),
            Point::new(self.x2, self.y2),
            Point::new(self.x1, self.y2),
        ]
    }

    pub fn intersection_area(&self, other: &Rect) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }

    /// Smallest rect containing both.
    pub fn union_bbox(&self, other: &Rect) -> Rect {
        Rect {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }

    pub fn contains_point(&self, p: Point) -> bool {
        p.x >= self.x1 && p.x <= self.x2 && p.y >= self.y1 && p.y <= self.y2
    }

    /// Grows (or shrinks) both dimensions by `factor` about the center,
    /// e.g. `factor = 1.10` adds 5% on each side.
    pub fn scaled_about_center(&self, factor: f64) -> Result<Rect, GeometryError> {
        let c = self.center();
        Rect::from_center(c.x, c.y, self.width() * factor, self.height() * factor)
    }

    /// Intersection with `frame`, or `None` when empty.
    pub fn clip_to(&self, frame: &Rect) -> Option<Rect> {
        Rect::new(
            self.x1.max(frame.x1),
            self.y1.max(frame.y1),
            self.x2.min(frame.x2),
            self.y2.min(frame.y2),
        )
        .ok()
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Rect {
        Rect {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }
}

/// Intersection over union of two rects; 0 when disjoint.
pub fn rect_iou(a: &Rect, b: &Rect) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Four-vertex polygon with two vertical parallel sides: the instance
/// boundary circumscribing one motorcycle and its riders.
///
/// Vertices are stored in the fixed order TL, TR, BR, BL; vertices 0 and 3
/// form the left side, vertices 1 and 2 the right side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trapezium {
    vertices: [Point; 4],
}

impl Trapezium {
    /// Validates the vertical-parallel-sides invariants and simplicity.
    pub fn new(vertices: [Point; 4]) -> Result<Self, GeometryError> {
        let [tl, tr, br, bl] = vertices;
        for p in &vertices {
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(GeometryError::InvalidTrapezium("non-finite vertex".into()));
            }
        }
        if (tl.x - bl.x).abs() > 1e-9 || (tr.x - br.x).abs() > 1e-9 {
            return Err(GeometryError::InvalidTrapezium(
                "parallel sides must be vertical (vertices 0/3 and 1/2 share x)".into(),
            ));
        }
        if tl.x >= tr.x {
            return Err(GeometryError::InvalidTrapezium(
                "left side must lie left of right side".into(),
            ));
        }
        if bl.y < tl.y || br.y < tr.y {
            return Err(GeometryError::InvalidTrapezium(
                "sides cross: bottom vertex above top vertex".into(),
            ));
        }
        let area = signed_area(&vertices).abs();
        if area <= DEGENERATE_AREA {
            return Err(GeometryError::DegeneratePolygon(area));
        }
        Ok(Self { vertices })
    }

    pub fn from_rect(r: &Rect) -> Self {
        Self {
            vertices: r.corners(),
        }
    }

    pub fn vertices(&self) -> &[Point; 4] {
        &self.vertices
    }

    pub fn left_x(&self) -> f64 {
        self.vertices[0].x
    }

    pub fn right_x(&self) -> f64 {
        self.vertices[1].x
    }

    /// Perpendicular distance between the two vertical parallel sides.
    pub fn width(&self) -> f64 {
        self.right_x() - self.left_x()
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices).abs()
    }

    pub fn centroid(&self) -> Point {
        // Valid trapezia always have |area| above the degenerate cutoff.
        centroid(&self.vertices).expect("valid trapezium has non-degenerate area")
    }

    pub fn bounding_rect(&self) -> Rect {
        let xs = self.vertices.iter().map(|p| p.x);
        let ys = self.vertices.iter().map(|p| p.y);
        Rect {
            x1: xs.clone().fold(f64::INFINITY, f64::min),
            y1: ys.clone().fold(f64::INFINITY, f64::min),
            x2: xs.fold(f64::NEG_INFINITY, f64::max),
            y2: ys.fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Flat `[x0,y0,x1,y1,x2,y2,x3,y3]` form used in stream records.
    pub fn to_flat(&self) -> [f64; 8] {
        let v = &self.vertices;
        [
            v[0].x, v[0].y, v[1].x, v[1].y, v[2].x, v[2].y, v[3].x, v[3].y,
        ]
    }

    pub fn from_flat(flat: &[f64; 8]) -> Result<Self, GeometryError> {
        Self::new([
            Point::new(flat[0], flat[1]),
            Point::new(flat[2], flat[3]),
            Point::new(flat[4], flat[5]),
            Point::new(flat[6], flat[7]),
        ])
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Trapezium {
        let mut v = self.vertices;
        for p in &mut v {
            p.x += dx;
            p.y += dy;
        }
        Trapezium { vertices: v }
    }
}

/// Signed polygon area: `A = sum(x_i*y_{i+1} - x_{i+1}*y_i) / 2` with cyclic
/// indexing. Degenerate input yields 0.
pub fn signed_area(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    if n < 3 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        sum += vertices[i].x * vertices[j].y - vertices[j].x * vertices[i].y;
    }
    sum / 2.0
}

/// Polygon centroid from the signed-area weighted sums. Identical under
/// winding reversal since numerator and area flip sign together.
pub fn centroid(vertices: &[Point]) -> Result<Point, GeometryError> {
    let a = signed_area(vertices);
    if a.abs() <= DEGENERATE_AREA {
        return Err(GeometryError::DegeneratePolygon(a.abs()));
    }
    let n = vertices.len();
    let (mut sx, mut sy) = (0.0, 0.0);
    for i in 0..n {
        let j = (i + 1) % n;
        let cross = vertices[i].x * vertices[j].y - vertices[j].x * vertices[i].y;
        sx += (vertices[i].x + vertices[j].x) * cross;
        sy += (vertices[i].y + vertices[j].y) * cross;
    }
    Ok(Point::new(sx / (6.0 * a), sy / (6.0 * a)))
}

/// Clips a convex polygon against each directed edge of a convex clip
/// polygon (Sutherland–Hodgman). The clip polygon may be in either winding;
/// it is reoriented to positive shoelace sign internally.
pub fn clip_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    if subject.is_empty() || clip.len() < 3 {
        return Vec::new();
    }
    let mut clip_pts: Vec<Point> = clip.to_vec();
    if signed_area(&clip_pts) < 0.0 {
        clip_pts.reverse();
    }
    let mut pts = subject.to_vec();
    let m = clip_pts.len();
    for e in 0..m {
        if pts.is_empty() {
            break;
        }
        let a = clip_pts[e];
        let b = clip_pts[(e + 1) % m];
        let (ex, ey) = (b.x - a.x, b.y - a.y);
        let side = |p: &Point| ex * (p.y - a.y) - ey * (p.x - a.x);

        let mut out = Vec::with_capacity(pts.len() + 2);
        let mut prev = *pts.last().unwrap();
        let mut prev_side = side(&prev);
        for p in pts {
            let s = side(&p);
            if (s >= 0.0) != (prev_side >= 0.0) {
                // Edge crosses the clip line; denominator nonzero since the
                // signs differ.
                let t = prev_side / (prev_side - s);
                out.push(Point::new(
                    prev.x + t * (p.x - prev.x),
                    prev.y + t * (p.y - prev.y),
                ));
            }
            if s >= 0.0 {
                out.push(p);
            }
            prev = p;
            prev_side = s;
        }
        pts = out;
    }
    pts
}

/// Successive half-plane clipping of a convex polygon against the four rect
/// edges. Returns the intersection polygon (possibly empty).
pub fn clip_polygon(poly: &[Point], clip: &Rect) -> Vec<Point> {
    clip_convex(poly, &clip.corners())
}

/// IOU between a trapezium and a rect via exact polygon clipping.
pub fn trap_rect_iou(t: &Trapezium, r: &Rect) -> f64 {
    let mut inter = signed_area(&clip_polygon(t.vertices(), r)).abs();
    if inter < EMPTY_CLIP_AREA {
        inter = 0.0;
    }
    let union = t.area() + r.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// IOU between two convex polygons.
pub fn convex_iou(a: &[Point], b: &[Point]) -> f64 {
    let area_a = signed_area(a).abs();
    let area_b = signed_area(b).abs();
    if area_a <= DEGENERATE_AREA || area_b <= DEGENERATE_AREA {
        return 0.0;
    }
    let mut inter = signed_area(&clip_convex(a, b)).abs();
    if inter < EMPTY_CLIP_AREA {
        inter = 0.0;
    }
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Whether `p` lies inside the convex polygon, within a signed-distance
/// tolerance: `tol > 0` admits points slightly outside, `tol < 0` demands
/// points strictly inside by at least `|tol|`.
pub fn convex_contains(poly: &[Point], p: Point, tol: f64) -> bool {
    if poly.len() < 3 {
        return false;
    }
    let mut pts = poly.to_vec();
    if signed_area(&pts) < 0.0 {
        pts.reverse();
    }
    let n = pts.len();
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        let (ex, ey) = (b.x - a.x, b.y - a.y);
        let len = (ex * ex + ey * ey).sqrt();
        if len <= 0.0 {
            continue;
        }
        let dist = (ex * (p.y - a.y) - ey * (p.x - a.x)) / len;
        if dist < -tol {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn pts(coords: &[(f64, f64)]) -> Vec<Point> {
        coords.iter().map(|&(x, y)| Point::new(x, y)).collect()
    }

    /// The worked trapezium used across area/centroid/IOU cases:
    /// TL (0,0), TR (3,-1), BR (3,3), BL (0,2).
    fn worked_trapezium() -> [Point; 4] {
        [
            Point::new(0.0, 0.0),
            Point::new(3.0, -1.0),
            Point::new(3.0, 3.0),
            Point::new(0.0, 2.0),
        ]
    }

    #[test]
    fn signed_area_unit_square() {
        let sq = pts(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        assert_eq!(signed_area(&sq), 1.0);
    }

    #[test]
    fn signed_area_worked_trapezium() {
        assert!((signed_area(&worked_trapezium()) - 9.0).abs() < 1e-12);
    }

    #[test]
    fn signed_area_collinear_is_zero() {
        let line = pts(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]);
        assert_eq!(signed_area(&line), 0.0);
    }

    #[test]
    fn centroid_unit_square() {
        let sq = pts(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        let c = centroid(&sq).unwrap();
        assert!((c.x - 0.5).abs() < 1e-12 && (c.y - 0.5).abs() < 1e-12);
    }

    #[test]
    fn centroid_worked_trapezium() {
        let c = centroid(&worked_trapezium()).unwrap();
        assert!((c.x - 5.0 / 3.0).abs() < 1e-12);
        assert!((c.y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn centroid_invariant_under_winding_reversal() {
        let mut rev = worked_trapezium().to_vec();
        rev.reverse();
        let c = centroid(&rev).unwrap();
        assert!((c.x - 5.0 / 3.0).abs() < 1e-12);
        assert!((c.y - 1.0).abs() < 1e-12);
        assert!((signed_area(&rev) + 9.0).abs() < 1e-12);
    }

    #[test]
    fn centroid_degenerate_errors() {
        let line = pts(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]);
        assert!(matches!(
            centroid(&line),
            Err(GeometryError::DegeneratePolygon(_))
        ));
    }

    #[test]
    fn rect_iou_cases() {
        let a = Rect::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(rect_iou(&a, &a), 1.0);
        let far = Rect::new(5.0, 5.0, 6.0, 6.0).unwrap();
        assert_eq!(rect_iou(&a, &far), 0.0);
        let b = Rect::new(0.0, 0.0, 2.0, 2.0).unwrap();
        let c = Rect::new(1.0, 0.0, 3.0, 2.0).unwrap();
        assert!((rect_iou(&b, &c) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn clip_polygon_identity_and_inside() {
        let clip = Rect::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let sq = clip.corners().to_vec();
        let out = clip_polygon(&sq, &clip);
        assert!((signed_area(&out).abs() - 1.0).abs() < 1e-12);

        let inner = pts(&[(0.2, 0.2), (0.8, 0.3), (0.7, 0.9), (0.3, 0.8)]);
        let out = clip_polygon(&inner, &clip);
        assert_eq!(out, inner);
    }

    #[test]
    fn clip_rect_fully_inside_trapezium() {
        let trap = worked_trapezium();
        let clip = Rect::new(1.0, 0.0, 2.0, 1.0).unwrap();
        for c in clip.corners() {
            assert!(convex_contains(&trap, c, 1e-9));
        }
        let out = clip_polygon(&trap, &clip);
        assert!((signed_area(&out).abs() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn trap_rect_iou_cases() {
        let t = Trapezium::new(worked_trapezium()).unwrap();
        let r = Rect::new(1.0, 0.0, 2.0, 1.0).unwrap();
        assert!((trap_rect_iou(&t, &r) - 1.0 / 9.0).abs() < 1e-12);

        let r2 = Rect::new(10.0, 10.0, 11.0, 11.0).unwrap();
        assert_eq!(trap_rect_iou(&t, &r2), 0.0);

        let rect = Rect::new(2.0, 3.0, 7.0, 9.0).unwrap();
        let as_trap = Trapezium::from_rect(&rect);
        assert!((trap_rect_iou(&as_trap, &rect) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trapezium_invariants_enforced() {
        // Left side not vertical.
        assert!(Trapezium::new([
            Point::new(0.0, 0.0),
            Point::new(3.0, 0.0),
            Point::new(3.0, 2.0),
            Point::new(0.5, 2.0),
        ])
        .is_err());
        // Crossed sides.
        assert!(Trapezium::new([
            Point::new(0.0, 2.0),
            Point::new(3.0, 0.0),
            Point::new(3.0, 2.0),
            Point::new(0.0, 0.0),
        ])
        .is_err());
        // Left side right of right side.
        assert!(Trapezium::new([
            Point::new(3.0, 0.0),
            Point::new(0.0, 0.0),
            Point::new(0.0, 2.0),
            Point::new(3.0, 2.0),
        ])
        .is_err());
        let t = Trapezium::new(worked_trapezium()).unwrap();
        assert!((t.width() - 3.0).abs() < 1e-12);
        assert!((t.area() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn trapezium_flat_round_trip() {
        let t = Trapezium::new(worked_trapezium()).unwrap();
        let back = Trapezium::from_flat(&t.to_flat()).unwrap();
        assert_eq!(t, back);
    }

    fn random_simple_quad(rng: &mut StdRng) -> Vec<Point> {
        // Angle-sorting 4 random points around their mean always yields a
        // simple (star-shaped) quadrilateral.
        loop {
            let raw: Vec<Point> = (0..4)
                .map(|_| Point::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)))
                .collect();
            let cx = raw.iter().map(|p| p.x).sum::<f64>() / 4.0;
            let cy = raw.iter().map(|p| p.y).sum::<f64>() / 4.0;
            let mut sorted = raw.clone();
            sorted.sort_by(|a, b| {
                (a.y - cy)
                    .atan2(a.x - cx)
                    .partial_cmp(&(b.y - cy).atan2(b.x - cx))
                    .unwrap()
            });
            if signed_area(&sorted).abs() > 1.0 {
                return sorted;
            }
        }
    }

    #[test]
    fn area_matches_triangle_split_on_random_quads() {
        let mut rng = StdRng::seed_from_u64(11);
        let tri = |a: Point, b: Point, c: Point| signed_area(&[a, b, c]);
        for _ in 0..1000 {
            let q = random_simple_quad(&mut rng);
            // Pick an interior diagonal: the one whose two triangles share a sign.
            let (t1, t2) = {
                let (a, b) = (tri(q[0], q[1], q[2]), tri(q[0], q[2], q[3]));
                if a.signum() == b.signum() {
                    (a, b)
                } else {
                    (tri(q[1], q[2], q[3]), tri(q[1], q[3], q[0]))
                }
            };
            let whole = signed_area(&q).abs();
            let split = t1.abs() + t2.abs();
            assert!(
                (whole - split).abs() <= 1e-9 * split.max(1.0),
                "quad {q:?}: {whole} vs {split}"
            );
        }
    }

    #[test]
    fn centroid_lies_inside_convex_quads() {
        let mut rng = StdRng::seed_from_u64(12);
        let mut checked = 0;
        while checked < 300 {
            let q = random_simple_quad(&mut rng);
            // Keep convex ones: all cross products share a sign.
            let cross = |a: Point, b: Point, c: Point| (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
            let signs: Vec<f64> = (0..4)
                .map(|i| cross(q[i], q[(i + 1) % 4], q[(i + 2) % 4]))
                .collect();
            if !(signs.iter().all(|&s| s > 1e-9) || signs.iter().all(|&s| s < -1e-9)) {
                continue;
            }
            let c = centroid(&q).unwrap();
            assert!(convex_contains(&q, c, -1e-9), "centroid outside {q:?}");
            checked += 1;
        }
    }

    fn random_trapezium(rng: &mut StdRng) -> Trapezium {
        let left = rng.random_range(0.0..400.0);
        let right = left + rng.random_range(10.0..300.0);
        let tl = rng.random_range(0.0..300.0);
        let tr = rng.random_range(0.0..300.0);
        let bl = tl + rng.random_range(5.0..300.0);
        let br = tr + rng.random_range(5.0..300.0);
        Trapezium::new([
            Point::new(left, tl),
            Point::new(right, tr),
            Point::new(right, br),
            Point::new(left, bl),
        ])
        .unwrap()
    }

    fn monte_carlo_trap_rect_iou(t: &Trapezium, r: &Rect, samples: usize, rng: &mut StdRng) -> f64 {
        let bb = t.bounding_rect().union_bbox(r);
        let mut in_both = 0u64;
        let mut in_either = 0u64;
        for _ in 0..samples {
            let p = Point::new(
                rng.random_range(bb.x1..bb.x2),
                rng.random_range(bb.y1..bb.y2),
            );
            let it = convex_contains(t.vertices(), p, 0.0);
            let ir = r.contains_point(p);
            if it && ir {
                in_both += 1;
            }
            if it || ir {
                in_either += 1;
            }
        }
        if in_either == 0 {
            0.0
        } else {
            in_both as f64 / in_either as f64
        }
    }

    #[test]
    fn trap_rect_iou_matches_monte_carlo() {
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..50 {
            let t = random_trapezium(&mut rng);
            let bb = t.bounding_rect();
            let r = Rect::new(
                bb.x1 + rng.random_range(-80.0..bb.width() * 0.8),
                bb.y1 + rng.random_range(-80.0..bb.height() * 0.8),
                bb.x2 + rng.random_range(-bb.width() * 0.5..80.0),
                bb.y2 + rng.random_range(-bb.height() * 0.5..80.0),
            );
            let Ok(r) = r else { continue };
            let exact = trap_rect_iou(&t, &r);
            let mc = monte_carlo_trap_rect_iou(&t, &r, 100_000, &mut rng);
            assert!(
                (exact - mc).abs() < 0.01,
                "exact {exact} vs monte-carlo {mc}"
            );
        }
    }

    #[test]
    fn iou_bounds_and_symmetry() {
        let mut rng = StdRng::seed_from_u64(14);
        for _ in 0..200 {
            let a = Rect::new(0.0, 0.0, rng.random_range(1.0..50.0), rng.random_range(1.0..50.0))
                .unwrap()
                .translated(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
            let b = Rect::new(0.0, 0.0, rng.random_range(1.0..50.0), rng.random_range(1.0..50.0))
                .unwrap()
                .translated(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
            let ab = rect_iou(&a, &b);
            let ba = rect_iou(&b, &a);
            assert_eq!(ab, ba);
            assert!((0.0..=1.0).contains(&ab));
            let t = random_trapezium(&mut rng);
            let ti = trap_rect_iou(&t, &a);
            assert!((0.0..=1.0).contains(&ti));
        }
        // IOU of 1 iff shapes coincide.
        let r = Rect::new(3.0, 4.0, 10.0, 12.0).unwrap();
        assert!((rect_iou(&r, &r) - 1.0).abs() < 1e-9);
        let shifted = r.translated(0.5, 0.0);
        assert!(rect_iou(&r, &shifted) < 1.0 - 1e-9);
    }

    #[test]
    fn convex_iou_between_trapezia() {
        let t = Trapezium::new(worked_trapezium()).unwrap();
        assert!((convex_iou(t.vertices(), t.vertices()) - 1.0).abs() < 1e-12);
        let moved = t.translated(100.0, 0.0);
        assert_eq!(convex_iou(t.vertices(), moved.vertices()), 0.0);
        let r = Rect::new(1.0, 0.0, 2.0, 1.0).unwrap();
        let as_poly = r.corners();
        assert!((convex_iou(t.vertices(), &as_poly) - 1.0 / 9.0).abs() < 1e-12);
    }
}
