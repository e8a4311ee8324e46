//! Oriented rectangles, quadrilaterals, convex polygon intersection, and IoU.
//!
//! Coordinates use the image convention: the y axis points down and a
//! rotation by +theta is clockwise on screen. A quad's signed area is
//! taken in that convention, so quads produced by [`quad_from_rbox`]
//! come out with non-negative signed area.

use thiserror::Error;

/// Below this, edge lengths and areas are treated as degenerate
/// (normalized units).
pub const DEGENERATE_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("degenerate quad: edge {edge} has length {len:.3e}")]
    DegenerateQuad { edge: usize, len: f64 },
    #[error("box width/height must be positive and finite: w={w}, h={h}")]
    DegenerateBox { w: f64, h: f64 },
    #[error("quad is not convex")]
    NonConvexQuad,
}

/// 2D point, y-down image convention.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Rotate about the origin by `theta` (clockwise on screen, y-down).
    pub fn rotated(self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn dist(self, other: Self) -> f64 {
        (self - other).norm()
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl std::ops::Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

/// Quadrilateral as four corners p1..p4.
///
/// The canonical ordering (the one [`quad_from_rbox`] and the anchor
/// decoder produce) has non-negative signed area in the y-down
/// convention. Parsed dataset quads keep their file order until
/// [`Quad::normalized`] is applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad {
    pub corners: [Point2; 4],
}

impl Quad {
    pub const fn new(corners: [Point2; 4]) -> Self {
        Self { corners }
    }

    pub fn from_xy(xy: [f64; 8]) -> Self {
        Self::new([
            Point2::new(xy[0], xy[1]),
            Point2::new(xy[2], xy[3]),
            Point2::new(xy[4], xy[5]),
            Point2::new(xy[6], xy[7]),
        ])
    }

    pub fn is_finite(&self) -> bool {
        self.corners.iter().all(|p| p.is_finite())
    }

    pub fn translated(&self, d: Point2) -> Self {
        Self::new(self.corners.map(|p| p + d))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(self.corners.map(|p| p * s))
    }

    /// Signed area, positive for the canonical corner order (y-down).
    pub fn signed_area(&self) -> f64 {
        -0.5 * shoelace_sum(&self.corners)
    }

    /// Absolute area.
    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    /// Mean of the four corners.
    pub fn centroid(&self) -> Point2 {
        let c = self.corners;
        Point2::new(
            (c[0].x + c[1].x + c[2].x + c[3].x) / 4.0,
            (c[0].y + c[1].y + c[2].y + c[3].y) / 4.0,
        )
    }

    /// Reorder into canonical (y-down positive) orientation, rejecting
    /// non-convex or self-intersecting quads. Degenerate (collinear)
    /// quads pass; they have zero area.
    pub fn normalized(&self) -> Result<Quad, GeometryError> {
        if !self.is_convex() {
            return Err(GeometryError::NonConvexQuad);
        }
        Ok(self.oriented())
    }

    /// Orientation fix only: reverse the corner order if the signed
    /// area is negative. Does not check convexity.
    pub fn oriented(&self) -> Quad {
        if self.signed_area() < 0.0 {
            let c = self.corners;
            Quad::new([c[0], c[3], c[2], c[1]])
        } else {
            *self
        }
    }

    /// True when consecutive edge cross products never change sign
    /// (collinear corners are tolerated).
    pub fn is_convex(&self) -> bool {
        let c = self.corners;
        let mut pos = false;
        let mut neg = false;
        for i in 0..4 {
            let a = c[i];
            let b = c[(i + 1) % 4];
            let d = c[(i + 2) % 4];
            let cr = cross(b - a, d - b);
            if cr > 0.0 {
                pos = true;
            } else if cr < 0.0 {
                neg = true;
            }
        }
        !(pos && neg)
    }

    /// Point-in-quad test for convex quads in canonical orientation.
    pub fn contains(&self, p: Point2) -> bool {
        let c = self.corners;
        for i in 0..4 {
            let a = c[i];
            let b = c[(i + 1) % 4];
            // canonical order: interior has non-positive standard cross
            if cross(b - a, p - a) > 0.0 {
                return false;
            }
        }
        true
    }

    /// Axis-aligned bounds as (min, max).
    pub fn aabb(&self) -> (Point2, Point2) {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in self.corners {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }
}

fn cross(a: Point2, b: Point2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Shoelace sum starting from the lexicographically smallest vertex so
/// that cyclic rotations of the same ring produce bit-identical sums.
fn shoelace_sum(ring: &[Point2]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let start = (0..n)
        .min_by(|&a, &b| {
            ring[a]
                .x
                .total_cmp(&ring[b].x)
                .then(ring[a].y.total_cmp(&ring[b].y))
        })
        .unwrap();
    let mut sum = 0.0;
    for k in 0..n {
        let a = ring[(start + k) % n];
        let b = ring[(start + k + 1) % n];
        sum += a.x * b.y - b.x * a.y;
    }
    sum
}

/// Absolute area of a polygon ring.
pub fn polygon_area(ring: &[Point2]) -> f64 {
    0.5 * shoelace_sum(ring).abs()
}

/// Oriented rectangle: center, long edge `w`, short edge `h`, and the
/// angle `theta` between the long edge and the horizontal axis, folded
/// into (-pi/2, pi/2].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatedBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub theta: f64,
}

impl RotatedBox {
    /// Canonicalizing constructor: swaps edges so `w >= h` (adjusting
    /// the angle by a quarter turn) and folds `theta` into
    /// (-pi/2, pi/2].
    pub fn new(cx: f64, cy: f64, w: f64, h: f64, theta: f64) -> Result<Self, GeometryError> {
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite() && theta.is_finite()) {
            return Err(GeometryError::DegenerateBox { w, h });
        }
        let (w, h, theta) = if w >= h {
            (w, h, fold_half_pi(theta))
        } else {
            (h, w, fold_half_pi(theta + std::f64::consts::FRAC_PI_2))
        };
        Ok(Self { cx, cy, w, h, theta })
    }

    pub fn center(&self) -> Point2 {
        Point2::new(self.cx, self.cy)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Half-diagonal (circumradius).
    pub fn radius(&self) -> f64 {
        (self.w * self.w + self.h * self.h).sqrt() / 2.0
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            cx: self.cx * s,
            cy: self.cy * s,
            w: self.w * s,
            h: self.h * s,
            theta: self.theta,
        }
    }
}

/// Fold an angle into (-pi/2, pi/2] (rectangles are pi-symmetric).
pub fn fold_half_pi(theta: f64) -> f64 {
    use std::f64::consts::{FRAC_PI_2, PI};
    let mut t = theta.rem_euclid(PI);
    if t > FRAC_PI_2 {
        t -= PI;
    }
    t
}

/// Corners of a rotated box by direct rotation of the axis-aligned
/// corner offsets. Corner order matches the anchor decoder:
/// p1 = (-w/2, +h/2), p2 = (+w/2, +h/2), p3 = (+w/2, -h/2),
/// p4 = (-w/2, -h/2), each rotated by theta and translated to center.
pub fn quad_from_rbox(b: &RotatedBox) -> Quad {
    let hw = b.w / 2.0;
    let hh = b.h / 2.0;
    let c = b.center();
    let offsets = [
        Point2::new(-hw, hh),
        Point2::new(hw, hh),
        Point2::new(hw, -hh),
        Point2::new(-hw, -hh),
    ];
    Quad::new(offsets.map(|o| o.rotated(b.theta) + c))
}

/// Best-fit rotated box for a near-rectangular quad.
///
/// Center is the corner mean, `w`/`h` are the mean lengths of the two
/// opposite-edge pairs, and `theta` comes from the longer pair's
/// direction. Exact ties on edge length (squares) resolve to the
/// candidate angle with the smaller magnitude.
pub fn rbox_from_quad(q: &Quad) -> Result<RotatedBox, GeometryError> {
    let c = q.corners;
    for i in 0..4 {
        let len = c[i].dist(c[(i + 1) % 4]);
        if len < DEGENERATE_EPS {
            return Err(GeometryError::DegenerateQuad { edge: i, len });
        }
    }
    let center = q.centroid();
    // opposite pairs: (p1->p2, p4->p3) and (p2->p3, p1->p4)
    let e12 = c[1] - c[0];
    let e43 = c[2] - c[3];
    let e23 = c[2] - c[1];
    let e14 = c[3] - c[0];
    let len_a = (e12.norm() + e43.norm()) / 2.0;
    let len_b = (e23.norm() + e14.norm()) / 2.0;
    let dir_a = Point2::new(e12.x + e43.x, e12.y + e43.y);
    let dir_b = Point2::new(e23.x + e14.x, e23.y + e14.y);
    let angle_of = |d: Point2| fold_half_pi(d.y.atan2(d.x));
    let (w, h, theta) = if len_a > len_b {
        (len_a, len_b, angle_of(dir_a))
    } else if len_b > len_a {
        (len_b, len_a, angle_of(dir_b))
    } else {
        let ta = angle_of(dir_a);
        let tb = angle_of(dir_b);
        (len_a, len_b, if ta.abs() <= tb.abs() { ta } else { tb })
    };
    RotatedBox::new(center.x, center.y, w, h, theta)
}

/// Clip a subject ring against a convex quad (Sutherland-Hodgman). The
/// clip quad must be in canonical orientation.
fn clip_ring(subject: &[Point2], clip: &Quad) -> Vec<Point2> {
    let mut ring: Vec<Point2> = subject.to_vec();
    let c = clip.corners;
    for i in 0..4 {
        if ring.is_empty() {
            break;
        }
        let a = c[i];
        let b = c[(i + 1) % 4];
        let mut out = Vec::with_capacity(ring.len() + 2);
        for k in 0..ring.len() {
            let s = ring[k];
            let e = ring[(k + 1) % ring.len()];
            // canonical orientation: inside is cross <= 0
            let sc = cross(b - a, s - a);
            let ec = cross(b - a, e - a);
            let s_in = sc <= 0.0;
            let e_in = ec <= 0.0;
            match (s_in, e_in) {
                (true, true) => out.push(e),
                (true, false) | (false, true) => {
                    let denom = sc - ec;
                    if denom.abs() > 0.0 {
                        let t = sc / denom;
                        out.push(Point2::new(
                            s.x + (e.x - s.x) * t,
                            s.y + (e.y - s.y) * t,
                        ));
                    }
                    if e_in {
                        out.push(e);
                    }
                }
                (false, false) => {}
            }
        }
        ring = out;
    }
    ring
}

/// Clip a convex quad against another, returning the intersection
/// polygon (empty when disjoint).
pub fn convex_clip(subject: &Quad, clip: &Quad) -> Vec<Point2> {
    clip_ring(&subject.oriented().corners, &clip.oriented())
}

/// Intersection area of two convex quads; disjoint quads give 0.
pub fn polygon_intersection_area(a: &Quad, b: &Quad) -> f64 {
    polygon_area(&convex_clip(a, b))
}

fn quad_key_le(a: &Quad, b: &Quad) -> bool {
    for i in 0..4 {
        match a.corners[i]
            .x
            .total_cmp(&b.corners[i].x)
            .then(a.corners[i].y.total_cmp(&b.corners[i].y))
        {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    true
}

/// Intersection over union of two convex quads, in [0, 1].
///
/// The pair is ordered canonically before clipping so the result is
/// exactly symmetric; two degenerate (zero-area) quads give 0.
pub fn iou(a: &Quad, b: &Quad) -> f64 {
    let (lo, hi) = if quad_key_le(a, b) { (a, b) } else { (b, a) };
    let inter = polygon_intersection_area(lo, hi);
    let union = lo.area() + hi.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}
