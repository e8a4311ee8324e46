//! Circle-anchor codec.
//!
//! An oriented rectangle is represented by its circumscribed circle
//! plus area and rotation: `(x, y, a, r, theta)` with `a = w*h` and
//! `r = sqrt(w^2 + h^2) / 2`. Decoding recovers the corner half-angle
//! `alpha = arcsin(a / (2 r^2)) / 2` and rotates the four corners out.
//!
//! Note the corner `p3 = (r cos(alpha - theta), -r sin(alpha - theta))`:
//! the minus sign on the y component is required for the decode to
//! agree with direct corner rotation (without it, p2 and p3 coincide
//! at theta = 0, which is geometrically impossible).
//!
//! The grid-relative delta codec maps anchors to per-cell offsets on a
//! `w x w` feature map. Everything is kept in normalized [0, 1] image
//! coordinates with cell centers at `(j + 0.5) / w`; the scale factor
//! is `r_a / w` with `r_a = 1.5` by default.

use crate::geometry::{fold_half_pi, Point2, Quad, RotatedBox};
use thiserror::Error;

/// Relative slack absorbed when `a` exceeds `2 r^2` by floating-point
/// drift; anything beyond it is a genuinely invalid anchor.
pub const ARCSIN_CLAMP_SLACK: f64 = 1e-9;

/// Default delta scale factor.
pub const DEFAULT_R_A: f64 = 1.5;

#[derive(Debug, Error, PartialEq)]
pub enum AnchorError {
    #[error("invalid anchor: a={a} exceeds 2*r^2={max} beyond clamp slack")]
    InvalidAnchor { a: f64, max: f64 },
    #[error("anchor fields must be finite and positive: a={a}, r={r}")]
    NonPositive { a: f64, r: f64 },
    #[error("delta decode produced a non-finite value")]
    NonFinite,
    #[error("cell ({i}, {j}) outside {size}x{size} grid")]
    CellOutOfGrid { i: usize, j: usize, size: usize },
}

/// The `(x, y, a, r, theta)` box representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleAnchor {
    pub x: f64,
    pub y: f64,
    /// Rectangle area.
    pub a: f64,
    /// Half-diagonal (circumradius).
    pub r: f64,
    /// Long-edge angle in (-pi/2, pi/2].
    pub theta: f64,
}

impl CircleAnchor {
    pub fn new(x: f64, y: f64, a: f64, r: f64, theta: f64) -> Result<Self, AnchorError> {
        if !(a > 0.0 && r > 0.0 && a.is_finite() && r.is_finite())
            || !x.is_finite()
            || !y.is_finite()
            || !theta.is_finite()
        {
            return Err(AnchorError::NonPositive { a, r });
        }
        Ok(Self {
            x,
            y,
            a,
            r,
            theta: fold_half_pi(theta),
        })
    }

    pub fn center(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

/// Regression components of a per-cell prediction.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DeltaRegression {
    pub dx: f64,
    pub dy: f64,
    pub da: f64,
    pub dr: f64,
    pub dtheta: f64,
}

impl DeltaRegression {
    pub fn as_array(&self) -> [f64; 5] {
        [self.dx, self.dy, self.da, self.dr, self.dtheta]
    }

    pub fn from_array(v: [f64; 5]) -> Self {
        Self {
            dx: v[0],
            dy: v[1],
            da: v[2],
            dr: v[3],
            dtheta: v[4],
        }
    }
}

/// Full per-cell prediction: class logits (negative, text, ambiguous),
/// regression offsets, and the vertical-flag logits.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AnchorDelta {
    pub class_logits: [f64; 3],
    pub regression: DeltaRegression,
    pub vertical_logits: [f64; 2],
}

/// A `size x size` feature map with its delta scale factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub size: usize,
    pub r_a: f64,
}

impl GridSpec {
    pub fn new(size: usize, r_a: f64) -> Self {
        assert!(size >= 1, "grid size must be >= 1");
        assert!(r_a > 0.0, "r_a must be positive");
        Self { size, r_a }
    }

    pub fn with_default_ra(size: usize) -> Self {
        Self::new(size, DEFAULT_R_A)
    }

    pub fn cells(&self) -> usize {
        self.size * self.size
    }

    /// Center of cell (i, j) in normalized coordinates; i is the row
    /// (y), j the column (x).
    pub fn cell_center(&self, i: usize, j: usize) -> Point2 {
        let w = self.size as f64;
        Point2::new((j as f64 + 0.5) / w, (i as f64 + 0.5) / w)
    }

    /// Cell height in pixels for a given square image size.
    pub fn cell_height_px(&self, image_size_px: f64) -> f64 {
        image_size_px / self.size as f64
    }
}

/// Encode a rotated box as a circle anchor (same units as the box).
pub fn encode_circle_anchor(b: &RotatedBox) -> CircleAnchor {
    CircleAnchor {
        x: b.cx,
        y: b.cy,
        a: b.w * b.h,
        r: b.radius(),
        theta: b.theta,
    }
}

/// Decode a circle anchor to its four corners.
///
/// With `w >= h` the ratio `a / (2 r^2) = 2wh / (w^2 + h^2)` is at most
/// 1 (equality for squares); values within [`ARCSIN_CLAMP_SLACK`] above
/// 1 are clamped, larger ones are rejected.
pub fn decode_circle_anchor(c: &CircleAnchor) -> Result<Quad, AnchorError> {
    let max = 2.0 * c.r * c.r;
    if c.a > max * (1.0 + ARCSIN_CLAMP_SLACK) {
        return Err(AnchorError::InvalidAnchor { a: c.a, max });
    }
    let ratio = (c.a / max).min(1.0);
    let alpha = 0.5 * ratio.asin();
    let (s2, c2) = (alpha + c.theta).sin_cos();
    let (s3, c3) = (alpha - c.theta).sin_cos();
    let p2 = Point2::new(c.r * c2, c.r * s2);
    let p3 = Point2::new(c.r * c3, -c.r * s3);
    let p1 = p3 * -1.0;
    let p4 = p2 * -1.0;
    let center = c.center();
    Ok(Quad::new([p1 + center, p2 + center, p3 + center, p4 + center]))
}

/// Apply a predicted delta at cell (i, j), producing an anchor in
/// normalized coordinates.
pub fn apply_delta(
    d: &DeltaRegression,
    i: usize,
    j: usize,
    g: &GridSpec,
) -> Result<CircleAnchor, AnchorError> {
    if i >= g.size || j >= g.size {
        return Err(AnchorError::CellOutOfGrid { i, j, size: g.size });
    }
    let w = g.size as f64;
    let x = (d.dx * g.r_a + j as f64 + 0.5) / w;
    let y = (d.dy * g.r_a + i as f64 + 0.5) / w;
    let r = d.dr.exp() * g.r_a / w;
    let a = d.da.exp() * g.r_a / w;
    let theta = fold_half_pi(d.dtheta);
    if !(x.is_finite() && y.is_finite() && r.is_finite() && a.is_finite()) {
        return Err(AnchorError::NonFinite);
    }
    Ok(CircleAnchor { x, y, a, r, theta })
}

/// Regression target for a ground-truth anchor at cell (i, j); exact
/// inverse of [`apply_delta`].
pub fn compute_delta(
    c: &CircleAnchor,
    i: usize,
    j: usize,
    g: &GridSpec,
) -> Result<DeltaRegression, AnchorError> {
    if i >= g.size || j >= g.size {
        return Err(AnchorError::CellOutOfGrid { i, j, size: g.size });
    }
    if c.r <= 0.0 || c.a <= 0.0 {
        return Err(AnchorError::NonPositive { a: c.a, r: c.r });
    }
    let w = g.size as f64;
    Ok(DeltaRegression {
        dx: (c.x * w - j as f64 - 0.5) / g.r_a,
        dy: (c.y * w - i as f64 - 0.5) / g.r_a,
        da: (c.a * w / g.r_a).ln(),
        dr: (c.r * w / g.r_a).ln(),
        dtheta: c.theta,
    })
}

/// 0 for boxes within 45 degrees of horizontal (inclusive), 1 for
/// steeper ones.
pub fn vertical_flag(theta: f64) -> u8 {
    if fold_half_pi(theta).abs() <= std::f64::consts::FRAC_PI_4 {
        0
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{quad_from_rbox, rbox_from_quad};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn max_corner_error(a: &Quad, b: &Quad) -> f64 {
        a.corners
            .iter()
            .zip(b.corners.iter())
            .map(|(p, q)| p.dist(*q))
            .fold(0.0, f64::max)
    }

    fn random_box(rng: &mut StdRng) -> RotatedBox {
        let w = rng.gen_range(0.05..2.0);
        let h = rng.gen_range(0.01..w);
        RotatedBox::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            w,
            h,
            rng.gen_range(-FRAC_PI_2 + 1e-9..=FRAC_PI_2),
        )
        .unwrap()
    }

    #[test]
    fn unit_diagonal_square_decodes_at_45() {
        let c = CircleAnchor::new(0.0, 0.0, 2.0, 1.0, 0.0).unwrap();
        let q = decode_circle_anchor(&c).unwrap();
        let half = std::f64::consts::FRAC_1_SQRT_2;
        for p in q.corners {
            assert_close(p.x.abs(), half, 1e-12);
            assert_close(p.y.abs(), half, 1e-12);
        }
    }

    #[test]
    fn four_by_two_box_decodes_to_expected_corners() {
        let c = CircleAnchor::new(0.0, 0.0, 8.0, 5.0_f64.sqrt(), 0.0).unwrap();
        let q = decode_circle_anchor(&c).unwrap();
        let oracle = quad_from_rbox(&RotatedBox::new(0.0, 0.0, 4.0, 2.0, 0.0).unwrap());
        assert!(max_corner_error(&q, &oracle) < 1e-12);
    }

    #[test]
    fn encode_matches_direct_formulas() {
        let b = RotatedBox::new(0.0, 0.0, 4.0, 2.0, 0.0).unwrap();
        let c = encode_circle_anchor(&b);
        assert_close(c.a, 8.0, 1e-15);
        assert_close(c.r, 5.0_f64.sqrt(), 1e-15);
        let sq = RotatedBox::new(0.0, 0.0, 2.0_f64.sqrt(), 2.0_f64.sqrt(), 0.0).unwrap();
        let cs = encode_circle_anchor(&sq);
        assert_close(cs.a, 2.0, 1e-15);
        assert_close(cs.r, 1.0, 1e-15);
    }

    #[test]
    fn decode_matches_rotation_oracle() {
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..10_000 {
            let b = random_box(&mut rng);
            let q = decode_circle_anchor(&encode_circle_anchor(&b)).unwrap();
            let oracle = quad_from_rbox(&b);
            assert!(
                max_corner_error(&q, &oracle) < 1e-9,
                "decode mismatch for {b:?}"
            );
        }
    }

    #[test]
    fn decode_rbox_roundtrip_identity() {
        let mut rng = StdRng::seed_from_u64(43);
        for _ in 0..2000 {
            let b = random_box(&mut rng);
            let q = decode_circle_anchor(&encode_circle_anchor(&b)).unwrap();
            let r = rbox_from_quad(&q).unwrap();
            assert_close(r.cx, b.cx, 1e-9);
            assert_close(r.w, b.w, 1e-9);
            assert_close(r.h, b.h, 1e-9);
            assert_close(fold_half_pi(r.theta - b.theta), 0.0, 1e-9);
        }
    }

    #[test]
    fn decode_output_is_a_rectangle() {
        let mut rng = StdRng::seed_from_u64(44);
        for _ in 0..1000 {
            let b = random_box(&mut rng);
            let q = decode_circle_anchor(&encode_circle_anchor(&b)).unwrap();
            let c = q.corners;
            let e: Vec<Point2> = (0..4).map(|i| c[(i + 1) % 4] - c[i]).collect();
            assert_close(e[0].norm(), e[2].norm(), 1e-9);
            assert_close(e[1].norm(), e[3].norm(), 1e-9);
            let dot = e[0].x * e[1].x + e[0].y * e[1].y;
            assert!(
                (dot / (e[0].norm() * e[1].norm())).abs() < 1e-9,
                "adjacent edges not orthogonal"
            );
        }
    }

    #[test]
    fn alpha_is_scale_invariant() {
        let mut rng = StdRng::seed_from_u64(45);
        for _ in 0..200 {
            let b = random_box(&mut rng);
            let c1 = encode_circle_anchor(&b);
            let s = rng.gen_range(0.1..10.0);
            let c2 = encode_circle_anchor(
                &RotatedBox::new(b.cx, b.cy, b.w * s, b.h * s, b.theta).unwrap(),
            );
            let ratio1 = c1.a / (2.0 * c1.r * c1.r);
            let ratio2 = c2.a / (2.0 * c2.r * c2.r);
            assert_close(ratio1, ratio2, 1e-12);
        }
    }

    #[test]
    fn invalid_anchor_rejected_and_slack_clamped() {
        let c = CircleAnchor {
            x: 0.0,
            y: 0.0,
            a: 3.0,
            r: 1.0,
            theta: 0.0,
        };
        assert!(matches!(
            decode_circle_anchor(&c),
            Err(AnchorError::InvalidAnchor { .. })
        ));
        let near = CircleAnchor {
            x: 0.0,
            y: 0.0,
            a: 2.0 * (1.0 + 0.5e-9),
            r: 1.0,
            theta: 0.0,
        };
        assert!(decode_circle_anchor(&near).is_ok());
    }

    #[test]
    fn zero_delta_lands_on_cell_center() {
        let g = GridSpec::with_default_ra(48);
        let d = DeltaRegression::default();
        let c = apply_delta(&d, 3, 7, &g).unwrap();
        assert_close(c.x, 7.5 / 48.0, 1e-15);
        assert_close(c.y, 3.5 / 48.0, 1e-15);
        assert_close(c.r, 1.5 / 48.0, 1e-15);
        assert_close(c.r, 0.03125, 1e-15);
    }

    #[test]
    fn unit_dr_scales_radius_by_e() {
        let g = GridSpec::with_default_ra(48);
        let d = DeltaRegression {
            dr: 1.0,
            ..Default::default()
        };
        let c = apply_delta(&d, 0, 0, &g).unwrap();
        assert_close(c.r, std::f64::consts::E * 1.5 / 48.0, 1e-15);
    }

    #[test]
    fn delta_roundtrip_identity() {
        let mut rng = StdRng::seed_from_u64(46);
        let g = GridSpec::with_default_ra(48);
        let base = g.r_a / g.size as f64;
        for _ in 0..5000 {
            let i = rng.gen_range(0..g.size);
            let j = rng.gen_range(0..g.size);
            let r = base * rng.gen_range(0.3..4.0);
            let ratio = rng.gen_range(0.05..1.0);
            let a = 2.0 * r * r * ratio;
            let c = CircleAnchor::new(
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
                a,
                r,
                rng.gen_range(-FRAC_PI_2 + 1e-9..=FRAC_PI_2),
            )
            .unwrap();
            let d = compute_delta(&c, i, j, &g).unwrap();
            let back = apply_delta(&d, i, j, &g).unwrap();
            assert_close(back.x, c.x, 1e-9);
            assert_close(back.y, c.y, 1e-9);
            assert_close(back.a, c.a, 1e-9);
            assert_close(back.r, c.r, 1e-9);
            assert_close(back.theta, c.theta, 1e-9);
        }
    }

    #[test]
    fn identity_cell_gives_zero_regression() {
        let g = GridSpec::with_default_ra(48);
        let c = CircleAnchor::new(7.5 / 48.0, 3.5 / 48.0, 1.5 / 48.0, 1.5 / 48.0, 0.0).unwrap();
        let d = compute_delta(&c, 3, 7, &g).unwrap();
        for v in d.as_array() {
            assert_close(v, 0.0, 1e-12);
        }
    }

    #[test]
    fn delta_overflow_is_nonfinite() {
        let g = GridSpec::with_default_ra(4);
        let d = DeltaRegression {
            dr: 1e9,
            ..Default::default()
        };
        assert_eq!(apply_delta(&d, 0, 0, &g), Err(AnchorError::NonFinite));
    }

    #[test]
    fn vertical_flag_rule() {
        assert_eq!(vertical_flag(30.0_f64.to_radians()), 0);
        assert_eq!(vertical_flag(60.0_f64.to_radians()), 1);
        assert_eq!(vertical_flag(FRAC_PI_4), 0);
        assert_eq!(vertical_flag(-FRAC_PI_4), 0);
        assert_eq!(vertical_flag(-89.0_f64.to_radians()), 1);
    }
}
