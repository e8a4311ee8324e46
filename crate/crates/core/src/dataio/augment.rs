//! Geometric augmentation: optional canvas placement, random crop,
//! horizontal flip, and rotation from a fixed angle set. All
//! randomness is captured in an [`AugmentDraw`] derived from the seed,
//! so the same (seed, index, attempt) triple is byte-reproducible.

use super::{Annotation, DataError, Sample};
use crate::geometry::{convex_clip, rbox_from_quad, Point2, Quad};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Augmentation parameters. Defaults: crop scale in [0.1, 1], flip
/// probability 0.5, rotation angles -90..90 in 15-degree steps, canvas
/// factor in [1, 3] (TD500-style placement, off unless `canvas` is
/// set).
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub crop_scale_range: (f64, f64),
    pub flip_prob: f64,
    pub angle_set_deg: Vec<f64>,
    pub canvas_range: (f64, f64),
    pub canvas: bool,
    /// Fail with [`DataError::EmptyResult`] when a non-empty sample
    /// loses every annotation; the caller owns the retry policy.
    pub keep_at_least_one: bool,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            crop_scale_range: (0.1, 1.0),
            flip_prob: 0.5,
            angle_set_deg: vec![
                -90.0, -75.0, -60.0, -45.0, -30.0, -15.0, 0.0, 15.0, 30.0, 45.0, 60.0, 75.0,
                90.0,
            ],
            canvas_range: (1.0, 3.0),
            canvas: false,
            keep_at_least_one: true,
            seed: 0,
        }
    }
}

/// The recorded random draws for one augmentation. Fractions are in
/// [0, 1] and resolve against the current sample dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    pub canvas_n: f64,
    pub canvas_fx: f64,
    pub canvas_fy: f64,
    pub crop_scale: f64,
    pub crop_fx: f64,
    pub crop_fy: f64,
    pub flip: bool,
    pub angle_deg: f64,
}

impl AugmentDraw {
    /// The do-nothing draw: full-image crop, no flip, zero rotation.
    pub fn identity() -> Self {
        Self {
            canvas_n: 1.0,
            canvas_fx: 0.0,
            canvas_fy: 0.0,
            crop_scale: 1.0,
            crop_fx: 0.0,
            crop_fy: 0.0,
            flip: false,
            angle_deg: 0.0,
        }
    }

    /// Deterministic draw for (seed, sample index, retry attempt).
    pub fn sample(cfg: &AugmentConfig, index: u64, attempt: u64) -> Self {
        let mixed = cfg
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9))
            .wrapping_add(attempt.wrapping_mul(0x94D0_49BB_1331_11EB));
        let mut rng = ChaCha8Rng::seed_from_u64(mixed);
        let canvas_n = if cfg.canvas {
            rng.gen_range(cfg.canvas_range.0..=cfg.canvas_range.1)
        } else {
            1.0
        };
        Self {
            canvas_n,
            canvas_fx: rng.gen_range(0.0..=1.0),
            canvas_fy: rng.gen_range(0.0..=1.0),
            crop_scale: rng.gen_range(cfg.crop_scale_range.0..=cfg.crop_scale_range.1),
            crop_fx: rng.gen_range(0.0..=1.0),
            crop_fy: rng.gen_range(0.0..=1.0),
            flip: rng.gen_bool(cfg.flip_prob),
            angle_deg: cfg.angle_set_deg[rng.gen_range(0..cfg.angle_set_deg.len())],
        }
    }
}

fn translate_all(anns: &mut [Annotation], d: Point2) {
    for a in anns.iter_mut() {
        a.quad = a.quad.translated(d);
    }
}

/// Refit a partially cropped quad: clip it to the crop rectangle,
/// re-extrude the clipped polygon along the box's own axes (so the
/// orientation label survives), and clamp to the crop bounds.
fn refit_clipped(quad: &Quad, ring: &[Point2], w: f64, h: f64) -> Option<Quad> {
    let rbox = rbox_from_quad(quad).ok()?;
    let (sin_t, cos_t) = rbox.theta.sin_cos();
    let c = rbox.center();
    let mut lo_u = f64::INFINITY;
    let mut hi_u = f64::NEG_INFINITY;
    let mut lo_v = f64::INFINITY;
    let mut hi_v = f64::NEG_INFINITY;
    for p in ring {
        let d = *p - c;
        let u = d.x * cos_t + d.y * sin_t;
        let v = -d.x * sin_t + d.y * cos_t;
        lo_u = lo_u.min(u);
        hi_u = hi_u.max(u);
        lo_v = lo_v.min(v);
        hi_v = hi_v.max(v);
    }
    let axis_u = Point2::new(cos_t, sin_t);
    let axis_v = Point2::new(-sin_t, cos_t);
    let corner = |u: f64, v: f64| c + axis_u * u + axis_v * v;
    let mut corners = [
        corner(lo_u, hi_v),
        corner(hi_u, hi_v),
        corner(hi_u, lo_v),
        corner(lo_u, lo_v),
    ];
    for p in &mut corners {
        p.x = p.x.clamp(0.0, w);
        p.y = p.y.clamp(0.0, h);
    }
    Some(Quad::new(corners))
}

/// Apply one augmentation draw: canvas placement, crop (dropping boxes
/// whose centers leave it, clipping partial ones and keeping them when
/// at least 25% of the area survives), horizontal flip, then rotation.
/// The rotated image canvas is the bounding box of the rotated frame.
pub fn augment_sample(
    s: &Sample,
    cfg: &AugmentConfig,
    draw: &AugmentDraw,
) -> Result<Sample, DataError> {
    let had_annotations = !s.annotations.is_empty();
    let mut anns = s.annotations.clone();
    let mut width = s.width as f64;
    let mut height = s.height as f64;

    // canvas placement
    if draw.canvas_n > 1.0 {
        let new_w = (width * draw.canvas_n).round();
        let new_h = (height * draw.canvas_n).round();
        let ox = (draw.canvas_fx * (new_w - width)).round();
        let oy = (draw.canvas_fy * (new_h - height)).round();
        translate_all(&mut anns, Point2::new(ox, oy));
        width = new_w;
        height = new_h;
    }

    // crop
    if draw.crop_scale < 1.0 {
        let cw = (width * draw.crop_scale).round().max(1.0);
        let ch = (height * draw.crop_scale).round().max(1.0);
        let x0 = (draw.crop_fx * (width - cw)).round();
        let y0 = (draw.crop_fy * (height - ch)).round();
        let crop = Quad::from_xy([x0, y0, x0 + cw, y0, x0 + cw, y0 + ch, x0, y0 + ch]);
        let mut kept = Vec::with_capacity(anns.len());
        for mut a in anns {
            let c = a.quad.centroid();
            if c.x < x0 || c.x >= x0 + cw || c.y < y0 || c.y >= y0 + ch {
                continue;
            }
            let inside = a
                .quad
                .corners
                .iter()
                .all(|p| p.x >= x0 && p.x <= x0 + cw && p.y >= y0 && p.y <= y0 + ch);
            if !inside {
                let ring = convex_clip(&a.quad, &crop);
                let area = a.quad.area();
                if area <= 0.0 {
                    continue;
                }
                let kept_fraction = crate::geometry::polygon_area(&ring) / area;
                if kept_fraction < 0.25 {
                    continue;
                }
                let shifted: Vec<Point2> = ring
                    .iter()
                    .map(|p| *p - Point2::new(x0, y0))
                    .collect();
                let local = a.quad.translated(Point2::new(-x0, -y0));
                match refit_clipped(&local, &shifted, cw, ch) {
                    Some(q) => a.quad = q,
                    None => continue,
                }
            } else {
                a.quad = a.quad.translated(Point2::new(-x0, -y0));
            }
            kept.push(a);
        }
        anns = kept;
        width = cw;
        height = ch;
    }

    // horizontal flip
    if draw.flip {
        for a in &mut anns {
            a.quad = Quad::new(a.quad.corners.map(|p| Point2::new(width - p.x, p.y)));
        }
    }

    // rotation about the image center into the enclosing canvas
    if draw.angle_deg != 0.0 {
        let t = draw.angle_deg.to_radians();
        let (sin_t, cos_t) = (t.sin().abs(), t.cos().abs());
        let new_w = (width * cos_t + height * sin_t).round();
        let new_h = (width * sin_t + height * cos_t).round();
        let c = Point2::new(width / 2.0, height / 2.0);
        let c_new = Point2::new(new_w / 2.0, new_h / 2.0);
        for a in &mut anns {
            a.quad = Quad::new(a.quad.corners.map(|p| (p - c).rotated(t) + c_new));
        }
        width = new_w;
        height = new_h;
    }

    if cfg.keep_at_least_one && had_annotations && anns.is_empty() {
        return Err(DataError::EmptyResult);
    }
    Ok(Sample {
        image_id: s.image_id.clone(),
        width: width.round() as u32,
        height: height.round() as u32,
        annotations: anns,
    })
}
