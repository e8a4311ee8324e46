//! Training-label rebuilding: the semi-ellipse score surface, the
//! three-way positive/ambiguous/negative partition, per-grid scale
//! matching, and multi-scale label assembly.

use crate::anchor::{
    compute_delta, encode_circle_anchor, vertical_flag, DeltaRegression, GridSpec,
};
use crate::geometry::{Point2, RotatedBox};
use crate::par;

/// Cell classification. Ambiguous cells participate in the
/// classification loss only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum CellClass {
    Negative = 0,
    Text = 1,
    Ambiguous = 2,
}

impl CellClass {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::Negative),
            1 => Some(Self::Text),
            2 => Some(Self::Ambiguous),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Label for one feature-map cell. Regression targets and the vertical
/// flag are present exactly for text cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellLabel {
    pub class: CellClass,
    pub score: f64,
    pub regression: Option<DeltaRegression>,
    pub vertical: Option<u8>,
}

impl CellLabel {
    pub fn negative() -> Self {
        Self {
            class: CellClass::Negative,
            score: 0.0,
            regression: None,
            vertical: None,
        }
    }
}

/// Per-feature-map target grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelGrid {
    pub spec: GridSpec,
    pub cells: Vec<CellLabel>,
}

impl LabelGrid {
    pub fn all_negative(spec: GridSpec) -> Self {
        Self {
            cells: vec![CellLabel::negative(); spec.cells()],
            spec,
        }
    }

    pub fn cell(&self, i: usize, j: usize) -> &CellLabel {
        &self.cells[i * self.spec.size + j]
    }

    pub fn positive_count(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| c.class == CellClass::Text)
            .count()
    }
}

/// The ordered set of feature-map grids plus the positive threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidSpec {
    pub grids: Vec<GridSpec>,
    pub alpha: f64,
}

impl PyramidSpec {
    pub const DEFAULT_SIZES: [usize; 6] = [48, 24, 12, 6, 3, 1];
    pub const DEFAULT_ALPHA: f64 = 0.7;

    pub fn new(grids: Vec<GridSpec>, alpha: f64) -> Result<Self, String> {
        if grids.is_empty() {
            return Err("pyramid needs at least one grid".into());
        }
        if !grids.windows(2).all(|w| w[0].size > w[1].size) {
            return Err("pyramid grid sizes must be strictly decreasing".into());
        }
        if !(alpha > 0.5 && alpha <= 1.0) {
            return Err(format!("alpha must be in (0.5, 1], got {alpha}"));
        }
        Ok(Self { grids, alpha })
    }
}

impl Default for PyramidSpec {
    fn default() -> Self {
        Self {
            grids: Self::DEFAULT_SIZES
                .iter()
                .map(|&s| GridSpec::with_default_ra(s))
                .collect(),
            alpha: Self::DEFAULT_ALPHA,
        }
    }
}

/// A ground-truth box with its ignore flag ("###" regions and
/// difficult-flagged lines).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtBox {
    pub rbox: RotatedBox,
    pub ignore: bool,
}

/// Semi-ellipse score of a point against a box, in [0, 1].
///
/// The quadratic form `A x^2 + B x y + C y^2` over `F = (w/2)^2 (h/2)^2`
/// equals 1 on the ellipse inscribed in the box; the score is
/// `sqrt(1 - Q/F)` inside and exactly 0 outside.
pub fn ellipse_score(b: &RotatedBox, p: Point2) -> f64 {
    let a = b.w / 2.0;
    let bb = b.h / 2.0;
    let (sin_t, cos_t) = b.theta.sin_cos();
    let (s2, c2) = (sin_t * sin_t, cos_t * cos_t);
    let big_a = a * a * s2 + bb * bb * c2;
    let big_b = -2.0 * (a * a - bb * bb) * sin_t * cos_t;
    let big_c = a * a * c2 + bb * bb * s2;
    let big_f = a * a * bb * bb;
    let x = p.x - b.cx;
    let y = p.y - b.cy;
    let q = big_a * x * x + big_b * x * y + big_c * y * y;
    (1.0 - q / big_f).max(0.0).sqrt()
}

/// Three-way partition of a score at threshold `alpha`.
pub fn classify_cell(score: f64, alpha: f64) -> CellClass {
    if score >= alpha {
        CellClass::Text
    } else if score >= 0.5 {
        CellClass::Ambiguous
    } else {
        CellClass::Negative
    }
}

/// Scale-matching rule: a box belongs on a grid when its height spans
/// strictly between one and four cell heights.
pub fn scale_match(box_height_px: f64, grid: &GridSpec, image_size_px: f64) -> bool {
    let c_h = grid.cell_height_px(image_size_px);
    let ratio = box_height_px / c_h;
    ratio > 1.0 && ratio < 4.0
}

/// Build one label grid for an image's ground truth.
///
/// Every cell center is scored against every scale-matched box; the
/// cell takes the class of its maximum-score box (ties go to the
/// larger-area box, then the earlier one). Text cells carry the
/// regression target and vertical flag for that box. Cells covered
/// only by ignore boxes at score >= 0.5 become ambiguous; note such
/// cells can carry a score at or above alpha.
fn build_grid(boxes: &[GtBox], spec: GridSpec, alpha: f64, image_size_px: f64) -> LabelGrid {
    let matched: Vec<&GtBox> = boxes
        .iter()
        .filter(|b| scale_match(b.rbox.h, &spec, image_size_px))
        .collect();
    if matched.is_empty() {
        return LabelGrid::all_negative(spec);
    }
    let size = spec.size;
    let cells = par::map_indexed(spec.cells(), |idx| {
        let (i, j) = (idx / size, idx % size);
        let center_px = spec.cell_center(i, j) * image_size_px;

        let mut best_real: Option<(f64, &GtBox)> = None;
        let mut best_ignore_score = 0.0_f64;
        for gt in &matched {
            let s = ellipse_score(&gt.rbox, center_px);
            if gt.ignore {
                if s > best_ignore_score {
                    best_ignore_score = s;
                }
            } else {
                let better = match best_real {
                    None => s > 0.0,
                    Some((bs, bb)) => {
                        s > bs || (s == bs && gt.rbox.area() > bb.rbox.area())
                    }
                };
                if better {
                    best_real = Some((s, gt));
                }
            }
        }

        match best_real {
            Some((score, gt)) => match classify_cell(score, alpha) {
                CellClass::Text => {
                    let norm = gt.rbox.scaled(1.0 / image_size_px);
                    let anchor = encode_circle_anchor(&norm);
                    // cell indices are in range by construction
                    let reg = compute_delta(&anchor, i, j, &spec)
                        .expect("valid anchor and in-grid cell");
                    CellLabel {
                        class: CellClass::Text,
                        score,
                        regression: Some(reg),
                        vertical: Some(vertical_flag(norm.theta)),
                    }
                }
                CellClass::Ambiguous => CellLabel {
                    class: CellClass::Ambiguous,
                    score,
                    regression: None,
                    vertical: None,
                },
                CellClass::Negative => {
                    if best_ignore_score >= 0.5 {
                        CellLabel {
                            class: CellClass::Ambiguous,
                            score: best_ignore_score,
                            regression: None,
                            vertical: None,
                        }
                    } else {
                        CellLabel {
                            class: CellClass::Negative,
                            score,
                            regression: None,
                            vertical: None,
                        }
                    }
                }
            },
            None => {
                if best_ignore_score >= 0.5 {
                    CellLabel {
                        class: CellClass::Ambiguous,
                        score: best_ignore_score,
                        regression: None,
                        vertical: None,
                    }
                } else {
                    CellLabel::negative()
                }
            }
        }
    });
    LabelGrid { spec, cells }
}

/// Build label grids for every pyramid level. Boxes are in pixel
/// units; an empty box list yields all-negative grids.
pub fn build_targets(
    boxes: &[GtBox],
    pyramid: &PyramidSpec,
    image_size_px: f64,
) -> Vec<LabelGrid> {
    par::map_slice(&pyramid.grids, |&spec| {
        build_grid(boxes, spec, pyramid.alpha, image_size_px)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchor::{apply_delta, decode_circle_anchor};
    use crate::geometry::{iou, quad_from_rbox};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::FRAC_PI_2;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn score_is_one_at_center_zero_on_boundary() {
        let b = RotatedBox::new(0.0, 0.0, 4.0, 2.0, 0.0).unwrap();
        assert_eq!(ellipse_score(&b, Point2::new(0.0, 0.0)), 1.0);
        assert_eq!(ellipse_score(&b, Point2::new(2.0, 0.0)), 0.0);
        assert_eq!(ellipse_score(&b, Point2::new(3.0, 0.0)), 0.0);
    }

    #[test]
    fn score_matches_hand_computation() {
        let b = RotatedBox::new(0.0, 0.0, 4.0, 2.0, 0.0).unwrap();
        // A=1, B=0, C=4, F=4, Q=1 at (1,0): s = sqrt(3/4)
        assert_close(
            ellipse_score(&b, Point2::new(1.0, 0.0)),
            0.75_f64.sqrt(),
            1e-12,
        );
    }

    #[test]
    fn score_rigid_motion_invariance() {
        let mut rng = StdRng::seed_from_u64(21);
        for _ in 0..3000 {
            let w = rng.gen_range(1.0..6.0);
            let h = rng.gen_range(0.3..w);
            let theta = rng.gen_range(-FRAC_PI_2 + 1e-9..=FRAC_PI_2);
            let b = RotatedBox::new(0.0, 0.0, w, h, theta).unwrap();
            let p = Point2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let base = ellipse_score(&b, p);

            let phi = rng.gen_range(-1.5..1.5);
            let d = Point2::new(rng.gen_range(-9.0..9.0), rng.gen_range(-9.0..9.0));
            let moved_box =
                RotatedBox::new(d.x, d.y, w, h, theta + phi).unwrap();
            let moved_p = p.rotated(phi) + d;
            assert_close(ellipse_score(&moved_box, moved_p), base, 1e-9);
        }
    }

    #[test]
    fn score_non_increasing_along_rays() {
        let mut rng = StdRng::seed_from_u64(22);
        let b = RotatedBox::new(1.0, -2.0, 5.0, 2.0, 0.7).unwrap();
        for _ in 0..200 {
            let dir = Point2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if dir.norm() < 1e-6 {
                continue;
            }
            let mut prev = f64::INFINITY;
            for k in 0..50 {
                let t = k as f64 * 0.1;
                let p = b.center() + dir * t;
                let s = ellipse_score(&b, p);
                assert!(s <= prev + 1e-12);
                prev = s;
            }
        }
    }

    #[test]
    fn classify_bands() {
        assert_eq!(classify_cell(0.9, 0.7), CellClass::Text);
        assert_eq!(classify_cell(0.6, 0.7), CellClass::Ambiguous);
        assert_eq!(classify_cell(0.49, 0.7), CellClass::Negative);
        assert_eq!(classify_cell(0.7, 0.7), CellClass::Text);
        assert_eq!(classify_cell(0.5, 0.7), CellClass::Ambiguous);
    }

    #[test]
    fn scale_match_examples() {
        let g48 = GridSpec::with_default_ra(48);
        let g24 = GridSpec::with_default_ra(24);
        assert!(scale_match(20.0, &g48, 384.0));
        assert!(!scale_match(40.0, &g48, 384.0));
        assert!(scale_match(40.0, &g24, 384.0));
        // strict boundary
        assert!(!scale_match(8.0, &g48, 384.0));
        assert!(!scale_match(32.0, &g48, 384.0));
    }

    #[test]
    fn empty_scene_is_all_negative() {
        let grids = build_targets(&[], &PyramidSpec::default(), 384.0);
        assert_eq!(grids.len(), 6);
        for g in &grids {
            assert!(g.cells.iter().all(|c| c.class == CellClass::Negative));
        }
    }

    #[test]
    fn centered_box_positive_cell_decodes_back() {
        // 4x2-cell box (32x16 px) centered on cell (24, 24) of the 48 grid
        let pyramid = PyramidSpec::default();
        let image = 384.0;
        let b = RotatedBox::new(196.0, 196.0, 32.0, 16.0, 0.0).unwrap();
        let grids = build_targets(&[GtBox { rbox: b, ignore: false }], &pyramid, image);
        let g48 = &grids[0];
        let center_cell = g48.cell(24, 24);
        assert_eq!(center_cell.class, CellClass::Text);
        let reg = center_cell.regression.unwrap();
        let anchor = apply_delta(&reg, 24, 24, &g48.spec).unwrap();
        let quad = decode_circle_anchor(&anchor).unwrap().scaled(image);
        let gt_quad = quad_from_rbox(&b);
        for (p, q) in quad.corners.iter().zip(gt_quad.corners.iter()) {
            assert!(p.dist(*q) < 1e-6, "decoded target drifted {}", p.dist(*q));
        }
    }

    #[test]
    fn positives_only_on_scale_matched_grids() {
        let pyramid = PyramidSpec::default();
        let image = 384.0;
        // h=20 matches grids 48 (ratio 2.5) and 24 (1.25); h=100 matches 12 (3.125)
        let small = RotatedBox::new(100.0, 100.0, 60.0, 20.0, 0.1).unwrap();
        let big = RotatedBox::new(280.0, 280.0, 140.0, 100.0, -0.3).unwrap();
        let grids = build_targets(
            &[
                GtBox { rbox: small, ignore: false },
                GtBox { rbox: big, ignore: false },
            ],
            &pyramid,
            image,
        );
        for g in &grids {
            let expected = [&small, &big]
                .iter()
                .any(|b| scale_match(b.h, &g.spec, image));
            if !expected {
                assert_eq!(g.positive_count(), 0, "grid {} has positives", g.spec.size);
            }
        }
        assert!(grids[0].positive_count() > 0);
        assert!(grids[2].positive_count() > 0);
    }

    #[test]
    fn ignore_boxes_make_ambiguous_cells() {
        let pyramid = PyramidSpec::default();
        let image = 384.0;
        let b = RotatedBox::new(196.0, 196.0, 48.0, 20.0, 0.0).unwrap();
        let grids = build_targets(&[GtBox { rbox: b, ignore: true }], &pyramid, image);
        let g48 = &grids[0];
        assert_eq!(g48.positive_count(), 0);
        let ambiguous = g48
            .cells
            .iter()
            .filter(|c| c.class == CellClass::Ambiguous)
            .count();
        assert!(ambiguous > 0);
        for c in &g48.cells {
            assert!(c.regression.is_none());
        }
    }

    #[test]
    fn partition_is_complete_and_consistent() {
        let mut rng = StdRng::seed_from_u64(23);
        let pyramid = PyramidSpec::default();
        for _ in 0..20 {
            let n = rng.gen_range(1..5);
            let boxes: Vec<GtBox> = (0..n)
                .map(|_| {
                    let h = rng.gen_range(9.0..120.0);
                    let w = h * rng.gen_range(1.0..3.0);
                    GtBox {
                        rbox: RotatedBox::new(
                            rng.gen_range(50.0..330.0),
                            rng.gen_range(50.0..330.0),
                            w,
                            h,
                            rng.gen_range(-FRAC_PI_2 + 1e-9..=FRAC_PI_2),
                        )
                        .unwrap(),
                        ignore: rng.gen_bool(0.2),
                    }
                })
                .collect();
            let grids = build_targets(&boxes, &pyramid, 384.0);
            for g in &grids {
                for c in &g.cells {
                    match c.class {
                        CellClass::Text => {
                            assert!(c.score >= pyramid.alpha);
                            assert!(c.regression.is_some() && c.vertical.is_some());
                        }
                        CellClass::Ambiguous => {
                            assert!(c.score >= 0.5);
                            assert!(c.regression.is_none() && c.vertical.is_none());
                        }
                        CellClass::Negative => {
                            assert!(c.score < 0.5);
                            assert!(c.regression.is_none() && c.vertical.is_none());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn positive_targets_decode_to_high_iou() {
        let mut rng = StdRng::seed_from_u64(24);
        let pyramid = PyramidSpec::default();
        let image = 384.0;
        for _ in 0..20 {
            let h = rng.gen_range(10.0..100.0);
            let w = h * rng.gen_range(1.0..2.5);
            let b = RotatedBox::new(
                rng.gen_range(100.0..280.0),
                rng.gen_range(100.0..280.0),
                w,
                h,
                rng.gen_range(-FRAC_PI_2 + 1e-9..=FRAC_PI_2),
            )
            .unwrap();
            let gt_quad = quad_from_rbox(&b);
            let grids = build_targets(&[GtBox { rbox: b, ignore: false }], &pyramid, image);
            for g in &grids {
                for (idx, c) in g.cells.iter().enumerate() {
                    if let Some(reg) = &c.regression {
                        let (i, j) = (idx / g.spec.size, idx % g.spec.size);
                        let anchor = apply_delta(reg, i, j, &g.spec).unwrap();
                        let quad = decode_circle_anchor(&anchor).unwrap().scaled(image);
                        assert!(iou(&quad, &gt_quad) >= 0.99);
                    }
                }
            }
        }
    }

    #[test]
    fn alpha_extremes() {
        let image = 384.0;
        let b = RotatedBox::new(196.0, 196.0, 60.0, 20.0, 0.2).unwrap();
        let boxes = [GtBox { rbox: b, ignore: false }];

        let tight = PyramidSpec::new(
            PyramidSpec::DEFAULT_SIZES
                .iter()
                .map(|&s| GridSpec::with_default_ra(s))
                .collect(),
            0.999_999,
        )
        .unwrap();
        let grids = build_targets(&boxes, &tight, image);
        for g in &grids {
            for (idx, c) in g.cells.iter().enumerate() {
                if c.class == CellClass::Text {
                    let (i, j) = (idx / g.spec.size, idx % g.spec.size);
                    let cell = g.spec.size as f64;
                    // the positive cell must contain the box center
                    assert_eq!((b.cx / image * cell).floor() as usize, j);
                    assert_eq!((b.cy / image * cell).floor() as usize, i);
                }
            }
        }

        let loose = PyramidSpec::new(
            PyramidSpec::DEFAULT_SIZES
                .iter()
                .map(|&s| GridSpec::with_default_ra(s))
                .collect(),
            0.500_001,
        )
        .unwrap();
        let grids = build_targets(&boxes, &loose, image);
        let ambiguous: usize = grids
            .iter()
            .map(|g| {
                g.cells
                    .iter()
                    .filter(|c| c.class == CellClass::Ambiguous)
                    .count()
            })
            .sum();
        assert_eq!(ambiguous, 0, "ambiguous band should empty as alpha -> 0.5");
    }

    #[test]
    fn pyramid_validation() {
        assert!(PyramidSpec::new(vec![], 0.7).is_err());
        assert!(PyramidSpec::new(
            vec![GridSpec::with_default_ra(24), GridSpec::with_default_ra(48)],
            0.7
        )
        .is_err());
        assert!(PyramidSpec::new(vec![GridSpec::with_default_ra(48)], 0.4).is_err());
    }
}
