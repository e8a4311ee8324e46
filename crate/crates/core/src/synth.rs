//! Seeded synthetic data: detection-free scenes for the closed-loop
//! check (targets built from ground truth, re-read as perfect
//! predictions, decoded, suppressed, and evaluated), plus clustered
//! detection sets for NMS benchmarks.

use crate::dataio::Annotation;
use crate::eval::{evaluate, EvalReport};
use crate::geometry::{quad_from_rbox, Point2, Quad, RotatedBox};
use crate::loss::PredictionGrid;
use crate::nms::{filter_by_confidence, lanms, Detection};
use crate::target::{build_targets, GtBox, PyramidSpec};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn scene_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(
        seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03)),
    )
}

/// A generated scene: boxes in pixel units on a square canvas.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub image_id: String,
    pub image_size: f64,
    pub boxes: Vec<RotatedBox>,
}

// Boxes are placed so each is unambiguously detectable: centers sit
// near a cell center of the box's Eq.-4-matched grid (so the center
// cell scores well above alpha), and pairs are either far apart or so
// different in scale that their IoU stays under every threshold in
// play. Boxes on the coarsest grids must exceed the canvas to satisfy
// the strict scale-match band; that is fine, the geometry is exact.
fn place_boxes(
    rng: &mut ChaCha8Rng,
    pyramid: &PyramidSpec,
    image_size: f64,
    n_boxes: usize,
    first_level: usize,
) -> Vec<RotatedBox> {
    let levels = pyramid.grids.len();
    let giant_threshold = image_size / 3.0;
    let mut placed: Vec<(Point2, f64)> = Vec::new();
    let mut boxes = Vec::new();
    for k in 0..n_boxes {
        let level = if k == 0 {
            first_level.min(levels - 1)
        } else if pyramid.grids[first_level.min(levels - 1)]
            .cell_height_px(image_size)
            >= giant_threshold
        {
            // a giant box dominates the scene; keep the rest tiny so
            // the scale-separation rule below always applies
            0
        } else {
            rng.gen_range(0..levels.min(4))
        };
        let grid = &pyramid.grids[level];
        let c_h = grid.cell_height_px(image_size);
        let h = c_h * rng.gen_range(1.5..3.5);
        let w = h * rng.gen_range(1.0..2.2);
        let r = (w * w + h * h).sqrt() / 2.0;
        let mut accepted = None;
        for _attempt in 0..40 {
            let size = grid.size;
            let i = rng.gen_range(0..size);
            let j = rng.gen_range(0..size);
            let cell = grid.cell_center(i, j) * image_size;
            let jitter = Point2::new(
                rng.gen_range(-0.2..0.2) * c_h,
                rng.gen_range(-0.2..0.2) * c_h,
            );
            let center = cell + jitter;
            let ok = placed.iter().all(|&(pc, pr)| {
                let scale_ratio = r.max(pr) / r.min(pr);
                scale_ratio >= 3.5 || center.dist(pc) >= (r + pr) * 1.1
            });
            if ok {
                accepted = Some(center);
                break;
            }
        }
        if let Some(center) = accepted {
            let theta = rng.gen_range(
                -std::f64::consts::FRAC_PI_2 + 1e-6..=std::f64::consts::FRAC_PI_2,
            );
            boxes.push(RotatedBox::new(center.x, center.y, w, h, theta).unwrap());
            placed.push((center, r));
        }
    }
    boxes
}

/// Deterministic scene for (seed, index). The first box's pyramid
/// level cycles with the index so a run of scenes covers every level.
pub fn scene(seed: u64, index: u64, pyramid: &PyramidSpec, image_size: f64) -> SyntheticScene {
    let mut rng = scene_rng(seed, index);
    let n_boxes = rng.gen_range(1..=8);
    let first_level = (index as usize) % pyramid.grids.len();
    let boxes = place_boxes(&mut rng, pyramid, image_size, n_boxes, first_level);
    SyntheticScene {
        image_id: format!("scene_{index:04}"),
        image_size,
        boxes,
    }
}

/// Outcome of the closed-loop run.
#[derive(Debug, Clone)]
pub struct ClosedLoopOutcome {
    pub report: EvalReport,
    pub scenes: usize,
    pub gt_boxes: usize,
    pub detections: usize,
    /// Positive-cell counts per pyramid level, summed over scenes.
    pub positives_per_level: Vec<usize>,
}

/// Ground truth -> targets -> perfect predictions -> decode -> LANMS
/// -> evaluation, over `n_scenes` seeded scenes.
pub fn run_closed_loop(
    seed: u64,
    n_scenes: usize,
    pyramid: &PyramidSpec,
    image_size: f64,
) -> ClosedLoopOutcome {
    let mut dets_by_image = Vec::with_capacity(n_scenes);
    let mut gts_by_image = Vec::with_capacity(n_scenes);
    let mut positives_per_level = vec![0usize; pyramid.grids.len()];
    let mut gt_boxes = 0;
    let mut detections = 0;
    for idx in 0..n_scenes {
        let sc = scene(seed, idx as u64, pyramid, image_size);
        gt_boxes += sc.boxes.len();
        let gt: Vec<GtBox> = sc
            .boxes
            .iter()
            .map(|&rbox| GtBox {
                rbox,
                ignore: false,
            })
            .collect();
        let labels = build_targets(&gt, pyramid, image_size);
        for (lvl, grid) in labels.iter().enumerate() {
            positives_per_level[lvl] += grid.positive_count();
        }
        let preds: Vec<PredictionGrid> = labels
            .iter()
            .map(|l| PredictionGrid::from_labels(l, 20.0))
            .collect();
        let raw: Vec<Detection> = filter_by_confidence(&preds, 0.5)
            .into_iter()
            .map(|d| d.scaled(image_size))
            .collect();
        let kept = lanms(&raw, 0.5, 0.5);
        detections += kept.len();
        let annotations: Vec<Annotation> = sc
            .boxes
            .iter()
            .map(|b| Annotation {
                quad: quad_from_rbox(b),
                text: "synthetic".into(),
                ignore: false,
            })
            .collect();
        dets_by_image.push((sc.image_id.clone(), kept));
        gts_by_image.push((sc.image_id, annotations));
    }
    let report = evaluate(&dets_by_image, &gts_by_image, 0.5).expect("ids aligned");
    ClosedLoopOutcome {
        report,
        scenes: n_scenes,
        gt_boxes,
        detections,
        positives_per_level,
    }
}

/// Raster-ordered clustered detections for NMS benchmarks: cluster
/// centers march left-to-right, members jitter around them.
pub fn clustered_detections(n: usize, clusters: usize, seed: u64) -> Vec<Detection> {
    let clusters = clusters.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = 2.0;
    let mut out = Vec::with_capacity(n);
    for c in 0..clusters {
        let members = n / clusters + usize::from(c < n % clusters);
        let base = Point2::new(c as f64 * 4.0 * side, (c % 7) as f64 * 0.5);
        for _ in 0..members {
            let jx = rng.gen_range(-0.02..0.02) * side;
            let jy = rng.gen_range(-0.02..0.02) * side;
            let x = base.x + jx;
            let y = base.y + jy;
            out.push(Detection {
                quad: Quad::from_xy([x, y, x + side, y, x + side, y + side, x, y + side]),
                score: rng.gen_range(0.5..1.0),
                vertical: None,
                source: None,
            });
        }
    }
    out
}
