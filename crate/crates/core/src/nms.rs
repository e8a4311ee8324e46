//! Postprocessing: confidence filtering over prediction grids,
//! weighted box merging, standard greedy NMS, and the single-pass
//! locality-aware variant.
//!
//! Locality-aware NMS relies on the raster ordering produced by
//! [`filter_by_confidence`]: neighbouring cells of one text instance
//! arrive consecutively, so a single merging pass collapses them
//! before the quadratic suppression step runs on what is left.

use crate::anchor::{apply_delta, decode_circle_anchor};
use crate::geometry::{iou, Point2, Quad};
use crate::loss::{softmax, PredictionGrid};
use crate::par;

/// Provenance of a detection: which grid and cell produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceCell {
    pub grid_size: usize,
    pub i: usize,
    pub j: usize,
}

/// A scored quadrilateral. Scores of merged detections are sums, so
/// they may exceed 1; ranking is all that matters downstream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub quad: Quad,
    pub score: f64,
    pub vertical: Option<u8>,
    pub source: Option<SourceCell>,
}

impl Detection {
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            quad: self.quad.scaled(s),
            ..*self
        }
    }
}

/// Counters from the LANMS merge pass, for complexity checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LanmsStats {
    /// IoU evaluations performed by the merge pass (excludes the final
    /// suppression step). At most one per input detection.
    pub merge_iou_tests: usize,
    /// Detections surviving the merge pass.
    pub merged_candidates: usize,
}

/// Decode every cell whose text-class probability exceeds `threshold`.
///
/// Grids are visited largest first and cells in raster order; this is
/// the ordering [`lanms`] expects. Cells whose regression decodes to an
/// impossible anchor (area beyond the circumscribed circle's bound)
/// are dropped.
pub fn filter_by_confidence(grids: &[PredictionGrid], threshold: f64) -> Vec<Detection> {
    let mut order: Vec<&PredictionGrid> = grids.iter().collect();
    order.sort_by(|a, b| b.spec.size.cmp(&a.spec.size));
    let mut out = Vec::new();
    for grid in order {
        let size = grid.spec.size;
        let spec = grid.spec;
        let cells = &grid.cells;
        let dets = par::map_indexed(cells.len(), |idx| {
            let d = &cells[idx];
            let prob = softmax(&d.class_logits)[1];
            if prob <= threshold {
                return None;
            }
            let (i, j) = (idx / size, idx % size);
            let anchor = apply_delta(&d.regression, i, j, &spec).ok()?;
            let quad = decode_circle_anchor(&anchor).ok()?;
            let vertical = if d.vertical_logits[1] > d.vertical_logits[0] {
                1
            } else {
                0
            };
            Some(Detection {
                quad,
                score: prob,
                vertical: Some(vertical),
                source: Some(SourceCell {
                    grid_size: size,
                    i,
                    j,
                }),
            })
        });
        out.extend(dets.into_iter().flatten());
    }
    out
}

/// Score-weighted corner average; the merged score is the sum and the
/// vertical flag follows the higher-scoring operand.
pub fn weighted_merge(a: &Detection, b: &Detection) -> Detection {
    let total = a.score + b.score;
    let corners = std::array::from_fn(|k| {
        let pa = a.quad.corners[k];
        let pb = b.quad.corners[k];
        Point2::new(
            (a.score * pa.x + b.score * pb.x) / total,
            (a.score * pa.y + b.score * pb.y) / total,
        )
    });
    let (vertical, source) = if a.score >= b.score {
        (a.vertical, a.source)
    } else {
        (b.vertical, b.source)
    };
    Detection {
        quad: Quad::new(corners),
        score: total,
        vertical,
        source,
    }
}

/// Greedy NMS: repeatedly keep the highest-scoring detection and drop
/// everything overlapping it above `iou_thresh`. Ties break toward the
/// earlier index.
pub fn standard_nms(dets: &[Detection], iou_thresh: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    let mut suppressed = vec![false; dets.len()];
    let mut kept = Vec::new();
    for (rank, &idx) in order.iter().enumerate() {
        if suppressed[idx] {
            continue;
        }
        kept.push(dets[idx]);
        for &other in &order[rank + 1..] {
            if !suppressed[other] && iou(&dets[idx].quad, &dets[other].quad) > iou_thresh {
                suppressed[other] = true;
            }
        }
    }
    kept
}

/// Locality-aware NMS with merge-pass instrumentation.
///
/// A single pass walks the raster-ordered input keeping one candidate:
/// each detection either merges into it (IoU above `merge_iou`) or
/// flushes it. Survivors then go through [`standard_nms`] at
/// `final_iou`.
pub fn lanms_with_stats(
    dets: &[Detection],
    merge_iou: f64,
    final_iou: f64,
) -> (Vec<Detection>, LanmsStats) {
    let mut stats = LanmsStats::default();
    let mut merged: Vec<Detection> = Vec::new();
    let mut current: Option<Detection> = None;
    for det in dets {
        match current.take() {
            None => current = Some(*det),
            Some(g) => {
                stats.merge_iou_tests += 1;
                if iou(&det.quad, &g.quad) > merge_iou {
                    current = Some(weighted_merge(&g, det));
                } else {
                    merged.push(g);
                    current = Some(*det);
                }
            }
        }
    }
    if let Some(g) = current {
        merged.push(g);
    }
    stats.merged_candidates = merged.len();
    (standard_nms(&merged, final_iou), stats)
}

/// See [`lanms_with_stats`].
pub fn lanms(dets: &[Detection], merge_iou: f64, final_iou: f64) -> Vec<Detection> {
    lanms_with_stats(dets, merge_iou, final_iou).0
}
