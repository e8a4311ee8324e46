//! Detection evaluation: greedy score-ordered matching against ground
//! truth with ignore-region handling, micro-averaged precision /
//! recall / F-score, and a stable text report for golden-file testing.

use crate::dataio::Annotation;
use crate::geometry::iou;
use crate::nms::Detection;
use crate::par;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("detections for unknown image id {0:?}")]
    MissingImage(String),
}

/// Matching counts for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageCounts {
    pub image_id: String,
    pub tp: u64,
    pub fp: u64,
    pub false_neg: u64,
}

/// Micro-averaged report across images.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub tp: u64,
    pub fp: u64,
    pub false_neg: u64,
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
    pub per_image: Vec<ImageCounts>,
}

impl EvalReport {
    fn from_counts(mut per_image: Vec<ImageCounts>) -> Self {
        per_image.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        let tp: u64 = per_image.iter().map(|c| c.tp).sum();
        let fp: u64 = per_image.iter().map(|c| c.fp).sum();
        let false_neg: u64 = per_image.iter().map(|c| c.false_neg).sum();
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + false_neg);
        let fscore = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            tp,
            fp,
            false_neg,
            precision,
            recall,
            fscore,
            per_image,
        }
    }

    /// Canonical text rendering with stable key order; the CLI prints
    /// this verbatim and the golden files freeze it.
    pub fn to_report_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "images = {}", self.per_image.len());
        let _ = writeln!(s, "tp = {}", self.tp);
        let _ = writeln!(s, "fp = {}", self.fp);
        let _ = writeln!(s, "fn = {}", self.false_neg);
        let _ = writeln!(s, "precision = {:.6}", self.precision);
        let _ = writeln!(s, "recall = {:.6}", self.recall);
        let _ = writeln!(s, "fscore = {:.6}", self.fscore);
        let _ = writeln!(s, "per_image:");
        for c in &self.per_image {
            let _ = writeln!(
                s,
                "  {} tp={} fp={} fn={}",
                c.image_id, c.tp, c.fp, c.false_neg
            );
        }
        s
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Greedy one-to-one matching for a single image.
///
/// Detections are visited by descending score (ties to the earlier
/// index). Each matches the unmatched non-ignore ground truth with the
/// highest IoU at or above `iou_thresh`; failing that, a detection
/// overlapping an ignore region at the threshold is discarded from the
/// counts, and anything else is a false positive. Unmatched non-ignore
/// ground truths are the false negatives.
pub fn match_detections(
    dets: &[Detection],
    gts: &[Annotation],
    iou_thresh: f64,
) -> (u64, u64, u64) {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    let mut matched = vec![false; gts.len()];
    let mut tp = 0u64;
    let mut fp = 0u64;
    for &di in &order {
        let det = &dets[di];
        let mut best: Option<(usize, f64)> = None;
        let mut ignore_hit = false;
        for (gi, gt) in gts.iter().enumerate() {
            let overlap = iou(&det.quad, &gt.quad);
            if overlap < iou_thresh {
                continue;
            }
            if gt.ignore {
                ignore_hit = true;
            } else if !matched[gi] {
                let better = match best {
                    None => true,
                    Some((_, b)) => overlap > b,
                };
                if better {
                    best = Some((gi, overlap));
                }
            }
        }
        match best {
            Some((gi, _)) => {
                matched[gi] = true;
                tp += 1;
            }
            None if ignore_hit => {}
            None => fp += 1,
        }
    }
    let false_neg = gts
        .iter()
        .zip(&matched)
        .filter(|(g, &m)| !g.ignore && !m)
        .count() as u64;
    (tp, fp, false_neg)
}

/// Micro-averaged evaluation over aligned per-image lists. Every
/// detection image id must have ground truth; ground-truth images
/// without detections contribute false negatives.
pub fn evaluate(
    dets_by_image: &[(String, Vec<Detection>)],
    gts_by_image: &[(String, Vec<Annotation>)],
    iou_thresh: f64,
) -> Result<EvalReport, EvalError> {
    for (id, _) in dets_by_image {
        if !gts_by_image.iter().any(|(gid, _)| gid == id) {
            return Err(EvalError::MissingImage(id.clone()));
        }
    }
    static EMPTY: Vec<Detection> = Vec::new();
    let per_image = par::map_slice(gts_by_image, |(id, gts)| {
        let dets = dets_by_image
            .iter()
            .find(|(did, _)| did == id)
            .map(|(_, d)| d)
            .unwrap_or(&EMPTY);
        let (tp, fp, false_neg) = match_detections(dets, gts, iou_thresh);
        ImageCounts {
            image_id: id.clone(),
            tp,
            fp,
            false_neg,
        }
    });
    Ok(EvalReport::from_counts(per_image))
}
