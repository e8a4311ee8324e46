//! Reference implementation of the masked training loss: smooth-L1
//! localization over circle-anchor deltas, softmax cross-entropy over
//! the three cell classes with hard negative mining, and the
//! vertical-flag term. Includes analytic gradients for toy training
//! and finite-difference validation.

use crate::anchor::{AnchorDelta, GridSpec};
use crate::par;
use crate::target::{CellClass, LabelGrid};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("class index {class} out of range for {len} logits")]
    ClassOutOfRange { class: usize, len: usize },
    #[error("prediction/label shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Per-feature-map predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionGrid {
    pub spec: GridSpec,
    pub cells: Vec<AnchorDelta>,
}

impl PredictionGrid {
    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            cells: vec![AnchorDelta::default(); spec.cells()],
            spec,
        }
    }

    pub fn cell(&self, i: usize, j: usize) -> &AnchorDelta {
        &self.cells[i * self.spec.size + j]
    }

    /// Treat a label grid as a perfect prediction: one-hot class logits
    /// at `logit_scale`, the target regression for text cells, and a
    /// one-hot vertical flag. The closed-loop tests and the `decode`
    /// pipeline use this to drive the postprocessing stack without a
    /// network.
    pub fn from_labels(labels: &LabelGrid, logit_scale: f64) -> Self {
        let cells = labels
            .cells
            .iter()
            .map(|c| {
                let mut d = AnchorDelta::default();
                d.class_logits[c.class.index()] = logit_scale;
                if let Some(reg) = &c.regression {
                    d.regression = *reg;
                }
                if let Some(v) = c.vertical {
                    d.vertical_logits[v as usize] = logit_scale;
                }
                d
            })
            .collect();
        Self {
            spec: labels.spec,
            cells,
        }
    }
}

/// Unnormalized loss sums plus the counts that normalize them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub cls: f64,
    pub loc: f64,
    pub vertical: f64,
    pub total: f64,
    pub n_cls: usize,
    pub n_reg: usize,
}

/// Smooth L1: quadratic inside the unit interval, linear outside,
/// with matching value and slope at |x| = 1.
pub fn smooth_l1(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 1.0 {
        0.5 * x * x
    } else {
        ax - 0.5
    }
}

/// Derivative of [`smooth_l1`]; continuous at the branch point.
pub fn smooth_l1_grad(x: f64) -> f64 {
    if x.abs() < 1.0 {
        x
    } else {
        x.signum()
    }
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln()
}

/// Softmax cross-entropy, computed with max-subtraction stability.
pub fn softmax_ce(logits: &[f64], true_class: usize) -> Result<f64, LossError> {
    if true_class >= logits.len() || logits.len() < 2 {
        return Err(LossError::ClassOutOfRange {
            class: true_class,
            len: logits.len(),
        });
    }
    Ok(log_sum_exp(logits) - logits[true_class])
}

/// Softmax probabilities (stable).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Kahan compensated accumulator; keeps reductions order-insensitive
/// to well below the 1e-12 contract.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    pub fn add(&mut self, v: f64) {
        let y = v - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Core hard-negative selection over flat (loss, class) pairs: keeps
/// every text and ambiguous cell, plus the `ratio * k` highest-loss
/// negatives (k = text count; when k = 0, `max(1, floor(ratio))`
/// negatives are kept so empty scenes still produce signal). Ties
/// break by raster order.
fn select_hard_negatives(losses: &[f64], classes: &[CellClass], ratio: f64) -> Vec<bool> {
    debug_assert_eq!(losses.len(), classes.len());
    let mut mask = vec![false; losses.len()];
    let mut negatives: Vec<usize> = Vec::new();
    let mut k = 0usize;
    for (idx, class) in classes.iter().enumerate() {
        match class {
            CellClass::Text => {
                k += 1;
                mask[idx] = true;
            }
            CellClass::Ambiguous => mask[idx] = true,
            CellClass::Negative => negatives.push(idx),
        }
    }
    let keep = if k == 0 {
        (ratio.floor() as usize).max(1)
    } else {
        (ratio * k as f64).floor() as usize
    };
    negatives.sort_by(|&a, &b| losses[b].total_cmp(&losses[a]).then(a.cmp(&b)));
    for &idx in negatives.iter().take(keep) {
        mask[idx] = true;
    }
    mask
}

/// Hard-negative-mining mask for a single grid given per-cell
/// classification losses.
pub fn hard_negative_select(
    cls_losses: &[f64],
    labels: &LabelGrid,
    ratio: f64,
) -> Result<Vec<bool>, LossError> {
    if cls_losses.len() != labels.cells.len() {
        return Err(LossError::ShapeMismatch(format!(
            "{} losses for {} cells",
            cls_losses.len(),
            labels.cells.len()
        )));
    }
    let classes: Vec<CellClass> = labels.cells.iter().map(|c| c.class).collect();
    Ok(select_hard_negatives(cls_losses, &classes, ratio))
}

fn check_shapes(preds: &[PredictionGrid], labels: &[LabelGrid]) -> Result<(), LossError> {
    if preds.len() != labels.len() {
        return Err(LossError::ShapeMismatch(format!(
            "{} prediction grids vs {} label grids",
            preds.len(),
            labels.len()
        )));
    }
    for (p, l) in preds.iter().zip(labels) {
        if p.spec.size != l.spec.size || p.cells.len() != l.cells.len() {
            return Err(LossError::ShapeMismatch(format!(
                "grid {} vs {}",
                p.spec.size, l.spec.size
            )));
        }
    }
    Ok(())
}

/// Per-cell classification losses for every grid, in grid order.
fn per_cell_cls_losses(preds: &[PredictionGrid], labels: &[LabelGrid]) -> Vec<Vec<f64>> {
    let pairs: Vec<(&PredictionGrid, &LabelGrid)> = preds.iter().zip(labels.iter()).collect();
    par::map_slice(&pairs, |(p, l)| {
        p.cells
            .iter()
            .zip(l.cells.iter())
            .map(|(d, c)| {
                softmax_ce(&d.class_logits, c.class.index()).expect("3 logits, class < 3")
            })
            .collect()
    })
}

/// Hard-negative mask across the whole pyramid (selection is global:
/// `k` counts text cells on every grid of the image).
pub fn mining_mask(
    preds: &[PredictionGrid],
    labels: &[LabelGrid],
    ratio: f64,
) -> Result<Vec<Vec<bool>>, LossError> {
    check_shapes(preds, labels)?;
    let losses = per_cell_cls_losses(preds, labels);
    let flat_losses: Vec<f64> = losses.iter().flatten().copied().collect();
    let flat_classes: Vec<CellClass> = labels
        .iter()
        .flat_map(|l| l.cells.iter().map(|c| c.class))
        .collect();
    let flat_mask = select_hard_negatives(&flat_losses, &flat_classes, ratio);
    let mut out = Vec::with_capacity(labels.len());
    let mut offset = 0;
    for l in labels {
        let n = l.cells.len();
        out.push(flat_mask[offset..offset + n].to_vec());
        offset += n;
    }
    Ok(out)
}

/// Total loss with an externally fixed mining mask. The mask is
/// treated as a constant: the finite-difference oracle and the
/// analytic gradient both differentiate this function.
pub fn total_loss_with_mask(
    preds: &[PredictionGrid],
    labels: &[LabelGrid],
    mask: &[Vec<bool>],
    lambda1: f64,
    lambda2: f64,
) -> Result<LossBreakdown, LossError> {
    check_shapes(preds, labels)?;
    if mask.len() != labels.len()
        || mask.iter().zip(labels).any(|(m, l)| m.len() != l.cells.len())
    {
        return Err(LossError::ShapeMismatch("mask shape".into()));
    }
    let mut cls = Kahan::default();
    let mut loc = Kahan::default();
    let mut vertical = Kahan::default();
    let mut n_cls = 0usize;
    let mut n_reg = 0usize;
    for ((p, l), m) in preds.iter().zip(labels).zip(mask) {
        for ((d, c), &kept) in p.cells.iter().zip(l.cells.iter()).zip(m.iter()) {
            if kept {
                n_cls += 1;
                cls.add(softmax_ce(&d.class_logits, c.class.index())?);
            }
            if c.class == CellClass::Text {
                n_reg += 1;
                let target = c.regression.expect("text cell has regression");
                for (pv, tv) in d.regression.as_array().iter().zip(target.as_array()) {
                    loc.add(smooth_l1(pv - tv));
                }
                let v = c.vertical.expect("text cell has vertical flag") as usize;
                vertical.add(softmax_ce(&d.vertical_logits, v)?);
            }
        }
    }
    let cls = cls.value();
    let loc = loc.value();
    let vertical = vertical.value();
    let total = cls / n_cls.max(1) as f64
        + lambda1 * loc / n_reg.max(1) as f64
        + lambda2 * vertical / n_reg.max(1) as f64;
    Ok(LossBreakdown {
        cls,
        loc,
        vertical,
        total,
        n_cls,
        n_reg,
    })
}

/// Full objective: classification over mined cells, localization and
/// vertical-flag terms over text cells, normalized by the respective
/// counts.
pub fn total_loss(
    preds: &[PredictionGrid],
    labels: &[LabelGrid],
    lambda1: f64,
    lambda2: f64,
) -> Result<LossBreakdown, LossError> {
    let mask = mining_mask(preds, labels, 3.0)?;
    total_loss_with_mask(preds, labels, &mask, lambda1, lambda2)
}

/// Analytic gradients of [`total_loss`] with the mining mask frozen at
/// the current predictions. Output grids mirror the prediction layout;
/// each field holds the partial derivative of the total loss.
pub fn loss_gradient(
    preds: &[PredictionGrid],
    labels: &[LabelGrid],
    lambda1: f64,
    lambda2: f64,
) -> Result<Vec<PredictionGrid>, LossError> {
    let mask = mining_mask(preds, labels, 3.0)?;
    loss_gradient_with_mask(preds, labels, &mask, lambda1, lambda2)
}

/// Gradients of [`total_loss_with_mask`] for a fixed mask.
pub fn loss_gradient_with_mask(
    preds: &[PredictionGrid],
    labels: &[LabelGrid],
    mask: &[Vec<bool>],
    lambda1: f64,
    lambda2: f64,
) -> Result<Vec<PredictionGrid>, LossError> {
    check_shapes(preds, labels)?;
    let n_cls: usize = mask.iter().map(|m| m.iter().filter(|&&b| b).count()).sum();
    let n_reg: usize = labels.iter().map(|l| l.positive_count()).sum();
    let cls_norm = 1.0 / n_cls.max(1) as f64;
    let reg_norm = 1.0 / n_reg.max(1) as f64;

    let mut out = Vec::with_capacity(preds.len());
    for ((p, l), m) in preds.iter().zip(labels).zip(mask) {
        let mut grid = PredictionGrid::zeros(p.spec);
        for (idx, ((d, c), &kept)) in
            p.cells.iter().zip(l.cells.iter()).zip(m.iter()).enumerate()
        {
            let g = &mut grid.cells[idx];
            if kept {
                let probs = softmax(&d.class_logits);
                for (k, pr) in probs.iter().enumerate() {
                    let ind = if k == c.class.index() { 1.0 } else { 0.0 };
                    g.class_logits[k] = (pr - ind) * cls_norm;
                }
            }
            if c.class == CellClass::Text {
                let target = c.regression.expect("text cell has regression");
                let dp = d.regression.as_array();
                let dt = target.as_array();
                let mut reg = [0.0; 5];
                for k in 0..5 {
                    reg[k] = lambda1 * smooth_l1_grad(dp[k] - dt[k]) * reg_norm;
                }
                g.regression = crate::anchor::DeltaRegression::from_array(reg);
                let v = c.vertical.expect("text cell has vertical flag") as usize;
                let probs = softmax(&d.vertical_logits);
                for (k, pr) in probs.iter().enumerate() {
                    let ind = if k == v { 1.0 } else { 0.0 };
                    g.vertical_logits[k] = lambda2 * (pr - ind) * reg_norm;
                }
            }
        }
        out.push(grid);
    }
    Ok(out)
}
