//! Circle-anchor text detection geometry, end to end and without a
//! network: the anchor codec, elliptical label assignment over a
//! feature pyramid, a numerically exact reference loss with hard
//! negative mining, locality-aware NMS, dataset parsing and
//! augmentation, and ICDAR-style evaluation.
//!
//! The `parallel` feature (default on) runs the data-parallel inner
//! loops — cell scoring, per-image evaluation, confidence filtering —
//! on rayon; disabling it falls back to sequential iteration with
//! identical results.

pub mod anchor;
pub mod dataio;
pub mod eval;
pub mod geometry;
pub mod loss;
pub mod nms;
mod par;
pub mod synth;
pub mod target;

pub use anchor::{
    apply_delta, compute_delta, decode_circle_anchor, encode_circle_anchor, vertical_flag,
    AnchorDelta, AnchorError, CircleAnchor, DeltaRegression, GridSpec,
};
pub use eval::{evaluate, match_detections, EvalError, EvalReport};
pub use geometry::{
    iou, polygon_intersection_area, quad_from_rbox, rbox_from_quad, GeometryError, Point2, Quad,
    RotatedBox,
};
pub use loss::{
    hard_negative_select, loss_gradient, smooth_l1, softmax_ce, total_loss, LossBreakdown,
    LossError, PredictionGrid,
};
pub use nms::{filter_by_confidence, lanms, lanms_with_stats, standard_nms, weighted_merge, Detection};
pub use target::{
    build_targets, classify_cell, ellipse_score, scale_match, CellClass, CellLabel, GtBox,
    LabelGrid, PyramidSpec,
};
