//! Field-of-view restricted evaluation.

mod curves;
mod dice;
mod evaluate;
mod otsu;

pub use curves::{pr_auc, roc_auc, Curve, CurvePoint, ScoredPixels};
pub use dice::{dice, overlay, Confusion, BLUE, GREEN, RED};
pub use evaluate::{
    auc_csv, curve_csv, evaluate, format_sig9, summary_csv, write_report, EvalItem, ImageScore, MetricsReport,
    ThresholdMode,
};
pub use otsu::{otsu_threshold, OTSU_BINS};
