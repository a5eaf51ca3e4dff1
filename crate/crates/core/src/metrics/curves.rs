//! ROC and precision-recall curves with trapezoidal areas. Equal scores
//! are grouped into a single threshold.

use crate::data::Mask;
use crate::error::{Error, Result};

/// Scores and binary labels of the pixels inside the field of view.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoredPixels {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

impl ScoredPixels {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::shape(
                "scored pixels",
                format!("{} scores vs {} labels", scores.len(), labels.len()),
            ));
        }
        if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::Numerical(format!("non-finite score {s}")));
        }
        Ok(Self { scores, labels })
    }

    /// Collects the pixels with `fov = 1`.
    pub fn from_map(probs: &[f64], gold: &Mask, fov: &Mask) -> Result<Self> {
        if probs.len() != gold.data.len() || (gold.height, gold.width) != (fov.height, fov.width) {
            return Err(Error::shape(
                "scored pixels",
                format!(
                    "probability map of {} values, gold {}x{}, mask {}x{}",
                    probs.len(),
                    gold.height,
                    gold.width,
                    fov.height,
                    fov.width
                ),
            ));
        }
        let mut sp = Self::default();
        sp.extend(probs, gold, fov);
        Self::new(sp.scores, sp.labels)
    }

    pub(crate) fn extend(&mut self, probs: &[f64], gold: &Mask, fov: &Mask) {
        for ((&p, &y), &m) in probs.iter().zip(&gold.data).zip(&fov.data) {
            if m == 1 {
                self.scores.push(p);
                self.labels.push(y == 1);
            }
        }
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// `(threshold, tp, fp)` with cumulative counts of scores `>= threshold`,
    /// thresholds descending.
    fn cumulative_counts(&self) -> Vec<(f64, usize, usize)> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        let mut out: Vec<(f64, usize, usize)> = Vec::new();
        let (mut tp, mut fp) = (0, 0);
        for (k, &i) in order.iter().enumerate() {
            if self.labels[i] {
                tp += 1;
            } else {
                fp += 1;
            }
            let last_of_group = order.get(k + 1).map_or(true, |&j| self.scores[j] != self.scores[i]);
            if last_of_group {
                out.push((self.scores[i], tp, fp));
            }
        }
        out
    }
}

/// One curve point: `(threshold, x, y)`, where `(x, y)` is `(fpr, tpr)`
/// for ROC and `(recall, precision)` for PR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub threshold: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    /// Ordered by descending threshold.
    pub points: Vec<CurvePoint>,
    pub auc: f64,
}

fn trapezoid(points: &[CurvePoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].x - w[0].x) * (w[0].y + w[1].y) / 2.0)
        .sum()
}

/// ROC curve from an initial `(+∞, 0, 0)` point through every distinct
/// score, with trapezoidal area.
pub fn roc_auc(sp: &ScoredPixels) -> Result<Curve> {
    let pos = sp.positives();
    let neg = sp.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Data(format!(
            "ROC needs both classes, got {pos} positive and {neg} negative pixels"
        )));
    }
    let mut points = vec![CurvePoint {
        threshold: f64::INFINITY,
        x: 0.0,
        y: 0.0,
    }];
    points.extend(sp.cumulative_counts().into_iter().map(|(t, tp, fp)| CurvePoint {
        threshold: t,
        x: fp as f64 / neg as f64,
        y: tp as f64 / pos as f64,
    }));
    let auc = trapezoid(&points);
    Ok(Curve { points, auc })
}

/// Precision-recall curve at every distinct score. The area is integrated
/// over recall from 0, holding the first threshold's precision on
/// `[0, recall₁]`.
pub fn pr_auc(sp: &ScoredPixels) -> Result<Curve> {
    let pos = sp.positives();
    if pos == 0 {
        return Err(Error::Data("PR curve needs at least one positive pixel".into()));
    }
    let points: Vec<CurvePoint> = sp
        .cumulative_counts()
        .into_iter()
        .map(|(t, tp, fp)| CurvePoint {
            threshold: t,
            x: tp as f64 / pos as f64,
            y: tp as f64 / (tp + fp) as f64,
        })
        .collect();
    let start = CurvePoint {
        threshold: f64::INFINITY,
        x: 0.0,
        y: points[0].y,
    };
    let auc = trapezoid(&std::iter::once(start).chain(points.iter().copied()).collect::<Vec<_>>());
    Ok(Curve { points, auc })
}
