use std::io::Write;
use std::path::Path;

use super::curves::{pr_auc, roc_auc, Curve, ScoredPixels};
use super::dice::Confusion;
use super::otsu::otsu_threshold;
use crate::data::Mask;
use crate::error::{Error, Result};

/// A probability map with its gold standard and field-of-view mask.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalItem {
    pub id: String,
    /// Row-major probabilities, same extents as `gold`.
    pub probs: Vec<f64>,
    pub gold: Mask,
    pub fov: Mask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdMode {
    /// One Otsu threshold over all pooled FOV probabilities.
    #[default]
    Pooled,
    /// A separate Otsu threshold per image.
    PerImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageScore {
    pub id: String,
    pub threshold: f64,
    pub confusion: Confusion,
    pub dice: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub roc: Curve,
    pub pr: Curve,
    /// Pooled threshold (in per-image mode, the pooled value for reference).
    pub otsu_threshold: f64,
    pub per_image: Vec<ImageScore>,
    /// Dice of the summed confusion counts.
    pub aggregate: ImageScore,
}

impl MetricsReport {
    pub fn roc_auc(&self) -> f64 {
        self.roc.auc
    }

    pub fn pr_auc(&self) -> f64 {
        self.pr.auc
    }
}

/// Pools the FOV pixels of every item into one ROC and one PR curve, picks
/// an Otsu threshold over the pooled probabilities (or per image) and
/// scores each binarized map with dice.
pub fn evaluate(items: &[EvalItem], mode: ThresholdMode) -> Result<MetricsReport> {
    if items.is_empty() {
        return Err(Error::Data("nothing to evaluate".into()));
    }
    let mut pooled = ScoredPixels::default();
    for it in items {
        // validates extents
        ScoredPixels::from_map(&it.probs, &it.gold, &it.fov)?;
        pooled.extend(&it.probs, &it.gold, &it.fov);
    }
    let pooled = ScoredPixels::new(pooled.scores, pooled.labels)?;
    let roc = roc_auc(&pooled)?;
    let pr = pr_auc(&pooled)?;
    let threshold = otsu_threshold(&pooled.scores);

    let mut per_image = Vec::with_capacity(items.len());
    let mut total = Confusion::default();
    for it in items {
        let t = match mode {
            ThresholdMode::Pooled => threshold,
            ThresholdMode::PerImage => {
                let own = ScoredPixels::from_map(&it.probs, &it.gold, &it.fov)?;
                otsu_threshold(&own.scores)
            }
        };
        let pred = Mask::from_threshold(it.gold.height, it.gold.width, &it.probs, t)?;
        let c = Confusion::count(&pred, &it.gold, &it.fov)?;
        total = total.add(c);
        per_image.push(ImageScore {
            id: it.id.clone(),
            threshold: t,
            confusion: c,
            dice: c.dice(),
        });
    }
    Ok(MetricsReport {
        roc,
        pr,
        otsu_threshold: threshold,
        per_image,
        aggregate: ImageScore {
            id: "ALL".into(),
            threshold,
            confusion: total,
            dice: total.dice(),
        },
    })
}

/// `%.9g`-style rendering: 9 significant digits, trailing zeros trimmed.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn curve_csv(curve: &Curve) -> String {
    let mut out = String::from("threshold,x,y\n");
    for p in &curve.points {
        out.push_str(&format!("{},{},{}\n", format_sig9(p.threshold), format_sig9(p.x), format_sig9(p.y)));
    }
    out
}

/// Per-image rows, then the `ALL` row.
pub fn summary_csv(report: &MetricsReport) -> String {
    let mut out = String::from("image_id,dice,tp,fp,fn,tn\n");
    for s in report.per_image.iter().chain(std::iter::once(&report.aggregate)) {
        let c = s.confusion;
        out.push_str(&format!("{},{},{},{},{},{}\n", s.id, format_sig9(s.dice), c.tp, c.fp, c.fn_, c.tn));
    }
    out
}

pub fn auc_csv(report: &MetricsReport) -> String {
    format!(
        "roc_auc,pr_auc,otsu_threshold\n{},{},{}\n",
        format_sig9(report.roc.auc),
        format_sig9(report.pr.auc),
        format_sig9(report.otsu_threshold)
    )
}

/// Writes `metrics.csv`, `metrics_auc.csv`, `roc.csv` and `pr.csv` into `dir`.
pub fn write_report(report: &MetricsReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, body) in [
        ("metrics.csv", summary_csv(report)),
        ("metrics_auc.csv", auc_csv(report)),
        ("roc.csv", curve_csv(&report.roc)),
        ("pr.csv", curve_csv(&report.pr)),
    ] {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(body.as_bytes()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
