//! End-to-end commands: train, infer, eval and overlay.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::data::{
    crop_to, generate_fov_mask, generate_synthetic_sample, list_by_stem, load_dataset, load_gold, load_image,
    load_mask, make_split, pad_sample_to, pad_to_multiple, write_image, zscore_normalize, Image, Mask, Sample,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, otsu_threshold, overlay, write_report, EvalItem, MetricsReport, ThresholdMode};
use crate::models::{Discriminator, Generator};
use crate::objective::{fit, history_csv, Checkpoint, RoundStats, TrainState};

const GENERATOR_SEED_SALT: u64 = 0x5eed_0001;
const DISCRIMINATOR_SEED_SALT: u64 = 0x5eed_0002;

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// The training images a config selects, padded to one common size.
pub fn training_samples(cfg: &RunConfig) -> Result<Vec<Sample>> {
    let seed = cfg.train.seed;
    let Some(kind) = cfg.dataset_kind() else {
        return (0..cfg.synthetic_samples as u64)
            .map(|i| generate_synthetic_sample(cfg.image_size, seed.wrapping_add(i)))
            .collect();
    };
    let dir = cfg
        .data_dir
        .as_ref()
        .ok_or_else(|| Error::Config(vec!["data_dir is required for file datasets".into()]))?;
    let all = load_dataset(dir, kind, cfg.fov_luminance)?;
    let ids: Vec<String> = all.iter().map(|s| s.id.clone()).collect();
    let plan = make_split(&ids, kind, seed)?;
    let train: BTreeSet<&String> = plan.train.iter().collect();
    let samples: Vec<Sample> = all.into_iter().filter(|s| train.contains(&s.id)).collect();
    if samples.is_empty() {
        return Err(Error::Data(format!("no training images under {}", dir.display())));
    }

    let divisor = cfg.generator_spec().divisor();
    let (ph, pw) = if cfg.image_size > 0 {
        (cfg.image_size, cfg.image_size)
    } else {
        let h = samples.iter().map(Sample::height).max().unwrap_or(0);
        let w = samples.iter().map(Sample::width).max().unwrap_or(0);
        (h.div_ceil(divisor) * divisor, w.div_ceil(divisor) * divisor)
    };
    samples
        .iter()
        .map(|s| {
            pad_sample_to(s, ph, pw)
                .map(|(p, _)| p)
                .map_err(|_| Error::Data(format!("{} is {}x{}, larger than image_size {}", s.id, s.height(), s.width(), cfg.image_size)))
        })
        .collect()
}

/// Freshly initialized networks for a config and image size.
pub fn build_state(cfg: &RunConfig, (h, w): (usize, usize)) -> Result<TrainState> {
    let seed = cfg.train.seed;
    let spec = cfg.generator_spec();
    spec.check_input_size(h, w)?;
    let generator = Generator::build(spec, seed ^ GENERATOR_SEED_SALT)?;
    let discriminator = cfg
        .discriminator
        .map(|v| Discriminator::build(v.capped_to(h, w), (h, w), cfg.base_channels, seed ^ DISCRIMINATOR_SEED_SALT))
        .transpose()?;
    Ok(TrainState::new(generator, discriminator))
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub best_round: usize,
    pub best_val_loss: f64,
    pub history: Vec<RoundStats>,
    pub state: TrainState,
}

/// Trains per `cfg`, writing `config.resolved`, `history.csv` and
/// `best.ckpt` into `out`.
pub fn run_train(cfg: &RunConfig, out: &Path, mut on_round: impl FnMut(&RoundStats)) -> Result<TrainSummary> {
    create_dir(out)?;
    write_file(&out.join("config.resolved"), cfg.resolved())?;
    let samples = training_samples(cfg)?;
    let size = (samples[0].height(), samples[0].width());
    let mut state = build_state(cfg, size)?;
    let outcome = fit(&mut state, &samples, &cfg.train, &mut on_round)?;
    write_file(&out.join("history.csv"), history_csv(&outcome.history))?;
    outcome.best.save(out.join("best.ckpt"))?;
    Ok(TrainSummary {
        best_round: outcome.best.round,
        best_val_loss: outcome.best.val_loss,
        history: outcome.history,
        state,
    })
}

/// Probability map of one fundus image, at the image's own size.
pub fn predict_image(generator: &Generator<f32>, fundus: &Image) -> Result<Vec<f32>> {
    if fundus.channels != 3 {
        return Err(Error::Data(format!(
            "expected a 3-channel (P6) fundus image, got {} channel(s)",
            fundus.channels
        )));
    }
    let x = zscore_normalize(fundus);
    let (padded, pad) = pad_to_multiple(&x, generator.spec().divisor())?;
    let probs = generator.predict(&padded)?;
    Ok(crop_to(&probs, &pad)?.into_data())
}

/// Encodes probabilities as a 16-bit graymap, `round(p·65535)`.
pub fn probability_image(probs: &[f32], width: usize, height: usize) -> Result<Image> {
    let samples = probs.iter().map(|&p| (p.clamp(0.0, 1.0) as f64 * 65535.0).round() as u16).collect();
    Image::new(width, height, 1, 65535, samples)
}

/// Reads a graymap as probabilities `value / maxval`.
pub fn load_probability_map(path: impl AsRef<Path>) -> Result<(Vec<f64>, usize, usize)> {
    let path = path.as_ref();
    let img = load_image(path)?;
    if img.channels != 1 {
        return Err(Error::Data(format!("{}: probability maps must be graymaps", path.display())));
    }
    let scale = img.maxval as f64;
    Ok((img.samples.iter().map(|&v| v as f64 / scale).collect(), img.height, img.width))
}

/// Runs the checkpointed generator on one fundus image and writes the
/// 16-bit probability map. Returns the in-memory probabilities.
pub fn run_infer(checkpoint: &Path, image: &Path, out: &Path) -> Result<Vec<f32>> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let fundus = load_image(image)?;
    let probs = predict_image(&ckpt.generator, &fundus)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_image(&probability_image(&probs, fundus.width, fundus.height)?, out)?;
    Ok(probs)
}

fn check_extents(what: &str, path: &Path, (h, w): (usize, usize), (eh, ew): (usize, usize)) -> Result<()> {
    if (h, w) != (eh, ew) {
        return Err(Error::shape(
            "eval",
            format!("{what} {} is {h}x{w}, prediction is {eh}x{ew}", path.display()),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub report: MetricsReport,
    /// Remarks about fallbacks taken, also written to `notes.txt`.
    pub notes: Vec<String>,
}

pub struct EvalArgs<'a> {
    pub pred_dir: &'a Path,
    pub gold_dir: &'a Path,
    pub mask_dir: Option<&'a Path>,
    /// Fundus images used to generate masks when `mask_dir` is absent.
    pub image_dir: Option<&'a Path>,
    pub out: &'a Path,
    pub mode: ThresholdMode,
    pub fov_luminance: f64,
}

/// Evaluates every probability map in `pred_dir` (`*.pgm`) against the
/// gold standard with the same stem. Unmatched files are all listed before
/// failing. Without a mask directory, masks are generated from fundus
/// images in `image_dir`, or cover the whole frame if none are given.
pub fn run_eval(args: &EvalArgs) -> Result<EvalOutcome> {
    let preds = list_by_stem(args.pred_dir, "pgm")?;
    let golds = list_by_stem(args.gold_dir, "pgm")?;
    if preds.is_empty() {
        return Err(Error::Data(format!("no .pgm probability maps in {}", args.pred_dir.display())));
    }
    let mask_dir = args.mask_dir.filter(|d| d.is_dir());
    let masks = mask_dir.map(|d| list_by_stem(d, "pgm")).transpose()?;
    let images = match (mask_dir, args.image_dir) {
        (None, Some(d)) => Some(list_by_stem(d, "ppm")?),
        _ => None,
    };

    let mut notes = Vec::new();
    if let (Some(requested), None) = (args.mask_dir, mask_dir) {
        notes.push(format!("mask directory {} not found", requested.display()));
    }
    match (&masks, &images) {
        (None, Some(_)) => notes.push(format!(
            "FOV masks synthesized from fundus images in {}",
            args.image_dir.expect("image dir").display()
        )),
        (None, None) => notes.push("no FOV masks or fundus images given; every pixel counts as inside the FOV".into()),
        _ => {}
    }

    let mut problems = Vec::new();
    for stem in preds.keys() {
        if !golds.contains_key(stem) {
            problems.push(format!("{stem}: no gold standard in {}", args.gold_dir.display()));
        }
        if let (Some(m), Some(d)) = (&masks, mask_dir) {
            if !m.contains_key(stem) {
                problems.push(format!("{stem}: no mask in {}", d.display()));
            }
        }
        if let (Some(im), Some(d)) = (&images, args.image_dir) {
            if !im.contains_key(stem) {
                problems.push(format!("{stem}: no fundus image in {}", d.display()));
            }
        }
    }
    for stem in golds.keys() {
        if !preds.contains_key(stem) {
            problems.push(format!("{stem}: no prediction in {}", args.pred_dir.display()));
        }
    }
    if !problems.is_empty() {
        return Err(Error::Data(format!("unmatched files:\n  {}", problems.join("\n  "))));
    }

    let mut items = Vec::with_capacity(preds.len());
    for (stem, pred_path) in &preds {
        let (probs, h, w) = load_probability_map(pred_path)?;
        let gold_path = &golds[stem];
        let gold = load_gold(gold_path)?;
        check_extents("gold standard", gold_path, (gold.height, gold.width), (h, w))?;
        let fov = match (&masks, &images) {
            (Some(m), _) => {
                let mask = load_mask(&m[stem])?;
                check_extents("mask", &m[stem], (mask.height, mask.width), (h, w))?;
                mask
            }
            (None, Some(im)) => {
                let fundus = load_image(&im[stem])?;
                check_extents("fundus image", &im[stem], (fundus.height, fundus.width), (h, w))?;
                generate_fov_mask(&fundus, args.fov_luminance)?
            }
            (None, None) => Mask::filled(h, w, true),
        };
        items.push(EvalItem {
            id: stem.clone(),
            probs,
            gold,
            fov,
        });
    }
    let report = evaluate(&items, args.mode)?;
    write_report(&report, args.out)?;
    if !notes.is_empty() {
        write_file(&args.out.join("notes.txt"), notes.join("\n") + "\n")?;
    }
    Ok(EvalOutcome { report, notes })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdChoice {
    Otsu,
    Fixed(f64),
}

impl std::str::FromStr for ThresholdChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "otsu" {
            return Ok(Self::Otsu);
        }
        match s.parse::<f64>() {
            Ok(t) if (0.0..=1.0).contains(&t) => Ok(Self::Fixed(t)),
            _ => Err(Error::InvalidArgument(format!(
                "threshold must be \"otsu\" or a number in [0, 1], got {s:?}"
            ))),
        }
    }
}

/// Writes the colour-coded comparison of a thresholded probability map
/// with its gold standard. Returns the threshold used.
pub fn run_overlay(pred: &Path, gold: &Path, mask: Option<&Path>, threshold: ThresholdChoice, out: &Path) -> Result<f64> {
    let (probs, h, w) = load_probability_map(pred)?;
    let gold_mask = load_gold(gold)?;
    check_extents("gold standard", gold, (gold_mask.height, gold_mask.width), (h, w))?;
    let fov = match mask {
        Some(p) => {
            let m = load_mask(p)?;
            check_extents("mask", p, (m.height, m.width), (h, w))?;
            m
        }
        None => Mask::filled(h, w, true),
    };
    let t = match threshold {
        ThresholdChoice::Fixed(t) => t,
        ThresholdChoice::Otsu => {
            let inside: Vec<f64> = probs.iter().zip(&fov.data).filter(|(_, &m)| m == 1).map(|(&p, _)| p).collect();
            if inside.is_empty() {
                return Err(Error::Data("field of view is empty".into()));
            }
            otsu_threshold(&inside)
        }
    };
    let pred_mask = Mask::from_threshold(h, w, &probs, t)?;
    write_image(&overlay(&pred_mask, &gold_mask, &fov)?, out)?;
    Ok(t)
}

/// Default output path for `infer` when only a directory is known.
pub fn default_prediction_path(dir: &Path, image: &Path) -> PathBuf {
    let stem = image.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "prediction".into());
    dir.join(format!("{stem}.pgm"))
}
