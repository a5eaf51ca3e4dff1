//! Flat `key=value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::DatasetKind;
use crate::error::{Error, Result};
use crate::models::{DiscriminatorVariant, GeneratorSpec};
use crate::objective::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DatasetChoice {
    Drive,
    Stare,
    Custom,
    /// Generated on the fly from the seed.
    Synthetic,
}

/// Every key with its default, in the order `config.resolved` lists them.
pub const KEYS: &[(&str, &str)] = &[
    ("scales", "2"),
    ("base_channels", "8"),
    ("discriminator", "patch10"),
    ("lambda", "10"),
    ("lr", "0.0002"),
    ("beta1", "0.5"),
    ("beta2", "0.999"),
    ("rounds", "100"),
    ("batch_size", "1"),
    ("seed", "0"),
    ("val_fraction", "0.05"),
    ("eps_clamp", "0.0000001"),
    ("augment", "true"),
    ("dataset", "synthetic"),
    ("data_dir", ""),
    ("image_size", "64"),
    ("synthetic_samples", "8"),
    ("test_fraction", "0.2"),
    ("fov_luminance", "0.0784313725490196"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scales: usize,
    pub base_channels: usize,
    /// `None` trains the generator alone.
    pub discriminator: Option<DiscriminatorVariant>,
    pub train: TrainConfig,
    pub dataset: DatasetChoice,
    pub data_dir: Option<PathBuf>,
    /// Side of synthetic images; for file datasets the square every image is
    /// padded to, or 0 to pad to the smallest multiple of `2^scales` that
    /// holds the largest image.
    pub image_size: usize,
    pub synthetic_samples: usize,
    /// Held-out fraction for `dataset=custom`.
    pub test_fraction: f64,
    /// Luminance cut for generated field-of-view masks.
    pub fov_luminance: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::parse("").expect("defaults are valid")
    }
}

fn discriminator_name(d: Option<DiscriminatorVariant>) -> String {
    match d {
        None => "none".into(),
        Some(DiscriminatorVariant::Pixel) => "pixel".into(),
        Some(DiscriminatorVariant::Image) => "image".into(),
        Some(DiscriminatorVariant::Patch(k)) => format!("patch{k}"),
    }
}

fn dataset_name(d: DatasetChoice) -> &'static str {
    match d {
        DatasetChoice::Drive => "drive",
        DatasetChoice::Stare => "stare",
        DatasetChoice::Custom => "custom",
        DatasetChoice::Synthetic => "synthetic",
    }
}

impl RunConfig {
    /// Parses config text. Blank lines and `#` comments are skipped; every
    /// malformed line, unknown or repeated key and invalid value is reported
    /// together.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values: Vec<(&str, String)> = KEYS.iter().map(|&(k, v)| (k, v.to_string())).collect();
        let mut seen = vec![false; KEYS.len()];
        let mut errs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                errs.push(format!("line {}: expected key=value, got {line:?}", n + 1));
                continue;
            };
            let (k, v) = (k.trim(), v.trim());
            match KEYS.iter().position(|&(key, _)| key == k) {
                None => errs.push(format!("line {}: unknown key {k:?}", n + 1)),
                Some(i) if seen[i] => errs.push(format!("line {}: duplicate key {k:?}", n + 1)),
                Some(i) => {
                    seen[i] = true;
                    values[i].1 = v.to_string();
                }
            }
        }
        let get = |k: &str| values.iter().find(|(key, _)| *key == k).map(|(_, v)| v.as_str()).expect("known key");
        let mut num = |k: &str| -> f64 {
            get(k).parse::<f64>().unwrap_or_else(|_| {
                errs.push(format!("{k}: expected a number, got {:?}", get(k)));
                f64::NAN
            })
        };
        let lambda = num("lambda");
        let lr = num("lr");
        let beta1 = num("beta1");
        let beta2 = num("beta2");
        let val_fraction = num("val_fraction");
        let eps_clamp = num("eps_clamp");
        let test_fraction = num("test_fraction");
        let fov_luminance = num("fov_luminance");
        let mut int = |k: &str| -> u64 {
            get(k).parse::<u64>().unwrap_or_else(|_| {
                errs.push(format!("{k}: expected a non-negative integer, got {:?}", get(k)));
                0
            })
        };
        let scales = int("scales") as usize;
        let base_channels = int("base_channels") as usize;
        let rounds = int("rounds") as usize;
        let batch_size = int("batch_size") as usize;
        let seed = int("seed");
        let image_size = int("image_size") as usize;
        let synthetic_samples = int("synthetic_samples") as usize;

        let augment = match get("augment") {
            "true" => true,
            "false" => false,
            other => {
                errs.push(format!("augment: expected true or false, got {other:?}"));
                false
            }
        };
        let discriminator = match get("discriminator") {
            "none" => None,
            "pixel" => Some(DiscriminatorVariant::Pixel),
            "image" => Some(DiscriminatorVariant::Image),
            other => match other.strip_prefix("patch").and_then(|k| k.parse::<usize>().ok()) {
                Some(k) if k > 0 => Some(DiscriminatorVariant::Patch(k)),
                _ => {
                    errs.push(format!(
                        "discriminator: expected pixel, patch10, patch80, image or none, got {other:?}"
                    ));
                    None
                }
            },
        };
        let dataset = match get("dataset") {
            "drive" => DatasetChoice::Drive,
            "stare" => DatasetChoice::Stare,
            "custom" => DatasetChoice::Custom,
            "synthetic" => DatasetChoice::Synthetic,
            other => {
                errs.push(format!("dataset: expected drive, stare, custom or synthetic, got {other:?}"));
                DatasetChoice::Synthetic
            }
        };
        let data_dir = Some(get("data_dir")).filter(|s| !s.is_empty()).map(PathBuf::from);

        let train = TrainConfig {
            lambda,
            lr,
            beta1,
            beta2,
            rounds,
            batch_size,
            seed,
            val_fraction,
            eps_clamp,
            augment,
        };
        if let Err(Error::Config(mut e)) = train.validate() {
            errs.append(&mut e);
        }
        if let Err(e) = GeneratorSpec::new(scales, base_channels).validate() {
            errs.push(e.to_string());
        }
        if dataset == DatasetChoice::Synthetic {
            if image_size == 0 {
                errs.push("image_size must be positive for dataset=synthetic".into());
            }
            if synthetic_samples < 2 {
                errs.push("synthetic_samples must be at least 2".into());
            }
        } else if data_dir.is_none() {
            errs.push(format!("data_dir is required for dataset={}", get("dataset")));
        }
        if scales < 31 && image_size % (1 << scales) != 0 {
            errs.push(format!("image_size {image_size} must be divisible by 2^scales = {}", 1usize << scales));
        }
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            errs.push(format!("test_fraction must lie in (0, 1), got {test_fraction}"));
        }
        if !(0.0..1.0).contains(&fov_luminance) {
            errs.push(format!("fov_luminance must lie in [0, 1), got {fov_luminance}"));
        }
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        Ok(Self {
            scales,
            base_channels,
            discriminator,
            train,
            dataset,
            data_dir,
            image_size,
            synthetic_samples,
            test_fraction,
            fov_luminance,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn generator_spec(&self) -> GeneratorSpec {
        GeneratorSpec::new(self.scales, self.base_channels)
    }

    pub fn dataset_kind(&self) -> Option<DatasetKind> {
        match self.dataset {
            DatasetChoice::Drive => Some(DatasetKind::Drive),
            DatasetChoice::Stare => Some(DatasetKind::Stare),
            DatasetChoice::Custom => Some(DatasetKind::Custom {
                test_fraction: self.test_fraction,
            }),
            DatasetChoice::Synthetic => None,
        }
    }

    /// Every key with its effective value; parsing the result yields `self`.
    pub fn resolved(&self) -> String {
        let t = &self.train;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        put("scales", self.scales.to_string());
        put("base_channels", self.base_channels.to_string());
        put("discriminator", discriminator_name(self.discriminator));
        put("lambda", t.lambda.to_string());
        put("lr", t.lr.to_string());
        put("beta1", t.beta1.to_string());
        put("beta2", t.beta2.to_string());
        put("rounds", t.rounds.to_string());
        put("batch_size", t.batch_size.to_string());
        put("seed", t.seed.to_string());
        put("val_fraction", t.val_fraction.to_string());
        put("eps_clamp", t.eps_clamp.to_string());
        put("augment", t.augment.to_string());
        put("dataset", dataset_name(self.dataset).to_string());
        put(
            "data_dir",
            self.data_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        );
        put("image_size", self.image_size.to_string());
        put("synthetic_samples", self.synthetic_samples.to_string());
        put("test_fraction", self.test_fraction.to_string());
        put("fov_luminance", self.fov_luminance.to_string());
        out
    }
}
