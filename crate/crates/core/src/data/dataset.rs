use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::fov::generate_fov_mask;
use super::netpbm::{load_image, Image};
use super::normalize::zscore_normalize;
use super::sample::{Mask, Sample};
use super::split::DatasetKind;
use crate::autograd::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Binarizes a graymap at half range (128 of 255, scaled for 16-bit).
pub fn binarize(image: &Image) -> Result<Mask> {
    if image.channels != 1 {
        return Err(Error::Data(format!("expected a graymap, got {} channels", image.channels)));
    }
    let cut = if image.maxval == 255 { 128 } else { 128 * 257 };
    Mask::new(image.height, image.width, image.samples.iter().map(|&v| (v >= cut) as u8).collect())
}

pub fn load_gold(path: impl AsRef<Path>) -> Result<Mask> {
    binarize(&load_image(path)?)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    binarize(&load_image(path)?)
}

/// `stem → path` for files in `dir` with the given extension.
pub(crate) fn list_by_stem(dir: &Path, ext: &str) -> Result<BTreeMap<String, PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case(ext)) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path);
            }
        }
    }
    Ok(out)
}

/// Loads `<dir>/images/*.ppm` with `<dir>/labels/*.pgm` and, when present,
/// `<dir>/masks/*.pgm`, matched by file stem. Missing masks are generated
/// from the fundus with `luminance_threshold`.
pub fn load_split_dir(dir: &Path, id_prefix: &str, luminance_threshold: f64) -> Result<Vec<Sample>> {
    let images = list_by_stem(&dir.join("images"), "ppm")?;
    let labels = list_by_stem(&dir.join("labels"), "pgm")?;
    let mask_dir = dir.join("masks");
    let masks = if mask_dir.is_dir() {
        Some(list_by_stem(&mask_dir, "pgm")?)
    } else {
        None
    };
    let mut problems = Vec::new();
    for stem in images.keys() {
        if !labels.contains_key(stem) {
            problems.push(format!("{stem}: no label in {}", dir.join("labels").display()));
        }
        if masks.as_ref().is_some_and(|m| !m.contains_key(stem)) {
            problems.push(format!("{stem}: no mask in {}", mask_dir.display()));
        }
    }
    for stem in labels.keys().filter(|s| !images.contains_key(*s)) {
        problems.push(format!("{stem}: label without image"));
    }
    if !problems.is_empty() {
        return Err(Error::Data(format!("unmatched files:\n  {}", problems.join("\n  "))));
    }
    if images.is_empty() {
        return Err(Error::Data(format!("no .ppm images in {}", dir.join("images").display())));
    }
    let mut samples = Vec::with_capacity(images.len());
    for (stem, path) in &images {
        let fundus = load_image(path)?;
        let y = load_gold(&labels[stem])?;
        let m = match &masks {
            Some(m) => load_mask(&m[stem])?,
            None => generate_fov_mask(&fundus, luminance_threshold)?,
        };
        if fundus.channels != 3 {
            return Err(Error::Data(format!("{}: fundus must be a P6 pixmap", path.display())));
        }
        samples.push(Sample::new(format!("{id_prefix}{stem}"), zscore_normalize(&fundus), y, m)?);
    }
    Ok(samples)
}

/// Loads a dataset root. DRIVE roots hold `training/` and `test/`
/// sub-trees whose ids are prefixed accordingly; other kinds are flat.
pub fn load_dataset(root: impl AsRef<Path>, kind: DatasetKind, luminance_threshold: f64) -> Result<Vec<Sample>> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::Data(format!("data directory {} does not exist", root.display())));
    }
    match kind {
        DatasetKind::Drive => {
            let mut all = load_split_dir(&root.join("training"), "training/", luminance_threshold)?;
            all.extend(load_split_dir(&root.join("test"), "test/", luminance_threshold)?);
            Ok(all)
        }
        _ => load_split_dir(root, "", luminance_threshold),
    }
}

/// Zero padding added to reach a multiple of the generator's divisor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Padding {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

/// Pads an `N×C×H×W` tensor symmetrically with zeros (extra row/column at
/// the bottom/right) up to the next multiple of `divisor`.
pub fn pad_to_multiple<T: Scalar>(t: &Tensor<T>, divisor: usize) -> Result<(Tensor<T>, Padding)> {
    let [_, _, h, w] = t.dims4("pad")?;
    pad_to_size(t, h.div_ceil(divisor) * divisor, w.div_ceil(divisor) * divisor)
}

/// Pads symmetrically with zeros to exactly `ph×pw`.
pub fn pad_to_size<T: Scalar>(t: &Tensor<T>, ph: usize, pw: usize) -> Result<(Tensor<T>, Padding)> {
    let [n, c, h, w] = t.dims4("pad")?;
    if ph < h || pw < w {
        return Err(Error::shape("pad", format!("{h}x{w} does not fit in {ph}x{pw}")));
    }
    let pad = Padding {
        top: (ph - h) / 2,
        left: (pw - w) / 2,
        height: h,
        width: w,
    };
    if (ph, pw) == (h, w) {
        return Ok((t.clone(), pad));
    }
    let mut out = vec![T::zero(); n * c * ph * pw];
    for plane in 0..n * c {
        for r in 0..h {
            let src = &t.data()[(plane * h + r) * w..][..w];
            out[(plane * ph + r + pad.top) * pw + pad.left..][..w].copy_from_slice(src);
        }
    }
    Ok((Tensor::new(&[n, c, ph, pw], out)?, pad))
}

/// Inverse of [`pad_to_multiple`].
pub fn crop_to<T: Scalar>(t: &Tensor<T>, pad: &Padding) -> Result<Tensor<T>> {
    let [n, c, ph, pw] = t.dims4("crop")?;
    if ph < pad.top + pad.height || pw < pad.left + pad.width {
        return Err(Error::shape("crop", format!("{:?} is smaller than the crop window {pad:?}", t.shape())));
    }
    let mut out = Vec::with_capacity(n * c * pad.height * pad.width);
    for plane in 0..n * c {
        for r in 0..pad.height {
            out.extend_from_slice(&t.data()[(plane * ph + r + pad.top) * pw + pad.left..][..pad.width]);
        }
    }
    Tensor::new(&[n, c, pad.height, pad.width], out)
}

/// Pads a mask the same way, with zeros (outside the field of view).
pub fn pad_mask(m: &Mask, pad: &Padding, ph: usize, pw: usize) -> Mask {
    let mut out = Mask::filled(ph, pw, false);
    for r in 0..m.height {
        out.data[(r + pad.top) * pw + pad.left..][..m.width].copy_from_slice(&m.data[r * m.width..][..m.width]);
    }
    out
}

/// Pads every tensor/mask of a sample to a multiple of `divisor`.
pub fn pad_sample(s: &Sample, divisor: usize) -> Result<(Sample, Padding)> {
    let (ph, pw) = (s.height().div_ceil(divisor) * divisor, s.width().div_ceil(divisor) * divisor);
    pad_sample_to(s, ph, pw)
}

/// Pads every tensor/mask of a sample to exactly `ph×pw`.
pub fn pad_sample_to(s: &Sample, ph: usize, pw: usize) -> Result<(Sample, Padding)> {
    let (x, pad) = pad_to_size(&s.x, ph, pw)?;
    let [_, _, ph, pw] = x.dims4("pad")?;
    let padded = Sample::new(s.id.clone(), x, pad_mask(&s.y, &pad, ph, pw), pad_mask(&s.m, &pad, ph, pw))?;
    Ok((padded, pad))
}
