//! Deterministic pseudo-fundus images for exercising the pipeline without
//! external data: a bright circular field of view on black, with branching
//! vessel trees drawn as dark strokes into the fundus and as 1s into the
//! gold standard.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::netpbm::Image;
use super::normalize::zscore_normalize;
use super::sample::{Mask, Sample};
use crate::error::{Error, Result};

/// FOV radius as a fraction of the image size.
const FOV_RADIUS: f64 = 0.46;
const TREES: std::ops::RangeInclusive<usize> = 3..=4;
const STEP: f64 = 1.0;

/// Raw synthetic fundus (8-bit RGB), gold standard and FOV mask.
pub fn synthetic_image(size: usize, seed: u64) -> Result<(Image, Mask, Mask)> {
    if size < 8 {
        return Err(Error::InvalidArgument(format!("synthetic images need size >= 8, got {size}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as f64;
    let centre = (s / 2.0 - 0.5, s / 2.0 - 0.5);
    let radius = FOV_RADIUS * s;
    let inside = |r: f64, c: f64| (r - centre.0).powi(2) + (c - centre.1).powi(2) <= radius * radius;

    let fov: Vec<u8> = (0..size * size)
        .map(|i| inside((i / size) as f64, (i % size) as f64) as u8)
        .collect();

    // vessel strength per pixel in [0, 1]; gold is strength > 0
    let mut strength = vec![0.0f64; size * size];
    let trees = rng.gen_range(TREES);
    // shared root near the optic disc, trees fan out from it
    let disc_angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let disc = (
        centre.0 + 0.35 * radius * disc_angle.sin(),
        centre.1 + 0.35 * radius * disc_angle.cos(),
    );
    for t in 0..trees {
        let heading = disc_angle + std::f64::consts::PI + (t as f64 - (trees as f64 - 1.0) / 2.0) * 1.3
            + rng.gen_range(-0.3..0.3);
        let contrast = rng.gen_range(0.55..0.9);
        let width = if size < 48 { 2.0 } else { 3.0 };
        grow(&mut rng, &mut strength, size, disc, heading, width, 0.9 * radius, contrast, 0, &inside);
    }

    let gold: Vec<u8> = strength
        .iter()
        .zip(&fov)
        .map(|(&v, &m)| (v > 0.0 && m == 1) as u8)
        .collect();

    let tint = [rng.gen_range(170.0..210.0), rng.gen_range(70.0..100.0), rng.gen_range(30.0..50.0)];
    let mut samples = Vec::with_capacity(size * size * 3);
    for i in 0..size * size {
        let (r, c) = ((i / size) as f64, (i % size) as f64);
        let d = ((r - centre.0).powi(2) + (c - centre.1).powi(2)).sqrt() / radius;
        for &base in &tint {
            let v = if fov[i] == 1 {
                let shade = 1.0 - 0.3 * d * d;
                let darken = 1.0 - 0.55 * strength[i];
                base * shade * darken + rng.gen_range(-6.0..6.0)
            } else {
                rng.gen_range(0.0..6.0)
            };
            samples.push(v.round().clamp(0.0, 255.0) as u16);
        }
    }
    let image = Image::new(size, size, 3, 255, samples)?;
    Ok((image, Mask::new(size, size, gold)?, Mask::new(size, size, fov)?))
}

#[allow(clippy::too_many_arguments)]
fn grow(
    rng: &mut ChaCha8Rng,
    strength: &mut [f64],
    size: usize,
    mut pos: (f64, f64),
    mut heading: f64,
    width: f64,
    length: f64,
    contrast: f64,
    depth: usize,
    inside: &dyn Fn(f64, f64) -> bool,
) {
    let steps = (length / STEP) as usize;
    for step in 0..steps {
        heading += rng.gen_range(-0.25..0.25);
        pos = (pos.0 + STEP * heading.sin(), pos.1 + STEP * heading.cos());
        if !inside(pos.0, pos.1) {
            return;
        }
        stamp(strength, size, pos, width, contrast);
        if depth < 3 && step > 3 && rng.gen_bool(0.06) {
            let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let child_width = (width - 1.0).max(1.0);
            let child_len = length * rng.gen_range(0.3..0.6);
            let child_heading = heading + side * rng.gen_range(0.5..1.1);
            grow(
                rng,
                strength,
                size,
                pos,
                child_heading,
                child_width,
                child_len,
                contrast * 0.9,
                depth + 1,
                inside,
            );
        }
    }
}

/// Marks every pixel whose centre lies within `width / 2` of `pos`
/// (always at least the nearest pixel).
fn stamp(strength: &mut [f64], size: usize, pos: (f64, f64), width: f64, contrast: f64) {
    let half = width / 2.0;
    let (r0, c0) = (pos.0.round(), pos.1.round());
    let reach = half.ceil() as i64;
    for dr in -reach..=reach {
        for dc in -reach..=reach {
            let (r, c) = (r0 + dr as f64, c0 + dc as f64);
            if r < 0.0 || c < 0.0 || r >= size as f64 || c >= size as f64 {
                continue;
            }
            let near = (dr == 0 && dc == 0) || (r - pos.0).powi(2) + (c - pos.1).powi(2) <= half * half;
            if near {
                let i = r as usize * size + c as usize;
                strength[i] = strength[i].max(contrast);
            }
        }
    }
}

/// Synthetic sample with z-scored fundus.
pub fn generate_synthetic_sample(size: usize, seed: u64) -> Result<Sample> {
    let (image, y, m) = synthetic_image(size, seed)?;
    Sample::new(format!("synthetic_{seed:04}"), zscore_normalize(&image), y, m)
}
