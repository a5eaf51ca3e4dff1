use std::collections::VecDeque;

use super::netpbm::Image;
use super::sample::Mask;
use crate::error::{Error, Result};

pub const DEFAULT_LUMINANCE_THRESHOLD: f64 = 20.0 / 255.0;

/// Field-of-view mask from the central bright blob of a fundus photograph.
///
/// Pixels whose mean-channel luminance (scaled to [0, 1]) exceeds
/// `luminance_threshold` are foreground. The 4-connected component holding
/// the centre pixel is kept (the largest one, first in scan order on ties,
/// when the centre is dark) and its interior holes are filled.
pub fn generate_fov_mask(fundus: &Image, luminance_threshold: f64) -> Result<Mask> {
    if fundus.channels != 3 {
        return Err(Error::Data(format!(
            "FOV detection needs a 3-channel fundus, got {} channel(s)",
            fundus.channels
        )));
    }
    let (h, w) = (fundus.height, fundus.width);
    let scale = 3.0 * fundus.maxval as f64;
    let bright: Vec<bool> = fundus
        .samples
        .chunks_exact(3)
        .map(|px| px.iter().map(|&v| v as f64).sum::<f64>() / scale > luminance_threshold)
        .collect();
    if !bright.iter().any(|&b| b) {
        return Err(Error::Data("no blob found: no pixel above the luminance threshold".into()));
    }

    let (labels, sizes) = label_components(&bright, h, w);
    let centre = (h / 2) * w + w / 2;
    let keep = if bright[centre] {
        labels[centre]
    } else {
        // first maximum in label order, which is scan order of first pixels
        let mut best = 0;
        for (l, &s) in sizes.iter().enumerate() {
            if s > sizes[best] {
                best = l;
            }
        }
        best
    };
    let blob: Vec<bool> = labels.iter().map(|&l| l == keep).collect();

    // holes: 4-connected regions outside the blob that never reach the border
    let outside: Vec<bool> = blob.iter().map(|&b| !b).collect();
    let (out_labels, out_sizes) = label_components(&outside, h, w);
    let mut touches_border = vec![false; out_sizes.len()];
    for r in 0..h {
        for c in 0..w {
            if (r == 0 || c == 0 || r == h - 1 || c == w - 1) && outside[r * w + c] {
                touches_border[out_labels[r * w + c]] = true;
            }
        }
    }
    let data = (0..h * w)
        .map(|i| (blob[i] || (outside[i] && !touches_border[out_labels[i]])) as u8)
        .collect();
    Mask::new(h, w, data)
}

/// 4-connected labelling of the `true` cells. Labels are assigned in scan
/// order of each component's first pixel; `false` cells get `usize::MAX`.
fn label_components(fg: &[bool], h: usize, w: usize) -> (Vec<usize>, Vec<usize>) {
    let mut labels = vec![usize::MAX; fg.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..fg.len() {
        if !fg[start] || labels[start] != usize::MAX {
            continue;
        }
        let label = sizes.len();
        let mut size = 0;
        labels[start] = label;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (r, c) = (i / w, i % w);
            let mut visit = |j: usize| {
                if fg[j] && labels[j] == usize::MAX {
                    labels[j] = label;
                    queue.push_back(j);
                }
            };
            if r > 0 {
                visit(i - w);
            }
            if r + 1 < h {
                visit(i + w);
            }
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < w {
                visit(i + 1);
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Number of 4-connected components of the set cells in `mask`.
pub fn component_count(mask: &Mask) -> usize {
    let fg: Vec<bool> = mask.data.iter().map(|&v| v == 1).collect();
    label_components(&fg, mask.height, mask.width).1.len()
}
