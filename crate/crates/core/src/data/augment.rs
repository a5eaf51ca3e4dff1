use super::sample::{Mask, Sample};
use crate::autograd::Tensor;

/// Element of the dihedral group on the pixel grid: an optional left-right
/// flip followed by `quarter_turns` clockwise 90° rotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Transform {
    pub flip: bool,
    pub quarter_turns: u8,
}

impl Transform {
    pub const IDENTITY: Transform = Transform {
        flip: false,
        quarter_turns: 0,
    };

    /// All eight elements for square images, or the four that keep the
    /// extents (0°/180° with and without flip) otherwise.
    pub fn group(square: bool) -> Vec<Transform> {
        let turns: &[u8] = if square { &[0, 1, 2, 3] } else { &[0, 2] };
        [false, true]
            .iter()
            .flat_map(|&flip| turns.iter().map(move |&quarter_turns| Transform { flip, quarter_turns }))
            .collect()
    }

    /// Destination of pixel `(r, c)` of an `h×w` grid, with the output extents.
    pub fn map_coord(self, (r, c): (usize, usize), (h, w): (usize, usize)) -> ((usize, usize), (usize, usize)) {
        let mut p = if self.flip { (r, w - 1 - c) } else { (r, c) };
        let mut dims = (h, w);
        for _ in 0..self.quarter_turns % 4 {
            // clockwise: (r, c) in H×W → (c, H − 1 − r) in W×H
            p = (p.1, dims.0 - 1 - p.0);
            dims = (dims.1, dims.0);
        }
        (p, dims)
    }

    /// Applies the transform to each `h×w` plane of `data`.
    pub fn apply_planes<T: Copy + Default>(self, data: &[T], planes: usize, (h, w): (usize, usize)) -> (Vec<T>, (usize, usize)) {
        let (_, (oh, ow)) = self.map_coord((0, 0), (h, w));
        let mut out = vec![T::default(); data.len()];
        for p in 0..planes {
            for r in 0..h {
                for c in 0..w {
                    let ((nr, nc), _) = self.map_coord((r, c), (h, w));
                    out[p * oh * ow + nr * ow + nc] = data[p * h * w + r * w + c];
                }
            }
        }
        (out, (oh, ow))
    }

    pub fn apply_mask(self, m: &Mask) -> Mask {
        let (data, (h, w)) = self.apply_planes(&m.data, 1, (m.height, m.width));
        Mask { height: h, width: w, data }
    }

    pub fn apply_sample(self, s: &Sample) -> Sample {
        let [_, c, h, w] = s.x.dims4("augment").expect("sample fundus is rank 4");
        let (xd, (oh, ow)) = self.apply_planes(s.x.data(), c, (h, w));
        let x = Tensor::new(&[1, c, oh, ow], xd).expect("same element count");
        let suffix = if self == Self::IDENTITY {
            String::new()
        } else {
            format!("#r{}{}", self.quarter_turns as u32 * 90, if self.flip { "f" } else { "" })
        };
        Sample {
            id: format!("{}{suffix}", s.id),
            x,
            y: self.apply_mask(&s.y),
            m: self.apply_mask(&s.m),
        }
    }
}

/// Flip/rotation augmentation applied jointly to fundus, vessel map and
/// mask. The first returned sample is the untouched original.
pub fn augment(sample: &Sample) -> Vec<Sample> {
    Transform::group(sample.height() == sample.width())
        .into_iter()
        .map(|t| t.apply_sample(sample))
        .collect()
}
