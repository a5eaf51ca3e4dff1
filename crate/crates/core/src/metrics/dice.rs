use crate::data::{Image, Mask};
use crate::error::{Error, Result};

/// Confusion counts restricted to the field of view.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn count(pred: &Mask, gold: &Mask, fov: &Mask) -> Result<Self> {
        aligned(pred, gold, fov)?;
        let mut c = Self::default();
        for ((&p, &g), &m) in pred.data.iter().zip(&gold.data).zip(&fov.data) {
            if m == 0 {
                continue;
            }
            match (p == 1, g == 1) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    /// `2·TP / (2·TP + FP + FN)`; 1.0 when prediction and gold are both empty.
    pub fn dice(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }

    pub fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

fn aligned(pred: &Mask, gold: &Mask, fov: &Mask) -> Result<()> {
    let dims = |m: &Mask| (m.height, m.width);
    if dims(pred) != dims(gold) || dims(gold) != dims(fov) {
        return Err(Error::shape(
            "dice",
            format!(
                "prediction {:?}, gold {:?} and mask {:?} must share extents",
                dims(pred),
                dims(gold),
                dims(fov)
            ),
        ));
    }
    Ok(())
}

/// Dice coefficient `2|P∧G| / (|P| + |G|)` over pixels with `fov = 1`.
pub fn dice(pred: &Mask, gold: &Mask, fov: &Mask) -> Result<f64> {
    Ok(Confusion::count(pred, gold, fov)?.dice())
}

pub const GREEN: [u16; 3] = [0, 255, 0];
pub const BLUE: [u16; 3] = [0, 0, 255];
pub const RED: [u16; 3] = [255, 0, 0];

/// Colour-coded comparison: true positives green, false positives blue,
/// false negatives red; true negatives and everything outside the field of
/// view black.
pub fn overlay(pred: &Mask, gold: &Mask, fov: &Mask) -> Result<Image> {
    aligned(pred, gold, fov)?;
    let mut samples = Vec::with_capacity(pred.data.len() * 3);
    for ((&p, &g), &m) in pred.data.iter().zip(&gold.data).zip(&fov.data) {
        let colour = match (m == 1, p == 1, g == 1) {
            (true, true, true) => GREEN,
            (true, true, false) => BLUE,
            (true, false, true) => RED,
            _ => [0, 0, 0],
        };
        samples.extend(colour);
    }
    Image::new(pred.width, pred.height, 3, 255, samples)
}
