use crate::autograd::Tensor;
use crate::error::{Error, Result};

/// Binary map (vessel gold standard, FOV mask, thresholded prediction).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    /// Row-major, each entry 0 or 1.
    pub data: Vec<u8>,
}

impl Mask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape(
                "mask",
                format!("{} entries for a {height}x{width} mask", data.len()),
            ));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::Data("mask entries must be 0 or 1".into()));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Self {
        Self {
            height,
            width,
            data: vec![value as u8; height * width],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col] == 1
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    /// `1×1×H×W` tensor of 0.0 / 1.0.
    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::new(&[1, 1, self.height, self.width], self.data.iter().map(|&v| v as f32).collect())
            .expect("mask extents positive")
    }

    /// Binarizes values `>= threshold`.
    pub fn from_threshold(height: usize, width: usize, values: &[f64], threshold: f64) -> Result<Self> {
        Self::new(height, width, values.iter().map(|&v| (v >= threshold) as u8).collect())
    }
}

/// A training/evaluation record: z-scored fundus `x` (`1×3×H×W`), vessel
/// gold standard `y` and FOV mask `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub x: Tensor<f32>,
    pub y: Mask,
    pub m: Mask,
}

impl Sample {
    pub fn new(id: impl Into<String>, x: Tensor<f32>, y: Mask, m: Mask) -> Result<Self> {
        let id = id.into();
        let [n, c, h, w] = x.dims4("sample")?;
        if n != 1 || c != 3 {
            return Err(Error::shape("sample", format!("{id}: fundus must be 1×3×H×W, got {:?}", x.shape())));
        }
        for (name, mask) in [("vessel map", &y), ("FOV mask", &m)] {
            if (mask.height, mask.width) != (h, w) {
                return Err(Error::shape(
                    "sample",
                    format!("{id}: {name} is {}x{} but fundus is {h}x{w}", mask.height, mask.width),
                ));
            }
        }
        Ok(Self { id, x, y, m })
    }

    pub fn height(&self) -> usize {
        self.y.height
    }

    pub fn width(&self) -> usize {
        self.y.width
    }
}
