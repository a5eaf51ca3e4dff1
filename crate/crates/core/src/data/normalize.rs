use super::netpbm::Image;
use crate::autograd::Tensor;

/// Per-channel z-score: `(v − mean) / σ` with the population standard
/// deviation; a constant channel maps to zeros. Returns `1×C×H×W`.
pub fn zscore_normalize(image: &Image) -> Tensor<f32> {
    let (c, plane) = (image.channels, image.width * image.height);
    let mut out = vec![0.0f32; c * plane];
    for ch in 0..c {
        let values = || image.samples.iter().skip(ch).step_by(c).map(|&v| v as f64);
        let mean = values().sum::<f64>() / plane as f64;
        let var = values().map(|v| (v - mean) * (v - mean)).sum::<f64>() / plane as f64;
        let sd = var.sqrt();
        if sd > 0.0 {
            for (o, v) in out[ch * plane..][..plane].iter_mut().zip(values()) {
                *o = ((v - mean) / sd) as f32;
            }
        }
    }
    Tensor::new(&[1, c, image.height, image.width], out).expect("image extents positive")
}
