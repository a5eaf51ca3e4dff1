use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Parameter, Tensor};
use crate::scalar::Scalar;

/// How a weight tensor groups into per-output-channel filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum Filters {
    /// Plain draw, no filter adjustment.
    Raw,
    /// `Cout×Cin×Kh×Kw`: output channel is the leading axis.
    Conv,
    /// `Cin×Cout×Kh×Kw`: output channel is the second axis.
    Transposed,
}

/// Appends a weight drawn uniformly from `[-s, s]`, `s = sqrt(1 / fan_in)`,
/// and its bias. With `Filters::Raw` the bias is drawn from the same range.
/// Otherwise the bias starts at zero and every output filter is shifted to
/// zero sum: a relu layer fed non-negative activations otherwise starts with
/// whole channels that never fire.
pub(super) fn push_layer<T: Scalar>(
    params: &mut Vec<Parameter<T>>,
    rng: &mut ChaCha8Rng,
    name: &str,
    weight_shape: [usize; 4],
    fan_in: usize,
    bias_len: usize,
    filters: Filters,
) {
    let bound = (1.0 / fan_in as f64).sqrt();
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-bound..bound)).collect() };
    let mut weight = draw(weight_shape.iter().product());
    let bias = if filters == Filters::Raw { draw(bias_len) } else { vec![0.0; bias_len] };
    center_filters(&mut weight, weight_shape, filters);
    // rounded through f32 so f32 and f64 builds of one seed hold equal values
    let to_tensor = |shape: &[usize], v: Vec<f64>| {
        Tensor::new(shape, v.into_iter().map(|x| T::of(x as f32 as f64)).collect())
            .expect("layer shape")
            .with_requires_grad(true)
    };
    params.push(Parameter {
        name: format!("{name}.weight"),
        tensor: to_tensor(&weight_shape, weight),
    });
    params.push(Parameter {
        name: format!("{name}.bias"),
        tensor: to_tensor(&[bias_len], bias),
    });
}

fn center_filters(w: &mut [f64], [a, b, kh, kw]: [usize; 4], filters: Filters) {
    let taps = kh * kw;
    match filters {
        Filters::Raw => {}
        Filters::Conv => {
            for f in w.chunks_exact_mut(b * taps) {
                let mean = f.iter().sum::<f64>() / f.len() as f64;
                f.iter_mut().for_each(|v| *v -= mean);
            }
        }
        Filters::Transposed => {
            for o in 0..b {
                let idx = |i: usize, t: usize| (i * b + o) * taps + t;
                let mut sum = 0.0;
                for i in 0..a {
                    for t in 0..taps {
                        sum += w[idx(i, t)];
                    }
                }
                let mean = sum / (a * taps) as f64;
                for i in 0..a {
                    for t in 0..taps {
                        w[idx(i, t)] -= mean;
                    }
                }
            }
        }
    }
}
