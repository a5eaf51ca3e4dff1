//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vgan::autograd::{Graph, Tensor, Var};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

/// Values in [-1, 1] kept at least `gap` away from zero.
pub fn uniform_away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize], gap: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = rng.gen_range(gap..1.0);
        if rng.gen_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// Quadruple-loop zero-padded cross-correlation, written independently of
/// the engine's kernels.
pub fn naive_conv2d(
    x: &[f64],
    [n, cin, h, w]: [usize; 4],
    k: &[f64],
    [cout, _, kh, kw]: [usize; 4],
    bias: &[f64],
    stride: usize,
    pad: usize,
) -> (Vec<f64>, [usize; 4]) {
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; n * cout * oh * ow];
    for b in 0..n {
        for o in 0..cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias[o];
                    for i in 0..cin {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += x[((b * cin + i) * h + iy as usize) * w + ix as usize]
                                    * k[((o * cin + i) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    out[((b * cout + o) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    (out, [n, cout, oh, ow])
}

/// Scatter form of the transposed convolution: every input pixel stamps the
/// kernel, scaled, at `stride`-spaced offsets (padding `(K − s)/2` cropped).
pub fn naive_transposed_conv2d(
    x: &[f64],
    [n, cin, h, w]: [usize; 4],
    k: &[f64],
    [_, cout, kh, kw]: [usize; 4],
    bias: &[f64],
    stride: usize,
) -> (Vec<f64>, [usize; 4]) {
    let pad = (kh - stride) / 2;
    let (oh, ow) = (h * stride, w * stride);
    let mut out = vec![0.0; n * cout * oh * ow];
    for b in 0..n {
        for o in 0..cout {
            for v in out[(b * cout + o) * oh * ow..][..oh * ow].iter_mut() {
                *v = bias[o];
            }
        }
        for i in 0..cin {
            for iy in 0..h {
                for ix in 0..w {
                    let v = x[((b * cin + i) * h + iy) * w + ix];
                    for o in 0..cout {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let oy = (iy * stride + ky) as isize - pad as isize;
                                let ox = (ix * stride + kx) as isize - pad as isize;
                                if oy < 0 || ox < 0 || oy >= oh as isize || ox >= ow as isize {
                                    continue;
                                }
                                out[((b * cout + o) * oh + oy as usize) * ow + ox as usize] +=
                                    v * k[((i * cout + o) * kh + ky) * kw + kx];
                            }
                        }
                    }
                }
            }
        }
    }
    (out, [n, cout, oh, ow])
}

/// `|a − n| / max(|a|, |n|, 1e-6)`; the floor keeps exact zeros comparable.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Compares analytic gradients of a scalar function of `inputs` against
/// central finite differences (step `h`, 64-bit). `build` records the
/// function on a fresh graph given one leaf per input and returns the loss.
/// Returns the maximum relative error over every input element.
pub fn gradcheck<F>(inputs: &[Tensor<f64>], h: f64, build: F) -> f64
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Var,
{
    let eval = |ts: &[Tensor<f64>], with_grad: bool| {
        let mut g = Graph::new();
        let vars: Vec<Var> = ts
            .iter()
            .map(|t| g.leaf(t.clone().with_requires_grad(with_grad)))
            .collect();
        let loss = build(&mut g, &vars);
        (g, vars, loss)
    };

    let (mut g, vars, loss) = eval(inputs, true);
    g.backward(loss).expect("backward");
    let analytic: Vec<Vec<f64>> = vars.iter().map(|&v| g.grad(v).unwrap().to_vec()).collect();

    let mut worst = 0.0f64;
    for (ti, t) in inputs.iter().enumerate() {
        for j in 0..t.numel() {
            let mut plus = inputs.to_vec();
            plus[ti].data_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[ti].data_mut()[j] -= h;
            let (gp, _, lp) = eval(&plus, false);
            let (gm, _, lm) = eval(&minus, false);
            let numeric = (gp.value(lp).item() - gm.value(lm).item()) / (2.0 * h);
            worst = worst.max(rel_err(analytic[ti][j], numeric));
        }
    }
    worst
}

/// Reduces any tensor to a scalar through a fixed random projection so every
/// output element contributes a distinct weight.
pub fn project(g: &mut Graph<f64>, out: Var, seed: u64) -> Var {
    let mut r = rng(seed);
    let shape = g.value(out).shape().to_vec();
    let w = g.constant(uniform(&mut r, &shape, -1.0, 1.0));
    let prod = g.mul(out, w).unwrap();
    g.global_mean(prod)
}

/// Tie-corrected Mann–Whitney statistic by exhaustive pair comparison.
pub fn mann_whitney_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(&s, _)| s).collect();
    let mut u = 0.0;
    for &p in &pos {
        for &q in &neg {
            if p > q {
                u += 1.0;
            } else if p == q {
                u += 0.5;
            }
        }
    }
    u / (pos.len() as f64 * neg.len() as f64)
}

/// Otsu reference: 256-bin histogram over [0, 1] (bin = floor(256·s),
/// clamped), every boundary `k = 1..=255` re-counted from scratch, class
/// means taken over bin indices. Between-class variance is
/// `(N·S₀ − n₀·S)² / (n₀·n₁)`, proportional to ω₀ω₁(μ₀ − μ₁)². Lowest
/// maximizing `k` wins; `None` when no boundary separates two non-empty
/// classes.
pub fn exhaustive_otsu_boundary(scores: &[f64]) -> Option<usize> {
    let bins: Vec<u64> = scores
        .iter()
        .map(|&s| ((s * 256.0).floor() as i64).clamp(0, 255) as u64)
        .collect();
    let total_n = bins.len() as i128;
    let total_s: i128 = bins.iter().map(|&b| b as i128).sum();
    let mut best: Option<(f64, usize)> = None;
    for k in 1..256u64 {
        let n0 = bins.iter().filter(|&&b| b < k).count() as i128;
        let s0: i128 = bins.iter().filter(|&&b| b < k).map(|&b| b as i128).sum();
        let n1 = total_n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let d = (total_n * s0 - n0 * total_s) as f64;
        let var = d * d / (n0 as f64 * n1 as f64);
        if best.map_or(true, |(v, _)| var > v) {
            best = Some((var, k as usize));
        }
    }
    best.map(|(_, k)| k)
}

/// PR reference: for each distinct score (descending) recount predicted
/// positives `s >= t` from scratch; integrate precision over recall with
/// trapezoids, starting at recall 0 with the first precision.
pub fn brute_force_pr_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let mut pts = Vec::new();
    for &t in &thresholds {
        let tp = scores.iter().zip(labels).filter(|(&s, &l)| s >= t && l).count() as f64;
        let pp = scores.iter().filter(|&&s| s >= t).count() as f64;
        pts.push((tp / pos, tp / pp));
    }
    let mut area = 0.0;
    let mut prev = (0.0, pts[0].1);
    for &p in &pts {
        area += (p.0 - prev.0) * (p.1 + prev.1) / 2.0;
        prev = p;
    }
    area
}
