mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use vgan::autograd::{adam_step, Activation, AdamConfig, AdamState, Graph, Parameter, Tensor};

const FD_STEP: f64 = 1e-3;
const FD_TOL: f64 = 1e-3;
const INSTANCES: u64 = 20;

fn t32(shape: &[usize], data: &[f32]) -> Tensor<f32> {
    Tensor::new(shape, data.to_vec()).unwrap()
}

#[test]
fn conv2d_sums_ones_kernel_windows() {
    let mut g = Graph::new();
    let x = g.constant(t32(&[1, 1, 3, 3], &[1., 2., 3., 4., 5., 6., 7., 8., 9.]));
    let k = g.constant(Tensor::full(&[1, 1, 2, 2], 1.0));
    let b = g.constant(Tensor::zeros(&[1]));
    let y = g.conv2d(x, k, b, 1, 0).unwrap();
    assert_eq!(g.value(y).shape(), &[1, 1, 2, 2]);
    assert_eq!(g.value(y).data(), &[12., 16., 24., 28.]);
}

#[test]
fn conv2d_identity_and_zero_kernels() {
    let mut r = rng(1);
    let input = uniform(&mut r, &[2, 1, 5, 4], -3.0, 3.0);
    let mut g = Graph::new();
    let x = g.constant(input.clone());
    let b = g.constant(Tensor::zeros(&[1]));
    let one = g.constant(Tensor::full(&[1, 1, 1, 1], 1.0));
    let zero = g.constant(Tensor::zeros(&[3, 1, 3, 3]));
    let b3 = g.constant(Tensor::zeros(&[3]));
    let id = g.conv2d(x, one, b, 1, 0).unwrap();
    assert_eq!(g.value(id).data(), input.data());
    let z = g.conv2d(x, zero, b3, 1, 1).unwrap();
    assert!(g.value(z).data().iter().all(|&v| v == 0.0));
}

#[test]
fn conv2d_matches_naive_oracle() {
    let mut r = rng(2);
    for case in 0..30 {
        let n = r.gen_range(1..3);
        let cin = r.gen_range(1..4);
        let cout = r.gen_range(1..4);
        let k = [1, 2, 3][r.gen_range(0..3)];
        let stride = r.gen_range(1..3);
        let pad = r.gen_range(0..2);
        let h = r.gen_range(k..k + 6);
        let w = r.gen_range(k..k + 6);
        let x = uniform(&mut r, &[n, cin, h, w], -1.0, 1.0);
        let kt = uniform(&mut r, &[cout, cin, k, k], -1.0, 1.0);
        let bias = uniform(&mut r, &[cout], -1.0, 1.0);
        let (expect, shape) = naive_conv2d(x.data(), [n, cin, h, w], kt.data(), [cout, cin, k, k], bias.data(), stride, pad);
        let mut g = Graph::new();
        let (xv, kv, bv) = (g.constant(x), g.constant(kt), g.constant(bias));
        let y = g.conv2d(xv, kv, bv, stride, pad).unwrap();
        assert_eq!(g.value(y).shape(), &shape, "case {case}");
        for (a, e) in g.value(y).data().iter().zip(&expect) {
            assert!((a - e).abs() < 1e-12, "case {case}: {a} vs {e}");
        }
    }
}

#[test]
fn conv2d_rejects_channel_mismatch_naming_both_shapes() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(Tensor::zeros(&[1, 3, 4, 4]));
    let k = g.constant(Tensor::zeros(&[2, 2, 3, 3]));
    let b = g.constant(Tensor::zeros(&[2]));
    let msg = g.conv2d(x, k, b, 1, 1).unwrap_err().to_string();
    assert!(msg.contains("[1, 3, 4, 4]") && msg.contains("[2, 2, 3, 3]"), "{msg}");
    let small = g.constant(Tensor::zeros(&[1, 2, 1, 1]));
    assert!(g.conv2d(small, k, b, 1, 0).is_err());
}

#[test]
fn conv2d_input_gradient_conservation() {
    // with no padding every tap meets every output position once, so
    // Σ ∂(Σ out)/∂x = N · oh · ow · Σ kernel
    let mut r = rng(3);
    for _ in 0..10 {
        let (n, cin, cout, k, h, w) = (2, 2, 3, 3, r.gen_range(3..8), r.gen_range(3..8));
        let x = uniform(&mut r, &[n, cin, h, w], -1.0, 1.0).with_requires_grad(true);
        let kt = uniform(&mut r, &[cout, cin, k, k], -1.0, 1.0);
        let ksum: f64 = kt.data().iter().sum();
        let mut g = Graph::new();
        let (xv, kv) = (g.leaf(x), g.constant(kt));
        let bv = g.constant(Tensor::zeros(&[cout]));
        let y = g.conv2d(xv, kv, bv, 1, 0).unwrap();
        let numel = g.value(y).numel() as f64;
        let m = g.global_mean(y);
        let loss = g.scale(m, numel);
        g.backward(loss).unwrap();
        let gsum: f64 = g.grad(xv).unwrap().iter().sum();
        let expect = (n * (h - k + 1) * (w - k + 1)) as f64 * ksum;
        assert!((gsum - expect).abs() < 1e-9 * expect.abs().max(1.0));
    }
}

#[test]
fn transposed_conv2d_broadcasts_single_pixel() {
    let mut g = Graph::new();
    let x = g.constant(t32(&[1, 1, 1, 1], &[2.5]));
    let k = g.constant(Tensor::full(&[1, 1, 2, 2], 1.0));
    let b = g.constant(Tensor::zeros(&[1]));
    let y = g.transposed_conv2d(x, k, b, 2).unwrap();
    assert_eq!(g.value(y).shape(), &[1, 1, 2, 2]);
    assert_eq!(g.value(y).data(), &[2.5; 4]);

    let z = g.constant(Tensor::zeros(&[1, 1, 3, 2]));
    let k2 = g.constant(Tensor::full(&[1, 1, 2, 2], 0.7));
    let yz = g.transposed_conv2d(z, k2, b, 2).unwrap();
    assert_eq!(g.value(yz).shape(), &[1, 1, 6, 4]);
    assert!(g.value(yz).data().iter().all(|&v| v == 0.0));
}

#[test]
fn transposed_conv2d_rejects_incompatible_kernel() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(Tensor::zeros(&[1, 1, 2, 2]));
    let b = g.constant(Tensor::zeros(&[1]));
    for (k, s) in [(3, 2), (1, 2), (2, 3)] {
        let kv = g.constant(Tensor::zeros(&[1, 1, k, k]));
        assert!(g.transposed_conv2d(x, kv, b, s).is_err(), "k={k} s={s}");
    }
}

#[test]
fn transposed_conv2d_matches_conv2d_input_gradient() {
    let mut r = rng(4);
    for (k, s) in [(2, 2), (4, 2), (3, 1), (3, 3)] {
        let (n, cin_t, cout_t, h, w) = (2, 3, 2, 3, 4);
        let kernel = uniform(&mut r, &[cin_t, cout_t, k, k], -1.0, 1.0);
        let upstream = uniform(&mut r, &[n, cin_t, h, w], -1.0, 1.0);

        // conv2d mapping (N, Cout_t, H·s, W·s) → (N, Cin_t, H, W) with the same kernel
        let mut g = Graph::new();
        let big = g.leaf(Tensor::zeros(&[n, cout_t, h * s, w * s]).with_requires_grad(true));
        let kv = g.constant(kernel.clone());
        let bv = g.constant(Tensor::zeros(&[cin_t]));
        let y = g.conv2d(big, kv, bv, s, (k - s) / 2).unwrap();
        assert_eq!(g.value(y).shape(), &[n, cin_t, h, w]);
        let up = g.constant(upstream.clone());
        let prod = g.mul(y, up).unwrap();
        let numel = g.value(prod).numel() as f64;
        let m = g.global_mean(prod);
        let loss = g.scale(m, numel);
        g.backward(loss).unwrap();
        let adjoint = g.grad(big).unwrap().to_vec();

        let mut g2 = Graph::new();
        let xv = g2.constant(upstream.clone());
        let kv = g2.constant(kernel.clone());
        let bv = g2.constant(Tensor::zeros(&[cout_t]));
        let t = g2.transposed_conv2d(xv, kv, bv, s).unwrap();
        for (a, b) in g2.value(t).data().iter().zip(&adjoint) {
            assert!((a - b).abs() < 1e-12, "k={k} s={s}");
        }

        let (naive, shape) = naive_transposed_conv2d(upstream.data(), [n, cin_t, h, w], kernel.data(), [cin_t, cout_t, k, k], &[0.0; 2], s);
        assert_eq!(g2.value(t).shape(), &shape);
        for (a, b) in g2.value(t).data().iter().zip(&naive) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn maxpool_examples() {
    let mut g = Graph::new();
    let x = g.constant(t32(&[1, 1, 2, 2], &[1., 2., 3., 4.]));
    let y = g.maxpool2x2(x).unwrap();
    assert_eq!(g.value(y).data(), &[4.0]);
    let c = g.constant(Tensor::full(&[2, 3, 4, 6], -1.5));
    let yc = g.maxpool2x2(c).unwrap();
    assert_eq!(g.value(yc).shape(), &[2, 3, 2, 3]);
    assert!(g.value(yc).data().iter().all(|&v| v == -1.5));
    let odd = g.constant(Tensor::zeros(&[1, 1, 3, 4]));
    assert!(g.maxpool2x2(odd).is_err());
}

#[test]
fn maxpool_routes_gradient_to_first_maximum() {
    let mut g = Graph::new();
    let x = g.leaf(t32(&[1, 1, 2, 4], &[5., 5., 0., 1., 5., 5., 1., 1.]).with_requires_grad(true));
    let y = g.maxpool2x2(x).unwrap();
    let m = g.global_mean(y);
    let loss = g.scale(m, 2.0);
    g.backward(loss).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1., 0., 0., 1., 0., 0., 0., 0.]);
}

#[test]
fn maxpool_gradient_has_one_unit_per_window_by_finite_differences() {
    let mut r = rng(5);
    let x = uniform(&mut r, &[1, 2, 4, 6], -1.0, 1.0);
    let build = |g: &mut Graph<f64>, v: &[vgan::autograd::Var]| {
        let y = g.maxpool2x2(v[0]).unwrap();
        let n = g.value(y).numel() as f64;
        let m = g.global_mean(y);
        g.scale(m, n)
    };
    assert!(gradcheck(&[x.clone()], FD_STEP, build) < FD_TOL);
    let mut g = Graph::new();
    let xv = g.leaf(x.with_requires_grad(true));
    let loss = build(&mut g, &[xv]);
    g.backward(loss).unwrap();
    let grad = g.grad(xv).unwrap();
    for c in 0..2 {
        for wy in 0..2 {
            for wx in 0..3 {
                let window: Vec<f64> = [(0, 0), (0, 1), (1, 0), (1, 1)]
                    .iter()
                    .map(|(dy, dx)| grad[(c * 4 + 2 * wy + dy) * 6 + 2 * wx + dx])
                    .collect();
                assert_eq!(window.iter().filter(|&&v| v == 1.0).count(), 1);
                assert_eq!(window.iter().filter(|&&v| v == 0.0).count(), 3);
            }
        }
    }
}

#[test]
fn activation_values() {
    let mut g = Graph::new();
    let x = g.constant(t32(&[4], &[0., -3., 2., -5.]));
    let s = g.sigmoid(x);
    let r = g.relu(x);
    let l = g.leaky_relu(x, 0.2);
    assert_eq!(g.value(s).data()[0], 0.5);
    assert_eq!(&g.value(r).data()[1..3], &[0., 2.]);
    assert!((g.value(l).data()[3] - -1.0).abs() < 1e-7);
    let big = g.constant(t32(&[2], &[80., -80.]));
    let sb = g.sigmoid(big);
    assert!(g.value(sb).data().iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn relu_subgradient_is_zero_at_zero() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::<f64>::zeros(&[3]).with_requires_grad(true));
    let y = g.relu(x);
    let loss = g.global_mean(y);
    g.backward(loss).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[0.0; 3]);
}

#[test]
fn concat_channels_shapes_slices_and_gradient_split() {
    let mut r = rng(6);
    let a = uniform(&mut r, &[1, 3, 8, 8], -1.0, 1.0);
    let b = uniform(&mut r, &[1, 5, 8, 8], -1.0, 1.0);
    let mut g = Graph::new();
    let (av, bv) = (g.leaf(a.clone().with_requires_grad(true)), g.leaf(b.clone().with_requires_grad(true)));
    let c = g.concat_channels(av, bv).unwrap();
    assert_eq!(g.value(c).shape(), &[1, 8, 8, 8]);
    assert_eq!(g.value(c).slice_channels(0, 3).unwrap().data(), a.data());
    assert_eq!(g.value(c).slice_channels(3, 8).unwrap().data(), b.data());
    let n = g.value(c).numel() as f64;
    let m = g.global_mean(c);
    let loss = g.scale(m, n);
    g.backward(loss).unwrap();
    assert!(g.grad(av).unwrap().iter().all(|&v| (v - 1.0).abs() < 1e-12));

    let fd = gradcheck(&[a, b], FD_STEP, |g, v| {
        let c = g.concat_channels(v[0], v[1]).unwrap();
        let n = g.value(c).numel() as f64;
        let m = g.global_mean(c);
        g.scale(m, n)
    });
    assert!(fd < FD_TOL);

    let bad = g.constant(Tensor::zeros(&[1, 2, 8, 4]));
    assert!(g.concat_channels(av, bad).is_err());
}

#[test]
fn global_mean_values_and_uniform_gradient() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::<f64>::new(&[4], vec![1., 2., 3., 4.]).unwrap().with_requires_grad(true));
    let m = g.global_mean(x);
    assert_eq!(g.value(m).item(), 2.5);
    g.backward(m).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[0.25; 4]);
    let c = g.constant(Tensor::full(&[3, 3], 7.0));
    let mc = g.global_mean(c);
    assert_eq!(g.value(mc).item(), 7.0);
    let mut r = rng(7);
    let fd = gradcheck(&[uniform(&mut r, &[2, 3, 2], -1.0, 1.0)], FD_STEP, |g, v| g.global_mean(v[0]));
    assert!(fd < FD_TOL);
}

#[test]
fn backward_square_disconnected_and_nonscalar() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::<f64>::scalar(3.0).with_requires_grad(true));
    let unused = g.leaf(Tensor::<f64>::zeros(&[2, 2]).with_requires_grad(true));
    let y = g.mul(x, x).unwrap();
    g.backward(y).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[6.0]);
    assert_eq!(g.grad(unused).unwrap(), &[0.0; 4]);
    let v = g.leaf(Tensor::<f64>::zeros(&[2]).with_requires_grad(true));
    let s = g.scale(v, 2.0);
    assert!(g.backward(s).is_err());
}

#[test]
fn backward_sums_over_consumers() {
    let mut r = rng(8);
    let x = uniform(&mut r, &[1, 1, 4, 4], -1.0, 1.0);
    // f(x) = mean(relu-free branch a) + mean(sigmoid branch b) shares x
    let mut g = Graph::new();
    let xv = g.leaf(x.clone().with_requires_grad(true));
    let a = g.scale(xv, 3.0);
    let b = g.sigmoid(xv);
    let s = g.add(a, b).unwrap();
    let loss = g.global_mean(s);
    g.backward(loss).unwrap();
    let n = 16.0;
    for (gv, &xv) in g.grad(xv).unwrap().iter().zip(x.data()) {
        let sg = 1.0 / (1.0 + (-xv).exp());
        assert!((gv - (3.0 + sg * (1.0 - sg)) / n).abs() < 1e-12);
    }
}

#[test]
fn finite_difference_conv2d() {
    for seed in 0..INSTANCES {
        let mut r = rng(100 + seed);
        let stride = 1 + (seed as usize % 2);
        let pad = seed as usize % 2;
        let x = uniform(&mut r, &[2, 2, 5, 4], -1.0, 1.0);
        let k = uniform(&mut r, &[3, 2, 3, 3], -1.0, 1.0);
        let b = uniform(&mut r, &[3], -1.0, 1.0);
        let err = gradcheck(&[x, k, b], FD_STEP, |g, v| {
            let y = g.conv2d(v[0], v[1], v[2], stride, pad).unwrap();
            project(g, y, seed)
        });
        assert!(err < FD_TOL, "seed {seed}: {err}");
    }
}

#[test]
fn finite_difference_transposed_conv2d() {
    for seed in 0..INSTANCES {
        let mut r = rng(200 + seed);
        let (k, s) = [(2, 2), (4, 2)][seed as usize % 2];
        let x = uniform(&mut r, &[1, 3, 3, 2], -1.0, 1.0);
        let kt = uniform(&mut r, &[3, 2, k, k], -1.0, 1.0);
        let b = uniform(&mut r, &[2], -1.0, 1.0);
        let err = gradcheck(&[x, kt, b], FD_STEP, |g, v| {
            let y = g.transposed_conv2d(v[0], v[1], v[2], s).unwrap();
            project(g, y, seed)
        });
        assert!(err < FD_TOL, "seed {seed}: {err}");
    }
}

#[test]
fn finite_difference_activations() {
    for seed in 0..INSTANCES {
        let mut r = rng(300 + seed);
        let x = uniform_away_from_zero(&mut r, &[2, 3, 3], 0.01);
        for kind in [Activation::Relu, Activation::LeakyRelu(0.2), Activation::Sigmoid] {
            let err = gradcheck(&[x.clone()], FD_STEP, |g, v| {
                let y = g.activation(v[0], kind);
                project(g, y, seed)
            });
            assert!(err < FD_TOL, "{kind:?} seed {seed}: {err}");
        }
    }
}

#[test]
fn finite_difference_bce() {
    for seed in 0..INSTANCES {
        let mut r = rng(400 + seed);
        let p = uniform(&mut r, &[1, 1, 4, 4], 0.05, 0.95);
        let target: Vec<f64> = (0..16).map(|_| if r.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let err = gradcheck(&[p], FD_STEP, |g, v| g.bce(v[0], &target, 1e-7).unwrap());
        assert!(err < FD_TOL, "seed {seed}: {err}");
    }
}

#[test]
fn adam_default_hyperparameters() {
    let c = AdamConfig::default();
    assert_eq!(c.lr, 2e-4);
    assert_eq!(c.beta1, 0.5);
}

#[test]
fn adam_decreases_quadratic() {
    let mut ps = vec![Parameter {
        name: "w".into(),
        tensor: Tensor::<f64>::scalar(1.0).with_requires_grad(true),
    }];
    let mut st = AdamState::new(&ps);
    let cfg = AdamConfig {
        lr: 0.05,
        ..AdamConfig::default()
    };
    for _ in 0..200 {
        ps[0].tensor.zero_grad();
        let mut g = Graph::new();
        let w = g.leaf(ps[0].tensor.clone());
        let sq = g.mul(w, w).unwrap();
        g.backward(sq).unwrap();
        let grad = g.grad(w).unwrap().to_vec();
        ps[0].tensor.accumulate_grad(&grad);
        adam_step(&mut ps, &mut st, &cfg).unwrap();
    }
    assert!(ps[0].tensor.item().abs() < 0.05);
    assert_eq!(st.t, 200);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn forward_and_backward_stay_finite(vals in proptest::collection::vec(-100.0f32..100.0, 2 * 4 * 4), kv in proptest::collection::vec(-100.0f32..100.0, 3 * 2 * 9)) {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(&[1, 2, 4, 4], vals).unwrap().with_requires_grad(true));
        let k = g.leaf(Tensor::new(&[3, 2, 3, 3], kv).unwrap().with_requires_grad(true));
        let b = g.constant(Tensor::zeros(&[3]));
        let y = g.conv2d(x, k, b, 1, 1).unwrap();
        let r = g.leaky_relu(y, 0.2);
        let p = g.maxpool2x2(r).unwrap();
        let s = g.sigmoid(p);
        let loss = g.bce(s, &[1.0; 12], 1e-7).unwrap();
        prop_assert!(g.value(loss).item().is_finite());
        g.backward(loss).unwrap();
        prop_assert!(g.grad(x).unwrap().iter().all(|v| v.is_finite()));
        prop_assert!(g.grad(k).unwrap().iter().all(|v| v.is_finite()));
    }
}
