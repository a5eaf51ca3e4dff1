use crate::autograd::conv::{self, ConvGeom};
use crate::autograd::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Sigmoid,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Var,
        geom: ConvGeom,
    },
    /// `geom` describes the forward convolution whose adjoint this is:
    /// its "input" is this op's output.
    ConvTranspose2d {
        input: Var,
        kernel: Var,
        bias: Var,
        geom: ConvGeom,
    },
    MaxPool2x2 {
        input: Var,
        argmax: Vec<usize>,
    },
    Activation {
        input: Var,
        kind: Activation,
    },
    ConcatChannels {
        a: Var,
        b: Var,
    },
    GlobalMean {
        input: Var,
    },
    SpatialMean {
        input: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        input: Var,
        factor: T,
    },
    /// Mean binary cross-entropy against a constant target.
    Bce {
        pred: Var,
        target: Vec<T>,
        eps: T,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Tape of operations recorded in execution order. Nodes only reference
/// earlier nodes, so the push order is a topological order.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a leaf. Leaves with `requires_grad` receive gradients on
    /// [`Graph::backward`].
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        let needs_grad = tensor.requires_grad();
        self.push(tensor, Op::Leaf, needs_grad)
    }

    /// Constant input, never differentiated.
    pub fn constant(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor.with_requires_grad(false))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Gradient stored on a leaf after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad()
    }

    pub fn take(&mut self, v: Var) -> Tensor<T> {
        std::mem::replace(&mut self.nodes[v.0].value, Tensor::scalar(T::zero()))
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var, stride: usize, padding: usize) -> Result<Var> {
        let x = self.value(input);
        let k = self.value(kernel);
        let [n, cin, h, w] = x.dims4("conv2d")?;
        let [cout, kcin, kh, kw] = k.dims4("conv2d")?;
        if kcin != cin {
            return Err(Error::shape(
                "conv2d",
                format!("input {:?} has {cin} channels but kernel {:?} expects {kcin}", x.shape(), k.shape()),
            ));
        }
        if h + 2 * padding < kh || w + 2 * padding < kw {
            return Err(Error::shape(
                "conv2d",
                format!(
                    "input {:?} with padding {padding} is smaller than kernel {:?}",
                    x.shape(),
                    k.shape()
                ),
            ));
        }
        check_bias("conv2d", self.value(bias), cout)?;
        if stride == 0 {
            return Err(Error::InvalidArgument("conv2d stride must be positive".into()));
        }
        let geom = ConvGeom::new([n, cin, h, w], [cout, kh, kw], stride, padding);
        let mut out = vec![T::zero(); geom.output_len()];
        fill_bias(&mut out, self.value(bias).data(), geom.n, geom.oh * geom.ow);
        conv::correlate(&geom, x.data(), k.data(), &mut out);
        let value = Tensor::new(&[n, cout, geom.oh, geom.ow], out)?;
        let needs = self.needs(input) || self.needs(kernel) || self.needs(bias);
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
            },
            needs,
        ))
    }

    /// Transposed convolution with kernel `Cin×Cout×K×K`. Padding is
    /// `(K − stride)/2` so the output is exactly `stride×` the input.
    pub fn transposed_conv2d(&mut self, input: Var, kernel: Var, bias: Var, stride: usize) -> Result<Var> {
        let x = self.value(input);
        let k = self.value(kernel);
        let [n, cin, h, w] = x.dims4("transposed_conv2d")?;
        let [kcin, cout, kh, kw] = k.dims4("transposed_conv2d")?;
        if kcin != cin {
            return Err(Error::shape(
                "transposed_conv2d",
                format!("input {:?} has {cin} channels but kernel {:?} expects {kcin}", x.shape(), k.shape()),
            ));
        }
        if stride == 0 || kh != kw || kh < stride || (kh - stride) % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "transposed_conv2d: kernel {kh}x{kw} with stride {stride} cannot upsample by exactly {stride}x \
                 (need square kernel K >= stride with K - stride even)"
            )));
        }
        check_bias("transposed_conv2d", self.value(bias), cout)?;
        let pad = (kh - stride) / 2;
        // Forward convolution mapping the (N,Cout,H·s,W·s) output back to (N,Cin,H,W).
        let geom = ConvGeom::new([n, cout, h * stride, w * stride], [cin, kh, kw], stride, pad);
        debug_assert_eq!((geom.oh, geom.ow), (h, w));
        let mut out = vec![T::zero(); geom.input_len()];
        fill_bias(&mut out, self.value(bias).data(), n, geom.h * geom.w);
        conv::correlate_adjoint(&geom, x.data(), k.data(), &mut out);
        let value = Tensor::new(&[n, cout, h * stride, w * stride], out)?;
        let needs = self.needs(input) || self.needs(kernel) || self.needs(bias);
        Ok(self.push(
            value,
            Op::ConvTranspose2d {
                input,
                kernel,
                bias,
                geom,
            },
            needs,
        ))
    }

    pub fn maxpool2x2(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let [n, c, h, w] = x.dims4("maxpool2x2")?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::shape(
                "maxpool2x2",
                format!("spatial extents of {:?} must be even", x.shape()),
            ));
        }
        let (oh, ow) = (h / 2, w / 2);
        let data = x.data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let first = base + 2 * oy * w + 2 * ox;
                    let mut best = first;
                    // row-major scan; strict comparison keeps the first maximum
                    for idx in [first + 1, first + w, first + w + 1] {
                        if data[idx] > data[best] {
                            best = idx;
                        }
                    }
                    out.push(data[best]);
                    argmax.push(best);
                }
            }
        }
        let value = Tensor::new(&[n, c, oh, ow], out)?;
        let needs = self.needs(input);
        Ok(self.push(value, Op::MaxPool2x2 { input, argmax }, needs))
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Var {
        let x = self.value(input);
        let data = x.data().iter().map(|&v| activate(kind, v)).collect();
        let value = Tensor::new(x.shape(), data).expect("same shape");
        let needs = self.needs(input);
        self.push(value, Op::Activation { input, kind }, needs)
    }

    pub fn relu(&mut self, input: Var) -> Var {
        self.activation(input, Activation::Relu)
    }

    pub fn leaky_relu(&mut self, input: Var, slope: f64) -> Var {
        self.activation(input, Activation::LeakyRelu(slope))
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        self.activation(input, Activation::Sigmoid)
    }

    /// Concatenates along channels; `a`'s channels come first.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let [n, ca, h, w] = ta.dims4("concat_channels")?;
        let [nb, cb, hb, wb] = tb.dims4("concat_channels")?;
        if (n, h, w) != (nb, hb, wb) {
            return Err(Error::shape(
                "concat_channels",
                format!("batch/spatial extents differ: {:?} vs {:?}", ta.shape(), tb.shape()),
            ));
        }
        let plane = h * w;
        let mut out = Vec::with_capacity(n * (ca + cb) * plane);
        for i in 0..n {
            out.extend_from_slice(&ta.data()[i * ca * plane..(i + 1) * ca * plane]);
            out.extend_from_slice(&tb.data()[i * cb * plane..(i + 1) * cb * plane]);
        }
        let value = Tensor::new(&[n, ca + cb, h, w], out)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::ConcatChannels { a, b }, needs))
    }

    /// Mean over every element, as a scalar.
    pub fn global_mean(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let mean = x.data().iter().copied().sum::<T>() / T::of(x.numel() as f64);
        let needs = self.needs(input);
        self.push(Tensor::scalar(mean), Op::GlobalMean { input }, needs)
    }

    /// Mean over the spatial extents: `N×C×H×W → N×C×1×1`.
    pub fn spatial_mean(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let [n, c, h, w] = x.dims4("spatial_mean")?;
        let plane = h * w;
        let denom = T::of(plane as f64);
        let out = x
            .data()
            .chunks_exact(plane)
            .map(|p| p.iter().copied().sum::<T>() / denom)
            .collect();
        let value = Tensor::new(&[n, c, 1, 1], out)?;
        let needs = self.needs(input);
        Ok(self.push(value, Op::SpatialMean { input }, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape("add", ta, tb)?;
        let out = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x + y).collect();
        let value = Tensor::new(ta.shape(), out)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add { a, b }, needs))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape("mul", ta, tb)?;
        let out = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x * y).collect();
        let value = Tensor::new(ta.shape(), out)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Mul { a, b }, needs))
    }

    pub fn scale(&mut self, input: Var, factor: T) -> Var {
        let x = self.value(input);
        let out = x.data().iter().map(|&v| v * factor).collect();
        let value = Tensor::new(x.shape(), out).expect("same shape");
        let needs = self.needs(input);
        self.push(value, Op::Scale { input, factor }, needs)
    }

    /// `mean(−t·ln p̃ − (1−t)·ln(1−p̃))` with `p̃ = clamp(p, eps, 1−eps)`.
    /// The target is a constant of the same element count as `pred`.
    pub fn bce(&mut self, pred: Var, target: &[T], eps: T) -> Result<Var> {
        let p = self.value(pred);
        if p.numel() != target.len() {
            return Err(Error::shape(
                "bce",
                format!("prediction {:?} has {} values, target has {}", p.shape(), p.numel(), target.len()),
            ));
        }
        let (lo, hi) = (eps, T::one() - eps);
        let one = T::one();
        let total: T = p
            .data()
            .iter()
            .zip(target)
            .map(|(&p, &t)| {
                let pc = p.max(lo).min(hi);
                -(t * pc.ln()) - (one - t) * (one - pc).ln()
            })
            .sum();
        let value = Tensor::scalar(total / T::of(target.len() as f64));
        let needs = self.needs(pred);
        Ok(self.push(
            value,
            Op::Bce {
                pred,
                target: target.to_vec(),
                eps,
            },
            needs,
        ))
    }

    /// Reverse-mode sweep from a scalar `loss`. Every leaf with
    /// `requires_grad` gets `∂loss/∂leaf` added to its gradient slot; the
    /// slot of a leaf the loss does not depend on stays as it was.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(Error::shape(
                "backward",
                format!("loss must be a scalar, got shape {:?}", lt.shape()),
            ));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    self.nodes[idx].value.accumulate_grad(&gout);
                }
                Op::Conv2d {
                    input,
                    kernel,
                    bias,
                    geom,
                } => {
                    let (input, kernel, bias, geom) = (*input, *kernel, *bias, *geom);
                    if self.needs(input) {
                        let mut gin = vec![T::zero(); geom.input_len()];
                        conv::correlate_adjoint(&geom, &gout, self.value(kernel).data(), &mut gin);
                        accumulate(&mut grads, input, gin);
                    }
                    if self.needs(kernel) {
                        let mut gk = vec![T::zero(); self.value(kernel).numel()];
                        conv::correlate_kernel_grad(&geom, self.value(input).data(), &gout, &mut gk);
                        accumulate(&mut grads, kernel, gk);
                    }
                    if self.needs(bias) {
                        accumulate(&mut grads, bias, bias_grad(&gout, geom.n, geom.cout, geom.oh * geom.ow));
                    }
                }
                Op::ConvTranspose2d {
                    input,
                    kernel,
                    bias,
                    geom,
                } => {
                    let (input, kernel, bias, geom) = (*input, *kernel, *bias, *geom);
                    if self.needs(input) {
                        let mut gin = vec![T::zero(); geom.output_len()];
                        conv::correlate(&geom, &gout, self.value(kernel).data(), &mut gin);
                        accumulate(&mut grads, input, gin);
                    }
                    if self.needs(kernel) {
                        let mut gk = vec![T::zero(); self.value(kernel).numel()];
                        conv::correlate_kernel_grad(&geom, &gout, self.value(input).data(), &mut gk);
                        accumulate(&mut grads, kernel, gk);
                    }
                    if self.needs(bias) {
                        accumulate(&mut grads, bias, bias_grad(&gout, geom.n, geom.cin, geom.h * geom.w));
                    }
                }
                Op::MaxPool2x2 { input, argmax } => {
                    let input = *input;
                    if self.needs(input) {
                        let mut gin = vec![T::zero(); self.value(input).numel()];
                        for (&src, &g) in argmax.iter().zip(&gout) {
                            gin[src] += g;
                        }
                        accumulate(&mut grads, input, gin);
                    }
                }
                Op::Activation { input, kind } => {
                    let (input, kind) = (*input, *kind);
                    let x = self.value(input).data();
                    let y = node.value.data();
                    let gin = gout
                        .iter()
                        .zip(x.iter().zip(y))
                        .map(|(&g, (&x, &y))| g * activation_slope(kind, x, y))
                        .collect();
                    accumulate(&mut grads, input, gin);
                }
                Op::ConcatChannels { a, b } => {
                    let (a, b) = (*a, *b);
                    let [n, ca, h, w] = self.value(a).dims4("concat_channels")?;
                    let cb = self.value(b).shape()[1];
                    let plane = h * w;
                    let (mut ga, mut gb) = (Vec::with_capacity(n * ca * plane), Vec::with_capacity(n * cb * plane));
                    for chunk in gout.chunks_exact((ca + cb) * plane) {
                        ga.extend_from_slice(&chunk[..ca * plane]);
                        gb.extend_from_slice(&chunk[ca * plane..]);
                    }
                    if self.needs(a) {
                        accumulate(&mut grads, a, ga);
                    }
                    if self.needs(b) {
                        accumulate(&mut grads, b, gb);
                    }
                }
                Op::GlobalMean { input } => {
                    let input = *input;
                    let numel = self.value(input).numel();
                    let g = gout[0] / T::of(numel as f64);
                    accumulate(&mut grads, input, vec![g; numel]);
                }
                Op::SpatialMean { input } => {
                    let input = *input;
                    let [_, _, h, w] = self.value(input).dims4("spatial_mean")?;
                    let plane = h * w;
                    let denom = T::of(plane as f64);
                    let gin = gout
                        .iter()
                        .flat_map(|&g| std::iter::repeat(g / denom).take(plane))
                        .collect();
                    accumulate(&mut grads, input, gin);
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    if self.needs(a) {
                        accumulate(&mut grads, a, gout.clone());
                    }
                    if self.needs(b) {
                        accumulate(&mut grads, b, gout);
                    }
                }
                Op::Mul { a, b } => {
                    let (a, b) = (*a, *b);
                    if self.needs(a) {
                        let gb = self.value(b).data();
                        accumulate(&mut grads, a, gout.iter().zip(gb).map(|(&g, &v)| g * v).collect());
                    }
                    if self.needs(b) {
                        let ga = self.value(a).data();
                        accumulate(&mut grads, b, gout.iter().zip(ga).map(|(&g, &v)| g * v).collect());
                    }
                }
                Op::Scale { input, factor } => {
                    let (input, factor) = (*input, *factor);
                    accumulate(&mut grads, input, gout.iter().map(|&g| g * factor).collect());
                }
                Op::Bce { pred, target, eps } => {
                    let (pred, eps) = (*pred, *eps);
                    let one = T::one();
                    let scale = gout[0] / T::of(target.len() as f64);
                    let gin = self
                        .value(pred)
                        .data()
                        .iter()
                        .zip(target)
                        .map(|(&p, &t)| {
                            if p <= eps || p >= one - eps {
                                T::zero()
                            } else {
                                scale * (-t / p + (one - t) / (one - p))
                            }
                        })
                        .collect();
                    accumulate(&mut grads, pred, gin);
                }
            }
        }

        Ok(())
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var, delta: Vec<T>) {
    match &mut grads[v.0] {
        Some(g) => g.iter_mut().zip(&delta).for_each(|(g, &d)| *g += d),
        slot => *slot = Some(delta),
    }
}

fn check_bias<T: Scalar>(op: &'static str, bias: &Tensor<T>, channels: usize) -> Result<()> {
    if bias.numel() != channels {
        return Err(Error::shape(
            op,
            format!("bias {:?} must hold one value per output channel ({channels})", bias.shape()),
        ));
    }
    Ok(())
}

fn fill_bias<T: Scalar>(out: &mut [T], bias: &[T], n: usize, plane: usize) {
    let c = bias.len();
    for b in 0..n {
        for (ch, &bv) in bias.iter().enumerate() {
            out[(b * c + ch) * plane..][..plane].fill(bv);
        }
    }
}

fn bias_grad<T: Scalar>(gout: &[T], n: usize, c: usize, plane: usize) -> Vec<T> {
    let mut g = vec![T::zero(); c];
    for b in 0..n {
        for (ch, slot) in g.iter_mut().enumerate() {
            *slot += gout[(b * c + ch) * plane..][..plane].iter().copied().sum::<T>();
        }
    }
    g
}

fn same_shape<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

pub(crate) fn activate<T: Scalar>(kind: Activation, x: T) -> T {
    match kind {
        Activation::Relu => x.max(T::zero()),
        Activation::LeakyRelu(a) => {
            if x > T::zero() {
                x
            } else {
                x * T::of(a)
            }
        }
        Activation::Sigmoid => {
            let s = if x >= T::zero() {
                T::one() / (T::one() + (-x).exp())
            } else {
                let e = x.exp();
                e / (T::one() + e)
            };
            // keep the output strictly inside (0, 1) at this precision
            s.max(T::epsilon()).min(T::one() - T::epsilon())
        }
    }
}

fn activation_slope<T: Scalar>(kind: Activation, x: T, y: T) -> T {
    match kind {
        Activation::Relu => {
            if x > T::zero() {
                T::one()
            } else {
                T::zero()
            }
        }
        Activation::LeakyRelu(a) => {
            if x > T::zero() {
                T::one()
            } else {
                T::of(a)
            }
        }
        Activation::Sigmoid => y * (T::one() - y),
    }
}
