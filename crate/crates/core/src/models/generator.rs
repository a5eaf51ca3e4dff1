use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::init::{push_layer, Filters};
use super::Network;
use crate::autograd::{Graph, Parameter, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratorSpec {
    pub in_channels: usize,
    /// Number of down/up-sampling levels.
    pub scales: usize,
    pub base_channels: usize,
    pub kernel_size: usize,
}

impl GeneratorSpec {
    pub fn new(scales: usize, base_channels: usize) -> Self {
        Self {
            in_channels: 3,
            scales,
            base_channels,
            kernel_size: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "generator takes 3-channel fundus images, spec has {}",
                self.in_channels
            )));
        }
        if self.scales == 0 || self.base_channels == 0 {
            return Err(Error::InvalidArgument("generator scales and base_channels must be positive".into()));
        }
        if self.kernel_size != 3 {
            return Err(Error::InvalidArgument(format!(
                "generator kernel size must be 3, got {}",
                self.kernel_size
            )));
        }
        if self.scales > 16 {
            return Err(Error::InvalidArgument(format!("{} scales is too deep", self.scales)));
        }
        Ok(())
    }

    /// Spatial extents must be multiples of this.
    pub fn divisor(&self) -> usize {
        1 << self.scales
    }

    /// Channel width at encoder level `level` (`scales` is the bottleneck).
    pub fn width(&self, level: usize) -> usize {
        self.base_channels << level
    }

    pub fn check_input_size(&self, h: usize, w: usize) -> Result<()> {
        let d = self.divisor();
        if h % d != 0 || w % d != 0 || h == 0 || w == 0 {
            return Err(Error::shape(
                "generator",
                format!("input {h}x{w} must have height and width divisible by {d} (2^{})", self.scales),
            ));
        }
        Ok(())
    }
}

/// U-Net: `scales` encoder levels of two same-padded 3×3 conv + relu with
/// 2×2 max-pooling between, a bottleneck, mirrored decoder levels that
/// upsample with a stride-2 transposed convolution and concatenate the
/// matching encoder output, and a 1×1 conv + sigmoid head.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator<T> {
    spec: GeneratorSpec,
    params: Vec<Parameter<T>>,
}

impl<T: Scalar> Generator<T> {
    pub fn build(spec: GeneratorSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let k = spec.kernel_size;
        let conv = |params: &mut Vec<_>, rng: &mut ChaCha8Rng, name: String, cin, cout| {
            push_layer(params, rng, &name, [cout, cin, k, k], cin * k * k, cout, Filters::Conv)
        };
        let mut cin = spec.in_channels;
        for level in 0..spec.scales {
            let c = spec.width(level);
            conv(&mut params, &mut rng, format!("enc{level}.conv1"), cin, c);
            conv(&mut params, &mut rng, format!("enc{level}.conv2"), c, c);
            cin = c;
        }
        let bottom = spec.width(spec.scales);
        conv(&mut params, &mut rng, "bottleneck.conv1".into(), cin, bottom);
        conv(&mut params, &mut rng, "bottleneck.conv2".into(), bottom, bottom);
        for level in (0..spec.scales).rev() {
            let (up_in, c) = (spec.width(level + 1), spec.width(level));
            push_layer(&mut params, &mut rng, &format!("dec{level}.up"), [up_in, c, 2, 2], up_in * 4, c, Filters::Transposed);
            conv(&mut params, &mut rng, format!("dec{level}.conv1"), 2 * c, c);
            conv(&mut params, &mut rng, format!("dec{level}.conv2"), c, c);
        }
        let c0 = spec.width(0);
        push_layer(&mut params, &mut rng, "head", [1, c0, 1, 1], c0, 1, Filters::Raw);
        Ok(Self { spec, params })
    }

    /// Reassembles a generator from stored parameters, checking names and
    /// shapes against a fresh build of `spec`.
    pub fn from_params(spec: GeneratorSpec, params: Vec<Parameter<T>>) -> Result<Self> {
        let reference = Self::build(spec, 0)?;
        check_layout(&reference.params, &params)?;
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    /// Records the forward pass on `g`; `vars` come from [`Network::bind`].
    pub fn forward(&self, g: &mut Graph<T>, vars: &[Var], x: Var) -> Result<Var> {
        let [_, c, h, w] = g.value(x).dims4("generator")?;
        if c != self.spec.in_channels {
            return Err(Error::shape(
                "generator",
                format!("expected {} input channels, got {c}", self.spec.in_channels),
            ));
        }
        self.spec.check_input_size(h, w)?;
        let pad = self.spec.kernel_size / 2;
        let mut p = vars.iter().copied();
        let mut next = || (p.next().expect("weight"), p.next().expect("bias"));
        let conv_relu = |g: &mut Graph<T>, input: Var, (k, b): (Var, Var)| -> Result<Var> {
            let y = g.conv2d(input, k, b, 1, pad)?;
            Ok(g.relu(y))
        };

        let mut skips = Vec::with_capacity(self.spec.scales);
        let mut h = x;
        for _ in 0..self.spec.scales {
            h = conv_relu(g, h, next())?;
            h = conv_relu(g, h, next())?;
            skips.push(h);
            h = g.maxpool2x2(h)?;
        }
        h = conv_relu(g, h, next())?;
        h = conv_relu(g, h, next())?;
        for skip in skips.into_iter().rev() {
            let (k, b) = next();
            let up = g.transposed_conv2d(h, k, b, 2)?;
            h = g.concat_channels(up, skip)?;
            h = conv_relu(g, h, next())?;
            h = conv_relu(g, h, next())?;
        }
        let (k, b) = next();
        let logits = g.conv2d(h, k, b, 1, 0)?;
        Ok(g.sigmoid(logits))
    }

    /// Gradient-free forward pass returning the `N×1×H×W` probability map.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let xv = g.constant(x.clone());
        let out = self.forward(&mut g, &vars, xv)?;
        Ok(g.take(out))
    }
}

impl<T: Scalar> Network<T> for Generator<T> {
    fn params(&self) -> &[Parameter<T>] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [Parameter<T>] {
        &mut self.params
    }
}

pub(super) fn check_layout<T: Scalar>(reference: &[Parameter<T>], got: &[Parameter<T>]) -> Result<()> {
    if reference.len() != got.len() {
        return Err(Error::Data(format!(
            "expected {} parameter tensors, found {}",
            reference.len(),
            got.len()
        )));
    }
    for (r, p) in reference.iter().zip(got) {
        if r.name != p.name || r.tensor.shape() != p.tensor.shape() {
            return Err(Error::Data(format!(
                "parameter {} {:?} does not match expected {} {:?}",
                p.name,
                p.tensor.shape(),
                r.name,
                r.tensor.shape()
            )));
        }
    }
    Ok(())
}
