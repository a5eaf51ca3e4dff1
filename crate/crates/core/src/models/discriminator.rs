use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::generator::check_layout;
use super::init::{push_layer, Filters};
use super::Network;
use crate::autograd::{Graph, Parameter, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const LEAKY_SLOPE: f64 = 0.2;
const PIXEL_HIDDEN_LAYERS: usize = 2;
/// Image variant downsamples until both extents are at most this.
const IMAGE_FINAL_EXTENT: usize = 4;

/// Decision granularity of a discriminator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiscriminatorVariant {
    /// One decision per pixel (1×1 receptive field).
    Pixel,
    /// One decision per patch with receptive field at least `K×K`.
    Patch(usize),
    /// One decision per image.
    Image,
}

impl DiscriminatorVariant {
    /// Clamps a patch size to the input extent; other variants unchanged.
    pub fn capped_to(self, h: usize, w: usize) -> Self {
        match self {
            Self::Patch(k) => Self::Patch(k.min(h.min(w))),
            v => v,
        }
    }
}

/// Receptive field of `depth` stacked stride-2 3×3 convolutions, by the
/// recurrence `R ← R + (k − 1)·J`, `J ← J·s` from `R = J = 1`.
pub fn receptive_field(depth: usize) -> usize {
    let (mut rf, mut jump) = (1usize, 1usize);
    for _ in 0..depth {
        rf += 2 * jump;
        jump *= 2;
    }
    rf
}

fn halve(n: usize) -> usize {
    n.div_ceil(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiscriminatorSpec {
    pub variant: DiscriminatorVariant,
    pub input_size: (usize, usize),
    pub base_channels: usize,
    /// Number of stride-2 blocks (0 for the pixel variant).
    pub depth: usize,
}

impl DiscriminatorSpec {
    /// Resolves the block depth for `variant` at `input_size`.
    ///
    /// Patch(K) takes the smallest depth whose receptive field reaches `K`,
    /// but stops while the decision map is still at least 2×2 so a patch
    /// discriminator never collapses into an image-level one.
    pub fn new(variant: DiscriminatorVariant, (h, w): (usize, usize), base_channels: usize) -> Result<Self> {
        if h == 0 || w == 0 || base_channels == 0 {
            return Err(Error::InvalidArgument(
                "discriminator input size and base_channels must be positive".into(),
            ));
        }
        let depth = match variant {
            DiscriminatorVariant::Pixel => 0,
            DiscriminatorVariant::Patch(k) => {
                if k == 0 || k > h.min(w) {
                    return Err(Error::InvalidArgument(format!(
                        "patch size {k} must lie in 1..={} for a {h}x{w} input",
                        h.min(w)
                    )));
                }
                let mut d = 0;
                let (mut oh, mut ow) = (h, w);
                while receptive_field(d) < k && halve(oh).min(halve(ow)) >= 2 {
                    d += 1;
                    oh = halve(oh);
                    ow = halve(ow);
                }
                d
            }
            DiscriminatorVariant::Image => {
                let mut d = 0;
                let (mut oh, mut ow) = (h, w);
                while oh > IMAGE_FINAL_EXTENT || ow > IMAGE_FINAL_EXTENT {
                    d += 1;
                    oh = halve(oh);
                    ow = halve(ow);
                }
                d
            }
        };
        Ok(Self {
            variant,
            input_size: (h, w),
            base_channels,
            depth,
        })
    }

    fn width(&self, block: usize) -> usize {
        self.base_channels << block.min(3)
    }

    /// Extents `(h, w)` of the decision map.
    pub fn decision_extent(&self) -> (usize, usize) {
        match self.variant {
            DiscriminatorVariant::Image => (1, 1),
            _ => {
                let (mut h, mut w) = self.input_size;
                for _ in 0..self.depth {
                    h = halve(h);
                    w = halve(w);
                }
                (h, w)
            }
        }
    }

    pub fn receptive_field(&self) -> usize {
        match self.variant {
            DiscriminatorVariant::Pixel => 1,
            _ => receptive_field(self.depth),
        }
    }
}

/// Per-decision probabilities `N×1×h×w` that the vessel map is human-made.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionMap<T> {
    pub values: Tensor<T>,
}

impl<T: Scalar> DecisionMap<T> {
    pub fn decisions_per_image(&self) -> usize {
        let s = self.values.shape();
        s[2] * s[3]
    }
}

/// Judges `(fundus, vessel map)` pairs, fed as a 4-channel concat.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator<T> {
    spec: DiscriminatorSpec,
    params: Vec<Parameter<T>>,
}

impl<T: Scalar> Discriminator<T> {
    pub fn build(variant: DiscriminatorVariant, input_size: (usize, usize), base_channels: usize, seed: u64) -> Result<Self> {
        let spec = DiscriminatorSpec::new(variant, input_size, base_channels)?;
        Ok(Self::from_spec(spec, seed))
    }

    pub fn from_spec(spec: DiscriminatorSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let mut cin = 4;
        match spec.variant {
            DiscriminatorVariant::Pixel => {
                for i in 0..PIXEL_HIDDEN_LAYERS {
                    let c = spec.width(0);
                    push_layer(&mut params, &mut rng, &format!("pixel{i}"), [c, cin, 1, 1], cin, c, Filters::Raw);
                    cin = c;
                }
            }
            DiscriminatorVariant::Patch(_) | DiscriminatorVariant::Image => {
                for i in 0..spec.depth {
                    let c = spec.width(i);
                    push_layer(&mut params, &mut rng, &format!("block{i}"), [c, cin, 3, 3], cin * 9, c, Filters::Raw);
                    cin = c;
                }
            }
        }
        push_layer(&mut params, &mut rng, "head", [1, cin, 1, 1], cin, 1, Filters::Raw);
        Self { spec, params }
    }

    pub fn from_params(spec: DiscriminatorSpec, params: Vec<Parameter<T>>) -> Result<Self> {
        let reference = Self::from_spec(spec, 0);
        check_layout(&reference.params, &params)?;
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &DiscriminatorSpec {
        &self.spec
    }

    /// Records the discriminator on `g` for fundus `x` (`N×3×H×W`) and vessel
    /// map `y` (`N×1×H×W`); returns the `N×1×h×w` decision map.
    pub fn forward(&self, g: &mut Graph<T>, vars: &[Var], x: Var, y: Var) -> Result<Var> {
        let [n, cx, h, w] = g.value(x).dims4("discriminator")?;
        let [ny, cy, hy, wy] = g.value(y).dims4("discriminator")?;
        if cx != 3 || cy != 1 || (n, h, w) != (ny, hy, wy) {
            return Err(Error::shape(
                "discriminator",
                format!(
                    "fundus {:?} and vessel map {:?} must be N×3×H×W and N×1×H×W with equal N, H, W",
                    g.value(x).shape(),
                    g.value(y).shape()
                ),
            ));
        }
        if (h, w) != self.spec.input_size {
            return Err(Error::shape(
                "discriminator",
                format!("built for {:?} inputs, got {h}x{w}", self.spec.input_size),
            ));
        }
        let mut h = g.concat_channels(x, y)?;
        let mut p = vars.chunks_exact(2);
        let layers = match self.spec.variant {
            DiscriminatorVariant::Pixel => PIXEL_HIDDEN_LAYERS,
            _ => self.spec.depth,
        };
        let (stride, pad) = match self.spec.variant {
            DiscriminatorVariant::Pixel => (1, 0),
            _ => (2, 1),
        };
        for _ in 0..layers {
            let kb = p.next().expect("block parameters");
            let z = g.conv2d(h, kb[0], kb[1], stride, pad)?;
            h = g.leaky_relu(z, LEAKY_SLOPE);
        }
        let kb = p.next().expect("head parameters");
        let mut logits = g.conv2d(h, kb[0], kb[1], 1, 0)?;
        if self.spec.variant == DiscriminatorVariant::Image {
            logits = g.spatial_mean(logits)?;
        }
        Ok(g.sigmoid(logits))
    }

    /// Gradient-free forward pass.
    pub fn judge(&self, x: &Tensor<T>, y: &Tensor<T>) -> Result<DecisionMap<T>> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let (xv, yv) = (g.constant(x.clone()), g.constant(y.clone()));
        let out = self.forward(&mut g, &vars, xv, yv)?;
        Ok(DecisionMap { values: g.take(out) })
    }
}

impl<T: Scalar> Network<T> for Discriminator<T> {
    fn params(&self) -> &[Parameter<T>] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [Parameter<T>] {
        &mut self.params
    }
}
