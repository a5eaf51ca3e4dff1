use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::checkpoint::Checkpoint;
use super::loss::{d_loss, g_gan_loss, g_total_loss, seg_loss, DEFAULT_EPS};
use crate::autograd::{adam_step, AdamConfig, AdamState, Graph, Tensor, Var};
use crate::data::{augment, train_val_split, Sample};
use crate::error::{Error, Result};
use crate::models::{Discriminator, Generator, Network};
use crate::scalar::Scalar as _;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Weight of the segmentation loss against the adversarial loss.
    pub lambda: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub rounds: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub val_fraction: f64,
    pub eps_clamp: f64,
    /// Expand the training split with the flip/rotation group.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 10.0,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            rounds: 100,
            batch_size: 1,
            seed: 0,
            val_fraction: 1.0 / 20.0,
            eps_clamp: DEFAULT_EPS,
            augment: true,
        }
    }
}

impl TrainConfig {
    /// Reports every violated constraint at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            errs.push(format!("lambda must be a finite value >= 0, got {}", self.lambda));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            errs.push(format!("lr must be positive, got {}", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                errs.push(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if self.rounds == 0 {
            errs.push("rounds must be positive".into());
        }
        if self.batch_size == 0 {
            errs.push("batch_size must be positive".into());
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            errs.push(format!("val_fraction must lie in (0, 1), got {}", self.val_fraction));
        }
        if !(self.eps_clamp > 0.0 && self.eps_clamp < 0.5) {
            errs.push(format!("eps_clamp must lie in (0, 0.5), got {}", self.eps_clamp));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::default()
        }
    }
}

/// Mean losses of one round. `d_loss` and `g_gan_loss` are 0 without a
/// discriminator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundStats {
    pub round: usize,
    pub d_loss: f64,
    pub g_gan_loss: f64,
    pub seg_loss: f64,
    pub g_total_loss: f64,
    /// Filled in by [`fit`].
    pub val_g_loss: Option<f64>,
}

/// Networks, optimizer moments and the number of completed rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub generator: Generator<f32>,
    pub discriminator: Option<Discriminator<f32>>,
    pub g_adam: AdamState<f32>,
    pub d_adam: Option<AdamState<f32>>,
    pub round: usize,
}

impl TrainState {
    pub fn new(generator: Generator<f32>, discriminator: Option<Discriminator<f32>>) -> Self {
        let g_adam = AdamState::new(generator.params());
        let d_adam = discriminator.as_ref().map(|d| AdamState::new(d.params()));
        Self {
            generator,
            discriminator,
            g_adam,
            d_adam,
            round: 0,
        }
    }

    /// Snapshot with gradient slots dropped, so only values are kept.
    pub fn checkpoint(&self, val_loss: f64, fingerprint: u64) -> Checkpoint {
        fn detached<N: Network<f32> + Clone>(net: &N) -> N {
            let mut net = net.clone();
            for p in net.params_mut() {
                p.tensor.set_requires_grad(false);
            }
            net
        }
        Checkpoint {
            round: self.round,
            val_loss,
            fingerprint,
            generator: detached(&self.generator),
            discriminator: self.discriminator.as_ref().map(detached),
            g_adam: self.g_adam.clone(),
            d_adam: self.d_adam.clone(),
        }
    }

    pub fn from_checkpoint(c: Checkpoint) -> Self {
        Self {
            generator: c.generator,
            discriminator: c.discriminator,
            g_adam: c.g_adam,
            d_adam: c.d_adam,
            round: c.round,
        }
    }

    /// Stable digest of the configuration and network specs.
    pub fn fingerprint(&self, cfg: &TrainConfig) -> u64 {
        let text = format!(
            "{cfg:?}|{:?}|{:?}",
            self.generator.spec(),
            self.discriminator.as_ref().map(|d| *d.spec())
        );
        let digest = Sha256::digest(text.as_bytes());
        u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"))
    }
}

struct Batch {
    x: Tensor<f32>,
    y: Tensor<f32>,
}

fn stack(samples: &[&Sample]) -> Result<Batch> {
    let (h, w) = (samples[0].height(), samples[0].width());
    if let Some(s) = samples.iter().find(|s| (s.height(), s.width()) != (h, w)) {
        return Err(Error::shape(
            "batch",
            format!("{} is {}x{}, batch is {h}x{w}", s.id, s.height(), s.width()),
        ));
    }
    let n = samples.len();
    let x = samples.iter().flat_map(|s| s.x.data().iter().copied()).collect();
    let y = samples.iter().flat_map(|s| s.y.data.iter().map(|&v| v as f32)).collect();
    Ok(Batch {
        x: Tensor::new(&[n, 3, h, w], x)?,
        y: Tensor::new(&[n, 1, h, w], y)?,
    })
}

fn finite(v: f64, what: &str, round: usize, batch: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical(format!("non-finite {what} ({v}) at round {round}, batch {batch}")))
    }
}

struct GenLosses {
    total: Var,
    gan: f64,
    seg: f64,
}

/// Records the generator objective; `trainable` picks whether generator
/// leaves collect gradients. The discriminator is always frozen here.
fn generator_objective(
    g: &mut Graph<f32>,
    state: &TrainState,
    batch: &Batch,
    cfg: &TrainConfig,
    trainable: bool,
) -> Result<(GenLosses, Vec<Var>)> {
    let eps = cfg.eps_clamp as f32;
    let gvars = state.generator.bind(g, trainable);
    let x = g.constant(batch.x.clone());
    let y = g.constant(batch.y.clone());
    let fake = state.generator.forward(g, &gvars, x)?;
    let seg = seg_loss(g, fake, y, eps)?;
    let seg_v = g.value(seg).item().as_f64();
    let (gan, gan_v) = match &state.discriminator {
        Some(d) => {
            let dvars = d.bind(g, false);
            let judged = d.forward(g, &dvars, x, fake)?;
            let gan = g_gan_loss(g, judged, eps)?;
            let v = g.value(gan).item().as_f64();
            (gan, v)
        }
        None => (g.constant(Tensor::scalar(0.0)), 0.0),
    };
    let total = g_total_loss(g, gan, seg, cfg.lambda as f32)?;
    Ok((
        GenLosses {
            total,
            gan: gan_v,
            seg: seg_v,
        },
        gvars,
    ))
}

/// Batches of training indices for `round`, from a shuffle seeded by
/// `(cfg.seed, round)`.
pub fn batch_order(n: usize, round: usize, cfg: &TrainConfig) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(round as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order.chunks(cfg.batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

fn stack_batches(train: &[Sample], order: &[Vec<usize>]) -> Result<Vec<Batch>> {
    order
        .iter()
        .map(|idx| stack(&idx.iter().map(|&i| &train[i]).collect::<Vec<_>>()))
        .collect()
}

/// One pass of discriminator updates over `order` with the generator
/// frozen; returns the mean discriminator loss (0 without a discriminator).
pub fn discriminator_epoch(
    state: &mut TrainState,
    train: &[Sample],
    order: &[Vec<usize>],
    cfg: &TrainConfig,
) -> Result<f64> {
    let round = state.round + 1;
    let Some(d) = state.discriminator.as_mut() else {
        return Ok(0.0);
    };
    let d_adam = state.d_adam.as_mut().expect("discriminator optimizer");
    let eps = cfg.eps_clamp as f32;
    let adam = cfg.adam();
    let batches = stack_batches(train, order)?;
    let mut sum = 0.0;
    for (b, batch) in batches.iter().enumerate() {
        let fake = state.generator.predict(&batch.x)?;
        let mut g = Graph::new();
        let dvars = d.bind(&mut g, true);
        let x = g.constant(batch.x.clone());
        let y = g.constant(batch.y.clone());
        let f = g.constant(fake);
        let real_d = d.forward(&mut g, &dvars, x, y)?;
        let fake_d = d.forward(&mut g, &dvars, x, f)?;
        let loss = d_loss(&mut g, real_d, fake_d, eps)?;
        sum += finite(g.value(loss).item().as_f64(), "discriminator loss", round, b)?;
        g.backward(loss)?;
        d.collect_grads(&g, &dvars);
        adam_step(d.params_mut(), d_adam, &adam).map_err(|e| Error::Numerical(format!("round {round}, batch {b}: {e}")))?;
        d.zero_grad();
    }
    Ok(sum / batches.len().max(1) as f64)
}

/// One pass of generator updates over `order` with the discriminator
/// frozen; returns mean `(g_gan, seg, g_total)`.
pub fn generator_epoch(
    state: &mut TrainState,
    train: &[Sample],
    order: &[Vec<usize>],
    cfg: &TrainConfig,
) -> Result<(f64, f64, f64)> {
    let round = state.round + 1;
    let adam = cfg.adam();
    let batches = stack_batches(train, order)?;
    let (mut gan, mut seg, mut total) = (0.0, 0.0, 0.0);
    for (b, batch) in batches.iter().enumerate() {
        let mut g = Graph::new();
        let (losses, gvars) = generator_objective(&mut g, state, batch, cfg, true)?;
        total += finite(g.value(losses.total).item().as_f64(), "generator loss", round, b)?;
        gan += losses.gan;
        seg += losses.seg;
        g.backward(losses.total)?;
        state.generator.collect_grads(&g, &gvars);
        adam_step(state.generator.params_mut(), &mut state.g_adam, &adam)
            .map_err(|e| Error::Numerical(format!("round {round}, batch {b}: {e}")))?;
        state.generator.zero_grad();
    }
    let n = batches.len().max(1) as f64;
    Ok((gan / n, seg / n, total / n))
}

/// One discriminator epoch (generator frozen) followed by one generator
/// epoch (discriminator frozen), both in the order given by [`batch_order`].
pub fn train_round(state: &mut TrainState, train: &[Sample], cfg: &TrainConfig) -> Result<RoundStats> {
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let round = state.round + 1;
    let order = batch_order(train.len(), round, cfg);
    let d_loss = discriminator_epoch(state, train, &order, cfg)?;
    let (g_gan_loss, seg_loss, g_total_loss) = generator_epoch(state, train, &order, cfg)?;
    state.round = round;
    Ok(RoundStats {
        round,
        d_loss,
        g_gan_loss,
        seg_loss,
        g_total_loss,
        val_g_loss: None,
    })
}

/// Mean generator objective over `samples`, one image at a time, without
/// updating anything.
pub fn validation_loss(state: &TrainState, samples: &[Sample], cfg: &TrainConfig) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Data("validation set is empty".into()));
    }
    let mut sum = 0.0;
    for (i, s) in samples.iter().enumerate() {
        let mut g = Graph::new();
        let (losses, _) = generator_objective(&mut g, state, &stack(&[s])?, cfg, false)?;
        sum += finite(g.value(losses.total).item().as_f64(), "validation loss", state.round, i)?;
    }
    Ok(sum / samples.len() as f64)
}

/// Index of the smallest loss, earliest on ties.
pub fn select_best(losses: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &l) in losses.iter().enumerate() {
        if best.map_or(true, |b| l < losses[b]) {
            best = Some(i);
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// The round with the lowest validation generator loss.
    pub best: Checkpoint,
    pub history: Vec<RoundStats>,
}

/// Optionally expands `samples` with the flip/rotation group, splits the
/// pool into train/validation, runs `cfg.rounds` rounds and keeps the checkpoint with the lowest
/// validation loss. `on_round` sees each round's statistics as they finish.
pub fn fit(
    state: &mut TrainState,
    samples: &[Sample],
    cfg: &TrainConfig,
    mut on_round: impl FnMut(&RoundStats),
) -> Result<FitOutcome> {
    cfg.validate()?;
    let pool: Vec<Sample> = if cfg.augment {
        samples.iter().flat_map(augment).collect()
    } else {
        samples.to_vec()
    };
    let (train_idx, val_idx) = train_val_split(pool.len(), cfg.val_fraction, cfg.seed)?;
    let train: Vec<Sample> = train_idx.iter().map(|&i| pool[i].clone()).collect();
    let val: Vec<Sample> = val_idx.iter().map(|&i| pool[i].clone()).collect();
    let fingerprint = state.fingerprint(cfg);
    let mut history = Vec::with_capacity(cfg.rounds);
    let mut best: Option<Checkpoint> = None;
    for _ in 0..cfg.rounds {
        let mut stats = train_round(state, &train, cfg)?;
        let val_loss = validation_loss(state, &val, cfg)?;
        stats.val_g_loss = Some(val_loss);
        on_round(&stats);
        history.push(stats);
        if best.as_ref().map_or(true, |b| val_loss < b.val_loss) {
            best = Some(state.checkpoint(val_loss, fingerprint));
        }
    }
    Ok(FitOutcome {
        best: best.expect("at least one round"),
        history,
    })
}

/// Renders `round,d_loss,g_gan_loss,seg_loss,val_g_loss` rows.
pub fn history_csv(history: &[RoundStats]) -> String {
    use crate::metrics::format_sig9;
    let mut out = String::from("round,d_loss,g_gan_loss,seg_loss,val_g_loss\n");
    for s in history {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.round,
            format_sig9(s.d_loss),
            format_sig9(s.g_gan_loss),
            format_sig9(s.seg_loss),
            s.val_g_loss.map_or_else(String::new, format_sig9)
        ));
    }
    out
}
