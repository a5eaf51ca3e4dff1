mod common;

use common::{gradcheck, rng, uniform};
use rand::Rng;
use vgan::autograd::{Graph, Tensor};
use vgan::data::generate_synthetic_sample;
use vgan::models::{Discriminator, DiscriminatorVariant, Generator, GeneratorSpec, Network};
use vgan::objective::{
    batch_order, d_loss, discriminator_epoch, fit, g_gan_loss, g_total, g_total_loss, generator_epoch, history_csv,
    seg_loss, select_best, train_round, Checkpoint, TrainConfig, TrainState, CHECKPOINT_MAGIC,
};
use vgan::Error;

const EPS: f64 = 1e-7;

fn scalar_loss(f: impl FnOnce(&mut Graph<f64>) -> vgan::autograd::Var) -> f64 {
    let mut g = Graph::new();
    let v = f(&mut g);
    g.value(v).item()
}

fn d_loss_of(real: &[f64], fake: &[f64]) -> f64 {
    let n = real.len();
    scalar_loss(|g| {
        let r = g.constant(Tensor::new(&[1, 1, 1, n], real.to_vec()).unwrap());
        let f = g.constant(Tensor::new(&[1, 1, 1, n], fake.to_vec()).unwrap());
        d_loss(g, r, f, EPS).unwrap()
    })
}

fn g_gan_of(fake: &[f64]) -> f64 {
    scalar_loss(|g| {
        let f = g.constant(Tensor::new(&[1, 1, 1, fake.len()], fake.to_vec()).unwrap());
        g_gan_loss(g, f, EPS).unwrap()
    })
}

fn seg_of(pred: &[f64], gold: &[f64]) -> Result<f64, Error> {
    let mut g = Graph::new();
    let p = g.constant(Tensor::new(&[1, 1, 1, pred.len()], pred.to_vec()).unwrap());
    let y = g.constant(Tensor::new(&[1, 1, 1, gold.len()], gold.to_vec()).unwrap());
    let v = seg_loss(&mut g, p, y, EPS)?;
    Ok(g.value(v).item())
}

#[test]
fn analytic_loss_values() {
    assert!((d_loss_of(&[0.5; 16], &[0.5; 16]) - 1.3863).abs() < 1e-4);
    assert!(d_loss_of(&[1.0; 4], &[0.0; 4]) < 1e-6);
    assert!((g_gan_of(&[0.5; 9]) - 0.6931).abs() < 1e-4);
    assert!(g_gan_of(&[1.0; 9]) < 1e-6);
    let gold = [1.0, 0.0, 1.0, 1.0, 0.0];
    assert!((seg_of(&[0.5; 5], &gold).unwrap() - 0.6931).abs() < 1e-4);
    assert!((seg_of(&gold, &gold).unwrap() - (-(1.0f64 - EPS).ln())).abs() < 1e-15);
    let inverse: Vec<f64> = gold.iter().map(|v| 1.0 - v).collect();
    assert!((seg_of(&inverse, &gold).unwrap() - 16.118).abs() < 1e-3);
    assert!(matches!(seg_of(&[0.5; 2], &[0.5, 1.0]), Err(Error::InvalidArgument(_))));
}

#[test]
fn g_total_arithmetic() {
    assert_eq!(g_total(0.7, 0.05, 10.0), 1.2);
    assert_eq!(g_total(0.7, 0.05, 0.0), 0.7);
    let v = scalar_loss(|g| {
        let a = g.constant(Tensor::scalar(0.7));
        let b = g.constant(Tensor::scalar(0.05));
        g_total_loss(g, a, b, 10.0).unwrap()
    });
    assert_eq!(v, 1.2);
    let mut g = Graph::<f64>::new();
    let a = g.constant(Tensor::scalar(0.7));
    assert!(g_total_loss(&mut g, a, a, -1.0).is_err());
}

#[test]
fn d_loss_matches_oracle_and_symmetry() {
    let mut r = rng(31);
    for _ in 0..100 {
        let n = r.gen_range(1..40);
        let real: Vec<f64> = (0..n).map(|_| r.gen_range(1e-4..1.0 - 1e-4)).collect();
        let fake: Vec<f64> = (0..n).map(|_| r.gen_range(1e-4..1.0 - 1e-4)).collect();
        let oracle = -real.iter().map(|v| v.ln()).sum::<f64>() / n as f64
            - fake.iter().map(|v| (1.0 - v).ln()).sum::<f64>() / n as f64;

        let r32: Vec<f32> = real.iter().map(|&v| v as f32).collect();
        let f32s: Vec<f32> = fake.iter().map(|&v| v as f32).collect();
        let mut g = Graph::<f32>::new();
        let rv = g.constant(Tensor::new(&[1, 1, 1, n], r32).unwrap());
        let fv = g.constant(Tensor::new(&[1, 1, 1, n], f32s).unwrap());
        let l = d_loss(&mut g, rv, fv, 1e-7).unwrap();
        assert!(((g.value(l).item() as f64) - oracle).abs() / oracle < 1e-5);

        let swapped_real: Vec<f64> = fake.iter().map(|v| 1.0 - v).collect();
        let swapped_fake: Vec<f64> = real.iter().map(|v| 1.0 - v).collect();
        assert!((d_loss_of(&real, &fake) - d_loss_of(&swapped_real, &swapped_fake)).abs() < 1e-9);
    }
}

#[test]
fn g_gan_monotone_and_losses_nonnegative() {
    let mut r = rng(32);
    for _ in 0..100 {
        let n = r.gen_range(1..20);
        let fake: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..0.99)).collect();
        let base = g_gan_of(&fake);
        assert!(base >= 0.0);
        let mut raised = fake.clone();
        let k = r.gen_range(0..n);
        raised[k] += r.gen_range(1e-3..(1.0 - raised[k]));
        assert!(g_gan_of(&raised) < base);
        let gold: Vec<f64> = (0..n).map(|_| r.gen_bool(0.5) as u8 as f64).collect();
        assert!(seg_of(&fake, &gold).unwrap() >= 0.0);
    }
}

#[test]
fn d_loss_rejects_mismatched_maps() {
    let mut g = Graph::<f64>::new();
    let a = g.constant(Tensor::full(&[1, 1, 2, 2], 0.5));
    let b = g.constant(Tensor::full(&[1, 1, 1, 1], 0.5));
    assert!(matches!(d_loss(&mut g, a, b, EPS), Err(Error::Shape { .. })));
}

#[test]
fn loss_gradients_match_finite_differences() {
    let mut r = rng(33);
    for _ in 0..20 {
        let real = uniform(&mut r, &[2, 1, 3, 3], 0.05, 0.95);
        let fake = uniform(&mut r, &[2, 1, 3, 3], 0.05, 0.95);
        let err = gradcheck(&[real, fake.clone()], 1e-3, |g, v| d_loss(g, v[0], v[1], EPS).unwrap());
        assert!(err < 1e-3, "d_loss {err}");
        let err = gradcheck(&[fake.clone()], 1e-3, |g, v| g_gan_loss(g, v[0], EPS).unwrap());
        assert!(err < 1e-3, "g_gan_loss {err}");
        let gold = Tensor::from_fn(&[2, 1, 3, 3], |_| r.gen_bool(0.4) as u8 as f64);
        let err = gradcheck(&[fake], 1e-3, |g, v| {
            let y = g.constant(gold.clone());
            seg_loss(g, v[0], y, EPS).unwrap()
        });
        assert!(err < 1e-3, "seg_loss {err}");
    }
}

fn tiny_state(disc: Option<DiscriminatorVariant>, size: usize) -> TrainState {
    let g = Generator::build(GeneratorSpec::new(1, 4), 5).unwrap();
    let d = disc.map(|v| Discriminator::build(v, (size, size), 4, 6).unwrap());
    TrainState::new(g, d)
}

#[test]
fn phases_respect_freezing() {
    let train: Vec<_> = (0..2).map(|i| generate_synthetic_sample(16, i).unwrap()).collect();
    let cfg = TrainConfig::default();
    let mut state = tiny_state(Some(DiscriminatorVariant::Patch(4)), 16);
    let order = batch_order(train.len(), 1, &cfg);

    let g_before = state.generator.clone();
    let d_before = state.discriminator.clone();
    discriminator_epoch(&mut state, &train, &order, &cfg).unwrap();
    assert_eq!(state.generator, g_before);
    assert_ne!(state.discriminator, d_before);

    let d_before = state.discriminator.clone();
    generator_epoch(&mut state, &train, &order, &cfg).unwrap();
    assert_eq!(state.discriminator, d_before);
    assert_ne!(state.generator, g_before);
}

#[test]
fn rounds_are_deterministic() {
    let train: Vec<_> = (0..3).map(|i| generate_synthetic_sample(16, i).unwrap()).collect();
    let cfg = TrainConfig {
        batch_size: 2,
        ..TrainConfig::default()
    };
    let run = || {
        let mut s = tiny_state(Some(DiscriminatorVariant::Pixel), 16);
        let stats: Vec<_> = (0..3).map(|_| train_round(&mut s, &train, &cfg).unwrap()).collect();
        (s, stats)
    };
    let (a, sa) = run();
    let (b, sb) = run();
    assert_eq!(sa, sb);
    assert_eq!(a, b);
    assert_eq!(sa.iter().map(|s| s.round).collect::<Vec<_>>(), vec![1, 2, 3]);
    assert_ne!(batch_order(10, 1, &cfg), batch_order(10, 2, &cfg));
}

#[test]
fn overfit_two_images() {
    let train: Vec<_> = (0..2).map(|i| generate_synthetic_sample(32, 40 + i).unwrap()).collect();
    let cfg = TrainConfig::default();
    let g = Generator::build(GeneratorSpec::new(2, 8), 7).unwrap();
    let d = Discriminator::build(DiscriminatorVariant::Patch(10), (32, 32), 8, 8).unwrap();
    let mut state = TrainState::new(g, Some(d));
    let augmented: Vec<_> = train.iter().flat_map(vgan::data::augment).collect();
    let mut last = f64::INFINITY;
    for _ in 0..50 {
        last = train_round(&mut state, &augmented, &cfg).unwrap().seg_loss;
    }
    assert!(last < 0.1, "seg_loss after 50 rounds: {last}");
}

#[test]
fn selection_is_argmin_with_earliest_ties() {
    assert_eq!(select_best(&[0.9, 0.4, 0.6]), Some(1));
    assert_eq!(select_best(&[0.5, 0.5]), Some(0));
    assert_eq!(select_best(&[0.3]), Some(0));
    assert_eq!(select_best(&[]), None);
}

#[test]
fn fit_keeps_lowest_validation_round() {
    let samples: Vec<_> = (0..4).map(|i| generate_synthetic_sample(16, i).unwrap()).collect();
    let cfg = TrainConfig {
        rounds: 4,
        val_fraction: 0.25,
        augment: false,
        lr: 2e-3,
        ..TrainConfig::default()
    };
    let mut state = tiny_state(Some(DiscriminatorVariant::Image), 16);
    let mut seen = Vec::new();
    let out = fit(&mut state, &samples, &cfg, |s| seen.push(s.round)).unwrap();
    assert_eq!(seen, vec![1, 2, 3, 4]);
    let losses: Vec<f64> = out.history.iter().map(|s| s.val_g_loss.unwrap()).collect();
    let best = select_best(&losses).unwrap();
    assert_eq!(out.best.round, best + 1);
    assert_eq!(out.best.val_loss, losses[best]);
    assert_eq!(state.round, 4);

    let one = TrainConfig { rounds: 1, ..cfg.clone() };
    let mut state = tiny_state(None, 16);
    let out = fit(&mut state, &samples, &one, |_| {}).unwrap();
    assert_eq!(out.best.round, 1);
    assert_eq!(out.history[0].d_loss, 0.0);
    let csv = history_csv(&out.history);
    assert!(csv.starts_with("round,d_loss,g_gan_loss,seg_loss,val_g_loss\n1,0,0,"));

    let lone = &samples[..1];
    assert!(fit(&mut tiny_state(None, 16), lone, &one, |_| {}).is_err());
}

#[test]
fn invalid_config_lists_every_problem() {
    let cfg = TrainConfig {
        lambda: -1.0,
        val_fraction: 1.5,
        eps_clamp: 0.7,
        ..TrainConfig::default()
    };
    match cfg.validate() {
        Err(Error::Config(errs)) => assert_eq!(errs.len(), 3),
        other => panic!("expected config error, got {other:?}"),
    }
}

#[test]
fn non_finite_training_aborts_with_location() {
    let mut train: Vec<_> = (0..2).map(|i| generate_synthetic_sample(16, i).unwrap()).collect();
    train[1].x.data_mut()[5] = f32::NAN;
    let cfg = TrainConfig {
        batch_size: 1,
        ..TrainConfig::default()
    };
    let mut state = tiny_state(Some(DiscriminatorVariant::Pixel), 16);
    match train_round(&mut state, &train, &cfg) {
        Err(Error::Numerical(msg)) => assert!(msg.contains("round 1") && msg.contains("batch"), "{msg}"),
        other => panic!("expected numerical failure, got {other:?}"),
    }
}

fn checkpoint_fixture() -> (Checkpoint, Tensor<f32>) {
    let samples: Vec<_> = (0..2).map(|i| generate_synthetic_sample(16, i).unwrap()).collect();
    let mut state = tiny_state(Some(DiscriminatorVariant::Patch(4)), 16);
    train_round(&mut state, &samples, &TrainConfig::default()).unwrap();
    (state.checkpoint(0.25, 0xfeed), samples[0].x.clone())
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let (ckpt, x) = checkpoint_fixture();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("best.ckpt");
    ckpt.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ckpt);
    let a = ckpt.generator.predict(&x).unwrap();
    let b = back.generator.predict(&x).unwrap();
    assert_eq!(
        a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    assert_eq!(back.to_bytes(), ckpt.to_bytes());
    assert_eq!(back.generator.param_count(), ckpt.generator.param_count());
}

#[test]
fn corrupted_checkpoints_are_rejected() {
    let (ckpt, _) = checkpoint_fixture();
    let bytes = ckpt.to_bytes();

    let mut bad = bytes.clone();
    bad[0] = b'X';
    let msg = Checkpoint::from_bytes(&bad).unwrap_err().to_string();
    assert!(msg.contains("VGANCKPT") && msg.contains("offset 0"), "{msg}");

    let mut bad = bytes.clone();
    bad[8] = 9;
    assert!(Checkpoint::from_bytes(&bad).unwrap_err().to_string().contains("version"));

    let cut = bytes.len() - 3;
    match Checkpoint::from_bytes(&bytes[..cut]) {
        Err(Error::Format { offset, reason, .. }) => {
            assert!(offset <= cut && reason.contains("truncated"), "{offset} {reason}")
        }
        other => panic!("expected format error, got {other:?}"),
    }

    // first record: skip magic, version, metadata, count, name, rank, extents
    let meta_len = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let mut p = 14 + meta_len + 4;
    let name_len = u16::from_le_bytes(bytes[p..p + 2].try_into().unwrap()) as usize;
    p += 2 + name_len;
    let rank = bytes[p] as usize;
    p += 1 + 4 * rank;
    let mut bad = bytes.clone();
    bad[p] ^= 4;
    match Checkpoint::from_bytes(&bad) {
        Err(Error::Format { offset, reason, .. }) => {
            assert_eq!(offset, p);
            assert!(reason.contains("byte length"), "{reason}");
        }
        other => panic!("expected format error, got {other:?}"),
    }
    assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
}
