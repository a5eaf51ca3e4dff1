use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Number of leading images used for training on STARE.
pub const STARE_TRAIN_COUNT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DatasetKind {
    /// Published halves: ids under `training/` train, ids under `test/` test.
    Drive,
    /// First ten ids train, the rest test.
    Stare,
    /// Seeded shuffle; `test_fraction` of the ids are held out.
    Custom { test_fraction: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitPlan {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

/// Assigns source images to train and test. `ids` are sorted first so the
/// plan does not depend on directory listing order. Validation is carved
/// later from the augmented training pool with [`train_val_split`].
pub fn make_split(ids: &[String], kind: DatasetKind, seed: u64) -> Result<SplitPlan> {
    if ids.is_empty() {
        return Err(Error::Data("cannot split an empty id list".into()));
    }
    let mut ids = ids.to_vec();
    ids.sort();
    let before = ids.len();
    ids.dedup();
    if ids.len() != before {
        return Err(Error::Data("duplicate ids in split input".into()));
    }
    let (train, test) = match kind {
        DatasetKind::Stare => {
            if ids.len() <= STARE_TRAIN_COUNT {
                return Err(Error::Data(format!(
                    "STARE split needs more than {STARE_TRAIN_COUNT} images, got {}",
                    ids.len()
                )));
            }
            let test = ids.split_off(STARE_TRAIN_COUNT);
            (ids, test)
        }
        DatasetKind::Drive => {
            let (train, rest): (Vec<_>, Vec<_>) = ids.into_iter().partition(|id| id.starts_with("training/"));
            let (test, other): (Vec<_>, Vec<_>) = rest.into_iter().partition(|id| id.starts_with("test/"));
            if !other.is_empty() {
                return Err(Error::Data(format!(
                    "DRIVE ids must live under training/ or test/: {}",
                    other.join(", ")
                )));
            }
            if train.is_empty() || test.is_empty() {
                return Err(Error::Data(format!(
                    "DRIVE split needs both halves, found {} training and {} test images",
                    train.len(),
                    test.len()
                )));
            }
            (train, test)
        }
        DatasetKind::Custom { test_fraction } => {
            if !(0.0..1.0).contains(&test_fraction) {
                return Err(Error::InvalidArgument(format!("test fraction {test_fraction} outside [0, 1)")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            ids.shuffle(&mut rng);
            let n_test = (ids.len() as f64 * test_fraction).round() as usize;
            let test = ids.split_off(ids.len() - n_test);
            if ids.is_empty() {
                return Err(Error::Data("custom split leaves no training images".into()));
            }
            ids.sort();
            let mut test = test;
            test.sort();
            (ids, test)
        }
    };
    Ok(SplitPlan {
        train,
        validation: Vec::new(),
        test,
    })
}

/// Validation size for a pool of `n`: `ceil(n · fraction)`, so a 1/20
/// fraction turns 160 items into 152 + 8 and never yields an empty split.
pub fn validation_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction) - 1e-9).ceil().max(0.0) as usize
}

/// Seeded shuffle of `0..n` split into (train, validation) index lists,
/// each sorted ascending.
pub fn train_val_split(n: usize, val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("validation fraction {val_fraction} outside (0, 1)")));
    }
    let n_val = validation_count(n, val_fraction);
    if n_val == 0 || n_val >= n {
        return Err(Error::Data(format!(
            "{n} items cannot be split into non-empty train and validation sets"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut val = order.split_off(n - n_val);
    order.sort_unstable();
    val.sort_unstable();
    Ok((order, val))
}
