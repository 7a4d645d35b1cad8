use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_RATIOS: [f64; 3] = [0.48, 0.32, 0.20];

/// One train/validation/test partition.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitSpec {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
    pub seed: u64,
    pub ratios: [f64; 3],
}

impl SplitSpec {
    pub fn sizes(&self) -> [usize; 3] {
        let count = |m: &[bool]| m.iter().filter(|&&b| b).count();
        [count(&self.train), count(&self.val), count(&self.test)]
    }
}

/// `count` shuffled splits, the `i`-th seeded with `base_seed + i`. Train and
/// validation get `floor(ratio * n)` nodes; when the ratios sum to one the
/// test set takes the remainder.
pub fn make_splits(n: usize, ratios: [f64; 3], base_seed: u64, count: usize) -> Result<Vec<SplitSpec>> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::input(format!("split ratios must lie in [0, 1], got {ratios:?}")));
    }
    let total: f64 = ratios.iter().sum();
    if total > 1.0 + 1e-9 {
        return Err(Error::input(format!("split ratios sum to {total}, more than 1")));
    }
    let n_train = (ratios[0] * n as f64).floor() as usize;
    let n_val = (ratios[1] * n as f64).floor() as usize;
    let n_test = if (total - 1.0).abs() <= 1e-9 {
        n - n_train - n_val
    } else {
        ((ratios[2] * n as f64).floor() as usize).min(n - n_train - n_val)
    };
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::input(format!(
            "{n} nodes are too few for nonempty splits with ratios {ratios:?}"
        )));
    }
    Ok((0..count as u64)
        .map(|i| {
            let seed = base_seed.wrapping_add(i);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut train = vec![false; n];
            let mut val = vec![false; n];
            let mut test = vec![false; n];
            for (rank, &v) in order.iter().enumerate() {
                if rank < n_train {
                    train[v] = true;
                } else if rank < n_train + n_val {
                    val[v] = true;
                } else if rank < n_train + n_val + n_test {
                    test[v] = true;
                }
            }
            SplitSpec {
                train,
                val,
                test,
                seed,
                ratios,
            }
        })
        .collect())
}
