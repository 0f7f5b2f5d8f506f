use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training and validation case ids of one cross-validation fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub train: Vec<String>,
    pub val: Vec<String>,
}

/// Shuffles the ids with `seed` and cuts them into `k` contiguous validation
/// sets whose sizes differ by at most one (larger sets first).
pub fn make_folds(case_ids: &[String], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k == 0 || case_ids.len() < k {
        return Err(Error::TooFewCases {
            cases: case_ids.len(),
            folds: k,
        });
    }
    let mut ids = case_ids.to_vec();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (ids.len() / k, ids.len() % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for index in 0..k {
        let len = base + usize::from(index < extra);
        let val = ids[start..start + len].to_vec();
        let train = ids[..start].iter().chain(&ids[start + len..]).cloned().collect();
        folds.push(Fold { index, train, val });
        start += len;
    }
    Ok(folds)
}
