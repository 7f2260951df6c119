use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Training and test context indices for one cross-validation fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Draws `n_folds` pairwise-disjoint training sets of `train_size` contexts
/// each; a fold's test set is the complement of its training set.
///
/// Index lists are returned sorted.
pub fn split_folds<R: Rng + ?Sized>(
    num_contexts: usize,
    n_folds: usize,
    train_size: usize,
    rng: &mut R,
) -> Result<Vec<Fold>> {
    if n_folds == 0 || train_size == 0 {
        return Err(Error::domain("n_folds and train_size must be positive"));
    }
    let needed = n_folds
        .checked_mul(train_size)
        .ok_or_else(|| Error::domain("fold sizes overflow"))?;
    if needed > num_contexts {
        return Err(Error::domain(format!(
            "{n_folds} folds of {train_size} need {needed} contexts, only {num_contexts} available"
        )));
    }
    let mut perm: Vec<usize> = (0..num_contexts).collect();
    perm.shuffle(rng);

    Ok(perm
        .chunks(train_size)
        .take(n_folds)
        .map(|chunk| {
            let mut in_train = vec![false; num_contexts];
            for &i in chunk {
                in_train[i] = true;
            }
            let mut train = chunk.to_vec();
            train.sort_unstable();
            let test = (0..num_contexts).filter(|&i| !in_train[i]).collect();
            Fold { train, test }
        })
        .collect())
}
