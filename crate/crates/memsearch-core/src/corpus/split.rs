//! Seeded train/validation split over conversation ids.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::DatasetSplit;

/// Splits conversation ids into train/validation by a seeded shuffle.
///
/// Ids are sorted, shuffled with a ChaCha8 stream seeded by `seed`, and the
/// first `n_train` become the training set. Deterministic for fixed inputs.
pub fn split_dataset(
    conversation_ids: &[String],
    seed: u64,
    n_train: usize,
) -> Result<DatasetSplit> {
    if n_train >= conversation_ids.len() && !(n_train == 0 && conversation_ids.is_empty()) {
        return Err(Error::Validation(format!(
            "n_train {} must be less than the number of conversations {}",
            n_train,
            conversation_ids.len()
        )));
    }
    let mut ids: Vec<String> = conversation_ids.to_vec();
    ids.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let validation = ids.split_off(n_train);
    Ok(DatasetSplit {
        train_conversations: ids,
        validation_conversations: validation,
        shuffle_seed: seed,
    })
}
