use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PreprocessError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.75,
            seed: 42,
            stratified: false,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(PreprocessError::InvalidConfig(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

fn take_fraction(mut idx: Vec<usize>, fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    idx.shuffle(rng);
    let n_train = ((idx.len() as f64) * fraction).round() as usize;
    let test = idx.split_off(n_train.min(idx.len()));
    (idx, test)
}

/// Seeded partition of `0..labels.len()` into ascending train and test index
/// lists. Stratified mode splits each label class separately.
pub fn split_indices(
    labels: &[u8],
    spec: &SplitSpec,
) -> Result<(Vec<usize>, Vec<usize>), PreprocessError> {
    spec.validate()?;
    if labels.is_empty() {
        return Err(PreprocessError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (mut train, mut test) = if spec.stratified {
        let mut classes: Vec<u8> = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        let mut train = Vec::new();
        let mut test = Vec::new();
        for class in classes {
            let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
            let (tr, te) = take_fraction(members, spec.train_fraction, &mut rng);
            train.extend(tr);
            test.extend(te);
        }
        (train, test)
    } else {
        take_fraction((0..labels.len()).collect(), spec.train_fraction, &mut rng)
    };
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
