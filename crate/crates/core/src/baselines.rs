//! Non-personalized comparison methods: a single linear Bradley-Terry
//! reward head trained on the pooled data, and a fixed reference scorer.

use crate::error::{Error, Result};
use crate::kernel::{dot, logistic_loss_unchecked, sigmoid};
use crate::optim::AdamState;
use crate::rng::{label, Seed};
use crate::trainer::{init_basis, TrainConfig};
use crate::types::{ensure_valid, FeatureVector, PreferenceDataset, RewardBasisModel};

/// Scalar reward `v . e(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRewardModel {
    pub weights: Vec<f64>,
}

impl LinearRewardModel {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("linear reward weights".into()));
        }
        Ok(LinearRewardModel { weights })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, item: &FeatureVector) -> Result<f64> {
        reference_score(&self.weights, item)
    }

    /// The same scorer as a rank-1 basis, for use with the shared evaluation code.
    pub fn as_basis_model(&self) -> Result<RewardBasisModel> {
        RewardBasisModel::new(1, self.weights.len(), self.weights.clone())
    }
}

/// Minimises the pooled logistic loss `sum_records l(v . (e_c - e_r))`,
/// ignoring who labeled each record. The initial vector is the first basis
/// row the joint trainer would draw with the same seed.
pub fn train_bt(train: &PreferenceDataset, config: &TrainConfig) -> Result<LinearRewardModel> {
    ensure_valid(train)?;
    let dim = train.dim();
    if matches!(config.batch_size, Some(0)) {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let diffs: Vec<Vec<f64>> = train.records().iter().map(|r| r.difference()).collect();
    let mut v = init_basis(1, dim, config.seed);
    let mut adam = AdamState::new(config.adam, dim);
    let mut grad = vec![0.0; dim];
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    let mut shuffle_rng = Seed(config.seed).derive(label::SHUFFLE).rng();

    for epoch in 0..config.epochs {
        let start = v.clone();
        let batches: Vec<&[usize]> = match config.batch_size {
            None => vec![&order[..]],
            Some(bs) => {
                shuffle_rng.shuffle(&mut order);
                order.chunks(bs).collect()
            }
        };
        for batch in batches {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &pos in batch {
                let d = &diffs[pos];
                let z = dot(&v, d);
                if !logistic_loss_unchecked(z).is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, record: pos });
                }
                let s = -sigmoid(-z);
                for (g, dk) in grad.iter_mut().zip(d) {
                    *g += s * dk;
                }
            }
            adam.step(&mut v, &grad).map_err(|_| Error::NonFiniteLoss {
                epoch,
                record: batch.first().copied().unwrap_or(0),
            })?;
        }
        let change = v.iter().zip(&start).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if change < config.tol {
            break;
        }
    }
    LinearRewardModel::new(v)
}

/// Score of a frozen, non-personalized scorer: `ref . item`.
pub fn reference_score(ref_vector: &[f64], item: &FeatureVector) -> Result<f64> {
    Error::check_dim(ref_vector.len(), item.len())?;
    Ok(dot(ref_vector, item.as_slice()))
}
