//! Scalar and vector primitives of the Bradley-Terry likelihood.
//!
//! All functions are pure. The fallible variants reject non-finite input;
//! the `*_unchecked` helpers are the same formulas for inner loops that have
//! already validated their data.

use crate::error::{Error, Result};
use crate::types::{ComparisonRecord, FeatureVector, RewardBasisModel, UserWeights};

/// One latent reward per basis function.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisRewards(pub Vec<f64>);

impl BasisRewards {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(-z))` without overflow.
#[inline]
pub fn logistic_loss_unchecked(z: f64) -> f64 {
    if z >= 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

fn finite(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(format!("{what} = {x}")))
    }
}

/// Probability that the item with the higher reward by `reward_diff` wins.
pub fn bt_probability(reward_diff: f64) -> Result<f64> {
    Ok(sigmoid(finite(reward_diff, "reward difference")?))
}

/// `l(z) = log(1 + exp(-z))`.
pub fn logistic_loss(z: f64) -> Result<f64> {
    Ok(logistic_loss_unchecked(finite(z, "margin")?))
}

/// `out = A * v` for a row-major `rank x dim` matrix.
#[inline]
pub(crate) fn mat_vec(basis: &[f64], rank: usize, dim: usize, v: &[f64], out: &mut [f64]) {
    debug_assert_eq!(basis.len(), rank * dim);
    for (j, o) in out.iter_mut().enumerate().take(rank) {
        let row = &basis[j * dim..(j + 1) * dim];
        *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `R(x, y) = A e(x, y)`.
pub fn basis_rewards(model: &RewardBasisModel, item: &FeatureVector) -> Result<BasisRewards> {
    Error::check_dim(model.dim(), item.len())?;
    let mut out = vec![0.0; model.rank()];
    mat_vec(model.basis(), model.rank(), model.dim(), item.as_slice(), &mut out);
    Ok(BasisRewards(out))
}

/// `w^T r`.
pub fn personalized_reward(w: &UserWeights, r: &BasisRewards) -> Result<f64> {
    Error::check_dim(w.len(), r.0.len())?;
    Ok(dot(w.as_slice(), &r.0))
}

/// Loss of one record and its gradients with respect to the raw basis
/// matrix and the raw weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub loss: f64,
    /// Row-major `B x D`.
    pub grad_basis: Vec<f64>,
    pub grad_weights: Vec<f64>,
}

/// Margin `z = w^T A (e_c - e_r)` of a record.
pub fn record_margin(model: &RewardBasisModel, w: &UserWeights, record: &ComparisonRecord) -> Result<f64> {
    let dim = record.dim()?;
    Error::check_dim(model.dim(), dim)?;
    Error::check_dim(model.rank(), w.len())?;
    let diff = record.difference();
    let mut r = vec![0.0; model.rank()];
    mat_vec(model.basis(), model.rank(), dim, &diff, &mut r);
    Ok(dot(w.as_slice(), &r))
}

pub fn loss_and_gradient(
    model: &RewardBasisModel,
    w: &UserWeights,
    record: &ComparisonRecord,
) -> Result<LossGradient> {
    let dim = record.dim()?;
    Error::check_dim(model.dim(), dim)?;
    Error::check_dim(model.rank(), w.len())?;
    let (rank, w) = (model.rank(), w.as_slice());
    let diff = record.difference();
    let mut r = vec![0.0; rank];
    mat_vec(model.basis(), rank, dim, &diff, &mut r);
    let z = dot(w, &r);
    // dl/dz = -sigmoid(-z)
    let scale = -sigmoid(-z);
    let mut grad_basis = vec![0.0; rank * dim];
    for j in 0..rank {
        let coef = scale * w[j];
        for (g, d) in grad_basis[j * dim..(j + 1) * dim].iter_mut().zip(&diff) {
            *g = coef * d;
        }
    }
    Ok(LossGradient {
        loss: logistic_loss_unchecked(z),
        grad_basis,
        grad_weights: r.iter().map(|v| scale * v).collect(),
    })
}
