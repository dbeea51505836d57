//! Joint learning of the reward basis with seen-user weights, and few-shot
//! weight estimation for new users against a frozen basis.
//!
//! The joint objective weights every user equally:
//!
//! ```text
//! sum_i 1/|D_i| sum_{(c, r) in D_i} l(w_i^T A (e_c - e_r))
//! ```
//!
//! while few-shot adaptation minimises the plain (unnormalised) sum over the
//! new user's records. User weights live on the simplex through a softmax of
//! free logits; both problems are solved with Adam.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::kernel::{dot, logistic_loss_unchecked, mat_vec, sigmoid};
use crate::optim::{chain_grad_into, softmax, softmax_into, AdamConfig, AdamState};
use crate::par;
use crate::rng::{label, Seed};
use crate::types::{
    ensure_valid, ComparisonRecord, PreferenceDataset, RewardBasisModel, UserWeights,
};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub rank: usize,
    pub adam: AdamConfig,
    pub epochs: usize,
    /// Early stop once no parameter moves more than this over an epoch.
    pub tol: f64,
    /// `None` trains on the full batch each epoch.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            rank: 5,
            adam: AdamConfig::with_lr(0.5),
            epochs: 500,
            tol: 1e-8,
            batch_size: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FewshotConfig {
    pub adam: AdamConfig,
    pub epochs: usize,
    pub tol: f64,
}

impl Default for FewshotConfig {
    fn default() -> Self {
        FewshotConfig {
            adam: AdamConfig::with_lr(0.1),
            epochs: 1000,
            tol: 1e-8,
        }
    }
}

/// Per-epoch training telemetry.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Objective at the parameters the epoch started from.
    pub objective: f64,
    pub best_objective: f64,
    /// Largest simplex violation over all users after the epoch's update.
    pub simplex_violation: f64,
    /// Max-norm of the parameter change over the epoch.
    pub max_change: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Telemetry {
    pub epochs: Vec<EpochStats>,
    pub converged: bool,
}

impl Telemetry {
    pub fn epochs_run(&self) -> usize {
        self.epochs.len()
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.objective).collect()
    }

    pub fn best_objective(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.best_objective)
    }

    pub fn max_simplex_violation(&self) -> f64 {
        self.epochs.iter().fold(0.0, |m, e| m.max(e.simplex_violation))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: RewardBasisModel,
    pub seen_weights: BTreeMap<String, UserWeights>,
    pub telemetry: Telemetry,
}

impl TrainedModel {
    pub fn weights(&self, user: &str) -> Option<&UserWeights> {
        self.seen_weights.get(user)
    }
}

/// Starting point of a joint training run.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub rank: usize,
    pub dim: usize,
    /// Row-major `rank x dim`.
    pub basis: Vec<f64>,
    pub logits: BTreeMap<String, Vec<f64>>,
}

/// I.i.d. `N(0, 1/dim)` entries drawn from the basis-init stream of `seed`.
pub fn init_basis(rank: usize, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = Seed(seed).derive(label::BASIS_INIT).rng();
    let std = 1.0 / (dim as f64).sqrt();
    (0..rank * dim).map(|_| std * rng.normal()).collect()
}

impl InitialState {
    /// Gaussian basis and all-zero logits (uniform weights) for every user.
    pub fn random(config: &TrainConfig, train: &PreferenceDataset) -> Self {
        let rank = config.rank;
        InitialState {
            rank,
            dim: train.dim(),
            basis: init_basis(rank, train.dim(), config.seed),
            logits: train.users().map(|u| (u.to_owned(), vec![0.0; rank])).collect(),
        }
    }

    /// Reorders basis rows and every user's logits: new index `j` takes old
    /// index `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        Error::check_dim(self.rank, perm.len())?;
        let mut seen = vec![false; self.rank];
        for &p in perm {
            if p >= self.rank || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidArgument(format!("not a permutation: {perm:?}")));
            }
        }
        let dim = self.dim;
        let basis = perm
            .iter()
            .flat_map(|&p| self.basis[p * dim..(p + 1) * dim].iter().copied())
            .collect();
        let logits = self
            .logits
            .iter()
            .map(|(u, l)| (u.clone(), perm.iter().map(|&p| l[p]).collect()))
            .collect();
        Ok(InitialState {
            rank: self.rank,
            dim,
            basis,
            logits,
        })
    }
}

/// Record differences `e_c - e_r` laid out contiguously, grouped by user.
struct Prepared {
    dim: usize,
    diffs: Vec<f64>,
    /// (user, positions into the dataset / rows of `diffs`)
    users: Vec<(String, Vec<usize>)>,
}

impl Prepared {
    fn new(train: &PreferenceDataset) -> Self {
        let dim = train.dim();
        let mut diffs = Vec::with_capacity(train.len() * dim);
        for r in train.records() {
            diffs.extend(r.difference());
        }
        Prepared {
            dim,
            diffs,
            users: train
                .user_index()
                .iter()
                .map(|(u, p)| (u.clone(), p.clone()))
                .collect(),
        }
    }

    fn diff(&self, pos: usize) -> &[f64] {
        &self.diffs[pos * self.dim..(pos + 1) * self.dim]
    }
}

/// Joint objective at the given model and weights.
pub fn joint_objective(
    model: &RewardBasisModel,
    weights_by_user: &BTreeMap<String, UserWeights>,
    train: &PreferenceDataset,
) -> Result<f64> {
    Error::check_dim(model.dim(), train.dim())?;
    let mut total = 0.0;
    let mut r = vec![0.0; model.rank()];
    for (user, positions) in train.user_index() {
        if positions.is_empty() {
            return Err(Error::EmptyUser(user.clone()));
        }
        let w = weights_by_user
            .get(user)
            .ok_or_else(|| Error::MissingWeights(user.clone()))?;
        Error::check_dim(model.rank(), w.len())?;
        let mut user_loss = 0.0;
        for &p in positions {
            let rec = train.record(p);
            Error::check_dim(model.dim(), rec.dim()?)?;
            mat_vec(model.basis(), model.rank(), model.dim(), &rec.difference(), &mut r);
            user_loss += logistic_loss_unchecked(dot(w.as_slice(), &r));
        }
        total += user_loss / positions.len() as f64;
    }
    Ok(total)
}

/// Trains from [`InitialState::random`].
pub fn train_joint(train: &PreferenceDataset, config: &TrainConfig) -> Result<TrainedModel> {
    train_joint_observed(train, config, &InitialState::random(config, train), |_| {})
}

pub fn train_joint_from(
    train: &PreferenceDataset,
    config: &TrainConfig,
    init: &InitialState,
) -> Result<TrainedModel> {
    train_joint_observed(train, config, init, |_| {})
}

/// Full training entry point; `observer` sees every epoch as it finishes.
pub fn train_joint_observed(
    train: &PreferenceDataset,
    config: &TrainConfig,
    init: &InitialState,
    mut observer: impl FnMut(&EpochStats),
) -> Result<TrainedModel> {
    ensure_valid(train)?;
    let (rank, dim) = (init.rank, train.dim());
    if rank != config.rank {
        return Err(Error::InvalidArgument(format!(
            "initial state has rank {rank}, config asks for {}",
            config.rank
        )));
    }
    Error::check_dim(init.dim, dim)?;
    // Validates rank against dim before any work.
    RewardBasisModel::new(rank, dim, init.basis.clone())?;
    if matches!(config.batch_size, Some(0)) {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }

    let prep = Prepared::new(train);
    let n_basis = rank * dim;
    let mut params = init.basis.clone();
    for (user, _) in &prep.users {
        let l = init
            .logits
            .get(user)
            .ok_or_else(|| Error::MissingWeights(user.clone()))?;
        Error::check_dim(rank, l.len())?;
        params.extend_from_slice(l);
    }
    // record position -> user slot
    let mut slot_of = vec![0usize; train.len()];
    for (slot, (_, positions)) in prep.users.iter().enumerate() {
        for &p in positions {
            slot_of[p] = slot;
        }
    }

    let mut adam = AdamState::new(config.adam, params.len());
    let mut grads = vec![0.0; params.len()];
    let mut telemetry = Telemetry::default();
    let mut best = f64::INFINITY;
    let mut shuffle_rng = Seed(config.seed).derive(label::SHUFFLE).rng();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut weights = vec![0.0; rank * prep.users.len()];
    let mut r = vec![0.0; rank];

    for epoch in 0..config.epochs {
        let start = params.clone();
        let batches: Vec<&[usize]> = match config.batch_size {
            None => vec![&order[..]],
            Some(bs) => {
                shuffle_rng.shuffle(&mut order);
                order.chunks(bs).collect()
            }
        };
        let mut objective = 0.0;
        for batch in batches {
            for (slot, w) in weights.chunks_mut(rank).enumerate() {
                let off = n_basis + slot * rank;
                softmax_into(&params[off..off + rank], w);
            }
            grads.iter_mut().for_each(|g| *g = 0.0);
            let mut grad_w = vec![0.0; rank * prep.users.len()];
            let (basis, _) = params.split_at(n_basis);
            let (grad_basis, _) = grads.split_at_mut(n_basis);
            for &pos in batch {
                let slot = slot_of[pos];
                let inv_n = 1.0 / prep.users[slot].1.len() as f64;
                let w = &weights[slot * rank..(slot + 1) * rank];
                let d = prep.diff(pos);
                mat_vec(basis, rank, dim, d, &mut r);
                let z = dot(w, &r);
                let loss = logistic_loss_unchecked(z);
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, record: pos });
                }
                objective += loss * inv_n;
                let s = -sigmoid(-z) * inv_n;
                for j in 0..rank {
                    let coef = s * w[j];
                    for (g, dk) in grad_basis[j * dim..(j + 1) * dim].iter_mut().zip(d) {
                        *g += coef * dk;
                    }
                }
                for (g, rj) in grad_w[slot * rank..(slot + 1) * rank].iter_mut().zip(&r) {
                    *g += s * rj;
                }
            }
            for slot in 0..prep.users.len() {
                let off = n_basis + slot * rank;
                chain_grad_into(
                    &grad_w[slot * rank..(slot + 1) * rank],
                    &weights[slot * rank..(slot + 1) * rank],
                    &mut grads[off..off + rank],
                );
            }
            adam.step(&mut params, &grads).map_err(|_| Error::NonFiniteLoss {
                epoch,
                record: batch.first().copied().unwrap_or(0),
            })?;
        }

        best = best.min(objective);
        let max_change = params
            .iter()
            .zip(&start)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let mut simplex_violation = 0.0f64;
        for slot in 0..prep.users.len() {
            let off = n_basis + slot * rank;
            let w = UserWeights::from_softmax_unchecked(softmax(&params[off..off + rank]));
            simplex_violation = simplex_violation.max(w.simplex_violation());
        }
        let stats = EpochStats {
            epoch,
            objective,
            best_objective: best,
            simplex_violation,
            max_change,
        };
        observer(&stats);
        telemetry.epochs.push(stats);
        if max_change < config.tol {
            telemetry.converged = true;
            break;
        }
    }

    let seen_weights = prep
        .users
        .iter()
        .enumerate()
        .map(|(slot, (u, _))| {
            let off = n_basis + slot * rank;
            (
                u.clone(),
                UserWeights::from_softmax_unchecked(softmax(&params[off..off + rank])),
            )
        })
        .collect();
    params.truncate(n_basis);
    Ok(TrainedModel {
        model: RewardBasisModel::new(rank, dim, params)?,
        seen_weights,
        telemetry,
    })
}

/// Estimates a new user's weights with the basis held fixed. With no
/// records the result is the uniform point.
pub fn fewshot_adapt(
    model: &RewardBasisModel,
    records: &[ComparisonRecord],
    config: &FewshotConfig,
) -> Result<UserWeights> {
    let rank = model.rank();
    let mut rewards = Vec::with_capacity(records.len() * rank);
    let mut r = vec![0.0; rank];
    for rec in records {
        Error::check_dim(model.dim(), rec.dim()?)?;
        mat_vec(model.basis(), rank, model.dim(), &rec.difference(), &mut r);
        rewards.extend_from_slice(&r);
    }
    fit_simplex_weights(&rewards, rank, config)
}

/// Minimises `sum_k l(w^T r_k)` over the simplex, where `rewards` holds the
/// `r_k` row-major. Shared by the reward-basis and policy-basis variants.
pub(crate) fn fit_simplex_weights(
    rewards: &[f64],
    rank: usize,
    config: &FewshotConfig,
) -> Result<UserWeights> {
    if rewards.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("basis reward difference".into()));
    }
    let mut logits = vec![0.0; rank];
    let mut w = vec![0.0; rank];
    let mut grad_w = vec![0.0; rank];
    let mut grad = vec![0.0; rank];
    let mut adam = AdamState::new(config.adam, rank);
    if !rewards.is_empty() {
        for _ in 0..config.epochs {
            softmax_into(&logits, &mut w);
            grad_w.iter_mut().for_each(|g| *g = 0.0);
            for r in rewards.chunks(rank) {
                let s = -sigmoid(-dot(&w, r));
                for (g, rj) in grad_w.iter_mut().zip(r) {
                    *g += s * rj;
                }
            }
            chain_grad_into(&grad_w, &w, &mut grad);
            let before = logits.clone();
            adam.step(&mut logits, &grad)?;
            let change = logits
                .iter()
                .zip(&before)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if change < config.tol {
                break;
            }
        }
    }
    softmax_into(&logits, &mut w);
    Ok(UserWeights::from_softmax_unchecked(w))
}

/// Adapts every user of `fewshot` independently, in parallel.
pub fn fewshot_adapt_all(
    model: &RewardBasisModel,
    fewshot: &PreferenceDataset,
    config: &FewshotConfig,
) -> Result<BTreeMap<String, UserWeights>> {
    let users: Vec<(&String, Vec<ComparisonRecord>)> = fewshot
        .user_index()
        .iter()
        .map(|(u, pos)| (u, pos.iter().map(|&p| fewshot.record(p).clone()).collect()))
        .collect();
    par::map(&users, |(u, recs)| fewshot_adapt(model, recs, config).map(|w| ((*u).clone(), w)))
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::record_margin;
    use crate::types::FeatureVector;

    fn rec(user: &str, c: &[f64], r: &[f64]) -> ComparisonRecord {
        ComparisonRecord::new(user, FeatureVector(c.to_vec()), FeatureVector(r.to_vec()))
    }

    fn tiny_random(seed: u64) -> (PreferenceDataset, RewardBasisModel, BTreeMap<String, UserWeights>) {
        let mut rng = Seed(seed).rng();
        let mut records = Vec::new();
        for u in ["u1", "u2"] {
            for _ in 0..3 {
                let c: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
                let r: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
                records.push(rec(u, &c, &r));
            }
        }
        let data = PreferenceDataset::from_records(4, records);
        let model = RewardBasisModel::new(2, 4, (0..8).map(|_| rng.normal()).collect()).unwrap();
        let mut weights = BTreeMap::new();
        weights.insert("u1".to_string(), UserWeights::new(vec![0.3, 0.7]).unwrap());
        weights.insert("u2".to_string(), UserWeights::new(vec![0.9, 0.1]).unwrap());
        (data, model, weights)
    }

    #[test]
    fn zero_model_objective_is_users_times_ln2() {
        let (data, _, weights) = tiny_random(1);
        let zero = RewardBasisModel::zeros(2, 4).unwrap();
        let obj = joint_objective(&zero, &weights, &data).unwrap();
        assert_eq!(obj, 2.0 * std::f64::consts::LN_2);
    }

    #[test]
    fn single_record_objective_closed_form() {
        let data = PreferenceDataset::from_records(1, [rec("u", &[3f64.ln()], &[0.0])]);
        let model = RewardBasisModel::from_rows(&[vec![1.0]]).unwrap();
        let mut w = BTreeMap::new();
        w.insert("u".to_string(), UserWeights::uniform(1));
        let obj = joint_objective(&model, &w, &data).unwrap();
        assert!((obj - (4.0f64 / 3.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn objective_matches_naive_resummation() {
        let (data, model, weights) = tiny_random(5);
        let mut oracle = 0.0;
        for user in ["u1", "u2"] {
            let recs: Vec<_> = data.records().iter().filter(|r| r.user_id == user).collect();
            let mut s = 0.0;
            for r in &recs {
                let z = record_margin(&model, &weights[user], r).unwrap();
                s += (1.0 + (-z).exp()).ln();
            }
            oracle += s / recs.len() as f64;
        }
        let got = joint_objective(&model, &weights, &data).unwrap();
        assert!((got - oracle).abs() <= 1e-12);
    }

    #[test]
    fn objective_errors() {
        let (data, model, mut weights) = tiny_random(2);
        weights.remove("u2");
        assert!(matches!(
            joint_objective(&model, &weights, &data),
            Err(Error::MissingWeights(_))
        ));
        let mut b = PreferenceDataset::builder(4);
        b.add_user("ghost");
        assert!(matches!(
            joint_objective(&model, &weights, &b.build()),
            Err(Error::EmptyUser(_))
        ));
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let mut rng = Seed(3).rng();
        let records: Vec<_> = (0..20)
            .map(|i| {
                let base = [rng.normal(), rng.normal()];
                rec(&format!("u{}", i % 4), &[base[0] + 1.0, base[1]], &base)
            })
            .collect();
        let data = PreferenceDataset::from_records(2, records);
        let config = TrainConfig {
            rank: 1,
            ..Default::default()
        };
        let trained = train_joint(&data, &config).unwrap();
        let last = *trained.telemetry.objectives().last().unwrap();
        // Objective is a sum of 4 per-user means.
        assert!(last / 4.0 < 0.05, "loss {last}");
        for r in data.records() {
            let w = trained.weights(&r.user_id).unwrap();
            assert!(record_margin(&trained.model, w, r).unwrap() > 0.0);
        }
    }

    #[test]
    fn best_objective_is_monotone_and_weights_stay_on_simplex() {
        let (data, _, _) = tiny_random(8);
        let config = TrainConfig {
            rank: 2,
            epochs: 200,
            ..Default::default()
        };
        let t = train_joint(&data, &config).unwrap();
        let best: Vec<f64> = t.telemetry.epochs.iter().map(|e| e.best_objective).collect();
        assert!(best.windows(2).all(|w| w[1] <= w[0]));
        assert!(t.telemetry.max_simplex_violation() <= 1e-9);
        assert_eq!(t.seen_weights.len(), 2);
    }

    #[test]
    fn training_is_deterministic() {
        let (data, _, _) = tiny_random(4);
        for batch_size in [None, Some(2)] {
            let config = TrainConfig {
                rank: 2,
                epochs: 50,
                batch_size,
                seed: 17,
                ..Default::default()
            };
            assert_eq!(train_joint(&data, &config).unwrap(), train_joint(&data, &config).unwrap());
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let (data, _, _) = tiny_random(4);
        let config = TrainConfig {
            rank: 5,
            ..Default::default()
        };
        assert!(train_joint(&data, &config).is_err(), "rank above dim");
        let config = TrainConfig {
            rank: 2,
            batch_size: Some(0),
            ..Default::default()
        };
        assert!(train_joint(&data, &config).is_err());
    }

    #[test]
    fn non_finite_loss_reports_record() {
        let data = PreferenceDataset::from_records(1, [rec("u", &[1e300], &[-1e300])]);
        let config = TrainConfig {
            rank: 1,
            ..Default::default()
        };
        let mut init = InitialState::random(&config, &data);
        init.basis = vec![-1e300];
        match train_joint_from(&data, &config, &init) {
            Err(Error::NonFiniteLoss { epoch: 0, record: 0 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }


    #[test]
    fn fewshot_without_records_is_uniform() {
        let m = RewardBasisModel::zeros(3, 4).unwrap();
        let w = fewshot_adapt(&m, &[], &FewshotConfig::default()).unwrap();
        assert_eq!(w, UserWeights::uniform(3));
    }

    #[test]
    fn fewshot_flat_objective_stays_uniform() {
        // Both basis rows score every record identically.
        let m = RewardBasisModel::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        let mut rng = Seed(6).rng();
        let recs: Vec<_> = (0..10)
            .map(|_| rec("u", &[rng.normal(), rng.normal()], &[rng.normal(), rng.normal()]))
            .collect();
        let w = fewshot_adapt(&m, &recs, &FewshotConfig::default()).unwrap();
        assert_eq!(w, UserWeights::uniform(2));
    }

    #[test]
    fn fewshot_leaves_model_untouched() {
        let (data, model, _) = tiny_random(9);
        let before = model.clone();
        fewshot_adapt(&model, data.records(), &FewshotConfig::default()).unwrap();
        assert_eq!(before, model);
    }

    #[test]
    fn fewshot_dimension_mismatch() {
        let m = RewardBasisModel::zeros(1, 3).unwrap();
        assert!(fewshot_adapt(&m, &[rec("u", &[1.0], &[0.0])], &FewshotConfig::default()).is_err());
    }

    #[test]
    fn fewshot_recovers_one_hot_user_against_grid_search() {
        // Two well separated basis directions; the user follows row 0 only.
        let model = RewardBasisModel::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let mut rng = Seed(21).rng();
        let mut recs = Vec::new();
        while recs.len() < 30 {
            let a: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
            if a[0] == b[0] {
                continue;
            }
            let (c, r) = if a[0] > b[0] { (a, b) } else { (b, a) };
            recs.push(rec("u", &c, &r));
        }
        let w = fewshot_adapt(&model, &recs, &FewshotConfig::default()).unwrap();
        assert!(w.as_slice()[0] >= 0.9, "{w:?}");

        let loss = |w0: f64| -> f64 {
            let w = UserWeights::new(vec![w0, 1.0 - w0]).unwrap();
            recs.iter()
                .map(|r| logistic_loss_unchecked(record_margin(&model, &w, r).unwrap()))
                .sum()
        };
        let grid_best = (0..=1000).map(|k| loss(k as f64 / 1000.0)).fold(f64::INFINITY, f64::min);
        let got = loss(w.as_slice()[0]);
        assert!((got - grid_best).abs() <= 0.02, "{got} vs grid {grid_best}");
    }

    #[test]
    fn permuted_initial_state() {
        let (data, _, _) = tiny_random(3);
        let config = TrainConfig {
            rank: 2,
            ..Default::default()
        };
        let init = InitialState::random(&config, &data);
        let p = init.permuted(&[1, 0]).unwrap();
        assert_eq!(&p.basis[..4], &init.basis[4..]);
        assert!(init.permuted(&[0, 0]).is_err());
        assert_eq!(p.permuted(&[1, 0]).unwrap(), init);
    }
}
