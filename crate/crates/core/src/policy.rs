//! Policy-basis learning over an explicit, finite response space.
//!
//! Each of the `B` basis policies is a row-softmax table of logits over
//! `n_prompts x n_responses`, standing in for a language model. A basis
//! policy implies a reward through the KL-regularized optimum,
//! `r_j(x, y) = beta * log(pi_j(y|x) / pi_ref(y|x)) + const(x)`, so user
//! preferences can be fit directly in policy space and every quantity can be
//! checked by enumeration.
//!
//! Comparisons over tabular items are stored in an ordinary
//! [`PreferenceDataset`] whose items are one-hot vectors of length
//! `n_prompts * n_responses` (index `prompt * n_responses + response`).

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::kernel::{logistic_loss_unchecked, sigmoid};
use crate::optim::{chain_grad_into, softmax, softmax_into, AdamConfig, AdamState};
use crate::rng::{label, LoreRng, Seed};
use crate::synth::{label_indices, sample_dirichlet, LabelMode};
use crate::trainer::{fit_simplex_weights, FewshotConfig, Telemetry, EpochStats};
use crate::types::{ensure_valid, ComparisonRecord, FeatureVector, PreferenceDataset, RewardBasisModel, UserWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TabularShape {
    pub prompts: usize,
    pub responses: usize,
}

impl TabularShape {
    pub fn cells(self) -> usize {
        self.prompts * self.responses
    }

    pub fn index(self, prompt: usize, response: usize) -> usize {
        prompt * self.responses + response
    }

    pub fn one_hot(self, prompt: usize, response: usize) -> FeatureVector {
        let mut v = vec![0.0; self.cells()];
        v[self.index(prompt, response)] = 1.0;
        FeatureVector(v)
    }

    /// `(prompt, response)` of a one-hot item.
    pub fn decode(self, item: &FeatureVector) -> Result<(usize, usize)> {
        Error::check_dim(self.cells(), item.len())?;
        let mut hot = None;
        for (i, &v) in item.0.iter().enumerate() {
            if v == 1.0 && hot.is_none() {
                hot = Some(i);
            } else if v != 0.0 {
                return Err(Error::InvalidDataset("tabular item is not one-hot".into()));
            }
        }
        let i = hot.ok_or_else(|| Error::InvalidDataset("tabular item is all zeros".into()))?;
        Ok((i / self.responses, i % self.responses))
    }

    pub fn record(self, user: &str, prompt: usize, chosen: usize, rejected: usize) -> ComparisonRecord {
        ComparisonRecord::new(user, self.one_hot(prompt, chosen), self.one_hot(prompt, rejected))
    }

    /// `(prompt, chosen, rejected)`; both sides must share the prompt.
    pub fn decode_record(self, record: &ComparisonRecord) -> Result<(usize, usize, usize)> {
        let (x, c) = self.decode(&record.chosen)?;
        let (x2, r) = self.decode(&record.rejected)?;
        if x != x2 {
            return Err(Error::InvalidDataset(format!(
                "comparison spans prompts {x} and {x2}"
            )));
        }
        Ok((x, c, r))
    }
}

fn check_row_stochastic(table: &[f64], shape: TabularShape, what: &str) -> Result<()> {
    Error::check_dim(shape.cells(), table.len())?;
    for (x, row) in table.chunks(shape.responses).enumerate() {
        if let Some(y) = row.iter().position(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::ZeroProbability { prompt: x, response: y });
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("{what} row {x} sums to {s}")));
        }
    }
    Ok(())
}

fn log_softmax_rows(logits: &[f64], responses: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(responses) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        out.extend(row.iter().map(|l| l - lse));
    }
    out
}

/// `B` basis policies plus the reference policy.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicySet {
    pub shape: TabularShape,
    pub beta: f64,
    /// Row-stochastic `prompts x responses`, strictly positive.
    pub ref_policy: Vec<f64>,
    /// One logit table per basis policy.
    pub basis_logits: Vec<Vec<f64>>,
}

impl TabularPolicySet {
    pub fn new(shape: TabularShape, beta: f64, ref_policy: Vec<f64>, basis_logits: Vec<Vec<f64>>) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
        }
        if shape.prompts == 0 || shape.responses == 0 {
            return Err(Error::InvalidArgument("empty tabular shape".into()));
        }
        check_row_stochastic(&ref_policy, shape, "reference policy")?;
        for l in &basis_logits {
            Error::check_dim(shape.cells(), l.len())?;
            if l.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("policy logits".into()));
            }
        }
        Ok(TabularPolicySet {
            shape,
            beta,
            ref_policy,
            basis_logits,
        })
    }

    /// Every basis policy equal to the reference.
    pub fn at_reference(shape: TabularShape, rank: usize, beta: f64, ref_policy: Vec<f64>) -> Result<Self> {
        let logits: Vec<f64> = ref_policy.iter().map(|p| p.ln()).collect();
        Self::new(shape, beta, ref_policy, vec![logits; rank])
    }

    /// Builds basis policies from probability tables.
    pub fn from_policies(shape: TabularShape, beta: f64, ref_policy: Vec<f64>, policies: &[Vec<f64>]) -> Result<Self> {
        for p in policies {
            check_row_stochastic(p, shape, "basis policy")?;
        }
        let logits = policies.iter().map(|p| p.iter().map(|v| v.ln()).collect()).collect();
        Self::new(shape, beta, ref_policy, logits)
    }

    pub fn rank(&self) -> usize {
        self.basis_logits.len()
    }

    /// Probability table of basis policy `j`.
    pub fn policy(&self, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.shape.cells()];
        for (o, l) in out
            .chunks_mut(self.shape.responses)
            .zip(self.basis_logits[j].chunks(self.shape.responses))
        {
            softmax_into(l, o);
        }
        out
    }

    /// `beta * log(pi_j / pi_ref)` for every cell of policy `j`.
    fn log_ratios(&self, j: usize) -> Vec<f64> {
        log_softmax_rows(&self.basis_logits[j], self.shape.responses)
            .iter()
            .zip(&self.ref_policy)
            .map(|(lp, r)| self.beta * (lp - r.ln()))
            .collect()
    }

    /// The implied rewards of all basis policies as a linear basis over
    /// one-hot items, normalised so each prompt's log-partition is dropped.
    pub fn implied_basis(&self) -> Result<RewardBasisModel> {
        let basis = (0..self.rank()).flat_map(|j| self.log_ratios(j)).collect();
        let rank = self.rank();
        let dim = self.shape.cells();
        if rank > dim {
            return Err(Error::InvalidArgument(format!("rank {rank} exceeds {dim} cells")));
        }
        RewardBasisModel::new(rank, dim, basis)
    }

    /// Checks every basis row is a distribution.
    pub fn check_policies(&self) -> Result<()> {
        for j in 0..self.rank() {
            check_row_stochastic(&self.policy(j), self.shape, "basis policy")?;
        }
        Ok(())
    }
}

/// `pi*(y|x) = pi_ref(y|x) exp(r(x, y) / beta) / Z(x)`, with `Z` the exact
/// row sum (computed after a max shift).
pub fn kl_regularized_optimum(rewards: &[f64], shape: TabularShape, ref_policy: &[f64], beta: f64) -> Result<Vec<f64>> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
    }
    Error::check_dim(shape.cells(), rewards.len())?;
    Error::check_dim(shape.cells(), ref_policy.len())?;
    let mut out = Vec::with_capacity(rewards.len());
    for (r, p) in rewards.chunks(shape.responses).zip(ref_policy.chunks(shape.responses)) {
        let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let unnorm: Vec<f64> = r.iter().zip(p).map(|(ri, pi)| pi * ((ri - max) / beta).exp()).collect();
        let z: f64 = unnorm.iter().sum();
        out.extend(unnorm.iter().map(|u| u / z));
    }
    Ok(out)
}

/// `beta * (log pi_j(y|x)/pi_ref(y|x) - log pi_j(y'|x)/pi_ref(y'|x))`.
pub fn implied_reward_diff(set: &TabularPolicySet, j: usize, prompt: usize, y: usize, y_alt: usize) -> Result<f64> {
    let shape = set.shape;
    if j >= set.rank() || prompt >= shape.prompts || y >= shape.responses || y_alt >= shape.responses {
        return Err(Error::InvalidArgument("policy index out of range".into()));
    }
    let row = &set.basis_logits[j][prompt * shape.responses..(prompt + 1) * shape.responses];
    let probs = softmax(row);
    let refs = &set.ref_policy[prompt * shape.responses..(prompt + 1) * shape.responses];
    for resp in [y, y_alt] {
        if probs[resp] == 0.0 || refs[resp] <= 0.0 {
            return Err(Error::ZeroProbability { prompt, response: resp });
        }
    }
    let lr = |k: usize| probs[k].ln() - refs[k].ln();
    Ok(set.beta * (lr(y) - lr(y_alt)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub rank: usize,
    pub beta: f64,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub tol: f64,
    pub seed: u64,
    /// Std of the Gaussian seen-user weight logits at initialization. The
    /// basis starts at the reference policy, so this is what breaks the
    /// symmetry between basis policies.
    pub weight_init_scale: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            rank: 2,
            beta: 1.0,
            adam: AdamConfig::with_lr(0.1),
            epochs: 500,
            tol: 1e-8,
            seed: 0,
            weight_init_scale: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPolicyBasis {
    pub policies: TabularPolicySet,
    pub seen_weights: BTreeMap<String, UserWeights>,
    pub telemetry: Telemetry,
}

/// (prompt, chosen, rejected) cells of one record.
type CellTriple = (usize, usize, usize);

struct TabularData {
    users: Vec<(String, Vec<CellTriple>)>,
}

impl TabularData {
    fn new(data: &PreferenceDataset, shape: TabularShape) -> Result<Self> {
        ensure_valid(data)?;
        Error::check_dim(shape.cells(), data.dim())?;
        let users = data
            .user_index()
            .iter()
            .map(|(u, pos)| {
                let recs = pos
                    .iter()
                    .map(|&p| shape.decode_record(data.record(p)))
                    .collect::<Result<Vec<_>>>()?;
                Ok((u.clone(), recs))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TabularData { users })
    }
}

/// Seen-user policy-basis objective: per-user mean logistic loss of the
/// weighted implied reward differences, summed over users.
pub fn policy_basis_objective(
    set: &TabularPolicySet,
    weights: &BTreeMap<String, UserWeights>,
    data: &PreferenceDataset,
) -> Result<f64> {
    let tab = TabularData::new(data, set.shape)?;
    let ratios: Vec<Vec<f64>> = (0..set.rank()).map(|j| set.log_ratios(j)).collect();
    let mut total = 0.0;
    for (user, recs) in &tab.users {
        let w = weights.get(user).ok_or_else(|| Error::MissingWeights(user.clone()))?;
        Error::check_dim(set.rank(), w.len())?;
        let mut s = 0.0;
        for &(x, c, r) in recs {
            let z: f64 = (0..set.rank())
                .map(|j| w.as_slice()[j] * (ratios[j][set.shape.index(x, c)] - ratios[j][set.shape.index(x, r)]))
                .sum();
            s += logistic_loss_unchecked(z);
        }
        total += s / recs.len() as f64;
    }
    Ok(total)
}

/// Mean DPO loss of a single policy given by `logits`.
pub fn dpo_objective(
    logits: &[f64],
    ref_policy: &[f64],
    shape: TabularShape,
    beta: f64,
    data: &PreferenceDataset,
) -> Result<f64> {
    let tab = TabularData::new(data, shape)?;
    Error::check_dim(shape.cells(), logits.len())?;
    let logp = log_softmax_rows(logits, shape.responses);
    let mut total = 0.0;
    let mut n = 0usize;
    for (_, recs) in &tab.users {
        for &(x, c, r) in recs {
            let (ic, ir) = (shape.index(x, c), shape.index(x, r));
            let z = beta * (logp[ic] - ref_policy[ic].ln()) - beta * (logp[ir] - ref_policy[ir].ln());
            total += logistic_loss_unchecked(z);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyRecords);
    }
    Ok(total / n as f64)
}

/// Minimises the mean DPO loss of one policy with Adam, starting from the reference.
pub fn train_dpo(
    data: &PreferenceDataset,
    shape: TabularShape,
    ref_policy: &[f64],
    config: &PolicyConfig,
) -> Result<Vec<f64>> {
    let set = TabularPolicySet::at_reference(shape, 1, config.beta, ref_policy.to_vec())?;
    let tab = TabularData::new(data, shape)?;
    let recs: Vec<(usize, usize, usize)> = tab.users.iter().flat_map(|(_, r)| r.iter().copied()).collect();
    let mut logits = set.basis_logits[0].clone();
    if recs.is_empty() {
        return Ok(logits);
    }
    let lref: Vec<f64> = ref_policy.iter().map(|p| p.ln()).collect();
    let inv_n = 1.0 / recs.len() as f64;
    let mut adam = AdamState::new(config.adam, logits.len());
    let mut grad = vec![0.0; logits.len()];
    for _ in 0..config.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for &(x, c, r) in &recs {
            let (ic, ir) = (shape.index(x, c), shape.index(x, r));
            // Row log-partitions cancel within a prompt.
            let z = config.beta * ((logits[ic] - lref[ic]) - (logits[ir] - lref[ir]));
            let s = -sigmoid(-z) * inv_n * config.beta;
            grad[ic] += s;
            grad[ir] -= s;
        }
        let before = logits.clone();
        adam.step(&mut logits, &grad)?;
        if logits.iter().zip(&before).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) < config.tol {
            break;
        }
    }
    Ok(logits)
}

/// Jointly fits the basis policies and every user's simplex weights.
///
/// Basis logits start at `log pi_ref`; user weight logits start at
/// `N(0, weight_init_scale^2)` draws from the policy-init stream.
pub fn train_policy_basis(
    data: &PreferenceDataset,
    shape: TabularShape,
    ref_policy: &[f64],
    config: &PolicyConfig,
) -> Result<TrainedPolicyBasis> {
    if config.rank == 0 {
        return Err(Error::InvalidArgument("rank must be at least 1".into()));
    }
    let mut set = TabularPolicySet::at_reference(shape, config.rank, config.beta, ref_policy.to_vec())?;
    let tab = TabularData::new(data, shape)?;
    let (rank, cells, beta) = (config.rank, shape.cells(), config.beta);
    let lref: Vec<f64> = ref_policy.iter().map(|p| p.ln()).collect();

    let mut params: Vec<f64> = set.basis_logits.concat();
    let n_basis = params.len();
    let mut init_rng = Seed(config.seed).derive(label::POLICY_INIT).rng();
    for _ in &tab.users {
        params.extend((0..rank).map(|_| config.weight_init_scale * init_rng.normal()));
    }
    let mut adam = AdamState::new(config.adam, params.len());
    let mut grads = vec![0.0; params.len()];
    let mut telemetry = Telemetry::default();
    let mut best = f64::INFINITY;
    let mut w = vec![0.0; rank];
    let mut grad_w = vec![0.0; rank];
    let mut diff = vec![0.0; rank];

    if !tab.users.is_empty() {
        for epoch in 0..config.epochs {
            let start = params.clone();
            grads.iter_mut().for_each(|g| *g = 0.0);
            let mut objective = 0.0;
            for (slot, (_, recs)) in tab.users.iter().enumerate() {
                let off = n_basis + slot * rank;
                softmax_into(&params[off..off + rank], &mut w);
                grad_w.iter_mut().for_each(|g| *g = 0.0);
                let inv_n = 1.0 / recs.len() as f64;
                for &(x, c, r) in recs {
                    let (ic, ir) = (shape.index(x, c), shape.index(x, r));
                    for (j, d) in diff.iter_mut().enumerate() {
                        let th = &params[j * cells..(j + 1) * cells];
                        *d = beta * ((th[ic] - lref[ic]) - (th[ir] - lref[ir]));
                    }
                    let z: f64 = w.iter().zip(&diff).map(|(a, b)| a * b).sum();
                    let loss = logistic_loss_unchecked(z);
                    if !loss.is_finite() {
                        return Err(Error::NonFiniteLoss { epoch, record: 0 });
                    }
                    objective += loss * inv_n;
                    let s = -sigmoid(-z) * inv_n;
                    for j in 0..rank {
                        let g = s * w[j] * beta;
                        grads[j * cells + ic] += g;
                        grads[j * cells + ir] -= g;
                        grad_w[j] += s * diff[j];
                    }
                }
                chain_grad_into(&grad_w, &w, &mut grads[off..off + rank]);
            }
            adam.step(&mut params, &grads)?;
            best = best.min(objective);
            let max_change = params.iter().zip(&start).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let simplex_violation = (0..tab.users.len())
                .map(|slot| {
                    let off = n_basis + slot * rank;
                    UserWeights::from_softmax_unchecked(softmax(&params[off..off + rank])).simplex_violation()
                })
                .fold(0.0f64, f64::max);
            telemetry.epochs.push(EpochStats {
                epoch,
                objective,
                best_objective: best,
                simplex_violation,
                max_change,
            });
            if max_change < config.tol {
                telemetry.converged = true;
                break;
            }
        }
    }

    let seen_weights = tab
        .users
        .iter()
        .enumerate()
        .map(|(slot, (u, _))| {
            let off = n_basis + slot * rank;
            (u.clone(), UserWeights::from_softmax_unchecked(softmax(&params[off..off + rank])))
        })
        .collect();
    set.basis_logits = params[..n_basis].chunks(cells).map(<[f64]>::to_vec).collect();
    set.check_policies()?;
    Ok(TrainedPolicyBasis {
        policies: set,
        seen_weights,
        telemetry,
    })
}

/// Per-record `B`-vectors of implied reward differences, row-major.
fn implied_differences(set: &TabularPolicySet, records: &[ComparisonRecord]) -> Result<Vec<f64>> {
    let ratios: Vec<Vec<f64>> = (0..set.rank()).map(|j| set.log_ratios(j)).collect();
    let mut out = Vec::with_capacity(records.len() * set.rank());
    for rec in records {
        let (x, c, r) = set.shape.decode_record(rec)?;
        let (ic, ir) = (set.shape.index(x, c), set.shape.index(x, r));
        out.extend(ratios.iter().map(|lr| lr[ic] - lr[ir]));
    }
    Ok(out)
}

/// New-user weights against frozen basis policies.
pub fn fewshot_policy_weights(
    set: &TabularPolicySet,
    records: &[ComparisonRecord],
    config: &FewshotConfig,
) -> Result<UserWeights> {
    fit_simplex_weights(&implied_differences(set, records)?, set.rank(), config)
}

/// Unnormalised few-shot objective at `w`.
pub fn fewshot_policy_objective(set: &TabularPolicySet, w: &UserWeights, records: &[ComparisonRecord]) -> Result<f64> {
    Error::check_dim(set.rank(), w.len())?;
    let diffs = implied_differences(set, records)?;
    Ok(diffs
        .chunks(set.rank())
        .map(|d| logistic_loss_unchecked(d.iter().zip(w.as_slice()).map(|(a, b)| a * b).sum()))
        .sum())
}

/// Fraction of records whose weighted implied reward difference is strictly positive.
pub fn policy_accuracy(set: &TabularPolicySet, w: &UserWeights, records: &[ComparisonRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    Error::check_dim(set.rank(), w.len())?;
    let diffs = implied_differences(set, records)?;
    let ok = diffs
        .chunks(set.rank())
        .filter(|d| d.iter().zip(w.as_slice()).map(|(a, b)| a * b).sum::<f64>() > 0.0)
        .count();
    Ok(ok as f64 / records.len() as f64)
}

/// Uniform reference rows.
pub fn uniform_reference(shape: TabularShape) -> Vec<f64> {
    vec![1.0 / shape.responses as f64; shape.cells()]
}

/// Two equally sized groups over two responses per prompt: group `a`
/// always prefers response 0, group `b` response 1. Every user labels every
/// prompt once.
pub fn two_group_instance(prompts: usize, users_per_group: usize) -> (TabularShape, PreferenceDataset) {
    let shape = TabularShape { prompts, responses: 2 };
    let mut records = Vec::new();
    for (group, (c, r)) in [('a', (0, 1)), ('b', (1, 0))] {
        for u in 0..users_per_group {
            let id = format!("{group}{u:03}");
            for x in 0..prompts {
                records.push(shape.record(&id, x, c, r));
            }
        }
    }
    (shape, PreferenceDataset::from_records(shape.cells(), records))
}

/// Labels `n` comparisons for a user mixing the basis policies with `w`:
/// a uniform prompt, two distinct uniform responses, ordered by the
/// weighted implied reward (deterministic) or sampled from it.
pub fn sample_policy_records(
    set: &TabularPolicySet,
    user: &str,
    w: &UserWeights,
    n: usize,
    mode: LabelMode,
    rng: &mut LoreRng,
) -> Result<Vec<ComparisonRecord>> {
    Error::check_dim(set.rank(), w.len())?;
    let shape = set.shape;
    if shape.responses < 2 {
        return Err(Error::InvalidArgument("need at least two responses".into()));
    }
    let ratios: Vec<Vec<f64>> = (0..set.rank()).map(|j| set.log_ratios(j)).collect();
    (0..n)
        .map(|_| {
            let x = rng.below(shape.prompts as u64) as usize;
            let pair = rng.sample_indices(shape.responses, 2);
            let scores: Vec<f64> = pair
                .iter()
                .map(|&y| {
                    ratios
                        .iter()
                        .zip(w.as_slice())
                        .map(|(lr, wj)| wj * lr[shape.index(x, y)])
                        .sum()
                })
                .collect();
            let (c, r) = label_indices(&scores, mode, rng)?;
            Ok(shape.record(user, x, pair[c], pair[r]))
        })
        .collect()
}

/// Users with Dirichlet(alpha) mixtures of the policies in `truth`.
pub fn sample_policy_dataset(
    truth: &TabularPolicySet,
    n_users: usize,
    alpha: f64,
    records_per_user: usize,
    seed: u64,
) -> Result<(PreferenceDataset, BTreeMap<String, UserWeights>)> {
    let s = Seed(seed);
    let mut wrng = s.derive(label::USER_WEIGHTS).rng();
    let mut rrng = s.derive(label::PAIRING).rng();
    let mut weights = BTreeMap::new();
    let mut records = Vec::new();
    for u in 0..n_users {
        let id = format!("p{u:04}");
        let w = sample_dirichlet(alpha, truth.rank(), &mut wrng)?;
        records.extend(sample_policy_records(truth, &id, &w, records_per_user, LabelMode::Deterministic, &mut rrng)?);
        weights.insert(id, w);
    }
    Ok((PreferenceDataset::from_records(truth.shape.cells(), records), weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::fewshot_adapt;

    fn random_instance(rng: &mut LoreRng, rank: usize) -> (TabularShape, Vec<f64>, Vec<f64>) {
        let shape = TabularShape {
            prompts: 1 + rng.below(5) as usize,
            responses: 2 + rng.below(5) as usize,
        };
        let raw: Vec<f64> = (0..shape.cells()).map(|_| 0.05 + rng.uniform()).collect();
        let mut ref_policy = Vec::new();
        for row in raw.chunks(shape.responses) {
            let s: f64 = row.iter().sum();
            ref_policy.extend(row.iter().map(|v| v / s));
        }
        let rewards: Vec<f64> = (0..shape.cells() * rank).map(|_| 2.0 * rng.normal()).collect();
        (shape, ref_policy, rewards)
    }

    #[test]
    fn constant_rewards_return_reference() {
        let shape = TabularShape { prompts: 2, responses: 3 };
        let refp = vec![0.2, 0.3, 0.5, 0.1, 0.1, 0.8];
        let rewards = vec![4.0, 4.0, 4.0, -1.0, -1.0, -1.0];
        let opt = kl_regularized_optimum(&rewards, shape, &refp, 0.7).unwrap();
        for (a, b) in opt.iter().zip(&refp) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn large_beta_stays_near_reference() {
        let shape = TabularShape { prompts: 2, responses: 3 };
        let refp = uniform_reference(shape);
        let rewards = vec![1.0, -2.0, 3.0, 0.5, 0.0, -0.5];
        let opt = kl_regularized_optimum(&rewards, shape, &refp, 1e6).unwrap();
        let dev = opt.iter().zip(&refp).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(dev < 1e-4);
    }

    #[test]
    fn hand_enumerated_optimum() {
        let shape = TabularShape { prompts: 1, responses: 3 };
        let rewards = [0.0, 2f64.ln(), 4f64.ln()];
        let opt = kl_regularized_optimum(&rewards, shape, &uniform_reference(shape), 1.0).unwrap();
        let expect = [1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0];
        for (a, b) in opt.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn optimum_rejects_bad_beta() {
        let shape = TabularShape { prompts: 1, responses: 2 };
        assert!(kl_regularized_optimum(&[0.0, 1.0], shape, &[0.5, 0.5], 0.0).is_err());
        assert!(kl_regularized_optimum(&[0.0], shape, &[0.5, 0.5], 1.0).is_err());
    }

    #[test]
    fn implied_reward_round_trip() {
        let mut rng = Seed(1).rng();
        for _ in 0..20 {
            let (shape, refp, rewards) = random_instance(&mut rng, 1);
            let beta = 0.2 + rng.uniform() * 3.0;
            let opt = kl_regularized_optimum(&rewards, shape, &refp, beta).unwrap();
            let set = TabularPolicySet::from_policies(shape, beta, refp, &[opt]).unwrap();
            for x in 0..shape.prompts {
                for y in 0..shape.responses {
                    for y2 in 0..shape.responses {
                        let got = implied_reward_diff(&set, 0, x, y, y2).unwrap();
                        let want = rewards[shape.index(x, y)] - rewards[shape.index(x, y2)];
                        assert!((got - want).abs() <= 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn implied_reward_trivial_cases() {
        let shape = TabularShape { prompts: 2, responses: 3 };
        let set = TabularPolicySet::at_reference(shape, 2, 1.5, vec![0.2, 0.3, 0.5, 0.6, 0.3, 0.1]).unwrap();
        for x in 0..2 {
            for y in 0..3 {
                for y2 in 0..3 {
                    assert!(implied_reward_diff(&set, 1, x, y, y2).unwrap().abs() < 1e-15);
                }
            }
        }
        let set = TabularPolicySet::new(shape, 1.0, uniform_reference(shape), vec![vec![0.0, 3.0, -2.0, 1.0, 1.0, 9.0]])
            .unwrap();
        assert_eq!(implied_reward_diff(&set, 0, 1, 2, 2).unwrap(), 0.0);
        assert!(implied_reward_diff(&set, 1, 0, 0, 1).is_err());
        let dead = TabularPolicySet::new(shape, 1.0, uniform_reference(shape), vec![vec![0.0, 0.0, -1e6, 0.0, 0.0, 0.0]])
            .unwrap();
        assert!(matches!(
            implied_reward_diff(&dead, 0, 0, 2, 0),
            Err(Error::ZeroProbability { prompt: 0, response: 2 })
        ));
    }

    #[test]
    fn reference_must_be_stochastic() {
        let shape = TabularShape { prompts: 1, responses: 2 };
        assert!(TabularPolicySet::at_reference(shape, 1, 1.0, vec![0.5, 0.6]).is_err());
        assert!(TabularPolicySet::at_reference(shape, 1, 1.0, vec![1.0, 0.0]).is_err());
        assert!(TabularPolicySet::at_reference(shape, 1, -1.0, vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn one_hot_encoding_round_trip() {
        let shape = TabularShape { prompts: 3, responses: 4 };
        let r = shape.record("u", 2, 1, 3);
        assert_eq!(shape.decode_record(&r).unwrap(), (2, 1, 3));
        let bad = ComparisonRecord::new("u", shape.one_hot(0, 1), shape.one_hot(1, 1));
        assert!(shape.decode_record(&bad).is_err());
        assert!(shape.decode(&FeatureVector(vec![0.0; 12])).is_err());
    }

    #[test]
    fn single_policy_objective_is_dpo() {
        let mut rng = Seed(4).rng();
        let shape = TabularShape { prompts: 3, responses: 4 };
        let refp = uniform_reference(shape);
        let logits: Vec<f64> = (0..12).map(|_| rng.normal()).collect();
        let set = TabularPolicySet::new(shape, 0.8, refp.clone(), vec![logits.clone()]).unwrap();
        let recs: Vec<_> = (0..15)
            .map(|_| {
                let p = rng.sample_indices(4, 2);
                shape.record("solo", rng.below(3) as usize, p[0], p[1])
            })
            .collect();
        let data = PreferenceDataset::from_records(12, recs);
        let mut w = BTreeMap::new();
        w.insert("solo".to_string(), UserWeights::uniform(1));
        let a = policy_basis_objective(&set, &w, &data).unwrap();
        let b = dpo_objective(&logits, &refp, shape, 0.8, &data).unwrap();
        assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn zero_data_keeps_reference() {
        let shape = TabularShape { prompts: 2, responses: 3 };
        let refp = vec![0.2, 0.3, 0.5, 0.6, 0.3, 0.1];
        let t = train_policy_basis(&PreferenceDataset::from_records(6, []), shape, &refp, &PolicyConfig::default()).unwrap();
        for j in 0..2 {
            for (a, b) in t.policies.policy(j).iter().zip(&refp) {
                assert!((a - b).abs() < 1e-15);
            }
        }
        assert!(t.seen_weights.is_empty());
    }

    #[test]
    fn single_user_rank_one_matches_dpo_decisions() {
        let shape = TabularShape { prompts: 4, responses: 3 };
        let refp = uniform_reference(shape);
        let mut rng = Seed(8).rng();
        let truth: Vec<f64> = (0..12).map(|_| rng.normal()).collect();
        let recs: Vec<_> = (0..40)
            .map(|_| {
                let x = rng.below(4) as usize;
                let p = rng.sample_indices(3, 2);
                let (c, r) = if truth[shape.index(x, p[0])] > truth[shape.index(x, p[1])] {
                    (p[0], p[1])
                } else {
                    (p[1], p[0])
                };
                shape.record("solo", x, c, r)
            })
            .collect();
        let data = PreferenceDataset::from_records(12, recs.clone());
        let config = PolicyConfig {
            rank: 1,
            ..Default::default()
        };
        let basis = train_policy_basis(&data, shape, &refp, &config).unwrap();
        let dpo = train_dpo(&data, shape, &refp, &config).unwrap();
        let dpo_set = TabularPolicySet::new(shape, config.beta, refp.clone(), vec![dpo]).unwrap();
        for r in &recs {
            let (x, c, rj) = shape.decode_record(r).unwrap();
            let a = implied_reward_diff(&basis.policies, 0, x, c, rj).unwrap();
            let b = implied_reward_diff(&dpo_set, 0, x, c, rj).unwrap();
            assert_eq!(a > 0.0, b > 0.0);
        }
    }

    #[test]
    fn two_groups_split_across_basis() {
        let (shape, data) = two_group_instance(6, 10);
        let config = PolicyConfig::default();
        let t = train_policy_basis(&data, shape, &uniform_reference(shape), &config).unwrap();
        assert!(t.telemetry.max_simplex_violation() <= 1e-9);
        let dominant = |prefix: char| -> Vec<usize> {
            t.seen_weights
                .iter()
                .filter(|(u, _)| u.starts_with(prefix))
                .map(|(_, w)| {
                    assert!(w.as_slice().iter().copied().fold(0.0, f64::max) >= 0.8, "{w:?}");
                    if w.as_slice()[0] > w.as_slice()[1] { 0 } else { 1 }
                })
                .collect()
        };
        let a = dominant('a');
        let b = dominant('b');
        assert!(a.iter().all(|&k| k == a[0]));
        assert!(b.iter().all(|&k| k == b[0]));
        assert_ne!(a[0], b[0]);
        for (u, w) in &t.seen_weights {
            let recs: Vec<_> = data.user_records(u).cloned().collect();
            assert!(policy_accuracy(&t.policies, w, &recs).unwrap() >= 0.95);
        }
    }

    #[test]
    fn fewshot_policy_weights_cases() {
        let mut rng = Seed(12).rng();
        let shape = TabularShape { prompts: 5, responses: 4 };
        let refp = uniform_reference(shape);
        let set = TabularPolicySet::new(
            shape,
            1.0,
            refp,
            vec![(0..20).map(|_| 2.0 * rng.normal()).collect(), (0..20).map(|_| 2.0 * rng.normal()).collect()],
        )
        .unwrap();
        let cfg = FewshotConfig::default();
        assert_eq!(fewshot_policy_weights(&set, &[], &cfg).unwrap(), UserWeights::uniform(2));

        let recs = sample_policy_records(&set, "n", &UserWeights::one_hot(2, 1), 30, LabelMode::Deterministic, &mut rng)
            .unwrap();
        let before = set.clone();
        let w = fewshot_policy_weights(&set, &recs, &cfg).unwrap();
        assert_eq!(before, set);
        assert!(w.as_slice()[1] >= 0.9, "{w:?}");
        let obj = |w0: f64| fewshot_policy_objective(&set, &UserWeights::new(vec![w0, 1.0 - w0]).unwrap(), &recs).unwrap();
        let grid = (0..=1000).map(|k| obj(k as f64 / 1000.0)).fold(f64::INFINITY, f64::min);
        assert!((obj(w.as_slice()[0]) - grid).abs() <= 0.02);

        // Same problem through the linear reward basis of implied rewards.
        let via_basis = fewshot_adapt(&set.implied_basis().unwrap(), &recs, &cfg).unwrap();
        assert!((obj(via_basis.as_slice()[0]) - obj(w.as_slice()[0])).abs() <= 0.02);
    }
}
