//! Synthetic preference benchmarks with a known low-rank ground truth.
//!
//! A benchmark has a unit-norm true basis `A*` (`B_true x D`), one
//! Dirichlet(alpha) weight vector per user, and a pool of prompts, each with
//! a fixed number of candidate responses whose embeddings are i.i.d.
//! `N(0, 1/D)` rounded to `f32`. A user's score for a candidate is
//! `w^T A* e`. Seen users label `comparisons_per_seen_user` distinct
//! training prompts, unseen users label `fewshot_per_unseen_user` distinct
//! training prompts, and every user labels every test prompt.
//!
//! Random streams (see [`crate::rng`]) are derived from the config seed in
//! this order of use: true basis, user weights (seen users then unseen, in id
//! order), item embeddings (training prompts then test prompts), prompt
//! assignment, and label noise.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::kernel::{dot, mat_vec, sigmoid};
use crate::rng::{label, LoreRng, Seed};
use crate::types::{ComparisonRecord, FeatureVector, PreferenceDataset, RewardBasisModel, SplitSpec, UserWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelMode {
    /// Chosen is the best-scored candidate, rejected the worst.
    Deterministic,
    /// Two distinct candidates drawn uniformly, order drawn from the BT probability.
    BtSample,
}

impl LabelMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelMode::Deterministic => "deterministic",
            LabelMode::BtSample => "bt_sample",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "deterministic" => Some(LabelMode::Deterministic),
            "bt_sample" => Some(LabelMode::BtSample),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub dim: usize,
    pub true_rank: usize,
    pub alpha: f64,
    pub n_seen: usize,
    pub n_unseen: usize,
    pub prompts_train: usize,
    pub prompts_test: usize,
    pub responses_per_prompt: usize,
    pub comparisons_per_seen_user: usize,
    pub fewshot_per_unseen_user: usize,
    pub label_mode: LabelMode,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 0,
            dim: 32,
            true_rank: 5,
            alpha: 0.001,
            n_seen: 200,
            n_unseen: 200,
            prompts_train: 500,
            prompts_test: 50,
            responses_per_prompt: 8,
            comparisons_per_seen_user: 45,
            fewshot_per_unseen_user: 9,
            label_mode: LabelMode::Deterministic,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        for (name, v) in [
            ("dim", self.dim),
            ("true_rank", self.true_rank),
            ("n_seen", self.n_seen),
            ("n_unseen", self.n_unseen),
            ("prompts_train", self.prompts_train),
            ("prompts_test", self.prompts_test),
            ("comparisons_per_seen_user", self.comparisons_per_seen_user),
            ("fewshot_per_unseen_user", self.fewshot_per_unseen_user),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.responses_per_prompt < 2 {
            return bad("responses_per_prompt must be at least 2".into());
        }
        if self.true_rank > self.dim {
            return bad(format!("true_rank {} exceeds dim {}", self.true_rank, self.dim));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Rows have unit Euclidean norm.
    pub true_basis: RewardBasisModel,
    pub user_weights: BTreeMap<String, UserWeights>,
}

impl GroundTruth {
    /// Mean of the true basis rows, used as the frozen reference scorer.
    pub fn reference_vector(&self) -> Vec<f64> {
        let (rank, dim) = (self.true_basis.rank(), self.true_basis.dim());
        (0..dim)
            .map(|k| (0..rank).map(|j| self.true_basis.row(j)[k]).sum::<f64>() / rank as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub dataset: PreferenceDataset,
    pub split: SplitSpec,
    pub truth: GroundTruth,
}

impl Benchmark {
    pub fn train(&self) -> PreferenceDataset {
        self.split.train_set(&self.dataset)
    }

    pub fn fewshot(&self) -> PreferenceDataset {
        self.split.fewshot_set(&self.dataset)
    }

    pub fn test_seen(&self) -> PreferenceDataset {
        self.split.test_seen_set(&self.dataset)
    }

    pub fn test_unseen(&self) -> PreferenceDataset {
        self.split.test_unseen_set(&self.dataset)
    }
}

/// `ln X` for `X ~ Gamma(alpha, 1)`.
///
/// Marsaglia-Tsang for shape `>= 1`; for `alpha < 1` the boost
/// `Gamma(alpha + 1) * U^(1/alpha)` is applied in log space, since for tiny
/// `alpha` the product underflows `f64`.
pub fn sample_log_gamma(alpha: f64, rng: &mut LoreRng) -> f64 {
    if alpha < 1.0 {
        let boost = rng.uniform_open0().ln() / alpha;
        return sample_log_gamma(alpha + 1.0, rng) + boost;
    }
    let d = alpha - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let (x, v) = loop {
            let x = rng.normal();
            let v = 1.0 + c * x;
            if v > 0.0 {
                break (x, v * v * v);
            }
        };
        let u = rng.uniform_open0();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return (d * v).ln();
        }
    }
}

/// `X ~ Gamma(alpha, 1)`. May underflow to zero for very small `alpha`.
pub fn sample_gamma(alpha: f64, rng: &mut LoreRng) -> f64 {
    sample_log_gamma(alpha, rng).exp()
}

/// Symmetric Dirichlet(alpha) on `rank` components, normalised in log space.
pub fn sample_dirichlet(alpha: f64, rank: usize, rng: &mut LoreRng) -> Result<UserWeights> {
    if !(alpha > 0.0 && alpha.is_finite()) || rank == 0 {
        return Err(Error::InvalidArgument(format!(
            "Dirichlet needs alpha > 0 and rank >= 1 (alpha {alpha}, rank {rank})"
        )));
    }
    let logs: Vec<f64> = (0..rank).map(|_| sample_log_gamma(alpha, rng)).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = raw.iter().sum();
    UserWeights::new(raw.iter().map(|x| x / sum).collect())
}

/// Unit-norm rows with i.i.d. Gaussian directions.
pub fn sample_true_basis(rank: usize, dim: usize, rng: &mut LoreRng) -> Result<RewardBasisModel> {
    let mut rows = Vec::with_capacity(rank);
    while rows.len() < rank {
        let row: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let norm = dot(&row, &row).sqrt();
        if norm > 0.0 {
            rows.push(row.iter().map(|x| x / norm).collect());
        }
    }
    RewardBasisModel::from_rows(&rows)
}

/// Candidate embeddings for `n_prompts` prompts.
pub fn generate_items(
    n_prompts: usize,
    responses_per_prompt: usize,
    dim: usize,
    rng: &mut LoreRng,
) -> Vec<Vec<FeatureVector>> {
    let scale = 1.0 / (dim as f64).sqrt();
    (0..n_prompts)
        .map(|_| {
            (0..responses_per_prompt)
                .map(|_| FeatureVector((0..dim).map(|_| (scale * rng.normal()) as f32 as f64).collect()))
                .collect()
        })
        .collect()
}

/// `w^T A* e` for every candidate.
pub fn true_scores(w: &UserWeights, basis: &RewardBasisModel, candidates: &[FeatureVector]) -> Result<Vec<f64>> {
    Error::check_dim(basis.rank(), w.len())?;
    let mut r = vec![0.0; basis.rank()];
    candidates
        .iter()
        .map(|c| {
            Error::check_dim(basis.dim(), c.len())?;
            mat_vec(basis.basis(), basis.rank(), basis.dim(), c.as_slice(), &mut r);
            Ok(dot(w.as_slice(), &r))
        })
        .collect()
}

/// Indices `(chosen, rejected)` for one labeled pair.
///
/// Deterministic mode takes the strict argmax and argmin of `scores`, ties
/// going to the lowest index. Sampled mode draws two distinct indices
/// uniformly, then orders them with the Bradley-Terry probability.
pub fn label_indices(scores: &[f64], mode: LabelMode, rng: &mut LoreRng) -> Result<(usize, usize)> {
    if scores.len() < 2 {
        return Err(Error::InvalidArgument("need at least two candidates".into()));
    }
    match mode {
        LabelMode::Deterministic => {
            let mut best = 0;
            let mut worst = 0;
            for (i, &s) in scores.iter().enumerate().skip(1) {
                if s > scores[best] {
                    best = i;
                }
                if s < scores[worst] {
                    worst = i;
                }
            }
            Ok((best, worst))
        }
        LabelMode::BtSample => {
            let n = scores.len() as u64;
            let i = rng.below(n) as usize;
            let mut j = rng.below(n - 1) as usize;
            if j >= i {
                j += 1;
            }
            let p = sigmoid(scores[i] - scores[j]);
            Ok(if rng.uniform() < p { (i, j) } else { (j, i) })
        }
    }
}

pub fn label_pair(
    user_id: &str,
    user_weights: &UserWeights,
    true_basis: &RewardBasisModel,
    candidates: &[FeatureVector],
    mode: LabelMode,
    rng: &mut LoreRng,
) -> Result<ComparisonRecord> {
    let scores = true_scores(user_weights, true_basis, candidates)?;
    let (c, r) = label_indices(&scores, mode, rng)?;
    Ok(ComparisonRecord::new(user_id, candidates[c].clone(), candidates[r].clone()))
}

fn user_ids(prefix: char, n: usize) -> Vec<String> {
    let width = 4.max((n.max(1) - 1).to_string().len());
    (0..n).map(|i| format!("{prefix}{i:0width$}")).collect()
}

/// Assembles the four standard splits for `config`.
pub fn build_benchmark(config: &GeneratorConfig) -> Result<Benchmark> {
    config.validate()?;
    let need = config.comparisons_per_seen_user.max(config.fewshot_per_unseen_user);
    if need > config.prompts_train {
        return Err(Error::Insufficient(format!(
            "{need} distinct training prompts per user requested, only {} available",
            config.prompts_train
        )));
    }
    let seed = Seed(config.seed);
    let true_basis = sample_true_basis(config.true_rank, config.dim, &mut seed.derive(label::TRUE_BASIS).rng())?;

    let seen = user_ids('s', config.n_seen);
    let unseen = user_ids('u', config.n_unseen);
    let mut weight_rng = seed.derive(label::USER_WEIGHTS).rng();
    let mut user_weights = BTreeMap::new();
    for u in seen.iter().chain(&unseen) {
        user_weights.insert(u.clone(), sample_dirichlet(config.alpha, config.true_rank, &mut weight_rng)?);
    }

    let mut item_rng = seed.derive(label::ITEMS).rng();
    let train_items = generate_items(config.prompts_train, config.responses_per_prompt, config.dim, &mut item_rng);
    let test_items = generate_items(config.prompts_test, config.responses_per_prompt, config.dim, &mut item_rng);

    let mut pair_rng = seed.derive(label::PAIRING).rng();
    let mut label_rng = seed.derive(label::LABELS).rng();
    let mut label_prompts = |users: &[String], prompts: &dyn Fn(&mut LoreRng) -> Vec<usize>, items: &[Vec<FeatureVector>]| {
        let mut b = PreferenceDataset::builder(config.dim);
        for u in users {
            b.add_user(u.clone());
            for p in prompts(&mut pair_rng) {
                b.push(label_pair(
                    u,
                    &user_weights[u],
                    &true_basis,
                    &items[p],
                    config.label_mode,
                    &mut label_rng,
                )?);
            }
        }
        Ok::<_, Error>(b.build())
    };
    let n_train = config.prompts_train;
    let train = label_prompts(
        &seen,
        &|rng| rng.sample_indices(n_train, config.comparisons_per_seen_user),
        &train_items,
    )?;
    let fewshot = label_prompts(
        &unseen,
        &|rng| rng.sample_indices(n_train, config.fewshot_per_unseen_user),
        &train_items,
    )?;
    let all_test = |_: &mut LoreRng| (0..config.prompts_test).collect::<Vec<_>>();
    let test_seen = label_prompts(&seen, &all_test, &test_items)?;
    let test_unseen = label_prompts(&unseen, &all_test, &test_items)?;

    let (dataset, split) = SplitSpec::assemble(&train, &fewshot, &test_seen, &test_unseen)?;
    Ok(Benchmark {
        dataset,
        split,
        truth: GroundTruth {
            true_basis,
            user_weights,
        },
    })
}
