//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Every key has a default; unknown
//! or repeated keys and badly typed values are errors. Lists are
//! comma-separated. The fingerprint hashes every resolved setting (plus the
//! accuracy aggregation rule), so any artifact can be traced to the exact
//! settings that produced it.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::read_file;
use crate::error::{Error, Result};
use crate::eval::AGGREGATION;
use crate::optim::AdamConfig;
use crate::policy::PolicyConfig;
use crate::synth::{GeneratorConfig, LabelMode};
use crate::trainer::{FewshotConfig, TrainConfig};

trait Value: Sized {
    fn parse(s: &str) -> Option<Self>;
    fn render(&self) -> String;
}

impl Value for usize {
    fn parse(s: &str) -> Option<Self> {
        s.parse().ok()
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl Value for u64 {
    fn parse(s: &str) -> Option<Self> {
        s.parse().ok()
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl Value for f64 {
    fn parse(s: &str) -> Option<Self> {
        s.parse().ok().filter(|v: &f64| v.is_finite())
    }
    fn render(&self) -> String {
        format!("{self:e}")
    }
}

impl Value for LabelMode {
    fn parse(s: &str) -> Option<Self> {
        LabelMode::parse(s)
    }
    fn render(&self) -> String {
        self.as_str().to_string()
    }
}

impl Value for Vec<usize> {
    fn parse(s: &str) -> Option<Self> {
        s.split(',').map(|t| t.trim().parse().ok()).collect()
    }
    fn render(&self) -> String {
        self.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
    }
}

macro_rules! run_config {
    ($($field:ident : $ty:ty = $default:expr, $doc:literal;)*) => {
        /// Every tunable setting of a run.
        #[derive(Debug, Clone, PartialEq)]
        pub struct RunConfig {
            $(#[doc = $doc] pub $field: $ty,)*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                RunConfig { $($field: $default,)* }
            }
        }

        impl RunConfig {
            /// `(key, description)` for every setting, in file order.
            pub const KEYS: &'static [(&'static str, &'static str)] = &[$((stringify!($field), $doc),)*];

            fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $(stringify!($field) => {
                        self.$field = <$ty as Value>::parse(value).ok_or_else(|| {
                            Error::Config(format!("bad value for `{key}`: {value:?}"))
                        })?;
                    })*
                    _ => return Err(Error::Config(format!("unknown key `{key}`"))),
                }
                Ok(())
            }

            /// `(key, rendered value)` pairs in file order.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$((stringify!($field), Value::render(&self.$field)),)*]
            }
        }
    };
}

run_config! {
    seed: u64 = 0, "Master seed; every random stream is derived from it.";
    dim: usize = 32, "Embedding dimension of synthetic items.";
    true_rank: usize = 5, "Rank of the synthetic ground-truth basis.";
    alpha: f64 = 0.001, "Dirichlet concentration of synthetic user weights.";
    n_seen: usize = 200, "Synthetic users in the training set.";
    n_unseen: usize = 200, "Synthetic users held out for few-shot adaptation.";
    prompts_train: usize = 500, "Synthetic prompts available for training comparisons.";
    prompts_test: usize = 50, "Synthetic prompts reserved for testing.";
    responses_per_prompt: usize = 8, "Candidate responses per synthetic prompt.";
    comparisons_per_seen_user: usize = 45, "Training comparisons per seen user.";
    fewshot_per_unseen_user: usize = 9, "Few-shot comparisons per unseen user.";
    label_mode: LabelMode = LabelMode::Deterministic, "`deterministic` (best vs worst) or `bt_sample`.";
    rank: usize = 5, "Basis rank B for training.";
    lr: f64 = 0.5, "Adam learning rate for joint training and the BT baseline.";
    epochs: usize = 500, "Epoch budget for joint training.";
    tol: f64 = 1e-8, "Early stop when no parameter moves more than this in an epoch.";
    batch_size: usize = 0, "Records per mini-batch; 0 means full batch.";
    fewshot_lr: f64 = 0.1, "Adam learning rate for few-shot adaptation.";
    fewshot_epochs: usize = 1000, "Epoch budget for few-shot adaptation.";
    fewshot_tol: f64 = 1e-8, "Early-stop threshold for few-shot adaptation.";
    curve_counts: Vec<usize> = vec![1, 3, 5, 7, 9], "Few-shot sizes swept by `curve`.";
    curve_repeats: usize = 20, "Repeats per few-shot size.";
    candidate_ranks: Vec<usize> = vec![1, 5, 20], "Ranks compared by `select-rank`.";
    validation_fraction: f64 = 0.2, "Share of each user's records held out by `select-rank`.";
    policy_rank: usize = 2, "Number of basis policies.";
    beta: f64 = 1.0, "KL-regularization strength of the policy basis.";
    policy_lr: f64 = 0.1, "Adam learning rate for policy-basis training.";
    policy_epochs: usize = 500, "Epoch budget for policy-basis training.";
    policy_weight_init: f64 = 0.1, "Std of initial user weight logits in policy-basis training.";
    policy_prompts: usize = 6, "Prompts of the built-in two-group tabular instance.";
    policy_users: usize = 20, "Users sampled for policy-basis training.";
    policy_alpha: f64 = 0.001, "Dirichlet concentration of users sampled from a tabular instance.";
    policy_records_per_user: usize = 30, "Comparisons per user sampled from a tabular instance.";
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(a, _)| a).trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_owned()) {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", i + 1)));
            }
            cfg.set(k, v).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", i + 1)),
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let text = std::str::from_utf8(&bytes).map_err(|_| Error::format(path, "config is not UTF-8"))?;
        Self::parse(text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.generator().validate().map_err(|e| Error::Config(e.to_string()))?;
        let positive = [
            ("rank", self.rank),
            ("curve_repeats", self.curve_repeats),
            ("policy_rank", self.policy_rank),
            ("policy_prompts", self.policy_prompts),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("`{k}` must be at least 1")));
            }
        }
        for (k, v) in [("lr", self.lr), ("fewshot_lr", self.fewshot_lr), ("policy_lr", self.policy_lr), ("beta", self.beta)] {
            if v <= 0.0 {
                return Err(Error::Config(format!("`{k}` must be positive")));
            }
        }
        if self.candidate_ranks.is_empty() || self.candidate_ranks.contains(&0) {
            return Err(Error::Config("`candidate_ranks` must list positive ranks".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("`validation_fraction` must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Canonical `key = value` text; parsing it yields the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    /// Documented defaults, suitable as a starting config file.
    pub fn documented_defaults() -> String {
        let mut s = String::new();
        for ((k, v), (_, doc)) in RunConfig::default().entries().into_iter().zip(Self::KEYS) {
            s.push_str(&format!("# {doc}\n{k} = {v}\n"));
        }
        s
    }

    /// First 16 hex digits of the SHA-256 of the canonical text.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_text().as_bytes());
        h.update(format!("aggregation = {AGGREGATION}\n").as_bytes());
        hex::encode(h.finalize())[..16].to_string()
    }

    pub fn generator(&self) -> GeneratorConfig {
        GeneratorConfig {
            seed: self.seed,
            dim: self.dim,
            true_rank: self.true_rank,
            alpha: self.alpha,
            n_seen: self.n_seen,
            n_unseen: self.n_unseen,
            prompts_train: self.prompts_train,
            prompts_test: self.prompts_test,
            responses_per_prompt: self.responses_per_prompt,
            comparisons_per_seen_user: self.comparisons_per_seen_user,
            fewshot_per_unseen_user: self.fewshot_per_unseen_user,
            label_mode: self.label_mode,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            rank: self.rank,
            adam: AdamConfig::with_lr(self.lr),
            epochs: self.epochs,
            tol: self.tol,
            batch_size: (self.batch_size > 0).then_some(self.batch_size),
            seed: self.seed,
        }
    }

    pub fn fewshot(&self) -> FewshotConfig {
        FewshotConfig {
            adam: AdamConfig::with_lr(self.fewshot_lr),
            epochs: self.fewshot_epochs,
            tol: self.fewshot_tol,
        }
    }

    pub fn policy(&self) -> PolicyConfig {
        PolicyConfig {
            rank: self.policy_rank,
            beta: self.beta,
            adam: AdamConfig::with_lr(self.policy_lr),
            epochs: self.policy_epochs,
            tol: self.tol,
            seed: self.seed,
            weight_init_scale: self.policy_weight_init,
        }
    }
}
