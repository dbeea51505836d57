//! Domain types shared by every stage of the pipeline.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};

/// Simplex tolerance used for `UserWeights` validation.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Embedding of one prompt/response pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        FeatureVector(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl From<Vec<f64>> for FeatureVector {
    fn from(v: Vec<f64>) -> Self {
        FeatureVector(v)
    }
}

/// One labeled comparison: `user_id` preferred `chosen` over `rejected`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRecord {
    pub user_id: String,
    pub chosen: FeatureVector,
    pub rejected: FeatureVector,
}

impl ComparisonRecord {
    pub fn new(user_id: impl Into<String>, chosen: FeatureVector, rejected: FeatureVector) -> Self {
        ComparisonRecord {
            user_id: user_id.into(),
            chosen,
            rejected,
        }
    }

    /// `e_c - e_r`. Panics if the two sides differ in length.
    pub fn difference(&self) -> Vec<f64> {
        assert_eq!(self.chosen.len(), self.rejected.len());
        self.chosen
            .0
            .iter()
            .zip(&self.rejected.0)
            .map(|(c, r)| c - r)
            .collect()
    }

    pub fn dim(&self) -> Result<usize> {
        Error::check_dim(self.chosen.len(), self.rejected.len())?;
        Ok(self.chosen.len())
    }
}

/// Ordered comparison records with a per-user index.
///
/// Datasets are assembled through [`DatasetBuilder`] and are immutable
/// afterwards. Users are indexed in lexicographic order of their ids.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceDataset {
    dim: usize,
    records: Vec<ComparisonRecord>,
    user_index: BTreeMap<String, Vec<usize>>,
}

impl PreferenceDataset {
    pub fn builder(dim: usize) -> DatasetBuilder {
        DatasetBuilder {
            dim,
            records: Vec::new(),
            user_index: BTreeMap::new(),
        }
    }

    pub fn from_records(dim: usize, records: impl IntoIterator<Item = ComparisonRecord>) -> Self {
        let mut b = Self::builder(dim);
        for r in records {
            b.push(r);
        }
        b.build()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[ComparisonRecord] {
        &self.records
    }

    pub fn record(&self, pos: usize) -> &ComparisonRecord {
        &self.records[pos]
    }

    pub fn user_index(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.user_index
    }

    pub fn users(&self) -> impl Iterator<Item = &str> {
        self.user_index.keys().map(String::as_str)
    }

    pub fn num_users(&self) -> usize {
        self.user_index.len()
    }

    pub fn user_records(&self, user: &str) -> impl Iterator<Item = &ComparisonRecord> {
        self.user_index
            .get(user)
            .into_iter()
            .flatten()
            .map(|&i| &self.records[i])
    }

    /// New dataset holding the records at `positions`, in that order.
    pub fn subset(&self, positions: &[usize]) -> PreferenceDataset {
        PreferenceDataset::from_records(self.dim, positions.iter().map(|&i| self.records[i].clone()))
    }

    /// Concatenation of several datasets sharing one dimension.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a PreferenceDataset>) -> Result<Self> {
        let mut dim = None;
        let mut records = Vec::new();
        for p in parts {
            match dim {
                None => dim = Some(p.dim),
                Some(d) => Error::check_dim(d, p.dim)?,
            }
            records.extend(p.records.iter().cloned());
        }
        Ok(PreferenceDataset::from_records(dim.unwrap_or(0), records))
    }
}

#[derive(Debug)]
pub struct DatasetBuilder {
    dim: usize,
    records: Vec<ComparisonRecord>,
    user_index: BTreeMap<String, Vec<usize>>,
}

impl DatasetBuilder {
    pub fn push(&mut self, record: ComparisonRecord) -> &mut Self {
        let pos = self.records.len();
        self.user_index.entry(record.user_id.clone()).or_default().push(pos);
        self.records.push(record);
        self
    }

    /// Registers a user that may end up with zero records.
    pub fn add_user(&mut self, user: impl Into<String>) -> &mut Self {
        self.user_index.entry(user.into()).or_default();
        self
    }

    pub fn build(self) -> PreferenceDataset {
        PreferenceDataset {
            dim: self.dim,
            records: self.records,
            user_index: self.user_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    ZeroDimension,
    DimensionMismatch {
        record: usize,
        expected: usize,
        chosen: usize,
        rejected: usize,
    },
    NonFinite { record: usize },
    EmptyUserId { record: usize },
    EmptyUser { user: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ZeroDimension => write!(f, "dataset dimension is zero"),
            Violation::DimensionMismatch {
                record,
                expected,
                chosen,
                rejected,
            } => write!(
                f,
                "record {record}: dimension mismatch (expected {expected}, chosen {chosen}, rejected {rejected})"
            ),
            Violation::NonFinite { record } => write!(f, "record {record}: non-finite coordinate"),
            Violation::EmptyUserId { record } => write!(f, "record {record}: empty user id"),
            Violation::EmptyUser { user } => write!(f, "user {user:?} has no records"),
        }
    }
}

/// Lists every structural problem in `data`; empty iff the dataset is well-formed.
pub fn validate_dataset(data: &PreferenceDataset) -> Vec<Violation> {
    let mut out = Vec::new();
    if data.dim == 0 {
        out.push(Violation::ZeroDimension);
    }
    for (i, r) in data.records.iter().enumerate() {
        if r.user_id.is_empty() {
            out.push(Violation::EmptyUserId { record: i });
        }
        if r.chosen.len() != data.dim || r.rejected.len() != data.dim {
            out.push(Violation::DimensionMismatch {
                record: i,
                expected: data.dim,
                chosen: r.chosen.len(),
                rejected: r.rejected.len(),
            });
        }
        if !r.chosen.is_finite() || !r.rejected.is_finite() {
            out.push(Violation::NonFinite { record: i });
        }
    }
    for (user, positions) in &data.user_index {
        if positions.is_empty() {
            out.push(Violation::EmptyUser { user: user.clone() });
        }
    }
    out
}

/// Returns `Err` carrying the first violation, if any.
pub fn ensure_valid(data: &PreferenceDataset) -> Result<()> {
    match validate_dataset(data).into_iter().next() {
        None => Ok(()),
        Some(v) => Err(Error::InvalidDataset(v.to_string())),
    }
}

/// Seen/unseen user partition plus per-user train/test record positions.
///
/// For unseen users the `train` partition holds their few-shot records.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplitSpec {
    pub seen_users: BTreeSet<String>,
    pub unseen_users: BTreeSet<String>,
    pub train: BTreeMap<String, Vec<usize>>,
    pub test: BTreeMap<String, Vec<usize>>,
}

impl SplitSpec {
    /// Combines the four standard splits into one dataset and its split.
    pub fn assemble(
        train: &PreferenceDataset,
        fewshot: &PreferenceDataset,
        test_seen: &PreferenceDataset,
        test_unseen: &PreferenceDataset,
    ) -> Result<(PreferenceDataset, SplitSpec)> {
        let dataset = PreferenceDataset::concat([train, fewshot, test_seen, test_unseen])?;
        let mut split = SplitSpec::default();
        let mut offset = 0;
        for (part, seen, is_train) in [
            (train, true, true),
            (fewshot, false, true),
            (test_seen, true, false),
            (test_unseen, false, false),
        ] {
            for (user, positions) in part.user_index() {
                if seen {
                    split.seen_users.insert(user.clone());
                } else {
                    split.unseen_users.insert(user.clone());
                }
                let target = if is_train { &mut split.train } else { &mut split.test };
                target
                    .entry(user.clone())
                    .or_default()
                    .extend(positions.iter().map(|p| p + offset));
            }
            offset += part.len();
        }
        split.validate(&dataset)?;
        Ok((dataset, split))
    }

    /// Checks disjointness and coverage against `data`.
    pub fn validate(&self, data: &PreferenceDataset) -> Result<()> {
        if let Some(u) = self.seen_users.intersection(&self.unseen_users).next() {
            return Err(Error::InvalidDataset(format!("user {u:?} is both seen and unseen")));
        }
        let mut owner = vec![0u8; data.len()];
        for (map, tag) in [(&self.train, 1u8), (&self.test, 2u8)] {
            for (user, positions) in map {
                if !self.seen_users.contains(user) && !self.unseen_users.contains(user) {
                    return Err(Error::InvalidDataset(format!("user {user:?} not in split")));
                }
                for &p in positions {
                    let rec = data.records.get(p).ok_or_else(|| {
                        Error::InvalidDataset(format!("record position {p} out of range"))
                    })?;
                    if &rec.user_id != user {
                        return Err(Error::InvalidDataset(format!(
                            "record {p} belongs to {:?}, listed under {user:?}",
                            rec.user_id
                        )));
                    }
                    if owner[p] != 0 {
                        return Err(Error::InvalidDataset(format!(
                            "record {p} appears in more than one partition"
                        )));
                    }
                    owner[p] = tag;
                }
            }
        }
        for (user, positions) in &data.user_index {
            if !self.seen_users.contains(user) && !self.unseen_users.contains(user) {
                continue;
            }
            if let Some(p) = positions.iter().find(|&&p| owner[p] == 0) {
                return Err(Error::InvalidDataset(format!(
                    "record {p} of user {user:?} is in no partition"
                )));
            }
        }
        Ok(())
    }

    fn gather(
        &self,
        data: &PreferenceDataset,
        users: &BTreeSet<String>,
        map: &BTreeMap<String, Vec<usize>>,
    ) -> PreferenceDataset {
        let mut b = PreferenceDataset::builder(data.dim());
        for user in users {
            b.add_user(user.clone());
            for &p in map.get(user).into_iter().flatten() {
                b.push(data.record(p).clone());
            }
        }
        b.build()
    }

    /// Seen users' training records.
    pub fn train_set(&self, data: &PreferenceDataset) -> PreferenceDataset {
        self.gather(data, &self.seen_users, &self.train)
    }

    /// Unseen users' few-shot records.
    pub fn fewshot_set(&self, data: &PreferenceDataset) -> PreferenceDataset {
        self.gather(data, &self.unseen_users, &self.train)
    }

    pub fn test_seen_set(&self, data: &PreferenceDataset) -> PreferenceDataset {
        self.gather(data, &self.seen_users, &self.test)
    }

    pub fn test_unseen_set(&self, data: &PreferenceDataset) -> PreferenceDataset {
        self.gather(data, &self.unseen_users, &self.test)
    }

    /// Split that treats every user of `train` as seen, with no test records.
    pub fn all_seen(train: &PreferenceDataset) -> SplitSpec {
        SplitSpec {
            seen_users: train.users().map(str::to_owned).collect(),
            unseen_users: BTreeSet::new(),
            train: train.user_index().clone(),
            test: BTreeMap::new(),
        }
    }
}

/// The `B x D` matrix `A` mapping an embedding to `B` basis rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardBasisModel {
    rank: usize,
    dim: usize,
    basis: Vec<f64>,
}

impl RewardBasisModel {
    /// `basis` is row-major, `rank` rows of `dim` entries.
    pub fn new(rank: usize, dim: usize, basis: Vec<f64>) -> Result<Self> {
        if rank == 0 {
            return Err(Error::InvalidArgument("rank must be at least 1".into()));
        }
        if rank > dim {
            return Err(Error::InvalidArgument(format!(
                "rank {rank} exceeds feature dimension {dim}"
            )));
        }
        Error::check_dim(rank * dim, basis.len())?;
        if basis.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("basis matrix".into()));
        }
        Ok(RewardBasisModel { rank, dim, basis })
    }

    pub fn zeros(rank: usize, dim: usize) -> Result<Self> {
        Self::new(rank, dim, vec![0.0; rank * dim])
    }

    /// Builds from explicit rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut basis = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            Error::check_dim(dim, r.len())?;
            basis.extend_from_slice(r);
        }
        Self::new(rows.len(), dim, basis)
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis(&self) -> &[f64] {
        &self.basis
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.basis[j * self.dim..(j + 1) * self.dim]
    }

    pub fn into_basis(self) -> Vec<f64> {
        self.basis
    }
}

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct UserWeights(Vec<f64>);

impl UserWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("empty weight vector".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument(format!("weights not nonnegative: {weights:?}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidArgument(format!("weights sum to {sum}, not 1")));
        }
        Ok(UserWeights(weights))
    }

    pub fn uniform(rank: usize) -> Self {
        UserWeights(vec![1.0 / rank as f64; rank])
    }

    pub fn one_hot(rank: usize, k: usize) -> Self {
        let mut w = vec![0.0; rank];
        w[k] = 1.0;
        UserWeights(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Largest departure from the simplex constraints.
    pub fn simplex_violation(&self) -> f64 {
        let neg = self.0.iter().fold(0.0f64, |m, &w| m.max(-w));
        let sum: f64 = self.0.iter().sum();
        neg.max((sum - 1.0).abs())
    }

    pub(crate) fn from_softmax_unchecked(weights: Vec<f64>) -> Self {
        UserWeights(weights)
    }
}
