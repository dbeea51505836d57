//! Held-out pairwise accuracy and the experiments built on it.
//!
//! Accuracy counts a record as correct only when the personalized reward
//! difference is strictly positive, so exact ties are errors. Group
//! accuracies average per-user accuracies; the overall figure is the plain
//! mean of the seen and unseen group accuracies.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::kernel::{dot, mat_vec};
use crate::par;
use crate::rng::{label, Seed};
use crate::trainer::{fewshot_adapt, train_joint, FewshotConfig, TrainConfig};
use crate::types::{ComparisonRecord, PreferenceDataset, RewardBasisModel, SplitSpec, UserWeights};

/// How group and overall accuracies are aggregated; written into every report.
pub const AGGREGATION: &str = "user-mean";

/// Fraction of `records` with `w^T A (e_c - e_r) > 0`.
pub fn pairwise_accuracy<'a>(
    model: &RewardBasisModel,
    w: &UserWeights,
    records: impl IntoIterator<Item = &'a ComparisonRecord>,
) -> Result<f64> {
    Error::check_dim(model.rank(), w.len())?;
    let mut r = vec![0.0; model.rank()];
    let (mut correct, mut total) = (0usize, 0usize);
    for rec in records {
        Error::check_dim(model.dim(), rec.dim()?)?;
        mat_vec(model.basis(), model.rank(), model.dim(), &rec.difference(), &mut r);
        if dot(w.as_slice(), &r) > 0.0 {
            correct += 1;
        }
        total += 1;
    }
    if total == 0 {
        return Err(Error::EmptyRecords);
    }
    Ok(correct as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Group {
    Seen,
    Unseen,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::Seen => "seen",
            Group::Unseen => "unseen",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserAccuracy {
    pub group: Group,
    pub records: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub per_user: BTreeMap<String, UserAccuracy>,
    pub seen: Option<f64>,
    pub unseen: Option<f64>,
    pub overall: Option<f64>,
    pub seen_records: usize,
    pub unseen_records: usize,
    pub fingerprint: String,
    pub seed: u64,
}

impl EvalReport {
    pub fn from_users(per_user: BTreeMap<String, UserAccuracy>) -> Self {
        let group_mean = |g: Group| {
            let accs: Vec<f64> = per_user.values().filter(|u| u.group == g).map(|u| u.accuracy).collect();
            (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64)
        };
        let records = |g: Group| per_user.values().filter(|u| u.group == g).map(|u| u.records).sum();
        let (seen, unseen) = (group_mean(Group::Seen), group_mean(Group::Unseen));
        let overall = match (seen, unseen) {
            (Some(s), Some(u)) => Some((s + u) / 2.0),
            (s, u) => s.or(u),
        };
        EvalReport {
            seen_records: records(Group::Seen),
            unseen_records: records(Group::Unseen),
            per_user,
            seen,
            unseen,
            overall,
            fingerprint: String::new(),
            seed: 0,
        }
    }

    /// Report CSV: a `#` metadata line, a header, one row per user, then
    /// `summary` rows for seen, unseen and overall.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# fingerprint={},seed={},aggregation={}",
            self.fingerprint, self.seed, AGGREGATION
        );
        s.push_str("group,user_id,records,accuracy\n");
        for (user, u) in &self.per_user {
            let _ = writeln!(s, "{},{},{},{}", u.group.as_str(), user, u.records, u.accuracy);
        }
        for (name, value, n) in [
            ("seen", self.seen, self.seen_records),
            ("unseen", self.unseen, self.unseen_records),
            ("overall", self.overall, self.seen_records + self.unseen_records),
        ] {
            if let Some(v) = value {
                let _ = writeln!(s, "summary,{name},{n},{v}");
            }
        }
        s
    }

    /// Human-readable summary table.
    pub fn table(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.1}", 100.0 * x));
        format!(
            "{:<10}{:>10}{:>10}\nseen      {:>10}{:>10}\nunseen    {:>10}{:>10}\noverall   {:>10}{:>10}\n",
            "group",
            "acc (%)",
            "records",
            pct(self.seen),
            self.seen_records,
            pct(self.unseen),
            self.unseen_records,
            pct(self.overall),
            self.seen_records + self.unseen_records,
        )
    }
}

/// Scores every seen and unseen user on their held-out records. Users
/// without test records are left out.
pub fn evaluate_split(
    model: &RewardBasisModel,
    seen_weights: &BTreeMap<String, UserWeights>,
    unseen_weights: &BTreeMap<String, UserWeights>,
    split: &SplitSpec,
    dataset: &PreferenceDataset,
) -> Result<EvalReport> {
    let mut jobs: Vec<(Group, &String, &UserWeights, &Vec<usize>)> = Vec::new();
    for (group, users, weights) in [
        (Group::Seen, &split.seen_users, seen_weights),
        (Group::Unseen, &split.unseen_users, unseen_weights),
    ] {
        for user in users {
            let Some(positions) = split.test.get(user).filter(|p| !p.is_empty()) else {
                continue;
            };
            let w = weights.get(user).ok_or_else(|| Error::MissingWeights(user.clone()))?;
            jobs.push((group, user, w, positions));
        }
    }
    let results = par::map(&jobs, |(group, user, w, positions)| {
        let acc = pairwise_accuracy(model, w, positions.iter().map(|&p| dataset.record(p)))?;
        Ok::<_, Error>((
            (*user).clone(),
            UserAccuracy {
                group: *group,
                records: positions.len(),
                accuracy: acc,
            },
        ))
    });
    Ok(EvalReport::from_users(results.into_iter().collect::<Result<_>>()?))
}

/// Weight map giving every listed user the same weights; used for scorers
/// without personalization.
pub fn shared_weights<'a>(users: impl IntoIterator<Item = &'a String>, w: &UserWeights) -> BTreeMap<String, UserWeights> {
    users.into_iter().map(|u| (u.clone(), w.clone())).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation across repeats.
    pub std: f64,
    pub accuracies: Vec<f64>,
}

pub fn curve_to_csv(points: &[CurvePoint], fingerprint: &str, seed: u64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# fingerprint={fingerprint},seed={seed},aggregation={AGGREGATION}");
    s.push_str("count,repeats,mean_accuracy,std_accuracy\n");
    for p in points {
        let _ = writeln!(s, "{},{},{},{}", p.count, p.accuracies.len(), p.mean, p.std);
    }
    s
}

/// Few-shot accuracy as a function of the number of labeled records.
///
/// For each count and repeat, every user of `fewshot` gets a fresh random
/// subset of that many of their records, is adapted against the frozen
/// `model`, and is scored on their records in `test`. A repeat's accuracy
/// is the mean over users.
pub fn fewshot_curve(
    model: &RewardBasisModel,
    fewshot: &PreferenceDataset,
    test: &PreferenceDataset,
    counts: &[usize],
    repeats: usize,
    seed: u64,
    config: &FewshotConfig,
) -> Result<Vec<CurvePoint>> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    let users: Vec<(usize, &String, &Vec<usize>, Vec<&ComparisonRecord>)> = fewshot
        .user_index()
        .iter()
        .enumerate()
        .filter_map(|(i, (u, pos))| {
            let t: Vec<_> = test.user_records(u).collect();
            (!t.is_empty()).then_some((i, u, pos, t))
        })
        .collect();
    if users.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let base = Seed(seed).derive(label::CURVE);
    let mut out = Vec::with_capacity(counts.len());
    for &count in counts {
        if let Some((_, u, pos, _)) = users.iter().find(|(_, _, pos, _)| pos.len() < count) {
            return Err(Error::Insufficient(format!(
                "user {u:?} has {} few-shot records, {count} requested",
                pos.len()
            )));
        }
        let mut accuracies = Vec::with_capacity(repeats);
        for rep in 0..repeats {
            let stream = base.derive(count as u64).derive(rep as u64);
            let per_user = par::map(&users, |(i, _, pos, test_recs)| {
                let mut rng = stream.derive(*i as u64).rng();
                let picked: Vec<ComparisonRecord> = rng
                    .sample_indices(pos.len(), count)
                    .into_iter()
                    .map(|k| fewshot.record(pos[k]).clone())
                    .collect();
                let w = fewshot_adapt(model, &picked, config)?;
                pairwise_accuracy(model, &w, test_recs.iter().copied())
            });
            let per_user = per_user.into_iter().collect::<Result<Vec<_>>>()?;
            accuracies.push(per_user.iter().sum::<f64>() / per_user.len() as f64);
        }
        let mean = accuracies.iter().sum::<f64>() / repeats as f64;
        let var = accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / repeats as f64;
        out.push(CurvePoint {
            count,
            mean,
            std: var.sqrt(),
            accuracies,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankSelection {
    pub chosen: usize,
    /// (rank, validation accuracy), ascending by rank. Empty when only one
    /// candidate was offered.
    pub scores: Vec<(usize, f64)>,
}

/// Holds out `validation_fraction` of each user's records (rounded, keeping
/// at least one training record per user) using the validation stream of
/// `config.seed`.
pub fn validation_split(
    train: &PreferenceDataset,
    validation_fraction: f64,
    seed: u64,
) -> Result<(PreferenceDataset, PreferenceDataset)> {
    if !(0.0..1.0).contains(&validation_fraction) {
        return Err(Error::InvalidArgument(format!(
            "validation fraction must be in [0, 1), got {validation_fraction}"
        )));
    }
    let mut rng = Seed(seed).derive(label::VALIDATION).rng();
    let mut fit = PreferenceDataset::builder(train.dim());
    let mut held = PreferenceDataset::builder(train.dim());
    for (user, positions) in train.user_index() {
        let mut order = positions.clone();
        rng.shuffle(&mut order);
        let n_val = ((positions.len() as f64 * validation_fraction).round() as usize).min(positions.len() - 1);
        let (val, rest) = order.split_at(n_val);
        let mut rest = rest.to_vec();
        let mut val = val.to_vec();
        rest.sort_unstable();
        val.sort_unstable();
        fit.add_user(user.clone());
        for p in rest {
            fit.push(train.record(p).clone());
        }
        for p in val {
            held.push(train.record(p).clone());
        }
    }
    Ok((fit.build(), held.build()))
}

/// Picks the rank with the best validation accuracy, preferring the smaller
/// rank on ties.
pub fn select_rank(
    train: &PreferenceDataset,
    candidate_ranks: &[usize],
    validation_fraction: f64,
    config: &TrainConfig,
) -> Result<RankSelection> {
    let mut candidates = candidate_ranks.to_vec();
    candidates.sort_unstable();
    candidates.dedup();
    match candidates.as_slice() {
        [] => return Err(Error::InvalidArgument("no candidate ranks".into())),
        [only] => {
            return Ok(RankSelection {
                chosen: *only,
                scores: Vec::new(),
            })
        }
        _ => {}
    }
    let (fit, held) = validation_split(train, validation_fraction, config.seed)?;
    if held.is_empty() {
        return Err(Error::Insufficient("validation split is empty".into()));
    }
    let mut scores = Vec::with_capacity(candidates.len());
    for &rank in &candidates {
        let trained = train_joint(&fit, &TrainConfig { rank, ..config.clone() })?;
        let split = SplitSpec {
            seen_users: held.users().map(str::to_owned).collect(),
            unseen_users: Default::default(),
            train: Default::default(),
            test: held.user_index().clone(),
        };
        let report = evaluate_split(&trained.model, &trained.seen_weights, &BTreeMap::new(), &split, &held)?;
        scores.push((rank, report.seen.unwrap_or(0.0)));
    }
    Ok(RankSelection {
        chosen: pick_rank(&scores),
        scores,
    })
}

/// Highest accuracy wins; the earliest (smallest) rank wins ties.
pub fn pick_rank(scores: &[(usize, f64)]) -> usize {
    let mut best = scores[0];
    for &s in &scores[1..] {
        if s.1 > best.1 || (s.1 == best.1 && s.0 < best.0) {
            best = s;
        }
    }
    best.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Lore,
    Bt,
}

impl Method {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lore" => Some(Method::Lore),
            "bt" => Some(Method::Bt),
            _ => None,
        }
    }
}

/// Trainable parameters: `B*D + B*N` for the low-rank model (basis plus
/// per-user weights), `D` for a single linear reward head.
pub fn parameter_count(method: Method, rank: u64, dim: u64, n_users: u64) -> u64 {
    match method {
        Method::Lore => rank * dim + rank * n_users,
        Method::Bt => dim,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::FeatureVector;

    fn rec(user: &str, c: &[f64], r: &[f64]) -> ComparisonRecord {
        ComparisonRecord::new(user, FeatureVector(c.to_vec()), FeatureVector(r.to_vec()))
    }

    #[test]
    fn accuracy_cases() {
        let m = RewardBasisModel::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let w = UserWeights::uniform(1);
        let recs = [
            rec("u", &[1.0, 0.0], &[0.0, 0.0]),
            rec("u", &[2.0, 5.0], &[1.0, 9.0]),
            rec("u", &[0.5, 0.0], &[0.1, 0.0]),
            rec("u", &[0.0, 1.0], &[1.0, 0.0]),
        ];
        assert_eq!(pairwise_accuracy(&m, &w, &recs[..3]).unwrap(), 1.0);
        assert_eq!(pairwise_accuracy(&m, &w, &recs).unwrap(), 0.75);
        let zero = RewardBasisModel::zeros(1, 2).unwrap();
        assert_eq!(pairwise_accuracy(&zero, &w, &recs).unwrap(), 0.0);
        assert!(matches!(pairwise_accuracy(&m, &w, &[]), Err(Error::EmptyRecords)));
    }

    #[test]
    fn accuracy_invariant_to_positive_scaling_and_permutation() {
        let mut rng = Seed(8).rng();
        let basis: Vec<f64> = (0..12).map(|_| rng.normal()).collect();
        let recs: Vec<_> = (0..50)
            .map(|_| {
                let c: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
                let r: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
                rec("u", &c, &r)
            })
            .collect();
        let w = UserWeights::new(vec![0.2, 0.5, 0.3]).unwrap();
        let m = RewardBasisModel::new(3, 4, basis.clone()).unwrap();
        let base = pairwise_accuracy(&m, &w, &recs).unwrap();
        let scaled = RewardBasisModel::new(3, 4, basis.iter().map(|x| 3.7 * x).collect()).unwrap();
        assert_eq!(pairwise_accuracy(&scaled, &w, &recs).unwrap(), base);
        let perm = [2usize, 0, 1];
        let pb: Vec<f64> = perm.iter().flat_map(|&p| basis[p * 4..p * 4 + 4].to_vec()).collect();
        let pw = UserWeights::new(perm.iter().map(|&p| w.as_slice()[p]).collect()).unwrap();
        let pm = RewardBasisModel::new(3, 4, pb).unwrap();
        assert_eq!(pairwise_accuracy(&pm, &pw, &recs).unwrap(), base);
    }

    #[test]
    fn group_and_overall_means() {
        let mut per_user = BTreeMap::new();
        per_user.insert("a".into(), UserAccuracy { group: Group::Seen, records: 2, accuracy: 1.0 });
        per_user.insert("b".into(), UserAccuracy { group: Group::Seen, records: 4, accuracy: 0.5 });
        per_user.insert("c".into(), UserAccuracy { group: Group::Unseen, records: 3, accuracy: 0.25 });
        let r = EvalReport::from_users(per_user);
        assert_eq!(r.seen, Some(0.75));
        assert_eq!(r.unseen, Some(0.25));
        assert_eq!(r.overall, Some(0.5));
        assert_eq!((r.seen_records, r.unseen_records), (6, 3));
    }

    #[test]
    fn overall_column_arithmetic() {
        // Published LoRe row: seen 71.0, unseen 71.0, overall 71.0.
        let mut per_user = BTreeMap::new();
        per_user.insert("s".into(), UserAccuracy { group: Group::Seen, records: 1, accuracy: 0.71 });
        per_user.insert("u".into(), UserAccuracy { group: Group::Unseen, records: 1, accuracy: 0.71 });
        let r = EvalReport::from_users(per_user);
        assert!((r.overall.unwrap() - 0.71).abs() < 1e-12);
    }

    #[test]
    fn missing_weights_is_an_error() {
        let data = PreferenceDataset::from_records(1, [rec("a", &[1.0], &[0.0])]);
        let mut split = SplitSpec::default();
        split.seen_users.insert("a".into());
        split.test.insert("a".into(), vec![0]);
        let m = RewardBasisModel::from_rows(&[vec![1.0]]).unwrap();
        assert!(matches!(
            evaluate_split(&m, &BTreeMap::new(), &BTreeMap::new(), &split, &data),
            Err(Error::MissingWeights(_))
        ));
    }

    #[test]
    fn csv_has_summary_rows() {
        let mut per_user = BTreeMap::new();
        per_user.insert("a".into(), UserAccuracy { group: Group::Seen, records: 2, accuracy: 1.0 });
        let mut r = EvalReport::from_users(per_user);
        r.fingerprint = "abc".into();
        let csv = r.to_csv();
        assert!(csv.starts_with("# fingerprint=abc,seed=0,aggregation=user-mean\ngroup,user_id,records,accuracy\n"));
        assert!(csv.contains("seen,a,2,1\n"));
        assert!(csv.contains("summary,overall,2,1\n"));
        assert!(!csv.contains("summary,unseen"));
    }

    #[test]
    fn rank_tie_prefers_smaller() {
        assert_eq!(pick_rank(&[(2, 0.9), (5, 0.9)]), 2);
        assert_eq!(pick_rank(&[(5, 0.9), (2, 0.9)]), 2);
        assert_eq!(pick_rank(&[(1, 0.7), (5, 0.95), (20, 0.95)]), 5);
        assert_eq!(pick_rank(&[(1, 0.7), (5, 0.9), (20, 0.95)]), 20);
    }

    #[test]
    fn single_candidate_is_returned() {
        let data = PreferenceDataset::from_records(1, [rec("a", &[1.0], &[0.0])]);
        let sel = select_rank(&data, &[7], 0.2, &TrainConfig::default()).unwrap();
        assert_eq!(sel.chosen, 7);
        assert!(select_rank(&data, &[], 0.2, &TrainConfig::default()).is_err());
    }

    #[test]
    fn empty_validation_split_is_an_error() {
        let data = PreferenceDataset::from_records(2, [rec("a", &[1.0, 0.0], &[0.0, 0.0])]);
        let r = select_rank(&data, &[1, 2], 0.2, &TrainConfig::default());
        assert!(matches!(r, Err(Error::Insufficient(_))));
    }

    #[test]
    fn validation_split_partitions_each_user() {
        let recs: Vec<_> = (0..30).map(|i| rec(["a", "b", "c"][i % 3], &[i as f64], &[0.0])).collect();
        let data = PreferenceDataset::from_records(1, recs);
        let (fit, held) = validation_split(&data, 0.2, 3).unwrap();
        assert_eq!(fit.len(), 24);
        assert_eq!(held.len(), 6);
        for u in ["a", "b", "c"] {
            assert_eq!(held.user_records(u).count(), 2);
        }
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(parameter_count(Method::Lore, 10, 4096, 1000), 50_960);
        assert_eq!(parameter_count(Method::Lore, 1, 4096, 0), 4096);
        assert_eq!(parameter_count(Method::Bt, 10, 4096, 1000), 4096);
    }
}
