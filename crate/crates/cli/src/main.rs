//! `lore`: simulate, train, adapt, evaluate and audit low-rank reward models.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data or validation
//! errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lore_core::baselines::{train_bt, LinearRewardModel};
use lore_core::eval::{self, curve_to_csv, evaluate_split, fewshot_curve, parameter_count, select_rank, EvalReport};
use lore_core::io::{self, load_checkpoint, load_dataset, save_checkpoint, save_dataset, Checkpoint, RunConfig, SavedModel};
use lore_core::policy::{
    policy_accuracy, sample_policy_dataset, train_policy_basis, two_group_instance, uniform_reference, TabularShape,
};
use lore_core::synth::build_benchmark;
use lore_core::trainer::{fewshot_adapt_all, train_joint_observed};
use lore_core::{Error, PreferenceDataset, RewardBasisModel, SplitSpec, UserWeights};

#[derive(Parser)]
#[command(name = "lore", version, about = "Low-rank personalized reward models from pairwise comparisons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// Directory holding the dataset files; defaults to `--out`.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    /// Checkpoint to use; defaults to `<out>/model.ckpt`.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Lore,
    Bt,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark as dataset files.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Train a model on `train.lore`.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "lore")]
        method: MethodArg,
    },
    /// Fit weights for every user in `fewshot.lore` with the basis frozen.
    Adapt {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Held-out accuracy report for seen and unseen users.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Unseen-user accuracy as a function of the number of few-shot records.
    Curve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Choose the basis rank by validation accuracy on `train.lore`.
    SelectRank {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Train a tabular policy basis.
    Policy {
        #[command(flatten)]
        common: Common,
        /// `LORE-TAB v1` instance to sample users from; without it a built-in
        /// two-group instance is used.
        #[arg(long)]
        instance: Option<PathBuf>,
    },
    /// Number of trainable parameters.
    Params {
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long = "B", default_value_t = 1)]
        rank: u64,
        #[arg(long = "D")]
        dim: u64,
        #[arg(long = "N", default_value_t = 0)]
        users: u64,
        /// Accepted for a uniform interface; not used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

type Res<T> = Result<T, Error>;

struct Run {
    config: RunConfig,
    fingerprint: String,
    out: PathBuf,
}

impl Run {
    fn new(common: &Common) -> Res<Self> {
        let mut config = RunConfig::load(&common.config)?;
        if let Some(seed) = common.seed {
            config.seed = seed;
        }
        Ok(Run {
            fingerprint: config.fingerprint(),
            config,
            out: common.out.clone(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn meta_line(&self) -> String {
        format!(
            "# fingerprint={},seed={},aggregation={}\n",
            self.fingerprint,
            self.config.seed,
            eval::AGGREGATION
        )
    }

    fn prepare_out(&self) -> Res<()> {
        std::fs::create_dir_all(&self.out)?;
        Ok(())
    }

    fn checkpoint(&self, model: SavedModel) -> Checkpoint {
        Checkpoint {
            model,
            seed: self.config.seed,
            fingerprint: self.fingerprint.clone(),
        }
    }
}

const SPLITS: [&str; 4] = ["train", "fewshot", "test_seen", "test_unseen"];

fn data_dir<'a>(run: &'a Run, data: &'a DataArgs) -> &'a Path {
    data.data.as_deref().unwrap_or(&run.out)
}

fn load_split(dir: &Path) -> Res<(PreferenceDataset, SplitSpec)> {
    let parts = SPLITS
        .iter()
        .map(|s| load_dataset(&dir.join(format!("{s}.lore"))))
        .collect::<Res<Vec<_>>>()?;
    SplitSpec::assemble(&parts[0], &parts[1], &parts[2], &parts[3])
}

fn load_model(run: &Run, model: &ModelArgs) -> Res<Checkpoint> {
    load_checkpoint(&model.model.clone().unwrap_or_else(|| run.path("model.ckpt")))
}

fn lore_parts(ckpt: &Checkpoint) -> Res<(&RewardBasisModel, &BTreeMap<String, UserWeights>)> {
    match &ckpt.model {
        SavedModel::Lore { model, weights } => Ok((model, weights)),
        other => Err(Error::InvalidArgument(format!(
            "expected a lore checkpoint, found {}",
            other.method()
        ))),
    }
}

fn simulate(common: &Common) -> Res<()> {
    let run = Run::new(common)?;
    let bench = build_benchmark(&run.config.generator())?;
    run.prepare_out()?;
    let meta: BTreeMap<String, String> = [
        ("fingerprint".to_string(), run.fingerprint.clone()),
        ("seed".to_string(), run.config.seed.to_string()),
    ]
    .into();
    for (name, part) in SPLITS.iter().zip([bench.train(), bench.fewshot(), bench.test_seen(), bench.test_unseen()]) {
        save_dataset(&part, &run.path(&format!("{name}.lore")), &meta)?;
    }
    save_checkpoint(
        &run.checkpoint(SavedModel::Lore {
            model: bench.truth.true_basis.clone(),
            weights: bench.truth.user_weights.clone(),
        }),
        &run.path("truth.ckpt"),
    )?;
    io::atomic_write(&run.path("config.txt"), run.config.to_text().as_bytes())?;
    println!(
        "wrote {} records for {} seen and {} unseen users to {}",
        bench.dataset.len(),
        bench.split.seen_users.len(),
        bench.split.unseen_users.len(),
        run.out.display()
    );
    Ok(())
}

fn train(common: &Common, data: &DataArgs, method: MethodArg) -> Res<()> {
    let run = Run::new(common)?;
    let train = load_dataset(&data_dir(&run, data).join("train.lore"))?;
    let config = run.config.train();
    let (model, log) = match method {
        MethodArg::Lore => {
            let start = Instant::now();
            let mut log = run.meta_line();
            log.push_str("epoch,objective,best_objective,wall_seconds\n");
            let init = lore_core::trainer::InitialState::random(&config, &train);
            let trained = train_joint_observed(&train, &config, &init, |s| {
                let _ = writeln!(
                    log,
                    "{},{},{},{}",
                    s.epoch,
                    s.objective,
                    s.best_objective,
                    start.elapsed().as_secs_f64()
                );
            })?;
            println!(
                "trained rank {} over {} epochs, final objective {}",
                config.rank,
                trained.telemetry.epochs_run(),
                trained.telemetry.objectives().last().copied().unwrap_or(f64::NAN)
            );
            (
                SavedModel::Lore {
                    model: trained.model,
                    weights: trained.seen_weights,
                },
                Some(log),
            )
        }
        MethodArg::Bt => {
            let m: LinearRewardModel = train_bt(&train, &config)?;
            println!("trained BT reward head on {} records", train.len());
            (SavedModel::Bt(m), None)
        }
    };
    run.prepare_out()?;
    save_checkpoint(&run.checkpoint(model), &run.path("model.ckpt"))?;
    if let Some(log) = log {
        io::atomic_write(&run.path("train_log.csv"), log.as_bytes())?;
    }
    Ok(())
}

fn adapt(common: &Common, data: &DataArgs, model: &ModelArgs) -> Res<()> {
    let run = Run::new(common)?;
    let ckpt = load_model(&run, model)?;
    let (basis, _) = lore_parts(&ckpt)?;
    let fewshot = load_dataset(&data_dir(&run, data).join("fewshot.lore"))?;
    let weights = fewshot_adapt_all(basis, &fewshot, &run.config.fewshot())?;
    run.prepare_out()?;
    let n = weights.len();
    save_checkpoint(
        &run.checkpoint(SavedModel::Lore {
            model: basis.clone(),
            weights,
        }),
        &run.path("adapted.ckpt"),
    )?;
    println!("adapted {n} users");
    Ok(())
}

fn evaluate(common: &Common, data: &DataArgs, model: &ModelArgs) -> Res<()> {
    let run = Run::new(common)?;
    let ckpt = load_model(&run, model)?;
    let (dataset, split) = load_split(data_dir(&run, data))?;
    let (basis, seen, mut unseen) = match &ckpt.model {
        SavedModel::Lore { model, weights } => {
            let unseen = fewshot_adapt_all(model, &split_part(&dataset, &split.train, &split.unseen_users), &run.config.fewshot())?;
            (model.clone(), weights.clone(), unseen)
        }
        SavedModel::Bt(m) => {
            let w = UserWeights::uniform(1);
            (
                m.as_basis_model()?,
                eval::shared_weights(&split.seen_users, &w),
                eval::shared_weights(&split.unseen_users, &w),
            )
        }
        SavedModel::PolicyBasis { .. } => {
            return Err(Error::InvalidArgument("use `policy` for policy-basis checkpoints".into()))
        }
    };
    for u in &split.unseen_users {
        unseen.entry(u.clone()).or_insert_with(|| UserWeights::uniform(basis.rank()));
    }
    let mut report: EvalReport = evaluate_split(&basis, &seen, &unseen, &split, &dataset)?;
    report.fingerprint = run.fingerprint.clone();
    report.seed = run.config.seed;
    run.prepare_out()?;
    io::atomic_write(&run.path("eval.csv"), report.to_csv().as_bytes())?;
    print!("{}", report.table());
    Ok(())
}

/// Records of `users` at the positions listed in `parts`.
fn split_part(
    dataset: &PreferenceDataset,
    parts: &BTreeMap<String, Vec<usize>>,
    users: &std::collections::BTreeSet<String>,
) -> PreferenceDataset {
    let positions: Vec<usize> = users
        .iter()
        .filter_map(|u| parts.get(u))
        .flatten()
        .copied()
        .collect();
    dataset.subset(&positions)
}

fn curve(common: &Common, data: &DataArgs, model: &ModelArgs) -> Res<()> {
    let run = Run::new(common)?;
    let ckpt = load_model(&run, model)?;
    let (basis, _) = lore_parts(&ckpt)?;
    let dir = data_dir(&run, data);
    let fewshot = load_dataset(&dir.join("fewshot.lore"))?;
    let test = load_dataset(&dir.join("test_unseen.lore"))?;
    let points = fewshot_curve(
        basis,
        &fewshot,
        &test,
        &run.config.curve_counts,
        run.config.curve_repeats,
        run.config.seed,
        &run.config.fewshot(),
    )?;
    run.prepare_out()?;
    io::atomic_write(
        &run.path("curve.csv"),
        curve_to_csv(&points, &run.fingerprint, run.config.seed).as_bytes(),
    )?;
    println!("{:>6}{:>10}{:>10}", "count", "mean (%)", "std (%)");
    for p in &points {
        println!("{:>6}{:>10.1}{:>10.2}", p.count, 100.0 * p.mean, 100.0 * p.std);
    }
    Ok(())
}

fn rank_selection(common: &Common, data: &DataArgs) -> Res<()> {
    let run = Run::new(common)?;
    let train = load_dataset(&data_dir(&run, data).join("train.lore"))?;
    let sel = select_rank(
        &train,
        &run.config.candidate_ranks,
        run.config.validation_fraction,
        &run.config.train(),
    )?;
    let mut csv = run.meta_line();
    csv.push_str("rank,validation_accuracy\n");
    for (rank, acc) in &sel.scores {
        let _ = writeln!(csv, "{rank},{acc}");
    }
    let _ = writeln!(csv, "chosen,{}", sel.chosen);
    run.prepare_out()?;
    io::atomic_write(&run.path("rank_selection.csv"), csv.as_bytes())?;
    println!("selected rank {}", sel.chosen);
    Ok(())
}

fn policy(common: &Common, instance: Option<&Path>) -> Res<()> {
    let run = Run::new(common)?;
    let cfg = &run.config;
    let (shape, ref_policy, data): (TabularShape, Vec<f64>, PreferenceDataset) = match instance {
        Some(path) => {
            let truth = io::load_tabular(path)?;
            let (data, _) =
                sample_policy_dataset(&truth, cfg.policy_users, cfg.policy_alpha, cfg.policy_records_per_user, cfg.seed)?;
            (truth.shape, truth.ref_policy.clone(), data)
        }
        None => {
            let (shape, data) = two_group_instance(cfg.policy_prompts, cfg.policy_users.div_ceil(2));
            (shape, uniform_reference(shape), data)
        }
    };
    let trained = train_policy_basis(&data, shape, &ref_policy, &cfg.policy())?;
    let mut csv = run.meta_line();
    csv.push_str("user_id,records,train_accuracy\n");
    let mut total = 0.0;
    for (user, w) in &trained.seen_weights {
        let recs: Vec<_> = data.user_records(user).cloned().collect();
        let acc = policy_accuracy(&trained.policies, w, &recs)?;
        total += acc;
        let _ = writeln!(csv, "{user},{},{acc}", recs.len());
    }
    let mean = total / trained.seen_weights.len().max(1) as f64;
    let _ = writeln!(csv, "mean,{},{mean}", data.len());
    run.prepare_out()?;
    save_checkpoint(
        &run.checkpoint(SavedModel::PolicyBasis {
            policies: trained.policies,
            weights: trained.seen_weights,
        }),
        &run.path("policy.ckpt"),
    )?;
    io::atomic_write(&run.path("policy_report.csv"), csv.as_bytes())?;
    println!("mean training accuracy {:.1}%", 100.0 * mean);
    Ok(())
}

fn dispatch(command: Command) -> Res<()> {
    match command {
        Command::Simulate { common } => simulate(&common),
        Command::Train { common, data, method } => train(&common, &data, method),
        Command::Adapt { common, data, model } => adapt(&common, &data, &model),
        Command::Eval { common, data, model } => evaluate(&common, &data, &model),
        Command::Curve { common, data, model } => curve(&common, &data, &model),
        Command::SelectRank { common, data } => rank_selection(&common, &data),
        Command::Policy { common, instance } => policy(&common, instance.as_deref()),
        Command::Params {
            method,
            rank,
            dim,
            users,
            ..
        } => {
            let method = match method {
                MethodArg::Lore => eval::Method::Lore,
                MethodArg::Bt => eval::Method::Bt,
            };
            println!("{}", parameter_count(method, rank, dim, users));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
