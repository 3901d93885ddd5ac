//! Command-line entry point wiring the generators, transformations, trainer
//! and sweep into one pipeline:
//!
//! ```text
//! inoculate gen original --out data/original --seed 7
//! inoculate gen numeric  --out data/numeric
//! inoculate challenge --data data/original --kind negation --out data/negation
//! inoculate train --data data/original --out runs/base.ckpt
//! inoculate inoculate --data data/original --challenge data/negation \
//!     --checkpoint runs/base.ckpt --out runs/negation
//! inoculate baseline --data data/numeric/numeric.jsonl
//! ```
//!
//! Configs are JSON files; flags win over config values, and the `INOC_SEED`
//! environment variable overrides every seed for reproducible CI runs.
//! Exit codes: 2 config error, 3 data error, 4 runtime error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use inoculate::corpus::{load_jsonl, write_jsonl, DatasetBundle, DatasetSplit};
use inoculate::error::{Error, Result};
use inoculate::hash::digest_hex;
use inoculate::inoculation::{run_protocol, write_report, FineTunePlan};
use inoculate::model::{Checkpoint, FeatureConfig};
use inoculate::outcomes::OutcomeThresholds;
use inoculate::perturb::{make_challenge_bundle, Transformation, TransformKind};
use inoculate::report::{emit_csv, summarize};
use inoculate::synthgen::{
    baseline_breakdown, gen_numeric, gen_original, NumericCategoryCounts, SynthConfig,
};
use inoculate::trainer::{train, TrainConfig};

#[derive(Parser)]
#[command(name = "inoculate", version, about = "Challenge-dataset analysis by fine-tuning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic datasets
    #[command(subcommand)]
    Gen(GenCommand),
    /// Build a challenge bundle from an original bundle
    Challenge(ChallengeArgs),
    /// Pretrain a classifier and write a checkpoint
    Train(TrainArgs),
    /// Run the full fine-tuning protocol and write report JSON + CSV
    Inoculate(InoculateArgs),
    /// Run the 3-rule baseline over a split
    Baseline(BaselineArgs),
}

#[derive(Subcommand)]
enum GenCommand {
    /// Original dataset with planted artifacts (train/dev/test)
    Original(GenOriginalArgs),
    /// Numerical-reasoning dataset with exact category counts
    Numeric(GenNumericArgs),
}

#[derive(Args)]
struct GenOriginalArgs {
    /// Output directory (train.jsonl, dev.jsonl, test.jsonl)
    #[arg(long)]
    out: PathBuf,
    /// Generator config JSON (SynthConfig keys)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct GenNumericArgs {
    /// Output directory (numeric.jsonl plus a train/dev/test carve)
    #[arg(long)]
    out: PathBuf,
    /// Category-count config JSON (NumericCategoryCounts keys)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Examples carved off for fine-tuning
    #[arg(long, default_value_t = 1000)]
    train_size: usize,
    /// Examples carved off for scheduling/early stopping
    #[arg(long, default_value_t = 500)]
    dev_size: usize,
}

#[derive(Args)]
struct ChallengeArgs {
    /// Original bundle directory
    #[arg(long)]
    data: PathBuf,
    /// Transformation: word_overlap, negation, spelling_error,
    /// length_mismatch or distractor
    #[arg(long, value_parser = parse_kind)]
    kind: TransformKind,
    #[arg(long)]
    out: PathBuf,
    /// Challenge train pool size (inclusive subsample of transformed train)
    #[arg(long, default_value_t = 1000)]
    train_size: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Bundle directory holding train.jsonl and dev.jsonl
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint output path
    #[arg(long)]
    out: PathBuf,
    /// Train config JSON ({"train": TrainConfig, "features": FeatureConfig})
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// History log path (JSON Lines); defaults to <out>.history.jsonl
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct InoculateArgs {
    /// Original bundle directory
    #[arg(long)]
    data: PathBuf,
    /// Challenge bundle directory
    #[arg(long)]
    challenge: PathBuf,
    /// Pretrained checkpoint
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output directory; the run lands in a subdirectory keyed by a config
    /// digest
    #[arg(long)]
    out: PathBuf,
    /// Protocol config JSON ({"plan": .., "train": .., "thresholds": ..})
    #[arg(long)]
    config: Option<PathBuf>,
    /// Challenge name recorded in the report (defaults to the challenge
    /// directory name)
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the sweep (default: logical cores)
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct BaselineArgs {
    /// JSON Lines split to score
    #[arg(long)]
    data: PathBuf,
}

fn parse_kind(s: &str) -> std::result::Result<TransformKind, String> {
    TransformKind::parse(s).ok_or_else(|| {
        format!(
            "unknown transformation {s:?}; expected one of {}",
            TransformKind::ALL.map(|k| k.as_str()).join(", ")
        )
    })
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TrainFileConfig {
    train: TrainConfig,
    features: FeatureConfig,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ProtocolFileConfig {
    plan: FineTunePlan,
    train: TrainConfig,
    thresholds: OutcomeThresholds,
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::config(format!("{}: {e}", p.display())))
        }
    }
}

/// `INOC_SEED` overrides every seed when set.
fn env_seed() -> Result<Option<u64>> {
    match std::env::var("INOC_SEED") {
        Err(_) => Ok(None),
        Ok(v) => v
            .parse::<u64>()
            .map(Some)
            .map_err(|_| Error::config(format!("INOC_SEED must be an integer, got {v:?}"))),
    }
}

fn resolve_seed(flag: Option<u64>, config_seed: u64) -> Result<u64> {
    Ok(env_seed()?.or(flag).unwrap_or(config_seed))
}

fn cmd_gen_original(args: GenOriginalArgs) -> Result<()> {
    let mut cfg: SynthConfig = load_config(args.config.as_deref())?;
    cfg.seed = resolve_seed(args.seed, cfg.seed)?;
    let bundle = gen_original(&cfg)?;
    bundle.write_dir(&args.out)?;
    println!(
        "wrote original bundle to {} (train {}, dev {}, test {})",
        args.out.display(),
        bundle.train.len(),
        bundle.dev.len(),
        bundle.test.len()
    );
    Ok(())
}

fn cmd_gen_numeric(args: GenNumericArgs) -> Result<()> {
    let counts: NumericCategoryCounts = load_config(args.config.as_deref())?;
    let seed = resolve_seed(args.seed, 0)?;
    let split = gen_numeric(&counts, seed)?;
    if args.train_size + args.dev_size > split.len() {
        return Err(Error::config(format!(
            "train_size {} + dev_size {} exceeds dataset size {}",
            args.train_size,
            args.dev_size,
            split.len()
        )));
    }
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    write_jsonl(&split, &args.out.join("numeric.jsonl"))?;
    // The unsplit set is carved as: fine-tuning pool, then a dev portion for
    // scheduling, then the evaluation remainder.
    let train = DatasetSplit::new("train", split.examples[..args.train_size].to_vec());
    let dev = DatasetSplit::new(
        "dev",
        split.examples[args.train_size..args.train_size + args.dev_size].to_vec(),
    );
    let test = DatasetSplit::new("test", split.examples[args.train_size + args.dev_size..].to_vec());
    write_jsonl(&train, &args.out.join("train.jsonl"))?;
    write_jsonl(&dev, &args.out.join("dev.jsonl"))?;
    write_jsonl(&test, &args.out.join("test.jsonl"))?;
    println!(
        "wrote numeric dataset to {} ({} total; carve {}/{}/{})",
        args.out.display(),
        split.len(),
        train.len(),
        dev.len(),
        test.len()
    );
    Ok(())
}

fn cmd_challenge(args: ChallengeArgs) -> Result<()> {
    let source = DatasetBundle::load_dir(&args.data)?;
    let seed = resolve_seed(args.seed, 0)?;
    let t = Transformation::new(args.kind, seed);
    let challenge = make_challenge_bundle(&source, &t, args.train_size, seed)?;
    challenge.write_dir(&args.out)?;
    println!(
        "wrote {} challenge bundle to {} (train {}, dev {}, test {})",
        args.kind,
        args.out.display(),
        challenge.train.len(),
        challenge.dev.len(),
        challenge.test.len()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut cfg: TrainFileConfig = load_config(args.config.as_deref())?;
    if let Some(lr) = args.lr {
        cfg.train.initial_lr = lr;
    }
    if let Some(n) = args.max_epochs {
        cfg.train.max_epochs = n;
    }
    cfg.train.seed = resolve_seed(args.seed, cfg.train.seed)?;
    let train_split = load_jsonl(&args.data.join("train.jsonl"))?;
    let dev_split = load_jsonl(&args.data.join("dev.jsonl"))?;
    let ckpt = train(&cfg.train, &cfg.features, &train_split, &dev_split)?;
    ckpt.save(&args.out)?;

    let log_path = args.log.unwrap_or_else(|| {
        let mut p = args.out.as_os_str().to_owned();
        p.push(".history.jsonl");
        PathBuf::from(p)
    });
    write_history(&log_path, &ckpt)?;
    let last = ckpt.history.last();
    println!(
        "wrote checkpoint to {} ({} epochs, final dev acc {})",
        args.out.display(),
        ckpt.history.len(),
        last.map(|h| format!("{:.4}", h.dev_acc)).unwrap_or_else(|| "-".into())
    );
    Ok(())
}

fn write_history(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    use std::io::Write;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for row in &ckpt.history {
        let line = serde_json::to_string(row)
            .map_err(|e| Error::runtime(format!("serializing history: {e}")))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn cmd_inoculate(args: InoculateArgs) -> Result<()> {
    let mut cfg: ProtocolFileConfig = load_config(args.config.as_deref())?;
    cfg.plan.seed = resolve_seed(args.seed, cfg.plan.seed)?;
    let original = DatasetBundle::load_dir(&args.data)?;
    let challenge = DatasetBundle::load_dir(&args.challenge)?;
    let base = Checkpoint::load(&args.checkpoint)?;
    let name = args.name.unwrap_or_else(|| {
        args.challenge
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "challenge".into())
    });

    let digest_input = serde_json::to_vec(&(&cfg.plan, &cfg.train, &cfg.thresholds, &name))
        .map_err(|e| Error::runtime(format!("digesting run config: {e}")))?;
    let run_dir = args.out.join(format!("run-{}", &digest_hex(&digest_input)[..16]));
    let log_dir = run_dir.join("logs");
    std::fs::create_dir_all(&log_dir).map_err(|e| Error::io(&log_dir, e))?;

    let jobs = args.jobs.unwrap_or_else(num_cpus);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::runtime(format!("building worker pool: {e}")))?;
    let report = pool.install(|| {
        run_protocol(
            &base,
            &original,
            &challenge,
            &cfg.plan,
            &cfg.train,
            &cfg.thresholds,
            &name,
            Some(&log_dir),
        )
    })?;

    write_report(&report, &run_dir.join("report.json"))?;
    emit_csv(&report, &run_dir.join("curve.csv"))?;
    println!("run directory: {}", run_dir.display());
    print!("{}", summarize(std::slice::from_ref(&report)));
    Ok(())
}

fn num_cpus() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn cmd_baseline(args: BaselineArgs) -> Result<()> {
    let split = load_jsonl(&args.data)?;
    let stats = baseline_breakdown(&split);
    let descriptions = [
        "no quantifier phrase -> contradiction",
        "phrase in hypothesis -> neutral",
        "phrase in premise -> entailment",
    ];
    for (i, (rule, desc)) in stats.rules.iter().zip(descriptions).enumerate() {
        println!(
            "rule {} ({desc}): fired {}, correct {}, wrong {}",
            i + 1,
            rule.fired,
            rule.correct,
            rule.wrong()
        );
    }
    println!(
        "total: {} correct / {} ({:.2}%)",
        stats.correct(),
        stats.total,
        stats.accuracy() * 100.0
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(GenCommand::Original(args)) => cmd_gen_original(args),
        Command::Gen(GenCommand::Numeric(args)) => cmd_gen_numeric(args),
        Command::Challenge(args) => cmd_challenge(args),
        Command::Train(args) => cmd_train(args),
        Command::Inoculate(args) => cmd_inoculate(args),
        Command::Baseline(args) => cmd_baseline(args),
    }
}

fn main() {
    let cli = Cli::parse();
    let stage = match &cli.command {
        Command::Gen(_) => "gen",
        Command::Challenge(_) => "challenge",
        Command::Train(_) => "train",
        Command::Inoculate(_) => "inoculate",
        Command::Baseline(_) => "baseline",
    };
    if let Err(e) = run(cli) {
        eprintln!("inoculate {stage}: {e}");
        std::process::exit(e.exit_code());
    }
}
