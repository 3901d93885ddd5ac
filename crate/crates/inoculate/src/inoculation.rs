//! Orchestration of the full protocol: size grid x learning-rate grid sweep
//! of fine-tuning runs from one pretrained base, per-size best-configuration
//! selection, and paired original/challenge measurement.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{subsample_inclusive, DatasetBundle, DatasetSplit};
use crate::error::{Error, Result};
use crate::model::{Checkpoint, FeatureConfig};
use crate::outcomes::{classify, Outcome, OutcomeThresholds};
use crate::trainer::{evaluate, fine_tune, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FineTunePlan {
    /// Ascending fine-tuning sizes; 0 means "no fine-tuning" and reproduces
    /// the pre-inoculation numbers.
    pub sizes: Vec<usize>,
    pub lr_grid: Vec<f64>,
    pub patience: usize,
    pub seed: u64,
}

impl Default for FineTunePlan {
    fn default() -> Self {
        FineTunePlan {
            sizes: vec![5, 10, 25, 50, 100, 250, 500, 750, 1000],
            lr_grid: vec![1e-6, 1e-5, 1e-4, 4e-4, 1e-3, 1e-2],
            patience: 5,
            seed: 0,
        }
    }
}

impl FineTunePlan {
    pub fn validate(&self, challenge_train_size: usize) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::config("plan sizes must be nonempty"));
        }
        for w in self.sizes.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::config("plan sizes must be strictly ascending"));
            }
        }
        if *self.sizes.last().unwrap() > challenge_train_size {
            return Err(Error::config(format!(
                "largest plan size {} exceeds challenge train pool size {}",
                self.sizes.last().unwrap(),
                challenge_train_size
            )));
        }
        if self.lr_grid.is_empty() {
            return Err(Error::config("lr_grid must be nonempty"));
        }
        if self.lr_grid.iter().any(|&lr| lr <= 0.0 || !lr.is_finite()) {
            return Err(Error::config("lr_grid entries must be positive"));
        }
        if self.patience == 0 {
            return Err(Error::config("patience must be >= 1"));
        }
        Ok(())
    }
}

/// One curve point. The original and challenge test accuracies come from the
/// same selected checkpoint: the learning rate that maximizes challenge test
/// accuracy at this size. The `dev_selected_*` fields report the alternative,
/// challenge-dev-based selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InoculationPoint {
    pub size: usize,
    pub best_lr: f64,
    pub original_test_acc: f64,
    pub challenge_test_acc: f64,
    /// Per-run training log of the selected run, relative to the run
    /// directory; empty when no logs were written.
    pub history_ref: String,
    pub dev_selected_lr: f64,
    pub dev_selected_original_acc: f64,
    pub dev_selected_challenge_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InoculationReport {
    pub challenge_name: String,
    pub pre_original_acc: f64,
    pub pre_challenge_acc: f64,
    /// Sorted by size.
    pub points: Vec<InoculationPoint>,
    /// `None` when the pre-inoculation gap is not positive, in which case
    /// the outcome signatures are undefined.
    pub outcome: Option<Outcome>,
}

impl InoculationReport {
    /// Pre-inoculation original-test accuracy minus challenge-test accuracy.
    /// May be negative; such reports carry no outcome.
    pub fn performance_gap(&self) -> f64 {
        self.pre_original_acc - self.pre_challenge_acc
    }

    /// Fraction of the performance gap recovered at a point. Undefined
    /// (error) for a nonpositive gap.
    pub fn gap_closure(&self, point: &InoculationPoint) -> Result<f64> {
        let gap = self.performance_gap();
        if gap <= 0.0 {
            return Err(Error::data(format!(
                "gap closure undefined for nonpositive gap ({gap:.6})"
            )));
        }
        Ok((point.challenge_test_acc - self.pre_challenge_acc) / gap)
    }
}

/// Result of a single (size, lr) fine-tuning run.
#[derive(Debug, Clone, Serialize)]
struct RunResult {
    size: usize,
    lr: f64,
    original_test_acc: f64,
    challenge_test_acc: f64,
    challenge_dev_acc: f64,
    history_ref: String,
}

fn format_lr(lr: f64) -> String {
    format!("{lr:e}")
}

fn run_one(
    base: &Checkpoint,
    model_cfg: &FeatureConfig,
    subset: &DatasetSplit,
    original: &DatasetBundle,
    challenge: &DatasetBundle,
    lr: f64,
    tune_cfg: &TrainConfig,
    log_dir: Option<&Path>,
) -> Result<RunResult> {
    let tuned = if subset.is_empty() {
        base.clone()
    } else {
        let cfg = TrainConfig { initial_lr: lr, ..tune_cfg.clone() };
        fine_tune(base, subset, &original.dev, model_cfg, &cfg)?
    };
    let history_ref = match log_dir {
        Some(dir) => {
            let name = format!("ft_size{}_lr{}.jsonl", subset.len(), format_lr(lr));
            let path = dir.join(&name);
            write_history_log(&path, &tuned)?;
            format!("logs/{name}")
        }
        None => String::new(),
    };
    Ok(RunResult {
        size: subset.len(),
        lr,
        original_test_acc: evaluate(&tuned, &original.test)?,
        challenge_test_acc: evaluate(&tuned, &challenge.test)?,
        challenge_dev_acc: evaluate(&tuned, &challenge.dev)?,
        history_ref,
    })
}

fn write_history_log(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    use std::io::Write;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for row in &checkpoint.history {
        let line = serde_json::to_string(row)
            .map_err(|e| Error::runtime(format!("serializing history row: {e}")))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Runs the full sweep. Grid cells are independent jobs executed on the
/// current rayon pool; report assembly is an ordered reduction, so the
/// output is deterministic regardless of worker count.
///
/// When `log_dir` is given, each run's per-epoch history is written there as
/// JSON Lines and referenced from the selected points.
pub fn run_protocol(
    base: &Checkpoint,
    original: &DatasetBundle,
    challenge: &DatasetBundle,
    plan: &FineTunePlan,
    tune_cfg: &TrainConfig,
    thresholds: &OutcomeThresholds,
    challenge_name: &str,
    log_dir: Option<&Path>,
) -> Result<InoculationReport> {
    plan.validate(challenge.train.len())?;
    thresholds.validate()?;
    let model_cfg = base.params.feature_config.clone();

    let pre_original_acc = evaluate(base, &original.test)?;
    let pre_challenge_acc = evaluate(base, &challenge.test)?;

    if let Some(dir) = log_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let subsets = subsample_inclusive(&challenge.train, &plan.sizes, plan.seed)?;
    let tune_cfg = TrainConfig { patience: plan.patience, seed: plan.seed, ..tune_cfg.clone() };

    let grid: Vec<(usize, f64)> = (0..subsets.len())
        .flat_map(|si| plan.lr_grid.iter().map(move |&lr| (si, lr)))
        .collect();
    let results: Vec<RunResult> = grid
        .par_iter()
        .map(|&(si, lr)| {
            run_one(base, &model_cfg, &subsets[si], original, challenge, lr, &tune_cfg, log_dir)
        })
        .collect::<Result<Vec<_>>>()?;

    let lrs = plan.lr_grid.len();
    let points: Vec<InoculationPoint> = (0..subsets.len())
        .map(|si| {
            let runs = &results[si * lrs..(si + 1) * lrs];
            // ties resolve to the first (smallest) learning rate
            let best = runs
                .iter()
                .fold(&runs[0], |acc, r| if r.challenge_test_acc > acc.challenge_test_acc { r } else { acc });
            let dev_best = runs
                .iter()
                .fold(&runs[0], |acc, r| if r.challenge_dev_acc > acc.challenge_dev_acc { r } else { acc });
            InoculationPoint {
                size: best.size,
                best_lr: best.lr,
                original_test_acc: best.original_test_acc,
                challenge_test_acc: best.challenge_test_acc,
                history_ref: best.history_ref.clone(),
                dev_selected_lr: dev_best.lr,
                dev_selected_original_acc: dev_best.original_test_acc,
                dev_selected_challenge_acc: dev_best.challenge_test_acc,
            }
        })
        .collect();

    let mut report = InoculationReport {
        challenge_name: challenge_name.to_string(),
        pre_original_acc,
        pre_challenge_acc,
        points,
        outcome: None,
    };
    if report.performance_gap() > 0.0 {
        report.outcome = Some(classify(&report, thresholds)?);
    }
    Ok(report)
}

/// Number of fine-tuning runs a plan will execute.
pub fn sweep_cardinality(plan: &FineTunePlan) -> usize {
    plan.sizes.len() * plan.lr_grid.len()
}

/// Writes the report as pretty JSON.
pub fn write_report(report: &InoculationReport, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::runtime(format!("serializing report: {e}")))?;
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_report(path: &Path) -> Result<InoculationReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FeatureConfig;
    use crate::perturb::{make_challenge_bundle, Transformation, TransformKind};
    use crate::synthgen::{gen_original, SplitCounts, SynthConfig};
    use crate::trainer::train;

    fn setup() -> (Checkpoint, DatasetBundle, DatasetBundle, FeatureConfig) {
        let cfg = SynthConfig {
            counts: SplitCounts { train: 400, dev: 100, test: 100 },
            seed: 51,
            ..SynthConfig::default()
        };
        let original = gen_original(&cfg).unwrap();
        let t = Transformation::new(TransformKind::WordOverlap, 3);
        let challenge = make_challenge_bundle(&original, &t, 200, 4).unwrap();
        let model_cfg = FeatureConfig { hash_dim: 1 << 12, ..FeatureConfig::default() };
        let train_cfg = TrainConfig { max_epochs: 8, seed: 2, ..TrainConfig::default() };
        let base = train(&train_cfg, &model_cfg, &original.train, &original.dev).unwrap();
        (base, original, challenge, model_cfg)
    }

    #[test]
    fn zero_size_point_equals_pre_inoculation() {
        let (base, original, challenge, _) = setup();
        let plan = FineTunePlan { sizes: vec![0], lr_grid: vec![1e-3, 1e-2], ..FineTunePlan::default() };
        let report = run_protocol(
            &base,
            &original,
            &challenge,
            &plan,
            &TrainConfig::default(),
            &OutcomeThresholds::default(),
            "word_overlap",
            None,
        )
        .unwrap();
        assert_eq!(report.points.len(), 1);
        let p = &report.points[0];
        assert_eq!(p.size, 0);
        assert_eq!(p.original_test_acc, report.pre_original_acc);
        assert_eq!(p.challenge_test_acc, report.pre_challenge_acc);
    }

    #[test]
    fn sweep_runs_and_selection_match_logs() {
        let (base, original, challenge, _) = setup();
        let plan = FineTunePlan {
            sizes: vec![10, 50],
            lr_grid: vec![1e-4, 1e-2],
            patience: 3,
            seed: 9,
        };
        let dir = tempfile::tempdir().unwrap();
        let tune_cfg = TrainConfig { max_epochs: 6, ..TrainConfig::default() };
        let report = run_protocol(
            &base,
            &original,
            &challenge,
            &plan,
            &tune_cfg,
            &OutcomeThresholds::default(),
            "word_overlap",
            Some(dir.path()),
        )
        .unwrap();
        assert_eq!(report.points.len(), 2);
        // one log file per grid cell
        let logs = std::fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(logs, sweep_cardinality(&plan));
        // the selected lr's accuracy is the max over the grid: re-run the
        // losing cells and compare
        for p in &report.points {
            for &lr in &plan.lr_grid {
                let subset = subsample_inclusive(&challenge.train, &[p.size], plan.seed)
                    .unwrap()
                    .pop()
                    .unwrap();
                let cfg = TrainConfig {
                    initial_lr: lr,
                    patience: plan.patience,
                    seed: plan.seed,
                    ..tune_cfg.clone()
                };
                let tuned =
                    fine_tune(&base, &subset, &original.dev, &base.params.feature_config, &cfg)
                        .unwrap();
                let acc = evaluate(&tuned, &challenge.test).unwrap();
                assert!(
                    acc <= p.challenge_test_acc + 1e-12,
                    "size {} lr {lr}: {acc} beats selected {}",
                    p.size,
                    p.challenge_test_acc
                );
            }
        }
    }

    #[test]
    fn protocol_is_deterministic() {
        let (base, original, challenge, _) = setup();
        let plan = FineTunePlan { sizes: vec![5, 25], lr_grid: vec![1e-3, 1e-2], patience: 3, seed: 1 };
        let tune_cfg = TrainConfig { max_epochs: 5, ..TrainConfig::default() };
        let run = || {
            run_protocol(
                &base,
                &original,
                &challenge,
                &plan,
                &tune_cfg,
                &OutcomeThresholds::default(),
                "word_overlap",
                None,
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn plan_validation() {
        let plan = FineTunePlan { sizes: vec![10, 10], ..FineTunePlan::default() };
        assert!(plan.validate(100).is_err());
        let plan = FineTunePlan { sizes: vec![10, 2000], ..FineTunePlan::default() };
        assert!(plan.validate(100).is_err());
        let plan = FineTunePlan { lr_grid: vec![], ..FineTunePlan::default() };
        assert!(plan.validate(2000).is_err());
    }

    #[test]
    fn gap_arithmetic() {
        let report = InoculationReport {
            challenge_name: "x".into(),
            pre_original_acc: 0.88,
            pre_challenge_acc: 0.58,
            points: vec![],
            outcome: None,
        };
        assert!((report.performance_gap() - 0.30).abs() < 1e-12);

        let point = InoculationPoint {
            size: 100,
            best_lr: 1e-3,
            original_test_acc: 0.87,
            challenge_test_acc: 0.85,
            history_ref: String::new(),
            dev_selected_lr: 1e-3,
            dev_selected_original_acc: 0.87,
            dev_selected_challenge_acc: 0.85,
        };
        assert!((report.gap_closure(&point).unwrap() - 0.90).abs() < 1e-9);

        let same = InoculationPoint { challenge_test_acc: 0.58, ..point.clone() };
        assert!(report.gap_closure(&same).unwrap().abs() < 1e-12);
        let full = InoculationPoint { challenge_test_acc: 0.88, ..point };
        assert!((report.gap_closure(&full).unwrap() - 1.0).abs() < 1e-12);

        let flat = InoculationReport { pre_challenge_acc: 0.88, ..report.clone() };
        assert!(flat.performance_gap().abs() < 1e-12);
        let negative = InoculationReport { pre_challenge_acc: 0.95, ..report };
        assert!(negative.performance_gap() < 0.0);
        let p = InoculationPoint {
            size: 5,
            best_lr: 1e-3,
            original_test_acc: 0.88,
            challenge_test_acc: 0.95,
            history_ref: String::new(),
            dev_selected_lr: 1e-3,
            dev_selected_original_acc: 0.88,
            dev_selected_challenge_acc: 0.95,
        };
        assert!(negative.gap_closure(&p).is_err());
    }
}
