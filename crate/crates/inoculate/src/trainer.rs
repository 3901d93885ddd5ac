//! Training and fine-tuning loops: seeded minibatch gradient descent with
//! halve-on-plateau learning rates and patience-based early stopping, both
//! driven by dev accuracy.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{DatasetSplit, Label};
use crate::error::{Error, Result};
use crate::model::{
    argmax_label, featurize, forward, Checkpoint, EpochStats, FeatureConfig, ModelParams,
    SparseVec, NUM_CLASSES,
};

/// Which split drives scheduling and early stopping. Fine-tuning validates on
/// the original dev set, never on challenge data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationSplitRole {
    #[default]
    OriginalDev,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub lr_halving: bool,
    pub l2: f64,
    pub seed: u64,
    pub validation_split_role: ValidationSplitRole,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            initial_lr: 0.5,
            batch_size: 32,
            max_epochs: 75,
            patience: 5,
            lr_halving: true,
            l2: 1e-6,
            seed: 0,
            validation_split_role: ValidationSplitRole::OriginalDev,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial_lr <= 0.0 || !self.initial_lr.is_finite() {
            return Err(Error::config(format!("initial_lr must be positive, got {}", self.initial_lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if self.patience == 0 {
            return Err(Error::config("patience must be >= 1"));
        }
        if self.l2 < 0.0 {
            return Err(Error::config(format!("l2 must be nonnegative, got {}", self.l2)));
        }
        Ok(())
    }
}

const IMPROVE_EPS: f64 = 1e-12;

/// The scheduling rules in isolation: a pure function of the observed
/// dev-metric sequence and the patience, independent of any model.
#[derive(Debug, Clone)]
pub struct Schedule {
    pub lr: f64,
    patience: usize,
    halving: bool,
    best: f64,
    streak: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub improved: bool,
    pub stop: bool,
}

impl Schedule {
    pub fn new(initial_lr: f64, patience: usize, halving: bool) -> Self {
        Schedule { lr: initial_lr, patience, halving, best: f64::NEG_INFINITY, streak: 0 }
    }

    /// Feeds one end-of-epoch dev metric. "Improved" means strictly greater
    /// than the best seen so far (epsilon 1e-12); a non-improving epoch
    /// halves the learning rate, and `patience` consecutive non-improving
    /// epochs stop training.
    pub fn observe(&mut self, metric: f64) -> Observation {
        let improved = metric > self.best + IMPROVE_EPS;
        if improved {
            self.best = metric;
            self.streak = 0;
        } else {
            self.streak += 1;
            if self.halving {
                self.lr /= 2.0;
            }
        }
        Observation { improved, stop: self.streak >= self.patience }
    }
}

/// Trace of a schedule run over a stubbed metric sequence; used to test the
/// scheduling arithmetic without a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleTrace {
    /// Epoch after which training stopped (1-based); equals the sequence
    /// length if the patience never ran out.
    pub stop_epoch: usize,
    /// Epoch whose parameters a training run would return (best metric,
    /// first achiever), or 0 if nothing ever improved on -inf.
    pub best_epoch: usize,
    /// Learning rate in effect during each executed epoch.
    pub lrs: Vec<f64>,
    /// Learning rate after the final observation.
    pub final_lr: f64,
}

pub fn simulate_schedule(
    initial_lr: f64,
    patience: usize,
    halving: bool,
    metrics: &[f64],
) -> ScheduleTrace {
    let mut schedule = Schedule::new(initial_lr, patience, halving);
    let mut trace =
        ScheduleTrace { stop_epoch: metrics.len(), best_epoch: 0, lrs: Vec::new(), final_lr: initial_lr };
    for (i, &metric) in metrics.iter().enumerate() {
        trace.lrs.push(schedule.lr);
        let obs = schedule.observe(metric);
        if obs.improved {
            trace.best_epoch = i + 1;
        }
        if obs.stop {
            trace.stop_epoch = i + 1;
            break;
        }
    }
    trace.final_lr = schedule.lr;
    trace
}

pub(crate) fn featurize_split(
    split: &DatasetSplit,
    cfg: &FeatureConfig,
) -> Vec<(SparseVec, Label)> {
    split.examples.iter().map(|e| (featurize(e, cfg), e.label)).collect()
}

pub(crate) fn accuracy_featurized(
    params: &ModelParams,
    feats: &[(SparseVec, Label)],
) -> Result<f64> {
    if feats.is_empty() {
        return Err(Error::data("cannot evaluate on an empty split"));
    }
    let mut correct = 0usize;
    for (f, label) in feats {
        if argmax_label(&forward(params, f)?) == *label {
            correct += 1;
        }
    }
    Ok(correct as f64 / feats.len() as f64)
}

/// One minibatch gradient step. Probabilities for the whole batch are
/// computed against the pre-step parameters, then applied, so this is true
/// minibatch descent rather than per-example SGD. The L2 term is applied to
/// the indices active in the batch only (lazy sparse decay).
fn sgd_batch(
    params: &mut ModelParams,
    feats: &[(SparseVec, Label)],
    batch: &[usize],
    lr: f64,
    l2: f64,
) -> Result<f64> {
    let scale = 1.0 / batch.len() as f64;
    let mut coefs: Vec<[f64; NUM_CLASSES]> = Vec::with_capacity(batch.len());
    let mut loss = 0.0;
    for &i in batch {
        let (features, label) = &feats[i];
        let probs = forward(params, features)?;
        loss -= scale * probs[label.index()].max(f64::MIN_POSITIVE).ln();
        let mut coef = [0.0; NUM_CLASSES];
        for (class, c) in coef.iter_mut().enumerate() {
            *c = scale * (probs[class] - if class == label.index() { 1.0 } else { 0.0 });
        }
        coefs.push(coef);
    }
    let mut touched: Vec<u32> = Vec::new();
    for (&i, coef) in batch.iter().zip(&coefs) {
        let (features, _) = &feats[i];
        for &(idx, value) in features {
            touched.push(idx);
            for (class, &c) in coef.iter().enumerate() {
                *params.weight_mut(class, idx) -= lr * c * value;
            }
        }
        for (class, &c) in coef.iter().enumerate() {
            params.bias[class] -= lr * c;
        }
    }
    if l2 != 0.0 {
        touched.sort_unstable();
        touched.dedup();
        for &idx in &touched {
            for class in 0..NUM_CLASSES {
                let w = params.weight(class, idx);
                *params.weight_mut(class, idx) = w - lr * l2 * w;
            }
        }
    }
    Ok(loss)
}

fn train_from(
    init: ModelParams,
    cfg: &TrainConfig,
    train: &DatasetSplit,
    dev: &DatasetSplit,
) -> Result<Checkpoint> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::data("training split is empty"));
    }
    if dev.is_empty() {
        return Err(Error::data("dev split is empty"));
    }
    let model_cfg = init.feature_config.clone();
    let feats_train = featurize_split(train, &model_cfg);
    let feats_dev = featurize_split(dev, &model_cfg);

    let mut params = init;
    let mut best_params = params.clone();
    let mut schedule = Schedule::new(cfg.initial_lr, cfg.patience, cfg.lr_halving);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..feats_train.len()).collect();
    let mut history = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        let lr = schedule.lr;
        for i in (1..order.len()).rev() {
            let j = (rng.next_u64() % (i as u64 + 1)) as usize;
            order.swap(i, j);
        }
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            loss_sum += sgd_batch(&mut params, &feats_train, batch, lr, cfg.l2)? * batch.len() as f64;
        }
        let train_loss = loss_sum / feats_train.len() as f64;
        let dev_acc = accuracy_featurized(&params, &feats_dev)?;
        history.push(EpochStats { epoch, lr, train_loss, dev_acc });
        let obs = schedule.observe(dev_acc);
        if obs.improved {
            best_params = params.clone();
        }
        if obs.stop {
            break;
        }
    }
    Ok(Checkpoint { params: best_params, history, seed: cfg.seed })
}

/// Trains a fresh model. Returns the parameters of the best-dev epoch, with
/// the full per-epoch history attached.
pub fn train(
    cfg: &TrainConfig,
    model_cfg: &FeatureConfig,
    train_split: &DatasetSplit,
    dev: &DatasetSplit,
) -> Result<Checkpoint> {
    train_from(ModelParams::zeros(model_cfg.clone())?, cfg, train_split, dev)
}

/// Fraction of examples where the checkpoint's prediction matches gold.
pub fn evaluate(checkpoint: &Checkpoint, split: &DatasetSplit) -> Result<f64> {
    let feats = featurize_split(split, &checkpoint.params.feature_config);
    accuracy_featurized(&checkpoint.params, &feats)
}

/// Continues training `base` on challenge data, validating on the original
/// dev split. The learning-rate schedule restarts from `cfg.initial_lr`.
/// `base` itself is never mutated. `max_epochs == 0` returns `base` as-is.
pub fn fine_tune(
    base: &Checkpoint,
    challenge_train: &DatasetSplit,
    original_dev: &DatasetSplit,
    model_cfg: &FeatureConfig,
    cfg: &TrainConfig,
) -> Result<Checkpoint> {
    if *model_cfg != base.params.feature_config {
        return Err(Error::config(
            "feature config mismatch between base checkpoint and fine-tune config",
        ));
    }
    if cfg.max_epochs == 0 {
        return Ok(base.clone());
    }
    if challenge_train.is_empty() {
        return Err(Error::data("challenge training split is empty"));
    }
    train_from(base.params.clone(), cfg, challenge_train, original_dev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Example;
    use crate::synthgen::{gen_original, SplitCounts, SynthConfig};

    fn small_model_cfg() -> FeatureConfig {
        FeatureConfig { hash_dim: 1 << 12, ..FeatureConfig::default() }
    }

    fn small_bundle() -> crate::corpus::DatasetBundle {
        gen_original(&SynthConfig {
            counts: SplitCounts { train: 600, dev: 150, test: 150 },
            seed: 33,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn patience_five_schedule_example() {
        let trace = simulate_schedule(0.01, 5, true, &[0.5, 0.6, 0.6, 0.6, 0.6, 0.6, 0.6]);
        assert_eq!(trace.stop_epoch, 7);
        assert_eq!(trace.best_epoch, 2);
    }

    #[test]
    fn two_halvings() {
        let trace = simulate_schedule(0.01, 5, true, &[0.5, 0.4, 0.4]);
        assert!((trace.final_lr - 0.0025).abs() < 1e-15);
    }

    #[test]
    fn no_halving_when_disabled() {
        let trace = simulate_schedule(0.01, 2, false, &[0.5, 0.4, 0.4]);
        assert_eq!(trace.final_lr, 0.01);
        assert_eq!(trace.stop_epoch, 3);
    }

    #[test]
    fn train_is_deterministic() {
        let bundle = small_bundle();
        let cfg = TrainConfig { max_epochs: 5, seed: 7, ..TrainConfig::default() };
        let a = train(&cfg, &small_model_cfg(), &bundle.train, &bundle.dev).unwrap();
        let b = train(&cfg, &small_model_cfg(), &bundle.train, &bundle.dev).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn training_reduces_loss() {
        let bundle = small_bundle();
        let cfg = TrainConfig { max_epochs: 10, seed: 1, ..TrainConfig::default() };
        let ckpt = train(&cfg, &small_model_cfg(), &bundle.train, &bundle.dev).unwrap();
        let first = ckpt.history.first().unwrap().train_loss;
        let last = ckpt.history.last().unwrap().train_loss;
        assert!(last < first, "loss did not decrease: {first} -> {last}");
    }

    #[test]
    fn empty_train_errors() {
        let bundle = small_bundle();
        let empty = DatasetSplit::new("empty", vec![]);
        let cfg = TrainConfig::default();
        assert!(train(&cfg, &small_model_cfg(), &empty, &bundle.dev).is_err());
    }

    #[test]
    fn evaluate_matches_manual_recount() {
        let bundle = small_bundle();
        let cfg = TrainConfig { max_epochs: 3, ..TrainConfig::default() };
        let ckpt = train(&cfg, &small_model_cfg(), &bundle.train, &bundle.dev).unwrap();
        let split = DatasetSplit::new("head", bundle.test.examples[..50].to_vec());
        let acc = evaluate(&ckpt, &split).unwrap();
        let mut correct = 0;
        for e in &split.examples {
            if crate::model::predict(&ckpt.params, e).unwrap() == e.label {
                correct += 1;
            }
        }
        assert!((acc - correct as f64 / 50.0).abs() < 1e-12);
    }

    #[test]
    fn evaluate_constant_prediction() {
        let mut params = ModelParams::zeros(small_model_cfg()).unwrap();
        params.bias[Label::Neutral.index()] = 100.0;
        let ckpt = Checkpoint { params, history: vec![], seed: 0 };
        let split = DatasetSplit::new(
            "all-neutral",
            (0..6)
                .map(|i| Example {
                    id: format!("n{i}"),
                    premise: format!("p{i} q{i}"),
                    hypothesis: format!("h{i}"),
                    label: Label::Neutral,
                    provenance: None,
                })
                .collect(),
        );
        assert_eq!(evaluate(&ckpt, &split).unwrap(), 1.0);
    }

    #[test]
    fn evaluate_third() {
        let params = ModelParams::zeros(small_model_cfg()).unwrap();
        let ckpt = Checkpoint { params, history: vec![], seed: 0 };
        // zero params predict entailment everywhere (tie-break)
        let split = DatasetSplit::new(
            "mixed",
            vec![
                Example { id: "a".into(), premise: "p".into(), hypothesis: "h".into(), label: Label::Entailment, provenance: None },
                Example { id: "b".into(), premise: "p".into(), hypothesis: "h".into(), label: Label::Neutral, provenance: None },
                Example { id: "c".into(), premise: "p".into(), hypothesis: "h".into(), label: Label::Contradiction, provenance: None },
            ],
        );
        let acc = evaluate(&ckpt, &split).unwrap();
        assert!((acc - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn fine_tune_zero_epochs_is_identity() {
        let bundle = small_bundle();
        let model_cfg = small_model_cfg();
        let cfg = TrainConfig { max_epochs: 3, ..TrainConfig::default() };
        let base = train(&cfg, &model_cfg, &bundle.train, &bundle.dev).unwrap();
        let ft_cfg = TrainConfig { max_epochs: 0, ..TrainConfig::default() };
        let out = fine_tune(&base, &bundle.train, &bundle.dev, &model_cfg, &ft_cfg).unwrap();
        assert_eq!(out, base);
    }

    #[test]
    fn fine_tune_rejects_config_mismatch() {
        let bundle = small_bundle();
        let model_cfg = small_model_cfg();
        let cfg = TrainConfig { max_epochs: 2, ..TrainConfig::default() };
        let base = train(&cfg, &model_cfg, &bundle.train, &bundle.dev).unwrap();
        let other = FeatureConfig { hash_dim: 1 << 10, ..FeatureConfig::default() };
        assert!(fine_tune(&base, &bundle.train, &bundle.dev, &other, &cfg).is_err());
    }

    #[test]
    fn fine_tune_does_not_mutate_base() {
        let bundle = small_bundle();
        let model_cfg = small_model_cfg();
        let cfg = TrainConfig { max_epochs: 3, ..TrainConfig::default() };
        let base = train(&cfg, &model_cfg, &bundle.train, &bundle.dev).unwrap();
        let snapshot = base.clone();
        let ft_cfg = TrainConfig { max_epochs: 5, initial_lr: 0.05, ..TrainConfig::default() };
        let _ = fine_tune(&base, &bundle.train, &bundle.dev, &model_cfg, &ft_cfg).unwrap();
        assert_eq!(base, snapshot);
    }

    #[test]
    fn skewed_fine_tune_learns_majority_label() {
        let bundle = small_bundle();
        let model_cfg = small_model_cfg();
        let cfg = TrainConfig { max_epochs: 10, seed: 4, ..TrainConfig::default() };
        let base = train(&cfg, &model_cfg, &bundle.train, &bundle.dev).unwrap();

        // All-one-label challenge split, as in a maximally skewed stress set.
        let skew = DatasetSplit::new(
            "skew",
            bundle
                .test
                .examples
                .iter()
                .map(|e| Example {
                    id: format!("sk-{}", e.id),
                    label: Label::Neutral,
                    ..e.clone()
                })
                .collect(),
        );
        let ft_cfg = TrainConfig {
            max_epochs: 20,
            initial_lr: 0.5,
            seed: 4,
            ..TrainConfig::default()
        };
        let tuned = fine_tune(&base, &skew, &bundle.dev, &model_cfg, &ft_cfg).unwrap();
        let acc = evaluate(&tuned, &skew).unwrap();
        assert!(acc >= 1.0 - 1e-12, "skew accuracy only {acc}");
    }
}
