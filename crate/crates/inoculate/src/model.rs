//! A from-scratch differentiable text-pair classifier: hashed sparse
//! features into a 3-way softmax, with exact gradients for mean
//! cross-entropy plus L2.
//!
//! Feature hashing uses a fixed 64-bit FNV-1a hash with fixed per-namespace
//! salts (see `hash`), so feature vectors are identical across processes and
//! platforms.

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Example, Label};
use crate::error::{Error, Result};
use crate::hash::fnv1a64;

// Namespace salts. Premise and hypothesis tokens hash into disjoint streams
// so the model can weight the two fields separately.
const SALT_PREMISE_UNIGRAM: u64 = 0x01;
const SALT_HYPOTHESIS_UNIGRAM: u64 = 0x02;
const SALT_PREMISE_BIGRAM: u64 = 0x03;
const SALT_HYPOTHESIS_BIGRAM: u64 = 0x04;
const SALT_PREMISE_CHAR: u64 = 0x05;
const SALT_HYPOTHESIS_CHAR: u64 = 0x06;
const SALT_OVERLAP_BUCKET: u64 = 0x07;

pub const NUM_CLASSES: usize = 3;
pub const OVERLAP_BUCKETS: usize = 10;

/// Feature value emitted for the active overlap bucket. The bucket is a
/// single structural feature competing against tens of token features per
/// example; a boosted value keeps gradient mass concentrated on it so that
/// overlap statistics are learned (and re-learned during fine-tuning)
/// through the bucket weights rather than through diffuse token weights and
/// the class biases.
pub const OVERLAP_FEATURE_VALUE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub hash_dim: usize,
    pub use_unigrams: bool,
    pub use_bigrams: bool,
    /// Bucketized token-overlap ratio between premise and hypothesis,
    /// one-hot over 10 buckets.
    pub use_cross_overlap: bool,
    /// Character 3-5-grams per word, hashed into the same space. Off by
    /// default; stands in for a character-sensitive encoder.
    pub use_char_ngrams: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            hash_dim: 1 << 18,
            use_unigrams: true,
            use_bigrams: true,
            use_cross_overlap: true,
            use_char_ngrams: false,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hash_dim < 2 {
            return Err(Error::config(format!("hash_dim must be >= 2, got {}", self.hash_dim)));
        }
        if !(self.use_unigrams || self.use_bigrams || self.use_cross_overlap || self.use_char_ngrams)
        {
            return Err(Error::config("at least one feature family must be enabled"));
        }
        Ok(())
    }
}

/// Sparse feature vector: (index, value) pairs sorted by index.
pub type SparseVec = Vec<(u32, f64)>;

fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| {
            t.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

fn bucket_index(premise_tokens: &[String], hypothesis_tokens: &[String]) -> usize {
    let prem: HashSet<&str> = premise_tokens.iter().map(|s| s.as_str()).collect();
    let hyp: HashSet<&str> = hypothesis_tokens.iter().map(|s| s.as_str()).collect();
    if hyp.is_empty() {
        return 0;
    }
    let overlap = hyp.iter().filter(|t| prem.contains(**t)).count();
    let ratio = overlap as f64 / hyp.len() as f64;
    ((ratio * OVERLAP_BUCKETS as f64) as usize).min(OVERLAP_BUCKETS - 1)
}

fn add(acc: &mut BTreeMap<u32, f64>, hash_dim: usize, salt: u64, data: &[u8], value: f64) {
    let idx = (fnv1a64(salt, data) % hash_dim as u64) as u32;
    *acc.entry(idx).or_insert(0.0) += value;
}

fn add_field(
    acc: &mut BTreeMap<u32, f64>,
    cfg: &FeatureConfig,
    tokens: &[String],
    uni_salt: u64,
    bi_salt: u64,
    char_salt: u64,
) {
    if cfg.use_unigrams {
        for t in tokens {
            add(acc, cfg.hash_dim, uni_salt, t.as_bytes(), 1.0);
        }
    }
    if cfg.use_bigrams {
        for pair in tokens.windows(2) {
            let joined = format!("{} {}", pair[0], pair[1]);
            add(acc, cfg.hash_dim, bi_salt, joined.as_bytes(), 1.0);
        }
    }
    if cfg.use_char_ngrams {
        for t in tokens {
            let chars: Vec<char> = t.chars().collect();
            for n in 3..=5usize {
                if chars.len() < n {
                    break;
                }
                for window in chars.windows(n) {
                    let gram: String = window.iter().collect();
                    add(acc, cfg.hash_dim, char_salt, gram.as_bytes(), 1.0);
                }
            }
        }
    }
}

/// Hashes an example into a sparse count vector. Deterministic across
/// processes and platforms.
pub fn featurize(e: &Example, cfg: &FeatureConfig) -> SparseVec {
    let premise_tokens = tokenize(&e.premise);
    let hypothesis_tokens = tokenize(&e.hypothesis);
    let mut acc: BTreeMap<u32, f64> = BTreeMap::new();

    add_field(
        &mut acc,
        cfg,
        &premise_tokens,
        SALT_PREMISE_UNIGRAM,
        SALT_PREMISE_BIGRAM,
        SALT_PREMISE_CHAR,
    );
    add_field(
        &mut acc,
        cfg,
        &hypothesis_tokens,
        SALT_HYPOTHESIS_UNIGRAM,
        SALT_HYPOTHESIS_BIGRAM,
        SALT_HYPOTHESIS_CHAR,
    );
    if cfg.use_cross_overlap {
        // Bucket 0 is the reference category and emits no feature: a
        // zero-overlap indicator would be collinear with the class biases,
        // and dropping it keeps disjoint premise/hypothesis pairs from
        // sharing a trainable direction.
        let bucket = bucket_index(&premise_tokens, &hypothesis_tokens);
        if bucket != 0 {
            add(
                &mut acc,
                cfg.hash_dim,
                SALT_OVERLAP_BUCKET,
                format!("{bucket}").as_bytes(),
                OVERLAP_FEATURE_VALUE,
            );
        }
    }
    acc.into_iter().collect()
}

/// Dense softmax weights bound to the featurization recipe that produced
/// their index space.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Row-major `[NUM_CLASSES][hash_dim]`.
    pub weights: Vec<f64>,
    pub bias: [f64; NUM_CLASSES],
    pub feature_config: FeatureConfig,
}

impl ModelParams {
    pub fn zeros(feature_config: FeatureConfig) -> Result<Self> {
        feature_config.validate()?;
        Ok(ModelParams {
            weights: vec![0.0; NUM_CLASSES * feature_config.hash_dim],
            bias: [0.0; NUM_CLASSES],
            feature_config,
        })
    }

    #[inline]
    pub fn weight(&self, class: usize, index: u32) -> f64 {
        self.weights[class * self.feature_config.hash_dim + index as usize]
    }

    #[inline]
    pub fn weight_mut(&mut self, class: usize, index: u32) -> &mut f64 {
        &mut self.weights[class * self.feature_config.hash_dim + index as usize]
    }

    pub fn logits(&self, features: &SparseVec) -> [f64; NUM_CLASSES] {
        let mut logits = self.bias;
        for &(idx, value) in features {
            for (class, logit) in logits.iter_mut().enumerate() {
                *logit += self.weight(class, idx) * value;
            }
        }
        logits
    }
}

pub(crate) fn softmax(logits: &[f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; NUM_CLASSES];
    let mut sum = 0.0;
    for (i, &l) in logits.iter().enumerate() {
        let e = (l - max).exp();
        out[i] = e;
        sum += e;
    }
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// Softmax probabilities for one feature vector.
pub fn forward(params: &ModelParams, features: &SparseVec) -> Result<[f64; NUM_CLASSES]> {
    let logits = params.logits(features);
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::runtime("non-finite logit in forward pass"));
    }
    Ok(softmax(&logits))
}

/// Gradient with the same shape as the parameters.
#[derive(Debug, Clone)]
pub struct ModelGrad {
    pub weights: Vec<f64>,
    pub bias: [f64; NUM_CLASSES],
}

/// Mean cross-entropy over the batch plus `l2/2 * ||W||^2` (bias excluded),
/// with the exact gradient of that objective.
pub fn loss_and_grad(
    params: &ModelParams,
    batch: &[(SparseVec, Label)],
    l2: f64,
) -> Result<(f64, ModelGrad)> {
    if batch.is_empty() {
        return Err(Error::data("loss_and_grad requires a nonempty batch"));
    }
    let dim = params.feature_config.hash_dim;
    let mut grad = ModelGrad { weights: vec![0.0; NUM_CLASSES * dim], bias: [0.0; NUM_CLASSES] };
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for (features, label) in batch {
        let probs = forward(params, features)?;
        let p = probs[label.index()].max(f64::MIN_POSITIVE);
        loss -= scale * p.ln();
        for class in 0..NUM_CLASSES {
            let coef = scale * (probs[class] - if class == label.index() { 1.0 } else { 0.0 });
            grad.bias[class] += coef;
            for &(idx, value) in features {
                grad.weights[class * dim + idx as usize] += coef * value;
            }
        }
    }
    if l2 != 0.0 {
        let mut penalty = 0.0;
        for (g, &w) in grad.weights.iter_mut().zip(&params.weights) {
            *g += l2 * w;
            penalty += w * w;
        }
        loss += 0.5 * l2 * penalty;
    }
    if !loss.is_finite() {
        return Err(Error::runtime("non-finite loss"));
    }
    Ok((loss, grad))
}

/// Argmax over classes with ties broken by fixed label order
/// (entailment < neutral < contradiction).
pub fn argmax_label(probs: &[f64; NUM_CLASSES]) -> Label {
    let mut best = 0;
    for class in 1..NUM_CLASSES {
        if probs[class] > probs[best] {
            best = class;
        }
    }
    Label::from_index(best)
}

pub fn predict(params: &ModelParams, e: &Example) -> Result<Label> {
    let features = featurize(e, &params.feature_config);
    Ok(argmax_label(&forward(params, &features)?))
}

/// One training-history row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub dev_acc: f64,
}

/// Trained parameters plus the history and seed that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub history: Vec<EpochStats>,
    pub seed: u64,
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"INOCKPT1";

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    feature_config: FeatureConfig,
    seed: u64,
    history: Vec<EpochStats>,
}

impl Checkpoint {
    /// Serializes as: magic, u32-LE header length, JSON header, then the raw
    /// little-endian f64 weight payload (3*hash_dim weights + 3 biases).
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let header = CheckpointHeader {
            feature_config: self.params.feature_config.clone(),
            seed: self.seed,
            history: self.history.clone(),
        };
        let header_bytes = serde_json::to_vec(&header)
            .map_err(|e| Error::runtime(format!("serializing checkpoint header: {e}")))?;
        let io = |e| Error::io(path, e);
        w.write_all(CHECKPOINT_MAGIC).map_err(io)?;
        w.write_all(&(header_bytes.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&header_bytes).map_err(io)?;
        for &value in self.params.weights.iter().chain(self.params.bias.iter()) {
            w.write_all(&value.to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let io = |e| Error::io(path, e);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::data(format!(
                "{}: not a checkpoint file (bad magic)",
                path.display()
            )));
        }
        let mut len_bytes = [0u8; 4];
        r.read_exact(&mut len_bytes).map_err(io)?;
        let mut header_bytes = vec![0u8; u32::from_le_bytes(len_bytes) as usize];
        r.read_exact(&mut header_bytes).map_err(io)?;
        let header: CheckpointHeader = serde_json::from_slice(&header_bytes)
            .map_err(|e| Error::data(format!("{}: bad checkpoint header: {e}", path.display())))?;
        header.feature_config.validate()?;

        let dim = header.feature_config.hash_dim;
        let mut values = vec![0.0f64; NUM_CLASSES * dim + NUM_CLASSES];
        let mut buf = [0u8; 8];
        for value in &mut values {
            r.read_exact(&mut buf).map_err(io)?;
            *value = f64::from_le_bytes(buf);
        }
        let bias_start = NUM_CLASSES * dim;
        let mut bias = [0.0; NUM_CLASSES];
        bias.copy_from_slice(&values[bias_start..]);
        values.truncate(bias_start);
        Ok(Checkpoint {
            params: ModelParams {
                weights: values,
                bias,
                feature_config: header.feature_config,
            },
            history: header.history,
            seed: header.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(premise: &str, hypothesis: &str) -> Example {
        Example {
            id: "t".into(),
            premise: premise.into(),
            hypothesis: hypothesis.into(),
            label: Label::Neutral,
            provenance: None,
        }
    }

    fn small_cfg() -> FeatureConfig {
        FeatureConfig { hash_dim: 64, ..FeatureConfig::default() }
    }

    #[test]
    fn overlap_only_empty_fields() {
        let cfg = FeatureConfig {
            hash_dim: 64,
            use_unigrams: false,
            use_bigrams: false,
            use_cross_overlap: true,
            use_char_ngrams: false,
        };
        // Bucket 0 is the dropped reference category, so zero-overlap and
        // empty-field examples featurize to nothing under overlap-only.
        let f = featurize(&example("", ""), &cfg);
        assert!(f.is_empty());
        let g = featurize(&example("a b c", "x y z"), &cfg);
        assert!(g.is_empty());
    }

    #[test]
    fn identical_fields_hit_highest_bucket() {
        let cfg = FeatureConfig {
            hash_dim: 4096,
            use_unigrams: false,
            use_bigrams: false,
            use_cross_overlap: true,
            use_char_ngrams: false,
        };
        let same = featurize(&example("alpha beta gamma", "alpha beta gamma"), &cfg);
        let expected = (fnv1a64(SALT_OVERLAP_BUCKET, b"9") % 4096) as u32;
        assert_eq!(same, vec![(expected, OVERLAP_FEATURE_VALUE)]);
    }

    #[test]
    fn featurize_deterministic() {
        let cfg = FeatureConfig::default();
        let e = example("the quick brown fox", "a quick fox");
        assert_eq!(featurize(&e, &cfg), featurize(&e, &cfg));
    }

    #[test]
    fn char_ngrams_only_add() {
        let base = small_cfg();
        let with_chars = FeatureConfig { use_char_ngrams: true, ..small_cfg() };
        let e = example("the quick brown fox jumped", "a quick fox");
        let words = featurize(&e, &base);
        let full = featurize(&e, &with_chars);
        let lookup: BTreeMap<u32, f64> = full.into_iter().collect();
        for (idx, value) in words {
            let v = lookup.get(&idx).copied().unwrap_or(0.0);
            assert!(v >= value, "index {idx} shrank from {value} to {v}");
        }
    }

    #[test]
    fn zero_params_uniform() {
        let params = ModelParams::zeros(small_cfg()).unwrap();
        let f = featurize(&example("a b", "c d"), &small_cfg());
        let probs = forward(&params, &f).unwrap();
        for p in probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn large_bias_is_stable() {
        let mut params = ModelParams::zeros(small_cfg()).unwrap();
        params.bias = [1000.0, 0.0, 0.0];
        let probs = forward(&params, &vec![]).unwrap();
        assert!((probs[0] - 1.0).abs() < 1e-12);
        assert!(probs.iter().all(|p| p.is_finite()));
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut params = ModelParams::zeros(small_cfg()).unwrap();
        for (i, w) in params.weights.iter_mut().enumerate() {
            *w = ((i * 37) % 23) as f64 / 7.0 - 1.5;
        }
        let f = featurize(&example("one two three", "three four"), &small_cfg());
        let probs = forward(&params, &f).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_loss_is_ln3() {
        let params = ModelParams::zeros(small_cfg()).unwrap();
        let f = featurize(&example("a b c", "d e"), &small_cfg());
        let (loss, _) = loss_and_grad(&params, &[(f, Label::Contradiction)], 0.0).unwrap();
        assert!((loss - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn duplicated_example_same_mean_loss() {
        let mut params = ModelParams::zeros(small_cfg()).unwrap();
        params.bias = [0.3, -0.2, 0.1];
        let f = featurize(&example("a b c", "d e"), &small_cfg());
        let single = vec![(f.clone(), Label::Neutral)];
        let double = vec![(f.clone(), Label::Neutral), (f, Label::Neutral)];
        let (l1, _) = loss_and_grad(&params, &single, 0.0).unwrap();
        let (l2, _) = loss_and_grad(&params, &double, 0.0).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
    }

    #[test]
    fn empty_batch_errors() {
        let params = ModelParams::zeros(small_cfg()).unwrap();
        assert!(loss_and_grad(&params, &[], 0.0).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let cfg = small_cfg();
        let mut params = ModelParams::zeros(cfg.clone()).unwrap();
        for w in &mut params.weights {
            *w = rng.gen_range(-1.0..1.0);
        }
        let batch: Vec<(SparseVec, Label)> = (0..5)
            .map(|i| {
                let e = example(&format!("tok{i} tok{} alpha", i + 1), &format!("tok{i} beta"));
                (featurize(&e, &cfg), Label::ALL[i % 3])
            })
            .collect();
        let l2 = 1e-3;
        let (_, grad) = loss_and_grad(&params, &batch, l2).unwrap();
        let step = 1e-5;
        for k in 0..10 {
            let coord = (k * 977) % params.weights.len();
            let mut plus = params.clone();
            plus.weights[coord] += step;
            let mut minus = params.clone();
            minus.weights[coord] -= step;
            let (lp, _) = loss_and_grad(&plus, &batch, l2).unwrap();
            let (lm, _) = loss_and_grad(&minus, &batch, l2).unwrap();
            let fd = (lp - lm) / (2.0 * step);
            let g = grad.weights[coord];
            let denom = g.abs().max(fd.abs()).max(1e-8);
            assert!(
                ((g - fd) / denom).abs() < 1e-5,
                "coord {coord}: analytic {g} vs fd {fd}"
            );
        }
    }

    #[test]
    fn predict_tie_break_and_bias() {
        let cfg = small_cfg();
        let zero = ModelParams::zeros(cfg.clone()).unwrap();
        let e = example("a b c", "c d");
        assert_eq!(predict(&zero, &e).unwrap(), Label::Entailment);

        let mut contra = ModelParams::zeros(cfg).unwrap();
        contra.bias[Label::Contradiction.index()] = 50.0;
        assert_eq!(predict(&contra, &e).unwrap(), Label::Contradiction);
    }

    #[test]
    fn predict_agrees_with_forward() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let cfg = small_cfg();
        let mut params = ModelParams::zeros(cfg.clone()).unwrap();
        for w in &mut params.weights {
            *w = rng.gen_range(-2.0..2.0);
        }
        for i in 0..1000 {
            let e = example(
                &format!("w{} w{} w{}", i % 50, (i * 7) % 50, (i * 13) % 50),
                &format!("w{} w{}", (i * 3) % 50, (i * 11) % 50),
            );
            let f = featurize(&e, &cfg);
            let via_forward = argmax_label(&forward(&params, &f).unwrap());
            assert_eq!(predict(&params, &e).unwrap(), via_forward);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let mut params = ModelParams::zeros(small_cfg()).unwrap();
        for w in &mut params.weights {
            *w = rng.gen_range(-1.0..1.0);
        }
        params.bias = [0.1, -0.7, 3.25];
        let ckpt = Checkpoint {
            params,
            history: vec![EpochStats { epoch: 1, lr: 0.5, train_loss: 1.09, dev_acc: 0.4 }],
            seed: 99,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(ckpt, back);
    }

    #[test]
    fn checkpoint_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"NOTACKPTxxxxxxxxxxxx").unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
