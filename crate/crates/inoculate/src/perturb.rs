//! Challenge transformations: tautology suffixes, spelling corruption and
//! distractor appending, plus challenge-bundle assembly.
//!
//! Every transformation preserves the id and label of its input and stamps
//! the kind into `provenance`. Stochastic kinds key their randomness on
//! (seed, example id) so a split can be reordered without changing any
//! individual output.

use std::collections::HashSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{subsample_inclusive, DatasetBundle, DatasetSplit, Example};
use crate::error::{Error, Result};
use crate::hash::fnv1a64;

pub const WORD_OVERLAP_SUFFIX: &str = "and true is true";
pub const NEGATION_SUFFIX: &str = "and false is not true";

/// Tokens never counted as content when building distractor sentences.
const NON_CONTENT: [&str; 6] = ["and", "is", "true", "false", "no", "not"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    WordOverlap,
    Negation,
    SpellingError,
    LengthMismatch,
    Distractor,
}

impl TransformKind {
    pub const ALL: [TransformKind; 5] = [
        TransformKind::WordOverlap,
        TransformKind::Negation,
        TransformKind::SpellingError,
        TransformKind::LengthMismatch,
        TransformKind::Distractor,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TransformKind::WordOverlap => "word_overlap",
            TransformKind::Negation => "negation",
            TransformKind::SpellingError => "spelling_error",
            TransformKind::LengthMismatch => "length_mismatch",
            TransformKind::Distractor => "distractor",
        }
    }

    pub fn parse(s: &str) -> Option<TransformKind> {
        TransformKind::ALL.iter().copied().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transformation {
    pub kind: TransformKind,
    /// Only consulted by the stochastic kinds (spelling_error, distractor).
    pub seed: u64,
}

impl Transformation {
    pub fn new(kind: TransformKind, seed: u64) -> Self {
        Transformation { kind, seed }
    }

    /// Per-example RNG, keyed on (seed, id).
    fn example_rng(&self, id: &str) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a64(0x7e, id.as_bytes()))
    }

    pub fn apply(&self, e: &Example) -> Result<Example> {
        let mut out = e.clone();
        out.provenance = Some(self.kind.as_str().to_string());
        match self.kind {
            TransformKind::WordOverlap => {
                out.hypothesis = format!("{} {}", e.hypothesis, WORD_OVERLAP_SUFFIX);
            }
            TransformKind::Negation => {
                out.hypothesis = format!("{} {}", e.hypothesis, NEGATION_SUFFIX);
            }
            TransformKind::LengthMismatch => {
                let mut premise = e.premise.clone();
                for _ in 0..5 {
                    premise.push(' ');
                    premise.push_str(WORD_OVERLAP_SUFFIX);
                }
                out.premise = premise;
            }
            TransformKind::SpellingError => {
                out.hypothesis = self.corrupt_spelling(e)?;
            }
            TransformKind::Distractor => {
                let distractor = self.make_distractor(e);
                out.premise = format!("{} {}", e.premise, distractor);
            }
        }
        Ok(out)
    }

    /// Swaps one adjacent character pair inside one uniformly chosen word of
    /// length >= 3. The word is drawn uniformly among corruptible words —
    /// those with an adjacent pair of differing characters past the first
    /// character — and the pair uniformly within the word; requiring the
    /// characters to differ pins the edit distance to exactly 1.
    fn corrupt_spelling(&self, e: &Example) -> Result<String> {
        let words: Vec<&str> = e.hypothesis.split(' ').collect();
        let mut candidates: Vec<(usize, Vec<usize>)> = Vec::new();
        for (wi, word) in words.iter().enumerate() {
            let chars: Vec<char> = word.chars().collect();
            if chars.len() < 3 {
                continue;
            }
            let slots: Vec<usize> =
                (1..chars.len() - 1).filter(|&i| chars[i] != chars[i + 1]).collect();
            if !slots.is_empty() {
                candidates.push((wi, slots));
            }
        }
        if candidates.is_empty() {
            return Err(Error::data(format!(
                "example {}: hypothesis has no corruptible word of length >= 3",
                e.id
            )));
        }
        let mut rng = self.example_rng(&e.id);
        let (wi, slots) = &candidates[rng.gen_range(0..candidates.len())];
        let ci = slots[rng.gen_range(0..slots.len())];
        let mut words: Vec<String> = words.iter().map(|w| w.to_string()).collect();
        let mut chars: Vec<char> = words[*wi].chars().collect();
        chars.swap(ci, ci + 1);
        words[*wi] = chars.into_iter().collect();
        Ok(words.join(" "))
    }

    /// Builds a distractor sentence as a near-copy of the hypothesis: one
    /// content token is replaced with a vocabulary token absent from the
    /// hypothesis, so the distractor shares all remaining content tokens.
    fn make_distractor(&self, e: &Example) -> String {
        let mut rng = self.example_rng(&e.id);
        let tokens: Vec<&str> = e.hypothesis.split_whitespace().collect();
        let hyp_set: HashSet<&str> = tokens.iter().copied().collect();
        let content: Vec<usize> = tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| !NON_CONTENT.contains(t))
            .map(|(i, _)| i)
            .collect();
        let target = if content.is_empty() {
            rng.gen_range(0..tokens.len())
        } else {
            content[rng.gen_range(0..content.len())]
        };
        let replacement = loop {
            let cand = format!("w{}", rng.gen_range(0..100_000u32));
            if !hyp_set.contains(cand.as_str()) {
                break cand;
            }
        };
        let mut out: Vec<String> = tokens.iter().map(|t| t.to_string()).collect();
        out[target] = replacement;
        out.join(" ")
    }
}

/// Applies a transformation to a whole split.
pub fn transform_split(split: &DatasetSplit, t: &Transformation) -> Result<DatasetSplit> {
    let examples = split.examples.iter().map(|e| t.apply(e)).collect::<Result<Vec<_>>>()?;
    Ok(DatasetSplit::new(split.name.clone(), examples))
}

/// Builds a challenge bundle: all splits transformed, and the challenge train
/// reduced to a `train_size` pool drawn by inclusive subsampling so nested
/// fine-tuning subsets can later be taken as prefixes.
pub fn make_challenge_bundle(
    source: &DatasetBundle,
    t: &Transformation,
    train_size: usize,
    seed: u64,
) -> Result<DatasetBundle> {
    if train_size > source.train.len() {
        return Err(Error::config(format!(
            "challenge train size {} exceeds source train size {}",
            train_size,
            source.train.len()
        )));
    }
    let train_full = transform_split(&source.train, t)?;
    let train = subsample_inclusive(&train_full, &[train_size], seed)?.pop().unwrap();
    Ok(DatasetBundle {
        train: DatasetSplit::new("train", train.examples),
        dev: transform_split(&source.dev, t)?,
        test: transform_split(&source.test, t)?,
    })
}
