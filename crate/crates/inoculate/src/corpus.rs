//! Data model for text-pair examples, JSON Lines I/O, split management and
//! inclusive subsampling.
//!
//! The on-disk format is one UTF-8 JSON object per line with keys exactly
//! `id`, `premise`, `hypothesis`, `label` and an optional `provenance`.
//! Label values are `entailment | neutral | contradiction`.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The closed three-way label set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Entailment,
    Neutral,
    Contradiction,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Entailment, Label::Neutral, Label::Contradiction];

    /// Fixed index used for parameter rows and tie-breaking
    /// (entailment < neutral < contradiction).
    pub fn index(self) -> usize {
        match self {
            Label::Entailment => 0,
            Label::Neutral => 1,
            Label::Contradiction => 2,
        }
    }

    pub fn from_index(i: usize) -> Label {
        Label::ALL[i]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Entailment => "entailment",
            Label::Neutral => "neutral",
            Label::Contradiction => "contradiction",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "entailment" => Some(Label::Entailment),
            "neutral" => Some(Label::Neutral),
            "contradiction" => Some(Label::Contradiction),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One text-pair instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub premise: String,
    pub hypothesis: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

impl Example {
    /// Checks the per-example invariants: nonempty id, nonempty premise and
    /// hypothesis after whitespace trimming.
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::data("example id is empty"));
        }
        if self.premise.trim().is_empty() {
            return Err(Error::data(format!("example {}: premise is empty", self.id)));
        }
        if self.hypothesis.trim().is_empty() {
            return Err(Error::data(format!("example {}: hypothesis is empty", self.id)));
        }
        Ok(())
    }
}

/// An ordered, named collection of examples. Iteration order is the
/// construction (or file) order and is stable across loads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub name: String,
    pub examples: Vec<Example>,
}

impl DatasetSplit {
    pub fn new(name: impl Into<String>, examples: Vec<Example>) -> Self {
        DatasetSplit { name: name.into(), examples }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Validates per-example invariants plus id uniqueness within the split.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.examples.len());
        for ex in &self.examples {
            ex.validate()?;
            if !seen.insert(ex.id.as_str()) {
                return Err(Error::data(format!(
                    "duplicate id {:?} in split {:?}",
                    ex.id, self.name
                )));
            }
        }
        Ok(())
    }
}

/// Train/dev/test portions of one dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetBundle {
    pub train: DatasetSplit,
    pub dev: DatasetSplit,
    pub test: DatasetSplit,
}

impl DatasetBundle {
    /// Validates member splits and checks that no id appears in more than
    /// one split.
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.dev.validate()?;
        self.test.validate()?;
        let mut seen: HashSet<&str> = HashSet::new();
        for split in [&self.train, &self.dev, &self.test] {
            for ex in &split.examples {
                if !seen.insert(ex.id.as_str()) {
                    return Err(Error::data(format!(
                        "id {:?} appears in more than one split",
                        ex.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Loads `train.jsonl`, `dev.jsonl` and `test.jsonl` from a directory.
    pub fn load_dir(dir: &Path) -> Result<DatasetBundle> {
        let bundle = DatasetBundle {
            train: load_jsonl(&dir.join("train.jsonl"))?,
            dev: load_jsonl(&dir.join("dev.jsonl"))?,
            test: load_jsonl(&dir.join("test.jsonl"))?,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    /// Writes the three member splits into a directory.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_jsonl(&self.train, &dir.join("train.jsonl"))?;
        write_jsonl(&self.dev, &dir.join("dev.jsonl"))?;
        write_jsonl(&self.test, &dir.join("test.jsonl"))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLine {
    id: String,
    premise: String,
    hypothesis: String,
    label: String,
    #[serde(default)]
    provenance: Option<String>,
}

/// Loads a JSON Lines file into a split named after the file stem,
/// preserving line order. Errors carry the offending line number.
pub fn load_jsonl(path: &Path) -> Result<DatasetSplit> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "split".to_string());

    let mut examples = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawLine = serde_json::from_str(&line).map_err(|e| Error::DataAt {
            path: path.to_path_buf(),
            line: lineno,
            message: format!("malformed JSON object: {e}"),
        })?;
        let label = Label::parse(&raw.label).ok_or_else(|| Error::DataAt {
            path: path.to_path_buf(),
            line: lineno,
            message: format!("unknown label {:?}", raw.label),
        })?;
        let ex = Example {
            id: raw.id,
            premise: raw.premise,
            hypothesis: raw.hypothesis,
            label,
            provenance: raw.provenance,
        };
        ex.validate().map_err(|e| Error::DataAt {
            path: path.to_path_buf(),
            line: lineno,
            message: e.to_string(),
        })?;
        if !seen.insert(ex.id.clone()) {
            return Err(Error::DataAt {
                path: path.to_path_buf(),
                line: lineno,
                message: format!("duplicate id {:?}", ex.id),
            });
        }
        examples.push(ex);
    }
    Ok(DatasetSplit::new(name, examples))
}

/// Writes a split as JSON Lines. `load_jsonl(write_jsonl(s))` reproduces `s`
/// field-for-field (modulo the split name, which comes from the file stem).
pub fn write_jsonl(split: &DatasetSplit, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for ex in &split.examples {
        let line = serde_json::to_string(ex)
            .map_err(|e| Error::runtime(format!("serializing example {}: {e}", ex.id)))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Seeded Fisher-Yates permutation of `0..n`. Hand-rolled so the byte
/// sequence is pinned to the ChaCha8 stream and not to a `rand` shuffle
/// implementation detail.
pub(crate) fn seeded_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        idx.swap(i, j);
    }
    idx
}

/// Nested subsamples: one seeded permutation of the split, prefixes of it at
/// each requested size. Every smaller subsample is therefore contained in
/// every larger one, and the output is fully determined by
/// `(split, sizes, seed)`.
pub fn subsample_inclusive(
    split: &DatasetSplit,
    sizes: &[usize],
    seed: u64,
) -> Result<Vec<DatasetSplit>> {
    for w in sizes.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::config(format!(
                "subsample sizes must be strictly ascending, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    if let Some(&max) = sizes.last() {
        if max > split.len() {
            return Err(Error::config(format!(
                "subsample size {} exceeds split size {}",
                max,
                split.len()
            )));
        }
    }
    let perm = seeded_permutation(split.len(), seed);
    Ok(sizes
        .iter()
        .map(|&k| {
            let examples = perm[..k].iter().map(|&i| split.examples[i].clone()).collect();
            DatasetSplit::new(format!("{}[{}]", split.name, k), examples)
        })
        .collect())
}

/// Per-label counts of a split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct LabelHistogram {
    pub entailment: usize,
    pub neutral: usize,
    pub contradiction: usize,
}

impl LabelHistogram {
    pub fn get(&self, label: Label) -> usize {
        match label {
            Label::Entailment => self.entailment,
            Label::Neutral => self.neutral,
            Label::Contradiction => self.contradiction,
        }
    }

    pub fn total(&self) -> usize {
        self.entailment + self.neutral + self.contradiction
    }
}

pub fn label_histogram(split: &DatasetSplit) -> LabelHistogram {
    let mut h = LabelHistogram::default();
    for ex in &split.examples {
        match ex.label {
            Label::Entailment => h.entailment += 1,
            Label::Neutral => h.neutral += 1,
            Label::Contradiction => h.contradiction += 1,
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn ex(id: &str, label: Label) -> Example {
        Example {
            id: id.to_string(),
            premise: format!("premise of {id}"),
            hypothesis: format!("hypothesis of {id}"),
            label,
            provenance: None,
        }
    }

    fn split_of(n: usize) -> DatasetSplit {
        let examples = (0..n).map(|i| ex(&format!("e{i}"), Label::ALL[i % 3])).collect();
        DatasetSplit::new("s", examples)
    }

    #[test]
    fn load_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        File::create(&path).unwrap();
        let s = load_jsonl(&path).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.name, "empty");
    }

    #[test]
    fn load_two_lines_preserves_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("two.jsonl");
        let mut f = File::create(&path).unwrap();
        writeln!(f, r#"{{"id":"a","premise":"p one","hypothesis":"h one","label":"neutral"}}"#)
            .unwrap();
        writeln!(
            f,
            r#"{{"id":"b","premise":"p two","hypothesis":"h two","label":"entailment"}}"#
        )
        .unwrap();
        let s = load_jsonl(&path).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.examples[0].id, "a");
        assert_eq!(s.examples[1].id, "b");
        assert_eq!(s.examples[0].label, Label::Neutral);
    }

    #[test]
    fn unknown_label_names_value_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let mut f = File::create(&path).unwrap();
        writeln!(f, r#"{{"id":"a","premise":"p","hypothesis":"h","label":"neutral"}}"#).unwrap();
        writeln!(f, r#"{{"id":"b","premise":"p","hypothesis":"h","label":"maybe"}}"#).unwrap();
        let err = load_jsonl(&path).unwrap_err().to_string();
        assert!(err.contains("maybe"), "error should name the label: {err}");
        assert!(err.contains("line 2"), "error should carry the line number: {err}");
    }

    #[test]
    fn write_empty_split() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.jsonl");
        write_jsonl(&DatasetSplit::new("s", vec![]), &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "");
    }

    #[test]
    fn write_one_example_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.jsonl");
        let mut e = ex("a", Label::Contradiction);
        e.provenance = Some("negation".to_string());
        write_jsonl(&DatasetSplit::new("s", vec![e]), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        for key in ["\"id\"", "\"premise\"", "\"hypothesis\"", "\"label\"", "\"provenance\""] {
            assert!(text.contains(key), "missing {key} in {text}");
        }
    }

    #[test]
    fn subsample_zero_size() {
        let subs = subsample_inclusive(&split_of(10), &[0], 7).unwrap();
        assert_eq!(subs.len(), 1);
        assert!(subs[0].is_empty());
    }

    #[test]
    fn subsample_nesting() {
        let split = split_of(1000);
        let subs = subsample_inclusive(&split, &[5, 100], 42).unwrap();
        assert_eq!(subs[0].len(), 5);
        assert_eq!(subs[1].len(), 100);
        let big: HashSet<&str> = subs[1].examples.iter().map(|e| e.id.as_str()).collect();
        for e in &subs[0].examples {
            assert!(big.contains(e.id.as_str()));
        }
    }

    #[test]
    fn subsample_rejects_bad_sizes() {
        let split = split_of(10);
        assert!(subsample_inclusive(&split, &[5, 5], 0).is_err());
        assert!(subsample_inclusive(&split, &[3, 11], 0).is_err());
    }

    #[test]
    fn histogram_cases() {
        let h = label_histogram(&DatasetSplit::new("s", vec![]));
        assert_eq!(h.total(), 0);

        let s = DatasetSplit::new(
            "s",
            (0..3).map(|i| ex(&format!("e{i}"), Label::Entailment)).collect(),
        );
        let h = label_histogram(&s);
        assert_eq!((h.entailment, h.neutral, h.contradiction), (3, 0, 0));
    }

    #[test]
    fn bundle_rejects_cross_split_id() {
        let bundle = DatasetBundle {
            train: DatasetSplit::new("train", vec![ex("a", Label::Neutral)]),
            dev: DatasetSplit::new("dev", vec![ex("a", Label::Neutral)]),
            test: DatasetSplit::new("test", vec![]),
        };
        assert!(bundle.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_example() -> impl Strategy<Value = Example> {
            (
                "[a-z0-9]{1,12}",
                "[a-z ]{1,40}",
                "[a-z ]{1,40}",
                0usize..3,
                proptest::option::of("[a-z_]{1,10}"),
            )
                .prop_filter_map("nonempty after trim", |(id, p, h, l, prov)| {
                    if p.trim().is_empty() || h.trim().is_empty() {
                        return None;
                    }
                    Some(Example {
                        id,
                        premise: p,
                        hypothesis: h,
                        label: Label::ALL[l],
                        provenance: prov,
                    })
                })
        }

        proptest! {
            #[test]
            fn jsonl_round_trip(examples in proptest::collection::vec(arb_example(), 0..100)) {
                // de-dup ids
                let mut seen = HashSet::new();
                let examples: Vec<Example> = examples
                    .into_iter()
                    .filter(|e| seen.insert(e.id.clone()))
                    .collect();
                let dir = tempfile::tempdir().unwrap();
                let path = dir.path().join("rt.jsonl");
                let split = DatasetSplit::new("rt", examples);
                write_jsonl(&split, &path).unwrap();
                let back = load_jsonl(&path).unwrap();
                prop_assert_eq!(split.examples, back.examples);
            }

            #[test]
            fn subsample_deterministic(seed in any::<u64>(), n in 1usize..60) {
                let split = split_of(n);
                let sizes: Vec<usize> = (0..=n).step_by((n / 3).max(1)).collect();
                let a = subsample_inclusive(&split, &sizes, seed).unwrap();
                let b = subsample_inclusive(&split, &sizes, seed).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}
