//! Synthetic dataset generators.
//!
//! Two generators live here:
//!
//! * `gen_original` builds a text-pair dataset with planted annotation
//!   artifacts (token overlap predicts entailment, negation words predict
//!   contradiction) so that a linear model trained on it exhibits the exact
//!   brittleness the challenge transformations exploit.
//! * `gen_numeric` builds a numerical-reasoning dataset with exact
//!   per-category label counts, together with the 3-rule baseline that
//!   classifies it.
//!
//! # Original-dataset geometry
//!
//! The original generator plants its cues so that each challenge
//! transformation lands the examples it breaks in regions of feature space
//! that are *empty* in the original distribution. That property is what
//! makes small-sample fine-tuning able to repair a broken cue without
//! touching original-distribution behavior.
//!
//! Examples come in two strata:
//!
//! * **Overlap stratum** (70%). Premise and hypothesis both have
//!   `premise_len_range.1` distinct content tokens. Entailment pairs are
//!   (with probability `overlap_entail_rate`) token permutations of each
//!   other — full overlap — and otherwise carry a 75% overlap count in its
//!   own decile. Neutral pairs carry a mid-range (55%) overlap count, and
//!   contradiction pairs a low (25%) one plus the negation token "no".
//!   Every (label, shape) combination thus owns a distinct overlap-ratio
//!   decile, which makes the original task fully separable: a trained model
//!   converges to confident predictions and its incidental token weights
//!   decay toward zero instead of hovering at a noise floor. Because the
//!   planted counts are odd while the hypothesis length is even, losing a
//!   single overlap token (a misspelling) never moves an example across a
//!   decile boundary.
//! * **Marker stratum** (30%). Short hypotheses (one marker word plus three
//!   two-character filler tokens, sharing no token with the premise) whose
//!   label is carried solely by the marker. Markers are drawn from a per-label pool
//!   sharing a 4-character stem, so a word-level model must memorize
//!   individual markers while a character-level model can read the stem.
//!   The stems are short on purpose: one adjacent-character swap destroys
//!   most stem n-grams (so even a character model loses the original marker)
//!   but the swapped variants' n-grams are shared across the whole pool, so
//!   a character model can relearn them from a handful of challenge
//!   examples while a word-level model faces one fresh token per (marker,
//!   swap position).
//!
//! With the default `premise_len_range` upper bound of 20 this puts original
//! examples only in overlap-ratio deciles {0, 2, 5, 7, 9}; the tautology
//! suffixes relocate the overlap stratum into deciles {2, 4, 6, 8} while the
//! marker stratum stays at 0. Every relocated decile is empty in the
//! original distribution, so repairing a relocated population never touches
//! original-distribution behavior, and no relocated population lands on a
//! decile whose pretrained weights oppose it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{seeded_permutation, DatasetBundle, DatasetSplit, Example, Label};
use crate::error::{Error, Result};

/// Tokens reserved for the challenge transformations. They never appear in
/// generated originals, so a pretrained model has no weights for them.
pub const RESERVED_TOKENS: [&str; 4] = ["true", "false", "is", "and"];

/// Negation tokens planted in contradiction examples. Only "no" is ever
/// generated; "not" belongs to the negation-tautology suffix and stays
/// reserved so a pretrained model has no weight for it.
pub const NEGATION_TOKENS: [&str; 2] = ["no", "not"];

/// Fraction of examples in the marker stratum.
const MARKER_STRATUM_SHARE: f64 = 0.3;

/// Per-label marker stems (order matches `Label::ALL`). The stems share no
/// character trigrams with one another, so character features separate the
/// pools cleanly.
pub const MARKER_STEMS: [&str; 3] = ["trem", "quib", "forn"];

/// Number of marker words per label pool. Small enough that every marker
/// recurs often during pretraining and its weight converges well clear of
/// the incidental-token noise floor, large enough that the spelling
/// challenge's per-(marker, swap position) variants stay effectively unique
/// for a word-level model.
pub const MARKER_POOL: usize = 30;

/// The `i`-th marker word for a label: stem plus a two-letter tail.
pub fn marker_token(label: Label, i: usize) -> String {
    let tail = [b'a' + (i / 26) as u8, b'a' + (i % 26) as u8];
    format!("{}{}{}", MARKER_STEMS[label.index()], tail[0] as char, tail[1] as char)
}

/// Number of two-character content tokens (`w0..w9`) used as marker-stratum
/// hypothesis filler. They are too short for the spelling corruption to
/// target, which concentrates misspellings on the marker itself.
const SHORT_TOKENS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitCounts {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl Default for SplitCounts {
    fn default() -> Self {
        SplitCounts { train: 20_000, dev: 2_000, test: 2_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Number of content tokens `w0..wN`.
    pub vocab_size: usize,
    /// Inclusive premise length interval, in tokens.
    pub premise_len_range: (usize, usize),
    pub counts: SplitCounts,
    /// Probability that an overlap-stratum entailment example gets the
    /// full-overlap artifact (the rest get the neutral-shaped mid overlap).
    pub overlap_entail_rate: f64,
    /// Overall fraction of contradiction examples containing a negation
    /// token. Every overlap-stratum contradiction carries one, so rates
    /// below that stratum's share saturate at it.
    pub negation_contra_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            vocab_size: 5000,
            premise_len_range: (8, 20),
            counts: SplitCounts::default(),
            overlap_entail_rate: 0.9,
            negation_contra_rate: 0.7,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 {
            return Err(Error::config("vocab_size must be positive"));
        }
        let (lo, hi) = self.premise_len_range;
        if lo == 0 || lo > hi {
            return Err(Error::config(format!(
                "premise_len_range must be a nonempty positive interval, got [{lo}, {hi}]"
            )));
        }
        // Distinct-token sampling must have comfortable headroom: an overlap
        // stratum example draws up to 2·hi distinct tokens.
        if self.vocab_size < (2 * hi.max(4)).max(16) {
            return Err(Error::config(format!(
                "vocab_size {} too small for premise_len_range upper bound {hi}",
                self.vocab_size
            )));
        }
        for (name, rate) in [
            ("overlap_entail_rate", self.overlap_entail_rate),
            ("negation_contra_rate", self.negation_contra_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::config(format!("{name} must be in [0, 1], got {rate}")));
            }
        }
        Ok(())
    }
}

fn vocab_token(i: usize) -> String {
    format!("w{i}")
}

/// Samples `k` distinct vocab indices not present in `exclude`.
fn sample_distinct(
    rng: &mut ChaCha8Rng,
    vocab_size: usize,
    k: usize,
    exclude: &[usize],
) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let cand = rng.gen_range(0..vocab_size);
        if !exclude.contains(&cand) && !out.contains(&cand) {
            out.push(cand);
        }
    }
    out
}

fn shuffle_in_place<T>(rng: &mut ChaCha8Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

/// The planted mid-range overlap count for a hypothesis of `len` tokens:
/// the odd count nearest 0.55·len, so that (with an even `len`) losing one
/// overlap token keeps the example in the same overlap-ratio decile.
fn mid_overlap(len: usize) -> usize {
    odd_near(0.55, len)
}

/// The planted overlap count for non-full-overlap entailment: the odd count
/// nearest 0.75·len, high enough that every entailment hypothesis keeps at
/// least 75% premise overlap while still owning its own decile below the
/// full-overlap one.
fn entail_alt_overlap(len: usize) -> usize {
    odd_near(0.75, len)
}

/// The planted low overlap count for contradiction: the odd count nearest
/// 0.25·len, giving contradiction its own low decile well apart from the
/// neutral mid-range.
fn contra_overlap(len: usize) -> usize {
    odd_near(0.25, len)
}

/// Fraction of high-overlap entailment examples that use the near-full
/// overlap count instead of a full permutation.
const ENTAIL_NEAR_FULL_SHARE: f64 = 0.25;

/// The near-full (85%) overlap count: one decile below full overlap.
fn near_full_overlap(len: usize) -> usize {
    odd_near(0.85, len)
}

fn odd_near(frac: f64, len: usize) -> usize {
    let mut o = ((frac * len as f64).round() as usize).clamp(1, len.saturating_sub(1).max(1));
    if o % 2 == 0 {
        o = o.saturating_sub(1).max(1);
    }
    o
}

/// Overlap-stratum example: the label is carried by the overlap decile plus
/// the "no" token reinforcing contradiction.
fn gen_overlap_example(rng: &mut ChaCha8Rng, cfg: &SynthConfig, id: String) -> Example {
    let label = Label::ALL[rng.gen_range(0..3usize)];
    let len = cfg.premise_len_range.1;
    let premise_idx = sample_distinct(rng, cfg.vocab_size, len, &[]);

    let full_overlap = label == Label::Entailment && rng.gen_bool(cfg.overlap_entail_rate);
    // A slice of the high-overlap entailment examples uses a near-full (85%)
    // overlap count instead of a pure permutation. That keeps decile 8 — the
    // decile the full-overlap population shifts into under the tautology
    // suffixes — occupied by pretrained entailment weight, so a fine-tuning
    // epoch that repairs a broken population cannot flip the suffixed
    // full-overlap examples in passing.
    let near_full = full_overlap && rng.gen_bool(ENTAIL_NEAR_FULL_SHARE);
    let mut hyp_tokens: Vec<String> = if full_overlap && !near_full {
        premise_idx.iter().map(|&i| vocab_token(i)).collect()
    } else {
        let overlap = if near_full {
            near_full_overlap(len)
        } else {
            match label {
                Label::Entailment => entail_alt_overlap(len),
                Label::Neutral => mid_overlap(len),
                Label::Contradiction => contra_overlap(len),
            }
        };
        let mut prem_pool = premise_idx.clone();
        shuffle_in_place(rng, &mut prem_pool);
        let negated = label == Label::Contradiction;
        let novel_count = len - overlap - usize::from(negated);
        let novel = sample_distinct(rng, cfg.vocab_size, novel_count, &premise_idx);
        let mut toks: Vec<String> = prem_pool[..overlap]
            .iter()
            .chain(novel.iter())
            .map(|&i| vocab_token(i))
            .collect();
        if negated {
            toks.push("no".to_string());
        }
        toks
    };
    shuffle_in_place(rng, &mut hyp_tokens);

    let premise = premise_idx.iter().map(|&i| vocab_token(i)).collect::<Vec<_>>().join(" ");
    Example { id, premise, hypothesis: hyp_tokens.join(" "), label, provenance: None }
}

/// Marker-stratum example: the label is carried solely by the marker word.
/// The hypothesis shares no token with the premise, so the stratum sits in
/// overlap decile 0 and stays there under every challenge transformation —
/// it never collides with the deciles the overlap stratum moves through.
/// A slice of the contradiction examples also gets a premise-side "no" so
/// the overall negation rate matches `negation_contra_rate`.
fn gen_marker_example(rng: &mut ChaCha8Rng, cfg: &SynthConfig, id: String) -> Example {
    let label = Label::ALL[rng.gen_range(0..3usize)];
    // Marker premises use the short end of the length range: the premise
    // tokens are pure noise here (the label lives in the hypothesis marker),
    // and fewer of them keeps the summed incidental-weight noise small next
    // to the marker's margin.
    let prem_len = cfg.premise_len_range.0.max(4);

    let shorts = sample_distinct(rng, SHORT_TOKENS.min(cfg.vocab_size), 3, &[]);
    let marker = marker_token(label, rng.gen_range(0..MARKER_POOL));

    let mut hyp_tokens: Vec<String> =
        std::iter::once(marker).chain(shorts.iter().map(|&i| vocab_token(i))).collect();
    shuffle_in_place(rng, &mut hyp_tokens);

    let premise_idx = sample_distinct(rng, cfg.vocab_size, prem_len, &shorts);
    let mut prem_tokens: Vec<String> = premise_idx.iter().map(|&i| vocab_token(i)).collect();
    if label == Label::Contradiction {
        let overlap_share = 1.0 - MARKER_STRATUM_SHARE;
        let p_no =
            ((cfg.negation_contra_rate - overlap_share) / MARKER_STRATUM_SHARE).clamp(0.0, 1.0);
        if rng.gen_bool(p_no) {
            let slot = rng.gen_range(0..prem_tokens.len());
            prem_tokens[slot] = "no".to_string();
        }
    }
    shuffle_in_place(rng, &mut prem_tokens);

    Example {
        id,
        premise: prem_tokens.join(" "),
        hypothesis: hyp_tokens.join(" "),
        label,
        provenance: None,
    }
}

fn gen_original_example(rng: &mut ChaCha8Rng, cfg: &SynthConfig, id: String) -> Example {
    if rng.gen_bool(MARKER_STRATUM_SHARE) {
        gen_marker_example(rng, cfg, id)
    } else {
        gen_overlap_example(rng, cfg, id)
    }
}

/// Generates an original dataset bundle. Deterministic given the config seed.
pub fn gen_original(cfg: &SynthConfig) -> Result<DatasetBundle> {
    cfg.validate()?;
    let gen_split = |name: &str, count: usize, stream: u64| -> DatasetSplit {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);
        let examples = (0..count)
            .map(|i| gen_original_example(&mut rng, cfg, format!("{name}-{i:06}")))
            .collect();
        DatasetSplit::new(name, examples)
    };
    Ok(DatasetBundle {
        train: gen_split("train", cfg.counts.train, 0),
        dev: gen_split("dev", cfg.counts.dev, 1),
        test: gen_split("test", cfg.counts.test, 2),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CategoryBCounts {
    pub neutral: usize,
    pub entailment: usize,
    pub contradiction: usize,
}

impl Default for CategoryBCounts {
    fn default() -> Self {
        CategoryBCounts { neutral: 2532, entailment: 66, contradiction: 66 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CategoryCCounts {
    pub entailment: usize,
    pub contradiction: usize,
}

impl Default for CategoryCCounts {
    fn default() -> Self {
        CategoryCCounts { entailment: 2466, contradiction: 1231 }
    }
}

/// Exact per-(category, label) cell counts for the numerical-reasoning
/// generator. Category A has neither quantifier phrase, category B has one in
/// the hypothesis, category C has one in the premise only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericCategoryCounts {
    pub cat_a_contradiction: usize,
    pub cat_b: CategoryBCounts,
    pub cat_c: CategoryCCounts,
}

impl Default for NumericCategoryCounts {
    fn default() -> Self {
        NumericCategoryCounts {
            cat_a_contradiction: 1235,
            cat_b: CategoryBCounts::default(),
            cat_c: CategoryCCounts::default(),
        }
    }
}

impl NumericCategoryCounts {
    pub fn total(&self) -> usize {
        self.cat_a_contradiction
            + self.cat_b.neutral
            + self.cat_b.entailment
            + self.cat_b.contradiction
            + self.cat_c.entailment
            + self.cat_c.contradiction
    }
}

const NAMES: [&str; 8] = ["Tim", "Sara", "James", "Maria", "Aisha", "Chen", "Priya", "Omar"];
const OBJECTS: [&str; 8] =
    ["apples", "books", "marbles", "stamps", "coins", "tickets", "bottles", "pencils"];

const MORE_THAN: &str = "more than";
const LESS_THAN: &str = "less than";

fn pick<'a>(rng: &mut ChaCha8Rng, items: &[&'a str]) -> &'a str {
    items[rng.gen_range(0..items.len())]
}

fn numeric_example(rng: &mut ChaCha8Rng, category: char, label: Label) -> (String, String) {
    let name = pick(rng, &NAMES);
    let obj = pick(rng, &OBJECTS);
    let n: i64 = rng.gen_range(2..=900);
    match (category, label) {
        ('a', Label::Contradiction) => {
            let mut m: i64 = rng.gen_range(2..=900);
            if m == n {
                m += 1;
            }
            (format!("{name} has {n} {obj}."), format!("{name} has {m} {obj}."))
        }
        ('b', Label::Neutral) => {
            let q = if rng.gen_bool(0.5) { MORE_THAN } else { LESS_THAN };
            let m: i64 = rng.gen_range(2..=900);
            let shops: i64 = rng.gen_range(2..=9);
            (
                format!("{name} bought {obj} from {shops} different shops."),
                format!("{name} bought {q} {m} {obj}."),
            )
        }
        ('b', Label::Entailment) => {
            if rng.gen_bool(0.5) {
                let m = rng.gen_range(1..n);
                (format!("{name} has {n} {obj}."), format!("{name} has {MORE_THAN} {m} {obj}."))
            } else {
                let m = rng.gen_range(n + 1..=n + 100);
                (format!("{name} has {n} {obj}."), format!("{name} has {LESS_THAN} {m} {obj}."))
            }
        }
        ('b', Label::Contradiction) => {
            if rng.gen_bool(0.5) {
                let m = rng.gen_range(n..=n + 100);
                (format!("{name} has {n} {obj}."), format!("{name} has {MORE_THAN} {m} {obj}."))
            } else {
                let m = rng.gen_range(1..=n);
                (format!("{name} has {n} {obj}."), format!("{name} has {LESS_THAN} {m} {obj}."))
            }
        }
        ('c', Label::Entailment) => {
            if rng.gen_bool(0.5) {
                let m = rng.gen_range(1..=n);
                (
                    format!("{name} has {MORE_THAN} {n} {obj}."),
                    format!("{name} has at least {m} {obj}."),
                )
            } else {
                let m = rng.gen_range(n..=n + 100);
                (
                    format!("{name} has {LESS_THAN} {n} {obj}."),
                    format!("{name} has at most {m} {obj}."),
                )
            }
        }
        ('c', Label::Contradiction) => {
            if rng.gen_bool(0.5) {
                let m = rng.gen_range(1..=n);
                (
                    format!("{name} has {MORE_THAN} {n} {obj}."),
                    format!("{name} has exactly {m} {obj}."),
                )
            } else {
                let m = rng.gen_range(n..=n + 100);
                (
                    format!("{name} has {LESS_THAN} {n} {obj}."),
                    format!("{name} has exactly {m} {obj}."),
                )
            }
        }
        _ => unreachable!("no template for category {category} label {label}"),
    }
}

/// Generates the numerical-reasoning split with exactly the requested count
/// per (category, label) cell. Output order is a seeded shuffle.
pub fn gen_numeric(counts: &NumericCategoryCounts, seed: u64) -> Result<DatasetSplit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells: [(char, Label, usize); 6] = [
        ('a', Label::Contradiction, counts.cat_a_contradiction),
        ('b', Label::Neutral, counts.cat_b.neutral),
        ('b', Label::Entailment, counts.cat_b.entailment),
        ('b', Label::Contradiction, counts.cat_b.contradiction),
        ('c', Label::Entailment, counts.cat_c.entailment),
        ('c', Label::Contradiction, counts.cat_c.contradiction),
    ];
    let mut pairs = Vec::with_capacity(counts.total());
    for (category, label, count) in cells {
        for _ in 0..count {
            let (premise, hypothesis) = numeric_example(&mut rng, category, label);
            pairs.push((premise, hypothesis, label));
        }
    }
    let perm = seeded_permutation(pairs.len(), seed.wrapping_add(1));
    let examples = perm
        .iter()
        .enumerate()
        .map(|(i, &src)| {
            let (premise, hypothesis, label) = pairs[src].clone();
            Example {
                id: format!("num-{i:05}"),
                premise,
                hypothesis,
                label,
                provenance: None,
            }
        })
        .collect();
    Ok(DatasetSplit::new("numeric", examples))
}

fn contains_phrase(text: &str) -> bool {
    let lower = text.to_lowercase();
    lower.contains(MORE_THAN) || lower.contains(LESS_THAN)
}

/// Which of the three rules fired for an example (1-based).
pub fn baseline_rule(example: &Example) -> usize {
    let in_premise = contains_phrase(&example.premise);
    let in_hypothesis = contains_phrase(&example.hypothesis);
    if !in_premise && !in_hypothesis {
        1
    } else if in_hypothesis {
        2
    } else {
        3
    }
}

/// The 3-rule baseline: no quantifier phrase anywhere -> contradiction;
/// phrase in the hypothesis -> neutral; otherwise (phrase in the premise
/// only) -> entailment. Case-insensitive substring match.
pub fn rules_baseline(example: &Example) -> Label {
    match baseline_rule(example) {
        1 => Label::Contradiction,
        2 => Label::Neutral,
        _ => Label::Entailment,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RuleStats {
    pub fired: usize,
    pub correct: usize,
}

impl RuleStats {
    pub fn wrong(&self) -> usize {
        self.fired - self.correct
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BaselineStats {
    pub rules: [RuleStats; 3],
    pub total: usize,
}

impl BaselineStats {
    pub fn correct(&self) -> usize {
        self.rules.iter().map(|r| r.correct).sum()
    }

    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct() as f64 / self.total as f64
        }
    }
}

/// Runs the 3-rule baseline over a split and tallies per-rule counts.
pub fn baseline_breakdown(split: &DatasetSplit) -> BaselineStats {
    let mut stats = BaselineStats { total: split.len(), ..Default::default() };
    for ex in &split.examples {
        let rule = baseline_rule(ex);
        stats.rules[rule - 1].fired += 1;
        if rules_baseline(ex) == ex.label {
            stats.rules[rule - 1].correct += 1;
        }
    }
    stats
}
