//! Classification of an inoculation report into one of three outcome
//! signatures (or an intermediate case):
//!
//! 1. dataset weakness — the gap closes and original performance survives;
//! 2. model weakness — nothing moves;
//! 3. distribution shift — original performance is damaged.
//!
//! The thresholds are configuration, not constants; the signatures are
//! qualitative and the defaults below are documented judgment calls.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inoculation::InoculationReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Outcome1DatasetWeakness,
    Outcome2ModelWeakness,
    Outcome3DistributionShift,
    Intermediate,
}

impl OutcomeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeKind::Outcome1DatasetWeakness => "outcome1_dataset_weakness",
            OutcomeKind::Outcome2ModelWeakness => "outcome2_model_weakness",
            OutcomeKind::Outcome3DistributionShift => "outcome3_distribution_shift",
            OutcomeKind::Intermediate => "intermediate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeEvidence {
    pub max_gap_closure: f64,
    pub max_original_drop: f64,
    /// Fine-tuning size of the max-closure point.
    pub at_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub kind: OutcomeKind,
    pub evidence: OutcomeEvidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutcomeThresholds {
    /// Gap-closure fraction at or above which the gap counts as closed.
    pub close_frac: f64,
    /// Gap-closure ceiling below which performance counts as unchanged.
    pub unchanged_frac: f64,
    /// Original-accuracy drop above which original performance counts as
    /// damaged.
    pub damage_drop: f64,
}

impl Default for OutcomeThresholds {
    fn default() -> Self {
        OutcomeThresholds { close_frac: 0.90, unchanged_frac: 0.20, damage_drop: 0.05 }
    }
}

impl OutcomeThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.unchanged_frac
            && self.unchanged_frac < self.close_frac
            && self.close_frac <= 1.0)
        {
            return Err(Error::config(format!(
                "need 0 < unchanged_frac < close_frac <= 1, got {} and {}",
                self.unchanged_frac, self.close_frac
            )));
        }
        if self.damage_drop <= 0.0 {
            return Err(Error::config(format!(
                "damage_drop must be positive, got {}",
                self.damage_drop
            )));
        }
        Ok(())
    }
}

/// Classifies a populated report. Pure and total in (report, thresholds);
/// requires a positive pre-inoculation performance gap.
///
/// Rule order matters: damage (outcome 3) is checked before closure
/// (outcome 1) so that "closes the gap but damages the original" lands on 3.
pub fn classify(report: &InoculationReport, th: &OutcomeThresholds) -> Result<Outcome> {
    th.validate()?;
    let gap = report.performance_gap();
    if gap <= 0.0 {
        return Err(Error::data(format!(
            "outcome undefined for nonpositive performance gap ({gap:.6})"
        )));
    }
    if report.points.is_empty() {
        return Err(Error::data("cannot classify a report with no points"));
    }

    let closure = |challenge_acc: f64| (challenge_acc - report.pre_challenge_acc) / gap;
    let drop = |original_acc: f64| report.pre_original_acc - original_acc;

    let mut max_closure = f64::NEG_INFINITY;
    let mut max_closure_drop = 0.0;
    let mut at_size = 0;
    let mut max_drop: f64 = 0.0;
    let mut any_closed = false;
    let mut all_closed_damaged = true;
    let mut any_clean_close = false;
    for p in &report.points {
        let c = closure(p.challenge_test_acc);
        let d = drop(p.original_test_acc);
        if c > max_closure {
            max_closure = c;
            max_closure_drop = d;
            at_size = p.size;
        }
        max_drop = max_drop.max(d.abs());
        if c >= th.close_frac {
            any_closed = true;
            if d <= th.damage_drop {
                all_closed_damaged = false;
                any_clean_close = true;
            }
        }
    }

    let evidence = OutcomeEvidence { max_gap_closure: max_closure, max_original_drop: max_drop, at_size };
    let kind = if (any_closed && all_closed_damaged) || max_closure_drop > th.damage_drop {
        OutcomeKind::Outcome3DistributionShift
    } else if any_clean_close {
        OutcomeKind::Outcome1DatasetWeakness
    } else if max_closure < th.unchanged_frac && max_drop <= th.damage_drop {
        OutcomeKind::Outcome2ModelWeakness
    } else {
        OutcomeKind::Intermediate
    };
    Ok(Outcome { kind, evidence })
}
