//! Programmatic judges: agreement, binary coherence, F1@K and side-by-side
//! comparison.
//!
//! All judges consume the structured critiques and requirements of an
//! instance, never its natural-language instruction string. Scores are
//! fractions in [0, 1] rather than percentages.

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, RewriteInstance, TaskKind, Tone};
use crate::error::{Error, Result};

/// Default side-by-side tie tolerance on 2-decimal scores.
pub const SXS_TIE_TOLERANCE: f64 = 0.05;

/// `(satisfied, total)` critique spans or requirements.
pub fn agreement_counts(instance: &RewriteInstance, revised: &Document) -> (usize, usize) {
    match instance.task {
        TaskKind::Factuality => {
            let ok = instance
                .critiques
                .iter()
                .filter(|c| {
                    let key = &instance.initial.facts[c.index].key;
                    revised
                        .facts
                        .get(c.index)
                        .is_some_and(|f| f.key == *key && f.value == c.revision)
                })
                .count();
            (ok, instance.critiques.len())
        }
        TaskKind::Stylistic | TaskKind::Conversational => {
            let ok = instance
                .requirements
                .iter()
                .filter(|r| r.satisfied(revised))
                .count();
            (ok, instance.requirements.len())
        }
    }
}

/// Fraction of critique replacements (factuality) or requirements
/// (stylistic, conversational) correctly realized in `revised`.
pub fn agreement(instance: &RewriteInstance, revised: &Document) -> f64 {
    match agreement_counts(instance, revised) {
        (_, 0) => 1.0,
        (ok, total) => ok as f64 / total as f64,
    }
}

/// 1 iff every derived record matches its formula and, once the tone has
/// been changed away from plain, no `[KEY]` placeholder remains.
pub fn coherence(revised: &Document) -> u8 {
    let consistent = revised.is_internally_consistent();
    let placeholders_ok = revised.tone_tag == Tone::Plain || revised.placeholder_count() == 0;
    u8::from(consistent && placeholders_ok)
}

/// F1@K with precision `supported / total_claims` and recall
/// `min(supported / k, 1)`.
pub fn f1_at_k(supported: usize, total_claims: usize, k: usize) -> Result<f64> {
    if supported > total_claims {
        return Err(Error::Domain(format!(
            "supported claims ({supported}) exceed total claims ({total_claims})"
        )));
    }
    if k == 0 {
        return Err(Error::Domain("F1@K needs K > 0".into()));
    }
    if supported == 0 {
        return Ok(0.0);
    }
    let precision = supported as f64 / total_claims as f64;
    let recall = (supported as f64 / k as f64).min(1.0);
    Ok(2.0 * precision * recall / (precision + recall))
}

/// `(supported, total_claims)`: facts in `revised` whose key and value
/// exactly match the gold revision.
pub fn fact_support(gold: &Document, revised: &Document) -> (usize, usize) {
    let supported = revised
        .facts
        .iter()
        .filter(|f| gold.fact_value(&f.key) == Some(f.value))
        .count();
    (supported, revised.facts.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SxsChoice {
    #[serde(rename = "(A)")]
    A,
    #[serde(rename = "(B)")]
    B,
    #[serde(rename = "same")]
    Same,
}

impl SxsChoice {
    pub fn mirrored(self) -> Self {
        match self {
            SxsChoice::A => SxsChoice::B,
            SxsChoice::B => SxsChoice::A,
            SxsChoice::Same => SxsChoice::Same,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SxsVerdict {
    pub choice: SxsChoice,
    pub score_a: f64,
    pub score_b: f64,
    pub explanation: String,
}

fn hundredths(x: f64) -> i64 {
    (x * 100.0).round() as i64
}

pub fn sxs_compare(
    instance: &RewriteInstance,
    revised_a: &Document,
    revised_b: &Document,
) -> SxsVerdict {
    sxs_compare_with(instance, revised_a, revised_b, SXS_TIE_TOLERANCE)
}

/// Side-by-side verdict with an explicit tie tolerance. Scores are rounded
/// to two decimals and compared in integer hundredths so that the verdict is
/// exactly antisymmetric.
pub fn sxs_compare_with(
    instance: &RewriteInstance,
    revised_a: &Document,
    revised_b: &Document,
    tie_tolerance: f64,
) -> SxsVerdict {
    let (ok_a, total) = agreement_counts(instance, revised_a);
    let (ok_b, _) = agreement_counts(instance, revised_b);
    let a = hundredths(agreement(instance, revised_a));
    let b = hundredths(agreement(instance, revised_b));
    let tol = hundredths(tie_tolerance);
    let choice = if (a - b).abs() <= tol {
        SxsChoice::Same
    } else if a > b {
        SxsChoice::A
    } else {
        SxsChoice::B
    };
    let unit = match instance.task {
        TaskKind::Factuality => "critique replacements",
        _ => "requirements",
    };
    let explanation = format!(
        "Response (A) realizes {ok_a} of {total} {unit}; response (B) realizes {ok_b} of {total}."
    );
    SxsVerdict {
        choice,
        score_a: a as f64 / 100.0,
        score_b: b as f64 / 100.0,
        explanation,
    }
}
