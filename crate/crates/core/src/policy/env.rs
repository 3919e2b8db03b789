//! Episode environment: the edit action space over one instance.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, RewriteInstance, SPURIOUS_TOKEN};
use crate::error::{Error, Result};
use crate::judge;
use crate::textops;

pub const NUM_CLASSES: usize = 5;
pub const NUM_FEATURES: usize = 10;
/// Bumped whenever the meaning or layout of [`featurize`] changes.
pub const FEATURE_VERSION: u32 = 1;

pub type FeatureVec = [f64; NUM_FEATURES];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "action", content = "index", rename_all = "snake_case")]
pub enum EditAction {
    ApplyCritique(usize),
    ApplyRequirement(usize),
    FixDerived(usize),
    SpuriousEdit(usize),
    Stop,
}

impl EditAction {
    pub fn class(self) -> usize {
        match self {
            EditAction::ApplyCritique(_) => 0,
            EditAction::ApplyRequirement(_) => 1,
            EditAction::FixDerived(_) => 2,
            EditAction::SpuriousEdit(_) => 3,
            EditAction::Stop => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub max_steps: usize,
    /// Number of distinct spurious edits offered per episode.
    pub spurious_slots: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            max_steps: 16,
            spurious_slots: 2,
        }
    }
}

/// Mutable state of one rewrite episode.
#[derive(Debug, Clone)]
pub struct EpisodeState<'a> {
    pub instance: &'a RewriteInstance,
    pub current: Document,
    pub step: usize,
    pub applied: BTreeSet<EditAction>,
    pub env: EnvConfig,
}

impl<'a> EpisodeState<'a> {
    pub fn new(instance: &'a RewriteInstance, env: EnvConfig) -> Self {
        EpisodeState {
            instance,
            current: instance.initial.clone(),
            step: 0,
            applied: BTreeSet::new(),
            env,
        }
    }

    pub fn budget_exhausted(&self) -> bool {
        self.step >= self.env.max_steps
    }

    /// Valid actions in a fixed order: unapplied critiques, unapplied
    /// requirements, currently stale derived records, unused spurious edits,
    /// then `Stop`.
    pub fn valid_actions(&self) -> Vec<EditAction> {
        let inst = self.instance;
        let fresh = |a: &EditAction| !self.applied.contains(a);
        let mut out: Vec<EditAction> = (0..inst.critiques.len())
            .map(EditAction::ApplyCritique)
            .filter(fresh)
            .collect();
        out.extend(
            (0..inst.requirements.len())
                .map(EditAction::ApplyRequirement)
                .filter(fresh),
        );
        out.extend(self.current.stale_derived().into_iter().map(EditAction::FixDerived));
        out.extend(
            (0..self.env.spurious_slots)
                .map(EditAction::SpuriousEdit)
                .filter(fresh),
        );
        out.push(EditAction::Stop);
        out
    }

    fn check_bounds(&self, action: EditAction) -> Result<()> {
        let (idx, len, what) = match action {
            EditAction::ApplyCritique(i) => (i, self.instance.critiques.len(), "critique"),
            EditAction::ApplyRequirement(i) => (i, self.instance.requirements.len(), "requirement"),
            EditAction::FixDerived(i) => (i, self.current.derived.len(), "derived record"),
            EditAction::SpuriousEdit(i) => (i, self.env.spurious_slots, "spurious slot"),
            EditAction::Stop => return Ok(()),
        };
        if idx >= len {
            return Err(Error::Domain(format!(
                "{what} index {idx} out of bounds ({len} available) in {}",
                self.instance.id
            )));
        }
        Ok(())
    }

    /// State part of the feature vector: unapplied fraction, edit ratio
    /// against the initial document, coherence flag, fraction of steps used.
    pub fn summary(&self) -> [f64; 4] {
        let targets = self.instance.target_count();
        let unapplied = if targets == 0 {
            0.0
        } else {
            let done = self
                .applied
                .iter()
                .filter(|a| matches!(a, EditAction::ApplyCritique(_) | EditAction::ApplyRequirement(_)))
                .count();
            (targets - done) as f64 / targets as f64
        };
        let er = textops::edit_ratio(&self.instance.initial.tokens, &self.current.tokens)
            .unwrap_or(0.0);
        let steps = if self.env.max_steps == 0 {
            0.0
        } else {
            self.step as f64 / self.env.max_steps as f64
        };
        [unapplied, er, f64::from(judge::coherence(&self.current)), steps]
    }

    /// Applies `action` and advances the step counter. `Stop` only counts
    /// the step.
    pub fn apply(&mut self, action: EditAction) -> Result<()> {
        self.check_bounds(action)?;
        match action {
            EditAction::ApplyCritique(i) => self.instance.apply_critique(&mut self.current, i),
            EditAction::ApplyRequirement(j) => self.instance.requirements[j].apply(&mut self.current),
            EditAction::FixDerived(m) => self.current.fix_derived(m),
            EditAction::SpuriousEdit(k) => {
                let at = (1 + 5 * k) % (self.current.tokens.len() + 1);
                self.current.insert_tokens(at, &[SPURIOUS_TOKEN.to_owned()]);
            }
            EditAction::Stop => {}
        }
        if !matches!(action, EditAction::Stop | EditAction::FixDerived(_)) {
            self.applied.insert(action);
        }
        self.step += 1;
        Ok(())
    }
}

/// Combines a state summary with the action class one-hot.
pub fn features_from_summary(summary: &[f64; 4], action: EditAction) -> FeatureVec {
    let mut phi = [0.0; NUM_FEATURES];
    phi[0] = 1.0;
    phi[1 + action.class()] = 1.0;
    phi[6..].copy_from_slice(summary);
    phi
}

/// `[bias, class one-hot (5), unapplied fraction, edit ratio, coherence,
/// step fraction]`.
pub fn featurize(state: &EpisodeState<'_>, action: EditAction) -> Result<FeatureVec> {
    state.check_bounds(action)?;
    Ok(features_from_summary(&state.summary(), action))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{gen_factuality_instance, FactualityConfig, Span};

    fn inst() -> RewriteInstance {
        let cfg = FactualityConfig {
            facts: Span::exactly(4),
            corrupted: Span::exactly(2),
            derived: Span::exactly(1),
        };
        gen_factuality_instance(3, &cfg).unwrap()
    }

    #[test]
    fn fresh_state_features() {
        let inst = inst();
        let s = EpisodeState::new(&inst, EnvConfig::default());
        let phi = featurize(&s, EditAction::ApplyCritique(0)).unwrap();
        assert_eq!(phi[0], 1.0);
        assert_eq!(phi[1], 1.0);
        assert_eq!(phi[6], 1.0);
        assert_eq!(phi[7], 0.0);
        assert_eq!(phi[9], 0.0);
        assert_eq!(phi, featurize(&s, EditAction::ApplyCritique(0)).unwrap());
    }

    #[test]
    fn out_of_bounds_is_domain_error() {
        let inst = inst();
        let s = EpisodeState::new(&inst, EnvConfig::default());
        assert!(matches!(featurize(&s, EditAction::ApplyCritique(2)), Err(Error::Domain(_))));
        assert!(featurize(&s, EditAction::ApplyRequirement(0)).is_err());
        assert!(featurize(&s, EditAction::SpuriousEdit(2)).is_err());
        assert!(featurize(&s, EditAction::FixDerived(1)).is_err());
    }

    #[test]
    fn valid_actions_track_state() {
        let inst = inst();
        let mut s = EpisodeState::new(&inst, EnvConfig::default());
        assert_eq!(
            s.valid_actions(),
            vec![
                EditAction::ApplyCritique(0),
                EditAction::ApplyCritique(1),
                EditAction::SpuriousEdit(0),
                EditAction::SpuriousEdit(1),
                EditAction::Stop
            ]
        );
        s.apply(EditAction::ApplyCritique(0)).unwrap();
        s.apply(EditAction::ApplyCritique(1)).unwrap();
        assert_eq!(
            s.valid_actions(),
            vec![
                EditAction::FixDerived(0),
                EditAction::SpuriousEdit(0),
                EditAction::SpuriousEdit(1),
                EditAction::Stop
            ]
        );
        s.apply(EditAction::FixDerived(0)).unwrap();
        assert_eq!(s.current, inst.gold);
        let phi = featurize(&s, EditAction::Stop).unwrap();
        assert_eq!(phi[6], 0.0);
        assert_eq!(phi[8], 1.0);
    }

    #[test]
    fn spurious_edit_inserts_filler() {
        let inst = inst();
        let mut s = EpisodeState::new(&inst, EnvConfig::default());
        s.apply(EditAction::SpuriousEdit(1)).unwrap();
        assert_eq!(s.current.tokens.len(), inst.initial.tokens.len() + 1);
        assert_eq!(s.current.tokens[6], SPURIOUS_TOKEN);
        // Facts still render at their tracked positions.
        for f in &s.current.facts {
            assert_eq!(s.current.tokens[f.pos], f.value.to_string());
        }
    }
}
