//! Linear-softmax edit policy.
//!
//! The logit of action `a` in state `s` is `theta[:, class(a)] · phi(s, a)`,
//! scaled by the sampling temperature. Gradients are exact (softmax score
//! function), which lets every training step be checked against finite
//! differences.

mod env;
mod sft;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use env::{
    featurize, features_from_summary, EditAction, EnvConfig, EpisodeState, FeatureVec,
    FEATURE_VERSION, NUM_CLASSES, NUM_FEATURES,
};
pub use sft::{demonstration, sft_train, SftConfig, SftReport};

use crate::corpus::{Document, RewriteInstance};
use crate::error::{Error, Result};

/// Feature-weight matrix, row-major `[NUM_FEATURES x NUM_CLASSES]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub feature_version: u32,
    pub rows: usize,
    pub cols: usize,
    pub theta: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros() -> Self {
        PolicyParams {
            feature_version: FEATURE_VERSION,
            rows: NUM_FEATURES,
            cols: NUM_CLASSES,
            theta: vec![0.0; NUM_FEATURES * NUM_CLASSES],
        }
    }

    pub fn get(&self, feature: usize, class: usize) -> f64 {
        self.theta[feature * self.cols + class]
    }

    pub fn logit(&self, phi: &FeatureVec, class: usize) -> f64 {
        phi.iter()
            .enumerate()
            .map(|(f, x)| self.theta[f * self.cols + class] * x)
            .sum()
    }

    pub fn check_version(&self, found: u32) -> Result<()> {
        if self.feature_version != found {
            return Err(Error::FeatureVersion {
                expected: self.feature_version,
                found,
            });
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|x| x.is_finite())
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows != NUM_FEATURES || self.cols != NUM_CLASSES || self.theta.len() != self.rows * self.cols {
            return Err(Error::Domain(format!(
                "policy shape {}x{} with {} entries does not match {}x{}",
                self.rows,
                self.cols,
                self.theta.len(),
                NUM_FEATURES,
                NUM_CLASSES
            )));
        }
        if !self.is_finite() {
            return Err(Error::NonFinite {
                stage: "policy checkpoint",
                detail: "theta has non-finite entries".into(),
            });
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::pipeline::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let p: PolicyParams = crate::pipeline::read_json(path)?;
        p.check_version(FEATURE_VERSION)?;
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub temperature: f64,
    /// Keep only the K highest-logit actions; `None` disables truncation.
    pub top_k: Option<usize>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            temperature: 1.0,
            top_k: Some(40),
        }
    }
}

impl SamplingConfig {
    pub const UNTRUNCATED: SamplingConfig = SamplingConfig {
        temperature: 1.0,
        top_k: None,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be positive and finite, got {}",
                self.temperature
            )));
        }
        if self.top_k == Some(0) {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decoding {
    /// Highest-logit action, ties to the lowest index.
    Greedy,
    Sample(SamplingConfig),
}

/// Class-indexed logits of each candidate, before temperature scaling.
pub fn logits(params: &PolicyParams, candidates: &[EditAction], features: &[FeatureVec]) -> Vec<f64> {
    candidates
        .iter()
        .zip(features)
        .map(|(a, phi)| params.logit(phi, a.class()))
        .collect()
}

/// Indices kept by top-K truncation: highest logits first, ties to the lower
/// index, returned in ascending index order.
fn kept_indices(logits: &[f64], top_k: Option<usize>) -> Vec<usize> {
    match top_k {
        Some(k) if k < logits.len() => {
            let mut idx: Vec<usize> = (0..logits.len()).collect();
            idx.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
            idx.truncate(k);
            idx.sort_unstable();
            idx
        }
        _ => (0..logits.len()).collect(),
    }
}

/// Softmax over `logits / temperature`, restricted to the top-K set.
/// Truncated entries get probability 0.
pub fn softmax(logits: &[f64], sampling: &SamplingConfig) -> Vec<f64> {
    let kept = kept_indices(logits, sampling.top_k);
    let t = sampling.temperature;
    let max = kept
        .iter()
        .map(|&i| logits[i] / t)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut p = vec![0.0; logits.len()];
    let mut z = 0.0;
    for &i in &kept {
        let e = (logits[i] / t - max).exp();
        p[i] = e;
        z += e;
    }
    for &i in &kept {
        p[i] /= z;
    }
    p
}

/// Probability vector over `state.valid_actions()`.
pub fn action_distribution(
    params: &PolicyParams,
    state: &EpisodeState<'_>,
    sampling: &SamplingConfig,
) -> (Vec<EditAction>, Vec<f64>) {
    let candidates = state.valid_actions();
    let summary = state.summary();
    let feats: Vec<FeatureVec> = candidates
        .iter()
        .map(|&a| features_from_summary(&summary, a))
        .collect();
    let p = softmax(&logits(params, &candidates, &feats), sampling);
    (candidates, p)
}

/// One decision: the valid candidates, their features, the chosen index and
/// its log-probability under the behavior distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub candidates: Vec<EditAction>,
    pub features: Vec<FeatureVec>,
    pub chosen: usize,
    pub log_prob: f64,
}

impl StepRecord {
    pub fn action(&self) -> EditAction {
        self.candidates[self.chosen]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub feature_version: u32,
    pub instance_id: String,
    /// Distribution the behavior log-probabilities were taken under.
    pub sampling: SamplingConfig,
    pub steps: Vec<StepRecord>,
    #[serde(rename = "final")]
    pub final_doc: Document,
}

impl Trajectory {
    pub fn actions(&self) -> Vec<EditAction> {
        self.steps.iter().map(StepRecord::action).collect()
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &pi) in p.iter().enumerate() {
        if pi > 0.0 {
            acc += pi;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Runs one episode until `Stop` or the step budget. Greedy decoding records
/// log-probabilities under the untruncated temperature-1 distribution.
pub fn rollout<R: Rng + ?Sized>(
    params: &PolicyParams,
    instance: &RewriteInstance,
    env: &EnvConfig,
    decoding: &Decoding,
    rng: &mut R,
) -> Trajectory {
    let sampling = match decoding {
        Decoding::Greedy => SamplingConfig::UNTRUNCATED,
        Decoding::Sample(s) => *s,
    };
    let mut state = EpisodeState::new(instance, *env);
    let mut steps = Vec::new();
    while !state.budget_exhausted() {
        let candidates = state.valid_actions();
        let summary = state.summary();
        let features: Vec<FeatureVec> = candidates
            .iter()
            .map(|&a| features_from_summary(&summary, a))
            .collect();
        let z = logits(params, &candidates, &features);
        let p = softmax(&z, &sampling);
        let chosen = match decoding {
            Decoding::Greedy => argmax(&z),
            Decoding::Sample(_) => sample_index(&p, rng),
        };
        let action = candidates[chosen];
        steps.push(StepRecord {
            log_prob: p[chosen].ln(),
            candidates,
            features,
            chosen,
        });
        state.apply(action).expect("valid actions are in bounds");
        if action == EditAction::Stop {
            break;
        }
    }
    Trajectory {
        feature_version: FEATURE_VERSION,
        instance_id: instance.id.clone(),
        sampling,
        steps,
        final_doc: state.current,
    }
}

/// Log-probability of one recorded decision and its gradient, accumulated
/// into `grad` with weight `scale`.
pub(crate) fn step_log_prob_grad(
    params: &PolicyParams,
    step: &StepRecord,
    sampling: &SamplingConfig,
    scale: f64,
    grad: &mut [f64],
) -> f64 {
    let z = logits(params, &step.candidates, &step.features);
    let p = softmax(&z, sampling);
    let inv_t = scale / sampling.temperature;
    let cols = params.cols;
    let chosen_class = step.candidates[step.chosen].class();
    for (f, x) in step.features[step.chosen].iter().enumerate() {
        grad[f * cols + chosen_class] += inv_t * x;
    }
    for ((a, phi), &pb) in step.candidates.iter().zip(&step.features).zip(&p) {
        if pb == 0.0 {
            continue;
        }
        let c = a.class();
        for (f, x) in phi.iter().enumerate() {
            grad[f * cols + c] -= inv_t * pb * x;
        }
    }
    p[step.chosen].ln()
}

/// Sum over steps of `log pi_theta(a | s)` and its exact gradient with
/// respect to `theta`, under the trajectory's recorded sampling config.
pub fn log_prob_and_grad(params: &PolicyParams, trajectory: &Trajectory) -> Result<(f64, Vec<f64>)> {
    params.check_version(trajectory.feature_version)?;
    let mut grad = vec![0.0; params.theta.len()];
    let mut total = 0.0;
    for step in &trajectory.steps {
        total += step_log_prob_grad(params, step, &trajectory.sampling, 1.0, &mut grad);
    }
    Ok((total, grad))
}

/// Log-probability only.
pub fn log_prob(params: &PolicyParams, trajectory: &Trajectory) -> Result<f64> {
    params.check_version(trajectory.feature_version)?;
    Ok(trajectory
        .steps
        .iter()
        .map(|s| softmax(&logits(params, &s.candidates, &s.features), &trajectory.sampling)[s.chosen].ln())
        .sum())
}

/// Critiques and requirements in index order, then a fix for every derived
/// record those edits invalidated, then `Stop`.
pub fn gold_action_sequence(instance: &RewriteInstance) -> Vec<EditAction> {
    let mut doc = instance.initial.clone();
    let mut actions = Vec::new();
    for i in 0..instance.critiques.len() {
        instance.apply_critique(&mut doc, i);
        actions.push(EditAction::ApplyCritique(i));
    }
    for (j, r) in instance.requirements.iter().enumerate() {
        r.apply(&mut doc);
        actions.push(EditAction::ApplyRequirement(j));
    }
    actions.extend(doc.stale_derived().into_iter().map(EditAction::FixDerived));
    actions.push(EditAction::Stop);
    actions
}

/// Applies `actions` from the initial document.
pub fn replay(instance: &RewriteInstance, actions: &[EditAction], env: &EnvConfig) -> Result<Document> {
    let mut state = EpisodeState::new(instance, EnvConfig {
        max_steps: env.max_steps.max(actions.len()),
        ..*env
    });
    for &a in actions {
        state.apply(a)?;
        if a == EditAction::Stop {
            break;
        }
    }
    Ok(state.current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{
        gen_factuality_instance, gen_instance, gen_stylistic_instance, FactualityConfig,
        GeneratorConfig, Span, StylisticConfig, TaskKind,
    };
    use crate::judge;
    use crate::seed;

    fn fact(f: usize, c: usize, d: usize, seed: u64) -> RewriteInstance {
        let cfg = FactualityConfig {
            facts: Span::exactly(f),
            corrupted: Span::exactly(c),
            derived: Span::exactly(d),
        };
        gen_factuality_instance(seed, &cfg).unwrap()
    }

    #[test]
    fn zero_theta_is_uniform() {
        let inst = fact(4, 2, 1, 1);
        let s = EpisodeState::new(&inst, EnvConfig::default());
        let (cands, p) = action_distribution(&PolicyParams::zeros(), &s, &SamplingConfig::default());
        for pi in &p {
            assert!((pi - 1.0 / cands.len() as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn low_temperature_and_top1_concentrate() {
        let inst = fact(4, 2, 1, 1);
        let s = EpisodeState::new(&inst, EnvConfig::default());
        let mut params = PolicyParams::zeros();
        // Stop gets the unique highest logit.
        params.theta[4] = 0.3;
        let cold = SamplingConfig {
            temperature: 1e-6,
            top_k: None,
        };
        let (cands, p) = action_distribution(&params, &s, &cold);
        let stop = cands.iter().position(|&a| a == EditAction::Stop).unwrap();
        assert!((p[stop] - 1.0).abs() < 1e-6);

        let top1 = SamplingConfig {
            temperature: 1.0,
            top_k: Some(1),
        };
        let (_, p) = action_distribution(&params, &s, &top1);
        assert_eq!(p[stop], 1.0);
        assert_eq!(p.iter().filter(|&&x| x > 0.0).count(), 1);
    }

    #[test]
    fn top1_tie_goes_to_lowest_index() {
        let p = softmax(&[1.0, 2.0, 2.0], &SamplingConfig { temperature: 1.0, top_k: Some(1) });
        assert_eq!(p, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn gold_sequence_examples() {
        // Two spans plus one derived record that depends on a corrupted fact.
        let inst = (0..200)
            .map(|s| fact(4, 2, 1, s))
            .next()
            .unwrap();
        assert_eq!(
            gold_action_sequence(&inst),
            vec![
                EditAction::ApplyCritique(0),
                EditAction::ApplyCritique(1),
                EditAction::FixDerived(0),
                EditAction::Stop
            ]
        );
        let style = gen_stylistic_instance(
            2,
            &StylisticConfig {
                requirements: Span::exactly(1),
                kinds: None,
            },
        )
        .unwrap();
        assert_eq!(
            gold_action_sequence(&style),
            vec![EditAction::ApplyRequirement(0), EditAction::Stop]
        );
    }

    #[test]
    fn replaying_gold_sequence_yields_gold() {
        let cfg = GeneratorConfig::default();
        let env = EnvConfig::default();
        for task in TaskKind::ALL {
            for s in 0..200 {
                let inst = gen_instance(task, s, &cfg).unwrap();
                let seq = gold_action_sequence(&inst);
                assert!(seq.len() <= env.max_steps);
                assert_eq!(replay(&inst, &seq, &env).unwrap(), inst.gold);
            }
        }
    }

    #[test]
    fn zero_budget_rollout_is_empty() {
        let inst = fact(3, 1, 0, 7);
        let env = EnvConfig {
            max_steps: 0,
            ..EnvConfig::default()
        };
        let t = rollout(
            &PolicyParams::zeros(),
            &inst,
            &env,
            &Decoding::Sample(SamplingConfig::default()),
            &mut seed::stream(0, "t", 0),
        );
        assert!(t.steps.is_empty());
        assert_eq!(t.final_doc, inst.initial);
    }

    #[test]
    fn rollout_is_deterministic_and_well_formed() {
        let cfg = GeneratorConfig::default();
        let mut params = PolicyParams::zeros();
        for (i, x) in params.theta.iter_mut().enumerate() {
            *x = ((i * 37 % 11) as f64 - 5.0) * 0.1;
        }
        let env = EnvConfig::default();
        let dec = Decoding::Sample(SamplingConfig::default());
        for task in TaskKind::ALL {
            let inst = gen_instance(task, 4, &cfg).unwrap();
            let a = rollout(&params, &inst, &env, &dec, &mut seed::stream(9, "r", 1));
            let b = rollout(&params, &inst, &env, &dec, &mut seed::stream(9, "r", 1));
            assert_eq!(a, b);
            assert!(a.steps.len() <= env.max_steps);
            assert!(a.steps.last().unwrap().action() == EditAction::Stop || a.steps.len() == env.max_steps);
            assert!(a.steps.iter().all(|s| s.log_prob <= 0.0));
            let lp = log_prob(&params, &a).unwrap();
            let rec: f64 = a.steps.iter().map(|s| s.log_prob).sum();
            assert!((lp - rec).abs() < 1e-12);
        }
    }

    /// Policy that puts all mass on the gold action at every step of one
    /// instance, built by hand.
    #[test]
    fn gold_following_policy_reaches_gold() {
        let inst = fact(3, 1, 0, 7);
        let mut params = PolicyParams::zeros();
        // ApplyCritique strongly preferred while anything is unapplied; Stop
        // preferred otherwise.
        params.theta[6 * NUM_CLASSES] = 50.0;
        params.theta[4] = 10.0;
        let t = rollout(&params, &inst, &EnvConfig::default(), &Decoding::Greedy, &mut seed::stream(0, "g", 0));
        assert_eq!(t.actions(), gold_action_sequence(&inst));
        assert_eq!(judge::agreement(&inst, &t.final_doc), 1.0);
    }

    #[test]
    fn uniform_one_step_log_prob() {
        let inst = fact(3, 1, 0, 7);
        let env = EnvConfig {
            max_steps: 1,
            ..EnvConfig::default()
        };
        let t = rollout(
            &PolicyParams::zeros(),
            &inst,
            &env,
            &Decoding::Sample(SamplingConfig::UNTRUNCATED),
            &mut seed::stream(0, "u", 0),
        );
        let n = t.steps[0].candidates.len() as f64;
        let (lp, _) = log_prob_and_grad(&PolicyParams::zeros(), &t).unwrap();
        assert!((lp + n.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_trajectory_and_version_mismatch() {
        let inst = fact(3, 1, 0, 7);
        let mut t = rollout(
            &PolicyParams::zeros(),
            &inst,
            &EnvConfig { max_steps: 0, ..EnvConfig::default() },
            &Decoding::Greedy,
            &mut seed::stream(0, "e", 0),
        );
        let (lp, g) = log_prob_and_grad(&PolicyParams::zeros(), &t).unwrap();
        assert_eq!(lp, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
        t.feature_version += 1;
        assert!(matches!(
            log_prob_and_grad(&PolicyParams::zeros(), &t),
            Err(Error::FeatureVersion { .. })
        ));
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut params = PolicyParams::zeros();
        for (i, x) in params.theta.iter_mut().enumerate() {
            *x = (i as f64 * 0.7311).sin() / 3.0 + 1e-17 * i as f64;
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        params.save(&path).unwrap();
        assert_eq!(PolicyParams::load(&path).unwrap(), params);
    }
}
